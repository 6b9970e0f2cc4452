use crate::error::{Error, Result};
use crate::numerics::ParamStore;

/// Compares the gradients currently stored in `params` against central
/// finite differences `(f(θ+ε) − f(θ−ε)) / 2ε` of `loss_fn`, entry by entry.
///
/// Only trainable parameters are checked. Returns the worst relative error
/// `|g_a − g_n| / max(|g_a|, |g_n|, 1e-8)`. Parameter values are restored
/// exactly before returning.
pub fn grad_check<F>(params: &mut ParamStore, epsilon: f64, mut loss_fn: F) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let base = loss_fn(params)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {base}")));
    }
    let ids: Vec<_> = params
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(id, _)| id)
        .collect();
    let mut worst: f64 = 0.0;
    for id in ids {
        for k in 0..params.get(id).value.len() {
            let original = params.get(id).value.data()[k];
            let analytic = params.get(id).grad.data()[k];

            params.get_mut(id).value.data_mut()[k] = original + epsilon;
            let plus = loss_fn(params);
            params.get_mut(id).value.data_mut()[k] = original - epsilon;
            let minus = loss_fn(params);
            params.get_mut(id).value.data_mut()[k] = original;

            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing {}[{k}]",
                    params.get(id).name
                )));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
