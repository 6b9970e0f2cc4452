//! Bilinear relevance `σ(qᵀ M s + b)` and the pointwise training loss.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{bce_term, sigmoid, Graph, ParamId, ParamStore, Tensor2D, Var};

pub const MATRIX_NAME: &str = "scorer.M";
pub const BIAS_NAME: &str = "scorer.b";

/// Half-width of the noise added to the identity when initializing `M`.
pub const INIT_NOISE: f64 = 0.01;

#[derive(Clone, Copy, Debug)]
pub struct BilinearScorer {
    pub matrix: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl BilinearScorer {
    /// `M = I + U(−0.01, 0.01)`, `b = 0`.
    pub fn register<R: Rng>(store: &mut ParamStore, dim: usize, rng: &mut R) -> Result<Self> {
        let mut m = Tensor2D::identity(dim);
        for v in m.data_mut() {
            *v += rng.random_range(-INIT_NOISE..INIT_NOISE);
        }
        let matrix = store.insert(MATRIX_NAME, m)?;
        let bias = store.insert(BIAS_NAME, Tensor2D::scalar(0.0))?;
        Ok(BilinearScorer { matrix, bias, dim })
    }

    pub fn lookup(store: &ParamStore) -> Result<Self> {
        let find = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Corruption(format!("missing parameter {name}")))
        };
        let matrix = find(MATRIX_NAME)?;
        let bias = find(BIAS_NAME)?;
        let (r, c) = store.value(matrix).shape();
        if r != c {
            return Err(Error::ShapeMismatch {
                name: MATRIX_NAME.into(),
                expected: (r, r),
                found: (r, c),
            });
        }
        Ok(BilinearScorer { matrix, bias, dim: r })
    }

    /// `qᵀ M s + b` as a 1×1 node; `q` and `s` are `2H×1` columns.
    pub fn logit(&self, g: &mut Graph<'_>, q: Var, s: Var) -> Result<Var> {
        let m = g.param(self.matrix);
        let b = g.param(self.bias);
        let ms = g.matmul(m, s)?;
        let qt = g.transpose(q);
        let qms = g.matmul(qt, ms)?;
        g.add(qms, b)
    }

    pub fn probability(&self, g: &mut Graph<'_>, q: Var, s: Var) -> Result<Var> {
        let z = self.logit(g, q, s)?;
        Ok(g.sigmoid(z))
    }
}

/// `σ(qᵀ M s + b)` on plain tensors.
pub fn relevance_prob(q: &Tensor2D, s: &Tensor2D, m: &Tensor2D, b: f64) -> Result<f64> {
    Ok(sigmoid(relevance_logit(q, s, m, b)?))
}

pub fn relevance_logit(q: &Tensor2D, s: &Tensor2D, m: &Tensor2D, b: f64) -> Result<f64> {
    if q.cols() != 1 || s.cols() != 1 {
        return Err(Error::Dimension {
            op: "relevance_prob",
            left: q.shape(),
            right: s.shape(),
        });
    }
    Ok(q.transpose().matmul(&m.matmul(s)?)?.item()? + b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredPair {
    pub probability: f64,
    pub label: u8,
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(pairs: &[ScoredPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("bce_loss"));
    }
    let total: f64 = pairs
        .iter()
        .map(|p| bce_term(p.probability, f64::from(p.label)))
        .sum();
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn zero_matrix_gives_half() {
        let q = Tensor2D::column(&[1.0, -2.0]);
        let s = Tensor2D::column(&[0.5, 3.0]);
        assert_eq!(relevance_prob(&q, &s, &Tensor2D::zeros(2, 2), 0.0).unwrap(), 0.5);
    }

    #[test]
    fn identity_unit_vectors() {
        let e1 = Tensor2D::column(&[1.0, 0.0, 0.0]);
        let p = relevance_prob(&e1, &e1, &Tensor2D::identity(3), 0.0).unwrap();
        assert!((p - 0.7311).abs() < 1e-4);
        assert_eq!(p, sigmoid(1.0));
    }

    #[test]
    fn shape_mismatch() {
        let q = Tensor2D::column(&[1.0, 0.0]);
        let s = Tensor2D::column(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            relevance_prob(&q, &s, &Tensor2D::identity(2), 0.0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn bce_examples() {
        let half = |label| ScoredPair {
            probability: 0.5,
            label,
        };
        assert!((bce_loss(&[half(1)]).unwrap() - LN_2).abs() < 1e-12);
        assert!((bce_loss(&[half(1), half(0)]).unwrap() - 0.693147).abs() < 1e-6);
        assert!(matches!(bce_loss(&[]), Err(Error::EmptyInput(_))));

        let mut last = f64::INFINITY;
        for p in [0.6, 0.9, 0.99, 0.999999, 1.0] {
            let l = bce_loss(&[ScoredPair {
                probability: p,
                label: 1,
            }])
            .unwrap();
            assert!(l < last && l >= 0.0);
            last = l;
        }
        assert!(last < 1e-6);
        let zero = bce_loss(&[ScoredPair {
            probability: 0.0,
            label: 1,
        }])
        .unwrap();
        assert!(zero.is_finite());
    }

    #[test]
    fn graph_and_plain_agree() {
        let mut store = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let scorer = BilinearScorer::register(&mut store, 2, &mut rng).unwrap();
        let qv = Tensor2D::column(&[0.3, -0.7]);
        let sv = Tensor2D::column(&[1.1, 0.2]);
        let mut g = Graph::new(&store);
        let (q, s) = (g.constant(qv.clone()), g.constant(sv.clone()));
        let p = scorer.probability(&mut g, q, s).unwrap();
        let expected = relevance_prob(&qv, &sv, store.value(scorer.matrix), 0.0).unwrap();
        assert_eq!(g.value(p).item().unwrap(), expected);
    }

    use rand::SeedableRng;
}
