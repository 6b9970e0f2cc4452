//! Training loop, early stopping and the pretrain → fine-tune protocol.

mod checkpoint;
mod config;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{file_digest, load_checkpoint, save_checkpoint, Checkpoint, EpochRecord, NamedTensor, FORMAT_VERSION, MAGIC};
pub use config::TrainConfig;

use crate::data::{group_pairs, QaPair};
use crate::error::{Error, Result};
use crate::eval::evaluate_groups;
use crate::model::{Model, EMBEDDING_NAME};
use crate::numerics::{Graph, Optimizer};

/// A pair with both sides already mapped to token indices.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPair {
    pub question: Vec<usize>,
    pub candidate: Vec<usize>,
    pub label: f64,
}

pub fn prepare_pairs(model: &Model, pairs: &[QaPair]) -> Result<Vec<PreparedPair>> {
    pairs
        .iter()
        .map(|p| {
            Ok(PreparedPair {
                question: model.token_ids(&p.question)?,
                candidate: model.token_ids(&p.candidate)?,
                label: f64::from(p.label),
            })
        })
        .collect()
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(epoch as u64 + 1))
}

/// Mean loss of one minibatch; gradients of that mean are folded into the
/// model's parameter store.
fn batch_step(model: &mut Model, batch: &[&PreparedPair]) -> Result<f64> {
    let (loss, grads) = {
        let mut g = Graph::new(model.params());
        let mut logits = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for p in batch {
            logits.push(model.pair_logit(&mut g, &p.question, &p.candidate)?);
            labels.push(p.label);
        }
        let loss = g.bce_with_logits(&logits, &labels)?;
        (g.value(loss).item()?, g.backward(loss)?)
    };
    model.params_mut().accumulate(&grads)?;
    Ok(loss)
}

/// Mean pointwise loss over `pairs` without touching parameters.
pub fn dataset_loss(model: &Model, pairs: &[PreparedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("dataset_loss"));
    }
    let mut total = 0.0;
    for p in pairs {
        let mut g = Graph::new(model.params());
        let z = model.pair_logit(&mut g, &p.question, &p.candidate)?;
        let loss = g.bce_with_logits(&[z], &[p.label])?;
        total += g.value(loss).item()?;
    }
    Ok(total / pairs.len() as f64)
}

/// One pass over `pairs` in an order shuffled by `(config.seed, epoch_index)`.
/// Returns the mean of the per-batch losses weighted by batch size.
pub fn train_epoch(
    model: &mut Model,
    pairs: &[PreparedPair],
    config: &TrainConfig,
    optimizer: &mut Optimizer,
    epoch_index: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("train_epoch"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch_index)));

    model.params_mut().zero_grad();
    let mut total = 0.0;
    for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
        let batch: Vec<&PreparedPair> = chunk.iter().map(|&i| &pairs[i]).collect();
        let loss = batch_step(model, &batch)?;
        if !loss.is_finite() {
            model.params_mut().zero_grad();
            return Err(Error::Numeric(format!(
                "non-finite loss {loss} in epoch {epoch_index}, batch {batch_index}"
            )));
        }
        optimizer.step(model.params_mut());
        total += loss * batch.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

fn check_architecture(model: &Model, config: &TrainConfig) -> Result<()> {
    let mc = model.config();
    if mc.hidden != config.hidden {
        return Err(Error::Transfer(format!(
            "model has hidden size {}, config asks for {}",
            mc.hidden, config.hidden
        )));
    }
    if mc.cell_variant != config.cell_variant {
        return Err(Error::Transfer(format!(
            "model uses the {} cell, config asks for {}",
            mc.cell_variant, config.cell_variant
        )));
    }
    Ok(())
}

/// Trains until `epochs_max` or until `patience` consecutive epochs fail to
/// improve dev MRR. Dev MRR is measured on the `f32`-rounded parameters, so
/// the returned checkpoint reproduces its recorded score exactly. On return
/// `model` holds the best parameters.
pub fn fit(model: &mut Model, train: &[QaPair], dev: &[QaPair], config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    check_architecture(model, config)?;
    if let Some(id) = model.params().id(EMBEDDING_NAME) {
        model.params_mut().set_trainable(id, !config.freeze_embeddings);
    }
    let dev_groups = group_pairs(dev);
    if config.epochs_max > 0 && !dev_groups.iter().any(|g| g.positives() > 0) {
        return Err(Error::InsufficientData("dev set has no group with a positive".into()));
    }
    let prepared = prepare_pairs(model, train)?;
    let mut optimizer = Optimizer::new(config.optimizer_config());

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Model)> = None;
    let mut stale = 0usize;
    for epoch in 0..config.epochs_max {
        let loss = train_epoch(model, &prepared, config, &mut optimizer, epoch)?;
        let snapshot = model.rounded_to_f32();
        let dev_mrr = evaluate_groups(&snapshot, &dev_groups)?.mrr;
        info!("epoch {} loss {loss:.6} dev_mrr {dev_mrr:.6}", epoch + 1);
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss,
            dev_mrr,
        });
        if best.as_ref().is_none_or(|(_, b, _)| dev_mrr > *b) {
            best = Some((epoch + 1, dev_mrr, snapshot));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            debug!("early stop after epoch {}", epoch + 1);
            break;
        }
    }

    let (best_marker, final_model) = match best {
        Some((epoch, mrr, snapshot)) => (Some((epoch, mrr)), snapshot),
        None => (None, model.rounded_to_f32()),
    };
    *model = final_model;
    Ok(Checkpoint::from_model(model, config, history, best_marker))
}

/// Continues training from `from` on new data. Optimizer state starts fresh.
pub fn finetune(from: &Checkpoint, train: &[QaPair], dev: &[QaPair], config: &TrainConfig) -> Result<(Model, Checkpoint)> {
    if from.config.hidden != config.hidden || from.config.cell_variant != config.cell_variant {
        return Err(Error::Transfer(format!(
            "checkpoint has hidden={} cell={}, fine-tuning config has hidden={} cell={}",
            from.config.hidden, from.config.cell_variant, config.hidden, config.cell_variant
        )));
    }
    from.check_shapes(config.hidden)?;
    let mut model = from.to_model()?;
    let ckpt = fit(&mut model, train, dev, config)?;
    Ok((model, ckpt))
}

/// Phase 1 fits `model` on the source data; phase 2 reloads the phase-1
/// checkpoint and fits every parameter on the target data.
pub fn pretrain_then_finetune(
    mut model: Model,
    source_train: &[QaPair],
    source_dev: &[QaPair],
    target_train: &[QaPair],
    target_dev: &[QaPair],
    cfg_pre: &TrainConfig,
    cfg_fine: &TrainConfig,
) -> Result<(Checkpoint, Checkpoint)> {
    if cfg_pre.hidden != cfg_fine.hidden || cfg_pre.cell_variant != cfg_fine.cell_variant {
        return Err(Error::Transfer(format!(
            "phases disagree on architecture: hidden {} vs {}, cell {} vs {}",
            cfg_pre.hidden, cfg_fine.hidden, cfg_pre.cell_variant, cfg_fine.cell_variant
        )));
    }
    let pre = fit(&mut model, source_train, source_dev, cfg_pre)?;
    let (_, fine) = finetune(&pre, target_train, target_dev, cfg_fine)?;
    Ok((pre, fine))
}
