//! Transfer grid: target-train fraction × pretrained {no, yes} × seeds.

use std::fmt::Write as _;

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::{group_pairs, restrict_positive_fraction, QaPair};
use crate::error::{Error, Result};
use crate::eval::evaluate_groups;
use crate::model::Model;
use crate::text::{EmbeddingTable, Vocabulary};
use crate::train::{finetune, fit, Checkpoint, TrainConfig};

/// Everything a grid run reads. The source splits are only touched when the
/// pretrained arm is enabled.
#[derive(Clone, Debug)]
pub struct GridData {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub oov_seed: u64,
    pub source_train: Vec<QaPair>,
    pub source_dev: Vec<QaPair>,
    pub target_train: Vec<QaPair>,
    pub target_dev: Vec<QaPair>,
    pub target_test: Vec<QaPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Source phase. Its `seed` is replaced by the cell seed.
    pub pretrain: TrainConfig,
    /// Target phase, shared by both arms. Its `seed` is replaced by the cell seed.
    pub finetune: TrainConfig,
    /// When false only the from-scratch rows are produced.
    pub include_pretrained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub mrr: f64,
    pub accuracy: f64,
    pub train_pairs: usize,
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub pretrained: bool,
    pub fraction: f64,
    pub mrr_mean: f64,
    pub mrr_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub runs: Vec<SeedResult>,
}

/// Rows ordered by fraction, from-scratch before pretrained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub cells: Vec<GridCell>,
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl GridCell {
    fn from_runs(pretrained: bool, fraction: f64, runs: Vec<SeedResult>) -> Self {
        let mrrs: Vec<f64> = runs.iter().map(|r| r.mrr).collect();
        let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let (mrr_mean, mrr_std) = mean_std(&mrrs);
        let (accuracy_mean, accuracy_std) = mean_std(&accs);
        GridCell {
            pretrained,
            fraction,
            mrr_mean,
            mrr_std,
            accuracy_mean,
            accuracy_std,
            runs,
        }
    }
}

impl GridTable {
    pub fn cell(&self, pretrained: bool, fraction: f64) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.pretrained == pretrained && (c.fraction - fraction).abs() < 1e-12)
    }

    /// Aligned plain-text table, one row per cell.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<11} | {:>8} | {:<17} | {:<17}", "Pre-trained", "fraction", "MRR", "Accuracy");
        let _ = writeln!(out, "{:-<11}-+-{:->8}-+-{:-<17}-+-{:-<17}", "", "", "", "");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<11} | {:>7.0}% | {:.4} ± {:<8.4} | {:.4} ± {:<8.4}",
                if c.pretrained { "Yes" } else { "No" },
                c.fraction * 100.0,
                c.mrr_mean,
                c.mrr_std,
                c.accuracy_mean,
                c.accuracy_std
            );
        }
        out
    }
}

fn with_seed(config: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..config.clone()
    }
}

fn fresh_model(data: &GridData, config: &TrainConfig) -> Result<Model> {
    Model::new(
        config.model_config(),
        data.vocab.clone(),
        data.embeddings.clone(),
        config.seed,
        data.oov_seed,
    )
}

fn test_result(model: &Model, data: &GridData, seed: u64, train_pairs: usize, ckpt: &Checkpoint) -> Result<SeedResult> {
    let report = evaluate_groups(model, &group_pairs(&data.target_test))?;
    Ok(SeedResult {
        seed,
        mrr: report.mrr,
        accuracy: report.accuracy,
        train_pairs,
        best_epoch: ckpt.best_epoch,
    })
}

/// Trains and tests every cell. A from-scratch cell with seed `s` follows
/// exactly the path of a single `fit` run whose config carries `seed = s`,
/// so it can be replayed outside the grid. The source model is pretrained
/// once per seed and shared by every fraction.
pub fn run_experiment_grid(data: &GridData, config: &GridConfig) -> Result<GridTable> {
    if config.fractions.is_empty() || config.seeds.is_empty() {
        return Err(Error::Config("grid needs at least one fraction and one seed".into()));
    }
    for &f in &config.fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("fraction must be in (0, 1], got {f}")));
        }
    }
    if config.include_pretrained
        && (config.pretrain.hidden != config.finetune.hidden
            || config.pretrain.cell_variant != config.finetune.cell_variant)
    {
        return Err(Error::Config("pretrain and finetune configs disagree on architecture".into()));
    }

    let mut pretrained = Vec::new();
    if config.include_pretrained {
        for &seed in &config.seeds {
            let cfg = with_seed(&config.pretrain, seed);
            let mut model = fresh_model(data, &cfg)?;
            info!("pretraining seed {seed}");
            pretrained.push(fit(&mut model, &data.source_train, &data.source_dev, &cfg)?);
        }
    }

    let mut cells = Vec::new();
    for &fraction in &config.fractions {
        let mut scratch_runs = Vec::new();
        let mut transfer_runs = Vec::new();
        for (si, &seed) in config.seeds.iter().enumerate() {
            let cfg = with_seed(&config.finetune, seed);
            let train = restrict_positive_fraction(&data.target_train, fraction, seed)?;

            let mut model = fresh_model(data, &cfg)?;
            let ckpt = fit(&mut model, &train, &data.target_dev, &cfg)?;
            let r = test_result(&model, data, seed, train.len(), &ckpt)?;
            info!("fraction {fraction} seed {seed} scratch acc {:.4}", r.accuracy);
            scratch_runs.push(r);

            if let Some(pre) = pretrained.get(si) {
                let (model, ckpt) = finetune(pre, &train, &data.target_dev, &cfg)?;
                let r = test_result(&model, data, seed, train.len(), &ckpt)?;
                info!("fraction {fraction} seed {seed} pretrained acc {:.4}", r.accuracy);
                transfer_runs.push(r);
            }
        }
        cells.push(GridCell::from_runs(false, fraction, scratch_runs));
        if config.include_pretrained {
            cells.push(GridCell::from_runs(true, fraction, transfer_runs));
        }
    }
    Ok(GridTable { cells })
}
