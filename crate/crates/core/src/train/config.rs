use serde::{Deserialize, Serialize};

use crate::encoder::CellVariant;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::{OptimizerConfig, OptimizerKind};

/// Every knob of a training run. Recorded verbatim in each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub cell_variant: CellVariant,
    pub freeze_embeddings: bool,
    pub forget_bias: f64,
    pub negatives: usize,
    pub fraction: f64,
    pub max_question_tokens: usize,
    pub max_answer_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            epochs_max: 30,
            batch_size: 32,
            seed: 0,
            patience: 3,
            cell_variant: CellVariant::Linear,
            freeze_embeddings: true,
            forget_bias: 1.0,
            negatives: 1,
            fraction: 1.0,
            max_question_tokens: 30,
            max_answer_tokens: 50,
            vocab_limit: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key}={value}: {e}")))
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            cell_variant: self.cell_variant,
            forget_bias: self.forget_bias,
            freeze_embeddings: self.freeze_embeddings,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerKind::Sgd => OptimizerConfig::sgd(self.learning_rate),
            OptimizerKind::Adam => OptimizerConfig::adam(self.learning_rate),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.hidden == 0 {
            return fail("hidden must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !self.forget_bias.is_finite() {
            return fail("forget_bias must be finite".into());
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return fail(format!("fraction must be in (0, 1], got {}", self.fraction));
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "hidden" => self.hidden = parse(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = parse(key, value)?,
            "optimizer" => self.optimizer = parse(key, value)?,
            "epochs_max" | "epochs" => self.epochs_max = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "cell_variant" => self.cell_variant = parse(key, value)?,
            "freeze_embeddings" => self.freeze_embeddings = parse(key, value)?,
            "forget_bias" => self.forget_bias = parse(key, value)?,
            "negatives" => self.negatives = parse(key, value)?,
            "fraction" => self.fraction = parse(key, value)?,
            "max_question_tokens" => self.max_question_tokens = parse(key, value)?,
            "max_answer_tokens" => self.max_answer_tokens = parse(key, value)?,
            "vocab_limit" => self.vocab_limit = Some(parse(key, value)?),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut out = format!(
            "hidden={}\nlearning_rate={}\noptimizer={}\nepochs_max={}\nbatch_size={}\nseed={}\npatience={}\n\
             cell_variant={}\nfreeze_embeddings={}\nforget_bias={}\nnegatives={}\nfraction={}\n\
             max_question_tokens={}\nmax_answer_tokens={}\n",
            self.hidden,
            self.learning_rate,
            match self.optimizer {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adam => "adam",
            },
            self.epochs_max,
            self.batch_size,
            self.seed,
            self.patience,
            self.cell_variant,
            self.freeze_embeddings,
            self.forget_bias,
            self.negatives,
            self.fraction,
            self.max_question_tokens,
            self.max_answer_tokens,
        );
        if let Some(limit) = self.vocab_limit {
            out.push_str(&format!("vocab_limit={limit}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.apply_kv("# comment\nhidden = 8\nlr=0.01\noptimizer=sgd\ncell_variant=standard\nvocab_limit=100\n")
            .unwrap();
        assert_eq!(cfg.hidden, 8);
        assert_eq!(cfg.optimizer, OptimizerKind::Sgd);
        assert_eq!(cfg.cell_variant, CellVariant::Standard);
        assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn bad_keys_and_values() {
        let mut cfg = TrainConfig::default();
        assert!(matches!(cfg.set("nope", "1"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("hidden", "x"), Err(Error::Config(_))));
        assert!(cfg.apply_kv("hidden").is_err());
        cfg.hidden = 0;
        assert!(cfg.validate().is_err());
    }
}
