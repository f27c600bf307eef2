//! Run configuration: model dimensions, optimization, scheduling, data
//! handling and ablation switches, loadable from one TOML file with
//! command-line overrides applied on top.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::graph::MAX_TOKENS_DEFAULT;
use crate::ingest::ReductionLevel;
use crate::optim::AdamWConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown ablation mode `{0}` (expected no-taylor, no-tree-pe or no-var-res)")]
    UnknownMode(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
}

/// Which architectural components are replaced by their plain counterparts.
///
/// All three together reduce the encoder to a standard linear Transformer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSet {
    /// Replace the Taylor feature map with offset-by-one ELU.
    pub no_taylor: bool,
    /// Drop the tree positional rotations and add sequential sinusoids over
    /// depth-first node order instead.
    pub no_tree_pe: bool,
    /// Map every variable to one shared embedding with no rotation.
    pub no_var_res: bool,
}

impl AblationSet {
    pub fn enable(&mut self, mode: &str) -> Result<(), ConfigError> {
        match mode {
            "no-taylor" => self.no_taylor = true,
            "no-tree-pe" => self.no_tree_pe = true,
            "no-var-res" => self.no_var_res = true,
            other => return Err(ConfigError::UnknownMode(other.to_string())),
        }
        Ok(())
    }

    pub fn from_modes<S: AsRef<str>>(modes: &[S]) -> Result<Self, ConfigError> {
        let mut set = AblationSet::default();
        for m in modes {
            set.enable(m.as_ref())?;
        }
        Ok(set)
    }

    pub fn active(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.no_taylor {
            out.push("no-taylor");
        }
        if self.no_tree_pe {
            out.push("no-tree-pe");
        }
        if self.no_var_res {
            out.push("no-var-res");
        }
        out
    }
}

/// How hole and lemma summaries are reduced to a relevance scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// Weighted dot product: `f(h, l) = Σ_k w_k · h_k · l_k`.
    #[default]
    Diagonal,
    /// Full bilinear form: `f(h, l) = hᵀ W l`.
    Bilinear,
}

/// Encoder and scorer dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    /// Query/key head dimension; also the embedding and rotation dimension.
    pub d_qk: usize,
    /// Value head dimension; `heads · d_v` must equal `d_model`.
    pub d_v: usize,
    pub d_ff: usize,
    pub ablation: AblationSet,
    pub scorer: ScorerKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 256,
            layers: 6,
            heads: 8,
            d_qk: 16,
            d_v: 32,
            d_ff: 1024,
            ablation: AblationSet::default(),
            scorer: ScorerKind::Diagonal,
        }
    }
}

impl ModelConfig {
    /// Embedding dimension; tied to the rotation dimension so variable
    /// rotations are well-typed, then expanded to `d_model` by the stack.
    pub fn d_emb(&self) -> usize {
        self.d_qk
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.d_model == 0
            || self.layers == 0
            || self.heads == 0
            || self.d_qk == 0
            || self.d_v == 0
            || self.d_ff == 0
        {
            return Err(ConfigError::Invalid(
                "all model dimensions must be positive".to_string(),
            ));
        }
        if self.heads * self.d_v != self.d_model {
            return Err(ConfigError::Invalid(format!(
                "heads ({}) × d_v ({}) must equal d_model ({})",
                self.heads, self.d_v, self.d_model
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub data_dir: Option<PathBuf>,
    pub max_tokens: u64,
    pub reduction_preference: Vec<ReductionLevel>,
    pub split_ratio: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            data_dir: None,
            max_tokens: MAX_TOKENS_DEFAULT,
            reduction_preference: vec![ReductionLevel::Original],
            split_ratio: 0.85,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub warmup_epochs: f64,
    pub peak_lr: f64,
    pub floor_lr: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            warmup_epochs: 3.0,
            peak_lr: 5e-4,
            floor_lr: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<u64>,
    /// Holes sampled per file per step, without replacement.
    pub batch_holes: usize,
    /// Rate shared by the reference-label, post-attention and post-ffn sites.
    pub dropout: f64,
    pub seed: u64,
    /// Independent repetitions used when reporting means and intervals.
    pub repetitions: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            max_steps: None,
            batch_holes: 32,
            dropout: 0.1,
            seed: 0,
            repetitions: 4,
            checkpoint_dir: None,
        }
    }
}

/// Everything a run needs, with the training setup's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optim: AdamWConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        if !(0.0..1.0).contains(&self.train.dropout) {
            return Err(ConfigError::Invalid(format!(
                "dropout must lie in [0, 1), got {}",
                self.train.dropout
            )));
        }
        if !(0.0..=1.0).contains(&self.data.split_ratio) {
            return Err(ConfigError::Invalid(format!(
                "split ratio must lie in [0, 1], got {}",
                self.data.split_ratio
            )));
        }
        if self.train.batch_holes == 0 {
            return Err(ConfigError::Invalid(
                "batch_holes must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Schedule over the configured number of epochs.
    pub fn lr_schedule(&self) -> crate::optim::LrSchedule {
        crate::optim::LrSchedule {
            warmup_epochs: self.schedule.warmup_epochs,
            total_epochs: self.train.epochs as f64,
            peak: self.schedule.peak_lr,
            floor: self.schedule.floor_lr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_the_training_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.model.d_model, 256);
        assert_eq!(cfg.model.layers, 6);
        assert_eq!(cfg.model.heads, 8);
        assert_eq!(cfg.model.d_qk, 16);
        assert_eq!(cfg.model.d_v, 32);
        assert_eq!(cfg.model.d_ff, 1024);
        assert_eq!(cfg.optim.beta1, 0.9);
        assert_eq!(cfg.optim.beta2, 0.99);
        assert_eq!(cfg.optim.weight_decay, 1e-2);
        assert_eq!(cfg.schedule.warmup_epochs, 3.0);
        assert_eq!(cfg.schedule.peak_lr, 5e-4);
        assert_eq!(cfg.schedule.floor_lr, 1e-8);
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.train.batch_holes, 32);
        assert_eq!(cfg.train.dropout, 0.1);
        assert_eq!(cfg.data.split_ratio, 0.85);
        assert_eq!(cfg.data.max_tokens, 1 << 14);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn ablation_modes_parse() {
        let set = AblationSet::from_modes(&["no-taylor", "no-tree-pe"]).unwrap();
        assert!(set.no_taylor && set.no_tree_pe && !set.no_var_res);
        assert!(matches!(
            AblationSet::from_modes(&["no-such"]),
            Err(ConfigError::UnknownMode(_))
        ));
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [model]
            d_model = 64
            layers = 2
            heads = 4
            d_v = 16
            d_ff = 256
            "#,
        )
        .unwrap();
        assert_eq!(cfg.model.d_model, 64);
        assert_eq!(cfg.model.d_qk, 16);
        assert_eq!(cfg.train.epochs, 100);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn inconsistent_heads_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.model.d_v = 31;
        assert!(cfg.validate().is_err());
    }
}
