use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{DadsConfig, Method, SacConfig};
use crate::envs::{make_domain_pair, DomainPair, EnvId, NoiseSpec, OverlapLevel, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::mixup::MixupConfig;
use crate::ratio::ClassifierConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub method: Method,
    pub env: EnvId,
    pub overlap: OverlapLevel,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            method: Method::Dads,
            env: EnvId::Pendulum,
            overlap: OverlapLevel::Small,
            seeds: vec![0, 1, 2, 3, 4],
            total_steps: 100_000,
            eval_interval: 5_000,
            eval_episodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    /// Multiplier on the noise tables; the environment's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    pub horizon: usize,
    /// Replace the overlap-level source noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_noise: Option<NoiseSpec>,
    /// Replace the overlap-level target noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_noise: Option<NoiseSpec>,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { noise_scale: None, horizon: DEFAULT_HORIZON, source_noise: None, target_noise: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub target_ratio: u64,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub seed_steps: u64,
    pub mu: f64,
    pub classifier_batch: usize,
    pub buffer_capacity: usize,
    pub refresh_interval: u64,
    pub finetune_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = DadsConfig::default();
        Self {
            target_ratio: d.target_ratio,
            batch_size: d.batch_size,
            warmup_steps: d.warmup_steps,
            seed_steps: d.seed_steps,
            mu: d.mu,
            classifier_batch: d.classifier_batch,
            buffer_capacity: d.buffer_capacity,
            refresh_interval: d.refresh_interval,
            finetune_fraction: d.finetune_fraction,
        }
    }
}

/// Everything needed to reproduce a set of training runs.
///
/// Stored as TOML with one table per component; every table may be omitted
/// (defaults apply) but unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub env: EnvSection,
    pub train: TrainSection,
    pub mixup: MixupConfig,
    pub classifier: ClassifierConfig,
    pub sac: SacConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// The training-loop configuration for this experiment.
    pub fn dads_config(&self) -> DadsConfig {
        let (e, t) = (&self.experiment, &self.train);
        DadsConfig {
            method: e.method,
            total_steps: e.total_steps,
            target_ratio: t.target_ratio,
            batch_size: t.batch_size,
            warmup_steps: t.warmup_steps,
            seed_steps: t.seed_steps,
            mu: t.mu,
            mixup: self.mixup,
            classifier: self.classifier.clone(),
            classifier_batch: t.classifier_batch,
            buffer_capacity: t.buffer_capacity,
            refresh_interval: t.refresh_interval,
            finetune_fraction: t.finetune_fraction,
            eval_interval: e.eval_interval,
            eval_episodes: e.eval_episodes,
            sac: self.sac.clone(),
        }
    }

    /// The source/target pair used by run `seed`.
    pub fn domain_pair(&self, seed: u64) -> DomainPair {
        let mut pair = make_domain_pair(self.experiment.env, self.experiment.overlap, seed);
        if let Some(scale) = self.env.noise_scale {
            pair.noise_scale = scale;
        }
        pair.horizon = self.env.horizon;
        if let Some(n) = self.env.source_noise {
            pair.source_noise = n;
        }
        if let Some(n) = self.env.target_noise {
            pair.target_noise = n;
        }
        pair
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.seeds.is_empty() {
            return Err(Error::config("seeds list is empty"));
        }
        let mut seen = e.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != e.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        self.dads_config().validate()?;
        self.domain_pair(e.seeds[0]).validate()
    }
}
