//! Soft actor-critic backbone, the adaptation training loop and its baselines.

mod sac;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixup::MixupConfig;
use crate::ratio::ClassifierConfig;

pub use sac::{temperature_loss_and_grad, ActorLoss, SacAgent, SacConfig, SacDiagnostics};
pub use trainer::{dads_step, run_baseline, run_baseline_with, Counters, CurvePoint, RunOutput, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dads,
    Darc,
    Iw,
    Finetune,
    RlSource,
    RlTarget,
    DadsNoSkew,
    DadsNoMixup,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Dads,
        Method::Darc,
        Method::Iw,
        Method::Finetune,
        Method::RlSource,
        Method::RlTarget,
        Method::DadsNoSkew,
        Method::DadsNoMixup,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dads => "dads",
            Method::Darc => "darc",
            Method::Iw => "iw",
            Method::Finetune => "finetune",
            Method::RlSource => "rl_source",
            Method::RlTarget => "rl_target",
            Method::DadsNoSkew => "dads_no_skew",
            Method::DadsNoMixup => "dads_no_mixup",
        }
    }

    /// The component switches this method runs with.
    pub fn pipeline(&self) -> Pipeline {
        let dads = Pipeline {
            learner: Learner::Adaptive,
            target_every_step: false,
            skew: true,
            mixup: true,
            correction: Correction::Reward,
            modified_source_classifier: true,
            finetune: false,
        };
        let plain = |target: bool| Pipeline {
            learner: if target { Learner::TargetOnly } else { Learner::SourceOnly },
            target_every_step: target,
            skew: false,
            mixup: false,
            correction: Correction::None,
            modified_source_classifier: false,
            finetune: false,
        };
        match self {
            Method::Dads => dads,
            Method::DadsNoSkew => Pipeline { skew: false, ..dads },
            Method::DadsNoMixup => Pipeline { mixup: false, ..dads },
            Method::Darc => Pipeline { skew: false, mixup: false, modified_source_classifier: false, ..dads },
            Method::Iw => Pipeline {
                skew: false,
                mixup: false,
                modified_source_classifier: false,
                correction: Correction::ImportanceWeights,
                ..dads
            },
            Method::RlSource => plain(false),
            Method::RlTarget => plain(true),
            Method::Finetune => Pipeline { finetune: true, ..plain(false) },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| Error::config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    /// Source rollouts plus sparse target rollouts with classifier machinery.
    Adaptive,
    SourceOnly,
    TargetOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    None,
    /// Add `Δr` to rewards.
    Reward,
    /// Weight losses by `exp(Δr)`.
    ImportanceWeights,
}

/// Resolved component switches of a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pipeline {
    pub learner: Learner,
    pub target_every_step: bool,
    pub skew: bool,
    pub mixup: bool,
    pub correction: Correction,
    /// `Δr` comes from a second pair trained on the modified source batch;
    /// otherwise from the source-vs-target pair.
    pub modified_source_classifier: bool,
    /// Switch to target-only training for the final fraction of steps.
    pub finetune: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DadsConfig {
    pub method: Method,
    pub total_steps: u64,
    /// One target step per `target_ratio` source steps.
    pub target_ratio: u64,
    /// `N`: source and target transitions sampled per update.
    pub batch_size: usize,
    /// Steps during which the reward correction is off.
    pub warmup_steps: u64,
    /// Initial uniform-random steps with no learning.
    pub seed_steps: u64,
    pub mu: f64,
    pub mixup: MixupConfig,
    pub classifier: ClassifierConfig,
    /// Total classifier batch, split evenly between the two domains.
    pub classifier_batch: usize,
    pub buffer_capacity: usize,
    /// Full priority refresh cadence.
    pub refresh_interval: u64,
    /// Share of `total_steps` spent on the target for `finetune`.
    pub finetune_fraction: f64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub sac: SacConfig,
}

impl Default for DadsConfig {
    fn default() -> Self {
        Self {
            method: Method::Dads,
            total_steps: 100_000,
            target_ratio: 10,
            batch_size: 128,
            warmup_steps: 10_000,
            seed_steps: 1_000,
            mu: 1.0,
            mixup: MixupConfig::default(),
            classifier: ClassifierConfig::default(),
            classifier_batch: 128,
            buffer_capacity: 1_000_000,
            refresh_interval: 10_000,
            finetune_fraction: 0.1,
            eval_interval: 5_000,
            eval_episodes: 10,
            sac: SacConfig::default(),
        }
    }
}

impl DadsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be positive"));
        }
        if self.target_ratio < 1 {
            return Err(Error::config("target_ratio must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::config("warmup_steps cannot exceed total_steps"));
        }
        if !(self.mu >= 0.0) || self.mu.is_nan() {
            return Err(Error::config("mu must be >= 0"));
        }
        if self.classifier_batch < 2 || self.classifier_batch % 2 != 0 {
            return Err(Error::config("classifier_batch must be an even number >= 2"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity must be positive"));
        }
        if self.refresh_interval == 0 {
            return Err(Error::config("refresh_interval must be positive"));
        }
        if !(self.finetune_fraction > 0.0 && self.finetune_fraction < 1.0) {
            return Err(Error::config("finetune_fraction must lie in (0, 1)"));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(Error::config("eval_interval and eval_episodes must be positive"));
        }
        self.mixup.validate()?;
        self.classifier.validate()?;
        self.sac.validate()
    }

    /// Number of steps spent on the target by `finetune`.
    pub fn finetune_target_steps(&self) -> u64 {
        (self.total_steps as f64 * self.finetune_fraction).round() as u64
    }
}
