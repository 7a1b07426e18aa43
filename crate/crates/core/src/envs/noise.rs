use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which block of state features a noise distribution applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Position,
    Velocity,
}

/// Additive next-state noise distribution, in table units (multiplied by the
/// environment's noise scale when sampled).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseDist {
    /// Degenerate distribution at zero.
    Zero,
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl NoiseDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseDist::Zero => Ok(()),
            NoiseDist::Uniform { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && lo < hi {
                    Ok(())
                } else {
                    Err(Error::config(format!("uniform noise needs lo < hi, got ({lo}, {hi})")))
                }
            }
            NoiseDist::Gaussian { mean, std } => {
                if mean.is_finite() && std.is_finite() && std > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!("gaussian noise needs std > 0, got ({mean}, {std})")))
                }
            }
        }
    }

    /// One draw, unscaled. Assumes a validated distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseDist::Zero => 0.0,
            NoiseDist::Uniform { lo, hi } => Uniform::new(lo, hi).expect("validated bounds").sample(rng),
            NoiseDist::Gaussian { mean, std } => Normal::new(mean, std).expect("validated std").sample(rng),
        }
    }

    /// Closed interval outside of which the density is zero (`None` for unbounded support).
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            NoiseDist::Zero => Some((0.0, 0.0)),
            NoiseDist::Uniform { lo, hi } => Some((lo, hi)),
            NoiseDist::Gaussian { .. } => None,
        }
    }
}

/// Per-group noise for one domain: every state feature is either a position or
/// a velocity feature and receives an independent draw from that group's law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub position: NoiseDist,
    pub velocity: NoiseDist,
}

impl NoiseSpec {
    pub const ZERO: NoiseSpec = NoiseSpec { position: NoiseDist::Zero, velocity: NoiseDist::Zero };

    pub fn validate(&self) -> Result<()> {
        self.position.validate()?;
        self.velocity.validate()
    }

    pub fn for_group(&self, group: FeatureGroup) -> &NoiseDist {
        match group {
            FeatureGroup::Position => &self.position,
            FeatureGroup::Velocity => &self.velocity,
        }
    }

    /// Draw a noise vector for the given feature layout, scaled by `scale`.
    pub fn sample_vector<R: Rng + ?Sized>(&self, groups: &[FeatureGroup], scale: f64, rng: &mut R) -> Vec<f64> {
        groups.iter().map(|g| scale * self.for_group(*g).sample(rng)).collect()
    }
}
