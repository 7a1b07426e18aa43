//! Support extension by convex interpolation of source and target transitions.
//!
//! A mixed transition is `λ·x_src + (1-λ)·x_tar` on every numeric field of
//! `(s, a, r, s')` with `λ ~ Beta(α, α)`. If either endpoint is terminal the
//! target transition is returned unchanged, so the done flag is never fractional.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skew::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixupConfig {
    pub alpha: f64,
    /// Consulted by the training loop; the functions here always mix.
    pub enabled: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self { alpha: 0.2, enabled: true }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(Error::config(format!("mixup alpha must be > 0, got {}", self.alpha)))
        }
    }
}

pub fn sample_lambda<R: Rng + ?Sized>(config: &MixupConfig, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(config.alpha, config.alpha).map_err(|e| Error::config(e.to_string()))?;
    Ok(beta.sample(rng).clamp(0.0, 1.0))
}

fn lerp1(a: f64, b: f64, lambda: f64) -> f64 {
    // equal endpoints are a fixed point; the affine form would round
    if a == b {
        a
    } else {
        lambda * a + (1.0 - lambda) * b
    }
}

fn lerp(x: &[f64], y: &[f64], lambda: f64) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| lerp1(*a, *b, lambda)).collect()
}

pub fn mix(src: &Transition, tar: &Transition, lambda: f64) -> Result<Transition> {
    if !src.same_shape(tar) {
        return Err(Error::input("source and target transitions differ in shape"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::input(format!("mixing coefficient {lambda} outside [0, 1]")));
    }
    if src.done || tar.done {
        return Ok(tar.clone());
    }
    Ok(Transition {
        s: lerp(&src.s, &tar.s, lambda),
        a: lerp(&src.a, &tar.a, lambda),
        r: lerp1(src.r, tar.r, lambda),
        s_next: lerp(&src.s_next, &tar.s_next, lambda),
        done: false,
    })
}

/// Mix the i-th source with the i-th target transition, one fresh `λ_i` per
/// pair (drawn in order, including for pairs resolved by the terminal rule).
pub fn mix_batch<R: Rng + ?Sized>(
    src: &[Transition],
    tar: &[Transition],
    config: &MixupConfig,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    if src.len() != tar.len() {
        return Err(Error::input(format!("batch sizes differ: {} source vs {} target", src.len(), tar.len())));
    }
    config.validate()?;
    let beta = Beta::new(config.alpha, config.alpha).map_err(|e| Error::config(e.to_string()))?;
    src.iter()
        .zip(tar)
        .map(|(x, y)| {
            let lambda = beta.sample(rng).clamp(0.0, 1.0);
            mix(x, y, lambda)
        })
        .collect()
}
