//! Skewed source sampling.
//!
//! Source transitions are replayed with probability proportional to
//! `w = exp(log_ratio / (1 + μ))`, where `log_ratio` estimates
//! `log P_tar(s'|s,a) - log P_src(s'|s,a)`. Sampling from the source buffer
//! with these weights is sampling from the geometric mixture
//! `P* ∝ P_src^{μ/(1+μ)} · P_tar^{1/(1+μ)}`.

mod buffer;
mod sum_tree;

pub use buffer::{BufferIndex, PrioritizedBuffer};
pub use sum_tree::SumTree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest priority any live transition can have.
pub const PRIORITY_FLOOR: f64 = 1e-6;

/// One environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

impl Transition {
    pub fn new(s: Vec<f64>, a: Vec<f64>, r: f64, s_next: Vec<f64>, done: bool) -> Self {
        Self { s, a, r, s_next, done }
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.s.iter().chain(&self.a).chain(&self.s_next).all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Transition) -> bool {
        self.s.len() == other.s.len() && self.a.len() == other.a.len() && self.s_next.len() == other.s_next.len()
    }
}

/// `exp(log_ratio / (1 + μ))`, floored at [`PRIORITY_FLOOR`].
pub fn priority_weight(log_ratio: f64, mu: f64) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::config(format!("mu must be finite and >= 0, got {mu}")));
    }
    if !log_ratio.is_finite() {
        return Err(Error::input(format!("non-finite log-ratio {log_ratio}")));
    }
    Ok((log_ratio / (1.0 + mu)).exp().max(PRIORITY_FLOOR))
}

/// Closed-form solution of `min KL(P‖p_tar) s.t. KL(P‖p_src) ≤ ε` for the
/// multiplier `mu`: the normalized geometric mixture
/// `p_src^{μ/(1+μ)} · p_tar^{1/(1+μ)}`. Outcomes outside the support of
/// either input get zero mass. With `mu = ∞` the result is `p_src`.
pub fn skewed_distribution(p_src: &[f64], p_tar: &[f64], mu: f64) -> Result<Vec<f64>> {
    if p_src.len() != p_tar.len() || p_src.is_empty() {
        return Err(Error::input("distributions must be non-empty and share a support"));
    }
    if !(mu >= 0.0) {
        return Err(Error::config(format!("mu must be >= 0, got {mu}")));
    }
    for p in [p_src, p_tar] {
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::input("inputs must be probability vectors"));
        }
    }
    if mu.is_infinite() {
        return Ok(p_src.to_vec());
    }
    let (a_src, a_tar) = (mu / (1.0 + mu), 1.0 / (1.0 + mu));
    // work in log space so tiny probabilities under large μ stay accurate
    let logs: Vec<Option<f64>> = p_src
        .iter()
        .zip(p_tar)
        .map(|(&s, &t)| {
            let src_ok = s > 0.0 || a_src == 0.0;
            if t > 0.0 && src_ok {
                let ls = if a_src == 0.0 { 0.0 } else { a_src * s.ln() };
                Some(ls + a_tar * t.ln())
            } else {
                None
            }
        })
        .collect();
    let max = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Precondition("source and target supports are disjoint".into()));
    }
    let unnorm: Vec<f64> = logs.iter().map(|l| l.map_or(0.0, |v| (v - max).exp())).collect();
    let z: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|u| u / z).collect())
}
