//! Finite MDPs with exact dynamics, exact policy evaluation, and numerical
//! certification of the source/target performance-gap bounds.
//!
//! Values `V` are unnormalized discounted returns. The occupancy measure is
//! normalized to sum to one, so `performance = Σ ρ r = (1-γ)·ρ0·V`. Gaps and
//! the telescoping identity are stated on the expected return
//! `J = ρ0·V = performance / (1-γ)`, the scale on which the identity holds with
//! the `γ/(1-γ)` prefactor.

mod bounds;
pub mod random;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use bounds::{
    bound_deficient_support, bound_full_support, telescoping_gap, DeficientSupportBound, FullSupportBound,
    SupportPartition, Telescoping, ZERO_THRESHOLD,
};

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `P[s, a, s']`, row-major.
    dynamics: Vec<f64>,
    /// `r[s, a]`.
    reward: Vec<f64>,
    gamma: f64,
    rho0: Vec<f64>,
}

fn check_distribution(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::config(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = xs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::config(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        dynamics: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        rho0: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::config("an MDP needs at least one state and one action"));
        }
        if dynamics.len() != n_states * n_actions * n_states {
            return Err(Error::config("dynamics tensor has the wrong size"));
        }
        if reward.len() != n_states * n_actions || rho0.len() != n_states {
            return Err(Error::config("reward or initial distribution has the wrong size"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::config(format!("discount must lie in [0, 1), got {gamma}")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::config("non-finite reward"));
        }
        for (k, row) in dynamics.chunks(n_states).enumerate() {
            check_distribution(row, &format!("P[{}, {}, ·]", k / n_actions, k % n_actions))?;
        }
        check_distribution(&rho0, "rho0")?;
        Ok(Self { n_states, n_actions, dynamics, reward, gamma, rho0 })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    /// `P[s, a, ·]`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.dynamics[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// `max |r(s, a)|`.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Same MDP with a different transition tensor.
    pub fn with_dynamics(&self, dynamics: Vec<f64>) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, dynamics, self.reward.clone(), self.gamma, self.rho0.clone())
    }

    /// True when the two MDPs agree on everything but dynamics.
    pub fn shares_structure_with(&self, other: &TabularMdp) -> bool {
        self.n_states == other.n_states
            && self.n_actions == other.n_actions
            && self.gamma == other.gamma
            && self.reward == other.reward
            && self.rho0 == other.rho0
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.n_states != self.n_states || policy.n_actions != self.n_actions {
            return Err(Error::config("policy shape does not match the MDP"));
        }
        Ok(())
    }

    /// State-to-state kernel and expected reward under `policy`.
    fn induced_chain(&self, policy: &TabularPolicy) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_states;
        let mut p = DMatrix::zeros(n, n);
        let mut r = DVector::zeros(n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                r[s] += pa * self.reward(s, a);
                for (s2, q) in self.row(s, a).iter().enumerate() {
                    p[(s, s2)] += pa * q;
                }
            }
        }
        (p, r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::config("policy matrix has the wrong size"));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            check_distribution(row, &format!("pi[{s}, ·]"))?;
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

fn solve(m: DMatrix<f64>, b: DVector<f64>) -> Vec<f64> {
    // I - γP is strictly diagonally dominant for γ < 1, hence invertible.
    m.lu().solve(&b).expect("I - γP is nonsingular for γ < 1").iter().copied().collect()
}

/// Exact `V^π` from `(I - γ P_π) V = r_π`.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let (p, r) = mdp.induced_chain(policy);
    let a = DMatrix::identity(n, n) - p * mdp.gamma;
    Ok(solve(a, r))
}

/// Normalized discounted state-action occupancy `ρ[s, a]`.
pub fn occupancy_measure(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let (p, _) = mdp.induced_chain(policy);
    // d = (1-γ) (I - γ Pᵀ)^{-1} ρ0
    let a = DMatrix::identity(n, n) - p.transpose() * mdp.gamma;
    let rho0 = DVector::from_column_slice(&mdp.rho0) * (1.0 - mdp.gamma);
    let d = solve(a, rho0);
    let mut rho = Vec::with_capacity(n * mdp.n_actions);
    for (s, ds) in d.iter().enumerate() {
        for a in 0..mdp.n_actions {
            rho.push((ds * policy.prob(s, a)).max(0.0));
        }
    }
    Ok(rho)
}

/// `η = Σ ρ(s, a) r(s, a)`.
pub fn performance(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64> {
    let rho = occupancy_measure(mdp, policy)?;
    Ok(rho.iter().zip(&mdp.reward).map(|(p, r)| p * r).sum())
}

/// Expected discounted return `J = ρ0·V = η / (1-γ)`.
pub fn expected_return(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64> {
    let v = policy_evaluation(mdp, policy)?;
    Ok(mdp.rho0.iter().zip(&v).map(|(p, v)| p * v).sum())
}

/// `‖V - (r_π + γ P_π V)‖∞`.
pub fn bellman_residual(mdp: &TabularMdp, policy: &TabularPolicy, v: &[f64]) -> f64 {
    let (p, r) = mdp.induced_chain(policy);
    let vv = DVector::from_column_slice(v);
    let backup = r + p * &vv * mdp.gamma;
    (vv - backup).amax()
}

/// `max_s' |d(s') - (1-γ)ρ0(s') - γ Σ ρ(s, a) P(s'|s, a)|` with `d(s') = Σ_a ρ(s', a)`.
pub fn occupancy_balance_residual(mdp: &TabularMdp, rho: &[f64]) -> f64 {
    let n = mdp.n_states;
    let mut inflow: Vec<f64> = mdp.rho0.iter().map(|p| (1.0 - mdp.gamma) * p).collect();
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let w = rho[s * mdp.n_actions + a];
            for (s2, q) in mdp.row(s, a).iter().enumerate() {
                inflow[s2] += mdp.gamma * w * q;
            }
        }
    }
    (0..n)
        .map(|s| {
            let d: f64 = rho[s * mdp.n_actions..(s + 1) * mdp.n_actions].iter().sum();
            (d - inflow[s]).abs()
        })
        .fold(0.0, f64::max)
}
