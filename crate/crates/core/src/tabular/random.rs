//! Random instance generators for bound verification.
//!
//! Transition rows are Dirichlet(1), rewards uniform on [-1, 1], start
//! distributions Dirichlet(1). Deficient pairs are made by zeroing a random
//! subset of the source entries that carry target mass and renormalizing.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{TabularMdp, TabularPolicy};

/// Probability that a target-positive source entry is removed in a deficient pair.
const DROP_PROB: f64 = 0.35;

pub fn dirichlet_ones<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    let total: f64 = draws.iter().sum();
    let mut p: Vec<f64> = draws.iter().map(|x| x / total).collect();
    fix_sum(&mut p);
    p
}

/// Push the floating-point residue of a normalization into the largest entry.
fn fix_sum(p: &mut [f64]) {
    let residue = 1.0 - p.iter().sum::<f64>();
    let imax = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    p[imax] += residue;
}

fn random_dynamics<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> Vec<f64> {
    (0..n_states * n_actions).flat_map(|_| dirichlet_ones(rng, n_states)).collect()
}

pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let dynamics = random_dynamics(rng, n_states, n_actions);
    let reward = (0..n_states * n_actions).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let rho0 = dirichlet_ones(rng, n_states);
    TabularMdp::new(n_states, n_actions, dynamics, reward, gamma, rho0).expect("generator produces valid MDPs")
}

pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> TabularPolicy {
    let probs = (0..n_states).flat_map(|_| dirichlet_ones(rng, n_actions)).collect();
    TabularPolicy::new(n_states, n_actions, probs).expect("generator produces valid policies")
}

/// `(source, target)` with independent strictly positive rows.
pub fn full_support_pair<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
) -> (TabularMdp, TabularMdp) {
    let tar = random_mdp(rng, n_states, n_actions, gamma);
    let src = tar.with_dynamics(random_dynamics(rng, n_states, n_actions)).expect("valid dynamics");
    (src, tar)
}

/// `(source, target)` where some source rows miss next states the target reaches.
/// At least one entry is removed and every source row keeps positive mass.
pub fn deficient_support_pair<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
) -> (TabularMdp, TabularMdp) {
    assert!(n_states >= 2, "support deficiency needs at least two next states");
    let tar = random_mdp(rng, n_states, n_actions, gamma);
    let mut dynamics = random_dynamics(rng, n_states, n_actions);
    let mut removed_any = false;
    for (k, row) in dynamics.chunks_mut(n_states).enumerate() {
        let target_row = tar.row(k / n_actions, k % n_actions);
        for (s2, p) in row.iter_mut().enumerate() {
            if target_row[s2] > 0.0 && rng.random_bool(DROP_PROB) {
                *p = 0.0;
            }
        }
        if row.iter().all(|p| *p == 0.0) {
            let keep = rng.random_range(0..n_states);
            row[keep] = 1.0;
        }
        if !removed_any && row.iter().all(|p| *p > 0.0) && k + 1 == n_states * n_actions {
            // guarantee deficiency on the last row if nothing else was removed
            let drop = rng.random_range(0..n_states);
            row[drop] = 0.0;
        }
        removed_any |= row.iter().any(|p| *p == 0.0);
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        let residue = 1.0 - row.iter().sum::<f64>();
        let imax = (0..n_states).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        row[imax] += residue;
    }
    let src = tar.with_dynamics(dynamics).expect("valid dynamics");
    (src, tar)
}
