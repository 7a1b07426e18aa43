//! Torque-limited pendulum swing-up.
//!
//! The observation is `(cos θ, sin θ, θ̇)` and doubles as the simulator state:
//! the angle is recovered with `atan2`, so additive noise on the first two
//! features moves the pole and is carried into the next step.

use rand::Rng;
use std::f64::consts::PI;

use super::noise::FeatureGroup;

const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;
const DT: f64 = 0.05;
const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;

const GROUPS: [FeatureGroup; 3] = [FeatureGroup::Position, FeatureGroup::Position, FeatureGroup::Velocity];

#[derive(Debug, Clone, Copy, Default)]
pub struct Pendulum;

fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn state_dim(&self) -> usize {
        3
    }

    pub fn action_dim(&self) -> usize {
        1
    }

    pub fn action_bound(&self) -> f64 {
        MAX_TORQUE
    }

    pub fn feature_groups(&self) -> &'static [FeatureGroup] {
        &GROUPS
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let th = rng.random_range(-PI..PI);
        let thdot = rng.random_range(-1.0..1.0);
        vec![th.cos(), th.sin(), thdot]
    }

    /// Deterministic dynamics; returns `(next_state, reward)` where the reward is r(s, a).
    pub fn nominal_step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let th = state[1].atan2(state[0]);
        let thdot = state[2];
        let u = action[0].clamp(-MAX_TORQUE, MAX_TORQUE);
        let cost = angle_normalize(th).powi(2) + 0.1 * thdot * thdot + 0.001 * u * u;

        let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * th.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        let new_thdot = (thdot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        let new_th = th + new_thdot * DT;
        (vec![new_th.cos(), new_th.sin(), new_thdot], -cost)
    }

    pub fn is_terminal(&self, _state: &[f64]) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_at_rest_is_an_equilibrium() {
        let (next, r) = Pendulum.nominal_step(&[1.0, 0.0, 0.0], &[0.0]);
        assert!((next[0] - 1.0).abs() < 1e-15);
        assert!(next[1].abs() < 1e-15);
        assert!(next[2].abs() < 1e-15);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn hanging_cost_is_pi_squared() {
        let (_, r) = Pendulum.nominal_step(&[-1.0, 0.0, 0.0], &[0.0]);
        assert!((r + PI * PI).abs() < 1e-9);
    }
}
