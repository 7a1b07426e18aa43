//! Planar point mass driven to a fixed goal.
//!
//! State `(x, y, vx, vy)`, action is a force in `[-1, 1]²`. Leaving the
//! square `[-BOUND, BOUND]²` ends the episode.

use rand::Rng;

use super::noise::FeatureGroup;

const DT: f64 = 0.1;
const DAMPING: f64 = 0.9;
const MAX_FORCE: f64 = 1.0;
pub const BOUND: f64 = 2.0;
pub const GOAL: [f64; 2] = [0.5, 0.5];

const GROUPS: [FeatureGroup; 4] =
    [FeatureGroup::Position, FeatureGroup::Position, FeatureGroup::Velocity, FeatureGroup::Velocity];

#[derive(Debug, Clone, Copy, Default)]
pub struct PointMass;

impl PointMass {
    pub fn state_dim(&self) -> usize {
        4
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    pub fn action_bound(&self) -> f64 {
        MAX_FORCE
    }

    pub fn feature_groups(&self) -> &'static [FeatureGroup] {
        &GROUPS
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        vec![rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0, 0.0]
    }

    pub fn nominal_step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let reward = -((state[0] - GOAL[0]).powi(2) + (state[1] - GOAL[1]).powi(2)).sqrt();
        let fx = action[0].clamp(-MAX_FORCE, MAX_FORCE);
        let fy = action[1].clamp(-MAX_FORCE, MAX_FORCE);
        let vx = DAMPING * state[2] + DT * fx;
        let vy = DAMPING * state[3] + DT * fy;
        (vec![state[0] + DT * vx, state[1] + DT * vy, vx, vy], reward)
    }

    pub fn is_terminal(&self, state: &[f64]) -> bool {
        state[0].abs() > BOUND || state[1].abs() > BOUND
    }
}
