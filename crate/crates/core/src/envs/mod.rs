//! Continuous-control environments with additive next-state noise.
//!
//! A [`DomainPair`] couples a source and a target instance of the same base
//! environment. The two share reward, discount, start distribution and
//! deterministic dynamics; they differ only in the law of the noise vector
//! added to every next state, which is what creates partial support overlap.

mod noise;
pub mod pendulum;
pub mod point_mass;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use noise::{FeatureGroup, NoiseDist, NoiseSpec};
pub use pendulum::Pendulum;
pub use point_mass::PointMass;

use crate::error::{Error, Result};
use crate::seeding::{self, Stream, StreamRng};

/// Default per-episode step cap.
pub const DEFAULT_HORIZON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    #[serde(rename = "pendulum")]
    Pendulum,
    #[serde(rename = "point-mass")]
    PointMass,
}

impl EnvId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Pendulum => "pendulum",
            EnvId::PointMass => "point-mass",
        }
    }

    /// Multiplier applied to the tabulated noise magnitudes so that they are
    /// comparable to this environment's per-step state changes.
    pub fn default_noise_scale(&self) -> f64 {
        match self {
            EnvId::Pendulum => 10.0,
            EnvId::PointMass => 1.0,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvId::Pendulum),
            "point-mass" | "point_mass" | "pointmass" => Ok(EnvId::PointMass),
            other => Err(Error::config(format!("unknown environment id `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapLevel {
    Large,
    Medium,
    Small,
}

impl OverlapLevel {
    pub const ALL: [OverlapLevel; 3] = [OverlapLevel::Large, OverlapLevel::Medium, OverlapLevel::Small];

    pub fn as_str(&self) -> &'static str {
        match self {
            OverlapLevel::Large => "large",
            OverlapLevel::Medium => "medium",
            OverlapLevel::Small => "small",
        }
    }

    /// Magnitude of the target noise mean; larger means less overlap with the
    /// source interval [-0.02, 0.02].
    fn target_shift(&self) -> f64 {
        match self {
            OverlapLevel::Large => 0.015,
            OverlapLevel::Medium => 0.02,
            OverlapLevel::Small => 0.025,
        }
    }
}

impl fmt::Display for OverlapLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OverlapLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(OverlapLevel::Large),
            "medium" => Ok(OverlapLevel::Medium),
            "small" => Ok(OverlapLevel::Small),
            other => Err(Error::config(format!("unknown overlap level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// Deterministic base dynamics shared by both domains.
#[derive(Debug, Clone, Copy)]
pub enum BaseEnv {
    Pendulum(Pendulum),
    PointMass(PointMass),
}

impl BaseEnv {
    pub fn new(id: EnvId) -> Self {
        match id {
            EnvId::Pendulum => BaseEnv::Pendulum(Pendulum),
            EnvId::PointMass => BaseEnv::PointMass(PointMass),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            BaseEnv::Pendulum(e) => e.state_dim(),
            BaseEnv::PointMass(e) => e.state_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            BaseEnv::Pendulum(e) => e.action_dim(),
            BaseEnv::PointMass(e) => e.action_dim(),
        }
    }

    /// Symmetric bound on every action component.
    pub fn action_bound(&self) -> f64 {
        match self {
            BaseEnv::Pendulum(e) => e.action_bound(),
            BaseEnv::PointMass(e) => e.action_bound(),
        }
    }

    pub fn feature_groups(&self) -> &'static [FeatureGroup] {
        match self {
            BaseEnv::Pendulum(e) => e.feature_groups(),
            BaseEnv::PointMass(e) => e.feature_groups(),
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            BaseEnv::Pendulum(e) => e.reset(rng),
            BaseEnv::PointMass(e) => e.reset(rng),
        }
    }

    pub fn nominal_step(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        match self {
            BaseEnv::Pendulum(e) => e.nominal_step(state, action),
            BaseEnv::PointMass(e) => e.nominal_step(state, action),
        }
    }

    pub fn is_terminal(&self, state: &[f64]) -> bool {
        match self {
            BaseEnv::Pendulum(e) => e.is_terminal(state),
            BaseEnv::PointMass(e) => e.is_terminal(state),
        }
    }
}

/// Source/target pair differing only in injected noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainPair {
    pub env: EnvId,
    pub overlap: OverlapLevel,
    pub source_noise: NoiseSpec,
    pub target_noise: NoiseSpec,
    pub noise_scale: f64,
    pub horizon: usize,
    /// Base seed for the environment random streams.
    pub seed: u64,
}

/// Build the pair for `env` at the requested overlap level.
///
/// The source law is the same at every level: uniform on [-0.02, 0.02] for
/// both feature groups. The target law is a narrow Gaussian (std 0.004) whose
/// mean moves out of that interval as overlap shrinks, positive on position
/// features and negative on velocity features.
pub fn make_domain_pair(env: EnvId, overlap: OverlapLevel, seed: u64) -> DomainPair {
    let source = NoiseSpec {
        position: NoiseDist::Uniform { lo: -0.02, hi: 0.02 },
        velocity: NoiseDist::Uniform { lo: -0.02, hi: 0.02 },
    };
    let shift = overlap.target_shift();
    let target = NoiseSpec {
        position: NoiseDist::Gaussian { mean: shift, std: 0.004 },
        velocity: NoiseDist::Gaussian { mean: -shift, std: 0.004 },
    };
    DomainPair {
        env,
        overlap,
        source_noise: source,
        target_noise: target,
        noise_scale: env.default_noise_scale(),
        horizon: DEFAULT_HORIZON,
        seed,
    }
}

impl DomainPair {
    pub fn validate(&self) -> Result<()> {
        self.source_noise.validate()?;
        self.target_noise.validate()?;
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::config(format!("noise scale must be finite and >= 0, got {}", self.noise_scale)));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        Ok(())
    }

    pub fn base(&self) -> BaseEnv {
        BaseEnv::new(self.env)
    }

    pub fn noise(&self, domain: Domain) -> &NoiseSpec {
        match domain {
            Domain::Source => &self.source_noise,
            Domain::Target => &self.target_noise,
        }
    }

    pub fn make_env(&self, domain: Domain) -> Result<NoisyEnv> {
        NoisyEnv::new(self.base(), *self.noise(domain), self.noise_scale, self.horizon)
    }

    /// The random stream that drives `domain`'s resets and noise.
    pub fn env_rng(&self, domain: Domain) -> StreamRng {
        match domain {
            Domain::Source => seeding::stream(self.seed, Stream::SourceEnv),
            Domain::Target => seeding::stream(self.seed, Stream::TargetEnv),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// True termination (never set by the step cap).
    pub done: bool,
    /// The step cap was reached; the episode is over but `next_state` is not terminal.
    pub truncated: bool,
    /// The noise vector that was added to the nominal next state.
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    NeedsReset,
    Running,
    Finished,
}

/// One stateful environment instance.
#[derive(Debug, Clone)]
pub struct NoisyEnv {
    base: BaseEnv,
    noise: NoiseSpec,
    scale: f64,
    horizon: usize,
    state: Vec<f64>,
    t: usize,
    status: Status,
    fixed_start: Option<Vec<f64>>,
}

impl NoisyEnv {
    pub fn new(base: BaseEnv, noise: NoiseSpec, scale: f64, horizon: usize) -> Result<Self> {
        noise.validate()?;
        if horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        Ok(Self { base, noise, scale, horizon, state: Vec::new(), t: 0, status: Status::NeedsReset, fixed_start: None })
    }

    /// Start every episode from `state` instead of the base reset distribution.
    pub fn with_fixed_start(mut self, state: Vec<f64>) -> Result<Self> {
        if state.len() != self.base.state_dim() || state.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("fixed start must be a finite state of the right width"));
        }
        self.fixed_start = Some(state);
        Ok(self)
    }

    pub fn base(&self) -> &BaseEnv {
        &self.base
    }

    pub fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.base.action_dim()
    }

    pub fn action_bound(&self) -> f64 {
        self.base.action_bound()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// True once the current episode ended by termination or the step cap.
    pub fn is_finished(&self) -> bool {
        self.status != Status::Running
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        self.state = match &self.fixed_start {
            Some(s) => s.clone(),
            None => self.base.reset(rng),
        };
        self.t = 0;
        self.status = Status::Running;
        self.state.clone()
    }

    /// Advance by one step: nominal dynamics, then additive noise, then the
    /// termination test on the noisy state.
    pub fn step<R: Rng + ?Sized>(&mut self, action: &[f64], rng: &mut R) -> Result<StepResult> {
        match self.status {
            Status::NeedsReset => return Err(Error::state("step called before reset")),
            Status::Finished => return Err(Error::state("step called on a finished episode")),
            Status::Running => {}
        }
        if action.len() != self.base.action_dim() {
            return Err(Error::Domain(format!(
                "action has {} components, expected {}",
                action.len(),
                self.base.action_dim()
            )));
        }
        if let Some(bad) = action.iter().find(|a| !a.is_finite()) {
            return Err(Error::Domain(format!("non-finite action component {bad}")));
        }
        let bound = self.base.action_bound();
        if let Some(out) = action.iter().find(|a| a.abs() > bound) {
            return Err(Error::Domain(format!("action component {out} outside [-{bound}, {bound}]")));
        }

        let (nominal, reward) = self.base.nominal_step(&self.state, action);
        let noise = self.noise.sample_vector(self.base.feature_groups(), self.scale, rng);
        let next_state: Vec<f64> = nominal.iter().zip(&noise).map(|(s, n)| s + n).collect();
        let done = self.base.is_terminal(&next_state);
        self.t += 1;
        let truncated = !done && self.t >= self.horizon;
        if done || truncated {
            self.status = Status::Finished;
        }
        self.state = next_state.clone();
        Ok(StepResult { next_state, reward, done, truncated, noise })
    }
}

/// Anything that maps a state to an action.
pub trait Policy {
    fn act(&mut self, state: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
}

impl<F> Policy for F
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Vec<f64>,
{
    fn act(&mut self, state: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self(state, rng)
    }
}

/// Uniformly random actions inside the action box.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub action_dim: usize,
    pub bound: f64,
}

impl Policy for RandomPolicy {
    fn act(&mut self, _state: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.action_dim).map(|_| rng.random_range(-self.bound..=self.bound)).collect()
    }
}

/// Run `n_episodes` full episodes and return the sample mean and sample
/// standard deviation of the undiscounted returns.
pub fn evaluate_policy<P: Policy + ?Sized>(
    env: &mut NoisyEnv,
    policy: &mut P,
    n_episodes: usize,
    rng: &mut StreamRng,
) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(Error::config("evaluation needs at least one episode"));
    }
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut state = env.reset(rng);
        let mut total = 0.0;
        loop {
            let action = policy.act(&state, rng);
            let step = env.step(&action, rng)?;
            total += step.reward;
            state = step.next_state;
            if step.done || step.truncated {
                break;
            }
        }
        returns.push(total);
    }
    Ok(mean_and_std(&returns))
}

/// Sample mean and (n-1)-normalized standard deviation; std is 0 for one value.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
