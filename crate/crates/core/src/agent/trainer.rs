use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Correction, DadsConfig, Learner, Pipeline, SacAgent};
use crate::envs::{evaluate_policy, Domain, DomainPair, NoisyEnv};
use crate::error::{Error, Result};
use crate::mixup::mix_batch;
use crate::ratio::ClassifierPair;
use crate::seeding::{stream, Stream, StreamRng};
use crate::skew::{PrioritizedBuffer, Transition};

/// Interaction and update tallies of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub source_steps: u64,
    pub target_steps: u64,
    pub sac_updates: u64,
    pub skipped_updates: u64,
    /// Gradient steps of the source-vs-target pair.
    pub theta_updates: u64,
    /// Gradient steps of the modified-source-vs-target pair.
    pub phi_updates: u64,
    pub mixup_calls: u64,
    pub full_refreshes: u64,
}

/// One evaluation checkpoint on the target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub return_mean: f64,
    pub return_std: f64,
    pub mean_delta_r: Option<f64>,
    pub mean_priority: Option<f64>,
    pub cls_loss_theta: Option<f64>,
    pub cls_loss_phi: Option<f64>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Running {
    sum: f64,
    n: u64,
}

impl Running {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn extend(&mut self, xs: &[f64]) {
        for x in xs {
            self.add(*x);
        }
    }

    fn take(&mut self) -> Option<f64> {
        let out = (self.n > 0).then(|| self.sum / self.n as f64);
        *self = Running::default();
        out
    }
}

/// Mutable state of one training run.
pub struct Trainer {
    config: DadsConfig,
    pipeline: Pipeline,
    agent: SacAgent,
    theta: Option<ClassifierPair>,
    phi: Option<ClassifierPair>,
    source_env: NoisyEnv,
    target_env: NoisyEnv,
    eval_env: NoisyEnv,
    source_buf: PrioritizedBuffer,
    target_buf: PrioritizedBuffer,
    source_rng: StreamRng,
    target_rng: StreamRng,
    eval_rng: StreamRng,
    agent_rng: StreamRng,
    noise_rng: StreamRng,
    mixup_rng: StreamRng,
    sampling_rng: StreamRng,
    source_state: Option<Vec<f64>>,
    target_state: Option<Vec<f64>>,
    counters: Counters,
    delta_r: Running,
    loss_theta: Running,
    loss_phi: Running,
    last_diag: super::SacDiagnostics,
}

impl Trainer {
    pub fn new(config: &DadsConfig, pair: &DomainPair, seed: u64) -> Result<Self> {
        config.validate()?;
        pair.validate()?;
        let pipeline = config.method.pipeline();
        let base = pair.base();
        let (sd, ad) = (base.state_dim(), base.action_dim());
        let mut init_rng = stream(seed, Stream::Init);
        let agent = SacAgent::new(sd, ad, base.action_bound(), &config.sac, &mut init_rng)?;
        let uses_classifiers = pipeline.learner == Learner::Adaptive;
        let theta = if uses_classifiers {
            Some(ClassifierPair::new(sd, ad, &config.classifier, &mut init_rng)?)
        } else {
            None
        };
        let phi = if uses_classifiers && pipeline.modified_source_classifier {
            Some(ClassifierPair::new(sd, ad, &config.classifier, &mut init_rng)?)
        } else {
            None
        };
        let env_seed = |d: Domain| {
            let mut p = pair.clone();
            p.seed = seed;
            p.env_rng(d)
        };
        Ok(Self {
            config: config.clone(),
            pipeline,
            agent,
            theta,
            phi,
            source_env: pair.make_env(Domain::Source)?,
            target_env: pair.make_env(Domain::Target)?,
            eval_env: pair.make_env(Domain::Target)?,
            source_buf: PrioritizedBuffer::new(config.buffer_capacity, config.mu)?,
            target_buf: PrioritizedBuffer::new(config.buffer_capacity, config.mu)?,
            source_rng: env_seed(Domain::Source),
            target_rng: env_seed(Domain::Target),
            eval_rng: stream(seed, Stream::Eval),
            agent_rng: stream(seed, Stream::Agent),
            noise_rng: stream(seed, Stream::ClassifierNoise),
            mixup_rng: stream(seed, Stream::Mixup),
            sampling_rng: stream(seed, Stream::Sampling),
            source_state: None,
            target_state: None,
            counters: Counters::default(),
            delta_r: Running::default(),
            loss_theta: Running::default(),
            loss_phi: Running::default(),
            last_diag: Default::default(),
        })
    }

    pub fn config(&self) -> &DadsConfig {
        &self.config
    }

    pub fn pipeline(&self) -> Pipeline {
        self.pipeline
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn agent(&self) -> &SacAgent {
        &self.agent
    }

    pub fn into_agent(self) -> SacAgent {
        self.agent
    }

    pub fn theta(&self) -> Option<&ClassifierPair> {
        self.theta.as_ref()
    }

    pub fn phi(&self) -> Option<&ClassifierPair> {
        self.phi.as_ref()
    }

    pub fn source_buffer(&self) -> &PrioritizedBuffer {
        &self.source_buf
    }

    pub fn target_buffer(&self) -> &PrioritizedBuffer {
        &self.target_buf
    }

    pub fn last_diagnostics(&self) -> super::SacDiagnostics {
        self.last_diag
    }

    /// The pair that produces `Δr` (and importance weights).
    fn correction_pair(&self) -> Option<&ClassifierPair> {
        self.phi.as_ref().or(self.theta.as_ref())
    }

    fn finetune_switch(&self) -> u64 {
        self.config.total_steps - self.config.finetune_target_steps()
    }

    fn random_action(&mut self) -> Vec<f64> {
        let bound = self.source_env.action_bound();
        (0..self.source_env.action_dim()).map(|_| self.agent_rng.random_range(-bound..=bound)).collect()
    }

    /// Step `domain`'s environment once and return the transition.
    fn rollout(&mut self, domain: Domain, explore: bool) -> Result<Transition> {
        let state = match domain {
            Domain::Source => self.source_state.take(),
            Domain::Target => self.target_state.take(),
        };
        let state = match state {
            Some(s) => s,
            None => match domain {
                Domain::Source => self.source_env.reset(&mut self.source_rng),
                Domain::Target => self.target_env.reset(&mut self.target_rng),
            },
        };
        let action = if explore { self.random_action() } else { self.agent.act(&state, &mut self.agent_rng)? };
        let out = match domain {
            Domain::Source => {
                self.counters.source_steps += 1;
                self.source_env.step(&action, &mut self.source_rng)?
            }
            Domain::Target => {
                self.counters.target_steps += 1;
                self.target_env.step(&action, &mut self.target_rng)?
            }
        };
        let next = (!(out.done || out.truncated)).then(|| out.next_state.clone());
        match domain {
            Domain::Source => self.source_state = next,
            Domain::Target => self.target_state = next,
        }
        Ok(Transition::new(state, action, out.reward, out.next_state, out.done))
    }

    /// One iteration of the training loop at step `t` (1-based).
    pub fn step(&mut self, t: u64) -> Result<()> {
        if t == 0 {
            return Err(Error::input("steps are numbered from 1"));
        }
        match self.pipeline.learner {
            Learner::Adaptive => self.adaptive_step(t),
            Learner::SourceOnly if self.pipeline.finetune && t > self.finetune_switch() => self.plain_step(Domain::Target, t),
            Learner::SourceOnly => self.plain_step(Domain::Source, t),
            Learner::TargetOnly => self.plain_step(Domain::Target, t),
        }
    }

    fn plain_step(&mut self, domain: Domain, t: u64) -> Result<()> {
        let finetuning = self.pipeline.finetune && domain == Domain::Target;
        let explore = !finetuning && t <= self.config.seed_steps;
        let tr = self.rollout(domain, explore)?;
        let buf = if domain == Domain::Source { &mut self.source_buf } else { &mut self.target_buf };
        buf.push(tr, 0.0)?;
        let ready = if finetuning { buf.len() >= self.config.batch_size } else { t > self.config.seed_steps };
        if !ready {
            return Ok(());
        }
        let (_, batch) = buf.sample_uniform(self.config.batch_size, &mut self.sampling_rng)?;
        self.sac(&batch, None)
    }

    fn sac(&mut self, batch: &[Transition], weights: Option<&[f64]>) -> Result<()> {
        let diag = self.agent.update(batch, weights, &mut self.agent_rng)?;
        self.counters.sac_updates += 1;
        if diag.skipped {
            self.counters.skipped_updates += 1;
        }
        self.last_diag = diag;
        Ok(())
    }

    fn adaptive_step(&mut self, t: u64) -> Result<()> {
        let cfg = &self.config;
        let explore = t <= cfg.seed_steps;
        let (n, half) = (cfg.batch_size, cfg.classifier_batch / 2);
        let correction_on = t > cfg.warmup_steps;

        // Source rollout; new transitions are prioritized by the current ratio.
        let tr = self.rollout(Domain::Source, explore)?;
        let lr = match (&self.theta, self.theta_trained()) {
            (Some(theta), true) => theta.log_ratio_batch(&[&tr])?[0],
            _ => 0.0,
        };
        self.source_buf.push(tr, lr)?;

        if t % self.config.target_ratio == 0 {
            let tr = self.rollout(Domain::Target, explore)?;
            self.target_buf.push(tr, 0.0)?;
        }
        if explore || self.target_buf.is_empty() {
            return Ok(());
        }

        // Source batch: skewed by priority or uniform.
        let (src_idx, src) = if self.pipeline.skew {
            self.source_buf.sample_batch(n, &mut self.sampling_rng)?
        } else {
            self.source_buf.sample_uniform(n, &mut self.sampling_rng)?
        };
        let (_, tar) = self.target_buf.sample_uniform(n.max(half), &mut self.sampling_rng)?;
        let tar_cls: Vec<&Transition> = tar.iter().take(half).collect();

        // Source-vs-target pair on uniform source data, then priority refresh.
        let (_, src_cls) = self.source_buf.sample_uniform(half, &mut self.sampling_rng)?;
        let src_cls: Vec<&Transition> = src_cls.iter().collect();
        let theta = self.theta.as_mut().expect("adaptive methods own a source-vs-target pair");
        let loss = theta.train_step(&src_cls, &tar_cls, &mut self.noise_rng)?;
        self.loss_theta.add(loss);
        self.counters.theta_updates += 1;
        if self.phi.is_some() {
            let theta = self.theta.as_ref().unwrap();
            let refs: Vec<&Transition> = src.iter().collect();
            let fresh = theta.log_ratio_batch(&refs)?;
            self.source_buf.update_priorities(&src_idx, &fresh)?;
            if t % self.config.refresh_interval == 0 {
                self.source_buf.refresh_all(4096, |chunk| theta.log_ratio_batch(chunk))?;
                self.counters.full_refreshes += 1;
            }
        }

        // Modified source batch.
        let mut batch = src;
        if self.pipeline.mixup && self.config.mixup.enabled {
            let mixed = mix_batch(&batch, &tar[..n.min(tar.len())], &self.config.mixup, &mut self.mixup_rng)?;
            self.counters.mixup_calls += 1;
            batch.extend(mixed);
        }

        // Reward correction or importance weights.
        let mut weights = None;
        if correction_on && self.pipeline.correction != Correction::None {
            let pair = self.correction_pair().expect("adaptive methods own a classifier pair");
            let refs: Vec<&Transition> = batch.iter().collect();
            let dr = pair.log_ratio_batch(&refs)?;
            let clip = pair.logit_clip();
            self.delta_r.extend(&dr);
            match self.pipeline.correction {
                Correction::Reward => {
                    for (tr, d) in batch.iter_mut().zip(&dr) {
                        tr.r += d;
                    }
                }
                Correction::ImportanceWeights => weights = Some(importance_weights(&dr, clip)),
                Correction::None => unreachable!(),
            }
        }

        // Modified-source-vs-target pair.
        if let Some(phi) = self.phi.as_mut() {
            let picks = sample_indices(&mut self.sampling_rng, batch.len(), half.min(batch.len()));
            let msrc: Vec<&Transition> = picks.iter().map(|i| &batch[i]).collect();
            let loss = phi.train_step(&msrc, &tar_cls, &mut self.noise_rng)?;
            self.loss_phi.add(loss);
            self.counters.phi_updates += 1;
        }

        self.sac(&batch, weights.as_deref())
    }

    fn theta_trained(&self) -> bool {
        self.theta.as_ref().is_some_and(|p| p.steps() > 0)
    }

    /// Evaluate the mean-action policy on the target domain and drain the
    /// interval diagnostics.
    pub fn checkpoint(&mut self, step: u64) -> Result<CurvePoint> {
        let agent = &self.agent;
        let mut policy = |s: &[f64], _: &mut dyn rand::RngCore| agent.act_deterministic(s).expect("state width matches the actor");
        let (mean, std) = evaluate_policy(&mut self.eval_env, &mut policy, self.config.eval_episodes, &mut self.eval_rng)?;
        let mean_priority = (self.pipeline.skew && !self.source_buf.is_empty())
            .then(|| self.source_buf.total_priority() / self.source_buf.len() as f64);
        Ok(CurvePoint {
            step,
            return_mean: mean,
            return_std: std,
            mean_delta_r: self.delta_r.take(),
            mean_priority,
            cls_loss_theta: self.loss_theta.take(),
            cls_loss_phi: self.loss_phi.take(),
        })
    }
}

/// `exp(Δr)` clamped to `[e^-L, e^L]` and rescaled to mean one.
fn importance_weights(delta_r: &[f64], clip: f64) -> Vec<f64> {
    let w: Vec<f64> = delta_r.iter().map(|d| d.clamp(-clip, clip).exp()).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.into_iter().map(|x| x / mean).collect()
}

/// Advance the loop state by one step.
pub fn dads_step(state: &mut Trainer, t: u64) -> Result<()> {
    state.step(t)
}

/// Outcome of a completed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub curve: Vec<CurvePoint>,
    pub counters: Counters,
    pub agent: SacAgent,
}

/// Train `config.method` on `pair` and evaluate every `eval_interval` steps.
pub fn run_baseline(config: &DadsConfig, pair: &DomainPair, seed: u64) -> Result<RunOutput> {
    run_baseline_with(config, pair, seed, |_| {})
}

/// As [`run_baseline`], handing each checkpoint to `on_point` as soon as it
/// is produced, so callers keep partial curves when a run fails.
pub fn run_baseline_with<F: FnMut(&CurvePoint)>(
    config: &DadsConfig,
    pair: &DomainPair,
    seed: u64,
    mut on_point: F,
) -> Result<RunOutput> {
    let mut trainer = Trainer::new(config, pair, seed)?;
    let mut curve = Vec::new();
    for t in 1..=config.total_steps {
        trainer.step(t)?;
        if t % config.eval_interval == 0 {
            let p = trainer.checkpoint(t)?;
            on_point(&p);
            curve.push(p);
        }
    }
    Ok(RunOutput { curve, counters: trainer.counters, agent: trainer.agent })
}
