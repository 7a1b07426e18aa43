use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::approximator::{polyak_update, Adam, AdamConfig, Mlp, OutputActivation};
use crate::error::{Error, Result};
use crate::skew::Transition;

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const SQUASH_EPS: f64 = 1e-6;
const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub init_alpha: f64,
    /// Defaults to `-action_dim` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            init_alpha: 1.0,
            target_entropy: None,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("SAC hidden widths must be non-empty and positive"));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("alpha_lr", self.alpha_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau must lie in (0, 1]"));
        }
        if !(self.init_alpha > 0.0 && self.init_alpha.is_finite()) {
            return Err(Error::config("initial temperature must be positive"));
        }
        if let Some(h) = self.target_entropy {
            if !h.is_finite() {
                return Err(Error::config("target entropy must be finite"));
            }
        }
        Ok(())
    }
}

/// Loss values from one [`SacAgent::update`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SacDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub mean_q: f64,
    /// Some stage hit a non-finite loss or gradient and was skipped.
    pub skipped: bool,
}

/// Loss, flat parameter gradient and per-sample log-probabilities of the actor objective.
#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub logp: Vec<f64>,
}

/// Reparameterized draw from the squashed Gaussian policy.
struct Squashed {
    actions: Array2<f64>,
    /// `tanh(u)` before scaling.
    y: Array2<f64>,
    sigma: Array2<f64>,
    /// Raw log-std head output.
    z: Array2<f64>,
    logp: Array1<f64>,
}

/// Soft actor-critic with twin critics, trailing target critics and a
/// learned temperature. Actions are `scale * tanh(u)`, `u ~ N(m, σ²)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacAgent {
    actor: Mlp,
    critics: [Mlp; 2],
    targets: [Mlp; 2],
    log_alpha: f64,
    opt_actor: Adam,
    opt_critics: [Adam; 2],
    opt_alpha: Adam,
    state_dim: usize,
    action_dim: usize,
    action_scale: f64,
    gamma: f64,
    tau: f64,
    target_entropy: f64,
    updates: u64,
}

pub(crate) fn stack_states<'a, I: IntoIterator<Item = &'a [f64]>>(rows: I, width: usize) -> Array2<f64> {
    let mut data = Vec::new();
    for r in rows {
        data.extend_from_slice(r);
    }
    let n = data.len() / width.max(1);
    Array2::from_shape_vec((n, width), data).expect("consistent row widths")
}

fn concat_cols(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("same row count")
}

fn log_std_of(z: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (z.tanh() + 1.0)
}

fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        action_scale: f64,
        config: &SacConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || action_dim == 0 || !(action_scale > 0.0 && action_scale.is_finite()) {
            return Err(Error::config("invalid state/action dimensions or action scale"));
        }
        let widths = |input: usize, output: usize| {
            let mut w = vec![input];
            w.extend(&config.hidden);
            w.push(output);
            w
        };
        let actor = Mlp::new(&widths(state_dim, 2 * action_dim), OutputActivation::Identity, rng)?;
        let c1 = Mlp::new(&widths(state_dim + action_dim, 1), OutputActivation::Identity, rng)?;
        let c2 = Mlp::new(&widths(state_dim + action_dim, 1), OutputActivation::Identity, rng)?;
        let adam = |lr: f64, n: usize| Adam::new(n, AdamConfig { lr, ..AdamConfig::default() });
        Ok(Self {
            opt_actor: adam(config.actor_lr, actor.num_params()),
            opt_critics: [adam(config.critic_lr, c1.num_params()), adam(config.critic_lr, c2.num_params())],
            opt_alpha: adam(config.alpha_lr, 1),
            targets: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            actor,
            log_alpha: config.init_alpha.ln(),
            state_dim,
            action_dim,
            action_scale,
            gamma: config.gamma,
            tau: config.tau,
            target_entropy: config.target_entropy.unwrap_or(-(action_dim as f64)),
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn set_log_alpha(&mut self, log_alpha: f64) {
        self.log_alpha = log_alpha;
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_tau(&mut self, tau: f64) {
        self.tau = tau;
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self, k: usize) -> &Mlp {
        &self.critics[k]
    }

    pub fn critic_mut(&mut self, k: usize) -> &mut Mlp {
        &mut self.critics[k]
    }

    pub fn target_critic(&self, k: usize) -> &Mlp {
        &self.targets[k]
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    fn squash(&self, out: &Array2<f64>, eps: ArrayView2<f64>) -> Squashed {
        let ad = self.action_dim;
        let m = out.slice(s![.., ..ad]);
        let z = out.slice(s![.., ad..]).to_owned();
        let sigma = z.mapv(|v| log_std_of(v).exp());
        let u = &m + &(&sigma * &eps);
        let y = u.mapv(f64::tanh);
        let actions = y.mapv(|v| self.action_scale * v);
        let mut logp = Array1::zeros(out.nrows());
        for i in 0..out.nrows() {
            let mut acc = 0.0;
            for j in 0..ad {
                let e = eps[[i, j]];
                let yy = y[[i, j]];
                acc += -0.5 * e * e
                    - log_std_of(z[[i, j]])
                    - HALF_LOG_TWO_PI
                    - (self.action_scale * (1.0 - yy * yy) + SQUASH_EPS).ln();
            }
            logp[i] = acc;
        }
        Squashed { actions, y, sigma, z, logp }
    }

    /// Mean action `scale * tanh(m)`, used for evaluation.
    pub fn act_deterministic(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self.actor.forward_one(state)?;
        Ok(out[..self.action_dim].iter().map(|m| self.action_scale * m.tanh()).collect())
    }

    /// One draw from the stochastic policy.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, state.len()), state).map_err(|e| Error::input(e.to_string()))?;
        let out = self.actor.forward(x)?;
        let eps = standard_normal(1, self.action_dim, rng);
        Ok(self.squash(&out, eps.view()).actions.into_raw_vec_and_offset().0)
    }

    /// Actions and log-probabilities for a batch of states under fixed noise `eps`.
    pub fn sample_with_noise(&self, states: ArrayView2<f64>, eps: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        let out = self.actor.forward(states)?;
        let sq = self.squash(&out, eps);
        Ok((sq.actions, sq.logp))
    }

    /// `min(Q1, Q2)` of the online critics.
    pub fn q_min(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>> {
        let x = concat_cols(states, actions);
        let q1 = self.critics[0].forward(x.view())?;
        let q2 = self.critics[1].forward(x.view())?;
        Ok(q1.column(0).iter().zip(q2.column(0)).map(|(a, b)| a.min(*b)).collect())
    }

    /// Soft Bellman targets `r + γ(1-done)(min Q_targ(s', a') - α log π(a'|s'))`
    /// with `a'` drawn using the fixed noise `eps`.
    pub fn bellman_targets(&self, batch: &[Transition], eps: ArrayView2<f64>) -> Result<Array1<f64>> {
        let s2 = stack_states(batch.iter().map(|t| &t.s_next[..]), self.state_dim);
        let out = self.actor.forward(s2.view())?;
        let sq = self.squash(&out, eps);
        let x = concat_cols(s2.view(), sq.actions.view());
        let q1 = self.targets[0].forward(x.view())?;
        let q2 = self.targets[1].forward(x.view())?;
        let alpha = self.alpha();
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let soft = q1[[i, 0]].min(q2[[i, 0]]) - alpha * sq.logp[i];
                t.r + self.gamma * if t.done { 0.0 } else { soft }
            })
            .collect())
    }

    /// Weighted half mean-squared error of critic `k` against `targets`.
    pub fn critic_loss_and_grad(
        &mut self,
        k: usize,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        targets: &[f64],
        weights: Option<&[f64]>,
    ) -> Result<(f64, Vec<f64>, f64)> {
        let b = states.nrows();
        let x = concat_cols(states, actions);
        let q = self.critics[k].forward_train(x.view())?;
        let mut grad = Array2::zeros((b, 1));
        let mut loss = 0.0;
        let mut mean_q = 0.0;
        for i in 0..b {
            let w = weights.map_or(1.0, |w| w[i]);
            let d = q[[i, 0]] - targets[i];
            loss += 0.5 * w * d * d;
            grad[[i, 0]] = w * d / b as f64;
            mean_q += q[[i, 0]];
        }
        let (g, _) = self.critics[k].backward(grad.view())?;
        self.critics[k].clear_cache();
        Ok((loss / b as f64, g, mean_q / b as f64))
    }

    /// `mean_i w_i (α log π(a_i|s_i) - min_k Q_k(s_i, a_i))` with `a_i`
    /// reparameterized through the fixed noise `eps`; gradient is with
    /// respect to the actor parameters only.
    pub fn actor_loss_and_grad(
        &mut self,
        states: ArrayView2<f64>,
        eps: ArrayView2<f64>,
        weights: Option<&[f64]>,
    ) -> Result<ActorLoss> {
        let b = states.nrows();
        let ad = self.action_dim;
        let sd = self.state_dim;
        let out = self.actor.forward_train(states)?;
        let sq = self.squash(&out, eps);
        let x = concat_cols(states, sq.actions.view());
        let q1 = self.critics[0].forward_train(x.view())?;
        let q2 = self.critics[1].forward_train(x.view())?;
        let mut g1 = Array2::zeros((b, 1));
        let mut g2 = Array2::zeros((b, 1));
        let alpha = self.alpha();
        let mut loss = 0.0;
        for i in 0..b {
            let w = weights.map_or(1.0, |w| w[i]);
            let (a, c) = (q1[[i, 0]], q2[[i, 0]]);
            loss += w * (alpha * sq.logp[i] - a.min(c));
            if a <= c {
                g1[[i, 0]] = 1.0;
            } else {
                g2[[i, 0]] = 1.0;
            }
        }
        let dx1 = self.critics[0].backward_input(g1.view())?;
        let dx2 = self.critics[1].backward_input(g2.view())?;
        self.critics[0].clear_cache();
        self.critics[1].clear_cache();

        let mut grad_out = Array2::zeros((b, 2 * ad));
        for i in 0..b {
            let w = weights.map_or(1.0, |w| w[i]) / b as f64;
            for j in 0..ad {
                let y = sq.y[[i, j]];
                let jac = self.action_scale * (1.0 - y * y);
                let dlogp_du = 2.0 * y * jac / (jac + SQUASH_EPS);
                let dq_da = dx1[[i, sd + j]] + dx2[[i, sd + j]];
                let g_u = w * (alpha * dlogp_du - dq_da * jac);
                let g_ls = -w * alpha + g_u * sq.sigma[[i, j]] * eps[[i, j]];
                let t = sq.z[[i, j]].tanh();
                grad_out[[i, j]] = g_u;
                grad_out[[i, ad + j]] = g_ls * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t);
            }
        }
        let (grads, _) = self.actor.backward(grad_out.view())?;
        self.actor.clear_cache();
        Ok(ActorLoss { loss: loss / b as f64, grads, logp: sq.logp.to_vec() })
    }

    /// One soft actor-critic update. `weights`, if given, multiply every
    /// sample's critic and actor loss terms.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[Transition], weights: Option<&[f64]>, rng: &mut R) -> Result<SacDiagnostics> {
        if batch.is_empty() {
            return Err(Error::input("SAC update needs a non-empty batch"));
        }
        if let Some(w) = weights {
            if w.len() != batch.len() {
                return Err(Error::input("one weight per transition required"));
            }
        }
        for t in batch {
            if t.s.len() != self.state_dim || t.s_next.len() != self.state_dim || t.a.len() != self.action_dim {
                return Err(Error::input("transition shape does not match the agent"));
            }
        }
        let b = batch.len();
        let mut diag = SacDiagnostics { alpha: self.alpha(), ..SacDiagnostics::default() };
        let states = stack_states(batch.iter().map(|t| &t.s[..]), self.state_dim);
        let actions = stack_states(batch.iter().map(|t| &t.a[..]), self.action_dim);

        let eps_next = standard_normal(b, self.action_dim, rng);
        let y = self.bellman_targets(batch, eps_next.view())?;
        let y = y.as_slice().unwrap();
        let mut critic_ok = y.iter().all(|v| v.is_finite());
        if critic_ok {
            let mut losses = [0.0; 2];
            let mut grads = [Vec::new(), Vec::new()];
            for k in 0..2 {
                let (l, g, q) = self.critic_loss_and_grad(k, states.view(), actions.view(), y, weights)?;
                losses[k] = l;
                grads[k] = g;
                diag.mean_q += 0.5 * q;
            }
            critic_ok = losses.iter().all(|l| l.is_finite()) && grads.iter().flatten().all(|g| g.is_finite());
            if critic_ok {
                for k in 0..2 {
                    self.opt_critics[k].step(self.critics[k].params_mut(), &grads[k])?;
                }
                diag.critic_loss = 0.5 * (losses[0] + losses[1]);
            }
        }
        if !critic_ok {
            diag.skipped = true;
            return Ok(diag);
        }

        let eps = standard_normal(b, self.action_dim, rng);
        let actor = self.actor_loss_and_grad(states.view(), eps.view(), weights)?;
        if actor.loss.is_finite() && actor.grads.iter().all(|g| g.is_finite()) {
            self.opt_actor.step(self.actor.params_mut(), &actor.grads)?;
            diag.actor_loss = actor.loss;
            let (loss, grad) = temperature_loss_and_grad(self.log_alpha, &actor.logp, self.target_entropy);
            if loss.is_finite() && grad.is_finite() {
                let mut p = [self.log_alpha];
                self.opt_alpha.step(&mut p, &[grad])?;
                self.log_alpha = p[0];
                diag.alpha_loss = loss;
            } else {
                diag.skipped = true;
            }
        } else {
            diag.skipped = true;
        }

        for k in 0..2 {
            polyak_update(self.targets[k].params_mut(), self.critics[k].params(), self.tau);
        }
        self.updates += 1;
        diag.alpha = self.alpha();
        Ok(diag)
    }
}

/// `-α · mean(log π + H_target)` and its derivative with respect to `log α`.
pub fn temperature_loss_and_grad(log_alpha: f64, logp: &[f64], target_entropy: f64) -> (f64, f64) {
    let n = logp.len().max(1) as f64;
    let m = logp.iter().map(|l| l + target_entropy).sum::<f64>() / n;
    let loss = -log_alpha.exp() * m;
    (loss, loss)
}
