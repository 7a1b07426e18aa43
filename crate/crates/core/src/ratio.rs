//! Density-ratio estimation between two domains with a pair of binary
//! classifiers, and the reward increment built from it.
//!
//! `q_sas` separates domains from `(s, a, s')`, `q_sa` from `(s, a)`. With
//! label 1 for domain B (the target) and 0 for domain A,
//!
//! ```text
//! log P_B(s'|s,a) / P_A(s'|s,a) = logodds_B(s,a,s') - logodds_B(s,a)
//! ```
//!
//! where each log-odds term is clamped to `[-logit_clip, logit_clip]`.
//! The same construction serves as the source/target ratio that drives
//! priorities and, trained on modified-source vs target data, as `Δr`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::approximator::{Adam, AdamConfig, Mlp, OutputActivation};
use crate::error::{Error, Result};
use crate::skew::Transition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Std of Gaussian noise added to standardized inputs during training.
    pub input_noise_std: f64,
    /// Bound on each log-odds term.
    pub logit_clip: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { hidden: vec![32, 32], lr: 3e-4, input_noise_std: 1.0, logit_clip: 10.0 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::config("classifier hidden widths must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("classifier learning rate must be positive"));
        }
        if !(self.input_noise_std >= 0.0 && self.input_noise_std.is_finite()) {
            return Err(Error::config("classifier input noise std must be >= 0"));
        }
        if !(self.logit_clip > 0.0 && self.logit_clip.is_finite()) {
            return Err(Error::config("logit clip must be positive"));
        }
        Ok(())
    }
}

/// Per-feature running mean and variance (parallel Welford merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn update(&mut self, rows: ArrayView2<f64>) {
        let n = rows.nrows() as f64;
        if n == 0.0 {
            return;
        }
        let batch_mean = rows.mean_axis(Axis(0)).unwrap();
        let total = self.count + n;
        for j in 0..self.mean.len() {
            let col = rows.column(j);
            let bm = batch_mean[j];
            let bm2: f64 = col.iter().map(|x| (x - bm).powi(2)).sum();
            let delta = bm - self.mean[j];
            self.m2[j] += bm2 + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
        }
        self.count = total;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> Vec<f64> {
        if self.count < 2.0 {
            return vec![1.0; self.mean.len()];
        }
        self.m2.iter().map(|m| (m / self.count + 1e-8).sqrt()).collect()
    }

    pub fn normalize(&self, x: &mut Array2<f64>) {
        let std = self.std();
        for mut row in x.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / std[j];
            }
        }
    }
}

/// Mean softmax cross-entropy of two-way logits against 0/1 labels, with the
/// parameter gradient of `net`. Runs a caching forward pass on `x`.
pub fn cross_entropy_loss_and_grad(net: &mut Mlp, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    if x.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::input("labels must match a non-empty batch"));
    }
    let logits = net.forward_train(x)?;
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let (l0, l1) = (row[0], row[1]);
        let m = l0.max(l1);
        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
        let p1 = (l1 - lse).exp();
        let y = labels[i];
        loss -= if y == 1 { l1 - lse } else { l0 - lse };
        grad[[i, 0]] = ((1.0 - p1) - if y == 0 { 1.0 } else { 0.0 }) / n;
        grad[[i, 1]] = (p1 - if y == 1 { 1.0 } else { 0.0 }) / n;
    }
    let (g, _) = net.backward(grad.view())?;
    Ok((loss / n, g))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierPair {
    q_sas: Mlp,
    q_sa: Mlp,
    opt_sas: Adam,
    opt_sa: Adam,
    norm_sas: RunningNorm,
    norm_sa: RunningNorm,
    state_dim: usize,
    action_dim: usize,
    input_noise_std: f64,
    logit_clip: f64,
    steps: u64,
}

fn stack_rows<'a, I>(rows: I, width: usize) -> Array2<f64>
where
    I: Iterator<Item = Vec<&'a [f64]>>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for parts in rows {
        for p in parts {
            data.extend_from_slice(p);
        }
        n += 1;
    }
    Array2::from_shape_vec((n, width), data).expect("row widths are consistent")
}

impl ClassifierPair {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, config: &ClassifierConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let sas_in = 2 * state_dim + action_dim;
        let sa_in = state_dim + action_dim;
        let widths = |input: usize| {
            let mut w = vec![input];
            w.extend(&config.hidden);
            w.push(2);
            w
        };
        let q_sas = Mlp::new(&widths(sas_in), OutputActivation::Identity, rng)?;
        let q_sa = Mlp::new(&widths(sa_in), OutputActivation::Identity, rng)?;
        Self::with_networks(q_sas, q_sa, state_dim, action_dim, config)
    }

    /// Wrap existing networks (`q_sas` over `(s, a, s')`, `q_sa` over `(s, a)`, both with two outputs).
    pub fn with_networks(q_sas: Mlp, q_sa: Mlp, state_dim: usize, action_dim: usize, config: &ClassifierConfig) -> Result<Self> {
        config.validate()?;
        if q_sas.input_dim() != 2 * state_dim + action_dim || q_sa.input_dim() != state_dim + action_dim {
            return Err(Error::config("classifier input widths do not match state/action dims"));
        }
        if q_sas.output_dim() != 2 || q_sa.output_dim() != 2 {
            return Err(Error::config("classifiers must have two logits"));
        }
        let adam = AdamConfig { lr: config.lr, ..AdamConfig::default() };
        Ok(Self {
            opt_sas: Adam::new(q_sas.num_params(), adam),
            opt_sa: Adam::new(q_sa.num_params(), adam),
            norm_sas: RunningNorm::new(q_sas.input_dim()),
            norm_sa: RunningNorm::new(q_sa.input_dim()),
            q_sas,
            q_sa,
            state_dim,
            action_dim,
            input_noise_std: config.input_noise_std,
            logit_clip: config.logit_clip,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn logit_clip(&self) -> f64 {
        self.logit_clip
    }

    pub fn q_sas(&self) -> &Mlp {
        &self.q_sas
    }

    pub fn q_sa(&self) -> &Mlp {
        &self.q_sa
    }

    fn sas_inputs(&self, batch: &[&Transition]) -> Array2<f64> {
        stack_rows(batch.iter().map(|t| vec![&t.s[..], &t.a[..], &t.s_next[..]]), 2 * self.state_dim + self.action_dim)
    }

    fn sa_inputs(&self, batch: &[&Transition]) -> Array2<f64> {
        stack_rows(batch.iter().map(|t| vec![&t.s[..], &t.a[..]]), self.state_dim + self.action_dim)
    }

    fn check_batch(&self, batch: &[&Transition]) -> Result<()> {
        for t in batch {
            if t.s.len() != self.state_dim || t.s_next.len() != self.state_dim || t.a.len() != self.action_dim {
                return Err(Error::input("transition shape does not match the classifier"));
            }
            if !t.is_finite() {
                return Err(Error::input("non-finite transition"));
            }
        }
        Ok(())
    }

    /// One cross-entropy step on both classifiers; domain A gets label 0,
    /// domain B label 1. Returns the mean of the two classifiers' losses.
    pub fn train_step<R: Rng + ?Sized>(&mut self, batch_a: &[&Transition], batch_b: &[&Transition], rng: &mut R) -> Result<f64> {
        if batch_a.is_empty() || batch_b.is_empty() {
            return Err(Error::input("classifier training needs both domains"));
        }
        self.check_batch(batch_a)?;
        self.check_batch(batch_b)?;
        let all: Vec<&Transition> = batch_a.iter().chain(batch_b).copied().collect();
        let labels: Vec<usize> = std::iter::repeat_n(0, batch_a.len()).chain(std::iter::repeat_n(1, batch_b.len())).collect();

        let mut x_sas = self.sas_inputs(&all);
        let mut x_sa = self.sa_inputs(&all);
        self.norm_sas.update(x_sas.view());
        self.norm_sa.update(x_sa.view());
        self.norm_sas.normalize(&mut x_sas);
        self.norm_sa.normalize(&mut x_sa);
        if self.input_noise_std > 0.0 {
            for x in [&mut x_sas, &mut x_sa] {
                x.mapv_inplace(|v| {
                    let e: f64 = StandardNormal.sample(rng);
                    v + self.input_noise_std * e
                });
            }
        }

        let (loss_sas, g_sas) = cross_entropy_loss_and_grad(&mut self.q_sas, x_sas.view(), &labels)?;
        let (loss_sa, g_sa) = cross_entropy_loss_and_grad(&mut self.q_sa, x_sa.view(), &labels)?;
        self.q_sas.clear_cache();
        self.q_sa.clear_cache();
        self.opt_sas.step(self.q_sas.params_mut(), &g_sas)?;
        self.opt_sa.step(self.q_sa.params_mut(), &g_sa)?;
        self.steps += 1;
        Ok(0.5 * (loss_sas + loss_sa))
    }

    fn clamped_log_odds(&self, logits: &Array2<f64>) -> Vec<f64> {
        let c = self.logit_clip;
        logits.rows().into_iter().map(|r| (r[1] - r[0]).clamp(-c, c)).collect()
    }

    /// `log P_B(s'|s,a) - log P_A(s'|s,a)` for every transition in `batch`,
    /// computed without input noise.
    pub fn log_ratio_batch(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let mut x_sas = self.sas_inputs(batch);
        let mut x_sa = self.sa_inputs(batch);
        self.norm_sas.normalize(&mut x_sas);
        self.norm_sa.normalize(&mut x_sa);
        let lo_sas = self.clamped_log_odds(&self.q_sas.forward(x_sas.view())?);
        let lo_sa = self.clamped_log_odds(&self.q_sa.forward(x_sa.view())?);
        Ok(lo_sas.iter().zip(&lo_sa).map(|(a, b)| a - b).collect())
    }

    pub fn log_ratio(&self, s: &[f64], a: &[f64], s_next: &[f64]) -> Result<f64> {
        let t = Transition::new(s.to_vec(), a.to_vec(), 0.0, s_next.to_vec(), false);
        Ok(self.log_ratio_batch(&[&t])?[0])
    }

    /// Probability of domain B from the `(s, a, s')` classifier, without noise.
    pub fn prob_b_sas(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let mut x = self.sas_inputs(batch);
        self.norm_sas.normalize(&mut x);
        let logits = self.q_sas.forward(x.view())?;
        Ok(logits.rows().into_iter().map(|r| 1.0 / (1.0 + (r[0] - r[1]).exp())).collect())
    }

    /// The same pair with the two output heads exchanged, i.e. domains A and B relabeled.
    pub fn swapped_labels(&self) -> Self {
        fn swap_heads(net: &Mlp) -> Mlp {
            let widths = net.widths().to_vec();
            let mut params = net.params().to_vec();
            let n_in = widths[widths.len() - 2];
            let off = params.len() - (n_in * 2 + 2);
            for row in 0..n_in {
                params.swap(off + 2 * row, off + 2 * row + 1);
            }
            let b = params.len() - 2;
            params.swap(b, b + 1);
            Mlp::from_params(&widths, net.output_activation(), params).expect("same shape")
        }
        let mut out = self.clone();
        out.q_sas = swap_heads(&self.q_sas);
        out.q_sa = swap_heads(&self.q_sa);
        out
    }
}

/// Estimated `log P_tar(s'|s,a) - log P_src(s'|s,a)` from a source-vs-target pair.
pub fn log_dynamics_ratio(pair: &ClassifierPair, s: &[f64], a: &[f64], s_next: &[f64]) -> Result<f64> {
    pair.log_ratio(s, a, s_next)
}

/// Reward increment `log P_tar - log P_msrc` from a modified-source-vs-target pair.
pub fn delta_r(pair_modified: &ClassifierPair, s: &[f64], a: &[f64], s_next: &[f64]) -> Result<f64> {
    pair_modified.log_ratio(s, a, s_next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    fn zero_head_pair() -> ClassifierPair {
        let mut rng = rng_from_seed(0);
        let cfg = ClassifierConfig::default();
        let mut sas = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng).unwrap();
        let mut sa = Mlp::new(&[2, 4, 2], OutputActivation::Identity, &mut rng).unwrap();
        for net in [&mut sas, &mut sa] {
            let n = net.num_params();
            // last layer: 4x2 weights + 2 biases
            net.params_mut()[n - 10..].iter_mut().for_each(|p| *p = 0.0);
        }
        ClassifierPair::with_networks(sas, sa, 1, 1, &cfg).unwrap()
    }

    #[test]
    fn uninformative_classifier_gives_zero() {
        let pair = zero_head_pair();
        assert_eq!(log_dynamics_ratio(&pair, &[0.3], &[-1.0], &[2.0]).unwrap(), 0.0);
        assert_eq!(delta_r(&pair, &[5.0], &[0.0], &[-2.0]).unwrap(), 0.0);
    }

    #[test]
    fn label_swap_negates() {
        let mut rng = rng_from_seed(4);
        let pair = ClassifierPair::new(2, 1, &ClassifierConfig::default(), &mut rng).unwrap();
        let swapped = pair.swapped_labels();
        for k in 0..10 {
            let x = k as f64 * 0.37 - 1.0;
            let (s, a, s2) = ([x, -x], [0.5 * x], [x * x, 1.0]);
            let l = pair.log_ratio(&s, &a, &s2).unwrap();
            let m = swapped.log_ratio(&s, &a, &s2).unwrap();
            assert!((l + m).abs() < 1e-12);
        }
    }

    #[test]
    fn output_is_clamped() {
        let mut rng = rng_from_seed(1);
        let cfg = ClassifierConfig { logit_clip: 0.5, ..ClassifierConfig::default() };
        let mut pair = ClassifierPair::new(1, 1, &cfg, &mut rng).unwrap();
        // blow up the output weights
        let n = pair.q_sas.num_params();
        pair.q_sas.params_mut()[n - 66..].iter_mut().for_each(|p| *p *= 1e4);
        for k in 0..20 {
            let x = k as f64 - 10.0;
            let l = pair.log_ratio(&[x], &[x], &[-x]).unwrap();
            assert!(l.abs() <= 2.0 * 0.5 + 1e-12);
        }
    }

    #[test]
    fn training_errors() {
        let mut rng = rng_from_seed(2);
        let mut pair = ClassifierPair::new(1, 1, &ClassifierConfig::default(), &mut rng).unwrap();
        let t = Transition::new(vec![0.0], vec![0.0], 0.0, vec![0.0], false);
        assert!(matches!(pair.train_step(&[], &[&t], &mut rng), Err(Error::Input(_))));
        let bad = Transition::new(vec![f64::NAN], vec![0.0], 0.0, vec![0.0], false);
        assert!(pair.train_step(&[&bad], &[&t], &mut rng).is_err());
        assert!(pair.log_ratio(&[f64::INFINITY], &[0.0], &[0.0]).is_err());
        let wrong = Transition::new(vec![0.0, 1.0], vec![0.0], 0.0, vec![0.0, 1.0], false);
        assert!(pair.log_ratio_batch(&[&wrong]).is_err());
    }

    #[test]
    fn running_norm_matches_batch_statistics() {
        let mut norm = RunningNorm::new(2);
        let a = ndarray::array![[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]];
        let b = ndarray::array![[4.0, 40.0], [5.0, 50.0]];
        norm.update(a.view());
        norm.update(b.view());
        assert!((norm.mean()[0] - 3.0).abs() < 1e-12);
        assert!((norm.mean()[1] - 30.0).abs() < 1e-12);
        let std = norm.std();
        assert!((std[0] - 2f64.sqrt()).abs() < 1e-6);
        assert!((std[1] - 200f64.sqrt()).abs() < 1e-6);
    }
}
