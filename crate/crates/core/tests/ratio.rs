use ndarray::Array2;
use offdyn::approximator::{Mlp, OutputActivation};
use offdyn::ratio::*;
use offdyn::seeding::rng_from_seed;
use offdyn::skew::Transition;
use offdyn::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn noiseless() -> ClassifierConfig {
    ClassifierConfig { input_noise_std: 0.0, ..ClassifierConfig::default() }
}

/// Exact posterior for s' = s + x with x ~ N(0,1) (A) vs N(1,1) (B):
/// logits [0, x - 1/2] on the (s, a, s') net and zero on the (s, a) net.
fn bayes_pair() -> ClassifierPair {
    let q_sas = Mlp::from_params(&[3, 2], OutputActivation::Identity, vec![0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.5]).unwrap();
    let q_sa = Mlp::from_params(&[2, 2], OutputActivation::Identity, vec![0.0; 6]).unwrap();
    ClassifierPair::with_networks(q_sas, q_sa, 1, 1, &ClassifierConfig::default()).unwrap()
}

#[test]
fn bayes_pair_gives_analytic_ratio() {
    let pair = bayes_pair();
    assert!(log_dynamics_ratio(&pair, &[0.3], &[0.1], &[0.8]).unwrap().abs() < 1e-15);
    for x in [-1.0, 0.0, 0.5, 1.7] {
        let s = 0.4;
        let lr = log_dynamics_ratio(&pair, &[s], &[0.0], &[s + x]).unwrap();
        assert!((lr - (x - 0.5)).abs() < 1e-12);
        // closed-form Gaussian log-density difference
        let analytic = -0.5 * (x - 1.0f64).powi(2) + 0.5 * x * x;
        assert!((lr - analytic).abs() < 1e-12);
        let swapped = pair.swapped_labels();
        assert!((log_dynamics_ratio(&swapped, &[s], &[0.0], &[s + x]).unwrap() + lr).abs() < 1e-12);
        // more likely under B than A exactly when x > 1/2
        assert_eq!(delta_r(&pair, &[s], &[0.0], &[s + x]).unwrap() > 0.0, x > 0.5);
    }
}

#[test]
fn constant_half_classifier_is_zero() {
    let mut rng = rng_from_seed(0);
    let zero = |w: &[usize]| {
        let n: usize = w.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        Mlp::from_params(w, OutputActivation::Identity, vec![0.0; n]).unwrap()
    };
    let pair = ClassifierPair::with_networks(zero(&[5, 8, 2]), zero(&[3, 8, 2]), 2, 1, &ClassifierConfig::default()).unwrap();
    for _ in 0..20 {
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        assert_eq!(delta_r(&pair, &v[..2], &v[2..3], &v[3..]).unwrap(), 0.0);
    }
}

#[test]
fn errors_and_clamp() {
    let mut rng = rng_from_seed(1);
    let mut pair = ClassifierPair::new(1, 1, &ClassifierConfig::default(), &mut rng).unwrap();
    let t = Transition::new(vec![0.0], vec![0.0], 0.0, vec![1.0], false);
    assert!(matches!(pair.train_step(&[], &[&t], &mut rng), Err(Error::Input(_))));
    assert!(matches!(log_dynamics_ratio(&pair, &[f64::NAN], &[0.0], &[0.0]), Err(Error::Input(_))));
    assert!(matches!(log_dynamics_ratio(&pair, &[0.0, 1.0], &[0.0], &[0.0]), Err(Error::Input(_))));
    let bad = ClassifierConfig { logit_clip: 0.0, ..ClassifierConfig::default() };
    assert!(matches!(ClassifierPair::new(1, 1, &bad, &mut rng), Err(Error::Config(_))));

    // a steep net saturates both terms
    let q_sas = Mlp::from_params(&[3, 2], OutputActivation::Identity, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1e3, 0.0, 0.0]).unwrap();
    let q_sa = Mlp::from_params(&[2, 2], OutputActivation::Identity, vec![0.0, -1e3, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let steep = ClassifierPair::with_networks(q_sas, q_sa, 1, 1, &ClassifierConfig::default()).unwrap();
    assert_eq!(log_dynamics_ratio(&steep, &[1.0], &[0.0], &[5.0]).unwrap(), 20.0);
    assert_eq!(log_dynamics_ratio(&steep, &[-1.0], &[0.0], &[-5.0]).unwrap(), -20.0);
}

fn gaussian_domain(rng: &mut ChaCha8Rng, n: usize, shift: &[f64]) -> Vec<Transition> {
    let std = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let s: Vec<f64> = shift.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = vec![rng.random_range(-1.0..1.0)];
            let s2 = s.iter().zip(shift).map(|(x, m)| x + m + std.sample(rng)).collect();
            Transition::new(s, a, 0.0, s2, false)
        })
        .collect()
}

fn train_on_gaussians(shift: &[f64], steps: usize, seed: u64) -> ClassifierPair {
    let mut rng = rng_from_seed(seed);
    let zero = vec![0.0; shift.len()];
    let mut pair = ClassifierPair::new(shift.len(), 1, &noiseless(), &mut rng).unwrap();
    for _ in 0..steps {
        let a = gaussian_domain(&mut rng, 128, &zero);
        let b = gaussian_domain(&mut rng, 128, shift);
        let (ra, rb): (Vec<&Transition>, Vec<&Transition>) = (a.iter().collect(), b.iter().collect());
        pair.train_step(&ra, &rb, &mut rng).unwrap();
    }
    pair
}

/// MAE against `x·μ - |μ|²/2` over noise draws x in the central 90% of the
/// mixture of the two domains.
fn recovery_mae(pair: &ClassifierPair, shift: &[f64], seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let half = shift.iter().map(|m| m * m).sum::<f64>() / 2.0;
    let norm = half.sqrt() * 2f64.sqrt();
    let mut errs = Vec::new();
    while errs.len() < 2000 {
        let s: Vec<f64> = shift.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let from_b = rng.random_bool(0.5);
        let x: Vec<f64> = shift.iter().map(|m| if from_b { *m } else { 0.0 } + std.sample(&mut rng)).collect();
        // projection onto the shift direction, centered at the midpoint
        let z = (x.iter().zip(shift).map(|(a, m)| a * m).sum::<f64>() - half) / norm;
        if z.abs() > 1.4 {
            continue;
        }
        let s2: Vec<f64> = s.iter().zip(&x).map(|(a, b)| a + b).collect();
        let truth = x.iter().zip(shift).map(|(a, m)| a * m).sum::<f64>() - half;
        errs.push((pair.log_ratio(&s, &[rng.random_range(-1.0..1.0)], &s2).unwrap() - truth).abs());
    }
    errs.iter().sum::<f64>() / errs.len() as f64
}

#[test]
fn recovers_one_dimensional_gaussian_ratio() {
    let pair = train_on_gaussians(&[1.0], 2000, 7);
    let mae = recovery_mae(&pair, &[1.0], 8);
    assert!(mae < 0.3, "mae {mae}");
    // near the crossing point the ratio is about zero
    assert!(log_dynamics_ratio(&pair, &[0.0], &[0.0], &[0.5]).unwrap().abs() < 0.3);
}

#[test]
fn recovers_two_dimensional_gaussian_ratio() {
    let shift = [1.0, -0.5];
    let pair = train_on_gaussians(&shift, 2000, 9);
    let mae = recovery_mae(&pair, &shift, 10);
    assert!(mae < 0.3, "mae {mae}");
}

fn uniform_domain(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<Transition> {
    (0..n)
        .map(|_| {
            let s = rng.random_range(-1.0..1.0);
            Transition::new(vec![s], vec![0.0], 0.0, vec![rng.random_range(lo..hi)], false)
        })
        .collect()
}

#[test]
fn separable_domains_are_learned() {
    let mut rng = rng_from_seed(11);
    // training noise of std 1 would make the standardized classes overlap
    let mut pair = ClassifierPair::new(1, 1, &noiseless(), &mut rng).unwrap();
    let mut last = f64::INFINITY;
    for _ in 0..3000 {
        let a = uniform_domain(&mut rng, 64, -3.0, -1.5);
        let b = uniform_domain(&mut rng, 64, 1.5, 3.0);
        let (ra, rb): (Vec<&Transition>, Vec<&Transition>) = (a.iter().collect(), b.iter().collect());
        last = pair.train_step(&ra, &rb, &mut rng).unwrap();
    }
    // the (s, a) half of the loss is irreducible at ln 2, so the pair mean tends to ln 2 / 2
    let floor = 0.5 * std::f64::consts::LN_2;
    assert!(last - floor < 0.1, "loss {last}");
    let held_a = uniform_domain(&mut rng, 500, -3.0, -1.5);
    let held_b = uniform_domain(&mut rng, 500, 1.5, 3.0);
    let pa = pair.prob_b_sas(&held_a.iter().collect::<Vec<_>>()).unwrap();
    let pb = pair.prob_b_sas(&held_b.iter().collect::<Vec<_>>()).unwrap();
    let correct = pa.iter().filter(|p| **p < 0.5).count() + pb.iter().filter(|p| **p > 0.5).count();
    assert_eq!(correct, 1000);

    // the (s, a, s') classifier alone has vanishing loss
    let all: Vec<&Transition> = held_a.iter().chain(&held_b).collect();
    let probs = pair.prob_b_sas(&all).unwrap();
    let ce: f64 = probs.iter().enumerate().map(|(i, p)| if i < 500 { -(1.0 - p).ln() } else { -p.ln() }).sum::<f64>() / 1000.0;
    assert!(ce < 0.05, "sas cross-entropy {ce}");
}

#[test]
fn indistinguishable_domains_settle_at_ln2() {
    let mut rng = rng_from_seed(12);
    let mut pair = ClassifierPair::new(1, 1, &ClassifierConfig::default(), &mut rng).unwrap();
    let mut tail = Vec::new();
    for step in 0..2000 {
        let a = gaussian_domain(&mut rng, 128, &[0.0]);
        let b = gaussian_domain(&mut rng, 128, &[0.0]);
        let (ra, rb): (Vec<&Transition>, Vec<&Transition>) = (a.iter().collect(), b.iter().collect());
        let loss = pair.train_step(&ra, &rb, &mut rng).unwrap();
        if step >= 1500 {
            tail.push(loss);
        }
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!((mean - std::f64::consts::LN_2).abs() < 0.01, "loss {mean}");
}

#[test]
fn one_step_descends_on_a_fixed_batch() {
    let mut rng = rng_from_seed(13);
    let a = gaussian_domain(&mut rng, 128, &[0.0]);
    let b = gaussian_domain(&mut rng, 128, &[1.0]);
    let (ra, rb): (Vec<&Transition>, Vec<&Transition>) = (a.iter().collect(), b.iter().collect());
    for seed in 0..5 {
        let mut pair = ClassifierPair::new(1, 1, &noiseless(), &mut rng_from_seed(100 + seed)).unwrap();
        let before = pair.train_step(&ra, &rb, &mut rng).unwrap();
        // same data twice leaves the running statistics unchanged
        let after = pair.train_step(&ra, &rb, &mut rng).unwrap();
        assert!(after < before, "{after} >= {before}");
    }
}

#[test]
fn inference_is_deterministic_and_noise_only_in_training() {
    let mut rng = rng_from_seed(14);
    let mut pair = ClassifierPair::new(2, 1, &ClassifierConfig::default(), &mut rng).unwrap();
    let a = gaussian_domain(&mut rng, 64, &[0.0, 0.0]);
    let b = gaussian_domain(&mut rng, 64, &[0.5, 0.5]);
    let (ra, rb): (Vec<&Transition>, Vec<&Transition>) = (a.iter().collect(), b.iter().collect());
    pair.train_step(&ra, &rb, &mut rng).unwrap();
    let q1 = pair.log_ratio_batch(&ra).unwrap();
    let q2 = pair.log_ratio_batch(&ra).unwrap();
    assert_eq!(q1, q2);
    // two training runs that differ only in the noise stream diverge
    let (mut p1, mut p2) = (pair.clone(), pair.clone());
    p1.train_step(&ra, &rb, &mut rng_from_seed(1)).unwrap();
    p2.train_step(&ra, &rb, &mut rng_from_seed(2)).unwrap();
    assert_ne!(p1.q_sas().params(), p2.q_sas().params());
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(15);
    let mut net = Mlp::new(&[3, 8, 8, 2], OutputActivation::Identity, &mut rng).unwrap();
    let x = Array2::from_shape_fn((10, 3), |_| rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
    let (loss, grads) = cross_entropy_loss_and_grad(&mut net, x.view(), &labels).unwrap();
    let h = 1e-5;
    for k in 0..net.num_params() {
        let (mut p, mut m) = (net.clone(), net.clone());
        p.params_mut()[k] += h;
        m.params_mut()[k] -= h;
        let fd = (cross_entropy_loss_and_grad(&mut p, x.view(), &labels).unwrap().0
            - cross_entropy_loss_and_grad(&mut m, x.view(), &labels).unwrap().0)
            / (2.0 * h);
        let scale = grads[k].abs().max(fd.abs());
        assert!((grads[k] - fd).abs() <= 1e-4 * scale + 1e-9, "param {k}: {} vs {fd}", grads[k]);
    }
    assert!(loss > 0.0);
}

#[test]
fn running_norm_matches_batch_statistics() {
    let mut rng = rng_from_seed(16);
    let data = Array2::from_shape_fn((300, 2), |(_, j)| rng.random_range(-1.0..1.0) * (j as f64 + 1.0) + 3.0);
    let mut norm = RunningNorm::new(2);
    for chunk in data.axis_chunks_iter(ndarray::Axis(0), 37) {
        norm.update(chunk);
    }
    for j in 0..2 {
        let col = data.column(j);
        let mean = col.sum() / 300.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 300.0;
        assert!((norm.mean()[j] - mean).abs() < 1e-12);
        assert!((norm.std()[j] - (var + 1e-8).sqrt()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clamp_and_antisymmetry(seed in any::<u64>(), clip in 0.5..10.0f64) {
        let mut rng = rng_from_seed(seed);
        let cfg = ClassifierConfig { logit_clip: clip, ..ClassifierConfig::default() };
        let pair = ClassifierPair::new(2, 1, &cfg, &mut rng).unwrap();
        let swapped = pair.swapped_labels();
        for _ in 0..10 {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-50.0..50.0)).collect();
            let r = log_dynamics_ratio(&pair, &v[..2], &v[2..3], &v[3..]).unwrap();
            prop_assert!(r.is_finite() && r.abs() <= 2.0 * clip);
            let w = log_dynamics_ratio(&swapped, &v[..2], &v[2..3], &v[3..]).unwrap();
            prop_assert!((r + w).abs() < 1e-9);
        }
    }
}
