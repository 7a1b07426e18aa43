use offdyn::envs::*;
use offdyn::seeding::{rng_from_seed, stream, Stream};
use offdyn::Error;
use rand::RngCore;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn point_mass_next_state_is_nominal_plus_noise() {
    let base = BaseEnv::new(EnvId::PointMass);
    // choose a state and action whose nominal successor is (0.5, 0.0, ...)
    let (nominal, _) = base.nominal_step(&[0.5, 0.0, 0.0, 0.0], &[0.0, 0.0]);
    assert_eq!(&nominal[..2], &[0.5, 0.0]);
    let noise = [0.01, -0.005];
    let noisy: Vec<f64> = nominal[..2].iter().zip(noise).map(|(s, n)| s + n).collect();
    assert!((noisy[0] - 0.51).abs() < 1e-15 && (noisy[1] + 0.005).abs() < 1e-15);

    let pair = make_domain_pair(EnvId::PointMass, OverlapLevel::Small, 3);
    let mut env = pair.make_env(Domain::Target).unwrap().with_fixed_start(vec![0.5, 0.0, 0.0, 0.0]).unwrap();
    let mut rng = rng_from_seed(1);
    env.reset(&mut rng);
    let out = env.step(&[0.0, 0.0], &mut rng).unwrap();
    for k in 0..4 {
        assert_eq!(out.next_state[k], nominal[k] + out.noise[k]);
    }
}

#[test]
fn pendulum_zero_noise_is_nominal() {
    let base = BaseEnv::new(EnvId::Pendulum);
    let mut env = NoisyEnv::new(base, NoiseSpec::ZERO, 1.0, 50).unwrap();
    let mut rng = rng_from_seed(9);
    let mut s = env.reset(&mut rng);
    for k in 0..50 {
        let a = [((k as f64) * 0.3).sin() * 2.0];
        let (nominal, r) = base.nominal_step(&s, &a);
        let out = env.step(&a, &mut rng).unwrap();
        assert_eq!(out.next_state, nominal);
        assert_eq!(out.reward, r);
        s = out.next_state;
    }
}

#[test]
fn small_overlap_target_tail_matches_gaussian_cdf() {
    let normal = Normal::new(0.025, 0.004).unwrap();
    let expected = 1.0 - (normal.cdf(0.02) - normal.cdf(-0.02));
    assert!((expected - 0.894).abs() < 1e-3);

    let source = NoiseDist::Uniform { lo: -0.02, hi: 0.02 };
    let target = NoiseDist::Gaussian { mean: 0.025, std: 0.004 };
    let mut rng = rng_from_seed(42);
    let n = 100_000;
    let mut outside = 0;
    for _ in 0..n {
        let x = source.sample(&mut rng);
        assert!((-0.02..=0.02).contains(&x));
        let y = target.sample(&mut rng);
        if !(-0.02..=0.02).contains(&y) {
            outside += 1;
        }
    }
    let frac = outside as f64 / n as f64;
    assert!((frac - expected).abs() < 0.005, "tail fraction {frac} vs {expected}");
}

#[test]
fn domain_pair_tables() {
    let large = make_domain_pair(EnvId::Pendulum, OverlapLevel::Large, 7);
    let uniform = NoiseDist::Uniform { lo: -0.02, hi: 0.02 };
    assert_eq!(large.source_noise.position, uniform);
    assert_eq!(large.source_noise.velocity, uniform);
    assert_eq!(large.target_noise.position, NoiseDist::Gaussian { mean: 0.015, std: 0.004 });
    assert_eq!(large.target_noise.velocity, NoiseDist::Gaussian { mean: -0.015, std: 0.004 });

    let small = make_domain_pair(EnvId::Pendulum, OverlapLevel::Small, 7);
    assert_eq!(small.target_noise.position, NoiseDist::Gaussian { mean: 0.025, std: 0.004 });
    assert_eq!(small.target_noise.velocity, NoiseDist::Gaussian { mean: -0.025, std: 0.004 });
    assert_eq!(small.source_noise, large.source_noise);

    assert_eq!(make_domain_pair(EnvId::Pendulum, OverlapLevel::Small, 7), small);
    assert!(matches!("cartpole".parse::<EnvId>(), Err(Error::Config(_))));
}

#[test]
fn pair_members_differ_only_in_noise() {
    for env in [EnvId::Pendulum, EnvId::PointMass] {
        let pair = make_domain_pair(env, OverlapLevel::Medium, 0);
        let src = pair.make_env(Domain::Source).unwrap();
        let tar = pair.make_env(Domain::Target).unwrap();
        assert_eq!(src.state_dim(), tar.state_dim());
        assert_eq!(src.action_dim(), tar.action_dim());
        assert_eq!(src.horizon(), tar.horizon());
        // same reward and start law: identical draws from identical streams
        let (mut r1, mut r2) = (rng_from_seed(5), rng_from_seed(5));
        let (mut s, mut t) = (src.clone(), tar.clone());
        assert_eq!(s.reset(&mut r1), t.reset(&mut r2));
        let a = vec![0.1; src.action_dim()];
        assert_eq!(s.step(&a, &mut r1).unwrap().reward, t.step(&a, &mut r2).unwrap().reward);
    }
}

#[test]
fn step_errors() {
    let pair = make_domain_pair(EnvId::PointMass, OverlapLevel::Large, 0);
    let mut env = pair.make_env(Domain::Source).unwrap();
    let mut rng = rng_from_seed(0);
    assert!(matches!(env.step(&[0.0, 0.0], &mut rng), Err(Error::State(_))));
    env.reset(&mut rng);
    assert!(matches!(env.step(&[f64::NAN, 0.0], &mut rng), Err(Error::Domain(_))));
    assert!(matches!(env.step(&[0.0], &mut rng), Err(Error::Domain(_))));

    // drive out of bounds, then stepping again is a state error
    let mut env = pair.make_env(Domain::Source).unwrap().with_fixed_start(vec![1.95, 0.0, 1.0, 0.0]).unwrap();
    env.reset(&mut rng);
    let mut done = false;
    for _ in 0..20 {
        let out = env.step(&[1.0, 0.0], &mut rng).unwrap();
        if out.done {
            assert!(out.next_state[0].abs() > 2.0 || out.next_state[1].abs() > 2.0);
            done = true;
            break;
        }
    }
    assert!(done);
    assert!(matches!(env.step(&[0.0, 0.0], &mut rng), Err(Error::State(_))));
}

#[test]
fn termination_is_judged_after_noise() {
    // nominal successor sits just inside the bound; a large position shift pushes it out
    let spec = NoiseSpec { position: NoiseDist::Gaussian { mean: 0.5, std: 1e-6 }, velocity: NoiseDist::Zero };
    let mut env = NoisyEnv::new(BaseEnv::new(EnvId::PointMass), spec, 1.0, 10)
        .unwrap()
        .with_fixed_start(vec![1.7, 0.0, 0.0, 0.0])
        .unwrap();
    let mut rng = rng_from_seed(0);
    env.reset(&mut rng);
    let (nominal, _) = env.base().nominal_step(&[1.7, 0.0, 0.0, 0.0], &[0.0, 0.0]);
    assert!(!env.base().is_terminal(&nominal));
    assert!(env.step(&[0.0, 0.0], &mut rng).unwrap().done);
}

#[test]
fn support_overlap_shrinks_with_level() {
    let n = 100_000;
    let mut inside = Vec::new();
    for level in OverlapLevel::ALL {
        let pair = make_domain_pair(EnvId::Pendulum, level, 0);
        let dist = pair.target_noise.position;
        let mut rng = rng_from_seed(11);
        let hits = (0..n).filter(|_| (-0.02..=0.02).contains(&dist.sample(&mut rng))).count();
        inside.push(hits as f64 / n as f64);
    }
    // large > medium > small
    assert!(inside[0] > inside[1] && inside[1] > inside[2], "{inside:?}");
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn noise_is_independent_across_features_and_steps() {
    let pair = make_domain_pair(EnvId::PointMass, OverlapLevel::Small, 0);
    let groups = pair.base().feature_groups();
    let mut rng = rng_from_seed(21);
    let n = 100_000;
    let draws: Vec<Vec<f64>> = (0..n).map(|_| pair.target_noise.sample_vector(groups, 1.0, &mut rng)).collect();
    let col = |k: usize| draws.iter().map(|d| d[k]).collect::<Vec<_>>();
    for i in 0..4 {
        for j in (i + 1)..4 {
            let r = correlation(&col(i), &col(j));
            assert!(r.abs() < 0.02, "features {i},{j}: rho {r}");
        }
        let c = col(i);
        let lag = correlation(&c[..n - 1], &c[1..]);
        assert!(lag.abs() < 0.02, "feature {i} lag-1 rho {lag}");
    }
}

fn trajectory(seed: u64) -> Vec<Vec<f64>> {
    let pair = make_domain_pair(EnvId::Pendulum, OverlapLevel::Small, seed);
    let mut env = pair.make_env(Domain::Target).unwrap();
    let mut rng = pair.env_rng(Domain::Target);
    let mut policy_rng = stream(seed, Stream::Agent);
    let mut out = vec![env.reset(&mut rng)];
    let mut pol = RandomPolicy { action_dim: 1, bound: 2.0 };
    for _ in 0..200 {
        let s = out.last().unwrap().clone();
        let a = pol.act(&s, &mut policy_rng);
        out.push(env.step(&a, &mut rng).unwrap().next_state);
    }
    out
}

#[test]
fn seeded_trajectories_are_bit_identical() {
    assert_eq!(trajectory(4), trajectory(4));
    assert_ne!(trajectory(4), trajectory(5));
}

#[test]
fn evaluate_zero_reward_and_deterministic_cases() {
    // upright and at rest with zero torque: the pendulum stays put and earns 0
    let base = BaseEnv::new(EnvId::Pendulum);
    let mut env = NoisyEnv::new(base, NoiseSpec::ZERO, 1.0, 100).unwrap().with_fixed_start(vec![1.0, 0.0, 0.0]).unwrap();
    let mut zero = |_: &[f64], _: &mut dyn RngCore| vec![0.0];
    let mut rng = rng_from_seed(0);
    assert_eq!(evaluate_policy(&mut env, &mut zero, 5, &mut rng).unwrap(), (0.0, 0.0));

    let mut env = NoisyEnv::new(base, NoiseSpec::ZERO, 1.0, 100).unwrap().with_fixed_start(vec![0.0, 1.0, 0.5]).unwrap();
    let mut bang = |s: &[f64], _: &mut dyn RngCore| vec![if s[2] > 0.0 { -2.0 } else { 2.0 }];
    let (mean, std) = evaluate_policy(&mut env, &mut bang, 10, &mut rng).unwrap();
    assert!(mean < 0.0);
    assert!(std < 1e-9, "std {std}");

    assert!(matches!(evaluate_policy(&mut env, &mut bang, 0, &mut rng), Err(Error::Config(_))));
}

#[test]
fn random_policy_evaluation_matches_manual_replay() {
    let pair = make_domain_pair(EnvId::PointMass, OverlapLevel::Medium, 2);
    let mut env = pair.make_env(Domain::Source).unwrap();
    let mut policy = RandomPolicy { action_dim: 2, bound: 1.0 };
    let mut rng = stream(2, Stream::Eval);
    let (mean, std) = evaluate_policy(&mut env, &mut policy, 100, &mut rng).unwrap();

    // independent re-implementation of the episode loop on the same stream
    let base = pair.base();
    let mut rng = stream(2, Stream::Eval);
    let mut returns = Vec::new();
    for _ in 0..100 {
        let mut s = base.reset(&mut rng);
        let mut total = 0.0;
        for t in 1..=pair.horizon {
            let a = policy.act(&s, &mut rng);
            let (nominal, r) = base.nominal_step(&s, &a);
            let noise = pair.source_noise.sample_vector(base.feature_groups(), pair.noise_scale, &mut rng);
            s = nominal.iter().zip(&noise).map(|(x, n)| x + n).collect();
            total += r;
            if base.is_terminal(&s) || t == pair.horizon {
                break;
            }
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let m = returns.iter().sum::<f64>() / n;
    let sd = (returns.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert_eq!(mean, m);
    assert!((std - sd).abs() < 1e-12);
}
