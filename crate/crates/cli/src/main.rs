use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use offdyn::agent::Method;
use offdyn::envs::OverlapLevel;
use offdyn::harness::{
    aggregate, run_ablation_suite, run_experiment, verify_bounds, AblationSuite, Checkpoint, ExperimentConfig,
    InstanceSizes, SupportKind, TELESCOPING_TOL,
};

#[derive(Parser)]
#[command(name = "offdyn", version, about = "Off-dynamics RL experiments and tabular bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a configuration and write eval.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        overlap: Option<OverlapLevel>,
        /// Run directory (default: runs/<method>_<env>_<overlap>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand a configuration into an ablation grid and run it.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        suite: AblationSuite,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the performance-gap bounds on random tabular MDP pairs.
    VerifyBounds {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-instance results here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate a saved policy on its target domain.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { config, seed, method, overlap, out } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.experiment.seeds = vec![s];
            }
            if let Some(m) = method {
                cfg.experiment.method = m;
            }
            if let Some(o) = overlap {
                cfg.experiment.overlap = o;
            }
            cfg.validate()?;
            let e = &cfg.experiment;
            let dir = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}_{}_{}", e.method, e.env, e.overlap)));
            let res = run_experiment(&cfg, Some(&dir))?;
            for p in aggregate(&res.records).iter().filter(|p| p.step == cfg.experiment.total_steps) {
                println!("{} final return {:.2} ± {:.2} over {} seeds", p.method, p.mean, p.std, p.n_seeds);
            }
            println!("wrote {}", dir.join("eval.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate { config, suite, out } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let dir = out.unwrap_or_else(|| PathBuf::from(format!("runs/ablate_{suite}")));
            for (label, res) in run_ablation_suite(&cfg, suite, Some(&dir))? {
                let last = cfg.experiment.total_steps;
                if let Some(p) = aggregate(&res.records).iter().find(|p| p.step == last) {
                    println!("{label}: final return {:.2} ± {:.2}", p.mean, p.std);
                }
            }
            println!("wrote {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyBounds { instances, seed, csv } => {
            let report = verify_bounds(instances, &InstanceSizes::default(), seed)?;
            println!("{:>4} {:>9} {:>3} {:>3} {:>5} {:>12} {:>12} {:>9}", "id", "kind", "S", "A", "gamma", "gap", "bound", "gap/bound");
            for (k, i) in report.instances.iter().enumerate() {
                let kind = match i.kind {
                    SupportKind::Full => "full",
                    SupportKind::Deficient => "deficient",
                };
                let flag = if i.violated { "  VIOLATED" } else { "" };
                println!(
                    "{k:>4} {kind:>9} {:>3} {:>3} {:>5} {:>12.4e} {:>12.4e} {:>9.4}{flag}",
                    i.n_states,
                    i.n_actions,
                    i.gamma,
                    i.gap,
                    i.bound,
                    i.tightness()
                );
            }
            println!();
            println!("full-support violations:      {}", report.full_violations);
            println!("deficient-support violations: {}", report.deficient_violations);
            println!("missing deficiency terms:     {}", report.term_b_missing);
            println!(
                "max telescoping error:        {:.3e} (tolerance {TELESCOPING_TOL:e})",
                report.max_telescoping_error
            );
            println!("mean gap/bound (full):        {:.4}", report.mean_tightness_full);
            println!("mean gap/bound (deficient):   {:.4}", report.mean_tightness_deficient);
            if let Some(path) = csv {
                std::fs::write(&path, report.to_csv()?)?;
            }
            Ok(if report.violations() == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Eval { checkpoint, episodes } => {
            let ck = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let (mean, std) = ck.evaluate(episodes)?;
            println!("{} seed {} step {}: return {mean:.2} ± {std:.2} over {episodes} episodes", ck.method, ck.seed, ck.step);
            Ok(ExitCode::SUCCESS)
        }
    }
}
