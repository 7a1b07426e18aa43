use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::agent::{run_baseline_with, CurvePoint, Method, SacAgent};
use crate::envs::{evaluate_policy, mean_and_std, Domain, DomainPair, EnvId, OverlapLevel};
use crate::error::{Error, Result};
use crate::seeding::{stream, Stream};

pub const CSV_HEADER: &str =
    "step,seed,method,env,overlap,return_mean,return_std,mean_delta_r,mean_priority,cls_loss_theta,cls_loss_phi";

/// One row of `eval.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub seed: u64,
    pub method: Method,
    pub env: EnvId,
    pub overlap: OverlapLevel,
    pub return_mean: f64,
    pub return_std: f64,
    pub mean_delta_r: Option<f64>,
    pub mean_priority: Option<f64>,
    pub cls_loss_theta: Option<f64>,
    pub cls_loss_phi: Option<f64>,
}

impl EvalRecord {
    fn new(cfg: &ExperimentConfig, seed: u64, p: &CurvePoint) -> Self {
        Self {
            step: p.step,
            seed,
            method: cfg.experiment.method,
            env: cfg.experiment.env,
            overlap: cfg.experiment.overlap,
            return_mean: p.return_mean,
            return_std: p.return_std,
            mean_delta_r: p.mean_delta_r,
            mean_priority: p.mean_priority,
            cls_loss_theta: p.cls_loss_theta,
            cls_loss_phi: p.cls_loss_phi,
        }
    }
}

/// Serialize records as CSV text with the fixed header; missing diagnostics are empty cells.
pub fn records_to_csv(records: &[EvalRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn records_from_csv(text: &str) -> Result<Vec<EvalRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::input(format!("unexpected CSV header `{}`", header.join(","))));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Across-seed statistics at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub method: Method,
    pub step: u64,
    pub n_seeds: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation of `return_mean` over seeds, per method and step.
pub fn aggregate(records: &[EvalRecord]) -> Vec<AggregatePoint> {
    let mut groups: BTreeMap<(&str, u64), (Method, Vec<f64>)> = BTreeMap::new();
    for r in records {
        groups.entry((r.method.as_str(), r.step)).or_insert_with(|| (r.method, Vec::new())).1.push(r.return_mean);
    }
    groups
        .into_iter()
        .map(|((_, step), (method, xs))| {
            let (mean, std) = mean_and_std(&xs);
            AggregatePoint { method, step, n_seeds: xs.len(), mean, std }
        })
        .collect()
}

/// Trained policy plus what is needed to evaluate it again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub method: Method,
    pub pair: DomainPair,
    pub agent: SacAgent,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    /// Mean-action returns on the target domain over `episodes` episodes.
    pub fn evaluate(&self, episodes: usize) -> Result<(f64, f64)> {
        let mut env = self.pair.make_env(Domain::Target)?;
        let mut rng = stream(self.seed, Stream::Eval);
        let agent = &self.agent;
        let mut policy = |s: &[f64], _: &mut dyn rand::RngCore| agent.act_deterministic(s).expect("state width matches the actor");
        evaluate_policy(&mut env, &mut policy, episodes, &mut rng)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<EvalRecord>,
    pub csv: String,
}

/// Output locations inside a run directory.
pub struct RunLayout {
    pub dir: PathBuf,
}

impl RunLayout {
    pub fn eval_csv(&self) -> PathBuf {
        self.dir.join("eval.csv")
    }
    pub fn aggregate_csv(&self) -> PathBuf {
        self.dir.join("aggregate.csv")
    }
    pub fn config_snapshot(&self) -> PathBuf {
        self.dir.join("config.toml")
    }
    pub fn error_log(&self) -> PathBuf {
        self.dir.join("error.log")
    }
    pub fn checkpoint(&self, seed: u64) -> PathBuf {
        self.dir.join(format!("checkpoint_seed{seed}.json"))
    }
}

fn write_aggregate(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in aggregate(records) {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Train and evaluate every seed of `config`. With `out_dir`, writes
/// `eval.csv`, `aggregate.csv`, a `config.toml` snapshot and one checkpoint
/// per seed; if a run fails the rows produced so far are still written,
/// together with `error.log`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    config.validate()?;
    let layout = out_dir.map(|d| RunLayout { dir: d.to_path_buf() });
    if let Some(l) = &layout {
        fs::create_dir_all(&l.dir)?;
        config.save(&l.config_snapshot())?;
    }
    let dads = config.dads_config();
    let mut records = Vec::new();
    for &seed in &config.experiment.seeds {
        let pair = config.domain_pair(seed);
        let outcome = run_baseline_with(&dads, &pair, seed, |p| records.push(EvalRecord::new(config, seed, p)));
        match outcome {
            Ok(out) => {
                if let Some(l) = &layout {
                    let ck = Checkpoint { seed, step: dads.total_steps, method: dads.method, pair, agent: out.agent };
                    ck.save(&l.checkpoint(seed))?;
                }
            }
            Err(err) => {
                if let Some(l) = &layout {
                    fs::write(l.eval_csv(), records_to_csv(&records)?)?;
                    fs::write(l.error_log(), format!("seed {seed}: {err}\n"))?;
                }
                return Err(err);
            }
        }
    }
    let csv = records_to_csv(&records)?;
    if let Some(l) = &layout {
        fs::write(l.eval_csv(), &csv)?;
        write_aggregate(&l.aggregate_csv(), &records)?;
    }
    Ok(ExperimentResult { records, csv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSuite {
    /// `dads` against `dads_no_skew` at every overlap level.
    Skew,
    /// `dads` against `dads_no_mixup` at every overlap level.
    Mixup,
    /// `dads` over the μ grid.
    Mu,
}

pub const MU_GRID: [f64; 6] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0, 4.0];

impl FromStr for AblationSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skew" => Ok(Self::Skew),
            "mixup" => Ok(Self::Mixup),
            "mu" => Ok(Self::Mu),
            other => Err(Error::config(format!("unknown ablation suite `{other}`"))),
        }
    }
}

impl fmt::Display for AblationSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Skew => "skew",
            Self::Mixup => "mixup",
            Self::Mu => "mu",
        })
    }
}

fn mu_label(mu: f64) -> String {
    const NAMES: [(f64, &str); 6] = [(0.0, "0"), (1.0 / 3.0, "1_3"), (2.0 / 3.0, "2_3"), (1.0, "1"), (2.0, "2"), (4.0, "4")];
    NAMES.iter().find(|(v, _)| *v == mu).map_or_else(|| format!("{mu}"), |(_, n)| n.to_string())
}

/// The labelled configurations a suite expands into.
pub fn ablation_plan(base: &ExperimentConfig, suite: AblationSuite) -> Result<Vec<(String, ExperimentConfig)>> {
    base.validate()?;
    let mut plan = Vec::new();
    match suite {
        AblationSuite::Skew | AblationSuite::Mixup => {
            let variant = if suite == AblationSuite::Skew { Method::DadsNoSkew } else { Method::DadsNoMixup };
            for overlap in OverlapLevel::ALL {
                for method in [Method::Dads, variant] {
                    let mut c = base.clone();
                    c.experiment.overlap = overlap;
                    c.experiment.method = method;
                    plan.push((format!("{overlap}_{method}"), c));
                }
            }
        }
        AblationSuite::Mu => {
            for mu in MU_GRID {
                let mut c = base.clone();
                c.experiment.method = Method::Dads;
                c.train.mu = mu;
                plan.push((format!("mu_{}", mu_label(mu)), c));
            }
        }
    }
    Ok(plan)
}

/// Run every configuration of `suite`, each in its own subdirectory of `out_dir`.
pub fn run_ablation_suite(
    base: &ExperimentConfig,
    suite: AblationSuite,
    out_dir: Option<&Path>,
) -> Result<Vec<(String, ExperimentResult)>> {
    let plan = ablation_plan(base, suite)?;
    let mut out = Vec::with_capacity(plan.len());
    for (label, cfg) in plan {
        let dir = out_dir.map(|d| d.join(&label));
        let res = run_experiment(&cfg, dir.as_deref())?;
        out.push((label, res));
    }
    Ok(out)
}
