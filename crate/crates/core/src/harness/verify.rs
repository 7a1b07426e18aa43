use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;
use crate::tabular::random::{deficient_support_pair, full_support_pair, random_policy};
use crate::tabular::{
    bound_deficient_support, bound_full_support, occupancy_measure, telescoping_gap, SupportPartition, TabularMdp,
    TabularPolicy,
};

/// Ranges random instances are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSizes {
    pub min_states: usize,
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    pub gammas: Vec<f64>,
}

impl Default for InstanceSizes {
    fn default() -> Self {
        Self { min_states: 3, max_states: 10, min_actions: 2, max_actions: 4, gammas: vec![0.9, 0.99] }
    }
}

impl InstanceSizes {
    fn validate(&self) -> Result<()> {
        let ok = self.min_states >= 2
            && self.min_states <= self.max_states
            && self.min_actions >= 1
            && self.min_actions <= self.max_actions
            && !self.gammas.is_empty()
            && self.gammas.iter().all(|g| (0.0..1.0).contains(g));
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid instance sizes {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportKind {
    Full,
    Deficient,
}

/// Result of one random source/target pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInstance {
    pub kind: SupportKind,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// `|J_tar - J_src|`.
    pub gap: f64,
    pub bound: f64,
    /// Dynamics-mismatch part of the deficient bound (0 for full support).
    pub term_a: f64,
    /// Unsupported-transition part of the deficient bound (0 for full support).
    pub term_b: f64,
    /// `|lhs - rhs|` of the telescoping identity.
    pub telescoping_error: f64,
    /// Some visited `(s, a)` has target mass on next states the source never reaches.
    pub deficiency_visited: bool,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub instances: Vec<BoundInstance>,
    pub full_violations: usize,
    pub deficient_violations: usize,
    pub max_telescoping_error: f64,
    /// Deficient instances whose unsupported region is visited yet `term_b = 0`.
    pub term_b_missing: usize,
    /// Mean of `gap / bound` over full-support instances with a positive bound.
    pub mean_tightness_full: f64,
    pub mean_tightness_deficient: f64,
}

/// Tolerance of the telescoping identity.
pub const TELESCOPING_TOL: f64 = 1e-8;

impl BoundsReport {
    /// Bound violations plus telescoping failures plus missing deficiency terms.
    pub fn violations(&self) -> usize {
        self.full_violations
            + self.deficient_violations
            + self.term_b_missing
            + usize::from(self.max_telescoping_error >= TELESCOPING_TOL)
    }

    /// One row per instance: `instance_id,gap,term_A,term_B,bound,tightness`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["instance_id", "gap", "term_A", "term_B", "bound", "tightness"])?;
        for (k, i) in self.instances.iter().enumerate() {
            w.write_record([
                k.to_string(),
                i.gap.to_string(),
                i.term_a.to_string(),
                i.term_b.to_string(),
                i.bound.to_string(),
                i.tightness().to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

impl BoundInstance {
    /// `gap / bound`, or 0 when the bound is 0.
    pub fn tightness(&self) -> f64 {
        if self.bound > 0.0 {
            self.gap / self.bound
        } else {
            0.0
        }
    }
}

fn check_instance(kind: SupportKind, src: &TabularMdp, tar: &TabularMdp, pi: &TabularPolicy) -> Result<BoundInstance> {
    let tel = telescoping_gap(tar, src, pi)?;
    let (gap, bound, term_a, term_b) = match kind {
        SupportKind::Full => {
            let b = bound_full_support(src, tar, pi)?;
            (b.gap, b.bound, 0.0, 0.0)
        }
        SupportKind::Deficient => {
            let b = bound_deficient_support(src, tar, pi)?;
            (b.gap, b.bound, b.term_a, b.term_b)
        }
    };
    let partition = SupportPartition::new(src, tar);
    let rho = occupancy_measure(tar, pi)?;
    let na = src.n_actions();
    let deficiency_visited = (0..src.n_states())
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .any(|(s, a)| rho[s * na + a] > 0.0 && !partition.unsupported(s, a).is_empty());
    Ok(BoundInstance {
        kind,
        n_states: src.n_states(),
        n_actions: na,
        gamma: src.gamma(),
        gap,
        bound,
        term_a,
        term_b,
        telescoping_error: (tel.lhs - tel.rhs).abs(),
        deficiency_visited,
        violated: gap > bound,
    })
}

fn mean_tightness(xs: &[&BoundInstance]) -> f64 {
    let r: Vec<f64> = xs.iter().filter(|i| i.bound > 0.0).map(|i| i.tightness()).collect();
    if r.is_empty() {
        0.0
    } else {
        r.iter().sum::<f64>() / r.len() as f64
    }
}

/// Draw `n_instances` full-support and `n_instances` deficient-support pairs
/// with random policies and check both bounds and the telescoping identity
/// with exact dynamic programming.
pub fn verify_bounds(n_instances: usize, sizes: &InstanceSizes, seed: u64) -> Result<BoundsReport> {
    if n_instances == 0 {
        return Err(Error::config("need at least one instance"));
    }
    sizes.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut instances = Vec::with_capacity(2 * n_instances);
    for kind in [SupportKind::Full, SupportKind::Deficient] {
        for _ in 0..n_instances {
            let ns = rng.random_range(sizes.min_states..=sizes.max_states);
            let na = rng.random_range(sizes.min_actions..=sizes.max_actions);
            let gamma = sizes.gammas[rng.random_range(0..sizes.gammas.len())];
            let (src, tar) = match kind {
                SupportKind::Full => full_support_pair(&mut rng, ns, na, gamma),
                SupportKind::Deficient => deficient_support_pair(&mut rng, ns, na, gamma),
            };
            let pi = random_policy(&mut rng, ns, na);
            instances.push(check_instance(kind, &src, &tar, &pi)?);
        }
    }
    let of = |k: SupportKind| instances.iter().filter(move |i| i.kind == k);
    let full: Vec<&BoundInstance> = of(SupportKind::Full).collect();
    let deficient: Vec<&BoundInstance> = of(SupportKind::Deficient).collect();
    Ok(BoundsReport {
        full_violations: full.iter().filter(|i| i.violated).count(),
        deficient_violations: deficient.iter().filter(|i| i.violated).count(),
        max_telescoping_error: instances.iter().map(|i| i.telescoping_error).fold(0.0, f64::max),
        term_b_missing: deficient.iter().filter(|i| i.deficiency_visited && i.term_b <= 0.0).count(),
        mean_tightness_full: mean_tightness(&full),
        mean_tightness_deficient: mean_tightness(&deficient),
        instances,
    })
}
