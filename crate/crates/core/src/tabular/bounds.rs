use super::{expected_return, occupancy_measure, policy_evaluation, TabularMdp, TabularPolicy};
use crate::error::{Error, Result};

/// Source probabilities at or below this are treated as zero.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// Per-(s, a) split of next states: `unsupported` (S0) has target mass but no
/// source mass, `supported` (S1) has source mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPartition {
    n_actions: usize,
    unsupported: Vec<Vec<usize>>,
    supported: Vec<Vec<usize>>,
}

impl SupportPartition {
    pub fn new(src: &TabularMdp, tar: &TabularMdp) -> Self {
        let mut unsupported = Vec::with_capacity(src.n_states * src.n_actions);
        let mut supported = Vec::with_capacity(src.n_states * src.n_actions);
        for s in 0..src.n_states {
            for a in 0..src.n_actions {
                let (ps, pt) = (src.row(s, a), tar.row(s, a));
                let mut s0 = Vec::new();
                let mut s1 = Vec::new();
                for s2 in 0..src.n_states {
                    if ps[s2] > ZERO_THRESHOLD {
                        s1.push(s2);
                    } else if pt[s2] > ZERO_THRESHOLD {
                        s0.push(s2);
                    }
                }
                unsupported.push(s0);
                supported.push(s1);
            }
        }
        Self { n_actions: src.n_actions, unsupported, supported }
    }

    pub fn unsupported(&self, s: usize, a: usize) -> &[usize] {
        &self.unsupported[s * self.n_actions + a]
    }

    pub fn supported(&self, s: usize, a: usize) -> &[usize] {
        &self.supported[s * self.n_actions + a]
    }

    /// Whether the source has full support for the target everywhere.
    pub fn is_full(&self) -> bool {
        self.unsupported.iter().all(Vec::is_empty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Telescoping {
    /// `J_{M1}(π) - J_{M2}(π)`.
    pub lhs: f64,
    /// `γ/(1-γ) · E_{ρ_{M1}}[E_{P1} V_{M2} - E_{P2} V_{M2}]`.
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullSupportBound {
    pub gap: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeficientSupportBound {
    pub gap: f64,
    /// Dynamics mismatch on the supported set.
    pub term_a: f64,
    /// Target mass landing where the source has none, weighted by `|V_src|`.
    pub term_b: f64,
    pub bound: f64,
}

fn check_pair(m1: &TabularMdp, m2: &TabularMdp, policy: &TabularPolicy) -> Result<()> {
    if !m1.shares_structure_with(m2) {
        return Err(Error::config("MDPs must share states, actions, reward, discount and start distribution"));
    }
    m1.check_policy(policy)
}

/// Both sides of the telescoping identity between `m1` and `m2`.
pub fn telescoping_gap(m1: &TabularMdp, m2: &TabularMdp, policy: &TabularPolicy) -> Result<Telescoping> {
    check_pair(m1, m2, policy)?;
    let lhs = expected_return(m1, policy)? - expected_return(m2, policy)?;
    let rho1 = occupancy_measure(m1, policy)?;
    let v2 = policy_evaluation(m2, policy)?;
    let mut acc = 0.0;
    for s in 0..m1.n_states {
        for a in 0..m1.n_actions {
            let diff: f64 = m1.row(s, a).iter().zip(m2.row(s, a)).zip(&v2).map(|((p1, p2), v)| (p1 - p2) * v).sum();
            acc += rho1[s * m1.n_actions + a] * diff;
        }
    }
    let g = m1.gamma;
    Ok(Telescoping { lhs, rhs: g / (1.0 - g) * acc })
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(pi, _)| **pi > 0.0).map(|(pi, qi)| pi * (pi / qi).ln()).sum()
}

/// Gap `|J_tar - J_src|` and the KL-based bound valid under full support.
pub fn bound_full_support(src: &TabularMdp, tar: &TabularMdp, policy: &TabularPolicy) -> Result<FullSupportBound> {
    check_pair(src, tar, policy)?;
    if !SupportPartition::new(src, tar).is_full() {
        return Err(Error::Precondition("source lacks full support for the target; KL is undefined".into()));
    }
    let gap = (expected_return(tar, policy)? - expected_return(src, policy)?).abs();
    let rho = occupancy_measure(tar, policy)?;
    let mut expected_kl = 0.0;
    for s in 0..src.n_states {
        for a in 0..src.n_actions {
            expected_kl += rho[s * src.n_actions + a] * kl(tar.row(s, a), src.row(s, a));
        }
    }
    let g = src.gamma;
    let bound = g * src.r_max() / (1.0 - g).powi(2) * (2.0 * expected_kl.max(0.0)).sqrt();
    Ok(FullSupportBound { gap, bound })
}

/// Gap and the two-term bound that stays valid under support deficiency.
pub fn bound_deficient_support(
    src: &TabularMdp,
    tar: &TabularMdp,
    policy: &TabularPolicy,
) -> Result<DeficientSupportBound> {
    check_pair(src, tar, policy)?;
    let partition = SupportPartition::new(src, tar);
    let gap = (expected_return(tar, policy)? - expected_return(src, policy)?).abs();
    let rho = occupancy_measure(tar, policy)?;
    let v_src = policy_evaluation(src, policy)?;
    let mut mismatch = 0.0;
    let mut deficiency = 0.0;
    for s in 0..src.n_states {
        for a in 0..src.n_actions {
            let w = rho[s * src.n_actions + a];
            if w == 0.0 {
                continue;
            }
            let (ps, pt) = (src.row(s, a), tar.row(s, a));
            let l1: f64 = partition.supported(s, a).iter().map(|&k| (pt[k] - ps[k]).abs()).sum();
            let lost: f64 = partition.unsupported(s, a).iter().map(|&k| pt[k] * v_src[k].abs()).sum();
            mismatch += w * l1;
            deficiency += w * lost;
        }
    }
    let g = src.gamma;
    let term_a = g * src.r_max() / (1.0 - g).powi(2) * mismatch;
    let term_b = g / (1.0 - g) * deficiency;
    Ok(DeficientSupportBound { gap, term_a, term_b, bound: term_a + term_b })
}
