//! Second-moment bookkeeping over an index window: `sigma_N`, `S_N`, `C_N`,
//! the Chung–Erdős bound, and the pairwise quasi-independence inequality.

use super::{MassMethod, Problem};
use crate::correlation::DecayModel;
use crate::error::{Result, TrlError};
use crate::rational;
use serde::Serialize;
use std::collections::BTreeMap;

const MATRIX_TOLERANCE: f64 = 1e-12;

/// `(sum_j P(A_j))^2 / sum_{j,k} P(A_j ∩ A_k)`, or `0` when every mass is
/// zero. Inconsistent inputs can push the ratio past one; it is capped.
pub fn chung_erdos_lower_bound(masses: &[f64], pairwise: &[Vec<f64>]) -> Result<f64> {
    let n = masses.len();
    if pairwise.len() != n || pairwise.iter().any(|row| row.len() != n) {
        return Err(TrlError::InvalidMatrix(format!(
            "expected a {n}x{n} matrix"
        )));
    }
    for j in 0..n {
        if (pairwise[j][j] - masses[j]).abs() > MATRIX_TOLERANCE {
            return Err(TrlError::InvalidMatrix(format!(
                "diagonal entry {j} is {} but the mass is {}",
                pairwise[j][j], masses[j]
            )));
        }
        for k in 0..n {
            let v = pairwise[j][k];
            if (v - pairwise[k][j]).abs() > MATRIX_TOLERANCE {
                return Err(TrlError::InvalidMatrix(format!(
                    "entry ({j},{k}) is not symmetric"
                )));
            }
            if v < -MATRIX_TOLERANCE || v > masses[j].min(masses[k]) + MATRIX_TOLERANCE {
                return Err(TrlError::InvalidMatrix(format!(
                    "entry ({j},{k}) = {v} exceeds the smaller mass"
                )));
            }
        }
    }
    let total: f64 = masses.iter().sum();
    let denom: f64 = pairwise.iter().flatten().sum();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((total * total / denom).min(1.0))
}

/// The constants of the pairwise inequality
/// `mu(R_n ∩ R_{n+m}) <= M_n M_{n+m} (1 + K1 sqrt p(n))
///   + K2 (M_n p(n)^{s/2} + M_{n+m} (p(n)^{s/2} + p(m))) + K3 p(n)^s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairBoundConstants {
    pub lipschitz: f64,
    pub c: f64,
    pub s: f64,
    pub sup_p: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl PairBoundConstants {
    pub fn new(lipschitz: f64, c: f64, s: f64, decay: &DecayModel) -> Self {
        let sup_p = decay.sup();
        let boost = 1.0 + 6.0 * lipschitz * sup_p.sqrt();
        Self {
            lipschitz,
            c,
            s,
            sup_p,
            k1: 6.0 * lipschitz,
            k2: boost * (2.0 * c + 3.0),
            k3: 4.0 * c * c * boost,
        }
    }

    pub fn rhs(&self, mn: f64, mnm: f64, pn: f64, pm: f64) -> f64 {
        let half = pn.powf(self.s / 2.0);
        mn * mnm * (1.0 + self.k1 * pn.sqrt())
            + self.k2 * (mn * half + mnm * (half + pm))
            + self.k3 * pn.powf(self.s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairEntry {
    pub j: usize,
    pub k: usize,
    pub mass: f64,
    pub exact: Option<String>,
    pub stderr: Option<f64>,
    pub rhs: Option<f64>,
    pub violates: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct QuasiOptions {
    pub method: MassMethod,
    /// Largest number of off-diagonal pairs evaluated; beyond it pairs are
    /// subsampled at a fixed stride.
    pub pair_budget: usize,
}

impl Default for QuasiOptions {
    fn default() -> Self {
        Self {
            method: MassMethod::Exact,
            pair_budget: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiIndependenceReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub s: Option<f64>,
    pub c_regularity: Option<f64>,
    pub decay_c: f64,
    pub gamma: f64,
    /// `(first, last)` index of `I_N`, absent when the window is empty.
    pub window: Option<(usize, usize)>,
    pub empty_window: bool,
    pub sigma_n: f64,
    pub s_n: f64,
    /// Full double sum over `I_N x I_N`.
    pub c_n: f64,
    /// `S_N + 2 sum_{j > k}`, the same quantity assembled the other way.
    pub c_n_split: f64,
    pub ce_bound: f64,
    pub d_n: f64,
    /// `S_N + (1 + K1 C N^{-1/s}) sigma_N^2 + 2 (K2 + K3) D_N`.
    pub c_n_upper: Option<f64>,
    /// `C / gamma` and `3 C gamma / (1 - gamma)`.
    pub c1_candidates: (f64, f64),
    pub constants: Option<PairBoundConstants>,
    /// Set when the measure declares no regularity and the pairwise
    /// inequality was not checked.
    pub regularity_missing: bool,
    pub masses: Vec<(usize, f64)>,
    pub pairs: Vec<PairEntry>,
    pub pairs_total: usize,
    pub subsampled: bool,
    pub violations: usize,
}

/// `I_N = {j : (2/s) ln N / ln(1/gamma) <= j <= N}`.
pub fn index_window(n: usize, s: f64, gamma: f64) -> Option<(usize, usize)> {
    let start = ((2.0 / s) * (n as f64).ln() / (1.0 / gamma).ln())
        .ceil()
        .max(1.0) as usize;
    (start <= n).then_some((start, n))
}

/// Value, exact rational text and standard error of one mass.
type CachedMass = (f64, Option<String>, Option<f64>);

/// Pair masses already computed, shared across an N-grid.
#[derive(Clone, Debug, Default)]
pub struct PairCache {
    single: BTreeMap<usize, CachedMass>,
    pairs: BTreeMap<(usize, usize), CachedMass>,
}

pub fn quasi_independence_report(
    problem: &Problem,
    decay: &DecayModel,
    n: usize,
    options: QuasiOptions,
) -> Result<QuasiIndependenceReport> {
    quasi_report_cached(problem, decay, n, options, &mut PairCache::default())
}

pub fn quasi_report_cached(
    problem: &Problem,
    decay: &DecayModel,
    n: usize,
    options: QuasiOptions,
    cache: &mut PairCache,
) -> Result<QuasiIndependenceReport> {
    let regularity = problem.measure.regularity;
    let s = regularity.map(|r| r.s).unwrap_or(1.0);
    let (cc, gamma) = (decay.c, decay.gamma);
    let c1_candidates = (cc / gamma, 3.0 * cc * gamma / (1.0 - gamma));
    let constants = regularity
        .map(|r| PairBoundConstants::new(problem.twist.global_lipschitz(), r.c, r.s, decay));
    let window = index_window(n, s, gamma);
    let mut report = QuasiIndependenceReport {
        n,
        s: regularity.map(|r| r.s),
        c_regularity: regularity.map(|r| r.c),
        decay_c: cc,
        gamma,
        window,
        empty_window: window.is_none(),
        sigma_n: 0.0,
        s_n: 0.0,
        c_n: 0.0,
        c_n_split: 0.0,
        ce_bound: 0.0,
        d_n: 0.0,
        c_n_upper: None,
        c1_candidates,
        constants: constants.clone(),
        regularity_missing: regularity.is_none(),
        masses: Vec::new(),
        pairs: Vec::new(),
        pairs_total: 0,
        subsampled: false,
        violations: 0,
    };
    let Some((lo, hi)) = window else {
        return Ok(report);
    };
    let scan = match options.method {
        MassMethod::MonteCarlo { samples, seed } => Some(problem.scan(hi, samples, seed)?),
        MassMethod::Exact => None,
    };
    let m = |j: usize| problem.schedule.mass_at(j);
    report.sigma_n = (lo..=hi).map(m).sum();

    for j in lo..=hi {
        let entry = match cache.single.get(&j) {
            Some(e) => e.clone(),
            None => {
                let e = match &scan {
                    Some(sc) => {
                        let est = sc.per_n()[j - 1];
                        (est.mean, None, Some(est.stderr))
                    }
                    None => {
                        let v = problem.measure_rn_exact(j)?;
                        (rational::to_f64(&v), Some(rational::display(&v)), None)
                    }
                };
                cache.single.insert(j, e.clone());
                e
            }
        };
        report.masses.push((j, entry.0));
    }
    report.s_n = report.masses.iter().map(|p| p.1).sum();

    let all_pairs: Vec<(usize, usize)> = (lo..=hi)
        .flat_map(|j| (j + 1..=hi).map(move |k| (j, k)))
        .collect();
    report.pairs_total = all_pairs.len();
    let stride = all_pairs.len().div_ceil(options.pair_budget.max(1)).max(1);
    report.subsampled = stride > 1;
    let mut off_diag = 0.0;
    for &(j, k) in all_pairs.iter().step_by(stride) {
        let entry = match cache.pairs.get(&(j, k)) {
            Some(e) => e.clone(),
            None => {
                let e = match &scan {
                    Some(sc) => {
                        let est = sc.pair(j, k);
                        (est.mean, None, Some(est.stderr))
                    }
                    None => {
                        let v = problem.pairwise_exact(j, k - j)?;
                        (rational::to_f64(&v), Some(rational::display(&v)), None)
                    }
                };
                cache.pairs.insert((j, k), e.clone());
                e
            }
        };
        off_diag += entry.0;
        let rhs = constants
            .as_ref()
            .map(|c| c.rhs(m(j), m(k), decay.p(j as f64), decay.p((k - j) as f64)));
        let violates = rhs.is_some_and(|r| entry.0 > r);
        report.violations += violates as usize;
        report.pairs.push(PairEntry {
            j,
            k,
            mass: entry.0,
            exact: entry.1,
            stderr: entry.2,
            rhs,
            violates,
        });
    }
    let masses: Vec<f64> = report.masses.iter().map(|p| p.1).collect();
    if report.subsampled {
        // scale the sampled off-diagonal sum back up to all pairs
        let scaled = off_diag * report.pairs_total as f64 / report.pairs.len().max(1) as f64;
        report.c_n = report.s_n + 2.0 * scaled;
        report.c_n_split = report.c_n;
        report.ce_bound = if report.c_n > 0.0 {
            (report.s_n * report.s_n / report.c_n).min(1.0)
        } else {
            0.0
        };
    } else {
        let size = masses.len();
        let mut matrix = vec![vec![0.0; size]; size];
        for (i, v) in masses.iter().enumerate() {
            matrix[i][i] = *v;
        }
        for p in &report.pairs {
            let (a, b) = (p.j - lo, p.k - lo);
            matrix[a][b] = p.mass;
            matrix[b][a] = p.mass;
        }
        report.c_n = matrix.iter().flatten().sum();
        report.c_n_split = report.s_n + 2.0 * off_diag;
        // sampling noise can push a pair estimate above the smaller single mass
        for (a, row) in matrix.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = v.min(masses[a]).min(masses[b]);
            }
        }
        report.ce_bound = chung_erdos_lower_bound(&masses, &matrix)?;
    }

    let g_half = |k: usize| gamma.powf(k as f64 * s / 2.0);
    report.d_n = all_pairs
        .iter()
        .map(|&(k, j)| {
            m(k) * g_half(k) + m(j) * (g_half(k) + gamma.powi((j - k) as i32)) + g_half(k)
        })
        .sum();
    report.c_n_upper = constants.as_ref().map(|c| {
        report.s_n
            + (1.0 + c.k1 * cc * (n as f64).powf(-1.0 / s)) * report.sigma_n.powi(2)
            + 2.0 * (c.k2 + c.k3) * report.d_n
    });
    Ok(report)
}
