//! Configuration-driven runs: decay fit, schedule classification, seed scans,
//! mass tables, the second-moment report for divergent schedules, and a
//! verdict that is only as strong as the hypotheses that were checked.

mod config;
mod report;

pub use config::{
    Built, DecayConfig, Exact, ExperimentConfig, MeasureConfig, OutputConfig, PieceConfig,
    PsiConfig, QuasiConfig, QuasiMethodConfig, ReportFormat, ScheduleConfig, ScheduleKindConfig,
    SystemConfig, Thresholds, TwistConfig, MAX_WORKING_BITS,
};
pub use report::{emit_report, write_hits_csv, write_masses_csv, write_quasi_csv};

use crate::correlation::{estimate_decay, CorrelationMethod, DecayEstimate, FitOutcome};
use crate::dynamics::{MapSystem, SystemKind};
use crate::error::{Result, TrlError};
use crate::mc::{self, MeanEstimate};
use crate::measure::{probe_grid, MeasureModel};
use crate::rational::{self, Rational};
use crate::recurrence::{
    quasi_report_cached, MassMethod, PairCache, Problem, QuasiIndependenceReport, QuasiOptions,
    RadiusMode, Scan,
};
use crate::schedule::{geometric_grid, ScheduleFlags, Tri};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

/// Above this horizon the automatic quasi method only goes exact for
/// constant twists, whose pair masses cost O(1).
pub const AUTO_EXACT_HORIZON: usize = 24;

pub const TWIST_CERTIFICATE_PAIRS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub hypothesis: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Summable schedule: the zero law applies.
    Convergence,
    /// Divergent window sums: the full-measure law applies.
    Divergence,
    Undetermined,
}

pub const TWIST_CHECK: &str = "twist-piecewise-lipschitz-monotone";
pub const REGULARITY_CHECK: &str = "upper-ahlfors-regular";
pub const DECAY_CHECK: &str = "exponential-decay";
pub const SCHEDULE_CHECK: &str = "schedule-classified";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checklist {
    pub checks: Vec<HypothesisCheck>,
    pub branch: Branch,
}

impl Checklist {
    pub fn status(&self, hypothesis: &str) -> CheckStatus {
        self.checks
            .iter()
            .find(|c| c.hypothesis == hypothesis)
            .map(|c| c.status)
            .unwrap_or(CheckStatus::Unknown)
    }

    pub fn any_failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Fail)
    }

    fn passed(&self, hypothesis: &str) -> bool {
        self.status(hypothesis) == CheckStatus::Pass
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConvergentZeroEvidence,
    DivergentFullEvidence,
    ControlNoMixing,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub samples: usize,
    pub horizon: usize,
    pub version: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassRow {
    pub n: usize,
    pub m_n: f64,
    pub m_n_exact: Option<String>,
    /// Exact `mu(R_n)` when available, else the scan estimate.
    pub mu_rn: f64,
    pub mu_rn_exact: Option<String>,
    /// Zero for exact rows.
    pub stderr: f64,
    /// `3 C gamma^n` from the fitted decay model.
    pub three_p_bound: Option<f64>,
    pub within_bound: Option<bool>,
    pub scan_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HitRow {
    pub seed_index: usize,
    pub hit_count: usize,
    pub first_hit: Option<usize>,
    pub last_hit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailStats {
    pub n0: usize,
    /// Fraction of seeds with a hit at some `n >= n0`.
    pub observed_fraction: f64,
    /// `1 - prod_{n >= n0} (1 - mu(R_n))`.
    pub predicted_fraction: f64,
    pub sigma: f64,
    pub within_3sigma: bool,
    pub mean_tail_hits: f64,
    pub tail_hits_stderr: f64,
    /// `sum_{n >= n0} mu(R_n)`.
    pub expected_tail_hits: f64,
    pub within_4sigma: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceStats {
    pub method: &'static str,
    pub note: Option<String>,
    pub grid: Vec<usize>,
    pub reports: Vec<QuasiIndependenceReport>,
    pub ce_bound_final: f64,
    /// `S^2 / (S + S^2 - sum M^2)` over the last window: the bound exactly
    /// independent events would give.
    pub independent_ce_bound: f64,
    pub min_hits: usize,
    pub fraction_min_hits: f64,
    /// The same fraction for independent events with the tabulated masses.
    pub independent_fraction_min_hits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlStats {
    pub denominators: Vec<usize>,
    /// Fraction of seeds hitting at each denominator.
    pub per_denominator: Vec<(usize, f64)>,
    /// Fraction of seeds hitting at all of them.
    pub fraction_all: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub system: String,
    pub measure: String,
    pub twist: String,
    pub radius_mode: RadiusMode,
    pub hypotheses: Checklist,
    pub decay: DecayEstimate,
    pub schedule_flags: ScheduleFlags,
    pub masses_exact: bool,
    pub masses: Vec<MassRow>,
    /// `hit_histogram[c]` seeds had exactly `c` hits.
    pub hit_histogram: Vec<usize>,
    pub mean_hits: f64,
    pub tail: TailStats,
    pub divergence: Option<DivergenceStats>,
    pub divergence_skipped: Option<String>,
    pub control: Option<ControlStats>,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
    #[serde(skip)]
    pub hits: Vec<HitRow>,
}

fn decay_method(
    system: &MapSystem,
    measure: &MeasureModel,
    config: &ExperimentConfig,
) -> CorrelationMethod {
    if system.is_affine_rational()
        && measure.is_lebesgue()
        && system.invariant_measure == "lebesgue"
    {
        CorrelationMethod::ExactPreimage
    } else {
        CorrelationMethod::MonteCarlo {
            samples: config.decay.samples,
            seed: config.seed,
        }
    }
}

/// The decay fit stage on its own: exact correlations when the system is
/// affine under Lebesgue measure, Monte Carlo otherwise.
pub fn run_decay(built: &Built, config: &ExperimentConfig) -> Result<DecayEstimate> {
    estimate_decay(
        &built.system,
        &built.measure,
        config.decay.n_max,
        decay_method(&built.system, &built.measure, config),
    )
}

fn check_hypotheses(
    built: &Built,
    config: &ExperimentConfig,
    decay: &DecayEstimate,
    flags: &ScheduleFlags,
) -> Checklist {
    let mut checks = Vec::with_capacity(4);
    let mut rng = mc::stream_rng(config.seed, u64::MAX);
    checks.push(
        match built.twist.certify(&mut rng, TWIST_CERTIFICATE_PAIRS) {
            Ok(certs) => HypothesisCheck {
                hypothesis: TWIST_CHECK,
                status: CheckStatus::Pass,
                detail: format!(
                    "{} monotone piece(s), Lipschitz {}",
                    certs.len(),
                    built.twist.global_lipschitz()
                ),
            },
            Err(e) => HypothesisCheck {
                hypothesis: TWIST_CHECK,
                status: CheckStatus::Fail,
                detail: e.to_string(),
            },
        },
    );
    checks.push(match built.measure.regularity {
        Some(reg) => {
            let report = built
                .measure
                .verify_upper_ahlfors(reg.c, reg.s, &probe_grid(50, 20));
            HypothesisCheck {
                hypothesis: REGULARITY_CHECK,
                status: if report.pass {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                detail: format!(
                    "c = {}, s = {}, worst ratio {} over {} probes",
                    reg.c, reg.s, report.worst_ratio, report.probes
                ),
            }
        }
        None => HypothesisCheck {
            hypothesis: REGULARITY_CHECK,
            status: CheckStatus::Unknown,
            detail: format!("{} declares no regularity", built.measure.name),
        },
    });
    checks.push(match &decay.outcome {
        FitOutcome::Fitted(m) => HypothesisCheck {
            hypothesis: DECAY_CHECK,
            status: CheckStatus::Pass,
            detail: format!("C = {}, gamma = {}, R^2 = {}", m.c, m.gamma, m.r_squared),
        },
        FitOutcome::Degenerate { above_floor } => HypothesisCheck {
            hypothesis: DECAY_CHECK,
            status: CheckStatus::Fail,
            detail: format!("only {above_floor} correlation(s) above the noise floor"),
        },
        FitOutcome::NoDecay {
            gamma, r_squared, ..
        } => HypothesisCheck {
            hypothesis: DECAY_CHECK,
            status: CheckStatus::Fail,
            detail: format!("no exponential decay: gamma = {gamma}, R^2 = {r_squared}"),
        },
    });
    let branch = match (flags.summable, flags.window_divergent) {
        (Tri::Yes, _) => Branch::Convergence,
        (Tri::No, Tri::Yes) => Branch::Divergence,
        _ => Branch::Undetermined,
    };
    let (status, detail) = match (flags.summable, flags.window_divergent) {
        (Tri::Yes, _) => (CheckStatus::Pass, "summable".to_string()),
        (Tri::No, Tri::Yes) => (CheckStatus::Pass, "window sums diverge".to_string()),
        (Tri::No, Tri::No) => (
            CheckStatus::Fail,
            "not summable, but the window sums stay bounded".to_string(),
        ),
        _ => (CheckStatus::Unknown, "classification undecided".to_string()),
    };
    checks.push(HypothesisCheck {
        hypothesis: SCHEDULE_CHECK,
        status,
        detail,
    });
    Checklist { checks, branch }
}

/// Per-hypothesis pass/fail/unknown for a configuration. Never fails: a
/// configuration that cannot be built yields all-unknown entries.
pub fn validate_hypotheses(config: &ExperimentConfig) -> Checklist {
    let unknown = |detail: String| Checklist {
        checks: [TWIST_CHECK, REGULARITY_CHECK, DECAY_CHECK, SCHEDULE_CHECK]
            .into_iter()
            .map(|h| HypothesisCheck {
                hypothesis: h,
                status: CheckStatus::Unknown,
                detail: detail.clone(),
            })
            .collect(),
        branch: Branch::Undetermined,
    };
    let built = match config.build() {
        Ok(b) => b,
        Err(e) => return unknown(e.to_string()),
    };
    let decay = match run_decay(&built, config) {
        Ok(d) => d,
        Err(e) => {
            let flags = built.schedule.classify();
            let mut list = check_hypotheses(
                &built,
                config,
                &DecayEstimate {
                    series: Vec::new(),
                    outcome: FitOutcome::Degenerate { above_floor: 0 },
                },
                &flags,
            );
            for c in &mut list.checks {
                if c.hypothesis == DECAY_CHECK {
                    c.status = CheckStatus::Unknown;
                    c.detail = e.to_string();
                }
            }
            return list;
        }
    };
    check_hypotheses(&built, config, &decay, &built.schedule.classify())
}

/// Whether `mu(R_n)` for `n = 1..=horizon` can be computed exactly.
pub fn exact_capable(problem: &Problem, horizon: usize) -> bool {
    problem.system.is_affine_rational()
        && problem.measure.is_lebesgue()
        && problem.system.invariant_measure == "lebesgue"
        && (1..=horizon).all(|n| problem.schedule.mass_exact(n).is_some())
}

/// Partial quotients of a rational in `(0, 1)`.
fn cf_expansion(alpha: &Rational) -> Vec<BigInt> {
    let (mut p, mut q) = (alpha.numer().clone(), alpha.denom().clone());
    let mut out = Vec::new();
    // alpha = [0; a_1, ...], so expand 1 / alpha
    std::mem::swap(&mut p, &mut q);
    while !q.is_zero() {
        let (a, r) = p.div_rem(&q);
        out.push(a);
        p = q;
        q = r;
    }
    out
}

/// Convergent denominators `q_0 = 1, q_1, ...` of the rotation number that
/// lie in `1..=horizon`, leaving out the last one, which is the exact period.
pub fn convergent_denominators(system: &MapSystem, horizon: usize) -> Vec<usize> {
    let SystemKind::Rotation {
        alpha,
        partial_quotients,
    } = &system.kind
    else {
        return Vec::new();
    };
    let quotients = if partial_quotients.is_empty() {
        if alpha.is_zero() {
            return Vec::new();
        }
        cf_expansion(alpha)
    } else {
        partial_quotients.clone()
    };
    let (mut q_prev, mut q) = (BigInt::zero(), BigInt::one());
    let mut out = Vec::new();
    for a in &quotients {
        match q.to_usize() {
            Some(v) if v <= horizon => out.push(v),
            _ => break,
        }
        let next = a * &q + &q_prev;
        q_prev = std::mem::replace(&mut q, next);
    }
    out
}

/// `P(at least k events)` for independent events with the given masses.
pub fn independent_at_least(masses: &[f64], k: usize) -> f64 {
    // dist[c] = P(exactly c events so far), c capped at k
    let mut dist = vec![0.0; k + 1];
    dist[0] = 1.0;
    for &p in masses {
        let p = p.clamp(0.0, 1.0);
        for c in (0..=k).rev() {
            let stay = if c == k { dist[c] } else { dist[c] * (1.0 - p) };
            let arrive = if c > 0 { dist[c - 1] * p } else { 0.0 };
            dist[c] = stay + arrive;
        }
    }
    dist[k]
}

fn mass_table(
    problem: &Problem,
    scan: &Scan,
    decay: &DecayEstimate,
    horizon: usize,
    exact: bool,
) -> Result<Vec<MassRow>> {
    let per_n = scan.per_n();
    let model = decay.outcome.model();
    let mut rows = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let mass = problem.schedule.mass(n);
        let est: MeanEstimate = per_n[n - 1];
        let (mu, mu_exact, stderr) = if exact {
            let v = problem.measure_rn_exact(n)?;
            (rational::to_f64(&v), Some(rational::display(&v)), 0.0)
        } else {
            (est.mean, None, est.stderr)
        };
        let bound = model.map(|m| 3.0 * m.p(n as f64));
        rows.push(MassRow {
            n,
            m_n: mass.value,
            m_n_exact: mass.exact.as_ref().map(rational::display),
            mu_rn: mu,
            mu_rn_exact: mu_exact,
            stderr,
            three_p_bound: bound,
            within_bound: bound.map(|b| (mu - mass.value).abs() <= b + 3.0 * stderr),
            scan_estimate: est.mean,
        });
    }
    Ok(rows)
}

fn tail_stats(scan: &Scan, rows: &[MassRow], n0: usize, samples: usize) -> TailStats {
    let tail = &rows[(n0.max(1) - 1).min(rows.len())..];
    let predicted = 1.0 - tail.iter().map(|r| 1.0 - r.mu_rn).product::<f64>();
    let expected: f64 = tail.iter().map(|r| r.mu_rn).sum();
    let counts: Vec<f64> = scan
        .records
        .iter()
        .map(|r| r.count_from(n0) as f64)
        .collect();
    let observed = counts.iter().filter(|&&c| c > 0.0).count() as f64 / samples as f64;
    let sigma = (predicted * (1.0 - predicted) / samples as f64).sqrt();
    let mean = MeanEstimate::from_values(&counts);
    let sigma4 = mean.stderr.max((expected / samples as f64).sqrt());
    TailStats {
        n0,
        observed_fraction: observed,
        predicted_fraction: predicted,
        sigma,
        within_3sigma: (observed - predicted).abs() <= 3.0 * sigma,
        mean_tail_hits: mean.mean,
        tail_hits_stderr: mean.stderr,
        expected_tail_hits: expected,
        within_4sigma: (mean.mean - expected).abs() <= 4.0 * sigma4,
    }
}

fn quasi_grid(config: &ExperimentConfig) -> Result<Vec<usize>> {
    let n = config.horizon;
    let mut grid = match &config.quasi.grid {
        Some(g) => g.clone(),
        None => geometric_grid(10.min(n), n, 1.5),
    };
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 || *grid.last().unwrap() > n {
        return Err(TrlError::Config(format!("quasi grid must lie in 1..={n}")));
    }
    Ok(grid)
}

fn divergence_stage(
    problem: &Problem,
    config: &ExperimentConfig,
    decay: &DecayEstimate,
    scan: &Scan,
    rows: &[MassRow],
    exact: bool,
) -> Result<std::result::Result<DivergenceStats, String>> {
    let Some(model) = decay.outcome.model() else {
        return Ok(Err("no fitted decay model".into()));
    };
    let grid = quasi_grid(config)?;
    let mc_method = MassMethod::MonteCarlo {
        samples: config.samples,
        seed: config.seed,
    };
    let cheap_exact = exact
        && (config.horizon <= AUTO_EXACT_HORIZON
            || (problem.twist.is_constant() && problem.mode == RadiusMode::AtFx));
    let (mut method, mut name) = match config.quasi.method {
        QuasiMethodConfig::Exact => (MassMethod::Exact, "exact"),
        QuasiMethodConfig::MonteCarlo => (mc_method, "monte-carlo"),
        QuasiMethodConfig::Auto if cheap_exact => (MassMethod::Exact, "exact"),
        QuasiMethodConfig::Auto => (mc_method, "monte-carlo"),
    };
    let mut note = None;
    let run = |method: MassMethod| -> Result<Vec<QuasiIndependenceReport>> {
        let options = QuasiOptions {
            method,
            pair_budget: config.quasi.pair_budget,
        };
        let mut cache = PairCache::default();
        grid.iter()
            .map(|&n| quasi_report_cached(problem, model, n, options, &mut cache))
            .collect()
    };
    let reports = match run(method) {
        Err(TrlError::IntervalBudget { count, cap })
            if config.quasi.method == QuasiMethodConfig::Auto =>
        {
            note = Some(format!(
                "exact pair masses need {count} band evaluations (cap {cap}); used Monte Carlo"
            ));
            method = mc_method;
            name = "monte-carlo";
            run(method)?
        }
        other => other?,
    };
    let last = reports.last().expect("grid is nonempty");
    let (lo, hi) = last.window.unwrap_or((1, 0));
    let window: Vec<f64> = rows
        .iter()
        .filter(|r| r.n >= lo && r.n <= hi)
        .map(|r| r.mu_rn)
        .collect();
    let s: f64 = window.iter().sum();
    let sq: f64 = window.iter().map(|v| v * v).sum();
    let independent_ce = if s > 0.0 {
        (s * s / (s + s * s - sq)).min(1.0)
    } else {
        0.0
    };
    let k = config.thresholds.min_hits;
    let fraction =
        scan.records.iter().filter(|r| r.count() >= k).count() as f64 / scan.records.len() as f64;
    let all: Vec<f64> = rows.iter().map(|r| r.mu_rn).collect();
    Ok(Ok(DivergenceStats {
        method: name,
        note,
        grid,
        ce_bound_final: last.ce_bound,
        reports,
        independent_ce_bound: independent_ce,
        min_hits: k,
        fraction_min_hits: fraction,
        independent_fraction_min_hits: independent_at_least(&all, k),
    }))
}

fn control_stage(system: &MapSystem, scan: &Scan, threshold: f64) -> ControlStats {
    let denominators = convergent_denominators(system, scan.horizon);
    let total = scan.records.len() as f64;
    let per_denominator = denominators
        .iter()
        .map(|&q| {
            let hits = scan.records.iter().filter(|r| r.contains(q)).count();
            (q, hits as f64 / total)
        })
        .collect();
    let all = scan
        .records
        .iter()
        .filter(|r| denominators.iter().all(|&q| r.contains(q)))
        .count() as f64
        / total;
    ControlStats {
        pass: !denominators.is_empty() && all >= threshold,
        denominators,
        per_denominator,
        fraction_all: all,
    }
}

fn decide(
    hyp: &Checklist,
    flags: &ScheduleFlags,
    tail: &TailStats,
    divergence: Option<&DivergenceStats>,
    control: Option<&ControlStats>,
    thresholds: &Thresholds,
) -> (Verdict, Vec<String>) {
    let mut reasons = Vec::new();
    let decay_ok = hyp.passed(DECAY_CHECK);
    let twist_ok = hyp.passed(TWIST_CHECK);
    if let Some(c) = control {
        if flags.summable == Tri::Yes && c.pass && !decay_ok {
            reasons.push(format!(
                "summable schedule, no correlation decay, {:.4} of seeds hit at every denominator {:?}",
                c.fraction_all, c.denominators
            ));
            return (Verdict::ControlNoMixing, reasons);
        }
        reasons.push(format!(
            "rotation control not met: fraction {:.4}, decay check {:?}",
            c.fraction_all,
            hyp.status(DECAY_CHECK)
        ));
    }
    if !decay_ok {
        reasons.push("decay hypothesis not verified".into());
    }
    if !twist_ok {
        reasons.push("twist hypothesis not verified".into());
    }
    match flags.summable {
        Tri::Yes => {
            if !tail.within_3sigma {
                reasons.push(format!(
                    "tail-hit fraction {} is not within 3 sigma of {}",
                    tail.observed_fraction, tail.predicted_fraction
                ));
            }
            if !tail.within_4sigma {
                reasons.push(format!(
                    "mean tail hits {} exceed the expected {} by more than 4 sigma",
                    tail.mean_tail_hits, tail.expected_tail_hits
                ));
            }
            if decay_ok && twist_ok && tail.within_3sigma && tail.within_4sigma {
                reasons.push(format!(
                    "summable schedule, tail-hit fraction {} matches the prediction {}",
                    tail.observed_fraction, tail.predicted_fraction
                ));
                return (Verdict::ConvergentZeroEvidence, reasons);
            }
        }
        Tri::No => {
            let regular = hyp.passed(REGULARITY_CHECK);
            if !regular {
                reasons.push("regularity hypothesis not verified".into());
            }
            if flags.window_divergent == Tri::No {
                reasons.push("window sums stay bounded".into());
            }
            match divergence {
                Some(d) => {
                    let ce_ok = d.ce_bound_final >= thresholds.ce_bound;
                    let hits_ok = d.fraction_min_hits >= thresholds.hit_fraction;
                    reasons.push(format!(
                        "Chung–Erdős bound {} at N = {} (needs {})",
                        d.ce_bound_final,
                        d.grid.last().copied().unwrap_or(0),
                        thresholds.ce_bound
                    ));
                    reasons.push(format!(
                        "{} of seeds have >= {} hits (needs {})",
                        d.fraction_min_hits, d.min_hits, thresholds.hit_fraction
                    ));
                    if decay_ok
                        && twist_ok
                        && regular
                        && flags.window_divergent != Tri::No
                        && ce_ok
                        && hits_ok
                    {
                        return (Verdict::DivergentFullEvidence, reasons);
                    }
                }
                None => reasons.push("no second-moment report".into()),
            }
        }
        Tri::Unknown => reasons.push("schedule classification is unknown".into()),
    }
    (Verdict::Inconclusive, reasons)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let built = config.build().map_err(|e| e.at_stage("config"))?;
    let horizon = config.horizon;
    let decay = run_decay(&built, config).map_err(|e| e.at_stage("decay"))?;
    let flags = built.schedule.classify();
    let hypotheses = check_hypotheses(&built, config, &decay, &flags);

    let problem = Problem::new(
        built.system.clone(),
        built.measure.clone(),
        built.schedule.clone(),
        built.twist.clone(),
    )
    .with_mode(config.radius_mode);
    let scan = problem
        .scan(horizon, config.samples, config.seed)
        .map_err(|e| e.at_stage("hits"))?;
    let exact = exact_capable(&problem, horizon);
    let masses =
        mass_table(&problem, &scan, &decay, horizon, exact).map_err(|e| e.at_stage("masses"))?;
    let tail = tail_stats(&scan, &masses, config.tail_start(), config.samples);

    let (divergence, divergence_skipped) = if flags.summable == Tri::No {
        match divergence_stage(&problem, config, &decay, &scan, &masses, exact)
            .map_err(|e| e.at_stage("quasi"))?
        {
            Ok(d) => (Some(d), None),
            Err(reason) => (None, Some(reason)),
        }
    } else {
        (None, None)
    };
    let control = built
        .system
        .is_rotation()
        .then(|| control_stage(&built.system, &scan, config.thresholds.control_fraction));

    let max_hits = scan.records.iter().map(|r| r.count()).max().unwrap_or(0);
    let mut hit_histogram = vec![0usize; max_hits + 1];
    let hits: Vec<HitRow> = scan
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            hit_histogram[r.count()] += 1;
            HitRow {
                seed_index: i,
                hit_count: r.count(),
                first_hit: r.first(),
                last_hit: r.last(),
            }
        })
        .collect();
    let mean_hits = hits.iter().map(|h| h.hit_count as f64).sum::<f64>() / hits.len() as f64;
    let (verdict, reasons) = decide(
        &hypotheses,
        &flags,
        &tail,
        divergence.as_ref(),
        control.as_ref(),
        &config.thresholds,
    );
    Ok(ExperimentReport {
        name: config.name.clone(),
        provenance: Provenance {
            config_hash: config.hash(),
            seed: config.seed,
            samples: config.samples,
            horizon,
            version: env!("CARGO_PKG_VERSION"),
        },
        config: config.clone(),
        system: built.system.name.clone(),
        measure: built.measure.name.clone(),
        twist: built.twist.name.clone(),
        radius_mode: config.radius_mode,
        hypotheses,
        decay,
        schedule_flags: flags,
        masses_exact: exact,
        masses,
        hit_histogram,
        mean_hits,
        tail,
        divergence,
        divergence_skipped,
        control,
        verdict,
        reasons,
        hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn base(schedule: ScheduleKindConfig) -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            system: SystemConfig::Doubling,
            measure: MeasureConfig::Lebesgue,
            schedule: ScheduleConfig {
                kind: schedule,
                cap: None,
            },
            twist: TwistConfig::Identity,
            horizon: 20,
            samples: 500,
            seed: 3,
            radius_mode: RadiusMode::AtFx,
            output: OutputConfig::default(),
            thresholds: Thresholds::default(),
            decay: DecayConfig::default(),
            quasi: QuasiConfig::default(),
        }
    }

    #[test]
    fn independent_at_least_matches_binomial() {
        let p = independent_at_least(&[0.5; 4], 2);
        assert!((p - 11.0 / 16.0).abs() < 1e-15);
        assert_eq!(independent_at_least(&[0.3, 0.2], 0), 1.0);
        assert!((independent_at_least(&[1.0, 0.0], 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cf_and_denominators() {
        assert_eq!(
            cf_expansion(&rat(7, 25)),
            vec![
                BigInt::from(3),
                BigInt::from(1),
                BigInt::from(1),
                BigInt::from(3)
            ]
        );
        let sys = MapSystem::rotation(rat(7, 25)).unwrap();
        // q = 1, 3, 4, 7, 25; 25 is the period and is dropped
        assert_eq!(convergent_denominators(&sys, 100), vec![1, 3, 4, 7]);
        assert_eq!(convergent_denominators(&sys, 3), vec![1, 3]);
        assert!(convergent_denominators(&MapSystem::doubling(), 10).is_empty());
    }

    #[test]
    fn config_round_trip_and_hash() {
        let text = r#"{
            "system": {"kind": "doubling"},
            "measure": {"kind": "lebesgue"},
            "schedule": {"kind": "power", "c": "1/10", "a": 2.0},
            "horizon": 40, "samples": 100, "seed": 1
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.tail_start(), 30);
        assert_eq!(c.twist, TwistConfig::Identity);
        let again: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
        let mut moved = c.clone();
        moved.output.dir = Some("elsewhere".into());
        assert_eq!(moved.hash(), c.hash());
        moved.seed = 2;
        assert_ne!(moved.hash(), c.hash());
        assert!(ExperimentConfig::from_json(r#"{"system": {"kind": "doubling"}}"#).is_err());
    }

    #[test]
    fn numbers_are_read_as_decimals() {
        let e: Exact = serde_json::from_str("0.1").unwrap();
        assert_eq!(e.0, rat(1, 10));
        let e: Exact = serde_json::from_str("\"3/8\"").unwrap();
        assert_eq!(e.0, rat(3, 8));
        assert!(serde_json::from_str::<Exact>("\"x\"").is_err());
    }

    #[test]
    fn hypotheses_for_doubling_harmonic() {
        let c = base(ScheduleKindConfig::Harmonic {
            c: Exact(rat(1, 1)),
        });
        let list = validate_hypotheses(&c);
        assert!(
            list.checks.iter().all(|h| h.status == CheckStatus::Pass),
            "{list:?}"
        );
        assert_eq!(list.branch, Branch::Divergence);
    }

    #[test]
    fn hypotheses_for_rotation_fail_decay() {
        let mut c = base(ScheduleKindConfig::Harmonic {
            c: Exact(rat(1, 1)),
        });
        c.system = SystemConfig::RotationCf {
            partial_quotients: vec![1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2],
        };
        let list = validate_hypotheses(&c);
        assert_eq!(list.status(DECAY_CHECK), CheckStatus::Fail);
    }

    #[test]
    fn hypotheses_for_gauss() {
        let mut c = base(ScheduleKindConfig::Power {
            c: Exact(rat(1, 10)),
            a: 2.0,
        });
        c.system = SystemConfig::Gauss;
        c.measure = MeasureConfig::Gauss;
        c.decay.samples = 2000;
        let list = validate_hypotheses(&c);
        assert_eq!(list.status(REGULARITY_CHECK), CheckStatus::Pass);
        assert_eq!(list.branch, Branch::Convergence);
    }

    #[test]
    fn bad_config_is_all_unknown() {
        let mut c = base(ScheduleKindConfig::Harmonic {
            c: Exact(rat(1, 1)),
        });
        c.horizon = 0;
        let list = validate_hypotheses(&c);
        assert!(list.checks.iter().all(|h| h.status == CheckStatus::Unknown));
        let err = run_experiment(&c).unwrap_err();
        assert!(err.to_string().contains("config"));
    }

    #[test]
    fn small_zero_law_run() {
        let c = base(ScheduleKindConfig::Power {
            c: Exact(rat(1, 10)),
            a: 2.0,
        });
        let r = run_experiment(&c).unwrap();
        assert!(r.masses_exact);
        assert!(r.masses.iter().all(|m| m.mu_rn_exact.is_some()));
        assert_eq!(r.hit_histogram.iter().sum::<usize>(), 500);
        assert!(r.divergence.is_none());
        assert_eq!(
            r.verdict,
            Verdict::ConvergentZeroEvidence,
            "{:?}",
            r.reasons
        );
    }
}
