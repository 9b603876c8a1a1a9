//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use num_bigint::BigInt;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};
use trl_core::correlation::{
    correlation_exact, estimate_decay, fit_decay, CorrelationMethod, DecayModel, FitOutcome,
    ObservableSpec,
};
use trl_core::experiment::{
    emit_report, run_experiment, DecayConfig, Exact, ExperimentConfig, MeasureConfig, OutputConfig,
    PsiConfig, QuasiConfig, ReportFormat, ScheduleConfig, ScheduleKindConfig, SystemConfig,
    Thresholds, TwistConfig, Verdict,
};
use trl_core::measure::Regularity;
use trl_core::rational::{rat, to_f64, Rational};
use trl_core::recurrence::{chung_erdos_lower_bound, PairBoundConstants, Problem, RadiusMode};
use trl_core::schedule::{lebesgue_radius_exact, lipschitz_radius_check, TargetSchedule, Tri};
use trl_core::{MapSystem, MeasureModel, TwistSpec};

const LIPSCHITZ_TOL: f64 = 1e-10;
const SYNTHETIC_TOL: f64 = 1e-12;
const CE_TOL: f64 = 1e-12;
const GAMMA_RANGE: (f64, f64) = (0.45, 0.55);
const TAIL_SIGMAS: f64 = 3.0;
const CE_TARGET: f64 = 0.9;
const MIN_HITS: usize = 5;
const HIT_FRACTION: f64 = 0.95;
const CONTROL_FRACTION: f64 = 0.99;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn doubling_decay() -> DecayModel {
    let est = estimate_decay(
        &MapSystem::doubling(),
        &MeasureModel::lebesgue(),
        12,
        CorrelationMethod::ExactPreimage,
    )
    .unwrap();
    est.outcome
        .model()
        .expect("doubling correlations decay")
        .clone()
}

fn c1_lipschitz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs = Vec::with_capacity(10_000);
    for i in 0..10_000 {
        let x: f64 = rng.random();
        let y = if i % 2 == 0 {
            rng.random()
        } else {
            (x + rng.random_range(-1e-3..1e-3)).clamp(0.0, 1.0)
        };
        pairs.push((x, y));
    }
    let mut worst: f64 = 0.0;
    for measure in [MeasureModel::lebesgue(), MeasureModel::gauss()] {
        for mass in [0.01, 0.1, 0.5] {
            let r = lipschitz_radius_check(&measure, mass, &pairs).unwrap();
            // slack is additive: |r(x) - r(y)| <= |x - y| + LIPSCHITZ_TOL
            if !r.pass || LIPSCHITZ_TOL != trl_core::schedule::LIPSCHITZ_SLACK {
                return outcome(
                    false,
                    format!("{} M={mass}: slope {}", measure.name, r.worst_slope),
                );
            }
            worst = worst.max(r.worst_slope);
        }
    }
    // both points below M/2, where r = M - x has slope exactly one
    let m = rat(1, 10);
    let (a, b) = (rat(1, 80), rat(1, 40));
    let dr = lebesgue_radius_exact(&a, &m) - lebesgue_radius_exact(&b, &m);
    let witness = dr == &b - &a;
    outcome(
        witness,
        format!("6 x 10^4 pairs, worst slope {worst:.12}, exact slope-1 witness {witness}"),
    )
}

fn c2_single_mass() -> Outcome {
    let decay = doubling_decay();
    let mut worst_ratio: f64 = 0.0;
    for twist in [TwistSpec::identity(), TwistSpec::abs_tent()] {
        let p = Problem::new(
            MapSystem::doubling(),
            MeasureModel::lebesgue(),
            TargetSchedule::constant(rat(1, 10)),
            twist.clone(),
        );
        for n in 1..=20 {
            let mu = to_f64(&p.measure_rn_exact(n).unwrap());
            let bound = 3.0 * decay.p(n as f64);
            let ratio = (mu - 0.1).abs() / bound;
            if ratio > 1.0 {
                return outcome(
                    false,
                    format!(
                        "{} n={n}: |diff| {} > {bound}",
                        twist.name,
                        (mu - 0.1).abs()
                    ),
                );
            }
            worst_ratio = worst_ratio.max(ratio);
        }
    }
    let p = Problem::new(
        MapSystem::doubling(),
        MeasureModel::lebesgue(),
        TargetSchedule::constant(rat(1, 10)),
        TwistSpec::identity(),
    );
    let anchor = p.measure_rn_exact(2).unwrap() == rat(7, 60);
    outcome(
        anchor,
        format!(
            "C={:.4} gamma={:.4}, worst |diff|/bound {worst_ratio:.4}, mu(R_2)=7/60 {anchor}",
            decay.c, decay.gamma
        ),
    )
}

fn c3_constant_twist() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20 {
        let y = rat(rng.random_range(0..=1000), 1000);
        let m = rat(rng.random_range(1..500), 1000);
        let n = rng.random_range(1..=15);
        let p = Problem::new(
            MapSystem::doubling(),
            MeasureModel::lebesgue(),
            TargetSchedule::constant(m.clone()),
            TwistSpec::constant(y.clone()).unwrap(),
        );
        let mu = p.measure_rn_exact(n).unwrap();
        if mu != m {
            return outcome(false, format!("case {case}: y={y} M={m} n={n} gave {mu}"));
        }
    }
    outcome(true, "20 random (ball, n <= 15) cases equal M_n exactly")
}

fn union_and_bound(weights: &[f64], events: &[Vec<bool>]) -> (f64, f64) {
    let k = events.len();
    let masses: Vec<f64> = events
        .iter()
        .map(|e| {
            e.iter()
                .zip(weights)
                .filter(|(&b, _)| b)
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    let mut pairwise = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            pairwise[i][j] = if i == j {
                masses[i]
            } else {
                weights
                    .iter()
                    .enumerate()
                    .filter(|(o, _)| events[i][*o] && events[j][*o])
                    .map(|(_, w)| w)
                    .sum()
            };
        }
    }
    let union: f64 = weights
        .iter()
        .enumerate()
        .filter(|(o, _)| events.iter().any(|e| e[*o]))
        .map(|(_, w)| w)
        .sum();
    (union, chung_erdos_lower_bound(&masses, &pairwise).unwrap())
}

fn random_space(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let outcomes = rng.random_range(1..=4096);
    let raw: Vec<f64> = (0..outcomes).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn c4_chung_erdos() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_gap = f64::INFINITY;
    for space in 0..200 {
        let weights = random_space(&mut rng);
        let k = rng.random_range(1..=8);
        let density: f64 = rng.random_range(0.01..0.9);
        let events: Vec<Vec<bool>> = (0..k)
            .map(|_| {
                (0..weights.len())
                    .map(|_| rng.random_bool(density))
                    .collect()
            })
            .collect();
        let (union, bound) = union_and_bound(&weights, &events);
        if bound > union + CE_TOL {
            return outcome(
                false,
                format!("space {space}: bound {bound} > union {union}"),
            );
        }
        worst_gap = worst_gap.min(union - bound);
        // disjoint family on the same space
        let owner: Vec<usize> = (0..weights.len())
            .map(|_| rng.random_range(0..=k))
            .collect();
        let disjoint: Vec<Vec<bool>> = (0..k)
            .map(|e| owner.iter().map(|&o| o == e).collect())
            .collect();
        let (union, bound) = union_and_bound(&weights, &disjoint);
        if (union - bound).abs() > CE_TOL {
            return outcome(false, format!("disjoint space {space}: {bound} vs {union}"));
        }
    }
    let two = chung_erdos_lower_bound(&[0.5, 0.5], &[vec![0.5, 0.25], vec![0.25, 0.5]]).unwrap();
    // exact oracle: (1/2 + 1/2)^2 / (1/2 + 1/2 + 2/4)
    let expected = to_f64(&(rat(1, 1) / rat(3, 2)));
    let union = 1.0 - 0.5 * 0.5;
    let pass = two == expected && union == 0.75;
    outcome(
        pass,
        format!("200 spaces, min union-bound gap {worst_gap:.3e}; independent pair {two} vs union {union}"),
    )
}

fn c5_quasi_independence() -> Outcome {
    // dyadic balls of level <= 5 are independent of T^-m for m >= 5
    for (y, m) in [(rat(1, 2), rat(1, 8)), (rat(1, 4), rat(1, 16))] {
        let p = Problem::new(
            MapSystem::doubling(),
            MeasureModel::lebesgue(),
            TargetSchedule::constant(m.clone()),
            TwistSpec::constant(y.clone()).unwrap(),
        );
        for n in 5..=15 {
            for k in 5..=15 {
                let v = p.pairwise_exact(n, k).unwrap();
                if v != &m * &m {
                    return outcome(false, format!("dyadic y={y}, n={n}, m={k}: {v}"));
                }
            }
        }
    }
    let decay = doubling_decay();
    let reg = Regularity { c: 2.0, s: 1.0 };
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for twist in [
        TwistSpec::constant(rat(1, 3)).unwrap(),
        TwistSpec::identity(),
        TwistSpec::abs_tent(),
    ] {
        let k = PairBoundConstants::new(twist.global_lipschitz(), reg.c, reg.s, &decay);
        let p = Problem::new(
            MapSystem::doubling(),
            MeasureModel::lebesgue(),
            TargetSchedule::harmonic(rat(1, 1)),
            twist.clone(),
        );
        for n in 5..=15 {
            for m in 5..=15 {
                let v = to_f64(&p.pairwise_exact(n, m).unwrap());
                let (mn, mnm) = (1.0 / n as f64, 1.0 / (n + m) as f64);
                let rhs = k.rhs(mn, mnm, decay.p(n as f64), decay.p(m as f64));
                if v > rhs {
                    return outcome(false, format!("{} n={n} m={m}: {v} > {rhs}", twist.name));
                }
                worst = worst.max(v / rhs);
                checked += 1;
            }
        }
    }
    outcome(
        true,
        format!("dyadic products exact; {checked} generic pairs under the bound, worst ratio {worst:.4}"),
    )
}

fn c6_decay() -> Outcome {
    let doubling = MapSystem::doubling();
    let f = ObservableSpec::indicator(Rational::zero(), rat(1, 3)).unwrap();
    let series: Vec<(usize, f64)> = (1..=16)
        .map(|n| (n, to_f64(&correlation_exact(&doubling, &f, &f, n).unwrap())))
        .collect();
    let gamma = match fit_decay(&series, 1e-14) {
        FitOutcome::Fitted(m) => m.gamma,
        other => return outcome(false, format!("indicator series not fitted: {other:?}")),
    };
    let in_range = gamma >= GAMMA_RANGE.0 && gamma <= GAMMA_RANGE.1;
    let synthetic: Vec<(usize, f64)> = (1..=20).map(|n| (n, 0.3 * 0.5f64.powi(n as i32))).collect();
    let (c, g) = match fit_decay(&synthetic, 1e-14) {
        FitOutcome::Fitted(m) => (m.c, m.gamma),
        other => return outcome(false, format!("synthetic series not fitted: {other:?}")),
    };
    let synthetic_ok = (c - 0.3).abs() <= SYNTHETIC_TOL && (g - 0.5).abs() <= SYNTHETIC_TOL;
    let quotients: Vec<BigInt> = (0..30).map(|i| BigInt::from(1 + i % 2)).collect();
    let rotation = MapSystem::rotation_from_cf(&quotients).unwrap();
    let rot = estimate_decay(
        &rotation,
        &MeasureModel::lebesgue(),
        12,
        CorrelationMethod::ExactPreimage,
    )
    .unwrap()
    .outcome;
    let rot_ok = !matches!(rot, FitOutcome::Fitted(_));
    outcome(
        in_range && synthetic_ok && rot_ok,
        format!(
            "gamma {gamma:.4}; synthetic ({c}, {g}); rotation {}",
            match rot {
                FitOutcome::Fitted(_) => "fitted",
                FitOutcome::Degenerate { .. } => "degenerate",
                FitOutcome::NoDecay { .. } => "no-decay",
            }
        ),
    )
}

fn base_config(
    name: &str,
    system: SystemConfig,
    schedule: ScheduleConfig,
    twist: TwistConfig,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        system,
        measure: MeasureConfig::Lebesgue,
        schedule,
        twist,
        horizon: 40,
        samples: 10_000,
        seed: 20_241_014,
        radius_mode: RadiusMode::AtFx,
        output: OutputConfig::default(),
        thresholds: Thresholds::default(),
        decay: DecayConfig::default(),
        quasi: QuasiConfig::default(),
    }
}

fn zero_law_config() -> ExperimentConfig {
    base_config(
        "zero-law",
        SystemConfig::Doubling,
        ScheduleConfig {
            kind: ScheduleKindConfig::Power {
                c: Exact(rat(1, 10)),
                a: 2.0,
            },
            cap: None,
        },
        TwistConfig::Identity,
    )
}

fn c7_zero_law() -> Outcome {
    let config = zero_law_config();
    let report = run_experiment(&config).unwrap();
    let t = &report.tail;
    // binomial prediction from the exact per-n masses, recomputed here
    let exact_tail: Vec<f64> = report.masses[29..]
        .iter()
        .map(|row| {
            let (p, q) = row.mu_rn_exact.as_deref().unwrap().split_once('/').unwrap();
            p.parse::<f64>().unwrap() / q.parse::<f64>().unwrap()
        })
        .collect();
    let predicted = 1.0 - exact_tail.iter().map(|m| 1.0 - m).product::<f64>();
    let sigma = (predicted * (1.0 - predicted) / config.samples as f64).sqrt();
    let within = (t.observed_fraction - predicted).abs() <= TAIL_SIGMAS * sigma;
    outcome(
        within && t.n0 == 30 && report.verdict == Verdict::ConvergentZeroEvidence,
        format!(
            "observed {:.5} vs predicted {predicted:.5} (sigma {sigma:.5}); verdict {:?}",
            t.observed_fraction, report.verdict
        ),
    )
}

fn c8_divergence() -> Outcome {
    let mut config = base_config(
        "full-law",
        SystemConfig::Doubling,
        ScheduleConfig {
            kind: ScheduleKindConfig::Harmonic {
                c: Exact(rat(2, 1)),
            },
            cap: Some(Exact(rat(1, 2))),
        },
        TwistConfig::Constant {
            y: Exact(rat(1, 3)),
        },
    );
    config.horizon = 60;
    config.quasi.grid = Some(vec![15, 30, 45, 60]);
    let report = run_experiment(&config).unwrap();
    let Some(d) = &report.divergence else {
        return outcome(
            false,
            format!("no second-moment report: {:?}", report.divergence_skipped),
        );
    };
    let ce_ok = d.method == "exact" && d.ce_bound_final >= CE_TARGET;
    let hits_ok = d.fraction_min_hits >= HIT_FRACTION;
    outcome(
        ce_ok && hits_ok,
        format!(
            "CE bound {:.4} at N=60 (target {CE_TARGET}, independent-model {:.4}); \
             >= {MIN_HITS} hits for {:.4} of seeds (target {HIT_FRACTION}, independent-model {:.4})",
            d.ce_bound_final, d.independent_ce_bound, d.fraction_min_hits, d.independent_fraction_min_hits
        ),
    )
}

fn c9_rotation_control() -> Outcome {
    let psi = PsiConfig::Exponential { base: 2, offset: 7 };
    let mut config = base_config(
        "rotation-control",
        SystemConfig::Liouville {
            psi: psi.clone(),
            depth: 3,
            bit_budget: 4096,
        },
        ScheduleConfig {
            kind: ScheduleKindConfig::Psi {
                psi,
                reference: None,
            },
            cap: None,
        },
        TwistConfig::Identity,
    );
    config.horizon = 300;
    let report = run_experiment(&config).unwrap();
    let Some(c) = &report.control else {
        return outcome(false, "no control statistics");
    };
    let every = c
        .per_denominator
        .iter()
        .all(|&(_, f)| f >= CONTROL_FRACTION);
    let summable = report.schedule_flags.summable == Tri::Yes;
    outcome(
        every
            && summable
            && !c.denominators.is_empty()
            && report.verdict == Verdict::ControlNoMixing,
        format!(
            "denominators {:?}, per-q hit fractions {:?}, summable {summable}, verdict {:?}",
            c.denominators,
            c.per_denominator.iter().map(|p| p.1).collect::<Vec<_>>(),
            report.verdict
        ),
    )
}

fn emit_with_threads(
    config: &ExperimentConfig,
    threads: usize,
    dir: &std::path::Path,
) -> Vec<(String, Vec<u8>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let report = pool.install(|| run_experiment(config)).unwrap();
    emit_report(&report, ReportFormat::CsvBundle, dir)
        .unwrap()
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(p).unwrap(),
            )
        })
        .collect()
}

fn c10_determinism() -> Outcome {
    let config = zero_law_config();
    let tmp = tempfile::tempdir().unwrap();
    let a = emit_with_threads(&config, 1, &tmp.path().join("one"));
    let b = emit_with_threads(&config, 4, &tmp.path().join("four"));
    let same = a == b;
    let bytes: usize = a.iter().map(|f| f.1.len()).sum();
    outcome(
        same && a.len() == 4,
        format!(
            "{} files, {bytes} bytes, identical across 1 and 4 workers: {same}",
            a.len()
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "radius Lipschitz suite",
            Duration::from_secs(5),
            c1_lipschitz,
        ),
        (
            "single-set mass vs M_n",
            Duration::from_secs(60),
            c2_single_mass,
        ),
        (
            "constant-twist exactness",
            Duration::from_secs(30),
            c3_constant_twist,
        ),
        ("Chung–Erdős suite", Duration::from_secs(10), c4_chung_erdos),
        (
            "quasi-independence",
            Duration::from_secs(300),
            c5_quasi_independence,
        ),
        ("decay estimation", Duration::from_secs(30), c6_decay),
        ("zero-law experiment", Duration::from_secs(120), c7_zero_law),
        (
            "divergence experiment",
            Duration::from_secs(300),
            c8_divergence,
        ),
        (
            "rotation control",
            Duration::from_secs(60),
            c9_rotation_control,
        ),
        ("determinism", Duration::from_secs(240), c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {name}: {} [{:.1}s / {}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
