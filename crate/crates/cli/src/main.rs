mod spec;

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use trl_core::correlation::{self, CorrelationMethod, ObservableSpec};
use trl_core::experiment::{
    self, emit_report, exact_capable, run_decay, CheckStatus, DecayConfig, ExperimentConfig,
    OutputConfig, PsiConfig, QuasiConfig, ReportFormat, ScheduleConfig, ScheduleKindConfig,
    SystemConfig, Thresholds, TwistConfig, Verdict,
};
use trl_core::rational;
use trl_core::recurrence::{
    quasi_report_cached, MassMethod, PairBoundConstants, PairCache, Problem, QuasiOptions,
    RadiusMode,
};
use trl_core::{Result, TrlError};

#[derive(Parser)]
#[command(
    name = "trl",
    version,
    about = "Twisted recurrence experiments on interval maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Clone)]
struct Global {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Worker threads for Monte Carlo. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Exit with status 2 when a hypothesis check fails.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Read system, measure, schedule and twist from an experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "doubling")]
    system: String,
    #[arg(long, default_value = "lebesgue")]
    measure: String,
    #[arg(long, default_value = "harmonic:1")]
    schedule: String,
    /// Upper cap on the masses.
    #[arg(long)]
    cap: Option<String>,
    #[arg(long, default_value = "identity")]
    twist: String,
    #[arg(long, default_value = "at-fx", value_parser = ["at-fx", "at-x"])]
    mode: String,
    /// Estimate by Monte Carlo even when exact values are available.
    #[arg(long)]
    monte_carlo: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its report.
    Run {
        config: PathBuf,
        #[arg(long, value_parser = ["json", "csv-bundle"])]
        format: Option<String>,
    },
    /// Correlations and the fitted decay model.
    Corr {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        /// Indicator interval `lo,hi` for the first observable.
        #[arg(long)]
        f: Option<String>,
        #[arg(long)]
        g: Option<String>,
    },
    /// `mu(R_n)` against `M_n`.
    RnMass {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// `mu(R_n ∩ R_{n+m})` against `M_n M_{n+m}` and the pairwise bound.
    Pairwise {
        #[command(flatten)]
        problem: ProblemArgs,
        /// `a..b`, `a` or a comma list.
        #[arg(long, default_value = "5..15")]
        n: String,
        #[arg(long, default_value = "5..15")]
        m: String,
    },
    /// Second-moment reports over a grid of `N`.
    QuasiReport {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// The Liouville rotation negative control.
    RotationControl {
        #[arg(long, default_value = "exponential:2:7")]
        psi: String,
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
}

fn config_error(msg: String) -> TrlError {
    TrlError::Config(msg)
}

fn problem_config(args: &ProblemArgs, global: &Global) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig {
            name: String::new(),
            system: spec::system(&args.system).map_err(config_error)?,
            measure: spec::measure(&args.measure).map_err(config_error)?,
            schedule: spec::schedule(&args.schedule, args.cap.as_deref()).map_err(config_error)?,
            twist: spec::twist(&args.twist).map_err(config_error)?,
            horizon: 20,
            samples: 10_000,
            seed: 0,
            radius_mode: if args.mode == "at-x" {
                RadiusMode::AtX
            } else {
                RadiusMode::AtFx
            },
            output: OutputConfig::default(),
            thresholds: Thresholds::default(),
            decay: DecayConfig::default(),
            quasi: QuasiConfig::default(),
        },
    };
    apply_overrides(&mut config, global);
    Ok(config)
}

fn apply_overrides(config: &mut ExperimentConfig, global: &Global) {
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(samples) = global.samples {
        config.samples = samples;
    }
    if let Some(horizon) = global.horizon {
        config.horizon = horizon;
    }
}

fn problem_of(config: &ExperimentConfig) -> Result<(experiment::Built, Problem)> {
    let built = config.build()?;
    let problem = Problem::new(
        built.system.clone(),
        built.measure.clone(),
        built.schedule.clone(),
        built.twist.clone(),
    )
    .with_mode(config.radius_mode);
    Ok((built, problem))
}

fn parse_range(text: &str) -> Result<Vec<usize>> {
    let bad = || TrlError::Config(format!("`{text}` is not a range"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        return Ok((num(a)?..=num(b)?).collect());
    }
    text.split(',').map(num).collect()
}

fn parse_interval(text: &str) -> Result<ObservableSpec> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| TrlError::Config(format!("`{text}` is not `lo,hi`")))?;
    let r = |s: &str| {
        rational::parse_decimal(s)
            .ok_or_else(|| TrlError::Config(format!("`{s}` is not a rational")))
    };
    ObservableSpec::indicator(r(lo)?, r(hi)?)
}

/// Standard output, or `name` under `--out-dir`.
fn sink(global: &Global, name: &str) -> Result<Box<dyn Write>> {
    Ok(match &global.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Box::new(std::fs::File::create(dir.join(name))?)
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mass_method(args: &ProblemArgs, config: &ExperimentConfig, exact: bool) -> MassMethod {
    if exact && !args.monte_carlo {
        MassMethod::Exact
    } else {
        MassMethod::MonteCarlo {
            samples: config.samples,
            seed: config.seed,
        }
    }
}

fn write_report(
    report: &experiment::ExperimentReport,
    config: &ExperimentConfig,
    global: &Global,
    format: ReportFormat,
) -> Result<i32> {
    let dir = global
        .out_dir
        .clone()
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("trl-out"));
    let written = emit_report(report, format, &dir)?;
    println!(
        "verdict: {}",
        serde_json::to_string(&report.verdict)?.trim_matches('"')
    );
    for reason in &report.reasons {
        println!("  {reason}");
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(if global.strict && report.hypotheses.any_failed() {
        2
    } else {
        0
    })
}

fn cmd_run(path: &Path, format: Option<&str>, global: &Global) -> Result<i32> {
    let mut config = ExperimentConfig::from_path(path)?;
    apply_overrides(&mut config, global);
    let format = match format {
        Some("json") => ReportFormat::Json,
        Some(_) => ReportFormat::CsvBundle,
        None => config.output.format,
    };
    let report = experiment::run_experiment(&config)?;
    write_report(&report, &config, global, format)
}

/// Exit status for commands that do not run the full experiment.
fn strict_code(config: &ExperimentConfig, global: &Global) -> i32 {
    if !global.strict {
        return 0;
    }
    let checklist = experiment::validate_hypotheses(config);
    for c in checklist
        .checks
        .iter()
        .filter(|c| c.status != CheckStatus::Pass)
    {
        eprintln!("{}: {:?} ({})", c.hypothesis, c.status, c.detail);
    }
    if checklist.any_failed() {
        2
    } else {
        0
    }
}

fn cmd_corr(
    args: &ProblemArgs,
    global: &Global,
    n_max: usize,
    f: Option<&str>,
    g: Option<&str>,
) -> Result<i32> {
    let mut config = problem_config(args, global)?;
    config.decay.n_max = n_max;
    let (built, _) = problem_of(&config)?;
    let mut out = sink(global, "corr.csv")?;
    match (f, g) {
        (Some(f), Some(g)) => {
            let (f, g) = (parse_interval(f)?, parse_interval(g)?);
            let method = if args.monte_carlo {
                CorrelationMethod::MonteCarlo {
                    samples: config.samples,
                    seed: config.seed,
                }
            } else {
                CorrelationMethod::ExactPreimage
            };
            writeln!(out, "n,corr,exact,stderr")?;
            for n in 1..=n_max {
                let c = correlation::correlation(&built.system, &built.measure, &f, &g, n, method)?;
                writeln!(
                    out,
                    "{n},{},{},{}",
                    c.value,
                    c.exact.as_ref().map(rational::display).unwrap_or_default(),
                    opt(c.stderr)
                )?;
            }
        }
        (None, None) => {
            let decay = run_decay(&built, &config)?;
            writeln!(out, "n,normalized,stderr")?;
            for p in &decay.series {
                writeln!(out, "{},{},{}", p.n, p.normalized, p.stderr)?;
            }
            eprintln!("fit: {}", serde_json::to_string(&decay.outcome)?);
        }
        _ => return Err(TrlError::Config("--f and --g go together".into())),
    }
    Ok(strict_code(&config, global))
}

fn cmd_rn_mass(args: &ProblemArgs, global: &Global) -> Result<i32> {
    let config = problem_config(args, global)?;
    let (built, problem) = problem_of(&config)?;
    let decay = run_decay(&built, &config)?;
    let model = decay.outcome.model();
    let method = mass_method(args, &config, exact_capable(&problem, config.horizon));
    let scan = match method {
        MassMethod::MonteCarlo { samples, seed } => {
            Some(problem.scan(config.horizon, samples, seed)?)
        }
        MassMethod::Exact => None,
    };
    let per_n = scan.as_ref().map(|s| s.per_n());
    let mut out = sink(global, "rn_mass.csv")?;
    writeln!(out, "n,M_n,mu_Rn,|diff|,bound_3p")?;
    for n in 1..=config.horizon {
        let m = problem.schedule.mass_at(n);
        let mu = match &per_n {
            Some(est) => est[n - 1].mean,
            None => rational::to_f64(&problem.measure_rn_exact(n)?),
        };
        let bound = model.map(|d| 3.0 * d.p(n as f64));
        writeln!(out, "{n},{m},{mu},{},{}", (mu - m).abs(), opt(bound))?;
    }
    Ok(strict_code(&config, global))
}

fn cmd_pairwise(args: &ProblemArgs, global: &Global, ns: &str, ms: &str) -> Result<i32> {
    let (ns, ms) = (parse_range(ns)?, parse_range(ms)?);
    let mut config = problem_config(args, global)?;
    let top = ns.iter().max().copied().unwrap_or(0) + ms.iter().max().copied().unwrap_or(0);
    config.horizon = config.horizon.max(top);
    let (built, problem) = problem_of(&config)?;
    let decay = run_decay(&built, &config)?;
    let constants = match (decay.outcome.model(), built.measure.regularity) {
        (Some(d), Some(r)) => Some((
            PairBoundConstants::new(built.twist.global_lipschitz(), r.c, r.s, d),
            d.clone(),
        )),
        _ => None,
    };
    let method = mass_method(args, &config, exact_capable(&problem, config.horizon));
    let scan = match method {
        MassMethod::MonteCarlo { samples, seed } => Some(problem.scan(top, samples, seed)?),
        MassMethod::Exact => None,
    };
    let mut out = sink(global, "pairwise.csv")?;
    writeln!(out, "n,m,mu_pair,exact,stderr,product,rhs,violates")?;
    for &n in &ns {
        for &m in &ms {
            let (value, exact, stderr) = match &scan {
                Some(s) => {
                    let e = s.pair(n, n + m);
                    (e.mean, String::new(), Some(e.stderr))
                }
                None => {
                    let v = problem.pairwise_exact(n, m)?;
                    (rational::to_f64(&v), rational::display(&v), None)
                }
            };
            let (mn, mnm) = (problem.schedule.mass_at(n), problem.schedule.mass_at(n + m));
            let rhs = constants
                .as_ref()
                .map(|(k, d)| k.rhs(mn, mnm, d.p(n as f64), d.p(m as f64)));
            let violates = rhs.map(|r| value > r).unwrap_or(false);
            writeln!(
                out,
                "{n},{m},{value},{exact},{},{},{},{violates}",
                opt(stderr),
                mn * mnm,
                opt(rhs)
            )?;
        }
    }
    Ok(strict_code(&config, global))
}

fn cmd_quasi(args: &ProblemArgs, global: &Global, grid: Option<&[usize]>) -> Result<i32> {
    let mut config = problem_config(args, global)?;
    let grid: Vec<usize> = grid
        .map(<[usize]>::to_vec)
        .unwrap_or_else(|| vec![config.horizon]);
    config.horizon = config.horizon.max(grid.iter().copied().max().unwrap_or(0));
    let (built, problem) = problem_of(&config)?;
    let decay = run_decay(&built, &config)?;
    let Some(model) = decay.outcome.model() else {
        eprintln!("no decay model: {}", serde_json::to_string(&decay.outcome)?);
        return Ok(if global.strict { 2 } else { 1 });
    };
    let options = QuasiOptions {
        method: mass_method(args, &config, exact_capable(&problem, config.horizon)),
        pair_budget: config.quasi.pair_budget,
    };
    let mut cache = PairCache::default();
    let reports = grid
        .iter()
        .map(|&n| quasi_report_cached(&problem, model, n, options, &mut cache))
        .collect::<Result<Vec<_>>>()?;
    let mut out = sink(global, "quasi.json")?;
    writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
    let missing = reports
        .iter()
        .any(|r| r.regularity_missing || r.violations > 0);
    Ok(if global.strict && missing { 2 } else { 0 })
}

fn cmd_rotation_control(global: &Global, psi: &str, depth: usize) -> Result<i32> {
    let psi: PsiConfig = spec::psi(psi).map_err(config_error)?;
    let mut config = ExperimentConfig {
        name: "rotation-control".into(),
        system: SystemConfig::Liouville {
            psi: psi.clone(),
            depth,
            bit_budget: 4096,
        },
        measure: experiment::MeasureConfig::Lebesgue,
        schedule: ScheduleConfig {
            kind: ScheduleKindConfig::Psi {
                psi,
                reference: None,
            },
            cap: None,
        },
        twist: TwistConfig::Identity,
        horizon: 300,
        samples: 10_000,
        seed: 0,
        radius_mode: RadiusMode::AtFx,
        output: OutputConfig::default(),
        thresholds: Thresholds::default(),
        decay: DecayConfig::default(),
        quasi: QuasiConfig::default(),
    };
    apply_overrides(&mut config, global);
    let report = experiment::run_experiment(&config)?;
    let code = write_report(&report, &config, global, ReportFormat::CsvBundle)?;
    if report.verdict != Verdict::ControlNoMixing {
        eprintln!("control did not register: {:?}", report.verdict);
    }
    Ok(code)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { config, format } => cmd_run(config, format.as_deref(), g),
        Command::Corr {
            problem,
            n_max,
            f,
            g: obs,
        } => cmd_corr(problem, g, *n_max, f.as_deref(), obs.as_deref()),
        Command::RnMass { problem } => cmd_rn_mass(problem, g),
        Command::Pairwise { problem, n, m } => cmd_pairwise(problem, g, n, m),
        Command::QuasiReport { problem, grid } => cmd_quasi(problem, g, grid.as_deref()),
        Command::RotationControl { psi, depth } => cmd_rotation_control(g, psi, *depth),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.global.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| TrlError::Config(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
