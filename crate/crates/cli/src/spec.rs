//! Compact `kind:arg:arg` spellings of systems, schedules and twists.

use trl_core::experiment::{
    Exact, MeasureConfig, PsiConfig, ScheduleConfig, ScheduleKindConfig, SystemConfig, TwistConfig,
};
use trl_core::rational;

fn exact(text: &str) -> Result<Exact, String> {
    rational::parse_decimal(text)
        .map(Exact)
        .ok_or_else(|| format!("`{text}` is not a rational"))
}

fn float(text: &str) -> Result<f64, String> {
    text.parse()
        .map_err(|_| format!("`{text}` is not a number"))
}

fn int<T: std::str::FromStr>(text: &str) -> Result<T, String> {
    text.parse()
        .map_err(|_| format!("`{text}` is not an integer"))
}

fn split(text: &str) -> (&str, Vec<&str>) {
    let mut parts = text.split(':');
    let kind = parts.next().unwrap_or("");
    (kind, parts.collect())
}

fn arity(kind: &str, args: &[&str], n: usize) -> Result<(), String> {
    if args.len() != n {
        return Err(format!(
            "`{kind}` takes {n} argument(s), got {}",
            args.len()
        ));
    }
    Ok(())
}

/// `power:C:A`, `exponential:BASE:OFFSET`, `constant:V`.
pub fn psi(text: &str) -> Result<PsiConfig, String> {
    let (kind, args) = split(text);
    match kind {
        "power" => {
            arity(kind, &args, 2)?;
            Ok(PsiConfig::Power {
                c: exact(args[0])?,
                a: float(args[1])?,
            })
        }
        "exponential" => {
            arity(kind, &args, 2)?;
            Ok(PsiConfig::Exponential {
                base: int(args[0])?,
                offset: int(args[1])?,
            })
        }
        "constant" => {
            arity(kind, &args, 1)?;
            Ok(PsiConfig::Constant {
                value: exact(args[0])?,
            })
        }
        _ => Err(format!("unknown psi `{kind}`")),
    }
}

/// `doubling`, `tripling`, `beta:K`, `gauss`, `rotation:ALPHA`,
/// `rotation-cf:A1,A2,...`, `liouville:PSI`.
pub fn system(text: &str) -> Result<SystemConfig, String> {
    let (kind, args) = split(text);
    match kind {
        "doubling" => Ok(SystemConfig::Doubling),
        "tripling" => Ok(SystemConfig::BetaInt { beta: 3 }),
        "beta" => {
            arity(kind, &args, 1)?;
            Ok(SystemConfig::BetaInt {
                beta: int(args[0])?,
            })
        }
        "gauss" => Ok(SystemConfig::Gauss),
        "rotation" => {
            arity(kind, &args, 1)?;
            Ok(SystemConfig::Rotation {
                alpha: exact(args[0])?,
            })
        }
        "rotation-cf" => {
            arity(kind, &args, 1)?;
            let partial_quotients = args[0].split(',').map(int).collect::<Result<_, _>>()?;
            Ok(SystemConfig::RotationCf { partial_quotients })
        }
        "liouville" => Ok(SystemConfig::Liouville {
            psi: psi(&args.join(":"))?,
            depth: 3,
            bit_budget: 4096,
        }),
        _ => Err(format!("unknown system `{kind}`")),
    }
}

/// `lebesgue`, `gauss`, `cdf:PATH`.
pub fn measure(text: &str) -> Result<MeasureConfig, String> {
    match text.split_once(':') {
        None if text == "lebesgue" => Ok(MeasureConfig::Lebesgue),
        None if text == "gauss" => Ok(MeasureConfig::Gauss),
        Some(("cdf", path)) => Ok(MeasureConfig::CdfTable {
            path: path.into(),
            regularity: None,
        }),
        _ => Err(format!("unknown measure `{text}`")),
    }
}

/// `power:C:A`, `harmonic:C`, `harmonic-log:C:B`, `constant:M`, `psi:PSI`,
/// `list:M1,M2,...`.
pub fn schedule(text: &str, cap: Option<&str>) -> Result<ScheduleConfig, String> {
    let (kind, args) = split(text);
    let kind_config = match kind {
        "power" => {
            arity(kind, &args, 2)?;
            ScheduleKindConfig::Power {
                c: exact(args[0])?,
                a: float(args[1])?,
            }
        }
        "harmonic" => {
            arity(kind, &args, 1)?;
            ScheduleKindConfig::Harmonic { c: exact(args[0])? }
        }
        "harmonic-log" => {
            arity(kind, &args, 2)?;
            ScheduleKindConfig::HarmonicLog {
                c: exact(args[0])?,
                b: float(args[1])?,
            }
        }
        "constant" => {
            arity(kind, &args, 1)?;
            ScheduleKindConfig::Constant { m: exact(args[0])? }
        }
        "psi" => ScheduleKindConfig::Psi {
            psi: psi(&args.join(":"))?,
            reference: None,
        },
        "list" => {
            arity(kind, &args, 1)?;
            ScheduleKindConfig::List {
                masses: args[0].split(',').map(exact).collect::<Result<_, _>>()?,
            }
        }
        _ => return Err(format!("unknown schedule `{kind}`")),
    };
    Ok(ScheduleConfig {
        kind: kind_config,
        cap: cap.map(exact).transpose()?,
    })
}

/// `identity`, `constant:Y`, `affine:SLOPE:INTERCEPT`, `tent:CENTER:SLOPE`,
/// `abs-tent`. A bare `tent` is the absolute-value tent.
pub fn twist(text: &str) -> Result<TwistConfig, String> {
    let (kind, args) = split(text);
    match kind {
        "identity" => Ok(TwistConfig::Identity),
        "abs-tent" => Ok(TwistConfig::Tent {
            center: exact("1/2")?,
            slope: exact("1")?,
        }),
        "constant" => {
            arity(kind, &args, 1)?;
            Ok(TwistConfig::Constant { y: exact(args[0])? })
        }
        "affine" => {
            arity(kind, &args, 2)?;
            Ok(TwistConfig::Affine {
                slope: exact(args[0])?,
                intercept: exact(args[1])?,
            })
        }
        "tent" if args.is_empty() => twist("abs-tent"),
        "tent" => {
            arity(kind, &args, 2)?;
            Ok(TwistConfig::Tent {
                center: exact(args[0])?,
                slope: exact(args[1])?,
            })
        }
        _ => Err(format!("unknown twist `{kind}`")),
    }
}
