//! JSON configuration of an experiment and its translation into models.

use crate::dynamics::{build_liouville_rotation, LiouvilleRotation, MapSystem, PrecisionPolicy};
use crate::error::{Result, TrlError};
use crate::measure::{CdfTable, MeasureModel, Regularity};
use crate::rational::{self, rat, Rational};
use crate::recurrence::RadiusMode;
use crate::schedule::{PsiSpec, TargetSchedule};
use crate::twist::{AffineFormula, TwistPiece, TwistSpec};
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Seeds may not need more bits than this.
pub const MAX_WORKING_BITS: u32 = 1 << 16;

/// A rational written either as a string (`"3/8"`, `"0.1"`) or as a JSON
/// number, which is read through its shortest decimal spelling.
#[derive(Clone, Debug, PartialEq)]
pub struct Exact(pub Rational);

impl Serialize for Exact {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&rational::display(&self.0))
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        let value = match Raw::deserialize(d)? {
            Raw::Text(t) => rational::parse_decimal(&t),
            Raw::Number(x) => rational::from_f64_decimal(x),
        };
        value
            .map(Exact)
            .ok_or_else(|| serde::de::Error::custom("expected a rational such as \"3/8\""))
    }
}

impl From<Rational> for Exact {
    fn from(value: Rational) -> Self {
        Exact(value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PsiConfig {
    Power { c: Exact, a: f64 },
    Exponential { base: u32, offset: u32 },
    Constant { value: Exact },
}

impl PsiConfig {
    pub fn build(&self) -> PsiSpec {
        match self {
            PsiConfig::Power { c, a } => PsiSpec::Power {
                c: c.0.clone(),
                a: *a,
            },
            PsiConfig::Exponential { base, offset } => PsiSpec::Exponential {
                base: *base,
                offset: *offset,
            },
            PsiConfig::Constant { value } => PsiSpec::Constant(value.0.clone()),
        }
    }
}

fn half() -> Exact {
    Exact(rat(1, 2))
}

fn one() -> Exact {
    Exact(rat(1, 1))
}

fn default_depth() -> usize {
    3
}

fn default_bit_budget() -> u64 {
    4096
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemConfig {
    Doubling,
    BetaInt {
        beta: u32,
    },
    Gauss,
    Rotation {
        alpha: Exact,
    },
    RotationCf {
        partial_quotients: Vec<u64>,
    },
    /// A rotation number built greedily from `psi`.
    Liouville {
        psi: PsiConfig,
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default = "default_bit_budget")]
        bit_budget: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureConfig {
    Lebesgue,
    Gauss,
    CdfTable {
        path: PathBuf,
        #[serde(default)]
        regularity: Option<Regularity>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleKindConfig {
    Power {
        c: Exact,
        a: f64,
    },
    Harmonic {
        c: Exact,
    },
    HarmonicLog {
        c: Exact,
        b: f64,
    },
    Constant {
        m: Exact,
    },
    /// Balls of radius `psi(n)` around `reference` (default `1/2`) under the
    /// experiment's measure.
    Psi {
        psi: PsiConfig,
        #[serde(default)]
        reference: Option<Exact>,
    },
    List {
        masses: Vec<Exact>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(flatten)]
    pub kind: ScheduleKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<Exact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceConfig {
    pub lo: Exact,
    pub hi: Exact,
    pub slope: Exact,
    pub intercept: Exact,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TwistConfig {
    #[default]
    Identity,
    Constant {
        y: Exact,
    },
    Affine {
        slope: Exact,
        intercept: Exact,
    },
    /// Defaults to the absolute-value tent `|x - 1/2|`.
    Tent {
        #[serde(default = "half")]
        center: Exact,
        #[serde(default = "one")]
        slope: Exact,
    },
    PwAffine {
        pieces: Vec<PieceConfig>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    #[default]
    CsvBundle,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

/// Finite-horizon cutoffs for the verdicts. They label evidence, not proof.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Chung–Erdős bound required at the largest `N` of the grid.
    pub ce_bound: f64,
    pub min_hits: usize,
    /// Fraction of seeds that must reach `min_hits`.
    pub hit_fraction: f64,
    /// First tail index; `ceil(3N/4)` when absent.
    pub tail_start: Option<usize>,
    /// Fraction of seeds that must hit at every convergent denominator.
    pub control_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ce_bound: 0.9,
            min_hits: 5,
            hit_fraction: 0.95,
            tail_start: None,
            control_fraction: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub n_max: usize,
    /// Used when exact correlations are unavailable.
    pub samples: usize,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            n_max: 12,
            samples: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuasiMethodConfig {
    /// Exact where it is cheap, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasiConfig {
    /// Values of `N`; a geometric grid ending at the horizon when absent.
    pub grid: Option<Vec<usize>>,
    pub method: QuasiMethodConfig,
    pub pair_budget: usize,
}

impl Default for QuasiConfig {
    fn default() -> Self {
        Self {
            grid: None,
            method: QuasiMethodConfig::Auto,
            pair_budget: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub system: SystemConfig,
    pub measure: MeasureConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub twist: TwistConfig,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub radius_mode: RadiusMode,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub quasi: QuasiConfig,
}

/// The models a configuration refers to.
#[derive(Clone, Debug)]
pub struct Built {
    pub system: MapSystem,
    pub measure: MeasureModel,
    pub schedule: TargetSchedule,
    pub twist: TwistSpec,
    pub liouville: Option<LiouvilleRotation>,
}

fn rat_vec(values: &[Exact]) -> Vec<Rational> {
    values.iter().map(|v| v.0.clone()).collect()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The tail window starts here.
    pub fn tail_start(&self) -> usize {
        self.thresholds
            .tail_start
            .unwrap_or_else(|| (3 * self.horizon).div_ceil(4))
    }

    pub fn build(&self) -> Result<Built> {
        if self.horizon == 0 {
            return Err(TrlError::Config("horizon must be positive".into()));
        }
        if self.samples == 0 {
            return Err(TrlError::Config("samples must be positive".into()));
        }
        let mut liouville = None;
        let system = match &self.system {
            SystemConfig::Doubling => MapSystem::doubling(),
            SystemConfig::BetaInt { beta } => MapSystem::beta_int(*beta)?,
            SystemConfig::Gauss => MapSystem::gauss_map(),
            SystemConfig::Rotation { alpha } => MapSystem::rotation(alpha.0.clone())?,
            SystemConfig::RotationCf { partial_quotients } => {
                let q: Vec<BigInt> = partial_quotients.iter().map(|&a| BigInt::from(a)).collect();
                MapSystem::rotation_from_cf(&q)?
            }
            SystemConfig::Liouville {
                psi,
                depth,
                bit_budget,
            } => {
                let lr = build_liouville_rotation(&psi.build(), *depth, *bit_budget)?;
                let system = lr.system()?;
                liouville = Some(lr);
                system
            }
        };
        let measure = match &self.measure {
            MeasureConfig::Lebesgue => MeasureModel::lebesgue(),
            MeasureConfig::Gauss => MeasureModel::gauss(),
            MeasureConfig::CdfTable { path, regularity } => {
                let table = CdfTable::from_csv_path(path)?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "cdf-table".into());
                MeasureModel::from_table(name, table).with_regularity(*regularity)
            }
        };
        if !measure.admissible() {
            return Err(TrlError::Config(format!(
                "measure {} is not admissible",
                measure.name
            )));
        }
        let mut schedule = match &self.schedule.kind {
            ScheduleKindConfig::Power { c, a } => TargetSchedule::power(c.0.clone(), *a),
            ScheduleKindConfig::Harmonic { c } => TargetSchedule::harmonic(c.0.clone()),
            ScheduleKindConfig::HarmonicLog { c, b } => {
                TargetSchedule::harmonic_log(c.0.clone(), *b)
            }
            ScheduleKindConfig::Constant { m } => TargetSchedule::constant(m.0.clone()),
            ScheduleKindConfig::Psi { psi, reference } => TargetSchedule::psi(
                psi.build(),
                measure.clone(),
                reference
                    .as_ref()
                    .map(|r| r.0.clone())
                    .unwrap_or_else(|| rational::rat(1, 2)),
            ),
            ScheduleKindConfig::List { masses } => TargetSchedule::list(rat_vec(masses))?,
        };
        if let Some(cap) = &self.schedule.cap {
            schedule = schedule.with_cap(cap.0.clone());
        }
        let twist = match &self.twist {
            TwistConfig::Identity => TwistSpec::identity(),
            TwistConfig::Constant { y } => TwistSpec::constant(y.0.clone())?,
            TwistConfig::Affine { slope, intercept } => {
                TwistSpec::affine(slope.0.clone(), intercept.0.clone())
            }
            TwistConfig::Tent { center, slope } => {
                TwistSpec::tent(center.0.clone(), slope.0.clone())?
            }
            TwistConfig::PwAffine { pieces } => TwistSpec::from_pieces(
                "pw-affine",
                pieces
                    .iter()
                    .map(|p| {
                        TwistPiece::new(
                            p.lo.0.clone(),
                            p.hi.0.clone(),
                            AffineFormula::new(p.slope.0.clone(), p.intercept.0.clone()),
                        )
                    })
                    .collect(),
            )?,
        };
        let bits = PrecisionPolicy::for_system(&system, self.horizon).working_bits;
        if bits > MAX_WORKING_BITS {
            return Err(TrlError::Config(format!(
                "horizon {} needs {bits} seed bits on {}, budget is {MAX_WORKING_BITS}",
                self.horizon, system.name
            )));
        }
        Ok(Built {
            system,
            measure,
            schedule,
            twist,
            liouville,
        })
    }

    /// SHA-256 of the canonical JSON of everything except the output section.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut canonical = self.clone();
        canonical.output = OutputConfig::default();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
