//! Target-mass sequences `M_n`, the radii `r_n(x)` they induce, and the
//! summability and window diagnostics used to pick a zero or full law.

use crate::error::{Result, TrlError};
use crate::measure::MeasureModel;
use crate::numeric::bisect;
use crate::rational::{self, Rational};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive};
use serde::Serialize;
use std::io::Write;

/// Masses are kept inside `[CLIP, 1 - CLIP]`.
pub const CLIP: f64 = 1e-12;
pub const RADIUS_TOLERANCE: f64 = 1e-14;
pub const RADIUS_RESIDUAL: f64 = 1e-12;
pub const LIPSCHITZ_SLACK: f64 = 1e-10;

fn clip_exact() -> Rational {
    Rational::new(BigInt::one(), BigInt::from(10u64.pow(12)))
}

/// A decreasing approximation function `psi(q)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PsiSpec {
    /// `c q^-a`.
    Power {
        #[serde(serialize_with = "ser_rat")]
        c: Rational,
        a: f64,
    },
    /// `base^-(q + offset)`.
    Exponential {
        base: u32,
        offset: u32,
    },
    Constant(#[serde(serialize_with = "ser_rat")] Rational),
}

fn ser_rat<S: serde::Serializer>(value: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational::display(value))
}

fn integer_exponent(a: f64) -> Option<u32> {
    (a >= 0.0 && a.fract() == 0.0 && a <= 64.0).then_some(a as u32)
}

impl PsiSpec {
    pub fn eval_f64(&self, q: f64) -> f64 {
        match self {
            PsiSpec::Power { c, a } => rational::to_f64(c) * q.powf(-a),
            PsiSpec::Exponential { base, offset } => (*base as f64).powf(-(q + *offset as f64)),
            PsiSpec::Constant(c) => rational::to_f64(c),
        }
    }

    /// `psi(q)` as an exact rational when its size fits in `bit_budget` bits.
    pub fn eval_exact(&self, q: &BigInt, bit_budget: u64) -> Option<Rational> {
        match self {
            PsiSpec::Power { c, a } => {
                let a = integer_exponent(*a)?;
                if q.bits() * u64::from(a) > bit_budget {
                    return None;
                }
                Some(c / Rational::from_integer(q.pow(a)))
            }
            PsiSpec::Exponential { base, offset } => {
                if *base < 2 {
                    return None;
                }
                let e = (q + BigInt::from(*offset)).to_u64()?;
                let needed = e.checked_mul(u64::from(32 - base.leading_zeros()))?;
                if needed > bit_budget {
                    return None;
                }
                let denom = BigInt::from(*base).pow(u32::try_from(e).ok()?);
                Some(Rational::new(BigInt::one(), denom))
            }
            PsiSpec::Constant(c) => Some(c.clone()),
        }
    }

    pub fn summable(&self) -> bool {
        match self {
            PsiSpec::Power { a, .. } => *a > 1.0,
            PsiSpec::Exponential { .. } => true,
            PsiSpec::Constant(_) => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleKind {
    /// `c n^-a`.
    Power {
        c: Rational,
        a: f64,
    },
    /// `c / (n (ln n)^b)`, with `ln n` replaced by `max(1, ln n)` so the
    /// first terms stay finite. `b = 0` is the harmonic schedule.
    HarmonicLog {
        c: Rational,
        b: f64,
    },
    Constant(Rational),
    /// Mass of the ball of radius `psi(n)` around `reference`.
    Psi {
        psi: PsiSpec,
        measure: MeasureModel,
        reference: Rational,
    },
    /// Explicit `M_1, M_2, ...`; the last entry repeats past the end.
    List(Vec<Rational>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSchedule {
    pub kind: ScheduleKind,
    /// Optional upper cap, `M_n = min(cap, ...)`.
    pub cap: Option<Rational>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mass {
    pub value: f64,
    pub exact: Option<Rational>,
    pub clipped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub low_index: usize,
    pub window_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleFlags {
    pub summable: Tri,
    pub window_divergent: Tri,
    /// Finite-horizon window sums, attached when the flags are unknown.
    pub diagnostic: Option<Vec<WindowRow>>,
}

impl TargetSchedule {
    pub fn new(kind: ScheduleKind) -> Self {
        Self { kind, cap: None }
    }

    pub fn with_cap(mut self, cap: Rational) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn power(c: Rational, a: f64) -> Self {
        Self::new(ScheduleKind::Power { c, a })
    }

    pub fn harmonic(c: Rational) -> Self {
        Self::new(ScheduleKind::HarmonicLog { c, b: 0.0 })
    }

    pub fn harmonic_log(c: Rational, b: f64) -> Self {
        Self::new(ScheduleKind::HarmonicLog { c, b })
    }

    pub fn constant(m: Rational) -> Self {
        Self::new(ScheduleKind::Constant(m))
    }

    /// Lebesgue balls around `1/2`, so `M_n = min(1, 2 psi(n))` before
    /// clipping.
    pub fn psi_lebesgue(psi: PsiSpec) -> Self {
        Self::psi(psi, MeasureModel::lebesgue(), rational::rat(1, 2))
    }

    pub fn psi(psi: PsiSpec, measure: MeasureModel, reference: Rational) -> Self {
        Self::new(ScheduleKind::Psi {
            psi,
            measure,
            reference,
        })
    }

    pub fn list(masses: Vec<Rational>) -> Result<Self> {
        if masses.is_empty() {
            return Err(TrlError::InvalidSchedule("empty mass list".into()));
        }
        Ok(Self::new(ScheduleKind::List(masses)))
    }

    fn raw_exact(&self, n: usize) -> Option<Rational> {
        let nr = Rational::from_integer(BigInt::from(n));
        match &self.kind {
            ScheduleKind::Power { c, a } => {
                let a = integer_exponent(*a)?;
                Some(c / Rational::from_integer(BigInt::from(n).pow(a)))
            }
            ScheduleKind::HarmonicLog { c, b } => (*b == 0.0).then(|| c / nr),
            ScheduleKind::Constant(m) => Some(m.clone()),
            ScheduleKind::Psi {
                psi,
                measure,
                reference,
            } => {
                let r = psi.eval_exact(&BigInt::from(n), 1 << 16)?;
                measure.ball_mass_exact(reference, &r)
            }
            ScheduleKind::List(masses) => Some(masses[(n - 1).min(masses.len() - 1)].clone()),
        }
    }

    fn raw_f64(&self, n: usize) -> f64 {
        let nf = n as f64;
        match &self.kind {
            ScheduleKind::Power { c, a } => rational::to_f64(c) * nf.powf(-a),
            ScheduleKind::HarmonicLog { c, b } => {
                rational::to_f64(c) / (nf * nf.ln().max(1.0).powf(*b))
            }
            ScheduleKind::Constant(m) => rational::to_f64(m),
            ScheduleKind::Psi {
                psi,
                measure,
                reference,
            } => measure.ball_mass(rational::to_f64(reference), psi.eval_f64(nf)),
            ScheduleKind::List(masses) => rational::to_f64(&masses[(n - 1).min(masses.len() - 1)]),
        }
    }

    /// `M_n`, clipped into `(0, 1)`.
    pub fn mass(&self, n: usize) -> Mass {
        assert!(n >= 1, "schedules are indexed from 1");
        if let Some(mut m) = self.raw_exact(n) {
            if let Some(cap) = &self.cap {
                m = rational::rmin(m, cap.clone());
            }
            let eps = clip_exact();
            let mut clipped = false;
            if m < eps {
                // tiny exact masses are legitimate; only nonpositive ones clip
                if !m.is_positive() {
                    m = eps;
                    clipped = true;
                }
            } else if m > Rational::one() - &eps {
                m = Rational::one() - eps;
                clipped = true;
            }
            return Mass {
                value: rational::to_f64(&m),
                exact: Some(m),
                clipped,
            };
        }
        let mut v = self.raw_f64(n);
        if let Some(cap) = &self.cap {
            v = v.min(rational::to_f64(cap));
        }
        let clipped_v = if v.is_nan() || v <= 0.0 {
            CLIP
        } else {
            v.min(1.0 - CLIP)
        };
        Mass {
            value: clipped_v,
            exact: None,
            clipped: clipped_v != v,
        }
    }

    pub fn mass_at(&self, n: usize) -> f64 {
        self.mass(n).value
    }

    pub fn mass_exact(&self, n: usize) -> Option<Rational> {
        self.mass(n).exact
    }

    /// `sum_{n = floor(q ln N)}^{N} M_n`.
    pub fn window_sum(&self, q: f64, big_n: usize) -> Result<f64> {
        let low = window_low(q, big_n)?;
        Ok((low..=big_n).map(|n| self.mass_at(n)).sum())
    }

    pub fn window_table(&self, q: f64, grid: &[usize]) -> Result<Vec<WindowRow>> {
        grid.iter()
            .map(|&n| {
                Ok(WindowRow {
                    n,
                    low_index: window_low(q, n)?,
                    window_sum: self.window_sum(q, n)?,
                })
            })
            .collect()
    }

    pub fn classify(&self) -> ScheduleFlags {
        use Tri::*;
        let (summable, window) = match &self.kind {
            ScheduleKind::Power { a, .. } => {
                if *a > 1.0 {
                    (Yes, No)
                } else {
                    (No, Yes)
                }
            }
            ScheduleKind::HarmonicLog { b, .. } => {
                if *b > 1.0 {
                    (Yes, No)
                } else {
                    (No, Yes)
                }
            }
            ScheduleKind::Constant(_) => (No, Yes),
            ScheduleKind::Psi { psi, .. } => {
                if psi.summable() {
                    (Yes, No)
                } else {
                    (No, Yes)
                }
            }
            ScheduleKind::List(_) => (Unknown, Unknown),
        };
        let diagnostic = (summable == Unknown).then(|| {
            let limit = match &self.kind {
                ScheduleKind::List(m) => m.len().max(3),
                _ => 1000,
            };
            self.window_table(1.0, &geometric_grid(3, limit, 2.0))
                .unwrap_or_default()
        });
        ScheduleFlags {
            summable,
            window_divergent: window,
            diagnostic,
        }
    }
}

pub fn classify_schedule(schedule: &TargetSchedule) -> ScheduleFlags {
    schedule.classify()
}

fn window_low(q: f64, big_n: usize) -> Result<usize> {
    let low = (q * (big_n as f64).ln()).floor();
    // also rejects NaN
    if low.is_nan() || low < 1.0 {
        return Err(TrlError::InvalidSchedule(format!(
            "window start floor({q} ln {big_n}) is below 1"
        )));
    }
    Ok(low as usize)
}

/// Integers `start, start*factor, ...` rounded and deduplicated, ending at `end`.
pub fn geometric_grid(start: usize, end: usize, factor: f64) -> Vec<usize> {
    let mut grid = Vec::new();
    let mut x = start.max(1) as f64;
    while (x.round() as usize) < end {
        let v = x.round() as usize;
        if grid.last() != Some(&v) {
            grid.push(v);
        }
        x *= factor;
    }
    grid.push(end);
    grid
}

pub fn write_window_csv<W: Write>(rows: &[WindowRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RadiusSolution {
    pub radius: f64,
    /// `|ball_mass(x, radius) - M|`.
    pub residual: f64,
}

/// `r(x)` with `mu(B(x, r)) = mass`.
pub fn radius_for_mass(measure: &MeasureModel, x: f64, mass: f64) -> Result<RadiusSolution> {
    if mass >= 1.0 || mass.is_nan() {
        return Err(TrlError::UnreachableMass { center: x, mass });
    }
    if mass <= 0.0 {
        return Ok(RadiusSolution {
            radius: 0.0,
            residual: 0.0,
        });
    }
    let radius = if measure.is_lebesgue() {
        lebesgue_radius(x, mass)
    } else {
        let far = x.max(1.0 - x);
        if measure.ball_mass(x, far) < mass {
            return Err(TrlError::UnreachableMass { center: x, mass });
        }
        bisect(
            |r| measure.ball_mass(x, r) - mass,
            0.0,
            far,
            RADIUS_TOLERANCE,
        )
    };
    let residual = (measure.ball_mass(x, radius) - mass).abs();
    if residual > RADIUS_RESIDUAL {
        return Err(TrlError::Precision(format!(
            "radius at {x} for mass {mass} left residual {residual:e}"
        )));
    }
    Ok(RadiusSolution { radius, residual })
}

fn lebesgue_radius(x: f64, mass: f64) -> f64 {
    let half = mass / 2.0;
    if x < half {
        mass - x
    } else if x > 1.0 - half {
        x - (1.0 - mass)
    } else {
        half
    }
}

/// Exact Lebesgue radius for rational `x` and `mass` in `(0, 1)`.
pub fn lebesgue_radius_exact(x: &Rational, mass: &Rational) -> Rational {
    let half = mass / Rational::from_integer(BigInt::from(2));
    if x < &half {
        mass - x
    } else if x > &(Rational::one() - &half) {
        x - (Rational::one() - mass)
    } else {
        half
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pass: bool,
    pub pairs: usize,
    /// Largest `|r(x) - r(y)| / |x - y|` over pairs with `x != y`.
    pub worst_slope: f64,
    pub worst_pair: Option<(f64, f64)>,
}

pub fn lipschitz_radius_check(
    measure: &MeasureModel,
    mass: f64,
    pairs: &[(f64, f64)],
) -> Result<LipschitzReport> {
    let mut report = LipschitzReport {
        pass: true,
        pairs: pairs.len(),
        worst_slope: 0.0,
        worst_pair: None,
    };
    for &(x, y) in pairs {
        let rx = radius_for_mass(measure, x, mass)?.radius;
        let ry = radius_for_mass(measure, y, mass)?.radius;
        let (dr, dx) = ((rx - ry).abs(), (x - y).abs());
        if dr > dx + LIPSCHITZ_SLACK {
            report.pass = false;
        }
        if dx > 0.0 {
            let slope = dr / dx;
            if slope > report.worst_slope || report.worst_pair.is_none() {
                report.worst_slope = report.worst_slope.max(slope);
                report.worst_pair = Some((x, y));
            }
        }
    }
    Ok(report)
}
