//! Correlations of step observables, `int (f o T^n) g dmu - int f dmu int g dmu`,
//! and exponential decay fits `p(n) = C gamma^n`.

use crate::dynamics::MapSystem;
use crate::error::{Result, TrlError};
use crate::mc::{self, MeanEstimate, SeedSampler};
use crate::measure::MeasureModel;
use crate::numeric::fit_line;
use crate::rational::{self, rat, RatInterval, Rational};
use num_traits::{One, Signed, Zero};
use serde::Serialize;

pub const NOISE_FLOOR: f64 = 1e-14;
/// Fits with a larger rate are reported as no decay.
pub const GAMMA_MAX: f64 = 0.9;
/// Fits explaining less of the log-variance are reported as no decay.
pub const MIN_R_SQUARED: f64 = 0.5;
pub const MIN_FIT_POINTS: usize = 3;

/// A right-continuous step function on `[0, 1]`: `values[i]` on
/// `[breaks[i], breaks[i + 1])`, with the last value also taken at `1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSpec {
    breaks: Vec<Rational>,
    values: Vec<Rational>,
}

impl ObservableSpec {
    pub fn new(breaks: Vec<Rational>, values: Vec<Rational>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(TrlError::InvalidObservable(
                "need one more breakpoint than values".into(),
            ));
        }
        if !breaks[0].is_zero() || !breaks.last().unwrap().is_one() {
            return Err(TrlError::InvalidObservable(
                "breakpoints must run from 0 to 1".into(),
            ));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrlError::InvalidObservable(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(value: Rational) -> Self {
        Self {
            breaks: vec![Rational::zero(), Rational::one()],
            values: vec![value],
        }
    }

    /// `chi_[lo, hi)`. Endpoint conventions do not change any integral, and
    /// `chi_[0, hi]` is represented as `chi_[0, hi)`.
    pub fn indicator(lo: Rational, hi: Rational) -> Result<Self> {
        if lo < Rational::zero() || hi > Rational::one() || lo >= hi {
            return Err(TrlError::InvalidObservable(format!(
                "indicator of [{}, {}) is not a nonempty subinterval of [0,1]",
                rational::display(&lo),
                rational::display(&hi)
            )));
        }
        let mut breaks = vec![Rational::zero()];
        let mut values = Vec::new();
        if lo.is_positive() {
            breaks.push(lo.clone());
            values.push(Rational::zero());
        }
        values.push(Rational::one());
        if hi < Rational::one() {
            breaks.push(hi);
            values.push(Rational::zero());
        }
        breaks.push(Rational::one());
        Self::new(breaks, values)
    }

    pub fn pieces(&self) -> impl Iterator<Item = (RatInterval, &Rational)> {
        self.breaks
            .windows(2)
            .zip(&self.values)
            .map(|(w, v)| (RatInterval::new(w[0].clone(), w[1].clone()), v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let idx = self
            .breaks
            .partition_point(|b| rational::to_f64(b) <= x)
            .saturating_sub(1)
            .min(self.values.len() - 1);
        rational::to_f64(&self.values[idx])
    }

    pub fn eval_exact(&self, x: &Rational) -> Rational {
        let idx = self
            .breaks
            .partition_point(|b| b <= x)
            .saturating_sub(1)
            .min(self.values.len() - 1);
        self.values[idx].clone()
    }

    /// Total jump variation plus `sup |g|`.
    pub fn bv_norm(&self) -> Rational {
        let variation: Rational = self.values.windows(2).map(|w| (&w[1] - &w[0]).abs()).sum();
        let sup = self
            .values
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(Rational::zero);
        variation + sup
    }

    pub fn integral(&self, measure: &MeasureModel) -> f64 {
        self.pieces()
            .map(|(iv, v)| {
                rational::to_f64(v)
                    * (measure.cdf(rational::to_f64(&iv.hi))
                        - measure.cdf(rational::to_f64(&iv.lo)))
            })
            .sum()
    }

    /// Lebesgue integral in exact arithmetic.
    pub fn integral_exact(&self) -> Rational {
        self.pieces().map(|(iv, v)| v * iv.len()).sum()
    }

    pub fn l1_norm(&self, measure: &MeasureModel) -> f64 {
        self.pieces()
            .map(|(iv, v)| {
                rational::to_f64(&v.abs())
                    * (measure.cdf(rational::to_f64(&iv.hi))
                        - measure.cdf(rational::to_f64(&iv.lo)))
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelationMethod {
    ExactPreimage,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub exact: Option<Rational>,
    pub stderr: Option<f64>,
}

fn require_exact(system: &MapSystem, measure: &MeasureModel) -> Result<()> {
    if !system.is_affine_rational() {
        return Err(TrlError::MethodMismatch(format!(
            "exact preimages are unavailable for {}",
            system.name
        )));
    }
    if !measure.is_lebesgue() || system.invariant_measure != "lebesgue" {
        return Err(TrlError::MethodMismatch(
            "exact preimage pairing needs Lebesgue measure preserved by the map".into(),
        ));
    }
    Ok(())
}

/// `int (f o T^n) g - int f int g` for Lebesgue-preserving affine maps.
pub fn correlation_exact(
    system: &MapSystem,
    f: &ObservableSpec,
    g: &ObservableSpec,
    n: usize,
) -> Result<Rational> {
    require_exact(system, &MeasureModel::lebesgue())?;
    let mut paired = Rational::zero();
    for (fi, fv) in f.pieces() {
        if fv.is_zero() {
            continue;
        }
        let pre = system.preimage_intervals(&fi, n)?;
        for (gj, gv) in g.pieces() {
            if gv.is_zero() {
                continue;
            }
            paired += fv * gv * pre.set.intersect_interval(&gj).total_length();
        }
    }
    Ok(paired - f.integral_exact() * g.integral_exact())
}

pub fn correlation(
    system: &MapSystem,
    measure: &MeasureModel,
    f: &ObservableSpec,
    g: &ObservableSpec,
    n: usize,
    method: CorrelationMethod,
) -> Result<Correlation> {
    match method {
        CorrelationMethod::ExactPreimage => {
            require_exact(system, measure)?;
            let exact = correlation_exact(system, f, g, n)?;
            Ok(Correlation {
                value: rational::to_f64(&exact),
                exact: Some(exact),
                stderr: None,
            })
        }
        CorrelationMethod::MonteCarlo { samples, seed } => {
            let sampler = SeedSampler::new(system, measure, n);
            let values = mc::map_samples(samples, |i| -> Result<f64> {
                let x = sampler.seed(seed, i)?;
                let gx = g.eval(x.to_f64());
                let orbit = sampler.orbit(x, n)?;
                Ok(f.eval(orbit.last().to_f64()) * gx)
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
            let est = MeanEstimate::from_values(&values);
            Ok(Correlation {
                value: est.mean - f.integral(measure) * g.integral(measure),
                exact: None,
                stderr: Some(est.stderr),
            })
        }
    }
}

/// `p(n) = C gamma^n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayModel {
    pub c: f64,
    pub gamma: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub r_squared: f64,
    pub n_range: (usize, usize),
    pub points_used: usize,
    pub noise_floor: f64,
}

impl DecayModel {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            residual: 0.0,
            r_squared: 1.0,
            n_range: (0, 0),
            points_used: 0,
            noise_floor: NOISE_FLOOR,
        }
    }

    pub fn p(&self, n: f64) -> f64 {
        self.c * self.gamma.powf(n)
    }

    /// `sup_n p(n)`, attained at `n = 1`.
    pub fn sup(&self) -> f64 {
        self.p(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum FitOutcome {
    Fitted(DecayModel),
    /// Fewer than three points above the noise floor.
    Degenerate {
        above_floor: usize,
    },
    /// A line was fitted but it does not describe exponential decay.
    NoDecay {
        gamma: f64,
        r_squared: f64,
        points_used: usize,
    },
}

impl FitOutcome {
    pub fn model(&self) -> Option<&DecayModel> {
        match self {
            FitOutcome::Fitted(m) => Some(m),
            _ => None,
        }
    }
}

/// Least squares on `(n, ln |corr_n|)` over the points above `noise_floor`.
pub fn fit_decay(series: &[(usize, f64)], noise_floor: f64) -> FitOutcome {
    let kept: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, v)| v.abs() > noise_floor)
        .map(|&(n, v)| (n as f64, v.abs().ln()))
        .collect();
    if kept.len() < MIN_FIT_POINTS {
        return FitOutcome::Degenerate {
            above_floor: kept.len(),
        };
    }
    let Some(line) = fit_line(&kept) else {
        return FitOutcome::Degenerate {
            above_floor: kept.len(),
        };
    };
    let gamma = line.slope.exp();
    if gamma >= GAMMA_MAX || line.r_squared < MIN_R_SQUARED {
        return FitOutcome::NoDecay {
            gamma,
            r_squared: line.r_squared,
            points_used: kept.len(),
        };
    }
    let ns = series
        .iter()
        .filter(|(_, v)| v.abs() > noise_floor)
        .map(|p| p.0);
    let n_range = (ns.clone().min().unwrap(), ns.max().unwrap());
    FitOutcome::Fitted(DecayModel {
        c: line.intercept.exp(),
        gamma,
        residual: line.residual,
        r_squared: line.r_squared,
        n_range,
        points_used: kept.len(),
        noise_floor,
    })
}

/// The fixed indicator family used to estimate a system's decay rate. The
/// endpoints are not dyadic, so no member is exactly independent of its own
/// preimages under the doubling map.
pub fn decay_family() -> Vec<ObservableSpec> {
    [(0, 1, 1, 3), (1, 5, 3, 5), (2, 7, 5, 7)]
        .iter()
        .map(|&(a, b, c, d)| ObservableSpec::indicator(rat(a, b), rat(c, d)).expect("valid"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayPoint {
    pub n: usize,
    /// `max |corr(f, g, n)| / (||f||_1 ||g||_BV)` over the family.
    pub normalized: f64,
    /// Standard error of the maximizing entry, zero in exact mode.
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayEstimate {
    pub series: Vec<DecayPoint>,
    pub outcome: FitOutcome,
}

/// Normalized correlations of [`decay_family`] for `n = 1..=n_max` and the
/// resulting fit. In Monte Carlo mode points within three standard errors of
/// zero count as below the floor.
pub fn estimate_decay(
    system: &MapSystem,
    measure: &MeasureModel,
    n_max: usize,
    method: CorrelationMethod,
) -> Result<DecayEstimate> {
    let family = decay_family();
    let mut series = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut best = DecayPoint {
            n,
            normalized: 0.0,
            stderr: 0.0,
        };
        for f in &family {
            for g in &family {
                let corr = correlation(system, measure, f, g, n, method)?;
                let scale = f.l1_norm(measure) * rational::to_f64(&g.bv_norm());
                let v = corr.value.abs() / scale;
                if v >= best.normalized {
                    best.normalized = v;
                    best.stderr = corr.stderr.unwrap_or(0.0) / scale;
                }
            }
        }
        series.push(best);
    }
    let fit_input: Vec<(usize, f64)> = series
        .iter()
        .map(|p| {
            let v = if p.normalized > 3.0 * p.stderr {
                p.normalized
            } else {
                0.0
            };
            (p.n, v)
        })
        .collect();
    Ok(DecayEstimate {
        outcome: fit_decay(&fit_input, NOISE_FLOOR),
        series,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingGap {
    #[serde(serialize_with = "ser_rat")]
    pub gap: Rational,
    pub bound: f64,
    /// `gap / (3 mu(E) p(n))`.
    pub ratio: f64,
}

fn ser_rat<S: serde::Serializer>(value: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational::display(value))
}

/// `|mu(T^-n E ∩ F) - mu(E) mu(F)|` against `3 mu(E) p(n)`.
pub fn ball_mixing_gap(
    system: &MapSystem,
    measure: &MeasureModel,
    e: &RatInterval,
    f: &RatInterval,
    n: usize,
    decay: &DecayModel,
) -> Result<MixingGap> {
    require_exact(system, measure)?;
    let overlap = system.preimage_overlap(e, f, n)?;
    let gap = (overlap - e.len() * f.len()).abs();
    let bound = 3.0 * rational::to_f64(&e.len()) * decay.p(n as f64);
    Ok(MixingGap {
        ratio: rational::to_f64(&gap) / bound,
        gap,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn chi(a: i64, b: i64, c: i64, d: i64) -> ObservableSpec {
        ObservableSpec::indicator(rat(a, b), rat(c, d)).unwrap()
    }

    #[test]
    fn bv_norm_examples() {
        assert_eq!(chi(1, 5, 1, 2).bv_norm(), rat(3, 1));
        assert_eq!(ObservableSpec::constant(rat(7, 10)).bv_norm(), rat(7, 10));
        assert_eq!(chi(0, 1, 1, 2).bv_norm(), rat(2, 1));
    }

    #[test]
    fn correlation_examples() {
        let d = MapSystem::doubling();
        let half = chi(0, 1, 1, 2);
        assert_eq!(
            correlation_exact(&d, &half, &half, 1).unwrap(),
            Rational::zero()
        );
        assert_eq!(correlation_exact(&d, &half, &half, 0).unwrap(), rat(1, 4));
        let third = chi(0, 1, 1, 3);
        assert_eq!(
            correlation_exact(&d, &third, &third, 3).unwrap(),
            rat(1, 72)
        );
    }

    #[test]
    fn exact_method_needs_affine_lebesgue() {
        let half = chi(0, 1, 1, 2);
        let err = correlation(
            &MapSystem::gauss_map(),
            &MeasureModel::gauss(),
            &half,
            &half,
            1,
            CorrelationMethod::ExactPreimage,
        );
        assert!(matches!(err, Err(TrlError::MethodMismatch(_))));
        let err = correlation(
            &MapSystem::doubling(),
            &MeasureModel::gauss(),
            &half,
            &half,
            1,
            CorrelationMethod::ExactPreimage,
        );
        assert!(matches!(err, Err(TrlError::MethodMismatch(_))));
    }

    #[test]
    fn monte_carlo_is_close_to_exact() {
        let d = MapSystem::doubling();
        let f = chi(1, 7, 3, 5);
        let exact = correlation_exact(&d, &f, &f, 2).unwrap();
        let mc = correlation(
            &d,
            &MeasureModel::lebesgue(),
            &f,
            &f,
            2,
            CorrelationMethod::MonteCarlo {
                samples: 20_000,
                seed: 5,
            },
        )
        .unwrap();
        let se = mc.stderr.unwrap();
        assert!((mc.value - rational::to_f64(&exact)).abs() <= 4.0 * se);
    }

    #[test]
    fn fit_examples() {
        let series: Vec<(usize, f64)> =
            (1..=10).map(|n| (n, 0.3 * 0.5f64.powi(n as i32))).collect();
        let FitOutcome::Fitted(m) = fit_decay(&series, NOISE_FLOOR) else {
            panic!("synthetic series must fit");
        };
        assert!((m.c - 0.3).abs() < 1e-12);
        assert!((m.gamma - 0.5).abs() < 1e-12);
        let zeros: Vec<(usize, f64)> = (1..=10).map(|n| (n, 0.0)).collect();
        assert_eq!(
            fit_decay(&zeros, NOISE_FLOOR),
            FitOutcome::Degenerate { above_floor: 0 }
        );
        let flat: Vec<(usize, f64)> = (1..=10).map(|n| (n, 0.2)).collect();
        assert!(matches!(
            fit_decay(&flat, NOISE_FLOOR),
            FitOutcome::NoDecay { .. }
        ));
    }

    #[test]
    fn mixing_gap_examples() {
        let d = MapSystem::doubling();
        let quarter = RatInterval::new(Rational::zero(), rat(1, 4));
        let model = DecayModel::new(1.0, 0.5);
        let g2 =
            ball_mixing_gap(&d, &MeasureModel::lebesgue(), &quarter, &quarter, 2, &model).unwrap();
        assert_eq!(g2.gap, Rational::zero());
        let g1 =
            ball_mixing_gap(&d, &MeasureModel::lebesgue(), &quarter, &quarter, 1, &model).unwrap();
        assert_eq!(g1.gap, rat(1, 16));
        assert_eq!(g1.ratio, (1.0 / 16.0) / (3.0 * 0.25 * 0.5));
    }

    #[test]
    fn rotation_does_not_mix() {
        // alpha = [0; 1, 2, 1, 2, ...] truncated, close to sqrt(3) - 1
        let q: Vec<BigInt> = (0..30).map(|i| BigInt::from(1 + i % 2)).collect();
        let rot = MapSystem::rotation_from_cf(&q).unwrap();
        let half = RatInterval::new(Rational::zero(), rat(1, 2));
        let model = DecayModel::new(1.0, 0.5);
        // q_k alpha is close to an integer at denominators, take n = 41
        let g = ball_mixing_gap(&rot, &MeasureModel::lebesgue(), &half, &half, 41, &model).unwrap();
        let alpha = rot.rotation_number().unwrap();
        let dist = {
            let v = rational::frac(&(alpha * Rational::from_integer(BigInt::from(41))));
            rational::rmin(v.clone(), Rational::one() - v)
        };
        assert_eq!(g.gap, rat(1, 4) - dist);
        assert!(rational::to_f64(&g.gap) > 0.2);
    }
}
