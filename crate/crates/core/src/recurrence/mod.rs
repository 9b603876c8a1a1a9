//! Twisted recurrence sets `R_n = {x : |T^n x - f(x)| < r}` where the ball
//! around `f(x)` carries mass `M_n`.
//!
//! The radius is `r_n(f(x))` in the default [`RadiusMode::AtFx`] and `r_n(x)`
//! in [`RadiusMode::AtX`]. For Lebesgue measure they coincide unless a ball
//! is clipped by an end of `[0, 1]`.

mod exact;
mod quasi;

pub use quasi::{
    chung_erdos_lower_bound, index_window, quasi_independence_report, quasi_report_cached,
    PairBoundConstants, PairCache, PairEntry, QuasiIndependenceReport, QuasiOptions,
};

use crate::dynamics::{MapSystem, Point, PrecisionPolicy, DEFAULT_INTERVAL_CAP};
use crate::error::{Result, TrlError};
use crate::mc::{self, MeanEstimate, SeedSampler};
use crate::measure::MeasureModel;
use crate::rational::{self, RatInterval, Rational};
use crate::schedule::{lebesgue_radius_exact, radius_for_mass, Mass, TargetSchedule};
use crate::twist::TwistSpec;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

/// Below this gap between distance and radius the float comparison is
/// redone in exact arithmetic. Both sides are accurate to a few ulps.
const EXACT_MARGIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusMode {
    AtX,
    #[default]
    AtFx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassEstimate {
    pub value: f64,
    pub exact: Option<Rational>,
    pub stderr: Option<f64>,
}

impl MassEstimate {
    fn exact(value: Rational) -> Self {
        Self {
            value: rational::to_f64(&value),
            exact: Some(value),
            stderr: None,
        }
    }

    fn estimated(est: MeanEstimate) -> Self {
        Self {
            value: est.mean,
            exact: None,
            stderr: Some(est.stderr),
        }
    }
}

/// Which of the times `1..=horizon` put the orbit of `seed` inside its ball.
#[derive(Clone, Debug, PartialEq)]
pub struct HitRecord {
    pub seed: f64,
    pub horizon: usize,
    pub mode: RadiusMode,
    bits: Vec<u64>,
    /// `|T^n x - f(x)|` for `n = 1..=horizon`, when requested.
    pub distances: Option<Vec<f64>>,
}

impl HitRecord {
    fn new(seed: f64, horizon: usize, mode: RadiusMode) -> Self {
        Self {
            seed,
            horizon,
            mode,
            bits: vec![0; horizon.div_ceil(64)],
            distances: None,
        }
    }

    fn set(&mut self, n: usize) {
        self.bits[(n - 1) / 64] |= 1 << ((n - 1) % 64);
    }

    pub fn contains(&self, n: usize) -> bool {
        n >= 1 && n <= self.horizon && self.bits[(n - 1) / 64] >> ((n - 1) % 64) & 1 == 1
    }

    pub fn times(&self) -> Vec<usize> {
        (1..=self.horizon).filter(|&n| self.contains(n)).collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Hits at times `n >= from`.
    pub fn count_from(&self, from: usize) -> usize {
        (from.max(1)..=self.horizon)
            .filter(|&n| self.contains(n))
            .count()
    }

    pub fn first(&self) -> Option<usize> {
        (1..=self.horizon).find(|&n| self.contains(n))
    }

    pub fn last(&self) -> Option<usize> {
        (1..=self.horizon).rev().find(|&n| self.contains(n))
    }

    /// Whether this record agrees with `longer` on `1..=self.horizon`.
    pub fn is_prefix_of(&self, longer: &HitRecord) -> bool {
        self.horizon <= longer.horizon
            && self.mode == longer.mode
            && (1..=self.horizon).all(|n| self.contains(n) == longer.contains(n))
    }
}

/// Seeds of a Monte Carlo run together with their hit records.
#[derive(Clone, Debug)]
pub struct Scan {
    pub horizon: usize,
    pub records: Vec<HitRecord>,
}

impl Scan {
    /// `mu(R_n)` estimates for `n = 1..=horizon`.
    pub fn per_n(&self) -> Vec<MeanEstimate> {
        (1..=self.horizon)
            .map(|n| {
                let hits = self.records.iter().filter(|r| r.contains(n)).count();
                MeanEstimate::from_bernoulli(hits, self.records.len())
            })
            .collect()
    }

    /// `mu(R_j ∩ R_k)` estimate.
    pub fn pair(&self, j: usize, k: usize) -> MeanEstimate {
        let hits = self
            .records
            .iter()
            .filter(|r| r.contains(j) && r.contains(k))
            .count();
        MeanEstimate::from_bernoulli(hits, self.records.len())
    }
}

/// A system, a measure, a schedule and a twist: everything that defines the
/// sets `R_n`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub system: MapSystem,
    pub measure: MeasureModel,
    pub schedule: TargetSchedule,
    pub twist: TwistSpec,
    pub mode: RadiusMode,
    /// Limit on enumerated cells or interval pieces in exact mode.
    pub cell_cap: usize,
}

impl Problem {
    pub fn new(
        system: MapSystem,
        measure: MeasureModel,
        schedule: TargetSchedule,
        twist: TwistSpec,
    ) -> Self {
        Self {
            system,
            measure,
            schedule,
            twist,
            mode: RadiusMode::default(),
            cell_cap: DEFAULT_INTERVAL_CAP,
        }
    }

    pub fn with_mode(mut self, mode: RadiusMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_cell_cap(mut self, cap: usize) -> Self {
        self.cell_cap = cap;
        self
    }

    fn require_exact(&self) -> Result<()> {
        if !self.system.is_affine_rational() {
            return Err(TrlError::MethodMismatch(format!(
                "exact recurrence masses need an affine system, got {}",
                self.system.name
            )));
        }
        if !self.measure.is_lebesgue() || self.system.invariant_measure != "lebesgue" {
            return Err(TrlError::MethodMismatch(
                "exact recurrence masses need Lebesgue measure".into(),
            ));
        }
        Ok(())
    }

    fn exact_mass(&self, n: usize) -> Result<Rational> {
        self.schedule
            .mass_exact(n)
            .ok_or_else(|| TrlError::MethodMismatch(format!("M_{n} has no exact rational value")))
    }

    pub fn masses(&self, horizon: usize) -> Vec<Mass> {
        (1..=horizon).map(|n| self.schedule.mass(n)).collect()
    }

    /// Hit record of `x` up to `horizon`.
    pub fn hit_times(&self, x: &Point, horizon: usize) -> Result<HitRecord> {
        self.hit_record(x, horizon, &self.masses(horizon), false)
    }

    /// As [`Problem::hit_times`], also keeping the distances.
    pub fn hit_times_with_distances(&self, x: &Point, horizon: usize) -> Result<HitRecord> {
        self.hit_record(x, horizon, &self.masses(horizon), true)
    }

    /// Lebesgue problems with exact masses compare distances in exact
    /// arithmetic; everything else compares in double precision.
    fn hit_record(
        &self,
        x: &Point,
        horizon: usize,
        masses: &[Mass],
        keep: bool,
    ) -> Result<HitRecord> {
        let policy = PrecisionPolicy::for_system(&self.system, horizon);
        let orbit = self.system.iterate_orbit(x.clone(), horizon, &policy)?;
        let mut record = HitRecord::new(x.to_f64(), horizon, self.mode);
        let mut distances = keep.then(|| Vec::with_capacity(horizon));
        let exact = self.measure.is_lebesgue() && masses.iter().all(|m| m.exact.is_some());
        if exact {
            let xr = x.to_rational();
            let fx = self.twist.evaluate_exact(&xr);
            let center = match self.mode {
                RadiusMode::AtFx => &fx,
                RadiusMode::AtX => &xr,
            };
            let (fx_f, center_f) = (rational::to_f64(&fx), rational::to_f64(center));
            for n in 1..=horizon {
                let point = &orbit.points[n];
                if distances.is_none() {
                    // decide in floating point unless the margin is too thin
                    let r_f = radius_for_mass(&self.measure, center_f, masses[n - 1].value)?.radius;
                    let d_f = (point.to_f64() - fx_f).abs();
                    if (d_f - r_f).abs() > EXACT_MARGIN {
                        if d_f < r_f {
                            record.set(n);
                        }
                        continue;
                    }
                }
                let r = lebesgue_radius_exact(center, masses[n - 1].exact.as_ref().unwrap());
                let d = (point.to_rational() - &fx).abs();
                if let Some(ds) = distances.as_mut() {
                    ds.push(rational::to_f64(&d));
                }
                if d < r {
                    record.set(n);
                }
            }
        } else {
            let xf = x.to_f64();
            let fx = self.twist.evaluate(xf);
            let center = match self.mode {
                RadiusMode::AtFx => fx,
                RadiusMode::AtX => xf,
            };
            for n in 1..=horizon {
                let r = radius_for_mass(&self.measure, center, masses[n - 1].value)?.radius;
                let d = (orbit.points[n].to_f64() - fx).abs();
                if let Some(ds) = distances.as_mut() {
                    ds.push(d);
                }
                if d < r {
                    record.set(n);
                }
            }
        }
        record.distances = distances;
        Ok(record)
    }

    /// Draws `samples` seeds from the measure and records their hits. The
    /// result depends on `seed` only, not on the number of worker threads.
    pub fn scan(&self, horizon: usize, samples: usize, seed: u64) -> Result<Scan> {
        let sampler = SeedSampler::new(&self.system, &self.measure, horizon);
        let masses = self.masses(horizon);
        let records = mc::map_samples(samples, |i| {
            let x = sampler.seed(seed, i)?;
            self.hit_record(&x, horizon, &masses, false)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Scan { horizon, records })
    }

    pub fn measure_rn(&self, n: usize, method: MassMethod) -> Result<MassEstimate> {
        match method {
            MassMethod::Exact => Ok(MassEstimate::exact(self.measure_rn_exact(n)?)),
            MassMethod::MonteCarlo { samples, seed } => {
                let scan = self.scan(n, samples, seed)?;
                Ok(MassEstimate::estimated(scan.per_n()[n - 1]))
            }
        }
    }

    /// `mu(R_n)` as an exact rational. Integer-slope maps use a closed form
    /// that does not enumerate the `beta^n` cells.
    pub fn measure_rn_exact(&self, n: usize) -> Result<Rational> {
        self.require_exact()?;
        let mass = self.exact_mass(n)?;
        match self.system.uniform_beta() {
            Some(beta) => Ok(exact::rn_mass_beta(beta, &self.twist, &mass, n, self.mode)),
            None => self.measure_rn_cells(n),
        }
    }

    /// `mu(R_n)` by walking every continuity cell of `T^n`.
    pub fn measure_rn_cells(&self, n: usize) -> Result<Rational> {
        self.require_exact()?;
        let mass = self.exact_mass(n)?;
        exact::rn_mass_cells(
            &self.system,
            &self.twist,
            &mass,
            n,
            self.mode,
            self.cell_cap,
        )
    }

    /// `mu(R_n ∩ R_{n+m})`.
    pub fn pairwise_mass(&self, n: usize, m: usize, method: MassMethod) -> Result<MassEstimate> {
        match method {
            MassMethod::Exact => Ok(MassEstimate::exact(self.pairwise_exact(n, m)?)),
            MassMethod::MonteCarlo { samples, seed } => {
                let scan = self.scan(n + m, samples, seed)?;
                Ok(MassEstimate::estimated(scan.pair(n, n + m)))
            }
        }
    }

    /// The open ball `B(y, r_n(y))` clipped to `[0, 1]`.
    fn target_ball(&self, y: &Rational, n: usize) -> Result<RatInterval> {
        let r = lebesgue_radius_exact(y, &self.exact_mass(n)?);
        Ok(RatInterval::new(
            rational::rmax(y - &r, Rational::zero()),
            rational::rmin(y + &r, Rational::one()),
        ))
    }

    /// Exact `mu(R_n ∩ R_{n+m})`.
    ///
    /// A constant twist with centered radii makes `R_n = T^-n B_n` for a
    /// fixed ball, and invariance reduces the pair to `mu(B_n ∩ T^-m B_{n+m})`.
    pub fn pairwise_exact(&self, n: usize, m: usize) -> Result<Rational> {
        self.require_exact()?;
        if m == 0 {
            return self.measure_rn_exact(n);
        }
        if let (Some(y), RadiusMode::AtFx) = (self.twist.constant_value(), self.mode) {
            let b1 = self.target_ball(&y, n)?;
            let b2 = self.target_ball(&y, n + m)?;
            return match self.system.uniform_beta() {
                Some(beta) => Ok(exact::ball_pair_beta(beta, &b1, &b2, m)),
                None => self.system.preimage_overlap(&b2, &b1, m),
            };
        }
        let (m1, m2) = (self.exact_mass(n)?, self.exact_mass(n + m)?);
        match self.system.uniform_beta() {
            Some(beta) => exact::pair_mass_beta(
                beta,
                &self.twist,
                (&m1, &m2),
                n,
                m,
                self.mode,
                self.cell_cap,
            ),
            None => exact::pair_mass_cells(
                &self.system,
                &self.twist,
                (&m1, &m2),
                n,
                m,
                self.mode,
                self.cell_cap,
            ),
        }
    }

    /// Exact pair mass with the cell walk for both levels, ignoring the
    /// shortcuts above.
    pub fn pairwise_cells(&self, n: usize, m: usize) -> Result<Rational> {
        self.require_exact()?;
        let (m1, m2) = (self.exact_mass(n)?, self.exact_mass(n + m)?);
        exact::pair_mass_cells(
            &self.system,
            &self.twist,
            (&m1, &m2),
            n,
            m,
            self.mode,
            self.cell_cap,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn doubling(schedule: TargetSchedule, twist: TwistSpec) -> Problem {
        Problem::new(
            MapSystem::doubling(),
            MeasureModel::lebesgue(),
            schedule,
            twist,
        )
    }

    #[test]
    fn hit_examples() {
        let p = doubling(TargetSchedule::constant(rat(1, 5)), TwistSpec::identity());
        let rec = p.hit_times(&Point::Exact(rat(1, 3)), 6).unwrap();
        assert_eq!(rec.times(), vec![2, 4, 6]);
        let p = doubling(
            TargetSchedule::constant(rat(1, 5)),
            TwistSpec::constant(rat(1, 3)).unwrap(),
        );
        let rec = p
            .hit_times_with_distances(&Point::Exact(rat(1, 3)), 6)
            .unwrap();
        assert_eq!(rec.times(), vec![2, 4, 6]);
        assert_eq!(rec.distances.unwrap()[0], 1.0 / 3.0);
    }

    #[test]
    fn rn_examples() {
        let p = doubling(TargetSchedule::constant(rat(1, 10)), TwistSpec::identity());
        assert_eq!(p.measure_rn_exact(1).unwrap(), rat(1, 10));
        assert_eq!(p.measure_rn_exact(2).unwrap(), rat(7, 60));
        assert_eq!(p.measure_rn_cells(2).unwrap(), rat(7, 60));
    }

    #[test]
    fn pair_examples() {
        let p = doubling(
            TargetSchedule::constant(rat(1, 4)),
            TwistSpec::constant(rat(1, 8)).unwrap(),
        );
        assert_eq!(p.pairwise_exact(1, 1).unwrap(), rat(1, 8));
        assert_eq!(p.pairwise_cells(1, 1).unwrap(), rat(1, 8));
        assert_eq!(
            p.pairwise_exact(3, 0).unwrap(),
            p.measure_rn_exact(3).unwrap()
        );
    }

    #[test]
    fn gauss_exact_is_a_mismatch() {
        let p = Problem::new(
            MapSystem::gauss_map(),
            MeasureModel::gauss(),
            TargetSchedule::constant(rat(1, 10)),
            TwistSpec::identity(),
        );
        assert!(matches!(
            p.measure_rn_exact(1),
            Err(TrlError::MethodMismatch(_))
        ));
        let est = p
            .measure_rn(
                1,
                MassMethod::MonteCarlo {
                    samples: 2000,
                    seed: 1,
                },
            )
            .unwrap();
        assert!(est.stderr.unwrap() > 0.0);
    }

    #[test]
    fn record_accessors() {
        let mut r = HitRecord::new(0.0, 70, RadiusMode::AtFx);
        for n in [3, 64, 65, 70] {
            r.set(n);
        }
        assert_eq!(r.count(), 4);
        assert_eq!(r.first(), Some(3));
        assert_eq!(r.last(), Some(70));
        assert_eq!(r.count_from(65), 2);
        assert!(!r.contains(0) && !r.contains(71));
    }
}
