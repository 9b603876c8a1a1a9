//! Borel probability measures on `[0, 1]` described by their distribution
//! function.
//!
//! Balls are always intersected with `[0, 1]`, so
//! `ball_mass(x, r) = F(min(x + r, 1)) - F(max(x - r, 0))`. Only measures with
//! a continuous CDF that is strictly increasing on the support can be sampled
//! by inversion or used to solve for target radii.

use crate::error::{Result, TrlError};
use crate::numeric::bisect;
use crate::rational::{self, Rational};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const INVERSE_TOLERANCE: f64 = 1e-14;
/// Relative rounding allowance in the Ahlfors check.
pub const AHLFORS_SLACK: f64 = 1e-12;

/// Declared upper Ahlfors regularity `mu(B(x, r)) <= c r^s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub c: f64,
    pub s: f64,
}

/// Piecewise-linear CDF through `(x_i, F_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfTable {
    xs: Vec<f64>,
    fs: Vec<f64>,
}

impl CdfTable {
    pub fn new(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        if xs.len() != fs.len() || xs.len() < 2 {
            return Err(TrlError::InvalidMeasure(
                "cdf table needs at least two (x, F) rows".into(),
            ));
        }
        if xs.iter().chain(fs.iter()).any(|v| !v.is_finite()) {
            return Err(TrlError::InvalidMeasure(
                "cdf table has non-finite entries".into(),
            ));
        }
        if xs[0] < 0.0 || *xs.last().unwrap() > 1.0 {
            return Err(TrlError::InvalidMeasure(
                "cdf table abscissae leave [0,1]".into(),
            ));
        }
        if fs[0] != 0.0 || *fs.last().unwrap() != 1.0 {
            return Err(TrlError::InvalidMeasure(
                "cdf table must start at F=0 and end at F=1".into(),
            ));
        }
        for w in xs.windows(2) {
            if w[1] <= w[0] {
                return Err(TrlError::InvalidMeasure(
                    "cdf table abscissae must be strictly increasing".into(),
                ));
            }
        }
        for w in fs.windows(2) {
            if w[1] < w[0] {
                return Err(TrlError::InvalidMeasure("cdf table is decreasing".into()));
            }
        }
        Ok(Self { xs, fs })
    }

    /// Reads a two-column `x,F(x)` CSV, with or without a header row.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let (mut xs, mut fs) = (Vec::new(), Vec::new());
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(TrlError::InvalidMeasure(format!(
                    "row {row} has < 2 columns"
                )));
            }
            match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
                (Ok(x), Ok(f)) => {
                    xs.push(x);
                    fs.push(f);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(TrlError::InvalidMeasure(format!(
                        "row {row} is not numeric"
                    )))
                }
            }
        }
        Self::new(xs, fs)
    }

    fn strictly_increasing(&self) -> bool {
        self.fs.windows(2).all(|w| w[1] > w[0])
    }

    fn cdf(&self, t: f64) -> f64 {
        if t <= self.xs[0] {
            return 0.0;
        }
        if t >= *self.xs.last().unwrap() {
            return 1.0;
        }
        let i = self.xs.partition_point(|&x| x <= t) - 1;
        let w = (t - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.fs[i] + w * (self.fs[i + 1] - self.fs[i])
    }

    fn density(&self, t: f64) -> f64 {
        if t < self.xs[0] || t >= *self.xs.last().unwrap() {
            return 0.0;
        }
        let i = self.xs.partition_point(|&x| x <= t) - 1;
        (self.fs[i + 1] - self.fs[i]) / (self.xs[i + 1] - self.xs[i])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    Lebesgue,
    /// `dmu = dx / ((1 + x) ln 2)`.
    Gauss,
    CdfTable(CdfTable),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureModel {
    pub name: String,
    pub kind: MeasureKind,
    pub support: (f64, f64),
    pub regularity: Option<Regularity>,
}

/// Outcome of probing `mu(B(x, r)) <= c r^s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AhlforsReport {
    pub pass: bool,
    pub c: f64,
    pub s: f64,
    pub probes: usize,
    /// Largest `ball_mass / (c r^s)` seen.
    pub worst_ratio: f64,
    pub worst_center: f64,
    pub worst_radius: f64,
}

impl MeasureModel {
    pub fn lebesgue() -> Self {
        Self {
            name: "lebesgue".into(),
            kind: MeasureKind::Lebesgue,
            support: (0.0, 1.0),
            regularity: Some(Regularity { c: 2.0, s: 1.0 }),
        }
    }

    pub fn gauss() -> Self {
        Self {
            name: "gauss".into(),
            kind: MeasureKind::Gauss,
            support: (0.0, 1.0),
            regularity: Some(Regularity { c: 3.0, s: 1.0 }),
        }
    }

    pub fn from_table(name: impl Into<String>, table: CdfTable) -> Self {
        let support = (table.xs[0], *table.xs.last().unwrap());
        Self {
            name: name.into(),
            kind: MeasureKind::CdfTable(table),
            support,
            regularity: None,
        }
    }

    pub fn with_regularity(mut self, regularity: Option<Regularity>) -> Self {
        self.regularity = regularity;
        self
    }

    pub fn is_lebesgue(&self) -> bool {
        matches!(self.kind, MeasureKind::Lebesgue)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match &self.kind {
            MeasureKind::Lebesgue => t,
            MeasureKind::Gauss => t.ln_1p() / std::f64::consts::LN_2,
            MeasureKind::CdfTable(table) => table.cdf(t),
        }
    }

    pub fn density(&self, t: f64) -> Option<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Some(0.0);
        }
        Some(match &self.kind {
            MeasureKind::Lebesgue => 1.0,
            MeasureKind::Gauss => 1.0 / ((1.0 + t) * std::f64::consts::LN_2),
            MeasureKind::CdfTable(table) => table.density(t),
        })
    }

    /// Breakpoints where the density may jump; quadrature splits there.
    pub fn density_breaks(&self) -> Vec<f64> {
        match &self.kind {
            MeasureKind::CdfTable(table) => table.nodes().to_vec(),
            _ => vec![0.0, 1.0],
        }
    }

    /// Continuous and strictly increasing on the support.
    pub fn admissible(&self) -> bool {
        match &self.kind {
            MeasureKind::CdfTable(table) => table.strictly_increasing(),
            _ => true,
        }
    }

    pub fn ball_mass(&self, center: f64, radius: f64) -> f64 {
        debug_assert!(radius >= 0.0);
        let hi = (center + radius).min(1.0);
        let lo = (center - radius).max(0.0);
        if hi <= lo {
            return 0.0;
        }
        match &self.kind {
            // ln(1+hi) - ln(1+lo) = ln1p((hi-lo)/(1+lo)) keeps small balls accurate.
            MeasureKind::Gauss => ((hi - lo) / (1.0 + lo)).ln_1p() / std::f64::consts::LN_2,
            _ => (self.cdf(hi) - self.cdf(lo)).max(0.0),
        }
    }

    /// Exact ball mass, available for Lebesgue measure.
    pub fn ball_mass_exact(&self, center: &Rational, radius: &Rational) -> Option<Rational> {
        if !self.is_lebesgue() {
            return None;
        }
        let one = Rational::one();
        let zero = Rational::zero();
        let hi = rational::rmin(center + radius, one);
        let lo = rational::rmax(center - radius, zero);
        Some(if hi > lo { hi - lo } else { Rational::zero() })
    }

    fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !self.admissible() {
            let at = match &self.kind {
                MeasureKind::CdfTable(table) => table
                    .xs
                    .windows(2)
                    .zip(table.fs.windows(2))
                    .find(|(_, f)| f[1] <= f[0])
                    .map(|(x, _)| x[0])
                    .unwrap_or(0.0),
                _ => 0.0,
            };
            return Err(TrlError::NonInvertibleCdf { at });
        }
        Ok(match &self.kind {
            MeasureKind::Lebesgue => u,
            MeasureKind::Gauss => (u * std::f64::consts::LN_2).exp_m1().clamp(0.0, 1.0),
            MeasureKind::CdfTable(_) => {
                if u <= 0.0 {
                    self.support.0
                } else if u >= 1.0 {
                    self.support.1
                } else {
                    bisect(
                        |t| self.cdf(t) - u,
                        self.support.0,
                        self.support.1,
                        INVERSE_TOLERANCE,
                    )
                }
            }
        })
    }

    /// `F^{-1}(u)` for a uniform deviate `u`.
    pub fn sample_point(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(TrlError::InvalidMeasure(format!(
                "deviate {u} outside [0,1]"
            )));
        }
        self.inverse_cdf(u)
    }

    /// A `bits`-bit dyadic rational distributed as `mu`.
    ///
    /// Lebesgue samples are uniform integers over `2^bits`. Other measures
    /// invert the CDF at double precision, snap to the `2^-52` grid and fill
    /// the remaining low bits uniformly; the density is treated as flat
    /// inside a `2^-52` cell.
    pub fn sample_dyadic<R: RngCore>(&self, rng: &mut R, bits: u32) -> Result<Rational> {
        let bits = bits.max(53);
        let scale = BigInt::one() << bits;
        let numer = match &self.kind {
            MeasureKind::Lebesgue => BigInt::from(random_biguint(rng, bits)),
            _ => {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                let x = self.sample_point(u)?;
                let coarse = (x * (1u64 << 52) as f64)
                    .floor()
                    .min(((1u64 << 52) - 1) as f64);
                let low_bits = bits - 52;
                (BigInt::from(coarse as u64) << low_bits)
                    + BigInt::from(random_biguint(rng, low_bits))
            }
        };
        Ok(Rational::new(numer, scale))
    }

    pub fn verify_upper_ahlfors(&self, c: f64, s: f64, probes: &[(f64, f64)]) -> AhlforsReport {
        let mut report = AhlforsReport {
            pass: true,
            c,
            s,
            probes: probes.len(),
            worst_ratio: 0.0,
            worst_center: f64::NAN,
            worst_radius: f64::NAN,
        };
        for &(x, r) in probes {
            let ratio = self.ball_mass(x, r) / (c * r.powf(s));
            if ratio > report.worst_ratio || report.worst_center.is_nan() {
                report.worst_ratio = ratio;
                report.worst_center = x;
                report.worst_radius = r;
            }
        }
        report.pass = report.worst_ratio <= 1.0 + AHLFORS_SLACK;
        report
    }
}

/// Centers spread over the support crossed with geometric radii from `1e-4`
/// to `1`: `centers * radii` probes.
pub fn probe_grid(centers: usize, radii: usize) -> Vec<(f64, f64)> {
    let mut probes = Vec::with_capacity(centers * radii);
    for i in 0..centers {
        let x = if centers == 1 {
            0.5
        } else {
            i as f64 / (centers - 1) as f64
        };
        for j in 0..radii {
            let t = if radii == 1 {
                0.0
            } else {
                j as f64 / (radii - 1) as f64
            };
            probes.push((x, 10f64.powf(-4.0 + 4.0 * t)));
        }
    }
    probes
}

pub(crate) fn random_biguint<R: RngCore>(rng: &mut R, bits: u32) -> BigUint {
    if bits == 0 {
        return BigUint::zero();
    }
    let words = bits.div_ceil(32) as usize;
    let digits: Vec<u32> = (0..words).map(|_| rng.next_u32()).collect();
    let value = BigUint::new(digits);
    let excess = words as u32 * 32 - bits;
    value >> excess
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ball_mass_examples() {
        let leb = MeasureModel::lebesgue();
        assert!(close(leb.ball_mass(0.5, 0.2), 0.4, 1e-15));
        // clipped at the left end: [0, 0.25]
        assert!(close(leb.ball_mass(0.05, 0.2), 0.25, 1e-15));
        let gauss = MeasureModel::gauss();
        assert!(close(gauss.ball_mass(0.0, 2f64.sqrt() - 1.0), 0.5, 1e-15));
    }

    #[test]
    fn exact_lebesgue_ball() {
        let leb = MeasureModel::lebesgue();
        let m = leb
            .ball_mass_exact(&rational::rat(1, 20), &rational::rat(1, 5))
            .unwrap();
        assert_eq!(m, rational::rat(1, 4));
        assert!(MeasureModel::gauss()
            .ball_mass_exact(&rational::rat(1, 2), &rational::rat(1, 4))
            .is_none());
    }

    #[test]
    fn sample_point_examples() {
        let leb = MeasureModel::lebesgue();
        assert_eq!(leb.sample_point(0.73).unwrap(), 0.73);
        let gauss = MeasureModel::gauss();
        assert!(close(
            gauss.sample_point(0.5).unwrap(),
            2f64.sqrt() - 1.0,
            1e-15
        ));
        assert_eq!(gauss.sample_point(1.0).unwrap(), 1.0);
        assert!(leb.sample_point(1.5).is_err());
    }

    #[test]
    fn flat_table_refuses_inversion() {
        let table = CdfTable::new(vec![0.0, 0.3, 0.6, 1.0], vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        let m = MeasureModel::from_table("flat", table);
        assert!(!m.admissible());
        assert!(matches!(
            m.sample_point(0.5),
            Err(TrlError::NonInvertibleCdf { .. })
        ));
    }

    #[test]
    fn table_inversion_by_bisection() {
        let table = CdfTable::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.8, 1.0]).unwrap();
        let m = MeasureModel::from_table("skew", table);
        let x = m.sample_point(0.4).unwrap();
        assert!(close(x, 0.25, 1e-13));
        assert!(close(m.cdf(x), 0.4, 1e-13));
    }

    #[test]
    fn table_rejects_bad_endpoints() {
        assert!(CdfTable::new(vec![0.0, 1.0], vec![0.1, 1.0]).is_err());
        assert!(CdfTable::new(vec![0.0, 0.0, 1.0], vec![0.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn ahlfors_examples() {
        let grid = probe_grid(40, 25);
        assert_eq!(grid.len(), 1000);
        assert!(
            MeasureModel::lebesgue()
                .verify_upper_ahlfors(2.0, 1.0, &grid)
                .pass
        );
        assert!(
            MeasureModel::gauss()
                .verify_upper_ahlfors(3.0, 1.0, &grid)
                .pass
        );
        let fail = MeasureModel::lebesgue().verify_upper_ahlfors(1.0, 1.5, &grid);
        assert!(!fail.pass);
        assert!(fail.worst_ratio > 1.0);
        assert!(fail.worst_radius <= 1e-3);
    }

    #[test]
    fn densities_integrate_to_one() {
        for m in [MeasureModel::lebesgue(), MeasureModel::gauss()] {
            let total = adaptive_simpson(&|t| m.density(t).unwrap(), 0.0, 1.0, 1e-13);
            assert!(close(total, 1.0, 1e-9), "{} integrates to {total}", m.name);
        }
    }

    #[test]
    fn ball_mass_matches_density_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let table = CdfTable::new(vec![0.0, 0.2, 0.7, 1.0], vec![0.0, 0.1, 0.9, 1.0]).unwrap();
        for m in [
            MeasureModel::lebesgue(),
            MeasureModel::gauss(),
            MeasureModel::from_table("t", table),
        ] {
            let breaks = m.density_breaks();
            for _ in 0..100 {
                let x = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                let r = 0.5 * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                let (lo, hi) = ((x - r).max(0.0), (x + r).min(1.0));
                let mut cuts = vec![lo];
                cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
                cuts.push(hi);
                let quad: f64 = cuts
                    .windows(2)
                    .map(|w| adaptive_simpson(&|t| m.density(t).unwrap(), w[0], w[1], 1e-13))
                    .sum();
                assert!(
                    close(quad, m.ball_mass(x, r), 1e-9),
                    "{} at ({x},{r})",
                    m.name
                );
            }
        }
    }

    #[test]
    fn dyadic_samples_have_requested_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [MeasureModel::lebesgue(), MeasureModel::gauss()] {
            for _ in 0..20 {
                let x = m.sample_dyadic(&mut rng, 128).unwrap();
                assert!(x >= Rational::zero() && x < Rational::one());
                // denominators divide 2^128
                assert!(x.denom().bits() <= 129);
            }
        }
    }

    proptest! {
        #[test]
        fn ball_mass_monotone_in_radius(x in 0.0f64..1.0, mut radii in prop::collection::vec(0.0f64..1.2, 2..12)) {
            radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for m in [MeasureModel::lebesgue(), MeasureModel::gauss()] {
                let masses: Vec<f64> = radii.iter().map(|&r| m.ball_mass(x, r)).collect();
                for w in masses.windows(2) {
                    prop_assert!(w[1] >= w[0]);
                }
            }
        }

        #[test]
        fn ball_mass_extremes(x in 0.0f64..=1.0) {
            for m in [MeasureModel::lebesgue(), MeasureModel::gauss()] {
                prop_assert_eq!(m.ball_mass(x, 0.0), 0.0);
                prop_assert!(close(m.ball_mass(x, 1.0), 1.0, 1e-15));
            }
        }
    }
}
