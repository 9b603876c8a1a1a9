use super::{BranchMap, MapSystem};
use crate::error::{Result, TrlError};
use crate::rational::{self, Rational};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub const DEFAULT_GUARD_BITS: u32 = 64;

/// How many bits the seed must carry for `n_max` iterations to stay within
/// `2^-guard_bits` of the true orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrecisionPolicy {
    pub n_max: usize,
    pub guard_bits: u32,
    pub working_bits: u32,
}

impl PrecisionPolicy {
    pub fn new(n_max: usize, guard_bits: u32, working_bits: u32) -> Self {
        Self {
            n_max,
            guard_bits,
            working_bits,
        }
    }

    /// The smallest policy satisfying `working_bits >= n_max * expansion + guard`.
    pub fn for_system(system: &MapSystem, n_max: usize) -> Self {
        let guard_bits = DEFAULT_GUARD_BITS;
        Self {
            n_max,
            guard_bits,
            working_bits: Self::required_bits(system, n_max, guard_bits),
        }
    }

    pub fn required_bits(system: &MapSystem, n_max: usize, guard_bits: u32) -> u32 {
        (n_max as f64 * system.expansion_bits()).ceil() as u32 + guard_bits
    }

    pub fn validate(&self, system: &MapSystem) -> Result<()> {
        let need = Self::required_bits(system, self.n_max, self.guard_bits);
        if self.working_bits < need {
            return Err(TrlError::Precision(format!(
                "{} needs {need} working bits for {} steps with {} guard bits, policy has {}",
                system.name, self.n_max, self.guard_bits, self.working_bits
            )));
        }
        Ok(())
    }
}

/// A binary fixed-point number `mant / 2^bits`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedPoint {
    pub mant: BigInt,
    pub bits: u32,
}

impl FixedPoint {
    /// Rounds toward zero; the representation error is below `2^-bits`.
    pub fn from_rational(x: &Rational, bits: u32) -> Self {
        let mant = (x.numer() << bits).div_floor(x.denom());
        Self { mant, bits }
    }

    pub fn to_rational(&self) -> Rational {
        Rational::new(self.mant.clone(), BigInt::one() << self.bits)
    }

    pub fn to_f64(&self) -> f64 {
        let excess = self.mant.bits().saturating_sub(60) as u32;
        let top = (&self.mant >> excess).to_f64().unwrap_or(0.0);
        top * 2f64.powi(excess as i32 - self.bits as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Exact(Rational),
    Fixed(FixedPoint),
}

impl Point {
    pub fn to_f64(&self) -> f64 {
        match self {
            Point::Exact(x) => rational::to_f64(x),
            Point::Fixed(x) => x.to_f64(),
        }
    }

    pub fn to_rational(&self) -> Rational {
        match self {
            Point::Exact(x) => x.clone(),
            Point::Fixed(x) => x.to_rational(),
        }
    }
}

/// `x_0, T x_0, ..., T^n x_0` and a bound on the absolute error of every
/// iterate relative to the exact orbit of the seed value.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub points: Vec<Point>,
    /// `log2` of the certified error bound; `-inf` means exact.
    pub log2_error: f64,
}

impl Orbit {
    pub fn error_bound(&self) -> f64 {
        self.log2_error.exp2()
    }

    pub fn last(&self) -> &Point {
        self.points.last().expect("orbits contain the seed")
    }
}

fn log2_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp2().ln_1p() / std::f64::consts::LN_2
}

impl MapSystem {
    /// One step of `T` at the point's own precision. Exact points stay exact;
    /// fixed points must carry at least `policy.working_bits` bits.
    pub fn evaluate_map(&self, x: &Point, policy: &PrecisionPolicy) -> Result<Point> {
        policy.validate(self)?;
        check_unit(x)?;
        Ok(match x {
            Point::Exact(q) => Point::Exact(self.apply_exact(q)),
            Point::Fixed(fx) => {
                if fx.bits < policy.working_bits {
                    return Err(TrlError::Precision(format!(
                        "point carries {} bits, policy requires {}",
                        fx.bits, policy.working_bits
                    )));
                }
                Point::Fixed(self.step_fixed(fx).0)
            }
        })
    }

    /// Applies `T` to a fixed-point value. Returns the image, the derivative
    /// bound used for error propagation, and whether rounding occurred.
    fn step_fixed(&self, x: &FixedPoint) -> (FixedPoint, f64, bool) {
        let bits = x.bits;
        let one = BigInt::one() << bits;
        let exact_x = x.to_rational();
        let branch = &self.branches[self.branch_index(&exact_x)];
        match &branch.map {
            BranchMap::Affine { slope, intercept } => {
                let prod = &x.mant * slope.numer();
                let (q1, r1) = prod.div_mod_floor(slope.denom());
                let shifted = intercept.numer() << bits;
                let (q2, r2) = shifted.div_mod_floor(intercept.denom());
                let mant = q1 + q2;
                let inexact = !r1.is_zero() || !r2.is_zero();
                let mant = mant.clamp(BigInt::zero(), one);
                (
                    FixedPoint { mant, bits },
                    rational::to_f64(&slope.abs()),
                    inexact,
                )
            }
            BranchMap::Gauss => {
                if x.mant.is_zero() {
                    return (
                        FixedPoint {
                            mant: BigInt::zero(),
                            bits,
                        },
                        0.0,
                        false,
                    );
                }
                let (inv, rem) = (BigInt::one() << (2 * bits)).div_mod_floor(&x.mant);
                let fracpart = inv.mod_floor(&one);
                let xf = x.to_f64();
                (
                    FixedPoint {
                        mant: fracpart,
                        bits,
                    },
                    1.0 / (xf * xf),
                    !rem.is_zero(),
                )
            }
        }
    }

    /// `n + 1` orbit points starting at `x`.
    ///
    /// Exact seeds give exact orbits. Fixed seeds are iterated with rounding
    /// and a propagated error bound; the run is refused if the bound exceeds
    /// `2^-guard_bits` or if an iterate is too close to a branch endpoint to
    /// decide its branch.
    pub fn iterate_orbit(&self, x: Point, n: usize, policy: &PrecisionPolicy) -> Result<Orbit> {
        if n > policy.n_max {
            return Err(TrlError::Precision(format!(
                "requested {n} iterations, policy allows {}",
                policy.n_max
            )));
        }
        policy.validate(self)?;
        check_unit(&x)?;
        let mut points = Vec::with_capacity(n + 1);
        match x {
            Point::Exact(seed) if self.is_rotation() => {
                let alpha = self.rotation_number().expect("rotation");
                Ok(Orbit {
                    points: rotation_orbit(&seed, alpha, n),
                    log2_error: f64::NEG_INFINITY,
                })
            }
            Point::Exact(seed) => {
                let mut cur = seed;
                points.push(Point::Exact(cur.clone()));
                for _ in 0..n {
                    cur = self.apply_exact(&cur);
                    points.push(Point::Exact(cur.clone()));
                }
                Ok(Orbit {
                    points,
                    log2_error: f64::NEG_INFINITY,
                })
            }
            Point::Fixed(seed) => {
                if seed.bits < policy.working_bits {
                    return Err(TrlError::Precision(format!(
                        "seed carries {} bits, policy requires {}",
                        seed.bits, policy.working_bits
                    )));
                }
                let ulp = -(seed.bits as f64);
                let mut log2_err = f64::NEG_INFINITY;
                let mut cur = seed;
                points.push(Point::Fixed(cur.clone()));
                for _ in 0..n {
                    self.ensure_branch_decidable(&cur, log2_err)?;
                    if matches!(self.kind, super::SystemKind::Gauss) && !cur.mant.is_zero() {
                        let xf = cur.to_f64();
                        if log2_err.exp2() >= 0.5 * xf {
                            return Err(TrlError::Precision(
                                "Gauss iterate too close to 0 for its error bound".into(),
                            ));
                        }
                    }
                    let (next, derivative, inexact) = self.step_fixed(&cur);
                    let grow = if matches!(self.kind, super::SystemKind::Gauss) {
                        // |T'| <= 1/(x (x - e)) <= 4/x^2 once e < x/2
                        (4.0 * derivative).log2()
                    } else {
                        derivative.log2()
                    };
                    log2_err = if log2_err == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        log2_err + grow
                    };
                    if inexact {
                        log2_err = log2_add(log2_err, ulp);
                    }
                    cur = next;
                    points.push(Point::Fixed(cur.clone()));
                }
                if log2_err > -(policy.guard_bits as f64) {
                    return Err(TrlError::Precision(format!(
                        "certified error 2^{log2_err:.1} exceeds 2^-{}",
                        policy.guard_bits
                    )));
                }
                Ok(Orbit {
                    points,
                    log2_error: log2_err,
                })
            }
        }
    }

    fn ensure_branch_decidable(&self, x: &FixedPoint, log2_err: f64) -> Result<()> {
        if log2_err == f64::NEG_INFINITY {
            return Ok(());
        }
        let value = x.to_rational();
        let err = rational::from_f64_exact(log2_err.exp2()).unwrap_or_else(Rational::zero);
        for b in &self.branches[1..] {
            if (&value - &b.domain.lo).abs() <= err {
                return Err(TrlError::Precision(format!(
                    "iterate within error bound of branch endpoint {}",
                    rational::display(&b.domain.lo)
                )));
            }
        }
        Ok(())
    }
}

/// Rotation orbits over the common denominator `D` of the seed and `alpha`:
/// each step adds the numerator of `alpha` and wraps at `D`. The points are
/// left unreduced, which every `Ratio` comparison and operation accepts.
fn rotation_orbit(seed: &Rational, alpha: &Rational, n: usize) -> Vec<Point> {
    let d = seed.denom().lcm(alpha.denom());
    let mut cur = seed.numer() * (&d / seed.denom());
    let step = alpha.numer() * (&d / alpha.denom());
    let mut points = Vec::with_capacity(n + 1);
    points.push(Point::Exact(seed.clone()));
    for _ in 0..n {
        cur += &step;
        if cur >= d {
            cur -= &d;
        }
        points.push(Point::Exact(Rational::new_raw(cur.clone(), d.clone())));
    }
    points
}

fn check_unit(x: &Point) -> Result<()> {
    let v = x.to_rational();
    if v < Rational::zero() || v > Rational::one() {
        return Err(TrlError::InvalidSystem(format!(
            "point {} outside [0,1]",
            rational::display(&v)
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn policy(sys: &MapSystem, n: usize) -> PrecisionPolicy {
        PrecisionPolicy::for_system(sys, n)
    }

    #[test]
    fn evaluate_examples() {
        let d = MapSystem::doubling();
        let p = policy(&d, 10);
        assert_eq!(
            d.evaluate_map(&Point::Exact(rat(1, 3)), &p).unwrap(),
            Point::Exact(rat(2, 3))
        );
        let rot = MapSystem::rotation(rat(3, 10)).unwrap();
        assert_eq!(
            rot.evaluate_map(&Point::Exact(rat(9, 10)), &policy(&rot, 10))
                .unwrap(),
            Point::Exact(rat(1, 5))
        );
    }

    #[test]
    fn gauss_fixed_point_of_silver_ratio() {
        // sqrt(2) - 1 satisfies 1/x = x + 2
        let g = MapSystem::gauss_map();
        let p = PrecisionPolicy::new(1, 64, 256);
        let x = 2f64.sqrt() - 1.0;
        let seed = FixedPoint::from_rational(&rational::from_f64_exact(x).unwrap(), 256);
        let y = g.evaluate_map(&Point::Fixed(seed), &p).unwrap();
        assert!((y.to_f64() - x).abs() < 1e-15);
    }

    #[test]
    fn iterate_examples() {
        let d = MapSystem::doubling();
        let orbit = d
            .iterate_orbit(Point::Exact(rat(1, 3)), 5, &policy(&d, 5))
            .unwrap();
        assert_eq!(orbit.points.len(), 6);
        assert_eq!(orbit.last(), &Point::Exact(rat(2, 3)));
        let orbit = d
            .iterate_orbit(Point::Exact(rat(1, 10)), 4, &policy(&d, 4))
            .unwrap();
        assert_eq!(orbit.last(), &Point::Exact(rat(3, 5)));
        assert_eq!(orbit.error_bound(), 0.0);

        let alpha = rat(7, 23);
        let rot = MapSystem::rotation(alpha.clone()).unwrap();
        let x = rat(5, 11);
        let orbit = rot
            .iterate_orbit(Point::Exact(x.clone()), 9, &policy(&rot, 9))
            .unwrap();
        let closed = rational::frac(&(x + alpha * rational::int(9)));
        assert_eq!(orbit.last(), &Point::Exact(closed));
    }

    #[test]
    fn policy_violations_are_refused() {
        let d = MapSystem::doubling();
        let tight = PrecisionPolicy::new(100, 64, 100);
        assert!(tight.validate(&d).is_err());
        assert!(d.evaluate_map(&Point::Exact(rat(1, 3)), &tight).is_err());
        let p = policy(&d, 10);
        assert!(d.iterate_orbit(Point::Exact(rat(1, 3)), 11, &p).is_err());
        let thin = FixedPoint::from_rational(&rat(1, 3), 20);
        assert!(d.iterate_orbit(Point::Fixed(thin), 5, &p).is_err());
    }

    #[test]
    fn exact_and_fixed_orbits_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for sys in [MapSystem::doubling(), MapSystem::tripling()] {
            let n = 60;
            let p = policy(&sys, n);
            for _ in 0..100 {
                let q: i64 = rng.random_range(3..1_000_000);
                let num: i64 = rng.random_range(1..q);
                let seed = rat(num, q);
                let exact = sys
                    .iterate_orbit(Point::Exact(seed.clone()), n, &p)
                    .unwrap();
                let fixed = sys
                    .iterate_orbit(
                        Point::Fixed(FixedPoint::from_rational(&seed, p.working_bits)),
                        n,
                        &p,
                    )
                    .unwrap();
                let gap = (exact.last().to_rational() - fixed.last().to_rational()).abs();
                let bound = rational::from_f64_exact(2f64.powi(-(p.guard_bits as i32))).unwrap();
                assert!(
                    gap <= bound,
                    "{} seed {}",
                    sys.name,
                    rational::display(&seed)
                );
            }
        }
    }

    #[test]
    fn fixed_rotation_tracks_rounding() {
        let rot = MapSystem::rotation(rat(1, 3)).unwrap();
        let p = PrecisionPolicy::new(50, 64, 128);
        let seed = FixedPoint::from_rational(&rat(1, 7), 128);
        let orbit = rot.iterate_orbit(Point::Fixed(seed), 50, &p).unwrap();
        assert!(orbit.error_bound() > 0.0);
        assert!(orbit.error_bound() <= 2f64.powi(-64));
    }

    #[test]
    fn rotation_orbit_matches_step_by_step() {
        let alpha = rat(355, 1133);
        let rot = MapSystem::rotation(alpha.clone()).unwrap();
        let p = policy(&rot, 40);
        for seed in [rat(0, 1), rat(3, 64), rat(777, 1024), rat(1, 1)] {
            let fast = rot
                .iterate_orbit(Point::Exact(seed.clone()), 40, &p)
                .unwrap();
            let mut cur = seed;
            for point in &fast.points[1..] {
                cur = rot.apply_exact(&cur);
                assert_eq!(point.to_rational(), cur);
            }
        }
    }
}
