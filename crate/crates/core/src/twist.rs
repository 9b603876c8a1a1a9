//! Twists `f: [0, 1] -> [0, 1]` that are piecewise Lipschitz and piecewise
//! monotone, built from clamped affine formulas.

use crate::error::{Result, TrlError};
use crate::rational::{self, rat, RatInterval, Rational};
use num_traits::{One, Signed, Zero};
use rand::{Rng, RngCore};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotone {
    Increasing,
    Decreasing,
    Constant,
}

/// `x -> clamp01(slope * clamp(x, lo, hi) + intercept)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFormula {
    pub slope: Rational,
    pub intercept: Rational,
    pub domain_clamp: Option<(Rational, Rational)>,
}

impl AffineFormula {
    pub fn new(slope: Rational, intercept: Rational) -> Self {
        Self {
            slope,
            intercept,
            domain_clamp: None,
        }
    }

    pub fn eval_exact(&self, x: &Rational) -> Rational {
        let x = match &self.domain_clamp {
            Some((lo, hi)) => rational::clamp(x.clone(), lo, hi),
            None => x.clone(),
        };
        let y = &self.slope * x + &self.intercept;
        rational::clamp(y, &Rational::zero(), &Rational::one())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = match &self.domain_clamp {
            Some((lo, hi)) => x.clamp(rational::to_f64(lo), rational::to_f64(hi)),
            None => x,
        };
        (rational::to_f64(&self.slope) * x + rational::to_f64(&self.intercept)).clamp(0.0, 1.0)
    }

    fn direction(&self) -> Monotone {
        if self.slope.is_positive() {
            Monotone::Increasing
        } else if self.slope.is_negative() {
            Monotone::Decreasing
        } else {
            Monotone::Constant
        }
    }

    /// Points of `(lo, hi)` where a clamp switches on or off.
    fn kinks(&self, lo: &Rational, hi: &Rational) -> Vec<Rational> {
        let mut cuts = Vec::new();
        if let Some((a, b)) = &self.domain_clamp {
            cuts.push(a.clone());
            cuts.push(b.clone());
        }
        if !self.slope.is_zero() {
            cuts.push(-&self.intercept / &self.slope);
            cuts.push((Rational::one() - &self.intercept) / &self.slope);
        }
        cuts.retain(|c| c > lo && c < hi);
        cuts.sort();
        cuts.dedup();
        cuts
    }

    /// The unclamped affine expression that agrees with the formula on the
    /// open segment around `probe` (a point strictly between kinks).
    fn local_affine(&self, probe: &Rational) -> (Rational, Rational) {
        if let Some((a, b)) = &self.domain_clamp {
            if probe <= a {
                return (Rational::zero(), self.eval_exact(a));
            }
            if probe >= b {
                return (Rational::zero(), self.eval_exact(b));
            }
        }
        let y = &self.slope * probe + &self.intercept;
        if y <= Rational::zero() {
            (Rational::zero(), Rational::zero())
        } else if y >= Rational::one() {
            (Rational::zero(), Rational::one())
        } else {
            (self.slope.clone(), self.intercept.clone())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwistPiece {
    /// Governs `(lo, hi]`, and `0` for the first piece.
    pub lo: Rational,
    pub hi: Rational,
    pub formula: AffineFormula,
    pub direction: Monotone,
    pub lipschitz: f64,
}

impl TwistPiece {
    pub fn new(lo: Rational, hi: Rational, formula: AffineFormula) -> Self {
        let direction = formula.direction();
        let lipschitz = rational::to_f64(&formula.slope.abs());
        Self {
            lo,
            hi,
            formula,
            direction,
            lipschitz,
        }
    }
}

/// `f = slope * x + intercept` on `domain`, exact.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSegment {
    pub domain: RatInterval,
    pub slope: Rational,
    pub intercept: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwistSpec {
    pub name: String,
    pub pieces: Vec<TwistPiece>,
}

/// Sampled Lipschitz and monotonicity evidence for one piece.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PieceCertificate {
    pub piece: usize,
    pub lipschitz: f64,
    pub worst_slope: f64,
    pub direction: Monotone,
}

impl TwistSpec {
    pub fn from_pieces(name: impl Into<String>, pieces: Vec<TwistPiece>) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            pieces,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn identity() -> Self {
        Self::single(
            "identity",
            AffineFormula::new(Rational::one(), Rational::zero()),
        )
    }

    pub fn constant(y: Rational) -> Result<Self> {
        if y < Rational::zero() || y > Rational::one() {
            return Err(TrlError::InvalidTwist(
                "constant twist must lie in [0,1]".into(),
            ));
        }
        Ok(Self::single(
            "constant",
            AffineFormula::new(Rational::zero(), y),
        ))
    }

    /// `clamp01(slope x + intercept)`.
    pub fn affine(slope: Rational, intercept: Rational) -> Self {
        Self::single("affine", AffineFormula::new(slope, intercept))
    }

    /// `clamp01(slope |x - center|)`.
    pub fn tent(center: Rational, slope: Rational) -> Result<Self> {
        if center <= Rational::zero() || center >= Rational::one() || !slope.is_positive() {
            return Err(TrlError::InvalidTwist(
                "tent needs a center in (0,1) and a positive slope".into(),
            ));
        }
        let left = AffineFormula::new(-slope.clone(), &slope * &center);
        let right = AffineFormula::new(slope.clone(), -&slope * &center);
        Self::from_pieces(
            "tent",
            vec![
                TwistPiece::new(Rational::zero(), center.clone(), left),
                TwistPiece::new(center, Rational::one(), right),
            ],
        )
    }

    /// The absolute-value tent `|x - 1/2|`.
    pub fn abs_tent() -> Self {
        Self::tent(rat(1, 2), Rational::one()).expect("valid tent")
    }

    fn single(name: &str, formula: AffineFormula) -> Self {
        Self {
            name: name.into(),
            pieces: vec![TwistPiece::new(Rational::zero(), Rational::one(), formula)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.pieces.first() else {
            return Err(TrlError::InvalidTwist("twist has no pieces".into()));
        };
        if !first.lo.is_zero() {
            return Err(TrlError::InvalidTwist("first piece must start at 0".into()));
        }
        for (i, pair) in self.pieces.windows(2).enumerate() {
            if pair[0].hi != pair[1].lo {
                return Err(TrlError::InvalidTwist(format!(
                    "pieces {i} and {} are not contiguous",
                    i + 1
                )));
            }
        }
        for (i, piece) in self.pieces.iter().enumerate() {
            if piece.hi <= piece.lo {
                return Err(TrlError::InvalidTwist(format!("piece {i} is empty")));
            }
            for end in [&piece.lo, &piece.hi] {
                let raw = &piece.formula.slope * end + &piece.formula.intercept;
                if piece.formula.domain_clamp.is_none()
                    && (raw < Rational::zero() || raw > Rational::one())
                    && self.name == "pw-affine"
                {
                    return Err(TrlError::InvalidTwist(format!(
                        "piece {i} leaves [0,1] at x = {}",
                        rational::display(end)
                    )));
                }
            }
        }
        if !self.pieces.last().unwrap().hi.is_one() {
            return Err(TrlError::InvalidTwist("last piece must end at 1".into()));
        }
        Ok(())
    }

    pub fn global_lipschitz(&self) -> f64 {
        self.pieces.iter().map(|p| p.lipschitz).fold(0.0, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        self.pieces.len() == 1 && self.pieces[0].formula.slope.is_zero()
    }

    pub fn constant_value(&self) -> Option<Rational> {
        self.is_constant()
            .then(|| self.pieces[0].formula.eval_exact(&Rational::zero()))
    }

    fn governing(&self, below_or_at: impl Fn(&Rational) -> bool) -> &TwistPiece {
        self.pieces
            .iter()
            .find(|p| below_or_at(&p.hi))
            .unwrap_or_else(|| self.pieces.last().unwrap())
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.governing(|hi| x <= rational::to_f64(hi))
            .formula
            .eval(x)
    }

    pub fn evaluate_exact(&self, x: &Rational) -> Rational {
        self.governing(|hi| x <= hi).formula.eval_exact(x)
    }

    /// Affine segments covering `[0, 1)`, in order. Segment endpoints include
    /// piece boundaries and every clamp kink.
    pub fn segments(&self) -> Vec<AffineSegment> {
        let mut out = Vec::new();
        for piece in &self.pieces {
            let mut cuts = vec![piece.lo.clone()];
            cuts.extend(piece.formula.kinks(&piece.lo, &piece.hi));
            cuts.push(piece.hi.clone());
            for w in cuts.windows(2) {
                let domain = RatInterval::new(w[0].clone(), w[1].clone());
                let (slope, intercept) = piece.formula.local_affine(&domain.midpoint());
                out.push(AffineSegment {
                    domain,
                    slope,
                    intercept,
                });
            }
        }
        out
    }

    /// Samples `pairs` random pairs inside each piece and checks
    /// `|f(x) - f(y)| <= L_i |x - y|` and the declared monotone direction.
    pub fn certify<R: RngCore>(&self, rng: &mut R, pairs: usize) -> Result<Vec<PieceCertificate>> {
        let mut certs = Vec::with_capacity(self.pieces.len());
        for (i, piece) in self.pieces.iter().enumerate() {
            let lo = rational::to_f64(&piece.lo);
            let hi = rational::to_f64(&piece.hi);
            let mut worst: f64 = 0.0;
            for _ in 0..pairs {
                let mut x = lo + (hi - lo) * rng.random::<f64>();
                let mut y = lo + (hi - lo) * rng.random::<f64>();
                if x == y {
                    continue;
                }
                if x > y {
                    std::mem::swap(&mut x, &mut y);
                }
                // stay strictly inside (lo, hi] so the piece itself governs
                if x <= lo {
                    continue;
                }
                let (fx, fy) = (piece.formula.eval(x), piece.formula.eval(y));
                let slope = (fy - fx).abs() / (y - x);
                worst = worst.max(slope);
                let tol = 1e-12;
                let monotone = match piece.direction {
                    Monotone::Increasing => fy >= fx - tol,
                    Monotone::Decreasing => fy <= fx + tol,
                    Monotone::Constant => (fy - fx).abs() <= tol,
                };
                if !monotone {
                    return Err(TrlError::NonMonotone {
                        piece: i,
                        x0: x,
                        y0: fx,
                        x1: y,
                        y1: fy,
                    });
                }
                if (fy - fx).abs() > piece.lipschitz * (y - x) + 1e-12 {
                    return Err(TrlError::InvalidTwist(format!(
                        "piece {i} breaks its Lipschitz constant {} between {x} and {y}",
                        piece.lipschitz
                    )));
                }
            }
            certs.push(PieceCertificate {
                piece: i,
                lipschitz: piece.lipschitz,
                worst_slope: worst,
                direction: piece.direction,
            });
        }
        Ok(certs)
    }

    /// One globally defined Lipschitz monotone twist per piece: equal to `f`
    /// on `(a_i, b_i)` and frozen at the one-sided limits from inside the
    /// piece outside of it.
    pub fn decompose_piecewise<R: RngCore>(&self, rng: &mut R) -> Result<Vec<TwistSpec>> {
        self.certify(rng, 1000)?;
        Ok(self
            .pieces
            .iter()
            .enumerate()
            .map(|(i, piece)| {
                let mut formula = piece.formula.clone();
                let (lo, hi) = match &formula.domain_clamp {
                    Some((a, b)) => (
                        rational::rmax(a.clone(), piece.lo.clone()),
                        rational::rmin(b.clone(), piece.hi.clone()),
                    ),
                    None => (piece.lo.clone(), piece.hi.clone()),
                };
                formula.domain_clamp = Some((lo, hi));
                let mut extended = TwistPiece::new(Rational::zero(), Rational::one(), formula);
                extended.direction = piece.direction;
                TwistSpec {
                    name: format!("{}[{i}]", self.name),
                    pieces: vec![extended],
                }
            })
            .collect())
    }
}
