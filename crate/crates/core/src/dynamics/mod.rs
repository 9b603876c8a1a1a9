//! Interval maps `T: [0, 1] -> [0, 1]` with branch structure.
//!
//! Branch domains are half-open `[a, b)`; the point `1` is sent by the last
//! branch's formula. Affine branches carry exact rational coefficients so that
//! preimages and orbits of rational points can be computed without rounding.

mod liouville;
mod orbit;
mod preimage;

pub use liouville::{build_liouville_rotation, ConvergentCheck, LiouvilleRotation};
pub use orbit::{FixedPoint, Orbit, Point, PrecisionPolicy, DEFAULT_GUARD_BITS};
pub use preimage::{AffineCell, Preimage, DEFAULT_INTERVAL_CAP};

use crate::error::{Result, TrlError};
use crate::rational::{self, int, RatInterval, Rational};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

#[derive(Clone, Debug, PartialEq)]
pub enum BranchMap {
    Affine {
        slope: Rational,
        intercept: Rational,
    },
    /// `x -> 1/x mod 1` on `(0, 1)`, `0 -> 0`.
    Gauss,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub domain: RatInterval,
    pub map: BranchMap,
    /// Bound on `|T'|` over the branch.
    pub lipschitz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemKind {
    /// `x -> beta x mod 1` for an integer `beta >= 2`.
    BetaInt {
        beta: u32,
    },
    Gauss,
    /// `x -> x + alpha mod 1`. `partial_quotients` is the expansion
    /// `alpha = [0; a_1, a_2, ...]` when the system was built from one.
    Rotation {
        alpha: Rational,
        partial_quotients: Vec<BigInt>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapSystem {
    pub name: String,
    pub kind: SystemKind,
    pub branches: Vec<Branch>,
    /// Name of the measure this map preserves.
    pub invariant_measure: String,
}

impl MapSystem {
    pub fn doubling() -> Self {
        Self::beta_int(2).expect("beta = 2 is valid")
    }

    pub fn tripling() -> Self {
        Self::beta_int(3).expect("beta = 3 is valid")
    }

    pub fn beta_int(beta: u32) -> Result<Self> {
        if beta < 2 {
            return Err(TrlError::InvalidSystem(format!(
                "integer beta must be >= 2, got {beta}"
            )));
        }
        let b = i64::from(beta);
        let branches = (0..b)
            .map(|k| Branch {
                domain: RatInterval::new(rational::rat(k, b), rational::rat(k + 1, b)),
                map: BranchMap::Affine {
                    slope: int(b),
                    intercept: int(-k),
                },
                lipschitz: beta as f64,
            })
            .collect();
        let name = match beta {
            2 => "doubling".to_string(),
            3 => "tripling".to_string(),
            _ => format!("beta-{beta}"),
        };
        let system = Self {
            name,
            kind: SystemKind::BetaInt { beta },
            branches,
            invariant_measure: "lebesgue".into(),
        };
        system.validate()?;
        Ok(system)
    }

    pub fn gauss_map() -> Self {
        Self {
            name: "gauss-map".into(),
            kind: SystemKind::Gauss,
            branches: vec![Branch {
                domain: RatInterval::unit(),
                map: BranchMap::Gauss,
                lipschitz: f64::INFINITY,
            }],
            invariant_measure: "gauss".into(),
        }
    }

    pub fn rotation(alpha: Rational) -> Result<Self> {
        Self::rotation_with_quotients(alpha, Vec::new())
    }

    /// Rotation by `[0; a_1, ..., a_k]`.
    pub fn rotation_from_cf(partial_quotients: &[BigInt]) -> Result<Self> {
        if partial_quotients.is_empty() || partial_quotients.iter().any(|a| !a.is_positive()) {
            return Err(TrlError::InvalidSystem(
                "rotation needs a nonempty list of positive partial quotients".into(),
            ));
        }
        let mut value = Rational::zero();
        for a in partial_quotients.iter().rev() {
            value = Rational::one() / (Rational::from_integer(a.clone()) + value);
        }
        Self::rotation_with_quotients(value, partial_quotients.to_vec())
    }

    fn rotation_with_quotients(alpha: Rational, partial_quotients: Vec<BigInt>) -> Result<Self> {
        if alpha <= Rational::zero() || alpha >= Rational::one() {
            return Err(TrlError::InvalidSystem(
                "rotation number must lie in (0,1)".into(),
            ));
        }
        let cut = Rational::one() - &alpha;
        let branches = vec![
            Branch {
                domain: RatInterval::new(Rational::zero(), cut.clone()),
                map: BranchMap::Affine {
                    slope: Rational::one(),
                    intercept: alpha.clone(),
                },
                lipschitz: 1.0,
            },
            Branch {
                domain: RatInterval::new(cut, Rational::one()),
                map: BranchMap::Affine {
                    slope: Rational::one(),
                    intercept: &alpha - Rational::one(),
                },
                lipschitz: 1.0,
            },
        ];
        let system = Self {
            name: "rotation".into(),
            kind: SystemKind::Rotation {
                alpha,
                partial_quotients,
            },
            branches,
            invariant_measure: "lebesgue".into(),
        };
        system.validate()?;
        Ok(system)
    }

    /// Checks that branches tile `[0, 1)` and affine images stay in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let mut edge = Rational::zero();
        for (i, branch) in self.branches.iter().enumerate() {
            if branch.domain.lo != edge || branch.domain.is_empty() {
                return Err(TrlError::InvalidSystem(format!(
                    "branch {i} domain {} does not continue the partition at {}",
                    branch.domain,
                    rational::display(&edge)
                )));
            }
            edge = branch.domain.hi.clone();
            if let BranchMap::Affine { slope, intercept } = &branch.map {
                if slope.is_zero() {
                    return Err(TrlError::InvalidSystem(format!(
                        "branch {i} has zero slope"
                    )));
                }
                let a = slope * &branch.domain.lo + intercept;
                let b = slope * &branch.domain.hi + intercept;
                let (zero, one) = (Rational::zero(), Rational::one());
                if a < zero || a > one || b < zero || b > one {
                    return Err(TrlError::InvalidSystem(format!(
                        "branch {i} maps outside [0,1]"
                    )));
                }
            }
        }
        if !edge.is_one() {
            return Err(TrlError::InvalidSystem("branches do not reach 1".into()));
        }
        Ok(())
    }

    pub fn is_affine_rational(&self) -> bool {
        self.branches
            .iter()
            .all(|b| matches!(b.map, BranchMap::Affine { .. }))
    }

    /// `Some(beta)` for `x -> beta x mod 1`.
    pub fn uniform_beta(&self) -> Option<u32> {
        match self.kind {
            SystemKind::BetaInt { beta } => Some(beta),
            _ => None,
        }
    }

    pub fn is_rotation(&self) -> bool {
        matches!(self.kind, SystemKind::Rotation { .. })
    }

    pub fn rotation_number(&self) -> Option<&Rational> {
        match &self.kind {
            SystemKind::Rotation { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Bits of seed precision consumed per iteration. The Gauss map has
    /// unbounded derivative; its figure is the Lyapunov exponent
    /// (`pi^2 / (6 ln^2 2)` ~ 3.42 bits) rounded up.
    pub fn expansion_bits(&self) -> f64 {
        match self.kind {
            SystemKind::BetaInt { beta } => (beta as f64).log2(),
            SystemKind::Gauss => 4.0,
            SystemKind::Rotation { .. } => 0.0,
        }
    }

    pub fn branch_index(&self, x: &Rational) -> usize {
        self.branches
            .iter()
            .position(|b| b.domain.contains(x))
            .unwrap_or(self.branches.len() - 1)
    }

    /// `T(x)` in exact arithmetic for rational `x`.
    pub fn apply_exact(&self, x: &Rational) -> Rational {
        let branch = &self.branches[self.branch_index(x)];
        match &branch.map {
            BranchMap::Affine { slope, intercept } => slope * x + intercept,
            BranchMap::Gauss => {
                if x.is_zero() {
                    Rational::zero()
                } else {
                    rational::frac(&x.recip())
                }
            }
        }
    }

    /// `T(x)` in double precision.
    pub fn apply_f64(&self, x: f64) -> f64 {
        match &self.kind {
            SystemKind::BetaInt { beta } => {
                let y = *beta as f64 * x;
                if x >= 1.0 {
                    1.0
                } else {
                    y - y.floor()
                }
            }
            SystemKind::Gauss => {
                if x <= 0.0 {
                    0.0
                } else {
                    let y = 1.0 / x;
                    y - y.floor()
                }
            }
            SystemKind::Rotation { alpha, .. } => {
                let y = x + rational::to_f64(alpha);
                if y >= 1.0 {
                    y - 1.0
                } else {
                    y
                }
            }
        }
    }
}
