use super::{BranchMap, MapSystem, SystemKind};
use crate::error::{Result, TrlError};
use crate::rational::{self, IntervalSet, RatInterval, Rational};
use num_traits::{One, Signed, Zero};

pub const DEFAULT_INTERVAL_CAP: usize = 1 << 24;

/// `T^{-n}(target)` before and after merging.
#[derive(Clone, Debug)]
pub struct Preimage {
    pub set: IntervalSet,
    /// Number of branch-inverse pieces produced before merging.
    pub raw_count: usize,
}

/// A maximal interval on which `T^n x = slope * x + intercept`.
#[derive(Clone, Debug)]
pub struct AffineCell {
    pub domain: RatInterval,
    pub slope: Rational,
    pub intercept: Rational,
}

impl MapSystem {
    fn require_affine(&self) -> Result<()> {
        if self.is_affine_rational() {
            Ok(())
        } else {
            Err(TrlError::Unsupported {
                system: self.name.clone(),
                reason: "exact preimages need affine branches with rational coefficients".into(),
            })
        }
    }

    pub fn preimage_intervals(&self, target: &RatInterval, n: usize) -> Result<Preimage> {
        self.preimage_intervals_capped(target, n, DEFAULT_INTERVAL_CAP)
    }

    pub fn preimage_intervals_capped(
        &self,
        target: &RatInterval,
        n: usize,
        cap: usize,
    ) -> Result<Preimage> {
        self.require_affine()?;
        let mut current = vec![target.clone()];
        for _ in 0..n {
            let mut next = Vec::with_capacity(current.len() * self.branches.len());
            for piece in &current {
                for branch in &self.branches {
                    if let Some(pre) = branch_inverse(&branch.map, &branch.domain, piece) {
                        next.push(pre);
                    }
                }
                if next.len() > cap {
                    return Err(TrlError::IntervalBudget {
                        count: next.len(),
                        cap,
                    });
                }
            }
            current = next;
        }
        let raw_count = current.len();
        Ok(Preimage {
            set: IntervalSet::from_intervals(current),
            raw_count,
        })
    }

    /// Splits `[0, 1)` into the continuity cells of `T^n` and hands each to
    /// `visit` in left-to-right order.
    pub fn for_each_cell<F: FnMut(&AffineCell)>(
        &self,
        n: usize,
        cap: usize,
        mut visit: F,
    ) -> Result<usize> {
        self.require_affine()?;
        if let SystemKind::Rotation { alpha, .. } = &self.kind {
            return Ok(rotation_cells(alpha, n, visit));
        }
        let mut stack = vec![(
            0usize,
            AffineCell {
                domain: RatInterval::unit(),
                slope: Rational::one(),
                intercept: Rational::zero(),
            },
        )];
        let mut visited = 0usize;
        while let Some((depth, cell)) = stack.pop() {
            if depth == n {
                visited += 1;
                if visited > cap {
                    return Err(TrlError::IntervalBudget {
                        count: visited,
                        cap,
                    });
                }
                visit(&cell);
                continue;
            }
            // children pushed in reverse so the leftmost pops first
            let mut children = Vec::with_capacity(self.branches.len());
            for branch in &self.branches {
                let BranchMap::Affine { slope, intercept } = &branch.map else {
                    unreachable!("checked affine");
                };
                // x in cell with slope_c x + intercept_c in branch.domain
                if let Some(sub) = branch_inverse(
                    &BranchMap::Affine {
                        slope: cell.slope.clone(),
                        intercept: cell.intercept.clone(),
                    },
                    &cell.domain,
                    &branch.domain,
                ) {
                    children.push(AffineCell {
                        domain: sub,
                        slope: slope * &cell.slope,
                        intercept: slope * &cell.intercept + intercept,
                    });
                }
            }
            children.sort_by(|a, b| a.domain.lo.cmp(&b.domain.lo));
            for child in children.into_iter().rev() {
                stack.push((depth + 1, child));
            }
        }
        Ok(visited)
    }

    /// `mu(T^{-n} E ∩ F)` for Lebesgue-preserving affine systems.
    pub fn preimage_overlap(&self, e: &RatInterval, f: &RatInterval, n: usize) -> Result<Rational> {
        let pre = self.preimage_intervals(e, n)?;
        Ok(pre.set.intersect_interval(f).total_length())
    }
}

/// `T^n x = x + {n alpha}` below `1 - {n alpha}` and one less above it.
fn rotation_cells<F: FnMut(&AffineCell)>(alpha: &Rational, n: usize, mut visit: F) -> usize {
    let shift = rational::frac(&(alpha * Rational::from_integer(n.into())));
    if shift.is_zero() {
        visit(&AffineCell {
            domain: RatInterval::unit(),
            slope: Rational::one(),
            intercept: Rational::zero(),
        });
        return 1;
    }
    let cut = Rational::one() - &shift;
    visit(&AffineCell {
        domain: RatInterval::new(Rational::zero(), cut.clone()),
        slope: Rational::one(),
        intercept: shift.clone(),
    });
    visit(&AffineCell {
        domain: RatInterval::new(cut, Rational::one()),
        slope: Rational::one(),
        intercept: shift - Rational::one(),
    });
    2
}

/// `{x in domain : slope x + intercept in target}`.
fn branch_inverse(
    map: &BranchMap,
    domain: &RatInterval,
    target: &RatInterval,
) -> Option<RatInterval> {
    let BranchMap::Affine { slope, intercept } = map else {
        return None;
    };
    let a = (&target.lo - intercept) / slope;
    let b = (&target.hi - intercept) / slope;
    let (lo, hi) = if slope.is_positive() { (a, b) } else { (b, a) };
    RatInterval::new(lo, hi).intersect(domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, IntervalSet};

    fn iv(a: i64, b: i64, c: i64, d: i64) -> RatInterval {
        RatInterval::new(rat(a, b), rat(c, d))
    }

    #[test]
    fn doubling_preimage_examples() {
        let d = MapSystem::doubling();
        let half = iv(0, 1, 1, 2);
        let one = d.preimage_intervals(&half, 1).unwrap();
        assert_eq!(
            one.set,
            IntervalSet::from_intervals(vec![iv(0, 1, 1, 4), iv(1, 2, 3, 4)])
        );
        let two = d.preimage_intervals(&half, 2).unwrap();
        assert_eq!(
            two.set.intervals(),
            &[
                iv(0, 1, 1, 8),
                iv(1, 4, 3, 8),
                iv(1, 2, 5, 8),
                iv(3, 4, 7, 8)
            ]
        );
    }

    #[test]
    fn gauss_preimage_is_unsupported() {
        let g = MapSystem::gauss_map();
        assert!(matches!(
            g.preimage_intervals(&iv(0, 1, 1, 2), 1),
            Err(TrlError::Unsupported { .. })
        ));
    }

    #[test]
    fn raw_counts_and_lengths() {
        let target = iv(1, 7, 3, 5);
        for (sys, b) in [(MapSystem::doubling(), 2usize), (MapSystem::tripling(), 3)] {
            for n in 0..7 {
                let pre = sys.preimage_intervals(&target, n).unwrap();
                assert_eq!(pre.raw_count, b.pow(n as u32));
                assert_eq!(pre.set.total_length(), target.len());
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let d = MapSystem::doubling();
        assert!(matches!(
            d.preimage_intervals_capped(&iv(0, 1, 1, 3), 5, 16),
            Err(TrlError::IntervalBudget { .. })
        ));
    }

    #[test]
    fn cells_tile_the_unit_interval() {
        let rot = MapSystem::rotation(rat(2, 7)).unwrap();
        let mut cells = Vec::new();
        rot.for_each_cell(6, 1 << 10, |c| cells.push(c.clone()))
            .unwrap();
        assert!(cells.len() <= 7);
        let mut edge = Rational::zero();
        for c in &cells {
            assert_eq!(c.domain.lo, edge);
            edge = c.domain.hi.clone();
        }
        assert_eq!(edge, Rational::one());

        let d = MapSystem::doubling();
        let count = d.for_each_cell(5, 1 << 10, |_| {}).unwrap();
        assert_eq!(count, 32);
    }

    #[test]
    fn rotation_preserves_lebesgue() {
        let rot = MapSystem::rotation(rat(5, 13)).unwrap();
        let target = iv(1, 9, 4, 5);
        for n in 0..8 {
            let pre = rot.preimage_intervals(&target, n).unwrap();
            assert_eq!(pre.set.total_length(), target.len());
        }
    }

    #[test]
    fn rotation_cells_agree_with_iteration() {
        let rot = MapSystem::rotation(rat(5, 17)).unwrap();
        for n in [1, 3, 17, 20] {
            let mut cells = Vec::new();
            rot.for_each_cell(n, 10, |c| cells.push(c.clone())).unwrap();
            let total: Rational = cells.iter().map(|c| c.domain.len()).sum();
            assert_eq!(total, Rational::one());
            for c in &cells {
                let x = c.domain.midpoint();
                let mut y = x.clone();
                for _ in 0..n {
                    y = rot.apply_exact(&y);
                }
                assert_eq!(&c.slope * &x + &c.intercept, y);
            }
        }
    }
}
