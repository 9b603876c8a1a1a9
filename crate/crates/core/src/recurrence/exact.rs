//! Exact Lebesgue masses of recurrence sets for affine maps.
//!
//! Every set handled here is a union, over an integer parameter `t`, of
//! intervals `max_i L_i(t) < x < min_j U_j(t)` whose bounds are affine in
//! `t`. Between consecutive crossings of those bounds the length is affine
//! in `t`, so each run of `t` values is summed as an arithmetic series.

use super::RadiusMode;
use crate::dynamics::MapSystem;
use crate::error::{Result, TrlError};
use crate::rational::{self, RatInterval, Rational};
use crate::twist::TwistSpec;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// `a t + b`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Lin {
    pub a: Rational,
    pub b: Rational,
}

impl Lin {
    pub fn new(a: Rational, b: Rational) -> Self {
        Self { a, b }
    }

    pub fn constant(b: Rational) -> Self {
        Self::new(Rational::zero(), b)
    }

    fn at(&self, t: &Rational) -> Rational {
        &self.a * t + &self.b
    }

    fn scaled(&self, k: &Rational) -> Self {
        Self::new(&self.a * k, &self.b * k)
    }

    fn minus(&self, other: &Lin) -> Self {
        Self::new(&self.a - &other.a, &self.b - &other.b)
    }
}

/// The set `{(t, x) : t_lo <= t <= t_hi, max lowers(t) < x < min uppers(t)}`.
#[derive(Clone, Debug)]
pub(crate) struct Band {
    lowers: Vec<Lin>,
    uppers: Vec<Lin>,
    t_lo: BigInt,
    t_hi: BigInt,
}

impl Band {
    pub fn new(t_lo: BigInt, t_hi: BigInt) -> Self {
        Self {
            lowers: Vec::new(),
            uppers: Vec::new(),
            t_lo,
            t_hi,
        }
    }

    pub fn lower(&mut self, f: Lin) -> &mut Self {
        self.lowers.push(f);
        self
    }

    pub fn upper(&mut self, f: Lin) -> &mut Self {
        self.uppers.push(f);
        self
    }

    /// Adds `coef * x < rhs(t)`.
    pub fn less(&mut self, coef: &Rational, rhs: Lin) -> &mut Self {
        if coef.is_positive() {
            self.uppers.push(rhs.scaled(&coef.recip()));
        } else if coef.is_negative() {
            self.lowers.push(rhs.scaled(&coef.recip()));
        } else {
            self.require_positive(&rhs);
        }
        self
    }

    /// Adds `coef * x > rhs(t)`.
    pub fn greater(&mut self, coef: &Rational, rhs: Lin) -> &mut Self {
        let neg = Lin::new(-&rhs.a, -&rhs.b);
        self.less(&-coef, neg)
    }

    /// Restricts `t` to `f(t) > 0`.
    fn require_positive(&mut self, f: &Lin) {
        if f.a.is_zero() {
            if !f.b.is_positive() {
                self.t_hi = &self.t_lo - 1;
            }
            return;
        }
        let root = -&f.b / &f.a;
        if f.a.is_positive() {
            let lo = rational::floor_int(&root) + 1;
            if lo > self.t_lo {
                self.t_lo = lo;
            }
        } else {
            let hi = rational::ceil_int(&root) - 1;
            if hi < self.t_hi {
                self.t_hi = hi;
            }
        }
    }

    fn width_at(&self, t: &Rational) -> Rational {
        let lo = self.lowers.iter().map(|f| f.at(t)).max().unwrap();
        let hi = self.uppers.iter().map(|f| f.at(t)).min().unwrap();
        rational::rmax(hi - lo, Rational::zero())
    }

    /// Total length, summed over `t`.
    pub fn total(&self) -> Rational {
        assert!(!self.lowers.is_empty() && !self.uppers.is_empty());
        if self.t_lo > self.t_hi {
            return Rational::zero();
        }
        let end: BigInt = &self.t_hi + 1;
        let mut cuts = vec![self.t_lo.clone(), end.clone()];
        let all: Vec<&Lin> = self.lowers.iter().chain(&self.uppers).collect();
        for (i, f) in all.iter().enumerate() {
            for g in &all[i + 1..] {
                if f.a == g.a {
                    continue;
                }
                let cross = rational::floor_int(&((&g.b - &f.b) / (&f.a - &g.a)));
                for c in [cross.clone(), cross + 1] {
                    if c > self.t_lo && c < end {
                        cuts.push(c);
                    }
                }
            }
        }
        cuts.sort();
        cuts.dedup();
        let two = Rational::from_integer(BigInt::from(2));
        let mut total = Rational::zero();
        for w in cuts.windows(2) {
            let (s, e) = (&w[0], &w[1]);
            let len = Rational::from_integer(e - s);
            if len.is_one() {
                total += self.width_at(&Rational::from_integer(s.clone()));
                continue;
            }
            // no bounds cross on [s, e - 1], so one lower and one upper win throughout
            let mid = Rational::from_integer(s + e - 1) / &two;
            let lo = self
                .lowers
                .iter()
                .max_by(|f, g| f.at(&mid).cmp(&g.at(&mid)))
                .unwrap();
            let hi = self
                .uppers
                .iter()
                .min_by(|f, g| f.at(&mid).cmp(&g.at(&mid)))
                .unwrap();
            let width = hi.minus(lo);
            if width.at(&mid).is_positive() {
                total +=
                    &width.a * Rational::from_integer(s + e - 1) * &len / &two + &width.b * &len;
            }
        }
        total
    }
}

/// A piece of `[0, 1)` on which `f(x) = a x + b` and `r(x) = c x + d`.
#[derive(Clone, Debug)]
pub(crate) struct Piece {
    pub domain: RatInterval,
    pub a: Rational,
    pub b: Rational,
    pub c: Rational,
    pub d: Rational,
}

/// Splits the twist segments where the Lebesgue radius for `mass` changes
/// formula, and attaches the radius `r = c x + d`.
pub(crate) fn pieces(twist: &TwistSpec, mass: &Rational, mode: RadiusMode) -> Vec<Piece> {
    let half = mass / Rational::from_integer(BigInt::from(2));
    let top = Rational::one() - &half;
    let mut out = Vec::new();
    for seg in twist.segments() {
        let (p0, p1) = (&seg.domain.lo, &seg.domain.hi);
        let mut cuts = vec![p0.clone()];
        let mut interior = Vec::new();
        match mode {
            RadiusMode::AtX => interior.extend([half.clone(), top.clone()]),
            RadiusMode::AtFx => {
                if !seg.slope.is_zero() {
                    interior.push((&half - &seg.intercept) / &seg.slope);
                    interior.push((&top - &seg.intercept) / &seg.slope);
                }
            }
        }
        interior.retain(|c| c > p0 && c < p1);
        interior.sort();
        cuts.extend(interior);
        cuts.push(p1.clone());
        cuts.dedup();
        for w in cuts.windows(2) {
            let domain = RatInterval::new(w[0].clone(), w[1].clone());
            let mid = domain.midpoint();
            // radius center as an affine function u x + v
            let (u, v) = match mode {
                RadiusMode::AtX => (Rational::one(), Rational::zero()),
                RadiusMode::AtFx => (seg.slope.clone(), seg.intercept.clone()),
            };
            let center = &u * &mid + &v;
            let (c, d) = if center < half {
                (-u, mass - v)
            } else if center > top {
                (u, v - (Rational::one() - mass))
            } else {
                (Rational::zero(), half.clone())
            };
            out.push(Piece {
                domain,
                a: seg.slope.clone(),
                b: seg.intercept.clone(),
                c,
                d,
            });
        }
    }
    out
}

/// Adds the two inequalities of `|T^n x - f(x)| < r(x)` when
/// `T^n x = scale x - shift(t)`.
fn add_hit(band: &mut Band, piece: &Piece, scale: &Rational, shift: &Lin) {
    // scale x - shift - a x - b < c x + d
    let coef = scale - &piece.a - &piece.c;
    band.less(
        &coef,
        Lin::new(shift.a.clone(), &shift.b + &piece.b + &piece.d),
    );
    // scale x - shift - a x - b > -(c x + d)
    let coef = scale - &piece.a + &piece.c;
    band.greater(
        &coef,
        Lin::new(shift.a.clone(), &shift.b + &piece.b - &piece.d),
    );
}

fn qpow(beta: u32, n: usize) -> BigInt {
    BigInt::from(beta).pow(n as u32)
}

fn cell_range(domain: &RatInterval, q: &BigInt) -> (BigInt, BigInt) {
    let qr = Rational::from_integer(q.clone());
    let lo = rational::floor_int(&(&domain.lo * &qr)).max(BigInt::zero());
    let ceil: BigInt = rational::ceil_int(&(&domain.hi * &qr));
    let hi = (ceil - BigInt::one()).min(q - BigInt::one());
    (lo, hi)
}

/// `mu(R_n)` for `x -> beta x mod 1` in closed form.
pub(crate) fn rn_mass_beta(
    beta: u32,
    twist: &TwistSpec,
    mass: &Rational,
    n: usize,
    mode: RadiusMode,
) -> Rational {
    let q = qpow(beta, n);
    let qr = Rational::from_integer(q.clone());
    let inv = qr.recip();
    let mut total = Rational::zero();
    for piece in pieces(twist, mass, mode) {
        let (t_lo, t_hi) = cell_range(&piece.domain, &q);
        let mut band = Band::new(t_lo, t_hi);
        band.lower(Lin::new(inv.clone(), Rational::zero()))
            .lower(Lin::constant(piece.domain.lo.clone()))
            .upper(Lin::new(inv.clone(), inv.clone()))
            .upper(Lin::constant(piece.domain.hi.clone()));
        add_hit(
            &mut band,
            &piece,
            &qr,
            &Lin::new(Rational::one(), Rational::zero()),
        );
        total += band.total();
    }
    total
}

/// `mu(R_n)` for any affine system by enumerating the continuity cells of
/// `T^n`.
pub(crate) fn rn_mass_cells(
    system: &MapSystem,
    twist: &TwistSpec,
    mass: &Rational,
    n: usize,
    mode: RadiusMode,
    cap: usize,
) -> Result<Rational> {
    let pieces = pieces(twist, mass, mode);
    let mut total = Rational::zero();
    system.for_each_cell(n, cap, |cell| {
        for piece in &pieces {
            let Some(dom) = cell.domain.intersect(&piece.domain) else {
                continue;
            };
            let mut band = Band::new(BigInt::zero(), BigInt::zero());
            band.lower(Lin::constant(dom.lo.clone()))
                .upper(Lin::constant(dom.hi.clone()));
            let shift = Lin::constant(-&cell.intercept);
            add_hit(&mut band, piece, &cell.slope, &shift);
            total += band.total();
        }
    })?;
    Ok(total)
}

/// `mu(B_1 ∩ T^-m B_2)` for intervals `B_1`, `B_2` under `x -> beta x mod 1`.
pub(crate) fn ball_pair_beta(beta: u32, b1: &RatInterval, b2: &RatInterval, m: usize) -> Rational {
    let q = qpow(beta, m);
    let inv = Rational::from_integer(q.clone()).recip();
    let mut band = Band::new(BigInt::zero(), q - 1);
    band.lower(Lin::new(inv.clone(), &b2.lo * &inv))
        .lower(Lin::constant(b1.lo.clone()))
        .upper(Lin::new(inv.clone(), &b2.hi * &inv))
        .upper(Lin::constant(b1.hi.clone()));
    band.total()
}

/// `mu(R_n ∩ R_{n+m})` for `x -> beta x mod 1` and a general affine twist.
///
/// The finer cells are indexed by `beta^m k + j`; the sum runs over
/// whichever of `k` and `j` has fewer values and handles the other in
/// closed form. Refused if that count exceeds `cap`.
pub(crate) fn pair_mass_beta(
    beta: u32,
    twist: &TwistSpec,
    masses: (&Rational, &Rational),
    n: usize,
    m: usize,
    mode: RadiusMode,
    cap: usize,
) -> Result<Rational> {
    let q1 = qpow(beta, n);
    let q2 = qpow(beta, n + m);
    let bm = qpow(beta, m);
    let (q1r, q2r, bmr) = (
        Rational::from_integer(q1.clone()),
        Rational::from_integer(q2.clone()),
        Rational::from_integer(bm.clone()),
    );
    let (inv1, inv2) = (q1r.recip(), q2r.recip());
    let p1 = pieces(twist, masses.0, mode);
    let p2 = pieces(twist, masses.1, mode);
    let mut total = Rational::zero();
    for a in &p1 {
        for b in &p2 {
            let Some(dom) = a.domain.intersect(&b.domain) else {
                continue;
            };
            let (k_lo, k_hi) = cell_range(&dom, &q1);
            if k_lo > k_hi {
                continue;
            }
            let k_count = &k_hi - &k_lo + 1;
            let outer_k = k_count <= bm;
            let count = if outer_k { k_count } else { bm.clone() };
            let count =
                count
                    .to_usize()
                    .filter(|&c| c <= cap)
                    .ok_or_else(|| TrlError::IntervalBudget {
                        count: count.to_usize().unwrap_or(usize::MAX),
                        cap,
                    })?;
            let (j_lo_all, j_hi_all) = cell_range(&dom, &q2);
            for i in 0..count {
                let mut band;
                if outer_k {
                    // fixed k, variable j
                    let k = &k_lo + i;
                    let kr = Rational::from_integer(k.clone());
                    let base = &bm * &k;
                    let j_lo = (&j_lo_all - &base).max(BigInt::zero());
                    let j_hi = (&j_hi_all - &base).min(&bm - 1);
                    band = Band::new(j_lo, j_hi);
                    band.lower(Lin::new(inv2.clone(), &kr * &inv1))
                        .upper(Lin::new(inv2.clone(), &kr * &inv1 + &inv2))
                        .lower(Lin::constant(dom.lo.clone()))
                        .upper(Lin::constant(dom.hi.clone()));
                    add_hit(&mut band, a, &q1r, &Lin::constant(kr.clone()));
                    add_hit(
                        &mut band,
                        b,
                        &q2r,
                        &Lin::new(Rational::one(), Rational::from_integer(base)),
                    );
                } else {
                    // fixed j, variable k
                    let j = Rational::from_integer(BigInt::from(i));
                    band = Band::new(k_lo.clone(), k_hi.clone());
                    band.lower(Lin::new(inv1.clone(), &j * &inv2))
                        .upper(Lin::new(inv1.clone(), (&j + Rational::one()) * &inv2))
                        .lower(Lin::constant(dom.lo.clone()))
                        .upper(Lin::constant(dom.hi.clone()));
                    add_hit(
                        &mut band,
                        a,
                        &q1r,
                        &Lin::new(Rational::one(), Rational::zero()),
                    );
                    add_hit(&mut band, b, &q2r, &Lin::new(bmr.clone(), j));
                }
                total += band.total();
            }
        }
    }
    Ok(total)
}

/// `mu(R_n ∩ R_{n+m})` for any affine system from the cells of `T^{n+m}`.
pub(crate) fn pair_mass_cells(
    system: &MapSystem,
    twist: &TwistSpec,
    masses: (&Rational, &Rational),
    n: usize,
    m: usize,
    mode: RadiusMode,
    cap: usize,
) -> Result<Rational> {
    let mut coarse = Vec::new();
    system.for_each_cell(n, cap, |c| coarse.push(c.clone()))?;
    let p1 = pieces(twist, masses.0, mode);
    let p2 = pieces(twist, masses.1, mode);
    let mut total = Rational::zero();
    system.for_each_cell(n + m, cap, |fine| {
        let mid = fine.domain.midpoint();
        let idx = coarse.partition_point(|c| c.domain.hi <= mid);
        let outer = &coarse[idx.min(coarse.len() - 1)];
        for a in &p1 {
            for b in &p2 {
                let Some(dom) = fine
                    .domain
                    .intersect(&a.domain)
                    .and_then(|d| d.intersect(&b.domain))
                else {
                    continue;
                };
                let mut band = Band::new(BigInt::zero(), BigInt::zero());
                band.lower(Lin::constant(dom.lo.clone()))
                    .upper(Lin::constant(dom.hi.clone()));
                add_hit(
                    &mut band,
                    a,
                    &outer.slope,
                    &Lin::constant(-&outer.intercept),
                );
                add_hit(&mut band, b, &fine.slope, &Lin::constant(-&fine.intercept));
                total += band.total();
            }
        }
    })?;
    Ok(total)
}
