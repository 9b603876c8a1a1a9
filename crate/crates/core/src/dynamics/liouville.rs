//! Rotation numbers that are abnormally well approximated by rationals.
//!
//! Partial quotients are chosen greedily, `a_{k+1} = ceil(1 / (q_k psi(q_k))) + 1`,
//! which forces `|q_k alpha - p_k| < 1 / (a_{k+1} q_k) < psi(q_k)` for every
//! convergent below the final depth.

use super::MapSystem;
use crate::error::{Result, TrlError};
use crate::rational::{self, RatInterval, Rational};
use crate::schedule::PsiSpec;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct ConvergentCheck {
    pub k: usize,
    pub p: String,
    pub q: String,
    /// `max |q_k alpha - p_k|` over the enclosure of `alpha`, as a float.
    pub distance_bound: f64,
    pub psi: f64,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct LiouvilleRotation {
    /// `[a_1, ..., a_d]`.
    pub partial_quotients: Vec<BigInt>,
    /// `(p_k, q_k)` for `k = 0..=d`, starting from `0/1`.
    pub convergents: Vec<(BigInt, BigInt)>,
    /// The rational `p_d / q_d` used as the rotation number.
    pub alpha: Rational,
    /// Every continuation of the expansion lies in here.
    pub enclosure: RatInterval,
    pub checks: Vec<ConvergentCheck>,
    /// Set when the requested depth could not be reached.
    pub truncated_at: Option<usize>,
}

impl LiouvilleRotation {
    pub fn system(&self) -> Result<MapSystem> {
        MapSystem::rotation_from_cf(&self.partial_quotients)
    }

    pub fn all_verified(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    /// Denominators `q_k` with `1 <= q_k <= horizon` that carry a
    /// verification entry.
    pub fn denominators_within(&self, horizon: usize) -> Vec<usize> {
        self.convergents
            .iter()
            .take(self.checks.len())
            .filter_map(|(_, q)| usize::try_from(q).ok())
            .filter(|&q| q >= 1 && q <= horizon)
            .collect()
    }
}

pub fn build_liouville_rotation(
    psi: &PsiSpec,
    depth: usize,
    bit_budget: u64,
) -> Result<LiouvilleRotation> {
    if depth < 2 {
        return Err(TrlError::InvalidSystem(
            "Liouville construction needs depth >= 2".into(),
        ));
    }
    let mut convergents = vec![(BigInt::zero(), BigInt::one())];
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    let mut quotients = Vec::with_capacity(depth);
    let mut truncated_at = None;
    for k in 0..depth {
        let (p_k, q_k) = convergents[k].clone();
        let Some(target) = psi.eval_exact(&q_k, bit_budget) else {
            truncated_at = Some(k);
            break;
        };
        if !target.is_positive() {
            truncated_at = Some(k);
            break;
        }
        let a =
            rational::ceil_int(&(Rational::one() / (Rational::from_integer(q_k.clone()) * target)))
                + BigInt::one();
        if a.bits() > bit_budget {
            truncated_at = Some(k);
            break;
        }
        let p_next = &a * &p_k + &p_prev;
        let q_next = &a * &q_k + &q_prev;
        p_prev = p_k;
        q_prev = q_k;
        quotients.push(a);
        convergents.push((p_next, q_next));
    }
    let d = quotients.len();
    if d == 0 {
        return Err(TrlError::InvalidSystem(
            "psi(1) is too small for the integer budget".into(),
        ));
    }
    let (p_d, q_d) = &convergents[d];
    let (p_c, q_c) = &convergents[d - 1];
    let end_a = Rational::new(p_d.clone(), q_d.clone());
    let end_b = Rational::new(p_d + p_c, q_d + q_c);
    let enclosure = if end_a <= end_b {
        RatInterval::new(end_a.clone(), end_b.clone())
    } else {
        RatInterval::new(end_b.clone(), end_a.clone())
    };
    let mut checks = Vec::with_capacity(d);
    for (k, (p, q)) in convergents.iter().take(d).enumerate() {
        let qr = Rational::from_integer(q.clone());
        let pr = Rational::from_integer(p.clone());
        let dist = |x: &Rational| (&qr * x - &pr).abs();
        let bound = rational::rmax(dist(&end_a), dist(&end_b));
        let target = psi
            .eval_exact(q, bit_budget)
            .expect("psi was evaluated while building");
        checks.push(ConvergentCheck {
            k,
            p: p.to_string(),
            q: q.to_string(),
            distance_bound: rational::to_f64(&bound),
            psi: rational::to_f64(&target),
            ok: bound < target,
        });
    }
    Ok(LiouvilleRotation {
        partial_quotients: quotients,
        alpha: end_a,
        enclosure,
        convergents,
        checks,
        truncated_at,
    })
}
