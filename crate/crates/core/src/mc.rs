//! Monte Carlo plumbing: one random stream per sample index, so estimates do
//! not depend on how samples are spread over worker threads.

use crate::dynamics::{FixedPoint, MapSystem, Orbit, Point, PrecisionPolicy, SystemKind};
use crate::error::Result;
use crate::measure::MeasureModel;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// The generator for sample `index` of an experiment keyed by `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform01<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Evaluates `f(index)` for every sample in parallel and returns the results
/// in index order.
pub fn map_samples<T, F>(samples: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..samples as u64).into_par_iter().map(f).collect()
}

/// Draws `mu`-distributed dyadic seeds with enough bits for `n_max` steps
/// and iterates them without losing accuracy.
///
/// Integer-slope maps run in fixed point, where every step is exact. Other
/// systems run in exact rational arithmetic.
#[derive(Clone, Debug)]
pub struct SeedSampler<'a> {
    pub system: &'a MapSystem,
    pub measure: &'a MeasureModel,
    pub policy: PrecisionPolicy,
}

impl<'a> SeedSampler<'a> {
    pub fn new(system: &'a MapSystem, measure: &'a MeasureModel, n_max: usize) -> Self {
        Self {
            system,
            measure,
            policy: PrecisionPolicy::for_system(system, n_max),
        }
    }

    pub fn seed(&self, seed: u64, index: u64) -> Result<Point> {
        let mut rng = stream_rng(seed, index);
        let x = self
            .measure
            .sample_dyadic(&mut rng, self.policy.working_bits)?;
        Ok(match self.system.kind {
            SystemKind::BetaInt { .. } => Point::Fixed(FixedPoint::from_rational(
                &x,
                self.policy.working_bits.max(53),
            )),
            _ => Point::Exact(x),
        })
    }

    pub fn orbit(&self, x: Point, n: usize) -> Result<Orbit> {
        self.system.iterate_orbit(x, n, &self.policy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl MeanEstimate {
    /// Summed in slice order, so the result is reproducible bit for bit.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    pub fn from_bernoulli(hits: usize, samples: usize) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            mean: p,
            stderr: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }
}
