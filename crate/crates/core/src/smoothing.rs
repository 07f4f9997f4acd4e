//! The scalar smoothing transform governing two-point distances.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{ks_test, rayleigh_cdf, rayleigh_mean};
use crate::error::{Error, Result};
use crate::randomness::{sample_dirichlet_half, sample_multinomial, Stream, WordPath};

/// Sorted sample of nonnegative reals standing in for a law.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDist {
    samples: Vec<f64>,
}

impl EmpiricalDist {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if let Some(x) = samples.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::invalid("samples", format!("{x} is negative or not finite")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalDist { samples })
    }

    pub fn point_mass(x: f64, size: usize) -> Result<Self> {
        EmpiricalDist::new(vec![x; size])
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `NaN` for an empty sample.
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (self.samples.len() as f64 - 1.0)
    }

    /// Every sample multiplied by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        EmpiricalDist::new(self.samples.iter().map(|x| x * c).collect())
    }

    /// A uniformly chosen sample.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.samples[rng.random_range(0..self.samples.len())]
    }
}

/// Smoothing weights `W_k = sqrt(Δ_k) 1{P_k > 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightsW(pub [f64; 3]);

/// `Δ ~ Dir(1/2, 1/2, 1/2)`, `P ~ Multinomial(2; Δ)`.
pub fn sample_weights<R: Rng + ?Sized>(rng: &mut R) -> WeightsW {
    let delta = sample_dirichlet_half(rng);
    let balls = sample_multinomial(rng, 2, &delta);
    let d = delta.masses();
    WeightsW([0, 1, 2].map(|k| if balls[k] > 0 { d[k].sqrt() } else { 0.0 }))
}

fn check_s(function: &'static str, s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { function, value: s })
    }
}

/// `E[W_1^s 1{W_1 > 0}] = 2/(s+3) - 1/(s+5)`.
pub fn w_moment(s: f64) -> Result<f64> {
    check_s("w_moment", s)?;
    Ok(2.0 / (s + 3.0) - 1.0 / (s + 5.0))
}

/// `log(3(s+7) / ((s+3)(s+5)))`.
pub fn nu(s: f64) -> Result<f64> {
    check_s("nu", s)?;
    Ok((3.0 * (s + 7.0) / ((s + 3.0) * (s + 5.0))).ln())
}

pub fn nu_prime(s: f64) -> Result<f64> {
    check_s("nu_prime", s)?;
    Ok(1.0 / (s + 7.0) - 1.0 / (s + 3.0) - 1.0 / (s + 5.0))
}

const CHUNK: usize = 4096;

/// `out_size` draws of `W_1 D_1 + W_2 D_2 + W_3 D_3` with the `D_k` resampled
/// from `pool`. Output chunks use their own derived streams, so the result
/// does not depend on the thread count.
pub fn apply_fsm(pool: &EmpiricalDist, out_size: usize, rng: &mut dyn RngCore) -> Result<EmpiricalDist> {
    if pool.is_empty() {
        return Err(Error::invalid("pool", "the smoothing transform needs a nonempty pool"));
    }
    let seed = rng.next_u64();
    let chunks = out_size.div_ceil(CHUNK);
    let out: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut s = Stream::derive(seed, &WordPath::root(), &format!("fsm:{c}"));
            let len = CHUNK.min(out_size - c * CHUNK);
            (0..len)
                .map(|_| {
                    let w = sample_weights(&mut s);
                    w.0.iter().map(|&wk| if wk > 0.0 { wk * pool.resample(&mut s) } else { 0.0 }).sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    EmpiricalDist::new(out)
}

/// One monitored iterate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub ks_stat: f64,
    pub mean: f64,
    pub pool_size: usize,
    /// The pool mean left the band around `sqrt(pi/2)`.
    pub mean_warning: bool,
}

#[derive(Clone, Debug)]
pub struct SmoothingRun {
    pub trace: Vec<TraceRow>,
    pub last: EmpiricalDist,
}

/// Default relative band for the mean-matching condition.
pub const DEFAULT_MEAN_BAND: f64 = 0.02;

fn trace_row(iteration: usize, pool: &EmpiricalDist, band: f64) -> TraceRow {
    let mean = pool.mean();
    let target = rayleigh_mean();
    TraceRow {
        iteration,
        ks_stat: ks_test(pool.samples(), |x| rayleigh_cdf(x).unwrap_or(0.0)).statistic,
        mean,
        pool_size: pool.len(),
        mean_warning: (mean - target).abs() > band * target,
    }
}

/// `n` iterates of the smoothing transform from `initial`, recording the KS
/// distance to the Rayleigh law and the mean after each; row 0 describes the
/// initial pool.
pub fn iterate_fsm(
    initial: &EmpiricalDist,
    n: usize,
    pool_size: usize,
    rng: &mut dyn RngCore,
    mean_band: f64,
) -> Result<SmoothingRun> {
    if initial.is_empty() {
        return Err(Error::invalid("initial", "empty pool"));
    }
    if pool_size == 0 {
        return Err(Error::invalid("pool_size", "must be positive"));
    }
    let mut pool = initial.clone();
    let mut trace = vec![trace_row(0, &pool, mean_band)];
    for it in 1..=n {
        pool = apply_fsm(&pool, pool_size, rng)?;
        trace.push(trace_row(it, &pool, mean_band));
    }
    Ok(SmoothingRun { trace, last: pool })
}

/// CSV with columns `iteration,ks_stat,mean,pool_size`.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,ks_stat,mean,pool_size\n");
    for r in trace {
        out.push_str(&format!("{},{:.6e},{:.10},{}\n", r.iteration, r.ks_stat, r.mean, r.pool_size));
    }
    out
}

/// The statistic decreases strictly until it first drops below `band`, and
/// stays below `band` from then on.
///
/// Once the pool is near the fixed point its KS distance does not keep
/// shrinking: the mean is preserved by the transform, so resampling noise in
/// the mean accumulates like a random walk instead of being damped. The band
/// therefore has to sit above that plateau.
pub fn eventually_decreasing(ks: &[f64], band: f64) -> bool {
    let Some(hit) = ks.iter().position(|&k| k < band) else {
        return false;
    };
    ks[..=hit].windows(2).all(|w| w[1] < w[0]) && ks[hit..].iter().all(|&k| k < band)
}
