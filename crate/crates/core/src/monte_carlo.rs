//! Sampled estimates of `P(Δ = ℓ | μ)` and `P(Δ = ℓ)` for large `n`.
//!
//! Sample `i` of a run draws from its own ChaCha8 stream: the key holds
//! `(seed, n, μ)` and the stream number is `i`. Which worker handles a sample
//! therefore never changes what it draws, and histograms are integer sums.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::codec::PruferString;
use crate::coupled::{CoupledDecoder, CoupledError, MutationPair, Thresholds};
use crate::exact::in_pool;
use crate::stats::{standard_error, wilson_interval, Z_95};
use crate::tree::Vertex;

pub const DEFAULT_MAX_ELL: usize = 64;

const CHUNK: u64 = 1 << 10;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Coupled(#[from] CoupledError),
}

/// Which positions to sample.
#[derive(Clone, Debug, PartialEq)]
pub enum MuSpec {
    List(Vec<usize>),
    /// `μ = round(αn)`, see [`mu_for_alpha`].
    AlphaGrid(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n: u32,
    pub mu_spec: MuSpec,
    /// Samples per position.
    pub samples: u64,
    pub seed: u64,
    /// Larger `Δ` go to the overflow bucket.
    pub max_ell_tracked: usize,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl SimConfig {
    pub fn new(n: u32, mu_spec: MuSpec, samples: u64, seed: u64) -> Self {
        SimConfig {
            n,
            mu_spec,
            samples,
            seed,
            max_ell_tracked: DEFAULT_MAX_ELL,
            workers: None,
        }
    }

    /// The `(μ, α)` points of the run.
    pub fn points(&self) -> Result<Vec<(usize, Option<f64>)>, SimError> {
        let n = self.n;
        if n < 3 {
            return Err(SimError::InvalidConfig(format!(
                "n must be at least 3, got {n}"
            )));
        }
        if self.samples == 0 {
            return Err(SimError::InvalidConfig("samples must be at least 1".into()));
        }
        let max = n as usize - 2;
        let points: Vec<(usize, Option<f64>)> = match &self.mu_spec {
            MuSpec::List(mus) => mus.iter().map(|&m| (m, None)).collect(),
            MuSpec::AlphaGrid(alphas) => alphas
                .iter()
                .map(|&a| {
                    if a > 0.0 && a < 1.0 {
                        Ok((mu_for_alpha(n, a), Some(a)))
                    } else {
                        Err(SimError::InvalidConfig(format!(
                            "alpha {a} is outside (0, 1)"
                        )))
                    }
                })
                .collect::<Result<_, _>>()?,
        };
        if points.is_empty() {
            return Err(SimError::InvalidConfig(
                "no mutation positions given".into(),
            ));
        }
        if let Some(&(mu, _)) = points.iter().find(|(m, _)| *m == 0 || *m > max) {
            return Err(SimError::InvalidConfig(format!(
                "mutation position {mu} is outside 1..={max}"
            )));
        }
        Ok(points)
    }
}

/// `round(αn)` with halves rounded up, clamped to `[1, n−2]`.
pub fn mu_for_alpha(n: u32, alpha: f64) -> usize {
    let mu = (alpha * n as f64 + 0.5).floor();
    (mu.max(1.0) as usize).min(n as usize - 2)
}

/// Stream of sample `index`. Position 0 keys the marginal runs.
pub fn sample_stream(seed: u64, n: u32, mu: usize, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(n as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(mu as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A uniform draw from `M_μ`.
pub fn sample_pair<R: Rng + ?Sized>(n: u32, mu: usize, rng: &mut R) -> MutationPair {
    let entries: Vec<Vertex> = (0..n - 2).map(|_| rng.random_range(1..=n)).collect();
    let current = entries[mu - 1];
    let mut value = rng.random_range(1..n);
    if value >= current {
        value += 1;
    }
    let base = PruferString::new(n, entries).expect("entries drawn in range");
    MutationPair::new(base, mu, value).expect("valid position and replacement")
}

/// Pooled `Δ` values above the histogram cutoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Overflow {
    pub count: u64,
    pub sum: u64,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Tally {
    counts: Vec<u64>,
    overflow: Overflow,
    event_e: u64,
}

impl Tally {
    fn new(max_ell: usize) -> Self {
        Tally {
            counts: vec![0; max_ell + 1],
            overflow: Overflow::default(),
            event_e: 0,
        }
    }

    fn add(&mut self, delta: usize, e: bool) {
        match self.counts.get_mut(delta) {
            Some(c) => *c += 1,
            None => {
                self.overflow.count += 1;
                self.overflow.sum += delta as u64;
                self.overflow.max = self.overflow.max.max(delta);
            }
        }
        self.event_e += e as u64;
    }

    fn merge(mut self, other: Tally) -> Self {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.overflow.count += other.overflow.count;
        self.overflow.sum += other.overflow.sum;
        self.overflow.max = self.overflow.max.max(other.overflow.max);
        self.event_e += other.event_e;
        self
    }
}

/// Sampled distribution of `Δ` at one position (or over all positions).
#[derive(Clone, Debug)]
pub struct DistEstimate {
    pub n: u32,
    /// `None` for the marginal over uniform `μ`.
    pub mu: Option<usize>,
    pub alpha: Option<f64>,
    pub samples: u64,
    pub seed: u64,
    /// `histogram[ℓ]` for `ℓ ≤ max_ell_tracked`.
    pub histogram: Vec<u64>,
    pub overflow: Overflow,
    /// Samples with event `E`.
    pub event_e: u64,
    pub elapsed: Duration,
}

impl DistEstimate {
    pub fn count(&self, ell: usize) -> u64 {
        self.histogram.get(ell).copied().unwrap_or(0)
    }

    pub fn p_hat(&self, ell: usize) -> f64 {
        self.count(ell) as f64 / self.samples as f64
    }

    /// Wilson 95% interval for `P(Δ = ℓ)`.
    pub fn ci(&self, ell: usize) -> (f64, f64) {
        wilson_interval(self.count(ell), self.samples, Z_95)
    }

    pub fn std_error(&self, ell: usize) -> f64 {
        standard_error(self.p_hat(ell), self.samples)
    }

    pub fn max_ell_tracked(&self) -> usize {
        self.histogram.len() - 1
    }

    /// Rows for `ℓ = 1..=` largest observed, then one overflow row if any
    /// sample exceeded the cutoff.
    pub fn rows(&self) -> Vec<SimRow> {
        let max = self.histogram.iter().rposition(|&c| c > 0).unwrap_or(0);
        let mut rows: Vec<SimRow> = (1..=max)
            .map(|ell| self.row(ell.to_string(), self.count(ell)))
            .collect();
        if self.overflow.count > 0 {
            rows.push(self.row(format!(">{}", self.max_ell_tracked()), self.overflow.count));
        }
        rows
    }

    fn row(&self, ell: String, count: u64) -> SimRow {
        let (ci_low, ci_high) = wilson_interval(count, self.samples, Z_95);
        SimRow {
            n: self.n,
            mu: self.mu.map_or_else(|| "all".to_string(), |m| m.to_string()),
            alpha: self.alpha,
            ell,
            count,
            samples: self.samples,
            p_hat: count as f64 / self.samples as f64,
            ci_low,
            ci_high,
            seed: self.seed,
        }
    }
}

/// One CSV/JSON record of a sampled distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimRow {
    pub n: u32,
    pub mu: String,
    pub alpha: Option<f64>,
    pub ell: String,
    pub count: u64,
    pub samples: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

/// One point of the `P(Δ = 1 | μ = αn)` curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: u32,
    pub alpha: f64,
    pub mu: usize,
    pub samples: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `(1 − α)²`.
    pub reference: f64,
    /// `p_hat − reference`.
    pub residual: f64,
    pub seed: u64,
}

fn run_samples(
    n: u32,
    key_mu: usize,
    samples: u64,
    seed: u64,
    max_ell: usize,
    draw: impl Fn(&mut ChaCha8Rng) -> MutationPair + Sync,
) -> Result<Tally, CoupledError> {
    let th = Thresholds::for_order(n);
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut tally = Tally::new(max_ell);
            let mut decoder = CoupledDecoder::new();
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(samples) {
                let mut rng = sample_stream(seed, n, key_mu, i);
                let pair = draw(&mut rng);
                let out = decoder.outcome(&pair, Some(th))?;
                tally.add(out.delta_total, out.flags.e);
            }
            Ok(tally)
        })
        .try_reduce(|| Tally::new(max_ell), |a, b| Ok(a.merge(b)))
}

/// One estimate per configured position.
pub fn estimate_delta_dist(cfg: &SimConfig) -> Result<Vec<DistEstimate>, SimError> {
    let points = cfg.points()?;
    let n = cfg.n;
    in_pool(cfg.workers, || {
        points
            .iter()
            .map(|&(mu, alpha)| {
                let start = Instant::now();
                let tally =
                    run_samples(n, mu, cfg.samples, cfg.seed, cfg.max_ell_tracked, |rng| {
                        sample_pair(n, mu, rng)
                    })?;
                Ok(DistEstimate {
                    n,
                    mu: Some(mu),
                    alpha,
                    samples: cfg.samples,
                    seed: cfg.seed,
                    histogram: tally.counts,
                    overflow: tally.overflow,
                    event_e: tally.event_e,
                    elapsed: start.elapsed(),
                })
            })
            .collect()
    })
}

/// Estimate of `P(Δ = ℓ)` with `μ` uniform on `1..=n−2`.
pub fn estimate_marginal(n: u32, samples: u64, seed: u64) -> Result<DistEstimate, SimError> {
    estimate_marginal_with(n, samples, seed, DEFAULT_MAX_ELL, None)
}

pub fn estimate_marginal_with(
    n: u32,
    samples: u64,
    seed: u64,
    max_ell: usize,
    workers: Option<usize>,
) -> Result<DistEstimate, SimError> {
    let cfg = SimConfig {
        max_ell_tracked: max_ell,
        workers,
        ..SimConfig::new(n, MuSpec::List(vec![1]), samples, seed)
    };
    cfg.points()?;
    let start = Instant::now();
    let tally = in_pool(workers, || {
        run_samples(n, 0, samples, seed, max_ell, |rng| {
            let mu = rng.random_range(1..=n as usize - 2);
            sample_pair(n, mu, rng)
        })
    })?;
    Ok(DistEstimate {
        n,
        mu: None,
        alpha: None,
        samples,
        seed,
        histogram: tally.counts,
        overflow: tally.overflow,
        event_e: tally.event_e,
        elapsed: start.elapsed(),
    })
}

/// `P(Δ = 1 | μ = round(αn))` against `(1 − α)²` for each `α`.
pub fn curve_sweep(
    n: u32,
    alphas: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<SweepRow>, SimError> {
    curve_sweep_with(n, alphas, samples, seed, None)
}

pub fn curve_sweep_with(
    n: u32,
    alphas: &[f64],
    samples: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<SweepRow>, SimError> {
    let cfg = SimConfig {
        workers,
        ..SimConfig::new(n, MuSpec::AlphaGrid(alphas.to_vec()), samples, seed)
    };
    Ok(estimate_delta_dist(&cfg)?
        .iter()
        .map(|est| {
            let alpha = est.alpha.expect("alpha grid");
            let reference = (1.0 - alpha) * (1.0 - alpha);
            let (ci_low, ci_high) = est.ci(1);
            SweepRow {
                n,
                alpha,
                mu: est.mu.expect("per-position estimate"),
                samples,
                p_hat: est.p_hat(1),
                ci_low,
                ci_high,
                reference,
                residual: est.p_hat(1) - reference,
                seed,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn alpha_rounding() {
        assert_eq!(mu_for_alpha(1000, 0.5), 500);
        assert_eq!(mu_for_alpha(1000, 0.1), 100);
        assert_eq!(mu_for_alpha(10, 0.25), 3);
        assert_eq!(mu_for_alpha(10, 0.01), 1);
        assert_eq!(mu_for_alpha(10, 0.99), 8);
    }

    #[test]
    fn sampled_entries_are_uniform() {
        let n = 10u32;
        let samples = 1_000_000u64;
        let mu = 4;
        let mut counts = vec![vec![0u64; n as usize]; n as usize - 1];
        for i in 0..samples {
            let pair = sample_pair(n, mu, &mut sample_stream(7, n, mu, i));
            assert_ne!(pair.entry(mu), pair.mutated_value());
            for (k, &v) in pair.p().entries().iter().enumerate() {
                counts[k][v as usize - 1] += 1;
            }
            counts[n as usize - 2][pair.mutated_value() as usize - 1] += 1;
        }
        let expected = samples as f64 / n as f64;
        let chi = ChiSquared::new(n as f64 - 1.0).unwrap();
        for row in &counts {
            let stat: f64 = row
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            assert!(1.0 - chi.cdf(stat) > 1e-3, "chi-square {stat} for {row:?}");
        }
    }

    #[test]
    fn event_e_rate_at_n100() {
        let (n, mu) = (100u32, 50usize);
        let samples = 200_000u64;
        let mut cfg = SimConfig::new(n, MuSpec::List(vec![mu]), samples, 1);
        cfg.max_ell_tracked = 8;
        let est = &estimate_delta_dist(&cfg).unwrap()[0];
        let p = (50.0 * 49.0) / (100.0 * 99.0);
        let got = est.event_e as f64 / samples as f64;
        assert!(
            (got - p).abs() <= 3.0 * standard_error(p, samples),
            "{got} vs {p}"
        );
        assert_eq!(est.count(0), 0);
        let total: u64 = est.histogram.iter().sum::<u64>() + est.overflow.count;
        assert_eq!(total, samples);
    }

    #[test]
    fn deterministic_across_workers() {
        let base = SimConfig::new(40, MuSpec::List(vec![3, 20]), 5000, 99);
        let runs: Vec<_> = [1, 3, 8]
            .iter()
            .map(|&w| {
                let cfg = SimConfig {
                    workers: Some(w),
                    ..base.clone()
                };
                estimate_delta_dist(&cfg)
                    .unwrap()
                    .iter()
                    .map(|e| (e.histogram.clone(), e.overflow, e.event_e))
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
        assert_eq!(runs[0], runs[2]);
    }

    #[test]
    fn overflow_bucket() {
        let mut cfg = SimConfig::new(60, MuSpec::List(vec![2]), 3000, 5);
        cfg.max_ell_tracked = 1;
        let est = &estimate_delta_dist(&cfg).unwrap()[0];
        assert!(est.overflow.count > 0);
        assert!(est.overflow.max >= 2);
        assert!(est.overflow.sum >= 2 * est.overflow.count);
        let rows = est.rows();
        assert_eq!(rows.last().unwrap().ell, ">1");
        assert_eq!(est.count(1) + est.overflow.count, 3000);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SimConfig::new(2, MuSpec::List(vec![1]), 10, 0),
            SimConfig::new(10, MuSpec::List(vec![9]), 10, 0),
            SimConfig::new(10, MuSpec::List(vec![]), 10, 0),
            SimConfig::new(10, MuSpec::List(vec![1]), 0, 0),
            SimConfig::new(10, MuSpec::AlphaGrid(vec![1.0]), 10, 0),
        ];
        for cfg in bad {
            assert!(matches!(
                estimate_delta_dist(&cfg),
                Err(SimError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn sweep_reference_column() {
        let rows = curve_sweep(50, &[0.5], 100, 3).unwrap();
        assert_eq!(rows[0].reference, 0.25);
        assert_eq!(rows[0].mu, 25);
        assert!(rows[0].ci_low <= rows[0].p_hat && rows[0].p_hat <= rows[0].ci_high);
    }
}
