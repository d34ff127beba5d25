//! Exhaustive distribution of `Δ` over every mutation pair of a small order.
//!
//! The pairs at position `μ` are all `n^{n−2}` strings `P` combined with each
//! of the `n − 1` replacement values `p*_μ ≠ p_μ`. Strings are split into
//! index ranges that workers tally independently; tallies are integer sums,
//! so the result does not depend on the worker count.

use num_integer::Integer;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::codec::PruferString;
use crate::coupled::{CoupledDecoder, CoupledError, MutationPair};
use crate::tree::Vertex;

/// Largest order enumerated without an explicit override.
pub const DEFAULT_CAP: u32 = 9;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EnumerationError {
    #[error("n = {n} exceeds the enumeration cap {cap} (work grows as n^(n-2))")]
    TooLarge { n: u32, cap: u32 },
    #[error("enumeration needs n >= 3, got {0}")]
    TooSmall(u32),
    #[error("mutation position {mu} is outside 1..={max}")]
    InvalidMu { mu: usize, max: usize },
    #[error(transparent)]
    Coupled(#[from] CoupledError),
}

#[derive(Clone, Debug)]
pub struct EnumerationOptions {
    pub cap: u32,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            cap: DEFAULT_CAP,
            workers: None,
        }
    }
}

/// Exact counts of `Δ = ℓ` over `M_μ` (or over all of `M`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactDistribution {
    pub n: u32,
    /// `None` for the union over every position.
    pub mu: Option<usize>,
    /// `counts[ℓ]` for `ℓ = 0..=n−1`.
    pub counts: Vec<u128>,
    pub total: u128,
    /// Pairs with event `E`.
    pub event_e: u128,
    /// Pairs with event `E` and `Δ = 1`.
    pub event_e_delta_one: u128,
}

impl ExactDistribution {
    pub fn count(&self, ell: usize) -> u128 {
        self.counts.get(ell).copied().unwrap_or(0)
    }

    /// `P(Δ = ℓ)` as a reduced fraction.
    pub fn probability(&self, ell: usize) -> (u128, u128) {
        reduce(self.count(ell), self.total)
    }

    pub fn probability_f64(&self, ell: usize) -> f64 {
        self.count(ell) as f64 / self.total as f64
    }

    /// One row per `ℓ` from 1 up to the largest `ℓ` observed.
    pub fn rows(&self) -> Vec<ExactRow> {
        let max = self.counts.iter().rposition(|&c| c > 0).unwrap_or(0);
        (1..=max)
            .map(|ell| {
                let (num, den) = self.probability(ell);
                ExactRow {
                    n: self.n,
                    mu: self.mu.map_or_else(|| "all".to_string(), |m| m.to_string()),
                    ell,
                    count: self.count(ell),
                    total: self.total,
                    prob_rational: format!("{num}/{den}"),
                    prob_decimal: self.probability_f64(ell),
                }
            })
            .collect()
    }

    fn merge(mut self, other: &ExactDistribution) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.event_e += other.event_e;
        self.event_e_delta_one += other.event_e_delta_one;
        self
    }
}

/// One CSV/JSON record of an exact distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactRow {
    pub n: u32,
    pub mu: String,
    pub ell: usize,
    pub count: u128,
    pub total: u128,
    pub prob_rational: String,
    pub prob_decimal: f64,
}

/// `num/den` in lowest terms; `0/d` becomes `0/1`.
pub fn reduce(num: u128, den: u128) -> (u128, u128) {
    let g = num.gcd(&den);
    match (num.checked_div(g), den.checked_div(g)) {
        (Some(n), Some(d)) => (n, d),
        _ => (0, 1),
    }
}

/// `|M_μ| = n^{n−2}(n−1)`, or `None` on overflow.
pub fn pairs_per_position(n: u32) -> Option<u128> {
    (n as u128).checked_pow(n - 2)?.checked_mul(n as u128 - 1)
}

/// `n^{n−3}(n−μ)(n−μ−1)`: the number of pairs in `M_μ` with event `E`.
pub fn event_e_closed_form(n: u32, mu: usize) -> u128 {
    let (n, mu) = (n as u128, mu as u128);
    n.pow(n as u32 - 3) * (n - mu) * (n - mu - 1)
}

#[derive(Clone, Copy, Default)]
struct Tally {
    event_e: u128,
    event_e_delta_one: u128,
}

fn check(n: u32, mu: Option<usize>, opts: &EnumerationOptions) -> Result<(), EnumerationError> {
    if n < 3 {
        return Err(EnumerationError::TooSmall(n));
    }
    if n > opts.cap || pairs_per_position(n).is_none() {
        return Err(EnumerationError::TooLarge { n, cap: opts.cap });
    }
    if let Some(mu) = mu {
        let max = n as usize - 2;
        if mu == 0 || mu > max {
            return Err(EnumerationError::InvalidMu { mu, max });
        }
    }
    Ok(())
}

pub(crate) fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn enumerate_position(n: u32, mu: usize) -> Result<ExactDistribution, CoupledError> {
    let len = n as usize - 2;
    let strings = (n as u64).pow(len as u32);
    // Ranges of consecutive string indices, a few per worker.
    const CHUNK: u64 = 1 << 12;
    let chunks = strings.div_ceil(CHUNK);
    let empty = ExactDistribution {
        n,
        mu: Some(mu),
        counts: vec![0; n as usize],
        total: 0,
        event_e: 0,
        event_e_delta_one: 0,
    };
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(strings);
            let mut dist = empty.clone();
            let mut tally = Tally::default();
            let mut decoder = CoupledDecoder::new();
            // Least significant digit is p_1.
            let mut digits = vec![1 as Vertex; len];
            let mut rest = start;
            for d in digits.iter_mut() {
                *d = (rest % n as u64) as Vertex + 1;
                rest /= n as u64;
            }
            let base = PruferString::new(n, digits.clone()).expect("digits in range");
            let first_value = if base.entry(mu) == 1 { 2 } else { 1 };
            let mut pair = MutationPair::new(base, mu, first_value)?;
            for _ in start..end {
                for value in (1..=n).filter(|&v| v != digits[mu - 1]) {
                    pair.reassign(|e| {
                        e.copy_from_slice(&digits);
                        value
                    });
                    let out = decoder.outcome(&pair, None)?;
                    dist.counts[out.delta_total] += 1;
                    dist.total += 1;
                    if out.flags.e {
                        tally.event_e += 1;
                        tally.event_e_delta_one += (out.delta_total == 1) as u128;
                    }
                }
                // Odometer increment.
                for d in digits.iter_mut() {
                    if *d < n {
                        *d += 1;
                        break;
                    }
                    *d = 1;
                }
            }
            dist.event_e = tally.event_e;
            dist.event_e_delta_one = tally.event_e_delta_one;
            Ok(dist)
        })
        .try_reduce(|| empty.clone(), |a, b| Ok(a.merge(&b)))
}

/// Exact distribution of `Δ` over `M_μ` with the default cap.
pub fn enumerate_mu(n: u32, mu: usize) -> Result<ExactDistribution, EnumerationError> {
    enumerate_mu_with(n, mu, &EnumerationOptions::default())
}

pub fn enumerate_mu_with(
    n: u32,
    mu: usize,
    opts: &EnumerationOptions,
) -> Result<ExactDistribution, EnumerationError> {
    check(n, Some(mu), opts)?;
    Ok(in_pool(opts.workers, || enumerate_position(n, mu))?)
}

/// Exact marginal distribution of `Δ` over all of `M`, every position
/// weighted equally.
pub fn enumerate_all(n: u32) -> Result<ExactDistribution, EnumerationError> {
    enumerate_all_with(n, &EnumerationOptions::default())
}

pub fn enumerate_all_with(
    n: u32,
    opts: &EnumerationOptions,
) -> Result<ExactDistribution, EnumerationError> {
    check(n, None, opts)?;
    let per_mu = in_pool(opts.workers, || {
        (1..=n as usize - 2)
            .map(|mu| enumerate_position(n, mu))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut it = per_mu.into_iter();
    let first = it.next().expect("n >= 3 has a position");
    let mut all = it.fold(first, |acc, d| acc.merge(&d));
    all.mu = None;
    Ok(all)
}

/// Number of pairs in `M_μ` with event `E`.
pub fn count_event_e(n: u32, mu: usize) -> Result<u128, EnumerationError> {
    Ok(enumerate_mu(n, mu)?.event_e)
}
