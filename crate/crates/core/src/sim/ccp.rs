use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{step, CacheInstance};
use super::{derive_seed, RequestModel};
use crate::error::{invalid, Result};
use crate::schemes::Scheme;
use crate::state_space::Popularity;

/// Instantaneous caching probability after each request, averaged over
/// independent rounds that start from an empty cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcpEstimate {
    pub n_rounds: u64,
    pub n_requests: usize,
    /// Tracked contents, 0-based.
    pub tracked: Vec<usize>,
    /// `values[i][n]`: probability that `tracked[i]` is cached after request `n + 1`.
    pub values: Vec<Vec<f64>>,
    /// Mean number of occupied slots after each request (the sum of all
    /// contents' caching probabilities).
    pub occupancy: Vec<f64>,
}

impl CcpEstimate {
    /// Mean of `values[i]` over request indices `start..end` (0-based).
    pub fn window_mean(&self, i: usize, start: usize, end: usize) -> f64 {
        let w = &self.values[i][start..end];
        w.iter().sum::<f64>() / w.len() as f64
    }

    /// Largest change between the means of two adjacent windows of width
    /// `window` ending at request index `end`, over all tracked contents.
    pub fn drift_at(&self, end: usize, window: usize) -> f64 {
        (0..self.tracked.len())
            .map(|i| {
                (self.window_mean(i, end - window, end)
                    - self.window_mean(i, end - 2 * window, end - window))
                .abs()
            })
            .fold(0.0, f64::max)
    }

    /// First request count from which the windowed drift stays below
    /// `threshold` until the end of the experiment.
    pub fn stationary_from(&self, window: usize, threshold: f64) -> Option<usize> {
        if window == 0 || 2 * window > self.n_requests {
            return None;
        }
        let mut first = None;
        for end in (2 * window..=self.n_requests).rev() {
            if self.drift_at(end, window) < threshold {
                first = Some(end);
            } else {
                break;
            }
        }
        first
    }
}

/// Runs `n_rounds` independent traces of `n_requests` requests from an
/// empty cache and averages the per-request caching indicators.
pub fn ccp_trajectory(
    scheme: &Scheme,
    popularity: &Popularity,
    cache_size: usize,
    n_rounds: u64,
    n_requests: usize,
    tracked: &[usize],
    seed: u64,
) -> Result<CcpEstimate> {
    let n_contents = popularity.len();
    scheme.validate(n_contents, cache_size)?;
    if n_rounds == 0 || n_requests == 0 {
        return invalid("rounds and requests must be positive");
    }
    if let Some(&c) = tracked.iter().find(|&&c| c >= n_contents) {
        return invalid(format!(
            "tracked content {} exceeds N_c = {n_contents}",
            c + 1
        ));
    }
    let empty = CacheInstance::empty(n_contents, cache_size)?;
    let requests = RequestModel::new(popularity.clone());
    let counts = (0..n_rounds)
        .into_par_iter()
        .fold(
            || vec![0u64; n_requests * n_contents],
            |mut counts, round| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, round));
                let mut cache = empty.clone();
                for n in 0..n_requests {
                    let l = requests.sample(&mut rng);
                    step(scheme, &mut cache, l, &mut rng);
                    let row = &mut counts[n * n_contents..(n + 1) * n_contents];
                    for &c in cache.recency() {
                        row[c] += 1;
                    }
                }
                counts
            },
        )
        .reduce(
            || vec![0u64; n_requests * n_contents],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let scale = n_rounds as f64;
    let values = tracked
        .iter()
        .map(|&c| {
            (0..n_requests)
                .map(|n| counts[n * n_contents + c] as f64 / scale)
                .collect()
        })
        .collect();
    let occupancy = counts
        .chunks(n_contents)
        .map(|row| row.iter().sum::<u64>() as f64 / scale)
        .collect();
    Ok(CcpEstimate {
        n_rounds,
        n_requests,
        tracked: tracked.to_vec(),
        values,
        occupancy,
    })
}
