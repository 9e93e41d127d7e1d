//! LRU recency profiles: for each state `k`, the probability that each cached
//! content is the least recently used one.
//!
//! The default [`RecencyModel::Exact`] is the conditional recency order of a
//! real LRU cache under IRM. Looking backwards in time the cached set is the
//! first `L` distinct contents seen, so an ordering `σ` (most recent first)
//! of `C_k` has weight `Π_i υ_σ(i) / (1 − Σ_{j<i} υ_σ(j))`.
//! [`RecencyModel::Restricted`] replaces the denominator by the mass of
//! `C_k` not yet placed, i.e. it ignores that the set is conditioned on being
//! the cache contents.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::state_space::{Popularity, StateSpace};

/// Largest cache size for which recency profiles are enumerated exactly.
pub const RECENCY_MAX_CACHE_SIZE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecencyModel {
    #[default]
    Exact,
    Restricted,
}

/// `ρ_{q|k}` for every state `k` and cached content `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecencyProfile {
    model: RecencyModel,
    /// `rows[k][i]` is the probability that `space.state(k)[i]` is least recent.
    rows: Vec<Vec<f64>>,
    states: Vec<Vec<usize>>,
}

impl RecencyProfile {
    pub fn model(&self) -> RecencyModel {
        self.model
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    /// Probabilities aligned with the sorted contents of state `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    /// `ρ_{q|k}`; zero when `q ∉ C_k`.
    pub fn get(&self, k: usize, q: usize) -> f64 {
        match self.states[k].binary_search(&q) {
            Ok(i) => self.rows[k][i],
            Err(_) => 0.0,
        }
    }
}

/// Subset DP over one cached set. `prefix_weight[mask]` sums, over orderings
/// of `mask` as the most recent contents, the product of per-position terms.
fn lru_weights(probs: &[f64], cached: &[usize], model: RecencyModel) -> Vec<f64> {
    let l = cached.len();
    let p: Vec<f64> = cached.iter().map(|&c| probs[c]).collect();
    let total: f64 = p.iter().sum();
    let full = (1usize << l) - 1;
    let mut mass = vec![0.0; 1 << l];
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        mass[mask] = mass[mask & (mask - 1)] + p[low];
    }
    let denom = |mask: usize| match model {
        RecencyModel::Exact => 1.0 - mass[mask],
        RecencyModel::Restricted => total - mass[mask],
    };
    let mut prefix_weight = vec![0.0; 1 << l];
    prefix_weight[0] = 1.0;
    for mask in 0..full {
        let w = prefix_weight[mask];
        if w == 0.0 {
            continue;
        }
        let d = denom(mask);
        for (i, &pi) in p.iter().enumerate() {
            if mask & (1 << i) == 0 {
                prefix_weight[mask | (1 << i)] += w * pi / d;
            }
        }
    }
    let mut out: Vec<f64> = (0..l)
        .map(|i| {
            let rest = full & !(1 << i);
            prefix_weight[rest] * p[i] / denom(rest)
        })
        .collect();
    let sum: f64 = out.iter().sum();
    for x in out.iter_mut() {
        *x /= sum;
    }
    out
}

/// Recency profile for every state of `space` under popularity `popularity`.
pub fn lru_recency_profile(
    space: &StateSpace,
    popularity: &Popularity,
    model: RecencyModel,
) -> Result<RecencyProfile> {
    if popularity.len() != space.n_contents() {
        return invalid(format!(
            "popularity has length {}, expected {}",
            popularity.len(),
            space.n_contents()
        ));
    }
    if space.cache_size() > RECENCY_MAX_CACHE_SIZE {
        return Err(Error::RecencyTooLarge {
            cache_size: space.cache_size(),
            limit: RECENCY_MAX_CACHE_SIZE,
        });
    }
    let rows = space
        .states()
        .iter()
        .map(|s| lru_weights(popularity.probs(), s, model))
        .collect();
    Ok(RecencyProfile {
        model,
        rows,
        states: space.states().to_vec(),
    })
}
