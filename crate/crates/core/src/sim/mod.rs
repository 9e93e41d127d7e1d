//! Monte-Carlo engine under the independent reference model: request
//! generation, trace-driven caches, empirical transition and field
//! estimates, and instantaneous caching-probability experiments.

mod cache;
mod ccp;
mod estimate;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::state_space::Popularity;

pub use cache::{step, CacheInstance};
pub use ccp::{ccp_trajectory, CcpEstimate};
pub use estimate::{
    empirical_stf, empirical_theta, run_trace, EmpiricalTheta, SamplingMode, TraceRecord,
    Trajectory,
};

/// `υ_l ∝ l^(−s)` over contents already sorted by decreasing popularity.
pub fn zipf_popularity(n_contents: usize, exponent: f64) -> Result<Popularity> {
    if n_contents == 0 {
        return invalid("Zipf popularity needs at least one content");
    }
    if !(exponent >= 0.0 && exponent.is_finite()) {
        return invalid(format!(
            "Zipf exponent must be a finite value >= 0, got {exponent}"
        ));
    }
    let w: Vec<f64> = (1..=n_contents)
        .map(|l| (l as f64).powf(-exponent))
        .collect();
    let total: f64 = w.iter().sum();
    Popularity::new(w.into_iter().map(|x| x / total).collect())
}

/// IRM request generator by cumulative-sum inversion.
#[derive(Debug, Clone)]
pub struct RequestModel {
    popularity: Popularity,
    cdf: Vec<f64>,
}

impl RequestModel {
    pub fn new(popularity: Popularity) -> Self {
        let cdf = cumulative(popularity.probs());
        Self { popularity, cdf }
    }

    pub fn popularity(&self) -> &Popularity {
        &self.popularity
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        invert_cdf(&self.cdf, rng.gen::<f64>())
    }
}

pub(crate) fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// Smallest index whose cumulative mass exceeds `u`, scaled by the total so
/// round-off in the last entry cannot run past the end.
pub(crate) fn invert_cdf(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let i = cdf.partition_point(|&c| c <= u * total);
    i.min(cdf.len() - 1)
}

/// SplitMix64 finaliser; derives independent stream seeds from one seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Popularity specification in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PopularitySpec {
    Zipf { n_contents: usize, exponent: f64 },
    Explicit { probs: Vec<f64> },
}

impl PopularitySpec {
    pub fn build(&self) -> Result<Popularity> {
        match self {
            PopularitySpec::Zipf {
                n_contents,
                exponent,
            } => zipf_popularity(*n_contents, *exponent),
            PopularitySpec::Explicit { probs } => Popularity::new(probs.clone()),
        }
    }
}
