//! Transition matrices of the replacement schemes.
//!
//! Conditional matrices `Θ_l` are assembled from per-request replacement
//! distributions. Overall matrices `Θ` are assembled independently from each
//! scheme's aggregated closed form, so `Θ = Σ_l υ_l Θ_l` is a real check
//! rather than an identity.

mod recency;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::state_space::{Popularity, StateSpace};

pub use recency::{lru_recency_profile, RecencyModel, RecencyProfile, RECENCY_MAX_CACHE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TlpVariant {
    /// Always replace the least popular cached content.
    A,
    /// Replace with probability `υ̃_l − υ̃_{q†}`.
    P,
}

/// A replacement scheme and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase", deny_unknown_fields)]
pub enum Scheme {
    Rr {
        phi: f64,
    },
    Lp {
        alpha: f64,
        predicted: Popularity,
    },
    Tlp {
        variant: TlpVariant,
        predicted: Popularity,
    },
    Lru {
        #[serde(default)]
        recency: RecencyModel,
    },
}

impl Scheme {
    pub fn lru() -> Self {
        Scheme::Lru {
            recency: RecencyModel::Exact,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Rr { .. } => "RR",
            Scheme::Lp { .. } => "LP",
            Scheme::Tlp {
                variant: TlpVariant::A,
                ..
            } => "TLP-A",
            Scheme::Tlp {
                variant: TlpVariant::P,
                ..
            } => "TLP-P",
            Scheme::Lru { .. } => "LRU",
        }
    }

    /// Predicted popularity, for the schemes that use one.
    pub fn predicted(&self) -> Option<&Popularity> {
        match self {
            Scheme::Lp { predicted, .. } | Scheme::Tlp { predicted, .. } => Some(predicted),
            _ => None,
        }
    }

    pub fn validate(&self, n_contents: usize, cache_size: usize) -> Result<()> {
        let check_predicted = |p: &Popularity| {
            if p.len() != n_contents {
                return invalid(format!(
                    "predicted popularity has length {}, expected {n_contents}",
                    p.len()
                ));
            }
            Ok(())
        };
        match self {
            Scheme::Rr { phi } => {
                let max = 1.0 / cache_size as f64;
                if !(*phi > 0.0 && *phi <= max + 1e-15) {
                    return invalid(format!(
                        "RR phi must lie in (0, 1/L] = (0, {max}], got {phi}"
                    ));
                }
            }
            Scheme::Lp { alpha, predicted } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return invalid(format!("LP alpha must lie in (0, 1], got {alpha}"));
                }
                check_predicted(predicted)?;
            }
            Scheme::Tlp { predicted, .. } => check_predicted(predicted)?,
            Scheme::Lru { .. } => {}
        }
        Ok(())
    }
}

/// `φ_{l,q,k}` for LP: `(υ̃_l − υ̃_q) / Σ_{t∈C↓_{k,l}} (υ̃_l − υ̃_t)`.
pub fn lp_replacement_probability(
    predicted: &Popularity,
    incoming: usize,
    victim: usize,
    cached: &[usize],
) -> Result<f64> {
    let p = predicted.probs();
    if !cached.contains(&victim) || cached.contains(&incoming) {
        return invalid("LP replacement needs a cached victim and an uncached incoming content");
    }
    if p[incoming] <= p[victim] {
        return invalid(format!(
            "content {} is not more popular than content {}",
            incoming + 1,
            victim + 1
        ));
    }
    let denom: f64 = cached
        .iter()
        .filter(|&&t| p[t] < p[incoming])
        .map(|&t| p[incoming] - p[t])
        .sum();
    Ok((p[incoming] - p[victim]) / denom)
}

/// `q†(k)`: least-predicted-popular cached content, ties to the smaller index.
pub fn tlp_target(predicted: &Popularity, cached: &[usize]) -> usize {
    let p = predicted.probs();
    cached
        .iter()
        .copied()
        .min_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)))
        .expect("cache state is non-empty")
}

/// TLP replacement probability for an eligible request, `None` if ineligible.
pub fn tlp_replacement_probability(
    variant: TlpVariant,
    predicted: &Popularity,
    incoming: usize,
    target: usize,
) -> Option<f64> {
    let p = predicted.probs();
    if p[incoming] <= p[target] {
        return None;
    }
    Some(match variant {
        TlpVariant::A => 1.0,
        TlpVariant::P => p[incoming] - p[target],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Overall,
    Conditional { content: usize },
}

/// Column-stochastic state transition matrix; column `k` is the next-state
/// distribution from state `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    matrix: DMatrix<f64>,
    kind: MatrixKind,
}

impl TransitionMatrix {
    pub fn from_matrix(matrix: DMatrix<f64>, kind: MatrixKind) -> Result<Self> {
        if !matrix.is_square() {
            return invalid("transition matrix must be square");
        }
        Ok(Self { matrix, kind })
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn n_states(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.matrix[(m, k)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.sum()).collect()
    }

    pub fn is_column_stochastic(&self, tol: f64) -> bool {
        self.matrix.iter().all(|&x| (-tol..=1.0 + tol).contains(&x))
            && self.column_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }

    /// True when every entry above the diagonal is zero.
    pub fn is_lower_triangular(&self) -> bool {
        let n = self.n_states();
        (0..n).all(|k| (0..k).all(|m| self.matrix[(m, k)] == 0.0))
    }

    /// `Θη`.
    pub fn apply(&self, scp: &[f64]) -> Result<Vec<f64>> {
        if scp.len() != self.n_states() {
            return invalid(format!(
                "vector has length {}, matrix has {} states",
                scp.len(),
                self.n_states()
            ));
        }
        let v = &self.matrix * DVector::from_column_slice(scp);
        Ok(v.iter().copied().collect())
    }

    /// Nonzero entries as `(m, k, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for k in 0..self.n_states() {
            for m in 0..self.n_states() {
                let v = self.matrix[(m, k)];
                if v != 0.0 {
                    out.push((m, k, v));
                }
            }
        }
        out
    }
}

/// A scheme bound to a state space and popularity, with LRU recency
/// precomputed.
#[derive(Debug, Clone)]
pub struct SchemeModel<'a> {
    scheme: &'a Scheme,
    space: &'a StateSpace,
    popularity: &'a Popularity,
    recency: Option<RecencyProfile>,
}

impl<'a> SchemeModel<'a> {
    pub fn new(
        scheme: &'a Scheme,
        space: &'a StateSpace,
        popularity: &'a Popularity,
    ) -> Result<Self> {
        scheme.validate(space.n_contents(), space.cache_size())?;
        if popularity.len() != space.n_contents() {
            return invalid(format!(
                "popularity has length {}, expected {}",
                popularity.len(),
                space.n_contents()
            ));
        }
        let recency = match scheme {
            Scheme::Lru { recency } => Some(lru_recency_profile(space, popularity, *recency)?),
            _ => None,
        };
        Ok(Self {
            scheme,
            space,
            popularity,
            recency,
        })
    }

    pub fn scheme(&self) -> &Scheme {
        self.scheme
    }

    pub fn space(&self) -> &StateSpace {
        self.space
    }

    pub fn popularity(&self) -> &Popularity {
        self.popularity
    }

    pub fn recency(&self) -> Option<&RecencyProfile> {
        self.recency.as_ref()
    }

    /// Replacement distribution `(victim, φ)` when uncached `l` is requested in state `k`.
    pub fn replacement_distribution(&self, k: usize, l: usize) -> Vec<(usize, f64)> {
        let cached = self.space.state(k);
        match self.scheme {
            Scheme::Rr { phi } => cached.iter().map(|&q| (q, *phi)).collect(),
            Scheme::Lp { alpha, predicted } => {
                let p = predicted.probs();
                cached
                    .iter()
                    .filter(|&&q| p[l] > p[q])
                    .map(|&q| {
                        let phi = lp_replacement_probability(predicted, l, q, cached)
                            .expect("eligibility checked");
                        (q, alpha * phi)
                    })
                    .collect()
            }
            Scheme::Tlp { variant, predicted } => {
                let target = tlp_target(predicted, cached);
                tlp_replacement_probability(*variant, predicted, l, target)
                    .map(|phi| vec![(target, phi)])
                    .unwrap_or_default()
            }
            Scheme::Lru { .. } => {
                let rec = self.recency.as_ref().expect("LRU model carries recency");
                cached
                    .iter()
                    .zip(rec.row(k))
                    .map(|(&q, &r)| (q, r))
                    .collect()
            }
        }
    }

    /// `Θ_l`.
    pub fn conditional(&self, l: usize) -> Result<TransitionMatrix> {
        if l >= self.space.n_contents() {
            return invalid(format!(
                "content index {l} out of range (N_c = {})",
                self.space.n_contents()
            ));
        }
        let n = self.space.len();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            if self.space.contains(k, l) {
                m[(k, k)] = 1.0;
                continue;
            }
            let mut stay = 1.0;
            for (q, phi) in self.replacement_distribution(k, l) {
                m[(self.space.replace(k, q, l), k)] += phi;
                stay -= phi;
            }
            m[(k, k)] += stay;
        }
        TransitionMatrix::from_matrix(m, MatrixKind::Conditional { content: l })
    }

    /// All `Θ_l`, built in parallel.
    pub fn conditionals(&self) -> Result<Vec<TransitionMatrix>> {
        (0..self.space.n_contents())
            .into_par_iter()
            .map(|l| self.conditional(l))
            .collect()
    }

    /// `Θ` from the scheme's aggregated closed form.
    pub fn overall(&self) -> Result<TransitionMatrix> {
        let space = self.space;
        let v = self.popularity.probs();
        let n = space.len();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            let cached = space.state(k);
            let hit: f64 = cached.iter().map(|&q| v[q]).sum();
            let uncached = || (0..space.n_contents()).filter(|&l| !space.contains(k, l));
            let diag = match self.scheme {
                Scheme::Rr { phi } => {
                    1.0 - space.cache_size() as f64 * phi * uncached().map(|l| v[l]).sum::<f64>()
                }
                Scheme::Lp { alpha, predicted } => {
                    let p = predicted.probs();
                    let floor = cached.iter().map(|&q| p[q]).fold(f64::INFINITY, f64::min);
                    let below: f64 = uncached().filter(|&l| p[l] <= floor).map(|l| v[l]).sum();
                    let above: f64 = uncached().filter(|&l| p[l] > floor).map(|l| v[l]).sum();
                    hit + below + above * (1.0 - alpha)
                }
                Scheme::Tlp { variant, predicted } => {
                    let target = tlp_target(predicted, cached);
                    let mut d = hit;
                    for l in uncached() {
                        d += v[l]
                            * match tlp_replacement_probability(*variant, predicted, l, target) {
                                Some(phi) => 1.0 - phi,
                                None => 1.0,
                            };
                    }
                    d
                }
                Scheme::Lru { .. } => hit,
            };
            m[(k, k)] = diag;
            for dest in space.neighbors(k)? {
                let incoming = space.swapped_content(dest, k)?;
                let victim = space.swapped_content(k, dest)?;
                let value = match self.scheme {
                    Scheme::Rr { phi } => phi * v[incoming],
                    Scheme::Lp { alpha, predicted } => {
                        if predicted.get(incoming) > predicted.get(victim) {
                            alpha
                                * v[incoming]
                                * lp_replacement_probability(predicted, incoming, victim, cached)?
                        } else {
                            0.0
                        }
                    }
                    Scheme::Tlp { variant, predicted } => {
                        if victim == tlp_target(predicted, cached) {
                            tlp_replacement_probability(*variant, predicted, incoming, victim)
                                .map(|phi| v[incoming] * phi)
                                .unwrap_or(0.0)
                        } else {
                            0.0
                        }
                    }
                    Scheme::Lru { .. } => {
                        let rec = self.recency.as_ref().expect("LRU model carries recency");
                        v[incoming] * rec.get(k, victim)
                    }
                };
                m[(dest, k)] = value;
            }
        }
        TransitionMatrix::from_matrix(m, MatrixKind::Overall)
    }
}

/// `Θ_l` for `scheme` on `space`.
pub fn conditional_matrix(
    scheme: &Scheme,
    space: &StateSpace,
    popularity: &Popularity,
    l: usize,
) -> Result<TransitionMatrix> {
    SchemeModel::new(scheme, space, popularity)?.conditional(l)
}

/// `Θ` for `scheme` on `space`.
pub fn overall_matrix(
    scheme: &Scheme,
    space: &StateSpace,
    popularity: &Popularity,
) -> Result<TransitionMatrix> {
    SchemeModel::new(scheme, space, popularity)?.overall()
}
