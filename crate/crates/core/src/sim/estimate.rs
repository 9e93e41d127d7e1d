use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{choose_victim, step, CacheInstance};
use super::{cumulative, derive_seed, invert_cdf, RequestModel};
use crate::error::{invalid, Result};
use crate::schemes::{MatrixKind, Scheme, SchemeModel, TransitionMatrix};
use crate::state_space::{Popularity, SimplexPoint, StateSpace};

/// One served request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based request index `n`.
    pub request_index: u64,
    pub content: usize,
    pub hit: bool,
    /// State after the `n`-th replacement point; absent while warming up or
    /// when no state space was supplied.
    pub state: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TraceRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn hit_ratio(&self) -> f64 {
        self.records.iter().filter(|r| r.hit).count() as f64 / self.records.len() as f64
    }

    /// Fraction of recorded states equal to each state index.
    pub fn state_occupancy(&self, n_states: usize) -> Vec<f64> {
        let mut counts = vec![0usize; n_states];
        let mut total = 0usize;
        for s in self.records.iter().filter_map(|r| r.state) {
            counts[s] += 1;
            total += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / total.max(1) as f64)
            .collect()
    }
}

/// Runs `n_requests` IRM requests through `initial`.
pub fn run_trace(
    scheme: &Scheme,
    popularity: &Popularity,
    space: Option<&StateSpace>,
    initial: CacheInstance,
    n_requests: u64,
    seed: u64,
) -> Result<Trajectory> {
    if n_requests == 0 {
        return invalid("trace needs at least one request");
    }
    scheme.validate(popularity.len(), initial.capacity())?;
    if let Some(s) = space {
        if s.n_contents() != popularity.len() || s.cache_size() != initial.capacity() {
            return invalid("state space does not match the cache");
        }
    }
    let requests = RequestModel::new(popularity.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = initial;
    let records = (1..=n_requests)
        .map(|n| {
            let content = requests.sample(&mut rng);
            let hit = step(scheme, &mut cache, content, &mut rng);
            TraceRecord {
                request_index: n,
                content,
                hit,
                state: space.and_then(|s| cache.state_index(s)),
            }
        })
        .collect();
    Ok(Trajectory { records })
}

/// How the hidden LRU recency order of a state is drawn. It is redrawn for
/// every request event; other schemes only need the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Least-recent content drawn from the model's recency profile.
    #[default]
    Categorical,
    /// Recency order read off a backward IRM request history conditioned on
    /// producing the state's content set.
    Trace,
}

/// Least recently used content of a cache in state `k`.
fn least_recent<R: Rng + ?Sized>(
    model: &SchemeModel<'_>,
    requests: &RequestModel,
    k: usize,
    mode: SamplingMode,
    rng: &mut R,
    seen: &mut Vec<usize>,
) -> usize {
    let space = model.space();
    let cached = space.state(k);
    match mode {
        SamplingMode::Categorical => {
            let row = model.recency().expect("LRU model carries recency").row(k);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &r) in row.iter().enumerate() {
                acc += r;
                if u < acc {
                    return cached[i];
                }
            }
            cached[cached.len() - 1]
        }
        SamplingMode::Trace => loop {
            seen.clear();
            loop {
                let c = requests.sample(rng);
                if !space.contains(k, c) {
                    break;
                }
                if !seen.contains(&c) {
                    seen.push(c);
                    if seen.len() == cached.len() {
                        return c;
                    }
                }
            }
        },
    }
}

/// Tallies of one-step outcomes from state `k`, indexed by
/// `(evicted position in C_k or stay, requested content)`.
struct OutcomeTally<'m, 'a> {
    model: &'m SchemeModel<'a>,
    requests: &'m RequestModel,
    mode: SamplingMode,
    k: usize,
    cache: CacheInstance,
    seen: Vec<usize>,
    cells: Vec<u64>,
}

impl<'m, 'a> OutcomeTally<'m, 'a> {
    fn new(
        model: &'m SchemeModel<'a>,
        requests: &'m RequestModel,
        mode: SamplingMode,
        k: usize,
    ) -> Result<Self> {
        let space = model.space();
        Ok(Self {
            model,
            requests,
            mode,
            k,
            cache: CacheInstance::from_state(space, k)?,
            seen: Vec::with_capacity(space.cache_size()),
            cells: vec![0; (space.cache_size() + 1) * space.n_contents()],
        })
    }

    fn record<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let space = self.model.space();
        let l = self.requests.sample(rng);
        let victim = if self.cache.contains(l) {
            None
        } else if let Scheme::Lru { .. } = self.model.scheme() {
            Some(least_recent(
                self.model,
                self.requests,
                self.k,
                self.mode,
                rng,
                &mut self.seen,
            ))
        } else {
            choose_victim(self.model.scheme(), &self.cache, l, rng)
        };
        let slot = victim.map_or(0, |v| {
            1 + space
                .state(self.k)
                .binary_search(&v)
                .expect("cached victim")
        });
        self.cells[slot * space.n_contents() + l] += 1;
    }

    /// Adds the tallies to per-destination-state counts.
    fn flush(&self, dest: &mut [u64]) {
        let space = self.model.space();
        let n_contents = space.n_contents();
        for (i, &count) in self.cells.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let (slot, l) = (i / n_contents, i % n_contents);
            let m = if slot == 0 {
                self.k
            } else {
                space.replace(self.k, space.state(self.k)[slot - 1], l)
            };
            dest[m] += count;
        }
    }
}

/// Single-step transition frequencies out of every state.
#[derive(Debug, Clone)]
pub struct EmpiricalTheta {
    pub estimate: TransitionMatrix,
    pub samples_per_state: u64,
}

impl EmpiricalTheta {
    /// Binomial standard error of an entry whose true value is `p`.
    pub fn standard_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.samples_per_state as f64).sqrt()
    }
}

/// Estimates `Θ` column by column from `samples_per_state` single-step
/// transitions out of each state. States are processed in parallel, each
/// with its own derived seed.
pub fn empirical_theta(
    model: &SchemeModel<'_>,
    samples_per_state: u64,
    mode: SamplingMode,
    seed: u64,
) -> Result<EmpiricalTheta> {
    if samples_per_state == 0 {
        return invalid("samples_per_state must be positive");
    }
    let space = model.space();
    let n = space.len();
    let requests = RequestModel::new(model.popularity().clone());
    let columns: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            let mut tally = OutcomeTally::new(model, &requests, mode, k)?;
            for _ in 0..samples_per_state {
                tally.record(&mut rng);
            }
            let mut dest = vec![0u64; n];
            tally.flush(&mut dest);
            Ok(dest)
        })
        .collect::<Result<_>>()?;
    let scale = samples_per_state as f64;
    let m = DMatrix::from_fn(n, n, |r, c| columns[c][r] as f64 / scale);
    Ok(EmpiricalTheta {
        estimate: TransitionMatrix::from_matrix(m, MatrixKind::Overall)?,
        samples_per_state,
    })
}

/// Estimates `u(η)`: `m_realizations` states drawn from `η` by systematic
/// sampling, each served `r_requests` independent one-step requests (LRU
/// recency redrawn per request). The
/// estimate is the mean change `e_next − e_start` over all request events.
pub fn empirical_stf(
    model: &SchemeModel<'_>,
    eta: &SimplexPoint,
    m_realizations: u64,
    r_requests: u64,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<f64>> {
    let space = model.space();
    let n = space.len();
    if eta.len() != n {
        return invalid(format!("SCP has length {}, expected {n}", eta.len()));
    }
    if m_realizations == 0 || r_requests == 0 {
        return invalid("M and R must be positive");
    }
    let requests = RequestModel::new(model.popularity().clone());
    let cdf = cumulative(eta.as_slice());
    let offset: f64 = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX)).gen();
    let (dest, start) = (0..m_realizations)
        .into_par_iter()
        .try_fold(
            || (vec![0u64; n], vec![0u64; n]),
            |(mut dest, mut start), i| {
                let k = invert_cdf(&cdf, (i as f64 + offset) / m_realizations as f64);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i));
                let mut tally = OutcomeTally::new(model, &requests, mode, k)?;
                for _ in 0..r_requests {
                    tally.record(&mut rng);
                }
                tally.flush(&mut dest);
                start[k] += 1;
                Ok((dest, start))
            },
        )
        .try_reduce(
            || (vec![0u64; n], vec![0u64; n]),
            |(mut a, mut b), (c, d)| {
                for (x, y) in a.iter_mut().zip(c) {
                    *x += y;
                }
                for (x, y) in b.iter_mut().zip(d) {
                    *x += y;
                }
                Ok((a, b))
            },
        )?;
    let events = (m_realizations * r_requests) as f64;
    Ok(dest
        .iter()
        .zip(&start)
        .map(|(&d, &s)| d as f64 / events - s as f64 / m_realizations as f64)
        .collect())
}
