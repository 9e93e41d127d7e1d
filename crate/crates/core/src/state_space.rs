//! Cache states, neighbour structure, and the mapping between state-level
//! (SCP) and content-level (CCP) probability descriptions.
//!
//! Contents and states are indexed from zero in the API. External formats
//! (JSON listings, CSV headers) use 1-based content labels.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default cap on the number of states the exact regime will enumerate.
pub const DEFAULT_MAX_STATES: usize = 100_000;

/// Tolerance on probability vectors summing to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// `C(n, k)` as `u128`, or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc holds C(n - k + i - 1, i - 1); the product stays divisible by i.
        acc = acc.checked_mul((n - k + i) as u128)? / i as u128;
    }
    Some(acc)
}

/// Content request probabilities `υ`. Strictly positive, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Popularity(Vec<f64>);

impl Popularity {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("popularity vector is empty");
        }
        if let Some((l, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p <= 0.0 || **p > 1.0)
        {
            return invalid(format!(
                "popularity of content {} is {p}; entries must lie in (0, 1]",
                l + 1
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("popularity sums to {sum}, expected 1"));
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("popularity vector is empty");
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, content: usize) -> f64 {
        self.0[content]
    }

    /// Contents sorted by decreasing probability; ties keep the smaller index first.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx
    }
}

impl<'de> Deserialize<'de> for Popularity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Popularity::new(v).map_err(serde::de::Error::custom)
    }
}

/// A state caching probability vector `η` in the simplex domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(scp: Vec<f64>) -> Result<Self> {
        if scp.is_empty() {
            return invalid("simplex point is empty");
        }
        if let Some((k, x)) = scp
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite() || **x < 0.0 || **x > 1.0)
        {
            return invalid(format!("SCP entry {k} is {x}; entries must lie in [0, 1]"));
        }
        let sum: f64 = scp.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("SCP sums to {sum}, expected 1"));
        }
        Ok(Self(scp))
    }

    /// Clamps round-off negatives and renormalises. Only for vectors that are
    /// simplex points up to floating-point error (iterates, sampled points).
    pub(crate) fn from_roundoff(mut scp: Vec<f64>) -> Self {
        for x in scp.iter_mut() {
            *x = x.clamp(0.0, 1.0);
        }
        let sum: f64 = scp.iter().sum();
        for x in scp.iter_mut() {
            *x /= sum;
        }
        Self(scp)
    }

    pub fn vertex(n_states: usize, k: usize) -> Self {
        let mut v = vec![0.0; n_states];
        v[k] = 1.0;
        Self(v)
    }

    pub fn uniform(n_states: usize) -> Self {
        Self(vec![1.0 / n_states as f64; n_states])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// The cache state matrix `C_s`: column `k` is the 0/1 indicator of state `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheStateMatrix {
    n_contents: usize,
    columns: Vec<Vec<u8>>,
}

impl CacheStateMatrix {
    pub fn n_contents(&self) -> usize {
        self.n_contents
    }

    pub fn n_states(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> &[u8] {
        &self.columns[k]
    }

    pub fn get(&self, content: usize, state: usize) -> u8 {
        self.columns[state][content]
    }

    pub fn column_sums(&self) -> Vec<usize> {
        self.columns
            .iter()
            .map(|c| c.iter().map(|&x| x as usize).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.n_contents)
            .map(|l| self.columns.iter().map(|c| c[l] as usize).sum())
            .collect()
    }

    /// `λ = C_s η`.
    pub fn apply(&self, scp: &[f64]) -> Result<Vec<f64>> {
        if scp.len() != self.columns.len() {
            return invalid(format!(
                "SCP has length {}, state matrix has {} columns",
                scp.len(),
                self.columns.len()
            ));
        }
        let mut ccp = vec![0.0; self.n_contents];
        for (col, &eta) in self.columns.iter().zip(scp) {
            for (l, &bit) in col.iter().enumerate() {
                if bit == 1 {
                    ccp[l] += eta;
                }
            }
        }
        Ok(ccp)
    }
}

/// All `C(N_c, L)` cache states in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    n_contents: usize,
    cache_size: usize,
    /// Sorted content sets, in state order.
    states: Vec<Vec<usize>>,
    /// Lexicographic rank of a content set -> state index in this order.
    position_of_rank: Vec<usize>,
}

impl StateSpace {
    /// Enumerates states in canonical (lexicographic) order, refusing more
    /// than [`DEFAULT_MAX_STATES`] states.
    pub fn new(n_contents: usize, cache_size: usize) -> Result<Self> {
        Self::with_cap(n_contents, cache_size, DEFAULT_MAX_STATES)
    }

    pub fn with_cap(n_contents: usize, cache_size: usize, max_states: usize) -> Result<Self> {
        if cache_size == 0 || cache_size >= n_contents {
            return invalid(format!(
                "cache size must satisfy 1 <= L < N_c, got L = {cache_size}, N_c = {n_contents}"
            ));
        }
        let n_states = binomial(n_contents, cache_size).unwrap_or(u128::MAX);
        if n_states > max_states as u128 {
            return Err(Error::StateSpaceTooLarge {
                n_states,
                cap: max_states,
            });
        }
        let n_states = n_states as usize;
        let mut states = Vec::with_capacity(n_states);
        let mut cur: Vec<usize> = (0..cache_size).collect();
        loop {
            states.push(cur.clone());
            // Advance to the next combination in lexicographic order.
            let mut i = cache_size;
            while i > 0 && cur[i - 1] == n_contents - cache_size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            cur[i - 1] += 1;
            for j in i..cache_size {
                cur[j] = cur[j - 1] + 1;
            }
        }
        debug_assert_eq!(states.len(), n_states);
        Ok(Self {
            n_contents,
            cache_size,
            position_of_rank: (0..n_states).collect(),
            states,
        })
    }

    pub fn n_contents(&self) -> usize {
        self.n_contents
    }

    pub fn cache_size(&self) -> usize {
        self.cache_size
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Sorted contents of state `k`.
    pub fn state(&self, k: usize) -> &[usize] {
        &self.states[k]
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn contains(&self, k: usize, content: usize) -> bool {
        self.states[k].binary_search(&content).is_ok()
    }

    fn check_state(&self, k: usize) -> Result<()> {
        if k >= self.states.len() {
            return invalid(format!(
                "state index {k} out of range (N_s = {})",
                self.states.len()
            ));
        }
        Ok(())
    }

    fn check_content(&self, l: usize) -> Result<()> {
        if l >= self.n_contents {
            return invalid(format!(
                "content index {l} out of range (N_c = {})",
                self.n_contents
            ));
        }
        Ok(())
    }

    /// Lexicographic rank of a sorted L-subset.
    fn rank(&self, sorted: &[usize]) -> usize {
        let n = self.n_contents;
        let l = self.cache_size;
        let mut rank: u128 = 0;
        let mut prev: isize = -1;
        for (i, &c) in sorted.iter().enumerate() {
            let r = l - i;
            // Subsets whose i-th element lies strictly between prev and c.
            let hi = binomial((n as isize - prev - 1) as usize, r).unwrap_or(0);
            let lo = binomial(n - c, r).unwrap_or(0);
            rank += hi - lo;
            prev = c as isize;
        }
        rank as usize
    }

    /// State index of a content set, if it is a valid L-subset.
    pub fn index_of(&self, contents: &[usize]) -> Option<usize> {
        let mut sorted = contents.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.cache_size || sorted.iter().any(|&c| c >= self.n_contents) {
            return None;
        }
        Some(self.position_of_rank[self.rank(&sorted)])
    }

    /// State reached from `k` by replacing cached `victim` with uncached `incoming`.
    /// Caller guarantees `victim ∈ C_k` and `incoming ∉ C_k`.
    pub fn replace(&self, k: usize, victim: usize, incoming: usize) -> usize {
        let mut next: Vec<usize> = self.states[k]
            .iter()
            .copied()
            .filter(|&c| c != victim)
            .collect();
        let pos = next.partition_point(|&c| c < incoming);
        next.insert(pos, incoming);
        self.position_of_rank[self.rank(&next)]
    }

    /// `H_k`: states differing from `k` in exactly one cached content, sorted.
    pub fn neighbors(&self, k: usize) -> Result<Vec<usize>> {
        self.check_state(k)?;
        let mut out = Vec::with_capacity(self.cache_size * (self.n_contents - self.cache_size));
        for &q in &self.states[k] {
            for l in (0..self.n_contents).filter(|&l| !self.contains(k, l)) {
                out.push(self.replace(k, q, l));
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// `H_{k,l}`: neighbours of `k` that cache `l`. Requires `l ∉ C_k`.
    pub fn content_neighbors(&self, k: usize, l: usize) -> Result<Vec<usize>> {
        self.check_state(k)?;
        self.check_content(l)?;
        if self.contains(k, l) {
            return invalid(format!("content {} is already cached in state {k}", l + 1));
        }
        let mut out: Vec<usize> = self.states[k]
            .iter()
            .map(|&q| self.replace(k, q, l))
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    /// `e(k, m)`: the unique content cached by `k` but not by neighbour `m`.
    pub fn swapped_content(&self, k: usize, m: usize) -> Result<usize> {
        self.check_state(k)?;
        self.check_state(m)?;
        let cm = &self.states[m];
        let diff: Vec<usize> = self.states[k]
            .iter()
            .copied()
            .filter(|c| cm.binary_search(c).is_err())
            .collect();
        match diff.as_slice() {
            [e] => Ok(*e),
            _ => invalid(format!("states {k} and {m} are not neighbours")),
        }
    }

    /// Indicator vector `s_k` of length `N_c`.
    pub fn state_vector(&self, k: usize) -> Vec<u8> {
        let mut v = vec![0u8; self.n_contents];
        for &c in &self.states[k] {
            v[c] = 1;
        }
        v
    }

    pub fn state_matrix(&self) -> CacheStateMatrix {
        CacheStateMatrix {
            n_contents: self.n_contents,
            columns: (0..self.len()).map(|k| self.state_vector(k)).collect(),
        }
    }

    /// `λ = C_s η`.
    pub fn scp_to_ccp(&self, scp: &[f64]) -> Result<Vec<f64>> {
        if scp.len() != self.len() {
            return invalid(format!(
                "SCP has length {}, state space has {} states",
                scp.len(),
                self.len()
            ));
        }
        let mut ccp = vec![0.0; self.n_contents];
        for (set, &eta) in self.states.iter().zip(scp) {
            for &c in set {
                ccp[c] += eta;
            }
        }
        Ok(ccp)
    }

    /// Permutation (new position -> current index) ordering states by
    /// non-decreasing predicted mass `Σ_{t∈C_k} υ̃_t`; ties keep lexicographic order.
    pub fn sort_states_by_predicted_mass(&self, predicted: &Popularity) -> Result<Vec<usize>> {
        if predicted.len() != self.n_contents {
            return invalid(format!(
                "predicted popularity has length {}, expected {}",
                predicted.len(),
                self.n_contents
            ));
        }
        let mass: Vec<f64> = self
            .states
            .iter()
            .map(|s| s.iter().map(|&c| predicted.get(c)).sum())
            .collect();
        let mut perm: Vec<usize> = (0..self.len()).collect();
        perm.sort_by(|&a, &b| {
            mass[a]
                .total_cmp(&mass[b])
                .then_with(|| self.states[a].cmp(&self.states[b]))
        });
        Ok(perm)
    }

    /// The same states re-indexed so that new state `i` is current state `perm[i]`.
    pub fn reordered(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        if perm.len() != n || perm.iter().collect::<HashSet<_>>().len() != n {
            return invalid("state order is not a permutation of the state indices");
        }
        if perm.iter().any(|&p| p >= n) {
            return invalid("state order references an out-of-range state");
        }
        let states: Vec<Vec<usize>> = perm.iter().map(|&p| self.states[p].clone()).collect();
        let mut position_of_rank = vec![0; n];
        let mut out = Self {
            n_contents: self.n_contents,
            cache_size: self.cache_size,
            states,
            position_of_rank: Vec::new(),
        };
        for (i, s) in out.states.iter().enumerate() {
            position_of_rank[out.rank(s)] = i;
        }
        out.position_of_rank = position_of_rank;
        Ok(out)
    }

    /// State space ordered for LP/TLP analysis.
    pub fn sorted_by_predicted_mass(&self, predicted: &Popularity) -> Result<Self> {
        let perm = self.sort_states_by_predicted_mass(predicted)?;
        self.reordered(&perm)
    }

    pub fn is_canonical_order(&self) -> bool {
        self.position_of_rank
            .iter()
            .enumerate()
            .all(|(i, &p)| i == p)
    }
}

/// `γ = υᵀλ`.
pub fn hit_probability(popularity: &[f64], ccp: &[f64]) -> Result<f64> {
    if popularity.len() != ccp.len() {
        return invalid(format!(
            "popularity has length {}, CCP has length {}",
            popularity.len(),
            ccp.len()
        ));
    }
    Ok(popularity.iter().zip(ccp).map(|(p, l)| p * l).sum())
}
