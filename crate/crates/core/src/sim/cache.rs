use rand::Rng;

use crate::error::{invalid, Result};
use crate::schemes::{lp_replacement_probability, tlp_replacement_probability, tlp_target, Scheme};
use crate::state_space::StateSpace;

/// A concrete cache: its contents in recency order, most recent first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheInstance {
    capacity: usize,
    present: Vec<bool>,
    slots: Vec<usize>,
}

impl CacheInstance {
    pub fn empty(n_contents: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 || capacity > n_contents {
            return invalid(format!(
                "cache size must lie in 1..={n_contents}, got {capacity}"
            ));
        }
        Ok(Self {
            capacity,
            present: vec![false; n_contents],
            slots: Vec::with_capacity(capacity),
        })
    }

    /// A full cache whose recency order is `order` (most recent first).
    pub fn from_recency(n_contents: usize, order: &[usize]) -> Result<Self> {
        let mut cache = Self::empty(n_contents, order.len())?;
        for &c in order {
            if c >= n_contents || cache.present[c] {
                return invalid(format!("invalid or repeated content index {c}"));
            }
            cache.present[c] = true;
            cache.slots.push(c);
        }
        Ok(cache)
    }

    /// The full cache of state `k`, recency following the sorted contents.
    pub fn from_state(space: &StateSpace, k: usize) -> Result<Self> {
        if k >= space.len() {
            return invalid(format!("state index {k} out of range"));
        }
        Self::from_recency(space.n_contents(), space.state(k))
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.capacity
    }

    pub fn contains(&self, content: usize) -> bool {
        self.present[content]
    }

    /// Cached contents, most recently requested first.
    pub fn recency(&self) -> &[usize] {
        &self.slots
    }

    pub fn contents_sorted(&self) -> Vec<usize> {
        let mut v = self.slots.clone();
        v.sort_unstable();
        v
    }

    /// State index in `space`, once the cache is full.
    pub fn state_index(&self, space: &StateSpace) -> Option<usize> {
        if !self.is_full() {
            return None;
        }
        space.index_of(&self.slots)
    }

    fn touch(&mut self, content: usize) {
        let pos = self
            .slots
            .iter()
            .position(|&c| c == content)
            .expect("touched content is cached");
        self.slots[..=pos].rotate_right(1);
    }

    fn admit(&mut self, content: usize) {
        self.present[content] = true;
        self.slots.insert(0, content);
    }

    fn evict(&mut self, victim: usize) {
        self.present[victim] = false;
        self.slots.retain(|&c| c != victim);
    }
}

/// Serves one request. Returns whether it was a hit.
///
/// A miss on a cache that is not yet full fills an empty slot. Otherwise the
/// scheme decides whether and what to evict.
pub fn step<R: Rng + ?Sized>(
    scheme: &Scheme,
    cache: &mut CacheInstance,
    content: usize,
    rng: &mut R,
) -> bool {
    if cache.contains(content) {
        cache.touch(content);
        return true;
    }
    if !cache.is_full() {
        cache.admit(content);
        return false;
    }
    if let Some(victim) = choose_victim(scheme, cache, content, rng) {
        cache.evict(victim);
        cache.admit(content);
    }
    false
}

pub(crate) fn choose_victim<R: Rng + ?Sized>(
    scheme: &Scheme,
    cache: &CacheInstance,
    content: usize,
    rng: &mut R,
) -> Option<usize> {
    let slots = &cache.slots;
    match scheme {
        Scheme::Rr { phi } => {
            let u: f64 = rng.gen();
            (u < slots.len() as f64 * phi).then(|| slots[((u / phi) as usize).min(slots.len() - 1)])
        }
        Scheme::Lp { alpha, predicted } => {
            let p = predicted.probs();
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for &q in slots.iter().filter(|&&q| p[content] > p[q]) {
                acc += alpha
                    * lp_replacement_probability(predicted, content, q, slots)
                        .expect("eligibility checked");
                if u < acc {
                    return Some(q);
                }
            }
            None
        }
        Scheme::Tlp { variant, predicted } => {
            let target = tlp_target(predicted, slots);
            let phi = tlp_replacement_probability(*variant, predicted, content, target)?;
            (rng.gen::<f64>() < phi).then_some(target)
        }
        Scheme::Lru { .. } => slots.last().copied(),
    }
}
