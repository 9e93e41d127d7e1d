#![allow(dead_code)]

use rand::Rng;
use stf_core::schemes::{RecencyModel, Scheme, TlpVariant};
use stf_core::Popularity;

pub const EXAMPLE_POPULARITY: [f64; 3] = [0.5, 0.29, 0.21];

pub fn example() -> Popularity {
    Popularity::new(EXAMPLE_POPULARITY.to_vec()).unwrap()
}

/// Random strictly positive popularity with entries bounded away from zero.
pub fn random_popularity<R: Rng>(rng: &mut R, n: usize) -> Popularity {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    Popularity::new(w.into_iter().map(|x| x / total).collect()).unwrap()
}

pub fn random_scheme<R: Rng>(rng: &mut R, n_contents: usize, cache_size: usize) -> Scheme {
    let predicted = random_popularity(rng, n_contents);
    match rng.gen_range(0..5) {
        0 => Scheme::Rr {
            phi: rng.gen_range(0.01..=1.0) / cache_size as f64,
        },
        1 => Scheme::Lp {
            alpha: rng.gen_range(0.01..=1.0),
            predicted,
        },
        2 => Scheme::Tlp {
            variant: TlpVariant::A,
            predicted,
        },
        3 => Scheme::Tlp {
            variant: TlpVariant::P,
            predicted,
        },
        _ => Scheme::Lru {
            recency: if rng.gen_bool(0.5) {
                RecencyModel::Exact
            } else {
                RecencyModel::Restricted
            },
        },
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
