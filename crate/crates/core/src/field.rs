//! State transition fields over the simplex and the steady-state metrics
//! derived from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::schemes::{RecencyProfile, SchemeModel, TransitionMatrix};
use crate::state_space::{SimplexPoint, StateSpace};
use crate::steady;

/// Sample points closer than this to the steady state are skipped by the
/// projection metric.
const COINCIDENT_POINT: f64 = 1e-12;

/// `u(η) = Θη − η`.
pub fn stf(theta: &TransitionMatrix, scp: &[f64]) -> Result<Vec<f64>> {
    let mut next = theta.apply(scp)?;
    for (x, e) in next.iter_mut().zip(scp) {
        *x -= e;
    }
    Ok(next)
}

/// `u_l(η) = Θ_l η − η`.
pub fn content_stf(theta_l: &TransitionMatrix, scp: &[f64]) -> Result<Vec<f64>> {
    stf(theta_l, scp)
}

fn check_len(space: &StateSpace, scp: &[f64]) -> Result<()> {
    if scp.len() != space.len() {
        return invalid(format!(
            "SCP has length {}, state space has {} states",
            scp.len(),
            space.len()
        ));
    }
    Ok(())
}

/// RR content-specific field evaluated elementwise without the matrix:
/// inflow `φ Σ_{k: m∈H_{k,l}} η_k` for states caching `l`, outflow `−Lφη_m` otherwise.
pub fn rr_content_stf_closed_form(
    space: &StateSpace,
    phi: f64,
    l: usize,
    scp: &[f64],
) -> Result<Vec<f64>> {
    check_len(space, scp)?;
    let lf = space.cache_size() as f64;
    let mut u = vec![0.0; space.len()];
    for k in 0..space.len() {
        if space.contains(k, l) {
            continue;
        }
        u[k] -= lf * phi * scp[k];
        for m in space.content_neighbors(k, l)? {
            u[m] += phi * scp[k];
        }
    }
    Ok(u)
}

/// LRU content-specific field: inflow `Σ_{k: m∈H_{k,l}} ρ_{e(k,m)|k} η_k`, outflow `−η_m`.
pub fn lru_content_stf_closed_form(
    space: &StateSpace,
    recency: &RecencyProfile,
    l: usize,
    scp: &[f64],
) -> Result<Vec<f64>> {
    check_len(space, scp)?;
    let mut u = vec![0.0; space.len()];
    for k in 0..space.len() {
        if space.contains(k, l) {
            continue;
        }
        u[k] -= scp[k];
        for m in space.content_neighbors(k, l)? {
            let victim = space.swapped_content(k, m)?;
            u[m] += recency.get(k, victim) * scp[k];
        }
    }
    Ok(u)
}

/// `count` points drawn uniformly from the simplex (flat Dirichlet).
pub fn sample_domain(n_states: usize, count: usize, seed: u64) -> Result<Vec<SimplexPoint>> {
    if count == 0 || n_states == 0 {
        return invalid("sample count and dimension must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let g: Vec<f64> = (0..n_states).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = g.iter().sum();
            SimplexPoint::from_roundoff(g.into_iter().map(|x| x / total).collect())
        })
        .collect())
}

/// Regular barycentric grid on the 2-simplex with `divisions` steps per edge,
/// giving `(d + 1)(d + 2) / 2` points.
pub fn barycentric_grid(divisions: usize) -> Result<Vec<SimplexPoint>> {
    if divisions == 0 {
        return invalid("grid needs at least one division");
    }
    let d = divisions as f64;
    let mut out = Vec::new();
    for i in 0..=divisions {
        for j in 0..=divisions - i {
            let a = i as f64 / d;
            let b = j as f64 / d;
            out.push(SimplexPoint::from_roundoff(vec![
                a,
                b,
                (divisions - i - j) as f64 / d,
            ]));
        }
    }
    Ok(out)
}

/// A field evaluation at one point, optionally with the per-content parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSample {
    pub point: SimplexPoint,
    pub field: Vec<f64>,
    /// `decomposition[l]` is `u_l(η)`.
    pub decomposition: Option<Vec<Vec<f64>>>,
}

/// Evaluates the field of `model` at every point.
pub fn field_snapshot(
    model: &SchemeModel<'_>,
    points: &[SimplexPoint],
    decompose: bool,
) -> Result<Vec<FieldSample>> {
    let theta = model.overall()?;
    let conditionals = if decompose {
        Some(model.conditionals()?)
    } else {
        None
    };
    points
        .par_iter()
        .map(|p| {
            let field = stf(&theta, p.as_slice())?;
            let decomposition = match &conditionals {
                Some(ths) => Some(
                    ths.iter()
                        .map(|th| content_stf(th, p.as_slice()))
                        .collect::<Result<Vec<_>>>()?,
                ),
                None => None,
            };
            Ok(FieldSample {
                point: p.clone(),
                field,
                decomposition,
            })
        })
        .collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `M(η*) = Σ_l υ_l ‖u_l(η*)‖₂`.
pub fn replacement_activity_metric(model: &SchemeModel<'_>, steady: &[f64]) -> Result<f64> {
    check_len(model.space(), steady)?;
    let v = model.popularity().probs();
    let mut total = 0.0;
    for (l, th) in model.conditionals()?.iter().enumerate() {
        total += v[l] * norm2(&content_stf(th, steady)?);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Modulus of the second largest eigenvalue of `Θ`.
    pub second_eigenvalue_numeric: f64,
    /// Mean projection of the field onto the direction towards `η*`.
    pub projection_metric: f64,
    pub projection_min: f64,
    pub projection_max: f64,
    pub samples_used: usize,
}

/// Projects `u(η_a)` onto the unit direction from `η_a` to `η*` at each
/// sample and aggregates by the arithmetic mean.
pub fn convergence_projection_metric(
    model: &SchemeModel<'_>,
    steady_state: &[f64],
    points: &[SimplexPoint],
) -> Result<ConvergenceReport> {
    check_len(model.space(), steady_state)?;
    let theta = model.overall()?;
    let mut projections = Vec::with_capacity(points.len());
    for p in points {
        let eta = p.as_slice();
        check_len(model.space(), eta)?;
        let dir: Vec<f64> = steady_state.iter().zip(eta).map(|(s, e)| s - e).collect();
        let dist = norm2(&dir);
        if dist < COINCIDENT_POINT {
            continue;
        }
        let u = stf(&theta, eta)?;
        projections.push(u.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / dist);
    }
    if projections.is_empty() {
        return invalid("no sample point differs from the steady state");
    }
    let n = projections.len();
    let spectrum = steady::numeric_eigenvalues(&theta)?;
    Ok(ConvergenceReport {
        second_eigenvalue_numeric: spectrum.get(1).map(|e| e.norm()).unwrap_or(0.0),
        projection_metric: projections.iter().sum::<f64>() / n as f64,
        projection_min: projections.iter().copied().fold(f64::INFINITY, f64::min),
        projection_max: projections
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        samples_used: n,
    })
}
