//! Steady states, balance-equation residuals and spectral convergence
//! diagnostics.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::schemes::{tlp_replacement_probability, RecencyProfile, Scheme, TransitionMatrix};
use crate::state_space::{Popularity, SimplexPoint, StateSpace};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000_000;

/// Agreement required between numeric and closed-form second eigenvalues.
pub const CLOSED_FORM_AGREEMENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyMethod {
    PowerIteration,
    RrClosedForm,
    AbsorbingAnalytic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyStateResult {
    pub eta_star: SimplexPoint,
    pub iterations: usize,
    /// `‖Θη* − η*‖∞`.
    pub residual: f64,
    pub method: SteadyMethod,
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Iterates `η ← Θη` from `eta0` until `‖Θη − η‖∞ ≤ tol`. The iteration
/// count is the path length from `eta0`.
pub fn steady_state_power(
    theta: &TransitionMatrix,
    eta0: &SimplexPoint,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyStateResult> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    if eta0.len() != theta.n_states() {
        return invalid(format!(
            "initial SCP has length {}, matrix has {} states",
            eta0.len(),
            theta.n_states()
        ));
    }
    let m = theta.matrix();
    let mut eta = DVector::from_column_slice(eta0.as_slice());
    let mut next = DVector::zeros(eta.len());
    for iterations in 0..=max_iter {
        next.gemv(1.0, m, &eta, 0.0);
        let residual = inf_norm_diff(next.as_slice(), eta.as_slice());
        if residual <= tol {
            return Ok(SteadyStateResult {
                eta_star: SimplexPoint::from_roundoff(eta.as_slice().to_vec()),
                iterations,
                residual,
                method: SteadyMethod::PowerIteration,
            });
        }
        if iterations == max_iter {
            return Err(Error::NotConverged {
                iterations,
                residual,
                last: eta.as_slice().to_vec(),
            });
        }
        std::mem::swap(&mut eta, &mut next);
    }
    unreachable!()
}

/// `Θη − η` in the ∞-norm.
pub fn fixed_point_residual(theta: &TransitionMatrix, eta: &[f64]) -> Result<f64> {
    Ok(inf_norm_diff(&theta.apply(eta)?, eta))
}

/// RR steady state from the linear system `Aη* = g`: rows are the balance
/// vectors of the first `N_s − 1` states, the last row is all ones.
pub fn steady_state_rr_closed_form(
    space: &StateSpace,
    popularity: &Popularity,
) -> Result<SteadyStateResult> {
    if popularity.len() != space.n_contents() {
        return invalid("popularity length does not match the state space");
    }
    let n = space.len();
    let v = popularity.probs();
    let lf = space.cache_size() as f64;
    let mut a = DMatrix::zeros(n, n);
    for m in 0..n - 1 {
        a[(m, m)] = (0..space.n_contents())
            .filter(|&l| !space.contains(m, l))
            .map(|l| v[l])
            .sum::<f64>();
        for k in space.neighbors(m)? {
            a[(m, k)] = -v[space.swapped_content(m, k)?] / lf;
        }
    }
    for k in 0..n {
        a[(n - 1, k)] = 1.0;
    }
    let mut g = DVector::zeros(n);
    g[n - 1] = 1.0;
    let eta = a
        .lu()
        .solve(&g)
        .ok_or_else(|| Error::Numerical("balance matrix A is singular".into()))?;
    let eta_star = SimplexPoint::from_roundoff(eta.as_slice().to_vec());
    // The fixed point does not depend on phi; measure the residual at phi = 1/L.
    let theta = crate::schemes::overall_matrix(&Scheme::Rr { phi: 1.0 / lf }, space, popularity)?;
    let residual = fixed_point_residual(&theta, eta_star.as_slice())?;
    Ok(SteadyStateResult {
        eta_star,
        iterations: 0,
        residual,
        method: SteadyMethod::RrClosedForm,
    })
}

/// LP/TLP steady state: all mass on the state caching the `L` most
/// predicted-popular contents.
pub fn steady_state_absorbing(
    space: &StateSpace,
    predicted: &Popularity,
) -> Result<SteadyStateResult> {
    let top: Vec<usize> = predicted.ranking()[..space.cache_size()].to_vec();
    let k = space.index_of(&top).ok_or_else(|| {
        Error::InvalidArgument("predicted popularity does not match space".into())
    })?;
    Ok(SteadyStateResult {
        eta_star: SimplexPoint::vertex(space.len(), k),
        iterations: 0,
        residual: 0.0,
        method: SteadyMethod::AbsorbingAnalytic,
    })
}

/// Per-state RR balance residual
/// `η_m Σ_{l∉C_m} υ_l − (1/L) Σ_{k∈H_m} η_k υ_{e(m,k)}`.
pub fn verify_balance_rr(
    space: &StateSpace,
    popularity: &Popularity,
    eta: &[f64],
) -> Result<Vec<f64>> {
    let lf = space.cache_size() as f64;
    balance(space, popularity, eta, |_, _| 1.0 / lf)
}

/// Per-state LRU balance residual
/// `η_m Σ_{l∉C_m} υ_l − Σ_{k∈H_m} υ_{e(m,k)} ρ_{e(k,m)|k} η_k`.
pub fn verify_balance_lru(
    space: &StateSpace,
    popularity: &Popularity,
    recency: &RecencyProfile,
    eta: &[f64],
) -> Result<Vec<f64>> {
    balance(space, popularity, eta, |k, victim| recency.get(k, victim))
}

fn balance(
    space: &StateSpace,
    popularity: &Popularity,
    eta: &[f64],
    eviction: impl Fn(usize, usize) -> f64,
) -> Result<Vec<f64>> {
    if eta.len() != space.len() || popularity.len() != space.n_contents() {
        return invalid("dimension mismatch in balance check");
    }
    let v = popularity.probs();
    (0..space.len())
        .map(|m| {
            let miss: f64 = (0..space.n_contents())
                .filter(|&l| !space.contains(m, l))
                .map(|l| v[l])
                .sum();
            let mut inflow = 0.0;
            for k in space.neighbors(m)? {
                let incoming = space.swapped_content(m, k)?;
                let victim = space.swapped_content(k, m)?;
                inflow += v[incoming] * eviction(k, victim) * eta[k];
            }
            Ok(eta[m] * miss - inflow)
        })
        .collect()
}

/// Eigenvalues of `Θ` sorted by decreasing modulus.
pub fn numeric_eigenvalues(theta: &TransitionMatrix) -> Result<Vec<Complex<f64>>> {
    let schur = Schur::try_new(theta.matrix().clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)));
    Ok(ev)
}

/// Second largest eigenvalue of `Θ_LP` / `Θ_TLP` from the diagonal entry of
/// the state one swap below the absorbing state: the `L`-th most popular
/// content `l̂` is missing and the `(L+1)`-th is cached.
pub fn second_eigenvalue_closed_form(
    scheme: &Scheme,
    popularity: &Popularity,
    cache_size: usize,
) -> Option<f64> {
    let predicted = scheme.predicted()?;
    let rank = predicted.ranking();
    if cache_size >= rank.len() {
        return None;
    }
    let l_hat = rank[cache_size - 1];
    let below = rank[cache_size];
    let request = popularity.get(l_hat);
    match scheme {
        Scheme::Lp { alpha, .. } => Some(if predicted.get(l_hat) > predicted.get(below) {
            1.0 - alpha * request
        } else {
            1.0
        }),
        Scheme::Tlp { variant, .. } => {
            let phi = tlp_replacement_probability(*variant, predicted, l_hat, below).unwrap_or(0.0);
            Some(1.0 - request * phi)
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    /// `(re, im)` pairs sorted by decreasing modulus.
    pub eigenvalues_sorted: Vec<(f64, f64)>,
    pub largest: f64,
    /// Modulus of the second eigenvalue in modulus order.
    pub second_largest_numeric: f64,
    pub closed_form: Option<f64>,
    /// Whether the closed form matches the numeric value within 1e-9.
    pub agreement: Option<bool>,
    pub ordering: &'static str,
}

impl SpectralReport {
    /// `d₂ᵗ ‖η⁰‖₂`.
    pub fn bound_at(&self, t: u32, eta0: &[f64]) -> f64 {
        self.second_largest_numeric.powi(t as i32) * norm2(eta0)
    }
}

/// Numeric spectrum of `Θ`; for LP/TLP also the closed-form second
/// eigenvalue and its agreement with the numeric one.
pub fn spectral_report(
    theta: &TransitionMatrix,
    closed_form_for: Option<(&Scheme, &Popularity, usize)>,
) -> Result<SpectralReport> {
    let ev = numeric_eigenvalues(theta)?;
    let largest = ev.first().map(|e| e.norm()).unwrap_or(0.0);
    let second = ev.get(1).map(|e| e.norm()).unwrap_or(0.0);
    let closed_form =
        closed_form_for.and_then(|(scheme, pop, l)| second_eigenvalue_closed_form(scheme, pop, l));
    Ok(SpectralReport {
        eigenvalues_sorted: ev.iter().map(|e| (e.re, e.im)).collect(),
        largest,
        second_largest_numeric: second,
        agreement: closed_form.map(|c| (c - second).abs() <= CLOSED_FORM_AGREEMENT),
        closed_form,
        ordering: "modulus",
    })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub t: u32,
    /// `d₂ᵗ ‖η⁰‖₂`.
    pub bound: f64,
    /// `‖Θᵗη⁰ − η*‖₂`.
    pub actual: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.actual <= self.bound
    }
}

/// Compares `‖Θᵗη⁰ − η*‖₂` with `d₂ᵗ ‖η⁰‖₂`.
pub fn convergence_bound(
    theta: &TransitionMatrix,
    eta0: &SimplexPoint,
    steady: &[f64],
    second_eigenvalue: f64,
    t: u32,
) -> Result<BoundCheck> {
    if steady.len() != theta.n_states() {
        return invalid("steady state length does not match the matrix");
    }
    let mut eta = eta0.as_slice().to_vec();
    for _ in 0..t {
        eta = theta.apply(&eta)?;
    }
    let diff: Vec<f64> = eta.iter().zip(steady).map(|(a, b)| a - b).collect();
    Ok(BoundCheck {
        t,
        bound: second_eigenvalue.powi(t as i32) * norm2(eta0.as_slice()),
        actual: norm2(&diff),
    })
}
