mod common;

use common::example;
use stf_core::schemes::{RecencyModel, Scheme, SchemeModel};
use stf_core::sim::{ccp_trajectory, run_trace, CacheInstance, Trajectory};
use stf_core::state_space::hit_probability;
use stf_core::steady::steady_state_power;
use stf_core::{Popularity, SimplexPoint, StateSpace};

/// Batch-means mean and standard error of a per-request statistic.
fn batch_stats(values: &[f64], batches: usize) -> (f64, f64) {
    let size = values.len() / batches;
    let means: Vec<f64> = values
        .chunks(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

fn steady(scheme: &Scheme, space: &StateSpace, v: &Popularity) -> SimplexPoint {
    let th = SchemeModel::new(scheme, space, v)
        .unwrap()
        .overall()
        .unwrap();
    steady_state_power(&th, &SimplexPoint::uniform(space.len()), 1e-14, 1_000_000)
        .unwrap()
        .eta_star
}

fn long_trace(scheme: &Scheme, space: &StateSpace, v: &Popularity, seed: u64) -> Trajectory {
    run_trace(
        scheme,
        v,
        Some(space),
        CacheInstance::from_state(space, 0).unwrap(),
        1_000_000,
        seed,
    )
    .unwrap()
}

#[test]
fn lru_occupancy_matches_exact_recency_model() {
    let space = StateSpace::new(4, 2).unwrap();
    let v = Popularity::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
    let eta = steady(&Scheme::lru(), &space, &v);
    let t = long_trace(&Scheme::lru(), &space, &v, 17);
    for k in 0..space.len() {
        let ind: Vec<f64> = t
            .records
            .iter()
            .map(|r| (r.state == Some(k)) as u8 as f64)
            .collect();
        let (mean, se) = batch_stats(&ind, 100);
        assert!(
            (mean - eta.as_slice()[k]).abs() <= 3.0 * se,
            "state {k}: {mean} vs {} (se {se})",
            eta.as_slice()[k]
        );
    }
}

#[test]
fn restricted_recency_model_departs_from_lru_traces() {
    let space = StateSpace::new(3, 2).unwrap();
    let v = example();
    let eta = steady(
        &Scheme::Lru {
            recency: RecencyModel::Restricted,
        },
        &space,
        &v,
    );
    let t = long_trace(&Scheme::lru(), &space, &v, 18);
    let ind: Vec<f64> = t
        .records
        .iter()
        .map(|r| (r.state == Some(0)) as u8 as f64)
        .collect();
    let (mean, se) = batch_stats(&ind, 100);
    assert!((mean - eta.as_slice()[0]).abs() > 5.0 * se);
}

#[test]
fn hit_ratio_matches_steady_state() {
    let space = StateSpace::new(3, 2).unwrap();
    let v = example();
    for scheme in [Scheme::Rr { phi: 0.3 }, Scheme::lru()] {
        let eta = steady(&scheme, &space, &v);
        let gamma = hit_probability(v.probs(), &space.scp_to_ccp(eta.as_slice()).unwrap()).unwrap();
        let t = long_trace(&scheme, &space, &v, 19);
        let hits: Vec<f64> = t.records.iter().map(|r| r.hit as u8 as f64).collect();
        let (mean, se) = batch_stats(&hits, 100);
        assert!(
            (mean - gamma).abs() <= 3.0 * se,
            "{}: {mean} vs {gamma}",
            scheme.name()
        );
    }
}

#[test]
fn rr_stationary_ccp_below_lru_for_top_content() {
    let v = stf_core::sim::zipf_popularity(20, 0.8).unwrap();
    let rr = ccp_trajectory(&Scheme::Rr { phi: 0.25 }, &v, 4, 500, 600, &[0], 1).unwrap();
    let lru = ccp_trajectory(&Scheme::lru(), &v, 4, 500, 600, &[0], 2).unwrap();
    assert!(lru.window_mean(0, 300, 600) > rr.window_mean(0, 300, 600));
}
