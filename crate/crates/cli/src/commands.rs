//! One function per subcommand, each turning a parsed config into a [`Report`].

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use stf_core::field::{barycentric_grid, field_snapshot, sample_domain, stf};
use stf_core::schemes::{Scheme, SchemeModel, TransitionMatrix};
use stf_core::sim::{ccp_trajectory, empirical_stf, empirical_theta, run_trace, CacheInstance};
use stf_core::state_space::hit_probability;
use stf_core::steady::{
    convergence_bound, spectral_report, steady_state_absorbing, steady_state_power,
    steady_state_rr_closed_form, SteadyStateResult,
};
use stf_core::{Popularity, SimplexPoint, StateSpace};

use crate::config::{
    max_states, CcpConfig, CompareConfig, FieldConfig, Order, PointsSpec, SimTask, SimulateConfig,
    SpectrumConfig, SpectrumExport, StatesConfig, StatesTable, SteadyConfig,
};
use crate::output::{fmt_num, labels, Report, Table};

fn space_for(
    n_contents: usize,
    cache_size: usize,
    scheme: Option<&Scheme>,
    order: Order,
) -> Result<StateSpace> {
    let space = StateSpace::with_cap(n_contents, cache_size, max_states()?)?;
    let predicted = scheme.and_then(Scheme::predicted);
    match (order, predicted) {
        (Order::Canonical, _) | (Order::Auto, None) => Ok(space),
        (Order::Auto | Order::Predicted, Some(p)) => Ok(space.sorted_by_predicted_mass(p)?),
        (Order::Predicted, None) => bail!("order \"predicted\" needs an LP or TLP scheme"),
    }
}

fn state_labels(space: &StateSpace) -> Vec<Vec<usize>> {
    space
        .states()
        .iter()
        .map(|s| s.iter().map(|c| c + 1).collect())
        .collect()
}

fn nums(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| fmt_num(x)).collect()
}

fn joined(v: &[f64]) -> String {
    nums(v).join(" ")
}

/// Analytic steady state: closed form for RR, absorbing state for LP/TLP,
/// power iteration for LRU.
fn analytic_steady(model: &SchemeModel<'_>) -> Result<SteadyStateResult> {
    let space = model.space();
    Ok(match model.scheme() {
        Scheme::Rr { .. } => steady_state_rr_closed_form(space, model.popularity())?,
        Scheme::Lp { predicted, .. } | Scheme::Tlp { predicted, .. } => {
            steady_state_absorbing(space, predicted)?
        }
        Scheme::Lru { .. } => steady_state_power(
            &model.overall()?,
            &SimplexPoint::uniform(space.len()),
            stf_core::steady::DEFAULT_TOLERANCE,
            stf_core::steady::DEFAULT_MAX_ITER,
        )?,
    })
}

fn points_for(spec: &PointsSpec, n_states: usize, seed: u64) -> Result<Vec<SimplexPoint>> {
    Ok(match spec {
        PointsSpec::Grid { divisions } => {
            if n_states != 3 {
                bail!("grid points are only available for 3 states, this space has {n_states}");
            }
            barycentric_grid(*divisions)?
        }
        PointsSpec::Random { count } => sample_domain(n_states, *count, seed)?,
        PointsSpec::Explicit { points } => points
            .iter()
            .map(|p| SimplexPoint::new(p.clone()))
            .collect::<stf_core::Result<_>>()?,
    })
}

pub fn states(cfg: StatesConfig) -> Result<Report> {
    let space = space_for(cfg.n_contents, cfg.cache_size, None, Order::Canonical)?;
    let neighbors: Vec<Vec<usize>> = (0..space.len())
        .map(|k| Ok(space.neighbors(k)?.iter().map(|m| m + 1).collect()))
        .collect::<Result<_>>()?;
    let cs = space.state_matrix();
    let matrix: Vec<Vec<u8>> = (0..space.n_contents())
        .map(|c| (0..space.len()).map(|k| cs.get(c, k)).collect())
        .collect();
    let json = json!({
        "n_contents": space.n_contents(),
        "cache_size": space.cache_size(),
        "n_states": space.len(),
        "states": state_labels(&space),
        "neighbors": neighbors,
        "state_matrix": matrix,
    });
    let table = match cfg.table {
        StatesTable::Listing => {
            let mut t = Table::new(["state", "contents", "neighbors"]);
            for k in 0..space.len() {
                let nb: Vec<usize> = neighbors[k].iter().map(|m| m - 1).collect();
                t.push(vec![
                    (k + 1).to_string(),
                    labels(space.state(k)),
                    labels(&nb),
                ]);
            }
            t
        }
        StatesTable::Matrix => {
            let mut t = Table::new(
                std::iter::once("content".to_string())
                    .chain((1..=space.len()).map(|k| k.to_string())),
            );
            for (c, row) in matrix.iter().enumerate() {
                t.push(
                    std::iter::once((c + 1).to_string())
                        .chain(row.iter().map(u8::to_string))
                        .collect(),
                );
            }
            t
        }
    };
    Ok(Report { json, table })
}

pub fn field(cfg: FieldConfig, seed: u64, decompose: bool) -> Result<Report> {
    let popularity = cfg.popularity.build()?;
    let space = space_for(
        popularity.len(),
        cfg.cache_size,
        Some(&cfg.scheme),
        cfg.order,
    )?;
    let model = SchemeModel::new(&cfg.scheme, &space, &popularity)?;
    let steady = analytic_steady(&model)?;
    let points = points_for(&cfg.points, space.len(), seed)?;
    let decompose = decompose || cfg.decompose;
    let samples = field_snapshot(&model, &points, decompose)?;
    let n = space.len();
    let mut header: Vec<String> = (1..=n).map(|k| format!("eta_{k}")).collect();
    header.extend((1..=n).map(|k| format!("u_{k}")));
    if decompose {
        for l in 1..=popularity.len() {
            header.extend((1..=n).map(|k| format!("u{l}_{k}")));
        }
    }
    let mut table = Table::new(header);
    table.meta("scheme", cfg.scheme.name());
    table.meta(
        "states",
        space
            .states()
            .iter()
            .map(|s| labels(s))
            .collect::<Vec<_>>()
            .join(";"),
    );
    table.meta("steady_state", joined(steady.eta_star.as_slice()));
    table.meta("steady_method", method_name(&steady));
    for s in &samples {
        let mut row = nums(s.point.as_slice());
        row.extend(nums(&s.field));
        for part in s.decomposition.iter().flatten() {
            row.extend(nums(part));
        }
        table.push(row);
    }
    let json = json!({
        "scheme": cfg.scheme.name(),
        "states": state_labels(&space),
        "steady_state": steady.eta_star,
        "steady_method": method_name(&steady),
        "samples": samples,
    });
    Ok(Report { json, table })
}

fn method_name(r: &SteadyStateResult) -> String {
    serde_json::to_value(r.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn steady(cfg: SteadyConfig) -> Result<Report> {
    let popularity = cfg.popularity.build()?;
    let space = space_for(
        popularity.len(),
        cfg.cache_size,
        Some(&cfg.scheme),
        cfg.order,
    )?;
    let model = SchemeModel::new(&cfg.scheme, &space, &popularity)?;
    let theta = model.overall()?;
    let power = steady_state_power(
        &theta,
        &SimplexPoint::uniform(space.len()),
        cfg.tolerance,
        cfg.max_iter,
    )?;
    let cross = match cfg.scheme {
        Scheme::Lru { .. } => None,
        _ => Some(analytic_steady(&model)?),
    };
    let cross_json = cross.as_ref().map(|c| {
        let diff = max_diff(c.eta_star.as_slice(), power.eta_star.as_slice());
        json!({
            "method": method_name(c),
            "eta_star": c.eta_star,
            "max_difference": diff,
            "agreement": diff <= 1e-9,
        })
    });
    let mut header = vec!["state", "contents", "eta_star"];
    if cross.is_some() {
        header.push("cross_check");
    }
    let mut table = Table::new(header);
    table.meta("scheme", cfg.scheme.name());
    table.meta("method", method_name(&power));
    table.meta("iterations", power.iterations.to_string());
    table.meta("residual", fmt_num(power.residual));
    if let Some(c) = &cross_json {
        table.meta("agreement", c["agreement"].to_string());
    }
    for k in 0..space.len() {
        let mut row = vec![
            (k + 1).to_string(),
            labels(space.state(k)),
            fmt_num(power.eta_star.as_slice()[k]),
        ];
        if let Some(c) = &cross {
            row.push(fmt_num(c.eta_star.as_slice()[k]));
        }
        table.push(row);
    }
    let json = json!({
        "scheme": cfg.scheme.name(),
        "states": state_labels(&space),
        "eta_star": power.eta_star,
        "iterations": power.iterations,
        "residual": power.residual,
        "method": method_name(&power),
        "cross_check": cross_json,
    });
    Ok(Report { json, table })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn matrix_report(theta: &TransitionMatrix, extra: Value) -> Report {
    let n = theta.n_states();
    let triplets: Vec<Value> = theta
        .triplets()
        .into_iter()
        .map(|(m, k, v)| json!([m + 1, k + 1, v]))
        .collect();
    let mut json = json!({ "n_states": n, "triplets": triplets });
    if let (Value::Object(dst), Value::Object(src)) = (&mut json, extra) {
        dst.extend(src);
    }
    let mut table =
        Table::new(std::iter::once("to\\from".to_string()).chain((1..=n).map(|k| k.to_string())));
    for m in 0..n {
        table.push(
            std::iter::once((m + 1).to_string())
                .chain((0..n).map(|k| fmt_num(theta.get(m, k))))
                .collect(),
        );
    }
    Report { json, table }
}

pub fn spectrum(cfg: SpectrumConfig) -> Result<Report> {
    let popularity = cfg.popularity.build()?;
    let space = space_for(
        popularity.len(),
        cfg.cache_size,
        Some(&cfg.scheme),
        cfg.order,
    )?;
    let model = SchemeModel::new(&cfg.scheme, &space, &popularity)?;
    let theta = model.overall()?;
    if cfg.export == SpectrumExport::Matrix {
        return Ok(matrix_report(
            &theta,
            json!({ "scheme": cfg.scheme.name(), "states": state_labels(&space) }),
        ));
    }
    let report = spectral_report(&theta, Some((&cfg.scheme, &popularity, cfg.cache_size)))?;
    let steady = analytic_steady(&model)?;
    let eta0 = SimplexPoint::uniform(space.len());
    let bounds = cfg
        .horizons
        .iter()
        .map(|&t| {
            convergence_bound(
                &theta,
                &eta0,
                steady.eta_star.as_slice(),
                report.second_largest_numeric,
                t,
            )
        })
        .collect::<stf_core::Result<Vec<_>>>()?;
    let mut table = Table::new(["rank", "re", "im", "modulus"]);
    table.meta("scheme", cfg.scheme.name());
    table.meta("ordering", report.ordering);
    table.meta(
        "second_largest_numeric",
        fmt_num(report.second_largest_numeric),
    );
    if let Some(c) = report.closed_form {
        table.meta("closed_form", fmt_num(c));
    }
    if let Some(a) = report.agreement {
        table.meta("agreement", a.to_string());
    }
    for (i, &(re, im)) in report.eigenvalues_sorted.iter().enumerate() {
        table.push(vec![
            (i + 1).to_string(),
            fmt_num(re),
            fmt_num(im),
            fmt_num(re.hypot(im)),
        ]);
    }
    let mut json = serde_json::to_value(&report)?;
    json["scheme"] = json!(cfg.scheme.name());
    json["bound"] = serde_json::to_value(&bounds)?;
    Ok(Report { json, table })
}

pub fn simulate(cfg: SimulateConfig, seed: u64) -> Result<Report> {
    let popularity = cfg.popularity.build()?;
    let n_contents = popularity.len();
    match &cfg.task {
        SimTask::Trace {
            n_requests,
            initial,
        } => {
            let space = StateSpace::with_cap(n_contents, cfg.cache_size, max_states()?).ok();
            let cache = match initial {
                Some(order) => {
                    if order.len() != cfg.cache_size {
                        bail!(
                            "initial cache lists {} contents, cache size is {}",
                            order.len(),
                            cfg.cache_size
                        );
                    }
                    let zero_based = order
                        .iter()
                        .map(|&c| c.checked_sub(1).context("content labels are 1-based"))
                        .collect::<Result<Vec<_>>>()?;
                    CacheInstance::from_recency(n_contents, &zero_based)?
                }
                None => CacheInstance::empty(n_contents, cfg.cache_size)?,
            };
            let traj = run_trace(
                &cfg.scheme,
                &popularity,
                space.as_ref(),
                cache,
                *n_requests,
                seed,
            )?;
            let mut table = Table::new(["request_index", "content", "hit", "state"]);
            table.meta("scheme", cfg.scheme.name());
            table.meta("hit_ratio", fmt_num(traj.hit_ratio()));
            let records: Vec<Value> = traj
                .records
                .iter()
                .map(|r| {
                    table.push(vec![
                        r.request_index.to_string(),
                        (r.content + 1).to_string(),
                        (r.hit as u8).to_string(),
                        r.state.map(|s| (s + 1).to_string()).unwrap_or_default(),
                    ]);
                    json!({
                        "request_index": r.request_index,
                        "content": r.content + 1,
                        "hit": r.hit,
                        "state": r.state.map(|s| s + 1),
                    })
                })
                .collect();
            let json = json!({
                "scheme": cfg.scheme.name(),
                "hit_ratio": traj.hit_ratio(),
                "records": records,
            });
            Ok(Report { json, table })
        }
        SimTask::Stf { points, m, r, mode } => {
            let space = space_for(
                n_contents,
                cfg.cache_size,
                Some(&cfg.scheme),
                Order::Canonical,
            )?;
            let model = SchemeModel::new(&cfg.scheme, &space, &popularity)?;
            let theta = model.overall()?;
            let pts = points_for(points, space.len(), seed)?;
            let n = space.len();
            let mut header: Vec<String> = (1..=n).map(|k| format!("eta_{k}")).collect();
            header.extend((1..=n).map(|k| format!("uhat_{k}")));
            header.extend((1..=n).map(|k| format!("u_{k}")));
            let mut table = Table::new(header);
            table.meta("scheme", cfg.scheme.name());
            table.meta("m", m.to_string());
            table.meta("r", r.to_string());
            let mut samples = Vec::new();
            for (i, p) in pts.iter().enumerate() {
                let est = empirical_stf(
                    &model,
                    p,
                    *m,
                    *r,
                    *mode,
                    stf_core::sim::derive_seed(seed, i as u64),
                )?;
                let exact = stf(&theta, p.as_slice())?;
                let mut row = nums(p.as_slice());
                row.extend(nums(&est));
                row.extend(nums(&exact));
                table.push(row);
                samples.push(json!({ "point": p, "estimate": est, "analytic": exact }));
            }
            let json = json!({
                "scheme": cfg.scheme.name(),
                "states": state_labels(&space),
                "mode": mode,
                "m": m,
                "r": r,
                "samples": samples,
            });
            Ok(Report { json, table })
        }
        SimTask::Theta {
            samples_per_state,
            mode,
        } => {
            let space = space_for(
                n_contents,
                cfg.cache_size,
                Some(&cfg.scheme),
                Order::Canonical,
            )?;
            let model = SchemeModel::new(&cfg.scheme, &space, &popularity)?;
            let est = empirical_theta(&model, *samples_per_state, *mode, seed)?;
            Ok(matrix_report(
                &est.estimate,
                json!({
                    "scheme": cfg.scheme.name(),
                    "states": state_labels(&space),
                    "samples_per_state": samples_per_state,
                }),
            ))
        }
    }
}

pub fn ccp(cfg: CcpConfig, seed: u64) -> Result<Report> {
    let popularity = cfg.popularity.build()?;
    let tracked = cfg
        .tracked_contents
        .iter()
        .map(|&c| c.checked_sub(1).context("content labels are 1-based"))
        .collect::<Result<Vec<_>>>()?;
    let est = ccp_trajectory(
        &cfg.scheme,
        &popularity,
        cfg.cache_size,
        cfg.n_rounds,
        cfg.n_requests,
        &tracked,
        seed,
    )?;
    let mut table = Table::new(["request_index", "content", "value"]);
    table.meta("scheme", cfg.scheme.name());
    table.meta("n_rounds", cfg.n_rounds.to_string());
    for n in 0..est.n_requests {
        for (i, &c) in est.tracked.iter().enumerate() {
            table.push(vec![
                (n + 1).to_string(),
                (c + 1).to_string(),
                fmt_num(est.values[i][n]),
            ]);
        }
    }
    let json = json!({
        "scheme": cfg.scheme.name(),
        "n_rounds": est.n_rounds,
        "n_requests": est.n_requests,
        "tracked_contents": cfg.tracked_contents,
        "values": est.values,
        "occupancy": est.occupancy,
    });
    Ok(Report { json, table })
}

pub fn compare(cfg: CompareConfig) -> Result<Report> {
    let popularity: Popularity = cfg.popularity.build()?;
    let space = space_for(popularity.len(), cfg.cache_size, None, Order::Canonical)?;
    let rr = steady_state_rr_closed_form(&space, &popularity)?;
    let lru_scheme = Scheme::Lru {
        recency: cfg.recency,
    };
    let lru = analytic_steady(&SchemeModel::new(&lru_scheme, &space, &popularity)?)?;
    let (a, b) = (rr.eta_star.as_slice(), lru.eta_star.as_slice());
    let delta: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let hit = |eta: &[f64]| -> Result<f64> {
        Ok(hit_probability(
            popularity.probs(),
            &space.scp_to_ccp(eta)?,
        )?)
    };
    let (hit_rr, hit_lru) = (hit(a)?, hit(b)?);
    let mut table = Table::new(["state", "contents", "eta_rr", "eta_lru", "delta"]);
    table.meta("hit_rr", fmt_num(hit_rr));
    table.meta("hit_lru", fmt_num(hit_lru));
    for k in 0..space.len() {
        table.push(vec![
            (k + 1).to_string(),
            labels(space.state(k)),
            fmt_num(a[k]),
            fmt_num(b[k]),
            fmt_num(delta[k]),
        ]);
    }
    let json = json!({
        "states": state_labels(&space),
        "eta_rr": a,
        "eta_lru": b,
        "delta": delta,
        "hit_rr": hit_rr,
        "hit_lru": hit_lru,
    });
    Ok(Report { json, table })
}
