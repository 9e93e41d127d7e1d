use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use stf_cli::output::{parse_labels, read_csv, read_json};
use tempfile::TempDir;

const EXAMPLE: [f64; 3] = [0.5, 0.29, 0.21];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stfcache"))
}

fn write_config(dir: &TempDir, name: &str, doc: &Value) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    p
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    let o = cmd.output().unwrap();
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn explicit(probs: &[f64]) -> Value {
    json!({"kind": "explicit", "probs": probs})
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn states_listings() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.csv");
    run(
        &[
            "states",
            "--format",
            "csv",
            "--set",
            "n_contents=5",
            "--set",
            "cache_size=2",
        ],
        None,
        &out,
    );
    let t = read_csv(&out).unwrap();
    assert_eq!(t.rows.len(), 10);
    assert_eq!(parse_labels(&t.rows[6][1]).unwrap(), vec![1, 4]);
    assert_eq!(t.rows[7][2], "2 3 5 6 9 10");

    let out = dir.path().join("s.json");
    run(
        &["states", "--set", "n_contents=3", "--set", "cache_size=2"],
        None,
        &out,
    );
    let v = read_json(&out).unwrap();
    assert_eq!(v["states"], json!([[1, 2], [1, 3], [2, 3]]));
    assert_eq!(v["state_matrix"], json!([[1, 1, 0], [1, 0, 1], [0, 1, 1]]));

    let out = dir.path().join("big.csv");
    run(
        &[
            "states",
            "--format",
            "csv",
            "--set",
            "n_contents=30",
            "--set",
            "cache_size=3",
        ],
        None,
        &out,
    );
    assert_eq!(read_csv(&out).unwrap().rows.len(), 4060);

    let out = dir.path().join("cs.csv");
    run(
        &[
            "states",
            "--format",
            "csv",
            "--set",
            "n_contents=5",
            "--set",
            "cache_size=2",
            "--set",
            "table=matrix",
        ],
        None,
        &out,
    );
    let t = read_csv(&out).unwrap();
    assert_eq!(t.rows.len(), 5);
    assert_eq!(t.header.len(), 11);
    // State 7 = {2, 5}.
    let col: Vec<&str> = t.rows.iter().map(|r| r[7].as_str()).collect();
    assert_eq!(col, ["0", "1", "0", "0", "1"]);
}

#[test]
fn state_cap_from_environment() {
    let o = bin()
        .args(["states", "--set", "n_contents=30", "--set", "cache_size=3"])
        .env("STF_CACHE_MAX_STATES", "1000")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("exceeds cap 1000"));
}

#[test]
fn field_scales_with_phi_and_decomposes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "field.json",
        &json!({
            "scheme": {"scheme": "rr", "phi": 0.45},
            "popularity": explicit(&EXAMPLE),
            "cache_size": 2,
            "points": {"kind": "grid", "divisions": 10},
        }),
    );
    let hi = dir.path().join("hi.csv");
    let lo = dir.path().join("lo.csv");
    run(&["field", "--format", "csv"], Some(&cfg), &hi);
    run(
        &["field", "--format", "csv", "--set", "scheme.phi=0.2"],
        Some(&cfg),
        &lo,
    );
    let (a, b) = (read_csv(&hi).unwrap(), read_csv(&lo).unwrap());
    assert_eq!(a.rows.len(), 66);
    assert_eq!(
        a.metadata_value("steady_state"),
        b.metadata_value("steady_state")
    );
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        for c in 3..6 {
            let (x, y): (f64, f64) = (ra[c].parse().unwrap(), rb[c].parse().unwrap());
            assert!((x - y * 2.25).abs() < 1e-10, "{x} vs {y}");
        }
    }
    let dec = dir.path().join("dec.json");
    run(&["field", "--decompose"], Some(&cfg), &dec);
    let v = read_json(&dec).unwrap();
    let s = &v["samples"][0];
    assert_eq!(s["decomposition"].as_array().unwrap().len(), 3);
    let dec_csv = dir.path().join("dec.csv");
    run(
        &["field", "--decompose", "--format", "csv"],
        Some(&cfg),
        &dec_csv,
    );
    assert_eq!(read_csv(&dec_csv).unwrap().header.len(), 6 + 9);
}

#[test]
fn steady_cross_checks() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "steady.json",
        &json!({
            "scheme": {"scheme": "rr", "phi": 0.45},
            "popularity": explicit(&EXAMPLE),
            "cache_size": 2,
        }),
    );
    let out = dir.path().join("steady_out.json");
    run(&["steady"], Some(&cfg), &out);
    let v = read_json(&out).unwrap();
    assert_eq!(v["method"], "power-iteration");
    assert_eq!(v["cross_check"]["method"], "rr-closed-form");
    assert_eq!(v["cross_check"]["agreement"], true);
    let eta: Vec<f64> = v["eta_star"].as_array().unwrap().iter().map(num).collect();
    assert!((eta.iter().sum::<f64>() - 1.0).abs() < 1e-11);
    assert!(num(&v["residual"]) <= 1e-12);

    run(
        &[
            "steady",
            "--set",
            r#"scheme={"scheme":"tlp","variant":"A","predicted":[0.5,0.29,0.21]}"#,
        ],
        Some(&cfg),
        &out,
    );
    let v = read_json(&out).unwrap();
    assert_eq!(v["states"][2], json!([1, 2]));
    assert!((num(&v["eta_star"][2]) - 1.0).abs() < 1e-9);
    assert_eq!(v["cross_check"]["method"], "absorbing-analytic");
}

#[test]
fn spectrum_closed_form_and_matrix() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "lp.json",
        &json!({
            "scheme": {"scheme": "lp", "alpha": 0.9, "predicted": EXAMPLE},
            "popularity": explicit(&EXAMPLE),
            "cache_size": 2,
        }),
    );
    let out = dir.path().join("spec.json");
    run(&["spectrum"], Some(&cfg), &out);
    let v = read_json(&out).unwrap();
    assert_eq!(num(&v["closed_form"]), 0.739);
    assert_eq!(v["agreement"], true);
    assert_eq!(v["eigenvalues_sorted"].as_array().unwrap().len(), 3);

    let mat = dir.path().join("theta.csv");
    run(
        &["spectrum", "--format", "csv", "--set", "export=matrix"],
        Some(&cfg),
        &mat,
    );
    let t = read_csv(&mat).unwrap();
    for k in 1..=3 {
        let col: f64 = t.rows.iter().map(|r| r[k].parse::<f64>().unwrap()).sum();
        assert!((col - 1.0).abs() < 1e-11);
    }
    let mj = dir.path().join("theta.json");
    run(&["spectrum", "--set", "export=matrix"], Some(&cfg), &mj);
    let v = read_json(&mj).unwrap();
    assert_eq!(v["n_states"], 3);
    for tr in v["triplets"].as_array().unwrap() {
        let (m, k) = (tr[0].as_u64().unwrap(), tr[1].as_u64().unwrap());
        assert!(m >= k, "upper entry ({m},{k})");
    }
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "sim.json",
        &json!({
            "scheme": {"scheme": "lru"},
            "popularity": {"kind": "zipf", "n_contents": 6, "exponent": 0.8},
            "cache_size": 2,
            "task": {"kind": "trace", "n_requests": 500},
            "seed": 3,
        }),
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run(&["simulate", "--format", "csv"], Some(&cfg), &a);
    run(&["simulate", "--format", "csv"], Some(&cfg), &b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.csv");
    run(
        &["simulate", "--format", "csv", "--seed", "4"],
        Some(&cfg),
        &c,
    );
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    let t = read_csv(&a).unwrap();
    assert_eq!(t.rows.len(), 500);
    // Warm-up: the first request always misses and leaves a half-full cache.
    assert_eq!(t.rows[0][2], "0");
    assert_eq!(t.rows[0][3], "");

    let stf = dir.path().join("stf.json");
    run(
        &[
            "simulate",
            "--set",
            r#"task={"kind":"stf","points":{"kind":"random","count":3},"m":200,"r":200}"#,
        ],
        Some(&cfg),
        &stf,
    );
    let v = read_json(&stf).unwrap();
    assert_eq!(v["samples"].as_array().unwrap().len(), 3);

    let th = dir.path().join("theta.json");
    run(
        &[
            "simulate",
            "--set",
            r#"task={"kind":"theta","samples_per_state":2000,"mode":"trace"}"#,
        ],
        Some(&cfg),
        &th,
    );
    assert_eq!(read_json(&th).unwrap()["n_states"], 15);
}

#[test]
fn ccp_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "ccp.json",
        &json!({
            "scheme": {"scheme": "rr", "phi": 0.25},
            "popularity": {"kind": "zipf", "n_contents": 10, "exponent": 0.8},
            "cache_size": 4,
            "n_rounds": 100,
            "n_requests": 50,
            "tracked_contents": [1, 7],
            "seed": 1,
        }),
    );
    let csv = dir.path().join("ccp.csv");
    let js = dir.path().join("ccp.json");
    run(&["ccp", "--format", "csv"], Some(&cfg), &csv);
    run(&["ccp"], Some(&cfg), &js);
    let t = read_csv(&csv).unwrap();
    let v = read_json(&js).unwrap();
    assert_eq!(t.header, ["request_index", "content", "value"]);
    assert_eq!(t.rows.len(), 100);
    for row in &t.rows {
        let n: usize = row[0].parse().unwrap();
        let i = if row[1] == "1" { 0 } else { 1 };
        let x: f64 = row[2].parse().unwrap();
        assert_eq!(x, num(&v["values"][i][n - 1]));
    }
}

#[test]
fn compare_favours_popular_state() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("cmp.json");
    run(
        &[
            "compare",
            "--set",
            "cache_size=2",
            "--set",
            "popularity.kind=explicit",
            "--set",
            "popularity.probs=[0.5,0.29,0.21]",
        ],
        None,
        &out,
    );
    let v = read_json(&out).unwrap();
    assert!(num(&v["delta"][0]) > 0.0);
    assert!(num(&v["hit_lru"]) > num(&v["hit_rr"]));
}

#[test]
fn invalid_inputs_fail_with_diagnostics() {
    for args in [
        vec![
            "states",
            "--set",
            "n_contents=3",
            "--set",
            "cache_size=2",
            "--set",
            "extra=1",
        ],
        vec!["states", "--set", "n_contents=3", "--set", "cache_size=4"],
        vec!["steady", "--set", "cache_size=2"],
        vec!["states", "--config", "/nonexistent/config.json"],
    ] {
        let o = bin().args(&args).output().unwrap();
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}
