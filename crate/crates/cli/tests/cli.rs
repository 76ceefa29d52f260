use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_TABLES: [&str; 4] = ["--table-reps", "400", "--table-steps", "300"];

fn kltrend(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kltrend"))
        .args(args)
        .env_remove("KLTREND_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn simulate(dir: &Path, p: usize, s: usize, t: usize) -> String {
    let path = dir.join(format!("sim_p{p}_s{s}_t{t}.csv"));
    let path_str = path.to_str().unwrap().to_string();
    let out = kltrend(&[
        "simulate", "--p", &p.to_string(), "--s", &s.to_string(), "--a", "0.5",
        "--T", &t.to_string(), "--seed", "5", "--out", &path_str,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path_str
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

#[test]
fn simulate_writes_x0_row_of_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), 3, 1, 50);
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3"));
    assert_eq!(lines.next(), Some("0,0,0,0"));
    assert_eq!(text.lines().count(), 52);
}

#[test]
fn analyze_reports_default_k_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 20, 5, 667);
    let cache = dir.path().join("cache");
    let run = |cache: &Path| {
        let mut args = vec!["analyze", &data, "--time-column", "t", "--methods", "maxgap,f2", "--cache-dir"];
        args.push(cache.to_str().unwrap());
        args.extend(SMALL_TABLES);
        kltrend(&args)
    };
    let first = run(&cache);
    let report = json(&first);
    assert_eq!(report["K"], 132);
    assert_eq!(report["input"]["T"], 667);
    assert_eq!(report["input"]["p"], 20);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["eigenvalues"].as_array().unwrap().len(), 20);
    assert!(report["tables"]["hash"].as_str().unwrap().len() == 64);

    let cached = run(&cache);
    assert_eq!(first.stdout, cached.stdout);
    let fresh = run(&dir.path().join("other-cache"));
    assert_eq!(first.stdout, fresh.stdout);
}

#[test]
fn emit_plots_writes_three_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 4, 2, 300);
    let plots = dir.path().join("plots");
    let cache = dir.path().join("cache");
    let mut args = vec![
        "analyze", &data, "--time-column", "t", "--s", "2",
        "--cache-dir", cache.to_str().unwrap(), "--emit-plots", plots.to_str().unwrap(),
    ];
    args.extend(SMALL_TABLES);
    let report = json(&kltrend(&args));
    assert_eq!(report["s"], 2);
    assert!(report["loadings"]["icc"]["converged"].as_bool().unwrap());

    let eig = fs::read_to_string(plots.join("eigenvalues.csv")).unwrap();
    assert!(eig.starts_with("index,eigenvalue\n1,"));
    assert_eq!(eig.lines().count(), 5);
    let gaps = fs::read_to_string(plots.join("gaps.csv")).unwrap();
    assert!(gaps.starts_with("i,gap\n0,"));
    assert_eq!(gaps.lines().count(), 6);
    let stripe = fs::read_to_string(plots.join("stripe.csv")).unwrap();
    assert!(stripe.starts_with("logK,logStat,stripeLow,stripeHigh\n"));
    assert!(stripe.lines().count() >= 2);
}

#[test]
fn select_restricts_the_panel() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 5, 2, 300);
    let report = json(&kltrend(&["count", &data, "--time-column", "t", "--select", "2-4"]));
    assert_eq!(report["p"], 3);
    let report = json(&kltrend(&["count", &data, "--time-column", "t", "--aggregate", "1+2,3,4+5"]));
    assert_eq!(report["p"], 3);
}

#[test]
fn wald_accepts_rows_or_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 4, 2, 400);
    let r_rows = dir.path().join("r_rows.csv");
    let r_cols = dir.path().join("r_cols.csv");
    let h = dir.path().join("h.csv");
    fs::write(&r_rows, "1,0,0,0\n0,0,1,0\n").unwrap();
    fs::write(&r_cols, "1,0\n0,0\n0,1\n0,0\n").unwrap();
    fs::write(&h, "0,0\n").unwrap();
    let run = |r: &Path| {
        json(&kltrend(&[
            "wald", &data, "--time-column", "t", "--s", "2", "--b", "3,4",
            "--R", r.to_str().unwrap(), "--h", h.to_str().unwrap(),
        ]))
    };
    let a = run(&r_rows);
    let b = run(&r_cols);
    assert_eq!(a["wald"]["dof"], 2);
    assert_eq!(a["wald"]["Q"], b["wald"]["Q"]);
    let p = a["wald"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn missing_table_with_no_simulate_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 3, 1, 200);
    let cache = dir.path().join("empty");
    let out = kltrend(&[
        "count", &data, "--time-column", "t", "--method", "seq-f1",
        "--no-simulate", "--cache-dir", cache.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[tables]"));
}

#[test]
fn critval_list_and_build() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cache_str = cache.to_str().unwrap();
    let out = kltrend(&["critval", "--list", "--cache-dir", cache_str]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());

    let built = json(&kltrend(&[
        "critval", "--s-max", "3", "--eta", "0.05", "--reps", "300", "--steps", "200",
        "--cache-dir", cache_str,
    ]));
    assert_eq!(built["summary"]["s_max"], "3");
    let out = kltrend(&["critval", "--list", "--cache-dir", cache_str]);
    let listing = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listing.lines().count(), 1);
    assert!(listing.contains("s_max=3"));
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(code(&kltrend(&["count", "--bogus"])), 2);
    assert_eq!(code(&kltrend(&["frobnicate"])), 2);
    assert_eq!(code(&kltrend(&["count", "/nonexistent/panel.csv"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,oops\n").unwrap();
    let out = kltrend(&["count", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[ingest]"));
}

#[test]
fn singular_panel_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    let mut text = String::from("a,b\n");
    for i in 0..200 {
        text.push_str(&format!("{},{}\n", (i as f64).sqrt(), 2.0 * (i as f64).sqrt()));
    }
    fs::write(&path, text).unwrap();
    let out = kltrend(&["count", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[cca]"));
}

#[test]
fn mc_streams_and_tabulates() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    fs::write(&grid, r#"[{"p":4,"s":1,"a":0.5,"T":160},{"p":4,"s":2,"a":0.5,"T":160}]"#).unwrap();
    let out_dir = dir.path().join("mc");
    let out = kltrend(&[
        "mc", "--grid", grid.to_str().unwrap(), "--methods", "maxgap,f2",
        "--reps", "20", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stream = fs::read_to_string(out_dir.join("results.jsonl")).unwrap();
    assert_eq!(stream.lines().count(), 4);
    for f in ["results_long.csv", "results.json", "freq_max-gap.csv", "mae_f2.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    assert_eq!(code(&kltrend(&["mc", "--out", out_dir.to_str().unwrap()])), 2);
}
