//! Monte Carlo harness for the trend-count estimators.
//!
//! Data come from `X_t = X_{t−1} + αβ'X_{t−1} + ε_t`, `X_0 = 0`, with
//! `β = (I_{p−s}, 0)'`, `α = −aβ` and standard normal `ε_t`. The first
//! `p − s` coordinates are therefore AR(1) with coefficient `1 − a` and the
//! last `s` are independent random walks.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{default_k, kl_design, BasisMatrix};
use crate::cca::cca;
use crate::error::{Error, Result};
use crate::limit_law::LimitLawTables;
use crate::panel::{Sample, TimeSeriesPanel};
use crate::rng::{grid_stream, substream};
use crate::trend_count::{estimate_count, CountMethod};

/// Largest tolerated share of numerically failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub p: usize,
    pub s: usize,
    pub a: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.s > self.p {
            return Err(Error::InvalidArgument(format!(
                "need p >= 1 and 0 <= s <= p, got p={}, s={}",
                self.p, self.s
            )));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::InvalidArgument(format!("a={} outside (0,1]", self.a)));
        }
        if self.t < 2 {
            return Err(Error::InvalidArgument(format!("T={} below 2", self.t)));
        }
        Ok(())
    }
}

/// `x_1..x_T` from the DGP driven by `rng`; innovations are drawn
/// period by period.
pub fn simulate_path<R: Rng + ?Sized>(p: usize, s: usize, a: f64, t: usize, rng: &mut R) -> DMatrix<f64> {
    let r = p - s;
    let phi = 1.0 - a;
    let mut x = DMatrix::zeros(t, p);
    let mut prev = vec![0.0; p];
    for i in 0..t {
        for (j, v) in prev.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            *v = if j < r { phi * *v + e } else { *v + e };
            x[(i, j)] = *v;
        }
    }
    x
}

/// Panel with `X_0 = 0` in row 0 and `X_1..X_T` below it.
pub fn simulate_dgp(cfg: &DgpConfig) -> Result<TimeSeriesPanel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = simulate_path(cfg.p, cfg.s, cfg.a, cfg.t, &mut rng);
    let mut values = DMatrix::zeros(cfg.t + 1, cfg.p);
    values.rows_mut(1, cfg.t).copy_from(&x);
    TimeSeriesPanel::from_matrix(values).map(|p| p.with_source(format!("dgp:{cfg:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KPolicy {
    /// `⌈T^{3/4}⌉`.
    #[default]
    Default,
    Fixed(usize),
}

impl KPolicy {
    pub fn k_for(&self, t: usize) -> usize {
        match self {
            KPolicy::Default => default_k(t),
            KPolicy::Fixed(k) => *k,
        }
    }
}

/// One DGP design; the seed is supplied by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub p: usize,
    pub s: usize,
    pub a: f64,
    #[serde(rename = "T")]
    pub t: usize,
}

impl GridPoint {
    pub fn new(p: usize, s: usize, a: f64, t: usize) -> Self {
        Self { p, s, a, t }
    }

    fn config(&self, seed: u64) -> DgpConfig {
        DgpConfig {
            p: self.p,
            s: self.s,
            a: self.a,
            t: self.t,
            seed,
        }
    }
}

/// `s = ⌈hp⌉` for `h ∈ {0, ¼, ½, ¾, 1}`.
pub fn s_slots(p: usize) -> [usize; 5] {
    [0, p.div_ceil(4), p.div_ceil(2), (3 * p).div_ceil(4), p]
}

/// Every combination of `p`, `T = mp`, `a` and the five `s` slots, in the
/// row-major order of the reference tables.
pub fn design_grid(ps: &[usize], t_over_p: &[usize], a_values: &[f64]) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &p in ps {
        for &m in t_over_p {
            for s in s_slots(p) {
                for &a in a_values {
                    out.push(GridPoint::new(p, s, a, m * p));
                }
            }
        }
    }
    out
}

pub const DESIGN_A: [f64; 3] = [1.0, 0.75, 0.5];
pub const DESIGN_T_OVER_P: [usize; 3] = [10, 20, 30];
pub const DESK_P: [usize; 2] = [10, 20];
pub const FULL_P: [usize; 6] = [10, 20, 50, 100, 200, 300];

/// `p ∈ {10, 20}`; minutes of runtime at `N = 1000`.
pub fn desk_grid() -> Vec<GridPoint> {
    design_grid(&DESK_P, &DESIGN_T_OVER_P, &DESIGN_A)
}

/// The complete design, up to `p = 300`. Hours of runtime.
pub fn full_grid() -> Vec<GridPoint> {
    design_grid(&FULL_P, &DESIGN_T_OVER_P, &DESIGN_A)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub p: usize,
    pub s: usize,
    pub a: f64,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub method: CountMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub grid_point: CellKey,
    pub freq_correct: f64,
    pub mae: f64,
    /// Successful replications.
    pub n_reps: usize,
    pub mc_se: f64,
    pub n_failed: usize,
    /// `counts[k]` replications returned `ŝ = k`.
    pub counts: Vec<usize>,
}

impl ExperimentResult {
    fn from_counts(grid_point: CellKey, counts: Vec<usize>, n_failed: usize) -> Self {
        let n: usize = counts.iter().sum();
        let nf = n.max(1) as f64;
        let s = grid_point.s;
        let f = counts.get(s).copied().unwrap_or(0) as f64 / nf;
        let mae = counts
            .iter()
            .enumerate()
            .map(|(k, c)| k.abs_diff(s) as f64 * *c as f64)
            .sum::<f64>()
            / nf;
        Self {
            grid_point,
            freq_correct: f,
            mae,
            n_reps: n,
            mc_se: (f * (1.0 - f) / nf).sqrt(),
            n_failed,
            counts,
        }
    }
}

/// Harness options.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub n_reps: usize,
    pub k_policy: KPolicy,
    pub seed: u64,
}

/// Trend-count estimates of one replication, one per method.
fn replicate(
    point: &GridPoint,
    basis: &BasisMatrix,
    methods: &[CountMethod],
    tables: Option<&LimitLawTables>,
    seed: u64,
    stream: u64,
) -> Result<Vec<usize>> {
    let mut rng = substream(seed, stream);
    let x = simulate_path(point.p, point.s, point.a, point.t, &mut rng);
    let res = cca(&x, basis)?;
    let lambda = res.eigenvalue_vec();
    methods
        .iter()
        .map(|m| estimate_count(&lambda, point.t, basis.k(), *m, tables).map(|e| e.s_hat))
        .collect()
}

/// Runs every grid point with every method; replication `i` of point `g`
/// uses the random substream `(seed, g, i)`. Results of each point are
/// appended to `sink` as JSON lines as soon as they are ready.
pub fn run_grid(
    grid: &[GridPoint],
    methods: &[CountMethod],
    opts: &RunOptions,
    tables: Option<&LimitLawTables>,
    mut sink: Option<&mut dyn Write>,
) -> Result<Vec<ExperimentResult>> {
    if methods.is_empty() || opts.n_reps == 0 {
        return Err(Error::InvalidArgument("need at least one method and one replication".into()));
    }
    if tables.is_none() && methods.iter().any(CountMethod::needs_tables) {
        return Err(Error::Table("sequential tests need critical value tables".into()));
    }
    let mut out = Vec::with_capacity(grid.len() * methods.len());
    for (g, point) in grid.iter().enumerate() {
        point.config(opts.seed).validate()?;
        let k = opts.k_policy.k_for(point.t);
        let basis = kl_design(k, point.t)?;
        let reps: Vec<Result<Vec<usize>>> = (0..opts.n_reps as u64)
            .into_par_iter()
            .map(|i| replicate(point, &basis, methods, tables, opts.seed, grid_stream(g as u64, i)))
            .collect();
        let mut counts = vec![vec![0usize; point.p + 1]; methods.len()];
        let mut failed = 0;
        let mut first_failure = None;
        for rep in reps {
            match rep {
                Ok(s_hats) => {
                    for (m, s) in s_hats.into_iter().enumerate() {
                        counts[m][s] += 1;
                    }
                }
                Err(e) if e.is_numerical() => {
                    failed += 1;
                    first_failure.get_or_insert_with(|| e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        if failed as f64 > MAX_FAILURE_RATE * opts.n_reps as f64 {
            return Err(Error::Replications {
                failed,
                total: opts.n_reps,
                first: first_failure.unwrap_or_default(),
            });
        }
        if failed > 0 {
            log::warn!("{failed} of {} replications failed at {point:?}", opts.n_reps);
        }
        for (m, c) in methods.iter().zip(counts) {
            let key = CellKey {
                p: point.p,
                s: point.s,
                a: point.a,
                t: point.t,
                k,
                method: *m,
            };
            let res = ExperimentResult::from_counts(key, c, failed);
            if let Some(w) = sink.as_deref_mut() {
                serde_json::to_writer(&mut *w, &res)?;
                writeln!(w).map_err(|e| Error::io("<results stream>", e))?;
                w.flush().map_err(|e| Error::io("<results stream>", e))?;
            }
            out.push(res);
        }
        log::info!(
            "grid point {}/{}: p={} s={} a={} T={} K={k}",
            g + 1,
            grid.len(),
            point.p,
            point.s,
            point.a,
            point.t
        );
    }
    Ok(out)
}

/// Merges results that share a grid point, adding up their replications.
/// Output follows the order of first appearance.
pub fn pool(results: &[ExperimentResult]) -> Vec<ExperimentResult> {
    let mut merged: Vec<(CellKey, Vec<usize>, usize)> = Vec::new();
    for r in results {
        match merged.iter_mut().find(|(k, ..)| *k == r.grid_point) {
            Some((_, counts, failed)) => {
                if counts.len() < r.counts.len() {
                    counts.resize(r.counts.len(), 0);
                }
                for (c, x) in counts.iter_mut().zip(&r.counts) {
                    *c += x;
                }
                *failed += r.n_failed;
            }
            None => merged.push((r.grid_point.clone(), r.counts.clone(), r.n_failed)),
        }
    }
    merged
        .into_iter()
        .map(|(k, c, f)| ExperimentResult::from_counts(k, c, f))
        .collect()
}

pub fn method_name(m: &CountMethod) -> String {
    match m {
        CountMethod::MaxGap => "max-gap".into(),
        CountMethod::F1 => "f1".into(),
        CountMethod::F2 { include_zero } => format!("f2{}", if *include_zero { "-0" } else { "" }),
        CountMethod::F3 { include_zero } => format!("f3{}", if *include_zero { "-0" } else { "" }),
        CountMethod::SeqF1 { eta } => format!("seq-F1@{eta}"),
        CountMethod::SeqFinf { eta } => format!("seq-Finf@{eta}"),
    }
}

/// Writes `results_long.csv`, `results.json` and, per method, wide tables
/// `freq_<method>.csv` and `mae_<method>.csv` with rows `(p, T/p)` and
/// columns `(s, a)`. Returns the written paths.
pub fn emit_tables(results: &[ExperimentResult], dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no results to tabulate".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pooled = pool(results);
    let mut written = Vec::new();

    let long = dir.join("results_long.csv");
    let mut w = csv::Writer::from_path(&long)?;
    w.write_record([
        "p", "T", "T_over_p", "s", "a", "K", "method", "n_reps", "n_failed", "freq_correct", "mc_se", "mae",
    ])?;
    for r in &pooled {
        let g = &r.grid_point;
        w.write_record([
            g.p.to_string(),
            g.t.to_string(),
            format!("{}", g.t as f64 / g.p as f64),
            g.s.to_string(),
            g.a.to_string(),
            g.k.to_string(),
            method_name(&g.method),
            r.n_reps.to_string(),
            r.n_failed.to_string(),
            r.freq_correct.to_string(),
            r.mc_se.to_string(),
            r.mae.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&long, e))?;
    written.push(long);

    let json = dir.join("results.json");
    let f = File::create(&json).map_err(|e| Error::io(&json, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &pooled)?;
    written.push(json);

    let mut by_method: BTreeMap<String, Vec<&ExperimentResult>> = BTreeMap::new();
    for r in &pooled {
        by_method.entry(method_name(&r.grid_point.method)).or_default().push(r);
    }
    for (name, rows) in by_method {
        let file_stem = name.replace('@', "-eta");
        written.push(write_wide(&rows, &dir.join(format!("freq_{file_stem}.csv")), true)?);
        written.push(write_wide(&rows, &dir.join(format!("mae_{file_stem}.csv")), false)?);
    }
    Ok(written)
}

fn write_wide(rows: &[&ExperimentResult], path: &Path, freq: bool) -> Result<PathBuf> {
    let mut row_keys: Vec<(usize, usize)> = Vec::new();
    let mut col_keys: Vec<(usize, String)> = Vec::new();
    let mut cells: BTreeMap<((usize, usize), (usize, String)), &ExperimentResult> = BTreeMap::new();
    for r in rows {
        let g = &r.grid_point;
        let rk = (g.p, g.t);
        let ck = (g.s, g.a.to_string());
        if !row_keys.contains(&rk) {
            row_keys.push(rk);
        }
        if !col_keys.contains(&ck) {
            col_keys.push(ck.clone());
        }
        cells.insert((rk, ck), r);
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["p".to_string(), "T_over_p".to_string()];
    for (s, a) in &col_keys {
        header.push(format!("s={s},a={a}"));
        if freq {
            header.push(format!("se(s={s},a={a})"));
        }
    }
    w.write_record(&header)?;
    for rk in &row_keys {
        let mut rec = vec![rk.0.to_string(), format!("{}", rk.1 as f64 / rk.0 as f64)];
        for ck in &col_keys {
            match cells.get(&(*rk, ck.clone())) {
                Some(r) if freq => {
                    rec.push(format!("{:.4}", r.freq_correct));
                    rec.push(format!("{:.4}", r.mc_se));
                }
                Some(r) => rec.push(format!("{:.4}", r.mae)),
                None if freq => rec.extend([String::new(), String::new()]),
                None => rec.push(String::new()),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Convenience wrapper: data of one replication as a [`Sample`].
pub fn simulate_sample(point: &GridPoint, seed: u64, stream: u64) -> Sample {
    let mut rng = substream(seed, stream);
    Sample::from_zero_start(simulate_path(point.p, point.s, point.a, point.t, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursion_special_cases() {
        let cfg = DgpConfig { p: 3, s: 0, a: 1.0, t: 50, seed: 5 };
        let white = simulate_dgp(&cfg).unwrap();
        let cfg_rw = DgpConfig { s: 3, ..cfg };
        let walk = simulate_dgp(&cfg_rw).unwrap();
        // Same seed, same innovations: the walk is the cumulative sum.
        assert_eq!(white.values().row(0).iter().sum::<f64>(), 0.0);
        for j in 0..3 {
            let mut acc = 0.0;
            for i in 1..=50 {
                acc += white.values()[(i, j)];
                assert!((walk.values()[(i, j)] - acc).abs() < 1e-12);
            }
        }
        assert_eq!(white.sample_size(), 50);
    }

    #[test]
    fn reproducible() {
        let cfg = DgpConfig { p: 4, s: 2, a: 0.5, t: 30, seed: 9 };
        assert_eq!(simulate_dgp(&cfg).unwrap().values(), simulate_dgp(&cfg).unwrap().values());
        assert!(DgpConfig { a: 0.0, ..cfg }.validate().is_err());
        assert!(DgpConfig { s: 5, ..cfg }.validate().is_err());
    }

    #[test]
    fn slots_and_grid() {
        assert_eq!(s_slots(10), [0, 3, 5, 8, 10]);
        assert_eq!(s_slots(20), [0, 5, 10, 15, 20]);
        assert_eq!(desk_grid().len(), 90);
    }

    #[test]
    fn grid_is_deterministic_and_consistent() {
        let grid = [GridPoint::new(4, 2, 1.0, 80)];
        let opts = RunOptions { n_reps: 40, k_policy: KPolicy::Default, seed: 3 };
        let mut buf = Vec::new();
        let a = run_grid(&grid, &[CountMethod::MaxGap], &opts, None, Some(&mut buf)).unwrap();
        let b = run_grid(&grid, &[CountMethod::MaxGap], &opts, None, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
        let r = &a[0];
        assert_eq!(r.counts.iter().sum::<usize>(), 40);
        let wrong = r.counts.iter().enumerate().filter(|(k, _)| *k != 2).map(|(_, c)| c).sum::<usize>();
        assert_eq!(r.freq_correct + wrong as f64 / 40.0, 1.0);
        assert!((r.mc_se - (r.freq_correct * (1.0 - r.freq_correct) / 40.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pooling_and_emission() {
        let grid = [GridPoint::new(3, 1, 1.0, 60)];
        let opts = RunOptions { n_reps: 10, k_policy: KPolicy::Fixed(12), seed: 1 };
        let a = run_grid(&grid, &[CountMethod::MaxGap], &opts, None, None).unwrap();
        let pooled = pool(&[a[0].clone(), a[0].clone()]);
        assert_eq!(pooled.len(), 1);
        assert_eq!(pooled[0].n_reps, 20);
        assert_eq!(pooled[0].freq_correct, a[0].freq_correct);

        let dir = tempfile::tempdir().unwrap();
        let files = emit_tables(&a, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let wide = fs::read_to_string(dir.path().join("freq_max-gap.csv")).unwrap();
        assert_eq!(wide.lines().count(), 2);
        assert!(emit_tables(&[], dir.path()).is_err());
    }

    #[test]
    fn iid_panel_has_small_leading_eigenvalue() {
        let point = GridPoint::new(10, 0, 1.0, 200);
        let basis = kl_design(default_k(200), 200).unwrap();
        let mut l1: Vec<f64> = (0..200)
            .into_par_iter()
            .map(|i| cca(&simulate_sample(&point, 42, i).x, &basis).unwrap().eigenvalues[0])
            .collect();
        l1.sort_by(f64::total_cmp);
        assert!(l1[100] < 0.5, "median λ₁ = {}", l1[100]);
    }
}
