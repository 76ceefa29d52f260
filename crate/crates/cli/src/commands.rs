use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use kltrend::basis::{default_k, k_grid, kl_design, BasisMatrix};
use kltrend::cca::{cca, CcaResult, ConditionReport};
use kltrend::limit_law::{
    build_table, describe, LimitLawTables, Norm, StripeCenter, TableCache, TableConfig,
};
use kltrend::loadings::{
    icc, lrv, one_step, select_identification, wald, IdentificationPair, IdentificationSearch,
    LoadingEstimate, LrvEstimate, WaldResult,
};
use kltrend::mc::{self, GridPoint, KPolicy, RunOptions};
use kltrend::panel::{
    apply_selection, ingest_csv, preprocess, CsvSchema, PreprocessOptions, Provenance, Sample,
    SelectionMatrix, TimeSeriesPanel,
};
use kltrend::trend_count::{
    estimate_count, identification_check_at, misspec_diagnostic, sequential_select_grid,
    CountMethod, IdentificationDecision, MisspecDiagnostic, TrendCountEstimate,
};
use kltrend::{Error, Result};

use crate::args::{parse_columns, parse_groups, InputArgs, MethodArg, TableArgs};

pub const SCHEMA_VERSION: u32 = 1;

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T> {
        self.map_err(|error| Failure { stage, error })
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn load_panel(args: &InputArgs) -> CmdResult<TimeSeriesPanel> {
    let schema = CsvSchema {
        time_column: args.time_column.clone(),
        columns: args.columns.clone(),
    };
    let raw = ingest_csv(&args.input, &schema).stage("ingest")?;
    let opts = PreprocessOptions {
        log: args.log,
        normalize_start: args.normalize_start,
        init_mode: args.init_mode.into(),
    };
    let panel = preprocess(&raw, &opts).stage("preprocess")?;
    let p = panel.dim();
    let selection = if let Some(spec) = &args.select {
        let cols = parse_columns(spec, panel.labels()).stage("select")?;
        Some(SelectionMatrix::subset(p, &cols).stage("select")?)
    } else if let Some(spec) = &args.aggregate {
        let groups = parse_groups(spec, panel.labels()).stage("aggregate")?;
        Some(SelectionMatrix::aggregate(p, &groups).stage("aggregate")?)
    } else {
        None
    };
    match selection {
        Some(sel) => apply_selection(&panel, &sel).stage("select"),
        None => Ok(panel),
    }
}

pub struct Prepared {
    pub panel: TimeSeriesPanel,
    pub sample: Sample,
    pub basis: BasisMatrix,
    pub cca: CcaResult,
}

pub fn prepare(args: &InputArgs) -> CmdResult<Prepared> {
    let panel = load_panel(args)?;
    let sample = panel.sample();
    let t = sample.len();
    let k = args.k.unwrap_or_else(|| default_k(t));
    let basis = kl_design(k, t).stage("basis")?;
    let cca = cca(&sample.x, &basis).stage("cca")?;
    Ok(Prepared {
        panel,
        sample,
        basis,
        cca,
    })
}

pub fn cache_for(args: &TableArgs) -> TableCache {
    match &args.cache_dir {
        Some(dir) => TableCache::new(dir),
        None => TableCache::from_env(),
    }
}

/// Cached tables covering `s_max` and `etas`, simulated on demand unless
/// `--no-simulate` is set.
pub fn acquire_tables(args: &TableArgs, s_max: usize, etas: &[f64]) -> CmdResult<LimitLawTables> {
    let cache = cache_for(args);
    if let Some(t) = cache.lookup_covering(s_max, etas) {
        return Ok(t);
    }
    if args.no_simulate {
        return Err(Error::Table(format!(
            "no cached critical values for s <= {s_max} at eta {etas:?} in {}; run `kltrend critval` first",
            cache.dir().display()
        )))
        .stage("tables");
    }
    let cfg = TableConfig {
        s_max,
        etas: etas.to_vec(),
        n_steps: args.table_steps,
        n_reps: args.table_reps,
        seed: args.seed,
    };
    log::info!(
        "simulating critical values for s <= {s_max} ({} replications, {} steps)",
        cfg.n_reps,
        cfg.n_steps
    );
    cache.get_or_build(&cfg).stage("tables")
}

#[derive(Debug, Serialize)]
pub struct TableInfo {
    pub hash: String,
    pub config: TableConfig,
}

impl TableInfo {
    fn of(t: &LimitLawTables) -> Self {
        Self {
            hash: t.hash(),
            config: t.config.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CmdResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(Error::from)
        .stage("output")?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)).stage("output"),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| io_err(Path::new("<stdout>"), e))
                .stage("output")
        }
    }
}

fn read_numbers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            line.split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: i + 1,
                        column: 0,
                        label: path.display().to_string(),
                        value: v.trim().to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

/// Reads a header-less numeric CSV as a matrix.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_numbers(path)?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{} is not a rectangular matrix", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Reads a restriction matrix for `vec(ψ_*)` of length `n`, stored either
/// as `n×m` or with one restriction per row.
pub fn read_restrictions(path: &Path, n: usize) -> Result<DMatrix<f64>> {
    let r = read_matrix(path)?;
    if r.nrows() != n && r.ncols() == n {
        Ok(r.transpose())
    } else {
        Ok(r)
    }
}

/// Reads numbers separated by commas or newlines.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    Ok(read_numbers(path)?.into_iter().flatten().collect())
}

// ---------------------------------------------------------------- count

#[derive(Debug, Serialize)]
pub struct CountReport {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: usize,
    pub eigenvalues: Vec<f64>,
    pub estimate: TrendCountEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tables: Option<TableInfo>,
}

pub struct CountOptions {
    pub method: MethodArg,
    pub eta: f64,
    pub include_zero: bool,
    pub grid_j: usize,
    pub grid_m: usize,
}

pub fn count(input: &InputArgs, tables: &TableArgs, opts: &CountOptions) -> CmdResult<CountReport> {
    let prep = prepare(input)?;
    let method = opts.method.to_method(opts.eta, opts.include_zero);
    let lambda = prep.cca.eigenvalue_vec();
    let p = lambda.len();
    let t = prep.sample.len();
    let k = prep.basis.k();
    let table = if method.needs_tables() {
        Some(acquire_tables(tables, p, &[opts.eta])?)
    } else {
        None
    };
    let estimate = if opts.grid_m > 0 {
        let norm = match method {
            CountMethod::SeqF1 { .. } => Norm::One,
            CountMethod::SeqFinf { .. } => Norm::Infinity,
            _ => {
                return Err(Error::InvalidArgument(
                    "--grid-m applies to the sequential tests only".into(),
                ))
                .stage("count")
            }
        };
        let grid = k_grid(k, opts.grid_j, opts.grid_m).stage("count")?;
        let mut spectra = vec![(k, lambda.clone())];
        for &ki in &grid.values[1..] {
            let b = kl_design(ki, t).stage("basis")?;
            spectra.push((ki, cca(&prep.sample.x, &b).stage("cca")?.eigenvalue_vec()));
        }
        sequential_select_grid(&spectra, table.as_ref().unwrap(), norm, opts.eta).stage("count")?
    } else {
        estimate_count(&lambda, t, k, method, table.as_ref()).stage("count")?
    };
    Ok(CountReport {
        t,
        k,
        p,
        eigenvalues: lambda,
        estimate,
        tables: table.as_ref().map(TableInfo::of),
    })
}

// ------------------------------------------------------------- loadings

pub struct LoadingOptions {
    pub s: Option<usize>,
    pub b: Option<String>,
    pub c: Option<String>,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Serialize)]
pub struct IdentificationInfo {
    /// Labels of the series whose coordinate vectors form `b`, when `b`
    /// is made of coordinate vectors.
    pub b_columns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<IdentificationDecision>,
    /// Present when `b` came from the greedy search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<IdentificationSearch>,
}

#[derive(Debug, Serialize)]
pub struct CoefficientTable {
    /// `ψ̂_* = c̄'ψ̂`, r×s.
    pub estimate: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    /// Two-sided p-values of `H_0: entry = 0`.
    pub p_value: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct LoadingsReport {
    pub s: usize,
    pub identification: IdentificationInfo,
    pub one_step: LoadingEstimate,
    pub icc: LoadingEstimate,
    pub lrv: LrvEstimate,
    pub psi_star: CoefficientTable,
}

fn coordinate_pair(
    p: usize,
    labels: &[String],
    b: &str,
    c: Option<&str>,
) -> Result<(IdentificationPair, Vec<usize>)> {
    let b_cols = parse_columns(b, labels)?;
    let pair = match c {
        None => IdentificationPair::coordinates(p, &b_cols)?,
        Some(c) => {
            let c_cols = parse_columns(c, labels)?;
            let pick = |cols: &[usize]| DMatrix::from_fn(p, cols.len(), |i, k| f64::from(u8::from(cols[k] == i)));
            IdentificationPair::new(pick(&b_cols), pick(&c_cols))?
        }
    };
    Ok((pair, b_cols))
}

fn coefficient_table(
    est: &LoadingEstimate,
    l: &LrvEstimate,
    sample: &Sample,
) -> Result<CoefficientTable> {
    let (r, s) = est.psi_star.shape();
    let mut se = DMatrix::zeros(r, s);
    let mut pv = DMatrix::zeros(r, s);
    for j in 0..s {
        for i in 0..r {
            let mut rm = DMatrix::zeros(r * s, 1);
            rm[(j * r + i, 0)] = 1.0;
            let w = wald(est, l, sample, &rm, &[0.0])?;
            let v = est.psi_star[(i, j)];
            se[(i, j)] = if w.q > 0.0 { v.abs() / w.q.sqrt() } else { f64::NAN };
            pv[(i, j)] = w.p_value;
        }
    }
    let rows = kltrend::linalg::to_rows;
    Ok(CoefficientTable {
        estimate: rows(&est.psi_star),
        std_error: rows(&se),
        p_value: rows(&pv),
    })
}

pub fn estimate_loadings(
    prep: &Prepared,
    s: usize,
    opts: &LoadingOptions,
    method: CountMethod,
    tables: Option<&LimitLawTables>,
) -> CmdResult<LoadingsReport> {
    let p = prep.sample.dim();
    if s == 0 || s >= p {
        return Err(Error::InvalidArgument(format!(
            "loadings need 0 < s < p, got s={s}, p={p}"
        )))
        .stage("identification");
    }
    let labels = prep.panel.labels();
    let (pair, info) = match &opts.b {
        Some(b) => {
            let (pair, cols) = coordinate_pair(p, labels, b, opts.c.as_deref()).stage("identification")?;
            let check = identification_check_at(&prep.sample, &pair.b, &prep.basis, method, tables, s)
                .stage("identification")?;
            if !check.accept {
                log::warn!(
                    "identification check rejects b: {} trends in b'x against {} in x",
                    check.s_restricted,
                    check.s_full
                );
            }
            let info = IdentificationInfo {
                b_columns: cols.iter().map(|&i| labels[i].clone()).collect(),
                check: Some(check),
                search: None,
            };
            (pair, info)
        }
        None => {
            let search = select_identification(&prep.sample, s, &prep.basis, method, tables)
                .stage("identification")?;
            let check =
                identification_check_at(&prep.sample, &search.pair.b, &prep.basis, method, tables, s)
                    .stage("identification")?;
            let info = IdentificationInfo {
                b_columns: search.columns.iter().map(|&i| labels[i].clone()).collect(),
                check: Some(check),
                search: Some(search.clone()),
            };
            (search.pair, info)
        }
    };
    let first = one_step(&prep.sample, &prep.basis, &prep.cca, s, &pair).stage("loadings")?;
    let iterated = icc(&prep.sample, &prep.basis, s, &pair, opts.tol, opts.max_iter).stage("loadings")?;
    let l = lrv(&prep.sample, &prep.basis, &iterated.psi_hat, &iterated.beta_hat).stage("lrv")?;
    let psi_star = coefficient_table(&iterated, &l, &prep.sample).stage("wald")?;
    Ok(LoadingsReport {
        s,
        identification: info,
        one_step: first,
        icc: iterated,
        lrv: l,
        psi_star,
    })
}

fn resolve_s(prep: &Prepared, s: Option<usize>) -> CmdResult<usize> {
    match s {
        Some(s) => Ok(s),
        None => Ok(kltrend::trend_count::max_gap(&prep.cca.eigenvalue_vec())
            .stage("count")?
            .s_hat),
    }
}

pub fn loadings(input: &InputArgs, opts: &LoadingOptions) -> CmdResult<LoadingsReport> {
    let prep = prepare(input)?;
    let s = resolve_s(&prep, opts.s)?;
    estimate_loadings(&prep, s, opts, CountMethod::MaxGap, None)
}

#[derive(Debug, Serialize)]
pub struct WaldReport {
    pub loadings: LoadingsReport,
    pub wald: WaldResult,
}

pub fn wald_cmd(
    input: &InputArgs,
    opts: &LoadingOptions,
    r_path: &Path,
    h_path: &Path,
) -> CmdResult<WaldReport> {
    let prep = prepare(input)?;
    let s = resolve_s(&prep, opts.s)?;
    let report = estimate_loadings(&prep, s, opts, CountMethod::MaxGap, None)?;
    let r = read_restrictions(r_path, report.icc.psi_star.len()).stage("wald")?;
    let h = read_vector(h_path).stage("wald")?;
    let w = wald(&report.icc, &report.lrv, &prep.sample, &r, &h).stage("wald")?;
    Ok(WaldReport {
        loadings: report,
        wald: w,
    })
}

// -------------------------------------------------------------- misspec

pub struct MisspecOptions {
    pub s: usize,
    pub j: usize,
    pub m: usize,
    pub norm: Norm,
    pub eta: f64,
    pub center: StripeCenter,
}

#[derive(Debug, Serialize)]
pub struct MisspecReport {
    pub diagnostic: MisspecDiagnostic,
    pub tables: TableInfo,
}

fn run_misspec(
    sample: &Sample,
    k: usize,
    opts: &MisspecOptions,
    tables: &LimitLawTables,
) -> Result<MisspecDiagnostic> {
    let grid = k_grid(k, opts.j, opts.m)?;
    misspec_diagnostic(sample, opts.s, &grid, opts.norm, tables, opts.eta, opts.center)
}

pub fn misspec(input: &InputArgs, targs: &TableArgs, opts: &MisspecOptions, csv_out: Option<&Path>) -> CmdResult<MisspecReport> {
    let panel = load_panel(input)?;
    let sample = panel.sample();
    let k = input.k.unwrap_or_else(|| default_k(sample.len()));
    let tables = acquire_tables(targs, opts.s.max(1), &[opts.eta])?;
    let diagnostic = run_misspec(&sample, k, opts, &tables).stage("misspec")?;
    if let Some(path) = csv_out {
        write_stripe_csv(&diagnostic, path).stage("output")?;
    }
    Ok(MisspecReport {
        diagnostic,
        tables: TableInfo::of(&tables),
    })
}

/// `logK,logStat,stripeLow,stripeHigh`; the stripe is the band of
/// `log ‖π²τ‖_n` implied by `log(Kπ²τ)` lying within `δ` of its center.
pub fn write_stripe_csv(d: &MisspecDiagnostic, path: &Path) -> Result<()> {
    let center: Vec<f64> = d.stripe_center.iter().map(|c| c.exp()).collect();
    let level = kltrend::trend_count::vector_norm(&center, d.norm).ln();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["logK", "logStat", "stripeLow", "stripeHigh"])?;
    for (log_k, log_stat) in &d.log_points {
        let mid = level - log_k;
        w.write_record([
            log_k.to_string(),
            log_stat.to_string(),
            (mid - d.stripe_delta).to_string(),
            (mid + d.stripe_delta).to_string(),
        ])?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

// -------------------------------------------------------------- analyze

pub struct AnalyzeOptions {
    pub methods: Vec<MethodArg>,
    pub eta: f64,
    pub include_zero: bool,
    pub s: Option<usize>,
    pub loadings: LoadingOptions,
    pub misspec_j: usize,
    pub misspec_m: usize,
    pub norm: Norm,
    pub center: StripeCenter,
    pub r: Option<PathBuf>,
    pub h: Option<PathBuf>,
    pub emit_plots: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct InputInfo {
    pub provenance: Provenance,
    pub labels: Vec<String>,
    #[serde(rename = "T")]
    pub t: usize,
    pub p: usize,
}

#[derive(Debug, Serialize)]
pub struct CountEntry {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<TrendCountEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub seed: u64,
    pub input: InputInfo,
    #[serde(rename = "K")]
    pub k: usize,
    pub eigenvalues: Vec<f64>,
    pub condition: ConditionReport,
    pub counts: Vec<CountEntry>,
    /// Trend count used downstream.
    pub s: usize,
    pub s_source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loadings: Option<LoadingsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wald: Option<WaldResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub misspec: Option<MisspecDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tables: Option<TableInfo>,
}

pub fn analyze(input: &InputArgs, targs: &TableArgs, opts: &AnalyzeOptions) -> CmdResult<AnalysisReport> {
    let prep = prepare(input)?;
    let lambda = prep.cca.eigenvalue_vec();
    let p = lambda.len();
    let t = prep.sample.len();
    let k = prep.basis.k();
    let methods: Vec<CountMethod> = opts
        .methods
        .iter()
        .map(|m| m.to_method(opts.eta, opts.include_zero))
        .collect();
    let tables = if methods.iter().any(CountMethod::needs_tables) {
        Some(acquire_tables(targs, p, &[opts.eta])?)
    } else {
        None
    };

    let mut counts = Vec::new();
    for m in &methods {
        let entry = match estimate_count(&lambda, t, k, *m, tables.as_ref()) {
            Ok(e) => CountEntry {
                method: mc::method_name(m),
                estimate: Some(e),
                error: None,
            },
            Err(Error::InvalidArgument(msg)) => CountEntry {
                method: mc::method_name(m),
                estimate: None,
                error: Some(msg),
            },
            Err(e) => return Err(Failure { stage: "count", error: e }),
        };
        counts.push(entry);
    }
    let (s, s_source) = match opts.s {
        Some(s) => (s, "user".to_string()),
        None => {
            let primary = methods.first().copied().unwrap_or(CountMethod::MaxGap);
            let est = estimate_count(&lambda, t, k, primary, tables.as_ref()).stage("count")?;
            (est.s_hat, mc::method_name(&primary))
        }
    };
    if s > p {
        return Err(Error::InvalidArgument(format!("s={s} exceeds p={p}"))).stage("count");
    }

    let loadings = if s > 0 && s < p {
        Some(estimate_loadings(&prep, s, &opts.loadings, CountMethod::MaxGap, None)?)
    } else {
        None
    };
    let wald_result = match (&opts.r, &opts.h, &loadings) {
        (Some(r), Some(h), Some(l)) => {
            let r = read_restrictions(r, l.icc.psi_star.len()).stage("wald")?;
            let h = read_vector(h).stage("wald")?;
            Some(wald(&l.icc, &l.lrv, &prep.sample, &r, &h).stage("wald")?)
        }
        (Some(_), Some(_), None) => {
            return Err(Error::InvalidArgument(format!(
                "Wald test needs 0 < s < p, got s={s}"
            )))
            .stage("wald")
        }
        _ => None,
    };

    let mut misspec_tables = None;
    let misspec = if s > 0 {
        let covering = tables.as_ref().filter(|t| t.s_max() >= s);
        let tables = match covering {
            Some(t) => t,
            None => misspec_tables.insert(acquire_tables(targs, s, &[opts.eta])?),
        };
        {
            // Keep every K_i within the sample size.
            let room = (t / k)
                .saturating_sub(1)
                .checked_div(opts.misspec_j)
                .unwrap_or(opts.misspec_m);
            let mopts = MisspecOptions {
                s,
                j: opts.misspec_j,
                m: opts.misspec_m.min(room),
                norm: opts.norm,
                eta: opts.eta,
                center: opts.center,
            };
            Some(run_misspec(&prep.sample, k, &mopts, tables).stage("misspec")?)
        }
    } else {
        None
    };

    if let Some(dir) = &opts.emit_plots {
        emit_plots(dir, &lambda, misspec.as_ref()).stage("plots")?;
    }

    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo {
            name: "kltrend",
            version: env!("CARGO_PKG_VERSION"),
        },
        seed: targs.seed,
        input: InputInfo {
            provenance: prep.panel.provenance().clone(),
            labels: prep.panel.labels().to_vec(),
            t,
            p,
        },
        k,
        eigenvalues: lambda,
        condition: prep.cca.condition,
        counts,
        s,
        s_source,
        loadings,
        wald: wald_result,
        misspec,
        tables: tables.as_ref().or(misspec_tables.as_ref()).map(TableInfo::of),
    })
}

/// Writes `eigenvalues.csv`, `gaps.csv` and `stripe.csv` into `dir`.
pub fn emit_plots(dir: &Path, lambda: &[f64], misspec: Option<&MisspecDiagnostic>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut w = csv::Writer::from_path(dir.join("eigenvalues.csv"))?;
    w.write_record(["index", "eigenvalue"])?;
    for (i, l) in lambda.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush().map_err(|e| io_err(dir, e))?;

    let gaps = kltrend::trend_count::max_gap(lambda)?;
    let mut w = csv::Writer::from_path(dir.join("gaps.csv"))?;
    w.write_record(["i", "gap"])?;
    for c in &gaps.diagnostics {
        w.write_record([c.index.to_string(), c.value.to_string()])?;
    }
    w.flush().map_err(|e| io_err(dir, e))?;

    let stripe = dir.join("stripe.csv");
    match misspec {
        Some(d) => write_stripe_csv(d, &stripe)?,
        None => {
            let mut w = csv::Writer::from_path(&stripe)?;
            w.write_record(["logK", "logStat", "stripeLow", "stripeHigh"])?;
            w.flush().map_err(|e| io_err(&stripe, e))?;
        }
    }
    Ok(())
}

// -------------------------------------------------------------- critval

pub struct CritvalOptions {
    pub s_max: usize,
    pub etas: Vec<f64>,
    pub reps: usize,
    pub steps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct CritvalReport {
    pub path: PathBuf,
    pub hash: String,
    pub summary: std::collections::BTreeMap<&'static str, String>,
}

pub fn critval(cache: &TableCache, opts: &CritvalOptions) -> CmdResult<CritvalReport> {
    let cfg = TableConfig {
        s_max: opts.s_max,
        etas: opts.etas.clone(),
        n_steps: opts.steps,
        n_reps: opts.reps,
        seed: opts.seed,
    };
    let tables = match &opts.out {
        Some(path) => {
            let t = build_table(&cfg).stage("tables")?;
            t.save(path).stage("output")?;
            t
        }
        None => cache.get_or_build(&cfg).stage("tables")?,
    };
    Ok(CritvalReport {
        path: opts.out.clone().unwrap_or_else(|| cache.path_for(&cfg)),
        hash: tables.hash(),
        summary: describe(&tables),
    })
}

/// One line per cached table file.
pub fn critval_list(cache: &TableCache) -> Vec<String> {
    cache
        .list()
        .into_iter()
        .map(|(path, t)| match t {
            Ok(t) => {
                let d = describe(&t);
                format!(
                    "{}\ts_max={} steps={} reps={} seed={} etas={} hash={}",
                    path.display(),
                    d["s_max"],
                    d["n_steps"],
                    d["n_reps"],
                    d["seed"],
                    d["etas"],
                    &t.hash()[..16]
                )
            }
            Err(e) => format!("{}\tunreadable: {e}", path.display()),
        })
        .collect()
}

// ------------------------------------------------------------------- mc

pub struct McOptions {
    pub grid: Vec<GridPoint>,
    pub methods: Vec<CountMethod>,
    pub reps: usize,
    pub seed: u64,
    pub k: Option<usize>,
    pub out: PathBuf,
}

pub fn read_grid(path: &Path) -> Result<Vec<GridPoint>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let grid: Vec<GridPoint> = serde_json::from_str(&text)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds an empty grid", path.display())));
    }
    Ok(grid)
}

pub fn run_mc(opts: &McOptions, targs: &TableArgs, eta: f64) -> CmdResult<Vec<PathBuf>> {
    let tables = if opts.methods.iter().any(CountMethod::needs_tables) {
        let p_max = opts.grid.iter().map(|g| g.p).max().unwrap_or(1);
        Some(acquire_tables(targs, p_max, &[eta])?)
    } else {
        None
    };
    fs::create_dir_all(&opts.out).map_err(|e| io_err(&opts.out, e)).stage("output")?;
    let stream_path = opts.out.join("results.jsonl");
    let file = File::create(&stream_path).map_err(|e| io_err(&stream_path, e)).stage("output")?;
    let mut sink = BufWriter::new(file);
    let run = RunOptions {
        n_reps: opts.reps,
        k_policy: opts.k.map_or(KPolicy::Default, KPolicy::Fixed),
        seed: opts.seed,
    };
    let results = mc::run_grid(&opts.grid, &opts.methods, &run, tables.as_ref(), Some(&mut sink)).stage("mc")?;
    drop(sink);
    let mut files = vec![stream_path];
    files.extend(mc::emit_tables(&results, &opts.out).stage("output")?);
    Ok(files)
}

// ------------------------------------------------------------- simulate

pub fn simulate(cfg: &mc::DgpConfig, out: Option<&Path>) -> CmdResult<()> {
    let panel = mc::simulate_dgp(cfg).stage("simulate")?;
    let write = |w: &mut dyn Write| -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(panel.labels().iter().cloned());
        csv.write_record(&header)?;
        for (i, row) in panel.values().row_iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            csv.write_record(&rec)?;
        }
        csv.flush().map_err(|e| io_err(Path::new("<output>"), e))
    };
    match out {
        Some(path) => {
            let mut f = File::create(path).map_err(|e| io_err(path, e)).stage("output")?;
            write(&mut f).stage("output")
        }
        None => write(&mut std::io::stdout().lock()).stage("output"),
    }
}
