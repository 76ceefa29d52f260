//! Multivariate time-series panels: ingestion, preprocessing and linear
//! selections of the observed series.
//!
//! Row 0 of a panel is the initial observation `X_0`; the analysis sample is
//! rows `1..=T`. A panel read from a CSV file with `n` data rows therefore
//! has sample size `T = n - 1`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// How the initial observation enters the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Analyse `x_t = X_t`; `X_0` is kept for the first difference.
    #[default]
    Levels,
    /// Analyse `x_t = X_t - X_0`.
    DifferenceFromStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionKind {
    Subset,
    Aggregate,
    Custom,
}

/// Record of a selection applied to a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub kind: SelectionKind,
    /// Row-major entries of `H` (p rows, m columns).
    pub rows: Vec<Vec<f64>>,
}

/// Transforms applied to a panel, in application order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub log: bool,
    pub normalize_start: bool,
    pub init_mode: Option<InitMode>,
    pub selections: Vec<SelectionRecord>,
}

/// A `(T+1) x p` panel of observations whose first row is `X_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    values: DMatrix<f64>,
    labels: Vec<String>,
    t0_row: Option<RowDVector<f64>>,
    provenance: Provenance,
}

impl TimeSeriesPanel {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "a panel needs at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::Dimension("a panel needs at least one series".into()));
        }
        if labels.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} labels for {} series",
                labels.len(),
                values.ncols()
            )));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, column) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::MissingValue {
                row,
                column,
                label: labels[column].clone(),
            });
        }
        Ok(Self {
            values,
            labels,
            t0_row: None,
            provenance: Provenance::default(),
        })
    }

    /// Panel with default labels `x1..xp`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=values.ncols()).map(|i| format!("x{i}")).collect();
        Self::new(values, labels)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.provenance.source = Some(source.into());
        self
    }

    /// Number of stored rows, including the initial one.
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of series `p`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Analysis sample size `T`.
    pub fn sample_size(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn t0_row(&self) -> Option<&RowDVector<f64>> {
        self.t0_row.as_ref()
    }

    /// `x_0`: the stored initial row, or row 0 of the values.
    pub fn initial_row(&self) -> RowDVector<f64> {
        self.t0_row
            .clone()
            .unwrap_or_else(|| self.values.row(0).into_owned())
    }

    /// The `T x p` analysis sample `x_1, ..., x_T`.
    pub fn analysis_values(&self) -> DMatrix<f64> {
        self.values.rows(1, self.sample_size()).into_owned()
    }

    /// Analysis sample and its initial row, ready for estimation.
    pub fn sample(&self) -> Sample {
        Sample {
            x: self.analysis_values(),
            x0: self.initial_row(),
        }
    }
}

/// The analysis data `x_1..x_T` with the initial row used for `Δx_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DMatrix<f64>,
    pub x0: RowDVector<f64>,
}

impl Sample {
    pub fn new(x: DMatrix<f64>, x0: RowDVector<f64>) -> Result<Self> {
        if x0.ncols() != x.ncols() {
            return Err(Error::Dimension(format!(
                "initial row has {} entries for {} series",
                x0.ncols(),
                x.ncols()
            )));
        }
        Ok(Self { x, x0 })
    }

    /// Sample with a zero initial row.
    pub fn from_zero_start(x: DMatrix<f64>) -> Self {
        let p = x.ncols();
        Self {
            x,
            x0: RowDVector::zeros(p),
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// First differences with `Δx_1 = x_1 - x_0`.
    pub fn differences(&self) -> DMatrix<f64> {
        let (t, p) = self.x.shape();
        let mut dx = DMatrix::zeros(t, p);
        for j in 0..p {
            let mut prev = self.x0[j];
            for i in 0..t {
                let cur = self.x[(i, j)];
                dx[(i, j)] = cur - prev;
                prev = cur;
            }
        }
        dx
    }

    /// `x H` together with `x_0 H`.
    pub fn transform(&self, h: &DMatrix<f64>) -> Sample {
        Sample {
            x: &self.x * h,
            x0: &self.x0 * h,
        }
    }
}

/// Column specification for CSV ingestion.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Header of a time-stamp column; it is dropped (the method is index based).
    pub time_column: Option<String>,
    /// Restrict to these columns, in this order. All non-time columns otherwise.
    pub columns: Option<Vec<String>>,
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ingest_reader(file, schema)?.with_source(path.display().to_string()))
}

/// Reads a headed, comma separated panel. Rows must be in increasing time order.
pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<TimeSeriesPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let keep: Vec<usize> = match &schema.columns {
        Some(cols) => cols
            .iter()
            .map(|c| {
                header.iter().position(|h| h == c).ok_or_else(|| {
                    Error::InvalidArgument(format!("column {c:?} not found in header"))
                })
            })
            .collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| schema.time_column.as_deref() != Some(header[i].as_str()))
            .collect(),
    };
    if keep.is_empty() {
        return Err(Error::Dimension("no data columns in CSV".into()));
    }
    let labels: Vec<String> = keep.iter().map(|&i| header[i].clone()).collect();

    let mut data: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        for (out_col, &col) in keep.iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    row: row_idx + 1,
                    column: col + 1,
                    label: labels[out_col].clone(),
                });
            }
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_idx + 1,
                column: col + 1,
                label: labels[out_col].clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: row_idx + 1,
                    column: col + 1,
                    label: labels[out_col].clone(),
                    value: cell.to_string(),
                });
            }
            data.push(value);
        }
        n_rows += 1;
    }
    if n_rows < 2 {
        return Err(Error::Dimension(format!(
            "a panel needs at least 2 rows, got {n_rows}"
        )));
    }
    let values = DMatrix::from_row_slice(n_rows, keep.len(), &data);
    TimeSeriesPanel::new(values, labels)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Natural logarithm of every value.
    pub log: bool,
    /// Subtract the first row from every row.
    pub normalize_start: bool,
    pub init_mode: InitMode,
}

/// Applies log, then start normalisation, then the initial-condition mode.
pub fn preprocess(panel: &TimeSeriesPanel, opts: &PreprocessOptions) -> Result<TimeSeriesPanel> {
    let mut values = panel.values.clone();
    if opts.log {
        if let Some((idx, v)) = values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            let (row, column) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::Domain(format!(
                "log of non-positive value {v} at row {row}, column {column} ({})",
                panel.labels[column]
            )));
        }
        values.apply(|v| *v = v.ln());
    }
    if opts.normalize_start {
        subtract_first_row(&mut values);
    }
    let t0 = match opts.init_mode {
        InitMode::Levels => values.row(0).into_owned(),
        InitMode::DifferenceFromStart => {
            subtract_first_row(&mut values);
            RowDVector::zeros(values.ncols())
        }
    };
    let mut provenance = panel.provenance.clone();
    provenance.log |= opts.log;
    provenance.normalize_start |= opts.normalize_start;
    provenance.init_mode = Some(opts.init_mode);
    Ok(TimeSeriesPanel {
        values,
        labels: panel.labels.clone(),
        t0_row: Some(t0),
        provenance,
    })
}

fn subtract_first_row(values: &mut DMatrix<f64>) {
    let first = values.row(0).into_owned();
    for mut row in values.row_iter_mut() {
        row -= &first;
    }
}

/// A `p x m` full-column-rank matrix `H` mapping `X_t` to `H'X_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMatrix {
    h: DMatrix<f64>,
    kind: SelectionKind,
}

impl SelectionMatrix {
    pub fn new(h: DMatrix<f64>, kind: SelectionKind) -> Result<Self> {
        if h.ncols() == 0 {
            return Err(Error::Dimension("selection matrix has no columns".into()));
        }
        linalg::require_full_column_rank(&h, "selection matrix H")?;
        Ok(Self { h, kind })
    }

    pub fn custom(h: DMatrix<f64>) -> Result<Self> {
        Self::new(h, SelectionKind::Custom)
    }

    /// Keeps the listed columns (0-based) in the given order.
    pub fn subset(p: usize, columns: &[usize]) -> Result<Self> {
        let mut h = DMatrix::zeros(p, columns.len());
        for (j, &c) in columns.iter().enumerate() {
            if c >= p {
                return Err(Error::Dimension(format!("column {c} out of range for p={p}")));
            }
            h[(c, j)] = 1.0;
        }
        Self::new(h, SelectionKind::Subset)
    }

    /// One cross-sectional average per group of columns.
    pub fn aggregate(p: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut h = DMatrix::zeros(p, groups.len());
        for (j, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::InvalidArgument(format!("aggregate group {j} is empty")));
            }
            let w = 1.0 / group.len() as f64;
            for &c in group {
                if c >= p {
                    return Err(Error::Dimension(format!("column {c} out of range for p={p}")));
                }
                h[(c, j)] += w;
            }
        }
        Self::new(h, SelectionKind::Aggregate)
    }

    pub fn identity(p: usize) -> Self {
        Self {
            h: DMatrix::identity(p, p),
            kind: SelectionKind::Subset,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn kind(&self) -> SelectionKind {
        self.kind
    }

    pub fn rank(&self) -> usize {
        self.h.ncols()
    }
}

/// Returns the panel `x H` with labels derived from the selection kind.
pub fn apply_selection(panel: &TimeSeriesPanel, sel: &SelectionMatrix) -> Result<TimeSeriesPanel> {
    let h = sel.matrix();
    if h.nrows() != panel.dim() {
        return Err(Error::Dimension(format!(
            "selection matrix has {} rows, panel has {} series",
            h.nrows(),
            panel.dim()
        )));
    }
    let labels = (0..h.ncols())
        .map(|j| {
            let members: Vec<&str> = (0..h.nrows())
                .filter(|&i| h[(i, j)] != 0.0)
                .map(|i| panel.labels[i].as_str())
                .collect();
            match sel.kind {
                SelectionKind::Subset if members.len() == 1 => members[0].to_string(),
                SelectionKind::Aggregate | SelectionKind::Subset => members.join("+"),
                SelectionKind::Custom => format!("h{}", j + 1),
            }
        })
        .collect();
    let mut provenance = panel.provenance.clone();
    provenance.selections.push(SelectionRecord {
        kind: sel.kind,
        rows: h.row_iter().map(|r| r.iter().copied().collect()).collect(),
    });
    Ok(TimeSeriesPanel {
        values: &panel.values * h,
        labels,
        t0_row: panel.t0_row.as_ref().map(|r| r * h),
        provenance,
    })
}
