//! Estimators and tests for the number `s` of stochastic trends.
//!
//! All rules act on the squared canonical correlations
//! `1 ≥ λ_1 ≥ ... ≥ λ_p ≥ 0` of `(x_t, d_t)`; large ones belong to the
//! stochastic trends, small ones to the cointegrating relations.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{kl_design, BasisMatrix, KGrid};
use crate::cca::cca;
use crate::error::{Error, Result};
use crate::limit_law::{stripe_params, LimitLawTables, StripeCenter};
use crate::linalg;
use crate::panel::Sample;

pub use crate::limit_law::Norm;

const SORT_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;
const FLOOR: f64 = 1e-300;

/// Rule used to pick `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum CountMethod {
    MaxGap,
    F1,
    F2 { include_zero: bool },
    F3 { include_zero: bool },
    SeqF1 { eta: f64 },
    SeqFinf { eta: f64 },
}

impl CountMethod {
    pub fn tag(&self) -> MethodTag {
        match self {
            CountMethod::MaxGap => MethodTag::MaxGap,
            CountMethod::F1 => MethodTag::F1,
            CountMethod::F2 { .. } => MethodTag::F2,
            CountMethod::F3 { .. } => MethodTag::F3,
            CountMethod::SeqF1 { .. } => MethodTag::SeqF1,
            CountMethod::SeqFinf { .. } => MethodTag::SeqFinf,
        }
    }

    pub fn needs_tables(&self) -> bool {
        matches!(self, CountMethod::SeqF1 { .. } | CountMethod::SeqFinf { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodTag {
    #[serde(rename = "max-gap")]
    MaxGap,
    #[serde(rename = "f1")]
    F1,
    #[serde(rename = "f2")]
    F2,
    #[serde(rename = "f3")]
    F3,
    #[serde(rename = "seq-F1")]
    SeqF1,
    #[serde(rename = "seq-Finf")]
    SeqFinf,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::MaxGap => "max-gap",
            MethodTag::F1 => "f1",
            MethodTag::F2 => "f2",
            MethodTag::F3 => "f3",
            MethodTag::SeqF1 => "seq-F1",
            MethodTag::SeqFinf => "seq-Finf",
        }
    }
}

/// One point of a criterion or test trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionPoint {
    pub index: usize,
    pub value: f64,
    /// Critical value, for sequential tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCountEstimate {
    pub s_hat: usize,
    pub r_hat: usize,
    pub method: MethodTag,
    /// All maximisers; `s_hat` is the smallest.
    pub tie_set: Vec<usize>,
    /// Criterion values over the admissible set (`log f1` for f1), or the
    /// `F_j` test trajectory for sequential tests.
    pub diagnostics: Vec<CriterionPoint>,
}

fn check_spectrum(lambda: &[f64]) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::Dimension("empty eigenvalue vector".into()));
    }
    if let Some(v) = lambda
        .iter()
        .find(|v| !(**v >= -SORT_TOL && **v <= 1.0 + SORT_TOL))
    {
        return Err(Error::InvalidArgument(format!("eigenvalue {v} outside [0,1]")));
    }
    if lambda.windows(2).any(|w| w[1] > w[0] + SORT_TOL) {
        return Err(Error::InvalidArgument(
            "eigenvalues must be sorted non-increasing".into(),
        ));
    }
    Ok(())
}

fn argmax(points: Vec<CriterionPoint>, p: usize, method: MethodTag) -> TrendCountEstimate {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let best = points
        .iter()
        .map(|c| key(c.value))
        .fold(f64::NEG_INFINITY, f64::max);
    let tie_set: Vec<usize> = points
        .iter()
        .filter(|c| {
            let v = key(c.value);
            v == best || (best.is_finite() && (best - v).abs() <= TIE_TOL * best.abs().max(1.0))
        })
        .map(|c| c.index)
        .collect();
    let s_hat = tie_set[0];
    TrendCountEstimate {
        s_hat,
        r_hat: p - s_hat,
        method,
        tie_set,
        diagnostics: points,
    }
}

fn point(index: usize, value: f64) -> CriterionPoint {
    CriterionPoint {
        index,
        value,
        critical: None,
    }
}

/// `argmax_{i ∈ 0..=p} (λ_i − λ_{i+1})` with `λ_0 = 1`, `λ_{p+1} = 0`.
pub fn max_gap(lambda: &[f64]) -> Result<TrendCountEstimate> {
    check_spectrum(lambda)?;
    let p = lambda.len();
    let at = |i: usize| -> f64 {
        match i {
            0 => 1.0,
            i if i > p => 0.0,
            i => lambda[i - 1],
        }
    };
    let points = (0..=p).map(|i| point(i, at(i) - at(i + 1))).collect();
    Ok(argmax(points, p, MethodTag::MaxGap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Product ratio with rates: `Π_{h≤i} λ_h / Π_{h>i} (T/K) λ_h`.
    F1,
    /// Eigenvalue ratio `λ_i / λ_{i+1}`.
    F2,
    /// Growth ratio of the log tail shares.
    F3,
}

/// Alternative argmax estimators over their admissible index sets.
///
/// `include_zero` adds `i = 0` with `λ_0 = 1` for f2 and f3; f1 always
/// ranges over `0..=p`.
pub fn argmax_criteria(
    lambda: &[f64],
    t: usize,
    k: usize,
    which: Criterion,
    include_zero: bool,
) -> Result<TrendCountEstimate> {
    check_spectrum(lambda)?;
    let p = lambda.len();
    // λ_0 = 1 and 1-based indexing.
    let l = |i: usize| if i == 0 { 1.0 } else { lambda[i - 1] };
    match which {
        Criterion::F1 => {
            if k == 0 || t == 0 {
                return Err(Error::InvalidArgument("f1 needs T and K".into()));
            }
            let rate = t as f64 / k as f64;
            let points = (0..=p)
                .map(|i| {
                    let num: f64 = (1..=i).map(|h| l(h).max(FLOOR).ln()).sum();
                    let den: f64 = ((i + 1)..=p).map(|h| (rate * l(h)).max(FLOOR).ln()).sum();
                    point(i, num - den)
                })
                .collect();
            Ok(argmax(points, p, MethodTag::F1))
        }
        Criterion::F2 => {
            let lo = if include_zero { 0 } else { 1 };
            if p < 2 && !include_zero {
                return Err(Error::InvalidArgument(format!(
                    "f2 needs p >= 2 for the index set {{1..p-1}}, got p={p}"
                )));
            }
            let points = (lo..p).map(|i| point(i, l(i) / l(i + 1).max(FLOOR))).collect();
            Ok(argmax(points, p, MethodTag::F2))
        }
        Criterion::F3 => {
            let lo = if include_zero { 0 } else { 1 };
            let min_p = if include_zero { 2 } else { 3 };
            if p < min_p {
                let set = if include_zero { "{0..p-2}" } else { "{1..p-2}" };
                return Err(Error::InvalidArgument(format!(
                    "f3 needs p >= {min_p} for the index set {set}, got p={p}"
                )));
            }
            // tail[j] = Σ_{h=j}^p λ_h, for j = 1..=p+1.
            let mut tail = vec![0.0; p + 2];
            for j in (1..=p).rev() {
                tail[j] = tail[j + 1] + l(j);
            }
            let g = |i: usize| (1.0 + l(i) / tail[i + 1].max(FLOOR)).ln();
            let points = (lo..=(p - 2)).map(|i| point(i, g(i) / g(i + 1))).collect();
            Ok(argmax(points, p, MethodTag::F3))
        }
    }
}

/// `F_{j,1} = Kπ² Σ_{i≤j} (1−λ_i)` or `F_{j,∞} = Kπ² (1−λ_j)`.
pub fn f_statistic(lambda: &[f64], j: usize, norm: Norm, k: usize) -> Result<f64> {
    let p = lambda.len();
    if j == 0 || j > p {
        return Err(Error::InvalidArgument(format!("j={j} outside 1..={p}")));
    }
    let scale = k as f64 * PI * PI;
    Ok(match norm {
        Norm::One => scale * lambda[..j].iter().map(|l| 1.0 - l).sum::<f64>(),
        Norm::Infinity => scale * (1.0 - lambda[j - 1]),
    })
}

/// `max_i F_{j,n}(K_i)` over spectra computed with different `K_i`.
pub fn f_statistic_grid(spectra: &[(usize, Vec<f64>)], j: usize, norm: Norm) -> Result<f64> {
    if spectra.is_empty() {
        return Err(Error::InvalidArgument("no spectra given".into()));
    }
    spectra
        .iter()
        .map(|(k, lambda)| f_statistic(lambda, j, norm, *k))
        .try_fold(f64::NEG_INFINITY, |acc, f| f.map(|v| acc.max(v)))
}

fn norm_tag(norm: Norm) -> MethodTag {
    match norm {
        Norm::One => MethodTag::SeqF1,
        Norm::Infinity => MethodTag::SeqFinf,
    }
}

fn sequential_generic<F>(
    p: usize,
    tables: &LimitLawTables,
    norm: Norm,
    eta: f64,
    stat: F,
) -> Result<TrendCountEstimate>
where
    F: Fn(usize) -> Result<f64>,
{
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta={eta} outside (0,1)")));
    }
    let critical: Vec<f64> = (1..=p)
        .map(|j| tables.critical_value(j, norm, eta))
        .collect::<Result<_>>()?;
    let mut trajectory = Vec::new();
    let mut s_hat = 0;
    for j in (1..=p).rev() {
        let f = stat(j)?;
        trajectory.push(CriterionPoint {
            index: j,
            value: f,
            critical: Some(critical[j - 1]),
        });
        if f <= critical[j - 1] {
            s_hat = j;
            break;
        }
    }
    Ok(TrendCountEstimate {
        s_hat,
        r_hat: p - s_hat,
        method: norm_tag(norm),
        tie_set: vec![s_hat],
        diagnostics: trajectory,
    })
}

/// Tests `H_0: s = j` for `j = p, p−1, ..., 1` and returns the first
/// non-rejected `j`, or 0 if every hypothesis is rejected.
pub fn sequential_select(
    lambda: &[f64],
    k: usize,
    tables: &LimitLawTables,
    norm: Norm,
    eta: f64,
) -> Result<TrendCountEstimate> {
    check_spectrum(lambda)?;
    sequential_generic(lambda.len(), tables, norm, eta, |j| {
        f_statistic(lambda, j, norm, k)
    })
}

/// Sequential selection with `F_{j,n} = max_i ‖K_i π² τ^(j)‖_n`.
pub fn sequential_select_grid(
    spectra: &[(usize, Vec<f64>)],
    tables: &LimitLawTables,
    norm: Norm,
    eta: f64,
) -> Result<TrendCountEstimate> {
    let p = spectra
        .first()
        .map(|(_, l)| l.len())
        .ok_or_else(|| Error::InvalidArgument("no spectra given".into()))?;
    for (_, l) in spectra {
        check_spectrum(l)?;
        if l.len() != p {
            return Err(Error::Dimension("spectra of different lengths".into()));
        }
    }
    sequential_generic(p, tables, norm, eta, |j| f_statistic_grid(spectra, j, norm))
}

/// Dispatches to the rule selected by `method`.
pub fn estimate_count(
    lambda: &[f64],
    t: usize,
    k: usize,
    method: CountMethod,
    tables: Option<&LimitLawTables>,
) -> Result<TrendCountEstimate> {
    let need = || {
        tables.ok_or_else(|| Error::Table("sequential tests need critical value tables".into()))
    };
    match method {
        CountMethod::MaxGap => max_gap(lambda),
        CountMethod::F1 => argmax_criteria(lambda, t, k, Criterion::F1, false),
        CountMethod::F2 { include_zero } => argmax_criteria(lambda, t, k, Criterion::F2, include_zero),
        CountMethod::F3 { include_zero } => argmax_criteria(lambda, t, k, Criterion::F3, include_zero),
        CountMethod::SeqF1 { eta } => sequential_select(lambda, k, need()?, Norm::One, eta),
        CountMethod::SeqFinf { eta } => sequential_select(lambda, k, need()?, Norm::Infinity, eta),
    }
}

/// Runs the CCA of `x` against `basis` and applies `method`.
pub fn count_trends(
    x: &DMatrix<f64>,
    basis: &BasisMatrix,
    method: CountMethod,
    tables: Option<&LimitLawTables>,
) -> Result<TrendCountEstimate> {
    let res = cca(x, basis)?;
    estimate_count(&res.eigenvalue_vec(), basis.t(), basis.k(), method, tables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationDecision {
    pub accept: bool,
    /// Trend count of `x_t`.
    pub s_full: usize,
    /// Trend count of `b'x_t`.
    pub s_restricted: usize,
    pub method: MethodTag,
}

/// Rejects `rank(b'ψ) = s` when `b'x_t` shows fewer trends than `x_t`.
pub fn identification_check(
    sample: &Sample,
    b: &DMatrix<f64>,
    basis: &BasisMatrix,
    method: CountMethod,
    tables: Option<&LimitLawTables>,
) -> Result<IdentificationDecision> {
    if b.nrows() != sample.dim() {
        return Err(Error::Dimension(format!(
            "b has {} rows for {} series",
            b.nrows(),
            sample.dim()
        )));
    }
    if b.ncols() == 0 {
        return Err(Error::InvalidArgument("b has no columns (s = 0)".into()));
    }
    linalg::require_full_column_rank(b, "b")?;
    let full = count_trends(&sample.x, basis, method, tables)?;
    identification_check_at(sample, b, basis, method, tables, full.s_hat)
}

/// As [`identification_check`], with the trend count of `x` fixed to `s`.
pub fn identification_check_at(
    sample: &Sample,
    b: &DMatrix<f64>,
    basis: &BasisMatrix,
    method: CountMethod,
    tables: Option<&LimitLawTables>,
    s: usize,
) -> Result<IdentificationDecision> {
    if b.nrows() != sample.dim() || b.ncols() == 0 {
        return Err(Error::Dimension(format!(
            "b is {}x{} for {} series",
            b.nrows(),
            b.ncols(),
            sample.dim()
        )));
    }
    let restricted = count_trends(&(&sample.x * b), basis, method, tables)?;
    Ok(IdentificationDecision {
        accept: restricted.s_hat >= s,
        s_full: s,
        s_restricted: restricted.s_hat,
        method: method.tag(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecDiagnostic {
    pub k_grid: KGrid,
    pub norm: Norm,
    pub eta: f64,
    pub center_kind: StripeCenter,
    /// `τ^(s) = (1−λ_s, ..., 1−λ_1)` for each `K_i`.
    pub tau: Vec<Vec<f64>>,
    /// `(log K_i, log ‖π² τ^(s)‖_n)`.
    pub log_points: Vec<(f64, f64)>,
    /// Least-squares slope of the log points; `None` for a single point.
    pub fitted_slope: Option<f64>,
    pub stripe_center: Vec<f64>,
    pub stripe_delta: f64,
    /// `log(K π² τ^(s))` at the base `K`.
    pub log_stat: Vec<f64>,
    /// `‖log(K π² τ^(s)) − center‖_∞` at the base `K`.
    pub stripe_distance: f64,
    pub inside_stripe: bool,
}

pub fn vector_norm(v: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::One => v.iter().map(|x| x.abs()).sum(),
        Norm::Infinity => v.iter().fold(0.0, |a, x| a.max(x.abs())),
    }
}

/// `τ^(s)` from a spectrum.
pub fn tau(lambda: &[f64], s: usize) -> Vec<f64> {
    (0..s).rev().map(|i| 1.0 - lambda[i]).collect()
}

fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Log-log slope and confidence stripe for a hypothesised `s`, using the
/// Karhunen-Loève basis at every `K_i` of the grid.
pub fn misspec_diagnostic(
    sample: &Sample,
    s: usize,
    grid: &KGrid,
    norm: Norm,
    tables: &LimitLawTables,
    eta: f64,
    center: StripeCenter,
) -> Result<MisspecDiagnostic> {
    let p = sample.dim();
    if s == 0 {
        return Err(Error::InvalidArgument(
            "misspecification diagnostic is undefined for s = 0 (empty τ)".into(),
        ));
    }
    if s > p {
        return Err(Error::InvalidArgument(format!("s={s} exceeds p={p}")));
    }
    let (stripe_center, stripe_delta) = stripe_params(tables, s, eta, center)?;
    let t = sample.len();
    let spectra: Vec<Vec<f64>> = grid
        .values
        .par_iter()
        .map(|&k| {
            let basis = kl_design(k, t)?;
            Ok(cca(&sample.x, &basis)?.eigenvalue_vec())
        })
        .collect::<Result<_>>()?;
    let taus: Vec<Vec<f64>> = spectra.iter().map(|l| tau(l, s)).collect();
    let pi2 = PI * PI;
    let log_points: Vec<(f64, f64)> = grid
        .values
        .iter()
        .zip(&taus)
        .map(|(&k, tau)| {
            let scaled: Vec<f64> = tau.iter().map(|v| pi2 * v).collect();
            ((k as f64).ln(), vector_norm(&scaled, norm).ln())
        })
        .collect();
    let base_k = grid.values[0] as f64;
    let log_stat: Vec<f64> = taus[0].iter().map(|v| (base_k * pi2 * v).ln()).collect();
    let stripe_distance = log_stat
        .iter()
        .zip(&stripe_center)
        .fold(0.0f64, |acc, (a, c)| acc.max((a - c).abs()));
    Ok(MisspecDiagnostic {
        k_grid: grid.clone(),
        norm,
        eta,
        center_kind: center,
        tau: taus,
        fitted_slope: ols_slope(&log_points),
        log_points,
        stripe_center,
        stripe_delta,
        log_stat,
        stripe_distance,
        inside_stripe: stripe_distance < stripe_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_law::{build_table, TableConfig};

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn max_gap_examples() {
        let e = max_gap(&[0.99, 0.95, 0.30, 0.05]).unwrap();
        assert_eq!(e.s_hat, 2);
        assert_eq!(e.r_hat, 2);
        let gaps: Vec<f64> = e.diagnostics.iter().map(|c| c.value).collect();
        for (g, want) in gaps.iter().zip([0.01, 0.04, 0.65, 0.25, 0.05]) {
            assert!(approx(*g, want, 1e-12));
        }
        assert_eq!(max_gap(&[0.999, 0.998]).unwrap().s_hat, 2);
        assert_eq!(max_gap(&[0.02, 0.01]).unwrap().s_hat, 0);
    }

    #[test]
    fn max_gap_rejects_unsorted() {
        assert!(max_gap(&[0.1, 0.5]).is_err());
        assert!(max_gap(&[1.5]).is_err());
    }

    #[test]
    fn ties_resolve_to_smallest_index() {
        // gaps: 0.25, 0.25, 0.25, 0.25
        let e = max_gap(&[0.75, 0.5, 0.25]).unwrap();
        assert_eq!(e.tie_set, vec![0, 1, 2, 3]);
        assert_eq!(e.s_hat, 0);
    }

    #[test]
    fn f1_example() {
        let e = argmax_criteria(&[0.9, 0.1], 100, 10, Criterion::F1, false).unwrap();
        let vals: Vec<f64> = e.diagnostics.iter().map(|c| c.value.exp()).collect();
        assert!(approx(vals[0], 1.0 / 9.0, 1e-12));
        assert!(approx(vals[1], 0.9, 1e-12));
        assert!(approx(vals[2], 0.09, 1e-12));
        assert_eq!(e.s_hat, 1);
    }

    #[test]
    fn f1_unit_rate_matches_direct_formula() {
        let lambda = [0.97, 0.8, 0.4, 0.05, 0.01];
        let e = argmax_criteria(&lambda, 50, 50, Criterion::F1, false).unwrap();
        for c in &e.diagnostics {
            let i = c.index;
            let num: f64 = lambda[..i].iter().product();
            let den: f64 = lambda[i..].iter().product();
            assert!(approx(c.value.exp(), num / den, 1e-12 * (num / den).max(1.0)));
        }
    }

    #[test]
    fn f2_example() {
        let e = argmax_criteria(&[0.9, 0.6, 0.1], 0, 0, Criterion::F2, false).unwrap();
        let vals: Vec<f64> = e.diagnostics.iter().map(|c| c.value).collect();
        assert!(approx(vals[0], 1.5, 1e-12));
        assert!(approx(vals[1], 6.0, 1e-12));
        assert_eq!(e.s_hat, 2);
        let z = argmax_criteria(&[0.9, 0.6, 0.1], 0, 0, Criterion::F2, true).unwrap();
        assert_eq!(z.diagnostics[0].index, 0);
        assert!(approx(z.diagnostics[0].value, 1.0 / 0.9, 1e-12));
    }

    #[test]
    fn f3_example() {
        let e = argmax_criteria(&[0.9, 0.5, 0.4, 0.2], 0, 0, Criterion::F3, false).unwrap();
        assert_eq!(e.diagnostics.len(), 2);
        assert!(approx(e.diagnostics[0].value, 0.9863, 1e-4));
        assert!(approx(e.diagnostics[1].value, 0.5517, 1e-4));
        assert_eq!(e.s_hat, 1);
    }

    #[test]
    fn small_p_errors() {
        assert!(argmax_criteria(&[0.9, 0.1], 0, 0, Criterion::F3, false).is_err());
        assert!(argmax_criteria(&[0.9, 0.1], 0, 0, Criterion::F3, true).is_ok());
        assert!(argmax_criteria(&[0.9], 0, 0, Criterion::F2, false).is_err());
        assert!(argmax_criteria(&[0.9], 0, 0, Criterion::F2, true).is_ok());
    }

    #[test]
    fn f_statistic_examples() {
        let l = [0.999];
        let f = f_statistic(&l, 1, Norm::Infinity, 100).unwrap();
        assert!(approx(f, 100.0 * PI * PI * 0.001, 1e-9));
        assert!(approx(f, 0.98696, 1e-5));
        let l = [0.99, 0.9, 0.5];
        assert_eq!(
            f_statistic(&l, 1, Norm::One, 30).unwrap(),
            f_statistic(&l, 1, Norm::Infinity, 30).unwrap()
        );
        assert_eq!(f_statistic(&[1.0, 1.0], 2, Norm::One, 30).unwrap(), 0.0);
        assert!(f_statistic(&l, 0, Norm::One, 30).is_err());
        assert!(f_statistic(&l, 4, Norm::One, 30).is_err());
    }

    fn small_tables() -> LimitLawTables {
        build_table(&TableConfig {
            s_max: 3,
            etas: vec![0.05],
            n_steps: 1000,
            n_reps: 1000,
            seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn sequential_extremes() {
        let tables = small_tables();
        // λ = 1 gives zero statistics: immediate stop at j = p.
        let e = sequential_select(&[1.0, 1.0, 1.0], 50, &tables, Norm::One, 0.05).unwrap();
        assert_eq!(e.s_hat, 3);
        assert_eq!(e.diagnostics.len(), 1);
        // λ = 0 gives Kπ²·j, far above every critical value.
        let e = sequential_select(&[0.0, 0.0, 0.0], 500, &tables, Norm::Infinity, 0.05).unwrap();
        assert_eq!(e.s_hat, 0);
        assert_eq!(e.diagnostics.len(), 3);
        // Missing quantiles.
        assert!(sequential_select(&[1.0; 4], 50, &tables, Norm::One, 0.05).is_err());
        assert!(sequential_select(&[1.0; 3], 50, &tables, Norm::One, 0.10).is_err());
    }

    #[test]
    fn grid_statistic_is_max_over_k() {
        let spectra = vec![(10, vec![0.99, 0.5]), (20, vec![0.995, 0.6])];
        let f = f_statistic_grid(&spectra, 1, Norm::Infinity).unwrap();
        assert!(approx(f, (10.0f64 * 0.01).max(20.0 * 0.005) * PI * PI, 1e-12));
    }

    #[test]
    fn misspec_rejects_zero_trends() {
        let tables = small_tables();
        let s = Sample::from_zero_start(DMatrix::from_fn(50, 2, |i, j| (i * (j + 1)) as f64));
        let grid = crate::basis::k_grid(5, 1, 1).unwrap();
        assert!(misspec_diagnostic(&s, 0, &grid, Norm::One, &tables, 0.05, StripeCenter::Mean).is_err());
    }

    #[test]
    fn tau_reverses_order() {
        assert_eq!(tau(&[0.9, 0.8, 0.1], 2), vec![0.19999999999999996, 0.09999999999999998]);
    }
}
