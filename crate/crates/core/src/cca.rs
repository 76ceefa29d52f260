//! Canonical correlations between an observed panel and the basis design.
//!
//! The squared canonical correlations are the roots of
//! `|λ M_ff − M_fd M_dd⁻¹ M_df| = 0`. The problem is whitened with the
//! Cholesky factor `L` of `M_ff` and solved as the symmetric eigenproblem of
//! `L⁻¹ M_fd M_dd⁻¹ M_df L⁻ᵀ`; eigenvectors are returned as `V = L⁻ᵀ U`, so
//! that `V' M_ff V = I_p`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalue clamps larger than this are flagged.
pub const CLAMP_WARN: f64 = 1e-8;

/// `T⁻¹ Σ_t a_t b_t'`.
pub fn moment(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "moment of {} rows against {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::Dimension("moment of an empty sample".into()));
    }
    Ok(a.tr_mul(b) / a.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub m_ff_min_eig: f64,
    pub m_ff_max_eig: f64,
    pub m_dd_min_eig: f64,
    pub m_dd_max_eig: f64,
    /// Largest distance an eigenvalue was moved to land in `[0, 1]`.
    pub max_clamp: f64,
}

impl ConditionReport {
    pub fn clamp_warning(&self) -> bool {
        self.max_clamp > CLAMP_WARN
    }
}

#[derive(Debug, Clone)]
pub struct CcaResult {
    /// `λ_1 ≥ ... ≥ λ_p`, all in `[0, 1]`.
    pub eigenvalues: DVector<f64>,
    /// Columns `v_1..v_p`, normalised so that `V' M_ff V = I_p`.
    pub eigenvectors: DMatrix<f64>,
    /// `M_ff` of the analysed series.
    pub m_ff: DMatrix<f64>,
    pub condition: ConditionReport,
}

impl CcaResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalue_vec(&self) -> Vec<f64> {
        self.eigenvalues.iter().copied().collect()
    }
}

pub fn cca(f: &DMatrix<f64>, d: &BasisMatrix) -> Result<CcaResult> {
    let (t, p) = f.shape();
    if t != d.t() {
        return Err(Error::Dimension(format!(
            "series have {t} rows, basis has {} rows",
            d.t()
        )));
    }
    if p == 0 {
        return Err(Error::Dimension("no series to analyse".into()));
    }
    if d.k() < p {
        return Err(Error::Dimension(format!(
            "need K >= p, got K={} and p={p}",
            d.k()
        )));
    }
    let mut m_ff = moment(f, f)?;
    linalg::symmetrize(&mut m_ff);
    let m_fd = moment(f, d.values())?;
    cca_from_moments(m_ff, &m_fd, d)
}

/// CCA from precomputed `M_ff` (p×p) and `M_fd` (p×K).
pub fn cca_from_moments(m_ff: DMatrix<f64>, m_fd: &DMatrix<f64>, d: &BasisMatrix) -> Result<CcaResult> {
    let p = m_ff.nrows();
    let (m_ff_min_eig, m_ff_max_eig) = linalg::spectrum_bounds(&m_ff);
    if !(m_ff_max_eig > 0.0) || m_ff_min_eig <= 1e-12 * m_ff_max_eig {
        return Err(Error::Conditioning {
            matrix: "M_ff".into(),
            smallest: m_ff_min_eig,
            largest: m_ff_max_eig,
        });
    }
    let (m_dd_min_eig, m_dd_max_eig) = d.gram_spectrum();
    let m_dd_inv_m_df = d.solve_gram(&m_fd.transpose())?;
    let mut a = m_fd * m_dd_inv_m_df;
    linalg::symmetrize(&mut a);

    let chol = linalg::checked_cholesky(&m_ff, "M_ff", 1e-12)?;
    let l = chol.l();
    // C = L⁻¹ A L⁻ᵀ
    let l_inv_a = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::Conditioning {
            matrix: "M_ff".into(),
            smallest: m_ff_min_eig,
            largest: m_ff_max_eig,
        })?;
    let mut c = l
        .solve_lower_triangular(&l_inv_a.transpose())
        .expect("triangular solve succeeded above")
        .transpose();
    linalg::symmetrize(&mut c);

    let (mut values, u) = linalg::sym_eigen_desc(c);
    let v = l
        .transpose()
        .solve_upper_triangular(&u)
        .expect("triangular solve succeeded above");

    let mut max_clamp = 0.0f64;
    for x in values.iter_mut() {
        let clamped = x.clamp(0.0, 1.0);
        max_clamp = max_clamp.max((clamped - *x).abs());
        *x = clamped;
    }
    let condition = ConditionReport {
        m_ff_min_eig,
        m_ff_max_eig,
        m_dd_min_eig,
        m_dd_max_eig,
        max_clamp,
    };
    if condition.clamp_warning() {
        log::warn!("canonical correlations clamped by {max_clamp:.3e}; check conditioning");
    }
    debug_assert_eq!(values.len(), p);
    Ok(CcaResult {
        eigenvalues: values,
        eigenvectors: v,
        m_ff,
        condition,
    })
}

/// `(Λ₁, Λ₀, V₁, V₀)`; empty blocks have zero columns.
#[derive(Debug, Clone)]
pub struct Partition {
    pub lambda1: DVector<f64>,
    pub lambda0: DVector<f64>,
    pub v1: DMatrix<f64>,
    pub v0: DMatrix<f64>,
}

pub fn partition(result: &CcaResult, s: usize) -> Result<Partition> {
    let p = result.dim();
    if s > p {
        return Err(Error::InvalidArgument(format!("s={s} exceeds p={p}")));
    }
    Ok(Partition {
        lambda1: result.eigenvalues.rows(0, s).into_owned(),
        lambda0: result.eigenvalues.rows(s, p - s).into_owned(),
        v1: result.eigenvectors.columns(0, s).into_owned(),
        v0: result.eigenvectors.columns(s, p - s).into_owned(),
    })
}
