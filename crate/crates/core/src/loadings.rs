//! Estimation of the trend loadings `ψ` and cointegrating vectors `β`, and
//! Wald inference on their unrestricted coefficients.
//!
//! With a just-identifying pair `(b, c)`, `c = b_⊥`, the estimates satisfy
//! `b'ψ̂ = I_s` and `c'β̂ = I_r`. The free parameters are
//! `ψ_* = c̄'ψ` (r×s) and `β_* = b̄'β` (s×r), where `ā = a(a'a)⁻¹`, and they
//! are tied by `ψ̂_* = −β̂_*'`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::basis::BasisMatrix;
use crate::cca::{cca, cca_from_moments, moment, partition, CcaResult};
use crate::error::{Error, Result};
use crate::limit_law::LimitLawTables;
use crate::linalg::{self, serde_rows};
use crate::panel::Sample;
use crate::trend_count::{estimate_count, CountMethod};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 50;
const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationPair {
    #[serde(with = "serde_rows")]
    pub b: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub c: DMatrix<f64>,
}

/// Orthonormal basis of `col(b)⊥`.
pub fn complement(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, s) = b.shape();
    linalg::require_full_column_rank(b, "b")?;
    let r = p - s;
    if s == 0 {
        return Ok(DMatrix::identity(p, p));
    }
    let proj = DMatrix::identity(p, p) - b * linalg::inverse(&b.tr_mul(b), "b'b")? * b.transpose();
    let (_, vecs) = linalg::sym_eigen_desc(proj);
    let mut c = vecs.columns(0, r).into_owned();
    // Project once more so that c'b vanishes to rounding.
    let coef = linalg::solve(&b.tr_mul(b), &b.tr_mul(&c), "b'b")?;
    c -= b * coef;
    for mut col in c.column_iter_mut() {
        let n = col.norm();
        col /= n;
    }
    Ok(c)
}

impl IdentificationPair {
    pub fn new(b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let p = b.nrows();
        if c.nrows() != p || b.ncols() + c.ncols() != p {
            return Err(Error::Dimension(format!(
                "b is {}x{} and c is {}x{}; need p×s and p×(p−s)",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        linalg::require_full_column_rank(&b, "b")?;
        linalg::require_full_column_rank(&c, "c")?;
        let cross = linalg::max_abs(&c.tr_mul(&b));
        if cross > ORTHO_TOL {
            return Err(Error::InvalidArgument(format!(
                "c'b must vanish, max entry is {cross:.3e}"
            )));
        }
        Ok(Self { b, c })
    }

    /// `c` taken as the orthonormal complement of `b`.
    pub fn from_b(b: DMatrix<f64>) -> Result<Self> {
        let c = complement(&b)?;
        Ok(Self { b, c })
    }

    /// `b` and `c` made of coordinate vectors; `c` gets the remaining ones.
    pub fn coordinates(p: usize, columns: &[usize]) -> Result<Self> {
        let mut seen = vec![false; p];
        for &j in columns {
            if j >= p || seen[j] {
                return Err(Error::InvalidArgument(format!(
                    "column {j} is out of range or repeated (p={p})"
                )));
            }
            seen[j] = true;
        }
        let rest: Vec<usize> = (0..p).filter(|j| !seen[*j]).collect();
        let pick = |cols: &[usize]| DMatrix::from_fn(p, cols.len(), |i, k| f64::from(u8::from(cols[k] == i)));
        Self::new(pick(columns), pick(&rest))
    }

    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    pub fn s(&self) -> usize {
        self.b.ncols()
    }

    pub fn r(&self) -> usize {
        self.c.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingEstimate {
    #[serde(with = "serde_rows")]
    pub psi_hat: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub beta_hat: DMatrix<f64>,
    /// Index `j` of the returned iterate; 1 for the one-step estimator.
    pub iterations: usize,
    pub converged: bool,
    /// `‖ψ̂^(j) − ψ̂^(j−1)‖_F` for `j = 2, 3, ...`.
    pub step_norms: Vec<f64>,
    #[serde(with = "serde_rows")]
    pub psi_star: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub beta_star: DMatrix<f64>,
    /// Reciprocal condition numbers of `b'M V₁` and `c'V₀`.
    pub rcond_psi: f64,
    pub rcond_beta: f64,
    pub identification: IdentificationPair,
}

fn normalize(
    m_ff: &DMatrix<f64>,
    res: &CcaResult,
    s: usize,
    id: &IdentificationPair,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64, f64)> {
    let part = partition(res, s)?;
    let identification = |e: Error| match e {
        Error::Conditioning { matrix, smallest, largest } => Error::Identification(format!(
            "{matrix} is singular (singular values {smallest:.3e}..{largest:.3e})"
        )),
        other => other,
    };
    // ψ = M V₁ (b'M V₁)⁻¹, solved as (b'M V₁)' ψ' = (M V₁)'.
    let mv1 = m_ff * &part.v1;
    let n_psi = id.b.tr_mul(&mv1);
    let psi = linalg::solve(&n_psi.transpose(), &mv1.transpose(), "b'MV1")
        .map_err(identification)?
        .transpose();
    let n_beta = id.c.tr_mul(&part.v0);
    let beta = linalg::solve(&n_beta.transpose(), &part.v0.transpose(), "c'V0")
        .map_err(identification)?
        .transpose();
    let rc = |m: &DMatrix<f64>| if m.is_empty() { 1.0 } else { linalg::rcond(m) };
    Ok((psi, beta, rc(&n_psi), rc(&n_beta)))
}

fn unrestricted(
    psi: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    id: &IdentificationPair,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let c_bar = linalg::bar(&id.c, "c'c")?;
    let b_bar = linalg::bar(&id.b, "b'b")?;
    Ok((c_bar.tr_mul(psi), b_bar.tr_mul(beta)))
}

fn check_inputs(sample: &Sample, d: &BasisMatrix, s: usize, id: &IdentificationPair) -> Result<()> {
    let p = sample.dim();
    if id.p() != p {
        return Err(Error::Dimension(format!(
            "identification pair is for p={}, sample has p={p}",
            id.p()
        )));
    }
    if id.s() != s {
        return Err(Error::Dimension(format!("b has {} columns, s={s}", id.s())));
    }
    if sample.len() != d.t() {
        return Err(Error::Dimension(format!(
            "sample has T={}, basis has T={}",
            sample.len(),
            d.t()
        )));
    }
    Ok(())
}

/// `ψ̂^(1) = M_xx V₁ (b'M_xx V₁)⁻¹` and `β̂^(1) = V₀ (c'V₀)⁻¹`.
pub fn one_step(
    sample: &Sample,
    d: &BasisMatrix,
    res: &CcaResult,
    s: usize,
    id: &IdentificationPair,
) -> Result<LoadingEstimate> {
    check_inputs(sample, d, s, id)?;
    if res.dim() != sample.dim() {
        return Err(Error::Dimension("CCA result does not match the sample".into()));
    }
    let (psi_hat, beta_hat, rcond_psi, rcond_beta) = normalize(&res.m_ff, res, s, id)?;
    let (psi_star, beta_star) = unrestricted(&psi_hat, &beta_hat, id)?;
    Ok(LoadingEstimate {
        psi_hat,
        beta_hat,
        iterations: 1,
        converged: false,
        step_norms: Vec::new(),
        psi_star,
        beta_star,
        rcond_psi,
        rcond_beta,
        identification: id.clone(),
    })
}

/// `e_t(a) = x_t − M_xg M_gg⁻¹ g_t` with `g_t = a' M_Δxd M_dd⁻¹ d_t`.
pub fn residualize(sample: &Sample, d: &BasisMatrix, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x = &sample.x;
    if a.nrows() != x.ncols() {
        return Err(Error::Dimension(format!(
            "loading has {} rows for {} series",
            a.nrows(),
            x.ncols()
        )));
    }
    if a.ncols() == 0 {
        return Ok(x.clone());
    }
    let dx = sample.differences();
    let m_ddx = moment(d.values(), &dx)?;
    let w = d.solve_gram(&m_ddx)? * a;
    let g = d.values() * w;
    let mut m_gg = moment(&g, &g)?;
    linalg::symmetrize(&mut m_gg);
    if m_gg.iter().all(|v| *v == 0.0) {
        return Ok(x.clone());
    }
    let (lo, hi) = linalg::spectrum_bounds(&m_gg);
    if !(hi > 0.0) || lo <= linalg::RCOND_MIN * hi {
        return Err(Error::Conditioning {
            matrix: "M_gg".into(),
            smallest: lo,
            largest: hi,
        });
    }
    let m_gx = moment(&g, x)?;
    let coef = linalg::checked_cholesky(&m_gg, "M_gg", linalg::RCOND_MIN)?.solve(&m_gx);
    Ok(x - g * coef)
}

/// One ICC update from a previous loading estimate.
pub fn icc_step(
    sample: &Sample,
    d: &BasisMatrix,
    s: usize,
    id: &IdentificationPair,
    previous: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64, f64)> {
    let e = residualize(sample, d, previous)?;
    let res = cca(&e, d)?;
    normalize(&res.m_ff, &res, s, id)
}

/// Iterated canonical correlation estimator started from the one-step
/// estimate.
pub fn icc(
    sample: &Sample,
    d: &BasisMatrix,
    s: usize,
    id: &IdentificationPair,
    tol: f64,
    max_iter: usize,
) -> Result<LoadingEstimate> {
    check_inputs(sample, d, s, id)?;
    let res = cca(&sample.x, d)?;
    let start = one_step(sample, d, &res, s, id)?;
    icc_from(sample, d, s, id, &start.psi_hat, tol, max_iter)
}

/// ICC iterations from an arbitrary starting loading `ψ̂^(1)`.
pub fn icc_from(
    sample: &Sample,
    d: &BasisMatrix,
    s: usize,
    id: &IdentificationPair,
    start: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<LoadingEstimate> {
    check_inputs(sample, d, s, id)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if max_iter < 2 {
        return Err(Error::InvalidArgument(format!("max_iter must be at least 2, got {max_iter}")));
    }
    let mut prev = start.clone();
    let mut step_norms = Vec::new();
    let mut best: Option<(usize, f64, DMatrix<f64>, DMatrix<f64>, f64, f64)> = None;
    let mut converged = false;
    for j in 2..=max_iter {
        let (psi, beta, rp, rb) = icc_step(sample, d, s, id, &prev)?;
        let step = (&psi - &prev).norm();
        step_norms.push(step);
        if best.as_ref().is_none_or(|b| step < b.1) {
            best = Some((j, step, psi.clone(), beta.clone(), rp, rb));
        }
        if step < tol {
            converged = true;
            best = Some((j, step, psi, beta, rp, rb));
            break;
        }
        prev = psi;
    }
    let (iterations, _, psi_hat, beta_hat, rcond_psi, rcond_beta) =
        best.expect("max_iter >= 2 runs at least one update");
    if !converged {
        log::warn!("ICC did not converge in {max_iter} iterations; returning iterate {iterations}");
    }
    let (psi_star, beta_star) = unrestricted(&psi_hat, &beta_hat, id)?;
    Ok(LoadingEstimate {
        psi_hat,
        beta_hat,
        iterations,
        converged,
        step_norms,
        psi_star,
        beta_star,
        rcond_psi,
        rcond_beta,
        identification: id.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrvEstimate {
    pub s: usize,
    /// Full `(s+r)×(s+r)` matrix `Ω̂`.
    #[serde(with = "serde_rows")]
    pub omega: DMatrix<f64>,
    /// `Ω̂₂₂ − Ω̂₂₁ Ω̂₁₁⁻¹ Ω̂₁₂`.
    #[serde(with = "serde_rows")]
    pub omega_221: DMatrix<f64>,
}

impl LrvEstimate {
    pub fn omega_11(&self) -> DMatrix<f64> {
        self.omega.view((0, 0), (self.s, self.s)).into_owned()
    }

    pub fn omega_12(&self) -> DMatrix<f64> {
        let n = self.omega.nrows();
        self.omega.view((0, self.s), (self.s, n - self.s)).into_owned()
    }

    pub fn omega_22(&self) -> DMatrix<f64> {
        let n = self.omega.nrows();
        self.omega
            .view((self.s, self.s), (n - self.s, n - self.s))
            .into_owned()
    }
}

/// `Ω̂ = (T/K) Z M_dd⁻¹ Z'` with `Z = (ā'M_Δxd ; β̂'M_xd)` and `a = ψ̂`.
pub fn lrv(
    sample: &Sample,
    d: &BasisMatrix,
    psi_hat: &DMatrix<f64>,
    beta_hat: &DMatrix<f64>,
) -> Result<LrvEstimate> {
    let p = sample.dim();
    let s = psi_hat.ncols();
    if psi_hat.nrows() != p || beta_hat.nrows() != p || s + beta_hat.ncols() != p {
        return Err(Error::Dimension("ψ̂ and β̂ must be p×s and p×(p−s)".into()));
    }
    let a_bar = linalg::bar(psi_hat, "ψ̂'ψ̂")?;
    let m_dxd = moment(&sample.differences(), d.values())?;
    let m_xd = moment(&sample.x, d.values())?;
    let mut z = DMatrix::zeros(p, d.k());
    z.rows_mut(0, s).copy_from(&a_bar.tr_mul(&m_dxd));
    z.rows_mut(s, p - s).copy_from(&beta_hat.tr_mul(&m_xd));
    let scale = d.t() as f64 / d.k() as f64;
    let mut omega = &z * d.solve_gram(&z.transpose())? * scale;
    linalg::symmetrize(&mut omega);
    let mut est = LrvEstimate {
        s,
        omega,
        omega_221: DMatrix::zeros(0, 0),
    };
    let o22 = est.omega_22();
    est.omega_221 = if s == 0 {
        o22
    } else {
        let o11 = est.omega_11();
        let o12 = est.omega_12();
        let mut o = &o22 - o12.transpose() * linalg::solve(&o11, &o12, "Ω̂₁₁")?;
        linalg::symmetrize(&mut o);
        o
    };
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    #[serde(rename = "Q")]
    pub q: f64,
    /// The same statistic evaluated on `β̂_*'` with `−h`.
    #[serde(rename = "Q_dual")]
    pub q_dual: f64,
    pub dof: usize,
    pub p_value: f64,
    #[serde(rename = "R", with = "serde_rows")]
    pub r: DMatrix<f64>,
    pub h: Vec<f64>,
}

/// Wald test of `R' vec(ψ_*) = h`, equivalently `R' vec(β_*') = −h`.
pub fn wald(
    est: &LoadingEstimate,
    lrv: &LrvEstimate,
    sample: &Sample,
    r: &DMatrix<f64>,
    h: &[f64],
) -> Result<WaldResult> {
    let s = est.psi_hat.ncols();
    let rr = est.beta_hat.ncols();
    let t = sample.len() as f64;
    if s == 0 || rr == 0 {
        return Err(Error::InvalidArgument(format!(
            "no free loading coefficients with s={s}, r={rr}"
        )));
    }
    let m = r.ncols();
    if r.nrows() != s * rr || m != h.len() || m == 0 {
        return Err(Error::Dimension(format!(
            "R must be {}×m and h an m-vector; got R {}×{} and h of length {}",
            s * rr,
            r.nrows(),
            m,
            h.len()
        )));
    }
    linalg::require_full_column_rank(r, "R")?;
    let a_bar = linalg::bar(&est.psi_hat, "ψ̂'ψ̂")?;
    let m_xx = moment(&sample.x, &sample.x)?;
    let mut w1 = a_bar.tr_mul(&(&m_xx * &a_bar)) / t;
    linalg::symmetrize(&mut w1);
    let u = linalg::inverse(&w1, "ā'M_xxā")?.kronecker(&lrv.omega_221);
    let mut rur = r.tr_mul(&(&u * r));
    linalg::symmetrize(&mut rur);
    let chol = linalg::checked_cholesky(&rur, "R'ÛR", linalg::RCOND_MIN)?;
    let h = DVector::from_column_slice(h);
    let form = |dev: DVector<f64>| t * t * dev.dot(&chol.solve(&dev));
    let q = form(r.tr_mul(&linalg::vec(&est.psi_star)) - &h);
    let q_dual = form(r.tr_mul(&linalg::vec(&est.beta_star.transpose())) + &h);
    let chi = ChiSquared::new(m as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p_value = chi.sf(q.max(0.0)).clamp(0.0, 1.0);
    Ok(WaldResult {
        q,
        q_dual,
        dof: m,
        p_value,
        r: r.clone(),
        h: h.iter().copied().collect(),
    })
}

/// Result of the greedy search for coordinate identification columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSearch {
    /// Chosen columns of `b`, in increasing order.
    pub columns: Vec<usize>,
    /// Columns rejected because adding them lowered the trend count.
    pub skipped: Vec<usize>,
    pub pair: IdentificationPair,
}

/// Forward selection of coordinate columns for `b`. Each step ranks the
/// remaining columns by the smallest squared canonical correlation of the
/// enlarged sub-panel and keeps the best one whose sub-panel still shows as
/// many trends as columns; candidates failing that rule are skipped for good.
pub fn select_identification(
    sample: &Sample,
    s: usize,
    d: &BasisMatrix,
    method: CountMethod,
    tables: Option<&LimitLawTables>,
) -> Result<IdentificationSearch> {
    let p = sample.dim();
    if s > p {
        return Err(Error::InvalidArgument(format!("s={s} exceeds p={p}")));
    }
    let mut m_ff = moment(&sample.x, &sample.x)?;
    linalg::symmetrize(&mut m_ff);
    let m_fd = moment(&sample.x, d.values())?;
    let sub_cca = |cols: &[usize]| {
        let ff = DMatrix::from_fn(cols.len(), cols.len(), |i, j| m_ff[(cols[i], cols[j])]);
        let fd = m_fd.select_rows(cols);
        cca_from_moments(ff, &fd, d)
    };
    let mut columns: Vec<usize> = Vec::new();
    let mut skipped = Vec::new();
    let mut remaining: Vec<usize> = (0..p).collect();
    while columns.len() < s && !remaining.is_empty() {
        let mut ranked = Vec::with_capacity(remaining.len());
        for &j in &remaining {
            let mut trial = columns.clone();
            trial.push(j);
            match sub_cca(&trial) {
                Ok(res) => ranked.push((j, res.eigenvalue_vec())),
                Err(e) if e.is_numerical() => skipped.push(j),
                Err(e) => return Err(e),
            }
        }
        ranked.sort_by(|a, b| {
            let (la, lb) = (a.1.last().copied().unwrap_or(0.0), b.1.last().copied().unwrap_or(0.0));
            lb.total_cmp(&la).then(a.0.cmp(&b.0))
        });
        let mut chosen = None;
        for (j, lambda) in ranked {
            if chosen.is_some() {
                continue;
            }
            let count = match estimate_count(&lambda, d.t(), d.k(), method, tables) {
                Err(Error::InvalidArgument(_)) => estimate_count(&lambda, d.t(), d.k(), CountMethod::MaxGap, None)?,
                other => other?,
            };
            if count.s_hat >= lambda.len() {
                chosen = Some(j);
            } else {
                skipped.push(j);
            }
        }
        remaining.retain(|j| Some(*j) != chosen && !skipped.contains(j));
        match chosen {
            Some(j) => columns.push(j),
            None => break,
        }
    }
    if columns.len() < s {
        return Err(Error::Identification(format!(
            "no set of {s} coordinate columns carries {s} trends (found {:?})",
            columns
        )));
    }
    skipped.sort_unstable();
    if !skipped.is_empty() {
        log::info!("identification: skipped columns {skipped:?}, using {columns:?}");
    }
    let pair = IdentificationPair::coordinates(p, &columns)?;
    Ok(IdentificationSearch {
        columns,
        skipped,
        pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::kl_design;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_walks(t: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(t, p);
        for j in 0..p {
            let mut acc = 0.0;
            for i in 0..t {
                let e: f64 = StandardNormal.sample(&mut rng);
                acc += e;
                x[(i, j)] = acc;
            }
        }
        x
    }

    /// p=3, s=2: x3 = x1 + 0.5 x2 + noise.
    fn cointegrated(t: usize, seed: u64) -> Sample {
        let mut x = random_walks(t, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for i in 0..t {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[(i, 2)] = x[(i, 0)] + 0.5 * x[(i, 1)] + e;
        }
        Sample::from_zero_start(x)
    }

    #[test]
    fn complement_examples() {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let c = complement(&b).unwrap();
        assert!(c[(0, 0)].abs() < 1e-12);
        assert!((c[(1, 0)].abs() - 1.0).abs() < 1e-12);
        assert_eq!(complement(&DMatrix::identity(3, 3)).unwrap().ncols(), 0);
        let b = DMatrix::from_fn(5, 2, |i, j| ((i * 3 + j * 7) as f64 * 0.91).sin());
        let c = complement(&b).unwrap();
        assert!(linalg::max_abs(&c.tr_mul(&b)) < 1e-12);
        assert!(linalg::max_abs(&(c.tr_mul(&c) - DMatrix::identity(3, 3))) < 1e-12);
        let bad = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        assert!(complement(&bad).is_err());
    }

    #[test]
    fn coordinate_pairs() {
        let id = IdentificationPair::coordinates(4, &[2, 0]).unwrap();
        assert_eq!(id.b[(2, 0)], 1.0);
        assert_eq!(id.b[(0, 1)], 1.0);
        assert_eq!(id.c[(1, 0)], 1.0);
        assert_eq!(id.c[(3, 1)], 1.0);
        assert!(IdentificationPair::coordinates(3, &[0, 0]).is_err());
        assert!(IdentificationPair::new(DMatrix::identity(2, 1), DMatrix::from_element(2, 1, 1.0)).is_err());
    }

    #[test]
    fn square_normalisation_gives_identity() {
        let sample = Sample::from_zero_start(random_walks(200, 3, 4));
        let d = kl_design(20, 200).unwrap();
        let res = cca(&sample.x, &d).unwrap();
        let id = IdentificationPair::from_b(DMatrix::identity(3, 3)).unwrap();
        let est = one_step(&sample, &d, &res, 3, &id).unwrap();
        assert!(linalg::max_abs(&(est.psi_hat - DMatrix::<f64>::identity(3, 3))) < 1e-10);
        assert_eq!(est.beta_hat.ncols(), 0);
    }

    #[test]
    fn normalisation_and_duality() {
        let sample = cointegrated(300, 7);
        let d = kl_design(40, 300).unwrap();
        let id = IdentificationPair::coordinates(3, &[0, 1]).unwrap();
        let est = icc(&sample, &d, 2, &id, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(linalg::max_abs(&(id.b.tr_mul(&est.psi_hat) - DMatrix::identity(2, 2))) < 1e-10);
        assert!(linalg::max_abs(&(id.c.tr_mul(&est.beta_hat) - DMatrix::identity(1, 1))) < 1e-10);
        assert!(linalg::max_abs(&(&est.psi_star + est.beta_star.transpose())) < 1e-10);
        // β̂ close to (−1, −0.5, 1)' normalised on the third coordinate.
        assert!((est.beta_hat[(0, 0)] + 1.0).abs() < 0.05);
        assert!((est.beta_hat[(1, 0)] + 0.5).abs() < 0.05);
    }

    #[test]
    fn eigenvector_rescaling_invariance() {
        let sample = cointegrated(250, 9);
        let d = kl_design(30, 250).unwrap();
        let mut res = cca(&sample.x, &d).unwrap();
        let id = IdentificationPair::coordinates(3, &[0, 1]).unwrap();
        let a = one_step(&sample, &d, &res, 2, &id).unwrap();
        for (j, f) in [3.0, -0.2, 11.0].iter().enumerate() {
            res.eigenvectors.column_mut(j).scale_mut(*f);
        }
        let b = one_step(&sample, &d, &res, 2, &id).unwrap();
        assert!(linalg::max_abs(&(a.psi_hat - b.psi_hat)) < 1e-10);
        assert!(linalg::max_abs(&(a.beta_hat - b.beta_hat)) < 1e-10);
    }

    #[test]
    fn residualize_conventions() {
        let sample = cointegrated(100, 3);
        let d = kl_design(10, 100).unwrap();
        let e = residualize(&sample, &d, &DMatrix::zeros(3, 0)).unwrap();
        assert_eq!(e, sample.x);
        let zero = Sample::from_zero_start(DMatrix::zeros(100, 2));
        let e = residualize(&zero, &d, &DMatrix::identity(2, 1)).unwrap();
        assert_eq!(e, zero.x);
    }

    #[test]
    fn icc_fixed_point_and_span_invariance() {
        let sample = cointegrated(400, 21);
        let d = kl_design(50, 400).unwrap();
        let id = IdentificationPair::coordinates(3, &[0, 1]).unwrap();
        let est = icc(&sample, &d, 2, &id, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(est.converged);
        let again = icc_from(&sample, &d, 2, &id, &est.psi_hat, DEFAULT_TOL, 2).unwrap();
        assert!(again.step_norms[0] < 1e-9);

        let res = cca(&sample.x, &d).unwrap();
        let start = one_step(&sample, &d, &res, 2, &id).unwrap().psi_hat;
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -1.0, 0.7]);
        let (a, ..) = icc_step(&sample, &d, 2, &id, &start).unwrap();
        let (b, ..) = icc_step(&sample, &d, 2, &id, &(&start * g)).unwrap();
        assert!(linalg::max_abs(&(a - b)) < 1e-8);
    }

    #[test]
    fn lrv_structure() {
        let sample = cointegrated(300, 5);
        let d = kl_design(40, 300).unwrap();
        let id = IdentificationPair::coordinates(3, &[0, 1]).unwrap();
        let est = icc(&sample, &d, 2, &id, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let l = lrv(&sample, &d, &est.psi_hat, &est.beta_hat).unwrap();
        assert_eq!(l.omega.shape(), (3, 3));
        assert!(linalg::spectrum_bounds(&l.omega).0 >= -1e-10);
        assert_eq!(l.omega_221.shape(), (1, 1));
        let full = lrv(&sample, &d, &DMatrix::identity(3, 3), &DMatrix::zeros(3, 0)).unwrap();
        assert_eq!(full.omega_221.shape(), (0, 0));
        assert_eq!(full.omega_11(), full.omega);
    }

    #[test]
    fn wald_null_at_estimate_and_duality() {
        let sample = cointegrated(300, 11);
        let d = kl_design(40, 300).unwrap();
        let id = IdentificationPair::coordinates(3, &[0, 1]).unwrap();
        let est = icc(&sample, &d, 2, &id, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let l = lrv(&sample, &d, &est.psi_hat, &est.beta_hat).unwrap();
        let r = DMatrix::identity(2, 2);
        let h: Vec<f64> = est.psi_star.iter().copied().collect();
        let w = wald(&est, &l, &sample, &r, &h).unwrap();
        assert!(w.q.abs() < 1e-12);
        assert!((w.p_value - 1.0).abs() < 1e-9);
        let w = wald(&est, &l, &sample, &r, &[0.9, 0.4]).unwrap();
        assert!(w.q >= 0.0);
        assert!((w.q - w.q_dual).abs() <= 1e-10 * w.q.max(1.0));
        assert!(wald(&est, &l, &sample, &DMatrix::zeros(2, 1), &[0.0]).is_err());
    }

    #[test]
    fn greedy_identification_prefers_trending_columns() {
        // Column 0 is stationary, columns 1 and 2 are independent walks.
        let mut x = random_walks(400, 3, 31);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for i in 0..400 {
            x[(i, 0)] = StandardNormal.sample(&mut rng);
        }
        let sample = Sample::from_zero_start(x);
        let d = kl_design(60, 400).unwrap();
        let found = select_identification(&sample, 2, &d, CountMethod::MaxGap, None).unwrap();
        let mut cols = found.columns.clone();
        cols.sort_unstable();
        assert_eq!(cols, vec![1, 2]);
        assert!(!found.skipped.contains(&1) && !found.skipped.contains(&2));
        assert!(select_identification(&sample, 3, &d, CountMethod::MaxGap, None).is_err());
    }
}
