//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Reciprocal condition number below which a solve is refused.
pub const RCOND_MIN: f64 = 1e-12;

/// Relative rank tolerance for full-column-rank checks.
pub const RANK_TOL: f64 = 1e-10;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted
/// non-increasing. Ties keep the solver's output order.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn spectrum_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let ev = m.clone().symmetric_eigenvalues();
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Cholesky factor of a symmetric matrix that must be numerically positive
/// definite: smallest eigenvalue above `rel_tol` times the largest.
pub fn checked_cholesky(
    m: &DMatrix<f64>,
    name: &str,
    rel_tol: f64,
) -> Result<Cholesky<f64, Dyn>> {
    let (smallest, largest) = spectrum_bounds(m);
    if !(largest > 0.0) || smallest <= rel_tol * largest {
        return Err(Error::Conditioning {
            matrix: name.to_string(),
            smallest,
            largest,
        });
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::Conditioning {
        matrix: name.to_string(),
        smallest,
        largest,
    })
}

/// Singular values of `m` (descending).
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Fails unless `m` has full column rank under a scale-free tolerance.
pub fn require_full_column_rank(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.ncols() > m.nrows() {
        return Err(Error::Dimension(format!(
            "{what} has more columns ({}) than rows ({})",
            m.ncols(),
            m.nrows()
        )));
    }
    if m.ncols() == 0 {
        return Ok(());
    }
    let sv = singular_values(m);
    let largest = sv[0];
    let smallest = *sv.last().unwrap();
    if !(largest > 0.0) || smallest <= RANK_TOL * largest {
        return Err(Error::RankDeficient {
            what: what.to_string(),
            smallest,
            largest,
        });
    }
    Ok(())
}

/// Reciprocal 2-norm condition number of a square matrix.
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

/// Solves `a x = b` for square `a`, refusing ill-conditioned systems.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let rc = rcond(a);
    if rc < RCOND_MIN {
        let sv = singular_values(a);
        return Err(Error::Conditioning {
            matrix: name.to_string(),
            smallest: *sv.last().unwrap_or(&0.0),
            largest: *sv.first().unwrap_or(&0.0),
        });
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::Conditioning {
        matrix: name.to_string(),
        smallest: 0.0,
        largest: 0.0,
    })
}

pub fn inverse(a: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    solve(a, &DMatrix::identity(a.nrows(), a.nrows()), name)
}

/// Column-stacking vectorisation.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `a (a'a)^{-1}`, the "bar" of a full-column-rank matrix.
pub fn bar(a: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    if a.ncols() == 0 {
        return Ok(a.clone());
    }
    let ata = a.tr_mul(a);
    let inv = inverse(&ata, name)?;
    Ok(a * inv)
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serde adapter writing a matrix as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = sym_eigen_desc(m.clone());
        assert_eq!(vals.as_slice(), &[3.0, 2.0, 1.0]);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!(max_abs(&(recon - m)) < 1e-12);
    }

    #[test]
    fn rank_check_rejects_dependent_columns() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(
            require_full_column_rank(&m, "H"),
            Err(Error::RankDeficient { .. })
        ));
        let ok = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        require_full_column_rank(&ok, "H").unwrap();
    }

    #[test]
    fn solve_refuses_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(solve(&a, &DMatrix::identity(2, 2), "A").is_err());
    }

    #[test]
    fn vec_is_column_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&m).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    }
}
