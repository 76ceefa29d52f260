//! Deterministic regressors: a finite orthonormal basis of `L²[0,1]`
//! evaluated on the grid `t/T`, `t = 1..T`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// User supplied basis function `φ(k, u)` with `k` starting at 1.
pub type BasisFn = dyn Fn(usize, f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum BasisFamily {
    /// `φ_k(u) = √2 sin((k - ½) π u)`.
    KarhunenLoeve,
    /// Any callback; orthonormality is the caller's responsibility.
    Custom(Arc<BasisFn>),
}

impl fmt::Debug for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFamily::KarhunenLoeve => f.write_str("KarhunenLoeve"),
            BasisFamily::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Kl,
    Custom,
}

/// `ν_k = 1 / ((k - ½) π)` for `k = 1..K`.
pub fn kl_frequencies(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Dimension("K must be at least 1".into()));
    }
    Ok((1..=k).map(|i| 1.0 / ((i as f64 - 0.5) * PI)).collect())
}

/// `√2 sin(u / ν_k)`.
pub fn kl_function(k: usize, u: f64) -> f64 {
    SQRT_2 * ((k as f64 - 0.5) * PI * u).sin()
}

/// `⌈T^{3/4}⌉`, computed exactly as the smallest `k` with `k⁴ ≥ T³`.
pub fn default_k(t: usize) -> usize {
    let target = (t as u128).pow(3);
    let mut k = (t as f64).powf(0.75).floor() as u128;
    while k > 0 && k.pow(4) >= target {
        k -= 1;
    }
    while k.pow(4) < target {
        k += 1;
    }
    k as usize
}

/// Row `t` holds `(φ_1(t/T), ..., φ_K(t/T))`, together with the sample Gram
/// matrix `M_dd` and its Cholesky factor.
pub struct BasisMatrix {
    values: DMatrix<f64>,
    kind: BasisKind,
    gram: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    bounds: OnceLock<(f64, f64)>,
}

impl fmt::Debug for BasisMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisMatrix")
            .field("kind", &self.kind)
            .field("T", &self.t())
            .field("K", &self.k())
            .finish()
    }
}

pub fn build_design(k: usize, t: usize, family: &BasisFamily) -> Result<BasisMatrix> {
    if k == 0 || t == 0 {
        return Err(Error::Dimension(format!("need K >= 1 and T >= 1, got K={k}, T={t}")));
    }
    if t < k {
        log::warn!("basis with K={k} exceeds the sample size T={t}; M_dd will be singular");
    }
    let tf = t as f64;
    let (values, kind) = match family {
        BasisFamily::KarhunenLoeve => (
            DMatrix::from_fn(t, k, |i, j| kl_function(j + 1, (i + 1) as f64 / tf)),
            BasisKind::Kl,
        ),
        BasisFamily::Custom(f) => (
            DMatrix::from_fn(t, k, |i, j| f(j + 1, (i + 1) as f64 / tf)),
            BasisKind::Custom,
        ),
    };
    BasisMatrix::from_values(values, kind)
}

/// Karhunen-Loève design with `K` columns over `T` points.
pub fn kl_design(k: usize, t: usize) -> Result<BasisMatrix> {
    build_design(k, t, &BasisFamily::KarhunenLoeve)
}

impl BasisMatrix {
    pub fn from_values(values: DMatrix<f64>, kind: BasisKind) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Dimension("empty basis".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("basis has non-finite entries".into()));
        }
        let mut gram = values.tr_mul(&values) / values.nrows() as f64;
        linalg::symmetrize(&mut gram);
        let chol = Cholesky::new(gram.clone());
        Ok(Self {
            values,
            kind,
            gram,
            chol,
            bounds: OnceLock::new(),
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn t(&self) -> usize {
        self.values.nrows()
    }

    /// `M_dd = T⁻¹ Σ d_t d_t'`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `‖M_dd - I_K‖_max`, for checking a custom basis.
    pub fn gram_deviation(&self) -> f64 {
        let k = self.k();
        linalg::max_abs(&(&self.gram - DMatrix::<f64>::identity(k, k)))
    }

    /// Smallest and largest eigenvalue of `M_dd`. Exact for `K <= 256`,
    /// otherwise a power-iteration estimate.
    pub fn gram_spectrum(&self) -> (f64, f64) {
        *self.bounds.get_or_init(|| {
            if self.k() <= 256 {
                linalg::spectrum_bounds(&self.gram)
            } else {
                self.power_bounds()
            }
        })
    }

    fn power_bounds(&self) -> (f64, f64) {
        let k = self.k();
        let start = DVector::from_fn(k, |i, _| 1.0 + (i as f64 * 0.618).sin());
        let mut v = start.normalize();
        let mut largest = 0.0;
        for _ in 0..100 {
            let w = &self.gram * &v;
            largest = v.dot(&w);
            v = w.normalize();
        }
        let smallest = match &self.chol {
            Some(chol) => {
                let mut v = start.normalize();
                let mut inv_largest = 0.0;
                for _ in 0..100 {
                    let w = chol.solve(&v);
                    inv_largest = v.dot(&w);
                    v = w.normalize();
                }
                1.0 / inv_largest
            }
            None => 0.0,
        };
        (smallest, largest)
    }

    /// Cholesky factor of `M_dd` after the conditioning check.
    pub fn gram_cholesky(&self) -> Result<&Cholesky<f64, Dyn>> {
        let (smallest, largest) = self.gram_spectrum();
        match &self.chol {
            Some(chol) if largest > 0.0 && smallest > 1e-12 * largest => Ok(chol),
            _ => Err(Error::Conditioning {
                matrix: "M_dd".into(),
                smallest,
                largest,
            }),
        }
    }

    /// `M_dd⁻¹ B` by Cholesky solve.
    pub fn solve_gram(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.gram_cholesky()?.solve(b))
    }
}

/// `K_i = K (1 + i j)` for `i = 0..=m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KGrid {
    pub base_k: usize,
    pub j: usize,
    pub m: usize,
    pub values: Vec<usize>,
}

pub fn k_grid(base_k: usize, j: usize, m: usize) -> Result<KGrid> {
    if base_k == 0 {
        return Err(Error::Dimension("base K must be at least 1".into()));
    }
    Ok(KGrid {
        base_k,
        j,
        m,
        values: (0..=m).map(|i| base_k * (1 + i * j)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_match_formula() {
        let nu = kl_frequencies(10).unwrap();
        assert!((nu[0] - std::f64::consts::FRAC_2_PI).abs() < 1e-15);
        assert!((nu[1] - 0.212_206_6).abs() < 1e-7);
        assert!(nu.windows(2).all(|w| w[0] > w[1]));
        for (i, v) in nu.iter().enumerate() {
            assert!((v * (i as f64 + 0.5) * PI - 1.0).abs() < 1e-14);
        }
        assert!(kl_frequencies(0).is_err());
    }

    #[test]
    fn kl_values_at_known_points() {
        assert!((kl_function(1, 1.0) - SQRT_2).abs() < 1e-15);
        assert!((kl_function(2, 0.5) - 1.0).abs() < 1e-15);
        let d = kl_design(2, 2).unwrap();
        assert!((d.values()[(1, 0)] - SQRT_2).abs() < 1e-15);
        assert!((d.values()[(0, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn default_k_values() {
        assert_eq!(default_k(667), 132);
        assert_eq!(default_k(16), 8);
        assert_eq!(default_k(100), 32);
        assert_eq!(default_k(81), 27);
        assert_eq!(default_k(2), 2);
    }

    #[test]
    fn k_grid_values() {
        assert_eq!(k_grid(132, 1, 2).unwrap().values, vec![132, 264, 396]);
        assert_eq!(k_grid(7, 0, 3).unwrap().values, vec![7; 4]);
        assert_eq!(k_grid(10, 2, 3).unwrap().values, vec![10, 30, 50, 70]);
    }

    #[test]
    fn custom_basis_hook() {
        // Haar-like constant basis: a single column of ones.
        let family = BasisFamily::Custom(Arc::new(|_, _| 1.0));
        let d = build_design(1, 5, &family).unwrap();
        assert_eq!(d.kind(), BasisKind::Custom);
        assert_eq!(d.gram_deviation(), 0.0);
    }

    #[test]
    fn singular_gram_is_reported() {
        let family = BasisFamily::Custom(Arc::new(|_, _| 1.0));
        let d = build_design(2, 5, &family).unwrap();
        assert!(matches!(d.gram_cholesky(), Err(Error::Conditioning { .. })));
    }
}
