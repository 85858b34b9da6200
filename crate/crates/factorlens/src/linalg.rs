//! Symmetric matrices, eigendecompositions, and sample statistics.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{first_non_finite, Dataset};
use crate::error::{Error, Result};

/// Relative asymmetry tolerated when accepting a matrix as symmetric.
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// Relative floor on the smallest eigenvalue when validating positive
/// semidefiniteness.
pub const PSD_RTOL: f64 = 1e-10;

/// A validated M x M real symmetric matrix, used for population and sample
/// covariances alike.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    mat: DMatrix<f64>,
}

impl CovMatrix {
    /// Accept `mat` if it is square, finite, and symmetric to within
    /// [`SYMMETRY_RTOL`] relative to its largest entry.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::input(format!(
                "covariance matrix must be square and non-empty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if let Some((i, j)) = first_non_finite(&mat) {
            return Err(Error::input(format!(
                "non-finite covariance entry at ({i}, {j})"
            )));
        }
        let scale = mat.amax().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..mat.nrows() {
            for j in (i + 1)..mat.ncols() {
                worst = worst.max((mat[(i, j)] - mat[(j, i)]).abs());
            }
        }
        if worst > SYMMETRY_RTOL * scale {
            return Err(Error::input(format!(
                "matrix is not symmetric: max asymmetry {worst:.3e} exceeds {:.3e}",
                SYMMETRY_RTOL * scale
            )));
        }
        // Store the exactly symmetric average so downstream code never sees
        // the residual asymmetry.
        let sym = symmetric_average(&mat);
        Ok(CovMatrix { mat: sym })
    }

    /// Symmetrize `(A + A^T)/2` without an asymmetry check. For internal use
    /// on matrices that are symmetric up to roundoff by construction.
    pub(crate) fn symmetrized(mat: DMatrix<f64>) -> Self {
        CovMatrix {
            mat: symmetric_average(&mat),
        }
    }

    pub fn identity(m: usize) -> Self {
        CovMatrix {
            mat: DMatrix::identity(m, m),
        }
    }

    pub fn from_diagonal(diag: &DVector<f64>) -> Self {
        CovMatrix {
            mat: DMatrix::from_diagonal(diag),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.mat.diagonal()
    }

    /// Check positive semidefiniteness: the smallest eigenvalue must be at
    /// least `-PSD_RTOL` times the spectral scale. Costs an eigendecomposition;
    /// intended for input validation and tests, not hot paths.
    pub fn validate_psd(&self) -> Result<()> {
        let eig = eigh_desc(self);
        let max = eig.values()[0].abs().max(f64::MIN_POSITIVE);
        let min = eig.values()[self.dim() - 1];
        if min < -PSD_RTOL * max {
            return Err(Error::input(format!(
                "matrix is not positive semidefinite: min eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }
}

fn symmetric_average(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = mat.clone();
    for i in 0..mat.nrows() {
        for j in (i + 1)..mat.ncols() {
            let v = 0.5 * (mat[(i, j)] + mat[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Orthonormal eigenbasis and descending eigenvalues of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    basis: DMatrix<f64>,
    values: DVector<f64>,
}

impl EigenSystem {
    /// Columns of the orthonormal basis, ordered to match `values`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Eigenvalues sorted in descending order.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Rebuild `B diag(s) B^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut scaled = self.basis.clone();
        for k in 0..m {
            let s = self.values[k];
            scaled.column_mut(k).scale_mut(s);
        }
        &scaled * self.basis.transpose()
    }

    /// Rebuild with the eigenvalues replaced by `values` (same basis).
    pub fn reconstruct_with(&self, values: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(values.len(), self.dim());
        let mut scaled = self.basis.clone();
        for k in 0..self.dim() {
            scaled.column_mut(k).scale_mut(values[k]);
        }
        &scaled * self.basis.transpose()
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and a deterministic sign convention: the first component
/// of each eigenvector whose magnitude is non-negligible is made positive.
/// Equal eigenvalues keep the order the factorization produced, so degenerate
/// spectra are handled deterministically.
pub fn eigh_desc(m: &CovMatrix) -> EigenSystem {
    let dim = m.dim();
    let eig = m.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let mut basis = DMatrix::zeros(dim, dim);
    let mut values = DVector::zeros(dim);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        let amax = col.amax();
        let threshold = 1e-12 * amax.max(f64::MIN_POSITIVE);
        let mut sign = 1.0;
        for i in 0..dim {
            if col[i].abs() > threshold {
                if col[i] < 0.0 {
                    sign = -1.0;
                }
                break;
            }
        }
        for i in 0..dim {
            basis[(i, dst)] = sign * col[i];
        }
    }
    EigenSystem { basis, values }
}

/// Sample covariance of a zero-mean dataset: `(1/N) sum_n x_n x_n^T`.
///
/// No mean is subtracted; the model throughout this crate is zero-mean
/// Gaussian, and observations are expected to be centered upstream if the
/// application calls for it.
pub fn sample_covariance(data: &Dataset) -> CovMatrix {
    let x = data.samples();
    let n = data.n() as f64;
    let mat = x.transpose() * x / n;
    CovMatrix::symmetrized(mat)
}

/// The sufficient statistics every estimator in this crate consumes: the
/// sample covariance and the sample count. Under the zero-mean Gaussian
/// model, the likelihood of a dataset depends on it only through this pair,
/// so fitting from raw samples and from a precomputed covariance are
/// interchangeable.
///
/// The eigendecomposition is computed lazily and cached, so a grid of
/// penalty values or factor counts evaluated against the same statistics
/// shares a single factorization.
#[derive(Debug)]
pub struct SampleStats {
    cov: CovMatrix,
    n: usize,
    eigen: OnceLock<EigenSystem>,
}

impl SampleStats {
    pub fn from_dataset(data: &Dataset) -> Self {
        SampleStats {
            cov: sample_covariance(data),
            n: data.n(),
            eigen: OnceLock::new(),
        }
    }

    /// Use a precomputed covariance together with the sample count it came
    /// from. The count matters: penalty thresholds scale as 1/N.
    pub fn from_cov(cov: CovMatrix, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::parameter("sample count must be at least 1"));
        }
        Ok(SampleStats {
            cov,
            n,
            eigen: OnceLock::new(),
        })
    }

    pub fn cov(&self) -> &CovMatrix {
        &self.cov
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.cov.dim()
    }

    /// Eigendecomposition of the sample covariance, computed on first use.
    pub fn eigen(&self) -> &EigenSystem {
        self.eigen.get_or_init(|| eigh_desc(&self.cov))
    }
}
