//! Complex Hermitian and real symmetric matrix utilities.
//!
//! Spectral density matrices, periodogram matrices and frequency-domain
//! residuals are Hermitian; the real second-moment matrices of stacked
//! (Re, Im) vectors are symmetric. Both kinds are stored symmetrized and
//! all matrix functions (square root, inverse square root, PSD projection)
//! go through the eigendecomposition with the principal-root convention:
//! the unique PSD Hermitian root is returned.
//!
//! Two stabilizations are built in because finite samples violate the
//! idealized assumptions:
//! - square roots accept an eigenvalue floor (spectral estimates must be
//!   positive definite before they are inverted), and
//! - inverse square roots use a relative pseudo-inverse threshold, since
//!   second-moment matrices of real-valued statistics have an exactly zero
//!   imaginary block.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{MfhbError, Result};

/// Relative eigenvalue floor applied to spectral estimates before they are
/// used as positive-definite matrices (`floor = REL * trace / dim`).
pub const SPECTRAL_FLOOR_REL: f64 = 1e-10;

/// Relative threshold below which eigenvalues are treated as exactly zero
/// when pseudo-inverting second-moment matrices.
pub const PSEUDO_INVERSE_REL_THRESHOLD: f64 = 1e-10;

const EIGEN_MAX_ITER: usize = 4096;

/// Complex Hermitian matrix; constructors symmetrize, so the invariant
/// `a[r][s] == conj(a[s][r])` holds exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    mat: DMatrix<Complex64>,
}

impl HermitianMatrix {
    /// Build from an arbitrary square matrix by averaging with its conjugate
    /// transpose; diagonal imaginary parts become exactly zero.
    pub fn new(raw: DMatrix<Complex64>) -> Self {
        assert_eq!(raw.nrows(), raw.ncols(), "matrix must be square");
        let dim = raw.nrows();
        let mut mat = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            mat[(r, r)] = Complex64::new(raw[(r, r)].re, 0.0);
            for s in (r + 1)..dim {
                let avg = 0.5 * (raw[(r, s)] + raw[(s, r)].conj());
                mat[(r, s)] = avg;
                mat[(s, r)] = avg.conj();
            }
        }
        Self { mat }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut mat = DMatrix::zeros(dim, dim);
        for (i, &d) in diag.iter().enumerate() {
            mat[(i, i)] = Complex64::new(d, 0.0);
        }
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn entry(&self, r: usize, s: usize) -> Complex64 {
        self.mat[(r, s)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    /// Transpose (not conjugate transpose); used for the reflection
    /// `M(-lambda) = M(lambda)^T` of spectral fields.
    pub fn transposed(&self) -> Self {
        Self {
            mat: self.mat.transpose(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            mat: self.mat.map(|z| z * factor),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat - &other.mat,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn trace_real(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// Eigendecomposition with eigenvalues sorted descending and a unitary
    /// eigenvector matrix (columns ordered accordingly).
    pub fn eig(&self) -> Result<(DVector<f64>, DMatrix<Complex64>)> {
        let eig = self
            .mat
            .clone()
            .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITER)
            .ok_or_else(|| MfhbError::EigenFailure {
                dim: self.dim(),
                condition: condition_indicator(&self.mat),
            })?;
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("finite eigenvalues")
        });
        let values = DVector::from_iterator(self.dim(), order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = DMatrix::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        Ok((values, vectors))
    }

    /// Apply a spectral map `w -> f(w)` through the eigendecomposition.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let (values, vectors) = self.eig()?;
        let mapped = DVector::from_iterator(self.dim(), values.iter().map(|&w| f(w)));
        Ok(reassemble(&mapped, &vectors))
    }

    /// Principal PSD square root of the matrix with eigenvalues clamped to
    /// `floor` from below. Returns the root and the number of eigenvalues
    /// that had to be raised.
    pub fn sqrt(&self, floor: f64) -> Result<(Self, usize)> {
        let (values, vectors) = self.eig()?;
        let clamped = values.iter().filter(|&&w| w < floor).count();
        let mapped = DVector::from_iterator(self.dim(), values.iter().map(|&w| w.max(floor).sqrt()));
        Ok((reassemble(&mapped, &vectors), clamped))
    }

    /// Principal root of the pseudo-inverse: eigenvalues at or below
    /// `rel_threshold * max_eigenvalue` are treated as exactly zero.
    pub fn inv_sqrt(&self, rel_threshold: f64) -> Result<Self> {
        let (values, vectors) = self.eig()?;
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return Err(MfhbError::NumericallyZeroMatrix);
        }
        let cut = rel_threshold * max;
        let mut retained = 0usize;
        let mapped = DVector::from_iterator(
            self.dim(),
            values.iter().map(|&w| {
                if w > cut {
                    retained += 1;
                    1.0 / w.sqrt()
                } else {
                    0.0
                }
            }),
        );
        if retained == 0 {
            return Err(MfhbError::NumericallyZeroMatrix);
        }
        Ok(reassemble(&mapped, &vectors))
    }

    /// Clamp eigenvalues to `floor` from below; returns the count raised.
    pub fn floor_eigenvalues(&self, floor: f64) -> Result<(Self, usize)> {
        let (values, vectors) = self.eig()?;
        let clamped = values.iter().filter(|&&w| w < floor).count();
        if clamped == 0 {
            return Ok((self.clone(), 0));
        }
        let mapped = DVector::from_iterator(self.dim(), values.iter().map(|&w| w.max(floor)));
        Ok((reassemble(&mapped, &vectors), clamped))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (values, _) = self.eig()?;
        Ok(values[self.dim() - 1])
    }
}

fn reassemble(values: &DVector<f64>, vectors: &DMatrix<Complex64>) -> HermitianMatrix {
    let diag = DMatrix::from_diagonal(&values.map(|w| Complex64::new(w, 0.0)));
    HermitianMatrix::new(vectors * diag * vectors.adjoint())
}

fn condition_indicator(mat: &DMatrix<Complex64>) -> f64 {
    let norm = mat.norm();
    let dim = mat.nrows() as f64;
    if norm == 0.0 {
        0.0
    } else {
        norm * dim
    }
}

/// Real symmetric matrix, stored exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricRealMatrix {
    mat: DMatrix<f64>,
}

impl SymmetricRealMatrix {
    pub fn new(raw: DMatrix<f64>) -> Self {
        assert_eq!(raw.nrows(), raw.ncols(), "matrix must be square");
        let dim = raw.nrows();
        let mut mat = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            mat[(r, r)] = raw[(r, r)];
            for s in (r + 1)..dim {
                let avg = 0.5 * (raw[(r, s)] + raw[(s, r)]);
                mat[(r, s)] = avg;
                mat[(s, r)] = avg;
            }
        }
        Self { mat }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            mat: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn entry(&self, r: usize, s: usize) -> f64 {
        self.mat[(r, s)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            mat: &self.mat - &other.mat,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            mat: &self.mat * factor,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn eig(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let eig = self
            .mat
            .clone()
            .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITER)
            .ok_or(MfhbError::EigenFailure {
                dim: self.dim(),
                condition: self.mat.norm() * self.dim() as f64,
            })?;
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("finite eigenvalues")
        });
        let values = DVector::from_iterator(self.dim(), order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = DMatrix::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        Ok((values, vectors))
    }

    /// Principal PSD square root with eigenvalue clamping at `floor`.
    pub fn sqrt(&self, floor: f64) -> Result<Self> {
        let (values, vectors) = self.eig()?;
        let mapped = DVector::from_iterator(self.dim(), values.iter().map(|&w| w.max(floor).sqrt()));
        Ok(reassemble_real(&mapped, &vectors))
    }

    /// Pseudo-inverse square root with a relative eigenvalue threshold.
    pub fn inv_sqrt(&self, rel_threshold: f64) -> Result<Self> {
        let (values, vectors) = self.eig()?;
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return Err(MfhbError::NumericallyZeroMatrix);
        }
        let cut = rel_threshold * max;
        let mapped = DVector::from_iterator(
            self.dim(),
            values.iter().map(|&w| if w > cut { 1.0 / w.sqrt() } else { 0.0 }),
        );
        Ok(reassemble_real(&mapped, &vectors))
    }

    /// Nearest PSD matrix in Frobenius norm (eigenvalue clipping at zero).
    /// Returns the projection and the number of negative eigenvalues clipped.
    pub fn psd_project(&self) -> Result<(Self, usize)> {
        let (values, vectors) = self.eig()?;
        let clipped = values.iter().filter(|&&w| w < 0.0).count();
        if clipped == 0 {
            return Ok((self.clone(), 0));
        }
        let mapped = DVector::from_iterator(self.dim(), values.iter().map(|&w| w.max(0.0)));
        Ok((reassemble_real(&mapped, &vectors), clipped))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (values, _) = self.eig()?;
        Ok(values[self.dim() - 1])
    }
}

fn reassemble_real(values: &DVector<f64>, vectors: &DMatrix<f64>) -> SymmetricRealMatrix {
    let diag = DMatrix::from_diagonal(values);
    SymmetricRealMatrix::new(vectors * diag * vectors.transpose())
}
