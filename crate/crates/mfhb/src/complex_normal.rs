//! Complex normal calculus.
//!
//! A centered complex Gaussian vector is described by its covariance matrix
//! `Sigma = E[X conj(X)^T]` and relation matrix `Gamma = E[X X^T]`. The pair
//! is equivalent to the real covariance of the stacked vector
//! `(Re X, Im X)`, and the bootstrap works on that lossless 2J-dimensional
//! representation throughout: complex laws go in, real second-moment
//! matrices come out, and vice versa.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MfhbError, Result};
use crate::hermitian::{HermitianMatrix, SymmetricRealMatrix};

/// Centered-law parameters of a complex Gaussian vector.
#[derive(Clone, Debug)]
pub struct ComplexGaussianLaw {
    pub mean: DVector<Complex64>,
    pub covariance: HermitianMatrix,
    pub relation: DMatrix<Complex64>,
}

impl ComplexGaussianLaw {
    pub fn new(
        mean: DVector<Complex64>,
        covariance: HermitianMatrix,
        relation: DMatrix<Complex64>,
    ) -> Result<Self> {
        let dim = covariance.dim();
        if mean.len() != dim || relation.nrows() != dim || relation.ncols() != dim {
            return Err(MfhbError::Invalid("law dimensions disagree".into()));
        }
        let asym = (&relation - relation.transpose()).norm();
        if asym > 1e-12 * (1.0 + relation.norm()) {
            return Err(MfhbError::Invalid(format!(
                "relation matrix not symmetric (defect {asym:.3e})"
            )));
        }
        let law = Self {
            mean,
            covariance,
            relation,
        };
        let rep = to_real_rep(&law);
        if rep.min_eigenvalue()? < -1e-10 {
            return Err(MfhbError::Invalid(
                "induced real covariance is not PSD".into(),
            ));
        }
        Ok(law)
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }
}

/// Real covariance of `(Re X, Im X)` for a centered law:
///
/// ```text
/// G = [ (Re S + Re G)/2   (-Im S + Im G)/2 ]
///     [ (Im S + Im G)/2   ( Re S - Re G)/2 ]
/// ```
///
/// with `S` the covariance and `G` the relation matrix.
pub fn to_real_rep(law: &ComplexGaussianLaw) -> SymmetricRealMatrix {
    real_rep_from_parts(law.covariance.as_matrix(), &law.relation)
}

/// The block assembly behind [`to_real_rep`], on raw covariance and relation
/// matrices.
pub fn real_rep_from_parts(
    covariance: &DMatrix<Complex64>,
    relation: &DMatrix<Complex64>,
) -> SymmetricRealMatrix {
    let dim = covariance.nrows();
    let mut g = DMatrix::zeros(2 * dim, 2 * dim);
    for r in 0..dim {
        for s in 0..dim {
            let cov = covariance[(r, s)];
            let rel = relation[(r, s)];
            g[(r, s)] = 0.5 * (cov.re + rel.re);
            g[(r, s + dim)] = 0.5 * (-cov.im + rel.im);
            g[(r + dim, s)] = 0.5 * (cov.im + rel.im);
            g[(r + dim, s + dim)] = 0.5 * (cov.re - rel.re);
        }
    }
    SymmetricRealMatrix::new(g)
}

/// Invert [`to_real_rep`]: recover `(Sigma, Gamma)` from the block structure.
pub fn from_real_rep(rep: &SymmetricRealMatrix) -> Result<(HermitianMatrix, DMatrix<Complex64>)> {
    let two_dim = rep.dim();
    if two_dim % 2 != 0 {
        return Err(MfhbError::Invalid(
            "real representation must have even dimension".into(),
        ));
    }
    let dim = two_dim / 2;
    let mut covariance = DMatrix::zeros(dim, dim);
    let mut relation = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        for s in 0..dim {
            let g11 = rep.entry(r, s);
            let g12 = rep.entry(r, s + dim);
            let g21 = rep.entry(r + dim, s);
            let g22 = rep.entry(r + dim, s + dim);
            covariance[(r, s)] = Complex64::new(g11 + g22, g21 - g12);
            relation[(r, s)] = Complex64::new(g11 - g22, g21 + g12);
        }
    }
    let relation = (&relation + relation.transpose()) * Complex64::new(0.5, 0.0);
    Ok((HermitianMatrix::new(covariance), relation))
}

/// Sampler for the circularly symmetric law `N_c(0, covariance, 0)`.
///
/// The draw goes through the real representation: `(Re d, Im d)` is jointly
/// normal with covariance `1/2 [[Re f, -Im f], [Im f, Re f]]`, realized by a
/// precomputed PSD square root applied to standard normals.
#[derive(Clone, Debug)]
pub struct CircularSampler {
    transform: DMatrix<f64>,
    dim: usize,
}

impl CircularSampler {
    pub fn new(covariance: &HermitianMatrix) -> Result<Self> {
        let dim = covariance.dim();
        let mut g = DMatrix::zeros(2 * dim, 2 * dim);
        for r in 0..dim {
            for s in 0..dim {
                let z = covariance.entry(r, s);
                g[(r, s)] = 0.5 * z.re;
                g[(r + dim, s + dim)] = 0.5 * z.re;
                g[(r, s + dim)] = -0.5 * z.im;
                g[(r + dim, s)] = 0.5 * z.im;
            }
        }
        let g = SymmetricRealMatrix::new(g);
        let min = g.min_eigenvalue()?;
        if min < -1e-10 * (1.0 + g.frobenius_norm()) {
            return Err(MfhbError::Invalid(format!(
                "covariance not PSD (min eigenvalue {min:.3e})"
            )));
        }
        let transform = g.sqrt(0.0)?.as_matrix().clone();
        Ok(Self { transform, dim })
    }

    pub fn sample(&self, rng: &mut ChaCha12Rng) -> DVector<Complex64> {
        let normals = DVector::from_iterator(
            2 * self.dim,
            (0..2 * self.dim).map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z
            }),
        );
        let stacked = &self.transform * normals;
        DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|r| Complex64::new(stacked[r], stacked[r + self.dim])),
        )
    }
}

/// Draw `count` independent vectors from `N_c(0, covariance, 0)`.
pub fn sample_circular(
    covariance: &HermitianMatrix,
    count: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<DVector<Complex64>>> {
    let sampler = CircularSampler::new(covariance)?;
    Ok((0..count).map(|_| sampler.sample(rng)).collect())
}

/// Average outer product of the stacked `(Re, Im)` vectors; subtracts the
/// empirical-mean outer product when `centered` is set.
pub fn empirical_real_moments(
    vectors: &[DVector<Complex64>],
    centered: bool,
) -> Result<SymmetricRealMatrix> {
    if vectors.len() < 2 {
        return Err(MfhbError::Invalid(
            "need at least two vectors for empirical moments".into(),
        ));
    }
    let dim = vectors[0].len();
    let count = vectors.len() as f64;
    let mut second = DMatrix::zeros(2 * dim, 2 * dim);
    let mut mean = DVector::zeros(2 * dim);
    for v in vectors {
        let stacked = stack_real(v);
        second += &stacked * stacked.transpose();
        mean += stacked;
    }
    second /= count;
    mean /= count;
    if centered {
        second -= &mean * mean.transpose();
    }
    Ok(SymmetricRealMatrix::new(second))
}

/// Stack a complex vector as `(Re, Im)`.
pub fn stack_real(v: &DVector<Complex64>) -> DVector<f64> {
    let dim = v.len();
    DVector::from_iterator(
        2 * dim,
        (0..2 * dim).map(|i| if i < dim { v[i].re } else { v[i - dim].im }),
    )
}

/// Inverse of [`stack_real`].
pub fn unstack_complex(v: &DVector<f64>) -> DVector<Complex64> {
    let dim = v.len() / 2;
    DVector::from_iterator(dim, (0..dim).map(|i| Complex64::new(v[i], v[i + dim])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, RngSeed};

    fn law(cov: HermitianMatrix, rel: DMatrix<Complex64>) -> ComplexGaussianLaw {
        let dim = cov.dim();
        ComplexGaussianLaw::new(DVector::zeros(dim), cov, rel).unwrap()
    }

    #[test]
    fn real_valued_case_has_zero_lower_block() {
        // Sigma == Gamma (real entries) makes the Im block vanish without any
        // special-casing
        let cov = HermitianMatrix::from_diagonal(&[2.0]);
        let rel = DMatrix::from_element(1, 1, Complex64::new(2.0, 0.0));
        let rep = to_real_rep(&law(cov, rel));
        assert_eq!(rep.entry(0, 0), 2.0);
        assert_eq!(rep.entry(0, 1), 0.0);
        assert_eq!(rep.entry(1, 0), 0.0);
        assert_eq!(rep.entry(1, 1), 0.0);
    }

    #[test]
    fn circular_case_splits_evenly() {
        let cov = HermitianMatrix::from_diagonal(&[2.0]);
        let rel = DMatrix::zeros(1, 1);
        let rep = to_real_rep(&law(cov, rel));
        assert_eq!(rep.entry(0, 0), 1.0);
        assert_eq!(rep.entry(1, 1), 1.0);
        assert_eq!(rep.entry(0, 1), 0.0);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut rng = stream(RngSeed(31));
        use rand::Rng;
        let b = DMatrix::from_fn(3, 3, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let cov = HermitianMatrix::new(&b * b.adjoint());
        // a valid relation matrix: Gamma = c * Sigma^T-ish symmetric pick
        let rel = (&b * b.transpose() + (&b * b.transpose()).transpose()) * Complex64::new(0.1, 0.0);
        if let Ok(l) = ComplexGaussianLaw::new(DVector::zeros(3), cov.clone(), rel.clone()) {
            let rep = to_real_rep(&l);
            let (cov2, rel2) = from_real_rep(&rep).unwrap();
            assert!((cov.as_matrix() - cov2.as_matrix()).norm() < 1e-14 * (1.0 + cov.frobenius_norm()));
            assert!((rel - rel2).norm() < 1e-13);
        } else {
            // relation may make the law invalid for this seed; the circular
            // law must always round-trip
            let l = law(cov.clone(), DMatrix::zeros(3, 3));
            let (cov2, rel2) = from_real_rep(&to_real_rep(&l)).unwrap();
            assert!((cov.as_matrix() - cov2.as_matrix()).norm() < 1e-14 * (1.0 + cov.frobenius_norm()));
            assert!(rel2.norm() < 1e-14);
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        let rep = SymmetricRealMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        assert!(from_real_rep(&rep).is_err());
    }

    #[test]
    fn zero_covariance_draws_zero() {
        let mut rng = stream(RngSeed(5));
        let draws = sample_circular(&HermitianMatrix::zeros(2), 10, &mut rng).unwrap();
        for d in draws {
            assert_eq!(d.norm(), 0.0);
        }
    }

    #[test]
    fn circular_moments_match_law() {
        let scale = 1.0 / (2.0 * std::f64::consts::PI);
        let cov = HermitianMatrix::from_diagonal(&[scale, scale]);
        let mut rng = stream(RngSeed(77));
        let count = 20_000usize;
        let draws = sample_circular(&cov, count, &mut rng).unwrap();

        // E |d_r|^2 within 3 MC sd of the target; E d d^T within band of 0
        for r in 0..2 {
            let sq: Vec<f64> = draws.iter().map(|d| d[r].norm_sqr()).collect();
            let mean = sq.iter().sum::<f64>() / count as f64;
            let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64;
            let band = 3.0 * (var / count as f64).sqrt();
            assert!((mean - scale).abs() <= band, "|mean - target| {} > {}", (mean - scale).abs(), band);
        }
        let rel: Complex64 = draws.iter().map(|d| d[0] * d[1]).sum::<Complex64>() / count as f64;
        assert!(rel.norm() < 3.0 * scale / (count as f64).sqrt() * 3.0);
    }

    #[test]
    fn off_diagonal_imaginary_covariance_reproduced() {
        let c = 0.04;
        let raw = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.2, 0.0),
                Complex64::new(0.0, c),
                Complex64::new(0.0, -c),
                Complex64::new(0.2, 0.0),
            ],
        );
        let cov = HermitianMatrix::new(raw);
        let mut rng = stream(RngSeed(78));
        let count = 40_000usize;
        let draws = sample_circular(&cov, count, &mut rng).unwrap();
        let est: Complex64 = draws.iter().map(|d| d[0] * d[1].conj()).sum::<Complex64>() / count as f64;
        let target = cov.entry(0, 1);
        let band = 3.0 * 0.2 / (count as f64).sqrt() * 3.0;
        assert!((est - target).norm() <= band, "est {est} target {target}");
    }

    #[test]
    fn constant_vectors_center_to_zero() {
        let v = DVector::from_element(2, Complex64::new(1.0, -2.0));
        let m = empirical_real_moments(&[v.clone(), v.clone(), v], true).unwrap();
        assert!(m.frobenius_norm() < 1e-12);
    }

    #[test]
    fn two_point_symmetric_sample() {
        let v = DVector::from_iterator(2, [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)]);
        let m = empirical_real_moments(&[v.clone(), -&v], true).unwrap();
        let stacked = stack_real(&v);
        let outer = &stacked * stacked.transpose();
        assert!((m.as_matrix() - &outer).norm() < 1e-12);
    }

    #[test]
    fn large_sample_converges_to_real_rep() {
        let cov = HermitianMatrix::from_diagonal(&[1.0, 0.5]);
        let mut rng = stream(RngSeed(79));
        let draws = sample_circular(&cov, 30_000, &mut rng).unwrap();
        let m = empirical_real_moments(&draws, false).unwrap();
        let target = to_real_rep(&law(cov, DMatrix::zeros(2, 2)));
        let err = m.sub(&target).frobenius_norm();
        assert!(err < 0.05, "err {err}");
    }

    #[test]
    fn fewer_than_two_vectors_rejected() {
        let v = DVector::from_element(1, Complex64::new(1.0, 0.0));
        assert!(empirical_real_moments(&[v], false).is_err());
    }

    #[test]
    fn sampler_is_deterministic_per_seed() {
        let cov = HermitianMatrix::from_diagonal(&[1.0, 2.0]);
        let a = sample_circular(&cov, 5, &mut stream(RngSeed(9))).unwrap();
        let b = sample_circular(&cov, 5, &mut stream(RngSeed(9))).unwrap();
        let c = sample_circular(&cov, 5, &mut stream(RngSeed(10))).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
