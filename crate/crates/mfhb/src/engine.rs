//! The hybrid frequency-domain bootstrap engine.
//!
//! A run combines two independently generated sets of pseudo periodogram
//! matrices:
//!
//! 1. a Gaussian stage that draws, independently per Fourier frequency,
//!    circularly symmetric vectors with the smoothed spectral density as
//!    covariance and turns them into rank-one pseudo periodograms — this
//!    captures everything driven by the second-order structure;
//! 2. a convolved-subsampling stage that whitens subsample periodograms
//!    into residual matrices, recolors uniformly resampled residuals with
//!    the smoothed spectrum, and averages them — the across-frequency
//!    dependence of these draws carries the fourth-order structure.
//!
//! The merge computes the exact bootstrap second moments of both stages in
//! the stacked (Re, Im) representation, removes the second-order part from
//! the subsample-stage moments, adds the remainder to the Gaussian-stage
//! moments, and rescales the Gaussian-stage replicates with
//! `merged^{1/2} gaussian^{-1/2}`. The same transport, pushed through the
//! Jacobian of a smooth function of the spectral means, handles statistics
//! such as sample cross-correlations.
//!
//! Second-moment matrices of both stages are evaluated in closed form, not
//! by Monte Carlo: the Gaussian stage through the complex-Wishart covariance
//! identity, the subsample stage through the per-subsample spectral-mean
//! vectors whose bootstrap moments it equals for every block count.
//!
//! The second-order sums run over the symmetric Fourier grid (index zero
//! excluded) even where a sum over `-[b/2]..[b/2]` would nominally include
//! a zero term; residual matrices only exist at nonzero indices.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::complex_normal::{
    empirical_real_moments, real_rep_from_parts, stack_real, unstack_complex, CircularSampler,
};
use crate::error::{MfhbError, Result};
use crate::hermitian::{
    HermitianMatrix, SymmetricRealMatrix, PSEUDO_INVERSE_REL_THRESHOLD, SPECTRAL_FLOOR_REL,
};
use crate::models::TimeSeries;
use crate::parallel::map_indexed;
use crate::rng::{stream, RngSeed};
use crate::spectral::{
    subsample_mean_spectrum, subsample_periodograms, FrequencyGrid, SpectralEstimator,
    SpectralField, SpectralMeanEntry, SpectralMeanSpec, WeightFunction, TWO_PI,
};

/// Rule-of-thumb subsampling block length: the smallest integer at or above
/// `3 n^{0.3}`.
pub fn choose_b(n: usize) -> usize {
    assert!(n >= 16, "block rule needs n >= 16");
    (3.0 * (n as f64).powf(0.3)).ceil() as usize
}

/// Jacobian evaluation mode for smooth statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JacobianMode {
    /// Use the statistic's analytic Jacobian when available, otherwise fall
    /// back to central finite differences with relative step 1e-6.
    Analytic,
    FiniteDifference { relative_step: f64 },
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Bootstrap run parameters.
#[derive(Clone, Copy, Debug)]
pub struct MfhbConfig {
    pub bandwidth: f64,
    pub block_length: usize,
    pub replicates: usize,
    pub seed: RngSeed,
    pub jacobian_mode: JacobianMode,
}

impl MfhbConfig {
    pub fn new(bandwidth: f64, block_length: usize, replicates: usize, seed: RngSeed) -> Self {
        Self {
            bandwidth,
            block_length,
            replicates,
            seed,
            jacobian_mode: JacobianMode::Analytic,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.block_length < 4 || self.block_length > n {
            return Err(MfhbError::InvalidBlockLength {
                block: self.block_length,
                n,
            });
        }
        if self.replicates < 2 {
            return Err(MfhbError::Config("need at least two bootstrap replicates".into()));
        }
        let lo = TWO_PI / n as f64;
        if !(self.bandwidth > lo && self.bandwidth < std::f64::consts::PI) {
            return Err(MfhbError::BandwidthOutOfRange {
                bandwidth: self.bandwidth,
                lo,
                hi: std::f64::consts::PI,
            });
        }
        Ok(())
    }
}

/// Second-moment matrices produced by the merging step, all in the stacked
/// (Re, Im) representation of dimension `2J`.
#[derive(Clone, Debug)]
pub struct MergedMatrices {
    /// Exact bootstrap moments of the Gaussian-stage vectors.
    pub gaussian_stage: SymmetricRealMatrix,
    /// Exact bootstrap moments of the subsample-stage vectors.
    pub subsample_stage: SymmetricRealMatrix,
    /// Second-order part of the subsample-stage moments, removed before
    /// merging.
    pub second_order_part: SymmetricRealMatrix,
    /// PSD projection of `gaussian + (subsample - second_order)`.
    pub merged: SymmetricRealMatrix,
    /// Number of negative eigenvalues clipped by the projection.
    pub clamped_eigenvalues: usize,
}

/// Diagnostics of a bootstrap run.
#[derive(Clone, Debug, Default)]
pub struct RunDiagnostics {
    pub block_length: usize,
    pub block_count: usize,
    pub flooring_events: usize,
    pub smooth_clamped_eigenvalues: usize,
    pub seconds: f64,
}

/// Replicate cloud of a bootstrap run plus the matrices that produced it.
#[derive(Clone, Debug)]
pub struct BootstrapRun {
    /// Merged replicates (the bootstrap approximation of the target law).
    pub replicates: Vec<DVector<Complex64>>,
    /// Gaussian-stage replicates before the moment transport.
    pub first_stage: Vec<DVector<Complex64>>,
    pub merged: MergedMatrices,
    pub config: MfhbConfig,
    pub diagnostics: RunDiagnostics,
}

impl BootstrapRun {
    /// Sample standard deviation of the real part of one replicate
    /// coordinate.
    pub fn standard_deviation(&self, coordinate: usize) -> f64 {
        sd_of_real_parts(&self.replicates, coordinate)
    }

    /// Same for the untransported first-stage replicates.
    pub fn first_stage_standard_deviation(&self, coordinate: usize) -> f64 {
        sd_of_real_parts(&self.first_stage, coordinate)
    }
}

fn sd_of_real_parts(vectors: &[DVector<Complex64>], coordinate: usize) -> f64 {
    let count = vectors.len();
    let mean = vectors.iter().map(|v| v[coordinate].re).sum::<f64>() / count as f64;
    let ss = vectors
        .iter()
        .map(|v| (v[coordinate].re - mean).powi(2))
        .sum::<f64>();
    (ss / (count - 1) as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Gaussian stage
// ---------------------------------------------------------------------------

/// Draws independent pseudo periodogram matrices: per positive frequency a
/// circularly symmetric vector with the smoothed spectrum as covariance,
/// squared into a rank-one matrix.
pub struct PseudoPeriodogramSampler {
    grid: FrequencyGrid,
    samplers: Vec<CircularSampler>,
}

impl PseudoPeriodogramSampler {
    pub fn new(smoothed: &SpectralField) -> Result<Self> {
        let samplers = (1..=smoothed.grid().half())
            .map(|j| CircularSampler::new(smoothed.positive_matrix(j)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: smoothed.grid().clone(),
            samplers,
        })
    }

    pub fn draw(&self, rng: &mut ChaCha12Rng) -> SpectralField {
        let mats = self
            .samplers
            .iter()
            .map(|s| {
                let d = s.sample(rng);
                HermitianMatrix::new(&d * d.adjoint())
            })
            .collect();
        SpectralField::from_positive(self.grid.clone(), mats).expect("matching grid")
    }
}

/// Precomputed spectral-mean weights for fast evaluation in replicate loops;
/// produces exactly the same sums as `spectral::integrated_periodogram`.
struct SpectralMeanEvaluator {
    scale: f64,
    entries: Vec<(Vec<Complex64>, usize, usize)>,
    indices: Vec<i64>,
}

impl SpectralMeanEvaluator {
    fn new(grid: &FrequencyGrid, spec: &SpectralMeanSpec) -> Self {
        let indices: Vec<i64> = grid.signed_indices().collect();
        let entries = spec
            .entries
            .iter()
            .map(|e| {
                let weights = indices
                    .iter()
                    .map(|&l| e.weight.eval(grid.frequency(l)))
                    .collect();
                (weights, e.row, e.col)
            })
            .collect();
        Self {
            scale: TWO_PI / grid.size_param() as f64,
            entries,
            indices,
        }
    }

    fn eval(&self, field: &SpectralField) -> DVector<Complex64> {
        DVector::from_iterator(
            self.entries.len(),
            self.entries.iter().map(|(weights, row, col)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (w, &l) in weights.iter().zip(&self.indices) {
                    acc += w * field.entry(l, *row, *col);
                }
                acc * self.scale
            }),
        )
    }
}

/// Root-n-scaled Gaussian-stage spectral-mean vector:
/// `sqrt(n) (M(phi_j, pseudo) - M(phi_j, smoothed))_j`.
pub fn gaussian_stage_vector(
    pseudo: &SpectralField,
    smoothed: &SpectralField,
    spec: &SpectralMeanSpec,
) -> Result<DVector<Complex64>> {
    let n = pseudo.grid().size_param();
    let ev = SpectralMeanEvaluator::new(pseudo.grid(), spec);
    let scale = Complex64::new((n as f64).sqrt(), 0.0);
    Ok((ev.eval(pseudo) - ev.eval(smoothed)) * scale)
}

/// Exact bootstrap covariance and relation matrices of the Gaussian-stage
/// vector, from the complex-Wishart covariance of independent rank-one
/// pseudo periodograms:
///
/// ```text
/// Sigma_jk = (4 pi^2 / n) sum_l [ phi_j(l) conj(phi_k(l))  f_{r_j r_k}(l) f_{s_j s_k}(-l)
///                                + phi_j(l) conj(phi_k(-l)) f_{r_j s_k}(l) f_{s_j r_k}(-l) ]
/// ```
///
/// and the relation matrix with `conj(phi_k(.))` replaced by `phi_k(-.)`.
pub fn gaussian_stage_law(
    smoothed: &SpectralField,
    spec: &SpectralMeanSpec,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    spec.validate_dim(smoothed.dim())?;
    let grid = smoothed.grid();
    let dim = spec.len();
    let mut sigma = DMatrix::<Complex64>::zeros(dim, dim);
    let mut gamma = DMatrix::<Complex64>::zeros(dim, dim);
    for l in grid.signed_indices() {
        let freq = grid.frequency(l);
        for (j, ej) in spec.entries.iter().enumerate() {
            let wj = ej.weight.eval(freq);
            for (k, ek) in spec.entries.iter().enumerate() {
                let wk_pos = ek.weight.eval(freq);
                let wk_neg = ek.weight.eval(-freq);
                let first = smoothed.entry(l, ej.row, ek.row) * smoothed.entry(-l, ej.col, ek.col);
                let second = smoothed.entry(l, ej.row, ek.col) * smoothed.entry(-l, ej.col, ek.row);
                sigma[(j, k)] += wj * wk_pos.conj() * first + wj * wk_neg.conj() * second;
                gamma[(j, k)] += wj * wk_neg * first + wj * wk_pos * second;
            }
        }
    }
    let scale = Complex64::new(4.0 * std::f64::consts::PI.powi(2) / grid.size_param() as f64, 0.0);
    Ok((sigma * scale, gamma * scale))
}

/// Gaussian-stage second moments in the stacked (Re, Im) representation.
pub fn gaussian_stage_moments(
    smoothed: &SpectralField,
    spec: &SpectralMeanSpec,
) -> Result<SymmetricRealMatrix> {
    let (sigma, gamma) = gaussian_stage_law(smoothed, spec)?;
    Ok(real_rep_from_parts(&sigma, &gamma))
}

// ---------------------------------------------------------------------------
// Subsample stage
// ---------------------------------------------------------------------------

/// Frequency-domain residual matrices: subsample periodograms whitened by
/// the inverse square root of their average. The average of the residuals
/// over subsamples is the identity at every frequency.
///
/// Returns the residual fields and the number of eigenvalue-flooring events
/// in the whitening matrices.
pub fn residual_fields(
    subs: &[SpectralField],
    subsample_mean: &SpectralField,
) -> Result<(Vec<SpectralField>, usize)> {
    let grid = subsample_mean.grid().clone();
    let dim = subsample_mean.dim();
    let mut floor_events = 0usize;
    let inv_roots: Vec<DMatrix<Complex64>> = (1..=grid.half())
        .map(|j| {
            let mat = subsample_mean.positive_matrix(j);
            let floor = SPECTRAL_FLOOR_REL * mat.trace_real().max(0.0) / dim as f64;
            let (floored, raised) = mat.floor_eigenvalues(floor)?;
            floor_events += raised;
            Ok(floored
                .inv_sqrt(PSEUDO_INVERSE_REL_THRESHOLD)?
                .as_matrix()
                .clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let residuals = subs
        .iter()
        .map(|field| {
            let mats = (1..=grid.half())
                .map(|j| {
                    let w = &inv_roots[j - 1];
                    HermitianMatrix::new(w * field.positive_matrix(j).as_matrix() * w)
                })
                .collect();
            SpectralField::from_positive(grid.clone(), mats)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((residuals, floor_events))
}

/// Recolor residual matrices with the smoothed spectrum:
/// `smoothed^{1/2} U smoothed^{1/2}` per subsample and frequency. Their
/// average over subsamples equals the smoothed spectrum exactly.
pub fn recolored_fields(
    residuals: &[SpectralField],
    smoothed_sub: &SpectralField,
) -> Result<Vec<SpectralField>> {
    let grid = smoothed_sub.grid().clone();
    let roots: Vec<DMatrix<Complex64>> = (1..=grid.half())
        .map(|j| {
            Ok(smoothed_sub
                .positive_matrix(j)
                .sqrt(0.0)?
                .0
                .as_matrix()
                .clone())
        })
        .collect::<Result<Vec<_>>>()?;
    residuals
        .iter()
        .map(|field| {
            let mats = (1..=grid.half())
                .map(|j| {
                    let root = &roots[j - 1];
                    HermitianMatrix::new(root * field.positive_matrix(j).as_matrix() * root)
                })
                .collect();
            SpectralField::from_positive(grid.clone(), mats)
        })
        .collect()
}

/// Average the recolored fields at explicitly chosen subsample indices.
pub fn convolved_average(recolored: &[SpectralField], indices: &[usize]) -> Result<SpectralField> {
    let first = recolored
        .first()
        .ok_or_else(|| MfhbError::Invalid("no recolored fields".into()))?;
    if indices.is_empty() {
        return Err(MfhbError::Invalid("need at least one draw".into()));
    }
    let grid = first.grid().clone();
    let dim = first.dim();
    let scale = 1.0 / indices.len() as f64;
    let mats = (1..=grid.half())
        .map(|j| {
            indices
                .iter()
                .fold(HermitianMatrix::zeros(dim), |acc, &t| {
                    acc.add(recolored[t].positive_matrix(j))
                })
                .scale(scale)
        })
        .collect();
    SpectralField::from_positive(grid, mats)
}

/// One convolved-subsampling draw: `block_count` indices uniform over the
/// subsamples, recolored fields averaged.
pub fn convolved_draw(
    recolored: &[SpectralField],
    block_count: usize,
    rng: &mut ChaCha12Rng,
) -> Result<SpectralField> {
    let total = recolored.len();
    let indices: Vec<usize> = (0..block_count).map(|_| rng.random_range(0..total)).collect();
    convolved_average(recolored, &indices)
}

/// Scaled subsample-stage spectral-mean vector:
/// `sqrt(k b) (M(phi_j, convolved) - M(phi_j, smoothed))_j`.
pub fn subsample_stage_vector(
    convolved: &SpectralField,
    smoothed_sub: &SpectralField,
    spec: &SpectralMeanSpec,
    block_count: usize,
) -> Result<DVector<Complex64>> {
    let b = convolved.grid().size_param();
    let ev = SpectralMeanEvaluator::new(convolved.grid(), spec);
    let scale = Complex64::new((block_count as f64 * b as f64).sqrt(), 0.0);
    Ok((ev.eval(convolved) - ev.eval(smoothed_sub)) * scale)
}

/// Per-subsample deviation vectors
/// `y_{t,j} = (2 pi / b) sum_l phi_j(l) (recolored_t - smoothed)_{r_j s_j}(l)`;
/// exact building block of the subsample-stage moments.
fn subsample_deviation_vectors(
    recolored: &[SpectralField],
    smoothed_sub: &SpectralField,
    spec: &SpectralMeanSpec,
) -> Result<Vec<DVector<Complex64>>> {
    let ev = SpectralMeanEvaluator::new(smoothed_sub.grid(), spec);
    let base = ev.eval(smoothed_sub);
    Ok(recolored.iter().map(|f| ev.eval(f) - &base).collect())
}

/// Exact bootstrap second moments of the subsample-stage vector in the
/// stacked representation: `b` times the uncentered empirical moments of the
/// per-subsample deviation vectors (the deviations average to zero exactly).
/// The result does not depend on the block count.
pub fn subsample_stage_moments(
    recolored: &[SpectralField],
    smoothed_sub: &SpectralField,
    spec: &SpectralMeanSpec,
) -> Result<SymmetricRealMatrix> {
    if recolored.len() < 2 {
        return Err(MfhbError::Invalid("need at least two subsamples".into()));
    }
    let ys = subsample_deviation_vectors(recolored, smoothed_sub, spec)?;
    let moments = empirical_real_moments(&ys, false)?;
    Ok(moments.scale(smoothed_sub.grid().size_param() as f64))
}

/// Second-order part of the subsample-stage moments, built from the
/// across-subsample products (no conjugation)
///
/// ```text
/// S_rsuw(lambda) = mean_t (dev_t,rs(lambda) * dev_t,uw(lambda))
/// ```
///
/// assembled with the same weight patterns as the Gaussian-stage law and
/// stacked into the (Re, Im) representation.
pub fn subsample_second_order_part(
    recolored: &[SpectralField],
    smoothed_sub: &SpectralField,
    spec: &SpectralMeanSpec,
) -> Result<SymmetricRealMatrix> {
    spec.validate_dim(smoothed_sub.dim())?;
    let grid = smoothed_sub.grid().clone();
    let b = grid.size_param() as f64;
    let count = recolored.len();
    if count < 2 {
        return Err(MfhbError::Invalid("need at least two subsamples".into()));
    }

    // deviations at positive indices: dev[j-1][t] is an m x m matrix
    let deviations: Vec<Vec<DMatrix<Complex64>>> = (1..=grid.half())
        .map(|j| {
            recolored
                .iter()
                .map(|f| f.positive_matrix(j).as_matrix() - smoothed_sub.positive_matrix(j).as_matrix())
                .collect()
        })
        .collect();

    // plain-product second moments with index reflection for negative l
    let s_value = |l: i64, r: usize, s: usize, u: usize, w: usize| -> Complex64 {
        let (j, r, s, u, w) = if l > 0 {
            (l as usize, r, s, u, w)
        } else {
            ((-l) as usize, s, r, w, u)
        };
        let devs = &deviations[j - 1];
        let mut acc = Complex64::new(0.0, 0.0);
        for t in 0..count {
            acc += devs[t][(r, s)] * devs[t][(u, w)];
        }
        acc / count as f64
    };

    let j_dim = spec.len();
    let mut sigma = DMatrix::<Complex64>::zeros(j_dim, j_dim);
    let mut gamma = DMatrix::<Complex64>::zeros(j_dim, j_dim);
    for l in grid.signed_indices() {
        let freq = grid.frequency(l);
        for (j, ej) in spec.entries.iter().enumerate() {
            let wj = ej.weight.eval(freq);
            for (k, ek) in spec.entries.iter().enumerate() {
                let wk_pos = ek.weight.eval(freq);
                let wk_neg = ek.weight.eval(-freq);
                let first = s_value(l, ej.row, ej.col, ek.col, ek.row);
                let second = s_value(l, ej.row, ej.col, ek.row, ek.col);
                sigma[(j, k)] += wj * wk_pos.conj() * first + wj * wk_neg.conj() * second;
                gamma[(j, k)] += wj * wk_neg * first + wj * wk_pos * second;
            }
        }
    }
    let scale = Complex64::new(4.0 * std::f64::consts::PI.powi(2) / b, 0.0);
    sigma *= scale;
    gamma *= scale;
    Ok(real_rep_from_parts(&sigma, &gamma))
}

// ---------------------------------------------------------------------------
// Merging
// ---------------------------------------------------------------------------

/// Merge the stage moments: PSD projection of
/// `gaussian + (subsample - second_order)`.
pub fn merge_moments(
    gaussian_stage: &SymmetricRealMatrix,
    subsample_stage: &SymmetricRealMatrix,
    second_order_part: &SymmetricRealMatrix,
) -> Result<(SymmetricRealMatrix, usize)> {
    gaussian_stage
        .add(&subsample_stage.sub(second_order_part))
        .psd_project()
}

/// Moment-transport map `merged^{1/2} gaussian^{-1/2}` acting on stacked
/// (Re, Im) vectors; the inverse root uses the pseudo-inverse convention.
pub fn transport_map(
    merged: &SymmetricRealMatrix,
    gaussian_stage: &SymmetricRealMatrix,
) -> Result<DMatrix<f64>> {
    let root = merged.sqrt(0.0)?;
    let inv = gaussian_stage
        .inv_sqrt(PSEUDO_INVERSE_REL_THRESHOLD)
        .map_err(|e| match e {
            MfhbError::NumericallyZeroMatrix => MfhbError::DegenerateFirstStage,
            other => other,
        })?;
    Ok(root.as_matrix() * inv.as_matrix())
}

/// Rescale first-stage replicates with the merged-moment transport.
pub fn merge_and_rescale(
    first_stage: Vec<DVector<Complex64>>,
    gaussian_stage: SymmetricRealMatrix,
    subsample_stage: SymmetricRealMatrix,
    second_order_part: SymmetricRealMatrix,
    config: MfhbConfig,
    mut diagnostics: RunDiagnostics,
) -> Result<BootstrapRun> {
    let (merged, clamped) = merge_moments(&gaussian_stage, &subsample_stage, &second_order_part)?;
    let transport = transport_map(&merged, &gaussian_stage)?;
    let replicates = first_stage
        .iter()
        .map(|v| unstack_complex(&(&transport * stack_real(v))))
        .collect();
    diagnostics.block_length = config.block_length;
    Ok(BootstrapRun {
        replicates,
        first_stage,
        merged: MergedMatrices {
            gaussian_stage,
            subsample_stage,
            second_order_part,
            merged,
            clamped_eigenvalues: clamped,
        },
        config,
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Smooth statistics
// ---------------------------------------------------------------------------

type EvalFn = dyn Fn(&DVector<Complex64>) -> Result<DVector<Complex64>> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync;

/// A smooth map of the spectral-mean vector, together with the accompanying
/// real function on stacked (Re, Im) coordinates and its Jacobian.
#[derive(Clone)]
pub struct SmoothStatistic {
    input_dim: usize,
    output_dim: usize,
    evaluate: Arc<EvalFn>,
    analytic_jacobian: Option<Arc<JacobianFn>>,
}

impl std::fmt::Debug for SmoothStatistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothStatistic")
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .field("analytic_jacobian", &self.analytic_jacobian.is_some())
            .finish()
    }
}

impl SmoothStatistic {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        evaluate: impl Fn(&DVector<Complex64>) -> Result<DVector<Complex64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            input_dim,
            output_dim,
            evaluate: Arc::new(evaluate),
            analytic_jacobian: None,
        }
    }

    pub fn with_analytic_jacobian(
        mut self,
        jacobian: impl Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.analytic_jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn evaluate(&self, z: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if z.len() != self.input_dim {
            return Err(MfhbError::Invalid("statistic input dimension mismatch".into()));
        }
        let out = (self.evaluate)(z)?;
        if out.len() != self.output_dim {
            return Err(MfhbError::Invalid("statistic output dimension mismatch".into()));
        }
        Ok(out)
    }

    /// The accompanying real map: stacked (Re, Im) input of length `2J` to
    /// stacked (Re, Im) output of length `2L`.
    pub fn accompanying(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(stack_real(&self.evaluate(&unstack_complex(x))?))
    }

    /// Central finite-difference Jacobian of the accompanying map with
    /// per-coordinate step `relative_step * max(1, |x_i|)`.
    pub fn finite_difference_jacobian(
        &self,
        x: &DVector<f64>,
        relative_step: f64,
    ) -> Result<DMatrix<f64>> {
        let rows = 2 * self.output_dim;
        let cols = 2 * self.input_dim;
        let mut jac = DMatrix::zeros(rows, cols);
        for i in 0..cols {
            let step = relative_step * x[i].abs().max(1.0);
            let mut plus = x.clone();
            plus[i] += step;
            let mut minus = x.clone();
            minus[i] -= step;
            let diff = (self.accompanying(&plus)? - self.accompanying(&minus)?) / (2.0 * step);
            jac.set_column(i, &diff);
        }
        Ok(jac)
    }

    /// Jacobian of the accompanying map at a stacked point.
    pub fn jacobian(&self, x: &DVector<f64>, mode: JacobianMode) -> Result<DMatrix<f64>> {
        match mode {
            JacobianMode::Analytic => match &self.analytic_jacobian {
                Some(j) => j(x),
                None => self.finite_difference_jacobian(x, DEFAULT_FD_STEP),
            },
            JacobianMode::FiniteDifference { relative_step } => {
                self.finite_difference_jacobian(x, relative_step)
            }
        }
    }
}

/// Spectral-mean spec and smooth map of the sample cross-correlation at a
/// signed lag for a 0-based component pair: means
/// `(M(e^{i h .}, I_rs), M(1, I_rr), M(1, I_ss))` mapped through
/// `g(m) = m_1 / sqrt(m_2 m_3)`.
pub fn builtin_cross_correlation(
    lag: i64,
    row: usize,
    col: usize,
) -> (SpectralMeanSpec, SmoothStatistic) {
    let spec = SpectralMeanSpec::new(vec![
        SpectralMeanEntry {
            weight: WeightFunction::ComplexExponential { lag },
            row,
            col,
        },
        SpectralMeanEntry {
            weight: WeightFunction::constant_one(),
            row,
            col: row,
        },
        SpectralMeanEntry {
            weight: WeightFunction::constant_one(),
            row: col,
            col,
        },
    ])
    .expect("nonempty spec");

    let statistic = SmoothStatistic::new(3, 1, |m: &DVector<Complex64>| {
        let prod = m[1] * m[2];
        if !(prod.re > 0.0) || !prod.re.is_finite() {
            return Err(MfhbError::StatisticUndefined {
                reason: format!("variance product {prod} not positive"),
            });
        }
        Ok(DVector::from_element(1, m[0] / prod.sqrt()))
    })
    .with_analytic_jacobian(|x: &DVector<f64>| {
        let m = unstack_complex(x);
        let prod = m[1] * m[2];
        if !(prod.re > 0.0) || !prod.re.is_finite() {
            return Err(MfhbError::StatisticUndefined {
                reason: format!("variance product {prod} not positive"),
            });
        }
        let root = prod.sqrt();
        // holomorphic map: complex gradient, then Cauchy-Riemann block form
        let grad = [
            Complex64::new(1.0, 0.0) / root,
            -m[0] / (2.0 * root * prod) * m[2],
            -m[0] / (2.0 * root * prod) * m[1],
        ];
        let mut jac = DMatrix::zeros(2, 6);
        for (i, g) in grad.iter().enumerate() {
            jac[(0, i)] = g.re;
            jac[(0, i + 3)] = -g.im;
            jac[(1, i)] = g.im;
            jac[(1, i + 3)] = g.re;
        }
        Ok(jac)
    });

    (spec, statistic)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Shared preparation of a bootstrap run: smoothed spectrum, both stages'
/// moments, the merged transport, and the per-frequency samplers.
pub struct Pipeline {
    config: MfhbConfig,
    n: usize,
    smoothed_full: SpectralField,
    mean_evaluator: SpectralMeanEvaluator,
    spectral_means_hat: DVector<Complex64>,
    gaussian_stage: SymmetricRealMatrix,
    subsample_stage: SymmetricRealMatrix,
    second_order_part: SymmetricRealMatrix,
    merged: SymmetricRealMatrix,
    clamped: usize,
    transport: DMatrix<f64>,
    sampler: PseudoPeriodogramSampler,
    flooring_events: usize,
}

impl Pipeline {
    pub fn prepare(x: &TimeSeries, spec: &SpectralMeanSpec, config: MfhbConfig) -> Result<Self> {
        let n = x.len();
        config.validate(n)?;
        spec.validate_dim(x.dim())?;
        let b = config.block_length;

        let estimator = SpectralEstimator::new(x, config.bandwidth)?;
        let full_grid = FrequencyGrid::new(n)?;
        let sub_grid = FrequencyGrid::new(b)?;
        let (smoothed_full, floored_full) = estimator.field(&full_grid)?;
        let (smoothed_sub, floored_sub) = estimator.field(&sub_grid)?;

        let mean_evaluator = SpectralMeanEvaluator::new(&full_grid, spec);
        let spectral_means_hat = mean_evaluator.eval(&smoothed_full);

        let gaussian_stage = gaussian_stage_moments(&smoothed_full, spec)?;

        let subs = subsample_periodograms(x, b)?;
        let subsample_mean = subsample_mean_spectrum(&subs)?;
        let (residuals, floored_tilde) = residual_fields(&subs, &subsample_mean)?;
        let recolored = recolored_fields(&residuals, &smoothed_sub)?;
        let subsample_stage = subsample_stage_moments(&recolored, &smoothed_sub, spec)?;
        let second_order_part = subsample_second_order_part(&recolored, &smoothed_sub, spec)?;

        let (merged, clamped) = merge_moments(&gaussian_stage, &subsample_stage, &second_order_part)?;
        let transport = transport_map(&merged, &gaussian_stage)?;
        let sampler = PseudoPeriodogramSampler::new(&smoothed_full)?;

        Ok(Self {
            config,
            n,
            smoothed_full,
            mean_evaluator,
            spectral_means_hat,
            gaussian_stage,
            subsample_stage,
            second_order_part,
            merged,
            clamped,
            transport,
            sampler,
            flooring_events: floored_full + floored_sub + floored_tilde,
        })
    }

    pub fn smoothed_spectrum(&self) -> &SpectralField {
        &self.smoothed_full
    }

    pub fn merged_matrices(&self) -> MergedMatrices {
        MergedMatrices {
            gaussian_stage: self.gaussian_stage.clone(),
            subsample_stage: self.subsample_stage.clone(),
            second_order_part: self.second_order_part.clone(),
            merged: self.merged.clone(),
            clamped_eigenvalues: self.clamped,
        }
    }

    fn replicate_spectral_means(&self, index: usize) -> DVector<Complex64> {
        let mut rng = stream(self.config.seed.child_indexed("replicate", index as u64));
        let pseudo = self.sampler.draw(&mut rng);
        self.mean_evaluator.eval(&pseudo)
    }

    fn diagnostics(&self, seconds: f64) -> RunDiagnostics {
        RunDiagnostics {
            block_length: self.config.block_length,
            block_count: self.n / self.config.block_length,
            flooring_events: self.flooring_events,
            smooth_clamped_eigenvalues: 0,
            seconds,
        }
    }
}

/// Bootstrap the distribution of the root-n-scaled spectral-mean vector.
/// The input series is expected to be centered by the caller.
pub fn run_integrated(
    x: &TimeSeries,
    spec: &SpectralMeanSpec,
    config: MfhbConfig,
) -> Result<BootstrapRun> {
    let started = Instant::now();
    let pipeline = Pipeline::prepare(x, spec, config)?;
    let scale = Complex64::new((pipeline.n as f64).sqrt(), 0.0);
    let first_stage: Vec<DVector<Complex64>> = map_indexed(config.replicates, |i| {
        (pipeline.replicate_spectral_means(i) - &pipeline.spectral_means_hat) * scale
    });
    let replicates = first_stage
        .iter()
        .map(|v| unstack_complex(&(&pipeline.transport * stack_real(v))))
        .collect();
    let diagnostics = pipeline.diagnostics(started.elapsed().as_secs_f64());
    Ok(BootstrapRun {
        replicates,
        first_stage,
        merged: pipeline.merged_matrices(),
        config,
        diagnostics,
    })
}

/// Bootstrap the distribution of `sqrt(n) (g(M_n) - g(M))` for a smooth map
/// `g` of the spectral means. The input series is expected to be centered by
/// the caller.
pub fn run_smooth(
    x: &TimeSeries,
    spec: &SpectralMeanSpec,
    statistic: &SmoothStatistic,
    config: MfhbConfig,
) -> Result<BootstrapRun> {
    if statistic.input_dim() != spec.len() {
        return Err(MfhbError::Invalid(
            "statistic input dimension must match the spectral-mean spec".into(),
        ));
    }
    let started = Instant::now();
    let pipeline = Pipeline::prepare(x, spec, config)?;
    let root_n = (pipeline.n as f64).sqrt();

    let hat_stacked = stack_real(&pipeline.spectral_means_hat);
    let value_hat = statistic.accompanying(&hat_stacked)?;

    let first_stage_stacked: Vec<Result<DVector<f64>>> = map_indexed(config.replicates, |i| {
        let means = pipeline.replicate_spectral_means(i);
        Ok((statistic.accompanying(&stack_real(&means))? - &value_hat) * root_n)
    });
    let first_stage_stacked: Vec<DVector<f64>> =
        first_stage_stacked.into_iter().collect::<Result<Vec<_>>>()?;

    let first_stage: Vec<DVector<Complex64>> =
        first_stage_stacked.iter().map(|v| unstack_complex(v)).collect();
    // the smooth map is nonlinear, so these moments have no closed form and
    // are estimated from the replicate cloud (centered)
    let first_stage_moments = empirical_real_moments(&first_stage, true)?;

    let jacobian = statistic.jacobian(&hat_stacked, config.jacobian_mode)?;
    let pushed = SymmetricRealMatrix::new(&jacobian * pipeline.merged.as_matrix() * jacobian.transpose());
    let (pushed_psd, smooth_clamped) = pushed.psd_project()?;
    let transport = transport_map(&pushed_psd, &first_stage_moments)?;

    let replicates = first_stage_stacked
        .iter()
        .map(|v| unstack_complex(&(&transport * v)))
        .collect();

    let mut diagnostics = pipeline.diagnostics(started.elapsed().as_secs_f64());
    diagnostics.smooth_clamped_eigenvalues = smooth_clamped;
    Ok(BootstrapRun {
        replicates,
        first_stage,
        merged: pipeline.merged_matrices(),
        config,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::HermitianMatrix;

    #[test]
    fn block_rule_values() {
        assert_eq!(choose_b(100), 12);
        assert_eq!(choose_b(1000), 24);
    }

    #[test]
    fn block_rule_monotone() {
        let mut prev = choose_b(16);
        for n in 17..=5000 {
            let b = choose_b(n);
            assert!(b >= prev, "rule decreased at n={n}");
            prev = b;
        }
    }

    #[test]
    fn cross_correlation_map_value() {
        let (_, stat) = builtin_cross_correlation(0, 0, 1);
        let m = DVector::from_iterator(
            3,
            [0.5, 1.0, 1.0].iter().map(|&v| Complex64::new(v, 0.0)),
        );
        let out = stat.evaluate(&m).unwrap();
        assert!((out[0].re - 0.5).abs() < 1e-15);
        assert_eq!(out[0].im, 0.0);
    }

    #[test]
    fn cross_correlation_jacobian_matches_calculus_and_differences() {
        let (_, stat) = builtin_cross_correlation(0, 0, 1);
        let x = DVector::from_row_slice(&[0.5, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let analytic = stat.jacobian(&x, JacobianMode::Analytic).unwrap();
        assert!((analytic[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((analytic[(0, 1)] + 0.25).abs() < 1e-12);
        assert!((analytic[(0, 2)] + 0.25).abs() < 1e-12);
        let fd = stat
            .jacobian(&x, JacobianMode::FiniteDifference { relative_step: 1e-6 })
            .unwrap();
        let rel = (&analytic - &fd).norm() / (1.0 + analytic.norm());
        assert!(rel < 1e-5, "rel {rel:e}");
    }

    #[test]
    fn cross_correlation_rejects_nonpositive_variances() {
        let (_, stat) = builtin_cross_correlation(0, 0, 1);
        let m = DVector::from_iterator(
            3,
            [0.5, -1.0, 1.0].iter().map(|&v| Complex64::new(v, 0.0)),
        );
        assert!(matches!(
            stat.evaluate(&m),
            Err(MfhbError::StatisticUndefined { .. })
        ));
    }

    fn constant_field(grid: FrequencyGrid, mat: HermitianMatrix) -> SpectralField {
        let mats = vec![mat; grid.half()];
        SpectralField::from_positive(grid, mats).unwrap()
    }

    #[test]
    fn identical_subsamples_whiten_to_identity() {
        let grid = FrequencyGrid::new(8).unwrap();
        let mat = HermitianMatrix::from_diagonal(&[2.0, 0.7]);
        let subs: Vec<SpectralField> = (0..5)
            .map(|_| constant_field(grid.clone(), mat.clone()))
            .collect();
        let mean = subsample_mean_spectrum(&subs).unwrap();
        let (residuals, floored) = residual_fields(&subs, &mean).unwrap();
        assert_eq!(floored, 0);
        for field in &residuals {
            for j in 1..=grid.half() {
                let diff = (field.positive_matrix(j).as_matrix()
                    - DMatrix::<Complex64>::identity(2, 2))
                .norm();
                assert!(diff < 1e-12);
            }
        }
    }

    #[test]
    fn flat_spectrum_gaussian_moments_match_closed_form() {
        // univariate flat spectrum sigma^2/2pi, constant weight: the
        // second-moment scalar is exactly 2 sigma^4 on an even grid
        let sigma_sq = 1.3;
        let n = 64;
        let grid = FrequencyGrid::new(n).unwrap();
        let level = HermitianMatrix::from_diagonal(&[sigma_sq / TWO_PI]);
        let field = constant_field(grid, level);
        let spec = SpectralMeanSpec::new(vec![SpectralMeanEntry {
            weight: WeightFunction::constant_one(),
            row: 0,
            col: 0,
        }])
        .unwrap();
        let (sigma, gamma) = gaussian_stage_law(&field, &spec).unwrap();
        let expected = 2.0 * sigma_sq * sigma_sq;
        assert!((sigma[(0, 0)].re - expected).abs() < 1e-12, "{}", sigma[(0, 0)].re);
        assert!((gamma[(0, 0)] - sigma[(0, 0)]).norm() < 1e-12);
        let rep = gaussian_stage_moments(&field, &spec).unwrap();
        assert!((rep.entry(0, 0) - expected).abs() < 1e-12);
        assert!(rep.entry(1, 1).abs() < 1e-12);
    }

    #[test]
    fn real_weight_case_has_zero_imaginary_block() {
        // exponential weight with r = s keeps Sigma and Gamma real and equal
        let n = 32;
        let grid = FrequencyGrid::new(n).unwrap();
        let mats: Vec<HermitianMatrix> = (1..=grid.half())
            .map(|j| HermitianMatrix::from_diagonal(&[0.2 + 0.01 * j as f64, 0.3]))
            .collect();
        let field = SpectralField::from_positive(grid, mats).unwrap();
        let spec = SpectralMeanSpec::new(vec![SpectralMeanEntry {
            weight: WeightFunction::ComplexExponential { lag: 2 },
            row: 0,
            col: 0,
        }])
        .unwrap();
        let (sigma, gamma) = gaussian_stage_law(&field, &spec).unwrap();
        assert!(sigma[(0, 0)].im.abs() < 1e-12);
        assert!(gamma[(0, 0)].im.abs() < 1e-12);
        let rep = gaussian_stage_moments(&field, &spec).unwrap();
        assert!(rep.entry(1, 1).abs() < 1e-12, "lower-right block {}", rep.entry(1, 1));
        assert!(rep.entry(0, 1).abs() < 1e-12);
    }

    #[test]
    fn forced_single_draw_reproduces_one_recolored_field() {
        let grid = FrequencyGrid::new(8).unwrap();
        let fields: Vec<SpectralField> = (0..4)
            .map(|t| {
                constant_field(
                    grid.clone(),
                    HermitianMatrix::from_diagonal(&[1.0 + t as f64, 0.5]),
                )
            })
            .collect();
        let avg = convolved_average(&fields, &[2]).unwrap();
        for j in 1..=grid.half() {
            assert_eq!(
                avg.positive_matrix(j).as_matrix(),
                fields[2].positive_matrix(j).as_matrix()
            );
        }
    }

    #[test]
    fn convolved_draw_is_deterministic_per_seed() {
        let grid = FrequencyGrid::new(8).unwrap();
        let fields: Vec<SpectralField> = (0..6)
            .map(|t| {
                constant_field(
                    grid.clone(),
                    HermitianMatrix::from_diagonal(&[1.0 + t as f64, 0.5]),
                )
            })
            .collect();
        let a = convolved_draw(&fields, 3, &mut stream(RngSeed(4))).unwrap();
        let b = convolved_draw(&fields, 3, &mut stream(RngSeed(4))).unwrap();
        for j in 1..=grid.half() {
            assert_eq!(a.positive_matrix(j).as_matrix(), b.positive_matrix(j).as_matrix());
        }
    }

    #[test]
    fn degenerate_subsamples_give_zero_moment_matrices() {
        // every recolored field equal to the smoothed spectrum: deviations
        // vanish, so both subsample-stage matrices are zero
        let grid = FrequencyGrid::new(8).unwrap();
        let mat = HermitianMatrix::from_diagonal(&[0.9, 0.4]);
        let smoothed = constant_field(grid.clone(), mat.clone());
        let recolored: Vec<SpectralField> =
            (0..5).map(|_| constant_field(grid.clone(), mat.clone())).collect();
        let spec = SpectralMeanSpec::new(vec![SpectralMeanEntry {
            weight: WeightFunction::constant_one(),
            row: 0,
            col: 1,
        }])
        .unwrap();
        let stage = subsample_stage_moments(&recolored, &smoothed, &spec).unwrap();
        assert!(stage.frobenius_norm() < 1e-12);
        let part = subsample_second_order_part(&recolored, &smoothed, &spec).unwrap();
        assert!(part.frobenius_norm() < 1e-12);
    }

    #[test]
    fn scalar_real_case_transport_is_a_rescale() {
        let gaussian = SymmetricRealMatrix::from_diagonal(&[4.0, 0.0]);
        let merged = SymmetricRealMatrix::from_diagonal(&[9.0, 0.0]);
        let transport = transport_map(&merged, &gaussian).unwrap();
        assert!((transport[(0, 0)] - 1.5).abs() < 1e-12);
        assert!(transport[(1, 1)].abs() < 1e-12);
        let zero = SymmetricRealMatrix::zeros(2);
        assert!(matches!(
            transport_map(&merged, &zero),
            Err(MfhbError::DegenerateFirstStage)
        ));
    }

    #[test]
    fn equal_stage_matrices_make_transport_a_projector() {
        let gaussian = SymmetricRealMatrix::from_diagonal(&[4.0, 2.0]);
        let part = SymmetricRealMatrix::from_diagonal(&[0.5, 0.25]);
        let (merged, clamped) = merge_moments(&gaussian, &part, &part).unwrap();
        assert_eq!(clamped, 0);
        let transport = transport_map(&merged, &gaussian).unwrap();
        assert!((transport - DMatrix::<f64>::identity(2, 2)).norm() < 1e-10);
    }
}
