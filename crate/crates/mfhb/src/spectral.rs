//! Frequency-domain machinery: Fourier grids, finite Fourier transforms,
//! periodogram matrices, sample cross-covariances, the smoothed spectral
//! density estimator, and Riemann-sum spectral means.
//!
//! Conventions used throughout:
//! - the Fourier grid of size parameter `n` is `{j : 1 <= |j| <= floor(n/2)}`
//!   with frequencies `2 pi j / n`; index 0 is excluded, and for even `n`
//!   both endpoints `+pi` and `-pi` are present;
//! - the finite Fourier transform sums over `t = 1..n` with weight
//!   `(2 pi n)^{-1/2} e^{-i t lambda}`;
//! - spectral fields store matrices at positive indices only and serve the
//!   negative side through the reflection `M(-lambda) = M(lambda)^T`, which
//!   therefore holds exactly.

use std::f64::consts::PI;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{MfhbError, Result};
use crate::hermitian::{HermitianMatrix, SPECTRAL_FLOOR_REL};
use crate::models::TimeSeries;
use crate::oracle::AnalyticSpectrum;

pub const TWO_PI: f64 = 2.0 * PI;

/// Symmetric Fourier-frequency grid without the zero index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyGrid {
    size_param: usize,
    half: usize,
}

impl FrequencyGrid {
    pub fn new(size_param: usize) -> Result<Self> {
        if size_param < 2 {
            return Err(MfhbError::Invalid("grid size parameter must be >= 2".into()));
        }
        Ok(Self {
            size_param,
            half: size_param / 2,
        })
    }

    pub fn size_param(&self) -> usize {
        self.size_param
    }

    /// Number of positive indices, `floor(n/2)`.
    pub fn half(&self) -> usize {
        self.half
    }

    /// Total number of grid points, `2 floor(n/2)`.
    pub fn len(&self) -> usize {
        2 * self.half
    }

    pub fn is_empty(&self) -> bool {
        self.half == 0
    }

    pub fn frequency(&self, index: i64) -> f64 {
        TWO_PI * index as f64 / self.size_param as f64
    }

    /// All signed indices in ascending order.
    pub fn signed_indices(&self) -> impl Iterator<Item = i64> + '_ {
        let half = self.half as i64;
        (-half..=-1).chain(1..=half)
    }

    pub fn contains(&self, index: i64) -> bool {
        index != 0 && index.unsigned_abs() as usize <= self.half
    }
}

/// Frequency-indexed family of Hermitian matrices with the reflection
/// `M(-lambda_j) = M(lambda_j)^T` built in.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: FrequencyGrid,
    dim: usize,
    mats: Vec<HermitianMatrix>,
}

impl SpectralField {
    /// Build from the matrices at positive indices `j = 1..=half`.
    pub fn from_positive(grid: FrequencyGrid, mats: Vec<HermitianMatrix>) -> Result<Self> {
        if mats.len() != grid.half() {
            return Err(MfhbError::Invalid(format!(
                "expected {} matrices, got {}",
                grid.half(),
                mats.len()
            )));
        }
        let dim = mats.first().map_or(0, |m| m.dim());
        if mats.iter().any(|m| m.dim() != dim) || dim == 0 {
            return Err(MfhbError::Invalid("field matrices must share a nonzero dimension".into()));
        }
        Ok(Self { grid, dim, mats })
    }

    pub fn zeros(grid: FrequencyGrid, dim: usize) -> Self {
        let mats = vec![HermitianMatrix::zeros(dim); grid.half()];
        Self { grid, dim, mats }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Matrix entry at a signed grid index.
    pub fn entry(&self, index: i64, r: usize, s: usize) -> Complex64 {
        debug_assert!(self.grid.contains(index));
        if index > 0 {
            self.mats[(index - 1) as usize].entry(r, s)
        } else {
            self.mats[(-index - 1) as usize].entry(s, r)
        }
    }

    /// Stored matrix at positive index `j` (1-based).
    pub fn positive_matrix(&self, j: usize) -> &HermitianMatrix {
        &self.mats[j - 1]
    }

    /// Owned matrix at a signed index (transposed for negative indices).
    pub fn matrix_at(&self, index: i64) -> HermitianMatrix {
        if index > 0 {
            self.mats[(index - 1) as usize].clone()
        } else {
            self.mats[(-index - 1) as usize].transposed()
        }
    }

    /// Apply a matrix map at every positive index.
    pub fn map_positive(&self, f: impl Fn(&HermitianMatrix) -> HermitianMatrix) -> Self {
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            mats: self.mats.iter().map(f).collect(),
        }
    }
}

/// Finite Fourier transform of a series on a grid, stored at positive
/// indices; `d(-lambda) = conj(d(lambda))`.
#[derive(Clone, Debug)]
pub struct FourierTransform {
    grid: FrequencyGrid,
    vectors: Vec<DVector<Complex64>>,
}

impl FourierTransform {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn at(&self, index: i64) -> DVector<Complex64> {
        if index > 0 {
            self.vectors[(index - 1) as usize].clone()
        } else {
            self.vectors[(-index - 1) as usize].map(|z| z.conj())
        }
    }
}

fn twiddle_table(len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|k| Complex64::from_polar(1.0, -TWO_PI * k as f64 / len as f64))
        .collect()
}

fn dft_rows(
    values: &DMatrix<f64>,
    row_start: usize,
    len: usize,
    table: &[Complex64],
) -> Vec<DVector<Complex64>> {
    let m = values.ncols();
    let half = len / 2;
    let norm = 1.0 / (TWO_PI * len as f64).sqrt();
    (1..=half)
        .map(|j| {
            let mut acc = DVector::from_element(m, Complex64::new(0.0, 0.0));
            for t in 1..=len {
                let w = table[(j * t) % len];
                for r in 0..m {
                    acc[r] += values[(row_start + t - 1, r)] * w;
                }
            }
            acc * Complex64::new(norm, 0.0)
        })
        .collect()
}

/// Finite Fourier transforms `d(lambda_j)` on the grid; requires the grid
/// size parameter to match the series length.
pub fn fourier_transform(x: &TimeSeries, grid: &FrequencyGrid) -> Result<FourierTransform> {
    if grid.size_param() != x.len() {
        return Err(MfhbError::Invalid(format!(
            "grid size {} != series length {}",
            grid.size_param(),
            x.len()
        )));
    }
    let table = twiddle_table(x.len());
    Ok(FourierTransform {
        grid: grid.clone(),
        vectors: dft_rows(x.values(), 0, x.len(), &table),
    })
}

fn periodogram_from_vectors(
    grid: FrequencyGrid,
    vectors: &[DVector<Complex64>],
) -> SpectralField {
    let mats = vectors
        .iter()
        .map(|d| HermitianMatrix::new(d * d.adjoint()))
        .collect();
    SpectralField::from_positive(grid, mats).expect("matching lengths")
}

/// Periodogram matrix field `I(lambda) = d(lambda) d(lambda)^*` on the grid.
pub fn periodogram(x: &TimeSeries, grid: &FrequencyGrid) -> Result<SpectralField> {
    let ft = fourier_transform(x, grid)?;
    Ok(periodogram_from_vectors(ft.grid.clone(), &ft.vectors))
}

/// Periodogram matrices of every length-`b` subsample, each on the grid of
/// size parameter `b`; entry `t` covers rows `t..t+b-1` (0-based start).
pub fn subsample_periodograms(x: &TimeSeries, block_length: usize) -> Result<Vec<SpectralField>> {
    let n = x.len();
    if block_length < 4 || block_length > n {
        return Err(MfhbError::InvalidBlockLength {
            block: block_length,
            n,
        });
    }
    let grid = FrequencyGrid::new(block_length)?;
    let table = twiddle_table(block_length);
    Ok((0..=(n - block_length))
        .map(|t| {
            let vectors = dft_rows(x.values(), t, block_length, &table);
            periodogram_from_vectors(grid.clone(), &vectors)
        })
        .collect())
}

/// Pointwise average of subsample periodograms.
pub fn subsample_mean_spectrum(subs: &[SpectralField]) -> Result<SpectralField> {
    let first = subs
        .first()
        .ok_or_else(|| MfhbError::Invalid("no subsample periodograms".into()))?;
    let grid = first.grid().clone();
    let dim = first.dim();
    if subs.iter().any(|f| f.grid() != &grid || f.dim() != dim) {
        return Err(MfhbError::Invalid("subsample fields disagree in grid or dimension".into()));
    }
    let scale = 1.0 / subs.len() as f64;
    let mats = (1..=grid.half())
        .map(|j| {
            subs.iter()
                .fold(HermitianMatrix::zeros(dim), |acc, f| acc.add(f.positive_matrix(j)))
                .scale(scale)
        })
        .collect();
    SpectralField::from_positive(grid, mats)
}

/// Plain moment estimator of the cross-covariance at a signed lag, without
/// mean correction; `gamma_rs(h) = gamma_sr(-h)` holds exactly.
pub fn sample_cross_covariance(x: &TimeSeries, lag: i64, r: usize, s: usize) -> Result<f64> {
    let n = x.len();
    if lag.unsigned_abs() as usize >= n {
        return Err(MfhbError::LagOutOfRange { lag, n });
    }
    if lag < 0 {
        return sample_cross_covariance(x, -lag, s, r);
    }
    let h = lag as usize;
    let mut acc = 0.0;
    for t in 0..(n - h) {
        acc += x.value(t + h, r) * x.value(t, s);
    }
    Ok(acc / n as f64)
}

/// Sample cross-correlation `rho_rs(h)` of an (already centered) series.
pub fn sample_cross_correlation(x: &TimeSeries, lag: i64, r: usize, s: usize) -> Result<f64> {
    let num = sample_cross_covariance(x, lag, r, s)?;
    let den = (sample_cross_covariance(x, 0, r, r)? * sample_cross_covariance(x, 0, s, s)?).sqrt();
    if !(den > 0.0) || !num.is_finite() {
        return Err(MfhbError::StatisticUndefined {
            reason: "zero variance in a component".into(),
        });
    }
    Ok(num / den)
}

/// Bartlett-Priestley spectral window `(3/(4 pi)) (1 - (u/pi)^2)` on
/// `|u| <= pi`; integrates to one.
pub fn bartlett_priestley(u: f64) -> f64 {
    if u.abs() <= PI {
        3.0 / (4.0 * PI) * (1.0 - (u / PI).powi(2))
    } else {
        0.0
    }
}

fn wrap_to_pi(x: f64) -> f64 {
    let mut y = x % TWO_PI;
    if y > PI {
        y -= TWO_PI;
    } else if y <= -PI {
        y += TWO_PI;
    }
    y
}

/// Kernel-smoothed spectral density estimator: a weighted local average of
/// periodogram matrices over the full Fourier grid,
/// `(2 pi / (n h)) sum_j W((lambda - lambda_j)/h) I(lambda_j)`,
/// evaluable at arbitrary frequencies. Output matrices are symmetrized and
/// eigenvalue-floored so they are usable as positive-definite matrices.
#[derive(Clone, Debug)]
pub struct SpectralEstimator {
    periodogram: SpectralField,
    bandwidth: f64,
    n: usize,
}

impl SpectralEstimator {
    pub fn new(x: &TimeSeries, bandwidth: f64) -> Result<Self> {
        let n = x.len();
        let lo = TWO_PI / n as f64;
        if !(bandwidth > lo && bandwidth < PI) {
            return Err(MfhbError::BandwidthOutOfRange {
                bandwidth,
                lo,
                hi: PI,
            });
        }
        let grid = FrequencyGrid::new(n)?;
        Ok(Self {
            periodogram: periodogram(x, &grid)?,
            bandwidth,
            n,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Estimate at an arbitrary frequency together with the number of
    /// floored eigenvalues.
    pub fn evaluate_counted(&self, lambda: f64) -> Result<(HermitianMatrix, usize)> {
        if lambda < 0.0 {
            let (mat, raised) = self.evaluate_counted(-lambda)?;
            return Ok((mat.transposed(), raised));
        }
        let dim = self.periodogram.dim();
        let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
        let grid = self.periodogram.grid();
        for j in grid.signed_indices() {
            // frequency distances are taken modulo 2 pi: spectra are periodic
            let u = wrap_to_pi(lambda - grid.frequency(j)) / self.bandwidth;
            let w = bartlett_priestley(u);
            if w == 0.0 {
                continue;
            }
            let mat = self.periodogram.matrix_at(j);
            acc += mat.as_matrix() * Complex64::new(w, 0.0);
        }
        acc *= Complex64::new(TWO_PI / (self.n as f64 * self.bandwidth), 0.0);
        let raw = HermitianMatrix::new(acc);
        let floor = SPECTRAL_FLOOR_REL * raw.trace_real().max(0.0) / dim as f64;
        raw.floor_eigenvalues(floor)
    }

    pub fn evaluate(&self, lambda: f64) -> Result<HermitianMatrix> {
        Ok(self.evaluate_counted(lambda)?.0)
    }

    /// Materialize the estimator on a grid; returns the field and the total
    /// flooring count.
    pub fn field(&self, grid: &FrequencyGrid) -> Result<(SpectralField, usize)> {
        let mut raised = 0;
        let mats = (1..=grid.half())
            .map(|j| {
                let (mat, r) = self.evaluate_counted(grid.frequency(j as i64))?;
                raised += r;
                Ok(mat)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((SpectralField::from_positive(grid.clone(), mats)?, raised))
    }
}

/// Kernel spectral estimate on the full grid together with the evaluator.
pub fn kernel_spectral_estimate(
    x: &TimeSeries,
    bandwidth: f64,
) -> Result<(SpectralField, SpectralEstimator)> {
    let estimator = SpectralEstimator::new(x, bandwidth)?;
    let grid = FrequencyGrid::new(x.len())?;
    let (field, _) = estimator.field(&grid)?;
    Ok((field, estimator))
}

/// Weight function on `[-pi, pi]`, evaluable at arbitrary frequencies.
#[derive(Clone, Debug)]
pub enum WeightFunction {
    Constant(Complex64),
    /// `lambda -> exp(i h lambda)` for a signed lag `h`.
    ComplexExponential { lag: i64 },
    /// Values tabulated on a grid (signed-index order as produced by
    /// [`FrequencyGrid::signed_indices`]); evaluated by linear interpolation
    /// with periodic wrapping.
    Tabulated {
        grid: FrequencyGrid,
        values: Vec<Complex64>,
    },
}

impl WeightFunction {
    pub fn constant_one() -> Self {
        WeightFunction::Constant(Complex64::new(1.0, 0.0))
    }

    pub fn tabulated(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(MfhbError::Invalid("tabulated values must cover the grid".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(MfhbError::Invalid("tabulated weight values must be finite".into()));
        }
        Ok(WeightFunction::Tabulated { grid, values })
    }

    pub fn eval(&self, lambda: f64) -> Complex64 {
        match self {
            WeightFunction::Constant(c) => *c,
            WeightFunction::ComplexExponential { lag } => {
                Complex64::from_polar(1.0, *lag as f64 * lambda)
            }
            WeightFunction::Tabulated { grid, values } => {
                let half = grid.half() as i64;
                let n = grid.size_param() as f64;
                // fractional signed index, wrapped into [-half, half]
                let mut pos = wrap_to_pi(lambda) * n / TWO_PI;
                pos = pos.clamp(-(half as f64), half as f64);
                let lookup = |idx: i64| -> Complex64 {
                    let idx = idx.clamp(-half, half);
                    if idx == 0 {
                        // midpoint between the innermost grid points
                        return 0.5 * (values[(half - 1) as usize] + values[half as usize]);
                    }
                    let offset = if idx < 0 { idx + half } else { idx + half - 1 };
                    values[offset as usize]
                };
                let lo = pos.floor() as i64;
                let hi = lo + 1;
                let frac = pos - lo as f64;
                lookup(lo) * (1.0 - frac) + lookup(hi) * frac
            }
        }
    }
}

/// One spectral-mean coordinate: a weight function and a component pair
/// (0-based indices).
#[derive(Clone, Debug)]
pub struct SpectralMeanEntry {
    pub weight: WeightFunction,
    pub row: usize,
    pub col: usize,
}

/// The definition of a vector of spectral means.
#[derive(Clone, Debug)]
pub struct SpectralMeanSpec {
    pub entries: Vec<SpectralMeanEntry>,
}

impl SpectralMeanSpec {
    pub fn new(entries: Vec<SpectralMeanEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(MfhbError::Invalid("spectral mean spec must be nonempty".into()));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate_dim(&self, m: usize) -> Result<()> {
        for e in &self.entries {
            if e.row >= m || e.col >= m {
                return Err(MfhbError::Invalid(format!(
                    "component pair ({}, {}) outside dimension {m}",
                    e.row, e.col
                )));
            }
        }
        Ok(())
    }
}

/// Riemann-sum spectral means of a field:
/// `(2 pi / N) sum_{l in grid} phi_j(lambda_l) A_{r_j s_j}(lambda_l)`.
pub fn integrated_periodogram(
    field: &SpectralField,
    spec: &SpectralMeanSpec,
) -> Result<DVector<Complex64>> {
    spec.validate_dim(field.dim())?;
    let grid = field.grid();
    let scale = TWO_PI / grid.size_param() as f64;
    let mut out = DVector::from_element(spec.len(), Complex64::new(0.0, 0.0));
    for (j, entry) in spec.entries.iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for l in grid.signed_indices() {
            acc += entry.weight.eval(grid.frequency(l)) * field.entry(l, entry.row, entry.col);
        }
        out[j] = acc * scale;
    }
    Ok(out)
}

/// Spectral means of an analytic spectral density, by 4096-point trapezoidal
/// quadrature; returns the vector and an estimated quadrature error.
pub fn spectral_mean_true(
    f: &AnalyticSpectrum,
    spec: &SpectralMeanSpec,
) -> Result<(DVector<Complex64>, f64)> {
    spec.validate_dim(f.dim())?;
    let coarse = spectral_mean_quadrature(f, spec, 2048)?;
    let fine = spectral_mean_quadrature(f, spec, 4096)?;
    let err = (&fine - &coarse).norm();
    Ok((fine, err))
}

fn spectral_mean_quadrature(
    f: &AnalyticSpectrum,
    spec: &SpectralMeanSpec,
    points: usize,
) -> Result<DVector<Complex64>> {
    let step = TWO_PI / points as f64;
    let mut out = DVector::from_element(spec.len(), Complex64::new(0.0, 0.0));
    for i in 0..=points {
        let lambda = -PI + step * i as f64;
        let weight = if i == 0 || i == points { 0.5 } else { 1.0 };
        let mat = f.evaluate(lambda);
        for (j, entry) in spec.entries.iter().enumerate() {
            out[j] += weight * entry.weight.eval(lambda) * mat.entry(entry.row, entry.col);
        }
    }
    Ok(out * Complex64::new(step, 0.0))
}

/// Read a time series from CSV: one column per component, decimal points,
/// optional header row.
pub fn read_time_series_csv<R: Read>(reader: R) -> Result<TimeSeries> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rd.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue, // header row
            Err(e) => {
                return Err(MfhbError::Invalid(format!("bad CSV row {}: {e}", i + 1)));
            }
        }
    }
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 {
        return Err(MfhbError::Invalid("empty CSV input".into()));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(MfhbError::Invalid("ragged CSV rows".into()));
    }
    let values = DMatrix::from_fn(n, m, |t, c| rows[t][c]);
    TimeSeries::new(values)
}

/// Read a time series from a CSV file on disk.
pub fn read_time_series_csv_path(path: &std::path::Path) -> Result<TimeSeries> {
    read_time_series_csv(std::fs::File::open(path)?)
}
