//! Data-generating processes for the simulation study: VARMA recursions with
//! Gaussian, scaled-i.i.d. or BEKK(1,1) innovations, plus the bivariate MA(1)
//! example with controllable innovation kurtosis.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{MfhbError, Result};
use crate::hermitian::SymmetricRealMatrix;
use crate::rng::{stream, RngSeed};

/// Generation steps discarded before the first retained observation.
pub const DEFAULT_BURN_IN: usize = 500;

/// Component magnitude beyond which a recursion counts as explosive.
const EXPLOSION_LIMIT: f64 = 1e12;

/// An n x m block of observations, row `t` holding the vector observed at
/// time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 4 || values.ncols() < 1 {
            return Err(MfhbError::Invalid(format!(
                "time series must be at least 4 x 1, got {} x {}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MfhbError::Invalid("time series contains non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn value(&self, t: usize, component: usize) -> f64 {
        self.values[(t, component)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Subtract the sample mean of every component.
    pub fn centered(&self) -> TimeSeries {
        let n = self.len() as f64;
        let mut values = self.values.clone();
        for c in 0..self.dim() {
            let mean = values.column(c).sum() / n;
            for t in 0..self.len() {
                values[(t, c)] -= mean;
            }
        }
        TimeSeries { values }
    }
}

/// Marginal law of a scaled i.i.d. innovation component; all variants are
/// standardized to unit variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marginal {
    Gaussian,
    Laplace,
    Uniform,
}

impl Marginal {
    /// E[Z^4] of the standardized marginal.
    pub fn kurtosis(self) -> f64 {
        match self {
            Marginal::Gaussian => 3.0,
            Marginal::Laplace => 6.0,
            Marginal::Uniform => 1.8,
        }
    }

    /// Fourth cumulant (kurtosis minus three).
    pub fn fourth_cumulant(self) -> f64 {
        self.kurtosis() - 3.0
    }

    fn sample(self, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            Marginal::Gaussian => StandardNormal.sample(rng),
            Marginal::Laplace => {
                // inverse CDF of the standard Laplace scaled to unit variance
                let u: f64 = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 && u < 1.0 {
                        break u;
                    }
                };
                let raw = if u < 0.5 { (2.0 * u).ln() } else { -(2.0 * (1.0 - u)).ln() };
                raw / std::f64::consts::SQRT_2
            }
            Marginal::Uniform => (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt(),
        }
    }
}

/// Innovation process of a VARMA recursion.
#[derive(Clone, Debug)]
pub enum InnovationSpec {
    /// i.i.d. multivariate normal with the given covariance.
    Gaussian { cov: DMatrix<f64> },
    /// BEKK(1,1) conditional-volatility innovations
    /// `u(t) = S_t^{1/2} e(t)`, `e(t) ~ N(0, Id)`.
    Bekk {
        scale: DMatrix<f64>,
        arch: DMatrix<f64>,
        garch: DMatrix<f64>,
    },
    /// i.i.d. vectors `L z(t)` with independent standardized marginals `z`
    /// and `L` the lower-triangular factor of `cov`.
    IidScaled { marginal: Marginal, cov: DMatrix<f64> },
}

impl InnovationSpec {
    pub fn dim(&self) -> usize {
        match self {
            InnovationSpec::Gaussian { cov } => cov.nrows(),
            InnovationSpec::Bekk { scale, .. } => scale.nrows(),
            InnovationSpec::IidScaled { cov, .. } => cov.nrows(),
        }
    }

    fn validate(&self) -> Result<()> {
        let square = |m: &DMatrix<f64>, name: &str| -> Result<()> {
            if m.nrows() != m.ncols() || m.nrows() == 0 {
                return Err(MfhbError::Config(format!("{name} must be square and nonempty")));
            }
            Ok(())
        };
        match self {
            InnovationSpec::Gaussian { cov } | InnovationSpec::IidScaled { cov, .. } => {
                square(cov, "innovation covariance")?;
                if Cholesky::new(cov.clone()).is_none() {
                    return Err(MfhbError::Config(
                        "innovation covariance must be symmetric positive definite".into(),
                    ));
                }
            }
            InnovationSpec::Bekk { scale, arch, garch } => {
                square(scale, "bekk scale")?;
                square(arch, "bekk arch")?;
                square(garch, "bekk garch")?;
                if arch.nrows() != scale.nrows() || garch.nrows() != scale.nrows() {
                    return Err(MfhbError::Config("bekk matrices must share one dimension".into()));
                }
            }
        }
        Ok(())
    }

    /// Unconditional innovation covariance (closed form for i.i.d. kinds,
    /// fixed point of the volatility recursion for BEKK).
    pub fn unconditional_cov(&self) -> Result<DMatrix<f64>> {
        match self {
            InnovationSpec::Gaussian { cov } | InnovationSpec::IidScaled { cov, .. } => Ok(cov.clone()),
            InnovationSpec::Bekk { scale, arch, garch } => {
                let base = scale * scale.transpose();
                let mut sigma = base.clone();
                for _ in 0..100_000 {
                    let next = &base + arch * &sigma * arch.transpose() + garch * &sigma * garch.transpose();
                    let delta = (&next - &sigma).norm();
                    sigma = next;
                    if delta < 1e-14 * (1.0 + sigma.norm()) {
                        return Ok(sigma);
                    }
                    if !sigma.norm().is_finite() {
                        break;
                    }
                }
                Err(MfhbError::Config("bekk volatility recursion does not stabilize".into()))
            }
        }
    }
}

/// One step of the BEKK(1,1) volatility recursion:
/// `S_t = A0 A0^T + A1 u u^T A1^T + B1 S B1^T`. PSD by construction.
pub fn bekk_recursion(
    scale: &DMatrix<f64>,
    arch: &DMatrix<f64>,
    garch: &DMatrix<f64>,
    u_prev: &DVector<f64>,
    s_prev: &DMatrix<f64>,
) -> DMatrix<f64> {
    let outer = u_prev * u_prev.transpose();
    scale * scale.transpose() + arch * outer * arch.transpose() + garch * s_prev * garch.transpose()
}

/// VARMA(p, q) recursion
/// `X(t) = sum_i AR_i X(t-i) + sum_j MA_j u(t-j) + u(t)`.
#[derive(Clone, Debug)]
pub struct VarmaSpec {
    pub ar: Vec<DMatrix<f64>>,
    pub ma: Vec<DMatrix<f64>>,
    pub innovation: InnovationSpec,
    pub burn_in: usize,
}

impl VarmaSpec {
    pub fn dim(&self) -> usize {
        self.innovation.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.innovation.validate()?;
        let m = self.dim();
        for (name, mats) in [("ar", &self.ar), ("ma", &self.ma)] {
            for mat in mats.iter() {
                if mat.nrows() != m || mat.ncols() != m {
                    return Err(MfhbError::Config(format!(
                        "{name} coefficient must be {m} x {m}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Simulate `n` observations after discarding the burn-in, deterministically
/// in `(spec, n, seed)`.
pub fn generate(spec: &VarmaSpec, n: usize, seed: RngSeed) -> Result<TimeSeries> {
    if n < 4 {
        return Err(MfhbError::Invalid("need n >= 4".into()));
    }
    spec.validate()?;
    let m = spec.dim();
    let total = spec.burn_in + n;
    let mut rng = stream(seed);

    let chol = match &spec.innovation {
        InnovationSpec::Gaussian { cov } | InnovationSpec::IidScaled { cov, .. } => {
            Some(Cholesky::new(cov.clone()).expect("validated SPD").l())
        }
        InnovationSpec::Bekk { .. } => None,
    };

    let mut x: Vec<DVector<f64>> = Vec::with_capacity(total);
    let mut u: Vec<DVector<f64>> = Vec::with_capacity(total);
    // BEKK state starts at the unconditional baseline S = A0 A0^T with
    // u(0) = 0, inside the burn-in
    let mut volatility = match &spec.innovation {
        InnovationSpec::Bekk { scale, .. } => Some(scale * scale.transpose()),
        _ => None,
    };

    for t in 0..total {
        let shock = match &spec.innovation {
            InnovationSpec::Gaussian { .. } => {
                let z = DVector::from_iterator(m, (0..m).map(|_| Marginal::Gaussian.sample(&mut rng)));
                chol.as_ref().unwrap() * z
            }
            InnovationSpec::IidScaled { marginal, .. } => {
                let z = DVector::from_iterator(m, (0..m).map(|_| marginal.sample(&mut rng)));
                chol.as_ref().unwrap() * z
            }
            InnovationSpec::Bekk { scale, arch, garch } => {
                if t > 0 {
                    let s_prev = volatility.take().unwrap();
                    volatility = Some(bekk_recursion(scale, arch, garch, &u[t - 1], &s_prev));
                }
                let s_root = SymmetricRealMatrix::new(volatility.clone().unwrap())
                    .sqrt(0.0)?
                    .as_matrix()
                    .clone();
                let z = DVector::from_iterator(m, (0..m).map(|_| Marginal::Gaussian.sample(&mut rng)));
                s_root * z
            }
        };

        let mut value = shock.clone();
        for (i, phi) in spec.ar.iter().enumerate() {
            if t > i {
                value += phi * &x[t - i - 1];
            }
        }
        for (j, theta) in spec.ma.iter().enumerate() {
            if t > j {
                value += theta * &u[t - j - 1];
            }
        }
        if value.iter().any(|v| v.abs() > EXPLOSION_LIMIT) {
            return Err(MfhbError::UnstableModel {
                step: t,
                limit: EXPLOSION_LIMIT,
            });
        }
        u.push(shock);
        x.push(value);
    }

    let mut values = DMatrix::zeros(n, m);
    for t in 0..n {
        for c in 0..m {
            values[(t, c)] = x[spec.burn_in + t][c];
        }
    }
    TimeSeries::new(values)
}

/// Bivariate MA(1) with coefficient `[[1, 1], [1, -1]]` and independent
/// unit-variance innovations of the requested marginal.
pub fn generate_ma1_example(marginal: Marginal, n: usize, seed: RngSeed) -> Result<TimeSeries> {
    generate(&preset_ma1(marginal), n, seed)
}

/// Bivariate VAR(1) benchmark process (Gaussian innovations).
pub fn preset_model1() -> VarmaSpec {
    VarmaSpec {
        ar: vec![DMatrix::from_row_slice(2, 2, &[0.8, 0.4, -0.3, 0.6])],
        ma: vec![],
        innovation: InnovationSpec::Gaussian {
            cov: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        },
        burn_in: DEFAULT_BURN_IN,
    }
}

/// Bivariate VARMA(2,1) benchmark process with BEKK(1,1) innovations.
pub fn preset_model2() -> VarmaSpec {
    VarmaSpec {
        ar: vec![
            DMatrix::from_row_slice(2, 2, &[0.816, -0.623, -1.116, 1.074]),
            DMatrix::from_row_slice(2, 2, &[-0.643, 0.592, 0.615, -0.133]),
        ],
        ma: vec![DMatrix::from_row_slice(2, 2, &[0.0, -1.248, -0.801, 0.0])],
        innovation: InnovationSpec::Bekk {
            scale: DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, 0.01]),
            arch: DMatrix::from_row_slice(2, 2, &[0.15, 0.20, 0.06, 0.40]),
            garch: DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.9]),
        },
        burn_in: DEFAULT_BURN_IN,
    }
}

/// MA(1) example process with the requested innovation marginal.
pub fn preset_ma1(marginal: Marginal) -> VarmaSpec {
    VarmaSpec {
        ar: vec![],
        ma: vec![DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0])],
        innovation: InnovationSpec::IidScaled {
            marginal,
            cov: DMatrix::identity(2, 2),
        },
        burn_in: DEFAULT_BURN_IN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::lyapunov_var1_cov;
    use crate::spectral::sample_cross_covariance;

    #[test]
    fn bekk_without_memory_is_constant() {
        let scale = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.2]);
        let zero = DMatrix::zeros(2, 2);
        let s = bekk_recursion(
            &scale,
            &zero,
            &zero,
            &DVector::from_row_slice(&[5.0, -2.0]),
            &DMatrix::identity(2, 2),
        );
        assert!((s - &scale * scale.transpose()).norm() < 1e-15);
    }

    #[test]
    fn bekk_first_step_from_rest_state() {
        let bekk = match preset_model2().innovation {
            InnovationSpec::Bekk { scale, arch, garch } => (scale, arch, garch),
            _ => unreachable!(),
        };
        let base = &bekk.0 * bekk.0.transpose();
        let s = bekk_recursion(&bekk.0, &bekk.1, &bekk.2, &DVector::zeros(2), &base);
        // A0 A0^T + B1 A0 A0^T B1^T with diagonal 0.01 and 0.9 entries
        let expected = 0.0001 * (1.0 + 0.81);
        assert!((s[(0, 0)] - expected).abs() < 1e-15);
        assert!((s[(1, 1)] - expected).abs() < 1e-15);
        assert!(s[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn bekk_steps_stay_psd() {
        let bekk = match preset_model2().innovation {
            InnovationSpec::Bekk { scale, arch, garch } => (scale, arch, garch),
            _ => unreachable!(),
        };
        let mut rng = stream(RngSeed(404));
        let mut s = &bekk.0 * bekk.0.transpose();
        let mut u = DVector::zeros(2);
        for step in 0..1000 {
            s = bekk_recursion(&bekk.0, &bekk.1, &bekk.2, &u, &s);
            let min = SymmetricRealMatrix::new(s.clone()).min_eigenvalue().unwrap();
            assert!(min >= -1e-15, "step {step}: min eigenvalue {min:e}");
            let root = SymmetricRealMatrix::new(s.clone()).sqrt(0.0).unwrap();
            let z = DVector::from_iterator(2, (0..2).map(|_| Marginal::Gaussian.sample(&mut rng)));
            u = root.as_matrix() * z;
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = preset_model1();
        let a = generate(&spec, 50, RngSeed(7)).unwrap();
        let b = generate(&spec, 50, RngSeed(7)).unwrap();
        let c = generate(&spec, 50, RngSeed(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ma1_tiny_series_is_deterministic() {
        for marginal in [Marginal::Gaussian, Marginal::Laplace] {
            let a = generate_ma1_example(marginal, 4, RngSeed(3)).unwrap();
            let b = generate_ma1_example(marginal, 4, RngSeed(3)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 4);
            assert_eq!(a.dim(), 2);
        }
    }

    #[test]
    fn pure_noise_mean_shrinks_at_root_n_rate() {
        let spec = VarmaSpec {
            ar: vec![],
            ma: vec![],
            innovation: InnovationSpec::Gaussian { cov: DMatrix::identity(2, 2) },
            burn_in: 0,
        };
        let n = 4000;
        let x = generate(&spec, n, RngSeed(21)).unwrap();
        for c in 0..2 {
            let mean = x.values().column(c).sum() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "component {c}: mean {mean}");
        }
    }

    #[test]
    fn explosive_recursion_is_detected() {
        let spec = VarmaSpec {
            ar: vec![DMatrix::from_row_slice(2, 2, &[1.6, 0.0, 0.0, 1.6])],
            ma: vec![],
            innovation: InnovationSpec::Gaussian { cov: DMatrix::identity(2, 2) },
            burn_in: 500,
        };
        assert!(matches!(
            generate(&spec, 100, RngSeed(1)),
            Err(MfhbError::UnstableModel { .. })
        ));
    }

    #[test]
    fn model1_lag_zero_covariance_matches_lyapunov_oracle() {
        // mean over 200 seeds of the sample covariance at lag zero vs the
        // stationary solution of Gamma = Phi Gamma Phi^T + S
        let spec = preset_model1();
        let phi = spec.ar[0].clone();
        let cov = match &spec.innovation {
            InnovationSpec::Gaussian { cov } => cov.clone(),
            _ => unreachable!(),
        };
        let target = lyapunov_var1_cov(&phi, &cov);
        let n = 400;
        let seeds = 200;
        let mut mean = DMatrix::zeros(2, 2);
        for sd in 0..seeds {
            let x = generate(&spec, n, RngSeed(9000 + sd)).unwrap();
            for r in 0..2 {
                for s in 0..2 {
                    mean[(r, s)] += sample_cross_covariance(&x, 0, r, s).unwrap();
                }
            }
        }
        mean /= seeds as f64;
        for r in 0..2 {
            for s in 0..2 {
                let rel = (mean[(r, s)] - target[(r, s)]).abs() / target[(r, s)].abs();
                assert!(rel < 0.05, "entry ({r},{s}): rel err {rel}");
            }
        }
    }

    #[test]
    fn model2_series_is_finite_with_plausible_scale() {
        let spec = preset_model2();
        let x = generate(&spec, 100, RngSeed(17)).unwrap();
        assert_eq!(x.len(), 100);
        assert!(x.values().iter().all(|v| v.is_finite()));

        // long-run Monte Carlo band for the marginal standard deviations
        let long = generate(&spec, 40_000, RngSeed(18)).unwrap();
        for c in 0..2 {
            let long_sd = (sample_cross_covariance(&long, 0, c, c).unwrap()).sqrt();
            let short_sd = (sample_cross_covariance(&x, 0, c, c).unwrap()).sqrt();
            assert!(
                short_sd > 0.2 * long_sd && short_sd < 5.0 * long_sd,
                "component {c}: short {short_sd}, long {long_sd}"
            );
        }
    }

    #[test]
    fn laplace_marginal_has_unit_variance_and_kurtosis_six() {
        let mut rng = stream(RngSeed(55));
        let count = 200_000;
        let draws: Vec<f64> = (0..count).map(|_| Marginal::Laplace.sample(&mut rng)).collect();
        let var = draws.iter().map(|x| x * x).sum::<f64>() / count as f64;
        let fourth = draws.iter().map(|x| x.powi(4)).sum::<f64>() / count as f64;
        let kurt = fourth / (var * var);
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
        // kurtosis estimator has heavy tails; generous Monte Carlo band
        assert!((kurt - 6.0).abs() < 0.5, "kurtosis {kurt}");
    }

    #[test]
    fn ma1_cross_correlation_vanishes_at_lag_zero() {
        let n = 20_000;
        let x = generate_ma1_example(Marginal::Gaussian, n, RngSeed(61)).unwrap().centered();
        let num = sample_cross_covariance(&x, 0, 0, 1).unwrap();
        let den = (sample_cross_covariance(&x, 0, 0, 0).unwrap()
            * sample_cross_covariance(&x, 0, 1, 1).unwrap())
        .sqrt();
        let rho = num / den;
        assert!(rho.abs() < 4.0 / (n as f64).sqrt() * 2.0, "rho {rho}");
    }
}
