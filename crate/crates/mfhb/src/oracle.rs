//! Analytic ground truth used by tests and the acceptance suite, never by
//! the bootstrap itself: closed-form VARMA spectra, the second-order limit
//! covariance/relation matrices of integrated periodograms, the limiting
//! variance of sample cross-correlations of linear processes, and the
//! leading-order covariance of periodogram ordinates for Gaussian models.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::error::{MfhbError, Result};
use crate::hermitian::HermitianMatrix;
use crate::models::{InnovationSpec, Marginal, VarmaSpec};
use crate::spectral::{SpectralMeanSpec, TWO_PI};

const TRANSFER_TRUNCATION: f64 = 1e-12;
const TRANSFER_MAX_TERMS: usize = 20_000;

/// Closed-form spectral density of a VARMA process, in moving-average
/// transfer form `f(lambda) = (2 pi)^{-1} Psi(e^{-i lambda}) S Psi(e^{-i lambda})^*`
/// with the transfer series truncated at coefficient norm 1e-12.
#[derive(Clone, Debug)]
pub struct AnalyticSpectrum {
    transfer: Vec<DMatrix<f64>>,
    innovation_cov: DMatrix<f64>,
    gaussian_linear: bool,
    model_echo: String,
}

impl AnalyticSpectrum {
    pub fn from_varma(spec: &VarmaSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.dim();
        let p = spec.ar.len();
        let q = spec.ma.len();

        // Psi_0 = Id; Psi_k = Theta_k + sum_{i<=min(k,p)} Phi_i Psi_{k-i}
        let mut transfer = vec![DMatrix::identity(m, m)];
        for k in 1..=TRANSFER_MAX_TERMS {
            let mut psi = if k <= q {
                spec.ma[k - 1].clone()
            } else {
                DMatrix::zeros(m, m)
            };
            for i in 1..=p.min(k) {
                psi += &spec.ar[i - 1] * &transfer[k - i];
            }
            let norm = psi.norm();
            if !norm.is_finite() || norm > 1e9 {
                return Err(MfhbError::UnstableModel { step: k, limit: 1e9 });
            }
            if norm < TRANSFER_TRUNCATION && k > q {
                break;
            }
            transfer.push(psi);
            if k == TRANSFER_MAX_TERMS {
                return Err(MfhbError::Invalid(
                    "moving-average transfer series does not decay; model close to unit root".into(),
                ));
            }
        }

        let gaussian_linear = matches!(
            spec.innovation,
            InnovationSpec::Gaussian { .. }
                | InnovationSpec::IidScaled {
                    marginal: Marginal::Gaussian,
                    ..
                }
        );
        Ok(Self {
            transfer,
            innovation_cov: spec.innovation.unconditional_cov()?,
            gaussian_linear,
            model_echo: format!("varma(p={p}, q={q}, m={m})"),
        })
    }

    pub fn dim(&self) -> usize {
        self.innovation_cov.nrows()
    }

    /// True when the fourth-order cumulant spectra vanish (i.i.d. Gaussian
    /// innovations), so the second-order limits are the whole story.
    pub fn is_gaussian_linear(&self) -> bool {
        self.gaussian_linear
    }

    pub fn model_echo(&self) -> &str {
        &self.model_echo
    }

    pub fn transfer_coefficients(&self) -> &[DMatrix<f64>] {
        &self.transfer
    }

    pub fn innovation_cov(&self) -> &DMatrix<f64> {
        &self.innovation_cov
    }

    pub fn evaluate(&self, lambda: f64) -> HermitianMatrix {
        let m = self.dim();
        let mut psi = DMatrix::<Complex64>::zeros(m, m);
        for (k, coeff) in self.transfer.iter().enumerate() {
            let z = Complex64::from_polar(1.0, -(k as f64) * lambda);
            for r in 0..m {
                for s in 0..m {
                    psi[(r, s)] += coeff[(r, s)] * z;
                }
            }
        }
        let cov = self.innovation_cov.map(|v| Complex64::new(v, 0.0));
        HermitianMatrix::new(&psi * cov * psi.adjoint() * Complex64::new(1.0 / TWO_PI, 0.0))
    }

    /// Autocovariance `Gamma(u) = sum_k Psi_{k+u} S Psi_k^T` (transposed for
    /// negative lags).
    pub fn autocovariance(&self, lag: i64) -> DMatrix<f64> {
        if lag < 0 {
            return self.autocovariance(-lag).transpose();
        }
        let m = self.dim();
        let u = lag as usize;
        let mut acc = DMatrix::zeros(m, m);
        for k in 0..self.transfer.len() {
            if k + u >= self.transfer.len() {
                break;
            }
            acc += &self.transfer[k + u] * &self.innovation_cov * self.transfer[k].transpose();
        }
        acc
    }
}

/// Stationary covariance of a VAR(1): the fixed point of
/// `Gamma = Phi Gamma Phi^T + S`, iterated to 1e-12.
pub fn lyapunov_var1_cov(phi: &DMatrix<f64>, innovation_cov: &DMatrix<f64>) -> DMatrix<f64> {
    let mut gamma = innovation_cov.clone();
    for _ in 0..100_000 {
        let next = phi * &gamma * phi.transpose() + innovation_cov;
        let delta = (&next - &gamma).norm();
        gamma = next;
        if delta < 1e-12 * (1.0 + gamma.norm()) {
            break;
        }
    }
    gamma
}

/// Second-order parts of the limiting covariance and relation matrices of
/// root-n-scaled spectral means, by 8192-point trapezoidal quadrature.
/// Returns `(Sigma_1, Gamma_1, quadrature error estimate)`.
pub fn sigma1_gamma1(
    f: &AnalyticSpectrum,
    spec: &SpectralMeanSpec,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>, f64)> {
    spec.validate_dim(f.dim())?;
    let coarse = sigma1_gamma1_quadrature(f, spec, 4096);
    let fine = sigma1_gamma1_quadrature(f, spec, 8192);
    let err = (&fine.0 - &coarse.0).norm().max((&fine.1 - &coarse.1).norm());
    Ok((fine.0, fine.1, err))
}

fn sigma1_gamma1_quadrature(
    f: &AnalyticSpectrum,
    spec: &SpectralMeanSpec,
    points: usize,
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let dim = spec.len();
    let step = TWO_PI / points as f64;
    let mut sigma = DMatrix::<Complex64>::zeros(dim, dim);
    let mut gamma = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..=points {
        let lambda = -PI + step * i as f64;
        let quad_w = if i == 0 || i == points { 0.5 } else { 1.0 };
        let f_pos = f.evaluate(lambda);
        let f_neg = f.evaluate(-lambda);
        for (j, ej) in spec.entries.iter().enumerate() {
            let wj_pos = ej.weight.eval(lambda);
            for (k, ek) in spec.entries.iter().enumerate() {
                let wk_pos = ek.weight.eval(lambda);
                let wk_neg = ek.weight.eval(-lambda);
                let first = f_pos.entry(ej.row, ek.row) * f_neg.entry(ej.col, ek.col);
                let second = f_pos.entry(ej.row, ek.col) * f_neg.entry(ej.col, ek.row);
                sigma[(j, k)] += quad_w * (wj_pos * wk_pos.conj() * first + wj_pos * wk_neg.conj() * second);
                gamma[(j, k)] += quad_w * (wj_pos * wk_neg * first + wj_pos * wk_pos * second);
            }
        }
    }
    let scale = Complex64::new(TWO_PI * step, 0.0);
    (sigma * scale, gamma * scale)
}

/// Limiting variance of the root-n-scaled lag-zero cross-correlation of the
/// bivariate MA(1) example with innovation kurtoses `eta1, eta2`.
pub fn tau_squared_ma1(eta1: f64, eta2: f64) -> f64 {
    1.0 + (eta1 - 3.0) / 9.0 + (eta2 - 3.0) / 9.0
}

/// General limiting variance of `sqrt(n) (rho_rs(h) - rho)` for a linear
/// process with i.i.d. innovations of known fourth cumulants, evaluated by a
/// truncated series. Returns the value and the magnitude of the last summand
/// as a truncation report.
pub fn tau_squared_general(
    spec: &VarmaSpec,
    lag: i64,
    r: usize,
    s: usize,
    truncation: usize,
) -> Result<(f64, f64)> {
    let m = spec.dim();
    if r >= m || s >= m {
        return Err(MfhbError::Invalid("component index out of range".into()));
    }
    let (marginal, cov) = match &spec.innovation {
        InnovationSpec::Gaussian { cov } => (Marginal::Gaussian, cov.clone()),
        InnovationSpec::IidScaled { marginal, cov } => (*marginal, cov.clone()),
        InnovationSpec::Bekk { .. } => {
            return Err(MfhbError::Invalid(
                "limiting variance series requires i.i.d. innovations with known cumulants".into(),
            ))
        }
    };
    let spectrum = AnalyticSpectrum::from_varma(spec)?;
    let chol = Cholesky::new(cov)
        .ok_or_else(|| MfhbError::Config("innovation covariance must be SPD".into()))?
        .l();
    // coefficients of the representation X(t) = sum_k C_k z(t-k) with
    // independent standardized components z
    let coeffs: Vec<DMatrix<f64>> = spectrum
        .transfer_coefficients()
        .iter()
        .map(|psi| psi * &chol)
        .collect();
    let kappa = marginal.fourth_cumulant();
    let len = coeffs.len() as i64;

    let gamma = |u: i64, a: usize, b: usize| -> f64 { spectrum.autocovariance(u)[(a, b)] };
    let g_rr = gamma(0, r, r);
    let g_ss = gamma(0, s, s);
    if !(g_rr > 0.0 && g_ss > 0.0) {
        return Err(MfhbError::StatisticUndefined {
            reason: "zero variance component".into(),
        });
    }
    let rho = |u: i64, a: usize, b: usize| -> f64 {
        gamma(u, a, b) / (gamma(0, a, a) * gamma(0, b, b)).sqrt()
    };
    // cum(X_p(t+h1), X_q(t+h2), X_a(t+h3), X_b(t)) for independent
    // standardized innovation components with common fourth cumulant kappa
    let cum4 = |p: usize, q: usize, a: usize, b: usize, h1: i64, h2: i64, h3: i64| -> f64 {
        if kappa == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        let lo = (-h1.min(h2).min(h3)).max(0);
        for k in lo..len {
            let i1 = k + h1;
            let i2 = k + h2;
            let i3 = k + h3;
            if i1 < 0 || i2 < 0 || i3 < 0 || i1 >= len || i2 >= len || i3 >= len {
                continue;
            }
            for comp in 0..m {
                acc += coeffs[i1 as usize][(p, comp)]
                    * coeffs[i2 as usize][(q, comp)]
                    * coeffs[i3 as usize][(a, comp)]
                    * coeffs[k as usize][(b, comp)];
            }
        }
        kappa * acc
    };

    let rho_h = rho(lag, r, s);
    let term = |j: i64| -> f64 {
        let mut v = rho(j, r, r) * rho(j, s, s) + rho(j + lag, r, s) * rho(j - lag, s, r)
            + cum4(r, s, r, s, j, j - lag, lag) / (g_rr * g_ss);
        v += 0.5
            * rho_h.powi(2)
            * (rho(j, r, r).powi(2) + rho(j, s, s).powi(2) + 2.0 * rho(j, r, s).powi(2));
        v -= 2.0 * rho_h * (rho(j, r, r) * rho(j - lag, s, r) + rho(j, r, s) * rho(j - lag, s, s));
        v += 0.25
            * rho_h.powi(2)
            * (cum4(r, r, r, r, j, j, 0) / g_rr.powi(2)
                + cum4(s, s, s, s, j, j, 0) / g_ss.powi(2)
                + 2.0 * cum4(r, r, s, s, j, j, 0) / (g_rr * g_ss));
        v -= rho_h / (g_rr * g_ss).sqrt()
            * (cum4(r, s, r, r, j, j - lag, 0) / g_rr + cum4(r, s, s, s, j, j - lag, 0) / g_ss);
        v
    };

    let t = truncation as i64;
    let mut total = 0.0;
    for j in -t..=t {
        total += term(j);
    }
    let tail = term(t).abs().max(term(-t).abs());
    Ok((total, tail))
}

/// Leading-order covariance of periodogram ordinates
/// `Cov(I_rs(lambda_j), I_vw(lambda_k))` at Fourier frequencies of a
/// Gaussian-linear model (whose fourth-order cumulant spectra vanish):
/// the product term on the diagonal plus the extra term at 0 and pi.
pub fn gaussian_periodogram_covariance(
    f: &AnalyticSpectrum,
    index_j: usize,
    index_k: usize,
    n: usize,
    r: usize,
    s: usize,
    v: usize,
    w: usize,
) -> Result<Complex64> {
    if !f.is_gaussian_linear() {
        return Err(MfhbError::Invalid(
            "fourth-order cumulant part unavailable for non-Gaussian models".into(),
        ));
    }
    if index_j != index_k {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let lambda = TWO_PI * index_j as f64 / n as f64;
    let f_pos = f.evaluate(lambda);
    let f_neg = f.evaluate(-lambda);
    let mut out = f_pos.entry(r, v) * f_neg.entry(s, w);
    let at_boundary = index_j == 0 || 2 * index_j == n;
    if at_boundary {
        out += f_pos.entry(r, w) * f_pos.entry(s, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{preset_ma1, preset_model1};
    use crate::spectral::{SpectralMeanEntry, WeightFunction};

    fn flat_univariate(variance: f64) -> AnalyticSpectrum {
        AnalyticSpectrum::from_varma(&VarmaSpec {
            ar: vec![],
            ma: vec![],
            innovation: InnovationSpec::Gaussian {
                cov: DMatrix::from_element(1, 1, variance),
            },
            burn_in: 0,
        })
        .unwrap()
    }

    fn constant_spec(entries: &[(usize, usize)]) -> SpectralMeanSpec {
        SpectralMeanSpec::new(
            entries
                .iter()
                .map(|&(row, col)| SpectralMeanEntry {
                    weight: WeightFunction::constant_one(),
                    row,
                    col,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn flat_spectrum_level() {
        let f = flat_univariate(2.5);
        let at = f.evaluate(1.0);
        assert!((at.entry(0, 0).re - 2.5 / TWO_PI).abs() < 1e-14);
    }

    #[test]
    fn var1_spectrum_lag_zero_matches_lyapunov() {
        let spec = preset_model1();
        let f = AnalyticSpectrum::from_varma(&spec).unwrap();
        let target = lyapunov_var1_cov(&spec.ar[0], f.innovation_cov());
        let direct = f.autocovariance(0);
        assert!((direct - &target).norm() < 1e-9 * (1.0 + target.norm()));
    }

    #[test]
    fn flat_sigma1_is_twice_squared_variance() {
        // 2 pi * integral of 2 (sigma^2/2pi)^2 over [-pi, pi] = 2 sigma^4
        let sigma_sq = 1.7;
        let f = flat_univariate(sigma_sq);
        let spec = constant_spec(&[(0, 0)]);
        let (sigma1, gamma1, err) = sigma1_gamma1(&f, &spec).unwrap();
        let expected = 2.0 * sigma_sq * sigma_sq;
        assert!((sigma1[(0, 0)].re - expected).abs() < 1e-8 + err);
        assert!((gamma1[(0, 0)] - sigma1[(0, 0)]).norm() < 1e-8 + err);
    }

    #[test]
    fn conjugate_reflective_weights_make_sigma_equal_gamma() {
        let f = AnalyticSpectrum::from_varma(&preset_model1()).unwrap();
        let spec = SpectralMeanSpec::new(vec![
            SpectralMeanEntry {
                weight: WeightFunction::ComplexExponential { lag: 1 },
                row: 0,
                col: 1,
            },
            SpectralMeanEntry {
                weight: WeightFunction::constant_one(),
                row: 0,
                col: 0,
            },
        ])
        .unwrap();
        let (sigma1, gamma1, err) = sigma1_gamma1(&f, &spec).unwrap();
        assert!((sigma1 - gamma1).norm() <= 1e-8 + 10.0 * err);
    }

    #[test]
    fn quadrature_is_self_consistent() {
        let f = AnalyticSpectrum::from_varma(&preset_model1()).unwrap();
        let spec = constant_spec(&[(0, 0), (0, 1), (1, 1)]);
        let coarse = sigma1_gamma1_quadrature(&f, &spec, 4096);
        let fine = sigma1_gamma1_quadrature(&f, &spec, 8192);
        let rel = (&fine.0 - &coarse.0).norm() / fine.0.norm();
        assert!(rel < 1e-8, "rel {rel:e}");
    }

    #[test]
    fn ma1_limit_variance_closed_form() {
        assert!((tau_squared_ma1(3.0, 3.0) - 1.0).abs() < 1e-15);
        assert!((tau_squared_ma1(6.0, 6.0) - 5.0 / 3.0).abs() < 1e-15);
        assert!((tau_squared_ma1(3.0, 6.0) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn series_form_reproduces_ma1_closed_form() {
        let gaussian = preset_ma1(Marginal::Gaussian);
        let (value, tail) = tau_squared_general(&gaussian, 0, 0, 1, 50).unwrap();
        assert!(tail < 1e-12);
        assert!((value - 1.0).abs() < 1e-10, "gaussian: {value}");

        let laplace = preset_ma1(Marginal::Laplace);
        let (value, _) = tau_squared_general(&laplace, 0, 0, 1, 50).unwrap();
        assert!((value - 5.0 / 3.0).abs() < 1e-10, "laplace: {value}");
    }

    #[test]
    fn white_noise_cross_correlation_variance_is_one() {
        let spec = VarmaSpec {
            ar: vec![],
            ma: vec![],
            innovation: InnovationSpec::Gaussian {
                cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            },
            burn_in: 0,
        };
        let (value, _) = tau_squared_general(&spec, 0, 0, 1, 10).unwrap();
        assert!((value - 1.0).abs() < 1e-12, "{value}");
    }

    #[test]
    fn periodogram_covariance_prediction_cases() {
        let f = AnalyticSpectrum::from_varma(&preset_model1()).unwrap();
        let n = 256;
        // distinct frequencies are asymptotically uncorrelated
        let off = gaussian_periodogram_covariance(&f, 3, 5, n, 0, 1, 0, 1).unwrap();
        assert_eq!(off, Complex64::new(0.0, 0.0));
        // interior diagonal: product of spectral entries
        let j = 31;
        let lambda = TWO_PI * j as f64 / n as f64;
        let pred = gaussian_periodogram_covariance(&f, j, j, n, 0, 1, 0, 1).unwrap();
        let expected = f.evaluate(lambda).entry(0, 0) * f.evaluate(-lambda).entry(1, 1);
        assert!((pred - expected).norm() < 1e-14);
        // boundary picks up the extra term
        let at_pi = gaussian_periodogram_covariance(&f, n / 2, n / 2, n, 0, 0, 1, 1).unwrap();
        let fpi = f.evaluate(PI);
        let expected_pi = fpi.entry(0, 1) * f.evaluate(-PI).entry(0, 1) + fpi.entry(0, 1) * fpi.entry(0, 1);
        assert!((at_pi - expected_pi).norm() < 1e-14);
    }

    #[test]
    fn non_gaussian_model_is_rejected() {
        let f = AnalyticSpectrum::from_varma(&preset_ma1(Marginal::Laplace)).unwrap();
        assert!(!f.is_gaussian_linear());
        assert!(gaussian_periodogram_covariance(&f, 1, 1, 64, 0, 0, 0, 0).is_err());
    }
}
