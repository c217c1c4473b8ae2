//! Config-driven experiment harness: Monte Carlo reference values, the
//! bootstrap comparison grid, CSV reporting and the self-test suite.
//!
//! Every repetition simulates one series and applies every method/parameter
//! combination to it. All randomness flows through labeled substreams of the
//! config seed, and per-repetition results are aggregated in index order, so
//! a table is a pure function of its config regardless of thread count.
//! Timing is reported in a sidecar (it is the one quantity that cannot be
//! deterministic).
//!
//! Bootstrap estimates and reference values are reported both on the raw
//! scale and multiplied by ten, the scale on which results of this kind are
//! conventionally tabulated at n = 100.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::engine::{builtin_cross_correlation, run_smooth, MfhbConfig};
use crate::error::{MfhbError, Result};
use crate::mbb::{mbb_statistic_sd, MbbConfig};
use crate::models::{
    generate, preset_ma1, preset_model1, preset_model2, InnovationSpec, Marginal, TimeSeries,
    VarmaSpec, DEFAULT_BURN_IN,
};
use crate::parallel::map_indexed;
use crate::rng::{derive_substream, RngSeed};
use crate::spectral::sample_cross_correlation;

/// Reporting factor pinning the tabulated scale.
pub const REPORT_SCALE: f64 = 10.0;

/// Cross-correlation statistic selector (0-based component indices).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Hash)]
pub struct CrossCorrelationSpec {
    pub lag: i64,
    pub r: usize,
    pub s: usize,
}

impl CrossCorrelationSpec {
    pub fn label(&self) -> String {
        format!("rho(r={};s={};h={})", self.r, self.s, self.lag)
    }

    /// Evaluate on a raw series (centered internally).
    pub fn evaluate(&self, x: &TimeSeries) -> Result<f64> {
        sample_cross_correlation(&x.centered(), self.lag, self.r, self.s)
    }
}

/// Model selection: a named preset or an inline VARMA definition.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Preset(String),
    Inline(VarmaConfig),
}

/// JSON-friendly VARMA definition (matrices as row-major nested arrays).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarmaConfig {
    #[serde(default)]
    pub ar: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub ma: Vec<Vec<Vec<f64>>>,
    pub innovation: InnovationConfig,
    #[serde(default)]
    pub burn_in: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationConfig {
    Gaussian { cov: Vec<Vec<f64>> },
    Bekk {
        scale: Vec<Vec<f64>>,
        arch: Vec<Vec<f64>>,
        garch: Vec<Vec<f64>>,
    },
    IidScaled { marginal: String, cov: Vec<Vec<f64>> },
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(MfhbError::Config(format!("{name}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

impl ModelConfig {
    /// Resolve to a name and a concrete model spec.
    pub fn resolve(&self) -> Result<(String, VarmaSpec)> {
        match self {
            ModelConfig::Preset(name) => match name.as_str() {
                "model1" => Ok((name.clone(), preset_model1())),
                "model2" => Ok((name.clone(), preset_model2())),
                "ma1_example" => Ok((name.clone(), preset_ma1(Marginal::Gaussian))),
                other => Err(MfhbError::Config(format!(
                    "unknown model preset '{other}' (known: model1, model2, ma1_example)"
                ))),
            },
            ModelConfig::Inline(cfg) => {
                let innovation = match &cfg.innovation {
                    InnovationConfig::Gaussian { cov } => InnovationSpec::Gaussian {
                        cov: matrix_from_rows(cov, "innovation.cov")?,
                    },
                    InnovationConfig::Bekk { scale, arch, garch } => InnovationSpec::Bekk {
                        scale: matrix_from_rows(scale, "innovation.scale")?,
                        arch: matrix_from_rows(arch, "innovation.arch")?,
                        garch: matrix_from_rows(garch, "innovation.garch")?,
                    },
                    InnovationConfig::IidScaled { marginal, cov } => {
                        let marginal = match marginal.as_str() {
                            "gaussian" => Marginal::Gaussian,
                            "laplace" => Marginal::Laplace,
                            "uniform" => Marginal::Uniform,
                            other => {
                                return Err(MfhbError::Config(format!(
                                    "unknown marginal '{other}' (known: gaussian, laplace, uniform)"
                                )))
                            }
                        };
                        InnovationSpec::IidScaled {
                            marginal,
                            cov: matrix_from_rows(cov, "innovation.cov")?,
                        }
                    }
                };
                let spec = VarmaSpec {
                    ar: cfg
                        .ar
                        .iter()
                        .map(|m| matrix_from_rows(m, "ar"))
                        .collect::<Result<_>>()?,
                    ma: cfg
                        .ma
                        .iter()
                        .map(|m| matrix_from_rows(m, "ma"))
                        .collect::<Result<_>>()?,
                    innovation,
                    burn_in: cfg.burn_in.unwrap_or(DEFAULT_BURN_IN),
                };
                spec.validate()?;
                Ok(("inline".into(), spec))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct MfhbMethodConfig {
    pub bandwidths: Vec<f64>,
    pub block_lengths: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct MbbMethodConfig {
    pub block_lengths: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct MethodsConfig {
    #[serde(default)]
    pub mfhb: Option<MfhbMethodConfig>,
    #[serde(default)]
    pub mbb: Option<MbbMethodConfig>,
}

fn default_exact_repetitions() -> usize {
    10_000
}

/// A full experiment: one model, a list of statistics, a method/parameter
/// grid, and the Monte Carlo protocol sizes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub n: usize,
    pub statistics: Vec<CrossCorrelationSpec>,
    pub methods: MethodsConfig,
    pub repetitions: usize,
    pub bootstrap_replicates: usize,
    #[serde(default = "default_exact_repetitions")]
    pub exact_repetitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(MfhbError::Config("need at least one repetition".into()));
        }
        if self.bootstrap_replicates < 2 {
            return Err(MfhbError::Config("need at least two bootstrap replicates".into()));
        }
        if self.statistics.is_empty() {
            return Err(MfhbError::Config("need at least one statistic".into()));
        }
        let have_mfhb = self
            .methods
            .mfhb
            .as_ref()
            .is_some_and(|m| !m.bandwidths.is_empty() && !m.block_lengths.is_empty());
        let have_mbb = self
            .methods
            .mbb
            .as_ref()
            .is_some_and(|m| !m.block_lengths.is_empty());
        if !have_mfhb && !have_mbb {
            return Err(MfhbError::Config("method grids are empty".into()));
        }
        Ok(())
    }
}

/// One method/parameter cell of the comparison grid.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Cell {
    Mfhb { bandwidth: f64, block_length: usize },
    Mbb { block_length: usize },
}

fn enumerate_cells(cfg: &ExperimentConfig) -> Vec<(CrossCorrelationSpec, Cell)> {
    let mut cells = Vec::new();
    for stat in &cfg.statistics {
        if let Some(mfhb) = &cfg.methods.mfhb {
            for &bandwidth in &mfhb.bandwidths {
                for &block_length in &mfhb.block_lengths {
                    cells.push((
                        *stat,
                        Cell::Mfhb {
                            bandwidth,
                            block_length,
                        },
                    ));
                }
            }
        }
        if let Some(mbb) = &cfg.methods.mbb {
            for &block_length in &mbb.block_lengths {
                cells.push((*stat, Cell::Mbb { block_length }));
            }
        }
    }
    cells
}

/// Monte Carlo estimate of the true sampling standard deviation of a
/// statistic at sample size `n`, from independent simulated series.
/// Returns `(raw sd, sd scaled by ten)`.
pub fn monte_carlo_exact(
    model: &VarmaSpec,
    n: usize,
    statistic: CrossCorrelationSpec,
    repetitions: usize,
    seed: RngSeed,
) -> Result<(f64, f64)> {
    if repetitions < 100 {
        return Err(MfhbError::Config("reference estimate needs at least 100 repetitions".into()));
    }
    let values: Vec<Result<f64>> = map_indexed(repetitions, |i| {
        let series = generate(model, n, seed.child_indexed("series", i as u64))?;
        statistic.evaluate(&series)
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let sd = (ss / (values.len() - 1) as f64).sqrt();
    Ok((sd, REPORT_SCALE * sd))
}

/// One row of the aggregated comparison table. `mean`, `std`, `mse_x10` and
/// `exact` are on the reporting scale; `raw_mean` is unscaled.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub statistic: CrossCorrelationSpec,
    pub method: String,
    pub bandwidth: Option<f64>,
    pub block_length: usize,
    pub mean: f64,
    pub std: f64,
    pub mse_x10: f64,
    pub raw_mean: f64,
    pub exact: f64,
    pub skips: usize,
    pub seconds: f64,
    /// Scaled per-repetition estimates (successful ones), kept so the
    /// aggregates can be recomputed.
    pub estimates: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ResultTable {
    pub model: String,
    pub n: usize,
    pub rows: Vec<ResultRow>,
    pub flagged: bool,
}

impl ResultTable {
    /// Deterministic CSV of the aggregated results (no timing column; the
    /// wall clock lives in [`ResultTable::timings_csv`]).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,statistic,method,h,b,mean,std,mse_x10,raw_mean,skips\n");
        for row in &self.rows {
            let bandwidth = row
                .bandwidth
                .map(|h| format!("{h:.4}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                self.model,
                row.statistic.label(),
                row.method,
                bandwidth,
                row.block_length,
                row.mean,
                row.std,
                row.mse_x10,
                row.raw_mean,
                row.skips
            ));
        }
        out
    }

    /// Wall-clock sidecar, one line per cell.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from("model,statistic,method,h,b,seconds\n");
        for row in &self.rows {
            let bandwidth = row
                .bandwidth
                .map(|h| format!("{h:.4}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                self.model,
                row.statistic.label(),
                row.method,
                bandwidth,
                row.block_length,
                row.seconds
            ));
        }
        out
    }
}

/// Run the full comparison grid of a config. Deterministic per config;
/// repetition-level work runs in parallel when the `parallel` feature is on.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let (model_name, model) = cfg.model.resolve()?;
    let root = RngSeed(cfg.seed);
    let cells = enumerate_cells(cfg);

    // reference values, one per distinct statistic
    let mut exacts: Vec<(CrossCorrelationSpec, f64)> = Vec::new();
    for stat in &cfg.statistics {
        if exacts.iter().any(|(s, _)| s == stat) {
            continue;
        }
        let exact_seed = derive_substream(root, &["exact", &model_name, &stat.label()]);
        let (_, scaled) = monte_carlo_exact(&model, cfg.n, *stat, cfg.exact_repetitions, exact_seed)?;
        exacts.push((*stat, scaled));
    }

    // per repetition: simulate one series, apply every cell
    let per_rep: Vec<Vec<(Option<f64>, f64)>> = map_indexed(cfg.repetitions, |rep| {
        let series_seed = derive_substream(root, &["rep", &model_name, &rep.to_string()]);
        let series = match generate(&model, cfg.n, series_seed) {
            Ok(s) => s,
            Err(_) => return vec![(None, 0.0); cells.len()],
        };
        let centered = series.centered();
        cells
            .iter()
            .map(|(stat, cell)| {
                let started = Instant::now();
                let estimate = run_cell(&centered, *stat, cell, root, &model_name, rep, cfg);
                (estimate, started.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(cells.len());
    let mut flagged = false;
    for (icell, (stat, cell)) in cells.iter().enumerate() {
        let exact = exacts
            .iter()
            .find(|(s, _)| s == stat)
            .map(|(_, e)| *e)
            .expect("reference computed above");
        let mut estimates = Vec::with_capacity(cfg.repetitions);
        let mut seconds = 0.0;
        for rep in per_rep.iter() {
            let (est, secs) = &rep[icell];
            seconds += secs;
            if let Some(raw) = est {
                estimates.push(REPORT_SCALE * raw);
            }
        }
        let skips = cfg.repetitions - estimates.len();
        if skips * 10 > cfg.repetitions {
            flagged = true;
        }
        let count = estimates.len().max(1) as f64;
        let mean = estimates.iter().sum::<f64>() / count;
        let variance = if estimates.len() > 1 {
            estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0)
        } else {
            0.0
        };
        let mse_x10 = REPORT_SCALE
            * estimates.iter().map(|v| (v - exact).powi(2)).sum::<f64>()
            / count;
        let (method, bandwidth, block_length) = match cell {
            Cell::Mfhb {
                bandwidth,
                block_length,
            } => ("mfhb".to_string(), Some(*bandwidth), *block_length),
            Cell::Mbb { block_length } => ("mbb".to_string(), None, *block_length),
        };
        rows.push(ResultRow {
            statistic: *stat,
            method,
            bandwidth,
            block_length,
            mean,
            std: variance.sqrt(),
            mse_x10,
            raw_mean: mean / REPORT_SCALE,
            exact,
            skips,
            seconds,
            estimates,
        });
    }
    Ok(ResultTable {
        model: model_name,
        n: cfg.n,
        rows,
        flagged,
    })
}

fn run_cell(
    centered: &TimeSeries,
    stat: CrossCorrelationSpec,
    cell: &Cell,
    root: RngSeed,
    model_name: &str,
    rep: usize,
    cfg: &ExperimentConfig,
) -> Option<f64> {
    match cell {
        Cell::Mfhb {
            bandwidth,
            block_length,
        } => {
            let seed = derive_substream(
                root,
                &[
                    "mfhb",
                    model_name,
                    &rep.to_string(),
                    &stat.label(),
                    &format!("{bandwidth:.6}"),
                    &block_length.to_string(),
                ],
            );
            let (spec, statistic) = builtin_cross_correlation(stat.lag, stat.r, stat.s);
            let run = run_smooth(
                centered,
                &spec,
                &statistic,
                MfhbConfig::new(*bandwidth, *block_length, cfg.bootstrap_replicates, seed),
            )
            .ok()?;
            // replicates approximate sqrt(n) (rho* - rho): rescale to the sd
            // of the statistic itself
            Some(run.standard_deviation(0) / (cfg.n as f64).sqrt())
        }
        Cell::Mbb { block_length } => {
            let seed = derive_substream(
                root,
                &[
                    "mbb",
                    model_name,
                    &rep.to_string(),
                    &stat.label(),
                    &block_length.to_string(),
                ],
            );
            let mbb_cfg = MbbConfig {
                block_length: *block_length,
                replicates: cfg.bootstrap_replicates,
                seed,
            };
            mbb_statistic_sd(centered, stat.lag, stat.r, stat.s, &mbb_cfg)
                .ok()
                .map(|(sd, _)| sd)
        }
    }
}

// ---------------------------------------------------------------------------
// Self test
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SelftestResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Fast end-to-end identity checks on seeded data, suitable for a CLI
/// sanity command.
pub fn run_selftest() -> Vec<SelftestResult> {
    let mut results = Vec::new();
    let mut push = |name: &str, outcome: Result<(bool, String)>| {
        let (passed, detail) = match outcome {
            Ok((ok, detail)) => (ok, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        results.push(SelftestResult {
            name: name.to_string(),
            passed,
            detail,
        });
    };

    let x = match generate(&preset_model1(), 128, RngSeed(20_260_810)) {
        Ok(s) => s.centered(),
        Err(e) => {
            push("simulate", Err(e));
            return results;
        }
    };

    push("residual-average-identity", check_residual_identity(&x, 12));
    push("convolved-mean-identity", check_convolved_mean(&x, 12, 0.12));
    push("real-representation-round-trip", check_real_rep_round_trip());
    push("matrix-root-multiply-back", check_matrix_root());
    push("riemann-sum-lag-zero-identity", check_riemann_identity());
    push("run-determinism", check_run_determinism(&x));
    results
}

fn check_residual_identity(x: &TimeSeries, b: usize) -> Result<(bool, String)> {
    use crate::engine::residual_fields;
    use crate::spectral::{subsample_mean_spectrum, subsample_periodograms};
    let subs = subsample_periodograms(x, b)?;
    let mean = subsample_mean_spectrum(&subs)?;
    let (residuals, _) = residual_fields(&subs, &mean)?;
    let grid = mean.grid().clone();
    let dim = mean.dim();
    let count = residuals.len() as f64;
    let mut worst = 0.0f64;
    for j in 1..=grid.half() {
        let mut acc = crate::hermitian::HermitianMatrix::zeros(dim);
        for field in &residuals {
            acc = acc.add(field.positive_matrix(j));
        }
        let diff = acc
            .scale(1.0 / count)
            .sub(&crate::hermitian::HermitianMatrix::identity(dim))
            .frobenius_norm();
        worst = worst.max(diff);
    }
    Ok((worst < 1e-8, format!("max |mean(U) - Id| = {worst:.3e}")))
}

fn check_convolved_mean(x: &TimeSeries, b: usize, bandwidth: f64) -> Result<(bool, String)> {
    use crate::engine::{recolored_fields, residual_fields};
    use crate::spectral::{subsample_mean_spectrum, subsample_periodograms, FrequencyGrid, SpectralEstimator};
    let estimator = SpectralEstimator::new(x, bandwidth)?;
    let (smoothed_sub, _) = estimator.field(&FrequencyGrid::new(b)?)?;
    let subs = subsample_periodograms(x, b)?;
    let mean = subsample_mean_spectrum(&subs)?;
    let (residuals, _) = residual_fields(&subs, &mean)?;
    let recolored = recolored_fields(&residuals, &smoothed_sub)?;
    let count = recolored.len() as f64;
    let mut worst = 0.0f64;
    for j in 1..=smoothed_sub.grid().half() {
        let mut acc = crate::hermitian::HermitianMatrix::zeros(smoothed_sub.dim());
        for field in &recolored {
            acc = acc.add(field.positive_matrix(j));
        }
        let diff = acc
            .scale(1.0 / count)
            .sub(smoothed_sub.positive_matrix(j))
            .frobenius_norm();
        worst = worst.max(diff / (1.0 + smoothed_sub.positive_matrix(j).frobenius_norm()));
    }
    Ok((worst < 1e-10, format!("max relative deviation = {worst:.3e}")))
}

fn check_real_rep_round_trip() -> Result<(bool, String)> {
    use crate::complex_normal::{from_real_rep, real_rep_from_parts};
    use num_complex::Complex64;
    let cov = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(2.0, 0.0),
            Complex64::new(0.3, 0.4),
            Complex64::new(0.3, -0.4),
            Complex64::new(1.0, 0.0),
        ],
    );
    let rel = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(0.5, 0.1),
            Complex64::new(0.2, -0.3),
            Complex64::new(0.2, -0.3),
            Complex64::new(-0.4, 0.2),
        ],
    );
    let rep = real_rep_from_parts(&cov, &rel);
    let (cov2, rel2) = from_real_rep(&rep)?;
    let err = (cov2.as_matrix() - &cov).norm() + (rel2 - rel).norm();
    Ok((err < 1e-14, format!("round-trip error = {err:.3e}")))
}

fn check_matrix_root() -> Result<(bool, String)> {
    use crate::hermitian::HermitianMatrix;
    use num_complex::Complex64;
    let a = HermitianMatrix::new(DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(2.0, 0.0),
            Complex64::new(0.5, 0.25),
            Complex64::new(0.5, -0.25),
            Complex64::new(1.5, 0.0),
        ],
    ));
    let (root, _) = a.sqrt(0.0)?;
    let err = (root.as_matrix() * root.as_matrix() - a.as_matrix()).norm();
    let bound = 1e-9 * (1.0 + a.frobenius_norm());
    Ok((err <= bound, format!("multiply-back error = {err:.3e}")))
}

fn check_riemann_identity() -> Result<(bool, String)> {
    use crate::spectral::{
        integrated_periodogram, periodogram, sample_cross_covariance, FrequencyGrid,
        SpectralMeanEntry, SpectralMeanSpec, WeightFunction,
    };
    let n = 101;
    let x = generate(&preset_model1(), n, RngSeed(77))?;
    let grid = FrequencyGrid::new(n)?;
    let field = periodogram(&x, &grid)?;
    let spec = SpectralMeanSpec::new(vec![SpectralMeanEntry {
        weight: WeightFunction::constant_one(),
        row: 0,
        col: 0,
    }])?;
    let got = integrated_periodogram(&field, &spec)?[0].re;
    let mean = (0..n).map(|t| x.value(t, 0)).sum::<f64>() / n as f64;
    let expected = sample_cross_covariance(&x, 0, 0, 0)? - mean * mean;
    let err = (got - expected).abs();
    Ok((err < 1e-10, format!("identity error = {err:.3e}")))
}

fn check_run_determinism(x: &TimeSeries) -> Result<(bool, String)> {
    let (spec, statistic) = builtin_cross_correlation(0, 0, 1);
    let cfg = MfhbConfig::new(0.12, 12, 16, RngSeed(5));
    let a = run_smooth(x, &spec, &statistic, cfg)?;
    let b = run_smooth(x, &spec, &statistic, cfg)?;
    let identical = a
        .replicates
        .iter()
        .zip(&b.replicates)
        .all(|(u, v)| u == v);
    Ok((identical, "two runs compared bit-for-bit".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_config() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelConfig::Preset("model1".into()),
            n: 64,
            statistics: vec![CrossCorrelationSpec { lag: 0, r: 0, s: 1 }],
            methods: MethodsConfig {
                mfhb: Some(MfhbMethodConfig {
                    bandwidths: vec![0.15],
                    block_lengths: vec![6],
                }),
                mbb: Some(MbbMethodConfig {
                    block_lengths: vec![6],
                }),
            },
            repetitions: 3,
            bootstrap_replicates: 8,
            exact_repetitions: 100,
            seed: 99,
            output: None,
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = smoke_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.n, 64);
        assert_eq!(back.statistics[0].lag, 0);
        assert!(matches!(back.model, ModelConfig::Preset(ref p) if p == "model1"));
    }

    #[test]
    fn preset_names_resolve() {
        for name in ["model1", "model2", "ma1_example"] {
            let (resolved, _) = ModelConfig::Preset(name.into()).resolve().unwrap();
            assert_eq!(resolved, name);
        }
        assert!(ModelConfig::Preset("nope".into()).resolve().is_err());
    }

    #[test]
    fn inline_model_resolves() {
        let text = r#"{
            "ar": [[[0.5, 0.0], [0.0, 0.5]]],
            "innovation": {"kind": "gaussian", "cov": [[1.0, 0.0], [0.0, 1.0]]}
        }"#;
        let cfg: VarmaConfig = serde_json::from_str(text).unwrap();
        let (name, spec) = ModelConfig::Inline(cfg).resolve().unwrap();
        assert_eq!(name, "inline");
        assert_eq!(spec.ar.len(), 1);
        assert_eq!(spec.burn_in, DEFAULT_BURN_IN);
    }

    #[test]
    fn smoke_experiment_produces_finite_rows() {
        let table = run_experiment(&smoke_config()).unwrap();
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert!(row.mean.is_finite());
            assert!(row.std.is_finite());
            assert!(row.mse_x10.is_finite());
            assert_eq!(row.skips, 0);
        }
        assert!(!table.flagged);
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = smoke_config();
        let a = run_experiment(&cfg).unwrap().to_csv();
        let b = run_experiment(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn mse_recomputes_from_stored_estimates() {
        let table = run_experiment(&smoke_config()).unwrap();
        for row in &table.rows {
            let recomputed = REPORT_SCALE
                * row
                    .estimates
                    .iter()
                    .map(|v| (v - row.exact).powi(2))
                    .sum::<f64>()
                / row.estimates.len() as f64;
            assert!((recomputed - row.mse_x10).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_model_reference_sd_is_zero() {
        let model = VarmaSpec {
            ar: vec![],
            ma: vec![],
            innovation: InnovationSpec::Gaussian {
                cov: DMatrix::identity(2, 2),
            },
            burn_in: 0,
        };
        // statistic of an i.i.d. model has positive sd; a truly degenerate
        // statistic (component against itself at lag 0) is constant at 1
        let stat = CrossCorrelationSpec { lag: 0, r: 0, s: 0 };
        let (sd, scaled) = monte_carlo_exact(&model, 32, stat, 200, RngSeed(1)).unwrap();
        assert!(sd.abs() < 1e-12);
        assert_eq!(scaled, REPORT_SCALE * sd);
    }

    #[test]
    fn selftest_passes() {
        for result in run_selftest() {
            assert!(result.passed, "{}: {}", result.name, result.detail);
        }
    }
}
