use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mfhb::harness::{monte_carlo_exact, run_experiment, run_selftest, ExperimentConfig};
use mfhb::rng::{derive_substream, RngSeed};

/// Frequency-domain hybrid bootstrap experiment runner.
#[derive(Parser)]
#[command(name = "mfhb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the comparison grid of a config and write results.csv (plus a
    /// timings.csv sidecar).
    Run {
        /// Path to the experiment config (JSON).
        config: PathBuf,
        /// Output directory (defaults to the config's `output`, then ".").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compute the Monte Carlo reference standard deviations of a config's
    /// statistics and write exact.csv.
    Exact {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text).context("parsing config")?;
    if let Ok(seed) = std::env::var("MFHB_SEED") {
        cfg.seed = seed
            .parse::<u64>()
            .context("MFHB_SEED must be an unsigned integer")?;
        eprintln!("seed overridden by MFHB_SEED: {}", cfg.seed);
    }
    Ok(cfg)
}

fn output_dir(cli_out: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli_out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(config: PathBuf, out: Option<PathBuf>, threads: Option<usize>) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&config)?;
    let dir = output_dir(out, &cfg);
    std::fs::create_dir_all(&dir)?;
    let table = mfhb::with_threads(threads, || run_experiment(&cfg))?;

    let results_path = dir.join("results.csv");
    std::fs::write(&results_path, table.to_csv())?;
    std::fs::write(dir.join("timings.csv"), table.timings_csv())?;

    println!("model={} n={} rows={}", table.model, table.n, table.rows.len());
    for row in &table.rows {
        let h = row
            .bandwidth
            .map(|h| format!("h={h:.2} "))
            .unwrap_or_default();
        println!(
            "{:28} {:4} {}b={:<3} mean={:.3} std={:.3} mse_x10={:.3} (exact {:.3}, skips {})",
            row.statistic.label(),
            row.method,
            h,
            row.block_length,
            row.mean,
            row.std,
            row.mse_x10,
            row.exact,
            row.skips
        );
    }
    println!("results written to {}", results_path.display());
    if table.flagged {
        eprintln!("warning: at least one cell skipped more than 10% of repetitions");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn exact(config: PathBuf, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&config)?;
    let dir = output_dir(out, &cfg);
    std::fs::create_dir_all(&dir)?;
    let (model_name, model) = cfg.model.resolve()?;
    let mut csv = String::from("model,statistic,n,repetitions,raw_sd,sd_x10\n");
    for stat in &cfg.statistics {
        let seed = derive_substream(RngSeed(cfg.seed), &["exact", &model_name, &stat.label()]);
        let (raw, scaled) = monte_carlo_exact(&model, cfg.n, *stat, cfg.exact_repetitions, seed)?;
        println!(
            "{:28} raw_sd={:.6} sd_x10={:.4}",
            stat.label(),
            raw,
            scaled
        );
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{:.6}\n",
            model_name,
            stat.label(),
            cfg.n,
            cfg.exact_repetitions,
            raw,
            scaled
        ));
    }
    let path = dir.join("exact.csv");
    std::fs::write(&path, csv)?;
    println!("reference values written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn selftest() -> ExitCode {
    let results = run_selftest();
    let mut all_ok = true;
    for r in &results {
        println!(
            "{} {} ({})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        all_ok &= r.passed;
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, threads } => run(config, out, threads),
        Command::Exact { config, out } => exact(config, out),
        Command::Selftest => return selftest(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
