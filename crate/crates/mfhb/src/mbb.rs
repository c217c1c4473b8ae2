//! Moving block bootstrap baseline: overlapping blocks of consecutive rows,
//! uniform start indices, concatenated and truncated to the original length.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{MfhbError, Result};
use crate::models::TimeSeries;
use crate::parallel::map_indexed;
use crate::rng::{stream, RngSeed};
use crate::spectral::sample_cross_correlation;

#[derive(Clone, Copy, Debug)]
pub struct MbbConfig {
    pub block_length: usize,
    pub replicates: usize,
    pub seed: RngSeed,
}

impl MbbConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.block_length == 0 || self.block_length > n {
            return Err(MfhbError::InvalidBlockLength {
                block: self.block_length,
                n,
            });
        }
        if self.replicates < 2 {
            return Err(MfhbError::Config("need at least two bootstrap replicates".into()));
        }
        Ok(())
    }
}

/// One pseudo-series: `ceil(n / b)` blocks of `b` consecutive rows with
/// uniform starts, truncated to `n` rows.
pub fn mbb_resample(x: &TimeSeries, block_length: usize, rng: &mut ChaCha12Rng) -> Result<TimeSeries> {
    let n = x.len();
    if block_length == 0 || block_length > n {
        return Err(MfhbError::InvalidBlockLength {
            block: block_length,
            n,
        });
    }
    let m = x.dim();
    let blocks = n.div_ceil(block_length);
    let max_start = n - block_length;
    let mut values = DMatrix::zeros(n, m);
    let mut row = 0usize;
    for _ in 0..blocks {
        let start = rng.random_range(0..=max_start);
        for offset in 0..block_length {
            if row == n {
                break;
            }
            for c in 0..m {
                values[(row, c)] = x.value(start + offset, c);
            }
            row += 1;
        }
    }
    TimeSeries::new(values)
}

/// Bootstrap estimate of the standard deviation of the sample
/// cross-correlation at a signed lag: the empirical sd of the statistic over
/// pseudo-series, each re-centered by its own mean. Degenerate pseudo-series
/// are skipped; more than 10% skips is an error.
///
/// Returns the sd and the skip count.
pub fn mbb_statistic_sd(
    x: &TimeSeries,
    lag: i64,
    row: usize,
    col: usize,
    cfg: &MbbConfig,
) -> Result<(f64, usize)> {
    cfg.validate(x.len())?;
    let estimates: Vec<Option<f64>> = map_indexed(cfg.replicates, |i| {
        let mut rng = stream(cfg.seed.child_indexed("mbb-replicate", i as u64));
        let pseudo = mbb_resample(x, cfg.block_length, &mut rng).ok()?;
        sample_cross_correlation(&pseudo.centered(), lag, row, col).ok()
    });
    let kept: Vec<f64> = estimates.iter().filter_map(|e| *e).collect();
    let skipped = cfg.replicates - kept.len();
    if skipped * 10 > cfg.replicates {
        return Err(MfhbError::TooManySkips {
            skipped,
            total: cfg.replicates,
        });
    }
    if kept.len() < 2 {
        return Err(MfhbError::TooManySkips {
            skipped,
            total: cfg.replicates,
        });
    }
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let ss = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Ok(((ss / (kept.len() - 1) as f64).sqrt(), skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{generate, preset_model1};

    fn series(n: usize, seed: u64) -> TimeSeries {
        generate(&preset_model1(), n, RngSeed(seed)).unwrap()
    }

    #[test]
    fn full_block_reproduces_the_series() {
        let x = series(40, 1);
        let y = mbb_resample(&x, 40, &mut stream(RngSeed(2))).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn unit_blocks_draw_rows_from_the_series() {
        let x = series(25, 3);
        let y = mbb_resample(&x, 1, &mut stream(RngSeed(4))).unwrap();
        for t in 0..y.len() {
            let found = (0..x.len()).any(|u| (0..x.dim()).all(|c| y.value(t, c) == x.value(u, c)));
            assert!(found, "row {t} not present in the source series");
        }
    }

    #[test]
    fn every_output_row_occurs_in_the_input() {
        let x = series(30, 5);
        for b in [3usize, 7, 12] {
            let y = mbb_resample(&x, b, &mut stream(RngSeed(b as u64))).unwrap();
            for t in 0..y.len() {
                let found =
                    (0..x.len()).any(|u| (0..x.dim()).all(|c| y.value(t, c) == x.value(u, c)));
                assert!(found);
            }
        }
    }

    #[test]
    fn resampling_is_deterministic_per_seed() {
        let x = series(30, 6);
        let a = mbb_resample(&x, 5, &mut stream(RngSeed(9))).unwrap();
        let b = mbb_resample(&x, 5, &mut stream(RngSeed(9))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_input_errors_out() {
        let x = TimeSeries::new(DMatrix::from_element(20, 2, 1.5)).unwrap();
        let cfg = MbbConfig {
            block_length: 4,
            replicates: 50,
            seed: RngSeed(7),
        };
        assert!(matches!(
            mbb_statistic_sd(&x, 0, 0, 1, &cfg),
            Err(MfhbError::TooManySkips { .. })
        ));
    }

    #[test]
    fn full_block_length_gives_zero_sd() {
        let x = series(40, 8);
        let cfg = MbbConfig {
            block_length: 40,
            replicates: 20,
            seed: RngSeed(10),
        };
        let (sd, skipped) = mbb_statistic_sd(&x, 0, 0, 1, &cfg).unwrap();
        assert!(sd < 1e-12, "sd {sd:e}");
        assert_eq!(skipped, 0);
    }
}
