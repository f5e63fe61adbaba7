//! Bootstrap significance of block importances.
//!
//! The null hypothesis is that a block is no more important than a randomly
//! drawn set of masking iterations. In the default (corrected) mode the null
//! distribution is built from bootstrap means over all iterations' deltas
//! for the label, and compared with the block's masked-iteration mean:
//!
//! ```text
//! p = (#{null mean >= observed} + 1) / (iterations + 1)
//! ```
//!
//! The literal mode replays the printed procedure step for step: it
//! bootstraps the block's own masked deltas and counts how often their mean
//! exceeds the label's grand mean. It is kept for auditing; note that it
//! assigns large p-values to important blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::msp::PerturbationRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignificanceError {
    #[error("bootstrap iterations must be at least 100, got {0}")]
    TooFewIterations(usize),
    #[error("bootstrap sample size must be at least 1")]
    ZeroSampleSize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignificanceMode {
    #[default]
    Corrected,
    Literal,
}

impl std::str::FromStr for SignificanceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "corrected" => Ok(Self::Corrected),
            "literal" => Ok(Self::Literal),
            other => Err(format!("unknown significance mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Draws per bootstrap mean; `None` uses the tested block's masked count.
    pub sample_size: Option<usize>,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            sample_size: None,
            iterations: 1000,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), SignificanceError> {
        if self.iterations < 100 {
            return Err(SignificanceError::TooFewIterations(self.iterations));
        }
        if self.sample_size == Some(0) {
            return Err(SignificanceError::ZeroSampleSize);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub label: usize,
    pub block: usize,
    /// Masked-iteration mean (corrected) or the label's grand mean (literal).
    /// `None` when the block was never masked.
    pub observed: Option<f64>,
    pub p_value: Option<f64>,
    pub mode: SignificanceMode,
    pub masked_count: usize,
}

fn bootstrap_mean(pool: &[f64], m: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut sum = 0.0;
    for _ in 0..m {
        sum += pool[rng.random_range(0..pool.len())];
    }
    sum / m as f64
}

/// Corrected-mode p-value of `observed` against bootstrap means of `m`
/// draws from `pool`. Ties count toward the null.
pub fn bootstrap_p_value(
    pool: &[f64],
    observed: f64,
    m: usize,
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let at_least = (0..iterations)
        .filter(|_| bootstrap_mean(pool, m, rng) >= observed)
        .count();
    (at_least + 1) as f64 / (iterations + 1) as f64
}

fn cell_rng(seed: u64, label: usize, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((label as u64) << 32) | block as u64);
    rng
}

pub fn p_values(
    rec: &PerturbationRecord,
    cfg: &BootstrapConfig,
    mode: SignificanceMode,
) -> Result<Vec<SignificanceResult>, SignificanceError> {
    p_values_with(rec, cfg, mode, Execution::default())
}

/// One result per (label, block), label-major. Each cell draws from its own
/// generator stream, so results do not depend on `exec`.
pub fn p_values_with(
    rec: &PerturbationRecord,
    cfg: &BootstrapConfig,
    mode: SignificanceMode,
    exec: Execution,
) -> Result<Vec<SignificanceResult>, SignificanceError> {
    cfg.validate()?;
    let nb = rec.n_blocks();
    let columns: Vec<Vec<f64>> = (0..rec.n_labels()).map(|l| rec.label_deltas(l)).collect();
    let masked_rows: Vec<Vec<usize>> = (0..nb)
        .map(|b| {
            (0..rec.iterations())
                .filter(|&n| rec.masks.is_masked(n, b))
                .collect()
        })
        .collect();

    Ok(map_indexed(exec, rec.n_labels() * nb, |cell| {
        let (label, block) = (cell / nb, cell % nb);
        let column = &columns[label];
        let rows = &masked_rows[block];
        let masked_count = rows.len();
        let undefined = SignificanceResult {
            label,
            block,
            observed: None,
            p_value: None,
            mode,
            masked_count,
        };
        if masked_count == 0 {
            return undefined;
        }
        let m = cfg.sample_size.unwrap_or(masked_count);
        let mut rng = cell_rng(cfg.seed, label, block);
        let masked: Vec<f64> = rows.iter().map(|&n| column[n]).collect();
        match mode {
            SignificanceMode::Corrected => {
                let observed = masked.iter().sum::<f64>() / masked_count as f64;
                let p = bootstrap_p_value(column, observed, m, cfg.iterations, &mut rng);
                SignificanceResult {
                    observed: Some(observed),
                    p_value: Some(p),
                    ..undefined
                }
            }
            SignificanceMode::Literal => {
                let grand = column.iter().sum::<f64>() / column.len() as f64;
                let above = (0..cfg.iterations)
                    .filter(|_| bootstrap_mean(&masked, m, &mut rng) > grand)
                    .count();
                SignificanceResult {
                    observed: Some(grand),
                    p_value: Some(above as f64 / cfg.iterations as f64),
                    ..undefined
                }
            }
        }
    }))
}
