//! Masked sampling: Monte Carlo block masking against a black-box classifier.
//!
//! Every iteration masks each block independently with probability `P`,
//! evaluates the masked document, and records the per-label drop from the
//! unmasked baseline. Block and pair importances are then read off the
//! recorded deltas without touching the classifier again.

mod mask;
mod scores;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ClassifierBackend};
use crate::exec::{try_map_indexed, Execution};
use crate::text::{block_count, segment_len, Document, SegmentationConfig};

pub use mask::{sample_mask_row, MaskMatrix, MaskRow};
pub use scores::{
    block_importance, pair_importance, rank_blocks, top_k, BlockScore, PairScore, ScoreStatus,
    TopK,
};

/// Default minimum expected number of iterations in which a pair of blocks
/// is masked together before pair scores are computed.
pub const DEFAULT_MIN_CO_MASK: f64 = 30.0;

#[derive(Debug, Error)]
pub enum MspError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("document {0:?} has no tokens")]
    EmptyDocument(String),
    #[error("backend serves no labels")]
    NoLabels,
    #[error("backend failed after {completed} completed iterations: {source}")]
    Backend {
        completed: usize,
        #[source]
        source: BackendError,
    },
    #[error(
        "pair analysis needs N*P^2 >= {required} (expected co-masks), got {expected:.3}; raise iterations"
    )]
    InsufficientCoMasking { expected: f64, required: f64 },
}

/// How many masked evaluations to run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Iterations(usize),
    /// Expected number of times each block (single mode) or each pair of
    /// blocks (pairs mode) is masked.
    ExpectedMasks(u64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Single,
    Pairs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MspConfig {
    pub block_size: usize,
    pub mask_probability: f64,
    pub budget: Budget,
    pub seed: u64,
    pub mode: SamplingMode,
    pub min_co_mask: f64,
}

impl Default for MspConfig {
    fn default() -> Self {
        Self {
            block_size: 10,
            mask_probability: 0.1,
            budget: Budget::ExpectedMasks(100),
            seed: 0,
            mode: SamplingMode::Single,
            min_co_mask: DEFAULT_MIN_CO_MASK,
        }
    }
}

/// Rounds a positive ratio up to an integer, treating values within
/// floating-point noise of an integer as that integer (`100 / 0.1` is 1000,
/// not 1001).
pub(crate) fn ceil_count(x: f64) -> u64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

impl MspConfig {
    pub fn validate(&self) -> Result<(), MspError> {
        if self.block_size == 0 {
            return Err(MspError::InvalidConfig("block size must be at least 1".into()));
        }
        let p = self.mask_probability;
        if !(p > 0.0 && p < 1.0) {
            return Err(MspError::InvalidConfig(format!(
                "mask probability {p} must lie strictly between 0 and 1"
            )));
        }
        match self.budget {
            Budget::Iterations(0) | Budget::ExpectedMasks(0) => {
                return Err(MspError::InvalidConfig("budget must be positive".into()))
            }
            _ => {}
        }
        if self.mode == SamplingMode::Pairs {
            let expected = self.iterations() as f64 * p * p;
            if expected + 1e-9 < self.min_co_mask {
                return Err(MspError::InsufficientCoMasking {
                    expected,
                    required: self.min_co_mask,
                });
            }
        }
        Ok(())
    }

    /// Number of masked iterations `N`.
    pub fn iterations(&self) -> usize {
        let p = self.mask_probability;
        match (self.budget, self.mode) {
            (Budget::Iterations(n), _) => n,
            (Budget::ExpectedMasks(e), SamplingMode::Single) => ceil_count(e as f64 / p) as usize,
            (Budget::ExpectedMasks(e), SamplingMode::Pairs) => {
                ceil_count(e as f64 / (p * p)) as usize
            }
        }
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig::new(self.block_size).expect("validated block size")
    }
}

/// Dispatch knobs that do not affect results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecOptions {
    pub execution: Execution,
    /// Overrides the backend's preferred batch size.
    pub batch_size: Option<usize>,
}

/// Raw output of a sampling run: baseline, per-iteration deltas and masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub document_id: String,
    pub labels: Vec<String>,
    pub n_tokens: usize,
    pub config: MspConfig,
    pub baseline: Vec<f64>,
    /// `deltas[n][l]` = baseline[l] minus the label-l probability in iteration n.
    pub deltas: Vec<Vec<f64>>,
    pub masks: MaskMatrix,
}

impl PerturbationRecord {
    pub fn iterations(&self) -> usize {
        self.deltas.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.masks.n_blocks()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    /// Delta column for one label.
    pub fn label_deltas(&self, label: usize) -> Vec<f64> {
        self.deltas.iter().map(|row| row[label]).collect()
    }

    /// Structural consistency check, used after deserializing.
    pub fn validate(&self) -> Result<(), MspError> {
        let bad = |m: String| Err(MspError::InvalidConfig(m));
        if self.baseline.len() != self.labels.len() {
            return bad("baseline length differs from label count".into());
        }
        if self.masks.rows() != self.deltas.len() {
            return bad("mask rows differ from delta rows".into());
        }
        if self.masks.n_blocks() != block_count(self.n_tokens, self.config.block_size.max(1)) {
            return bad("mask width differs from block count".into());
        }
        if let Some(row) = self.deltas.iter().find(|r| r.len() != self.labels.len()) {
            return bad(format!("delta row of length {}", row.len()));
        }
        Ok(())
    }
}

/// Checks a backend's answer against the contract.
pub(crate) fn check_rows(
    rows: &[Vec<f64>],
    expected_rows: usize,
    n_labels: usize,
) -> Result<(), BackendError> {
    if rows.len() != expected_rows {
        return Err(BackendError::Malformed {
            url: "<backend>".into(),
            message: format!("expected {expected_rows} rows, got {}", rows.len()),
        });
    }
    for row in rows {
        if row.len() != n_labels {
            return Err(BackendError::LabelMismatch(format!(
                "{n_labels} labels but a row of {}",
                row.len()
            )));
        }
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(BackendError::Malformed {
                url: "<backend>".into(),
                message: "probability outside [0, 1]".into(),
            });
        }
    }
    Ok(())
}

pub fn run_msp<B: ClassifierBackend + ?Sized>(
    doc: &Document,
    backend: &B,
    cfg: &MspConfig,
) -> Result<PerturbationRecord, MspError> {
    run_msp_with(doc, backend, cfg, ExecOptions::default())
}

/// Runs one baseline evaluation followed by exactly `N` masked evaluations.
///
/// The mask pattern of iteration `n` depends only on `(seed, n)`, and results
/// land in slots indexed by `n`, so the record is bit-identical under any
/// dispatch strategy.
pub fn run_msp_with<B: ClassifierBackend + ?Sized>(
    doc: &Document,
    backend: &B,
    cfg: &MspConfig,
    opts: ExecOptions,
) -> Result<PerturbationRecord, MspError> {
    cfg.validate()?;
    if doc.is_empty() {
        return Err(MspError::EmptyDocument(doc.id().to_owned()));
    }
    let labels = backend.labels().to_vec();
    if labels.is_empty() {
        return Err(MspError::NoLabels);
    }
    let n_labels = labels.len();
    let blocks = segment_len(doc.len(), cfg.segmentation());
    let n_blocks = blocks.len();
    let n_iter = cfg.iterations();
    let tokens: Vec<&str> = doc.tokens().iter().map(String::as_str).collect();
    let mask_token = backend.mask_token();

    let baseline = backend
        .predict_batch(std::slice::from_ref(&tokens))
        .and_then(|rows| check_rows(&rows, 1, n_labels).map(|_| rows))
        .map_err(|source| MspError::Backend {
            completed: 0,
            source,
        })?
        .remove(0);

    let batch_size = opts
        .batch_size
        .unwrap_or_else(|| backend.preferred_batch_size())
        .max(1);
    let n_batches = n_iter.div_ceil(batch_size);
    let exec = if backend.is_serial() {
        Execution::Sequential
    } else {
        opts.execution
    };

    let batches = try_map_indexed(exec, n_batches, |b| {
        let lo = b * batch_size;
        let hi = (lo + batch_size).min(n_iter);
        let rows: Vec<MaskRow> = (lo..hi)
            .map(|n| sample_mask_row(cfg.seed, n as u64, n_blocks, cfg.mask_probability))
            .collect();
        let inputs: Vec<Vec<&str>> = rows
            .iter()
            .map(|row| {
                let mut seq = tokens.clone();
                for blk in row.ones() {
                    seq[blocks[blk].span()].fill(mask_token);
                }
                seq
            })
            .collect();
        let probs = backend.predict_batch(&inputs)?;
        check_rows(&probs, inputs.len(), n_labels)?;
        let deltas: Vec<Vec<f64>> = probs
            .iter()
            .map(|p| baseline.iter().zip(p).map(|(b, q)| b - q).collect())
            .collect();
        Ok::<_, BackendError>((rows, deltas))
    })
    .map_err(|(b, source)| MspError::Backend {
        completed: b * batch_size,
        source,
    })?;

    let mut masks = MaskMatrix::new(n_blocks);
    let mut deltas = Vec::with_capacity(n_iter);
    for (rows, d) in batches {
        for row in rows {
            masks.push(row);
        }
        deltas.extend(d);
    }

    Ok(PerturbationRecord {
        document_id: doc.id().to_owned(),
        labels,
        n_tokens: doc.len(),
        config: cfg.clone(),
        baseline,
        deltas,
        masks,
    })
}

/// Uniform sample of `k` distinct block indices, seeded.
pub fn random_blocks(n_blocks: usize, k: usize, seed: u64) -> Result<Vec<usize>, MspError> {
    if k > n_blocks {
        return Err(MspError::InvalidConfig(format!(
            "cannot pick {k} blocks from {n_blocks}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, n_blocks, k).into_vec())
}
