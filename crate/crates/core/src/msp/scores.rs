use serde::{Deserialize, Serialize};

use super::{MspError, PerturbationRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStatus {
    Defined,
    /// The block was never masked, so no masked-side mean exists.
    NeverMasked,
    /// The block was masked in every iteration, so no unmasked-side mean exists.
    NeverUnmasked,
}

/// Importance of one block for one label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockScore {
    pub label: usize,
    pub block: usize,
    /// Mean delta with the block masked minus mean delta with it unmasked.
    pub score: Option<f64>,
    /// Mean delta over iterations where the block was masked.
    pub masked_mean: Option<f64>,
    pub masked_count: usize,
    pub unmasked_count: usize,
}

impl BlockScore {
    pub fn status(&self) -> ScoreStatus {
        if self.masked_count == 0 {
            ScoreStatus::NeverMasked
        } else if self.unmasked_count == 0 {
            ScoreStatus::NeverUnmasked
        } else {
            ScoreStatus::Defined
        }
    }
}

/// Joint importance of two blocks for one label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub label: usize,
    pub first: usize,
    pub second: usize,
    /// Mean delta with both blocks masked minus mean delta with neither masked.
    pub score: Option<f64>,
    /// `score - (score_first + score_second)`.
    pub interaction: Option<f64>,
    /// Token distance between the two block starts.
    pub distance: usize,
    pub co_masked: usize,
}

fn mean(sum: f64, count: usize) -> Option<f64> {
    (count > 0).then(|| sum / count as f64)
}

struct BlockSums {
    masked_count: Vec<usize>,
    /// `masked_sum[label][block]`
    masked_sum: Vec<Vec<f64>>,
    total: Vec<f64>,
}

fn block_sums(rec: &PerturbationRecord) -> BlockSums {
    let (nl, nb) = (rec.n_labels(), rec.n_blocks());
    let mut masked_count = vec![0usize; nb];
    let mut masked_sum = vec![vec![0.0; nb]; nl];
    let mut total = vec![0.0; nl];
    for (row, delta) in rec.masks.iter().zip(&rec.deltas) {
        for (l, d) in delta.iter().enumerate() {
            total[l] += d;
        }
        for b in row.ones() {
            masked_count[b] += 1;
            for (l, d) in delta.iter().enumerate() {
                masked_sum[l][b] += d;
            }
        }
    }
    BlockSums {
        masked_count,
        masked_sum,
        total,
    }
}

/// Scores every (label, block), label-major.
pub fn block_importance(rec: &PerturbationRecord) -> Vec<BlockScore> {
    let n = rec.iterations();
    let sums = block_sums(rec);
    let mut out = Vec::with_capacity(rec.n_labels() * rec.n_blocks());
    for label in 0..rec.n_labels() {
        for block in 0..rec.n_blocks() {
            let mc = sums.masked_count[block];
            let uc = n - mc;
            let ms = sums.masked_sum[label][block];
            let masked_mean = mean(ms, mc);
            let unmasked_mean = mean(sums.total[label] - ms, uc);
            let score = masked_mean.zip(unmasked_mean).map(|(m, u)| m - u);
            out.push(BlockScore {
                label,
                block,
                score,
                masked_mean,
                masked_count: mc,
                unmasked_count: uc,
            });
        }
    }
    out
}

fn pair_slot(i: usize, j: usize, nb: usize) -> usize {
    debug_assert!(i < j && j < nb);
    i * (2 * nb - i - 1) / 2 + (j - i - 1)
}

/// Scores every (label, i < j) pair from the same record.
///
/// Requires the record's expected co-mask count `N * P^2` to reach
/// `min_co_mask`. Pairs that were never masked together (or never both
/// unmasked) get `None` scores.
pub fn pair_importance(
    rec: &PerturbationRecord,
    min_co_mask: f64,
) -> Result<Vec<PairScore>, MspError> {
    let n = rec.iterations();
    let p = rec.config.mask_probability;
    let expected = n as f64 * p * p;
    if expected + 1e-9 < min_co_mask {
        return Err(MspError::InsufficientCoMasking {
            expected,
            required: min_co_mask,
        });
    }
    let (nl, nb) = (rec.n_labels(), rec.n_blocks());
    let n_pairs = nb * nb.saturating_sub(1) / 2;
    let sums = block_sums(rec);
    let singles = block_importance(rec);
    let mut both_count = vec![0usize; n_pairs];
    let mut both_sum = vec![vec![0.0; n_pairs]; nl];
    let mut masked = Vec::new();
    for (row, delta) in rec.masks.iter().zip(&rec.deltas) {
        masked.clear();
        masked.extend(row.ones());
        for (a, &i) in masked.iter().enumerate() {
            for &j in &masked[a + 1..] {
                let slot = pair_slot(i, j, nb);
                both_count[slot] += 1;
                for (l, d) in delta.iter().enumerate() {
                    both_sum[l][slot] += d;
                }
            }
        }
    }
    let block_size = rec.config.block_size;
    let mut out = Vec::with_capacity(nl * n_pairs);
    for label in 0..nl {
        let single = &singles[label * nb..(label + 1) * nb];
        for i in 0..nb {
            for j in i + 1..nb {
                let slot = pair_slot(i, j, nb);
                let bc = both_count[slot];
                let bs = both_sum[label][slot];
                let (mi, mj) = (sums.masked_count[i], sums.masked_count[j]);
                let neither = n + bc - mi - mj;
                let neither_sum = sums.total[label] - sums.masked_sum[label][i]
                    - sums.masked_sum[label][j]
                    + bs;
                let score = mean(bs, bc)
                    .zip(mean(neither_sum, neither))
                    .map(|(b, e)| b - e);
                let interaction = match (score, single[i].score, single[j].score) {
                    (Some(s), Some(si), Some(sj)) => Some(s - (si + sj)),
                    _ => None,
                };
                out.push(PairScore {
                    label,
                    first: i,
                    second: j,
                    score,
                    interaction,
                    distance: (j - i) * block_size,
                    co_masked: bc,
                });
            }
        }
    }
    Ok(out)
}

/// Result of a top-K query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopK {
    pub blocks: Vec<usize>,
    /// False when fewer than K blocks had a defined score.
    pub complete: bool,
}

/// Highest-scoring blocks first; ties go to the lower block index and
/// undefined scores are skipped.
pub fn rank_blocks<I>(scores: I, k: usize) -> TopK
where
    I: IntoIterator<Item = (usize, Option<f64>)>,
{
    let mut defined: Vec<(usize, f64)> = scores
        .into_iter()
        .filter_map(|(b, s)| s.map(|s| (b, s)))
        .collect();
    defined.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let complete = defined.len() >= k;
    defined.truncate(k);
    TopK {
        blocks: defined.into_iter().map(|(b, _)| b).collect(),
        complete,
    }
}

pub fn top_k(scores: &[BlockScore], label: usize, k: usize) -> Result<TopK, MspError> {
    if k == 0 {
        return Err(MspError::InvalidConfig("K must be at least 1".into()));
    }
    Ok(rank_blocks(
        scores
            .iter()
            .filter(|s| s.label == label)
            .map(|s| (s.block, s.score)),
        k,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_slots_are_dense() {
        let nb = 7;
        let mut seen = vec![false; nb * (nb - 1) / 2];
        for i in 0..nb {
            for j in i + 1..nb {
                let s = pair_slot(i, j, nb);
                assert!(!seen[s]);
                seen[s] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn rank_examples() {
        let r = rank_blocks([(0, Some(0.1)), (1, Some(0.9)), (2, Some(0.5))], 2);
        assert_eq!(r.blocks, [1, 2]);
        assert!(r.complete);
        let tie = rank_blocks([(4, Some(0.5)), (2, Some(0.5)), (0, Some(0.1))], 1);
        assert_eq!(tie.blocks, [2]);
        let short = rank_blocks([(0, None), (1, Some(0.2))], 3);
        assert_eq!(short.blocks, [1]);
        assert!(!short.complete);
    }
}
