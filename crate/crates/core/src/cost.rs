//! Classifier-call cost model.
//!
//! Two counts are kept apart. The *model* count is the textbook big-O form:
//! `J/P` (single) and `J/P^2` (pairs) for masked sampling, `J*L` and `J*L^2`
//! for sampling-and-occlusion, where `J` is the sampling budget, `P` the mask
//! probability and `L` the document length in tokens. The *implementation*
//! count is what this crate's engines actually spend: one baseline call plus
//! `N` masked calls for masked sampling (pairs reuse the same pass), and
//! `2*J*ceil(L/B)` calls for sampling-and-occlusion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msp::ceil_count;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("mask probability {0} must lie strictly between 0 and 1")]
    MaskProbability(f64),
    #[error("{0} is required for this algorithm")]
    Missing(&'static str),
    #[error("count overflows u64")]
    Overflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostAlgorithm {
    Msp,
    Soc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arity {
    Single,
    Pair,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostQuery {
    pub algorithm: CostAlgorithm,
    pub arity: Arity,
    /// Expected masks per block (or pair) for MSP, rounds per block for SOC.
    pub budget: u64,
    pub mask_probability: Option<f64>,
    pub doc_tokens: Option<u64>,
}

impl CostQuery {
    pub fn msp(arity: Arity, budget: u64, mask_probability: f64) -> Self {
        Self {
            algorithm: CostAlgorithm::Msp,
            arity,
            budget,
            mask_probability: Some(mask_probability),
            doc_tokens: None,
        }
    }

    pub fn soc(arity: Arity, budget: u64, doc_tokens: u64) -> Self {
        Self {
            algorithm: CostAlgorithm::Soc,
            arity,
            budget,
            mask_probability: None,
            doc_tokens: Some(doc_tokens),
        }
    }

    fn probability(&self) -> Result<f64, CostError> {
        let p = self.mask_probability.ok_or(CostError::Missing("mask probability"))?;
        if !(p > 0.0 && p < 1.0) {
            return Err(CostError::MaskProbability(p));
        }
        Ok(p)
    }

    fn tokens(&self) -> Result<u64, CostError> {
        self.doc_tokens.ok_or(CostError::Missing("document length"))
    }
}

/// Big-O model count, rounded up.
pub fn expected_evaluations(q: &CostQuery) -> Result<u64, CostError> {
    let j = q.budget;
    match (q.algorithm, q.arity) {
        (CostAlgorithm::Msp, Arity::Single) => Ok(ceil_count(j as f64 / q.probability()?)),
        (CostAlgorithm::Msp, Arity::Pair) => {
            let p = q.probability()?;
            Ok(ceil_count(j as f64 / (p * p)))
        }
        (CostAlgorithm::Soc, Arity::Single) => j.checked_mul(q.tokens()?).ok_or(CostError::Overflow),
        (CostAlgorithm::Soc, Arity::Pair) => {
            let l = q.tokens()?;
            l.checked_mul(l)
                .and_then(|l2| l2.checked_mul(j))
                .ok_or(CostError::Overflow)
        }
    }
}

/// Exact number of classifier calls this crate performs for one document,
/// when the engine supports the query (`None` for SOC pairs, which are not
/// implemented).
pub fn implementation_evaluations(q: &CostQuery, block_size: u64) -> Result<Option<u64>, CostError> {
    match (q.algorithm, q.arity) {
        (CostAlgorithm::Msp, _) => Ok(Some(expected_evaluations(q)? + 1)),
        (CostAlgorithm::Soc, Arity::Single) => {
            let blocks = q.tokens()?.div_ceil(block_size.max(1));
            Ok(Some(2 * q.budget * blocks))
        }
        (CostAlgorithm::Soc, Arity::Pair) => Ok(None),
    }
}

/// One row of a cost table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub algorithm: CostAlgorithm,
    pub mask_probability: Option<f64>,
    pub doc_tokens: u64,
    pub model: u64,
    pub implementation: Option<u64>,
}

/// Rows for SOC then MSP at each probability, for every document length.
pub fn cost_table(
    arity: Arity,
    budget: u64,
    mask_probabilities: &[f64],
    doc_lengths: &[u64],
    block_size: u64,
) -> Result<Vec<CostRow>, CostError> {
    let mut rows = Vec::new();
    let mut queries: Vec<CostQuery> = doc_lengths
        .iter()
        .map(|&l| CostQuery::soc(arity, budget, l))
        .collect();
    for &p in mask_probabilities {
        for &l in doc_lengths {
            queries.push(CostQuery {
                doc_tokens: Some(l),
                ..CostQuery::msp(arity, budget, p)
            });
        }
    }
    for q in queries {
        rows.push(CostRow {
            algorithm: q.algorithm,
            mask_probability: q.mask_probability,
            doc_tokens: q.doc_tokens.unwrap_or_default(),
            model: expected_evaluations(&q)?,
            implementation: implementation_evaluations(&q, block_size)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_pair_table() {
        let msp = |p| expected_evaluations(&CostQuery::msp(Arity::Pair, 100, p)).unwrap();
        let soc = |l| expected_evaluations(&CostQuery::soc(Arity::Pair, 100, l)).unwrap();
        assert_eq!(msp(0.1), 10_000);
        assert_eq!(msp(0.5), 400);
        assert_eq!(soc(1_000), 100_000_000);
        assert_eq!(soc(10_000), 10_000_000_000);
    }

    #[test]
    fn single_counts() {
        assert_eq!(
            expected_evaluations(&CostQuery::msp(Arity::Single, 100, 0.1)).unwrap(),
            1000
        );
        assert_eq!(
            expected_evaluations(&CostQuery::soc(Arity::Single, 100, 1000)).unwrap(),
            100_000
        );
        let q = CostQuery::soc(Arity::Single, 100, 1005);
        assert_eq!(implementation_evaluations(&q, 10).unwrap(), Some(2 * 100 * 101));
        let q = CostQuery::msp(Arity::Single, 100, 0.1);
        assert_eq!(implementation_evaluations(&q, 10).unwrap(), Some(1001));
        let q = CostQuery::soc(Arity::Pair, 100, 1000);
        assert_eq!(implementation_evaluations(&q, 10).unwrap(), None);
    }

    #[test]
    fn msp_is_length_independent() {
        for arity in [Arity::Single, Arity::Pair] {
            let counts: Vec<u64> = [100, 1_000, 10_000]
                .iter()
                .map(|&l| {
                    let q = CostQuery {
                        doc_tokens: Some(l),
                        ..CostQuery::msp(arity, 100, 0.1)
                    };
                    expected_evaluations(&q).unwrap()
                })
                .collect();
            assert!(counts.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn soc_pair_over_single_is_length() {
        for l in [10u64, 1000, 12345] {
            let s = expected_evaluations(&CostQuery::soc(Arity::Single, 100, l)).unwrap();
            let p = expected_evaluations(&CostQuery::soc(Arity::Pair, 100, l)).unwrap();
            assert_eq!(p / s, l);
            assert_eq!(p % s, 0);
        }
    }

    #[test]
    fn rejects_bad_queries() {
        for p in [0.0, 1.0, 1.5] {
            assert_eq!(
                expected_evaluations(&CostQuery::msp(Arity::Single, 100, p)),
                Err(CostError::MaskProbability(p))
            );
        }
        let mut q = CostQuery::soc(Arity::Single, 1, 1);
        q.doc_tokens = None;
        assert!(expected_evaluations(&q).is_err());
        assert_eq!(
            expected_evaluations(&CostQuery::soc(Arity::Pair, 100, u64::MAX / 2)),
            Err(CostError::Overflow)
        );
    }

    #[test]
    fn table_shape() {
        let rows = cost_table(Arity::Pair, 100, &[0.1, 0.5], &[1000, 10_000], 10).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].model, 100_000_000);
        assert_eq!(rows[5].model, 400);
    }
}
