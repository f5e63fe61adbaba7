//! Sampling-and-occlusion baseline.
//!
//! Each block is scored on its own: for every round the context around the
//! block (up to `radius` tokens per side) is resampled, and the document is
//! evaluated once with the block intact and once with it masked. The score is
//! the mean drop over rounds. This costs `2 * J * blocks` classifier calls,
//! which grows with document length.

use std::ops::Range;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ClassifierBackend};
use crate::exec::{try_map_indexed, Execution};
use crate::msp::{check_rows, BlockScore};
use crate::text::{segment_len, Document, SegmentationConfig};

#[derive(Debug, Error)]
pub enum SocError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("document {0:?} has no tokens")]
    EmptyDocument(String),
    #[error("backend serves no labels")]
    NoLabels,
    #[error("sampler vocabulary is empty")]
    EmptyVocabulary,
    #[error("backend failed after {completed_blocks} completed blocks: {source}")]
    Backend {
        completed_blocks: usize,
        #[source]
        source: BackendError,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocConfig {
    pub block_size: usize,
    /// Sampling rounds per block (`J`).
    pub samples_per_block: usize,
    /// Context radius in tokens on each side of the block.
    pub radius: usize,
    pub seed: u64,
}

impl Default for SocConfig {
    fn default() -> Self {
        Self {
            block_size: 10,
            samples_per_block: 100,
            radius: 10,
            seed: 0,
        }
    }
}

impl SocConfig {
    pub fn validate(&self) -> Result<(), SocError> {
        if self.block_size == 0 {
            return Err(SocError::InvalidConfig("block size must be at least 1".into()));
        }
        if self.samples_per_block == 0 {
            return Err(SocError::InvalidConfig("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Produces replacement tokens for a context span.
///
/// Must return exactly `span.len()` tokens and be deterministic in `key`.
pub trait ContextSampler: Send + Sync {
    fn sample<'a>(&'a self, tokens: &'a [String], span: Range<usize>, key: u64) -> Vec<&'a str>;
}

/// Leaves the context unchanged, reducing the method to plain occlusion.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentitySampler;

impl ContextSampler for IdentitySampler {
    fn sample<'a>(&'a self, tokens: &'a [String], span: Range<usize>, _key: u64) -> Vec<&'a str> {
        tokens[span].iter().map(String::as_str).collect()
    }
}

fn keyed_rng(seed: u64, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

/// Draws replacement tokens uniformly from a fixed vocabulary.
#[derive(Clone, Debug)]
pub struct UniformSampler {
    vocabulary: Vec<String>,
    seed: u64,
}

pub fn uniform_sampler(vocabulary: Vec<String>, seed: u64) -> Result<UniformSampler, SocError> {
    if vocabulary.is_empty() {
        return Err(SocError::EmptyVocabulary);
    }
    Ok(UniformSampler { vocabulary, seed })
}

impl ContextSampler for UniformSampler {
    fn sample<'a>(&'a self, _tokens: &'a [String], span: Range<usize>, key: u64) -> Vec<&'a str> {
        let mut rng = keyed_rng(self.seed, key);
        span.map(|_| self.vocabulary[rng.random_range(0..self.vocabulary.len())].as_str())
            .collect()
    }
}

/// Draws replacement tokens in proportion to their corpus frequency.
#[derive(Clone, Debug)]
pub struct UnigramSampler {
    vocabulary: Vec<String>,
    weights: WeightedIndex<u64>,
    seed: u64,
}

impl UnigramSampler {
    /// Builds the unigram distribution over every token of `docs`.
    pub fn from_corpus<'d, I>(docs: I, seed: u64) -> Result<Self, SocError>
    where
        I: IntoIterator<Item = &'d Document>,
    {
        let mut counts: std::collections::BTreeMap<&str, u64> = Default::default();
        for doc in docs {
            for t in doc.tokens() {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        Self::from_counts(counts.into_iter().map(|(t, c)| (t.to_owned(), c)), seed)
    }

    pub fn from_counts<I>(counts: I, seed: u64) -> Result<Self, SocError>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let (vocabulary, freq): (Vec<String>, Vec<u64>) =
            counts.into_iter().filter(|(_, c)| *c > 0).unzip();
        if vocabulary.is_empty() {
            return Err(SocError::EmptyVocabulary);
        }
        let weights = WeightedIndex::new(freq).map_err(|_| SocError::EmptyVocabulary)?;
        Ok(Self {
            vocabulary,
            weights,
            seed,
        })
    }
}

impl ContextSampler for UnigramSampler {
    fn sample<'a>(&'a self, _tokens: &'a [String], span: Range<usize>, key: u64) -> Vec<&'a str> {
        let mut rng = keyed_rng(self.seed, key);
        span.map(|_| self.vocabulary[self.weights.sample(&mut rng)].as_str())
            .collect()
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn sample_key(seed: u64, block: usize, round: usize, side: u64) -> u64 {
    splitmix(seed ^ splitmix(((block as u64) << 24) ^ ((round as u64) << 1) ^ side))
}

pub fn run_soc<B, S>(
    doc: &Document,
    backend: &B,
    sampler: &S,
    cfg: &SocConfig,
) -> Result<Vec<BlockScore>, SocError>
where
    B: ClassifierBackend + ?Sized,
    S: ContextSampler + ?Sized,
{
    run_soc_with(doc, backend, sampler, cfg, Execution::default())
}

/// Scores every (label, block), label-major. `masked_count` and
/// `unmasked_count` both hold the number of rounds.
pub fn run_soc_with<B, S>(
    doc: &Document,
    backend: &B,
    sampler: &S,
    cfg: &SocConfig,
    exec: Execution,
) -> Result<Vec<BlockScore>, SocError>
where
    B: ClassifierBackend + ?Sized,
    S: ContextSampler + ?Sized,
{
    cfg.validate()?;
    if doc.is_empty() {
        return Err(SocError::EmptyDocument(doc.id().to_owned()));
    }
    let n_labels = backend.labels().len();
    if n_labels == 0 {
        return Err(SocError::NoLabels);
    }
    let seg = SegmentationConfig::new(cfg.block_size).expect("validated block size");
    let blocks = segment_len(doc.len(), seg);
    let tokens = doc.tokens();
    let base: Vec<&str> = tokens.iter().map(String::as_str).collect();
    let mask_token = backend.mask_token();
    let rounds = cfg.samples_per_block;
    let batch_size = backend.preferred_batch_size().max(1);
    let exec = if backend.is_serial() {
        Execution::Sequential
    } else {
        exec
    };

    let per_block = try_map_indexed(exec, blocks.len(), |bi| {
        let block = blocks[bi];
        let left = block.start.saturating_sub(cfg.radius)..block.start;
        let right = block.end()..(block.end() + cfg.radius).min(tokens.len());
        let mut inputs: Vec<Vec<&str>> = Vec::with_capacity(2 * rounds);
        for round in 0..rounds {
            let mut seq = base.clone();
            let l = sampler.sample(tokens, left.clone(), sample_key(cfg.seed, bi, round, 0));
            let r = sampler.sample(tokens, right.clone(), sample_key(cfg.seed, bi, round, 1));
            assert_eq!(l.len(), left.len(), "sampler returned wrong span length");
            assert_eq!(r.len(), right.len(), "sampler returned wrong span length");
            seq[left.clone()].copy_from_slice(&l);
            seq[right.clone()].copy_from_slice(&r);
            let mut masked = seq.clone();
            masked[block.span()].fill(mask_token);
            inputs.push(seq);
            inputs.push(masked);
        }
        let mut probs = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(batch_size) {
            let rows = backend.predict_batch(chunk)?;
            check_rows(&rows, chunk.len(), n_labels)?;
            probs.extend(rows);
        }
        let mut sums = vec![0.0; n_labels];
        for pair in probs.chunks(2) {
            for (l, s) in sums.iter_mut().enumerate() {
                *s += pair[0][l] - pair[1][l];
            }
        }
        Ok::<_, BackendError>(sums)
    })
    .map_err(|(completed_blocks, source)| SocError::Backend {
        completed_blocks,
        source,
    })?;

    let mut out = Vec::with_capacity(n_labels * blocks.len());
    for label in 0..n_labels {
        for (block, sums) in per_block.iter().enumerate() {
            out.push(BlockScore {
                label,
                block,
                score: Some(sums[label] / rounds as f64),
                masked_mean: None,
                masked_count: rounds,
                unmasked_count: rounds,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{logistic, ConstantBackend, CountingBackend, KeywordLogitModel};
    use crate::msp::top_k;
    use proptest::prelude::*;

    fn keyword_doc(n_blocks: usize, keyword_block: usize) -> Document {
        let mut tokens: Vec<String> = (0..n_blocks * 10).map(|i| format!("w{i}")).collect();
        tokens[keyword_block * 10 + 3] = "amiodarone".into();
        Document::new("d", tokens).unwrap()
    }

    fn cfg(rounds: usize) -> SocConfig {
        SocConfig {
            samples_per_block: rounds,
            ..Default::default()
        }
    }

    #[test]
    fn identity_sampler_closed_form() {
        let doc = keyword_doc(6, 4);
        let model = KeywordLogitModel::single_keyword("afib", -2.0, "amiodarone", 4.0);
        let scores = run_soc(&doc, &model, &IdentitySampler, &cfg(5)).unwrap();
        let expected = logistic(2.0) - logistic(-2.0);
        for s in &scores {
            let want = if s.block == 4 { expected } else { 0.0 };
            assert!((s.score.unwrap() - want).abs() < 1e-15, "{s:?}");
        }
        assert_eq!(top_k(&scores, 0, 1).unwrap().blocks, [4]);
    }

    #[test]
    fn call_count_formula() {
        let backend = CountingBackend::new(ConstantBackend::new(vec!["a".into()], 0.2).unwrap());
        let doc = keyword_doc(10, 0);
        let scores = run_soc(&doc, &backend, &IdentitySampler, &cfg(100)).unwrap();
        assert_eq!(backend.calls(), 2000);
        assert!(scores.iter().all(|s| s.score == Some(0.0)));
        backend.reset();
        let partial = Document::new("p", (0..25).map(|i| format!("t{i}")).collect()).unwrap();
        run_soc(&partial, &backend, &IdentitySampler, &cfg(7)).unwrap();
        assert_eq!(backend.calls(), 2 * 7 * 3);
    }

    #[test]
    fn uniform_sampler_examples() {
        assert!(matches!(
            uniform_sampler(vec![], 0),
            Err(SocError::EmptyVocabulary)
        ));
        let one = uniform_sampler(vec!["x".into()], 3).unwrap();
        let toks: Vec<String> = (0..8).map(|i| i.to_string()).collect();
        assert_eq!(one.sample(&toks, 2..6, 99), vec!["x"; 4]);
        let many = uniform_sampler((0..50).map(|i| format!("v{i}")).collect(), 3).unwrap();
        assert_eq!(many.sample(&toks, 0..8, 5), many.sample(&toks, 0..8, 5));
        assert_ne!(many.sample(&toks, 0..8, 5), many.sample(&toks, 0..8, 6));
    }

    #[test]
    fn unigram_sampler_matches_frequencies() {
        // frequencies 1:2:7 over 10^5 draws
        let sampler = UnigramSampler::from_counts(
            [("a".to_string(), 1), ("b".to_string(), 2), ("c".to_string(), 7)],
            17,
        )
        .unwrap();
        let toks: Vec<String> = Vec::new();
        let mut counts = std::collections::HashMap::new();
        let per_key = 1000;
        for key in 0..100 {
            for t in sampler.sample(&toks, 0..per_key, key) {
                *counts.entry(t).or_insert(0usize) += 1;
            }
        }
        let n = 100_000f64;
        for (tok, p) in [("a", 0.1), ("b", 0.2), ("c", 0.7)] {
            let sigma = (n * p * (1.0 - p)).sqrt();
            let got = counts[tok] as f64;
            assert!((got - n * p).abs() <= 3.0 * sigma, "{tok}: {got}");
        }
        let docs = [Document::from_text("x", "a b b").unwrap()];
        assert!(UnigramSampler::from_corpus(&docs, 0).is_ok());
        assert!(UnigramSampler::from_corpus(&[], 0).is_err());
    }

    #[test]
    fn sampled_context_is_deterministic() {
        let docs = [keyword_doc(8, 2)];
        let sampler = UnigramSampler::from_corpus(&docs, 4).unwrap();
        let model = KeywordLogitModel::single_keyword("afib", -2.0, "amiodarone", 4.0);
        let c = cfg(20);
        let a = run_soc_with(&docs[0], &model, &sampler, &c, Execution::Sequential).unwrap();
        let b = run_soc_with(&docs[0], &model, &sampler, &c, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let model = KeywordLogitModel::single_keyword("afib", -2.0, "amiodarone", 4.0);
        let empty = Document::new("e", vec![]).unwrap();
        assert!(matches!(
            run_soc(&empty, &model, &IdentitySampler, &cfg(1)),
            Err(SocError::EmptyDocument(_))
        ));
        let doc = keyword_doc(2, 0);
        assert!(run_soc(&doc, &model, &IdentitySampler, &cfg(0)).is_err());
    }

    /// Probability linear in token counts: 0.5 + sum of small weights.
    struct LinearBag;

    impl ClassifierBackend for LinearBag {
        fn labels(&self) -> &[String] {
            static L: std::sync::LazyLock<Vec<String>> = std::sync::LazyLock::new(|| vec!["a".into()]);
            &L
        }
        fn mask_token(&self) -> &str {
            "[MASK]"
        }
        fn predict_batch(&self, batch: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError> {
            let w = |t: &str| match t {
                "amiodarone" => 0.005,
                "warfarin" => -0.003,
                "z" => 0.001,
                _ => 0.0,
            };
            Ok(batch.iter().map(|s| vec![0.5 + s.iter().map(|t| w(t)).sum::<f64>()]).collect())
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn identity_scores_are_local(
            words in proptest::collection::vec(prop::sample::select(vec!["amiodarone", "x", "y", "warfarin"]), 20..60),
            other in prop::sample::select(vec!["amiodarone", "z", "warfarin"]),
        ) {
            let c = SocConfig { block_size: 5, samples_per_block: 1, radius: 5, seed: 0 };
            let doc = Document::new("d", words.iter().map(|w| w.to_string()).collect()).unwrap();
            let mut changed = words.clone();
            changed[0] = other; // inside block 0 only
            let doc2 = Document::new("d", changed.iter().map(|w| w.to_string()).collect()).unwrap();
            let a = run_soc(&doc, &LinearBag, &IdentitySampler, &c).unwrap();
            let b = run_soc(&doc2, &LinearBag, &IdentitySampler, &c).unwrap();
            for (sa, sb) in a.iter().zip(&b).skip(1) {
                prop_assert!((sa.score.unwrap() - sb.score.unwrap()).abs() < 1e-12);
            }
        }
    }
}
