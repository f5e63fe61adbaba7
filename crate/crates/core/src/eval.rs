//! Statistics over human judgments of surfaced blocks.
//!
//! Ranked lists come from explanation reports; annotations mark each
//! surfaced block as informative or not, per reviewer. From these we compute
//! precision@K and MRR@K with percentile bootstrap intervals (resampling
//! (document, label) pairs), Welch t-tests between algorithms with
//! Bonferroni adjustment, and inter-reviewer agreement with Cohen's kappa.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::report::Algorithm;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("annotation CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("annotation row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("duplicate annotation for {0}")]
    Duplicate(String),
    #[error("{} ranked item(s) lack annotations: {}", .0.len(), .0.join("; "))]
    MissingAnnotations(Vec<String>),
    #[error("ranked list for {0} is invalid: {1}")]
    BadRanking(String, String),
    #[error("reviewers annotated different item sets ({only_a} only in the first, {only_b} only in the second)")]
    MismatchedItems { only_a: usize, only_b: usize },
    #[error("{0}")]
    InvalidInput(String),
}

/// One reviewer's judgment of one surfaced block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub doc_id: String,
    pub label: String,
    pub block_index: usize,
    pub algorithm: Algorithm,
    pub reviewer: String,
    pub informative: bool,
}

/// What a reviewer judged: (doc, label, block, algorithm).
pub type ItemKey = (String, String, usize, Algorithm);

#[derive(Deserialize)]
struct CsvRow {
    doc_id: String,
    label: String,
    block_index: usize,
    algorithm: String,
    reviewer: String,
    informative: String,
}

/// Indexed annotations; `(item, reviewer)` keys are unique.
#[derive(Clone, Debug, Default)]
pub struct AnnotationSet {
    by_reviewer: BTreeMap<String, HashMap<ItemKey, bool>>,
}

impl AnnotationSet {
    pub fn new(annotations: impl IntoIterator<Item = Annotation>) -> Result<Self, EvalError> {
        let mut set = Self::default();
        for a in annotations {
            let key = (a.doc_id, a.label, a.block_index, a.algorithm);
            let per = set.by_reviewer.entry(a.reviewer.clone()).or_default();
            if per.contains_key(&key) {
                return Err(EvalError::Duplicate(format!(
                    "{}/{}/{}/{}/{}",
                    key.0,
                    key.1,
                    key.2,
                    key.3.as_str(),
                    a.reviewer
                )));
            }
            per.insert(key, a.informative);
        }
        Ok(set)
    }

    /// Parses `doc_id,label,block_index,algorithm,reviewer,informative`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Vec::new();
        for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            let bad = |message: String| EvalError::BadRow { row: i + 1, message };
            let algorithm = row.algorithm.parse::<Algorithm>().map_err(bad)?;
            let informative = match row.informative.as_str() {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("informative must be 0 or 1, got {other:?}"))),
            };
            out.push(Annotation {
                doc_id: row.doc_id,
                label: row.label,
                block_index: row.block_index,
                algorithm,
                reviewer: row.reviewer,
                informative,
            });
        }
        Self::new(out)
    }

    pub fn reviewers(&self) -> impl Iterator<Item = &str> {
        self.by_reviewer.keys().map(String::as_str)
    }

    pub fn judgments(&self, reviewer: &str) -> Option<&HashMap<ItemKey, bool>> {
        self.by_reviewer.get(reviewer)
    }

    pub fn get(&self, reviewer: &str, key: &ItemKey) -> Option<bool> {
        self.by_reviewer.get(reviewer)?.get(key).copied()
    }
}

/// Blocks surfaced for one (document, label, algorithm), best first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub doc_id: String,
    pub label: String,
    pub algorithm: Algorithm,
    pub blocks: Vec<usize>,
}

impl RankedList {
    fn name(&self) -> String {
        format!("{}/{}/{}", self.doc_id, self.label, self.algorithm.as_str())
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let mut seen = HashSet::new();
        if let Some(dup) = self.blocks.iter().find(|b| !seen.insert(**b)) {
            return Err(EvalError::BadRanking(self.name(), format!("block {dup} repeated")));
        }
        Ok(())
    }

    fn key(&self, block: usize) -> ItemKey {
        (self.doc_id.clone(), self.label.clone(), block, self.algorithm)
    }
}

/// Percentile bootstrap settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiConfig {
    pub iterations: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for CiConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean of `values` with a percentile bootstrap interval.
pub fn bootstrap_mean_ci(values: &[f64], cfg: &CiConfig) -> Result<Estimate, EvalError> {
    if values.is_empty() {
        return Err(EvalError::InvalidInput("no (document, label) pairs to average".into()));
    }
    if cfg.iterations == 0 || !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(EvalError::InvalidInput("bad bootstrap configuration".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut means = map_indexed(Execution::default(), cfg.iterations, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(b as u64);
        (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64
    });
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - cfg.level) / 2.0;
    Ok(Estimate {
        mean,
        ci_low: quantile(&means, alpha),
        ci_high: quantile(&means, 1.0 - alpha),
        n,
    })
}

fn judged(
    ranked: &[RankedList],
    annotations: &AnnotationSet,
    reviewer: &str,
    k: usize,
) -> Result<Vec<Vec<bool>>, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidInput("K must be at least 1".into()));
    }
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(ranked.len());
    for list in ranked {
        list.validate()?;
        let mut flags = Vec::new();
        for &b in list.blocks.iter().take(k) {
            match annotations.get(reviewer, &list.key(b)) {
                Some(f) => flags.push(f),
                None => missing.push(format!("{}/block {b}/reviewer {reviewer}", list.name())),
            }
        }
        out.push(flags);
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingAnnotations(missing));
    }
    Ok(out)
}

/// Per-pair precision@K: informative blocks among the top K, divided by K.
pub fn precision_values(
    ranked: &[RankedList],
    annotations: &AnnotationSet,
    reviewer: &str,
    k: usize,
) -> Result<Vec<f64>, EvalError> {
    Ok(judged(ranked, annotations, reviewer, k)?
        .iter()
        .map(|flags| flags.iter().filter(|f| **f).count() as f64 / k as f64)
        .collect())
}

/// Per-pair reciprocal rank of the first informative block in the top K,
/// zero when there is none.
pub fn reciprocal_rank_values(
    ranked: &[RankedList],
    annotations: &AnnotationSet,
    reviewer: &str,
    k: usize,
) -> Result<Vec<f64>, EvalError> {
    Ok(judged(ranked, annotations, reviewer, k)?
        .iter()
        .map(|flags| {
            flags
                .iter()
                .position(|f| *f)
                .map_or(0.0, |i| 1.0 / (i + 1) as f64)
        })
        .collect())
}

pub fn precision_at_k(
    ranked: &[RankedList],
    annotations: &AnnotationSet,
    reviewer: &str,
    k: usize,
    ci: &CiConfig,
) -> Result<Estimate, EvalError> {
    bootstrap_mean_ci(&precision_values(ranked, annotations, reviewer, k)?, ci)
}

pub fn mrr_at_k(
    ranked: &[RankedList],
    annotations: &AnnotationSet,
    reviewer: &str,
    k: usize,
    ci: &CiConfig,
) -> Result<Estimate, EvalError> {
    bootstrap_mean_ci(&reciprocal_rank_values(ranked, annotations, reviewer, k)?, ci)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided Welch t-test on two samples of binary outcomes given as
/// success counts.
pub fn welch_t_test(
    successes_a: u64,
    n_a: u64,
    successes_b: u64,
    n_b: u64,
) -> Result<WelchResult, EvalError> {
    if n_a < 2 || n_b < 2 {
        return Err(EvalError::InvalidInput("each sample needs at least 2 items".into()));
    }
    if successes_a > n_a || successes_b > n_b {
        return Err(EvalError::InvalidInput("more successes than items".into()));
    }
    let stats = |s: u64, n: u64| {
        let n = n as f64;
        let mean = s as f64 / n;
        // unbiased variance of 0/1 outcomes
        (mean, n * mean * (1.0 - mean) / (n - 1.0), n)
    };
    let (ma, va, na) = stats(successes_a, n_a);
    let (mb, vb, nb) = stats(successes_b, n_b);
    let (ea, eb) = (va / na, vb / nb);
    let se2 = ea + eb;
    if se2 == 0.0 {
        let p_value = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { f64::INFINITY.copysign(ma - mb) };
        return Ok(WelchResult {
            t,
            df: na + nb - 2.0,
            p_value,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (ea * ea / (na - 1.0) + eb * eb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| EvalError::InvalidInput(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult { t, df, p_value })
}

/// `min(1, p * families)` for each p.
pub fn bonferroni(p_values: &[f64], families: usize) -> Vec<f64> {
    let m = families.max(1) as f64;
    p_values.iter().map(|p| (p * m).min(1.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub n_items: usize,
    pub agreement: f64,
    pub kappa: f64,
}

/// Cohen's kappa from a 2x2 confusion matrix `[[yes/yes, yes/no], [no/yes, no/no]]`.
///
/// When expected agreement is 1 (both raters constant and equal) kappa is
/// reported as 1.
pub fn kappa_from_confusion(m: [[u64; 2]; 2]) -> Result<Agreement, EvalError> {
    let n = (m[0][0] + m[0][1] + m[1][0] + m[1][1]) as f64;
    if n == 0.0 {
        return Err(EvalError::InvalidInput("no items".into()));
    }
    let p_o = (m[0][0] + m[1][1]) as f64 / n;
    let a_yes = (m[0][0] + m[0][1]) as f64 / n;
    let b_yes = (m[0][0] + m[1][0]) as f64 / n;
    let p_e = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    let kappa = if (1.0 - p_e).abs() < f64::EPSILON {
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(Agreement {
        n_items: n as usize,
        agreement: p_o,
        kappa,
    })
}

/// Agreement ratio and kappa between two reviewers over identical item sets.
pub fn agreement_and_kappa<K: Eq + std::hash::Hash>(
    a: &HashMap<K, bool>,
    b: &HashMap<K, bool>,
) -> Result<Agreement, EvalError> {
    let only_a = a.keys().filter(|k| !b.contains_key(*k)).count();
    let only_b = b.keys().filter(|k| !a.contains_key(*k)).count();
    if only_a > 0 || only_b > 0 {
        return Err(EvalError::MismatchedItems { only_a, only_b });
    }
    let mut m = [[0u64; 2]; 2];
    for (k, &va) in a {
        let vb = b[k];
        m[usize::from(!va)][usize::from(!vb)] += 1;
    }
    kappa_from_confusion(m)
}

/// Seeded subsample of `n` items without replacement, in original order.
pub fn subsample<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>, EvalError> {
    if n > items.len() {
        return Err(EvalError::InvalidInput(format!(
            "cannot sample {n} of {} items",
            items.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| items[i].clone()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub reviewer: String,
    pub algorithm: Algorithm,
    pub k: usize,
    pub precision: Estimate,
    pub mrr: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchRow {
    pub reviewer: String,
    pub algorithm_a: Algorithm,
    pub algorithm_b: Algorithm,
    pub successes_a: u64,
    pub n_a: u64,
    pub successes_b: u64,
    pub n_b: u64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub p_bonferroni: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub reviewer_a: String,
    pub reviewer_b: String,
    #[serde(flatten)]
    pub agreement: Agreement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub k_values: Vec<usize>,
    pub metrics: Vec<MetricRow>,
    pub welch: Vec<WelchRow>,
    pub agreement: Vec<AgreementRow>,
}

/// Full evaluation: metrics for every (reviewer, algorithm, K), Welch tests
/// between every pair of algorithms per reviewer (Bonferroni over the
/// reviewer's tests), and agreement for every pair of reviewers.
pub fn evaluate(
    ranked: &[RankedList],
    annotations: &AnnotationSet,
    k_values: &[usize],
    ci: &CiConfig,
) -> Result<EvaluationReport, EvalError> {
    if k_values.is_empty() {
        return Err(EvalError::InvalidInput("no K values".into()));
    }
    let reviewers: Vec<&str> = annotations.reviewers().collect();
    if reviewers.is_empty() {
        return Err(EvalError::InvalidInput("no annotations".into()));
    }
    let max_k = *k_values.iter().max().expect("non-empty");
    let mut missing = Vec::new();
    for r in &reviewers {
        if let Err(EvalError::MissingAnnotations(m)) = judged(ranked, annotations, r, max_k) {
            missing.extend(m);
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingAnnotations(missing));
    }

    let algorithms: BTreeSet<Algorithm> = ranked.iter().map(|r| r.algorithm).collect();
    let mut metrics = Vec::new();
    for r in &reviewers {
        for &alg in &algorithms {
            let lists: Vec<RankedList> =
                ranked.iter().filter(|l| l.algorithm == alg).cloned().collect();
            for &k in k_values {
                metrics.push(MetricRow {
                    reviewer: r.to_string(),
                    algorithm: alg,
                    k,
                    precision: precision_at_k(&lists, annotations, r, k, ci)?,
                    mrr: mrr_at_k(&lists, annotations, r, k, ci)?,
                });
            }
        }
    }

    let mut welch = Vec::new();
    for r in &reviewers {
        let judgments = annotations.judgments(r).expect("listed reviewer");
        let mut counts: BTreeMap<Algorithm, (u64, u64)> = BTreeMap::new();
        for ((_, _, _, alg), &inf) in judgments {
            let c = counts.entry(*alg).or_default();
            c.0 += u64::from(inf);
            c.1 += 1;
        }
        let algs: Vec<_> = counts.keys().copied().collect();
        let mut rows = Vec::new();
        for (i, &a) in algs.iter().enumerate() {
            for &b in &algs[i + 1..] {
                let (sa, na) = counts[&a];
                let (sb, nb) = counts[&b];
                if na < 2 || nb < 2 {
                    continue;
                }
                let w = welch_t_test(sa, na, sb, nb)?;
                rows.push(WelchRow {
                    reviewer: r.to_string(),
                    algorithm_a: a,
                    algorithm_b: b,
                    successes_a: sa,
                    n_a: na,
                    successes_b: sb,
                    n_b: nb,
                    t: w.t,
                    df: w.df,
                    p_value: w.p_value,
                    p_bonferroni: w.p_value,
                });
            }
        }
        let adjusted = bonferroni(&rows.iter().map(|w| w.p_value).collect::<Vec<_>>(), rows.len());
        for (row, p) in rows.iter_mut().zip(adjusted) {
            row.p_bonferroni = p;
        }
        welch.extend(rows);
    }

    let mut agreement = Vec::new();
    for (i, a) in reviewers.iter().enumerate() {
        for b in &reviewers[i + 1..] {
            let ja = annotations.judgments(a).expect("listed reviewer");
            let jb = annotations.judgments(b).expect("listed reviewer");
            agreement.push(AgreementRow {
                reviewer_a: a.to_string(),
                reviewer_b: b.to_string(),
                agreement: agreement_and_kappa(ja, jb)?,
            });
        }
    }

    Ok(EvaluationReport {
        k_values: k_values.to_vec(),
        metrics,
        welch,
        agreement,
    })
}
