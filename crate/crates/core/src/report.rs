//! Per-document importance reports and their JSON, TSV and HTML forms.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msp::{
    top_k, BlockScore, MspConfig, PairScore, PerturbationRecord, ScoreStatus,
};
use crate::significance::{BootstrapConfig, SignificanceMode, SignificanceResult};
use crate::soc::SocConfig;
use crate::text::{segment_len, Block, SegmentationConfig};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid report for {document}: {message}")]
    Invalid { document: String, message: String },
}

/// Which explainer produced a ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Msp,
    Soc,
    Random,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Msp => "msp",
            Self::Soc => "soc",
            Self::Random => "random",
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "msp" => Ok(Self::Msp),
            "soc" => Ok(Self::Soc),
            "random" | "rnd" => Ok(Self::Random),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Settings that produced a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RunConfig {
    Msp {
        msp: MspConfig,
        iterations: usize,
        top_k: usize,
        bootstrap: Option<BootstrapConfig>,
    },
    Soc {
        soc: SocConfig,
        sampler: String,
        top_k: usize,
    },
    Random {
        block_size: usize,
        top_k: usize,
        seed: u64,
    },
}

impl RunConfig {
    pub fn block_size(&self) -> usize {
        match self {
            Self::Msp { msp, .. } => msp.block_size,
            Self::Soc { soc, .. } => soc.block_size,
            Self::Random { block_size, .. } => *block_size,
        }
    }

    pub fn top_k(&self) -> usize {
        match self {
            Self::Msp { top_k, .. } | Self::Soc { top_k, .. } | Self::Random { top_k, .. } => *top_k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub rank: usize,
    pub block: usize,
    pub start: usize,
    pub length: usize,
    pub text: String,
    /// Masked-minus-unmasked mean delta.
    pub score: Option<f64>,
    /// Mean delta over masked iterations only.
    pub masked_mean: Option<f64>,
    pub status: Option<ScoreStatus>,
    pub masked_count: usize,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    pub baseline: Option<f64>,
    pub entries: Vec<ReportEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub label: String,
    pub first: usize,
    pub second: usize,
    pub score: Option<f64>,
    pub interaction: Option<f64>,
    pub distance: usize,
    pub co_masked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub document_id: String,
    pub algorithm: Algorithm,
    pub config: RunConfig,
    pub significance_mode: Option<SignificanceMode>,
    pub tokens: Vec<String>,
    pub labels: Vec<LabelReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PairEntry>>,
}

fn entry(rank: usize, block: Block, tokens: &[String]) -> ReportEntry {
    ReportEntry {
        rank,
        block: block.index,
        start: block.start,
        length: block.length,
        text: tokens[block.span()].join(" "),
        score: None,
        masked_mean: None,
        status: None,
        masked_count: 0,
        p_value: None,
    }
}

fn blocks_of(tokens: &[String], block_size: usize) -> Vec<Block> {
    let seg = SegmentationConfig::new(block_size.max(1)).expect("nonzero block size");
    segment_len(tokens.len(), seg)
}

/// Ranks scored blocks per label, keeping at most `k` per label. Blocks with
/// undefined scores never rank.
fn scored_labels(
    labels: &[String],
    tokens: &[String],
    block_size: usize,
    scores: &[BlockScore],
    significance: Option<&[SignificanceResult]>,
    baseline: Option<&[f64]>,
    k: usize,
) -> Vec<LabelReport> {
    let blocks = blocks_of(tokens, block_size);
    let nb = blocks.len();
    labels
        .iter()
        .enumerate()
        .map(|(l, name)| {
            let ranked = top_k(scores, l, k.max(1)).expect("k >= 1");
            let entries = ranked
                .blocks
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    let s = &scores[l * nb + b];
                    debug_assert_eq!((s.label, s.block), (l, b));
                    ReportEntry {
                        score: s.score,
                        masked_mean: s.masked_mean,
                        status: Some(s.status()),
                        masked_count: s.masked_count,
                        p_value: significance.and_then(|r| r[l * nb + b].p_value),
                        ..entry(i + 1, blocks[b], tokens)
                    }
                })
                .collect();
            LabelReport {
                label: name.clone(),
                baseline: baseline.map(|v| v[l]),
                entries,
            }
        })
        .collect()
}

impl ImportanceReport {
    /// Report from a masked-sampling record and its derived scores.
    pub fn from_msp(
        rec: &PerturbationRecord,
        tokens: &[String],
        scores: &[BlockScore],
        significance: Option<(&[SignificanceResult], &BootstrapConfig, SignificanceMode)>,
        pairs: Option<&[PairScore]>,
        k: usize,
    ) -> Self {
        let labels = scored_labels(
            &rec.labels,
            tokens,
            rec.config.block_size,
            scores,
            significance.map(|s| s.0),
            Some(&rec.baseline),
            k,
        );
        let pairs = pairs.map(|ps| {
            let mut out: Vec<PairEntry> = ps
                .iter()
                .map(|p| PairEntry {
                    label: rec.labels[p.label].clone(),
                    first: p.first,
                    second: p.second,
                    score: p.score,
                    interaction: p.interaction,
                    distance: p.distance,
                    co_masked: p.co_masked,
                })
                .collect();
            // descending interaction, undefined last; stable on input order
            out.sort_by(|a, b| match (a.interaction, b.interaction) {
                (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            });
            out
        });
        Self {
            document_id: rec.document_id.clone(),
            algorithm: Algorithm::Msp,
            config: RunConfig::Msp {
                msp: rec.config.clone(),
                iterations: rec.iterations(),
                top_k: k,
                bootstrap: significance.map(|s| s.1.clone()),
            },
            significance_mode: significance.map(|s| s.2),
            tokens: tokens.to_vec(),
            labels,
            pairs,
        }
    }

    pub fn from_soc(
        document_id: &str,
        labels: &[String],
        tokens: &[String],
        scores: &[BlockScore],
        cfg: &SocConfig,
        sampler: &str,
        k: usize,
    ) -> Self {
        let mut labels = scored_labels(labels, tokens, cfg.block_size, scores, None, None, k);
        for l in &mut labels {
            for e in &mut l.entries {
                e.masked_mean = None;
            }
        }
        Self {
            document_id: document_id.to_owned(),
            algorithm: Algorithm::Soc,
            config: RunConfig::Soc {
                soc: cfg.clone(),
                sampler: sampler.to_owned(),
                top_k: k,
            },
            significance_mode: None,
            tokens: tokens.to_vec(),
            labels,
            pairs: None,
        }
    }

    /// Report listing pre-drawn random blocks, one list per label.
    pub fn from_random(
        document_id: &str,
        labels: &[String],
        tokens: &[String],
        block_size: usize,
        picks: &[Vec<usize>],
        seed: u64,
    ) -> Self {
        let blocks = blocks_of(tokens, block_size);
        let k = picks.first().map_or(0, Vec::len);
        let labels = labels
            .iter()
            .zip(picks)
            .map(|(name, picked)| LabelReport {
                label: name.clone(),
                baseline: None,
                entries: picked
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| entry(i + 1, blocks[b], tokens))
                    .collect(),
            })
            .collect();
        Self {
            document_id: document_id.to_owned(),
            algorithm: Algorithm::Random,
            config: RunConfig::Random {
                block_size,
                top_k: k,
                seed,
            },
            significance_mode: None,
            tokens: tokens.to_vec(),
            labels,
            pairs: None,
        }
    }

    fn invalid(&self, message: String) -> ReportError {
        ReportError::Invalid {
            document: self.document_id.clone(),
            message,
        }
    }

    /// Ranks run 1..=n, block geometry matches the configured block size and
    /// every block text equals its token span.
    pub fn validate(&self) -> Result<(), ReportError> {
        let block_size = self.config.block_size();
        if block_size == 0 {
            return Err(self.invalid("block size is zero".into()));
        }
        let blocks = blocks_of(&self.tokens, block_size);
        for l in &self.labels {
            for (i, e) in l.entries.iter().enumerate() {
                if e.rank != i + 1 {
                    return Err(self.invalid(format!("label {}: entry {i} has rank {}", l.label, e.rank)));
                }
                let Some(b) = blocks.get(e.block) else {
                    return Err(self.invalid(format!("label {}: block {} out of range", l.label, e.block)));
                };
                if (b.start, b.length) != (e.start, e.length) {
                    return Err(self.invalid(format!("label {}: block {} has wrong span", l.label, e.block)));
                }
                if self.tokens[b.span()].join(" ") != e.text {
                    return Err(self.invalid(format!("label {}: block {} text differs from document", l.label, e.block)));
                }
                if let Some(p) = e.p_value {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(self.invalid(format!("label {}: p-value {p} out of range", l.label)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, ReportError> {
        let report: Self = serde_json::from_str(json)?;
        report.validate()?;
        Ok(report)
    }

    /// One row per ranked entry; empty cells for undefined values.
    pub fn to_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(
            "document_id\talgorithm\tlabel\trank\tblock\tstart\tlength\tscore\tmasked_mean\tp_value\tmasked_count\ttext\n",
        );
        for l in &self.labels {
            for e in &l.entries {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    tsv_cell(&self.document_id),
                    self.algorithm.as_str(),
                    tsv_cell(&l.label),
                    e.rank,
                    e.block,
                    e.start,
                    e.length,
                    opt(e.score),
                    opt(e.masked_mean),
                    opt(e.p_value),
                    e.masked_count,
                    tsv_cell(&e.text),
                );
            }
        }
        out
    }

    /// Static page: for each label, the document with its ranked blocks
    /// highlighted (opacity scaled by score, only scores above zero), then a
    /// table of the entries. Random reports highlight every listed block.
    pub fn to_html(&self) -> Result<String, ReportError> {
        self.validate()?;
        let mut h = String::new();
        let title = format!("{} ({})", self.document_id, self.algorithm.as_str());
        let _ = write!(
            h,
            "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>\n\
             body{{font-family:sans-serif;max-width:60em;margin:2em auto;line-height:1.6}}\n\
             .doc{{border:1px solid #ccc;padding:1em;white-space:normal}}\n\
             mark{{border-radius:3px;padding:0 2px}}\n\
             table{{border-collapse:collapse;margin:1em 0}}td,th{{border:1px solid #ccc;padding:2px 6px;text-align:left}}\n\
             </style>\n</head>\n<body>\n<h1>{}</h1>\n",
            escape(&title),
            escape(&title)
        );
        let blocks = blocks_of(&self.tokens, self.config.block_size());
        for l in &self.labels {
            let highlighted: Vec<&ReportEntry> = l
                .entries
                .iter()
                .filter(|e| self.algorithm == Algorithm::Random || e.score.is_some_and(|s| s > 0.0))
                .collect();
            let max = highlighted
                .iter()
                .filter_map(|e| e.score)
                .fold(0.0_f64, f64::max);
            let _ = writeln!(h, "<section>\n<h2>{}</h2>", escape(&l.label));
            if let Some(b) = l.baseline {
                let _ = writeln!(h, "<p>baseline probability {}</p>", fmt_score(b));
            }
            h.push_str("<div class=\"doc\">");
            for (bi, block) in blocks.iter().enumerate() {
                let text = escape(&self.tokens[block.span()].join(" "));
                if bi > 0 {
                    h.push(' ');
                }
                match highlighted.iter().find(|e| e.block == bi) {
                    Some(e) => {
                        let alpha = match (e.score, max > 0.0) {
                            (Some(s), true) => 0.15 + 0.7 * s / max,
                            _ => 0.4,
                        };
                        let _ = write!(
                            h,
                            "<mark style=\"background:rgba(214,39,40,{alpha:.3})\" title=\"{}\">{text}</mark>",
                            escape(&tooltip(e))
                        );
                    }
                    None => h.push_str(&text),
                }
            }
            h.push_str("</div>\n<table>\n<tr><th>rank</th><th>block</th><th>text</th><th>score</th><th>p-value</th></tr>\n");
            for e in &l.entries {
                let _ = writeln!(
                    h,
                    "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
                    e.rank,
                    e.block,
                    escape(&e.text),
                    e.score.map(fmt_score).unwrap_or_else(|| "n/a".into()),
                    escape(&e.p_value.map(fmt_p).unwrap_or_else(|| "n/a".into())),
                );
            }
            h.push_str("</table>\n");
            if let Some(pairs) = &self.pairs {
                let top: Vec<&PairEntry> = pairs
                    .iter()
                    .filter(|p| p.label == l.label)
                    .take(self.config.top_k().max(1))
                    .collect();
                if !top.is_empty() {
                    h.push_str("<table>\n<tr><th>first</th><th>second</th><th>distance</th><th>pair score</th><th>interaction</th></tr>\n");
                    for p in top {
                        let _ = writeln!(
                            h,
                            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
                            p.first,
                            p.second,
                            p.distance,
                            p.score.map(fmt_score).unwrap_or_else(|| "n/a".into()),
                            p.interaction.map(fmt_score).unwrap_or_else(|| "n/a".into()),
                        );
                    }
                    h.push_str("</table>\n");
                }
            }
            h.push_str("</section>\n");
        }
        h.push_str("</body>\n</html>\n");
        Ok(h)
    }
}

fn tooltip(e: &ReportEntry) -> String {
    let mut t = format!("rank {}", e.rank);
    if let Some(s) = e.score {
        let _ = write!(t, ", score {}", fmt_score(s));
    }
    if let Some(p) = e.p_value {
        let _ = write!(t, ", p {}", fmt_p(p));
    }
    t
}

pub fn fmt_score(s: f64) -> String {
    format!("{s:.3}")
}

pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn tsv_cell(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msp::Budget;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn score(block: usize, s: f64) -> BlockScore {
        BlockScore {
            label: 0,
            block,
            score: Some(s),
            masked_mean: Some(s),
            masked_count: 10,
            unmasked_count: 90,
        }
    }

    fn soc_report(tokens: &[String], scores: &[f64], k: usize) -> ImportanceReport {
        let scores: Vec<BlockScore> = scores.iter().enumerate().map(|(b, &s)| score(b, s)).collect();
        let cfg = SocConfig {
            block_size: 2,
            ..Default::default()
        };
        ImportanceReport::from_soc("doc<1>", &["A&B".into()], tokens, &scores, &cfg, "identity", k)
    }

    #[test]
    fn entries_are_ranked_and_text_matches() {
        let t = toks("a b c d e");
        let r = soc_report(&t, &[0.1, 0.5, 0.3], 3);
        let e = &r.labels[0].entries;
        assert_eq!(e.iter().map(|e| e.block).collect::<Vec<_>>(), [1, 2, 0]);
        assert_eq!(e[0].text, "c d");
        assert_eq!(e[1].text, "e");
        assert_eq!((e[1].start, e[1].length), (4, 1));
        r.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let t = toks("x y z w");
        let r = soc_report(&t, &[0.25, -0.125], 2);
        let back = ImportanceReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);

        let cfg = MspConfig {
            block_size: 2,
            budget: Budget::Iterations(7),
            ..Default::default()
        };
        let rep = ImportanceReport {
            config: RunConfig::Msp {
                msp: cfg,
                iterations: 7,
                top_k: 2,
                bootstrap: Some(BootstrapConfig::default()),
            },
            significance_mode: Some(SignificanceMode::Literal),
            pairs: Some(vec![PairEntry {
                label: "A&B".into(),
                first: 0,
                second: 1,
                score: Some(0.1),
                interaction: None,
                distance: 10,
                co_masked: 3,
            }]),
            ..r
        };
        assert_eq!(ImportanceReport::from_json(&rep.to_json()).unwrap(), rep);
    }

    #[test]
    fn malformed_reports_rejected() {
        let t = toks("a b c d");
        let mut r = soc_report(&t, &[0.1, 0.2], 2);
        r.labels[0].entries[0].text = "tampered".into();
        assert!(ImportanceReport::from_json(&r.to_json()).is_err());
        assert!(r.to_html().is_err());
        assert!(ImportanceReport::from_json("{\"document_id\": 3}").is_err());
    }

    #[test]
    fn html_highlights_positive_scores_only() {
        let t = toks("a b c d e f");
        let one = soc_report(&t, &[0.0, 0.4, -0.2], 3).to_html().unwrap();
        assert_eq!(one.matches("<mark").count(), 1);
        let zero = soc_report(&t, &[0.0, 0.0, 0.0], 3).to_html().unwrap();
        assert_eq!(zero.matches("<mark").count(), 0);
        // escaping and no external resources
        assert!(one.contains("doc&lt;1&gt;"));
        assert!(one.contains("A&amp;B"));
        assert!(!one.contains("http://") && !one.contains("https://") && !one.contains("<script"));
    }

    #[test]
    fn html_renders_score_and_small_p() {
        let t = toks("acute systolic heart failure with reduced ejection fraction noted today");
        let mut r = soc_report(&t, &[0.407, 0.01, 0.0, 0.0, 0.0, 0.0], 1);
        r.labels[0].entries[0].p_value = Some(0.0009);
        let html = r.to_html().unwrap();
        assert!(html.contains("score 0.407, p &lt;0.001"));
        assert!(html.contains("<td>0.407</td><td>&lt;0.001</td>"), "{html}");
    }

    #[test]
    fn tsv_has_header_and_rows() {
        let t = toks("a b c");
        let r = soc_report(&t, &[0.5, 0.25], 2);
        let tsv = r.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("doc<1>\tsoc\tA&B\t1\t0\t0\t2\t0.5\t\t"));
    }

    #[test]
    fn random_report_lists_picks() {
        let t = toks("a b c d e f g");
        let r = ImportanceReport::from_random("d", &["x".into()], &t, 3, &[vec![2, 0]], 5);
        assert_eq!(r.labels[0].entries[0].text, "g");
        assert_eq!(r.config.top_k(), 2);
        assert_eq!(r.to_html().unwrap().matches("<mark").count(), 2);
    }

    #[test]
    fn p_formatting() {
        assert_eq!(fmt_p(0.0004), "<0.001");
        assert_eq!(fmt_p(0.001), "0.001");
        assert_eq!(fmt_p(1.0), "1.000");
        assert_eq!("RND".parse::<Algorithm>(), Ok(Algorithm::Random));
    }
}
