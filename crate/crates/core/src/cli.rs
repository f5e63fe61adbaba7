//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad input (flags, corpus, weights, reports),
//! 3 backend failure, 4 backend protocol violation.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backends::{
    BackendError, ClassifierBackend, ConstantBackend, KeywordLogitModel, RemoteBackend,
    RemoteBackendConfig,
};
use crate::corpus::load_corpus;
use crate::cost::{cost_table, Arity, CostRow};
use crate::eval::{evaluate, AnnotationSet, CiConfig, RankedList};
use crate::exec::{try_map_indexed, Execution};
use crate::msp::{
    block_importance, pair_importance, random_blocks, run_msp_with, Budget, ExecOptions,
    MspConfig, MspError, SamplingMode, DEFAULT_MIN_CO_MASK,
};
use crate::report::ImportanceReport;
use crate::significance::{p_values_with, BootstrapConfig, SignificanceMode};
use crate::soc::{
    run_soc_with, uniform_sampler, ContextSampler, IdentitySampler, SocConfig, SocError,
    UnigramSampler,
};
use crate::text::{block_count, Cleaner, Document};

pub const BACKEND_URL_ENV: &str = "BLOCKMASK_BACKEND_URL";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Protocol(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Backend(_) => 3,
            Self::Protocol(_) => 4,
        }
    }

    fn from_backend(context: &str, e: &BackendError) -> Self {
        let msg = format!("{context}: {e}");
        match e {
            BackendError::InvalidWeights(_) | BackendError::Io(_) => Self::Input(msg),
            e if e.is_protocol() => Self::Protocol(msg),
            _ => Self::Backend(msg),
        }
    }

    fn from_msp(doc: &str, e: &MspError) -> Self {
        match e {
            MspError::Backend { source, .. } => Self::from_backend(&format!("document {doc:?}"), source),
            other => Self::Input(format!("document {doc:?}: {other}")),
        }
    }

    fn from_soc(doc: &str, e: &SocError) -> Self {
        match e {
            SocError::Backend { source, .. } => Self::from_backend(&format!("document {doc:?}"), source),
            other => Self::Input(format!("document {doc:?}: {other}")),
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "blockmask", version, about = "Block-level importance for black-box text classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rank blocks by masked-sampling importance, with bootstrap p-values.
    Explain(ExplainArgs),
    /// Like explain, plus pair scores and interactions.
    ExplainPairs(PairsArgs),
    /// Rank blocks by occlusion with sampled context.
    Soc(SocArgs),
    /// List K random blocks per label.
    Random(RandomArgs),
    /// Score annotated reports: precision@K, MRR@K, Welch tests, kappa.
    Evaluate(EvaluateArgs),
    /// Print classifier-call counts.
    Cost(CostArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Html,
    Tsv,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Html => "html",
            Self::Tsv => "tsv",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DocArgs {
    /// JSON Lines corpus with {"id", "text"} or {"id", "tokens"} per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// builtin:<weights.json> | remote:<url> | constant:<p>:<label,...>.
    /// A bare `remote` takes its URL from BLOCKMASK_BACKEND_URL.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub block_size: usize,
    /// Random seed; 0 when omitted (required by `random`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output directory, one file per document.
    #[arg(long)]
    pub out: PathBuf,
    /// Apply the text cleaning rules to "text" entries.
    #[arg(long)]
    pub clean: bool,
    /// Words to drop during cleaning, one per line. Implies --clean.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    /// Sequences per backend request.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct MspArgs {
    #[arg(long, default_value_t = 0.1)]
    pub mask_prob: f64,
    /// Number of masked evaluations N.
    #[arg(long, conflicts_with = "expected_masks")]
    pub iterations: Option<usize>,
    /// Expected masks per block (or per pair); N = J/P (or J/P^2). Default 100.
    #[arg(long)]
    pub expected_masks: Option<u64>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap_iters: usize,
    /// Draws per bootstrap mean; defaults to the block's masked count.
    #[arg(long)]
    pub bootstrap_sample_size: Option<usize>,
    #[arg(long, default_value = "corrected", value_parser = ["corrected", "literal"])]
    pub significance_mode: String,
    /// Also write the raw sampling record as <id>.record.json.
    #[arg(long)]
    pub save_record: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub doc: DocArgs,
    #[command(flatten)]
    pub msp: MspArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PairsArgs {
    #[command(flatten)]
    pub doc: DocArgs,
    #[command(flatten)]
    pub msp: MspArgs,
    /// Minimum expected co-mask count N*P^2.
    #[arg(long, default_value_t = DEFAULT_MIN_CO_MASK)]
    pub min_co_mask: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    Identity,
    Uniform,
    Unigram,
}

#[derive(Args, Debug, Clone)]
pub struct SocArgs {
    #[command(flatten)]
    pub doc: DocArgs,
    #[arg(long, default_value_t = 10)]
    pub radius: usize,
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[arg(long, value_enum, default_value_t = SamplerKind::Unigram)]
    pub sampler: SamplerKind,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Args, Debug, Clone)]
pub struct RandomArgs {
    #[command(flatten)]
    pub doc: DocArgs,
    #[arg(long)]
    pub top_k: usize,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    /// CSV: doc_id,label,block_index,algorithm,reviewer,informative.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory of JSON reports.
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub ci_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CostFormat {
    Tsv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct CostArgs {
    #[arg(long, value_enum, default_value_t = ArityArg::Pair)]
    pub arity: ArityArg,
    /// J: expected masks for MSP, rounds per block for SOC.
    #[arg(long, default_value_t = 100)]
    pub budget: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5")]
    pub mask_probs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
    pub lengths: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    pub block_size: u64,
    #[arg(long, value_enum, default_value_t = CostFormat::Tsv)]
    pub format: CostFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArityArg {
    Single,
    Pair,
}

/// Parses arguments, runs, prints any error and maps it to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Explain(a) => with_jobs(a.doc.jobs, || cmd_explain(&a.doc, &a.msp, None)),
        Command::ExplainPairs(a) => {
            with_jobs(a.doc.jobs, || cmd_explain(&a.doc, &a.msp, Some(a.min_co_mask)))
        }
        Command::Soc(a) => with_jobs(a.doc.jobs, || cmd_soc(&a)),
        Command::Random(a) => cmd_random(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Cost(a) => cmd_cost(&a),
    }
}

#[cfg(feature = "parallel")]
fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError>
where
    T: Send,
{
    match jobs {
        Some(0) => Err(input("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(input)?
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    if jobs == Some(0) {
        return Err(input("--jobs must be at least 1"));
    }
    f()
}

/// Parses a backend spec, falling back to the environment URL.
pub fn resolve_backend(
    spec: Option<&str>,
    env_url: Option<&str>,
    batch_size: Option<usize>,
) -> Result<Box<dyn ClassifierBackend>, CliError> {
    let spec = match (spec, env_url) {
        (Some(s), _) => s.to_owned(),
        (None, Some(url)) => format!("remote:{url}"),
        (None, None) => {
            return Err(input(format!(
                "no backend: pass --backend or set {BACKEND_URL_ENV}"
            )))
        }
    };
    let (kind, rest) = spec.split_once(':').unwrap_or((spec.as_str(), ""));
    match kind {
        "builtin" => {
            let model = KeywordLogitModel::load(Path::new(rest))
                .map_err(|e| CliError::from_backend(&format!("weights {rest:?}"), &e))?;
            Ok(Box::new(model))
        }
        "remote" => {
            let url = if rest.is_empty() {
                env_url.ok_or_else(|| input(format!("remote backend needs a URL or {BACKEND_URL_ENV}")))?
            } else {
                rest
            };
            let mut cfg = RemoteBackendConfig::new(url);
            if let Some(b) = batch_size {
                cfg.batch_size = b.max(1);
            }
            let backend = RemoteBackend::connect(cfg)
                .map_err(|e| CliError::from_backend(&format!("backend {url}"), &e))?;
            Ok(Box::new(backend))
        }
        "constant" => {
            let (p, labels) = rest
                .split_once(':')
                .ok_or_else(|| input("constant backend spec is constant:<p>:<label,...>"))?;
            let p: f64 = p.parse().map_err(|_| input(format!("bad probability {p:?}")))?;
            let labels: Vec<String> = labels.split(',').map(str::to_owned).collect();
            Ok(Box::new(ConstantBackend::new(labels, p).map_err(input)?))
        }
        other => Err(input(format!("unknown backend kind {other:?}"))),
    }
}

fn load_documents(a: &DocArgs) -> Result<Vec<Document>, CliError> {
    if a.block_size == 0 {
        return Err(input("--block-size must be at least 1"));
    }
    let cleaner = match (&a.gazetteer, a.clean) {
        (Some(path), _) => Some(
            Cleaner::from_gazetteer_file(path)
                .map_err(|e| input(format!("gazetteer {}: {e}", path.display())))?,
        ),
        (None, true) => Some(Cleaner::new()),
        (None, false) => None,
    };
    let docs = load_corpus(&a.corpus, cleaner.as_ref())
        .map_err(|e| input(format!("corpus {}: {e}", a.corpus.display())))?;
    if docs.is_empty() {
        return Err(input(format!("corpus {} has no documents", a.corpus.display())));
    }
    let mut names = HashSet::new();
    for d in &docs {
        if !names.insert(file_stem(d.id())) {
            return Err(input(format!(
                "document {:?} collides with another id after file-name sanitizing",
                d.id()
            )));
        }
    }
    Ok(docs)
}

/// File-name-safe form of a document id.
pub fn file_stem(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    if s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

fn render(report: &ImportanceReport, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => Ok(report.to_json()),
        Format::Tsv => Ok(report.to_tsv()),
        Format::Html => report.to_html().map_err(input),
    }
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| input(format!("cannot create {}: {e}", dir.display())))
}

fn env_url() -> Option<String> {
    std::env::var(BACKEND_URL_ENV).ok().filter(|s| !s.is_empty())
}

fn msp_config(doc: &DocArgs, m: &MspArgs, pairs: Option<f64>) -> MspConfig {
    let budget = match m.iterations {
        Some(n) => Budget::Iterations(n),
        None => Budget::ExpectedMasks(m.expected_masks.unwrap_or(100)),
    };
    MspConfig {
        block_size: doc.block_size,
        mask_probability: m.mask_prob,
        budget,
        seed: doc.seed.unwrap_or(0),
        mode: if pairs.is_some() {
            SamplingMode::Pairs
        } else {
            SamplingMode::Single
        },
        min_co_mask: pairs.unwrap_or(DEFAULT_MIN_CO_MASK),
    }
}

fn execution() -> Execution {
    Execution::default()
}

pub fn cmd_explain(doc_args: &DocArgs, m: &MspArgs, pairs: Option<f64>) -> Result<(), CliError> {
    let cfg = msp_config(doc_args, m, pairs);
    cfg.validate().map_err(input)?;
    if m.top_k == 0 {
        return Err(input("--top-k must be at least 1"));
    }
    let mode: SignificanceMode = m.significance_mode.parse().map_err(input)?;
    let boot = BootstrapConfig {
        sample_size: m.bootstrap_sample_size,
        iterations: m.bootstrap_iters,
        seed: doc_args.seed.unwrap_or(0),
    };
    boot.validate().map_err(input)?;
    let docs = load_documents(doc_args)?;
    let env = env_url();
    let backend = resolve_backend(doc_args.backend.as_deref(), env.as_deref(), doc_args.batch_size)?;
    prepare_out(&doc_args.out)?;
    let opts = ExecOptions {
        execution: execution(),
        batch_size: doc_args.batch_size,
    };

    try_map_indexed(execution(), docs.len(), |i| {
        let doc = &docs[i];
        let rec = run_msp_with(doc, backend.as_ref(), &cfg, opts)
            .map_err(|e| CliError::from_msp(doc.id(), &e))?;
        let scores = block_importance(&rec);
        let sig = p_values_with(&rec, &boot, mode, opts.execution).map_err(input)?;
        let pair_scores = match pairs {
            Some(min) => Some(pair_importance(&rec, min).map_err(|e| CliError::from_msp(doc.id(), &e))?),
            None => None,
        };
        let report = ImportanceReport::from_msp(
            &rec,
            doc.tokens(),
            &scores,
            Some((&sig, &boot, mode)),
            pair_scores.as_deref(),
            m.top_k,
        );
        let stem = file_stem(doc.id());
        if m.save_record {
            let json = serde_json::to_string(&rec).map_err(input)?;
            write_output(&doc_args.out, &format!("{stem}.record.json"), &json)?;
        }
        let body = render(&report, doc_args.format)?;
        write_output(&doc_args.out, &format!("{stem}.{}", doc_args.format.extension()), &body)
    })
    .map(drop)
    .map_err(|(_, e)| e)
}

pub fn cmd_soc(a: &SocArgs) -> Result<(), CliError> {
    let cfg = SocConfig {
        block_size: a.doc.block_size,
        samples_per_block: a.rounds,
        radius: a.radius,
        seed: a.doc.seed.unwrap_or(0),
    };
    cfg.validate().map_err(input)?;
    if a.top_k == 0 {
        return Err(input("--top-k must be at least 1"));
    }
    let docs = load_documents(&a.doc)?;
    let sampler: Box<dyn ContextSampler> = match a.sampler {
        SamplerKind::Identity => Box::new(IdentitySampler),
        SamplerKind::Uniform => {
            let vocab: std::collections::BTreeSet<&String> =
                docs.iter().flat_map(|d| d.tokens()).collect();
            Box::new(uniform_sampler(vocab.into_iter().cloned().collect(), cfg.seed).map_err(input)?)
        }
        SamplerKind::Unigram => Box::new(UnigramSampler::from_corpus(&docs, cfg.seed).map_err(input)?),
    };
    let sampler_name = format!("{:?}", a.sampler).to_lowercase();
    let env = env_url();
    let backend = resolve_backend(a.doc.backend.as_deref(), env.as_deref(), a.doc.batch_size)?;
    prepare_out(&a.doc.out)?;

    try_map_indexed(execution(), docs.len(), |i| {
        let doc = &docs[i];
        let scores = run_soc_with(doc, backend.as_ref(), sampler.as_ref(), &cfg, execution())
            .map_err(|e| CliError::from_soc(doc.id(), &e))?;
        let report = ImportanceReport::from_soc(
            doc.id(),
            backend.labels(),
            doc.tokens(),
            &scores,
            &cfg,
            &sampler_name,
            a.top_k,
        );
        let body = render(&report, a.doc.format)?;
        let name = format!("{}.{}", file_stem(doc.id()), a.doc.format.extension());
        write_output(&a.doc.out, &name, &body)
    })
    .map(drop)
    .map_err(|(_, e)| e)
}

pub fn cmd_random(a: &RandomArgs) -> Result<(), CliError> {
    if a.top_k == 0 {
        return Err(input("--top-k must be at least 1"));
    }
    let seed = a.doc.seed.ok_or_else(|| input("random needs --seed"))?;
    let docs = load_documents(&a.doc)?;
    let env = env_url();
    let backend = resolve_backend(a.doc.backend.as_deref(), env.as_deref(), a.doc.batch_size)?;
    let labels = backend.labels();
    prepare_out(&a.doc.out)?;
    for doc in &docs {
        let nb = block_count(doc.len(), a.doc.block_size);
        let picks = (0..labels.len())
            .map(|l| random_blocks(nb, a.top_k, seed.wrapping_add(l as u64)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::from_msp(doc.id(), &e))?;
        let report = ImportanceReport::from_random(
            doc.id(),
            labels,
            doc.tokens(),
            a.doc.block_size,
            &picks,
            seed,
        );
        let body = render(&report, a.doc.format)?;
        let name = format!("{}.{}", file_stem(doc.id()), a.doc.format.extension());
        write_output(&a.doc.out, &name, &body)?;
    }
    Ok(())
}

/// Ranked lists from every `*.json` report in `dir` (sampling records are
/// skipped).
pub fn load_ranked_lists(dir: &Path) -> Result<Vec<RankedList>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| input(format!("reports {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(".record.json")
        })
        .collect();
    paths.sort();
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let report = ImportanceReport::from_json(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
        for l in report.labels {
            let key = (report.document_id.clone(), l.label.clone(), report.algorithm);
            if let Some(prev) = seen.insert(key, path.clone()) {
                return Err(input(format!(
                    "{} and {} both rank document {:?} label {:?} for {}",
                    prev.display(),
                    path.display(),
                    report.document_id,
                    l.label,
                    report.algorithm.as_str()
                )));
            }
            out.push(RankedList {
                doc_id: report.document_id.clone(),
                label: l.label,
                algorithm: report.algorithm,
                blocks: l.entries.iter().map(|e| e.block).collect(),
            });
        }
    }
    if out.is_empty() {
        return Err(input(format!("no reports found in {}", dir.display())));
    }
    Ok(out)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let file = fs::File::open(&a.annotations)
        .map_err(|e| input(format!("annotations {}: {e}", a.annotations.display())))?;
    let annotations = AnnotationSet::from_csv(file).map_err(input)?;
    let ranked = load_ranked_lists(&a.reports)?;
    let ci = CiConfig {
        iterations: a.ci_iters,
        seed: a.seed,
        ..Default::default()
    };
    let report = evaluate(&ranked, &annotations, &a.k, &ci).map_err(input)?;
    let mut json = serde_json::to_string_pretty(&report).map_err(input)?;
    json.push('\n');
    match &a.out {
        Some(path) => fs::write(path, json).map_err(|e| input(format!("{}: {e}", path.display()))),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn cost_tsv(rows: &[CostRow]) -> String {
    let mut out = String::from("algorithm\tmask_probability\tdoc_tokens\tmodel\timplementation\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            match r.algorithm {
                crate::cost::CostAlgorithm::Msp => "msp",
                crate::cost::CostAlgorithm::Soc => "soc",
            },
            r.mask_probability.map(|p| p.to_string()).unwrap_or_default(),
            r.doc_tokens,
            r.model,
            r.implementation.map(|n| n.to_string()).unwrap_or_default(),
        ));
    }
    out
}

pub fn cmd_cost(a: &CostArgs) -> Result<(), CliError> {
    let arity = match a.arity {
        ArityArg::Single => Arity::Single,
        ArityArg::Pair => Arity::Pair,
    };
    let rows = cost_table(arity, a.budget, &a.mask_probs, &a.lengths, a.block_size).map_err(input)?;
    match a.format {
        CostFormat::Tsv => print!("{}", cost_tsv(&rows)),
        CostFormat::Json => println!("{}", serde_json::to_string_pretty(&rows).map_err(input)?),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("note 12/a"), "note_12_a");
        assert_eq!(file_stem("..x"), "_..x");
        assert_eq!(file_stem("ok-1.b_2"), "ok-1.b_2");
    }

    #[test]
    fn backend_specs() {
        let b = resolve_backend(Some("constant:0.5:a,b"), None, None).unwrap();
        assert_eq!(b.labels(), ["a", "b"]);
        assert!(matches!(resolve_backend(None, None, None), Err(CliError::Input(_))));
        assert!(matches!(resolve_backend(Some("magic:x"), None, None), Err(CliError::Input(_))));
        assert!(matches!(
            resolve_backend(Some("builtin:/nonexistent/w.json"), None, None),
            Err(CliError::Input(_))
        ));
        // nothing listens on port 9 of localhost
        assert!(matches!(
            resolve_backend(None, Some("http://127.0.0.1:9"), None),
            Err(CliError::Backend(_))
        ));
    }

    #[test]
    fn budgets_from_flags() {
        let doc = DocArgs {
            corpus: "c".into(),
            backend: None,
            block_size: 10,
            seed: Some(1),
            jobs: None,
            format: Format::Json,
            out: "o".into(),
            clean: false,
            gazetteer: None,
            batch_size: None,
        };
        let cli = Cli::parse_from(["blockmask", "explain-pairs", "--corpus", "c", "--out", "o"]);
        let Command::ExplainPairs(p) = cli.command else { panic!() };
        let cfg = msp_config(&doc, &p.msp, Some(p.min_co_mask));
        assert_eq!(cfg.iterations(), 10_000);
        let cli = Cli::parse_from(["blockmask", "explain", "--corpus", "c", "--out", "o"]);
        let Command::Explain(e) = cli.command else { panic!() };
        assert_eq!(msp_config(&doc, &e.msp, None).iterations(), 1000);
        assert!(Cli::try_parse_from([
            "blockmask", "explain", "--corpus", "c", "--out", "o", "--iterations", "5",
            "--expected-masks", "5"
        ])
        .is_err());
        assert!(Cli::try_parse_from(["blockmask", "random", "--corpus", "c", "--out", "o"]).is_err());
    }
}
