//! Sequential vs parallel dispatch for the three hot loops: masked sampling,
//! bootstrap significance and occlusion with sampled context.

use std::hint::black_box;

use blockmask::backends::KeywordLogitModel;
use blockmask::msp::{run_msp_with, Budget, ExecOptions, MspConfig};
use blockmask::significance::{p_values_with, BootstrapConfig, SignificanceMode};
use blockmask::soc::{run_soc_with, SocConfig, UnigramSampler};
use blockmask::{Document, Execution};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn document(n_tokens: usize) -> Document {
    let mut tokens: Vec<String> = (0..n_tokens).map(|i| format!("w{}", i % 97)).collect();
    tokens[n_tokens / 3] = "amiodarone".into();
    Document::new("bench", tokens).unwrap()
}

fn model() -> KeywordLogitModel {
    KeywordLogitModel::from_json(
        r#"{"labels":["a","b"],"bias":[-2,-1],
            "weights":[{"amiodarone":4,"w3":0.2,"w50":-0.1},{"w7":0.5,"w11":0.25}]}"#,
    )
    .unwrap()
}

fn msp(c: &mut Criterion) {
    let doc = document(2_000);
    let model = model();
    let cfg = MspConfig {
        budget: Budget::Iterations(1_000),
        ..Default::default()
    };
    let mut g = c.benchmark_group("msp");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = ExecOptions {
            execution: exec,
            batch_size: None,
        };
        g.bench_function(BenchmarkId::new("run", name), |b| {
            b.iter(|| black_box(run_msp_with(&doc, &model, &cfg, opts).unwrap()))
        });
    }
    g.finish();
}

fn significance(c: &mut Criterion) {
    let doc = document(2_000);
    let rec = run_msp_with(
        &doc,
        &model(),
        &MspConfig {
            budget: Budget::Iterations(1_000),
            ..Default::default()
        },
        ExecOptions::default(),
    )
    .unwrap();
    let boot = BootstrapConfig::default();
    let mut g = c.benchmark_group("significance");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("p_values", name), |b| {
            b.iter(|| black_box(p_values_with(&rec, &boot, SignificanceMode::Corrected, exec).unwrap()))
        });
    }
    g.finish();
}

fn soc(c: &mut Criterion) {
    let doc = document(500);
    let model = model();
    let sampler = UnigramSampler::from_corpus([&doc], 0).unwrap();
    let cfg = SocConfig {
        samples_per_block: 20,
        ..Default::default()
    };
    let mut g = c.benchmark_group("soc");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("run", name), |b| {
            b.iter(|| black_box(run_soc_with(&doc, &model, &sampler, &cfg, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, msp, significance, soc);
criterion_main!(benches);
