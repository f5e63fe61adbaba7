#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;

use blockmask::backends::{Interaction, KeywordLogitModel, WeightsFile};
use blockmask::Document;

/// `n_blocks` blocks of `b` filler tokens, with `planted` words written into
/// the first token of the listed blocks.
pub fn planted_tokens(n_blocks: usize, b: usize, planted: &[(usize, &str)]) -> Vec<String> {
    let mut tokens: Vec<String> = (0..n_blocks * b).map(|i| format!("w{i}")).collect();
    for &(block, word) in planted {
        tokens[block * b] = word.to_owned();
    }
    tokens
}

pub fn planted_doc(id: &str, n_blocks: usize, b: usize, planted: &[(usize, &str)]) -> Document {
    Document::new(id, planted_tokens(n_blocks, b, planted)).unwrap()
}

/// (label, bias, [(token, weight)])
pub type LabelSpec<'a> = (&'a str, f64, &'a [(&'a str, f64)]);

pub fn keyword_weights(labels: &[LabelSpec]) -> WeightsFile {
    WeightsFile {
        labels: labels.iter().map(|l| l.0.to_owned()).collect(),
        bias: labels.iter().map(|l| l.1).collect(),
        weights: labels
            .iter()
            .map(|l| l.2.iter().map(|(t, w)| (t.to_string(), *w)).collect::<HashMap<_, _>>())
            .collect(),
        interactions: None,
        mask_token: None,
    }
}

/// Single label "y" over two keywords plus an optional joint term.
pub fn two_keyword_model(bias: f64, wa: f64, wb: f64, joint: f64) -> KeywordLogitModel {
    let mut w = keyword_weights(&[("y", bias, &[("alpha", wa), ("beta", wb)])]);
    w.interactions = Some(vec![vec![Interaction {
        tokens: ["alpha".into(), "beta".into()],
        weight: joint,
    }]]);
    KeywordLogitModel::from_weights(w).unwrap()
}

pub fn write_weights(path: &Path, w: &WeightsFile) {
    std::fs::write(path, serde_json::to_string(w).unwrap()).unwrap();
}

pub fn write_corpus(path: &Path, docs: &[(&str, String)]) {
    let lines: Vec<String> = docs
        .iter()
        .map(|(id, text)| serde_json::json!({"id": id, "text": text}).to_string())
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// Two-sided Welch p-value for binary outcomes from first principles: the
/// Student t density integrated by composite Simpson's rule with a
/// Lanczos log-gamma.
pub fn textbook_welch_p(sa: f64, na: f64, sb: f64, nb: f64) -> f64 {
    let (pa, pb) = (sa / na, sb / nb);
    let va = na * pa * (1.0 - pa) / (na - 1.0);
    let vb = nb * pb * (1.0 - pb) / (nb - 1.0);
    let (ea, eb) = (va / na, vb / nb);
    let t = ((pa - pb) / (ea + eb).sqrt()).abs();
    let df = (ea + eb).powi(2) / (ea * ea / (na - 1.0) + eb * eb / (nb - 1.0));
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let density = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let steps = 400_000;
    let h = t / steps as f64;
    let mut s = density(0.0) + density(t);
    for i in 1..steps {
        s += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}
