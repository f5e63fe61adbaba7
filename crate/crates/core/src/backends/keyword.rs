use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{logistic, BackendError, ClassifierBackend, DEFAULT_MASK_TOKEN};

/// A pairwise term that adds `weight` to a label's logit when both tokens
/// are present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub tokens: [String; 2],
    pub weight: f64,
}

/// On-disk form of a [`KeywordLogitModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub labels: Vec<String>,
    pub bias: Vec<f64>,
    pub weights: Vec<HashMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactions: Option<Vec<Vec<Interaction>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_token: Option<String>,
}

/// Per-label logistic regression over a bag of tokens.
///
/// `p_l = logistic(bias_l + sum of weight_l(t) over every token t)`, plus any
/// interaction terms whose two tokens both occur. The mask token never
/// carries weight, so masking a block is equivalent to deleting it.
#[derive(Clone, Debug)]
pub struct KeywordLogitModel {
    labels: Vec<String>,
    bias: Vec<f64>,
    /// token -> (label, weight) pairs
    weights: HashMap<String, Vec<(usize, f64)>>,
    interactions: Vec<(usize, Interaction)>,
    mask_token: String,
}

impl KeywordLogitModel {
    pub fn from_weights(file: WeightsFile) -> Result<Self, BackendError> {
        let n = file.labels.len();
        if n == 0 {
            return Err(BackendError::InvalidWeights("no labels".into()));
        }
        if file.bias.len() != n || file.weights.len() != n {
            return Err(BackendError::InvalidWeights(format!(
                "{n} labels, {} biases, {} weight maps",
                file.bias.len(),
                file.weights.len()
            )));
        }
        let mut uniq = HashSet::new();
        if let Some(dup) = file.labels.iter().find(|l| !uniq.insert(*l)) {
            return Err(BackendError::InvalidWeights(format!("duplicate label {dup:?}")));
        }
        if file.bias.iter().any(|b| !b.is_finite()) {
            return Err(BackendError::InvalidWeights("non-finite bias".into()));
        }
        let mask_token = file.mask_token.unwrap_or_else(|| DEFAULT_MASK_TOKEN.to_owned());
        let mut weights: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
        for (label, map) in file.weights.into_iter().enumerate() {
            for (token, w) in map {
                if !w.is_finite() {
                    return Err(BackendError::InvalidWeights(format!(
                        "non-finite weight for {token:?}"
                    )));
                }
                if token == mask_token {
                    continue;
                }
                weights.entry(token).or_default().push((label, w));
            }
        }
        for entries in weights.values_mut() {
            entries.sort_by_key(|(l, _)| *l);
        }
        let mut interactions = Vec::new();
        if let Some(per_label) = file.interactions {
            if per_label.len() != n {
                return Err(BackendError::InvalidWeights(format!(
                    "{n} labels but {} interaction lists",
                    per_label.len()
                )));
            }
            for (label, list) in per_label.into_iter().enumerate() {
                for term in list {
                    if !term.weight.is_finite() {
                        return Err(BackendError::InvalidWeights("non-finite interaction".into()));
                    }
                    if term.tokens.contains(&mask_token) {
                        continue;
                    }
                    interactions.push((label, term));
                }
            }
        }
        Ok(Self {
            labels: file.labels,
            bias: file.bias,
            weights,
            interactions,
            mask_token,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, BackendError> {
        let file: WeightsFile =
            serde_json::from_str(json).map_err(|e| BackendError::InvalidWeights(e.to_string()))?;
        Self::from_weights(file)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Single-label model with one weighted keyword, handy for tests.
    pub fn single_keyword(label: &str, bias: f64, keyword: &str, weight: f64) -> Self {
        Self::from_weights(WeightsFile {
            labels: vec![label.to_owned()],
            bias: vec![bias],
            weights: vec![HashMap::from([(keyword.to_owned(), weight)])],
            interactions: None,
            mask_token: None,
        })
        .expect("valid single-keyword model")
    }

    pub fn logits(&self, tokens: &[&str]) -> Vec<f64> {
        let mut logits = self.bias.clone();
        for tok in tokens {
            if let Some(entries) = self.weights.get(*tok) {
                for &(label, w) in entries {
                    logits[label] += w;
                }
            }
        }
        if !self.interactions.is_empty() {
            let present: HashSet<&str> = tokens.iter().copied().collect();
            for (label, term) in &self.interactions {
                if present.contains(term.tokens[0].as_str()) && present.contains(term.tokens[1].as_str())
                {
                    logits[*label] += term.weight;
                }
            }
        }
        logits
    }

    pub fn predict_one(&self, tokens: &[&str]) -> Vec<f64> {
        self.logits(tokens).into_iter().map(logistic).collect()
    }
}

impl ClassifierBackend for KeywordLogitModel {
    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn predict_batch(&self, batch: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(batch.iter().map(|seq| self.predict_one(seq)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_examples() {
        let m = KeywordLogitModel::single_keyword("afib", -2.0, "amiodarone", 4.0);
        let with = m.predict_batch(&[vec!["on", "amiodarone", "daily"]]).unwrap();
        // logistic(2) = 1 / (1 + e^-2)
        assert!((with[0][0] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((with[0][0] - 0.8808).abs() < 1e-4);
        let masked = m.predict_batch(&[vec!["on", "[MASK]", "daily"]]).unwrap();
        assert!((masked[0][0] - 1.0 / (1.0 + 2.0f64.exp())).abs() < 1e-15);
        assert!((masked[0][0] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn interactions_fire_only_together() {
        let json = r#"{"labels":["and"],"bias":[-4.0],"weights":[{}],
            "interactions":[[{"tokens":["alpha","beta"],"weight":8.0}]]}"#;
        let m = KeywordLogitModel::from_json(json).unwrap();
        let p = |t: &[&str]| m.predict_one(t)[0];
        assert_eq!(p(&["alpha"]), logistic(-4.0));
        assert_eq!(p(&["beta", "x"]), logistic(-4.0));
        assert_eq!(p(&["beta", "alpha"]), logistic(4.0));
    }

    #[test]
    fn mask_token_weight_is_ignored() {
        let json = r#"{"labels":["a"],"bias":[0.0],"weights":[{"[MASK]":5.0}]}"#;
        let m = KeywordLogitModel::from_json(json).unwrap();
        assert_eq!(m.predict_one(&["[MASK]", "[MASK]"]), vec![0.5]);
    }

    #[test]
    fn rejects_inconsistent_weights() {
        for bad in [
            r#"{"labels":[],"bias":[],"weights":[]}"#,
            r#"{"labels":["a"],"bias":[0.0,1.0],"weights":[{}]}"#,
            r#"{"labels":["a","a"],"bias":[0.0,1.0],"weights":[{},{}]}"#,
            r#"{"labels":["a"],"bias":[0.0],"weights":[{}],"interactions":[]}"#,
            r#"{"labels":["a"]}"#,
        ] {
            assert!(KeywordLogitModel::from_json(bad).is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn probabilities_are_bounded(
            bias in proptest::collection::vec(-50.0f64..50.0, 1..4),
            w in -50.0f64..50.0,
            tokens in proptest::collection::vec("[ab]{1,2}|\\[MASK\\]", 0..40),
        ) {
            let n = bias.len();
            let file = WeightsFile {
                labels: (0..n).map(|i| format!("l{i}")).collect(),
                bias,
                weights: (0..n).map(|_| HashMap::from([("a".to_string(), w), ("bb".to_string(), -w)])).collect(),
                interactions: None,
                mask_token: None,
            };
            let m = KeywordLogitModel::from_weights(file).unwrap();
            let seq: Vec<&str> = tokens.iter().map(String::as_str).collect();
            let out = m.predict_batch(&[seq.clone(), seq]).unwrap();
            prop_assert_eq!(out.len(), 2);
            prop_assert_eq!(&out[0], &out[1]);
            prop_assert_eq!(out[0].len(), n);
            for p in &out[0] {
                prop_assert!((0.0..=1.0).contains(p));
            }
        }
    }
}
