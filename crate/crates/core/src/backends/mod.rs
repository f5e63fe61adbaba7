//! The classifier contract and the backends shipped with the engine.

mod counting;
mod keyword;
mod remote;

use thiserror::Error;

pub use counting::CountingBackend;
pub use keyword::{Interaction, KeywordLogitModel, WeightsFile};
pub use remote::{RemoteBackend, RemoteBackendConfig};

/// Mask token used by the built-in backends unless configured otherwise.
pub const DEFAULT_MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure talking to {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered HTTP {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("malformed response from {url}: {message}")]
    Malformed { url: String, message: String },
    #[error("label set mismatch: {0}")]
    LabelMismatch(String),
    #[error("invalid model weights: {0}")]
    InvalidWeights(String),
    #[error("cannot read model weights: {0}")]
    Io(#[from] std::io::Error),
}

impl BackendError {
    /// True for failures where the peer answered but broke the wire contract:
    /// a non-2xx status (after retries), a schema violation or a label
    /// mismatch.
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            BackendError::Status { .. } | BackendError::Malformed { .. } | BackendError::LabelMismatch(_)
        )
    }
}

/// Anything that maps token sequences to per-label probabilities.
///
/// Implementations must be deterministic and return exactly one row of
/// `labels().len()` probabilities in `[0, 1]` per input sequence, in input
/// order. Backends that cannot serve concurrent calls must override
/// [`is_serial`](Self::is_serial).
pub trait ClassifierBackend: Send + Sync {
    fn labels(&self) -> &[String];

    fn mask_token(&self) -> &str;

    fn predict_batch(&self, batch: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError>;

    fn is_serial(&self) -> bool {
        false
    }

    /// Number of sequences the engine should group into one call.
    fn preferred_batch_size(&self) -> usize {
        32
    }
}

impl<T: ClassifierBackend + ?Sized> ClassifierBackend for &T {
    fn labels(&self) -> &[String] {
        (**self).labels()
    }
    fn mask_token(&self) -> &str {
        (**self).mask_token()
    }
    fn predict_batch(&self, batch: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).predict_batch(batch)
    }
    fn is_serial(&self) -> bool {
        (**self).is_serial()
    }
    fn preferred_batch_size(&self) -> usize {
        (**self).preferred_batch_size()
    }
}

impl<T: ClassifierBackend + ?Sized> ClassifierBackend for Box<T> {
    fn labels(&self) -> &[String] {
        (**self).labels()
    }
    fn mask_token(&self) -> &str {
        (**self).mask_token()
    }
    fn predict_batch(&self, batch: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).predict_batch(batch)
    }
    fn is_serial(&self) -> bool {
        (**self).is_serial()
    }
    fn preferred_batch_size(&self) -> usize {
        (**self).preferred_batch_size()
    }
}

/// Returns the same probability vector for every input.
#[derive(Clone, Debug)]
pub struct ConstantBackend {
    labels: Vec<String>,
    probabilities: Vec<f64>,
    mask_token: String,
}

impl ConstantBackend {
    pub fn new(labels: Vec<String>, probability: f64) -> Result<Self, BackendError> {
        let probabilities = vec![probability; labels.len()];
        Self::with_probabilities(labels, probabilities)
    }

    pub fn with_probabilities(
        labels: Vec<String>,
        probabilities: Vec<f64>,
    ) -> Result<Self, BackendError> {
        if labels.len() != probabilities.len() {
            return Err(BackendError::InvalidWeights(format!(
                "{} labels but {} probabilities",
                labels.len(),
                probabilities.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(BackendError::InvalidWeights(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        Ok(Self {
            labels,
            probabilities,
            mask_token: DEFAULT_MASK_TOKEN.to_owned(),
        })
    }
}

impl ClassifierBackend for ConstantBackend {
    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn predict_batch(&self, batch: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(vec![self.probabilities.clone(); batch.len()])
    }
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fails with [`BackendError::LabelMismatch`] unless `backend` serves exactly
/// `expected`, in order.
pub fn ensure_labels(backend: &dyn ClassifierBackend, expected: &[String]) -> Result<(), BackendError> {
    if backend.labels() != expected {
        return Err(BackendError::LabelMismatch(format!(
            "expected {:?}, backend serves {:?}",
            expected,
            backend.labels()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_backend_ignores_input() {
        let b = ConstantBackend::new(vec!["a".into(), "b".into()], 0.3).unwrap();
        let out = b
            .predict_batch(&[vec!["x"], vec![], vec!["[MASK]", "y"]])
            .unwrap();
        assert_eq!(out, vec![vec![0.3, 0.3]; 3]);
        assert!(ConstantBackend::new(vec!["a".into()], 1.5).is_err());
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(2.0) - 0.8807970779778823).abs() < 1e-15);
        assert!(logistic(-800.0) >= 0.0);
        assert_eq!(logistic(800.0), 1.0);
    }

    #[test]
    fn label_mismatch_is_an_error() {
        let b = ConstantBackend::new(vec!["a".into()], 0.1).unwrap();
        assert!(ensure_labels(&b, &["a".into()]).is_ok());
        let err = ensure_labels(&b, &["b".into()]).unwrap_err();
        assert!(err.is_protocol());
    }
}
