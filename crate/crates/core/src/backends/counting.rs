use std::sync::atomic::{AtomicU64, Ordering};

use super::{BackendError, ClassifierBackend};

/// Wraps a backend and counts single-sequence evaluations.
///
/// A batch of `k` sequences counts `k`. Failed calls are not counted.
#[derive(Debug)]
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ClassifierBackend> ClassifierBackend for CountingBackend<B> {
    fn labels(&self) -> &[String] {
        self.inner.labels()
    }

    fn mask_token(&self) -> &str {
        self.inner.mask_token()
    }

    fn predict_batch(&self, batch: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError> {
        let out = self.inner.predict_batch(batch)?;
        self.calls.fetch_add(batch.len() as u64, Ordering::SeqCst);
        Ok(out)
    }

    fn is_serial(&self) -> bool {
        self.inner.is_serial()
    }

    fn preferred_batch_size(&self) -> usize {
        self.inner.preferred_batch_size()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ConstantBackend;

    #[test]
    fn counts_sequences() {
        let b = CountingBackend::new(ConstantBackend::new(vec!["a".into()], 0.5).unwrap());
        assert_eq!(b.calls(), 0);
        b.predict_batch(&vec![vec!["x"]; 7]).unwrap();
        assert_eq!(b.calls(), 7);
        b.reset();
        assert_eq!(b.calls(), 0);
    }

    #[test]
    fn exact_under_concurrency() {
        let b = CountingBackend::new(ConstantBackend::new(vec!["a".into()], 0.5).unwrap());
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..500 {
                        b.predict_batch(&[vec!["x"], vec!["y"], vec!["z"]]).unwrap();
                    }
                });
            }
        });
        assert_eq!(b.calls(), 8 * 500 * 3);
    }
}
