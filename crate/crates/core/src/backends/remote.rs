//! HTTP client for an external inference server.
//!
//! Wire protocol (JSON bodies):
//!
//! ```text
//! GET  /v1/labels   -> {"labels": [..], "mask_token": ".."}
//! POST /v1/predict  {"instances": [[tok, ..], ..]}
//!                   -> {"probabilities": [[p, ..], ..]}
//! ```

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ClassifierBackend};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    pub base_url: String,
    pub batch_size: usize,
    pub timeout: Duration,
    pub retries: u32,
}

impl RemoteBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            batch_size: 32,
            timeout: Duration::from_secs(60),
            retries: 2,
        }
    }
}

#[derive(Deserialize)]
struct LabelsResponse {
    labels: Vec<String>,
    mask_token: String,
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    instances: &'a [Vec<&'a str>],
}

#[derive(Deserialize)]
struct PredictResponse {
    probabilities: Vec<Vec<f64>>,
}

pub struct RemoteBackend {
    config: RemoteBackendConfig,
    agent: ureq::Agent,
    labels: Vec<String>,
    mask_token: String,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("labels", &self.labels)
            .field("mask_token", &self.mask_token)
            .finish()
    }
}

impl RemoteBackend {
    /// Connects and fetches the served label set.
    pub fn connect(mut config: RemoteBackendConfig) -> Result<Self, BackendError> {
        if config.batch_size == 0 {
            return Err(BackendError::InvalidWeights("batch_size must be at least 1".into()));
        }
        while config.base_url.ends_with('/') {
            config.base_url.pop();
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut backend = Self {
            config,
            agent,
            labels: Vec::new(),
            mask_token: String::new(),
        };
        let url = backend.url("/v1/labels");
        let body = backend.with_retries(&url, |agent| agent.get(&url).call())?;
        let parsed: LabelsResponse = parse(&url, &body)?;
        if parsed.labels.is_empty() {
            return Err(BackendError::Malformed {
                url,
                message: "empty label set".into(),
            });
        }
        if parsed.mask_token.is_empty() {
            return Err(BackendError::Malformed {
                url,
                message: "empty mask token".into(),
            });
        }
        backend.labels = parsed.labels;
        backend.mask_token = parsed.mask_token;
        Ok(backend)
    }

    pub fn config(&self) -> &RemoteBackendConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url, path)
    }

    fn with_retries<F>(&self, url: &str, send: F) -> Result<String, BackendError>
    where
        F: Fn(&ureq::Agent) -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let mut attempt = 0;
        loop {
            let err = match send(&self.agent) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let body = resp.body_mut().read_to_string().map_err(|e| {
                        BackendError::Transport {
                            url: url.to_owned(),
                            message: e.to_string(),
                        }
                    });
                    match (status, body) {
                        (200..=299, Ok(body)) => return Ok(body),
                        (200..=299, Err(e)) => e,
                        (s, body) => {
                            let e = BackendError::Status {
                                url: url.to_owned(),
                                status: s,
                                body: body.unwrap_or_default(),
                            };
                            if s < 500 {
                                return Err(e);
                            }
                            e
                        }
                    }
                }
                Err(e) => BackendError::Transport {
                    url: url.to_owned(),
                    message: e.to_string(),
                },
            };
            if attempt >= self.config.retries {
                return Err(err);
            }
            attempt += 1;
            std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
        }
    }

    fn predict_chunk(&self, chunk: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError> {
        let url = self.url("/v1/predict");
        let body = serde_json::to_string(&PredictRequest { instances: chunk })
            .expect("token strings serialize");
        let text = self.with_retries(&url, |agent| {
            agent
                .post(&url)
                .header("Content-Type", "application/json")
                .send(&body)
        })?;
        let parsed: PredictResponse = parse(&url, &text)?;
        if parsed.probabilities.len() != chunk.len() {
            return Err(BackendError::Malformed {
                url,
                message: format!(
                    "sent {} instances, received {} rows",
                    chunk.len(),
                    parsed.probabilities.len()
                ),
            });
        }
        for row in &parsed.probabilities {
            if row.len() != self.labels.len() {
                return Err(BackendError::LabelMismatch(format!(
                    "server advertised {} labels but returned a row of {}",
                    self.labels.len(),
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(BackendError::Malformed {
                    url,
                    message: "probability outside [0, 1]".into(),
                });
            }
        }
        Ok(parsed.probabilities)
    }
}

fn parse<T: for<'de> Deserialize<'de>>(url: &str, body: &str) -> Result<T, BackendError> {
    serde_json::from_str(body).map_err(|e| BackendError::Malformed {
        url: url.to_owned(),
        message: e.to_string(),
    })
}

impl ClassifierBackend for RemoteBackend {
    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn predict_batch(&self, batch: &[Vec<&str>]) -> Result<Vec<Vec<f64>>, BackendError> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(self.config.batch_size) {
            out.extend(self.predict_chunk(chunk)?);
        }
        Ok(out)
    }

    fn preferred_batch_size(&self) -> usize {
        self.config.batch_size
    }
}
