//! Sketch clients: the HTTP chat-completions client with retry/backoff,
//! plus local stand-ins for tests and offline runs.

use std::collections::VecDeque;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::{PipelineError, Sketch};
use crate::decoder::{unconstrained_sample, DecodeConfig, Scorer};
use crate::vocab::Tokenizer;

/// Produces an unconstrained draft for a rendered prompt.
pub trait SketcherClient: Send + Sync {
    fn sketch(&self, prompt: &str) -> Result<Sketch, PipelineError>;
}

/// A raw HTTP exchange: status and parsed JSON body.
#[derive(Debug, Clone)]
pub struct TransportResponse {
    pub status: u16,
    pub body: Value,
}

/// Minimal HTTP POST abstraction so the client's retry logic can be
/// driven by scripted exchanges in tests.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<TransportResponse, PipelineError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<TransportResponse, PipelineError> {
        (**self).post_json(url, bearer, body)
    }
}

/// Live transport over a pooled HTTP agent. Non-success statuses are
/// returned as responses, not errors, so the caller owns retry policy.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        UreqTransport { agent: ureq::Agent::new_with_config(config) }
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<TransportResponse, PipelineError> {
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let response = request.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => PipelineError::Timeout,
            other => PipelineError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let body = response
            .into_body()
            .read_json::<Value>()
            .unwrap_or(Value::Null);
        Ok(TransportResponse { status, body })
    }
}

/// Replays a fixed sequence of exchanges and records every request body.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<TransportResponse, PipelineError>>>,
    requests: Mutex<Vec<Value>>,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<TransportResponse, PipelineError>>) -> Self {
        ScriptedTransport {
            script: Mutex::new(script.into()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Request bodies seen so far, in order.
    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }
}

impl Transport for ScriptedTransport {
    fn post_json(
        &self,
        _url: &str,
        _bearer: Option<&str>,
        body: &Value,
    ) -> Result<TransportResponse, PipelineError> {
        self.requests.lock().unwrap().push(body.clone());
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(PipelineError::Transport("script exhausted".to_string())))
    }
}

/// Chat-completions client with bounded exponential-backoff retries.
///
/// Requests follow the common JSON shape `{model, messages, temperature,
/// max_tokens}`; responses are read from `choices[0].message.content` and
/// `usage`. Rate limiting (429), server errors (5xx), timeouts, and
/// transport failures are retried; other statuses fail immediately.
pub struct HttpSketcher {
    transport: Box<dyn Transport>,
    endpoint: String,
    model: String,
    credential: Option<String>,
    max_attempts: u32,
    backoff_base: Duration,
    temperature: f64,
    max_tokens: u64,
}

impl HttpSketcher {
    pub fn new(
        transport: Box<dyn Transport>,
        endpoint: impl Into<String>,
        model: impl Into<String>,
        credential: Option<String>,
    ) -> Self {
        HttpSketcher {
            transport,
            endpoint: endpoint.into(),
            model: model.into(),
            credential,
            max_attempts: 4,
            backoff_base: Duration::from_millis(250),
            temperature: 0.0,
            max_tokens: 512,
        }
    }

    pub fn with_retry(mut self, max_attempts: u32, backoff_base: Duration) -> Self {
        assert!(max_attempts >= 1, "need at least one attempt");
        self.max_attempts = max_attempts;
        self.backoff_base = backoff_base;
        self
    }

    pub fn with_sampling(mut self, temperature: f64, max_tokens: u64) -> Self {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    fn parse_success(&self, body: &Value) -> Result<Sketch, PipelineError> {
        let text = body["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                PipelineError::BadResponse("missing choices[0].message.content".to_string())
            })?
            .to_string();
        Ok(Sketch {
            text,
            provenance: self.endpoint.clone(),
            prompt_tokens: body["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: body["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        })
    }
}

fn retryable(error: &PipelineError) -> bool {
    matches!(
        error,
        PipelineError::RateLimited
            | PipelineError::Timeout
            | PipelineError::Transport(_)
            | PipelineError::HttpError(500..)
    )
}

impl SketcherClient for HttpSketcher {
    fn sketch(&self, prompt: &str) -> Result<Sketch, PipelineError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        });
        let mut last = PipelineError::Transport("no attempt made".to_string());
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            let outcome = self
                .transport
                .post_json(&self.endpoint, self.credential.as_deref(), &body)
                .and_then(|response| match response.status {
                    200 => self.parse_success(&response.body),
                    429 => Err(PipelineError::RateLimited),
                    status => Err(PipelineError::HttpError(status)),
                });
            match outcome {
                Ok(sketch) => return Ok(sketch),
                Err(error) => {
                    let transient = retryable(&error);
                    last = error;
                    if !transient {
                        return Err(last);
                    }
                }
            }
        }
        Err(last)
    }
}

/// Returns canned sketches chosen by substring match on the prompt.
pub struct MockSketcher {
    /// `(needle, draft)` pairs tried in order against the prompt.
    canned: Vec<(String, String)>,
    fallback: String,
}

impl MockSketcher {
    pub fn new(canned: Vec<(String, String)>, fallback: impl Into<String>) -> Self {
        MockSketcher { canned, fallback: fallback.into() }
    }
}

impl SketcherClient for MockSketcher {
    fn sketch(&self, prompt: &str) -> Result<Sketch, PipelineError> {
        let text = self
            .canned
            .iter()
            .find(|(needle, _)| prompt.contains(needle))
            .map(|(_, draft)| draft.clone())
            .unwrap_or_else(|| self.fallback.clone());
        let completion_tokens = text.split_whitespace().count() as u64;
        Ok(Sketch {
            text,
            provenance: "mock".to_string(),
            prompt_tokens: prompt.split_whitespace().count() as u64,
            completion_tokens,
        })
    }
}

/// Samples a draft from a local scorer — a deterministic, offline
/// stand-in for a remote generator. The sampling seed mixes the
/// configured seed with a hash of the prompt, so distinct prompts get
/// distinct (but reproducible) drafts.
pub struct LocalSketcher {
    scorer: Box<dyn Scorer>,
    tokenizer: Box<dyn Tokenizer>,
    cfg: DecodeConfig,
}

impl LocalSketcher {
    pub fn new(scorer: Box<dyn Scorer>, tokenizer: Box<dyn Tokenizer>, cfg: DecodeConfig) -> Self {
        LocalSketcher { scorer, tokenizer, cfg }
    }
}

impl SketcherClient for LocalSketcher {
    fn sketch(&self, prompt: &str) -> Result<Sketch, PipelineError> {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        prompt.hash(&mut hasher);
        let cfg = DecodeConfig { seed: self.cfg.seed ^ hasher.finish(), ..self.cfg };
        let vocab = self.tokenizer.vocab();
        let tokens = unconstrained_sample(
            self.scorer.as_ref(),
            vocab.len(),
            vocab.eos_id(),
            &self.tokenizer.tokenize_lossy(prompt),
            &cfg,
        )?;
        let text = self.tokenizer.detokenize(&tokens);
        Ok(Sketch {
            text,
            provenance: "mock".to_string(),
            prompt_tokens: prompt.split_whitespace().count() as u64,
            completion_tokens: tokens.len() as u64,
        })
    }
}
