//! Language-model gateway with live, mock, and replay backends.
//!
//! The rest of the toolkit never talks to a model directly; it hands a prompt
//! to [`Gateway::generate`] and gets the raw completion back, untouched. The
//! gateway owns three interchangeable backends:
//!
//! * **live** — a chat-completions HTTP endpoint (single user message, the
//!   configured sampling parameters);
//! * **mock** — offline stand-ins: a deterministic synthetic responder that
//!   actually reads the prompt and extends the rendered tree, or a scripted
//!   queue of canned responses for tests;
//! * **replay** — responses read back from a record directory, keyed by
//!   prompt fingerprint, so a recorded session can be reproduced exactly,
//!   retries included.
//!
//! Every prompt is fingerprinted with SHA-256 over the model name and the
//! prompt bytes; record files are named by fingerprint plus an occurrence
//! counter, which keeps repeated identical prompts (retry loops) distinct.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("live mode requires an endpoint URL")]
    MissingEndpoint,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned an unusable response: {0}")]
    Protocol(String),
    #[error(
        "replay miss: no recorded response for fingerprint {fingerprint} occurrence {occurrence}"
    )]
    ReplayMiss {
        fingerprint: String,
        occurrence: u32,
    },
    #[error("scripted mock exhausted for fingerprint {fingerprint}")]
    ScriptExhausted { fingerprint: String },
    #[error("record store i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("record store serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which backend serves generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    #[default]
    Mock,
    Replay,
}

impl std::str::FromStr for GatewayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(GatewayMode::Live),
            "mock" => Ok(GatewayMode::Mock),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(format!(
                "unknown mode '{other}', expected live, mock, or replay"
            )),
        }
    }
}

/// Environment variable consulted for the live-endpoint bearer token.
pub const API_KEY_ENV: &str = "PROPKIT_API_KEY";

/// Generation settings shared by every backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub mode: GatewayMode,
    pub model_name: String,
    /// Chat-completions URL; required in live mode only.
    pub endpoint_url: Option<String>,
    /// Optional system message prepended to live requests; none by default.
    pub system_prompt: Option<String>,
    pub temperature: f64,
    pub top_p: f64,
    /// Extra attempts after the first one, per generation slot.
    pub max_retries: u32,
    pub max_new_tokens: u32,
    pub timeout_secs: u64,
    /// Upper bound on concurrent in-flight generations.
    pub concurrency: usize,
    /// Directory for recording responses (live/mock) or replaying them.
    pub record_dir: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            mode: GatewayMode::Mock,
            model_name: "default-model".to_string(),
            endpoint_url: None,
            system_prompt: None,
            temperature: 0.6,
            top_p: 0.9,
            max_retries: 3,
            max_new_tokens: 256,
            timeout_secs: 60,
            concurrency: 4,
            record_dir: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(GatewayError::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidConfig(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.concurrency == 0 {
            return Err(GatewayError::InvalidConfig(
                "concurrency must be at least 1".into(),
            ));
        }
        if self.mode == GatewayMode::Live && self.endpoint_url.is_none() {
            return Err(GatewayError::MissingEndpoint);
        }
        if self.mode == GatewayMode::Replay && self.record_dir.is_none() {
            return Err(GatewayError::InvalidConfig(
                "replay mode requires a record directory".into(),
            ));
        }
        Ok(())
    }
}

/// One completed generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenAttempt {
    pub prompt: String,
    /// The completion exactly as the backend produced it.
    pub raw_output: String,
    pub latency_ms: u64,
    /// 1-based attempt counter within a generation slot.
    pub attempt_no: u32,
}

/// Stable identifier of a prompt under a given model: lowercase hex SHA-256
/// over `model_name`, a zero byte, and the prompt bytes.
pub fn fingerprint(model_name: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_name.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

/// Builds the chat-completions request body sent in live mode.
pub fn build_request_body(config: &GenConfig, prompt: &str) -> serde_json::Value {
    let mut messages = Vec::new();
    if let Some(system) = &config.system_prompt {
        messages.push(serde_json::json!({"role": "system", "content": system}));
    }
    messages.push(serde_json::json!({"role": "user", "content": prompt}));
    serde_json::json!({
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "top_p": config.top_p,
        "max_tokens": config.max_new_tokens,
    })
}

/// Extracts the completion text from a chat-completions response body.
fn extract_completion(body: &serde_json::Value) -> Result<String, GatewayError> {
    body.pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(|s| s.to_string())
        .ok_or_else(|| {
            GatewayError::Protocol("response carries no choices[0].message.content".into())
        })
}

/// On-disk shape of one recorded response.
#[derive(Debug, Serialize, Deserialize)]
struct RecordedResponse {
    fingerprint: String,
    occurrence: u32,
    model_name: String,
    prompt: String,
    raw_output: String,
}

/// Directory-backed store of responses, keyed by prompt fingerprint and a
/// per-fingerprint occurrence counter so identical prompts replay in call
/// order. Writes are serialized.
struct RecordStore {
    dir: PathBuf,
    counters: Mutex<HashMap<String, u32>>,
}

impl RecordStore {
    fn new(dir: &Path) -> Result<Self, GatewayError> {
        std::fs::create_dir_all(dir)?;
        Ok(RecordStore {
            dir: dir.to_path_buf(),
            counters: Mutex::new(HashMap::new()),
        })
    }

    fn next_occurrence(&self, fp: &str) -> u32 {
        let mut counters = self.counters.lock().expect("record store lock poisoned");
        let counter = counters.entry(fp.to_string()).or_insert(0);
        let occurrence = *counter;
        *counter += 1;
        occurrence
    }

    fn file_path(&self, fp: &str, occurrence: u32) -> PathBuf {
        self.dir.join(format!("{fp}.{occurrence}.json"))
    }

    fn record(
        &self,
        config: &GenConfig,
        fp: &str,
        prompt: &str,
        raw_output: &str,
    ) -> Result<(), GatewayError> {
        let occurrence = self.next_occurrence(fp);
        let record = RecordedResponse {
            fingerprint: fp.to_string(),
            occurrence,
            model_name: config.model_name.clone(),
            prompt: prompt.to_string(),
            raw_output: raw_output.to_string(),
        };
        let mut body = serde_json::to_string_pretty(&record)?;
        body.push('\n');
        std::fs::write(self.file_path(fp, occurrence), body)?;
        Ok(())
    }

    fn replay(&self, fp: &str) -> Result<String, GatewayError> {
        let occurrence = self.next_occurrence(fp);
        let path = self.file_path(fp, occurrence);
        let text = std::fs::read_to_string(&path).map_err(|_| GatewayError::ReplayMiss {
            fingerprint: fp.to_string(),
            occurrence,
        })?;
        let record: RecordedResponse = serde_json::from_str(&text)?;
        Ok(record.raw_output)
    }
}

/// Canned responses for the scripted mock: per-fingerprint queues take
/// precedence, then the global queue.
#[derive(Debug, Default)]
pub struct MockScript {
    pub global: VecDeque<String>,
    pub by_fingerprint: HashMap<String, VecDeque<String>>,
}

impl MockScript {
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockScript {
            global: responses.into_iter().map(Into::into).collect(),
            by_fingerprint: HashMap::new(),
        }
    }

    fn pop(&mut self, fp: &str) -> Option<String> {
        if let Some(queue) = self.by_fingerprint.get_mut(fp) {
            if let Some(response) = queue.pop_front() {
                return Some(response);
            }
        }
        self.global.pop_front()
    }
}

/// Phrase bank for the synthetic mock; picked by fingerprint, so outputs are
/// stable across runs and platforms.
const SYNTHETIC_PHRASES: &[&str] = &[
    "I doubt this is accurate, the source seems thin",
    "This matches what local outlets reported earlier",
    "Can anyone verify this claim independently",
    "Sharing this with my followers right now",
    "The original post already walked part of this back",
    "More context emerged in the replies below",
    "This needs a citation before anyone believes it",
    "Exactly what I expected would happen next",
];

fn fingerprint_seed(fp: &str) -> u64 {
    u64::from_str_radix(&fp[..16], 16).unwrap_or(0)
}

/// Pulls the rendered tree array back out of an instruction prompt.
fn parse_prompt_tree(prompt: &str) -> Option<Vec<serde_json::Value>> {
    let rest = prompt.strip_prefix("Given the propagation tree: ")?;
    let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<serde_json::Value>();
    match stream.next()? {
        Ok(value) => value.as_array().cloned(),
        Err(_) => None,
    }
}

/// Deterministic offline responder: parses the tree out of the prompt and
/// answers with a well-formed next node attached to a fingerprint-chosen
/// parent.
fn synthetic_response(fp: &str, prompt: &str) -> String {
    let seed = fingerprint_seed(fp);
    let tag = &fp[..8];
    let (node_count, parent) = match parse_prompt_tree(prompt) {
        Some(nodes) if !nodes.is_empty() => {
            let n = nodes.len();
            ((n) as u64, (seed / 7) % n as u64)
        }
        _ => (1, 0),
    };
    let phrase = SYNTHETIC_PHRASES[(seed % SYNTHETIC_PHRASES.len() as u64) as usize];
    format!(
        "{{\"parent node index\": {parent}, \"node index\": {node_count}, \
         \"content\": \"{phrase} ({tag})\"}}"
    )
}

enum Backend {
    Live {
        client: reqwest::blocking::Client,
        endpoint: String,
    },
    SyntheticMock,
    ScriptedMock(Mutex<MockScript>),
    Replay,
}

/// Counting semaphore bounding concurrent in-flight generations.
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Self {
        Gate {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut permits = self.permits.lock().expect("gate lock poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("gate lock poisoned");
        }
        *permits -= 1;
        drop(permits);
        let result = f();
        *self.permits.lock().expect("gate lock poisoned") += 1;
        self.available.notify_one();
        result
    }
}

/// The model gateway. Thread-safe: one instance can serve concurrent
/// enhancement runs, bounded by the configured concurrency cap.
pub struct Gateway {
    config: GenConfig,
    backend: Backend,
    store: Option<RecordStore>,
    gate: Gate,
}

impl Gateway {
    /// Builds a gateway for the configured mode. Mock mode gets the
    /// deterministic synthetic responder; use [`Gateway::with_mock_script`]
    /// for canned responses.
    pub fn new(config: GenConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend = match config.mode {
            GatewayMode::Live => {
                let endpoint = config
                    .endpoint_url
                    .clone()
                    .ok_or(GatewayError::MissingEndpoint)?;
                let client = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(config.timeout_secs))
                    .build()
                    .map_err(|e| GatewayError::Transport(e.to_string()))?;
                Backend::Live { client, endpoint }
            }
            GatewayMode::Mock => Backend::SyntheticMock,
            GatewayMode::Replay => Backend::Replay,
        };
        Self::assemble(config, backend)
    }

    /// A mock-mode gateway that serves scripted responses.
    pub fn with_mock_script(config: GenConfig, script: MockScript) -> Result<Self, GatewayError> {
        let mut config = config;
        config.mode = GatewayMode::Mock;
        config.validate()?;
        Self::assemble(config, Backend::ScriptedMock(Mutex::new(script)))
    }

    fn assemble(config: GenConfig, backend: Backend) -> Result<Self, GatewayError> {
        let store = match (&config.record_dir, config.mode) {
            (Some(dir), _) => Some(RecordStore::new(dir)?),
            (None, _) => None,
        };
        let gate = Gate::new(config.concurrency.max(1));
        Ok(Gateway {
            config,
            backend,
            store,
            gate,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn mode(&self) -> GatewayMode {
        self.config.mode
    }

    /// Fingerprint of a prompt under this gateway's model name.
    pub fn fingerprint(&self, prompt: &str) -> String {
        fingerprint(&self.config.model_name, prompt)
    }

    /// Runs one generation. The raw completion is returned exactly as the
    /// backend produced it; in live and mock modes it is also recorded when a
    /// record directory is configured.
    pub fn generate(&self, prompt: &str, attempt_no: u32) -> Result<GenAttempt, GatewayError> {
        let fp = self.fingerprint(prompt);
        let started = Instant::now();
        let raw_output = match &self.backend {
            Backend::Replay => {
                let store = self.store.as_ref().expect("replay mode always has a store");
                store.replay(&fp)?
            }
            Backend::SyntheticMock => {
                let output = synthetic_response(&fp, prompt);
                self.maybe_record(&fp, prompt, &output)?;
                output
            }
            Backend::ScriptedMock(script) => {
                let output = script
                    .lock()
                    .expect("mock script lock poisoned")
                    .pop(&fp)
                    .ok_or_else(|| GatewayError::ScriptExhausted {
                        fingerprint: fp.clone(),
                    })?;
                self.maybe_record(&fp, prompt, &output)?;
                output
            }
            Backend::Live { client, endpoint } => {
                let output = self.gate.run(|| self.live_call(client, endpoint, prompt))?;
                self.maybe_record(&fp, prompt, &output)?;
                output
            }
        };
        Ok(GenAttempt {
            prompt: prompt.to_string(),
            raw_output,
            latency_ms: started.elapsed().as_millis() as u64,
            attempt_no,
        })
    }

    fn maybe_record(&self, fp: &str, prompt: &str, raw_output: &str) -> Result<(), GatewayError> {
        if let Some(store) = &self.store {
            store.record(&self.config, fp, prompt, raw_output)?;
        }
        Ok(())
    }

    fn live_call(
        &self,
        client: &reqwest::blocking::Client,
        endpoint: &str,
        prompt: &str,
    ) -> Result<String, GatewayError> {
        let body = build_request_body(&self.config, prompt);
        let mut request = client.post(endpoint).json(&body);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                request = request.bearer_auth(key);
            }
        }
        let response = request
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(GatewayError::Protocol(format!(
                "endpoint returned HTTP {status}"
            )));
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| GatewayError::Protocol(e.to_string()))?;
        extract_completion(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{parse_candidate, render_next_node_instruction, NodeTriple, TemplateId};

    #[test]
    fn defaults_match_the_pinned_decoding_settings() {
        let config = GenConfig::default();
        assert_eq!(config.temperature, 0.6);
        assert_eq!(config.top_p, 0.9);
        assert_eq!(config.max_retries, 3);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn config_bounds_are_enforced() {
        let mut config = GenConfig {
            temperature: 0.0,
            ..GenConfig::default()
        };
        assert!(config.validate().is_err());
        config.temperature = 0.7;
        config.top_p = 1.2;
        assert!(config.validate().is_err());
        config.top_p = 1.0;
        assert!(config.validate().is_ok());
        config.mode = GatewayMode::Live;
        assert!(matches!(
            config.validate(),
            Err(GatewayError::MissingEndpoint)
        ));
        config.mode = GatewayMode::Replay;
        assert!(config.validate().is_err());
    }

    #[test]
    fn fingerprint_is_frozen_and_input_sensitive() {
        assert_eq!(
            fingerprint("default-model", "hello"),
            "999d934f9e75f1bf24714d7d39d1a9a2b07d444a615d4be7bf001c5cca183877"
        );
        assert_ne!(
            fingerprint("default-model", "hello"),
            fingerprint("other", "hello")
        );
        assert_ne!(
            fingerprint("default-model", "hello"),
            fingerprint("default-model", "hello!")
        );
    }

    #[test]
    fn request_body_carries_sampling_parameters() {
        let config = GenConfig::default();
        let body = build_request_body(&config, "ping");
        assert_eq!(body["temperature"], 0.6);
        assert_eq!(body["top_p"], 0.9);
        assert_eq!(body["model"], "default-model");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "ping");

        let with_system = GenConfig {
            system_prompt: Some("be terse".into()),
            ..GenConfig::default()
        };
        let body = build_request_body(&with_system, "ping");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["role"], "user");
    }

    #[test]
    fn completion_extraction_requires_the_standard_shape() {
        let good = serde_json::json!({"choices": [{"message": {"content": "out"}}]});
        assert_eq!(extract_completion(&good).unwrap(), "out");
        let bad = serde_json::json!({"choices": []});
        assert!(extract_completion(&bad).is_err());
    }

    #[test]
    fn scripted_mock_pops_in_order_and_exhausts() {
        let gateway = Gateway::with_mock_script(
            GenConfig::default(),
            MockScript::from_responses(["first", "second"]),
        )
        .unwrap();
        assert_eq!(gateway.generate("p", 1).unwrap().raw_output, "first");
        assert_eq!(gateway.generate("p", 2).unwrap().raw_output, "second");
        assert!(matches!(
            gateway.generate("p", 3),
            Err(GatewayError::ScriptExhausted { .. })
        ));
    }

    #[test]
    fn per_fingerprint_scripts_take_precedence() {
        let config = GenConfig::default();
        let fp = fingerprint(&config.model_name, "special");
        let mut script = MockScript::from_responses(["global"]);
        script
            .by_fingerprint
            .insert(fp, VecDeque::from(["pinned".to_string()]));
        let gateway = Gateway::with_mock_script(config, script).unwrap();
        assert_eq!(gateway.generate("special", 1).unwrap().raw_output, "pinned");
        assert_eq!(gateway.generate("special", 1).unwrap().raw_output, "global");
    }

    #[test]
    fn synthetic_mock_extends_the_prompted_tree() {
        let gateway = Gateway::new(GenConfig::default()).unwrap();
        let sequence = vec![
            NodeTriple::new(None, 0, "news item"),
            NodeTriple::new(Some(0), 1, "first reply"),
        ];
        let prompt = render_next_node_instruction(&sequence, TemplateId::P1);
        let attempt = gateway.generate(&prompt, 1).unwrap();
        let candidate = parse_candidate(&attempt.raw_output).unwrap();
        assert_eq!(candidate.node_index, 2);
        assert!(candidate.parent_index < 2);
        assert!(candidate.content.split_whitespace().count() >= 2);
        // Determinism: same prompt, same output.
        assert_eq!(
            gateway.generate(&prompt, 2).unwrap().raw_output,
            attempt.raw_output
        );
    }

    #[test]
    fn record_then_replay_reproduces_the_response_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let record_config = GenConfig {
            record_dir: Some(dir.path().to_path_buf()),
            ..GenConfig::default()
        };
        let recorder = Gateway::with_mock_script(
            record_config.clone(),
            MockScript::from_responses(["alpha", "beta", "gamma"]),
        )
        .unwrap();
        // The same prompt twice, then a different one: occurrences must be
        // kept apart.
        let first = recorder.generate("same prompt", 1).unwrap().raw_output;
        let second = recorder.generate("same prompt", 2).unwrap().raw_output;
        let third = recorder.generate("other prompt", 1).unwrap().raw_output;

        let replay_config = GenConfig {
            mode: GatewayMode::Replay,
            ..record_config
        };
        let replayer = Gateway::new(replay_config).unwrap();
        assert_eq!(
            replayer.generate("same prompt", 1).unwrap().raw_output,
            first
        );
        assert_eq!(
            replayer.generate("same prompt", 2).unwrap().raw_output,
            second
        );
        assert_eq!(
            replayer.generate("other prompt", 1).unwrap().raw_output,
            third
        );
        assert!(matches!(
            replayer.generate("never recorded", 1),
            Err(GatewayError::ReplayMiss { .. })
        ));
    }

    #[test]
    fn replay_mode_requires_a_store() {
        let config = GenConfig {
            mode: GatewayMode::Replay,
            record_dir: None,
            ..GenConfig::default()
        };
        assert!(Gateway::new(config).is_err());
    }
}
