//! OpenAI-compatible chat-completions client.
//!
//! Speaks the `/chat/completions` wire format over blocking HTTP, which most
//! local inference servers (vLLM, llama.cpp, ollama) and hosted APIs accept.
//! Transient failures (transport errors, 429, 5xx) retry with exponential
//! backoff; other HTTP errors surface the response body. An optional
//! transcript file captures every call as one JSONL line for offline audit.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use ureq::Agent;

use super::{approx_token_count, Backend, GenerationRequest, GenerationResponse, Usage};
use crate::error::{Error, Result};

/// Connection settings for [`HttpBackend`].
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// API root, e.g. `http://localhost:8000/v1` or `https://api.openai.com/v1`.
    pub base_url: String,
    /// Model name sent with every request.
    pub model: String,
    /// Bearer token. When `None`, the environment variable named by
    /// `api_key_env` is consulted; if that is also unset, no Authorization
    /// header is sent (local servers usually need none).
    pub api_key: Option<String>,
    /// Environment variable to read the bearer token from.
    pub api_key_env: String,
    /// Whole-call timeout.
    pub timeout: Duration,
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    /// Initial backoff; doubles per retry.
    pub retry_backoff: Duration,
    /// When set, every call appends one JSONL line here.
    pub transcript_path: Option<PathBuf>,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout: Duration::from_secs(120),
            max_retries: 2,
            retry_backoff: Duration::from_millis(250),
            transcript_path: None,
        }
    }
}

/// Blocking chat-completions client.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: Agent,
    endpoint: String,
    bearer: Option<String>,
    transcript: Option<Mutex<std::fs::File>>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let endpoint = format!(
            "{}/chat/completions",
            config.base_url.trim_end_matches('/')
        );
        let bearer = config
            .api_key
            .clone()
            .or_else(|| std::env::var(&config.api_key_env).ok())
            .filter(|k| !k.is_empty());
        let transcript = match &config.transcript_path {
            Some(path) => {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                Some(Mutex::new(
                    OpenOptions::new().create(true).append(true).open(path)?,
                ))
            }
            None => None,
        };
        Ok(HttpBackend {
            config,
            agent,
            endpoint,
            bearer,
            transcript,
        })
    }

    fn request_body(&self, request: &GenerationRequest) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.prompt}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "n": request.n.max(1),
            "temperature": request.temperature,
        });
        if let Some(max_tokens) = request.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        body
    }

    /// One POST attempt. `Ok(Err(..))` is a retryable failure; `Err(..)` is
    /// terminal.
    fn attempt(&self, body: &serde_json::Value) -> std::result::Result<ChatResponse, (bool, Error)> {
        let mut builder = self.agent.post(&self.endpoint);
        if let Some(bearer) = &self.bearer {
            builder = builder.header("Authorization", format!("Bearer {bearer}"));
        }
        let mut response = builder
            .send_json(body)
            .map_err(|e| (true, Error::Backend(format!("transport error: {e}"))))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, Error::Backend(format!("failed reading response body: {e}"))))?;
        if status == 429 || status >= 500 {
            return Err((
                true,
                Error::Backend(format!("HTTP {status}: {}", snippet(&text))),
            ));
        }
        if !(200..300).contains(&status) {
            return Err((
                false,
                Error::Backend(format!("HTTP {status}: {}", snippet(&text))),
            ));
        }
        serde_json::from_str(&text).map_err(|e| {
            (
                false,
                Error::Backend(format!(
                    "unparseable chat-completions response ({e}): {}",
                    snippet(&text)
                )),
            )
        })
    }

    fn record_transcript(&self, request: &GenerationRequest, response: &GenerationResponse) {
        if let Some(file) = &self.transcript {
            let line = json!({
                "completion_tokens": response.usage.completion_tokens,
                "model": response.model,
                "prompt": request.prompt,
                "prompt_tokens": response.usage.prompt_tokens,
                "system": request.system,
                "temperature": request.temperature,
                "texts": response.texts,
            });
            if let Ok(mut f) = file.lock() {
                // Transcripts are best effort; a full disk must not kill a run.
                let _ = writeln!(f, "{line}");
            }
        }
    }
}

fn snippet(text: &str) -> String {
    const LIMIT: usize = 400;
    if text.len() <= LIMIT {
        text.to_string()
    } else {
        let mut end = LIMIT;
        while !text.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &text[..end])
    }
}

impl Backend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        let body = self.request_body(request);
        let mut last_error = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.retry_backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(parsed) => {
                    let texts: Vec<String> = parsed
                        .choices
                        .into_iter()
                        .map(|c| c.message.content.unwrap_or_default())
                        .collect();
                    if texts.is_empty() {
                        return Err(Error::Backend(
                            "chat-completions response had no choices".to_string(),
                        ));
                    }
                    let usage = match parsed.usage {
                        Some(u) => Usage {
                            prompt_tokens: u.prompt_tokens,
                            completion_tokens: u.completion_tokens,
                        },
                        // Some local servers omit usage; approximate it.
                        None => Usage {
                            prompt_tokens: approx_token_count(&request.prompt),
                            completion_tokens: texts.iter().map(|t| approx_token_count(t)).sum(),
                        },
                    };
                    let response = GenerationResponse {
                        texts,
                        usage,
                        model: parsed.model.unwrap_or_else(|| self.config.model.clone()),
                    };
                    self.record_transcript(request, &response);
                    return Ok(response);
                }
                Err((retryable, err)) => {
                    if !retryable {
                        return Err(err);
                    }
                    last_error = Some(err);
                }
            }
        }
        Err(last_error.unwrap_or_else(|| Error::Backend("request failed".to_string())))
    }

    fn name(&self) -> &str {
        "http"
    }

    fn default_model(&self) -> &str {
        &self.config.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    struct Captured {
        body: serde_json::Value,
        authorization: Option<String>,
    }

    /// One-thread HTTP stub: serves the scripted (status, body) pairs in
    /// order, one per connection, capturing each request.
    fn spawn_server(
        responses: Vec<(u16, String)>,
    ) -> (String, Arc<Mutex<Vec<Captured>>>, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let captured = Arc::new(Mutex::new(Vec::new()));
        let captured_in = captured.clone();
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut content_length = 0usize;
                let mut authorization = None;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                    if let Some(v) = line
                        .strip_prefix("Authorization:")
                        .or_else(|| line.strip_prefix("authorization:"))
                    {
                        authorization = Some(v.trim().to_string());
                    }
                }
                let mut buf = vec![0u8; content_length];
                reader.read_exact(&mut buf).unwrap();
                captured_in.lock().unwrap().push(Captured {
                    body: serde_json::from_slice(&buf).unwrap(),
                    authorization,
                });
                let mut stream = reader.into_inner();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), captured, handle)
    }

    fn ok_body(texts: &[&str]) -> String {
        let choices: Vec<_> = texts
            .iter()
            .map(|t| json!({"message": {"role": "assistant", "content": t}}))
            .collect();
        json!({
            "choices": choices,
            "model": "served-model",
            "usage": {"prompt_tokens": 11, "completion_tokens": 7}
        })
        .to_string()
    }

    fn backend(base_url: &str) -> HttpBackend {
        let mut config = HttpBackendConfig::new(base_url, "test-model");
        config.api_key = Some("sk-test".to_string());
        config.retry_backoff = Duration::from_millis(1);
        config.timeout = Duration::from_secs(5);
        HttpBackend::new(config).unwrap()
    }

    #[test]
    fn sends_chat_completions_request_and_parses_reply() {
        let (url, captured, handle) = spawn_server(vec![(200, ok_body(&["answer one"]))]);
        let b = backend(&url);
        let response = b
            .generate(
                &GenerationRequest::new("the prompt")
                    .with_system("be terse")
                    .with_n(1)
                    .with_temperature(0.8),
            )
            .unwrap();
        handle.join().unwrap();
        assert_eq!(response.texts, vec!["answer one"]);
        assert_eq!(response.model, "served-model");
        assert_eq!(response.usage.prompt_tokens, 11);
        assert_eq!(response.usage.completion_tokens, 7);

        let captured = captured.lock().unwrap();
        let req = &captured[0].body;
        assert_eq!(req["model"], "test-model");
        assert_eq!(req["n"], 1);
        assert_eq!(req["messages"][0]["role"], "system");
        assert_eq!(req["messages"][1]["content"], "the prompt");
        assert_eq!(
            captured[0].authorization.as_deref(),
            Some("Bearer sk-test")
        );
    }

    #[test]
    fn multi_sample_response_returns_all_choices() {
        let (url, _captured, handle) = spawn_server(vec![(200, ok_body(&["a", "b", "c"]))]);
        let b = backend(&url);
        let response = b.generate(&GenerationRequest::new("p").with_n(3)).unwrap();
        handle.join().unwrap();
        assert_eq!(response.texts, vec!["a", "b", "c"]);
    }

    #[test]
    fn retries_on_server_error_then_succeeds() {
        let (url, captured, handle) = spawn_server(vec![
            (500, "{\"error\": \"overloaded\"}".to_string()),
            (200, ok_body(&["recovered"])),
        ]);
        let b = backend(&url);
        let response = b.generate(&GenerationRequest::new("p")).unwrap();
        handle.join().unwrap();
        assert_eq!(response.texts, vec!["recovered"]);
        assert_eq!(captured.lock().unwrap().len(), 2);
    }

    #[test]
    fn client_error_is_terminal_and_carries_body() {
        let (url, captured, handle) =
            spawn_server(vec![(400, "{\"error\": \"bad model name\"}".to_string())]);
        let b = backend(&url);
        let err = b.generate(&GenerationRequest::new("p")).unwrap_err();
        handle.join().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("400") && msg.contains("bad model name"), "{msg}");
        // No retry happened.
        assert_eq!(captured.lock().unwrap().len(), 1);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let err_body = "{\"error\": \"still down\"}".to_string();
        let (url, captured, handle) = spawn_server(vec![
            (503, err_body.clone()),
            (503, err_body.clone()),
            (503, err_body),
        ]);
        let b = backend(&url); // max_retries = 2 -> 3 attempts
        let err = b.generate(&GenerationRequest::new("p")).unwrap_err();
        handle.join().unwrap();
        assert!(err.to_string().contains("503"), "{err}");
        assert_eq!(captured.lock().unwrap().len(), 3);
    }

    #[test]
    fn missing_usage_falls_back_to_approximate_counts() {
        let body = json!({
            "choices": [{"message": {"role": "assistant", "content": "three short words"}}]
        })
        .to_string();
        let (url, _captured, handle) = spawn_server(vec![(200, body)]);
        let b = backend(&url);
        let response = b.generate(&GenerationRequest::new("one two")).unwrap();
        handle.join().unwrap();
        assert_eq!(response.usage.prompt_tokens, 2);
        assert_eq!(response.usage.completion_tokens, 3);
        // Model falls back to the configured one.
        assert_eq!(response.model, "test-model");
    }

    #[test]
    fn transcript_records_one_line_per_call() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcript.jsonl");
        let (url, _captured, handle) =
            spawn_server(vec![(200, ok_body(&["x"])), (200, ok_body(&["y"]))]);
        let mut config = HttpBackendConfig::new(&url, "test-model");
        config.retry_backoff = Duration::from_millis(1);
        config.transcript_path = Some(path.clone());
        let b = HttpBackend::new(config).unwrap();
        b.generate(&GenerationRequest::new("p1")).unwrap();
        b.generate(&GenerationRequest::new("p2")).unwrap();
        handle.join().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["prompt"], "p1");
        assert_eq!(first["texts"][0], "x");
    }
}
