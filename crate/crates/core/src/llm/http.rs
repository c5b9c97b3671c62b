use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendConfig, ChatBackend, ChatMessage, LlmError};

/// OpenAI-compatible chat-completions client with retry and backoff.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    auth_env: String,
    temperature: f64,
    max_retries: u32,
    backoff: Duration,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        let BackendConfig::Http {
            endpoint,
            model,
            auth_env,
            temperature,
            max_retries,
            backoff_ms,
            timeout_secs,
        } = config
        else {
            return Err(LlmError::Config("not an http configuration".into()));
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model,
            auth_env,
            temperature,
            max_retries,
            backoff: Duration::from_millis(backoff_ms),
        })
    }

    fn attempt(&self, body: &Value, key: Option<&str>) -> Result<String, Attempt> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Attempt::Retry(LlmError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(Attempt::Fatal(LlmError::Auth {
                status,
                env_var: self.auth_env.clone(),
            }));
        }
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(LlmError::Transport(format!("HTTP {status}"))));
        }
        if !(200..300).contains(&status) {
            let text = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(LlmError::Transport(format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))));
        }
        let v: Value = resp
            .json()
            .map_err(|e| Attempt::Fatal(LlmError::Transport(format!("invalid response body: {e}"))))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Attempt::Fatal(LlmError::Transport("response has no choices[0].message.content".into())))
    }
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let key = std::env::var(&self.auth_env).ok();
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        });
        let mut attempt = 0;
        loop {
            match self.attempt(&body, key.as_deref()) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempt >= self.max_retries {
                        return Err(e);
                    }
                    log::warn!("chat request failed ({e}); retrying");
                    std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}
