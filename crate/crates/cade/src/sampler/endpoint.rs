//! Chat endpoints: the trait, an OpenAI-compatible HTTP client, and an
//! offline synthetic endpoint for demos and tests.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};

/// One chat-completion request.
#[derive(Debug, Clone)]
pub struct ChatCall<'a> {
    pub model: &'a str,
    pub system: &'a str,
    pub user: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: &'a [String],
}

/// Anything that can answer a chat call with a text reply.
pub trait ChatEndpoint: Sync {
    fn chat(&self, call: &ChatCall) -> Result<String>;
}

/// OpenAI-compatible chat-completions client.
///
/// Posts to `{base_url}/chat/completions` with system and user messages.
/// The API key is read from an environment variable so secrets stay out of
/// config files.
pub struct HttpEndpoint {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpEndpoint {
    pub fn new(base_url: &str, api_key_env: Option<&str>) -> Result<Self> {
        let api_key = match api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(key) => Some(key),
                Err(_) => return Err(Error::Config(format!("API key variable {var} is not set"))),
            },
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(std::time::Duration::from_secs(120))
            .build();
        Ok(HttpEndpoint {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            agent,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl ChatEndpoint for HttpEndpoint {
    fn chat(&self, call: &ChatCall) -> Result<String> {
        let body = json!({
            "model": call.model,
            "messages": [
                {"role": "system", "content": call.system},
                {"role": "user", "content": call.user},
            ],
            "temperature": call.temperature,
            "max_tokens": call.max_tokens,
            "stop": if call.stop.is_empty() { serde_json::Value::Null } else { json!(call.stop) },
        });
        let url = format!("{}/chat/completions", self.base_url);
        let mut request = self
            .agent
            .post(&url)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = request.send_string(&body.to_string());
        match response {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| Error::Endpoint {
                    status: None,
                    message: format!("unreadable response body: {e}"),
                })?;
                let parsed: ChatResponse =
                    serde_json::from_str(&text).map_err(|e| Error::Endpoint {
                        status: None,
                        message: format!("malformed response body: {e}"),
                    })?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content)
                    .ok_or(Error::Endpoint {
                        status: None,
                        message: "response carried no choices".into(),
                    })
            }
            Err(ureq::Error::Status(status, resp)) => Err(Error::Endpoint {
                status: Some(status),
                message: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(Error::Endpoint {
                status: None,
                message: t.to_string(),
            }),
        }
    }
}

/// Offline endpoint that samples ratings from a softmax over fixed scores.
///
/// The call temperature controls the sharpness: at temperature zero the
/// highest-scoring rating is returned deterministically, and higher
/// temperatures flatten the distribution toward uniform. Useful for demos
/// and for exercising the grid search without a live model.
pub struct BoltzmannEndpoint {
    scores: [f64; 5],
    rng: Mutex<ChaCha12Rng>,
}

impl BoltzmannEndpoint {
    pub fn new(scores: [f64; 5], seed: u64) -> Self {
        BoltzmannEndpoint {
            scores,
            rng: Mutex::new(ChaCha12Rng::seed_from_u64(seed)),
        }
    }

    /// Scores peaked at the given rating, falling off linearly.
    pub fn peaked_at(rating: u8, seed: u64) -> Self {
        let mut scores = [0.0; 5];
        for (i, s) in scores.iter_mut().enumerate() {
            *s = -((i as f64 + 1.0) - f64::from(rating)).abs();
        }
        Self::new(scores, seed)
    }

    fn sample(&self, temperature: f64) -> u8 {
        if temperature <= 0.0 {
            let mut best = 0;
            for i in 1..5 {
                if self.scores[i] > self.scores[best] {
                    best = i;
                }
            }
            return best as u8 + 1;
        }
        let max = self
            .scores
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self
            .scores
            .iter()
            .map(|s| ((s - max) / temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut draw = self.rng.lock().unwrap().random_range(0.0..total);
        for (i, w) in weights.iter().enumerate() {
            if draw < *w {
                return i as u8 + 1;
            }
            draw -= w;
        }
        5
    }
}

impl ChatEndpoint for BoltzmannEndpoint {
    fn chat(&self, call: &ChatCall) -> Result<String> {
        Ok(format!("Rating: {}", self.sample(call.temperature)))
    }
}
