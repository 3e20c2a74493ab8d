//! JSON-over-HTTP generation and judge client.
//!
//! Every call is a `POST {base_url}/{route}` with a JSON body:
//!
//! | route       | request fields                              | response            |
//! |-------------|---------------------------------------------|---------------------|
//! | `tag_axes`  | `model, text, candidates[{id, axis, description}]` | `{"tags": [..]}` |
//! | `negative`  | `model, text, pattern_id, description`      | `{"text": ..}` or `{"refusal": true}` |
//! | `positive`  | `model, text, lang, mode`                   | `{"text": ..}`      |
//! | `judge`     | `model, kind, source, candidate`            | `{"score": ..}`     |
//!
//! Timeouts, connection failures, 408, 429 and 5xx are transient and
//! retried by the pipeline; other statuses and malformed bodies are
//! terminal.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use xling_core::corpus::Lang;
use xling_core::mining::{ClientError, GenerationClient, JudgeClient, NegativeOutcome, PairKind, PositiveMode};
use xling_core::typology::ShiftPattern;

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    base_url: String,
    token: Option<String>,
    model: Option<String>,
    judge_model: Option<String>,
}

impl HttpClient {
    pub fn new(
        base_url: &str,
        token: Option<String>,
        model: Option<String>,
        judge_model: Option<String>,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpClient {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            token,
            model,
            judge_model,
        }
    }

    fn post<T: DeserializeOwned>(&self, route: &str, body: &Value) -> Result<T, ClientError> {
        let url = format!("{}/{route}", self.base_url);
        let mut request = self.agent.post(&url).header("accept", "application/json");
        if let Some(token) = &self.token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed => {
                ClientError::Transient(format!("{route}: {e}"))
            }
            other => ClientError::Terminal(format!("{route}: {other}")),
        })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let message = format!("{route}: HTTP {status}");
            return Err(if status == 408 || status == 429 || status >= 500 {
                ClientError::Transient(message)
            } else {
                ClientError::Terminal(message)
            });
        }
        response
            .body_mut()
            .read_json::<T>()
            .map_err(|e| ClientError::Terminal(format!("{route}: malformed response: {e}")))
    }
}

#[derive(Deserialize)]
struct TagsResponse {
    tags: Vec<String>,
}

#[derive(Deserialize)]
struct TextResponse {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    refusal: bool,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

fn mode_str(mode: PositiveMode) -> &'static str {
    match mode {
        PositiveMode::Paraphrase => "paraphrase",
        PositiveMode::Translation => "translation",
    }
}

impl GenerationClient for HttpClient {
    fn tag_axes(&self, text: &str, candidates: &[&ShiftPattern]) -> Result<Vec<String>, ClientError> {
        let candidates: Vec<Value> = candidates
            .iter()
            .map(|p| json!({"id": p.id, "axis": p.axis.as_str(), "description": p.description}))
            .collect();
        let r: TagsResponse = self.post("tag_axes", &json!({"model": self.model, "text": text, "candidates": candidates}))?;
        Ok(r.tags)
    }

    fn make_negative(&self, text: &str, pattern: &ShiftPattern) -> Result<NegativeOutcome, ClientError> {
        let body = json!({
            "model": self.model,
            "text": text,
            "pattern_id": pattern.id,
            "description": pattern.description,
        });
        let r: TextResponse = self.post("negative", &body)?;
        match (r.refusal, r.text) {
            (true, _) => Ok(NegativeOutcome::Refusal),
            (false, Some(t)) => Ok(NegativeOutcome::Variant(t)),
            (false, None) => Err(ClientError::Terminal("negative: response has neither text nor refusal".into())),
        }
    }

    fn make_positive(&self, text: &str, lang: Lang, mode: PositiveMode) -> Result<String, ClientError> {
        let body = json!({"model": self.model, "text": text, "lang": lang.as_str(), "mode": mode_str(mode)});
        let r: TextResponse = self.post("positive", &body)?;
        r.text.ok_or_else(|| ClientError::Terminal("positive: response has no text".into()))
    }
}

impl JudgeClient for HttpClient {
    fn score(&self, kind: PairKind, source: &str, candidate: &str) -> Result<f64, ClientError> {
        let kind = match kind {
            PairKind::Negative => "negative",
            PairKind::Positive => "positive",
        };
        let model = self.judge_model.as_ref().or(self.model.as_ref());
        let body = json!({"model": model, "kind": kind, "source": source, "candidate": candidate});
        let r: ScoreResponse = self.post("judge", &body)?;
        Ok(r.score)
    }
}
