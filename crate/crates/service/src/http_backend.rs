//! Language-model backend over a minimal HTTP contract.
//!
//! Each call is one `POST` of `{model, prompt, max_tokens, temperature,
//! logprobs}` to the endpoint. The reply is `{text, top_logprobs?}` where
//! `top_logprobs` maps candidate first tokens to log-probabilities.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use nl2sql_core::llm::prompt::PromptBundle;
use nl2sql_core::llm::{extract_sql, parse_entity_list, GenerationRequest, LlmBackend, LlmError};
use nl2sql_core::model::{Entity, Question};
use nl2sql_core::personalizer::Hint;
use nl2sql_core::MaskedSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Retries after the first attempt on transport errors, 429 and 5xx.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_tokens() -> u32 {
    512
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    200
}

impl HttpSettings {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpSettings {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_ms: default_timeout_ms(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            api_key_env: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    logprobs: bool,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    text: String,
    #[serde(default)]
    top_logprobs: Option<BTreeMap<String, f64>>,
}

pub struct HttpBackend {
    settings: HttpSettings,
    agent: Agent,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = settings.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        HttpBackend { settings, agent, api_key }
    }

    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32, logprobs: bool) -> Result<CompletionResponse, LlmError> {
        let body = CompletionRequest { model: &self.settings.model, prompt, max_tokens, temperature, logprobs };
        let mut last = String::new();
        for attempt in 0..=self.settings.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.settings.backoff_ms << (attempt - 1)));
            }
            let mut req = self.agent.post(&self.settings.endpoint);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match req.send_json(&body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 || status >= 500 {
                        last = format!("status {status}");
                        log::warn!("model endpoint returned {status} (attempt {})", attempt + 1);
                        continue;
                    }
                    if status >= 400 {
                        return Err(LlmError::BackendUnavailable(format!("status {status}")));
                    }
                    return resp
                        .body_mut()
                        .read_json::<CompletionResponse>()
                        .map_err(|e| LlmError::BackendUnavailable(format!("bad response body: {e}")));
                }
                Err(e) => {
                    last = e.to_string();
                    log::warn!("model endpoint unreachable: {e} (attempt {})", attempt + 1);
                }
            }
        }
        Err(LlmError::BackendUnavailable(last))
    }
}

/// Probability of option B, renormalized over the A and B tokens.
pub fn option_b_probability(top: &BTreeMap<String, f64>) -> Result<f64, LlmError> {
    let find = |opt: &str| {
        top.iter()
            .filter(|(tok, _)| tok.trim().trim_end_matches(['.', ')']).eq_ignore_ascii_case(opt))
            .map(|(_, lp)| lp.exp())
            .sum::<f64>()
    };
    let (a, b) = (find("A"), find("B"));
    if a + b <= 0.0 || !(a + b).is_finite() {
        return Err(LlmError::LogitsUnavailable);
    }
    Ok(b / (a + b))
}

fn hint_texts(hints: &[Hint]) -> Vec<String> {
    hints.iter().map(|h| h.text.clone()).collect()
}

impl LlmBackend for HttpBackend {
    fn backend_id(&self) -> String {
        format!("http({}@{}, temperature={})", self.settings.model, self.settings.endpoint, self.settings.temperature)
    }

    fn generate_sql(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError> {
        let mut bundle = PromptBundle::new(&req.question.text, req.schema, hint_texts(req.hints));
        bundle.prior_sqls = req.prior.to_vec();
        let temperature = req.temperature.unwrap_or(self.settings.temperature);
        let resp = self.complete(&bundle.generation_prompt(), temperature, self.settings.max_tokens, false)?;
        let sql = extract_sql(&resp.text);
        if sql.is_empty() {
            return Err(LlmError::GenerationRefused("no SQL in completion".into()));
        }
        Ok(sql)
    }

    fn extract_entities(&self, question: &Question) -> Result<Vec<Entity>, LlmError> {
        let resp = self.complete(&PromptBundle::entity_prompt(&question.text), 0.0, self.settings.max_tokens, false)?;
        Ok(parse_entity_list(&resp.text))
    }

    fn score_yes_no(&self, question: &Question, schema: &MaskedSchema, sql: &str, hints: &[Hint]) -> Result<f64, LlmError> {
        let bundle = PromptBundle::new(&question.text, schema, hint_texts(hints));
        let resp = self.complete(&bundle.scoring_prompt(sql), 0.0, 1, true)?;
        option_b_probability(resp.top_logprobs.as_ref().ok_or(LlmError::LogitsUnavailable)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renormalizes_over_two_options() {
        let top: BTreeMap<String, f64> =
            [("A".to_string(), 0.3f64.ln()), (" B".to_string(), 0.1f64.ln()), ("C".to_string(), 0.6f64.ln())].into();
        assert!((option_b_probability(&top).unwrap() - 0.25).abs() < 1e-12);
        let none: BTreeMap<String, f64> = [("C".to_string(), 0.0)].into();
        assert_eq!(option_b_probability(&none), Err(LlmError::LogitsUnavailable));
    }
}
