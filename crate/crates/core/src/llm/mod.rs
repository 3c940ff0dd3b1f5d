//! Language-model capabilities behind one interface, plus the two
//! generation baselines (repeated sampling and forced diversity).

mod mock;
pub mod prompt;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use mock::{GoldPreference, LinkEntry, MockBackend, MockOracle, SqlTemplate, WeightedColumn};

use crate::model::{Entity, Question};
use crate::personalizer::Hint;
use crate::schema::MaskedSchema;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("language model backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("generation refused: {0}")]
    GenerationRefused(String),
    #[error("backend exposes no token probabilities")]
    LogitsUnavailable,
    #[error("invalid mock oracle: {0}")]
    InvalidOracle(String),
}

/// One SQL generation call.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub schema: &'a MaskedSchema,
    pub question: &'a Question,
    pub hints: &'a [Hint],
    /// Earlier candidates the answer must differ from; empty outside the
    /// forced-diversity baseline.
    pub prior: &'a [String],
    /// `None` uses the backend's configured temperature.
    pub temperature: Option<f64>,
    /// Index of this call among repeated samples for the same input.
    pub sample: u32,
}

impl<'a> GenerationRequest<'a> {
    pub fn new(schema: &'a MaskedSchema, question: &'a Question, hints: &'a [Hint]) -> Self {
        GenerationRequest { schema, question, hints, prior: &[], temperature: None, sample: 0 }
    }
}

pub trait LlmBackend: Send + Sync {
    /// Identifies the backend and its configuration in reports and
    /// calibration artifacts.
    fn backend_id(&self) -> String;

    /// A query over the visible columns of `req.schema`.
    fn generate_sql(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError>;

    /// Phrases in the question that must map to schema columns.
    fn extract_entities(&self, question: &Question) -> Result<Vec<Entity>, LlmError>;

    /// Probability that `sql` does not answer the question.
    fn score_yes_no(
        &self,
        question: &Question,
        schema: &MaskedSchema,
        sql: &str,
        hints: &[Hint],
    ) -> Result<f64, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn generate_sql(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError> {
        (**self).generate_sql(req)
    }
    fn extract_entities(&self, question: &Question) -> Result<Vec<Entity>, LlmError> {
        (**self).extract_entities(question)
    }
    fn score_yes_no(&self, q: &Question, s: &MaskedSchema, sql: &str, h: &[Hint]) -> Result<f64, LlmError> {
        (**self).score_yes_no(q, s, sql, h)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for alloc::sync::Arc<B> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn generate_sql(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError> {
        (**self).generate_sql(req)
    }
    fn extract_entities(&self, question: &Question) -> Result<Vec<Entity>, LlmError> {
        (**self).extract_entities(question)
    }
    fn score_yes_no(&self, q: &Question, s: &MaskedSchema, sql: &str, h: &[Hint]) -> Result<f64, LlmError> {
        (**self).score_yes_no(q, s, sql, h)
    }
}

/// Per-capability call counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CallCounts {
    pub generate: u64,
    pub extract: u64,
    pub score: u64,
}

/// Wraps a backend and counts calls per capability.
pub struct Counted<B> {
    inner: B,
    generate: AtomicU64,
    extract: AtomicU64,
    score: AtomicU64,
}

impl<B: LlmBackend> Counted<B> {
    pub fn new(inner: B) -> Self {
        Counted { inner, generate: AtomicU64::new(0), extract: AtomicU64::new(0), score: AtomicU64::new(0) }
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            generate: self.generate.load(Ordering::Relaxed),
            extract: self.extract.load(Ordering::Relaxed),
            score: self.score.load(Ordering::Relaxed),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: LlmBackend> LlmBackend for Counted<B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }
    fn generate_sql(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError> {
        self.generate.fetch_add(1, Ordering::Relaxed);
        self.inner.generate_sql(req)
    }
    fn extract_entities(&self, question: &Question) -> Result<Vec<Entity>, LlmError> {
        self.extract.fetch_add(1, Ordering::Relaxed);
        self.inner.extract_entities(question)
    }
    fn score_yes_no(&self, q: &Question, s: &MaskedSchema, sql: &str, h: &[Hint]) -> Result<f64, LlmError> {
        self.score.fetch_add(1, Ordering::Relaxed);
        self.inner.score_yes_no(q, s, sql, h)
    }
}

/// The question's entities, extracting and caching them on first use.
///
/// Duplicates are dropped; an empty extraction falls back to the whole
/// question text as a single entity.
pub fn ensure_entities(backend: &dyn LlmBackend, question: &mut Question) -> Result<Vec<Entity>, LlmError> {
    if let Some(e) = &question.entities {
        return Ok(e.clone());
    }
    let mut out: Vec<Entity> = Vec::new();
    for e in backend.extract_entities(question)? {
        let phrase = e.phrase.trim();
        if phrase.is_empty() || out.iter().any(|o| o.phrase.eq_ignore_ascii_case(phrase)) {
            continue;
        }
        out.push(Entity { phrase: phrase.into() });
    }
    if out.is_empty() {
        out.push(Entity { phrase: question.text.trim().trim_end_matches('?').trim().to_string() });
    }
    question.entities = Some(out.clone());
    Ok(out)
}

/// `k` independent generations over the full schema at `temperature`.
pub fn sampling_generate(
    backend: &dyn LlmBackend,
    schema: &MaskedSchema,
    question: &Question,
    hints: &[Hint],
    k: u32,
    temperature: f64,
) -> Result<Vec<String>, LlmError> {
    (0..k)
        .map(|sample| {
            backend.generate_sql(&GenerationRequest {
                temperature: Some(temperature),
                sample,
                ..GenerationRequest::new(schema, question, hints)
            })
        })
        .collect()
}

/// One generation asked to differ in result from every query in `prior`.
pub fn forced_diversity_generate(
    backend: &dyn LlmBackend,
    schema: &MaskedSchema,
    question: &Question,
    hints: &[Hint],
    prior: &[String],
) -> Result<String, LlmError> {
    backend.generate_sql(&GenerationRequest { prior, ..GenerationRequest::new(schema, question, hints) })
}

/// Pulls the SQL statement out of a free-form completion: the first
/// fenced block if any, otherwise the text from the first `SELECT`, cut
/// at the first semicolon.
pub fn extract_sql(completion: &str) -> String {
    let mut text = completion;
    if let Some(start) = text.find("```") {
        let body = &text[start + 3..];
        let body = body.strip_prefix("sql").or_else(|| body.strip_prefix("SQL")).unwrap_or(body);
        text = match body.find("```") {
            Some(end) => &body[..end],
            None => body,
        };
    }
    let lower = text.to_ascii_lowercase();
    if let Some(i) = lower.find("select") {
        text = &text[i..];
    }
    if let Some(i) = text.find(';') {
        text = &text[..i];
    }
    text.trim().to_string()
}

/// Parses one entity per line, tolerating bullets, numbering and quotes.
pub fn parse_entity_list(completion: &str) -> Vec<Entity> {
    let mut out: Vec<Entity> = Vec::new();
    for line in completion.lines().flat_map(|l| l.split(',')) {
        let mut p = line.trim();
        p = p.trim_start_matches(|c: char| c == '-' || c == '*' || c == '•' || c.is_ascii_digit() || c == '.' || c == ')');
        let p = p.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
        if p.is_empty() || out.iter().any(|e| e.phrase.eq_ignore_ascii_case(p)) {
            continue;
        }
        out.push(Entity { phrase: p.into() });
    }
    out
}
