//! Questions, candidates and pipeline configuration shared across modules.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ident::Ident;
use crate::schema::SchemaKey;
use crate::sql::Query;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("entity phrase is empty")]
    EmptyEntity,
    #[error("duplicate entity `{0}`")]
    DuplicateEntity(String),
    #[error("candidate SQL text is empty")]
    EmptySql,
    #[error("candidate score is not finite")]
    NonFiniteScore,
    #[error("duplicate candidate SQL `{0}`")]
    DuplicateCandidate(String),
    #[error("selected id `{0}` is not a generated candidate")]
    UnknownSelection(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("max_calls must be at least 1")]
    InvalidBudget,
    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },
}

/// A phrase from the question that must map to some schema column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub phrase: String,
}

impl Entity {
    pub fn new(phrase: impl Into<String>) -> Result<Self, ModelError> {
        let phrase = phrase.into();
        if phrase.trim().is_empty() {
            return Err(ModelError::EmptyEntity);
        }
        Ok(Entity { phrase })
    }
}

/// Checks the non-empty and distinct-phrase invariants on an entity list.
pub fn validate_entities(entities: &[Entity]) -> Result<(), ModelError> {
    for (i, e) in entities.iter().enumerate() {
        if e.phrase.trim().is_empty() {
            return Err(ModelError::EmptyEntity);
        }
        if entities[..i].iter().any(|o| o.phrase.eq_ignore_ascii_case(&e.phrase)) {
            return Err(ModelError::DuplicateEntity(e.phrase.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub user_id: String,
    pub db_id: Ident,
    /// Filled in by the first entity extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<Entity>>,
}

impl Question {
    pub fn new(
        text: impl Into<String>,
        user_id: impl Into<String>,
        db_id: impl Into<Ident>,
    ) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyQuestion);
        }
        Ok(Question { text, user_id: user_id.into(), db_id: db_id.into(), entities: None })
    }

    pub fn with_entities(mut self, entities: Vec<Entity>) -> Result<Self, ModelError> {
        validate_entities(&entities)?;
        self.entities = Some(entities);
        Ok(self)
    }
}

/// How a candidate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Greedy schema-masking search.
    #[serde(rename = "odin")]
    SchemaMasking,
    /// Repeated high-temperature sampling.
    Sampling,
    /// Prompting with all prior candidates and asking for a different result.
    ForcedDiversity,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SchemaMasking => "odin",
            Strategy::Sampling => "sampling",
            Strategy::ForcedDiversity => "forced_diversity",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "odin" => Ok(Strategy::SchemaMasking),
            "sampling" => Ok(Strategy::Sampling),
            "forced_diversity" => Ok(Strategy::ForcedDiversity),
            other => Err(ModelError::UnknownVariant { kind: "strategy", value: other.into() }),
        }
    }
}

/// Nonconformity score function used by the selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringKind {
    Llm,
    Embedding,
}

impl ScoringKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoringKind::Llm => "llm",
            ScoringKind::Embedding => "embedding",
        }
    }
}

impl fmt::Display for ScoringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoringKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm" => Ok(ScoringKind::Llm),
            "embedding" => Ok(ScoringKind::Embedding),
            other => Err(ModelError::UnknownVariant { kind: "scoring", value: other.into() }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqlCandidate {
    pub id: String,
    pub sql_text: String,
    #[serde(skip)]
    pub parsed: Option<Arc<Query>>,
    pub source_schema_key: Option<SchemaKey>,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl PartialEq for SqlCandidate {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.sql_text == other.sql_text
            && self.source_schema_key == other.source_schema_key
            && self.strategy == other.strategy
            && self.score == other.score
    }
}

impl SqlCandidate {
    pub fn new(id: impl Into<String>, sql_text: impl Into<String>, strategy: Strategy) -> Result<Self, ModelError> {
        let sql_text = sql_text.into();
        if sql_text.trim().is_empty() {
            return Err(ModelError::EmptySql);
        }
        Ok(SqlCandidate {
            id: id.into(),
            sql_text,
            parsed: None,
            source_schema_key: None,
            strategy,
            score: None,
        })
    }

    pub fn from_schema(mut self, key: SchemaKey) -> Self {
        self.source_schema_key = Some(key);
        self
    }

    pub fn set_score(&mut self, score: f64) -> Result<(), ModelError> {
        if !score.is_finite() {
            return Err(ModelError::NonFiniteScore);
        }
        self.score = Some(score);
        Ok(())
    }

    /// The parsed form, parsing and caching it on first use.
    pub fn parsed(&mut self) -> Result<Arc<Query>, crate::sql::SqlError> {
        if let Some(q) = &self.parsed {
            return Ok(q.clone());
        }
        let q = Arc::new(crate::sql::parse_sql(&self.sql_text)?);
        self.parsed = Some(q.clone());
        Ok(q)
    }
}

impl AsRef<str> for SqlCandidate {
    fn as_ref(&self) -> &str {
        &self.sql_text
    }
}

/// Generated candidates for one question with an optional selected subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSet {
    pub question: Question,
    pub generated: Vec<SqlCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<String>>,
}

impl CandidateSet {
    pub fn new(question: Question) -> Self {
        CandidateSet { question, generated: Vec::new(), selected: None }
    }

    /// Adds a candidate unless one with identical SQL text exists. Returns
    /// whether it was added.
    pub fn push(&mut self, candidate: SqlCandidate) -> bool {
        if self.generated.iter().any(|c| c.sql_text == candidate.sql_text) {
            return false;
        }
        self.generated.push(candidate);
        true
    }

    pub fn select(&mut self, ids: Vec<String>) -> Result<(), ModelError> {
        for id in &ids {
            if !self.generated.iter().any(|c| &c.id == id) {
                return Err(ModelError::UnknownSelection(id.clone()));
            }
        }
        self.selected = Some(ids);
        Ok(())
    }

    /// The selected candidates, or every generated one when no selection ran.
    pub fn shown(&self) -> Vec<&SqlCandidate> {
        match &self.selected {
            Some(ids) => self.generated.iter().filter(|c| ids.contains(&c.id)).collect(),
            None => self.generated.iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub max_calls: u32,
    pub alpha: f64,
    pub scoring: ScoringKind,
    pub personalization_enabled: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_calls == 0 {
            return Err(ModelError::InvalidBudget);
        }
        validate_alpha(self.alpha)
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { max_calls: 10, alpha: 0.1, scoring: ScoringKind::Llm, personalization_enabled: true }
    }
}

pub fn validate_alpha(alpha: f64) -> Result<(), ModelError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidAlpha(alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn question_requires_text() {
        assert_eq!(Question::new("  ", "u", "db").unwrap_err(), ModelError::EmptyQuestion);
        assert!(Question::new("How many singers do we have?", "u", "concert").is_ok());
    }

    #[test]
    fn entities_must_be_distinct() {
        let q = Question::new("q", "u", "d").unwrap();
        let dup = vec![Entity::new("hometown").unwrap(), Entity::new("Hometown").unwrap()];
        assert!(matches!(q.with_entities(dup), Err(ModelError::DuplicateEntity(_))));
        assert_eq!(Entity::new(" ").unwrap_err(), ModelError::EmptyEntity);
    }

    #[test]
    fn candidate_invariants() {
        assert_eq!(SqlCandidate::new("c0", "", Strategy::Sampling).unwrap_err(), ModelError::EmptySql);
        let mut c = SqlCandidate::new("c0", "SELECT 1 FROM t", Strategy::Sampling).unwrap();
        assert_eq!(c.set_score(f64::NAN).unwrap_err(), ModelError::NonFiniteScore);
        c.set_score(0.25).unwrap();
        assert_eq!(c.score, Some(0.25));
    }

    #[test]
    fn candidate_set_dedups_and_checks_selection() {
        let q = Question::new("q", "u", "d").unwrap();
        let mut set = CandidateSet::new(q);
        assert!(set.push(SqlCandidate::new("a", "SELECT x FROM t", Strategy::SchemaMasking).unwrap()));
        assert!(!set.push(SqlCandidate::new("b", "SELECT x FROM t", Strategy::SchemaMasking).unwrap()));
        assert_eq!(set.generated.len(), 1);
        assert!(set.select(vec!["zzz".into()]).is_err());
        set.select(vec!["a".into()]).unwrap();
        assert_eq!(set.shown().len(), 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        cfg.alpha = 1.0;
        assert!(matches!(cfg.validate(), Err(ModelError::InvalidAlpha(_))));
        cfg.alpha = 0.1;
        cfg.max_calls = 0;
        assert_eq!(cfg.validate(), Err(ModelError::InvalidBudget));
    }

    #[test]
    fn strategy_wire_names() {
        for s in [Strategy::SchemaMasking, Strategy::Sampling, Strategy::ForcedDiversity] {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), alloc::format!("\"{}\"", s.as_str()));
        }
        assert!("beam".parse::<Strategy>().is_err());
    }
}
