//! Candidate generation by greedy best-first search over masked schemas.
//!
//! Each explored node costs one generation call. The query generated for a
//! node spawns one child per column it uses, with that column hidden, so
//! the model has to answer differently. Children are ranked by how well
//! the remaining columns still cover the question's entities.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ensure_entities, GenerationRequest, LlmBackend, LlmError};
use crate::model::{CandidateSet, Question, SqlCandidate, Strategy};
use crate::personalizer::{hint_overrides, Hint};
use crate::schema::{ColumnRef, MaskedSchema, Schema, SchemaKey};
use crate::similarity::{cal_score, SimilarityProvider};
use crate::sql;

/// Temperature used by the sampling baseline.
pub const SAMPLING_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("schema has no columns")]
    EmptySchema,
    #[error("generation budget must be at least 1")]
    InvalidBudget,
}

/// One explored schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub schema_key: SchemaKey,
    pub removed: Vec<ColumnRef>,
    pub score: f64,
    /// 1-based index of the generation call made for this node.
    pub call_index: u32,
    pub sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub strategy: Strategy,
    pub explored: Vec<TraceNode>,
    pub schemas_seen: BTreeSet<SchemaKey>,
    pub llm_calls: u32,
    /// Distinct queries in generation order.
    pub candidates: Vec<SqlCandidate>,
}

impl GenerationTrace {
    fn new(strategy: Strategy) -> Self {
        GenerationTrace {
            strategy,
            explored: Vec::new(),
            schemas_seen: BTreeSet::new(),
            llm_calls: 0,
            candidates: Vec::new(),
        }
    }

    fn add(&mut self, sql: &str, key: &SchemaKey) {
        if sql.trim().is_empty() || self.candidates.iter().any(|c| c.sql_text == sql) {
            return;
        }
        let id = alloc::format!("c{}", self.candidates.len() + 1);
        if let Ok(c) = SqlCandidate::new(id, sql, self.strategy) {
            self.candidates.push(c.from_schema(key.clone()));
        }
    }

    pub fn into_candidate_set(self, question: Question) -> CandidateSet {
        let mut set = CandidateSet::new(question);
        for c in self.candidates {
            set.push(c);
        }
        set
    }
}

struct Node {
    score: f64,
    order: u64,
    schema: MaskedSchema,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: higher score first, then earlier insertion
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.order.cmp(&self.order))
    }
}

/// Greedy tree search with a budget of `max_calls` generation calls.
///
/// The full schema is explored first with score 1. Entity extraction runs
/// once and is cached on `question`; hints are passed to every generation
/// call and also override similarities when ranking children.
pub fn gen_sql_queries(
    backend: &dyn LlmBackend,
    provider: &SimilarityProvider,
    schema: Arc<Schema>,
    question: &mut Question,
    max_calls: u32,
    hints: &[Hint],
) -> Result<GenerationTrace, GeneratorError> {
    if max_calls == 0 {
        return Err(GeneratorError::InvalidBudget);
    }
    if schema.column_count() == 0 {
        return Err(GeneratorError::EmptySchema);
    }
    let entities = ensure_entities(backend, question)?;
    let provider = provider.with_overrides(&hint_overrides(hints));
    let mut trace = GenerationTrace::new(Strategy::SchemaMasking);
    let mut queue = BinaryHeap::new();
    let mut pushed = 0u64;

    let root = MaskedSchema::full(schema.clone());
    trace.schemas_seen.insert(root.canonical_key());
    queue.push(Node { score: 1.0, order: pushed, schema: root });
    pushed += 1;

    while trace.llm_calls < max_calls {
        let Some(node) = queue.pop() else { break };
        trace.llm_calls += 1;
        let key = node.schema.canonical_key();
        let mut record = TraceNode {
            schema_key: key.clone(),
            removed: node.schema.removed().iter().cloned().collect(),
            score: node.score,
            call_index: trace.llm_calls,
            sql: None,
            error: None,
        };
        let sql_text = match backend.generate_sql(&GenerationRequest::new(&node.schema, question, hints)) {
            Ok(s) => s,
            Err(LlmError::GenerationRefused(why)) => {
                log::debug!("generation refused for schema {}: {why}", key.digest());
                record.error = Some(why);
                trace.explored.push(record);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        record.sql = Some(sql_text.clone());
        trace.add(&sql_text, &key);

        match sql::parse_sql(&sql_text).and_then(|q| sql::columns_used(&q, &schema)) {
            Ok(used) => {
                for col in used {
                    let Ok(child) = node.schema.remove_col(&col) else { continue };
                    if child.is_empty() {
                        continue;
                    }
                    if !trace.schemas_seen.insert(child.canonical_key()) {
                        continue;
                    }
                    let score = cal_score(&provider, &child, &entities);
                    queue.push(Node { score, order: pushed, schema: child });
                    pushed += 1;
                }
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        trace.explored.push(record);
    }
    Ok(trace)
}

/// Candidates from one of the three strategies with a budget of
/// `max_calls` generation calls.
pub fn generate_candidates(
    strategy: Strategy,
    backend: &dyn LlmBackend,
    provider: &SimilarityProvider,
    schema: Arc<Schema>,
    question: &mut Question,
    max_calls: u32,
    hints: &[Hint],
) -> Result<GenerationTrace, GeneratorError> {
    if strategy == Strategy::SchemaMasking {
        return gen_sql_queries(backend, provider, schema, question, max_calls, hints);
    }
    if max_calls == 0 {
        return Err(GeneratorError::InvalidBudget);
    }
    if schema.column_count() == 0 {
        return Err(GeneratorError::EmptySchema);
    }
    ensure_entities(backend, question)?;
    let full = MaskedSchema::full(schema);
    let key = full.canonical_key();
    let mut trace = GenerationTrace::new(strategy);
    trace.schemas_seen.insert(key.clone());
    let mut prior: Vec<String> = Vec::new();
    for sample in 0..max_calls {
        let mut req = GenerationRequest::new(&full, question, hints);
        match strategy {
            Strategy::Sampling => {
                req.temperature = Some(SAMPLING_TEMPERATURE);
                req.sample = sample;
            }
            _ => req.prior = &prior,
        }
        trace.llm_calls += 1;
        let mut record = TraceNode {
            schema_key: key.clone(),
            removed: Vec::new(),
            score: 1.0,
            call_index: trace.llm_calls,
            sql: None,
            error: None,
        };
        match backend.generate_sql(&req) {
            Ok(s) => {
                trace.add(&s, &key);
                if !prior.contains(&s) {
                    prior.push(s.clone());
                }
                record.sql = Some(s);
            }
            Err(LlmError::GenerationRefused(why)) => record.error = Some(why),
            Err(e) => return Err(e.into()),
        }
        trace.explored.push(record);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Counted, LinkEntry, MockBackend, MockOracle, WeightedColumn};
    use crate::schema::{Column, Table};
    use alloc::vec;

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                "school",
                vec![Table::new(
                    "students",
                    vec![
                        Column::new("birthplace", "text"),
                        Column::new("origin", "text"),
                        Column::new("roll_num", "integer"),
                    ],
                )],
            )
            .unwrap(),
        )
    }

    fn wc(column: &str, weight: f64) -> WeightedColumn {
        WeightedColumn { table: "students".into(), column: column.into(), weight }
    }

    fn oracle() -> MockOracle {
        let mut o = MockOracle::new(vec![
            LinkEntry { entity: "hometown".into(), columns: vec![wc("birthplace", 0.9), wc("origin", 0.85)] },
            LinkEntry { entity: "roll number".into(), columns: vec![wc("roll_num", 0.95)] },
        ]);
        o.noise_rate = 0.0;
        o
    }

    fn question() -> Question {
        Question::new("Find the hometown and roll number of students", "u", "school").unwrap()
    }

    fn run(budget: u32) -> GenerationTrace {
        let o = oracle();
        let b = MockBackend::new(o.clone(), 1).unwrap();
        gen_sql_queries(&b, &o.similarity(0.1), schema(), &mut question(), budget, &[]).unwrap()
    }

    #[test]
    fn budget_one_is_the_full_schema_query() {
        let t = run(1);
        assert_eq!(t.llm_calls, 1);
        assert_eq!(t.explored.len(), 1);
        assert!(t.explored[0].removed.is_empty());
        assert_eq!(t.candidates.len(), 1);
        assert_eq!(t.candidates[0].sql_text, "SELECT birthplace, roll_num FROM students");
    }

    #[test]
    fn second_pop_hides_birthplace() {
        let t = run(4);
        assert_eq!(t.explored[1].removed, vec![ColumnRef::new("students", "birthplace")]);
        assert_eq!(t.explored[1].score, 0.85);
        assert_eq!(t.candidates[1].sql_text, "SELECT origin, roll_num FROM students");
        let keys: BTreeSet<_> = t.explored.iter().map(|n| n.schema_key.clone()).collect();
        assert_eq!(keys.len(), t.explored.len());
    }

    #[test]
    fn extraction_is_cached_and_budget_holds() {
        let o = oracle();
        let b = Counted::new(MockBackend::new(o.clone(), 1).unwrap());
        let mut q = question();
        for budget in [1, 3, 50] {
            let t = gen_sql_queries(&b, &o.similarity(0.1), schema(), &mut q, budget, &[]).unwrap();
            assert!(t.llm_calls <= budget);
        }
        assert_eq!(b.counts().extract, 1);
    }

    #[test]
    fn baselines_respect_budget() {
        let o = oracle();
        let b = MockBackend::new(o.clone(), 1).unwrap();
        for s in [Strategy::Sampling, Strategy::ForcedDiversity] {
            let t = generate_candidates(s, &b, &o.similarity(0.1), schema(), &mut question(), 5, &[]).unwrap();
            assert_eq!(t.llm_calls, 5);
            assert!(t.candidates.iter().all(|c| c.strategy == s));
        }
        let t = generate_candidates(Strategy::ForcedDiversity, &b, &o.similarity(0.1), schema(), &mut question(), 3, &[])
            .unwrap();
        let texts: Vec<&str> = t.candidates.iter().map(|c| c.sql_text.as_str()).collect();
        assert_eq!(texts, ["SELECT birthplace, roll_num FROM students", "SELECT origin, roll_num FROM students"]);
    }

    #[test]
    fn invalid_inputs() {
        let o = oracle();
        let b = MockBackend::new(o.clone(), 1).unwrap();
        let p = o.similarity(0.1);
        assert_eq!(gen_sql_queries(&b, &p, schema(), &mut question(), 0, &[]).unwrap_err(), GeneratorError::InvalidBudget);
        let empty = Arc::new(Schema::new("e", vec![]).unwrap());
        assert_eq!(gen_sql_queries(&b, &p, empty, &mut question(), 3, &[]).unwrap_err(), GeneratorError::EmptySchema);
    }
}
