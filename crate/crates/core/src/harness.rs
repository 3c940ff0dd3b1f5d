//! Workloads, end-to-end runs and accuracy metrics.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{generate_candidates, GenerationTrace, GeneratorError};
use crate::ident::Ident;
use crate::llm::{ensure_entities, CallCounts, Counted, LlmBackend, LlmError};
use crate::model::{validate_alpha, ModelError, PipelineConfig, Question, ScoringKind, SqlCandidate, Strategy};
use crate::personalizer::{FeedbackEvent, Hint, HintStore, PersonalizerError};
use crate::schema::{MaskedSchema, Schema};
use crate::selector::{score_candidates, CalibrationRecord, ConformalModel, SelectorError};
use crate::similarity::SimilarityProvider;
use crate::sql::{execute, parse_sql, results_equal, Database, ResultTable, SqlError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("item `{item}`: {source}")]
    Sql { item: String, source: SqlError },
    #[error("item `{item}` references unknown database `{db_id}`")]
    MissingFixture { item: String, db_id: String },
    #[error("item `{0}` needs at least two execution-distinct gold alternatives")]
    InsufficientAlternatives(String),
    #[error("item `{0}`: gold alternatives are not execution-distinct")]
    DuplicateAlternatives(String),
    #[error("selector enabled but no calibration is available")]
    CalibrationMissing,
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Personalizer(#[from] PersonalizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

fn default_user() -> String {
    "default".into()
}

/// One benchmark question with its gold query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadItem {
    #[serde(default)]
    pub id: String,
    pub question: String,
    pub db_id: Ident,
    pub gold_sql: String,
    /// Other correct readings of an ambiguous question.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alt_gold_sqls: Vec<String>,
    #[serde(default = "default_user")]
    pub user_id: String,
    /// Path of the database fixture, resolved by the loader.
    #[serde(default)]
    pub fixture: String,
}

impl WorkloadItem {
    /// The gold query followed by the alternatives.
    pub fn alternatives(&self) -> Vec<&str> {
        core::iter::once(self.gold_sql.as_str()).chain(self.alt_gold_sqls.iter().map(String::as_str)).collect()
    }
}

/// Items plus the databases they run against, keyed by `db_id`.
#[derive(Debug, Clone, Default)]
pub struct Workload {
    pub items: Vec<WorkloadItem>,
    pub databases: BTreeMap<Ident, Arc<Database>>,
}

impl Workload {
    pub fn database(&self, item: &WorkloadItem) -> Result<&Arc<Database>, HarnessError> {
        self.databases
            .get(&item.db_id)
            .ok_or_else(|| HarnessError::MissingFixture { item: item.id.clone(), db_id: item.db_id.to_string() })
    }

    /// Checks that every item has a database, its gold query runs, and its
    /// alternatives give pairwise different results.
    pub fn validate(&self) -> Result<(), HarnessError> {
        for item in &self.items {
            let db = self.database(item)?;
            let mut results: Vec<ResultTable> = Vec::new();
            for sql in item.alternatives() {
                let r = run_sql(sql, db).map_err(|e| HarnessError::Sql {
                    item: item.id.clone(),
                    source: SqlError::GoldQueryInvalid(e.to_string()),
                })?;
                if results.iter().any(|o| results_equal(o, &r)) {
                    return Err(HarnessError::DuplicateAlternatives(item.id.clone()));
                }
                results.push(r);
            }
        }
        Ok(())
    }

    /// The items whose ids are listed, in `ids` order.
    pub fn subset(&self, ids: &[String]) -> Workload {
        let items = ids.iter().filter_map(|id| self.items.iter().find(|i| &i.id == id).cloned()).collect();
        Workload { items, databases: self.databases.clone() }
    }
}

fn run_sql(sql: &str, db: &Database) -> Result<ResultTable, SqlError> {
    execute(&parse_sql(sql)?, db)
}

fn gold_result(item: &WorkloadItem, sql: &str, db: &Database) -> Result<ResultTable, HarnessError> {
    run_sql(sql, db)
        .map_err(|e| HarnessError::Sql { item: item.id.clone(), source: SqlError::GoldQueryInvalid(e.to_string()) })
}

/// How candidates compare with one gold result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    pub matched: bool,
    /// Index of the first matching candidate.
    pub first: Option<usize>,
    /// A match relied on ignoring row order: the gold query is ordered and
    /// the matching candidate is not, or the other way round.
    pub order_asymmetry: bool,
}

fn match_candidates(candidates: &[&str], gold: &ResultTable, db: &Database) -> MatchOutcome {
    let mut out = MatchOutcome::default();
    for (i, c) in candidates.iter().enumerate() {
        let Ok(res) = run_sql(c, db) else { continue };
        if results_equal(&res, gold) {
            if out.first.is_none() {
                out.first = Some(i);
            }
            out.matched = true;
            if res.ordered != gold.ordered {
                out.order_asymmetry = true;
            }
        }
    }
    out
}

/// 1 when some shown candidate matches the gold result.
pub fn accuracy(item: &WorkloadItem, shown: &[SqlCandidate], db: &Database) -> Result<bool, HarnessError> {
    let gold = gold_result(item, &item.gold_sql, db)?;
    let texts: Vec<&str> = shown.iter().map(|c| c.sql_text.as_str()).collect();
    Ok(match_candidates(&texts, &gold, db).matched)
}

/// Whether any / every gold alternative is matched by some candidate.
pub fn either_both_topk(
    item: &WorkloadItem,
    generated: &[SqlCandidate],
    db: &Database,
) -> Result<(bool, bool), HarnessError> {
    let alts = item.alternatives();
    if alts.len() < 2 {
        return Err(HarnessError::InsufficientAlternatives(item.id.clone()));
    }
    let texts: Vec<&str> = generated.iter().map(|c| c.sql_text.as_str()).collect();
    let mut hits = 0;
    for sql in &alts {
        let gold = gold_result(item, sql, db)?;
        if match_candidates(&texts, &gold, db).matched {
            hits += 1;
        }
    }
    Ok((hits > 0, hits == alts.len()))
}

/// Mean of 0/1 accuracy flags; 0 for an empty list.
pub fn avg_acc(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
}

/// Mean number of candidates shown; 0 for an empty list.
pub fn avg_result_size(sizes: &[usize]) -> f64 {
    if sizes.is_empty() {
        return 0.0;
    }
    sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub pipeline: PipelineConfig,
    pub selector_enabled: bool,
    /// After each item, feed back the first shown candidate that matches
    /// the gold query.
    pub simulated_user: bool,
}

impl RunConfig {
    pub fn new(strategy: Strategy, max_calls: u32) -> Self {
        RunConfig {
            strategy,
            pipeline: PipelineConfig { max_calls, ..PipelineConfig::default() },
            selector_enabled: false,
            simulated_user: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.pipeline.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub id: String,
    pub accuracy: bool,
    pub shown: usize,
    pub generated: usize,
    pub either: Option<bool>,
    pub both: Option<bool>,
    /// Generation calls, bounded by the budget.
    pub llm_calls: u32,
    /// Entity extraction and scoring calls, reported apart from the budget.
    pub other_calls: u64,
    pub hints_used: usize,
    pub hints_created: usize,
    /// The selector kept nothing.
    pub no_confident_candidate: bool,
    pub order_asymmetry: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_id: Option<String>,
    pub items: Vec<ItemReport>,
    pub avg_acc: f64,
    pub avg_result_size: f64,
    pub either_in_topk: Option<f64>,
    pub both_in_topk: Option<f64>,
    pub total_llm_calls: u64,
    pub total_other_calls: u64,
}

impl RunReport {
    pub fn from_items(config: RunConfig, backend_id: String, items: Vec<ItemReport>) -> Self {
        let flags: Vec<bool> = items.iter().map(|i| i.accuracy).collect();
        let sizes: Vec<usize> = items.iter().map(|i| i.shown).collect();
        let rate = |get: fn(&ItemReport) -> Option<bool>| {
            let v: Vec<bool> = items.iter().filter_map(get).collect();
            (!v.is_empty()).then(|| avg_acc(&v))
        };
        RunReport {
            avg_acc: avg_acc(&flags),
            avg_result_size: avg_result_size(&sizes),
            either_in_topk: rate(|i| i.either),
            both_in_topk: rate(|i| i.both),
            total_llm_calls: items.iter().map(|i| u64::from(i.llm_calls)).sum(),
            total_other_calls: items.iter().map(|i| i.other_calls).sum(),
            config,
            backend_id,
            calibration_id: None,
            items,
        }
    }
}

/// Per-item audit entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub item_id: String,
    pub trace: GenerationTrace,
    pub shown: Vec<String>,
    pub scores: Vec<Option<f64>>,
    pub hints: Vec<String>,
    pub accuracy: bool,
}

/// Everything needed to run items end to end.
pub struct Pipeline<'a> {
    pub backend: &'a dyn LlmBackend,
    pub provider: &'a SimilarityProvider,
    pub calibration: Option<&'a ConformalModel>,
}

struct Generated {
    question: Question,
    schema: Arc<Schema>,
    hints: Vec<Hint>,
    trace: GenerationTrace,
}

impl Pipeline<'_> {
    fn generate(
        &self,
        backend: &dyn LlmBackend,
        item: &WorkloadItem,
        db: &Database,
        config: &RunConfig,
        store: &HintStore,
    ) -> Result<Generated, HarnessError> {
        let schema = Arc::new(db.schema().clone());
        let mut question = Question::new(item.question.clone(), item.user_id.clone(), item.db_id.clone())?;
        let hints = if config.pipeline.personalization_enabled {
            let entities = ensure_entities(backend, &mut question)?;
            store.hints_for(self.provider, &item.user_id, &entities)
        } else {
            Vec::new()
        };
        let trace = generate_candidates(
            config.strategy,
            backend,
            self.provider,
            schema.clone(),
            &mut question,
            config.pipeline.max_calls,
            &hints,
        )?;
        Ok(Generated { question, schema, hints, trace })
    }

    /// Runs every item in order. Hints created by the simulated user are
    /// written to `store` and returned as journal records by the caller's
    /// choice of store.
    pub fn run(
        &self,
        workload: &Workload,
        config: &RunConfig,
        store: &mut HintStore,
    ) -> Result<(RunReport, Vec<AuditRecord>), HarnessError> {
        config.validate()?;
        let model = if config.selector_enabled {
            Some(self.calibration.ok_or(HarnessError::CalibrationMissing)?)
        } else {
            None
        };
        let backend = Counted::new(self.backend);
        let mut items = Vec::with_capacity(workload.items.len());
        let mut audit = Vec::with_capacity(workload.items.len());
        for (n, item) in workload.items.iter().enumerate() {
            let before = backend.counts();
            let db = workload.database(item)?;
            let Generated { question, schema, hints, trace } = self.generate(&backend, item, db, config, store)?;
            let mut candidates = trace.candidates.clone();
            let shown: Vec<SqlCandidate> = match model {
                Some(m) => {
                    score_candidates(
                        m.scoring,
                        false,
                        &backend,
                        self.provider,
                        &question,
                        &MaskedSchema::full(schema.clone()),
                        &mut candidates,
                        &hints,
                    )?;
                    let keep = m.select(&candidates);
                    candidates.iter().filter(|c| keep.contains(&c.id)).cloned().collect()
                }
                None => candidates.clone(),
            };

            let gold = gold_result(item, &item.gold_sql, db)?;
            let texts: Vec<&str> = shown.iter().map(|c| c.sql_text.as_str()).collect();
            let outcome = match_candidates(&texts, &gold, db);
            if outcome.order_asymmetry {
                log::info!("item {}: matched only when ignoring row order", item.id);
            }
            let (either, both) = match either_both_topk(item, &trace.candidates, db) {
                Ok((e, b)) => (Some(e), Some(b)),
                Err(HarnessError::InsufficientAlternatives(_)) => (None, None),
                Err(e) => return Err(e),
            };

            let mut hints_created = 0;
            if config.simulated_user && config.pipeline.personalization_enabled {
                let session = alloc::format!("{}#{n}", item.id);
                store.register_session(session.clone());
                let event = FeedbackEvent {
                    session_id: session,
                    question: question.clone(),
                    shown: shown.clone(),
                    chosen: outcome.first.map(|i| shown[i].id.clone()),
                };
                let (created, _) = store.apply_feedback(self.provider, &event, &schema, n as u64)?;
                hints_created = created.len();
            }

            let after = backend.counts();
            items.push(ItemReport {
                id: item.id.clone(),
                accuracy: outcome.matched,
                shown: shown.len(),
                generated: trace.candidates.len(),
                either,
                both,
                llm_calls: trace.llm_calls,
                other_calls: (after.extract - before.extract) + (after.score - before.score),
                hints_used: hints.len(),
                hints_created,
                no_confident_candidate: model.is_some() && shown.is_empty(),
                order_asymmetry: outcome.order_asymmetry,
            });
            audit.push(AuditRecord {
                item_id: item.id.clone(),
                shown: shown.iter().map(|c| c.id.clone()).collect(),
                scores: candidates.iter().map(|c| c.score).collect(),
                hints: hints.iter().map(|h| h.text.clone()).collect(),
                accuracy: outcome.matched,
                trace,
            });
        }
        Ok((RunReport::from_items(config.clone(), self.backend.backend_id(), items), audit))
    }

    /// Generates and scores candidates for each calibration item and flags
    /// those matching the gold result.
    pub fn calibration_records(
        &self,
        workload: &Workload,
        config: &RunConfig,
        scoring: ScoringKind,
        store: &HintStore,
    ) -> Result<Vec<CalibrationRecord>, HarnessError> {
        config.validate()?;
        let mut records = Vec::new();
        for item in &workload.items {
            let db = workload.database(item)?;
            let Generated { question, schema, hints, trace } = self.generate(self.backend, item, db, config, store)?;
            let mut candidates = trace.candidates;
            if candidates.is_empty() {
                continue;
            }
            score_candidates(
                scoring,
                false,
                self.backend,
                self.provider,
                &question,
                &MaskedSchema::full(schema),
                &mut candidates,
                &hints,
            )?;
            let gold = gold_result(item, &item.gold_sql, db)?;
            let correct: Vec<bool> =
                candidates.iter().map(|c| match_candidates(&[c.sql_text.as_str()], &gold, db).matched).collect();
            let scores: Vec<f64> = candidates.iter().map(|c| c.score.unwrap_or(1.0)).collect();
            records.push(CalibrationRecord::new(question, candidates, correct, scores)?);
        }
        Ok(records)
    }

    /// Fits the selector threshold on a calibration workload.
    pub fn calibrate(
        &self,
        workload: &Workload,
        config: &RunConfig,
        alpha: f64,
        scoring: ScoringKind,
        store: &HintStore,
    ) -> Result<(ConformalModel, Vec<f64>), HarnessError> {
        validate_alpha(alpha)?;
        let records = self.calibration_records(workload, config, scoring, store)?;
        let scores = crate::selector::collect_correct_scores(&records)?;
        Ok((ConformalModel::fit(&scores, alpha, scoring)?, scores))
    }
}

/// Call counts are exposed for callers that wrap backends themselves.
pub type Calls = CallCounts;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;
    use crate::schema::{Column, Table};
    use crate::sql::{TableData, Value};
    use alloc::vec;

    fn db() -> Arc<Database> {
        let schema = Schema::new(
            "concert",
            vec![
                Table::new("artists", vec![Column::new("artist_id", "integer"), Column::new("name", "text")]),
                Table::new("performers", vec![Column::new("performer_id", "integer"), Column::new("name", "text")]),
            ],
        )
        .unwrap();
        let rows = |n: i64| (0..n).map(|i| vec![Value::Integer(i), Value::Text(alloc::format!("n{i}"))]).collect();
        Arc::new(
            Database::new(
                schema,
                vec![
                    TableData { name: "artists".into(), rows: rows(3) },
                    TableData { name: "performers".into(), rows: rows(5) },
                ],
            )
            .unwrap(),
        )
    }

    fn item(gold: &str, alts: &[&str]) -> WorkloadItem {
        WorkloadItem {
            id: "i1".into(),
            question: "How many singers do we have?".into(),
            db_id: "concert".into(),
            gold_sql: gold.into(),
            alt_gold_sqls: alts.iter().map(|s| String::from(*s)).collect(),
            user_id: "u".into(),
            fixture: String::new(),
        }
    }

    fn cands(sqls: &[&str]) -> Vec<SqlCandidate> {
        sqls.iter()
            .enumerate()
            .map(|(i, s)| SqlCandidate::new(alloc::format!("c{i}"), *s, Strategy::SchemaMasking).unwrap())
            .collect()
    }

    #[test]
    fn accuracy_flags() {
        let d = db();
        let it = item("SELECT COUNT(*) FROM artists", &[]);
        assert!(accuracy(&it, &cands(&["SELECT COUNT(*) FROM artists"]), &d).unwrap());
        assert!(!accuracy(&it, &[], &d).unwrap());
        assert!(accuracy(&it, &cands(&["SELECT COUNT(*) FROM performers", "select count(a.name) from artists a"]), &d)
            .unwrap());
        let bad = item("SELECT nope FROM artists", &[]);
        assert!(matches!(accuracy(&bad, &[], &d), Err(HarnessError::Sql { .. })));
    }

    #[test]
    fn either_both() {
        let d = db();
        let it = item("SELECT COUNT(*) FROM artists", &["SELECT COUNT(*) FROM performers"]);
        let both = cands(&["SELECT COUNT(*) FROM artists", "SELECT COUNT(*) FROM performers"]);
        assert_eq!(either_both_topk(&it, &both, &d).unwrap(), (true, true));
        assert_eq!(either_both_topk(&it, &both[..1], &d).unwrap(), (true, false));
        assert_eq!(either_both_topk(&it, &cands(&["SELECT name FROM artists"]), &d).unwrap(), (false, false));
        let single = item("SELECT COUNT(*) FROM artists", &[]);
        assert!(matches!(either_both_topk(&single, &both, &d), Err(HarnessError::InsufficientAlternatives(_))));
    }

    #[test]
    fn metric_means() {
        assert_eq!(avg_acc(&[true, false, true, true]), 0.75);
        assert_eq!(avg_result_size(&[5, 4, 3, 4]), 4.0);
        assert_eq!(avg_acc(&[]), 0.0);
    }

    #[test]
    fn workload_validation() {
        let mut w = Workload::default();
        w.items.push(item("SELECT COUNT(*) FROM artists", &["SELECT COUNT(*) FROM performers"]));
        assert!(matches!(w.validate(), Err(HarnessError::MissingFixture { .. })));
        w.databases.insert("concert".into(), db());
        w.validate().unwrap();
        w.items[0].alt_gold_sqls = vec!["SELECT COUNT(name) FROM artists".into()];
        assert!(matches!(w.validate(), Err(HarnessError::DuplicateAlternatives(_))));
    }
}
