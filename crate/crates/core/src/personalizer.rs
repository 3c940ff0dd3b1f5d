//! User feedback to schema-linking hints, and the per-user hint store.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Entity, Question, SqlCandidate};
use crate::schema::{ColumnRef, Schema};
use crate::similarity::{cal_sim, normalize, Overrides, SimilarityProvider};
use crate::sql;

/// Default minimum phrase similarity for a stored hint to apply to a
/// question entity, and for an incorrect query's mapping to count.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PersonalizerError {
    #[error("query uses no resolvable columns")]
    NoColumnsUsed,
    #[error("unknown session `{0}`")]
    SessionUnknown(String),
    #[error("candidate `{0}` was not shown in this session")]
    UnknownCandidate(String),
    #[error("unknown hint `{0}`")]
    UnknownHint(String),
}

/// A learned preference: `entity` means `preferred`, not `rejected`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hint {
    /// Assigned by the store.
    #[serde(default)]
    pub id: String,
    #[serde(rename = "user")]
    pub user_id: String,
    pub entity: String,
    pub preferred: ColumnRef,
    #[serde(default)]
    pub rejected: Vec<ColumnRef>,
    pub text: String,
    /// Milliseconds since the Unix epoch, supplied by the caller.
    #[serde(rename = "ts")]
    pub created_at: u64,
    pub session: String,
}

/// The hint sentence shown to the model.
pub fn render_hint(entity: &str, preferred: &ColumnRef, rejected: &[ColumnRef]) -> String {
    let mut s = alloc::format!("When referring to {entity}, the user prefers the {preferred} column");
    if !rejected.is_empty() {
        s.push_str(" over ");
        let parts: Vec<String> = rejected.iter().map(ToString::to_string).collect();
        s.push_str(&parts.join(", "));
    }
    s.push('.');
    s
}

/// The column of `sql` that best matches `entity`, with its similarity.
/// Ties go to the column referenced first.
pub fn schema_map(
    provider: &SimilarityProvider,
    entity: &Entity,
    sql_text: &str,
    schema: &Schema,
) -> Result<(ColumnRef, f64), PersonalizerError> {
    let used = sql::parse_sql(sql_text)
        .and_then(|q| sql::columns_used(&q, schema))
        .map_err(|_| PersonalizerError::NoColumnsUsed)?;
    let mut best: Option<(ColumnRef, f64)> = None;
    for c in used {
        let s = cal_sim(provider, entity, &c, schema);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((c, s));
        }
    }
    best.ok_or(PersonalizerError::NoColumnsUsed)
}

/// Who and when, for hints created from one feedback event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintOrigin {
    pub user_id: String,
    pub session: String,
    pub created_at: u64,
}

/// One hint per entity: the column the chosen query uses for it, over the
/// columns the other queries used instead. Mappings from incorrect
/// queries with similarity under `match_threshold` are dropped.
pub fn generate_hints(
    provider: &SimilarityProvider,
    entities: &[Entity],
    sql_true: &str,
    sqls_incorrect: &[&str],
    schema: &Schema,
    match_threshold: f64,
    origin: &HintOrigin,
) -> Result<Vec<Hint>, PersonalizerError> {
    let mut out = Vec::with_capacity(entities.len());
    for e in entities {
        let (preferred, _) = schema_map(provider, e, sql_true, schema)?;
        let mut rejected: Vec<ColumnRef> = Vec::new();
        for wrong in sqls_incorrect {
            if let Ok((m, sim)) = schema_map(provider, e, wrong, schema) {
                if m != preferred && sim >= match_threshold && !rejected.contains(&m) {
                    rejected.push(m);
                }
            }
        }
        out.push(Hint {
            id: String::new(),
            user_id: origin.user_id.clone(),
            entity: e.phrase.clone(),
            text: render_hint(&e.phrase, &preferred, &rejected),
            preferred,
            rejected,
            created_at: origin.created_at,
            session: origin.session.clone(),
        });
    }
    Ok(out)
}

/// Similarity overrides: preferred columns pulled to 1, rejected ones
/// pushed to 0.
pub fn hint_overrides(hints: &[Hint]) -> Overrides {
    let mut out = Overrides::new();
    for h in hints {
        for r in &h.rejected {
            out.insert((normalize(&h.entity), r.clone()), 0.0);
        }
        out.insert((normalize(&h.entity), h.preferred.clone()), 1.0);
    }
    out
}

/// A user's reaction to the candidates shown for one question.
#[derive(Debug, Clone)]
pub struct FeedbackEvent {
    pub session_id: String,
    pub question: Question,
    pub shown: Vec<SqlCandidate>,
    /// `None` when no candidate was correct.
    pub chosen: Option<String>,
}

/// Journal record; replaying the journal rebuilds the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum HintEvent {
    Upsert(Hint),
    Delete { id: String, ts: u64 },
}

/// Per-user hints, at most one active per (user, entity): a newer hint
/// for the same entity supersedes the older one.
#[derive(Debug, Clone)]
pub struct HintStore {
    hints: Vec<Hint>,
    active: BTreeMap<(String, String), usize>,
    sessions: BTreeSet<String>,
    next_id: u64,
    pub match_threshold: f64,
}

impl Default for HintStore {
    fn default() -> Self {
        HintStore {
            hints: Vec::new(),
            active: BTreeMap::new(),
            sessions: BTreeSet::new(),
            next_id: 1,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

impl HintStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn replay(events: impl IntoIterator<Item = HintEvent>) -> Self {
        let mut store = Self::default();
        for e in events {
            store.apply(e);
        }
        store
    }

    /// Applies a journal record. Unknown deletions are ignored.
    pub fn apply(&mut self, event: HintEvent) {
        match event {
            HintEvent::Upsert(h) => {
                if let Some(n) = h.id.strip_prefix('h').and_then(|n| n.parse::<u64>().ok()) {
                    self.next_id = self.next_id.max(n + 1);
                }
                self.sessions.insert(h.session.clone());
                let key = (h.user_id.clone(), normalize(&h.entity));
                self.hints.push(h);
                self.active.insert(key, self.hints.len() - 1);
            }
            HintEvent::Delete { id, .. } => {
                self.active.retain(|_, i| self.hints[*i].id != id);
            }
        }
    }

    pub fn register_session(&mut self, session: impl Into<String>) {
        self.sessions.insert(session.into());
    }

    pub fn knows_session(&self, session: &str) -> bool {
        self.sessions.contains(session)
    }

    /// Stores `hint` under a fresh id, superseding any active hint for the
    /// same (user, entity).
    pub fn upsert(&mut self, mut hint: Hint) -> HintEvent {
        hint.id = alloc::format!("h{}", self.next_id);
        let event = HintEvent::Upsert(hint);
        self.apply(event.clone());
        event
    }

    /// Deactivates a hint. No older hint becomes active again.
    pub fn delete(&mut self, id: &str, ts: u64) -> Result<HintEvent, PersonalizerError> {
        if !self.active.values().any(|i| self.hints[*i].id == id) {
            return Err(PersonalizerError::UnknownHint(id.into()));
        }
        let event = HintEvent::Delete { id: id.into(), ts };
        self.apply(event.clone());
        Ok(event)
    }

    pub fn get(&self, id: &str) -> Option<&Hint> {
        self.active.values().map(|i| &self.hints[*i]).find(|h| h.id == id)
    }

    /// Active hints of `user_id`, newest first.
    pub fn active(&self, user_id: &str) -> Vec<Hint> {
        let mut idx: Vec<usize> =
            self.active.iter().filter(|((u, _), _)| u == user_id).map(|(_, i)| *i).collect();
        idx.sort_unstable_by(|a, b| b.cmp(a));
        idx.into_iter().map(|i| self.hints[i].clone()).collect()
    }

    /// Active hints of `user_id` whose entity matches one of `entities`.
    pub fn hints_for(&self, provider: &SimilarityProvider, user_id: &str, entities: &[Entity]) -> Vec<Hint> {
        self.active(user_id)
            .into_iter()
            .filter(|h| entities.iter().any(|e| provider.phrase_similarity(&h.entity, &e.phrase) >= self.match_threshold))
            .collect()
    }

    /// Turns a choice into hints and stores them. Returns the created
    /// hints together with their journal records.
    pub fn apply_feedback(
        &mut self,
        provider: &SimilarityProvider,
        event: &FeedbackEvent,
        schema: &Schema,
        ts: u64,
    ) -> Result<(Vec<Hint>, Vec<HintEvent>), PersonalizerError> {
        if !self.knows_session(&event.session_id) {
            return Err(PersonalizerError::SessionUnknown(event.session_id.clone()));
        }
        let Some(chosen_id) = &event.chosen else {
            log::info!("session {}: no candidate chosen", event.session_id);
            return Ok((Vec::new(), Vec::new()));
        };
        let chosen = event
            .shown
            .iter()
            .find(|c| &c.id == chosen_id)
            .ok_or_else(|| PersonalizerError::UnknownCandidate(chosen_id.clone()))?;
        let others: Vec<&str> =
            event.shown.iter().filter(|c| &c.id != chosen_id).map(|c| c.sql_text.as_str()).collect();
        let entities = match &event.question.entities {
            Some(e) => e.clone(),
            None => alloc::vec![Entity { phrase: event.question.text.clone() }],
        };
        let origin = HintOrigin {
            user_id: event.question.user_id.clone(),
            session: event.session_id.clone(),
            created_at: ts,
        };
        let drafts =
            generate_hints(provider, &entities, &chosen.sql_text, &others, schema, self.match_threshold, &origin)?;
        let mut hints = Vec::with_capacity(drafts.len());
        let mut events = Vec::with_capacity(drafts.len());
        for d in drafts {
            let ev = self.upsert(d);
            if let HintEvent::Upsert(h) = &ev {
                hints.push(h.clone());
            }
            events.push(ev);
        }
        Ok((hints, events))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;
    use crate::schema::{Column, Table};
    use alloc::vec;

    fn sales() -> Schema {
        Schema::new(
            "shop",
            vec![Table::new(
                "customer_sales",
                vec![
                    Column::new("customer_id", "integer"),
                    Column::new("gross_sales", "real"),
                    Column::new("net_sales", "real"),
                ],
            )],
        )
        .unwrap()
    }

    fn provider() -> SimilarityProvider {
        SimilarityProvider::lexicon(0.1)
            .with("total sales", ColumnRef::new("customer_sales", "gross_sales"), 0.9)
            .with("total sales", ColumnRef::new("customer_sales", "net_sales"), 0.85)
    }

    fn origin() -> HintOrigin {
        HintOrigin { user_id: "u1".into(), session: "s1".into(), created_at: 5 }
    }

    const GROSS: &str = "SELECT customer_id, gross_sales FROM customer_sales";
    const NET: &str = "SELECT customer_id, net_sales FROM customer_sales";

    #[test]
    fn schema_map_picks_best_column() {
        let e = Entity::new("total sales").unwrap();
        let (c, s) = schema_map(&provider(), &e, GROSS, &sales()).unwrap();
        assert_eq!(c, ColumnRef::new("customer_sales", "gross_sales"));
        assert_eq!(s, 0.9);
        let (c, _) = schema_map(&provider(), &e, "SELECT customer_id FROM customer_sales", &sales()).unwrap();
        assert_eq!(c, ColumnRef::new("customer_sales", "customer_id"));
        assert_eq!(schema_map(&provider(), &e, "SELEC", &sales()), Err(PersonalizerError::NoColumnsUsed));
    }

    #[test]
    fn hint_text_and_dedup() {
        let e = vec![Entity::new("total sales").unwrap()];
        let h = generate_hints(&provider(), &e, GROSS, &[NET, NET], &sales(), 0.8, &origin()).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(
            h[0].text,
            "When referring to total sales, the user prefers the customer_sales.gross_sales column over customer_sales.net_sales."
        );
        assert_eq!(h[0].rejected, vec![ColumnRef::new("customer_sales", "net_sales")]);
        let h = generate_hints(&provider(), &e, GROSS, &[], &sales(), 0.8, &origin()).unwrap();
        assert!(h[0].rejected.is_empty());
        assert!(h[0].text.ends_with("gross_sales column."));
        // a query that never mentions the entity maps weakly and is dropped
        let h = generate_hints(&provider(), &e, GROSS, &["SELECT customer_id FROM customer_sales"], &sales(), 0.8, &origin())
            .unwrap();
        assert!(h[0].rejected.is_empty());
    }

    #[test]
    fn overrides_from_hints() {
        let e = vec![Entity::new("total sales").unwrap()];
        let h = generate_hints(&provider(), &e, GROSS, &[NET], &sales(), 0.8, &origin()).unwrap();
        let o = hint_overrides(&h);
        assert_eq!(o.len(), 2);
        assert_eq!(o[&("total sales".into(), ColumnRef::new("customer_sales", "gross_sales"))], 1.0);
        assert_eq!(o[&("total sales".into(), ColumnRef::new("customer_sales", "net_sales"))], 0.0);
        assert!(hint_overrides(&[]).is_empty());
    }

    fn event(chosen: Option<&str>, session: &str) -> FeedbackEvent {
        let q = Question::new("What are the total sales per customer?", "u1", "shop")
            .unwrap()
            .with_entities(vec![Entity::new("total sales").unwrap()])
            .unwrap();
        FeedbackEvent {
            session_id: session.into(),
            question: q,
            shown: vec![
                SqlCandidate::new("c1", GROSS, Strategy::SchemaMasking).unwrap(),
                SqlCandidate::new("c2", NET, Strategy::SchemaMasking).unwrap(),
            ],
            chosen: chosen.map(Into::into),
        }
    }

    #[test]
    fn feedback_supersedes_and_deletes() {
        let p = provider();
        let mut store = HintStore::new();
        assert_eq!(
            store.apply_feedback(&p, &event(Some("c2"), "s1"), &sales(), 1).unwrap_err(),
            PersonalizerError::SessionUnknown("s1".into())
        );
        store.register_session("s1");
        store.register_session("s2");
        let (none, _) = store.apply_feedback(&p, &event(None, "s1"), &sales(), 1).unwrap();
        assert!(none.is_empty() && store.active("u1").is_empty());
        assert!(matches!(
            store.apply_feedback(&p, &event(Some("zz"), "s1"), &sales(), 1),
            Err(PersonalizerError::UnknownCandidate(_))
        ));

        let (h1, _) = store.apply_feedback(&p, &event(Some("c2"), "s1"), &sales(), 1).unwrap();
        assert_eq!(h1[0].preferred, ColumnRef::new("customer_sales", "net_sales"));
        let (h2, _) = store.apply_feedback(&p, &event(Some("c1"), "s2"), &sales(), 2).unwrap();
        let active = store.active("u1");
        assert_eq!(active.len(), 1);
        assert_eq!(active[0].id, h2[0].id);
        assert_eq!(active[0].preferred, ColumnRef::new("customer_sales", "gross_sales"));

        let q = [Entity::new("Total  Sales").unwrap()];
        assert_eq!(store.hints_for(&p, "u1", &q).len(), 1);
        assert!(store.hints_for(&p, "u1", &[Entity::new("singers").unwrap()]).is_empty());
        assert!(store.hints_for(&p, "nobody", &q).is_empty());

        store.delete(&h2[0].id, 3).unwrap();
        assert!(store.active("u1").is_empty(), "deleting does not revive the superseded hint");
        assert!(store.delete(&h2[0].id, 4).is_err());
    }

    #[test]
    fn journal_replay_reproduces_state() {
        let p = provider();
        let mut store = HintStore::new();
        store.register_session("s1");
        store.register_session("s2");
        let mut journal = Vec::new();
        journal.extend(store.apply_feedback(&p, &event(Some("c2"), "s1"), &sales(), 1).unwrap().1);
        journal.extend(store.apply_feedback(&p, &event(Some("c1"), "s2"), &sales(), 2).unwrap().1);
        let id = store.active("u1")[0].id.clone();
        journal.push(store.delete(&id, 3).unwrap());
        let lines: Vec<String> = journal.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        let back = HintStore::replay(lines.iter().map(|l| serde_json::from_str(l).unwrap()));
        assert_eq!(back.active("u1"), store.active("u1"));
        assert!(back.knows_session("s2"));
        let mut back = back;
        let ev = back.upsert(store.hints[0].clone());
        let HintEvent::Upsert(h) = ev else { unreachable!() };
        assert_eq!(h.id, "h3");
    }

    proptest::proptest! {
        #[test]
        fn rendering_is_injective(
            a in "[a-z]{1,6}( [a-z]{1,6})?", b in "[a-z]{1,6}( [a-z]{1,6})?",
            pa in 0usize..3, pb in 0usize..3, ra in proptest::collection::vec(0usize..3, 0..3),
            rb in proptest::collection::vec(0usize..3, 0..3),
        ) {
            let cols = [ColumnRef::new("t", "x"), ColumnRef::new("t", "y"), ColumnRef::new("u", "x")];
            let pick = |v: &[usize]| v.iter().map(|i| cols[*i].clone()).collect::<Vec<_>>();
            let (ra, rb) = (pick(&ra), pick(&rb));
            let same = a == b && pa == pb && ra == rb;
            proptest::prop_assert_eq!(render_hint(&a, &cols[pa], &ra) == render_hint(&b, &cols[pb], &rb), same);
        }
    }
}
