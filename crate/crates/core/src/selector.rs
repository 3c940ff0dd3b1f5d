//! Conformal selection: keep candidates whose nonconformity score is at
//! most a threshold fitted on calibration data, so that a correct
//! candidate, when generated, is retained with probability at least
//! `1 - alpha`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmBackend, LlmError};
use crate::model::{validate_alpha, Entity, ModelError, Question, ScoringKind, SqlCandidate};
use crate::personalizer::{hint_overrides, Hint};
use crate::schema::{MaskedSchema, Schema};
use crate::similarity::{score_columns, SimilarityProvider};
use crate::sql;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectorError {
    #[error("no calibration record has a correct candidate")]
    EmptyCalibration,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("calibration record has {candidates} candidates but {flags} flags and {scores} scores")]
    Misaligned { candidates: usize, flags: usize, scores: usize },
    #[error("calibration record has no candidates")]
    NoCandidates,
    #[error(transparent)]
    Backend(#[from] LlmError),
}

/// One calibration question with its generated candidates, which of them
/// are correct, and their scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub question: Question,
    pub candidates: Vec<SqlCandidate>,
    pub correct: Vec<bool>,
    pub scores: Vec<f64>,
}

impl CalibrationRecord {
    pub fn new(
        question: Question,
        candidates: Vec<SqlCandidate>,
        correct: Vec<bool>,
        scores: Vec<f64>,
    ) -> Result<Self, SelectorError> {
        if candidates.is_empty() {
            return Err(SelectorError::NoCandidates);
        }
        if correct.len() != candidates.len() || scores.len() != candidates.len() {
            return Err(SelectorError::Misaligned {
                candidates: candidates.len(),
                flags: correct.len(),
                scores: scores.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(ModelError::NonFiniteScore.into());
        }
        Ok(CalibrationRecord { question, candidates, correct, scores })
    }

    /// The lowest score among correct candidates, if any is correct.
    pub fn best_correct_score(&self) -> Option<f64> {
        self.scores.iter().zip(&self.correct).filter(|(_, c)| **c).map(|(s, _)| *s).reduce(f64::min)
    }
}

/// One score per record that has a correct candidate: the minimum over
/// its correct candidates.
pub fn collect_correct_scores(records: &[CalibrationRecord]) -> Result<Vec<f64>, SelectorError> {
    let out: Vec<f64> = records.iter().filter_map(CalibrationRecord::best_correct_score).collect();
    if out.is_empty() {
        return Err(SelectorError::EmptyCalibration);
    }
    Ok(out)
}

/// `ceil((n + 1) * (1 - alpha))`, snapping values within 1e-9 of an
/// integer so that e.g. `10 * 0.9` gives 9.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    let nearest = (x + 0.5) as usize;
    if (x - nearest as f64).abs() < 1e-9 {
        nearest
    } else {
        x as usize + 1
    }
}

/// The `k`-th smallest score with `k = ceil((n + 1)(1 - alpha))`, or
/// `None` (meaning +infinity) when `k > n`.
pub fn conformal_threshold(scores: &[f64], alpha: f64) -> Result<Option<f64>, SelectorError> {
    validate_alpha(alpha)?;
    if scores.is_empty() {
        return Err(SelectorError::EmptyCalibration);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ModelError::NonFiniteScore.into());
    }
    let k = quantile_rank(scores.len(), alpha);
    if k > scores.len() {
        return Ok(None);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Some(sorted[k.max(1) - 1]))
}

/// A fitted threshold. `threshold: None` admits every score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalModel {
    pub threshold: Option<f64>,
    pub alpha: f64,
    pub n: usize,
    pub scoring: ScoringKind,
}

impl ConformalModel {
    pub fn fit(scores: &[f64], alpha: f64, scoring: ScoringKind) -> Result<Self, SelectorError> {
        let threshold = conformal_threshold(scores, alpha)?;
        Ok(ConformalModel { threshold, alpha, n: scores.len(), scoring })
    }

    pub fn from_records(records: &[CalibrationRecord], alpha: f64, scoring: ScoringKind) -> Result<Self, SelectorError> {
        Self::fit(&collect_correct_scores(records)?, alpha, scoring)
    }

    /// Scores equal to the threshold are admitted.
    pub fn admits(&self, score: f64) -> bool {
        self.threshold.is_none_or(|t| score <= t)
    }

    /// Ids of the candidates to show, in their original order. Unscored
    /// candidates are never selected.
    pub fn select(&self, candidates: &[SqlCandidate]) -> Vec<String> {
        candidates.iter().filter(|c| c.score.is_some_and(|s| self.admits(s))).map(|c| c.id.clone()).collect()
    }
}

/// `1 - relevance` of the columns the candidate uses; 1 for candidates
/// that do not parse or resolve.
pub fn embedding_score(provider: &SimilarityProvider, entities: &[Entity], sql_text: &str, schema: &Schema) -> f64 {
    match sql::parse_sql(sql_text).and_then(|q| sql::columns_used(&q, schema)) {
        Ok(used) => 1.0 - score_columns(provider, &used, schema, entities),
        Err(_) => 1.0,
    }
}

/// Scores every candidate in place with `kind`. With `fallback` set, a
/// backend without token probabilities switches to embedding scoring; the
/// kind actually used is returned.
#[allow(clippy::too_many_arguments)]
pub fn score_candidates(
    kind: ScoringKind,
    fallback: bool,
    backend: &dyn LlmBackend,
    provider: &SimilarityProvider,
    question: &Question,
    schema: &MaskedSchema,
    candidates: &mut [SqlCandidate],
    hints: &[Hint],
) -> Result<ScoringKind, SelectorError> {
    let entities = question.entities.clone().unwrap_or_default();
    if kind == ScoringKind::Llm {
        let mut scores = Vec::with_capacity(candidates.len());
        for c in candidates.iter() {
            match backend.score_yes_no(question, schema, &c.sql_text, hints) {
                Ok(s) => scores.push(s),
                Err(LlmError::LogitsUnavailable) if fallback => {
                    log::warn!("backend exposes no token probabilities; falling back to embedding scoring");
                    return score_candidates(
                        ScoringKind::Embedding,
                        false,
                        backend,
                        provider,
                        question,
                        schema,
                        candidates,
                        hints,
                    );
                }
                Err(e) => return Err(e.into()),
            }
        }
        for (c, s) in candidates.iter_mut().zip(scores) {
            c.set_score(s)?;
        }
        return Ok(ScoringKind::Llm);
    }
    let provider = provider.with_overrides(&hint_overrides(hints));
    for c in candidates.iter_mut() {
        let s = embedding_score(&provider, &entities, &c.sql_text, schema.base());
        c.set_score(s)?;
    }
    Ok(ScoringKind::Embedding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;
    use crate::schema::{Column, ColumnRef, Table};
    use alloc::vec;

    fn cand(id: &str, score: f64) -> SqlCandidate {
        let mut c = SqlCandidate::new(id, alloc::format!("SELECT {id} FROM t"), Strategy::SchemaMasking).unwrap();
        c.set_score(score).unwrap();
        c
    }

    fn q() -> Question {
        Question::new("q", "u", "d").unwrap()
    }

    #[test]
    fn thresholds_by_hand() {
        let s: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        assert_eq!(conformal_threshold(&s, 0.1).unwrap(), Some(0.9));
        let s: Vec<f64> = (1..=19).map(|i| i as f64).collect();
        assert_eq!(conformal_threshold(&s, 0.05).unwrap(), Some(19.0));
        assert_eq!(conformal_threshold(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.05).unwrap(), None);
        assert_eq!(conformal_threshold(&[], 0.1).unwrap_err(), SelectorError::EmptyCalibration);
        assert!(conformal_threshold(&[1.0], 1.0).is_err());
        assert_eq!(quantile_rank(9, 0.1), 9);
        assert_eq!(quantile_rank(19, 0.05), 19);
    }

    #[test]
    fn selection_keeps_order_and_ties() {
        let m = ConformalModel { threshold: Some(0.9), alpha: 0.1, n: 9, scoring: ScoringKind::Llm };
        assert_eq!(m.select(&[cand("a", 0.1), cand("b", 0.95)]), ["a"]);
        assert_eq!(m.select(&[cand("a", 0.9), cand("b", 0.2)]), ["a", "b"]);
        assert!(m.select(&[cand("a", 0.91)]).is_empty());
        let inf = ConformalModel { threshold: None, ..m };
        assert_eq!(inf.select(&[cand("a", 0.91), cand("b", 1.0)]).len(), 2);
    }

    #[test]
    fn correct_scores_per_record() {
        let rec = |scores: Vec<f64>, correct: Vec<bool>| {
            let cands = (0..scores.len()).map(|i| cand(&alloc::format!("c{i}"), scores[i])).collect();
            CalibrationRecord::new(q(), cands, correct, scores).unwrap()
        };
        let records = vec![
            rec(vec![0.2, 0.7], vec![true, false]),
            rec(vec![0.5], vec![true]),
            rec(vec![0.9, 0.3], vec![false, true]),
            rec(vec![0.4, 0.8], vec![false, false]),
            rec(vec![0.4, 0.1], vec![true, true]),
        ];
        assert_eq!(collect_correct_scores(&records).unwrap(), [0.2, 0.5, 0.3, 0.1]);
        assert_eq!(collect_correct_scores(&records[3..4]).unwrap_err(), SelectorError::EmptyCalibration);
        assert!(matches!(
            CalibrationRecord::new(q(), vec![cand("a", 0.1)], vec![], vec![0.1]),
            Err(SelectorError::Misaligned { .. })
        ));
        let m = ConformalModel::from_records(&records, 0.5, ScoringKind::Embedding).unwrap();
        assert_eq!(m.n, 4);
    }

    #[test]
    fn embedding_scores() {
        let schema = Schema::new(
            "s",
            vec![Table::new("t", vec![Column::new("a", "text"), Column::new("b", "text"), Column::new("z", "text")])],
        )
        .unwrap();
        let p = SimilarityProvider::lexicon(0.1)
            .with("x", ColumnRef::new("t", "a"), 0.9)
            .with("y", ColumnRef::new("t", "b"), 0.9);
        let e = vec![Entity::new("x").unwrap(), Entity::new("y").unwrap()];
        assert!((embedding_score(&p, &e, "SELECT a, b FROM t", &schema) - 0.1).abs() < 1e-12);
        assert!((embedding_score(&p, &e, "SELECT z FROM t", &schema) - 0.9).abs() < 1e-12);
        assert_eq!(embedding_score(&p, &e, "SELECT FROM", &schema), 1.0);
    }

    proptest::proptest! {
        #[test]
        fn select_is_monotone(scores in proptest::collection::vec(0.0f64..1.0, 1..20), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let cands: Vec<_> = scores.iter().enumerate().map(|(i, s)| cand(&alloc::format!("c{i}"), *s)).collect();
            let m = |t| ConformalModel { threshold: Some(t), alpha: 0.1, n: 1, scoring: ScoringKind::Llm };
            let a = m(lo).select(&cands);
            let b = m(hi).select(&cands);
            proptest::prop_assert!(a.iter().all(|id| b.contains(id)));
        }

        #[test]
        fn threshold_monotone_in_alpha(scores in proptest::collection::vec(0.0f64..1.0, 1..50), a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let (small, large) = if a <= b { (a, b) } else { (b, a) };
            let inf = f64::INFINITY;
            let t_small = conformal_threshold(&scores, small).unwrap().unwrap_or(inf);
            let t_large = conformal_threshold(&scores, large).unwrap().unwrap_or(inf);
            proptest::prop_assert!(t_large <= t_small);
        }
    }
}
