//! Entity-to-column similarity and the schema relevance score built on it.
//!
//! The base similarity is lexical: a blend of token and character-trigram
//! Dice coefficients between the entity phrase and the text
//! `"<table> <column> <description>"`. Lexicon overrides replace the base
//! value for specific (phrase, column) pairs; user hints are applied this
//! way.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::Entity;
use crate::schema::{ColumnRef, MaskedSchema, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Lexical similarity for pairs without an override.
    #[default]
    Embedding,
    /// Only overrides count; other pairs get a fixed default.
    Lexicon,
}

/// (normalized phrase, column) → similarity.
pub type Overrides = BTreeMap<(String, ColumnRef), f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProvider {
    pub mode: SimilarityMode,
    /// Value for unlisted pairs in lexicon mode.
    pub lexicon_default: f64,
    #[serde(with = "override_list")]
    overrides: Overrides,
}

impl Default for SimilarityProvider {
    fn default() -> Self {
        SimilarityProvider { mode: SimilarityMode::Embedding, lexicon_default: 0.1, overrides: Overrides::new() }
    }
}

impl SimilarityProvider {
    pub fn embedding() -> Self {
        Self::default()
    }

    pub fn lexicon(default: f64) -> Self {
        SimilarityProvider { mode: SimilarityMode::Lexicon, lexicon_default: clamp(default), ..Self::default() }
    }

    pub fn set(&mut self, phrase: &str, col: ColumnRef, sim: f64) {
        self.overrides.insert((normalize(phrase), col), clamp(sim));
    }

    pub fn with(mut self, phrase: &str, col: ColumnRef, sim: f64) -> Self {
        self.set(phrase, col, sim);
        self
    }

    /// A copy with `extra` layered on top of the existing overrides.
    pub fn with_overrides(&self, extra: &Overrides) -> Self {
        let mut out = self.clone();
        for (k, v) in extra {
            out.overrides.insert(k.clone(), clamp(*v));
        }
        out
    }

    pub fn overrides(&self) -> &Overrides {
        &self.overrides
    }

    pub fn override_for(&self, phrase: &str, col: &ColumnRef) -> Option<f64> {
        self.overrides.get(&(normalize(phrase), col.clone())).copied()
    }

    /// Similarity of `phrase` to `col` read in the context of its table.
    pub fn similarity(&self, phrase: &str, col: &ColumnRef, schema: &Schema) -> f64 {
        if let Some(v) = self.override_for(phrase, col) {
            return v;
        }
        match self.mode {
            SimilarityMode::Lexicon => self.lexicon_default,
            SimilarityMode::Embedding => {
                let mut context = alloc::format!("{} {}", col.table, col.column);
                if let Some(d) = schema.column(col).and_then(|c| c.description.as_deref()) {
                    context.push(' ');
                    context.push_str(d);
                }
                text_similarity(phrase, &context)
            }
        }
    }

    /// Similarity between two phrases; overrides do not apply.
    pub fn phrase_similarity(&self, a: &str, b: &str) -> f64 {
        if normalize(a) == normalize(b) {
            1.0
        } else {
            text_similarity(a, b)
        }
    }
}

/// Similarity of an entity to a column.
pub fn cal_sim(provider: &SimilarityProvider, entity: &Entity, col: &ColumnRef, schema: &Schema) -> f64 {
    provider.similarity(&entity.phrase, col, schema)
}

/// Minimum over entities of the best similarity among `columns`; 0 when
/// `columns` is empty.
pub fn score_columns(provider: &SimilarityProvider, columns: &[ColumnRef], schema: &Schema, entities: &[Entity]) -> f64 {
    if columns.is_empty() {
        return 0.0;
    }
    entities
        .iter()
        .map(|e| columns.iter().map(|c| cal_sim(provider, e, c, schema)).fold(0.0, f64::max))
        .fold(1.0, f64::min)
}

/// Relevance of a masked schema to the question's entities.
pub fn cal_score(provider: &SimilarityProvider, schema: &MaskedSchema, entities: &[Entity]) -> f64 {
    score_columns(provider, &schema.visible_columns(), schema.base(), entities)
}

/// Lower-cased, whitespace-collapsed phrase used as an override key.
pub fn normalize(phrase: &str) -> String {
    let mut out = String::new();
    for w in phrase.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&w.to_lowercase());
    }
    out
}

fn clamp(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Splits identifiers and prose into lower-case word stems: on
/// non-alphanumerics, underscores and camelCase boundaries, with a plural
/// `s` stripped.
fn tokens(text: &str) -> BTreeSet<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if ch.is_uppercase() && prev_lower && !cur.is_empty() {
                words.push(core::mem::take(&mut cur));
            }
            prev_lower = ch.is_lowercase() || ch.is_numeric();
            cur.extend(ch.to_lowercase());
        } else {
            prev_lower = false;
            if !cur.is_empty() {
                words.push(core::mem::take(&mut cur));
            }
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words.into_iter().map(stem).collect()
}

fn stem(mut w: String) -> String {
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
        w.pop();
    }
    w
}

fn trigrams(tokens: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for t in tokens {
        let padded: Vec<char> = core::iter::once(' ').chain(t.chars()).chain(core::iter::once(' ')).collect();
        for w in padded.windows(3) {
            out.insert(w.iter().collect());
        }
    }
    out
}

fn dice<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

/// Lexical similarity in [0, 1]: the mean of token and trigram Dice
/// coefficients.
pub fn text_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    clamp(0.5 * dice(&ta, &tb) + 0.5 * dice(&trigrams(&ta), &trigrams(&tb)))
}

mod override_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        entity: String,
        table: crate::Ident,
        column: crate::Ident,
        weight: f64,
    }

    pub fn serialize<S: Serializer>(map: &Overrides, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<Entry> = map
            .iter()
            .map(|((p, c), w)| Entry { entity: p.clone(), table: c.table.clone(), column: c.column.clone(), weight: *w })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Overrides, D::Error> {
        let list = Vec::<Entry>::deserialize(d)?;
        Ok(list
            .into_iter()
            .map(|e| ((normalize(&e.entity), ColumnRef { table: e.table, column: e.column }), clamp(e.weight)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Column, Table};
    use alloc::sync::Arc;
    use alloc::vec;

    fn students() -> Arc<Schema> {
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

    fn lexicon() -> SimilarityProvider {
        SimilarityProvider::lexicon(0.1)
            .with("hometown", ColumnRef::new("students", "birthplace"), 0.9)
            .with("hometown", ColumnRef::new("students", "origin"), 0.85)
            .with("roll number", ColumnRef::new("students", "roll_num"), 0.95)
    }

    fn entities() -> Vec<Entity> {
        vec![Entity::new("hometown").unwrap(), Entity::new("roll number").unwrap()]
    }

    #[test]
    fn override_wins() {
        let s = students();
        let p = SimilarityProvider::embedding().with("Hometown", ColumnRef::new("students", "origin"), 0.85);
        assert_eq!(p.similarity("hometown", &ColumnRef::new("students", "origin"), &s), 0.85);
    }

    #[test]
    fn relevance_scores_by_hand() {
        let full = MaskedSchema::full(students());
        let p = lexicon();
        let e = entities();
        assert_eq!(cal_score(&p, &full, &e), 0.9);
        let no_birth = full.remove_col(&ColumnRef::new("students", "birthplace")).unwrap();
        assert_eq!(cal_score(&p, &no_birth, &e), 0.85);
        let no_roll = full.remove_col(&ColumnRef::new("students", "roll_num")).unwrap();
        assert_eq!(cal_score(&p, &no_roll, &e), 0.1);
        let empty = MaskedSchema::with_removed(students(), students().columns()).unwrap();
        assert_eq!(cal_score(&p, &empty, &e), 0.0);
    }

    #[test]
    fn table_context_separates_same_named_columns() {
        let schema = Schema::new(
            "school",
            vec![
                Table::new("students", vec![Column::new("address", "text"), Column::new("name", "text")]),
                Table::new("teachers", vec![Column::new("address", "text")]),
            ],
        )
        .unwrap();
        let p = SimilarityProvider::embedding();
        let s = p.similarity("student address", &ColumnRef::new("students", "address"), &schema);
        let t = p.similarity("student address", &ColumnRef::new("teachers", "address"), &schema);
        assert!(s > t, "{s} vs {t}");
        let name = p.similarity("student address", &ColumnRef::new("students", "name"), &schema);
        assert!(s > name);
    }

    #[test]
    fn descriptions_count() {
        let schema = Schema::new(
            "s",
            vec![Table::new(
                "people",
                vec![Column::new("c1", "text").described("home town"), Column::new("c2", "text")],
            )],
        )
        .unwrap();
        let p = SimilarityProvider::embedding();
        assert!(
            p.similarity("home town", &ColumnRef::new("people", "c1"), &schema)
                > p.similarity("home town", &ColumnRef::new("people", "c2"), &schema)
        );
    }

    #[test]
    fn phrase_similarity_bounds() {
        let p = SimilarityProvider::embedding();
        assert_eq!(p.phrase_similarity("Hometown", "hometown"), 1.0);
        assert!(p.phrase_similarity("total sales", "singers") < 0.8);
        assert!(text_similarity("rollNumber", "roll_number") > 0.99);
    }

    #[test]
    fn serde_round_trip() {
        let p = lexicon();
        let json = serde_json::to_string(&p).unwrap();
        let back: SimilarityProvider = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }

    proptest::proptest! {
        #[test]
        fn similarity_in_unit_interval(a in "[a-zA-Z _]{0,20}", b in "[a-zA-Z _]{0,20}", w in -2.0f64..2.0) {
            let v = text_similarity(&a, &b);
            proptest::prop_assert!((0.0..=1.0).contains(&v));
            let p = SimilarityProvider::embedding().with(&a, ColumnRef::new("t", "c"), w);
            let s = Schema::new("d", vec![Table::new("t", vec![Column::new("c", "text")])]).unwrap();
            let v = p.similarity(&a, &ColumnRef::new("t", "c"), &s);
            proptest::prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
