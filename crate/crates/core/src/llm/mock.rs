//! Deterministic stand-in for a language model, driven by a linking table.
//!
//! For each entity the oracle lists candidate columns with weights. The
//! mock answers with the highest-weight visible column per entity (hints
//! override the weights), so masking a column makes it fall back to the
//! next alternative. All randomness is seeded from the call's inputs.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenerationRequest, LlmBackend, LlmError};
use crate::hash::Fnv;
use crate::ident::Ident;
use crate::model::{Entity, Question};
use crate::personalizer::Hint;
use crate::schema::{ColumnRef, MaskedSchema, Schema};
use crate::similarity::{normalize, SimilarityProvider};
use crate::sql::{self, BinaryOp, Expr, Join, Query, RenderStyle, SelectItem, TableRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedColumn {
    pub table: Ident,
    pub column: Ident,
    pub weight: f64,
}

impl WeightedColumn {
    pub fn column_ref(&self) -> ColumnRef {
        ColumnRef::new(self.table.clone(), self.column.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub entity: String,
    pub columns: Vec<WeightedColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldPreference {
    pub user: String,
    pub entity: String,
    pub table: Ident,
    pub column: Ident,
}

/// SQL for questions containing `question`; `{phrase}` expands to the
/// chosen `table.column`, `{phrase.table}` and `{phrase.column}` to its
/// parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlTemplate {
    pub question: String,
    pub sql: String,
}

fn default_noise() -> f64 {
    0.15
}

fn default_diversity() -> f64 {
    0.1
}

fn default_floor() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockOracle {
    pub linking: Vec<LinkEntry>,
    #[serde(default)]
    pub gold: Vec<GoldPreference>,
    /// Probability that a generation swaps one entity's column for an
    /// unrelated one.
    #[serde(default = "default_noise")]
    pub noise_rate: f64,
    #[serde(default)]
    pub templates: Vec<SqlTemplate>,
    /// Probability that a high-temperature sample picks a runner-up column.
    #[serde(default = "default_diversity")]
    pub diversity_rate: f64,
    /// Columns must weigh strictly more than this to be used.
    #[serde(default = "default_floor")]
    pub floor: f64,
}

impl MockOracle {
    pub fn new(linking: Vec<LinkEntry>) -> Self {
        MockOracle {
            linking,
            gold: Vec::new(),
            noise_rate: default_noise(),
            templates: Vec::new(),
            diversity_rate: default_diversity(),
            floor: default_floor(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: String| Err(LlmError::InvalidOracle(m));
        for (name, p) in [("noise_rate", self.noise_rate), ("diversity_rate", self.diversity_rate), ("floor", self.floor)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(alloc::format!("{name} {p} outside [0, 1]"));
            }
        }
        for (i, l) in self.linking.iter().enumerate() {
            if normalize(&l.entity).is_empty() {
                return bad(alloc::format!("linking entry {i} has an empty entity"));
            }
            if self.linking[..i].iter().any(|o| normalize(&o.entity) == normalize(&l.entity)) {
                return bad(alloc::format!("entity `{}` listed twice", l.entity));
            }
            for c in &l.columns {
                if !(0.0..=1.0).contains(&c.weight) {
                    return bad(alloc::format!("weight {} for `{}` outside [0, 1]", c.weight, l.entity));
                }
            }
        }
        for g in &self.gold {
            let col = ColumnRef::new(g.table.clone(), g.column.clone());
            let listed = self.link(&g.entity).is_some_and(|l| l.columns.iter().any(|c| c.column_ref() == col));
            if !listed {
                return bad(alloc::format!("gold preference {col} for `{}` is not in the linking table", g.entity));
            }
        }
        Ok(())
    }

    pub fn link(&self, phrase: &str) -> Option<&LinkEntry> {
        let key = normalize(phrase);
        self.linking.iter().find(|l| normalize(&l.entity) == key)
    }

    pub fn gold_for(&self, user: &str, entity: &str) -> Option<ColumnRef> {
        let key = normalize(entity);
        self.gold
            .iter()
            .find(|g| g.user == user && normalize(&g.entity) == key)
            .map(|g| ColumnRef::new(g.table.clone(), g.column.clone()))
    }

    /// A lexicon similarity provider carrying the linking weights.
    pub fn similarity(&self, default: f64) -> SimilarityProvider {
        let mut p = SimilarityProvider::lexicon(default);
        for l in &self.linking {
            for c in &l.columns {
                p.set(&l.entity, c.column_ref(), c.weight);
            }
        }
        p
    }

    /// Linking phrases found in `text` at word boundaries, longest match
    /// first, in order of appearance.
    pub fn find_entities(&self, text: &str) -> Vec<Entity> {
        let hay = text.to_ascii_lowercase();
        let bytes = hay.as_bytes();
        let boundary = |i: usize| i >= bytes.len() || !bytes[i].is_ascii_alphanumeric();
        let mut hits: Vec<(usize, usize)> = Vec::new();
        for l in &self.linking {
            let needle = normalize(&l.entity).to_ascii_lowercase();
            let mut from = 0;
            while let Some(pos) = hay[from..].find(&needle) {
                let (s, e) = (from + pos, from + pos + needle.len());
                if (s == 0 || boundary(s - 1)) && boundary(e) {
                    hits.push((s, e));
                }
                from = s + 1;
                while !hay.is_char_boundary(from) {
                    from += 1;
                }
            }
        }
        hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut out: Vec<Entity> = Vec::new();
        let mut end = 0;
        for (s, e) in hits {
            if s < end {
                continue;
            }
            end = e;
            let phrase = text[s..e].to_string();
            if !out.iter().any(|o| normalize(&o.phrase) == normalize(&phrase)) {
                out.push(Entity { phrase });
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    oracle: MockOracle,
    seed: u64,
    temperature: f64,
    /// How many of the most recent prior queries forced diversity looks at.
    prior_window: usize,
}

#[derive(Clone, Copy)]
enum Style {
    Canonical,
    Lowercase,
    Aliased,
}

/// One column per entity.
type Plan = Vec<ColumnRef>;

impl MockBackend {
    pub fn new(oracle: MockOracle, seed: u64) -> Result<Self, LlmError> {
        oracle.validate()?;
        Ok(MockBackend { oracle, seed, temperature: 0.0, prior_window: 4 })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.max(0.0);
        self
    }

    pub fn with_prior_window(mut self, window: usize) -> Self {
        self.prior_window = window;
        self
    }

    pub fn oracle(&self) -> &MockOracle {
        &self.oracle
    }

    fn entities(&self, q: &Question) -> Vec<Entity> {
        match &q.entities {
            Some(e) => e.clone(),
            None => self.extract(q),
        }
    }

    fn extract(&self, q: &Question) -> Vec<Entity> {
        let found = self.oracle.find_entities(&q.text);
        if found.is_empty() {
            vec![Entity { phrase: q.text.trim().trim_end_matches('?').trim().to_string() }]
        } else {
            found
        }
    }

    /// Columns for `phrase` by decreasing weight, hint overrides applied.
    fn ranked(&self, phrase: &str, hints: &[Hint]) -> Vec<(ColumnRef, f64)> {
        let mut out: Vec<(ColumnRef, f64)> = self
            .oracle
            .link(phrase)
            .map(|l| l.columns.iter().map(|c| (c.column_ref(), c.weight)).collect())
            .unwrap_or_default();
        let key = normalize(phrase);
        for h in hints.iter().filter(|h| normalize(&h.entity) == key) {
            for r in &h.rejected {
                match out.iter_mut().find(|(c, _)| c == r) {
                    Some(slot) => slot.1 = 0.0,
                    None => out.push((r.clone(), 0.0)),
                }
            }
            match out.iter_mut().find(|(c, _)| *c == h.preferred) {
                Some(slot) => slot.1 = 1.0,
                None => out.push((h.preferred.clone(), 1.0)),
            }
        }
        // stable: ties keep listing order
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    fn top_plan(&self, schema: &MaskedSchema, ranked: &[Vec<(ColumnRef, f64)>]) -> Result<Plan, LlmError> {
        ranked
            .iter()
            .map(|r| {
                r.iter()
                    .find(|(c, w)| *w > self.oracle.floor && schema.is_visible(c))
                    .map(|(c, _)| c.clone())
                    .map_or_else(|| self.stand_in(schema, r), Ok)
            })
            .collect()
    }

    /// Column used when an entity has no plausible visible column: the
    /// best listed one under the floor, else the first visible column of
    /// the entity's home table, else the first visible column.
    fn stand_in(&self, schema: &MaskedSchema, ranked: &[(ColumnRef, f64)]) -> Result<ColumnRef, LlmError> {
        if let Some((c, _)) = ranked.iter().find(|(c, _)| schema.is_visible(c)) {
            return Ok(c.clone());
        }
        let visible = schema.visible_columns();
        let home = ranked.first().map(|(c, _)| c.table.clone());
        visible
            .iter()
            .find(|c| Some(&c.table) == home.as_ref())
            .or_else(|| visible.first())
            .cloned()
            .ok_or_else(|| LlmError::GenerationRefused("no visible columns".into()))
    }

    /// The top plan, then plans that swap a single entity to one of its
    /// other plausible visible columns.
    fn plans(&self, schema: &MaskedSchema, ranked: &[Vec<(ColumnRef, f64)>]) -> Result<Vec<Plan>, LlmError> {
        let top = self.top_plan(schema, ranked)?;
        let mut out = vec![top.clone()];
        for (i, r) in ranked.iter().enumerate() {
            for (c, w) in r {
                if *w > self.oracle.floor && schema.is_visible(c) && *c != top[i] {
                    let mut p = top.clone();
                    p[i] = c.clone();
                    out.push(p);
                }
            }
        }
        Ok(out)
    }

    fn render(&self, q: &Question, schema: &MaskedSchema, entities: &[Entity], plan: &Plan, style: Style) -> Result<String, LlmError> {
        let text = q.text.to_ascii_lowercase();
        if let Some(t) = self.oracle.templates.iter().find(|t| text.contains(&t.question.to_ascii_lowercase())) {
            return self.fill_template(t, schema, entities, plan, style);
        }
        let query = default_query(schema, plan, style);
        let rs = match style {
            Style::Lowercase => RenderStyle { lowercase_keywords: true, trailing_semicolon: true },
            _ => RenderStyle::default(),
        };
        Ok(sql::render_with(&query, rs))
    }

    fn fill_template(
        &self,
        t: &SqlTemplate,
        schema: &MaskedSchema,
        entities: &[Entity],
        plan: &Plan,
        style: Style,
    ) -> Result<String, LlmError> {
        let mut values: Vec<(String, String)> = Vec::new();
        for (e, c) in entities.iter().zip(plan) {
            let key = normalize(&e.phrase);
            values.push((alloc::format!("{key}.table"), c.table.to_string()));
            values.push((alloc::format!("{key}.column"), c.column.to_string()));
            values.push((key, c.to_string()));
        }
        let pairs: Vec<(&str, &str)> = values.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let filled = super::prompt::render_template(&t.sql, &pairs);
        let parsed = sql::parse_sql(&filled)
            .map_err(|e| LlmError::GenerationRefused(alloc::format!("template does not parse: {e}")))?;
        let used = sql::columns_used(&parsed, schema.base())
            .map_err(|e| LlmError::GenerationRefused(alloc::format!("template does not resolve: {e}")))?;
        if let Some(hidden) = used.iter().find(|c| !schema.is_visible(c)) {
            return Err(LlmError::GenerationRefused(alloc::format!("template needs masked column {hidden}")));
        }
        let rs = match style {
            Style::Lowercase => RenderStyle { lowercase_keywords: true, trailing_semicolon: true },
            _ => RenderStyle::default(),
        };
        Ok(sql::render_with(&parsed, rs))
    }

    fn rng(&self, kind: &str, req_parts: &[&str], sample: Option<u32>) -> ChaCha8Rng {
        let mut h = Fnv::new().u64(self.seed).str(kind);
        for p in req_parts {
            h = h.str(p);
        }
        if let Some(s) = sample {
            h = h.u64(u64::from(s));
        }
        ChaCha8Rng::seed_from_u64(h.finish())
    }

    /// Column sets of the prior queries that forced diversity still sees.
    fn prior_sets(&self, schema: &Schema, prior: &[String]) -> Vec<BTreeSet<ColumnRef>> {
        let start = prior.len().saturating_sub(self.prior_window);
        prior[start..]
            .iter()
            .filter_map(|p| sql::parse_sql(p).ok().and_then(|q| sql::columns_used(&q, schema).ok()))
            .map(|cols| cols.into_iter().collect())
            .collect()
    }
}

fn default_query(schema: &MaskedSchema, plan: &Plan, style: Style) -> Query {
    let mut cols: Vec<&ColumnRef> = Vec::new();
    for c in plan {
        if !cols.contains(&c) {
            cols.push(c);
        }
    }
    let mut tables: Vec<Ident> = Vec::new();
    for c in &cols {
        if !tables.contains(&c.table) {
            tables.push(c.table.clone());
        }
    }
    let aliased = matches!(style, Style::Aliased);
    let binding = |t: &Ident| -> Ident {
        if aliased {
            Ident::new(alloc::format!("T{}", tables.iter().position(|x| x == t).unwrap_or(0) + 1))
        } else {
            t.clone()
        }
    };
    let qualify = tables.len() > 1 || aliased;
    let col_expr = |c: &ColumnRef| {
        if qualify {
            Expr::qualified(binding(&c.table), c.column.clone())
        } else {
            Expr::column(c.column.clone())
        }
    };
    let table_ref = |t: &Ident| if aliased { TableRef::aliased(t.clone(), binding(t)) } else { TableRef::new(t.clone()) };
    let projection = cols.iter().map(|c| SelectItem::Expr { expr: col_expr(c), alias: None }).collect();
    let mut q = Query::simple(projection, table_ref(&tables[0]));
    let visible = schema.visible_columns();
    for (i, t) in tables.iter().enumerate().skip(1) {
        let mine: Vec<&ColumnRef> = visible.iter().filter(|c| &c.table == t).collect();
        let earlier: Vec<&ColumnRef> = visible.iter().filter(|c| tables[..i].contains(&c.table)).collect();
        // prefer a same-named column as the join key
        let pair = mine
            .iter()
            .find_map(|m| earlier.iter().find(|e| e.column == m.column).map(|e| (*e, *m)))
            .or_else(|| Some((*earlier.first()?, *mine.first()?)));
        let on = match pair {
            Some((l, r)) => Expr::binary(col_expr(l), BinaryOp::Eq, col_expr(r)),
            None => Expr::binary(
                Expr::Literal(sql::Literal::Integer(1)),
                BinaryOp::Eq,
                Expr::Literal(sql::Literal::Integer(1)),
            ),
        };
        q.joins.push(Join { table: table_ref(t), on });
    }
    q
}

fn hint_key(hints: &[Hint]) -> String {
    let mut s = String::new();
    for h in hints {
        s.push_str(&h.text);
        s.push('\n');
    }
    s
}

impl LlmBackend for MockBackend {
    fn backend_id(&self) -> String {
        alloc::format!("mock(seed={}, temperature={})", self.seed, self.temperature)
    }

    fn generate_sql(&self, req: &GenerationRequest<'_>) -> Result<String, LlmError> {
        if req.schema.is_empty() {
            return Err(LlmError::GenerationRefused("schema has no visible columns".into()));
        }
        let temperature = req.temperature.unwrap_or(self.temperature);
        let entities = self.entities(req.question);
        let ranked: Vec<_> = entities.iter().map(|e| self.ranked(&e.phrase, req.hints)).collect();
        let key = req.schema.canonical_key();
        let hints = hint_key(req.hints);
        let prior = req.prior.join("\n");
        let parts = [req.question.text.as_str(), key.as_str(), hints.as_str(), prior.as_str()];
        let sample = (temperature > 0.0).then_some(req.sample);
        let mut rng = self.rng("generate", &parts, sample);

        let (mut plan, style) = if !req.prior.is_empty() {
            let seen = self.prior_sets(req.schema.base(), req.prior);
            let plans = self.plans(req.schema, &ranked)?;
            let fresh = plans.iter().find(|p| {
                self.render(req.question, req.schema, &entities, p, Style::Canonical)
                    .ok()
                    .and_then(|text| sql::parse_sql(&text).ok())
                    .and_then(|q| sql::columns_used(&q, req.schema.base()).ok())
                    .is_some_and(|cols| !seen.contains(&cols.into_iter().collect()))
            });
            (fresh.unwrap_or(&plans[0]).clone(), Style::Canonical)
        } else if temperature > 0.0 && req.sample > 0 {
            let plans = self.plans(req.schema, &ranked)?;
            let plan = if plans.len() > 1 && rng.random::<f64>() < self.oracle.diversity_rate {
                plans[rng.random_range(1..plans.len())].clone()
            } else {
                plans[0].clone()
            };
            let style = match rng.random_range(0..3) {
                0 => Style::Canonical,
                1 => Style::Lowercase,
                _ => Style::Aliased,
            };
            (plan, style)
        } else {
            (self.top_plan(req.schema, &ranked)?, Style::Canonical)
        };

        if rng.random::<f64>() < self.oracle.noise_rate {
            let i = rng.random_range(0..plan.len());
            let unrelated: Vec<ColumnRef> = req
                .schema
                .visible_columns()
                .into_iter()
                .filter(|c| !ranked[i].iter().any(|(r, w)| r == c && *w > self.oracle.floor))
                .collect();
            if !unrelated.is_empty() {
                plan[i] = unrelated[rng.random_range(0..unrelated.len())].clone();
            }
        }
        self.render(req.question, req.schema, &entities, &plan, style)
    }

    fn extract_entities(&self, question: &Question) -> Result<Vec<Entity>, LlmError> {
        Ok(self.extract(question))
    }

    fn score_yes_no(&self, question: &Question, schema: &MaskedSchema, sql_text: &str, hints: &[Hint]) -> Result<f64, LlmError> {
        if sql_text.trim().is_empty() {
            return Ok(1.0);
        }
        let Ok(used) = sql::parse_sql(sql_text).and_then(|q| sql::columns_used(&q, schema.base())) else {
            return Ok(1.0);
        };
        let coverage = self
            .entities(question)
            .iter()
            .map(|e| {
                self.ranked(&e.phrase, hints)
                    .iter()
                    .filter(|(c, _)| used.contains(c))
                    .map(|(_, w)| *w)
                    .fold(0.0, f64::max)
            })
            .fold(1.0, f64::min);
        Ok((1.0 - coverage).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{forced_diversity_generate, sampling_generate};
    use crate::schema::{Column, Table};
    use alloc::sync::Arc;

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
                        Column::new("name", "text"),
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

    fn backend() -> MockBackend {
        MockBackend::new(oracle(), 7).unwrap()
    }

    fn question() -> Question {
        Question::new("Find the hometown of students", "u1", "school").unwrap()
    }

    fn hint(preferred: &str, rejected: &[&str]) -> Hint {
        Hint {
            id: "h1".into(),
            user_id: "u1".into(),
            entity: "hometown".into(),
            preferred: ColumnRef::new("students", preferred),
            rejected: rejected.iter().map(|r| ColumnRef::new("students", *r)).collect(),
            text: String::new(),
            created_at: 0,
            session: "s".into(),
        }
    }

    fn gen(b: &MockBackend, m: &MaskedSchema, hints: &[Hint]) -> String {
        b.generate_sql(&GenerationRequest::new(m, &question(), hints)).unwrap()
    }

    #[test]
    fn masking_and_hints_steer_the_column() {
        let b = backend();
        let full = MaskedSchema::full(schema());
        assert_eq!(gen(&b, &full, &[]), "SELECT birthplace FROM students");
        let masked = full.remove_col(&ColumnRef::new("students", "birthplace")).unwrap();
        assert_eq!(gen(&b, &masked, &[]), "SELECT origin FROM students");
        assert_eq!(gen(&b, &full, &[hint("origin", &["birthplace"])]), "SELECT origin FROM students");
    }

    #[test]
    fn entity_extraction() {
        let b = backend();
        let q = Question::new("Find the hometown and roll number of students", "u", "school").unwrap();
        let e: Vec<String> = b.extract_entities(&q).unwrap().into_iter().map(|e| e.phrase).collect();
        assert_eq!(e, ["hometown", "roll number"]);
        let q = Question::new("hometowns of people", "u", "school").unwrap();
        let e = b.extract_entities(&q).unwrap();
        assert_eq!(e[0].phrase, "hometowns of people", "no word-boundary match falls back to the question");
    }

    #[test]
    fn yes_no_scores() {
        let b = backend();
        let full = MaskedSchema::full(schema());
        let q = question();
        assert!((b.score_yes_no(&q, &full, "SELECT birthplace FROM students", &[]).unwrap() - 0.1).abs() < 1e-12);
        assert!(b.score_yes_no(&q, &full, "SELECT name FROM students", &[]).unwrap() >= 0.9);
        assert_eq!(b.score_yes_no(&q, &full, "", &[]).unwrap(), 1.0);
        assert_eq!(b.score_yes_no(&q, &full, "SELECT FROM", &[]).unwrap(), 1.0);
        let with_hint = b.score_yes_no(&q, &full, "SELECT origin FROM students", &[hint("origin", &[])]).unwrap();
        assert_eq!(with_hint, 0.0);
    }

    #[test]
    fn sampling_behaviour() {
        let b = backend();
        let full = MaskedSchema::full(schema());
        let q = question();
        let one = sampling_generate(&b, &full, &q, &[], 1, 1.0).unwrap();
        assert_eq!(one, ["SELECT birthplace FROM students"]);
        let cold = sampling_generate(&b, &full, &q, &[], 5, 0.0).unwrap();
        assert!(cold.iter().all(|s| s == &cold[0]));
        let hot = sampling_generate(&b, &full, &q, &[], 30, 1.0).unwrap();
        for s in &hot {
            let used = sql::columns_used(&sql::parse_sql(s).unwrap(), &schema()).unwrap();
            assert!(used.len() == 1 && ["birthplace", "origin"].contains(&used[0].column.as_str()), "{s}");
        }
        assert_eq!(hot, sampling_generate(&b, &full, &q, &[], 30, 1.0).unwrap());
    }

    #[test]
    fn forced_diversity_walks_then_repeats() {
        let b = backend();
        let full = MaskedSchema::full(schema());
        let q = question();
        let first = forced_diversity_generate(&b, &full, &q, &[], &[]).unwrap();
        assert_eq!(first, "SELECT birthplace FROM students");
        let second = forced_diversity_generate(&b, &full, &q, &[], &[first.clone()]).unwrap();
        assert_eq!(second, "SELECT origin FROM students");
        let third = forced_diversity_generate(&b, &full, &q, &[], &[first.clone(), second]).unwrap();
        assert_eq!(third, first);
    }

    #[test]
    fn templates_fill_and_refuse() {
        let mut o = oracle();
        o.templates.push(SqlTemplate {
            question: "hometown".into(),
            sql: "SELECT {hometown}, name FROM {hometown.table} WHERE {hometown.column} IS NOT NULL".into(),
        });
        let b = MockBackend::new(o, 1).unwrap();
        let full = MaskedSchema::full(schema());
        assert_eq!(
            gen(&b, &full, &[]),
            "SELECT students.birthplace, name FROM students WHERE birthplace IS NOT NULL"
        );
        let no_name = full.remove_col(&ColumnRef::new("students", "name")).unwrap();
        let err = b.generate_sql(&GenerationRequest::new(&no_name, &question(), &[])).unwrap_err();
        assert!(matches!(err, LlmError::GenerationRefused(_)));
    }

    #[test]
    fn oracle_validation() {
        let mut o = oracle();
        o.gold.push(GoldPreference { user: "u".into(), entity: "hometown".into(), table: "students".into(), column: "name".into() });
        assert!(matches!(o.validate(), Err(LlmError::InvalidOracle(_))));
        let mut o = oracle();
        o.linking[0].columns[0].weight = 1.5;
        assert!(o.validate().is_err());
        let json = r#"{"linking":[{"entity":"singers","columns":[{"table":"singer","column":"name","weight":0.9}]}]}"#;
        let o: MockOracle = serde_json::from_str(json).unwrap();
        assert_eq!(o.noise_rate, 0.15);
        assert!(o.validate().is_ok());
    }

    #[test]
    fn noise_stays_parseable_and_visible() {
        let mut o = oracle();
        o.noise_rate = 1.0;
        let b = MockBackend::new(o, 3).unwrap();
        let full = MaskedSchema::full(schema());
        let masked = full.remove_col(&ColumnRef::new("students", "name")).unwrap();
        for m in [full, masked] {
            let s = gen(&b, &m, &[]);
            let used = sql::columns_used(&sql::parse_sql(&s).unwrap(), &schema()).unwrap();
            assert!(used.iter().all(|c| m.is_visible(c)));
            assert!(!used.iter().any(|c| c.column == "birthplace" || c.column == "origin"), "{s}");
        }
    }
}
