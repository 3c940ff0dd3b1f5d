//! Prompt templates and their inputs.
//!
//! Templates use `{question}`, `{schema}`, `{hints}`, `{sql}` and
//! `{prior_sqls}` placeholders.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schema::MaskedSchema;

/// Bumped whenever a template's wording changes.
pub const TEMPLATE_VERSION: u32 = 1;

pub const GENERATE: &str = include_str!("prompts/generate.txt");
pub const FORCED_DIVERSITY: &str = include_str!("prompts/forced_diversity.txt");
pub const ENTITIES: &str = include_str!("prompts/entities.txt");
pub const SCORE: &str = include_str!("prompts/score.txt");

/// Everything a prompt can show the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub question: String,
    /// Visible columns only.
    pub schema: String,
    pub hints: Vec<String>,
    pub prior_sqls: Vec<String>,
}

impl PromptBundle {
    pub fn new(question: &str, schema: &MaskedSchema, hints: impl IntoIterator<Item = String>) -> Self {
        PromptBundle {
            question: question.into(),
            schema: schema.render(),
            hints: hints.into_iter().collect(),
            prior_sqls: Vec::new(),
        }
    }

    pub fn generation_prompt(&self) -> String {
        let template = if self.prior_sqls.is_empty() { GENERATE } else { FORCED_DIVERSITY };
        fill(template, self, "")
    }

    pub fn scoring_prompt(&self, sql: &str) -> String {
        fill(SCORE, self, sql)
    }

    pub fn entity_prompt(question: &str) -> String {
        fill(ENTITIES, &PromptBundle { question: question.into(), ..PromptBundle::default() }, "")
    }
}

fn fill(template: &str, b: &PromptBundle, sql: &str) -> String {
    let hints = if b.hints.is_empty() {
        String::new()
    } else {
        let mut s = String::from("\nHints:\n");
        for h in &b.hints {
            s.push_str("- ");
            s.push_str(h);
            s.push('\n');
        }
        s
    };
    let prior: Vec<String> = b.prior_sqls.iter().enumerate().map(|(i, q)| alloc::format!("{}. {q}", i + 1)).collect();
    render_template(
        template,
        &[
            ("question", b.question.trim()),
            ("schema", b.schema.trim_end()),
            ("hints", &hints),
            ("sql", sql),
            ("prior_sqls", &prior.join("\n")),
        ],
    )
}

/// Substitutes `{name}` placeholders in one pass; unknown placeholders
/// are left as is and substituted text is never re-scanned.
pub fn render_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').map(|close| (&after[..close], close)) {
            Some((name, close)) if values.iter().any(|(k, _)| *k == name) => {
                let (_, v) = values.iter().find(|(k, _)| *k == name).unwrap();
                out.push_str(v);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Column, ColumnRef, Schema, Table};
    use alloc::sync::Arc;
    use alloc::vec;

    fn masked() -> MaskedSchema {
        let s = Schema::new(
            "school",
            vec![Table::new("students", vec![Column::new("birthplace", "text"), Column::new("origin", "text")])],
        )
        .unwrap();
        MaskedSchema::with_removed(Arc::new(s), [ColumnRef::new("students", "birthplace")]).unwrap()
    }

    #[test]
    fn masked_columns_never_rendered() {
        let b = PromptBundle::new("Find the hometown of students", &masked(), []);
        let p = b.generation_prompt();
        assert!(p.contains("students(origin text)"));
        assert!(!p.contains("birthplace"));
        assert!(!p.contains("{schema}"));
        assert!(!p.contains("Hints"));
    }

    #[test]
    fn hints_and_prior_queries() {
        let mut b = PromptBundle::new("q", &masked(), [String::from("prefer origin")]);
        assert!(b.generation_prompt().contains("- prefer origin"));
        b.prior_sqls.push("SELECT origin FROM students".into());
        let p = b.generation_prompt();
        assert!(p.contains("1. SELECT origin FROM students"));
        assert!(p.contains("different result"));
        assert!(b.scoring_prompt("SELECT 1 FROM t").contains("B. No"));
    }

    #[test]
    fn substitution_is_single_pass() {
        assert_eq!(render_template("{a} {b} {c", &[("a", "{b}"), ("b", "x")]), "{b} x {c");
        assert_eq!(render_template("{unknown}", &[]), "{unknown}");
    }
}
