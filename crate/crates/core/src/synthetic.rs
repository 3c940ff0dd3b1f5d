//! Synthetic ambiguity suite: one student table where every concept maps to
//! two plausible columns, with per-user preferences deciding the gold query.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::{Workload, WorkloadItem};
use crate::llm::{GoldPreference, LinkEntry, MockOracle, WeightedColumn};
use crate::schema::{Column, Schema, Table};
use crate::sql::{Database, TableData, Value};

pub const TABLE: &str = "students";
pub const DB_ID: &str = "campus";
pub const PRIMARY_WEIGHT: f64 = 0.9;
pub const ALTERNATIVE_WEIGHT: f64 = 0.85;

/// Phrase, preferred column, runner-up column.
pub const CONCEPTS: [(&str, &str, &str); 6] = [
    ("hometown", "birthplace", "origin"),
    ("roll number", "roll_num", "student_number"),
    ("department", "dept_name", "division"),
    ("advisor", "advisor_name", "mentor"),
    ("total credits", "credits_earned", "credits_attempted"),
    ("enrollment year", "enrolled_year", "admit_year"),
];

/// Columns no concept links to.
pub const DISTRACTORS: [&str; 3] = ["nickname", "notes", "locker"];

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub items: usize,
    pub seed: u64,
    pub users: usize,
    /// Entities per question, cycled over the items.
    pub entity_counts: Vec<usize>,
    pub rows: usize,
    pub noise_rate: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { items: 60, seed: 7, users: 4, entity_counts: alloc::vec![1, 2, 3], rows: 6, noise_rate: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub workload: Workload,
    pub oracle: MockOracle,
}

pub fn schema() -> Schema {
    let mut cols = alloc::vec![Column::new("id", "integer"), Column::new("name", "text")];
    for (_, a, b) in CONCEPTS {
        cols.push(Column::new(a, "text"));
        cols.push(Column::new(b, "text"));
    }
    cols.extend(DISTRACTORS.iter().map(|d| Column::new(*d, "text")));
    Schema::new(DB_ID, alloc::vec![Table::new(TABLE, cols)]).expect("static schema is valid")
}

/// Every column holds values found in no other column, so any two distinct
/// column choices give different results.
pub fn database(rows: usize) -> Database {
    let schema = schema();
    let table = &schema.tables[0];
    let data = (0..rows)
        .map(|r| {
            table
                .columns
                .iter()
                .map(|c| match c.name.as_str() {
                    "id" => Value::Integer(r as i64 + 1),
                    name => Value::Text(format!("{name}-{r}")),
                })
                .collect()
        })
        .collect();
    Database::new(schema, alloc::vec![TableData { name: TABLE.into(), rows: data }]).expect("rows match the schema")
}

pub fn linking() -> Vec<LinkEntry> {
    CONCEPTS
        .iter()
        .map(|(phrase, a, b)| LinkEntry {
            entity: (*phrase).into(),
            columns: alloc::vec![
                WeightedColumn { table: TABLE.into(), column: (*a).into(), weight: PRIMARY_WEIGHT },
                WeightedColumn { table: TABLE.into(), column: (*b).into(), weight: ALTERNATIVE_WEIGHT },
            ],
        })
        .collect()
}

fn phrase_list(phrases: &[&str]) -> String {
    match phrases {
        [] => String::new(),
        [one] => (*one).into(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn question_text(i: usize, phrases: &[&str]) -> String {
    let list = phrase_list(phrases);
    match i % 3 {
        0 => format!("Show the {list} of every student."),
        1 => format!("List each student's {list}."),
        _ => format!("What is the {list} of all students?"),
    }
}

fn select(columns: &[&str]) -> String {
    format!("SELECT {} FROM {TABLE}", columns.join(", "))
}

/// All `2^e` readings, one per column choice per entity. Bit `j` of the
/// index picks the runner-up for entity `j`.
pub fn readings(concepts: &[usize]) -> Vec<String> {
    (0..1usize << concepts.len())
        .map(|mask| {
            let cols: Vec<&str> = concepts
                .iter()
                .enumerate()
                .map(|(j, &c)| if mask >> j & 1 == 1 { CONCEPTS[c].2 } else { CONCEPTS[c].1 })
                .collect();
            select(&cols)
        })
        .collect()
}

pub fn suite(config: &SuiteConfig) -> SyntheticSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let users = config.users.max(1);
    // prefers[u][c]: user u reads concept c as the runner-up column
    let prefers: Vec<Vec<bool>> =
        (0..users).map(|_| (0..CONCEPTS.len()).map(|_| rng.random_bool(0.5)).collect()).collect();

    let mut oracle = MockOracle::new(linking());
    oracle.noise_rate = config.noise_rate;
    for (u, row) in prefers.iter().enumerate() {
        for (c, alt) in row.iter().enumerate() {
            let (phrase, a, b) = CONCEPTS[c];
            oracle.gold.push(GoldPreference {
                user: format!("user{u}"),
                entity: phrase.into(),
                table: TABLE.into(),
                column: if *alt { b } else { a }.into(),
            });
        }
    }

    let counts = if config.entity_counts.is_empty() { alloc::vec![1] } else { config.entity_counts.clone() };
    let mut items = Vec::with_capacity(config.items);
    for i in 0..config.items {
        let e = counts[i % counts.len()].clamp(1, CONCEPTS.len());
        let mut pool: Vec<usize> = (0..CONCEPTS.len()).collect();
        let mut concepts = Vec::with_capacity(e);
        for _ in 0..e {
            concepts.push(pool.remove(rng.random_range(0..pool.len())));
        }
        let u = i % users;
        let mask = concepts.iter().enumerate().fold(0usize, |m, (j, &c)| m | (usize::from(prefers[u][c]) << j));
        let mut all = readings(&concepts);
        let gold_sql = all.remove(mask);
        let phrases: Vec<&str> = concepts.iter().map(|&c| CONCEPTS[c].0).collect();
        items.push(WorkloadItem {
            id: format!("s{i}"),
            question: question_text(i, &phrases),
            db_id: DB_ID.into(),
            gold_sql,
            alt_gold_sqls: all,
            user_id: format!("user{u}"),
            fixture: String::new(),
        });
    }

    let mut workload = Workload { items, ..Workload::default() };
    workload.databases.insert(DB_ID.into(), Arc::new(database(config.rows)));
    SyntheticSuite { workload, oracle }
}
