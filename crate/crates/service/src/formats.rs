//! On-disk formats: workloads, database fixtures, mock oracles,
//! calibration artifacts and reports.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use nl2sql_core::harness::{HarnessError, Workload, WorkloadItem};
use nl2sql_core::selector::{conformal_threshold, ConformalModel, SelectorError};
use nl2sql_core::sql::{parse_sql, Database, TableData, Value};
use nl2sql_core::{Column, Schema, ScoringKind, Table};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: item `{item}`: {message}")]
    Invalid { path: PathBuf, item: String, message: String },
    #[error("item `{item}`: fixture {path} not found")]
    MissingFixture { item: String, path: PathBuf },
}

impl FormatError {
    pub fn io(path: &Path, e: impl Display) -> Self {
        FormatError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn at(path: &Path, line: usize, e: impl Display) -> Self {
        FormatError::Parse { path: path.to_path_buf(), line, message: e.to_string() }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::at(path, e.line(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

/// A database fixture: schema and rows together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseFixture {
    pub db_id: String,
    pub tables: Vec<FixtureTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTable {
    pub name: String,
    pub columns: Vec<Column>,
    #[serde(default)]
    pub rows: Vec<Vec<Value>>,
}

impl DatabaseFixture {
    pub fn from_database(db: &Database) -> Self {
        let schema = db.schema();
        DatabaseFixture {
            db_id: schema.db_id.to_string(),
            tables: schema
                .tables
                .iter()
                .map(|t| FixtureTable {
                    name: t.name.to_string(),
                    columns: t.columns.clone(),
                    rows: db.rows(t.name.as_str()).map(<[_]>::to_vec).unwrap_or_default(),
                })
                .collect(),
        }
    }

    pub fn into_database(self) -> Result<Database, String> {
        let tables = self.tables.iter().map(|t| Table::new(t.name.as_str(), t.columns.clone())).collect();
        let schema = Schema::new(self.db_id.as_str(), tables).map_err(|e| e.to_string())?;
        let data = self.tables.into_iter().map(|t| TableData { name: t.name.as_str().into(), rows: t.rows }).collect();
        Database::new(schema, data).map_err(|e| e.to_string())
    }
}

pub fn load_database(path: &Path) -> Result<Database, FormatError> {
    let fixture: DatabaseFixture = read_json(path)?;
    fixture.into_database().map_err(|m| FormatError::Invalid { path: path.into(), item: "database".into(), message: m })
}

pub fn save_database(path: &Path, db: &Database) -> Result<(), FormatError> {
    write_json(path, &DatabaseFixture::from_database(db))
}

/// Reads a JSON-lines workload, loading each referenced fixture once.
/// Fixture paths are relative to the workload file. Items without an id
/// get `line<N>`.
pub fn load_workload(path: &Path) -> Result<Workload, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut workload = Workload::default();
    let mut loaded: BTreeMap<PathBuf, Arc<Database>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut item: WorkloadItem = serde_json::from_str(line).map_err(|e| FormatError::at(path, i + 1, e))?;
        if item.id.is_empty() {
            item.id = format!("line{}", i + 1);
        }
        let invalid = |message: String| FormatError::Invalid { path: path.into(), item: item.id.clone(), message };
        for sql in item.alternatives() {
            parse_sql(sql).map_err(|e| invalid(format!("gold query does not parse: {e}")))?;
        }
        if item.fixture.is_empty() {
            return Err(invalid("no fixture".into()));
        }
        let fixture = base.join(&item.fixture);
        let db = match loaded.get(&fixture) {
            Some(db) => db.clone(),
            None => {
                if !fixture.exists() {
                    return Err(FormatError::MissingFixture { item: item.id.clone(), path: fixture });
                }
                let db = Arc::new(load_database(&fixture)?);
                loaded.insert(fixture, db.clone());
                db
            }
        };
        if db.schema().db_id != item.db_id {
            return Err(invalid(format!("fixture holds `{}`, item wants `{}`", db.schema().db_id, item.db_id)));
        }
        if let Some(other) = workload.databases.get(&item.db_id) {
            if !Arc::ptr_eq(other, &db) {
                return Err(invalid(format!("db_id `{}` maps to two fixtures", item.db_id)));
            }
        }
        workload.databases.insert(item.db_id.clone(), db);
        workload.items.push(item);
    }
    workload.validate().map_err(|e| match e {
        HarnessError::Sql { item, source } => FormatError::Invalid { path: path.into(), item, message: source.to_string() },
        HarnessError::DuplicateAlternatives(item) => FormatError::Invalid {
            path: path.into(),
            item,
            message: "gold alternatives are not execution-distinct".into(),
        },
        other => FormatError::Invalid { path: path.into(), item: String::new(), message: other.to_string() },
    })?;
    Ok(workload)
}

/// Writes `items` as JSON lines plus one fixture file per database,
/// named `<db_id>.json` next to the workload.
pub fn save_workload(path: &Path, workload: &Workload) -> Result<(), FormatError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut text = String::new();
    for item in &workload.items {
        let mut item = item.clone();
        item.fixture = format!("{}.json", item.db_id);
        text.push_str(&serde_json::to_string(&item).map_err(|e| FormatError::io(path, e))?);
        text.push('\n');
    }
    for (db_id, db) in &workload.databases {
        save_database(&base.join(format!("{db_id}.json")), db)?;
    }
    std::fs::create_dir_all(base).map_err(|e| FormatError::io(base, e))?;
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

/// Item ids given inline as `a,b,c` or as `@file` with one id per line.
pub fn parse_id_list(list: &str) -> Result<Vec<String>, FormatError> {
    let text = match list.strip_prefix('@') {
        Some(file) => std::fs::read_to_string(file).map_err(|e| FormatError::io(Path::new(file), e))?,
        None => list.replace(',', "\n"),
    };
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

/// A fitted selector with the scores it came from, so the threshold can
/// be re-derived for another alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub alpha: f64,
    pub scoring: ScoringKind,
    pub n: usize,
    pub scores: Vec<f64>,
    /// `null` admits everything.
    pub threshold: Option<f64>,
    pub created_at: u64,
    pub backend_id: String,
}

impl CalibrationArtifact {
    pub fn new(model: &ConformalModel, scores: Vec<f64>, created_at: u64, backend_id: String) -> Self {
        CalibrationArtifact {
            alpha: model.alpha,
            scoring: model.scoring,
            n: model.n,
            scores,
            threshold: model.threshold,
            created_at,
            backend_id,
        }
    }

    pub fn model(&self) -> ConformalModel {
        ConformalModel { threshold: self.threshold, alpha: self.alpha, n: self.n, scoring: self.scoring }
    }

    /// The model refitted at `alpha`.
    pub fn model_at(&self, alpha: f64) -> Result<ConformalModel, SelectorError> {
        Ok(ConformalModel { threshold: conformal_threshold(&self.scores, alpha)?, alpha, n: self.n, scoring: self.scoring })
    }

    /// Short content hash identifying the artifact in reports.
    pub fn id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("artifact serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let a: Self = read_json(path)?;
        let refit = conformal_threshold(&a.scores, a.alpha).ok().flatten();
        if a.n != a.scores.len() || refit != a.threshold {
            return Err(FormatError::Invalid {
                path: path.into(),
                item: "calibration".into(),
                message: "threshold or n does not match the stored scores".into(),
            });
        }
        Ok(a)
    }
}

/// One record of an AmbiQT-style export: a question with two gold
/// queries. Maps to a workload item with `query1` as the gold query and
/// `query2` as the alternative; `db_id` names the fixture file
/// `<db_id>.json`. The dataset itself is not bundled.
#[derive(Debug, Clone, Deserialize)]
pub struct AmbiqtRecord {
    pub db_id: String,
    pub question: String,
    pub query1: String,
    pub query2: String,
}

impl AmbiqtRecord {
    pub fn into_item(self, id: String) -> WorkloadItem {
        WorkloadItem {
            id,
            fixture: format!("{}.json", self.db_id),
            db_id: self.db_id.as_str().into(),
            question: self.question,
            gold_sql: self.query1,
            alt_gold_sqls: vec![self.query2],
            user_id: "default".into(),
        }
    }
}
