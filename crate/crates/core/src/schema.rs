//! Relational schemas and the masked-schema lattice explored by the generator.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ident::Ident;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("empty identifier in {0}")]
    EmptyIdentifier(String),
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(ColumnRef),
    #[error("column `{0}` is not visible in the masked schema")]
    ColumnNotVisible(ColumnRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: Ident,
    #[serde(rename = "type", default)]
    pub sql_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Column {
    pub fn new(name: impl Into<Ident>, sql_type: impl Into<String>) -> Self {
        Column { name: name.into(), sql_type: sql_type.into(), description: None }
    }

    pub fn described(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: Ident,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(name: impl Into<Ident>, columns: Vec<Column>) -> Self {
        Table { name: name.into(), columns }
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// A database schema. Construct through [`Schema::new`] or call
/// [`Schema::validate`] after deserializing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub db_id: Ident,
    pub tables: Vec<Table>,
}

impl Schema {
    pub fn new(db_id: impl Into<Ident>, tables: Vec<Table>) -> Result<Self, SchemaError> {
        let schema = Schema { db_id: db_id.into(), tables };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.db_id.is_empty() {
            return Err(SchemaError::EmptyIdentifier("db_id".into()));
        }
        let mut tables = BTreeSet::new();
        for table in &self.tables {
            if table.name.is_empty() {
                return Err(SchemaError::EmptyIdentifier("table name".into()));
            }
            if !tables.insert(&table.name) {
                return Err(SchemaError::DuplicateTable(table.name.to_string()));
            }
            let mut columns = BTreeSet::new();
            for column in &table.columns {
                if column.name.is_empty() {
                    return Err(SchemaError::EmptyIdentifier(alloc::format!(
                        "column of table `{}`",
                        table.name
                    )));
                }
                if !columns.insert(&column.name) {
                    return Err(SchemaError::DuplicateColumn {
                        table: table.name.to_string(),
                        column: column.name.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn column(&self, col: &ColumnRef) -> Option<&Column> {
        self.table(col.table.as_str())?.column(col.column.as_str())
    }

    pub fn contains(&self, col: &ColumnRef) -> bool {
        self.column(col).is_some()
    }

    /// Every column in declaration order.
    pub fn columns(&self) -> impl Iterator<Item = ColumnRef> + '_ {
        self.tables.iter().flat_map(|t| {
            t.columns.iter().map(move |c| ColumnRef { table: t.name.clone(), column: c.name.clone() })
        })
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// Returns the column with the canonical spelling used in this schema.
    pub fn resolve(&self, col: &ColumnRef) -> Option<ColumnRef> {
        let table = self.table(col.table.as_str())?;
        let column = table.column(col.column.as_str())?;
        Some(ColumnRef { table: table.name.clone(), column: column.name.clone() })
    }

    /// A copy of this schema that keeps only `keep` columns. Tables left
    /// without columns are dropped.
    pub fn restricted_to(&self, keep: &BTreeSet<ColumnRef>) -> Schema {
        let tables = self
            .tables
            .iter()
            .filter_map(|t| {
                let columns: Vec<Column> = t
                    .columns
                    .iter()
                    .filter(|c| keep.contains(&ColumnRef { table: t.name.clone(), column: c.name.clone() }))
                    .cloned()
                    .collect();
                (!columns.is_empty()).then(|| Table { name: t.name.clone(), columns })
            })
            .collect();
        Schema { db_id: self.db_id.clone(), tables }
    }
}

/// A fully-qualified column reference, displayed as `table.column`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: Ident,
    pub column: Ident,
}

impl ColumnRef {
    pub fn new(table: impl Into<Ident>, column: impl Into<Ident>) -> Self {
        ColumnRef { table: table.into(), column: column.into() }
    }

    /// Parses `table.column`.
    pub fn parse(qualified: &str) -> Option<Self> {
        let (table, column) = qualified.split_once('.')?;
        let (table, column) = (table.trim(), column.trim());
        if table.is_empty() || column.is_empty() {
            return None;
        }
        Some(ColumnRef::new(table, column))
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

/// Order- and case-insensitive identity of a visible column set.
///
/// The key is the sorted, lower-cased `table.column` list joined by `,`.
/// It is kept as text rather than hashed so equality is exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaKey(String);

impl SchemaKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Short hexadecimal digest for logs and display.
    pub fn digest(&self) -> String {
        alloc::format!("{:016x}", crate::hash::Fnv::new().str(&self.0).finish())
    }
}

impl fmt::Display for SchemaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A schema with some columns hidden from the language model.
#[derive(Debug, Clone)]
pub struct MaskedSchema {
    base: Arc<Schema>,
    removed: BTreeSet<ColumnRef>,
}

impl MaskedSchema {
    pub fn full(base: Arc<Schema>) -> Self {
        MaskedSchema { base, removed: BTreeSet::new() }
    }

    pub fn with_removed(
        base: Arc<Schema>,
        removed: impl IntoIterator<Item = ColumnRef>,
    ) -> Result<Self, SchemaError> {
        let mut set = BTreeSet::new();
        for col in removed {
            let canonical = base.resolve(&col).ok_or(SchemaError::UnknownColumn(col))?;
            set.insert(canonical);
        }
        Ok(MaskedSchema { base, removed: set })
    }

    pub fn base(&self) -> &Arc<Schema> {
        &self.base
    }

    pub fn removed(&self) -> &BTreeSet<ColumnRef> {
        &self.removed
    }

    pub fn is_visible(&self, col: &ColumnRef) -> bool {
        self.base.contains(col) && !self.removed.contains(col)
    }

    /// Base columns minus removed ones, in declaration order.
    pub fn visible_columns(&self) -> Vec<ColumnRef> {
        self.base.columns().filter(|c| !self.removed.contains(c)).collect()
    }

    pub fn visible_count(&self) -> usize {
        self.base.column_count() - self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible_count() == 0
    }

    pub fn canonical_key(&self) -> SchemaKey {
        let mut cols: Vec<String> = self
            .base
            .columns()
            .filter(|c| !self.removed.contains(c))
            .map(|c| alloc::format!("{}.{}", c.table.folded(), c.column.folded()))
            .collect();
        cols.sort();
        SchemaKey(cols.join(","))
    }

    /// A new masked schema that additionally hides `col`.
    pub fn remove_col(&self, col: &ColumnRef) -> Result<MaskedSchema, SchemaError> {
        let canonical = self
            .base
            .resolve(col)
            .filter(|c| !self.removed.contains(c))
            .ok_or_else(|| SchemaError::ColumnNotVisible(col.clone()))?;
        let mut removed = self.removed.clone();
        removed.insert(canonical);
        Ok(MaskedSchema { base: self.base.clone(), removed })
    }

    /// The visible part as a standalone schema.
    pub fn visible_schema(&self) -> Schema {
        let keep: BTreeSet<ColumnRef> = self.visible_columns().into_iter().collect();
        self.base.restricted_to(&keep)
    }

    /// Prompt rendering: one line per table with its visible columns.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for table in &self.base.tables {
            let cols: Vec<String> = table
                .columns
                .iter()
                .filter(|c| !self.removed.contains(&ColumnRef { table: table.name.clone(), column: c.name.clone() }))
                .map(|c| {
                    let mut s = c.name.to_string();
                    if !c.sql_type.is_empty() {
                        s.push(' ');
                        s.push_str(&c.sql_type);
                    }
                    if let Some(d) = &c.description {
                        s.push_str(" -- ");
                        s.push_str(d);
                    }
                    s
                })
                .collect();
            if cols.is_empty() {
                continue;
            }
            out.push_str(&alloc::format!("{}({})\n", table.name, cols.join(", ")));
        }
        out
    }
}
