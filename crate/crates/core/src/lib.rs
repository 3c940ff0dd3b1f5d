//! Candidate generation, conformal selection and personalization for
//! ambiguous natural-language-to-SQL questions.
//!
//! The crate is `no_std` (with `alloc`) and performs no IO. File formats,
//! the HTTP language-model backend, the service and the CLI live in the
//! `nl2sql-service` crate.
//!
//! Pipeline overview:
//!
//! * [`generator`] explores masked schemas with a greedy best-first search
//!   and asks the language model for one query per explored schema.
//! * [`selector`] scores candidates and keeps those under a conformal
//!   threshold fitted on calibration data.
//! * [`personalizer`] turns user choices into schema-linking hints that are
//!   fed back into generation and scoring.
//! * [`harness`] runs workloads end to end and computes accuracy metrics.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod generator;
pub mod harness;
pub mod ident;
pub mod llm;
pub mod model;
pub mod personalizer;
pub mod schema;
pub mod selector;
pub mod similarity;
pub mod sql;
pub mod synthetic;

mod hash;

pub use ident::Ident;
pub use model::{CandidateSet, Entity, PipelineConfig, Question, ScoringKind, SqlCandidate, Strategy};
pub use schema::{Column, ColumnRef, MaskedSchema, Schema, SchemaError, SchemaKey, Table};
