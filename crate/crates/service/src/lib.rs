//! File formats, the HTTP model backend, the review service and the CLI
//! around `nl2sql-core`.

pub mod cli;
pub mod config;
pub mod formats;
pub mod http_backend;
pub mod journal;
pub mod service;
