//! Command-line entry points: bench, calibrate, serve and fixtures.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nl2sql_core::harness::{AuditRecord, Pipeline, RunConfig, RunReport};
use nl2sql_core::llm::LlmBackend;
use nl2sql_core::personalizer::{HintEvent, HintStore};
use nl2sql_core::similarity::SimilarityProvider;
use nl2sql_core::synthetic::{self, SuiteConfig};
use nl2sql_core::{ScoringKind, Strategy};

use crate::config::{build_backend, BackendConfig, ServiceConfig};
use crate::formats::{load_workload, parse_id_list, save_workload, write_json, CalibrationArtifact};
use crate::http_backend::HttpSettings;
use crate::journal::Journal;

/// Budgets swept by `bench --sweep`.
pub const K_GRID: [u32; 6] = [1, 2, 3, 5, 7, 10];

#[derive(Debug, Parser)]
#[command(name = "nl2sql", version, about = "Candidate generation, selection and personalization for ambiguous NL2SQL")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a workload and report accuracy and result sizes.
    Bench(BenchArgs),
    /// Fit the selector threshold on a slice of a workload.
    Calibrate(CalibrateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Check or generate fixture files.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mock oracle; defaults to `oracle.json` next to the workload.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    /// Similarity for column pairs the lexicon does not list.
    #[arg(long, default_value_t = 0.1)]
    pub similarity_default: f64,
}

impl BackendArgs {
    fn build(&self, workload: &Path) -> anyhow::Result<(Arc<dyn LlmBackend>, SimilarityProvider)> {
        let config = match self.backend {
            BackendKind::Mock => BackendConfig::Mock {
                oracle: self
                    .oracle
                    .clone()
                    .unwrap_or_else(|| workload.parent().unwrap_or(Path::new(".")).join("oracle.json")),
                seed: self.seed,
                temperature: self.temperature,
            },
            BackendKind::Http => {
                let (Some(endpoint), Some(model)) = (&self.endpoint, &self.model) else {
                    bail!("--backend http needs --endpoint and --model");
                };
                let mut s = HttpSettings::new(endpoint.clone(), model.clone());
                s.temperature = self.temperature;
                s.api_key_env = Some("NL2SQL_API_KEY".into());
                BackendConfig::Http(s)
            }
        };
        Ok(build_backend(&config, self.similarity_default)?)
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: nl2sql_core::model::ModelError| e.to_string())
}

fn parse_scoring(s: &str) -> Result<ScoringKind, String> {
    s.parse().map_err(|e: nl2sql_core::model::ModelError| e.to_string())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub workload: PathBuf,
    /// odin, sampling or forced_diversity.
    #[arg(long, default_value = "odin", value_parser = parse_strategy)]
    pub strategy: Strategy,
    /// Generation calls per question.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,
    /// Refit the calibration threshold at this alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Run every budget in the default grid instead of `--k`.
    #[arg(long)]
    pub sweep: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Calibration artifact; enables the selector.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Use stored hints during generation and scoring.
    #[arg(long)]
    pub personalize: bool,
    /// Feed back the first correct shown candidate after each item.
    #[arg(long, requires = "personalize")]
    pub simulated_user: bool,
    /// Hint journal to read and extend.
    #[arg(long)]
    pub hint_journal: Option<PathBuf>,
    /// Only these item ids (`a,b` or `@file`).
    #[arg(long)]
    pub items: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-item audit log (JSON lines).
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub workload: PathBuf,
    /// Calibration item ids (`a,b` or `@file`).
    #[arg(long)]
    pub split: String,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value = "llm", value_parser = parse_scoring)]
    pub scoring: ScoringKind,
    #[arg(long, default_value = "odin", value_parser = parse_strategy)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub k: u32,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured port.
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Load a workload with its fixtures and check every gold query.
    Validate { workload: PathBuf },
    /// Write the synthetic ambiguity suite: workload, database and oracle.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        items: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        users: usize,
        #[arg(long, default_value_t = 0.15)]
        noise: f64,
    },
}

fn now() -> u64 {
    (crate::service::system_clock())()
}

fn print_header() {
    println!(
        "{:<17} {:>3} {:>7} {:>8} {:>7} {:>7} {:>7} {:>7}",
        "strategy", "K", "AvgAcc", "AvgSize", "Either", "Both", "calls", "other"
    );
}

fn print_report(r: &RunReport) {
    let rate = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    println!(
        "{:<17} {:>3} {:>7.3} {:>8.2} {:>7} {:>7} {:>7} {:>7}",
        r.config.strategy.to_string(),
        r.config.pipeline.max_calls,
        r.avg_acc,
        r.avg_result_size,
        rate(r.either_in_topk),
        rate(r.both_in_topk),
        r.total_llm_calls,
        r.total_other_calls
    );
    let empty = r.items.iter().filter(|i| i.no_confident_candidate).count();
    let asym = r.items.iter().filter(|i| i.order_asymmetry).count();
    if empty > 0 {
        println!("{empty} item(s) with no confident candidate");
    }
    if asym > 0 {
        println!("{asym} item(s) matched only when ignoring row order");
    }
}

fn bench(args: &BenchArgs) -> anyhow::Result<()> {
    let mut workload = load_workload(&args.workload)?;
    if let Some(list) = &args.items {
        workload = workload.subset(&parse_id_list(list)?);
    }
    let (backend, provider) = args.backend.build(&args.workload)?;
    let artifact = args.calibration.as_deref().map(CalibrationArtifact::load).transpose()?;
    let model = match (&artifact, args.alpha) {
        (Some(a), Some(alpha)) => Some(a.model_at(alpha)?),
        (Some(a), None) => Some(a.model()),
        (None, _) => None,
    };
    let journal: Option<Journal<HintEvent>> = args.hint_journal.as_ref().map(Journal::new);
    let mut store = match &journal {
        Some(j) => HintStore::replay(j.read()?),
        None => HintStore::new(),
    };
    let before: Vec<_> = store_snapshot(&store, &workload);

    let pipeline = Pipeline { backend: backend.as_ref(), provider: &provider, calibration: model.as_ref() };
    let budgets: Vec<u32> = if args.sweep { K_GRID.to_vec() } else { vec![args.k] };
    let mut reports = Vec::new();
    let mut audit: Vec<AuditRecord> = Vec::new();
    print_header();
    for k in budgets {
        let mut config = RunConfig::new(args.strategy, k);
        config.selector_enabled = model.is_some();
        config.pipeline.personalization_enabled = args.personalize;
        config.simulated_user = args.simulated_user;
        if let Some(m) = &model {
            config.pipeline.alpha = m.alpha;
            config.pipeline.scoring = m.scoring;
        }
        let (mut report, records) = pipeline.run(&workload, &config, &mut store)?;
        report.calibration_id = artifact.as_ref().map(CalibrationArtifact::id);
        print_report(&report);
        reports.push(report);
        audit.extend(records);
    }
    if let Some(j) = &journal {
        let after = store_snapshot(&store, &workload);
        let fresh: Vec<HintEvent> =
            after.into_iter().filter(|h| !before.contains(h)).map(HintEvent::Upsert).collect();
        j.append(&fresh)?;
    }
    if let Some(path) = &args.report {
        if reports.len() == 1 {
            write_json(path, &reports[0])?;
        } else {
            write_json(path, &reports)?;
        }
    }
    if let Some(path) = &args.audit {
        let _ = std::fs::remove_file(path);
        Journal::<AuditRecord>::new(path).append(&audit)?;
    }
    Ok(())
}

fn store_snapshot(store: &HintStore, workload: &nl2sql_core::harness::Workload) -> Vec<nl2sql_core::personalizer::Hint> {
    let mut users: Vec<&str> = workload.items.iter().map(|i| i.user_id.as_str()).collect();
    users.sort_unstable();
    users.dedup();
    users.into_iter().flat_map(|u| store.active(u)).collect()
}

fn calibrate(args: &CalibrateArgs) -> anyhow::Result<()> {
    let workload = load_workload(&args.workload)?;
    let ids = parse_id_list(&args.split)?;
    let slice = workload.subset(&ids);
    if slice.items.len() != ids.len() {
        bail!("{} of {} split ids are not in the workload", ids.len() - slice.items.len(), ids.len());
    }
    let (backend, provider) = args.backend.build(&args.workload)?;
    let pipeline = Pipeline { backend: backend.as_ref(), provider: &provider, calibration: None };
    let mut config = RunConfig::new(args.strategy, args.k);
    config.pipeline.personalization_enabled = false;
    let (model, scores) = pipeline.calibrate(&slice, &config, args.alpha, args.scoring, &HintStore::new())?;
    let artifact = CalibrationArtifact::new(&model, scores, now(), backend.backend_id());
    write_json(&args.out, &artifact)?;
    println!(
        "calibration {}: n={} alpha={} threshold={}",
        artifact.id(),
        artifact.n,
        artifact.alpha,
        artifact.threshold.map_or("+inf".into(), |t| format!("{t:.4}"))
    );
    Ok(())
}

fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let mut config = ServiceConfig::load(&args.config)?;
    if let Some(p) = args.port {
        config.port = p;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crate::service::serve(&config))
}

fn fixtures(cmd: &FixturesCommand) -> anyhow::Result<()> {
    match cmd {
        FixturesCommand::Validate { workload } => {
            let w = load_workload(workload)?;
            println!("{} items over {} database(s): ok", w.items.len(), w.databases.len());
        }
        FixturesCommand::Synth { out, items, seed, users, noise } => {
            let s = synthetic::suite(&SuiteConfig {
                items: *items,
                seed: *seed,
                users: *users,
                noise_rate: *noise,
                ..SuiteConfig::default()
            });
            save_workload(&out.join("workload.jsonl"), &s.workload)?;
            write_json(&out.join("oracle.json"), &s.oracle)?;
            println!("wrote {} items to {}", s.workload.items.len(), out.display());
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Bench(a) => bench(a).context("bench failed"),
        Command::Calibrate(a) => calibrate(a).context("calibrate failed"),
        Command::Serve(a) => serve(a),
        Command::Fixtures(c) => fixtures(c),
    }
}

/// Parses `std::env::args` and returns the process exit code.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
