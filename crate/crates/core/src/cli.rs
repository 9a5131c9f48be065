//! The `groom` command line.
//!
//! Machine-readable results go to stdout (JSON unless `--format csv`),
//! diagnostics to stderr. Exit codes: 0 success, 2 usage or configuration
//! error, 3 tracker/provider/runtime failure.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::DateTime;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::clock::{Clock, FixedClock, SystemClock};
use crate::config::{ConfigError, ConfigLayer, Settings};
use crate::dedup::{detect_duplicates, DedupError};
use crate::embedding::{EmbedError, Embedder};
use crate::eval::{
    load_ground_truth, load_predictions, metrics, report_csv, report_json, score, write_predictions,
    EvalError, ReportRow,
};
use crate::gateway::{open_gateway_with, BacklogGateway, GatewayConfig, GatewayError};
use crate::http::UreqTransport;
use crate::index::IndexError;
use crate::model::BacklogSnapshot;
use crate::review::{ReviewError, ReviewService, SessionMode};
use crate::suggest::{PromptTemplates, SuggestError, Suggester, SuggestionRequest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable that pins the clock (RFC 3339), for reproducible
/// output.
pub const NOW_ENV: &str = "GROOM_NOW";

#[derive(Debug, Parser)]
#[command(
    name = "groom",
    version,
    about = "Find and resolve duplicate issues in a backlog"
)]
pub struct Cli {
    /// Sectioned key=value config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct SourceArgs {
    /// Local JSON fixture standing in for the tracker.
    #[arg(long, value_name = "PATH", conflicts_with = "project")]
    pub fixture: Option<PathBuf>,
    /// Tracker project key (REST mode).
    #[arg(long, value_name = "KEY")]
    pub project: Option<String>,
    /// Tracker base URL (REST mode).
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// User for basic auth; the token comes from JIRA_TOKEN.
    #[arg(long)]
    pub user: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch the backlog and write it as a snapshot.
    Fetch {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// List likely duplicate pairs.
    Scan {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Detect, resolve and apply duplicates without review (requires --auto).
    Groom {
        #[arg(long)]
        auto: bool,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        threshold: Option<f64>,
        /// Write the predicted duplicate pairs here.
        #[arg(long, value_name = "PATH")]
        predictions: Option<PathBuf>,
        /// Score the run against this ground truth.
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
    /// Score predicted pairs against ground truth.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        predictions: PathBuf,
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        time_seconds: f64,
        #[arg(long, default_value = "run")]
        participant: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Backlog the truth labels; supplies the issue count and key set.
        #[arg(long, value_name = "PATH")]
        fixture: Option<PathBuf>,
    },
    /// Serve the review API until interrupted.
    Serve {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
    /// Propose new backlog items.
    Suggest {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long, default_value_t = 5)]
        max: usize,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<DedupError> for CliError {
    fn from(e: DedupError) -> Self {
        match e {
            DedupError::Config(_) | DedupError::Index(IndexError::InvalidThreshold(_)) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SuggestError> for CliError {
    fn from(e: SuggestError) -> Self {
        match e {
            SuggestError::InvalidRequest(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ReviewError> for CliError {
    fn from(e: ReviewError) -> Self {
        match e {
            ReviewError::Dedup(d) => d.into(),
            ReviewError::Gateway(g) => g.into(),
            ReviewError::Suggest(s) => s.into(),
            ReviewError::Eval(v) => v.into(),
            ReviewError::InvalidRequest(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Process environment as seen by the CLI; injectable for tests.
pub type EnvLookup<'a> = &'a dyn Fn(&str) -> Option<String>;

struct Context {
    settings: Settings,
    clock: Arc<dyn Clock>,
}

impl Context {
    fn new(config: Option<&Path>, flags: ConfigLayer, env: EnvLookup) -> Result<Context, CliError> {
        let file = match config {
            Some(path) => ConfigLayer::load(path)?,
            None => ConfigLayer::new(),
        };
        let layered = flags.over(&file).over(&ConfigLayer::from_env(env));
        let clock: Arc<dyn Clock> = match env(NOW_ENV).filter(|v| !v.is_empty()) {
            Some(raw) => {
                let t = DateTime::parse_from_rfc3339(&raw).map_err(|e| {
                    CliError::Usage(format!("{NOW_ENV}={raw:?} is not an RFC 3339 time: {e}"))
                })?;
                Arc::new(FixedClock(t.with_timezone(&chrono::Utc)))
            }
            None => Arc::new(SystemClock),
        };
        Ok(Context {
            settings: Settings::resolve(&layered)?,
            clock,
        })
    }

    fn gateway_config(&self) -> Result<&GatewayConfig, CliError> {
        self.settings
            .gateway
            .as_ref()
            .ok_or_else(|| CliError::Usage("no backlog source: pass --fixture PATH or --project KEY".into()))
    }

    fn gateway(&self) -> Result<Arc<dyn BacklogGateway>, CliError> {
        let config = self.gateway_config()?;
        let transport = Arc::new(UreqTransport::new(config.request_timeout));
        Ok(open_gateway_with(config, transport, self.clock.clone())?)
    }

    fn embedder(&self) -> Result<Embedder, CliError> {
        Ok(Embedder::from_config(&self.settings.embedding)?)
    }

    fn suggester(&self) -> Result<Suggester, CliError> {
        let provider = self.settings.chat.build()?;
        let mut suggester = Suggester::new(provider);
        if let Some(dir) = &self.settings.prompts_dir {
            let templates = PromptTemplates::load_dir(dir)
                .map_err(|e| CliError::Usage(format!("prompt templates in {}: {e}", dir.display())))?;
            suggester = suggester.with_templates(templates);
        }
        Ok(suggester)
    }

    fn service(&self) -> Result<ReviewService, CliError> {
        Ok(ReviewService::new(
            self.gateway()?,
            Arc::new(self.embedder()?),
            Arc::new(self.suggester()?),
            self.settings.engine,
            self.clock.clone(),
        )
        .with_project_description(self.settings.project_description.clone()))
    }
}

fn flag_layer(source: Option<&SourceArgs>, threshold: Option<f64>) -> Result<ConfigLayer, CliError> {
    let mut layer = ConfigLayer::new();
    if let Some(s) = source {
        if let Some(f) = &s.fixture {
            layer.set("tracker.mode", "fixture")?;
            layer.set("tracker.fixture", f.display().to_string())?;
        }
        if let Some(p) = &s.project {
            layer.set("tracker.mode", "rest")?;
            layer.set("tracker.project", p.clone())?;
        }
        if let Some(u) = &s.base_url {
            layer.set("tracker.base_url", u.clone())?;
        }
        if let Some(u) = &s.user {
            layer.set("tracker.user", u.clone())?;
        }
    }
    if let Some(t) = threshold {
        layer.set("engine.threshold", t.to_string())?;
    }
    Ok(layer)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes `text` to `out_path` when given, else to stdout.
fn emit(out: &mut dyn Write, out_path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out_path {
        Some(path) => write_file(path, text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("cannot write output: {e}"))),
    }
}

fn load_snapshot_for_truth(fixture: Option<&Path>) -> Result<Option<BacklogSnapshot>, CliError> {
    let Some(path) = fixture else {
        return Ok(None);
    };
    let gw = crate::gateway::FixtureGateway::new(path, Arc::new(SystemClock));
    Ok(Some(gw.fetch_backlog()?))
}

fn execute(cli: Cli, env: EnvLookup, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Fetch {
            source,
            out: out_path,
        } => {
            let ctx = Context::new(config, flag_layer(Some(&source), None)?, env)?;
            let snapshot = ctx.gateway()?.fetch_backlog()?;
            let _ = writeln!(
                err,
                "fetched {} issues from {}",
                snapshot.len(),
                snapshot.project_key
            );
            emit(out, out_path.as_deref(), &to_json(&snapshot))
        }
        Command::Scan {
            source,
            threshold,
            out: out_path,
        } => {
            let ctx = Context::new(config, flag_layer(Some(&source), threshold)?, env)?;
            ctx.settings.engine.validate()?;
            let snapshot = ctx.gateway()?.fetch_backlog()?;
            let candidates = detect_duplicates(&snapshot, &ctx.embedder()?, &ctx.settings.engine)?;
            let _ = writeln!(
                err,
                "{} candidate pairs at threshold {}",
                candidates.len(),
                ctx.settings.engine.duplicate_threshold
            );
            emit(out, out_path.as_deref(), &to_json(&candidates))
        }
        Command::Groom {
            auto,
            source,
            threshold,
            predictions,
            truth,
        } => {
            if !auto {
                return Err(CliError::Usage(
                    "interactive grooming happens in the review UI: run `groom serve`, or pass --auto to accept every candidate".into(),
                ));
            }
            let ctx = Context::new(config, flag_layer(Some(&source), threshold)?, env)?;
            ctx.settings.engine.validate()?;
            let service = ctx.service()?;
            let session = service.start_session(SessionMode::Auto, None)?;
            let mut report = if session.candidates.is_empty() {
                let _ = writeln!(err, "no duplicate candidates; nothing applied");
                service.report(&session.session_id)?
            } else {
                service.apply_session(&session.session_id)?
            };
            let pairs: BTreeSet<_> = report.predicted_pairs.iter().cloned().collect();
            if let Some(path) = &predictions {
                write_predictions(path, &pairs)?;
            }
            if let Some(path) = &truth {
                let truth = load_ground_truth(path, Some(&session.snapshot))?;
                let cm = score(&pairs, &truth)?;
                let m = metrics(&cm, report.time_seconds);
                report.row = Some(ReportRow::new(format!("{} Auto", session.session_id), &cm, &m));
                report.confusion = Some(cm);
                report.metrics = Some(m);
            }
            let _ = writeln!(
                err,
                "applied {} action(s) covering {} predicted pair(s)",
                report.receipts.len(),
                pairs.len()
            );
            emit(out, None, &to_json(&report))
        }
        Command::Evaluate {
            predictions,
            truth,
            time_seconds,
            participant,
            format,
            fixture,
        } => {
            if !(time_seconds >= 0.0) {
                return Err(CliError::Usage("--time-seconds must be non-negative".into()));
            }
            let companion = load_snapshot_for_truth(fixture.as_deref())?;
            let truth = load_ground_truth(&truth, companion.as_ref())?;
            let predicted = load_predictions(&predictions)?;
            let cm = score(&predicted, &truth)?;
            let row = ReportRow::new(participant, &cm, &metrics(&cm, time_seconds));
            let text = match format {
                Format::Json => {
                    let mut s = report_json(std::slice::from_ref(&row));
                    s.push('\n');
                    s
                }
                Format::Csv => report_csv(std::slice::from_ref(&row)),
            };
            emit(out, None, &text)
        }
        Command::Serve {
            source,
            threshold,
            host,
            port,
            truth,
        } => {
            let ctx = Context::new(config, flag_layer(Some(&source), threshold)?, env)?;
            ctx.settings.engine.validate()?;
            let mut service = ctx.service()?;
            if let Some(path) = &truth {
                let snapshot = ctx.gateway()?.fetch_backlog()?;
                service = service.with_ground_truth(Some(load_ground_truth(path, Some(&snapshot))?));
            }
            serve(Arc::new(service), &host, port, err)
        }
        Command::Suggest { source, prompt, max } => {
            let ctx = Context::new(config, flag_layer(Some(&source), None)?, env)?;
            let snapshot = ctx.gateway()?.fetch_backlog()?;
            let request = SuggestionRequest::for_snapshot(
                &snapshot,
                ctx.settings.project_description.clone(),
                prompt,
                max,
            );
            let suggestions = ctx.suggester()?.suggest_new_issues(
                &request,
                &snapshot,
                &ctx.embedder()?,
                &ctx.settings.engine,
            )?;
            emit(out, None, &to_json(&suggestions))
        }
    }
}

fn serve(service: Arc<ReviewService>, host: &str, port: u16, err: &mut dyn Write) -> Result<(), CliError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| CliError::Runtime(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let _ = writeln!(err, "listening on http://{addr}");
        let _ = err.flush();
        axum::serve(listener, crate::review::router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Runtime(format!("server error: {e}")))
    })?;
    let _ = writeln!(err, "shut down");
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, env: EnvLookup, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_CONFIG
                }
            };
        }
    };
    match execute(cli, env, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
