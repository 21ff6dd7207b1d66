//! Command-line entry points. `run` returns the process exit code:
//! 0 success, 2 usage, 3 fixture or I/O problem, 4 provider configuration.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use homeplan_core::evaluator::score_plan_with;
use homeplan_core::schedule_json::{ParseOptions, parse_schedule_with};
use homeplan_core::{FamilyContext, LearningTask, PlanId};

use crate::api::{AppState, router};
use crate::config::{Layer, Settings, SettingsError};
use crate::export::{Format, export};
use crate::fixtures::{FixtureSpec, load_fixtures, write_fixtures};
use crate::harness::{HarnessConfig, run_harness};
use crate::llm::gateway::Gateway;
use crate::pipeline::{Pipeline, PlanInput, Policy};
use crate::store::Store;
use crate::{default_detectors, write_atomic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PROVIDER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "homeplan", version, about = "Weekly family learning plans: generate, score, serve and export")]
pub struct Cli {
    /// TOML settings file (also HOMEPLAN_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded family fixtures and canned model replies.
    GenFixtures(GenArgs),
    /// Plan and score every (family, task set) in a fixture directory.
    RunHarness(HarnessArgs),
    /// Write a stored plan (or a plan file) as json, csv or markdown.
    ExportTimesheet(ExportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Generate a single plan from a family file and a task file.
    Plan(PlanArgs),
    /// Score a plan file.
    Score(ScoreArgs),
}

#[derive(Debug, Args, Default)]
pub struct ProviderArgs {
    /// stub or http.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub stub_dir: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub policy: Option<Policy>,
}

impl ProviderArgs {
    fn layer(&self) -> Layer {
        Layer {
            provider: self.provider.clone(),
            stub_dir: self.stub_dir.clone(),
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            policy: self.policy,
            ..Layer::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub families: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub caregivers_min: usize,
    #[arg(long, default_value_t = 4)]
    pub caregivers_max: usize,
    #[arg(long)]
    pub task_sets: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HarnessArgs {
    /// Directory written by gen-fixtures.
    #[arg(long)]
    pub fixtures: PathBuf,
    #[arg(long)]
    pub task_sets: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Make the provider unreachable for this plan id (repeatable).
    #[arg(long = "fault")]
    pub faults: Vec<String>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Plan stored in the database.
    #[arg(long, conflicts_with = "plan_file")]
    pub plan_id: Option<String>,
    /// Plan JSON file instead of the database.
    #[arg(long)]
    pub plan_file: Option<PathBuf>,
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub family: PathBuf,
    /// JSON array of tasks.
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, default_value = "plan-1")]
    pub plan_id: String,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long)]
    pub tasks: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Provider(_) => EXIT_PROVIDER,
        }
    }
}

impl From<SettingsError> for CliError {
    fn from(e: SettingsError) -> Self {
        match e {
            SettingsError::Provider(_) => CliError::Provider(e.to_string()),
            SettingsError::File { .. } => CliError::Io(e.to_string()),
            SettingsError::Invalid { .. } => CliError::Usage(e.to_string()),
        }
    }
}

fn io(context: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", context.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Parses `args` (program name first) and runs the command, using the
/// process environment for the env layer.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_env(args, |k| std::env::var(k).ok())
}

pub fn run_with_env<I, T>(args: I, env: impl Fn(&str) -> Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &env) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn settings(cli_config: Option<&Path>, env: &dyn Fn(&str) -> Option<String>, flags: Layer) -> Result<Settings, CliError> {
    let config_path = cli_config.map(Path::to_owned).or_else(|| env("HOMEPLAN_CONFIG").map(PathBuf::from));
    let file = match config_path {
        Some(p) => Layer::from_file(&p)?,
        None => Layer::default(),
    };
    Ok(file.overlay(Layer::from_env(env)?).overlay(flags).resolve())
}

fn execute(cli: Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::GenFixtures(a) => {
            let flags = Layer { seed: a.seed, families: a.families, task_sets: a.task_sets, out_dir: a.out_dir, ..Layer::default() };
            let s = settings(config, env, flags)?;
            let spec = FixtureSpec {
                seed: s.seed,
                families: s.families,
                caregivers_min: a.caregivers_min,
                caregivers_max: a.caregivers_max,
                task_sets: s.task_sets,
            };
            let fixtures = write_fixtures(&s.out_dir, &spec).map_err(|e| match e {
                crate::fixtures::FixtureError::CaregiverRange(..) => CliError::Usage(e.to_string()),
                _ => CliError::Io(e.to_string()),
            })?;
            println!("wrote {} families to {}", fixtures.len(), s.out_dir.display());
            Ok(())
        }
        Command::RunHarness(a) => {
            let mut flags = a.provider.layer();
            flags.task_sets = a.task_sets;
            flags.jobs = a.jobs;
            flags.out_dir = a.out_dir;
            if flags.stub_dir.is_none() && a.fixtures.join("stub").is_dir() {
                flags.stub_dir = Some(a.fixtures.join("stub"));
            }
            let s = settings(config, env, flags)?;
            let fixtures = load_fixtures(&a.fixtures).map_err(|e| CliError::Io(e.to_string()))?;
            let provider = s.provider()?;
            let mut hc = HarnessConfig::new(&s.out_dir, s.policy);
            hc.task_sets = s.task_sets;
            hc.jobs = s.jobs;
            hc.settings = s.gateway_settings();
            hc.faults = a.faults.iter().map(|f| PlanId::from(f.as_str())).collect();
            let summary = run_harness(&fixtures, provider, &hc).map_err(|e| match e {
                crate::harness::HarnessError::MissingTaskSets { .. } | crate::harness::HarnessError::NoFixtures => {
                    CliError::Io(e.to_string())
                }
                other => CliError::Io(other.to_string()),
            })?;
            print!("{}", summary.table);
            println!("scored {} plan(s), {} failure(s); output in {}", summary.reports.len(), summary.failures.len(), s.out_dir.display());
            Ok(())
        }
        Command::ExportTimesheet(a) => {
            let s = settings(config, env, Layer { db: a.db.clone(), ..Layer::default() })?;
            let schedule = match (&a.plan_id, &a.plan_file) {
                (_, Some(path)) => {
                    let text = fs::read_to_string(path).map_err(io(path))?;
                    parse_schedule_with(&text, &ParseOptions::stored())
                        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
                        .schedule
                }
                (Some(id), None) => {
                    if !s.db.exists() {
                        return Err(CliError::Io(format!("{}: database not found", s.db.display())));
                    }
                    let store = Store::open(&s.db).map_err(|e| CliError::Io(e.to_string()))?;
                    store.snapshot(id).map_err(|e| CliError::Io(e.to_string()))?
                }
                (None, None) => return Err(CliError::Usage("give --plan-id or --plan-file".into())),
            };
            let text = export(&schedule, a.format);
            match &a.out {
                Some(path) => write_atomic(path, text.as_bytes()).map_err(io(path))?,
                None => {
                    std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
                }
            }
            Ok(())
        }
        Command::Serve(a) => {
            let mut flags = a.provider.layer();
            flags.db = a.db;
            flags.listen = a.listen;
            let s = settings(config, env, flags)?;
            let provider = s.provider()?;
            let store = Store::open(&s.db).map_err(|e| CliError::Io(e.to_string()))?;
            let pipeline = Pipeline::new(Gateway::with_settings(provider, s.gateway_settings()), default_detectors());
            let app = router(Arc::new(AppState { store, pipeline }));
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| CliError::Io(e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&s.listen)
                    .await
                    .map_err(|e| CliError::Io(format!("bind {}: {e}", s.listen)))?;
                tracing::info!(addr = %s.listen, db = %s.db.display(), "serving");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| CliError::Io(e.to_string()))
            })
        }
        Command::Plan(a) => {
            let mut flags = a.provider.layer();
            flags.out_dir = a.out_dir;
            let s = settings(config, env, flags)?;
            let family: FamilyContext = read_json(&a.family)?;
            let tasks: Vec<LearningTask> = read_json(&a.tasks)?;
            let provider = s.provider()?;
            let pipeline = Pipeline::new(Gateway::with_settings(provider, s.gateway_settings()), default_detectors());
            let input = PlanInput { plan_id: a.plan_id.as_str().into(), family, tasks, policy: s.policy, subtasks: None };
            let out = pipeline.generate_plan(&input).map_err(|e| match e.stage() {
                "input" => CliError::Usage(e.to_string()),
                _ => CliError::Provider(e.to_string()),
            })?;
            fs::create_dir_all(&s.out_dir).map_err(io(&s.out_dir))?;
            let base = s.out_dir.join(&a.plan_id);
            let plan_path = base.with_extension("json");
            write_atomic(&plan_path, homeplan_core::to_canonical_json(&out.schedule).as_bytes()).map_err(io(&plan_path))?;
            let report_path = s.out_dir.join(format!("{}.report.json", a.plan_id));
            let report = serde_json::to_string_pretty(&out.report).expect("report serializes") + "\n";
            write_atomic(&report_path, report.as_bytes()).map_err(io(&report_path))?;
            let prov_path = base.with_extension("jsonl");
            write_atomic(&prov_path, out.provenance.to_json_lines().as_bytes()).map_err(io(&prov_path))?;
            println!("{}", plan_path.display());
            Ok(())
        }
        Command::Score(a) => {
            let family: FamilyContext = read_json(&a.family)?;
            let tasks: Vec<LearningTask> = read_json(&a.tasks)?;
            let text = fs::read_to_string(&a.plan).map_err(io(&a.plan))?;
            let schedule = parse_schedule_with(&text, &ParseOptions::stored())
                .map_err(|e| CliError::Io(format!("{}: {e}", a.plan.display())))?
                .schedule;
            let report = score_plan_with(&family, &tasks, &schedule, &default_detectors());
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
    }
}
