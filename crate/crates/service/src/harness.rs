//! Batch evaluation: one plan per (family, task set), scored and
//! aggregated into the Avg./Best table.
//!
//! Per-plan model failures become rows in `failures.csv`; only problems
//! with the harness itself (fixtures, output directory) are errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use homeplan_core::evaluator::{DetectorConfig, DimensionAggregate, PlanQualityReport, aggregate_reports, render_aggregate_table};
use homeplan_core::{PlanId, to_canonical_json};
use rayon::prelude::*;
use serde::Serialize;

use crate::fixtures::Fixture;
use crate::llm::gateway::{Gateway, GatewaySettings};
use crate::llm::provider::{ChatProvider, ChatRequest, ProviderError};
use crate::pipeline::{Pipeline, PlanInput, Policy};
use crate::write_atomic;

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub policy: Policy,
    pub task_sets: usize,
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub settings: GatewaySettings,
    pub detectors: DetectorConfig,
    /// Plans whose provider is made unreachable, for fault-injection runs.
    pub faults: BTreeSet<PlanId>,
}

impl HarnessConfig {
    pub fn new(out_dir: &Path, policy: Policy) -> Self {
        Self {
            policy,
            task_sets: 3,
            jobs: 1,
            out_dir: out_dir.to_owned(),
            settings: GatewaySettings::default(),
            detectors: crate::default_detectors(),
            faults: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailureRow {
    pub plan_id: String,
    pub family_id: String,
    pub task_set: usize,
    pub stage: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessSummary {
    pub reports: Vec<PlanQualityReport>,
    pub failures: Vec<FailureRow>,
    pub aggregate: Vec<DimensionAggregate>,
    pub table: String,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("no fixtures to run")]
    NoFixtures,
    #[error("fixture `{family}` has {have} task set(s), {want} requested")]
    MissingTaskSets { family: String, have: usize, want: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Always-down provider standing in for an outage on selected plans.
struct Outage;

impl ChatProvider for Outage {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        Err(ProviderError::Unreachable(format!("injected fault ({})", request.template)))
    }

    fn supports_vision(&self) -> bool {
        false
    }

    fn name(&self) -> &str {
        "outage"
    }
}

pub fn plan_id_for(family_id: &str, set: usize) -> PlanId {
    format!("{family_id}-set{}", set + 1).as_str().into()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    write_atomic(path, bytes).map_err(|source| HarnessError::Io { path: path.to_owned(), source })
}

enum Outcome {
    Report(PlanQualityReport),
    Failure(FailureRow),
}

pub fn run_harness(
    fixtures: &[Fixture],
    provider: Arc<dyn ChatProvider>,
    config: &HarnessConfig,
) -> Result<HarnessSummary, HarnessError> {
    if fixtures.is_empty() {
        return Err(HarnessError::NoFixtures);
    }
    let mut jobs = Vec::new();
    for fx in fixtures {
        if fx.task_sets.len() < config.task_sets {
            return Err(HarnessError::MissingTaskSets {
                family: fx.family.family_id.to_string(),
                have: fx.task_sets.len(),
                want: config.task_sets,
            });
        }
        for set in 0..config.task_sets {
            jobs.push((fx, set));
        }
    }
    for sub in ["plans", "reports", "provenance"] {
        let dir = config.out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|source| HarnessError::Io { path: dir, source })?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let mut outcomes: Vec<(PlanId, Result<Outcome, HarnessError>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(fx, set)| {
                let plan_id = plan_id_for(fx.family.family_id.as_str(), *set);
                (plan_id.clone(), run_one(fx, *set, plan_id, provider.clone(), config))
            })
            .collect()
    });
    outcomes.sort_by(|a, b| a.0.cmp(&b.0));

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (_, outcome) in outcomes {
        match outcome? {
            Outcome::Report(r) => reports.push(r),
            Outcome::Failure(f) => failures.push(f),
        }
    }

    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    csv.write_record(["plan_id", "family_id", "task_set", "stage", "code", "message"]).expect("in-memory csv");
    for f in &failures {
        csv.serialize(f).expect("in-memory csv");
    }
    write(&config.out_dir.join("failures.csv"), &csv.into_inner().expect("in-memory csv"))?;

    let (aggregate, table) = match aggregate_reports(&reports) {
        Ok(agg) => {
            let table = render_aggregate_table(&agg);
            (agg, table)
        }
        Err(_) => (Vec::new(), String::from("no plans were scored\n")),
    };
    write(&config.out_dir.join("aggregate.md"), table.as_bytes())?;
    let json = serde_json::json!({
        "policy": config.policy,
        "plans_scored": reports.len(),
        "plans_failed": failures.len(),
        "dimensions": aggregate,
    });
    write(&config.out_dir.join("aggregate.json"), pretty(&json).as_bytes())?;
    tracing::info!(scored = reports.len(), failed = failures.len(), "harness finished");
    Ok(HarnessSummary { reports, failures, aggregate, table })
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

fn run_one(
    fx: &Fixture,
    set: usize,
    plan_id: PlanId,
    provider: Arc<dyn ChatProvider>,
    config: &HarnessConfig,
) -> Result<Outcome, HarnessError> {
    let provider: Arc<dyn ChatProvider> = if config.faults.contains(&plan_id) { Arc::new(Outage) } else { provider };
    let pipeline = Pipeline::new(Gateway::with_settings(provider, config.settings.clone()), config.detectors.clone());
    let input = PlanInput {
        plan_id: plan_id.clone(),
        family: fx.family.clone(),
        tasks: fx.task_sets[set].clone(),
        policy: config.policy,
        subtasks: None,
    };
    match pipeline.generate_plan(&input) {
        Ok(out) => {
            let id = plan_id.as_str();
            write(&config.out_dir.join("plans").join(format!("{id}.json")), to_canonical_json(&out.schedule).as_bytes())?;
            write(&config.out_dir.join("reports").join(format!("{id}.json")), pretty(&out.report).as_bytes())?;
            write(&config.out_dir.join("provenance").join(format!("{id}.jsonl")), out.provenance.to_json_lines().as_bytes())?;
            Ok(Outcome::Report(out.report))
        }
        Err(e) => {
            tracing::warn!(plan = %plan_id, stage = e.stage(), code = e.code(), "plan failed");
            Ok(Outcome::Failure(FailureRow {
                plan_id: plan_id.to_string(),
                family_id: fx.family.family_id.to_string(),
                task_set: set + 1,
                stage: e.stage().to_owned(),
                code: e.code().to_owned(),
                message: e.to_string(),
            }))
        }
    }
}
