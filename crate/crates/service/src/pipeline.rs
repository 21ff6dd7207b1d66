//! Plan generation: decompose, schedule, repair, summarize, score.
//!
//! Every stage appends to a provenance log. Generation for one plan id is
//! mutually exclusive; different plans run concurrently.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Mutex;

use homeplan_core::conflict::{Conflict, ConflictKind, detect_conflicts, repair};
use homeplan_core::evaluator::{DetectorConfig, PlanQualityReport, score_plan_with};
use homeplan_core::schedule_json::{ParseOptions, parse_schedule_json, parse_schedule_value};
use homeplan_core::scheduler::{SchedulingRequest, Unplaced, assign_and_schedule};
use homeplan_core::{
    FamilyContext, FamilyId, LearningTask, PlanId, Subtask, SubtaskStatus, WeeklySchedule, subtask_name, to_canonical_json,
};
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use crate::llm::gateway::{CallTrace, Gateway, GatewayError, truncate_at_sentence};

/// LLM repair attempts before the deterministic backstop takes over.
pub const LLM_REPAIR_ATTEMPTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    LlmFirst,
    DeterministicOnly,
    LlmWithRepair,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::LlmFirst, Policy::DeterministicOnly, Policy::LlmWithRepair];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::LlmFirst => "llm_first",
            Policy::DeterministicOnly => "deterministic_only",
            Policy::LlmWithRepair => "llm_with_repair",
        }
    }

    pub fn parse(text: &str) -> Option<Policy> {
        Self::ALL.into_iter().find(|p| p.as_str() == text)
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::parse(s).ok_or_else(|| format!("unknown policy `{s}` (llm_first, deterministic_only, llm_with_repair)"))
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvenanceEntry {
    pub stage: &'static str,
    pub kind: &'static str,
    pub detail: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Provenance(pub Vec<ProvenanceEntry>);

impl Provenance {
    fn push(&mut self, stage: &'static str, kind: &'static str, detail: impl Into<String>, data: Value) {
        let detail = detail.into();
        tracing::debug!(stage, kind, %detail, "provenance");
        self.0.push(ProvenanceEntry { stage, kind, detail, data });
    }

    fn trace(&mut self, stage: &'static str, trace: &CallTrace) {
        self.push(stage, "provider_calls", format!("{} call(s), {} repair request(s)", trace.calls, trace.repairs), json!(trace));
    }

    pub fn entries(&self, kind: &str) -> impl Iterator<Item = &ProvenanceEntry> {
        self.0.iter().filter(move |e| e.kind == kind)
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.0 {
            out.push_str(&serde_json::to_string(e).expect("provenance serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: GatewayError },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("a generation for plan `{0}` is already running")]
    InFlight(PlanId),
    #[error("internal: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Stage { source, .. } => source.code(),
            PipelineError::Input(_) => "validation_failed",
            PipelineError::InFlight(_) => "generation_in_flight",
            PipelineError::Internal(_) => "internal",
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Stage { stage, .. } => stage,
            PipelineError::Input(_) => "input",
            PipelineError::InFlight(_) => "lock",
            PipelineError::Internal(_) => "finalize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanInput {
    pub plan_id: PlanId,
    pub family: FamilyContext,
    pub tasks: Vec<LearningTask>,
    pub policy: Policy,
    /// Skips the decomposition call when given.
    pub subtasks: Option<Vec<Subtask>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub schedule: WeeklySchedule,
    pub report: PlanQualityReport,
    pub provenance: Provenance,
    pub unplaced: Vec<Unplaced>,
    pub unresolved: Vec<Conflict>,
}

pub struct Pipeline {
    pub gateway: Gateway,
    pub detectors: DetectorConfig,
    running: Mutex<BTreeSet<PlanId>>,
}

struct RunGuard<'p> {
    running: &'p Mutex<BTreeSet<PlanId>>,
    plan_id: PlanId,
}

impl Drop for RunGuard<'_> {
    fn drop(&mut self) {
        self.running.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.plan_id);
    }
}

/// Plain-text summary built without a model.
pub fn offline_summary(family: &FamilyContext, schedule: &WeeklySchedule, limit: usize) -> String {
    let days: BTreeSet<u8> = schedule.subtasks.iter().filter_map(|s| s.slot).map(|s| s.day().get()).collect();
    let mut tasks: Vec<&str> = Vec::new();
    for st in &schedule.subtasks {
        if !tasks.contains(&st.parent_task.as_str()) {
            tasks.push(&st.parent_task);
        }
    }
    let mut text = format!(
        "This week has {} sessions on {} day(s) covering {}.",
        schedule.subtasks.len(),
        days.len(),
        tasks.join(", ")
    );
    for c in &family.caregivers {
        let n = schedule.subtasks.iter().filter(|s| s.is_owned_by(c.caregiver_id.as_str())).count();
        if n > 0 {
            text.push_str(&format!(" {} ({}) leads {n}.", c.role_label, c.caregiver_id));
        }
    }
    text.push_str(" Leave a note after each session so the next adult knows where the child is.");
    truncate_at_sentence(&text, limit)
}

/// Reads a pre-made decomposition (a JSON array of subtasks, slots
/// optional) in the stored-schedule format.
pub fn parse_subtasks(value: &Value, plan_id: &PlanId, family_id: &FamilyId) -> Result<Vec<Subtask>, PipelineError> {
    let doc = json!({"plan_id": plan_id, "family_id": family_id, "summary": null, "subtasks": value});
    parse_schedule_value(&doc, &ParseOptions { require_slots: false, ..ParseOptions::stored() })
        .map(|p| p.schedule.subtasks)
        .map_err(|e| PipelineError::Input(format!("subtasks: {e}")))
}

/// Renames each parent's subtasks to `<parent>_1..m`, keeping their order.
/// Returns (old, new) pairs for the names that changed.
fn renumber(subtasks: &mut [Subtask]) -> Vec<(String, String)> {
    let mut by_parent: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, st) in subtasks.iter().enumerate() {
        by_parent.entry(st.parent_task.clone()).or_default().push(i);
    }
    let mut renamed = Vec::new();
    for (parent, mut idx) in by_parent {
        idx.sort_by_key(|&i| subtasks[i].ordinal().unwrap_or(u32::MAX));
        for (k, i) in idx.into_iter().enumerate() {
            let name = subtask_name(&parent, k as u32 + 1);
            if subtasks[i].subtask_name != name {
                renamed.push((subtasks[i].subtask_name.clone(), name.clone()));
                subtasks[i].subtask_name = name;
            }
        }
    }
    renamed
}

fn validate_input(input: &PlanInput) -> Result<(), PipelineError> {
    input.family.validate().map_err(|e| PipelineError::Input(e.to_string()))?;
    if input.tasks.is_empty() {
        return Err(PipelineError::Input("no tasks".into()));
    }
    let mut names = BTreeSet::new();
    for t in &input.tasks {
        homeplan_core::validate_task_name(&t.task_name).map_err(|e| PipelineError::Input(e.to_string()))?;
        if !names.insert(&t.task_name) {
            return Err(PipelineError::Input(format!("duplicate task `{}`", t.task_name)));
        }
    }
    if let Some(subs) = &input.subtasks {
        for st in subs {
            if !names.contains(&st.parent_task) || st.ordinal().is_none() {
                return Err(PipelineError::Input(format!("subtask `{}` does not belong to a listed task", st.subtask_name)));
            }
            if st.owners.is_empty() || st.owners.iter().any(|o| input.family.caregiver(o.as_str()).is_none()) {
                return Err(PipelineError::Input(format!("subtask `{}` has missing or unknown owners", st.subtask_name)));
            }
        }
    }
    Ok(())
}

impl Pipeline {
    pub fn new(gateway: Gateway, detectors: DetectorConfig) -> Self {
        Self { gateway, detectors, running: Mutex::new(BTreeSet::new()) }
    }

    fn acquire(&self, plan_id: &PlanId) -> Result<RunGuard<'_>, PipelineError> {
        let mut running = self.running.lock().unwrap_or_else(|e| e.into_inner());
        if !running.insert(plan_id.clone()) {
            return Err(PipelineError::InFlight(plan_id.clone()));
        }
        Ok(RunGuard { running: &self.running, plan_id: plan_id.clone() })
    }

    pub fn generate_plan(&self, input: &PlanInput) -> Result<PlanOutput, PipelineError> {
        let _guard = self.acquire(&input.plan_id)?;
        self.run(input)
    }

    /// Fresh generation under the same plan id; subtasks finished in
    /// `previous` stay finished when name and parent task still match.
    pub fn regenerate_plan(&self, previous: &WeeklySchedule, input: &PlanInput) -> Result<PlanOutput, PipelineError> {
        let _guard = self.acquire(&input.plan_id)?;
        let mut out = self.run(input)?;
        for st in &mut out.schedule.subtasks {
            let Some(old) = previous.subtask(&st.subtask_name) else { continue };
            if old.parent_task == st.parent_task && old.status == SubtaskStatus::Done {
                st.status = SubtaskStatus::Done;
                st.notes = old.notes.clone();
                st.handover_log = old.handover_log.clone();
                out.provenance.push("carry_over", "carried_over", format!("`{}` stays done", st.subtask_name), Value::Null);
            }
        }
        Ok(out)
    }

    fn deterministic(&self, req: &SchedulingRequest, log: &mut Provenance) -> Result<(WeeklySchedule, Vec<Unplaced>), PipelineError> {
        let outcome = assign_and_schedule(req).map_err(|e| PipelineError::Input(e.to_string()))?;
        log.push(
            "schedule",
            "strategy",
            format!("deterministic scheduler placed {} of {}", outcome.schedule.subtasks.len(), req.subtasks.len()),
            Value::Null,
        );
        for u in &outcome.unplaced {
            log.push("schedule", "unplaced", format!("`{}`: {}", u.subtask_name, u.reason), Value::Null);
        }
        Ok((outcome.schedule, outcome.unplaced))
    }

    fn backstop(&self, req: &SchedulingRequest, schedule: WeeklySchedule, log: &mut Provenance) -> Result<WeeklySchedule, PipelineError> {
        let ordering = req.ordering().map_err(|e| PipelineError::Input(e.to_string()))?;
        let result = repair(&req.family, &schedule, &ordering);
        for e in &result.edits {
            log.push("repair", "edit", format!("`{}` {} -> {}", e.subtask_name, e.old, e.new), json!(e));
        }
        if result.edits.is_empty() {
            log.push("repair", "strategy", "conflict engine made no edits", Value::Null);
        }
        Ok(result.schedule)
    }

    fn run(&self, input: &PlanInput) -> Result<PlanOutput, PipelineError> {
        validate_input(input)?;
        let mut log = Provenance::default();
        log.push("input", "policy", input.policy.as_str(), Value::Null);

        let subtasks = match &input.subtasks {
            Some(subs) => {
                log.push("decompose", "strategy", format!("{} subtasks supplied", subs.len()), Value::Null);
                subs.clone()
            }
            None => {
                let d = self
                    .gateway
                    .decompose_tasks(&input.family, &input.tasks)
                    .map_err(|source| PipelineError::Stage { stage: "decompose", source })?;
                for (task, trace) in &d.traces {
                    log.push("decompose", "task", format!("`{task}` via {:?}", trace.strategy), Value::Null);
                    log.trace("decompose", trace);
                }
                d.subtasks
            }
        };
        let req = SchedulingRequest::new(input.plan_id.as_str(), input.family.clone(), input.tasks.clone(), subtasks);

        let (mut schedule, mut unplaced) = match input.policy {
            Policy::DeterministicOnly => self.deterministic(&req, &mut log)?,
            Policy::LlmWithRepair => {
                let drafted =
                    self.gateway.llm_schedule(&req).map_err(|source| PipelineError::Stage { stage: "schedule", source })?;
                log.trace("schedule", &drafted.trace);
                log.push("schedule", "audit", format!("{} violation(s)", drafted.violations.len()), json!(drafted.violations));
                (self.backstop(&req, drafted.schedule, &mut log)?, Vec::new())
            }
            Policy::LlmFirst => match self.gateway.llm_schedule(&req) {
                Err(e) => {
                    log.push("schedule", "fallback", format!("model schedule failed ({e}); using deterministic scheduler"), json!({"code": e.code()}));
                    self.deterministic(&req, &mut log)?
                }
                Ok(drafted) => {
                    log.trace("schedule", &drafted.trace);
                    log.push("schedule", "audit", format!("{} violation(s)", drafted.violations.len()), json!(drafted.violations));
                    let mut current = drafted.schedule;
                    let mut violations = drafted.violations;
                    let mut attempts = 0;
                    while !violations.is_empty() && attempts < LLM_REPAIR_ATTEMPTS {
                        attempts += 1;
                        match self.gateway.llm_repair(&req, &current) {
                            Ok(d) => {
                                log.trace("llm_repair", &d.trace);
                                log.push("llm_repair", "audit", format!("attempt {attempts}: {} violation(s)", d.violations.len()), json!(d.violations));
                                current = d.schedule;
                                violations = d.violations;
                            }
                            Err(e) => {
                                log.push("llm_repair", "retry", format!("attempt {attempts} failed: {e}"), json!({"code": e.code()}));
                            }
                        }
                    }
                    if violations.is_empty() {
                        (current, Vec::new())
                    } else {
                        log.push("repair", "fallback", "deterministic conflict repair after model attempts", Value::Null);
                        (self.backstop(&req, current, &mut log)?, Vec::new())
                    }
                }
            },
        };

        // Shared-owner clashes cannot be published; take the later subtask
        // of each pair out of the plan until none remain.
        loop {
            let clash = detect_conflicts(&input.family, &schedule).into_iter().find(|c| {
                matches!(c.kind, ConflictKind::Overlap | ConflictKind::SimultaneousSameOwner)
                    && c.subtasks.len() == 2
                    && schedule.subtask(&c.subtasks[0]).zip(schedule.subtask(&c.subtasks[1])).is_some_and(|(a, b)| {
                        a.occupies_owners() && b.occupies_owners() && a.shares_owner(b)
                    })
            });
            let Some(clash) = clash else { break };
            let drop = clash.subtasks[1].clone();
            schedule.subtasks.retain(|s| s.subtask_name != drop);
            log.push("finalize", "unplaced", format!("`{drop}` removed: {}", clash.detail), Value::Null);
            unplaced.push(Unplaced { subtask_name: drop, reason: format!("unresolved conflict: {}", clash.detail) });
        }
        for (old, new) in renumber(&mut schedule.subtasks) {
            log.push("finalize", "renumbered", format!("`{old}` -> `{new}`"), Value::Null);
        }
        let unresolved = detect_conflicts(&input.family, &schedule);
        for c in &unresolved {
            log.push("finalize", "unresolved", format!("{:?}: {}", c.kind, c.detail), json!(c));
        }
        for (k, _) in std::mem::take(&mut schedule.extra) {
            log.push("finalize", "dropped_field", k, Value::Null);
        }
        for st in &mut schedule.subtasks {
            st.extra.clear();
        }

        let limit = self.gateway.settings.summary_limit;
        let summary = match input.policy {
            Policy::DeterministicOnly => {
                log.push("summarize", "strategy", "offline summary", Value::Null);
                offline_summary(&input.family, &schedule, limit)
            }
            _ => match self.gateway.summarize_collaboration(&input.family, &schedule) {
                Ok((text, trace)) => {
                    log.trace("summarize", &trace);
                    text
                }
                Err(e) => {
                    log.push("summarize", "fallback", format!("model summary failed ({e}); offline summary used"), Value::Null);
                    offline_summary(&input.family, &schedule, limit)
                }
            },
        };
        schedule.summary = Some(summary);

        let report = score_plan_with(&input.family, &input.tasks, &schedule, &self.detectors);
        log.push(
            "score",
            "report",
            format!("mean {:.2}", report.overall_mean),
            json!(report.scores.iter().map(|s| s.score).collect::<Vec<_>>()),
        );

        parse_schedule_json(&to_canonical_json(&schedule)).map_err(|e| PipelineError::Internal(e.to_string()))?;
        Ok(PlanOutput { schedule, report, provenance: log, unplaced, unresolved })
    }
}
