//! Rule-based plan scoring on five dimensions.
//!
//! Each detector flags one rule-expressible failure pattern. A dimension
//! scores 3 with no findings, 2 with only minor ones and 1 otherwise. The
//! scores approximate a human rubric; they do not replicate it.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::conflict::{ConflictKind, detect_conflicts};
use crate::model::{FamilyContext, LearningTask, PlanId, Subject, Subtask, TaskClass, WeeklySchedule, implies_instruction};
use crate::schedule_json::day_coverage_advisories;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    RoleTaskAlignment,
    TaskDecomposition,
    TaskCoverage,
    ContextAwareness,
    Actionability,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::RoleTaskAlignment,
        Dimension::TaskDecomposition,
        Dimension::TaskCoverage,
        Dimension::ContextAwareness,
        Dimension::Actionability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::RoleTaskAlignment => "role_task_alignment",
            Dimension::TaskDecomposition => "task_decomposition",
            Dimension::TaskCoverage => "task_coverage",
            Dimension::ContextAwareness => "context_awareness",
            Dimension::Actionability => "actionability",
        }
    }

    /// Column heading used in aggregate tables.
    pub fn title(self) -> &'static str {
        match self {
            Dimension::RoleTaskAlignment => "Role-Task Alignment",
            Dimension::TaskDecomposition => "Task Decomposition",
            Dimension::TaskCoverage => "Task Coverage",
            Dimension::ContextAwareness => "Context Awareness",
            Dimension::Actionability => "Actionability",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Minor,
    Major,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    ExpertiseMismatch,
    ForcedJointSession,
    TooFewSessions,
    SpacingViolation,
    ChildActionUnspecified,
    UnderDuration,
    StateTaskRepetition,
    OutsideWakingHours,
    TaskUncovered,
    MemberIdle,
    OwnerUnavailable,
    ScheduleConflict,
    DayCoverage,
}

impl RuleId {
    pub const ALL: [RuleId; 13] = [
        RuleId::ExpertiseMismatch,
        RuleId::ForcedJointSession,
        RuleId::TooFewSessions,
        RuleId::SpacingViolation,
        RuleId::ChildActionUnspecified,
        RuleId::UnderDuration,
        RuleId::StateTaskRepetition,
        RuleId::OutsideWakingHours,
        RuleId::TaskUncovered,
        RuleId::MemberIdle,
        RuleId::OwnerUnavailable,
        RuleId::ScheduleConflict,
        RuleId::DayCoverage,
    ];

    /// Every rule counts against exactly one dimension.
    pub fn dimension(self) -> Dimension {
        match self {
            RuleId::ExpertiseMismatch | RuleId::ForcedJointSession => Dimension::RoleTaskAlignment,
            RuleId::TooFewSessions | RuleId::SpacingViolation | RuleId::ChildActionUnspecified => {
                Dimension::TaskDecomposition
            }
            RuleId::TaskUncovered | RuleId::MemberIdle => Dimension::TaskCoverage,
            RuleId::OwnerUnavailable | RuleId::ScheduleConflict | RuleId::DayCoverage => Dimension::ContextAwareness,
            RuleId::UnderDuration | RuleId::StateTaskRepetition | RuleId::OutsideWakingHours => {
                Dimension::Actionability
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::ExpertiseMismatch => "expertise_mismatch",
            RuleId::ForcedJointSession => "forced_joint_session",
            RuleId::TooFewSessions => "too_few_sessions",
            RuleId::SpacingViolation => "spacing_violation",
            RuleId::ChildActionUnspecified => "child_action_unspecified",
            RuleId::UnderDuration => "under_duration",
            RuleId::StateTaskRepetition => "state_task_repetition",
            RuleId::OutsideWakingHours => "outside_waking_hours",
            RuleId::TaskUncovered => "task_uncovered",
            RuleId::MemberIdle => "member_idle",
            RuleId::OwnerUnavailable => "owner_unavailable",
            RuleId::ScheduleConflict => "schedule_conflict",
            RuleId::DayCoverage => "day_coverage",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub subtasks: Vec<String>,
    pub explanation: String,
}

impl Finding {
    fn new(rule_id: RuleId, severity: Severity, subtasks: Vec<String>, explanation: String) -> Self {
        Self { rule_id, severity, subtasks, explanation }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub dimension: Dimension,
    pub score: u8,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanQualityReport {
    pub plan_id: PlanId,
    pub scores: Vec<DimensionScore>,
    pub overall_mean: f64,
}

impl PlanQualityReport {
    pub fn score(&self, dimension: Dimension) -> u8 {
        self.scores.iter().find(|s| s.dimension == dimension).map_or(0, |s| s.score)
    }

    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.scores.iter().flat_map(|s| &s.findings)
    }

    pub fn has_rule(&self, rule: RuleId) -> bool {
        self.findings().any(|f| f.rule_id == rule)
    }
}

/// Tunable thresholds for the detectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Shortest feasible session per task class, in minutes.
    pub min_duration: BTreeMap<TaskClass, u16>,
    /// Verbs naming something the child does; matched as word prefixes.
    pub child_action_lexicon: Vec<String>,
    pub min_sessions: usize,
    pub max_gap_days: u8,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            min_duration: BTreeMap::from([
                (TaskClass::PracticeMemorization, 15),
                (TaskClass::HomeworkQa, 15),
                (TaskClass::PhysicalMusic, 20),
                (TaskClass::Reflective, 20),
                (TaskClass::HabitState, 10),
            ]),
            child_action_lexicon: DEFAULT_CHILD_ACTIONS.iter().map(|s| (*s).to_owned()).collect(),
            min_sessions: 3,
            max_gap_days: 2,
        }
    }
}

pub const DEFAULT_CHILD_ACTIONS: &[&str] = &["read", "recite", "sing", "repeat", "write", "solve", "record", "practice"];

impl DetectorConfig {
    /// Parses a lexicon file: one verb per line, `#` comments allowed.
    pub fn with_lexicon_text(mut self, text: &str) -> Self {
        self.child_action_lexicon = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect();
        self
    }
}

fn class_lookup<'t>(tasks: &'t [LearningTask]) -> impl Fn(&Subtask) -> TaskClass + 't {
    move |st: &Subtask| {
        tasks.iter().find(|t| t.task_name == st.parent_task).map_or_else(
            || TaskClass::infer(&st.parent_task, &st.description, Subject::from_free_text(&st.parent_task)),
            |t| t.task_class,
        )
    }
}

fn subject_of(tasks: &[LearningTask], st: &Subtask) -> Option<Subject> {
    tasks.iter().find(|t| t.task_name == st.parent_task).map(|t| t.subject_tag)
}

/// Subject mismatch: nobody among the owners carries the subject tag while
/// someone else in the family does. Role mismatch: an owner described as
/// monitoring-only is asked to instruct. One finding per subtask.
pub fn detect_expertise_mismatch(family: &FamilyContext, tasks: &[LearningTask], schedule: &WeeklySchedule) -> Vec<Finding> {
    let mut out = Vec::new();
    for st in &schedule.subtasks {
        let owners: Vec<_> = st.owners.iter().filter_map(|o| family.caregiver(o.as_str())).collect();
        let mut reasons = Vec::new();
        if let Some(subject) = subject_of(tasks, st).filter(|s| *s != Subject::Other) {
            let owner_has = owners.iter().any(|c| c.has_expertise(subject));
            let better: Vec<&str> = family
                .caregivers
                .iter()
                .filter(|c| c.has_expertise(subject) && !st.is_owned_by(c.caregiver_id.as_str()))
                .map(|c| c.caregiver_id.as_str())
                .collect();
            if !owner_has && !better.is_empty() {
                reasons.push(format!("{subject} is carried by {} but not by the owners", better.join(", ")));
            }
        }
        if implies_instruction(&st.tutoring_method) {
            for c in owners.iter().filter(|c| c.is_monitoring_only()) {
                reasons.push(format!("{} is monitoring-only yet asked to {}", c.caregiver_id.as_str(), st.tutoring_method));
            }
        }
        if !reasons.is_empty() {
            out.push(Finding::new(
                RuleId::ExpertiseMismatch,
                Severity::Major,
                vec![st.subtask_name.clone()],
                reasons.join("; "),
            ));
        }
    }
    out
}

/// Joint sessions (more than one owner) and pairs where one description
/// names another subtask owned by someone else within the same hour.
pub fn detect_unnecessary_collaboration(family: &FamilyContext, schedule: &WeeklySchedule) -> Vec<Finding> {
    let severity = if family.independence_required { Severity::Major } else { Severity::Minor };
    let mut out = Vec::new();
    for st in schedule.subtasks.iter().filter(|s| s.owners.len() > 1) {
        let owners: Vec<&str> = st.owners.iter().map(|o| o.as_str()).collect();
        out.push(Finding::new(
            RuleId::ForcedJointSession,
            severity,
            vec![st.subtask_name.clone()],
            format!("joint session of {}", owners.join(" and ")),
        ));
    }
    for a in &schedule.subtasks {
        for b in &schedule.subtasks {
            if a.subtask_name == b.subtask_name || !mentions(&b.description, &a.subtask_name) {
                continue;
            }
            let (Some(sa), Some(sb)) = (a.slot, b.slot) else { continue };
            let distinct = a.owners.iter().any(|o| !b.owners.contains(o)) || b.owners.iter().any(|o| !a.owners.contains(o));
            if distinct && sa.day() == sb.day() && sa.absolute_start().abs_diff(sb.absolute_start()) < 60 {
                out.push(Finding::new(
                    RuleId::ForcedJointSession,
                    severity,
                    vec![a.subtask_name.clone(), b.subtask_name.clone()],
                    format!("{} depends on {} run by a different caregiver within the hour", b.subtask_name, a.subtask_name),
                ));
            }
        }
    }
    out
}

fn mentions(text: &str, name: &str) -> bool {
    text.match_indices(name).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + name.len()..].chars().next();
        let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
        !word(before) && !word(after)
    })
}

/// Memorization needs repeated, closely spaced sessions. Sessions are the
/// distinct days holding a subtask of the task.
pub fn detect_trajectory_gaps(tasks: &[LearningTask], schedule: &WeeklySchedule, config: &DetectorConfig) -> Vec<Finding> {
    let class_of = class_lookup(tasks);
    let mut days: BTreeMap<&str, (BTreeSet<u8>, Vec<String>)> = BTreeMap::new();
    for st in schedule.subtasks.iter().filter(|s| class_of(s) == TaskClass::PracticeMemorization) {
        let entry = days.entry(st.parent_task.as_str()).or_default();
        entry.1.push(st.subtask_name.clone());
        if let Some(slot) = st.slot {
            entry.0.insert(slot.day().get());
        }
    }
    let mut out = Vec::new();
    for (task, (days, names)) in days {
        let ordered: Vec<u8> = days.into_iter().collect();
        if let Some(gap) = ordered.windows(2).map(|w| w[1] - w[0]).max().filter(|g| *g > config.max_gap_days) {
            out.push(Finding::new(
                RuleId::SpacingViolation,
                Severity::Major,
                names.clone(),
                format!("{task} has sessions {gap} days apart"),
            ));
        }
        if ordered.len() < config.min_sessions {
            out.push(Finding::new(
                RuleId::TooFewSessions,
                Severity::Major,
                names,
                format!("{task} is practised on {} day(s)", ordered.len()),
            ));
        }
    }
    out
}

/// Too-short sessions, consecutive repeats of a state task, and slots
/// reaching into the night.
pub fn detect_infeasibility(tasks: &[LearningTask], schedule: &WeeklySchedule, config: &DetectorConfig) -> Vec<Finding> {
    let class_of = class_lookup(tasks);
    let mut out = Vec::new();
    for st in &schedule.subtasks {
        let Some(slot) = st.slot else { continue };
        let class = class_of(st);
        if let Some(&min) = config.min_duration.get(&class)
            && slot.duration_minutes() < min
        {
            out.push(Finding::new(
                RuleId::UnderDuration,
                Severity::Major,
                vec![st.subtask_name.clone()],
                format!("{} minutes is below the {min}-minute minimum for {class}", slot.duration_minutes()),
            ));
        }
        if slot.intersects_night() {
            out.push(Finding::new(
                RuleId::OutsideWakingHours,
                Severity::Major,
                vec![st.subtask_name.clone()],
                format!("{slot} reaches into 22:00-06:00"),
            ));
        }
    }
    let habits: Vec<&Subtask> = schedule.subtasks.iter().filter(|s| class_of(s) == TaskClass::HabitState).collect();
    for (i, a) in habits.iter().enumerate() {
        for b in &habits[i + 1..] {
            let (Some(sa), Some(sb)) = (a.slot, b.slot) else { continue };
            let touching = sa.day() == sb.day() && sa.start() <= sb.end() && sb.start() <= sa.end();
            if a.parent_task == b.parent_task && touching {
                out.push(Finding::new(
                    RuleId::StateTaskRepetition,
                    Severity::Major,
                    vec![a.subtask_name.clone(), b.subtask_name.clone()],
                    format!("{} repeated back to back on day {}", a.parent_task, sa.day()),
                ));
            }
        }
    }
    out
}

pub fn detect_coverage_gaps(family: &FamilyContext, tasks: &[LearningTask], schedule: &WeeklySchedule) -> Vec<Finding> {
    let mut out = Vec::new();
    for task in tasks {
        if !schedule.subtasks.iter().any(|s| s.parent_task == task.task_name) {
            out.push(Finding::new(
                RuleId::TaskUncovered,
                Severity::Major,
                Vec::new(),
                format!("{} has no subtasks", task.task_name),
            ));
        }
    }
    for c in &family.caregivers {
        if !schedule.subtasks.iter().any(|s| s.is_owned_by(c.caregiver_id.as_str())) {
            out.push(Finding::new(
                RuleId::MemberIdle,
                Severity::Minor,
                Vec::new(),
                format!("{} owns no subtask", c.caregiver_id.as_str()),
            ));
        }
    }
    out
}

/// True when some word of `text` starts with a lexicon stem. A trailing
/// `e` is dropped from the stem so "practice" also matches "practicing".
pub fn names_child_action(text: &str, lexicon: &[String]) -> bool {
    let lower = text.to_lowercase();
    let stems: Vec<&str> = lexicon
        .iter()
        .map(|v| v.strip_suffix('e').filter(|s| s.len() >= 3).unwrap_or(v))
        .collect();
    lower
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .any(|w| stems.iter().any(|s| w.starts_with(s)))
}

pub fn detect_child_role_gap(schedule: &WeeklySchedule, config: &DetectorConfig) -> Vec<Finding> {
    schedule
        .subtasks
        .iter()
        .filter(|s| s.child_participates && !names_child_action(&s.description, &config.child_action_lexicon))
        .map(|s| {
            Finding::new(
                RuleId::ChildActionUnspecified,
                Severity::Minor,
                vec![s.subtask_name.clone()],
                "the child takes part but no child action is named".to_owned(),
            )
        })
        .collect()
}

pub fn detect_context_issues(family: &FamilyContext, schedule: &WeeklySchedule) -> Vec<Finding> {
    let mut out: Vec<Finding> = detect_conflicts(family, schedule)
        .into_iter()
        .map(|c| {
            let rule = match c.kind {
                ConflictKind::OwnerUnavailable => RuleId::OwnerUnavailable,
                ConflictKind::Overlap | ConflictKind::SimultaneousSameOwner => RuleId::ScheduleConflict,
            };
            Finding::new(rule, Severity::Major, c.subtasks, c.detail)
        })
        .collect();
    out.extend(
        day_coverage_advisories(schedule)
            .into_iter()
            .map(|a| Finding::new(RuleId::DayCoverage, Severity::Minor, a.subtasks, a.message)),
    );
    out
}

pub fn score_findings(findings: &[Finding]) -> u8 {
    match findings.iter().map(|f| f.severity).max() {
        None => 3,
        Some(Severity::Minor) => 2,
        Some(Severity::Major) => 1,
    }
}

/// Builds a report from findings, grouping each under its rule's dimension.
pub fn report_from_findings(plan_id: &PlanId, findings: Vec<Finding>) -> PlanQualityReport {
    let mut grouped: BTreeMap<Dimension, Vec<Finding>> = Dimension::ALL.iter().map(|d| (*d, Vec::new())).collect();
    for f in findings {
        grouped.get_mut(&f.rule_id.dimension()).expect("every dimension present").push(f);
    }
    let scores: Vec<DimensionScore> = Dimension::ALL
        .iter()
        .map(|d| {
            let mut findings = grouped.remove(d).unwrap_or_default();
            findings.sort();
            DimensionScore { dimension: *d, score: score_findings(&findings), findings }
        })
        .collect();
    let total: u32 = scores.iter().map(|s| u32::from(s.score)).sum();
    PlanQualityReport { plan_id: plan_id.clone(), scores, overall_mean: f64::from(total) / 5.0 }
}

pub fn score_plan(family: &FamilyContext, tasks: &[LearningTask], schedule: &WeeklySchedule) -> PlanQualityReport {
    score_plan_with(family, tasks, schedule, &DetectorConfig::default())
}

pub fn score_plan_with(
    family: &FamilyContext,
    tasks: &[LearningTask],
    schedule: &WeeklySchedule,
    config: &DetectorConfig,
) -> PlanQualityReport {
    let mut findings = detect_expertise_mismatch(family, tasks, schedule);
    findings.extend(detect_unnecessary_collaboration(family, schedule));
    findings.extend(detect_trajectory_gaps(tasks, schedule, config));
    findings.extend(detect_infeasibility(tasks, schedule, config));
    findings.extend(detect_coverage_gaps(family, tasks, schedule));
    findings.extend(detect_child_role_gap(schedule, config));
    findings.extend(detect_context_issues(family, schedule));
    report_from_findings(&schedule.plan_id, findings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot aggregate zero reports")]
pub struct EmptyAggregate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionAggregate {
    pub dimension: Dimension,
    /// Mean score in hundredths, rounded half up.
    pub mean_centi: u32,
    pub count_of_3: usize,
    pub plans: usize,
}

impl DimensionAggregate {
    pub fn mean(&self) -> f64 {
        f64::from(self.mean_centi) / 100.0
    }

    pub fn mean_text(&self) -> String {
        format!("{}.{:02}", self.mean_centi / 100, self.mean_centi % 100)
    }
}

impl Serialize for DimensionAggregate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("DimensionAggregate", 4)?;
        s.serialize_field("dimension", &self.dimension)?;
        s.serialize_field("mean", &self.mean())?;
        s.serialize_field("count_of_3", &self.count_of_3)?;
        s.serialize_field("plans", &self.plans)?;
        s.end()
    }
}

/// Rounds `sum / n` to two decimals, halves away from zero.
pub fn mean_centi(sum: u64, n: u64) -> u32 {
    ((sum * 200 + n) / (2 * n)) as u32
}

pub fn aggregate_reports(reports: &[PlanQualityReport]) -> Result<Vec<DimensionAggregate>, EmptyAggregate> {
    if reports.is_empty() {
        return Err(EmptyAggregate);
    }
    let n = reports.len();
    Ok(Dimension::ALL
        .iter()
        .map(|d| {
            let scores: Vec<u8> = reports.iter().map(|r| r.score(*d)).collect();
            let sum: u64 = scores.iter().map(|s| u64::from(*s)).sum();
            DimensionAggregate {
                dimension: *d,
                mean_centi: mean_centi(sum, n as u64),
                count_of_3: scores.iter().filter(|s| **s == 3).count(),
                plans: n,
            }
        })
        .collect())
}

/// Markdown table with one column per dimension and rows `Avg.` and
/// `Best (#)`.
pub fn render_aggregate_table(aggregates: &[DimensionAggregate]) -> String {
    let mut out = String::from("| Metric |");
    for a in aggregates {
        out.push_str(&format!(" {} |", a.dimension.title()));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(aggregates.len()));
    out.push_str("\n| Avg. |");
    for a in aggregates {
        out.push_str(&format!(" {} |", a.mean_text()));
    }
    out.push_str("\n| Best (#) |");
    for a in aggregates {
        out.push_str(&format!(" {} |", a.count_of_3.to_string()));
    }
    out.push('\n');
    out
}
