//! Append-only family event log, state replay, and engagement metrics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{
    CaregiverId, FamilyId, HandoverEntry, ModelError, PlanId, Subtask, SubtaskNote, SubtaskStatus, Timestamp, WeeklySchedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TutoringMode {
    Dialogue,
    AnswerCheck,
    TransferPractice,
    ExplainSupport,
}

impl TutoringMode {
    pub const ALL: [TutoringMode; 4] =
        [TutoringMode::Dialogue, TutoringMode::AnswerCheck, TutoringMode::TransferPractice, TutoringMode::ExplainSupport];

    pub fn as_str(self) -> &'static str {
        match self {
            TutoringMode::Dialogue => "dialogue",
            TutoringMode::AnswerCheck => "answer_check",
            TutoringMode::TransferPractice => "transfer_practice",
            TutoringMode::ExplainSupport => "explain_support",
        }
    }

    pub fn parse(text: &str) -> Option<TutoringMode> {
        Self::ALL.into_iter().find(|m| m.as_str() == text)
    }
}

impl core::fmt::Display for TutoringMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    PlanGenerated { plan_id: PlanId, version: u32, schedule: WeeklySchedule },
    SubtaskStatusChanged { plan_id: PlanId, subtask_name: String, from: SubtaskStatus, to: SubtaskStatus },
    Handover { plan_id: PlanId, subtask_name: String, from: CaregiverId, to: CaregiverId },
    NoteAdded { plan_id: PlanId, subtask_name: String, text: String },
    TutoringUsed { mode: TutoringMode, plan_id: Option<PlanId>, subtask_name: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: u64,
    pub family_id: FamilyId,
    pub actor: CaregiverId,
    #[serde(flatten)]
    pub body: EventBody,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("event {0} refers to unknown plan `{1}`")]
    UnknownPlan(u64, String),
    #[error("event {0} refers to unknown subtask `{1}`")]
    UnknownSubtask(u64, String),
    #[error("event {event}: {source}")]
    Model { event: u64, source: ModelError },
    #[error("event {0}: `{1}` is not an owner")]
    NotOwner(u64, String),
    #[error("event {0} breaks timestamp order")]
    OutOfOrder(u64),
}

/// Latest version of every plan, reconstructed from the log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReplayState {
    pub plans: BTreeMap<PlanId, WeeklySchedule>,
    pub versions: BTreeMap<PlanId, u32>,
}

impl ReplayState {
    pub fn apply(&mut self, event: &EventRecord) -> Result<(), ReplayError> {
        let id = event.event_id;
        match &event.body {
            EventBody::PlanGenerated { plan_id, version, schedule } => {
                self.plans.insert(plan_id.clone(), schedule.clone());
                self.versions.insert(plan_id.clone(), *version);
            }
            EventBody::SubtaskStatusChanged { plan_id, subtask_name, to, .. } => {
                let st = subtask_in(&mut self.plans, id, plan_id, subtask_name)?;
                st.status = st.status.transition(*to).map_err(|source| ReplayError::Model { event: id, source })?;
            }
            EventBody::Handover { plan_id, subtask_name, from, to } => {
                let st = subtask_in(&mut self.plans, id, plan_id, subtask_name)?;
                let Some(pos) = st.owners.iter().position(|o| o == from) else {
                    return Err(ReplayError::NotOwner(id, from.as_str().into()));
                };
                st.owners.remove(pos);
                if !st.owners.contains(to) {
                    st.owners.push(to.clone());
                }
                st.handover_log.push(HandoverEntry { from: from.clone(), to: to.clone(), timestamp: event.timestamp });
            }
            EventBody::NoteAdded { plan_id, subtask_name, text } => {
                let st = subtask_in(&mut self.plans, id, plan_id, subtask_name)?;
                st.notes.push(SubtaskNote { author: event.actor.clone(), text: text.clone(), timestamp: event.timestamp });
            }
            EventBody::TutoringUsed { .. } => {}
        }
        Ok(())
    }
}

fn subtask_in<'p>(
    plans: &'p mut BTreeMap<PlanId, WeeklySchedule>,
    event: u64,
    plan_id: &PlanId,
    name: &str,
) -> Result<&'p mut Subtask, ReplayError> {
    let plan = plans.get_mut(plan_id).ok_or_else(|| ReplayError::UnknownPlan(event, plan_id.as_str().into()))?;
    plan.subtask_mut(name).ok_or_else(|| ReplayError::UnknownSubtask(event, name.into()))
}

/// Folds the log in order; timestamps must not decrease.
pub fn replay<'e>(events: impl IntoIterator<Item = &'e EventRecord>) -> Result<ReplayState, ReplayError> {
    let mut state = ReplayState::default();
    let mut last = None;
    for event in events {
        if last.is_some_and(|t| event.timestamp < t) {
            return Err(ReplayError::OutOfOrder(event.event_id));
        }
        last = Some(event.timestamp);
        state.apply(event)?;
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaregiverEngagement {
    pub tasks_completed: usize,
    pub subtasks_executed: usize,
    pub used_new_example: bool,
    pub used_answer_checking: bool,
    pub used_tutoring_guidance: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EngagementSummary {
    pub caregivers: BTreeMap<CaregiverId, CaregiverEngagement>,
    /// Parent tasks with every subtask done, per family.
    pub family_tasks_completed: BTreeMap<FamilyId, usize>,
}

/// Minimum, median and maximum; the median of an even count is the lower
/// middle value.
pub fn min_med_max(values: &[usize]) -> Option<(usize, usize, usize)> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    (n > 0).then(|| (sorted[0], sorted[(n - 1) / 2], sorted[n - 1]))
}

impl EngagementSummary {
    pub fn subtasks_executed_stats(&self) -> Option<(usize, usize, usize)> {
        min_med_max(&self.caregivers.values().map(|c| c.subtasks_executed).collect::<Vec<_>>())
    }

    pub fn family_tasks_stats(&self) -> Option<(usize, usize, usize)> {
        min_med_max(&self.family_tasks_completed.values().copied().collect::<Vec<_>>())
    }

    /// Share of caregivers who used each support feature, in percent.
    pub fn feature_coverage(&self) -> [f64; 3] {
        let n = self.caregivers.len().max(1) as f64;
        let share = |f: fn(&CaregiverEngagement) -> bool| {
            self.caregivers.values().filter(|c| f(c)).count() as f64 * 100.0 / n
        };
        [share(|c| c.used_new_example), share(|c| c.used_answer_checking), share(|c| c.used_tutoring_guidance)]
    }
}

/// Replays the log and counts, per caregiver, done subtasks they own and
/// parent tasks fully done where they own at least one subtask. Every
/// actor appears in the summary, even with all-zero counts.
pub fn compute_engagement(events: &[EventRecord]) -> Result<EngagementSummary, ReplayError> {
    let state = replay(events)?;
    let mut summary = EngagementSummary::default();
    for event in events {
        let entry = summary.caregivers.entry(event.actor.clone()).or_default();
        if let EventBody::TutoringUsed { mode, .. } = event.body {
            match mode {
                TutoringMode::TransferPractice => entry.used_new_example = true,
                TutoringMode::AnswerCheck => entry.used_answer_checking = true,
                TutoringMode::ExplainSupport | TutoringMode::Dialogue => entry.used_tutoring_guidance = true,
            }
        }
    }
    for plan in state.plans.values() {
        let mut tasks: BTreeMap<&str, (bool, BTreeSet<&CaregiverId>)> = BTreeMap::new();
        for st in &plan.subtasks {
            let done = st.status == SubtaskStatus::Done;
            let task = tasks.entry(st.parent_task.as_str()).or_insert((true, BTreeSet::new()));
            task.0 &= done;
            task.1.extend(st.owners.iter());
            for owner in &st.owners {
                let entry = summary.caregivers.entry(owner.clone()).or_default();
                if done {
                    entry.subtasks_executed += 1;
                }
            }
        }
        let completed = tasks.values().filter(|(done, _)| *done).count();
        *summary.family_tasks_completed.entry(plan.family_id.clone()).or_default() += completed;
        for (_, owners) in tasks.values().filter(|(done, _)| *done) {
            for owner in owners {
                summary.caregivers.entry((*owner).clone()).or_default().tasks_completed += 1;
            }
        }
    }
    Ok(summary)
}
