//! Deterministic greedy list scheduling of decomposed subtasks.
//!
//! Subtasks are taken in topological order; among those whose predecessors
//! are all placed, the one with the fewest statically feasible
//! (owner, start) pairs goes first. Candidate starts lie on a 30-minute grid
//! inside waking hours. Each subtask gets a target day that spreads a task's
//! sessions over the week; the scan starts on that day, runs through Day 7
//! and wraps around. The first feasible start in scan order wins, then the
//! least-loaded owner, then the smallest caregiver id.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::model::{
    CaregiverId, CaregiverProfile, FamilyContext, LearningTask, ModelError, PlanId, Subject, Subtask, TaskClass,
    WeeklySchedule, implies_instruction,
};
use crate::ordering::{Dependency, Ordering, OrderingError};
use crate::time::{DAYTIME_END, DAYTIME_START, DayIndex, Daypart, TimeOfDay, TimeSlot};

pub const GRID_MINUTES: u16 = 30;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulingError {
    #[error("infeasible ordering: {0}")]
    InfeasibleOrdering(#[from] OrderingError),
    #[error("invalid family: {0}")]
    InvalidFamily(#[from] ModelError),
    #[error("duration hint for `{0}` must be positive")]
    NonPositiveDuration(String),
    #[error("duplicate subtask `{0}` in request")]
    DuplicateSubtask(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulingRequest {
    pub plan_id: PlanId,
    pub family: FamilyContext,
    /// Parent tasks; supply subject tags and task classes.
    pub tasks: Vec<LearningTask>,
    pub subtasks: Vec<Subtask>,
    pub dependencies: Vec<Dependency>,
    pub duration_hints: BTreeMap<String, u16>,
}

impl SchedulingRequest {
    pub fn new(plan_id: &str, family: FamilyContext, tasks: Vec<LearningTask>, subtasks: Vec<Subtask>) -> Self {
        Self {
            plan_id: plan_id.into(),
            family,
            tasks,
            subtasks,
            dependencies: Vec::new(),
            duration_hints: BTreeMap::new(),
        }
    }

    pub fn ordering(&self) -> Result<Ordering, OrderingError> {
        Ordering::new(&self.subtasks, &self.dependencies)
    }

    pub fn task(&self, name: &str) -> Option<&LearningTask> {
        self.tasks.iter().find(|t| t.task_name == name)
    }

    pub fn subject_of(&self, subtask: &Subtask) -> Subject {
        self.task(&subtask.parent_task).map(|t| t.subject_tag).unwrap_or(Subject::Other)
    }

    pub fn class_of(&self, subtask: &Subtask) -> TaskClass {
        self.task(&subtask.parent_task)
            .map(|t| t.task_class)
            .unwrap_or_else(|| TaskClass::infer(&subtask.parent_task, &subtask.description, Subject::Other))
    }

    pub fn duration_of(&self, subtask: &Subtask) -> u16 {
        self.duration_hints
            .get(&subtask.subtask_name)
            .copied()
            .unwrap_or_else(|| default_duration(self.class_of(subtask)))
    }

    /// Upper bound on subtasks per daypart: ceil(n/3) + 1 over the request.
    pub fn daypart_cap(&self) -> usize {
        self.subtasks.len().div_ceil(3) + 1
    }
}

/// Minutes used when no hint is given.
pub fn default_duration(class: TaskClass) -> u16 {
    match class {
        TaskClass::HomeworkQa => 30,
        TaskClass::PracticeMemorization => 20,
        TaskClass::PhysicalMusic => 40,
        TaskClass::HabitState | TaskClass::Reflective => 30,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unplaced {
    pub subtask_name: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Only one owner could take the earliest start.
    None,
    EarliestSlot,
    LowestLoad,
    CaregiverId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub subtask_name: String,
    pub target_day: u8,
    /// Feasible (owner, start) pairs at decision time.
    pub candidates_considered: usize,
    pub owner: Option<CaregiverId>,
    pub slot: Option<String>,
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulingOutcome {
    /// Placed subtasks only, in request order.
    pub schedule: WeeklySchedule,
    pub unplaced: Vec<Unplaced>,
    pub objective_trace: Vec<Decision>,
}

/// Owners eligible for a subtask: caregivers carrying the subject tag when
/// any exist; for instructional methods, monitoring-only caregivers are
/// dropped when that leaves someone.
pub fn eligible_owners<'f>(family: &'f FamilyContext, subject: Subject, tutoring_method: &str) -> Vec<&'f CaregiverProfile> {
    let carriers: Vec<&CaregiverProfile> = family.caregivers.iter().filter(|c| c.has_expertise(subject)).collect();
    let pool = if carriers.is_empty() { family.caregivers.iter().collect() } else { carriers };
    if implies_instruction(tutoring_method) {
        let teaching: Vec<&CaregiverProfile> = pool.iter().copied().filter(|c| !c.is_monitoring_only()).collect();
        if !teaching.is_empty() {
            return teaching;
        }
    }
    pool
}

/// Starts on the grid whose slot of `minutes` fits inside 06:00-22:00.
fn grid_starts(minutes: u16) -> impl Iterator<Item = TimeOfDay> + Clone {
    let first = Daypart::MORNING_START.minutes();
    let last = Daypart::EVENING_END.minutes().saturating_sub(minutes);
    (first..=last)
        .step_by(usize::from(GRID_MINUTES))
        .filter(move |_| minutes > 0)
        .map(|m| TimeOfDay::new(u32::from(m)).expect("grid inside the day"))
}

fn scan_days(target: u8) -> impl Iterator<Item = DayIndex> {
    (target..=7).chain(1..target).map(|d| DayIndex::new(i64::from(d)).expect("1..=7"))
}

/// Day a subtask should aim for so that a task's `m` sessions spread over
/// the week; tasks are staggered by their index to cover every day.
pub fn target_day(ordinal: u32, sessions: u32, task_index: usize) -> u8 {
    let m = sessions.max(1);
    let k = ordinal.clamp(1, m);
    let spread = |i: u32| (i * 7 / m) as u8;
    let span = spread(m - 1);
    let slack = 6 - span.min(6);
    let offset = (task_index % (usize::from(slack) + 1)) as u8;
    1 + spread(k - 1) + offset
}

struct Placement<'r> {
    req: &'r SchedulingRequest,
    ordering: &'r Ordering,
    availability: BTreeMap<&'r str, Vec<TimeSlot>>,
    placed: BTreeMap<&'r str, (CaregiverId, TimeSlot)>,
    owner_busy: BTreeMap<CaregiverId, Vec<TimeSlot>>,
    child_busy: Vec<TimeSlot>,
    load: BTreeMap<CaregiverId, usize>,
    daypart_count: BTreeMap<Daypart, usize>,
    cap: usize,
}

impl<'r> Placement<'r> {
    fn feasible(&self, subtask: &Subtask, owner: &CaregiverProfile, slot: &TimeSlot) -> bool {
        if slot.intersects_night() {
            return false;
        }
        if subtask.child_independent {
            if slot.start() < DAYTIME_START || slot.end() > DAYTIME_END {
                return false;
            }
        } else {
            let avail = &self.availability[owner.caregiver_id.as_str()];
            if !avail.iter().any(|a| a.contains(slot)) {
                return false;
            }
            if let Some(busy) = self.owner_busy.get(&owner.caregiver_id) {
                if busy.iter().any(|b| b.overlaps(slot)) {
                    return false;
                }
            }
        }
        if subtask.occupies_child() && self.child_busy.iter().any(|b| b.overlaps(slot)) {
            return false;
        }
        if self.daypart_count.get(&slot.daypart()).copied().unwrap_or(0) >= self.cap {
            return false;
        }
        let name = subtask.subtask_name.as_str();
        for pred in self.ordering.predecessors(name) {
            if let Some((_, p)) = self.placed.get(pred) {
                if p.absolute_end() > slot.absolute_start() {
                    return false;
                }
            }
        }
        for succ in self.ordering.successors(name) {
            if let Some((_, s)) = self.placed.get(succ) {
                if slot.absolute_end() > s.absolute_start() {
                    return false;
                }
            }
        }
        if self.req.class_of(subtask) == TaskClass::HabitState {
            // state tasks cannot be repeated back to back
            let adjacent = self.req.subtasks.iter().any(|other| {
                other.parent_task == subtask.parent_task
                    && other.subtask_name != subtask.subtask_name
                    && self.placed.get(other.subtask_name.as_str()).is_some_and(|(_, o)| {
                        o.day() == slot.day() && o.start() <= slot.end() && slot.start() <= o.end()
                    })
            });
            if adjacent {
                return false;
            }
        }
        true
    }

    fn commit(&mut self, subtask: &'r Subtask, owner: &CaregiverId, slot: TimeSlot) {
        self.placed.insert(&subtask.subtask_name, (owner.clone(), slot));
        if subtask.occupies_owners() {
            self.owner_busy.entry(owner.clone()).or_default().push(slot);
        }
        if subtask.occupies_child() {
            self.child_busy.push(slot);
        }
        *self.load.entry(owner.clone()).or_default() += 1;
        *self.daypart_count.entry(slot.daypart()).or_default() += 1;
    }
}

/// Static count of (owner, start) pairs that fit availability alone.
fn static_feasibility(req: &SchedulingRequest, subtask: &Subtask, availability: &BTreeMap<&str, Vec<TimeSlot>>) -> usize {
    let minutes = req.duration_of(subtask);
    let owners = eligible_owners(&req.family, req.subject_of(subtask), &subtask.tutoring_method);
    let mut count = 0;
    for owner in owners {
        for day in DayIndex::all() {
            for start in grid_starts(minutes) {
                let Some(slot) = TimeSlot::starting_at(day, start, minutes) else { continue };
                let fits = if subtask.child_independent {
                    slot.start() >= DAYTIME_START && slot.end() <= DAYTIME_END
                } else {
                    availability[owner.caregiver_id.as_str()].iter().any(|a| a.contains(&slot))
                };
                count += usize::from(fits);
            }
        }
    }
    count
}

pub fn assign_and_schedule(req: &SchedulingRequest) -> Result<SchedulingOutcome, SchedulingError> {
    req.family.validate()?;
    let mut names = BTreeSet::new();
    for st in &req.subtasks {
        if !names.insert(st.subtask_name.as_str()) {
            return Err(SchedulingError::DuplicateSubtask(st.subtask_name.clone()));
        }
    }
    if let Some((name, _)) = req.duration_hints.iter().find(|(_, m)| **m == 0) {
        return Err(SchedulingError::NonPositiveDuration(name.clone()));
    }
    let ordering = req.ordering()?;

    let availability: BTreeMap<&str, Vec<TimeSlot>> = req
        .family
        .caregivers
        .iter()
        .map(|c| (c.caregiver_id.as_str(), c.available_slots()))
        .collect();
    let by_name: BTreeMap<&str, &Subtask> = req.subtasks.iter().map(|s| (s.subtask_name.as_str(), s)).collect();
    let feasibility: BTreeMap<&str, usize> = req
        .subtasks
        .iter()
        .map(|s| (s.subtask_name.as_str(), static_feasibility(req, s, &availability)))
        .collect();
    let order = ordering.topological_order(|n| feasibility[n])?;

    let mut task_index: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &req.tasks {
        let next = task_index.len();
        task_index.entry(t.task_name.as_str()).or_insert(next);
    }
    for st in &req.subtasks {
        let next = task_index.len();
        task_index.entry(st.parent_task.as_str()).or_insert(next);
    }
    let mut sessions: BTreeMap<&str, u32> = BTreeMap::new();
    for st in &req.subtasks {
        *sessions.entry(st.parent_task.as_str()).or_default() += 1;
    }

    let mut state = Placement {
        req,
        ordering: &ordering,
        availability,
        placed: BTreeMap::new(),
        owner_busy: BTreeMap::new(),
        child_busy: Vec::new(),
        load: BTreeMap::new(),
        daypart_count: BTreeMap::new(),
        cap: req.daypart_cap(),
    };
    let mut unplaced = Vec::new();
    let mut trace = Vec::with_capacity(order.len());

    for name in &order {
        let subtask = by_name[name.as_str()];
        let minutes = req.duration_of(subtask);
        let owners = eligible_owners(&req.family, req.subject_of(subtask), &subtask.tutoring_method);
        let ordinal = subtask.ordinal().unwrap_or(1);
        let target = target_day(ordinal, sessions[subtask.parent_task.as_str()], task_index[subtask.parent_task.as_str()]);

        // (scan position, load, id) per owner: earliest feasible start each
        let mut considered = 0usize;
        let mut best: Vec<(usize, usize, &CaregiverId, TimeSlot)> = Vec::new();
        for owner in &owners {
            let mut first: Option<(usize, TimeSlot)> = None;
            let candidates = scan_days(target)
                .flat_map(|day| grid_starts(minutes).map(move |start| (day, start)))
                .enumerate();
            for (position, (day, start)) in candidates {
                let Some(slot) = TimeSlot::starting_at(day, start, minutes) else { continue };
                if state.feasible(subtask, owner, &slot) {
                    considered += 1;
                    if first.is_none() {
                        first = Some((position, slot));
                    }
                }
            }
            if let Some((position, slot)) = first {
                let load = state.load.get(&owner.caregiver_id).copied().unwrap_or(0);
                best.push((position, load, &owner.caregiver_id, slot));
            }
        }
        best.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        let tie_break = match best.as_slice() {
            [] | [_] => TieBreak::None,
            [a, b, ..] if a.0 != b.0 => TieBreak::EarliestSlot,
            [a, b, ..] if a.1 != b.1 => TieBreak::LowestLoad,
            _ => TieBreak::CaregiverId,
        };
        match best.first() {
            Some(&(_, _, owner, slot)) => {
                let owner = owner.clone();
                trace.push(Decision {
                    subtask_name: name.clone(),
                    target_day: target,
                    candidates_considered: considered,
                    owner: Some(owner.clone()),
                    slot: Some(format!("{slot}")),
                    tie_break,
                });
                state.commit(subtask, &owner, slot);
            }
            None => {
                let reason = if owners.iter().all(|o| state.availability[o.caregiver_id.as_str()].is_empty())
                    && !subtask.child_independent
                {
                    "no eligible owner has any availability".to_owned()
                } else {
                    format!("no feasible {minutes}-minute slot for eligible owners")
                };
                trace.push(Decision {
                    subtask_name: name.clone(),
                    target_day: target,
                    candidates_considered: 0,
                    owner: None,
                    slot: None,
                    tie_break,
                });
                unplaced.push(Unplaced { subtask_name: name.clone(), reason });
            }
        }
    }

    let subtasks = req
        .subtasks
        .iter()
        .filter_map(|st| {
            state.placed.get(st.subtask_name.as_str()).map(|(owner, slot)| {
                let mut placed = st.clone();
                placed.owners = alloc::vec![owner.clone()];
                placed.slot = Some(*slot);
                placed
            })
        })
        .collect();
    let schedule = WeeklySchedule {
        plan_id: req.plan_id.clone(),
        family_id: req.family.family_id.clone(),
        summary: None,
        subtasks,
        extra: serde_json::Map::new(),
    };
    Ok(SchedulingOutcome { schedule, unplaced, objective_trace: trace })
}

/// A broken hard constraint found by [`verify_schedule`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    pub rule_id: &'static str,
    pub subtasks: Vec<String>,
    pub detail: String,
}

/// Audits a schedule (ours or a model's) against the request's hard
/// constraints. Empty iff fully feasible.
pub fn verify_schedule(req: &SchedulingRequest, schedule: &WeeklySchedule) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule_id, subtasks: &[&str], detail: String| {
        out.push(Violation { rule_id, subtasks: subtasks.iter().map(|s| (*s).to_owned()).collect(), detail });
    };
    let availability: BTreeMap<&str, Vec<TimeSlot>> = req
        .family
        .caregivers
        .iter()
        .map(|c| (c.caregiver_id.as_str(), c.available_slots()))
        .collect();
    let cap = req.daypart_cap();
    let mut per_daypart: BTreeMap<Daypart, Vec<&str>> = BTreeMap::new();

    for st in &schedule.subtasks {
        let name = st.subtask_name.as_str();
        let Some(slot) = st.slot else {
            push("slot_missing", &[name], "subtask has no slot".into());
            continue;
        };
        if req.subtasks.iter().all(|r| r.subtask_name != st.subtask_name) {
            push("unknown_subtask", &[name], "subtask is not part of the request".into());
        }
        for owner in &st.owners {
            match availability.get(owner.as_str()) {
                None => push("owner_unknown", &[name], format!("`{owner}` is not a caregiver of this family")),
                Some(avail) if st.occupies_owners() && !avail.iter().any(|a| a.contains(&slot)) => push(
                    "owner_unavailable",
                    &[name],
                    format!("`{owner}` is not available {slot}"),
                ),
                Some(_) => {}
            }
        }
        if st.owners.is_empty() {
            push("owners_nonempty", &[name], "no responsible adult".into());
        }
        if st.child_independent && (slot.start() < DAYTIME_START || slot.end() > DAYTIME_END) {
            push("outside_daytime", &[name], format!("independent work at {slot} is outside 08:00-18:00"));
        }
        if slot.intersects_night() {
            push("outside_waking_hours", &[name], format!("{slot} reaches into 22:00-06:00"));
        }
        let subject = req.subject_of(st);
        let carriers_exist = req.family.caregivers.iter().any(|c| c.has_expertise(subject));
        let owner_carries = st
            .owners
            .iter()
            .any(|o| req.family.caregiver(o.as_str()).is_some_and(|c| c.has_expertise(subject)));
        if carriers_exist && !owner_carries {
            push(
                "expertise_not_preferred",
                &[name],
                format!("a caregiver tagged `{subject}` exists but does not own this subtask"),
            );
        }
        if req.family.independence_required && st.owners.len() > 1 {
            push("independence_violated", &[name], format!("{} owners on one subtask", st.owners.len()));
        }
        per_daypart.entry(slot.daypart()).or_default().push(name);
    }

    for (i, a) in schedule.subtasks.iter().enumerate() {
        for b in &schedule.subtasks[i + 1..] {
            let (Some(sa), Some(sb)) = (a.slot, b.slot) else { continue };
            if !sa.overlaps(&sb) {
                continue;
            }
            let pair = [a.subtask_name.as_str(), b.subtask_name.as_str()];
            if a.occupies_owners() && b.occupies_owners() && a.shares_owner(b) {
                push("owner_overlap", &pair, format!("{sa} and {sb} share an owner"));
            }
            if a.occupies_child() && b.occupies_child() {
                push("child_overlap", &pair, format!("child is needed for both at {sa} and {sb}"));
            }
        }
    }

    if let Ok(ordering) = Ordering::new(&req.subtasks, &req.dependencies) {
        for (before, after) in ordering.edges() {
            let (Some(a), Some(b)) = (schedule.subtask(before), schedule.subtask(after)) else { continue };
            let (Some(sa), Some(sb)) = (a.slot, b.slot) else { continue };
            if sa.absolute_end() > sb.absolute_start() {
                push("order_violated", &[before, after], format!("`{before}` ends {sa} after `{after}` starts {sb}"));
            }
        }
    }

    for (part, names) in per_daypart {
        if part != Daypart::Night && names.len() > cap {
            push(
                "daypart_imbalance",
                &names,
                format!("{} subtasks in {part:?}, limit {cap}", names.len()),
            );
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChildProfile, SubtaskStatus};
    use crate::time::{AvailabilityWindow, DayClass};
    use alloc::vec;

    pub(crate) fn caregiver(id: &str, tags: &[Subject], windows: &[(DayClass, u16, u16)]) -> CaregiverProfile {
        CaregiverProfile {
            caregiver_id: id.into(),
            role_label: id.into(),
            expertise_tags: tags.iter().copied().collect(),
            availability: windows
                .iter()
                .map(|(c, s, e)| AvailabilityWindow::new(*c, TimeOfDay::hm(*s, 0), TimeOfDay::hm(*e, 0)).unwrap())
                .collect(),
            notes: String::new(),
        }
    }

    fn family(caregivers: Vec<CaregiverProfile>) -> FamilyContext {
        FamilyContext {
            family_id: "fam".into(),
            caregivers,
            child: ChildProfile { child_id: "kid".into(), age: 9, grade_level: 3, characteristics: String::new() },
            independence_required: true,
        }
    }

    fn day1() -> DayClass {
        DayClass::Day(DayIndex::new(1).unwrap())
    }

    #[test]
    fn single_choice_takes_earliest_slot() {
        let fam = family(vec![caregiver("mom", &[], &[(day1(), 19, 21)]), caregiver("dad", &[], &[])]);
        let task = LearningTask::new("reading", "read a story", Subject::Chinese).unwrap();
        let mut req = SchedulingRequest::new("p", fam, vec![task], vec![Subtask::new("reading", 1, "read", &["mom"])]);
        req.duration_hints.insert("reading_1".into(), 30);
        let out = assign_and_schedule(&req).unwrap();
        assert!(out.unplaced.is_empty());
        let st = &out.schedule.subtasks[0];
        assert_eq!(st.owners, [CaregiverId::from("mom")]);
        let slot = st.slot.unwrap();
        assert_eq!((slot.day().get(), slot.start(), slot.end()), (1, TimeOfDay::hm(19, 0), TimeOfDay::hm(19, 30)));
        assert!(verify_schedule(&req, &out.schedule).is_empty());
    }

    #[test]
    fn english_goes_to_the_english_speaker() {
        let evenings = [(DayClass::Weekday, 15, 21), (DayClass::Weekend, 9, 17)];
        let fam = family(vec![
            caregiver("grandfather", &[], &evenings),
            caregiver("mother", &[Subject::English], &evenings),
        ]);
        let task = LearningTask::new("english_words", "learn 10 English words", Subject::English).unwrap();
        let subtasks = (1..=3).map(|k| Subtask::new("english_words", k, "child reads words", &["grandfather"])).collect();
        let req = SchedulingRequest::new("p", fam, vec![task], subtasks);
        let out = assign_and_schedule(&req).unwrap();
        assert_eq!(out.schedule.subtasks.len(), 3);
        assert!(out.schedule.subtasks.iter().all(|s| s.owners == [CaregiverId::from("mother")]));
        assert!(verify_schedule(&req, &out.schedule).is_empty());
    }

    #[test]
    fn sessions_spread_across_the_week_in_order() {
        let fam = family(vec![
            caregiver("a", &[], &[(DayClass::Weekday, 18, 21), (DayClass::Weekend, 9, 12)]),
            caregiver("b", &[], &[(DayClass::Weekday, 18, 21), (DayClass::Weekend, 9, 12)]),
        ]);
        let task = LearningTask::new("passage", "memorize an English passage", Subject::English).unwrap();
        let subtasks = (1..=4).map(|k| Subtask::new("passage", k, "child recites", &["a"])).collect();
        let req = SchedulingRequest::new("p", fam, vec![task], subtasks);
        let out = assign_and_schedule(&req).unwrap();
        let days: Vec<u8> = out.schedule.subtasks.iter().map(|s| s.slot.unwrap().day().get()).collect();
        assert_eq!(days, [1, 2, 4, 6]);
        assert!(verify_schedule(&req, &out.schedule).is_empty());
    }

    #[test]
    fn unplaceable_subtasks_are_reported_not_fatal() {
        let fam = family(vec![caregiver("mom", &[], &[(day1(), 19, 20)]), caregiver("dad", &[], &[])]);
        let task = LearningTask::new("chores", "homework review", Subject::Other).unwrap();
        let subtasks: Vec<Subtask> = (1..=3).map(|k| Subtask::new("chores", k, "review", &["mom"])).collect();
        let mut req = SchedulingRequest::new("p", fam, vec![task], subtasks);
        for k in 1..=3 {
            req.duration_hints.insert(format!("chores_{k}"), 60);
        }
        let out = assign_and_schedule(&req).unwrap();
        assert_eq!(out.schedule.subtasks.len(), 1);
        assert_eq!(out.unplaced.len(), 2);
        assert!(verify_schedule(&req, &out.schedule).is_empty());
    }

    #[test]
    fn independent_child_work_uses_daytime() {
        let fam = family(vec![caregiver("mom", &[], &[]), caregiver("dad", &[], &[])]);
        let task = LearningTask::new("drill", "math drill worksheet", Subject::Math).unwrap();
        let mut st = Subtask::new("drill", 1, "child completes the worksheet alone", &["mom"]);
        st.child_independent = true;
        let req = SchedulingRequest::new("p", fam, vec![task], vec![st]);
        let out = assign_and_schedule(&req).unwrap();
        let slot = out.schedule.subtasks[0].slot.unwrap();
        assert_eq!(slot.start(), DAYTIME_START);
        assert!(verify_schedule(&req, &out.schedule).is_empty());
    }

    #[test]
    fn cycles_fail_the_request() {
        let fam = family(vec![caregiver("mom", &[], &[(day1(), 19, 21)]), caregiver("dad", &[], &[])]);
        let subtasks = vec![Subtask::new("a", 1, "", &["mom"]), Subtask::new("a", 2, "", &["mom"])];
        let mut req = SchedulingRequest::new("p", fam, vec![], subtasks);
        req.dependencies.push(Dependency::new("a_2", "a_1"));
        assert!(matches!(assign_and_schedule(&req), Err(SchedulingError::InfeasibleOrdering(_))));
    }

    #[test]
    fn verify_flags_shifted_and_reordered_slots() {
        let avail = [(DayClass::Weekday, 19, 21)];
        let fam = family(vec![caregiver("mom", &[], &avail), caregiver("dad", &[], &avail)]);
        let task = LearningTask::new("reading", "read", Subject::Other).unwrap();
        let subtasks: Vec<Subtask> = (1..=2).map(|k| Subtask::new("reading", k, "read", &["mom"])).collect();
        let req = SchedulingRequest::new("p", fam, vec![task], subtasks);
        let out = assign_and_schedule(&req).unwrap();
        assert!(verify_schedule(&req, &out.schedule).is_empty());

        let mut shifted = out.schedule.clone();
        let s = shifted.subtasks[0].slot.unwrap();
        shifted.subtasks[0].slot = Some(TimeSlot::new(s.day(), TimeOfDay::hm(16, 0), TimeOfDay::hm(16, 30)).unwrap());
        let v = verify_schedule(&req, &shifted);
        assert_eq!(v.iter().map(|v| v.rule_id).collect::<Vec<_>>(), ["owner_unavailable"]);

        let mut swapped = out.schedule.clone();
        let (a, b) = (swapped.subtasks[0].slot, swapped.subtasks[1].slot);
        swapped.subtasks[0].slot = b;
        swapped.subtasks[1].slot = a;
        let v = verify_schedule(&req, &swapped);
        assert!(v.iter().any(|v| v.rule_id == "order_violated" && v.subtasks == ["reading_1", "reading_2"]));
        assert_eq!(swapped.subtasks[0].status, SubtaskStatus::Pending);
    }

    #[test]
    fn target_days_cover_the_week() {
        assert_eq!((1..=3).map(|k| target_day(k, 3, 0)).collect::<Vec<_>>(), [1, 3, 5]);
        assert_eq!((1..=3).map(|k| target_day(k, 3, 1)).collect::<Vec<_>>(), [2, 4, 6]);
        assert_eq!((1..=3).map(|k| target_day(k, 3, 2)).collect::<Vec<_>>(), [3, 5, 7]);
        assert_eq!((1..=7).map(|k| target_day(k, 7, 5)).collect::<Vec<_>>(), [1, 2, 3, 4, 5, 6, 7]);
        assert!((1..=10).all(|k| (1..=7).contains(&target_day(k, 10, 3))));
        assert_eq!(target_day(1, 1, 9), 3);
    }
}
