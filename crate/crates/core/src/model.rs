//! Families, caregivers, learning tasks and subtasks.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::time::{AvailabilityWindow, TimeSlot, merge_windows};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl core::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(CaregiverId);
string_id!(FamilyId);
string_id!(PlanId);
string_id!(ChildId);

/// Unix epoch milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

/// Closed subject vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Chinese,
    Math,
    English,
    Science,
    Music,
    Physical,
    Art,
    Habits,
    Other,
}

impl Subject {
    pub const ALL: [Subject; 9] = [
        Subject::Chinese,
        Subject::Math,
        Subject::English,
        Subject::Science,
        Subject::Music,
        Subject::Physical,
        Subject::Art,
        Subject::Habits,
        Subject::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subject::Chinese => "chinese",
            Subject::Math => "math",
            Subject::English => "english",
            Subject::Science => "science",
            Subject::Music => "music",
            Subject::Physical => "physical",
            Subject::Art => "art",
            Subject::Habits => "habits",
            Subject::Other => "other",
        }
    }

    /// Maps free-text subject names onto the vocabulary, falling back to
    /// [`Subject::Other`].
    pub fn from_free_text(text: &str) -> Subject {
        const LOOKUP: &[(&str, Subject)] = &[
            ("chinese", Subject::Chinese),
            ("mandarin", Subject::Chinese),
            ("language arts", Subject::Chinese),
            ("语文", Subject::Chinese),
            ("math", Subject::Math),
            ("maths", Subject::Math),
            ("mathematics", Subject::Math),
            ("arithmetic", Subject::Math),
            ("数学", Subject::Math),
            ("english", Subject::English),
            ("英语", Subject::English),
            ("science", Subject::Science),
            ("科学", Subject::Science),
            ("music", Subject::Music),
            ("singing", Subject::Music),
            ("音乐", Subject::Music),
            ("physical", Subject::Physical),
            ("physical education", Subject::Physical),
            ("pe", Subject::Physical),
            ("sports", Subject::Physical),
            ("exercise", Subject::Physical),
            ("体育", Subject::Physical),
            ("art", Subject::Art),
            ("drawing", Subject::Art),
            ("painting", Subject::Art),
            ("美术", Subject::Art),
            ("habits", Subject::Habits),
            ("habit", Subject::Habits),
            ("chores", Subject::Habits),
            ("习惯", Subject::Habits),
        ];
        let needle = text.trim().to_lowercase();
        LOOKUP
            .iter()
            .find(|(k, _)| *k == needle)
            .map(|(_, s)| *s)
            .unwrap_or(Subject::Other)
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaregiverProfile {
    pub caregiver_id: CaregiverId,
    pub role_label: String,
    #[serde(default)]
    pub expertise_tags: BTreeSet<Subject>,
    #[serde(default)]
    pub availability: Vec<AvailabilityWindow>,
    #[serde(default)]
    pub notes: String,
}

/// A tutoring method that has the adult teach rather than supervise.
pub fn implies_instruction(tutoring_method: &str) -> bool {
    const VERBS: &[&str] = &["teach", "lead", "explain", "instruct", "mentor", "tutor", "coach", "guide"];
    let text = tutoring_method.to_lowercase();
    text.split(|c: char| !c.is_alphanumeric()).any(|w| VERBS.iter().any(|v| w.starts_with(v)))
}

impl CaregiverProfile {
    /// Expanded, merged availability slots.
    pub fn available_slots(&self) -> Vec<TimeSlot> {
        expand_availability(self)
    }

    pub fn has_expertise(&self, subject: Subject) -> bool {
        self.expertise_tags.contains(&subject)
    }

    /// Notes describe a supervising role rather than a teaching one.
    pub fn is_monitoring_only(&self) -> bool {
        let notes = self.notes.to_lowercase();
        ["monitoring", "monitor only", "supervision only", "checking task completion"]
            .iter()
            .any(|k| notes.contains(k))
    }
}

/// Union of per-day slots covered by the caregiver's windows, merged into
/// maximal disjoint slots.
pub fn expand_availability(caregiver: &CaregiverProfile) -> Vec<TimeSlot> {
    merge_windows(caregiver.availability.iter())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildProfile {
    pub child_id: ChildId,
    pub age: u8,
    pub grade_level: u8,
    #[serde(default)]
    pub characteristics: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyContext {
    pub family_id: FamilyId,
    pub caregivers: Vec<CaregiverProfile>,
    pub child: ChildProfile,
    #[serde(default)]
    pub independence_required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("family must have 2 to 4 caregivers, found {0}")]
    CaregiverCount(usize),
    #[error("caregiver id `{0}` appears more than once")]
    DuplicateCaregiver(CaregiverId),
    #[error("child age must be positive")]
    ChildAge,
    #[error("child grade level must be at least 1")]
    GradeLevel,
    #[error("task name must not be empty")]
    EmptyTaskName,
    #[error("task name `{0}` ends in an underscore-number suffix reserved for subtasks")]
    ReservedTaskSuffix(String),
    #[error("duplicate task name `{0}`")]
    DuplicateTask(String),
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: SubtaskStatus, to: SubtaskStatus },
}

impl FamilyContext {
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.caregivers.len();
        if !(2..=4).contains(&n) {
            return Err(ModelError::CaregiverCount(n));
        }
        let mut seen = BTreeSet::new();
        for c in &self.caregivers {
            if !seen.insert(&c.caregiver_id) {
                return Err(ModelError::DuplicateCaregiver(c.caregiver_id.clone()));
            }
        }
        if self.child.age == 0 {
            return Err(ModelError::ChildAge);
        }
        if self.child.grade_level == 0 {
            return Err(ModelError::GradeLevel);
        }
        Ok(())
    }

    pub fn caregiver(&self, id: &str) -> Option<&CaregiverProfile> {
        self.caregivers.iter().find(|c| c.caregiver_id.as_str() == id)
    }

    /// Resolves an id or a role label (case-insensitive) to a caregiver.
    pub fn resolve_caregiver(&self, reference: &str) -> Option<&CaregiverProfile> {
        self.caregiver(reference).or_else(|| {
            let needle = reference.trim().to_lowercase();
            self.caregivers
                .iter()
                .find(|c| c.role_label.to_lowercase() == needle || c.caregiver_id.as_str().to_lowercase() == needle)
        })
    }
}

/// Pedagogical class of a learning task; drives default durations and the
/// evaluator's rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskClass {
    PracticeMemorization,
    HomeworkQa,
    HabitState,
    Reflective,
    PhysicalMusic,
}

impl TaskClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskClass::PracticeMemorization => "practice_memorization",
            TaskClass::HomeworkQa => "homework_qa",
            TaskClass::HabitState => "habit_state",
            TaskClass::Reflective => "reflective",
            TaskClass::PhysicalMusic => "physical_music",
        }
    }

    /// Keyword classification applied at ingestion when no class is given.
    pub fn infer(name: &str, description: &str, subject: Subject) -> TaskClass {
        let text = alloc::format!("{name} {description}").to_lowercase();
        let has = |keys: &[&str]| keys.iter().any(|k| text.contains(k));
        if has(&["memoriz", "memoris", "recite", "recitation", "dictation", "vocabulary", "words"]) {
            TaskClass::PracticeMemorization
        } else if has(&["tidy", "clean", "organiz", "organis", "pack", "habit", "desk", "bedtime"]) {
            TaskClass::HabitState
        } else if has(&["reflect", "diary", "journal", "essay", "weekly summary", "review the week"]) {
            TaskClass::Reflective
        } else if matches!(subject, Subject::Music | Subject::Physical)
            || has(&["rhythm", "song", "piano", "rope", "running", "exercise", "sport", "dance"])
        {
            TaskClass::PhysicalMusic
        } else {
            TaskClass::HomeworkQa
        }
    }
}

impl fmt::Display for TaskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LearningTask {
    pub task_name: String,
    pub description: String,
    pub subject_tag: Subject,
    pub task_class: TaskClass,
}

impl LearningTask {
    pub fn new(task_name: &str, description: &str, subject_tag: Subject) -> Result<Self, ModelError> {
        let task_class = TaskClass::infer(task_name, description, subject_tag);
        Self::with_class(task_name, description, subject_tag, task_class)
    }

    pub fn with_class(
        task_name: &str,
        description: &str,
        subject_tag: Subject,
        task_class: TaskClass,
    ) -> Result<Self, ModelError> {
        validate_task_name(task_name)?;
        Ok(Self {
            task_name: task_name.to_owned(),
            description: description.to_owned(),
            subject_tag,
            task_class,
        })
    }
}

impl<'de> Deserialize<'de> for LearningTask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            task_name: String,
            #[serde(default)]
            description: String,
            #[serde(default)]
            subject_tag: Option<String>,
            #[serde(default)]
            task_class: Option<TaskClass>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let subject = raw
            .subject_tag
            .as_deref()
            .map(Subject::from_free_text)
            .unwrap_or(Subject::Other);
        let class = raw
            .task_class
            .unwrap_or_else(|| TaskClass::infer(&raw.task_name, &raw.description, subject));
        LearningTask::with_class(&raw.task_name, &raw.description, subject, class)
            .map_err(serde::de::Error::custom)
    }
}

pub fn validate_task_name(name: &str) -> Result<(), ModelError> {
    if name.trim().is_empty() {
        return Err(ModelError::EmptyTaskName);
    }
    if split_subtask_name(name).is_some() {
        return Err(ModelError::ReservedTaskSuffix(name.to_owned()));
    }
    Ok(())
}

/// Splits `reading_3` into `("reading", 3)`. Returns `None` unless the name
/// ends in `_<k>` with `k >= 1` and a nonempty prefix.
pub fn split_subtask_name(name: &str) -> Option<(&str, u32)> {
    let (prefix, digits) = name.rsplit_once('_')?;
    if prefix.is_empty() || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    let k: u32 = digits.parse().ok()?;
    (k >= 1).then_some((prefix, k))
}

pub fn subtask_name(task_name: &str, k: u32) -> String {
    alloc::format!("{task_name}_{k}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskStatus {
    #[default]
    Pending,
    InProgress,
    Done,
}

impl SubtaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SubtaskStatus::Pending => "pending",
            SubtaskStatus::InProgress => "in_progress",
            SubtaskStatus::Done => "done",
        }
    }

    /// pending -> in_progress -> done, or pending -> done. Repeating the
    /// current status is not a transition.
    pub fn can_transition_to(self, next: SubtaskStatus) -> bool {
        matches!(
            (self, next),
            (SubtaskStatus::Pending, SubtaskStatus::InProgress)
                | (SubtaskStatus::Pending, SubtaskStatus::Done)
                | (SubtaskStatus::InProgress, SubtaskStatus::Done)
        )
    }

    pub fn transition(self, next: SubtaskStatus) -> Result<SubtaskStatus, ModelError> {
        if self.can_transition_to(next) {
            Ok(next)
        } else {
            Err(ModelError::IllegalTransition { from: self, to: next })
        }
    }
}

impl fmt::Display for SubtaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandoverEntry {
    pub from: CaregiverId,
    pub to: CaregiverId,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtaskNote {
    pub author: CaregiverId,
    pub text: String,
    pub timestamp: Timestamp,
}

/// Atomic schedulable unit produced by decomposing a [`LearningTask`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtask {
    pub subtask_name: String,
    pub parent_task: String,
    pub description: String,
    pub answers: Option<String>,
    pub tutoring_method: String,
    pub owners: Vec<CaregiverId>,
    pub child_participates: bool,
    /// The child can do this alone during daytime hours; owners then only
    /// follow up and are not occupied by the slot.
    pub child_independent: bool,
    pub slot: Option<TimeSlot>,
    pub status: SubtaskStatus,
    pub handover_log: Vec<HandoverEntry>,
    pub notes: Vec<SubtaskNote>,
    /// Unrecognised fields kept by lenient parsing, emitted back verbatim.
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Subtask {
    pub fn new(parent_task: &str, k: u32, description: &str, owners: &[&str]) -> Self {
        Self {
            subtask_name: subtask_name(parent_task, k),
            parent_task: parent_task.to_owned(),
            description: description.to_owned(),
            answers: None,
            tutoring_method: String::new(),
            owners: owners.iter().map(|o| CaregiverId::from(*o)).collect(),
            child_participates: true,
            child_independent: false,
            slot: None,
            status: SubtaskStatus::Pending,
            handover_log: Vec::new(),
            notes: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_slot(mut self, slot: TimeSlot) -> Self {
        self.slot = Some(slot);
        self
    }

    pub fn with_method(mut self, method: &str) -> Self {
        self.tutoring_method = method.to_owned();
        self
    }

    pub fn ordinal(&self) -> Option<u32> {
        split_subtask_name(&self.subtask_name)
            .filter(|(prefix, _)| *prefix == self.parent_task)
            .map(|(_, k)| k)
    }

    pub fn is_owned_by(&self, id: &str) -> bool {
        self.owners.iter().any(|o| o.as_str() == id)
    }

    pub fn shares_owner(&self, other: &Subtask) -> bool {
        self.owners.iter().any(|o| other.owners.contains(o))
    }

    /// Whether the slot occupies the owners' time.
    pub fn occupies_owners(&self) -> bool {
        !self.child_independent
    }

    pub fn occupies_child(&self) -> bool {
        self.child_participates || self.child_independent
    }
}

/// A seven-day plan; every subtask carries a slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeeklySchedule {
    pub plan_id: PlanId,
    pub family_id: FamilyId,
    pub summary: Option<String>,
    pub subtasks: Vec<Subtask>,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl WeeklySchedule {
    pub fn new(plan_id: &str, family_id: &str, subtasks: Vec<Subtask>) -> Self {
        Self {
            plan_id: plan_id.into(),
            family_id: family_id.into(),
            summary: None,
            subtasks,
            extra: serde_json::Map::new(),
        }
    }

    pub fn subtask(&self, name: &str) -> Option<&Subtask> {
        self.subtasks.iter().find(|s| s.subtask_name == name)
    }

    pub fn subtask_mut(&mut self, name: &str) -> Option<&mut Subtask> {
        self.subtasks.iter_mut().find(|s| s.subtask_name == name)
    }

    /// Slotted subtasks ordered by (day, start, subtask_name).
    pub fn sorted_by_time(&self) -> Vec<&Subtask> {
        let mut out: Vec<&Subtask> = self.subtasks.iter().collect();
        out.sort_by(|a, b| {
            (a.slot, &a.subtask_name).cmp(&(b.slot, &b.subtask_name))
        });
        out
    }
}
