//! Canonical schedule JSON.
//!
//! ```json
//! {"plan_id": "...", "family_id": "...", "summary": null,
//!  "subtasks": [{"subtask_name": "reading_1", "parent_task": "reading",
//!                "description": "...", "answers": null, "tutoring_method": "...",
//!                "owners": ["mom"], "child_participates": true, "day": 1,
//!                "start": "19:00", "end": "19:30", "status": "pending"}]}
//! ```
//!
//! `child_independent`, `handover_log` and `notes` are optional and only
//! emitted when set. Parsing collects every problem it finds instead of
//! stopping at the first one.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::model::{
    CaregiverId, FamilyId, HandoverEntry, PlanId, Subtask, SubtaskNote, SubtaskStatus, WeeklySchedule,
    split_subtask_name,
};
use crate::time::{DayIndex, TimeOfDay, TimeSlot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MalformedSyntax,
    SchemaViolation,
    InvariantViolation,
    /// Reported but never fatal.
    Advisory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleIssue {
    pub kind: IssueKind,
    /// JSON pointer-ish location, e.g. `/subtasks/2/start`.
    pub path: String,
    pub rule_id: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub subtasks: Vec<String>,
}

impl fmt::Display for ScheduleIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.rule_id, self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("schedule rejected with {} issue(s); first: {}", issues.len(), issues.first().map(|i| i.to_string()).unwrap_or_default())]
pub struct ScheduleError {
    pub issues: Vec<ScheduleIssue>,
}

impl ScheduleError {
    pub fn has_kind(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    pub fn rules(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.issues.iter().map(|i| i.rule_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownFields {
    #[default]
    Reject,
    Preserve,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptions {
    pub unknown_fields: UnknownFields,
    /// Report shared-owner overlaps as invariant violations.
    pub check_overlaps: bool,
    /// Require each parent's subtasks to be numbered 1..n. Off for stored
    /// plans, where unplaced subtasks leave gaps.
    pub check_numbering: bool,
    /// Require day, start and end on every subtask.
    pub require_slots: bool,
    /// Round times to 5-minute boundaries and accept `"Day 3"` style days
    /// and a bare owner string.
    pub lenient_values: bool,
    /// Used when the document omits the ids (model replies often do).
    pub default_plan_id: Option<PlanId>,
    pub default_family_id: Option<FamilyId>,
}

impl ParseOptions {
    pub fn strict() -> Self {
        Self {
            unknown_fields: UnknownFields::Reject,
            check_overlaps: true,
            check_numbering: true,
            require_slots: true,
            lenient_values: false,
            default_plan_id: None,
            default_family_id: None,
        }
    }

    /// For schedules this crate wrote itself: exact values, extras kept,
    /// conflicts allowed since they are reported separately.
    pub fn stored() -> Self {
        Self { unknown_fields: UnknownFields::Preserve, check_overlaps: false, check_numbering: false, ..Self::strict() }
    }

    /// For schedules proposed by a language model: tolerant of formatting
    /// noise and of conflicts, which are handled downstream.
    pub fn draft(plan_id: &PlanId, family_id: &FamilyId) -> Self {
        Self {
            unknown_fields: UnknownFields::Preserve,
            check_overlaps: false,
            check_numbering: true,
            require_slots: true,
            lenient_values: true,
            default_plan_id: Some(plan_id.clone()),
            default_family_id: Some(family_id.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSchedule {
    pub schedule: WeeklySchedule,
    pub advisories: Vec<ScheduleIssue>,
}

/// Strict parse: unknown fields rejected, every invariant enforced.
pub fn parse_schedule_json(text: &str) -> Result<WeeklySchedule, ScheduleError> {
    parse_schedule_with(text, &ParseOptions::strict()).map(|p| p.schedule)
}

pub fn parse_schedule_with(text: &str, options: &ParseOptions) -> Result<ParsedSchedule, ScheduleError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ScheduleError {
        issues: vec![ScheduleIssue {
            kind: IssueKind::MalformedSyntax,
            path: String::new(),
            rule_id: "malformed_syntax",
            message: e.to_string(),
            subtasks: Vec::new(),
        }],
    })?;
    parse_schedule_value(&value, options)
}

pub fn parse_schedule_value(value: &Value, options: &ParseOptions) -> Result<ParsedSchedule, ScheduleError> {
    let mut reader = Reader { options, issues: Vec::new() };
    let schedule = reader.schedule(value);
    let mut issues = reader.issues;
    if let Some(schedule) = &schedule {
        issues.extend(
            invariant_issues(schedule, options.check_overlaps)
                .into_iter()
                .filter(|i| options.check_numbering || i.rule_id != "subtask_numbering")
                .filter(|i| options.require_slots || i.rule_id != "slot_missing"),
        );
    }
    let (advisories, fatal): (Vec<_>, Vec<_>) = issues.into_iter().partition(|i| i.kind == IssueKind::Advisory);
    match schedule {
        Some(schedule) if fatal.is_empty() => Ok(ParsedSchedule { schedule, advisories }),
        _ => Err(ScheduleError { issues: fatal }),
    }
}

const SUBTASK_FIELDS: &[&str] = &[
    "subtask_name",
    "parent_task",
    "description",
    "answers",
    "tutoring_method",
    "owners",
    "child_participates",
    "child_independent",
    "day",
    "start",
    "end",
    "status",
    "handover_log",
    "notes",
];
const TOP_FIELDS: &[&str] = &["plan_id", "family_id", "summary", "subtasks"];

struct Reader<'o> {
    options: &'o ParseOptions,
    issues: Vec<ScheduleIssue>,
}

impl Reader<'_> {
    fn schema(&mut self, path: String, message: String) {
        self.issues.push(ScheduleIssue {
            kind: IssueKind::SchemaViolation,
            path,
            rule_id: "schema",
            message,
            subtasks: Vec::new(),
        });
    }

    fn unknown_fields(&mut self, obj: &Map<String, Value>, known: &[&str], path: &str) -> Map<String, Value> {
        let mut extra = Map::new();
        for (k, v) in obj {
            if known.contains(&k.as_str()) {
                continue;
            }
            match self.options.unknown_fields {
                UnknownFields::Reject => self.schema(format!("{path}/{k}"), format!("unknown field `{k}`")),
                UnknownFields::Preserve => {
                    extra.insert(k.clone(), v.clone());
                }
            }
        }
        extra
    }

    fn string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        match obj.get(key) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => {
                self.schema(format!("{path}/{key}"), format!("expected string, found {}", type_name(other)));
                None
            }
            None => {
                self.schema(format!("{path}/{key}"), format!("missing field `{key}`"));
                None
            }
        }
    }

    fn optional_string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<Option<String>> {
        match obj.get(key) {
            Some(Value::String(s)) => Some(Some(s.clone())),
            Some(Value::Null) => Some(None),
            None if self.options.lenient_values => Some(None),
            Some(other) => {
                self.schema(format!("{path}/{key}"), format!("expected string or null, found {}", type_name(other)));
                None
            }
            None => {
                self.schema(format!("{path}/{key}"), format!("missing field `{key}`"));
                None
            }
        }
    }

    fn schedule(&mut self, value: &Value) -> Option<WeeklySchedule> {
        let Some(obj) = value.as_object() else {
            self.schema(String::new(), format!("expected object, found {}", type_name(value)));
            return None;
        };
        let extra = self.unknown_fields(obj, TOP_FIELDS, "");
        let plan_id = match (obj.get("plan_id"), &self.options.default_plan_id) {
            (None, Some(default)) => Some(default.clone()),
            _ => self.string(obj, "plan_id", "").map(PlanId),
        };
        let family_id = match (obj.get("family_id"), &self.options.default_family_id) {
            (None, Some(default)) => Some(default.clone()),
            _ => self.string(obj, "family_id", "").map(FamilyId),
        };
        let summary = match (obj.get("summary"), self.options.default_plan_id.is_some()) {
            (None, true) => Some(None),
            _ => self.optional_string(obj, "summary", ""),
        };
        let subtasks = match obj.get("subtasks") {
            Some(Value::Array(items)) => {
                let parsed: Vec<Option<Subtask>> = items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| self.subtask(item, &format!("/subtasks/{i}")))
                    .collect();
                parsed.into_iter().collect::<Option<Vec<_>>>()
            }
            Some(other) => {
                self.schema("/subtasks".into(), format!("expected array, found {}", type_name(other)));
                None
            }
            None => {
                self.schema("/subtasks".into(), "missing field `subtasks`".into());
                None
            }
        };
        Some(WeeklySchedule {
            plan_id: plan_id?,
            family_id: family_id?,
            summary: summary?,
            subtasks: subtasks?,
            extra,
        })
    }

    fn subtask(&mut self, value: &Value, path: &str) -> Option<Subtask> {
        let Some(obj) = value.as_object() else {
            self.schema(path.into(), format!("expected object, found {}", type_name(value)));
            return None;
        };
        let extra = self.unknown_fields(obj, SUBTASK_FIELDS, path);
        let subtask_name = self.string(obj, "subtask_name", path);
        let parent_task = match obj.get("parent_task") {
            None if self.options.lenient_values => {
                let derived = subtask_name.as_deref().and_then(split_subtask_name).map(|(p, _)| p.to_owned());
                if derived.is_none() {
                    self.schema(format!("{path}/parent_task"), "missing field `parent_task`".into());
                }
                derived
            }
            _ => self.string(obj, "parent_task", path),
        };
        let description = self.string(obj, "description", path);
        let answers = self.optional_string(obj, "answers", path);
        let tutoring_method = match (obj.get("tutoring_method"), self.options.lenient_values) {
            (None, true) => Some(String::new()),
            _ => self.string(obj, "tutoring_method", path),
        };
        let owners = self.owners(obj.get("owners"), &format!("{path}/owners"));
        let child_participates = self.boolean(obj, "child_participates", path, None);
        let child_independent = self.boolean(obj, "child_independent", path, Some(false));
        let unslotted =
            !self.options.require_slots && ["day", "start", "end"].iter().all(|k| obj.get(*k).is_none_or(Value::is_null));
        let (day, start, end) = if unslotted {
            (None, None, None)
        } else {
            (
                self.day(obj.get("day"), &format!("{path}/day")),
                self.time(obj.get("start"), &format!("{path}/start")),
                self.time(obj.get("end"), &format!("{path}/end")),
            )
        };
        let status = match obj.get("status") {
            None if self.options.lenient_values => Some(SubtaskStatus::Pending),
            None => {
                self.schema(format!("{path}/status"), "missing field `status`".into());
                None
            }
            Some(v) => match serde_json::from_value::<SubtaskStatus>(v.clone()) {
                Ok(s) => Some(s),
                Err(_) => {
                    self.schema(format!("{path}/status"), format!("invalid status {v}"));
                    None
                }
            },
        };
        let handover_log = self.list::<HandoverEntry>(obj.get("handover_log"), &format!("{path}/handover_log"));
        let notes = self.list::<SubtaskNote>(obj.get("notes"), &format!("{path}/notes"));

        let slot = match (day, start, end) {
            (Some(day), Some(start), Some(end)) => match TimeSlot::new(day, start, end) {
                Ok(slot) => Some(slot),
                Err(_) => {
                    self.issues.push(ScheduleIssue {
                        kind: IssueKind::InvariantViolation,
                        path: format!("{path}/end"),
                        rule_id: "slot_order",
                        message: format!("start {start} must be before end {end}"),
                        subtasks: subtask_name.iter().cloned().collect(),
                    });
                    None
                }
            },
            _ => None,
        };

        Some(Subtask {
            subtask_name: subtask_name?,
            parent_task: parent_task?,
            description: description?,
            answers: answers?,
            tutoring_method: tutoring_method?,
            owners: owners?,
            child_participates: child_participates?,
            child_independent: child_independent?,
            slot: if unslotted { None } else { Some(slot?) },
            status: status?,
            handover_log: handover_log?,
            notes: notes?,
            extra,
        })
    }

    fn boolean(&mut self, obj: &Map<String, Value>, key: &str, path: &str, default: Option<bool>) -> Option<bool> {
        match (obj.get(key), default) {
            (Some(Value::Bool(b)), _) => Some(*b),
            (None, Some(d)) => Some(d),
            (None, None) if self.options.lenient_values => Some(false),
            (Some(other), _) => {
                self.schema(format!("{path}/{key}"), format!("expected boolean, found {}", type_name(other)));
                None
            }
            (None, None) => {
                self.schema(format!("{path}/{key}"), format!("missing field `{key}`"));
                None
            }
        }
    }

    fn owners(&mut self, value: Option<&Value>, path: &str) -> Option<Vec<CaregiverId>> {
        match value {
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                let mut ok = true;
                for (i, item) in items.iter().enumerate() {
                    match item {
                        Value::String(s) => out.push(CaregiverId(s.clone())),
                        other => {
                            self.schema(format!("{path}/{i}"), format!("expected string, found {}", type_name(other)));
                            ok = false;
                        }
                    }
                }
                ok.then_some(out)
            }
            Some(Value::String(s)) if self.options.lenient_values => Some(vec![CaregiverId(s.clone())]),
            Some(other) => {
                self.schema(path.into(), format!("expected array of ids, found {}", type_name(other)));
                None
            }
            None => {
                self.schema(path.into(), "missing field `owners`".into());
                None
            }
        }
    }

    fn day(&mut self, value: Option<&Value>, path: &str) -> Option<DayIndex> {
        let lenient = self.options.lenient_values;
        let parsed = match value {
            Some(Value::Number(n)) => n.as_i64().map(DayIndex::new),
            Some(Value::String(s)) if lenient => {
                let digits = s.trim().trim_start_matches(|c: char| c.is_alphabetic()).trim();
                digits.parse::<i64>().ok().map(DayIndex::new)
            }
            None => {
                self.schema(path.into(), "missing field `day`".into());
                return None;
            }
            _ => None,
        };
        match parsed {
            Some(Ok(day)) => Some(day),
            _ => {
                self.schema(path.into(), format!("day must be an integer 1-7, found {}", value.unwrap_or(&Value::Null)));
                None
            }
        }
    }

    fn time(&mut self, value: Option<&Value>, path: &str) -> Option<TimeOfDay> {
        match value {
            Some(Value::String(s)) => match s.trim().parse::<TimeOfDay>() {
                Ok(t) if self.options.lenient_values => Some(t.quantized()),
                Ok(t) if s.len() == 5 => Some(t),
                _ => {
                    self.schema(path.into(), format!("`{s}` is not a zero-padded 24-hour HH:MM time"));
                    None
                }
            },
            Some(other) => {
                self.schema(path.into(), format!("expected HH:MM string, found {}", type_name(other)));
                None
            }
            None => {
                self.schema(path.into(), "missing time field".into());
                None
            }
        }
    }

    fn list<T: serde::de::DeserializeOwned>(&mut self, value: Option<&Value>, path: &str) -> Option<Vec<T>> {
        match value {
            None => Some(Vec::new()),
            Some(v) => match serde_json::from_value::<Vec<T>>(v.clone()) {
                Ok(items) => Some(items),
                Err(e) => {
                    self.schema(path.into(), e.to_string());
                    None
                }
            },
        }
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn invariant(path: String, rule_id: &'static str, message: String, subtasks: Vec<String>) -> ScheduleIssue {
    ScheduleIssue { kind: IssueKind::InvariantViolation, path, rule_id, message, subtasks }
}

/// Every invariant violation of an already-typed schedule. Shared-owner
/// overlaps are only reported when `check_overlaps` is set; day coverage is
/// always advisory.
pub fn invariant_issues(schedule: &WeeklySchedule, check_overlaps: bool) -> Vec<ScheduleIssue> {
    let mut issues = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ordinals: BTreeMap<&str, Vec<(u32, &str)>> = BTreeMap::new();

    for (i, st) in schedule.subtasks.iter().enumerate() {
        let path = format!("/subtasks/{i}");
        if let Some(first) = seen.insert(&st.subtask_name, i) {
            issues.push(invariant(
                format!("{path}/subtask_name"),
                "duplicate_subtask",
                format!("`{}` also appears at /subtasks/{first}", st.subtask_name),
                vec![st.subtask_name.clone()],
            ));
        }
        match st.ordinal() {
            Some(k) => ordinals.entry(&st.parent_task).or_default().push((k, &st.subtask_name)),
            None => issues.push(invariant(
                format!("{path}/subtask_name"),
                "subtask_name_pattern",
                format!("`{}` does not match `{}_<k>`", st.subtask_name, st.parent_task),
                vec![st.subtask_name.clone()],
            )),
        }
        if st.owners.is_empty() {
            issues.push(invariant(
                format!("{path}/owners"),
                "owners_nonempty",
                "at least one responsible adult is required".into(),
                vec![st.subtask_name.clone()],
            ));
        }
        let distinct: BTreeSet<&CaregiverId> = st.owners.iter().collect();
        if distinct.len() != st.owners.len() {
            issues.push(invariant(
                format!("{path}/owners"),
                "owners_duplicate",
                "owner listed more than once".into(),
                vec![st.subtask_name.clone()],
            ));
        }
        if st.slot.is_none() {
            issues.push(invariant(
                format!("{path}/day"),
                "slot_missing",
                "every scheduled subtask needs day, start and end".into(),
                vec![st.subtask_name.clone()],
            ));
        }
    }

    for (parent, mut ks) in ordinals {
        ks.sort();
        let consecutive = ks.iter().enumerate().all(|(i, (k, _))| *k as usize == i + 1);
        if !consecutive {
            let listed: Vec<String> = ks.iter().map(|(_, n)| (*n).to_owned()).collect();
            issues.push(invariant(
                "/subtasks".into(),
                "subtask_numbering",
                format!("subtasks of `{parent}` are not numbered 1..{}", ks.len()),
                listed,
            ));
        }
    }

    if check_overlaps {
        for (i, a) in schedule.subtasks.iter().enumerate() {
            for (j, b) in schedule.subtasks.iter().enumerate().skip(i + 1) {
                let (Some(sa), Some(sb)) = (a.slot, b.slot) else { continue };
                if a.occupies_owners() && b.occupies_owners() && a.shares_owner(b) && sa.overlaps(&sb) {
                    issues.push(invariant(
                        format!("/subtasks/{j}"),
                        "owner_overlap",
                        format!("`{}` ({sa}) overlaps `{}` ({sb}) for a shared owner", a.subtask_name, b.subtask_name),
                        vec![a.subtask_name.clone(), b.subtask_name.clone()],
                    ));
                }
            }
        }
    }

    issues.extend(day_coverage_advisories(schedule));
    issues
}

/// With seven or more subtasks every day should hold one; with fewer, no
/// two subtasks should share a day.
pub fn day_coverage_advisories(schedule: &WeeklySchedule) -> Vec<ScheduleIssue> {
    let mut per_day = [0usize; 7];
    for slot in schedule.subtasks.iter().filter_map(|s| s.slot) {
        per_day[usize::from(slot.day().get() - 1)] += 1;
    }
    let n = schedule.subtasks.len();
    let advisory = |rule_id, message| ScheduleIssue {
        kind: IssueKind::Advisory,
        path: "/subtasks".into(),
        rule_id,
        message,
        subtasks: Vec::new(),
    };
    if n >= 7 {
        let empty: Vec<String> = (1..=7).filter(|d| per_day[d - 1] == 0).map(|d| d.to_string()).collect();
        if empty.is_empty() {
            Vec::new()
        } else {
            vec![advisory("day_coverage", format!("no subtask on day(s) {}", empty.join(", ")))]
        }
    } else if per_day.iter().any(|&c| c > 1) {
        vec![advisory("distinct_days", format!("{n} subtasks do not occupy {n} distinct days"))]
    } else {
        Vec::new()
    }
}

struct CanonicalSubtask<'a>(&'a Subtask);

impl Serialize for CanonicalSubtask<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let st = self.0;
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("subtask_name", &st.subtask_name)?;
        map.serialize_entry("parent_task", &st.parent_task)?;
        map.serialize_entry("description", &st.description)?;
        map.serialize_entry("answers", &st.answers)?;
        map.serialize_entry("tutoring_method", &st.tutoring_method)?;
        map.serialize_entry("owners", &st.owners)?;
        map.serialize_entry("child_participates", &st.child_participates)?;
        if st.child_independent {
            map.serialize_entry("child_independent", &true)?;
        }
        map.serialize_entry("day", &st.slot.map(|s| s.day()))?;
        map.serialize_entry("start", &st.slot.map(|s| s.start()))?;
        map.serialize_entry("end", &st.slot.map(|s| s.end()))?;
        map.serialize_entry("status", &st.status)?;
        if !st.handover_log.is_empty() {
            map.serialize_entry("handover_log", &st.handover_log)?;
        }
        if !st.notes.is_empty() {
            map.serialize_entry("notes", &st.notes)?;
        }
        for (k, v) in &st.extra {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl Serialize for Subtask {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CanonicalSubtask(self).serialize(serializer)
    }
}

impl Serialize for WeeklySchedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("plan_id", &self.plan_id)?;
        map.serialize_entry("family_id", &self.family_id)?;
        map.serialize_entry("summary", &self.summary)?;
        map.serialize_entry("subtasks", &self.subtasks)?;
        for (k, v) in &self.extra {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for WeeklySchedule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        parse_schedule_value(&value, &ParseOptions::stored())
            .map(|p| p.schedule)
            .map_err(serde::de::Error::custom)
    }
}

/// Pretty-printed canonical form with a trailing newline.
pub fn to_canonical_json(schedule: &WeeklySchedule) -> String {
    let mut out = serde_json::to_string_pretty(schedule).expect("schedule serialization is infallible");
    out.push('\n');
    out
}

/// The subtask with its slot fields removed, serialized canonically. Two
/// subtasks with equal content strings differ at most in day/start/end.
pub fn content_fingerprint(subtask: &Subtask) -> String {
    let mut stripped = subtask.clone();
    stripped.slot = None;
    serde_json::to_string(&stripped).expect("subtask serialization is infallible")
}
