//! Planning and tutoring operations on top of a [`ChatProvider`].

use std::sync::Arc;

use homeplan_core::conflict::{Conflict, detect_conflicts};
use homeplan_core::events::TutoringMode;
use homeplan_core::schedule_json::{ParseOptions, ScheduleIssue, parse_schedule_value};
use homeplan_core::scheduler::{SchedulingRequest, Violation, verify_schedule};
use homeplan_core::time::DayClass;
use homeplan_core::{
    CaregiverId, ChildProfile, FamilyContext, LearningTask, PlanId, Subtask, Timestamp, WeeklySchedule, subtask_name,
    to_canonical_json,
};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::extract::{Strategy, extract_json};
use super::provider::{Attachment, ChatProvider, ChatRequest, Message, Part, ProviderError, Role};
use super::templates::{RenderError, TemplateId};

pub const MAX_SUBTASKS_PER_TASK: usize = 10;

const DECOMPOSE_FORMAT: &str = include_str!("../../assets/format/decompose.txt");
const SCHEDULE_FORMAT: &str = include_str!("../../assets/format/schedule.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct GatewaySettings {
    pub output_language: String,
    /// Prior dialogue messages sent with each tutoring turn.
    pub history_window: usize,
    pub max_attachment_bytes: usize,
    /// Longest source text sent in one request; longer input is split.
    pub chunk_chars: usize,
    pub summary_limit: usize,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            output_language: "English".into(),
            history_window: 8,
            max_attachment_bytes: 5 * 1024 * 1024,
            chunk_chars: 4000,
            summary_limit: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("reply is not usable JSON: {0}")]
    Unparseable(String),
    #[error("reply still unusable after a repair request: {0}")]
    UnparseableAfterRepair(String),
    #[error("decomposition breaks {}", rules.join(", "))]
    ConstraintViolation { rules: Vec<String>, details: Vec<String> },
    #[error("reply changed `{field}` of `{subtask}`")]
    ContentMutated { subtask: String, field: String },
    #[error("empty summary")]
    EmptySummary,
    #[error("answer checking needs an attachment or answer text")]
    NoAttachment,
    #[error("attachment of {size} bytes exceeds the {cap}-byte limit")]
    SizeLimit { size: usize, cap: usize },
    #[error("{0} mode does not take this request")]
    WrongMode(TutoringMode),
    #[error("empty source text")]
    EmptySource,
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Provider(ProviderError::NoVision) => "provider_no_vision",
            GatewayError::Provider(ProviderError::Unreachable(_) | ProviderError::Status { .. }) => "provider_unreachable",
            GatewayError::Provider(_) => "provider_error",
            GatewayError::Render(_) => "template_error",
            GatewayError::Unparseable(_) => "unparseable",
            GatewayError::UnparseableAfterRepair(_) => "output_unparseable_after_repair",
            GatewayError::ConstraintViolation { .. } => "constraint_violation",
            GatewayError::ContentMutated { .. } => "content_mutated",
            GatewayError::EmptySummary => "empty_summary",
            GatewayError::NoAttachment => "no_attachment",
            GatewayError::SizeLimit { .. } => "size_limit",
            GatewayError::WrongMode(_) => "wrong_mode",
            GatewayError::EmptySource => "empty_source",
        }
    }
}

/// What one operation did against the provider.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CallTrace {
    pub calls: u32,
    pub repairs: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn family_desc(family: &FamilyContext) -> String {
    family
        .caregivers
        .iter()
        .map(|c| {
            let tags: Vec<&str> = c.expertise_tags.iter().map(|t| t.as_str()).collect();
            let strengths = if tags.is_empty() { "no particular subject".to_owned() } else { tags.join(", ") };
            let mut line = format!("- {} ({}): good at {strengths}", c.caregiver_id, c.role_label);
            if !c.notes.trim().is_empty() {
                line.push_str("; ");
                line.push_str(c.notes.trim());
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn child_desc(child: &ChildProfile) -> String {
    let mut out = format!("{}-year-old in grade {}", child.age, child.grade_level);
    if !child.characteristics.trim().is_empty() {
        out.push_str(". ");
        out.push_str(child.characteristics.trim());
    }
    out
}

pub fn members_desc(family: &FamilyContext) -> String {
    family
        .caregivers
        .iter()
        .map(|c| {
            let windows: Vec<String> = c
                .availability
                .iter()
                .map(|w| {
                    let days = match w.day_class {
                        DayClass::Weekday => "weekdays (Day 1-5)".to_owned(),
                        DayClass::Weekend => "weekends (Day 6-7)".to_owned(),
                        DayClass::Day(d) => format!("Day {d}"),
                    };
                    format!("{days} {}-{}", w.start, w.end)
                })
                .collect();
            let windows = if windows.is_empty() { "not available".to_owned() } else { windows.join("; ") };
            format!("- {} ({}): {windows}", c.caregiver_id, c.role_label)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Problem {
    Syntax(String),
    Rule(&'static str, String),
}

fn describe(problems: &[Problem]) -> String {
    problems
        .iter()
        .map(|p| match p {
            Problem::Syntax(m) => format!("- invalid JSON: {m}"),
            Problem::Rule(r, m) => format!("- {r}: {m}"),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn text_of(value: Option<&Value>) -> Option<String> {
    match value? {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => Some(
            items
                .iter()
                .map(|v| v.as_str().map(str::to_owned).unwrap_or_else(|| v.to_string()))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        other => Some(other.to_string()),
    }
}

fn parse_decomposition(
    family: &FamilyContext,
    task: &LearningTask,
    reply: &str,
) -> (Result<Vec<Subtask>, Vec<Problem>>, Option<Strategy>) {
    let extracted = match extract_json(reply) {
        Ok(e) => e,
        Err(e) => return (Err(vec![Problem::Syntax(e.to_string())]), None),
    };
    let strategy = Some(extracted.strategy);
    let items = match extracted.value {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("subtasks") {
            Some(Value::Array(items)) => items,
            _ => return (Err(vec![Problem::Syntax("expected an object with a `subtasks` array".into())]), strategy),
        },
        _ => return (Err(vec![Problem::Syntax("expected an object or array".into())]), strategy),
    };

    let mut problems = Vec::new();
    if items.is_empty() {
        problems.push(Problem::Rule("subtasks_nonempty", format!("task `{}` has no subtasks", task.task_name)));
    }
    if items.len() > MAX_SUBTASKS_PER_TASK {
        problems.push(Problem::Rule(
            "subtask_limit",
            format!("task `{}` has {} subtasks; at most {MAX_SUBTASKS_PER_TASK} allowed", task.task_name, items.len()),
        ));
    }
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let expected = subtask_name(&task.task_name, i as u32 + 1);
        let Some(obj) = item.as_object() else {
            problems.push(Problem::Syntax(format!("subtask {} is not an object", i + 1)));
            continue;
        };
        let name = obj.get("subtask_name").and_then(Value::as_str).unwrap_or_default();
        if name != expected {
            problems.push(Problem::Rule("subtask_naming", format!("subtask {} is named `{name}`, expected `{expected}`", i + 1)));
        }
        let description = text_of(obj.get("description")).unwrap_or_default();
        if description.trim().is_empty() {
            problems.push(Problem::Rule("description_nonempty", format!("`{expected}` has no description")));
        }
        let refs: Vec<String> = match obj.get("owners") {
            Some(Value::String(s)) => vec![s.clone()],
            Some(Value::Array(a)) => a.iter().map(|v| v.as_str().map(str::to_owned).unwrap_or_else(|| v.to_string())).collect(),
            _ => Vec::new(),
        };
        let mut owners: Vec<CaregiverId> = Vec::new();
        for r in &refs {
            match family.resolve_caregiver(r) {
                Some(c) if !owners.contains(&c.caregiver_id) => owners.push(c.caregiver_id.clone()),
                Some(_) => {}
                None => problems.push(Problem::Rule("owner_unknown", format!("`{expected}` names unknown owner `{r}`"))),
            }
        }
        if refs.is_empty() {
            problems.push(Problem::Rule("owners_nonempty", format!("`{expected}` has no responsible adult")));
        }
        let mut st = Subtask::new(&task.task_name, i as u32 + 1, description.trim(), &[]);
        st.owners = owners;
        st.answers = text_of(obj.get("answers")).filter(|a| !a.trim().is_empty());
        st.tutoring_method = text_of(obj.get("tutoring_method")).unwrap_or_default();
        st.child_participates = obj.get("child_participates").and_then(Value::as_bool).unwrap_or(true);
        st.child_independent = obj.get("child_independent").and_then(Value::as_bool).unwrap_or(false);
        out.push(st);
    }
    if problems.is_empty() { (Ok(out), strategy) } else { (Err(problems), strategy) }
}

fn into_error(problems: Vec<Problem>) -> GatewayError {
    if problems.iter().any(|p| matches!(p, Problem::Syntax(_))) {
        return GatewayError::UnparseableAfterRepair(describe(&problems));
    }
    let mut rules: Vec<String> = Vec::new();
    let mut details = Vec::new();
    for p in problems {
        if let Problem::Rule(r, d) = p {
            if !rules.iter().any(|x| x == r) {
                rules.push(r.to_owned());
            }
            details.push(d);
        }
    }
    GatewayError::ConstraintViolation { rules, details }
}

/// A schedule proposed by the model, with what the auditors found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Drafted {
    pub schedule: WeeklySchedule,
    pub violations: Vec<Violation>,
    pub conflicts: Vec<Conflict>,
    pub advisories: Vec<ScheduleIssue>,
    pub trace: CallTrace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub subtasks: Vec<Subtask>,
    pub traces: Vec<(String, CallTrace)>,
}

const CONTENT_FIELDS: [&str; 10] = [
    "subtask_name",
    "parent_task",
    "description",
    "answers",
    "tutoring_method",
    "owners",
    "child_participates",
    "child_independent",
    "handover_log",
    "notes",
];

fn content_field(st: &Subtask, field: &str) -> String {
    let v = match field {
        "subtask_name" => serde_json::to_string(&st.subtask_name),
        "parent_task" => serde_json::to_string(&st.parent_task),
        "description" => serde_json::to_string(&st.description),
        "answers" => serde_json::to_string(&st.answers),
        "tutoring_method" => serde_json::to_string(&st.tutoring_method),
        "owners" => serde_json::to_string(&st.owners),
        "child_participates" => serde_json::to_string(&st.child_participates),
        "child_independent" => serde_json::to_string(&st.child_independent),
        "handover_log" => serde_json::to_string(&st.handover_log),
        "notes" => serde_json::to_string(&st.notes),
        _ => unreachable!("unknown content field {field}"),
    };
    v.expect("subtask fields serialize")
}

/// Takes the slots from `proposed` and everything else from `original`,
/// failing on the first byte difference outside day/start/end. Fields the
/// model invented are dropped and named in the returned notes.
pub fn adopt_slots(original: &[Subtask], proposed: &WeeklySchedule) -> Result<(Vec<Subtask>, Vec<String>), GatewayError> {
    let mut notes = Vec::new();
    for p in &proposed.subtasks {
        if !original.iter().any(|o| o.subtask_name == p.subtask_name) {
            return Err(GatewayError::ContentMutated { subtask: p.subtask_name.clone(), field: "subtask_name".into() });
        }
    }
    let mut out = Vec::with_capacity(original.len());
    for o in original {
        let Some(p) = proposed.subtask(&o.subtask_name) else {
            return Err(GatewayError::ContentMutated { subtask: o.subtask_name.clone(), field: "subtask_name".into() });
        };
        for field in CONTENT_FIELDS {
            if content_field(o, field) != content_field(p, field) {
                return Err(GatewayError::ContentMutated { subtask: o.subtask_name.clone(), field: field.into() });
            }
        }
        if o.status != p.status && p.status != homeplan_core::SubtaskStatus::Pending {
            return Err(GatewayError::ContentMutated { subtask: o.subtask_name.clone(), field: "status".into() });
        }
        for k in p.extra.keys() {
            notes.push(format!("dropped field `{k}` added to `{}`", o.subtask_name));
        }
        let mut kept = o.clone();
        kept.slot = p.slot;
        out.push(kept);
    }
    Ok((out, notes))
}

pub fn truncate_at_sentence(text: &str, limit: usize) -> String {
    if text.chars().count() <= limit {
        return text.to_owned();
    }
    let head: String = text.chars().take(limit).collect();
    let sentence_end = head.char_indices().filter(|(_, c)| matches!(c, '.' | '!' | '?' | '。' | '！' | '？')).last();
    if let Some((i, c)) = sentence_end {
        return head[..i + c.len_utf8()].trim().to_owned();
    }
    match head.rfind(char::is_whitespace) {
        Some(i) if i > 0 => head[..i].trim_end().to_owned(),
        _ => head,
    }
}

fn one_paragraph(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits on line boundaries into pieces of at most `max` characters; a
/// single longer line is cut by characters.
pub fn chunk_text(text: &str, max: usize) -> Vec<String> {
    let max = max.max(1);
    let mut chunks = Vec::new();
    let mut current = String::new();
    let mut current_len = 0;
    for line in text.lines() {
        let mut pieces: Vec<String> = Vec::new();
        let chars: Vec<char> = line.chars().collect();
        if chars.len() > max {
            pieces.extend(chars.chunks(max).map(|c| c.iter().collect()));
        } else {
            pieces.push(line.to_owned());
        }
        for piece in pieces {
            let len = piece.chars().count();
            let extra = if current.is_empty() { len } else { len + 1 };
            if current_len + extra > max && !current.is_empty() {
                chunks.push(std::mem::take(&mut current));
                current_len = 0;
            }
            if !current.is_empty() {
                current.push('\n');
                current_len += 1;
            }
            current.push_str(&piece);
            current_len += len;
        }
    }
    if !current.trim().is_empty() {
        chunks.push(current);
    }
    chunks
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttachmentMeta {
    pub media_type: String,
    pub size: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExchangeRequest {
    pub text: String,
    pub attachments: Vec<AttachmentMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TutoringExchange {
    pub exchange_id: String,
    pub caregiver_id: CaregiverId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_id: Option<PlanId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subtask_name: Option<String>,
    pub mode: TutoringMode,
    pub request: ExchangeRequest,
    pub response: String,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TutoringRequest {
    pub caregiver_id: CaregiverId,
    pub plan_id: Option<PlanId>,
    pub subtask_name: Option<String>,
    pub mode: TutoringMode,
    pub text: String,
    pub attachments: Vec<Attachment>,
}

impl TutoringRequest {
    pub fn new(caregiver_id: &str, mode: TutoringMode, text: &str) -> Self {
        Self {
            caregiver_id: caregiver_id.into(),
            plan_id: None,
            subtask_name: None,
            mode,
            text: text.to_owned(),
            attachments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    pub settings: GatewaySettings,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Self { provider, settings: GatewaySettings::default() }
    }

    pub fn with_settings(provider: Arc<dyn ChatProvider>, settings: GatewaySettings) -> Self {
        Self { provider, settings }
    }

    pub fn provider(&self) -> &dyn ChatProvider {
        self.provider.as_ref()
    }

    fn ask(&self, template: TemplateId, messages: &[Message], trace: &mut CallTrace) -> Result<String, GatewayError> {
        trace.calls += 1;
        let reply = self.provider.complete(&ChatRequest::new(template, messages.to_vec()))?;
        tracing::debug!(%template, chars = reply.len(), "provider reply");
        Ok(reply)
    }

    pub fn decompose_prompt(&self, family: &FamilyContext, task: &LearningTask) -> Result<String, GatewayError> {
        let family_desc = family_desc(family);
        let child_desc = child_desc(&family.child);
        Ok(TemplateId::Decompose.template().render(&[
            ("task_name", &task.task_name),
            ("task_description", &task.description),
            ("family_desc", &family_desc),
            ("child_desc", &child_desc),
            ("format_instructions", DECOMPOSE_FORMAT.trim_end()),
        ])?)
    }

    /// The request `decompose_tasks` sends first for `task`; fixture
    /// generators use its hash to address canned replies.
    pub fn decompose_request(&self, family: &FamilyContext, task: &LearningTask) -> Result<ChatRequest, GatewayError> {
        Ok(ChatRequest::new(TemplateId::Decompose, vec![Message::user(self.decompose_prompt(family, task)?)]))
    }

    fn decompose_one(&self, family: &FamilyContext, task: &LearningTask) -> Result<(Vec<Subtask>, Vec<Message>, CallTrace), GatewayError> {
        let mut trace = CallTrace::default();
        let mut messages = vec![Message::user(self.decompose_prompt(family, task)?)];
        let reply = self.ask(TemplateId::Decompose, &messages, &mut trace)?;
        let (parsed, strategy) = parse_decomposition(family, task, &reply);
        trace.strategy = strategy;
        messages.push(Message::assistant(reply));
        match parsed {
            Ok(subtasks) => Ok((subtasks, messages, trace)),
            Err(problems) => {
                trace.repairs += 1;
                trace.notes.push(format!("repair requested: {}", describe(&problems).replace('\n', " ")));
                messages.push(Message::user(format!(
                    "Your reply cannot be accepted:\n{}\nReturn the corrected JSON only.",
                    describe(&problems)
                )));
                let reply = self.ask(TemplateId::Decompose, &messages, &mut trace)?;
                let (parsed, strategy) = parse_decomposition(family, task, &reply);
                trace.strategy = strategy;
                messages.push(Message::assistant(reply));
                parsed.map(|s| (s, messages, trace)).map_err(into_error)
            }
        }
    }

    /// One request per task, one structured repair per failing reply, and
    /// one more if some caregiver ends up owning nothing.
    pub fn decompose_tasks(&self, family: &FamilyContext, tasks: &[LearningTask]) -> Result<Decomposition, GatewayError> {
        if tasks.is_empty() {
            return Err(GatewayError::ConstraintViolation {
                rules: vec!["tasks_nonempty".into()],
                details: vec!["no tasks to decompose".into()],
            });
        }
        let mut per_task = Vec::new();
        for task in tasks {
            per_task.push(self.decompose_one(family, task)?);
        }
        let idle = |per_task: &[(Vec<Subtask>, Vec<Message>, CallTrace)]| -> Vec<String> {
            family
                .caregivers
                .iter()
                .filter(|c| !per_task.iter().flat_map(|p| &p.0).any(|s| s.owners.contains(&c.caregiver_id)))
                .map(|c| c.caregiver_id.as_str().to_owned())
                .collect()
        };
        let missing = idle(&per_task);
        if !missing.is_empty() {
            let (i, _) = per_task
                .iter()
                .enumerate()
                .max_by_key(|(i, p)| (p.0.len(), std::cmp::Reverse(*i)))
                .expect("tasks nonempty");
            let (_, messages, trace) = &mut per_task[i];
            trace.repairs += 1;
            trace.notes.push(format!("participation repair for {}", missing.join(", ")));
            messages.push(Message::user(format!(
                "Every family member must own at least one subtask; nobody assigned: {}. Return the corrected JSON only.",
                missing.join(", ")
            )));
            let reply = {
                let msgs = messages.clone();
                self.ask(TemplateId::Decompose, &msgs, trace)?
            };
            let (parsed, _) = parse_decomposition(family, &tasks[i], &reply);
            per_task[i].0 = parsed.map_err(into_error)?;
            let still = idle(&per_task);
            if !still.is_empty() {
                return Err(GatewayError::ConstraintViolation {
                    rules: vec!["every_member_participates".into()],
                    details: vec![format!("no subtask owned by {}", still.join(", "))],
                });
            }
        }
        let mut subtasks = Vec::new();
        let mut traces = Vec::new();
        for (task, (subs, _, trace)) in tasks.iter().zip(per_task) {
            subtasks.extend(subs);
            traces.push((task.task_name.clone(), trace));
        }
        Ok(Decomposition { subtasks, traces })
    }

    fn read_schedule(&self, req: &SchedulingRequest, original: &[Subtask], reply: &str, trace: &mut CallTrace) -> Result<Drafted, GatewayError> {
        let extracted = extract_json(reply).map_err(|e| GatewayError::Unparseable(e.to_string()))?;
        trace.strategy = Some(extracted.strategy);
        let value = match extracted.value {
            Value::Array(items) => {
                let mut obj = Map::new();
                obj.insert("subtasks".into(), Value::Array(items));
                Value::Object(obj)
            }
            other => other,
        };
        let options = ParseOptions::draft(&req.plan_id, &req.family.family_id);
        let parsed = parse_schedule_value(&value, &options).map_err(|e| GatewayError::Unparseable(e.to_string()))?;
        let (subtasks, notes) = adopt_slots(original, &parsed.schedule)?;
        trace.notes.extend(notes);
        if !parsed.schedule.extra.is_empty() {
            trace.notes.push(format!("dropped top-level field(s) {}", parsed.schedule.extra.keys().cloned().collect::<Vec<_>>().join(", ")));
        }
        let mut schedule = WeeklySchedule::new(req.plan_id.as_str(), req.family.family_id.as_str(), subtasks);
        schedule.summary = None;
        let violations = verify_schedule(req, &schedule);
        let conflicts = detect_conflicts(&req.family, &schedule);
        let advisories = homeplan_core::schedule_json::day_coverage_advisories(&schedule);
        Ok(Drafted { schedule, violations, conflicts, advisories, trace: trace.clone() })
    }

    /// The placement request `llm_schedule` sends; fixture generators use
    /// its hash to address canned replies.
    pub fn schedule_request(&self, req: &SchedulingRequest) -> Result<ChatRequest, GatewayError> {
        let list: Vec<Value> = req
            .subtasks
            .iter()
            .map(|st| {
                let mut v = serde_json::to_value(st).expect("subtask serializes");
                if let Value::Object(obj) = &mut v {
                    for k in ["day", "start", "end"] {
                        obj.remove(k);
                    }
                }
                v
            })
            .collect();
        let task_list = serde_json::to_string_pretty(&list).expect("task list serializes");
        let members = members_desc(&req.family);
        let prompt = TemplateId::Schedule.template().render(&[
            ("members", &members),
            ("format_instructions", SCHEDULE_FORMAT.trim_end()),
            ("task_assignment_dict", &task_list),
        ])?;
        Ok(ChatRequest::new(TemplateId::Schedule, vec![Message::user(prompt)]))
    }

    /// Asks the model to place `req.subtasks`. Content changes are errors;
    /// constraint violations are attached for the caller to act on.
    pub fn llm_schedule(&self, req: &SchedulingRequest) -> Result<Drafted, GatewayError> {
        let request = self.schedule_request(req)?;
        let mut trace = CallTrace::default();
        let reply = self.ask(TemplateId::Schedule, &request.messages, &mut trace)?;
        self.read_schedule(req, &req.subtasks, &reply, &mut trace)
    }

    /// Asks the model to fix slots. A schedule with nothing to fix is
    /// returned without a call.
    pub fn llm_repair(&self, req: &SchedulingRequest, schedule: &WeeklySchedule) -> Result<Drafted, GatewayError> {
        let conflicts = detect_conflicts(&req.family, schedule);
        let violations = verify_schedule(req, schedule);
        let mut trace = CallTrace::default();
        if conflicts.is_empty() && violations.is_empty() {
            trace.notes.push("nothing to repair".into());
            let advisories = homeplan_core::schedule_json::day_coverage_advisories(schedule);
            return Ok(Drafted { schedule: schedule.clone(), violations, conflicts, advisories, trace });
        }
        let members = members_desc(&req.family);
        let current = to_canonical_json(schedule);
        let prompt = TemplateId::ConflictFix
            .template()
            .render(&[("schedule_dict_all", current.trim_end()), ("members", &members)])?;
        let reply = self.ask(TemplateId::ConflictFix, &[Message::user(prompt)], &mut trace)?;
        let mut drafted = self.read_schedule(req, &schedule.subtasks, &reply, &mut trace)?;
        drafted.schedule.summary = schedule.summary.clone();
        Ok(drafted)
    }

    pub fn summarize_collaboration(&self, family: &FamilyContext, schedule: &WeeklySchedule) -> Result<(String, CallTrace), GatewayError> {
        let limit = self.settings.summary_limit;
        let members = members_desc(family);
        let mut plain = schedule.clone();
        plain.summary = None;
        let listing = to_canonical_json(&plain);
        let prompt = TemplateId::Summary.template().render(&[
            ("output_language", &self.settings.output_language),
            ("final_schedule", listing.trim_end()),
            ("members", &members),
        ])?;
        let mut trace = CallTrace::default();
        let mut messages = vec![Message::user(prompt)];
        let first = one_paragraph(&self.ask(TemplateId::Summary, &messages, &mut trace)?);
        if first.is_empty() {
            return Err(GatewayError::EmptySummary);
        }
        let n = first.chars().count();
        if n <= limit {
            return Ok((first, trace));
        }
        trace.repairs += 1;
        trace.notes.push(format!("summary had {n} characters; asked for a shorter one"));
        messages.push(Message::assistant(first.clone()));
        messages.push(Message::user(format!(
            "That reply has {n} characters. Rewrite it as one paragraph of at most {limit} characters."
        )));
        let second = one_paragraph(&self.ask(TemplateId::Summary, &messages, &mut trace)?);
        let base = if second.is_empty() { first } else { second };
        if base.chars().count() <= limit {
            return Ok((base, trace));
        }
        trace.notes.push(format!("truncated to {limit} characters"));
        Ok((truncate_at_sentence(&base, limit), trace))
    }

    fn exchange(&self, req: &TutoringRequest, response: String, now: Timestamp) -> TutoringExchange {
        let mut h = Sha256::new();
        for part in [req.caregiver_id.as_str(), req.mode.as_str(), &now.0.to_string(), &req.text, &response] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        for a in &req.attachments {
            h.update(a.sha256().as_bytes());
        }
        TutoringExchange {
            exchange_id: hex::encode(&h.finalize()[..8]),
            caregiver_id: req.caregiver_id.clone(),
            plan_id: req.plan_id.clone(),
            subtask_name: req.subtask_name.clone(),
            mode: req.mode,
            request: ExchangeRequest {
                text: req.text.clone(),
                attachments: req
                    .attachments
                    .iter()
                    .map(|a| AttachmentMeta { media_type: a.media_type.clone(), size: a.bytes.len(), sha256: a.sha256() })
                    .collect(),
            },
            response,
            timestamp: now,
        }
    }

    /// Dialogue turn; only the last `history_window` messages of history go
    /// out with the new question.
    pub fn chat_tutoring(&self, req: &TutoringRequest, history: &[Turn], now: Timestamp) -> Result<TutoringExchange, GatewayError> {
        if req.mode != TutoringMode::Dialogue || !req.attachments.is_empty() {
            return Err(GatewayError::WrongMode(req.mode));
        }
        if req.text.trim().is_empty() {
            return Err(GatewayError::EmptySource);
        }
        let mut messages = vec![Message::system(TemplateId::Dialogue.body().trim_end())];
        let skip = history.len().saturating_sub(self.settings.history_window);
        messages.extend(history[skip..].iter().map(|t| Message::text(t.role, t.text.clone())));
        messages.push(Message::user(req.text.clone()));
        let mut trace = CallTrace::default();
        let response = self.ask(TemplateId::Dialogue, &messages, &mut trace)?;
        Ok(self.exchange(req, response, now))
    }

    /// Forwards homework photos (and any typed answers) for checking.
    pub fn check_answers(&self, req: &TutoringRequest, now: Timestamp) -> Result<TutoringExchange, GatewayError> {
        if req.mode != TutoringMode::AnswerCheck {
            return Err(GatewayError::WrongMode(req.mode));
        }
        if req.attachments.is_empty() && req.text.trim().is_empty() {
            return Err(GatewayError::NoAttachment);
        }
        let cap = self.settings.max_attachment_bytes;
        if let Some(big) = req.attachments.iter().find(|a| a.bytes.len() > cap) {
            return Err(GatewayError::SizeLimit { size: big.bytes.len(), cap });
        }
        if !req.attachments.is_empty() && !self.provider.supports_vision() {
            return Err(GatewayError::Provider(ProviderError::NoVision));
        }
        let mut parts = Vec::new();
        if !req.text.trim().is_empty() {
            parts.push(Part::Text(req.text.clone()));
        }
        parts.extend(req.attachments.iter().cloned().map(Part::Image));
        let messages = vec![
            Message::system(TemplateId::AnswerCheck.body().trim_end()),
            Message { role: Role::User, parts },
        ];
        let mut trace = CallTrace::default();
        let response = self.ask(TemplateId::AnswerCheck, &messages, &mut trace)?;
        Ok(self.exchange(req, response, now))
    }

    fn chunked(&self, template: TemplateId, req: &TutoringRequest, now: Timestamp) -> Result<TutoringExchange, GatewayError> {
        if TemplateId::from(req.mode) != template || !req.attachments.is_empty() {
            return Err(GatewayError::WrongMode(req.mode));
        }
        if req.text.trim().is_empty() {
            return Err(GatewayError::EmptySource);
        }
        let mut trace = CallTrace::default();
        let mut replies = Vec::new();
        for chunk in chunk_text(req.text.trim(), self.settings.chunk_chars) {
            let messages = [Message::system(template.body().trim_end()), Message::user(chunk)];
            replies.push(self.ask(template, &messages, &mut trace)?.trim().to_owned());
        }
        Ok(self.exchange(req, replies.join("\n\n"), now))
    }

    pub fn generate_examples(&self, req: &TutoringRequest, now: Timestamp) -> Result<TutoringExchange, GatewayError> {
        self.chunked(TemplateId::TransferPractice, req, now)
    }

    pub fn explain_guidance(&self, req: &TutoringRequest, now: Timestamp) -> Result<TutoringExchange, GatewayError> {
        self.chunked(TemplateId::ExplainSupport, req, now)
    }

    /// Routes by mode.
    pub fn tutor(&self, req: &TutoringRequest, history: &[Turn], now: Timestamp) -> Result<TutoringExchange, GatewayError> {
        match req.mode {
            TutoringMode::Dialogue => self.chat_tutoring(req, history, now),
            TutoringMode::AnswerCheck => self.check_answers(req, now),
            TutoringMode::TransferPractice => self.generate_examples(req, now),
            TutoringMode::ExplainSupport => self.explain_guidance(req, now),
        }
    }
}
