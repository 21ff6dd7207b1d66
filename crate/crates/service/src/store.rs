//! SQLite persistence: families with versioned caregiver profiles, plan
//! versions, an append-only event log per family, a materialised snapshot
//! of each plan's current state, and tutoring exchanges.
//!
//! Every write runs in one transaction under the connection lock, so
//! writes to a subtask are serialized. Callers that pass the subtask
//! version they last saw get a retriable conflict instead of a silent
//! overwrite when someone else wrote first.

use std::path::Path;
use std::sync::{Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use homeplan_core::conflict::{Conflict, ConflictKind, detect_conflicts};
use homeplan_core::evaluator::PlanQualityReport;
use homeplan_core::events::{EngagementSummary, EventBody, EventRecord, TutoringMode, compute_engagement};
use homeplan_core::{
    CaregiverId, CaregiverProfile, FamilyContext, FamilyId, HandoverEntry, LearningTask, PlanId, Subtask, SubtaskNote,
    SubtaskStatus, Timestamp, WeeklySchedule,
};
use rusqlite::{Connection, OptionalExtension, Transaction, params};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::llm::gateway::{Turn, TutoringExchange};
use crate::llm::provider::Role;
use crate::pipeline::{PlanOutput, Policy};

const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS families (
    family_id TEXT PRIMARY KEY,
    token_sha256 TEXT NOT NULL,
    doc TEXT NOT NULL,
    version INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS caregiver_versions (
    family_id TEXT NOT NULL,
    caregiver_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    doc TEXT NOT NULL,
    created_at INTEGER NOT NULL,
    PRIMARY KEY (family_id, caregiver_id, version)
);
CREATE TABLE IF NOT EXISTS plans (
    plan_id TEXT PRIMARY KEY,
    family_id TEXT NOT NULL,
    latest_version INTEGER NOT NULL,
    tasks TEXT NOT NULL,
    policy TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS plan_versions (
    plan_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    schedule TEXT NOT NULL,
    report TEXT NOT NULL,
    provenance TEXT NOT NULL,
    created_at INTEGER NOT NULL,
    PRIMARY KEY (plan_id, version)
);
CREATE TABLE IF NOT EXISTS events (
    event_id INTEGER PRIMARY KEY,
    family_id TEXT NOT NULL,
    actor TEXT NOT NULL,
    proxy TEXT,
    kind TEXT NOT NULL,
    payload TEXT NOT NULL,
    timestamp INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS events_by_family ON events (family_id, event_id);
CREATE TRIGGER IF NOT EXISTS events_no_update BEFORE UPDATE ON events
    BEGIN SELECT RAISE(ABORT, 'events are append-only'); END;
CREATE TRIGGER IF NOT EXISTS events_no_delete BEFORE DELETE ON events
    BEGIN SELECT RAISE(ABORT, 'events are append-only'); END;
CREATE TABLE IF NOT EXISTS snapshots (
    plan_id TEXT PRIMARY KEY,
    version INTEGER NOT NULL,
    schedule TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS subtask_versions (
    plan_id TEXT NOT NULL,
    subtask_name TEXT NOT NULL,
    version INTEGER NOT NULL,
    PRIMARY KEY (plan_id, subtask_name)
);
CREATE TABLE IF NOT EXISTS exchanges (
    exchange_id TEXT PRIMARY KEY,
    family_id TEXT NOT NULL,
    caregiver_id TEXT NOT NULL,
    subtask_name TEXT,
    mode TEXT NOT NULL,
    doc TEXT NOT NULL,
    timestamp INTEGER NOT NULL
);
"#;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },
    #[error("`{0}` already exists")]
    Duplicate(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("illegal status change: {0}")]
    IllegalTransition(String),
    #[error("`{0}` does not own this subtask")]
    FromNotOwner(String),
    #[error("`{0}` is not a caregiver of this family")]
    UnknownCaregiver(String),
    #[error("subtask changed since version {expected} (now {actual}); reload and retry")]
    VersionConflict { expected: u32, actual: u32 },
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("token does not grant access to `{0}`")]
    Forbidden(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::NotFound { .. } => "not_found",
            StoreError::Duplicate(_) => "duplicate_id",
            StoreError::Validation(_) => "validation_failed",
            StoreError::IllegalTransition(_) => "illegal_transition",
            StoreError::FromNotOwner(_) => "from_not_owner",
            StoreError::UnknownCaregiver(_) => "unknown_caregiver",
            StoreError::VersionConflict { .. } => "version_conflict",
            StoreError::Unauthorized => "unauthorized",
            StoreError::Forbidden(_) => "forbidden",
            StoreError::Storage(_) => "storage_error",
        }
    }
}

impl From<rusqlite::Error> for StoreError {
    fn from(e: rusqlite::Error) -> Self {
        StoreError::Storage(e.to_string())
    }
}

impl From<serde_json::Error> for StoreError {
    fn from(e: serde_json::Error) -> Self {
        StoreError::Storage(format!("stored document: {e}"))
    }
}

type Result<T> = std::result::Result<T, StoreError>;

fn not_found(what: &'static str, id: &str) -> StoreError {
    StoreError::NotFound { what, id: id.to_owned() }
}

fn token_hash(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

/// Who performs a write. `acting_as` records work done on another
/// caregiver's behalf; the event is attributed to them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Actor {
    pub caregiver_id: CaregiverId,
    pub acting_as: Option<CaregiverId>,
}

impl Actor {
    pub fn new(id: &str) -> Self {
        Self { caregiver_id: id.into(), acting_as: None }
    }

    pub fn effective(&self) -> &CaregiverId {
        self.acting_as.as_ref().unwrap_or(&self.caregiver_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyRecord {
    pub family: FamilyContext,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRecord {
    pub plan_id: PlanId,
    pub family_id: FamilyId,
    pub version: u32,
    pub policy: Policy,
    pub tasks: Vec<LearningTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubtaskUpdate {
    pub subtask: Subtask,
    pub version: u32,
    /// Conflicts the write introduced; reported, not enforced.
    pub warnings: Vec<Conflict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timesheet {
    pub plan_id: PlanId,
    pub version: u32,
    pub schedule: WeeklySchedule,
    pub subtask_versions: std::collections::BTreeMap<String, u32>,
}

/// Inclusive-exclusive time window over event timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Window {
    pub since: Option<Timestamp>,
    pub until: Option<Timestamp>,
}

impl Window {
    fn contains(&self, t: Timestamp) -> bool {
        self.since.is_none_or(|s| t >= s) && self.until.is_none_or(|u| t < u)
    }
}

type Clock = Box<dyn Fn() -> Timestamp + Send + Sync>;

pub struct Store {
    conn: Mutex<Connection>,
    clock: Clock,
}

fn system_clock() -> Timestamp {
    let ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    Timestamp(i64::try_from(ms).unwrap_or(i64::MAX))
}

fn kind_of(body: &EventBody) -> &'static str {
    match body {
        EventBody::PlanGenerated { .. } => "plan_generated",
        EventBody::SubtaskStatusChanged { .. } => "subtask_status_changed",
        EventBody::Handover { .. } => "handover",
        EventBody::NoteAdded { .. } => "note_added",
        EventBody::TutoringUsed { .. } => "tutoring_used",
    }
}

impl Store {
    pub fn open(path: &Path) -> Result<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.execute_batch("PRAGMA journal_mode = WAL; PRAGMA foreign_keys = ON;")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn: Mutex::new(conn), clock: Box::new(system_clock) })
    }

    pub fn with_clock(mut self, clock: impl Fn() -> Timestamp + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn now(&self) -> Timestamp {
        (self.clock)()
    }

    fn lock(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    // ---- families -------------------------------------------------------

    /// Stores a new family and returns its bearer token. Only the token's
    /// hash is kept.
    pub fn create_family(&self, family: &FamilyContext) -> Result<String> {
        family.validate().map_err(|e| StoreError::Validation(e.to_string()))?;
        if family.family_id.as_str().trim().is_empty() {
            return Err(StoreError::Validation("family_id must not be empty".into()));
        }
        let token = hex::encode(rand::random::<[u8; 32]>());
        let now = (self.clock)();
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let exists: Option<i64> =
            tx.query_row("SELECT 1 FROM families WHERE family_id = ?1", [family.family_id.as_str()], |r| r.get(0)).optional()?;
        if exists.is_some() {
            return Err(StoreError::Duplicate(family.family_id.to_string()));
        }
        tx.execute(
            "INSERT INTO families (family_id, token_sha256, doc, version) VALUES (?1, ?2, ?3, 1)",
            params![family.family_id.as_str(), token_hash(&token), serde_json::to_string(family)?],
        )?;
        for c in &family.caregivers {
            tx.execute(
                "INSERT INTO caregiver_versions (family_id, caregiver_id, version, doc, created_at) VALUES (?1, ?2, 1, ?3, ?4)",
                params![family.family_id.as_str(), c.caregiver_id.as_str(), serde_json::to_string(c)?, now.0],
            )?;
        }
        tx.commit()?;
        Ok(token)
    }

    pub fn authorize(&self, family_id: &str, token: &str) -> Result<()> {
        let stored: Option<String> = self
            .lock()
            .query_row("SELECT token_sha256 FROM families WHERE family_id = ?1", [family_id], |r| r.get(0))
            .optional()?;
        match stored {
            None => Err(not_found("family", family_id)),
            Some(h) if h == token_hash(token) => Ok(()),
            Some(_) => Err(StoreError::Forbidden(family_id.to_owned())),
        }
    }

    pub fn get_family(&self, family_id: &str) -> Result<FamilyRecord> {
        let conn = self.lock();
        load_family(&conn, family_id)
    }

    /// Replaces (or adds) one caregiver profile; every change is kept as a
    /// new profile version.
    pub fn update_caregiver(&self, family_id: &str, profile: &CaregiverProfile) -> Result<u32> {
        let now = (self.clock)();
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let mut record = load_family(&tx, family_id)?;
        match record.family.caregivers.iter_mut().find(|c| c.caregiver_id == profile.caregiver_id) {
            Some(c) => *c = profile.clone(),
            None => record.family.caregivers.push(profile.clone()),
        }
        record.family.validate().map_err(|e| StoreError::Validation(e.to_string()))?;
        let version: u32 = tx.query_row(
            "SELECT COALESCE(MAX(version), 0) + 1 FROM caregiver_versions WHERE family_id = ?1 AND caregiver_id = ?2",
            params![family_id, profile.caregiver_id.as_str()],
            |r| r.get(0),
        )?;
        tx.execute(
            "INSERT INTO caregiver_versions (family_id, caregiver_id, version, doc, created_at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![family_id, profile.caregiver_id.as_str(), version, serde_json::to_string(profile)?, now.0],
        )?;
        tx.execute(
            "UPDATE families SET doc = ?2, version = version + 1 WHERE family_id = ?1",
            params![family_id, serde_json::to_string(&record.family)?],
        )?;
        tx.commit()?;
        Ok(version)
    }

    pub fn caregiver_history(&self, family_id: &str, caregiver_id: &str) -> Result<Vec<(u32, CaregiverProfile)>> {
        let conn = self.lock();
        let mut stmt = conn.prepare(
            "SELECT version, doc FROM caregiver_versions WHERE family_id = ?1 AND caregiver_id = ?2 ORDER BY version",
        )?;
        let rows = stmt.query_map(params![family_id, caregiver_id], |r| Ok((r.get::<_, u32>(0)?, r.get::<_, String>(1)?)))?;
        let mut out = Vec::new();
        for row in rows {
            let (v, doc) = row?;
            out.push((v, serde_json::from_str(&doc)?));
        }
        Ok(out)
    }

    // ---- plans ----------------------------------------------------------

    pub fn plan_exists(&self, plan_id: &str) -> Result<bool> {
        let found: Option<i64> =
            self.lock().query_row("SELECT 1 FROM plans WHERE plan_id = ?1", [plan_id], |r| r.get(0)).optional()?;
        Ok(found.is_some())
    }

    /// Appends a plan version (1 for a new plan) and its `plan_generated`
    /// event; the snapshot restarts from the new schedule.
    pub fn save_plan(
        &self,
        family_id: &str,
        actor: &Actor,
        tasks: &[LearningTask],
        policy: Policy,
        output: &PlanOutput,
    ) -> Result<u32> {
        let plan_id = output.schedule.plan_id.clone();
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        load_family(&tx, family_id)?;
        let existing: Option<(String, u32)> = tx
            .query_row("SELECT family_id, latest_version FROM plans WHERE plan_id = ?1", [plan_id.as_str()], |r| {
                Ok((r.get(0)?, r.get(1)?))
            })
            .optional()?;
        let version = match existing {
            Some((owner, _)) if owner != family_id => return Err(StoreError::Forbidden(plan_id.to_string())),
            Some((_, v)) => v + 1,
            None => 1,
        };
        let tasks_json = serde_json::to_string(tasks)?;
        tx.execute(
            "INSERT INTO plans (plan_id, family_id, latest_version, tasks, policy) VALUES (?1, ?2, ?3, ?4, ?5)
             ON CONFLICT(plan_id) DO UPDATE SET latest_version = ?3, tasks = ?4, policy = ?5",
            params![plan_id.as_str(), family_id, version, tasks_json, policy.as_str()],
        )?;
        let event = append_event(
            &tx,
            &(self.clock)(),
            family_id,
            actor,
            EventBody::PlanGenerated { plan_id: plan_id.clone(), version, schedule: output.schedule.clone() },
        )?;
        tx.execute(
            "INSERT INTO plan_versions (plan_id, version, schedule, report, provenance, created_at) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                plan_id.as_str(),
                version,
                serde_json::to_string(&output.schedule)?,
                serde_json::to_string(&output.report)?,
                output.provenance.to_json_lines(),
                event.timestamp.0
            ],
        )?;
        tx.execute(
            "INSERT INTO snapshots (plan_id, version, schedule) VALUES (?1, ?2, ?3)
             ON CONFLICT(plan_id) DO UPDATE SET version = ?2, schedule = ?3",
            params![plan_id.as_str(), version, serde_json::to_string(&output.schedule)?],
        )?;
        tx.execute("DELETE FROM subtask_versions WHERE plan_id = ?1", [plan_id.as_str()])?;
        for st in &output.schedule.subtasks {
            tx.execute(
                "INSERT INTO subtask_versions (plan_id, subtask_name, version) VALUES (?1, ?2, 1)",
                params![plan_id.as_str(), st.subtask_name],
            )?;
        }
        tx.commit()?;
        Ok(version)
    }

    pub fn plan(&self, plan_id: &str) -> Result<PlanRecord> {
        let conn = self.lock();
        let row: Option<(String, u32, String, String)> = conn
            .query_row("SELECT family_id, latest_version, tasks, policy FROM plans WHERE plan_id = ?1", [plan_id], |r| {
                Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?))
            })
            .optional()?;
        let (family_id, version, tasks, policy) = row.ok_or_else(|| not_found("plan", plan_id))?;
        Ok(PlanRecord {
            plan_id: plan_id.into(),
            family_id: family_id.into(),
            version,
            policy: Policy::parse(&policy).ok_or_else(|| StoreError::Storage(format!("unknown policy `{policy}`")))?,
            tasks: serde_json::from_str(&tasks)?,
        })
    }

    pub fn plan_version(&self, plan_id: &str, version: u32) -> Result<WeeklySchedule> {
        let doc: Option<String> = self
            .lock()
            .query_row("SELECT schedule FROM plan_versions WHERE plan_id = ?1 AND version = ?2", params![plan_id, version], |r| {
                r.get(0)
            })
            .optional()?;
        Ok(serde_json::from_str(&doc.ok_or_else(|| not_found("plan version", &format!("{plan_id}@{version}")))?)?)
    }

    pub fn provenance(&self, plan_id: &str, version: u32) -> Result<String> {
        self.lock()
            .query_row("SELECT provenance FROM plan_versions WHERE plan_id = ?1 AND version = ?2", params![plan_id, version], |r| {
                r.get(0)
            })
            .optional()?
            .ok_or_else(|| not_found("plan version", &format!("{plan_id}@{version}")))
    }

    pub fn report(&self, plan_id: &str) -> Result<PlanQualityReport> {
        let doc: Option<String> = self
            .lock()
            .query_row(
                "SELECT v.report FROM plan_versions v JOIN plans p ON p.plan_id = v.plan_id AND p.latest_version = v.version
                 WHERE p.plan_id = ?1",
                [plan_id],
                |r| r.get(0),
            )
            .optional()?;
        Ok(serde_json::from_str(&doc.ok_or_else(|| not_found("plan", plan_id))?)?)
    }

    /// Current state of the plan as maintained by the write path.
    pub fn snapshot(&self, plan_id: &str) -> Result<WeeklySchedule> {
        let conn = self.lock();
        load_snapshot(&conn, plan_id).map(|(_, s)| s)
    }

    pub fn timesheet(&self, plan_id: &str) -> Result<Timesheet> {
        let conn = self.lock();
        let (version, mut schedule) = load_snapshot(&conn, plan_id)?;
        schedule.subtasks.sort_by(|a, b| (a.slot, &a.subtask_name).cmp(&(b.slot, &b.subtask_name)));
        let mut stmt = conn.prepare("SELECT subtask_name, version FROM subtask_versions WHERE plan_id = ?1")?;
        let subtask_versions = stmt
            .query_map([plan_id], |r| Ok((r.get::<_, String>(0)?, r.get::<_, u32>(1)?)))?
            .collect::<std::result::Result<_, _>>()?;
        Ok(Timesheet { plan_id: plan_id.into(), version, schedule, subtask_versions })
    }

    // ---- subtask writes -------------------------------------------------

    fn write_subtask(
        &self,
        plan_id: &str,
        subtask_name: &str,
        actor: &Actor,
        expected_version: Option<u32>,
        change: impl FnOnce(&FamilyContext, &mut Subtask, Timestamp) -> Result<EventBody>,
    ) -> Result<SubtaskUpdate> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let family_id: String = tx
            .query_row("SELECT family_id FROM plans WHERE plan_id = ?1", [plan_id], |r| r.get(0))
            .optional()?
            .ok_or_else(|| not_found("plan", plan_id))?;
        let family = load_family(&tx, &family_id)?.family;
        for id in std::iter::once(&actor.caregiver_id).chain(actor.acting_as.as_ref()) {
            if family.caregiver(id.as_str()).is_none() {
                return Err(StoreError::UnknownCaregiver(id.to_string()));
            }
        }
        let (plan_version, mut schedule) = load_snapshot(&tx, plan_id)?;
        let current: u32 = tx
            .query_row(
                "SELECT version FROM subtask_versions WHERE plan_id = ?1 AND subtask_name = ?2",
                params![plan_id, subtask_name],
                |r| r.get(0),
            )
            .optional()?
            .ok_or_else(|| not_found("subtask", subtask_name))?;
        if let Some(expected) = expected_version {
            if expected != current {
                return Err(StoreError::VersionConflict { expected, actual: current });
            }
        }
        let before = detect_conflicts(&family, &schedule);
        let now = next_timestamp(&tx, &family_id, (self.clock)())?;
        let st = schedule.subtask_mut(subtask_name).ok_or_else(|| not_found("subtask", subtask_name))?;
        let body = change(&family, st, now)?;
        let subtask = st.clone();
        let warnings: Vec<Conflict> = detect_conflicts(&family, &schedule)
            .into_iter()
            .filter(|c| c.kind == ConflictKind::OwnerUnavailable && c.subtasks.iter().any(|n| n == subtask_name))
            .filter(|c| !before.contains(c))
            .collect();
        append_event(&tx, &now, &family_id, actor, body)?;
        tx.execute(
            "UPDATE snapshots SET schedule = ?2 WHERE plan_id = ?1 AND version = ?3",
            params![plan_id, serde_json::to_string(&schedule)?, plan_version],
        )?;
        tx.execute(
            "UPDATE subtask_versions SET version = version + 1 WHERE plan_id = ?1 AND subtask_name = ?2",
            params![plan_id, subtask_name],
        )?;
        tx.commit()?;
        Ok(SubtaskUpdate { subtask, version: current + 1, warnings })
    }

    pub fn set_status(
        &self,
        plan_id: &str,
        subtask_name: &str,
        actor: &Actor,
        to: SubtaskStatus,
        expected_version: Option<u32>,
    ) -> Result<SubtaskUpdate> {
        let plan = PlanId::from(plan_id);
        self.write_subtask(plan_id, subtask_name, actor, expected_version, |_, st, _| {
            let from = st.status;
            if !from.can_transition_to(to) {
                return Err(StoreError::IllegalTransition(format!("{from} -> {to}")));
            }
            st.status = to;
            Ok(EventBody::SubtaskStatusChanged { plan_id: plan, subtask_name: st.subtask_name.clone(), from, to })
        })
    }

    /// Moves ownership from `from` to `to`. Landing the subtask on someone
    /// who is unavailable at its slot succeeds with a warning.
    pub fn handover(
        &self,
        plan_id: &str,
        subtask_name: &str,
        actor: &Actor,
        from: &str,
        to: &str,
        expected_version: Option<u32>,
    ) -> Result<SubtaskUpdate> {
        let plan = PlanId::from(plan_id);
        self.write_subtask(plan_id, subtask_name, actor, expected_version, |family, st, now| {
            if family.caregiver(to).is_none() {
                return Err(StoreError::UnknownCaregiver(to.to_owned()));
            }
            let Some(pos) = st.owners.iter().position(|o| o.as_str() == from) else {
                return Err(StoreError::FromNotOwner(from.to_owned()));
            };
            st.owners.remove(pos);
            if !st.is_owned_by(to) {
                st.owners.push(to.into());
            }
            st.handover_log.push(HandoverEntry { from: from.into(), to: to.into(), timestamp: now });
            Ok(EventBody::Handover { plan_id: plan, subtask_name: st.subtask_name.clone(), from: from.into(), to: to.into() })
        })
    }

    pub fn add_note(
        &self,
        plan_id: &str,
        subtask_name: &str,
        actor: &Actor,
        text: &str,
        expected_version: Option<u32>,
    ) -> Result<SubtaskUpdate> {
        if text.trim().is_empty() {
            return Err(StoreError::Validation("note text is empty".into()));
        }
        let plan = PlanId::from(plan_id);
        let author = actor.effective().clone();
        self.write_subtask(plan_id, subtask_name, actor, expected_version, |_, st, now| {
            st.notes.push(SubtaskNote { author, text: text.to_owned(), timestamp: now });
            Ok(EventBody::NoteAdded { plan_id: plan, subtask_name: st.subtask_name.clone(), text: text.to_owned() })
        })
    }

    // ---- tutoring -------------------------------------------------------

    pub fn record_tutoring(&self, family_id: &str, actor: &Actor, exchange: &TutoringExchange) -> Result<()> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let family = load_family(&tx, family_id)?.family;
        for id in std::iter::once(&actor.caregiver_id).chain(actor.acting_as.as_ref()) {
            if family.caregiver(id.as_str()).is_none() {
                return Err(StoreError::UnknownCaregiver(id.to_string()));
            }
        }
        let now = next_timestamp(&tx, family_id, exchange.timestamp)?;
        tx.execute(
            "INSERT INTO exchanges (exchange_id, family_id, caregiver_id, subtask_name, mode, doc, timestamp)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                exchange.exchange_id,
                family_id,
                exchange.caregiver_id.as_str(),
                exchange.subtask_name,
                exchange.mode.as_str(),
                serde_json::to_string(exchange)?,
                now.0
            ],
        )?;
        append_event(
            &tx,
            &now,
            family_id,
            actor,
            EventBody::TutoringUsed {
                mode: exchange.mode,
                plan_id: exchange.plan_id.clone(),
                subtask_name: exchange.subtask_name.clone(),
            },
        )?;
        tx.commit()?;
        Ok(())
    }

    /// Earlier dialogue turns of one caregiver about one subtask, oldest
    /// first.
    pub fn dialogue_history(&self, family_id: &str, caregiver_id: &str, subtask_name: Option<&str>) -> Result<Vec<Turn>> {
        let conn = self.lock();
        let mut stmt = conn.prepare(
            "SELECT doc FROM exchanges WHERE family_id = ?1 AND caregiver_id = ?2 AND mode = ?3
             AND subtask_name IS ?4 ORDER BY timestamp, rowid",
        )?;
        let docs = stmt
            .query_map(params![family_id, caregiver_id, TutoringMode::Dialogue.as_str(), subtask_name], |r| r.get::<_, String>(0))?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut turns = Vec::new();
        for doc in docs {
            let v: serde_json::Value = serde_json::from_str(&doc)?;
            let question = v.pointer("/request/text").and_then(|t| t.as_str()).unwrap_or_default();
            let answer = v.get("response").and_then(|t| t.as_str()).unwrap_or_default();
            turns.push(Turn { role: Role::User, text: question.to_owned() });
            turns.push(Turn { role: Role::Assistant, text: answer.to_owned() });
        }
        Ok(turns)
    }

    // ---- events ---------------------------------------------------------

    pub fn events(&self, family_id: &str) -> Result<Vec<EventRecord>> {
        let conn = self.lock();
        let mut stmt = conn.prepare(
            "SELECT event_id, actor, kind, payload, timestamp FROM events WHERE family_id = ?1 ORDER BY event_id",
        )?;
        let rows = stmt.query_map([family_id], |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, String>(3)?, r.get::<_, i64>(4)?))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (id, actor, kind, payload, ts) = row?;
            let body: EventBody = serde_json::from_value(serde_json::json!({
                "kind": kind,
                "payload": serde_json::from_str::<serde_json::Value>(&payload)?,
            }))?;
            out.push(EventRecord {
                event_id: id as u64,
                family_id: family_id.into(),
                actor: actor.into(),
                body,
                timestamp: Timestamp(ts),
            });
        }
        Ok(out)
    }

    /// Engagement over the family's log. Plan and handover events before
    /// the window still count as context; status, note and tutoring events
    /// only count inside it.
    pub fn engagement(&self, family_id: &str, window: Window) -> Result<EngagementSummary> {
        load_family(&self.lock(), family_id)?;
        let events: Vec<EventRecord> = self
            .events(family_id)?
            .into_iter()
            .filter(|e| match e.body {
                EventBody::PlanGenerated { .. } | EventBody::Handover { .. } => window.until.is_none_or(|u| e.timestamp < u),
                _ => window.contains(e.timestamp),
            })
            .collect();
        compute_engagement(&events).map_err(|e| StoreError::Storage(format!("event log does not replay: {e}")))
    }
}

fn load_family(conn: &Connection, family_id: &str) -> Result<FamilyRecord> {
    let row: Option<(String, u32)> = conn
        .query_row("SELECT doc, version FROM families WHERE family_id = ?1", [family_id], |r| Ok((r.get(0)?, r.get(1)?)))
        .optional()?;
    let (doc, version) = row.ok_or_else(|| not_found("family", family_id))?;
    Ok(FamilyRecord { family: serde_json::from_str(&doc)?, version })
}

fn load_snapshot(conn: &Connection, plan_id: &str) -> Result<(u32, WeeklySchedule)> {
    let row: Option<(u32, String)> = conn
        .query_row("SELECT version, schedule FROM snapshots WHERE plan_id = ?1", [plan_id], |r| Ok((r.get(0)?, r.get(1)?)))
        .optional()?;
    let (version, doc) = row.ok_or_else(|| not_found("plan", plan_id))?;
    Ok((version, serde_json::from_str(&doc)?))
}

/// Timestamps never go backwards within a family's stream.
fn next_timestamp(tx: &Transaction<'_>, family_id: &str, now: Timestamp) -> Result<Timestamp> {
    let last: Option<i64> =
        tx.query_row("SELECT MAX(timestamp) FROM events WHERE family_id = ?1", [family_id], |r| r.get(0))?;
    Ok(Timestamp(last.map_or(now.0, |l| l.max(now.0))))
}

fn append_event(tx: &Transaction<'_>, now: &Timestamp, family_id: &str, actor: &Actor, body: EventBody) -> Result<EventRecord> {
    let ts = next_timestamp(tx, family_id, *now)?;
    let kind = kind_of(&body);
    let payload = match serde_json::to_value(&body)? {
        serde_json::Value::Object(mut m) => m.remove("payload").unwrap_or_default(),
        _ => unreachable!("event bodies serialize as objects"),
    };
    let proxy = actor.acting_as.as_ref().map(|_| actor.caregiver_id.as_str());
    tx.execute(
        "INSERT INTO events (family_id, actor, proxy, kind, payload, timestamp) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        params![family_id, actor.effective().as_str(), proxy, kind, serde_json::to_string(&payload)?, ts.0],
    )?;
    Ok(EventRecord {
        event_id: tx.last_insert_rowid() as u64,
        family_id: family_id.into(),
        actor: actor.effective().clone(),
        body,
        timestamp: ts,
    })
}
