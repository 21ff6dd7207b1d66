#[path = "../../core/tests/support/mod.rs"]
mod support;
mod common;

use std::path::Path;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use homeplan::fixtures::{FixtureSpec, write_fixtures};
use homeplan::llm::gateway::Gateway;
use homeplan::llm::provider::{ChatProvider, ChatRequest, ProviderError};
use homeplan::llm::stub::StubProvider;
use homeplan::llm::templates::TemplateId;
use homeplan::pipeline::{Pipeline, PipelineError, PlanInput, Policy};
use homeplan::default_detectors;
use homeplan_core::conflict::{ConflictKind, detect_conflicts};
use homeplan_core::scheduler::{SchedulingRequest, assign_and_schedule};
use homeplan_core::{LearningTask, Subject, Subtask, SubtaskStatus, WeeklySchedule, parse_schedule_json, to_canonical_json};
use proptest::prelude::*;

use common::{caregiver, family};

fn pipeline(stub: StubProvider) -> (Pipeline, Arc<StubProvider>) {
    let stub = Arc::new(stub);
    (Pipeline::new(Gateway::new(stub.clone()), default_detectors()), stub)
}

fn parents() -> homeplan_core::FamilyContext {
    family("fam", vec![caregiver("mother", &[Subject::English], ""), caregiver("father", &[Subject::Math], "")], false)
}

fn tasks() -> Vec<LearningTask> {
    vec![
        LearningTask::new("english_words", "learn ten new words", Subject::English).unwrap(),
        LearningTask::new("math_homework", "finish the worksheet", Subject::Math).unwrap(),
    ]
}

/// Subtasks carrying the owners the scheduler would pick, without slots.
fn requested() -> (Vec<Subtask>, WeeklySchedule) {
    let subs = vec![
        Subtask::new("english_words", 1, "child reads the words aloud", &["mother"]),
        Subtask::new("english_words", 2, "child spells the words", &["mother"]),
        Subtask::new("math_homework", 1, "child solves the first page", &["father"]),
        Subtask::new("math_homework", 2, "child checks the answers", &["father"]),
    ];
    let placed = assign_and_schedule(&SchedulingRequest::new("plan", parents(), tasks(), subs)).unwrap().schedule;
    let bare = placed.subtasks.iter().map(|s| Subtask { slot: None, ..s.clone() }).collect();
    (bare, placed)
}

fn input(policy: Policy, subtasks: Option<Vec<Subtask>>) -> PlanInput {
    PlanInput { plan_id: "plan".into(), family: parents(), tasks: tasks(), policy, subtasks }
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("HOMEPLAN_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted; rerun with HOMEPLAN_BLESS=1 if intended");
}

#[test]
fn deterministic_fixture_plan_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = write_fixtures(dir.path(), &FixtureSpec::default()).unwrap();
    let fx = fixtures.iter().find(|f| f.family.family_id.as_str() == "family-07").unwrap();
    let (p, stub) = pipeline(StubProvider::from_dir(&dir.path().join("stub")).unwrap());
    let input = PlanInput {
        plan_id: "family-07-set1".into(),
        family: fx.family.clone(),
        tasks: fx.task_sets[0].clone(),
        policy: Policy::DeterministicOnly,
        subtasks: None,
    };
    let out = p.generate_plan(&input).unwrap();
    assert_eq!(out.report.scores.iter().map(|s| s.score).collect::<Vec<_>>(), [3; 5]);
    assert!(out.unplaced.is_empty() && out.unresolved.is_empty());
    // one decomposition per task, nothing else
    assert_eq!(stub.calls(), input.tasks.len());
    golden("family-07-set1.json", &to_canonical_json(&out.schedule));

    let again = p.generate_plan(&input).unwrap();
    assert_eq!(to_canonical_json(&again.schedule), to_canonical_json(&out.schedule));
}

#[test]
fn supplied_subtasks_need_no_model() {
    let (subs, _) = requested();
    let (p, stub) = pipeline(StubProvider::new().with_outage(TemplateId::ALL));
    let out = p.generate_plan(&input(Policy::DeterministicOnly, Some(subs))).unwrap();
    assert_eq!(stub.calls(), 0);
    assert_eq!(out.schedule.subtasks.len(), 4);
    assert!(out.schedule.summary.as_deref().is_some_and(|s| !s.is_empty()));
}

#[test]
fn model_overlap_is_repaired_with_one_edit() {
    let (subs, placed) = requested();
    let mut clashing = placed.clone();
    let first = clashing.subtasks.iter().position(|s| s.is_owned_by("mother")).unwrap();
    let second = clashing.subtasks.iter().rposition(|s| s.is_owned_by("mother")).unwrap();
    assert_ne!(first, second);
    clashing.subtasks[second].slot = clashing.subtasks[first].slot;
    let before = detect_conflicts(&parents(), &clashing);
    assert_eq!(before.iter().filter(|c| c.kind != ConflictKind::OwnerUnavailable).count(), 1, "{before:?}");

    let stub = StubProvider::new()
        .with_default(TemplateId::Schedule, to_canonical_json(&clashing))
        .with_default(TemplateId::Summary, "Mother takes English, father takes math.");
    let (p, _) = pipeline(stub);
    let out = p.generate_plan(&input(Policy::LlmWithRepair, Some(subs))).unwrap();
    assert!(detect_conflicts(&parents(), &out.schedule).is_empty());
    assert!(out.unresolved.is_empty() && out.unplaced.is_empty());
    assert_eq!(out.provenance.entries("edit").count(), 1);
    let moved = out.provenance.entries("edit").next().unwrap();
    assert_eq!(moved.stage, "repair");
    // only the slot of one subtask changed
    for (a, b) in out.schedule.subtasks.iter().zip(&clashing.subtasks) {
        assert_eq!(common::without_slot(&serde_json::to_value(a).unwrap()), common::without_slot(&serde_json::to_value(b).unwrap()));
    }
}

#[test]
fn outage_falls_back_to_the_scheduler() {
    let (subs, _) = requested();
    let (p, stub) = pipeline(StubProvider::new().with_outage(TemplateId::ALL));
    let out = p.generate_plan(&input(Policy::LlmFirst, Some(subs.clone()))).unwrap();
    assert!(stub.calls() >= 2);
    let notes: Vec<_> = out.provenance.entries("fallback").map(|e| e.stage).collect();
    assert_eq!(notes, ["schedule", "summarize"]);
    assert!(detect_conflicts(&parents(), &out.schedule).is_empty());

    // the repair policy has no fallback for the draft
    let err = p.generate_plan(&input(Policy::LlmWithRepair, Some(subs))).unwrap_err();
    assert_eq!((err.stage(), err.code()), ("schedule", "provider_unreachable"));
    // and decomposition has none either
    let err = p.generate_plan(&input(Policy::DeterministicOnly, None)).unwrap_err();
    assert_eq!(err.stage(), "decompose");
}

#[test]
fn regeneration_carries_finished_work() {
    let (subs, _) = requested();
    let (p, _) = pipeline(StubProvider::new());
    let first = p.generate_plan(&input(Policy::DeterministicOnly, Some(subs.clone()))).unwrap();
    let mut previous = first.schedule.clone();
    previous.subtasks[0].status = SubtaskStatus::Done;
    let done = previous.subtasks[0].subtask_name.clone();
    let again = p.regenerate_plan(&previous, &input(Policy::DeterministicOnly, Some(subs))).unwrap();
    assert_eq!(again.schedule.subtask(&done).unwrap().status, SubtaskStatus::Done);
    assert_eq!(again.schedule.subtasks.iter().filter(|s| s.status == SubtaskStatus::Done).count(), 1);
    assert_eq!(again.provenance.entries("carried_over").count(), 1);
}

/// Blocks inside the first call until released.
struct Gate {
    entered: Mutex<Option<mpsc::Sender<()>>>,
    release: Mutex<mpsc::Receiver<()>>,
}

impl ChatProvider for Gate {
    fn complete(&self, _request: &ChatRequest) -> Result<String, ProviderError> {
        if let Some(tx) = self.entered.lock().unwrap().take() {
            tx.send(()).unwrap();
            self.release.lock().unwrap().recv().unwrap();
        }
        Err(ProviderError::Unreachable("gate".into()))
    }

    fn supports_vision(&self) -> bool {
        false
    }

    fn name(&self) -> &str {
        "gate"
    }
}

#[test]
fn one_generation_per_plan_at_a_time() {
    let (entered_tx, entered_rx) = mpsc::channel();
    let (release_tx, release_rx) = mpsc::channel();
    let gate = Gate { entered: Mutex::new(Some(entered_tx)), release: Mutex::new(release_rx) };
    let p = Arc::new(Pipeline::new(Gateway::new(Arc::new(gate)), default_detectors()));
    let busy = {
        let p = p.clone();
        std::thread::spawn(move || p.generate_plan(&input(Policy::DeterministicOnly, None)))
    };
    entered_rx.recv().unwrap();
    let (subs, _) = requested();
    let err = p.generate_plan(&input(Policy::DeterministicOnly, Some(subs.clone()))).unwrap_err();
    assert!(matches!(err, PipelineError::InFlight(ref id) if id.as_str() == "plan"));
    let other = PlanInput { plan_id: "other".into(), ..input(Policy::DeterministicOnly, Some(subs.clone())) };
    assert!(p.generate_plan(&other).is_ok());
    release_tx.send(()).unwrap();
    assert!(busy.join().unwrap().is_err());
    // the lock is released with the failed run
    assert!(p.generate_plan(&input(Policy::DeterministicOnly, Some(subs))).is_ok());
}

#[test]
fn bad_input_is_refused_before_any_call() {
    let (p, stub) = pipeline(StubProvider::new());
    let mut bad = input(Policy::LlmFirst, Some(vec![Subtask::new("piano", 1, "play", &["mother"])]));
    assert!(matches!(p.generate_plan(&bad).unwrap_err(), PipelineError::Input(_)));
    bad.subtasks = Some(vec![Subtask::new("english_words", 1, "read", &["uncle"])]);
    assert!(matches!(p.generate_plan(&bad).unwrap_err(), PipelineError::Input(_)));
    bad.subtasks = None;
    bad.tasks.push(bad.tasks[0].clone());
    assert!(matches!(p.generate_plan(&bad).unwrap_err(), PipelineError::Input(_)));
    assert_eq!(stub.calls(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn published_plans_parse_strictly(seed in any::<u64>(), caregivers in 2usize..=4, subtasks in 1usize..=10) {
        let req = support::random_request(seed, caregivers, subtasks);
        let (p, _) = pipeline(StubProvider::new());
        let input = PlanInput {
            plan_id: req.plan_id.clone(),
            family: req.family.clone(),
            tasks: req.tasks.clone(),
            policy: Policy::DeterministicOnly,
            subtasks: Some(req.subtasks.clone()),
        };
        let out = p.generate_plan(&input).unwrap();
        let text = to_canonical_json(&out.schedule);
        prop_assert_eq!(parse_schedule_json(&text).unwrap(), out.schedule.clone());
        prop_assert_eq!(out.schedule.subtasks.len() + out.unplaced.len(), req.subtasks.len());
        prop_assert!(out.report.scores.iter().all(|s| (1..=3).contains(&s.score)));
    }
}
