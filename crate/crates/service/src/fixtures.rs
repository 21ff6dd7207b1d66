//! Seeded family and task-set fixtures, plus canned model replies for
//! running them offline.
//!
//! Layout written by [`write_fixtures`]:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/families/<family_id>.json   {"family": .., "task_sets": [[..], ..]}
//! <dir>/stub/decompose/<hash>.txt
//! <dir>/stub/schedule/<hash>.txt
//! <dir>/stub/summary/default.txt
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use homeplan_core::scheduler::{SchedulingRequest, assign_and_schedule};
use homeplan_core::time::{AvailabilityWindow, DayClass, TimeOfDay};
use homeplan_core::{CaregiverProfile, ChildProfile, FamilyContext, LearningTask, Subject, TaskClass};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use crate::llm::gateway::Gateway;
use crate::llm::stub::StubProvider;
use crate::llm::templates::TemplateId;
use crate::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub families: usize,
    pub caregivers_min: usize,
    pub caregivers_max: usize,
    pub task_sets: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { seed: 42, families: 10, caregivers_min: 2, caregivers_max: 4, task_sets: 3 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("caregiver range {0}..={1} must lie within 2..=4")]
    CaregiverRange(usize, usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FixtureError + '_ {
    move |source| FixtureError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub family: FamilyContext,
    pub task_sets: Vec<Vec<LearningTask>>,
}

/// The four need categories; each task set takes one task from each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Need {
    AcademicConsolidation,
    PracticeRoutine,
    HabitFormation,
    ReflectiveLearning,
}

impl Need {
    pub const ALL: [Need; 4] =
        [Need::AcademicConsolidation, Need::PracticeRoutine, Need::HabitFormation, Need::ReflectiveLearning];
}

struct TaskSeed {
    name: &'static str,
    description: &'static str,
    subject: Subject,
    class: TaskClass,
}

const fn seed(name: &'static str, description: &'static str, subject: Subject, class: TaskClass) -> TaskSeed {
    TaskSeed { name, description, subject, class }
}

const ACADEMIC: &[TaskSeed] = &[
    seed("math_worksheet", "finish the unit 3 fraction worksheet and correct mistakes", Subject::Math, TaskClass::HomeworkQa),
    seed("chinese_reading", "read the textbook passage and answer the questions after it", Subject::Chinese, TaskClass::HomeworkQa),
    seed("science_questions", "answer the plant growth questions from class", Subject::Science, TaskClass::HomeworkQa),
    seed("math_word_problems", "solve the ten word problems on speed and distance", Subject::Math, TaskClass::HomeworkQa),
    seed("english_grammar", "complete the past tense exercises in the workbook", Subject::English, TaskClass::HomeworkQa),
];

const PRACTICE: &[TaskSeed] = &[
    seed("english_words", "memorize the 20 new vocabulary words for friday dictation", Subject::English, TaskClass::PracticeMemorization),
    seed("poem_recitation", "recite the two ancient poems from this unit", Subject::Chinese, TaskClass::PracticeMemorization),
    seed("piano_practice", "practice the new piano piece with the metronome", Subject::Music, TaskClass::PhysicalMusic),
    seed("rope_skipping", "rope skipping practice for the PE test", Subject::Physical, TaskClass::PhysicalMusic),
    seed("music_song", "sing the new class song with correct rhythm", Subject::Music, TaskClass::PhysicalMusic),
];

const HABIT: &[TaskSeed] = &[
    seed("tidy_desk", "tidy the desk and put books back on the shelf", Subject::Habits, TaskClass::HabitState),
    seed("pack_bag", "pack the school bag for the next day by yourself", Subject::Habits, TaskClass::HabitState),
    seed("bedtime_routine", "follow the bedtime routine: wash, lay out clothes, lights out", Subject::Habits, TaskClass::HabitState),
    seed("screen_time", "keep tablet time under thirty minutes a day", Subject::Habits, TaskClass::HabitState),
];

const REFLECTIVE: &[TaskSeed] = &[
    seed("weekly_diary", "write a short diary about the best moment of the week", Subject::Chinese, TaskClass::Reflective),
    seed("mistake_review", "reflect on the mistakes in this week's tests", Subject::Math, TaskClass::Reflective),
    seed("reading_journal", "keep a reading journal for the class novel", Subject::English, TaskClass::Reflective),
];

fn pool(need: Need) -> &'static [TaskSeed] {
    match need {
        Need::AcademicConsolidation => ACADEMIC,
        Need::PracticeRoutine => PRACTICE,
        Need::HabitFormation => HABIT,
        Need::ReflectiveLearning => REFLECTIVE,
    }
}

const ROLES: [&str; 5] = ["mother", "father", "grandmother", "grandfather", "aunt"];
const SUBJECTS: [Subject; 6] = [Subject::Math, Subject::Chinese, Subject::English, Subject::Science, Subject::Music, Subject::Physical];

fn window(class: DayClass, start: u16, end: u16) -> AvailabilityWindow {
    AvailabilityWindow::new(class, TimeOfDay::hm(start, 0), TimeOfDay::hm(end, 0)).expect("fixture window is valid")
}

fn caregiver(rng: &mut ChaCha8Rng, role: &str) -> CaregiverProfile {
    let elder = role.starts_with("grand");
    let mut availability = Vec::new();
    if elder {
        let start = rng.random_range(8..=10u16);
        availability.push(window(DayClass::Weekday, start, start + 2));
        let start = rng.random_range(15..=16u16);
        availability.push(window(DayClass::Weekday, start, start + 2));
    } else {
        let start = rng.random_range(18..=19u16);
        availability.push(window(DayClass::Weekday, start, start + rng.random_range(2..=3)));
    }
    let start = rng.random_range(9..=14u16);
    availability.push(window(DayClass::Weekend, start, start + rng.random_range(2..=4)));

    let expertise = if elder && rng.random_bool(0.5) {
        BTreeSet::from([Subject::Habits])
    } else {
        let k = rng.random_range(1..=2);
        SUBJECTS.sample(rng, k).copied().collect()
    };
    let notes = if elder && rng.random_bool(0.4) {
        "prefers monitoring only, checking task completion".to_owned()
    } else {
        String::new()
    };
    CaregiverProfile { caregiver_id: role.into(), role_label: role.into(), expertise_tags: expertise, availability, notes }
}

fn family(rng: &mut ChaCha8Rng, index: usize, spec: &FixtureSpec) -> FamilyContext {
    let n = rng.random_range(spec.caregivers_min..=spec.caregivers_max);
    let mut roles = vec!["mother", "father"];
    let mut rest: Vec<&str> = ROLES[2..].to_vec();
    rest.shuffle(rng);
    roles.extend(rest);
    roles.truncate(n);
    let age = rng.random_range(7..=11u8);
    FamilyContext {
        family_id: format!("family-{:02}", index + 1).as_str().into(),
        caregivers: roles.iter().map(|r| caregiver(rng, r)).collect(),
        child: ChildProfile {
            child_id: "child".into(),
            age,
            grade_level: age - 5,
            characteristics: ["curious but easily distracted", "shy, reads well", "energetic, likes music", "careful and slow"]
                .choose(rng)
                .copied()
                .unwrap_or_default()
                .to_owned(),
        },
        independence_required: rng.random_bool(0.3),
    }
}

fn task_set(rng: &mut ChaCha8Rng) -> Vec<LearningTask> {
    Need::ALL
        .iter()
        .map(|&need| {
            let s = pool(need).choose(rng).expect("pools are nonempty");
            LearningTask::with_class(s.name, s.description, s.subject, s.class).expect("fixture task names are valid")
        })
        .collect()
}

pub fn generate(spec: &FixtureSpec) -> Result<Vec<Fixture>, FixtureError> {
    if spec.caregivers_min < 2 || spec.caregivers_max > 4 || spec.caregivers_min > spec.caregivers_max {
        return Err(FixtureError::CaregiverRange(spec.caregivers_min, spec.caregivers_max));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.families)
        .map(|i| {
            let family = family(&mut rng, i, spec);
            let task_sets = (0..spec.task_sets).map(|_| task_set(&mut rng)).collect();
            Fixture { family, task_sets }
        })
        .collect())
}

fn subtask_count(class: TaskClass) -> usize {
    match class {
        TaskClass::PracticeMemorization => 3,
        TaskClass::HomeworkQa | TaskClass::PhysicalMusic => 2,
        TaskClass::HabitState | TaskClass::Reflective => 1,
    }
}

fn step_text(task: &LearningTask, k: usize, of: usize) -> String {
    let verb = match task.task_class {
        TaskClass::PracticeMemorization => ["read and repeat", "recite", "review and spell"][k.min(2)],
        TaskClass::HomeworkQa => ["solve the first half of", "answer and check the rest of"][k.min(1)],
        TaskClass::PhysicalMusic => ["practice", "play through"][k.min(1)],
        TaskClass::HabitState => "tidy and pack for",
        TaskClass::Reflective => "write and review",
    };
    if of == 1 { format!("{verb}: {}", task.description) } else { format!("part {} of {of}, {verb}: {}", k + 1, task.description) }
}

fn need_of(task: &LearningTask) -> usize {
    Need::ALL.iter().position(|&n| pool(n).iter().any(|s| s.name == task.task_name)).unwrap_or(0)
}

/// The decomposition a well-behaved model would return for one task. It
/// depends on the family and the task alone, so a task shared by two sets
/// gets one reply. The first subtask of the n-th need category goes to the
/// n-th caregiver, which covers every caregiver; later subtasks prefer
/// subject expertise.
pub fn canned_decomposition(family: &FamilyContext, task: &LearningTask) -> Value {
    let c = need_of(task);
    let n = subtask_count(task.task_class);
    let cg = &family.caregivers;
    let items: Vec<Value> = (0..n)
        .map(|k| {
            let owner = if k == 0 {
                &cg[c % cg.len()]
            } else {
                cg.iter().find(|x| x.has_expertise(task.subject_tag)).unwrap_or(&cg[(c + k) % cg.len()])
            };
            let method = if owner.is_monitoring_only() {
                "check completion and leave a note"
            } else if owner.has_expertise(task.subject_tag) {
                "explain the key points, then let the child try alone"
            } else {
                "sit with the child and listen"
            };
            json!({
                "subtask_name": format!("{}_{}", task.task_name, k + 1),
                "description": step_text(task, k, n),
                "answers": null,
                "tutoring_method": method,
                "owners": [owner.caregiver_id],
                "child_participates": true,
                "child_independent": task.task_class == TaskClass::HabitState,
            })
        })
        .collect();
    json!({ "subtasks": items })
}

const CANNED_SUMMARY: &str = "Each adult takes the sessions that fit their free time, and the child works through the \
week in short steps. Leave a note after every session so the next adult can pick up where the child stopped.";

pub fn write_fixtures(dir: &Path, spec: &FixtureSpec) -> Result<Vec<Fixture>, FixtureError> {
    let fixtures = generate(spec)?;
    let families_dir = dir.join("families");
    fs::create_dir_all(&families_dir).map_err(io_err(&families_dir))?;
    let manifest = dir.join("manifest.json");
    write_atomic(&manifest, pretty(&json!(spec)).as_bytes()).map_err(io_err(&manifest))?;

    let gateway = Gateway::new(Arc::new(StubProvider::new()));
    let stub = dir.join("stub");
    for fx in &fixtures {
        let path = families_dir.join(format!("{}.json", fx.family.family_id));
        write_atomic(&path, pretty(&json!(fx)).as_bytes()).map_err(io_err(&path))?;
        for tasks in &fx.task_sets {
            let mut canned = StubProvider::new();
            for task in tasks {
                let reply = canned_decomposition(&fx.family, task);
                let req = gateway.decompose_request(&fx.family, task).map_err(|e| FixtureError::Format {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let text = pretty(&reply);
                StubProvider::write_reply(&stub, TemplateId::Decompose, &req.prompt_hash(), &text)
                    .map_err(io_err(&stub))?;
                canned.insert_for(&req, text);
            }
            let subtasks = Gateway::new(Arc::new(canned))
                .decompose_tasks(&fx.family, tasks)
                .map_err(|e| FixtureError::Format { path: path.clone(), message: format!("canned decomposition: {e}") })?
                .subtasks;
            // A placement reply taking slots from the deterministic
            // scheduler and keeping the decomposition's owners, so the
            // model-first policies run offline and still meet conflicts.
            let req = SchedulingRequest::new("fixture", fx.family.clone(), tasks.clone(), subtasks);
            let placed = assign_and_schedule(&req).map_err(|e| FixtureError::Format {
                path: path.clone(),
                message: format!("scheduling canned decomposition: {e}"),
            })?;
            let items: Vec<Value> = req
                .subtasks
                .iter()
                .map(|st| {
                    let mut st = st.clone();
                    st.slot = placed.schedule.subtask(&st.subtask_name).and_then(|p| p.slot);
                    serde_json::to_value(&st).expect("subtask serializes")
                })
                .collect();
            let chat = gateway
                .schedule_request(&req)
                .map_err(|e| FixtureError::Format { path: path.clone(), message: e.to_string() })?;
            StubProvider::write_reply(&stub, TemplateId::Schedule, &chat.prompt_hash(), &pretty(&json!({ "subtasks": items })))
                .map_err(io_err(&stub))?;
        }
    }
    StubProvider::write_reply(&stub, TemplateId::Summary, "default", CANNED_SUMMARY).map_err(io_err(&stub))?;
    Ok(fixtures)
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

/// Reads every `families/*.json` under `dir`, ordered by file name.
pub fn load_fixtures(dir: &Path) -> Result<Vec<Fixture>, FixtureError> {
    let families_dir = dir.join("families");
    let mut paths: Vec<PathBuf> = fs::read_dir(&families_dir)
        .map_err(io_err(&families_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(FixtureError::Format { path: families_dir, message: "no fixture files".into() });
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            let fx: Fixture =
                serde_json::from_str(&text).map_err(|e| FixtureError::Format { path: p.clone(), message: e.to_string() })?;
            fx.family.validate().map_err(|e| FixtureError::Format { path: p.clone(), message: e.to_string() })?;
            Ok(fx)
        })
        .collect()
}
