//! Seeded random families, requests and schedules shared by the property
//! tests.
#![allow(dead_code)]

use homeplan_core::scheduler::SchedulingRequest;
use homeplan_core::time::{AvailabilityWindow, DayClass, DayIndex, TimeOfDay, TimeSlot};
use homeplan_core::{CaregiverProfile, ChildProfile, FamilyContext, LearningTask, Subject, Subtask, TaskClass, WeeklySchedule};
use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROLES: [&str; 4] = ["mother", "father", "grandmother", "grandfather"];
pub const SUBJECTS: [Subject; 5] = [Subject::English, Subject::Math, Subject::Chinese, Subject::Music, Subject::Habits];
pub const CLASSES: [TaskClass; 5] = [
    TaskClass::PracticeMemorization,
    TaskClass::HomeworkQa,
    TaskClass::HabitState,
    TaskClass::Reflective,
    TaskClass::PhysicalMusic,
];
pub const METHODS: [&str; 4] = ["guide the child step by step", "check completion", "explain the key points", "listen and correct"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_window(rng: &mut ChaCha8Rng) -> AvailabilityWindow {
    let class = match rng.random_range(0..3) {
        0 => DayClass::Weekday,
        1 => DayClass::Weekend,
        _ => DayClass::Day(DayIndex::new(rng.random_range(1..=7)).unwrap()),
    };
    let start = rng.random_range(6..21u16);
    let end = rng.random_range(start + 1..=(start + 4).min(22));
    AvailabilityWindow::new(class, TimeOfDay::hm(start, 0), TimeOfDay::hm(end, 0)).unwrap()
}

pub fn random_family(rng: &mut ChaCha8Rng, caregivers: usize) -> FamilyContext {
    let caregivers = ROLES[..caregivers]
        .iter()
        .map(|role| CaregiverProfile {
            caregiver_id: (*role).into(),
            role_label: (*role).into(),
            expertise_tags: SUBJECTS.iter().copied().filter(|_| rng.random_bool(0.3)).collect(),
            availability: (0..rng.random_range(1..=3)).map(|_| random_window(rng)).collect(),
            notes: if rng.random_bool(0.15) { "monitoring only".into() } else { String::new() },
        })
        .collect();
    FamilyContext {
        family_id: "fam".into(),
        caregivers,
        child: ChildProfile { child_id: "kid".into(), age: 9, grade_level: 3, characteristics: String::new() },
        independence_required: rng.random_bool(0.5),
    }
}

/// 2-4 caregivers and `subtasks` subtasks spread over 1-4 tasks.
pub fn random_request(seed: u64, caregivers: usize, subtasks: usize) -> SchedulingRequest {
    let mut rng = rng(seed);
    let family = random_family(&mut rng, caregivers);
    let task_count = rng.random_range(1..=4usize).min(subtasks);
    let tasks: Vec<LearningTask> = (0..task_count)
        .map(|i| {
            LearningTask::with_class(
                &format!("task{i}"),
                "weekly goal",
                *SUBJECTS.choose(&mut rng).unwrap(),
                *CLASSES.choose(&mut rng).unwrap(),
            )
            .unwrap()
        })
        .collect();
    let mut per_task = vec![0u32; task_count];
    let mut subs = Vec::new();
    for i in 0..subtasks {
        let t = if i < task_count { i } else { rng.random_range(0..task_count) };
        per_task[t] += 1;
        let owner = family.caregivers.choose(&mut rng).unwrap().caregiver_id.as_str().to_owned();
        let mut st = Subtask::new(&tasks[t].task_name, per_task[t], "child practices", &[owner.as_str()])
            .with_method(METHODS.choose(&mut rng).unwrap());
        st.child_participates = rng.random_bool(0.7);
        st.child_independent = !st.child_participates && rng.random_bool(0.4);
        subs.push(st);
    }
    let mut req = SchedulingRequest::new("plan", family, tasks, subs);
    for st in &req.subtasks {
        if rng.random_bool(0.3) {
            req.duration_hints.insert(st.subtask_name.clone(), *[15u16, 20, 30, 45, 60].choose(&mut rng).unwrap());
        }
    }
    req
}

pub fn random_slot(rng: &mut ChaCha8Rng) -> TimeSlot {
    let day = DayIndex::new(rng.random_range(1..=7)).unwrap();
    let start = rng.random_range(6 * 12..21 * 12u16) * 5;
    let minutes = *[15u16, 20, 30, 45, 60, 90].choose(rng).unwrap();
    let end = (start + minutes).min(22 * 60);
    TimeSlot::new(day, TimeOfDay::new(start.into()).unwrap(), TimeOfDay::new(end.into()).unwrap()).unwrap()
}

/// A schedule with random slots and owners, packed into a few days so
/// conflicts are common.
pub fn random_schedule(seed: u64, family: &FamilyContext, subtasks: usize) -> WeeklySchedule {
    let mut rng = rng(seed);
    let days = rng.random_range(1..=3);
    let subs = (0..subtasks)
        .map(|i| {
            let task = format!("t{}", i % 3);
            let owners: Vec<&str> = if rng.random_bool(0.2) {
                vec![family.caregivers[0].caregiver_id.as_str(), family.caregivers[1].caregiver_id.as_str()]
            } else {
                vec![family.caregivers.choose(&mut rng).unwrap().caregiver_id.as_str()]
            };
            let mut slot = random_slot(&mut rng);
            slot = TimeSlot::new(DayIndex::new(i64::from(slot.day().get() % days + 1)).unwrap(), slot.start(), slot.end())
                .unwrap();
            let mut st = Subtask::new(&task, (i / 3) as u32 + 1, "child reads", &owners).with_slot(slot);
            st.child_participates = rng.random_bool(0.5);
            st.child_independent = !st.child_participates && rng.random_bool(0.2);
            st
        })
        .collect();
    WeeklySchedule::new("plan", "fam", subs)
}
