//! Builders and brute-force oracles shared by the service test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

use homeplan_core::conflict::ConflictKind;
use homeplan_core::time::{AvailabilityWindow, DayClass, DayIndex, TimeOfDay, TimeSlot};
use homeplan_core::{CaregiverProfile, ChildProfile, FamilyContext, Subject, WeeklySchedule};

pub fn slot(day: i64, sh: u16, sm: u16, eh: u16, em: u16) -> TimeSlot {
    TimeSlot::new(DayIndex::new(day).unwrap(), TimeOfDay::hm(sh, sm), TimeOfDay::hm(eh, em)).unwrap()
}

/// Free weekday afternoons and evenings, free weekends.
pub fn caregiver(id: &str, tags: &[Subject], notes: &str) -> CaregiverProfile {
    CaregiverProfile {
        caregiver_id: id.into(),
        role_label: id.into(),
        expertise_tags: tags.iter().copied().collect(),
        availability: vec![
            AvailabilityWindow::new(DayClass::Weekday, TimeOfDay::hm(14, 0), TimeOfDay::hm(21, 0)).unwrap(),
            AvailabilityWindow::new(DayClass::Weekend, TimeOfDay::hm(9, 0), TimeOfDay::hm(21, 0)).unwrap(),
        ],
        notes: notes.into(),
    }
}

pub fn family(id: &str, caregivers: Vec<CaregiverProfile>, independence_required: bool) -> FamilyContext {
    FamilyContext {
        family_id: id.into(),
        caregivers,
        child: ChildProfile { child_id: "kid".into(), age: 9, grade_level: 3, characteristics: String::new() },
        independence_required,
    }
}

fn minute_map(family: &FamilyContext, id: &str) -> Vec<bool> {
    let mut map = vec![false; 7 * 1440];
    let Some(c) = family.caregiver(id) else { return map };
    for w in &c.availability {
        for day in w.day_class.days() {
            let base = usize::from(day.get() - 1) * 1440;
            for m in w.start.minutes()..w.end.minutes() {
                map[base + usize::from(m)] = true;
            }
        }
    }
    map
}

fn minutes(slot: &TimeSlot) -> BTreeSet<u32> {
    let base = (u32::from(slot.day().get()) - 1) * 1440;
    (base + u32::from(slot.start().minutes())..base + u32::from(slot.end().minutes())).collect()
}

/// Every pair, every minute. Returns (kind, sorted names).
pub fn conflict_oracle(family: &FamilyContext, schedule: &WeeklySchedule) -> BTreeSet<(ConflictKind, Vec<String>)> {
    let mut out = BTreeSet::new();
    let placed: Vec<_> = schedule.subtasks.iter().filter(|s| s.slot.is_some()).collect();
    for (i, st) in placed.iter().enumerate() {
        let slot = st.slot.unwrap();
        let mine = minutes(&slot);
        let unavailable = if st.child_independent {
            slot.start().minutes() < 8 * 60 || slot.end().minutes() > 18 * 60
        } else {
            st.owners.iter().any(|o| {
                let map = minute_map(family, o.as_str());
                mine.iter().any(|m| !map[*m as usize])
            })
        };
        if unavailable {
            out.insert((ConflictKind::OwnerUnavailable, vec![st.subtask_name.clone()]));
        }
        for other in &placed[i + 1..] {
            let theirs = other.slot.unwrap();
            if mine.is_disjoint(&minutes(&theirs)) {
                continue;
            }
            let mut names = vec![st.subtask_name.clone(), other.subtask_name.clone()];
            names.sort();
            let shared =
                !st.child_independent && !other.child_independent && st.owners.iter().any(|o| other.owners.contains(o));
            if shared {
                let kind =
                    if slot.start() == theirs.start() { ConflictKind::SimultaneousSameOwner } else { ConflictKind::Overlap };
                out.insert((kind, names));
            } else if st.child_participates && other.child_participates {
                out.insert((ConflictKind::Overlap, names));
            }
        }
    }
    out
}

/// JSON of a subtask with the slot fields removed.
pub fn without_slot(value: &serde_json::Value) -> serde_json::Value {
    let mut v = value.clone();
    if let Some(obj) = v.as_object_mut() {
        for k in ["day", "start", "end"] {
            obj.remove(k);
        }
    }
    v
}
