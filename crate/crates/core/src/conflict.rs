//! Conflict detection and minimal slot-only repair.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::model::{FamilyContext, Subtask, WeeklySchedule};
use crate::ordering::Ordering;
use crate::schedule_json::{ScheduleIssue, day_coverage_advisories};
use crate::time::{DAYTIME_END, DAYTIME_START, DayIndex, TimeOfDay, TimeSlot};

/// Repair scans start times on this grid.
pub const REPAIR_GRID_MINUTES: u16 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    /// Partially overlapping slots of one owner, or of the child.
    Overlap,
    /// Two subtasks of one owner starting at the same time.
    SimultaneousSameOwner,
    OwnerUnavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub subtasks: Vec<String>,
    pub detail: String,
}

fn availability(family: &FamilyContext) -> BTreeMap<&str, Vec<TimeSlot>> {
    family.caregivers.iter().map(|c| (c.caregiver_id.as_str(), c.available_slots())).collect()
}

/// Cheap form of [`pair_conflict`] for candidate scans.
fn clashes(a: &Subtask, sa: &TimeSlot, b: &Subtask, sb: &TimeSlot) -> bool {
    sa.overlaps(sb)
        && ((a.occupies_owners() && b.occupies_owners() && a.shares_owner(b))
            || (a.child_participates && b.child_participates))
}

fn unavailable_at(st: &Subtask, slot: &TimeSlot, avail: &BTreeMap<&str, Vec<TimeSlot>>) -> bool {
    if st.child_independent {
        slot.start() < DAYTIME_START || slot.end() > DAYTIME_END
    } else {
        st.owners.iter().any(|o| !avail.get(o.as_str()).is_some_and(|slots| slots.iter().any(|a| a.contains(slot))))
    }
}

fn pair_conflict(a: &Subtask, b: &Subtask) -> Option<Conflict> {
    let (sa, sb) = (a.slot?, b.slot?);
    if !sa.overlaps(&sb) {
        return None;
    }
    let shared: Vec<&str> = if a.occupies_owners() && b.occupies_owners() {
        a.owners.iter().filter(|o| b.owners.contains(o)).map(|o| o.as_str()).collect()
    } else {
        Vec::new()
    };
    let (first, second) = if (sa, &a.subtask_name) <= (sb, &b.subtask_name) { (a, b) } else { (b, a) };
    let names = alloc::vec![first.subtask_name.clone(), second.subtask_name.clone()];
    if !shared.is_empty() {
        let kind = if sa.start() == sb.start() { ConflictKind::SimultaneousSameOwner } else { ConflictKind::Overlap };
        return Some(Conflict { kind, subtasks: names, detail: format!("{} double-booked: {sa} and {sb}", shared.join(", ")) });
    }
    if a.child_participates && b.child_participates {
        return Some(Conflict { kind: ConflictKind::Overlap, subtasks: names, detail: format!("child needed at {sa} and {sb}") });
    }
    None
}

fn unavailability(st: &Subtask, avail: &BTreeMap<&str, Vec<TimeSlot>>) -> Option<Conflict> {
    let slot = st.slot?;
    if st.child_independent {
        let daytime = slot.start() >= DAYTIME_START && slot.end() <= DAYTIME_END;
        return (!daytime).then(|| Conflict {
            kind: ConflictKind::OwnerUnavailable,
            subtasks: alloc::vec![st.subtask_name.clone()],
            detail: format!("independent work at {slot} falls outside 08:00-18:00"),
        });
    }
    let missing: Vec<&str> = st
        .owners
        .iter()
        .filter(|o| !avail.get(o.as_str()).is_some_and(|slots| slots.iter().any(|a| a.contains(&slot))))
        .map(|o| o.as_str())
        .collect();
    (!missing.is_empty()).then(|| Conflict {
        kind: ConflictKind::OwnerUnavailable,
        subtasks: alloc::vec![st.subtask_name.clone()],
        detail: format!("{} not available {slot}", missing.join(", ")),
    })
}

fn sort_key<'s>(c: &Conflict, schedule: &'s WeeklySchedule) -> (Option<TimeSlot>, &'s str, ConflictKind) {
    let first = schedule.subtask(&c.subtasks[0]).expect("conflict names a scheduled subtask");
    (first.slot, first.subtask_name.as_str(), c.kind)
}

/// Every conflict of every kind, ordered by (day, start, subtask_name) of
/// the first subtask involved, then kind, then the other subtask.
pub fn detect_conflicts(family: &FamilyContext, schedule: &WeeklySchedule) -> Vec<Conflict> {
    let avail = availability(family);
    let mut out = Vec::new();
    for (i, a) in schedule.subtasks.iter().enumerate() {
        out.extend(unavailability(a, &avail));
        for b in &schedule.subtasks[i + 1..] {
            out.extend(pair_conflict(a, b));
        }
    }
    out.sort_by(|x, y| sort_key(x, schedule).cmp(&sort_key(y, schedule)).then_with(|| x.subtasks.cmp(&y.subtasks)));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotEdit {
    pub subtask_name: String,
    pub old: TimeSlot,
    pub new: TimeSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairResult {
    pub schedule: WeeklySchedule,
    pub edits: Vec<SlotEdit>,
    pub unresolved: Vec<Conflict>,
    /// Subtasks that had to move but found no conflict-free slot.
    pub stuck: Vec<String>,
    /// Day-coverage findings on the repaired schedule.
    pub advisories: Vec<ScheduleIssue>,
}

/// Conflicts the given subtask would take part in at `slot`, ignoring any
/// subtask in `skip`.
fn conflicts_at(
    schedule: &WeeklySchedule,
    index: usize,
    slot: TimeSlot,
    avail: &BTreeMap<&str, Vec<TimeSlot>>,
    ordering: &Ordering,
) -> bool {
    let moved = &schedule.subtasks[index];
    if unavailable_at(moved, &slot, avail) {
        return true;
    }
    for (j, other) in schedule.subtasks.iter().enumerate() {
        if j != index && other.slot.is_some_and(|os| clashes(moved, &slot, other, &os)) {
            return true;
        }
    }
    let name = moved.subtask_name.as_str();
    let ordered_ok = ordering.predecessors(name).all(|p| {
        schedule.subtask(p).and_then(|s| s.slot).is_none_or(|ps| ps.absolute_end() <= slot.absolute_start())
    }) && ordering.successors(name).all(|s| {
        schedule.subtask(s).and_then(|s| s.slot).is_none_or(|ss| slot.absolute_end() <= ss.absolute_start())
    });
    !ordered_ok
}

/// Start points scanned for a move: from the original start forward to the
/// end of Day 7, then from Day 1 up to the original start.
fn repair_candidates(original: TimeSlot) -> impl Iterator<Item = TimeSlot> {
    let minutes = original.duration_minutes();
    let grid = move |day: DayIndex| {
        (0..crate::time::MINUTES_PER_DAY)
            .step_by(usize::from(REPAIR_GRID_MINUTES))
            .filter_map(move |m| TimeSlot::starting_at(day, TimeOfDay::new(u32::from(m)).ok()?, minutes))
    };
    let origin = original.absolute_start();
    let forward = DayIndex::all().flat_map(grid).filter(move |s| s.absolute_start() >= origin);
    let wrapped = DayIndex::all().flat_map(grid).filter(move |s| s.absolute_start() < origin);
    forward.chain(wrapped)
}

/// Moves `name` to its first conflict-free slot; remembers failures so a
/// pass tries each subtask once.
fn move_subtask(
    current: &mut WeeklySchedule,
    name: &str,
    failed: &mut BTreeSet<String>,
    edits: &mut Vec<SlotEdit>,
    avail: &BTreeMap<&str, Vec<TimeSlot>>,
    ordering: &Ordering,
) -> bool {
    if failed.contains(name) {
        return false;
    }
    let index = current.subtasks.iter().position(|s| s.subtask_name == name).expect("conflict names a scheduled subtask");
    let Some(original) = current.subtasks[index].slot else { return false };
    let found =
        repair_candidates(original).find(|slot| *slot != original && !conflicts_at(current, index, *slot, avail, ordering));
    match found {
        Some(slot) => {
            current.subtasks[index].slot = Some(slot);
            edits.push(SlotEdit { subtask_name: name.to_owned(), old: original, new: slot });
            true
        }
        None => {
            failed.insert(name.to_owned());
            false
        }
    }
}

/// Moves the later-starting subtask of each conflict (or the unavailable
/// one) to its first conflict-free slot, falling back to the other subtask
/// of the pair when the later one cannot move. Only `day`, `start` and `end`
/// change; subtasks with no free slot stay put and their conflicts are
/// returned as unresolved.
pub fn repair(family: &FamilyContext, schedule: &WeeklySchedule, ordering: &Ordering) -> RepairResult {
    let avail = availability(family);
    let mut current = schedule.clone();
    let mut edits = Vec::new();
    let mut given_up: Vec<String> = Vec::new();

    // Every move lands on a conflict-free slot, so the conflict count drops
    // with each edit and the passes terminate. The last pass makes no edit,
    // which makes the result a fixed point.
    loop {
        let edits_before = edits.len();
        let mut failed: BTreeSet<String> = BTreeSet::new();
        given_up.clear();
        for conflict in detect_conflicts(family, &current) {
            // earlier moves may already have fixed it
            let still_present = detect_conflicts(family, &current)
                .iter()
                .any(|c| c.kind == conflict.kind && c.subtasks == conflict.subtasks);
            if !still_present {
                continue;
            }
            let (mover, fallback) = match conflict.subtasks.as_slice() {
                [only] => (only.clone(), None),
                [first, second, ..] => {
                    let a = current.subtask(first).and_then(|s| s.slot);
                    let b = current.subtask(second).and_then(|s| s.slot);
                    // later start moves; equal starts move the larger name
                    if (b, second) >= (a, first) {
                        (second.clone(), Some(first.clone()))
                    } else {
                        (first.clone(), Some(second.clone()))
                    }
                }
                [] => continue,
            };
            if move_subtask(&mut current, &mover, &mut failed, &mut edits, &avail, ordering) {
                continue;
            }
            if !given_up.contains(&mover) {
                given_up.push(mover);
            }
            if let Some(other) = fallback {
                move_subtask(&mut current, &other, &mut failed, &mut edits, &avail, ordering);
            }
        }
        if edits.len() == edits_before {
            break;
        }
    }
    given_up.retain(|name| detect_conflicts(family, &current).iter().any(|c| c.subtasks.contains(name)));

    let unresolved = detect_conflicts(family, &current);
    let advisories = day_coverage_advisories(&current);
    RepairResult { schedule: current, edits, unresolved, stuck: given_up, advisories }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CaregiverProfile, ChildProfile};
    use crate::schedule_json::content_fingerprint;
    use crate::time::{AvailabilityWindow, DayClass};
    use alloc::vec;

    fn t(h: u16, m: u16) -> TimeOfDay {
        TimeOfDay::hm(h, m)
    }

    fn slot(d: i64, s: TimeOfDay, e: TimeOfDay) -> TimeSlot {
        TimeSlot::new(DayIndex::new(d).unwrap(), s, e).unwrap()
    }

    fn family(windows: &[(&str, DayClass, u16, u16)]) -> FamilyContext {
        let mut caregivers: Vec<CaregiverProfile> = Vec::new();
        for (id, class, s, e) in windows {
            let w = AvailabilityWindow::new(*class, t(*s, 0), t(*e, 0)).unwrap();
            match caregivers.iter_mut().find(|c| c.caregiver_id.as_str() == *id) {
                Some(c) => c.availability.push(w),
                None => caregivers.push(CaregiverProfile {
                    caregiver_id: (*id).into(),
                    role_label: (*id).into(),
                    expertise_tags: Default::default(),
                    availability: vec![w],
                    notes: String::new(),
                }),
            }
        }
        FamilyContext {
            family_id: "fam".into(),
            caregivers,
            child: ChildProfile { child_id: "kid".into(), age: 9, grade_level: 3, characteristics: String::new() },
            independence_required: false,
        }
    }

    fn sub(parent: &str, k: u32, owner: &str, s: TimeSlot) -> Subtask {
        let mut st = Subtask::new(parent, k, "desc", &[owner]).with_slot(s);
        st.child_participates = false;
        st
    }

    #[test]
    fn overlap_of_one_owner_is_one_conflict() {
        let fam = family(&[("mom", DayClass::Weekday, 19, 21), ("dad", DayClass::Weekday, 19, 21)]);
        let schedule = WeeklySchedule::new(
            "p",
            "fam",
            vec![sub("a", 1, "mom", slot(2, t(19, 0), t(20, 0))), sub("b", 1, "mom", slot(2, t(19, 30), t(20, 30)))],
        );
        let conflicts = detect_conflicts(&fam, &schedule);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].kind, ConflictKind::Overlap);
        assert_eq!(conflicts[0].subtasks, ["a_1", "b_1"]);
    }

    #[test]
    fn simultaneous_and_parallel_caregiving() {
        let fam = family(&[("mom", DayClass::Weekday, 19, 21), ("dad", DayClass::Weekday, 19, 21)]);
        let same = WeeklySchedule::new(
            "p",
            "fam",
            vec![sub("a", 1, "mom", slot(1, t(19, 0), t(20, 0))), sub("b", 1, "mom", slot(1, t(19, 0), t(19, 30)))],
        );
        assert_eq!(detect_conflicts(&fam, &same)[0].kind, ConflictKind::SimultaneousSameOwner);

        let mut parallel = WeeklySchedule::new(
            "p",
            "fam",
            vec![sub("a", 1, "mom", slot(1, t(19, 0), t(20, 0))), sub("b", 1, "dad", slot(1, t(19, 0), t(20, 0)))],
        );
        assert!(detect_conflicts(&fam, &parallel).is_empty());
        parallel.subtasks[0].child_participates = true;
        parallel.subtasks[1].child_participates = true;
        let c = detect_conflicts(&fam, &parallel);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].kind, ConflictKind::Overlap);
    }

    #[test]
    fn repair_moves_the_later_subtask() {
        let fam = family(&[("mom", DayClass::Weekday, 19, 21), ("dad", DayClass::Weekday, 19, 21)]);
        let schedule = WeeklySchedule::new(
            "p",
            "fam",
            vec![sub("a", 1, "mom", slot(2, t(19, 0), t(20, 0))), sub("b", 1, "mom", slot(2, t(19, 30), t(20, 30)))],
        );
        let ordering = Ordering::new(&schedule.subtasks, &[]).unwrap();
        let result = repair(&fam, &schedule, &ordering);
        assert_eq!(result.edits.len(), 1);
        assert_eq!(result.edits[0].subtask_name, "b_1");
        assert_eq!(result.edits[0].new, slot(2, t(20, 0), t(21, 0)));
        assert!(result.unresolved.is_empty());
        assert!(detect_conflicts(&fam, &result.schedule).is_empty());
        for (before, after) in schedule.subtasks.iter().zip(&result.schedule.subtasks) {
            assert_eq!(content_fingerprint(before), content_fingerprint(after));
        }
    }

    #[test]
    fn conflict_free_schedule_is_a_fixed_point() {
        let fam = family(&[("mom", DayClass::Weekday, 19, 21), ("dad", DayClass::Weekday, 19, 21)]);
        let schedule = WeeklySchedule::new("p", "fam", vec![sub("a", 1, "mom", slot(2, t(19, 0), t(20, 0)))]);
        let result = repair(&fam, &schedule, &Ordering::new(&schedule.subtasks, &[]).unwrap());
        assert!(result.edits.is_empty());
        assert_eq!(result.schedule, schedule);
    }

    #[test]
    fn capacity_limits_leave_subtasks_unresolved() {
        // one 1-hour window for three 1-hour subtasks
        let d1 = DayClass::Day(DayIndex::new(1).unwrap());
        let fam = family(&[("mom", d1, 19, 20), ("dad", d1, 8, 9)]);
        let s = slot(1, t(19, 0), t(20, 0));
        let schedule = WeeklySchedule::new("p", "fam", vec![sub("a", 1, "mom", s), sub("b", 1, "mom", s), sub("c", 1, "mom", s)]);
        let ordering = Ordering::new(&schedule.subtasks, &[]).unwrap();
        let result = repair(&fam, &schedule, &ordering);
        assert!(result.edits.is_empty());
        // capacity oracle: one hour of availability holds exactly one
        let placeable = 60 / 60;
        assert_eq!(result.stuck.len(), schedule.subtasks.len() - placeable);
        assert_eq!(result.stuck, ["b_1", "c_1"]);
        assert!(!result.unresolved.is_empty());
        let again = repair(&fam, &result.schedule, &ordering);
        assert!(again.edits.is_empty());
    }

    #[test]
    fn unavailable_owner_is_moved_into_the_window() {
        let fam = family(&[("mom", DayClass::Weekday, 19, 21), ("dad", DayClass::Weekday, 19, 21)]);
        let schedule = WeeklySchedule::new("p", "fam", vec![sub("a", 1, "mom", slot(3, t(15, 0), t(15, 30)))]);
        let conflicts = detect_conflicts(&fam, &schedule);
        assert_eq!(conflicts[0].kind, ConflictKind::OwnerUnavailable);
        let result = repair(&fam, &schedule, &Ordering::new(&schedule.subtasks, &[]).unwrap());
        assert_eq!(result.edits[0].new, slot(3, t(19, 0), t(19, 30)));
    }

    #[test]
    fn repair_respects_order() {
        let fam = family(&[("mom", DayClass::Weekday, 19, 21), ("dad", DayClass::Weekday, 19, 21)]);
        // a_2 must stay after a_1 on day 3
        let schedule = WeeklySchedule::new(
            "p",
            "fam",
            vec![
                sub("a", 1, "mom", slot(3, t(19, 0), t(19, 30))),
                sub("a", 2, "dad", slot(3, t(19, 30), t(20, 0))),
                sub("b", 1, "dad", slot(3, t(19, 30), t(20, 30))),
            ],
        );
        let ordering = Ordering::new(&schedule.subtasks, &[]).unwrap();
        let result = repair(&fam, &schedule, &ordering);
        assert!(result.unresolved.is_empty());
        let a1 = result.schedule.subtask("a_1").unwrap().slot.unwrap();
        let a2 = result.schedule.subtask("a_2").unwrap().slot.unwrap();
        assert!(a1.absolute_end() <= a2.absolute_start());
    }
}
