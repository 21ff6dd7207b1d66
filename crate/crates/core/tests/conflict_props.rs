mod support;

use std::collections::BTreeSet;

use homeplan_core::conflict::{ConflictKind, detect_conflicts, repair};
use homeplan_core::ordering::Ordering;
use homeplan_core::schedule_json::content_fingerprint;
use homeplan_core::{FamilyContext, WeeklySchedule};
use proptest::prelude::*;

/// Minute bitmap of one caregiver's week, built straight from the windows.
fn minute_map(family: &FamilyContext, id: &str) -> Vec<bool> {
    let mut map = vec![false; 7 * 1440];
    for w in &family.caregiver(id).unwrap().availability {
        for day in w.day_class.days() {
            let base = usize::from(day.get() - 1) * 1440;
            for m in w.start.minutes()..w.end.minutes() {
                map[base + usize::from(m)] = true;
            }
        }
    }
    map
}

fn oracle(family: &FamilyContext, schedule: &WeeklySchedule) -> BTreeSet<(ConflictKind, Vec<String>)> {
    let mut out = BTreeSet::new();
    let minutes = |i: usize| {
        let s = schedule.subtasks[i].slot.unwrap();
        let base = (u32::from(s.day().get()) - 1) * 1440;
        (base + u32::from(s.start().minutes())..base + u32::from(s.end().minutes())).collect::<BTreeSet<u32>>()
    };
    for (i, st) in schedule.subtasks.iter().enumerate() {
        let slot = st.slot.unwrap();
        let unavailable = if st.child_independent {
            slot.start().minutes() < 8 * 60 || slot.end().minutes() > 18 * 60
        } else {
            st.owners.iter().any(|o| {
                let map = minute_map(family, o.as_str());
                minutes(i).iter().any(|m| !map[*m as usize])
            })
        };
        if unavailable {
            out.insert((ConflictKind::OwnerUnavailable, vec![st.subtask_name.clone()]));
        }
        for (j, other) in schedule.subtasks.iter().enumerate().skip(i + 1) {
            if minutes(i).is_disjoint(&minutes(j)) {
                continue;
            }
            let mut names = vec![st.subtask_name.clone(), other.subtask_name.clone()];
            names.sort();
            let shared = !st.child_independent
                && !other.child_independent
                && st.owners.iter().any(|o| other.owners.contains(o));
            if shared {
                let kind = if slot.start() == other.slot.unwrap().start() {
                    ConflictKind::SimultaneousSameOwner
                } else {
                    ConflictKind::Overlap
                };
                out.insert((kind, names));
            } else if st.child_participates && other.child_participates {
                out.insert((ConflictKind::Overlap, names));
            }
        }
    }
    out
}

fn normalized(family: &FamilyContext, schedule: &WeeklySchedule) -> BTreeSet<(ConflictKind, Vec<String>)> {
    detect_conflicts(family, schedule)
        .into_iter()
        .map(|c| {
            let mut names = c.subtasks;
            names.sort();
            (c.kind, names)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn detection_matches_minute_oracle(seed in any::<u64>(), caregivers in 2usize..=4, n in 1usize..=12) {
        let mut rng = support::rng(seed);
        let family = support::random_family(&mut rng, caregivers);
        let schedule = support::random_schedule(seed ^ 0x5eed, &family, n);
        let found = detect_conflicts(&family, &schedule);
        prop_assert_eq!(found.len(), normalized(&family, &schedule).len(), "duplicate conflicts");
        prop_assert_eq!(normalized(&family, &schedule), oracle(&family, &schedule));
    }

    #[test]
    fn repair_contract(seed in any::<u64>(), caregivers in 2usize..=4, n in 1usize..=10) {
        let mut rng = support::rng(seed);
        let family = support::random_family(&mut rng, caregivers);
        let schedule = support::random_schedule(seed ^ 0xfeed, &family, n);
        let ordering = Ordering::new(&schedule.subtasks, &[]).unwrap();
        let before = normalized(&family, &schedule);
        let result = repair(&family, &schedule, &ordering);
        let after = normalized(&family, &result.schedule);

        prop_assert!(after.is_subset(&before), "repair introduced {:?}", after.difference(&before).collect::<Vec<_>>());
        if !before.is_empty() && !result.edits.is_empty() {
            prop_assert!(after.len() < before.len());
        }
        prop_assert_eq!(&after, &normalized(&family, &result.schedule));
        prop_assert_eq!(result.unresolved.len(), after.len());
        for (a, b) in schedule.subtasks.iter().zip(&result.schedule.subtasks) {
            prop_assert_eq!(content_fingerprint(a), content_fingerprint(b));
        }
        for edit in &result.edits {
            let moved = result.schedule.subtask(&edit.subtask_name).unwrap();
            prop_assert_eq!(moved.slot.unwrap().duration_minutes(), edit.old.duration_minutes());
        }

        let again = repair(&family, &result.schedule, &ordering);
        prop_assert_eq!(&again.schedule, &result.schedule);
        prop_assert!(again.edits.is_empty());
    }
}
