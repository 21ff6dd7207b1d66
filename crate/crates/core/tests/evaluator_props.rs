mod support;

use std::collections::{BTreeMap, BTreeSet};

use homeplan_core::evaluator::{
    Dimension, Finding, RuleId, Severity, aggregate_reports, detect_expertise_mismatch, report_from_findings,
    score_plan,
};
use homeplan_core::events::{EventBody, EventRecord, TutoringMode, compute_engagement};
use homeplan_core::scheduler::assign_and_schedule;
use homeplan_core::{SubtaskStatus, Timestamp, WeeklySchedule};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::RngExt;

fn finding(rule: RuleId, severity: Severity) -> Finding {
    Finding { rule_id: rule, severity, subtasks: Vec::new(), explanation: String::new() }
}

fn arb_finding() -> impl Strategy<Value = Finding> {
    (0..RuleId::ALL.len(), any::<bool>())
        .prop_map(|(r, major)| finding(RuleId::ALL[r], if major { Severity::Major } else { Severity::Minor }))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn adding_a_finding_never_raises_a_score(base in prop::collection::vec(arb_finding(), 0..12), extra in arb_finding()) {
        let before = report_from_findings(&"p".into(), base.clone());
        let mut more = base;
        more.push(extra);
        let after = report_from_findings(&"p".into(), more);
        for d in Dimension::ALL {
            prop_assert!(after.score(d) <= before.score(d));
        }
        prop_assert_eq!(after.scores.len(), 5);
    }

    #[test]
    fn dimension_score_depends_only_on_its_findings(findings in prop::collection::vec(arb_finding(), 0..12)) {
        let report = report_from_findings(&"p".into(), findings.clone());
        for d in Dimension::ALL {
            let own: Vec<&Finding> = findings.iter().filter(|f| f.rule_id.dimension() == d).collect();
            let expected = if own.is_empty() { 3 }
                else if own.iter().all(|f| f.severity == Severity::Minor) { 2 }
                else { 1 };
            prop_assert_eq!(report.score(d), expected);
        }
    }

    #[test]
    fn aggregate_matches_hand_mean(scores in prop::collection::vec(prop::collection::vec(1u8..=3, 5), 1..40)) {
        let reports: Vec<_> = scores.iter().map(|row| {
            let findings = row.iter().zip(Dimension::ALL).flat_map(|(s, d)| {
                let rule = RuleId::ALL.iter().copied().find(|r| r.dimension() == d).unwrap();
                match s {
                    3 => vec![],
                    2 => vec![finding(rule, Severity::Minor)],
                    _ => vec![finding(rule, Severity::Major)],
                }
            }).collect();
            report_from_findings(&"p".into(), findings)
        }).collect();
        let agg = aggregate_reports(&reports).unwrap();
        for (col, a) in agg.iter().enumerate() {
            let column: Vec<u32> = scores.iter().map(|row| u32::from(row[col])).collect();
            // exact rational mean; round up when the remainder is at least half
            let (sum, n) = (column.iter().sum::<u32>(), column.len() as u32);
            let floor = sum * 100 / n;
            let remainder = sum * 100 - floor * n;
            let expected = if 2 * remainder >= n { floor + 1 } else { floor };
            prop_assert_eq!(a.mean_centi, expected);
            prop_assert_eq!(a.count_of_3, column.iter().filter(|s| **s == 3).count());
        }
    }

    #[test]
    fn expertise_findings_match_membership_oracle(seed in any::<u64>(), caregivers in 2usize..=4, n in 3usize..=10) {
        let req = support::random_request(seed, caregivers, n);
        let mut rng = support::rng(seed ^ 0xabc);
        // scramble ownership so mismatches occur
        let mut schedule = assign_and_schedule(&req).unwrap().schedule;
        for st in &mut schedule.subtasks {
            st.owners = vec![req.family.caregivers.choose(&mut rng).unwrap().caregiver_id.clone()];
            st.tutoring_method = "check completion".into();
        }
        let found: BTreeSet<String> = detect_expertise_mismatch(&req.family, &req.tasks, &schedule)
            .into_iter().flat_map(|f| f.subtasks).collect();
        let expected: BTreeSet<String> = schedule.subtasks.iter().filter(|st| {
            let subject = req.tasks.iter().find(|t| t.task_name == st.parent_task).unwrap().subject_tag;
            let tagged: BTreeSet<&str> = req.family.caregivers.iter()
                .filter(|c| c.expertise_tags.contains(&subject))
                .map(|c| c.caregiver_id.as_str()).collect();
            !tagged.is_empty() && !tagged.contains(st.owners[0].as_str())
        }).map(|st| st.subtask_name.clone()).collect();
        prop_assert_eq!(found, expected);
    }

    #[test]
    fn scoring_is_deterministic(seed in any::<u64>(), n in 3usize..=10) {
        let req = support::random_request(seed, 3, n);
        let schedule = assign_and_schedule(&req).unwrap().schedule;
        let a = serde_json::to_string(&score_plan(&req.family, &req.tasks, &schedule)).unwrap();
        let b = serde_json::to_string(&score_plan(&req.family, &req.tasks, &schedule)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn engagement_matches_naive_replay(seed in any::<u64>(), steps in 0usize..60) {
        let req = support::random_request(seed, 3, 8);
        let schedule: WeeklySchedule = assign_and_schedule(&req).unwrap().schedule;
        let mut rng = support::rng(seed);
        let ids: Vec<String> = req.family.caregivers.iter().map(|c| c.caregiver_id.as_str().to_owned()).collect();

        // naive model: name -> (parent, owners, status)
        let mut model: BTreeMap<String, (String, Vec<String>, u8)> = schedule.subtasks.iter()
            .map(|s| (s.subtask_name.clone(), (s.parent_task.clone(), s.owners.iter().map(|o| o.as_str().to_owned()).collect(), 0)))
            .collect();
        let mut features: BTreeMap<String, [bool; 3]> = BTreeMap::new();
        let mut events = vec![EventRecord {
            event_id: 0, family_id: "fam".into(), actor: ids[0].as_str().into(),
            body: EventBody::PlanGenerated { plan_id: "plan".into(), version: 1, schedule: schedule.clone() },
            timestamp: Timestamp(0),
        }];
        features.entry(ids[0].clone()).or_default();
        let names: Vec<String> = model.keys().cloned().collect();
        for step in 1..=steps as u64 {
            let actor = ids.choose(&mut rng).unwrap().clone();
            features.entry(actor.clone()).or_default();
            let body = if names.is_empty() { 3 } else { rng.random_range(0..4) };
            let body = match body {
                0 | 1 => {
                    let name = names.choose(&mut rng).unwrap().clone();
                    let entry = model.get_mut(&name).unwrap();
                    if entry.2 == 2 { continue; }
                    let to = if entry.2 == 0 && rng.random_bool(0.5) { 1 } else { 2 };
                    let statuses = [SubtaskStatus::Pending, SubtaskStatus::InProgress, SubtaskStatus::Done];
                    let from = statuses[entry.2 as usize];
                    entry.2 = to;
                    EventBody::SubtaskStatusChanged { plan_id: "plan".into(), subtask_name: name, from, to: statuses[to as usize] }
                }
                2 => {
                    let name = names.choose(&mut rng).unwrap().clone();
                    let entry = model.get_mut(&name).unwrap();
                    let from = entry.1[0].clone();
                    let to = ids.choose(&mut rng).unwrap().clone();
                    entry.1.retain(|o| *o != from);
                    if !entry.1.contains(&to) { entry.1.push(to.clone()); }
                    EventBody::Handover { plan_id: "plan".into(), subtask_name: name, from: from.into(), to: to.into() }
                }
                _ => {
                    let mode = *TutoringMode::ALL.choose(&mut rng).unwrap();
                    let f = features.get_mut(&actor).unwrap();
                    match mode {
                        TutoringMode::TransferPractice => f[0] = true,
                        TutoringMode::AnswerCheck => f[1] = true,
                        _ => f[2] = true,
                    }
                    EventBody::TutoringUsed { mode, plan_id: None, subtask_name: None }
                }
            };
            events.push(EventRecord { event_id: step, family_id: "fam".into(), actor: actor.as_str().into(), body, timestamp: Timestamp(step as i64) });
        }

        let summary = compute_engagement(&events).unwrap();
        let mut executed: BTreeMap<String, usize> = BTreeMap::new();
        let mut completed: BTreeMap<String, usize> = BTreeMap::new();
        let parents: BTreeSet<&String> = model.values().map(|v| &v.0).collect();
        for (_, (_, owners, status)) in &model {
            for o in owners {
                *executed.entry(o.clone()).or_default() += usize::from(*status == 2);
            }
        }
        let mut family_done = 0;
        for p in parents {
            let subs: Vec<_> = model.values().filter(|v| &v.0 == p).collect();
            if subs.iter().all(|v| v.2 == 2) {
                family_done += 1;
                let owners: BTreeSet<&String> = subs.iter().flat_map(|v| &v.1).collect();
                for o in owners {
                    *completed.entry(o.clone()).or_default() += 1;
                }
            }
        }
        for (id, e) in &summary.caregivers {
            let id = id.as_str();
            prop_assert_eq!(e.subtasks_executed, executed.get(id).copied().unwrap_or(0), "{}", id);
            prop_assert_eq!(e.tasks_completed, completed.get(id).copied().unwrap_or(0), "{}", id);
            let f = features.get(id).copied().unwrap_or_default();
            prop_assert_eq!([e.used_new_example, e.used_answer_checking, e.used_tutoring_guidance], f);
        }
        prop_assert_eq!(summary.family_tasks_completed.get("fam").copied().unwrap_or(0), family_done);
    }
}
