//! Precedence between subtasks: `<task>_1 < <task>_2 < ...` within a
//! task, plus explicit cross-task dependencies.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::Subtask;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrderingError {
    #[error("ordering has a cycle through {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("dependency names unknown subtask `{0}`")]
    UnknownSubtask(String),
}

/// An explicit `before` -> `after` dependency.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dependency {
    pub before: String,
    pub after: String,
}

impl Dependency {
    pub fn new(before: &str, after: &str) -> Self {
        Self { before: before.to_owned(), after: after.to_owned() }
    }
}

/// Acyclic precedence relation over subtask names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ordering {
    nodes: BTreeSet<String>,
    successors: BTreeMap<String, BTreeSet<String>>,
    predecessors: BTreeMap<String, BTreeSet<String>>,
}

impl Ordering {
    pub fn new(subtasks: &[Subtask], explicit: &[Dependency]) -> Result<Self, OrderingError> {
        let mut ordering = Ordering {
            nodes: subtasks.iter().map(|s| s.subtask_name.clone()).collect(),
            ..Ordering::default()
        };
        let mut by_parent: BTreeMap<&str, Vec<(u32, &str)>> = BTreeMap::new();
        for st in subtasks {
            if let Some(k) = st.ordinal() {
                by_parent.entry(&st.parent_task).or_default().push((k, &st.subtask_name));
            }
        }
        for siblings in by_parent.values_mut() {
            siblings.sort();
            for pair in siblings.windows(2) {
                ordering.add_edge(pair[0].1, pair[1].1);
            }
        }
        for dep in explicit {
            for name in [&dep.before, &dep.after] {
                if !ordering.nodes.contains(name) {
                    return Err(OrderingError::UnknownSubtask(name.clone()));
                }
            }
            ordering.add_edge(&dep.before, &dep.after);
        }
        ordering.topological_order(|_| 0u8)?;
        Ok(ordering)
    }

    fn add_edge(&mut self, before: &str, after: &str) {
        self.successors.entry(before.to_owned()).or_default().insert(after.to_owned());
        self.predecessors.entry(after.to_owned()).or_default().insert(before.to_owned());
    }

    pub fn predecessors(&self, name: &str) -> impl Iterator<Item = &str> {
        self.predecessors.get(name).into_iter().flatten().map(String::as_str)
    }

    pub fn successors(&self, name: &str) -> impl Iterator<Item = &str> {
        self.successors.get(name).into_iter().flatten().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.successors
            .iter()
            .flat_map(|(a, bs)| bs.iter().map(move |b| (a.as_str(), b.as_str())))
    }

    /// Kahn's algorithm; among ready nodes the one with the smallest
    /// `(priority, name)` goes first.
    pub fn topological_order<K: Ord>(&self, mut priority: impl FnMut(&str) -> K) -> Result<Vec<String>, OrderingError> {
        let mut indegree: BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        for (_, b) in self.edges() {
            *indegree.entry(b).or_default() += 1;
        }
        let mut ready: BTreeSet<(K, &str)> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| (priority(n), *n))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(next) = ready.pop_first() {
            let name = next.1;
            order.push(name.to_owned());
            for succ in self.successors(name) {
                let d = indegree.get_mut(succ).expect("successor is a node");
                *d -= 1;
                if *d == 0 {
                    ready.insert((priority(succ), succ));
                }
            }
        }
        if order.len() == indegree.len() {
            Ok(order)
        } else {
            let stuck: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d > 0).map(|(n, _)| *n).collect();
            Err(OrderingError::Cycle(self.find_cycle(&stuck)))
        }
    }

    fn find_cycle(&self, stuck: &BTreeSet<&str>) -> Vec<String> {
        // Every stuck node has a stuck predecessor, so walking backwards
        // must revisit a node.
        let Some(&start) = stuck.first() else { return Vec::new() };
        let mut path: Vec<&str> = alloc::vec![start];
        let mut current = start;
        loop {
            let prev = self
                .predecessors(current)
                .find(|p| stuck.contains(p))
                .expect("stuck node has a stuck predecessor");
            if let Some(pos) = path.iter().position(|n| *n == prev) {
                let mut cycle: Vec<String> = path[pos..].iter().rev().map(|s| (*s).to_owned()).collect();
                cycle.push(cycle[0].clone());
                return cycle;
            }
            path.push(prev);
            current = prev;
        }
    }
}
