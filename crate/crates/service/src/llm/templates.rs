//! The eight prompt templates, stored as text assets under `assets/prompts`.
//!
//! Placeholders are `{name}` with `name` made of lowercase letters, digits
//! and underscores. Substitution is single-pass, so braces inside bound
//! values (JSON documents, mostly) are never re-read as placeholders.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use homeplan_core::events::TutoringMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Decompose,
    Schedule,
    ConflictFix,
    Summary,
    Dialogue,
    AnswerCheck,
    TransferPractice,
    ExplainSupport,
}

/// Bumped whenever an asset body changes.
pub const TEMPLATE_VERSION: u32 = 1;

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Decompose,
        TemplateId::Schedule,
        TemplateId::ConflictFix,
        TemplateId::Summary,
        TemplateId::Dialogue,
        TemplateId::AnswerCheck,
        TemplateId::TransferPractice,
        TemplateId::ExplainSupport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Decompose => "decompose",
            TemplateId::Schedule => "schedule",
            TemplateId::ConflictFix => "conflict_fix",
            TemplateId::Summary => "summary",
            TemplateId::Dialogue => "dialogue",
            TemplateId::AnswerCheck => "answer_check",
            TemplateId::TransferPractice => "transfer_practice",
            TemplateId::ExplainSupport => "explain_support",
        }
    }

    pub fn parse(text: &str) -> Option<TemplateId> {
        Self::ALL.into_iter().find(|t| t.as_str() == text)
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::Decompose => include_str!("../../assets/prompts/decompose.txt"),
            TemplateId::Schedule => include_str!("../../assets/prompts/schedule.txt"),
            TemplateId::ConflictFix => include_str!("../../assets/prompts/conflict_fix.txt"),
            TemplateId::Summary => include_str!("../../assets/prompts/summary.txt"),
            TemplateId::Dialogue => include_str!("../../assets/prompts/dialogue.txt"),
            TemplateId::AnswerCheck => include_str!("../../assets/prompts/answer_check.txt"),
            TemplateId::TransferPractice => include_str!("../../assets/prompts/transfer_practice.txt"),
            TemplateId::ExplainSupport => include_str!("../../assets/prompts/explain_support.txt"),
        }
    }

    /// Planning calls run at zero temperature so stubbed and live runs are
    /// reproducible; tutoring gets some variety.
    pub fn default_temperature(self) -> f32 {
        match self {
            TemplateId::Decompose | TemplateId::Schedule | TemplateId::ConflictFix | TemplateId::Summary => 0.0,
            _ => 0.7,
        }
    }

    pub fn template(self) -> PromptTemplate {
        PromptTemplate::new(self, self.body())
    }
}

impl From<TutoringMode> for TemplateId {
    fn from(mode: TutoringMode) -> Self {
        match mode {
            TutoringMode::Dialogue => TemplateId::Dialogue,
            TutoringMode::AnswerCheck => TemplateId::AnswerCheck,
            TutoringMode::TransferPractice => TemplateId::TransferPractice,
            TutoringMode::ExplainSupport => TemplateId::ExplainSupport,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("template `{template}` has unbound placeholder(s): {}", names.join(", "))]
    Unbound { template: TemplateId, names: Vec<String> },
    #[error("template `{template}` has no placeholder(s): {}", names.join(", "))]
    Unused { template: TemplateId, names: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') => {
                out.push(Piece::Text(&rest[..open]));
                out.push(Piece::Slot(n));
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    out.push(Piece::Text(rest));
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: &'static str) -> Self {
        Self { id, body }
    }

    pub fn placeholders(&self) -> BTreeSet<&'static str> {
        pieces(self.body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(n) => Some(n),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// Every placeholder must be bound and every binding must be used.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, RenderError> {
        let map: BTreeMap<&str, &str> = bindings.iter().copied().collect();
        let wanted = self.placeholders();
        let unbound: Vec<String> = wanted.iter().filter(|n| !map.contains_key(*n)).map(|n| n.to_string()).collect();
        if !unbound.is_empty() {
            return Err(RenderError::Unbound { template: self.id, names: unbound });
        }
        let unused: Vec<String> = map.keys().filter(|n| !wanted.contains(*n)).map(|n| n.to_string()).collect();
        if !unused.is_empty() {
            return Err(RenderError::Unused { template: self.id, names: unused });
        }
        let mut out = String::with_capacity(self.body.len());
        for piece in pieces(self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(n) => out.push_str(map[n]),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_sets() {
        let names = |id: TemplateId| id.template().placeholders().into_iter().collect::<Vec<_>>();
        assert_eq!(
            names(TemplateId::Decompose),
            ["child_desc", "family_desc", "format_instructions", "task_description", "task_name"]
        );
        assert_eq!(names(TemplateId::Schedule), ["format_instructions", "members", "task_assignment_dict"]);
        assert_eq!(names(TemplateId::ConflictFix), ["members", "schedule_dict_all"]);
        assert_eq!(names(TemplateId::Summary), ["final_schedule", "members", "output_language"]);
        for id in [TemplateId::Dialogue, TemplateId::AnswerCheck, TemplateId::TransferPractice, TemplateId::ExplainSupport] {
            assert!(names(id).is_empty(), "{id}");
        }
    }

    #[test]
    fn unbound_and_unused_are_errors() {
        let t = TemplateId::ConflictFix.template();
        assert_eq!(
            t.render(&[("members", "x")]),
            Err(RenderError::Unbound { template: TemplateId::ConflictFix, names: vec!["schedule_dict_all".into()] })
        );
        assert!(matches!(
            t.render(&[("members", "x"), ("schedule_dict_all", "{}"), ("memebrs", "y")]),
            Err(RenderError::Unused { .. })
        ));
    }

    #[test]
    fn bound_values_are_not_rescanned() {
        let t = TemplateId::ConflictFix.template();
        let out = t.render(&[("members", "{schedule_dict_all}"), ("schedule_dict_all", r#"{"a": {"b": 1}}"#)]).unwrap();
        assert!(out.contains("{schedule_dict_all}"));
        assert!(out.contains(r#"{"a": {"b": 1}}"#));
    }

    #[test]
    fn stray_braces_stay_literal() {
        let p = pieces("a {b} {not a slot} {} }{");
        assert_eq!(p.iter().filter(|x| matches!(x, Piece::Slot(_))).count(), 1);
        let text: String = p
            .iter()
            .map(|x| match x {
                Piece::Text(t) => (*t).to_owned(),
                Piece::Slot(n) => format!("{{{n}}}"),
            })
            .collect();
        assert_eq!(text, "a {b} {not a slot} {} }{");
    }
}
