//! Timesheet exports: canonical JSON, a flat CSV and a markdown week grid.

use std::fmt;
use std::str::FromStr;

use homeplan_core::time::DayIndex;
use homeplan_core::{Subtask, WeeklySchedule, to_canonical_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format `{other}` (json, csv, markdown)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Markdown => "markdown",
        })
    }
}

pub const CSV_HEADER: [&str; 6] = ["day", "start", "end", "subtask_name", "owners", "status"];

pub fn export(schedule: &WeeklySchedule, format: Format) -> String {
    match format {
        Format::Json => to_canonical_json(schedule),
        Format::Csv => to_csv(schedule),
        Format::Markdown => to_markdown(schedule),
    }
}

fn owners(st: &Subtask) -> String {
    st.owners.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(";")
}

/// Rows ordered by (day, start, name); subtasks without a slot come last
/// with empty time columns.
pub fn to_csv(schedule: &WeeklySchedule) -> String {
    let mut rows: Vec<&Subtask> = schedule.subtasks.iter().collect();
    rows.sort_by(|a, b| (a.slot.is_none(), a.slot, &a.subtask_name).cmp(&(b.slot.is_none(), b.slot, &b.subtask_name)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory csv");
    for st in rows {
        let (day, start, end) = match st.slot {
            Some(s) => (s.day().get().to_string(), s.start().to_string(), s.end().to_string()),
            None => Default::default(),
        };
        w.write_record([day.as_str(), &start, &end, &st.subtask_name, &owners(st), st.status.as_str()])
            .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

/// One column per day, one line per session in start order.
pub fn to_markdown(schedule: &WeeklySchedule) -> String {
    let days: Vec<Vec<&Subtask>> = DayIndex::all()
        .map(|d| {
            let mut v: Vec<&Subtask> = schedule.subtasks.iter().filter(|s| s.slot.is_some_and(|x| x.day() == d)).collect();
            v.sort_by_key(|s| (s.slot, s.subtask_name.clone()));
            v
        })
        .collect();
    let mut out = String::from("|");
    for d in DayIndex::all() {
        out.push_str(&format!(" {d} |"));
    }
    out.push_str("\n|");
    out.push_str(&"---|".repeat(7));
    out.push('\n');
    let rows = days.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..rows {
        out.push('|');
        for day in &days {
            match day.get(i) {
                Some(st) => {
                    let slot = st.slot.expect("filtered on slot");
                    out.push_str(&format!(
                        " {}-{} {} ({}) |",
                        slot.start(),
                        slot.end(),
                        cell(&st.subtask_name),
                        cell(&owners(st).replace(';', ", "))
                    ));
                }
                None => out.push_str("  |"),
            }
        }
        out.push('\n');
    }
    let loose: Vec<&Subtask> = schedule.subtasks.iter().filter(|s| s.slot.is_none()).collect();
    if !loose.is_empty() {
        out.push_str("\nNot scheduled:\n");
        for st in loose {
            out.push_str(&format!("- {} ({})\n", st.subtask_name, owners(st).replace(';', ", ")));
        }
    }
    out
}
