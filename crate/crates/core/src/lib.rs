//! Pure planning core for multi-caregiver weekly learning plans.
//!
//! Covers the domain model and its canonical JSON form, deterministic
//! availability-aware scheduling, conflict detection and minimal repair,
//! rule-based plan scoring, and engagement metrics over event logs. Every
//! operation is a pure function over immutable values; the crate is
//! `no_std` and needs only `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod conflict;
pub mod evaluator;
pub mod events;
pub mod model;
pub mod ordering;
pub mod schedule_json;
pub mod scheduler;
pub mod time;

pub use model::*;
pub use schedule_json::{
    IssueKind, ParseOptions, ParsedSchedule, ScheduleError, ScheduleIssue, parse_schedule_json, parse_schedule_value,
    parse_schedule_with,
    to_canonical_json,
};
pub use time::{AvailabilityWindow, DayClass, DayIndex, Daypart, TimeOfDay, TimeSlot, slots_overlap};
