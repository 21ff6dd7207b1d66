//! Time-of-day arithmetic, day indices, slots and availability windows.
//!
//! All intervals are half-open `[start, end)` at one-minute resolution. A
//! slot never crosses midnight.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MINUTES_PER_DAY: u16 = 1440;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeError {
    #[error("minute of day {0} is outside 0..=1439")]
    MinuteOutOfRange(u32),
    #[error("`{0}` is not a 24-hour HH:MM time")]
    BadTimeText(String),
    #[error("day {0} is outside 1..=7")]
    DayOutOfRange(i64),
    #[error("slot start {start} is not before end {end}")]
    EmptySlot { start: TimeOfDay, end: TimeOfDay },
    #[error("weekday/weekend window {start}-{end} is not on whole hours")]
    NotHourAligned { start: TimeOfDay, end: TimeOfDay },
}

/// Minutes since midnight, 0..=1439.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeOfDay(u16);

impl TimeOfDay {
    pub const MIDNIGHT: TimeOfDay = TimeOfDay(0);
    pub const LAST_MINUTE: TimeOfDay = TimeOfDay(MINUTES_PER_DAY - 1);

    pub fn new(minutes_since_midnight: u32) -> Result<Self, TimeError> {
        if minutes_since_midnight < u32::from(MINUTES_PER_DAY) {
            Ok(Self(minutes_since_midnight as u16))
        } else {
            Err(TimeError::MinuteOutOfRange(minutes_since_midnight))
        }
    }

    /// Panics on out-of-range input; meant for literals.
    pub const fn hm(hour: u16, minute: u16) -> Self {
        assert!(hour < 24 && minute < 60);
        Self(hour * 60 + minute)
    }

    pub const fn minutes(self) -> u16 {
        self.0
    }

    pub const fn hour(self) -> u16 {
        self.0 / 60
    }

    pub const fn minute(self) -> u16 {
        self.0 % 60
    }

    pub const fn is_whole_hour(self) -> bool {
        self.0 % 60 == 0
    }

    /// Rounds to the nearest 5-minute boundary, halves rounding up, clamped
    /// to 23:55.
    pub fn quantized(self) -> Self {
        let rounded = (self.0 + 2) / 5 * 5;
        Self(rounded.min(MINUTES_PER_DAY - 5))
    }

    pub fn checked_add(self, minutes: u16) -> Option<Self> {
        let total = self.0.checked_add(minutes)?;
        (total < MINUTES_PER_DAY).then_some(Self(total))
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.hour(), self.minute())
    }
}

impl FromStr for TimeOfDay {
    type Err = TimeError;

    /// Accepts `H:MM` or `HH:MM`; renders back zero-padded.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TimeError::BadTimeText(s.into());
        let (h, m) = s.split_once(':').ok_or_else(bad)?;
        let all_digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(h) || h.len() > 2 || !all_digits(m) || m.len() != 2 {
            return Err(bad());
        }
        let hour: u16 = h.parse().map_err(|_| bad())?;
        let minute: u16 = m.parse().map_err(|_| bad())?;
        if hour > 23 || minute > 59 {
            return Err(bad());
        }
        Ok(Self(hour * 60 + minute))
    }
}

impl Serialize for TimeOfDay {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeOfDay {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = <&str>::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Abstract week day, 1..=7. Days 1-5 are treated as weekdays and 6-7 as the
/// weekend; no calendar date is implied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct DayIndex(u8);

impl DayIndex {
    pub fn new(day: i64) -> Result<Self, TimeError> {
        if (1..=7).contains(&day) {
            Ok(Self(day as u8))
        } else {
            Err(TimeError::DayOutOfRange(day))
        }
    }

    pub const fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl DoubleEndedIterator<Item = DayIndex> + Clone {
        (1..=7).map(DayIndex)
    }

    pub const fn is_weekend(self) -> bool {
        self.0 >= 6
    }
}

impl fmt::Display for DayIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Day {}", self.0)
    }
}

impl<'de> Deserialize<'de> for DayIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let day = i64::deserialize(deserializer)?;
        DayIndex::new(day).map_err(serde::de::Error::custom)
    }
}

/// Coarse part of the waking day used for spread constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Daypart {
    Morning,
    Afternoon,
    Evening,
    /// Outside 06:00-22:00.
    Night,
}

impl Daypart {
    pub const MORNING_START: TimeOfDay = TimeOfDay::hm(6, 0);
    pub const AFTERNOON_START: TimeOfDay = TimeOfDay::hm(12, 0);
    pub const EVENING_START: TimeOfDay = TimeOfDay::hm(18, 0);
    pub const EVENING_END: TimeOfDay = TimeOfDay::hm(22, 0);

    pub fn of(start: TimeOfDay) -> Self {
        if start < Self::MORNING_START || start >= Self::EVENING_END {
            Daypart::Night
        } else if start < Self::AFTERNOON_START {
            Daypart::Morning
        } else if start < Self::EVENING_START {
            Daypart::Afternoon
        } else {
            Daypart::Evening
        }
    }
}

/// Hours in which a child may work alone without an adult present.
pub const DAYTIME_START: TimeOfDay = TimeOfDay::hm(8, 0);
pub const DAYTIME_END: TimeOfDay = TimeOfDay::hm(18, 0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeSlot {
    day: DayIndex,
    start: TimeOfDay,
    end: TimeOfDay,
}

impl TimeSlot {
    pub fn new(day: DayIndex, start: TimeOfDay, end: TimeOfDay) -> Result<Self, TimeError> {
        if start < end {
            Ok(Self { day, start, end })
        } else {
            Err(TimeError::EmptySlot { start, end })
        }
    }

    /// Slot of `minutes` length beginning at `start`, if it fits in the day.
    pub fn starting_at(day: DayIndex, start: TimeOfDay, minutes: u16) -> Option<Self> {
        if minutes == 0 {
            return None;
        }
        let end = start.checked_add(minutes)?;
        Some(Self { day, start, end })
    }

    pub const fn day(&self) -> DayIndex {
        self.day
    }

    pub const fn start(&self) -> TimeOfDay {
        self.start
    }

    pub const fn end(&self) -> TimeOfDay {
        self.end
    }

    pub fn duration_minutes(&self) -> u16 {
        self.end.0 - self.start.0
    }

    pub fn overlaps(&self, other: &TimeSlot) -> bool {
        slots_overlap(self, other)
    }

    pub fn contains(&self, other: &TimeSlot) -> bool {
        self.day == other.day && self.start <= other.start && other.end <= self.end
    }

    /// Minutes since the start of Day 1; used for cross-day ordering.
    pub fn absolute_start(&self) -> u32 {
        absolute_minute(self.day, self.start)
    }

    pub fn absolute_end(&self) -> u32 {
        absolute_minute(self.day, self.end)
    }

    pub fn daypart(&self) -> Daypart {
        Daypart::of(self.start)
    }

    /// True when any minute falls in 22:00-06:00.
    pub fn intersects_night(&self) -> bool {
        self.start < Daypart::MORNING_START || self.end > Daypart::EVENING_END
    }
}

impl Serialize for TimeSlot {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("TimeSlot", 3)?;
        s.serialize_field("day", &self.day())?;
        s.serialize_field("start", &self.start())?;
        s.serialize_field("end", &self.end())?;
        s.end()
    }
}

impl fmt::Display for TimeSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}-{}", self.day, self.start, self.end)
    }
}

pub fn absolute_minute(day: DayIndex, time: TimeOfDay) -> u32 {
    u32::from(day.0 - 1) * u32::from(MINUTES_PER_DAY) + u32::from(time.0)
}

/// Half-open overlap: a shared endpoint is not an overlap.
pub fn slots_overlap(a: &TimeSlot, b: &TimeSlot) -> bool {
    a.day == b.day && a.start < b.end && b.start < a.end
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DayClass {
    Weekday,
    Weekend,
    Day(DayIndex),
}

impl DayClass {
    pub fn days(self) -> impl Iterator<Item = DayIndex> {
        DayIndex::all().filter(move |d| match self {
            DayClass::Weekday => !d.is_weekend(),
            DayClass::Weekend => d.is_weekend(),
            DayClass::Day(only) => *d == only,
        })
    }
}

impl Serialize for DayClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            DayClass::Weekday => serializer.serialize_str("weekday"),
            DayClass::Weekend => serializer.serialize_str("weekend"),
            DayClass::Day(d) => serializer.serialize_u8(d.get()),
        }
    }
}

impl<'de> Deserialize<'de> for DayClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<'a> {
            Day(i64),
            Text(&'a str),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Day(d) => DayIndex::new(d).map(DayClass::Day).map_err(serde::de::Error::custom),
            Raw::Text("weekday") => Ok(DayClass::Weekday),
            Raw::Text("weekend") => Ok(DayClass::Weekend),
            Raw::Text(other) => Err(serde::de::Error::custom(alloc::format!(
                "unknown day class `{other}`"
            ))),
        }
    }
}

/// A recurring interval during which a caregiver can tutor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct AvailabilityWindow {
    pub day_class: DayClass,
    pub start: TimeOfDay,
    pub end: TimeOfDay,
}

impl AvailabilityWindow {
    pub fn new(day_class: DayClass, start: TimeOfDay, end: TimeOfDay) -> Result<Self, TimeError> {
        if start >= end {
            return Err(TimeError::EmptySlot { start, end });
        }
        let hour_granular = matches!(day_class, DayClass::Weekday | DayClass::Weekend);
        if hour_granular && !(start.is_whole_hour() && end.is_whole_hour()) {
            return Err(TimeError::NotHourAligned { start, end });
        }
        Ok(Self { day_class, start, end })
    }

    pub fn slots(&self) -> impl Iterator<Item = TimeSlot> + '_ {
        self.day_class.days().map(move |day| TimeSlot {
            day,
            start: self.start,
            end: self.end,
        })
    }
}

impl<'de> Deserialize<'de> for AvailabilityWindow {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            day_class: DayClass,
            start: TimeOfDay,
            end: TimeOfDay,
        }
        let raw = Raw::deserialize(deserializer)?;
        AvailabilityWindow::new(raw.day_class, raw.start, raw.end).map_err(serde::de::Error::custom)
    }
}

/// Expands windows into per-day slots and merges overlapping or touching
/// intervals into maximal disjoint slots, sorted by day then start.
pub fn merge_windows<'a>(windows: impl IntoIterator<Item = &'a AvailabilityWindow>) -> Vec<TimeSlot> {
    let mut raw: Vec<TimeSlot> = windows.into_iter().flat_map(|w| w.slots()).collect();
    raw.sort();
    let mut merged: Vec<TimeSlot> = Vec::with_capacity(raw.len());
    for slot in raw {
        match merged.last_mut() {
            Some(last) if last.day == slot.day && slot.start <= last.end => {
                if slot.end > last.end {
                    last.end = slot.end;
                }
            }
            _ => merged.push(slot),
        }
    }
    merged
}
