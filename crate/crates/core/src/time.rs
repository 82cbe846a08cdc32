//! Millisecond UTC timestamps and the 15-minute observation grid.
//!
//! All internal arithmetic is integer milliseconds. ISO-8601 strings appear
//! only at file boundaries.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Spacing of the engagement grid: 15 minutes.
pub const GRID_STEP_MS: i64 = 15 * 60 * 1000;
pub const HOUR_MS: i64 = 3_600_000;
/// Post-treatment effect window: 48 hours.
pub const POST_WINDOW_MS: i64 = 48 * HOUR_MS;
/// Number of grid steps in 48 hours.
pub const POST_WINDOW_STEPS: i64 = POST_WINDOW_MS / GRID_STEP_MS;

/// Absolute instant, milliseconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimestampMs(pub i64);

impl TimestampMs {
    pub fn parse_iso(s: &str) -> crate::Result<Self> {
        let dt = DateTime::parse_from_rfc3339(s.trim())
            .map_err(|e| crate::Error::DataQuality(format!("bad timestamp {s:?}: {e}")))?;
        Ok(TimestampMs(dt.with_timezone(&Utc).timestamp_millis()))
    }

    pub fn to_iso(self) -> String {
        DateTime::<Utc>::from_timestamp_millis(self.0)
            .expect("timestamp out of chrono range")
            .to_rfc3339_opts(SecondsFormat::Millis, true)
    }

    pub fn saturating_add_ms(self, ms: i64) -> Self {
        TimestampMs(self.0.saturating_add(ms))
    }
}

impl Serialize for TimestampMs {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_iso())
    }
}

impl<'de> Deserialize<'de> for TimestampMs {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        TimestampMs::parse_iso(&raw).map_err(serde::de::Error::custom)
    }
}

/// Grid step index for an age in ms: the last grid age at or before it.
/// Ages are measured from post creation and must be non-negative.
pub fn step_at_or_before(age_ms: i64) -> i64 {
    debug_assert!(age_ms >= 0);
    age_ms.div_euclid(GRID_STEP_MS)
}

/// First grid step at or after an age in ms.
pub fn step_at_or_after(age_ms: i64) -> i64 {
    debug_assert!(age_ms >= 0);
    (age_ms + GRID_STEP_MS - 1).div_euclid(GRID_STEP_MS)
}

pub fn step_to_age_ms(step: i64) -> i64 {
    step * GRID_STEP_MS
}
