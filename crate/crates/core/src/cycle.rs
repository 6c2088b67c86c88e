//! Forecast cycle times (00Z, 06Z, 12Z, 18Z) and their text forms.

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};

pub const CYCLE_SECONDS: i64 = 6 * 3600;

/// The latest cycle time at or before `t`.
pub fn align_cycle(t: DateTime<Utc>) -> DateTime<Utc> {
    let secs = t.timestamp().div_euclid(CYCLE_SECONDS) * CYCLE_SECONDS;
    Utc.timestamp_opt(secs, 0).single().expect("aligned timestamp in range")
}

pub fn is_cycle_aligned(t: DateTime<Utc>) -> bool {
    t.timestamp_subsec_nanos() == 0 && t.timestamp().rem_euclid(CYCLE_SECONDS) == 0
}

/// Extended ISO-8601, e.g. `2026-02-03T06:00:00Z`.
pub fn iso8601(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Basic ISO-8601, e.g. `20260203T060000Z`; used in object and file names.
pub fn iso8601_basic(t: DateTime<Utc>) -> String {
    t.format("%Y%m%dT%H%M%SZ").to_string()
}

/// Accepts RFC 3339, the basic form, and `YYYY-MM-DDTHH:MMZ`.
pub fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y%m%dT%H%M%SZ", "%Y-%m-%dT%H:%MZ", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&n));
        }
    }
    None
}
