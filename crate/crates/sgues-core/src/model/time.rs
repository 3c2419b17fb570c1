//! Exact event-time representation.
//!
//! Event times are stored as integer counts of a fixed 1 ns resolution so
//! that half-open interval counting over `(t0, t]` has no floating-point
//! boundary ambiguity. All signal bookkeeping (counters, activation times)
//! is carried out on ticks and converted to seconds only at the edges.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Ticks per second.
pub const TICKS_PER_SEC: i64 = 1_000_000_000;

/// A point in time measured in integer nanosecond ticks from zero.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Time(i64);

impl Time {
    pub const ZERO: Time = Time(0);

    pub fn from_ticks(ticks: i64) -> Self {
        Time(ticks)
    }

    pub fn ticks(self) -> i64 {
        self.0
    }

    /// Nearest-tick conversion from seconds. Prefer [`Time::parse_decimal`]
    /// when the source is a decimal literal.
    pub fn from_secs_f64(secs: f64) -> Self {
        Time((secs * TICKS_PER_SEC as f64).round() as i64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_SEC as f64
    }

    /// Parses a decimal literal (`"10"`, `"0.085"`, `"-0.03"`) exactly.
    ///
    /// Fails on malformed input or on more than nine fractional digits,
    /// which would not be representable on the tick grid.
    pub fn parse_decimal(text: &str) -> Result<Self, TimeParseError> {
        let trimmed = text.trim();
        let (negative, digits) = match trimmed.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
        };
        if digits.is_empty() {
            return Err(TimeParseError::Malformed(text.to_string()));
        }
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits, ""),
        };
        if frac_part.len() > 9 {
            return Err(TimeParseError::TooFine(text.to_string()));
        }
        if int_part.chars().any(|c| !c.is_ascii_digit())
            || frac_part.chars().any(|c| !c.is_ascii_digit())
            || (int_part.is_empty() && frac_part.is_empty())
        {
            return Err(TimeParseError::Malformed(text.to_string()));
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| TimeParseError::Malformed(text.to_string()))?
        };
        let mut frac: i64 = 0;
        for c in frac_part.chars() {
            frac = frac * 10 + i64::from(c as u8 - b'0');
        }
        frac *= 10_i64.pow(9 - frac_part.len() as u32);
        let ticks = whole
            .checked_mul(TICKS_PER_SEC)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(|| TimeParseError::Malformed(text.to_string()))?;
        Ok(Time(if negative { -ticks } else { ticks }))
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / TICKS_PER_SEC as u64;
        let frac = abs % TICKS_PER_SEC as u64;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let text = format!("{frac:09}");
            write!(f, "{sign}{whole}.{}", text.trim_end_matches('0'))
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TimeParseError {
    #[error("malformed decimal time literal `{0}`")]
    Malformed(String),
    #[error("time literal `{0}` is finer than the 1 ns tick resolution")]
    TooFine(String),
}
