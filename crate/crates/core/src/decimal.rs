//! Fixed-point decimal with four fractional digits.
//!
//! Money amounts are compared and summed exactly as scaled integers; there is
//! no floating point anywhere on the decision path.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of fractional digits carried by [`Decimal`].
pub const SCALE_DIGITS: u32 = 4;
const SCALE: i64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Decimal(i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecimalError {
    #[error("empty decimal literal")]
    Empty,
    #[error("invalid decimal literal `{0}`")]
    Invalid(String),
    #[error("decimal literal `{0}` has more than 4 fractional digits")]
    TooPrecise(String),
    #[error("decimal literal `{0}` is out of range")]
    Overflow(String),
}

impl Decimal {
    pub const ZERO: Decimal = Decimal(0);

    pub const fn from_scaled(units: i64) -> Self {
        Decimal(units)
    }

    pub const fn scaled(self) -> i64 {
        self.0
    }

    pub fn from_int(value: i64) -> Option<Self> {
        value.checked_mul(SCALE).map(Decimal)
    }

    pub fn saturating_add(self, other: Decimal) -> Decimal {
        Decimal(self.0.saturating_add(other.0))
    }

    pub fn checked_add(self, other: Decimal) -> Option<Decimal> {
        self.0.checked_add(other.0).map(Decimal)
    }

    pub fn is_integral(self) -> bool {
        self.0 % SCALE == 0
    }

    /// Canonical form: always four fractional digits (`5000.0000`).
    pub fn to_fixed_string(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        format!("{sign}{}.{:04}", abs / SCALE as u64, abs % SCALE as u64)
    }

    /// Short form used in policy text: trailing zeros trimmed, at least one
    /// fractional digit kept so the literal still reads as a decimal.
    pub fn to_short_string(self) -> String {
        let fixed = self.to_fixed_string();
        let trimmed = fixed.trim_end_matches('0');
        if trimmed.ends_with('.') {
            format!("{trimmed}0")
        } else {
            trimmed.to_string()
        }
    }

    /// Compare against an integer without overflow.
    pub fn cmp_int(self, value: i64) -> Ordering {
        (self.0 as i128).cmp(&(value as i128 * SCALE as i128))
    }
}

impl FromStr for Decimal {
    type Err = DecimalError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        if text.is_empty() {
            return Err(DecimalError::Empty);
        }
        let invalid = || DecimalError::Invalid(text.to_string());
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) || (body.contains('.') && frac.is_empty()) {
            return Err(invalid());
        }
        if frac.len() > SCALE_DIGITS as usize {
            return Err(DecimalError::TooPrecise(text.to_string()));
        }
        let overflow = || DecimalError::Overflow(text.to_string());
        let whole: i64 = whole.parse().map_err(|_| overflow())?;
        let mut frac_units: i64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| invalid())?
        };
        for _ in frac.len()..SCALE_DIGITS as usize {
            frac_units *= 10;
        }
        let units = whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac_units))
            .ok_or_else(overflow)?;
        Ok(Decimal(if negative { -units } else { units }))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fixed_string())
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_fixed_string())
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats() {
        let d: Decimal = "5000".parse().unwrap();
        assert_eq!(d.scaled(), 50_000_000);
        assert_eq!(d.to_fixed_string(), "5000.0000");
        assert_eq!(
            "4999.5".parse::<Decimal>().unwrap().to_short_string(),
            "4999.5"
        );
        assert_eq!(
            "-0.0001".parse::<Decimal>().unwrap().to_fixed_string(),
            "-0.0001"
        );
        assert_eq!("12".parse::<Decimal>().unwrap().to_short_string(), "12.0");
    }

    #[test]
    fn rejects_bad_literals() {
        assert_eq!("".parse::<Decimal>(), Err(DecimalError::Empty));
        assert!(matches!(
            "1.23456".parse::<Decimal>(),
            Err(DecimalError::TooPrecise(_))
        ));
        assert!(matches!(
            "1.".parse::<Decimal>(),
            Err(DecimalError::Invalid(_))
        ));
        assert!(matches!(
            ".5".parse::<Decimal>(),
            Err(DecimalError::Invalid(_))
        ));
        assert!(matches!(
            "1e3".parse::<Decimal>(),
            Err(DecimalError::Invalid(_))
        ));
        assert!(matches!(
            "99999999999999999".parse::<Decimal>(),
            Err(DecimalError::Overflow(_))
        ));
    }

    #[test]
    fn integer_comparison_is_exact() {
        let d: Decimal = "5000.0001".parse().unwrap();
        assert_eq!(d.cmp_int(5000), Ordering::Greater);
        assert_eq!(
            Decimal::from_int(5000).unwrap().cmp_int(5000),
            Ordering::Equal
        );
        assert_eq!(
            Decimal::from_scaled(i64::MIN).cmp_int(i64::MIN),
            Ordering::Greater
        );
    }

    #[test]
    fn fixed_string_round_trips() {
        for units in [-123_456_789i64, -1, 0, 1, 9_999, 10_000, 50_000_001] {
            let d = Decimal::from_scaled(units);
            assert_eq!(d.to_fixed_string().parse::<Decimal>().unwrap(), d);
            assert_eq!(d.to_short_string().parse::<Decimal>().unwrap(), d);
        }
    }
}
