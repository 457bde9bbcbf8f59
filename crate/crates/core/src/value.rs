//! Scalar values carried in request arguments, set literals and expressions.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decimal::Decimal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarType {
    String,
    Integer,
    Decimal,
    Boolean,
}

impl ScalarType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ScalarType::Integer | ScalarType::Decimal)
    }

    /// Integers and decimals compare with each other; everything else only
    /// with itself.
    pub fn comparable_with(self, other: ScalarType) -> bool {
        self == other || (self.is_numeric() && other.is_numeric())
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ScalarType::String => "string",
            ScalarType::Integer => "integer",
            ScalarType::Decimal => "decimal",
            ScalarType::Boolean => "boolean",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Some(match word {
            "string" => ScalarType::String,
            "integer" => ScalarType::Integer,
            "decimal" => ScalarType::Decimal,
            "boolean" => ScalarType::Boolean,
            _ => return None,
        })
    }
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scalar {
    Str(String),
    Int(i64),
    Dec(Decimal),
    Bool(bool),
}

impl Scalar {
    pub fn scalar_type(&self) -> ScalarType {
        match self {
            Scalar::Str(_) => ScalarType::String,
            Scalar::Int(_) => ScalarType::Integer,
            Scalar::Dec(_) => ScalarType::Decimal,
            Scalar::Bool(_) => ScalarType::Boolean,
        }
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Scalar::Int(i) => Decimal::from_int(*i),
            Scalar::Dec(d) => Some(*d),
            _ => None,
        }
    }

    /// Whether a value of this scalar may stand where `expected` is declared.
    /// An integer satisfies a decimal field; a decimal never satisfies an
    /// integer field.
    pub fn conforms_to(&self, expected: ScalarType) -> bool {
        match (self, expected) {
            (Scalar::Int(_), ScalarType::Decimal) => true,
            _ => self.scalar_type() == expected,
        }
    }

    /// Ordering between comparable scalars; `None` when the types differ.
    pub fn compare(&self, other: &Scalar) -> Option<Ordering> {
        match (self, other) {
            (Scalar::Str(a), Scalar::Str(b)) => Some(a.cmp(b)),
            (Scalar::Bool(a), Scalar::Bool(b)) => Some(a.cmp(b)),
            (Scalar::Int(a), Scalar::Int(b)) => Some(a.cmp(b)),
            (Scalar::Dec(a), Scalar::Dec(b)) => Some(a.cmp(b)),
            (Scalar::Dec(a), Scalar::Int(b)) => Some(a.cmp_int(*b)),
            (Scalar::Int(a), Scalar::Dec(b)) => Some(b.cmp_int(*a).reverse()),
            _ => None,
        }
    }

    /// Literal syntax shared by the policy and expression languages.
    pub fn to_literal(&self) -> String {
        match self {
            Scalar::Str(s) => quote(s),
            Scalar::Int(i) => i.to_string(),
            Scalar::Dec(d) => d.to_short_string(),
            Scalar::Bool(b) => b.to_string(),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Str(s) => f.write_str(s),
            other => f.write_str(&other.to_literal()),
        }
    }
}

pub fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

// Wire form: plain JSON scalars. Integers stay integers; JSON numbers with a
// fractional part become decimals (at most four fractional digits).
impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Str(s) => serializer.serialize_str(s),
            Scalar::Int(i) => serializer.serialize_i64(*i),
            Scalar::Bool(b) => serializer.serialize_bool(*b),
            Scalar::Dec(d) => {
                let number: serde_json::Number = d
                    .to_short_string()
                    .parse()
                    .map_err(serde::ser::Error::custom)?;
                number.serialize(serializer)
            }
        }
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ScalarVisitor;

        impl Visitor<'_> for ScalarVisitor {
            type Value = Scalar;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a string, integer, decimal or boolean")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Scalar, E> {
                Ok(Scalar::Str(v.to_string()))
            }

            fn visit_string<E: de::Error>(self, v: String) -> Result<Scalar, E> {
                Ok(Scalar::Str(v))
            }

            fn visit_bool<E: de::Error>(self, v: bool) -> Result<Scalar, E> {
                Ok(Scalar::Bool(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Scalar, E> {
                Ok(Scalar::Int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scalar, E> {
                i64::try_from(v)
                    .map(Scalar::Int)
                    .map_err(|_| E::custom("integer out of range"))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Scalar, E> {
                if !v.is_finite() {
                    return Err(E::custom("non-finite number"));
                }
                let mut text = v.to_string();
                if !text.contains('.') {
                    text.push_str(".0");
                }
                text.parse::<Decimal>().map(Scalar::Dec).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ScalarVisitor)
    }
}

/// Ledger form of a scalar: explicit type tag, numbers as fixed-point strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum TaggedScalar {
    String(String),
    Integer(Decimal),
    Decimal(Decimal),
    Boolean(bool),
}

impl From<&Scalar> for TaggedScalar {
    fn from(value: &Scalar) -> Self {
        match value {
            Scalar::Str(s) => TaggedScalar::String(s.clone()),
            Scalar::Int(i) => TaggedScalar::Integer(Decimal::from_int(*i).unwrap_or(
                Decimal::from_scaled(if *i < 0 { i64::MIN } else { i64::MAX }),
            )),
            Scalar::Dec(d) => TaggedScalar::Decimal(*d),
            Scalar::Bool(b) => TaggedScalar::Boolean(*b),
        }
    }
}

impl TryFrom<&TaggedScalar> for Scalar {
    type Error = String;

    fn try_from(value: &TaggedScalar) -> Result<Self, Self::Error> {
        Ok(match value {
            TaggedScalar::String(s) => Scalar::Str(s.clone()),
            TaggedScalar::Integer(d) if d.is_integral() => Scalar::Int(d.scaled() / 10_000),
            TaggedScalar::Integer(d) => {
                return Err(format!("integer value {d} has a fractional part"))
            }
            TaggedScalar::Decimal(d) => Scalar::Dec(*d),
            TaggedScalar::Boolean(b) => Scalar::Bool(*b),
        })
    }
}
