//! Positive quantities that may be unbounded.
//!
//! Budget periods such as `tau_D` and `T` are allowed to be infinite (no DoS).
//! Keeping the infinite case symbolic means `1/T` and `delta/tau_D` evaluate to
//! an exact zero instead of going through floating infinity.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    /// `1/self`, exactly zero when unbounded.
    pub fn recip(self) -> f64 {
        match self {
            Bound::Finite(v) => 1.0 / v,
            Bound::Unbounded => 0.0,
        }
    }

    /// Floating value, `f64::INFINITY` when unbounded.
    pub fn value(self) -> f64 {
        match self {
            Bound::Finite(v) => v,
            Bound::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Bound::Unbounded)
    }

    /// `numerator / self`, exactly zero when unbounded.
    pub fn ratio(self, numerator: f64) -> f64 {
        match self {
            Bound::Finite(v) => numerator / v,
            Bound::Unbounded => 0.0,
        }
    }

    /// `numerator / denominator`, unbounded when the denominator is zero.
    pub fn quotient(numerator: f64, denominator: f64) -> Bound {
        if denominator == 0.0 {
            Bound::Unbounded
        } else {
            Bound::Finite(numerator / denominator)
        }
    }
}

impl From<f64> for Bound {
    fn from(v: f64) -> Self {
        if v.is_infinite() && v > 0.0 {
            Bound::Unbounded
        } else {
            Bound::Finite(v)
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Bound::Finite(v) => serializer.serialize_f64(*v),
            Bound::Unbounded => serializer.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(Bound::Finite(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Bound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unbounded" | "inf" | "infinity" | "∞" => Ok(Bound::Unbounded),
            other => other
                .parse::<f64>()
                .map(Bound::from)
                .map_err(|_| format!("expected a number or \"unbounded\", got {s:?}")),
        }
    }
}
