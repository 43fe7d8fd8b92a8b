//! Physical quantities with explicit units.
//!
//! Configuration files spell every physical quantity as a string with a unit
//! (`"100 kHz"`, `"-174 dBm/Hz"`, `"3 km"`). Values are normalized to SI on
//! parse and serialized back in SI so that a load/serialize/load cycle is exact.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("cannot parse quantity {0:?}: expected \"<number> <unit>\"")]
    Malformed(String),
    #[error("unknown unit {unit:?} in {input:?}")]
    UnknownUnit { input: String, unit: String },
    #[error("quantity {input:?} has dimension {found}, expected {expected}")]
    WrongDimension {
        input: String,
        found: Dimension,
        expected: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Frequency,
    Length,
    Power,
    PowerDensity,
    Bits,
    BitRate,
    EventRate,
    Time,
}

impl Dimension {
    pub fn si_unit(self) -> &'static str {
        match self {
            Dimension::Frequency => "Hz",
            Dimension::Length => "m",
            Dimension::Power => "W",
            Dimension::PowerDensity => "W/Hz",
            Dimension::Bits => "bit",
            Dimension::BitRate => "bps",
            Dimension::EventRate => "/s",
            Dimension::Time => "s",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Frequency => "frequency",
            Dimension::Length => "length",
            Dimension::Power => "power",
            Dimension::PowerDensity => "power density",
            Dimension::Bits => "data size",
            Dimension::BitRate => "bit rate",
            Dimension::EventRate => "event rate",
            Dimension::Time => "time",
        };
        f.write_str(name)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// A value in SI units tagged with its dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub dim: Dimension,
}

impl Quantity {
    pub fn new(value: f64, dim: Dimension) -> Self {
        Self { value, dim }
    }

    /// Returns the SI value if the dimension is one of `allowed`.
    pub fn expect(&self, allowed: &[Dimension]) -> Result<f64, UnitError> {
        if allowed.contains(&self.dim) {
            Ok(self.value)
        } else {
            Err(UnitError::WrongDimension {
                input: self.to_string(),
                found: self.dim,
                expected: allowed
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(" or "),
            })
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        write!(f, "{} {}", self.value, self.dim.si_unit())
    }
}

fn lookup_unit(unit: &str) -> Option<(Dimension, Scale)> {
    use Dimension::*;
    let hit = match unit {
        "Hz" => (Frequency, Scale::Linear(1.0)),
        "kHz" => (Frequency, Scale::Linear(1e3)),
        "MHz" => (Frequency, Scale::Linear(1e6)),
        "GHz" => (Frequency, Scale::Linear(1e9)),
        "m" => (Length, Scale::Linear(1.0)),
        "km" => (Length, Scale::Linear(1e3)),
        "W" => (Power, Scale::Linear(1.0)),
        "mW" => (Power, Scale::Linear(1e-3)),
        "dBm" => (Power, Scale::Dbm),
        "dBW" => (Power, Scale::Dbw),
        "W/Hz" => (PowerDensity, Scale::Linear(1.0)),
        "mW/Hz" => (PowerDensity, Scale::Linear(1e-3)),
        "dBm/Hz" => (PowerDensity, Scale::Dbm),
        "bit" | "bits" => (Bits, Scale::Linear(1.0)),
        "kbit" => (Bits, Scale::Linear(1e3)),
        "Mbit" => (Bits, Scale::Linear(1e6)),
        "bps" | "bit/s" => (BitRate, Scale::Linear(1.0)),
        "kbps" => (BitRate, Scale::Linear(1e3)),
        "Mbps" | "Mb/s" => (BitRate, Scale::Linear(1e6)),
        "Gbps" => (BitRate, Scale::Linear(1e9)),
        "/s" | "1/s" | "pkt/s" | "svc/s" => (EventRate, Scale::Linear(1.0)),
        "s" => (Time, Scale::Linear(1.0)),
        "ms" => (Time, Scale::Linear(1e-3)),
        "us" => (Time, Scale::Linear(1e-6)),
        _ => return None,
    };
    Some(hit)
}

#[derive(Clone, Copy)]
enum Scale {
    Linear(f64),
    Dbm,
    Dbw,
}

impl FromStr for Quantity {
    type Err = UnitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let split = trimmed
            .find(|c: char| c.is_whitespace())
            .ok_or_else(|| UnitError::Malformed(s.to_string()))?;
        let (num, unit) = trimmed.split_at(split);
        let unit = unit.trim();
        let number: f64 = num
            .parse()
            .map_err(|_| UnitError::Malformed(s.to_string()))?;
        if !number.is_finite() {
            return Err(UnitError::Malformed(s.to_string()));
        }
        let (dim, scale) = lookup_unit(unit).ok_or_else(|| UnitError::UnknownUnit {
            input: s.to_string(),
            unit: unit.to_string(),
        })?;
        let value = match scale {
            Scale::Linear(k) => number * k,
            Scale::Dbm => dbm_to_watts(number),
            Scale::Dbw => 10f64.powf(number / 10.0),
        };
        Ok(Quantity { value, dim })
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct QuantityVisitor;

        impl Visitor<'_> for QuantityVisitor {
            type Value = Quantity;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a quantity string with a unit, e.g. \"100 kHz\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Quantity, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Quantity, E> {
                Err(E::custom(format!(
                    "unit-less physical quantity {v}; write it as a string with a unit, e.g. \"{v} kHz\""
                )))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Quantity, E> {
                self.visit_i64(v as i64)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Quantity, E> {
                Err(E::custom(format!(
                    "unit-less physical quantity {v}; write it as a string with a unit, e.g. \"{v} km\""
                )))
            }
        }

        deserializer.deserialize_any(QuantityVisitor)
    }
}
