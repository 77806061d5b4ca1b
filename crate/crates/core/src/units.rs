//! Unit-aware parsing for power quantities in config files.
//!
//! Powers may be given as a bare number (watts) or as a string with a unit
//! suffix: `"40 mW"`, `"-70 dBm"`, `"1e-10 W"`, `"2 uW"`.

use serde::{de, Deserialize, Deserializer};

use crate::error::{IracError, Result};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn parse_power(text: &str) -> Result<f64> {
    let t = text.trim();
    let split = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| IracError::Parse(format!("invalid power quantity {text:?}")))?;
    let watts = match unit.trim() {
        "" | "W" => value,
        "mW" => value * 1e-3,
        "uW" | "µW" => value * 1e-6,
        "dBm" => dbm_to_watts(value),
        "dBW" => 10f64.powf(value / 10.0),
        other => {
            return Err(IracError::Parse(format!(
                "unknown power unit {other:?} in {text:?}"
            )))
        }
    };
    Ok(watts)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PowerRepr {
    Number(f64),
    Text(String),
}

impl PowerRepr {
    fn into_watts<E: de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            PowerRepr::Number(v) => Ok(v),
            PowerRepr::Text(s) => parse_power(&s).map_err(E::custom),
        }
    }
}

pub fn de_power<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    PowerRepr::deserialize(d)?.into_watts()
}

pub fn de_power_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<PowerRepr>::deserialize(d)?
        .into_iter()
        .map(PowerRepr::into_watts)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minus_seventy_dbm_is_1e_minus_10_watts() {
        assert!((dbm_to_watts(-70.0) - 1e-10).abs() < 1e-24);
        assert!((parse_power("-70 dBm").unwrap() - 1e-10).abs() < 1e-24);
    }

    #[test]
    fn suffixes() {
        assert_eq!(parse_power("40 mW").unwrap(), 0.04);
        assert_eq!(parse_power("1e-10 W").unwrap(), 1e-10);
        assert_eq!(parse_power("0.5").unwrap(), 0.5);
        assert!((parse_power("10dBm").unwrap() - 0.01).abs() < 1e-15);
        assert!(parse_power("3 furlongs").is_err());
        assert!(parse_power("mW").is_err());
    }

    #[test]
    fn dbm_round_trip() {
        for w in [1e-12, 1e-3, 0.04, 2.0] {
            assert!((dbm_to_watts(watts_to_dbm(w)) - w).abs() <= 1e-12 * w);
        }
    }
}
