//! Feeder files shipped with the crate.

use crate::network::{FeederNetwork, NetworkError};
use crate::Scalar;

pub const IEEE13_JSON: &str = include_str!("../data/ieee13.json");
pub const IEEE123_JSON: &str = include_str!("../data/ieee123.json");

/// Bundled file contents by file name (`ieee13.json`) or stem (`ieee13`).
pub fn by_name(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".json") {
        "ieee13" => Some(IEEE13_JSON),
        "ieee123" => Some(IEEE123_JSON),
        _ => None,
    }
}

/// The IEEE 13-bus feeder with its PV units, in per-unit form.
pub fn ieee13<T: Scalar>() -> Result<FeederNetwork<T>, NetworkError> {
    FeederNetwork::from_json_str(IEEE13_JSON)?.to_per_unit()
}

/// The IEEE 123-bus feeder with its PV units, in per-unit form.
pub fn ieee123<T: Scalar>() -> Result<FeederNetwork<T>, NetworkError> {
    FeederNetwork::from_json_str(IEEE123_JSON)?.to_per_unit()
}
