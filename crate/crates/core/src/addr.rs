//! Address text form (`0x` + 16 uppercase hex digits) and serde helpers that
//! accept either a hex string or a plain JSON number.

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serializer};

use crate::parser::parse_uint;

pub fn format_addr(addr: u64) -> String {
    format!("0x{addr:016X}")
}

pub fn parse_addr(s: &str) -> Option<u64> {
    parse_uint(s).and_then(|v| u64::try_from(v).ok())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum UintRepr {
    Num(u64),
    Text(String),
}

pub(crate) fn de_uint<'de, D, T>(d: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: TryFrom<u128>,
{
    let v = match UintRepr::deserialize(d)? {
        UintRepr::Num(n) => n as u128,
        UintRepr::Text(s) => parse_uint(&s).ok_or_else(|| de::Error::custom(format!("bad integer `{s}`")))?,
    };
    T::try_from(v).map_err(|_| de::Error::custom(format!("integer {v:#x} out of range")))
}

/// `#[serde(with = "hex_addr")]` for `u64` addresses.
pub mod hex_addr {
    use super::*;

    pub fn serialize<S: Serializer>(addr: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_addr(*addr))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        de_uint(d)
    }
}
