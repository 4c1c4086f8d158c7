//! Declarative header layouts and their runtime instances.
//!
//! A [`HeaderDef`] is an ordered list of bit-fields packed MSB-first in
//! network byte order. Sub-byte fields are allowed as long as the whole
//! header is byte aligned. Values are carried as `u128`, so no field may be
//! wider than 128 bits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_FIELD_BITS: u32 = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeaderError {
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("field `{field}` has width {bits}, expected 1..=128")]
    WidthOutOfRange { field: String, bits: u32 },
    #[error("header `{header}` is {bits} bits wide, not a multiple of 8")]
    NotByteAligned { header: String, bits: u32 },
    #[error("header `{0}` has no fields")]
    Empty(String),
    #[error("no field `{0}`")]
    NoSuchField(String),
    #[error("header `{0}` is not valid")]
    InvalidHeader(String),
    #[error("value {value:#x} does not fit field `{field}` ({bits} bits)")]
    ValueOverflow { field: String, value: u128, bits: u32 },
    #[error("header `{0}` defined twice")]
    DuplicateHeader(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    #[serde(rename = "bits")]
    pub width_bits: u32,
}

impl FieldDef {
    pub fn new(name: impl Into<String>, width_bits: u32) -> Self {
        FieldDef { name: name.into(), width_bits }
    }

    /// Largest value the field can hold.
    pub fn max_value(&self) -> u128 {
        if self.width_bits >= 128 {
            u128::MAX
        } else {
            (1u128 << self.width_bits) - 1
        }
    }

    pub fn fits(&self, value: u128) -> bool {
        value <= self.max_value()
    }
}

/// An immutable header layout. Build one with [`define_header`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHeaderDef", into = "RawHeaderDef")]
pub struct HeaderDef {
    name: String,
    fields: Vec<FieldDef>,
    // bit offset of each field from the start of the header
    offsets: Vec<u32>,
    total_bits: u32,
}

#[derive(Serialize, Deserialize)]
struct RawHeaderDef {
    name: String,
    fields: Vec<FieldDef>,
}

impl TryFrom<RawHeaderDef> for HeaderDef {
    type Error = HeaderError;

    fn try_from(raw: RawHeaderDef) -> Result<Self, Self::Error> {
        define_header(raw.name, raw.fields)
    }
}

impl From<HeaderDef> for RawHeaderDef {
    fn from(def: HeaderDef) -> Self {
        RawHeaderDef { name: def.name, fields: def.fields }
    }
}

/// Validate a field list and build a header definition from it.
pub fn define_header(name: impl Into<String>, fields: Vec<FieldDef>) -> Result<HeaderDef, HeaderError> {
    let name = name.into();
    if fields.is_empty() {
        return Err(HeaderError::Empty(name));
    }
    let mut seen = HashSet::new();
    let mut offsets = Vec::with_capacity(fields.len());
    let mut total: u32 = 0;
    for f in &fields {
        if f.width_bits == 0 || f.width_bits > MAX_FIELD_BITS {
            return Err(HeaderError::WidthOutOfRange { field: f.name.clone(), bits: f.width_bits });
        }
        if !seen.insert(f.name.as_str()) {
            return Err(HeaderError::DuplicateField(f.name.clone()));
        }
        offsets.push(total);
        total += f.width_bits;
    }
    if !total.is_multiple_of(8) {
        return Err(HeaderError::NotByteAligned { header: name, bits: total });
    }
    Ok(HeaderDef { name, fields, offsets, total_bits: total })
}

impl HeaderDef {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fields(&self) -> &[FieldDef] {
        &self.fields
    }

    pub fn total_width_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn byte_len(&self) -> usize {
        (self.total_bits / 8) as usize
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Byte offset of a field inside the header, if it starts on a byte boundary.
    pub fn byte_offset_of(&self, name: &str) -> Option<usize> {
        let i = self.field_index(name)?;
        let bits = self.offsets[i];
        bits.is_multiple_of(8).then_some((bits / 8) as usize)
    }

    /// Decode one instance from the front of `bytes`. The caller guarantees
    /// `bytes.len() >= self.byte_len()`.
    pub fn decode(self: &Arc<Self>, bytes: &[u8]) -> HeaderInstance {
        let values =
            self.fields.iter().zip(&self.offsets).map(|(f, &off)| read_bits(bytes, off, f.width_bits)).collect();
        HeaderInstance { def: Arc::clone(self), values, valid: true }
    }
}

fn read_bits(bytes: &[u8], mut offset: u32, width: u32) -> u128 {
    let mut remaining = width;
    let mut value: u128 = 0;
    while remaining > 0 {
        let byte = bytes[(offset / 8) as usize];
        let bit = offset % 8;
        let take = (8 - bit).min(remaining);
        let part = (byte >> (8 - bit - take)) & (((1u16 << take) - 1) as u8);
        value = (value << take) | part as u128;
        offset += take;
        remaining -= take;
    }
    value
}

fn write_bits(out: &mut [u8], mut offset: u32, width: u32, value: u128) {
    let mut remaining = width;
    while remaining > 0 {
        let bit = offset % 8;
        let take = (8 - bit).min(remaining);
        let part = ((value >> (remaining - take)) as u8) & (((1u16 << take) - 1) as u8);
        out[(offset / 8) as usize] |= part << (8 - bit - take);
        offset += take;
        remaining -= take;
    }
}

/// Runtime value of a header: one value per field of its definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderInstance {
    def: Arc<HeaderDef>,
    values: Vec<u128>,
    pub valid: bool,
}

impl HeaderInstance {
    /// A valid instance with every field zeroed.
    pub fn zeroed(def: Arc<HeaderDef>) -> Self {
        let values = vec![0; def.fields.len()];
        HeaderInstance { def, values, valid: true }
    }

    /// Build an instance from `(field, value)` pairs; unnamed fields stay zero.
    pub fn with_values(def: Arc<HeaderDef>, values: &[(&str, u128)]) -> Result<Self, HeaderError> {
        let mut h = HeaderInstance::zeroed(def);
        for (name, v) in values {
            h.set_field(name, *v)?;
        }
        Ok(h)
    }

    pub fn def(&self) -> &Arc<HeaderDef> {
        &self.def
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn get_field(&self, name: &str) -> Result<u128, HeaderError> {
        if !self.valid {
            return Err(HeaderError::InvalidHeader(self.def.name.clone()));
        }
        self.def.field_index(name).map(|i| self.values[i]).ok_or_else(|| HeaderError::NoSuchField(name.to_string()))
    }

    pub fn set_field(&mut self, name: &str, value: u128) -> Result<(), HeaderError> {
        let i = self.def.field_index(name).ok_or_else(|| HeaderError::NoSuchField(name.to_string()))?;
        let f = &self.def.fields[i];
        if !f.fits(value) {
            return Err(HeaderError::ValueOverflow { field: name.to_string(), value, bits: f.width_bits });
        }
        self.values[i] = value;
        Ok(())
    }

    /// `(field name, value)` pairs in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u128)> {
        self.def.fields.iter().map(|f| f.name.as_str()).zip(self.values.iter().copied())
    }

    /// Append the big-endian encoding of this header to `out`.
    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), HeaderError> {
        if !self.valid {
            return Err(HeaderError::InvalidHeader(self.def.name.clone()));
        }
        let start = out.len();
        out.resize(start + self.def.byte_len(), 0);
        let buf = &mut out[start..];
        for ((f, &off), &v) in self.def.fields.iter().zip(&self.def.offsets).zip(&self.values) {
            write_bits(buf, off, f.width_bits, v);
        }
        Ok(())
    }
}

impl fmt::Display for HeaderInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.def.name)?;
        for (i, (name, v)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}={v:#x}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketMeta {
    pub ingress_port: u16,
    pub timestamp_s: f64,
    pub raw_len: usize,
}

impl PacketMeta {
    pub fn new(ingress_port: u16, timestamp_s: f64) -> Self {
        PacketMeta { ingress_port, timestamp_s, raw_len: 0 }
    }
}

/// Extracted header stack plus the unparsed remainder of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPacket {
    pub headers: Vec<HeaderInstance>,
    pub payload: Vec<u8>,
    pub meta: PacketMeta,
}

impl ParsedPacket {
    pub fn header(&self, name: &str) -> Option<&HeaderInstance> {
        self.headers.iter().find(|h| h.name() == name)
    }

    pub fn header_mut(&mut self, name: &str) -> Option<&mut HeaderInstance> {
        self.headers.iter_mut().find(|h| h.name() == name)
    }

    /// Valid header's field value, if the header was extracted.
    pub fn field(&self, header: &str, field: &str) -> Option<u128> {
        self.header(header).and_then(|h| h.get_field(field).ok())
    }
}

/// Registered header definitions, keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaSet {
    defs: BTreeMap<String, Arc<HeaderDef>>,
}

impl SchemaSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, def: HeaderDef) -> Result<Arc<HeaderDef>, HeaderError> {
        if self.defs.contains_key(def.name()) {
            return Err(HeaderError::DuplicateHeader(def.name().to_string()));
        }
        let def = Arc::new(def);
        self.defs.insert(def.name().to_string(), Arc::clone(&def));
        Ok(def)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<HeaderDef>> {
        self.defs.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<HeaderDef>> {
        self.defs.values()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    /// Load a schema set from a JSON array of header documents (or a single
    /// header document).
    pub fn from_json(text: &str) -> Result<Self, SchemaLoadError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let defs: Vec<HeaderDef> = match value {
            serde_json::Value::Array(_) => serde_json::from_value(value)?,
            other => vec![serde_json::from_value(other)?],
        };
        let mut set = SchemaSet::new();
        for d in defs {
            set.register(d)?;
        }
        Ok(set)
    }
}

#[derive(Debug, Error)]
pub enum SchemaLoadError {
    #[error("malformed schema JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Header(#[from] HeaderError),
}
