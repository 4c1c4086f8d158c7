//! Parse-graph execution and the matching deparser.
//!
//! A [`ParseGraph`] is a set of named states. Each state extracts zero or
//! more headers, then either jumps unconditionally or selects the next state
//! on the exact value of one extracted field. Every state may run at most
//! once per packet, so parsing terminates on any input.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header::{HeaderError, PacketMeta, ParsedPacket, SchemaSet};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Target {
    State(String),
    Accept,
    Reject,
}

impl Target {
    pub fn state(name: impl Into<String>) -> Self {
        Target::State(name.into())
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::State(s) => f.write_str(s),
            Target::Accept => f.write_str("ACCEPT"),
            Target::Reject => f.write_str("REJECT"),
        }
    }
}

impl From<&str> for Target {
    fn from(s: &str) -> Self {
        match s {
            "ACCEPT" | "accept" => Target::Accept,
            "REJECT" | "reject" => Target::Reject,
            other => Target::State(other.to_string()),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Target::from(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub header: String,
    pub field: String,
    pub cases: BTreeMap<u128, Target>,
    pub default: Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseState {
    pub name: String,
    pub extracts: Vec<String>,
    pub select: Option<Select>,
    /// Used when `select` is absent.
    pub next: Target,
}

impl ParseState {
    pub fn new(name: impl Into<String>) -> Self {
        ParseState { name: name.into(), extracts: Vec::new(), select: None, next: Target::Accept }
    }

    pub fn extract(mut self, header: impl Into<String>) -> Self {
        self.extracts.push(header.into());
        self
    }

    pub fn then(mut self, next: Target) -> Self {
        self.next = next;
        self
    }

    pub fn select(
        mut self,
        header: impl Into<String>,
        field: impl Into<String>,
        cases: impl IntoIterator<Item = (u128, Target)>,
        default: Target,
    ) -> Self {
        self.select =
            Some(Select { header: header.into(), field: field.into(), cases: cases.into_iter().collect(), default });
        self
    }

    fn targets(&self) -> Vec<&Target> {
        match &self.select {
            Some(sel) => sel.cases.values().chain(std::iter::once(&sel.default)).collect(),
            None => vec![&self.next],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseGraph {
    pub start: String,
    pub states: BTreeMap<String, ParseState>,
}

impl ParseGraph {
    pub fn new(start: impl Into<String>) -> Self {
        ParseGraph { start: start.into(), states: BTreeMap::new() }
    }

    pub fn with_state(mut self, state: ParseState) -> Self {
        self.states.insert(state.name.clone(), state);
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: RawGraph = serde_json::from_str(text)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RawGraph::from(self)).expect("graph serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Underflow,
    Rejected,
    RevisitedState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} at state `{at_state}`, byte offset {offset_bytes}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub at_state: String,
    pub offset_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingStart(String),
    DanglingState(String),
    UnknownHeader { state: String, header: String },
    UnknownField { state: String, header: String, field: String },
    CaseOverflow { state: String, value: u128, bits: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingStart(s) => write!(f, "start state `{s}` is not defined"),
            Violation::DanglingState(s) => write!(f, "transition to undefined state `{s}`"),
            Violation::UnknownHeader { state, header } => {
                write!(f, "state `{state}` references unknown header `{header}`")
            }
            Violation::UnknownField { state, header, field } => {
                write!(f, "state `{state}` selects on unknown field `{header}.{field}`")
            }
            Violation::CaseOverflow { state, value, bits } => {
                write!(f, "state `{state}` has case {value:#x} wider than {bits} bits")
            }
        }
    }
}

/// Check a graph against a schema set. Returns every problem found.
pub fn validate_graph(graph: &ParseGraph, schemas: &SchemaSet) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if !graph.states.contains_key(&graph.start) {
        out.push(Violation::MissingStart(graph.start.clone()));
    }
    for state in graph.states.values() {
        for h in &state.extracts {
            if schemas.get(h).is_none() {
                out.push(Violation::UnknownHeader { state: state.name.clone(), header: h.clone() });
            }
        }
        if let Some(sel) = &state.select {
            match schemas.get(&sel.header) {
                None => out.push(Violation::UnknownHeader { state: state.name.clone(), header: sel.header.clone() }),
                Some(def) => match def.field(&sel.field) {
                    None => out.push(Violation::UnknownField {
                        state: state.name.clone(),
                        header: sel.header.clone(),
                        field: sel.field.clone(),
                    }),
                    Some(f) => {
                        for &v in sel.cases.keys().filter(|&&v| !f.fits(v)) {
                            out.push(Violation::CaseOverflow {
                                state: state.name.clone(),
                                value: v,
                                bits: f.width_bits,
                            });
                        }
                    }
                },
            }
        }
        for t in state.targets() {
            if let Target::State(name) = t {
                if !graph.states.contains_key(name) {
                    out.push(Violation::DanglingState(name.clone()));
                }
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Run the parse graph over `raw`. `meta.raw_len` is overwritten with the
/// input length.
pub fn parse(
    graph: &ParseGraph,
    schemas: &SchemaSet,
    raw: &[u8],
    mut meta: PacketMeta,
) -> Result<ParsedPacket, ParseError> {
    meta.raw_len = raw.len();
    let mut headers = Vec::new();
    let mut offset = 0usize;
    let mut visited: Vec<&str> = Vec::new();
    let mut current = graph.start.as_str();

    loop {
        let err = |kind, offset_bytes| ParseError { kind, at_state: current.to_string(), offset_bytes };
        if visited.contains(&current) {
            return Err(err(ParseErrorKind::RevisitedState, offset));
        }
        visited.push(current);
        let state = graph.states.get(current).ok_or_else(|| err(ParseErrorKind::Rejected, offset))?;

        for name in &state.extracts {
            let def = schemas.get(name).ok_or_else(|| err(ParseErrorKind::Rejected, offset))?;
            let len = def.byte_len();
            if raw.len() - offset < len {
                return Err(err(ParseErrorKind::Underflow, offset));
            }
            headers.push(def.decode(&raw[offset..offset + len]));
            offset += len;
        }

        let next = match &state.select {
            None => &state.next,
            Some(sel) => {
                let value =
                    headers.iter().rev().find(|h| h.name() == sel.header).and_then(|h| h.get_field(&sel.field).ok());
                match value {
                    Some(v) => sel.cases.get(&v).unwrap_or(&sel.default),
                    None => &Target::Reject,
                }
            }
        };
        match next {
            Target::Accept => break,
            Target::Reject => return Err(err(ParseErrorKind::Rejected, offset)),
            Target::State(s) => current = s.as_str(),
        }
    }

    Ok(ParsedPacket { headers, payload: raw[offset..].to_vec(), meta })
}

/// Serialize headers in order followed by the payload.
pub fn deparse(packet: &ParsedPacket) -> Result<Vec<u8>, HeaderError> {
    let mut out = Vec::with_capacity(packet.meta.raw_len.max(packet.payload.len()));
    for h in &packet.headers {
        h.encode_into(&mut out)?;
    }
    out.extend_from_slice(&packet.payload);
    Ok(out)
}

// JSON form: {"start": "...", "states": {"name": {"extract": [...],
// "select": {"on": "H.f", "cases": {"0x4558": "next"}, "default": "REJECT"},
// "next": "..."}}}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    start: String,
    states: BTreeMap<String, RawState>,
}

#[derive(Serialize, Deserialize)]
struct RawState {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extract: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    select: Option<RawSelect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next: Option<Target>,
}

#[derive(Serialize, Deserialize)]
struct RawSelect {
    on: String,
    cases: BTreeMap<String, Target>,
    #[serde(default = "reject")]
    default: Target,
}

fn reject() -> Target {
    Target::Reject
}

pub(crate) fn parse_uint(s: &str) -> Option<u128> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u128::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

impl TryFrom<RawGraph> for ParseGraph {
    type Error = String;

    fn try_from(raw: RawGraph) -> Result<Self, String> {
        let mut states = BTreeMap::new();
        for (name, rs) in raw.states {
            let select = match rs.select {
                None => None,
                Some(sel) => {
                    let (header, field) =
                        sel.on.split_once('.').ok_or_else(|| format!("select `{}` must be HEADER.field", sel.on))?;
                    let mut cases = BTreeMap::new();
                    for (k, t) in sel.cases {
                        let v = parse_uint(&k).ok_or_else(|| format!("bad case value `{k}`"))?;
                        cases.insert(v, t);
                    }
                    Some(Select { header: header.to_string(), field: field.to_string(), cases, default: sel.default })
                }
            };
            let state = ParseState {
                name: name.clone(),
                extracts: rs.extract,
                select,
                next: rs.next.unwrap_or(Target::Accept),
            };
            states.insert(name, state);
        }
        Ok(ParseGraph { start: raw.start, states })
    }
}

impl From<&ParseGraph> for RawGraph {
    fn from(g: &ParseGraph) -> Self {
        let states = g
            .states
            .iter()
            .map(|(name, s)| {
                let select = s.select.as_ref().map(|sel| RawSelect {
                    on: format!("{}.{}", sel.header, sel.field),
                    cases: sel.cases.iter().map(|(v, t)| (format!("{v:#x}"), t.clone())).collect(),
                    default: sel.default.clone(),
                });
                let next = s.select.is_none().then(|| s.next.clone());
                (name.clone(), RawState { extract: s.extracts.clone(), select, next })
            })
            .collect();
        RawGraph { start: g.start.clone(), states }
    }
}
