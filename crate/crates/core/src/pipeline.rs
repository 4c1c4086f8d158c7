//! The six-stage switch pipeline: parser, verify-checksum, ingress tables,
//! egress, compute-checksum, deparser.
//!
//! Ingress runs exact-match tables in a fixed order. A table may be bound to
//! a [`KeyedCounter`] that counts packets per key in tumbling time windows;
//! such a table can learn entries on miss until it reaches `max_size`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControllerEvent;
use crate::header::{PacketMeta, ParsedPacket, SchemaSet};
use crate::parser::{self, validate_graph, ParseGraph, Violation};
use crate::profile::{self, ProfileConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("no table `{0}`")]
    NoSuchTable(String),
    #[error("no counter `{0}`")]
    NoSuchCounter(String),
    #[error("table `{0}` is full")]
    TableFull(String),
    #[error("invalid action for table `{table}`: {reason}")]
    ActionInvalid { table: String, reason: String },
    #[error("invalid parse graph: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error("table `{table}` keys on unknown field `{header}.{field}`")]
    UnknownKey { table: String, header: String, field: String },
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CounterError {
    #[error("counter capacity exhausted")]
    CapacityExhausted,
    #[error("negative or non-finite timestamp")]
    BadTimestamp,
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Parser,
    VerifyChecksum,
    Ingress,
    Egress,
    ComputeChecksum,
    Deparser,
}

pub const STAGE_ORDER: [Stage; 6] =
    [Stage::Parser, Stage::VerifyChecksum, Stage::Ingress, Stage::Egress, Stage::ComputeChecksum, Stage::Deparser];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpec {
    CounterIncr,
    SetField { header: String, field: String, value: u128 },
    Drop,
    Forward(u16),
    ToController(String),
    Nop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableKey {
    pub header: String,
    pub field: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TableStats {
    pub hits: u64,
    pub misses: u64,
    pub full_drops: u64,
}

/// Exact-match table.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub key: TableKey,
    pub max_size: usize,
    entries: HashMap<u128, ActionSpec>,
    pub default_action: ActionSpec,
    /// Entry installed for an unseen key on miss, while there is room.
    pub learn_action: Option<ActionSpec>,
    /// Counter driven by `CounterIncr`.
    pub counter: Option<String>,
    /// Keys the table ignores entirely (the packet does not reach it).
    pub skip_keys: Vec<u128>,
    /// When set, only packets whose first payload byte equals this tag reach
    /// the table.
    pub payload_tag: Option<u8>,
    pub stats: TableStats,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &str, field: &str, max_size: usize) -> Self {
        Table {
            name: name.into(),
            key: TableKey { header: header.to_string(), field: field.to_string() },
            max_size,
            entries: HashMap::new(),
            default_action: ActionSpec::Nop,
            learn_action: None,
            counter: None,
            skip_keys: Vec::new(),
            payload_tag: None,
            stats: TableStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, key: u128) -> Option<&ActionSpec> {
        self.entries.get(&key)
    }

    pub fn insert(&mut self, key: u128, action: ActionSpec) -> Result<(), PipelineError> {
        if !self.entries.contains_key(&key) && self.entries.len() >= self.max_size {
            return Err(PipelineError::TableFull(self.name.clone()));
        }
        self.entries.insert(key, action);
        Ok(())
    }

    fn reaches(&self, packet: &ParsedPacket, key: Option<u128>) -> bool {
        if let Some(tag) = self.payload_tag {
            if packet.payload.first() != Some(&tag) {
                return false;
            }
        }
        !matches!(key, Some(k) if self.skip_keys.contains(&k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterCell {
    pub count: u64,
    pub window_index: u64,
}

/// Per-key packet counter over tumbling windows of `window_s` seconds.
#[derive(Debug, Clone)]
pub struct KeyedCounter {
    pub name: String,
    pub capacity: usize,
    pub window_s: f64,
    cells: HashMap<u128, CounterCell>,
    /// Increments skipped because no cell could be allocated.
    pub exhausted: u64,
}

impl KeyedCounter {
    pub fn new(name: impl Into<String>, capacity: usize, window_s: f64) -> Self {
        assert!(window_s > 0.0, "window must be positive");
        KeyedCounter { name: name.into(), capacity, window_s, cells: HashMap::new(), exhausted: 0 }
    }

    pub fn window_of(&self, timestamp_s: f64) -> u64 {
        (timestamp_s / self.window_s).floor() as u64
    }

    /// Count one packet for `key` at `timestamp_s`; returns the
    /// post-increment count for the key's current window.
    pub fn increment(&mut self, key: u128, timestamp_s: f64) -> Result<u64, CounterError> {
        if !(timestamp_s >= 0.0 && timestamp_s.is_finite()) {
            return Err(CounterError::BadTimestamp);
        }
        let window = self.window_of(timestamp_s);
        let at_capacity = self.cells.len() >= self.capacity;
        let cell = match self.cells.get_mut(&key) {
            Some(c) => c,
            None if at_capacity => {
                self.exhausted += 1;
                return Err(CounterError::CapacityExhausted);
            }
            None => self.cells.entry(key).or_insert(CounterCell { count: 0, window_index: window }),
        };
        if cell.window_index != window {
            cell.window_index = window;
            cell.count = 0;
        }
        cell.count += 1;
        Ok(cell.count)
    }

    pub fn cell(&self, key: u128) -> Option<CounterCell> {
        self.cells.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Snapshot sorted by key.
    pub fn snapshot(&self) -> Vec<CounterEntry> {
        let mut out: Vec<_> = self
            .cells
            .iter()
            .map(|(&key, c)| CounterEntry { key, count: c.count, window_index: c.window_index })
            .collect();
        out.sort_by_key(|e| e.key);
        out
    }
}

/// Free-function form of [`KeyedCounter::increment`].
pub fn counter_increment(counter: &mut KeyedCounter, key: u128, timestamp_s: f64) -> Result<u64, CounterError> {
    counter.increment(key, timestamp_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterEntry {
    pub key: u128,
    pub count: u64,
    pub window_index: u64,
}

pub fn format_key(key: u128) -> String {
    if key > u64::MAX as u128 {
        format!("0x{key:032X}")
    } else {
        format!("0x{key:016X}")
    }
}

/// CSV export: `key_hex,count,window_index` with a header row.
pub fn counters_csv(entries: &[CounterEntry]) -> String {
    let mut out = String::from("key_hex,count,window_index\n");
    for e in entries {
        out.push_str(&format!("{},{},{}\n", format_key(e.key), e.count, e.window_index));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    /// Packet filtered out before lookup.
    Skipped,
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterUpdate {
    pub key: u128,
    pub count: u64,
    pub window_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub applied: Applied,
    pub action: ActionSpec,
    pub counter: Option<CounterUpdate>,
    pub diagnostics: Vec<String>,
}

/// Look the packet up in `table` and execute the resulting action.
pub fn apply_table(
    table: &mut Table,
    packet: &mut ParsedPacket,
    counters: &mut BTreeMap<String, KeyedCounter>,
) -> ActionOutcome {
    let key = packet.field(&table.key.header, &table.key.field);
    let mut diagnostics = Vec::new();
    if !table.reaches(packet, key) {
        return ActionOutcome { applied: Applied::Skipped, action: ActionSpec::Nop, counter: None, diagnostics };
    }

    let (applied, action) = match key.and_then(|k| table.entries.get(&k).map(|a| (k, a))) {
        Some((_, a)) => {
            table.stats.hits += 1;
            (Applied::Hit, a.clone())
        }
        None => {
            table.stats.misses += 1;
            match (key, &table.learn_action) {
                (None, _) => {
                    diagnostics
                        .push(format!("{}: key field {}.{} absent", table.name, table.key.header, table.key.field));
                    (Applied::Miss, table.default_action.clone())
                }
                (Some(k), Some(learn)) => {
                    if table.entries.len() < table.max_size {
                        let learn = learn.clone();
                        table.entries.insert(k, learn.clone());
                        (Applied::Miss, learn)
                    } else {
                        table.stats.full_drops += 1;
                        (Applied::Miss, table.default_action.clone())
                    }
                }
                (Some(_), None) => (Applied::Miss, table.default_action.clone()),
            }
        }
    };

    let mut counter = None;
    match &action {
        ActionSpec::CounterIncr => {
            let c = table.counter.as_ref().and_then(|name| counters.get_mut(name));
            match (c, key) {
                (Some(c), Some(k)) => match c.increment(k, packet.meta.timestamp_s) {
                    Ok(count) => {
                        counter =
                            Some(CounterUpdate { key: k, count, window_index: c.window_of(packet.meta.timestamp_s) })
                    }
                    Err(e) => diagnostics.push(format!("{}: {e}", c.name)),
                },
                _ => diagnostics.push(format!("{}: counter unavailable", table.name)),
            }
        }
        ActionSpec::SetField { header, field, value } => {
            let res = packet
                .header_mut(header)
                .ok_or_else(|| format!("header {header} absent"))
                .and_then(|h| h.set_field(field, *value).map_err(|e| e.to_string()));
            if let Err(e) = res {
                diagnostics.push(format!("{}: set_field failed: {e}", table.name));
            }
        }
        _ => {}
    }

    ActionOutcome { applied, action, counter, diagnostics }
}

pub type Hook = Arc<dyn Fn(&mut ParsedPacket) + Send + Sync>;

#[derive(Clone, Default)]
pub struct Hooks {
    pub verify_checksum: Option<Hook>,
    pub egress: Option<Hook>,
    pub compute_checksum: Option<Hook>,
}

impl fmt::Debug for Hooks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hooks")
            .field("verify_checksum", &self.verify_checksum.is_some())
            .field("egress", &self.egress.is_some())
            .field("compute_checksum", &self.compute_checksum.is_some())
            .finish()
    }
}

fn run_hook(hook: &Option<Hook>, packet: &mut ParsedPacket) {
    if let Some(h) = hook {
        h(packet)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Disposition {
    Forward(u16),
    Drop,
    ForwardWithCopy(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketVerdict {
    pub disposition: Disposition,
    pub events: Vec<ControllerEvent>,
}

impl PacketVerdict {
    pub fn is_drop(&self) -> bool {
        self.disposition == Disposition::Drop
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub verdict: PacketVerdict,
    /// Present iff the packet is forwarded.
    pub output: Option<Vec<u8>>,
}

/// Threshold detection bound to one counter.
#[derive(Debug, Clone)]
pub struct Detector {
    pub counter: String,
    pub config: ProfileConfig,
}

#[derive(Debug, Clone)]
pub struct SwitchState {
    pub id: String,
    pub graph: ParseGraph,
    pub schemas: SchemaSet,
    pub ingress_tables: Vec<String>,
    pub tables: BTreeMap<String, Table>,
    pub counters: BTreeMap<String, KeyedCounter>,
    pub hooks: Hooks,
    pub default_port: u16,
    pub detector: Option<Detector>,
}

impl SwitchState {
    pub fn new(id: impl Into<String>, graph: ParseGraph, schemas: SchemaSet) -> Result<Self, PipelineError> {
        validate_graph(&graph, &schemas).map_err(PipelineError::InvalidGraph)?;
        Ok(SwitchState {
            id: id.into(),
            graph,
            schemas,
            ingress_tables: Vec::new(),
            tables: BTreeMap::new(),
            counters: BTreeMap::new(),
            hooks: Hooks::default(),
            default_port: 1,
            detector: None,
        })
    }

    pub fn stage_order(&self) -> &'static [Stage] {
        &STAGE_ORDER
    }

    /// Append a table to the ingress sequence.
    pub fn add_table(&mut self, table: Table) -> Result<(), PipelineError> {
        let def = self.schemas.get(&table.key.header);
        if def.and_then(|d| d.field(&table.key.field)).is_none() {
            return Err(PipelineError::UnknownKey {
                table: table.name.clone(),
                header: table.key.header.clone(),
                field: table.key.field.clone(),
            });
        }
        if let Some(c) = &table.counter {
            if !self.counters.contains_key(c) {
                return Err(PipelineError::NoSuchCounter(c.clone()));
            }
        }
        self.ingress_tables.push(table.name.clone());
        self.tables.insert(table.name.clone(), table);
        Ok(())
    }

    pub fn add_counter(&mut self, counter: KeyedCounter) {
        self.counters.insert(counter.name.clone(), counter);
    }

    pub fn install_entry(&mut self, table_name: &str, key: u128, action: ActionSpec) -> Result<(), PipelineError> {
        let table =
            self.tables.get_mut(table_name).ok_or_else(|| PipelineError::NoSuchTable(table_name.to_string()))?;
        let invalid = |reason: String| PipelineError::ActionInvalid { table: table_name.to_string(), reason };
        let key_field = self
            .schemas
            .get(&table.key.header)
            .and_then(|d| d.field(&table.key.field))
            .ok_or_else(|| invalid("key field not in schema".into()))?;
        if !key_field.fits(key) {
            return Err(invalid(format!("key {key:#x} wider than {} bits", key_field.width_bits)));
        }
        match &action {
            ActionSpec::CounterIncr if table.counter.is_none() => return Err(invalid("table has no counter".into())),
            ActionSpec::SetField { header, field, value } => {
                let f = self
                    .schemas
                    .get(header)
                    .and_then(|d| d.field(field))
                    .ok_or_else(|| invalid(format!("unknown field {header}.{field}")))?;
                if !f.fits(*value) {
                    return Err(invalid(format!("value {value:#x} overflows {header}.{field}")));
                }
            }
            _ => {}
        }
        table.insert(key, action)
    }

    pub fn read_counters(&self, counter_name: &str) -> Result<Vec<CounterEntry>, PipelineError> {
        self.counters
            .get(counter_name)
            .map(KeyedCounter::snapshot)
            .ok_or_else(|| PipelineError::NoSuchCounter(counter_name.to_string()))
    }

    /// Run one frame through every stage. Failures never escape: they become
    /// drops with a diagnostic event.
    pub fn process_packet(&mut self, raw: &[u8], meta: PacketMeta) -> Processed {
        let ts = meta.timestamp_s;
        let mut events = Vec::new();

        let mut packet = match parser::parse(&self.graph, &self.schemas, raw, meta) {
            Ok(p) => p,
            Err(e) => {
                events.push(ControllerEvent::ParseFailed { switch_id: self.id.clone(), ts, reason: e.to_string() });
                return drop_with(events);
            }
        };

        run_hook(&self.hooks.verify_checksum, &mut packet);

        let mut port = self.default_port;
        let mut copy = false;
        for name in &self.ingress_tables {
            let Some(table) = self.tables.get_mut(name) else { continue };
            let outcome = apply_table(table, &mut packet, &mut self.counters);
            for d in outcome.diagnostics {
                events.push(ControllerEvent::Diagnostic { switch_id: self.id.clone(), ts, message: d });
            }
            if let (Some(update), Some(det)) = (outcome.counter, &self.detector) {
                if table.counter.as_deref() == Some(det.counter.as_str()) {
                    if let Some(alert) =
                        profile::detect(&det.config, &self.id, update.key as u64, update.count, update.window_index, ts)
                    {
                        events.push(ControllerEvent::Alert(alert));
                    }
                }
            }
            match outcome.action {
                ActionSpec::Drop => return drop_with(events),
                ActionSpec::Forward(p) => port = p,
                ActionSpec::ToController(_) => copy = true,
                _ => {}
            }
        }

        run_hook(&self.hooks.egress, &mut packet);
        run_hook(&self.hooks.compute_checksum, &mut packet);

        match parser::deparse(&packet) {
            Ok(bytes) => Processed {
                verdict: PacketVerdict {
                    disposition: if copy { Disposition::ForwardWithCopy(port) } else { Disposition::Forward(port) },
                    events,
                },
                output: Some(bytes),
            },
            Err(e) => {
                events.push(ControllerEvent::Diagnostic {
                    switch_id: self.id.clone(),
                    ts,
                    message: format!("deparse failed: {e}"),
                });
                drop_with(events)
            }
        }
    }
}

fn drop_with(events: Vec<ControllerEvent>) -> Processed {
    Processed { verdict: PacketVerdict { disposition: Disposition::Drop, events }, output: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::header::{define_header, FieldDef};
    use crate::parser::{ParseState, Target};

    fn switch() -> SwitchState {
        let mut s = SchemaSet::new();
        s.register(define_header("H", vec![FieldDef::new("dst", 8), FieldDef::new("v", 8)]).unwrap()).unwrap();
        let g = ParseGraph::new("h").with_state(ParseState::new("h").extract("H").then(Target::Accept));
        let mut sw = SwitchState::new("t", g, s).unwrap();
        sw.add_counter(KeyedCounter::new("cnt", 2, 1.0));
        sw.add_table(Table::new("block", "H", "dst", 4)).unwrap();
        let mut t = Table::new("count", "H", "dst", 2);
        t.learn_action = Some(ActionSpec::CounterIncr);
        t.counter = Some("cnt".into());
        sw.add_table(t).unwrap();
        sw
    }

    fn meta(ts: f64) -> PacketMeta {
        PacketMeta::new(0, ts)
    }

    #[test]
    fn counter_windows() {
        let mut c = KeyedCounter::new("c", 4, 1.0);
        assert_eq!([0.1, 0.2, 0.3].map(|t| c.increment(0xAA, t).unwrap()), [1, 2, 3]);
        assert_eq!(c.snapshot(), vec![CounterEntry { key: 0xAA, count: 3, window_index: 0 }]);

        let mut c = KeyedCounter::new("c", 4, 1.0);
        assert_eq!(c.increment(0xAA, 0.9), Ok(1));
        assert_eq!(c.increment(0xAA, 1.1), Ok(1));
        assert_eq!(c.cell(0xAA), Some(CounterCell { count: 1, window_index: 1 }));
        assert_eq!(c.increment(0xAA, -1.0), Err(CounterError::BadTimestamp));
    }

    #[test]
    fn counter_capacity() {
        let mut c = KeyedCounter::new("c", 2, 1.0);
        c.increment(1, 0.0).unwrap();
        c.increment(2, 0.0).unwrap();
        assert_eq!(c.increment(3, 0.0), Err(CounterError::CapacityExhausted));
        assert_eq!(c.exhausted, 1);
        assert_eq!(c.increment(1, 5.0), Ok(1));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn hundred_increments_match_tally() {
        let mut c = KeyedCounter::new("c", 1, 1.0);
        let times: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let mut last = 0;
        for &t in &times {
            last = counter_increment(&mut c, 0xAA, t).unwrap();
        }
        let naive = times.iter().filter(|&&t| t.floor() as u64 == 0).count() as u64;
        assert_eq!(last, naive);
        assert_eq!(last, 100);
    }

    #[test]
    fn learn_hit_and_full() {
        let mut sw = switch();
        for (i, dst) in [1u8, 1, 2, 3].iter().enumerate() {
            let p = sw.process_packet(&[*dst, 0], meta(i as f64 * 0.01));
            assert_eq!(p.verdict.disposition, Disposition::Forward(1));
        }
        let t = &sw.tables["count"];
        assert_eq!(t.stats, TableStats { hits: 1, misses: 3, full_drops: 1 });
        assert_eq!(t.len(), 2);
        assert_eq!(
            sw.read_counters("cnt").unwrap(),
            vec![
                CounterEntry { key: 1, count: 2, window_index: 0 },
                CounterEntry { key: 2, count: 1, window_index: 0 }
            ]
        );
    }

    #[test]
    fn blocklist_drop_precedes_counting() {
        let mut sw = switch();
        sw.install_entry("block", 7, ActionSpec::Drop).unwrap();
        let p = sw.process_packet(&[7, 0], meta(0.0));
        assert!(p.verdict.is_drop());
        assert!(p.output.is_none());
        assert!(sw.read_counters("cnt").unwrap().is_empty());
        assert_eq!(sw.tables["count"].stats.hits + sw.tables["count"].stats.misses, 0);
    }

    #[test]
    fn install_errors() {
        let mut sw = switch();
        assert_eq!(sw.install_entry("xyz", 1, ActionSpec::Drop), Err(PipelineError::NoSuchTable("xyz".into())));
        assert!(matches!(
            sw.install_entry("block", 1, ActionSpec::CounterIncr),
            Err(PipelineError::ActionInvalid { .. })
        ));
        assert!(matches!(sw.install_entry("block", 0x100, ActionSpec::Drop), Err(PipelineError::ActionInvalid { .. })));
        assert!(matches!(
            sw.install_entry("block", 1, ActionSpec::SetField { header: "H".into(), field: "v".into(), value: 0x100 }),
            Err(PipelineError::ActionInvalid { .. })
        ));
        for k in 0..4 {
            sw.install_entry("block", k, ActionSpec::Nop).unwrap();
        }
        // overwrite of a resident key is allowed at capacity
        sw.install_entry("block", 3, ActionSpec::Drop).unwrap();
        assert_eq!(sw.install_entry("block", 4, ActionSpec::Drop), Err(PipelineError::TableFull("block".into())));
        assert_eq!(sw.read_counters("nope"), Err(PipelineError::NoSuchCounter("nope".into())));
    }

    #[test]
    fn set_field_forward_and_copy() {
        let mut sw = switch();
        sw.install_entry("block", 9, ActionSpec::SetField { header: "H".into(), field: "v".into(), value: 0x42 })
            .unwrap();
        let p = sw.process_packet(&[9, 0, 0xEE], meta(0.0));
        assert_eq!(p.output, Some(vec![9, 0x42, 0xEE]));

        sw.install_entry("block", 8, ActionSpec::Forward(3)).unwrap();
        assert_eq!(sw.process_packet(&[8, 0], meta(0.0)).verdict.disposition, Disposition::Forward(3));

        sw.install_entry("block", 5, ActionSpec::ToController("look".into())).unwrap();
        assert_eq!(sw.process_packet(&[5, 0], meta(0.0)).verdict.disposition, Disposition::ForwardWithCopy(1));
    }

    #[test]
    fn parse_failure_drops() {
        let mut sw = switch();
        let p = sw.process_packet(&[1], meta(0.0));
        assert!(p.verdict.is_drop());
        assert!(matches!(p.verdict.events[..], [ControllerEvent::ParseFailed { .. }]));
    }

    #[test]
    fn absent_key_is_a_miss() {
        let mut s = SchemaSet::new();
        s.register(define_header("H", vec![FieldDef::new("dst", 8)]).unwrap()).unwrap();
        s.register(define_header("K", vec![FieldDef::new("k", 8)]).unwrap()).unwrap();
        let g = ParseGraph::new("h").with_state(ParseState::new("h").extract("H"));
        let mut sw = SwitchState::new("t", g, s).unwrap();
        let mut t = Table::new("tk", "K", "k", 4);
        t.default_action = ActionSpec::Forward(9);
        sw.add_table(t).unwrap();
        let p = sw.process_packet(&[1], meta(0.0));
        assert_eq!(p.verdict.disposition, Disposition::Forward(9));
        assert!(matches!(p.verdict.events[..], [ControllerEvent::Diagnostic { .. }]));
        assert_eq!(sw.tables["tk"].stats.misses, 1);
    }

    #[test]
    fn add_table_checks_key() {
        let mut sw = switch();
        assert!(matches!(sw.add_table(Table::new("bad", "H", "nope", 1)), Err(PipelineError::UnknownKey { .. })));
        let mut t = Table::new("bad", "H", "dst", 1);
        t.counter = Some("missing".into());
        assert_eq!(sw.add_table(t), Err(PipelineError::NoSuchCounter("missing".into())));
    }

    #[test]
    fn csv_export() {
        let csv = counters_csv(&[CounterEntry { key: 0xAA, count: 3, window_index: 0 }]);
        assert_eq!(csv, "key_hex,count,window_index\n0x00000000000000AA,3,0\n");
    }
}
