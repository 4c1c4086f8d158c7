//! Software programmable dataplane for sensor-network traffic.
//!
//! The crate provides a P4-style switch model (declarative headers, a
//! parse-graph interpreter, exact-match tables with windowed counters), a
//! concrete ZEP / 802.15.4 / 6LoWPAN / UDP profile with HELLO-flood
//! detection, a simulated SDN controller that installs drop rules, a
//! deterministic traffic generator and pcap I/O.

pub mod addr;
pub mod controller;
pub mod header;
pub mod parser;
pub mod pcap;
pub mod pipeline;
pub mod profile;
pub mod run;
pub mod simnet;

pub use controller::{Controller, ControllerConfig, ControllerEvent, Fabric, MitigationRule};
pub use header::{define_header, FieldDef, HeaderDef, HeaderInstance, PacketMeta, ParsedPacket, SchemaSet};
pub use parser::{deparse, parse, validate_graph, ParseError, ParseErrorKind, ParseGraph};
pub use pipeline::{ActionSpec, KeyedCounter, SwitchState, Table};
pub use profile::{build_profile, build_switch, Alert, ProfileConfig};
pub use run::{run_records, run_scenario, RunConfig, RunOutput, RunReport};
pub use simnet::{generate, PacketRecord, ScenarioConfig};
