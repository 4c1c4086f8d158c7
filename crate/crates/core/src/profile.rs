//! The sensor-network profile: ZEP / IEEE 802.15.4 / 6LoWPAN / UDP headers,
//! the parse graph over them, the `dstnodecounter` table and HELLO-flood
//! threshold detection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::header::{define_header, FieldDef, HeaderDef, ParsedPacket, SchemaSet};
use crate::parser::{ParseGraph, ParseState, Target};
use crate::pipeline::{ActionSpec, Detector, KeyedCounter, PipelineError, SwitchState, Table};

pub const ZEP: &str = "ZEP";
pub const IEEE802154: &str = "IEEE802154";
pub const SIXLOWPAN: &str = "SixLoWPAN";
pub const UDP: &str = "UDP";

pub const BLOCKLIST: &str = "blocklist";
pub const DSTNODECOUNTER: &str = "dstnodecounter";

pub const BROADCAST: u64 = 0xFFFF_FFFF_FFFF_FFFF;

/// Protocol id string carried by ZEP captures: ASCII "EX".
pub const ZEP_PROTO_ID_EX: u16 = 0x4558;
/// The alternative constant ("EH").
pub const ZEP_PROTO_ID_EH: u16 = 0x4548;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("invalid profile config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(deserialize_with = "crate::addr::de_uint")]
    pub zep_proto_id: u16,
    #[serde(deserialize_with = "crate::addr::de_uint")]
    pub hello_msg_type: u8,
    pub theta: u64,
    pub window_s: f64,
    pub counter_capacity: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            zep_proto_id: ZEP_PROTO_ID_EX,
            hello_msg_type: 0x01,
            theta: 50,
            window_s: 1.0,
            counter_capacity: 512,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.theta < 1 {
            return Err(ProfileError::ConfigInvalid("theta must be >= 1".into()));
        }
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(ProfileError::ConfigInvalid("window_s must be > 0".into()));
        }
        if self.counter_capacity < 1 {
            return Err(ProfileError::ConfigInvalid("counter_capacity must be >= 1".into()));
        }
        Ok(())
    }
}

/// Crossing alert for one destination in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub switch_id: String,
    #[serde(with = "crate::addr::hex_addr")]
    pub dst_addr: u64,
    pub count: u64,
    pub window_index: u64,
    pub timestamp_s: f64,
}

pub fn zep_def() -> HeaderDef {
    define_header(
        ZEP,
        vec![
            FieldDef::new("protoIDstring", 16),
            FieldDef::new("version", 8),
            FieldDef::new("type", 8),
            FieldDef::new("channelId", 8),
            FieldDef::new("deviceId", 16),
            FieldDef::new("lqiMode", 8),
            FieldDef::new("lqi", 8),
            FieldDef::new("seq", 32),
        ],
    )
    .expect("ZEP layout is valid")
}

pub fn ieee802154_def() -> HeaderDef {
    define_header(
        IEEE802154,
        vec![
            FieldDef::new("framecontrol", 16),
            FieldDef::new("seqnumber", 8),
            FieldDef::new("destPAN", 16),
            FieldDef::new("destination", 48),
            FieldDef::new("extendSrc", 48),
            FieldDef::new("fcs", 16),
        ],
    )
    .expect("IEEE802154 layout is valid")
}

pub fn sixlowpan_def() -> HeaderDef {
    define_header(
        SIXLOWPAN,
        vec![
            FieldDef::new("dispatch", 8),
            FieldDef::new("hopLimit", 8),
            FieldDef::new("src", 64),
            FieldDef::new("dst", 64),
        ],
    )
    .expect("SixLoWPAN layout is valid")
}

pub fn udp_def() -> HeaderDef {
    define_header(
        UDP,
        vec![
            FieldDef::new("srcPort", 16),
            FieldDef::new("dstPort", 16),
            FieldDef::new("length", 16),
            FieldDef::new("checksum", 16),
        ],
    )
    .expect("UDP layout is valid")
}

pub fn schema_set() -> SchemaSet {
    let mut s = SchemaSet::new();
    for def in [zep_def(), ieee802154_def(), sixlowpan_def(), udp_def()] {
        s.register(def).expect("profile header names are distinct");
    }
    s
}

/// start -> zigbee -> ieee802154 -> sixlowpan -> udp -> ACCEPT, gated on the
/// ZEP protocol id.
pub fn parse_graph(zep_proto_id: u16) -> ParseGraph {
    ParseGraph::new("start")
        .with_state(ParseState::new("start").then(Target::state("zigbee")))
        .with_state(ParseState::new("zigbee").extract(ZEP).select(
            ZEP,
            "protoIDstring",
            [(zep_proto_id as u128, Target::state("ieee802154"))],
            Target::Reject,
        ))
        .with_state(ParseState::new("ieee802154").extract(IEEE802154).then(Target::state("sixlowpan")))
        .with_state(ParseState::new("sixlowpan").extract(SIXLOWPAN).then(Target::state("udp")))
        .with_state(ParseState::new("udp").extract(UDP).then(Target::Accept))
}

/// Everything a switch needs to run the profile.
#[derive(Debug, Clone)]
pub struct Profile {
    pub config: ProfileConfig,
    pub schemas: SchemaSet,
    pub graph: ParseGraph,
    /// In ingress order.
    pub tables: Vec<Table>,
    pub counters: Vec<KeyedCounter>,
}

pub fn build_profile(config: ProfileConfig) -> Result<Profile, ProfileError> {
    config.validate()?;
    let mut blocklist = Table::new(BLOCKLIST, SIXLOWPAN, "dst", config.counter_capacity);
    blocklist.default_action = ActionSpec::Nop;

    let mut counter_table = Table::new(DSTNODECOUNTER, SIXLOWPAN, "dst", config.counter_capacity);
    counter_table.default_action = ActionSpec::Nop;
    counter_table.learn_action = Some(ActionSpec::CounterIncr);
    counter_table.counter = Some(DSTNODECOUNTER.to_string());
    counter_table.skip_keys = vec![BROADCAST as u128];
    counter_table.payload_tag = Some(config.hello_msg_type);

    Ok(Profile {
        config,
        schemas: schema_set(),
        graph: parse_graph(config.zep_proto_id),
        tables: vec![blocklist, counter_table],
        counters: vec![KeyedCounter::new(DSTNODECOUNTER, config.counter_capacity, config.window_s)],
    })
}

impl Profile {
    /// Shortest frame the graph accepts.
    pub fn min_frame_len(&self) -> usize {
        [ZEP, IEEE802154, SIXLOWPAN, UDP].iter().map(|h| self.schemas.get(h).map_or(0, |d| d.byte_len())).sum()
    }

    pub fn into_switch(self, id: impl Into<String>) -> Result<SwitchState, ProfileError> {
        let mut sw = SwitchState::new(id, self.graph, self.schemas)?;
        for c in self.counters {
            sw.add_counter(c);
        }
        for t in self.tables {
            sw.add_table(t)?;
        }
        sw.detector = Some(Detector { counter: DSTNODECOUNTER.to_string(), config: self.config });
        Ok(sw)
    }
}

/// Build a ready-to-run switch for `config`.
pub fn build_switch(id: impl Into<String>, config: ProfileConfig) -> Result<SwitchState, ProfileError> {
    build_profile(config)?.into_switch(id)
}

/// A fully parsed frame whose payload starts with the HELLO message type.
pub fn classify_hello(packet: &ParsedPacket, config: &ProfileConfig) -> bool {
    let full = packet.headers.len() == 4
        && [ZEP, IEEE802154, SIXLOWPAN, UDP].iter().zip(&packet.headers).all(|(n, h)| h.name() == *n && h.valid);
    full && packet.payload.first() == Some(&config.hello_msg_type)
}

/// 6LoWPAN destination of a parsed frame.
pub fn destination(packet: &ParsedPacket) -> Option<u64> {
    packet.field(SIXLOWPAN, "dst").map(|v| v as u64)
}

/// Emit an alert when a destination's window count reaches theta exactly.
pub fn detect(
    config: &ProfileConfig,
    switch_id: &str,
    dst: u64,
    post_increment_count: u64,
    window_index: u64,
    timestamp_s: f64,
) -> Option<Alert> {
    (post_increment_count == config.theta).then(|| Alert {
        switch_id: switch_id.to_string(),
        dst_addr: dst,
        count: post_increment_count,
        window_index,
        timestamp_s,
    })
}
