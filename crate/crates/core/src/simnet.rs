//! Deterministic sensor-network traffic generator.
//!
//! Produces timestamped HELLO frames for a single-switch star topology:
//! legitimate broadcast beacons, attacker advertisements with naive unicast
//! replies from every legitimate node, or direct unicast floods. All
//! randomness comes from a seeded splitmix64 stream and timestamps are
//! quantized to whole microseconds so captures replay bit-exactly.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{format_addr, hex_addr};
use crate::controller::ControllerConfig;
use crate::header::{HeaderDef, HeaderInstance};
use crate::profile::{self, ProfileConfig, BROADCAST};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One splitmix64 step: returns the output and the advanced state.
pub fn prng_next(state: u64) -> (u64, u64) {
    let state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31), state)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        let (v, s) = prng_next(self.state);
        self.state = s;
        v
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        u01(self.next_u64())
    }
}

/// Map a 64-bit draw onto [0, 1) using its top 53 bits.
pub fn u01(v: u64) -> f64 {
    (v >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub const UDP_SRC_PORT: u16 = 0xF0B1;
pub const UDP_DST_PORT: u16 = 0xF0B2;
pub const DEST_PAN: u16 = 0xFACE;
pub const FRAME_CONTROL: u16 = 0x8841;
const ADDR48: u64 = 0xFFFF_FFFF_FFFF;

/// HELLO payload: message type followed by the sender's 64-bit node id.
pub fn hello_payload(msg_type: u8, node_id: u64) -> [u8; 9] {
    let mut p = [0u8; 9];
    p[0] = msg_type;
    p[1..].copy_from_slice(&node_id.to_be_bytes());
    p
}

/// Encodes profile frames: ZEP | IEEE802154 | SixLoWPAN | UDP | payload.
#[derive(Debug, Clone)]
pub struct FrameBuilder {
    config: ProfileConfig,
    zep: Arc<HeaderDef>,
    mac: Arc<HeaderDef>,
    lowpan: Arc<HeaderDef>,
    udp: Arc<HeaderDef>,
}

impl FrameBuilder {
    pub fn new(config: ProfileConfig) -> Self {
        FrameBuilder {
            config,
            zep: Arc::new(profile::zep_def()),
            mac: Arc::new(profile::ieee802154_def()),
            lowpan: Arc::new(profile::sixlowpan_def()),
            udp: Arc::new(profile::udp_def()),
        }
    }

    pub fn frame(&self, src: u64, dst: u64, seq: u32, payload: &[u8]) -> Vec<u8> {
        let headers = [
            HeaderInstance::with_values(
                Arc::clone(&self.zep),
                &[
                    ("protoIDstring", self.config.zep_proto_id as u128),
                    ("version", 2),
                    ("type", 1),
                    ("channelId", 11),
                    ("deviceId", (src & 0xFFFF) as u128),
                    ("lqiMode", 0),
                    ("lqi", 0xFF),
                    ("seq", seq as u128),
                ],
            ),
            HeaderInstance::with_values(
                Arc::clone(&self.mac),
                &[
                    ("framecontrol", FRAME_CONTROL as u128),
                    ("seqnumber", (seq & 0xFF) as u128),
                    ("destPAN", DEST_PAN as u128),
                    ("destination", (dst & ADDR48) as u128),
                    ("extendSrc", (src & ADDR48) as u128),
                    ("fcs", 0),
                ],
            ),
            HeaderInstance::with_values(
                Arc::clone(&self.lowpan),
                &[("dispatch", 0x41), ("hopLimit", 64), ("src", src as u128), ("dst", dst as u128)],
            ),
            HeaderInstance::with_values(
                Arc::clone(&self.udp),
                &[
                    ("srcPort", UDP_SRC_PORT as u128),
                    ("dstPort", UDP_DST_PORT as u128),
                    ("length", (8 + payload.len()).min(0xFFFF) as u128),
                    ("checksum", 0),
                ],
            ),
        ];
        let mut out = Vec::with_capacity(58 + payload.len());
        for h in headers {
            h.expect("frame fields fit their widths").encode_into(&mut out).expect("fresh headers are valid");
        }
        out.extend_from_slice(payload);
        out
    }

    /// A 67-byte HELLO frame from `src` to `dst`.
    pub fn hello(&self, src: u64, dst: u64, seq: u32) -> Vec<u8> {
        self.frame(src, dst, seq, &hello_payload(self.config.hello_msg_type, src))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Legit,
    Attacker,
    Basestation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    #[serde(with = "hex_addr")]
    pub addr: u64,
    pub role: Role,
    #[serde(default)]
    pub hello_rate_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackMode {
    ReplyFlood,
    DirectFlood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackTarget {
    All,
    Addr(u64),
}

impl Serialize for AttackTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AttackTarget::All => s.serialize_str("ALL"),
            AttackTarget::Addr(a) => s.serialize_str(&format_addr(*a)),
        }
    }
}

impl<'de> Deserialize<'de> for AttackTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.eq_ignore_ascii_case("all") {
            return Ok(AttackTarget::All);
        }
        crate::addr::parse_addr(&s)
            .map(AttackTarget::Addr)
            .ok_or_else(|| serde::de::Error::custom(format!("bad attack target `{s}`")))
    }
}

fn all_targets() -> AttackTarget {
    AttackTarget::All
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub mode: AttackMode,
    pub flood_rate_hz: f64,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default = "all_targets")]
    pub target: AttackTarget,
}

fn default_reply_delay() -> f64 {
    0.010
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default = "default_reply_delay")]
    pub reply_delay_s: f64,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("malformed scenario JSON: {0}")]
    Json(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::ScenarioInvalid(msg.into())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid("duration_s must be > 0"));
        }
        if !finite_nonneg(self.reply_delay_s) {
            return Err(invalid("reply_delay_s must be >= 0"));
        }
        let mut addrs = HashSet::new();
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if n.addr == BROADCAST {
                return Err(invalid(format!("node `{}` uses the broadcast address", n.id)));
            }
            if !addrs.insert(n.addr) {
                return Err(invalid(format!("duplicate address {}", format_addr(n.addr))));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(invalid(format!("duplicate node id `{}`", n.id)));
            }
            if !finite_nonneg(n.hello_rate_hz) {
                return Err(invalid(format!("node `{}` has a negative hello rate", n.id)));
            }
        }
        if let Some(a) = &self.attack {
            if !finite_nonneg(a.flood_rate_hz) {
                return Err(invalid("flood_rate_hz must be >= 0"));
            }
            if !(a.start_s >= 0.0 && a.start_s <= self.duration_s) {
                return Err(invalid("attack start_s must lie in [0, duration_s]"));
            }
            let attackers = self.nodes.iter().filter(|n| n.role == Role::Attacker).count();
            if attackers != 1 {
                return Err(invalid(format!("an attack needs exactly one ATTACKER node, found {attackers}")));
            }
            if a.target == AttackTarget::Addr(BROADCAST) {
                return Err(invalid("attack target may not be the broadcast address"));
            }
        }
        self.profile.validate().map_err(|e| invalid(e.to_string()))
    }

    pub fn attacker(&self) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.role == Role::Attacker)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub timestamp_s: f64,
    pub raw_bytes: Vec<u8>,
    pub src_node_id: String,
    pub note: String,
}

fn to_micros(t: f64) -> u64 {
    (t * 1e6).round() as u64
}

struct Emission {
    t_us: u64,
    src: usize,
    dst: u64,
    note: &'static str,
}

/// Generate the full, timestamp-ordered frame sequence for a scenario.
pub fn generate(scenario: &ScenarioConfig) -> Result<Vec<PacketRecord>, ScenarioError> {
    scenario.validate()?;
    let duration = scenario.duration_s;
    let mut rng = SplitMix64::new(scenario.seed);
    let mut out: Vec<Emission> = Vec::new();

    for (i, node) in scenario.nodes.iter().enumerate() {
        if node.role == Role::Attacker || node.hello_rate_hz <= 0.0 {
            continue;
        }
        let period = 1.0 / node.hello_rate_hz;
        let phase = rng.next_f64() * period;
        for t in ticks(phase, period, duration) {
            out.push(Emission { t_us: to_micros(t), src: i, dst: BROADCAST, note: "beacon" });
        }
    }

    if let (Some(attack), Some(attacker_idx)) =
        (&scenario.attack, scenario.nodes.iter().position(|n| n.role == Role::Attacker))
    {
        let attacker = scenario.nodes[attacker_idx].addr;
        let legit: Vec<usize> = (0..scenario.nodes.len()).filter(|&j| scenario.nodes[j].role == Role::Legit).collect();
        if attack.flood_rate_hz > 0.0 {
            let period = 1.0 / attack.flood_rate_hz;
            for t in ticks(attack.start_s, period, duration) {
                match attack.mode {
                    AttackMode::ReplyFlood => {
                        out.push(Emission { t_us: to_micros(t), src: attacker_idx, dst: BROADCAST, note: "advert" });
                        let reply_at = t + scenario.reply_delay_s;
                        if reply_at < duration {
                            for &j in &legit {
                                out.push(Emission { t_us: to_micros(reply_at), src: j, dst: attacker, note: "reply" });
                            }
                        }
                    }
                    AttackMode::DirectFlood => {
                        let t_us = to_micros(t);
                        match attack.target {
                            AttackTarget::Addr(a) => {
                                out.push(Emission { t_us, src: attacker_idx, dst: a, note: "flood" })
                            }
                            AttackTarget::All => {
                                for &j in &legit {
                                    let dst = scenario.nodes[j].addr;
                                    out.push(Emission { t_us, src: attacker_idx, dst, note: "flood" });
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    out.sort_by_key(|e| e.t_us);

    let builder = FrameBuilder::new(scenario.profile);
    let mut seqs = vec![0u32; scenario.nodes.len()];
    Ok(out
        .into_iter()
        .map(|e| {
            let node = &scenario.nodes[e.src];
            let seq = seqs[e.src];
            seqs[e.src] = seq.wrapping_add(1);
            PacketRecord {
                timestamp_s: e.t_us as f64 / 1e6,
                raw_bytes: builder.hello(node.addr, e.dst, seq),
                src_node_id: node.id.clone(),
                note: e.note.to_string(),
            }
        })
        .collect())
}

/// `start + n * period` for n = 0, 1, ... while below `end`.
fn ticks(start: f64, period: f64, end: f64) -> impl Iterator<Item = f64> {
    (0u64..).map(move |n| start + n as f64 * period).take_while(move |&t| t < end)
}

/// The reference topology: `legit` nodes beaconing at `beacon_hz`, one
/// base station and (optionally) a reply-flood attacker.
pub fn star_scenario(
    legit: usize,
    beacon_hz: f64,
    flood_hz: Option<f64>,
    duration_s: f64,
    seed: u64,
) -> ScenarioConfig {
    let mut nodes: Vec<NodeSpec> = (1..=legit as u64)
        .map(|i| NodeSpec { id: format!("n{i}"), addr: i, role: Role::Legit, hello_rate_hz: beacon_hz })
        .collect();
    nodes.push(NodeSpec { id: "bs".into(), addr: 0xB5, role: Role::Basestation, hello_rate_hz: 0.0 });
    nodes.push(NodeSpec { id: "mal".into(), addr: 0xAA, role: Role::Attacker, hello_rate_hz: 0.0 });
    ScenarioConfig {
        duration_s,
        seed,
        nodes,
        attack: flood_hz.map(|rate| AttackSpec {
            mode: AttackMode::ReplyFlood,
            flood_rate_hz: rate,
            start_s: 0.0,
            target: AttackTarget::All,
        }),
        reply_delay_s: default_reply_delay(),
        profile: ProfileConfig::default(),
        controller: ControllerConfig::default(),
    }
}
