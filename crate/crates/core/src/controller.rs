//! Simulated SDN controller and its southbound channel.
//!
//! Switches push [`ControllerEvent`]s; the controller tracks per-node status
//! and answers confirmed alerts with blocklist drop rules. Every southbound
//! message is also rendered as one JSON line for the run log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::hex_addr;
use crate::pipeline::{ActionSpec, CounterEntry, PipelineError, SwitchState};
use crate::profile::{Alert, BLOCKLIST, DSTNODECOUNTER};

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerEvent {
    Alert(Alert),
    ParseFailed { switch_id: String, ts: f64, reason: String },
    CounterSnapshot { switch_id: String, counter: String, entries: Vec<CounterEntry> },
    Diagnostic { switch_id: String, ts: f64, message: String },
}

impl ControllerEvent {
    pub fn switch_id(&self) -> &str {
        match self {
            ControllerEvent::Alert(a) => &a.switch_id,
            ControllerEvent::ParseFailed { switch_id, .. }
            | ControllerEvent::CounterSnapshot { switch_id, .. }
            | ControllerEvent::Diagnostic { switch_id, .. } => switch_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NodeState {
    Benign,
    Suspect,
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStatus {
    #[serde(with = "hex_addr")]
    pub addr: u64,
    pub state: NodeState,
    pub alert_windows: BTreeSet<u64>,
    pub flagged_at: Option<f64>,
}

impl NodeStatus {
    fn new(addr: u64) -> Self {
        NodeStatus { addr, state: NodeState::Benign, alert_windows: BTreeSet::new(), flagged_at: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleAction {
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationRule {
    pub switch_id: String,
    pub table: String,
    #[serde(with = "hex_addr")]
    pub key: u64,
    pub action: RuleAction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Install(MitigationRule),
    ReadCounters { switch_id: String, counter: String },
}

/// Wire form of the southbound channel, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SouthboundMessage {
    Alert {
        switch: String,
        #[serde(with = "hex_addr")]
        dst: u64,
        count: u64,
        window: u64,
        ts: f64,
    },
    Install {
        switch: String,
        table: String,
        #[serde(with = "hex_addr")]
        key: u64,
        action: RuleAction,
    },
    ReadCounters {
        switch: String,
        counter: String,
    },
}

impl SouthboundMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("southbound messages serialize")
    }
}

impl From<&Alert> for SouthboundMessage {
    fn from(a: &Alert) -> Self {
        SouthboundMessage::Alert {
            switch: a.switch_id.clone(),
            dst: a.dst_addr,
            count: a.count,
            window: a.window_index,
            ts: a.timestamp_s,
        }
    }
}

impl From<&Command> for SouthboundMessage {
    fn from(c: &Command) -> Self {
        match c {
            Command::Install(r) => SouthboundMessage::Install {
                switch: r.switch_id.clone(),
                table: r.table.clone(),
                key: r.key,
                action: r.action,
            },
            Command::ReadCounters { switch_id, counter } => {
                SouthboundMessage::ReadCounters { switch: switch_id.clone(), counter: counter.clone() }
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("unknown switch `{0}`")]
    UnknownSwitch(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Switch-side endpoint of the southbound channel.
pub trait Southbound {
    fn install_rule(&mut self, rule: &MitigationRule) -> Result<(), ControllerError>;
    fn read_counters(&self, switch_id: &str, counter: &str) -> Result<Vec<CounterEntry>, ControllerError>;
}

/// The set of switches a controller manages, by id.
#[derive(Debug, Default)]
pub struct Fabric {
    pub switches: BTreeMap<String, SwitchState>,
}

impl Fabric {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, sw: SwitchState) {
        self.switches.insert(sw.id.clone(), sw);
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut SwitchState> {
        self.switches.get_mut(id)
    }

    pub fn apply(&mut self, cmd: &Command) -> Result<Option<Vec<CounterEntry>>, ControllerError> {
        match cmd {
            Command::Install(rule) => self.install_rule(rule).map(|_| None),
            Command::ReadCounters { switch_id, counter } => self.read_counters(switch_id, counter).map(Some),
        }
    }
}

impl Southbound for Fabric {
    fn install_rule(&mut self, rule: &MitigationRule) -> Result<(), ControllerError> {
        let sw = self
            .switches
            .get_mut(&rule.switch_id)
            .ok_or_else(|| ControllerError::UnknownSwitch(rule.switch_id.clone()))?;
        let action = match rule.action {
            RuleAction::Drop => ActionSpec::Drop,
        };
        Ok(sw.install_entry(&rule.table, rule.key as u128, action)?)
    }

    fn read_counters(&self, switch_id: &str, counter: &str) -> Result<Vec<CounterEntry>, ControllerError> {
        let sw = self.switches.get(switch_id).ok_or_else(|| ControllerError::UnknownSwitch(switch_id.to_string()))?;
        Ok(sw.read_counters(counter)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Alert windows needed before a node is flagged.
    pub confirm_k: usize,
    /// Simulated delay between an alert and the resulting install.
    pub propagation_delay_s: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { confirm_k: 1, propagation_delay_s: 0.0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Controller {
    pub config: ControllerConfig,
    pub nodes: BTreeMap<u64, NodeStatus>,
    rules: BTreeSet<(String, u64)>,
    pub installed: Vec<MitigationRule>,
    /// Southbound JSON lines and `#` summaries, in order.
    pub log: Vec<String>,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Self {
        Controller { config, ..Default::default() }
    }

    pub fn status(&self, addr: u64) -> Option<&NodeStatus> {
        self.nodes.get(&addr)
    }

    pub fn handle_event(&mut self, event: &ControllerEvent) -> Vec<Command> {
        match event {
            ControllerEvent::Alert(alert) => self.handle_alert(alert),
            ControllerEvent::ParseFailed { switch_id, ts, reason } => {
                self.log.push(format!("# parse-failed switch={switch_id} ts={ts} {reason}"));
                Vec::new()
            }
            ControllerEvent::Diagnostic { switch_id, ts, message } => {
                self.log.push(format!("# diagnostic switch={switch_id} ts={ts} {message}"));
                Vec::new()
            }
            ControllerEvent::CounterSnapshot { switch_id, counter, entries } => {
                let total: u64 = entries.iter().map(|e| e.count).sum();
                self.log.push(format!(
                    "# snapshot switch={switch_id} counter={counter} cells={} total={total}",
                    entries.len()
                ));
                Vec::new()
            }
        }
    }

    fn handle_alert(&mut self, alert: &Alert) -> Vec<Command> {
        self.log.push(SouthboundMessage::from(alert).to_line());
        let status = self.nodes.entry(alert.dst_addr).or_insert_with(|| NodeStatus::new(alert.dst_addr));
        status.alert_windows.insert(alert.window_index);
        if status.state != NodeState::Flagged {
            if status.alert_windows.len() >= self.config.confirm_k {
                status.state = NodeState::Flagged;
                status.flagged_at = Some(alert.timestamp_s);
            } else {
                status.state = NodeState::Suspect;
            }
        }
        if status.state != NodeState::Flagged || self.rules.contains(&(alert.switch_id.clone(), alert.dst_addr)) {
            return Vec::new();
        }
        self.rules.insert((alert.switch_id.clone(), alert.dst_addr));
        let rule = MitigationRule {
            switch_id: alert.switch_id.clone(),
            table: BLOCKLIST.to_string(),
            key: alert.dst_addr,
            action: RuleAction::Drop,
        };
        let cmd = Command::Install(rule);
        self.log.push(SouthboundMessage::from(&cmd).to_line());
        vec![cmd]
    }

    /// Record that an install command reached its switch.
    pub fn confirm_installed(&mut self, rule: MitigationRule) {
        self.installed.push(rule);
    }

    /// Read the `dstnodecounter` cells of one switch over the southbound channel.
    pub fn poll_counters<S: Southbound>(
        &mut self,
        fabric: &S,
        switch_id: &str,
    ) -> Result<ControllerEvent, ControllerError> {
        let cmd = Command::ReadCounters { switch_id: switch_id.to_string(), counter: DSTNODECOUNTER.to_string() };
        self.log.push(SouthboundMessage::from(&cmd).to_line());
        let entries = fabric.read_counters(switch_id, DSTNODECOUNTER)?;
        let event = ControllerEvent::CounterSnapshot {
            switch_id: switch_id.to_string(),
            counter: DSTNODECOUNTER.to_string(),
            entries,
        };
        self.handle_event(&event);
        Ok(event)
    }
}
