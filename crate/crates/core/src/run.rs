//! End-to-end runs: frames -> switch -> controller -> rules back into the
//! switch, all in simulation time.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::addr::format_addr;
use crate::controller::{Command, Controller, ControllerConfig, ControllerEvent, Fabric, MitigationRule};
use crate::header::PacketMeta;
use crate::parser::parse;
use crate::pcap::{PcapError, PcapRecord};
use crate::pipeline::{CounterEntry, Disposition};
use crate::profile::{self, build_switch, Alert, ProfileConfig, ProfileError, BROADCAST};
use crate::simnet::{generate, PacketRecord, ScenarioConfig, ScenarioError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Pcap(#[from] PcapError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl RunError {
    /// Input problems vs. broken engine invariants.
    pub fn is_internal(&self) -> bool {
        matches!(self, RunError::Invariant(_))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub profile: ProfileConfig,
    pub controller: ControllerConfig,
    pub switch_id: String,
    pub ingress_port: u16,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            profile: ProfileConfig::default(),
            controller: ControllerConfig::default(),
            switch_id: "s1".to_string(),
            ingress_port: 0,
        }
    }
}

impl RunConfig {
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        RunConfig { profile: s.profile, controller: s.controller, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub packets_in: u64,
    pub forwarded: u64,
    pub dropped: u64,
    pub parse_failures: u64,
    pub alerts: Vec<Alert>,
    pub rules_installed: Vec<MitigationRule>,
    /// Forwarded HELLO unicasts per destination.
    pub per_dst_counts: BTreeMap<String, u64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// What happened to one input frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub timestamp_s: f64,
    pub dst: Option<u64>,
    pub hello: bool,
    pub forwarded: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub log: Vec<String>,
    /// Final `dstnodecounter` snapshot.
    pub counters: Vec<CounterEntry>,
    pub trace: Vec<TraceEntry>,
    pub controller: Controller,
}

pub fn run_scenario(scenario: &ScenarioConfig) -> Result<(Vec<PacketRecord>, RunOutput), RunError> {
    let records = generate(scenario)?;
    let frames: Vec<PcapRecord> = records.iter().map(PcapRecord::from).collect();
    let out = run_records(&frames, &RunConfig::from_scenario(scenario))?;
    Ok((records, out))
}

pub fn run_records(records: &[PcapRecord], config: &RunConfig) -> Result<RunOutput, RunError> {
    let switch = build_switch(config.switch_id.clone(), config.profile)?;
    let graph = switch.graph.clone();
    let schemas = switch.schemas.clone();
    let mut fabric = Fabric::new();
    fabric.add(switch);
    let mut controller = Controller::new(config.controller);
    let mut pending: VecDeque<(f64, Command)> = VecDeque::new();

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].timestamp_s.total_cmp(&records[b].timestamp_s));

    controller.log.push(format!(
        "# run switch={} theta={} window_s={} zep_proto_id={:#06x} records={}",
        config.switch_id,
        config.profile.theta,
        config.profile.window_s,
        config.profile.zep_proto_id,
        records.len()
    ));

    let mut report = RunReport {
        packets_in: 0,
        forwarded: 0,
        dropped: 0,
        parse_failures: 0,
        alerts: Vec::new(),
        rules_installed: Vec::new(),
        per_dst_counts: BTreeMap::new(),
    };
    let mut per_dst: BTreeMap<u64, u64> = BTreeMap::new();
    let mut trace = Vec::with_capacity(records.len());

    for idx in order {
        let rec = &records[idx];
        let ts = rec.timestamp_s;
        apply_due(&mut pending, Some(ts), &mut fabric, &mut controller);

        let meta = PacketMeta::new(config.ingress_port, ts);
        let parsed = parse(&graph, &schemas, &rec.data, meta).ok();
        let dst = parsed.as_ref().and_then(profile::destination);
        let hello = parsed.as_ref().is_some_and(|p| profile::classify_hello(p, &config.profile));

        let sw = fabric.get_mut(&config.switch_id).expect("switch registered");
        let processed = sw.process_packet(&rec.data, meta);
        report.packets_in += 1;
        let forwarded = processed.verdict.disposition != Disposition::Drop;
        if forwarded {
            report.forwarded += 1;
            if let (true, Some(d)) = (hello, dst) {
                if d != BROADCAST {
                    *per_dst.entry(d).or_default() += 1;
                }
            }
        } else {
            report.dropped += 1;
        }
        if forwarded != processed.output.is_some() {
            return Err(RunError::Invariant("output bytes present iff forwarded".into()));
        }
        trace.push(TraceEntry { timestamp_s: ts, dst, hello, forwarded });

        for ev in &processed.verdict.events {
            match ev {
                ControllerEvent::ParseFailed { .. } => report.parse_failures += 1,
                ControllerEvent::Alert(a) => report.alerts.push(a.clone()),
                _ => {}
            }
            let apply_at = ts + config.controller.propagation_delay_s;
            for cmd in controller.handle_event(ev) {
                pending.push_back((apply_at, cmd));
            }
        }
    }
    apply_due(&mut pending, None, &mut fabric, &mut controller);

    let counters = match controller.poll_counters(&fabric, &config.switch_id) {
        Ok(ControllerEvent::CounterSnapshot { entries, .. }) => entries,
        Ok(_) => Vec::new(),
        Err(e) => return Err(RunError::Invariant(format!("counter poll failed: {e}"))),
    };

    report.rules_installed = controller.installed.clone();
    report.per_dst_counts = per_dst.into_iter().map(|(k, v)| (format_addr(k), v)).collect();
    if report.packets_in != report.forwarded + report.dropped {
        return Err(RunError::Invariant("packets_in != forwarded + dropped".into()));
    }
    controller.log.push(format!(
        "# summary packets_in={} forwarded={} dropped={} parse_failures={} alerts={} rules={}",
        report.packets_in,
        report.forwarded,
        report.dropped,
        report.parse_failures,
        report.alerts.len(),
        report.rules_installed.len()
    ));

    Ok(RunOutput { report, log: controller.log.clone(), counters, trace, controller })
}

/// Apply queued commands due at or before `now` (all of them when `None`).
fn apply_due(
    pending: &mut VecDeque<(f64, Command)>,
    now: Option<f64>,
    fabric: &mut Fabric,
    controller: &mut Controller,
) {
    while let Some((at, _)) = pending.front() {
        if now.is_some_and(|t| *at > t) {
            break;
        }
        let (_, cmd) = pending.pop_front().expect("front exists");
        match (fabric.apply(&cmd), cmd) {
            (Ok(_), Command::Install(rule)) => {
                controller.log.push(format!(
                    "# installed switch={} table={} key={}",
                    rule.switch_id,
                    rule.table,
                    format_addr(rule.key)
                ));
                controller.confirm_installed(rule);
            }
            (Ok(_), Command::ReadCounters { .. }) => {}
            (Err(e), _) => controller.log.push(format!("# command failed: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::star_scenario;

    #[test]
    fn benign_run_is_quiet() {
        let s = star_scenario(4, 2.0, None, 3.0, 11);
        let (recs, out) = run_scenario(&s).unwrap();
        assert_eq!(out.report.packets_in, recs.len() as u64);
        assert_eq!(out.report.dropped, 0);
        assert!(out.report.alerts.is_empty());
        assert!(out.report.per_dst_counts.is_empty());
        assert!(out.counters.is_empty());
    }

    #[test]
    fn garbage_counts_as_parse_failure() {
        let recs = vec![PcapRecord { timestamp_s: 0.0, data: vec![0; 10] }];
        let out = run_records(&recs, &RunConfig::default()).unwrap();
        assert_eq!(out.report.parse_failures, 1);
        assert_eq!(out.report.dropped, 1);
        assert!(out.log.iter().any(|l| l.starts_with("# parse-failed")));
    }

    #[test]
    fn propagation_delay_lets_packets_through() {
        let mut s = star_scenario(10, 2.0, Some(100.0), 1.0, 3);
        let (_, fast) = run_scenario(&s).unwrap();
        s.controller.propagation_delay_s = 0.2;
        let (_, slow) = run_scenario(&s).unwrap();
        let to_attacker = |o: &RunOutput| o.report.per_dst_counts["0x00000000000000AA"];
        assert_eq!(fast.report.alerts.len(), 1);
        assert!(to_attacker(&slow) > to_attacker(&fast));
        assert_eq!(slow.report.rules_installed.len(), 1);
    }
}
