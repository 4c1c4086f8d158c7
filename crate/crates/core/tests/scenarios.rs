use std::collections::HashMap;

use p4guard::parser::parse;
use p4guard::pcap::{self, PcapRecord};
use p4guard::profile::{self, ProfileConfig, BROADCAST};
use p4guard::run::{run_records, run_scenario, RunConfig};
use p4guard::simnet::{generate, prng_next, star_scenario, u01, AttackMode, AttackTarget, Role};
use p4guard::PacketMeta;

fn dst_of(raw: &[u8]) -> u64 {
    let p = profile::build_profile(ProfileConfig::default()).unwrap();
    let pkt = parse(&p.graph, &p.schemas, raw, PacketMeta::new(0, 0.0)).unwrap();
    profile::destination(&pkt).unwrap()
}

#[test]
fn beacon_counts_match_enumeration() {
    let s = star_scenario(5, 2.0, None, 10.0, 77);
    let recs = generate(&s).unwrap();

    // phases drawn in node order from the same seed
    let mut state = s.seed;
    let period = 0.5;
    let mut expected = 0u64;
    let mut per_node = HashMap::new();
    for n in s.nodes.iter().filter(|n| n.role == Role::Legit) {
        let (v, next) = prng_next(state);
        state = next;
        let phase = u01(v) * period;
        let count = ((s.duration_s - phase) / period).floor() as u64 + 1;
        expected += count;
        per_node.insert(n.id.clone(), count);
    }
    assert_eq!(expected, 100);
    assert_eq!(recs.len() as u64, expected);
    for (id, count) in per_node {
        assert_eq!(recs.iter().filter(|r| r.src_node_id == id).count() as u64, count);
    }
    assert!(recs.iter().all(|r| dst_of(&r.raw_bytes) == BROADCAST));
}

#[test]
fn reply_flood_counts() {
    let s = star_scenario(10, 2.0, Some(10.0), 10.0, 1);
    let recs = generate(&s).unwrap();
    let count = |note: &str| recs.iter().filter(|r| r.note == note).count();
    assert_eq!(count("advert"), 100);
    assert_eq!(count("reply"), 1000);
    assert_eq!(count("beacon"), 200);
    assert!(recs.iter().filter(|r| r.note == "reply").all(|r| dst_of(&r.raw_bytes) == 0xAA));
    assert!(recs.iter().filter(|r| r.note == "advert").all(|r| dst_of(&r.raw_bytes) == BROADCAST));
}

#[test]
fn generated_streams_are_sorted_parse_and_are_deterministic() {
    let mut s = star_scenario(6, 3.0, Some(40.0), 4.0, 9);
    s.attack.as_mut().unwrap().start_s = 1.3;
    let a = generate(&s).unwrap();
    let b = generate(&s).unwrap();
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0].timestamp_s <= w[1].timestamp_s));
    let p = profile::build_profile(s.profile).unwrap();
    for r in &a {
        let pkt = parse(&p.graph, &p.schemas, &r.raw_bytes, PacketMeta::new(0, r.timestamp_s)).unwrap();
        assert!(profile::classify_hello(&pkt, &s.profile));
        assert_eq!(r.timestamp_s, (r.timestamp_s * 1e6).round() / 1e6);
    }
    // ZEP sequence numbers count up per source
    let mut last: HashMap<&str, u128> = HashMap::new();
    for r in &a {
        let pkt = parse(&p.graph, &p.schemas, &r.raw_bytes, PacketMeta::new(0, 0.0)).unwrap();
        let seq = pkt.field("ZEP", "seq").unwrap();
        let prev = last.insert(r.src_node_id.as_str(), seq);
        assert_eq!(seq, prev.map_or(0, |p| p + 1));
    }

    let mut other = s.clone();
    other.seed = 10;
    assert_ne!(generate(&other).unwrap(), a);
}

#[test]
fn no_attacker_means_no_unicast() {
    let s = star_scenario(8, 2.0, None, 5.0, 4);
    let recs = generate(&s).unwrap();
    assert!(recs.iter().all(|r| dst_of(&r.raw_bytes) == BROADCAST));
    let (_, out) = run_scenario(&s).unwrap();
    assert!(out.report.alerts.is_empty());
}

#[test]
fn mitigation_freezes_forwarding() {
    for (mode, target) in
        [(AttackMode::ReplyFlood, AttackTarget::All), (AttackMode::DirectFlood, AttackTarget::Addr(3))]
    {
        let mut s = star_scenario(10, 2.0, Some(100.0), 5.0, 21);
        let a = s.attack.as_mut().unwrap();
        a.mode = mode;
        a.target = target;
        let victim = if mode == AttackMode::ReplyFlood { 0xAA } else { 3 };
        let (_, out) = run_scenario(&s).unwrap();
        assert_eq!(out.report.rules_installed.len(), 1, "{mode:?}");
        assert_eq!(out.report.rules_installed[0].key, victim);
        let install_ts = out.controller.nodes[&victim].flagged_at.unwrap();
        let forwarded_after =
            out.trace.iter().filter(|t| t.timestamp_s > install_ts && t.dst == Some(victim) && t.forwarded).count();
        assert_eq!(forwarded_after, 0, "{mode:?}");
        assert!(out.trace.iter().any(|t| t.timestamp_s > install_ts && t.dst == Some(victim)));
    }
}

#[test]
fn confirm_k_delays_install() {
    let mut s = star_scenario(10, 2.0, Some(100.0), 4.0, 2);
    s.controller.confirm_k = 2;
    let (_, out) = run_scenario(&s).unwrap();
    let windows: Vec<u64> = out.report.alerts.iter().map(|a| a.window_index).collect();
    assert_eq!(windows, vec![0, 1]);
    assert_eq!(out.report.rules_installed.len(), 1);
}

#[test]
fn report_conservation_and_tallies() {
    let s = star_scenario(5, 2.0, Some(20.0), 6.0, 8);
    let (recs, out) = run_scenario(&s).unwrap();
    let r = &out.report;
    assert_eq!(r.packets_in, recs.len() as u64);
    assert_eq!(r.packets_in, r.forwarded + r.dropped);

    let mut naive: HashMap<String, u64> = HashMap::new();
    for t in out.trace.iter().filter(|t| t.forwarded && t.hello) {
        if let Some(d) = t.dst.filter(|&d| d != BROADCAST) {
            *naive.entry(format!("0x{d:016X}")).or_default() += 1;
        }
    }
    assert_eq!(r.per_dst_counts.clone().into_iter().collect::<HashMap<_, _>>(), naive);
    // 20 adverts/s x 5 replies = 100/s, so window 0 crosses theta=50
    assert_eq!(r.alerts.len(), 1);
    assert!(out.log.iter().any(|l| l.starts_with(r#"{"type":"alert""#)));
    assert!(out.log.iter().any(|l| l.starts_with(r#"{"type":"install""#)));
    assert!(out.log.iter().any(|l| l.starts_with(r#"{"type":"read_counters""#)));
}

#[test]
fn pcap_replay_matches_live_run() {
    let s = star_scenario(10, 2.0, Some(100.0), 3.0, 31);
    let (recs, live) = run_scenario(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.pcap");
    pcap::write_packet_records(&path, &recs).unwrap();
    let back = pcap::read_pcap(&path).unwrap();
    let frames: Vec<PcapRecord> = recs.iter().map(PcapRecord::from).collect();
    assert_eq!(back, frames);
    let replay = run_records(&back, &RunConfig::from_scenario(&s)).unwrap();
    assert_eq!(replay.report, live.report);
    assert_eq!(replay.log, live.log);
}
