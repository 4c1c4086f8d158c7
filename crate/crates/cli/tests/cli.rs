use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn p4guard(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_p4guard")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_scenario(dir: &Path, extra: &[&str]) {
    let mut args = vec!["example", "--legit", "5", "--duration", "3"];
    args.extend_from_slice(extra);
    let json = ok(&p4guard(&args, dir));
    fs::write(dir.join("s.json"), json).unwrap();
}

#[test]
fn simulate_then_replay_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scenario(d, &["--flood-hz", "50"]);
    let live = ok(&p4guard(
        &["simulate", "--scenario", "s.json", "--pcap", "a.pcap", "--log", "a.log", "--counters", "c.csv"],
        d,
    ));
    let report: serde_json::Value = serde_json::from_str(&live).unwrap();
    assert_eq!(report["alerts"][0]["dst_addr"], "0x00000000000000AA");
    assert_eq!(report["rules_installed"].as_array().unwrap().len(), 1);

    let pcap = fs::read(d.join("a.pcap")).unwrap();
    assert_eq!(&pcap[..4], &[0xD4, 0xC3, 0xB2, 0xA1]);
    assert_eq!(&pcap[20..24], &147u32.to_le_bytes());
    let log = fs::read_to_string(d.join("a.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with(r#"{"type":"install""#)));
    assert!(fs::read_to_string(d.join("c.csv")).unwrap().starts_with("key_hex,count,window_index\n"));

    ok(&p4guard(&["replay", "--pcap", "a.pcap", "--scenario", "s.json", "--report", "r.json", "--log", "b.log"], d));
    let replayed: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(replayed, report);
    assert_eq!(fs::read_to_string(d.join("b.log")).unwrap(), log);
}

#[test]
fn overrides_change_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scenario(d, &["--flood-hz", "50"]);
    let quiet = ok(&p4guard(&["simulate", "--scenario", "s.json", "--theta", "100000"], d));
    let report: serde_json::Value = serde_json::from_str(&quiet).unwrap();
    assert!(report["alerts"].as_array().unwrap().is_empty());

    // frames use 0x4558, so a switch expecting 0x4548 rejects them all
    ok(&p4guard(&["simulate", "--scenario", "s.json", "--pcap", "a.pcap"], d));
    let eh = ok(&p4guard(&["replay", "--pcap", "a.pcap", "--zep-proto-id", "0x4548"], d));
    let report: serde_json::Value = serde_json::from_str(&eh).unwrap();
    assert_eq!(report["parse_failures"], report["packets_in"]);
    assert_eq!(report["forwarded"], 0);
}

#[test]
fn benign_scenario_is_quiet() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path(), &[]);
    let out = ok(&p4guard(&["simulate", "--scenario", "s.json"], dir.path()));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["dropped"], 0);
    assert!(report["alerts"].as_array().unwrap().is_empty());
}

#[test]
fn inspect_prints_headers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scenario(d, &[]);
    ok(&p4guard(&["simulate", "--scenario", "s.json", "--pcap", "a.pcap"], d));
    let text = ok(&p4guard(&["inspect", "--pcap", "a.pcap", "--limit", "2"], d));
    assert_eq!(text.lines().filter(|l| l.starts_with('#')).count(), 2);
    assert!(text.contains("ZEP{protoIDstring=0x4558"));
    assert!(text.contains("SixLoWPAN{"));
    assert!(text.contains("HELLO"));
}

#[test]
fn validate_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scenario(d, &["--flood-hz", "5"]);
    fs::write(
        d.join("schema.json"),
        r#"[{"name":"eth","fields":[{"name":"dst","bits":48},{"name":"src","bits":48},{"name":"type","bits":16}]}]"#,
    )
    .unwrap();
    fs::write(
        d.join("graph.json"),
        r#"{"start":"s","states":{"s":{"extract":["eth"],"select":{"on":"eth.type","cases":{"0x0800":"ACCEPT"},"default":"REJECT"}}}}"#,
    )
    .unwrap();
    let text =
        ok(&p4guard(&["validate", "--scenario", "s.json", "--schema", "schema.json", "--graph", "graph.json"], d));
    assert_eq!(text.lines().count(), 3);

    fs::write(d.join("bad_graph.json"), r#"{"start":"s","states":{"s":{"extract":["nope"],"next":"gone"}}}"#).unwrap();
    let out = p4guard(&["validate", "--schema", "schema.json", "--graph", "bad_graph.json"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("violation"));
}

#[test]
fn bad_input_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("junk.pcap"), [0u8; 30]).unwrap();
    fs::write(d.join("bad.json"), r#"{"duration_s": -1}"#).unwrap();
    for args in [
        &["replay", "--pcap", "missing.pcap"][..],
        &["replay", "--pcap", "junk.pcap"],
        &["simulate", "--scenario", "bad.json"],
        &["validate"],
    ] {
        let out = p4guard(args, d);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    assert_eq!(p4guard(&["simulate"], d).status.code(), Some(1));
    assert_eq!(p4guard(&["--help"], d).status.code(), Some(0));
}
