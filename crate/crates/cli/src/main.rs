use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use p4guard::parser::{parse, validate_graph, ParseGraph};
use p4guard::pcap;
use p4guard::pipeline::counters_csv;
use p4guard::profile::{self, build_profile, ProfileConfig};
use p4guard::run::{run_records, run_scenario, RunConfig, RunError, RunOutput};
use p4guard::simnet::{star_scenario, ScenarioConfig};
use p4guard::{PacketMeta, SchemaSet};

/// `println!` that reports write errors instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {
        writeln!(io::stdout().lock(), $($arg)*)
    };
}

#[derive(Parser)]
#[command(name = "p4guard", version, about = "HELLO-flood detection on a simulated programmable switch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate traffic from a scenario and run it through switch + controller.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the generated frames here.
        #[arg(long)]
        pcap: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        tuning: Tuning,
        #[command(flatten)]
        outputs: Outputs,
    },
    /// Run frames from a pcap file through switch + controller.
    Replay {
        #[arg(long)]
        pcap: PathBuf,
        /// Take profile and controller settings from this scenario file.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
        #[command(flatten)]
        outputs: Outputs,
    },
    /// Print the parsed headers of each frame in a pcap file.
    Inspect {
        #[arg(long)]
        pcap: PathBuf,
        #[arg(long, value_parser = parse_u16)]
        zep_proto_id: Option<u16>,
        /// Stop after this many frames.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Check scenario, header schema and parse graph files.
    Validate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Print a star-topology scenario as JSON.
    Example {
        #[arg(long, default_value_t = 10)]
        legit: usize,
        #[arg(long, default_value_t = 2.0)]
        beacon_hz: f64,
        /// Advert rate of the attacker; omit for a benign scenario.
        #[arg(long)]
        flood_hz: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Tuning {
    #[arg(long)]
    theta: Option<u64>,
    /// Counter window length in seconds.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long, value_parser = parse_u16)]
    zep_proto_id: Option<u16>,
    #[arg(long, value_parser = parse_u8)]
    hello_type: Option<u8>,
    /// Alerting windows needed before a node is flagged.
    #[arg(long)]
    confirm_k: Option<usize>,
    /// Controller to switch delay in seconds.
    #[arg(long)]
    delay: Option<f64>,
}

impl Tuning {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.theta {
            cfg.profile.theta = v;
        }
        if let Some(v) = self.window {
            cfg.profile.window_s = v;
        }
        if let Some(v) = self.zep_proto_id {
            cfg.profile.zep_proto_id = v;
        }
        if let Some(v) = self.hello_type {
            cfg.profile.hello_msg_type = v;
        }
        if let Some(v) = self.confirm_k {
            cfg.controller.confirm_k = v;
        }
        if let Some(v) = self.delay {
            cfg.controller.propagation_delay_s = v;
        }
    }
}

#[derive(Args)]
struct Outputs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the southbound message log (JSON lines).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write the final counter snapshot as CSV.
    #[arg(long)]
    counters: Option<PathBuf>,
}

impl Outputs {
    fn write(&self, out: &RunOutput) -> Result<()> {
        let report = out.report.to_json();
        match &self.report {
            Some(p) => write(p, report + "\n")?,
            None => say!("{report}")?,
        }
        if let Some(p) = &self.log {
            let mut text = out.log.join("\n");
            text.push('\n');
            write(p, text)?;
        }
        if let Some(p) = &self.counters {
            write(p, counters_csv(&out.counters))?;
        }
        Ok(())
    }
}

fn parse_uint(s: &str) -> Result<u128, String> {
    let s = s.trim();
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u128::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|e| format!("not an integer: {e}"))
}

fn parse_u16(s: &str) -> Result<u16, String> {
    parse_uint(s)?.try_into().map_err(|_| "does not fit in 16 bits".to_string())
}

fn parse_u8(s: &str) -> Result<u8, String> {
    parse_uint(s)?.try_into().map_err(|_| "does not fit in 8 bits".to_string())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::from_json(&read(path)?).with_context(|| format!("loading scenario {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, pcap: pcap_out, seed, tuning, outputs } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let mut cfg = RunConfig::from_scenario(&s);
            tuning.apply(&mut cfg);
            s.profile = cfg.profile;
            s.controller = cfg.controller;
            let (records, out) = run_scenario(&s)?;
            if let Some(p) = pcap_out {
                pcap::write_packet_records(&p, &records).with_context(|| format!("writing {}", p.display()))?;
            }
            outputs.write(&out)
        }
        Command::Replay { pcap: input, scenario, tuning, outputs } => {
            let mut cfg = match scenario {
                Some(p) => RunConfig::from_scenario(&load_scenario(&p)?),
                None => RunConfig::default(),
            };
            tuning.apply(&mut cfg);
            let records = pcap::read_pcap(&input).with_context(|| format!("reading {}", input.display()))?;
            let out = run_records(&records, &cfg)?;
            outputs.write(&out)
        }
        Command::Inspect { pcap: input, zep_proto_id, limit } => {
            let config =
                ProfileConfig { zep_proto_id: zep_proto_id.unwrap_or(profile::ZEP_PROTO_ID_EX), ..Default::default() };
            let p = build_profile(config)?;
            let records = pcap::read_pcap(&input).with_context(|| format!("reading {}", input.display()))?;
            for (i, r) in records.iter().enumerate().take(limit.unwrap_or(usize::MAX)) {
                say!("#{i} t={:.6} len={}", r.timestamp_s, r.data.len())?;
                match parse(&p.graph, &p.schemas, &r.data, PacketMeta::new(0, r.timestamp_s)) {
                    Ok(pkt) => {
                        for h in &pkt.headers {
                            say!("  {h}")?;
                        }
                        let hello = if profile::classify_hello(&pkt, &config) { " HELLO" } else { "" };
                        say!("  payload {} bytes{hello}", pkt.payload.len())?;
                    }
                    Err(e) => say!("  parse error: {e}")?,
                }
            }
            Ok(())
        }
        Command::Validate { scenario, schema, graph } => {
            if scenario.is_none() && schema.is_none() && graph.is_none() {
                bail!("nothing to validate: pass --scenario, --schema and/or --graph");
            }
            if let Some(p) = scenario {
                let s = load_scenario(&p)?;
                s.validate()?;
                build_profile(s.profile)?;
                say!("scenario {}: ok ({} nodes)", p.display(), s.nodes.len())?;
            }
            let schemas = match &schema {
                Some(p) => {
                    let set =
                        SchemaSet::from_json(&read(p)?).with_context(|| format!("loading schema {}", p.display()))?;
                    say!("schema {}: ok ({} headers)", p.display(), set.len())?;
                    set
                }
                None => profile::schema_set(),
            };
            if let Some(p) = graph {
                let g = ParseGraph::from_json(&read(&p)?).with_context(|| format!("loading graph {}", p.display()))?;
                if let Err(violations) = validate_graph(&g, &schemas) {
                    for v in &violations {
                        eprintln!("  {v}");
                    }
                    bail!("graph {}: {} violation(s)", p.display(), violations.len());
                }
                say!("graph {}: ok ({} states)", p.display(), g.states.len())?;
            }
            Ok(())
        }
        Command::Example { legit, beacon_hz, flood_hz, duration, seed } => {
            let s = star_scenario(legit, beacon_hz, flood_hz, duration, seed);
            s.validate()?;
            say!("{}", s.to_json())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and --version print to stdout and are not failures
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for bad input, 2 when the engine broke one of its own invariants.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<RunError>().is_some_and(RunError::is_internal) {
        2
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let internal = anyhow::Error::new(RunError::Invariant("x".into())).context("running");
        assert_eq!(exit_code(&internal), 2);
        let input = anyhow::Error::new(RunError::Pcap(pcap::PcapError::BadMagic(0)));
        assert_eq!(exit_code(&input), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("nope")), 1);
    }

    #[test]
    fn uint_flags() {
        assert_eq!(parse_u16("0x4548"), Ok(0x4548));
        assert_eq!(parse_u16("17736"), Ok(0x4548));
        assert!(parse_u16("0x10000").is_err());
        assert_eq!(parse_u8("0X01"), Ok(1));
        assert!(parse_u8("zz").is_err());
    }
}
