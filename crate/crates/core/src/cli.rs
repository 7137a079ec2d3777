//! Command-line front end.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::campaign::{
    read_report_csv, run_campaign, summarize, write_evidence_csv, write_report_csv, write_summary_csv,
};
use crate::circuit::LinkModel;
use crate::config::{parse_seed, RunConfig};
use crate::dft::{run_all, GoldenReference, TestOutcome};
use crate::error::Error;
use crate::fault::{enumerate_faults, reference_netlist, Fault, Netlist};
use crate::sim::{measure_lock, simulate_model, write_trace_csv, SimOptions};

pub const EXIT_OK: i32 = 0;
/// Malformed command line (unknown subcommand or flag).
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NETLIST: i32 = 3;
pub const EXIT_SIMULATION: i32 = 4;

/// Seed fallback when neither `--seed` nor the config file sets one.
pub const SEED_ENV: &str = "LOWSWING_SEED";

#[derive(Debug, Parser)]
#[command(name = "lowswing", version, about = "Low-swing link simulator and DFT fault campaign")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of `*.net` files; the built-in reference netlists otherwise
    #[arg(long)]
    netlists: Option<PathBuf>,
    /// PRBS seed (decimal or 0x hex)
    #[arg(long)]
    seed: Option<String>,
    /// Config override, repeatable: `--set key=value`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the link once and write the lock trace
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulated time in seconds
        #[arg(long)]
        duration: Option<f64>,
        /// Inject a fault, repeatable: `--fault id:defect`
        #[arg(long = "fault")]
        faults: Vec<String>,
        /// Starting DLL phase; half the wheel from the optimum by default
        #[arg(long)]
        start_phase: Option<usize>,
        /// Trace CSV path
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// List the fault universe
    Faults {
        #[command(flatten)]
        common: Common,
    },
    /// Run DC, scan and BIST on one fault
    Test {
        #[command(flatten)]
        common: Common,
        /// Fault as `id:defect`
        #[arg(long)]
        fault: String,
    },
    /// Run every fault through all three stages
    Campaign {
        #[command(flatten)]
        common: Common,
        /// Worker threads; 0 uses one per core
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output directory for report, summary and evidence CSVs
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Render coverage tables from a report CSV
    Report {
        /// Report CSV written by `campaign`
        report: PathBuf,
        /// Also write the per-class summary CSV here
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Re-emit the report CSV here
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// An error paired with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(msg: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_CONFIG, message: msg.to_string() }
    }

    fn netlist(msg: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_NETLIST, message: msg.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            Error::NetlistSyntax { .. }
            | Error::DuplicateDevice { .. }
            | Error::UnknownBlock { .. }
            | Error::UnknownRole { .. }
            | Error::FaultNotInUniverse(_) => EXIT_NETLIST,
            _ => EXIT_SIMULATION,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: EXIT_SIMULATION, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit status. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = out.flush();
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut impl Write) -> CliResult<()> {
    match cmd {
        Command::Simulate { common, duration, faults, start_phase, out: path } => {
            let mut rc = load_config(&common)?;
            if let Some(d) = duration {
                rc.set("duration", &d.to_string())?;
                rc.validate()?;
            }
            let netlist = load_netlist(&rc)?;
            let faults = parse_faults(&faults)?;
            let model = LinkModel::with_faults(&rc.link, &faults, &netlist)?;
            let seed = resolve_seed(&common, &rc)?;
            if let Some(p) = start_phase {
                if p >= rc.link.n_phases {
                    return Err(Failure::config(format!("start phase {p} is outside 0..{}", rc.link.n_phases)));
                }
            }
            let opts = SimOptions { initial_phase: start_phase, initial_vc: None };
            let trace = simulate_model(&model, rc.duration, seed, opts)?;
            let report = measure_lock(&trace, &rc.link);
            let path = path.unwrap_or_else(|| output_dir(&rc).join("trace.csv"));
            write_trace_csv(&trace, create(&path)?)?;
            writeln!(out, "locked={}", report.locked)?;
            writeln!(out, "lock_time_s={:e}", report.lock_time)?;
            writeln!(out, "coarse_corrections={}", report.coarse_corrections)?;
            writeln!(out, "lock_count={}", report.final_lock_count)?;
            writeln!(out, "final_phase_err_ui={:.4}", report.final_phase_err)?;
            writeln!(out, "final_vc_v={:.4}", report.final_vc)?;
            writeln!(out, "trace={}", path.display())?;
        }
        Command::Faults { common } => {
            let rc = load_config(&common)?;
            let netlist = load_netlist(&rc)?;
            let faults = enumerate_faults(&netlist);
            for f in &faults {
                writeln!(out, "{f}")?;
            }
            writeln!(
                out,
                "# {} faults: 6 x {} MOS + {} capacitors",
                faults.len(),
                netlist.mos_count(),
                netlist.capacitor_count()
            )?;
        }
        Command::Test { common, fault } => {
            let rc = load_config(&common)?;
            let netlist = load_netlist(&rc)?;
            let fault: Fault = fault.parse().map_err(|e: Error| Failure::netlist(e))?;
            let seed = resolve_seed(&common, &rc)?;
            let golden = GoldenReference::new(&rc.link)?;
            let model = LinkModel::with_faults(&rc.link, std::slice::from_ref(&fault), &netlist)?;
            let outcomes = run_all(&model, &golden, seed)?;
            writeln!(out, "{}", verdict_line(&outcomes))?;
            for o in outcomes.iter().filter(|o| o.detected) {
                writeln!(out, "evidence {}: {}", o.stage, o.evidence)?;
            }
        }
        Command::Campaign { common, jobs, out: dir } => {
            let rc = load_config(&common)?;
            let netlist = load_netlist(&rc)?;
            let seed = resolve_seed(&common, &rc)?;
            let report = run_campaign(&rc.link, &netlist, seed, jobs)?;
            let dir = dir.unwrap_or_else(|| output_dir(&rc));
            fs::create_dir_all(&dir)?;
            write_report_csv(&report, create(&dir.join("report.csv"))?)?;
            write_summary_csv(&report, create(&dir.join("summary.csv"))?)?;
            write_evidence_csv(&report, create(&dir.join("evidence.csv"))?)?;
            write!(out, "{}", summarize(&report))?;
            writeln!(out, "report={}", dir.join("report.csv").display())?;
        }
        Command::Report { report, summary, csv } => {
            let file = File::open(&report)
                .map_err(|e| Failure::config(format!("{}: {e}", report.display())))?;
            let parsed = read_report_csv(file)?;
            if let Some(p) = summary {
                write_summary_csv(&parsed, create(&p)?)?;
            }
            if let Some(p) = csv {
                write_report_csv(&parsed, create(&p)?)?;
            }
            write!(out, "{}", summarize(&parsed))?;
        }
    }
    Ok(())
}

/// `dc: pass, scan: pass, bist: DETECTED`
pub fn verdict_line(outcomes: &[TestOutcome]) -> String {
    outcomes
        .iter()
        .map(|o| format!("{}: {}", o.stage, if o.detected { "DETECTED" } else { "pass" }))
        .collect::<Vec<_>>()
        .join(", ")
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut rc = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("--set expects key=value, got `{kv}`")))?;
        rc.set(k.trim(), v.trim())?;
    }
    if let Some(dir) = &common.netlists {
        rc.netlists = Some(dir.clone());
    }
    rc.validate()?;
    Ok(rc)
}

fn load_netlist(rc: &RunConfig) -> CliResult<Netlist> {
    match &rc.netlists {
        Some(dir) => {
            let nl = Netlist::load_dir(dir).map_err(|e| match e {
                Error::Io(io) => Failure::netlist(format!("{}: {io}", dir.display())),
                other => Failure::from(other),
            })?;
            if nl.devices.is_empty() {
                return Err(Failure::netlist(format!("{}: no devices in any *.net file", dir.display())));
            }
            Ok(nl)
        }
        None => Ok(reference_netlist()),
    }
}

fn parse_faults(specs: &[String]) -> CliResult<Vec<Fault>> {
    specs.iter().map(|s| s.parse::<Fault>().map_err(Failure::from)).collect()
}

/// `--seed`, then the config file, then `LOWSWING_SEED`, then the config default.
fn resolve_seed(common: &Common, rc: &RunConfig) -> CliResult<u32> {
    let seed = if let Some(s) = &common.seed {
        parse_seed(s)?
    } else if let Some(s) = rc.seed {
        s
    } else if let Ok(s) = std::env::var(SEED_ENV) {
        parse_seed(&s).map_err(|e| Failure::config(format!("{SEED_ENV}: {e}")))?
    } else {
        rc.link.prbs_seed
    };
    if seed & 0x7F == 0 {
        return Err(Failure::config(format!("seed {seed:#x} has no bits in the 7-bit PRBS register")));
    }
    Ok(seed)
}

fn output_dir(rc: &RunConfig) -> PathBuf {
    rc.output.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}
