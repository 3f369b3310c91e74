//! Command-line front end: configure a run, launch a workload, and emit
//! performance/traffic reports.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fase::config::{parse_bool, BackendKind, RunConfig};
use fase::machine::MachineConfig;
use fase::report::{compare, GroupBy, Report};
use fase::runtime::{RunOutcome, Runtime};
use fase::transport::{Channel, InProcessChannel, SerialChannel, SocketChannel};

#[derive(Parser)]
#[command(name = "fase", about = "Run riscv64 Linux workloads on a co-simulated remote-syscall target", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a workload ELF and write run reports.
    Run(RunArgs),
    /// Relative error of a metric between two machine-readable reports.
    Compare(CompareArgs),
    /// Traffic table from a machine-readable report.
    Traffic(TrafficArgs),
    /// Differential ISA validation against the reference interpreter.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key=value config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Workload ELF path.
    #[arg(long)]
    elf: Option<PathBuf>,
    /// Workload argv entries (repeatable). argv[0] defaults to the ELF path.
    #[arg(long = "arg")]
    args: Vec<String>,
    /// Workload environment entries KEY=VALUE (repeatable).
    #[arg(long = "env")]
    envs: Vec<String>,
    /// Directory searched for the dynamic linker and libraries.
    #[arg(long)]
    libdir: Option<PathBuf>,
    /// Files to preload into target buffer pages (repeatable).
    #[arg(long = "preload")]
    preloads: Vec<PathBuf>,
    #[arg(long)]
    cores: Option<u8>,
    #[arg(long)]
    mem_mib: Option<u64>,
    #[arg(long)]
    baud: Option<u64>,
    /// Serial frame format, e.g. 8N2.
    #[arg(long)]
    frame: Option<String>,
    /// inprocess | socket | serial
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    socket_addr: Option<String>,
    #[arg(long)]
    serial_dev: Option<PathBuf>,
    /// Hardware-assisted futex wake absorption: on|off.
    #[arg(long)]
    hfutex: Option<String>,
    /// Direct-mode baseline wire protocol: on|off.
    #[arg(long)]
    direct: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ns_per_tick: Option<u64>,
    /// Where to write the machine-readable report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Capture workload stdout into the report instead of inheriting.
    #[arg(long)]
    capture_stdout: bool,
    /// Suppress the human-readable summary.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference report (the denominator).
    report_a: PathBuf,
    /// Candidate report.
    report_b: PathBuf,
    /// Metric key, e.g. ticks, seconds, bytes.total.
    #[arg(long, default_value = "ticks")]
    metric: String,
}

#[derive(Args)]
struct TrafficArgs {
    report: PathBuf,
    /// opcode | syscall
    #[arg(long, default_value = "opcode")]
    group_by: String,
}

#[derive(Args)]
struct SelftestArgs {
    /// Number of generated programs.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Maximum instructions per program.
    #[arg(long, default_value_t = 200)]
    max_len: usize,
    #[arg(long, default_value_t = 20260809)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fase: {e:#}");
            ExitCode::from(70)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Traffic(a) => cmd_traffic(a),
        Cmd::Selftest(a) => cmd_selftest(a),
    }
}

fn build_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &a.config {
        cfg.apply_file(path).with_context(|| format!("reading config {}", path.display()))?;
    }
    if let Some(elf) = &a.elf {
        cfg.elf = elf.clone();
    }
    cfg.argv.extend(a.args.iter().cloned());
    cfg.envp.extend(a.envs.iter().cloned());
    if let Some(d) = &a.libdir {
        cfg.libdir = Some(d.clone());
    }
    cfg.preload.extend(a.preloads.iter().cloned());
    if let Some(v) = a.cores {
        cfg.cores = v;
    }
    if let Some(v) = a.mem_mib {
        cfg.mem_mib = v;
    }
    if let Some(v) = a.baud {
        cfg.baud = v;
    }
    if let Some(v) = &a.frame {
        cfg.frame = fase::transport::FrameFormat::parse(v).context("invalid --frame")?;
    }
    if let Some(v) = &a.backend {
        cfg.backend = BackendKind::parse(v).context("invalid --backend")?;
    }
    if let Some(v) = &a.socket_addr {
        cfg.socket_addr = Some(v.clone());
    }
    if let Some(v) = &a.serial_dev {
        cfg.serial_dev = Some(v.clone());
    }
    if let Some(v) = &a.hfutex {
        cfg.hfutex = parse_bool(v).context("invalid --hfutex")?;
    }
    if let Some(v) = &a.direct {
        cfg.direct = parse_bool(v).context("invalid --direct")?;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.ns_per_tick {
        cfg.ns_per_tick = v;
    }
    if let Some(v) = &a.report {
        cfg.report_path = Some(v.clone());
    }
    if a.capture_stdout {
        cfg.capture_stdout = true;
    }
    if cfg.argv.is_empty() {
        cfg.argv.push(cfg.elf.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let quiet = a.quiet;
    let cfg = build_config(&a)?;
    let outcome = match cfg.backend {
        BackendKind::InProcess => {
            let mcfg = MachineConfig {
                cores: cfg.cores,
                mem_size: cfg.mem_mib * 1024 * 1024,
                ns_per_tick: cfg.ns_per_tick,
                direct_enabled: cfg.direct,
                ..Default::default()
            };
            let chan = InProcessChannel::new(mcfg, cfg.channel_config());
            execute(cfg.clone(), chan)?
        }
        BackendKind::Socket => {
            let addr = cfg.socket_addr.clone().unwrap();
            let chan = SocketChannel::connect(&addr, Some(Duration::from_secs(60)))
                .with_context(|| format!("connecting to target at {addr}"))?;
            execute(cfg.clone(), chan)?
        }
        BackendKind::Serial => {
            let dev = cfg.serial_dev.clone().unwrap();
            let chan = SerialChannel::open(&dev, &cfg.channel_config())
                .with_context(|| format!("opening serial device {}", dev.display()))?;
            execute(cfg.clone(), chan)?
        }
    };

    let report = Report::from_outcome(&outcome);
    if let Some(path) = &cfg.report_path {
        std::fs::write(path, report.to_machine_string())
            .with_context(|| format!("writing report {}", path.display()))?;
    }
    if !quiet {
        eprint!("{}", report.to_text());
    }
    if let Some(fatal) = &outcome.fatal {
        eprintln!("fase: workload terminated: {fatal}");
    }
    let code = outcome.main_exit.clamp(0, 255) as u8;
    Ok(ExitCode::from(code))
}

fn execute<C: Channel>(cfg: RunConfig, chan: C) -> Result<RunOutcome> {
    let mut rt = Runtime::new(cfg, chan).context("booting the runtime")?;
    let outcome = rt.run().context("executing the workload")?;
    Ok(outcome)
}

fn cmd_compare(a: CompareArgs) -> Result<ExitCode> {
    let ra = Report::parse(&std::fs::read_to_string(&a.report_a)?)
        .with_context(|| format!("parsing {}", a.report_a.display()))?;
    let rb = Report::parse(&std::fs::read_to_string(&a.report_b)?)
        .with_context(|| format!("parsing {}", a.report_b.display()))?;
    let e = compare(&ra, &rb, &a.metric)?;
    println!("{e:+.6}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_traffic(a: TrafficArgs) -> Result<ExitCode> {
    let report = Report::parse(&std::fs::read_to_string(&a.report)?)
        .with_context(|| format!("parsing {}", a.report.display()))?;
    let group_by = match a.group_by.as_str() {
        "opcode" => GroupBy::Opcode,
        "syscall" => GroupBy::Syscall,
        other => bail!("unknown grouping {other:?} (use opcode or syscall)"),
    };
    let rows = report.traffic_table(group_by);
    let total: u64 = rows.iter().map(|r| r.bytes).sum();
    println!("{:<24} {:>14} {:>8}", "label", "bytes", "share");
    for row in &rows {
        println!("{:<24} {:>14} {:>7.2}%", row.label, row.bytes, row.share * 100.0);
    }
    println!("{:<24} {:>14} {:>8}", "total", total, "100.00%");
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest(a: SelftestArgs) -> Result<ExitCode> {
    let report = fase::selftest::run_differential(a.count, a.max_len, a.seed);
    for (idx, msg) in &report.mismatches {
        eprintln!("program {idx}: MISMATCH: {msg}");
    }
    println!(
        "selftest: {}/{} generated programs match the reference interpreter",
        report.programs - report.mismatches.len(),
        report.programs
    );
    if report.all_match() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}
