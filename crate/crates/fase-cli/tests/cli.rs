//! Front-end behavior through the real binary: flags, config files, report
//! files, exit-code propagation, and the report post-processing subcommands.

use std::path::{Path, PathBuf};
use std::process::Command;

use rvasm::workloads;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fase"))
}

fn write_elf(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, bytes).unwrap();
    path
}

#[test]
fn run_passes_workload_stdout_through_and_propagates_exit() {
    let dir = tempfile::tempdir().unwrap();
    let elf = write_elf(dir.path(), "hello.elf", &workloads::hello());
    let out = bin().args(["run", "--quiet", "--elf"]).arg(&elf).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(out.stdout, workloads::HELLO_STDOUT);
}

#[test]
fn run_writes_parseable_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let elf = write_elf(dir.path(), "hello.elf", &workloads::hello());
    let report = dir.path().join("run.report");
    let out = bin()
        .args(["run", "--capture-stdout", "--cores", "2", "--report"])
        .arg(&report)
        .arg("--elf")
        .arg(&elf)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("fase-report v1\n"));
    assert!(text.contains("exit.main=0"));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("run summary"), "summary on stderr: {stderr}");
    assert!(stderr.contains("traffic by request"));
}

#[test]
fn nonzero_workload_exit_code_propagates() {
    let dir = tempfile::tempdir().unwrap();
    // A counter that expects the wrong total exits 1.
    let elf = write_elf(dir.path(), "touch.elf", &workloads::touch_pages(4, true));
    let ok = bin().args(["run", "--quiet", "--elf"]).arg(&elf).status().unwrap();
    assert_eq!(ok.code(), Some(0));

    let mut a = rvasm::Asm::new(0x11000);
    a.label("_start");
    a.li(rvasm::enc::A0, 3);
    a.li(rvasm::enc::A7, 94);
    a.inst(rvasm::enc::ecall());
    let p = a.finish();
    let bytes = rvasm::ElfBuilder::new(rvasm::ET_EXEC)
        .entry(0x11000)
        .section(rvasm::Section { vaddr: p.base, bytes: p.image, bss: 0, flags: rvasm::PF_R | rvasm::PF_X })
        .build();
    let elf3 = write_elf(dir.path(), "exit3.elf", &bytes);
    let st = bin().args(["run", "--quiet", "--elf"]).arg(&elf3).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn config_file_drives_a_run_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let elf = write_elf(dir.path(), "hello.elf", &workloads::hello());
    let report = dir.path().join("cfg.report");
    let cfgfile = dir.path().join("run.cfg");
    std::fs::write(
        &cfgfile,
        format!("elf={}\ncores=1\nbaud=115200\nhfutex=off\ncapture_stdout=on\n", elf.display()),
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfgfile)
        .args(["--cores", "2", "--report"])
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("utick.1="), "flag must override the config core count");
}

#[test]
fn compare_and_traffic_consume_reports() {
    let dir = tempfile::tempdir().unwrap();
    let elf = write_elf(dir.path(), "hello.elf", &workloads::hello());
    let ra = dir.path().join("a.report");
    let rb = dir.path().join("b.report");
    for (r, baud) in [(&ra, "921600"), (&rb, "115200")] {
        let st = bin()
            .args(["run", "--quiet", "--capture-stdout", "--baud", baud, "--report"])
            .arg(r)
            .arg("--elf")
            .arg(&elf)
            .status()
            .unwrap();
        assert!(st.success());
    }
    // Identical instruction streams: zero tick error across baud rates.
    let out = bin().args(["compare"]).arg(&ra).arg(&rb).args(["--metric", "ticks"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "+0.000000");
    // Wall-clock seconds differ: slower baud must be strictly positive error.
    let out = bin().args(["compare"]).arg(&ra).arg(&rb).args(["--metric", "seconds"]).output().unwrap();
    let err: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(err > 1.0, "115200 baud should be much slower, got {err}");

    let out = bin().args(["traffic"]).arg(&ra).args(["--group-by", "opcode"]).output().unwrap();
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("page_write"), "{table}");
    let out = bin().args(["traffic"]).arg(&ra).args(["--group-by", "syscall"]).output().unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("load"));
}

#[test]
fn selftest_subcommand_reports_success() {
    let out = bin().args(["selftest", "--count", "25", "--seed", "7"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("25/25"));
}

#[test]
fn invalid_configuration_fails_cleanly() {
    let st = bin().args(["run", "--elf", "/no/such/file.elf", "--quiet"]).output().unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("not found"));
}
