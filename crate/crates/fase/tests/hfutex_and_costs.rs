//! Hard-futex transparency and benefit, wire-cost pinning, and report
//! determinism over full workload runs.

use fase::config::RunConfig;
use fase::machine::MachineConfig;
use fase::report::Report;
use fase::runtime::{RunOutcome, Runtime};
use fase::transport::{Channel, ChannelConfig, InProcessChannel};
use rvasm::workloads;

fn run(elf_bytes: &[u8], cores: u8, hfutex: bool) -> RunOutcome {
    let dir = tempfile::tempdir().unwrap();
    let elf = dir.path().join("w.elf");
    std::fs::write(&elf, elf_bytes).unwrap();
    let cfg = RunConfig { elf, cores, mem_mib: 64, hfutex, capture_stdout: true, ..Default::default() };
    let mcfg = MachineConfig { cores, mem_size: 64 * 1024 * 1024, ..Default::default() };
    let chan = InProcessChannel::new(mcfg, ChannelConfig::default());
    let mut rt = Runtime::new(cfg, chan).unwrap();
    rt.run().unwrap()
}

#[test]
fn hfutex_transparent_on_counter_and_wake_bytes_not_worse() {
    let elf = workloads::futex_counter(4, 250);
    let on = run(&elf, 2, true);
    let off = run(&elf, 2, false);
    assert_eq!(on.main_exit, 0);
    assert_eq!(off.main_exit, 0);
    assert_eq!(on.stdout, off.stdout, "workload output must not depend on HFutex");
    assert_eq!(on.stdout.as_deref(), Some(&b"1000\n"[..]));
    let wake_on = on.ledger.attribution_bytes("futex_wake");
    let wake_off = off.ledger.attribution_bytes("futex_wake");
    assert!(wake_on <= wake_off, "wake traffic with HFutex on ({wake_on}) must not exceed off ({wake_off})");
}

#[test]
fn uncontended_wake_absorbed_with_zero_wire_bytes() {
    // One wake installs the mask; the second is absorbed by the controller.
    let two = run(&workloads::uncontended_wake(2), 1, true);
    assert_eq!(two.main_exit, 0);
    let stats = two.target_stats.as_ref().unwrap();
    assert!(stats.absorbed_wakes >= 1, "controller must absorb the repeat wake");
    assert_eq!(two.syscall_counts.get("futex_wake"), Some(&1), "only the first wake reaches the host");

    // The absorbed wake costs zero wire bytes: a run with one wake and a run
    // with two wakes spend identical futex_wake traffic.
    let one = run(&workloads::uncontended_wake(1), 1, true);
    assert_eq!(
        one.ledger.attribution_bytes("futex_wake"),
        two.ledger.attribution_bytes("futex_wake"),
        "second (absorbed) wake must add no bytes"
    );

    // With HFutex off every wake reaches the host.
    let off = run(&workloads::uncontended_wake(2), 1, false);
    assert_eq!(off.syscall_counts.get("futex_wake"), Some(&2));
    assert_eq!(off.target_stats.as_ref().unwrap().absorbed_wakes, 0);
    assert!(off.ledger.attribution_bytes("futex_wake") > two.ledger.attribution_bytes("futex_wake"));
}

#[test]
fn context_switch_wire_cost_is_exact() {
    // Register save = 31 reads at 3+10 bytes; restore = 31 writes at 11+2.
    let out = run(&workloads::futex_counter(2, 25), 1, true);
    assert_eq!(out.main_exit, 0);
    let per_leg = 31 * 13;
    let expect = (out.stats.ctx_saves + out.stats.ctx_restores) * per_leg;
    assert_eq!(out.ledger.attribution_bytes("ctx_switch"), expect);
    assert!(out.stats.ctx_saves > 0 && out.stats.ctx_restores > 1);
}

#[test]
fn identical_runs_yield_identical_machine_reports() {
    let elf = workloads::futex_counter(4, 100);
    let a = run(&elf, 4, true);
    let b = run(&elf, 4, true);
    let ra = Report::from_outcome(&a).to_machine_string();
    let rb = Report::from_outcome(&b).to_machine_string();
    assert_eq!(ra, rb, "machine reports must be byte-identical");
}

#[test]
fn core_count_changes_utick_distribution_not_output() {
    let elf = workloads::futex_counter(4, 50);
    let one = run(&elf, 1, true);
    let four = run(&elf, 4, true);
    assert_eq!(one.main_exit, 0);
    assert_eq!(four.main_exit, 0);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.uticks.len(), 1);
    assert_eq!(four.uticks.len(), 4);
    assert!(four.uticks.iter().filter(|&&u| u > 0).count() >= 2, "work must spread across cores");
}

#[test]
fn ledger_partitions_reconcile_on_real_runs() {
    let out = run(&workloads::hello(), 1, true);
    assert!(out.ledger.reconciles());
    let by_attr: u64 = out.ledger.attributions.values().sum();
    assert_eq!(by_attr, out.ledger.total_bytes());
    // Nothing in a fault-free phase charges page copies.
    let r = Report::from_outcome(&out);
    assert!(r.fields.contains_key("attr.load.bytes"));
}

#[test]
fn hfutex_mask_cleared_on_thread_switch() {
    // A single-core counter run forces thread switches on the core that
    // installed masks; the run must still complete correctly (lost wakes
    // would deadlock it).
    let out = run(&workloads::futex_counter(3, 120), 1, true);
    assert_eq!(out.main_exit, 0);
    assert_eq!(out.stdout.as_deref(), Some(&b"360\n"[..]));
}

#[test]
fn futex_heavy_fixture_dominates_the_syscall_traffic_table() {
    // A tight wake loop without absorption: the futex_wake group must top
    // the per-syscall traffic table.
    let out = run(&workloads::uncontended_wake(300), 1, false);
    assert_eq!(out.main_exit, 0);
    let report = Report::from_outcome(&out);
    let table = report.traffic_table(fase::report::GroupBy::Syscall);
    assert_eq!(table[0].label, "futex_wake", "table: {table:?}");
    assert!(table[0].share > 0.4, "futex share {:.3}", table[0].share);
    let total: f64 = table.iter().map(|r| r.share).sum();
    assert!((total - 1.0).abs() < 1e-9, "shares partition the bytes");
}

#[test]
fn socket_backend_runs_hello() {
    use fase::transport::{serve_target_on, SocketChannel};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let mcfg = MachineConfig { cores: 1, mem_size: 64 * 1024 * 1024, ..Default::default() };
    let machine = fase::machine::Machine::new(mcfg);
    let server = std::thread::spawn(move || serve_target_on(listener, machine));

    let dir = tempfile::tempdir().unwrap();
    let elf = dir.path().join("hello.elf");
    std::fs::write(&elf, workloads::hello()).unwrap();
    let cfg = RunConfig {
        elf,
        cores: 1,
        mem_mib: 64,
        capture_stdout: true,
        backend: fase::config::BackendKind::Socket,
        socket_addr: Some(addr.to_string()),
        ..Default::default()
    };
    let chan = SocketChannel::connect(&addr.to_string(), Some(std::time::Duration::from_secs(20))).unwrap();
    let mut rt = Runtime::new(cfg, chan).unwrap();
    let out = rt.run().unwrap();
    assert_eq!(out.main_exit, 0, "fatal: {:?}", out.fatal);
    assert_eq!(out.stdout.as_deref(), Some(workloads::HELLO_STDOUT));
    assert!(out.target_stats.is_none(), "remote target exposes no in-process stats");
    rt.link.tp.chan.close();
    drop(rt);
    let _ = server.join();
}
