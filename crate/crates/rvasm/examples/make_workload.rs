//! Emit one of the bundled test workloads as an ELF file, for driving the
//! CLI by hand:
//!
//!   cargo run -p rvasm --example make_workload -- hello /tmp/hello.elf
//!   cargo run -p fase-cli -- run --elf /tmp/hello.elf

use rvasm::workloads;

fn main() {
    let mut args = std::env::args().skip(1);
    let (kind, out) = match (args.next(), args.next()) {
        (Some(k), Some(o)) => (k, o),
        _ => {
            eprintln!("usage: make_workload <hello|counter|touch|syscalls|wake|signal|misc> <out.elf>");
            std::process::exit(2);
        }
    };
    let bytes = match kind.as_str() {
        "hello" => workloads::hello(),
        "counter" => workloads::futex_counter(4, 1000),
        "touch" => workloads::touch_pages(64, true),
        "syscalls" => workloads::small_syscalls(100),
        "wake" => workloads::uncontended_wake(2),
        "signal" => workloads::signal_counter(),
        "misc" => workloads::misc_probe(),
        other => {
            eprintln!("unknown workload {other:?}");
            std::process::exit(2);
        }
    };
    std::fs::write(&out, bytes).expect("write ELF");
    println!("wrote {out}");
}
