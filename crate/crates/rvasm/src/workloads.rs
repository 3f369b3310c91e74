//! Ready-made riscv64 Linux test workloads, assembled from scratch. Each
//! builder returns complete ELF bytes for a static soft-float executable
//! (ET_EXEC at 0x11000 with the header page merged into the first load
//! segment), matching what a linker would produce for a tiny -nostdlib
//! program.

use crate::asm::Asm;
use crate::elf::{ElfBuilder, Section, ET_DYN, ET_EXEC, PF_R, PF_W, PF_X};
use crate::enc::*;

const TEXT_BASE: u64 = 0x11000;

// Syscall numbers used by the workloads.
const SYS_OPENAT: i64 = 56;
const SYS_CLOSE: i64 = 57;
const SYS_READ: i64 = 63;
const SYS_WRITE: i64 = 64;
const SYS_FSTAT: i64 = 80;
const SYS_EXIT: i64 = 93;
const SYS_EXIT_GROUP: i64 = 94;
const SYS_FUTEX: i64 = 98;
const SYS_SCHED_YIELD: i64 = 124;
const SYS_TGKILL: i64 = 131;
const SYS_RT_SIGACTION: i64 = 134;
const SYS_GETPID: i64 = 172;
const SYS_GETTID: i64 = 178;
const SYS_CLONE: i64 = 220;
const SYS_MMAP: i64 = 222;
const SYS_MSYNC: i64 = 227;

fn finish_exec(a: Asm, entry: u64) -> Vec<u8> {
    let p = a.finish();
    ElfBuilder::new(ET_EXEC)
        .entry(entry)
        .section(Section { vaddr: p.base, bytes: p.image, bss: p.bss, flags: PF_R | PF_W | PF_X })
        .build()
}

fn sys(a: &mut Asm, nr: i64) {
    a.li(A7, nr);
    a.inst(ecall());
}

fn exit_group(a: &mut Asm, code: i64) {
    a.li(A0, code);
    sys(a, SYS_EXIT_GROUP);
}

/// write(1, "Hello, FASE!\n", 13); exit_group(0)
pub fn hello() -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.li(A0, 1);
    a.la(A1, "msg");
    a.li(A2, 13);
    sys(&mut a, SYS_WRITE);
    exit_group(&mut a, 0);
    a.label("msg");
    a.data(b"Hello, FASE!\n");
    finish_exec(a, TEXT_BASE)
}

pub const HELLO_STDOUT: &[u8] = b"Hello, FASE!\n";

/// N threads (main plus N-1 clones) each add `iters` to a shared counter
/// under a futex-based mutex; main joins via CLONE_CHILD_CLEARTID, prints the
/// counter in decimal, and exits 0 iff it equals threads*iters.
pub fn futex_counter(threads: u64, iters: u64) -> Vec<u8> {
    assert!(threads >= 1);
    let children = threads - 1;
    let expected = threads * iters;
    let stack_sz_shift = 14; // 16 KiB per child stack

    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.la(S0, "mutex");
    a.la(S1, "counter");
    a.la(S2, "tids");
    a.la(S3, "stacks");
    a.li(S4, 0);

    a.label("spawn_loop");
    a.li(T0, children as i64);
    a.bge(S4, T0, "spawned");
    // tids[i] = 1: stays nonzero until the child's exit clears it.
    a.inst(slli(T1, S4, 2));
    a.inst(add(T1, T1, S2));
    a.li(T2, 1);
    a.inst(sw(T2, T1, 0));
    // child stack top = stacks + (i+1) * 16 KiB
    a.inst(addi(T3, S4, 1));
    a.inst(slli(T3, T3, stack_sz_shift));
    a.inst(add(T3, T3, S3));
    // clone(CLONE_VM|CLONE_SIGHAND|CLONE_THREAD|CLONE_CHILD_CLEARTID, sp, 0, 0, &tids[i])
    a.li64(A0, 0x0021_0900);
    a.inst(mv(A1, T3));
    a.li(A2, 0);
    a.li(A3, 0);
    a.inst(mv(A4, T1));
    sys(&mut a, SYS_CLONE);
    a.beqz(A0, "child");
    a.inst(addi(S4, S4, 1));
    a.j("spawn_loop");

    a.label("child");
    // Start barrier: spin until main releases every worker, so the threads
    // actually contend on the mutex instead of running back to back.
    a.la(T0, "go");
    a.label("child_spin");
    a.inst(lw(T1, T0, 0));
    a.beqz(T1, "child_spin");
    a.call("work");
    a.li(A0, 0);
    sys(&mut a, SYS_EXIT);

    a.label("spawned");
    a.la(T0, "go");
    a.li(T1, 1);
    a.inst(sw(T1, T0, 0));
    a.inst(fence());
    a.call("work");
    // Join children: wait while tids[i] != 0.
    a.li(S4, 0);
    a.label("join_loop");
    a.li(T0, children as i64);
    a.bge(S4, T0, "joined");
    a.inst(slli(T1, S4, 2));
    a.inst(add(T1, T1, S2));
    a.label("join_check");
    a.inst(lw(T2, T1, 0));
    a.beqz(T2, "join_next");
    a.inst(mv(A0, T1));
    a.li(A1, 0); // FUTEX_WAIT
    a.inst(mv(A2, T2));
    a.li(A3, 0);
    sys(&mut a, SYS_FUTEX);
    a.j("join_check");
    a.label("join_next");
    a.inst(addi(S4, S4, 1));
    a.j("join_loop");

    a.label("joined");
    // Decimal itoa, backwards into numbuf, newline last.
    a.inst(ld(A0, S1, 0));
    a.la(A1, "numbuf_end");
    a.inst(addi(A1, A1, -1));
    a.li(T0, 10);
    a.inst(sb(T0, A1, 0)); // trailing newline
    a.label("itoa");
    a.li(T1, 10);
    a.inst(remu(T2, A0, T1));
    a.inst(addi(T2, T2, 48));
    a.inst(addi(A1, A1, -1));
    a.inst(sb(T2, A1, 0));
    a.inst(divu(A0, A0, T1));
    a.bnez(A0, "itoa");
    a.la(T3, "numbuf_end");
    a.inst(sub(A2, T3, A1));
    a.li(A0, 1);
    sys(&mut a, SYS_WRITE);
    // exit_group(counter == expected ? 0 : 1)
    a.inst(ld(T0, S1, 0));
    a.li64(T1, expected);
    a.li(A0, 0);
    a.beq(T0, T1, "do_exit");
    a.li(A0, 1);
    a.label("do_exit");
    sys(&mut a, SYS_EXIT_GROUP);

    // One worker's share of increments, futex-mutex protected.
    a.label("work");
    a.li64(S5, iters);
    a.label("work_loop");
    a.beqz(S5, "work_done");
    a.li(T1, 1);
    a.inst(amoswap_w(T2, S0, T1, true, false));
    a.beqz(T2, "locked");
    a.label("lock_slow");
    a.li(T1, 2);
    a.inst(amoswap_w(T2, S0, T1, true, false));
    a.beqz(T2, "locked");
    a.inst(mv(A0, S0));
    a.li(A1, 0); // FUTEX_WAIT while the word still reads 2
    a.li(A2, 2);
    a.li(A3, 0);
    sys(&mut a, SYS_FUTEX);
    a.j("lock_slow");
    a.label("locked");
    a.inst(ld(T5, S1, 0));
    a.inst(addi(T5, T5, 1));
    a.inst(sd(T5, S1, 0));
    a.inst(amoswap_w(T2, S0, ZERO, false, true));
    a.li(T1, 2);
    a.bne(T2, T1, "no_wake");
    a.inst(mv(A0, S0));
    a.li(A1, 1); // FUTEX_WAKE one
    a.li(A2, 1);
    sys(&mut a, SYS_FUTEX);
    a.label("no_wake");
    // Aggressive wake every 8th round, in the style of parallel runtimes
    // that wake without checking for waiters; usually nobody is waiting.
    a.inst(andi(T1, S5, 7));
    a.bnez(T1, "no_extra_wake");
    a.inst(mv(A0, S0));
    a.li(A1, 1);
    a.li(A2, 1);
    sys(&mut a, SYS_FUTEX);
    a.label("no_extra_wake");
    a.inst(addi(S5, S5, -1));
    a.j("work_loop");
    a.label("work_done");
    a.ret();

    a.align(8);
    a.label("mutex");
    a.data_u32(0);
    a.label("go");
    a.data_u32(0);
    a.label("counter");
    a.data_u64(0);
    a.label("tids");
    for _ in 0..children.max(1) {
        a.data_u32(0);
    }
    a.align(16);
    a.label("numbuf");
    a.zero(32);
    a.label("numbuf_end");
    a.align(16);
    a.label("stacks");
    a.bss = (children.max(1) + 1) << stack_sz_shift;
    finish_exec(a, TEXT_BASE)
}

/// `wakes` uncontended futex wakes on one private word, then exit 0. The
/// word is stored to first so it is materialized target-side.
pub fn uncontended_wake(wakes: u64) -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.la(S0, "word");
    a.inst(sw(ZERO, S0, 0));
    a.li64(S1, wakes);
    a.label("loop");
    a.beqz(S1, "done");
    a.inst(mv(A0, S0));
    a.li(A1, 1); // FUTEX_WAKE
    a.li(A2, 1);
    sys(&mut a, SYS_FUTEX);
    a.inst(addi(S1, S1, -1));
    a.j("loop");
    a.label("done");
    exit_group(&mut a, 0);
    a.align(8);
    a.label("word");
    a.data_u32(0);
    finish_exec(a, TEXT_BASE)
}

/// mmap 64 anonymous pages and store one word into each, sequentially.
/// With `touch: false` the map is created but never touched (control case
/// for fault-count accounting).
pub fn touch_pages(pages: u64, touch: bool) -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.li(A0, 0);
    a.li64(A1, pages * 4096);
    a.li(A2, 3); // PROT_READ|PROT_WRITE
    a.li(A3, 0x22); // MAP_PRIVATE|MAP_ANONYMOUS
    a.li(A4, -1);
    a.li(A5, 0);
    sys(&mut a, SYS_MMAP);
    a.bltz(A0, "fail");
    if touch {
        a.li64(T0, pages);
        a.inst(mv(T1, A0));
        a.label("touch");
        a.beqz(T0, "done");
        a.inst(sd(ZERO, T1, 0));
        a.li(T2, 4096);
        a.inst(add(T1, T1, T2));
        a.inst(addi(T0, T0, -1));
        a.j("touch");
    }
    a.label("done");
    exit_group(&mut a, 0);
    a.label("fail");
    exit_group(&mut a, 1);
    finish_exec(a, TEXT_BASE)
}

/// A syscall-heavy microbenchmark: `n` getpid calls, then exit 0.
pub fn small_syscalls(n: u64) -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.li64(S0, n);
    a.label("loop");
    a.beqz(S0, "done");
    sys(&mut a, SYS_GETPID);
    a.inst(addi(S0, S0, -1));
    a.j("loop");
    a.label("done");
    exit_group(&mut a, 0);
    finish_exec(a, TEXT_BASE)
}

/// Register a SIGUSR1 handler that increments a counter, tgkill self, verify
/// the counter incremented exactly once and execution resumed in order.
pub fn signal_counter() -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    // act = { handler, flags: 0, mask: 0 }
    a.la(T0, "act");
    a.la(T1, "handler");
    a.inst(sd(T1, T0, 0));
    a.inst(sd(ZERO, T0, 8));
    a.inst(sd(ZERO, T0, 16));
    a.li(A0, 10); // SIGUSR1
    a.inst(mv(A1, T0));
    a.li(A2, 0);
    a.li(A3, 8);
    sys(&mut a, SYS_RT_SIGACTION);
    a.bnez(A0, "fail");
    sys(&mut a, SYS_GETPID);
    a.inst(mv(S2, A0));
    sys(&mut a, SYS_GETTID);
    a.inst(mv(S3, A0));
    a.inst(mv(A0, S2));
    a.inst(mv(A1, S3));
    a.li(A2, 10);
    sys(&mut a, SYS_TGKILL);
    a.bnez(A0, "fail");
    // The handler must have run exactly once by now.
    a.la(T0, "count");
    a.inst(lw(T1, T0, 0));
    a.li(T2, 1);
    a.bne(T1, T2, "fail");
    exit_group(&mut a, 0);
    a.label("fail");
    exit_group(&mut a, 1);

    a.label("handler");
    a.la(T0, "count");
    a.inst(lw(T1, T0, 0));
    a.inst(addi(T1, T1, 1));
    a.inst(sw(T1, T0, 0));
    a.ret();

    a.align(8);
    a.label("act");
    a.zero(24);
    a.label("count");
    a.data_u32(0);
    finish_exec(a, TEXT_BASE)
}

/// openat + fstat + read + double-close checks against a host fixture file.
/// `expected_size` is the host file's length; `expected_first8` its first
/// eight bytes.
pub fn openat_fstat(path: &str, expected_size: u64, expected_first8: u64) -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.li(A0, -100); // AT_FDCWD
    a.la(A1, "path");
    a.li(A2, 0); // O_RDONLY
    a.li(A3, 0);
    sys(&mut a, SYS_OPENAT);
    a.bltz(A0, "fail");
    a.inst(mv(S0, A0));
    a.inst(mv(A0, S0));
    a.la(A1, "statbuf");
    sys(&mut a, SYS_FSTAT);
    a.bnez(A0, "fail");
    a.la(A1, "statbuf");
    a.inst(ld(T0, A1, 48)); // st_size
    a.li64(T1, expected_size);
    a.bne(T0, T1, "fail");
    a.inst(mv(A0, S0));
    a.la(A1, "readbuf");
    a.li(A2, 8);
    sys(&mut a, SYS_READ);
    a.li(T0, 8);
    a.bne(A0, T0, "fail");
    a.la(T0, "readbuf");
    a.inst(ld(T1, T0, 0));
    a.li64(T2, expected_first8);
    a.bne(T1, T2, "fail");
    a.inst(mv(A0, S0));
    sys(&mut a, SYS_CLOSE);
    a.bnez(A0, "fail");
    a.inst(mv(A0, S0));
    sys(&mut a, SYS_CLOSE);
    a.li(T0, -9); // EBADF
    a.bne(A0, T0, "fail");
    exit_group(&mut a, 0);
    a.label("fail");
    exit_group(&mut a, 1);
    a.label("path");
    a.data(path.as_bytes());
    a.data(&[0]);
    a.align(8);
    a.label("statbuf");
    a.zero(128);
    a.label("readbuf");
    a.zero(16);
    finish_exec(a, TEXT_BASE)
}

/// Two MAP_SHARED mappings of one file: a store through the first must be
/// visible through the second; msync writes it back to the host file.
pub fn mmap_shared(path: &str, magic: u64) -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.li(A0, -100);
    a.la(A1, "path");
    a.li(A2, 2); // O_RDWR
    a.li(A3, 0);
    sys(&mut a, SYS_OPENAT);
    a.bltz(A0, "fail");
    a.inst(mv(S0, A0));
    for dst in [S1, S2] {
        a.li(A0, 0);
        a.li(A1, 4096);
        a.li(A2, 3); // RW
        a.li(A3, 1); // MAP_SHARED
        a.inst(mv(A4, S0));
        a.li(A5, 0);
        sys(&mut a, SYS_MMAP);
        a.bltz(A0, "fail");
        a.inst(mv(dst, A0));
    }
    a.li64(T0, magic);
    a.inst(sd(T0, S1, 0));
    a.inst(ld(T1, S2, 0));
    a.bne(T0, T1, "fail");
    a.inst(mv(A0, S1));
    a.li(A1, 4096);
    a.li(A2, 4); // MS_SYNC
    sys(&mut a, SYS_MSYNC);
    a.bnez(A0, "fail");
    exit_group(&mut a, 0);
    a.label("fail");
    exit_group(&mut a, 1);
    a.label("path");
    a.data(path.as_bytes());
    a.data(&[0]);
    finish_exec(a, TEXT_BASE)
}

/// Main thread blocks reading stdin while a cloned worker prints; the read
/// data is echoed afterwards.
pub fn read_echo_with_worker() -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    // clone a worker
    a.li64(A0, 0x0001_0900); // VM|SIGHAND|THREAD
    a.la(A1, "wstack_top");
    a.li(A2, 0);
    a.li(A3, 0);
    a.li(A4, 0);
    sys(&mut a, SYS_CLONE);
    a.beqz(A0, "worker");
    // main: read(0, buf, 16): blocks on the host until data arrives
    a.li(A0, 0);
    a.la(A1, "buf");
    a.li(A2, 16);
    sys(&mut a, SYS_READ);
    a.bltz(A0, "fail");
    a.inst(mv(A2, A0));
    a.li(A0, 1);
    a.la(A1, "buf");
    sys(&mut a, SYS_WRITE);
    exit_group(&mut a, 0);
    a.label("worker");
    a.li(S0, 3);
    a.label("wloop");
    a.beqz(S0, "wdone");
    a.li(A0, 1);
    a.la(A1, "bmsg");
    a.li(A2, 1);
    sys(&mut a, SYS_WRITE);
    sys(&mut a, SYS_SCHED_YIELD);
    a.inst(addi(S0, S0, -1));
    a.j("wloop");
    a.label("wdone");
    a.li(A0, 0);
    sys(&mut a, SYS_EXIT);
    a.label("fail");
    exit_group(&mut a, 1);
    a.label("bmsg");
    a.data(b"B");
    a.align(16);
    a.label("buf");
    a.zero(16);
    a.align(16);
    a.label("wstack");
    a.zero(4096);
    a.label("wstack_top");
    finish_exec(a, TEXT_BASE)
}

/// Minimal dynamic-linker stand-in (ET_DYN): scans the auxiliary vector for
/// AT_ENTRY and jumps there. Proves the PT_INTERP bootstrap and auxv layout.
pub fn mini_interp() -> Vec<u8> {
    let mut a = Asm::new(0x1000);
    a.label("_start");
    a.inst(ld(T0, SP, 0)); // argc
    a.inst(slli(T0, T0, 3));
    a.inst(addi(T1, SP, 8));
    a.inst(add(T1, T1, T0));
    a.inst(addi(T1, T1, 8)); // past argv NULL
    a.label("skip_env");
    a.inst(ld(T2, T1, 0));
    a.inst(addi(T1, T1, 8));
    a.bnez(T2, "skip_env");
    a.label("scan");
    a.inst(ld(T2, T1, 0));
    a.inst(ld(T3, T1, 8));
    a.inst(addi(T1, T1, 16));
    a.li(T4, 9); // AT_ENTRY
    a.beq(T2, T4, "found");
    a.bnez(T2, "scan");
    a.li(A0, 1);
    sys(&mut a, SYS_EXIT_GROUP);
    a.label("found");
    a.inst(jalr(ZERO, T3, 0));
    let p = a.finish();
    ElfBuilder::new(ET_DYN)
        .entry(0x1000)
        .section(Section { vaddr: p.base, bytes: p.image, bss: 0, flags: PF_R | PF_X })
        .build()
}

/// A hello world that requests `interp_path` as its dynamic linker.
pub fn hello_dynamic(interp_path: &str) -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.li(A0, 1);
    a.la(A1, "msg");
    a.li(A2, 13);
    sys(&mut a, SYS_WRITE);
    exit_group(&mut a, 0);
    a.label("msg");
    a.data(b"Hello, FASE!\n");
    let p = a.finish();
    ElfBuilder::new(ET_EXEC)
        .entry(TEXT_BASE)
        .section(Section { vaddr: p.base, bytes: p.image, bss: p.bss, flags: PF_R | PF_W | PF_X })
        .interp(interp_path)
        .build()
}

/// Exercises the long tail of the syscall surface; exits with the failing
/// step number, or 0 when everything behaves.
pub fn misc_probe() -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    let fail = |a: &mut Asm, step: i64| {
        a.li(A0, step);
        sys(a, SYS_EXIT_GROUP);
    };
    a.label("_start");

    // 1: uname fills sysname with "Linux".
    a.la(A0, "buf");
    a.li(A7, 160);
    a.inst(ecall());
    a.bnez(A0, "f1");
    a.la(T0, "buf");
    a.inst(lw(T1, T0, 0));
    a.li64(T2, u32::from_le_bytes(*b"Linu") as u64);
    a.bne(T1, T2, "f1");

    // 2: getrandom returns the requested length.
    a.la(A0, "buf");
    a.li(A1, 8);
    a.li(A2, 0);
    a.li(A7, 278);
    a.inst(ecall());
    a.li(T0, 8);
    a.bne(A0, T0, "f2");

    // 3: prlimit64 reports the 8 MiB stack.
    a.li(A0, 0);
    a.li(A1, 3); // RLIMIT_STACK
    a.li(A2, 0);
    a.la(A3, "buf");
    a.li(A7, 261);
    a.inst(ecall());
    a.bnez(A0, "f3");
    a.la(T0, "buf");
    a.inst(ld(T1, T0, 0));
    a.li64(T2, 8 * 1024 * 1024);
    a.bne(T1, T2, "f3");

    // 4: ioctl(stdout, TCGETS) is not a tty here.
    a.li(A0, 1);
    a.li64(A1, 0x5401);
    a.li(A2, 0);
    a.li(A7, 29);
    a.inst(ecall());
    a.li(T0, -25); // ENOTTY
    a.bne(A0, T0, "f4");

    // 5: fcntl F_DUPFD, then write through the duplicate.
    a.li(A0, 1);
    a.li(A1, 0); // F_DUPFD
    a.li(A2, 10);
    a.li(A7, 25);
    a.inst(ecall());
    a.li(T0, 10);
    a.blt(A0, T0, "f5");
    a.inst(mv(S0, A0));
    a.inst(mv(A0, S0));
    a.la(A1, "dmsg");
    a.li(A2, 1);
    sys(&mut a, SYS_WRITE);
    a.li(T0, 1);
    a.bne(A0, T0, "f5");

    // 6: mremap is unsupported.
    a.li(A0, 0);
    a.li(A1, 0);
    a.li(A2, 0);
    a.li(A3, 0);
    a.li(A7, 216);
    a.inst(ecall());
    a.li(T0, -38); // ENOSYS
    a.bne(A0, T0, "f6");

    // 7: wait4 with no children.
    a.li(A0, -1);
    a.li(A1, 0);
    a.li(A2, 0);
    a.li(A3, 0);
    a.li(A7, 260);
    a.inst(ecall());
    a.li(T0, -10); // ECHILD
    a.bne(A0, T0, "f7");

    // 8: rt_sigreturn without a frame.
    a.li(A7, 139);
    a.inst(ecall());
    a.li(T0, -22); // EINVAL
    a.bne(A0, T0, "f8");

    // 9: unknown syscall number.
    a.li64(A7, 9999);
    a.inst(ecall());
    a.li(T0, -38);
    a.bne(A0, T0, "f9");

    // 10: sched_yield succeeds with nothing else to run.
    sys(&mut a, SYS_SCHED_YIELD);
    a.bnez(A0, "f10");

    // 11: CLOCK_REALTIME minus CLOCK_MONOTONIC equals the configured epoch,
    // and monotonic never decreases.
    a.li(A0, 1);
    a.la(A1, "ts0");
    a.li(A7, 113);
    a.inst(ecall());
    a.bnez(A0, "f11");
    a.li(A0, 0);
    a.la(A1, "ts1");
    a.li(A7, 113);
    a.inst(ecall());
    a.bnez(A0, "f11");
    a.li(A0, 1);
    a.la(A1, "ts2");
    a.li(A7, 113);
    a.inst(ecall());
    a.bnez(A0, "f11");
    a.la(T0, "ts0");
    a.inst(ld(T1, T0, 0)); // mono0.sec
    a.inst(ld(T2, T0, 32)); // mono1.sec (ts2)
    a.bltu(T2, T1, "f11");
    a.inst(ld(T3, T0, 16)); // real.sec
    a.inst(sub(T3, T3, T1));
    a.li64(T4, 1_600_000_000);
    a.bltu(T3, T4, "f11");

    exit_group(&mut a, 0);
    for (i, l) in ["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9", "f10", "f11"].iter().enumerate() {
        a.label(l);
        fail(&mut a, i as i64 + 1);
    }
    a.align(16);
    a.label("ts0");
    a.zero(16);
    a.label("ts1");
    a.zero(16);
    a.label("ts2");
    a.zero(16);
    a.label("buf");
    a.zero(512);
    a.label("dmsg");
    a.data(b"D");
    finish_exec(a, TEXT_BASE)
}

/// futex WAIT with a relative timeout on an address nobody wakes; must
/// return ETIMEDOUT rather than hang.
pub fn futex_timeout() -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.la(S0, "word");
    a.inst(sw(ZERO, S0, 0));
    a.inst(mv(A0, S0));
    a.li(A1, 0); // FUTEX_WAIT
    a.li(A2, 0); // matches the stored value, so the wait really blocks
    a.la(A3, "timeout");
    sys(&mut a, SYS_FUTEX);
    a.li(T0, -110); // ETIMEDOUT
    a.bne(A0, T0, "fail");
    exit_group(&mut a, 0);
    a.label("fail");
    exit_group(&mut a, 1);
    a.align(8);
    a.label("timeout");
    a.data_u64(0); // 0 s
    a.data_u64(1_000_000); // 1 ms
    a.label("word");
    a.data_u32(0);
    finish_exec(a, TEXT_BASE)
}

/// brk growth and data retention checks.
pub fn brk_probe() -> Vec<u8> {
    let mut a = Asm::new(TEXT_BASE);
    a.label("_start");
    a.li(A0, 0);
    a.li(A7, 214); // brk(0): query
    a.inst(ecall());
    a.inst(mv(S0, A0));
    a.li64(T0, 8192);
    a.inst(add(A0, S0, T0));
    a.li(A7, 214); // grow
    a.inst(ecall());
    a.inst(add(T1, S0, T0));
    a.bne(A0, T1, "fail");
    // Store/load across the new break region.
    a.li64(T2, 0xfeed_beef_dead_cafe);
    a.inst(sd(T2, S0, 16));
    a.inst(ld(T3, S0, 16));
    a.bne(T2, T3, "fail");
    exit_group(&mut a, 0);
    a.label("fail");
    exit_group(&mut a, 1);
    finish_exec(a, TEXT_BASE)
}
