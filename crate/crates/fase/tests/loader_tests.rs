//! Loader behavior: startup stack layout, bss boundary handling, load
//! idempotence, and PT_LOAD content integrity after faulting.

use fase::loader::{self, LoaderConfig};
use fase::machine::MachineConfig;
use fase::runtime::link::HtpClient;
use fase::runtime::vm::{Access, AddressSpace, MapRegistry, PhysAllocator, VmCtx, PAGE};
use fase::transport::{Channel, ChannelConfig, InProcessChannel};
use rvasm::enc;
use rvasm::workloads;
use rvasm::{Asm, ElfBuilder, Section, ET_EXEC, PF_R, PF_W, PF_X};

struct Env {
    client: HtpClient<InProcessChannel>,
    alloc: PhysAllocator,
    space: AddressSpace,
    registry: MapRegistry,
}

fn env() -> Env {
    let mcfg = MachineConfig { cores: 1, mem_size: 1 << 26, ..Default::default() };
    let mut client = HtpClient::new(InProcessChannel::new(mcfg, ChannelConfig::default()), 1);
    let mut alloc = PhysAllocator::new(0x8000_0000, 1 << 26);
    let space = {
        let mut ctx = VmCtx { client: &mut client, alloc: &mut alloc, cpu: 0, flush_cores: &[] };
        AddressSpace::new(1, &mut ctx).unwrap()
    };
    Env { client, alloc, space, registry: MapRegistry::default() }
}

fn load(env: &mut Env, path: &std::path::Path, argv: &[String], envp: &[String]) -> loader::LoadedImage {
    let cfg = LoaderConfig { libdir: None, preload: true, argv, envp, at_random: [7u8; 16] };
    let mut ctx = VmCtx { client: &mut env.client, alloc: &mut env.alloc, cpu: 0, flush_cores: &[] };
    loader::load_elf(&mut env.space, &mut ctx, &mut env.registry, path, &cfg).unwrap()
}

fn read(env: &mut Env, vaddr: u64, len: u64) -> Vec<u8> {
    let mut ctx = VmCtx { client: &mut env.client, alloc: &mut env.alloc, cpu: 0, flush_cores: &[] };
    env.space.read_bytes(&mut ctx, vaddr, len).unwrap()
}

fn read_u64(env: &mut Env, vaddr: u64) -> u64 {
    u64::from_le_bytes(read(env, vaddr, 8).try_into().unwrap())
}

#[test]
fn startup_stack_layout_follows_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let elf = dir.path().join("hello.elf");
    std::fs::write(&elf, workloads::hello()).unwrap();
    let argv = vec!["hello".to_string(), "one".to_string()];
    let envp = vec!["KEY=value".to_string()];
    let mut e = env();
    let image = load(&mut e, &elf, &argv, &envp);

    let sp = image.initial_sp;
    assert_eq!(sp % 16, 0, "sp must be 16-byte aligned");
    assert_eq!(read_u64(&mut e, sp), 2, "argc at [sp]");
    let argv0 = read_u64(&mut e, sp + 8);
    let argv1 = read_u64(&mut e, sp + 16);
    assert_eq!(read_u64(&mut e, sp + 24), 0, "argv NULL terminator");
    assert_eq!(read(&mut e, argv0, 6), b"hello\0");
    assert_eq!(read(&mut e, argv1, 4), b"one\0");
    let envp0 = read_u64(&mut e, sp + 32);
    assert_eq!(read_u64(&mut e, sp + 40), 0, "envp NULL terminator");
    assert_eq!(read(&mut e, envp0, 10), b"KEY=value\0");

    // Auxv starts after the envp NULL: tag/value pairs until AT_NULL.
    let mut aux = std::collections::BTreeMap::new();
    let mut at = sp + 48;
    loop {
        let tag = read_u64(&mut e, at);
        let value = read_u64(&mut e, at + 8);
        if tag == 0 {
            break;
        }
        aux.insert(tag, value);
        at += 16;
    }
    assert_eq!(aux[&6], 4096, "AT_PAGESZ");
    assert_eq!(aux[&3], image.phdr_vaddr, "AT_PHDR");
    assert_eq!(aux[&3], 0x10000 + 64, "phdrs live right after the ELF header in the first load");
    assert_eq!(aux[&4], 56, "AT_PHENT");
    assert_eq!(aux[&9], image.entry, "AT_ENTRY");
    assert_eq!(aux[&5], image.phnum);
    assert_eq!(aux[&17], 100, "AT_CLKTCK");
    let at_random = aux[&25];
    assert_eq!(read(&mut e, at_random, 16), vec![7u8; 16]);
}

#[test]
fn empty_envp_still_terminates() {
    let dir = tempfile::tempdir().unwrap();
    let elf = dir.path().join("hello.elf");
    std::fs::write(&elf, workloads::hello()).unwrap();
    let mut e = env();
    let image = load(&mut e, &elf, &[], &[]);
    let sp = image.initial_sp;
    assert_eq!(read_u64(&mut e, sp), 0, "argc 0");
    assert_eq!(read_u64(&mut e, sp + 8), 0, "argv NULL");
    assert_eq!(read_u64(&mut e, sp + 16), 0, "envp NULL");
}

/// A段 segment whose file size ends 100 bytes into its last page: the file
/// part must load, the rest of the page reads zero.
#[test]
fn bss_boundary_page_splits_file_and_zero() {
    let mut a = Asm::new(0x11000);
    a.label("_start");
    a.inst(enc::ecall());
    // Fill to a known pattern ending mid-page.
    while a.here() < 0x11000 + PAGE + 100 {
        a.data(&[0xcd]);
    }
    let p = a.finish();
    let image_len = p.image.len() as u64;
    let bytes = ElfBuilder::new(ET_EXEC)
        .entry(0x11000)
        .section(Section { vaddr: p.base, bytes: p.image, bss: 3 * PAGE, flags: PF_R | PF_W | PF_X })
        .build();
    let dir = tempfile::tempdir().unwrap();
    let elf = dir.path().join("bss.elf");
    std::fs::write(&elf, &bytes).unwrap();

    let mut e = env();
    load(&mut e, &elf, &[], &[]);
    // Fault in the boundary page by writing... a read suffices to materialize.
    let boundary = 0x11000 + PAGE;
    {
        let mut ctx = VmCtx { client: &mut e.client, alloc: &mut e.alloc, cpu: 0, flush_cores: &[] };
        e.space.handle_fault(&mut ctx, boundary, Access::Read).unwrap();
    }
    let got = read(&mut e, boundary + 96, 8);
    assert_eq!(&got[..4], &[0xcd; 4], "file bytes up to the boundary");
    assert_eq!(&got[4..], &[0; 4], "zeros past p_filesz");
    let tail = read(&mut e, boundary + PAGE, 16);
    assert!(tail.iter().all(|&b| b == 0), "pure-bss page reads zero");
    let _ = image_len;
}

#[test]
fn loading_twice_is_idempotent_in_effect() {
    let dir = tempfile::tempdir().unwrap();
    let elf = dir.path().join("counter.elf");
    std::fs::write(&elf, workloads::futex_counter(2, 10)).unwrap();
    let argv = vec!["counter".to_string()];

    let snapshot = |e: &mut Env| {
        let segs: Vec<(u64, u64, bool, bool, bool)> = e
            .space
            .segments()
            .iter()
            .map(|s| (s.base, s.len, s.perms.r, s.perms.w, s.perms.x))
            .collect();
        let mem = {
            let m = e.client.tp.chan.machine().unwrap();
            let mut buf = vec![0u8; (1 << 26) as usize];
            m.target.mem.read_bytes(0x8000_0000, &mut buf).unwrap();
            buf
        };
        (segs, mem)
    };

    let mut e1 = env();
    load(&mut e1, &elf, &argv, &[]);
    let (segs1, mem1) = snapshot(&mut e1);
    let mut e2 = env();
    load(&mut e2, &elf, &argv, &[]);
    let (segs2, mem2) = snapshot(&mut e2);
    assert_eq!(segs1, segs2, "segment tables must match");
    assert_eq!(mem1, mem2, "target memory images must match");
}

#[test]
fn every_filesz_byte_reachable_and_correct_after_faults() {
    let dir = tempfile::tempdir().unwrap();
    let elf_path = dir.path().join("hello.elf");
    let elf_bytes = workloads::hello();
    std::fs::write(&elf_path, &elf_bytes).unwrap();
    let mut e = env();
    load(&mut e, &elf_path, &[], &[]);

    // Fault in every page of every file-backed segment, then compare the
    // whole mapped file window against the on-disk bytes.
    let segs: Vec<(u64, u64)> = e
        .space
        .segments()
        .iter()
        .filter(|s| s.file.is_some())
        .map(|s| (s.base, s.len))
        .collect();
    for (base, len) in &segs {
        let mut v = *base;
        while v < base + len {
            let mut ctx = VmCtx { client: &mut e.client, alloc: &mut e.alloc, cpu: 0, flush_cores: &[] };
            let _ = e.space.handle_fault(&mut ctx, v, Access::Read);
            v += PAGE;
        }
    }
    // The first load maps the file from offset 0 at vaddr 0x10000.
    let window = read(&mut e, 0x10000, elf_bytes.len() as u64);
    assert_eq!(window, elf_bytes, "file window must match the ELF bytes");
}

#[test]
fn malformed_elves_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = env();
    let cases: Vec<(&str, Vec<u8>)> = vec![
        ("truncated", vec![0x7f, b'E', b'L', b'F']),
        ("bad magic", vec![0u8; 128]),
        ("wrong machine", {
            let mut b = workloads::hello();
            b[18] = 0x3e; // EM_X86_64
            b
        }),
        ("wrong class", {
            let mut b = workloads::hello();
            b[4] = 1;
            b
        }),
    ];
    for (name, bytes) in cases {
        let p = dir.path().join(name);
        std::fs::write(&p, &bytes).unwrap();
        let cfg = LoaderConfig { libdir: None, preload: false, argv: &[], envp: &[], at_random: [0; 16] };
        let mut ctx = VmCtx { client: &mut e.client, alloc: &mut e.alloc, cpu: 0, flush_cores: &[] };
        let r = loader::load_elf(&mut e.space, &mut ctx, &mut e.registry, &p, &cfg);
        assert!(r.is_err(), "{name} must be rejected");
    }
}

#[test]
fn interpreter_loads_at_fixed_base_and_start_pc_is_its_entry() {
    let dir = tempfile::tempdir().unwrap();
    let interp_path = dir.path().join("mini-ld.so");
    std::fs::write(&interp_path, workloads::mini_interp()).unwrap();
    let elf = dir.path().join("dyn.elf");
    std::fs::write(&elf, workloads::hello_dynamic(interp_path.to_str().unwrap())).unwrap();
    let mut e = env();
    let image = load(&mut e, &elf, &[], &[]);
    assert_eq!(image.interp_base, Some(loader::INTERP_BASE));
    // mini_interp links its entry at 0x1000 (ET_DYN, biased at load).
    assert_eq!(image.start_pc, loader::INTERP_BASE + 0x1000);
    assert_eq!(image.entry, 0x11000, "AT_ENTRY stays the main binary's entry");
}

#[test]
fn missing_interpreter_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let elf = dir.path().join("dyn.elf");
    std::fs::write(&elf, workloads::hello_dynamic("/no/such/ld.so")).unwrap();
    let mut e = env();
    let cfg = LoaderConfig { libdir: None, preload: false, argv: &[], envp: &[], at_random: [0; 16] };
    let mut ctx = VmCtx { client: &mut e.client, alloc: &mut e.alloc, cpu: 0, flush_cores: &[] };
    let r = loader::load_elf(&mut e.space, &mut ctx, &mut e.registry, &elf, &cfg);
    assert!(matches!(r, Err(loader::LoadError::MissingInterp(_))));
}

#[test]
fn preloaded_faults_cost_small_frames() {
    // A read fault on a fully-backed preloaded page shares the buffer page
    // (zero page-sized transfers); the later write fault costs exactly one
    // PageCopy round trip (20 wire bytes, under 1% of a PageWrite frame).
    let dir = tempfile::tempdir().unwrap();
    let elf = dir.path().join("hello.elf");
    std::fs::write(&elf, workloads::hello()).unwrap();
    let mut e = env();
    load(&mut e, &elf, &[], &[]);
    // 0x10000 is the header page: file offset 0, fully inside p_filesz.
    let before_w = e.client.tp.ledger.opcode_frames_sent(fase::wire::opcode::PAGE_WRITE);
    let before_c = e.client.tp.ledger.opcode_frames_sent(fase::wire::opcode::PAGE_COPY);
    {
        let mut ctx = VmCtx { client: &mut e.client, alloc: &mut e.alloc, cpu: 0, flush_cores: &[] };
        e.space.handle_fault(&mut ctx, 0x10000, Access::Read).unwrap();
    }
    assert_eq!(e.client.tp.ledger.opcode_frames_sent(fase::wire::opcode::PAGE_WRITE), before_w);
    assert_eq!(e.client.tp.ledger.opcode_frames_sent(fase::wire::opcode::PAGE_COPY), before_c);
    assert!(e.space.pages[&0x10].cow, "writable preloaded page is shared copy-on-write");

    let sent_before = e.client.tp.ledger.total_bytes();
    {
        let mut ctx = VmCtx { client: &mut e.client, alloc: &mut e.alloc, cpu: 0, flush_cores: &[] };
        e.space.handle_fault(&mut ctx, 0x10000, Access::Write).unwrap();
    }
    assert_eq!(e.client.tp.ledger.opcode_frames_sent(fase::wire::opcode::PAGE_COPY), before_c + 1);
    let fault_bytes = e.client.tp.ledger.opcode_bytes(fase::wire::opcode::PAGE_COPY);
    assert_eq!(fault_bytes, 20, "PageCopy round trip is 18+2 bytes");
    assert!((fault_bytes as f64) / 4110.0 < 0.01, "preloaded fault under 1% of a PageWrite");
    assert!(e.client.tp.ledger.total_bytes() > sent_before);
}
