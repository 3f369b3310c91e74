//! Dual-page-table coherence: after randomized VM operations, an independent
//! Sv39 walker over target physical memory must agree with the software
//! table on every mapped page.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use fase::machine::MachineConfig;
use fase::runtime::link::HtpClient;
use fase::runtime::vm::{Access, AddressSpace, FaultFix, Perms, PhysAllocator, SegKind, VmCtx, PAGE};
use fase::target::walk_oracle;
use fase::transport::{Channel, ChannelConfig, InProcessChannel};

struct Harness {
    client: HtpClient<InProcessChannel>,
    alloc: PhysAllocator,
    space: AddressSpace,
}

impl Harness {
    fn new() -> Self {
        let mcfg = MachineConfig { cores: 1, mem_size: 1 << 26, ..Default::default() };
        let mut client = HtpClient::new(InProcessChannel::new(mcfg, ChannelConfig::default()), 1);
        let mut alloc = PhysAllocator::new(0x8000_0000, 1 << 26);
        let space = {
            let mut ctx = VmCtx { client: &mut client, alloc: &mut alloc, cpu: 0, flush_cores: &[] };
            AddressSpace::new(1, &mut ctx).unwrap()
        };
        Harness { client, alloc, space }
    }

    fn with_ctx<R>(&mut self, f: impl FnOnce(&mut AddressSpace, &mut VmCtx<InProcessChannel>) -> R) -> R {
        let mut ctx = VmCtx { client: &mut self.client, alloc: &mut self.alloc, cpu: 0, flush_cores: &[] };
        f(&mut self.space, &mut ctx)
    }

    /// Expected PTE permission bits for a software entry.
    fn expected_flags(perms: Perms, cow: bool) -> u64 {
        let writable = perms.w && !cow;
        let mut f = 0x01 | 0x10 | 0x40; // V|U|A
        if perms.r {
            f |= 0x02;
        }
        if writable {
            f |= 0x04 | 0x80; // W|D
        }
        if perms.x {
            f |= 0x08;
        }
        f
    }

    /// Walk target memory for every software-mapped page and require exact
    /// agreement in both directions over all segment ranges.
    fn check_oracle(&mut self) {
        let satp = self.space.satp();
        let machine = self.client.tp.chan.machine().unwrap();
        let mem = &machine.target.mem;
        let mut mapped = 0;
        for (&vpn, entry) in &self.space.pages {
            let got = walk_oracle(mem, satp, vpn << 12);
            let want = Some((entry.ppn, Self::expected_flags(entry.perms, entry.cow)));
            assert_eq!(got, want, "walker mismatch at vpn {vpn:#x}");
            mapped += 1;
        }
        // The reverse direction: inside every segment, the walker may map a
        // page only if the software table does.
        for seg in self.space.segments().to_vec() {
            let mut v = seg.base;
            while v < seg.end() {
                let walked = walk_oracle(mem, satp, v);
                let soft = self.space.pages.get(&(v >> 12));
                match (walked, soft) {
                    (Some(_), None) => panic!("hardware maps unmapped vpn {:#x}", v >> 12),
                    (None, Some(_)) => panic!("software page not materialized at {:#x}", v >> 12),
                    _ => {}
                }
                v += PAGE;
            }
        }
        assert!(mapped > 0 || self.space.pages.is_empty());
    }
}

fn rand_perms(rng: &mut ChaCha8Rng) -> Perms {
    // Always readable; write/exec vary.
    Perms { r: true, w: rng.gen_bool(0.7), x: rng.gen_bool(0.2) }
}

#[test]
fn randomized_vm_ops_agree_with_walker_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfa5e);
    let mut h = Harness::new();
    h.with_ctx(|space, _| space.set_brk_base(0x20000));

    let mut live_segs: Vec<(u64, u64, Perms)> = Vec::new();
    for step in 0..200 {
        match rng.gen_range(0..100u32) {
            // mmap
            0..=34 => {
                let pages = rng.gen_range(1..=24u64);
                let perms = rand_perms(&mut rng);
                let base = h.with_ctx(|space, ctx| {
                    space.mmap(ctx, 0, pages * PAGE, perms, false, SegKind::Anon, None).unwrap()
                });
                assert!(base > 0, "mmap failed at step {step}");
                live_segs.push((base as u64, pages * PAGE, perms));
            }
            // munmap part of a live segment
            35..=49 => {
                if let Some(idx) = pick(&mut rng, live_segs.len()) {
                    let (base, len, perms) = live_segs.remove(idx);
                    let cut_pages = rng.gen_range(1..=len / PAGE);
                    let cut = cut_pages * PAGE;
                    let r = h.with_ctx(|space, ctx| space.munmap(ctx, base, cut).unwrap());
                    assert_eq!(r, 0);
                    if cut < len {
                        live_segs.push((base + cut, len - cut, perms));
                    }
                }
            }
            // mprotect a live segment
            50..=64 => {
                if let Some(idx) = pick(&mut rng, live_segs.len()) {
                    let (base, len, _) = live_segs[idx];
                    let perms = rand_perms(&mut rng);
                    let r = h.with_ctx(|space, ctx| space.mprotect(ctx, base, len, perms).unwrap());
                    assert_eq!(r, 0);
                    live_segs[idx].2 = perms;
                }
            }
            // brk moves
            65..=74 => {
                let target = 0x20000 + rng.gen_range(0..32u64) * PAGE;
                h.with_ctx(|space, ctx| space.brk(ctx, target).unwrap());
            }
            // fault a page the hardware would fault on
            _ => {
                if let Some(idx) = pick(&mut rng, live_segs.len()) {
                    let (base, len, perms) = live_segs[idx];
                    let vaddr = base + rng.gen_range(0..len / PAGE) * PAGE + rng.gen_range(0..PAGE);
                    let vpn = vaddr >> 12;
                    let access = if perms.w && rng.gen_bool(0.5) { Access::Write } else { Access::Read };
                    let entry = h.space().pages.get(&vpn).copied();
                    let should_fault = match entry {
                        None => true,
                        Some(e) => access == Access::Write && e.cow && e.perms.w,
                    };
                    if should_fault {
                        let fix = h.with_ctx(|space, ctx| space.handle_fault(ctx, vaddr, access).unwrap());
                        assert!(matches!(fix, FaultFix::Resumed { .. }), "fault not serviced at step {step}");
                    }
                }
            }
        }
        if step % 20 == 19 {
            h.check_oracle();
        }
    }
    h.check_oracle();
}

impl Harness {
    fn space(&self) -> &AddressSpace {
        &self.space
    }
}

fn pick(rng: &mut ChaCha8Rng, len: usize) -> Option<usize> {
    if len == 0 {
        None
    } else {
        Some(rng.gen_range(0..len))
    }
}

#[test]
fn cow_break_is_one_page_copy() {
    let mut h = Harness::new();
    // A file-backed private map faulted for read shares the buffer page COW;
    // the first write must cost exactly one PageCopy frame.
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("backing.bin");
    std::fs::write(&f, vec![7u8; 8192]).unwrap();
    let mut registry = fase::runtime::vm::MapRegistry::default();
    let fm = registry.resolve(&f).unwrap();
    h.with_ctx(|_, ctx| {
        AddressSpace::ensure_buffer_page(ctx, &fm, 0).unwrap();
    });
    let backing = fase::runtime::vm::FileBacking { map: fm, offset: 0, file_end: 8192 };
    let base = h.with_ctx(|space, ctx| {
        space.mmap(ctx, 0, PAGE, Perms::RW, false, SegKind::FilePrivate, Some(backing)).unwrap()
    }) as u64;
    h.with_ctx(|space, ctx| {
        assert!(matches!(space.handle_fault(ctx, base, Access::Read).unwrap(), FaultFix::Resumed { .. }));
    });
    assert!(h.space.pages[&(base >> 12)].cow);

    let before = h.client.tp.ledger.opcode_frames_sent(fase::wire::opcode::PAGE_COPY);
    h.with_ctx(|space, ctx| {
        assert!(matches!(space.handle_fault(ctx, base, Access::Write).unwrap(), FaultFix::Resumed { .. }));
    });
    let after = h.client.tp.ledger.opcode_frames_sent(fase::wire::opcode::PAGE_COPY);
    assert_eq!(after - before, 1, "exactly one PageCopy per COW break");
    assert!(!h.space.pages[&(base >> 12)].cow);
    h.check_oracle();
}

#[test]
fn lazy_zero_fault_preloads_up_to_sixteen_more() {
    let mut h = Harness::new();
    let base = h.with_ctx(|space, ctx| {
        space.mmap(ctx, 0, 64 * PAGE, Perms::RW, false, SegKind::Anon, None).unwrap()
    }) as u64;
    let fix = h.with_ctx(|space, ctx| space.handle_fault(ctx, base, Access::Write).unwrap());
    assert_eq!(fix, FaultFix::Resumed { materialized: 17 });
    assert_eq!(h.space.pages.len(), 17);
    // Next fault lands past the preloaded window.
    let fix = h.with_ctx(|space, ctx| space.handle_fault(ctx, base + 17 * PAGE, Access::Write).unwrap());
    assert_eq!(fix, FaultFix::Resumed { materialized: 17 });
    h.check_oracle();
}
