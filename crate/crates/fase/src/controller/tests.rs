use super::*;
use crate::target::TrapInfo;

const RAM: u64 = 0x8000_0000;

fn setup(cores: usize) -> (Controller, Target) {
    (Controller::new(cores, true), Target::new(cores, RAM, 1 << 22))
}

fn svc(ctrl: &mut Controller, t: &mut Target, req: HtpRequest) -> HtpResponse {
    ctrl.service(&req, t).unwrap().expect("immediate response")
}

/// Run the core at `pc` until it traps, reporting the trap to the controller.
fn run_to_trap(ctrl: &mut Controller, t: &mut Target, cpu: usize, max: usize) -> Option<HtpResponse> {
    for _ in 0..max {
        match t.step_core(cpu).unwrap() {
            StepOutcome::Trapped(_) => {
                let (_, deferred) = ctrl.on_trap(cpu, t).unwrap();
                return deferred;
            }
            StepOutcome::Stalled => panic!("stalled before trapping"),
            StepOutcome::Retired { .. } => {}
        }
    }
    panic!("no trap within budget");
}

fn load(t: &mut Target, at: u64, insts: &[u32]) {
    for (i, w) in insts.iter().enumerate() {
        t.mem.write_u32(at + 4 * i as u64, *w).unwrap();
    }
}

#[test]
fn utick_is_zero_at_reset() {
    let (mut ctrl, mut t) = setup(2);
    let r = svc(&mut ctrl, &mut t, HtpRequest::UTick { cpu: 1 });
    assert_eq!(r.payload, RespPayload::Word(0));
    let r = svc(&mut ctrl, &mut t, HtpRequest::Tick);
    assert_eq!(r.payload, RespPayload::Word(0));
}

#[test]
fn event_queue_is_fifo() {
    let (mut ctrl, mut t) = setup(4);
    // Park programs on cores 2 and 0; both ecall immediately.
    load(&mut t, RAM, &[enc::ecall()]);
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 2, pc: RAM });
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    // Core 2 first.
    run_to_trap(&mut ctrl, &mut t, 2, 4);
    run_to_trap(&mut ctrl, &mut t, 0, 4);
    let r = svc(&mut ctrl, &mut t, HtpRequest::Next);
    assert!(matches!(r.payload, RespPayload::Event { cpu: 2, cause: 8, .. }), "{r:?}");
    let r = svc(&mut ctrl, &mut t, HtpRequest::Next);
    assert!(matches!(r.payload, RespPayload::Event { cpu: 0, .. }), "{r:?}");
}

#[test]
fn parked_next_fires_on_trap() {
    let (mut ctrl, mut t) = setup(1);
    load(&mut t, RAM, &[enc::addi(10, 0, 3), enc::ecall()]);
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    // Next with an empty queue parks.
    assert!(ctrl.service(&HtpRequest::Next, &mut t).unwrap().is_none());
    assert!(ctrl.parked_next());
    // A second Next while parked is a protocol violation.
    let r = svc(&mut ctrl, &mut t, HtpRequest::Next);
    assert_eq!(r.status, Status::BadState);
    let deferred = run_to_trap(&mut ctrl, &mut t, 0, 8).expect("deferred event");
    assert_eq!(deferred.echo, wire::opcode::NEXT);
    assert!(matches!(deferred.payload, RespPayload::Event { cpu: 0, cause: 8, .. }));
    assert!(!ctrl.parked_next());
}

#[test]
fn redirect_requires_interrupted_core() {
    let (mut ctrl, mut t) = setup(1);
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    let r = svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    assert_eq!(r.status, Status::BadState);
}

#[test]
fn mem_word_round_trips_and_preserves_scratch() {
    let (mut ctrl, mut t) = setup(1);
    t.cores[0].set_reg(5, 0x5555);
    t.cores[0].set_reg(6, 0x6666);
    let w = svc(&mut ctrl, &mut t, HtpRequest::MemWrite { cpu: 0, paddr: RAM + 0x800, data: 0xabcd_ef01 });
    assert_eq!(w.status, Status::Ok);
    let r = svc(&mut ctrl, &mut t, HtpRequest::MemRead { cpu: 0, paddr: RAM + 0x800 });
    assert_eq!(r.payload, RespPayload::Word(0xabcd_ef01));
    assert_eq!(t.cores[0].reg(5), 0x5555);
    assert_eq!(t.cores[0].reg(6), 0x6666);
    // Ticks moved: one injected instruction per word op.
    assert_eq!(t.tick, 2);
    assert_eq!(t.cores[0].utick, 0);
}

#[test]
fn mem_word_observes_executed_stores() {
    let (mut ctrl, mut t) = setup(1);
    let addr = RAM + 0x2000;
    load(&mut t, RAM, &[enc::sd(11, 10, 0), enc::ecall()]);
    t.cores[0].set_reg(10, addr);
    t.cores[0].set_reg(11, 777);
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    run_to_trap(&mut ctrl, &mut t, 0, 4);
    let r = svc(&mut ctrl, &mut t, HtpRequest::MemRead { cpu: 0, paddr: addr });
    assert_eq!(r.payload, RespPayload::Word(777));
}

#[test]
fn page_ops_set_copy_read_write() {
    let (mut ctrl, mut t) = setup(1);
    let ppn_a = (RAM >> 12) + 16;
    let ppn_b = ppn_a + 1;
    let r = svc(&mut ctrl, &mut t, HtpRequest::PageSet { cpu: 0, ppn: ppn_a, value: 0 });
    assert_eq!(r.status, Status::Ok);
    let r = svc(&mut ctrl, &mut t, HtpRequest::PageRead { cpu: 0, ppn: ppn_a });
    match &r.payload {
        RespPayload::Page(p) => assert!(p.iter().all(|&b| b == 0)),
        other => panic!("unexpected {other:?}"),
    }

    let mut page = Box::new([0u8; 4096]);
    for (i, b) in page.iter_mut().enumerate() {
        *b = (i * 7 + 3) as u8;
    }
    let r = svc(&mut ctrl, &mut t, HtpRequest::PageWrite { cpu: 0, ppn: ppn_a, data: page.clone() });
    assert_eq!(r.status, Status::Ok);
    let r = svc(&mut ctrl, &mut t, HtpRequest::PageCopy { cpu: 0, src_ppn: ppn_a, dst_ppn: ppn_b });
    assert_eq!(r.status, Status::Ok);
    let r = svc(&mut ctrl, &mut t, HtpRequest::PageRead { cpu: 0, ppn: ppn_b });
    match r.payload {
        RespPayload::Page(p) => assert_eq!(p, page),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn page_ops_reject_bad_ppn_and_running_core() {
    let (mut ctrl, mut t) = setup(1);
    let r = svc(&mut ctrl, &mut t, HtpRequest::PageSet { cpu: 0, ppn: 1, value: 0 });
    assert_eq!(r.status, Status::BadAddress);
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    let r = svc(&mut ctrl, &mut t, HtpRequest::PageSet { cpu: 0, ppn: RAM >> 12, value: 0 });
    assert_eq!(r.status, Status::BadState);
}

#[test]
fn hfutex_mask_set_clear_and_capacity() {
    let (mut ctrl, mut t) = setup(2);
    for i in 0..MASK_SIZE as u64 {
        let r = svc(&mut ctrl, &mut t, HtpRequest::HFutex { cpu: 1, action: HFutexAction::Set, vaddr: 0x1000 + i * 4 });
        assert_eq!(r.status, Status::Ok);
    }
    let r = svc(&mut ctrl, &mut t, HtpRequest::HFutex { cpu: 1, action: HFutexAction::Set, vaddr: 0x9000 });
    assert_eq!(r.status, Status::MaskFull);
    let r = svc(&mut ctrl, &mut t, HtpRequest::HFutex { cpu: 1, action: HFutexAction::Clear, vaddr: 0x1000 });
    assert_eq!(r.status, Status::Ok);
    assert_eq!(ctrl.mask(1).len(), MASK_SIZE - 1);
    svc(&mut ctrl, &mut t, HtpRequest::HFutex { cpu: 1, action: HFutexAction::ClearAll, vaddr: 0 });
    assert!(ctrl.mask(1).is_empty());
}

/// futex(2) arguments: a0 uaddr, a1 op, a2 val; a7 syscall number 98.
fn futex_wake_program(uaddr_reg_preset: bool) -> Vec<u32> {
    let mut p = Vec::new();
    if !uaddr_reg_preset {
        p.push(enc::addi(10, 0, 0));
    }
    p.extend([
        enc::addi(11, 0, 1),  // FUTEX_WAKE
        enc::addi(12, 0, 1),  // nwake
        enc::addi(17, 0, 98), // futex
        enc::ecall(),
        enc::addi(20, 20, 1), // runs only after an absorbed wake
        enc::ecall(),         // exit-ish marker trap
    ]);
    p
}

#[test]
fn masked_wake_is_absorbed_locally() {
    let (mut ctrl, mut t) = setup(1);
    let uaddr = 0x7000u64;
    load(&mut t, RAM, &futex_wake_program(true));
    t.cores[0].set_reg(10, uaddr);
    t.cores[0].set_reg(20, 0);
    svc(&mut ctrl, &mut t, HtpRequest::HFutex { cpu: 0, action: HFutexAction::Set, vaddr: uaddr });
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    // First trap is the futex ecall: absorbed, core resumes at epc+4.
    let mut absorbed = false;
    for _ in 0..32 {
        match t.step_core(0).unwrap() {
            StepOutcome::Trapped(TrapInfo { cause: TrapCause::EcallFromU, .. }) => {
                let (disp, _) = ctrl.on_trap(0, &mut t).unwrap();
                if disp == TrapDisposition::Absorbed {
                    absorbed = true;
                } else {
                    break;
                }
            }
            StepOutcome::Trapped(_) | StepOutcome::Stalled => break,
            StepOutcome::Retired { .. } => {}
        }
    }
    assert!(absorbed);
    assert_eq!(ctrl.stats.absorbed_wakes, 1);
    assert_eq!(t.cores[0].reg(10), 0, "absorbed wake returns success code 0");
    assert_eq!(t.cores[0].reg(20), 1, "post-ecall instruction must have run");
    assert!(!ctrl.interrupted(0) || t.cores[0].trap_latch.is_some());
}

#[test]
fn wait_on_masked_addr_is_not_absorbed() {
    let (mut ctrl, mut t) = setup(1);
    let uaddr = 0x7000u64;
    // Same as the wake program but op = FUTEX_WAIT (0).
    load(
        &mut t,
        RAM,
        &[enc::addi(11, 0, 0), enc::addi(12, 0, 1), enc::addi(17, 0, 98), enc::ecall()],
    );
    t.cores[0].set_reg(10, uaddr);
    svc(&mut ctrl, &mut t, HtpRequest::HFutex { cpu: 0, action: HFutexAction::Set, vaddr: uaddr });
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    let deferred = run_to_trap(&mut ctrl, &mut t, 0, 16);
    assert!(deferred.is_none());
    assert!(ctrl.interrupted(0), "WAIT must reach the host");
    assert_eq!(ctrl.stats.absorbed_wakes, 0);
}

#[test]
fn direct_mode_gating_and_poll_shapes() {
    let (mut ctrl_off, mut t_off) = (Controller::new(1, false), Target::new(1, RAM, 1 << 16));
    let r = ctrl_off.service(&HtpRequest::DirectPoll { cpu: 0 }, &mut t_off).unwrap().unwrap();
    assert_eq!(r.status, Status::Disabled);

    let (mut ctrl, mut t) = setup(1);
    // Parked at boot: no latch.
    let r = svc(&mut ctrl, &mut t, HtpRequest::DirectPoll { cpu: 0 });
    assert!(matches!(r.payload, RespPayload::Event { cause: 0xff, .. }), "{r:?}");
    // Running.
    load(&mut t, RAM, &[enc::addi(1, 1, 1); 4]);
    svc(&mut ctrl, &mut t, HtpRequest::Redirect { cpu: 0, pc: RAM });
    let r = svc(&mut ctrl, &mut t, HtpRequest::DirectPoll { cpu: 0 });
    assert!(matches!(r.payload, RespPayload::Event { cause: 0xfe, .. }), "{r:?}");
}

#[test]
fn direct_inject_executes_inline() {
    let (mut ctrl, mut t) = setup(1);
    let addr = RAM + 0x4000;
    svc(&mut ctrl, &mut t, HtpRequest::DirectRegAccess { cpu: 0, idx: 5, wen: true, data: addr });
    svc(&mut ctrl, &mut t, HtpRequest::DirectRegAccess { cpu: 0, idx: 6, wen: true, data: 0x42 });
    let r = svc(&mut ctrl, &mut t, HtpRequest::DirectInject { cpu: 0, inst: enc::sd(6, 5, 0) });
    assert_eq!(r.status, Status::Ok);
    assert_eq!(t.mem.read_u64(addr).unwrap(), 0x42);
    // Branches are rejected with a controller-visible error.
    let r = svc(&mut ctrl, &mut t, HtpRequest::DirectInject { cpu: 0, inst: enc::jal(0, 8) });
    assert_eq!(r.status, Status::Rejected);
    let r = svc(&mut ctrl, &mut t, HtpRequest::DirectRegAccess { cpu: 0, idx: 6, wen: false, data: 0 });
    assert_eq!(r.payload, RespPayload::Word(0x42));
}

#[test]
fn service_is_total_over_error_paths() {
    let (mut ctrl, mut t) = setup(1);
    // Every one of these must produce exactly one response.
    let reqs = vec![
        HtpRequest::RegRead { cpu: 0, idx: 3 },  // ok (boot-interrupted)
        HtpRequest::MemRead { cpu: 0, paddr: 8 }, // bad address
        HtpRequest::PageCopy { cpu: 0, src_ppn: 0, dst_ppn: RAM >> 12 }, // bad address
        HtpRequest::DirectRegAccess { cpu: 0, idx: 1, wen: false, data: 0 },
        HtpRequest::UTick { cpu: 0 },
    ];
    for req in reqs {
        let r = ctrl.service(&req, &mut t).unwrap();
        assert!(r.is_some(), "{req:?} must answer");
    }
}
