//! Behavioral model of the hardware controller: decodes HTP requests, drives
//! the CPU interface, owns the interrupt flags, the trap event queue, the
//! per-core hard-futex mask caches, and the page staging path.
//!
//! Word and page data move through the inject port as real `ld`/`sd`
//! instructions on the addressed core (one simulated tick each, zero wire
//! bytes); injected instructions execute with bare physical addressing.

use std::collections::VecDeque;

use rvasm::enc;

use crate::target::{FatalError, InjectResult, StepOutcome, Target, TrapCause};
use crate::wire::{self, HFutexAction, HtpRequest, HtpResponse, RespPayload, Status};

/// Entries per core in the HFutex mask cache. Inserts are rejected when full;
/// the host falls back to normal handling.
pub const MASK_SIZE: usize = 4;

const SCRATCH_ADDR: u8 = 5; // x5/t0 carries the address
const SCRATCH_DATA: u8 = 6; // x6/t1 carries the data

#[derive(Debug, Default, Clone)]
pub struct ControllerStats {
    pub absorbed_wakes: u64,
    pub events_enqueued: u64,
    pub injected_insts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrapDisposition {
    /// Futex wake absorbed locally; the core is already running again.
    Absorbed,
    Enqueued,
}

pub struct Controller {
    direct_enabled: bool,
    interrupted: Vec<bool>,
    event_queue: VecDeque<u8>,
    hfutex_mask: Vec<Vec<u64>>,
    parked_next: bool,
    pub stats: ControllerStats,
}

impl Controller {
    /// Cores boot interrupted with fetch clutched, waiting for a Redirect.
    pub fn new(cores: usize, direct_enabled: bool) -> Self {
        Controller {
            direct_enabled,
            interrupted: vec![true; cores],
            event_queue: VecDeque::new(),
            hfutex_mask: vec![Vec::new(); cores],
            parked_next: false,
            stats: ControllerStats::default(),
        }
    }

    pub fn interrupted(&self, cpu: usize) -> bool {
        self.interrupted[cpu]
    }

    pub fn parked_next(&self) -> bool {
        self.parked_next
    }

    pub fn mask(&self, cpu: usize) -> &[u64] {
        &self.hfutex_mask[cpu]
    }

    /// Handle one decoded request. `None` means the response is deferred
    /// (a Next parked on an empty event queue).
    pub fn service(&mut self, req: &HtpRequest, t: &mut Target) -> Result<Option<HtpResponse>, FatalError> {
        let echo = req.opcode();
        let resp = match req {
            HtpRequest::Redirect { cpu, pc } => {
                let c = *cpu as usize;
                if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else {
                    self.event_queue.retain(|&e| e as usize != c);
                    self.interrupted[c] = false;
                    t.cores[c].resume_at(*pc);
                    HtpResponse::ok(echo, RespPayload::Empty)
                }
            }
            HtpRequest::Next => {
                if let Some(front) = self.event_queue.pop_front() {
                    let resp = self.event_response(front, t);
                    return Ok(Some(resp));
                }
                if self.parked_next {
                    HtpResponse::err(echo, Status::BadState)
                } else {
                    self.parked_next = true;
                    return Ok(None);
                }
            }
            HtpRequest::MmuSet { cpu, satp, flush_tlb } => {
                let c = *cpu as usize;
                if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else {
                    t.cores[c].satp = *satp;
                    if *flush_tlb {
                        t.cores[c].tlb.flush();
                    }
                    HtpResponse::ok(echo, RespPayload::Empty)
                }
            }
            HtpRequest::SyncI { cpu } => {
                let c = *cpu as usize;
                if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else {
                    t.cores[c].flush_icache();
                    HtpResponse::ok(echo, RespPayload::Empty)
                }
            }
            HtpRequest::HFutex { cpu, action, vaddr } => {
                let mask = &mut self.hfutex_mask[*cpu as usize];
                match action {
                    HFutexAction::Set => {
                        if mask.contains(vaddr) {
                            HtpResponse::ok(echo, RespPayload::Empty)
                        } else if mask.len() >= MASK_SIZE {
                            HtpResponse::err(echo, Status::MaskFull)
                        } else {
                            mask.push(*vaddr);
                            HtpResponse::ok(echo, RespPayload::Empty)
                        }
                    }
                    HFutexAction::Clear => {
                        mask.retain(|a| a != vaddr);
                        HtpResponse::ok(echo, RespPayload::Empty)
                    }
                    HFutexAction::ClearAll => {
                        mask.clear();
                        HtpResponse::ok(echo, RespPayload::Empty)
                    }
                }
            }
            HtpRequest::RegRead { cpu, idx } => {
                let c = *cpu as usize;
                if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else {
                    HtpResponse::ok(echo, RespPayload::Word(t.cores[c].reg(*idx)))
                }
            }
            HtpRequest::RegWrite { cpu, idx, data } => {
                let c = *cpu as usize;
                if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else {
                    t.cores[c].reg_port(*idx, true, *data);
                    HtpResponse::ok(echo, RespPayload::Empty)
                }
            }
            HtpRequest::MemRead { cpu, paddr } => {
                let c = *cpu as usize;
                if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else if !t.mem.contains(*paddr, 8) {
                    HtpResponse::err(echo, Status::BadAddress)
                } else {
                    let v = self.mem_word(c, *paddr, false, 0, t)?;
                    HtpResponse::ok(echo, RespPayload::Word(v))
                }
            }
            HtpRequest::MemWrite { cpu, paddr, data } => {
                let c = *cpu as usize;
                if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else if !t.mem.contains(*paddr, 8) {
                    HtpResponse::err(echo, Status::BadAddress)
                } else {
                    self.mem_word(c, *paddr, true, *data, t)?;
                    HtpResponse::ok(echo, RespPayload::Empty)
                }
            }
            HtpRequest::PageSet { cpu, ppn, value } => {
                let c = *cpu as usize;
                match self.page_precheck(c, &[*ppn], t) {
                    Some(status) => HtpResponse::err(echo, status),
                    None => {
                        self.page_set(c, *ppn, *value, t)?;
                        HtpResponse::ok(echo, RespPayload::Empty)
                    }
                }
            }
            HtpRequest::PageCopy { cpu, src_ppn, dst_ppn } => {
                let c = *cpu as usize;
                match self.page_precheck(c, &[*src_ppn, *dst_ppn], t) {
                    Some(status) => HtpResponse::err(echo, status),
                    None => {
                        self.page_copy(c, *src_ppn, *dst_ppn, t)?;
                        HtpResponse::ok(echo, RespPayload::Empty)
                    }
                }
            }
            HtpRequest::PageRead { cpu, ppn } => {
                let c = *cpu as usize;
                match self.page_precheck(c, &[*ppn], t) {
                    Some(status) => HtpResponse::err(echo, status),
                    None => {
                        let data = self.page_read(c, *ppn, t)?;
                        HtpResponse::ok(echo, RespPayload::Page(data))
                    }
                }
            }
            HtpRequest::PageWrite { cpu, ppn, data } => {
                let c = *cpu as usize;
                match self.page_precheck(c, &[*ppn], t) {
                    Some(status) => HtpResponse::err(echo, status),
                    None => {
                        self.page_write(c, *ppn, data.as_ref(), t)?;
                        HtpResponse::ok(echo, RespPayload::Empty)
                    }
                }
            }
            HtpRequest::Tick => HtpResponse::ok(echo, RespPayload::Word(t.tick)),
            HtpRequest::UTick { cpu } => HtpResponse::ok(echo, RespPayload::Word(t.cores[*cpu as usize].utick)),
            HtpRequest::DirectRegAccess { cpu, idx, wen, data } => {
                let c = *cpu as usize;
                if !self.direct_enabled {
                    HtpResponse::err(echo, Status::Disabled)
                } else if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else {
                    let v = t.cores[c].reg_port(*idx, *wen, *data);
                    HtpResponse::ok(echo, RespPayload::Word(v))
                }
            }
            HtpRequest::DirectInject { cpu, inst } => {
                let c = *cpu as usize;
                if !self.direct_enabled {
                    HtpResponse::err(echo, Status::Disabled)
                } else if !self.interrupted[c] {
                    HtpResponse::err(echo, Status::BadState)
                } else {
                    match t.cores[c].inject(*inst) {
                        InjectResult::Accepted => {
                            self.step_injected(c, t)?;
                            HtpResponse::ok(echo, RespPayload::Empty)
                        }
                        InjectResult::Busy => HtpResponse::err(echo, Status::Busy),
                        InjectResult::Rejected => HtpResponse::err(echo, Status::Rejected),
                        InjectResult::BadState => HtpResponse::err(echo, Status::BadState),
                    }
                }
            }
            HtpRequest::DirectPoll { cpu } => {
                let c = *cpu as usize;
                if !self.direct_enabled {
                    HtpResponse::err(echo, Status::Disabled)
                } else {
                    let payload = match (self.interrupted[c], t.cores[c].trap_latch) {
                        (true, Some(trap)) => RespPayload::Event {
                            cpu: *cpu,
                            cause: trap.cause.code(),
                            epc: trap.epc,
                            tval: trap.tval,
                        },
                        (true, None) => {
                            RespPayload::Event { cpu: *cpu, cause: wire::poll_cause::PARKED, epc: 0, tval: 0 }
                        }
                        (false, _) => {
                            RespPayload::Event { cpu: *cpu, cause: wire::poll_cause::RUNNING, epc: 0, tval: 0 }
                        }
                    };
                    HtpResponse::ok(echo, payload)
                }
            }
        };
        Ok(Some(resp))
    }

    /// Notification that `cpu` just latched a trap. Applies the HFutex filter,
    /// otherwise marks the core interrupted and queues the event. Returns the
    /// deferred Next response if one was parked.
    pub fn on_trap(&mut self, cpu: usize, t: &mut Target) -> Result<(TrapDisposition, Option<HtpResponse>), FatalError> {
        assert!(!self.interrupted[cpu], "trap on an already-interrupted core");
        let trap = t.cores[cpu].trap_latch.expect("on_trap without latch");

        if trap.cause == TrapCause::EcallFromU && !self.hfutex_mask[cpu].is_empty() {
            let nr = t.cores[cpu].reg(17); // a7
            let op = t.cores[cpu].reg(11); // a1
            let uaddr = t.cores[cpu].reg(10); // a0
            // futex(2) is 98 on riscv64; WAKE is op 1 with the private flag
            // (bit 7) ignored.
            if nr == 98 && (op & 0x7f) == 1 && self.hfutex_mask[cpu].contains(&uaddr) {
                t.cores[cpu].reg_port(10, true, 0);
                t.cores[cpu].resume_at(trap.epc.wrapping_add(4));
                self.stats.absorbed_wakes += 1;
                return Ok((TrapDisposition::Absorbed, None));
            }
        }

        self.interrupted[cpu] = true;
        t.cores[cpu].stop_fetch = true;
        self.event_queue.push_back(cpu as u8);
        self.stats.events_enqueued += 1;
        let deferred = if self.parked_next {
            self.parked_next = false;
            let front = self.event_queue.pop_front().expect("queue nonempty");
            Some(self.event_response(front, t))
        } else {
            None
        };
        Ok((TrapDisposition::Enqueued, deferred))
    }

    fn event_response(&mut self, cpu: u8, t: &Target) -> HtpResponse {
        let trap = t.cores[cpu as usize].trap_latch.expect("queued core must hold a trap");
        HtpResponse::ok(
            wire::opcode::NEXT,
            RespPayload::Event { cpu, cause: trap.cause.code(), epc: trap.epc, tval: trap.tval },
        )
    }

    fn page_precheck(&self, cpu: usize, ppns: &[u64], t: &Target) -> Option<Status> {
        if !self.interrupted[cpu] {
            return Some(Status::BadState);
        }
        for &ppn in ppns {
            if !t.mem.contains(ppn << 12, 4096) {
                return Some(Status::BadAddress);
            }
        }
        None
    }

    fn step_injected(&mut self, cpu: usize, t: &mut Target) -> Result<(), FatalError> {
        debug_assert!(t.cores[cpu].inject_slot.is_some());
        let out = t.step_core(cpu)?;
        debug_assert!(matches!(out, StepOutcome::Retired { user: false }));
        self.stats.injected_insts += 1;
        Ok(())
    }

    fn inject_and_step(&mut self, cpu: usize, inst: u32, t: &mut Target) -> Result<(), FatalError> {
        match t.cores[cpu].inject(inst) {
            InjectResult::Accepted => self.step_injected(cpu, t),
            _ => Err(FatalError::InjectedBranch { inst }),
        }
    }

    /// Aligned word access from the perspective of `cpu`: scratch registers
    /// are saved, the access goes through one injected ld/sd, and the
    /// scratches are restored.
    pub fn mem_word(&mut self, cpu: usize, paddr: u64, wen: bool, data: u64, t: &mut Target) -> Result<u64, FatalError> {
        let save_addr = t.cores[cpu].reg(SCRATCH_ADDR);
        let save_data = t.cores[cpu].reg(SCRATCH_DATA);
        t.cores[cpu].reg_port(SCRATCH_ADDR, true, paddr);
        let value = if wen {
            t.cores[cpu].reg_port(SCRATCH_DATA, true, data);
            self.inject_and_step(cpu, enc::sd(SCRATCH_DATA, SCRATCH_ADDR, 0), t)?;
            data
        } else {
            self.inject_and_step(cpu, enc::ld(SCRATCH_DATA, SCRATCH_ADDR, 0), t)?;
            t.cores[cpu].reg(SCRATCH_DATA)
        };
        t.cores[cpu].reg_port(SCRATCH_ADDR, true, save_addr);
        t.cores[cpu].reg_port(SCRATCH_DATA, true, save_data);
        Ok(value)
    }

    fn page_set(&mut self, cpu: usize, ppn: u64, value: u64, t: &mut Target) -> Result<(), FatalError> {
        let base = ppn << 12;
        let save_addr = t.cores[cpu].reg(SCRATCH_ADDR);
        let save_data = t.cores[cpu].reg(SCRATCH_DATA);
        t.cores[cpu].reg_port(SCRATCH_DATA, true, value);
        for w in 0..512 {
            t.cores[cpu].reg_port(SCRATCH_ADDR, true, base + 8 * w);
            self.inject_and_step(cpu, enc::sd(SCRATCH_DATA, SCRATCH_ADDR, 0), t)?;
        }
        t.cores[cpu].reg_port(SCRATCH_ADDR, true, save_addr);
        t.cores[cpu].reg_port(SCRATCH_DATA, true, save_data);
        Ok(())
    }

    fn page_copy(&mut self, cpu: usize, src: u64, dst: u64, t: &mut Target) -> Result<(), FatalError> {
        let save_addr = t.cores[cpu].reg(SCRATCH_ADDR);
        let save_data = t.cores[cpu].reg(SCRATCH_DATA);
        for w in 0..512 {
            t.cores[cpu].reg_port(SCRATCH_ADDR, true, (src << 12) + 8 * w);
            self.inject_and_step(cpu, enc::ld(SCRATCH_DATA, SCRATCH_ADDR, 0), t)?;
            t.cores[cpu].reg_port(SCRATCH_ADDR, true, (dst << 12) + 8 * w);
            self.inject_and_step(cpu, enc::sd(SCRATCH_DATA, SCRATCH_ADDR, 0), t)?;
        }
        t.cores[cpu].reg_port(SCRATCH_ADDR, true, save_addr);
        t.cores[cpu].reg_port(SCRATCH_DATA, true, save_data);
        Ok(())
    }

    fn page_read(&mut self, cpu: usize, ppn: u64, t: &mut Target) -> Result<Box<[u8; 4096]>, FatalError> {
        let save_addr = t.cores[cpu].reg(SCRATCH_ADDR);
        let save_data = t.cores[cpu].reg(SCRATCH_DATA);
        let mut out = Box::new([0u8; 4096]);
        for w in 0..512usize {
            t.cores[cpu].reg_port(SCRATCH_ADDR, true, (ppn << 12) + 8 * w as u64);
            self.inject_and_step(cpu, enc::ld(SCRATCH_DATA, SCRATCH_ADDR, 0), t)?;
            out[8 * w..8 * w + 8].copy_from_slice(&t.cores[cpu].reg(SCRATCH_DATA).to_le_bytes());
        }
        t.cores[cpu].reg_port(SCRATCH_ADDR, true, save_addr);
        t.cores[cpu].reg_port(SCRATCH_DATA, true, save_data);
        Ok(out)
    }

    /// The staged page buffer lands in target memory word by word through the
    /// inject port.
    fn page_write(&mut self, cpu: usize, ppn: u64, data: &[u8; 4096], t: &mut Target) -> Result<(), FatalError> {
        let save_addr = t.cores[cpu].reg(SCRATCH_ADDR);
        let save_data = t.cores[cpu].reg(SCRATCH_DATA);
        for w in 0..512usize {
            let word = u64::from_le_bytes(data[8 * w..8 * w + 8].try_into().unwrap());
            t.cores[cpu].reg_port(SCRATCH_DATA, true, word);
            t.cores[cpu].reg_port(SCRATCH_ADDR, true, (ppn << 12) + 8 * w as u64);
            self.inject_and_step(cpu, enc::sd(SCRATCH_DATA, SCRATCH_ADDR, 0), t)?;
        }
        t.cores[cpu].reg_port(SCRATCH_ADDR, true, save_addr);
        t.cores[cpu].reg_port(SCRATCH_DATA, true, save_data);
        Ok(())
    }
}

#[cfg(test)]
mod tests;
