//! Host-side runtime: the scheduler and syscall dispatch loop, signal
//! delivery, blocking-call delegation, virtual memory management and I/O
//! bypass, driving the target exclusively through the host-target protocol.

pub mod errno;
pub mod fdtab;
pub mod futex;
pub mod link;
pub mod signal;
mod syscall;
pub mod vm;
pub mod workers;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::path::PathBuf;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::config::RunConfig;
use crate::controller::ControllerStats;
use crate::loader::{self, LoadError, LoaderConfig};
use crate::target::TrapCause;
use crate::transport::{frame_time, Channel, TrafficLedger};
use crate::wire::HFutexAction;
use fdtab::FdTable;
use futex::{FutexQueues, HfutexRecords};
use link::{Event, HtpClient, LinkError};
use signal::{SavedFrame, SignalTable};
use vm::{Access, AddressSpace, FaultFix, MapRegistry, PhysAllocator, VmCtx, VmError};
use workers::WorkerPool;

pub type Tid = u64;

const MAIN_TID: Tid = 1000;

/// Construct a VmCtx from disjoint Runtime fields (keeps the borrow checker
/// out of every call site).
macro_rules! vmctx {
    ($self:ident, $cpu:expr, $flush:expr) => {
        VmCtx { client: &mut $self.link, alloc: &mut $self.alloc, cpu: $cpu, flush_cores: $flush }
    };
}
pub(crate) use vmctx;

#[derive(Debug, thiserror::Error)]
pub enum RtError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("runtime: {0}")]
    Fatal(String),
    #[error("scheduler deadlock: {0}")]
    Deadlock(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadState {
    Running { core: usize },
    Ready,
    Blocked,
    Zombie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Futex { uaddr: u64 },
    Io { token: u64 },
}

pub struct Tcb {
    pub tid: Tid,
    pub state: ThreadState,
    /// Register image; authoritative only while not running.
    pub regs: [u64; 32],
    pub pc: u64,
    pub clear_child_tid: u64,
    pub sig_mask: u64,
    pub pending: VecDeque<u8>,
    pub saved_frame: Option<SavedFrame>,
    pub blocked_on: Option<BlockKind>,
}

impl Tcb {
    fn new(tid: Tid) -> Self {
        Tcb {
            tid,
            state: ThreadState::Ready,
            regs: [0; 32],
            pc: 0,
            clear_child_tid: 0,
            sig_mask: 0,
            pending: VecDeque::new(),
            saved_frame: None,
            blocked_on: None,
        }
    }
}

struct IoWait {
    tid: Tid,
    buf: u64,
}

struct TimedWait {
    deadline_ns: u64,
    uaddr: u64,
}

#[derive(Debug, Default, Clone)]
pub struct RunStats {
    pub page_faults: u64,
    pub pages_preloaded: u64,
    pub ctx_saves: u64,
    pub ctx_restores: u64,
    pub signals_delivered: u64,
}

/// Everything a finished run reports.
pub struct RunOutcome {
    pub exit_codes: BTreeMap<Tid, i32>,
    pub main_exit: i32,
    pub fatal: Option<String>,
    pub ticks: u64,
    pub uticks: Vec<u64>,
    pub sim_seconds: f64,
    pub ledger: TrafficLedger,
    pub syscall_counts: BTreeMap<String, u64>,
    pub stats: RunStats,
    pub target_stats: Option<ControllerStats>,
    pub stdout: Option<Vec<u8>>,
}

enum OutSink {
    Inherit,
    Capture(Vec<u8>),
}

impl OutSink {
    fn write(&mut self, data: &[u8], inherit_to_stderr: bool) -> std::io::Result<()> {
        match self {
            OutSink::Inherit => {
                if inherit_to_stderr {
                    std::io::stderr().write_all(data)
                } else {
                    let mut out = std::io::stdout();
                    out.write_all(data)?;
                    out.flush()
                }
            }
            OutSink::Capture(buf) => {
                buf.extend_from_slice(data);
                Ok(())
            }
        }
    }
}

pub struct Runtime<C: Channel> {
    pub cfg: RunConfig,
    pub link: HtpClient<C>,
    alloc: PhysAllocator,
    registry: MapRegistry,
    space: AddressSpace,
    fds: FdTable,
    threads: BTreeMap<Tid, Tcb>,
    ready: VecDeque<Tid>,
    cores: Vec<Option<Tid>>,
    core_satp: Vec<u64>,
    core_code_epoch: Vec<u64>,
    futexq: FutexQueues,
    hfx: HfutexRecords,
    sigs: SignalTable,
    workers: WorkerPool,
    io_waits: BTreeMap<u64, IoWait>,
    timed_waits: BTreeMap<Tid, TimedWait>,
    prng: ChaCha8Rng,
    stdout: OutSink,
    stderr: OutSink,
    exit_codes: BTreeMap<Tid, i32>,
    next_tid: Tid,
    syscall_counts: BTreeMap<String, u64>,
    unknown_syscalls: BTreeSet<u64>,
    pub stats: RunStats,
    fatal: Option<String>,
    trampoline: u64,
}

impl<C: Channel> Runtime<C> {
    pub fn new(cfg: RunConfig, chan: C) -> Result<Self, RtError> {
        let cores = cfg.cores as usize;
        let mut link = HtpClient::new(chan, cfg.cores);
        link.set_direct(cfg.direct);
        let mem_base = 0x8000_0000u64;
        let mut alloc = PhysAllocator::new(mem_base, cfg.mem_mib * 1024 * 1024);
        let space = {
            let mut ctx = VmCtx { client: &mut link, alloc: &mut alloc, cpu: 0, flush_cores: &[] };
            AddressSpace::new(1, &mut ctx)?
        };
        let prng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let stdout = if cfg.capture_stdout { OutSink::Capture(Vec::new()) } else { OutSink::Inherit };
        Ok(Runtime {
            hfx: HfutexRecords::new(cores),
            cfg,
            link,
            alloc,
            registry: MapRegistry::default(),
            space,
            fds: FdTable::new(),
            threads: BTreeMap::new(),
            ready: VecDeque::new(),
            cores: vec![None; cores],
            core_satp: vec![0; cores],
            core_code_epoch: vec![0; cores],
            futexq: FutexQueues::default(),
            sigs: SignalTable::default(),
            workers: WorkerPool::new(),
            io_waits: BTreeMap::new(),
            timed_waits: BTreeMap::new(),
            prng,
            stdout,
            stderr: OutSink::Inherit,
            exit_codes: BTreeMap::new(),
            next_tid: MAIN_TID + 1,
            syscall_counts: BTreeMap::new(),
            unknown_syscalls: BTreeSet::new(),
            stats: RunStats::default(),
            fatal: None,
            trampoline: loader::TRAMPOLINE_VADDR,
        })
    }

    /// Feed target stdin from a concrete host handle (tests use pipes).
    pub fn set_stdin(&mut self, file: std::fs::File) {
        self.fds.set_std_handle(0, file, fdtab::FileKind::Stream);
    }

    pub fn space(&self) -> &AddressSpace {
        &self.space
    }

    fn ns_per_tick(&self) -> u64 {
        self.cfg.ns_per_tick
    }

    /// Cores currently bound to a thread (their TLBs see this space).
    fn bound_cores(&self) -> Vec<u8> {
        (0..self.cores.len()).filter(|&c| self.cores[c].is_some()).map(|c| c as u8).collect()
    }

    fn tcb(&self, tid: Tid) -> &Tcb {
        &self.threads[&tid]
    }

    fn tcb_mut(&mut self, tid: Tid) -> &mut Tcb {
        self.threads.get_mut(&tid).expect("tcb")
    }

    pub fn run(&mut self) -> Result<RunOutcome, RtError> {
        self.boot()?;
        self.main_loop()?;
        self.finish()
    }

    fn boot(&mut self) -> Result<(), RtError> {
        self.link.push_attribution("load");
        // Preload requested files into buffer pages before execution starts.
        let preloads: Vec<PathBuf> = self.cfg.preload.clone();
        for p in &preloads {
            let fm = self
                .registry
                .resolve(p)
                .map_err(|e| RtError::Fatal(format!("preload {}: {e}", p.display())))?;
            let pages = (fm.borrow().content.len() as u64).div_ceil(vm::PAGE);
            for idx in 0..pages {
                let mut ctx = vmctx!(self, 0, &[]);
                AddressSpace::ensure_buffer_page(&mut ctx, &fm, idx)?;
            }
        }

        let mut at_random = [0u8; 16];
        self.prng.fill_bytes(&mut at_random);
        let lcfg = LoaderConfig {
            libdir: self.cfg.libdir.as_deref(),
            preload: self.cfg.preload_workload,
            argv: &self.cfg.argv,
            envp: &self.cfg.envp,
            at_random,
        };
        let elf = self.cfg.elf.clone();
        let image = {
            let mut ctx = vmctx!(self, 0, &[]);
            loader::load_elf(&mut self.space, &mut ctx, &mut self.registry, &elf, &lcfg)?
        };
        self.trampoline = image.trampoline;

        let mut main = Tcb::new(MAIN_TID);
        main.pc = image.start_pc;
        main.regs[2] = image.initial_sp;
        self.threads.insert(MAIN_TID, main);
        self.ready.push_back(MAIN_TID);
        self.link.pop_attribution();

        self.link.push_attribution("sched");
        self.dispatch_ready()?;
        self.link.pop_attribution();
        Ok(())
    }

    fn all_zombie(&self) -> bool {
        self.threads.values().all(|t| t.state == ThreadState::Zombie)
    }

    fn any_running(&self) -> bool {
        self.cores.iter().any(Option::is_some)
    }

    fn main_loop(&mut self) -> Result<(), RtError> {
        loop {
            self.drain_completions()?;
            self.link.push_attribution("sched");
            self.dispatch_ready()?;
            self.link.pop_attribution();
            self.check_futex_timeouts(false)?;

            if let Some(ev) = self.link.take_pending_event() {
                self.handle_event(ev)?;
                continue;
            }
            if self.all_zombie() {
                return Ok(());
            }
            if self.any_running() {
                self.link.push_attribution("sched");
                self.link.submit_next()?;
                let ev = self.link.wait_event()?;
                self.link.pop_attribution();
                self.handle_event(ev)?;
            } else if self.workers.outstanding() > 0 {
                // Nothing on the cores: block on host I/O completions.
                match self.workers.wait_complete() {
                    Some(c) => self.complete_io(c)?,
                    None => return Err(RtError::Deadlock("worker pool died".into())),
                }
            } else if !self.ready.is_empty() {
                continue;
            } else if !self.timed_waits.is_empty() {
                // Only timed futex waiters remain; simulated time is frozen
                // (no retirements), so the earliest deadline fires now.
                self.check_futex_timeouts(true)?;
            } else {
                return Err(RtError::Deadlock(
                    "all threads blocked with no wake source (futex deadlock)".into(),
                ));
            }
        }
    }

    fn drain_completions(&mut self) -> Result<(), RtError> {
        while let Some(c) = self.workers.try_complete() {
            self.complete_io(c)?;
        }
        Ok(())
    }

    fn complete_io(&mut self, c: workers::Completion) -> Result<(), RtError> {
        let wait = match self.io_waits.remove(&c.token) {
            Some(w) => w,
            None => return Ok(()),
        };
        let a0 = match c.result {
            Ok(data) => {
                if !data.is_empty() {
                    let flush = self.bound_cores();
                    let mut ctx = vmctx!(self, 0, &flush);
                    if let Err(e) = self.space.write_bytes(&mut ctx, wait.buf, &data, true) {
                        e
                    } else {
                        data.len() as i64
                    }
                } else {
                    0
                }
            }
            Err(e) => e,
        };
        let tcb = self.tcb_mut(wait.tid);
        if tcb.state == ThreadState::Zombie {
            return Ok(());
        }
        tcb.regs[10] = a0 as u64;
        tcb.state = ThreadState::Ready;
        tcb.blocked_on = None;
        self.ready.push_back(wait.tid);
        Ok(())
    }

    fn now_ns(&mut self) -> Result<u64, RtError> {
        Ok(self.link.tick()? * self.ns_per_tick())
    }

    fn check_futex_timeouts(&mut self, force_earliest: bool) -> Result<(), RtError> {
        if self.timed_waits.is_empty() {
            return Ok(());
        }
        let now = self.now_ns()?;
        let mut expired: Vec<Tid> = self
            .timed_waits
            .iter()
            .filter(|(_, w)| w.deadline_ns <= now)
            .map(|(tid, _)| *tid)
            .collect();
        if expired.is_empty() && force_earliest {
            if let Some((&tid, _)) = self.timed_waits.iter().min_by_key(|(_, w)| w.deadline_ns) {
                expired.push(tid);
            }
        }
        for tid in expired {
            let w = self.timed_waits.remove(&tid).unwrap();
            self.futexq.remove_tid(self.space.id, w.uaddr, tid);
            let tcb = self.tcb_mut(tid);
            if tcb.state == ThreadState::Blocked {
                tcb.regs[10] = (-errno::ETIMEDOUT) as u64;
                tcb.state = ThreadState::Ready;
                tcb.blocked_on = None;
                self.ready.push_back(tid);
            }
        }
        Ok(())
    }

    fn dispatch_ready(&mut self) -> Result<(), RtError> {
        while let Some(free) = self.cores.iter().position(Option::is_none) {
            let Some(tid) = self.ready.pop_front() else { break };
            if self.tcb(tid).state == ThreadState::Zombie {
                continue;
            }
            self.restore_context(tid, free)?;
        }
        Ok(())
    }

    /// Write a thread's register image to a core and resume it. The spec's
    /// thread-switch housekeeping happens here: hard-futex masks for the
    /// core are cleared and the MMU/instruction stream re-synchronized.
    fn restore_context(&mut self, tid: Tid, core: usize) -> Result<(), RtError> {
        // Signal delivery mutates the image before it is written out.
        match self.delivery_plan(tid) {
            DeliveryPlan::FatalSig(sig) => {
                self.fatal_group(format!("thread {tid} killed by signal {sig}"), 128 + sig as i32);
                return Ok(());
            }
            DeliveryPlan::Handler(sig, act) => {
                self.stats.signals_delivered += 1;
                let trampoline = self.trampoline;
                let tcb = self.tcb_mut(tid);
                let old_mask = tcb.sig_mask;
                tcb.saved_frame = Some(SavedFrame { regs: tcb.regs, pc: tcb.pc, mask: old_mask });
                tcb.sig_mask = old_mask | act.mask | (1u64 << (sig - 1));
                tcb.pending.retain(|&s| s != sig);
                let sp = (tcb.regs[2].wrapping_sub(256)) & !15;
                tcb.regs[5] = act.handler; // t0: handler address for the trampoline
                tcb.regs[10] = sig as u64;
                tcb.regs[11] = 0;
                tcb.regs[12] = 0;
                tcb.regs[2] = sp;
                tcb.pc = trampoline;
            }
            DeliveryPlan::None => {}
        }

        if self.hfx.core_nonempty(core) {
            self.link.hfutex(core as u8, HFutexAction::ClearAll, 0)?;
            self.hfx.clear_core(core);
        }

        self.link.push_attribution("ctx_switch");
        let regs = self.tcb(tid).regs;
        for idx in 1..32u8 {
            self.link.reg_write(core as u8, idx, regs[idx as usize])?;
        }
        self.link.pop_attribution();

        let pc = self.tcb(tid).pc;
        self.cores[core] = Some(tid);
        self.tcb_mut(tid).state = ThreadState::Running { core };
        self.stats.ctx_restores += 1;
        self.redirect(core, pc)
    }

    /// Read the live registers off a core into the thread's image.
    fn save_context(&mut self, tid: Tid, core: usize, resume_pc: u64) -> Result<(), RtError> {
        self.link.push_attribution("ctx_switch");
        let mut regs = [0u64; 32];
        for idx in 1..32u8 {
            regs[idx as usize] = self.link.reg_read(core as u8, idx)?;
        }
        self.link.pop_attribution();
        self.stats.ctx_saves += 1;
        let tcb = self.tcb_mut(tid);
        tcb.regs = regs;
        tcb.pc = resume_pc;
        self.cores[core] = None;
        Ok(())
    }

    /// MMU/SyncI-as-needed plus the Redirect that resumes execution.
    fn redirect(&mut self, core: usize, pc: u64) -> Result<(), RtError> {
        let satp = self.space.satp();
        if self.core_satp[core] != satp {
            self.link.mmu_set(core as u8, satp, true)?;
            self.core_satp[core] = satp;
        }
        if self.core_code_epoch[core] != self.space.code_epoch {
            self.link.sync_i(core as u8)?;
            self.core_code_epoch[core] = self.space.code_epoch;
        }
        self.link.redirect(core as u8, pc)?;
        Ok(())
    }

    /// Resume the thread still live on `core`, optionally writing a syscall
    /// result first; pending signals detour through the trampoline.
    fn resume_live(&mut self, tid: Tid, core: usize, pc: u64, a0: Option<u64>) -> Result<(), RtError> {
        match self.delivery_plan(tid) {
            DeliveryPlan::FatalSig(sig) => {
                self.fatal_group(format!("thread {tid} killed by signal {sig}"), 128 + sig as i32);
                Ok(())
            }
            DeliveryPlan::Handler(sig, act) => {
                self.stats.signals_delivered += 1;
                self.link.push_attribution("signal");
                let mut regs = [0u64; 32];
                for idx in 1..32u8 {
                    regs[idx as usize] = self.link.reg_read(core as u8, idx)?;
                }
                if let Some(v) = a0 {
                    regs[10] = v;
                }
                let tcb = self.tcb_mut(tid);
                let old_mask = tcb.sig_mask;
                tcb.saved_frame = Some(SavedFrame { regs, pc, mask: old_mask });
                tcb.sig_mask = old_mask | act.mask | (1u64 << (sig - 1));
                tcb.pending.retain(|&s| s != sig);
                let sp = (regs[2].wrapping_sub(256)) & !15;
                self.link.reg_write(core as u8, 5, act.handler)?;
                self.link.reg_write(core as u8, 10, sig as u64)?;
                self.link.reg_write(core as u8, 11, 0)?;
                self.link.reg_write(core as u8, 12, 0)?;
                self.link.reg_write(core as u8, 2, sp)?;
                let tramp = self.trampoline;
                let r = self.redirect(core, tramp);
                self.link.pop_attribution();
                r
            }
            DeliveryPlan::None => {
                if let Some(v) = a0 {
                    self.link.reg_write(core as u8, 10, v)?;
                }
                self.redirect(core, pc)
            }
        }
    }

    fn delivery_plan(&self, tid: Tid) -> DeliveryPlan {
        let tcb = self.tcb(tid);
        if tcb.saved_frame.is_some() {
            return DeliveryPlan::None; // one nesting level: wait for sigreturn
        }
        for &sig in &tcb.pending {
            if sig != signal::SIGKILL && (tcb.sig_mask & (1u64 << (sig - 1))) != 0 {
                continue;
            }
            let act = self.sigs.get(sig);
            if act.handler != 0 && sig != signal::SIGKILL {
                return DeliveryPlan::Handler(sig, act);
            }
            if signal::default_ignored(sig) {
                continue;
            }
            return DeliveryPlan::FatalSig(sig);
        }
        DeliveryPlan::None
    }

    fn fatal_group(&mut self, msg: String, code: i32) {
        if self.fatal.is_none() {
            self.fatal = Some(msg);
        }
        for (tid, tcb) in self.threads.iter_mut() {
            if tcb.state != ThreadState::Zombie {
                tcb.state = ThreadState::Zombie;
                self.exit_codes.entry(*tid).or_insert(code);
            }
        }
        for c in self.cores.iter_mut() {
            *c = None;
        }
        self.ready.clear();
    }

    fn handle_event(&mut self, ev: Event) -> Result<(), RtError> {
        let core = ev.cpu as usize;
        let tid = match self.cores[core] {
            Some(t) => t,
            None => return Err(RtError::Fatal(format!("event from unbound core {core}: {ev:?}"))),
        };
        match ev.cause {
            TrapCause::EcallFromU => self.handle_syscall_event(tid, core, ev),
            TrapCause::PageFaultLoad | TrapCause::PageFaultStore | TrapCause::PageFaultFetch => {
                let access = match ev.cause {
                    TrapCause::PageFaultLoad => Access::Read,
                    TrapCause::PageFaultStore => Access::Write,
                    _ => Access::Exec,
                };
                self.stats.page_faults += 1;
                self.link.push_attribution("page_fault");
                let flush = self.bound_cores();
                let fix = {
                    let mut ctx = vmctx!(self, ev.cpu, &flush);
                    self.space.handle_fault(&mut ctx, ev.tval, access)?
                };
                self.link.pop_attribution();
                match fix {
                    FaultFix::Resumed { materialized } => {
                        self.stats.pages_preloaded += materialized.saturating_sub(1);
                        // Retry the faulting access.
                        self.resume_live(tid, core, ev.epc, None)
                    }
                    FaultFix::Segfault => {
                        self.fatal_group(
                            format!(
                                "segmentation fault: tid {tid} {access:?} at {:#x} (pc {:#x})",
                                ev.tval, ev.epc
                            ),
                            128 + 11,
                        );
                        Ok(())
                    }
                }
            }
            TrapCause::IllegalInstruction => {
                self.fatal_group(format!("illegal instruction at {:#x} (tid {tid})", ev.epc), 128 + 4);
                Ok(())
            }
            TrapCause::Breakpoint => {
                self.fatal_group(format!("breakpoint at {:#x} (tid {tid})", ev.epc), 128 + 5);
                Ok(())
            }
            TrapCause::Misaligned => {
                self.fatal_group(
                    format!("misaligned access at {:#x} (pc {:#x}, tid {tid})", ev.tval, ev.epc),
                    128 + 7,
                );
                Ok(())
            }
        }
    }

    fn thread_exit(&mut self, tid: Tid, core: usize, code: i32) -> Result<(), RtError> {
        self.exit_codes.insert(tid, code);
        {
            let tcb = self.tcb_mut(tid);
            tcb.state = ThreadState::Zombie;
            tcb.blocked_on = None;
        }
        self.cores[core] = None;
        let ctid = self.tcb(tid).clear_child_tid;
        if ctid != 0 {
            // CLONE_CHILD_CLEARTID: zero the word, then one futex wake.
            let flush = self.bound_cores();
            {
                let mut ctx = vmctx!(self, core as u8, &flush);
                let _ = self.space.write_u32(&mut ctx, ctid, 0);
            }
            self.wake_futex(ctid, 1)?;
        }
        Ok(())
    }

    /// Move up to `max` waiters to the ready queue; returns the count.
    fn wake_futex(&mut self, uaddr: u64, max: u64) -> Result<u64, RtError> {
        let woken = self.futexq.wake(self.space.id, uaddr, max);
        let n = woken.len() as u64;
        for tid in woken {
            self.timed_waits.remove(&tid);
            let tcb = self.tcb_mut(tid);
            if tcb.state == ThreadState::Blocked {
                tcb.regs[10] = 0;
                tcb.state = ThreadState::Ready;
                tcb.blocked_on = None;
                self.ready.push_back(tid);
            }
        }
        Ok(n)
    }

    fn finish(&mut self) -> Result<RunOutcome, RtError> {
        let ticks = self.link.tick()?;
        let mut uticks = Vec::with_capacity(self.cores.len());
        for c in 0..self.cores.len() {
            uticks.push(self.link.utick(c as u8)?);
        }
        let (sim_seconds, target_stats) = match self.link.tp.chan.machine() {
            Some(m) => (m.sim_seconds, Some(m.stats())),
            None => {
                // Remote target: estimate from bytes plus retirement time.
                let total = self.link.tp.ledger.total_bytes();
                let cfg = self.cfg.channel_config();
                (frame_time(total, &cfg) + ticks as f64 * self.cfg.ns_per_tick as f64 * 1e-9, None)
            }
        };
        let stdout = match &mut self.stdout {
            OutSink::Capture(buf) => Some(std::mem::take(buf)),
            OutSink::Inherit => None,
        };
        let main_exit = self.exit_codes.get(&MAIN_TID).copied().unwrap_or(-1);
        Ok(RunOutcome {
            exit_codes: self.exit_codes.clone(),
            main_exit,
            fatal: self.fatal.clone(),
            ticks,
            uticks,
            sim_seconds,
            ledger: self.link.tp.ledger.clone(),
            syscall_counts: self.syscall_counts.clone(),
            stats: self.stats.clone(),
            target_stats,
            stdout,
        })
    }
}

enum DeliveryPlan {
    None,
    Handler(u8, signal::SigAction),
    FatalSig(u8),
}
