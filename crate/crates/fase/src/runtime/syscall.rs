//! Linux syscall emulation over the host-target protocol: argument registers
//! come off the trapped core, buffers are staged through the VM layer, and
//! the result lands in a0 before the resuming Redirect.

use std::fs::OpenOptions;

use super::errno::*;
use super::fdtab::{self, FileKind, AT_FDCWD};
use super::futex::{FUTEX_OP_MASK, FUTEX_WAIT, FUTEX_WAKE};
use super::link::Event;
use super::signal::SigAction;
use super::vm::{FileBacking, Perms, SegKind, VmCtx};
use super::*;
use crate::transport::Channel;

// riscv64 (asm-generic) syscall numbers.
const SYS_FCNTL: u64 = 25;
const SYS_IOCTL: u64 = 29;
const SYS_OPENAT: u64 = 56;
const SYS_CLOSE: u64 = 57;
const SYS_LSEEK: u64 = 62;
const SYS_READ: u64 = 63;
const SYS_WRITE: u64 = 64;
const SYS_READV: u64 = 65;
const SYS_WRITEV: u64 = 66;
const SYS_FSTAT: u64 = 80;
const SYS_EXIT: u64 = 93;
const SYS_EXIT_GROUP: u64 = 94;
const SYS_SET_TID_ADDRESS: u64 = 96;
const SYS_FUTEX: u64 = 98;
const SYS_SET_ROBUST_LIST: u64 = 99;
const SYS_CLOCK_GETTIME: u64 = 113;
const SYS_SCHED_YIELD: u64 = 124;
const SYS_KILL: u64 = 129;
const SYS_TGKILL: u64 = 131;
const SYS_RT_SIGACTION: u64 = 134;
const SYS_RT_SIGPROCMASK: u64 = 135;
const SYS_RT_SIGRETURN: u64 = 139;
const SYS_UNAME: u64 = 160;
const SYS_GETTIMEOFDAY: u64 = 169;
const SYS_GETPID: u64 = 172;
const SYS_GETTID: u64 = 178;
const SYS_BRK: u64 = 214;
const SYS_MUNMAP: u64 = 215;
const SYS_MREMAP: u64 = 216;
const SYS_CLONE: u64 = 220;
const SYS_MMAP: u64 = 222;
const SYS_MPROTECT: u64 = 226;
const SYS_MSYNC: u64 = 227;
const SYS_WAIT4: u64 = 260;
const SYS_PRLIMIT64: u64 = 261;
const SYS_GETRANDOM: u64 = 278;

const TGID: u64 = 1000;

fn syscall_name(nr: u64) -> &'static str {
    match nr {
        SYS_FCNTL => "fcntl",
        SYS_IOCTL => "ioctl",
        SYS_OPENAT => "openat",
        SYS_CLOSE => "close",
        SYS_LSEEK => "lseek",
        SYS_READ => "read",
        SYS_WRITE => "write",
        SYS_READV => "readv",
        SYS_WRITEV => "writev",
        SYS_FSTAT => "fstat",
        SYS_EXIT => "exit",
        SYS_EXIT_GROUP => "exit_group",
        SYS_SET_TID_ADDRESS => "set_tid_address",
        SYS_FUTEX => "futex",
        SYS_SET_ROBUST_LIST => "set_robust_list",
        SYS_CLOCK_GETTIME => "clock_gettime",
        SYS_SCHED_YIELD => "sched_yield",
        SYS_KILL => "kill",
        SYS_TGKILL => "tgkill",
        SYS_RT_SIGACTION => "rt_sigaction",
        SYS_RT_SIGPROCMASK => "rt_sigprocmask",
        SYS_RT_SIGRETURN => "rt_sigreturn",
        SYS_UNAME => "uname",
        SYS_GETTIMEOFDAY => "gettimeofday",
        SYS_GETPID => "getpid",
        SYS_GETTID => "gettid",
        SYS_BRK => "brk",
        SYS_MUNMAP => "munmap",
        SYS_MREMAP => "mremap",
        SYS_CLONE => "clone",
        SYS_MMAP => "mmap",
        SYS_MPROTECT => "mprotect",
        SYS_MSYNC => "msync",
        SYS_WAIT4 => "wait4",
        SYS_PRLIMIT64 => "prlimit64",
        SYS_GETRANDOM => "getrandom",
        _ => "unknown",
    }
}

/// Futex ops get their own traffic grouping.
fn attribution_label(nr: u64, futex_op: Option<u64>) -> &'static str {
    if let Some(op) = futex_op {
        return match op & FUTEX_OP_MASK {
            FUTEX_WAIT => "futex_wait",
            FUTEX_WAKE => "futex_wake",
            _ => "futex_other",
        };
    }
    syscall_name(nr)
}

pub(super) enum Action {
    Return(i64),
    BlockFutex { uaddr: u64 },
    BlockIo { token: u64 },
    Yield,
    Exit { code: i32, group: bool },
    SigReturn,
}

impl<C: Channel> Runtime<C> {
    pub(super) fn handle_syscall_event(&mut self, tid: Tid, core: usize, ev: Event) -> Result<(), RtError> {
        // Identify the call first (plus the futex op refinement), then
        // bracket the whole handling under the syscall's own label so the
        // per-syscall traffic groups partition the byte total.
        self.link.push_attribution("dispatch");
        let nr = self.link.reg_read(core as u8, 17)?;
        let futex_op = if nr == SYS_FUTEX { Some(self.link.reg_read(core as u8, 11)?) } else { None };
        self.link.pop_attribution();

        let label = attribution_label(nr, futex_op);
        *self.syscall_counts.entry(label.to_string()).or_default() += 1;

        self.link.push_attribution(label);
        let mut args = [0u64; 6];
        let mut result = Ok(());
        for (i, a) in args.iter_mut().enumerate() {
            if i == 1 {
                if let Some(op) = futex_op {
                    *a = op;
                    continue;
                }
            }
            match self.link.reg_read(core as u8, 10 + i as u8) {
                Ok(v) => *a = v,
                Err(e) => {
                    result = Err(e.into());
                    break;
                }
            }
        }
        if result.is_ok() {
            result = match self.dispatch_syscall(tid, core, nr, &args, &ev) {
                Ok(action) => self.apply_action(tid, core, &ev, action),
                Err(e) => Err(e),
            };
        }
        self.link.pop_attribution();
        result
    }

    fn apply_action(&mut self, tid: Tid, core: usize, ev: &Event, action: Action) -> Result<(), RtError> {
        let next_pc = ev.epc.wrapping_add(4);
        match action {
            Action::Return(v) => self.resume_live(tid, core, next_pc, Some(v as u64)),
            Action::BlockFutex { uaddr } => {
                self.save_context(tid, core, next_pc)?;
                let tcb = self.tcb_mut(tid);
                tcb.state = ThreadState::Blocked;
                tcb.blocked_on = Some(BlockKind::Futex { uaddr });
                self.link.push_attribution("sched");
                self.dispatch_ready()?;
                self.link.pop_attribution();
                Ok(())
            }
            Action::BlockIo { token } => {
                self.save_context(tid, core, next_pc)?;
                let tcb = self.tcb_mut(tid);
                tcb.state = ThreadState::Blocked;
                tcb.blocked_on = Some(BlockKind::Io { token });
                self.link.push_attribution("sched");
                self.dispatch_ready()?;
                self.link.pop_attribution();
                Ok(())
            }
            Action::Yield => {
                if self.ready.is_empty() {
                    self.resume_live(tid, core, next_pc, Some(0))
                } else {
                    self.save_context(tid, core, next_pc)?;
                    {
                        let tcb = self.tcb_mut(tid);
                        tcb.regs[10] = 0;
                        tcb.state = ThreadState::Ready;
                    }
                    self.ready.push_back(tid);
                    self.link.push_attribution("sched");
                    self.dispatch_ready()?;
                    self.link.pop_attribution();
                    Ok(())
                }
            }
            Action::Exit { code, group } => {
                self.thread_exit(tid, core, code)?;
                if group {
                    let tids: Vec<Tid> = self.threads.keys().copied().collect();
                    for t in tids {
                        if self.tcb(t).state != ThreadState::Zombie {
                            self.tcb_mut(t).state = ThreadState::Zombie;
                            self.exit_codes.entry(t).or_insert(code);
                        }
                    }
                    for c in self.cores.iter_mut() {
                        *c = None;
                    }
                    self.ready.clear();
                }
                self.link.push_attribution("sched");
                self.dispatch_ready()?;
                self.link.pop_attribution();
                Ok(())
            }
            Action::SigReturn => {
                let frame = self.tcb_mut(tid).saved_frame.take().expect("checked by handler");
                {
                    let tcb = self.tcb_mut(tid);
                    tcb.regs = frame.regs;
                    tcb.pc = frame.pc;
                    tcb.sig_mask = frame.mask;
                }
                self.link.push_attribution("signal");
                let regs = self.tcb(tid).regs;
                for idx in 1..32u8 {
                    self.link.reg_write(core as u8, idx, regs[idx as usize])?;
                }
                self.link.pop_attribution();
                // Another pending signal may deliver immediately now that the
                // frame slot is free.
                self.resume_live(tid, core, frame.pc, None)
            }
        }
    }

    fn dispatch_syscall(
        &mut self,
        tid: Tid,
        core: usize,
        nr: u64,
        args: &[u64; 6],
        ev: &Event,
    ) -> Result<Action, RtError> {
        let r = match nr {
            SYS_EXIT => Action::Exit { code: args[0] as i32 & 0xff, group: false },
            SYS_EXIT_GROUP => Action::Exit { code: args[0] as i32 & 0xff, group: true },
            SYS_READ => self.sys_read(tid, args)?,
            SYS_WRITE => self.sys_write(core, args)?,
            SYS_READV => self.sys_readv(core, args)?,
            SYS_WRITEV => self.sys_writev(core, args)?,
            SYS_OPENAT => self.sys_openat(core, args)?,
            SYS_CLOSE => Action::Return(match self.fds.close(args[0] as i64) {
                Ok(()) => 0,
                Err(e) => e,
            }),
            SYS_FSTAT => self.sys_fstat(core, args)?,
            SYS_LSEEK => Action::Return(match self.fds.get(args[0] as i64) {
                Some(e) => fdtab::host_seek(&e.obj, args[1] as i64, args[2] as i64).unwrap_or_else(|e| e),
                None => -EBADF,
            }),
            SYS_BRK => {
                let flush = self.bound_cores();
                let mut ctx = vmctx!(self, core as u8, &flush);
                let b = self.space.brk(&mut ctx, args[0])?;
                Action::Return(b as i64)
            }
            SYS_MMAP => self.sys_mmap(core, args)?,
            SYS_MUNMAP => {
                let flush = self.bound_cores();
                let mut ctx = vmctx!(self, core as u8, &flush);
                Action::Return(self.space.munmap(&mut ctx, args[0], args[1])?)
            }
            SYS_MPROTECT => {
                let perms = prot_to_perms(args[2]);
                let flush = self.bound_cores();
                let mut ctx = vmctx!(self, core as u8, &flush);
                Action::Return(self.space.mprotect(&mut ctx, args[0], args[1], perms)?)
            }
            SYS_MSYNC => {
                let flush = self.bound_cores();
                let mut ctx = vmctx!(self, core as u8, &flush);
                Action::Return(self.space.msync(&mut ctx, args[0], args[1])?)
            }
            SYS_MREMAP => Action::Return(-ENOSYS),
            SYS_CLONE => self.sys_clone(core, args, ev)?,
            SYS_FUTEX => self.sys_futex(tid, core, args)?,
            SYS_SCHED_YIELD => Action::Yield,
            SYS_CLOCK_GETTIME => self.sys_clock_gettime(core, args)?,
            SYS_GETTIMEOFDAY => self.sys_gettimeofday(core, args)?,
            SYS_GETPID => Action::Return(TGID as i64),
            SYS_GETTID => Action::Return(tid as i64),
            SYS_SET_TID_ADDRESS => {
                self.tcb_mut(tid).clear_child_tid = args[0];
                Action::Return(tid as i64)
            }
            SYS_SET_ROBUST_LIST => Action::Return(0),
            SYS_RT_SIGACTION => self.sys_rt_sigaction(core, args)?,
            SYS_RT_SIGPROCMASK => self.sys_rt_sigprocmask(tid, core, args)?,
            SYS_RT_SIGRETURN => {
                if self.tcb(tid).saved_frame.is_none() {
                    Action::Return(-EINVAL)
                } else {
                    Action::SigReturn
                }
            }
            SYS_TGKILL => self.sys_tgkill(args)?,
            SYS_KILL => self.sys_kill(args)?,
            SYS_WAIT4 => Action::Return(-ECHILD),
            SYS_UNAME => self.sys_uname(core, args)?,
            SYS_GETRANDOM => self.sys_getrandom(core, args)?,
            SYS_PRLIMIT64 => self.sys_prlimit64(core, args)?,
            SYS_IOCTL => Action::Return(match self.fds.get(args[0] as i64) {
                // No terminal devices exist target-side.
                Some(_) => match args[1] {
                    0x5401..=0x5420 => -ENOTTY,
                    _ => -EINVAL,
                },
                None => -EBADF,
            }),
            SYS_FCNTL => self.sys_fcntl(args)?,
            _ => {
                if self.unknown_syscalls.insert(nr) {
                    eprintln!("fase: unknown syscall {nr}, returning -ENOSYS");
                }
                Action::Return(-ENOSYS)
            }
        };
        Ok(r)
    }

    fn read_cstr(&mut self, core: usize, vaddr: u64) -> Result<String, i64> {
        let mut out = Vec::new();
        let mut cur = vaddr;
        for _ in 0..16 {
            let page_end = (cur | 0xfff) + 1;
            let flush = self.bound_cores();
            let mut ctx = vmctx!(self, core as u8, &flush);
            let chunk = self.space.read_bytes(&mut ctx, cur, page_end - cur)?;
            if let Some(pos) = chunk.iter().position(|&b| b == 0) {
                out.extend_from_slice(&chunk[..pos]);
                return String::from_utf8(out).map_err(|_| -EINVAL);
            }
            out.extend_from_slice(&chunk);
            cur = page_end;
        }
        Err(-ENOENT)
    }

    fn sys_read(&mut self, tid: Tid, args: &[u64; 6]) -> Result<Action, RtError> {
        let (fd, buf, count) = (args[0] as i64, args[1], args[2] as usize);
        let count = count.min(1 << 20);
        let entry = match self.fds.get(fd) {
            Some(e) => e,
            None => return Ok(Action::Return(-EBADF)),
        };
        let obj = entry.obj.clone();
        if obj.borrow().is_blocking_read() {
            // Delegate to an auxiliary host thread; other threads keep running.
            let token = match (obj.borrow().kind, obj.borrow().file.as_ref()) {
                (FileKind::Stdin, None) => self.workers.submit_read_stdin(count),
                (_, Some(f)) => match f.try_clone() {
                    Ok(dup) => self.workers.submit_read_file(dup, count),
                    Err(_) => return Ok(Action::Return(-EIO)),
                },
                _ => return Ok(Action::Return(-EBADF)),
            };
            self.io_waits.insert(token, IoWait { tid, buf });
            return Ok(Action::BlockIo { token });
        }
        // Regular files never block on the host: handled inline.
        match fdtab::host_read(&obj, count) {
            Ok(data) => {
                if !data.is_empty() {
                    let flush = self.bound_cores();
                    let mut ctx = vmctx!(self, 0, &flush);
                    if let Err(e) = self.space.write_bytes(&mut ctx, buf, &data, true) {
                        return Ok(Action::Return(e));
                    }
                }
                Ok(Action::Return(data.len() as i64))
            }
            Err(e) => Ok(Action::Return(e)),
        }
    }

    fn sys_write(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let (fd, buf, count) = (args[0] as i64, args[1], args[2]);
        let count = count.min(1 << 20);
        let entry = match self.fds.get(fd) {
            Some(e) => e.obj.clone(),
            None => return Ok(Action::Return(-EBADF)),
        };
        let data = {
            let flush = self.bound_cores();
            let mut ctx = vmctx!(self, core as u8, &flush);
            match self.space.read_bytes(&mut ctx, buf, count) {
                Ok(d) => d,
                Err(e) => return Ok(Action::Return(e)),
            }
        };
        let kind = entry.borrow().kind;
        let r = match kind {
            FileKind::Stdout => self.stdout.write(&data, false).map(|_| data.len() as i64).map_err(|_| -EIO),
            FileKind::Stderr => self.stderr.write(&data, true).map(|_| data.len() as i64).map_err(|_| -EIO),
            _ => {
                let mut sink_out = std::io::sink();
                let mut sink_err = std::io::sink();
                fdtab::host_write(&entry, &data, &mut sink_out, &mut sink_err)
            }
        };
        Ok(Action::Return(r.unwrap_or_else(|e| e)))
    }

    fn read_iovec(&mut self, core: usize, iov: u64, cnt: u64) -> Result<Vec<(u64, u64)>, i64> {
        if cnt > 64 {
            return Err(-EINVAL);
        }
        let flush = self.bound_cores();
        let mut ctx = vmctx!(self, core as u8, &flush);
        let raw = self.space.read_bytes(&mut ctx, iov, cnt * 16)?;
        Ok((0..cnt as usize)
            .map(|i| {
                (
                    u64::from_le_bytes(raw[i * 16..i * 16 + 8].try_into().unwrap()),
                    u64::from_le_bytes(raw[i * 16 + 8..i * 16 + 16].try_into().unwrap()),
                )
            })
            .collect())
    }

    fn sys_writev(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let iovs = match self.read_iovec(core, args[1], args[2]) {
            Ok(v) => v,
            Err(e) => return Ok(Action::Return(e)),
        };
        let mut total = 0i64;
        for (base, len) in iovs {
            if len == 0 {
                continue;
            }
            match self.sys_write(core, &[args[0], base, len, 0, 0, 0])? {
                Action::Return(n) if n >= 0 => total += n,
                Action::Return(e) => return Ok(Action::Return(if total > 0 { total } else { e })),
                _ => unreachable!(),
            }
        }
        Ok(Action::Return(total))
    }

    fn sys_readv(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        // Vectored reads are served inline (regular files); blocking fds get
        // only the first iov delegated for simplicity of result plumbing.
        let iovs = match self.read_iovec(core, args[1], args[2]) {
            Ok(v) => v,
            Err(e) => return Ok(Action::Return(e)),
        };
        let entry = match self.fds.get(args[0] as i64) {
            Some(e) => e.obj.clone(),
            None => return Ok(Action::Return(-EBADF)),
        };
        if entry.borrow().is_blocking_read() {
            if let Some((base, len)) = iovs.first() {
                return self.sys_read(self.cores[core].unwrap(), &[args[0], *base, *len, 0, 0, 0]);
            }
            return Ok(Action::Return(0));
        }
        let mut total = 0i64;
        for (base, len) in iovs {
            if len == 0 {
                continue;
            }
            match self.sys_read(self.cores[core].unwrap(), &[args[0], base, len, 0, 0, 0])? {
                Action::Return(n) if n >= 0 => {
                    total += n;
                    if (n as u64) < len {
                        break;
                    }
                }
                Action::Return(e) => return Ok(Action::Return(if total > 0 { total } else { e })),
                _ => unreachable!(),
            }
        }
        Ok(Action::Return(total))
    }

    fn sys_openat(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let dirfd = args[0] as i64;
        let path = match self.read_cstr(core, args[1]) {
            Ok(p) => p,
            Err(e) => return Ok(Action::Return(e)),
        };
        if dirfd != AT_FDCWD && !path.starts_with('/') {
            return Ok(Action::Return(-EBADF));
        }
        let flags = args[2] as i32;
        let acc = flags & 0o3;
        let mut opts = OpenOptions::new();
        opts.read(acc == 0 || acc == 2).write(acc == 1 || acc == 2);
        if flags & 0o100 != 0 {
            opts.create(true);
            if acc == 0 {
                opts.write(true); // O_CREAT without write access still needs create perms host-side
            }
        }
        if flags & 0o1000 != 0 {
            opts.truncate(true);
        }
        if flags & 0o2000 != 0 {
            opts.append(true);
        }
        match opts.open(&path) {
            Ok(f) => Ok(Action::Return(self.fds.insert_file(f, path.into(), flags) as i64)),
            Err(e) => Ok(Action::Return(match e.kind() {
                std::io::ErrorKind::NotFound => -ENOENT,
                std::io::ErrorKind::PermissionDenied => -EACCES,
                _ => -EIO,
            })),
        }
    }

    fn sys_fstat(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let entry = match self.fds.get(args[0] as i64) {
            Some(e) => e.obj.clone(),
            None => return Ok(Action::Return(-EBADF)),
        };
        match fdtab::host_stat(&entry) {
            Ok(st) => {
                let bytes = fdtab::encode_stat(&st);
                let flush = self.bound_cores();
                let mut ctx = vmctx!(self, core as u8, &flush);
                match self.space.write_bytes(&mut ctx, args[1], &bytes, true) {
                    Ok(()) => Ok(Action::Return(0)),
                    Err(e) => Ok(Action::Return(e)),
                }
            }
            Err(e) => Ok(Action::Return(e)),
        }
    }

    fn sys_mmap(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let (addr, len, prot, flags, fd, off) = (args[0], args[1], args[2], args[3], args[4] as i64, args[5]);
        const MAP_SHARED: u64 = 1;
        const MAP_PRIVATE: u64 = 2;
        const MAP_FIXED: u64 = 0x10;
        const MAP_ANON: u64 = 0x20;
        let shared = flags & MAP_SHARED != 0;
        let private = flags & MAP_PRIVATE != 0;
        if shared == private {
            return Ok(Action::Return(-EINVAL));
        }
        if off % super::vm::PAGE != 0 {
            return Ok(Action::Return(-EINVAL));
        }
        let (kind, backing) = if flags & MAP_ANON != 0 {
            if shared {
                return Ok(Action::Return(-EINVAL)); // anonymous shared memory is out of scope
            }
            (SegKind::Anon, None)
        } else {
            let path = match self.fds.get(fd) {
                Some(e) => match e.obj.borrow().path.clone() {
                    Some(p) => p,
                    None => return Ok(Action::Return(-EBADF)),
                },
                None => return Ok(Action::Return(-EBADF)),
            };
            let fm = match self.registry.resolve(&path) {
                Ok(m) => m,
                Err(_) => return Ok(Action::Return(-ENOENT)),
            };
            let file_end = fm.borrow().content.len() as u64;
            let kind = if shared { SegKind::FileShared } else { SegKind::FilePrivate };
            (kind, Some(FileBacking { map: fm, offset: off, file_end }))
        };
        let perms = prot_to_perms(prot);
        let flush = self.bound_cores();
        let mut ctx = vmctx!(self, core as u8, &flush);
        let r = self.space.mmap(&mut ctx, addr, len, perms, flags & MAP_FIXED != 0, kind, backing)?;
        Ok(Action::Return(r))
    }

    fn sys_clone(&mut self, core: usize, args: &[u64; 6], ev: &Event) -> Result<Action, RtError> {
        const CLONE_VM: u64 = 0x100;
        const CLONE_SIGHAND: u64 = 0x800;
        const CLONE_THREAD: u64 = 0x10000;
        const CLONE_SETTLS: u64 = 0x80000;
        const CLONE_PARENT_SETTID: u64 = 0x10_0000;
        const CLONE_CHILD_CLEARTID: u64 = 0x20_0000;
        const CLONE_CHILD_SETTID: u64 = 0x100_0000;
        let flags = args[0];
        let required = CLONE_VM | CLONE_THREAD | CLONE_SIGHAND;
        if flags & required != required {
            // fork-style clones are out of scope
            return Ok(Action::Return(-ENOSYS));
        }
        let child_tid = self.next_tid;
        self.next_tid += 1;

        // Child inherits the parent's live register file.
        let mut regs = [0u64; 32];
        for idx in 1..32u8 {
            regs[idx as usize] = self.link.reg_read(core as u8, idx)?;
        }
        regs[10] = 0; // child returns 0
        regs[2] = args[1]; // child stack
        if flags & CLONE_SETTLS != 0 {
            regs[4] = args[3];
        }
        let mut child = Tcb::new(child_tid);
        child.regs = regs;
        child.pc = ev.epc.wrapping_add(4);
        child.sig_mask = self.tcb(self.cores[core].unwrap()).sig_mask;
        if flags & CLONE_CHILD_CLEARTID != 0 {
            child.clear_child_tid = args[4];
        }
        self.threads.insert(child_tid, child);

        let flush = self.bound_cores();
        if flags & CLONE_PARENT_SETTID != 0 && args[2] != 0 {
            let mut ctx = vmctx!(self, core as u8, &flush);
            let _ = self.space.write_u32(&mut ctx, args[2], child_tid as u32);
        }
        if flags & CLONE_CHILD_SETTID != 0 && args[4] != 0 {
            let mut ctx = vmctx!(self, core as u8, &flush);
            let _ = self.space.write_u32(&mut ctx, args[4], child_tid as u32);
        }
        // Free core or scheduler queue; the dispatch loop places it.
        self.ready.push_back(child_tid);
        Ok(Action::Return(child_tid as i64))
    }

    fn sys_futex(&mut self, tid: Tid, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let (uaddr, op, val, timeout) = (args[0], args[1], args[2], args[3]);
        match op & FUTEX_OP_MASK {
            FUTEX_WAIT => {
                if uaddr % 4 != 0 {
                    return Ok(Action::Return(-EINVAL));
                }
                let cur = {
                    let flush = self.bound_cores();
                    let mut ctx = vmctx!(self, core as u8, &flush);
                    match self.space.read_u32(&mut ctx, uaddr) {
                        Ok(v) => v,
                        Err(e) => return Ok(Action::Return(e)),
                    }
                };
                if cur != val as u32 {
                    return Ok(Action::Return(-EAGAIN));
                }
                // A waiter now exists: wakes on this address must reach the
                // host, so matching mask entries are cleared everywhere.
                for c in self.hfx.cores_holding(uaddr) {
                    self.link.hfutex(c as u8, HFutexAction::Clear, uaddr)?;
                    self.hfx.drop_vaddr(c, uaddr);
                }
                self.futexq.push(self.space.id, uaddr, tid);
                if timeout != 0 {
                    let flush = self.bound_cores();
                    let ts = {
                        let mut ctx = vmctx!(self, core as u8, &flush);
                        self.space.read_bytes(&mut ctx, timeout, 16)
                    };
                    match ts {
                        Ok(b) => {
                            let sec = u64::from_le_bytes(b[0..8].try_into().unwrap());
                            let nsec = u64::from_le_bytes(b[8..16].try_into().unwrap());
                            let now = self.now_ns()?;
                            let deadline_ns = now.saturating_add(sec.saturating_mul(1_000_000_000).saturating_add(nsec));
                            self.timed_waits.insert(tid, TimedWait { deadline_ns, uaddr });
                        }
                        Err(e) => {
                            self.futexq.remove_tid(self.space.id, uaddr, tid);
                            return Ok(Action::Return(e));
                        }
                    }
                }
                Ok(Action::BlockFutex { uaddr })
            }
            FUTEX_WAKE => {
                if uaddr % 4 != 0 {
                    return Ok(Action::Return(-EINVAL));
                }
                let n = self.wake_futex(uaddr, val)?;
                if n == 0 && self.cfg.hfutex {
                    // Nobody woke: arm the controller to absorb repeats on
                    // this core. Both addresses are recorded host-side.
                    if !self.hfx.is_recorded(core, uaddr) && !self.hfx.is_full(core) {
                        if let Some((paddr, ..)) = self.space.soft_translate(uaddr) {
                            if self.link.hfutex(core as u8, HFutexAction::Set, uaddr)? {
                                self.hfx.record(core, uaddr, paddr);
                            }
                        }
                    }
                }
                Ok(Action::Return(n as i64))
            }
            _ => Ok(Action::Return(-ENOSYS)),
        }
    }

    fn sys_clock_gettime(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let mono_ns = self.now_ns()?;
        let ns = match args[0] {
            0 => self.cfg.epoch_sec * 1_000_000_000 + mono_ns, // CLOCK_REALTIME
            1 | 4 | 5 | 6 => mono_ns,                          // MONOTONIC and friends
            _ => return Ok(Action::Return(-EINVAL)),
        };
        let mut buf = [0u8; 16];
        buf[0..8].copy_from_slice(&(ns / 1_000_000_000).to_le_bytes());
        buf[8..16].copy_from_slice(&(ns % 1_000_000_000).to_le_bytes());
        let flush = self.bound_cores();
        let mut ctx = vmctx!(self, core as u8, &flush);
        match self.space.write_bytes(&mut ctx, args[1], &buf, true) {
            Ok(()) => Ok(Action::Return(0)),
            Err(e) => Ok(Action::Return(e)),
        }
    }

    fn sys_gettimeofday(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let ns = self.cfg.epoch_sec * 1_000_000_000 + self.now_ns()?;
        let mut buf = [0u8; 16];
        buf[0..8].copy_from_slice(&(ns / 1_000_000_000).to_le_bytes());
        buf[8..16].copy_from_slice(&((ns % 1_000_000_000) / 1000).to_le_bytes());
        let flush = self.bound_cores();
        let mut ctx = vmctx!(self, core as u8, &flush);
        match self.space.write_bytes(&mut ctx, args[1], &buf, true) {
            Ok(()) => Ok(Action::Return(0)),
            Err(e) => Ok(Action::Return(e)),
        }
    }

    fn sys_rt_sigaction(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let (sig, act, oldact, size) = (args[0], args[1], args[2], args[3]);
        if size != 8 || sig == 0 || sig > 64 {
            return Ok(Action::Return(-EINVAL));
        }
        let sig = sig as u8;
        if (sig == 9 || sig == 19) && act != 0 {
            return Ok(Action::Return(-EINVAL));
        }
        let old = self.sigs.get(sig);
        if oldact != 0 {
            let mut buf = [0u8; 24];
            buf[0..8].copy_from_slice(&old.handler.to_le_bytes());
            buf[8..16].copy_from_slice(&old.flags.to_le_bytes());
            buf[16..24].copy_from_slice(&old.mask.to_le_bytes());
            let flush = self.bound_cores();
            let mut ctx = vmctx!(self, core as u8, &flush);
            if let Err(e) = self.space.write_bytes(&mut ctx, oldact, &buf, true) {
                return Ok(Action::Return(e));
            }
        }
        if act != 0 {
            let flush = self.bound_cores();
            let raw = {
                let mut ctx = vmctx!(self, core as u8, &flush);
                match self.space.read_bytes(&mut ctx, act, 24) {
                    Ok(b) => b,
                    Err(e) => return Ok(Action::Return(e)),
                }
            };
            let new = SigAction {
                handler: u64::from_le_bytes(raw[0..8].try_into().unwrap()),
                flags: u64::from_le_bytes(raw[8..16].try_into().unwrap()),
                mask: u64::from_le_bytes(raw[16..24].try_into().unwrap()),
            };
            self.sigs.set(sig, new);
        }
        Ok(Action::Return(0))
    }

    fn sys_rt_sigprocmask(&mut self, tid: Tid, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let (how, set, oldset, size) = (args[0], args[1], args[2], args[3]);
        if size != 8 {
            return Ok(Action::Return(-EINVAL));
        }
        let cur = self.tcb(tid).sig_mask;
        if oldset != 0 {
            let flush = self.bound_cores();
            let mut ctx = vmctx!(self, core as u8, &flush);
            if let Err(e) = self.space.write_u64(&mut ctx, oldset, cur) {
                return Ok(Action::Return(e));
            }
        }
        if set != 0 {
            let flush = self.bound_cores();
            let v = {
                let mut ctx = vmctx!(self, core as u8, &flush);
                match self.space.read_u64(&mut ctx, set) {
                    Ok(v) => v,
                    Err(e) => return Ok(Action::Return(e)),
                }
            };
            let tcb = self.tcb_mut(tid);
            tcb.sig_mask = match how {
                0 => cur | v,          // SIG_BLOCK
                1 => cur & !v,         // SIG_UNBLOCK
                2 => v,                // SIG_SETMASK
                _ => return Ok(Action::Return(-EINVAL)),
            };
        }
        Ok(Action::Return(0))
    }

    fn sys_tgkill(&mut self, args: &[u64; 6]) -> Result<Action, RtError> {
        let (tgid, tid, sig) = (args[0], args[1], args[2]);
        if tgid != TGID {
            return Ok(Action::Return(-ESRCH));
        }
        match self.threads.get_mut(&tid) {
            Some(t) if t.state != ThreadState::Zombie => {
                if sig == 0 {
                    return Ok(Action::Return(0));
                }
                if sig > 64 {
                    return Ok(Action::Return(-EINVAL));
                }
                t.pending.push_back(sig as u8);
                Ok(Action::Return(0))
            }
            _ => Ok(Action::Return(-ESRCH)),
        }
    }

    fn sys_kill(&mut self, args: &[u64; 6]) -> Result<Action, RtError> {
        let (pid, sig) = (args[0] as i64, args[1]);
        if pid != TGID as i64 && pid != 0 {
            return Ok(Action::Return(-ESRCH));
        }
        if sig == 0 {
            return Ok(Action::Return(0));
        }
        if sig > 64 {
            return Ok(Action::Return(-EINVAL));
        }
        // Process-directed: the first live thread that has not blocked it.
        let sig = sig as u8;
        let candidate = self
            .threads
            .values()
            .find(|t| t.state != ThreadState::Zombie && (t.sig_mask & (1u64 << (sig - 1))) == 0)
            .or_else(|| self.threads.values().find(|t| t.state != ThreadState::Zombie))
            .map(|t| t.tid);
        match candidate {
            Some(t) => {
                self.tcb_mut(t).pending.push_back(sig);
                Ok(Action::Return(0))
            }
            None => Ok(Action::Return(-ESRCH)),
        }
    }

    fn sys_uname(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let mut buf = [0u8; 65 * 6];
        for (i, s) in ["Linux", "fase", "6.1.0", "#1 SMP", "riscv64", "(none)"].iter().enumerate() {
            let b = s.as_bytes();
            buf[i * 65..i * 65 + b.len()].copy_from_slice(b);
        }
        let flush = self.bound_cores();
        let mut ctx = vmctx!(self, core as u8, &flush);
        match self.space.write_bytes(&mut ctx, args[0], &buf, true) {
            Ok(()) => Ok(Action::Return(0)),
            Err(e) => Ok(Action::Return(e)),
        }
    }

    fn sys_getrandom(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        let len = (args[1] as usize).min(1 << 20);
        let mut data = vec![0u8; len];
        self.prng.fill_bytes(&mut data);
        let flush = self.bound_cores();
        let mut ctx = vmctx!(self, core as u8, &flush);
        match self.space.write_bytes(&mut ctx, args[0], &data, true) {
            Ok(()) => Ok(Action::Return(len as i64)),
            Err(e) => Ok(Action::Return(e)),
        }
    }

    fn sys_prlimit64(&mut self, core: usize, args: &[u64; 6]) -> Result<Action, RtError> {
        const RLIMIT_STACK: u64 = 3;
        let old = args[3];
        if old != 0 {
            let (cur, max) = if args[1] == RLIMIT_STACK {
                (crate::loader::STACK_SIZE, crate::loader::STACK_SIZE)
            } else {
                (u64::MAX, u64::MAX)
            };
            let mut buf = [0u8; 16];
            buf[0..8].copy_from_slice(&cur.to_le_bytes());
            buf[8..16].copy_from_slice(&max.to_le_bytes());
            let flush = self.bound_cores();
            let mut ctx = vmctx!(self, core as u8, &flush);
            if let Err(e) = self.space.write_bytes(&mut ctx, old, &buf, true) {
                return Ok(Action::Return(e));
            }
        }
        Ok(Action::Return(0))
    }

    fn sys_fcntl(&mut self, args: &[u64; 6]) -> Result<Action, RtError> {
        const F_DUPFD: u64 = 0;
        const F_GETFD: u64 = 1;
        const F_SETFD: u64 = 2;
        const F_GETFL: u64 = 3;
        const F_SETFL: u64 = 4;
        const F_DUPFD_CLOEXEC: u64 = 1030;
        let fd = args[0] as i64;
        let r = match args[1] {
            F_DUPFD => self.fds.dup(fd, args[2] as i32, false).map(|f| f as i64).unwrap_or_else(|e| e),
            F_DUPFD_CLOEXEC => self.fds.dup(fd, args[2] as i32, true).map(|f| f as i64).unwrap_or_else(|e| e),
            F_GETFD => match self.fds.get(fd) {
                Some(e) => e.cloexec as i64,
                None => -EBADF,
            },
            F_SETFD => match self.fds.set_cloexec(fd, args[2] & 1 != 0) {
                Ok(()) => 0,
                Err(e) => e,
            },
            F_GETFL => match self.fds.get(fd) {
                Some(e) => e.obj.borrow().flags as i64,
                None => -EBADF,
            },
            F_SETFL => match self.fds.get(fd) {
                Some(e) => {
                    e.obj.borrow_mut().flags = args[2] as i32;
                    0
                }
                None => -EBADF,
            },
            _ => -EINVAL,
        };
        Ok(Action::Return(r))
    }
}

fn prot_to_perms(prot: u64) -> Perms {
    Perms { r: prot & 1 != 0, w: prot & 2 != 0, x: prot & 4 != 0 }
}
