//! Host-authoritative virtual memory: the software page table and segment
//! table, mirrored into Sv39 tables in target memory at syscall boundaries,
//! with copy-on-write and lazy materialization to keep wire traffic down.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use crate::runtime::errno::*;
use crate::runtime::link::{HtpClient, LinkError};
use crate::transport::Channel;

pub const PAGE: u64 = 4096;
/// Lazy-zero faults materialize the faulting page plus up to this many
/// following lazy pages of the same segment.
pub const PRELOAD_PAGES: u64 = 16;

pub fn page_down(v: u64) -> u64 {
    v & !(PAGE - 1)
}

pub fn page_up(v: u64) -> u64 {
    (v + PAGE - 1) & !(PAGE - 1)
}

#[derive(Debug, thiserror::Error)]
pub enum VmError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("target physical memory exhausted")]
    NoMemory,
}

/// Target物 physical page allocator: bump plus free list, fully deterministic.
pub struct PhysAllocator {
    next: u64,
    end: u64,
    free: Vec<u64>,
}

impl PhysAllocator {
    pub fn new(base: u64, size: u64) -> Self {
        PhysAllocator { next: base >> 12, end: (base + size) >> 12, free: Vec::new() }
    }

    pub fn alloc(&mut self) -> Result<u64, VmError> {
        if let Some(ppn) = self.free.pop() {
            return Ok(ppn);
        }
        if self.next >= self.end {
            return Err(VmError::NoMemory);
        }
        let ppn = self.next;
        self.next += 1;
        Ok(ppn)
    }

    pub fn release(&mut self, ppn: u64) {
        self.free.push(ppn);
    }

    pub fn pages_left(&self) -> u64 {
        self.end - self.next + self.free.len() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Perms {
    pub r: bool,
    pub w: bool,
    pub x: bool,
}

impl Perms {
    pub const RW: Perms = Perms { r: true, w: true, x: false };
    pub const R: Perms = Perms { r: true, w: false, x: false };
    pub const RX: Perms = Perms { r: true, w: false, x: true };

    pub fn allows(&self, access: Access) -> bool {
        match access {
            Access::Read => self.r,
            Access::Write => self.w,
            Access::Exec => self.x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
    Exec,
}

/// Host-side view of one mappable file: a content snapshot plus the target
/// buffer pages staged for it. Shared by every mapping of the same path.
pub struct FileMap {
    pub id: u64,
    pub path: PathBuf,
    pub content: Vec<u8>,
    /// file page index -> target ppn
    pub buffer_pages: BTreeMap<u64, u64>,
}

/// Registry of FileMaps keyed by canonical path, so two mappings of one file
/// share buffer pages.
#[derive(Default)]
pub struct MapRegistry {
    maps: BTreeMap<PathBuf, Rc<RefCell<FileMap>>>,
    next_id: u64,
}

impl MapRegistry {
    pub fn resolve(&mut self, path: &Path) -> std::io::Result<Rc<RefCell<FileMap>>> {
        let canon = path.canonicalize()?;
        if let Some(m) = self.maps.get(&canon) {
            return Ok(m.clone());
        }
        let content = std::fs::read(&canon)?;
        let id = self.next_id;
        self.next_id += 1;
        let fm = Rc::new(RefCell::new(FileMap { id, path: canon.clone(), content, buffer_pages: BTreeMap::new() }));
        self.maps.insert(canon, fm.clone());
        Ok(fm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegKind {
    Heap,
    Stack,
    FilePrivate,
    FileShared,
    Anon,
}

#[derive(Clone)]
pub struct FileBacking {
    pub map: Rc<RefCell<FileMap>>,
    /// Page-aligned file offset of the segment's first page.
    pub offset: u64,
    /// Exclusive file offset past which the segment reads as zero.
    pub file_end: u64,
}

#[derive(Clone)]
pub struct Segment {
    pub base: u64,
    pub len: u64,
    pub kind: SegKind,
    pub perms: Perms,
    pub file: Option<FileBacking>,
}

impl Segment {
    pub fn end(&self) -> u64 {
        self.base + self.len
    }

    pub fn contains(&self, vaddr: u64) -> bool {
        vaddr >= self.base && vaddr < self.end()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PageEntry {
    pub ppn: u64,
    pub perms: Perms,
    /// Write-protected shared page; first write allocates a private copy.
    pub cow: bool,
    /// Page is privately owned and returns to the allocator on unmap.
    pub owned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultFix {
    Resumed { materialized: u64 },
    Segfault,
}

/// Everything VM operations need from the runtime.
pub struct VmCtx<'a, C: Channel> {
    pub client: &'a mut HtpClient<C>,
    pub alloc: &'a mut PhysAllocator,
    /// Staging core for word/page requests (must be interrupted).
    pub cpu: u8,
    /// Cores whose TLBs must be flushed when the hardware tables change.
    pub flush_cores: &'a [u8],
}

const MMAP_FLOOR: u64 = 0x1_0000;
/// Highest valid Sv39 user page (also holds the signal trampoline).
pub const ADDRESS_SPACE_TOP: u64 = 0x40_0000_0000;

pub struct AddressSpace {
    pub id: u64,
    segments: Vec<Segment>,
    pub pages: BTreeMap<u64, PageEntry>,
    /// vpn -> PTE word currently materialized target-side.
    shadow: BTreeMap<u64, u64>,
    /// (level, vpn prefix) -> table ppn; level 1 tables key on vpn>>18,
    /// level 0 tables on vpn>>9.
    tables: BTreeMap<(u8, u64), u64>,
    pub root_ppn: u64,
    pub brk_base: u64,
    pub brk: u64,
    mmap_top: u64,
    /// Bumped whenever executable page content changes; cores re-sync their
    /// instruction stream when behind.
    pub code_epoch: u64,
    dirty: bool,
}

const PTE_V: u64 = 1 << 0;
const PTE_R: u64 = 1 << 1;
const PTE_W: u64 = 1 << 2;
const PTE_X: u64 = 1 << 3;
const PTE_U: u64 = 1 << 4;
const PTE_A: u64 = 1 << 6;
const PTE_D: u64 = 1 << 7;

impl AddressSpace {
    pub fn new<C: Channel>(id: u64, ctx: &mut VmCtx<C>) -> Result<Self, VmError> {
        let root_ppn = ctx.alloc.alloc()?;
        ctx.client.page_set(ctx.cpu, root_ppn, 0)?;
        Ok(AddressSpace {
            id,
            segments: Vec::new(),
            pages: BTreeMap::new(),
            shadow: BTreeMap::new(),
            tables: BTreeMap::new(),
            root_ppn,
            brk_base: 0,
            brk: 0,
            mmap_top: 0x3F_0000_0000,
            code_epoch: 0,
            dirty: false,
        })
    }

    pub fn satp(&self) -> u64 {
        (8u64 << 60) | self.root_ppn
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn find_segment(&self, vaddr: u64) -> Option<&Segment> {
        self.segments.iter().find(|s| s.contains(vaddr))
    }

    fn range_free(&self, base: u64, len: u64) -> bool {
        self.segments.iter().all(|s| base + len <= s.base || s.end() <= base)
    }

    /// Direct placement for the loader; refuses overlap.
    pub fn insert_segment(&mut self, seg: Segment) -> Result<(), String> {
        if seg.base % PAGE != 0 || seg.len % PAGE != 0 || seg.len == 0 {
            return Err(format!("segment {:#x}+{:#x} not page aligned", seg.base, seg.len));
        }
        if seg.base.saturating_add(seg.len) > ADDRESS_SPACE_TOP {
            return Err(format!("segment {:#x}+{:#x} beyond address space", seg.base, seg.len));
        }
        if !self.range_free(seg.base, seg.len) {
            return Err(format!("segment {:#x}+{:#x} overlaps an existing mapping", seg.base, seg.len));
        }
        self.segments.push(seg);
        self.segments.sort_by_key(|s| s.base);
        Ok(())
    }

    fn find_gap_top_down(&self, len: u64) -> Option<u64> {
        let mut ceiling = self.mmap_top;
        for seg in self.segments.iter().rev() {
            if seg.end() <= ceiling {
                if ceiling - seg.end() >= len {
                    return Some(ceiling - len);
                }
                ceiling = seg.base.min(ceiling);
            } else if seg.base < ceiling {
                ceiling = seg.base;
            }
        }
        if ceiling >= MMAP_FLOOR + len {
            Some(ceiling - len)
        } else {
            None
        }
    }

    /// mmap semantics: returns the mapped base or a negative errno.
    #[allow(clippy::too_many_arguments)]
    pub fn mmap<C: Channel>(
        &mut self,
        ctx: &mut VmCtx<C>,
        hint: u64,
        length: u64,
        perms: Perms,
        fixed: bool,
        kind: SegKind,
        file: Option<FileBacking>,
    ) -> Result<i64, VmError> {
        if length == 0 {
            return Ok(-EINVAL);
        }
        let len = page_up(length);
        let base = if fixed {
            if hint % PAGE != 0 || hint == 0 || hint.saturating_add(len) > ADDRESS_SPACE_TOP {
                return Ok(-EINVAL);
            }
            // MAP_FIXED replaces whatever was there; the hardware tables must
            // drop the old leaves before the range is handed out again.
            self.unmap_range(ctx, hint, len)?;
            self.materialize(ctx)?;
            hint
        } else if hint != 0 && hint % PAGE == 0 && hint >= MMAP_FLOOR && self.range_free(hint, len) {
            hint
        } else {
            match self.find_gap_top_down(len) {
                Some(b) => b,
                None => return Ok(-ENOMEM),
            }
        };
        let seg = Segment { base, len, kind, perms, file };
        self.segments.push(seg);
        self.segments.sort_by_key(|s| s.base);
        // Pages stay lazy; hardware tables change at fault time.
        Ok(base as i64)
    }

    /// Remove every mapping inside [addr, addr+len), splitting segments that
    /// straddle the edges. Owned pages return to the allocator.
    pub fn unmap_range<C: Channel>(&mut self, ctx: &mut VmCtx<C>, addr: u64, len: u64) -> Result<(), VmError> {
        let end = addr + len;
        let mut replaced: Vec<Segment> = Vec::new();
        for seg in std::mem::take(&mut self.segments) {
            if seg.end() <= addr || seg.base >= end {
                replaced.push(seg);
                continue;
            }
            // Leading remainder.
            if seg.base < addr {
                let mut head = seg.clone();
                head.len = addr - seg.base;
                replaced.push(head);
            }
            // Trailing remainder.
            if seg.end() > end {
                let mut tail = seg.clone();
                let cut = end - seg.base;
                tail.base = end;
                tail.len = seg.len - cut;
                if let Some(fb) = &mut tail.file {
                    fb.offset += cut;
                }
                replaced.push(tail);
            }
        }
        self.segments = replaced;
        self.segments.sort_by_key(|s| s.base);

        let vpns: Vec<u64> = self.pages.range(addr >> 12..end >> 12).map(|(v, _)| *v).collect();
        for vpn in vpns {
            let e = self.pages.remove(&vpn).unwrap();
            if e.owned {
                ctx.alloc.release(e.ppn);
            }
            self.dirty = true;
        }
        Ok(())
    }

    pub fn munmap<C: Channel>(&mut self, ctx: &mut VmCtx<C>, addr: u64, length: u64) -> Result<i64, VmError> {
        if addr % PAGE != 0 || length == 0 {
            return Ok(-EINVAL);
        }
        self.unmap_range(ctx, addr, page_up(length))?;
        self.materialize(ctx)?;
        Ok(0)
    }

    pub fn mprotect<C: Channel>(
        &mut self,
        ctx: &mut VmCtx<C>,
        addr: u64,
        length: u64,
        perms: Perms,
    ) -> Result<i64, VmError> {
        if addr % PAGE != 0 || length == 0 {
            return Ok(-EINVAL);
        }
        let end = addr + page_up(length);
        // The whole range must be mapped.
        let mut cursor = addr;
        while cursor < end {
            match self.find_segment(cursor) {
                Some(seg) => cursor = seg.end(),
                None => return Ok(-ENOMEM),
            }
        }
        // Split segments at the range edges, then retag the inner ones.
        self.split_segment_at(addr);
        self.split_segment_at(end);
        let mut became_exec = false;
        for seg in &mut self.segments {
            if seg.base >= addr && seg.end() <= end {
                if perms.x && !seg.perms.x {
                    became_exec = true;
                }
                seg.perms = perms;
            }
        }
        for (_, e) in self.pages.range_mut(addr >> 12..end >> 12) {
            e.perms = perms;
            self.dirty = true;
        }
        if became_exec {
            self.code_epoch += 1;
        }
        self.materialize(ctx)?;
        Ok(0)
    }

    fn split_segment_at(&mut self, addr: u64) {
        if addr % PAGE != 0 {
            return;
        }
        let mut out: Vec<Segment> = Vec::with_capacity(self.segments.len() + 1);
        for seg in std::mem::take(&mut self.segments) {
            if seg.contains(addr) && seg.base != addr {
                let cut = addr - seg.base;
                let mut head = seg.clone();
                head.len = cut;
                let mut tail = seg.clone();
                tail.base = addr;
                tail.len = seg.len - cut;
                if let Some(fb) = &mut tail.file {
                    fb.offset += cut;
                }
                out.push(head);
                out.push(tail);
            } else {
                out.push(seg);
            }
        }
        out.sort_by_key(|s| s.base);
        self.segments = out;
    }

    pub fn set_brk_base(&mut self, base: u64) {
        self.brk_base = base;
        self.brk = base;
    }

    /// brk(2): returns the (possibly unchanged) break.
    pub fn brk<C: Channel>(&mut self, ctx: &mut VmCtx<C>, new: u64) -> Result<u64, VmError> {
        if new == 0 || new < self.brk_base {
            return Ok(self.brk);
        }
        let cur_end = page_up(self.brk);
        let new_end = page_up(new);
        if new_end > cur_end {
            // Grow: the extension must be free.
            let grow_base = cur_end;
            let grow_len = new_end - cur_end;
            let heap_exists = self.segments.iter().any(|s| s.kind == SegKind::Heap);
            let blocked = self
                .segments
                .iter()
                .any(|s| s.kind != SegKind::Heap && grow_base < s.end() && s.base < grow_base + grow_len);
            if blocked {
                return Ok(self.brk);
            }
            if heap_exists {
                for seg in &mut self.segments {
                    if seg.kind == SegKind::Heap {
                        seg.len = new_end - seg.base;
                    }
                }
            } else if grow_len > 0 {
                self.segments.push(Segment {
                    base: grow_base,
                    len: grow_len,
                    kind: SegKind::Heap,
                    perms: Perms::RW,
                    file: None,
                });
                self.segments.sort_by_key(|s| s.base);
            }
        } else if new_end < cur_end {
            self.unmap_range(ctx, new_end, cur_end - new_end)?;
            for seg in &mut self.segments {
                if seg.kind == SegKind::Heap && new_end > seg.base {
                    seg.len = new_end - seg.base;
                }
            }
            self.segments.retain(|s| s.len > 0);
            self.materialize(ctx)?;
        }
        self.brk = new;
        Ok(self.brk)
    }

    fn pte_for(e: &PageEntry) -> u64 {
        let writable = e.perms.w && !e.cow;
        let mut flags = PTE_V | PTE_U | PTE_A;
        if e.perms.r {
            flags |= PTE_R;
        }
        if writable {
            flags |= PTE_W | PTE_D;
        }
        if e.perms.x {
            flags |= PTE_X;
        }
        (e.ppn << 10) | flags
    }

    /// Mirror the software table into the Sv39 tables in target memory.
    /// Word-granular diffs; fresh table pages are zeroed with PageSet.
    /// Flushes the TLBs of `ctx.flush_cores` when anything changed.
    pub fn materialize<C: Channel>(&mut self, ctx: &mut VmCtx<C>) -> Result<bool, VmError> {
        if !self.dirty {
            return Ok(false);
        }
        self.dirty = false;
        let desired: BTreeMap<u64, u64> = self.pages.iter().map(|(vpn, e)| (*vpn, Self::pte_for(e))).collect();
        let mut changed = false;

        // Drop stale leaves.
        let stale: Vec<u64> = self.shadow.keys().filter(|v| !desired.contains_key(v)).copied().collect();
        for vpn in stale {
            let l0 = self.tables[&(0, vpn >> 9)];
            ctx.client.mem_write(ctx.cpu, (l0 << 12) + (vpn & 0x1ff) * 8, 0)?;
            self.shadow.remove(&vpn);
            changed = true;
        }

        // Write new/updated leaves, growing the radix tree as needed.
        for (vpn, pte) in desired {
            if self.shadow.get(&vpn) == Some(&pte) {
                continue;
            }
            let l1 = match self.tables.get(&(1, vpn >> 18)) {
                Some(&p) => p,
                None => {
                    let p = ctx.alloc.alloc()?;
                    ctx.client.page_set(ctx.cpu, p, 0)?;
                    let slot = (self.root_ppn << 12) + ((vpn >> 18) & 0x1ff) * 8;
                    ctx.client.mem_write(ctx.cpu, slot, (p << 10) | PTE_V)?;
                    self.tables.insert((1, vpn >> 18), p);
                    p
                }
            };
            let l0 = match self.tables.get(&(0, vpn >> 9)) {
                Some(&p) => p,
                None => {
                    let p = ctx.alloc.alloc()?;
                    ctx.client.page_set(ctx.cpu, p, 0)?;
                    let slot = (l1 << 12) + ((vpn >> 9) & 0x1ff) * 8;
                    ctx.client.mem_write(ctx.cpu, slot, (p << 10) | PTE_V)?;
                    self.tables.insert((0, vpn >> 9), p);
                    p
                }
            };
            ctx.client.mem_write(ctx.cpu, (l0 << 12) + (vpn & 0x1ff) * 8, pte)?;
            self.shadow.insert(vpn, pte);
            changed = true;
        }

        if changed {
            let satp = self.satp();
            for &core in ctx.flush_cores {
                ctx.client.mmu_set(core, satp, true)?;
            }
        }
        Ok(changed)
    }

    fn content_page(fb: &FileBacking, vpn: u64, seg_base: u64) -> Box<[u8; PAGE as usize]> {
        let fm = fb.map.borrow();
        let mut page = Box::new([0u8; PAGE as usize]);
        let fpage = fb.offset + ((vpn << 12) - seg_base);
        for (i, b) in page.iter_mut().enumerate() {
            let fo = fpage + i as u64;
            if fo < fb.file_end && (fo as usize) < fm.content.len() {
                *b = fm.content[fo as usize];
            }
        }
        page
    }

    /// Stage one page of file content into a fresh target page.
    fn fill_from_file<C: Channel>(
        ctx: &mut VmCtx<C>,
        fb: &FileBacking,
        vpn: u64,
        seg_base: u64,
        ppn: u64,
    ) -> Result<(), VmError> {
        // Whole pages of pristine file content can come from a buffer page
        // with a single small frame instead of a 4 KiB transfer.
        let fpage = fb.offset + ((vpn << 12) - seg_base);
        if fpage % PAGE == 0 && fpage + PAGE <= fb.file_end {
            let buf_ppn = fb.map.borrow().buffer_pages.get(&(fpage / PAGE)).copied();
            if let Some(src) = buf_ppn {
                ctx.client.page_copy(ctx.cpu, src, ppn)?;
                return Ok(());
            }
        }
        let page = Self::content_page(fb, vpn, seg_base);
        if page.iter().all(|&b| b == 0) {
            ctx.client.page_set(ctx.cpu, ppn, 0)?;
        } else {
            ctx.client.page_write(ctx.cpu, ppn, page)?;
        }
        Ok(())
    }

    /// Ensure a shared buffer page exists for file page `fpage_idx`.
    pub fn ensure_buffer_page<C: Channel>(
        ctx: &mut VmCtx<C>,
        fm: &Rc<RefCell<FileMap>>,
        fpage_idx: u64,
    ) -> Result<u64, VmError> {
        if let Some(&ppn) = fm.borrow().buffer_pages.get(&fpage_idx) {
            return Ok(ppn);
        }
        let ppn = ctx.alloc.alloc()?;
        let mut page = Box::new([0u8; PAGE as usize]);
        {
            let fm = fm.borrow();
            let off = (fpage_idx * PAGE) as usize;
            for (i, b) in page.iter_mut().enumerate() {
                if off + i < fm.content.len() {
                    *b = fm.content[off + i];
                }
            }
        }
        if page.iter().all(|&b| b == 0) {
            ctx.client.page_set(ctx.cpu, ppn, 0)?;
        } else {
            ctx.client.page_write(ctx.cpu, ppn, page)?;
        }
        fm.borrow_mut().buffer_pages.insert(fpage_idx, ppn);
        Ok(ppn)
    }

    /// Service a target page fault. On success the hardware tables are
    /// already synchronized and the faulting access can be retried.
    pub fn handle_fault<C: Channel>(
        &mut self,
        ctx: &mut VmCtx<C>,
        vaddr: u64,
        access: Access,
    ) -> Result<FaultFix, VmError> {
        if vaddr >= ADDRESS_SPACE_TOP {
            return Ok(FaultFix::Segfault);
        }
        let vpn = vaddr >> 12;
        if let Some(entry) = self.pages.get(&vpn).copied() {
            // Materialized page faulted: only a COW break is recoverable.
            if access == Access::Write && entry.cow && entry.perms.w {
                let new_ppn = ctx.alloc.alloc()?;
                ctx.client.page_copy(ctx.cpu, entry.ppn, new_ppn)?;
                let e = self.pages.get_mut(&vpn).unwrap();
                e.ppn = new_ppn;
                e.cow = false;
                e.owned = true;
                if entry.perms.x {
                    self.code_epoch += 1;
                }
                self.dirty = true;
                self.materialize(ctx)?;
                return Ok(FaultFix::Resumed { materialized: 1 });
            }
            return Ok(FaultFix::Segfault);
        }

        let seg = match self.find_segment(vaddr) {
            Some(s) => s.clone(),
            None => return Ok(FaultFix::Segfault),
        };
        if !seg.perms.allows(access) {
            return Ok(FaultFix::Segfault);
        }

        let mut materialized = 0;
        match (&seg.file, seg.kind) {
            (Some(fb), SegKind::FileShared) => {
                let fpage = fb.offset + ((vpn << 12) - seg.base);
                if fpage % PAGE != 0 {
                    return Ok(FaultFix::Segfault);
                }
                let ppn = Self::ensure_buffer_page(ctx, &fb.map, fpage / PAGE)?;
                self.pages.insert(vpn, PageEntry { ppn, perms: seg.perms, cow: false, owned: false });
                materialized = 1;
            }
            (Some(fb), _) => {
                let fpage = fb.offset + ((vpn << 12) - seg.base);
                let pristine = fpage % PAGE == 0 && fpage + PAGE <= fb.file_end;
                let buffered = pristine && fb.map.borrow().buffer_pages.contains_key(&(fpage / PAGE));
                if buffered && !(access == Access::Write) {
                    // Share the buffer page; writable mappings get COW.
                    let ppn = fb.map.borrow().buffer_pages[&(fpage / PAGE)];
                    self.pages.insert(
                        vpn,
                        PageEntry { ppn, perms: seg.perms, cow: seg.perms.w, owned: false },
                    );
                } else {
                    let ppn = ctx.alloc.alloc()?;
                    Self::fill_from_file(ctx, fb, vpn, seg.base, ppn)?;
                    self.pages.insert(vpn, PageEntry { ppn, perms: seg.perms, cow: false, owned: true });
                }
                materialized = 1;
            }
            (None, _) => {
                // Lazy zero: materialize this page plus the next lazy ones.
                let seg_end_vpn = seg.end() >> 12;
                let mut batch = vec![vpn];
                let mut v = vpn + 1;
                while v < seg_end_vpn && batch.len() <= PRELOAD_PAGES as usize {
                    if !self.pages.contains_key(&v) {
                        batch.push(v);
                    }
                    v += 1;
                }
                for v in batch {
                    let ppn = ctx.alloc.alloc()?;
                    ctx.client.page_set(ctx.cpu, ppn, 0)?;
                    self.pages.insert(v, PageEntry { ppn, perms: seg.perms, cow: false, owned: true });
                    materialized += 1;
                }
            }
        }
        if seg.perms.x {
            self.code_epoch += 1;
        }
        self.dirty = true;
        self.materialize(ctx)?;
        Ok(FaultFix::Resumed { materialized })
    }

    /// Translate through the software table (host authoritative), without
    /// touching the wire. None for unmaterialized pages.
    pub fn soft_translate(&self, vaddr: u64) -> Option<(u64, Perms, bool)> {
        let e = self.pages.get(&(vaddr >> 12))?;
        Some(((e.ppn << 12) | (vaddr & (PAGE - 1)), e.perms, e.cow))
    }

    /// Read target bytes through the software table. Lazy pages cost zero
    /// wire bytes: their content is synthesized host-side.
    pub fn read_bytes<C: Channel>(&mut self, ctx: &mut VmCtx<C>, vaddr: u64, len: u64) -> Result<Vec<u8>, i64> {
        let mut out = Vec::with_capacity(len as usize);
        let mut cur = vaddr;
        let end = vaddr.checked_add(len).ok_or(-EFAULT)?;
        while cur < end {
            let page_end = page_down(cur) + PAGE;
            let chunk = page_end.min(end) - cur;
            let vpn = cur >> 12;
            if let Some(e) = self.pages.get(&vpn).copied() {
                if !e.perms.r {
                    return Err(-EFAULT);
                }
                let phys = (e.ppn << 12) | (cur & (PAGE - 1));
                if chunk == PAGE {
                    let page = ctx.client.page_read(ctx.cpu, e.ppn).map_err(|_| -EIO)?;
                    out.extend_from_slice(&page[..]);
                } else {
                    read_words(ctx, phys, chunk, &mut out).map_err(|_| -EIO)?;
                }
            } else {
                let seg = self.find_segment(cur).ok_or(-EFAULT)?;
                if !seg.perms.r {
                    return Err(-EFAULT);
                }
                match &seg.file {
                    Some(fb) => {
                        let page = Self::content_page(fb, vpn, seg.base);
                        let off = (cur & (PAGE - 1)) as usize;
                        out.extend_from_slice(&page[off..off + chunk as usize]);
                    }
                    None => out.extend(std::iter::repeat(0).take(chunk as usize)),
                }
            }
            cur += chunk;
        }
        Ok(out)
    }

    /// Write target bytes through the software table, materializing and
    /// COW-breaking as needed. `enforce_w` applies the user-visible write
    /// permission (syscalls writing into user buffers); loader-style writes
    /// bypass it.
    pub fn write_bytes<C: Channel>(
        &mut self,
        ctx: &mut VmCtx<C>,
        vaddr: u64,
        bytes: &[u8],
        enforce_w: bool,
    ) -> Result<(), i64> {
        let mut cur = vaddr;
        let end = vaddr.checked_add(bytes.len() as u64).ok_or(-EFAULT)?;
        let mut touched_exec = false;
        while cur < end {
            let page_end = page_down(cur) + PAGE;
            let chunk = page_end.min(end) - cur;
            let off = (cur - vaddr) as usize;
            let slice = &bytes[off..off + chunk as usize];
            let vpn = cur >> 12;

            let entry = match self.pages.get(&vpn).copied() {
                Some(e) => {
                    if enforce_w && !e.perms.w {
                        return Err(-EFAULT);
                    }
                    if e.cow {
                        // Host writes must not corrupt shared buffer pages.
                        let new_ppn = ctx.alloc.alloc().map_err(|_| -ENOMEM)?;
                        ctx.client.page_copy(ctx.cpu, e.ppn, new_ppn).map_err(|_| -EIO)?;
                        let em = self.pages.get_mut(&vpn).unwrap();
                        em.ppn = new_ppn;
                        em.cow = false;
                        em.owned = true;
                        self.dirty = true;
                        *em
                    } else {
                        e
                    }
                }
                None => {
                    let seg = self.find_segment(cur).ok_or(-EFAULT)?.clone();
                    if enforce_w && !seg.perms.w {
                        return Err(-EFAULT);
                    }
                    let ppn = ctx.alloc.alloc().map_err(|_| -ENOMEM)?;
                    if chunk == PAGE {
                        // Fully overwritten: skip content initialization.
                    } else {
                        match &seg.file {
                            Some(fb) => Self::fill_from_file(ctx, fb, vpn, seg.base, ppn).map_err(|_| -EIO)?,
                            None => ctx.client.page_set(ctx.cpu, ppn, 0).map_err(|_| -EIO)?,
                        }
                    }
                    let e = PageEntry { ppn, perms: seg.perms, cow: false, owned: true };
                    self.pages.insert(vpn, e);
                    self.dirty = true;
                    e
                }
            };

            let phys = (entry.ppn << 12) | (cur & (PAGE - 1));
            if chunk == PAGE {
                let mut page = Box::new([0u8; PAGE as usize]);
                page.copy_from_slice(slice);
                ctx.client.page_write(ctx.cpu, entry.ppn, page).map_err(|_| -EIO)?;
            } else {
                write_words(ctx, phys, slice).map_err(|_| -EIO)?;
            }
            if entry.perms.x {
                touched_exec = true;
            }
            cur += chunk;
        }
        if touched_exec {
            self.code_epoch += 1;
        }
        self.materialize(ctx).map_err(|_| -EIO)?;
        Ok(())
    }

    pub fn read_u64<C: Channel>(&mut self, ctx: &mut VmCtx<C>, vaddr: u64) -> Result<u64, i64> {
        let b = self.read_bytes(ctx, vaddr, 8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn read_u32<C: Channel>(&mut self, ctx: &mut VmCtx<C>, vaddr: u64) -> Result<u32, i64> {
        let b = self.read_bytes(ctx, vaddr, 4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn write_u64<C: Channel>(&mut self, ctx: &mut VmCtx<C>, vaddr: u64, v: u64) -> Result<(), i64> {
        self.write_bytes(ctx, vaddr, &v.to_le_bytes(), false)
    }

    pub fn write_u32<C: Channel>(&mut self, ctx: &mut VmCtx<C>, vaddr: u64, v: u32) -> Result<(), i64> {
        self.write_bytes(ctx, vaddr, &v.to_le_bytes(), false)
    }

    /// Write back shared file pages in [addr, addr+len) to the host file.
    pub fn msync<C: Channel>(&mut self, ctx: &mut VmCtx<C>, addr: u64, length: u64) -> Result<i64, VmError> {
        if addr % PAGE != 0 {
            return Ok(-EINVAL);
        }
        let end = addr + page_up(length);
        let mut cur = addr;
        while cur < end {
            let seg = match self.find_segment(cur) {
                Some(s) => s.clone(),
                None => {
                    cur += PAGE;
                    continue;
                }
            };
            if seg.kind == SegKind::FileShared {
                if let Some(fb) = &seg.file {
                    let stop = seg.end().min(end);
                    let mut v = cur;
                    while v < stop {
                        let vpn = v >> 12;
                        if let Some(e) = self.pages.get(&vpn) {
                            let page = ctx.client.page_read(ctx.cpu, e.ppn)?;
                            let fo = fb.offset + (v - seg.base);
                            let mut fm = fb.map.borrow_mut();
                            // Never grow the file past its original length.
                            let take = (fm.content.len() as u64).saturating_sub(fo).min(PAGE) as usize;
                            if take > 0 {
                                let fo = fo as usize;
                                fm.content[fo..fo + take].copy_from_slice(&page[..take]);
                                let path = fm.path.clone();
                                let content = fm.content.clone();
                                drop(fm);
                                std::fs::write(path, content).map_err(|e| {
                                    VmError::Link(LinkError::Desync(format!("msync write-back failed: {e}")))
                                })?;
                            }
                        }
                        v += PAGE;
                    }
                }
            }
            cur = seg.end().max(cur + PAGE);
        }
        Ok(0)
    }
}

/// Word-granular read of an arbitrary byte span (read adjoining words, slice
/// out the bytes).
fn read_words<C: Channel>(ctx: &mut VmCtx<C>, phys: u64, len: u64, out: &mut Vec<u8>) -> Result<(), LinkError> {
    let start = phys & !7;
    let end = (phys + len + 7) & !7;
    let mut bytes = Vec::with_capacity((end - start) as usize);
    let mut p = start;
    while p < end {
        bytes.extend_from_slice(&ctx.client.mem_read(ctx.cpu, p)?.to_le_bytes());
        p += 8;
    }
    let off = (phys - start) as usize;
    out.extend_from_slice(&bytes[off..off + len as usize]);
    Ok(())
}

/// Word-granular write with read-modify-write at unaligned edges.
fn write_words<C: Channel>(ctx: &mut VmCtx<C>, phys: u64, data: &[u8]) -> Result<(), LinkError> {
    let start = phys & !7;
    let end = (phys + data.len() as u64 + 7) & !7;
    let mut span = vec![0u8; (end - start) as usize];
    // Fetch edge words we only partially overwrite.
    if phys != start {
        span[..8].copy_from_slice(&ctx.client.mem_read(ctx.cpu, start)?.to_le_bytes());
    }
    let tail_word = end - 8;
    if phys + data.len() as u64 != end && (phys == start || tail_word != start) {
        let off = (tail_word - start) as usize;
        span[off..off + 8].copy_from_slice(&ctx.client.mem_read(ctx.cpu, tail_word)?.to_le_bytes());
    }
    let off = (phys - start) as usize;
    span[off..off + data.len()].copy_from_slice(data);
    let mut p = start;
    while p < end {
        let o = (p - start) as usize;
        ctx.client.mem_write(ctx.cpu, p, u64::from_le_bytes(span[o..o + 8].try_into().unwrap()))?;
        p += 8;
    }
    Ok(())
}
