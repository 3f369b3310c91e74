//! ELF64 loader for riscv64 Linux binaries: segment placement, initial
//! stack and auxiliary vector, dynamic-linker bootstrap, and file preloading
//! into target buffer pages.
//!
//! No ASLR: ET_DYN main binaries load at a fixed bias and the interpreter at
//! a fixed high base, so runs are reproducible byte for byte.

use std::path::{Path, PathBuf};
use std::rc::Rc;

use thiserror::Error;

use crate::runtime::vm::{
    page_down, page_up, AddressSpace, FileBacking, MapRegistry, Perms, SegKind, Segment, VmCtx, PAGE,
};
use crate::transport::Channel;
use rvasm::enc;

pub const ET_DYN_BIAS: u64 = 0x2_0000_0000;
pub const INTERP_BASE: u64 = 0x30_0000_0000;
pub const STACK_TOP: u64 = 0x3F_FFFF_F000;
pub const STACK_SIZE: u64 = 8 * 1024 * 1024;
/// Signal trampoline page: the last page of the Sv39 lower half.
pub const TRAMPOLINE_VADDR: u64 = 0x3F_FFFF_F000;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("io on {path}: {err}")]
    Io { path: PathBuf, err: String },
    #[error("not an ELF file")]
    BadMagic,
    #[error("not a 64-bit little-endian ELF")]
    BadClass,
    #[error("not a riscv64 binary (machine {0})")]
    BadMachine(u16),
    #[error("unsupported ELF type {0} (need ET_EXEC or ET_DYN)")]
    BadType(u16),
    #[error("malformed ELF: {0}")]
    Malformed(String),
    #[error("interpreter {0} not found (set libdir)")]
    MissingInterp(String),
    #[error("segment placement: {0}")]
    Placement(String),
    #[error("vm: {0}")]
    Vm(String),
    #[error("entry point {0:#x} is not in an executable segment")]
    EntryNotExecutable(u64),
}

struct Phdr {
    p_flags: u32,
    p_offset: u64,
    p_vaddr: u64,
    p_filesz: u64,
    p_memsz: u64,
}

struct ElfInfo {
    e_type: u16,
    entry: u64,
    phoff: u64,
    phentsize: u16,
    phnum: u16,
    loads: Vec<Phdr>,
    interp: Option<String>,
}

const PT_LOAD: u32 = 1;
const PT_INTERP: u32 = 3;
const EM_RISCV: u16 = 243;
const ET_EXEC: u16 = 2;
const ET_DYN: u16 = 3;

fn parse_elf(bytes: &[u8]) -> Result<ElfInfo, LoadError> {
    if bytes.len() < 64 {
        return Err(LoadError::BadMagic);
    }
    if &bytes[0..4] != b"\x7fELF" {
        return Err(LoadError::BadMagic);
    }
    if bytes[4] != 2 || bytes[5] != 1 {
        return Err(LoadError::BadClass);
    }
    let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let e_type = u16_at(16);
    let machine = u16_at(18);
    if machine != EM_RISCV {
        return Err(LoadError::BadMachine(machine));
    }
    if e_type != ET_EXEC && e_type != ET_DYN {
        return Err(LoadError::BadType(e_type));
    }
    let entry = u64_at(24);
    let phoff = u64_at(32);
    let phentsize = u16_at(54);
    let phnum = u16_at(56);
    if phentsize != 56 {
        return Err(LoadError::Malformed(format!("phentsize {phentsize}")));
    }
    let mut loads = Vec::new();
    let mut interp = None;
    for i in 0..phnum as usize {
        let o = phoff as usize + i * 56;
        if o + 56 > bytes.len() {
            return Err(LoadError::Malformed("program headers past end of file".into()));
        }
        let p_type = u32_at(o);
        let ph = Phdr {
            p_flags: u32_at(o + 4),
            p_offset: u64_at(o + 8),
            p_vaddr: u64_at(o + 16),
            p_filesz: u64_at(o + 32),
            p_memsz: u64_at(o + 40),
        };
        match p_type {
            PT_LOAD => {
                if ph.p_filesz > ph.p_memsz {
                    return Err(LoadError::Malformed("filesz exceeds memsz".into()));
                }
                if ph.p_offset % PAGE != ph.p_vaddr % PAGE {
                    return Err(LoadError::Malformed("offset/vaddr page misalignment".into()));
                }
                loads.push(ph);
            }
            PT_INTERP => {
                let start = ph.p_offset as usize;
                let end = start + ph.p_filesz as usize;
                if end > bytes.len() {
                    return Err(LoadError::Malformed("interp path past end of file".into()));
                }
                let raw = &bytes[start..end];
                let s = raw.split(|&b| b == 0).next().unwrap_or(raw);
                interp = Some(String::from_utf8_lossy(s).into_owned());
            }
            _ => {}
        }
    }
    if loads.is_empty() {
        return Err(LoadError::Malformed("no loadable segments".into()));
    }
    Ok(ElfInfo { e_type, entry, phoff, phentsize, phnum, loads, interp })
}

pub struct LoadedImage {
    /// Biased entry point of the main binary.
    pub entry: u64,
    /// Where execution starts: the interpreter entry when present.
    pub start_pc: u64,
    pub phdr_vaddr: u64,
    pub phnum: u64,
    pub phentsize: u64,
    pub interp_base: Option<u64>,
    pub initial_sp: u64,
    pub load_bias: u64,
    pub heap_base: u64,
    pub trampoline: u64,
}

pub struct LoaderConfig<'a> {
    pub libdir: Option<&'a Path>,
    /// Stage the binary's file pages into target buffer pages up front.
    pub preload: bool,
    pub argv: &'a [String],
    pub envp: &'a [String],
    /// Seeded bytes for AT_RANDOM.
    pub at_random: [u8; 16],
}

/// Place one parsed ELF's PT_LOAD segments at `bias`. Returns the highest
/// mapped address.
fn place_loads<C: Channel>(
    space: &mut AddressSpace,
    ctx: &mut VmCtx<C>,
    registry_map: &Rc<std::cell::RefCell<crate::runtime::vm::FileMap>>,
    info: &ElfInfo,
    bias: u64,
    preload: bool,
) -> Result<u64, LoadError> {
    let mut top = 0u64;
    for ph in &info.loads {
        let seg_base = page_down(bias + ph.p_vaddr);
        let seg_end = page_up(bias + ph.p_vaddr + ph.p_memsz);
        let perms = Perms { r: ph.p_flags & 4 != 0, w: ph.p_flags & 2 != 0, x: ph.p_flags & 1 != 0 };
        let backing = FileBacking {
            map: registry_map.clone(),
            offset: ph.p_offset - (ph.p_vaddr % PAGE),
            file_end: ph.p_offset + ph.p_filesz,
        };
        space
            .insert_segment(Segment {
                base: seg_base,
                len: seg_end - seg_base,
                kind: SegKind::FilePrivate,
                perms,
                file: Some(backing.clone()),
            })
            .map_err(LoadError::Placement)?;
        if preload && ph.p_filesz > 0 {
            let first = backing.offset / PAGE;
            let last = (backing.file_end - 1) / PAGE;
            for idx in first..=last {
                AddressSpace::ensure_buffer_page(ctx, registry_map, idx)
                    .map_err(|e| LoadError::Vm(e.to_string()))?;
            }
        }
        top = top.max(seg_end);
    }
    Ok(top)
}

/// Load a workload ELF (and its interpreter when dynamically linked), build
/// the initial stack, and install the signal trampoline.
pub fn load_elf<C: Channel>(
    space: &mut AddressSpace,
    ctx: &mut VmCtx<C>,
    registry: &mut MapRegistry,
    path: &Path,
    cfg: &LoaderConfig,
) -> Result<LoadedImage, LoadError> {
    let fm = registry.resolve(path).map_err(|e| LoadError::Io { path: path.to_path_buf(), err: e.to_string() })?;
    let info = {
        let content = &fm.borrow().content;
        parse_elf(content)?
    };
    let bias = if info.e_type == ET_DYN { ET_DYN_BIAS } else { 0 };
    let top = place_loads(space, ctx, &fm, &info, bias, cfg.preload)?;
    let entry = bias + info.entry;

    // AT_PHDR: the load segment containing the program headers.
    let phdr_vaddr = info
        .loads
        .iter()
        .find(|ph| info.phoff >= ph.p_offset && info.phoff < ph.p_offset + ph.p_filesz)
        .map(|ph| bias + ph.p_vaddr + (info.phoff - ph.p_offset))
        .unwrap_or(bias + info.phoff);

    // Interpreter bootstrap.
    let mut interp_base = None;
    let mut start_pc = entry;
    if let Some(interp_path) = &info.interp {
        let resolved = resolve_interp(interp_path, cfg.libdir)?;
        let ifm = registry
            .resolve(&resolved)
            .map_err(|e| LoadError::Io { path: resolved.clone(), err: e.to_string() })?;
        let iinfo = {
            let content = &ifm.borrow().content;
            parse_elf(content)?
        };
        if iinfo.interp.is_some() {
            return Err(LoadError::Malformed("interpreter itself requests an interpreter".into()));
        }
        place_loads(space, ctx, &ifm, &iinfo, INTERP_BASE, cfg.preload)?;
        interp_base = Some(INTERP_BASE);
        start_pc = INTERP_BASE + iinfo.entry;
    }

    // Entry must be executable.
    let entry_seg = space.find_segment(start_pc).ok_or(LoadError::EntryNotExecutable(start_pc))?;
    if !entry_seg.perms.x {
        return Err(LoadError::EntryNotExecutable(start_pc));
    }

    let heap_base = page_up(top);
    space.set_brk_base(heap_base);

    // Stack.
    space
        .insert_segment(Segment {
            base: STACK_TOP - STACK_SIZE,
            len: STACK_SIZE,
            kind: SegKind::Stack,
            perms: Perms::RW,
            file: None,
        })
        .map_err(LoadError::Placement)?;

    // Signal trampoline: call the handler address in t0, then rt_sigreturn.
    space
        .insert_segment(Segment {
            base: TRAMPOLINE_VADDR,
            len: PAGE,
            kind: SegKind::Anon,
            perms: Perms::RX,
            file: None,
        })
        .map_err(LoadError::Placement)?;
    let tramp: Vec<u8> = [enc::jalr(enc::RA, enc::T0, 0), enc::addi(enc::A7, enc::ZERO, 139), enc::ecall()]
        .iter()
        .flat_map(|w| w.to_le_bytes())
        .collect();
    space
        .write_bytes(ctx, TRAMPOLINE_VADDR, &tramp, false)
        .map_err(|e| LoadError::Vm(format!("trampoline write failed: errno {e}")))?;

    let image = LoadedImage {
        entry,
        start_pc,
        phdr_vaddr,
        phnum: info.phnum as u64,
        phentsize: info.phentsize as u64,
        interp_base,
        initial_sp: 0,
        load_bias: bias,
        heap_base,
        trampoline: TRAMPOLINE_VADDR,
    };
    let sp = build_stack(space, ctx, &image, cfg)?;
    Ok(LoadedImage { initial_sp: sp, ..image })
}

fn resolve_interp(requested: &str, libdir: Option<&Path>) -> Result<PathBuf, LoadError> {
    let literal = PathBuf::from(requested);
    if literal.exists() {
        return Ok(literal);
    }
    if let Some(dir) = libdir {
        if let Some(name) = literal.file_name() {
            let candidate = dir.join(name);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    Err(LoadError::MissingInterp(requested.to_string()))
}

// Auxiliary vector tags.
const AT_NULL: u64 = 0;
const AT_PHDR: u64 = 3;
const AT_PHENT: u64 = 4;
const AT_PHNUM: u64 = 5;
const AT_PAGESZ: u64 = 6;
const AT_BASE: u64 = 7;
const AT_FLAGS: u64 = 8;
const AT_ENTRY: u64 = 9;
const AT_UID: u64 = 11;
const AT_EUID: u64 = 12;
const AT_GID: u64 = 13;
const AT_EGID: u64 = 14;
const AT_HWCAP: u64 = 16;
const AT_CLKTCK: u64 = 17;
const AT_RANDOM: u64 = 25;

/// RV64 IMA hwcap bits (one bit per extension letter).
const HWCAP_IMA: u64 = (1 << 8) | (1 << 12) | 1;

/// Linux startup stack: strings and AT_RANDOM at the top, then auxv, envp
/// and argv pointer vectors with argc at a 16-byte-aligned sp.
fn build_stack<C: Channel>(
    space: &mut AddressSpace,
    ctx: &mut VmCtx<C>,
    image: &LoadedImage,
    cfg: &LoaderConfig,
) -> Result<u64, LoadError> {
    let stack_end = STACK_TOP;
    let mut cursor = stack_end;

    struct Pending {
        vaddr: u64,
        bytes: Vec<u8>,
    }
    let mut writes: Vec<Pending> = Vec::new();

    let mut argv_ptrs = Vec::with_capacity(cfg.argv.len());
    for s in cfg.argv {
        cursor -= s.len() as u64 + 1;
        let mut b = s.as_bytes().to_vec();
        b.push(0);
        writes.push(Pending { vaddr: cursor, bytes: b });
        argv_ptrs.push(cursor);
    }
    let mut envp_ptrs = Vec::with_capacity(cfg.envp.len());
    for s in cfg.envp {
        cursor -= s.len() as u64 + 1;
        let mut b = s.as_bytes().to_vec();
        b.push(0);
        writes.push(Pending { vaddr: cursor, bytes: b });
        envp_ptrs.push(cursor);
    }
    cursor -= 16;
    let at_random = cursor;
    writes.push(Pending { vaddr: cursor, bytes: cfg.at_random.to_vec() });
    cursor &= !15;

    let auxv: Vec<(u64, u64)> = vec![
        (AT_PHDR, image.phdr_vaddr),
        (AT_PHENT, image.phentsize),
        (AT_PHNUM, image.phnum),
        (AT_PAGESZ, PAGE),
        (AT_BASE, image.interp_base.unwrap_or(0)),
        (AT_FLAGS, 0),
        (AT_ENTRY, image.entry),
        (AT_UID, 1000),
        (AT_EUID, 1000),
        (AT_GID, 1000),
        (AT_EGID, 1000),
        (AT_HWCAP, HWCAP_IMA),
        (AT_CLKTCK, 100),
        (AT_RANDOM, at_random),
        (AT_NULL, 0),
    ];

    let vec_words = 1 + (argv_ptrs.len() + 1) + (envp_ptrs.len() + 1) + 2 * auxv.len();
    let sp = (cursor - 8 * vec_words as u64) & !15;

    let mut vec_bytes = Vec::with_capacity(vec_words * 8);
    vec_bytes.extend_from_slice(&(cfg.argv.len() as u64).to_le_bytes());
    for p in &argv_ptrs {
        vec_bytes.extend_from_slice(&p.to_le_bytes());
    }
    vec_bytes.extend_from_slice(&0u64.to_le_bytes());
    for p in &envp_ptrs {
        vec_bytes.extend_from_slice(&p.to_le_bytes());
    }
    vec_bytes.extend_from_slice(&0u64.to_le_bytes());
    for (tag, value) in &auxv {
        vec_bytes.extend_from_slice(&tag.to_le_bytes());
        vec_bytes.extend_from_slice(&value.to_le_bytes());
    }
    writes.push(Pending { vaddr: sp, bytes: vec_bytes });

    for w in writes {
        space
            .write_bytes(ctx, w.vaddr, &w.bytes, false)
            .map_err(|e| LoadError::Vm(format!("stack write failed: errno {e}")))?;
    }
    Ok(sp)
}
