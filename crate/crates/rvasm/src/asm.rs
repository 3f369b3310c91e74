//! Two-pass assembler over the raw encoders: fixed-size items are laid out
//! first, then label references (branches, jumps, pc-relative addresses,
//! constant-pool loads) are patched in place.
//!
//! Programs are assembled into one contiguous byte image starting at a base
//! virtual address; data and code interleave freely. `li64` loads go through
//! an 8-byte constant pool appended at the end of the image so every item has
//! a fixed size in the first pass.

use std::collections::HashMap;

use crate::enc::{self, Reg};

#[derive(Debug, Clone)]
enum Fixup {
    /// B-type branch to `label`; `encode(offset)` closure index into BRANCH_KINDS.
    Branch { kind: BranchKind, rs1: Reg, rs2: Reg, label: String },
    /// jal rd, label
    Jal { rd: Reg, label: String },
    /// auipc rd, %hi(label); addi rd, rd, %lo  (two consecutive words)
    La { rd: Reg, label: String },
    /// auipc rd, %hi(pool); ld rd, %lo(pool)(rd)  (two consecutive words)
    PoolLd { rd: Reg, pool_idx: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Eq,
    Ne,
    Lt,
    Ge,
    Ltu,
    Geu,
}

pub struct Asm {
    base: u64,
    bytes: Vec<u8>,
    labels: HashMap<String, u64>,
    fixups: Vec<(usize, Fixup)>,
    pool: Vec<u64>,
    /// Extra zero-initialized bytes past the end of the image (bss).
    pub bss: u64,
}

impl Asm {
    pub fn new(base: u64) -> Self {
        Asm { base, bytes: Vec::new(), labels: HashMap::new(), fixups: Vec::new(), pool: Vec::new(), bss: 0 }
    }

    pub fn here(&self) -> u64 {
        self.base + self.bytes.len() as u64
    }

    pub fn label(&mut self, name: &str) {
        let addr = self.here();
        let prev = self.labels.insert(name.to_string(), addr);
        assert!(prev.is_none(), "duplicate label {name}");
    }

    pub fn addr_of(&self, name: &str) -> u64 {
        *self.labels.get(name).unwrap_or_else(|| panic!("unknown label {name}"))
    }

    pub fn inst(&mut self, word: u32) {
        self.bytes.extend_from_slice(&word.to_le_bytes());
    }

    pub fn insts(&mut self, words: &[u32]) {
        for &w in words {
            self.inst(w);
        }
    }

    pub fn data(&mut self, bytes: &[u8]) {
        self.bytes.extend_from_slice(bytes);
    }

    pub fn data_u32(&mut self, v: u32) {
        self.data(&v.to_le_bytes());
    }

    pub fn data_u64(&mut self, v: u64) {
        self.data(&v.to_le_bytes());
    }

    pub fn zero(&mut self, n: usize) {
        self.bytes.resize(self.bytes.len() + n, 0);
    }

    pub fn align(&mut self, align: u64) {
        while self.here() % align != 0 {
            self.bytes.push(0);
        }
    }

    /// Branch to a label (forward or backward).
    pub fn br(&mut self, kind: BranchKind, rs1: Reg, rs2: Reg, label: &str) {
        let at = self.bytes.len();
        self.inst(0);
        self.fixups.push((at, Fixup::Branch { kind, rs1, rs2, label: label.to_string() }));
    }

    pub fn beq(&mut self, rs1: Reg, rs2: Reg, l: &str) { self.br(BranchKind::Eq, rs1, rs2, l) }
    pub fn bne(&mut self, rs1: Reg, rs2: Reg, l: &str) { self.br(BranchKind::Ne, rs1, rs2, l) }
    pub fn blt(&mut self, rs1: Reg, rs2: Reg, l: &str) { self.br(BranchKind::Lt, rs1, rs2, l) }
    pub fn bge(&mut self, rs1: Reg, rs2: Reg, l: &str) { self.br(BranchKind::Ge, rs1, rs2, l) }
    pub fn bltu(&mut self, rs1: Reg, rs2: Reg, l: &str) { self.br(BranchKind::Ltu, rs1, rs2, l) }
    pub fn bgeu(&mut self, rs1: Reg, rs2: Reg, l: &str) { self.br(BranchKind::Geu, rs1, rs2, l) }
    pub fn beqz(&mut self, rs1: Reg, l: &str) { self.beq(rs1, enc::ZERO, l) }
    pub fn bnez(&mut self, rs1: Reg, l: &str) { self.bne(rs1, enc::ZERO, l) }
    pub fn bltz(&mut self, rs1: Reg, l: &str) { self.blt(rs1, enc::ZERO, l) }
    pub fn bgez(&mut self, rs1: Reg, l: &str) { self.bge(rs1, enc::ZERO, l) }

    /// Unconditional jump to label.
    pub fn j(&mut self, label: &str) {
        let at = self.bytes.len();
        self.inst(0);
        self.fixups.push((at, Fixup::Jal { rd: enc::ZERO, label: label.to_string() }));
    }

    /// Call a label, link in ra.
    pub fn call(&mut self, label: &str) {
        let at = self.bytes.len();
        self.inst(0);
        self.fixups.push((at, Fixup::Jal { rd: enc::RA, label: label.to_string() }));
    }

    pub fn ret(&mut self) {
        self.inst(enc::ret());
    }

    /// Load the address of a label (pc-relative, 2 instructions).
    pub fn la(&mut self, rd: Reg, label: &str) {
        let at = self.bytes.len();
        self.inst(0);
        self.inst(0);
        self.fixups.push((at, Fixup::La { rd, label: label.to_string() }));
    }

    /// Load a 12-bit-signed immediate.
    pub fn li(&mut self, rd: Reg, imm: i64) {
        if (-2048..=2047).contains(&imm) {
            self.inst(enc::addi(rd, enc::ZERO, imm));
        } else {
            self.li64(rd, imm as u64);
        }
    }

    /// Load an arbitrary 64-bit constant via the constant pool (2 instructions).
    pub fn li64(&mut self, rd: Reg, value: u64) {
        let idx = self.pool.len();
        self.pool.push(value);
        let at = self.bytes.len();
        self.inst(0);
        self.inst(0);
        self.fixups.push((at, Fixup::PoolLd { rd, pool_idx: idx }));
    }

    fn patch(&mut self, at: usize, word: u32) {
        self.bytes[at..at + 4].copy_from_slice(&word.to_le_bytes());
    }

    /// Resolve fixups and return (base, image bytes, bss size).
    pub fn finish(mut self) -> Program {
        // Constant pool sits 8-aligned after the last emitted byte.
        while self.bytes.len() % 8 != 0 {
            self.bytes.push(0);
        }
        let pool_base = self.base + self.bytes.len() as u64;
        for v in &self.pool {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }

        let fixups = std::mem::take(&mut self.fixups);
        for (at, fx) in fixups {
            let pc = self.base + at as u64;
            match fx {
                Fixup::Branch { kind, rs1, rs2, label } => {
                    let target = self.addr_of(&label);
                    let off = target.wrapping_sub(pc) as i64;
                    let word = match kind {
                        BranchKind::Eq => enc::beq(rs1, rs2, off),
                        BranchKind::Ne => enc::bne(rs1, rs2, off),
                        BranchKind::Lt => enc::blt(rs1, rs2, off),
                        BranchKind::Ge => enc::bge(rs1, rs2, off),
                        BranchKind::Ltu => enc::bltu(rs1, rs2, off),
                        BranchKind::Geu => enc::bgeu(rs1, rs2, off),
                    };
                    self.patch(at, word);
                }
                Fixup::Jal { rd, label } => {
                    let target = self.addr_of(&label);
                    let off = target.wrapping_sub(pc) as i64;
                    self.patch(at, enc::jal(rd, off));
                }
                Fixup::La { rd, label } => {
                    let target = self.addr_of(&label);
                    let (hi, lo) = pcrel_parts(pc, target);
                    self.patch(at, enc::auipc(rd, hi));
                    self.patch(at + 4, enc::addi(rd, rd, lo));
                }
                Fixup::PoolLd { rd, pool_idx } => {
                    let target = pool_base + 8 * pool_idx as u64;
                    let (hi, lo) = pcrel_parts(pc, target);
                    self.patch(at, enc::auipc(rd, hi));
                    self.patch(at + 4, enc::ld(rd, rd, lo));
                }
            }
        }

        Program { base: self.base, image: self.bytes, bss: self.bss, labels: self.labels }
    }
}

/// Split a pc-relative offset into auipc hi20 and i-type lo12 parts.
fn pcrel_parts(pc: u64, target: u64) -> (u32, i64) {
    let off = target.wrapping_sub(pc) as i64;
    assert!((-(1 << 31)..(1 << 31)).contains(&off), "pc-relative target out of range");
    let hi = (off + 0x800) >> 12;
    let lo = off - (hi << 12);
    ((hi as u32) & 0xfffff, lo)
}

pub struct Program {
    pub base: u64,
    pub image: Vec<u8>,
    pub bss: u64,
    pub labels: HashMap<String, u64>,
}

impl Program {
    pub fn addr_of(&self, name: &str) -> u64 {
        *self.labels.get(name).unwrap_or_else(|| panic!("unknown label {name}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enc::*;

    #[test]
    fn forward_and_backward_branches_resolve() {
        let mut a = Asm::new(0x1000);
        a.label("top");
        a.li(A0, 1);
        a.beqz(A0, "out");
        a.j("top");
        a.label("out");
        a.inst(ecall());
        let p = a.finish();
        // beqz at 0x1004 targets 0x100c (+8); j at 0x1008 targets 0x1000 (-8).
        let w1 = u32::from_le_bytes(p.image[4..8].try_into().unwrap());
        assert_eq!(w1, beq(A0, ZERO, 8));
        let w2 = u32::from_le_bytes(p.image[8..12].try_into().unwrap());
        assert_eq!(w2, jal(ZERO, -8));
    }

    #[test]
    fn pool_load_round_trip() {
        let mut a = Asm::new(0x4000);
        a.li64(A0, 0xdead_beef_cafe_f00d);
        a.inst(ecall());
        let p = a.finish();
        // auipc+ld pair followed by ecall, pool after.
        let pool_off = p.image.len() - 8;
        assert_eq!(&p.image[pool_off..], &0xdead_beef_cafe_f00du64.to_le_bytes());
    }
}
