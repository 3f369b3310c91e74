//! RV64IMA_Zicsr_Zifencei instruction word encoders.
//!
//! Register operands are plain architectural indices (0..=31). Immediates are
//! checked against their field widths and panic on overflow; callers assemble
//! trusted programs, so a panic is a build bug, not an input error.

pub type Reg = u8;

pub const ZERO: Reg = 0;
pub const RA: Reg = 1;
pub const SP: Reg = 2;
pub const GP: Reg = 3;
pub const TP: Reg = 4;
pub const T0: Reg = 5;
pub const T1: Reg = 6;
pub const T2: Reg = 7;
pub const S0: Reg = 8;
pub const S1: Reg = 9;
pub const A0: Reg = 10;
pub const A1: Reg = 11;
pub const A2: Reg = 12;
pub const A3: Reg = 13;
pub const A4: Reg = 14;
pub const A5: Reg = 15;
pub const A6: Reg = 16;
pub const A7: Reg = 17;
pub const S2: Reg = 18;
pub const S3: Reg = 19;
pub const S4: Reg = 20;
pub const S5: Reg = 21;
pub const S6: Reg = 22;
pub const S7: Reg = 23;
pub const S8: Reg = 24;
pub const S9: Reg = 25;
pub const S10: Reg = 26;
pub const S11: Reg = 27;
pub const T3: Reg = 28;
pub const T4: Reg = 29;
pub const T5: Reg = 30;
pub const T6: Reg = 31;

fn rchk(r: Reg) -> u32 {
    assert!(r < 32, "register index out of range: {r}");
    r as u32
}

fn imm12(imm: i64) -> u32 {
    assert!((-2048..=2047).contains(&imm), "imm12 out of range: {imm}");
    (imm as u32) & 0xfff
}

pub fn r_type(opcode: u32, funct3: u32, funct7: u32, rd: Reg, rs1: Reg, rs2: Reg) -> u32 {
    (funct7 << 25) | (rchk(rs2) << 20) | (rchk(rs1) << 15) | (funct3 << 12) | (rchk(rd) << 7) | opcode
}

pub fn i_type(opcode: u32, funct3: u32, rd: Reg, rs1: Reg, imm: i64) -> u32 {
    (imm12(imm) << 20) | (rchk(rs1) << 15) | (funct3 << 12) | (rchk(rd) << 7) | opcode
}

pub fn s_type(opcode: u32, funct3: u32, rs1: Reg, rs2: Reg, imm: i64) -> u32 {
    let imm = imm12(imm);
    ((imm >> 5) << 25) | (rchk(rs2) << 20) | (rchk(rs1) << 15) | (funct3 << 12) | ((imm & 0x1f) << 7) | opcode
}

pub fn b_type(opcode: u32, funct3: u32, rs1: Reg, rs2: Reg, offset: i64) -> u32 {
    assert!(offset % 2 == 0, "branch offset must be even");
    assert!((-4096..=4094).contains(&offset), "branch offset out of range: {offset}");
    let imm = offset as u32;
    (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3f) << 25)
        | (rchk(rs2) << 20)
        | (rchk(rs1) << 15)
        | (funct3 << 12)
        | (((imm >> 1) & 0xf) << 8)
        | (((imm >> 11) & 1) << 7)
        | opcode
}

pub fn u_type(opcode: u32, rd: Reg, imm20: u32) -> u32 {
    assert!(imm20 < (1 << 20), "imm20 out of range: {imm20}");
    (imm20 << 12) | (rchk(rd) << 7) | opcode
}

pub fn j_type(opcode: u32, rd: Reg, offset: i64) -> u32 {
    assert!(offset % 2 == 0, "jump offset must be even");
    assert!((-(1 << 20)..(1 << 20)).contains(&offset), "jump offset out of range: {offset}");
    let imm = offset as u32;
    (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3ff) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xff) << 12)
        | (rchk(rd) << 7)
        | opcode
}

// Base integer.
pub fn lui(rd: Reg, imm20: u32) -> u32 { u_type(0x37, rd, imm20) }
pub fn auipc(rd: Reg, imm20: u32) -> u32 { u_type(0x17, rd, imm20) }
pub fn jal(rd: Reg, offset: i64) -> u32 { j_type(0x6f, rd, offset) }
pub fn jalr(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x67, 0, rd, rs1, imm) }

pub fn beq(rs1: Reg, rs2: Reg, off: i64) -> u32 { b_type(0x63, 0, rs1, rs2, off) }
pub fn bne(rs1: Reg, rs2: Reg, off: i64) -> u32 { b_type(0x63, 1, rs1, rs2, off) }
pub fn blt(rs1: Reg, rs2: Reg, off: i64) -> u32 { b_type(0x63, 4, rs1, rs2, off) }
pub fn bge(rs1: Reg, rs2: Reg, off: i64) -> u32 { b_type(0x63, 5, rs1, rs2, off) }
pub fn bltu(rs1: Reg, rs2: Reg, off: i64) -> u32 { b_type(0x63, 6, rs1, rs2, off) }
pub fn bgeu(rs1: Reg, rs2: Reg, off: i64) -> u32 { b_type(0x63, 7, rs1, rs2, off) }

pub fn lb(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x03, 0, rd, rs1, imm) }
pub fn lh(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x03, 1, rd, rs1, imm) }
pub fn lw(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x03, 2, rd, rs1, imm) }
pub fn ld(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x03, 3, rd, rs1, imm) }
pub fn lbu(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x03, 4, rd, rs1, imm) }
pub fn lhu(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x03, 5, rd, rs1, imm) }
pub fn lwu(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x03, 6, rd, rs1, imm) }

pub fn sb(rs2: Reg, rs1: Reg, imm: i64) -> u32 { s_type(0x23, 0, rs1, rs2, imm) }
pub fn sh(rs2: Reg, rs1: Reg, imm: i64) -> u32 { s_type(0x23, 1, rs1, rs2, imm) }
pub fn sw(rs2: Reg, rs1: Reg, imm: i64) -> u32 { s_type(0x23, 2, rs1, rs2, imm) }
pub fn sd(rs2: Reg, rs1: Reg, imm: i64) -> u32 { s_type(0x23, 3, rs1, rs2, imm) }

pub fn addi(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x13, 0, rd, rs1, imm) }
pub fn slti(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x13, 2, rd, rs1, imm) }
pub fn sltiu(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x13, 3, rd, rs1, imm) }
pub fn xori(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x13, 4, rd, rs1, imm) }
pub fn ori(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x13, 6, rd, rs1, imm) }
pub fn andi(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x13, 7, rd, rs1, imm) }

pub fn slli(rd: Reg, rs1: Reg, shamt: u32) -> u32 {
    assert!(shamt < 64);
    (shamt << 20) | (rchk(rs1) << 15) | (1 << 12) | (rchk(rd) << 7) | 0x13
}
pub fn srli(rd: Reg, rs1: Reg, shamt: u32) -> u32 {
    assert!(shamt < 64);
    (shamt << 20) | (rchk(rs1) << 15) | (5 << 12) | (rchk(rd) << 7) | 0x13
}
pub fn srai(rd: Reg, rs1: Reg, shamt: u32) -> u32 {
    assert!(shamt < 64);
    (0x10 << 26) | (shamt << 20) | (rchk(rs1) << 15) | (5 << 12) | (rchk(rd) << 7) | 0x13
}

pub fn add(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 0, 0x00, rd, rs1, rs2) }
pub fn sub(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 0, 0x20, rd, rs1, rs2) }
pub fn sll(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 1, 0x00, rd, rs1, rs2) }
pub fn slt(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 2, 0x00, rd, rs1, rs2) }
pub fn sltu(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 3, 0x00, rd, rs1, rs2) }
pub fn xor(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 4, 0x00, rd, rs1, rs2) }
pub fn srl(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 5, 0x00, rd, rs1, rs2) }
pub fn sra(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 5, 0x20, rd, rs1, rs2) }
pub fn or(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 6, 0x00, rd, rs1, rs2) }
pub fn and(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 7, 0x00, rd, rs1, rs2) }

pub fn fence() -> u32 { 0x0ff0000f }
pub fn fence_i() -> u32 { 0x0000100f }
pub fn ecall() -> u32 { 0x00000073 }
pub fn ebreak() -> u32 { 0x00100073 }

// RV64I word forms.
pub fn addiw(rd: Reg, rs1: Reg, imm: i64) -> u32 { i_type(0x1b, 0, rd, rs1, imm) }
pub fn slliw(rd: Reg, rs1: Reg, shamt: u32) -> u32 {
    assert!(shamt < 32);
    (shamt << 20) | (rchk(rs1) << 15) | (1 << 12) | (rchk(rd) << 7) | 0x1b
}
pub fn srliw(rd: Reg, rs1: Reg, shamt: u32) -> u32 {
    assert!(shamt < 32);
    (shamt << 20) | (rchk(rs1) << 15) | (5 << 12) | (rchk(rd) << 7) | 0x1b
}
pub fn sraiw(rd: Reg, rs1: Reg, shamt: u32) -> u32 {
    assert!(shamt < 32);
    (0x20 << 25) | (shamt << 20) | (rchk(rs1) << 15) | (5 << 12) | (rchk(rd) << 7) | 0x1b
}
pub fn addw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 0, 0x00, rd, rs1, rs2) }
pub fn subw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 0, 0x20, rd, rs1, rs2) }
pub fn sllw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 1, 0x00, rd, rs1, rs2) }
pub fn srlw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 5, 0x00, rd, rs1, rs2) }
pub fn sraw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 5, 0x20, rd, rs1, rs2) }

// M extension.
pub fn mul(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 0, 0x01, rd, rs1, rs2) }
pub fn mulh(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 1, 0x01, rd, rs1, rs2) }
pub fn mulhsu(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 2, 0x01, rd, rs1, rs2) }
pub fn mulhu(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 3, 0x01, rd, rs1, rs2) }
pub fn div(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 4, 0x01, rd, rs1, rs2) }
pub fn divu(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 5, 0x01, rd, rs1, rs2) }
pub fn rem(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 6, 0x01, rd, rs1, rs2) }
pub fn remu(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x33, 7, 0x01, rd, rs1, rs2) }
pub fn mulw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 0, 0x01, rd, rs1, rs2) }
pub fn divw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 4, 0x01, rd, rs1, rs2) }
pub fn divuw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 5, 0x01, rd, rs1, rs2) }
pub fn remw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 6, 0x01, rd, rs1, rs2) }
pub fn remuw(rd: Reg, rs1: Reg, rs2: Reg) -> u32 { r_type(0x3b, 7, 0x01, rd, rs1, rs2) }

// A extension. funct5 in bits 31..27, aq bit 26, rl bit 25.
fn amo(funct5: u32, aq: bool, rl: bool, funct3: u32, rd: Reg, rs1: Reg, rs2: Reg) -> u32 {
    (funct5 << 27)
        | ((aq as u32) << 26)
        | ((rl as u32) << 25)
        | (rchk(rs2) << 20)
        | (rchk(rs1) << 15)
        | (funct3 << 12)
        | (rchk(rd) << 7)
        | 0x2f
}

pub fn lr_w(rd: Reg, rs1: Reg, aq: bool, rl: bool) -> u32 { amo(0x02, aq, rl, 2, rd, rs1, ZERO) }
pub fn sc_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x03, aq, rl, 2, rd, rs1, rs2) }
pub fn lr_d(rd: Reg, rs1: Reg, aq: bool, rl: bool) -> u32 { amo(0x02, aq, rl, 3, rd, rs1, ZERO) }
pub fn sc_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x03, aq, rl, 3, rd, rs1, rs2) }

pub fn amoswap_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x01, aq, rl, 2, rd, rs1, rs2) }
pub fn amoadd_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x00, aq, rl, 2, rd, rs1, rs2) }
pub fn amoxor_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x04, aq, rl, 2, rd, rs1, rs2) }
pub fn amoand_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x0c, aq, rl, 2, rd, rs1, rs2) }
pub fn amoor_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x08, aq, rl, 2, rd, rs1, rs2) }
pub fn amomin_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x10, aq, rl, 2, rd, rs1, rs2) }
pub fn amomax_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x14, aq, rl, 2, rd, rs1, rs2) }
pub fn amominu_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x18, aq, rl, 2, rd, rs1, rs2) }
pub fn amomaxu_w(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x1c, aq, rl, 2, rd, rs1, rs2) }

pub fn amoswap_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x01, aq, rl, 3, rd, rs1, rs2) }
pub fn amoadd_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x00, aq, rl, 3, rd, rs1, rs2) }
pub fn amoxor_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x04, aq, rl, 3, rd, rs1, rs2) }
pub fn amoand_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x0c, aq, rl, 3, rd, rs1, rs2) }
pub fn amoor_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x08, aq, rl, 3, rd, rs1, rs2) }
pub fn amomin_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x10, aq, rl, 3, rd, rs1, rs2) }
pub fn amomax_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x14, aq, rl, 3, rd, rs1, rs2) }
pub fn amominu_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x18, aq, rl, 3, rd, rs1, rs2) }
pub fn amomaxu_d(rd: Reg, rs1: Reg, rs2: Reg, aq: bool, rl: bool) -> u32 { amo(0x1c, aq, rl, 3, rd, rs1, rs2) }

// Zicsr.
pub fn csrrw(rd: Reg, csr: u32, rs1: Reg) -> u32 {
    assert!(csr < 4096);
    (csr << 20) | (rchk(rs1) << 15) | (1 << 12) | (rchk(rd) << 7) | 0x73
}
pub fn csrrs(rd: Reg, csr: u32, rs1: Reg) -> u32 {
    assert!(csr < 4096);
    (csr << 20) | (rchk(rs1) << 15) | (2 << 12) | (rchk(rd) << 7) | 0x73
}
pub fn csrrc(rd: Reg, csr: u32, rs1: Reg) -> u32 {
    assert!(csr < 4096);
    (csr << 20) | (rchk(rs1) << 15) | (3 << 12) | (rchk(rd) << 7) | 0x73
}

pub fn mv(rd: Reg, rs: Reg) -> u32 { addi(rd, rs, 0) }
pub fn nop() -> u32 { addi(ZERO, ZERO, 0) }
pub fn ret() -> u32 { jalr(ZERO, RA, 0) }
