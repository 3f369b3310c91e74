//! Differential ISA validation: random RV64IMA programs run on both the
//! target simulator and an independently written reference interpreter, and
//! the final architectural state must match exactly.

pub mod refsim;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rvasm::enc::{self, Reg};

use crate::target::{self, CpuCore, PhysMemory, Reservations, StepOutcome, TrapCause};
use refsim::{RefHalt, RefSim};

const PROG_BASE: u64 = 0x8000_0000;
const BUF_BASE: u64 = 0x8001_0000;
const BUF_SIZE: u64 = 4096;
/// Base register for every generated memory access; never used as a
/// destination so all accesses stay inside the scratch buffer.
const BASE_REG: Reg = 5;

pub struct DiffReport {
    pub programs: usize,
    pub mismatches: Vec<(usize, String)>,
}

impl DiffReport {
    pub fn all_match(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Run `programs` generated programs of at most `max_len` instructions each.
pub fn run_differential(programs: usize, max_len: usize, seed: u64) -> DiffReport {
    let mut mismatches = Vec::new();
    for i in 0..programs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let prog = gen_program(&mut rng, max_len);
        let regs = gen_regs(&mut rng);
        if let Some(msg) = run_one(&prog, &regs) {
            mismatches.push((i, msg));
        }
    }
    DiffReport { programs, mismatches }
}

fn gen_regs(rng: &mut ChaCha8Rng) -> [u64; 32] {
    let mut regs = [0u64; 32];
    for r in regs.iter_mut().skip(1) {
        *r = rng.gen();
    }
    regs[BASE_REG as usize] = BUF_BASE;
    regs
}

fn rand_reg(rng: &mut ChaCha8Rng) -> Reg {
    rng.gen_range(0..32)
}

/// Destination register: anything but the protected access base.
fn rand_rd(rng: &mut ChaCha8Rng) -> Reg {
    loop {
        let r = rand_reg(rng);
        if r != BASE_REG {
            return r;
        }
    }
}

fn aligned_off(rng: &mut ChaCha8Rng, size: u64) -> i64 {
    // Must fit a 12-bit signed immediate; stay in [0, 2040].
    let slots = 2040 / size;
    (rng.gen_range(0..=slots) * size) as i64
}

fn gen_program(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<u32> {
    let body_len = rng.gen_range(max_len / 2..=max_len.saturating_sub(1).max(1));
    let mut prog = Vec::with_capacity(body_len + 1);
    for i in 0..body_len {
        prog.push(gen_inst(rng, i, body_len));
    }
    prog.push(enc::ecall());
    prog
}

fn gen_inst(rng: &mut ChaCha8Rng, index: usize, body_len: usize) -> u32 {
    let rd = rand_rd(rng);
    let rs1 = rand_reg(rng);
    let rs2 = rand_reg(rng);
    let imm = rng.gen_range(-2048..=2047i64);
    // Forward-only control flow keeps every program loop-free.
    let fwd_off = |rng: &mut ChaCha8Rng| {
        let target = rng.gen_range(index + 1..=body_len);
        ((target - index) * 4) as i64
    };
    match rng.gen_range(0..100u32) {
        0..=19 => match rng.gen_range(0..9u32) {
            0 => enc::addi(rd, rs1, imm),
            1 => enc::slti(rd, rs1, imm),
            2 => enc::sltiu(rd, rs1, imm),
            3 => enc::xori(rd, rs1, imm),
            4 => enc::ori(rd, rs1, imm),
            5 => enc::andi(rd, rs1, imm),
            6 => enc::slli(rd, rs1, rng.gen_range(0..64)),
            7 => enc::srli(rd, rs1, rng.gen_range(0..64)),
            _ => enc::srai(rd, rs1, rng.gen_range(0..64)),
        },
        20..=33 => match rng.gen_range(0..10u32) {
            0 => enc::add(rd, rs1, rs2),
            1 => enc::sub(rd, rs1, rs2),
            2 => enc::sll(rd, rs1, rs2),
            3 => enc::slt(rd, rs1, rs2),
            4 => enc::sltu(rd, rs1, rs2),
            5 => enc::xor(rd, rs1, rs2),
            6 => enc::srl(rd, rs1, rs2),
            7 => enc::sra(rd, rs1, rs2),
            8 => enc::or(rd, rs1, rs2),
            _ => enc::and(rd, rs1, rs2),
        },
        34..=43 => match rng.gen_range(0..8u32) {
            0 => enc::mul(rd, rs1, rs2),
            1 => enc::mulh(rd, rs1, rs2),
            2 => enc::mulhsu(rd, rs1, rs2),
            3 => enc::mulhu(rd, rs1, rs2),
            4 => enc::div(rd, rs1, rs2),
            5 => enc::divu(rd, rs1, rs2),
            6 => enc::rem(rd, rs1, rs2),
            _ => enc::remu(rd, rs1, rs2),
        },
        44..=53 => match rng.gen_range(0..14u32) {
            0 => enc::addiw(rd, rs1, imm),
            1 => enc::slliw(rd, rs1, rng.gen_range(0..32)),
            2 => enc::srliw(rd, rs1, rng.gen_range(0..32)),
            3 => enc::sraiw(rd, rs1, rng.gen_range(0..32)),
            4 => enc::addw(rd, rs1, rs2),
            5 => enc::subw(rd, rs1, rs2),
            6 => enc::sllw(rd, rs1, rs2),
            7 => enc::srlw(rd, rs1, rs2),
            8 => enc::sraw(rd, rs1, rs2),
            9 => enc::mulw(rd, rs1, rs2),
            10 => enc::divw(rd, rs1, rs2),
            11 => enc::divuw(rd, rs1, rs2),
            12 => enc::remw(rd, rs1, rs2),
            _ => enc::remuw(rd, rs1, rs2),
        },
        54..=65 => {
            let (size, f): (u64, fn(Reg, Reg, i64) -> u32) = match rng.gen_range(0..7u32) {
                0 => (1, enc::lb),
                1 => (1, enc::lbu),
                2 => (2, enc::lh),
                3 => (2, enc::lhu),
                4 => (4, enc::lw),
                5 => (4, enc::lwu),
                _ => (8, enc::ld),
            };
            f(rd, BASE_REG, aligned_off(rng, size))
        }
        66..=77 => {
            let (size, f): (u64, fn(Reg, Reg, i64) -> u32) = match rng.gen_range(0..4u32) {
                0 => (1, enc::sb),
                1 => (2, enc::sh),
                2 => (4, enc::sw),
                _ => (8, enc::sd),
            };
            f(rs2, BASE_REG, aligned_off(rng, size))
        }
        78..=85 => {
            // AMOs address through the protected base register directly
            // (offset 0), keeping generation one-instruction-per-slot.
            let wide = rng.gen_bool(0.5);
            let aq = rng.gen_bool(0.5);
            let rl = rng.gen_bool(0.5);
            let kind = rng.gen_range(0..9u32);
            if wide {
                match kind {
                    0 => enc::amoswap_d(rd, BASE_REG, rs2, aq, rl),
                    1 => enc::amoadd_d(rd, BASE_REG, rs2, aq, rl),
                    2 => enc::amoxor_d(rd, BASE_REG, rs2, aq, rl),
                    3 => enc::amoand_d(rd, BASE_REG, rs2, aq, rl),
                    4 => enc::amoor_d(rd, BASE_REG, rs2, aq, rl),
                    5 => enc::amomin_d(rd, BASE_REG, rs2, aq, rl),
                    6 => enc::amomax_d(rd, BASE_REG, rs2, aq, rl),
                    7 => enc::amominu_d(rd, BASE_REG, rs2, aq, rl),
                    _ => enc::amomaxu_d(rd, BASE_REG, rs2, aq, rl),
                }
            } else {
                match kind {
                    0 => enc::amoswap_w(rd, BASE_REG, rs2, aq, rl),
                    1 => enc::amoadd_w(rd, BASE_REG, rs2, aq, rl),
                    2 => enc::amoxor_w(rd, BASE_REG, rs2, aq, rl),
                    3 => enc::amoand_w(rd, BASE_REG, rs2, aq, rl),
                    4 => enc::amoor_w(rd, BASE_REG, rs2, aq, rl),
                    5 => enc::amomin_w(rd, BASE_REG, rs2, aq, rl),
                    6 => enc::amomax_w(rd, BASE_REG, rs2, aq, rl),
                    7 => enc::amominu_w(rd, BASE_REG, rs2, aq, rl),
                    _ => enc::amomaxu_w(rd, BASE_REG, rs2, aq, rl),
                }
            }
        }
        86..=89 => {
            let wide = rng.gen_bool(0.5);
            if rng.gen_bool(0.5) {
                if wide {
                    enc::lr_d(rd, BASE_REG, false, false)
                } else {
                    enc::lr_w(rd, BASE_REG, false, false)
                }
            } else if wide {
                enc::sc_d(rd, BASE_REG, rs2, false, false)
            } else {
                enc::sc_w(rd, BASE_REG, rs2, false, false)
            }
        }
        90..=93 => {
            if rng.gen_bool(0.5) {
                enc::lui(rd, rng.gen_range(0..1 << 20))
            } else {
                enc::auipc(rd, rng.gen_range(0..1 << 20))
            }
        }
        94..=97 => {
            let off = fwd_off(rng);
            match rng.gen_range(0..6u32) {
                0 => enc::beq(rs1, rs2, off),
                1 => enc::bne(rs1, rs2, off),
                2 => enc::blt(rs1, rs2, off),
                3 => enc::bge(rs1, rs2, off),
                4 => enc::bltu(rs1, rs2, off),
                _ => enc::bgeu(rs1, rs2, off),
            }
        }
        98 => enc::jal(rd, fwd_off(rng)),
        _ => {
            if rng.gen_bool(0.5) {
                enc::fence()
            } else {
                enc::fence_i()
            }
        }
    }
}

/// Execute one program on both machines; None means perfect agreement.
fn run_one(prog: &[u32], init_regs: &[u64; 32]) -> Option<String> {
    let max_steps = prog.len() * 2 + 16;

    // Target simulator side.
    let mut cpu = CpuCore::new();
    let mut mem = PhysMemory::new(PROG_BASE, 2 * 1024 * 1024);
    let mut res = Reservations::new(1);
    for (i, w) in prog.iter().enumerate() {
        mem.write_u32(PROG_BASE + 4 * i as u64, *w).unwrap();
    }
    for i in 1..32u8 {
        cpu.set_reg(i, init_regs[i as usize]);
    }
    cpu.resume_at(PROG_BASE);
    let mut halted = false;
    for t in 0..max_steps {
        match target::step(0, &mut cpu, &mut mem, &mut res, t as u64) {
            Ok(StepOutcome::Retired { .. }) => {}
            Ok(StepOutcome::Trapped(trap)) => {
                if trap.cause != TrapCause::EcallFromU {
                    return Some(format!("target trapped unexpectedly: {trap:?}"));
                }
                halted = true;
                break;
            }
            Ok(StepOutcome::Stalled) => return Some("target stalled".into()),
            Err(e) => return Some(format!("target fatal: {e}")),
        }
    }
    if !halted {
        return Some("target did not reach ecall".into());
    }

    // Reference side.
    let mut rs = RefSim::new(PROG_BASE);
    let prog_bytes: Vec<u8> = prog.iter().flat_map(|w| w.to_le_bytes()).collect();
    rs.write_mem(PROG_BASE, &prog_bytes);
    rs.regs = *init_regs;
    rs.regs[0] = 0;
    match rs.run(max_steps) {
        RefHalt::Ecall => {}
        other => return Some(format!("reference halted oddly: {other:?}")),
    }

    if rs.pc != cpu.trap_latch.unwrap().epc {
        return Some(format!("pc mismatch: ref {:#x} target {:#x}", rs.pc, cpu.trap_latch.unwrap().epc));
    }
    for r in 1..32u8 {
        if rs.regs[r as usize] != cpu.reg(r) {
            return Some(format!(
                "x{r} mismatch: ref {:#x} target {:#x}",
                rs.regs[r as usize],
                cpu.reg(r)
            ));
        }
    }
    let ref_buf = rs.read_mem(BUF_BASE, BUF_SIZE as usize);
    let mut tgt_buf = vec![0u8; BUF_SIZE as usize];
    mem.read_bytes(BUF_BASE, &mut tgt_buf).unwrap();
    if ref_buf != tgt_buf {
        let at = ref_buf.iter().zip(&tgt_buf).position(|(a, b)| a != b).unwrap();
        return Some(format!(
            "memory mismatch at buf+{at:#x}: ref {:#04x} target {:#04x}",
            ref_buf[at], tgt_buf[at]
        ));
    }
    None
}
