//! Independent reference interpreter for the differential suite.
//!
//! Deliberately written as a separate, simpler machine: bare physical
//! addressing only, byte-addressed sparse memory, no TLB, no caches, no trap
//! plumbing. It halts at ecall/ebreak and reports anything else unexpected as
//! an error. Keep this file free of imports from the main target module so
//! the two execution paths stay independent.

use std::collections::HashMap;

pub struct RefSim {
    pub pc: u64,
    pub regs: [u64; 32],
    pub mem: HashMap<u64, u8>,
    reservation: Option<(u64, u64)>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum RefHalt {
    Ecall,
    Ebreak,
    Error(String),
}

impl RefSim {
    pub fn new(pc: u64) -> Self {
        RefSim { pc, regs: [0; 32], mem: HashMap::new(), reservation: None }
    }

    pub fn write_mem(&mut self, addr: u64, bytes: &[u8]) {
        for (i, b) in bytes.iter().enumerate() {
            self.mem.insert(addr + i as u64, *b);
        }
    }

    pub fn read_mem(&self, addr: u64, len: usize) -> Vec<u8> {
        (0..len).map(|i| *self.mem.get(&(addr + i as u64)).unwrap_or(&0)).collect()
    }

    fn x(&self, r: u32) -> u64 {
        if r == 0 {
            0
        } else {
            self.regs[r as usize]
        }
    }

    fn set_x(&mut self, r: u32, v: u64) {
        if r != 0 {
            self.regs[r as usize] = v;
        }
    }

    fn ld(&self, addr: u64, size: u64) -> u64 {
        let mut v: u64 = 0;
        for i in (0..size).rev() {
            v = (v << 8) | *self.mem.get(&(addr + i)).unwrap_or(&0) as u64;
        }
        v
    }

    fn st(&mut self, addr: u64, size: u64, v: u64) {
        for i in 0..size {
            self.mem.insert(addr + i, (v >> (8 * i)) as u8);
        }
        if let Some((ra, rs)) = self.reservation {
            if addr < ra + rs && ra < addr + size {
                self.reservation = None;
            }
        }
    }

    pub fn run(&mut self, max_steps: usize) -> RefHalt {
        for _ in 0..max_steps {
            match self.step() {
                None => {}
                Some(halt) => return halt,
            }
        }
        RefHalt::Error("step budget exhausted".into())
    }

    fn step(&mut self) -> Option<RefHalt> {
        let inst = self.ld(self.pc, 4) as u32;
        let op = inst & 0x7f;
        let rd = (inst >> 7) & 0x1f;
        let rs1 = (inst >> 15) & 0x1f;
        let rs2 = (inst >> 20) & 0x1f;
        let f3 = (inst >> 12) & 7;
        let f7 = inst >> 25;
        let i_imm = ((inst as i32) >> 20) as i64 as u64;
        let mut next = self.pc.wrapping_add(4);

        macro_rules! err {
            () => {
                return Some(RefHalt::Error(format!("unhandled inst {inst:#010x} at {:#x}", self.pc)))
            };
        }

        match op {
            0x37 => self.set_x(rd, (inst & 0xffff_f000) as i32 as i64 as u64),
            0x17 => self.set_x(rd, self.pc.wrapping_add((inst & 0xffff_f000) as i32 as i64 as u64)),
            0x6f => {
                let imm20 = (inst >> 31) & 1;
                let imm10_1 = (inst >> 21) & 0x3ff;
                let imm11 = (inst >> 20) & 1;
                let imm19_12 = (inst >> 12) & 0xff;
                let raw = (imm20 << 20) | (imm19_12 << 12) | (imm11 << 11) | (imm10_1 << 1);
                let off = ((raw as i64) << 43) >> 43;
                self.set_x(rd, self.pc.wrapping_add(4));
                next = self.pc.wrapping_add(off as u64);
            }
            0x67 => {
                let t = self.pc.wrapping_add(4);
                next = self.x(rs1).wrapping_add(i_imm) & !1u64;
                self.set_x(rd, t);
            }
            0x63 => {
                let a = self.x(rs1);
                let b = self.x(rs2);
                let taken = match f3 {
                    0 => a == b,
                    1 => a != b,
                    4 => (a as i64) < b as i64,
                    5 => (a as i64) >= b as i64,
                    6 => a < b,
                    7 => a >= b,
                    _ => err!(),
                };
                if taken {
                    let imm12 = (inst >> 31) & 1;
                    let imm10_5 = (inst >> 25) & 0x3f;
                    let imm4_1 = (inst >> 8) & 0xf;
                    let imm11 = (inst >> 7) & 1;
                    let raw = (imm12 << 12) | (imm11 << 11) | (imm10_5 << 5) | (imm4_1 << 1);
                    let off = ((raw as i64) << 51) >> 51;
                    next = self.pc.wrapping_add(off as u64);
                }
            }
            0x03 => {
                let addr = self.x(rs1).wrapping_add(i_imm);
                let v = match f3 {
                    0 => self.ld(addr, 1) as i8 as i64 as u64,
                    1 => self.ld(addr, 2) as i16 as i64 as u64,
                    2 => self.ld(addr, 4) as i32 as i64 as u64,
                    3 => self.ld(addr, 8),
                    4 => self.ld(addr, 1),
                    5 => self.ld(addr, 2),
                    6 => self.ld(addr, 4),
                    _ => err!(),
                };
                self.set_x(rd, v);
            }
            0x23 => {
                let raw = ((f7 << 5) | rd) as i64;
                let off = (raw << 52) >> 52;
                let addr = self.x(rs1).wrapping_add(off as u64);
                let size = match f3 {
                    0 => 1,
                    1 => 2,
                    2 => 4,
                    3 => 8,
                    _ => err!(),
                };
                self.st(addr, size, self.x(rs2));
            }
            0x13 => {
                let a = self.x(rs1);
                let sh = (inst >> 20) & 0x3f;
                let v = match f3 {
                    0 => a.wrapping_add(i_imm),
                    1 => a << sh,
                    2 => ((a as i64) < i_imm as i64) as u64,
                    3 => (a < i_imm) as u64,
                    4 => a ^ i_imm,
                    5 => {
                        if f7 & 0x20 != 0 {
                            ((a as i64) >> sh) as u64
                        } else {
                            a >> sh
                        }
                    }
                    6 => a | i_imm,
                    7 => a & i_imm,
                    _ => err!(),
                };
                self.set_x(rd, v);
            }
            0x1b => {
                let a = self.x(rs1) as u32;
                let sh = (inst >> 20) & 0x1f;
                let v: u64 = match f3 {
                    0 => a.wrapping_add(i_imm as u32) as i32 as i64 as u64,
                    1 => ((a << sh) as i32) as i64 as u64,
                    5 => {
                        if f7 & 0x20 != 0 {
                            ((a as i32) >> sh) as i64 as u64
                        } else {
                            ((a >> sh) as i32) as i64 as u64
                        }
                    }
                    _ => err!(),
                };
                self.set_x(rd, v);
            }
            0x33 | 0x3b => {
                let w = op == 0x3b;
                let a = self.x(rs1);
                let b = self.x(rs2);
                let v = if f7 == 1 {
                    self.muldiv(f3, a, b, w)
                } else {
                    let shmask = if w { 0x1f } else { 0x3f };
                    let raw = match (f7, f3) {
                        (0x00, 0) => {
                            if w {
                                (a as u32).wrapping_add(b as u32) as u64
                            } else {
                                a.wrapping_add(b)
                            }
                        }
                        (0x20, 0) => {
                            if w {
                                (a as u32).wrapping_sub(b as u32) as u64
                            } else {
                                a.wrapping_sub(b)
                            }
                        }
                        (0x00, 1) => {
                            if w {
                                ((a as u32) << (b & shmask)) as u64
                            } else {
                                a << (b & shmask)
                            }
                        }
                        (0x00, 2) => ((a as i64) < b as i64) as u64,
                        (0x00, 3) => (a < b) as u64,
                        (0x00, 4) => a ^ b,
                        (0x00, 5) => {
                            if w {
                                ((a as u32) >> (b & shmask)) as u64
                            } else {
                                a >> (b & shmask)
                            }
                        }
                        (0x20, 5) => {
                            if w {
                                ((a as u32 as i32) >> (b & shmask)) as u32 as u64
                            } else {
                                ((a as i64) >> (b & shmask)) as u64
                            }
                        }
                        (0x00, 6) => a | b,
                        (0x00, 7) => a & b,
                        _ => err!(),
                    };
                    if w {
                        raw as u32 as i32 as i64 as u64
                    } else {
                        raw
                    }
                };
                self.set_x(rd, v);
            }
            0x0f => {} // fences are no-ops here
            0x73 => {
                if inst == 0x73 {
                    return Some(RefHalt::Ecall);
                }
                if inst == 0x0010_0073 {
                    return Some(RefHalt::Ebreak);
                }
                err!()
            }
            0x2f => {
                let f5 = f7 >> 2;
                let size: u64 = match f3 {
                    2 => 4,
                    3 => 8,
                    _ => err!(),
                };
                let addr = self.x(rs1);
                if addr % size != 0 {
                    return Some(RefHalt::Error(format!("misaligned amo at {addr:#x}")));
                }
                let sext = |v: u64| if size == 4 { v as u32 as i32 as i64 as u64 } else { v };
                match f5 {
                    0x02 => {
                        let v = self.ld(addr, size);
                        self.reservation = Some((addr, size));
                        self.set_x(rd, sext(v));
                    }
                    0x03 => {
                        if self.reservation == Some((addr, size)) {
                            self.reservation = None;
                            self.st(addr, size, self.x(rs2));
                            self.set_x(rd, 0);
                        } else {
                            self.reservation = None;
                            self.set_x(rd, 1);
                        }
                    }
                    _ => {
                        let old = sext(self.ld(addr, size));
                        let b = self.x(rs2);
                        let new = match f5 {
                            0x01 => b,
                            0x00 => old.wrapping_add(b),
                            0x04 => old ^ b,
                            0x0c => old & b,
                            0x08 => old | b,
                            0x10 => {
                                if size == 4 {
                                    (old as i32).min(b as i32) as u64
                                } else {
                                    (old as i64).min(b as i64) as u64
                                }
                            }
                            0x14 => {
                                if size == 4 {
                                    (old as i32).max(b as i32) as u64
                                } else {
                                    (old as i64).max(b as i64) as u64
                                }
                            }
                            0x18 => {
                                if size == 4 {
                                    (old as u32).min(b as u32) as u64
                                } else {
                                    (old as u64).min(b)
                                }
                            }
                            0x1c => {
                                if size == 4 {
                                    (old as u32).max(b as u32) as u64
                                } else {
                                    (old as u64).max(b)
                                }
                            }
                            _ => err!(),
                        };
                        self.st(addr, size, new);
                        self.set_x(rd, old);
                    }
                }
            }
            _ => err!(),
        }
        self.pc = next;
        None
    }

    fn muldiv(&self, f3: u32, a: u64, b: u64, w: bool) -> u64 {
        if w {
            let (a, b) = (a as u32, b as u32);
            let v: u64 = match f3 {
                0 => (a.wrapping_mul(b) as i32) as i64 as u64,
                4 => {
                    let (a, b) = (a as i32, b as i32);
                    if b == 0 {
                        u64::MAX
                    } else if a == i32::MIN && b == -1 {
                        a as i64 as u64
                    } else {
                        a.wrapping_div(b) as i64 as u64
                    }
                }
                5 => {
                    if b == 0 {
                        u64::MAX
                    } else {
                        ((a / b) as i32) as i64 as u64
                    }
                }
                6 => {
                    let (a, b) = (a as i32, b as i32);
                    if b == 0 {
                        a as i64 as u64
                    } else if a == i32::MIN && b == -1 {
                        0
                    } else {
                        a.wrapping_rem(b) as i64 as u64
                    }
                }
                7 => {
                    if b == 0 {
                        (a as i32) as i64 as u64
                    } else {
                        ((a % b) as i32) as i64 as u64
                    }
                }
                _ => 0,
            };
            v
        } else {
            match f3 {
                0 => a.wrapping_mul(b),
                1 => (((a as i64 as i128).wrapping_mul(b as i64 as i128)) >> 64) as u64,
                2 => (((a as i64 as i128).wrapping_mul(b as i128 as i128 & 0xffff_ffff_ffff_ffff)) >> 64) as u64,
                3 => (((a as u128) * (b as u128)) >> 64) as u64,
                4 => {
                    let (a, b) = (a as i64, b as i64);
                    if b == 0 {
                        u64::MAX
                    } else if a == i64::MIN && b == -1 {
                        a as u64
                    } else {
                        a.wrapping_div(b) as u64
                    }
                }
                5 => {
                    if b == 0 {
                        u64::MAX
                    } else {
                        a / b
                    }
                }
                6 => {
                    let (a, b) = (a as i64, b as i64);
                    if b == 0 {
                        a as u64
                    } else if a == i64::MIN && b == -1 {
                        0
                    } else {
                        a.wrapping_rem(b) as u64
                    }
                }
                7 => {
                    if b == 0 {
                        a
                    } else {
                        a % b
                    }
                }
                _ => 0,
            }
        }
    }
}
