//! RV64 instruction encoding, a tiny label-based assembler, and an ELF64
//! writer. Together these are enough to build the static riscv64 Linux
//! workloads used as test fixtures, without a cross toolchain.

pub mod asm;
pub mod elf;
pub mod enc;
pub mod workloads;

pub use asm::Asm;
pub use elf::{ElfBuilder, Section, ET_DYN, ET_EXEC, PF_R, PF_W, PF_X};
