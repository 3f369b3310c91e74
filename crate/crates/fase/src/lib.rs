//! Desk-scale co-simulation of an FPGA-assisted syscall-emulation rig.
//!
//! The target side is a functional RV64 multi-core simulator fronted by a
//! hardware-controller model; the host side is a runtime that loads riscv64
//! Linux ELF workloads and services their system calls remotely. The two
//! halves talk exclusively through a byte-oriented host-target protocol over
//! a serial-timed transport, and every run produces deterministic
//! performance and traffic reports.

pub mod controller;
pub mod machine;
pub mod config;
pub mod loader;
pub mod report;
pub mod runtime;
pub mod selftest;
pub mod target;
pub mod transport;
pub mod wire;
