//! Byte-exact traffic accounting: totals, per-opcode counters (responses are
//! charged to the opcode they echo), and per-attribution counters driven by
//! the transport's attribution stack.

use std::collections::BTreeMap;

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct OpcodeCounters {
    pub frames_sent: u64,
    pub bytes_sent: u64,
    pub frames_received: u64,
    pub bytes_received: u64,
}

impl OpcodeCounters {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct TrafficLedger {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub opcodes: BTreeMap<u8, OpcodeCounters>,
    pub attributions: BTreeMap<String, u64>,
}

impl TrafficLedger {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }

    pub fn charge_sent(&mut self, frame: &[u8], attr: &str) {
        self.bytes_sent += frame.len() as u64;
        let op = self.opcodes.entry(frame[0]).or_default();
        op.frames_sent += 1;
        op.bytes_sent += frame.len() as u64;
        *self.attributions.entry(attr.to_string()).or_default() += frame.len() as u64;
    }

    pub fn charge_received(&mut self, frame: &[u8], attr: &str) {
        self.bytes_received += frame.len() as u64;
        let op = self.opcodes.entry(frame[0]).or_default();
        op.frames_received += 1;
        op.bytes_received += frame.len() as u64;
        *self.attributions.entry(attr.to_string()).or_default() += frame.len() as u64;
    }

    pub fn opcode_bytes(&self, opcode: u8) -> u64 {
        self.opcodes.get(&opcode).map(OpcodeCounters::total_bytes).unwrap_or(0)
    }

    pub fn opcode_frames_sent(&self, opcode: u8) -> u64 {
        self.opcodes.get(&opcode).map(|c| c.frames_sent).unwrap_or(0)
    }

    pub fn attribution_bytes(&self, label: &str) -> u64 {
        self.attributions.get(label).copied().unwrap_or(0)
    }

    /// Both partition invariants: opcode groups and attribution groups each
    /// sum to the byte total.
    pub fn reconciles(&self) -> bool {
        let total = self.total_bytes();
        let by_op: u64 = self.opcodes.values().map(OpcodeCounters::total_bytes).sum();
        let by_attr: u64 = self.attributions.values().sum();
        by_op == total && by_attr == total
    }
}
