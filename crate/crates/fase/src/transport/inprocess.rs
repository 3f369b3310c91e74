//! Deterministic in-process backend: the target machine lives inside the
//! channel and the shared simulated clock advances as bytes cross in either
//! direction.

use super::{Channel, ChannelConfig, ChannelError};
use crate::machine::{Machine, MachineConfig};
use crate::wire;

pub struct InProcessChannel {
    machine: Machine,
    cfg: ChannelConfig,
    rx: Vec<u8>,
    closed: bool,
}

/// Tick budget per waiting slice; bounds latency of deadlock detection only.
const SLICE_TICKS: u64 = 100_000;

impl InProcessChannel {
    pub fn new(mut mcfg: MachineConfig, cfg: ChannelConfig) -> Self {
        mcfg.bits_per_byte = cfg.frame.bits_per_byte();
        mcfg.baud = cfg.baud;
        InProcessChannel { machine: Machine::new(mcfg), cfg, rx: Vec::new(), closed: false }
    }

    /// Pop one complete response frame off the host-side receive buffer.
    fn take_frame(&mut self) -> Result<Option<Vec<u8>>, ChannelError> {
        if self.rx.len() < 2 {
            return Ok(None);
        }
        let echo = self.rx[0];
        let status = wire::Status::from_byte(self.rx[1])
            .ok_or_else(|| ChannelError::Desync(format!("bad status byte {:#04x}", self.rx[1])))?;
        let len = wire::response_len(echo, status)
            .ok_or_else(|| ChannelError::Desync(format!("bad echo opcode {echo:#04x}")))?;
        if self.rx.len() < len {
            return Ok(None);
        }
        let frame: Vec<u8> = self.rx.drain(..len).collect();
        Ok(Some(frame))
    }
}

impl Channel for InProcessChannel {
    fn submit(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        if self.closed {
            return Err(ChannelError::Closed);
        }
        self.machine.extra_latency(self.cfg.latency_extra).map_err(|e| ChannelError::TargetFatal(e.to_string()))?;
        let out = self.machine.feed(frame).map_err(|e| ChannelError::TargetFatal(e.to_string()))?;
        self.rx.extend_from_slice(&out);
        Ok(())
    }

    fn poll_response(&mut self) -> Result<Option<Vec<u8>>, ChannelError> {
        if self.closed {
            return Err(ChannelError::Closed);
        }
        self.take_frame()
    }

    fn wait_response(&mut self) -> Result<Vec<u8>, ChannelError> {
        if self.closed {
            return Err(ChannelError::Closed);
        }
        loop {
            if let Some(frame) = self.take_frame()? {
                return Ok(frame);
            }
            let out = self.machine.run_slice(SLICE_TICKS).map_err(|e| ChannelError::TargetFatal(e.to_string()))?;
            if out.is_empty() && !self.machine.can_make_progress() {
                return Err(ChannelError::Deadlock);
            }
            self.rx.extend_from_slice(&out);
        }
    }

    fn close(&mut self) {
        self.closed = true;
    }

    fn machine(&mut self) -> Option<&mut Machine> {
        Some(&mut self.machine)
    }
}
