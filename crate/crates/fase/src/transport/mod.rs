//! Byte channel between the host runtime and the target controller, with a
//! serial timing model and traffic accounting.
//!
//! Backends: a deterministic in-process co-simulation channel, a local
//! stream socket (4-byte little-endian length prefix per frame), and a raw
//! serial character device. Host computation costs no simulated time; only
//! byte transfers and target execution advance the clock.

mod inprocess;
mod ledger;
mod serial;
mod socket;

pub use inprocess::InProcessChannel;
pub use ledger::{OpcodeCounters, TrafficLedger};
pub use serial::SerialChannel;
pub use socket::{serve_target_on, SocketChannel};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    None,
    Even,
    Odd,
}

/// Serial frame shape, e.g. 8N2 = 8 data bits, no parity, 2 stop bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameFormat {
    pub data_bits: u8,
    pub parity: Parity,
    pub stop_bits: u8,
}

impl FrameFormat {
    pub const EIGHT_N_TWO: FrameFormat = FrameFormat { data_bits: 8, parity: Parity::None, stop_bits: 2 };

    /// Start bit + data + parity (0 or 1) + stop bits.
    pub fn bits_per_byte(&self) -> u64 {
        let parity = match self.parity {
            Parity::None => 0,
            _ => 1,
        };
        1 + self.data_bits as u64 + parity + self.stop_bits as u64
    }

    pub fn parse(s: &str) -> Option<FrameFormat> {
        let bytes = s.as_bytes();
        if bytes.len() != 3 {
            return None;
        }
        let data_bits = (bytes[0] as char).to_digit(10)? as u8;
        if !(5..=9).contains(&data_bits) {
            return None;
        }
        let parity = match bytes[1] {
            b'N' | b'n' => Parity::None,
            b'E' | b'e' => Parity::Even,
            b'O' | b'o' => Parity::Odd,
            _ => return None,
        };
        let stop_bits = (bytes[2] as char).to_digit(10)? as u8;
        if !(1..=2).contains(&stop_bits) {
            return None;
        }
        Some(FrameFormat { data_bits, parity, stop_bits })
    }
}

impl std::fmt::Display for FrameFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = match self.parity {
            Parity::None => 'N',
            Parity::Even => 'E',
            Parity::Odd => 'O',
        };
        write!(f, "{}{}{}", self.data_bits, p, self.stop_bits)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelConfig {
    pub baud: u64,
    pub frame: FrameFormat,
    /// Fixed per-message overhead in seconds.
    pub latency_extra: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { baud: 921_600, frame: FrameFormat::EIGHT_N_TWO, latency_extra: 0.0 }
    }
}

/// Wall time to move `n_bytes` over the serial link.
pub fn frame_time(n_bytes: u64, cfg: &ChannelConfig) -> f64 {
    if n_bytes == 0 {
        return 0.0;
    }
    n_bytes as f64 * cfg.frame.bits_per_byte() as f64 / cfg.baud as f64 + cfg.latency_extra
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel closed")]
    Closed,
    #[error("timed out waiting for a response")]
    Timeout,
    #[error("i/o: {0}")]
    Io(String),
    #[error("protocol desync: {0}")]
    Desync(String),
    #[error("target fatal: {0}")]
    TargetFatal(String),
    #[error("deadlock: response pending but no core can run")]
    Deadlock,
}

impl From<std::io::Error> for ChannelError {
    fn from(e: std::io::Error) -> Self {
        ChannelError::Io(e.to_string())
    }
}

/// One logical endpoint of the host-target byte channel. Requests are whole
/// frames; responses come back as whole frames, possibly out of order with
/// respect to a parked Next (matched by echo opcode at a higher layer).
pub trait Channel {
    fn submit(&mut self, frame: &[u8]) -> Result<(), ChannelError>;
    fn poll_response(&mut self) -> Result<Option<Vec<u8>>, ChannelError>;
    fn wait_response(&mut self) -> Result<Vec<u8>, ChannelError>;
    fn close(&mut self);

    /// In-process backends expose the target for test oracles and stats.
    fn machine(&mut self) -> Option<&mut crate::machine::Machine> {
        None
    }
}

/// Channel wrapper that owns the traffic ledger and the attribution stack.
pub struct Transport<C: Channel> {
    pub chan: C,
    pub ledger: TrafficLedger,
    attr_stack: Vec<String>,
}

impl<C: Channel> Transport<C> {
    pub fn new(chan: C) -> Self {
        Transport { chan, ledger: TrafficLedger::default(), attr_stack: Vec::new() }
    }

    pub fn push_attribution(&mut self, label: &str) {
        self.attr_stack.push(label.to_string());
    }

    pub fn pop_attribution(&mut self) {
        self.attr_stack.pop().expect("attribution pop without matching push");
    }

    fn attr(&self) -> &str {
        self.attr_stack.last().map(String::as_str).unwrap_or("idle")
    }

    pub fn submit(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        let label = self.attr().to_string();
        self.ledger.charge_sent(frame, &label);
        self.chan.submit(frame)
    }

    pub fn poll_response(&mut self) -> Result<Option<Vec<u8>>, ChannelError> {
        match self.chan.poll_response()? {
            Some(frame) => {
                let label = self.attr().to_string();
                self.ledger.charge_received(&frame, &label);
                Ok(Some(frame))
            }
            None => Ok(None),
        }
    }

    pub fn wait_response(&mut self) -> Result<Vec<u8>, ChannelError> {
        let frame = self.chan.wait_response()?;
        let label = self.attr().to_string();
        self.ledger.charge_received(&frame, &label);
        Ok(frame)
    }

    /// Lockstep request/response; valid only while no Next is parked.
    pub fn exchange(&mut self, frame: &[u8]) -> Result<Vec<u8>, ChannelError> {
        self.submit(frame)?;
        self.wait_response()
    }
}

#[cfg(test)]
mod tests;
