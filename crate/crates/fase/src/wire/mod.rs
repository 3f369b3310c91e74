//! Bit-exact codec for the host-target protocol (HTP).
//!
//! Every frame starts with a single opcode byte; all multi-byte integers are
//! little-endian; frame lengths are fixed per opcode (plus, for page frames,
//! a fixed 4096-byte payload and big-endian CRC16 trailer). Responses echo
//! the request opcode followed by a status byte, so a deferred `Next`
//! response can interleave with other responses unambiguously.

pub mod crc;

use thiserror::Error;

pub const PAGE_SIZE: usize = 4096;

pub mod opcode {
    pub const REDIRECT: u8 = 0x01;
    pub const NEXT: u8 = 0x02;
    pub const MMU_SET: u8 = 0x03;
    pub const SYNC_I: u8 = 0x04;
    pub const HFUTEX: u8 = 0x05;
    pub const REG_READ: u8 = 0x10;
    pub const REG_WRITE: u8 = 0x11;
    pub const MEM_READ: u8 = 0x12;
    pub const MEM_WRITE: u8 = 0x13;
    pub const PAGE_SET: u8 = 0x20;
    pub const PAGE_COPY: u8 = 0x21;
    pub const PAGE_READ: u8 = 0x22;
    pub const PAGE_WRITE: u8 = 0x23;
    pub const TICK: u8 = 0x30;
    pub const UTICK: u8 = 0x31;
    pub const DIRECT_REG_ACCESS: u8 = 0x40;
    pub const DIRECT_INJECT: u8 = 0x41;
    pub const DIRECT_POLL: u8 = 0x42;
}

/// Poll-response sentinel causes (no architectural trap latched).
pub mod poll_cause {
    /// Core is executing; nothing to report.
    pub const RUNNING: u8 = 0xfe;
    /// Core is interrupted/parked but no trap is latched (reset state).
    pub const PARKED: u8 = 0xff;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HFutexAction {
    Set,
    Clear,
    ClearAll,
}

impl HFutexAction {
    fn to_byte(self) -> u8 {
        match self {
            HFutexAction::Set => 0,
            HFutexAction::Clear => 1,
            HFutexAction::ClearAll => 2,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(HFutexAction::Set),
            1 => Some(HFutexAction::Clear),
            2 => Some(HFutexAction::ClearAll),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HtpRequest {
    Redirect { cpu: u8, pc: u64 },
    Next,
    MmuSet { cpu: u8, satp: u64, flush_tlb: bool },
    SyncI { cpu: u8 },
    HFutex { cpu: u8, action: HFutexAction, vaddr: u64 },
    RegRead { cpu: u8, idx: u8 },
    RegWrite { cpu: u8, idx: u8, data: u64 },
    MemRead { cpu: u8, paddr: u64 },
    MemWrite { cpu: u8, paddr: u64, data: u64 },
    PageSet { cpu: u8, ppn: u64, value: u64 },
    PageCopy { cpu: u8, src_ppn: u64, dst_ppn: u64 },
    PageRead { cpu: u8, ppn: u64 },
    PageWrite { cpu: u8, ppn: u64, data: Box<[u8; PAGE_SIZE]> },
    Tick,
    UTick { cpu: u8 },
    DirectRegAccess { cpu: u8, idx: u8, wen: bool, data: u64 },
    DirectInject { cpu: u8, inst: u32 },
    DirectPoll { cpu: u8 },
}

impl HtpRequest {
    pub fn opcode(&self) -> u8 {
        use opcode::*;
        match self {
            HtpRequest::Redirect { .. } => REDIRECT,
            HtpRequest::Next => NEXT,
            HtpRequest::MmuSet { .. } => MMU_SET,
            HtpRequest::SyncI { .. } => SYNC_I,
            HtpRequest::HFutex { .. } => HFUTEX,
            HtpRequest::RegRead { .. } => REG_READ,
            HtpRequest::RegWrite { .. } => REG_WRITE,
            HtpRequest::MemRead { .. } => MEM_READ,
            HtpRequest::MemWrite { .. } => MEM_WRITE,
            HtpRequest::PageSet { .. } => PAGE_SET,
            HtpRequest::PageCopy { .. } => PAGE_COPY,
            HtpRequest::PageRead { .. } => PAGE_READ,
            HtpRequest::PageWrite { .. } => PAGE_WRITE,
            HtpRequest::Tick => TICK,
            HtpRequest::UTick { .. } => UTICK,
            HtpRequest::DirectRegAccess { .. } => DIRECT_REG_ACCESS,
            HtpRequest::DirectInject { .. } => DIRECT_INJECT,
            HtpRequest::DirectPoll { .. } => DIRECT_POLL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    BadOpcode = 1,
    CrcError = 2,
    BadCpu = 3,
    Unaligned = 4,
    /// Operation not legal in the core's current run state.
    BadState = 5,
    /// Direct-mode request with direct mode disabled.
    Disabled = 6,
    /// HFutex set rejected: the per-core mask cache is full.
    MaskFull = 7,
    /// Physical address/page outside target memory.
    BadAddress = 8,
    /// Inject slot already occupied.
    Busy = 9,
    /// Injected instruction class not allowed (branch/jump/trap).
    Rejected = 10,
}

impl Status {
    pub fn from_byte(b: u8) -> Option<Status> {
        Some(match b {
            0 => Status::Ok,
            1 => Status::BadOpcode,
            2 => Status::CrcError,
            3 => Status::BadCpu,
            4 => Status::Unaligned,
            5 => Status::BadState,
            6 => Status::Disabled,
            7 => Status::MaskFull,
            8 => Status::BadAddress,
            9 => Status::Busy,
            10 => Status::Rejected,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RespPayload {
    Empty,
    Word(u64),
    Event { cpu: u8, cause: u8, epc: u64, tval: u64 },
    Page(Box<[u8; PAGE_SIZE]>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtpResponse {
    pub echo: u8,
    pub status: Status,
    pub payload: RespPayload,
}

impl HtpResponse {
    pub fn ok(echo: u8, payload: RespPayload) -> Self {
        HtpResponse { echo, status: Status::Ok, payload }
    }

    pub fn err(echo: u8, status: Status) -> Self {
        HtpResponse { echo, status, payload: RespPayload::Empty }
    }
}

/// Payload shape of an Ok response, keyed by the echoed opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PayloadKind {
    Empty,
    Word,
    Event,
    Page,
}

fn ok_payload_kind(op: u8) -> Option<PayloadKind> {
    use opcode::*;
    Some(match op {
        REDIRECT | MMU_SET | SYNC_I | HFUTEX | REG_WRITE | MEM_WRITE | PAGE_SET | PAGE_COPY | PAGE_WRITE
        | DIRECT_INJECT => PayloadKind::Empty,
        REG_READ | MEM_READ | TICK | UTICK | DIRECT_REG_ACCESS => PayloadKind::Word,
        NEXT | DIRECT_POLL => PayloadKind::Event,
        PAGE_READ => PayloadKind::Page,
        _ => return None,
    })
}

/// Encoded request length (including the opcode byte), if the opcode is known.
pub fn request_len(op: u8) -> Option<usize> {
    use opcode::*;
    Some(match op {
        NEXT | TICK => 1,
        SYNC_I | UTICK | DIRECT_POLL => 2,
        REG_READ => 3,
        DIRECT_INJECT => 6,
        REDIRECT | MEM_READ | PAGE_READ => 10,
        MMU_SET | HFUTEX | REG_WRITE => 11,
        DIRECT_REG_ACCESS => 12,
        MEM_WRITE | PAGE_SET | PAGE_COPY => 18,
        PAGE_WRITE => 1 + 1 + 8 + PAGE_SIZE + 2,
        _ => return None,
    })
}

/// Encoded response length for (echo opcode, status). Error statuses carry an
/// empty payload, so length is a function of the first two bytes.
pub fn response_len(echo: u8, status: Status) -> Option<usize> {
    if status != Status::Ok {
        return Some(2);
    }
    Some(match ok_payload_kind(echo)? {
        PayloadKind::Empty => 2,
        PayloadKind::Word => 2 + 8,
        PayloadKind::Event => 2 + 1 + 1 + 8 + 8,
        PayloadKind::Page => 2 + PAGE_SIZE + 2,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("unknown opcode {opcode:#04x}")]
    BadOpcode { opcode: u8 },
    #[error("core id {cpu} out of range (cores: {cores})")]
    BadCpu { cpu: u8, cores: u8 },
    #[error("physical address {paddr:#x} not 8-byte aligned")]
    Unaligned { paddr: u64 },
    #[error("page payload CRC mismatch (got {got:#06x}, want {want:#06x})")]
    Crc { got: u16, want: u16 },
    #[error("physical page number {ppn:#x} exceeds 44 bits")]
    BadPpn { ppn: u64 },
    #[error("malformed field in frame for opcode {opcode:#04x}")]
    BadField { opcode: u8 },
}

impl WireError {
    /// The wire status a controller reports for this decode failure.
    pub fn status(&self) -> Status {
        match self {
            WireError::BadOpcode { .. } | WireError::BadField { .. } => Status::BadOpcode,
            WireError::BadCpu { .. } => Status::BadCpu,
            WireError::Unaligned { .. } => Status::Unaligned,
            WireError::Crc { .. } => Status::CrcError,
            WireError::BadPpn { .. } => Status::BadAddress,
        }
    }
}

/// Outcome of decoding one frame from the head of a byte buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded<T> {
    /// A complete frame was parsed; `consumed` bytes belong to it.
    Frame { msg: T, consumed: usize },
    /// The frame failed validation; `consumed` bytes should still be skipped
    /// (1 for an unknown opcode, the full frame otherwise).
    Invalid { error: WireError, opcode: u8, consumed: usize },
    /// The buffer holds only a partial frame; nothing was consumed.
    NeedMoreBytes,
}

/// HTP encoder/decoder. Carries the configured core count so that out-of-range
/// core ids are rejected on both encode and decode.
#[derive(Debug, Clone, Copy)]
pub struct Codec {
    pub cores: u8,
}

const PPN_LIMIT: u64 = 1 << 44;

impl Codec {
    pub fn new(cores: u8) -> Self {
        Codec { cores }
    }

    fn check_cpu(&self, cpu: u8) -> Result<(), WireError> {
        if cpu >= self.cores {
            Err(WireError::BadCpu { cpu, cores: self.cores })
        } else {
            Ok(())
        }
    }

    fn check_paddr(paddr: u64) -> Result<(), WireError> {
        if paddr % 8 != 0 {
            Err(WireError::Unaligned { paddr })
        } else {
            Ok(())
        }
    }

    fn check_ppn(ppn: u64) -> Result<(), WireError> {
        if ppn >= PPN_LIMIT {
            Err(WireError::BadPpn { ppn })
        } else {
            Ok(())
        }
    }

    pub fn encode_request(&self, req: &HtpRequest) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(18);
        out.push(req.opcode());
        match req {
            HtpRequest::Redirect { cpu, pc } => {
                self.check_cpu(*cpu)?;
                out.push(*cpu);
                out.extend_from_slice(&pc.to_le_bytes());
            }
            HtpRequest::Next | HtpRequest::Tick => {}
            HtpRequest::MmuSet { cpu, satp, flush_tlb } => {
                self.check_cpu(*cpu)?;
                out.push(*cpu);
                out.extend_from_slice(&satp.to_le_bytes());
                out.push(*flush_tlb as u8);
            }
            HtpRequest::SyncI { cpu } | HtpRequest::UTick { cpu } | HtpRequest::DirectPoll { cpu } => {
                self.check_cpu(*cpu)?;
                out.push(*cpu);
            }
            HtpRequest::HFutex { cpu, action, vaddr } => {
                self.check_cpu(*cpu)?;
                out.push(*cpu);
                out.push(action.to_byte());
                out.extend_from_slice(&vaddr.to_le_bytes());
            }
            HtpRequest::RegRead { cpu, idx } => {
                self.check_cpu(*cpu)?;
                check_reg_idx(*idx)?;
                out.push(*cpu);
                out.push(*idx);
            }
            HtpRequest::RegWrite { cpu, idx, data } => {
                self.check_cpu(*cpu)?;
                check_reg_idx(*idx)?;
                out.push(*cpu);
                out.push(*idx);
                out.extend_from_slice(&data.to_le_bytes());
            }
            HtpRequest::MemRead { cpu, paddr } => {
                self.check_cpu(*cpu)?;
                Self::check_paddr(*paddr)?;
                out.push(*cpu);
                out.extend_from_slice(&paddr.to_le_bytes());
            }
            HtpRequest::MemWrite { cpu, paddr, data } => {
                self.check_cpu(*cpu)?;
                Self::check_paddr(*paddr)?;
                out.push(*cpu);
                out.extend_from_slice(&paddr.to_le_bytes());
                out.extend_from_slice(&data.to_le_bytes());
            }
            HtpRequest::PageSet { cpu, ppn, value } => {
                self.check_cpu(*cpu)?;
                Self::check_ppn(*ppn)?;
                out.push(*cpu);
                out.extend_from_slice(&ppn.to_le_bytes());
                out.extend_from_slice(&value.to_le_bytes());
            }
            HtpRequest::PageCopy { cpu, src_ppn, dst_ppn } => {
                self.check_cpu(*cpu)?;
                Self::check_ppn(*src_ppn)?;
                Self::check_ppn(*dst_ppn)?;
                out.push(*cpu);
                out.extend_from_slice(&src_ppn.to_le_bytes());
                out.extend_from_slice(&dst_ppn.to_le_bytes());
            }
            HtpRequest::PageRead { cpu, ppn } => {
                self.check_cpu(*cpu)?;
                Self::check_ppn(*ppn)?;
                out.push(*cpu);
                out.extend_from_slice(&ppn.to_le_bytes());
            }
            HtpRequest::PageWrite { cpu, ppn, data } => {
                self.check_cpu(*cpu)?;
                Self::check_ppn(*ppn)?;
                out.push(*cpu);
                out.extend_from_slice(&ppn.to_le_bytes());
                out.extend_from_slice(&data[..]);
                out.extend_from_slice(&crc::crc16(&data[..]).to_be_bytes());
            }
            HtpRequest::DirectRegAccess { cpu, idx, wen, data } => {
                self.check_cpu(*cpu)?;
                check_reg_idx(*idx)?;
                out.push(*cpu);
                out.push(*idx);
                out.push(*wen as u8);
                out.extend_from_slice(&data.to_le_bytes());
            }
            HtpRequest::DirectInject { cpu, inst } => {
                self.check_cpu(*cpu)?;
                out.push(*cpu);
                out.extend_from_slice(&inst.to_le_bytes());
            }
        }
        debug_assert_eq!(out.len(), request_len(req.opcode()).unwrap());
        Ok(out)
    }

    pub fn decode_request(&self, bytes: &[u8]) -> Decoded<HtpRequest> {
        use opcode::*;
        if bytes.is_empty() {
            return Decoded::NeedMoreBytes;
        }
        let op = bytes[0];
        let len = match request_len(op) {
            Some(l) => l,
            None => return Decoded::Invalid { error: WireError::BadOpcode { opcode: op }, opcode: op, consumed: 1 },
        };
        if bytes.len() < len {
            return Decoded::NeedMoreBytes;
        }
        let b = &bytes[..len];
        let res: Result<HtpRequest, WireError> = (|| {
            let req = match op {
                REDIRECT => {
                    self.check_cpu(b[1])?;
                    HtpRequest::Redirect { cpu: b[1], pc: le64(&b[2..10]) }
                }
                NEXT => HtpRequest::Next,
                MMU_SET => {
                    self.check_cpu(b[1])?;
                    let flush_tlb = match b[10] {
                        0 => false,
                        1 => true,
                        _ => return Err(WireError::BadField { opcode: op }),
                    };
                    HtpRequest::MmuSet { cpu: b[1], satp: le64(&b[2..10]), flush_tlb }
                }
                SYNC_I => {
                    self.check_cpu(b[1])?;
                    HtpRequest::SyncI { cpu: b[1] }
                }
                HFUTEX => {
                    self.check_cpu(b[1])?;
                    let action = HFutexAction::from_byte(b[2]).ok_or(WireError::BadField { opcode: op })?;
                    HtpRequest::HFutex { cpu: b[1], action, vaddr: le64(&b[3..11]) }
                }
                REG_READ => {
                    self.check_cpu(b[1])?;
                    check_reg_idx(b[2])?;
                    HtpRequest::RegRead { cpu: b[1], idx: b[2] }
                }
                REG_WRITE => {
                    self.check_cpu(b[1])?;
                    check_reg_idx(b[2])?;
                    HtpRequest::RegWrite { cpu: b[1], idx: b[2], data: le64(&b[3..11]) }
                }
                MEM_READ => {
                    self.check_cpu(b[1])?;
                    let paddr = le64(&b[2..10]);
                    Self::check_paddr(paddr)?;
                    HtpRequest::MemRead { cpu: b[1], paddr }
                }
                MEM_WRITE => {
                    self.check_cpu(b[1])?;
                    let paddr = le64(&b[2..10]);
                    Self::check_paddr(paddr)?;
                    HtpRequest::MemWrite { cpu: b[1], paddr, data: le64(&b[10..18]) }
                }
                PAGE_SET => {
                    self.check_cpu(b[1])?;
                    let ppn = le64(&b[2..10]);
                    Self::check_ppn(ppn)?;
                    HtpRequest::PageSet { cpu: b[1], ppn, value: le64(&b[10..18]) }
                }
                PAGE_COPY => {
                    self.check_cpu(b[1])?;
                    let src_ppn = le64(&b[2..10]);
                    let dst_ppn = le64(&b[10..18]);
                    Self::check_ppn(src_ppn)?;
                    Self::check_ppn(dst_ppn)?;
                    HtpRequest::PageCopy { cpu: b[1], src_ppn, dst_ppn }
                }
                PAGE_READ => {
                    self.check_cpu(b[1])?;
                    let ppn = le64(&b[2..10]);
                    Self::check_ppn(ppn)?;
                    HtpRequest::PageRead { cpu: b[1], ppn }
                }
                PAGE_WRITE => {
                    self.check_cpu(b[1])?;
                    let ppn = le64(&b[2..10]);
                    Self::check_ppn(ppn)?;
                    let payload = &b[10..10 + PAGE_SIZE];
                    let want = u16::from_be_bytes([b[10 + PAGE_SIZE], b[11 + PAGE_SIZE]]);
                    let got = crc::crc16(payload);
                    if got != want {
                        return Err(WireError::Crc { got, want });
                    }
                    let mut data = Box::new([0u8; PAGE_SIZE]);
                    data.copy_from_slice(payload);
                    HtpRequest::PageWrite { cpu: b[1], ppn, data }
                }
                TICK => HtpRequest::Tick,
                UTICK => {
                    self.check_cpu(b[1])?;
                    HtpRequest::UTick { cpu: b[1] }
                }
                DIRECT_REG_ACCESS => {
                    self.check_cpu(b[1])?;
                    check_reg_idx(b[2])?;
                    let wen = match b[3] {
                        0 => false,
                        1 => true,
                        _ => return Err(WireError::BadField { opcode: op }),
                    };
                    HtpRequest::DirectRegAccess { cpu: b[1], idx: b[2], wen, data: le64(&b[4..12]) }
                }
                DIRECT_INJECT => {
                    self.check_cpu(b[1])?;
                    HtpRequest::DirectInject { cpu: b[1], inst: u32::from_le_bytes(b[2..6].try_into().unwrap()) }
                }
                DIRECT_POLL => {
                    self.check_cpu(b[1])?;
                    HtpRequest::DirectPoll { cpu: b[1] }
                }
                _ => unreachable!("length table covers opcode"),
            };
            Ok(req)
        })();
        match res {
            Ok(msg) => Decoded::Frame { msg, consumed: len },
            Err(error) => Decoded::Invalid { error, opcode: op, consumed: len },
        }
    }

    pub fn encode_response(&self, resp: &HtpResponse) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(20);
        out.push(resp.echo);
        out.push(resp.status as u8);
        if resp.status != Status::Ok {
            debug_assert!(matches!(resp.payload, RespPayload::Empty));
            return Ok(out);
        }
        let kind = ok_payload_kind(resp.echo).ok_or(WireError::BadOpcode { opcode: resp.echo })?;
        match (&resp.payload, kind) {
            (RespPayload::Empty, PayloadKind::Empty) => {}
            (RespPayload::Word(w), PayloadKind::Word) => out.extend_from_slice(&w.to_le_bytes()),
            (RespPayload::Event { cpu, cause, epc, tval }, PayloadKind::Event) => {
                self.check_cpu(*cpu)?;
                out.push(*cpu);
                out.push(*cause);
                out.extend_from_slice(&epc.to_le_bytes());
                out.extend_from_slice(&tval.to_le_bytes());
            }
            (RespPayload::Page(data), PayloadKind::Page) => {
                out.extend_from_slice(&data[..]);
                out.extend_from_slice(&crc::crc16(&data[..]).to_be_bytes());
            }
            _ => return Err(WireError::BadField { opcode: resp.echo }),
        }
        debug_assert_eq!(out.len(), response_len(resp.echo, resp.status).unwrap());
        Ok(out)
    }

    pub fn decode_response(&self, bytes: &[u8]) -> Decoded<HtpResponse> {
        if bytes.len() < 2 {
            return Decoded::NeedMoreBytes;
        }
        let echo = bytes[0];
        if request_len(echo).is_none() {
            return Decoded::Invalid { error: WireError::BadOpcode { opcode: echo }, opcode: echo, consumed: 1 };
        }
        let status = match Status::from_byte(bytes[1]) {
            Some(s) => s,
            None => {
                return Decoded::Invalid { error: WireError::BadField { opcode: echo }, opcode: echo, consumed: 2 }
            }
        };
        let len = match response_len(echo, status) {
            Some(l) => l,
            None => return Decoded::Invalid { error: WireError::BadOpcode { opcode: echo }, opcode: echo, consumed: 2 },
        };
        if bytes.len() < len {
            return Decoded::NeedMoreBytes;
        }
        let b = &bytes[..len];
        if status != Status::Ok {
            return Decoded::Frame { msg: HtpResponse::err(echo, status), consumed: len };
        }
        let payload = match ok_payload_kind(echo).unwrap() {
            PayloadKind::Empty => RespPayload::Empty,
            PayloadKind::Word => RespPayload::Word(le64(&b[2..10])),
            PayloadKind::Event => {
                let cpu = b[2];
                // Sentinel poll causes are wire-level, not core ids bound traps.
                if cpu >= self.cores {
                    return Decoded::Invalid {
                        error: WireError::BadCpu { cpu, cores: self.cores },
                        opcode: echo,
                        consumed: len,
                    };
                }
                RespPayload::Event { cpu, cause: b[3], epc: le64(&b[4..12]), tval: le64(&b[12..20]) }
            }
            PayloadKind::Page => {
                let payload = &b[2..2 + PAGE_SIZE];
                let want = u16::from_be_bytes([b[2 + PAGE_SIZE], b[3 + PAGE_SIZE]]);
                let got = crc::crc16(payload);
                if got != want {
                    return Decoded::Invalid { error: WireError::Crc { got, want }, opcode: echo, consumed: len };
                }
                let mut data = Box::new([0u8; PAGE_SIZE]);
                data.copy_from_slice(payload);
                RespPayload::Page(data)
            }
        };
        Decoded::Frame { msg: HtpResponse { echo, status, payload }, consumed: len }
    }
}

fn check_reg_idx(idx: u8) -> Result<(), WireError> {
    if idx > 31 {
        Err(WireError::BadField { opcode: 0 })
    } else {
        Ok(())
    }
}

fn le64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codec() -> Codec {
        Codec::new(4)
    }

    #[test]
    fn tick_is_one_byte() {
        assert_eq!(codec().encode_request(&HtpRequest::Tick).unwrap(), vec![0x30]);
    }

    #[test]
    fn reg_write_frame_layout() {
        let frame = codec().encode_request(&HtpRequest::RegWrite { cpu: 0, idx: 10, data: 0 }).unwrap();
        assert_eq!(frame, vec![0x11, 0x00, 0x0a, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(frame.len(), 11);
    }

    #[test]
    fn page_write_frame_length() {
        let frame = codec()
            .encode_request(&HtpRequest::PageWrite { cpu: 0, ppn: 0x80000, data: Box::new([0u8; PAGE_SIZE]) })
            .unwrap();
        assert_eq!(frame.len(), 1 + 1 + 8 + 4096 + 2);
    }

    #[test]
    fn next_round_trips() {
        let c = codec();
        let frame = c.encode_request(&HtpRequest::Next).unwrap();
        match c.decode_request(&frame) {
            Decoded::Frame { msg, consumed } => {
                assert_eq!(msg, HtpRequest::Next);
                assert_eq!(consumed, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_opcode_rejected() {
        match codec().decode_request(&[0xff]) {
            Decoded::Invalid { error: WireError::BadOpcode { opcode: 0xff }, consumed: 1, .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn page_write_bit_flip_detected() {
        let c = codec();
        let mut data = Box::new([0u8; PAGE_SIZE]);
        data[123] = 0x55;
        let mut frame = c.encode_request(&HtpRequest::PageWrite { cpu: 1, ppn: 7, data }).unwrap();
        frame[10 + 200] ^= 0x04;
        match c.decode_request(&frame) {
            Decoded::Invalid { error: WireError::Crc { .. }, consumed, .. } => assert_eq!(consumed, 4108),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_cpu_rejected_both_ways() {
        let c = codec();
        assert!(matches!(
            c.encode_request(&HtpRequest::SyncI { cpu: 4 }),
            Err(WireError::BadCpu { cpu: 4, cores: 4 })
        ));
        let frame = Codec::new(8).encode_request(&HtpRequest::SyncI { cpu: 7 }).unwrap();
        assert!(matches!(c.decode_request(&frame), Decoded::Invalid { error: WireError::BadCpu { .. }, .. }));
    }

    #[test]
    fn unaligned_mem_access_rejected() {
        assert!(matches!(
            codec().encode_request(&HtpRequest::MemRead { cpu: 0, paddr: 0x1001 }),
            Err(WireError::Unaligned { .. })
        ));
    }

    #[test]
    fn partial_frames_need_more_bytes() {
        let c = codec();
        let frame = c.encode_request(&HtpRequest::MemWrite { cpu: 0, paddr: 0x8000_0000, data: 42 }).unwrap();
        for cut in 0..frame.len() {
            assert_eq!(c.decode_request(&frame[..cut]), Decoded::NeedMoreBytes, "cut at {cut}");
        }
    }

    #[test]
    fn response_round_trip_event() {
        let c = codec();
        let resp =
            HtpResponse::ok(opcode::NEXT, RespPayload::Event { cpu: 2, cause: 8, epc: 0x11000, tval: 0 });
        let frame = c.encode_response(&resp).unwrap();
        assert_eq!(frame.len(), 20);
        match c.decode_response(&frame) {
            Decoded::Frame { msg, consumed } => {
                assert_eq!(msg, resp);
                assert_eq!(consumed, 20);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn error_response_is_two_bytes() {
        let c = codec();
        let resp = HtpResponse::err(opcode::REG_READ, Status::BadCpu);
        let frame = c.encode_response(&resp).unwrap();
        assert_eq!(frame, vec![0x10, 3]);
    }
}
