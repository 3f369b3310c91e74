//! Typed request layer over the transport. Owns the one outstanding parked
//! Next and routes its event response when it interleaves with other
//! request/response pairs.

use crate::target::TrapCause;
use crate::transport::{Channel, ChannelError, Transport};
use crate::wire::{
    opcode, Codec, Decoded, HFutexAction, HtpRequest, HtpResponse, RespPayload, Status, WireError,
};

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub cpu: u8,
    pub cause: TrapCause,
    pub epc: u64,
    pub tval: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum LinkError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("encode: {0}")]
    Wire(#[from] WireError),
    #[error("request {op:#04x} answered with status {status:?}")]
    Failed { op: u8, status: Status },
    #[error("desync: {0}")]
    Desync(String),
    #[error("unknown trap cause byte {0:#04x}")]
    BadCause(u8),
}

pub struct HtpClient<C: Channel> {
    pub tp: Transport<C>,
    codec: Codec,
    next_parked: bool,
    pending_events: VecDeque<Event>,
    /// Direct-mode baseline: every data access expands to raw CPU-interface
    /// actions, one per frame, and events are polled instead of parked.
    direct: bool,
    cores: u8,
}

impl<C: Channel> HtpClient<C> {
    pub fn new(chan: C, cores: u8) -> Self {
        HtpClient {
            tp: Transport::new(chan),
            codec: Codec::new(cores),
            next_parked: false,
            pending_events: VecDeque::new(),
            direct: false,
            cores,
        }
    }

    pub fn set_direct(&mut self, on: bool) {
        self.direct = on;
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn push_attribution(&mut self, label: &str) {
        self.tp.push_attribution(label);
    }

    pub fn pop_attribution(&mut self) {
        self.tp.pop_attribution();
    }

    fn decode_response(&self, frame: &[u8]) -> Result<HtpResponse, LinkError> {
        match self.codec.decode_response(frame) {
            Decoded::Frame { msg, .. } => Ok(msg),
            other => Err(LinkError::Desync(format!("bad response frame: {other:?}"))),
        }
    }

    fn event_from(&self, resp: &HtpResponse) -> Result<Event, LinkError> {
        match resp.payload {
            RespPayload::Event { cpu, cause, epc, tval } => {
                let cause = TrapCause::from_code(cause).ok_or(LinkError::BadCause(cause))?;
                Ok(Event { cpu, cause, epc, tval })
            }
            _ => Err(LinkError::Desync("expected event payload".into())),
        }
    }

    /// Send one request and wait for its response, routing any interleaved
    /// parked-Next event to the pending queue.
    pub fn request(&mut self, req: &HtpRequest) -> Result<HtpResponse, LinkError> {
        let frame = self.codec.encode_request(req)?;
        self.tp.submit(&frame)?;
        loop {
            let rf = self.tp.wait_response()?;
            let resp = self.decode_response(&rf)?;
            if resp.echo == opcode::NEXT && req.opcode() != opcode::NEXT {
                if !self.next_parked {
                    return Err(LinkError::Desync("unsolicited event response".into()));
                }
                self.next_parked = false;
                let ev = self.event_from(&resp)?;
                self.pending_events.push_back(ev);
                continue;
            }
            if resp.echo != req.opcode() {
                return Err(LinkError::Desync(format!(
                    "echo {:#04x} does not match request {:#04x}",
                    resp.echo,
                    req.opcode()
                )));
            }
            return Ok(resp);
        }
    }

    fn request_ok(&mut self, req: &HtpRequest) -> Result<HtpResponse, LinkError> {
        let resp = self.request(req)?;
        if resp.status != Status::Ok {
            return Err(LinkError::Failed { op: req.opcode(), status: resp.status });
        }
        Ok(resp)
    }

    fn word_of(resp: HtpResponse) -> Result<u64, LinkError> {
        match resp.payload {
            RespPayload::Word(w) => Ok(w),
            _ => Err(LinkError::Desync("expected word payload".into())),
        }
    }

    // Instruction stream management.

    pub fn redirect(&mut self, cpu: u8, pc: u64) -> Result<(), LinkError> {
        self.request_ok(&HtpRequest::Redirect { cpu, pc }).map(|_| ())
    }

    pub fn mmu_set(&mut self, cpu: u8, satp: u64, flush_tlb: bool) -> Result<(), LinkError> {
        self.request_ok(&HtpRequest::MmuSet { cpu, satp, flush_tlb }).map(|_| ())
    }

    pub fn sync_i(&mut self, cpu: u8) -> Result<(), LinkError> {
        self.request_ok(&HtpRequest::SyncI { cpu }).map(|_| ())
    }

    /// Returns false when a Set was rejected because the mask cache is full.
    pub fn hfutex(&mut self, cpu: u8, action: HFutexAction, vaddr: u64) -> Result<bool, LinkError> {
        let resp = self.request(&HtpRequest::HFutex { cpu, action, vaddr })?;
        match resp.status {
            Status::Ok => Ok(true),
            Status::MaskFull => Ok(false),
            status => Err(LinkError::Failed { op: opcode::HFUTEX, status }),
        }
    }

    /// Park a Next if none is outstanding. Direct mode has no parked
    /// requests; events are polled in wait_event instead.
    pub fn submit_next(&mut self) -> Result<(), LinkError> {
        if self.direct || self.next_parked {
            return Ok(());
        }
        let frame = self.codec.encode_request(&HtpRequest::Next)?;
        self.tp.submit(&frame)?;
        self.next_parked = true;
        Ok(())
    }

    pub fn has_pending_event(&self) -> bool {
        !self.pending_events.is_empty()
    }

    pub fn take_pending_event(&mut self) -> Option<Event> {
        self.pending_events.pop_front()
    }

    /// Block for the next trap event: the parked Next's response, or in
    /// direct mode a round-robin poll over every core.
    pub fn wait_event(&mut self) -> Result<Event, LinkError> {
        if let Some(ev) = self.pending_events.pop_front() {
            return Ok(ev);
        }
        if self.direct {
            loop {
                for cpu in 0..self.cores {
                    if let Some(ev) = self.direct_poll(cpu)? {
                        return Ok(ev);
                    }
                }
            }
        }
        assert!(self.next_parked, "wait_event without a parked Next");
        let rf = self.tp.wait_response()?;
        let resp = self.decode_response(&rf)?;
        if resp.echo != opcode::NEXT {
            return Err(LinkError::Desync("expected event for parked Next".into()));
        }
        self.next_parked = false;
        if resp.status != Status::Ok {
            return Err(LinkError::Failed { op: opcode::NEXT, status: resp.status });
        }
        self.event_from(&resp)
    }

    // Word-level data access.

    pub fn reg_read(&mut self, cpu: u8, idx: u8) -> Result<u64, LinkError> {
        if self.direct {
            return self.direct_reg(cpu, idx, false, 0);
        }
        Self::word_of(self.request_ok(&HtpRequest::RegRead { cpu, idx })?)
    }

    pub fn reg_write(&mut self, cpu: u8, idx: u8, data: u64) -> Result<(), LinkError> {
        if self.direct {
            return self.direct_reg(cpu, idx, true, data).map(|_| ());
        }
        self.request_ok(&HtpRequest::RegWrite { cpu, idx, data }).map(|_| ())
    }

    pub fn mem_read(&mut self, cpu: u8, paddr: u64) -> Result<u64, LinkError> {
        if self.direct {
            return self.d_word(cpu, paddr, None, rvasm::enc::ld(6, 5, 0));
        }
        Self::word_of(self.request_ok(&HtpRequest::MemRead { cpu, paddr })?)
    }

    pub fn mem_write(&mut self, cpu: u8, paddr: u64, data: u64) -> Result<(), LinkError> {
        if self.direct {
            return self.d_word(cpu, paddr, Some(data), rvasm::enc::sd(6, 5, 0)).map(|_| ());
        }
        self.request_ok(&HtpRequest::MemWrite { cpu, paddr, data }).map(|_| ())
    }

    // Page-level data access.

    pub fn page_set(&mut self, cpu: u8, ppn: u64, value: u64) -> Result<(), LinkError> {
        if self.direct {
            let bytes = value.to_le_bytes();
            for i in 0..4096u64 {
                self.d_byte(cpu, (ppn << 12) + i, Some(bytes[(i % 8) as usize]))?;
            }
            return Ok(());
        }
        self.request_ok(&HtpRequest::PageSet { cpu, ppn, value }).map(|_| ())
    }

    pub fn page_copy(&mut self, cpu: u8, src_ppn: u64, dst_ppn: u64) -> Result<(), LinkError> {
        if self.direct {
            for i in 0..4096u64 {
                let b = self.d_byte(cpu, (src_ppn << 12) + i, None)?;
                self.d_byte(cpu, (dst_ppn << 12) + i, Some(b as u8))?;
            }
            return Ok(());
        }
        self.request_ok(&HtpRequest::PageCopy { cpu, src_ppn, dst_ppn }).map(|_| ())
    }

    pub fn page_read(&mut self, cpu: u8, ppn: u64) -> Result<Box<[u8; 4096]>, LinkError> {
        if self.direct {
            let mut out = Box::new([0u8; 4096]);
            for i in 0..4096u64 {
                out[i as usize] = self.d_byte(cpu, (ppn << 12) + i, None)? as u8;
            }
            return Ok(out);
        }
        let resp = self.request_ok(&HtpRequest::PageRead { cpu, ppn })?;
        match resp.payload {
            RespPayload::Page(p) => Ok(p),
            _ => Err(LinkError::Desync("expected page payload".into())),
        }
    }

    pub fn page_write(&mut self, cpu: u8, ppn: u64, data: Box<[u8; 4096]>) -> Result<(), LinkError> {
        if self.direct {
            for i in 0..4096u64 {
                self.d_byte(cpu, (ppn << 12) + i, Some(data[i as usize]))?;
            }
            return Ok(());
        }
        self.request_ok(&HtpRequest::PageWrite { cpu, ppn, data }).map(|_| ())
    }

    /// Canonical direct-mode word transfer: two scratch saves, address (and
    /// data) staging, one injected instruction, two restores; each its own
    /// frame. Reads return the loaded value.
    fn d_word(&mut self, cpu: u8, paddr: u64, data: Option<u64>, inst: u32) -> Result<u64, LinkError> {
        let save5 = self.direct_reg(cpu, 5, false, 0)?;
        let save6 = self.direct_reg(cpu, 6, false, 0)?;
        self.direct_reg(cpu, 5, true, paddr)?;
        let value = match data {
            Some(v) => {
                self.direct_reg(cpu, 6, true, v)?;
                self.direct_inject(cpu, inst)?;
                v
            }
            None => {
                self.direct_inject(cpu, inst)?;
                self.direct_reg(cpu, 6, false, 0)?
            }
        };
        self.direct_reg(cpu, 5, true, save5)?;
        self.direct_reg(cpu, 6, true, save6)?;
        Ok(value)
    }

    /// Same expansion at byte granularity: the unit behind direct-mode page
    /// transfers.
    fn d_byte(&mut self, cpu: u8, paddr: u64, data: Option<u8>) -> Result<u64, LinkError> {
        let inst = match data {
            Some(_) => rvasm::enc::sb(6, 5, 0),
            None => rvasm::enc::lbu(6, 5, 0),
        };
        self.d_word(cpu, paddr, data.map(|b| b as u64), inst)
    }

    // Performance counters.

    pub fn tick(&mut self) -> Result<u64, LinkError> {
        Self::word_of(self.request_ok(&HtpRequest::Tick)?)
    }

    pub fn utick(&mut self, cpu: u8) -> Result<u64, LinkError> {
        Self::word_of(self.request_ok(&HtpRequest::UTick { cpu })?)
    }

    // Direct-mode baseline.

    pub fn direct_reg(&mut self, cpu: u8, idx: u8, wen: bool, data: u64) -> Result<u64, LinkError> {
        Self::word_of(self.request_ok(&HtpRequest::DirectRegAccess { cpu, idx, wen, data })?)
    }

    pub fn direct_inject(&mut self, cpu: u8, inst: u32) -> Result<(), LinkError> {
        self.request_ok(&HtpRequest::DirectInject { cpu, inst }).map(|_| ())
    }

    pub fn direct_poll(&mut self, cpu: u8) -> Result<Option<Event>, LinkError> {
        let resp = self.request_ok(&HtpRequest::DirectPoll { cpu })?;
        match resp.payload {
            RespPayload::Event { cause, .. } if cause >= 0xf0 => Ok(None),
            RespPayload::Event { .. } => Ok(Some(self.event_from(&resp)?)),
            _ => Err(LinkError::Desync("expected event payload".into())),
        }
    }
}
