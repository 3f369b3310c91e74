use super::*;
use crate::machine::MachineConfig;
use crate::wire::{Codec, HtpRequest, RespPayload, Status};

fn mk_channel() -> InProcessChannel {
    InProcessChannel::new(MachineConfig { cores: 2, mem_size: 1 << 22, ..Default::default() }, ChannelConfig::default())
}

#[test]
fn frame_time_known_values() {
    let cfg = ChannelConfig { baud: 1_000_000, frame: FrameFormat::EIGHT_N_TWO, latency_extra: 0.0 };
    // 104 bytes at 1 Mbps with 11 bits per byte: exactly 1.144 ms.
    assert_eq!(frame_time(104, &cfg), 1144.0 / 1_000_000.0);
    assert_eq!(frame_time(0, &cfg), 0.0);
    let cfg = ChannelConfig::default();
    assert_eq!(frame_time(1, &cfg), 11.0 / 921_600.0);
}

#[test]
fn frame_format_parsing() {
    assert_eq!(FrameFormat::parse("8N2"), Some(FrameFormat::EIGHT_N_TWO));
    assert_eq!(FrameFormat::EIGHT_N_TWO.bits_per_byte(), 11);
    assert_eq!(FrameFormat::parse("8E1").unwrap().bits_per_byte(), 11);
    assert_eq!(FrameFormat::parse("8N1").unwrap().bits_per_byte(), 10);
    assert!(FrameFormat::parse("xyz").is_none());
    assert_eq!(FrameFormat::parse("8N2").unwrap().to_string(), "8N2");
}

#[test]
fn tick_exchange_at_reset_returns_zero() {
    let codec = Codec::new(2);
    let mut tp = Transport::new(mk_channel());
    let resp_frame = tp.exchange(&codec.encode_request(&HtpRequest::Tick).unwrap()).unwrap();
    assert_eq!(resp_frame.len(), 10);
    match codec.decode_response(&resp_frame) {
        crate::wire::Decoded::Frame { msg, .. } => {
            assert_eq!(msg.status, Status::Ok);
            assert_eq!(msg.payload, RespPayload::Word(0));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn ledger_counts_reg_write_exchange() {
    let codec = Codec::new(2);
    let mut tp = Transport::new(mk_channel());
    let frame = codec.encode_request(&HtpRequest::RegWrite { cpu: 0, idx: 10, data: 7 }).unwrap();
    assert_eq!(frame.len(), 11);
    let resp = tp.exchange(&frame).unwrap();
    assert_eq!(resp.len(), 2);
    assert_eq!(tp.ledger.bytes_sent, 11);
    assert_eq!(tp.ledger.bytes_received, 2);
    assert!(tp.ledger.reconciles());
}

#[test]
fn attribution_stack_charges_top_label() {
    let codec = Codec::new(2);
    let mut tp = Transport::new(mk_channel());
    let tick = codec.encode_request(&HtpRequest::Tick).unwrap();
    tp.exchange(&tick).unwrap(); // idle
    tp.push_attribution("mmap");
    tp.exchange(&tick).unwrap();
    tp.push_attribution("page_fault");
    tp.exchange(&tick).unwrap();
    tp.pop_attribution();
    tp.exchange(&tick).unwrap();
    tp.pop_attribution();
    assert_eq!(tp.ledger.attribution_bytes("idle"), 11);
    assert_eq!(tp.ledger.attribution_bytes("mmap"), 22);
    assert_eq!(tp.ledger.attribution_bytes("page_fault"), 11);
    assert!(tp.ledger.reconciles());
}

#[test]
fn conservation_against_counting_shim() {
    // A shim channel that counts raw bytes crossing in both directions.
    struct Shim {
        inner: InProcessChannel,
        raw_sent: u64,
        raw_received: u64,
    }
    impl Channel for Shim {
        fn submit(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
            self.raw_sent += frame.len() as u64;
            self.inner.submit(frame)
        }
        fn poll_response(&mut self) -> Result<Option<Vec<u8>>, ChannelError> {
            let r = self.inner.poll_response()?;
            if let Some(f) = &r {
                self.raw_received += f.len() as u64;
            }
            Ok(r)
        }
        fn wait_response(&mut self) -> Result<Vec<u8>, ChannelError> {
            let f = self.inner.wait_response()?;
            self.raw_received += f.len() as u64;
            Ok(f)
        }
        fn close(&mut self) {
            self.inner.close()
        }
    }

    let codec = Codec::new(2);
    let mut tp = Transport::new(Shim { inner: mk_channel(), raw_sent: 0, raw_received: 0 });
    for req in [
        HtpRequest::Tick,
        HtpRequest::UTick { cpu: 1 },
        HtpRequest::RegRead { cpu: 0, idx: 2 },
        HtpRequest::MemWrite { cpu: 0, paddr: 0x8000_0100, data: 1 },
        HtpRequest::PageSet { cpu: 0, ppn: 0x80001, value: 0 },
    ] {
        tp.exchange(&codec.encode_request(&req).unwrap()).unwrap();
    }
    assert_eq!(tp.ledger.bytes_sent, tp.chan.raw_sent);
    assert_eq!(tp.ledger.bytes_received, tp.chan.raw_received);
    assert!(tp.ledger.reconciles());
}

#[test]
fn inprocess_run_is_deterministic() {
    let run = || {
        let codec = Codec::new(2);
        let mut tp = Transport::new(mk_channel());
        for req in [
            HtpRequest::PageSet { cpu: 0, ppn: 0x80010, value: 0xa5 },
            HtpRequest::MemRead { cpu: 0, paddr: 0x8001_0000 },
            HtpRequest::Tick,
        ] {
            tp.exchange(&codec.encode_request(&req).unwrap()).unwrap();
        }
        let secs = tp.chan.machine().unwrap().sim_seconds;
        (tp.ledger.clone(), secs, tp.chan.machine().unwrap().tick())
    };
    let a = run();
    let b = run();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn clock_advances_per_byte_and_monotonically() {
    let codec = Codec::new(2);
    let mut tp = Transport::new(mk_channel());
    let t0 = tp.chan.machine().unwrap().sim_seconds;
    assert_eq!(t0, 0.0);
    tp.exchange(&codec.encode_request(&HtpRequest::Tick).unwrap()).unwrap();
    let t1 = tp.chan.machine().unwrap().sim_seconds;
    // 1 request byte + 10 response bytes at 11 bits each.
    let expect = 11.0 * (11.0 / 921_600.0);
    assert!((t1 - expect).abs() < 1e-12, "t1={t1} expect={expect}");
    tp.exchange(&codec.encode_request(&HtpRequest::Tick).unwrap()).unwrap();
    let t2 = tp.chan.machine().unwrap().sim_seconds;
    assert!(t2 > t1);
}

#[test]
fn closed_channel_errors() {
    let codec = Codec::new(2);
    let mut chan = mk_channel();
    chan.close();
    let frame = codec.encode_request(&HtpRequest::Tick).unwrap();
    assert!(matches!(chan.submit(&frame), Err(ChannelError::Closed)));
    assert!(matches!(chan.wait_response(), Err(ChannelError::Closed)));
}

#[test]
fn deadlock_detected_when_nothing_can_run() {
    let codec = Codec::new(2);
    let mut chan = mk_channel();
    // Park a Next with all cores halted at reset: nothing will ever trap.
    chan.submit(&codec.encode_request(&HtpRequest::Next).unwrap()).unwrap();
    assert!(matches!(chan.wait_response(), Err(ChannelError::Deadlock)));
}

#[test]
fn serial_open_rejects_missing_device_and_odd_baud() {
    let cfg = ChannelConfig::default();
    assert!(SerialChannel::open(std::path::Path::new("/no/such/tty"), &cfg).is_err());
    let cfg = ChannelConfig { baud: 123_456, ..Default::default() };
    assert!(SerialChannel::open(std::path::Path::new("/no/such/tty"), &cfg).is_err());
}
