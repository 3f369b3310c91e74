//! Codec properties: round-trip identity, exact consumption, prefix
//! freeness, partial-frame handling, and CRC bit-flip detection.

use proptest::prelude::*;

use fase::wire::{Codec, Decoded, HFutexAction, HtpRequest, HtpResponse, RespPayload, Status, PAGE_SIZE};

const CORES: u8 = 4;

fn codec() -> Codec {
    Codec::new(CORES)
}

prop_compose! {
    fn arb_cpu()(c in 0..CORES) -> u8 { c }
}

prop_compose! {
    fn arb_page()(seed in any::<u64>()) -> Box<[u8; PAGE_SIZE]> {
        let mut page = Box::new([0u8; PAGE_SIZE]);
        let mut state = seed | 1;
        for b in page.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *b = (state >> 56) as u8;
        }
        page
    }
}

fn arb_request() -> impl Strategy<Value = HtpRequest> {
    prop_oneof![
        (arb_cpu(), any::<u64>()).prop_map(|(cpu, pc)| HtpRequest::Redirect { cpu, pc }),
        Just(HtpRequest::Next),
        (arb_cpu(), any::<u64>(), any::<bool>())
            .prop_map(|(cpu, satp, flush_tlb)| HtpRequest::MmuSet { cpu, satp, flush_tlb }),
        arb_cpu().prop_map(|cpu| HtpRequest::SyncI { cpu }),
        (arb_cpu(), 0..3u8, any::<u64>()).prop_map(|(cpu, a, vaddr)| HtpRequest::HFutex {
            cpu,
            action: match a {
                0 => HFutexAction::Set,
                1 => HFutexAction::Clear,
                _ => HFutexAction::ClearAll,
            },
            vaddr,
        }),
        (arb_cpu(), 0..32u8).prop_map(|(cpu, idx)| HtpRequest::RegRead { cpu, idx }),
        (arb_cpu(), 0..32u8, any::<u64>()).prop_map(|(cpu, idx, data)| HtpRequest::RegWrite { cpu, idx, data }),
        (arb_cpu(), any::<u64>()).prop_map(|(cpu, p)| HtpRequest::MemRead { cpu, paddr: p & !7 }),
        (arb_cpu(), any::<u64>(), any::<u64>())
            .prop_map(|(cpu, p, data)| HtpRequest::MemWrite { cpu, paddr: p & !7, data }),
        (arb_cpu(), 0..(1u64 << 44), any::<u64>()).prop_map(|(cpu, ppn, value)| HtpRequest::PageSet { cpu, ppn, value }),
        (arb_cpu(), 0..(1u64 << 44), 0..(1u64 << 44))
            .prop_map(|(cpu, s, d)| HtpRequest::PageCopy { cpu, src_ppn: s, dst_ppn: d }),
        (arb_cpu(), 0..(1u64 << 44)).prop_map(|(cpu, ppn)| HtpRequest::PageRead { cpu, ppn }),
        (arb_cpu(), 0..(1u64 << 44), arb_page()).prop_map(|(cpu, ppn, data)| HtpRequest::PageWrite { cpu, ppn, data }),
        Just(HtpRequest::Tick),
        arb_cpu().prop_map(|cpu| HtpRequest::UTick { cpu }),
        (arb_cpu(), 0..32u8, any::<bool>(), any::<u64>())
            .prop_map(|(cpu, idx, wen, data)| HtpRequest::DirectRegAccess { cpu, idx, wen, data }),
        (arb_cpu(), any::<u32>()).prop_map(|(cpu, inst)| HtpRequest::DirectInject { cpu, inst }),
        arb_cpu().prop_map(|cpu| HtpRequest::DirectPoll { cpu }),
    ]
}

fn arb_response() -> impl Strategy<Value = HtpResponse> {
    use fase::wire::opcode::*;
    prop_oneof![
        // Ok responses with the payload shape their opcode requires.
        prop_oneof![
            Just(REDIRECT), Just(MMU_SET), Just(SYNC_I), Just(HFUTEX), Just(REG_WRITE),
            Just(MEM_WRITE), Just(PAGE_SET), Just(PAGE_COPY), Just(PAGE_WRITE), Just(DIRECT_INJECT)
        ]
        .prop_map(|op| HtpResponse::ok(op, RespPayload::Empty)),
        (
            prop_oneof![Just(REG_READ), Just(MEM_READ), Just(TICK), Just(UTICK), Just(DIRECT_REG_ACCESS)],
            any::<u64>()
        )
            .prop_map(|(op, w)| HtpResponse::ok(op, RespPayload::Word(w))),
        (prop_oneof![Just(NEXT), Just(DIRECT_POLL)], arb_cpu(), any::<u8>(), any::<u64>(), any::<u64>())
            .prop_map(|(op, cpu, cause, epc, tval)| HtpResponse::ok(op, RespPayload::Event { cpu, cause, epc, tval })),
        arb_page().prop_map(|p| HtpResponse::ok(PAGE_READ, RespPayload::Page(p))),
        // Error responses: empty payload whatever the opcode.
        (
            prop_oneof![Just(NEXT), Just(REG_READ), Just(PAGE_WRITE), Just(DIRECT_POLL), Just(MEM_READ)],
            prop_oneof![
                Just(Status::BadOpcode), Just(Status::CrcError), Just(Status::BadCpu),
                Just(Status::Unaligned), Just(Status::BadState), Just(Status::Disabled),
                Just(Status::MaskFull), Just(Status::BadAddress), Just(Status::Busy), Just(Status::Rejected)
            ]
        )
            .prop_map(|(op, status)| HtpResponse::err(op, status)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn request_round_trip(req in arb_request()) {
        let c = codec();
        let frame = c.encode_request(&req).unwrap();
        match c.decode_request(&frame) {
            Decoded::Frame { msg, consumed } => {
                prop_assert_eq!(msg, req);
                prop_assert_eq!(consumed, frame.len());
            }
            other => return Err(TestCaseError::fail(format!("{other:?}"))),
        }
        // Trailing bytes never change the decode of the first frame.
        let mut extended = frame.clone();
        extended.extend_from_slice(&[0xaa; 7]);
        match c.decode_request(&extended) {
            Decoded::Frame { consumed, .. } => prop_assert_eq!(consumed, frame.len()),
            other => return Err(TestCaseError::fail(format!("{other:?}"))),
        }
    }

    #[test]
    fn response_round_trip(resp in arb_response()) {
        let c = codec();
        let frame = c.encode_response(&resp).unwrap();
        match c.decode_response(&frame) {
            Decoded::Frame { msg, consumed } => {
                prop_assert_eq!(msg, resp);
                prop_assert_eq!(consumed, frame.len());
            }
            other => return Err(TestCaseError::fail(format!("{other:?}"))),
        }
    }

    #[test]
    fn truncated_requests_need_more_bytes(req in arb_request(), cut_ratio in 0.0f64..1.0) {
        let c = codec();
        let frame = c.encode_request(&req).unwrap();
        let cut = ((frame.len() as f64) * cut_ratio) as usize;
        if cut < frame.len() {
            prop_assert_eq!(c.decode_request(&frame[..cut]), Decoded::NeedMoreBytes);
        }
    }

    #[test]
    fn prefix_freeness(a in arb_request(), b in arb_request()) {
        let c = codec();
        let fa = c.encode_request(&a).unwrap();
        let fb = c.encode_request(&b).unwrap();
        if fa.len() < fb.len() && fb.starts_with(&fa) {
            // A strict prefix that decodes as a complete frame would be a
            // framing ambiguity; lengths are a function of the opcode, so a
            // prefix match of different lengths must mean different opcodes,
            // which contradicts starts_with on byte 0.
            return Err(TestCaseError::fail("strict prefix with a complete decode"));
        }
        // Streams concatenate without resynchronization.
        let mut stream = fa.clone();
        stream.extend_from_slice(&fb);
        match c.decode_request(&stream) {
            Decoded::Frame { msg, consumed } => {
                prop_assert_eq!(msg, a);
                prop_assert_eq!(consumed, fa.len());
                match c.decode_request(&stream[consumed..]) {
                    Decoded::Frame { msg, .. } => prop_assert_eq!(msg, b),
                    other => return Err(TestCaseError::fail(format!("{other:?}"))),
                }
            }
            other => return Err(TestCaseError::fail(format!("{other:?}"))),
        }
    }

    #[test]
    fn page_payload_single_bit_flips_detected(page in arb_page(), bit in 0usize..(PAGE_SIZE * 8)) {
        let c = codec();
        let mut frame = c
            .encode_request(&HtpRequest::PageWrite { cpu: 0, ppn: 42, data: page })
            .unwrap();
        frame[10 + bit / 8] ^= 1 << (bit % 8);
        match c.decode_request(&frame) {
            Decoded::Invalid { error, consumed, .. } => {
                prop_assert_eq!(consumed, frame.len());
                let is_crc = matches!(error, fase::wire::WireError::Crc { .. });
                prop_assert!(is_crc);
            }
            other => return Err(TestCaseError::fail(format!("flip undetected: {other:?}"))),
        }
    }
}
