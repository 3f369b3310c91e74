//! Protocol-level traffic comparisons between the consolidated requests and
//! the direct-mode baseline, plus wire-cost assertions that are pinned by
//! the frame layout.

use fase::machine::MachineConfig;
use fase::runtime::link::HtpClient;
use fase::transport::{Channel, ChannelConfig, InProcessChannel};

fn client(direct: bool) -> HtpClient<InProcessChannel> {
    let mcfg = MachineConfig { cores: 1, mem_size: 1 << 24, direct_enabled: true, ..Default::default() };
    let chan = InProcessChannel::new(mcfg, ChannelConfig::default());
    let mut c = HtpClient::new(chan, 1);
    c.set_direct(direct);
    c
}

#[test]
fn page_write_traffic_is_under_one_percent_of_direct() {
    let ppn = 0x80000 + 8;
    let data = Box::new([0xa5u8; 4096]);

    let mut htp = client(false);
    htp.page_write(0, ppn, data.clone()).unwrap();
    let htp_bytes = htp.tp.ledger.total_bytes();

    let mut direct = client(true);
    direct.page_write(0, ppn, data).unwrap();
    let direct_bytes = direct.tp.ledger.total_bytes();

    // Frame arithmetic: one PageWrite is 4108+2 bytes; the direct expansion
    // is 7 frames per byte at 140 wire bytes per unit.
    assert_eq!(htp_bytes, 4110);
    assert_eq!(direct_bytes, 4096 * 140);
    let ratio = htp_bytes as f64 / direct_bytes as f64;
    assert!(ratio < 0.01, "ratio {ratio}");

    // Both paths must produce identical target memory.
    let a = htp.tp.chan.machine().unwrap().target.mem.read_u64((ppn << 12) + 64).unwrap();
    let b = direct.tp.chan.machine().unwrap().target.mem.read_u64((ppn << 12) + 64).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, u64::from_le_bytes([0xa5; 8]));
}

#[test]
fn direct_frame_expansion_count() {
    // 2 saves + 2 addr/data + 1 inject + 2 restores = 7 frames per unit.
    let mut direct = client(true);
    direct.mem_write(0, 0x8000_0100, 7).unwrap();
    let sent_frames: u64 = direct
        .tp
        .ledger
        .opcodes
        .values()
        .map(|c| c.frames_sent)
        .sum();
    assert_eq!(sent_frames, 7);

    let mut htp = client(false);
    htp.mem_write(0, 0x8000_0100, 7).unwrap();
    assert_eq!(htp.tp.ledger.bytes_sent, 18);
    assert_eq!(htp.tp.ledger.bytes_received, 2);
}

#[test]
fn direct_word_read_round_trips() {
    let mut direct = client(true);
    direct.mem_write(0, 0x8000_0200, 0xdead_beef).unwrap();
    assert_eq!(direct.mem_read(0, 0x8000_0200).unwrap(), 0xdead_beef);
    // Scratch registers are restored by the expansion itself.
    assert_eq!(direct.reg_read(0, 5).unwrap(), 0);
    assert_eq!(direct.reg_read(0, 6).unwrap(), 0);
}

#[test]
fn direct_page_copy_and_read_match_htp_semantics() {
    let src = 0x80000 + 4;
    let dst = 0x80000 + 5;
    let mut page = Box::new([0u8; 4096]);
    for (i, b) in page.iter_mut().enumerate() {
        *b = (i % 251) as u8;
    }
    let mut direct = client(true);
    direct.page_write(0, src, page.clone()).unwrap();
    direct.page_copy(0, src, dst).unwrap();
    let got = direct.page_read(0, dst).unwrap();
    assert_eq!(got, page);
}
