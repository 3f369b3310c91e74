//! CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection, no
//! final xor. Protects the 4096-byte page payloads in both directions.

const POLY: u16 = 0x1021;

const TABLE: [u16; 256] = build_table();

const fn build_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ POLY } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn crc16(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xffff;
    for &b in data {
        crc = (crc << 8) ^ TABLE[((crc >> 8) ^ b as u16) as usize];
    }
    crc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent brute-force oracle: processes one bit at a time.
    fn crc16_bitwise(data: &[u8]) -> u16 {
        let mut crc: u16 = 0xffff;
        for &byte in data {
            crc ^= (byte as u16) << 8;
            for _ in 0..8 {
                crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
            }
        }
        crc
    }

    #[test]
    fn empty_input_is_init_value() {
        assert_eq!(crc16(b""), 0xffff);
    }

    #[test]
    fn standard_check_value() {
        assert_eq!(crc16(b"123456789"), 0x29b1);
        assert_eq!(crc16_bitwise(b"123456789"), 0x29b1);
    }

    #[test]
    fn zero_page_matches_bitwise_oracle() {
        let page = [0u8; 4096];
        assert_eq!(crc16(&page), crc16_bitwise(&page));
    }

    #[test]
    fn table_matches_oracle_on_varied_inputs() {
        let mut data = Vec::new();
        for i in 0..1024u32 {
            data.push((i.wrapping_mul(2654435761) >> 13) as u8);
            assert_eq!(crc16(&data), crc16_bitwise(&data), "len {}", data.len());
        }
    }
}
