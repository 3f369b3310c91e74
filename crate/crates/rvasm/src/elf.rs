//! Minimal ELF64 writer for riscv64 Linux executables.
//!
//! Emits ET_EXEC or ET_DYN images with PT_LOAD segments (and an optional
//! PT_INTERP). The first load segment absorbs the ELF header and program
//! headers so AT_PHDR points into mapped memory, as linkers lay real
//! binaries out.

pub const ET_EXEC: u16 = 2;
pub const ET_DYN: u16 = 3;
pub const EM_RISCV: u16 = 243;

pub const PF_X: u32 = 1;
pub const PF_W: u32 = 2;
pub const PF_R: u32 = 4;

const PT_LOAD: u32 = 1;
const PT_INTERP: u32 = 3;

const EHDR_SIZE: usize = 64;
const PHDR_SIZE: usize = 56;
const PAGE: u64 = 4096;

#[derive(Debug, Clone)]
pub struct Section {
    pub vaddr: u64,
    pub bytes: Vec<u8>,
    /// Zero-initialized tail past `bytes` (p_memsz = bytes.len() + bss).
    pub bss: u64,
    pub flags: u32,
}

pub struct ElfBuilder {
    e_type: u16,
    entry: u64,
    sections: Vec<Section>,
    interp: Option<String>,
}

impl ElfBuilder {
    pub fn new(e_type: u16) -> Self {
        ElfBuilder { e_type, entry: 0, sections: Vec::new(), interp: None }
    }

    pub fn entry(mut self, entry: u64) -> Self {
        self.entry = entry;
        self
    }

    pub fn section(mut self, s: Section) -> Self {
        assert_eq!(s.vaddr % PAGE, 0, "section vaddr must be page aligned");
        self.sections.push(s);
        self
    }

    pub fn interp(mut self, path: &str) -> Self {
        self.interp = Some(path.to_string());
        self
    }

    /// Serialize to ELF file bytes.
    pub fn build(mut self) -> Vec<u8> {
        assert!(!self.sections.is_empty());
        self.sections.sort_by_key(|s| s.vaddr);

        let interp_bytes: Option<Vec<u8>> = self.interp.as_ref().map(|p| {
            let mut b = p.as_bytes().to_vec();
            b.push(0);
            b
        });
        let phnum = self.sections.len() + 1 + interp_bytes.iter().len();

        // Header page is folded into the first section: its PT_LOAD starts one
        // page below the first vaddr and covers ehdr+phdrs(+interp).
        let first_vaddr = self.sections[0].vaddr;
        assert!(first_vaddr >= PAGE || self.e_type == ET_DYN, "no room for the header page");
        let header_vaddr = if self.e_type == ET_DYN && first_vaddr == 0 {
            // ET_DYN images start at vaddr 0; shift sections up one page instead.
            for s in &mut self.sections {
                s.vaddr += PAGE;
            }
            0
        } else {
            first_vaddr - PAGE
        };

        let mut header_page = Vec::with_capacity(PAGE as usize);
        header_page.resize(EHDR_SIZE + phnum * PHDR_SIZE, 0);
        let interp_off = header_page.len();
        if let Some(ib) = &interp_bytes {
            header_page.extend_from_slice(ib);
        }
        assert!(header_page.len() <= PAGE as usize, "too many program headers");

        // File layout: header page, then each section page-aligned in vaddr order.
        let mut file = Vec::new();
        file.extend_from_slice(&header_page);
        let mut phdrs: Vec<[u8; PHDR_SIZE]> = Vec::new();

        // First PT_LOAD: header page + first section, contiguous in vaddr.
        struct Pending {
            offset: u64,
            vaddr: u64,
            filesz: u64,
            memsz: u64,
            flags: u32,
        }
        let mut loads: Vec<Pending> = Vec::new();

        for (i, s) in self.sections.iter().enumerate() {
            while file.len() as u64 % PAGE != 0 {
                file.push(0);
            }
            let offset = file.len() as u64;
            file.extend_from_slice(&s.bytes);
            if i == 0 && s.vaddr == header_vaddr + PAGE {
                // Merge the header page into this load segment.
                loads.push(Pending {
                    offset: 0,
                    vaddr: header_vaddr,
                    filesz: offset + s.bytes.len() as u64,
                    memsz: offset + s.bytes.len() as u64 + s.bss,
                    flags: s.flags | PF_R,
                });
            } else {
                loads.push(Pending {
                    offset,
                    vaddr: s.vaddr,
                    filesz: s.bytes.len() as u64,
                    memsz: s.bytes.len() as u64 + s.bss,
                    flags: s.flags,
                });
            }
        }

        // The merged layout only works when the first section sits exactly one
        // page above the header page; otherwise emit a separate R load for it.
        if loads[0].offset != 0 {
            loads.insert(
                0,
                Pending { offset: 0, vaddr: header_vaddr, filesz: header_page.len() as u64, memsz: header_page.len() as u64, flags: PF_R },
            );
        }

        for l in &loads {
            phdrs.push(phdr(PT_LOAD, l.flags, l.offset, l.vaddr, l.filesz, l.memsz, PAGE));
        }
        if let Some(ib) = &interp_bytes {
            phdrs.push(phdr(
                PT_INTERP,
                PF_R,
                interp_off as u64,
                header_vaddr + interp_off as u64,
                ib.len() as u64,
                ib.len() as u64,
                1,
            ));
        }

        // ELF header.
        let mut eh = [0u8; EHDR_SIZE];
        eh[0..4].copy_from_slice(&[0x7f, b'E', b'L', b'F']);
        eh[4] = 2; // ELFCLASS64
        eh[5] = 1; // little endian
        eh[6] = 1; // version
        eh[16..18].copy_from_slice(&self.e_type.to_le_bytes());
        eh[18..20].copy_from_slice(&EM_RISCV.to_le_bytes());
        eh[20..24].copy_from_slice(&1u32.to_le_bytes());
        eh[24..32].copy_from_slice(&self.entry.to_le_bytes());
        eh[32..40].copy_from_slice(&(EHDR_SIZE as u64).to_le_bytes()); // e_phoff
        eh[40..48].copy_from_slice(&0u64.to_le_bytes()); // e_shoff
        eh[48..52].copy_from_slice(&0u32.to_le_bytes()); // e_flags: soft float, no RVC
        eh[52..54].copy_from_slice(&(EHDR_SIZE as u16).to_le_bytes());
        eh[54..56].copy_from_slice(&(PHDR_SIZE as u16).to_le_bytes());
        eh[56..58].copy_from_slice(&(phdrs.len() as u16).to_le_bytes());
        eh[58..60].copy_from_slice(&(0u16).to_le_bytes()); // e_shentsize
        eh[60..62].copy_from_slice(&0u16.to_le_bytes()); // e_shnum
        eh[62..64].copy_from_slice(&0u16.to_le_bytes()); // e_shstrndx

        file[0..EHDR_SIZE].copy_from_slice(&eh);
        let mut off = EHDR_SIZE;
        for p in &phdrs {
            file[off..off + PHDR_SIZE].copy_from_slice(p);
            off += PHDR_SIZE;
        }
        file
    }
}

fn phdr(p_type: u32, flags: u32, offset: u64, vaddr: u64, filesz: u64, memsz: u64, align: u64) -> [u8; PHDR_SIZE] {
    let mut p = [0u8; PHDR_SIZE];
    p[0..4].copy_from_slice(&p_type.to_le_bytes());
    p[4..8].copy_from_slice(&flags.to_le_bytes());
    p[8..16].copy_from_slice(&offset.to_le_bytes());
    p[16..24].copy_from_slice(&vaddr.to_le_bytes());
    p[24..32].copy_from_slice(&vaddr.to_le_bytes()); // paddr mirrors vaddr
    p[32..40].copy_from_slice(&filesz.to_le_bytes());
    p[40..48].copy_from_slice(&memsz.to_le_bytes());
    p[48..56].copy_from_slice(&align.to_le_bytes());
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exec_image_shape() {
        let file = ElfBuilder::new(ET_EXEC)
            .entry(0x11000)
            .section(Section { vaddr: 0x11000, bytes: vec![0x13, 0, 0, 0], bss: 100, flags: PF_R | PF_X | PF_W })
            .build();
        assert_eq!(&file[0..4], &[0x7f, b'E', b'L', b'F']);
        assert_eq!(u16::from_le_bytes(file[16..18].try_into().unwrap()), ET_EXEC);
        assert_eq!(u16::from_le_bytes(file[18..20].try_into().unwrap()), EM_RISCV);
        // One merged PT_LOAD covering the header page at 0x10000.
        assert_eq!(u16::from_le_bytes(file[56..58].try_into().unwrap()), 1);
        let ph = &file[64..64 + 56];
        assert_eq!(u64::from_le_bytes(ph[16..24].try_into().unwrap()), 0x10000);
        assert_eq!(u64::from_le_bytes(ph[32..40].try_into().unwrap()), 4096 + 4);
        assert_eq!(u64::from_le_bytes(ph[40..48].try_into().unwrap()), 4096 + 4 + 100);
    }
}
