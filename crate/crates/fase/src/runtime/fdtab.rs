//! Target file descriptors mapped onto host files. Threads share the table
//! (CLONE_FILES is implied by thread creation); dup'd descriptors share one
//! open-file description and therefore one cursor.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::rc::Rc;

use crate::runtime::errno::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Stdin,
    Stdout,
    Stderr,
    Regular,
    /// Pipe-like host handle: reads may block, so they are delegated.
    Stream,
}

pub struct OpenFile {
    pub kind: FileKind,
    pub file: Option<File>,
    pub path: Option<PathBuf>,
    pub flags: i32,
    /// Deterministic identity for fstat.
    pub ino: u64,
}

impl OpenFile {
    pub fn is_blocking_read(&self) -> bool {
        matches!(self.kind, FileKind::Stdin | FileKind::Stream)
    }
}

pub struct FdEntry {
    pub obj: Rc<RefCell<OpenFile>>,
    pub cloexec: bool,
}

pub struct FdTable {
    entries: BTreeMap<i32, FdEntry>,
    next_ino: u64,
}

pub const AT_FDCWD: i64 = -100;

impl FdTable {
    /// Target fds 0,1,2 exist at startup.
    pub fn new() -> Self {
        let mut t = FdTable { entries: BTreeMap::new(), next_ino: 100 };
        for (fd, kind) in [(0, FileKind::Stdin), (1, FileKind::Stdout), (2, FileKind::Stderr)] {
            t.entries.insert(
                fd,
                FdEntry {
                    obj: Rc::new(RefCell::new(OpenFile { kind, file: None, path: None, flags: 0, ino: fd as u64 + 1 })),
                    cloexec: false,
                },
            );
        }
        t
    }

    /// Replace a std stream with a concrete host handle (used by tests to
    /// feed stdin from a pipe).
    pub fn set_std_handle(&mut self, fd: i32, file: File, kind: FileKind) {
        let ino = self.next_ino;
        self.next_ino += 1;
        self.entries.insert(
            fd,
            FdEntry { obj: Rc::new(RefCell::new(OpenFile { kind, file: Some(file), path: None, flags: 0, ino })), cloexec: false },
        );
    }

    fn lowest_free(&self, from: i32) -> i32 {
        let mut fd = from;
        while self.entries.contains_key(&fd) {
            fd += 1;
        }
        fd
    }

    pub fn insert_file(&mut self, file: File, path: PathBuf, flags: i32) -> i32 {
        let fd = self.lowest_free(3);
        let ino = self.next_ino;
        self.next_ino += 1;
        self.entries.insert(
            fd,
            FdEntry {
                obj: Rc::new(RefCell::new(OpenFile { kind: FileKind::Regular, file: Some(file), path: Some(path), flags, ino })),
                cloexec: false,
            },
        );
        fd
    }

    pub fn get(&self, fd: i64) -> Option<&FdEntry> {
        if fd < 0 || fd > i32::MAX as i64 {
            return None;
        }
        self.entries.get(&(fd as i32))
    }

    pub fn dup(&mut self, fd: i64, min: i32, cloexec: bool) -> Result<i32, i64> {
        let obj = self.get(fd).ok_or(-EBADF)?.obj.clone();
        let new = self.lowest_free(min);
        self.entries.insert(new, FdEntry { obj, cloexec });
        Ok(new)
    }

    pub fn close(&mut self, fd: i64) -> Result<(), i64> {
        if fd < 0 || fd > i32::MAX as i64 {
            return Err(-EBADF);
        }
        self.entries.remove(&(fd as i32)).map(|_| ()).ok_or(-EBADF)
    }

    pub fn set_cloexec(&mut self, fd: i64, on: bool) -> Result<(), i64> {
        if fd < 0 || fd > i32::MAX as i64 {
            return Err(-EBADF);
        }
        match self.entries.get_mut(&(fd as i32)) {
            Some(e) => {
                e.cloexec = on;
                Ok(())
            }
            None => Err(-EBADF),
        }
    }
}

impl Default for FdTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Host-side read at the shared cursor.
pub fn host_read(obj: &Rc<RefCell<OpenFile>>, max: usize) -> Result<Vec<u8>, i64> {
    let mut o = obj.borrow_mut();
    match o.kind {
        FileKind::Stdout | FileKind::Stderr => Err(-EBADF),
        FileKind::Stdin => {
            let mut buf = vec![0u8; max];
            let n = std::io::stdin().read(&mut buf).map_err(|_| -EIO)?;
            buf.truncate(n);
            Ok(buf)
        }
        _ => {
            let f = o.file.as_mut().ok_or(-EBADF)?;
            let mut buf = vec![0u8; max];
            let n = f.read(&mut buf).map_err(|_| -EIO)?;
            buf.truncate(n);
            Ok(buf)
        }
    }
}

pub fn host_write(obj: &Rc<RefCell<OpenFile>>, data: &[u8], stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i64, i64> {
    let mut o = obj.borrow_mut();
    match o.kind {
        FileKind::Stdin => Err(-EBADF),
        FileKind::Stdout => {
            stdout.write_all(data).map_err(|_| -EIO)?;
            stdout.flush().ok();
            Ok(data.len() as i64)
        }
        FileKind::Stderr => {
            stderr.write_all(data).map_err(|_| -EIO)?;
            stderr.flush().ok();
            Ok(data.len() as i64)
        }
        _ => {
            let f = o.file.as_mut().ok_or(-EBADF)?;
            f.write_all(data).map_err(|_| -EIO)?;
            Ok(data.len() as i64)
        }
    }
}

pub fn host_seek(obj: &Rc<RefCell<OpenFile>>, offset: i64, whence: i64) -> Result<i64, i64> {
    let mut o = obj.borrow_mut();
    if !matches!(o.kind, FileKind::Regular) {
        return Err(-ESPIPE);
    }
    let f = o.file.as_mut().ok_or(-EBADF)?;
    let pos = match whence {
        0 => SeekFrom::Start(offset as u64),
        1 => SeekFrom::Current(offset),
        2 => SeekFrom::End(offset),
        _ => return Err(-EINVAL),
    };
    f.seek(pos).map(|p| p as i64).map_err(|_| -EINVAL)
}

/// Deterministic stat image: sizes and modes from the host, times zeroed.
pub struct StatImage {
    pub ino: u64,
    pub mode: u32,
    pub size: i64,
}

pub fn host_stat(obj: &Rc<RefCell<OpenFile>>) -> Result<StatImage, i64> {
    let o = obj.borrow();
    match o.kind {
        FileKind::Stdin | FileKind::Stdout | FileKind::Stderr => {
            Ok(StatImage { ino: o.ino, mode: 0o20620, size: 0 }) // character device
        }
        FileKind::Stream => Ok(StatImage { ino: o.ino, mode: 0o10600, size: 0 }), // fifo
        FileKind::Regular => {
            let f = o.file.as_ref().ok_or(-EBADF)?;
            let md = f.metadata().map_err(|_| -EIO)?;
            let mode = if md.is_dir() { 0o40755 } else { 0o100644 };
            Ok(StatImage { ino: o.ino, mode, size: md.len() as i64 })
        }
    }
}

/// Serialize a riscv64 `struct stat` (asm-generic, 128 bytes).
pub fn encode_stat(st: &StatImage) -> [u8; 128] {
    let mut b = [0u8; 128];
    let mut put = |off: usize, v: u64, len: usize| {
        b[off..off + len].copy_from_slice(&v.to_le_bytes()[..len]);
    };
    put(0, 1, 8); // st_dev
    put(8, st.ino, 8);
    put(16, st.mode as u64, 4);
    put(20, 1, 4); // st_nlink
    put(24, 1000, 4); // st_uid
    put(28, 1000, 4); // st_gid
    put(32, 0, 8); // st_rdev
    put(48, st.size as u64, 8);
    put(56, 4096, 4); // st_blksize
    put(64, ((st.size + 511) / 512) as u64, 8); // st_blocks
    // atime/mtime/ctime stay zero for determinism.
    b
}
