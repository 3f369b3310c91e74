//! Raw serial-device backend: frames go over a character device configured
//! to the requested baud and frame format. Response frames are re-assembled
//! with the protocol's length rules (no extra framing on the wire).

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::os::unix::io::AsRawFd;
use std::path::Path;
use std::time::Duration;

use super::{Channel, ChannelConfig, ChannelError, Parity};
use crate::wire;

pub struct SerialChannel {
    file: Option<File>,
    buf: Vec<u8>,
    timeout: Option<Duration>,
}

fn baud_constant(baud: u64) -> Option<libc::speed_t> {
    Some(match baud {
        9_600 => libc::B9600,
        19_200 => libc::B19200,
        38_400 => libc::B38400,
        57_600 => libc::B57600,
        115_200 => libc::B115200,
        230_400 => libc::B230400,
        460_800 => libc::B460800,
        921_600 => libc::B921600,
        1_000_000 => libc::B1000000,
        2_000_000 => libc::B2000000,
        _ => return None,
    })
}

impl SerialChannel {
    pub fn open(dev: &Path, cfg: &ChannelConfig) -> Result<Self, ChannelError> {
        Self::open_with_timeout(dev, cfg, None)
    }

    pub fn open_with_timeout(dev: &Path, cfg: &ChannelConfig, timeout: Option<Duration>) -> Result<Self, ChannelError> {
        let file = OpenOptions::new().read(true).write(true).open(dev)?;
        let fd = file.as_raw_fd();
        let speed = baud_constant(cfg.baud)
            .ok_or_else(|| ChannelError::Io(format!("unsupported baud rate {}", cfg.baud)))?;
        // Raw 8-bit mode with the requested parity/stop bits.
        unsafe {
            let mut tio: libc::termios = std::mem::zeroed();
            if libc::tcgetattr(fd, &mut tio) != 0 {
                return Err(ChannelError::Io("tcgetattr failed".into()));
            }
            libc::cfmakeraw(&mut tio);
            libc::cfsetispeed(&mut tio, speed);
            libc::cfsetospeed(&mut tio, speed);
            tio.c_cflag &= !(libc::PARENB | libc::PARODD | libc::CSTOPB);
            match cfg.frame.parity {
                Parity::None => {}
                Parity::Even => tio.c_cflag |= libc::PARENB,
                Parity::Odd => tio.c_cflag |= libc::PARENB | libc::PARODD,
            }
            if cfg.frame.stop_bits == 2 {
                tio.c_cflag |= libc::CSTOPB;
            }
            // Block until at least one byte arrives.
            tio.c_cc[libc::VMIN] = 1;
            tio.c_cc[libc::VTIME] = 0;
            if libc::tcsetattr(fd, libc::TCSANOW, &tio) != 0 {
                return Err(ChannelError::Io("tcsetattr failed".into()));
            }
        }
        Ok(SerialChannel { file: Some(file), buf: Vec::new(), timeout })
    }

    fn wait_readable(&self) -> Result<(), ChannelError> {
        let file = self.file.as_ref().ok_or(ChannelError::Closed)?;
        let millis = match self.timeout {
            Some(t) => t.as_millis().min(i32::MAX as u128) as i32,
            None => -1,
        };
        let mut pfd = libc::pollfd { fd: file.as_raw_fd(), events: libc::POLLIN, revents: 0 };
        let r = unsafe { libc::poll(&mut pfd, 1, millis) };
        match r {
            0 => Err(ChannelError::Timeout),
            n if n < 0 => Err(ChannelError::Io("poll failed".into())),
            _ => Ok(()),
        }
    }

    fn take_frame(&mut self) -> Result<Option<Vec<u8>>, ChannelError> {
        if self.buf.len() < 2 {
            return Ok(None);
        }
        let status = wire::Status::from_byte(self.buf[1])
            .ok_or_else(|| ChannelError::Desync(format!("bad status byte {:#04x}", self.buf[1])))?;
        let len = wire::response_len(self.buf[0], status)
            .ok_or_else(|| ChannelError::Desync(format!("bad echo opcode {:#04x}", self.buf[0])))?;
        if self.buf.len() < len {
            return Ok(None);
        }
        Ok(Some(self.buf.drain(..len).collect()))
    }
}

impl Channel for SerialChannel {
    fn submit(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        let file = self.file.as_mut().ok_or(ChannelError::Closed)?;
        file.write_all(frame)?;
        Ok(())
    }

    fn poll_response(&mut self) -> Result<Option<Vec<u8>>, ChannelError> {
        if self.file.is_none() {
            return Err(ChannelError::Closed);
        }
        self.take_frame()
    }

    fn wait_response(&mut self) -> Result<Vec<u8>, ChannelError> {
        loop {
            if let Some(f) = self.take_frame()? {
                return Ok(f);
            }
            self.wait_readable()?;
            let file = self.file.as_mut().ok_or(ChannelError::Closed)?;
            let mut tmp = [0u8; 4096];
            let n = file.read(&mut tmp)?;
            if n == 0 {
                return Err(ChannelError::Closed);
            }
            self.buf.extend_from_slice(&tmp[..n]);
        }
    }

    fn close(&mut self) {
        self.file = None;
    }
}
