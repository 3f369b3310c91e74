//! Local stream-socket backend: 4-byte little-endian length prefix per
//! frame, both directions. The target side runs the same deterministic
//! machine automaton, so protocol behavior matches the in-process backend;
//! only wall-clock pacing differs.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use super::{Channel, ChannelError};
use crate::machine::Machine;

pub struct SocketChannel {
    stream: Option<TcpStream>,
    buf: Vec<u8>,
    timeout: Option<Duration>,
}

impl SocketChannel {
    pub fn connect(addr: &str, timeout: Option<Duration>) -> Result<Self, ChannelError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(SocketChannel { stream: Some(stream), buf: Vec::new(), timeout })
    }

    fn stream(&mut self) -> Result<&mut TcpStream, ChannelError> {
        self.stream.as_mut().ok_or(ChannelError::Closed)
    }

    fn take_frame(&mut self) -> Option<Vec<u8>> {
        if self.buf.len() < 4 {
            return None;
        }
        let len = u32::from_le_bytes(self.buf[..4].try_into().unwrap()) as usize;
        if self.buf.len() < 4 + len {
            return None;
        }
        self.buf.drain(..4);
        Some(self.buf.drain(..len).collect())
    }

    fn fill(&mut self, block: bool) -> Result<bool, ChannelError> {
        let timeout = self.timeout;
        let stream = self.stream()?;
        stream.set_read_timeout(if block { timeout } else { Some(Duration::from_millis(1)) })?;
        let mut tmp = [0u8; 4096];
        match stream.read(&mut tmp) {
            Ok(0) => Err(ChannelError::Closed),
            Ok(n) => {
                self.buf.extend_from_slice(&tmp[..n]);
                Ok(true)
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {
                if block {
                    Err(ChannelError::Timeout)
                } else {
                    Ok(false)
                }
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Channel for SocketChannel {
    fn submit(&mut self, frame: &[u8]) -> Result<(), ChannelError> {
        let stream = self.stream()?;
        stream.write_all(&(frame.len() as u32).to_le_bytes())?;
        stream.write_all(frame)?;
        Ok(())
    }

    fn poll_response(&mut self) -> Result<Option<Vec<u8>>, ChannelError> {
        if let Some(f) = self.take_frame() {
            return Ok(Some(f));
        }
        self.fill(false)?;
        Ok(self.take_frame())
    }

    fn wait_response(&mut self) -> Result<Vec<u8>, ChannelError> {
        loop {
            if let Some(f) = self.take_frame() {
                return Ok(f);
            }
            self.fill(true)?;
        }
    }

    fn close(&mut self) {
        self.stream = None;
    }
}

/// Target-side server: accepts one connection and drives the machine until
/// the peer disconnects. Parked Next waits run the cores in slices while
/// polling the socket for further requests.
pub fn serve_target_on(listener: TcpListener, mut machine: Machine) -> Result<Machine, ChannelError> {
    let (mut stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let mut inbuf: Vec<u8> = Vec::new();
    let mut tmp = [0u8; 4096];

    let send_frames = |stream: &mut TcpStream, bytes: &[u8], carry: &mut Vec<u8>| -> Result<(), ChannelError> {
        // Split the raw byte stream back into frames for length-prefixing.
        carry.extend_from_slice(bytes);
        loop {
            if carry.len() < 2 {
                return Ok(());
            }
            let status = match crate::wire::Status::from_byte(carry[1]) {
                Some(s) => s,
                None => return Err(ChannelError::Desync("bad status from machine".into())),
            };
            let len = match crate::wire::response_len(carry[0], status) {
                Some(l) => l,
                None => return Err(ChannelError::Desync("bad echo from machine".into())),
            };
            if carry.len() < len {
                return Ok(());
            }
            let frame: Vec<u8> = carry.drain(..len).collect();
            stream.write_all(&(frame.len() as u32).to_le_bytes())?;
            stream.write_all(&frame)?;
        }
    };

    let mut carry: Vec<u8> = Vec::new();
    loop {
        let busy = machine.can_make_progress();
        stream.set_read_timeout(Some(Duration::from_millis(if busy { 1 } else { 200 })))?;
        match stream.read(&mut tmp) {
            Ok(0) => return Ok(machine),
            Ok(n) => inbuf.extend_from_slice(&tmp[..n]),
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {}
            Err(e) => return Err(e.into()),
        }
        // Feed complete length-prefixed request frames.
        while inbuf.len() >= 4 {
            let len = u32::from_le_bytes(inbuf[..4].try_into().unwrap()) as usize;
            if inbuf.len() < 4 + len {
                break;
            }
            inbuf.drain(..4);
            let frame: Vec<u8> = inbuf.drain(..len).collect();
            let out = machine.feed(&frame).map_err(|e| ChannelError::TargetFatal(e.to_string()))?;
            send_frames(&mut stream, &out, &mut carry)?;
        }
        if machine.can_make_progress() {
            let out = machine.run_slice(200_000).map_err(|e| ChannelError::TargetFatal(e.to_string()))?;
            send_frames(&mut stream, &out, &mut carry)?;
        }
    }
}
