//! Byte transports between the simulated bot and the ground station.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::thread;

/// Ordered, reliable byte pipe polled once per simulation step.
pub trait Link {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;
    /// Appends whatever has arrived since the last poll; never blocks.
    fn poll(&mut self, out: &mut Vec<u8>) -> io::Result<()>;
}

/// Discards everything; nothing ever arrives.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullLink;

impl Link for NullLink {
    fn send(&mut self, _bytes: &[u8]) -> io::Result<()> {
        Ok(())
    }
    fn poll(&mut self, _out: &mut Vec<u8>) -> io::Result<()> {
        Ok(())
    }
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        (**self).send(bytes)
    }
    fn poll(&mut self, out: &mut Vec<u8>) -> io::Result<()> {
        (**self).poll(out)
    }
}

/// TCP client link. Reads happen on a helper thread so polling stays
/// non-blocking while writes go straight to the socket.
pub struct TcpLink {
    stream: TcpStream,
    rx: Receiver<io::Result<Vec<u8>>>,
    closed: bool,
}

impl TcpLink {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            loop {
                match reader.read(&mut buf) {
                    Ok(0) => {
                        let _ = tx.send(Err(io::ErrorKind::UnexpectedEof.into()));
                        break;
                    }
                    Ok(n) => {
                        if tx.send(Ok(buf[..n].to_vec())).is_err() {
                            break;
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(Self {
            stream,
            rx,
            closed: false,
        })
    }
}

impl Link for TcpLink {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)
    }

    fn poll(&mut self, out: &mut Vec<u8>) -> io::Result<()> {
        if self.closed {
            return Err(io::ErrorKind::NotConnected.into());
        }
        loop {
            match self.rx.try_recv() {
                Ok(Ok(chunk)) => out.extend_from_slice(&chunk),
                Ok(Err(e)) => {
                    self.closed = true;
                    return Err(e);
                }
                Err(TryRecvError::Empty) => return Ok(()),
                Err(TryRecvError::Disconnected) => {
                    self.closed = true;
                    return Err(io::ErrorKind::NotConnected.into());
                }
            }
        }
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}
