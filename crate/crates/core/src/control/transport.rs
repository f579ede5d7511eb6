use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::message::Message;
use super::worker::LcHost;
use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Inproc,
    Socket,
}

impl std::str::FromStr for TransportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inproc" => Ok(Self::Inproc),
            "socket" => Ok(Self::Socket),
            other => Err(format!("unknown transport {other:?}, expected inproc or socket")),
        }
    }
}

/// Coordinator side of the link to the local controllers.
pub trait Transport {
    fn send(&mut self, msg: Message) -> Result<(), ControlError>;
    fn recv(&mut self) -> Result<Message, ControlError>;
}

/// Value-passing queues; the host runs when the coordinator asks for a reply.
pub struct InProcess {
    host: LcHost,
    inbox: VecDeque<Message>,
    outbox: VecDeque<Message>,
}

impl InProcess {
    pub fn new(host: LcHost) -> Self {
        Self {
            host,
            inbox: VecDeque::new(),
            outbox: VecDeque::new(),
        }
    }

    pub fn host_mut(&mut self) -> &mut LcHost {
        &mut self.host
    }
}

impl Transport for InProcess {
    fn send(&mut self, msg: Message) -> Result<(), ControlError> {
        self.inbox.push_back(msg);
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, ControlError> {
        loop {
            if let Some(m) = self.outbox.pop_front() {
                return Ok(m);
            }
            let next = self
                .inbox
                .pop_front()
                .ok_or_else(|| ControlError::Timeout("no request is pending, so no reply can arrive".into()))?;
            self.outbox.extend(self.host.handle(next));
        }
    }
}

#[cfg(feature = "socket")]
pub use socket::{serve, SocketTransport};

#[cfg(feature = "socket")]
mod socket {
    use std::io::{BufRead, BufReader, ErrorKind, Write};
    use std::net::{Shutdown, TcpListener, TcpStream};
    use std::thread::JoinHandle;
    use std::time::Duration;

    use super::*;
    use crate::control::message::{Handshake, PROTOCOL};

    /// Newline-delimited JSON over a loopback TCP connection to a host
    /// running on its own thread.
    pub struct SocketTransport {
        reader: BufReader<TcpStream>,
        writer: TcpStream,
        server: Option<JoinHandle<Result<(), ControlError>>>,
    }

    fn read_line(reader: &mut BufReader<TcpStream>) -> Result<Option<String>, ControlError> {
        let mut line = String::new();
        match reader.read_line(&mut line) {
            Ok(0) => Ok(None),
            Ok(_) => Ok(Some(line)),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                Err(ControlError::Timeout(format!("socket read: {e}")))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Serves one connection: checks the handshake, then answers every
    /// message line until the peer closes.
    pub fn serve(stream: TcpStream, mut host: LcHost, timeout: Duration) -> Result<(), ControlError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        let mut writer = stream.try_clone()?;
        let mut reader = BufReader::new(stream);
        let hello = read_line(&mut reader)?.ok_or_else(|| ControlError::Protocol("connection closed before handshake".into()))?;
        let hs: Handshake = serde_json::from_str(hello.trim_end()).map_err(|e| ControlError::Malformed(e.to_string()))?;
        if hs.proto != PROTOCOL || hs.n_zones != host.n_zones() || hs.horizon != host.horizon {
            return Err(ControlError::Protocol(format!("handshake {hs:?} does not match this host")));
        }
        loop {
            let line = match read_line(&mut reader) {
                Ok(Some(l)) => l,
                Ok(None) => return Ok(()),
                // an idle coordinator is not an error for the host
                Err(ControlError::Timeout(_)) => continue,
                Err(e) => return Err(e),
            };
            let replies = match Message::from_line(&line) {
                Ok(m) => host.handle(m),
                Err(e) => vec![Message::Abort { reason: e.to_string() }],
            };
            for r in replies {
                writer.write_all(r.to_line()?.as_bytes())?;
            }
            writer.flush()?;
        }
    }

    impl SocketTransport {
        /// Starts `host` on a loopback listener and connects to it.
        pub fn spawn(host: LcHost, timeout: Duration) -> Result<Self, ControlError> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let hs = Handshake {
                proto: PROTOCOL.to_string(),
                n_zones: host.n_zones(),
                horizon: host.horizon,
            };
            let server = std::thread::spawn(move || {
                let (stream, _) = listener.accept()?;
                serve(stream, host, timeout)
            });
            let stream = TcpStream::connect(addr)?;
            stream.set_nodelay(true)?;
            stream.set_read_timeout(Some(timeout))?;
            let mut writer = stream.try_clone()?;
            let mut line = serde_json::to_string(&hs).map_err(|e| ControlError::Malformed(e.to_string()))?;
            line.push('\n');
            writer.write_all(line.as_bytes())?;
            Ok(Self {
                reader: BufReader::new(stream),
                writer,
                server: Some(server),
            })
        }
    }

    impl Transport for SocketTransport {
        fn send(&mut self, msg: Message) -> Result<(), ControlError> {
            self.writer.write_all(msg.to_line()?.as_bytes())?;
            Ok(())
        }

        fn recv(&mut self) -> Result<Message, ControlError> {
            self.writer.flush()?;
            let line = read_line(&mut self.reader)?.ok_or_else(|| ControlError::Protocol("local controllers hung up".into()))?;
            Message::from_line(&line)
        }
    }

    impl Drop for SocketTransport {
        fn drop(&mut self) {
            let _ = self.writer.shutdown(Shutdown::Write);
            if let Some(h) = self.server.take() {
                let _ = h.join();
            }
        }
    }
}
