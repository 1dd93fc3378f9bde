//! Length-delimited JSON over TCP. A frame is a 4-byte big-endian length
//! followed by that many bytes of UTF-8 JSON. A connection may open several
//! sessions and can address only its own; they close with the connection.

use std::collections::HashSet;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::thread;

use super::protocol::{parse_client, ClientMessage, ErrorKind, ServerMessage};
use super::service::SessionService;

/// Largest accepted frame.
pub const MAX_FRAME: usize = 256 << 20;

/// Reads one frame; `None` at a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {n} bytes exceeds {MAX_FRAME}"),
        ));
    }
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn write_frame(w: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
    let n = u32::try_from(bytes.len())
        .ok()
        .filter(|&n| n as usize <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&n.to_be_bytes())?;
    w.write_all(bytes)?;
    w.flush()
}

fn handle_connection(stream: TcpStream, service: SessionService) -> io::Result<()> {
    let (tx, rx) = mpsc::channel::<ServerMessage>();
    let mut writer = BufWriter::new(stream.try_clone()?);
    let write_thread = thread::spawn(move || -> io::Result<()> {
        for msg in rx {
            write_frame(
                &mut writer,
                &serde_json::to_vec(&msg).expect("server messages serialize"),
            )?;
        }
        Ok(())
    });
    let mut reader = BufReader::new(stream);
    let mut owned = HashSet::new();
    let result = loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        };
        let parsed = std::str::from_utf8(&frame)
            .map_err(|e| ServerMessage::error(None, ErrorKind::MalformedMessage, e.to_string()))
            .and_then(parse_client);
        let msg = match parsed {
            Ok(m) => m,
            Err(reply) => {
                let _ = tx.send(reply);
                continue;
            }
        };
        if let Some(id) = msg.session() {
            if !owned.contains(&id) {
                let _ = tx.send(ServerMessage::error(
                    Some(id),
                    ErrorKind::InvalidSession,
                    format!("no session {id} on this connection"),
                ));
                continue;
            }
            if matches!(msg, ClientMessage::Close { .. }) {
                owned.remove(&id);
            }
        }
        if let Some(id) = service.dispatch(msg, &tx) {
            owned.insert(id);
        }
    };
    for id in owned {
        service.close(id);
    }
    drop(tx);
    // the writer ends once every session worker has dropped its sender
    let _ = write_thread.join();
    result
}

/// Accepts connections forever, one thread per connection.
pub fn serve(listener: TcpListener, service: SessionService) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let service = service.clone();
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = handle_connection(stream, service) {
                log::warn!("connection {peer:?}: {e}");
            }
        });
    }
    Ok(())
}

/// Blocking client for tests, examples and scripting.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    pub fn send(&mut self, msg: &ClientMessage) -> io::Result<()> {
        write_frame(
            &mut self.writer,
            &serde_json::to_vec(msg).expect("client messages serialize"),
        )
    }

    /// Sends raw bytes as one frame.
    pub fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        write_frame(&mut self.writer, bytes)
    }

    /// Next server message; `UnexpectedEof` once the server hangs up.
    pub fn recv(&mut self) -> io::Result<ServerMessage> {
        let frame = read_frame(&mut self.reader)?
            .ok_or_else(|| io::Error::from(io::ErrorKind::UnexpectedEof))?;
        serde_json::from_slice(&frame).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn set_read_timeout(&self, timeout: Option<std::time::Duration>) -> io::Result<()> {
        self.reader.get_ref().set_read_timeout(timeout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_quad_mesh;
    use crate::mesh::Grid;
    use crate::session::{Payload, SessionStatus};

    fn server() -> std::net::SocketAddr {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || serve(listener, SessionService::default()));
        addr
    }

    #[test]
    fn frames_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{}").unwrap();
        write_frame(&mut buf, b"[1]").unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"{}");
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"[1]");
        assert!(read_frame(&mut r).unwrap().is_none());
        let huge = (MAX_FRAME as u32 + 1).to_be_bytes();
        assert!(read_frame(&mut huge.as_slice()).is_err());
    }

    #[test]
    fn binary_session_over_tcp() {
        let mut c = Client::connect(server()).unwrap();
        c.send(&ClientMessage::Open { binary: true }).unwrap();
        let ServerMessage::Opened {
            session,
            binary: true,
        } = c.recv().unwrap()
        else {
            panic!()
        };
        let g = Grid::planar(4, 4, 1.0);
        let mut obj = Vec::new();
        write_quad_mesh(g.mesh(), &mut obj).unwrap();
        c.send(&ClientMessage::LoadMesh {
            session,
            obj: String::from_utf8(obj).unwrap(),
            fixed_boundary: true,
            fixed: vec![],
        })
        .unwrap();
        c.send(&ClientMessage::Start { session }).unwrap();
        let mut event = None;
        loop {
            match c.recv().unwrap() {
                ServerMessage::Event(s) => event = Some(s),
                ServerMessage::Status {
                    status: SessionStatus::Converged | SessionStatus::Unreachable,
                    ..
                } => break,
                _ => {}
            }
        }
        let s = event.unwrap();
        assert!(matches!(s.positions, Payload::Binary { .. }));
        assert_eq!(s.positions.values().unwrap().len(), 3 * 16);
        // another connection cannot address this session
        let mut other = Client::connect(c.reader.get_ref().peer_addr().unwrap()).unwrap();
        other.send(&ClientMessage::Pause { session }).unwrap();
        assert!(matches!(
            other.recv().unwrap(),
            ServerMessage::Error {
                kind: ErrorKind::InvalidSession,
                ..
            }
        ));
        c.send(&ClientMessage::Close { session }).unwrap();
        assert!(matches!(c.recv().unwrap(), ServerMessage::Closed { .. }));
    }

    #[test]
    fn garbage_frames_are_malformed() {
        let mut c = Client::connect(server()).unwrap();
        c.send_raw(b"\xff\xfe").unwrap();
        c.send_raw(br#"{"type":"load_mesh"}"#).unwrap();
        for _ in 0..2 {
            assert!(matches!(
                c.recv().unwrap(),
                ServerMessage::Error {
                    kind: ErrorKind::MalformedMessage,
                    ..
                }
            ));
        }
    }
}
