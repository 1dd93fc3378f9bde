//! Wire messages of interactive sessions. Every message is a JSON object
//! with a `type` tag; large float arrays travel either as JSON numbers or,
//! when negotiated at `open`, as base64 little-endian `f32`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::io::HandleSpec;
use crate::residuals::Weights;
use crate::tools::MaterialMode;

pub type SessionId = u64;

/// Messages from a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Creates a session; `binary` selects `f32` payloads.
    Open {
        #[serde(default)]
        binary: bool,
    },
    Close {
        session: SessionId,
    },
    /// Replaces the mesh. `fixed_boundary` fixes all boundary vertices;
    /// `fixed` lists more.
    LoadMesh {
        session: SessionId,
        obj: String,
        #[serde(default)]
        fixed_boundary: bool,
        #[serde(default)]
        fixed: Vec<usize>,
    },
    SetHandles {
        session: SessionId,
        /// Server revision the client based this edit on.
        #[serde(default)]
        revision: Option<u64>,
        handles: Vec<HandleSpec>,
    },
    /// Moves (or adds) one handle.
    Drag {
        session: SessionId,
        #[serde(default)]
        revision: Option<u64>,
        vertex: usize,
        target: [f64; 3],
    },
    SetWeights {
        session: SessionId,
        weights: Weights,
    },
    SetMode {
        session: SessionId,
        material: MaterialMode,
    },
    SetGlidingCurve {
        session: SessionId,
        points: Vec<[f64; 3]>,
        #[serde(default)]
        radius: Option<f64>,
    },
    Start {
        session: SessionId,
    },
    Pause {
        session: SessionId,
    },
    /// Restores the loaded geometry and stops the loop.
    Reset {
        session: SessionId,
    },
    /// Replies with the current mesh as OBJ text.
    Save {
        session: SessionId,
    },
    /// Replies with the current geometry outside the event stream.
    Snapshot {
        session: SessionId,
    },
}

impl ClientMessage {
    pub fn session(&self) -> Option<SessionId> {
        use ClientMessage::*;
        match self {
            Open { .. } => None,
            Close { session }
            | LoadMesh { session, .. }
            | SetHandles { session, .. }
            | Drag { session, .. }
            | SetWeights { session, .. }
            | SetMode { session, .. }
            | SetGlidingCurve { session, .. }
            | Start { session }
            | Pause { session }
            | Reset { session }
            | Save { session }
            | Snapshot { session } => Some(*session),
        }
    }
}

/// A float array as JSON numbers or base64 little-endian `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Floats(Vec<f64>),
    Binary { f32_le: String },
}

impl Payload {
    pub fn new(values: &[f64], binary: bool) -> Self {
        if binary {
            let bytes: Vec<u8> = values
                .iter()
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect();
            Payload::Binary {
                f32_le: STANDARD.encode(bytes),
            }
        } else {
            Payload::Floats(values.to_vec())
        }
    }

    /// Decoded values; `None` for malformed binary payloads.
    pub fn values(&self) -> Option<Vec<f64>> {
        match self {
            Payload::Floats(v) => Some(v.clone()),
            Payload::Binary { f32_le } => {
                let bytes = STANDARD.decode(f32_le).ok()?;
                if bytes.len() % 4 != 0 {
                    return None;
                }
                Some(
                    bytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    Stepping,
    Converged,
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    InvalidSession,
    MalformedMessage,
    /// The client edited by vertex index against a mesh that has since been
    /// replaced; the reply carries the current snapshot.
    StaleRevision,
}

/// One row of the energy trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub total: f64,
    pub names: Vec<String>,
    pub energies: Vec<f64>,
    pub event: Option<String>,
}

/// Geometry of one revision and iteration. All arrays come from the same
/// iterate; the run status travels in separate `status` messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session: SessionId,
    pub revision: u64,
    pub iteration: usize,
    /// `3 |V|` coordinates.
    pub positions: Payload,
    /// `3 |F|` unit normals; these are also the Gauss image points.
    pub normals: Payload,
    /// `|F|` per-face developability; `-1` marks boundary faces.
    pub dev: Payload,
    /// `6` coordinates per nonzero ruling segment, centered at edge midpoints.
    pub rulings: Payload,
    pub trace: Option<TraceEntry>,
}

/// Messages from the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Opened {
        session: SessionId,
        binary: bool,
    },
    Closed {
        session: SessionId,
    },
    /// A mutating message was applied and produced `revision`.
    Ack {
        session: SessionId,
        revision: u64,
    },
    /// Streamed after accepted iterations; subject to throttling.
    Event(Snapshot),
    /// Reply to a `snapshot` request.
    Snapshot(Snapshot),
    Status {
        session: SessionId,
        revision: u64,
        status: SessionStatus,
    },
    Saved {
        session: SessionId,
        obj: String,
    },
    Error {
        session: Option<SessionId>,
        kind: ErrorKind,
        message: String,
        snapshot: Option<Box<Snapshot>>,
    },
}

impl ServerMessage {
    pub fn error(session: Option<SessionId>, kind: ErrorKind, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            session,
            kind,
            message: message.into(),
            snapshot: None,
        }
    }
}

/// Parses a client message; failures become a `MalformedMessage` reply.
pub fn parse_client(text: &str) -> Result<ClientMessage, ServerMessage> {
    serde_json::from_str(text)
        .map_err(|e| ServerMessage::error(None, ErrorKind::MalformedMessage, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let m = parse_client(r#"{"type":"drag","session":3,"vertex":7,"target":[0,1,2]}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::Drag {
                session: 3,
                revision: None,
                vertex: 7,
                target: [0.0, 1.0, 2.0]
            }
        );
        assert_eq!(m.session(), Some(3));
        let w =
            parse_client(r#"{"type":"set_weights","session":1,"weights":{"dev":5.0}}"#).unwrap();
        let ClientMessage::SetWeights { weights, .. } = w else {
            panic!("{w:?}")
        };
        assert_eq!(weights.dev, 5.0);
        assert_eq!(weights.fair_v, Weights::default().fair_v);
    }

    #[test]
    fn malformed_messages() {
        for text in [
            "not json",
            r#"{"type":"teleport","session":1}"#,
            r#"{"type":"start"}"#,
            r#"{"type":"start","session":1,"extra":true}"#,
            r#"{"type":"set_weights","session":1,"weights":{"speed":1.0}}"#,
        ] {
            let err = parse_client(text).unwrap_err();
            assert!(
                matches!(
                    err,
                    ServerMessage::Error {
                        kind: ErrorKind::MalformedMessage,
                        ..
                    }
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn payload_encodings() {
        let v = [0.5, -1.25, 3.0];
        assert_eq!(Payload::new(&v, false).values().unwrap(), v);
        let b = Payload::new(&v, true);
        assert!(matches!(b, Payload::Binary { .. }));
        assert_eq!(b.values().unwrap(), v);
        let json = serde_json::to_string(&b).unwrap();
        let back: Payload = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
        let bad = Payload::Binary {
            f32_le: "AAA=".into(),
        };
        assert!(bad.values().is_none());
    }

    #[test]
    fn server_messages_are_tagged() {
        let m = ServerMessage::Status {
            session: 1,
            revision: 2,
            status: SessionStatus::Converged,
        };
        let text = serde_json::to_string(&m).unwrap();
        assert!(
            text.contains(r#""type":"status""#) && text.contains(r#""status":"converged""#),
            "{text}"
        );
    }
}
