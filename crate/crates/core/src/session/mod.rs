//! Interactive optimization sessions: a message protocol, a per-session
//! state machine, a threaded service with event throttling and a TCP
//! transport.

mod core;
pub mod net;
pub mod protocol;
mod service;

pub use self::core::SessionCore;
pub use net::{read_frame, serve, write_frame, Client, MAX_FRAME};
pub use protocol::{
    parse_client, ClientMessage, ErrorKind, Payload, ServerMessage, SessionId, SessionStatus,
    Snapshot, TraceEntry,
};
pub use service::{SessionService, MAX_EVENTS_PER_SECOND};
