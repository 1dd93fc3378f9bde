//! Sessions on worker threads. Each worker drains its inbox before every
//! solver step, so a mutating message cancels the running iteration
//! sequence and restarts it from the current iterate.
//!
//! Outgoing events pass through a throttle: at most one event per
//! interval, intermediate events coalesced with the latest winning.
//! Other messages keep their order relative to events; a message queued
//! behind a held event waits for it.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::optimize::OptimizeOptions;

use super::core::SessionCore;
use super::protocol::{ClientMessage, ErrorKind, ServerMessage, SessionId};

/// Event rate limit of every session.
pub const MAX_EVENTS_PER_SECOND: u32 = 30;

enum Command {
    Message(ClientMessage),
    Close,
}

struct Throttle {
    interval: Duration,
    last_event: Option<Instant>,
    queue: VecDeque<ServerMessage>,
}

impl Throttle {
    fn new(interval: Duration) -> Self {
        Throttle {
            interval,
            last_event: None,
            queue: VecDeque::new(),
        }
    }

    fn push(&mut self, msg: ServerMessage, out: &Sender<ServerMessage>) {
        let is_event = matches!(msg, ServerMessage::Event(_));
        match self.queue.back_mut() {
            Some(last @ ServerMessage::Event(_)) if is_event => *last = msg,
            _ => self.queue.push_back(msg),
        }
        self.poll(out);
    }

    /// Sends everything that is due.
    fn poll(&mut self, out: &Sender<ServerMessage>) {
        while let Some(front) = self.queue.front() {
            if matches!(front, ServerMessage::Event(_)) {
                let now = Instant::now();
                if self.last_event.is_some_and(|t| now < t + self.interval) {
                    return;
                }
                self.last_event = Some(now);
            }
            let msg = self.queue.pop_front().expect("front exists");
            // a departed client is not an error of the session
            let _ = out.send(msg);
        }
    }

    /// Time until the held event may go out.
    fn due_in(&self) -> Option<Duration> {
        self.queue.front()?;
        let t = self.last_event? + self.interval;
        Some(t.saturating_duration_since(Instant::now()))
    }

    /// Sends the queue ignoring the rate, used on close.
    fn drain(&mut self, out: &Sender<ServerMessage>) {
        for msg in self.queue.drain(..) {
            let _ = out.send(msg);
        }
    }
}

fn worker(
    mut core: SessionCore,
    inbox: Receiver<Command>,
    out: Sender<ServerMessage>,
    interval: Duration,
) {
    let mut throttle = Throttle::new(interval);
    loop {
        let next = if core.is_stepping() {
            match inbox.try_recv() {
                Ok(c) => Some(c),
                Err(TryRecvError::Empty) => None,
                Err(TryRecvError::Disconnected) => return,
            }
        } else if let Some(wait) = throttle.due_in() {
            match inbox.recv_timeout(wait) {
                Ok(c) => Some(c),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => return,
            }
        } else {
            match inbox.recv() {
                Ok(c) => Some(c),
                Err(_) => return,
            }
        };
        match next {
            Some(Command::Close) => {
                throttle.drain(&out);
                let _ = out.send(ServerMessage::Closed { session: core.id() });
                return;
            }
            Some(Command::Message(msg)) => {
                for reply in core.handle(msg) {
                    throttle.push(reply, &out);
                }
                // drain every queued message before the next step
                continue;
            }
            None => {}
        }
        for reply in core.tick() {
            throttle.push(reply, &out);
        }
        throttle.poll(&out);
    }
}

struct Inner {
    next_id: AtomicU64,
    sessions: Mutex<HashMap<SessionId, Sender<Command>>>,
    options: OptimizeOptions,
    interval: Duration,
}

/// Session registry shared by all connections.
#[derive(Clone)]
pub struct SessionService {
    inner: Arc<Inner>,
}

impl Default for SessionService {
    fn default() -> Self {
        Self::new(OptimizeOptions::default())
    }
}

impl SessionService {
    /// `options` configure every loop; their weights are replaced by the
    /// session weights.
    pub fn new(options: OptimizeOptions) -> Self {
        Self::with_interval(options, Duration::from_secs(1) / MAX_EVENTS_PER_SECOND)
    }

    /// Service with a custom minimum time between two events of a session.
    pub fn with_interval(options: OptimizeOptions, interval: Duration) -> Self {
        SessionService {
            inner: Arc::new(Inner {
                next_id: AtomicU64::new(1),
                sessions: Mutex::new(HashMap::new()),
                options,
                interval,
            }),
        }
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().expect("session map").len()
    }

    /// Starts a session whose replies and events go to `out`.
    pub fn open(&self, binary: bool, out: Sender<ServerMessage>) -> SessionId {
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        let core = SessionCore::new(id, binary).with_options(self.inner.options.clone());
        let _ = out.send(ServerMessage::Opened {
            session: id,
            binary,
        });
        let interval = self.inner.interval;
        thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || worker(core, rx, out, interval))
            .expect("spawn session worker");
        self.inner
            .sessions
            .lock()
            .expect("session map")
            .insert(id, tx);
        id
    }

    /// Ends a session; its worker flushes pending messages and replies
    /// `closed`. Returns false for unknown sessions.
    pub fn close(&self, id: SessionId) -> bool {
        let tx = self.inner.sessions.lock().expect("session map").remove(&id);
        tx.is_some_and(|tx| tx.send(Command::Close).is_ok())
    }

    /// Routes a message. `open` creates a session replying to `out`;
    /// unknown sessions get `InvalidSession` on `out`. Returns the session
    /// created by `open`.
    pub fn dispatch(&self, msg: ClientMessage, out: &Sender<ServerMessage>) -> Option<SessionId> {
        let id = match msg {
            ClientMessage::Open { binary } => return Some(self.open(binary, out.clone())),
            ClientMessage::Close { session } => {
                if !self.close(session) {
                    let _ = out.send(invalid(session));
                }
                return None;
            }
            ref m => m.session().expect("every other message names a session"),
        };
        let sessions = self.inner.sessions.lock().expect("session map");
        let delivered = sessions
            .get(&id)
            .is_some_and(|tx| tx.send(Command::Message(msg)).is_ok());
        if !delivered {
            let _ = out.send(invalid(id));
        }
        None
    }
}

fn invalid(id: SessionId) -> ServerMessage {
    ServerMessage::error(
        Some(id),
        ErrorKind::InvalidSession,
        format!("no session {id}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_quad_mesh;
    use crate::mesh::Grid;
    use crate::residuals::Weights;
    use crate::session::SessionStatus;

    const WAIT: Duration = Duration::from_secs(60);

    fn obj() -> String {
        let g = Grid::from_fn(8, 8, false, false, |i, j| {
            let (x, y) = (j as f64 / 7.0, i as f64 / 7.0);
            crate::geometry::vec3(x, y, 0.3 * x * y + 0.2 * x * x)
        })
        .unwrap();
        let mut buf = Vec::new();
        write_quad_mesh(g.mesh(), &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn open(
        service: &SessionService,
    ) -> (SessionId, Sender<ServerMessage>, Receiver<ServerMessage>) {
        let (tx, rx) = mpsc::channel();
        let id = service
            .dispatch(ClientMessage::Open { binary: false }, &tx)
            .unwrap();
        assert!(matches!(
            rx.recv_timeout(WAIT).unwrap(),
            ServerMessage::Opened { .. }
        ));
        service.dispatch(
            ClientMessage::LoadMesh {
                session: id,
                obj: obj(),
                fixed_boundary: false,
                fixed: vec![0, 7],
            },
            &tx,
        );
        (id, tx, rx)
    }

    /// Collects messages until `stop` holds for one of them.
    fn until(
        rx: &Receiver<ServerMessage>,
        stop: impl Fn(&ServerMessage) -> bool,
    ) -> Vec<ServerMessage> {
        let mut seen = Vec::new();
        loop {
            let m = rx.recv_timeout(WAIT).expect("message before timeout");
            let done = stop(&m);
            seen.push(m);
            if done {
                return seen;
            }
        }
    }

    fn finished(m: &ServerMessage) -> bool {
        matches!(
            m,
            ServerMessage::Status {
                status: SessionStatus::Converged | SessionStatus::Unreachable,
                ..
            }
        )
    }

    #[test]
    fn unknown_sessions_are_invalid() {
        let service = SessionService::default();
        let (tx, rx) = mpsc::channel();
        service.dispatch(ClientMessage::Start { session: 42 }, &tx);
        service.dispatch(ClientMessage::Close { session: 42 }, &tx);
        for _ in 0..2 {
            assert!(matches!(
                rx.recv_timeout(WAIT).unwrap(),
                ServerMessage::Error {
                    kind: ErrorKind::InvalidSession,
                    session: Some(42),
                    ..
                }
            ));
        }
    }

    #[test]
    fn converged_sessions_fall_silent() {
        let service = SessionService::default();
        let (id, tx, rx) = open(&service);
        service.dispatch(ClientMessage::Start { session: id }, &tx);
        let seen = until(&rx, finished);
        assert!(seen.iter().any(|m| matches!(m, ServerMessage::Event(_))));
        assert!(
            rx.recv_timeout(Duration::from_millis(300)).is_err(),
            "quiescent session kept streaming"
        );
        service.close(id);
        assert!(matches!(
            rx.recv_timeout(WAIT).unwrap(),
            ServerMessage::Closed { .. }
        ));
        assert_eq!(service.session_count(), 0);
    }

    #[test]
    fn events_respect_the_rate_limit() {
        let service = SessionService::default();
        let (id, tx, rx) = open(&service);
        service.dispatch(ClientMessage::Start { session: id }, &tx);
        let mut times = Vec::new();
        loop {
            let m = rx.recv_timeout(WAIT).unwrap();
            if matches!(m, ServerMessage::Event(_)) {
                times.push(Instant::now());
            }
            if finished(&m) {
                break;
            }
        }
        let min_gap = Duration::from_secs(1) / MAX_EVENTS_PER_SECOND;
        for w in times.windows(2) {
            // receive times jitter slightly around the send times
            assert!(
                w[1] - w[0] + Duration::from_millis(5) >= min_gap,
                "{:?}",
                w[1] - w[0]
            );
        }
    }

    #[test]
    fn drag_then_drag_streams_the_second_revision() {
        let service = SessionService::default();
        let (id, tx, rx) = open(&service);
        service.dispatch(ClientMessage::Start { session: id }, &tx);
        for z in [0.3, 0.6] {
            service.dispatch(
                ClientMessage::Drag {
                    session: id,
                    revision: None,
                    vertex: 63,
                    target: [1.0, 1.0, z],
                },
                &tx,
            );
        }
        let seen = until(&rx, finished);
        let acks: Vec<u64> = seen
            .iter()
            .filter_map(|m| match m {
                ServerMessage::Ack { revision, .. } => Some(*revision),
                _ => None,
            })
            .collect();
        let last_rev = *acks.last().unwrap();
        let ServerMessage::Event(last) = seen
            .iter()
            .rev()
            .find(|m| matches!(m, ServerMessage::Event(_)))
            .unwrap()
        else {
            unreachable!()
        };
        assert_eq!(last.revision, last_rev);
        let p = last.positions.values().unwrap();
        assert!((p[3 * 63 + 2] - 0.6).abs() < 0.05, "{}", p[3 * 63 + 2]);
    }

    #[test]
    fn negative_weight_is_malformed() {
        let service = SessionService::default();
        let (id, tx, rx) = open(&service);
        until(&rx, |m| matches!(m, ServerMessage::Event(_)));
        let weights = Weights {
            fair_v: -0.5,
            ..Weights::default()
        };
        service.dispatch(
            ClientMessage::SetWeights {
                session: id,
                weights,
            },
            &tx,
        );
        let m = rx.recv_timeout(WAIT).unwrap();
        assert!(
            matches!(m, ServerMessage::Error { kind: ErrorKind::MalformedMessage, session: Some(s), .. } if s == id),
            "{m:?}"
        );
    }

    #[test]
    fn paused_snapshot_equals_last_event() {
        let service = SessionService::default();
        let (id, tx, rx) = open(&service);
        service.dispatch(ClientMessage::Start { session: id }, &tx);
        // let a few iterations run
        let mut events = 0;
        let mut last = None;
        while events < 3 {
            match rx.recv_timeout(WAIT).unwrap() {
                ServerMessage::Event(s) => {
                    events += 1;
                    last = Some(s);
                }
                m if finished(&m) => break,
                _ => {}
            }
        }
        service.dispatch(ClientMessage::Pause { session: id }, &tx);
        service.dispatch(ClientMessage::Snapshot { session: id }, &tx);
        let snapshot = loop {
            match rx.recv_timeout(WAIT).unwrap() {
                ServerMessage::Event(s) => last = Some(s),
                ServerMessage::Snapshot(s) => break s,
                _ => {}
            }
        };
        assert_eq!(Some(snapshot), last);
        assert!(rx.recv_timeout(Duration::from_millis(200)).is_err());
    }

    #[test]
    fn throttle_coalesces_and_keeps_order() {
        let (tx, rx) = mpsc::channel();
        let mut t = Throttle::new(Duration::from_secs(3600));
        let ev = |i: usize| {
            ServerMessage::Event(crate::session::Snapshot {
                session: 1,
                revision: 0,
                iteration: i,
                positions: crate::session::Payload::Floats(vec![]),
                normals: crate::session::Payload::Floats(vec![]),
                dev: crate::session::Payload::Floats(vec![]),
                rulings: crate::session::Payload::Floats(vec![]),
                trace: None,
            })
        };
        let ack = ServerMessage::Ack {
            session: 1,
            revision: 1,
        };
        t.push(ev(0), &tx);
        t.push(ev(1), &tx);
        t.push(ev(2), &tx);
        t.push(ack.clone(), &tx);
        t.push(ev(3), &tx);
        assert_eq!(rx.try_recv().unwrap(), ev(0));
        assert!(rx.try_recv().is_err());
        assert!(t.due_in().unwrap() > Duration::from_secs(3000));
        t.drain(&tx);
        assert_eq!(rx.try_iter().collect::<Vec<_>>(), vec![ev(2), ack, ev(3)]);
    }
}
