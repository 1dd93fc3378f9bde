//! Single-threaded session state machine. Messages edit the configuration;
//! `tick` advances the optimization by one solver step.
//!
//! Invariants:
//! - every snapshot is computed from one stored iterate, so positions,
//!   normals, developability and rulings always agree;
//! - a mutating message bumps the revision and, while the loop runs,
//!   restarts it from the current iterate;
//! - a finished loop produces no further events until a message arrives.

use crate::geometry::{vec3, Vec3};
use crate::io::{read_quad_mesh, write_quad_mesh, HandleSpec};
use crate::measure::DevMeasure;
use crate::mesh::{QuadMesh, VertexId};
use crate::optimize::{OptimizeOptions, Optimizer, StepEvent, Targets};
use crate::residuals::{State, Weights};
use crate::tools::MaterialMode;

use super::protocol::{
    ClientMessage, ErrorKind, Payload, ServerMessage, SessionId, SessionStatus, Snapshot,
    TraceEntry,
};

/// Rulings shorter than this are not streamed.
const RULING_EPS: f64 = 1e-9;

pub struct SessionCore {
    id: SessionId,
    binary: bool,
    /// Geometry as loaded, restored by `reset`.
    loaded: Option<QuadMesh>,
    /// Connectivity with the current positions.
    mesh: Option<QuadMesh>,
    state: Option<State>,
    fixed: Vec<bool>,
    handles: Vec<HandleSpec>,
    glide: Vec<Vec3>,
    glide_radius: Option<f64>,
    weights: Weights,
    material: MaterialMode,
    options: OptimizeOptions,
    revision: u64,
    /// Revision of the last mesh load or reset; vertex-index edits based on
    /// an older revision are stale.
    mesh_revision: u64,
    running: bool,
    status: SessionStatus,
    iteration: usize,
    last_trace: Option<TraceEntry>,
    optimizer: Option<Optimizer<'static>>,
}

fn malformed(id: SessionId, message: impl Into<String>) -> ServerMessage {
    ServerMessage::error(Some(id), ErrorKind::MalformedMessage, message)
}

fn finite(p: &[f64; 3]) -> bool {
    p.iter().all(|c| c.is_finite())
}

impl SessionCore {
    pub fn new(id: SessionId, binary: bool) -> Self {
        SessionCore {
            id,
            binary,
            loaded: None,
            mesh: None,
            state: None,
            fixed: Vec::new(),
            handles: Vec::new(),
            glide: Vec::new(),
            glide_radius: None,
            weights: Weights::default(),
            material: MaterialMode::None,
            options: OptimizeOptions::default(),
            revision: 0,
            mesh_revision: 0,
            running: false,
            status: SessionStatus::Idle,
            iteration: 0,
            last_trace: None,
            optimizer: None,
        }
    }

    /// Solver settings used whenever the loop (re)starts; weights come from
    /// `set_weights`.
    pub fn with_options(mut self, options: OptimizeOptions) -> Self {
        self.options = options;
        self
    }

    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    /// The loop wants another `tick`.
    pub fn is_stepping(&self) -> bool {
        self.status == SessionStatus::Stepping
    }

    /// Current geometry; `None` before a mesh is loaded.
    pub fn snapshot(&self) -> Option<Snapshot> {
        let (mesh, state) = (self.mesh.as_ref()?, self.state.as_ref()?);
        Some(snapshot_of(self, mesh, state))
    }

    /// Current mesh; `None` before a mesh is loaded.
    pub fn mesh(&self) -> Option<&QuadMesh> {
        self.mesh.as_ref()
    }

    fn status_message(&self) -> ServerMessage {
        ServerMessage::Status {
            session: self.id,
            revision: self.revision,
            status: self.status,
        }
    }

    fn ack(&self) -> ServerMessage {
        ServerMessage::Ack {
            session: self.id,
            revision: self.revision,
        }
    }

    fn check_revision(&self, revision: Option<u64>) -> Result<(), ServerMessage> {
        match revision {
            Some(r) if r > self.revision => Err(malformed(
                self.id,
                format!(
                    "revision {r} is newer than the session revision {}",
                    self.revision
                ),
            )),
            Some(r) if r < self.mesh_revision => Err(ServerMessage::Error {
                session: Some(self.id),
                kind: ErrorKind::StaleRevision,
                message: format!(
                    "revision {r} predates the mesh loaded at revision {}",
                    self.mesh_revision
                ),
                snapshot: self.snapshot().map(Box::new),
            }),
            _ => Ok(()),
        }
    }

    fn check_vertex(&self, vertex: usize, target: &[f64; 3]) -> Result<(), ServerMessage> {
        let n = self.mesh.as_ref().map_or(0, |m| m.vertex_count());
        if vertex >= n {
            return Err(malformed(
                self.id,
                format!("vertex {vertex} out of range for {n} vertices"),
            ));
        }
        if self.fixed[vertex] {
            return Err(malformed(self.id, format!("vertex {vertex} is fixed")));
        }
        if !finite(target) {
            return Err(malformed(self.id, "handle target must be finite"));
        }
        Ok(())
    }

    fn require_mesh(&self) -> Result<(), ServerMessage> {
        match self.mesh {
            Some(_) => Ok(()),
            None => Err(malformed(self.id, "no mesh loaded")),
        }
    }

    fn targets(&self) -> Targets {
        Targets {
            fixed: self.fixed.clone(),
            handles: self
                .handles
                .iter()
                .map(|h| {
                    (
                        VertexId::from(h.vertex),
                        vec3(h.target[0], h.target[1], h.target[2]),
                    )
                })
                .collect(),
            glide: self.glide.clone(),
            glide_radius: self.glide_radius,
            material: self.material,
            ..Targets::default()
        }
    }

    /// Builds an optimizer at the current iterate.
    fn start_loop(&mut self) -> Result<(), ServerMessage> {
        let (Some(mesh), Some(state)) = (&self.mesh, &self.state) else {
            return Err(malformed(self.id, "no mesh loaded"));
        };
        let mut options = self.options.clone();
        for stage in &mut options.stages {
            stage.weights = self.weights;
        }
        let opt = Optimizer::owned(mesh.clone(), state.clone(), &self.targets(), options)
            .map_err(|e| malformed(self.id, e.to_string()))?;
        self.optimizer = Some(opt);
        self.status = SessionStatus::Stepping;
        Ok(())
    }

    /// Applies an edit: bumps the revision and restarts a running loop.
    fn edited(&mut self, out: &mut Vec<ServerMessage>) {
        self.revision += 1;
        self.optimizer = None;
        out.push(self.ack());
        if self.running {
            match self.start_loop() {
                Ok(()) => out.push(self.status_message()),
                Err(e) => {
                    self.running = false;
                    self.status = SessionStatus::Idle;
                    out.push(e);
                    out.push(self.status_message());
                }
            }
        }
    }

    fn install(&mut self, mesh: QuadMesh) -> Result<(), ServerMessage> {
        let state = State::from_mesh(&mesh).map_err(|e| malformed(self.id, e.to_string()))?;
        self.state = Some(state);
        self.mesh = Some(mesh);
        self.iteration = 0;
        self.last_trace = None;
        self.optimizer = None;
        self.running = false;
        self.status = SessionStatus::Idle;
        Ok(())
    }

    /// Handles one message addressed to this session. `Open` and `Close`
    /// belong to the service and are rejected here.
    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if let Err(e) = self.apply(msg, &mut out) {
            out.push(e);
        }
        out
    }

    fn apply(
        &mut self,
        msg: ClientMessage,
        out: &mut Vec<ServerMessage>,
    ) -> Result<(), ServerMessage> {
        use ClientMessage::*;
        match msg {
            Open { .. } | Close { .. } => {
                return Err(malformed(self.id, "open and close address the service"))
            }
            LoadMesh {
                obj,
                fixed_boundary,
                fixed,
                ..
            } => {
                let mesh = read_quad_mesh(obj.as_bytes())
                    .map_err(|e| malformed(self.id, e.to_string()))?;
                let n = mesh.vertex_count();
                let mut mask = vec![false; n];
                if fixed_boundary {
                    for v in mesh.boundary_vertices() {
                        mask[v.idx()] = true;
                    }
                }
                for &v in &fixed {
                    if v >= n {
                        return Err(malformed(
                            self.id,
                            format!("fixed vertex {v} out of range for {n} vertices"),
                        ));
                    }
                    mask[v] = true;
                }
                self.install(mesh.clone())?;
                self.loaded = Some(mesh);
                self.fixed = mask;
                self.handles.clear();
                self.revision += 1;
                self.mesh_revision = self.revision;
                out.push(self.ack());
                out.push(self.status_message());
                out.extend(self.snapshot().map(ServerMessage::Event));
            }
            SetHandles {
                revision, handles, ..
            } => {
                self.require_mesh()?;
                self.check_revision(revision)?;
                for h in &handles {
                    self.check_vertex(h.vertex, &h.target)?;
                }
                self.handles = handles;
                self.edited(out);
            }
            Drag {
                revision,
                vertex,
                target,
                ..
            } => {
                self.require_mesh()?;
                self.check_revision(revision)?;
                self.check_vertex(vertex, &target)?;
                match self.handles.iter_mut().find(|h| h.vertex == vertex) {
                    Some(h) => h.target = target,
                    None => self.handles.push(HandleSpec { vertex, target }),
                }
                self.edited(out);
            }
            SetWeights { weights, .. } => {
                weights
                    .validate()
                    .map_err(|e| malformed(self.id, e.to_string()))?;
                self.weights = weights;
                self.edited(out);
            }
            SetMode { material, .. } => {
                self.material = material;
                self.edited(out);
            }
            SetGlidingCurve { points, radius, .. } => {
                if !points.iter().all(finite) {
                    return Err(malformed(self.id, "gliding points must be finite"));
                }
                if let Some(r) = radius.filter(|r| !(*r > 0.0 && r.is_finite())) {
                    return Err(malformed(
                        self.id,
                        format!("gliding radius must be positive, got {r}"),
                    ));
                }
                self.glide = points.iter().map(|p| vec3(p[0], p[1], p[2])).collect();
                self.glide_radius = radius;
                self.edited(out);
            }
            Start { .. } => {
                self.require_mesh()?;
                self.running = true;
                if self.optimizer.is_none() || self.status != SessionStatus::Stepping {
                    self.start_loop()?;
                }
                self.status = SessionStatus::Stepping;
                out.push(self.status_message());
            }
            Pause { .. } => {
                self.running = false;
                self.status = SessionStatus::Idle;
                out.push(self.status_message());
            }
            Reset { .. } => {
                let Some(mesh) = self.loaded.clone() else {
                    return Err(malformed(self.id, "no mesh loaded"));
                };
                self.install(mesh)?;
                self.revision += 1;
                self.mesh_revision = self.revision;
                out.push(self.ack());
                out.push(self.status_message());
                out.extend(self.snapshot().map(ServerMessage::Event));
            }
            Snapshot { .. } => {
                let snapshot = self
                    .snapshot()
                    .ok_or_else(|| malformed(self.id, "no mesh loaded"))?;
                out.push(ServerMessage::Snapshot(snapshot));
            }
            Save { .. } => {
                let Some(mesh) = &self.mesh else {
                    return Err(malformed(self.id, "no mesh loaded"));
                };
                let mut buf = Vec::new();
                write_quad_mesh(mesh, &mut buf).map_err(|e| malformed(self.id, e.to_string()))?;
                out.push(ServerMessage::Saved {
                    session: self.id,
                    obj: String::from_utf8(buf).expect("OBJ output is ASCII"),
                });
            }
        }
        Ok(())
    }

    /// Runs one solver step. Accepted steps yield an event; the end of the
    /// loop yields a status message; rejected steps yield nothing.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        if !self.is_stepping() {
            return Vec::new();
        }
        let Some(opt) = self.optimizer.as_mut() else {
            self.status = SessionStatus::Idle;
            return vec![self.status_message()];
        };
        match opt.step() {
            Ok(StepEvent::Accepted { .. }) => {
                let state = opt.state();
                let trace = opt.trace();
                let row = trace
                    .rows
                    .last()
                    .expect("accepted steps append a trace row");
                self.iteration += 1;
                self.last_trace = Some(TraceEntry {
                    iteration: self.iteration,
                    total: row.total,
                    names: trace.names.clone(),
                    energies: row.energies.clone(),
                    event: row.event.clone(),
                });
                let mesh = self.mesh.as_mut().expect("a running loop has a mesh");
                mesh.set_positions(state.positions.clone())
                    .expect("same vertex count");
                self.state = Some(state);
                self.snapshot()
                    .map(ServerMessage::Event)
                    .into_iter()
                    .collect()
            }
            Ok(StepEvent::Rejected { .. }) | Ok(StepEvent::WeightsChanged { .. }) => Vec::new(),
            Ok(StepEvent::Finished) => {
                let mesh = self.mesh.as_ref().expect("a running loop has a mesh");
                let met = DevMeasure::rederived(mesh)
                    .is_ok_and(|d| d.per_face() <= self.options.dev_tolerance);
                self.status = if met {
                    SessionStatus::Converged
                } else {
                    SessionStatus::Unreachable
                };
                self.optimizer = None;
                vec![self.status_message()]
            }
            Err(e) => {
                self.optimizer = None;
                self.running = false;
                self.status = SessionStatus::Idle;
                vec![malformed(self.id, e.to_string()), self.status_message()]
            }
        }
    }
}

fn snapshot_of(core: &SessionCore, mesh: &QuadMesh, state: &State) -> Snapshot {
    let flat = |v: &[Vec3]| v.iter().flat_map(|p| [p.x, p.y, p.z]).collect::<Vec<f64>>();
    let dev = DevMeasure::from_state(mesh, state);
    let mut per_face = vec![-1.0; mesh.face_count()];
    for (f, e) in dev.faces.iter().zip(&dev.vector) {
        per_face[f.idx()] = *e;
    }
    let half = 0.25 * mesh.mean_edge_length();
    let mut rulings = Vec::new();
    for h in mesh.interior_halfedges() {
        let o = mesh.opposite(h).expect("interior halfedges have opposites");
        if o.idx() < h.idx() {
            continue;
        }
        let r = state.rulings[h.idx()];
        let len = r.norm();
        if len <= RULING_EPS {
            continue;
        }
        let mid = 0.5 * (mesh.position(mesh.origin(h)) + mesh.position(mesh.target(h)));
        let d = r * (half / len);
        let (a, b) = (mid - d, mid + d);
        rulings.extend([a.x, a.y, a.z, b.x, b.y, b.z]);
    }
    Snapshot {
        session: core.id,
        revision: core.revision,
        iteration: core.iteration,
        positions: Payload::new(&flat(&state.positions), core.binary),
        normals: Payload::new(&flat(&state.normals), core.binary),
        dev: Payload::new(&per_face, core.binary),
        rulings: Payload::new(&rulings, core.binary),
        trace: core.last_trace.clone(),
    }
}
