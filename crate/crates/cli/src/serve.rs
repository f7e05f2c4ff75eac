//! Lockstep teleoperation server speaking JSON frames over a websocket.
//!
//! Client frames: `hello`, `reset`, `action`, `save`. Server frames:
//! `init` once after a successful hello, one `state` per reset and per
//! action, `saved` after each save, and `error` for anything rejected.
//! Errors never end the session.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use capscan_core::dynamics::RigidState;
use capscan_core::env::{ActionMode, CoverageEnv, EnvConfig, EpisodeRecord, PhantomWorld, StepResult};
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum ClientFrame {
    Hello {
        proto: u32,
    },
    Reset {
        seed: u64,
    },
    /// `ax`, `az` drive the planar magnet; the extended action space also
    /// reads `ay`, `apitch` and `ayaw`, each defaulting to 0.
    Action {
        ax: f64,
        az: f64,
        #[serde(default)]
        ay: f64,
        #[serde(default)]
        apitch: f64,
        #[serde(default)]
        ayaw: f64,
    },
    Save,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: [f64; 3],
    /// w, x, y, z.
    pub orientation: [f64; 4],
    pub linear_velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
}

impl From<&RigidState> for BodyState {
    fn from(s: &RigidState) -> Self {
        let q = s.orientation.quaternion();
        Self {
            position: s.position.coords.into(),
            orientation: [q.w, q.i, q.j, q.k],
            linear_velocity: s.linear_velocity.into(),
            angular_velocity: s.angular_velocity.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub step: usize,
    pub sim_time: f64,
    pub capsule: BodyState,
    pub magnet: BodyState,
    pub coverage: f64,
    pub new_vertices: Vec<usize>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum ServerFrame {
    Init {
        vertices: Vec<[f64; 3]>,
        vertice_count: usize,
    },
    State(StateFrame),
    Saved {
        id: String,
        path: PathBuf,
        steps: usize,
    },
    Error {
        msg: String,
    },
}

impl ServerFrame {
    fn error(msg: impl Into<String>) -> Self {
        ServerFrame::Error { msg: msg.into() }
    }
}

/// Shared, immutable server state.
#[derive(Debug)]
pub struct ServerContext {
    pub config: EnvConfig,
    pub world: Arc<PhantomWorld>,
    pub record_dir: PathBuf,
    next_session: AtomicU64,
}

impl ServerContext {
    pub fn new(config: EnvConfig, record_dir: impl AsRef<Path>) -> Result<Arc<Self>> {
        config.validate()?;
        let world = PhantomWorld::build(&config).context("building phantom")?;
        let record_dir = record_dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&record_dir).with_context(|| format!("creating {}", record_dir.display()))?;
        Ok(Arc::new(Self {
            config,
            world,
            record_dir,
            next_session: AtomicU64::new(0),
        }))
    }
}

/// One client's simulation and recording state, independent of transport.
pub struct Session {
    ctx: Arc<ServerContext>,
    id: u64,
    env: CoverageEnv,
    greeted: bool,
    record: Option<EpisodeRecord>,
    /// Steps in `record` not yet written by a save.
    dirty: bool,
    saves: u32,
    started: Instant,
}

impl Session {
    pub fn new(ctx: Arc<ServerContext>) -> Result<Self> {
        let env = CoverageEnv::with_world(ctx.config.clone(), ctx.world.clone())?;
        let id = ctx.next_session.fetch_add(1, Ordering::SeqCst);
        Ok(Self {
            ctx,
            id,
            env,
            greeted: false,
            record: None,
            dirty: false,
            saves: 0,
            started: Instant::now(),
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Respond to one text frame.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerFrame> {
        match serde_json::from_str::<ClientFrame>(text) {
            Ok(f) => self.handle(f),
            Err(e) => vec![ServerFrame::error(format!("malformed frame: {e}"))],
        }
    }

    pub fn handle(&mut self, frame: ClientFrame) -> Vec<ServerFrame> {
        match frame {
            ClientFrame::Hello { proto } => {
                if proto != PROTOCOL_VERSION {
                    return vec![ServerFrame::error(format!(
                        "unsupported protocol version {proto}; this server speaks {PROTOCOL_VERSION}"
                    ))];
                }
                if self.greeted {
                    return vec![ServerFrame::error("hello already received")];
                }
                self.greeted = true;
                let vertices = self.ctx.world.mesh.vertices.iter().map(|p| [p.x, p.y, p.z]).collect();
                vec![ServerFrame::Init {
                    vertices,
                    vertice_count: self.ctx.world.mesh.vertex_count(),
                }]
            }
            _ if !self.greeted => vec![ServerFrame::error("send hello first")],
            ClientFrame::Reset { seed } => {
                if let Err(e) = self.flush() {
                    return vec![ServerFrame::error(format!("could not save the previous episode: {e:#}"))];
                }
                match self.env.reset(seed) {
                    Ok(_) => {
                        self.record = Some(EpisodeRecord::new(seed, self.ctx.config.clone()));
                        self.started = Instant::now();
                        match self.state(None) {
                            Ok(s) => vec![ServerFrame::State(s)],
                            Err(e) => vec![ServerFrame::error(format!("{e:#}"))],
                        }
                    }
                    Err(e) => vec![ServerFrame::error(format!("reset failed: {e}"))],
                }
            }
            ClientFrame::Action {
                ax,
                az,
                ay,
                apitch,
                ayaw,
            } => {
                let action = match self.ctx.config.action_mode {
                    ActionMode::Planar => vec![ax, az],
                    ActionMode::Extended => vec![ax, ay, az, apitch, ayaw],
                };
                if let Some(bad) = action.iter().find(|a| !(-1.0..=1.0).contains(*a)) {
                    return vec![ServerFrame::error(format!("action component {bad} outside [-1, 1]"))];
                }
                if self.record.is_none() {
                    return vec![ServerFrame::error("send reset before actions")];
                }
                if self.env.is_finished() {
                    return vec![ServerFrame::error("episode finished; send reset")];
                }
                match self.env.step(&action) {
                    Ok(r) => {
                        let n = self.env.step_count().unwrap_or(0);
                        let dt = self.env.config().control_dt();
                        let rec = self.record.as_mut().expect("checked above");
                        rec.push_result(n, dt, action, &r);
                        rec.wall_time_s = self.started.elapsed().as_secs_f64();
                        self.dirty = true;
                        match self.state(Some(&r)) {
                            Ok(s) => vec![ServerFrame::State(s)],
                            Err(e) => vec![ServerFrame::error(format!("{e:#}"))],
                        }
                    }
                    Err(e) => vec![ServerFrame::error(format!("step failed: {e}"))],
                }
            }
            ClientFrame::Save => match self.save() {
                Ok(f) => vec![f],
                Err(e) => vec![ServerFrame::error(format!("{e:#}"))],
            },
        }
    }

    fn state(&self, r: Option<&StepResult>) -> Result<StateFrame> {
        Ok(StateFrame {
            step: self.env.step_count()?,
            sim_time: self.env.sim_time()?,
            capsule: self.env.capsule()?.into(),
            magnet: self.env.magnet()?.into(),
            coverage: self.env.coverage()?,
            new_vertices: r.map(|r| r.info.new_vertices.clone()).unwrap_or_default(),
            reward: r.map_or(0.0, |r| r.reward),
            terminated: r.is_some_and(|r| r.terminated),
            truncated: r.is_some_and(|r| r.truncated),
        })
    }

    /// Write the current record under a fresh id.
    pub fn save(&mut self) -> Result<ServerFrame> {
        let rec = match &self.record {
            Some(r) if !r.steps.is_empty() => r,
            _ => anyhow::bail!("nothing to save before the first step"),
        };
        self.saves += 1;
        let id = format!("{:04}-{:03}", self.id, self.saves);
        let path = self.ctx.record_dir.join(format!("session_{id}.jsonl"));
        rec.save(&path).with_context(|| format!("writing {}", path.display()))?;
        self.dirty = false;
        log::info!("session {}: saved {} steps to {}", self.id, rec.steps.len(), path.display());
        Ok(ServerFrame::Saved {
            id,
            path,
            steps: rec.steps.len(),
        })
    }

    /// Save the record if it holds unsaved steps; used on reset and disconnect.
    pub fn flush(&mut self) -> Result<Option<PathBuf>> {
        if !self.dirty {
            return Ok(None);
        }
        match self.save()? {
            ServerFrame::Saved { path, .. } => Ok(Some(path)),
            _ => unreachable!("save returns a saved frame"),
        }
    }
}

fn send(ws: &mut WebSocket<TcpStream>, frame: &ServerFrame) -> tungstenite::Result<()> {
    let text = serde_json::to_string(frame).expect("frames serialize");
    ws.send(Message::text(text))
}

/// Run one client to completion. The record is flushed however the
/// connection ends.
pub fn serve_connection(ctx: Arc<ServerContext>, stream: TcpStream) -> Result<()> {
    let peer = stream.peer_addr().ok();
    let mut ws = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("websocket handshake failed: {e}"))?;
    let mut session = Session::new(ctx)?;
    log::info!("session {} opened from {:?}", session.id(), peer);
    let result = loop {
        let msg = match ws.read() {
            Ok(m) => m,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break Ok(()),
            Err(e) => break Err(anyhow::anyhow!("connection error: {e}")),
        };
        let frames = match msg {
            Message::Text(t) => session.handle_text(t.as_str()),
            Message::Binary(_) => vec![ServerFrame::error("binary frames are not supported")],
            Message::Close(_) => continue,
            _ => continue,
        };
        if let Some(e) = frames.iter().map(|f| send(&mut ws, f)).find_map(|r| r.err()) {
            break Err(anyhow::anyhow!("send failed: {e}"));
        }
    };
    if let Some(p) = session.flush()? {
        log::info!("session {} closed; unsaved steps flushed to {}", session.id(), p.display());
    }
    result
}

pub struct Server {
    listener: TcpListener,
    ctx: Arc<ServerContext>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, ctx: Arc<ServerContext>) -> Result<Self> {
        let listener = TcpListener::bind(addr).context("binding the teleop port")?;
        Ok(Self { listener, ctx })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accept clients forever, one thread and one session each.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let ctx = self.ctx.clone();
            std::thread::spawn(move || {
                if let Err(e) = serve_connection(ctx, stream) {
                    log::warn!("{e:#}");
                }
            });
        }
        Ok(())
    }
}
