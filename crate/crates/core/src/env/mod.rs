//! Episodic coverage-scanning environment.
//!
//! Each control step moves the external magnet, integrates the capsule
//! under the magnet's dipole wrench, credits newly seen vertices and
//! scores the step:
//!
//! * `k · diff` when the coverage gain `diff` (percent) exceeds the threshold,
//! * the stall penalty otherwise,
//! * the violation penalty, ending the episode, when a bound is broken.

pub mod config;
pub mod observation;
pub mod record;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{ActionMode, BoundsOverride, EnvConfig, PhantomSpec, RewardSpec, SpawnSpec};
pub use observation::{ObsNormalizer, Observation, OBS_DIM};
pub use record::{EpisodeHeader, EpisodeRecord, EpisodeSummary, StepRecord, TimedCoverage, RECORD_FORMAT, REPORT_TIMES};

use crate::dynamics::{
    apply_magnet_command, check_bounds, dipole_wrench, resolve_wall_contact, step_capsule, Bounds, RigidState,
    Violation,
};
use crate::error::EnvError;
use crate::geometry::{
    generate_sphere_phantom, generate_stomach_phantom, load_mesh, visibility::visible_vertices_where, Aabb, BvhIndex,
    CameraPose, CoverageTracker, TriangleMesh,
};

pub const SPAWN_ATTEMPTS: usize = 100;

/// Immutable phantom data shared by environment instances.
#[derive(Debug)]
pub struct PhantomWorld {
    /// Normals point into the cavity.
    pub mesh: TriangleMesh,
    pub bvh: BvhIndex,
    pub phantom_box: Aabb,
    pub bounds: Bounds,
}

impl PhantomWorld {
    pub fn build(cfg: &EnvConfig) -> Result<Arc<Self>, EnvError> {
        let mesh = match &cfg.phantom {
            PhantomSpec::Stomach => generate_stomach_phantom(),
            PhantomSpec::Sphere { vertices, radius } => generate_sphere_phantom(*vertices, *radius)?,
            PhantomSpec::File { path } => load_mesh(path)?,
        };
        Ok(Arc::new(Self::from_mesh(mesh, cfg)))
    }

    pub fn from_mesh(mesh: TriangleMesh, cfg: &EnvConfig) -> Self {
        let mesh = mesh.inward();
        let bvh = BvhIndex::build(&mesh);
        let phantom_box = mesh.bounds();
        let mut bounds = Bounds::for_phantom(&phantom_box);
        if let Some(b) = cfg.bounds.capsule_box {
            bounds.capsule_box = b;
        }
        if let Some(b) = cfg.bounds.magnet_box {
            bounds.magnet_box = b;
        }
        if let Some(s) = cfg.bounds.capsule_speed_max {
            bounds.capsule_speed_max = s;
        }
        Self {
            mesh,
            bvh,
            phantom_box,
            bounds,
        }
    }

    /// Strictly inside the phantom with at least `clearance` to the wall.
    pub fn is_free(&self, p: &Point3<f64>, clearance: f64) -> bool {
        if !self.phantom_box.contains(p) || !self.mesh.contains_point(p) {
            return false;
        }
        self.bvh
            .closest_point(p)
            .is_some_and(|cp| cp.distance_squared >= clearance * clearance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub coverage: f64,
    pub diff: f64,
    pub new_vertices: Vec<usize>,
    pub violation: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    seed: u64,
    tracker: CoverageTracker,
    capsule: RigidState,
    magnet: RigidState,
    step: usize,
    finished: bool,
}

/// One sequential environment instance.
#[derive(Debug, Clone)]
pub struct CoverageEnv {
    cfg: EnvConfig,
    world: Arc<PhantomWorld>,
    normalizer: ObsNormalizer,
    episode: Option<Episode>,
}

impl CoverageEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate().map_err(|e| EnvError::Config(e.to_string()))?;
        let world = PhantomWorld::build(&cfg)?;
        Self::with_world(cfg, world)
    }

    /// Reuse an already built phantom; `world` must come from the same
    /// phantom and bounds settings as `cfg`.
    pub fn with_world(cfg: EnvConfig, world: Arc<PhantomWorld>) -> Result<Self, EnvError> {
        cfg.validate().map_err(|e| EnvError::Config(e.to_string()))?;
        world.bounds.validate()?;
        Ok(Self {
            normalizer: ObsNormalizer::from_bounds(&world.bounds),
            cfg,
            world,
            episode: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &Arc<PhantomWorld> {
        &self.world
    }

    pub fn bounds(&self) -> &Bounds {
        &self.world.bounds
    }

    pub fn normalizer(&self) -> &ObsNormalizer {
        &self.normalizer
    }

    pub fn action_dim(&self) -> usize {
        self.cfg.action_mode.dim()
    }

    pub fn vertex_count(&self) -> usize {
        self.world.mesh.vertex_count()
    }

    fn episode(&self) -> Result<&Episode, EnvError> {
        self.episode.as_ref().ok_or(EnvError::NotReset)
    }

    pub fn seed(&self) -> Result<u64, EnvError> {
        Ok(self.episode()?.seed)
    }

    pub fn step_count(&self) -> Result<usize, EnvError> {
        Ok(self.episode()?.step)
    }

    pub fn sim_time(&self) -> Result<f64, EnvError> {
        Ok(self.episode()?.step as f64 * self.cfg.control_dt())
    }

    pub fn coverage(&self) -> Result<f64, EnvError> {
        Ok(self.episode()?.tracker.current_coverage())
    }

    pub fn tracker(&self) -> Result<&CoverageTracker, EnvError> {
        Ok(&self.episode()?.tracker)
    }

    pub fn capsule(&self) -> Result<&RigidState, EnvError> {
        Ok(&self.episode()?.capsule)
    }

    pub fn magnet(&self) -> Result<&RigidState, EnvError> {
        Ok(&self.episode()?.magnet)
    }

    pub fn is_finished(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.finished)
    }

    pub fn camera_pose(&self) -> Result<CameraPose, EnvError> {
        let c = self.capsule()?;
        Ok(CameraPose::new(c.position, c.orientation))
    }

    fn spawn(&self, rng: &mut ChaCha8Rng) -> Result<RigidState, EnvError> {
        match self.cfg.spawn {
            SpawnSpec::Fixed { position, yaw } => {
                Ok(RigidState::at_rest(position, UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw)))
            }
            SpawnSpec::Box { fraction, pitch } => {
                let tilt = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), pitch);
                let region = self.world.phantom_box.scaled(fraction);
                for _ in 0..SPAWN_ATTEMPTS {
                    let p = Point3::new(
                        rng.random_range(region.min.x..=region.max.x),
                        rng.random_range(region.min.y..=region.max.y),
                        rng.random_range(region.min.z..=region.max.z),
                    );
                    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    if self.world.is_free(&p, self.cfg.capsule_radius) {
                        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw) * tilt;
                        return Ok(RigidState::at_rest(p, q));
                    }
                }
                Err(EnvError::SpawnFailed(SPAWN_ATTEMPTS))
            }
        }
    }

    /// Start a new episode. Coverage starts at zero; the camera's view at the
    /// spawn pose is not credited until the first step.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let capsule = self.spawn(&mut rng)?;
        let magnet_pos = self.cfg.magnet_start.unwrap_or_else(|| self.world.bounds.magnet_box.center());
        self.episode = Some(Episode {
            seed,
            tracker: CoverageTracker::new(self.world.mesh.vertex_count()),
            capsule,
            magnet: RigidState::at_rest(magnet_pos, UnitQuaternion::identity()),
            step: 0,
            finished: false,
        });
        self.observe()
    }

    pub fn observe(&self) -> Result<Observation, EnvError> {
        let e = self.episode()?;
        Ok(Observation::new(&e.capsule, &e.magnet, e.step, self.cfg.max_steps))
    }

    /// Observation scaled for a policy network.
    pub fn normalized(&self, obs: &Observation) -> [f64; OBS_DIM] {
        self.normalizer.apply(obs)
    }

    /// Magnet linear and angular velocity commanded by a clamped action.
    pub fn magnet_command(&self, action: &[f64]) -> (Vector3<f64>, Vector3<f64>) {
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let v = self.cfg.magnet_speed_max;
        match self.cfg.action_mode {
            ActionMode::Planar => (Vector3::new(a[0] * v, 0.0, a[1] * v), Vector3::zeros()),
            ActionMode::Extended => {
                let w = self.cfg.magnet_turn_rate_max;
                (Vector3::new(a[0] * v, a[1] * v, a[2] * v), Vector3::new(0.0, a[4] * w, a[3] * w))
            }
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let dim = self.action_dim();
        let e = self.episode()?;
        if e.finished {
            return Err(EnvError::EpisodeFinished);
        }
        if action.len() != dim {
            return Err(EnvError::ActionDim {
                expected: dim,
                got: action.len(),
            });
        }
        if action.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFiniteAction {
                step: e.step + 1,
                action: action.to_vec(),
            });
        }
        let (lin, ang) = self.magnet_command(action);

        let cfg = &self.cfg;
        let world = &self.world;
        let e = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        e.magnet = apply_magnet_command(&e.magnet, &lin, &ang, &cfg.world, &world.bounds);

        let sub = cfg.world.with_dt(cfg.world.dt / cfg.substeps as f64);
        let mut capsule = e.capsule;
        for _ in 0..cfg.substeps {
            let w = dipole_wrench(&e.magnet, &cfg.magnet_dipole, &capsule, &cfg.capsule_dipole)?;
            capsule = step_capsule(&capsule, &w, &sub);
            capsule = resolve_wall_contact(&capsule, cfg.capsule_radius, &world.mesh, &world.bvh);
        }
        e.capsule = capsule;

        let pose = CameraPose::new(capsule.position, capsule.orientation);
        let tracker = &e.tracker;
        let new_vertices = visible_vertices_where(&cfg.camera, &pose, &world.mesh, &world.bvh, cfg.mode, |i| {
            !tracker.is_visited(i)
        });
        let diff = e.tracker.mark_and_diff(&new_vertices)?;

        e.step += 1;
        let violation = check_bounds(&e.capsule, &e.magnet, &world.bounds);
        let terminated = violation.is_some();
        let reward = if terminated {
            cfg.reward.violation_penalty
        } else {
            cfg.reward.coverage_reward(diff)
        };
        let truncated = !terminated && e.step >= cfg.max_steps;
        e.finished = terminated || truncated;

        Ok(StepResult {
            observation: Observation::new(&e.capsule, &e.magnet, e.step, cfg.max_steps),
            reward,
            terminated,
            truncated,
            info: StepInfo {
                coverage: e.tracker.current_coverage(),
                diff,
                new_vertices,
                violation,
            },
        })
    }
}

impl EpisodeRecord {
    /// Append the outcome of control step `step` (1-based).
    pub fn push_result(&mut self, step: usize, dt: f64, action: Vec<f64>, r: &StepResult) {
        self.steps.push(StepRecord {
            step,
            sim_time: step as f64 * dt,
            action,
            reward: r.reward,
            coverage: r.info.coverage,
            diff: r.info.diff,
            violation: r.info.violation,
            terminated: r.terminated,
            truncated: r.truncated,
        });
    }
}

/// Uniform random actions in [−1, 1] from a seeded stream.
pub fn random_policy(seed: u64, dim: usize) -> impl FnMut(&Observation) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move |_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Reset with `seed` and run `policy` until the episode ends.
pub fn run_episode(
    env: &mut CoverageEnv,
    seed: u64,
    mut policy: impl FnMut(&Observation) -> Vec<f64>,
) -> Result<EpisodeRecord, EnvError> {
    let start = Instant::now();
    let mut record = EpisodeRecord::new(seed, env.config().clone());
    let dt = env.config().control_dt();
    let mut obs = env.reset(seed)?;
    loop {
        let action = policy(&obs);
        let r = env.step(&action)?;
        record.push_result(env.step_count()?, dt, action, &r);
        if r.terminated || r.truncated {
            break;
        }
        obs = r.observation;
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}
