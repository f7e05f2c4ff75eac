use std::path::{Path, PathBuf};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DipoleSpec, WorldParams};
use crate::error::ConfigError;
use crate::geometry::{Aabb, CameraModel, VisibilityMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomSpec {
    /// Procedural J-shaped stomach with 24822 vertices.
    Stomach,
    Sphere { vertices: usize, radius: f64 },
    /// OBJ or PLY file; relative paths resolve against the config file.
    File { path: PathBuf },
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec::Stomach
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    pub k: f64,
    /// Percentage points.
    pub diff_threshold: f64,
    pub stall_penalty: f64,
    pub violation_penalty: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            k: 0.1,
            diff_threshold: 0.02,
            stall_penalty: -0.01,
            violation_penalty: -0.1,
        }
    }
}

impl RewardSpec {
    /// Reward of a non-violating step that gained `diff` percent.
    pub fn coverage_reward(&self, diff: f64) -> f64 {
        if diff > self.diff_threshold {
            self.k * diff
        } else {
            self.stall_penalty
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.k > 0.0) {
            return Err(ConfigError::Invalid("reward.k must be positive".into()));
        }
        if !(self.diff_threshold >= 0.0) {
            return Err(ConfigError::Invalid("reward.diff_threshold must be non-negative".into()));
        }
        if !self.stall_penalty.is_finite() || !self.violation_penalty.is_finite() {
            return Err(ConfigError::Invalid("reward penalties must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Magnet translation in x and z.
    #[default]
    Planar,
    /// Translation in x, y, z plus yaw and pitch rates.
    Extended,
}

impl ActionMode {
    pub fn dim(&self) -> usize {
        match self {
            ActionMode::Planar => 2,
            ActionMode::Extended => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpawnSpec {
    /// Uniform position in the phantom box shrunk about its center by
    /// `fraction`, with uniform random yaw about the vertical axis applied
    /// after tilting the camera axis by `pitch` radians about body x
    /// (−π/2 points the camera straight up).
    Box {
        fraction: f64,
        #[serde(default)]
        pitch: f64,
    },
    /// `yaw` in radians about the vertical axis, applied to the identity
    /// orientation.
    Fixed { position: Point3<f64>, yaw: f64 },
}

impl Default for SpawnSpec {
    fn default() -> Self {
        SpawnSpec::Box { fraction: 0.5, pitch: 0.0 }
    }
}

/// Optional replacements for the bounds derived from the phantom.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsOverride {
    pub capsule_box: Option<Aabb>,
    pub magnet_box: Option<Aabb>,
    pub capsule_speed_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub phantom: PhantomSpec,
    pub camera: CameraModel,
    pub mode: VisibilityMode,
    pub world: WorldParams,
    pub capsule_dipole: DipoleSpec,
    pub magnet_dipole: DipoleSpec,
    pub bounds: BoundsOverride,
    /// Per-axis magnet speed at action magnitude 1, m/s.
    pub magnet_speed_max: f64,
    /// Yaw/pitch rate at action magnitude 1 in extended mode, rad/s.
    pub magnet_turn_rate_max: f64,
    pub action_mode: ActionMode,
    pub reward: RewardSpec,
    pub max_steps: usize,
    pub spawn: SpawnSpec,
    /// Magnet start position; defaults to the magnet box center.
    pub magnet_start: Option<Point3<f64>>,
    /// Physics substeps per control step.
    pub substeps: usize,
    /// Radius of the sphere kept clear of the phantom wall, m.
    pub capsule_radius: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::default(),
            camera: CameraModel::default(),
            mode: VisibilityMode::default(),
            world: WorldParams::default(),
            capsule_dipole: DipoleSpec::capsule_default(),
            magnet_dipole: DipoleSpec::magnet_default(),
            bounds: BoundsOverride::default(),
            magnet_speed_max: 0.02,
            magnet_turn_rate_max: 0.5,
            action_mode: ActionMode::Planar,
            reward: RewardSpec::default(),
            max_steps: 1500,
            spawn: SpawnSpec::default(),
            magnet_start: None,
            substeps: 20,
            capsule_radius: 0.0055,
        }
    }
}

impl EnvConfig {
    /// Small scenario for quick training runs on a ~2000-vertex sphere with
    /// 300-step episodes. The capsule rests on the floor looking up through
    /// a narrow 40° camera; the magnet rides in a horizontal slab above the
    /// sphere with its moment pointing up, so coverage comes from tilting
    /// the field by moving the magnet sideways.
    pub fn desk_sphere() -> Self {
        let radius = 0.05;
        let slab_y = 0.12;
        Self {
            phantom: PhantomSpec::Sphere { vertices: 2000, radius },
            camera: CameraModel {
                fov_deg: 40.0,
                ..CameraModel::default()
            },
            world: WorldParams {
                buoyancy_fraction: 0.7,
                ..WorldParams::default()
            },
            magnet_dipole: DipoleSpec {
                moment_magnitude: 20.0,
                moment_axis: nalgebra::Vector3::y(),
            },
            bounds: BoundsOverride {
                magnet_box: Some(Aabb::new(
                    Point3::new(-1.0, slab_y - 0.01, -1.0),
                    Point3::new(1.0, slab_y + 0.01, 1.0),
                )),
                ..BoundsOverride::default()
            },
            magnet_speed_max: 0.03,
            max_steps: 300,
            spawn: SpawnSpec::Box {
                fraction: 0.5,
                pitch: -std::f64::consts::FRAC_PI_2,
            },
            magnet_start: Some(Point3::new(0.0, slab_y, 0.0)),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.camera.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.world.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.capsule_dipole
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("capsule_dipole: {e}")))?;
        self.magnet_dipole
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("magnet_dipole: {e}")))?;
        self.reward.validate()?;
        if self.max_steps < 1 {
            return invalid("max_steps must be at least 1".into());
        }
        if self.substeps < 1 {
            return invalid("substeps must be at least 1".into());
        }
        if !(self.magnet_speed_max > 0.0) || !(self.magnet_turn_rate_max >= 0.0) {
            return invalid("magnet speed limits must be positive".into());
        }
        if !(self.capsule_radius >= 0.0) {
            return invalid("capsule_radius must be non-negative".into());
        }
        match self.phantom {
            PhantomSpec::Sphere { vertices, radius } if vertices < 12 || !(radius > 0.0) => {
                return invalid(format!("sphere phantom needs >= 12 vertices and radius > 0, got {vertices}, {radius}"));
            }
            _ => {}
        }
        match self.spawn {
            SpawnSpec::Box { fraction, pitch } if !pitch.is_finite() || !(fraction > 0.0 && fraction <= 1.0) => {
                return invalid(format!("spawn fraction must be in (0, 1], got {fraction}"));
            }
            SpawnSpec::Fixed { position, yaw } if !(position.iter().all(|v| v.is_finite()) && yaw.is_finite()) => {
                return invalid("fixed spawn must be finite".into());
            }
            _ => {}
        }
        for (name, b) in [("capsule_box", self.bounds.capsule_box), ("magnet_box", self.bounds.magnet_box)] {
            if let Some(b) = b {
                if b.is_degenerate() {
                    return invalid(format!("bounds.{name} is degenerate"));
                }
            }
        }
        if let Some(s) = self.bounds.capsule_speed_max {
            if !(s > 0.0) {
                return invalid("bounds.capsule_speed_max must be positive".into());
            }
        }
        Ok(())
    }

    pub fn control_dt(&self) -> f64 {
        self.world.dt
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: EnvConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; a relative phantom path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let PhantomSpec::File { path: mesh } = &mut cfg.phantom {
            if mesh.is_relative() {
                if let Some(dir) = path.parent() {
                    *mesh = dir.join(&*mesh);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for cfg in [EnvConfig::default(), EnvConfig::desk_sphere()] {
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(EnvConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let cfg = EnvConfig::from_toml_str(
            "max_steps = 300\n[phantom]\nkind = \"sphere\"\nvertices = 642\nradius = 0.05\n[world]\ndt = 0.05\n",
        )
        .unwrap();
        assert_eq!(cfg.max_steps, 300);
        assert_eq!(cfg.world.dt, 0.05);
        assert_eq!(cfg.world.capsule_mass, WorldParams::default().capsule_mass);
        assert_eq!(cfg.reward, RewardSpec::default());
        assert_eq!(cfg.phantom, PhantomSpec::Sphere { vertices: 642, radius: 0.05 });
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(EnvConfig::from_toml_str("max_steps = 0").is_err());
        assert!(EnvConfig::from_toml_str("[world]\ndt = -1.0").is_err());
        assert!(EnvConfig::from_toml_str("[reward]\nk = 0.0").is_err());
        assert!(EnvConfig::from_toml_str("[camera]\nfov_deg = 200.0").is_err());
        assert!(EnvConfig::from_toml_str("max_steps = \"many\"").is_err());
    }

    #[test]
    fn reward_branches() {
        let r = RewardSpec::default();
        assert_eq!(r.coverage_reward(0.05), 0.1 * 0.05);
        assert_eq!(r.coverage_reward(0.02), -0.01);
        assert_eq!(r.coverage_reward(0.0), -0.01);
    }
}
