//! Versioned binary checkpoints.
//!
//! Layout: 8 magic bytes, u32 LE format version, u32 LE descriptor length,
//! the JSON descriptor, u64 LE parameter count, the parameters as f64 LE,
//! and a SHA-256 digest of everything before it.

use std::fs;
use std::path::{Path, PathBuf};

use capscan_core::env::EnvConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LearnError;
use crate::mlp::Mlp;
use crate::policy::{GaussianPolicy, NetworkConfig};
use crate::ppo::PpoAgent;
use crate::sac::SacAgent;
use crate::train::Algo;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"CAPSCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDescriptor {
    pub algo: Algo,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub network: NetworkConfig,
    pub tensors: Vec<TensorInfo>,
    pub env: EnvConfig,
    pub train_step: u64,
    pub seed: u64,
}

/// Everything a checkpoint records besides the tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub env: EnvConfig,
    pub train_step: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub descriptor: CheckpointDescriptor,
    pub params: Vec<f64>,
}

fn fail(path: &Path, msg: impl Into<String>) -> LearnError {
    LearnError::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

impl Checkpoint {
    fn build(
        algo: Algo,
        obs_dim: usize,
        act_dim: usize,
        network: NetworkConfig,
        meta: &CheckpointMeta,
        tensors: &[(&str, &[f64])],
    ) -> Self {
        let mut params = Vec::new();
        let mut infos = Vec::new();
        for (name, t) in tensors {
            infos.push(TensorInfo {
                name: name.to_string(),
                len: t.len(),
            });
            params.extend_from_slice(t);
        }
        Self {
            descriptor: CheckpointDescriptor {
                algo,
                obs_dim,
                act_dim,
                network,
                tensors: infos,
                env: meta.env.clone(),
                train_step: meta.train_step,
                seed: meta.seed,
            },
            params,
        }
    }

    pub fn from_ppo(agent: &PpoAgent, network: NetworkConfig, meta: &CheckpointMeta) -> Self {
        let p = &agent.policy;
        Self::build(
            Algo::Ppo,
            p.obs_dim(),
            p.act_dim(),
            network,
            meta,
            &[("policy", &p.net.params), ("log_std", &p.log_std), ("value", &agent.value.params)],
        )
    }

    pub fn from_sac(agent: &SacAgent, network: NetworkConfig, meta: &CheckpointMeta) -> Self {
        let p = &agent.policy;
        Self::build(
            Algo::Sac,
            p.obs_dim(),
            p.act_dim(),
            network,
            meta,
            &[
                ("policy", &p.net.params),
                ("log_std", &p.log_std),
                ("q1", &agent.q1.params),
                ("q2", &agent.q2.params),
                ("q1_target", &agent.q1_target.params),
                ("q2_target", &agent.q2_target.params),
                ("log_alpha", &[agent.log_alpha]),
            ],
        )
    }

    pub fn random(obs_dim: usize, act_dim: usize, meta: &CheckpointMeta) -> Self {
        Self::build(Algo::Random, obs_dim, act_dim, NetworkConfig::default(), meta, &[])
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let mut off = 0;
        for t in &self.descriptor.tensors {
            if t.name == name {
                return self.params.get(off..off + t.len);
            }
            off += t.len;
        }
        None
    }

    fn mlp(&self, name: &str, input: usize, output: usize) -> Result<Mlp, LearnError> {
        let t = self
            .tensor(name)
            .ok_or_else(|| fail(Path::new("<memory>"), format!("missing tensor {name}")))?;
        Mlp::from_params(&self.descriptor.network.sizes(input, output), t.to_vec())
    }

    /// The actor, or `None` for a random-policy checkpoint.
    pub fn policy(&self) -> Result<Option<GaussianPolicy>, LearnError> {
        let d = &self.descriptor;
        if d.algo == Algo::Random {
            return Ok(None);
        }
        let net = self.mlp("policy", d.obs_dim, d.act_dim)?;
        let log_std = self
            .tensor("log_std")
            .filter(|t| t.len() == d.act_dim)
            .ok_or_else(|| fail(Path::new("<memory>"), "missing or mis-sized log_std"))?
            .to_vec();
        Ok(Some(GaussianPolicy { net, log_std }))
    }

    pub fn to_ppo(&self) -> Result<PpoAgent, LearnError> {
        let policy = self
            .policy()?
            .filter(|_| self.descriptor.algo == Algo::Ppo)
            .ok_or_else(|| fail(Path::new("<memory>"), "not a PPO checkpoint"))?;
        let value = self.mlp("value", self.descriptor.obs_dim, 1)?;
        Ok(PpoAgent::from_parts(policy, value))
    }

    pub fn to_sac(&self) -> Result<SacAgent, LearnError> {
        let d = &self.descriptor;
        let policy = self
            .policy()?
            .filter(|_| d.algo == Algo::Sac)
            .ok_or_else(|| fail(Path::new("<memory>"), "not a SAC checkpoint"))?;
        let q = |n| self.mlp(n, d.obs_dim + d.act_dim, 1);
        let log_alpha = self
            .tensor("log_alpha")
            .and_then(|t| t.first().copied())
            .ok_or_else(|| fail(Path::new("<memory>"), "missing log_alpha"))?;
        Ok(SacAgent::from_parts(policy, q("q1")?, q("q2")?, q("q1_target")?, q("q2_target")?, log_alpha))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let desc = serde_json::to_vec(&self.descriptor).expect("descriptor serializes");
        let mut out = Vec::with_capacity(64 + desc.len() + 8 * self.params.len());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
        out.extend_from_slice(&desc);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, LearnError> {
        if bytes.len() < 8 + 4 + 4 + 8 + 32 {
            return Err(fail(path, "file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(fail(path, "checksum mismatch"));
        }
        if body[..8] != CHECKPOINT_MAGIC {
            return Err(fail(path, "not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(fail(path, format!("unsupported format version {version}")));
        }
        let dlen = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
        let rest = &body[16..];
        if rest.len() < dlen + 8 {
            return Err(fail(path, "truncated descriptor"));
        }
        let descriptor: CheckpointDescriptor =
            serde_json::from_slice(&rest[..dlen]).map_err(|e| fail(path, format!("bad descriptor: {e}")))?;
        let count = u64::from_le_bytes(rest[dlen..dlen + 8].try_into().unwrap()) as usize;
        let data = &rest[dlen + 8..];
        if data.len() != count * 8 {
            return Err(fail(path, "parameter block length mismatch"));
        }
        let declared: usize = descriptor.tensors.iter().map(|t| t.len).sum();
        if declared != count {
            return Err(fail(path, format!("descriptor declares {declared} parameters, file holds {count}")));
        }
        let params = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let ck = Self { descriptor, params };
        ck.check_architecture().map_err(|m| fail(path, m))?;
        Ok(ck)
    }

    fn check_architecture(&self) -> Result<(), String> {
        let d = &self.descriptor;
        let sizes = |i, o| Mlp::zeros(&d.network.sizes(i, o)).param_count();
        let want: Vec<(&str, usize)> = match d.algo {
            Algo::Random => vec![],
            Algo::Ppo => vec![
                ("policy", sizes(d.obs_dim, d.act_dim)),
                ("log_std", d.act_dim),
                ("value", sizes(d.obs_dim, 1)),
            ],
            Algo::Sac => {
                let q = sizes(d.obs_dim + d.act_dim, 1);
                vec![
                    ("policy", sizes(d.obs_dim, d.act_dim)),
                    ("log_std", d.act_dim),
                    ("q1", q),
                    ("q2", q),
                    ("q1_target", q),
                    ("q2_target", q),
                    ("log_alpha", 1),
                ]
            }
        };
        let got: Vec<(&str, usize)> = d.tensors.iter().map(|t| (t.name.as_str(), t.len)).collect();
        if got != want {
            return Err(format!("tensor layout {got:?} does not match the declared architecture {want:?}"));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LearnError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| LearnError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LearnError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| LearnError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// `checkpoints/step_000123456.ckpt` style name for a periodic checkpoint.
pub fn checkpoint_name(step: u64) -> PathBuf {
    PathBuf::from(format!("step_{step:09}.ckpt"))
}
