//! Versioned binary checkpoints.
//!
//! Layout (little endian): magic `HVACDRL\0`, `u32` version, 8-byte config
//! hash, `u32` tensor count, then per tensor a `u32` name length, the UTF-8
//! name, a `u64` element count and the `f64` values.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ddpg::DdpgAgent;
use super::nn::Parameters;
use super::ppo::PpoLearner;

const MAGIC: &[u8; 8] = b"HVACDRL\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("tensor name is not UTF-8")]
    Name,
    #[error("checkpoint is missing tensor {0}")]
    Missing(String),
    #[error("tensor {name} has {found} values, model expects {expected}")]
    Size { name: String, found: usize, expected: usize },
    #[error("checkpoint was written for a different configuration")]
    ConfigMismatch,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 8],
    pub tensors: Vec<Tensor>,
}

/// First eight bytes of the SHA-256 of `text`.
pub fn config_hash(text: &str) -> [u8; 8] {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

impl Checkpoint {
    pub fn new(config_hash: [u8; 8]) -> Self {
        Self {
            config_hash,
            tensors: Vec::new(),
        }
    }

    /// Appends every tensor of `params` as `prefix.0`, `prefix.1`, ...
    pub fn push_params<P: Parameters>(&mut self, prefix: &str, params: &P) {
        for (i, t) in params.tensors().into_iter().enumerate() {
            self.tensors.push(Tensor {
                name: format!("{prefix}.{i}"),
                data: t.to_vec(),
            });
        }
    }

    pub fn load_params<P: Parameters>(&self, prefix: &str, params: &mut P) -> Result<(), CheckpointError> {
        for (i, t) in params.tensors_mut().into_iter().enumerate() {
            let name = format!("{prefix}.{i}");
            let src = self
                .tensors
                .iter()
                .find(|x| x.name == name)
                .ok_or_else(|| CheckpointError::Missing(name.clone()))?;
            if src.data.len() != t.len() {
                return Err(CheckpointError::Size {
                    name,
                    found: src.data.len(),
                    expected: t.len(),
                });
            }
            t.copy_from_slice(&src.data);
        }
        Ok(())
    }

    pub fn from_ppo(learner: &PpoLearner, config_hash: [u8; 8]) -> Self {
        let mut c = Self::new(config_hash);
        for (i, a) in learner.agents.iter().enumerate() {
            c.push_params(&format!("agent{i}"), &a.params);
        }
        c
    }

    pub fn restore_ppo(&self, learner: &mut PpoLearner) -> Result<(), CheckpointError> {
        for (i, a) in learner.agents.iter_mut().enumerate() {
            self.load_params(&format!("agent{i}"), &mut a.params)?;
        }
        Ok(())
    }

    pub fn from_ddpg(agent: &DdpgAgent, config_hash: [u8; 8]) -> Self {
        let mut c = Self::new(config_hash);
        c.push_params("actor", &agent.actor);
        c.push_params("critic", &agent.critic);
        c.push_params("actor_target", &agent.actor_target);
        c.push_params("critic_target", &agent.critic_target);
        c
    }

    pub fn restore_ddpg(&self, agent: &mut DdpgAgent) -> Result<(), CheckpointError> {
        self.load_params("actor", &mut agent.actor)?;
        self.load_params("critic", &mut agent.critic)?;
        self.load_params("actor_target", &mut agent.actor_target)?;
        self.load_params("critic_target", &mut agent.critic_target)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.data.len() as u64).to_le_bytes());
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut config_hash = [0u8; 8];
        config_hash.copy_from_slice(r.take(8)?);
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CheckpointError::Name)?
                .to_string();
            let n = r.u64()? as usize;
            let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(Tensor { name, data });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        Ok(Self { config_hash, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn check_config(&self, expected: [u8; 8]) -> Result<(), CheckpointError> {
        if self.config_hash == expected {
            Ok(())
        } else {
            Err(CheckpointError::ConfigMismatch)
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
