//! Binary training checkpoints.
//!
//! Layout, little-endian: `b"HQCK"`, `u16` version, `u16` reserved, then
//! the run config as length-prefixed JSON, epoch and step (`u64`), the
//! ChaCha state (32-byte seed, `u64` stream, `u128` word position), best
//! validation loss (`f64`), Adam step count (`u64`), and the parameters
//! sorted by name. Each parameter record is a length-prefixed name, a kind
//! byte, four `u64` dims, the values and, for trainable entries, both Adam
//! moments.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::RunConfig;
use crate::tensor::{AdamState, ParamKind, ParamStore, Shape};

pub const MAGIC: [u8; 4] = *b"HQCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint: magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    UnsupportedVersion(u16),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} unexpected bytes after the checkpoint")]
    TrailingData(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("parameter `{name}` has shape {got}, model expects {expected}")]
    ShapeMismatch { name: String, got: Shape, expected: Shape },
    #[error("checkpoint lacks parameter `{0}`")]
    MissingParameter(String),
    #[error("checkpoint has unknown parameter `{0}`")]
    UnexpectedParameter(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T, E = CheckpointError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Shape,
    pub value: Vec<f64>,
    /// Empty for buffers.
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed optimizer steps.
    pub step: u64,
    pub rng: RngState,
    pub best_val_loss: f64,
    pub adam_step: u64,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn capture(
        config: &RunConfig,
        epoch: u64,
        step: u64,
        rng: &ChaCha8Rng,
        best_val_loss: f64,
        store: &ParamStore,
        adam: &AdamState,
    ) -> Self {
        let params = store
            .sorted()
            .map(|(id, p)| ParamRecord {
                name: p.name.clone(),
                kind: p.kind,
                shape: p.value.shape(),
                value: p.value.data().to_vec(),
                first_moment: adam.first_moment[id.index()].clone(),
                second_moment: adam.second_moment[id.index()].clone(),
            })
            .collect();
        Self {
            config: config.clone(),
            epoch,
            step,
            rng: RngState::capture(rng),
            best_val_loss,
            adam_step: adam.step_count,
            params,
        }
    }

    /// Copies weights and optimizer moments into a store built from the
    /// same model config. Every name must match with an equal shape.
    pub fn restore_into(&self, store: &mut ParamStore, adam: &mut AdamState) -> Result<()> {
        for rec in &self.params {
            let id = store
                .id(&rec.name)
                .ok_or_else(|| CheckpointError::UnexpectedParameter(rec.name.clone()))?;
            let expected = store.value(id).shape();
            if expected != rec.shape {
                return Err(CheckpointError::ShapeMismatch {
                    name: rec.name.clone(),
                    got: rec.shape,
                    expected,
                });
            }
        }
        if let Some((_, missing)) = store
            .sorted()
            .find(|(_, p)| !self.params.iter().any(|r| r.name == p.name))
        {
            return Err(CheckpointError::MissingParameter(missing.name.clone()));
        }
        for rec in &self.params {
            let id = store.id(&rec.name).expect("checked above");
            let p = store.get_mut(id);
            if p.kind != rec.kind {
                return Err(CheckpointError::Malformed(format!("`{}` changed kind", rec.name)));
            }
            p.value.data_mut().copy_from_slice(&rec.value);
            adam.first_moment[id.index()].clone_from(&rec.first_moment);
            adam.second_moment[id.index()].clone_from(&rec.second_moment);
        }
        adam.step_count = self.adam_step;
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(&MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        w.extend_from_slice(&0u16.to_le_bytes());
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        w.extend_from_slice(&(json.len() as u64).to_le_bytes());
        w.extend_from_slice(&json);
        w.extend_from_slice(&self.epoch.to_le_bytes());
        w.extend_from_slice(&self.step.to_le_bytes());
        w.extend_from_slice(&self.rng.seed);
        w.extend_from_slice(&self.rng.stream.to_le_bytes());
        w.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.extend_from_slice(&self.best_val_loss.to_le_bytes());
        w.extend_from_slice(&self.adam_step.to_le_bytes());
        w.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            w.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            w.extend_from_slice(p.name.as_bytes());
            w.push(match p.kind {
                ParamKind::Trainable => 0,
                ParamKind::Buffer => 1,
            });
            for d in p.shape.dims() {
                w.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in p.value.iter().chain(&p.first_moment).chain(&p.second_moment) {
                w.extend_from_slice(&v.to_le_bytes());
            }
        }
        w
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.array()?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let _reserved: [u8; 2] = r.array()?;
        let json_len = r.len()?;
        let config: RunConfig = serde_json::from_slice(r.take(json_len)?)
            .map_err(|e| CheckpointError::Malformed(format!("config: {e}")))?;
        let epoch = r.u64()?;
        let step = r.u64()?;
        let rng = RngState {
            seed: r.array()?,
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.array()?),
        };
        let best_val_loss = f64::from_le_bytes(r.array()?);
        let adam_step = r.u64()?;
        let n_params = r.len()?;
        let mut params = Vec::new();
        for _ in 0..n_params {
            let name_len = u32::from_le_bytes(r.array()?) as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Malformed("parameter name is not UTF-8".into()))?;
            let kind = match r.array::<1>()?[0] {
                0 => ParamKind::Trainable,
                1 => ParamKind::Buffer,
                k => return Err(CheckpointError::Malformed(format!("`{name}` has kind byte {k}"))),
            };
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.len()?;
            }
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::Malformed(format!("`{name}` dimensions overflow")))?;
            let value = r.f64s(numel)?;
            let (first_moment, second_moment) = match kind {
                ParamKind::Trainable => (r.f64s(numel)?, r.f64s(numel)?),
                ParamKind::Buffer => (Vec::new(), Vec::new()),
            };
            params.push(ParamRecord {
                name,
                kind,
                shape,
                value,
                first_moment,
                second_moment,
            });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingData(bytes.len() - r.pos));
        }
        if !params.windows(2).all(|w| w[0].name < w[1].name) {
            return Err(CheckpointError::Malformed(
                "parameters not sorted by unique name".into(),
            ));
        }
        Ok(Self {
            config,
            epoch,
            step,
            rng,
            best_val_loss,
            adam_step,
            params,
        })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint under the final name.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        let io = |e: std::io::Error| CheckpointError::Io(format!("{}: {e}", path.display()));
        fs::write(&tmp, self.encode()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    /// A `u64` count, rejected early if it cannot fit in the remaining bytes.
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len() - self.pos)
            .ok_or(CheckpointError::Truncated(self.bytes.len()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
