//! Checkpoint file:
//!
//! | field | encoding |
//! |---|---|
//! | magic | `DVTK` |
//! | version | u32 = 1 |
//! | config | u32 length + UTF-8 `key = value` text |
//! | epoch | u64 completed epochs |
//! | param count | u32 |
//! | per param | u16 name length, name, tensor blob |
//! | optimiser flag | u8 (0 = none, 1 = Adam) |
//! | Adam state | u64 step, then per param `m` and `v` tensor blobs |
//!
//! Tensor blobs use the `.dvt-ten` framing. Integers are little-endian.

use std::path::Path;

use crate::error::{DvtError, Result};
use crate::numerics::io::{decode_tensor, encode_tensor, put_u16, put_u32, put_u64, ByteReader};
use crate::numerics::{AdamState, ParamStore};

use super::config::KeyValue;
use super::{EpochMetrics, ModelConfig, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DVTK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub adam: Option<AdamState<f32>>,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn from_state(config: &ModelConfig, state: &TrainState) -> Self {
        Checkpoint {
            config: config.clone(),
            params: state.params.clone(),
            adam: Some(state.adam.clone()),
            epoch: state.epoch,
        }
    }

    /// Resumable state; the metric log is not stored.
    pub fn into_state(self) -> TrainState {
        let adam = self.adam.unwrap_or_else(|| AdamState::new(self.params.tensors()));
        TrainState {
            params: self.params,
            adam,
            epoch: self.epoch,
            log: Vec::<EpochMetrics>::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, VERSION);
        let text = self.config.to_text();
        put_u32(&mut out, text.len() as u32);
        out.extend_from_slice(text.as_bytes());
        put_u64(&mut out, self.epoch as u64);
        put_u32(&mut out, self.params.len() as u32);
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            put_u16(&mut out, name.len() as u16);
            out.extend_from_slice(name.as_bytes());
            encode_tensor(t, &mut out);
        }
        match &self.adam {
            None => out.push(0),
            Some(a) => {
                out.push(1);
                put_u64(&mut out, a.step);
                for (m, v) in a.m.iter().zip(&a.v) {
                    encode_tensor(m, &mut out);
                    encode_tensor(v, &mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "checkpoint");
        r.expect_magic(CHECKPOINT_MAGIC)?;
        let at = r.position();
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error_at(at, format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let at = r.position();
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| r.error_at(at, "config is not UTF-8"))?;
        let config = ModelConfig::from_text(text).map_err(|e| r.error_at(at, e.to_string()))?;
        let epoch = r.u64()? as usize;
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let n = r.u16()? as usize;
            let at = r.position();
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| r.error_at(at, "parameter name is not UTF-8"))?
                .to_string();
            if params.find(&name).is_some() {
                return Err(r.error_at(at, format!("duplicate parameter `{name}`")));
            }
            let t = decode_tensor::<f32>(&mut r)?;
            params.add(name, t);
        }
        let at = r.position();
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let (mut m, mut v) = (Vec::with_capacity(count), Vec::with_capacity(count));
                for t in params.tensors() {
                    let at = r.position();
                    let (mi, vi) = (decode_tensor::<f32>(&mut r)?, decode_tensor::<f32>(&mut r)?);
                    if mi.shape() != t.shape() || vi.shape() != t.shape() {
                        return Err(r.error_at(at, "optimiser moment shape differs from its parameter"));
                    }
                    m.push(mi);
                    v.push(vi);
                }
                Some(AdamState { step, m, v })
            }
            f => return Err(r.error_at(at, format!("unknown optimiser flag {f}"))),
        };
        r.finish()?;
        Ok(Checkpoint {
            config,
            params,
            adam,
            epoch,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| DvtError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| DvtError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// Copies checkpoint parameters into a freshly built store, checking names
/// and shapes.
pub fn restore_params(target: &mut ParamStore<f32>, source: &ParamStore<f32>) -> Result<()> {
    if target.names() != source.names() {
        return Err(DvtError::config("checkpoint parameters do not match the model"));
    }
    for id in source.ids() {
        if target.get(id).shape() != source.get(id).shape() {
            return Err(DvtError::shape(
                "restore_params",
                target.get(id).shape(),
                source.get(id).shape(),
            ));
        }
        target.set(id, source.get(id).clone());
    }
    Ok(())
}
