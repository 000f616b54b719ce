//! Binary checkpoint: the 8-byte header `IVDCKPT1`, a little-endian `u64`
//! manifest length, the JSON manifest, then every tensor as little-endian
//! fp64 in manifest order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::params::{ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"IVDCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    params: Vec<ParamEntry>,
    optimizer: OptimizerEntry,
    #[serde(default)]
    extra: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Offsets count fp64 values from the start of the blob.
    value_offset: usize,
    adam_m_offset: usize,
    adam_v_offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerEntry {
    kind: String,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

/// Writes `store` and an arbitrary JSON `extra` section.
pub fn save<W: Write>(mut out: W, store: &ParamStore, extra: serde_json::Value) -> Result<()> {
    let mut blob: Vec<f64> = Vec::new();
    let mut entries = Vec::with_capacity(store.len());
    for p in store.params() {
        let value_offset = blob.len();
        blob.extend_from_slice(p.value.data());
        let adam_m_offset = blob.len();
        blob.extend_from_slice(&p.adam_m);
        let adam_v_offset = blob.len();
        blob.extend_from_slice(&p.adam_v);
        entries.push(ParamEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            value_offset,
            adam_m_offset,
            adam_v_offset,
        });
    }
    let manifest = Manifest {
        params: entries,
        optimizer: OptimizerEntry {
            kind: "adam".into(),
            step: store.adam_step_count(),
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        },
        extra,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut bytes = Vec::with_capacity(blob.len() * 8);
    for v in blob {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn load<R: Read>(mut input: R) -> Result<(ParamStore, serde_json::Value)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad header".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let manifest: Manifest =
        serde_json::from_slice(&json).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(TensorError::Checkpoint("truncated blob".into()));
    }
    let blob: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let take = |offset: usize, n: usize| -> Result<Vec<f64>> {
        blob.get(offset..offset + n)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| TensorError::Checkpoint("offset past end of blob".into()))
    };
    let mut store = ParamStore::new();
    for e in &manifest.params {
        let n: usize = e.shape.iter().product();
        let id = store.insert(&e.name, Tensor::new(e.shape.clone(), take(e.value_offset, n)?)?)?;
        let p = &mut store.params_mut()[id];
        p.adam_m = take(e.adam_m_offset, n)?;
        p.adam_v = take(e.adam_v_offset, n)?;
    }
    store.set_adam_step_count(manifest.optimizer.step);
    Ok((store, manifest.extra))
}
