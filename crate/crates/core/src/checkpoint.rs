//! Binary checkpoints.
//!
//! Layout (little-endian): magic `SCGAN`, u32 format version, 32-byte
//! architecture digest, u64 schedule seed, u64 step, then every tensor of
//! E, G, C, D1, D2 followed by every momentum buffer in the same order.
//! Each tensor is u32 rows, u32 cols and rows*cols f64 values.

use std::fs;
use std::path::Path;

use crate::error::{Result, ScganError};
use crate::networks::{Architecture, Group, ParameterSet};
use crate::trainer::TrainState;
use crate::types::{Mat, RunConfig};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"SCGAN";
pub const CHECKPOINT_VERSION: u32 = 1;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_tensor(out: &mut Vec<u8>, t: &Mat) {
    out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
    for v in t.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(state: &TrainState) -> Vec<u8> {
    let p = &state.params;
    let mut out = Vec::with_capacity(64 + 16 * p.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&p.architecture().digest());
    out.extend_from_slice(&state.seed.to_le_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());
    for g in Group::ALL {
        p.net(g).tensors().for_each(|t| put_tensor(&mut out, t));
    }
    for g in Group::ALL {
        p.momentum(g).tensors().for_each(|t| put_tensor(&mut out, t));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(ScganError::CorruptCheckpoint(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn tensor_into(&mut self, t: &mut Mat, what: &str) -> Result<()> {
        let rows = self.u32(what)? as usize;
        let cols = self.u32(what)? as usize;
        if (rows, cols) != t.dim() {
            return Err(ScganError::CorruptCheckpoint(format!(
                "{what}: tensor is {rows}x{cols}, architecture expects {}x{}",
                t.nrows(),
                t.ncols()
            )));
        }
        let raw = self.take(8 * rows * cols, what)?;
        for (v, chunk) in t.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(())
    }
}

/// Decodes a checkpoint written for the architecture of `config`.
pub fn decode_checkpoint(bytes: &[u8], config: &RunConfig) -> Result<TrainState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(5, "magic")? != CHECKPOINT_MAGIC {
        return Err(ScganError::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(ScganError::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let arch = Architecture::from_config(config);
    let found = r.take(32, "digest")?;
    let expected = arch.digest();
    if found != expected {
        return Err(ScganError::DigestMismatch {
            found: hex(found),
            expected: hex(&expected),
        });
    }
    let seed = r.u64("seed")?;
    let step = r.u64("step")?;
    let mut params = ParameterSet::zeros(arch);
    for g in Group::ALL {
        for t in params.net_mut(g).tensors_mut() {
            r.tensor_into(t, g.name())?;
        }
    }
    for g in Group::ALL {
        for t in params.momentum_mut(g).tensors_mut() {
            r.tensor_into(t, &format!("{} momentum", g.name()))?;
        }
    }
    if r.pos != bytes.len() {
        return Err(ScganError::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(TrainState {
        params,
        step,
        seed,
        history: Vec::new(),
    })
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(state)).map_err(|e| ScganError::io(path, e))
}

pub fn load_checkpoint(path: &Path, config: &RunConfig) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| ScganError::io(path, e))?;
    decode_checkpoint(&bytes, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::init_parameters;
    use crate::types::ImageShape;

    fn cfg() -> RunConfig {
        RunConfig {
            n_classes: 2,
            latent_dim: 3,
            image_shape: ImageShape::new(1, 1, 2),
            hidden: vec![5],
            classifier_hidden: vec![4],
            ..RunConfig::default()
        }
    }

    fn state() -> TrainState {
        let mut params = init_parameters(&cfg(), 4);
        params.momentum_mut(Group::Disc2).tensors_mut().for_each(|t| t.fill(0.25));
        TrainState {
            params,
            step: 17,
            seed: 9,
            history: Vec::new(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let s = state();
        let back = decode_checkpoint(&encode_checkpoint(&s), &cfg()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn failures_are_distinguished() {
        let bytes = encode_checkpoint(&state());
        for cut in [0, 3, 20, 60, bytes.len() - 1] {
            let err = decode_checkpoint(&bytes[..cut], &cfg()).unwrap_err();
            assert!(matches!(err, ScganError::CorruptCheckpoint(_)), "cut {cut}: {err}");
        }
        let mut v = bytes.clone();
        v[5] = 2;
        assert!(matches!(
            decode_checkpoint(&v, &cfg()),
            Err(ScganError::CheckpointVersion { found: 2, .. })
        ));
        let other = RunConfig { latent_dim: 4, ..cfg() };
        assert!(matches!(decode_checkpoint(&bytes, &other), Err(ScganError::DigestMismatch { .. })));
        let mut m = bytes.clone();
        m[0] = b'X';
        assert!(matches!(decode_checkpoint(&m, &cfg()), Err(ScganError::CorruptCheckpoint(_))));
        let mut t = bytes;
        t.push(0);
        assert!(matches!(decode_checkpoint(&t, &cfg()), Err(ScganError::CorruptCheckpoint(_))));
    }
}
