//! Binary checkpoint container: config, parameters, EMA shadow, and resume
//! counters, in a versioned little-endian format that round-trips bit-exactly.

use super::params::{init_params, ParamSet};
use crate::config::{RunConfig, CONFIG_SCHEMA_VERSION};
use crate::error::CoreError;
use ndarray::{ArrayD, IxDyn};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"HARCKPT\x01";

/// A trained (or in-progress) model snapshot. `epoch`/`step` plus the seed in
/// `config` fully determine the RNG streams a resumed run draws, since all
/// streams are derived per scope rather than carried as mutable state.
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: ParamSet,
    pub ema: Option<ParamSet>,
    pub epoch: u64,
    pub step: u64,
}

fn w_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn w_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn r_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn r_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_tensors<W: Write>(w: &mut W, p: &ParamSet) -> std::io::Result<()> {
    w_u32(w, p.n_tensors() as u32)?;
    for i in 0..p.n_tensors() {
        let name = p.name(i).as_bytes();
        w_u32(w, name.len() as u32)?;
        w.write_all(name)?;
        let t = p.tensor(i);
        w_u32(w, t.ndim() as u32)?;
        for &d in t.shape() {
            w_u64(w, d as u64)?;
        }
        for &v in t.as_slice().expect("standard layout") {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_tensors<R: Read>(r: &mut R, into: &mut ParamSet, path: &str) -> Result<(), CoreError> {
    let count = r_u32(r).map_err(|e| CoreError::io(path, e))? as usize;
    if count != into.n_tensors() {
        return Err(CoreError::Checkpoint(format!(
            "tensor count {count} does not match architecture ({})",
            into.n_tensors()
        )));
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let nlen = r_u32(r).map_err(|e| CoreError::io(path, e))? as usize;
        let mut nb = vec![0u8; nlen];
        r.read_exact(&mut nb).map_err(|e| CoreError::io(path, e))?;
        let name = String::from_utf8(nb)
            .map_err(|_| CoreError::Checkpoint("non-utf8 tensor name".into()))?;
        let ndim = r_u32(r).map_err(|e| CoreError::io(path, e))? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r_u64(r).map_err(|e| CoreError::io(path, e))? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = vec![0f64; n];
        for v in data.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|e| CoreError::io(path, e))?;
            *v = f64::from_le_bytes(b);
        }
        let idx = (0..into.n_tensors())
            .find(|&i| into.name(i) == name)
            .ok_or_else(|| CoreError::Checkpoint(format!("unexpected tensor {name}")))?;
        if seen[idx] {
            return Err(CoreError::Checkpoint(format!("duplicate tensor {name}")));
        }
        if into.tensor(idx).shape() != shape.as_slice() {
            return Err(CoreError::Checkpoint(format!(
                "shape mismatch for {name}: file {:?}, architecture {:?}",
                shape,
                into.tensor(idx).shape()
            )));
        }
        *into.tensor_mut(idx) = ArrayD::from_shape_vec(IxDyn(&shape), data).unwrap();
        seen[idx] = true;
    }
    Ok(())
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CoreError> {
        let p = path.as_ref();
        let ps = p.display().to_string();
        let f = File::create(p).map_err(|e| CoreError::io(&ps, e))?;
        let mut w = BufWriter::new(f);
        (|| -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w_u32(&mut w, CONFIG_SCHEMA_VERSION)?;
            let json = serde_json::to_vec(&self.config).expect("config serializes");
            w_u64(&mut w, json.len() as u64)?;
            w.write_all(&json)?;
            w_u64(&mut w, self.epoch)?;
            w_u64(&mut w, self.step)?;
            w.write_all(&[self.ema.is_some() as u8])?;
            write_tensors(&mut w, &self.params)?;
            if let Some(ema) = &self.ema {
                write_tensors(&mut w, ema)?;
            }
            w.flush()
        })()
        .map_err(|e| CoreError::io(&ps, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CoreError> {
        let p = path.as_ref();
        let ps = p.display().to_string();
        let f = File::open(p).map_err(|e| CoreError::io(&ps, e))?;
        let mut r = BufReader::new(f);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| CoreError::io(&ps, e))?;
        if &magic != MAGIC {
            return Err(CoreError::Checkpoint(format!("{ps}: not a checkpoint file")));
        }
        let version = r_u32(&mut r).map_err(|e| CoreError::io(&ps, e))?;
        if version != CONFIG_SCHEMA_VERSION {
            return Err(CoreError::Checkpoint(format!(
                "{ps}: schema version {version}, expected {CONFIG_SCHEMA_VERSION}"
            )));
        }
        let jlen = r_u64(&mut r).map_err(|e| CoreError::io(&ps, e))? as usize;
        let mut jb = vec![0u8; jlen];
        r.read_exact(&mut jb).map_err(|e| CoreError::io(&ps, e))?;
        let config: RunConfig = serde_json::from_slice(&jb)
            .map_err(|e| CoreError::Checkpoint(format!("config parse: {e}")))?;
        let epoch = r_u64(&mut r).map_err(|e| CoreError::io(&ps, e))?;
        let step = r_u64(&mut r).map_err(|e| CoreError::io(&ps, e))?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(|e| CoreError::io(&ps, e))?;

        // Rebuild the canonical structure for this architecture, then fill
        // tensors by name so ordering in the file is not load-bearing.
        let mut params = init_params(&config.model, 0);
        read_tensors(&mut r, &mut params, &ps)?;
        let ema = if flag[0] != 0 {
            let mut e = init_params(&config.model, 0);
            read_tensors(&mut r, &mut e, &ps)?;
            Some(e)
        } else {
            None
        };
        Ok(Checkpoint {
            config,
            params,
            ema,
            epoch,
            step,
        })
    }

    /// Weights to evaluate with: the EMA shadow when present, else the raw
    /// parameters.
    pub fn eval_params(&self) -> &ParamSet {
        self.ema.as_ref().unwrap_or(&self.params)
    }
}
