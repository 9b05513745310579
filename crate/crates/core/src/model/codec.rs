//! Binary model file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "RULMODEL"
//! version    u32      1
//! header_len u32
//! header     header_len bytes of UTF-8, one `key=value` per line:
//!            cell, n_features, window_len, hidden (comma separated),
//!            output, seed
//! n_tensors  u64
//! repeated n_tensors times:
//!   len      u64
//!   values   len x f64 (IEEE 754, little-endian)
//! ```
//!
//! Tensors follow [`ParamSet`] order: each recurrent layer in turn (LSTM:
//! input, forget, output, cell gates; GRU: update, reset, candidate; each
//! gate as W, U, b), then the dense W and b. Optimizer state is not stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelError, ModelSpec};
use crate::nn::ParamSet;

pub const MODEL_MAGIC: &[u8; 8] = b"RULMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

fn header_text(spec: &ModelSpec) -> String {
    let hidden: Vec<String> = spec.hidden_dims.iter().map(|h| h.to_string()).collect();
    format!(
        "cell={}\nn_features={}\nwindow_len={}\nhidden={}\noutput={}\nseed={}\n",
        spec.cell_type,
        spec.n_features,
        spec.window_len,
        hidden.join(","),
        spec.output_dim,
        spec.init_seed
    )
}

fn parse_header(text: &str) -> Result<ModelSpec, ModelError> {
    let bad = |m: String| ModelError::Format(m);
    let mut cell = None;
    let mut n_features = None;
    let mut window_len = None;
    let mut hidden = None;
    let mut output = None;
    let mut seed = None;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("bad header line '{line}'")))?;
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad value for {k}: '{v}'")));
        match k {
            "cell" => cell = Some(v.parse().map_err(bad)?),
            "n_features" => n_features = Some(int(v)?),
            "window_len" => window_len = Some(int(v)?),
            "hidden" => hidden = Some(v.split(',').map(int).collect::<Result<Vec<_>, _>>()?),
            "output" => output = Some(int(v)?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad(format!("bad seed '{v}'")))?),
            other => return Err(bad(format!("unknown header key '{other}'"))),
        }
    }
    let missing = |k: &str| bad(format!("header missing '{k}'"));
    Ok(ModelSpec {
        cell_type: cell.ok_or_else(|| missing("cell"))?,
        hidden_dims: hidden.ok_or_else(|| missing("hidden"))?,
        output_dim: output.ok_or_else(|| missing("output"))?,
        window_len: window_len.ok_or_else(|| missing("window_len"))?,
        n_features: n_features.ok_or_else(|| missing("n_features"))?,
        init_seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

pub fn write_model<W: Write>(model: &Model, mut w: W) -> Result<(), ModelError> {
    let header = header_text(&model.spec);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    let tensors = model.tensors();
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.len() as u64).to_le_bytes())?;
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model, ModelError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(ModelError::Format("not a model file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Format(format!("unsupported format version {version}")));
    }
    let header_len = read_u32(&mut r)? as usize;
    if header_len > 1 << 16 {
        return Err(ModelError::Format("header too large".into()));
    }
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header = String::from_utf8(header).map_err(|_| ModelError::Format("header is not UTF-8".into()))?;
    let spec = parse_header(&header)?;

    // Build a zero model of the declared shape and fill it in place so the
    // tensor lengths are checked against the architecture.
    let mut model = Model::zeros(&spec)?;
    let count = read_u64(&mut r)?;
    let mut tensors = model.tensors_mut();
    if count != tensors.len() as u64 {
        return Err(ModelError::Format(format!(
            "expected {} tensors, file has {count}",
            tensors.len()
        )));
    }
    for (k, t) in tensors.iter_mut().enumerate() {
        let len = read_u64(&mut r)?;
        if len != t.len() as u64 {
            return Err(ModelError::Format(format!(
                "tensor {k}: expected {} values, file has {len}",
                t.len()
            )));
        }
        let mut b = [0u8; 8];
        for v in t.iter_mut() {
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ModelError::Format("trailing bytes after last tensor".into()));
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), ModelError> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    read_model(BufReader::new(File::open(path)?))
}
