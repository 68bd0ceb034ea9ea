//! Parameter checkpoints.
//!
//! `<path>`: 8-byte little-endian dimension, then `dimension` little-endian
//! f64 values. `<path>.meta`: `key = value` lines describing the model.

use std::fs;
use std::path::{Path, PathBuf};

use super::{ModelKind, ModelSpec, ParameterVector};
use crate::error::{Error, Result};

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub fn save_checkpoint(path: &Path, params: &ParameterVector, spec: &ModelSpec) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 8 * params.dimension());
    bytes.extend_from_slice(&(params.dimension() as u64).to_le_bytes());
    for v in params.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = format!(
        "model.kind = {}\nmodel.hash_dimension = {}\nmodel.hidden_units = {}\nmodel.dropout = {}\nmodel.init_seed = {}\n",
        spec.kind, spec.hash_dimension, spec.hidden_units, spec.dropout, spec.init_seed
    );
    let mp = meta_path(path);
    fs::write(&mp, meta).map_err(|e| Error::io(mp, e))
}

/// Loads parameters and, when the sidecar exists, the model spec.
pub fn load_checkpoint(path: &Path) -> Result<(ParameterVector, Option<ModelSpec>)> {
    let bad = |reason: String| Error::Format {
        what: "checkpoint",
        reason,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(bad("missing dimension header".into()));
    }
    let dim = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != dim * 8 {
        return Err(bad(format!(
            "header says {dim} values, file holds {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mp = meta_path(path);
    let spec = match fs::read_to_string(&mp) {
        Ok(text) => Some(parse_meta(&text).map_err(bad)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(mp, e)),
    };
    Ok((ParameterVector::new(values), spec))
}

fn parse_meta(text: &str) -> std::result::Result<ModelSpec, String> {
    let mut spec = ModelSpec::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or(format!("bad line `{line}`"))?;
        let v = v.trim();
        let err = |e: &dyn std::fmt::Display| format!("{}: {e}", k.trim());
        match k.trim() {
            "model.kind" => spec.kind = v.parse::<ModelKind>()?,
            "model.hash_dimension" => spec.hash_dimension = v.parse().map_err(|e| err(&e))?,
            "model.hidden_units" => spec.hidden_units = v.parse().map_err(|e| err(&e))?,
            "model.dropout" => spec.dropout = v.parse().map_err(|e| err(&e))?,
            "model.init_seed" => spec.init_seed = v.parse().map_err(|e| err(&e))?,
            other => return Err(format!("unknown key `{other}`")),
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let spec = ModelSpec {
            hash_dimension: 2,
            init_seed: 5,
            ..Default::default()
        };
        let p = ParameterVector::new(vec![1.5, -0.25, 3.0]);
        save_checkpoint(&path, &p, &spec).unwrap();
        let raw = fs::read(&path).unwrap();
        assert_eq!(raw.len(), 8 + 24);
        assert_eq!(&raw[..8], &3u64.to_le_bytes());
        assert_eq!(&raw[8..16], &1.5f64.to_le_bytes());
        let (q, s) = load_checkpoint(&path).unwrap();
        assert_eq!(q, p);
        assert_eq!(s, Some(spec));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let mut raw = 4u64.to_le_bytes().to_vec();
        raw.extend_from_slice(&1.0f64.to_le_bytes());
        fs::write(&path, raw).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
