//! Two-file checkpoint: `<prefix>.manifest.json` describes the config and a
//! tensor table; `<prefix>.weights.bin` holds the tensors as little-endian
//! `f32`, back to back, at the listed element offsets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::{CheckpointError, Error, Result};

pub const FORMAT: &str = "spikedec-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements from the start of the weights file.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    pub total_elements: usize,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn strip_prefix(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for suf in [".manifest.json", ".weights.bin"] {
        if let Some(p) = s.strip_suffix(suf) {
            return PathBuf::from(p);
        }
    }
    path.to_path_buf()
}

/// `path` may be the bare prefix or either of the two files.
pub fn manifest_path(path: impl AsRef<Path>) -> PathBuf {
    with_suffix(&strip_prefix(path.as_ref()), ".manifest.json")
}

pub fn weights_path(path: impl AsRef<Path>) -> PathBuf {
    with_suffix(&strip_prefix(path.as_ref()), ".weights.bin")
}

impl Model {
    pub fn manifest(&self) -> Manifest {
        let mut offset = 0;
        let tensors = self
            .named()
            .into_iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name,
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        Manifest {
            format: FORMAT.into(),
            version: VERSION,
            config: self.config.clone(),
            tensors,
            total_elements: offset,
        }
    }

    /// Weights blob, every value rounded to `f32`.
    pub fn weights_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count() * 4);
        for (_, t) in self.named() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Rounds every parameter to the nearest `f32`, as a save/load would.
    pub fn quantize(&mut self) {
        for (_, t) in self.named_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let manifest = serde_json::to_string_pretty(&model.manifest())
        .map_err(|e| Error::Evaluation(format!("serialising manifest: {e}")))?;
    if let Some(dir) = manifest_path(path).parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(manifest_path(path), manifest + "\n")?;
    fs::write(weights_path(path), model.weights_blob())?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    CheckpointError::CorruptManifest(msg.into()).into()
}

/// Parses and validates a manifest, returning a zero model of the
/// described architecture.
fn check_manifest(text: &str) -> Result<(Manifest, Model)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| corrupt(format!("not valid JSON: {e}")))?;
    if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
        if v != VERSION as u64 {
            return Err(CheckpointError::VersionMismatch {
                found: v.try_into().unwrap_or(u32::MAX),
                expected: VERSION,
            }
            .into());
        }
    }
    let m: Manifest = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    if m.format != FORMAT {
        return Err(corrupt(format!("unknown format {:?}", m.format)));
    }
    m.config.validate().map_err(|e| corrupt(e.to_string()))?;
    let model = Model::zeros(m.config.clone())?;
    let expected = model.named();
    if m.tensors.len() != expected.len() {
        return Err(corrupt(format!(
            "{} tensors listed, config implies {}",
            m.tensors.len(),
            expected.len()
        )));
    }
    let mut end = 0usize;
    for (e, (name, t)) in m.tensors.iter().zip(&expected) {
        if &e.name != name {
            return Err(corrupt(format!("expected tensor {name}, found {}", e.name)));
        }
        if e.shape != t.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: e.name.clone(),
                found: e.shape.clone(),
                expected: t.shape().to_vec(),
            }
            .into());
        }
        if e.offset < end {
            return Err(CheckpointError::OffsetOverlap {
                name: e.name.clone(),
                offset: e.offset,
                prev_end: end,
            }
            .into());
        }
        if e.offset > end {
            return Err(CheckpointError::Coverage(format!(
                "gap of {} elements before {}",
                e.offset - end,
                e.name
            ))
            .into());
        }
        end = e.offset + t.len();
    }
    if end != m.total_elements {
        return Err(CheckpointError::Coverage(format!(
            "tensors cover {end} elements, manifest declares {}",
            m.total_elements
        ))
        .into());
    }
    Ok((m, model))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(manifest_path(path))?;
    let (manifest, mut model) = check_manifest(&text)?;
    let blob = fs::read(weights_path(path))?;
    if blob.len() != manifest.total_elements * 4 {
        return Err(CheckpointError::Coverage(format!(
            "weights file has {} bytes, manifest needs {}",
            blob.len(),
            manifest.total_elements * 4
        ))
        .into());
    }
    for (e, (_, t)) in manifest.tensors.iter().zip(model.named_mut()) {
        let bytes = &blob[e.offset * 4..(e.offset + t.len()) * 4];
        for (v, c) in t.data_mut().iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        }
    }
    Ok(model)
}
