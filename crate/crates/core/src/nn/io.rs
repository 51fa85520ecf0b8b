//! Weights on disk: a JSON manifest listing every layer's tensors in order, and
//! a little-endian float32 blob holding the values back to back.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{LayerWeights, Weights};
use crate::tensor::Tensor;

const FORMAT: &str = "synthseg-weights";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("manifest entry {position} is layer {name:?} with index {index}; layer order is fixed")]
    LayerOrder { position: usize, index: usize, name: String },
    #[error("blob ends inside layer {layer:?} (needs {needed} bytes, has {available})")]
    TruncatedBlob { layer: String, needed: u64, available: u64 },
    #[error("blob has {0} bytes beyond the last tensor")]
    TrailingBytes(u64),
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dtype: String,
    byte_order: String,
    blob: String,
    blob_bytes: u64,
    layers: Vec<ManifestLayer>,
}

#[derive(Serialize, Deserialize)]
struct ManifestLayer {
    index: usize,
    name: String,
    params: Vec<ManifestTensor>,
    buffers: Vec<ManifestTensor>,
}

#[derive(Serialize, Deserialize)]
struct ManifestTensor {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WeightsError + '_ {
    move |source| WeightsError::Io { path: path.to_path_buf(), source }
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<path>` (manifest) and `<path>` with a `.bin` extension (blob).
pub fn save_weights(weights: &Weights<f32>, path: impl AsRef<Path>) -> Result<(), WeightsError> {
    let path = path.as_ref();
    let blob_file = blob_path(path);
    let mut blob = Vec::new();
    let mut layers = Vec::with_capacity(weights.layers.len());
    let entry = |blob: &mut Vec<u8>, name: &str, t: &Tensor<f32>| {
        let offset = blob.len() as u64;
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        ManifestTensor { name: name.to_string(), shape: t.shape().to_vec(), offset }
    };
    for (index, l) in weights.layers.iter().enumerate() {
        let params = l.params.iter().zip(l.param_names()).map(|(t, n)| entry(&mut blob, n, t)).collect();
        let buffers = l.buffers.iter().zip(l.buffer_names()).map(|(t, n)| entry(&mut blob, n, t)).collect();
        layers.push(ManifestLayer { index, name: l.name.clone(), params, buffers });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: 1,
        dtype: "float32".into(),
        byte_order: "little".into(),
        blob: blob_file.file_name().unwrap().to_string_lossy().into_owned(),
        blob_bytes: blob.len() as u64,
        layers,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(io_err(path))?;
    fs::write(&blob_file, &blob).map_err(io_err(&blob_file))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Weights<f32>, WeightsError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| WeightsError::Manifest(e.to_string()))?;
    if manifest.format != FORMAT || manifest.dtype != "float32" || manifest.byte_order != "little" {
        return Err(WeightsError::Manifest(format!(
            "unsupported format {}/{}/{}",
            manifest.format, manifest.dtype, manifest.byte_order
        )));
    }
    let blob_file = path.with_file_name(&manifest.blob);
    let blob = fs::read(&blob_file).map_err(io_err(&blob_file))?;
    let mut cursor = 0u64;
    let mut read = |layer: &str, t: &ManifestTensor| -> Result<Tensor<f32>, WeightsError> {
        let n: usize = t.shape.iter().product();
        let needed = t.offset + 4 * n as u64;
        if t.offset != cursor {
            return Err(WeightsError::Manifest(format!("layer {layer:?}: tensor {} is not contiguous", t.name)));
        }
        if needed > blob.len() as u64 {
            return Err(WeightsError::TruncatedBlob { layer: layer.to_string(), needed, available: blob.len() as u64 });
        }
        let bytes = &blob[t.offset as usize..needed as usize];
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        cursor = needed;
        Ok(Tensor::from_vec(&t.shape, data))
    };
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (position, l) in manifest.layers.iter().enumerate() {
        if l.index != position {
            return Err(WeightsError::LayerOrder { position, index: l.index, name: l.name.clone() });
        }
        let params = l.params.iter().map(|t| read(&l.name, t)).collect::<Result<_, _>>()?;
        let buffers = l.buffers.iter().map(|t| read(&l.name, t)).collect::<Result<_, _>>()?;
        layers.push(LayerWeights { name: l.name.clone(), params, buffers });
    }
    if cursor < blob.len() as u64 {
        return Err(WeightsError::TrailingBytes(blob.len() as u64 - cursor));
    }
    Ok(Weights { layers })
}

/// SHA-256 over layer names and the exact bit patterns of every tensor.
pub fn weights_checksum(weights: &Weights<f32>) -> String {
    let mut h = Sha256::new();
    for l in &weights.layers {
        h.update(l.name.as_bytes());
        for t in l.params.iter().chain(&l.buffers) {
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
