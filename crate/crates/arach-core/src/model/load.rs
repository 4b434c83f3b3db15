//! Checkpoint loader.
//!
//! Reads the single-file tensor-archive layout: an 8-byte little-endian
//! header length, a JSON header mapping tensor names to dtype/shape/offsets,
//! then raw little-endian payloads. Tensor names follow the published GPT-2
//! release (`wte.weight`, `h.3.attn.c_attn.weight`, …).
//!
//! The released attention projections use the conv-1d orientation
//! `[in, out]`, which is exactly the row-major `x @ W + b` layout the forward
//! pass uses — so tensors are validated and kept as-is, never transposed.
//! The checkpoint also ships precomputed causal-mask buffers
//! (`h.N.attn.bias`); those are not weights and are ignored.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kernels::Matrix2D;

use super::{LayerWeights, ModelConfig, ModelWeights};

#[derive(Deserialize)]
struct TensorEntry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

struct Archive<'a> {
    entries: HashMap<String, TensorEntry>,
    payload: &'a [u8],
}

impl<'a> Archive<'a> {
    fn parse(bytes: &'a [u8], path: &Path) -> Result<Archive<'a>> {
        let loc = |msg: &str| Error::ModelLoad(format!("{}: {}", path.display(), msg));
        if bytes.len() < 8 {
            return Err(loc("truncated: no header length"));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8 + header_len)
            .ok_or_else(|| loc("truncated: header extends past end of file"))?;
        let mut raw: HashMap<String, serde_json::Value> =
            serde_json::from_slice(body).map_err(|e| loc(&format!("bad header json: {}", e)))?;
        raw.remove("__metadata__");
        let mut entries = HashMap::with_capacity(raw.len());
        for (name, value) in raw {
            let entry: TensorEntry = serde_json::from_value(value).map_err(|e| Error::Tensor {
                name: name.clone(),
                detail: format!("bad header entry: {}", e),
            })?;
            entries.insert(name, entry);
        }
        Ok(Archive {
            entries,
            payload: &bytes[8 + header_len..],
        })
    }

    /// Extracts a named f32 tensor, validating dtype, shape, bounds, and
    /// finiteness.
    fn tensor(&self, name: &str, expected_shape: &[usize]) -> Result<Vec<f32>> {
        let entry = self.entries.get(name).ok_or_else(|| Error::Tensor {
            name: name.into(),
            detail: "missing from checkpoint".into(),
        })?;
        let fail = |detail: String| Error::Tensor {
            name: name.into(),
            detail,
        };
        if entry.dtype != "F32" {
            return Err(fail(format!("dtype {} (only F32 supported)", entry.dtype)));
        }
        if entry.shape != expected_shape {
            return Err(fail(format!("shape {:?}, expected {:?}", entry.shape, expected_shape)));
        }
        let count: usize = entry.shape.iter().product();
        let [start, end] = entry.data_offsets;
        if end < start || end - start != count * 4 {
            return Err(fail(format!(
                "payload span {}..{} does not hold {} f32 values",
                start, end, count
            )));
        }
        let bytes = self
            .payload
            .get(start..end)
            .ok_or_else(|| fail("payload span out of bounds (truncated file?)".into()))?;
        let mut out = Vec::with_capacity(count);
        for chunk in bytes.chunks_exact(4) {
            out.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(fail("contains non-finite values".into()));
        }
        Ok(out)
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Matrix2D> {
        Ok(Matrix2D::from_vec(rows, cols, self.tensor(name, &[rows, cols])?).expect("validated shape"))
    }

    fn vector(&self, name: &str, len: usize) -> Result<Vec<f32>> {
        self.tensor(name, &[len])
    }
}

/// Loads and shape-validates a GPT-2 checkpoint against `config`.
pub fn load_model(path: &Path, config: &ModelConfig) -> Result<ModelWeights> {
    config.validate()?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let archive = Archive::parse(&bytes, path)?;

    let d = config.d_model;
    let wte = archive.matrix("wte.weight", config.vocab_size, d)?;
    let wpe = archive.matrix("wpe.weight", config.max_positions, d)?;

    let mut layers = Vec::with_capacity(config.n_layer);
    for i in 0..config.n_layer {
        let name = |suffix: &str| format!("h.{}.{}", i, suffix);
        layers.push(LayerWeights {
            ln1_gamma: archive.vector(&name("ln_1.weight"), d)?,
            ln1_beta: archive.vector(&name("ln_1.bias"), d)?,
            qkv_w: archive.matrix(&name("attn.c_attn.weight"), d, 3 * d)?,
            qkv_b: archive.vector(&name("attn.c_attn.bias"), 3 * d)?,
            proj_w: archive.matrix(&name("attn.c_proj.weight"), d, d)?,
            proj_b: archive.vector(&name("attn.c_proj.bias"), d)?,
            ln2_gamma: archive.vector(&name("ln_2.weight"), d)?,
            ln2_beta: archive.vector(&name("ln_2.bias"), d)?,
            fc_w: archive.matrix(&name("mlp.c_fc.weight"), d, 4 * d)?,
            fc_b: archive.vector(&name("mlp.c_fc.bias"), 4 * d)?,
            fc_proj_w: archive.matrix(&name("mlp.c_proj.weight"), 4 * d, d)?,
            fc_proj_b: archive.vector(&name("mlp.c_proj.bias"), d)?,
        });
    }

    Ok(ModelWeights {
        config: config.clone(),
        wte,
        wpe,
        lnf_gamma: archive.vector("ln_f.weight", d)?,
        lnf_beta: archive.vector("ln_f.bias", d)?,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Writes a well-formed single-layer archive for the given config, with
    /// every tensor filled by `fill`, then applies `mutate` to the
    /// name→(shape, values) map before serialization.
    fn write_archive(
        dir: &tempfile::TempDir,
        config: &ModelConfig,
        mutate: impl FnOnce(&mut Vec<(String, Vec<usize>, Vec<f32>)>),
    ) -> std::path::PathBuf {
        let d = config.d_model;
        let mut tensors: Vec<(String, Vec<usize>, Vec<f32>)> = vec![
            ("wte.weight".into(), vec![config.vocab_size, d], vec![]),
            ("wpe.weight".into(), vec![config.max_positions, d], vec![]),
            ("ln_f.weight".into(), vec![d], vec![]),
            ("ln_f.bias".into(), vec![d], vec![]),
        ];
        for i in 0..config.n_layer {
            for (suffix, shape) in [
                ("ln_1.weight", vec![d]),
                ("ln_1.bias", vec![d]),
                ("attn.c_attn.weight", vec![d, 3 * d]),
                ("attn.c_attn.bias", vec![3 * d]),
                ("attn.c_proj.weight", vec![d, d]),
                ("attn.c_proj.bias", vec![d]),
                ("ln_2.weight", vec![d]),
                ("ln_2.bias", vec![d]),
                ("mlp.c_fc.weight", vec![d, 4 * d]),
                ("mlp.c_fc.bias", vec![4 * d]),
                ("mlp.c_proj.weight", vec![4 * d, d]),
                ("mlp.c_proj.bias", vec![d]),
            ] {
                tensors.push((format!("h.{}.{}", i, suffix), shape, vec![]));
            }
        }
        for (i, (_, shape, values)) in tensors.iter_mut().enumerate() {
            let count: usize = shape.iter().product();
            *values = (0..count).map(|j| ((i + j) % 7) as f32 * 0.25 - 0.5).collect();
        }
        mutate(&mut tensors);

        let mut header = serde_json::Map::new();
        header.insert("__metadata__".into(), serde_json::json!({"format": "pt"}));
        let mut offset = 0usize;
        for (name, shape, values) in &tensors {
            let len = values.len() * 4;
            header.insert(
                name.clone(),
                serde_json::json!({
                    "dtype": "F32",
                    "shape": shape,
                    "data_offsets": [offset, offset + len],
                }),
            );
            offset += len;
        }
        let header_bytes = serde_json::to_vec(&serde_json::Value::Object(header)).unwrap();
        let path = dir.path().join("model.safetensors");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(&(header_bytes.len() as u64).to_le_bytes()).unwrap();
        f.write_all(&header_bytes).unwrap();
        for (_, _, values) in &tensors {
            for v in values {
                f.write_all(&v.to_le_bytes()).unwrap();
            }
        }
        path
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_layer: 1,
            n_head: 2,
            d_model: 8,
            d_head: 4,
            vocab_size: 11,
            max_positions: 16,
            layer_norm_eps: 1e-5,
        }
    }

    #[test]
    fn loads_well_formed_archive() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = write_archive(&dir, &config, |_| {});
        let weights = load_model(&path, &config).unwrap();
        assert_eq!(weights.layers.len(), 1);
        assert_eq!(weights.wte.rows(), 11);
        assert_eq!(weights.wte.cols(), 8);
        assert_eq!(weights.layers[0].qkv_w.cols(), 24);
    }

    #[test]
    fn missing_tensor_is_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = write_archive(&dir, &config, |tensors| {
            tensors.retain(|(name, _, _)| name != "h.0.mlp.c_fc.bias");
        });
        let err = load_model(&path, &config).unwrap_err();
        assert!(err.to_string().contains("h.0.mlp.c_fc.bias"), "{}", err);
    }

    #[test]
    fn shape_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = write_archive(&dir, &config, |tensors| {
            for (name, shape, values) in tensors.iter_mut() {
                if name == "wpe.weight" {
                    shape[0] = 4; // config says 16
                    values.truncate(4 * 8);
                }
            }
        });
        let err = load_model(&path, &config).unwrap_err();
        assert!(matches!(err, Error::Tensor { ref name, .. } if name == "wpe.weight"), "{}", err);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = write_archive(&dir, &config, |tensors| {
            for (name, _, values) in tensors.iter_mut() {
                if name == "ln_f.weight" {
                    values[3] = f32::NAN;
                }
            }
        });
        let err = load_model(&path, &config).unwrap_err();
        assert!(err.to_string().contains("ln_f.weight"), "{}", err);
        assert!(err.to_string().contains("non-finite"), "{}", err);
    }

    #[test]
    fn truncated_file_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = write_archive(&dir, &config, |_| {});
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_model(&path, &config).is_err());
    }

    #[test]
    fn layer_count_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = write_archive(&dir, &config, |_| {});
        let mut deeper = config.clone();
        deeper.n_layer = 2;
        let err = load_model(&path, &deeper).unwrap_err();
        assert!(err.to_string().contains("h.1."), "{}", err);
    }

    #[test]
    fn extra_tensors_such_as_mask_buffers_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let path = write_archive(&dir, &config, |tensors| {
            tensors.push(("h.0.attn.bias".into(), vec![1, 1, 4, 4], vec![1.0; 16]));
        });
        assert!(load_model(&path, &config).is_ok());
    }
}
