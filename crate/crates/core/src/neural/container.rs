//! The `CAVW` weight container.
//!
//! ```text
//! b"CAVW" | u32 LE version | u64 LE manifest length | JSON manifest
//!         | f32 LE tensors in manifest order | u32 LE CRC32 of the tensors
//! ```

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};

use super::bundle::{Activation, Layer, LayerKind, LayerNorm, ModelBundle, Role, FEATURE_SPEC};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CAVW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub role: Role,
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
    pub layer_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON header of a container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub latent_dim: usize,
    pub class_count: usize,
    pub freq_bins: usize,
    pub feature: String,
    pub layer_norm_eps: f64,
    pub layers: Vec<LayerSpec>,
    pub tensors: Vec<TensorSpec>,
}

fn layer_tensors(spec: &LayerSpec) -> Vec<TensorSpec> {
    let t = |suffix: &str, shape: Vec<usize>| TensorSpec { name: format!("{}.{suffix}", spec.name), shape };
    let mut v = vec![t("weight", vec![spec.out_ch, spec.in_ch, spec.kernel]), t("bias", vec![spec.out_ch])];
    if spec.layer_norm {
        v.push(t("ln_gamma", vec![spec.out_ch]));
        v.push(t("ln_beta", vec![spec.out_ch]));
    }
    v
}

impl Manifest {
    pub fn describe(bundle: &ModelBundle) -> Self {
        let layers: Vec<LayerSpec> = bundle
            .layers()
            .iter()
            .map(|l| LayerSpec {
                name: l.name.clone(),
                role: l.role,
                kind: l.kind,
                in_ch: l.in_ch(),
                out_ch: l.out_ch(),
                kernel: l.kernel(),
                stride: l.stride,
                activation: l.activation,
                layer_norm: l.norm.is_some(),
            })
            .collect();
        let tensors = layers.iter().flat_map(layer_tensors).collect();
        Self {
            latent_dim: bundle.latent_dim(),
            class_count: bundle.class_count(),
            freq_bins: bundle.freq_bins(),
            feature: FEATURE_SPEC.into(),
            layer_norm_eps: bundle.layer_norm_eps(),
            layers,
            tensors,
        }
    }
}

/// Serializes a bundle. Parameters are stored as `f32`.
pub fn to_bytes(bundle: &ModelBundle) -> Result<Vec<u8>> {
    let manifest = serde_json::to_vec(&Manifest::describe(bundle))?;
    let mut tensors = Vec::new();
    let mut push = |vals: &mut dyn Iterator<Item = &f64>| {
        for v in vals {
            tensors.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    for l in bundle.layers() {
        push(&mut l.weight.iter());
        push(&mut l.bias.iter());
        if let Some(n) = &l.norm {
            push(&mut n.gamma.iter());
            push(&mut n.beta.iter());
        }
    }
    let mut out = Vec::with_capacity(16 + manifest.len() + tensors.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&tensors);
    out.extend_from_slice(&crc32fast::hash(&tensors).to_le_bytes());
    Ok(out)
}

pub fn save_model(path: impl AsRef<Path>, bundle: &ModelBundle) -> Result<()> {
    std::fs::write(path, to_bytes(bundle)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}

/// Parses and validates a container.
pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Container("bad magic (expected \"CAVW\")".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version} (expected {VERSION})")));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[16..];
    let mlen = usize::try_from(mlen)
        .ok()
        .filter(|&m| m <= body.len())
        .ok_or_else(|| Error::Container(format!("manifest length {mlen} exceeds file size")))?;
    let manifest: Manifest =
        serde_json::from_slice(&body[..mlen]).map_err(|e| Error::Container(format!("manifest: {e}")))?;
    let rest = &body[mlen..];

    let expected = manifest.layers.iter().flat_map(layer_tensors).collect::<Vec<_>>();
    for want in &expected {
        match manifest.tensors.iter().find(|t| t.name == want.name) {
            None => return Err(layer_err(&want.name, format!("tensor `{}` missing from manifest", want.name))),
            Some(t) if t.shape != want.shape => {
                return Err(layer_err(
                    &want.name,
                    format!("tensor `{}` has shape {:?}, layer header implies {:?}", t.name, t.shape, want.shape),
                ))
            }
            _ => {}
        }
    }
    if let Some(extra) = manifest.tensors.iter().find(|t| !expected.iter().any(|e| e.name == t.name)) {
        return Err(layer_err(&extra.name, format!("tensor `{}` does not belong to any layer", extra.name)));
    }

    let total: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    let data_len = total * 4;
    if rest.len() != data_len + 4 {
        return Err(Error::Checksum(format!(
            "tensor section is {} bytes, manifest implies {} plus a 4-byte checksum",
            rest.len(),
            data_len
        )));
    }
    let (data, crc) = rest.split_at(data_len);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());
    let actual = crc32fast::hash(data);
    if stored != actual {
        return Err(Error::Checksum(format!("stored {stored:#010x}, computed {actual:#010x}")));
    }

    let mut values: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut floats = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    for t in &manifest.tensors {
        let n = t.shape.iter().product();
        values.insert(&t.name, floats.by_ref().take(n).collect());
    }

    let mut take = |name: String| values.remove(name.as_str()).expect("checked above");
    let layers = manifest
        .layers
        .iter()
        .map(|s| {
            let weight = Array3::from_shape_vec((s.out_ch, s.in_ch, s.kernel), take(format!("{}.weight", s.name)))
                .expect("shape checked");
            let bias = Array1::from(take(format!("{}.bias", s.name)));
            let norm = s.layer_norm.then(|| LayerNorm {
                gamma: Array1::from(take(format!("{}.ln_gamma", s.name))),
                beta: Array1::from(take(format!("{}.ln_beta", s.name))),
            });
            Layer {
                name: s.name.clone(),
                role: s.role,
                kind: s.kind,
                stride: s.stride,
                activation: s.activation,
                weight,
                bias,
                norm,
            }
        })
        .collect();
    if manifest.feature != FEATURE_SPEC {
        return Err(Error::Container(format!(
            "feature `{}` is not supported (expected `{FEATURE_SPEC}`)",
            manifest.feature
        )));
    }
    ModelBundle::new(manifest.latent_dim, manifest.class_count, manifest.freq_bins, manifest.layer_norm_eps, layers)
}

fn layer_err(tensor: &str, msg: String) -> Error {
    let layer = tensor.rsplit_once('.').map_or(tensor, |(l, _)| l);
    Error::Layer { layer: layer.into(), msg }
}
