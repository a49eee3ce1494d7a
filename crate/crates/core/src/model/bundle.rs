//! Single-file container for trained networks.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then the tensor blobs as little-endian `f32`. The header stores the
//! architecture, free-form metadata and, for every tensor, its name, shape and
//! byte offset into the blob section.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

use super::{discriminator_layout, encoder_layout, generator_layout, ModelConfig};

pub const BUNDLE_MAGIC: &[u8; 8] = b"TSYNBNDL";
pub const BUNDLE_VERSION: u32 = 1;

const GROUP_G: &str = "g";
const GROUP_D: &str = "d";
const GROUP_I: &str = "i";
const GROUP_EMA_G: &str = "ema_g";
const GROUP_EMA_I: &str = "ema_i";
const EXTRA_PREFIX: &str = "x:";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub generator: ParamStore,
    pub discriminator: ParamStore,
    pub encoder: ParamStore,
    pub ema_generator: ParamStore,
    pub ema_encoder: ParamStore,
    /// Additional parameter-shaped state, e.g. optimizer moments.
    pub extra: BTreeMap<String, ParamStore>,
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

impl ModelBundle {
    /// Freshly initialized networks; EMA shadows start as copies.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator = generator_layout(&config).init(&mut rng);
        let discriminator = discriminator_layout(&config).init(&mut rng);
        let encoder = encoder_layout(&config).init(&mut rng);
        Ok(Self {
            ema_generator: generator.clone(),
            ema_encoder: encoder.clone(),
            generator,
            discriminator,
            encoder,
            config,
            extra: BTreeMap::new(),
            meta: serde_json::Value::Null,
        })
    }

    fn groups(&self) -> Vec<(String, &ParamStore)> {
        let mut g = vec![
            (GROUP_G.to_string(), &self.generator),
            (GROUP_D.to_string(), &self.discriminator),
            (GROUP_I.to_string(), &self.encoder),
            (GROUP_EMA_G.to_string(), &self.ema_generator),
            (GROUP_EMA_I.to_string(), &self.ema_encoder),
        ];
        g.extend(self.extra.iter().map(|(k, v)| (format!("{EXTRA_PREFIX}{k}"), v)));
        g
    }

    /// Checks every network against the architecture in `config`.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let g = generator_layout(&self.config);
        let d = discriminator_layout(&self.config);
        let i = encoder_layout(&self.config);
        g.check(&self.generator, "generator")?;
        g.check(&self.ema_generator, "EMA generator")?;
        d.check(&self.discriminator, "discriminator")?;
        i.check(&self.encoder, "encoder")?;
        i.check(&self.ema_encoder, "EMA encoder")
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut offset = 0u64;
        for (group, store) in self.groups() {
            for (name, t) in store.iter() {
                tensors.push(TensorEntry { group: group.clone(), name: name.to_string(), shape: t.shape().to_vec(), offset });
                offset += 4 * t.numel() as u64;
            }
        }
        let header = Header { format_version: BUNDLE_VERSION, model: self.config.clone(), meta: self.meta.clone(), tensors };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + offset as usize);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, store) in self.groups() {
            for (_, t) in store.iter() {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    /// Parses a bundle. With `expected`, the embedded architecture must match
    /// it exactly.
    pub fn from_bytes(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != BUNDLE_MAGIC {
            return Err(Error::Format("not a model bundle (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(Error::Format(format!("unsupported bundle version {version} (expected {BUNDLE_VERSION})")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let blob_start = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("truncated bundle header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[20..blob_start])?;
        if header.format_version != version {
            return Err(Error::Format("header version disagrees with preamble".into()));
        }
        if let Some(cfg) = expected {
            if *cfg != header.model {
                return Err(Error::Config(format!(
                    "bundle architecture does not match the requested configuration (bundle heatmap {}x{}, requested {}x{})",
                    header.model.heatmap_height, header.model.heatmap_width, cfg.heatmap_height, cfg.heatmap_width
                )));
            }
        }
        let blobs = &bytes[blob_start..];
        let mut groups: BTreeMap<String, ParamStore> = BTreeMap::new();
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start.checked_add(4 * n).filter(|&end| end <= blobs.len());
            let Some(end) = end else {
                return Err(Error::Format(format!("tensor {}/{} lies outside the blob section", e.group, e.name)));
            };
            let data = blobs[start..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            groups.entry(e.group).or_default().insert(e.name, Tensor::from_vec(&e.shape, data)?);
        }
        let mut take = |g: &str| groups.remove(g).ok_or_else(|| Error::Format(format!("bundle lacks parameter group `{g}`")));
        let generator = take(GROUP_G)?;
        let discriminator = take(GROUP_D)?;
        let encoder = take(GROUP_I)?;
        let ema_generator = take(GROUP_EMA_G)?;
        let ema_encoder = take(GROUP_EMA_I)?;
        let mut extra = BTreeMap::new();
        for (k, v) in groups {
            let name = k
                .strip_prefix(EXTRA_PREFIX)
                .ok_or_else(|| Error::Format(format!("unknown parameter group `{k}`")))?;
            extra.insert(name.to_string(), v);
        }
        let bundle = Self {
            config: header.model,
            generator,
            discriminator,
            encoder,
            ema_generator,
            ema_encoder,
            extra,
            meta: header.meta,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let bytes = bundle.to_bytes()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path, expected: Option<&ModelConfig>) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_bytes(&bytes, expected)
}
