//! On-disk dataset layout and loading.
//!
//! ```text
//! <root>/manifest.json
//! <root>/rgb/<id>.f32       raw RGB, HWC, [0, 255]
//! <root>/thermal/<id>.f32   raw thermal readings, HW
//! <root>/mask/<id>.f32      person mask at RGB target size, HW, {0, 1}
//! ```
//!
//! `.f32` files are little-endian float32, row-major, no header; shapes live in
//! the manifest.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::preprocess::{preprocess_rgb, preprocess_thermal, resize_mask, ThermalParams};
use super::types::{PairedSample, PersonMask, RawRgb, RawThermalFrame, SampleMeta, UPSCALE};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Frame rate of the recorded thermal stream (replay pacing default).
pub const NATIVE_FPS: f64 = 8.7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub heatmap_height: usize,
    pub heatmap_width: usize,
    pub rgb_range: (f32, f32),
    pub thermal: ThermalParams,
    pub mask_threshold: f32,
    pub native_fps: f64,
}

impl DatasetConfig {
    pub fn rgb_height(&self) -> usize {
        UPSCALE * self.heatmap_height
    }

    pub fn rgb_width(&self) -> usize {
        UPSCALE * self.heatmap_width
    }

    pub fn validate(&self) -> Result<()> {
        self.thermal.validate()?;
        if (self.thermal.target_height, self.thermal.target_width) != (self.heatmap_height, self.heatmap_width) {
            return Err(Error::Config("thermal target size must equal heatmap size".into()));
        }
        if self.rgb_range.0.partial_cmp(&self.rgb_range.1) != Some(Ordering::Less) {
            return Err(Error::Config("rgb range must be increasing".into()));
        }
        if !(0.0..1.0).contains(&self.mask_threshold) {
            return Err(Error::Config("mask threshold must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRef {
    pub path: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub rgb: TensorRef,
    pub thermal: TensorRef,
    #[serde(default)]
    pub mask: Option<TensorRef>,
    pub meta: SampleMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: DatasetConfig,
    pub entries: Vec<ManifestEntry>,
}

pub fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!(
            "{}: expected {} float32 values, file holds {} bytes",
            path.display(),
            expected,
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Accepts either the dataset directory or the manifest file itself.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let file = manifest_path(path);
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: Self = serde_json::from_str(&text)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                manifest.format_version
            )));
        }
        manifest.config.validate()?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, root))
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let file = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&file, text).map_err(|e| Error::io(&file, e))
    }

    pub fn read_raw_thermal(&self, root: &Path, entry: &ManifestEntry) -> Result<RawThermalFrame> {
        let [h, w] = entry.thermal.shape[..] else {
            return Err(Error::Format(format!("thermal shape must be [H, W], got {:?}", entry.thermal.shape)));
        };
        RawThermalFrame::new(h, w, read_f32(&root.join(&entry.thermal.path), h * w)?)
    }

    pub fn read_raw_rgb(&self, root: &Path, entry: &ManifestEntry) -> Result<RawRgb> {
        let [h, w, 3] = entry.rgb.shape[..] else {
            return Err(Error::Format(format!("rgb shape must be [H, W, 3], got {:?}", entry.rgb.shape)));
        };
        RawRgb::new(h, w, read_f32(&root.join(&entry.rgb.path), h * w * 3)?)
    }

    pub fn read_mask(&self, root: &Path, entry: &ManifestEntry) -> Result<Option<PersonMask>> {
        let Some(mask) = &entry.mask else { return Ok(None) };
        let [h, w] = mask.shape[..] else {
            return Err(Error::Format(format!("mask shape must be [H, W], got {:?}", mask.shape)));
        };
        Ok(Some(PersonMask::new(h, w, read_f32(&root.join(&mask.path), h * w)?)?))
    }

    /// Loads and preprocesses entry `index`. Thermal noise is drawn from a
    /// stream keyed by `(seed, index)`, so results do not depend on load order.
    pub fn load_sample(&self, root: &Path, index: usize, seed: u64) -> Result<PairedSample> {
        let entry = &self.entries[index];
        let wrap = |e: Error| Error::Sample { sample_id: entry.sample_id.clone(), source: Box::new(e) };
        let cfg = &self.config;
        let raw_rgb = self.read_raw_rgb(root, entry).map_err(wrap)?;
        let rgb = preprocess_rgb(&raw_rgb, cfg.rgb_height(), cfg.rgb_width()).map_err(wrap)?;
        let raw_thermal = self.read_raw_thermal(root, entry).map_err(wrap)?;
        let mut rng = sample_rng(seed, index);
        let heatmap = preprocess_thermal(&raw_thermal, &cfg.thermal, &mut rng).map_err(wrap)?;
        let mask = self.read_mask(root, entry).map_err(wrap)?;
        let mask_hat = mask
            .as_ref()
            .map(|m| resize_mask(m, cfg.heatmap_height, cfg.heatmap_width, cfg.mask_threshold))
            .transpose()
            .map_err(wrap)?;
        PairedSample::new(entry.sample_id.clone(), rgb, heatmap, mask, mask_hat, entry.meta.clone()).map_err(wrap)
    }
}

pub(crate) fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Lazily yields preprocessed samples in manifest order.
pub struct DatasetReader<'a> {
    manifest: &'a DatasetManifest,
    root: &'a Path,
    seed: u64,
    next: usize,
}

impl Iterator for DatasetReader<'_> {
    type Item = Result<PairedSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.manifest.entries.len() {
            return None;
        }
        let i = self.next;
        self.next += 1;
        Some(self.manifest.load_sample(self.root, i, self.seed))
    }
}

impl DatasetManifest {
    pub fn reader<'a>(&'a self, root: &'a Path, seed: u64) -> DatasetReader<'a> {
        DatasetReader { manifest: self, root, seed, next: 0 }
    }
}

/// A fully loaded, preprocessed dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub samples: Vec<PairedSample>,
}

impl Dataset {
    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let (manifest, root) = DatasetManifest::load(path)?;
        let samples = manifest.reader(&root, seed).collect::<Result<Vec<_>>>()?;
        Ok(Self { config: manifest.config, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shuffled index batches covering every sample once; the final short
    /// batch is kept.
    pub fn batches(&self, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
        shuffled_batches(self.samples.len(), batch_size, epoch_seed)
    }

    /// Deterministic `(train, test)` split holding out `test_fraction` of samples.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.samples.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((self.samples.len() as f64) * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test.min(idx.len()));
        let pick = |ids: &[usize]| {
            let mut ids = ids.to_vec();
            ids.sort_unstable();
            Dataset { config: self.config.clone(), samples: ids.iter().map(|&i| self.samples[i].clone()).collect() }
        };
        (pick(train), pick(test))
    }
}

pub fn shuffled_batches(n: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
