//! Procedural paired thermal/RGB scenes for desk-scale experiments.
//!
//! A scene holds one upper-body "person" (head, shoulders, optional raised
//! arm) standing at a random position. The thermal frame sees body heat plus
//! an optional external heat source that is invisible in RGB; the RGB frame
//! renders the same silhouette in clothing/skin colours over an
//! environment-dependent background. Identity, clothing and environment are
//! the non-thermal attributes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{write_f32, DatasetConfig, DatasetManifest, ManifestEntry, TensorRef, MANIFEST_VERSION, NATIVE_FPS};
use super::preprocess::{ThermalParams, MASK_THRESHOLD, RGB_RANGE};
use super::types::{PersonMask, RawRgb, RawThermalFrame, SampleMeta, UPSCALE};
use crate::error::{Error, Result};

pub const BACKGROUND_COLORS: [[f32; 3]; 3] = [[205.0, 192.0, 165.0], [70.0, 105.0, 160.0], [60.0, 120.0, 70.0]];
pub const CLOTHING_COLORS: [[f32; 3]; 3] = [[200.0, 40.0, 45.0], [35.0, 40.0, 110.0], [225.0, 195.0, 45.0]];
/// (skin, hair) per person.
pub const PERSON_COLORS: [([f32; 3], [f32; 3]); 2] = [([230.0, 185.0, 150.0], [60.0, 40.0, 25.0]), ([150.0, 100.0, 70.0], [15.0, 15.0, 15.0])];

pub const BACKGROUND_TEMP: f32 = 21.0;
pub const HEAD_TEMP: f32 = 34.5;
pub const ARM_TEMP: f32 = 33.0;
pub const TORSO_TEMP: f32 = 30.5;
pub const HEAT_SOURCE_TEMP: f32 = 38.0;
pub const THERMAL_RANGE: (f32, f32) = (15.0, 40.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub heatmap_height: usize,
    pub heatmap_width: usize,
    /// Raw RGB resolution as a multiple of the RGB target size.
    pub rgb_raw_factor: usize,
    /// Raw thermal resolution as a multiple of the heatmap size.
    pub thermal_raw_factor: usize,
    pub heat_source_prob: f64,
    /// Person size multiplier range.
    pub scale_range: (f32, f32),
    pub blur_kernel: usize,
    /// Noise std as a fraction of the thermal range.
    pub noise_fraction: f32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            heatmap_height: 12,
            heatmap_width: 16,
            rgb_raw_factor: 2,
            thermal_raw_factor: 10,
            heat_source_prob: 0.25,
            scale_range: (0.8, 1.2),
            blur_kernel: 3,
            noise_fraction: 0.05,
        }
    }
}

impl SyntheticConfig {
    pub fn dataset_config(&self) -> DatasetConfig {
        let span = THERMAL_RANGE.1 - THERMAL_RANGE.0;
        DatasetConfig {
            heatmap_height: self.heatmap_height,
            heatmap_width: self.heatmap_width,
            rgb_range: RGB_RANGE,
            thermal: ThermalParams {
                blur_kernel: self.blur_kernel,
                noise_std: self.noise_fraction * span,
                target_height: self.heatmap_height,
                target_width: self.heatmap_width,
                range: THERMAL_RANGE,
            },
            mask_threshold: MASK_THRESHOLD,
            native_fps: NATIVE_FPS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArmPose {
    Down,
    LeftUp,
    RightUp,
}

/// Scene geometry in normalised coordinates: `v ∈ [0, 1]` top to bottom and
/// `u ∈ [0, aspect]` left to right, both in units of the frame height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub center_u: f32,
    pub head_v: f32,
    pub scale: f32,
    pub arm: ArmPose,
    pub person: u32,
    pub clothing: u32,
    pub environment: u32,
    /// `(u, v, radius)` of an external heat source, if any.
    pub heat_source: Option<(f32, f32, f32)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Background,
    Hair,
    Face,
    Torso,
    Arm,
}

impl Region {
    pub fn is_person(self) -> bool {
        self != Region::Background
    }
}

impl Scene {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, aspect: f32, cfg: &SyntheticConfig) -> Self {
        let scale = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
        let margin = 0.22 * scale;
        let center_u = rng.random_range(margin..=(aspect - margin).max(margin));
        let head_v = rng.random_range(0.25..0.45);
        let arm = match rng.random_range(0..3) {
            0 => ArmPose::Down,
            1 => ArmPose::LeftUp,
            _ => ArmPose::RightUp,
        };
        let person = rng.random_range(0..PERSON_COLORS.len() as u32);
        let clothing = rng.random_range(0..CLOTHING_COLORS.len() as u32);
        let environment = rng.random_range(0..BACKGROUND_COLORS.len() as u32);
        let heat_source = rng.random_bool(cfg.heat_source_prob).then(|| {
            (rng.random_range(0.05..aspect - 0.05), rng.random_range(0.05..0.3), rng.random_range(0.03..0.06))
        });
        Self { center_u, head_v, scale, arm, person, clothing, environment, heat_source }
    }

    fn head_radius(&self) -> f32 {
        0.1 * self.scale
    }

    pub fn region(&self, u: f32, v: f32) -> Region {
        let r = self.head_radius();
        let du = u - self.center_u;
        let dv = v - self.head_v;
        if du * du + dv * dv <= r * r {
            return if dv < -0.35 * r { Region::Hair } else { Region::Face };
        }
        let top = self.head_v + 0.9 * r;
        let half = 0.2 * self.scale;
        let round = 0.12 * self.scale;
        if v >= top && du.abs() <= half {
            let over = (top + round - v).max(0.0) / round;
            if (du / half).powi(2) + over * over <= 1.0 {
                return Region::Torso;
            }
        }
        let arm_w = 0.055 * self.scale;
        let arm_top = self.head_v - 0.15 * self.scale;
        let side = match self.arm {
            ArmPose::Down => return Region::Background,
            ArmPose::LeftUp => -1.0,
            ArmPose::RightUp => 1.0,
        };
        let arm_center = self.center_u + side * (half - 0.5 * arm_w);
        if (u - arm_center).abs() <= arm_w && v >= arm_top && v <= top + 0.1 * self.scale {
            return Region::Arm;
        }
        Region::Background
    }

    pub fn temperature(&self, u: f32, v: f32) -> f32 {
        let base = match self.region(u, v) {
            Region::Background => BACKGROUND_TEMP + 1.5 * (1.0 - v),
            Region::Hair => HEAD_TEMP - 2.0,
            Region::Face => HEAD_TEMP,
            Region::Torso => TORSO_TEMP,
            Region::Arm => ARM_TEMP,
        };
        match self.heat_source {
            Some((hu, hv, hr)) if !self.region(u, v).is_person() && (u - hu).powi(2) + (v - hv).powi(2) <= hr * hr => {
                HEAT_SOURCE_TEMP
            }
            _ => base,
        }
    }

    pub fn color(&self, u: f32, v: f32) -> [f32; 3] {
        let (skin, hair) = PERSON_COLORS[self.person as usize];
        let shade = |c: [f32; 3], f: f32| c.map(|x| (x * f).clamp(0.0, 255.0));
        match self.region(u, v) {
            Region::Background => shade(BACKGROUND_COLORS[self.environment as usize], 1.05 - 0.15 * v),
            Region::Hair => hair,
            Region::Face => skin,
            Region::Torso => shade(CLOTHING_COLORS[self.clothing as usize], 1.0 - 0.1 * (v - self.head_v)),
            Region::Arm => shade(CLOTHING_COLORS[self.clothing as usize], 0.9),
        }
    }

    pub fn meta(&self) -> SampleMeta {
        let mut extra = serde_json::Map::new();
        extra.insert("center_u".into(), self.center_u.into());
        extra.insert("head_v".into(), self.head_v.into());
        extra.insert("heat_source".into(), self.heat_source.is_some().into());
        SampleMeta { person_id: self.person, clothing: self.clothing, environment: self.environment, extra }
    }

    pub fn render_thermal(&self, height: usize, width: usize) -> RawThermalFrame {
        let mut vals = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = pixel_center(x, y, height);
                vals.push(self.temperature(u, v));
            }
        }
        RawThermalFrame::new(height, width, vals).expect("valid thermal frame")
    }

    pub fn render_rgb(&self, height: usize, width: usize) -> RawRgb {
        let mut vals = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = pixel_center(x, y, height);
                vals.extend_from_slice(&self.color(u, v));
            }
        }
        RawRgb::new(height, width, vals).expect("valid rgb frame")
    }

    pub fn render_mask(&self, height: usize, width: usize) -> PersonMask {
        let mut vals = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = pixel_center(x, y, height);
                vals.push(if self.region(u, v).is_person() { 1.0 } else { 0.0 });
            }
        }
        PersonMask::new(height, width, vals).expect("valid mask")
    }
}

fn pixel_center(x: usize, y: usize, height: usize) -> (f32, f32) {
    ((x as f32 + 0.5) / height as f32, (y as f32 + 0.5) / height as f32)
}

/// Writes `n` procedurally generated pairs under `root` and returns the manifest.
pub fn generate_synthetic_dataset(root: &Path, n: usize, seed: u64, cfg: &SyntheticConfig) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::Config("synthetic dataset needs at least one sample".into()));
    }
    if cfg.heatmap_height == 0 || cfg.heatmap_width == 0 || cfg.rgb_raw_factor == 0 || cfg.thermal_raw_factor == 0 {
        return Err(Error::Config("synthetic resolutions and factors must be positive".into()));
    }
    let config = cfg.dataset_config();
    config.validate()?;
    let (hh, hw) = (cfg.heatmap_height, cfg.heatmap_width);
    let (xh, xw) = (UPSCALE * hh, UPSCALE * hw);
    let (rh, rw) = (xh * cfg.rgb_raw_factor, xw * cfg.rgb_raw_factor);
    let (th, tw) = (hh * cfg.thermal_raw_factor, hw * cfg.thermal_raw_factor);
    let aspect = hw as f32 / hh as f32;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let scene = Scene::random(&mut rng, aspect, cfg);
        let id = format!("{i:06}");
        let rgb_path = format!("rgb/{id}.f32");
        let thermal_path = format!("thermal/{id}.f32");
        let mask_path = format!("mask/{id}.f32");
        write_f32(&root.join(&rgb_path), scene.render_rgb(rh, rw).values())?;
        write_f32(&root.join(&thermal_path), scene.render_thermal(th, tw).values())?;
        write_f32(&root.join(&mask_path), scene.render_mask(xh, xw).values())?;
        entries.push(ManifestEntry {
            sample_id: id,
            rgb: TensorRef { path: rgb_path, shape: vec![rh, rw, 3] },
            thermal: TensorRef { path: thermal_path, shape: vec![th, tw] },
            mask: Some(TensorRef { path: mask_path, shape: vec![xh, xw] }),
            meta: scene.meta(),
        });
    }
    let manifest = DatasetManifest { format_version: MANIFEST_VERSION, config, entries };
    manifest.save(root)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_are_consistent_across_modalities() {
        let cfg = SyntheticConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let s = Scene::random(&mut rng, 4.0 / 3.0, &cfg);
            let (u, v) = (s.center_u, s.head_v);
            assert!(s.region(u, v).is_person());
            assert_eq!(s.temperature(u, v), HEAD_TEMP);
            assert!(s.region(u, 0.99).is_person(), "torso reaches the bottom edge");
        }
    }

    #[test]
    fn zero_samples_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_synthetic_dataset(dir.path(), 0, 1, &SyntheticConfig::default()).is_err());
    }
}
