//! Plain-Rust core of the browser demo, kept free of JS types so it can be
//! tested natively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thermosynth::data::{
    pixel_average, preprocess_thermal, ArmPose, Heatmap, RawThermalFrame, RgbImage, Scene, SyntheticConfig,
};
use thermosynth::eval::{synthetic_privacy_frames, BlobDetector, Detection, Detector, PrivacyConfig, Resolution};
use thermosynth::losses::masked_hinge_l1;
use thermosynth::model::{generate, LatentCode, ModelBundle, ModelConfig};
use thermosynth::train::LatentCodeSet;
use thermosynth::{Error, Result, Tensor};

/// Heatmap size of the model the page starts with.
pub const DEFAULT_HEATMAP: (usize, usize) = (12, 16);

/// Generator plus an optional set of inverted codes.
pub struct Studio {
    bundle: ModelBundle,
    codes: Vec<(String, LatentCode)>,
}

impl Studio {
    /// Untrained small networks; a trained bundle can replace them.
    pub fn untrained(seed: u64) -> Result<Self> {
        let (h, w) = DEFAULT_HEATMAP;
        Ok(Self { bundle: ModelBundle::init(ModelConfig::small(h, w), seed)?, codes: Vec::new() })
    }

    pub fn load_bundle(&mut self, bytes: &[u8]) -> Result<()> {
        self.bundle = ModelBundle::from_bytes(bytes, None)?;
        Ok(())
    }

    pub fn load_latents(&mut self, json: &str) -> Result<usize> {
        let set = LatentCodeSet::from_json(json)?;
        self.codes = set.codes.into_iter().map(|e| (e.id, e.code)).collect();
        Ok(self.codes.len())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.bundle.config
    }

    pub fn code_ids(&self) -> Vec<String> {
        self.codes.iter().map(|(id, _)| id.clone()).collect()
    }

    /// Noise-free heatmap of one person standing at `center_u` (in frame
    /// heights from the left edge) with the head at `head_v`.
    pub fn scene_heatmap(&self, center_u: f32, head_v: f32, arm: ArmPose) -> Result<Heatmap> {
        let cfg = self.config();
        let synth = SyntheticConfig {
            heatmap_height: cfg.heatmap_height,
            heatmap_width: cfg.heatmap_width,
            ..SyntheticConfig::default()
        };
        let scene = Scene {
            center_u,
            head_v,
            scale: 1.0,
            arm,
            person: 0,
            clothing: 0,
            environment: 0,
            heat_source: None,
        };
        let mut params = synth.dataset_config().thermal;
        params.noise_std = 0.0;
        let raw = scene.render_thermal(synth.heatmap_height * synth.thermal_raw_factor, synth.heatmap_width * synth.thermal_raw_factor);
        preprocess_thermal(&raw, &params, &mut ChaCha8Rng::seed_from_u64(0))
    }

    /// Loaded code `index`, or a code drawn from `seed` when there is none.
    pub fn code(&self, index: Option<usize>, seed: u64) -> Result<LatentCode> {
        match index {
            Some(i) => self
                .codes
                .get(i)
                .map(|(_, c)| c.clone())
                .ok_or_else(|| Error::Config(format!("no latent code {i}; {} loaded", self.codes.len()))),
            None => Ok(LatentCode::sample(&mut ChaCha8Rng::seed_from_u64(seed))),
        }
    }

    pub fn render(&self, heatmap: &Heatmap, code: &LatentCode) -> Result<RgbImage> {
        generate(&self.bundle.config, &self.bundle.ema_generator, code, heatmap)
    }
}

/// Interleaved RGBA bytes, the layout of a canvas `ImageData`.
pub fn to_rgba(img: &RgbImage) -> Vec<u8> {
    img.to_rgb8().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Masked hinge-L1 between two `height × width` heatmaps.
pub fn heatmap_loss(h: &[f32], h_hat: &[f32], mask: &[f32], height: usize, width: usize, epsilon: f64) -> Result<f64> {
    let t = |v: &[f32]| Tensor::from_vec(&[1, 1, height, width], v.to_vec());
    masked_hinge_l1(&t(h)?, &t(h_hat)?, &t(mask)?, epsilon)
}

#[derive(Clone, Debug, Serialize)]
pub struct PrivacyView {
    pub native_width: usize,
    pub native_height: usize,
    pub width: usize,
    pub height: usize,
    /// Block-averaged frame in °C, row-major.
    pub frame: Vec<f32>,
    /// Person centroid in native pixels.
    pub person: (f32, f32),
    /// Most confident detection, in native pixels.
    pub detection: Option<Detection>,
    pub hit: bool,
}

/// One synthetic distant-person frame seen at `width × height`.
pub fn privacy_view(seed: u64, width: usize, height: usize) -> Result<PrivacyView> {
    let cfg = PrivacyConfig { frames: 1, seed, ..PrivacyConfig::default() };
    let Resolution { width: nw, height: nh } = cfg.native;
    let labelled = synthetic_privacy_frames(&cfg)?.remove(0);
    let frame = pixel_average(labelled.frame.values(), nh, nw, 1, height, width)?;
    let small = RawThermalFrame::new(height, width, frame.clone())?;
    let (sx, sy) = (nw as f32 / width as f32, nh as f32 / height as f32);
    let detection = BlobDetector::default()
        .detect(&small)?
        .into_iter()
        .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
        .map(|d| Detection { x0: d.x0 * sx, y0: d.y0 * sy, x1: d.x1 * sx, y1: d.y1 * sy, ..d });
    let (px, py) = labelled.person;
    Ok(PrivacyView {
        native_width: nw,
        native_height: nh,
        width,
        height,
        frame,
        person: labelled.person,
        hit: detection.is_some_and(|d| d.contains(px, py)),
        detection,
    })
}
