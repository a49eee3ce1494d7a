//! Checks that the heatmap steers position while the code steers appearance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{preprocess_thermal, Heatmap, RgbImage, Scene, SyntheticConfig};
use crate::error::{Error, Result};
use crate::model::{generate, LatentCode, ModelConfig};
use crate::nn::ParamStore;

/// A code with the environment label of the image it came from.
#[derive(Clone, Debug)]
pub struct LabelledCode {
    pub code: LatentCode,
    pub environment: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub probes: usize,
    /// Horizontal person shift in units of the frame height.
    pub shift: f32,
    /// Per-pixel mean absolute distance from the person-free rendering above
    /// which a pixel counts as silhouette.
    pub foreground_threshold: f32,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { probes: 20, shift: 0.3, foreground_threshold: 0.2, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub shift: f32,
    /// Silhouette centroid x (pixels) before and after the shift.
    pub centroid_before: Option<f32>,
    pub centroid_after: Option<f32>,
    pub direction_ok: bool,
    /// Background colour change caused by moving the heatmap.
    pub background_change_heatmap: f32,
    /// Background colour change caused by swapping to a code from another
    /// environment with the heatmap fixed.
    pub background_change_code: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub outcomes: Vec<ProbeOutcome>,
    /// Share of probes whose centroid moved in the shift direction.
    pub direction_rate: f64,
    /// Share of probes where the code moved the background more than the heatmap.
    pub background_rate: f64,
}

/// Per-channel median of the one-pixel border.
pub fn background_color(img: &RgbImage) -> [f32; 3] {
    let (h, w) = (img.height(), img.width());
    let mut border = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if y == 0 || x == 0 || y + 1 == h || x + 1 == w {
                border.push(img.pixel(y, x));
            }
        }
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut ch: Vec<f32> = border.iter().map(|p| p[c]).collect();
        ch.sort_by(f32::total_cmp);
        *o = ch[ch.len() / 2];
    }
    out
}

fn color_distance(a: [f32; 3], b: [f32; 3]) -> f32 {
    a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f32>() / 3.0
}

/// Silhouette centroid x: the mean column of pixels that differ from
/// `plate` (the same code rendered without a person) by more than
/// `threshold`, weighted by that difference.
pub fn silhouette_centroid_x(img: &RgbImage, plate: &RgbImage, threshold: f32) -> Option<f32> {
    let (mut sum, mut weight) = (0.0f64, 0.0f64);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let d = color_distance(img.pixel(y, x), plate.pixel(y, x));
            if d > threshold {
                sum += x as f64 * d as f64;
                weight += d as f64;
            }
        }
    }
    (weight > 0.0).then(|| (sum / weight) as f32)
}

fn heatmap_of<R: rand::Rng>(scene: &Scene, synth: &SyntheticConfig, noisy: bool, rng: &mut R) -> Result<Heatmap> {
    let mut params = synth.dataset_config().thermal;
    if !noisy {
        params.noise_std = 0.0;
    }
    let raw = scene.render_thermal(synth.heatmap_height * synth.thermal_raw_factor, synth.heatmap_width * synth.thermal_raw_factor);
    preprocess_thermal(&raw, &params, rng)
}

/// Runs the probe against any `(code, heatmap) → image` map.
pub fn disentanglement_probe_with(
    generate: &dyn Fn(&LatentCode, &Heatmap) -> Result<RgbImage>,
    codes: &[LabelledCode],
    synth: &SyntheticConfig,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    if codes.len() < 2 || cfg.probes == 0 {
        return Err(Error::Config("probe needs at least two codes and one probe".into()));
    }
    let aspect = synth.heatmap_width as f32 / synth.heatmap_height as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut outcomes = Vec::with_capacity(cfg.probes);
    for i in 0..cfg.probes {
        let mut scene = Scene::random(&mut rng, aspect, synth);
        scene.heat_source = None;
        // Alternate directions, flipping when the shift would leave the frame.
        let margin = 0.22 * scene.scale;
        let mut shift = if i % 2 == 0 { cfg.shift } else { -cfg.shift };
        if !(margin..=aspect - margin).contains(&(scene.center_u + shift)) {
            shift = -shift;
        }
        scene.center_u = (scene.center_u - 0.5 * shift).clamp(margin, aspect - margin);
        let before = heatmap_of(&scene, synth, true, &mut rng)?;
        scene.center_u += shift;
        let after = heatmap_of(&scene, synth, true, &mut rng)?;
        // Same room with the person moved out of frame.
        let empty = Scene { center_u: -10.0, ..scene.clone() };
        let plate_heatmap = heatmap_of(&empty, synth, false, &mut rng)?;

        let a = &codes[i % codes.len()];
        let b = (1..codes.len())
            .map(|k| &codes[(i + k) % codes.len()])
            .find(|c| c.environment != a.environment)
            .unwrap_or(&codes[(i + 1) % codes.len()]);
        let img_before = generate(&a.code, &before)?;
        let img_after = generate(&a.code, &after)?;
        let img_other = generate(&b.code, &before)?;
        let plate = generate(&a.code, &plate_heatmap)?;

        let cb = silhouette_centroid_x(&img_before, &plate, cfg.foreground_threshold);
        let ca = silhouette_centroid_x(&img_after, &plate, cfg.foreground_threshold);
        let direction_ok = matches!((cb, ca), (Some(p), Some(q)) if (q - p) * shift > 0.0);
        let bg = background_color(&img_before);
        outcomes.push(ProbeOutcome {
            shift,
            centroid_before: cb,
            centroid_after: ca,
            direction_ok,
            background_change_heatmap: color_distance(bg, background_color(&img_after)),
            background_change_code: color_distance(bg, background_color(&img_other)),
        });
    }
    let n = outcomes.len() as f64;
    let direction_rate = outcomes.iter().filter(|o| o.direction_ok).count() as f64 / n;
    let background_rate =
        outcomes.iter().filter(|o| o.background_change_code > o.background_change_heatmap).count() as f64 / n;
    Ok(ProbeReport { outcomes, direction_rate, background_rate })
}

/// [`disentanglement_probe_with`] using the generator `params`.
pub fn disentanglement_probe(
    model: &ModelConfig,
    params: &ParamStore,
    codes: &[LabelledCode],
    synth: &SyntheticConfig,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    if (synth.heatmap_height, synth.heatmap_width) != (model.heatmap_height, model.heatmap_width) {
        return Err(Error::Config("probe scenes must use the model's heatmap size".into()));
    }
    disentanglement_probe_with(&|z, h| generate(model, params, z, h), codes, synth, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UPSCALE;

    /// Paints hot heatmap cells in a code-dependent colour over a
    /// code-dependent background: perfectly disentangled by construction.
    fn oracle(z: &LatentCode, h: &Heatmap) -> Result<RgbImage> {
        let (hh, hw) = (h.height() * UPSCALE, h.width() * UPSCALE);
        let bg = z.values()[0].tanh() * 0.8;
        let mut vals = Vec::with_capacity(hh * hw * 3);
        for y in 0..hh {
            for x in 0..hw {
                let v = h.values()[(y / UPSCALE) * h.width() + x / UPSCALE];
                vals.extend_from_slice(&if v > 0.0 { [0.9, -0.9, 0.9] } else { [bg, bg, bg] });
            }
        }
        RgbImage::new(hh, hw, vals)
    }

    fn codes() -> Vec<LabelledCode> {
        (0..4)
            .map(|i| {
                let mut v = vec![0.0; crate::model::LATENT_DIM];
                v[0] = i as f32 - 1.5;
                LabelledCode { code: LatentCode::new(v).unwrap(), environment: i % 2 }
            })
            .collect()
    }

    #[test]
    fn oracle_generator_passes_every_probe() {
        let synth = SyntheticConfig { heatmap_height: 6, heatmap_width: 8, ..Default::default() };
        let r = disentanglement_probe_with(&oracle, &codes(), &synth, &ProbeConfig::default()).unwrap();
        assert_eq!(r.outcomes.len(), 20);
        assert_eq!(r.direction_rate, 1.0);
        assert_eq!(r.background_rate, 1.0);
        assert!(r.outcomes.iter().any(|o| o.shift > 0.0) && r.outcomes.iter().any(|o| o.shift < 0.0));
    }

    #[test]
    fn heatmap_blind_generator_fails_direction() {
        let synth = SyntheticConfig { heatmap_height: 6, heatmap_width: 8, ..Default::default() };
        let flat = |z: &LatentCode, h: &Heatmap| oracle(z, &Heatmap::new(h.height(), h.width(), vec![-1.0; h.values().len()])?);
        let r = disentanglement_probe_with(&flat, &codes(), &synth, &ProbeConfig::default()).unwrap();
        assert_eq!(r.direction_rate, 0.0);
    }

    #[test]
    fn centroid_and_background_helpers() {
        let mut vals = vec![-1.0; 4 * 6 * 3];
        for c in 0..3 {
            vals[(6 + 4) * 3 + c] = 1.0;
            vals[(12 + 4) * 3 + c] = 1.0;
        }
        let img = RgbImage::new(4, 6, vals).unwrap();
        let plate = RgbImage::new(4, 6, vec![-1.0; 72]).unwrap();
        assert_eq!(background_color(&img), [-1.0; 3]);
        assert_eq!(silhouette_centroid_x(&img, &plate, 0.5), Some(4.0));
        assert_eq!(silhouette_centroid_x(&plate, &plate, 0.5), None);
        assert!(disentanglement_probe_with(&oracle, &codes()[..1], &SyntheticConfig::default(), &ProbeConfig::default()).is_err());
    }
}
