//! RGB and thermal preprocessing.
//!
//! Thermal frames go through blur → additive noise → pixel-average
//! downsampling → clamp → affine map onto [-1, 1]. RGB frames are
//! block-averaged and mapped from [0, 255].

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::types::{Heatmap, HeatmapMask, PersonMask, RawRgb, RawThermalFrame, RgbImage};
use crate::error::{Error, Result};

pub const RGB_RANGE: (f32, f32) = (0.0, 255.0);

/// Default mask binarisation threshold on block means.
pub const MASK_THRESHOLD: f32 = 0.5;

/// Thermal preprocessing settings, stored in dataset manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    /// Gaussian kernel size, odd.
    pub blur_kernel: usize,
    /// Standard deviation of the additive noise, in sensor units.
    pub noise_std: f32,
    pub target_height: usize,
    pub target_width: usize,
    /// Fixed sensor range mapped onto [-1, 1].
    pub range: (f32, f32),
}

impl ThermalParams {
    /// Blur 3, noise 5% of the range.
    pub fn with_defaults(target_height: usize, target_width: usize, range: (f32, f32)) -> Self {
        Self { blur_kernel: 3, noise_std: 0.05 * (range.1 - range.0), target_height, target_width, range }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blur_kernel == 0 || self.blur_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("blur kernel must be odd and positive, got {}", self.blur_kernel)));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(Error::Config(format!("noise std must be >= 0, got {}", self.noise_std)));
        }
        if self.range.0.partial_cmp(&self.range.1) != Some(Ordering::Less) {
            return Err(Error::Config(format!("thermal range must satisfy t_min < t_max, got {:?}", self.range)));
        }
        if self.target_height == 0 || self.target_width == 0 {
            return Err(Error::Config("target resolution must be non-empty".into()));
        }
        Ok(())
    }
}

/// Maps `[lo, hi]` onto `[-1, 1]`.
#[inline]
pub fn normalize(v: f32, lo: f32, hi: f32) -> f32 {
    2.0 * (v - lo) / (hi - lo) - 1.0
}

#[inline]
pub fn denormalize(v: f32, lo: f32, hi: f32) -> f32 {
    (v + 1.0) * 0.5 * (hi - lo) + lo
}

fn block_factor(src: usize, dst: usize, what: &str) -> Result<usize> {
    if dst == 0 || !src.is_multiple_of(dst) {
        return Err(Error::Dimension(format!("{what}: {src} is not an integer multiple of {dst}")));
    }
    Ok(src / dst)
}

/// Block mean of an interleaved `h × w × channels` array, accumulated in f64.
pub fn pixel_average(
    values: &[f32],
    h: usize,
    w: usize,
    channels: usize,
    target_h: usize,
    target_w: usize,
) -> Result<Vec<f32>> {
    let fy = block_factor(h, target_h, "height")?;
    let fx = block_factor(w, target_w, "width")?;
    let mut acc = vec![0.0f64; target_h * target_w * channels];
    for y in 0..h {
        let ty = y / fy;
        for x in 0..w {
            let tx = x / fx;
            let src = (y * w + x) * channels;
            let dst = (ty * target_w + tx) * channels;
            for c in 0..channels {
                acc[dst + c] += values[src + c] as f64;
            }
        }
    }
    let n = (fy * fx) as f64;
    Ok(acc.into_iter().map(|v| (v / n) as f32).collect())
}

pub fn preprocess_rgb(raw: &RawRgb, target_height: usize, target_width: usize) -> Result<RgbImage> {
    let avg = pixel_average(raw.values(), raw.height(), raw.width(), 3, target_height, target_width)?;
    let (lo, hi) = RGB_RANGE;
    let values = avg.into_iter().map(|v| normalize(v.clamp(lo, hi), lo, hi).clamp(-1.0, 1.0)).collect();
    RgbImage::new(target_height, target_width, values)
}

/// Sigma used for a kernel of size `k` when none is given (OpenCV's rule).
pub fn default_sigma(kernel: usize) -> f64 {
    0.3 * ((kernel as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_kernel(size: usize) -> Vec<f64> {
    let sigma = default_sigma(size);
    let half = (size / 2) as isize;
    let taps: Vec<f64> = (-half..=half).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Mirrors an out-of-range index without repeating the edge (`dcb|abcd|cba`).
fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Separable Gaussian blur of a single-channel image.
pub fn gaussian_blur(values: &[f32], h: usize, w: usize, kernel: usize) -> Vec<f32> {
    if kernel <= 1 {
        return values.to_vec();
    }
    let taps = gaussian_kernel(kernel);
    let half = (kernel / 2) as isize;
    let mut tmp = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * values[y * w + reflect101(x as isize + k as isize - half, w)] as f64)
                .sum();
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[reflect101(y as isize + k as isize - half, h) * w + x])
                .sum::<f64>() as f32;
        }
    }
    out
}

pub fn preprocess_thermal<R: Rng + ?Sized>(raw: &RawThermalFrame, params: &ThermalParams, rng: &mut R) -> Result<Heatmap> {
    params.validate()?;
    block_factor(raw.height(), params.target_height, "height")?;
    block_factor(raw.width(), params.target_width, "width")?;
    let mut blurred = gaussian_blur(raw.values(), raw.height(), raw.width(), params.blur_kernel);
    if params.noise_std > 0.0 {
        let noise = Normal::new(0.0f32, params.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        for v in &mut blurred {
            *v += noise.sample(rng);
        }
    }
    let small = pixel_average(&blurred, raw.height(), raw.width(), 1, params.target_height, params.target_width)?;
    let (lo, hi) = params.range;
    let values = small.into_iter().map(|v| normalize(v.clamp(lo, hi), lo, hi).clamp(-1.0, 1.0)).collect();
    Heatmap::new(params.target_height, params.target_width, values)
}

/// Block-mean-and-threshold resize of a person mask to `(target_h, target_w)`.
pub fn resize_mask(mask: &PersonMask, target_h: usize, target_w: usize, threshold: f32) -> Result<HeatmapMask> {
    let means = pixel_average(mask.values(), mask.height(), mask.width(), 1, target_h, target_w)?;
    HeatmapMask::new(target_h, target_w, means.into_iter().map(|m| if m > threshold { 1.0 } else { 0.0 }).collect())
}
