//! Image-like containers. All are row-major; RGB data is interleaved HWC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spatial ratio between generated RGB images and thermal heatmaps.
pub const UPSCALE: usize = 8;

fn check_len(what: &str, h: usize, w: usize, c: usize, len: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::Dimension(format!("{what}: empty {h}x{w}")));
    }
    if h * w * c != len {
        return Err(Error::Dimension(format!("{what}: {h}x{w}x{c} needs {} values, got {len}", h * w * c)));
    }
    Ok(())
}

/// Temperature readings straight from the sensor (°C in the synthetic data).
#[derive(Clone, Debug, PartialEq)]
pub struct RawThermalFrame {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl RawThermalFrame {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        check_len("thermal frame", height, width, 1, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("thermal frame contains non-finite readings".into()));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Colour image before preprocessing, HWC with values in [0, 255].
#[derive(Clone, Debug, PartialEq)]
pub struct RawRgb {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl RawRgb {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        check_len("raw rgb", height, width, 3, values.len())?;
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Preprocessed thermal condition, `H_h × W_h × 1`, values in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl Heatmap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        check_len("heatmap", height, width, 1, values.len())?;
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Format("heatmap values must lie in [-1, 1]".into()));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// `[1, 1, H, W]`
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, 1, self.height, self.width], self.values.clone()).unwrap()
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            [1, 1, h, w] => Self::new(*h, *w, t.data().to_vec()),
            s => Err(Error::Shape(format!("expected [1,1,H,W] heatmap tensor, got {s:?}"))),
        }
    }
}

/// Network output image, `H_x × W_x × 3`, values in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        check_len("rgb image", height, width, 3, values.len())?;
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Format("rgb values must lie in [-1, 1]".into()));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Interleaved HWC values.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.values[i], self.values[i + 1], self.values[i + 2]]
    }

    /// `[1, 3, H, W]`
    pub fn to_tensor(&self) -> Tensor {
        let hw = self.height * self.width;
        let mut chw = vec![0.0; 3 * hw];
        for (p, px) in self.values.chunks_exact(3).enumerate() {
            for c in 0..3 {
                chw[c * hw + p] = px[c];
            }
        }
        Tensor::from_vec(&[1, 3, self.height, self.width], chw).unwrap()
    }

    /// Inverse of [`RgbImage::to_tensor`] for sample `index` of a batch.
    pub fn from_tensor(t: &Tensor, index: usize) -> Result<Self> {
        let (n, c, h, w) = match t.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => return Err(Error::Shape(format!("expected NCHW tensor, got {s:?}"))),
        };
        if c != 3 || index >= n {
            return Err(Error::Shape(format!("cannot take rgb image {index} from {:?}", t.shape())));
        }
        let hw = h * w;
        let base = index * 3 * hw;
        let mut hwc = vec![0.0; 3 * hw];
        for p in 0..hw {
            for ch in 0..3 {
                hwc[p * 3 + ch] = t.data()[base + ch * hw + p];
            }
        }
        Self::new(h, w, hwc)
    }

    /// 8-bit RGB bytes for encoding.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.values.iter().map(|v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8).collect()
    }
}

/// Binary person segmentation at RGB resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonMask {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl PersonMask {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        check_len("person mask", height, width, 1, values.len())?;
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Format("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Person mask resized to heatmap resolution (`m̂`), binary.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapMask {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl HeatmapMask {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        check_len("heatmap mask", height, width, 1, values.len())?;
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Format("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, values })
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![1.0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, 1, self.height, self.width], self.values.clone()).unwrap()
    }
}

/// Labels for the non-thermal attributes of a sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub person_id: u32,
    pub clothing: u32,
    pub environment: u32,
    /// Free-form extras (e.g. generator ground truth for synthetic samples).
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// One simultaneous RGB/thermal capture after preprocessing.
#[derive(Clone, Debug)]
pub struct PairedSample {
    pub sample_id: String,
    pub rgb: RgbImage,
    pub heatmap: Heatmap,
    pub mask: Option<PersonMask>,
    pub mask_hat: Option<HeatmapMask>,
    pub meta: SampleMeta,
}

impl PairedSample {
    pub fn new(
        sample_id: impl Into<String>,
        rgb: RgbImage,
        heatmap: Heatmap,
        mask: Option<PersonMask>,
        mask_hat: Option<HeatmapMask>,
        meta: SampleMeta,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        if rgb.height() != UPSCALE * heatmap.height() || rgb.width() != UPSCALE * heatmap.width() {
            return Err(Error::Dimension(format!(
                "sample {sample_id}: rgb {}x{} is not {UPSCALE}x heatmap {}x{}",
                rgb.height(),
                rgb.width(),
                heatmap.height(),
                heatmap.width()
            )));
        }
        if let Some(m) = &mask {
            if (m.height(), m.width()) != (rgb.height(), rgb.width()) {
                return Err(Error::Dimension(format!("sample {sample_id}: mask size differs from rgb")));
            }
        }
        if let Some(m) = &mask_hat {
            if (m.height(), m.width()) != (heatmap.height(), heatmap.width()) {
                return Err(Error::Dimension(format!("sample {sample_id}: resized mask differs from heatmap")));
            }
        }
        Ok(Self { sample_id, rgb, heatmap, mask, mask_hat, meta })
    }

    /// `m̂`, or an all-ones mask when no segmentation is available.
    pub fn mask_hat_or_ones(&self) -> HeatmapMask {
        self.mask_hat.clone().unwrap_or_else(|| HeatmapMask::ones(self.heatmap.height(), self.heatmap.width()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_tensor_round_trip() {
        let vals: Vec<f32> = (0..2 * 3 * 3).map(|i| i as f32 / 18.0).collect();
        let img = RgbImage::new(2, 3, vals).unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[1, 3, 2, 3]);
        assert_eq!(RgbImage::from_tensor(&t, 0).unwrap(), img);
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(Heatmap::new(1, 1, vec![1.5]).is_err());
        assert!(RgbImage::new(1, 1, vec![0.0, 0.0]).is_err());
        assert!(PersonMask::new(1, 2, vec![0.0, 0.5]).is_err());
        assert!(RawThermalFrame::new(1, 1, vec![f32::NAN]).is_err());
        let rgb = RgbImage::new(16, 16, vec![0.0; 16 * 16 * 3]).unwrap();
        let bad = Heatmap::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(PairedSample::new("x", rgb, bad, None, None, SampleMeta::default()).is_err());
    }
}
