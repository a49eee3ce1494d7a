//! Generator, discriminator and inversion encoder.
//!
//! The generator has two branches. A semantic branch resamples the heatmap
//! through residual blocks (one at heatmap resolution, then three 2× up
//! blocks). The main branch turns the latent code into a feature map with a
//! dense layer and passes it through three SPADE-SR residual up blocks, each
//! modulated by the semantic features at its input and output resolution.
//! The output is therefore 8× the heatmap in each spatial dimension.

mod bundle;
mod discriminator;
mod generator;
pub mod layers;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use bundle::{load_bundle, save_bundle, ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use discriminator::{discriminate, discriminator_forward, discriminator_layout, encoder_forward, encoder_layout, invert, DiscriminatorOutput, DiscriminatorResult};
pub use generator::{generate, generate_batch, generator_forward, generator_layout};

use crate::data::{Heatmap, RgbImage, UPSCALE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Length of every latent code.
pub const LATENT_DIM: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub heatmap_height: usize,
    pub heatmap_width: usize,
    /// Main-branch widths: after the dense layer, then after each up block.
    pub gen_channels: [usize; 4],
    /// Semantic-branch widths at the base resolution and after each up block.
    pub sem_channels: [usize; 4],
    /// Discriminator widths: stem, then after each 2× down block.
    pub disc_channels: [usize; 4],
    /// Encoder widths, same structure as the discriminator.
    pub enc_channels: [usize; 4],
    pub negative_slope: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            heatmap_height: 12,
            heatmap_width: 16,
            gen_channels: [256, 128, 64, 32],
            sem_channels: [32, 32, 32, 32],
            disc_channels: [32, 64, 128, 256],
            enc_channels: [32, 64, 128, 256],
            negative_slope: 0.2,
        }
    }
}

impl ModelConfig {
    /// Narrow networks for CPU experiments on small heatmaps.
    pub fn small(heatmap_height: usize, heatmap_width: usize) -> Self {
        Self {
            heatmap_height,
            heatmap_width,
            gen_channels: [32, 16, 16, 8],
            sem_channels: [8, 8, 8, 8],
            disc_channels: [8, 16, 32, 32],
            enc_channels: [8, 16, 32, 32],
            negative_slope: 0.2,
        }
    }

    pub fn rgb_height(&self) -> usize {
        UPSCALE * self.heatmap_height
    }

    pub fn rgb_width(&self) -> usize {
        UPSCALE * self.heatmap_width
    }

    pub fn validate(&self) -> Result<()> {
        if self.heatmap_height == 0 || self.heatmap_width == 0 {
            return Err(Error::Config("heatmap size must be positive".into()));
        }
        let all = [self.gen_channels, self.sem_channels, self.disc_channels, self.enc_channels];
        if all.iter().flatten().any(|&c| c == 0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if !(self.negative_slope >= 0.0 && self.negative_slope < 1.0) {
            return Err(Error::Config("negative slope must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn check_heatmap_shape(&self, shape: &[usize]) -> Result<usize> {
        match shape {
            [n, 1, h, w] if (*h, *w) == (self.heatmap_height, self.heatmap_width) => Ok(*n),
            s => Err(Error::Dimension(format!(
                "heatmap batch must be [N, 1, {}, {}], got {s:?}",
                self.heatmap_height, self.heatmap_width
            ))),
        }
    }

    pub(crate) fn check_image_shape(&self, shape: &[usize]) -> Result<usize> {
        match shape {
            [n, 3, h, w] if (*h, *w) == (self.rgb_height(), self.rgb_width()) => Ok(*n),
            s => Err(Error::Dimension(format!(
                "image batch must be [N, 3, {}, {}], got {s:?}",
                self.rgb_height(),
                self.rgb_width()
            ))),
        }
    }
}

/// A point in the non-thermal latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct LatentCode(Vec<f32>);

impl LatentCode {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.len() != LATENT_DIM {
            return Err(Error::Dimension(format!("latent code must have {LATENT_DIM} entries, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("latent code has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    /// `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self((0..LATENT_DIM).map(|_| StandardNormal.sample(rng)).collect())
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    /// `[1, 256]`
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, LATENT_DIM], self.0.clone()).unwrap()
    }

    pub fn stack(codes: &[LatentCode]) -> Tensor {
        Tensor::from_vec(&[codes.len(), LATENT_DIM], codes.iter().flat_map(|c| c.0.iter().copied()).collect()).unwrap()
    }
}

impl TryFrom<Vec<f32>> for LatentCode {
    type Error = Error;

    fn try_from(v: Vec<f32>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LatentCode> for Vec<f32> {
    fn from(c: LatentCode) -> Self {
        c.0
    }
}

/// Stacks heatmaps into `[N, 1, H, W]`.
pub fn stack_heatmaps(hs: &[&Heatmap]) -> Result<Tensor> {
    Tensor::stack(&hs.iter().map(|h| h.to_tensor()).collect::<Vec<_>>())
}

/// Stacks images into `[N, 3, H, W]`.
pub fn stack_images(xs: &[&RgbImage]) -> Result<Tensor> {
    Tensor::stack(&xs.iter().map(|x| x.to_tensor()).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests;
