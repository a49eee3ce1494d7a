use crate::error::Result;
use crate::nn::{ops, Bound, Graph, ParamStore, Var};
use crate::tensor::{Float, Tensor};

use super::generator::{resblock, resblock_layout};
use super::layers::{act, conv, dense, Layout, Trace};
use super::{LatentCode, ModelConfig, LATENT_DIM};

/// Graph outputs of `D(x)`.
pub struct DiscriminatorOutput<'g, T: Float = f32> {
    /// Realness score, `[N, 1]`.
    pub score: Var<'g, T>,
    /// Reconstructed heatmap before clamping, `[N, 1, H_h, W_h]`.
    pub recon: Var<'g, T>,
    /// Spatially averaged last-layer features, `[N, C]`.
    pub features: Var<'g, T>,
}

/// Plain-tensor result of [`discriminate`].
#[derive(Clone, Debug)]
pub struct DiscriminatorResult {
    pub scores: Vec<f32>,
    pub recon: Tensor,
}

fn backbone_layout(l: &mut Layout, widths: [usize; 4]) {
    l.conv("stem", 3, widths[0], 3, true);
    for i in 1..4 {
        resblock_layout(l, &format!("down{i}"), widths[i - 1], widths[i]);
    }
}

/// Full-resolution stem, then three residual blocks each preceded by 2×
/// average pooling. Returns activated features at heatmap resolution.
fn backbone<'g, T: Float>(p: &Bound<'g, T>, x: &Var<'g, T>, slope: f32, trace: &mut Trace<T>) -> Var<'g, T> {
    let mut f = conv(p, "stem", x, trace);
    for i in 1..4 {
        let pooled = ops::avg_pool2x(&f);
        f = resblock(p, &format!("down{i}"), &pooled, slope, trace);
    }
    act(&f, slope, trace)
}

pub fn discriminator_layout(cfg: &ModelConfig) -> Layout {
    let mut l = Layout::default();
    backbone_layout(&mut l, cfg.disc_channels);
    l.conv("head_h", cfg.disc_channels[3], 1, 3, true);
    l.dense("head_s", cfg.disc_channels[3], 1);
    l
}

/// `D(x) → (s, ĥ)` for `x` of shape `[N, 3, 8·H_h, 8·W_h]`.
///
/// Under [`Trace::Replay`] the same call evaluates the Jacobian-vector
/// product of the recorded pass, which the gradient penalty relies on.
pub fn discriminator_forward<'g, T: Float>(
    cfg: &ModelConfig,
    p: &Bound<'g, T>,
    x: &Var<'g, T>,
    trace: &mut Trace<T>,
) -> Result<DiscriminatorOutput<'g, T>> {
    cfg.check_image_shape(x.shape())?;
    let f = backbone(p, x, cfg.negative_slope, trace);
    let recon = conv(p, "head_h", &f, trace);
    let area = (cfg.heatmap_height * cfg.heatmap_width) as f64;
    let features = ops::scale(&ops::global_sum_pool(&f), T::from_f64(1.0 / area));
    let score = dense(p, "head_s", &features, trace);
    Ok(DiscriminatorOutput { score, recon, features })
}

pub fn discriminate(cfg: &ModelConfig, params: &ParamStore, x: &Tensor) -> Result<DiscriminatorResult> {
    discriminator_layout(cfg).check(params, "discriminator")?;
    let graph = Graph::new();
    let p = Bound::new(&graph, params);
    let out = discriminator_forward(cfg, &p, &graph.leaf(x.clone()), &mut Trace::Off)?;
    Ok(DiscriminatorResult { scores: out.score.value().data().to_vec(), recon: out.recon.value().clone() })
}

pub fn encoder_layout(cfg: &ModelConfig) -> Layout {
    let mut l = Layout::default();
    backbone_layout(&mut l, cfg.enc_channels);
    l.dense("fc", cfg.enc_channels[3] * cfg.heatmap_height * cfg.heatmap_width, LATENT_DIM);
    l
}

/// `z̃ = I(x)`, `[N, 256]`.
pub fn encoder_forward<'g, T: Float>(cfg: &ModelConfig, p: &Bound<'g, T>, x: &Var<'g, T>) -> Result<Var<'g, T>> {
    let n = cfg.check_image_shape(x.shape())?;
    let mut off = Trace::Off;
    let f = backbone(p, x, cfg.negative_slope, &mut off);
    let flat = ops::reshape(&f, &[n, f.value().numel() / n]);
    Ok(dense(p, "fc", &flat, &off))
}

pub fn invert(cfg: &ModelConfig, params: &ParamStore, x: &Tensor) -> Result<Vec<LatentCode>> {
    encoder_layout(cfg).check(params, "encoder")?;
    let graph = Graph::new();
    let p = Bound::new(&graph, params);
    let z = encoder_forward(cfg, &p, &graph.leaf(x.clone()))?;
    z.value().data().chunks(LATENT_DIM).map(|c| LatentCode::new(c.to_vec())).collect()
}
