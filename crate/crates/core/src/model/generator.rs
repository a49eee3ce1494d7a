use crate::data::{Heatmap, RgbImage};
use crate::error::Result;
use crate::nn::{ops, Bound, Graph, ParamStore, Var};
use crate::tensor::{Float, Tensor};

use super::layers::{act, conv, dense, spade, Layout, Trace};
use super::{LatentCode, ModelConfig, LATENT_DIM};

// Init gains. Residual branches and skips each get 1/√2 so a block roughly
// preserves variance; modulation convs start small so SPADE begins close to
// plain normalization.
const RESIDUAL_GAIN: f32 = std::f32::consts::FRAC_1_SQRT_2;
const MOD_GAIN: f32 = 0.1;
const OUT_GAIN: f32 = 0.3;

pub fn generator_layout(cfg: &ModelConfig) -> Layout {
    let [c0, ..] = cfg.gen_channels;
    let s = cfg.sem_channels;
    let c = cfg.gen_channels;
    let mut l = Layout::default();
    l.dense_gain("fc", LATENT_DIM, c0 * cfg.heatmap_height * cfg.heatmap_width, RESIDUAL_GAIN);

    resblock_layout(&mut l, "sem0", 1, s[0]);
    for i in 1..4 {
        resblock_layout(&mut l, &format!("sem{i}"), s[i - 1], s[i]);
    }
    for i in 1..4 {
        let name = format!("up{i}");
        let (cin, cout) = (c[i - 1], c[i]);
        l.conv_gain(&format!("{name}.spade1.gamma"), s[i - 1], cin, 3, true, MOD_GAIN);
        l.conv_gain(&format!("{name}.spade1.beta"), s[i - 1], cin, 3, true, MOD_GAIN);
        l.conv(&format!("{name}.conv1"), cin, cout, 3, true);
        l.conv_gain(&format!("{name}.spade2.gamma"), s[i], cout, 3, true, MOD_GAIN);
        l.conv_gain(&format!("{name}.spade2.beta"), s[i], cout, 3, true, MOD_GAIN);
        l.conv_gain(&format!("{name}.conv2"), cout, cout, 3, true, RESIDUAL_GAIN);
        l.conv_gain(&format!("{name}.skip"), cin, cout, 1, false, RESIDUAL_GAIN);
    }
    l.conv_gain("out", c[3], 3, 3, true, OUT_GAIN);
    l
}

/// Pre-activation residual block: `conv2(act(conv1(act(x)))) + skip(x)`.
/// The skip is a 1×1 convolution when the width changes, identity otherwise.
pub(super) fn resblock_layout(l: &mut Layout, name: &str, cin: usize, cout: usize) {
    l.conv(&format!("{name}.conv1"), cin, cout, 3, true);
    l.conv_gain(&format!("{name}.conv2"), cout, cout, 3, true, RESIDUAL_GAIN);
    if cin != cout {
        l.conv_gain(&format!("{name}.skip"), cin, cout, 1, false, RESIDUAL_GAIN);
    }
}

pub(super) fn resblock<'g, T: Float>(
    p: &Bound<'g, T>,
    name: &str,
    x: &Var<'g, T>,
    slope: f32,
    trace: &mut Trace<T>,
) -> Var<'g, T> {
    let h = act(x, slope, trace);
    let h = conv(p, &format!("{name}.conv1"), &h, trace);
    let h = act(&h, slope, trace);
    let h = conv(p, &format!("{name}.conv2"), &h, trace);
    let skip = match p.try_var(&format!("{name}.skip.w")) {
        Some(_) => conv(p, &format!("{name}.skip"), x, trace),
        None => x.clone(),
    };
    ops::add(&h, &skip)
}

/// `x̂ = G(z, h)` for a batch. `z` is `[N, 256]`, `h` is `[N, 1, H_h, W_h]`;
/// the result is `[N, 3, 8·H_h, 8·W_h]` in (−1, 1).
pub fn generator_forward<'g, T: Float>(
    cfg: &ModelConfig,
    p: &Bound<'g, T>,
    z: &Var<'g, T>,
    h: &Var<'g, T>,
) -> Result<Var<'g, T>> {
    let n = cfg.check_heatmap_shape(h.shape())?;
    if z.shape() != [n, LATENT_DIM] {
        return Err(crate::Error::Dimension(format!("latent batch must be [{n}, {LATENT_DIM}], got {:?}", z.shape())));
    }
    let slope = cfg.negative_slope;
    let mut off = Trace::Off;

    let mut sem = vec![resblock(p, "sem0", h, slope, &mut off)];
    for i in 1..4 {
        let up = ops::upsample2x(&sem[i - 1]);
        sem.push(resblock(p, &format!("sem{i}"), &up, slope, &mut off));
    }

    let x = dense(p, "fc", z, &off);
    let mut x = ops::reshape(&x, &[n, cfg.gen_channels[0], cfg.heatmap_height, cfg.heatmap_width]);
    for i in 1..4 {
        let name = format!("up{i}");
        let h = spade(p, &format!("{name}.spade1"), &x, &sem[i - 1]);
        let h = act(&h, slope, &mut off);
        let h = ops::upsample2x(&h);
        let h = conv(p, &format!("{name}.conv1"), &h, &off);
        let h = spade(p, &format!("{name}.spade2"), &h, &sem[i]);
        let h = act(&h, slope, &mut off);
        let h = conv(p, &format!("{name}.conv2"), &h, &off);
        let skip = conv(p, &format!("{name}.skip"), &ops::upsample2x(&x), &off);
        x = ops::add(&h, &skip);
    }
    let x = act(&x, slope, &mut off);
    Ok(ops::tanh(&conv(p, "out", &x, &off)))
}

/// Inference-only batch generation.
pub fn generate_batch(cfg: &ModelConfig, params: &ParamStore, z: &Tensor, h: &Tensor) -> Result<Tensor> {
    generator_layout(cfg).check(params, "generator")?;
    let graph = Graph::new();
    let p = Bound::new(&graph, params);
    let out = generator_forward(cfg, &p, &graph.leaf(z.clone()), &graph.leaf(h.clone()))?;
    Ok(out.value().clone())
}

pub fn generate(cfg: &ModelConfig, params: &ParamStore, z: &LatentCode, h: &Heatmap) -> Result<RgbImage> {
    let out = generate_batch(cfg, params, &z.to_tensor(), &h.to_tensor())?;
    RgbImage::from_tensor(&out, 0)
}
