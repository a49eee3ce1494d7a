//! Differentiable operations on [`Var`]s.
//!
//! Images are NCHW. Convolutions are stride 1 with "same" zero padding; spatial
//! resampling is done by the explicit 2× up/down ops.

use std::sync::Arc;

use super::graph::Var;
use super::kernels;
use crate::tensor::{Float, Tensor};

/// `k×k` convolution, weight `[O, C, k, k]`, optional bias `[O]`.
pub fn conv2d<'g, T: Float>(x: &Var<'g, T>, weight: &Var<'g, T>, bias: Option<&Var<'g, T>>) -> Var<'g, T> {
    let (n, c, h, w) = x.value().dims4();
    let ws = weight.shape();
    assert_eq!(ws.len(), 4, "conv weight must be [O,C,k,k]");
    let (o, k) = (ws[0], ws[2]);
    assert_eq!(ws[1], c, "conv input channels {c} != weight {ws:?}");
    assert!(k % 2 == 1 && ws[3] == k, "conv kernel must be odd and square");
    let hw = h * w;
    let ckk = c * k * k;

    let xv = x.shared_value();
    let wv = weight.shared_value();
    let mut out = vec![T::zero(); n * o * hw];
    let mut col = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
    for i in 0..n {
        let xi = &xv.data()[i * c * hw..(i + 1) * c * hw];
        let patches: &[T] = if k == 1 {
            xi
        } else {
            kernels::im2col(xi, c, h, w, k, &mut col);
            &col
        };
        T::gemm(o, ckk, hw, T::one(), wv.data(), (ckk, 1), patches, (hw, 1), T::zero(), &mut out[i * o * hw..(i + 1) * o * hw], (hw, 1));
    }
    if let Some(b) = bias {
        let bv = b.value().data();
        for i in 0..n {
            for (oc, &bias) in bv.iter().enumerate() {
                let base = (i * o + oc) * hw;
                for v in &mut out[base..base + hw] {
                    *v += bias;
                }
            }
        }
    }

    let out = Tensor::from_vec(&[n, o, h, w], out).expect("conv output");
    let mut parents = vec![x, weight];
    if let Some(b) = bias {
        parents.push(b);
    }
    let has_bias = bias.is_some();
    x.graph().push(
        out,
        &parents,
        Box::new(move |g, need| {
            let gd = g.data();
            let mut gx = need[0].then(|| vec![T::zero(); n * c * hw]);
            let mut gw = need[1].then(|| vec![T::zero(); o * ckk]);
            let mut col = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
            for i in 0..n {
                let gi = &gd[i * o * hw..(i + 1) * o * hw];
                let xi = &xv.data()[i * c * hw..(i + 1) * c * hw];
                if let Some(gw) = gw.as_mut() {
                    let patches: &[T] = if k == 1 {
                        xi
                    } else {
                        kernels::im2col(xi, c, h, w, k, &mut col);
                        &col
                    };
                    T::gemm(o, hw, ckk, T::one(), gi, (hw, 1), patches, (1, hw), T::one(), gw, (ckk, 1));
                }
                if let Some(gx) = gx.as_mut() {
                    let gxi = &mut gx[i * c * hw..(i + 1) * c * hw];
                    if k == 1 {
                        T::gemm(c, o, hw, T::one(), wv.data(), (1, ckk), gi, (hw, 1), T::zero(), gxi, (hw, 1));
                    } else {
                        T::gemm(ckk, o, hw, T::one(), wv.data(), (1, ckk), gi, (hw, 1), T::zero(), &mut col, (hw, 1));
                        kernels::col2im(&col, c, h, w, k, gxi);
                    }
                }
            }
            let mut res = vec![
                gx.map(|d| Tensor::from_vec(&[n, c, h, w], d).unwrap()),
                gw.map(|d| Tensor::from_vec(&[o, c, k, k], d).unwrap()),
            ];
            if has_bias {
                res.push(need[2].then(|| {
                    let mut gb = vec![T::zero(); o];
                    for i in 0..n {
                        for (oc, b) in gb.iter_mut().enumerate() {
                            let base = (i * o + oc) * hw;
                            *b += gd[base..base + hw].iter().copied().sum();
                        }
                    }
                    Tensor::from_vec(&[o], gb).unwrap()
                }));
            }
            res
        }),
    )
}

/// Fully connected layer: `x [N, D] · weightᵀ [D, O] + bias`.
pub fn linear<'g, T: Float>(x: &Var<'g, T>, weight: &Var<'g, T>, bias: Option<&Var<'g, T>>) -> Var<'g, T> {
    let xs = x.shape();
    assert_eq!(xs.len(), 2, "linear input must be [N, D]");
    let (n, d) = (xs[0], xs[1]);
    let ws = weight.shape();
    assert_eq!(ws, &[ws[0], d], "linear weight must be [O, {d}]");
    let o = ws[0];
    let xv = x.shared_value();
    let wv = weight.shared_value();
    let mut out = vec![T::zero(); n * o];
    T::gemm(n, d, o, T::one(), xv.data(), (d, 1), wv.data(), (1, d), T::zero(), &mut out, (o, 1));
    if let Some(b) = bias {
        for row in out.chunks_mut(o) {
            for (v, &bb) in row.iter_mut().zip(b.value().data()) {
                *v += bb;
            }
        }
    }
    let mut parents = vec![x, weight];
    if let Some(b) = bias {
        parents.push(b);
    }
    let has_bias = bias.is_some();
    x.graph().push(
        Tensor::from_vec(&[n, o], out).unwrap(),
        &parents,
        Box::new(move |g, need| {
            let gd = g.data();
            let gx = need[0].then(|| {
                let mut gx = vec![T::zero(); n * d];
                T::gemm(n, o, d, T::one(), gd, (o, 1), wv.data(), (d, 1), T::zero(), &mut gx, (d, 1));
                Tensor::from_vec(&[n, d], gx).unwrap()
            });
            let gw = need[1].then(|| {
                let mut gw = vec![T::zero(); o * d];
                T::gemm(o, n, d, T::one(), gd, (1, o), xv.data(), (d, 1), T::zero(), &mut gw, (d, 1));
                Tensor::from_vec(&[o, d], gw).unwrap()
            });
            let mut res = vec![gx, gw];
            if has_bias {
                res.push(need[2].then(|| {
                    let mut gb = vec![T::zero(); o];
                    for row in gd.chunks(o) {
                        for (b, &v) in gb.iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    Tensor::from_vec(&[o], gb).unwrap()
                }));
            }
            res
        }),
    )
}

/// Per-element slopes of a leaky ReLU at `x` (1 where `x ≥ 0`, `negative_slope` elsewhere).
pub fn leaky_slopes<T: Float>(x: &Tensor<T>, negative_slope: T) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { T::one() } else { negative_slope })
}

/// Leaky ReLU written as `x ⊙ slopes(x)`; the slopes are returned so a
/// linearised replay can reuse the same activation pattern.
pub fn leaky_relu<'g, T: Float>(x: &Var<'g, T>, negative_slope: T) -> (Var<'g, T>, Arc<Tensor<T>>) {
    let slopes = Arc::new(leaky_slopes(x.value(), negative_slope));
    (mul_const(x, Arc::clone(&slopes)), slopes)
}

/// Elementwise product with a constant (non-differentiated) tensor.
pub fn mul_const<'g, T: Float>(x: &Var<'g, T>, factor: Arc<Tensor<T>>) -> Var<'g, T> {
    assert_eq!(x.shape(), factor.shape(), "mul_const shape mismatch");
    let out = x.value().zip_map(&factor, |a, b| a * b);
    x.graph().push(out, &[x], Box::new(move |g, _| vec![Some(g.zip_map(&factor, |a, b| a * b))]))
}

pub fn tanh<'g, T: Float>(x: &Var<'g, T>) -> Var<'g, T> {
    let y = Arc::new(x.value().map(|v| v.tanh()));
    let yc = Arc::clone(&y);
    let out = (*y).clone();
    x.graph().push(out, &[x], Box::new(move |g, _| vec![Some(g.zip_map(&yc, |gv, yv| gv * (T::one() - yv * yv)))]))
}

pub fn add<'g, T: Float>(a: &Var<'g, T>, b: &Var<'g, T>) -> Var<'g, T> {
    assert_eq!(a.shape(), b.shape(), "add shape mismatch");
    let out = a.value().zip_map(b.value(), |x, y| x + y);
    a.graph().push(out, &[a, b], Box::new(|g, need| vec![need[0].then(|| g.clone()), need[1].then(|| g.clone())]))
}

pub fn mul<'g, T: Float>(a: &Var<'g, T>, b: &Var<'g, T>) -> Var<'g, T> {
    assert_eq!(a.shape(), b.shape(), "mul shape mismatch");
    let (av, bv) = (a.shared_value(), b.shared_value());
    let out = av.zip_map(&bv, |x, y| x * y);
    a.graph().push(
        out,
        &[a, b],
        Box::new(move |g, need| {
            vec![
                need[0].then(|| g.zip_map(&bv, |gv, y| gv * y)),
                need[1].then(|| g.zip_map(&av, |gv, x| gv * x)),
            ]
        }),
    )
}

pub fn add_scalar<'g, T: Float>(x: &Var<'g, T>, s: T) -> Var<'g, T> {
    let out = x.value().map(|v| v + s);
    x.graph().push(out, &[x], Box::new(|g, _| vec![Some(g.clone())]))
}

pub fn scale<'g, T: Float>(x: &Var<'g, T>, s: T) -> Var<'g, T> {
    let out = x.value().scale(s);
    x.graph().push(out, &[x], Box::new(move |g, _| vec![Some(g.scale(s))]))
}

pub fn reshape<'g, T: Float>(x: &Var<'g, T>, shape: &[usize]) -> Var<'g, T> {
    let src_shape = x.shape().to_vec();
    let out = x.value().clone().reshape(shape).expect("reshape");
    x.graph().push(out, &[x], Box::new(move |g, _| vec![Some(g.clone().reshape(&src_shape).unwrap())]))
}

/// Parameter-free per-sample, per-channel standardisation over H×W.
pub fn instance_norm<'g, T: Float>(x: &Var<'g, T>, eps: f64) -> Var<'g, T> {
    let (n, c, h, w) = x.value().dims4();
    let p = h * w;
    let mut y = vec![T::zero(); n * c * p];
    let mut inv = vec![T::zero(); n * c];
    for (plane, (src, dst)) in x.value().data().chunks(p).zip(y.chunks_mut(p)).enumerate() {
        let mean = src.iter().map(|v| v.as_f64()).sum::<f64>() / p as f64;
        let var = src.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / p as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv[plane] = T::from_f64(is);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = T::from_f64((s.as_f64() - mean) * is);
        }
    }
    let y = Arc::new(Tensor::from_vec(&[n, c, h, w], y).unwrap());
    let yc = Arc::clone(&y);
    x.graph().push(
        (*y).clone(),
        &[x],
        Box::new(move |g, _| {
            let mut gx = vec![T::zero(); n * c * p];
            let pn = T::from_f64(p as f64);
            for (plane, ((gp, yp), out)) in
                g.data().chunks(p).zip(yc.data().chunks(p)).zip(gx.chunks_mut(p)).enumerate()
            {
                let sum_g: T = gp.iter().copied().sum();
                let sum_gy: T = gp.iter().zip(yp).map(|(&a, &b)| a * b).sum();
                let k = inv[plane] / pn;
                for ((o, &gv), &yv) in out.iter_mut().zip(gp).zip(yp) {
                    *o = k * (pn * gv - sum_g - yv * sum_gy);
                }
            }
            vec![Some(Tensor::from_vec(&[n, c, h, w], gx).unwrap())]
        }),
    )
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2x<'g, T: Float>(x: &Var<'g, T>) -> Var<'g, T> {
    let (n, c, h, w) = x.value().dims4();
    let out = kernels::upsample2x(x.value().data(), n * c, h, w);
    x.graph().push(
        Tensor::from_vec(&[n, c, 2 * h, 2 * w], out).unwrap(),
        &[x],
        Box::new(move |g, _| {
            let gx = kernels::sum_pool2x(g.data(), n * c, 2 * h, 2 * w);
            vec![Some(Tensor::from_vec(&[n, c, h, w], gx).unwrap())]
        }),
    )
}

/// 2×2 average pooling; spatial dims must be even.
pub fn avg_pool2x<'g, T: Float>(x: &Var<'g, T>) -> Var<'g, T> {
    let (n, c, h, w) = x.value().dims4();
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2x needs even dims, got {h}x{w}");
    let quarter = T::from_f64(0.25);
    let out: Vec<T> = kernels::sum_pool2x(x.value().data(), n * c, h, w).into_iter().map(|v| v * quarter).collect();
    x.graph().push(
        Tensor::from_vec(&[n, c, h / 2, w / 2], out).unwrap(),
        &[x],
        Box::new(move |g, _| {
            let gx: Vec<T> =
                kernels::upsample2x(g.data(), n * c, h / 2, w / 2).into_iter().map(|v| v * quarter).collect();
            vec![Some(Tensor::from_vec(&[n, c, h, w], gx).unwrap())]
        }),
    )
}

/// Sums each channel over space: `[N, C, H, W] → [N, C]`.
pub fn global_sum_pool<'g, T: Float>(x: &Var<'g, T>) -> Var<'g, T> {
    let (n, c, h, w) = x.value().dims4();
    let p = h * w;
    let out: Vec<T> = x.value().data().chunks(p).map(|ch| ch.iter().copied().sum()).collect();
    x.graph().push(
        Tensor::from_vec(&[n, c], out).unwrap(),
        &[x],
        Box::new(move |g, _| {
            let mut gx = Vec::with_capacity(n * c * p);
            for &gv in g.data() {
                gx.extend(std::iter::repeat_n(gv, p));
            }
            vec![Some(Tensor::from_vec(&[n, c, h, w], gx).unwrap())]
        }),
    )
}
