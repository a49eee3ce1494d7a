//! Slice-level kernels shared by the differentiable ops.

use crate::tensor::Float;

/// Unfolds one CHW image into a `(C·k·k) × (H·W)` patch matrix, zero padded so
/// the output keeps the input's spatial size.
pub fn im2col<T: Float>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let (x0, x1) = valid_range(w, dx);
                for y in 0..h {
                    let drow = &mut dst[y * w..(y + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    drow[..x0].fill(T::zero());
                    drow[x1..].fill(T::zero());
                    let s0 = (x0 as isize + dx) as usize;
                    drow[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
pub fn col2im<T: Float>(col: &[T], c: usize, h: usize, w: usize, k: usize, x: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let (x0, x1) = valid_range(w, dx);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    for (d, &s) in dst.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Output columns `[x0, x1)` whose shifted source column `x + dx` is in bounds.
fn valid_range(w: usize, dx: isize) -> (usize, usize) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
    (x0.min(w), x1)
}

pub fn upsample2x<T: Float>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
            let drow = &mut dst[y * ow..(y + 1) * ow];
            for (xo, d) in drow.iter_mut().enumerate() {
                *d = srow[xo / 2];
            }
        }
    }
    out
}

/// Sums each 2×2 block; `upsample2x`'s adjoint.
pub fn sum_pool2x<T: Float>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..h {
            let srow = &src[y * w..(y + 1) * w];
            let drow = &mut dst[(y / 2) * ow..(y / 2 + 1) * ow];
            for (xi, &s) in srow.iter().enumerate() {
                drow[xi / 2] += s;
            }
        }
    }
    out
}
