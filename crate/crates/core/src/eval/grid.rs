use std::path::Path;

use crate::data::{Heatmap, RgbImage};
use crate::error::{Error, Result};
use crate::model::{generate, LatentCode, ModelConfig};
use crate::nn::ParamStore;

/// `k` codes by `n` heatmaps of generated cells plus a header row (the
/// heatmaps) and a header column (the code sources).
#[derive(Clone, Debug)]
pub struct DisentanglementGrid {
    pub rows: usize,
    pub cols: usize,
    pub cell_height: usize,
    pub cell_width: usize,
    /// Row-major generated cells; cell `(i, j)` is `G(code_i, heatmap_j)`.
    pub cells: Vec<RgbImage>,
    /// Composite of `(rows + 1) × (cols + 1)` tiles.
    pub composite: RgbImage,
}

impl DisentanglementGrid {
    pub fn cell(&self, i: usize, j: usize) -> &RgbImage {
        &self.cells[i * self.cols + j]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_png(&self.composite, path)
    }
}

/// Writes an image in `[-1, 1]` as an 8-bit PNG.
pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .ok_or_else(|| Error::Shape("image buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Nearest-neighbour upscale of a heatmap to a grey RGB tile.
pub fn heatmap_tile(h: &Heatmap, height: usize, width: usize) -> RgbImage {
    let mut vals = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            let v = h.values()[(y * h.height() / height) * h.width() + x * h.width() / width];
            vals.extend_from_slice(&[v, v, v]);
        }
    }
    RgbImage::new(height, width, vals).expect("tile dimensions are consistent")
}

/// Builds the grid one cell per generator call, so every cell is bit-identical
/// to a direct [`generate`] call. `sources` (one per code) fill the header
/// column; without them it stays black.
pub fn disentanglement_grid(
    cfg: &ModelConfig,
    generator: &ParamStore,
    codes: &[LatentCode],
    sources: Option<&[RgbImage]>,
    heatmaps: &[Heatmap],
) -> Result<DisentanglementGrid> {
    let (k, n) = (codes.len(), heatmaps.len());
    if k == 0 || n == 0 {
        return Err(Error::Config("grid needs at least one code and one heatmap".into()));
    }
    let (ch, cw) = (cfg.rgb_height(), cfg.rgb_width());
    if let Some(s) = sources {
        if s.len() != k {
            return Err(Error::Config(format!("{} source images for {k} codes", s.len())));
        }
        for img in s {
            cfg.check_image_shape(&[1, 3, img.height(), img.width()])?;
        }
    }
    let mut cells = Vec::with_capacity(k * n);
    for code in codes {
        for h in heatmaps {
            cells.push(generate(cfg, generator, code, h)?);
        }
    }

    let (gh, gw) = ((k + 1) * ch, (n + 1) * cw);
    let mut out = vec![-1.0f32; gh * gw * 3];
    let mut blit = |tile: &RgbImage, r: usize, c: usize| {
        for y in 0..ch {
            let dst = ((r * ch + y) * gw + c * cw) * 3;
            out[dst..dst + cw * 3].copy_from_slice(&tile.values()[y * cw * 3..(y + 1) * cw * 3]);
        }
    };
    for (j, h) in heatmaps.iter().enumerate() {
        blit(&heatmap_tile(h, ch, cw), 0, j + 1);
    }
    for i in 0..k {
        if let Some(s) = sources {
            blit(&s[i], i + 1, 0);
        }
        for j in 0..n {
            blit(&cells[i * n + j], i + 1, j + 1);
        }
    }
    Ok(DisentanglementGrid {
        rows: k,
        cols: n,
        cell_height: ch,
        cell_width: cw,
        cells,
        composite: RgbImage::new(gh, gw, out)?,
    })
}
