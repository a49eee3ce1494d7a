use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loops::PhaseProgress;
use super::Phase;
use crate::data::{Dataset, SampleMeta};
use crate::error::{Error, Result};
use crate::model::{generate_batch, invert, stack_heatmaps, stack_images, LatentCode, ModelBundle};

pub const LATENT_SET_VERSION: u32 = 1;

const CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentEntry {
    pub id: String,
    pub code: LatentCode,
    pub meta: SampleMeta,
}

/// Inverted codes of a dataset, one per sample, in dataset order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentCodeSet {
    pub format_version: u32,
    pub codes: Vec<LatentEntry>,
}

impl LatentCodeSet {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LatentEntry> {
        self.codes.iter().find(|e| e.id == id)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        if set.format_version != LATENT_SET_VERSION {
            return Err(Error::Format(format!("unsupported latent set version {}", set.format_version)));
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Inverts every sample with the EMA encoder.
pub fn build_latent_set(dataset: &Dataset, bundle: &ModelBundle) -> Result<LatentCodeSet> {
    if PhaseProgress::read(bundle, Phase::Inversion)?.step == 0 {
        return Err(Error::Config("bundle has no trained inversion encoder; run the inversion phase first".into()));
    }
    let mut codes = Vec::with_capacity(dataset.len());
    for chunk in dataset.samples.chunks(CHUNK) {
        let x = stack_images(&chunk.iter().map(|s| &s.rgb).collect::<Vec<_>>())?;
        let z = invert(&bundle.config, &bundle.ema_encoder, &x)?;
        codes.extend(chunk.iter().zip(z).map(|(s, code)| LatentEntry { id: s.sample_id.clone(), code, meta: s.meta.clone() }));
    }
    Ok(LatentCodeSet { format_version: LATENT_SET_VERSION, codes })
}

/// Mean of `|x − G_ema(I_ema(x), h_x)|` over all pixels of the dataset.
pub fn mean_reconstruction_l1(dataset: &Dataset, bundle: &ModelBundle) -> Result<f64> {
    let cfg = &bundle.config;
    let (mut total, mut count) = (0.0, 0usize);
    for chunk in dataset.samples.chunks(CHUNK) {
        let x = stack_images(&chunk.iter().map(|s| &s.rgb).collect::<Vec<_>>())?;
        let h = stack_heatmaps(&chunk.iter().map(|s| &s.heatmap).collect::<Vec<_>>())?;
        let z = invert(cfg, &bundle.ema_encoder, &x)?;
        let x_rec = generate_batch(cfg, &bundle.ema_generator, &LatentCode::stack(&z), &h)?;
        total += x.data().iter().zip(x_rec.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>();
        count += x.numel();
    }
    Ok(total / count.max(1) as f64)
}
