use std::path::Path;
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermosynth::data::{preprocess_thermal, DatasetConfig, DatasetManifest, Heatmap, ThermalParams};

use crate::error::{Result, ServiceError};

/// Heatmaps feeding the synthesis loop.
pub trait FrameSource: Send {
    /// Next heatmap, or `None` when the stream has ended.
    fn next_frame(&mut self) -> Option<Heatmap>;
    /// Heatmap used for code previews.
    fn reference(&self) -> Heatmap;
}

/// Online preprocessing: the dataset's blur and range without added noise.
pub fn online_thermal_params(cfg: &DatasetConfig) -> ThermalParams {
    ThermalParams { noise_std: 0.0, ..cfg.thermal.clone() }
}

/// Preprocessed thermal frames of a dataset, played back in manifest order.
#[derive(Clone, Debug)]
pub struct ReplaySource {
    frames: Vec<Heatmap>,
    ids: Vec<String>,
    looping: bool,
    pos: usize,
}

impl ReplaySource {
    pub fn new(frames: Vec<Heatmap>, looping: bool) -> Result<Self> {
        if frames.is_empty() {
            return Err(ServiceError::Startup("replay source has no frames".into()));
        }
        let ids = (0..frames.len()).map(|i| i.to_string()).collect();
        Ok(Self { frames, ids, looping, pos: 0 })
    }

    /// Loads and preprocesses every thermal frame listed in a manifest.
    pub fn from_manifest(path: &Path, looping: bool) -> Result<Self> {
        let (manifest, root) = DatasetManifest::load(path)?;
        let params = online_thermal_params(&manifest.config);
        // Noise is off, so the generator is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut frames = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            let raw = manifest.read_raw_thermal(&root, e)?;
            frames.push(preprocess_thermal(&raw, &params, &mut rng)?);
        }
        let ids = manifest.entries.iter().map(|e| e.sample_id.clone()).collect();
        Ok(Self { ids, ..Self::new(frames, looping)? })
    }

    pub fn frames(&self) -> &[Heatmap] {
        &self.frames
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

impl FrameSource for ReplaySource {
    fn next_frame(&mut self) -> Option<Heatmap> {
        if self.pos == self.frames.len() {
            if !self.looping {
                return None;
            }
            self.pos = 0;
        }
        self.pos += 1;
        Some(self.frames[self.pos - 1].clone())
    }

    fn reference(&self) -> Heatmap {
        self.frames[0].clone()
    }
}

/// Stand-in for a sensor driver: frames pushed through a [`LiveFeed`].
pub struct LiveSource {
    rx: mpsc::Receiver<Heatmap>,
    reference: Heatmap,
}

#[derive(Clone)]
pub struct LiveFeed(mpsc::Sender<Heatmap>);

impl LiveFeed {
    /// Returns `false` once the session has gone away.
    pub fn push(&self, h: Heatmap) -> bool {
        self.0.send(h).is_ok()
    }
}

impl LiveSource {
    /// The stream ends when every [`LiveFeed`] is dropped.
    pub fn new(height: usize, width: usize) -> Result<(Self, LiveFeed)> {
        let (tx, rx) = mpsc::channel();
        let reference = Heatmap::new(height, width, vec![-1.0; height * width])?;
        Ok((Self { rx, reference }, LiveFeed(tx)))
    }
}

impl FrameSource for LiveSource {
    fn next_frame(&mut self) -> Option<Heatmap> {
        self.rx.recv().ok()
    }

    fn reference(&self) -> Heatmap {
        self.reference.clone()
    }
}
