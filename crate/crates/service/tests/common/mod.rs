#![allow(dead_code)]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermosynth::data::{generate_synthetic_dataset, SampleMeta, SyntheticConfig};
use thermosynth::model::{LatentCode, ModelBundle, ModelConfig};
use thermosynth::train::{LatentCodeSet, LatentEntry, LATENT_SET_VERSION};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub bundle: ModelBundle,
    pub codes: LatentCodeSet,
}

impl Fixture {
    pub fn new(frames: usize, codes: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let sc = SyntheticConfig { heatmap_height: 6, heatmap_width: 8, ..Default::default() };
        generate_synthetic_dataset(&dir.path().join("data"), frames, 11, &sc).unwrap();
        let bundle = ModelBundle::init(ModelConfig::small(6, 8), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let codes = (0..codes)
            .map(|i| LatentEntry {
                id: format!("code-{i}"),
                code: LatentCode::sample(&mut rng),
                meta: SampleMeta { person_id: 0, clothing: i as u32 % 3, environment: i as u32 % 3, extra: Default::default() },
            })
            .collect();
        Self { dir, bundle, codes: LatentCodeSet { format_version: LATENT_SET_VERSION, codes } }
    }

    pub fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }
}
