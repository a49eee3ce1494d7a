use thermosynth::data::{generate_synthetic_dataset, Dataset, SyntheticConfig};
use thermosynth::model::{load_bundle, save_bundle, ModelBundle, ModelConfig};
use thermosynth::train::{build_latent_set, train_gan, train_inversion, LatentCodeSet, RunOptions, TrainConfig};

fn setup() -> (tempfile::TempDir, Dataset, TrainConfig) {
    let dir = tempfile::tempdir().unwrap();
    let sc = SyntheticConfig { heatmap_height: 6, heatmap_width: 8, ..Default::default() };
    generate_synthetic_dataset(dir.path(), 8, 4, &sc).unwrap();
    let ds = Dataset::load(dir.path(), 4).unwrap();
    let mut cfg = TrainConfig::desk_scale();
    cfg.gan.batch_size = 4;
    cfg.gan.max_steps = Some(4);
    cfg.inversion.batch_size = 4;
    cfg.inversion.max_steps = Some(3);
    cfg.seed = 4;
    (dir, ds, cfg)
}

#[test]
fn dataset_reload_is_deterministic() {
    let (dir, ds, _) = setup();
    let again = Dataset::load(dir.path(), 4).unwrap();
    for (a, b) in ds.samples.iter().zip(&again.samples) {
        assert_eq!(a.heatmap.values(), b.heatmap.values());
        assert_eq!(a.rgb.values(), b.rgb.values());
    }
    let other = Dataset::load(dir.path(), 5).unwrap();
    assert_ne!(ds.samples[0].heatmap.values(), other.samples[0].heatmap.values());
}

#[test]
fn interrupted_training_resumes_exactly() {
    let (dir, ds, cfg) = setup();
    let model = ModelConfig::small(6, 8);

    let mut full = ModelBundle::init(model.clone(), 4).unwrap();
    let mut full_log = Vec::new();
    train_gan(&ds, &mut full, &cfg, RunOptions { history: Some(&mut full_log), ..Default::default() }).unwrap();

    let mut part = ModelBundle::init(model.clone(), 4).unwrap();
    let mut part_log = Vec::new();
    train_gan(&ds, &mut part, &cfg, RunOptions { history: Some(&mut part_log), stop_at: Some(2), ..Default::default() }).unwrap();
    let ckpt = dir.path().join("ckpt.bundle");
    save_bundle(&part, &ckpt).unwrap();
    let mut resumed = load_bundle(&ckpt, Some(&model)).unwrap();
    train_gan(&ds, &mut resumed, &cfg, RunOptions { history: Some(&mut part_log), ..Default::default() }).unwrap();

    assert_eq!(full_log, part_log);
    assert_eq!(full.to_bytes().unwrap(), resumed.to_bytes().unwrap());
}

#[test]
fn latents_follow_the_inversion_phase() {
    let (dir, ds, cfg) = setup();
    let mut b = ModelBundle::init(ModelConfig::small(6, 8), 4).unwrap();
    assert!(train_inversion(&ds, &mut b, &cfg, RunOptions::default()).is_err());
    train_gan(&ds, &mut b, &cfg, RunOptions::default()).unwrap();
    assert!(build_latent_set(&ds, &b).is_err());
    let records = train_inversion(&ds, &mut b, &cfg, RunOptions::default()).unwrap();
    assert_eq!(records.len(), 3);
    let set = build_latent_set(&ds, &b).unwrap();
    assert_eq!(set.len(), ds.len());
    let path = dir.path().join("latents.json");
    set.save(&path).unwrap();
    let loaded = LatentCodeSet::load(&path).unwrap();
    assert_eq!(loaded.codes.len(), set.codes.len());
    assert_eq!(loaded.codes[3].code, set.codes[3].code);
    assert_eq!(loaded.get(&ds.samples[3].sample_id).unwrap().meta, ds.samples[3].meta);
}
