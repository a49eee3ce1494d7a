use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermosynth::data::{ArmPose, SampleMeta};
use thermosynth::model::{LatentCode, ModelBundle, ModelConfig};
use thermosynth::train::{LatentCodeSet, LatentEntry, LATENT_SET_VERSION};
use thermosynth_wasm::demo::{heatmap_loss, privacy_view, to_rgba, Studio, DEFAULT_HEATMAP};

fn warm_centroid_x(values: &[f32], width: usize) -> f32 {
    let floor = values.iter().copied().fold(f32::INFINITY, f32::min);
    let (mut sum, mut total) = (0.0, 0.0);
    for (i, &v) in values.iter().enumerate() {
        let w = v - floor;
        sum += w * (i % width) as f32;
        total += w;
    }
    sum / total
}

#[test]
fn rendering_is_deterministic_and_sized_for_a_canvas() {
    let studio = Studio::untrained(5).unwrap();
    let h = studio.scene_heatmap(0.6, 0.35, ArmPose::Down).unwrap();
    let z = studio.code(None, 9).unwrap();
    let a = to_rgba(&studio.render(&h, &z).unwrap());
    let b = to_rgba(&Studio::untrained(5).unwrap().render(&h, &z).unwrap());
    let cfg = studio.config();
    assert_eq!(a.len(), cfg.rgb_height() * cfg.rgb_width() * 4);
    assert!(a.chunks_exact(4).all(|p| p[3] == 255));
    assert_eq!(a, b);
    assert_ne!(a, to_rgba(&studio.render(&h, &studio.code(None, 10).unwrap()).unwrap()));
}

#[test]
fn moving_the_person_moves_the_heat() {
    let studio = Studio::untrained(0).unwrap();
    let w = DEFAULT_HEATMAP.1;
    let left = studio.scene_heatmap(0.35, 0.35, ArmPose::Down).unwrap();
    let right = studio.scene_heatmap(1.0, 0.35, ArmPose::Down).unwrap();
    assert!(warm_centroid_x(left.values(), w) + 3.0 < warm_centroid_x(right.values(), w));
}

#[test]
fn loaded_bundle_and_codes_drive_the_output() {
    let bundle = ModelBundle::init(ModelConfig::small(6, 8), 3).unwrap();
    let mut studio = Studio::untrained(0).unwrap();
    studio.load_bundle(&bundle.to_bytes().unwrap()).unwrap();
    assert_eq!((studio.config().heatmap_height, studio.config().heatmap_width), (6, 8));
    assert!(studio.code(Some(0), 0).is_err());

    let code = LatentCode::sample(&mut ChaCha8Rng::seed_from_u64(1));
    let set = LatentCodeSet {
        format_version: LATENT_SET_VERSION,
        codes: vec![LatentEntry { id: "a".into(), code: code.clone(), meta: SampleMeta::default() }],
    };
    assert_eq!(studio.load_latents(&serde_json::to_string(&set).unwrap()).unwrap(), 1);
    assert_eq!(studio.code_ids(), ["a"]);
    assert_eq!(studio.code(Some(0), 0).unwrap(), code);
    assert!(studio.load_bundle(b"not a bundle").is_err());
}

#[test]
fn loss_ignores_masked_cells_and_the_tolerance_band() {
    let h = [0.0, 0.5, -1.0, 1.0];
    let h_hat = [0.05, 0.0, 1.0, 1.0];
    let ones = [1.0; 4];
    assert!((heatmap_loss(&h, &h_hat, &ones, 2, 2, 0.1).unwrap() - (0.4 + 1.9)).abs() < 1e-6);
    assert!((heatmap_loss(&h, &h_hat, &[1.0, 1.0, 0.0, 1.0], 2, 2, 0.1).unwrap() - 0.4).abs() < 1e-6);
    assert_eq!(heatmap_loss(&h, &h_hat, &ones, 2, 2, 2.0).unwrap(), 0.0);
    assert!(heatmap_loss(&h, &h_hat[..3], &ones, 2, 2, 0.1).is_err());
}

#[test]
fn coarse_frames_hide_the_person() {
    let hits = |w, h| (0..40).filter(|&s| privacy_view(s, w, h).unwrap().hit).count();
    let native = hits(160, 120);
    assert!(native >= 30, "native hits {native}");
    assert!(hits(8, 5) < native / 2);
    let v = privacy_view(0, 16, 12).unwrap();
    assert_eq!(v.frame.len(), 16 * 12);
    assert!(privacy_view(0, 7, 5).is_err());
}
