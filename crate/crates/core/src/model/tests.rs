use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::layers::{spade, Trace};
use super::*;
use crate::nn::{ops, Bound, Graph, ParamStore, Var};

fn tiny(h: usize, w: usize) -> ModelConfig {
    ModelConfig {
        heatmap_height: h,
        heatmap_width: w,
        gen_channels: [4, 4, 3, 3],
        sem_channels: [3, 3, 3, 3],
        disc_channels: [3, 4, 4, 4],
        enc_channels: [3, 4, 4, 4],
        negative_slope: 0.2,
    }
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()).unwrap()
}

fn random_heatmaps(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_vec(&[n, 1, h, w], (0..n * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn spade_with_zero_modulation_is_plain_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    for part in ["gamma", "beta"] {
        store.insert(format!("s.{part}.w"), Tensor::zeros(&[2, 3, 3, 3]));
        store.insert(format!("s.{part}.b"), Tensor::zeros(&[2]));
    }
    let g = Graph::new();
    let p = Bound::new(&g, &store);
    let x = g.leaf(randn(&mut rng, &[2, 2, 4, 5]));
    let sem = g.leaf(randn(&mut rng, &[2, 3, 4, 5]));
    let y = spade(&p, "s", &x, &sem);
    let n = ops::instance_norm(&x, 1e-5);
    assert_eq!(y.shape(), x.shape());
    assert!(y.value().max_abs_diff(n.value()) < 1e-6);
}

#[test]
fn spade_on_constant_feature_returns_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    for part in ["gamma", "beta"] {
        store.insert(format!("s.{part}.w"), randn(&mut rng, &[2, 3, 3, 3]));
        store.insert(format!("s.{part}.b"), randn(&mut rng, &[2]));
    }
    let g = Graph::new();
    let p = Bound::new(&g, &store);
    let x = g.leaf(Tensor::full(&[1, 2, 4, 4], 3.5));
    let sem = g.leaf(randn(&mut rng, &[1, 3, 4, 4]));
    let y = spade(&p, "s", &x, &sem);
    let beta = ops::conv2d(&sem, p.var("s.beta.w"), Some(p.var("s.beta.b")));
    assert!(y.value().max_abs_diff(beta.value()) < 1e-5);
}

#[test]
#[should_panic(expected = "spatial mismatch")]
fn spade_rejects_spatial_mismatch() {
    let mut store = ParamStore::<f32>::new();
    for part in ["gamma", "beta"] {
        store.insert(format!("s.{part}.w"), Tensor::zeros(&[2, 1, 3, 3]));
        store.insert(format!("s.{part}.b"), Tensor::zeros(&[2]));
    }
    let g = Graph::new();
    let p = Bound::new(&g, &store);
    let _ = spade(&p, "s", &g.leaf(Tensor::zeros(&[1, 2, 4, 4])), &g.leaf(Tensor::zeros(&[1, 1, 2, 2])));
}

fn check_shapes(cfg: ModelConfig) {
    let bundle = ModelBundle::init(cfg.clone(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 2;
    let z = randn(&mut rng, &[n, LATENT_DIM]);
    let h = random_heatmaps(&mut rng, n, cfg.heatmap_height, cfg.heatmap_width);
    let x = generate_batch(&cfg, &bundle.generator, &z, &h).unwrap();
    assert_eq!(x.shape(), [n, 3, 8 * cfg.heatmap_height, 8 * cfg.heatmap_width]);
    let peak = x.data().iter().fold(0f32, |m, v| m.max(v.abs()));
    assert!(peak < 1.0, "tanh output reached {peak}");

    let d = discriminate(&cfg, &bundle.discriminator, &x).unwrap();
    assert_eq!(d.scores.len(), n);
    assert_eq!(d.recon.shape(), [n, 1, cfg.heatmap_height, cfg.heatmap_width]);

    let codes = invert(&cfg, &bundle.encoder, &x).unwrap();
    assert_eq!(codes.len(), n);
    assert!(codes.iter().all(|c| c.values().len() == LATENT_DIM));
}

#[test]
fn output_shapes_follow_heatmap_size() {
    check_shapes(ModelConfig::small(12, 16));
    check_shapes(ModelConfig::small(6, 8));
    check_shapes(tiny(3, 5));
}

#[test]
fn default_config_generates_96_by_128() {
    let cfg = ModelConfig::default();
    let bundle = ModelBundle::init(cfg.clone(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = Heatmap::new(12, 16, (0..192).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let img = generate(&cfg, &bundle.generator, &LatentCode::sample(&mut rng), &h).unwrap();
    assert_eq!((img.height(), img.width()), (96, 128));
}

#[test]
fn networks_are_deterministic_and_batch_independent() {
    let cfg = ModelConfig::small(6, 8);
    let b = ModelBundle::init(cfg.clone(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let z = randn(&mut rng, &[3, LATENT_DIM]);
    let h = random_heatmaps(&mut rng, 3, 6, 8);
    let x1 = generate_batch(&cfg, &b.generator, &z, &h).unwrap();
    let x2 = generate_batch(&cfg, &b.generator, &z, &h).unwrap();
    assert_eq!(x1, x2);

    // Each sample of a batch equals its batch-of-one result.
    let single = generate_batch(&cfg, &b.generator, &z.select(1).reshape(&[1, LATENT_DIM]).unwrap(), &h.select(1).reshape(&[1, 1, 6, 8]).unwrap()).unwrap();
    assert!(single.data().iter().zip(&x1.select(1).data().to_vec()).all(|(a, b)| (a - b).abs() < 1e-5));

    let d1 = discriminate(&cfg, &b.discriminator, &x1).unwrap();
    let d2 = discriminate(&cfg, &b.discriminator, &x1).unwrap();
    assert_eq!(d1.scores, d2.scores);
    assert_eq!(d1.recon, d2.recon);
    assert_eq!(invert(&cfg, &b.encoder, &x1).unwrap(), invert(&cfg, &b.encoder, &x1).unwrap());
}

#[test]
fn every_parameter_takes_part_in_the_forward_pass() {
    let cfg = tiny(2, 3);
    let b = ModelBundle::init(cfg.clone(), 7).unwrap();
    let g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let pg = Bound::new(&g, &b.generator);
    let x = generator_forward(&cfg, &pg, &g.leaf(randn(&mut rng, &[1, LATENT_DIM])), &g.leaf(random_heatmaps(&mut rng, 1, 2, 3))).unwrap();
    assert!(pg.unused().is_empty(), "{:?}", pg.unused());

    let pd = Bound::new(&g, &b.discriminator);
    discriminator_forward(&cfg, &pd, &x, &mut Trace::Off).unwrap();
    assert!(pd.unused().is_empty(), "{:?}", pd.unused());

    let pi = Bound::new(&g, &b.encoder);
    encoder_forward(&cfg, &pi, &x).unwrap();
    assert!(pi.unused().is_empty(), "{:?}", pi.unused());
}

#[test]
fn wrong_input_sizes_are_rejected() {
    let cfg = ModelConfig::small(6, 8);
    let b = ModelBundle::init(cfg.clone(), 9).unwrap();
    let z = Tensor::zeros(&[1, LATENT_DIM]);
    assert!(matches!(generate_batch(&cfg, &b.generator, &z, &Tensor::zeros(&[1, 1, 12, 16])), Err(Error::Dimension(_))));
    assert!(matches!(generate_batch(&cfg, &b.generator, &Tensor::zeros(&[1, 255]), &Tensor::zeros(&[1, 1, 6, 8])), Err(Error::Dimension(_))));
    assert!(matches!(discriminate(&cfg, &b.discriminator, &Tensor::zeros(&[1, 3, 96, 128])), Err(Error::Dimension(_))));
    assert!(matches!(invert(&cfg, &b.encoder, &Tensor::zeros(&[1, 3, 48, 63])), Err(Error::Dimension(_))));
}

#[test]
fn latent_code_enforces_length_and_finiteness() {
    assert!(LatentCode::new(vec![0.0; 256]).is_ok());
    assert!(LatentCode::new(vec![0.0; 255]).is_err());
    let mut v = vec![0.0; 256];
    v[3] = f32::NAN;
    assert!(LatentCode::new(v).is_err());
    let json = serde_json::to_string(&LatentCode::new(vec![0.5; 256]).unwrap()).unwrap();
    assert!(serde_json::from_str::<LatentCode>(&json).is_ok());
    assert!(serde_json::from_str::<LatentCode>("[1.0, 2.0]").is_err());
}

/// Scalar objective `Σ r ⊙ G(z, h)` with a fixed random weighting `r`.
fn weighted_output<'g>(cfg: &ModelConfig, p: &Bound<'g, f64>, z: &Var<'g, f64>, h: &Var<'g, f64>, r: &Var<'g, f64>) -> Var<'g, f64> {
    let x = generator_forward(cfg, p, z, h).unwrap();
    let n = x.value().numel();
    ops::linear(&ops::reshape(&ops::mul(&x, r), &[1, n]), &z.graph().leaf(Tensor::full(&[1, n], 1.0)), None)
}

#[test]
fn generator_gradient_matches_finite_differences() {
    let cfg = tiny(2, 2);
    let params: ParamStore<f64> = ModelBundle::init(cfg.clone(), 10).unwrap().generator.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z0: Tensor<f64> = randn(&mut rng, &[1, LATENT_DIM]).cast();
    let h0: Tensor<f64> = random_heatmaps(&mut rng, 1, 2, 2).cast();
    let r0: Tensor<f64> = randn(&mut rng, &[1, 3, 16, 16]).cast();

    let eval = |z: &Tensor<f64>, params: &ParamStore<f64>| {
        let g = Graph::new();
        let p = Bound::new(&g, params);
        let out = weighted_output(&cfg, &p, &g.leaf(z.clone()), &g.leaf(h0.clone()), &g.leaf(r0.clone()));
        out.value().data()[0]
    };

    let g = Graph::new();
    let p = Bound::new(&g, &params);
    let z = g.leaf(z0.clone());
    let out = weighted_output(&cfg, &p, &z, &g.leaf(h0.clone()), &g.leaf(r0.clone()));
    let seed = Tensor::full(&[1, 1], 1.0);
    let grad_z = g.backward(&[(&out, seed.clone())], &[&z]).remove(0);
    let grad_p = p.gradients(&[(&out, seed)]);

    let eps = 1e-6;
    let rel = |a: f64, b: f64| (a - b).abs() / (a.abs().max(b.abs()).max(1e-8));
    for i in (0..LATENT_DIM).step_by(17) {
        let (mut zp, mut zm) = (z0.clone(), z0.clone());
        zp.data_mut()[i] += eps;
        zm.data_mut()[i] -= eps;
        let fd = (eval(&zp, &params) - eval(&zm, &params)) / (2.0 * eps);
        assert!(rel(grad_z.data()[i], fd) < 1e-3, "z[{i}]: {} vs {fd}", grad_z.data()[i]);
    }
    for name in ["fc.w", "sem2.conv1.w", "up1.spade1.gamma.w", "up2.conv2.b", "up3.skip.w", "out.w"] {
        for k in [0usize, 2] {
            let perturbed = |d: f64| {
                let mut q = params.clone();
                q.get_mut(name).unwrap().data_mut()[k] += d;
                eval(&z0, &q)
            };
            let fd = (perturbed(eps) - perturbed(-eps)) / (2.0 * eps);
            let an = grad_p.get(name).unwrap().data()[k];
            assert!(rel(an, fd) < 1e-3 || (an - fd).abs() < 1e-7, "{name}[{k}]: {an} vs {fd}");
        }
    }
}

#[test]
fn replay_reproduces_the_input_jacobian_of_the_score() {
    // Piecewise linearity of D: replaying the recorded pass on a tangent `v`
    // gives ⟨∇ₓ s, v⟩ per sample.
    let cfg = tiny(2, 2);
    let params: ParamStore<f64> = ModelBundle::init(cfg.clone(), 12).unwrap().discriminator.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x0: Tensor<f64> = randn(&mut rng, &[2, 3, 16, 16]).cast();
    let v: Tensor<f64> = randn(&mut rng, &[2, 3, 16, 16]).cast();

    let g = Graph::new();
    let p = Bound::new(&g, &params);
    let x = g.leaf(x0.clone());
    let mut trace = Trace::Record(Vec::new());
    let out = discriminator_forward(&cfg, &p, &x, &mut trace).unwrap();
    let grad = g.backward(&[(&out.score, Tensor::full(&[2, 1], 1.0))], &[&x]).remove(0);
    let mut replay = Trace::replay(trace.into_slopes());
    let jvp = discriminator_forward(&cfg, &p, &g.leaf(v.clone()), &mut replay).unwrap();
    for i in 0..2 {
        let expected: f64 = grad.select(i).data().iter().zip(v.select(i).data()).map(|(a, b)| a * b).sum();
        assert!((jvp.score.value().data()[i] - expected).abs() < 1e-9 * (1.0 + expected.abs()));
    }
}

#[test]
fn bundle_round_trip_is_byte_identical() {
    let cfg = tiny(2, 3);
    let mut b = ModelBundle::init(cfg.clone(), 14).unwrap();
    b.ema_generator = b.ema_generator.zeros_like();
    b.extra.insert("adam_m/g".into(), b.generator.zeros_like());
    b.meta = serde_json::json!({"step": 7});
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bundle");
    save_bundle(&b, &path).unwrap();
    let loaded = load_bundle(&path, Some(&cfg)).unwrap();
    assert_eq!(loaded, b);
    assert_eq!(loaded.ema_generator, b.ema_generator);
    assert_eq!(loaded.ema_encoder, b.ema_encoder);
    let path2 = dir.path().join("m2.bundle");
    save_bundle(&loaded, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn bundle_load_rejects_mismatches() {
    let cfg = tiny(2, 3);
    let b = ModelBundle::init(cfg.clone(), 15).unwrap();
    let bytes = b.to_bytes().unwrap();
    let other = tiny(3, 3);
    assert!(matches!(ModelBundle::from_bytes(&bytes, Some(&other)), Err(Error::Config(_))));

    let mut bad = bytes.clone();
    bad[8] = 9;
    assert!(matches!(ModelBundle::from_bytes(&bad, None), Err(Error::Format(_))));
    assert!(matches!(ModelBundle::from_bytes(&bytes[..bytes.len() - 4], None), Err(Error::Format(_))));
    assert!(matches!(ModelBundle::from_bytes(b"not a bundle at all!", None), Err(Error::Format(_))));

    let mut wrong = b.clone();
    wrong.generator = ModelBundle::init(tiny(2, 4), 0).unwrap().generator;
    let bytes = wrong.to_bytes().unwrap();
    assert!(matches!(ModelBundle::from_bytes(&bytes, None), Err(Error::Shape(_))));
}
