use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use thermosynth::eval::{dataset_fid, fid, GaussianStats, RandomConvEmbedder};
use thermosynth::Tensor;

fn stats(mean: Vec<f64>, factor: Vec<f64>, d: usize) -> GaussianStats {
    let a = DMatrix::from_vec(d, d, factor);
    GaussianStats::new(DVector::from_vec(mean), &a * a.transpose() + DMatrix::identity(d, d) * 1e-3).unwrap()
}

fn stats_strategy(d: usize) -> impl Strategy<Value = GaussianStats> {
    (prop::collection::vec(-2.0f64..2.0, d), prop::collection::vec(-1.0f64..1.0, d * d)).prop_map(move |(m, f)| stats(m, f, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_non_negative(a in stats_strategy(5), b in stats_strategy(5)) {
        let ab = fid(&a, &b).unwrap();
        let ba = fid(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-6);
        prop_assert!(ab > -1e-9);
    }

    #[test]
    fn identical_distributions_score_zero(a in stats_strategy(6)) {
        prop_assert!(fid(&a, &a).unwrap().abs() < 1e-4);
    }

    #[test]
    fn mean_shift_adds_its_squared_norm(a in stats_strategy(4), shift in prop::collection::vec(-1.0f64..1.0, 4)) {
        let s = DVector::from_vec(shift);
        let b = GaussianStats::new(&a.mean + &s, a.cov.clone()).unwrap();
        prop_assert!((fid(&a, &b).unwrap() - s.norm_squared()).abs() < 1e-6);
    }
}

#[test]
fn image_sets_through_the_embedder() {
    let n = 12;
    let img = |k: usize| -> Tensor {
        Tensor::from_vec(&[n, 3, 16, 16], (0..n * 3 * 256).map(|i| (((i * 7 + k * 13) % 17) as f32 / 8.5) - 1.0).collect()).unwrap()
    };
    let e = RandomConvEmbedder::default();
    assert!(dataset_fid(&img(0), &img(0), &e).unwrap().abs() < 1e-4);
    let d = dataset_fid(&img(0), &img(5), &e).unwrap();
    assert!((d - dataset_fid(&img(5), &img(0), &e).unwrap()).abs() < 1e-6);
}
