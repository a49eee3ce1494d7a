use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermosynth::losses::masked_hinge_l1;
use thermosynth::Tensor;

fn brute_force(h: &[f32], h_hat: &[f32], m: &[f32], eps: f64, batch: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..h.len() {
        let d = (h[i] as f64 - h_hat[i] as f64).abs();
        total += m[i] as f64 * (d - eps).max(0.0);
    }
    total / batch as f64
}

fn tensor(shape: &[usize], v: Vec<f32>) -> Tensor {
    Tensor::from_vec(shape, v).unwrap()
}

#[test]
fn matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = [1, 1, 12, 16];
    for _ in 0..200 {
        let n = 12 * 16;
        let h: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f32> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let m: Vec<f32> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let eps = rng.random_range(0.0..0.5);
        let got = masked_hinge_l1(&tensor(&shape, h.clone()), &tensor(&shape, r.clone()), &tensor(&shape, m.clone()), eps).unwrap();
        assert!((got - brute_force(&h, &r, &m, eps, 1)).abs() < 1e-6);
    }
}

#[test]
fn two_by_two_example() {
    let s = [1, 1, 2, 2];
    let h = tensor(&s, vec![0.0, 0.5, -0.5, 1.0]);
    let r = tensor(&s, vec![0.6, 0.5, 0.5, -1.0]);
    let m = tensor(&s, vec![1.0, 1.0, 0.0, 0.0]);
    assert!((masked_hinge_l1(&h, &r, &m, 0.1).unwrap() - 0.5).abs() < 1e-6);
}

fn cells() -> impl Strategy<Value = (Vec<f32>, Vec<f32>, Vec<bool>, Vec<f32>)> {
    let n = 6 * 8;
    (
        prop::collection::vec(-1.0f32..1.0, n),
        prop::collection::vec(-2.0f32..2.0, n),
        prop::collection::vec(any::<bool>(), n),
        prop::collection::vec(-1e3f32..1e3, n),
    )
}

proptest! {
    #[test]
    fn masked_cells_never_matter((h, r, mask, noise) in cells(), eps in 0.0f64..0.3) {
        let s = [1, 1, 6, 8];
        let m: Vec<f32> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let perturbed: Vec<f32> = r.iter().zip(&mask).zip(&noise).map(|((&v, &b), &n)| if b { v } else { n }).collect();
        let a = masked_hinge_l1(&tensor(&s, h.clone()), &tensor(&s, r), &tensor(&s, m.clone()), eps).unwrap();
        let b = masked_hinge_l1(&tensor(&s, h), &tensor(&s, perturbed), &tensor(&s, m), eps).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn loss_is_non_negative_and_zero_inside_the_band((h, _, mask, _) in cells(), eps in 0.01f64..0.3) {
        let s = [1, 1, 6, 8];
        let m: Vec<f32> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let near: Vec<f32> = h.iter().map(|&v| v + (eps as f32) * 0.5).collect();
        prop_assert_eq!(masked_hinge_l1(&tensor(&s, h.clone()), &tensor(&s, near), &tensor(&s, m.clone()), eps).unwrap(), 0.0);
        let far: Vec<f32> = h.iter().map(|&v| v + 1.0).collect();
        prop_assert!(masked_hinge_l1(&tensor(&s, h), &tensor(&s, far), &tensor(&s, m), eps).unwrap() >= 0.0);
    }
}
