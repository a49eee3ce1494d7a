use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::layers::{act, conv, Layout, Trace};
use crate::nn::{ops, Bound, Graph, ParamStore};
use crate::tensor::Tensor;

/// Maps an image batch `[N, 3, H, W]` to `N` feature vectors of length `dim()`.
pub trait FeatureExtractor {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, images: &Tensor) -> Result<Vec<Vec<f64>>>;
}

const WIDTHS: [usize; 3] = [16, 32, 32];
const CHUNK: usize = 32;

/// Untrained convolutional embedder with fixed random weights.
///
/// Three 3×3 convolutions with leaky activations and two 2× poolings; the
/// feature vector is the per-channel spatial mean and standard deviation of
/// the last layer. Values are comparable only between runs that use the same
/// seed.
pub struct RandomConvEmbedder {
    params: ParamStore,
    seed: u64,
    name: String,
}

impl RandomConvEmbedder {
    pub const DEFAULT_SEED: u64 = 0x5eed_f1d0;

    pub fn new(seed: u64) -> Self {
        let mut l = Layout::default();
        l.conv("c1", 3, WIDTHS[0], 3, true);
        l.conv("c2", WIDTHS[0], WIDTHS[1], 3, true);
        l.conv("c3", WIDTHS[1], WIDTHS[2], 3, true);
        let params = l.init(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { params, seed, name: format!("random-conv-{}-seed{seed}", 2 * WIDTHS[2]) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Default for RandomConvEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SEED)
    }
}

impl FeatureExtractor for RandomConvEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        2 * WIDTHS[2]
    }

    fn embed(&self, images: &Tensor) -> Result<Vec<Vec<f64>>> {
        let (n, c, h, w) = match images.shape() {
            [n, c, h, w] => (*n, *c, *h, *w),
            s => return Err(Error::Shape(format!("expected [N, 3, H, W] images, got {s:?}"))),
        };
        if c != 3 || h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(Error::Dimension(format!("embedder needs 3 channels and sides divisible by 4, got {:?}", images.shape())));
        }
        let per = c * h * w;
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(CHUNK) {
            let m = CHUNK.min(n - start);
            let batch = Tensor::from_vec(&[m, c, h, w], images.data()[start * per..(start + m) * per].to_vec())?;
            let g = Graph::new();
            let p = Bound::new(&g, &self.params);
            let mut off = Trace::Off;
            let x = act(&conv(&p, "c1", &g.leaf(batch), &off), 0.2, &mut off);
            let x = act(&conv(&p, "c2", &ops::avg_pool2x(&x), &off), 0.2, &mut off);
            let x = act(&conv(&p, "c3", &ops::avg_pool2x(&x), &off), 0.2, &mut off);
            let (_, ch, hh, ww) = x.value().dims4();
            let area = (hh * ww) as f64;
            for sample in x.value().data().chunks(ch * hh * ww) {
                let mut f = vec![0.0; 2 * ch];
                for (k, plane) in sample.chunks(hh * ww).enumerate() {
                    let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / area;
                    let var = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / area;
                    f[k] = mean;
                    f[ch + k] = var.sqrt();
                }
                out.push(f);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::fid::dataset_fid;
    use rand::Rng;

    fn images(seed: u64, n: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(&[n, 3, 16, 24], (0..n * 3 * 16 * 24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn embedding_is_deterministic_and_batch_independent() {
        let e = RandomConvEmbedder::default();
        let x = images(0, 40);
        let a = e.embed(&x).unwrap();
        assert_eq!(a, e.embed(&x).unwrap());
        assert_eq!(a.len(), 40);
        assert!(a.iter().all(|f| f.len() == e.dim()));
        let single = e.embed(&Tensor::from_vec(&[1, 3, 16, 24], x.data()[..3 * 16 * 24].to_vec()).unwrap()).unwrap();
        assert!(single[0].iter().zip(&a[0]).all(|(p, q)| (p - q).abs() < 1e-6));
        assert_ne!(a, RandomConvEmbedder::new(1).embed(&x).unwrap());
    }

    #[test]
    fn self_fid_is_zero_and_different_sets_are_not() {
        let e = RandomConvEmbedder::default();
        let x = images(1, 80);
        assert!(dataset_fid(&x, &x, &e).unwrap() < 1e-4);
        let y = x.map(|v| 0.5 * v + 0.3);
        assert!(dataset_fid(&x, &y, &e).unwrap() > 1e-3);
    }

    #[test]
    fn rejects_bad_shapes() {
        let e = RandomConvEmbedder::default();
        assert!(e.embed(&Tensor::zeros(&[1, 1, 16, 16])).is_err());
        assert!(e.embed(&Tensor::zeros(&[1, 3, 15, 16])).is_err());
        assert!(e.embed(&Tensor::zeros(&[3, 16, 16])).is_err());
    }
}
