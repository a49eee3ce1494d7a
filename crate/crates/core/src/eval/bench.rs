use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{generate_batch, LatentCode, ModelConfig};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

/// Published single-input and batched frame rates, kept for comparison only.
pub const REFERENCE_FPS_SINGLE: f64 = 11.7;
pub const REFERENCE_FPS_BATCHED: f64 = 389.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub batch: usize,
    pub iterations: usize,
    pub seconds_per_batch: f64,
    /// Generated images per second.
    pub fps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hardware {
    pub arch: String,
    pub os: String,
    pub threads: usize,
}

impl Hardware {
    pub fn detect() -> Self {
        Self {
            arch: std::env::consts::ARCH.into(),
            os: std::env::consts::OS.into(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub hardware: Hardware,
    pub heatmap: (usize, usize),
    pub rows: Vec<BenchRow>,
    pub reference_fps_single: f64,
    pub reference_fps_batched: f64,
}

/// Times the generator at each batch size after `warmup` untimed passes.
pub fn throughput_bench(
    cfg: &ModelConfig,
    generator: &ParamStore,
    batch_sizes: &[usize],
    warmup: usize,
    iterations: usize,
) -> Result<BenchReport> {
    if batch_sizes.is_empty() || batch_sizes.contains(&0) || iterations == 0 {
        return Err(Error::Config("bench needs positive batch sizes and iterations".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cells = Uniform::new(-1.0f32, 1.0).expect("valid range");
    let mut rows = Vec::with_capacity(batch_sizes.len());
    for &b in batch_sizes {
        let z = LatentCode::stack(&(0..b).map(|_| LatentCode::sample(&mut rng)).collect::<Vec<_>>());
        let n = b * cfg.heatmap_height * cfg.heatmap_width;
        let h = Tensor::from_vec(&[b, 1, cfg.heatmap_height, cfg.heatmap_width], (0..n).map(|_| cells.sample(&mut rng)).collect())?;
        for _ in 0..warmup {
            generate_batch(cfg, generator, &z, &h)?;
        }
        let t = Instant::now();
        for _ in 0..iterations {
            generate_batch(cfg, generator, &z, &h)?;
        }
        let per = t.elapsed().as_secs_f64() / iterations as f64;
        rows.push(BenchRow { batch: b, iterations, seconds_per_batch: per, fps: b as f64 / per });
    }
    Ok(BenchReport {
        hardware: Hardware::detect(),
        heatmap: (cfg.heatmap_height, cfg.heatmap_width),
        rows,
        reference_fps_single: REFERENCE_FPS_SINGLE,
        reference_fps_batched: REFERENCE_FPS_BATCHED,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generator_layout;

    #[test]
    fn reports_positive_rates() {
        let cfg = ModelConfig::small(2, 3);
        let g = generator_layout(&cfg).init(&mut ChaCha8Rng::seed_from_u64(0));
        let r = throughput_bench(&cfg, &g, &[1, 4], 1, 2).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|row| row.fps > 0.0 && row.seconds_per_batch > 0.0));
        assert_eq!(r.reference_fps_single, 11.7);
        assert!(r.hardware.threads >= 1);
        assert!(throughput_bench(&cfg, &g, &[0], 0, 1).is_err());
    }
}
