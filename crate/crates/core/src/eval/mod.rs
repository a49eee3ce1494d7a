//! FID, disentanglement grids and probes, the privacy-versus-resolution
//! harness and a generator throughput benchmark.

mod bench;
mod features;
mod fid;
mod grid;
mod privacy;
mod probe;

pub use bench::{throughput_bench, BenchReport, BenchRow, Hardware, REFERENCE_FPS_BATCHED, REFERENCE_FPS_SINGLE};
pub use features::{FeatureExtractor, RandomConvEmbedder};
pub use fid::{dataset_fid, fid, sqrtm_psd, GaussianStats};
pub use grid::{disentanglement_grid, heatmap_tile, save_png, DisentanglementGrid};
pub use privacy::{
    privacy_harness, synthetic_privacy_frames, BlobDetector, Detection, Detector, ExternalDetector, LabelledFrame,
    PrivacyConfig, PrivacyDegree, PrivacyReport, PrivacyRow, Resolution,
};
pub use probe::{
    background_color, disentanglement_probe, disentanglement_probe_with, silhouette_centroid_x, LabelledCode,
    ProbeConfig, ProbeOutcome, ProbeReport,
};
