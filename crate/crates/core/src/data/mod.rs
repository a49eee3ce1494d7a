//! Paired thermal/RGB data: containers, preprocessing, on-disk format and a
//! synthetic scene generator.

mod manifest;
mod preprocess;
mod synthetic;
mod types;

pub use manifest::{
    manifest_path, read_f32, shuffled_batches, write_f32, Dataset, DatasetConfig, DatasetManifest, DatasetReader,
    ManifestEntry, TensorRef, MANIFEST_FILE, MANIFEST_VERSION, NATIVE_FPS,
};
pub use preprocess::{
    default_sigma, denormalize, gaussian_blur, gaussian_kernel, normalize, pixel_average, preprocess_rgb,
    preprocess_thermal, resize_mask, ThermalParams, MASK_THRESHOLD, RGB_RANGE,
};
pub use synthetic::{
    generate_synthetic_dataset, ArmPose, Region, Scene, SyntheticConfig, BACKGROUND_COLORS, BACKGROUND_TEMP,
    CLOTHING_COLORS, HEAD_TEMP, PERSON_COLORS, THERMAL_RANGE, TORSO_TEMP,
};
pub use types::{
    Heatmap, HeatmapMask, PairedSample, PersonMask, RawRgb, RawThermalFrame, RgbImage, SampleMeta, UPSCALE,
};
