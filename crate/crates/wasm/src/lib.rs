//! WebAssembly bindings for the static demo page in `www/`.

pub mod demo;

use thermosynth::data::{ArmPose, Heatmap};
use wasm_bindgen::prelude::*;

use crate::demo::Studio;

fn arm_pose(arm: u8) -> Result<ArmPose, JsError> {
    match arm {
        0 => Ok(ArmPose::Down),
        1 => Ok(ArmPose::LeftUp),
        2 => Ok(ArmPose::RightUp),
        _ => Err(JsError::new(&format!("arm pose {arm} is not 0, 1 or 2"))),
    }
}

#[wasm_bindgen]
pub struct Demo {
    studio: Studio,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Ok(Demo { studio: Studio::untrained(seed as u64)? })
    }

    /// Replaces the networks with a bundle written by `thermosynth train-*`.
    #[wasm_bindgen(js_name = loadBundle)]
    pub fn load_bundle(&mut self, bytes: &[u8]) -> Result<(), JsError> {
        Ok(self.studio.load_bundle(bytes)?)
    }

    /// Returns the number of codes loaded from a `latents.json`.
    #[wasm_bindgen(js_name = loadLatents)]
    pub fn load_latents(&mut self, json: &str) -> Result<usize, JsError> {
        Ok(self.studio.load_latents(json)?)
    }

    #[wasm_bindgen(js_name = codeIds)]
    pub fn code_ids(&self) -> Vec<String> {
        self.studio.code_ids()
    }

    #[wasm_bindgen(getter, js_name = heatmapHeight)]
    pub fn heatmap_height(&self) -> usize {
        self.studio.config().heatmap_height
    }

    #[wasm_bindgen(getter, js_name = heatmapWidth)]
    pub fn heatmap_width(&self) -> usize {
        self.studio.config().heatmap_width
    }

    #[wasm_bindgen(getter, js_name = imageHeight)]
    pub fn image_height(&self) -> usize {
        self.studio.config().rgb_height()
    }

    #[wasm_bindgen(getter, js_name = imageWidth)]
    pub fn image_width(&self) -> usize {
        self.studio.config().rgb_width()
    }

    /// Normalised heatmap (values in [-1, 1]) of a person at `center_u`.
    #[wasm_bindgen(js_name = sceneHeatmap)]
    pub fn scene_heatmap(&self, center_u: f32, head_v: f32, arm: u8) -> Result<Vec<f32>, JsError> {
        Ok(self.studio.scene_heatmap(center_u, head_v, arm_pose(arm)?)?.values().to_vec())
    }

    /// RGBA pixels of the generator output. A negative `code` draws a random
    /// code from `seed` instead of using a loaded one.
    pub fn render(&self, heatmap: Vec<f32>, code: i32, seed: u32) -> Result<Vec<u8>, JsError> {
        let cfg = self.studio.config();
        let h = Heatmap::new(cfg.heatmap_height, cfg.heatmap_width, heatmap)?;
        let z = self.studio.code(usize::try_from(code).ok(), seed as u64)?;
        Ok(demo::to_rgba(&self.studio.render(&h, &z)?))
    }
}

/// Masked hinge-L1 reconstruction loss between two heatmaps.
#[wasm_bindgen(js_name = heatmapLoss)]
pub fn heatmap_loss(h: &[f32], h_hat: &[f32], mask: &[f32], height: usize, width: usize, epsilon: f64) -> Result<f64, JsError> {
    Ok(demo::heatmap_loss(h, h_hat, mask, height, width, epsilon)?)
}

/// JSON-encoded [`demo::PrivacyView`].
#[wasm_bindgen(js_name = privacyView)]
pub fn privacy_view(seed: u32, width: usize, height: usize) -> Result<String, JsError> {
    Ok(serde_json::to_string(&demo::privacy_view(seed as u64, width, height)?)?)
}
