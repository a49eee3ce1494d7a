use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thermosynth::data::SyntheticConfig;
use thermosynth::eval::{PrivacyConfig, ProbeConfig};
use thermosynth::model::ModelConfig;
use thermosynth::train::TrainConfig;

use crate::error::{CliError, Result};

/// Everything a subcommand may need, resolved from defaults, an optional
/// JSON file and `--set` overrides, in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; copied into `train.seed` on resolution.
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SyntheticConfig,
    /// Test share for `eval-fid` splits.
    pub test_fraction: f64,
    pub privacy: PrivacyConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: SyntheticConfig::default(),
            test_fraction: 0.1,
            privacy: PrivacyConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl RunConfig {
    /// 6×8 heatmaps, the small network widths and the desk-scale schedule.
    pub fn toy() -> Self {
        Self {
            model: ModelConfig::small(6, 8),
            train: TrainConfig::desk_scale(),
            synth: SyntheticConfig { heatmap_height: 6, heatmap_width: 8, ..Default::default() },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if (self.synth.heatmap_height, self.synth.heatmap_width) != (self.model.heatmap_height, self.model.heatmap_width) {
            return Err(CliError::Config(format!(
                "synth heatmap {}x{} differs from model heatmap {}x{}",
                self.synth.heatmap_height, self.synth.heatmap_width, self.model.heatmap_height, self.model.heatmap_width
            )));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(CliError::Config(format!("test_fraction must be in [0, 1), got {}", self.test_fraction)));
        }
        Ok(())
    }
}

/// Sets `path` (dot-separated) in `root` to `value`. The key must already
/// exist, so misspelled overrides fail instead of being ignored.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let mut cur = root;
    for key in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::Config(format!("unknown config key `{path}`")))?;
    }
    *cur = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Defaults (or the toy preset), then `file`, then `overrides`, then `seed`.
pub fn resolve(preset_toy: bool, file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let base = if preset_toy { RunConfig::toy() } else { RunConfig::default() };
    let mut value = serde_json::to_value(&base)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file_value: Value = serde_json::from_str(&text)?;
        merge(&mut value, file_value, "")?;
    }
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut Value, patch: Value, at: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                let slot = b.get_mut(&k).ok_or_else(|| CliError::Config(format!("unknown config key `{path}`")))?;
                merge(slot, v, &path)?;
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_set_nested_values() {
        let cfg = resolve(true, None, &["train.gan.lr_d=0.001".into(), "train.gan.max_steps=7".into()], Some(5)).unwrap();
        assert_eq!(cfg.train.gan.lr_d, 1e-3);
        assert_eq!(cfg.train.gan.max_steps, Some(7));
        assert_eq!((cfg.seed, cfg.train.seed), (5, 5));
        let cfg = resolve(true, None, &["train.gan.max_steps=null".into()], None).unwrap();
        assert_eq!(cfg.train.gan.max_steps, None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(resolve(false, None, &["train.gan.lr=1".into()], None).is_err());
        assert!(resolve(false, None, &["nope=1".into()], None).is_err());
        assert!(resolve(false, None, &["seed".into()], None).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"model": {"heatmap_hieght": 6}}"#).unwrap();
        assert!(resolve(false, Some(&p), &[], None).is_err());
    }

    #[test]
    fn file_values_are_merged_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 3, "train": {"gan": {"batch_size": 4}}}"#).unwrap();
        let cfg = resolve(true, Some(&p), &[], None).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.gan.batch_size, 4);
        assert_eq!(cfg.train.gan.lr_d, TrainConfig::desk_scale().gan.lr_d);
    }

    #[test]
    fn mismatched_heatmap_sizes_are_rejected() {
        assert!(resolve(true, None, &["synth.heatmap_height=12".into()], None).is_err());
        assert!(resolve(false, None, &[], None).is_ok());
    }

    #[test]
    fn shipped_toy_config_matches_preset() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.json");
        let cfg = resolve(false, Some(&path), &[], None).unwrap();
        assert_eq!(cfg, RunConfig::toy());
    }
}
