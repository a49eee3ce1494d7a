//! Two-phase training: the GAN phase fits `G` and `D`; the inversion phase
//! fits `I` (and by default `D`) against the frozen generator.

mod latents;
mod loops;
mod optim;

use serde::{Deserialize, Serialize};

pub use latents::{build_latent_set, mean_reconstruction_l1, LatentCodeSet, LatentEntry, LATENT_SET_VERSION};
pub use loops::{train_gan, train_inversion, PhaseProgress, RunOptions, StepRecord};
pub use optim::{ema_update, Adam};

use crate::error::{Error, Result};
use crate::losses::LossConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Gan,
    Inversion,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Gan => "gan",
            Phase::Inversion => "inversion",
        }
    }
}

/// Optimizer and schedule settings of one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub lr_d: f32,
    /// Learning rate of `G` in the GAN phase and of `I` in the inversion phase.
    pub lr_g_or_i: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub batch_size: usize,
    pub epochs: usize,
    /// Discriminator updates per generator/encoder update.
    pub update_ratio: usize,
    /// EMA decay of the phase's main network.
    pub ema_decay: f32,
    /// Caps the schedule below `epochs` full passes.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl PhaseConfig {
    pub fn gan_default() -> Self {
        Self {
            lr_d: 2e-4,
            lr_g_or_i: 5e-5,
            beta1: 0.0,
            beta2: 0.999,
            batch_size: 128,
            epochs: 400,
            update_ratio: 1,
            ema_decay: 0.999,
            max_steps: None,
        }
    }

    pub fn inversion_default() -> Self {
        Self { epochs: 50, ema_decay: 0.99, ..Self::gan_default() }
    }

    pub fn steps_per_epoch(&self, dataset_len: usize) -> usize {
        dataset_len.div_ceil(self.batch_size.max(1))
    }

    /// Total optimizer steps (of the main network) over the schedule.
    pub fn total_steps(&self, dataset_len: usize) -> usize {
        let full = self.epochs * self.steps_per_epoch(dataset_len);
        self.max_steps.map_or(full, |m| m.min(full))
    }

    fn validate(&self, what: &str) -> Result<()> {
        let err = |m: String| Err(Error::Config(format!("{what}: {m}")));
        if !(self.lr_d > 0.0 && self.lr_g_or_i > 0.0 && self.lr_d.is_finite() && self.lr_g_or_i.is_finite()) {
            return err("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return err("Adam betas must be in [0, 1)".into());
        }
        if self.batch_size == 0 {
            return err("batch_size must be positive".into());
        }
        if self.update_ratio == 0 {
            return err("update_ratio must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return err(format!("ema_decay must be in [0, 1), got {}", self.ema_decay));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub gan: PhaseConfig,
    pub inversion: PhaseConfig,
    /// Whether `D` keeps training during the inversion phase.
    pub inversion_trains_d: bool,
    pub losses: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gan: PhaseConfig::gan_default(),
            inversion: PhaseConfig::inversion_default(),
            inversion_trains_d: true,
            losses: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Settings for small CPU runs: batch 16, higher learning rates, a faster
    /// GAN-phase EMA and step caps of 1200 and 500. The inversion phase gets
    /// enough epochs to reach its cap on a 64-pair dataset. Adam betas and
    /// update ratios stay at the defaults.
    pub fn desk_scale() -> Self {
        let d = Self::default();
        Self {
            gan: PhaseConfig { lr_d: 5e-4, lr_g_or_i: 5e-4, batch_size: 16, max_steps: Some(1200), ema_decay: 0.99, ..d.gan },
            inversion: PhaseConfig {
                lr_d: 2e-4,
                lr_g_or_i: 1e-3,
                batch_size: 16,
                epochs: 125,
                max_steps: Some(500),
                ..d.inversion
            },
            ..d
        }
    }

    pub fn phase(&self, phase: Phase) -> &PhaseConfig {
        match phase {
            Phase::Gan => &self.gan,
            Phase::Inversion => &self.inversion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gan.validate("gan")?;
        self.inversion.validate("inversion")?;
        self.losses.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_schedule() {
        let c = TrainConfig::default();
        for p in [&c.gan, &c.inversion] {
            assert_eq!(p.beta1, 0.0);
            assert_eq!(p.beta2, 0.999);
            assert_eq!(p.lr_d, 2e-4);
            assert_eq!(p.lr_g_or_i, 5e-5);
            assert_eq!(p.batch_size, 128);
            assert_eq!(p.update_ratio, 1);
        }
        assert_eq!(c.gan.epochs, 400);
        assert_eq!(c.inversion.epochs, 50);
        assert_eq!(c.gan.ema_decay, 0.999);
        assert_eq!(c.inversion.ema_decay, 0.99);
        assert!(c.inversion_trains_d);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn schedule_length() {
        let p = PhaseConfig { batch_size: 8, epochs: 3, ..PhaseConfig::gan_default() };
        assert_eq!(p.total_steps(64), 24);
        assert_eq!(p.total_steps(65), 27);
        assert_eq!(PhaseConfig { max_steps: Some(10), ..p.clone() }.total_steps(64), 10);
        assert_eq!(PhaseConfig { max_steps: Some(100), ..p }.total_steps(64), 24);
    }

    #[test]
    fn desk_scale_reaches_its_caps_on_the_toy_set() {
        let c = TrainConfig::desk_scale();
        assert_eq!(c.gan.total_steps(64), 1200);
        assert_eq!(c.inversion.total_steps(64), 500);
        assert_eq!((c.gan.beta1, c.gan.beta2, c.gan.update_ratio), (0.0, 0.999, 1));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = TrainConfig::default();
        c.gan.update_ratio = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.inversion.ema_decay = 1.0;
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"sed": 1}"#).is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"seed": 4}"#).unwrap();
        assert_eq!(parsed, TrainConfig { seed: 4, ..Default::default() });
    }
}
