use serde::{Deserialize, Serialize};

use crate::mixture::MixtureSpec;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { momentum: f64, weight_decay: f64 },
    Adam { beta1: f64, beta2: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineTuneSchedule {
    pub batch_size: usize,
    /// `(height, width)` the detector is trained at.
    pub input_size: (usize, usize),
    pub init_lr_high: f64,
    pub init_lr_low: f64,
    /// Real-image share from which `init_lr_high` is used.
    pub real_fraction_threshold: f64,
    pub decay_factor: f64,
    pub decay_every_epochs: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub optimizer: OptimizerKind,
}

impl Default for FineTuneSchedule {
    fn default() -> Self {
        Self {
            batch_size: 4,
            input_size: (512, 640),
            init_lr_high: 0.001,
            init_lr_low: 0.0001,
            real_fraction_threshold: 0.5,
            decay_factor: 10.0,
            decay_every_epochs: 3,
            max_epochs: 10,
            validation_fraction: 0.1,
            optimizer: OptimizerKind::Sgd {
                momentum: 0.9,
                weight_decay: 5e-4,
            },
        }
    }
}

impl FineTuneSchedule {
    pub fn validate(&self) -> Result<()> {
        let arg = |m: String| Err(Error::Argument(m));
        if self.batch_size == 0 || self.max_epochs == 0 || self.decay_every_epochs == 0 {
            return arg("batch_size, max_epochs and decay_every_epochs must be positive".into());
        }
        if !(self.init_lr_high > 0.0 && self.init_lr_low > 0.0) {
            return arg(format!(
                "learning rates must be positive, got {} and {}",
                self.init_lr_high, self.init_lr_low
            ));
        }
        if !(self.decay_factor >= 1.0) {
            return arg(format!("decay_factor must be >= 1, got {}", self.decay_factor));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return arg(format!("validation_fraction must be in (0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }

    /// Learning rate for `epoch` given the share of real training images.
    pub fn rate_for_fraction(&self, epoch: usize, real_fraction: f64) -> Result<f64> {
        if epoch >= self.max_epochs {
            return Err(Error::Argument(format!(
                "epoch {epoch} is outside the schedule of {} epochs",
                self.max_epochs
            )));
        }
        let base = if real_fraction >= self.real_fraction_threshold {
            self.init_lr_high
        } else {
            self.init_lr_low
        };
        Ok(base / self.decay_factor.powi((epoch / self.decay_every_epochs) as i32))
    }
}

/// Step schedule: a high or low starting rate depending on how much of the
/// regime is real, divided by `decay_factor` every `decay_every_epochs`.
pub fn learning_rate(epoch: usize, mixture: &MixtureSpec, schedule: &FineTuneSchedule) -> Result<f64> {
    schedule.rate_for_fraction(epoch, mixture.effective_real_fraction())
}
