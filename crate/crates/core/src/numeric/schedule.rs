use serde::{Deserialize, Serialize};

use super::NumericError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub initial_lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr_stop: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            factor: 0.1,
            patience: 10,
            min_lr_stop: 1e-8,
        }
    }
}

/// Reduce-on-plateau learning-rate schedule with a stop signal once the
/// rate has decayed below `min_lr_stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    config: PlateauConfig,
    current_lr: f64,
    best: f64,
    since_improvement: usize,
}

impl PlateauScheduler {
    pub fn new(config: PlateauConfig) -> Self {
        Self {
            config,
            current_lr: config.initial_lr,
            best: f64::INFINITY,
            since_improvement: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.current_lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Feeds one validation loss; returns the learning rate to use next and
    /// whether training should stop.
    pub fn step(&mut self, val_loss: f64) -> Result<(f64, bool), NumericError> {
        if !val_loss.is_finite() {
            return Err(NumericError::NonFinite { value: val_loss });
        }
        if val_loss < self.best {
            self.best = val_loss;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
            if self.since_improvement >= self.config.patience {
                self.current_lr *= self.config.factor;
                self.since_improvement = 0;
            }
        }
        Ok((self.current_lr, self.current_lr < self.config.min_lr_stop))
    }
}
