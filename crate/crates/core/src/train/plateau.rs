use crate::error::{Error, Result};

/// Multiplies the learning rate by `factor` once the monitored metric has
/// failed to strictly decrease for more than `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    bad_epochs: usize,
    history: Vec<f64>,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        Self::new(0.001)
    }
}

impl PlateauSchedule {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            factor: 0.3,
            patience: 10,
            min_lr: 1e-7,
            best: f64::INFINITY,
            bad_epochs: 0,
            history: Vec::new(),
        }
    }

    pub fn with(lr: f64, factor: f64, patience: usize) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::Config(format!("plateau factor must be in (0, 1), got {factor}")));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self {
            factor,
            patience,
            ..Self::new(lr)
        })
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn update(&mut self, metric: f64) -> Result<f64> {
        if !metric.is_finite() {
            return Err(Error::InvalidArgument(format!("monitored metric is {metric}")));
        }
        self.history.push(metric);
        if metric < self.best {
            self.best = metric;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.patience {
            self.lr = (self.lr * self.factor).max(self.min_lr);
            self.bad_epochs = 0;
        }
        Ok(self.lr)
    }
}
