use serde::{Deserialize, Serialize};

/// Inverse-square-root warmup schedule scaled by `1 / (2 sqrt(d_model))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub d_model: usize,
    pub warmup: usize,
    /// Extra constant multiplier; 1 gives the plain schedule.
    #[serde(default = "one")]
    pub multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl LrSchedule {
    pub fn new(d_model: usize, warmup: usize) -> Self {
        Self {
            d_model,
            warmup,
            multiplier: 1.0,
        }
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::new(768, 12_000)
    }
}

/// `multiplier * min(step^-1/2, step * warmup^-3/2) / (2 sqrt(d_model))`, zero at step 0.
pub fn lr_at(step: u64, schedule: &LrSchedule) -> f64 {
    if step == 0 {
        return 0.0;
    }
    let step = step as f64;
    let warmup = schedule.warmup as f64;
    let scale = 1.0 / (2.0 * (schedule.d_model as f64).sqrt());
    schedule.multiplier * scale * f64::min(step.powf(-0.5), step * warmup.powf(-1.5))
}

impl LrSchedule {
    pub fn rate(&self, step: u64) -> f64 {
        lr_at(step, self)
    }

    pub fn peak(&self) -> f64 {
        lr_at(self.warmup as u64, self)
    }
}
