//! Random-walk step sizes tuned by Robbins–Monro during burn-in.

use serde::{Deserialize, Serialize};

const TARGET: f64 = 0.44;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    log_step: f64,
    tries: u64,
    accepts: u64,
}

impl Step {
    pub fn new(step: f64) -> Self {
        Self {
            log_step: step.ln(),
            tries: 0,
            accepts: 0,
        }
    }

    pub fn size(&self) -> f64 {
        self.log_step.exp()
    }

    /// Records one Metropolis outcome; moves the step toward the target
    /// acceptance rate when `adapt` is set.
    pub fn record(&mut self, accepted: bool, adapt: bool) {
        self.tries += 1;
        if accepted {
            self.accepts += 1;
        }
        if adapt {
            let gain = (self.tries as f64).powf(-0.6).min(0.5);
            let hit = if accepted { 1.0 } else { 0.0 };
            self.log_step = (self.log_step + gain * (hit - TARGET)).clamp(-12.0, 6.0);
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.tries == 0 {
            0.0
        } else {
            self.accepts as f64 / self.tries as f64
        }
    }

    /// Forgets the counters, keeping the tuned step.
    pub fn reset_counts(&mut self) {
        self.tries = 0;
        self.accepts = 0;
    }
}
