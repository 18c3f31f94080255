//! Control and test waveform synthesis.
//!
//! Microwave pulse pairs (ideal and distorted) drive the spin; magnetic test
//! transients are what the sensor is asked to record.

mod distortion;
mod magnetic;
mod pulses;
mod sampled;
mod shift;

pub use distortion::{distort, DistortionModel};
pub use magnetic::{
    disk_reversal_transient, disk_uniform_field, domain_wall_field, domain_wall_transient, nv_axis,
    Chirality, DiskReversalScenario, DomainWallScenario,
};
pub use pulses::{distorted_pulse_pair, pulse_pair, step_pulse};
pub use sampled::SampledWaveform;
pub(crate) use sampled::{grid_indices, rel_close};
pub(crate) use shift::sinc;
pub use shift::{shift_waveform, tof_pair};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform grid of multiples of `step` inside `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step: f64,
    pub start: f64,
    pub end: f64,
}

impl TimeGrid {
    pub fn new(step: f64, start: f64, end: f64) -> Result<Self> {
        let g = Self { step, start, end };
        g.validate()?;
        Ok(g)
    }

    /// Grid symmetric about zero.
    pub fn symmetric(step: f64, half_range: f64) -> Result<Self> {
        Self::new(step, -half_range, half_range)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid(format!(
                "grid step must be positive, got {}",
                self.step
            )));
        }
        if !(self.start.is_finite() && self.end.is_finite() && self.end >= self.start) {
            return Err(invalid(format!(
                "grid range [{}, {}] is empty or not finite",
                self.start, self.end
            )));
        }
        Ok(())
    }

    /// Samples `f` on this grid.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Result<SampledWaveform> {
        SampledWaveform::on_range(self.step, self.start, self.end, f)
    }

    pub fn len(&self) -> usize {
        grid_indices(self.step, self.start, self.end).1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
