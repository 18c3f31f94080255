use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A uniformly sampled real time series.
///
/// Sample `i` sits at `t0 + i * dt`. When a waveform drives the spin
/// propagator, each sample is the field at the midpoint of the step
/// `[t_i - dt/2, t_i + dt/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledWaveform {
    dt: f64,
    t0: f64,
    values: Vec<f64>,
}

impl SampledWaveform {
    pub fn new(dt: f64, t0: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("sample step must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(invalid("waveform start time must be finite"));
        }
        if values.is_empty() {
            return Err(invalid("waveform must hold at least one sample"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("waveform sample {i} is not finite")));
        }
        Ok(Self { dt, t0, values })
    }

    pub fn zeros(dt: f64, t0: f64, len: usize) -> Result<Self> {
        Self::new(dt, t0, vec![0.0; len])
    }

    /// Samples `f` on `t0 + i*dt` for `i in 0..len`.
    pub fn from_fn(dt: f64, t0: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..len).map(|i| f(t0 + i as f64 * dt)).collect();
        Self::new(dt, t0, values)
    }

    /// Samples `f` on the multiples of `dt` inside `[start, end]`.
    pub fn on_range(dt: f64, start: f64, end: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(end >= start) {
            return Err(invalid(format!("empty range [{start}, {end}]")));
        }
        let (first, count) = grid_indices(dt, start, end);
        Self::from_fn(dt, first as f64 * dt, count, f)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    /// Time of the last sample.
    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Linear interpolation, zero outside the sampled span.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        let n = self.values.len();
        if x < -1e-9 || x > (n - 1) as f64 + 1e-9 {
            return 0.0;
        }
        let x = x.clamp(0.0, (n - 1) as f64);
        let i = x.floor() as usize;
        if i + 1 >= n {
            return self.values[n - 1];
        }
        let frac = x - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Rectangle-rule integral `sum(v) * dt`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dt
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index of the sample with the largest magnitude (first one on ties).
    pub fn argmax_abs(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if v.abs() > self.values[best].abs() {
                best = i;
            }
        }
        best
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dt: self.dt,
            t0: self.t0,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn shifted_in_time(&self, offset: f64) -> Self {
        Self {
            dt: self.dt,
            t0: self.t0 + offset,
            values: self.values.clone(),
        }
    }

    /// Zero-pads by whole samples on either side.
    pub fn padded(&self, before: usize, after: usize) -> Self {
        let mut values = vec![0.0; before];
        values.extend_from_slice(&self.values);
        values.resize(values.len() + after, 0.0);
        Self {
            dt: self.dt,
            t0: self.t0 - before as f64 * self.dt,
            values,
        }
    }

    /// Linear-interpolation resampling onto `t0 + i*dt`.
    pub fn resampled(&self, dt: f64, t0: f64, len: usize) -> Result<Self> {
        Self::from_fn(dt, t0, len, |t| self.value_at(t))
    }

    /// Pointwise sum of two waveforms on the same grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(crate::Error::GridMismatch(
                "cannot add waveforms on different grids".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            dt: self.dt,
            t0: self.t0,
            values,
        })
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.len() == other.len()
            && rel_close(self.dt, other.dt, 1e-9)
            && (self.t0 - other.t0).abs() <= 1e-6 * self.dt
    }
}

pub(crate) fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// First grid index and sample count of the multiples of `dt` inside `[start, end]`.
pub(crate) fn grid_indices(dt: f64, start: f64, end: f64) -> (i64, usize) {
    let first = (start / dt - 1e-9).ceil() as i64;
    let last = (end / dt + 1e-9).floor() as i64;
    (first, (last - first + 1) as usize)
}
