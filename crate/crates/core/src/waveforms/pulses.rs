use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::kernels::PulsePairSpec;

use super::distortion::TAIL_TIME_CONSTANTS;
use super::{distort, DistortionModel, SampledWaveform, TimeGrid};

/// Two back-to-back rectangular pulses, the second phase-shifted by `spec.phase_jump`.
///
/// The sequence spans `[-τ/2, τ/2)` so its centre sits at `t = 0`; samples are
/// placed at step midpoints, `t0 = -τ/2 + dt/2`. Within the sequence
/// `B1 = B_mw cos(ω u + φ)` with `u` the time since the sequence start.
pub fn pulse_pair(spec: &PulsePairSpec, dt: f64) -> Result<SampledWaveform> {
    check_pulse_step(spec, dt)?;
    let tau = spec.tau;
    let n = ((tau / dt).round() as usize).max(1);
    let half = tau / 2.0;
    SampledWaveform::from_fn(dt, -half + dt / 2.0, n, |t| {
        let u = t + half;
        let phase = if u < half {
            spec.carrier_phase
        } else {
            spec.carrier_phase + spec.phase_jump
        };
        spec.drive_amplitude * (spec.carrier * u + phase).cos()
    })
}

fn check_pulse_step(spec: &PulsePairSpec, dt: f64) -> Result<()> {
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(invalid("pulse sample step must be positive"));
    }
    if dt * spec.carrier >= 0.5 {
        return Err(invalid(format!(
            "pulse step too coarse for the carrier: dt*ω = {:.3} rad",
            dt * spec.carrier
        )));
    }
    Ok(())
}

/// Pulse pair as delivered through `model`.
///
/// [`DistortionModel::EnvelopeLowPass`] is applied exactly to the I/Q
/// envelope before modulation (its `carrier_hz` is ignored in favour of the
/// pulse pair's carrier); every other model filters the synthesized waveform.
pub fn distorted_pulse_pair(
    spec: &PulsePairSpec,
    dt: f64,
    model: &DistortionModel,
) -> Result<SampledWaveform> {
    let DistortionModel::EnvelopeLowPass { f3db_hz, .. } = *model else {
        return distort(&pulse_pair(spec, dt)?, model);
    };
    model.validate()?;
    check_pulse_step(spec, dt)?;
    let tau = spec.tau;
    let half = tau / 2.0;
    let rc = 1.0 / (2.0 * std::f64::consts::PI * f3db_hz);
    let n = ((tau / dt).round() as usize).max(1);
    let tail = (TAIL_TIME_CONSTANTS * rc / dt).ceil() as usize;
    // single-pole response to a unit gate on [a, b)
    let gate = |t: f64, a: f64, b: f64| {
        if t < a {
            0.0
        } else if t < b {
            1.0 - (-(t - a) / rc).exp()
        } else {
            (1.0 - (-(b - a) / rc).exp()) * (-(t - b) / rc).exp()
        }
    };
    let jump = Complex64::from_polar(1.0, spec.phase_jump);
    SampledWaveform::from_fn(dt, -half + dt / 2.0, n + tail, |t| {
        let envelope = gate(t, -half, 0.0) + jump * gate(t, 0.0, half);
        let carrier = Complex64::from_polar(1.0, spec.carrier * (t + half) + spec.carrier_phase);
        spec.drive_amplitude * (envelope * carrier).re
    })
}

/// Smooth rectangular test pulse of height `amplitude` starting at `t = 0`.
///
/// Edges are Gaussian error-function steps with the given 10–90 % rise time;
/// `duration` is measured between the two half-amplitude crossings.
pub fn step_pulse(
    amplitude: f64,
    rise_time: f64,
    duration: f64,
    grid: &TimeGrid,
) -> Result<SampledWaveform> {
    if !(rise_time > 0.0 && duration > 0.0) {
        return Err(invalid("rise time and duration must be positive"));
    }
    grid.validate()?;
    // 10–90 % of an erf edge spans 2·1.2816·σ
    let sigma = rise_time / (2.0 * 1.281_551_565_545);
    let edge =
        |t: f64| 0.5 * (1.0 + statrs::function::erf::erf(t / (sigma * std::f64::consts::SQRT_2)));
    grid.sample(|t| amplitude * (edge(t) - edge(t - duration)))
}
