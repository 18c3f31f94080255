//! Sensing kernels of the two-pulse phase-shifted sequence.
//!
//! The analytic kernel is `k(t) = sin[Ω(τ/2 − |t|)]` on `|t| < τ/2`. The
//! simulated kernel comes from lab-frame propagation with a narrow Gaussian
//! axial stimulus placed at each grid time `t'`; the response
//! `p(t') − p0` is one kernel sample.
//!
//! A kernel carries a `response_scale` so that the physical probability
//! change is `δp(t) = response_scale · ∫ k(t' − t) γ B(t') dt'`. The analytic
//! kernel uses scale 1 (pure convolution convention). A simulated kernel is
//! normalized so an ideal pulse pair converges to the analytic shape with
//! `k(0) = +sin α`, and its scale carries the physical sign and magnitude.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::spin::{check_step, step_propagator, NvParams, MS_ZERO};
use crate::waveforms::{grid_indices, SampledWaveform, TimeGrid};

/// Two equal-amplitude pulses, the second phase-shifted by `phase_jump`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsePairSpec {
    /// Rabi frequency Ω (rad/s).
    pub rabi: f64,
    /// Total sequence duration τ (s).
    pub tau: f64,
    /// Rotation angle α = Ωτ/2 (rad).
    pub alpha: f64,
    /// Carrier ω (rad/s).
    pub carrier: f64,
    /// Carrier phase of the first pulse (rad).
    pub carrier_phase: f64,
    /// Phase step between the pulses (rad).
    pub phase_jump: f64,
    /// Microwave amplitude B_mw = √2 Ω/γ (T).
    pub drive_amplitude: f64,
}

impl PulsePairSpec {
    fn build(rabi: f64, tau: f64, carrier: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid("gyromagnetic ratio must be positive"));
        }
        let spec = Self {
            rabi,
            tau,
            alpha: rabi * tau / 2.0,
            carrier,
            carrier_phase: 0.0,
            phase_jump: PI / 2.0,
            drive_amplitude: 2f64.sqrt() * rabi / gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_rabi_and_tau(rabi: f64, tau: f64, carrier: f64, gamma: f64) -> Result<Self> {
        Self::build(rabi, tau, carrier, gamma)
    }

    pub fn from_rabi_and_alpha(rabi: f64, alpha: f64, carrier: f64, gamma: f64) -> Result<Self> {
        if !(rabi > 0.0) {
            return Err(invalid("Rabi frequency must be positive"));
        }
        Self::build(rabi, 2.0 * alpha / rabi, carrier, gamma)
    }

    pub fn from_tau_and_alpha(tau: f64, alpha: f64, carrier: f64, gamma: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(invalid("sequence duration must be positive"));
        }
        Self::build(2.0 * alpha / tau, tau, carrier, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.rabi,
            self.tau,
            self.alpha,
            self.carrier,
            self.carrier_phase,
            self.phase_jump,
            self.drive_amplitude,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(invalid("pulse parameters must be finite"));
        }
        if !(self.tau > 0.0) {
            return Err(invalid("sequence duration must be positive"));
        }
        if self.rabi < 0.0 || self.carrier <= 0.0 {
            return Err(invalid(
                "Rabi frequency must be non-negative and carrier positive",
            ));
        }
        let expected = self.rabi * self.tau / 2.0;
        if (self.alpha - expected).abs() > 1e-9 * expected.abs().max(1e-12) {
            return Err(invalid(format!(
                "rotation angle {} inconsistent with Ωτ/2 = {}",
                self.alpha, expected
            )));
        }
        Ok(())
    }

    pub fn bandwidth_hz(&self) -> f64 {
        1.0 / self.tau
    }
}

/// Sampled kernel plus the parameters it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingKernel {
    pub samples: SampledWaveform,
    pub tau: f64,
    pub alpha: f64,
    pub omega_rabi: f64,
    /// Time resolution (FWHM of |k|), s. Zero if the kernel vanishes.
    pub t_min: f64,
    /// Instantaneous bandwidth ≈ 1/τ (Hz).
    pub bandwidth: f64,
    /// Stimulus-free probability p0 = |⟨0|ψ⟩|².
    pub baseline: f64,
    /// δp per unit of `∫ k(t'−t) γ B(t') dt'`.
    pub response_scale: f64,
}

impl SensingKernel {
    /// Same kernel with a different probability scale.
    pub fn with_response_scale(mut self, scale: f64) -> Self {
        self.response_scale = scale;
        self
    }

    /// Rescales the analytic kernel to the ideal two-level response of the
    /// probability |⟨0|ψ⟩|², i.e. `δp = (sin α / 2) ∫ k γ B dt`.
    pub fn two_level_response(self) -> Self {
        let scale = two_level_response_scale(self.alpha);
        self.with_response_scale(scale)
    }

    /// `∫ k dt` (rectangle rule on the sample grid).
    pub fn integral(&self) -> f64 {
        self.samples.integral()
    }

    pub fn step(&self) -> f64 {
        self.samples.dt()
    }

    /// Kernel value at `t`, zero outside the sampled range.
    pub fn value_at(&self, t: f64) -> f64 {
        self.samples.value_at(t)
    }
}

/// Probability change per unit kernel phase for an ideal two-level sequence.
pub fn two_level_response_scale(alpha: f64) -> f64 {
    alpha.sin() / 2.0
}

/// Ideal baseline |⟨0|ψ⟩|² = (1 + cos²α)/2 after the two pulses.
pub fn two_level_baseline(alpha: f64) -> f64 {
    (1.0 + alpha.cos().powi(2)) / 2.0
}

/// Closed-form FWHM `τ (1 − arcsin(sin α / 2) / α)`.
pub fn time_resolution_formula(tau: f64, alpha: f64) -> f64 {
    tau * (1.0 - (alpha.sin() / 2.0).asin() / alpha)
}

/// `sin[Ω(τ/2 − |t|)]` inside the sequence, zero outside.
pub fn analytic_kernel_value(rabi: f64, tau: f64, t: f64) -> f64 {
    if t.abs() < tau / 2.0 {
        (rabi * (tau / 2.0 - t.abs())).sin()
    } else {
        0.0
    }
}

/// Samples the analytic kernel on `grid`, which must cover `[−τ/2, τ/2]`.
pub fn analytic_kernel(spec: &PulsePairSpec, grid: &TimeGrid) -> Result<SensingKernel> {
    spec.validate()?;
    grid.validate()?;
    if !(spec.alpha > 0.0 && spec.alpha <= PI) {
        return Err(invalid(format!(
            "rotation angle {} outside (0, π]",
            spec.alpha
        )));
    }
    let half = spec.tau / 2.0;
    if grid.start > -half + 1e-9 * half || grid.end < half - 1e-9 * half {
        return Err(Error::BadGrid(format!(
            "grid [{:e}, {:e}] does not cover the kernel support [{:e}, {:e}]",
            grid.start, grid.end, -half, half
        )));
    }
    let samples = grid.sample(|t| analytic_kernel_value(spec.rabi, spec.tau, t))?;
    Ok(SensingKernel {
        samples,
        tau: spec.tau,
        alpha: spec.alpha,
        omega_rabi: spec.rabi,
        t_min: time_resolution_formula(spec.tau, spec.alpha),
        bandwidth: spec.bandwidth_hz(),
        baseline: two_level_baseline(spec.alpha),
        response_scale: 1.0,
    })
}

/// FWHM of |w| around its global maximum, linearly interpolated.
pub fn fwhm(w: &SampledWaveform) -> Result<f64> {
    let v = w.values();
    let peak_index = w.argmax_abs();
    let peak = v[peak_index].abs();
    if peak == 0.0 {
        return Err(Error::Degenerate("kernel is identically zero".into()));
    }
    let half = peak / 2.0;
    let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Result<f64> {
        for i in range {
            if v[i].abs() < half {
                // interpolate between i and its neighbour towards the peak
                let j = (i as isize - step) as usize;
                let (a, b) = (v[i].abs(), v[j].abs());
                let frac = (half - a) / (b - a);
                return Ok(w.time(i) - step as f64 * frac * w.dt());
            }
        }
        Err(Error::Degenerate(
            "half maximum not reached inside the sampled range".into(),
        ))
    };
    let left = crossing(&mut (0..peak_index).rev(), -1)?;
    let right = crossing(&mut (peak_index + 1..v.len()), 1)?;
    Ok(right - left)
}

/// FWHM of the kernel samples.
pub fn time_resolution(kernel: &SensingKernel) -> Result<f64> {
    fwhm(&kernel.samples)
}

/// Gaussian axial stimulus used to probe the kernel point by point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusConfig {
    /// Gaussian standard deviation σ (s).
    pub width: f64,
    /// Time integral of the stimulus field (T·s).
    pub area: f64,
    /// Kernel grid step (s).
    pub grid_step: f64,
    /// Kernel time range; defaults to the drive span padded by 6σ.
    pub range: Option<(f64, f64)>,
}

/// Largest stimulus phase γ·area accepted as linear response.
pub const MAX_STIMULUS_PHASE: f64 = 0.02;
/// Relative kernel change tolerated when the stimulus area is halved.
pub const LINEARITY_TOLERANCE: f64 = 0.005;
/// Gaussian stimulus truncation in units of σ.
const STIMULUS_CUTOFF: f64 = 6.0;

impl StimulusConfig {
    /// σ = 20 ps, γ·area = 0.01 rad, grid step 10 × drive step.
    pub fn default_for(params: &NvParams, drive_dt: f64) -> Self {
        Self {
            width: 20e-12,
            area: 0.01 / params.gyromagnetic_ratio,
            grid_step: 10.0 * drive_dt,
            range: None,
        }
    }

    pub fn with_phase(mut self, params: &NvParams, phase: f64) -> Self {
        self.area = phase / params.gyromagnetic_ratio;
        self
    }

    pub fn validate(&self, params: &NvParams, tau: f64) -> Result<()> {
        if !(self.width > 0.0 && self.grid_step > 0.0 && self.area > 0.0) {
            return Err(invalid(
                "stimulus width, area and grid step must be positive",
            ));
        }
        if params.gyromagnetic_ratio * self.area > MAX_STIMULUS_PHASE * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "stimulus phase γ·area = {:.4} rad exceeds {MAX_STIMULUS_PHASE}",
                params.gyromagnetic_ratio * self.area
            )));
        }
        if self.width > tau / 50.0 * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "stimulus width {:e} s exceeds τ/50 = {:e} s",
                self.width,
                tau / 50.0
            )));
        }
        if let Some((a, b)) = self.range {
            if !(b > a) {
                return Err(invalid("stimulus range is empty"));
            }
        }
        Ok(())
    }
}

/// Forward and backward propagated states of a drive waveform, reused for
/// every stimulus position.
struct DriveTrajectory {
    /// State before step i (len N+1).
    forward: Vec<Vector3<Complex64>>,
    /// Vector b_i with ⟨0|U_{N−1}⋯U_i φ⟩ = b_i† φ (len N+1).
    backward: Vec<Vector3<Complex64>>,
}

impl DriveTrajectory {
    fn new(params: &NvParams, drive: &SampledWaveform) -> Self {
        let dt = drive.dt();
        let steps: Vec<Matrix3<Complex64>> = drive
            .values()
            .par_iter()
            .map(|&b1| step_propagator(params, b1, 0.0, dt))
            .collect();
        let n = steps.len();
        let mut forward = Vec::with_capacity(n + 1);
        let mut psi = Vector3::zeros();
        psi[MS_ZERO] = Complex64::new(1.0, 0.0);
        forward.push(psi);
        for u in &steps {
            psi = u * psi;
            forward.push(psi);
        }
        let mut backward = vec![Vector3::zeros(); n + 1];
        let mut chi = Vector3::zeros();
        chi[MS_ZERO] = Complex64::new(1.0, 0.0);
        backward[n] = chi;
        for i in (0..n).rev() {
            chi = steps[i].adjoint() * chi;
            backward[i] = chi;
        }
        Self { forward, backward }
    }

    fn baseline(&self) -> f64 {
        self.forward.last().expect("non-empty")[MS_ZERO].norm_sqr()
    }

    /// p = |⟨0|ψ⟩|² with an axial field applied on steps `[a, b)`.
    fn probability_with(
        &self,
        params: &NvParams,
        drive: &SampledWaveform,
        a: usize,
        axial: impl Fn(usize) -> f64,
        b: usize,
    ) -> f64 {
        let dt = drive.dt();
        let mut phi = self.forward[a];
        for i in a..b {
            phi = step_propagator(params, drive.values()[i], axial(i), dt) * phi;
        }
        self.backward[b].dotc(&phi).norm_sqr()
    }
}

/// Kernel of an arbitrary drive waveform by lab-frame simulation.
///
/// `nominal` supplies τ, α and Ω for the metadata and the normalization.
/// Every kernel point is evaluated at the configured stimulus area and at
/// half of it; [`Error::NonlinearStimulus`] is returned if the two differ by
/// more than 0.5 % of the kernel peak.
pub fn simulate_kernel(
    params: &NvParams,
    drive: &SampledWaveform,
    nominal: &PulsePairSpec,
    stim: &StimulusConfig,
) -> Result<SensingKernel> {
    params.validate()?;
    nominal.validate()?;
    stim.validate(params, nominal.tau)?;
    let dt = drive.dt();
    check_step(params, dt)?;

    let trajectory = DriveTrajectory::new(params, drive);
    let p0 = trajectory.baseline();

    let cutoff = STIMULUS_CUTOFF * stim.width;
    let (lo, hi) = stim.range.unwrap_or((
        drive.t0() - dt / 2.0 - cutoff,
        drive.t_end() + dt / 2.0 + cutoff,
    ));
    let (first, count) = grid_indices(stim.grid_step, lo, hi);
    let centers: Vec<f64> = (0..count)
        .map(|j| (first + j as i64) as f64 * stim.grid_step)
        .collect();

    let gamma = params.gyromagnetic_ratio;
    let n = drive.len();
    let responses: Vec<(f64, f64)> = centers
        .par_iter()
        .map(|&center| {
            let a = ((center - cutoff - drive.t0()) / dt).floor().max(0.0) as usize;
            let b = (((center + cutoff - drive.t0()) / dt).ceil() as usize + 1).min(n);
            if a >= b {
                return (0.0, 0.0);
            }
            let gauss = |i: usize, area: f64| {
                let x = (drive.time(i) - center) / stim.width;
                area / (stim.width * (2.0 * PI).sqrt()) * (-0.5 * x * x).exp()
            };
            let full = trajectory.probability_with(params, drive, a, |i| gauss(i, stim.area), b);
            let half =
                trajectory.probability_with(params, drive, a, |i| gauss(i, stim.area / 2.0), b);
            (
                (full - p0) / (gamma * stim.area),
                (half - p0) / (gamma * stim.area / 2.0),
            )
        })
        .collect();

    let raw: Vec<f64> = responses.iter().map(|r| r.0).collect();
    let raw_half: Vec<f64> = responses.iter().map(|r| r.1).collect();
    let peak_index =
        raw.iter().enumerate().fold(
            0,
            |best, (i, v)| if v.abs() > raw[best].abs() { i } else { best },
        );
    let peak = raw[peak_index].abs();
    if peak > 0.0 {
        let change = raw
            .iter()
            .zip(&raw_half)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            / peak;
        if change > LINEARITY_TOLERANCE {
            return Err(Error::NonlinearStimulus {
                relative_change: change,
            });
        }
    }

    let sign = if raw[peak_index] < 0.0 { -1.0 } else { 1.0 };
    let magnitude = two_level_response_scale(nominal.alpha);
    let magnitude = if magnitude.abs() > 1e-9 {
        magnitude
    } else {
        1.0
    };
    let response_scale = sign * magnitude;
    let values: Vec<f64> = raw.iter().map(|r| r / response_scale).collect();
    let samples = SampledWaveform::new(stim.grid_step, centers[0], values)?;
    let t_min = match fwhm(&samples) {
        Ok(w) => w,
        Err(Error::Degenerate(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(SensingKernel {
        samples,
        tau: nominal.tau,
        alpha: nominal.alpha,
        omega_rabi: nominal.rabi,
        t_min,
        bandwidth: nominal.bandwidth_hz(),
        baseline: p0,
        response_scale,
    })
}
