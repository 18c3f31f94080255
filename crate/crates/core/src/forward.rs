//! Measurement simulation: linear (convolution) and lab-frame responses,
//! equivalent-time sampling with photon shot noise and trigger jitter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::SensingKernel;
use crate::spin::{propagate, transition_probability, FieldSamples, NvParams, SpinState};
use crate::waveforms::{distort, DistortionModel, SampledWaveform};

/// Photon-statistics parameters of the optical readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutParams {
    /// Optical contrast ε between m_S = 0 and m_S = −1.
    pub contrast: f64,
    /// Continuous-wave count rate I0 (counts/s).
    pub cw_rate: f64,
    /// Photon integration window per repetition (s).
    pub integration_time: f64,
    /// Repetition period (s).
    pub sequence_time: f64,
    /// Averaging time per sampling point (s).
    pub total_time: f64,
    /// When false, p̂ equals the noiseless response.
    #[serde(default = "default_true")]
    pub shot_noise: bool,
    /// Smallest C0 accepted when shot noise is on.
    #[serde(default = "default_count_floor")]
    pub min_reference_counts: f64,
}

fn default_true() -> bool {
    true
}

fn default_count_floor() -> f64 {
    100.0
}

impl ReadoutParams {
    pub fn new(
        contrast: f64,
        cw_rate: f64,
        integration_time: f64,
        sequence_time: f64,
        total_time: f64,
    ) -> Result<Self> {
        let r = Self {
            contrast,
            cw_rate,
            integration_time,
            sequence_time,
            total_time,
            shot_noise: true,
            min_reference_counts: default_count_floor(),
        };
        r.validate()?;
        Ok(r)
    }

    /// Readout with the given C0, built from I0 = C0 counts/s and unit duty cycle over 1 s.
    pub fn with_reference_counts(contrast: f64, c0: f64) -> Result<Self> {
        Self::new(contrast, c0, 1.0, 1.0, 1.0)
    }

    pub fn noiseless(mut self) -> Self {
        self.shot_noise = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(invalid(format!(
                "contrast must lie in (0, 1), got {}",
                self.contrast
            )));
        }
        for (v, name) in [
            (self.cw_rate, "count rate"),
            (self.integration_time, "integration time"),
            (self.sequence_time, "sequence time"),
            (self.total_time, "total time"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// C0 = I0 · T · t_int / t_seq.
    pub fn reference_counts(&self) -> f64 {
        self.cw_rate * self.total_time * self.integration_time / self.sequence_time
    }
}

/// Equivalent-time sampling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub t_start: f64,
    pub t_end: f64,
    /// Delay increment Δt (s).
    pub step: f64,
    /// RMS trigger jitter (s).
    #[serde(default)]
    pub trigger_jitter_rms: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SamplingPlan {
    pub fn new(t_start: f64, t_end: f64, step: f64) -> Result<Self> {
        let plan = Self {
            t_start,
            t_end,
            step,
            trigger_jitter_rms: 0.0,
            rng_seed: 0,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_jitter(mut self, rms: f64) -> Self {
        self.trigger_jitter_rms = rms;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("sampling step must be positive"));
        }
        if !(self.t_end >= self.t_start) {
            return Err(invalid("sampling range is empty"));
        }
        if !(self.trigger_jitter_rms >= 0.0) {
            return Err(invalid("trigger jitter must be non-negative"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.t_end - self.t_start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }
}

/// Raw photon counts of one sampling point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCounts {
    pub signal: f64,
    /// Reference recorded in m_S = 0 (p = 1).
    pub bright: f64,
    /// Reference recorded in m_S = −1 (p = 0).
    pub dark: f64,
}

/// A sampled probability trace with its field calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementTrace {
    pub times: Vec<f64>,
    pub p_values: Vec<f64>,
    pub field_values: Vec<f64>,
    pub readout: Option<ReadoutParams>,
    pub plan: SamplingPlan,
    /// Signal-free probability p0.
    pub baseline: f64,
    /// δp per tesla of a field constant over the kernel, `scale · γ · ∫k dt`.
    pub calibration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<PointCounts>>,
}

impl MeasurementTrace {
    /// Builds a trace from probabilities, deriving the calibrated field.
    pub fn from_probabilities(
        plan: SamplingPlan,
        p_values: Vec<f64>,
        baseline: f64,
        calibration: f64,
        readout: Option<ReadoutParams>,
    ) -> Result<Self> {
        plan.validate()?;
        if p_values.len() != plan.len() {
            return Err(Error::GridMismatch(format!(
                "{} probabilities for a {}-point plan",
                p_values.len(),
                plan.len()
            )));
        }
        if calibration == 0.0 || !calibration.is_finite() {
            return Err(invalid("field calibration must be finite and non-zero"));
        }
        let field_values = p_values
            .iter()
            .map(|p| (p - baseline) / calibration)
            .collect();
        Ok(Self {
            times: plan.times(),
            p_values,
            field_values,
            readout,
            plan,
            baseline,
            calibration,
            counts: None,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.plan.step
    }

    /// p − p0.
    pub fn delta_p(&self) -> Vec<f64> {
        self.p_values.iter().map(|p| p - self.baseline).collect()
    }

    pub fn field_waveform(&self) -> Result<SampledWaveform> {
        SampledWaveform::new(self.plan.step, self.times[0], self.field_values.clone())
    }

    pub fn probability_waveform(&self) -> Result<SampledWaveform> {
        SampledWaveform::new(self.plan.step, self.times[0], self.p_values.clone())
    }

    /// Zero-phase single-pole smoothing with time constant `tau_3db`, for display.
    pub fn display_filtered(&self, tau_3db: f64) -> Result<Self> {
        let f3db = 1.0 / (2.0 * std::f64::consts::PI * tau_3db);
        let model = DistortionModel::LowPass { f3db_hz: f3db };
        let smooth = |v: &[f64]| -> Result<Vec<f64>> {
            let n = v.len();
            let w = SampledWaveform::new(self.plan.step, 0.0, v.to_vec())?;
            let mut fwd = distort(&w, &model)?.into_values();
            fwd.reverse();
            let back =
                distort(&SampledWaveform::new(self.plan.step, 0.0, fwd)?, &model)?.into_values();
            let m = back.len();
            Ok((0..n).map(|i| back[m - 1 - i]).collect())
        };
        let dp: Vec<f64> = smooth(&self.delta_p())?;
        let mut out = self.clone();
        out.p_values = dp
            .iter()
            .map(|d| (self.baseline + d).clamp(0.0, 1.0))
            .collect();
        out.field_values = dp.iter().map(|d| d / self.calibration).collect();
        Ok(out)
    }
}

/// Linear response `δp(t) = scale · Σ_s k(s) γ B(t + s) Δs` at delay `t`.
pub fn convolve_at(kernel: &SensingKernel, signal: &SampledWaveform, gamma: f64, t: f64) -> f64 {
    let k = &kernel.samples;
    let sum: f64 = k
        .values()
        .iter()
        .enumerate()
        .map(|(i, &kv)| {
            if kv == 0.0 {
                0.0
            } else {
                kv * signal.value_at(t + k.time(i))
            }
        })
        .sum();
    kernel.response_scale * gamma * sum * k.dt()
}

/// δp per tesla for a field constant over the kernel.
pub fn kernel_calibration(kernel: &SensingKernel, gamma: f64) -> f64 {
    kernel.response_scale * gamma * kernel.integral()
}

/// Noiseless trace from the convolution model.
pub fn ideal_response(
    kernel: &SensingKernel,
    signal: &SampledWaveform,
    plan: &SamplingPlan,
    gamma: f64,
) -> Result<MeasurementTrace> {
    plan.validate()?;
    let p: Vec<f64> = plan
        .times()
        .par_iter()
        .map(|&t| kernel.baseline + convolve_at(kernel, signal, gamma, t))
        .collect();
    MeasurementTrace::from_probabilities(
        *plan,
        p,
        kernel.baseline,
        kernel_calibration(kernel, gamma),
        None,
    )
}

/// Lab-frame |⟨0|ψ⟩|² with the drive centred at `delay` on the signal's time axis.
pub fn full_response(
    params: &NvParams,
    drive: &SampledWaveform,
    signal: &SampledWaveform,
    delay: f64,
) -> Result<f64> {
    let axial = SampledWaveform::from_fn(drive.dt(), drive.t0(), drive.len(), |t| {
        signal.value_at(t + delay)
    })?;
    let fields = FieldSamples::new(drive.clone(), axial)?;
    Ok(transition_probability(&propagate(
        &SpinState::ground(),
        &fields,
        params,
    )?))
}

/// Source of the noiseless probability at each delay.
#[derive(Debug, Clone, Copy)]
pub enum Responder<'a> {
    /// Convolution of `signal` with `kernel`.
    Ideal {
        kernel: &'a SensingKernel,
        signal: &'a SampledWaveform,
        gamma: f64,
    },
    /// Full lab-frame propagation; `kernel` (simulated from the same drive)
    /// provides the baseline and the field calibration.
    Full {
        params: &'a NvParams,
        drive: &'a SampledWaveform,
        signal: &'a SampledWaveform,
        kernel: &'a SensingKernel,
    },
}

impl Responder<'_> {
    pub fn probability(&self, delay: f64) -> Result<f64> {
        match self {
            Responder::Ideal {
                kernel,
                signal,
                gamma,
            } => Ok(kernel.baseline + convolve_at(kernel, signal, *gamma, delay)),
            Responder::Full {
                params,
                drive,
                signal,
                ..
            } => full_response(params, drive, signal, delay),
        }
    }

    pub fn baseline(&self) -> f64 {
        match self {
            Responder::Ideal { kernel, .. } | Responder::Full { kernel, .. } => kernel.baseline,
        }
    }

    pub fn calibration(&self) -> f64 {
        match self {
            Responder::Ideal { kernel, gamma, .. } => kernel_calibration(kernel, *gamma),
            Responder::Full { kernel, params, .. } => {
                kernel_calibration(kernel, params.gyromagnetic_ratio)
            }
        }
    }
}

/// Per-point RNG stream, independent of evaluation order.
fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng)
}

/// Equivalent-time sampled trace with shot noise and trigger jitter.
///
/// `p` is the m_S = 0 population, so at each point signal counts
/// `~ Poisson((1 − ε(1 − p)) C0)` are normalized by concurrently drawn bright
/// (`C0`) and dark (`(1 − ε) C0`) references:
/// `p̂ = (S − R_dark) / (R_bright − R_dark)`, clamped to [0, 1].
pub fn sample_trace(
    responder: &Responder<'_>,
    plan: &SamplingPlan,
    readout: &ReadoutParams,
) -> Result<MeasurementTrace> {
    plan.validate()?;
    readout.validate()?;
    let c0 = readout.reference_counts();
    if readout.shot_noise && c0 < readout.min_reference_counts {
        return Err(Error::InvalidCounts {
            c0,
            floor: readout.min_reference_counts,
        });
    }
    let jitter = if plan.trigger_jitter_rms > 0.0 {
        Some(Normal::new(0.0, plan.trigger_jitter_rms).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };
    let eps = readout.contrast;
    let points: Vec<(f64, Option<PointCounts>)> = (0..plan.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, Option<PointCounts>)> {
            let mut rng = point_rng(plan.rng_seed, i);
            let shift = jitter.map_or(0.0, |d| d.sample(&mut rng));
            let p = responder.probability(plan.time(i) + shift)?;
            if !readout.shot_noise {
                return Ok((p, None));
            }
            let counts = PointCounts {
                signal: poisson((1.0 - eps * (1.0 - p)) * c0, &mut rng),
                bright: poisson(c0, &mut rng),
                dark: poisson((1.0 - eps) * c0, &mut rng),
            };
            let span = counts.bright - counts.dark;
            let p_hat = if span > 0.0 {
                ((counts.signal - counts.dark) / span).clamp(0.0, 1.0)
            } else {
                0.5
            };
            Ok((p_hat, Some(counts)))
        })
        .collect::<Result<_>>()?;
    let p_values = points.iter().map(|p| p.0).collect();
    let counts: Option<Vec<PointCounts>> = points.iter().map(|p| p.1).collect();
    let mut trace = MeasurementTrace::from_probabilities(
        *plan,
        p_values,
        responder.baseline(),
        responder.calibration(),
        Some(*readout),
    )?;
    trace.counts = counts;
    Ok(trace)
}
