use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Window;
use crate::error::{invalid, Error, Result};
use crate::fft::{forward_real, inverse_real, padded_len};
use crate::forward::MeasurementTrace;
use crate::kernels::SensingKernel;
use crate::waveforms::SampledWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerConfig {
    /// Regularization λ relative to the peak kernel gain.
    pub lambda: f64,
    #[serde(default)]
    pub window: Window,
    /// Zero-padding factor applied after rounding up to a power of two.
    #[serde(default = "default_padding")]
    pub padding: usize,
}

fn default_padding() -> usize {
    2
}

impl WienerConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            window: Window::default(),
            padding: default_padding(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("regularization λ must be non-negative"));
        }
        if let Window::Taper { fraction } = self.window {
            if !(0.0..=0.5).contains(&fraction) {
                return Err(invalid("taper fraction must lie in [0, 0.5]"));
            }
        }
        Ok(())
    }
}

fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= 1e-6 * n).then_some(n as usize)
}

/// Kernel on the trace grid: `Kd[m]` for lags `m = first, first + 1, …` such
/// that `δp_j = Σ_m Kd[m] γ B_{j+m}` when B is linear between samples.
pub fn discrete_kernel(kernel: &SensingKernel, step: f64) -> Result<(i64, Vec<f64>)> {
    let dk = kernel.step();
    let fine = if integer_ratio(step, dk).is_some() {
        kernel.samples.clone()
    } else if let Some(r) = integer_ratio(dk, step) {
        let k = &kernel.samples;
        k.resampled(step, k.t0(), (k.len() - 1) * r + 1)?
    } else {
        return Err(Error::GridMismatch(format!(
            "kernel step {dk:e} s and trace step {step:e} s are not integer multiples"
        )));
    };
    let first = (fine.t0() / step).floor() as i64;
    let last = (fine.t_end() / step).ceil() as i64;
    let ds = fine.dt();
    let mut kd = vec![0.0; (last - first + 1) as usize];
    for (i, &k) in fine.values().iter().enumerate() {
        let pos = fine.time(i) / step;
        let m = pos.floor();
        let frac = pos - m;
        let idx = (m as i64 - first) as usize;
        kd[idx] += k * (1.0 - frac) * ds;
        if frac > 0.0 {
            kd[idx + 1] += k * frac * ds;
        }
    }
    for v in kd.iter_mut() {
        *v *= kernel.response_scale;
    }
    Ok((first, kd))
}

/// Wiener deconvolution of `trace` by `kernel`, returning B(t) in tesla.
///
/// `γB̃(f) = Ĝ*(f) P(f) / (|Ĝ(f)|² + λ²)` where G is the trace-grid
/// transfer function normalized to unit peak gain.
pub fn wiener_deconvolve(
    trace: &MeasurementTrace,
    kernel: &SensingKernel,
    gamma: f64,
    config: &WienerConfig,
) -> Result<SampledWaveform> {
    config.validate()?;
    if trace.is_empty() {
        return Err(invalid("empty trace"));
    }
    let step = trace.step();
    let (first, kd) = discrete_kernel(kernel, step)?;
    if kd.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroKernel);
    }
    let n = trace.len();
    let len = padded_len(n + kd.len(), config.padding);
    let mut g = vec![0.0; len];
    for (i, &v) in kd.iter().enumerate() {
        let lag = first + i as i64;
        g[(-lag).rem_euclid(len as i64) as usize] += v;
    }
    let mut data = trace.delta_p();
    config.window.apply(&mut data);
    let gs = forward_real(&g, len);
    let ps = forward_real(&data, len);
    let gmax = gs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if gmax == 0.0 {
        return Err(Error::ZeroKernel);
    }
    let lambda2 = config.lambda * config.lambda;
    let spectrum: Vec<Complex64> = gs
        .iter()
        .zip(&ps)
        .map(|(g, p)| {
            let gn = g / gmax;
            let denom = gn.norm_sqr() + lambda2;
            if denom == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                gn.conj() * p / (denom * gmax)
            }
        })
        .collect();
    let x = inverse_real(spectrum);
    let values = x[..n].iter().map(|v| v / gamma).collect();
    SampledWaveform::new(step, trace.times[0], values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ideal_response, SamplingPlan};
    use crate::kernels::{analytic_kernel, PulsePairSpec};
    use crate::spin::NvParams;
    use crate::units::hz_to_angular;
    use crate::waveforms::TimeGrid;
    use std::f64::consts::PI;

    fn delta_kernel(step: f64) -> SensingKernel {
        SensingKernel {
            samples: SampledWaveform::new(step, 0.0, vec![1.0 / step]).unwrap(),
            tau: step,
            alpha: PI / 2.0,
            omega_rabi: 0.0,
            t_min: step,
            bandwidth: 1.0 / step,
            baseline: 0.5,
            response_scale: 1.0,
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let step = 1e-11;
        let plan = SamplingPlan::new(0.0, 99.0 * step, step).unwrap();
        let p: Vec<f64> = (0..100)
            .map(|i| 0.5 + 1e-3 * (i as f64 * 0.37).sin())
            .collect();
        let trace = MeasurementTrace::from_probabilities(plan, p.clone(), 0.5, 1.0, None).unwrap();
        let cfg = WienerConfig {
            lambda: 0.0,
            window: Window::None,
            padding: 2,
        };
        let out = wiener_deconvolve(&trace, &delta_kernel(step), 1.0, &cfg).unwrap();
        for (o, pi) in out.values().iter().zip(&p) {
            assert!((o - (pi - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_kernel_sums_to_integral() {
        let p = NvParams::nv(0.036);
        let spec = PulsePairSpec::from_rabi_and_alpha(
            hz_to_angular(125e6),
            PI / 2.0,
            p.resonance_lower(),
            p.gyromagnetic_ratio,
        )
        .unwrap();
        let k = analytic_kernel(&spec, &TimeGrid::symmetric(5e-12, 2.5e-9).unwrap()).unwrap();
        for step in [5e-12, 2e-11, 5e-11] {
            let (_, kd) = discrete_kernel(&k, step).unwrap();
            let s: f64 = kd.iter().sum();
            assert!(
                ((s - k.integral()) / k.integral()).abs() < 1e-12,
                "step {step}"
            );
        }
        assert!(matches!(
            discrete_kernel(&k, 7e-12),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn recovers_smooth_field() {
        let p = NvParams::nv(0.036);
        let gamma = p.gyromagnetic_ratio;
        let spec = PulsePairSpec::from_rabi_and_alpha(
            hz_to_angular(125e6),
            PI / 2.0,
            p.resonance_lower(),
            gamma,
        )
        .unwrap();
        let k = analytic_kernel(&spec, &TimeGrid::symmetric(1e-11, 2.5e-9).unwrap()).unwrap();
        let truth = |t: f64| 1e-4 * (-(t / 1.5e-9).powi(2)).exp();
        let signal = SampledWaveform::on_range(1e-11, -20e-9, 20e-9, truth).unwrap();
        let plan = SamplingPlan::new(-10e-9, 10e-9, 2e-11).unwrap();
        let trace = ideal_response(&k, &signal, &plan, gamma).unwrap();
        let cfg = WienerConfig {
            lambda: 1e-4,
            window: Window::None,
            padding: 2,
        };
        let out = wiener_deconvolve(&trace, &k, gamma, &cfg).unwrap();
        let worst = out
            .times()
            .zip(out.values())
            .filter(|(t, _)| t.abs() < 6e-9)
            .map(|(t, v)| (v - truth(t)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-2 * 1e-4, "worst {worst}");
    }

    #[test]
    fn zero_kernel_is_rejected() {
        let step = 1e-11;
        let mut k = delta_kernel(step);
        k.samples = SampledWaveform::zeros(step, 0.0, 3).unwrap();
        let plan = SamplingPlan::new(0.0, 9.0 * step, step).unwrap();
        let trace =
            MeasurementTrace::from_probabilities(plan, vec![0.5; 10], 0.5, 1.0, None).unwrap();
        assert!(matches!(
            wiener_deconvolve(&trace, &k, 1.0, &WienerConfig::new(0.1)),
            Err(Error::ZeroKernel)
        ));
    }
}
