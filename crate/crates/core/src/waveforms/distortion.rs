use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

use super::SampledWaveform;

/// Linear distortion of the control-pulse path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistortionModel {
    /// Identity.
    None,
    /// Causal single-pole (RC) low-pass with unit DC gain, applied to the raw samples.
    LowPass { f3db_hz: f64 },
    /// Single-pole low-pass acting on the complex envelope around `carrier_hz`.
    ///
    /// This is the band-pass equivalent of [`DistortionModel::LowPass`] for a
    /// modulated microwave pulse: the envelope sees unit DC gain and a
    /// causal exponential response, the carrier is untouched.
    EnvelopeLowPass { f3db_hz: f64, carrier_hz: f64 },
    /// Convolution with a sampled impulse response `h(t)` in 1/s; sample 0 is lag 0.
    Measured { impulse: Option<SampledWaveform> },
}

impl DistortionModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistortionModel::None => Ok(()),
            DistortionModel::LowPass { f3db_hz } => positive(*f3db_hz, "f3dB"),
            DistortionModel::EnvelopeLowPass {
                f3db_hz,
                carrier_hz,
            } => {
                positive(*f3db_hz, "f3dB")?;
                positive(*carrier_hz, "carrier frequency")
            }
            DistortionModel::Measured { impulse } => match impulse {
                Some(h) if !h.is_empty() => Ok(()),
                _ => Err(Error::BadImpulse),
            },
        }
    }
}

fn positive(v: f64, name: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Number of RC time constants appended so the filter tail decays below 1e-12.
pub(crate) const TAIL_TIME_CONSTANTS: f64 = 28.0;

/// Filters `w` causally. The output is extended by the filter's ringdown tail.
pub fn distort(w: &SampledWaveform, model: &DistortionModel) -> Result<SampledWaveform> {
    model.validate()?;
    match model {
        DistortionModel::None => Ok(w.clone()),
        DistortionModel::LowPass { f3db_hz } => {
            let (decay, tail) = pole(w.dt(), *f3db_hz);
            let mut out = Vec::with_capacity(w.len() + tail);
            let mut y = 0.0;
            for x in w
                .values()
                .iter()
                .copied()
                .chain(std::iter::repeat_n(0.0, tail))
            {
                y = decay * y + (1.0 - decay) * x;
                out.push(y);
            }
            SampledWaveform::new(w.dt(), w.t0(), out)
        }
        DistortionModel::EnvelopeLowPass {
            f3db_hz,
            carrier_hz,
        } => {
            let (decay, tail) = pole(w.dt(), *f3db_hz);
            let padded = w.padded(0, tail);
            let analytic = analytic_signal(padded.values());
            let wc = 2.0 * PI * carrier_hz;
            let mut env = Complex64::new(0.0, 0.0);
            let out = analytic
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let rot = Complex64::from_polar(1.0, wc * padded.time(i));
                    env = env * decay + a * rot.conj() * (1.0 - decay);
                    (env * rot).re
                })
                .collect();
            SampledWaveform::new(w.dt(), w.t0(), out)
        }
        DistortionModel::Measured { impulse } => {
            let h = impulse.as_ref().ok_or(Error::BadImpulse)?;
            let h = if super::rel_close(h.dt(), w.dt(), 1e-9) {
                h.values().to_vec()
            } else {
                let len = ((h.len() - 1) as f64 * h.dt() / w.dt()).floor() as usize + 1;
                h.resampled(w.dt(), h.t0(), len)?.into_values()
            };
            let x = w.values();
            let n = x.len() + h.len() - 1;
            let out = (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(x.len() - 1);
                    let hi = i.min(h.len() - 1);
                    (lo..=hi).map(|k| h[k] * x[i - k]).sum::<f64>() * w.dt()
                })
                .collect();
            SampledWaveform::new(w.dt(), w.t0(), out)
        }
    }
}

/// Per-sample decay factor and tail length for a single pole at `f3db_hz`.
fn pole(dt: f64, f3db_hz: f64) -> (f64, usize) {
    let rc = 1.0 / (2.0 * PI * f3db_hz);
    let decay = (-dt / rc).exp();
    (decay, (TAIL_TIME_CONSTANTS * rc / dt).ceil() as usize)
}

/// x + i·H[x] through the FFT (zero-padded 2× against wrap-around).
fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = (2 * x.len()).next_power_of_two();
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || k == n / 2 {
            continue;
        }
        if k < n / 2 {
            *v *= 2.0;
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.truncate(x.len());
    let scale = 1.0 / n as f64;
    buf.iter().map(|v| v * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(dt: f64) -> SampledWaveform {
        SampledWaveform::from_fn(dt, 0.0, 4000, |t| {
            (-((t - 1e-9) / 0.2e-9).powi(2) / 2.0).exp()
        })
        .unwrap()
    }

    #[test]
    fn none_is_bitwise_identity() {
        let w = gaussian(1e-12);
        assert_eq!(distort(&w, &DistortionModel::None).unwrap(), w);
    }

    #[test]
    fn low_pass_rise_time() {
        let dt = 1e-12;
        let step = SampledWaveform::from_fn(dt, 0.0, 3000, |_| 1.0).unwrap();
        let f3db = 1e9;
        let y = distort(&step, &DistortionModel::LowPass { f3db_hz: f3db }).unwrap();
        let crossing = |level: f64| {
            let i = y.values().iter().position(|&v| v >= level).unwrap();
            let v = y.values();
            y.time(i - 1) + (level - v[i - 1]) / (v[i] - v[i - 1]) * dt
        };
        let rise = crossing(0.9) - crossing(0.1);
        let expected = 9f64.ln() / (2.0 * PI * f3db);
        assert!((rise - expected).abs() < dt);
    }

    #[test]
    fn unit_dc_gain_preserves_area() {
        let w = gaussian(1e-12);
        for model in [
            DistortionModel::LowPass { f3db_hz: 1e9 },
            DistortionModel::LowPass { f3db_hz: 0.2e9 },
            DistortionModel::Measured {
                impulse: Some(
                    SampledWaveform::from_fn(1e-12, 0.0, 500, |t| (-t / 100e-12).exp() / 100e-12)
                        .unwrap(),
                ),
            },
        ] {
            let y = distort(&w, &model).unwrap();
            let gain = match &model {
                DistortionModel::Measured { impulse: Some(h) } => h.integral(),
                _ => 1.0,
            };
            assert!(
                ((y.integral() - gain * w.integral()) / w.integral()).abs() < 1e-6,
                "{model:?}"
            );
        }
    }

    #[test]
    fn filtering_is_causal() {
        let dt = 1e-12;
        let mut v = vec![0.0; 1000];
        v[500] = 1.0;
        let w = SampledWaveform::new(dt, 0.0, v).unwrap();
        let y = distort(&w, &DistortionModel::LowPass { f3db_hz: 2e9 }).unwrap();
        assert!(y.values()[..500].iter().all(|&x| x == 0.0));
        assert!(y.values()[500] > 0.0);
    }

    #[test]
    fn missing_impulse_is_an_error() {
        let w = gaussian(1e-12);
        assert!(matches!(
            distort(&w, &DistortionModel::Measured { impulse: None }),
            Err(Error::BadImpulse)
        ));
    }

    #[test]
    fn envelope_filter_keeps_carrier_amplitude() {
        let dt = 1e-12;
        let fc = 1.86e9;
        let w = SampledWaveform::from_fn(dt, 0.0, 10000, |t| (2.0 * PI * fc * t).cos()).unwrap();
        let y = distort(
            &w,
            &DistortionModel::EnvelopeLowPass {
                f3db_hz: 1e9,
                carrier_hz: fc,
            },
        )
        .unwrap();
        // well away from both record edges the carrier amplitude is unity
        let late = &y.values()[4000..6000];
        let peak = late.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.01, "peak {peak}");
        // the envelope rises with the RC time constant
        let early = &y.values()[0..300];
        let early_peak = early.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(early_peak < 0.9);
    }
}
