use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::fit_sinc;
use super::Window;
use crate::error::{invalid, Error, Result};
use crate::fft::{forward_real, inverse_real, padded_len};
use crate::forward::MeasurementTrace;
use crate::waveforms::rel_close;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToFConfig {
    /// Regularization λ relative to the peak spectral magnitude of trace A.
    pub lambda: f64,
    #[serde(default)]
    pub window: Window,
    #[serde(default = "default_padding")]
    pub padding: usize,
    /// Peak-to-noise ratio below which no delay is reported.
    #[serde(default = "default_min_snr")]
    pub min_snr: f64,
    /// Noise resamplings used for the uncertainty; 0 keeps only the fit covariance.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_padding() -> usize {
    4
}

fn default_min_snr() -> f64 {
    3.0
}

fn default_bootstrap() -> usize {
    32
}

impl Default for ToFConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            window: Window::default(),
            padding: default_padding(),
            min_snr: default_min_snr(),
            bootstrap: default_bootstrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToFResult {
    /// Delay of trace B relative to trace A (s).
    pub delay: f64,
    /// One-standard-error delay uncertainty (s): the larger of the fit
    /// covariance estimate and the bootstrap spread.
    pub uncertainty: f64,
    /// Centre standard error from the sinc-fit covariance alone (s).
    pub fit_uncertainty: f64,
    pub peak_amplitude: f64,
    /// Lobe width parameter of the sinc fit (s).
    pub width: f64,
    pub snr: f64,
}

/// Part of the correlation main lobe (relative to its peak) used by the sinc fit.
const LOBE_FRACTION: f64 = 0.2;

const BOOTSTRAP_SEED: u64 = 0x746f_6621;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Delay of `b` relative to `a` from the peak of their cross-deconvolution
/// `H = A* B / (|A|² + λ²)`, refined by a sinc fit around the maximum.
///
/// The uncertainty combines the fit covariance with a parametric bootstrap:
/// white noise at the level measured in each trace is added and the delay
/// re-estimated `config.bootstrap` times.
pub fn estimate_tof(
    a: &MeasurementTrace,
    b: &MeasurementTrace,
    config: &ToFConfig,
) -> Result<ToFResult> {
    if !(config.lambda > 0.0 && config.lambda.is_finite()) {
        return Err(invalid("regularization λ must be positive"));
    }
    let step = a.step();
    if a.len() != b.len()
        || !rel_close(step, b.step(), 1e-9)
        || (a.times[0] - b.times[0]).abs() > 1e-6 * step
    {
        return Err(Error::GridMismatch(
            "traces must share the same sampling grid".into(),
        ));
    }
    if a.len() < 8 {
        return Err(invalid("traces are too short"));
    }
    let (da, db) = (a.delta_p(), b.delta_p());
    let best = locate(&da, &db, step, config)?;

    let (sa, sb) = (white_noise_level(&da), white_noise_level(&db));
    let mut jitter = 0.0;
    if config.bootstrap > 0 && (sa > 0.0 || sb > 0.0) {
        let shifts: Vec<f64> = (0..config.bootstrap as u64)
            .into_par_iter()
            .filter_map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
                rng.set_stream(k);
                let mut perturb = |x: &[f64], s: f64| -> Vec<f64> {
                    x.iter()
                        .map(|v| v + s * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                };
                let xa = perturb(&da, sa);
                let xb = perturb(&db, sb);
                locate(&xa, &xb, step, config)
                    .ok()
                    .map(|r| r.delay - best.delay)
            })
            .collect();
        if shifts.len() * 2 < config.bootstrap {
            return Err(Error::Degenerate(
                "delay estimate is unstable under the measured noise".into(),
            ));
        }
        jitter = (shifts.iter().map(|d| d * d).sum::<f64>() / shifts.len() as f64).sqrt();
    }
    Ok(ToFResult {
        uncertainty: best.fit_uncertainty.max(jitter),
        ..best
    })
}

/// Robust per-sample white-noise level from second differences, which
/// suppress the smooth signal.
fn white_noise_level(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let d: Vec<f64> = x.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
    let med = median(d.clone());
    1.4826 * median(d.iter().map(|v| (v - med).abs()).collect()) / 6f64.sqrt()
}

fn locate(da: &[f64], db: &[f64], step: f64, config: &ToFConfig) -> Result<ToFResult> {
    let n = da.len();
    let (mut da, mut db) = (da.to_vec(), db.to_vec());
    config.window.apply(&mut da);
    config.window.apply(&mut db);
    let len = padded_len(2 * n, config.padding);
    let sa = forward_real(&da, len);
    let sb = forward_real(&db, len);
    let amax = sa.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if amax == 0.0 {
        return Err(Error::NoPeak { snr: 0.0 });
    }
    let l2 = config.lambda * config.lambda;
    let h_spec: Vec<Complex64> = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| {
            let xn = x / amax;
            xn.conj() * (y / amax) / (xn.norm_sqr() + l2)
        })
        .collect();
    let h = inverse_real(h_spec);
    let max_lag = (n / 2) as i64;
    let lags: Vec<i64> = (-max_lag..=max_lag).collect();
    let at = |lag: i64| h[lag.rem_euclid(len as i64) as usize];
    let values: Vec<f64> = lags.iter().map(|&l| at(l)).collect();
    let (imax, &peak) = values
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty lag range");

    let med = median(values.clone());
    let mad = median(values.iter().map(|v| (v - med).abs()).collect());
    let noise = 1.4826 * mad;
    let snr = if noise > 0.0 {
        (peak - med) / noise
    } else {
        f64::INFINITY
    };
    if !(snr >= config.min_snr) || peak <= 0.0 {
        return Err(Error::NoPeak { snr });
    }

    let half = peak * LOBE_FRACTION;
    let mut lo = imax;
    while lo > 0 && values[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < values.len() && values[hi + 1] >= half {
        hi += 1;
    }
    while hi - lo + 1 < 5 {
        lo = lo.saturating_sub(1);
        hi = (hi + 1).min(values.len() - 1);
        if lo == 0 && hi == values.len() - 1 {
            break;
        }
    }
    let t: Vec<f64> = lags[lo..=hi].iter().map(|&l| l as f64 * step).collect();
    let y = &values[lo..=hi];
    let lobe = (hi - lo + 1) as f64 * step;
    let width0 = (lobe / 1.2067).max(step);
    let fit = fit_sinc(&t, y, [peak, lags[imax] as f64 * step, width0, 0.0])?;
    if !fit.center.is_finite() || (fit.center - lags[imax] as f64 * step).abs() > lobe {
        return Err(Error::Degenerate(
            "sinc fit diverged from the correlation peak".into(),
        ));
    }
    let fit_uncertainty = fit.center_std.max(f64::EPSILON * step);
    Ok(ToFResult {
        delay: fit.center,
        uncertainty: fit_uncertainty,
        fit_uncertainty,
        peak_amplitude: fit.amplitude + fit.offset,
        width: fit.width,
        snr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::SamplingPlan;

    fn trace_of(f: impl Fn(f64) -> f64, step: f64, n: usize) -> MeasurementTrace {
        let plan = SamplingPlan::new(
            -(n as f64 / 2.0) * step,
            (n as f64 / 2.0 - 1.0) * step,
            step,
        )
        .unwrap();
        let p = plan.times().iter().map(|&t| 0.5 + f(t)).collect();
        MeasurementTrace::from_probabilities(plan, p, 0.5, 1.0, None).unwrap()
    }

    fn pulse(t: f64) -> f64 {
        1e-3 * (-(t / 1e-9).powi(2)).exp() * (1.0 + 0.3 * (t / 0.7e-9).sin())
    }

    #[test]
    fn self_deconvolution_peaks_at_zero() {
        let a = trace_of(pulse, 25e-12, 800);
        let r = estimate_tof(&a, &a, &ToFConfig::default()).unwrap();
        assert!(r.delay.abs() < 1e-6 * 25e-12, "{}", r.delay);
        assert!(r.snr > 3.0);
    }

    #[test]
    fn integer_shift_is_recovered() {
        let step = 25e-12;
        let a = trace_of(pulse, step, 800);
        let b = trace_of(|t| pulse(t - 20.0 * step), step, 800);
        let r = estimate_tof(&a, &b, &ToFConfig::default()).unwrap();
        assert!((r.delay - 20.0 * step).abs() < 0.01 * step, "{}", r.delay);
    }

    #[test]
    fn fractional_shift_is_recovered() {
        let step = 25e-12;
        let a = trace_of(pulse, step, 800);
        let b = trace_of(|t| pulse(t - 512e-12), step, 800);
        let r = estimate_tof(&a, &b, &ToFConfig::default()).unwrap();
        assert!((r.delay - 512e-12).abs() < 0.1 * step, "{}", r.delay);
    }

    #[test]
    fn flat_traces_have_no_peak() {
        let a = trace_of(|_| 0.0, 25e-12, 64);
        assert!(matches!(
            estimate_tof(&a, &a, &ToFConfig::default()),
            Err(Error::NoPeak { .. })
        ));
    }

    #[test]
    fn grids_must_match() {
        let a = trace_of(pulse, 25e-12, 64);
        let b = trace_of(pulse, 20e-12, 64);
        assert!(matches!(
            estimate_tof(&a, &b, &ToFConfig::default()),
            Err(Error::GridMismatch(_))
        ));
    }
}
