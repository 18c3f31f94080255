use std::f64::consts::PI;

use crate::error::Result;

use super::SampledWaveform;

/// Half-width (in samples) of the Lanczos interpolation window.
const LANCZOS_LOBES: i64 = 16;

/// Returns `w` delayed by `delay`: `out(t) = w(t − delay)` on the same grid.
///
/// Whole-sample delays are pure index shifts; fractional delays use
/// Lanczos-windowed sinc interpolation. Samples beyond either end are taken
/// to equal the nearest end value.
pub fn shift_waveform(w: &SampledWaveform, delay: f64) -> Result<SampledWaveform> {
    let shift = delay / w.dt();
    let whole = shift.round();
    let v = w.values();
    let n = v.len() as i64;
    let at = |i: i64| v[i.clamp(0, n - 1) as usize];
    let values: Vec<f64> = if (shift - whole).abs() < 1e-9 {
        let k = whole as i64;
        (0..n).map(|i| at(i - k)).collect()
    } else {
        (0..n)
            .map(|i| {
                let x = i as f64 - shift;
                let base = x.floor() as i64;
                ((base - LANCZOS_LOBES + 1)..=(base + LANCZOS_LOBES))
                    .map(|j| at(j) * lanczos(x - j as f64))
                    .sum()
            })
            .collect()
    };
    SampledWaveform::new(w.dt(), w.t0(), values)
}

fn lanczos(x: f64) -> f64 {
    let a = LANCZOS_LOBES as f64;
    if x.abs() >= a {
        0.0
    } else {
        sinc(x) * sinc(x / a)
    }
}

/// Normalized sinc, `sin(πx)/(πx)`.
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// A waveform and its copy delayed by `delay`.
pub fn tof_pair(base: &SampledWaveform, delay: f64) -> Result<(SampledWaveform, SampledWaveform)> {
    Ok((base.clone(), shift_waveform(base, delay)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveforms::{step_pulse, TimeGrid};

    fn base() -> SampledWaveform {
        let grid = TimeGrid::new(25e-12, -5e-9, 15e-9).unwrap();
        step_pulse(1.0, 1e-9, 4e-9, &grid).unwrap()
    }

    #[test]
    fn zero_delay_is_identity() {
        let w = base();
        let (a, b) = tof_pair(&w, 0.0).unwrap();
        assert_eq!(a, w);
        assert_eq!(b, w);
    }

    #[test]
    fn whole_sample_delay_is_index_shift() {
        let w = base();
        let (_, b) = tof_pair(&w, 4.0 * w.dt()).unwrap();
        for i in 4..w.len() {
            assert_eq!(b.values()[i], w.values()[i - 4]);
        }
    }

    #[test]
    fn fractional_delay_matches_analytic_shift() {
        let grid = TimeGrid::new(25e-12, -5e-9, 15e-9).unwrap();
        let w = step_pulse(1.0, 1e-9, 4e-9, &grid).unwrap();
        let delay = 37e-12;
        let shifted = shift_waveform(&w, delay).unwrap();
        let exact = step_pulse(
            1.0,
            1e-9,
            4e-9,
            &TimeGrid::new(0.5e-12, -5e-9, 15e-9).unwrap(),
        )
        .unwrap()
        .shifted_in_time(delay);
        for i in 40..w.len() - 40 {
            let t = w.time(i);
            assert!(
                (shifted.values()[i] - exact.value_at(t)).abs() < 1e-4,
                "t={t}"
            );
        }
    }

    #[test]
    fn cross_correlation_locates_delay() {
        let w = base();
        let delay = 500e-12;
        let (a, b) = tof_pair(&w, delay).unwrap();
        // brute-force cross-correlation over integer lags
        let (va, vb) = (a.values(), b.values());
        let n = va.len() as i64;
        let best = (-60i64..=60)
            .max_by(|&l1, &l2| {
                let c = |l: i64| -> f64 {
                    (0..n)
                        .filter(|&i| i + l >= 0 && i + l < n)
                        .map(|i| va[i as usize] * vb[(i + l) as usize])
                        .sum()
                };
                c(l1).total_cmp(&c(l2))
            })
            .unwrap();
        let found = best as f64 * w.dt();
        assert!((found - delay).abs() <= w.dt() / 2.0);
    }
}
