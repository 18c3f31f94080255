use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::waveforms::sinc;

/// Least-squares fit of `A · sinc((t − t0) / w) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SincFit {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub offset: f64,
    /// Standard error of `center` from the residual variance.
    pub center_std: f64,
    pub residual_rms: f64,
    /// ∂center/∂y_i at the solution, for propagating correlated noise.
    pub center_gradient: Vec<f64>,
}

fn sinc_derivative(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let pi2 = std::f64::consts::PI.powi(2);
        -pi2 * x / 3.0
    } else {
        let px = std::f64::consts::PI * x;
        (px * px.cos() - px.sin()) / (px * x)
    }
}

fn model(p: &Vector4<f64>, t: f64) -> (f64, Vector4<f64>) {
    let (a, t0, w, c) = (p[0], p[1], p[2], p[3]);
    let x = (t - t0) / w;
    let s = sinc(x);
    let ds = sinc_derivative(x);
    (
        a * s + c,
        Vector4::new(s, -a * ds / w, -a * ds * x / w, 1.0),
    )
}

fn cost(p: &Vector4<f64>, t: &[f64], y: &[f64]) -> f64 {
    t.iter()
        .zip(y)
        .map(|(&ti, &yi)| (model(p, ti).0 - yi).powi(2))
        .sum()
}

/// Levenberg–Marquardt fit starting from `(amplitude, center, width, offset)`.
pub fn fit_sinc(t: &[f64], y: &[f64], init: [f64; 4]) -> Result<SincFit> {
    if t.len() != y.len() || t.len() < 5 {
        return Err(Error::Degenerate(
            "sinc fit needs at least five points".into(),
        ));
    }
    let mut p = Vector4::from(init);
    let mut lambda = 1e-3;
    let mut current = cost(&p, t, y);
    for _ in 0..200 {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let (f, j) = model(&p, ti);
            jtj += j * j.transpose();
            jtr += j * (yi - f);
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for k in 0..4 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(f64::MIN_POSITIVE);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = cost(&trial, t, y);
            if c.is_finite() && c <= current {
                let converged = (current - c) <= 1e-15 * current.max(f64::MIN_POSITIVE)
                    || step
                        .abs()
                        .iter()
                        .zip(p.iter())
                        .all(|(s, v)| *s <= 1e-12 * v.abs().max(1e-300));
                p = trial;
                current = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if converged {
                    return finish(p, t, current);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    finish(p, t, current)
}

fn finish(p: Vector4<f64>, t: &[f64], cost: f64) -> Result<SincFit> {
    let mut jtj = Matrix4::zeros();
    for &ti in t {
        let (_, j) = model(&p, ti);
        jtj += j * j.transpose();
    }
    let dof = (t.len() - 4).max(1) as f64;
    let variance = cost / dof;
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular sinc-fit normal matrix".into()))?;
    let row = cov.row(1).transpose();
    let center_gradient = t.iter().map(|&ti| row.dot(&model(&p, ti).1)).collect();
    Ok(SincFit {
        amplitude: p[0],
        center: p[1],
        width: p[2].abs(),
        offset: p[3],
        center_std: (variance * cov[(1, 1)]).max(0.0).sqrt(),
        residual_rms: (cost / t.len() as f64).sqrt(),
        center_gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_sinc() {
        let t: Vec<f64> = (0..21).map(|i| i as f64 - 10.0).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&x| 2.0 * sinc((x - 0.3) / 2.5) + 0.1)
            .collect();
        let f = fit_sinc(&t, &y, [1.5, 0.0, 2.0, 0.0]).unwrap();
        assert!((f.center - 0.3).abs() < 1e-8);
        assert!((f.width - 2.5).abs() < 1e-8);
        assert!((f.amplitude - 2.0).abs() < 1e-8);
        assert!(f.center_std < 1e-6);
        // a uniform offset leaves the centre unchanged
        assert!(f.center_gradient.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for x in [-1.7, -0.3, 1e-5, 0.2, 2.4] {
            let h = 1e-6;
            let fd = (sinc(x + h) - sinc(x - h)) / (2.0 * h);
            assert!((fd - sinc_derivative(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn noisy_fit_reports_uncertainty() {
        let t: Vec<f64> = (0..41).map(|i| (i as f64 - 20.0) * 0.25).collect();
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, &x)| sinc(x / 2.0) + 0.01 * ((i * 7919 % 13) as f64 / 6.0 - 1.0))
            .collect();
        let f = fit_sinc(&t, &y, [1.0, 0.1, 1.5, 0.0]).unwrap();
        assert!(f.center.abs() < 0.05);
        assert!(f.center_std > 0.0 && f.center_std < 0.05);
    }
}
