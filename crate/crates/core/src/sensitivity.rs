//! Shot-noise figures of merit for a pulse-pair sequence.
//!
//! Counts follow `C(φ) = [1 − ε p(φ)] C0` where `p` is the transition
//! probability out of m_S = 0 and `φ = γ B τ` is the phase a constant field
//! accumulates over the kernel. For an ideal two-level sequence
//! `p(φ) = sin²α / 2 − φ (1 − cos α) sin α / (2α)` to first order, which gives
//!
//! ```text
//! SNR   = ε φ (1 − cos α) sin α / (α √(4 − 2ε sin²α)) · √C0
//! B_min = α √(4 − 2ε sin²α) / (ε γ τ (1 − cos α) sin α √C0)
//! ```
//!
//! `B_min` is quoted per √Hz when C0 is the count for one second of
//! averaging. Placing √C0 in the numerator of `B_min` instead would make the
//! sensitivity worsen with averaging and disagree with the SNR expression.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forward::ReadoutParams;
use crate::kernels::time_resolution_formula;

/// One point of the sensitivity versus time-resolution trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub alpha: f64,
    pub tau: f64,
    pub t_min: f64,
    pub b_min: f64,
}

/// Signal-free transition probability sin²α / 2.
pub fn transition_baseline(alpha: f64) -> f64 {
    alpha.sin().powi(2) / 2.0
}

/// |dp/dφ| = (1 − cos α) sin α / (2α).
pub fn phase_slope(alpha: f64) -> f64 {
    (1.0 - alpha.cos()) * alpha.sin() / (2.0 * alpha)
}

/// Expected photon counts for phase `φ`. A zero contrast is allowed here.
pub fn expected_counts(phi: f64, alpha: f64, readout: &ReadoutParams) -> Result<f64> {
    if readout.contrast != 0.0 {
        readout.validate()?;
    } else {
        ReadoutParams {
            contrast: 0.5,
            ..*readout
        }
        .validate()?;
    }
    let p = transition_baseline(alpha) - phase_slope(alpha) * phi;
    Ok((1.0 - readout.contrast * p) * readout.reference_counts())
}

/// Shot-noise-limited SNR `(C(φ) − C(0)) / √C(0)`.
pub fn snr(phi: f64, alpha: f64, contrast: f64, c0: f64) -> f64 {
    snr_factor(alpha, contrast) * phi * c0.sqrt()
}

/// SNR per unit phase at C0 = 1.
pub fn snr_factor(alpha: f64, contrast: f64) -> f64 {
    contrast * (1.0 - alpha.cos()) * alpha.sin()
        / (alpha * (4.0 - 2.0 * contrast * alpha.sin().powi(2)).sqrt())
}

/// Field at which the SNR reaches one (tesla, or T/√Hz for one-second C0).
pub fn min_detectable_field(
    alpha: f64,
    tau: f64,
    contrast: f64,
    gamma: f64,
    c0: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < std::f64::consts::PI)
        || alpha.sin() <= 1e-12
        || 1.0 - alpha.cos() <= 1e-12
    {
        return Err(Error::DegenerateAngle { alpha });
    }
    for (name, v) in [("τ", tau), ("γ", gamma), ("C0", c0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} must be positive")));
        }
    }
    if !(0.0..=1.0).contains(&contrast) {
        return Err(invalid("contrast must lie in [0, 1]"));
    }
    if contrast == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (snr_factor(alpha, contrast) * gamma * tau * c0.sqrt()))
}

/// B_min against t_min for rotation angles at fixed Rabi frequency, with
/// `τ = 2α/Ω`. Sorted by t_min.
pub fn tradeoff_curve(
    alphas: &[f64],
    rabi: f64,
    contrast: f64,
    gamma: f64,
    c0: f64,
) -> Result<Vec<SensitivityPoint>> {
    if !(rabi > 0.0 && rabi.is_finite()) {
        return Err(invalid("Rabi frequency must be positive"));
    }
    let mut points = alphas
        .iter()
        .map(|&alpha| {
            if !(alpha > 0.0 && alpha <= std::f64::consts::FRAC_PI_2 * (1.0 + 1e-12)) {
                return Err(invalid(format!("rotation angle {alpha} outside (0, π/2]")));
            }
            let tau = 2.0 * alpha / rabi;
            Ok(SensitivityPoint {
                alpha,
                tau,
                t_min: time_resolution_formula(tau, alpha),
                b_min: min_detectable_field(alpha, tau, contrast, gamma, c0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.t_min.total_cmp(&b.t_min));
    Ok(points)
}
