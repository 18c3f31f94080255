//! Lab-frame dynamics of the NV ground-state spin triplet.
//!
//! Basis ordering is fixed as `(m_S = +1, 0, -1)`. The Hamiltonian
//!
//! ```text
//! H = D Sz² + γ B0 Sz + γ b1(t) Sx + γ b_axial(t) Sz
//! ```
//!
//! is real symmetric in this basis, so each piecewise-constant step is
//! exponentiated exactly through its eigendecomposition. Pure states are
//! propagated: no relaxation is modelled, so density-matrix evolution of the
//! initially pure state carries no extra information.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{invalid, Error, Result};
use crate::units::{hz_to_angular, NV_GAMMA_HZ_PER_T, NV_ZFS_HZ};
use crate::waveforms::SampledWaveform;

/// Hard ceiling on `dt * ω'` for a propagation step.
pub const MAX_STEP_PHASE: f64 = 0.5;

/// Recommended ceiling on `dt * ω'`.
pub const RECOMMENDED_STEP_PHASE: f64 = 0.1;

/// Index of `m_S = 0` in the state vector.
pub const MS_ZERO: usize = 1;
/// Index of `m_S = -1` in the state vector.
pub const MS_MINUS: usize = 2;
/// Index of `m_S = +1` in the state vector.
pub const MS_PLUS: usize = 0;

/// Spin probe constants and bias configuration. Frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvParams {
    /// Zero-field splitting D (rad/s).
    pub zero_field_splitting: f64,
    /// Gyromagnetic ratio γ (rad/(s·T)).
    pub gyromagnetic_ratio: f64,
    /// Axial bias field B0 (T).
    pub bias_field: f64,
    /// NV axis polar angle in the lab frame (rad).
    pub axis_polar: f64,
    /// NV axis azimuth in the lab frame (rad).
    pub axis_azimuth: f64,
}

impl NvParams {
    pub fn new(
        zero_field_splitting: f64,
        gyromagnetic_ratio: f64,
        bias_field: f64,
        axis_polar: f64,
        axis_azimuth: f64,
    ) -> Result<Self> {
        let p = Self {
            zero_field_splitting,
            gyromagnetic_ratio,
            bias_field,
            axis_polar,
            axis_azimuth,
        };
        p.validate()?;
        Ok(p)
    }

    /// Standard NV constants with the given axial bias field and the axis along lab z.
    pub fn nv(bias_field: f64) -> Self {
        Self {
            zero_field_splitting: hz_to_angular(NV_ZFS_HZ),
            gyromagnetic_ratio: hz_to_angular(NV_GAMMA_HZ_PER_T),
            bias_field,
            axis_polar: 0.0,
            axis_azimuth: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.zero_field_splitting,
            self.gyromagnetic_ratio,
            self.bias_field,
            self.axis_polar,
            self.axis_azimuth,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("NV parameters must be finite"));
        }
        if self.zero_field_splitting <= 0.0 {
            return Err(invalid("zero-field splitting must be positive"));
        }
        if self.gyromagnetic_ratio <= 0.0 {
            return Err(invalid("gyromagnetic ratio must be positive"));
        }
        if self.bias_field < 0.0 {
            return Err(invalid("bias field must be non-negative"));
        }
        if self.resonance_lower() <= 0.0 {
            return Err(invalid(
                "bias field beyond the level anticrossing (D - γB0 <= 0)",
            ));
        }
        Ok(())
    }

    /// ω = D − γB0, the m_S = 0 ↔ −1 transition (rad/s).
    pub fn resonance_lower(&self) -> f64 {
        self.zero_field_splitting - self.gyromagnetic_ratio * self.bias_field
    }

    /// ω' = D + γB0, the m_S = 0 ↔ +1 transition (rad/s).
    pub fn resonance_upper(&self) -> f64 {
        self.zero_field_splitting + self.gyromagnetic_ratio * self.bias_field
    }
}

/// Real symmetric 3×3 Hamiltonian in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hamiltonian(pub Matrix3<f64>);

impl Hamiltonian {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_complex(&self) -> Matrix3<Complex64> {
        self.0.map(|v| Complex64::new(v, 0.0))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        [ev[0], ev[1], ev[2]]
    }

    /// exp(−i H dt).
    pub fn propagator(&self, dt: f64) -> Matrix3<Complex64> {
        let eig = SymmetricEigen::new(self.0);
        let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
        let phases =
            Matrix3::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * dt)));
        v * phases * v.transpose()
    }
}

/// Builds D·Sz² + γB0·Sz + γ·b1·Sx + γ·b_axial·Sz.
pub fn hamiltonian(params: &NvParams, b1: f64, b_axial: f64) -> Hamiltonian {
    let gamma = params.gyromagnetic_ratio;
    let d = params.zero_field_splitting;
    let z = gamma * (params.bias_field + b_axial);
    let x = gamma * b1 * FRAC_1_SQRT_2;
    Hamiltonian(Matrix3::new(
        d + z,
        x,
        0.0, //
        x,
        0.0,
        x, //
        0.0,
        x,
        d - z,
    ))
}

/// Pure state over `(+1, 0, −1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub amplitudes: Vector3<Complex64>,
}

impl SpinState {
    /// Normalizes the given amplitudes.
    pub fn new(amplitudes: Vector3<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(invalid("state amplitudes must have finite non-zero norm"));
        }
        Ok(Self {
            amplitudes: amplitudes / Complex64::new(norm, 0.0),
        })
    }

    fn basis(index: usize) -> Self {
        let mut a = Vector3::zeros();
        a[index] = Complex64::new(1.0, 0.0);
        Self { amplitudes: a }
    }

    /// |m_S = 0⟩, the optically pumped initial state.
    pub fn ground() -> Self {
        Self::basis(MS_ZERO)
    }

    pub fn minus_one() -> Self {
        Self::basis(MS_MINUS)
    }

    pub fn plus_one() -> Self {
        Self::basis(MS_PLUS)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// Populations in basis order `(+1, 0, −1)`.
    pub fn populations(&self) -> [f64; 3] {
        [
            self.amplitudes[0].norm_sqr(),
            self.amplitudes[1].norm_sqr(),
            self.amplitudes[2].norm_sqr(),
        ]
    }

    /// |⟨ψ|φ⟩|².
    pub fn fidelity(&self, other: &SpinState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }
}

/// |⟨0|ψ⟩|².
pub fn transition_probability(state: &SpinState) -> f64 {
    state.amplitudes[MS_ZERO].norm_sqr().clamp(0.0, 1.0)
}

/// Transverse drive and axial signal sampled on a shared grid (tesla).
#[derive(Debug, Clone)]
pub struct FieldSamples {
    b1: SampledWaveform,
    axial: SampledWaveform,
}

impl FieldSamples {
    /// Pairs two waveforms sharing step and start time; the shorter one is zero-padded.
    pub fn new(b1: SampledWaveform, axial: SampledWaveform) -> Result<Self> {
        if (b1.dt() - axial.dt()).abs() > 1e-9 * b1.dt()
            || (b1.t0() - axial.t0()).abs() > 1e-6 * b1.dt()
        {
            return Err(Error::GridMismatch(
                "drive and axial waveforms must share step and origin".into(),
            ));
        }
        let len = b1.len().max(axial.len());
        let b1 = b1.padded(0, len - b1.len());
        let axial = axial.padded(0, len - axial.len());
        Ok(Self { b1, axial })
    }

    /// Drive only, no axial field.
    pub fn drive_only(b1: SampledWaveform) -> Self {
        let axial = SampledWaveform::zeros(b1.dt(), b1.t0(), b1.len()).expect("same grid");
        Self { b1, axial }
    }

    pub fn dt(&self) -> f64 {
        self.b1.dt()
    }

    pub fn len(&self) -> usize {
        self.b1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b1.is_empty()
    }

    pub fn b1(&self) -> &SampledWaveform {
        &self.b1
    }

    pub fn axial(&self) -> &SampledWaveform {
        &self.axial
    }
}

pub(crate) fn check_step(params: &NvParams, dt: f64) -> Result<()> {
    let product = dt * params.resonance_upper();
    if product >= MAX_STEP_PHASE {
        return Err(Error::StepTooCoarse {
            product,
            limit: MAX_STEP_PHASE,
        });
    }
    Ok(())
}

/// Propagator for a single step with fields held at their midpoint values.
pub fn step_propagator(params: &NvParams, b1: f64, b_axial: f64, dt: f64) -> Matrix3<Complex64> {
    hamiltonian(params, b1, b_axial).propagator(dt)
}

/// Applies the ordered product of per-sample propagators exp(−i H(t_i) dt).
pub fn propagate(state: &SpinState, fields: &FieldSamples, params: &NvParams) -> Result<SpinState> {
    evolve(state, fields, params, |_, _| {})
}

/// Like [`propagate`], calling `observe(i, state)` after every step `i`.
pub fn evolve(
    state: &SpinState,
    fields: &FieldSamples,
    params: &NvParams,
    mut observe: impl FnMut(usize, &SpinState),
) -> Result<SpinState> {
    let dt = fields.dt();
    check_step(params, dt)?;
    let mut psi = state.amplitudes;
    for (i, (&b1, &bz)) in fields
        .b1
        .values()
        .iter()
        .zip(fields.axial.values())
        .enumerate()
    {
        psi = step_propagator(params, b1, bz, dt) * psi;
        observe(i, &SpinState { amplitudes: psi });
    }
    Ok(SpinState { amplitudes: psi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::angular_to_hz;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params() -> NvParams {
        NvParams::nv(0.036)
    }

    #[test]
    fn zero_field_degeneracy() {
        let p = NvParams::nv(0.0);
        let ev = hamiltonian(&p, 0.0, 0.0).eigenvalues();
        let d = p.zero_field_splitting;
        assert!(ev[0].abs() < 1e-12 * d);
        assert!((ev[1] - d).abs() < 1e-12 * d);
        assert!((ev[2] - d).abs() < 1e-12 * d);
    }

    #[test]
    fn bias_splitting_matches_resonances() {
        let p = params();
        let ev = hamiltonian(&p, 0.0, 0.0).eigenvalues();
        // ev sorted: E0 = 0, E-1 = ω, E+1 = ω'
        let lower = ev[1] - ev[0];
        let upper = ev[2] - ev[0];
        assert!((lower - p.resonance_lower()).abs() < 1e-12 * p.resonance_lower());
        assert!((upper - p.resonance_upper()).abs() < 1e-12 * p.resonance_upper());
        // 2.87 GHz − 28.0345 GHz/T · 36 mT
        let expected_hz = 2.87e9 - 28.0345e9 * 0.036;
        assert!((angular_to_hz(lower) - expected_hz).abs() < 1.0);
        assert!((angular_to_hz(lower) - 1.8608e9).abs() < 1e5);
    }

    #[test]
    fn axial_field_shifts_minus_one_level() {
        let p = params();
        let b = 1e-3;
        let h0 = hamiltonian(&p, 0.0, 0.0);
        let h1 = hamiltonian(&p, 0.0, b);
        let shift = h1.matrix()[(2, 2)] - h0.matrix()[(2, 2)];
        assert!((shift + p.gyromagnetic_ratio * b).abs() < 1e-6);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let h = hamiltonian(&params(), 3e-3, -2e-4).to_complex();
        let diff = (h - h.adjoint()).norm();
        assert!(diff <= 1e-12 * h.norm());
    }

    #[test]
    fn probabilities_of_basis_and_superposition() {
        assert_eq!(transition_probability(&SpinState::ground()), 1.0);
        assert_eq!(transition_probability(&SpinState::minus_one()), 0.0);
        let s = SpinState::new(Vector3::new(
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
        ))
        .unwrap();
        assert!((transition_probability(&s) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn free_evolution_keeps_populations() {
        let p = params();
        let s = SpinState::new(Vector3::new(
            Complex64::new(0.3, 0.1),
            Complex64::new(0.5, -0.2),
            Complex64::new(0.1, 0.7),
        ))
        .unwrap();
        let fields = FieldSamples::drive_only(SampledWaveform::zeros(1e-12, 0.0, 3000).unwrap());
        let out = propagate(&s, &fields, &p).unwrap();
        for (a, b) in s.populations().iter().zip(out.populations()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_step_is_rejected() {
        let p = params();
        let dt = 0.6 / p.resonance_upper();
        let fields = FieldSamples::drive_only(SampledWaveform::zeros(dt, 0.0, 4).unwrap());
        assert!(matches!(
            propagate(&SpinState::ground(), &fields, &p),
            Err(Error::StepTooCoarse { .. })
        ));
    }

    fn resonant_pi_pulse(dt: f64) -> SpinState {
        let p = params();
        let omega = hz_to_angular(125e6);
        let b_mw = 2f64.sqrt() * omega / p.gyromagnetic_ratio;
        let carrier = p.resonance_lower();
        let duration = PI / omega;
        let n = (duration / dt).round() as usize;
        let drive =
            SampledWaveform::from_fn(dt, dt / 2.0, n, |t| b_mw * (carrier * t).cos()).unwrap();
        propagate(&SpinState::ground(), &FieldSamples::drive_only(drive), &p).unwrap()
    }

    #[test]
    fn resonant_pi_pulse_inverts_population() {
        let out = resonant_pi_pulse(1e-12);
        assert!(out.populations()[MS_MINUS] > 0.99);
        assert!((out.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn halving_step_converges() {
        let a = resonant_pi_pulse(1e-12);
        let b = resonant_pi_pulse(0.5e-12);
        assert!(1.0 - a.fidelity(&b) < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn propagation_is_unitary(
            b1 in proptest::collection::vec(-8e-3f64..8e-3, 50..400),
            bz in -2e-3f64..2e-3,
            re in -1.0f64..1.0, im in -1.0f64..1.0,
        ) {
            let p = params();
            let n = b1.len();
            let drive = SampledWaveform::new(1e-12, 0.0, b1).unwrap();
            let axial = SampledWaveform::new(1e-12, 0.0, vec![bz; n]).unwrap();
            let s = SpinState::new(Vector3::new(
                Complex64::new(re, im),
                Complex64::new(1.0, 0.0),
                Complex64::new(im, re),
            )).unwrap();
            let out = propagate(&s, &FieldSamples::new(drive, axial).unwrap(), &p).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-9);
        }
    }
}
