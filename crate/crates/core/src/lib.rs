//! Time-resolved magnetometry with a single NV spin.
//!
//! A pair of strong microwave pulses turns the NV centre into a sampling
//! gate: the population left in m_S = 0 encodes the phase accumulated from
//! an axial field during a short window. Sweeping the pulse pair against a
//! repetitive transient and deconvolving the sensing kernel recovers the
//! field with sub-nanosecond resolution.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub(crate) mod fft;
pub mod forward;
pub mod io;
pub mod kernels;
pub mod recon;
pub mod sensitivity;
pub mod spin;
pub mod units;
pub mod waveforms;

pub use error::{Error, Result};
pub use forward::{
    full_response, ideal_response, sample_trace, MeasurementTrace, PointCounts, ReadoutParams,
    Responder, SamplingPlan,
};
pub use kernels::{
    analytic_kernel, fwhm, simulate_kernel, time_resolution, time_resolution_formula,
    PulsePairSpec, SensingKernel, StimulusConfig,
};
pub use recon::{estimate_tof, wiener_deconvolve, ToFConfig, ToFResult, WienerConfig, Window};
pub use sensitivity::{
    expected_counts, min_detectable_field, snr, tradeoff_curve, SensitivityPoint,
};
pub use spin::{evolve, propagate, FieldSamples, Hamiltonian, NvParams, SpinState};
pub use waveforms::{DistortionModel, SampledWaveform, TimeGrid};
