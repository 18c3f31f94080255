//! Field reconstruction from sampled traces.

mod fit;
mod tof;
mod wiener;

pub use fit::{fit_sinc, SincFit};
pub use tof::{estimate_tof, ToFConfig, ToFResult};
pub use wiener::{discrete_kernel, wiener_deconvolve, WienerConfig};

use serde::{Deserialize, Serialize};

/// Edge treatment applied before transforming a finite record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    None,
    /// Raised-cosine ramps over `fraction` of the record at each end.
    Taper {
        fraction: f64,
    },
}

impl Default for Window {
    fn default() -> Self {
        Window::Taper { fraction: 0.05 }
    }
}

impl Window {
    pub fn apply(&self, data: &mut [f64]) {
        let Window::Taper { fraction } = *self else {
            return;
        };
        let n = data.len();
        let ramp = ((n as f64 * fraction).round() as usize).min(n / 2);
        for i in 0..ramp {
            let w = 0.5 * (1.0 - (std::f64::consts::PI * (i as f64 + 0.5) / ramp as f64).cos());
            data[i] *= w;
            data[n - 1 - i] *= w;
        }
    }
}
