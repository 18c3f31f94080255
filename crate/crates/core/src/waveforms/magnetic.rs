//! Stray fields of thin magnetic films, converted to time traces seen by a
//! fixed NV centre.
//!
//! Lab frame: film in the x–y plane, z along the film normal, NV above the
//! film at height `z`. The NV axis is `(sinθ cosφ, sinθ sinφ, cosθ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::units::MU_0;

use super::{SampledWaveform, TimeGrid};

/// Unit vector along the NV axis for polar angle `theta` and azimuth `phi`.
pub fn nv_axis(theta: f64, phi: f64) -> [f64; 3] {
    [
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    ]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Straight domain wall along y sweeping past the NV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainWallScenario {
    /// Surface magnetization (A), i.e. moment per film area.
    pub surface_magnetization: f64,
    /// NV height above the film (m).
    pub standoff: f64,
    /// Wall velocity (m/s).
    pub velocity: f64,
    pub nv_polar: f64,
    pub nv_azimuth: f64,
}

impl DomainWallScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.standoff > 0.0) {
            return Err(invalid("standoff must be positive"));
        }
        if !(self.velocity > 0.0) {
            return Err(invalid("wall velocity must be positive"));
        }
        if !self.surface_magnetization.is_finite() {
            return Err(invalid("surface magnetization must be finite"));
        }
        Ok(())
    }
}

/// Field `(Bx, By, Bz)` at lateral offset `x` from a sharp wall in the thin-film limit.
///
/// The two out-of-plane domains reduce to a line dipole at the wall:
/// `Bx = −(µ0 m_s/π) z/(x²+z²)`, `Bz = (µ0 m_s/π) x/(x²+z²)`.
pub fn domain_wall_field(s: &DomainWallScenario, x: f64) -> [f64; 3] {
    let z = s.standoff;
    let scale = MU_0 * s.surface_magnetization / PI / (x * x + z * z);
    [-scale * z, 0.0, scale * x]
}

/// NV-axis projection of the wall field with `x = v_d t`.
pub fn domain_wall_transient(s: &DomainWallScenario, grid: &TimeGrid) -> Result<SampledWaveform> {
    s.validate()?;
    grid.validate()?;
    let n = nv_axis(s.nv_polar, s.nv_azimuth);
    grid.sample(|t| dot(&n, &domain_wall_field(s, s.velocity * t)))
}

/// Handedness of the in-plane Néel wall core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chirality {
    /// Core moment along −x when m_z goes from −1 to +1 with increasing x.
    Left,
    /// Core moment along +x for the same wall.
    Right,
}

impl Chirality {
    fn sign(self) -> f64 {
        match self {
            Chirality::Left => -1.0,
            Chirality::Right => 1.0,
        }
    }
}

/// Magnetization reversal of a thin disk by a straight wall crossing it along +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskReversalScenario {
    pub diameter: f64,
    /// Surface magnetization (A).
    pub surface_magnetization: f64,
    pub wall_velocity: f64,
    /// Wall width (m); the tanh profile parameter is `wall_width / π`.
    pub wall_width: f64,
    /// NV height above the disk centre (m).
    pub standoff: f64,
    pub nv_polar: f64,
    pub nv_azimuth: f64,
    /// Quadrature cell size (m).
    pub resolution: f64,
    pub chirality: Chirality,
}

impl DiskReversalScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter > 0.0) {
            return Err(invalid("disk diameter must be positive"));
        }
        if !(self.standoff > 0.0) {
            return Err(invalid("standoff must be positive"));
        }
        if !(self.wall_velocity > 0.0) {
            return Err(invalid("wall velocity must be positive"));
        }
        if !(self.wall_width > 0.0 && self.wall_width < self.diameter) {
            return Err(invalid(
                "wall width must be positive and smaller than the diameter",
            ));
        }
        if !(self.resolution > 0.0 && self.resolution <= self.wall_width / 2.0) {
            return Err(invalid(
                "quadrature resolution must be positive and at most half the wall width",
            ));
        }
        Ok(())
    }

    fn radius(&self) -> f64 {
        self.diameter / 2.0
    }

    /// Wall position `x_w(t) = −R + v t`.
    pub fn wall_position(&self, t: f64) -> f64 {
        -self.radius() + self.wall_velocity * t
    }
}

/// Quadrature nodes over the disk with the NV-projected dipole weights for
/// out-of-plane and in-plane (x) moments.
struct DiskQuadrature {
    x: Vec<f64>,
    weight_z: Vec<f64>,
    weight_x: Vec<f64>,
}

impl DiskQuadrature {
    /// Polar midpoint grid with radial and arc spacing at most `h`.
    fn new(s: &DiskReversalScenario, h: f64) -> Self {
        let r_max = s.radius();
        let n_axis = nv_axis(s.nv_polar, s.nv_azimuth);
        let nr = (r_max / h).ceil() as usize;
        let dr = r_max / nr as f64;
        let mut q = DiskQuadrature {
            x: Vec::new(),
            weight_z: Vec::new(),
            weight_x: Vec::new(),
        };
        for i in 0..nr {
            let r = (i as f64 + 0.5) * dr;
            let nphi = ((2.0 * PI * r / h).ceil() as usize).max(8);
            let dphi = 2.0 * PI / nphi as f64;
            let area = r * dr * dphi;
            for j in 0..nphi {
                let phi = (j as f64 + 0.5) * dphi;
                let (x, y) = (r * phi.cos(), r * phi.sin());
                // displacement from source to NV at (0, 0, z)
                let d = [-x, -y, s.standoff];
                q.x.push(x);
                q.weight_z
                    .push(area * dot(&n_axis, &dipole_field(&d, &[0.0, 0.0, 1.0])));
                q.weight_x
                    .push(area * dot(&n_axis, &dipole_field(&d, &[1.0, 0.0, 0.0])));
            }
        }
        q
    }

    fn field(&self, s: &DiskReversalScenario, wall: f64) -> f64 {
        let width = s.wall_width / PI;
        let chi = s.chirality.sign();
        let ms = s.surface_magnetization;
        let mut acc = 0.0;
        for ((&x, &wz), &wx) in self.x.iter().zip(&self.weight_z).zip(&self.weight_x) {
            let u = (x - wall) / width;
            let mz = ms * u.tanh();
            let mx = if u.abs() < 40.0 {
                chi * ms / u.cosh()
            } else {
                0.0
            };
            acc += wz * mz + wx * mx;
        }
        acc
    }
}

/// Point-dipole field per unit moment at displacement `d` from the source.
fn dipole_field(d: &[f64; 3], m: &[f64; 3]) -> [f64; 3] {
    let r2 = dot(d, d);
    let r = r2.sqrt();
    let r5 = r2 * r2 * r;
    let md = dot(m, d);
    let c = MU_0 / (4.0 * PI);
    [
        c * (3.0 * md * d[0] - m[0] * r2) / r5,
        c * (3.0 * md * d[1] - m[1] * r2) / r5,
        c * (3.0 * md * d[2] - m[2] * r2) / r5,
    ]
}

/// Maximum relative change tolerated when the quadrature grid is refined 2×.
pub const DISK_REFINEMENT_TOLERANCE: f64 = 0.01;

fn disk_trace(s: &DiskReversalScenario, grid: &TimeGrid, h: f64) -> Result<SampledWaveform> {
    let q = DiskQuadrature::new(s, h);
    let proto = grid.sample(|_| 0.0)?;
    let values: Vec<f64> = (0..proto.len())
        .into_par_iter()
        .map(|i| q.field(s, s.wall_position(proto.time(i))))
        .collect();
    SampledWaveform::new(proto.dt(), proto.t0(), values)
}

/// NV-axis stray field during the reversal.
///
/// Moments `m_z = m_s tanh((x − x_w)/Δ)` and the Néel core
/// `m_x = ±m_s sech((x − x_w)/Δ)` are integrated with the point-dipole kernel
/// over a polar grid. The result is recomputed on a 2× finer grid and
/// returned from that grid if the two agree within 1 % of the peak.
pub fn disk_reversal_transient(
    s: &DiskReversalScenario,
    grid: &TimeGrid,
) -> Result<SampledWaveform> {
    s.validate()?;
    grid.validate()?;
    let coarse = disk_trace(s, grid, s.resolution)?;
    let fine = disk_trace(s, grid, s.resolution / 2.0)?;
    let peak = fine.max_abs();
    let change = coarse
        .values()
        .iter()
        .zip(fine.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let relative_change = if peak > 0.0 { change / peak } else { 0.0 };
    if relative_change > DISK_REFINEMENT_TOLERANCE {
        return Err(Error::GridTooCoarse { relative_change });
    }
    Ok(fine)
}

/// NV-axis field of the uniformly magnetized disk, `up = true` for +z.
pub fn disk_uniform_field(s: &DiskReversalScenario, up: bool) -> Result<f64> {
    s.validate()?;
    let q = DiskQuadrature::new(s, s.resolution / 2.0);
    let sign = if up { 1.0 } else { -1.0 };
    Ok(sign * s.surface_magnetization * q.weight_z.iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::bohr_per_nm2_to_amperes;

    fn wall(z: f64) -> DomainWallScenario {
        DomainWallScenario {
            surface_magnetization: bohr_per_nm2_to_amperes(25.0),
            standoff: z,
            velocity: 100.0,
            nv_polar: 54f64.to_radians(),
            nv_azimuth: 0.0,
        }
    }

    fn disk() -> DiskReversalScenario {
        DiskReversalScenario {
            diameter: 1e-6,
            surface_magnetization: bohr_per_nm2_to_amperes(75.0),
            wall_velocity: 100.0,
            wall_width: 50e-9,
            standoff: 100e-9,
            nv_polar: 54f64.to_radians(),
            nv_azimuth: 90f64.to_radians(),
            resolution: 25e-9,
            chirality: Chirality::Left,
        }
    }

    #[test]
    fn wall_peak_in_plane_field() {
        let s = wall(150e-9);
        let b = domain_wall_field(&s, 0.0);
        let expected = MU_0 * s.surface_magnetization / (PI * s.standoff);
        assert!((b[0].abs() - expected).abs() < 1e-15);
        assert!((expected - 0.62e-3).abs() < 0.01e-3);
    }

    #[test]
    fn wall_components_have_opposite_parity() {
        let s = wall(150e-9);
        for x in [10e-9, 80e-9, 400e-9] {
            let a = domain_wall_field(&s, x);
            let b = domain_wall_field(&s, -x);
            assert_eq!(a[0], b[0]);
            assert_eq!(a[2], -b[2]);
        }
    }

    #[test]
    fn wall_transient_duration() {
        let s = wall(150e-9);
        let grid = TimeGrid::symmetric(1e-12, 20e-9).unwrap();
        let w = domain_wall_transient(&s, &grid).unwrap();
        // even component: (w(t) + w(−t)) / 2
        let v = w.values();
        let n = v.len();
        let even: Vec<f64> = (0..n).map(|i| 0.5 * (v[i] + v[n - 1 - i])).collect();
        let even = SampledWaveform::new(w.dt(), w.t0(), even).unwrap();
        let fwhm = crate::kernels::fwhm(&even).unwrap();
        assert!((fwhm - 3e-9).abs() < 2e-12, "fwhm {fwhm}");
    }

    #[test]
    fn wall_scaling_in_magnetization_and_standoff() {
        let grid = TimeGrid::symmetric(10e-12, 5e-9).unwrap();
        let a = domain_wall_transient(&wall(150e-9), &grid).unwrap();
        let mut doubled = wall(150e-9);
        doubled.surface_magnetization *= 2.0;
        let b = domain_wall_transient(&doubled, &grid).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((2.0 * x - y).abs() <= 1e-15 * y.abs().max(1e-20));
        }
        let near = domain_wall_field(&wall(75e-9), 0.0)[0];
        let far = domain_wall_field(&wall(150e-9), 0.0)[0];
        assert!((near / far - 2.0).abs() < 1e-12);
    }

    #[test]
    fn disk_up_and_down_are_opposite() {
        let s = disk();
        let up = disk_uniform_field(&s, true).unwrap();
        let down = disk_uniform_field(&s, false).unwrap();
        assert_eq!(up, -down);
        // far-away walls leave the disk uniformly magnetized
        let q = DiskQuadrature::new(&s, s.resolution / 2.0);
        let before = q.field(&s, -s.radius() - 20.0 * s.wall_width);
        let after = q.field(&s, s.radius() + 20.0 * s.wall_width);
        assert!((before - up).abs() < 1e-9 * up.abs());
        assert!((after - down).abs() < 1e-9 * up.abs());
    }

    #[test]
    fn disk_uniform_field_matches_current_loop() {
        // On-axis field of a uniformly magnetized thin disk equals a current loop I = m_s.
        let mut s = disk();
        s.nv_polar = 0.0;
        let r = s.radius();
        let z = s.standoff;
        let loop_field = MU_0 * s.surface_magnetization * r * r / (2.0 * (r * r + z * z).powf(1.5));
        let q = disk_uniform_field(&s, true).unwrap();
        assert!(
            ((q - loop_field) / loop_field).abs() < 0.01,
            "{q} vs {loop_field}"
        );
    }

    #[test]
    fn rejects_coarse_resolution_and_bad_geometry() {
        let mut s = disk();
        s.resolution = 40e-9;
        assert!(s.validate().is_err());
        let mut s = disk();
        s.standoff = -1e-9;
        assert!(s.validate().is_err());
    }
}
