//! Initial data and built-in boundary forcing.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::fields::State;
use crate::homogenize::BoundaryForcing;
use crate::mesh::{GridSpec, ScalarField, VectorField};
use crate::pressure::project;

/// Band-limited random functions on the box, evaluated analytically so the
/// same draw can be sampled on any grid.
///
/// Velocity: a streamfunction `Σ c sin(mαx)sin(nβy)·sin(αx)sin(βy)` for the
/// barotropic part plus `Σ sin(mαx)sin(nβy)cos(kκ(z+h))` (k ≥ 1) for the
/// baroclinic part, `m, n ≤ 4`, `k ≤ 2`. Temperature: cosines in all three
/// directions, `m, n ≤ 3`, `k ≤ 1`.
#[derive(Debug, Clone)]
pub struct RandomSmooth {
    lx: f64,
    ly: f64,
    h: f64,
    psi: Vec<(f64, f64, f64)>,
    baro: Vec<(f64, f64, f64, f64, f64)>,
    temp: Vec<(f64, f64, f64, f64)>,
}

impl RandomSmooth {
    pub fn new(grid: &GridSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let mut psi = Vec::new();
        let mut baro = Vec::new();
        let mut temp = Vec::new();
        for m in 1..=4 {
            for n in 1..=4 {
                let decay = 1.0 / (m * m + n * n) as f64;
                psi.push((m as f64, n as f64, normal() * decay));
                for k in 1..=2 {
                    let d = decay / k as f64;
                    baro.push((m as f64, n as f64, k as f64, normal() * d, normal() * d));
                }
            }
        }
        for m in 0..=3 {
            for n in 0..=3 {
                for k in 0..=1 {
                    let decay = 1.0 / (1 + m * m + n * n + k * k) as f64;
                    temp.push((m as f64, n as f64, k as f64, normal() * decay));
                }
            }
        }
        Self {
            lx: grid.lx,
            ly: grid.ly,
            h: grid.h,
            psi,
            baro,
            temp,
        }
    }

    pub fn velocity(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        let (a, b, c) = (PI / self.lx, PI / self.ly, PI / self.h);
        // X = sin(max)sin(ax), X' by the product rule
        let prod = |m: f64, a: f64, x: f64| {
            let v = (m * a * x).sin() * (a * x).sin();
            let d = m * a * (m * a * x).cos() * (a * x).sin() + a * (m * a * x).sin() * (a * x).cos();
            (v, d)
        };
        let (mut u, mut v) = (0.0, 0.0);
        for &(m, n, coef) in &self.psi {
            let (xv, xd) = prod(m, a, x);
            let (yv, yd) = prod(n, b, y);
            u += coef * xv * yd;
            v -= coef * xd * yv;
        }
        for &(m, n, k, cu, cv) in &self.baro {
            let s = (m * a * x).sin() * (n * b * y).sin() * (k * c * (z + self.h)).cos();
            u += cu * s;
            v += cv * s;
        }
        (u, v)
    }

    pub fn temperature(&self, x: f64, y: f64, z: f64) -> f64 {
        let (a, b, c) = (PI / self.lx, PI / self.ly, PI / self.h);
        self.temp
            .iter()
            .map(|&(m, n, k, coef)| coef * (m * a * x).cos() * (n * b * y).cos() * (k * c * (z + self.h)).cos())
            .sum()
    }

    pub fn temperature_field(&self, grid: &GridSpec) -> ScalarField {
        ScalarField::from_fn(grid, |x, y, z| self.temperature(x, y, z))
    }

    pub fn velocity_field(&self, grid: &GridSpec) -> VectorField {
        VectorField::from_fn(grid, |x, y, z| self.velocity(x, y, z))
    }
}

fn normalise(f: &mut ScalarField, amp: f64) {
    let m = f.max_abs();
    if m > 0.0 {
        f.scale(amp / m);
    }
}

fn normalise_vec(v: &mut VectorField, amp: f64) {
    let m = v.max_abs();
    if m > 0.0 {
        v.scale(amp / m);
    }
}

/// Smooth random state with `max|v| ≈ amp_v` and `max|T| = amp_t`,
/// projected onto the discrete constraint.
pub fn smooth_state(grid: &GridSpec, seed: u64, amp_v: f64, amp_t: f64) -> Result<State> {
    let r = RandomSmooth::new(grid, seed);
    let mut v = r.velocity_field(grid);
    normalise_vec(&mut v, amp_v);
    let mut t = r.temperature_field(grid);
    normalise(&mut t, amp_t);
    let v = project(grid, &v, 1.0)?.v;
    State::new(grid, v, t)
}

/// Smooth state plus per-column white noise of size `rough` (smooth in `z`),
/// projected again.
pub fn rough_state(grid: &GridSpec, seed: u64, amp_v: f64, amp_t: f64, rough: f64) -> Result<State> {
    let base = smooth_state(grid, seed, amp_v, amp_t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let cols = grid.ncolumns();
    let mut draw = || -> Vec<f64> { (0..cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
    let (nu, nv, nt) = (draw(), draw(), draw());
    let h = grid.h;
    let profile_v: Vec<f64> = (0..grid.nz).map(|k| 1.0 + 0.5 * (PI * (grid.zc(k) + h) / h).cos()).collect();
    let profile_t = profile_v.clone();
    let column = |n: &[f64], profile: &[f64]| {
        let mut f = ScalarField::surface(grid);
        f.data.copy_from_slice(n);
        f.broadcast(grid.nz).times_profile(profile).scaled(rough)
    };
    let mut v = base.v.clone();
    v.axpy(1.0, &VectorField::new(column(&nu, &profile_v), column(&nv, &profile_v)));
    let v = project(grid, &v, 1.0)?.v;
    let t = &base.temp + &column(&nt, &profile_t);
    State::new(grid, v, t)
}

/// `v = 0`, `T = cos(πx/Lx)cos(πy/Ly)`.
pub fn eigenmode_state(grid: &GridSpec) -> Result<State> {
    let t = ScalarField::from_fn(grid, |x, y, _| (PI * x / grid.lx).cos() * (PI * y / grid.ly).cos());
    State::new(grid, VectorField::zeros(grid), t)
}

/// Eigenvalue of the Neumann five-point horizontal Laplacian for the mode
/// `cos(πx/Lx)cos(πy/Ly)` sampled at cell centres.
pub fn eigenmode_lambda(grid: &GridSpec) -> f64 {
    let s = |d: f64, l: f64| 4.0 / (d * d) * (PI * d / (2.0 * l)).sin().powi(2);
    s(grid.dx, grid.lx) + s(grid.dy, grid.ly)
}

/// Smooth ramp `t²/(t² + t₀²)` with `t₀ = 0.1`: zero value and slope at 0.
pub fn ramp(t: f64) -> f64 {
    t * t / (t * t + 0.01)
}

/// Built-in forcing: a ramped gyre-like stress vanishing on the walls and a
/// ramped side temperature with zero vertical slope at top and bottom,
/// sampled every `t_end/50`.
pub fn analytic_forcing(
    grid: &GridSpec,
    t_end: f64,
    wind: f64,
    side_temperature: f64,
    alpha_v: f64,
    alpha_t: f64,
) -> Result<BoundaryForcing> {
    let t_end = t_end.max(1e-6);
    let times: Vec<f64> = (0..=50).map(|n| n as f64 * t_end / 50.0).collect();
    let (lx, ly, h) = (grid.lx, grid.ly, grid.h);
    BoundaryForcing::from_fn(
        grid,
        &times,
        |x, y, t| {
            let b = (PI * x / lx).sin().powi(2) * (PI * y / ly).sin().powi(2);
            let s = (2.0 * PI * y / ly).sin();
            (wind * ramp(t) * b * s, -0.5 * wind * ramp(t) * b)
        },
        |x, _, z, t| side_temperature * ramp(t) * (PI * (z + h) / h).cos() * (0.5 + x / lx),
        alpha_v,
        alpha_t,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{depth_average, ddx, BoundaryKind, laplacian_h};
    use crate::pressure::barotropic_divergence_norm;

    #[test]
    fn smooth_draw_is_deterministic_and_admissible() {
        let g = GridSpec::unit(12, 12, 6).unwrap();
        let a = smooth_state(&g, 3, 0.5, 1.0).unwrap();
        let b = smooth_state(&g, 3, 0.5, 1.0).unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(a.temp, b.temp);
        assert!(barotropic_divergence_norm(&g, &a.v) < 1e-9);
        assert!((a.temp.max_abs() - 1.0).abs() < 1e-12);
        let c = smooth_state(&g, 4, 0.5, 1.0).unwrap();
        assert_ne!(a.temp, c.temp);
    }

    #[test]
    fn random_velocity_vanishes_on_walls_and_baroclinic_part_has_zero_mean() {
        let g = GridSpec::unit(8, 8, 4).unwrap();
        let r = RandomSmooth::new(&g, 1);
        for s in [0.0, 0.3, 0.7, 1.0] {
            for (x, y) in [(0.0, s), (1.0, s), (s, 0.0), (s, 1.0)] {
                let (u, v) = r.velocity(x, y, -0.4);
                assert!(u.abs() < 1e-12 && v.abs() < 1e-12);
            }
        }
        // the analytic barotropic part is divergence free, so the projection barely moves it
        let raw = r.velocity_field(&g);
        let proj = project(&g, &raw, 1.0).unwrap().v;
        let d = depth_average(&g, &proj.x.zip_map(&raw.x, |a, b| a - b));
        assert!(d.max_abs() < 0.2 * raw.max_abs());
    }

    #[test]
    fn eigenvalue_matches_stencil() {
        let g = GridSpec::new(2.0, 1.0, 1.0, 10, 6, 2).unwrap();
        let s = eigenmode_state(&g).unwrap();
        let lap = laplacian_h(&g, &s.temp, BoundaryKind::Neumann0).unwrap();
        let lam = eigenmode_lambda(&g);
        let r = &lap + &s.temp.scaled(lam);
        assert!(r.max_abs() < 1e-11);
    }

    #[test]
    fn rough_state_has_grid_scale_gradients() {
        let g = GridSpec::unit(16, 16, 4).unwrap();
        let s = smooth_state(&g, 5, 0.5, 1.0).unwrap();
        let r = rough_state(&g, 5, 0.5, 1.0, 0.2).unwrap();
        let gs = ddx(&g, &s.temp, BoundaryKind::Neumann0).unwrap().max_abs();
        let gr = ddx(&g, &r.temp, BoundaryKind::Neumann0).unwrap().max_abs();
        assert!(gr > 2.0 * gs);
    }

    #[test]
    fn analytic_forcing_is_compatible_and_starts_at_zero() {
        let g = GridSpec::unit(16, 16, 8).unwrap();
        let f = analytic_forcing(&g, 1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(f.tau_at(0.0).max_abs(), 0.0);
        assert!(f.tau_at(1.0).max_abs() > 0.1);
        assert!(f.ts_at(1.0).max_abs() > 0.5);
    }
}
