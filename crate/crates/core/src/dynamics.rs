//! Explicit right-hand sides of the momentum and temperature equations.
//!
//! Vertical diffusion is left to the implicit column solves in
//! [`crate::stepper`]; the surface pressure is handled by [`crate::pressure`].

use crate::error::{Error, Result};
use crate::fields::{PhysParams, State, VELOCITY_BC};
use crate::mesh::{
    ddx_raw, ddy_raw, interfaces_to_centres, laplacian_h_raw, vertical_cumint_raw, GridSpec,
    ScalarField, SideBc, VectorField, WField, WallData,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub dv: VectorField,
    pub dtemp: ScalarField,
}

/// Central horizontal divergence with no-slip ghosts.
pub fn divergence_h(grid: &GridSpec, v: &VectorField) -> ScalarField {
    let bc: SideBc = VELOCITY_BC.into();
    let mut d = ddx_raw(grid, &v.x, bc);
    d.axpy(1.0, &ddy_raw(grid, &v.y, bc));
    d
}

/// `w = −∫_{−h}^{z} ∇_H·v dξ` on interfaces. The bottom value is exactly 0.
pub fn reconstruct_w(grid: &GridSpec, v: &VectorField) -> WField {
    let mut w = vertical_cumint_raw(grid, &divergence_h(grid, v));
    w.scale(-1.0);
    w
}

/// Skew-symmetric advection `½[∇·(v q) + v·∇q] + ½[δ_z(w q̄ᶻ) + (w δ_z q)‾ᶻ]`.
///
/// Horizontal face velocities are averages of neighbouring centres with the
/// no-slip ghost, so they vanish on the walls; the vertical fluxes at the top
/// and bottom interfaces are taken as zero (`w = 0` there). Under these
/// closures the stencil collapses to
/// `[(u_{i+1}+u_i) q_{i+1} − (u_{i−1}+u_i) q_{i−1}] / (4dx)` plus the analogous
/// `y` term and `(w_{k+1} q_{k+1} − w_k q_{k−1}) / (2dz)`, for which
/// `⟨advect(q), q⟩ = 0` holds for any velocity.
pub fn advect(grid: &GridSpec, q: &ScalarField, v: &VectorField, w: &WField) -> Result<ScalarField> {
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    for (f, name) in [(q, "q"), (&v.x, "v.x"), (&v.y, "v.y")] {
        if f.nx != nx || f.ny != ny || f.nz != nz {
            return Err(Error::GridMismatch(format!("advect: `{name}` does not match the grid")));
        }
    }
    if w.nx != nx || w.ny != ny || w.nz != nz {
        return Err(Error::GridMismatch("advect: `w` does not match the grid".into()));
    }
    Ok(advect_raw(grid, q, v, w))
}

pub(crate) fn advect_raw(grid: &GridSpec, q: &ScalarField, v: &VectorField, w: &WField) -> ScalarField {
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let plane = nx * ny;
    let (cx, cy, cz) = (0.25 / grid.dx, 0.25 / grid.dy, 0.5 / grid.dz);
    let (u, vv, qd) = (&v.x.data, &v.y.data, &q.data);
    let mut out = ScalarField::zeros(grid);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let n = i + nx * (j + ny * k);
                let mut a = 0.0;
                if i + 1 < nx {
                    a += cx * (u[n + 1] + u[n]) * qd[n + 1];
                }
                if i > 0 {
                    a -= cx * (u[n - 1] + u[n]) * qd[n - 1];
                }
                if j + 1 < ny {
                    a += cy * (vv[n + nx] + vv[n]) * qd[n + nx];
                }
                if j > 0 {
                    a -= cy * (vv[n - nx] + vv[n]) * qd[n - nx];
                }
                if k + 1 < nz {
                    a += cz * w.data[n + plane] * qd[n + plane];
                }
                if k > 0 {
                    a -= cz * w.data[n] * qd[n - plane];
                }
                out.data[n] = a;
            }
        }
    }
    out
}

/// `f k×v = f·(−v₂, v₁)`.
pub fn coriolis(v: &VectorField, f: f64) -> VectorField {
    VectorField::new(v.y.scaled(-f), v.x.scaled(f))
}

/// `∇_H ∫_{−h}^{z} T dξ` at cell centres. The cumulative integral is averaged
/// from interfaces to centres and differenced with the temperature side rule
/// (wall data, when present, is integrated the same way).
pub fn baroclinic_grad<'a>(grid: &GridSpec, temp: &ScalarField, bc: impl Into<SideBc<'a>>) -> VectorField {
    let bc = bc.into();
    let integral = interfaces_to_centres(grid, &vertical_cumint_raw(grid, temp));
    let wall = bc.data.map(|d| d.cumint_centred(grid.dz));
    let ibc = SideBc {
        kind: bc.kind,
        data: wall.as_ref(),
    };
    VectorField::new(ddx_raw(grid, &integral, ibc), ddy_raw(grid, &integral, ibc))
}

/// Explicit momentum tendency:
/// `−advect(v) − f k×v + ∇_H∫T dξ + (1/Re₁)Δ_H v`.
pub fn momentum_rhs(
    grid: &GridSpec,
    state: &State,
    params: &PhysParams,
    temp_wall: Option<&WallData>,
) -> VectorField {
    let v = &state.v;
    let mut dv = VectorField::new(
        advect_raw(grid, &v.x, v, &state.w),
        advect_raw(grid, &v.y, v, &state.w),
    );
    dv.scale(-1.0);
    if params.f != 0.0 {
        dv.axpy(-1.0, &coriolis(v, params.f));
    }
    let tbc = SideBc {
        kind: params.temperature_bc(),
        data: temp_wall,
    };
    dv.axpy(1.0, &baroclinic_grad(grid, &state.temp, tbc));
    let vbc: SideBc = VELOCITY_BC.into();
    let nu = 1.0 / params.re1;
    dv.x.axpy(nu, &laplacian_h_raw(grid, &v.x, vbc));
    dv.y.axpy(nu, &laplacian_h_raw(grid, &v.y, vbc));
    dv
}

/// Explicit temperature tendency `−advect(T) + (1/R_T)Δ_H T` with Robin side
/// ghosts (inhomogeneous when `temp_wall` carries `T_s`).
pub fn temperature_rhs(
    grid: &GridSpec,
    state: &State,
    params: &PhysParams,
    temp_wall: Option<&WallData>,
) -> ScalarField {
    let mut dt = advect_raw(grid, &state.temp, &state.v, &state.w);
    dt.scale(-1.0);
    let tbc = SideBc {
        kind: params.temperature_bc(),
        data: temp_wall,
    };
    dt.axpy(1.0 / params.rt, &laplacian_h_raw(grid, &state.temp, tbc));
    dt
}

pub fn tendency(
    grid: &GridSpec,
    state: &State,
    params: &PhysParams,
    temp_wall: Option<&WallData>,
) -> Tendency {
    Tendency {
        dv: momentum_rhs(grid, state, params, temp_wall),
        dtemp: temperature_rhs(grid, state, params, temp_wall),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{norm_l2, PhysParams};
    use crate::mesh::{depth_average, inner, BoundaryKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(1.0, 1.5, 1.0, 12, 10, 6).unwrap()
    }

    fn noise(g: &GridSpec, rng: &mut ChaCha8Rng) -> ScalarField {
        let mut f = ScalarField::zeros(g);
        f.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        f
    }

    #[test]
    fn w_of_uniform_and_linear_flows() {
        let g = grid();
        let c = VectorField::from_fn(&g, |_, _, _| (0.0, 0.0));
        assert_eq!(reconstruct_w(&g, &c).max_abs(), 0.0);
        // v = (x, 0): interior divergence 1, so w(z) = −(z + h) away from walls
        let v = VectorField::from_fn(&g, |x, _, _| (x, 0.0));
        let w = reconstruct_w(&g, &v);
        for k in 0..=g.nz {
            for i in 1..g.nx - 1 {
                assert!((w.at(i, 3, k) + (g.zf(k) + g.h)).abs() < 1e-13);
            }
        }
        assert!(w.bottom().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn advection_of_constant_is_half_continuity_residual() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = VectorField::new(noise(&g, &mut rng), noise(&g, &mut rng));
        let w = reconstruct_w(&g, &v);
        let q = ScalarField::constant(&g, 2.0);
        let a = advect(&g, &q, &v, &w).unwrap();
        // Discrete continuity holds except where the zeroed top flux differs
        // from the reconstructed w; that residual is q·w_top/(2dz) in the top cell.
        let plane = g.ncolumns();
        for k in 0..g.nz {
            for c in 0..plane {
                let expected = if k == g.nz - 1 {
                    -2.0 * w.data[c + plane * g.nz] / (2.0 * g.dz)
                } else {
                    0.0
                };
                assert!((a.data[c + plane * k] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn advection_by_zero_velocity_vanishes() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = noise(&g, &mut rng);
        let v = VectorField::zeros(&g);
        let a = advect(&g, &q, &v, &WField::zeros(&g)).unwrap();
        assert_eq!(a.max_abs(), 0.0);
    }

    #[test]
    fn advection_is_skew_symmetric() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let v = VectorField::new(noise(&g, &mut rng), noise(&g, &mut rng));
            let w = reconstruct_w(&g, &v);
            let q = noise(&g, &mut rng);
            let a = advect(&g, &q, &v, &w).unwrap();
            let s = inner(&g, &a, &q);
            let bound = 1e-12 * norm_l2(&g, &q).powi(2) * v.max_abs() / g.dx.min(g.dz);
            assert!(s.abs() <= bound, "{s} > {bound}");
        }
    }

    #[test]
    fn advect_rejects_mismatched_grid() {
        let g = grid();
        let other = GridSpec::new(1.0, 1.5, 1.0, 8, 10, 6).unwrap();
        let q = ScalarField::zeros(&other);
        let v = VectorField::zeros(&g);
        assert!(advect(&g, &q, &v, &WField::zeros(&g)).is_err());
    }

    #[test]
    fn coriolis_rotates_and_conserves_energy() {
        let g = grid();
        let v = VectorField::from_fn(&g, |_, _, _| (1.0, 0.0));
        let c = coriolis(&v, 2.0);
        assert!(c.x.data.iter().all(|x| *x == 0.0));
        assert!(c.y.data.iter().all(|y| *y == 2.0));
        assert_eq!(coriolis(&VectorField::zeros(&g), 3.0).max_abs(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = VectorField::new(noise(&g, &mut rng), noise(&g, &mut rng));
        let c = coriolis(&r, 1.7);
        let work = inner(&g, &c.x, &r.x) + inner(&g, &c.y, &r.y);
        assert!(work.abs() < 1e-14);
    }

    #[test]
    fn baroclinic_gradient_closed_forms() {
        let g = grid();
        let t0 = ScalarField::constant(&g, 1.3);
        let bg = baroclinic_grad(&g, &t0, BoundaryKind::Neumann0);
        assert!(bg.max_abs() < 1e-13);
        let tx = ScalarField::from_fn(&g, |x, _, _| x);
        let bg = baroclinic_grad(&g, &tx, BoundaryKind::Neumann0);
        for k in 0..g.nz {
            for i in 1..g.nx - 1 {
                assert!((bg.x.at(i, 4, k) - (g.zc(k) + g.h)).abs() < 1e-13);
                assert!(bg.y.at(i, 4, k).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn baroclinic_gradient_refines_at_second_order() {
        let err = |n: usize| {
            let g = GridSpec::unit(n, n, n / 2).unwrap();
            let t = ScalarField::from_fn(&g, |x, _, _| (PI * x).sin());
            let bg = baroclinic_grad(&g, &t, BoundaryKind::Dirichlet0);
            let exact = ScalarField::from_fn(&g, |x, _, z| PI * (PI * x).cos() * (z + 1.0));
            (&bg.x - &exact).max_abs()
        };
        let order = (err(16) / err(32)).log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn zero_state_has_zero_tendency() {
        let g = grid();
        let s = State::zeros(&g);
        let p = PhysParams {
            f: 1.0,
            alpha_t: 0.5,
            ..PhysParams::default()
        };
        let t = tendency(&g, &s, &p, None);
        assert_eq!(t.dv.max_abs(), 0.0);
        assert_eq!(t.dtemp.max_abs(), 0.0);
    }

    #[test]
    fn temperature_eigenmode_decays_at_stencil_rate() {
        let g = grid();
        let p = PhysParams {
            rt: 4.0,
            ..PhysParams::default()
        };
        let (a, b) = (PI / g.lx, PI / g.ly);
        let temp = ScalarField::from_fn(&g, |x, y, _| (a * x).cos() * (b * y).cos());
        let s = State::new(&g, VectorField::zeros(&g), temp.clone()).unwrap();
        let dt = temperature_rhs(&g, &s, &p, None);
        let lam = |d: f64, l: f64| 4.0 / (d * d) * (PI * d / (2.0 * l)).sin().powi(2);
        let discrete = -(lam(g.dx, g.lx) + lam(g.dy, g.ly)) / p.rt;
        assert!((&dt - &temp.scaled(discrete)).max_abs() < 1e-12);
        let continuous = -(a * a + b * b) / p.rt;
        assert!((discrete - continuous).abs() < 0.02 * continuous.abs());
    }

    #[test]
    fn temperature_energy_identity_holds_semi_discretely() {
        let g = grid();
        let p = PhysParams {
            rt: 3.0,
            alpha_t: 0.8,
            ..PhysParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = State::new(&g, VectorField::zeros(&g), noise(&g, &mut rng)).unwrap();
        let dt = temperature_rhs(&g, &s, &p, None);
        let rate = inner(&g, &s.temp, &dt);
        let (gh, _) = crate::fields::seminorm_h1_parts(&g, &s.temp, p.temperature_bc(), None);
        let gs = crate::fields::norm_l2_gamma_s(&g, &s.temp, p.temperature_bc());
        let expected = -(gh * gh + p.alpha_t * gs * gs) / p.rt;
        assert!((rate - expected).abs() < 1e-11 * expected.abs());
    }

    #[test]
    fn hydrostatic_column_after_mean_removal() {
        // v = 0, T = x: the depth-varying part of dv_x is (z + h) − h/2 in the interior.
        let g = grid();
        let s = State::new(&g, VectorField::zeros(&g), ScalarField::from_fn(&g, |x, _, _| x)).unwrap();
        let p = PhysParams {
            alpha_t: 0.0,
            ..PhysParams::default()
        };
        let dv = momentum_rhs(&g, &s, &p, None);
        let mean = depth_average(&g, &dv.x).broadcast(g.nz);
        let anomaly = &dv.x - &mean;
        for k in 0..g.nz {
            let expected = g.zc(k) + g.h - g.h / 2.0;
            assert!((anomaly.at(5, 5, k) - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn momentum_rhs_is_linear_in_temperature() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = VectorField::new(noise(&g, &mut rng), noise(&g, &mut rng));
        let t1 = noise(&g, &mut rng);
        let t2 = noise(&g, &mut rng);
        let p = PhysParams::default();
        let rhs = |t: &ScalarField| momentum_rhs(&g, &State::new(&g, v.clone(), t.clone()).unwrap(), &p, None);
        let base = rhs(&ScalarField::zeros(&g));
        let lhs = rhs(&(&t1.scaled(2.0) + &t2)).sub(&base);
        let sum = rhs(&t1).sub(&base).scaled(2.0).add(&rhs(&t2).sub(&base));
        assert!(lhs.sub(&sum).max_abs() < 1e-12);
    }
}
