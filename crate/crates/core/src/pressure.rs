//! Surface-pressure projection onto depth-averaged divergence-free fields and
//! hydrostatic pressure reconstruction.
//!
//! The projection solves `D(G φ) = D(v̄*)/dt` where `D` is the central
//! divergence with no-slip ghosts (the one used to reconstruct `w`) and `G`
//! is the central gradient with Neumann ghosts. `D` and `−G` are exact
//! adjoints, so the operator is symmetric negative semidefinite with only
//! constants in its null space, and after the correction `D v̄ = dt·r` holds
//! exactly for the solver residual `r`.

use crate::error::{Error, Result};
use crate::fields::VELOCITY_BC;
use crate::mesh::{
    ddx_raw, ddy_raw, depth_average, interfaces_to_centres, vertical_cumint_raw, BoundaryKind,
    GridSpec, ScalarField, VectorField,
};

/// Outcome of one pressure solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonSolve {
    /// Relative residual target.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Achieved `‖r‖₂/‖b‖₂` (0 when the right-hand side vanishes).
    pub achieved_residual: f64,
    pub iteration_count: usize,
    /// Relative size of the mean removed from the right-hand side.
    pub compatibility_defect: f64,
}

impl PoissonSolve {
    /// Mean of the right-hand side above this relative size signals an
    /// inconsistent boundary flux.
    pub const COMPATIBILITY_WARN: f64 = 1e-8;

    pub fn converged(&self) -> bool {
        self.achieved_residual <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub v: VectorField,
    pub phi: ScalarField,
    pub report: PoissonSolve,
}

/// Gradient `G φ` of a surface field with Neumann ghosts.
pub fn pressure_gradient(grid: &GridSpec, ps: &ScalarField) -> VectorField {
    let bc = BoundaryKind::Neumann0.into();
    VectorField::new(ddx_raw(grid, ps, bc), ddy_raw(grid, ps, bc))
}

/// Conjugate-gradient solver for the projection operator on one grid.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    grid: GridSpec,
    pub tolerance: f64,
    pub max_iterations: usize,
    inv_diag: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

impl PoissonSolver {
    pub fn new(grid: &GridSpec) -> Self {
        Self::with_tolerance(grid, DEFAULT_TOLERANCE)
    }

    pub fn with_tolerance(grid: &GridSpec, tolerance: f64) -> Self {
        let n = grid.ncolumns();
        let dx = diag_1d(grid.nx, grid.dx);
        let dy = diag_1d(grid.ny, grid.dy);
        let mut inv_diag = vec![0.0; n];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                inv_diag[i + grid.nx * j] = 1.0 / (dx[i] + dy[j]);
            }
        }
        Self {
            grid: *grid,
            tolerance,
            max_iterations: 20 * n.max(50),
            inv_diag,
            gx: vec![0.0; n],
            gy: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `out = −D(G φ)`, the positive semidefinite form of the operator.
    fn apply_neg(&mut self, phi: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (cx, cy) = (0.5 / self.grid.dx, 0.5 / self.grid.dy);
        for j in 0..ny {
            let row = nx * j;
            for i in 0..nx {
                let e = if i + 1 < nx { phi[row + i + 1] } else { phi[row + i] };
                let w = if i > 0 { phi[row + i - 1] } else { phi[row + i] };
                self.gx[row + i] = cx * (e - w);
                let n = if j + 1 < ny { phi[row + nx + i] } else { phi[row + i] };
                let s = if j > 0 { phi[row - nx + i] } else { phi[row + i] };
                self.gy[row + i] = cy * (n - s);
            }
        }
        for j in 0..ny {
            let row = nx * j;
            for i in 0..nx {
                let c = row + i;
                let e = if i + 1 < nx { self.gx[c + 1] } else { -self.gx[c] };
                let w = if i > 0 { self.gx[c - 1] } else { -self.gx[c] };
                let n = if j + 1 < ny { self.gy[c + nx] } else { -self.gy[c] };
                let s = if j > 0 { self.gy[c - nx] } else { -self.gy[c] };
                out[c] = -(cx * (e - w) + cy * (n - s));
            }
        }
    }

    /// Solves `D(G φ) = b` in the zero-mean gauge.
    pub fn solve(&mut self, b: &ScalarField) -> Result<(ScalarField, PoissonSolve)> {
        let n = self.grid.ncolumns();
        if b.nz != 1 || b.data.len() != n {
            return Err(Error::GridMismatch("poisson right-hand side must be a surface field".into()));
        }
        b.check_finite("rhs")?;
        // Solve −A φ = −b.
        let mut r: Vec<f64> = b.data.iter().map(|x| -x).collect();
        let b_norm = norm(&r);
        let mean = r.iter().sum::<f64>() / n as f64;
        let defect = if b_norm > 0.0 {
            mean.abs() * (n as f64).sqrt() / b_norm
        } else {
            0.0
        };
        r.iter_mut().for_each(|x| *x -= mean);
        let rhs = r.clone();
        let mut report = PoissonSolve {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            achieved_residual: 0.0,
            iteration_count: 0,
            compatibility_defect: defect,
        };
        let mut phi = vec![0.0; n];
        let r0 = norm(&r);
        if r0 == 0.0 {
            return Ok((ScalarField { data: phi, ..b.clone() }, report));
        }
        let target = self.tolerance * b_norm;
        let mut z = vec![0.0; n];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut res = r0;
        let mut it = 0;
        while res > target {
            if it >= self.max_iterations {
                return Err(Error::SolverDiverged {
                    iterations: it,
                    residual: res / b_norm,
                    target: self.tolerance,
                });
            }
            self.apply_neg(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for c in 0..n {
                phi[c] += alpha * p[c];
                r[c] -= alpha * ap[c];
            }
            it += 1;
            // Recompute the true residual periodically to avoid drift.
            if it % 50 == 0 {
                self.apply_neg(&phi, &mut ap);
                for c in 0..n {
                    r[c] = rhs[c] - ap[c];
                }
            }
            res = norm(&r);
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for c in 0..n {
                p[c] = z[c] + beta * p[c];
            }
        }
        let m = phi.iter().sum::<f64>() / n as f64;
        phi.iter_mut().for_each(|x| *x -= m);
        // Final true residual.
        self.apply_neg(&phi, &mut ap);
        let true_res = norm(&ap.iter().zip(&rhs).map(|(a, bb)| bb - a).collect::<Vec<_>>());
        report.achieved_residual = true_res / b_norm;
        report.iteration_count = it;
        if !report.converged() {
            return Err(Error::SolverDiverged {
                iterations: it,
                residual: report.achieved_residual,
                target: self.tolerance,
            });
        }
        Ok((ScalarField { data: phi, ..b.clone() }, report))
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
        let m = z.iter().sum::<f64>() / z.len() as f64;
        z.iter_mut().for_each(|x| *x -= m);
    }

    /// Removes the depth-averaged divergence of `v_star`:
    /// `v = v* − dt·G φ` uniformly in `z`.
    pub fn project(&mut self, v_star: &VectorField, dt: f64) -> Result<Projection> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("projection needs dt > 0, got {dt}")));
        }
        self.grid.check_field(&v_star.x, "v.x")?;
        self.grid.check_field(&v_star.y, "v.y")?;
        let g = &self.grid;
        let bar = VectorField::new(depth_average(g, &v_star.x), depth_average(g, &v_star.y));
        let mut rhs = surface_divergence(g, &bar);
        rhs.scale(1.0 / dt);
        let (phi, report) = self.solve(&rhs)?;
        let grad = pressure_gradient(&self.grid, &phi).broadcast(v_star.nz());
        let mut v = v_star.clone();
        v.axpy(-dt, &grad);
        Ok(Projection { v, phi, report })
    }
}

/// Divergence of a surface vector field with no-slip ghosts.
pub fn surface_divergence(grid: &GridSpec, v: &VectorField) -> ScalarField {
    let bc = VELOCITY_BC.into();
    let mut d = ddx_raw(grid, &v.x, bc);
    d.axpy(1.0, &ddy_raw(grid, &v.y, bc));
    d
}

/// `‖∇_H·v̄‖₂` over the surface.
pub fn barotropic_divergence_norm(grid: &GridSpec, v: &VectorField) -> f64 {
    let bar = VectorField::new(depth_average(grid, &v.x), depth_average(grid, &v.y));
    let d = surface_divergence(grid, &bar);
    crate::fields::norm_l2(grid, &d)
}

/// One-shot projection with the default tolerance.
pub fn project(grid: &GridSpec, v_star: &VectorField, dt: f64) -> Result<Projection> {
    PoissonSolver::new(grid).project(v_star, dt)
}

/// `p = −∫_{−h}^{z} T dξ + p_s` at cell centres.
pub fn reconstruct_p(grid: &GridSpec, temp: &ScalarField, ps: &ScalarField) -> Result<ScalarField> {
    grid.check_field(temp, "T")?;
    if ps.nz != 1 || ps.nx != grid.nx || ps.ny != grid.ny {
        return Err(Error::GridMismatch("p_s must be a surface field on the grid".into()));
    }
    let mut p = interfaces_to_centres(grid, &vertical_cumint_raw(grid, temp));
    p.scale(-1.0);
    p.axpy(1.0, &ps.broadcast(grid.nz));
    Ok(p)
}

/// Diagonal of the 1D operator `−D₁G₁` (length `n`, spacing `d`).
fn diag_1d(n: usize, d: f64) -> Vec<f64> {
    let c = 0.25 / (d * d);
    (0..n)
        .map(|i| {
            // −A e_i at i: contributions from g_{i+1} and g_{i−1}, ghosts folded in.
            let grad = |m: isize| -> f64 {
                // derivative of e_i at node m (Neumann ghosts), times 2d
                let val = |q: isize| -> f64 {
                    let q = q.clamp(0, n as isize - 1);
                    (q == i as isize) as u8 as f64
                };
                val(m + 1) - val(m - 1)
            };
            let g = |m: isize| -> f64 {
                if m < 0 {
                    -grad(0)
                } else if m >= n as isize {
                    -grad(n as isize - 1)
                } else {
                    grad(m)
                }
            };
            let ii = i as isize;
            -c * (g(ii + 1) - g(ii - 1))
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{norm_l2, norm_l2_vec};
    use crate::mesh::inner;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(1.0, 1.3, 0.7, 16, 12, 5).unwrap()
    }

    fn random_v(g: &GridSpec, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = VectorField::zeros(g);
        v.x.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        v.y.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        v
    }

    #[test]
    fn diagonal_matches_operator() {
        let g = grid();
        let mut s = PoissonSolver::new(&g);
        let n = g.ncolumns();
        let mut e = vec![0.0; n];
        let mut out = vec![0.0; n];
        for c in [0, 1, 2, 7, n / 2, n - 2, n - 1] {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[c] = 1.0;
            s.apply_neg(&e, &mut out);
            assert!((out[c] * s.inv_diag[c] - 1.0).abs() < 1e-12, "cell {c}");
        }
    }

    #[test]
    fn operator_is_symmetric_and_semidefinite() {
        let g = grid();
        let mut s = PoissonSolver::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = g.ncolumns();
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (mut aa, mut ab) = (vec![0.0; n], vec![0.0; n]);
        s.apply_neg(&a, &mut aa);
        s.apply_neg(&b, &mut ab);
        assert!((dot(&aa, &b) - dot(&a, &ab)).abs() < 1e-10 * dot(&aa, &a).abs());
        assert!(dot(&aa, &a) > 0.0);
        s.apply_neg(&vec![2.5; n], &mut aa);
        assert!(aa.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn projection_enforces_constraint() {
        let g = grid();
        let v = random_v(&g, 2);
        let before = barotropic_divergence_norm(&g, &v);
        let p = project(&g, &v, 0.1).unwrap();
        let after = barotropic_divergence_norm(&g, &p.v);
        assert!(after <= 1e-9 * before, "{after} vs {before}");
        assert!(p.report.converged());
        assert!(p.phi.mean().abs() < 1e-14 * p.phi.max_abs().max(1.0));
        // w at the top then vanishes to the same level
        let w = crate::dynamics::reconstruct_w(&g, &p.v);
        let top = w.top().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(top < 1e-8 * v.max_abs());
    }

    #[test]
    fn admissible_field_is_unchanged() {
        let g = grid();
        let v = project(&g, &random_v(&g, 3), 1.0).unwrap().v;
        let again = project(&g, &v, 1.0).unwrap();
        assert!(again.v.sub(&v).max_abs() < 1e-9 * v.max_abs());
        assert!(norm_l2(&g, &again.phi) < 1e-9 * norm_l2_vec(&g, &v));
    }

    #[test]
    fn gradient_field_is_annihilated() {
        let g = grid();
        let (a, b) = (PI / g.lx, PI / g.ly);
        let v = VectorField::from_fn(&g, |x, y, _| {
            (-a * (a * x).sin() * (b * y).cos(), -b * (a * x).cos() * (b * y).sin())
        });
        // The discrete gradient of the sampled potential lies in the range of G exactly.
        let psi = ScalarField::surface_from_fn(&g, |x, y| (a * x).cos() * (b * y).cos());
        let vd = pressure_gradient(&g, &psi).broadcast(g.nz);
        let p = project(&g, &vd, 1.0).unwrap();
        assert!(norm_l2_vec(&g, &p.v) <= 1e-6 * norm_l2_vec(&g, &vd));
        // The continuous gradient is removed up to the discretization error.
        let pc = project(&g, &v, 1.0).unwrap();
        assert!(norm_l2_vec(&g, &pc.v) <= 0.1 * norm_l2_vec(&g, &v));
    }

    #[test]
    fn projection_does_not_increase_energy() {
        let g = grid();
        for seed in 0..4 {
            let v = random_v(&g, 10 + seed);
            let p = project(&g, &v, 0.3).unwrap();
            assert!(norm_l2_vec(&g, &p.v) <= norm_l2_vec(&g, &v) * (1.0 + 1e-12));
            // correction is orthogonal to the result
            let dv = v.sub(&p.v);
            let o = inner(&g, &dv.x, &p.v.x) + inner(&g, &dv.y, &p.v.y);
            assert!(o.abs() < 1e-9 * norm_l2_vec(&g, &v).powi(2));
        }
    }

    #[test]
    fn correction_is_uniform_in_depth() {
        let g = grid();
        let v = random_v(&g, 5);
        let p = project(&g, &v, 0.5).unwrap();
        let dv = v.sub(&p.v);
        for k in 1..g.nz {
            for c in 0..g.ncolumns() {
                let n = c + g.ncolumns() * k;
                assert!((dv.x.data[n] - dv.x.data[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_dt_and_reports_non_convergence() {
        let g = grid();
        assert!(project(&g, &random_v(&g, 1), 0.0).is_err());
        let mut s = PoissonSolver::new(&g);
        s.max_iterations = 2;
        assert!(matches!(
            s.project(&random_v(&g, 1), 1.0),
            Err(Error::SolverDiverged { .. })
        ));
    }

    #[test]
    fn inconsistent_rhs_mean_is_reported() {
        let g = grid();
        let mut s = PoissonSolver::new(&g);
        let b = ScalarField::surface_from_fn(&g, |x, _| 1.0 + (PI * x).cos());
        let (_, r) = s.solve(&b).unwrap();
        assert!(r.compatibility_defect > PoissonSolve::COMPATIBILITY_WARN);
    }

    #[test]
    fn pressure_reconstruction() {
        let g = grid();
        let ps = ScalarField::surface_from_fn(&g, |x, y| x - y);
        let p = reconstruct_p(&g, &ScalarField::zeros(&g), &ps).unwrap();
        assert_eq!(p, ps.broadcast(g.nz));
        let p = reconstruct_p(&g, &ScalarField::constant(&g, 2.0), &ps).unwrap();
        for k in 0..g.nz {
            let expected = -2.0 * (g.zc(k) + g.h) + ps.at(3, 4, 0);
            assert!((p.at(3, 4, k) - expected).abs() < 1e-13);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = ScalarField::zeros(&g);
        t.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let p = reconstruct_p(&g, &t, &ps).unwrap();
        for k in 1..g.nz {
            let dp = p.at(2, 5, k) - p.at(2, 5, k - 1);
            let tbar = 0.5 * (t.at(2, 5, k) + t.at(2, 5, k - 1));
            assert!((dp + tbar * g.dz).abs() < 1e-14);
        }
    }
}
