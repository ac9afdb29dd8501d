//! Heun time stepping of the explicit terms with implicit vertical diffusion
//! and a pressure projection after every stage.

use crate::dynamics::{momentum_rhs, reconstruct_w, temperature_rhs, Tendency};
use crate::error::{Error, Result};
use crate::fields::{dz_norm_sq, grad_h_norm_sq, norm_l2, norm_l2_gamma_s, PhysParams, State};
use crate::mesh::{GridSpec, ScalarField, SideBc, VectorField, WallData};
use crate::pressure::{barotropic_divergence_norm, pressure_gradient, PoissonSolve, PoissonSolver};

/// Time-dependent boundary data and interior sources.
///
/// Every method has a no-op default, so an implementor only overrides what it
/// needs.
pub trait Forcing: Sync {
    /// Additive explicit sources for the momentum and temperature equations.
    fn source(&self, _grid: &GridSpec, _state: &State, _params: &PhysParams, _t: f64) -> Option<Tendency> {
        None
    }

    /// Prescribed `∂_z v` at the surface (`−α_v τ` for a wind stress `τ`).
    fn top_flux(&self, _grid: &GridSpec, _t: f64) -> Option<VectorField> {
        None
    }

    /// Side-wall temperature `T_s` entering the Robin closure.
    fn side_temperature(&self, _grid: &GridSpec, _t: f64) -> Option<WallData> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub cfl_adv: f64,
    pub cfl_diff: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub t_end: f64,
    pub projection_tol: f64,
    /// Keep `v` fixed and evolve only `T` (passive-scalar experiments).
    pub freeze_velocity: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            cfl_adv: 0.5,
            cfl_diff: 0.2,
            dt_max: 1e-2,
            dt_min: 1e-8,
            t_end: 1.0,
            projection_tol: crate::pressure::DEFAULT_TOLERANCE,
            freeze_velocity: false,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.cfl_adv > 0.0 && self.cfl_adv <= 1.0) {
            return bad(format!("cfl_adv must lie in (0, 1], got {}", self.cfl_adv));
        }
        if !(self.cfl_diff > 0.0 && self.cfl_diff <= 0.5) {
            return bad(format!("cfl_diff must lie in (0, 0.5], got {}", self.cfl_diff));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max && self.dt_max.is_finite()) {
            return bad(format!("need 0 < dt_min <= dt_max, got {} and {}", self.dt_min, self.dt_max));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be a finite non-negative time, got {}", self.t_end));
        }
        if !(self.projection_tol > 0.0 && self.projection_tol < 1.0) {
            return bad(format!("projection tolerance must lie in (0, 1), got {}", self.projection_tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    /// `dt·max(|u|/dx, |v|/dy, |w|/dz)` at the start of the step.
    pub cfl_adv: f64,
    /// `dt/(min(dx², dy²)·min(Re₁, R_T))`.
    pub cfl_diff: f64,
    /// Report of the final-stage projection (absent with frozen velocity).
    pub poisson: Option<PoissonSolve>,
    /// Number of times `dt` was halved before acceptance.
    pub rejections: usize,
    /// `Δ(½‖T‖²) + dt·[(1/R_T)‖∇_H T‖² + (α_T/R_T)‖T‖²_Γs + ε‖∂_z T‖²]` with
    /// the dissipation evaluated at the start of the step.
    pub energy_residual: f64,
    /// `‖∇_H·v̄‖₂` after the step.
    pub constraint: f64,
}

/// Advective and diffusive CFL numbers of `state` at step `dt`.
pub fn cfl_numbers(grid: &GridSpec, state: &State, params: &PhysParams, dt: f64) -> (f64, f64) {
    let rate = (state.v.x.max_abs() / grid.dx)
        .max(state.v.y.max_abs() / grid.dy)
        .max(state.w.max_abs() / grid.dz);
    let diff = dt / (grid.dx.min(grid.dy).powi(2) * params.re1.min(params.rt));
    (dt * rate, diff)
}

/// Largest step allowed by the advective, diffusive and rotational limits.
pub fn cfl_dt(grid: &GridSpec, state: &State, params: &PhysParams, config: &StepConfig) -> f64 {
    const FLOOR: f64 = 1e-30;
    let adv = config.cfl_adv
        * (grid.dx / state.v.x.max_abs().max(FLOOR))
            .min(grid.dy / state.v.y.max_abs().max(FLOOR))
            .min(grid.dz / state.w.max_abs().max(FLOOR));
    let diff = config.cfl_diff * grid.dx.min(grid.dy).powi(2) * params.re1.min(params.rt);
    let mut dt = config.dt_max.min(adv).min(diff);
    if params.f != 0.0 {
        dt = dt.min(0.5 / params.f.abs());
    }
    dt
}

/// Solves `(I − r·D_zz) x = b` in place for one column with Neumann ends,
/// `r = dt·κ/dz²`. `top_add` is added to the top row of the right-hand side
/// (the inhomogeneous surface flux contribution `dt·κ·g/dz`).
pub fn implicit_column(x: &mut [f64], r: f64, top_add: f64, scratch: &mut Vec<f64>) {
    let n = x.len();
    if n == 0 {
        return;
    }
    x[n - 1] += top_add;
    if n == 1 {
        return;
    }
    // Thomas algorithm; sub/super diagonals are −r, diagonal 1 + r (ends) or 1 + 2r.
    scratch.clear();
    scratch.resize(n, 0.0);
    let diag = |k: usize| if k == 0 || k == n - 1 { 1.0 + r } else { 1.0 + 2.0 * r };
    let mut beta = diag(0);
    scratch[0] = 0.0;
    x[0] /= beta;
    for k in 1..n {
        scratch[k] = -r / beta;
        beta = diag(k) + r * scratch[k];
        x[k] = (x[k] + r * x[k - 1]) / beta;
    }
    for k in (0..n - 1).rev() {
        x[k] -= scratch[k + 1] * x[k + 1];
    }
}

/// Applies implicit vertical diffusion to every column of `f`.
pub fn implicit_vertical_diffusion(
    grid: &GridSpec,
    f: &mut ScalarField,
    dt: f64,
    kappa: f64,
    top_flux: Option<&ScalarField>,
) {
    if kappa == 0.0 {
        return;
    }
    let r = dt * kappa / (grid.dz * grid.dz);
    let plane = grid.ncolumns();
    let nz = f.nz;
    let mut col = vec![0.0; nz];
    let mut scratch = Vec::with_capacity(nz);
    for c in 0..plane {
        for k in 0..nz {
            col[k] = f.data[c + plane * k];
        }
        let top_add = top_flux.map_or(0.0, |g| dt * kappa * g.data[c] / grid.dz);
        implicit_column(&mut col, r, top_add, &mut scratch);
        for k in 0..nz {
            f.data[c + plane * k] = col[k];
        }
    }
}

/// Dissipation rate `(1/R_T)‖∇_H T‖² + (α_T/R_T)‖T‖²_Γs + ε‖∂_z T‖²`.
pub fn temperature_dissipation(
    grid: &GridSpec,
    temp: &ScalarField,
    params: &PhysParams,
    wall: Option<&WallData>,
) -> f64 {
    let bc = SideBc {
        kind: params.temperature_bc(),
        data: wall,
    };
    let mut d = grad_h_norm_sq(grid, temp, bc) / params.rt;
    if params.alpha_t > 0.0 {
        d += params.alpha_t / params.rt * norm_l2_gamma_s(grid, temp, bc).powi(2);
    }
    if params.eps > 0.0 {
        d += params.eps * dz_norm_sq(grid, temp, None);
    }
    d
}

/// Owns the projection workspace for one simulation.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub grid: GridSpec,
    pub params: PhysParams,
    pub config: StepConfig,
    solver: PoissonSolver,
}

impl Stepper {
    pub fn new(grid: &GridSpec, params: PhysParams, config: StepConfig) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        Ok(Self {
            grid: *grid,
            params,
            config,
            solver: PoissonSolver::with_tolerance(grid, config.projection_tol),
        })
    }

    fn explicit(&self, state: &State, t: f64, forcing: Option<&dyn Forcing>) -> Tendency {
        let g = &self.grid;
        let wall = forcing.and_then(|f| f.side_temperature(g, t));
        let dtemp = temperature_rhs(g, state, &self.params, wall.as_ref());
        let dv = if self.config.freeze_velocity {
            VectorField::zeros(g)
        } else {
            let mut dv = momentum_rhs(g, state, &self.params, wall.as_ref());
            dv.axpy(-1.0, &pressure_gradient(g, &state.ps).broadcast(g.nz));
            dv
        };
        let mut tend = Tendency { dv, dtemp };
        if let Some(src) = forcing.and_then(|f| f.source(g, state, &self.params, t)) {
            if !self.config.freeze_velocity {
                tend.dv.axpy(1.0, &src.dv);
            }
            tend.dtemp.axpy(1.0, &src.dtemp);
        }
        tend
    }

    /// Implicit vertical diffusion, projection and `w` refresh of a
    /// provisional state; `ps_base` is the pressure already applied.
    fn close_stage(
        &mut self,
        mut s: State,
        ps_base: ScalarField,
        dt: f64,
        t_new: f64,
        forcing: Option<&dyn Forcing>,
    ) -> Result<(State, Option<PoissonSolve>)> {
        let g = self.grid;
        implicit_vertical_diffusion(&g, &mut s.temp, dt, self.params.eps, None);
        let mut report = None;
        if !self.config.freeze_velocity {
            let top = forcing.and_then(|f| f.top_flux(&g, t_new));
            let kv = 1.0 / self.params.re2;
            implicit_vertical_diffusion(&g, &mut s.v.x, dt, kv, top.as_ref().map(|t| &t.x));
            implicit_vertical_diffusion(&g, &mut s.v.y, dt, kv, top.as_ref().map(|t| &t.y));
            let proj = self.solver.project(&s.v, dt)?;
            s.v = proj.v;
            s.ps = ps_base;
            s.ps.axpy(1.0, &proj.phi);
            s.w = reconstruct_w(&g, &s.v);
            report = Some(proj.report);
        } else {
            s.ps = ps_base;
        }
        s.time = t_new;
        Ok((s, report))
    }

    /// One Heun step of exactly `dt` (no CFL control).
    pub fn heun(&mut self, state: &State, dt: f64, forcing: Option<&dyn Forcing>) -> Result<(State, Option<PoissonSolve>)> {
        let t0 = state.time;
        let t1 = t0 + dt;
        let f0 = self.explicit(state, t0, forcing);
        let mut s1 = state.clone();
        s1.v.axpy(dt, &f0.dv);
        s1.temp.axpy(dt, &f0.dtemp);
        let (x1, _) = self.close_stage(s1, state.ps.clone(), dt, t1, forcing)?;
        let f1 = self.explicit(&x1, t1, forcing);
        let mut s2 = state.clone();
        s2.v.axpy(0.5 * dt, &f0.dv);
        s2.v.axpy(0.5 * dt, &f1.dv);
        s2.temp.axpy(0.5 * dt, &f0.dtemp);
        s2.temp.axpy(0.5 * dt, &f1.dtemp);
        let mut ps = state.ps.scaled(0.5);
        ps.axpy(0.5, &x1.ps);
        self.close_stage(s2, ps, dt, t1, forcing)
    }

    /// Advances by at most `dt_request`, limited by the CFL bound and halved
    /// on rejection down to `dt_min`.
    pub fn step(&mut self, state: &State, dt_request: f64, forcing: Option<&dyn Forcing>) -> Result<(State, StepReport)> {
        let g = self.grid;
        let mut dt = dt_request.min(cfl_dt(&g, state, &self.params, &self.config));
        if !(dt > 0.0) {
            return Err(Error::StepFailed {
                time: state.time,
                reason: format!("non-positive step {dt}"),
            });
        }
        let wall0 = forcing.and_then(|f| f.side_temperature(&g, state.time));
        let e0 = 0.5 * norm_l2(&g, &state.temp).powi(2);
        let diss0 = temperature_dissipation(&g, &state.temp, &self.params, wall0.as_ref());
        let mut rejections = 0;
        loop {
            let attempt = self.heun(state, dt, forcing);
            let reason = match attempt {
                Ok((next, poisson)) => {
                    if !next.is_finite() {
                        return Err(Error::StepFailed {
                            time: state.time,
                            reason: format!("non-finite values after a step of {dt:.3e}; last good state at t = {}", state.time),
                        });
                    }
                    let (ca, cd) = cfl_numbers(&g, &next, &self.params, dt);
                    if ca <= self.config.cfl_adv * (1.0 + 1e-12) {
                        let (ca0, _) = cfl_numbers(&g, state, &self.params, dt);
                        let e1 = 0.5 * norm_l2(&g, &next.temp).powi(2);
                        let report = StepReport {
                            dt,
                            cfl_adv: ca0.max(ca),
                            cfl_diff: cd,
                            poisson,
                            rejections,
                            energy_residual: e1 - e0 + dt * diss0,
                            constraint: barotropic_divergence_norm(&g, &next.v),
                        };
                        return Ok((next, report));
                    }
                    format!("advective CFL {ca:.3} exceeds {}", self.config.cfl_adv)
                }
                Err(Error::SolverDiverged { iterations, residual, .. }) => {
                    format!("projection stalled at residual {residual:.3e} after {iterations} iterations")
                }
                Err(Error::NonFinite { field, i, j, k, value }) => {
                    return Err(Error::StepFailed {
                        time: state.time,
                        reason: format!(
                            "non-finite {value} in `{field}` at ({i}, {j}, {k}) during the step; last good state at t = {}",
                            state.time
                        ),
                    })
                }
                Err(e) => return Err(e),
            };
            dt *= 0.5;
            rejections += 1;
            if dt < self.config.dt_min {
                return Err(Error::StepFailed {
                    time: state.time,
                    reason: format!("{reason}; dt fell below dt_min = {}", self.config.dt_min),
                });
            }
        }
    }

    /// Steps until `t_target`, clipping the last step to land on it.
    /// `on_step` sees every accepted state.
    pub fn advance_to(
        &mut self,
        state: &mut State,
        t_target: f64,
        forcing: Option<&dyn Forcing>,
        mut on_step: impl FnMut(&State, &StepReport) -> Result<()>,
    ) -> Result<usize> {
        let mut n = 0;
        let eps_t = 1e-12 * t_target.abs().max(1.0);
        while state.time < t_target - eps_t {
            let remaining = t_target - state.time;
            let mut request = self.config.dt_max.min(remaining);
            // Avoid a sliver step at the end.
            if remaining > request * (1.0 + 1e-9) && remaining < 1.5 * request {
                request = 0.5 * remaining;
            }
            let (next, report) = self.step(state, request, forcing)?;
            *state = next;
            if (t_target - state.time).abs() <= eps_t {
                state.time = t_target;
            }
            on_step(state, &report)?;
            n += 1;
        }
        Ok(n)
    }
}
