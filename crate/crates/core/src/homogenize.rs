//! Wind stress and side temperature: direct boundary closures, and the
//! change of variables `(V, 𝒯) = (v + (α_v/h)P(z)τ, T − T*)` that moves
//! them into interior correction terms.
//!
//! `P(z) = (z+h)²/2 − h²/6` and `Q(z) = (z+h)³ − h²(z+h)`.

use crate::dynamics::{baroclinic_grad, reconstruct_w, Tendency};
use crate::error::{Error, Result};
use crate::fields::{norm_l2, norm_l2_vec, PhysParams, State, VELOCITY_BC};
use crate::mesh::{
    d2z, ddx_raw, ddy_raw, ddz_centres, interfaces_to_centres, laplacian_h_raw, BoundaryKind,
    GridSpec, ScalarField, SideBc, VectorField, WallData,
};
use crate::stepper::{Forcing, StepConfig, Stepper};

/// Vertical profiles of the lift at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftProfile {
    /// Cell averages of `P`; they sum to zero exactly, so the lift leaves the
    /// depth average untouched.
    pub p: Vec<f64>,
    /// `Q` at cell centres.
    pub q: Vec<f64>,
    /// `z + h` at cell centres.
    pub zh: Vec<f64>,
}

impl LiftProfile {
    pub fn new(grid: &GridSpec) -> Self {
        let h = grid.h;
        let zh: Vec<f64> = (0..grid.nz).map(|k| grid.zc(k) + h).collect();
        // cell average of a quadratic with leading coefficient 1/2
        let p = zh
            .iter()
            .map(|s| Self::p_at(s - h, h) + grid.dz * grid.dz / 24.0)
            .collect();
        let q = zh.iter().map(|s| Self::q_at(s - h, h)).collect();
        Self { p, q, zh }
    }

    pub fn p_at(z: f64, h: f64) -> f64 {
        let s = z + h;
        0.5 * s * s - h * h / 6.0
    }

    pub fn q_at(z: f64, h: f64) -> f64 {
        let s = z + h;
        s * s * s - h * h * s
    }
}

/// `V = v + (α_v/h)·P·τ`.
pub fn lift(grid: &GridSpec, v: &VectorField, tau: &VectorField, alpha_v: f64) -> VectorField {
    let prof = LiftProfile::new(grid);
    let mut out = v.clone();
    if alpha_v != 0.0 {
        out.axpy(alpha_v / grid.h, &tau.broadcast(grid.nz).times_profile(&prof.p));
    }
    out
}

/// Inverse of [`lift`].
pub fn unlift(grid: &GridSpec, big_v: &VectorField, tau: &VectorField, alpha_v: f64) -> VectorField {
    lift(grid, big_v, tau, -alpha_v)
}

/// Wall values of a field by linear extrapolation of the two nearest cells
/// to each side-wall face.
pub fn wall_from_field(grid: &GridSpec, f: &ScalarField) -> Result<WallData> {
    grid.check_field(f, "T_s")?;
    if f.nz != grid.nz {
        return Err(Error::GridMismatch("side temperature must be a 3D field".into()));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let mut w = WallData::zeros(grid);
    let ex = |a: f64, b: f64| 1.5 * a - 0.5 * b;
    for k in 0..grid.nz {
        for j in 0..ny {
            w.west[j + ny * k] = ex(f.at(0, j, k), f.at(1, j, k));
            w.east[j + ny * k] = ex(f.at(nx - 1, j, k), f.at(nx - 2, j, k));
        }
        for i in 0..nx {
            w.south[i + nx * k] = ex(f.at(i, 0, k), f.at(i, 1, k));
            w.north[i + nx * k] = ex(f.at(i, ny - 1, k), f.at(i, ny - 2, k));
        }
    }
    Ok(w)
}

/// Time samples of the wind stress `τ` (surface field) and the side
/// temperature `T_s` (wall data). Values between samples are linear
/// interpolants; outside the sampled window the end values are held.
#[derive(Debug, Clone)]
pub struct BoundaryForcing {
    pub times: Vec<f64>,
    pub tau: Vec<VectorField>,
    pub ts: Vec<WallData>,
    pub alpha_v: f64,
    pub alpha_t: f64,
    dtau: Vec<VectorField>,
}

impl BoundaryForcing {
    pub fn new(
        grid: &GridSpec,
        times: Vec<f64>,
        tau: Vec<VectorField>,
        ts: Vec<WallData>,
        alpha_v: f64,
        alpha_t: f64,
    ) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "forcing needs at least 3 time samples to difference, got {}",
                times.len()
            )));
        }
        if tau.len() != times.len() || ts.len() != times.len() {
            return Err(Error::InvalidArgument("forcing sample counts disagree".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("forcing times must increase strictly".into()));
        }
        for t in &tau {
            if t.nz() != 1 || t.x.nx != grid.nx || t.x.ny != grid.ny {
                return Err(Error::GridMismatch("wind stress must be a surface field on the grid".into()));
            }
            t.check_finite("tau")?;
        }
        for w in &ts {
            if (w.nx, w.ny, w.nz) != (grid.nx, grid.ny, grid.nz) {
                return Err(Error::GridMismatch("side temperature does not match the grid".into()));
            }
        }
        let n = times.len();
        let dtau = (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                tau[b].sub(&tau[a]).scaled(1.0 / (times[b] - times[a]))
            })
            .collect();
        let f = Self {
            times,
            tau,
            ts,
            alpha_v,
            alpha_t,
            dtau,
        };
        f.check_compatibility(grid)?;
        Ok(f)
    }

    /// Samples `τ(x, y, t)` and `T_s(x, y, z, t)` at `times`.
    pub fn from_fn(
        grid: &GridSpec,
        times: &[f64],
        tau: impl Fn(f64, f64, f64) -> (f64, f64),
        ts: impl Fn(f64, f64, f64, f64) -> f64,
        alpha_v: f64,
        alpha_t: f64,
    ) -> Result<Self> {
        let taus = times
            .iter()
            .map(|t| VectorField::surface_from_fn(grid, |x, y| tau(x, y, *t)))
            .collect();
        let walls = times.iter().map(|t| WallData::from_fn(grid, |x, y, z| ts(x, y, z, *t))).collect();
        Self::new(grid, times.to_vec(), taus, walls, alpha_v, alpha_t)
    }

    /// No stress, zero side temperature.
    pub fn zero(grid: &GridSpec, t_end: f64, alpha_v: f64, alpha_t: f64) -> Self {
        let t_end = t_end.max(1e-12);
        Self::from_fn(grid, &[0.0, 0.5 * t_end, t_end], |_, _, _| (0.0, 0.0), |_, _, _, _| 0.0, alpha_v, alpha_t)
            .expect("zero forcing is compatible")
    }

    /// Rejects data violating `τ = 0` on the side walls (when `α_v > 0`) or
    /// `∂_z T_s = 0` at the bottom and top edges (when `α_T > 0`), up to
    /// discretization-level tolerances.
    pub fn check_compatibility(&self, grid: &GridSpec) -> Result<()> {
        if self.alpha_v > 0.0 {
            let l = grid.lx.min(grid.ly);
            let d = grid.dx.max(grid.dy);
            for (n, tau) in self.tau.iter().enumerate() {
                let scale = tau.max_abs();
                let tol = 50.0 * (d / l).powi(2) * scale;
                for c in [&tau.x, &tau.y] {
                    let wall = max_wall_extrapolation(c);
                    if wall > tol {
                        return Err(Error::Incompatible(format!(
                            "wind stress does not vanish on the side walls at t = {} (extrapolated {wall:.3e} > {tol:.3e})",
                            self.times[n]
                        )));
                    }
                }
            }
        }
        if self.alpha_t > 0.0 {
            let nz = grid.nz;
            for (n, w) in self.ts.iter().enumerate() {
                let tol = 50.0 * grid.dz * w.max_abs() / (grid.h * grid.h);
                for (vals, m) in [(&w.west, grid.ny), (&w.east, grid.ny), (&w.south, grid.nx), (&w.north, grid.nx)] {
                    for c in 0..m {
                        let bottom = (vals[c + m] - vals[c]).abs() / grid.dz;
                        let top = (vals[c + m * (nz - 1)] - vals[c + m * (nz - 2)]).abs() / grid.dz;
                        if bottom.max(top) > tol {
                            return Err(Error::Incompatible(format!(
                                "∂_z T_s does not vanish at the top/bottom edges at t = {} ({:.3e} > {tol:.3e})",
                                self.times[n],
                                bottom.max(top)
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let i = self.times.partition_point(|s| *s <= t) - 1;
        let i = i.min(n - 2);
        (i, (t - self.times[i]) / (self.times[i + 1] - self.times[i]))
    }

    pub fn tau_at(&self, t: f64) -> VectorField {
        let (i, s) = self.locate(t);
        let mut out = self.tau[i].scaled(1.0 - s);
        out.axpy(s, &self.tau[i + 1]);
        out
    }

    /// `∂_t τ` from centred differences of the samples, interpolated.
    pub fn dtau_at(&self, t: f64) -> VectorField {
        let (i, s) = self.locate(t);
        let mut out = self.dtau[i].scaled(1.0 - s);
        out.axpy(s, &self.dtau[i + 1]);
        out
    }

    pub fn ts_at(&self, t: f64) -> WallData {
        let (i, s) = self.locate(t);
        self.ts[i].lerp(&self.ts[i + 1], s)
    }
}

fn max_wall_extrapolation(f: &ScalarField) -> f64 {
    let (nx, ny) = (f.nx, f.ny);
    let ex = |a: f64, b: f64| (1.5 * a - 0.5 * b).abs();
    let mut m = 0.0_f64;
    for j in 0..ny {
        m = m.max(ex(f.at(0, j, 0), f.at(1, j, 0)));
        m = m.max(ex(f.at(nx - 1, j, 0), f.at(nx - 2, j, 0)));
    }
    for i in 0..nx {
        m = m.max(ex(f.at(i, 0, 0), f.at(i, 1, 0)));
        m = m.max(ex(f.at(i, ny - 1, 0), f.at(i, ny - 2, 0)));
    }
    m
}

/// Direct treatment: surface flux `∂_z v = −α_v τ` and Robin data `T_s`.
impl Forcing for BoundaryForcing {
    fn top_flux(&self, _grid: &GridSpec, t: f64) -> Option<VectorField> {
        (self.alpha_v != 0.0).then(|| self.tau_at(t).scaled(-self.alpha_v))
    }

    fn side_temperature(&self, _grid: &GridSpec, t: f64) -> Option<WallData> {
        (self.alpha_t != 0.0).then(|| self.ts_at(t))
    }
}

/// `T*` samples on a uniform time grid.
#[derive(Debug, Clone)]
pub struct TStar {
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
}

impl TStar {
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let i = (self.times.partition_point(|s| *s <= t) - 1).min(n - 2);
        (i, (t - self.times[i]) / (self.times[i + 1] - self.times[i]))
    }

    pub fn at(&self, t: f64) -> ScalarField {
        if self.times.len() == 1 {
            return self.fields[0].clone();
        }
        let (i, s) = self.locate(t);
        let mut out = self.fields[i].scaled(1.0 - s);
        out.axpy(s, &self.fields[i + 1]);
        out
    }

    fn node_rate(&self, i: usize) -> ScalarField {
        let n = self.times.len();
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        (&self.fields[b] - &self.fields[a]).scaled(1.0 / (self.times[b] - self.times[a]))
    }

    /// `∂_t T*` by centred differences at the samples, interpolated.
    pub fn rate_at(&self, t: f64) -> ScalarField {
        if self.times.len() == 1 {
            return self.fields[0].map(|_| 0.0);
        }
        let (i, s) = self.locate(t);
        let mut out = self.node_rate(i).scaled(1.0 - s);
        out.axpy(s, &self.node_rate(i + 1));
        out
    }
}

/// Integrates `∂_t T* = ΔT*` (full Laplacian) from `T* = 0` with implicit
/// Euler steps of about `dt`, Robin side data `α_T T_s` and Neumann
/// top/bottom, recording every step.
pub fn solve_tstar(grid: &GridSpec, forcing: &BoundaryForcing, t_end: f64, dt: f64) -> Result<TStar> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("T* needs dt > 0 and t_end >= 0 (got {dt}, {t_end})")));
    }
    let steps = ((t_end / dt).ceil() as usize).max(1);
    let h = t_end.max(dt) / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|n| n as f64 * h).collect();
    let zero = ScalarField::zeros(grid);
    if forcing.alpha_t == 0.0 {
        return Ok(TStar {
            fields: vec![zero; times.len()],
            times,
        });
    }
    let kind = BoundaryKind::Robin(forcing.alpha_t);
    let mut fields = vec![zero.clone()];
    let mut cur = zero.clone();
    for t in &times[1..] {
        let wall = forcing.ts_at(*t);
        let lift = laplacian_h_raw(grid, &zero, SideBc::with_data(kind, &wall));
        let mut rhs = cur.clone();
        rhs.axpy(h, &lift);
        cur = heat_solve(grid, kind, h, &rhs, &cur)?;
        fields.push(cur.clone());
    }
    Ok(TStar { times, fields })
}

/// Conjugate gradients for `(I − h(Δ_H + ∂_z²)) x = b` with homogeneous ghosts.
fn heat_solve(grid: &GridSpec, kind: BoundaryKind, h: f64, b: &ScalarField, guess: &ScalarField) -> Result<ScalarField> {
    let bc: SideBc = kind.into();
    let apply = |x: &ScalarField| {
        let mut out = x.clone();
        out.axpy(-h, &laplacian_h_raw(grid, x, bc));
        out.axpy(-h, &d2z(grid, x, None));
        out
    };
    let diag = heat_diagonal(grid, kind, h);
    let dot = |a: &ScalarField, c: &ScalarField| a.data.iter().zip(&c.data).map(|(x, y)| x * y).sum::<f64>();
    let mut x = guess.clone();
    let mut r = b - &apply(&x);
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(b.map(|_| 0.0));
    }
    let target = 1e-12 * bnorm;
    let mut z = r.zip_map(&diag, |a, d| a / d);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_it = 10 * b.data.len().max(100);
    for it in 0.. {
        if dot(&r, &r).sqrt() <= target {
            break;
        }
        if it >= max_it {
            return Err(Error::SolverDiverged {
                iterations: it,
                residual: dot(&r, &r).sqrt() / bnorm,
                target: 1e-12,
            });
        }
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        z = r.zip_map(&diag, |a, d| a / d);
        let rz_new = dot(&r, &z);
        p = z.zip_map(&p, |zz, pp| zz + rz_new / rz * pp);
        rz = rz_new;
    }
    Ok(x)
}

fn heat_diagonal(grid: &GridSpec, kind: BoundaryKind, h: f64) -> ScalarField {
    let edge = |d: f64| match kind {
        BoundaryKind::Dirichlet0 => 3.0,
        BoundaryKind::Neumann0 => 1.0,
        BoundaryKind::Robin(a) => 2.0 - (2.0 - a * d) / (2.0 + a * d),
    };
    let (ex, ey) = (edge(grid.dx), edge(grid.dy));
    let mut out = ScalarField::zeros(grid);
    for k in 0..grid.nz {
        let cz = if k == 0 || k == grid.nz - 1 { 1.0 } else { 2.0 };
        for j in 0..grid.ny {
            let cy = if j == 0 || j == grid.ny - 1 { ey } else { 2.0 };
            for i in 0..grid.nx {
                let cx = if i == 0 || i == grid.nx - 1 { ex } else { 2.0 };
                let v = 1.0 + h * (cx / grid.dx.powi(2) + cy / grid.dy.powi(2) + cz / grid.dz.powi(2));
                out.set(i, j, k, v);
            }
        }
    }
    out
}

/// The four correction expressions, each kept as its list of terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrections {
    pub a_tau: [VectorField; 3],
    pub b: [ScalarField; 4],
    pub f_tau: [VectorField; 6],
    pub g_tau: [ScalarField; 5],
}

fn sum_vec(terms: &[VectorField]) -> VectorField {
    let mut out = terms[0].clone();
    for t in &terms[1..] {
        out.axpy(1.0, t);
    }
    out
}

fn sum_scalar(terms: &[ScalarField]) -> ScalarField {
    let mut out = terms[0].clone();
    for t in &terms[1..] {
        out.axpy(1.0, t);
    }
    out
}

impl Corrections {
    pub fn a_tau(&self) -> VectorField {
        sum_vec(&self.a_tau)
    }

    pub fn b(&self) -> ScalarField {
        sum_scalar(&self.b)
    }

    pub fn f_tau(&self) -> VectorField {
        sum_vec(&self.f_tau)
    }

    pub fn g_tau(&self) -> ScalarField {
        sum_scalar(&self.g_tau)
    }
}

/// Inputs of [`correction_terms`] at one instant.
#[derive(Debug, Clone, Copy)]
pub struct CorrectionInputs<'a> {
    pub big_v: &'a VectorField,
    pub tcal: &'a ScalarField,
    pub tstar: &'a ScalarField,
    pub dtstar: &'a ScalarField,
    pub tau: &'a VectorField,
    pub dtau: &'a VectorField,
    /// Side temperature, for the ghosts of `T*`.
    pub ts: Option<&'a WallData>,
}

fn dir() -> SideBc<'static> {
    VELOCITY_BC.into()
}

fn grad(grid: &GridSpec, f: &ScalarField, bc: SideBc<'_>) -> VectorField {
    VectorField::new(ddx_raw(grid, f, bc), ddy_raw(grid, f, bc))
}

fn dot_grad(grid: &GridSpec, a: &VectorField, f: &ScalarField, bc: SideBc<'_>) -> ScalarField {
    let g = grad(grid, f, bc);
    let gx = if g.nz() == a.nz() { g } else { g.broadcast(a.nz()) };
    a.x.zip_map(&gx.x, |p, q| p * q).zip_map(&a.y.zip_map(&gx.y, |p, q| p * q), |p, q| p + q)
}

fn mul(a: &ScalarField, b: &ScalarField) -> ScalarField {
    a.zip_map(b, |x, y| x * y)
}

/// Assembles `a_τ(V)`, `b(V, 𝒯)`, `F_τ` and `G_τ` term by term.
pub fn correction_terms(grid: &GridSpec, inp: CorrectionInputs<'_>, params: &PhysParams) -> Result<Corrections> {
    for (f, name) in [(&inp.big_v.x, "V.x"), (&inp.big_v.y, "V.y"), (inp.tcal, "T"), (inp.tstar, "T*"), (inp.dtstar, "dT*")] {
        grid.check_field(f, name)?;
        if f.nz != grid.nz {
            return Err(Error::GridMismatch(format!("`{name}` must be 3D")));
        }
    }
    let nz = grid.nz;
    let prof = LiftProfile::new(grid);
    let beta = params.alpha_v / grid.h;
    let tkind = params.temperature_bc();
    let tbc_star = SideBc { kind: tkind, data: inp.ts };
    let tbc_cal: SideBc = tkind.into();
    let v = inp.big_v;
    let tau3 = inp.tau.broadcast(nz);
    let div_tau = {
        let mut d = ddx_raw(grid, &inp.tau.x, dir());
        d.axpy(1.0, &ddy_raw(grid, &inp.tau.y, dir()));
        d.broadcast(nz)
    };
    // ∫_{−h}^{z} ∇_H·V dξ at centres is −w(V).
    let int_div = interfaces_to_centres(grid, &reconstruct_w(grid, v)).scaled(-1.0);
    let dz_v = VectorField::new(ddz_centres(grid, &v.x, None), ddz_centres(grid, &v.y, None));
    let dz_tstar = ddz_centres(grid, inp.tstar, None);
    let dz_tcal = ddz_centres(grid, inp.tcal, None);
    let q_div = div_tau.times_profile(&prof.q).scaled(beta / 6.0);

    let adv_tau_by_v = VectorField::new(dot_grad(grid, v, &inp.tau.x, dir()), dot_grad(grid, v, &inp.tau.y, dir()));
    let adv_v_by_tau = VectorField::new(dot_grad(grid, &tau3, &v.x, dir()), dot_grad(grid, &tau3, &v.y, dir()));
    let a1 = adv_tau_by_v.add(&adv_v_by_tau).times_profile(&prof.p).scaled(-beta);
    let a2 = VectorField::new(mul(&q_div, &dz_v.x), mul(&q_div, &dz_v.y));
    let zh_tau = tau3.times_profile(&prof.zh).scaled(beta);
    let a3 = VectorField::new(mul(&int_div, &zh_tau.x), mul(&int_div, &zh_tau.y));

    let b1 = mul(&int_div, &dz_tstar).scaled(-1.0);
    let b2 = dot_grad(grid, &tau3, inp.tcal, tbc_cal).times_profile(&prof.p).scaled(-beta);
    let b3 = mul(&q_div, &dz_tcal);
    let b4 = dot_grad(grid, v, inp.tstar, tbc_star);

    let rot = crate::dynamics::coriolis(inp.tau, params.f);
    let f1 = rot.add(inp.dtau).broadcast(nz).times_profile(&prof.p).scaled(beta);
    let tau_grad_tau = VectorField::new(
        dot_grad(grid, inp.tau, &inp.tau.x, dir()),
        dot_grad(grid, inp.tau, &inp.tau.y, dir()),
    );
    let p2: Vec<f64> = prof.p.iter().map(|p| p * p).collect();
    let f2 = tau_grad_tau.broadcast(nz).times_profile(&p2).scaled(-beta * beta);
    let lap_tau = VectorField::new(laplacian_h_raw(grid, &inp.tau.x, dir()), laplacian_h_raw(grid, &inp.tau.y, dir()));
    let f3 = lap_tau.broadcast(nz).times_profile(&prof.p).scaled(-beta / params.re1);
    let f4 = tau3.scaled(-beta / params.re2);
    let f5 = baroclinic_grad(grid, inp.tstar, tbc_star);
    let q4: Vec<f64> = prof.q.iter().zip(&prof.zh).map(|(q, s)| q * s).collect();
    let div_tau_q4 = div_tau.times_profile(&q4).scaled(beta * beta / 6.0);
    let f6 = VectorField::new(mul(&div_tau_q4, &tau3.x), mul(&div_tau_q4, &tau3.y));

    let g1 = dot_grad(grid, &tau3, inp.tstar, tbc_star).times_profile(&prof.p).scaled(beta);
    let g2 = mul(&q_div, &dz_tstar).scaled(-1.0);
    let g3 = inp.dtstar.scaled(-1.0);
    let g4 = laplacian_h_raw(grid, inp.tstar, tbc_star).scaled(1.0 / params.rt);
    let g5 = d2z(grid, inp.tstar, None).scaled(params.eps);

    Ok(Corrections {
        a_tau: [a1, a2, a3],
        b: [b1, b2, b3, b4],
        f_tau: [f1, f2, f3, f4, f5, f6],
        g_tau: [g1, g2, g3, g4, g5],
    })
}

/// Sources `(F_τ − a_τ(V), G_τ − b(V, 𝒯))` for the homogenized system.
pub struct HomogenizedForcing<'a> {
    pub forcing: &'a BoundaryForcing,
    pub tstar: &'a TStar,
}

impl Forcing for HomogenizedForcing<'_> {
    fn source(&self, grid: &GridSpec, state: &State, params: &PhysParams, t: f64) -> Option<Tendency> {
        let tau = self.forcing.tau_at(t);
        let dtau = self.forcing.dtau_at(t);
        let tstar = self.tstar.at(t);
        let dtstar = self.tstar.rate_at(t);
        let ts = (params.alpha_t != 0.0).then(|| self.forcing.ts_at(t));
        let inp = CorrectionInputs {
            big_v: &state.v,
            tcal: &state.temp,
            tstar: &tstar,
            dtstar: &dtstar,
            tau: &tau,
            dtau: &dtau,
            ts: ts.as_ref(),
        };
        let c = correction_terms(grid, inp, params).ok()?;
        let mut dv = c.f_tau();
        dv.axpy(-1.0, &c.a_tau());
        let mut dtemp = c.g_tau();
        dtemp.axpy(-1.0, &c.b());
        Some(Tendency { dv, dtemp })
    }
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    /// Direct branch at `t_end`.
    pub direct: State,
    /// Homogenized branch mapped back: `unlift(V)` and `𝒯 + T*`.
    pub mapped_v: VectorField,
    pub mapped_t: ScalarField,
    /// `‖unlift(V) − v‖₂` and `‖𝒯 + T* − T‖₂`.
    pub v_discrepancy: f64,
    pub t_discrepancy: f64,
    /// The same, relative to `‖v‖₂` and `‖T‖₂` (0 when both vanish).
    pub v_relative: f64,
    pub t_relative: f64,
    pub steps: usize,
}

/// Which branch of [`equivalence_run`] failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Direct,
    Homogenized,
}

/// Runs the direct and homogenized systems from `(v0, T0)` to `t_end` with
/// steps of `config.dt_max` and compares them.
pub fn equivalence_run(
    grid: &GridSpec,
    params: &PhysParams,
    config: &StepConfig,
    initial: &State,
    forcing: &BoundaryForcing,
    t_end: f64,
) -> std::result::Result<EquivalenceReport, (Branch, Error)> {
    let pre = |e| (Branch::Direct, e);
    if (forcing.alpha_v, forcing.alpha_t) != (params.alpha_v, params.alpha_t) {
        return Err(pre(Error::InvalidArgument("forcing and physics disagree on α_v/α_T".into())));
    }
    let tstar = solve_tstar(grid, forcing, t_end, (t_end / 100.0).max(config.dt_max))
        .map_err(|e| (Branch::Homogenized, e))?;
    let homog = HomogenizedForcing {
        forcing,
        tstar: &tstar,
    };
    let mut a = initial.clone();
    a.time = 0.0;
    let mut b = State::new(grid, lift(grid, &a.v, &forcing.tau_at(0.0), params.alpha_v), &a.temp - &tstar.at(0.0))
        .map_err(|e| (Branch::Homogenized, e))?;
    let run = |state: &mut State, f: &dyn Forcing| -> Result<usize> {
        let mut st = Stepper::new(grid, *params, *config)?;
        st.advance_to(state, t_end, Some(f), |_, _| Ok(()))
    };
    let (ra, rb) = rayon::join(|| run(&mut a, forcing), || run(&mut b, &homog));
    let steps = ra.map_err(|e| (Branch::Direct, e))?;
    rb.map_err(|e| (Branch::Homogenized, e))?;
    let mapped_v = unlift(grid, &b.v, &forcing.tau_at(t_end), params.alpha_v);
    let mapped_t = &b.temp + &tstar.at(t_end);
    let v_discrepancy = norm_l2_vec(grid, &mapped_v.sub(&a.v));
    let t_discrepancy = norm_l2(grid, &(&mapped_t - &a.temp));
    let rel = |d: f64, n: f64| if n > 0.0 { d / n } else { d };
    Ok(EquivalenceReport {
        v_relative: rel(v_discrepancy, norm_l2_vec(grid, &a.v)),
        t_relative: rel(t_discrepancy, norm_l2(grid, &a.temp)),
        direct: a,
        mapped_v,
        mapped_t,
        v_discrepancy,
        t_discrepancy,
        steps,
    })
}
