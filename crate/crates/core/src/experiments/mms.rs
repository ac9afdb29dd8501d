//! Steady manufactured solution and its analytic source.
//!
//! With `α = π/Lx`, `β = π/Ly`, `κ = π/h`, `s = z + h`, `S = sin²(αx)`,
//! `R = sin²(βy)`:
//!
//! ```text
//! u = A·S·R' + B·sin(αx)sin(βy)cos(κs)
//! v = −A·S'·R
//! T = C·cos(αx)cos(βy)(1 + cos(κs)/2)
//! ```
//!
//! The barotropic part comes from the streamfunction `A·S·R`, the baroclinic
//! part has zero depth mean, `v` vanishes on the side walls, `∂_z v = 0` at top
//! and bottom, and `∂_n T = 0` on the walls.

use std::f64::consts::PI;

use crate::dynamics::Tendency;
use crate::error::{Error, Result};
use crate::fields::{PhysParams, State};
use crate::mesh::{GridSpec, ScalarField, VectorField};
use crate::pressure::project;
use crate::stepper::Forcing;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Value and first three derivatives.
type Jet = [f64; 4];

fn sin_sq(k: f64, x: f64) -> Jet {
    let (s2, c2) = ((2.0 * k * x).sin(), (2.0 * k * x).cos());
    [
        (k * x).sin().powi(2),
        k * s2,
        2.0 * k * k * c2,
        -4.0 * k * k * k * s2,
    ]
}

fn sin_j(k: f64, x: f64) -> Jet {
    let (s, c) = ((k * x).sin(), (k * x).cos());
    [s, k * c, -k * k * s, -k * k * k * c]
}

fn cos_j(k: f64, x: f64) -> Jet {
    let (s, c) = ((k * x).sin(), (k * x).cos());
    [c, -k * s, -k * k * c, k * k * k * s]
}

/// Pointwise values of the exact fields and their derivatives.
#[derive(Debug, Clone, Copy, Default)]
struct Point {
    u: f64,
    v: f64,
    w: f64,
    t: f64,
    ux: f64,
    uy: f64,
    uz: f64,
    uzz: f64,
    lap_u: f64,
    vx: f64,
    vy: f64,
    lap_v: f64,
    tx: f64,
    ty: f64,
    tz: f64,
    tzz: f64,
    lap_t: f64,
    /// `∇_H ∫_{−h}^z T dξ`.
    bgx: f64,
    bgy: f64,
}

impl Manufactured {
    pub fn new(grid: &GridSpec) -> Self {
        Self {
            lx: grid.lx,
            ly: grid.ly,
            h: grid.h,
            a: 0.2,
            b: 0.5,
            c: 1.0,
        }
    }

    fn point(&self, x: f64, y: f64, z: f64) -> Point {
        let (al, be, ka) = (PI / self.lx, PI / self.ly, PI / self.h);
        let s = z + self.h;
        let (sx, ry) = (sin_sq(al, x), sin_sq(be, y));
        let (px, py) = (sin_j(al, x), sin_j(be, y));
        let (qx, qy) = (cos_j(al, x), cos_j(be, y));
        let cz = cos_j(ka, s);
        let (a, b, c) = (self.a, self.b, self.c);
        let zt = [1.0 + 0.5 * cz[0], 0.5 * cz[1], 0.5 * cz[2]];
        let int_zt = s + 0.5 * (ka * s).sin() / ka;
        let bar = b * px[0] * py[0];
        Point {
            u: a * sx[0] * ry[1] + bar * cz[0],
            v: -a * sx[1] * ry[0],
            // −∫ ∇·v: only the baroclinic part diverges
            w: -b * px[1] * py[0] * (ka * s).sin() / ka,
            t: c * qx[0] * qy[0] * zt[0],
            ux: a * sx[1] * ry[1] + b * px[1] * py[0] * cz[0],
            uy: a * sx[0] * ry[2] + b * px[0] * py[1] * cz[0],
            uz: bar * cz[1],
            uzz: bar * cz[2],
            lap_u: a * (sx[2] * ry[1] + sx[0] * ry[3]) + b * (px[2] * py[0] + px[0] * py[2]) * cz[0],
            vx: -a * sx[2] * ry[0],
            vy: -a * sx[1] * ry[1],
            lap_v: -a * (sx[3] * ry[0] + sx[1] * ry[2]),
            tx: c * qx[1] * qy[0] * zt[0],
            ty: c * qx[0] * qy[1] * zt[0],
            tz: c * qx[0] * qy[0] * zt[1],
            tzz: c * qx[0] * qy[0] * zt[2],
            lap_t: c * (qx[2] * qy[0] + qx[0] * qy[2]) * zt[0],
            bgx: c * qx[1] * qy[0] * int_zt,
            bgy: c * qx[0] * qy[1] * int_zt,
        }
    }

    pub fn velocity(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        let p = self.point(x, y, z);
        (p.u, p.v)
    }

    pub fn vertical_velocity(&self, x: f64, y: f64, z: f64) -> f64 {
        self.point(x, y, z).w
    }

    pub fn temperature(&self, x: f64, y: f64, z: f64) -> f64 {
        self.point(x, y, z).t
    }

    /// Sources making the exact fields a steady solution with `p_s = 0`:
    /// minus the continuous right-hand sides.
    pub fn source(&self, params: &PhysParams, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        let p = self.point(x, y, z);
        let f = params.f;
        let ru = -(p.u * p.ux + p.v * p.uy + p.w * p.uz) + f * p.v + p.bgx + p.lap_u / params.re1 + p.uzz / params.re2;
        // v is z-independent
        let rv = -(p.u * p.vx + p.v * p.vy) - f * p.u + p.bgy + p.lap_v / params.re1;
        let rt = -(p.u * p.tx + p.v * p.ty + p.w * p.tz) + p.lap_t / params.rt + params.eps * p.tzz;
        (-ru, -rv, -rt)
    }

    /// Largest violation of the side and vertical boundary conditions over
    /// the boundary points of `grid`.
    pub fn boundary_defect(&self, grid: &GridSpec) -> f64 {
        let mut worst = 0.0_f64;
        let mut check = |x: f64, y: f64, z: f64, normal_x: bool| {
            let p = self.point(x, y, z);
            let dn = if normal_x { p.tx } else { p.ty };
            worst = worst.max(p.u.abs()).max(p.v.abs()).max(dn.abs());
        };
        for k in 0..grid.nz {
            let z = grid.zc(k);
            for j in 0..grid.ny {
                check(0.0, grid.yc(j), z, true);
                check(grid.lx, grid.yc(j), z, true);
            }
            for i in 0..grid.nx {
                check(grid.xc(i), 0.0, z, false);
                check(grid.xc(i), grid.ly, z, false);
            }
        }
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                for z in [-grid.h, 0.0] {
                    let p = self.point(grid.xc(i), grid.yc(j), z);
                    worst = worst.max(p.uz.abs()).max(p.tz.abs());
                }
            }
        }
        worst
    }

    /// Exact fields sampled at cell centres, `v` projected onto the discrete
    /// constraint.
    pub fn initial_state(&self, grid: &GridSpec) -> Result<State> {
        let v = VectorField::from_fn(grid, |x, y, z| self.velocity(x, y, z));
        let v = project(grid, &v, 1.0)?.v;
        State::new(grid, v, self.exact_temperature(grid))
    }

    pub fn exact_velocity(&self, grid: &GridSpec) -> VectorField {
        VectorField::from_fn(grid, |x, y, z| self.velocity(x, y, z))
    }

    pub fn exact_temperature(&self, grid: &GridSpec) -> ScalarField {
        ScalarField::from_fn(grid, |x, y, z| self.temperature(x, y, z))
    }
}

/// Time-independent additive source, evaluated once.
#[derive(Debug, Clone)]
pub struct MmsForcing {
    pub source: Tendency,
}

impl MmsForcing {
    pub fn new(grid: &GridSpec, exact: &Manufactured, params: &PhysParams) -> Result<Self> {
        if params.alpha_t != 0.0 || params.alpha_v != 0.0 {
            return Err(Error::InvalidArgument(
                "the manufactured solution satisfies homogeneous Neumann conditions only (α_T = α_v = 0)".into(),
            ));
        }
        let defect = exact.boundary_defect(grid);
        if defect > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "exact fields violate the boundary conditions by {defect:.3e}"
            )));
        }
        let dv = VectorField::from_fn(grid, |x, y, z| {
            let (a, b, _) = exact.source(params, x, y, z);
            (a, b)
        });
        let dtemp = ScalarField::from_fn(grid, |x, y, z| exact.source(params, x, y, z).2);
        Ok(Self {
            source: Tendency { dv, dtemp },
        })
    }
}

impl Forcing for MmsForcing {
    fn source(&self, _grid: &GridSpec, _state: &State, _params: &PhysParams, _t: f64) -> Option<Tendency> {
        Some(self.source.clone())
    }
}
