//! Model state, physical parameters, discrete norms and the
//! barotropic/baroclinic split `v = v̄ + ṽ`.

use crate::dynamics::reconstruct_w;
use crate::error::{Error, Result};
use crate::mesh::{
    depth_average, d2z, gamma_s_norm_sq_levels, grad_h_norm_sq_levels, inner, BoundaryKind,
    GridSpec, ScalarField, SideBc, VectorField, WField, WallData,
};

/// Prognostic `(v, T)` plus the diagnostic `w` and surface pressure `p_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub v: VectorField,
    pub temp: ScalarField,
    /// Always `reconstruct_w(v)`; never evolved on its own.
    pub w: WField,
    pub ps: ScalarField,
    pub time: f64,
}

impl State {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            v: VectorField::zeros(grid),
            temp: ScalarField::zeros(grid),
            w: WField::zeros(grid),
            ps: ScalarField::surface(grid),
            time: 0.0,
        }
    }

    /// Builds a state at `t = 0` and reconstructs `w` from `v`.
    pub fn new(grid: &GridSpec, v: VectorField, temp: ScalarField) -> Result<Self> {
        grid.check_field(&v.x, "v.x")?;
        grid.check_field(&v.y, "v.y")?;
        grid.check_field(&temp, "T")?;
        if v.nz() != grid.nz || temp.nz != grid.nz {
            return Err(Error::GridMismatch("state fields must be 3D".into()));
        }
        let w = reconstruct_w(grid, &v);
        Ok(Self {
            v,
            temp,
            w,
            ps: ScalarField::surface(grid),
            time: 0.0,
        })
    }

    pub fn refresh_w(&mut self, grid: &GridSpec) {
        self.w = reconstruct_w(grid, &self.v);
    }

    pub fn is_finite(&self) -> bool {
        self.v.x.data.iter().all(|x| x.is_finite())
            && self.v.y.data.iter().all(|x| x.is_finite())
            && self.temp.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    /// Horizontal Reynolds number.
    pub re1: f64,
    /// Vertical Reynolds number.
    pub re2: f64,
    /// Reciprocal horizontal diffusivity of temperature.
    pub rt: f64,
    /// Coriolis parameter.
    pub f: f64,
    /// Vertical temperature diffusivity of the regularised system; 0 is the
    /// target system.
    pub eps: f64,
    pub alpha_t: f64,
    pub alpha_v: f64,
    /// Exponent offset for the `L^{3+δ}` monitor.
    pub delta: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            re1: 10.0,
            re2: 10.0,
            rt: 10.0,
            f: 0.0,
            eps: 0.0,
            alpha_t: 0.0,
            alpha_v: 0.0,
            delta: 1.0,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        let all = [
            self.re1,
            self.re2,
            self.rt,
            self.f,
            self.eps,
            self.alpha_t,
            self.alpha_v,
            self.delta,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite".into());
        }
        if self.re1 <= 0.0 || self.re2 <= 0.0 || self.rt <= 0.0 {
            return bad(format!(
                "Re1, Re2, R_T must be positive (got {}, {}, {})",
                self.re1, self.re2, self.rt
            ));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return bad(format!("eps must lie in [0, 1) (got {})", self.eps));
        }
        if self.alpha_t < 0.0 || self.alpha_v < 0.0 {
            return bad("alpha_T and alpha_v must be non-negative".into());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must lie in (0, 1] (got {})", self.delta));
        }
        Ok(())
    }

    /// Side rule for temperature: Robin with `α_T`.
    pub fn temperature_bc(&self) -> BoundaryKind {
        BoundaryKind::Robin(self.alpha_t)
    }
}

/// Side rule for velocity (no-slip).
pub const VELOCITY_BC: BoundaryKind = BoundaryKind::Dirichlet0;

pub fn norm_l2(grid: &GridSpec, f: &ScalarField) -> f64 {
    inner(grid, f, f).sqrt()
}

pub fn norm_l2_vec(grid: &GridSpec, v: &VectorField) -> f64 {
    (inner(grid, &v.x, &v.x) + inner(grid, &v.y, &v.y)).sqrt()
}

/// Volume-weighted discrete `L^p` norm, `p ≥ 1`.
pub fn norm_lp(grid: &GridSpec, f: &ScalarField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("L^p norm needs p >= 1 (got {p})")));
    }
    let s: f64 = f.data.iter().map(|v| v.abs().powf(p)).sum();
    Ok((grid.weight_for(f.nz) * s).powf(1.0 / p))
}

/// `L^p` norm of the pointwise magnitude `|v|` of a vector field.
pub fn norm_lp_vec(grid: &GridSpec, v: &VectorField, p: f64) -> Result<f64> {
    let mag = v.x.zip_map(&v.y, |a, b| a.hypot(b));
    norm_lp(grid, &mag, p)
}

/// Side-wall `L²(Γ_s)` norm using face-average wall values.
pub fn norm_l2_gamma_s<'a>(grid: &GridSpec, f: &ScalarField, bc: impl Into<SideBc<'a>>) -> f64 {
    gamma_s_norm_sq_levels(grid, &f.data, f.nz, bc.into()).sqrt()
}

/// `(‖∇_H f‖, ‖∂_z f‖)`.
///
/// The horizontal part is face based (see [`crate::mesh`]); the vertical part
/// sums interface differences with trapezoid weights, the bottom and top
/// interfaces carrying the Neumann data (`top_flux` at the surface).
pub fn seminorm_h1_parts<'a>(
    grid: &GridSpec,
    f: &ScalarField,
    bc: impl Into<SideBc<'a>>,
    top_flux: Option<&ScalarField>,
) -> (f64, f64) {
    let gh = grad_h_norm_sq_levels(grid, &f.data, f.nz, None, bc.into());
    (gh.sqrt(), dz_norm_sq(grid, f, top_flux).sqrt())
}

pub(crate) fn interface_weights(nz: usize) -> Vec<f64> {
    let mut w = vec![1.0; nz + 1];
    w[0] = 0.5;
    w[nz] = 0.5;
    w
}

pub(crate) fn dz_norm_sq(grid: &GridSpec, f: &ScalarField, top_flux: Option<&ScalarField>) -> f64 {
    let d = crate::mesh::ddz_interfaces(grid, f, top_flux);
    let w = interface_weights(grid.nz);
    let plane = grid.ncolumns();
    let mut s = 0.0;
    for (k, wk) in w.iter().enumerate() {
        s += wk * d.data[plane * k..plane * (k + 1)].iter().map(|v| v * v).sum::<f64>();
    }
    s * grid.cell_volume()
}

/// `‖∇_H ∂_z f‖²` from interface differences, trapezoid weights in `z`.
pub(crate) fn grad_dz_norm_sq(
    grid: &GridSpec,
    f: &ScalarField,
    bc: SideBc<'_>,
    top_flux: Option<&ScalarField>,
) -> f64 {
    let d = crate::mesh::ddz_interfaces(grid, f, top_flux);
    let w = interface_weights(grid.nz);
    let dwall = bc.data.map(|wd| wall_ddz_interfaces(wd, grid.dz));
    let bc_d = SideBc {
        kind: bc.kind,
        data: dwall.as_ref(),
    };
    grad_h_norm_sq_levels(grid, &d.data, grid.nz + 1, Some(&w), bc_d)
}

/// `∂_z` of wall data on interfaces (zero at top and bottom edges).
fn wall_ddz_interfaces(wd: &WallData, dz: f64) -> WallData {
    let nz = wd.nz;
    let diff = |src: &[f64], n: usize| {
        let mut out = vec![0.0; n * (nz + 1)];
        for k in 1..nz {
            for c in 0..n {
                out[c + n * k] = (src[c + n * k] - src[c + n * (k - 1)]) / dz;
            }
        }
        out
    };
    WallData {
        nx: wd.nx,
        ny: wd.ny,
        nz: nz + 1,
        west: diff(&wd.west, wd.ny),
        east: diff(&wd.east, wd.ny),
        south: diff(&wd.south, wd.nx),
        north: diff(&wd.north, wd.nx),
    }
}

pub(crate) fn grad_h_norm_sq<'a>(grid: &GridSpec, f: &ScalarField, bc: SideBc<'a>) -> f64 {
    grad_h_norm_sq_levels(grid, &f.data, f.nz, None, bc)
}

pub(crate) fn d2z_norm_sq(grid: &GridSpec, f: &ScalarField, top_flux: Option<&ScalarField>) -> f64 {
    let l = d2z(grid, f, top_flux);
    inner(grid, &l, &l)
}

/// Splits `v` into its depth average `v̄` (surface field) and `ṽ = v − v̄`.
pub fn decompose(grid: &GridSpec, v: &VectorField) -> (VectorField, VectorField) {
    let vbar = VectorField::new(depth_average(grid, &v.x), depth_average(grid, &v.y));
    let vtilde = v.sub(&vbar.broadcast(v.nz()));
    (vbar, vtilde)
}

/// Both sides of the anisotropic trilinear inequality for `(φ, φ₂, ψ)`:
/// the left side `∫_M (∫|φ|dz)(∫|φ₂ ψ|dz)`, and the product of norms on the
/// right without the unknown constant. Gradients use Neumann ghosts.
pub fn anisotropic_product_bound(
    grid: &GridSpec,
    phi: &ScalarField,
    varphi: &ScalarField,
    psi: &ScalarField,
) -> Result<(f64, f64)> {
    for (f, name) in [(phi, "phi"), (varphi, "varphi"), (psi, "psi")] {
        grid.check_field(f, name)?;
        if f.nz != grid.nz {
            return Err(Error::GridMismatch(format!("`{name}` must be 3D")));
        }
    }
    let plane = grid.ncolumns();
    let mut lhs = 0.0;
    for c in 0..plane {
        let mut a = 0.0;
        let mut b = 0.0;
        for k in 0..grid.nz {
            let n = c + plane * k;
            a += phi.data[n].abs();
            b += (varphi.data[n] * psi.data[n]).abs();
        }
        lhs += a * b;
    }
    lhs *= grid.dz * grid.dz * grid.cell_area();

    let l = grid.diameter();
    let neu: SideBc = BoundaryKind::Neumann0.into();
    let factor = |f: &ScalarField| {
        let n = norm_l2(grid, f);
        let g = grad_h_norm_sq(grid, f, neu).sqrt();
        n.sqrt() * (n / l + g).sqrt()
    };
    let rhs = norm_l2(grid, phi) * factor(varphi) * factor(psi);
    if rhs == 0.0 && lhs > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "trilinear bound violated: lhs = {lhs:e} with zero right-hand factor"
        )));
    }
    Ok((lhs, rhs))
}

/// Largest `lhs/rhs` over all ordered triples drawn from `fields`.
pub fn max_product_ratio(grid: &GridSpec, fields: &[&ScalarField]) -> Result<f64> {
    let mut best = 0.0_f64;
    for a in fields {
        for b in fields {
            for c in fields {
                let (lhs, rhs) = anisotropic_product_bound(grid, a, b, c)?;
                if rhs > 0.0 {
                    best = best.max(lhs / rhs);
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::new(1.5, 1.0, 0.8, 8, 8, 4).unwrap()
    }

    fn random_field(g: &GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = ScalarField::zeros(g);
        f.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        f
    }

    #[test]
    fn params_validation() {
        assert!(PhysParams::default().validate().is_ok());
        let mut p = PhysParams::default();
        p.re1 = 0.0;
        assert!(p.validate().is_err());
        let mut p = PhysParams::default();
        p.eps = 1.0;
        assert!(p.validate().is_err());
        let mut p = PhysParams::default();
        p.delta = 0.0;
        assert!(p.validate().is_err());
        let mut p = PhysParams::default();
        p.alpha_t = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn norms_of_constants_and_zero() {
        let g = grid();
        let one = ScalarField::constant(&g, 1.0);
        assert!((norm_l2(&g, &one) - (g.volume()).sqrt()).abs() < 1e-14);
        let zero = ScalarField::zeros(&g);
        assert_eq!(norm_l2(&g, &zero), 0.0);
        assert_eq!(norm_lp(&g, &zero, 3.0).unwrap(), 0.0);
        assert_eq!(norm_l2_gamma_s(&g, &zero, BoundaryKind::Neumann0), 0.0);
        assert_eq!(seminorm_h1_parts(&g, &zero, BoundaryKind::Neumann0, None), (0.0, 0.0));
        assert!(norm_lp(&g, &one, 0.5).is_err());
    }

    #[test]
    fn lp_at_two_is_l2() {
        let g = grid();
        let f = random_field(&g, 11);
        assert!((norm_lp(&g, &f, 2.0).unwrap() - norm_l2(&g, &f)).abs() < 1e-14);
    }

    #[test]
    fn gamma_s_vanishes_for_dirichlet_and_matches_wall_area() {
        let g = grid();
        let f = random_field(&g, 12);
        assert!(norm_l2_gamma_s(&g, &f, BoundaryKind::Dirichlet0) < 1e-15);
        let one = ScalarField::constant(&g, 1.0);
        let side_area = 2.0 * (g.lx + g.ly) * g.h;
        let n = norm_l2_gamma_s(&g, &one, BoundaryKind::Neumann0);
        assert!((n * n - side_area).abs() < 1e-13);
    }

    #[test]
    fn decompose_cases() {
        let g = grid();
        let zuni = VectorField::from_fn(&g, |x, y, _| (x * y, x - y));
        let (_, vt) = decompose(&g, &zuni);
        assert!(vt.max_abs() < 1e-15);

        let odd = VectorField::from_fn(&g, |_, _, z| (z + g.h / 2.0, 0.0));
        let (vb, vt) = decompose(&g, &odd);
        assert!(vb.max_abs() < 1e-15);
        assert!(vt.sub(&odd).max_abs() < 1e-15);

        let r = VectorField::new(random_field(&g, 1), random_field(&g, 2));
        let (vb, vt) = decompose(&g, &r);
        assert!(vb.broadcast(g.nz).add(&vt).sub(&r).max_abs() < 1e-15);
        let (vtb, _) = decompose(&g, &vt);
        assert!(vtb.max_abs() < 1e-15);
    }

    #[test]
    fn decomposition_is_orthogonal() {
        let g = grid();
        let r = VectorField::new(random_field(&g, 3), random_field(&g, 4));
        let (vb, vt) = decompose(&g, &r);
        let total = norm_l2_vec(&g, &r).powi(2);
        let parts = norm_l2_vec(&g, &vb).powi(2) * g.h + norm_l2_vec(&g, &vt).powi(2);
        assert!((total - parts).abs() < 1e-13 * total);
    }

    #[test]
    fn product_bound_closed_form_for_constants() {
        let g = grid();
        let one = ScalarField::constant(&g, 1.0);
        let (lhs, rhs) = anisotropic_product_bound(&g, &one, &one, &one).unwrap();
        let (h, area, l) = (g.h, g.area(), g.diameter());
        assert!((lhs - h * h * area).abs() < 1e-13);
        // ‖1‖ = (h|M|)^{1/2}; each half-factor is ‖1‖^{1/2}(‖1‖/L)^{1/2} = ‖1‖/√L.
        let n = (h * area).sqrt();
        let expected = n * (n / l.sqrt()) * (n / l.sqrt());
        assert!((rhs - expected).abs() < 1e-13 * expected);
        let zero = ScalarField::zeros(&g);
        assert_eq!(anisotropic_product_bound(&g, &zero, &one, &one).unwrap().0, 0.0);
    }

    #[test]
    fn top_flux_enters_dz_norm_with_half_weight() {
        let g = grid();
        let f = ScalarField::zeros(&g);
        let flux = ScalarField::constant(&GridSpec { nz: 1, ..g }, 2.0);
        let (_, dz) = seminorm_h1_parts(&g, &f, BoundaryKind::Neumann0, Some(&flux));
        let expected = (0.5 * 4.0 * g.area() * g.dz).sqrt();
        assert!((dz - expected).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn lp_monotone_on_unit_volume(seed in 0u64..10_000, p in 1.0f64..6.0, dp in 0.1f64..3.0) {
                let g = GridSpec::unit(4, 4, 2).unwrap();
                let f = random_field(&g, seed);
                let a = norm_lp(&g, &f, p).unwrap();
                let b = norm_lp(&g, &f, p + dp).unwrap();
                prop_assert!(b + 1e-14 >= a);
            }
        }
    }
}
