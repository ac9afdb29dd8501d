//! Norm ledger, estimate functionals and inequality monitors.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fields::{
    decompose, dz_norm_sq, d2z_norm_sq, grad_dz_norm_sq, grad_h_norm_sq, max_product_ratio,
    norm_l2, norm_l2_gamma_s, norm_l2_vec, norm_lp_vec, PhysParams, State, VELOCITY_BC,
};
use crate::mesh::{ddz_centres, GridSpec, ScalarField, SideBc, VectorField, WallData};

/// CSV header of the ledger, in column order.
pub const LEDGER_COLUMNS: [&str; 24] = [
    "t",
    "v_l2",
    "T_l2",
    "dzv_l2",
    "dzT_l2",
    "gradv_l2",
    "gradT_l2",
    "grad_dzv_l2",
    "grad_dzT_l2",
    "dzzv_l2",
    "T_gamma_s",
    "vtilde_l3d",
    "K1",
    "K2",
    "K3",
    "K4",
    "K5",
    "G1",
    "G2",
    "sqrt_t_gradv",
    "sqrt_t_gradT",
    "disk_scan",
    "trilinear_ratio",
    "energy_residual",
];

/// Raw norms from which every functional is computed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Norms {
    pub v: f64,
    pub temp: f64,
    pub dzv: f64,
    pub dzt: f64,
    pub gradv: f64,
    pub gradt: f64,
    pub grad_dzv: f64,
    pub grad_dzt: f64,
    pub dzzv: f64,
    pub t_gamma_s: f64,
    /// `‖ṽ‖_{L^{3+δ}}`.
    pub vtilde_lp: f64,
}

/// `‖∇v‖²(‖v‖²+1) + (‖T‖²+1)(‖∇T‖+1)`.
pub fn k1(n: &Norms) -> f64 {
    n.gradv.powi(2) * (n.v.powi(2) + 1.0) + (n.temp.powi(2) + 1.0) * (n.gradt + 1.0)
}

/// `‖v‖²‖∇v‖² + ‖ṽ‖_{L^{3+δ}}^{2+6/δ} + 1`.
pub fn k2(n: &Norms, delta: f64) -> f64 {
    n.v.powi(2) * n.gradv.powi(2) + n.vtilde_lp.powf(2.0 + 6.0 / delta) + 1.0
}

/// `1 + ‖∇v‖² + ‖∂_z∇v‖² + ‖∂_z v‖²‖∂_z∇v‖²`.
pub fn k3(n: &Norms) -> f64 {
    1.0 + n.gradv.powi(2) + n.grad_dzv.powi(2) + n.dzv.powi(2) * n.grad_dzv.powi(2)
}

/// `1 + (‖v‖² + ‖∂_z v‖²)(‖∇v‖² + ‖∇∂_z v‖²)`.
pub fn k4(n: &Norms) -> f64 {
    1.0 + (n.v.powi(2) + n.dzv.powi(2)) * (n.gradv.powi(2) + n.grad_dzv.powi(2))
}

/// `‖∇v‖²(‖∂_z T‖⁴ + ‖∂_z T‖²‖∇∂_z T‖²)`.
pub fn k5(n: &Norms) -> f64 {
    n.gradv.powi(2) * (n.dzt.powi(4) + n.dzt.powi(2) * n.grad_dzt.powi(2))
}

/// `1 + ‖∇T‖² + ‖∂_z∇T‖² + ‖∂_z T‖⁴ + ‖∂_z T‖²‖∂_z∇T‖²`.
pub fn g1(n: &Norms) -> f64 {
    1.0 + n.gradt.powi(2) + n.grad_dzt.powi(2) + n.dzt.powi(4) + n.dzt.powi(2) * n.grad_dzt.powi(2)
}

/// [`g1`] with `v` in place of `T`.
pub fn g2(n: &Norms) -> f64 {
    1.0 + n.gradv.powi(2) + n.grad_dzv.powi(2) + n.dzv.powi(4) + n.dzv.powi(2) * n.grad_dzv.powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LedgerRow {
    pub t: f64,
    pub norms: Norms,
    pub k: [f64; 5],
    pub g1: f64,
    pub g2: f64,
    pub sqrt_t_gradv: f64,
    pub sqrt_t_gradt: f64,
    pub disk_scan: f64,
    pub trilinear_ratio: f64,
    pub energy_residual: f64,
}

impl LedgerRow {
    pub fn to_array(&self) -> [f64; 24] {
        let n = &self.norms;
        [
            self.t,
            n.v,
            n.temp,
            n.dzv,
            n.dzt,
            n.gradv,
            n.gradt,
            n.grad_dzv,
            n.grad_dzt,
            n.dzzv,
            n.t_gamma_s,
            n.vtilde_lp,
            self.k[0],
            self.k[1],
            self.k[2],
            self.k[3],
            self.k[4],
            self.g1,
            self.g2,
            self.sqrt_t_gradv,
            self.sqrt_t_gradt,
            self.disk_scan,
            self.trilinear_ratio,
            self.energy_residual,
        ]
    }

    pub fn from_array(a: &[f64; 24]) -> Self {
        Self {
            t: a[0],
            norms: Norms {
                v: a[1],
                temp: a[2],
                dzv: a[3],
                dzt: a[4],
                gradv: a[5],
                gradt: a[6],
                grad_dzv: a[7],
                grad_dzt: a[8],
                dzzv: a[9],
                t_gamma_s: a[10],
                vtilde_lp: a[11],
            },
            k: [a[12], a[13], a[14], a[15], a[16]],
            g1: a[17],
            g2: a[18],
            sqrt_t_gradv: a[19],
            sqrt_t_gradt: a[20],
            disk_scan: a[21],
            trilinear_ratio: a[22],
            energy_residual: a[23],
        }
    }

    /// `t‖(∇_H v, ∇_H T)‖²`.
    pub fn t_weighted_gradient(&self) -> f64 {
        self.sqrt_t_gradv.powi(2) + self.sqrt_t_gradt.powi(2)
    }

    /// `‖(v, T)‖²`.
    pub fn energy(&self) -> f64 {
        self.norms.v.powi(2) + self.norms.temp.powi(2)
    }
}

/// Boundary data and extras that `sample` cannot infer from the state.
#[derive(Debug, Clone, Default)]
pub struct SampleContext<'a> {
    /// Prescribed surface `∂_z v`.
    pub top_flux: Option<&'a VectorField>,
    /// Side temperature for the Robin closure.
    pub wall: Option<&'a WallData>,
    /// Disk radius for [`disk_scan`]; defaults to `min(Lx, Ly)/8`.
    pub disk_r0: Option<f64>,
    pub energy_residual: f64,
    /// Skip the trilinear ratio (27 triple products per sample).
    pub skip_trilinear: bool,
}

/// Computes every ledger column from `state`.
pub fn sample(grid: &GridSpec, state: &State, params: &PhysParams, ctx: &SampleContext<'_>) -> Result<LedgerRow> {
    let v = &state.v;
    let temp = &state.temp;
    let vbc: SideBc = VELOCITY_BC.into();
    let tbc = SideBc {
        kind: params.temperature_bc(),
        data: ctx.wall,
    };
    let tx = ctx.top_flux.map(|f| &f.x);
    let ty = ctx.top_flux.map(|f| &f.y);
    let (_, vtilde) = decompose(grid, v);
    let norms = Norms {
        v: norm_l2_vec(grid, v),
        temp: norm_l2(grid, temp),
        dzv: (dz_norm_sq(grid, &v.x, tx) + dz_norm_sq(grid, &v.y, ty)).sqrt(),
        dzt: dz_norm_sq(grid, temp, None).sqrt(),
        gradv: (grad_h_norm_sq(grid, &v.x, vbc) + grad_h_norm_sq(grid, &v.y, vbc)).sqrt(),
        gradt: grad_h_norm_sq(grid, temp, tbc).sqrt(),
        grad_dzv: (grad_dz_norm_sq(grid, &v.x, vbc, tx) + grad_dz_norm_sq(grid, &v.y, vbc, ty)).sqrt(),
        grad_dzt: grad_dz_norm_sq(grid, temp, tbc, None).sqrt(),
        dzzv: (d2z_norm_sq(grid, &v.x, tx) + d2z_norm_sq(grid, &v.y, ty)).sqrt(),
        t_gamma_s: norm_l2_gamma_s(grid, temp, tbc),
        vtilde_lp: norm_lp_vec(grid, &vtilde, 3.0 + params.delta)?,
    };
    let dzv = VectorField::new(ddz_centres(grid, &v.x, tx), ddz_centres(grid, &v.y, ty));
    let r0 = ctx.disk_r0.unwrap_or(grid.lx.min(grid.ly) / 8.0);
    let trilinear_ratio = if ctx.skip_trilinear {
        0.0
    } else {
        max_product_ratio(grid, &[&v.x, &v.y, temp])?
    };
    let st = state.time.max(0.0).sqrt();
    let row = LedgerRow {
        t: state.time,
        norms,
        k: [k1(&norms), k2(&norms, params.delta), k3(&norms), k4(&norms), k5(&norms)],
        g1: g1(&norms),
        g2: g2(&norms),
        sqrt_t_gradv: st * norms.gradv,
        sqrt_t_gradt: st * norms.gradt,
        disk_scan: disk_scan(grid, &dzv, r0)?,
        trilinear_ratio,
        energy_residual: ctx.energy_residual,
    };
    Ok(row)
}

/// Largest integral of `|f|²` over a cylinder `D_{2r₀}(X)×(−h,0)` centred at
/// a cell centre `X`, counting cells whose centres lie in the disk.
pub fn disk_scan(grid: &GridSpec, f: &VectorField, r0: f64) -> Result<f64> {
    if !(r0 > 0.0 && r0 <= grid.lx.min(grid.ly) / 4.0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "disk radius r0 = {r0} must lie in (0, min(Lx, Ly)/4]"
        )));
    }
    let radius = 2.0 * r0;
    if radius < 0.5 * grid.dx.min(grid.dy) {
        return Err(Error::InvalidArgument(format!(
            "disk radius r0 = {r0} is too small to contain a neighbouring cell"
        )));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let plane = grid.ncolumns();
    let mut col = vec![0.0; plane];
    for k in 0..f.nz() {
        for c in 0..plane {
            let n = c + plane * k;
            col[c] += f.x.data[n].powi(2) + f.y.data[n].powi(2);
        }
    }
    let w = grid.weight_for(f.nz());
    let rx = (radius / grid.dx).floor() as isize;
    let ry = (radius / grid.dy).floor() as isize;
    let mut offsets = Vec::new();
    for dj in -ry..=ry {
        for di in -rx..=rx {
            let (ox, oy) = (di as f64 * grid.dx, dj as f64 * grid.dy);
            if ox * ox + oy * oy <= radius * radius * (1.0 + 1e-12) {
                offsets.push((di, dj));
            }
        }
    }
    let mut best = 0.0_f64;
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let mut s = 0.0;
            for (di, dj) in &offsets {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && a < nx as isize && b < ny as isize {
                    s += col[a as usize + nx * b as usize];
                }
            }
            best = best.max(s);
        }
    }
    Ok(best * w)
}

/// Time-ordered ledger rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; times must increase strictly and entries be finite.
    pub fn push(&mut self, row: LedgerRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::InvalidArgument(format!(
                    "ledger time {} does not follow {}",
                    row.t, last.t
                )));
            }
        }
        if let Some(pos) = row.to_array().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                field: format!("ledger column `{}`", LEDGER_COLUMNS[pos]),
                i: self.rows.len(),
                j: 0,
                k: 0,
                value: row.to_array()[pos],
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LEDGER_COLUMNS)?;
        for r in &self.rows {
            w.write_record(r.to_array().iter().map(|x| format!("{x:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        if header.iter().ne(LEDGER_COLUMNS.iter().copied()) {
            return Err(Error::Format("ledger header does not match the column list".into()));
        }
        let mut ledger = Self::new();
        for rec in rd.records() {
            let rec = rec?;
            let mut a = [0.0; 24];
            for (slot, s) in a.iter_mut().zip(rec.iter()) {
                *slot = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad ledger number `{s}`")))?;
            }
            ledger.push(LedgerRow::from_array(&a))?;
        }
        Ok(ledger)
    }

    /// Smallest `C` with `‖(v,T)(t)‖² ≤ e^{Ct}‖(v₀,T₀)‖²` over the rows
    /// (0 when the energy never grows).
    pub fn energy_growth_rate(&self) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        let e0 = first.energy();
        if e0 == 0.0 {
            return 0.0;
        }
        self.rows
            .iter()
            .filter(|r| r.t > first.t)
            .map(|r| (r.energy() / e0).ln() / (r.t - first.t))
            .fold(0.0, f64::max)
    }

    /// Largest `t‖(∇_H v, ∇_H T)‖²` over the rows.
    pub fn max_t_weighted_gradient(&self) -> f64 {
        self.rows.iter().map(|r| r.t_weighted_gradient()).fold(0.0, f64::max)
    }
}

/// Decides which accepted steps are recorded: every step while
/// `t < 10·dt_max`, then at geometrically spaced times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCadence {
    pub dense_until: f64,
    pub growth: f64,
    next: f64,
}

impl SampleCadence {
    pub fn new(dt_max: f64, growth: f64) -> Self {
        let dense_until = 10.0 * dt_max;
        Self {
            dense_until,
            growth: growth.max(1.0 + 1e-9),
            next: dense_until,
        }
    }

    pub fn should_sample(&mut self, t: f64) -> bool {
        if t < self.dense_until {
            return true;
        }
        if t >= self.next {
            while self.next <= t {
                self.next *= self.growth;
            }
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GronwallReport {
    /// The two runs coincide at every sample.
    Identical,
    Fitted {
        times: Vec<f64>,
        /// `R(t) = ‖(ω,θ)(t)‖²/‖(ω₀,θ₀)‖²`.
        ratio: Vec<f64>,
        /// `∫₀ᵗ (G₁ + G₂) ds` by the trapezoid rule.
        integral: Vec<f64>,
        /// Smallest `C` with `log R ≤ C·∫(G₁+G₂)` at every sample.
        c_emp: f64,
    },
}

impl GronwallReport {
    pub fn c_emp(&self) -> Option<f64> {
        match self {
            GronwallReport::Identical => None,
            GronwallReport::Fitted { c_emp, .. } => Some(*c_emp),
        }
    }

    /// Checks `log R(t) ≤ C_emp·∫(G₁+G₂)` at every sample (with rounding slack).
    pub fn bound_holds(&self) -> bool {
        match self {
            GronwallReport::Identical => true,
            GronwallReport::Fitted { ratio, integral, c_emp, .. } => ratio
                .iter()
                .zip(integral)
                .all(|(r, i)| r.is_finite() && r.ln() <= c_emp * i + 1e-12 * (1.0 + (c_emp * i).abs())),
        }
    }
}

/// Grönwall monitor for a pair of runs. `ledger_a` supplies `G₁ + G₂`;
/// `diff_sq[i]` is `‖(ω,θ)‖²` at the time of row `i` of both ledgers.
pub fn gronwall_monitor(ledger_a: &EnergyLedger, ledger_b: &EnergyLedger, diff_sq: &[f64]) -> Result<GronwallReport> {
    if ledger_a.len() != ledger_b.len() || ledger_a.len() != diff_sq.len() {
        return Err(Error::InvalidArgument(format!(
            "ledgers ({} and {} rows) and differences ({}) must align",
            ledger_a.len(),
            ledger_b.len(),
            diff_sq.len()
        )));
    }
    if ledger_a.is_empty() {
        return Err(Error::InvalidArgument("empty ledgers".into()));
    }
    for (ra, rb) in ledger_a.rows.iter().zip(&ledger_b.rows) {
        if (ra.t - rb.t).abs() > 1e-12 * ra.t.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!("sample times differ: {} vs {}", ra.t, rb.t)));
        }
    }
    if diff_sq.iter().all(|d| *d == 0.0) {
        return Ok(GronwallReport::Identical);
    }
    let d0 = diff_sq[0];
    if !(d0 > 0.0) {
        return Err(Error::InvalidArgument(
            "initial difference is zero; the growth ratio is undefined".into(),
        ));
    }
    let times = ledger_a.times();
    let mut integral = vec![0.0; times.len()];
    for i in 1..times.len() {
        let (a, b) = (&ledger_a.rows[i - 1], &ledger_a.rows[i]);
        integral[i] = integral[i - 1] + 0.5 * (times[i] - times[i - 1]) * (a.g1 + a.g2 + b.g1 + b.g2);
    }
    let ratio: Vec<f64> = diff_sq.iter().map(|d| d / d0).collect();
    let mut c_emp = f64::NEG_INFINITY;
    for i in 1..times.len() {
        if integral[i] > 0.0 {
            c_emp = c_emp.max(ratio[i].ln() / integral[i]);
        }
    }
    if !c_emp.is_finite() {
        c_emp = 0.0;
    }
    Ok(GronwallReport::Fitted {
        times,
        ratio,
        integral,
        c_emp,
    })
}

/// One member of an ε sweep.
#[derive(Debug, Clone)]
pub struct SweepRun<'a> {
    pub eps: f64,
    pub grid: GridSpec,
    pub state: &'a State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSweep {
    /// ε of the compared runs, decreasing.
    pub eps: Vec<f64>,
    /// `‖T_ε − T₀‖₂`.
    pub t_diff: Vec<f64>,
    /// `‖v_ε − v₀‖₂`.
    pub v_diff: Vec<f64>,
    /// Each difference is at most 1.1 times the previous one.
    pub monotone: bool,
    /// Least-squares slope of `log‖T_ε − T₀‖` against `log ε`.
    pub order: Option<f64>,
    /// Largest `‖v_ε − v₀‖/‖T_ε − T₀‖`.
    pub coupling: f64,
}

/// Compares the runs against the one with the smallest ε (normally 0).
pub fn epsilon_sweep_report(runs: &[SweepRun<'_>]) -> Result<EpsilonSweep> {
    if runs.len() < 3 {
        return Err(Error::InvalidArgument(format!("an ε sweep needs at least 3 runs, got {}", runs.len())));
    }
    let g = runs[0].grid;
    for r in runs {
        if r.grid != g {
            return Err(Error::GridMismatch("ε-sweep members use different grids".into()));
        }
        g.check_field(&r.state.temp, "T")?;
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|a, b| runs[*b].eps.total_cmp(&runs[*a].eps));
    let reference = runs[*order.last().unwrap()].state;
    let members = &order[..order.len() - 1];
    let mut eps = Vec::new();
    let mut t_diff = Vec::new();
    let mut v_diff = Vec::new();
    for &m in members {
        let s = runs[m].state;
        eps.push(runs[m].eps);
        t_diff.push(norm_l2(&g, &(&s.temp - &reference.temp)));
        v_diff.push(norm_l2_vec(&g, &s.v.sub(&reference.v)));
    }
    let monotone = t_diff.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(&t_diff)
        .filter(|(e, d)| **e > 0.0 && **d > 0.0)
        .map(|(e, d)| (e.ln(), d.ln()))
        .collect();
    let order_fit = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    let coupling = t_diff
        .iter()
        .zip(&v_diff)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| v / t)
        .fold(0.0, f64::max);
    Ok(EpsilonSweep {
        eps,
        t_diff,
        v_diff,
        monotone,
        order: order_fit,
        coupling,
    })
}

/// `‖(v_a − v_b, T_a − T_b)‖²`.
pub fn difference_sq(grid: &GridSpec, a: &State, b: &State) -> f64 {
    norm_l2_vec(grid, &a.v.sub(&b.v)).powi(2) + norm_l2(grid, &(&a.temp - &b.temp)).powi(2)
}

/// Pointwise squared magnitude helper used by tests and the demo.
pub fn magnitude_sq(v: &VectorField) -> ScalarField {
    v.x.zip_map(&v.y, |a, b| a * a + b * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(1.0, 1.0, 0.5, 16, 16, 4).unwrap()
    }

    fn random_state(g: &GridSpec, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = VectorField::zeros(g);
        let mut t = ScalarField::zeros(g);
        for f in [&mut v.x, &mut v.y, &mut t] {
            f.data.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        let mut s = State::new(g, v, t).unwrap();
        s.time = 0.3;
        s
    }

    #[test]
    fn zero_state_row() {
        let g = grid();
        let r = sample(&g, &State::zeros(&g), &PhysParams::default(), &SampleContext::default()).unwrap();
        let n = r.norms;
        for x in [n.v, n.temp, n.dzv, n.dzt, n.gradv, n.gradt, n.grad_dzv, n.grad_dzt, n.dzzv, n.t_gamma_s, n.vtilde_lp] {
            assert_eq!(x, 0.0);
        }
        assert_eq!(r.k, [1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!((r.g1, r.g2), (1.0, 1.0));
        assert_eq!(r.disk_scan, 0.0);
    }

    #[test]
    fn depth_uniform_velocity_has_no_shear() {
        let g = grid();
        let v = VectorField::from_fn(&g, |x, y, _| ((PI * x).sin(), (PI * y).cos()));
        let s = State::new(&g, v, ScalarField::zeros(&g)).unwrap();
        let r = sample(&g, &s, &PhysParams::default(), &SampleContext::default()).unwrap();
        assert!(r.norms.dzv < 1e-14);
        assert!(r.norms.vtilde_lp < 1e-14);
        assert!(r.norms.grad_dzv < 1e-12);
    }

    #[test]
    fn functionals_match_independent_evaluation() {
        let g = grid();
        let p = PhysParams { alpha_t: 0.4, ..PhysParams::default() };
        let r = sample(&g, &random_state(&g, 1), &p, &SampleContext::default()).unwrap();
        let n = r.norms;
        // re-evaluated directly from the raw columns
        let gv2 = n.gradv * n.gradv;
        let k5 = gv2 * (n.dzt * n.dzt * n.dzt * n.dzt + n.dzt * n.dzt * n.grad_dzt * n.grad_dzt);
        let k1 = gv2 * (n.v * n.v + 1.0) + (n.temp * n.temp + 1.0) * (n.gradt + 1.0);
        let k2 = n.v * n.v * gv2 + n.vtilde_lp.powi(8) + 1.0;
        for (a, b) in [(r.k[4], k5), (r.k[0], k1), (r.k[1], k2)] {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        assert!(r.trilinear_ratio > 0.0);
        assert!((r.sqrt_t_gradv - 0.3_f64.sqrt() * n.gradv).abs() < 1e-14 * n.gradv);
    }

    #[test]
    fn disk_scan_cases() {
        let g = GridSpec::new(1.0, 1.0, 0.5, 40, 40, 2).unwrap();
        let zero = VectorField::zeros(&g);
        assert_eq!(disk_scan(&g, &zero, 0.1).unwrap(), 0.0);
        let one = VectorField::from_fn(&g, |_, _, _| (1.0, 0.0));
        let r0 = 0.1;
        let got = disk_scan(&g, &one, r0).unwrap();
        let area = PI * (2.0 * r0).powi(2) * g.h;
        let ring = 2.0 * PI * 2.0 * r0 * g.dx.max(g.dy) * g.h;
        assert!((got - area).abs() <= ring, "{got} vs {area}");
        let mut prev = 0.0;
        for r in [0.05, 0.1, 0.15, 0.2, 0.25] {
            let v = disk_scan(&g, &one, r).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(disk_scan(&g, &one, 0.3).is_err());
        assert!(disk_scan(&g, &one, 1e-4).is_err());
    }

    #[test]
    fn ledger_csv_round_trip_and_ordering() {
        let g = grid();
        let p = PhysParams::default();
        let mut l = EnergyLedger::new();
        for (i, seed) in [3, 4, 5].iter().enumerate() {
            let mut s = random_state(&g, *seed);
            s.time = 0.1 * (i + 1) as f64;
            l.push(sample(&g, &s, &p, &SampleContext::default()).unwrap()).unwrap();
        }
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&LEDGER_COLUMNS.join(",")));
        let back = EnergyLedger::read_csv(&buf[..]).unwrap();
        assert_eq!(back, l);
        let dup = l.rows[0];
        assert!(l.push(dup).is_err());
        let mut bad = l.rows[2];
        bad.t = 10.0;
        bad.k[1] = f64::NAN;
        assert!(l.push(bad).is_err());
    }

    fn ledger_with(times: &[f64], g_sum: f64) -> EnergyLedger {
        let mut l = EnergyLedger::new();
        for t in times {
            l.push(LedgerRow { t: *t, g1: g_sum / 2.0, g2: g_sum / 2.0, ..LedgerRow::default() }).unwrap();
        }
        l
    }

    #[test]
    fn gronwall_branches() {
        let times = [0.0, 0.5, 1.0];
        let l = ledger_with(&times, 2.0);
        assert_eq!(gronwall_monitor(&l, &l, &[0.0; 3]).unwrap(), GronwallReport::Identical);
        assert!(gronwall_monitor(&l, &l, &[0.0, 1.0, 1.0]).is_err());
        // R = e^{t}, ∫(G1+G2) = 2t, so C_emp = 1/2
        let d: Vec<f64> = times.iter().map(|t: &f64| 3.0 * t.exp()).collect();
        let r = gronwall_monitor(&l, &l, &d).unwrap();
        assert!((r.c_emp().unwrap() - 0.5).abs() < 1e-12);
        assert!(r.bound_holds());
        // decaying differences give a negative constant
        let d: Vec<f64> = times.iter().map(|t: &f64| (-t).exp()).collect();
        assert!(gronwall_monitor(&l, &l, &d).unwrap().c_emp().unwrap() < 0.0);
    }

    #[test]
    fn sweep_report_cases() {
        let g = grid();
        let s = random_state(&g, 7);
        let same: Vec<SweepRun> = [0.1, 0.1, 0.1].iter().map(|e| SweepRun { eps: *e, grid: g, state: &s }).collect();
        let r = epsilon_sweep_report(&same).unwrap();
        assert!(r.t_diff.iter().all(|d| *d == 0.0));
        assert!(r.order.is_none());
        // differences scaling like ε^1 give order 1
        let states: Vec<State> = [1e-1, 1e-2, 1e-3, 0.0]
            .iter()
            .map(|e| {
                let mut x = s.clone();
                x.temp.data.iter_mut().for_each(|t| *t += e);
                x
            })
            .collect();
        let runs: Vec<SweepRun> = [1e-1, 1e-2, 1e-3, 0.0]
            .iter()
            .zip(&states)
            .map(|(e, st)| SweepRun { eps: *e, grid: g, state: st })
            .collect();
        let r = epsilon_sweep_report(&runs).unwrap();
        assert!(r.monotone);
        assert!((r.order.unwrap() - 1.0).abs() < 1e-10);
        let other = GridSpec::new(1.0, 1.0, 0.5, 16, 16, 4).unwrap();
        let mut runs2 = runs.clone();
        runs2[1].grid = GridSpec::new(2.0, 1.0, 0.5, 16, 16, 4).unwrap();
        assert!(epsilon_sweep_report(&runs2).is_err());
        let _ = other;
        assert!(epsilon_sweep_report(&runs[..2]).is_err());
    }

    #[test]
    fn cadence_thins_geometrically() {
        let mut c = SampleCadence::new(0.01, 1.5);
        let mut taken = 0;
        let mut t = 0.0;
        while t < 2.0 {
            t += 0.01;
            if c.should_sample(t) {
                taken += 1;
            }
        }
        assert!(taken > 10 && taken < 30, "{taken}");
    }

    #[test]
    fn growth_rate_of_decaying_ledger_is_zero() {
        let mut l = EnergyLedger::new();
        for (i, e) in [1.0, 0.9, 0.5].iter().enumerate() {
            l.push(LedgerRow { t: i as f64, norms: Norms { v: *e, ..Norms::default() }, ..LedgerRow::default() }).unwrap();
        }
        assert_eq!(l.energy_growth_rate(), 0.0);
    }
}
