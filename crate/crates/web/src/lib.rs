//! wasm-bindgen wrapper around the solver for the static page in `www/`.
//!
//! Three operations are exposed: a forced run that can be stepped and
//! inspected, an eigenmode decay check and an advection skew-symmetry check.

use hydrostat::diagnostics::{sample, SampleContext};
use hydrostat::dynamics::advect;
use hydrostat::experiments::initial;
use hydrostat::fields::{norm_l2, PhysParams, State};
use hydrostat::homogenize::BoundaryForcing;
use hydrostat::mesh::{inner, GridSpec};
use hydrostat::stepper::{Forcing, StepConfig, Stepper};
use wasm_bindgen::prelude::*;

fn js_err(e: hydrostat::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Wind- and side-heated run on an `n × n × n/2` unit box.
#[wasm_bindgen]
pub struct Demo {
    grid: GridSpec,
    params: PhysParams,
    stepper: Stepper,
    state: State,
    forcing: BoundaryForcing,
    steps: usize,
}

impl Demo {
    pub fn try_new(n: usize, seed: u64, wind: f64) -> hydrostat::Result<Demo> {
        let grid = GridSpec::unit(n, n, (n / 2).max(2))?;
        let params = PhysParams {
            f: 1.0,
            alpha_t: 0.5,
            alpha_v: 1.0,
            ..PhysParams::default()
        };
        let step = StepConfig {
            dt_max: 5e-3,
            t_end: 1e6,
            ..StepConfig::default()
        };
        let stepper = Stepper::new(&grid, params, step)?;
        let state = initial::smooth_state(&grid, seed, 0.3, 1.0)?;
        let forcing = initial::analytic_forcing(&grid, 2.0, wind, 1.0, params.alpha_v, params.alpha_t)?;
        Ok(Demo {
            grid,
            params,
            stepper,
            state,
            forcing,
            steps: 0,
        })
    }

    pub fn try_step(&mut self, count: usize) -> hydrostat::Result<f64> {
        let dt = self.stepper.config.dt_max;
        for _ in 0..count {
            let (next, _) = self.stepper.step(&self.state, dt, Some(&self.forcing))?;
            self.state = next;
            self.steps += 1;
        }
        Ok(self.state.time)
    }

    pub fn try_ledger_row(&self) -> hydrostat::Result<Vec<f64>> {
        let t = self.state.time;
        let top = self.forcing.top_flux(&self.grid, t);
        let wall = self.forcing.side_temperature(&self.grid, t);
        let ctx = SampleContext {
            top_flux: top.as_ref(),
            wall: wall.as_ref(),
            skip_trilinear: true,
            ..SampleContext::default()
        };
        let r = sample(&self.grid, &self.state, &self.params, &ctx)?;
        Ok(vec![r.t, r.norms.v, r.norms.temp, r.norms.gradv, r.norms.gradt, r.k[0], r.g1])
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, seed: u64, wind: f64) -> Result<Demo, JsError> {
        Self::try_new(n, seed, wind).map_err(js_err)
    }

    /// Takes `count` steps and returns the new model time.
    pub fn step(&mut self, count: usize) -> Result<f64, JsError> {
        self.try_step(count).map_err(js_err)
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nx(&self) -> usize {
        self.grid.nx
    }

    pub fn ny(&self) -> usize {
        self.grid.ny
    }

    pub fn nz(&self) -> usize {
        self.grid.nz
    }

    /// Temperature on level `k` (0 is the bottom), `x` fastest.
    pub fn temperature_slice(&self, k: usize) -> Vec<f64> {
        self.state.temp.level(k.min(self.grid.nz - 1)).to_vec()
    }

    /// Horizontal speed on level `k`.
    pub fn speed_slice(&self, k: usize) -> Vec<f64> {
        let k = k.min(self.grid.nz - 1);
        let (u, v) = (self.state.v.x.level(k), self.state.v.y.level(k));
        u.iter().zip(v).map(|(a, b)| a.hypot(*b)).collect()
    }

    /// `[t, ‖v‖, ‖T‖, ‖∇_H v‖, ‖∇_H T‖, K1, G1]` of the current state.
    pub fn ledger_row(&self) -> Result<Vec<f64>, JsError> {
        self.try_ledger_row().map_err(js_err)
    }
}

/// Decays the lowest admissible temperature eigenmode with frozen zero
/// velocity to `t_end` and returns `[measured ratio, exact ratio, relative error]`.
#[wasm_bindgen]
pub fn eigenmode_decay(n: usize, t_end: f64) -> Result<Vec<f64>, JsError> {
    try_eigenmode_decay(n, t_end).map_err(js_err)
}

pub fn try_eigenmode_decay(n: usize, t_end: f64) -> hydrostat::Result<Vec<f64>> {
    let grid = GridSpec::unit(n, n, (n / 4).max(2))?;
    let params = PhysParams::default();
    let dt = 1e-3;
    let step = StepConfig {
        dt_max: dt,
        freeze_velocity: true,
        ..StepConfig::default()
    };
    let mut st = Stepper::new(&grid, params, step)?;
    let mut s = initial::eigenmode_state(&grid)?;
    let n0 = norm_l2(&grid, &s.temp);
    while s.time < t_end - 1e-12 {
        let (next, _) = st.step(&s, dt.min(t_end - s.time), None)?;
        s = next;
    }
    let ratio = norm_l2(&grid, &s.temp) / n0;
    let exact = (-initial::eigenmode_lambda(&grid) * s.time / params.rt).exp();
    Ok(vec![ratio, exact, (ratio - exact).abs() / exact])
}

/// Largest `|⟨advect(q), q⟩| / ‖q‖²` over the velocity and temperature
/// components of a rough random state.
#[wasm_bindgen]
pub fn skew_residual(n: usize, seed: u64) -> Result<f64, JsError> {
    try_skew_residual(n, seed).map_err(js_err)
}

pub fn try_skew_residual(n: usize, seed: u64) -> hydrostat::Result<f64> {
    let grid = GridSpec::unit(n, n, (n / 2).max(2))?;
    let s = initial::rough_state(&grid, seed, 1.0, 1.0, 0.5)?;
    let mut worst = 0.0_f64;
    for q in [&s.v.x, &s.v.y, &s.temp] {
        let a = advect(&grid, q, &s.v, &s.w)?;
        worst = worst.max(inner(&grid, &a, q).abs() / inner(&grid, q, q));
    }
    Ok(worst)
}
