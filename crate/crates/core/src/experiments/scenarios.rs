//! Scenario drivers behind `hydrostat run` and `hydrostat verify`.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{InitialKind, RunConfig, Scenario};
use super::initial::{self, RandomSmooth};
use super::mms::{Manufactured, MmsForcing};
use super::snapshot;
use crate::diagnostics::{
    difference_sq, epsilon_sweep_report, gronwall_monitor, sample, EnergyLedger, SampleCadence, SampleContext,
    SweepRun,
};
use crate::dynamics::advect;
use crate::error::{Error, Result};
use crate::fields::{anisotropic_product_bound, norm_l2, norm_l2_vec, seminorm_h1_parts, PhysParams, State, VELOCITY_BC};
use crate::homogenize::{equivalence_run, BoundaryForcing};
use crate::mesh::{inner, restrict, GridSpec, ScalarField, VectorField};
use crate::stepper::{cfl_dt, Forcing, StepConfig, Stepper};

/// Ordered `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// A pass/fail assertion made by a self-checking scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub report: Report,
    pub checks: Vec<Check>,
    pub ledger: Option<EnergyLedger>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        let c = Check::new(name, passed, detail);
        self.report.push(format!("check.{name}"), if c.passed { "pass" } else { "fail" });
        self.checks.push(c);
    }
}

/// Calibrated bound on `sup_t t‖(∇_H v, ∇_H T)‖² / ‖(v₀, T₀)‖²` for the
/// rough scenario. Observed values lie in 0.69 to 1.22 on 16² to 64² grids
/// over several seeds, without growth under refinement.
pub const ROUGH_ENVELOPE: f64 = 2.0;

/// Runs the configured scenario and writes `report.txt` (and, where
/// applicable, `ledger.csv` and snapshots) under `cfg.output_dir`.
pub fn run_scenario(cfg: &RunConfig) -> Result<Outcome> {
    fs::create_dir_all(&cfg.output_dir)?;
    let mut out = match cfg.scenario {
        Scenario::Decay | Scenario::Forced | Scenario::Rough => evolve(cfg)?,
        Scenario::Mms => mms(cfg)?,
        Scenario::Eigenmode => eigenmode(cfg)?,
        Scenario::Energy => energy(cfg)?,
        Scenario::EpsSweep => eps_sweep(cfg)?,
        Scenario::Perturbation => perturbation(cfg)?,
        Scenario::Equivalence => equivalence(cfg)?,
        Scenario::Trilinear => trilinear(cfg)?,
        Scenario::Skew => skew(cfg)?,
        Scenario::Verify => suite(cfg),
    };
    let mut head = Report::default();
    head.push("scenario", cfg.scenario.name());
    head.push("grid", format!("{}x{}x{}", cfg.grid.nx, cfg.grid.ny, cfg.grid.nz));
    head.push("seed", cfg.seed);
    head.entries.append(&mut out.report.entries);
    head.push("status", if out.passed() { "pass" } else { "fail" });
    out.report = head;
    fs::write(cfg.output_dir.join("report.txt"), out.report.render())?;
    if let Some(l) = &out.ledger {
        l.write_csv(fs::File::create(cfg.output_dir.join("ledger.csv"))?)?;
    }
    Ok(out)
}

/// Initial data selected by `scenario.initial`.
pub fn initial_state(cfg: &RunConfig) -> Result<State> {
    let o = &cfg.options;
    match o.initial {
        InitialKind::Zero => Ok(State::zeros(&cfg.grid)),
        InitialKind::Smooth => initial::smooth_state(&cfg.grid, cfg.seed, o.amplitude_v, o.amplitude_t),
        InitialKind::Rough => initial::rough_state(&cfg.grid, cfg.seed, o.amplitude_v, o.amplitude_t, o.rough_amplitude),
        InitialKind::Eigenmode => initial::eigenmode_state(&cfg.grid),
    }
}

/// Forcing from `scenario.forcing` or the built-in analytic one.
pub fn boundary_forcing(cfg: &RunConfig, grid: &GridSpec) -> Result<BoundaryForcing> {
    let p = &cfg.physics;
    match &cfg.options.forcing {
        Some(path) => snapshot::read_forcing(path, grid, p.alpha_v, p.alpha_t).map_err(|e| match e {
            Error::Io(io) => Error::config("scenario.forcing", format!("{}: {io}", path.display())),
            other => other,
        }),
        None => initial::analytic_forcing(
            grid,
            cfg.step.t_end,
            cfg.options.wind,
            cfg.options.side_temperature,
            p.alpha_v,
            p.alpha_t,
        ),
    }
}

fn grad_v_norm(grid: &GridSpec, v: &VectorField) -> f64 {
    let a = seminorm_h1_parts(grid, &v.x, VELOCITY_BC, None).0;
    let b = seminorm_h1_parts(grid, &v.y, VELOCITY_BC, None).0;
    a.hypot(b)
}

/// Result of [`simulate`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub state: State,
    pub ledger: EnergyLedger,
    pub steps: usize,
    pub rejections: usize,
    /// Largest `‖∇_H·v̄‖/‖∇_H v‖` over accepted steps (0 while `v = 0`).
    pub constraint_ratio: f64,
    pub snapshots: Vec<PathBuf>,
}

/// Sampling and output switches of [`simulate`].
#[derive(Debug, Clone, Default)]
pub struct Output<'a> {
    pub dir: Option<&'a Path>,
    pub snapshot_times: &'a [f64],
    pub sample_growth: f64,
    pub skip_trilinear: bool,
}

fn ledger_row(
    grid: &GridSpec,
    state: &State,
    params: &PhysParams,
    forcing: Option<&dyn Forcing>,
    residual: f64,
    skip_trilinear: bool,
) -> Result<crate::diagnostics::LedgerRow> {
    let top = forcing.and_then(|f| f.top_flux(grid, state.time));
    let wall = forcing.and_then(|f| f.side_temperature(grid, state.time));
    let ctx = SampleContext {
        top_flux: top.as_ref(),
        wall: wall.as_ref(),
        energy_residual: residual,
        skip_trilinear,
        ..SampleContext::default()
    };
    sample(grid, state, params, &ctx)
}

/// Integrates to `step.t_end`, recording the ledger and writing snapshots.
/// On a numerical failure the last good state is written to
/// `<dir>/checkpoint` and its path is added to the error.
pub fn simulate(
    grid: &GridSpec,
    params: &PhysParams,
    step: &StepConfig,
    mut state: State,
    forcing: Option<&dyn Forcing>,
    output: &Output<'_>,
) -> Result<Trajectory> {
    let mut stepper = Stepper::new(grid, *params, *step)?;
    let mut ledger = EnergyLedger::new();
    ledger.push(ledger_row(grid, &state, params, forcing, 0.0, output.skip_trilinear)?)?;
    let mut cadence = SampleCadence::new(step.dt_max, output.sample_growth.max(1.0));
    let mut targets: Vec<f64> = output
        .snapshot_times
        .iter()
        .copied()
        .filter(|t| *t > state.time && *t < step.t_end)
        .collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.push(step.t_end);
    let mut snapshots = Vec::new();
    let mut write_snap = |s: &State, n: usize| -> Result<()> {
        if let Some(dir) = output.dir {
            snapshots.extend(snapshot::write_state(&dir.join("snapshots"), &format!("{n:04}"), s)?);
        }
        Ok(())
    };
    if output.snapshot_times.iter().any(|t| *t == state.time) {
        write_snap(&state, 0)?;
    }
    let mut steps = 0;
    let mut rejections = 0;
    let mut constraint_ratio = 0.0_f64;
    for (n, target) in targets.iter().enumerate() {
        let mut pending = None;
        let res = stepper.advance_to(&mut state, *target, forcing, |s, r| {
            steps += 1;
            rejections += r.rejections;
            let gv = grad_v_norm(grid, &s.v);
            if gv > 0.0 && !step.freeze_velocity {
                constraint_ratio = constraint_ratio.max(r.constraint / gv);
            }
            pending = Some(r.energy_residual);
            if cadence.should_sample(s.time) || s.time >= *target {
                ledger.push(ledger_row(grid, s, params, forcing, r.energy_residual, output.skip_trilinear)?)?;
                pending = None;
            }
            Ok(())
        });
        if let Err(e) = res {
            return Err(with_checkpoint(e, output.dir, &state));
        }
        if let Some(r) = pending {
            // the final state of this segment is always recorded
            if ledger.rows.last().map(|l| l.t) != Some(state.time) {
                ledger.push(ledger_row(grid, &state, params, forcing, r, output.skip_trilinear)?)?;
            }
        }
        write_snap(&state, n + 1)?;
    }
    Ok(Trajectory {
        state,
        ledger,
        steps,
        rejections,
        constraint_ratio,
        snapshots,
    })
}

fn with_checkpoint(e: Error, dir: Option<&Path>, last: &State) -> Error {
    let numerical = matches!(e, Error::StepFailed { .. } | Error::SolverDiverged { .. } | Error::NonFinite { .. });
    let (Some(dir), true) = (dir, numerical) else {
        return e;
    };
    let path = dir.join("checkpoint");
    let saved = snapshot::write_state(&path, "last", last)
        .map(|_| format!("last checkpoint at t = {} in {}", last.time, path.display()))
        .unwrap_or_else(|w| format!("checkpoint could not be written: {w}"));
    Error::StepFailed {
        time: last.time,
        reason: format!("{e}; {saved}"),
    }
}

fn output_for(cfg: &RunConfig) -> Output<'_> {
    Output {
        dir: Some(&cfg.output_dir),
        snapshot_times: &cfg.snapshot_times,
        sample_growth: cfg.options.sample_growth,
        skip_trilinear: false,
    }
}

/// `decay`, `forced` and `rough`.
fn evolve(cfg: &RunConfig) -> Result<Outcome> {
    let g = &cfg.grid;
    let mut out = Outcome::default();
    let mut initial_cfg = cfg.clone();
    if cfg.scenario == Scenario::Rough {
        initial_cfg.options.initial = InitialKind::Rough;
    }
    let s0 = initial_state(&initial_cfg)?;
    let forcing = match cfg.scenario {
        Scenario::Forced => Some(boundary_forcing(cfg, g)?),
        _ => None,
    };
    let e0 = norm_l2_vec(g, &s0.v).powi(2) + norm_l2(g, &s0.temp).powi(2);
    let traj = simulate(
        g,
        &cfg.physics,
        &cfg.step,
        s0,
        forcing.as_ref().map(|f| f as &dyn Forcing),
        &output_for(cfg),
    )?;
    let l = &traj.ledger;
    out.report.push("steps", traj.steps);
    out.report.push("rejections", traj.rejections);
    out.report.push("t_final", traj.state.time);
    out.report.push("energy_initial", e0);
    out.report.push("energy_final", l.rows.last().map(|r| r.energy()).unwrap_or(0.0));
    out.report.push("energy_growth_rate", l.energy_growth_rate());
    out.report.push("max_t_weighted_gradient", l.max_t_weighted_gradient());
    out.report.push("max_constraint_ratio", traj.constraint_ratio);
    out.report.push("ledger_rows", l.len());
    out.report.push("snapshots_written", traj.snapshots.len());
    let finite = l.rows.iter().all(|r| r.to_array().iter().all(|x| x.is_finite()));
    match cfg.scenario {
        Scenario::Forced => {
            out.check(
                "constraint",
                traj.constraint_ratio <= 1e-8,
                format!("max ‖∇_H·v̄‖/‖∇_H v‖ = {:.3e} (limit 1e-8)", traj.constraint_ratio),
            );
        }
        Scenario::Rough => {
            let ratio = if e0 > 0.0 { l.max_t_weighted_gradient() / e0 } else { 0.0 };
            out.report.push("t_weighted_envelope_ratio", ratio);
            out.check("ledger_finite", finite, format!("{} rows", l.len()));
            out.check(
                "t_weighted_envelope",
                ratio <= ROUGH_ENVELOPE,
                format!("sup t‖∇(v,T)‖²/‖(v0,T0)‖² = {ratio:.4} (envelope {ROUGH_ENVELOPE})"),
            );
            out.check(
                "reached_t_end",
                (traj.state.time - cfg.step.t_end).abs() <= 1e-12 * cfg.step.t_end.max(1.0),
                format!("t = {}", traj.state.time),
            );
        }
        _ => {}
    }
    out.ledger = Some(traj.ledger);
    Ok(out)
}

fn level_grid(base: &GridSpec, n: usize) -> Result<GridSpec> {
    let scale = |m: usize| (m * n / base.nx).max(1);
    GridSpec::new(base.lx, base.ly, base.h, n, scale(base.ny), scale(base.nz))
}

fn levels(cfg: &RunConfig) -> Vec<usize> {
    if cfg.options.levels.len() >= 2 {
        cfg.options.levels.clone()
    } else {
        vec![cfg.grid.nx, 2 * cfg.grid.nx]
    }
}

fn observed_order(e_coarse: f64, e_fine: f64, ratio: f64) -> f64 {
    (e_coarse / e_fine).ln() / ratio.ln()
}

fn mms(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let ls = levels(cfg);
    let results: Vec<Result<(f64, f64)>> = ls
        .par_iter()
        .map(|&n| {
            let g = level_grid(&cfg.grid, n)?;
            let exact = Manufactured::new(&g);
            let forcing = MmsForcing::new(&g, &exact, &cfg.physics)?;
            let s0 = exact.initial_state(&g)?;
            let mut st = Stepper::new(&g, cfg.physics, cfg.step)?;
            let mut s = s0;
            st.advance_to(&mut s, cfg.step.t_end, Some(&forcing), |_, _| Ok(()))?;
            let ev = norm_l2_vec(&g, &s.v.sub(&exact.exact_velocity(&g)));
            let et = norm_l2(&g, &(&s.temp - &exact.exact_temperature(&g)));
            Ok((ev, et))
        })
        .collect();
    let errs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut min_order = f64::INFINITY;
    for (n, (ev, et)) in ls.iter().zip(&errs) {
        out.report.push(format!("error_v.{n}"), ev);
        out.report.push(format!("error_T.{n}"), et);
    }
    for w in 0..ls.len() - 1 {
        let r = ls[w + 1] as f64 / ls[w] as f64;
        let ov = observed_order(errs[w].0, errs[w + 1].0, r);
        let ot = observed_order(errs[w].1, errs[w + 1].1, r);
        out.report.push(format!("order_v.{}_{}", ls[w], ls[w + 1]), ov);
        out.report.push(format!("order_T.{}_{}", ls[w], ls[w + 1]), ot);
        min_order = min_order.min(ov).min(ot);
    }
    out.report.push("observed_order", min_order);
    out.check("spatial_order", min_order >= 1.8, format!("min observed order {min_order:.3} (need 1.8)"));
    Ok(out)
}

fn eigenmode(cfg: &RunConfig) -> Result<Outcome> {
    let g = &cfg.grid;
    let mut out = Outcome::default();
    let params = PhysParams {
        alpha_t: 0.0,
        eps: 0.0,
        ..cfg.physics
    };
    let step = StepConfig {
        freeze_velocity: true,
        ..cfg.step
    };
    let s0 = initial::eigenmode_state(g)?;
    let n0 = norm_l2(g, &s0.temp);
    let traj = simulate(g, &params, &step, s0, None, &output_for(cfg))?;
    let lam = initial::eigenmode_lambda(g);
    let t = traj.state.time;
    let ratio = norm_l2(g, &traj.state.temp) / n0;
    let expected = (-lam * t / params.rt).exp();
    let rel = (ratio - expected).abs() / expected;
    out.report.push("steps", traj.steps);
    out.report.push("lambda_h", lam);
    out.report.push("decay_ratio", ratio);
    out.report.push("expected_ratio", expected);
    out.report.push("relative_error", rel);
    out.check("decay_rate", rel <= 1e-3, format!("relative error {rel:.3e} after {} steps", traj.steps));
    out.ledger = Some(traj.ledger);
    Ok(out)
}

/// Mean per-step energy residual with `v ≡ 0` over `t_end` at steps `dt`.
fn mean_energy_residual(grid: &GridSpec, params: &PhysParams, step: &StepConfig, t0: &ScalarField, dt: f64) -> Result<f64> {
    let cfg = StepConfig {
        freeze_velocity: true,
        dt_max: dt,
        ..*step
    };
    let mut st = Stepper::new(grid, *params, cfg)?;
    let mut s = State::new(grid, VectorField::zeros(grid), t0.clone())?;
    if cfl_dt(grid, &s, params, &cfg) < dt {
        return Err(Error::config("step.dt_max", format!("dt = {dt} exceeds the diffusive limit")));
    }
    let n = (step.t_end / dt).round() as usize;
    let mut total = 0.0;
    for _ in 0..n {
        let (next, r) = st.step(&s, dt, None)?;
        total += r.energy_residual.abs();
        s = next;
    }
    Ok(total / n.max(1) as f64)
}

fn energy(cfg: &RunConfig) -> Result<Outcome> {
    let g = &cfg.grid;
    let mut out = Outcome::default();
    let r = RandomSmooth::new(g, cfg.seed);
    let mut t0 = r.temperature_field(g);
    t0.scale(cfg.options.amplitude_t / t0.max_abs().max(1e-300));
    let dt = cfg.step.dt_max;
    let mut eps_values = vec![cfg.physics.eps];
    eps_values.extend(cfg.options.eps_list.iter().filter(|e| **e != cfg.physics.eps));
    let ratios: Vec<Result<(f64, f64, f64)>> = eps_values
        .par_iter()
        .map(|&eps| {
            let p = PhysParams { eps, ..cfg.physics };
            let coarse = mean_energy_residual(g, &p, &cfg.step, &t0, dt)?;
            let fine = mean_energy_residual(g, &p, &cfg.step, &t0, 0.5 * dt)?;
            Ok((eps, coarse, fine))
        })
        .collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for res in ratios {
        let (eps, coarse, fine) = res?;
        let ratio = coarse / fine;
        out.report.push(format!("residual_dt.eps_{eps}"), coarse);
        out.report.push(format!("residual_dt2.eps_{eps}"), fine);
        out.report.push(format!("reduction.eps_{eps}"), ratio);
        ok &= (3.2..=4.8).contains(&ratio);
        detail.push(format!("ε={eps}: {ratio:.3}"));
    }
    out.check("residual_reduction", ok, format!("{} (need 4 ± 20%)", detail.join(", ")));
    Ok(out)
}

fn eps_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let g = &cfg.grid;
    let mut out = Outcome::default();
    let s0 = initial_state(cfg)?;
    let mut eps: Vec<f64> = cfg.options.eps_list.clone();
    if !eps.contains(&0.0) {
        eps.push(0.0);
    }
    let finals: Vec<Result<State>> = eps
        .par_iter()
        .map(|&e| {
            let p = PhysParams { eps: e, ..cfg.physics };
            let mut st = Stepper::new(g, p, cfg.step)?;
            let mut s = s0.clone();
            st.advance_to(&mut s, cfg.step.t_end, None, |_, _| Ok(()))?;
            Ok(s)
        })
        .collect();
    let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;
    let runs: Vec<SweepRun> = eps
        .iter()
        .zip(&finals)
        .map(|(e, s)| SweepRun {
            eps: *e,
            grid: *g,
            state: s,
        })
        .collect();
    let rep = epsilon_sweep_report(&runs)?;
    for (e, (t, v)) in rep.eps.iter().zip(rep.t_diff.iter().zip(&rep.v_diff)) {
        out.report.push(format!("t_diff.eps_{e}"), t);
        out.report.push(format!("v_diff.eps_{e}"), v);
    }
    let order = rep.order.unwrap_or(f64::NAN);
    out.report.push("monotone", rep.monotone);
    out.report.push("order", order);
    out.report.push("coupling", rep.coupling);
    out.check("monotone", rep.monotone, "‖T_ε − T_0‖ decreases with ε (10% slack)");
    out.check("order", order > 0.5, format!("fitted order {order:.3} (need > 0.5)"));
    Ok(out)
}

fn perturbation(cfg: &RunConfig) -> Result<Outcome> {
    let g = &cfg.grid;
    let p = &cfg.physics;
    let mut out = Outcome::default();
    let base = initial_state(cfg)?;
    let dir = initial::smooth_state(g, cfg.seed.wrapping_add(1), 1.0, 1.0)?;
    let size = (norm_l2_vec(g, &base.v).powi(2) + norm_l2(g, &base.temp).powi(2)).sqrt();
    let dsize = (norm_l2_vec(g, &dir.v).powi(2) + norm_l2(g, &dir.temp).powi(2)).sqrt();
    let delta = cfg.options.perturbation * size.max(1e-300) / dsize;
    let perturbed = |scale: f64| -> Result<State> {
        let mut v = base.v.clone();
        v.axpy(scale * delta, &dir.v);
        let mut t = base.temp.clone();
        t.axpy(scale * delta, &dir.temp);
        State::new(g, v, t)
    };
    let mut states = vec![base.clone(), perturbed(1.0)?, perturbed(0.5)?];
    let mut steppers = (0..3)
        .map(|_| Stepper::new(g, *p, cfg.step))
        .collect::<Result<Vec<_>>>()?;
    let row = |s: &State| ledger_row(g, s, p, None, 0.0, true);
    let mut ledgers = vec![EnergyLedger::new(), EnergyLedger::new(), EnergyLedger::new()];
    let mut diffs = [Vec::new(), Vec::new()];
    let mut record = |states: &[State], ledgers: &mut Vec<EnergyLedger>| -> Result<()> {
        for (l, s) in ledgers.iter_mut().zip(states) {
            l.push(row(s)?)?;
        }
        diffs[0].push(difference_sq(g, &states[0], &states[1]));
        diffs[1].push(difference_sq(g, &states[0], &states[2]));
        Ok(())
    };
    record(&states, &mut ledgers)?;
    let mut cadence = SampleCadence::new(cfg.step.dt_max, cfg.options.sample_growth.max(1.0));
    let t_end = cfg.step.t_end;
    let mut steps = 0;
    // lockstep with a shared dt so the three ledgers align
    while states[0].time < t_end - 1e-12 * t_end.max(1.0) {
        let mut dt = (t_end - states[0].time).min(cfg.step.dt_max);
        for s in &states {
            dt = dt.min(cfl_dt(g, s, p, &cfg.step));
        }
        let next: Vec<Result<State>> = states
            .par_iter()
            .zip(steppers.par_iter_mut())
            .map(|(s, st)| st.heun(s, dt, None).map(|r| r.0))
            .collect();
        states = next.into_iter().collect::<Result<Vec<_>>>()?;
        if states.iter().any(|s| !s.is_finite()) {
            return Err(Error::StepFailed {
                time: states[0].time,
                reason: "non-finite state in the perturbation runs".into(),
            });
        }
        steps += 1;
        let last = states[0].time >= t_end - 1e-12 * t_end.max(1.0);
        if cadence.should_sample(states[0].time) || last {
            record(&states, &mut ledgers)?;
        }
    }
    let full = gronwall_monitor(&ledgers[0], &ledgers[1], &diffs[0])?;
    let half = gronwall_monitor(&ledgers[0], &ledgers[2], &diffs[1])?;
    let (c1, c2) = (full.c_emp().unwrap_or(f64::NAN), half.c_emp().unwrap_or(f64::NAN));
    let agree = (c1 - c2).abs() <= 0.2 * c1.abs().max(c2.abs());
    out.report.push("steps", steps);
    out.report.push("delta0", cfg.options.perturbation);
    out.report.push("c_emp.delta", c1);
    out.report.push("c_emp.half_delta", c2);
    let integral = match &full {
        crate::diagnostics::GronwallReport::Fitted { integral, .. } => *integral.last().unwrap_or(&0.0),
        _ => 0.0,
    };
    out.report.push("integral_g1_g2", integral);
    out.check("c_emp_agreement", agree && c1.is_finite(), format!("C_emp = {c1:.4} vs {c2:.4}"));
    out.check(
        "gronwall_bound",
        full.bound_holds() && half.bound_holds(),
        "log R(t) ≤ C_emp ∫(G1+G2) at every sample",
    );
    out.ledger = Some(ledgers.swap_remove(0));
    Ok(out)
}

/// Direct run on `grid` to `t_end` from the analytic initial draw.
fn direct_run(cfg: &RunConfig, grid: &GridSpec, scales: (f64, f64), dt: f64) -> Result<State> {
    let f = boundary_forcing(cfg, grid)?;
    let s0 = smooth_on(cfg, grid, scales)?;
    let step = StepConfig { dt_max: dt, ..cfg.step };
    let mut st = Stepper::new(grid, cfg.physics, step)?;
    let mut s = s0;
    st.advance_to(&mut s, cfg.step.t_end, Some(&f), |_, _| Ok(()))?;
    Ok(s)
}

fn smooth_on(cfg: &RunConfig, grid: &GridSpec, (sv, st): (f64, f64)) -> Result<State> {
    let r = RandomSmooth::new(grid, cfg.seed);
    let v = crate::pressure::project(grid, &r.velocity_field(grid).scaled(sv), 1.0)?.v;
    State::new(grid, v, r.temperature_field(grid).scaled(st))
}

fn equivalence(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let ls = levels(cfg);
    let base = level_grid(&cfg.grid, ls[0])?;
    let r = RandomSmooth::new(&base, cfg.seed);
    let scales = (
        cfg.options.amplitude_v / r.velocity_field(&base).max_abs().max(1e-300),
        cfg.options.amplitude_t / r.temperature_field(&base).max_abs().max(1e-300),
    );
    let dt_at = |n: usize| cfg.step.dt_max * (ls[0] as f64 / n as f64).powi(2);
    let mut disc = Vec::new();
    let mut direct_states = Vec::new();
    for &n in &ls {
        let g = level_grid(&cfg.grid, n)?;
        let f = boundary_forcing(cfg, &g)?;
        let s0 = smooth_on(cfg, &g, scales)?;
        let step = StepConfig { dt_max: dt_at(n), ..cfg.step };
        let rep = equivalence_run(&g, &cfg.physics, &step, &s0, &f, cfg.step.t_end).map_err(|(b, e)| {
            Error::StepFailed {
                time: 0.0,
                reason: format!("{b:?} branch failed: {e}"),
            }
        })?;
        out.report.push(format!("discrepancy_v.{n}"), rep.v_discrepancy);
        out.report.push(format!("discrepancy_T.{n}"), rep.t_discrepancy);
        out.report.push(format!("relative_v.{n}"), rep.v_relative);
        out.report.push(format!("relative_T.{n}"), rep.t_relative);
        disc.push((rep.v_discrepancy, rep.t_discrepancy));
        direct_states.push((g, rep.direct));
    }
    // calibration: the finest direct run against one more refinement
    let top = *ls.last().unwrap();
    let gf = level_grid(&cfg.grid, 2 * top)?;
    let finest = direct_run(cfg, &gf, scales, dt_at(2 * top))?;
    let mut errs = Vec::new();
    for w in 0..ls.len() {
        let (g, s) = &direct_states[w];
        let (fg, fs) = if w + 1 < ls.len() {
            (&direct_states[w + 1].0, &direct_states[w + 1].1)
        } else {
            (&gf, &finest)
        };
        debug_assert_eq!(fg.nx, 2 * g.nx);
        let ev = norm_l2_vec(
            g,
            &VectorField::new(restrict(g, &fs.v.x)?, restrict(g, &fs.v.y)?).sub(&s.v),
        );
        let et = norm_l2(g, &(&restrict(g, &fs.temp)? - &s.temp));
        out.report.push(format!("discretization_v.{}", ls[w]), ev);
        out.report.push(format!("discretization_T.{}", ls[w]), et);
        errs.push((ev, et));
    }
    let mut bounded = true;
    let mut detail = Vec::new();
    for (w, n) in ls.iter().enumerate() {
        let (dv, dt) = disc[w];
        let (ev, et) = errs[w];
        bounded &= dv <= 5.0 * ev && dt <= 5.0 * et;
        detail.push(format!("{n}: v {dv:.2e}/{ev:.2e}, T {dt:.2e}/{et:.2e}"));
    }
    let decreasing = disc.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1);
    out.check("within_discretization_error", bounded, detail.join("; "));
    out.check(
        "decreasing_under_refinement",
        decreasing,
        format!(
            "discrepancy (v/T) by level: {}",
            disc.iter().map(|d| format!("{:.2e}/{:.2e}", d.0, d.1)).collect::<Vec<_>>().join(" -> ")
        ),
    );
    Ok(out)
}

fn trilinear(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let ls = levels(cfg);
    let n = cfg.options.samples.max(1);
    let mut maxima = Vec::new();
    for &lv in &ls {
        let g = level_grid(&cfg.grid, lv)?;
        let ratios: Vec<Result<f64>> = (0..n)
            .into_par_iter()
            .map(|s| {
                let seed = cfg.seed.wrapping_add(3 * s as u64);
                let f: Vec<ScalarField> = (0..3)
                    .map(|k| RandomSmooth::new(&g, seed + k).temperature_field(&g))
                    .collect();
                let (lhs, rhs) = anisotropic_product_bound(&g, &f[0], &f[1], &f[2])?;
                Ok(if rhs > 0.0 { lhs / rhs } else { 0.0 })
            })
            .collect();
        let m = ratios.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        out.report.push(format!("max_ratio.{lv}"), m);
        maxima.push(m);
    }
    let hi = maxima.iter().copied().fold(0.0, f64::max);
    let lo = maxima.iter().copied().fold(f64::INFINITY, f64::min);
    let change = hi / lo;
    out.report.push("max_change", change);
    out.check("no_blow_up", change <= 2.0 && hi.is_finite(), format!("max ratio changes by ×{change:.3}"));
    Ok(out)
}

fn suite(cfg: &RunConfig) -> Outcome {
    let mut out = Outcome::default();
    for &n in &cfg.options.criteria {
        let r = super::verify::run_criterion(n, &cfg.output_dir);
        out.report.push(format!("criterion.{n}.seconds"), format!("{:.2}", r.elapsed.as_secs_f64()));
        let detail = r.line();
        out.check(&format!("criterion_{n}"), r.passed(), detail);
    }
    out
}

fn skew(cfg: &RunConfig) -> Result<Outcome> {
    let g = &cfg.grid;
    let mut out = Outcome::default();
    let n = cfg.options.samples.max(1);
    let mut worst = 0.0_f64;
    for s in 0..n {
        let st = initial::rough_state(g, cfg.seed + s as u64, 1.0, 1.0, 0.5)?;
        let vmax = st.v.max_abs().max(st.w.max_abs());
        for q in [&st.v.x, &st.v.y, &st.temp] {
            let a = advect(g, q, &st.v, &st.w)?;
            let denom = norm_l2(g, q).powi(2) * vmax / g.dx.min(g.dy).min(g.dz);
            if denom > 0.0 {
                worst = worst.max(inner(g, &a, q).abs() / denom);
            }
        }
    }
    out.report.push("states", n);
    out.report.push("max_normalised_product", worst);
    out.check("skew_symmetry", worst <= 1e-12, format!("max |<advect(q),q>| normalised = {worst:.3e}"));
    Ok(out)
}
