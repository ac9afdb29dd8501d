//! The acceptance suite: ten self-checking scenarios with pinned settings.

use std::path::Path;
use std::time::{Duration, Instant};

use super::config::{InitialKind, RunConfig, Scenario};
use super::scenarios::{run_scenario, Outcome};
use crate::error::Result;
use crate::fields::PhysParams;
use crate::mesh::GridSpec;
use crate::stepper::StepConfig;

pub const CRITERIA: [&str; 10] = [
    "skew-symmetric advection",
    "temperature energy identity",
    "eigenmode decay",
    "depth-averaged constraint",
    "manufactured-solution convergence",
    "epsilon sweep",
    "continuous dependence",
    "boundary-data homogenization",
    "trilinear constant",
    "rough-data robustness",
];

/// Pinned configuration of criterion `n` (1-based), writing under `out`.
pub fn criterion_config(n: usize, out: &Path) -> RunConfig {
    let grid = |nx, ny, nz| GridSpec::new(1.0, 1.0, 1.0, nx, ny, nz).expect("pinned grid");
    let mut c = match n {
        1 => {
            let mut c = RunConfig::new(grid(16, 16, 8), Scenario::Skew);
            c.options.samples = 5;
            c
        }
        2 => {
            let mut c = RunConfig::new(grid(32, 32, 16), Scenario::Energy);
            c.physics = PhysParams { rt: 10.0, alpha_t: 0.5, ..PhysParams::default() };
            c.options.eps_list = vec![0.01];
            c.step = StepConfig { dt_max: 1e-3, t_end: 0.2, ..StepConfig::default() };
            c
        }
        3 => {
            let mut c = RunConfig::new(grid(32, 32, 8), Scenario::Eigenmode);
            c.physics = PhysParams { rt: 10.0, ..PhysParams::default() };
            c.step = StepConfig { dt_max: 1e-3, t_end: 1.0, ..StepConfig::default() };
            c
        }
        4 => {
            let mut c = RunConfig::new(grid(32, 32, 16), Scenario::Forced);
            c.physics = PhysParams { f: 1.0, alpha_t: 0.5, alpha_v: 1.0, ..PhysParams::default() };
            c.step = StepConfig { dt_max: 5e-3, t_end: 1.0, ..StepConfig::default() };
            c.options.initial = InitialKind::Smooth;
            c
        }
        5 => {
            let mut c = RunConfig::new(grid(16, 16, 8), Scenario::Mms);
            c.physics = PhysParams { f: 1.0, ..PhysParams::default() };
            c.step = StepConfig { t_end: 1.0, ..StepConfig::default() };
            c.options.levels = vec![16, 32];
            c
        }
        6 => {
            let mut c = RunConfig::new(grid(32, 32, 16), Scenario::EpsSweep);
            c.options.eps_list = vec![1e-1, 1e-2, 1e-3];
            c.step = StepConfig { t_end: 0.5, ..StepConfig::default() };
            c
        }
        7 => {
            let mut c = RunConfig::new(grid(16, 16, 8), Scenario::Perturbation);
            c.physics = PhysParams { f: 1.0, ..PhysParams::default() };
            c.options.amplitude_v = 1.0;
            c.options.perturbation = 1e-3;
            c.step = StepConfig { dt_max: 5e-3, t_end: 1.0, ..StepConfig::default() };
            c
        }
        8 => {
            let mut c = RunConfig::new(GridSpec::new(1.0, 1.0, 0.5, 16, 16, 8).expect("pinned grid"), Scenario::Equivalence);
            c.physics = PhysParams {
                re1: 20.0,
                re2: 20.0,
                rt: 20.0,
                f: 1.0,
                alpha_t: 1.0,
                alpha_v: 1.0,
                ..PhysParams::default()
            };
            c.options.levels = vec![16, 32];
            c.options.amplitude_v = 0.1;
            c.options.amplitude_t = 0.1;
            c.step = StepConfig { dt_max: 0.15 * 20.0 / (2.0 * 256.0), t_end: 0.5, ..StepConfig::default() };
            c
        }
        9 => {
            let mut c = RunConfig::new(grid(16, 16, 8), Scenario::Trilinear);
            c.options.samples = 100;
            c.options.levels = vec![16, 32];
            c
        }
        10 => {
            let mut c = RunConfig::new(grid(32, 32, 16), Scenario::Rough);
            c.options.rough_amplitude = 0.2;
            c.step = StepConfig { t_end: 1.0, ..StepConfig::default() };
            c
        }
        _ => panic!("criteria are numbered 1 to 10, got {n}"),
    };
    c.seed = 20 + n as u64;
    c.output_dir = out.join(format!("criterion_{n:02}"));
    c
}

#[derive(Debug)]
pub struct CriterionResult {
    pub number: usize,
    pub outcome: Result<Outcome>,
    pub elapsed: Duration,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        matches!(&self.outcome, Ok(o) if o.passed())
    }

    /// `PASS 3 eigenmode decay (1.2 s): ...` style summary line.
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let detail = match &self.outcome {
            Ok(o) => o.checks.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; "),
            Err(e) => format!("error: {e}"),
        };
        format!(
            "{status} criterion {} {} ({:.1} s): {detail}",
            self.number,
            CRITERIA[self.number - 1],
            self.elapsed.as_secs_f64()
        )
    }
}

pub fn run_criterion(n: usize, out: &Path) -> CriterionResult {
    let start = Instant::now();
    let outcome = run_scenario(&criterion_config(n, out));
    CriterionResult {
        number: n,
        outcome,
        elapsed: start.elapsed(),
    }
}
