//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! # comment
//! grid.nx = 32
//! physics.alpha_t = 0.5
//! scenario.name = decay
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fields::PhysParams;
use crate::mesh::GridSpec;
use crate::stepper::StepConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Unforced run from the configured initial data.
    Decay,
    /// Wind stress and side temperature applied through the boundary closures.
    Forced,
    Mms,
    Eigenmode,
    Energy,
    EpsSweep,
    Perturbation,
    Equivalence,
    Rough,
    Trilinear,
    Skew,
    /// The acceptance suite (criteria listed in `scenario.criteria`).
    Verify,
}

impl Scenario {
    pub const ALL: [(&'static str, Scenario); 12] = [
        ("decay", Scenario::Decay),
        ("forced", Scenario::Forced),
        ("mms", Scenario::Mms),
        ("eigenmode", Scenario::Eigenmode),
        ("energy", Scenario::Energy),
        ("eps_sweep", Scenario::EpsSweep),
        ("perturbation", Scenario::Perturbation),
        ("equivalence", Scenario::Equivalence),
        ("rough", Scenario::Rough),
        ("trilinear", Scenario::Trilinear),
        ("skew", Scenario::Skew),
        ("verify", Scenario::Verify),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, s)| *s == self).map(|(n, _)| *n).unwrap()
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, sc)| *sc)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|(n, _)| *n).collect();
                format!("unknown scenario `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Zero,
    Smooth,
    Rough,
    Eigenmode,
}

impl FromStr for InitialKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero" => Ok(Self::Zero),
            "smooth" => Ok(Self::Smooth),
            "rough" => Ok(Self::Rough),
            "eigenmode" => Ok(Self::Eigenmode),
            _ => Err(format!("unknown initial data `{s}` (expected zero, smooth, rough or eigenmode)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOptions {
    pub initial: InitialKind,
    /// Max |v| of smooth initial data.
    pub amplitude_v: f64,
    /// Max |T| of smooth initial data.
    pub amplitude_t: f64,
    /// Grid-scale noise amplitude for rough data.
    pub rough_amplitude: f64,
    /// Forcing index file; relative paths resolve against the config file.
    pub forcing: Option<PathBuf>,
    /// Peak wind stress of the built-in analytic forcing.
    pub wind: f64,
    /// Peak side temperature of the built-in analytic forcing.
    pub side_temperature: f64,
    pub eps_list: Vec<f64>,
    /// Relative size of the perturbation in the Grönwall scenario.
    pub perturbation: f64,
    /// Horizontal resolutions of refinement studies (`nz` scales along).
    pub levels: Vec<usize>,
    /// Number of random triples in the trilinear scenario, states in the skew one.
    pub samples: usize,
    /// Acceptance criteria run by `verify` (1-based).
    pub criteria: Vec<usize>,
    /// Geometric growth of the ledger sampling interval.
    pub sample_growth: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            initial: InitialKind::Smooth,
            amplitude_v: 0.5,
            amplitude_t: 1.0,
            rough_amplitude: 0.2,
            forcing: None,
            wind: 0.5,
            side_temperature: 1.0,
            eps_list: vec![1e-1, 1e-2, 1e-3],
            perturbation: 1e-3,
            levels: Vec::new(),
            samples: 100,
            criteria: (1..=10).collect(),
            sample_growth: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub physics: PhysParams,
    pub step: StepConfig,
    pub scenario: Scenario,
    pub options: ScenarioOptions,
    pub output_dir: PathBuf,
    /// Times at which snapshots are written (the final state always is).
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(grid: GridSpec, scenario: Scenario) -> Self {
        Self {
            grid,
            physics: PhysParams::default(),
            step: StepConfig::default(),
            scenario,
            options: ScenarioOptions::default(),
            output_dir: PathBuf::from("out"),
            snapshot_times: Vec::new(),
            seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_default(path, None)
    }

    pub fn load_with_default(path: &Path, default: Option<Scenario>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse_with_default(&text, default)?;
        if let Some(f) = &cfg.options.forcing {
            if f.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.options.forcing = Some(base.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_default(text, None)
    }

    /// Like [`RunConfig::parse`], with `scenario.name` optional when
    /// `default` is given.
    pub fn parse_with_default(text: &str, default: Option<Scenario>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")));
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if entries.insert(k.clone(), v).is_some() {
                return Err(Error::config(k, "key given twice"));
            }
        }
        let mut p = Parser { entries };
        let grid = GridSpec::new(
            p.get("grid.lx", 1.0)?,
            p.get("grid.ly", 1.0)?,
            p.get("grid.h", 1.0)?,
            p.get("grid.nx", 16)?,
            p.get("grid.ny", 16)?,
            p.get("grid.nz", 8)?,
        )
        .map_err(|e| Error::config("grid", e.to_string()))?;
        let d = PhysParams::default();
        let physics = PhysParams {
            re1: p.get("physics.re1", d.re1)?,
            re2: p.get("physics.re2", d.re2)?,
            rt: p.get("physics.rt", d.rt)?,
            f: p.get("physics.f", d.f)?,
            eps: p.get("physics.eps", d.eps)?,
            alpha_t: p.get("physics.alpha_t", d.alpha_t)?,
            alpha_v: p.get("physics.alpha_v", d.alpha_v)?,
            delta: p.get("physics.delta", d.delta)?,
        };
        physics.validate().map_err(|e| Error::config("physics", e.to_string()))?;
        let d = StepConfig::default();
        let step = StepConfig {
            cfl_adv: p.get("step.cfl_adv", d.cfl_adv)?,
            cfl_diff: p.get("step.cfl_diff", d.cfl_diff)?,
            dt_max: p.get("step.dt_max", d.dt_max)?,
            dt_min: p.get("step.dt_min", d.dt_min)?,
            t_end: p.get("step.t_end", d.t_end)?,
            projection_tol: p.get("step.projection_tol", d.projection_tol)?,
            freeze_velocity: p.get("step.freeze_velocity", d.freeze_velocity)?,
        };
        step.validate().map_err(|e| Error::config("step", e.to_string()))?;
        let scenario: Scenario = match (p.take("scenario.name"), default) {
            (Some(s), _) => s.parse().map_err(|m| Error::config("scenario.name", m))?,
            (None, Some(d)) => d,
            (None, None) => return Err(Error::config("scenario.name", "missing")),
        };
        let d = ScenarioOptions::default();
        let options = ScenarioOptions {
            initial: p.get("scenario.initial", d.initial)?,
            amplitude_v: p.get("scenario.amplitude_v", d.amplitude_v)?,
            amplitude_t: p.get("scenario.amplitude_t", d.amplitude_t)?,
            rough_amplitude: p.get("scenario.rough_amplitude", d.rough_amplitude)?,
            forcing: p.take("scenario.forcing").map(PathBuf::from),
            wind: p.get("scenario.wind", d.wind)?,
            side_temperature: p.get("scenario.side_temperature", d.side_temperature)?,
            eps_list: p.list("scenario.eps_list", d.eps_list)?,
            perturbation: p.get("scenario.perturbation", d.perturbation)?,
            levels: p.list("scenario.levels", d.levels)?,
            samples: p.get("scenario.samples", d.samples)?,
            criteria: p.list("scenario.criteria", d.criteria)?,
            sample_growth: p.get("scenario.sample_growth", d.sample_growth)?,
        };
        let output_dir = PathBuf::from(p.take("output.dir").unwrap_or_else(|| "out".into()));
        let snapshot_times = p.list("output.snapshot_times", Vec::new())?;
        let seed = p.get("seed", 0u64)?;
        if let Some(k) = p.entries.keys().next() {
            return Err(Error::config(k.clone(), "unknown key"));
        }
        let cfg = Self {
            grid,
            physics,
            step,
            scenario,
            options,
            output_dir,
            snapshot_times,
            seed,
        };
        cfg.check_options()?;
        Ok(cfg)
    }

    fn check_options(&self) -> Result<()> {
        let o = &self.options;
        let positive = [
            ("scenario.amplitude_v", o.amplitude_v),
            ("scenario.amplitude_t", o.amplitude_t),
            ("scenario.rough_amplitude", o.rough_amplitude),
            ("scenario.wind", o.wind),
            ("scenario.side_temperature", o.side_temperature),
            ("scenario.perturbation", o.perturbation),
        ];
        for (k, v) in positive {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(k, format!("must be finite and non-negative, got {v}")));
            }
        }
        if o.eps_list.iter().any(|e| !(0.0..1.0).contains(e)) {
            return Err(Error::config("scenario.eps_list", "every ε must lie in [0, 1)"));
        }
        if o.criteria.iter().any(|c| !(1..=10).contains(c)) {
            return Err(Error::config("scenario.criteria", "criteria are numbered 1 to 10"));
        }
        if o.sample_growth < 1.0 {
            return Err(Error::config("scenario.sample_growth", "must be at least 1"));
        }
        if self.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::config("output.snapshot_times", "times must be finite and non-negative"));
        }
        Ok(())
    }
}

struct Parser {
    entries: BTreeMap<String, String>,
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
}

macro_rules! via_from_str {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("cannot parse `{s}`: {e}"))
            }
        }
    )*};
}

via_from_str!(f64, usize, u64, bool);

impl ConfigValue for InitialKind {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl Parser {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn get<T: ConfigValue>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            Some(s) => T::parse_value(&s).map_err(|m| Error::config(key, m)),
            None => Ok(default),
        }
    }

    fn list<T: ConfigValue>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.take(key) {
            Some(s) => s
                .split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(|x| T::parse_value(x).map_err(|m| Error::config(key, m)))
                .collect(),
            None => Ok(default),
        }
    }
}
