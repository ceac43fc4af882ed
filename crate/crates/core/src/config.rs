//! TOML run configuration.
//!
//! ```toml
//! problem = "sosmfg"          # sosmfg | osmfg | cosmfg
//! method = "continuation"     # continuation | monotone_iteration | variational
//! scenario = "monotone_1d"    # or give [grid], [cost], [rho]/[m0], ... explicitly
//!
//! [acceptance]                # required, no defaults
//! r_obstacle = 1e-6
//! r_continuation = 1e-6
//! r_subsolution = 1e-6
//! r_contact = 1e-6
//! r_duality = 1e-6
//! ```
//!
//! See the README for the full schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::Hamiltonian;
use crate::cost::CostOperator;
use crate::error::{Error, Result};
use crate::evolutive::ObstacleOperator;
use crate::grid::{inner, Grid, ScalarField, TimeGrid};
use crate::obstacle::ObstacleSolveConfig;
use crate::scenarios::{
    self, distance_to_center, free_density, gaussian_density, raised_cosine_bump, well_profile,
    ExpectedOutcome, Problem, Scenario,
};
use crate::stationary::{
    default_schedule, geometric_schedule, validate_schedule, AlphaRule, CouplingConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Sosmfg,
    Osmfg,
    Cosmfg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Continuation,
    MonotoneIteration,
    Variational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: Vec<usize>,
    pub bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    RaisedCosine,
    Gaussian,
    Well,
    DistanceToCenter,
}

/// A number (constant field) or a named profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Profile {
        profile: Profile,
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default)]
        sigma: Option<f64>,
    },
}

impl FieldSpec {
    pub fn build(&self, grid: Grid) -> Result<ScalarField> {
        match self {
            FieldSpec::Constant(c) => Ok(ScalarField::constant(grid, *c)),
            FieldSpec::Profile {
                profile,
                scale,
                sigma,
            } => {
                let f = match profile {
                    Profile::RaisedCosine => raised_cosine_bump(grid),
                    Profile::Gaussian => {
                        let s = sigma.unwrap_or(0.1);
                        if !(s > 0.0) {
                            return Err(Error::Config(format!(
                                "gaussian sigma must be positive, got {s}"
                            )));
                        }
                        gaussian_density(grid, s)
                    }
                    Profile::Well => well_profile(grid),
                    Profile::DistanceToCenter => distance_to_center(grid),
                };
                Ok(f.scale(scale.unwrap_or(1.0)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    LocalPower {
        a: f64,
        p: f64,
        f0: FieldSpec,
    },
    /// c1 is given directly or as `c1_relative / E(A⁻¹ρ)`.
    NonlocalAffine {
        c0: f64,
        #[serde(default)]
        c1: Option<f64>,
        #[serde(default)]
        c1_relative: Option<f64>,
        w: FieldSpec,
    },
}

impl CostSpec {
    fn build(&self, grid: Grid, rho: Option<&ScalarField>) -> Result<CostOperator> {
        match self {
            CostSpec::LocalPower { a, p, f0 } => CostOperator::local_power(*a, *p, f0.build(grid)?),
            CostSpec::NonlocalAffine {
                c0,
                c1,
                c1_relative,
                w,
            } => {
                let w = w.build(grid)?;
                let c1 = match (c1, c1_relative) {
                    (Some(c), None) => *c,
                    (None, Some(r)) => {
                        let rho = rho.ok_or_else(|| {
                            Error::Config("c1_relative needs a stationary rho".into())
                        })?;
                        r / inner(&w, &free_density(rho)?)?
                    }
                    _ => {
                        return Err(Error::Config(
                            "nonlocal_affine needs exactly one of c1, c1_relative".into(),
                        ))
                    }
                };
                CostOperator::nonlocal_affine(*c0, c1, w)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    Zero,
    HeatFromG { g: CostSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    SmoothedNorm { beta: FieldSpec },
    Quadratic { allow_outside_assumptions: bool },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub epsilons: Option<Vec<f64>>,
    pub eps0: Option<f64>,
    pub factor: Option<f64>,
    pub stages: Option<usize>,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        let s = match (&self.epsilons, self.eps0, self.factor, self.stages) {
            (Some(e), None, None, None) => e.clone(),
            (None, None, None, None) => default_schedule(),
            (None, Some(e0), Some(f), Some(n)) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Config(format!(
                        "schedule factor must lie in (0, 1), got {f}"
                    )));
                }
                geometric_schedule(e0, f, n)
            }
            _ => {
                return Err(Error::Config(
                    "schedule: give either epsilons or all of eps0, factor, stages".into(),
                ))
            }
        };
        validate_schedule(&s).map_err(|e| Error::Config(format!("schedule: {e}")))?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol_outer: Option<f64>,
    pub max_outer: Option<usize>,
    pub theta: Option<f64>,
    pub alpha_rule: Option<AlphaRule>,
    pub value_gain: Option<f64>,
    pub eta_factor: Option<f64>,
    pub delta_c: Option<f64>,
    pub obstacle_tol: Option<f64>,
    pub obstacle_max_iter: Option<usize>,
}

impl SolverSpec {
    pub fn build(&self) -> Result<CouplingConfig> {
        let d = CouplingConfig::default();
        let cfg = CouplingConfig {
            tol_outer: self.tol_outer.unwrap_or(d.tol_outer),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            theta: self.theta.unwrap_or(d.theta),
            alpha_rule: self.alpha_rule.unwrap_or(d.alpha_rule),
            eta_factor: self.eta_factor.unwrap_or(d.eta_factor),
            value_gain: self.value_gain.unwrap_or(d.value_gain),
            delta_c: self.delta_c,
            obstacle: ObstacleSolveConfig {
                tol: self.obstacle_tol.unwrap_or(d.obstacle.tol),
                max_iter: self.obstacle_max_iter.unwrap_or(d.obstacle.max_iter),
                ..d.obstacle
            },
        };
        cfg.validate()
            .map_err(|e| Error::Config(format!("solver: {e}")))?;
        if let Some(dc) = cfg.delta_c {
            if !(dc > 0.0) {
                return Err(Error::Config(format!(
                    "solver: delta_c must be positive, got {dc}"
                )));
            }
        }
        Ok(cfg)
    }
}

/// Residual thresholds. Which keys are required depends on the problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSpec {
    pub r_obstacle: Option<f64>,
    pub r_hjb: Option<f64>,
    pub r_continuation: Option<f64>,
    pub r_subsolution: Option<f64>,
    pub r_contact: Option<f64>,
    pub r_duality: Option<f64>,
    pub r_terminal: Option<f64>,
    pub r_boundary_terminal: Option<f64>,
    pub r_initial: Option<f64>,
}

impl AcceptanceSpec {
    pub fn required(problem: ProblemKind) -> &'static [&'static str] {
        match problem {
            ProblemKind::Sosmfg => &[
                "r_obstacle",
                "r_continuation",
                "r_subsolution",
                "r_contact",
                "r_duality",
            ],
            ProblemKind::Osmfg => &[
                "r_obstacle",
                "r_continuation",
                "r_subsolution",
                "r_contact",
                "r_duality",
                "r_terminal",
                "r_initial",
            ],
            ProblemKind::Cosmfg => &[
                "r_hjb",
                "r_continuation",
                "r_subsolution",
                "r_contact",
                "r_duality",
                "r_boundary_terminal",
                "r_initial",
            ],
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        match key {
            "r_obstacle" => self.r_obstacle,
            "r_hjb" => self.r_hjb,
            "r_continuation" => self.r_continuation,
            "r_subsolution" => self.r_subsolution,
            "r_contact" => self.r_contact,
            "r_duality" => self.r_duality,
            "r_terminal" => self.r_terminal,
            "r_boundary_terminal" => self.r_boundary_terminal,
            "r_initial" => self.r_initial,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub n_starts: usize,
    /// Gate on the largest pairwise gap between final densities.
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub method: Method,
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub grid: Option<GridSpec>,
    pub time: Option<TimeSpec>,
    pub cost: Option<CostSpec>,
    pub rho: Option<FieldSpec>,
    pub m0: Option<FieldSpec>,
    pub obstacle: Option<ObstacleSpec>,
    pub hamiltonian: Option<HamiltonianSpec>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    pub acceptance: AcceptanceSpec,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
}

/// 1-based line of the first line that sets `key` or opens table `key`.
fn line_of(src: &str, key: &str) -> Option<usize> {
    src.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key).is_some_and(|rest| {
                let rest = rest.trim_start();
                rest.starts_with('=') || rest.starts_with(']') || rest.starts_with('.')
            }) || t
                .strip_prefix('[')
                .is_some_and(|r| r.trim_start().starts_with(key))
        })
        .map(|i| i + 1)
}

/// A validated configuration together with the instance it describes.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub path: PathBuf,
    pub scenario: Scenario,
    pub schedule: Vec<f64>,
    pub coupling: CouplingConfig,
}

impl RunConfig {
    pub fn from_toml(src: &str) -> std::result::Result<RunConfig, toml::de::Error> {
        toml::from_str(src)
    }
}

/// Reads, parses, and validates a configuration file. Errors are
/// `Error::Config` with a `path:line:` prefix where the offending key can
/// be located.
pub fn load(path: &Path) -> Result<LoadedConfig> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    load_str(&source, path)
}

pub fn load_str(source: &str, path: &Path) -> Result<LoadedConfig> {
    let config = RunConfig::from_toml(source).map_err(|e| {
        let line = e.span().map(|s| source[..s.start].lines().count().max(1));
        let msg = e.message().to_string();
        match line {
            Some(l) => Error::Config(format!("{}:{l}: {msg}", path.display())),
            None => Error::Config(format!("{}: {msg}", path.display())),
        }
    })?;
    let anchored = |key: &str, e: Error| -> Error {
        let msg = match e {
            Error::Config(m) => m,
            other => other.to_string(),
        };
        match line_of(source, key) {
            Some(l) => Error::Config(format!("{}:{l}: {msg}", path.display())),
            None => Error::Config(format!("{}: {msg}", path.display())),
        }
    };
    validate(&config).map_err(|(key, e)| anchored(key, e))?;
    let schedule = config
        .schedule
        .build()
        .map_err(|e| anchored("schedule", e))?;
    let coupling = config.solver.build().map_err(|e| anchored("solver", e))?;
    let scenario = build_instance(&config).map_err(|(key, e)| anchored(key, e))?;
    Ok(LoadedConfig {
        config,
        source: source.to_string(),
        path: path.to_path_buf(),
        scenario,
        schedule,
        coupling,
    })
}

fn cfg_err(key: &'static str, msg: impl Into<String>) -> (&'static str, Error) {
    (key, Error::Config(msg.into()))
}

fn validate(c: &RunConfig) -> std::result::Result<(), (&'static str, Error)> {
    if c.method != Method::Continuation && c.problem != ProblemKind::Sosmfg {
        return Err(cfg_err(
            "method",
            format!("method {:?} is only available for problem sosmfg", c.method).to_lowercase(),
        ));
    }
    for key in AcceptanceSpec::required(c.problem) {
        match c.acceptance.get(key) {
            None => {
                return Err(cfg_err(
                    "acceptance",
                    format!("acceptance.{key} is required for this problem"),
                ))
            }
            Some(v) if !(v > 0.0) => {
                return Err(cfg_err(
                    "acceptance",
                    format!("acceptance.{key} must be positive, got {v}"),
                ))
            }
            _ => {}
        }
    }
    if let Some(p) = &c.probe {
        if p.n_starts < 2 || !(p.max_gap > 0.0) {
            return Err(cfg_err(
                "probe",
                "probe needs n_starts ≥ 2 and a positive max_gap",
            ));
        }
    }
    Ok(())
}

fn problem_of(s: &Scenario) -> ProblemKind {
    match s.problem {
        Problem::Stationary { .. } => ProblemKind::Sosmfg,
        Problem::Evolutive { .. } => ProblemKind::Osmfg,
        Problem::Control { .. } => ProblemKind::Cosmfg,
    }
}

fn build_instance(c: &RunConfig) -> std::result::Result<Scenario, (&'static str, Error)> {
    if let Some(name) = &c.scenario {
        let explicit = c.grid.is_some()
            || c.time.is_some()
            || c.cost.is_some()
            || c.rho.is_some()
            || c.m0.is_some()
            || c.obstacle.is_some()
            || c.hamiltonian.is_some();
        if explicit {
            return Err(cfg_err(
                "scenario",
                "scenario cannot be combined with explicit grid/cost/data sections",
            ));
        }
        let s = scenarios::scenario(name).map_err(|e| ("scenario", e))?;
        if problem_of(&s) != c.problem {
            return Err(cfg_err(
                "problem",
                format!("scenario {name} is a {:?} problem", problem_of(&s)).to_lowercase(),
            ));
        }
        return Ok(s);
    }
    let gs = c
        .grid
        .as_ref()
        .ok_or_else(|| cfg_err("grid", "missing [grid] (or a scenario)"))?;
    let dim = gs.n.len();
    let bounds = gs.bounds.clone().unwrap_or_else(|| vec![[0.0, 1.0]; dim]);
    if bounds.len() != dim {
        return Err(cfg_err("grid", "grid.bounds must have one entry per axis"));
    }
    let b: Vec<(f64, f64)> = bounds.iter().map(|x| (x[0], x[1])).collect();
    let grid = Grid::new(dim, &b, &gs.n).map_err(|e| ("grid", e))?;
    let cost_spec = c
        .cost
        .as_ref()
        .ok_or_else(|| cfg_err("cost", "missing [cost]"))?;
    let problem = match c.problem {
        ProblemKind::Sosmfg => {
            let rho = c
                .rho
                .as_ref()
                .ok_or_else(|| cfg_err("rho", "missing rho"))?
                .build(grid)
                .map_err(|e| ("rho", e))?;
            let cost = cost_spec.build(grid, Some(&rho)).map_err(|e| ("cost", e))?;
            return Ok(Scenario {
                name: "config".into(),
                grid,
                cost,
                problem: Problem::Stationary {
                    rho,
                    obstacle: None,
                },
                expected_outcome: ExpectedOutcome::UniqueMixed,
            });
        }
        ProblemKind::Osmfg | ProblemKind::Cosmfg => {
            let ts = c.time.ok_or_else(|| cfg_err("time", "missing [time]"))?;
            let timegrid = TimeGrid::new(ts.horizon, ts.n_steps).map_err(|e| ("time", e))?;
            let m0 =
                c.m0.as_ref()
                    .ok_or_else(|| cfg_err("m0", "missing m0"))?
                    .build(grid)
                    .map_err(|e| ("m0", e))?;
            if c.problem == ProblemKind::Osmfg {
                let obstacle = match c.obstacle.as_ref().unwrap_or(&ObstacleSpec::Zero) {
                    ObstacleSpec::Zero => ObstacleOperator::zero(timegrid, grid),
                    ObstacleSpec::HeatFromG { g } => ObstacleOperator::HeatFromG(
                        g.build(grid, None).map_err(|e| ("obstacle", e))?,
                    ),
                };
                Problem::Evolutive {
                    m0,
                    timegrid,
                    obstacle,
                }
            } else {
                let hs = c
                    .hamiltonian
                    .as_ref()
                    .ok_or_else(|| cfg_err("hamiltonian", "missing [hamiltonian]"))?;
                let hamiltonian = match hs {
                    HamiltonianSpec::SmoothedNorm { beta } => Hamiltonian::smoothed_norm(
                        beta.build(grid).map_err(|e| ("hamiltonian", e))?,
                    ),
                    HamiltonianSpec::Quadratic {
                        allow_outside_assumptions,
                    } => Hamiltonian::quadratic(*allow_outside_assumptions),
                }
                .map_err(|e| ("hamiltonian", e))?;
                Problem::Control {
                    m0,
                    timegrid,
                    hamiltonian,
                }
            }
        }
    };
    let cost = cost_spec.build(grid, None).map_err(|e| ("cost", e))?;
    Ok(Scenario {
        name: "config".into(),
        grid,
        cost,
        problem,
        expected_outcome: ExpectedOutcome::UniqueMixed,
    })
}
