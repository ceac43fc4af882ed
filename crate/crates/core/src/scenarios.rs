//! Canonical instances and counterexample constructions, each with an
//! evidence procedure that confirms its expected outcome.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::control::ControlMixedReport;
use crate::control::{control_uniqueness_probe, cosmfg_coupled_solve, Hamiltonian};
use crate::cost::{CostOperator, Monotonicity};
use crate::density::solve_density_on_set;
use crate::error::{Error, Result};
use crate::evolutive::{
    evolutive_uniqueness_probe, osmfg_continuation, EvolutiveMixedReport, ObstacleOperator,
};
use crate::grid::{
    apply_elliptic, default_delta_c, inner, FieldTrajectory, Grid, NodeMask, ScalarField, TimeGrid,
};
use crate::stationary::{
    continuation_solve, default_schedule, monotone_iteration_solve, uniqueness_probe, verify_mixed,
    verify_mixed_fields, CouplingConfig, MixedSolutionReport, MonotoneConfig, StageRecord,
};

/// Every name accepted by [`scenario`].
pub const REGISTRY: &[&str] = &[
    "monotone_1d",
    "monotone_2d",
    "anti_monotone_1d",
    "evolutive_psi0",
    "evolutive_heat_g",
    "control_smoothnorm",
    "nonuniqueness",
    "nonexistence",
    "nonexistence_ball",
    "obstacle_nonuniqueness",
];

/// The regression fixtures accepted by [`scenario_standard`].
pub const STANDARD: &[&str] = &[
    "monotone_1d",
    "monotone_2d",
    "anti_monotone_1d",
    "evolutive_psi0",
    "evolutive_heat_g",
    "control_smoothnorm",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOutcome {
    UniqueMixed,
    MultipleClassical,
    NoClassicalMixedExists,
    MultipleWithObstacle,
}

/// ψ(m) = u_upper·m/m* + u_lower·(m* − m)/m*, with ψ = u_lower where
/// m* < ratio_floor.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedObstacle {
    pub m_star: ScalarField,
    pub upper: ScalarField,
    pub lower: ScalarField,
    pub ratio_floor: f64,
}

impl InterpolatedObstacle {
    pub fn apply(&self, m: &ScalarField) -> Result<ScalarField> {
        let grid = *self.m_star.grid();
        if m.grid() != &grid {
            return Err(Error::InvalidInput(
                "density does not live on the obstacle grid".into(),
            ));
        }
        let (ms, up, lo, mv) = (
            self.m_star.values(),
            self.upper.values(),
            self.lower.values(),
            m.values(),
        );
        let vals = (0..grid.len())
            .map(|i| {
                if ms[i] < self.ratio_floor {
                    lo[i]
                } else {
                    let t = mv[i] / ms[i];
                    up[i] * t + lo[i] * (1.0 - t)
                }
            })
            .collect();
        ScalarField::new(grid, vals)
    }

    /// Nodes where the ratio guard replaces the interpolation.
    pub fn guarded(&self) -> NodeMask {
        let ms = self.m_star.values();
        NodeMask::from_fn(*self.m_star.grid(), |i| ms[i] < self.ratio_floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Stationary {
        rho: ScalarField,
        obstacle: Option<InterpolatedObstacle>,
    },
    Evolutive {
        m0: ScalarField,
        timegrid: TimeGrid,
        obstacle: ObstacleOperator,
    },
    Control {
        m0: ScalarField,
        timegrid: TimeGrid,
        hamiltonian: Hamiltonian,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: Grid,
    pub cost: CostOperator,
    pub problem: Problem,
    pub expected_outcome: ExpectedOutcome,
}

/// Raised cosine supported on the middle third of each axis, peak 1.
pub fn raised_cosine_bump(grid: Grid) -> ScalarField {
    let bounds = grid.bounds().to_vec();
    ScalarField::from_fn(grid, |x| {
        let mut v = 1.0;
        for (k, (a, b)) in bounds.iter().enumerate() {
            let len = b - a;
            let d = (x[k] - 0.5 * (a + b)) / len;
            v *= if d.abs() < 1.0 / 6.0 {
                0.5 * (1.0 + (6.0 * PI * d).cos())
            } else {
                0.0
            };
        }
        v
    })
}

/// Gaussian centred in Ω, normalized to mass 1.
pub fn gaussian_density(grid: Grid, sigma: f64) -> ScalarField {
    let c = grid.center();
    let dim = grid.dim();
    let raw = ScalarField::from_fn(grid, |x| {
        let r2: f64 = (0..dim).map(|k| (x[k] - c[k]).powi(2)).sum();
        (-r2 / (2.0 * sigma * sigma)).exp()
    });
    let mass = raw.mass();
    raw.scale(1.0 / mass)
}

/// f₀(x) = 1 − 1.5·exp(−|x − x_c|²/0.04): attractive in the middle,
/// repulsive near the boundary.
pub fn well_profile(grid: Grid) -> ScalarField {
    let c = grid.center();
    let dim = grid.dim();
    ScalarField::from_fn(grid, |x| {
        let r2: f64 = (0..dim).map(|k| (x[k] - c[k]).powi(2)).sum();
        1.0 - 1.5 * (-r2 / 0.04).exp()
    })
}

/// w(x) = |x − x_c|.
pub fn distance_to_center(grid: Grid) -> ScalarField {
    let c = grid.center();
    let dim = grid.dim();
    ScalarField::from_fn(grid, |x| {
        (0..dim).map(|k| (x[k] - c[k]).powi(2)).sum::<f64>().sqrt()
    })
}

/// m* = A⁻¹ρ, the density of players who never stop.
pub fn free_density(rho: &ScalarField) -> Result<ScalarField> {
    solve_density_on_set(&NodeMask::all(*rho.grid()), rho, true)
}

fn solve_a(f: &ScalarField) -> Result<ScalarField> {
    let grid = *f.grid();
    ScalarField::new(grid, grid.operator_matrix(1.0).solve(f.values())?)
}

fn stationary(
    name: &str,
    grid: Grid,
    cost: CostOperator,
    rho: ScalarField,
    outcome: ExpectedOutcome,
) -> Scenario {
    Scenario {
        name: name.into(),
        grid,
        cost,
        problem: Problem::Stationary {
            rho,
            obstacle: None,
        },
        expected_outcome: outcome,
    }
}

fn time_fixture() -> Result<(Grid, TimeGrid, ScalarField, CostOperator)> {
    let grid = Grid::line(0.0, 1.0, 31)?;
    let timegrid = TimeGrid::new(1.0, 50)?;
    let cost = CostOperator::local_power(0.1, 1.0, well_profile(grid))?;
    Ok((grid, timegrid, gaussian_density(grid, 0.1), cost))
}

fn nonlocal_with_ratio(
    grid: Grid,
    c0: f64,
    scale: f64,
) -> Result<(CostOperator, ScalarField, ScalarField)> {
    let rho = raised_cosine_bump(grid);
    let m_star = free_density(&rho)?;
    let w = distance_to_center(grid);
    let e = inner(&w, &m_star)?;
    Ok((
        CostOperator::nonlocal_affine(c0, -scale / e, w)?,
        rho,
        m_star,
    ))
}

/// Deterministic regression fixture by name.
pub fn scenario_standard(name: &str) -> Result<Scenario> {
    match name {
        "monotone_1d" => {
            let grid = Grid::line(0.0, 1.0, 31)?;
            let cost = CostOperator::local_power(1.0, 1.0, ScalarField::constant(grid, -0.5))?;
            Ok(stationary(
                name,
                grid,
                cost,
                raised_cosine_bump(grid),
                ExpectedOutcome::UniqueMixed,
            ))
        }
        "monotone_2d" => {
            let grid = Grid::square(0.0, 1.0, 31)?;
            let cost = CostOperator::local_power(1.0, 1.0, well_profile(grid))?;
            Ok(stationary(
                name,
                grid,
                cost,
                raised_cosine_bump(grid),
                ExpectedOutcome::UniqueMixed,
            ))
        }
        "anti_monotone_1d" => {
            let grid = Grid::line(0.0, 1.0, 31)?;
            let (cost, rho, _) = nonlocal_with_ratio(grid, 0.1, 0.2)?;
            Ok(stationary(
                name,
                grid,
                cost,
                rho,
                ExpectedOutcome::MultipleClassical,
            ))
        }
        "evolutive_psi0" | "evolutive_heat_g" => {
            let (grid, timegrid, m0, cost) = time_fixture()?;
            let obstacle = if name == "evolutive_psi0" {
                ObstacleOperator::zero(timegrid, grid)
            } else {
                ObstacleOperator::HeatFromG(CostOperator::local_power(
                    0.05,
                    1.0,
                    ScalarField::constant(grid, -0.05),
                )?)
            };
            Ok(Scenario {
                name: name.into(),
                grid,
                cost,
                problem: Problem::Evolutive {
                    m0,
                    timegrid,
                    obstacle,
                },
                expected_outcome: ExpectedOutcome::UniqueMixed,
            })
        }
        "control_smoothnorm" => {
            let (grid, timegrid, m0, cost) = time_fixture()?;
            Ok(Scenario {
                name: name.into(),
                grid,
                cost,
                problem: Problem::Control {
                    m0,
                    timegrid,
                    hamiltonian: Hamiltonian::smoothed_norm(ScalarField::constant(grid, 1.0))?,
                },
                expected_outcome: ExpectedOutcome::UniqueMixed,
            })
        }
        _ => Err(Error::UnknownScenario(name.into())),
    }
}

/// Any registered scenario, built on its default grid.
pub fn scenario(name: &str) -> Result<Scenario> {
    match name {
        "nonuniqueness" => build_nonuniqueness(Grid::line(0.0, 1.0, 31)?),
        "nonexistence" => build_nonexistence(Grid::line(0.0, 1.0, 31)?, NonexistenceVariant::Point),
        "nonexistence_ball" => {
            build_nonexistence(Grid::line(0.0, 1.0, 31)?, NonexistenceVariant::Ball)
        }
        "obstacle_nonuniqueness" => {
            let grid = Grid::line(0.0, 1.0, 31)?;
            let cost = CostOperator::local_power(1.0, 1.0, ScalarField::constant(grid, -0.5))?;
            build_obstacle_nonuniqueness(cost, raised_cosine_bump(grid))
        }
        _ => scenario_standard(name),
    }
}

/// f(m) = 1 − 2E(m)/E(m*) with E(m) = ⟨|x − x_c|, m⟩.
pub fn build_nonuniqueness(grid: Grid) -> Result<Scenario> {
    let (cost, rho, _) = nonlocal_with_ratio(grid, 1.0, 2.0)?;
    Ok(stationary(
        "nonuniqueness",
        grid,
        cost,
        rho,
        ExpectedOutcome::MultipleClassical,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonexistenceVariant {
    /// u* vanishes at the centre node only.
    Point,
    /// u* vanishes on the nodes within one cell of the centre.
    Ball,
}

/// Amplitude of u* in the non-existence construction.
pub const NONEXISTENCE_AMPLITUDE: f64 = 1e-4;

/// u* = −s·Π sin(π x_k)·(1 − exp(−d²/(2·0.04))), with d the distance to
/// the centre node (minus the ball radius for the ball variant).
pub fn nonexistence_profile(grid: Grid, variant: NonexistenceVariant) -> ScalarField {
    let c = grid.center();
    let dim = grid.dim();
    let h = grid.spacing()[0];
    let radius = match variant {
        NonexistenceVariant::Point => 0.0,
        NonexistenceVariant::Ball => 1.5 * h,
    };
    let bounds = grid.bounds().to_vec();
    ScalarField::from_fn(grid, |x| {
        let mut s = 1.0;
        for (k, (a, b)) in bounds.iter().enumerate() {
            s *= (PI * (x[k] - a) / (b - a)).sin();
        }
        let r = (0..dim).map(|k| (x[k] - c[k]).powi(2)).sum::<f64>().sqrt();
        let d = (r - radius).max(0.0);
        -NONEXISTENCE_AMPLITUDE * s * (1.0 - (-d * d / 0.08).exp())
    })
}

/// f(m) = A u* + m − m*.
pub fn build_nonexistence(grid: Grid, variant: NonexistenceVariant) -> Result<Scenario> {
    let rho = raised_cosine_bump(grid);
    let m_star = free_density(&rho)?;
    let u_star = nonexistence_profile(grid, variant);
    let cost = CostOperator::local_affine_shifted(apply_elliptic(&u_star), m_star)?;
    let name = match variant {
        NonexistenceVariant::Point => "nonexistence",
        NonexistenceVariant::Ball => "nonexistence_ball",
    };
    Ok(stationary(
        name,
        grid,
        cost,
        rho,
        ExpectedOutcome::NoClassicalMixedExists,
    ))
}

/// Obstacle ψ(m) interpolating between u* = A⁻¹f(m*) at m* and
/// u_* = A⁻¹f(0) at 0.
pub fn build_obstacle_nonuniqueness(cost: CostOperator, rho: ScalarField) -> Result<Scenario> {
    if cost.monotonicity() != Monotonicity::StrictMonotone {
        return Err(Error::InvalidInput(
            "the obstacle construction needs a strictly monotone cost".into(),
        ));
    }
    let grid = *rho.grid();
    let m_star = free_density(&rho)?;
    let upper = solve_a(&cost.evaluate(&m_star)?)?;
    let lower = solve_a(&cost.evaluate(&ScalarField::zeros(grid))?)?;
    let ratio_floor = 1e-10 * m_star.max();
    let obstacle = InterpolatedObstacle {
        m_star,
        upper,
        lower,
        ratio_floor,
    };
    let guarded = obstacle.guarded().count();
    if guarded > 0 {
        return Err(Error::InvalidInput(format!(
            "ratio guard triggered at {guarded} interior nodes carrying mass; refine the grid"
        )));
    }
    Ok(Scenario {
        name: "obstacle_nonuniqueness".into(),
        grid,
        cost,
        problem: Problem::Stationary {
            rho,
            obstacle: Some(obstacle),
        },
        expected_outcome: ExpectedOutcome::MultipleWithObstacle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: Bound::AtMost,
            threshold,
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: Bound::AtLeast,
            threshold,
            passed: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum Report {
    Stationary(MixedSolutionReport),
    Evolutive(EvolutiveMixedReport),
    Control(ControlMixedReport),
}

impl Report {
    pub fn max_residual(&self) -> f64 {
        match self {
            Report::Stationary(r) => r.max_residual(),
            Report::Evolutive(r) => r.max_residual(),
            Report::Control(r) => r.max_residual(),
        }
    }

    /// Largest violation of the density subsolution inequality.
    pub fn r_subsolution(&self) -> f64 {
        match self {
            Report::Stationary(r) => r.r_subsolution,
            Report::Evolutive(r) => r.r_subsolution,
            Report::Control(r) => r.r_subsolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Everything an evidence run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub scenario: String,
    pub expected_outcome: ExpectedOutcome,
    pub checks: Vec<Check>,
    pub fields: Vec<(String, ScalarField)>,
    pub trajectories: Vec<(String, FieldTrajectory)>,
    pub reports: Vec<(String, Report)>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl Evidence {
    fn new(s: &Scenario) -> Self {
        Evidence {
            scenario: s.name.clone(),
            expected_outcome: s.expected_outcome,
            checks: Vec::new(),
            fields: Vec::new(),
            trajectories: Vec::new(),
            reports: Vec::new(),
            tables: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn confirmed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// Density fields (stationary names start with `m`).
    pub fn densities(&self) -> impl Iterator<Item = &ScalarField> {
        self.fields
            .iter()
            .filter(|(n, _)| n.starts_with('m'))
            .map(|(_, f)| f)
    }

    pub fn density_trajectories(&self) -> impl Iterator<Item = &FieldTrajectory> {
        self.trajectories
            .iter()
            .filter(|(n, _)| n.starts_with('m'))
            .map(|(_, f)| f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceOptions {
    pub schedule: Vec<f64>,
    pub config: CouplingConfig,
    pub n_starts: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for EvidenceOptions {
    fn default() -> Self {
        EvidenceOptions {
            schedule: default_schedule(),
            config: CouplingConfig::default(),
            n_starts: 5,
            seed: 0,
            threads: 1,
        }
    }
}

/// Convergence table rows: stage, ε, iterations, then the given residuals.
fn stage_table(stages: &[StageRecord]) -> Table {
    Table {
        name: "convergence".into(),
        header: [
            "stage",
            "epsilon",
            "iterations",
            "r_obstacle",
            "r_continuation",
            "r_subsolution",
            "r_contact",
            "r_duality",
        ]
        .map(String::from)
        .to_vec(),
        rows: stages
            .iter()
            .map(|s| {
                let r = &s.report;
                vec![
                    s.stage as f64,
                    s.epsilon,
                    s.iterations as f64,
                    r.r_obstacle,
                    r.r_continuation,
                    r.r_subsolution,
                    r.r_contact,
                    r.r_duality,
                ]
            })
            .collect(),
    }
}

fn push_report_checks(ev: &mut Evidence, label: &str, r: &MixedSolutionReport, tol: f64) {
    for (name, v) in [
        ("r_obstacle", r.r_obstacle),
        ("r_continuation", r.r_continuation),
        ("r_subsolution", r.r_subsolution),
        ("r_contact", r.r_contact),
        ("r_duality", r.r_duality),
    ] {
        ev.checks
            .push(Check::at_most(format!("{label} {name}"), v, tol));
    }
}

/// Runs the evidence procedure of a scenario.
pub fn run_evidence(s: &Scenario, opts: &EvidenceOptions) -> Result<Evidence> {
    match (&s.problem, s.expected_outcome) {
        (
            Problem::Stationary {
                rho,
                obstacle: None,
            },
            ExpectedOutcome::UniqueMixed,
        ) => unique_stationary(s, rho, opts),
        (
            Problem::Stationary {
                rho,
                obstacle: None,
            },
            ExpectedOutcome::MultipleClassical,
        ) => {
            if s.name == "anti_monotone_1d" {
                anti_monotone_evidence(s, rho, opts)
            } else {
                nonuniqueness_evidence(s, rho)
            }
        }
        (
            Problem::Stationary {
                rho,
                obstacle: None,
            },
            ExpectedOutcome::NoClassicalMixedExists,
        ) => nonexistence_evidence(s, rho, opts),
        (
            Problem::Stationary {
                rho,
                obstacle: Some(obstacle),
            },
            ExpectedOutcome::MultipleWithObstacle,
        ) => obstacle_evidence(s, rho, obstacle),
        (
            Problem::Evolutive {
                m0,
                timegrid,
                obstacle,
            },
            ExpectedOutcome::UniqueMixed,
        ) => unique_evolutive(s, m0, timegrid, obstacle, opts),
        (
            Problem::Control {
                m0,
                timegrid,
                hamiltonian,
            },
            ExpectedOutcome::UniqueMixed,
        ) => unique_control(s, m0, timegrid, hamiltonian, opts),
        _ => Err(Error::InvalidInput(format!(
            "scenario {} has no evidence procedure",
            s.name
        ))),
    }
}

fn unique_stationary(s: &Scenario, rho: &ScalarField, opts: &EvidenceOptions) -> Result<Evidence> {
    let mut ev = Evidence::new(s);
    let res = continuation_solve(&s.cost, rho, &opts.schedule, &opts.config)?;
    push_report_checks(&mut ev, "continuation", &res.report, 1e-6);
    let probe = uniqueness_probe(
        &s.cost,
        rho,
        opts.n_starts,
        opts.seed,
        &opts.schedule,
        &opts.config,
        opts.threads,
    )?;
    ev.checks.push(Check::at_most(
        "uniqueness gap",
        probe.max_pairwise_gap,
        1e-5,
    ));
    ev.tables.push(stage_table(&res.stages));
    ev.reports
        .push(("continuation".into(), Report::Stationary(res.report)));
    ev.fields.extend([
        ("u".into(), res.u),
        ("m".into(), res.m),
        ("alpha".into(), res.alpha),
    ]);
    Ok(ev)
}

fn anti_monotone_evidence(
    s: &Scenario,
    rho: &ScalarField,
    opts: &EvidenceOptions,
) -> Result<Evidence> {
    let mut ev = Evidence::new(s);
    let mono = monotone_iteration_solve(&s.cost, rho, &MonotoneConfig::default())?;
    let zero = ScalarField::zeros(s.grid);
    let mono_report = verify_mixed(
        &mono.u,
        &mono.m,
        &s.cost,
        rho,
        default_delta_c(&mono.u, &zero),
    )?;
    let cont = continuation_solve(&s.cost, rho, &opts.schedule, &opts.config)?;
    ev.checks.push(Check::at_most(
        "monotone m_n decrease",
        mono.max_m_decrease,
        1e-10,
    ));
    ev.checks.push(Check::at_most(
        "monotone u_n increase",
        mono.max_u_increase,
        1e-10,
    ));
    ev.checks.push(Check::at_most(
        "monotone iterations",
        mono.iterations as f64,
        50.0,
    ));
    let excess = mono
        .m
        .values()
        .iter()
        .zip(cont.m.values())
        .fold(f64::NEG_INFINITY, |a: f64, (x, y)| a.max(x - y));
    ev.checks
        .push(Check::at_most("smallest minus continuation", excess, 1e-6));
    push_report_checks(&mut ev, "smallest", &mono_report, 1e-6);
    push_report_checks(&mut ev, "continuation", &cont.report, 1e-6);
    let gap = mono.m.dist_inf(&cont.m)?;
    ev.checks.push(Check::at_least(
        "solution gap",
        gap,
        0.5 * cont.m.norm_inf(),
    ));
    ev.tables.push(stage_table(&cont.stages));
    ev.reports
        .push(("smallest".into(), Report::Stationary(mono_report)));
    ev.reports
        .push(("continuation".into(), Report::Stationary(cont.report)));
    ev.fields.extend([
        ("u_smallest".into(), mono.u),
        ("m_smallest".into(), mono.m),
        ("u_continuation".into(), cont.u),
        ("m_continuation".into(), cont.m),
    ]);
    Ok(ev)
}

fn nonuniqueness_evidence(s: &Scenario, rho: &ScalarField) -> Result<Evidence> {
    let mut ev = Evidence::new(s);
    let grid = s.grid;
    let zero = ScalarField::zeros(grid);
    let m_star = free_density(rho)?;
    let f_star = s.cost.evaluate(&m_star)?;
    let f_zero = s.cost.evaluate(&zero)?;
    ev.checks.push(Check::at_most(
        "|f(m*) + 1|",
        f_star.map(|v| v + 1.0).norm_inf(),
        1e-12,
    ));
    ev.checks.push(Check::at_most(
        "|f(0) - 1|",
        f_zero.map(|v| v - 1.0).norm_inf(),
        1e-12,
    ));
    let u_star = solve_a(&f_star)?;
    let dc = default_delta_c(&u_star, &zero);
    let contact = u_star.values().iter().filter(|v| **v >= -dc).count();
    if contact > 0 {
        return Err(Error::InvalidInput(format!(
            "u* touches the obstacle at {contact} nodes; refine the grid"
        )));
    }
    let r_zero = verify_mixed(&zero, &zero, &s.cost, rho, default_delta_c(&zero, &zero))?;
    let r_star = verify_mixed(&u_star, &m_star, &s.cost, rho, dc)?;
    push_report_checks(&mut ev, "(0, 0)", &r_zero, 1e-8);
    push_report_checks(&mut ev, "(u*, m*)", &r_star, 1e-8);
    ev.checks.push(Check::at_least(
        "solution gap",
        m_star.dist_inf(&zero)?,
        0.5 * m_star.norm_inf(),
    ));
    ev.reports.push(("zero".into(), Report::Stationary(r_zero)));
    ev.reports.push(("star".into(), Report::Stationary(r_star)));
    ev.fields.extend([
        ("u_zero".into(), zero.clone()),
        ("m_zero".into(), zero),
        ("u_star".into(), u_star),
        ("m_star".into(), m_star),
    ]);
    Ok(ev)
}

fn nonexistence_evidence(
    s: &Scenario,
    rho: &ScalarField,
    opts: &EvidenceOptions,
) -> Result<Evidence> {
    let mut ev = Evidence::new(s);
    let m_star = free_density(rho)?;
    let base = match s.cost.kind() {
        crate::cost::CostKind::LocalAffineShifted { base, .. } => base.clone(),
        _ => {
            return Err(Error::InvalidInput(
                "non-existence needs a shifted affine cost".into(),
            ))
        }
    };
    let u_star = solve_a(&base)?;
    ev.checks.push(Check::at_most(
        "|A u* - f(m*)|",
        apply_elliptic(&u_star).dist_inf(&s.cost.evaluate(&m_star)?)?,
        1e-12,
    ));
    ev.checks
        .push(Check::at_least("min m*", m_star.min(), f64::MIN_POSITIVE));
    let res = continuation_solve(&s.cost, rho, &opts.schedule, &opts.config)?;
    push_report_checks(&mut ev, "final", &res.report, 1e-5);
    let mut rows = Vec::new();
    for st in &res.stages {
        let r = &st.report;
        let ratio = if r.r_contact > 0.0 {
            r.contact_mass / r.r_contact
        } else {
            f64::INFINITY
        };
        ev.checks.push(Check::at_least(
            format!("stage {} contact mass / r_contact", st.stage),
            ratio,
            10.0,
        ));
        rows.push(vec![
            st.stage as f64,
            st.epsilon,
            r.max_residual(),
            r.r_contact,
            r.contact_mass,
            ratio,
        ]);
    }
    ev.tables.push(Table {
        name: "residual_floor".into(),
        header: [
            "stage",
            "epsilon",
            "max_mixed_residual",
            "r_contact",
            "contact_mass",
            "ratio",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    });
    ev.tables.push(stage_table(&res.stages));
    ev.notes.push(
        "The contact-mass floor is numerical evidence on one grid that m does not vanish on the contact set; it is not a proof."
            .into(),
    );
    ev.reports
        .push(("continuation".into(), Report::Stationary(res.report)));
    ev.fields.extend([
        ("u".into(), res.u),
        ("m".into(), res.m),
        ("alpha".into(), res.alpha),
        ("u_star".into(), u_star),
        ("m_star".into(), m_star),
    ]);
    Ok(ev)
}

fn obstacle_evidence(
    s: &Scenario,
    rho: &ScalarField,
    obstacle: &InterpolatedObstacle,
) -> Result<Evidence> {
    let mut ev = Evidence::new(s);
    let zero = ScalarField::zeros(s.grid);
    let m_star = &obstacle.m_star;
    let psi_star = obstacle.apply(m_star)?;
    let psi_zero = obstacle.apply(&zero)?;
    ev.checks.push(Check::at_most(
        "|psi(m*) - u*|",
        psi_star.dist_inf(&obstacle.upper)?,
        0.0,
    ));
    ev.checks.push(Check::at_most(
        "|psi(0) - u_*|",
        psi_zero.dist_inf(&obstacle.lower)?,
        0.0,
    ));
    let f_star = s.cost.evaluate(m_star)?;
    let f_zero = s.cost.evaluate(&zero)?;
    let dc_star = default_delta_c(&obstacle.upper, &psi_star).max(1e-12);
    let r_star = verify_mixed_fields(&obstacle.upper, m_star, &f_star, rho, &psi_star, dc_star)?;
    let r_zero = verify_mixed_fields(&obstacle.lower, &zero, &f_zero, rho, &psi_zero, 1e-12)?;
    push_report_checks(&mut ev, "(u*, m*)", &r_star, 1e-8);
    push_report_checks(&mut ev, "(u_*, 0)", &r_zero, 1e-8);
    ev.checks.push(Check::at_least(
        "solution gap",
        m_star.dist_inf(&zero)?,
        0.5 * m_star.norm_inf(),
    ));
    ev.reports.push(("star".into(), Report::Stationary(r_star)));
    ev.reports.push(("zero".into(), Report::Stationary(r_zero)));
    ev.fields.extend([
        ("u_star".into(), obstacle.upper.clone()),
        ("m_star".into(), m_star.clone()),
        ("u_lower".into(), obstacle.lower.clone()),
        ("m_zero".into(), zero),
    ]);
    Ok(ev)
}

fn unique_evolutive(
    s: &Scenario,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    obstacle: &ObstacleOperator,
    opts: &EvidenceOptions,
) -> Result<Evidence> {
    let mut ev = Evidence::new(s);
    let res = osmfg_continuation(
        &s.cost,
        obstacle,
        m0,
        timegrid,
        &opts.schedule,
        &opts.config,
    )?;
    let r = res.report;
    ev.checks
        .push(Check::at_most("r_duality", r.r_duality, 1e-5));
    ev.checks
        .push(Check::at_most("max residual", r.max_residual(), 1e-5));
    let probe = evolutive_uniqueness_probe(
        &s.cost,
        obstacle,
        m0,
        timegrid,
        opts.n_starts,
        opts.seed,
        &opts.schedule,
        &opts.config,
        opts.threads,
    )?;
    ev.checks.push(Check::at_most(
        "uniqueness gap",
        probe.max_pairwise_gap,
        1e-4,
    ));
    ev.tables.push(Table {
        name: "convergence".into(),
        header: [
            "stage",
            "epsilon",
            "iterations",
            "r_obstacle",
            "r_continuation",
            "r_subsolution",
            "r_contact",
            "r_duality",
        ]
        .map(String::from)
        .to_vec(),
        rows: res
            .stages
            .iter()
            .map(|st| {
                let q = &st.report;
                vec![
                    st.stage as f64,
                    st.epsilon,
                    st.iterations as f64,
                    q.r_obstacle,
                    q.r_continuation,
                    q.r_subsolution,
                    q.r_contact,
                    q.r_duality,
                ]
            })
            .collect(),
    });
    ev.reports
        .push(("continuation".into(), Report::Evolutive(r)));
    let sol = res.solution;
    ev.trajectories.extend([
        ("u".into(), sol.u),
        ("m".into(), sol.m),
        ("psi".into(), sol.psi),
        ("alpha".into(), sol.alpha),
    ]);
    Ok(ev)
}

fn unique_control(
    s: &Scenario,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    hamiltonian: &Hamiltonian,
    opts: &EvidenceOptions,
) -> Result<Evidence> {
    let mut ev = Evidence::new(s);
    let res = cosmfg_coupled_solve(
        &s.cost,
        hamiltonian,
        m0,
        timegrid,
        &opts.schedule,
        &opts.config,
    )?;
    let r = res.report;
    ev.checks
        .push(Check::at_most("max residual", r.max_residual(), 1e-5));
    let probe = control_uniqueness_probe(
        &s.cost,
        hamiltonian,
        m0,
        timegrid,
        opts.n_starts,
        opts.seed,
        &opts.schedule,
        &opts.config,
        opts.threads,
    )?;
    ev.checks.push(Check::at_most(
        "uniqueness gap",
        probe.max_pairwise_gap,
        1e-4,
    ));
    ev.tables.push(Table {
        name: "convergence".into(),
        header: [
            "stage",
            "epsilon",
            "iterations",
            "r_hjb",
            "r_continuation",
            "r_subsolution",
            "r_contact",
            "r_duality",
        ]
        .map(String::from)
        .to_vec(),
        rows: res
            .stages
            .iter()
            .map(|st| {
                let q = &st.report;
                vec![
                    st.stage as f64,
                    st.epsilon,
                    st.iterations as f64,
                    q.r_hjb,
                    q.r_continuation,
                    q.r_subsolution,
                    q.r_contact,
                    q.r_duality,
                ]
            })
            .collect(),
    });
    ev.reports.push(("continuation".into(), Report::Control(r)));
    ev.trajectories.extend([
        ("u".into(), res.u),
        ("m".into(), res.m),
        ("alpha".into(), res.alpha),
    ]);
    Ok(ev)
}

/// Builds and runs the non-uniqueness counterexample on its default grid.
pub fn scenario_nonuniqueness() -> Result<(Scenario, Evidence)> {
    let s = scenario("nonuniqueness")?;
    let ev = run_evidence(&s, &EvidenceOptions::default())?;
    Ok((s, ev))
}

/// Builds and runs the non-existence counterexample on its default grid.
pub fn scenario_nonexistence(variant: NonexistenceVariant) -> Result<(Scenario, Evidence)> {
    let s = build_nonexistence(Grid::line(0.0, 1.0, 31)?, variant)?;
    let ev = run_evidence(&s, &EvidenceOptions::default())?;
    Ok((s, ev))
}

/// Builds and verifies the obstacle counterexample for a strictly
/// monotone cost.
pub fn scenario_obstacle_nonuniqueness(
    cost: CostOperator,
    rho: ScalarField,
) -> Result<(Scenario, Evidence)> {
    let s = build_obstacle_nonuniqueness(cost, rho)?;
    let ev = run_evidence(&s, &EvidenceOptions::default())?;
    Ok((s, ev))
}
