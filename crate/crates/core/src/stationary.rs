//! The stationary coupled system: penalized Picard solver with α update,
//! ε-continuation, monotone iteration for anti-monotone costs, the relaxed
//! variational problem, the mixed-solution verifier, and multi-start probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostOperator, Monotonicity, PotentialOperator};
use crate::density::{solve_density_on_set, solve_density_penalized, KillingData};
use crate::error::{Error, Result};
use crate::grid::{
    apply_elliptic, classify_nodes, default_delta_c, inner, Grid, NodeMask, ScalarField,
};
use crate::obstacle::{penalized_newton, solve_obstacle_stationary, ObstacleSolveConfig};

/// How α is updated where the value function is not clearly positive.
///
/// Both rules set α = 1 where u > δ_c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// α ← clamp(α + γ·u/ε) wherever u ≤ δ_c, with killing α/ε applied at
    /// every node. Fixed points have α = 0 where u < 0 and u = 0 where
    /// 0 < α < 1, which is exactly the penalized system.
    ValueAscent,
    /// α ← clamp(α + η·f(m)) on the band |u| ≤ δ_c, α = 0 below it, and
    /// killing only on {u ≥ −δ_c}.
    CostAscent,
}

/// Settings of the damped Picard coupling, shared by the stationary,
/// evolutive and control solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Stop when ‖m_{k+1} − m_k‖_∞ ≤ tol_outer.
    pub tol_outer: f64,
    pub max_outer: usize,
    /// Damping of the m update.
    pub theta: f64,
    /// Update rule for α on nodes that are not clearly in contact.
    pub alpha_rule: AlphaRule,
    /// Step of the cost-ascent rule is η = eta_factor·ε.
    pub eta_factor: f64,
    /// Gain of the value-ascent rule.
    pub value_gain: f64,
    /// Contact band; `None` uses the default rule per iterate.
    pub delta_c: Option<f64>,
    pub obstacle: ObstacleSolveConfig,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            tol_outer: 1e-11,
            max_outer: 5000,
            theta: 0.5,
            alpha_rule: AlphaRule::ValueAscent,
            eta_factor: 0.1,
            value_gain: 1.0,
            delta_c: None,
            obstacle: ObstacleSolveConfig::default(),
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_outer > 0.0) || self.max_outer == 0 {
            return Err(Error::InvalidInput(
                "tol_outer and max_outer must be positive".into(),
            ));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if !(self.eta_factor >= 0.0) || !(self.value_gain > 0.0) {
            return Err(Error::InvalidInput(
                "eta_factor must be nonnegative and value_gain positive".into(),
            ));
        }
        if let Some(d) = self.delta_c {
            if !(d >= 0.0) {
                return Err(Error::InvalidInput("delta_c must be nonnegative".into()));
            }
        }
        self.obstacle.validate()
    }
}

/// Geometric ε schedule ε_j = eps0·factor^j, j = 0..stages.
pub fn geometric_schedule(eps0: f64, factor: f64, stages: usize) -> Vec<f64> {
    (0..stages).map(|j| eps0 * factor.powi(j as i32)).collect()
}

/// The default schedule 0.1·4^{−j}, ten stages.
pub fn default_schedule() -> Vec<f64> {
    geometric_schedule(0.1, 0.25, 10)
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidInput("empty epsilon schedule".into()));
    }
    if schedule.iter().any(|e| !(*e > 0.0)) || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput(
            "epsilon schedule must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedTriple {
    pub u: ScalarField,
    pub m: ScalarField,
    pub alpha: ScalarField,
    pub epsilon: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub delta_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub dim: usize,
    pub n_interior: [usize; 2],
    pub bounds: [(f64, f64); 2],
    pub spacing: [f64; 2],
}

impl GridMeta {
    pub fn of(grid: &Grid) -> Self {
        let mut meta = GridMeta {
            dim: grid.dim(),
            n_interior: [1; 2],
            bounds: [(0.0, 0.0); 2],
            spacing: [0.0; 2],
        };
        for k in 0..grid.dim() {
            meta.n_interior[k] = grid.n_interior()[k];
            meta.bounds[k] = grid.bounds()[k];
            meta.spacing[k] = grid.spacing()[k];
        }
        meta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedSolutionReport {
    pub r_obstacle: f64,
    pub r_continuation: f64,
    pub r_subsolution: f64,
    pub r_contact: f64,
    pub r_duality: f64,
    /// |Σ_contact (f(m) − A u) m h^d|: the contact sum with the discrete
    /// free-boundary term A(u − ψ) removed (diagnostic, not gated).
    pub r_contact_interface: f64,
    pub contact_nodes: usize,
    /// Σ_contact m h^d: the mass a classical solution would have to put to
    /// zero (diagnostic).
    pub contact_mass: f64,
    /// Contact nodes with a continuation neighbour.
    pub near_interface_nodes: usize,
    pub delta_c: f64,
    pub grid: GridMeta,
}

/// Acceptance thresholds for the five gated residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedThresholds {
    pub r_obstacle: f64,
    pub r_continuation: f64,
    pub r_subsolution: f64,
    pub r_contact: f64,
    pub r_duality: f64,
}

impl MixedThresholds {
    pub fn uniform(t: f64) -> Self {
        MixedThresholds {
            r_obstacle: t,
            r_continuation: t,
            r_subsolution: t,
            r_contact: t,
            r_duality: t,
        }
    }
}

impl MixedSolutionReport {
    pub fn max_residual(&self) -> f64 {
        self.r_obstacle
            .max(self.r_continuation)
            .max(self.r_subsolution)
            .max(self.r_contact)
            .max(self.r_duality)
    }

    pub fn passes(&self, t: &MixedThresholds) -> bool {
        self.r_obstacle <= t.r_obstacle
            && self.r_continuation <= t.r_continuation
            && self.r_subsolution <= t.r_subsolution
            && self.r_contact <= t.r_contact
            && self.r_duality <= t.r_duality
    }
}

fn near_interface(grid: &Grid, contact: &NodeMask) -> usize {
    (0..grid.len())
        .filter(|&i| {
            contact.get(i)
                && (0..grid.dim()).any(|k| {
                    [false, true]
                        .iter()
                        .any(|&fwd| grid.neighbor(i, k, fwd).is_some_and(|j| !contact.get(j)))
                })
        })
        .count()
}

/// Residuals of the mixed-solution conditions for (u, m) with obstacle 0.
pub fn verify_mixed(
    u: &ScalarField,
    m: &ScalarField,
    cost: &CostOperator,
    rho: &ScalarField,
    delta_c: f64,
) -> Result<MixedSolutionReport> {
    let fm = cost.evaluate(m)?;
    verify_mixed_fields(u, m, &fm, rho, &ScalarField::zeros(*u.grid()), delta_c)
}

/// Residuals for the stationary system with a fixed obstacle field ψ and a
/// precomputed cost value f(m). The contact condition becomes
/// Σ_contact (f(m) − A ψ) m = 0 and the duality identity
/// ⟨f(m) − A ψ, m⟩ = ⟨u − ψ, ρ⟩.
pub fn verify_mixed_fields(
    u: &ScalarField,
    m: &ScalarField,
    fm: &ScalarField,
    rho: &ScalarField,
    psi: &ScalarField,
    delta_c: f64,
) -> Result<MixedSolutionReport> {
    let grid = *u.grid();
    for f in [m, fm, rho, psi] {
        if f.grid() != &grid {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
    }
    let (cont, contact) = classify_nodes(u, psi, delta_c)?;
    let au = apply_elliptic(u);
    let am = apply_elliptic(m);
    let apsi = apply_elliptic(psi);
    let (uv, mv, fv, rv, pv) = (
        u.values(),
        m.values(),
        fm.values(),
        rho.values(),
        psi.values(),
    );
    let (auv, amv, apv) = (au.values(), am.values(), apsi.values());
    let hd = grid.cell_measure();
    let mut r_obstacle: f64 = 0.0;
    let mut r_continuation: f64 = 0.0;
    let mut r_subsolution: f64 = 0.0;
    let mut contact_sum = 0.0;
    let mut interface_sum = 0.0;
    let mut contact_mass = 0.0;
    for i in 0..grid.len() {
        r_obstacle = r_obstacle.max((pv[i] - uv[i]).min(fv[i] - auv[i]).abs());
        if cont.get(i) {
            r_continuation = r_continuation.max((amv[i] - rv[i]).abs());
        } else {
            contact_sum += (fv[i] - apv[i]) * mv[i];
            interface_sum += (fv[i] - auv[i]) * mv[i];
            contact_mass += mv[i];
        }
        r_subsolution = r_subsolution.max(amv[i] - rv[i]);
    }
    let shifted: ScalarField = fm.sub(&apsi)?;
    let v = u.sub(psi)?;
    let r_duality = (inner(&shifted, m)? - inner(&v, rho)?).abs();
    Ok(MixedSolutionReport {
        r_obstacle,
        r_continuation,
        r_subsolution,
        r_contact: (contact_sum * hd).abs(),
        r_duality,
        r_contact_interface: (interface_sum * hd).abs(),
        contact_nodes: contact.count(),
        contact_mass: contact_mass * hd,
        near_interface_nodes: near_interface(&grid, &contact),
        delta_c,
        grid: GridMeta::of(&grid),
    })
}

fn check_rho(rho: &ScalarField) -> Result<()> {
    if let Some(v) = rho.values().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "rho must be nonnegative, found {v}"
        )));
    }
    Ok(())
}

/// Starting point of a penalized solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub m: ScalarField,
    pub alpha: ScalarField,
    pub u: Option<ScalarField>,
}

/// Damped Picard iteration for the penalized system
/// A u + (1/ε) u⁺ = f(m), (A + (α/ε) 1_{u≥0}) m = ρ.
///
/// Starts from m = A⁻¹ρ and α = 0 unless a warm start is given.
pub fn penalized_coupled_solve(
    cost: &CostOperator,
    rho: &ScalarField,
    epsilon: f64,
    config: &CouplingConfig,
) -> Result<PenalizedTriple> {
    penalized_coupled_solve_from(cost, rho, epsilon, config, None)
}

pub fn penalized_coupled_solve_from(
    cost: &CostOperator,
    rho: &ScalarField,
    epsilon: f64,
    config: &CouplingConfig,
    start: Option<&WarmStart>,
) -> Result<PenalizedTriple> {
    config.validate()?;
    check_rho(rho)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let grid = *rho.grid();
    let n = grid.len();
    let a = grid.operator_matrix(1.0);
    let zero = vec![0.0; n];
    let (mut m, mut alpha, mut u_prev) = match start {
        Some(s) => (
            s.m.clone(),
            s.alpha.clone(),
            s.u.as_ref().map(|u| u.values().to_vec()),
        ),
        None => (
            ScalarField::new(grid, a.solve(rho.values())?)?,
            ScalarField::zeros(grid),
            None,
        ),
    };
    let tol = config.obstacle.tol;
    let mut history = Vec::new();
    let solve_u = |m: &ScalarField, start: Option<&[f64]>| -> Result<(ScalarField, ScalarField)> {
        let fm = cost.evaluate(m)?;
        let u = penalized_newton(&a, fm.values(), &zero, epsilon, tol, 200, start)?;
        Ok((ScalarField::new(grid, u)?, fm))
    };
    for it in 0..config.max_outer {
        let (u, fm) = solve_u(&m, u_prev.as_deref())?;
        let dc = config
            .delta_c
            .unwrap_or_else(|| default_delta_c(&u, &ScalarField::zeros(grid)));
        let (uv, fv) = (u.values(), fm.values());
        let active = update_alpha(alpha.values_mut(), uv, fv, dc, epsilon, config);
        let killing = KillingData::new(alpha.clone(), NodeMask::new(grid, active)?, epsilon)?;
        let m_half = solve_density_penalized(&killing, rho, true)?;
        let diff = m_half.dist_inf(&m)?;
        history.push(diff);
        u_prev = Some(u.values().to_vec());
        if diff <= config.tol_outer {
            // Finish with the undamped half step so the m equation holds
            // exactly, then refresh u against it.
            let (u_fin, _) = solve_u(&m_half, u_prev.as_deref())?;
            let dc_fin = config
                .delta_c
                .unwrap_or_else(|| default_delta_c(&u_fin, &ScalarField::zeros(grid)));
            let uf = u_fin.values();
            let same_sets = (0..n)
                .all(|i| (uf[i] >= -dc_fin) == (uv[i] >= -dc) && (uf[i] > dc_fin) == (uv[i] > dc));
            if same_sets {
                return Ok(PenalizedTriple {
                    u: u_fin,
                    m: m_half,
                    alpha,
                    epsilon,
                    iterations: it + 1,
                    residual_history: history,
                    delta_c: dc_fin,
                });
            }
        }
        let theta = config.theta;
        m = m.zip_map(&m_half, |a, b| (1.0 - theta) * a + theta * b)?;
    }
    let last = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NoConvergence {
        solver: "penalized coupled Picard",
        iterations: config.max_outer,
        residual: last,
        history,
    })
}

/// Applies one α update in place and returns the killing mask.
pub(crate) fn update_alpha(
    alpha: &mut [f64],
    u: &[f64],
    f: &[f64],
    delta_c: f64,
    epsilon: f64,
    config: &CouplingConfig,
) -> Vec<bool> {
    let n = alpha.len();
    match config.alpha_rule {
        AlphaRule::ValueAscent => {
            let gain = config.value_gain / epsilon;
            for i in 0..n {
                alpha[i] = if u[i] > delta_c {
                    1.0
                } else {
                    (alpha[i] + gain * u[i]).clamp(0.0, 1.0)
                };
            }
            vec![true; n]
        }
        AlphaRule::CostAscent => {
            let eta = config.eta_factor * epsilon;
            for i in 0..n {
                alpha[i] = if u[i] > delta_c {
                    1.0
                } else if u[i] >= -delta_c {
                    (alpha[i] + eta * f[i]).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
            u.iter().map(|v| *v >= -delta_c).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub report: MixedSolutionReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationResult {
    pub u: ScalarField,
    pub m: ScalarField,
    pub alpha: ScalarField,
    pub report: MixedSolutionReport,
    pub stages: Vec<StageRecord>,
}

/// Warm-started penalized solves along a decreasing ε schedule.
pub fn continuation_solve(
    cost: &CostOperator,
    rho: &ScalarField,
    schedule: &[f64],
    config: &CouplingConfig,
) -> Result<ContinuationResult> {
    continuation_solve_from(cost, rho, schedule, config, None)
}

pub fn continuation_solve_from(
    cost: &CostOperator,
    rho: &ScalarField,
    schedule: &[f64],
    config: &CouplingConfig,
    initial_m: Option<&ScalarField>,
) -> Result<ContinuationResult> {
    validate_schedule(schedule)?;
    let mut warm = initial_m.map(|m| WarmStart {
        m: m.clone(),
        alpha: ScalarField::zeros(*rho.grid()),
        u: None,
    });
    let mut stages = Vec::with_capacity(schedule.len());
    let mut last = None;
    for (j, &eps) in schedule.iter().enumerate() {
        let triple =
            penalized_coupled_solve_from(cost, rho, eps, config, warm.as_ref()).map_err(|e| {
                Error::Stage {
                    stage: j,
                    epsilon: eps,
                    source: Box::new(e),
                }
            })?;
        let report = verify_mixed(&triple.u, &triple.m, cost, rho, triple.delta_c)?;
        stages.push(StageRecord {
            stage: j,
            epsilon: eps,
            iterations: triple.iterations,
            report,
        });
        warm = Some(WarmStart {
            m: triple.m.clone(),
            alpha: triple.alpha.clone(),
            u: Some(triple.u.clone()),
        });
        last = Some((triple, report));
    }
    let (triple, report) = last.expect("schedule is nonempty");
    Ok(ContinuationResult {
        u: triple.u,
        m: triple.m,
        alpha: triple.alpha,
        report,
        stages,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub delta_c: Option<f64>,
    pub obstacle: ObstacleSolveConfig,
}

impl Default for MonotoneConfig {
    fn default() -> Self {
        MonotoneConfig {
            tol: 1e-10,
            max_iter: 50,
            delta_c: None,
            obstacle: ObstacleSolveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneResult {
    pub u: ScalarField,
    pub m: ScalarField,
    pub iterations: usize,
    pub m_history: Vec<ScalarField>,
    pub u_history: Vec<ScalarField>,
    /// Largest nodewise decrease of m_n and increase of u_n observed.
    pub max_m_decrease: f64,
    pub max_u_increase: f64,
}

/// Ordered iteration m_{n+1} = density on {u(m_n) < 0}, from m₀ = 0.
pub fn monotone_iteration_solve(
    cost: &CostOperator,
    rho: &ScalarField,
    config: &MonotoneConfig,
) -> Result<MonotoneResult> {
    if cost.monotonicity() != Monotonicity::AntiMonotone {
        return Err(Error::InvalidInput(
            "monotone iteration requires an anti-monotone cost".into(),
        ));
    }
    check_rho(rho)?;
    let grid = *rho.grid();
    let zero = ScalarField::zeros(grid);
    let mut m = zero.clone();
    let mut m_history = vec![m.clone()];
    let mut u_history: Vec<ScalarField> = Vec::new();
    let mut max_m_decrease: f64 = 0.0;
    let mut max_u_increase: f64 = 0.0;
    for it in 0..config.max_iter {
        let u = solve_obstacle_stationary(&cost.evaluate(&m)?, &zero, &config.obstacle)?;
        if let Some(prev) = u_history.last() {
            let inc = u
                .values()
                .iter()
                .zip(prev.values())
                .fold(0.0, |a: f64, (x, y)| a.max(x - y));
            max_u_increase = max_u_increase.max(inc);
            if inc > config.tol {
                return Err(Error::Monotonicity {
                    iteration: it,
                    detail: format!("u increased by {inc:.3e}"),
                });
            }
        }
        let dc = config.delta_c.unwrap_or_else(|| default_delta_c(&u, &zero));
        let omega = NodeMask::from_fn(grid, |i| u.values()[i] < -dc);
        let next = solve_density_on_set(&omega, rho, true)?;
        let dec = m
            .values()
            .iter()
            .zip(next.values())
            .fold(0.0, |a: f64, (x, y)| a.max(x - y));
        max_m_decrease = max_m_decrease.max(dec);
        if dec > config.tol {
            return Err(Error::Monotonicity {
                iteration: it,
                detail: format!("m decreased by {dec:.3e}"),
            });
        }
        let diff = next.dist_inf(&m)?;
        u_history.push(u.clone());
        m_history.push(next.clone());
        m = next;
        if diff <= config.tol {
            let u = solve_obstacle_stationary(&cost.evaluate(&m)?, &zero, &config.obstacle)?;
            return Ok(MonotoneResult {
                u,
                m,
                iterations: it + 1,
                m_history,
                u_history,
                max_m_decrease,
                max_u_increase,
            });
        }
    }
    Err(Error::NoConvergence {
        solver: "monotone iteration",
        iterations: config.max_iter,
        residual: m_history.windows(2).last().map_or(f64::INFINITY, |w| {
            w[1].dist_inf(&w[0]).unwrap_or(f64::INFINITY)
        }),
        history: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalConfig {
    /// Target for ‖A m + s − ρ‖_∞.
    pub feasibility_tol: f64,
    /// Target for the projected-gradient norm of each inner problem.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty0: f64,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        VariationalConfig {
            feasibility_tol: 1e-10,
            inner_tol: 1e-12,
            max_outer: 60,
            max_inner: 500,
            penalty0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult {
    pub m: ScalarField,
    pub slack: ScalarField,
    pub multiplier: ScalarField,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// max(‖A m + s − ρ‖_∞, max(−m), max(A m − ρ)).
    pub feasibility: f64,
    pub objective: f64,
}

/// Minimizes Σ 𝓕(x_i, m_i) h^d over {m ≥ 0, A m ≤ ρ}.
///
/// Augmented Lagrangian on the equality A m + s = ρ with bounds m, s ≥ 0.
/// The slack is minimized in closed form, s = max(0, ρ − A m − λ/μ), and the
/// remaining bound-constrained problem in m is solved by projected
/// gradient steps in the metric of the generalized Hessian (projected
/// Newton) with an Armijo search along the projection arc.
pub fn variational_minimize(
    potential: &PotentialOperator,
    rho: &ScalarField,
    config: &VariationalConfig,
) -> Result<VariationalResult> {
    if !potential.is_strictly_convex() {
        return Err(Error::InvalidInput(
            "variational solver requires a strictly convex potential".into(),
        ));
    }
    check_rho(rho)?;
    let grid = *rho.grid();
    let n = grid.len();
    let a = grid.operator_matrix(1.0);
    let at = a.transpose();
    let rv = rho.values();
    let mut m = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    let mut mu = config.penalty0;
    let mut inner_total = 0;
    let slack_of = |m: &[f64], lambda: &[f64], mu: f64| -> Vec<f64> {
        let am = a.mul_vec(m);
        (0..n)
            .map(|i| (rv[i] - am[i] - lambda[i] / mu).max(0.0))
            .collect()
    };
    let constraint = |m: &[f64], s: &[f64]| -> Vec<f64> {
        let am = a.mul_vec(m);
        (0..n).map(|i| am[i] + s[i] - rv[i]).collect()
    };
    let mut c_norm = f64::INFINITY;
    for outer in 0..config.max_outer {
        inner_total += projected_newton(potential, &a, &at, rv, &lambda, mu, &mut m, config)?;
        let s = slack_of(&m, &lambda, mu);
        let c = constraint(&m, &s);
        let new_norm = crate::grid::norm_inf(&c);
        for i in 0..n {
            lambda[i] += mu * c[i];
        }
        if new_norm > 0.25 * c_norm {
            mu = (mu * 10.0).min(1e10);
        }
        c_norm = new_norm;
        if c_norm <= config.feasibility_tol {
            let am = a.mul_vec(&m);
            let sub = (0..n).fold(0.0, |v: f64, i| v.max(am[i] - rv[i]));
            let neg = m.iter().fold(0.0, |v: f64, mi| v.max(-mi));
            let field = ScalarField::new(grid, m)?;
            return Ok(VariationalResult {
                objective: potential.total(&field),
                m: field,
                slack: ScalarField::new(grid, s)?,
                multiplier: ScalarField::new(grid, lambda)?,
                outer_iterations: outer + 1,
                inner_iterations: inner_total,
                feasibility: c_norm.max(sub).max(neg),
            });
        }
    }
    Err(Error::NoConvergence {
        solver: "augmented Lagrangian",
        iterations: config.max_outer,
        residual: c_norm,
        history: Vec::new(),
    })
}

/// Inner solve of min_{m ≥ 0} Σ𝓕(m) + (μ/2)‖max(0, A m − ρ + λ/μ)‖².
fn projected_newton(
    potential: &PotentialOperator,
    a: &crate::linalg::BandMatrix,
    at: &crate::linalg::BandMatrix,
    rho: &[f64],
    lambda: &[f64],
    mu: f64,
    m: &mut [f64],
    config: &VariationalConfig,
) -> Result<usize> {
    let n = m.len();
    let bw = a.upper_bandwidth();
    let value_grad = |m: &[f64]| -> (f64, Vec<f64>, Vec<bool>) {
        let am = a.mul_vec(m);
        let r: Vec<f64> = (0..n)
            .map(|i| (am[i] - rho[i] + lambda[i] / mu).max(0.0))
            .collect();
        let atr = at.mul_vec(&r);
        let mut val = 0.0;
        let mut g = vec![0.0; n];
        for i in 0..n {
            val += potential.pointwise(i, m[i]) + 0.5 * mu * r[i] * r[i];
            g[i] = potential.derivative(i, m[i]) + mu * atr[i];
        }
        (val, g, r.iter().map(|v| *v > 0.0).collect())
    };
    for v in m.iter_mut() {
        *v = v.max(0.0);
    }
    let (mut val, mut g, mut on) = value_grad(m);
    for it in 0..config.max_inner {
        let pg = (0..n).fold(0.0, |p: f64, i| {
            p.max(((m[i] - g[i]).max(0.0) - m[i]).abs())
        });
        let scale = 1.0 + g.iter().fold(0.0, |p: f64, v| p.max(v.abs()));
        if pg <= config.inner_tol * scale {
            return Ok(it);
        }
        let eps_bound = pg.min(1e-10);
        let bound: Vec<bool> = (0..n).map(|i| m[i] <= eps_bound && g[i] > 0.0).collect();
        // Generalized Hessian diag(f') + μ Aᵀ D A on the free set.
        let mut hmat = crate::linalg::BandMatrix::zeros(n, 2 * bw, 2 * bw);
        for k in 0..n {
            if !on[k] {
                continue;
            }
            let lo = k.saturating_sub(bw);
            let hi = (k + bw).min(n - 1);
            for i in lo..=hi {
                let aki = a.get(k, i);
                if aki == 0.0 {
                    continue;
                }
                for j in lo..=hi {
                    let akj = a.get(k, j);
                    if akj != 0.0 {
                        hmat.add(i, j, mu * aki * akj);
                    }
                }
            }
        }
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            hmat.add(i, i, potential.second_derivative(i, m[i]).max(1e-12));
            rhs[i] = -g[i];
        }
        for i in 0..n {
            if bound[i] {
                hmat.set_identity_row(i);
                rhs[i] = -g[i];
            }
        }
        // Decouple free rows from bound unknowns.
        for i in 0..n {
            if bound[i] {
                continue;
            }
            let lo = i.saturating_sub(2 * bw);
            let hi = (i + 2 * bw).min(n - 1);
            for j in lo..=hi {
                if bound[j] {
                    let hij = hmat.get(i, j);
                    if hij != 0.0 {
                        hmat.set(i, j, 0.0);
                    }
                }
            }
        }
        let d = hmat.solve(&rhs)?;
        let slope_free: f64 = (0..n).filter(|&i| !bound[i]).map(|i| g[i] * d[i]).sum();
        let mut t = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; n];
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = (m[i] + t * d[i]).max(0.0);
            }
            let (tv, tg, ton) = value_grad(&trial);
            let bound_decrease: f64 = (0..n)
                .filter(|&i| bound[i])
                .map(|i| g[i] * (m[i] - trial[i]))
                .sum();
            if tv <= val + 1e-4 * (t * slope_free - bound_decrease)
                || (val - tv).abs() <= 1e-15 * val.abs().max(1.0)
            {
                m.copy_from_slice(&trial);
                val = tv;
                g = tg;
                on = ton;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(it + 1);
        }
    }
    Ok(config.max_inner)
}

/// Feasible test densities for the Euler–Lagrange certificate:
/// 0, A⁻¹ρ, exclusion-set solves on random sets, and convex combinations.
pub fn feasible_battery(rho: &ScalarField, n_random: usize, seed: u64) -> Result<Vec<ScalarField>> {
    let grid = *rho.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        ScalarField::zeros(grid),
        solve_density_on_set(&NodeMask::all(grid), rho, true)?,
    ];
    for _ in 0..n_random {
        let keep: f64 = rng.gen_range(0.2..0.9);
        let mask: Vec<bool> = (0..grid.len()).map(|_| rng.gen::<f64>() < keep).collect();
        out.push(solve_density_on_set(
            &NodeMask::new(grid, mask)?,
            rho,
            true,
        )?);
    }
    let base = out.len();
    for j in 0..base {
        let k = (j + 1) % base;
        let t: f64 = rng.gen_range(0.1..0.9);
        let c = out[j].zip_map(&out[k], |a, b| t * a + (1.0 - t) * b)?;
        out.push(c);
    }
    Ok(out)
}

/// min over the battery of ⟨f(m), m′ − m⟩.
pub fn euler_lagrange_certificate(
    cost: &CostOperator,
    m: &ScalarField,
    battery: &[ScalarField],
) -> Result<f64> {
    let fm = cost.evaluate(m)?;
    let mut worst = f64::INFINITY;
    for mp in battery {
        worst = worst.min(inner(&fm, &mp.sub(m)?)?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessResult {
    pub max_pairwise_gap: f64,
    pub solutions: Vec<ScalarField>,
}

/// Randomized starting densities: scaled, nodewise-perturbed copies of A⁻¹ρ.
pub fn random_start(rho: &ScalarField, seed: u64) -> Result<ScalarField> {
    let base = solve_density_on_set(&NodeMask::all(*rho.grid()), rho, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: f64 = rng.gen_range(0.0..2.0);
    let values = base
        .values()
        .iter()
        .map(|v| v * scale * rng.gen_range(0.5..1.5))
        .collect();
    ScalarField::new(*rho.grid(), values)
}

/// Seeds used for start j of a probe with base seed `seed`.
pub fn start_seeds(seed: u64, n_starts: usize) -> Vec<u64> {
    (0..n_starts as u64)
        .map(|j| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(j))
        .collect()
}

pub fn max_pairwise_gap(solutions: &[ScalarField]) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for a in 0..solutions.len() {
        for b in a + 1..solutions.len() {
            gap = gap.max(solutions[a].dist_inf(&solutions[b])?);
        }
    }
    Ok(gap)
}

/// Runs `f` over the inputs on `threads` workers (1 = sequential), keeping
/// input order in the output.
pub fn run_indexed<T: Sync, R: Send>(
    inputs: &[T],
    threads: usize,
    f: impl Fn(&T) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    if threads <= 1 {
        return inputs.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| inputs.par_iter().map(f).collect())
}

/// Multi-start continuation; returns the largest pairwise ‖m_a − m_b‖_∞.
pub fn uniqueness_probe(
    cost: &CostOperator,
    rho: &ScalarField,
    n_starts: usize,
    seed: u64,
    schedule: &[f64],
    config: &CouplingConfig,
    threads: usize,
) -> Result<UniquenessResult> {
    if n_starts < 2 {
        return Err(Error::InvalidInput(
            "uniqueness probe needs at least 2 starts".into(),
        ));
    }
    uniqueness_probe_with_seeds(
        cost,
        rho,
        &start_seeds(seed, n_starts),
        schedule,
        config,
        threads,
    )
}

pub fn uniqueness_probe_with_seeds(
    cost: &CostOperator,
    rho: &ScalarField,
    seeds: &[u64],
    schedule: &[f64],
    config: &CouplingConfig,
    threads: usize,
) -> Result<UniquenessResult> {
    let solutions = run_indexed(seeds, threads, |&s| {
        let start = random_start(rho, s)?;
        continuation_solve_from(cost, rho, schedule, config, Some(&start)).map(|r| r.m)
    })?;
    Ok(UniquenessResult {
        max_pairwise_gap: max_pairwise_gap(&solutions)?,
        solutions,
    })
}
