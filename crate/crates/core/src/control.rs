//! The controlled system: convex Hamiltonians and their upwind
//! discretization, the HJB obstacle equation, the drifted Fokker–Planck
//! coupling, the verifier, and the Fenchel-conjugate control objective.

use serde::{Deserialize, Serialize};

use crate::cost::{CostOperator, PotentialOperator};
use crate::density::{fokker_planck_matrix, solve_density_parabolic, KillingData, UpwindDrift};
use crate::error::{Error, Result};
use crate::evolutive::{
    self, max_trajectory_gap, random_start_trajectory, TimeSolution, TrajectoryUniqueness,
};
use crate::grid::{default_delta_c, inner, FieldTrajectory, Grid, ScalarField, TimeGrid};
use crate::stationary::{run_indexed, start_seeds, validate_schedule, CouplingConfig, GridMeta};

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianKind {
    /// H(x, p) = β(x)(√(1 + |p|²) − 1).
    SmoothedNorm { beta: ScalarField },
    /// H(x, p) = |p|²/2, outside the Lipschitz assumption.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    kind: HamiltonianKind,
}

impl Hamiltonian {
    pub fn smoothed_norm(beta: ScalarField) -> Result<Self> {
        if let Some(b) = beta
            .values()
            .iter()
            .find(|b| !(**b >= 0.0 && b.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "beta must be finite and nonnegative, found {b}"
            )));
        }
        Ok(Hamiltonian {
            kind: HamiltonianKind::SmoothedNorm { beta },
        })
    }

    /// The quadratic Hamiltonian is not globally Lipschitz; callers must
    /// opt in explicitly.
    pub fn quadratic(allow_outside_assumptions: bool) -> Result<Self> {
        if !allow_outside_assumptions {
            return Err(Error::InvalidInput(
                "the quadratic Hamiltonian is not globally Lipschitz; set the outside-assumptions flag to use it".into(),
            ));
        }
        Ok(Hamiltonian {
            kind: HamiltonianKind::Quadratic,
        })
    }

    pub fn kind(&self) -> &HamiltonianKind {
        &self.kind
    }

    pub fn is_outside_assumptions(&self) -> bool {
        matches!(self.kind, HamiltonianKind::Quadratic)
    }

    fn beta(&self, i: usize) -> f64 {
        match &self.kind {
            HamiltonianKind::SmoothedNorm { beta } => beta.values()[i],
            HamiltonianKind::Quadratic => f64::INFINITY,
        }
    }

    /// φ(r²) and φ'(r²)·2 as a function of the squared gradient norm, so
    /// that H = φ and ∂H/∂p = dphi·p.
    fn profile(&self, i: usize, r2: f64) -> (f64, f64) {
        match &self.kind {
            HamiltonianKind::SmoothedNorm { beta } => {
                let b = beta.values()[i];
                let s = (1.0 + r2).sqrt();
                (b * (s - 1.0), b / s)
            }
            HamiltonianKind::Quadratic => (0.5 * r2, 1.0),
        }
    }

    /// H(x_i, p).
    pub fn value(&self, i: usize, p: &[f64]) -> f64 {
        self.profile(i, p.iter().map(|v| v * v).sum()).0
    }

    /// D_pH(x_i, p).
    pub fn gradient(&self, i: usize, p: &[f64]) -> Vec<f64> {
        let (_, d) = self.profile(i, p.iter().map(|v| v * v).sum());
        p.iter().map(|v| d * v).collect()
    }

    /// H(x_i, 0) (zero for both kinds).
    pub fn at_zero(&self, i: usize) -> f64 {
        self.profile(i, 0.0).0
    }

    /// Closed-form conjugate L(x_i, a) = sup_p (a·p − H(x_i, p)); +∞ outside
    /// the domain |a| < β.
    pub fn conjugate(&self, i: usize, a2: f64) -> f64 {
        match &self.kind {
            HamiltonianKind::SmoothedNorm { .. } => {
                let b = self.beta(i);
                if b == 0.0 {
                    return if a2 == 0.0 { 0.0 } else { f64::INFINITY };
                }
                let q = a2 / (b * b);
                if q >= 1.0 {
                    f64::INFINITY
                } else {
                    b * (1.0 - (1.0 - q).sqrt())
                }
            }
            HamiltonianKind::Quadratic => 0.5 * a2,
        }
    }

    /// Upwind numerical Hamiltonian of a nodal field and its drift
    /// coefficients: with p_f = D⁺v and p_b = D⁻v per axis,
    /// H_h = φ(Σ (p_f⁻)² + (p_b⁺)²), neg = ∂H_h/∂p_f, pos = ∂H_h/∂p_b.
    pub fn numerical(&self, grid: &Grid, v: &[f64]) -> (Vec<f64>, UpwindDrift) {
        let n = grid.len();
        let mut values = vec![0.0; n];
        let mut drift = UpwindDrift::zeros(grid);
        let mut pf = [0.0; 2];
        let mut pb = [0.0; 2];
        for i in 0..n {
            let mut r2 = 0.0;
            for k in 0..grid.dim() {
                let h = grid.spacing()[k];
                let right = grid.neighbor(i, k, true).map_or(0.0, |j| v[j]);
                let left = grid.neighbor(i, k, false).map_or(0.0, |j| v[j]);
                pf[k] = ((right - v[i]) / h).min(0.0);
                pb[k] = ((v[i] - left) / h).max(0.0);
                r2 += pf[k] * pf[k] + pb[k] * pb[k];
            }
            let (phi, d) = self.profile(i, r2);
            values[i] = phi;
            for k in 0..grid.dim() {
                drift.neg[k][i] = d * pf[k];
                drift.pos[k][i] = d * pb[k];
            }
        }
        (values, drift)
    }
}

/// L(x, a) = sup_p (a·p − H(x, p)) by maximization over a bounded lattice
/// followed by coordinate refinement; +∞ when |a| ≥ β for smoothed_norm.
pub fn fenchel_conjugate(hamiltonian: &Hamiltonian, i: usize, a: &[f64]) -> f64 {
    let a2: f64 = a.iter().map(|v| v * v).sum();
    if let HamiltonianKind::SmoothedNorm { .. } = hamiltonian.kind {
        let b = hamiltonian.beta(i);
        if a2 >= b * b && a2 > 0.0 {
            return f64::INFINITY;
        }
    }
    let objective = |p: &[f64]| -> f64 {
        a.iter().zip(p).map(|(x, y)| x * y).sum::<f64>() - hamiltonian.value(i, p)
    };
    let d = a.len();
    // The maximizer of the smoothed norm sits at |p| = |a|/√(β² − |a|²);
    // the lattice radius covers it for |a| ≤ 0.999β.
    let radius = 50.0;
    let steps = if d == 1 { 20_000 } else { 400 };
    let mut best = vec![0.0; d];
    let mut best_val = objective(&best);
    let mut p = vec![0.0; d];
    let total = if d == 1 {
        steps + 1
    } else {
        (steps + 1) * (steps + 1)
    };
    for idx in 0..total {
        let mut rem = idx;
        for pk in p.iter_mut() {
            *pk = -radius + 2.0 * radius * (rem % (steps + 1)) as f64 / steps as f64;
            rem /= steps + 1;
        }
        let v = objective(&p);
        if v > best_val {
            best_val = v;
            best.copy_from_slice(&p);
        }
    }
    let mut step = 2.0 * radius / steps as f64;
    while step > 1e-12 {
        let mut improved = false;
        for k in 0..d {
            for s in [-step, step] {
                let mut q = best.clone();
                q[k] += s;
                let v = objective(&q);
                if v > best_val {
                    best_val = v;
                    best = q;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best_val
}

/// Discrete conjugate of the upwind Hamiltonian at node i, evaluated on
/// the drift coefficients (|a|² = Σ_axes neg² + pos²).
pub fn discrete_lagrangian(hamiltonian: &Hamiltonian, drift: &UpwindDrift, i: usize) -> f64 {
    hamiltonian.conjugate(i, drift.speed_sq(i))
}

/// Backward penalized HJB:
/// (u_{k−1} − u_k)/dt − Δ_h u_{k−1} + H_h(D u_{k−1}) + (1/ε) u_{k−1}⁺ = f(m_k),
/// u(T) = 0. The Hamiltonian is linearized at the previous inner iterate.
pub fn solve_hjb_obstacle(
    m: &FieldTrajectory,
    cost: &CostOperator,
    hamiltonian: &Hamiltonian,
    timegrid: &TimeGrid,
    epsilon: f64,
    config: &CouplingConfig,
) -> Result<FieldTrajectory> {
    let grid = *m.grid();
    let source: Vec<Vec<f64>> = (1..=timegrid.n_steps())
        .map(|k| cost.evaluate(m.slice(k)).map(ScalarField::into_values))
        .collect::<Result<_>>()?;
    let (v, _) = evolutive::backward_sweep(
        &grid,
        timegrid,
        &source,
        epsilon,
        Some(hamiltonian),
        config,
        None,
    )?;
    evolutive::to_trajectory(timegrid, &grid, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlMixedReport {
    pub r_hjb: f64,
    pub r_continuation: f64,
    pub r_subsolution: f64,
    pub r_contact: f64,
    pub r_boundary_terminal: f64,
    pub r_initial: f64,
    /// |Σ dt ⟨f(m_k) + L(a_k), m_k⟩ − ⟨u_0, m_0⟩| (diagnostic).
    pub r_duality: f64,
    /// Σ dt ⟨(−∂_t − Δ + a·∇)u, m⟩ − ⟨u(0), m_0⟩ with φ = u (diagnostic;
    /// nonnegative for subsolutions with u ≤ 0).
    pub subsolution_gap: f64,
    pub delta_c: f64,
    pub grid: GridMeta,
    pub n_steps: usize,
    pub horizon: f64,
}

impl ControlMixedReport {
    pub fn max_residual(&self) -> f64 {
        self.r_hjb
            .max(self.r_continuation)
            .max(self.r_subsolution)
            .max(self.r_contact)
            .max(self.r_boundary_terminal)
            .max(self.r_initial)
    }
}

/// Residuals of the mixed-solution conditions for the controlled system.
/// Slice pairing: the step producing m_k uses the drift and contact set of
/// u_{k−1}, and the HJB step producing u_{k−1} uses f(m_k).
pub fn verify_cosmfg(
    u: &FieldTrajectory,
    m: &FieldTrajectory,
    cost: &CostOperator,
    hamiltonian: &Hamiltonian,
    m0: &ScalarField,
    delta_c: Option<f64>,
) -> Result<ControlMixedReport> {
    let grid = *u.grid();
    let tg = *u.timegrid();
    let n_steps = tg.n_steps();
    let dt = tg.dt();
    let hd = grid.cell_measure();
    let zero = ScalarField::zeros(grid);
    let b = grid.operator_matrix(1.0 / dt);
    let lap = grid.operator_matrix(0.0);
    let mut r_hjb: f64 = 0.0;
    let mut r_continuation: f64 = 0.0;
    let mut r_subsolution: f64 = 0.0;
    let mut contact_sum = 0.0;
    let mut dual_sum = 0.0;
    let mut subsolution_sum = 0.0;
    let mut dc_used: f64 = 0.0;
    for k in 1..=n_steps {
        let up = u.slice(k - 1).values();
        let uk = u.slice(k).values();
        let mk = m.slice(k).values();
        let mprev = m.slice(k - 1).values();
        let fm = cost.evaluate(m.slice(k))?;
        let (hv, drift) = hamiltonian.numerical(&grid, up);
        let bu = b.mul_vec(up);
        let dc = delta_c.unwrap_or_else(|| default_delta_c(u.slice(k - 1), &zero));
        dc_used = dc_used.max(dc);
        let fp = fokker_planck_matrix(&grid, dt, &vec![0.0; grid.len()], Some(&drift));
        let fpm = fp.mul_vec(mk);
        let adv_u = drift.apply_advection(&grid, up);
        let lu = lap.mul_vec(up);
        for i in 0..grid.len() {
            let rhs = uk[i] / dt + fm.values()[i];
            r_hjb = r_hjb.max((-up[i]).min(rhs - bu[i] - hv[i]).abs());
            // fp includes I/dt; remove m_{k−1}/dt to get the step residual.
            let res = fpm[i] - mprev[i] / dt;
            if up[i] < -dc {
                r_continuation = r_continuation.max(res.abs());
            } else {
                contact_sum += (fm.values()[i] - hamiltonian.at_zero(i)) * mk[i];
            }
            r_subsolution = r_subsolution.max(res);
            dual_sum += (fm.values()[i] + hamiltonian.conjugate(i, drift.speed_sq(i))
                - hamiltonian.at_zero(i))
                * mk[i];
            subsolution_sum += ((up[i] - uk[i]) / dt + lu[i] + adv_u[i]) * mk[i];
        }
    }
    let u0m0 = inner(u.slice(0), m.slice(0))?;
    Ok(ControlMixedReport {
        r_hjb,
        r_continuation,
        r_subsolution,
        r_contact: (contact_sum * hd * dt).abs(),
        r_boundary_terminal: u.slice(n_steps).norm_inf(),
        r_initial: m.slice(0).dist_inf(m0)?,
        r_duality: (dual_sum * hd * dt - u0m0).abs(),
        subsolution_gap: subsolution_sum * hd * dt - u0m0,
        delta_c: dc_used,
        grid: GridMeta::of(&grid),
        n_steps,
        horizon: tg.horizon(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlResult {
    pub u: FieldTrajectory,
    pub m: FieldTrajectory,
    /// Slice k holds the α used in the step producing m_k (slice 0 is 0).
    pub alpha: FieldTrajectory,
    /// drift[k−1] is the drift of the step producing m_k.
    pub drift: Vec<UpwindDrift>,
    pub killing: Vec<KillingData>,
    pub report: ControlMixedReport,
    pub stages: Vec<ControlStage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlStage {
    pub stage: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub report: ControlMixedReport,
}

/// Forward–backward penalized solve of the controlled system along an ε
/// schedule.
pub fn cosmfg_coupled_solve(
    cost: &CostOperator,
    hamiltonian: &Hamiltonian,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    schedule: &[f64],
    config: &CouplingConfig,
) -> Result<ControlResult> {
    cosmfg_coupled_solve_from(cost, hamiltonian, m0, timegrid, schedule, config, None)
}

pub fn cosmfg_coupled_solve_from(
    cost: &CostOperator,
    hamiltonian: &Hamiltonian,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    schedule: &[f64],
    config: &CouplingConfig,
    initial_m: Option<&FieldTrajectory>,
) -> Result<ControlResult> {
    validate_schedule(schedule)?;
    let grid = *m0.grid();
    let source = |m: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        (1..m.len())
            .map(|k| {
                cost.evaluate(&ScalarField::new(grid, m[k].clone())?)
                    .map(ScalarField::into_values)
            })
            .collect()
    };
    let mut warm: Option<TimeSolution> = initial_m.map(|m| TimeSolution::from_density(m, timegrid));
    let mut stages = Vec::with_capacity(schedule.len());
    let mut last = None;
    for (j, &eps) in schedule.iter().enumerate() {
        let sol = evolutive::forward_backward(
            m0,
            timegrid,
            eps,
            Some(hamiltonian),
            config,
            &source,
            warm.as_ref(),
        )
        .map_err(|e| Error::Stage {
            stage: j,
            epsilon: eps,
            source: Box::new(e),
        })?;
        let u = evolutive::to_trajectory(timegrid, &grid, sol.v.clone())?;
        let m = evolutive::to_trajectory(timegrid, &grid, sol.m.clone())?;
        let report = verify_cosmfg(&u, &m, cost, hamiltonian, m0, config.delta_c)?;
        stages.push(ControlStage {
            stage: j,
            epsilon: eps,
            iterations: sol.iterations,
            report,
        });
        last = Some((sol, u, m, report));
        warm = last.as_ref().map(|l| l.0.clone());
    }
    let (sol, u, m, report) = last.expect("schedule is nonempty");
    let alpha = sol.alpha_trajectory(timegrid, &grid)?;
    let killing = sol.killing(&grid)?;
    Ok(ControlResult {
        u,
        m,
        alpha,
        drift: sol.drift.unwrap_or_default(),
        killing,
        report,
        stages,
    })
}

/// Σ_k dt h^d Σ_i (𝓕(m_k) − H(x,0) m_k + L(x, a_k) m_k) over k = 1..N.
///
/// The pair must be feasible: every forward step residual
/// (m_k − m_{k−1})/dt − Δ_h m_k + Advᵀ_k m_k must be ≤ `tol`.
pub fn control_objective(
    m: &FieldTrajectory,
    drift: &[UpwindDrift],
    potential: &PotentialOperator,
    hamiltonian: &Hamiltonian,
    tol: f64,
) -> Result<f64> {
    let grid = *m.grid();
    let tg = *m.timegrid();
    let dt = tg.dt();
    if drift.len() != tg.n_steps() {
        return Err(Error::Shape {
            expected: tg.n_steps(),
            got: drift.len(),
        });
    }
    let zero = vec![0.0; grid.len()];
    let mut bad = Vec::new();
    let mut total = 0.0;
    for k in 1..=tg.n_steps() {
        drift[k - 1].validate(&grid)?;
        let mk = m.slice(k).values();
        let fp = fokker_planck_matrix(&grid, dt, &zero, Some(&drift[k - 1]));
        let r = fp.mul_vec(mk);
        let prev = m.slice(k - 1).values();
        let worst = (0..grid.len()).fold(f64::NEG_INFINITY, |w: f64, i| w.max(r[i] - prev[i] / dt));
        if worst > tol {
            bad.push(format!("slice {k} (residual {worst:.3e})"));
        }
        for i in 0..grid.len() {
            total += potential.pointwise(i, mk[i]) - hamiltonian.at_zero(i) * mk[i]
                + if mk[i] == 0.0 {
                    0.0
                } else {
                    discrete_lagrangian(hamiltonian, &drift[k - 1], i) * mk[i]
                };
        }
    }
    if !bad.is_empty() {
        return Err(Error::Infeasible(bad.join(", ")));
    }
    Ok(total * grid.cell_measure() * dt)
}

/// Density produced by a given drift with a fixed killing schedule; the
/// pair is feasible for `control_objective` by construction.
pub fn density_for_control(
    m0: &ScalarField,
    killing: &[KillingData],
    drift: &[UpwindDrift],
    timegrid: &TimeGrid,
) -> Result<FieldTrajectory> {
    solve_density_parabolic(m0, Some(killing), Some(drift), timegrid)
}

/// Multi-start solve of the controlled system; returns the largest
/// pairwise gap between the final density trajectories.
#[allow(clippy::too_many_arguments)]
pub fn control_uniqueness_probe(
    cost: &CostOperator,
    hamiltonian: &Hamiltonian,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    n_starts: usize,
    seed: u64,
    schedule: &[f64],
    config: &CouplingConfig,
    threads: usize,
) -> Result<TrajectoryUniqueness> {
    if n_starts < 2 {
        return Err(Error::InvalidInput(
            "uniqueness probe needs at least 2 starts".into(),
        ));
    }
    let solutions = run_indexed(&start_seeds(seed, n_starts), threads, |&s| {
        let start = random_start_trajectory(m0, timegrid, s)?;
        cosmfg_coupled_solve_from(
            cost,
            hamiltonian,
            m0,
            timegrid,
            schedule,
            config,
            Some(&start),
        )
        .map(|r| r.m)
    })?;
    Ok(TrajectoryUniqueness {
        max_pairwise_gap: max_trajectory_gap(&solutions)?,
        solutions,
    })
}
