//! The time-dependent system with m-dependent obstacles: obstacle
//! operators, the forward–backward penalized solver, and the verifier.
//!
//! Time stepping is staggered implicit Euler. The backward step producing
//! u_{k−1} uses the source at m_k, and the forward step producing m_k uses
//! the killing set and drift of u_{k−1}:
//!
//! (u_{k−1} − u_k)/dt − Δ_h u_{k−1} [+ H_h(D u_{k−1})] + (1/ε)(u_{k−1} − ψ_{k−1})⁺ = f(m_k),
//! (m_k − m_{k−1})/dt − Δ_h m_k [+ Advᵀ m_k] + (α_k/ε) m_k = 0.
//!
//! With this pairing the duality identity of the continuum problem holds
//! exactly for the discrete penalized system.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::Hamiltonian;
use crate::cost::CostOperator;
use crate::density::{fokker_planck_matrix, solve_density_parabolic, KillingData, UpwindDrift};
use crate::error::{Error, Result};
use crate::grid::{default_delta_c, inner, FieldTrajectory, Grid, NodeMask, ScalarField, TimeGrid};
use crate::linalg::BandMatrix;
use crate::obstacle::penalized_newton;
use crate::stationary::{
    run_indexed, start_seeds, update_alpha, validate_schedule, CouplingConfig, GridMeta,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ObstacleOperator {
    /// ψ independent of m.
    ConstantField(FieldTrajectory),
    /// ψ(m) solves ∂_tψ + Δψ = g(m), ψ(T) = 0, ψ = 0 on ∂Ω.
    HeatFromG(CostOperator),
}

impl ObstacleOperator {
    pub fn zero(timegrid: TimeGrid, grid: Grid) -> Self {
        ObstacleOperator::ConstantField(FieldTrajectory::zeros(timegrid, grid))
    }
}

/// ψ(m) and g_ψ(m) = (∂_t + Δ)ψ(m).
///
/// Slice k ≥ 1 of g_ψ is (ψ_k − ψ_{k−1})/dt + Δ_h ψ_{k−1}, the value paired
/// with m_k; slice 0 is unused and set to zero. For `HeatFromG` the
/// backward step is built so that this equals g(m_k) exactly, and g(m_k)
/// is returned without differencing.
pub fn apply_obstacle_operator(
    op: &ObstacleOperator,
    m: &FieldTrajectory,
) -> Result<(FieldTrajectory, FieldTrajectory)> {
    let tg = *m.timegrid();
    let grid = *m.grid();
    let n_steps = tg.n_steps();
    let dt = tg.dt();
    match op {
        ObstacleOperator::ConstantField(psi) => {
            if psi.slices().len() != n_steps + 1 || psi.grid() != &grid {
                return Err(Error::InvalidInput(
                    "obstacle trajectory does not match the density".into(),
                ));
            }
            let lap = grid.operator_matrix(0.0);
            let mut g = vec![ScalarField::zeros(grid)];
            for k in 1..=n_steps {
                let lp = lap.mul_vec(psi.slice(k - 1).values());
                let (pk, pp) = (psi.slice(k).values(), psi.slice(k - 1).values());
                let vals = (0..grid.len())
                    .map(|i| (pk[i] - pp[i]) / dt - lp[i])
                    .collect();
                g.push(ScalarField::new(grid, vals)?);
            }
            Ok((psi.clone(), FieldTrajectory::new(tg, g)?))
        }
        ObstacleOperator::HeatFromG(gop) => {
            let b = grid.operator_matrix(1.0 / dt).factor()?;
            let mut psi = vec![ScalarField::zeros(grid); n_steps + 1];
            let mut g = vec![ScalarField::zeros(grid); n_steps + 1];
            for k in (1..=n_steps).rev() {
                let gk = gop.evaluate(m.slice(k))?;
                let rhs: Vec<f64> = psi[k]
                    .values()
                    .iter()
                    .zip(gk.values())
                    .map(|(p, gv)| p / dt - gv)
                    .collect();
                psi[k - 1] = ScalarField::new(grid, b.solve(&rhs))?;
                g[k] = gk;
            }
            Ok((FieldTrajectory::new(tg, psi)?, FieldTrajectory::new(tg, g)?))
        }
    }
}

/// Raw state of the forward–backward iteration (shifted value v = u − ψ).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSolution {
    pub v: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    /// alpha[k−1] acts in the step producing m_k.
    pub alpha: Vec<Vec<f64>>,
    pub active: Vec<Vec<bool>>,
    pub drift: Option<Vec<UpwindDrift>>,
    pub epsilon: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl TimeSolution {
    pub fn from_density(m: &FieldTrajectory, timegrid: &TimeGrid) -> Self {
        let n = m.grid().len();
        let steps = timegrid.n_steps();
        TimeSolution {
            v: vec![vec![0.0; n]; steps + 1],
            m: m.slices().iter().map(|s| s.values().to_vec()).collect(),
            alpha: vec![vec![0.0; n]; steps],
            active: vec![vec![true; n]; steps],
            drift: None,
            epsilon: f64::NAN,
            iterations: 0,
            history: Vec::new(),
        }
    }

    pub fn alpha_trajectory(&self, timegrid: &TimeGrid, grid: &Grid) -> Result<FieldTrajectory> {
        let mut slices = vec![ScalarField::zeros(*grid)];
        for a in &self.alpha {
            slices.push(ScalarField::new(*grid, a.clone())?);
        }
        FieldTrajectory::new(*timegrid, slices)
    }

    pub fn killing(&self, grid: &Grid) -> Result<Vec<KillingData>> {
        self.alpha
            .iter()
            .zip(&self.active)
            .map(|(a, on)| {
                KillingData::new(
                    ScalarField::new(*grid, a.clone())?,
                    NodeMask::new(*grid, on.clone())?,
                    self.epsilon,
                )
            })
            .collect()
    }
}

pub(crate) fn to_trajectory(
    timegrid: &TimeGrid,
    grid: &Grid,
    slices: Vec<Vec<f64>>,
) -> Result<FieldTrajectory> {
    let fields = slices
        .into_iter()
        .map(|v| ScalarField::new(*grid, v))
        .collect::<Result<Vec<_>>>()?;
    FieldTrajectory::new(*timegrid, fields)
}

/// One backward slice: B v + H_h(Dv) + (1/ε) v⁺ = rhs.
fn solve_slice(
    grid: &Grid,
    base: &BandMatrix,
    rhs: &[f64],
    epsilon: f64,
    hamiltonian: Option<&Hamiltonian>,
    start: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Option<UpwindDrift>)> {
    let n = rhs.len();
    let zero = vec![0.0; n];
    let ham = match hamiltonian {
        None => {
            return Ok((
                penalized_newton(base, rhs, &zero, epsilon, tol, 200, Some(start))?,
                None,
            ))
        }
        Some(h) => h,
    };
    let inv = 1.0 / epsilon;
    let scale = 1.0_f64.max(crate::grid::norm_inf(rhs));
    let residual = |v: &[f64], hv: &[f64]| -> f64 {
        let bv = base.mul_vec(v);
        (0..n).fold(0.0, |r: f64, i| {
            r.max((bv[i] + hv[i] + inv * v[i].max(0.0) - rhs[i]).abs())
        })
    };
    let mut v = start.to_vec();
    let mut history = Vec::new();
    for it in 0..400 {
        let (hv, drift) = ham.numerical(grid, &v);
        let r = residual(&v, &hv);
        history.push(r);
        if r <= tol * scale {
            return Ok((v, Some(drift)));
        }
        let mut j = base.clone();
        drift.add_advection(grid, &mut j);
        let adv_v = drift.apply_advection(grid, &v);
        let mut b = rhs.to_vec();
        for i in 0..n {
            if v[i] > 0.0 {
                j.add(i, i, inv);
            }
            b[i] -= hv[i] - adv_v[i];
        }
        let next = j.solve(&b)?;
        // Late iterations switch to a damped update in case the active set
        // and the upwind branches keep flipping.
        let damp = if it < 100 { 1.0 } else { 0.5 };
        for i in 0..n {
            v[i] += damp * (next[i] - v[i]);
        }
    }
    let last = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NoConvergence {
        solver: "HJB slice Newton",
        iterations: history.len(),
        residual: last,
        history,
    })
}

/// Backward sweep v_N = 0, slices k = N..1 producing v_{k−1} from
/// `source[k−1]`. Returns the slices and (with a Hamiltonian) the drift of
/// each step producing m_k.
pub(crate) fn backward_sweep(
    grid: &Grid,
    timegrid: &TimeGrid,
    source: &[Vec<f64>],
    epsilon: f64,
    hamiltonian: Option<&Hamiltonian>,
    config: &CouplingConfig,
    start: Option<&[Vec<f64>]>,
) -> Result<(Vec<Vec<f64>>, Option<Vec<UpwindDrift>>)> {
    let n_steps = timegrid.n_steps();
    let dt = timegrid.dt();
    let n = grid.len();
    let base = grid.operator_matrix(1.0 / dt);
    let mut v = vec![vec![0.0; n]; n_steps + 1];
    let mut drifts = hamiltonian.map(|_| vec![UpwindDrift::zeros(grid); n_steps]);
    for k in (1..=n_steps).rev() {
        let rhs: Vec<f64> = (0..n).map(|i| v[k][i] / dt + source[k - 1][i]).collect();
        let init = start.map_or_else(|| v[k].clone(), |s| s[k - 1].clone());
        let (vk, drift) = solve_slice(
            grid,
            &base,
            &rhs,
            epsilon,
            hamiltonian,
            &init,
            config.obstacle.tol,
        )
        .map_err(|e| Error::Slice {
            slice: k - 1,
            source: Box::new(e),
        })?;
        v[k - 1] = vk;
        if let (Some(d), Some(all)) = (drift, drifts.as_mut()) {
            all[k - 1] = d;
        }
    }
    Ok((v, drifts))
}

/// Damped forward–backward Picard iteration at fixed ε.
///
/// `source(m)` returns, for k = 1..N, the effective cost paired with m_k
/// (f(m_k) + g_ψ,k for obstacle problems in shifted form).
pub(crate) fn forward_backward(
    m0: &ScalarField,
    timegrid: &TimeGrid,
    epsilon: f64,
    hamiltonian: Option<&Hamiltonian>,
    config: &CouplingConfig,
    source: &dyn Fn(&[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
    warm: Option<&TimeSolution>,
) -> Result<TimeSolution> {
    config.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if let Some(v) = m0.values().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "initial density must be nonnegative, found {v}"
        )));
    }
    let grid = *m0.grid();
    let n = grid.len();
    let n_steps = timegrid.n_steps();
    let dt = timegrid.dt();
    let (mut m, mut alpha, mut v_prev) = match warm {
        Some(w) => (w.m.clone(), w.alpha.clone(), Some(w.v.clone())),
        None => {
            let heat = solve_density_parabolic(m0, None, None, timegrid)?;
            (
                heat.slices()
                    .iter()
                    .map(|s| s.values().to_vec())
                    .collect::<Vec<_>>(),
                vec![vec![0.0; n]; n_steps],
                None,
            )
        }
    };
    m[0] = m0.values().to_vec();
    let mut history = Vec::new();
    let forward = |alpha: &[Vec<f64>],
                   active: &[Vec<bool>],
                   drifts: Option<&Vec<UpwindDrift>>|
     -> Result<Vec<Vec<f64>>> {
        let mut out = vec![m0.values().to_vec()];
        for k in 1..=n_steps {
            let rates: Vec<f64> = (0..n)
                .map(|i| {
                    if active[k - 1][i] {
                        alpha[k - 1][i] / epsilon
                    } else {
                        0.0
                    }
                })
                .collect();
            let b = fokker_planck_matrix(&grid, dt, &rates, drifts.map(|d| &d[k - 1]));
            let rhs: Vec<f64> = out[k - 1].iter().map(|x| x / dt).collect();
            out.push(b.solve(&rhs)?);
        }
        Ok(out)
    };
    for it in 0..config.max_outer {
        let src = source(&m)?;
        let (v, drifts) = backward_sweep(
            &grid,
            timegrid,
            &src,
            epsilon,
            hamiltonian,
            config,
            v_prev.as_deref(),
        )?;
        let mut active = Vec::with_capacity(n_steps);
        let mut masks_before = Vec::with_capacity(n_steps);
        for k in 1..=n_steps {
            let vk = &v[k - 1];
            let dc = config
                .delta_c
                .unwrap_or_else(|| (1e-8 * crate::grid::norm_inf(vk)).max(1e-12));
            masks_before.push(
                (0..n)
                    .map(|i| (vk[i] > dc, vk[i] >= -dc))
                    .collect::<Vec<_>>(),
            );
            active.push(update_alpha(
                &mut alpha[k - 1],
                vk,
                &src[k - 1],
                dc,
                epsilon,
                config,
            ));
        }
        let m_half = forward(&alpha, &active, drifts.as_ref())?;
        let diff = m_half
            .iter()
            .zip(&m)
            .fold(0.0, |d: f64, (a, b)| d.max(crate::grid::max_abs_diff(a, b)));
        history.push(diff);
        v_prev = Some(v.clone());
        if diff <= config.tol_outer {
            let src_fin = source(&m_half)?;
            let (v_fin, drifts_fin) = backward_sweep(
                &grid,
                timegrid,
                &src_fin,
                epsilon,
                hamiltonian,
                config,
                v_prev.as_deref(),
            )?;
            let same = (1..=n_steps).all(|k| {
                let vk = &v_fin[k - 1];
                let dc = config
                    .delta_c
                    .unwrap_or_else(|| (1e-8 * crate::grid::norm_inf(vk)).max(1e-12));
                (0..n).all(|i| masks_before[k - 1][i] == (vk[i] > dc, vk[i] >= -dc))
            });
            let drift_gap = match (&drifts, &drifts_fin) {
                (Some(a), Some(b)) => a.iter().zip(b).fold(0.0, |g: f64, (x, y)| {
                    let mut d = 0.0_f64;
                    for ax in 0..x.neg.len() {
                        d = d.max(crate::grid::max_abs_diff(&x.neg[ax], &y.neg[ax]));
                        d = d.max(crate::grid::max_abs_diff(&x.pos[ax], &y.pos[ax]));
                    }
                    g.max(d)
                }),
                _ => 0.0,
            };
            if same && drift_gap <= 1e3 * config.tol_outer {
                // Keep the m equation exact: re-run the forward step with the
                // final drift (the killing sets are unchanged).
                let m_fin = if drifts_fin.is_some() {
                    forward(&alpha, &active, drifts_fin.as_ref())?
                } else {
                    m_half
                };
                return Ok(TimeSolution {
                    v: v_fin,
                    m: m_fin,
                    alpha,
                    active,
                    drift: drifts_fin,
                    epsilon,
                    iterations: it + 1,
                    history,
                });
            }
        }
        let theta = config.theta;
        for (mk, hk) in m.iter_mut().zip(&m_half) {
            for (a, b) in mk.iter_mut().zip(hk) {
                *a = (1.0 - theta) * *a + theta * b;
            }
        }
    }
    let last = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NoConvergence {
        solver: "forward-backward Picard",
        iterations: config.max_outer,
        residual: last,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutiveMixedReport {
    pub r_obstacle: f64,
    pub r_continuation: f64,
    pub r_subsolution: f64,
    pub r_contact: f64,
    pub r_duality: f64,
    pub r_terminal: f64,
    pub r_initial: f64,
    pub delta_c: f64,
    pub grid: GridMeta,
    pub n_steps: usize,
    pub horizon: f64,
}

impl EvolutiveMixedReport {
    pub fn max_residual(&self) -> f64 {
        self.r_obstacle
            .max(self.r_continuation)
            .max(self.r_subsolution)
            .max(self.r_contact)
            .max(self.r_duality)
            .max(self.r_terminal)
            .max(self.r_initial)
    }
}

/// Residuals of the evolutive mixed-solution conditions. Contact and
/// continuation sets are classified on u_{k−1} − ψ_{k−1} and paired with
/// m_k (see the module docs).
pub fn verify_mixed_evolutive(
    u: &FieldTrajectory,
    m: &FieldTrajectory,
    cost: &CostOperator,
    obstacle: &ObstacleOperator,
    m0: &ScalarField,
    delta_c: Option<f64>,
) -> Result<EvolutiveMixedReport> {
    let grid = *u.grid();
    let tg = *u.timegrid();
    let n_steps = tg.n_steps();
    let dt = tg.dt();
    let hd = grid.cell_measure();
    let (psi, g) = apply_obstacle_operator(obstacle, m)?;
    let b = grid.operator_matrix(1.0 / dt);
    let lap = grid.operator_matrix(0.0);
    let mut r_obstacle: f64 = 0.0;
    let mut r_continuation: f64 = 0.0;
    let mut r_subsolution: f64 = 0.0;
    let mut contact_sum = 0.0;
    let mut dual_sum = 0.0;
    let mut dc_used: f64 = 0.0;
    for k in 1..=n_steps {
        let up = u.slice(k - 1).values();
        let uk = u.slice(k).values();
        let pp = psi.slice(k - 1).values();
        let mk = m.slice(k).values();
        let mprev = m.slice(k - 1).values();
        let fm = cost.evaluate(m.slice(k))?;
        let gk = g.slice(k).values();
        let bu = b.mul_vec(up);
        let lm = lap.mul_vec(mk);
        let dc = delta_c.unwrap_or_else(|| default_delta_c(u.slice(k - 1), psi.slice(k - 1)));
        dc_used = dc_used.max(dc);
        for i in 0..grid.len() {
            let rhs = uk[i] / dt + fm.values()[i];
            r_obstacle = r_obstacle.max((pp[i] - up[i]).min(rhs - bu[i]).abs());
            let res = (mk[i] - mprev[i]) / dt + lm[i];
            let eff = fm.values()[i] + gk[i];
            if up[i] < pp[i] - dc {
                r_continuation = r_continuation.max(res.abs());
            } else {
                contact_sum += eff * mk[i];
            }
            r_subsolution = r_subsolution.max(res);
            dual_sum += eff * mk[i];
        }
    }
    let gap0 = u.slice(0).sub(psi.slice(0))?;
    Ok(EvolutiveMixedReport {
        r_obstacle,
        r_continuation,
        r_subsolution,
        r_contact: (contact_sum * hd * dt).abs(),
        r_duality: (dual_sum * hd * dt - inner(&gap0, m0)?).abs(),
        r_terminal: u.slice(n_steps).dist_inf(psi.slice(n_steps))?,
        r_initial: m.slice(0).dist_inf(m0)?,
        delta_c: dc_used,
        grid: GridMeta::of(&grid),
        n_steps,
        horizon: tg.horizon(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutiveSolution {
    pub u: FieldTrajectory,
    pub m: FieldTrajectory,
    /// Slice k holds the α of the step producing m_k (slice 0 is 0).
    pub alpha: FieldTrajectory,
    pub psi: FieldTrajectory,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    raw: TimeSolution,
}

fn shifted_source<'a>(
    cost: &'a CostOperator,
    obstacle: &'a ObstacleOperator,
    grid: Grid,
    timegrid: TimeGrid,
) -> impl Fn(&[Vec<f64>]) -> Result<Vec<Vec<f64>>> + 'a {
    move |m: &[Vec<f64>]| {
        let traj = to_trajectory(&timegrid, &grid, m.to_vec())?;
        let (_, g) = apply_obstacle_operator(obstacle, &traj)?;
        (1..m.len())
            .map(|k| {
                let f = cost.evaluate(traj.slice(k))?;
                Ok(f.values()
                    .iter()
                    .zip(g.slice(k).values())
                    .map(|(a, b)| a + b)
                    .collect())
            })
            .collect()
    }
}

/// Penalized forward–backward solve at one ε.
pub fn osmfg_penalized_solve(
    cost: &CostOperator,
    obstacle: &ObstacleOperator,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    epsilon: f64,
    config: &CouplingConfig,
) -> Result<EvolutiveSolution> {
    osmfg_penalized_solve_from(cost, obstacle, m0, timegrid, epsilon, config, None)
}

fn osmfg_penalized_solve_from(
    cost: &CostOperator,
    obstacle: &ObstacleOperator,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    epsilon: f64,
    config: &CouplingConfig,
    warm: Option<&TimeSolution>,
) -> Result<EvolutiveSolution> {
    let grid = *m0.grid();
    if let ObstacleOperator::ConstantField(psi) = obstacle {
        if psi.grid() != &grid || psi.timegrid() != timegrid {
            return Err(Error::InvalidInput(
                "obstacle trajectory does not match the grids".into(),
            ));
        }
    }
    let source = shifted_source(cost, obstacle, grid, *timegrid);
    let raw = forward_backward(m0, timegrid, epsilon, None, config, &source, warm)?;
    let m = to_trajectory(timegrid, &grid, raw.m.clone())?;
    let (psi, _) = apply_obstacle_operator(obstacle, &m)?;
    let u_slices = raw
        .v
        .iter()
        .zip(psi.slices())
        .map(|(v, p)| v.iter().zip(p.values()).map(|(a, b)| a + b).collect())
        .collect();
    Ok(EvolutiveSolution {
        u: to_trajectory(timegrid, &grid, u_slices)?,
        alpha: raw.alpha_trajectory(timegrid, &grid)?,
        m,
        psi,
        iterations: raw.iterations,
        residual_history: raw.history.clone(),
        raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutiveStage {
    pub stage: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub report: EvolutiveMixedReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutiveResult {
    pub solution: EvolutiveSolution,
    pub report: EvolutiveMixedReport,
    pub stages: Vec<EvolutiveStage>,
}

/// ε-continuation of the penalized evolutive solver.
pub fn osmfg_continuation(
    cost: &CostOperator,
    obstacle: &ObstacleOperator,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    schedule: &[f64],
    config: &CouplingConfig,
) -> Result<EvolutiveResult> {
    osmfg_continuation_from(cost, obstacle, m0, timegrid, schedule, config, None)
}

pub fn osmfg_continuation_from(
    cost: &CostOperator,
    obstacle: &ObstacleOperator,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    schedule: &[f64],
    config: &CouplingConfig,
    initial_m: Option<&FieldTrajectory>,
) -> Result<EvolutiveResult> {
    validate_schedule(schedule)?;
    let mut warm = initial_m.map(|m| TimeSolution::from_density(m, timegrid));
    let mut stages = Vec::with_capacity(schedule.len());
    let mut last = None;
    for (j, &eps) in schedule.iter().enumerate() {
        let sol =
            osmfg_penalized_solve_from(cost, obstacle, m0, timegrid, eps, config, warm.as_ref())
                .map_err(|e| Error::Stage {
                    stage: j,
                    epsilon: eps,
                    source: Box::new(e),
                })?;
        let report = verify_mixed_evolutive(&sol.u, &sol.m, cost, obstacle, m0, config.delta_c)?;
        stages.push(EvolutiveStage {
            stage: j,
            epsilon: eps,
            iterations: sol.iterations,
            report,
        });
        warm = Some(sol.raw.clone());
        last = Some((sol, report));
    }
    let (solution, report) = last.expect("schedule is nonempty");
    Ok(EvolutiveResult {
        solution,
        report,
        stages,
    })
}

/// Random starting density trajectories: the free heat flow of m0 scaled
/// and perturbed nodewise.
pub fn random_start_trajectory(
    m0: &ScalarField,
    timegrid: &TimeGrid,
    seed: u64,
) -> Result<FieldTrajectory> {
    let heat = solve_density_parabolic(m0, None, None, timegrid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: f64 = rng.gen_range(0.0..2.0);
    let mut slices = Vec::with_capacity(heat.slices().len());
    for (k, s) in heat.slices().iter().enumerate() {
        if k == 0 {
            slices.push(s.clone());
        } else {
            let vals = s
                .values()
                .iter()
                .map(|v| v * scale * rng.gen_range(0.5..1.5))
                .collect();
            slices.push(ScalarField::new(*m0.grid(), vals)?);
        }
    }
    FieldTrajectory::new(*timegrid, slices)
}

pub fn max_trajectory_gap(solutions: &[FieldTrajectory]) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for a in 0..solutions.len() {
        for b in a + 1..solutions.len() {
            gap = gap.max(solutions[a].dist_inf(&solutions[b])?);
        }
    }
    Ok(gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryUniqueness {
    pub max_pairwise_gap: f64,
    pub solutions: Vec<FieldTrajectory>,
}

/// Multi-start ε-continuation; returns the largest pairwise trajectory gap.
#[allow(clippy::too_many_arguments)]
pub fn evolutive_uniqueness_probe(
    cost: &CostOperator,
    obstacle: &ObstacleOperator,
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
    evolutive_uniqueness_probe_with_seeds(
        cost,
        obstacle,
        m0,
        timegrid,
        &start_seeds(seed, n_starts),
        schedule,
        config,
        threads,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn evolutive_uniqueness_probe_with_seeds(
    cost: &CostOperator,
    obstacle: &ObstacleOperator,
    m0: &ScalarField,
    timegrid: &TimeGrid,
    seeds: &[u64],
    schedule: &[f64],
    config: &CouplingConfig,
    threads: usize,
) -> Result<TrajectoryUniqueness> {
    let solutions = run_indexed(seeds, threads, |&s| {
        let start = random_start_trajectory(m0, timegrid, s)?;
        osmfg_continuation_from(cost, obstacle, m0, timegrid, schedule, config, Some(&start))
            .map(|r| r.solution.m)
    })?;
    Ok(TrajectoryUniqueness {
        max_pairwise_gap: max_trajectory_gap(&solutions)?,
        solutions,
    })
}
