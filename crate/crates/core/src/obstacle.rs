//! Obstacle problems max(A u − f, u − ψ) = 0: projected SOR, a brute-force
//! active-set oracle, penalization by semismooth Newton, and the backward
//! parabolic version.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldTrajectory, ScalarField, TimeGrid};
use crate::linalg::BandMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSolveConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    pub epsilon: Option<f64>,
}

impl Default for ObstacleSolveConfig {
    fn default() -> Self {
        ObstacleSolveConfig {
            tol: 1e-10,
            max_iter: 100_000,
            relaxation: 1.5,
            epsilon: None,
        }
    }
}

impl ObstacleSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::InvalidInput(format!(
                "relaxation must lie in (0, 2), got {}",
                self.relaxation
            )));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "epsilon must be positive, got {e}"
                )));
            }
        }
        Ok(())
    }
}

fn check_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::InvalidInput("fields live on different grids".into()));
    }
    Ok(())
}

/// ‖min(ψ − u, f − M u)‖_∞ for the obstacle problem with matrix `m`.
pub fn complementarity_residual(m: &BandMatrix, u: &[f64], f: &[f64], psi: &[f64]) -> f64 {
    let mu = m.mul_vec(u);
    (0..u.len()).fold(0.0, |r: f64, i| {
        r.max((psi[i] - u[i]).min(f[i] - mu[i]).abs())
    })
}

/// Projected SOR for max(M u − f, u − ψ) = 0.
pub fn psor(m: &BandMatrix, f: &[f64], psi: &[f64], cfg: &ObstacleSolveConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = f.len();
    let kl = m.lower_bandwidth();
    let ku = m.upper_bandwidth();
    let omega = cfg.relaxation;
    let mut u: Vec<f64> = psi.iter().map(|p| p.min(0.0)).collect();
    let scale = 1.0_f64.max(f.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
    let mut res = f64::INFINITY;
    for it in 0..cfg.max_iter {
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            let mut s = f[i];
            for j in lo..=hi {
                if j != i {
                    s -= m.get(i, j) * u[j];
                }
            }
            let gs = s / m.get(i, i);
            u[i] = ((1.0 - omega) * u[i] + omega * gs).min(psi[i]);
        }
        if it % 4 == 3 || it + 1 == cfg.max_iter {
            res = complementarity_residual(m, &u, f, psi);
            if res <= cfg.tol * scale {
                return Ok(u);
            }
        }
    }
    Err(Error::NoConvergence {
        solver: "projected SOR",
        iterations: cfg.max_iter,
        residual: res,
        history: vec![res],
    })
}

/// Obstacle problem with A = −Δ_h + I (`zero_order`) or −Δ_h.
pub fn solve_obstacle(
    f: &ScalarField,
    psi: &ScalarField,
    zero_order: bool,
    cfg: &ObstacleSolveConfig,
) -> Result<ScalarField> {
    check_same_grid(f, psi)?;
    let a = f.grid().operator_matrix(if zero_order { 1.0 } else { 0.0 });
    let u = psor(&a, f.values(), psi.values(), cfg)?;
    ScalarField::new(*f.grid(), u)
}

/// Stationary obstacle problem max(A u − f, u − ψ) = 0 with A = −Δ_h + I.
pub fn solve_obstacle_stationary(
    f: &ScalarField,
    psi: &ScalarField,
    cfg: &ObstacleSolveConfig,
) -> Result<ScalarField> {
    solve_obstacle(f, psi, true, cfg)
}

/// Exhaustive active-set enumeration (at most 16 nodes).
pub fn obstacle_oracle(f: &ScalarField, psi: &ScalarField) -> Result<ScalarField> {
    check_same_grid(f, psi)?;
    let grid = *f.grid();
    let n = grid.len();
    if n > 16 {
        return Err(Error::InvalidInput(format!(
            "oracle limited to 16 nodes, got {n}"
        )));
    }
    let a = grid.operator_matrix(1.0);
    let (fv, pv) = (f.values(), psi.values());
    let scale = 1.0 + fv.iter().chain(pv).fold(0.0, |s: f64, v| s.max(v.abs()));
    let tol = 1e-10 * scale;
    for set in 0u32..(1u32 << n) {
        let active = |i: usize| set & (1 << i) != 0;
        let mut m = a.clone();
        let mut rhs = fv.to_vec();
        for i in 0..n {
            if active(i) {
                m.set_identity_row(i);
                rhs[i] = pv[i];
            }
        }
        let u = m.solve(&rhs)?;
        let au = a.mul_vec(&u);
        let ok = (0..n).all(|i| {
            if active(i) {
                au[i] - fv[i] <= tol
            } else {
                u[i] <= pv[i] + tol
            }
        });
        if ok {
            return ScalarField::new(grid, u);
        }
    }
    Err(Error::OracleFailed)
}

/// Semismooth Newton for M u + (1/ε)(u − ψ)⁺ = f.
pub fn penalized_newton(
    m: &BandMatrix,
    f: &[f64],
    psi: &[f64],
    epsilon: f64,
    tol: f64,
    max_iter: usize,
    start: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = f.len();
    let inv = 1.0 / epsilon;
    let residual = |u: &[f64]| -> f64 {
        let mu = m.mul_vec(u);
        (0..n).fold(0.0, |r: f64, i| {
            r.max((mu[i] + inv * (u[i] - psi[i]).max(0.0) - f[i]).abs())
        })
    };
    let scale = 1.0_f64.max(f.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
    let newton_step = |active: &[bool]| -> Result<Vec<f64>> {
        let mut mm = m.clone();
        let mut rhs = f.to_vec();
        for i in 0..n {
            if active[i] {
                mm.add(i, i, inv);
                rhs[i] += inv * psi[i];
            }
        }
        mm.solve(&rhs)
    };
    let mut u: Vec<f64> = match start {
        Some(s) => s.to_vec(),
        None => newton_step(&vec![false; n])?,
    };
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let active: Vec<bool> = (0..n).map(|i| u[i] > psi[i]).collect();
        let next = newton_step(&active)?;
        let same = (0..n).all(|i| (next[i] > psi[i]) == active[i]);
        u = next;
        let r = residual(&u);
        history.push(r);
        if same && r <= tol * scale {
            return Ok(u);
        }
    }
    // Damped fallback: average successive Newton iterates.
    for _ in 0..max_iter {
        let active: Vec<bool> = (0..n).map(|i| u[i] > psi[i]).collect();
        let next = newton_step(&active)?;
        for i in 0..n {
            u[i] = 0.5 * (u[i] + next[i]);
        }
        let r = residual(&u);
        history.push(r);
        if r <= tol * scale {
            return Ok(u);
        }
    }
    let last = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NoConvergence {
        solver: "semismooth Newton (penalized obstacle)",
        iterations: history.len(),
        residual: last,
        history,
    })
}

/// Penalized obstacle problem A u + (1/ε)(u − ψ)⁺ = f with A = −Δ_h + I.
pub fn solve_obstacle_penalized(
    f: &ScalarField,
    psi: &ScalarField,
    epsilon: f64,
    cfg: &ObstacleSolveConfig,
) -> Result<ScalarField> {
    solve_obstacle_penalized_with(f, psi, epsilon, true, cfg, None)
}

pub fn solve_obstacle_penalized_with(
    f: &ScalarField,
    psi: &ScalarField,
    epsilon: f64,
    zero_order: bool,
    cfg: &ObstacleSolveConfig,
    start: Option<&ScalarField>,
) -> Result<ScalarField> {
    check_same_grid(f, psi)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let a = f.grid().operator_matrix(if zero_order { 1.0 } else { 0.0 });
    let u = penalized_newton(
        &a,
        f.values(),
        psi.values(),
        epsilon,
        cfg.tol,
        200,
        start.map(ScalarField::values),
    )?;
    ScalarField::new(*f.grid(), u)
}

/// Backward implicit Euler for max(−∂_t u − Δu − f, u − ψ) = 0, u(T) = ψ(T).
///
/// Slice k solves max(B u_k − b_k, u_k − ψ_k) = 0 with B = I/dt − Δ_h and
/// b_k = u_{k+1}/dt + f_k.
pub fn solve_obstacle_parabolic(
    f: &FieldTrajectory,
    psi: &FieldTrajectory,
    terminal: &ScalarField,
    timegrid: &TimeGrid,
    cfg: &ObstacleSolveConfig,
) -> Result<FieldTrajectory> {
    let n_steps = timegrid.n_steps();
    if f.slices().len() != n_steps + 1 || psi.slices().len() != n_steps + 1 {
        return Err(Error::Shape {
            expected: n_steps + 1,
            got: f.slices().len().min(psi.slices().len()),
        });
    }
    let gap = terminal.dist_inf(psi.slice(n_steps))?;
    if gap > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "terminal value differs from the obstacle at T by {gap:.3e}"
        )));
    }
    let grid = *terminal.grid();
    let dt = timegrid.dt();
    let b = grid.operator_matrix(1.0 / dt);
    let mut slices = vec![ScalarField::zeros(grid); n_steps + 1];
    slices[n_steps] = terminal.clone();
    for k in (0..n_steps).rev() {
        let rhs: Vec<f64> = slices[k + 1]
            .values()
            .iter()
            .zip(f.slice(k).values())
            .map(|(u, fk)| u / dt + fk)
            .collect();
        let u = psor(&b, &rhs, psi.slice(k).values(), cfg).map_err(|e| Error::Slice {
            slice: k,
            source: Box::new(e),
        })?;
        slices[k] = ScalarField::new(grid, u)?;
    }
    FieldTrajectory::new(*timegrid, slices)
}
