//! Density equations: exclusion-set solves, killing-potential solves,
//! subsolution checks, and the implicit forward Fokker–Planck step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldTrajectory, Grid, NodeMask, ScalarField, TimeGrid};
use crate::linalg::BandMatrix;

/// Killing potential V = (α/ε) 1_active.
#[derive(Debug, Clone, PartialEq)]
pub struct KillingData {
    alpha: ScalarField,
    active: NodeMask,
    epsilon: f64,
}

impl KillingData {
    pub fn new(alpha: ScalarField, active: NodeMask, epsilon: f64) -> Result<Self> {
        if alpha.grid() != active.grid() {
            return Err(Error::InvalidInput(
                "alpha and mask live on different grids".into(),
            ));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if let Some(a) = alpha.values().iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in [0, 1], found {a}"
            )));
        }
        Ok(KillingData {
            alpha,
            active,
            epsilon,
        })
    }

    /// No killing anywhere.
    pub fn none(grid: Grid) -> Self {
        KillingData {
            alpha: ScalarField::zeros(grid),
            active: NodeMask::none(grid),
            epsilon: 1.0,
        }
    }

    pub fn alpha(&self) -> &ScalarField {
        &self.alpha
    }

    pub fn active(&self) -> &NodeMask {
        &self.active
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Nodal rates α_i/ε on active nodes, 0 elsewhere.
    pub fn rates(&self) -> Vec<f64> {
        self.alpha
            .values()
            .iter()
            .zip(self.active.mask())
            .map(|(a, &on)| if on { a / self.epsilon } else { 0.0 })
            .collect()
    }
}

/// Upwind drift coefficients attached to nodes.
///
/// For each axis, `neg[i] ≤ 0` is the velocity node i pushes through its
/// forward face and `pos[i] ≥ 0` the velocity through its backward face.
/// On a value function u this is the advection
/// (Adv u)_i = Σ_axes neg_i (u_{i+1} − u_i)/h + pos_i (u_i − u_{i−1})/h,
/// and the Fokker–Planck drift is its transpose, a conservative flux form
/// with face flux Φ_{i+½} = neg_i m_i + pos_{i+1} m_{i+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpwindDrift {
    pub neg: Vec<Vec<f64>>,
    pub pos: Vec<Vec<f64>>,
}

impl UpwindDrift {
    pub fn zeros(grid: &Grid) -> Self {
        UpwindDrift {
            neg: vec![vec![0.0; grid.len()]; grid.dim()],
            pos: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.neg.len() != grid.dim() || self.pos.len() != grid.dim() {
            return Err(Error::InvalidInput(
                "drift must have one entry per axis".into(),
            ));
        }
        for k in 0..grid.dim() {
            if self.neg[k].len() != grid.len() || self.pos[k].len() != grid.len() {
                return Err(Error::Shape {
                    expected: grid.len(),
                    got: self.neg[k].len().min(self.pos[k].len()),
                });
            }
            if self.neg[k].iter().any(|v| !(*v <= 0.0)) || self.pos[k].iter().any(|v| !(*v >= 0.0))
            {
                return Err(Error::InvalidInput(
                    "drift violates the upwind sign convention".into(),
                ));
            }
        }
        Ok(())
    }

    /// Squared speed Σ_axes (neg² + pos²) at node i.
    pub fn speed_sq(&self, i: usize) -> f64 {
        self.neg
            .iter()
            .zip(&self.pos)
            .map(|(n, p)| n[i] * n[i] + p[i] * p[i])
            .sum()
    }

    /// Adds the advection matrix Adv to `m`.
    pub fn add_advection(&self, grid: &Grid, m: &mut BandMatrix) {
        for k in 0..grid.dim() {
            let h = grid.spacing()[k];
            for i in 0..grid.len() {
                let (an, ap) = (self.neg[k][i] / h, self.pos[k][i] / h);
                m.add(i, i, ap - an);
                if let Some(j) = grid.neighbor(i, k, true) {
                    m.add(i, j, an);
                }
                if let Some(j) = grid.neighbor(i, k, false) {
                    m.add(i, j, -ap);
                }
            }
        }
    }

    pub fn apply_advection(&self, grid: &Grid, u: &[f64]) -> Vec<f64> {
        let bw = grid.bandwidth();
        let mut m = BandMatrix::zeros(grid.len(), bw, bw);
        self.add_advection(grid, &mut m);
        m.mul_vec(u)
    }
}

fn check_rho(rho: &ScalarField) -> Result<()> {
    if let Some(v) = rho.values().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "rho must be nonnegative, found {v}"
        )));
    }
    Ok(())
}

fn shift(zero_order: bool) -> f64 {
    if zero_order {
        1.0
    } else {
        0.0
    }
}

/// Solves A m = ρ on ω with m = 0 off ω (rows replaced by the identity).
pub fn solve_density_on_set(
    omega: &NodeMask,
    rho: &ScalarField,
    zero_order: bool,
) -> Result<ScalarField> {
    if omega.grid() != rho.grid() {
        return Err(Error::InvalidInput(
            "mask and rho live on different grids".into(),
        ));
    }
    check_rho(rho)?;
    let grid = *rho.grid();
    let mut a = grid.operator_matrix(shift(zero_order));
    let mut b = rho.values().to_vec();
    for i in 0..grid.len() {
        if !omega.get(i) {
            a.set_identity_row(i);
            b[i] = 0.0;
        }
    }
    let mut m = a.solve(&b)?;
    // Entries off ω are exactly zero from the identity rows; clip roundoff
    // of order 1e-17 inside ω so positivity holds bitwise.
    for v in &mut m {
        if *v < 0.0 && *v > -1e-14 {
            *v = 0.0;
        }
    }
    ScalarField::new(grid, m)
}

/// Solves (A + diag(α/ε on active)) m = ρ.
pub fn solve_density_penalized(
    killing: &KillingData,
    rho: &ScalarField,
    zero_order: bool,
) -> Result<ScalarField> {
    if killing.alpha.grid() != rho.grid() {
        return Err(Error::InvalidInput(
            "killing data and rho live on different grids".into(),
        ));
    }
    check_rho(rho)?;
    let grid = *rho.grid();
    let mut a = grid.operator_matrix(shift(zero_order));
    a.add_diagonal(&killing.rates());
    let m = a.solve(rho.values())?;
    ScalarField::new(grid, m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionCheck {
    pub slack: ScalarField,
    pub min_slack: f64,
    pub violating: Vec<usize>,
}

/// slack = ρ − A m; nodes with slack < −tol are listed as violations.
pub fn check_subsolution(
    m: &ScalarField,
    rho: &ScalarField,
    zero_order: bool,
    tol: f64,
) -> Result<SubsolutionCheck> {
    let am = crate::grid::apply_operator(m, zero_order);
    let slack = rho.sub(&am)?;
    let min_slack = slack.min();
    let violating = slack
        .values()
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < -tol)
        .map(|(i, _)| i)
        .collect();
    Ok(SubsolutionCheck {
        slack,
        min_slack,
        violating,
    })
}

/// Matrix of one forward step, (I/dt − Δ_h + Advᵀ + diag(rates)).
pub fn fokker_planck_matrix(
    grid: &Grid,
    dt: f64,
    rates: &[f64],
    drift: Option<&UpwindDrift>,
) -> BandMatrix {
    let mut b = grid.operator_matrix(1.0 / dt);
    if let Some(d) = drift {
        let bw = grid.bandwidth();
        let mut adv = BandMatrix::zeros(grid.len(), bw, bw);
        d.add_advection(grid, &mut adv);
        let adv_t = adv.transpose();
        for i in 0..grid.len() {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(grid.len() - 1);
            for j in lo..=hi {
                let v = adv_t.get(i, j);
                if v != 0.0 {
                    b.add(i, j, v);
                }
            }
        }
    }
    b.add_diagonal(rates);
    b
}

/// Forward implicit Euler for ∂_t m − Δm − div(m b) + V m = 0.
///
/// `killing[k-1]` and `drift[k-1]` act in the step producing slice k.
pub fn solve_density_parabolic(
    m0: &ScalarField,
    killing: Option<&[KillingData]>,
    drift: Option<&[UpwindDrift]>,
    timegrid: &TimeGrid,
) -> Result<FieldTrajectory> {
    if let Some(v) = m0.values().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "initial density must be nonnegative, found {v}"
        )));
    }
    let grid = *m0.grid();
    let n_steps = timegrid.n_steps();
    if let Some(k) = killing {
        if k.len() != n_steps {
            return Err(Error::Shape {
                expected: n_steps,
                got: k.len(),
            });
        }
    }
    if let Some(d) = drift {
        if d.len() != n_steps {
            return Err(Error::Shape {
                expected: n_steps,
                got: d.len(),
            });
        }
        for dk in d {
            dk.validate(&grid)?;
        }
    }
    let dt = timegrid.dt();
    let zero = vec![0.0; grid.len()];
    let mut slices = Vec::with_capacity(n_steps + 1);
    slices.push(m0.clone());
    for k in 1..=n_steps {
        let rates = killing.map_or_else(|| zero.clone(), |kd| kd[k - 1].rates());
        let b = fokker_planck_matrix(&grid, dt, &rates, drift.map(|d| &d[k - 1]));
        let rhs: Vec<f64> = slices[k - 1].values().iter().map(|v| v / dt).collect();
        let m = b.solve(&rhs)?;
        slices.push(ScalarField::new(grid, m)?);
    }
    FieldTrajectory::new(*timegrid, slices)
}
