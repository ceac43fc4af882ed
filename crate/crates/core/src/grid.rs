//! Uniform tensor grids on rectangles with homogeneous Dirichlet closure,
//! nodal fields, and the discrete elliptic operator.
//!
//! Interior nodes are numbered with the first axis fastest:
//! `index = ix + n_x * iy`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    bounds: [(f64, f64); 2],
    n: [usize; 2],
    h: [f64; 2],
}

impl Grid {
    pub fn new(dim: usize, bounds: &[(f64, f64)], n_interior: &[usize]) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if bounds.len() != dim || n_interior.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} bounds and node counts, got {} and {}",
                bounds.len(),
                n_interior.len()
            )));
        }
        let mut g = Grid {
            dim,
            bounds: [(0.0, 1.0); 2],
            n: [1; 2],
            h: [1.0; 2],
        };
        for k in 0..dim {
            let (a, b) = bounds[k];
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidGrid(format!(
                    "degenerate bounds [{a}, {b}] on axis {k}"
                )));
            }
            if n_interior[k] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 3 interior nodes per axis, got {} on axis {k}",
                    n_interior[k]
                )));
            }
            g.bounds[k] = (a, b);
            g.n[k] = n_interior[k];
            g.h[k] = (b - a) / (n_interior[k] + 1) as f64;
        }
        Ok(g)
    }

    pub fn line(a: f64, b: f64, n: usize) -> Result<Grid> {
        Grid::new(1, &[(a, b)], &[n])
    }

    pub fn square(a: f64, b: f64, n: usize) -> Result<Grid> {
        Grid::new(2, &[(a, b), (a, b)], &[n, n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds[..self.dim]
    }

    pub fn n_interior(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one node, ∏ h_k.
    pub fn cell_measure(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        [i % self.n[0], i / self.n[0]]
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.n[0] * iy
    }

    /// Coordinates of interior node `i` (the second entry is 0 in 1D).
    pub fn coords(&self, i: usize) -> [f64; 2] {
        let mi = self.multi_index(i);
        let mut x = [0.0; 2];
        for k in 0..self.dim {
            x[k] = self.bounds[k].0 + (mi[k] + 1) as f64 * self.h[k];
        }
        x
    }

    pub fn center(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for k in 0..self.dim {
            c[k] = 0.5 * (self.bounds[k].0 + self.bounds[k].1);
        }
        c
    }

    /// Interior neighbour of node `i` along `axis` (`forward` = +1 step),
    /// or `None` when the neighbour is a boundary node.
    pub fn neighbor(&self, i: usize, axis: usize, forward: bool) -> Option<usize> {
        let mi = self.multi_index(i);
        let stride = if axis == 0 { 1 } else { self.n[0] };
        if forward {
            (mi[axis] + 1 < self.n[axis]).then_some(i + stride)
        } else {
            (mi[axis] > 0).then(|| i - stride)
        }
    }

    /// Half bandwidth of stencil matrices in the node ordering.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.n[0]
        }
    }

    /// Banded matrix of −Δ_h + shift·I.
    pub fn operator_matrix(&self, shift: f64) -> BandMatrix {
        let bw = self.bandwidth();
        let mut a = BandMatrix::zeros(self.len(), bw, bw);
        for i in 0..self.len() {
            let mut diag = shift;
            for k in 0..self.dim {
                let c = 1.0 / (self.h[k] * self.h[k]);
                diag += 2.0 * c;
                for fwd in [false, true] {
                    if let Some(j) = self.neighbor(i, k, fwd) {
                        a.add(i, j, -c);
                    }
                }
            }
            a.add(i, i, diag);
        }
        a
    }

    fn check(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<TimeGrid> {
        if !(horizon.is_finite() && horizon > 0.0) || n_steps == 0 {
            return Err(Error::InvalidGrid(format!(
                "time grid needs T > 0 and n_steps ≥ 1, got T={horizon}, n_steps={n_steps}"
            )));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.grid.check(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_measure()
    }

    pub fn dist_inf(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check(&other.grid)?;
        Ok(max_abs_diff(&self.values, &other.values))
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    timegrid: TimeGrid,
    slices: Vec<ScalarField>,
}

impl FieldTrajectory {
    pub fn new(timegrid: TimeGrid, slices: Vec<ScalarField>) -> Result<Self> {
        if slices.len() != timegrid.n_steps() + 1 {
            return Err(Error::Shape {
                expected: timegrid.n_steps() + 1,
                got: slices.len(),
            });
        }
        let g = *slices[0].grid();
        for s in &slices {
            g.check(s.grid())?;
        }
        Ok(FieldTrajectory { timegrid, slices })
    }

    pub fn constant(timegrid: TimeGrid, field: &ScalarField) -> Self {
        FieldTrajectory {
            timegrid,
            slices: vec![field.clone(); timegrid.n_steps() + 1],
        }
    }

    pub fn zeros(timegrid: TimeGrid, grid: Grid) -> Self {
        FieldTrajectory::constant(timegrid, &ScalarField::zeros(grid))
    }

    pub fn timegrid(&self) -> &TimeGrid {
        &self.timegrid
    }

    pub fn grid(&self) -> &Grid {
        self.slices[0].grid()
    }

    pub fn slices(&self) -> &[ScalarField] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &ScalarField {
        &self.slices[k]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut ScalarField {
        &mut self.slices[k]
    }

    pub fn dist_inf(&self, other: &FieldTrajectory) -> Result<f64> {
        if self.slices.len() != other.slices.len() {
            return Err(Error::Shape {
                expected: self.slices.len(),
                got: other.slices.len(),
            });
        }
        let mut d: f64 = 0.0;
        for (a, b) in self.slices.iter().zip(&other.slices) {
            d = d.max(a.dist_inf(b)?);
        }
        Ok(d)
    }

    pub fn masses(&self) -> Vec<f64> {
        self.slices.iter().map(ScalarField::mass).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMask {
    grid: Grid,
    mask: Vec<bool>,
}

impl NodeMask {
    pub fn new(grid: Grid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                got: mask.len(),
            });
        }
        Ok(NodeMask { grid, mask })
    }

    pub fn all(grid: Grid) -> Self {
        NodeMask {
            grid,
            mask: vec![true; grid.len()],
        }
    }

    pub fn none(grid: Grid) -> Self {
        NodeMask {
            grid,
            mask: vec![false; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize) -> bool) -> Self {
        NodeMask {
            grid,
            mask: (0..grid.len()).map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> NodeMask {
        NodeMask {
            grid: self.grid,
            mask: self.mask.iter().map(|b| !b).collect(),
        }
    }
}

/// A m = (−Δ_h + I) m, or −Δ_h m when `zero_order` is false.
pub fn apply_operator(m: &ScalarField, zero_order: bool) -> ScalarField {
    let g = m.grid;
    let v = &m.values;
    let values = (0..g.len())
        .map(|i| {
            let mut s = if zero_order { v[i] } else { 0.0 };
            for k in 0..g.dim {
                let c = 1.0 / (g.h[k] * g.h[k]);
                let left = g.neighbor(i, k, false).map_or(0.0, |j| v[j]);
                let right = g.neighbor(i, k, true).map_or(0.0, |j| v[j]);
                s += c * (2.0 * v[i] - left - right);
            }
            s
        })
        .collect();
    ScalarField { grid: g, values }
}

/// A m with A = −Δ_h + I.
pub fn apply_elliptic(m: &ScalarField) -> ScalarField {
    apply_operator(m, true)
}

/// Discrete L² pairing Σ f_i g_i ∏ h_k.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.grid.check(&g.grid)?;
    Ok(f.values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * f.grid.cell_measure())
}

/// Default contact threshold: 1e−8 ‖ψ − u‖_∞, floored at 1e−12.
pub fn default_delta_c(u: &ScalarField, psi: &ScalarField) -> f64 {
    (1e-8 * max_abs_diff(&u.values, &psi.values)).max(1e-12)
}

/// Splits nodes into continuation (u < ψ − δ_c) and contact (the rest).
pub fn classify_nodes(
    u: &ScalarField,
    psi: &ScalarField,
    delta_c: f64,
) -> Result<(NodeMask, NodeMask)> {
    u.grid.check(&psi.grid)?;
    if !(delta_c >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "delta_c must be nonnegative, got {delta_c}"
        )));
    }
    let cont: Vec<bool> = u
        .values
        .iter()
        .zip(&psi.values)
        .map(|(a, p)| *a < p - delta_c)
        .collect();
    let contact = cont.iter().map(|b| !b).collect();
    Ok((
        NodeMask {
            grid: u.grid,
            mask: cont,
        },
        NodeMask {
            grid: u.grid,
            mask: contact,
        },
    ))
}
