#![allow(dead_code)]

use mfgstop::grid::{Grid, NodeMask, ScalarField};
use nalgebra::{DMatrix, DVector};

/// Dense −Δ_h + shift·I assembled from the stencil definition.
pub fn dense_operator(grid: &Grid, shift: f64) -> DMatrix<f64> {
    let n = grid.len();
    let nx = grid.n_interior()[0];
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let (ix, iy) = (i % nx, i / nx);
        a[(i, i)] += shift;
        for k in 0..grid.dim() {
            let h2 = grid.spacing()[k].powi(2);
            a[(i, i)] += 2.0 / h2;
            let (pos, len, stride) = if k == 0 {
                (ix, nx, 1)
            } else {
                (iy, grid.n_interior()[1], nx)
            };
            if pos > 0 {
                a[(i, i - stride)] -= 1.0 / h2;
            }
            if pos + 1 < len {
                a[(i, i + stride)] -= 1.0 / h2;
            }
        }
    }
    a
}

pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    a.clone()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .expect("nonsingular")
        .as_slice()
        .to_vec()
}

/// Dense solve of A m = ρ on ω with m = 0 elsewhere.
pub fn dense_restricted(grid: &Grid, omega: &[bool], rho: &[f64], shift: f64) -> Vec<f64> {
    let a = dense_operator(grid, shift);
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| omega[i]).collect();
    let mut out = vec![0.0; grid.len()];
    if idx.is_empty() {
        return out;
    }
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])]);
    let rhs: Vec<f64> = idx.iter().map(|&i| rho[i]).collect();
    for (v, &i) in dense_solve(&sub, &rhs).iter().zip(&idx) {
        out[i] = *v;
    }
    out
}

pub fn field(grid: Grid, values: Vec<f64>) -> ScalarField {
    ScalarField::new(grid, values).unwrap()
}

pub fn mask(grid: Grid, values: Vec<bool>) -> NodeMask {
    NodeMask::new(grid, values).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Closed-form solution of −w'' + w = 1 on (0, 1), w(0) = w(1) = 0.
pub fn cosh_profile(x: f64) -> f64 {
    1.0 - (x - 0.5).cosh() / 0.5f64.cosh()
}
