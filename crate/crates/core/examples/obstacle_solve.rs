//! Stationary obstacle problem: projected SOR against the cosh closed form
//! and the exhaustive oracle.

use mfgstop::grid::{classify_nodes, Grid, ScalarField};
use mfgstop::obstacle::{
    complementarity_residual, obstacle_oracle, solve_obstacle_stationary, ObstacleSolveConfig,
};

fn main() -> mfgstop::Result<()> {
    let cfg = ObstacleSolveConfig {
        tol: 1e-12,
        ..Default::default()
    };
    println!("f = -1, psi = 0: error against 1 - cosh(x - 1/2)/cosh(1/2)");
    for n in [31, 63, 127] {
        let g = Grid::line(0.0, 1.0, n)?;
        let u = solve_obstacle_stationary(
            &ScalarField::constant(g, -1.0),
            &ScalarField::zeros(g),
            &cfg,
        )?;
        let exact = ScalarField::from_fn(g, |x| (x[0] - 0.5).cosh() / 0.5f64.cosh() - 1.0);
        println!("  n = {n:>3}: {:.3e}", u.dist_inf(&exact)?);
    }

    let g = Grid::line(0.0, 1.0, 12)?;
    let f = ScalarField::from_fn(g, |x| 2.0 * (7.0 * x[0]).sin());
    let psi = ScalarField::zeros(g);
    let u = solve_obstacle_stationary(&f, &psi, &cfg)?;
    let (cont, contact) = classify_nodes(&u, &psi, 1e-10)?;
    println!(
        "oscillating source on 12 nodes: {} continuation, {} contact, oracle gap {:.2e}, complementarity residual {:.2e}",
        cont.count(),
        contact.count(),
        u.dist_inf(&obstacle_oracle(&f, &psi)?)?,
        complementarity_residual(&g.operator_matrix(1.0), u.values(), f.values(), psi.values())
    );
    Ok(())
}
