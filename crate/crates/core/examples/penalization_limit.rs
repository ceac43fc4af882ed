//! Penalized obstacle and killed density solves converging to their exact
//! limits as epsilon decreases.

use mfgstop::density::{solve_density_on_set, solve_density_penalized, KillingData};
use mfgstop::grid::{Grid, NodeMask, ScalarField};
use mfgstop::obstacle::{solve_obstacle_penalized, solve_obstacle_stationary, ObstacleSolveConfig};
use mfgstop::scenarios::{raised_cosine_bump, well_profile};

fn main() -> mfgstop::Result<()> {
    let g = Grid::square(0.0, 1.0, 15)?;
    let cfg = ObstacleSolveConfig {
        tol: 1e-13,
        ..Default::default()
    };
    let (rho, f, zero) = (
        raised_cosine_bump(g),
        well_profile(g),
        ScalarField::zeros(g),
    );
    let u = solve_obstacle_stationary(&f, &zero, &cfg)?;
    let omega = NodeMask::from_fn(g, |i| u.values()[i] < 0.0);
    let m = solve_density_on_set(&omega, &rho, true)?;
    println!(
        "{} of {} nodes in the stopping region",
        g.len() - omega.count(),
        g.len()
    );
    println!("{:>8} {:>10} {:>10}", "epsilon", "|u_e - u|", "|m_e - m|");
    for j in 1..=6 {
        let eps = 10f64.powi(-j);
        let ue = solve_obstacle_penalized(&f, &zero, eps, &cfg)?;
        let killing = KillingData::new(ScalarField::constant(g, 1.0), omega.complement(), eps)?;
        let me = solve_density_penalized(&killing, &rho, true)?;
        println!(
            "{eps:>8.0e} {:>10.2e} {:>10.2e}",
            ue.dist_inf(&u)?,
            me.dist_inf(&m)?
        );
    }
    Ok(())
}
