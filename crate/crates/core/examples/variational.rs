//! Potential game solved as a convex program, checked against continuation
//! and the first-order certificate.

use mfgstop::cost::CostOperator;
use mfgstop::grid::Grid;
use mfgstop::scenarios::{raised_cosine_bump, well_profile};
use mfgstop::stationary::{
    continuation_solve, default_schedule, euler_lagrange_certificate, feasible_battery,
    variational_minimize, CouplingConfig, VariationalConfig,
};

fn main() -> mfgstop::Result<()> {
    let g = Grid::line(0.0, 1.0, 31)?;
    let cost = CostOperator::local_power(1.0, 1.0, well_profile(g))?;
    let rho = raised_cosine_bump(g);
    let pot = cost.potential().expect("local costs have a potential");
    let var = variational_minimize(&pot, &rho, &VariationalConfig::default())?;
    println!(
        "objective {:.6e}, feasibility {:.2e}, {} outer / {} inner iterations",
        var.objective, var.feasibility, var.outer_iterations, var.inner_iterations
    );
    let cont = continuation_solve(&cost, &rho, &default_schedule(), &CouplingConfig::default())?;
    let battery = feasible_battery(&rho, 20, 0)?;
    println!(
        "gap to continuation {:.2e}; min <f(m), m' - m> over {} feasible densities {:.2e}",
        var.m.dist_inf(&cont.m)?,
        battery.len(),
        euler_lagrange_certificate(&cost, &var.m, &battery)?
    );
    Ok(())
}
