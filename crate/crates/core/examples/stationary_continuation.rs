//! Epsilon continuation for a stationary stopping game with a verified
//! mixed-solution report.

use mfgstop::cost::CostOperator;
use mfgstop::grid::Grid;
use mfgstop::scenarios::{raised_cosine_bump, well_profile};
use mfgstop::stationary::{continuation_solve, default_schedule, CouplingConfig};

fn main() -> mfgstop::Result<()> {
    let g = Grid::square(0.0, 1.0, 15)?;
    let cost = CostOperator::local_power(1.0, 1.0, well_profile(g))?;
    let rho = raised_cosine_bump(g);
    let r = continuation_solve(&cost, &rho, &default_schedule(), &CouplingConfig::default())?;
    println!(
        "{:>5} {:>9} {:>6} {:>10} {:>10}",
        "stage", "epsilon", "iters", "r_obstacle", "r_duality"
    );
    for st in &r.stages {
        println!(
            "{:>5} {:>9.2e} {:>6} {:>10.2e} {:>10.2e}",
            st.stage, st.epsilon, st.iterations, st.report.r_obstacle, st.report.r_duality
        );
    }
    let rep = &r.report;
    println!(
        "final: max residual {:.2e}, {} contact nodes carrying mass {:.2e}, total mass {:.4e}",
        rep.max_residual(),
        rep.contact_nodes,
        rep.contact_mass,
        r.m.mass()
    );
    Ok(())
}
