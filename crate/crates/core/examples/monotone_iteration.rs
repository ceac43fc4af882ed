//! Ordered iteration for anti-monotone costs: the smallest classical
//! solution next to the one found by continuation.

use mfgstop::cost::CostOperator;
use mfgstop::grid::{Grid, ScalarField};
use mfgstop::scenarios::{raised_cosine_bump, scenario, well_profile, Problem};
use mfgstop::stationary::{
    continuation_solve, default_schedule, monotone_iteration_solve, CouplingConfig, MonotoneConfig,
};

fn report(label: &str, cost: &CostOperator, rho: &ScalarField) -> mfgstop::Result<()> {
    let mono = monotone_iteration_solve(cost, rho, &MonotoneConfig::default())?;
    let masses: Vec<String> = mono
        .m_history
        .iter()
        .map(|m| format!("{:.3e}", m.mass()))
        .collect();
    let cont = continuation_solve(cost, rho, &default_schedule(), &CouplingConfig::default())?;
    println!("{label}: iterate masses [{}]", masses.join(", "));
    println!(
        "  smallest solution mass {:.4e} after {} iterations, continuation mass {:.4e}, gap {:.3e}",
        mono.m.mass(),
        mono.iterations,
        cont.m.mass(),
        mono.m.dist_inf(&cont.m)?
    );
    Ok(())
}

fn main() -> mfgstop::Result<()> {
    let s = scenario("anti_monotone_1d")?;
    let Problem::Stationary { rho, .. } = &s.problem else {
        unreachable!()
    };
    report("anti_monotone_1d", &s.cost, rho)?;
    let g = Grid::line(0.0, 1.0, 31)?;
    report(
        "f(m) = well - 20 m",
        &CostOperator::local_power(-20.0, 1.0, well_profile(g))?,
        &raised_cosine_bump(g),
    )?;
    Ok(())
}
