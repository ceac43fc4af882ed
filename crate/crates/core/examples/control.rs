//! Controlled stopping game with a smoothed-norm Hamiltonian: residuals,
//! the optimal drift, and the control objective.

use mfgstop::control::{control_objective, cosmfg_coupled_solve};
use mfgstop::scenarios::{scenario, Problem};
use mfgstop::stationary::{default_schedule, CouplingConfig};

fn main() -> mfgstop::Result<()> {
    let s = scenario("control_smoothnorm")?;
    let Problem::Control {
        m0,
        timegrid,
        hamiltonian,
    } = &s.problem
    else {
        unreachable!()
    };
    let r = cosmfg_coupled_solve(
        &s.cost,
        hamiltonian,
        m0,
        timegrid,
        &default_schedule(),
        &CouplingConfig::default(),
    )?;
    let rep = &r.report;
    println!(
        "r_hjb {:.2e}, r_continuation {:.2e}, r_contact {:.2e}, r_duality {:.2e}",
        rep.r_hjb, rep.r_continuation, rep.r_contact, rep.r_duality
    );
    let speed = r
        .drift
        .iter()
        .flat_map(|d| (0..s.grid.len()).map(move |i| d.speed_sq(i).sqrt()))
        .fold(0.0, f64::max);
    let pot = s.cost.potential().expect("local cost");
    println!(
        "largest drift speed {speed:.3}, control objective {:.6e}, final mass {:.4e}",
        control_objective(&r.m, &r.drift, &pot, hamiltonian, 1e-9)?,
        r.m.slice(timegrid.n_steps()).mass()
    );
    Ok(())
}
