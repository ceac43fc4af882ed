//! Time-dependent stopping game with an obstacle produced by a backward
//! heat flow, and its duality identity.

use mfgstop::evolutive::osmfg_continuation;
use mfgstop::scenarios::{scenario, Problem};
use mfgstop::stationary::{default_schedule, CouplingConfig};

fn main() -> mfgstop::Result<()> {
    for name in ["evolutive_psi0", "evolutive_heat_g"] {
        let s = scenario(name)?;
        let Problem::Evolutive {
            m0,
            timegrid,
            obstacle,
        } = &s.problem
        else {
            unreachable!()
        };
        let r = osmfg_continuation(
            &s.cost,
            obstacle,
            m0,
            timegrid,
            &default_schedule(),
            &CouplingConfig::default(),
        )?;
        let masses = r.solution.m.masses();
        println!(
            "{name}: max residual {:.2e}, duality gap {:.2e}, mass {:.4e} -> {:.4e}",
            r.report.max_residual(),
            r.report.r_duality,
            masses[0],
            masses[masses.len() - 1]
        );
    }
    Ok(())
}
