//! Multi-start probes on the strictly monotone stationary fixtures: every
//! start lands on the same solution.

use mfgstop::scenarios::{scenario, Problem};
use mfgstop::stationary::{default_schedule, uniqueness_probe, CouplingConfig};

fn main() -> mfgstop::Result<()> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    for name in ["monotone_1d", "monotone_2d"] {
        let s = scenario(name)?;
        let Problem::Stationary { rho, .. } = &s.problem else {
            unreachable!()
        };
        let p = uniqueness_probe(
            &s.cost,
            rho,
            5,
            0,
            &default_schedule(),
            &CouplingConfig::default(),
            threads,
        )?;
        println!(
            "{name}: max pairwise gap over {} starts {:.2e}",
            p.solutions.len(),
            p.max_pairwise_gap
        );
    }
    Ok(())
}
