//! Density equations: exclusion on a set, subsolution check, and the
//! parabolic Fokker-Planck step with killing and drift.

use mfgstop::density::{
    check_subsolution, solve_density_on_set, solve_density_parabolic, KillingData, UpwindDrift,
};
use mfgstop::grid::{Grid, NodeMask, ScalarField, TimeGrid};
use mfgstop::scenarios::{gaussian_density, raised_cosine_bump};

fn main() -> mfgstop::Result<()> {
    let g = Grid::line(0.0, 1.0, 31)?;
    let rho = raised_cosine_bump(g);
    let omega = NodeMask::from_fn(g, |i| g.coords(i)[0] < 0.55);
    let m = solve_density_on_set(&omega, &rho, true)?;
    let check = check_subsolution(&m, &rho, true, 1e-12)?;
    println!(
        "exclusion for x >= 0.55: mass {:.4e}, max {:.4e}, min subsolution slack {:.2e}",
        m.mass(),
        m.max(),
        check.min_slack
    );

    let tg = TimeGrid::new(0.5, 25)?;
    let m0 = gaussian_density(g, 0.1);
    let exit = NodeMask::from_fn(g, |i| g.coords(i)[0] > 0.7);
    let killing = vec![KillingData::new(ScalarField::constant(g, 1.0), exit, 1e-2)?; tg.n_steps()];
    let mut drift = UpwindDrift::zeros(&g);
    drift.pos[0] = vec![0.8; g.len()];
    let drifts = vec![drift; tg.n_steps()];
    let heat = solve_density_parabolic(&m0, None, None, &tg)?;
    let pushed = solve_density_parabolic(&m0, Some(&killing), Some(&drifts), &tg)?;
    println!("{:>6} {:>12} {:>12}", "t", "mass heat", "mass killed");
    for k in (0..=tg.n_steps()).step_by(5) {
        println!(
            "{:>6.2} {:>12.5e} {:>12.5e}",
            tg.time(k),
            heat.slice(k).mass(),
            pushed.slice(k).mass()
        );
    }
    Ok(())
}
