mod common;

use common::{dense_operator, dense_solve, max_diff};
use mfgstop::cost::{CostOperator, Monotonicity};
use mfgstop::density::solve_density_on_set;
use mfgstop::grid::{apply_elliptic, inner, Grid, NodeMask, ScalarField};
use mfgstop::scenarios::{
    distance_to_center, raised_cosine_bump, scenario_standard, well_profile, Problem,
};
use mfgstop::stationary::{
    continuation_solve, default_schedule, euler_lagrange_certificate, feasible_battery,
    geometric_schedule, monotone_iteration_solve, penalized_coupled_solve, uniqueness_probe,
    uniqueness_probe_with_seeds, validate_schedule, variational_minimize, verify_mixed,
    CouplingConfig, MonotoneConfig, VariationalConfig,
};
use mfgstop::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn line(n: usize) -> Grid {
    Grid::line(0.0, 1.0, n).unwrap()
}

fn free(rho: &ScalarField) -> ScalarField {
    solve_density_on_set(&NodeMask::all(*rho.grid()), rho, true).unwrap()
}

fn well_instance(grid: Grid) -> (CostOperator, ScalarField) {
    (
        CostOperator::local_power(1.0, 1.0, well_profile(grid)).unwrap(),
        raised_cosine_bump(grid),
    )
}

#[test]
fn positive_constant_cost_kills_everything() {
    let g = line(15);
    let rho = raised_cosine_bump(g);
    let cost = CostOperator::nonlocal_affine(0.5, 0.0, ScalarField::zeros(g)).unwrap();
    for eps in [1e-2, 1e-4] {
        let t = penalized_coupled_solve(&cost, &rho, eps, &CouplingConfig::default()).unwrap();
        assert!(t.u.min() > 0.0);
        assert!(t.alpha.values().iter().all(|a| *a == 1.0));
        let killed = dense_operator(&g, 1.0) + DMatrix::identity(g.len(), g.len()) / eps;
        assert!(max_diff(t.m.values(), &dense_solve(&killed, rho.values())) < 1e-14);
        assert!(t.m.norm_inf() <= eps * rho.norm_inf());
    }
}

#[test]
fn negative_constant_cost_decouples() {
    let g = line(15);
    let rho = raised_cosine_bump(g);
    let cost = CostOperator::nonlocal_affine(-1.0, 0.0, ScalarField::zeros(g)).unwrap();
    let t = penalized_coupled_solve(&cost, &rho, 1e-3, &CouplingConfig::default()).unwrap();
    assert!(t.u.max() < 0.0);
    assert!(t.m.dist_inf(&free(&rho)).unwrap() < 1e-14);
}

#[test]
fn penalized_triple_satisfies_its_equations() {
    let s = scenario_standard("monotone_1d").unwrap();
    let Problem::Stationary { rho, .. } = &s.problem else {
        panic!()
    };
    let eps = 1e-3;
    let t = penalized_coupled_solve(&s.cost, rho, eps, &CouplingConfig::default()).unwrap();
    let fm = s.cost.evaluate(&t.m).unwrap();
    let au = apply_elliptic(&t.u);
    let r_u = (0..s.grid.len())
        .map(|i| (au.values()[i] + t.u.values()[i].max(0.0) / eps - fm.values()[i]).abs())
        .fold(0.0, f64::max);
    let am = apply_elliptic(&t.m);
    let r_m = (0..s.grid.len())
        .map(|i| {
            (am.values()[i] + t.alpha.values()[i] / eps * t.m.values()[i] - rho.values()[i]).abs()
        })
        .fold(0.0, f64::max);
    assert!(r_u <= 1e-8 && r_m <= 1e-8, "r_u {r_u:e} r_m {r_m:e}");
    for (a, u) in t.alpha.values().iter().zip(t.u.values()) {
        assert!((0.0..=1.0).contains(a));
        if *u > t.delta_c {
            assert_eq!(*a, 1.0);
        }
    }
}

#[test]
fn continuation_drives_residuals_down() {
    let (cost, rho) = well_instance(line(31));
    let r =
        continuation_solve(&cost, &rho, &default_schedule(), &CouplingConfig::default()).unwrap();
    let obstacle: Vec<f64> = r.stages.iter().map(|s| s.report.r_obstacle).collect();
    assert!(obstacle.windows(2).all(|w| w[1] < w[0]), "{obstacle:?}");
    assert!(r.report.r_duality <= 1e-6);
    assert!(r.report.max_residual() <= 1e-6);
    assert!(r.report.contact_nodes > 0);
}

#[test]
fn zero_rho_gives_zero_density() {
    let g = line(15);
    let (cost, _) = well_instance(g);
    let r = continuation_solve(
        &cost,
        &ScalarField::zeros(g),
        &default_schedule(),
        &CouplingConfig::default(),
    )
    .unwrap();
    assert_eq!(r.m.norm_inf(), 0.0);
    assert!(r.stages.iter().all(|s| s.report.r_subsolution == 0.0));
}

#[test]
fn single_stage_is_a_penalized_solve() {
    let (cost, rho) = well_instance(line(31));
    let cfg = CouplingConfig::default();
    let r = continuation_solve(&cost, &rho, &[1e-3], &cfg).unwrap();
    let t = penalized_coupled_solve(&cost, &rho, 1e-3, &cfg).unwrap();
    assert_eq!(r.m, t.m);
    assert_eq!(r.u, t.u);
}

#[test]
fn schedule_validation() {
    assert!(validate_schedule(&[]).is_err());
    assert!(validate_schedule(&[1e-2, 1e-1]).is_err());
    assert!(validate_schedule(&[1e-1, 0.0]).is_err());
    let s = geometric_schedule(0.1, 0.25, 3);
    assert_eq!(s, vec![0.1, 0.025, 0.00625]);
    assert_eq!(default_schedule().len(), 10);
}

#[test]
fn monotone_iteration_positive_start_stops_at_zero() {
    let g = line(31);
    let rho = raised_cosine_bump(g);
    let cost = CostOperator::nonlocal_affine(1.0, -0.5, distance_to_center(g)).unwrap();
    let r = monotone_iteration_solve(&cost, &rho, &MonotoneConfig::default()).unwrap();
    assert_eq!(r.m.norm_inf(), 0.0);
    assert!(r.iterations <= 2);
}

#[test]
fn monotone_iteration_negative_cost_reaches_free_density() {
    let g = line(31);
    let rho = raised_cosine_bump(g);
    let cost = CostOperator::nonlocal_affine(-1.0, -1.0, distance_to_center(g)).unwrap();
    let r = monotone_iteration_solve(&cost, &rho, &MonotoneConfig::default()).unwrap();
    assert!(r.iterations <= 2);
    assert!(r.m.dist_inf(&free(&rho)).unwrap() < 1e-14);
    assert!(r.u.max() < 0.0);
}

#[test]
fn monotone_iteration_finds_smallest_solution() {
    let s = scenario_standard("anti_monotone_1d").unwrap();
    let Problem::Stationary { rho, .. } = &s.problem else {
        panic!()
    };
    assert_eq!(s.cost.monotonicity(), Monotonicity::AntiMonotone);
    let mono = monotone_iteration_solve(&s.cost, rho, &MonotoneConfig::default()).unwrap();
    let cont = continuation_solve(
        &s.cost,
        rho,
        &default_schedule(),
        &CouplingConfig::default(),
    )
    .unwrap();
    assert!(mono
        .m
        .values()
        .iter()
        .zip(cont.m.values())
        .all(|(a, b)| *a <= b + 1e-6));
    assert!(mono.max_m_decrease <= 1e-10 && mono.max_u_increase <= 1e-10);
}

#[test]
fn monotone_iteration_rejects_other_costs() {
    let (cost, rho) = well_instance(line(7));
    assert!(matches!(
        monotone_iteration_solve(&cost, &rho, &MonotoneConfig::default()),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn variational_saturates_when_target_is_infeasible() {
    let g = line(9);
    let rho = raised_cosine_bump(g);
    let cost = CostOperator::local_power(1.0, 1.0, ScalarField::constant(g, -100.0)).unwrap();
    let r = variational_minimize(
        &cost.potential().unwrap(),
        &rho,
        &VariationalConfig::default(),
    )
    .unwrap();
    let oracle = dense_solve(&dense_operator(&g, 1.0), rho.values());
    assert!(max_diff(r.m.values(), &oracle) < 1e-8);
    assert!(r.feasibility <= 1e-9);
}

#[test]
fn variational_pure_quadratic_is_zero() {
    let g = line(15);
    let cost = CostOperator::local_power(1.0, 1.0, ScalarField::zeros(g)).unwrap();
    let r = variational_minimize(
        &cost.potential().unwrap(),
        &raised_cosine_bump(g),
        &VariationalConfig::default(),
    )
    .unwrap();
    assert!(r.m.norm_inf() < 1e-12);
}

#[test]
fn variational_requires_strict_convexity() {
    let g = line(7);
    let cost = CostOperator::local_power(-1.0, 1.0, ScalarField::zeros(g)).unwrap();
    assert!(variational_minimize(
        &cost.potential().unwrap(),
        &raised_cosine_bump(g),
        &VariationalConfig::default()
    )
    .is_err());
    let nonlocal = CostOperator::nonlocal_affine(1.0, -1.0, ScalarField::constant(g, 1.0)).unwrap();
    assert!(nonlocal.potential().is_none());
}

#[test]
fn variational_agrees_with_continuation_on_stopping_instance() {
    let (cost, rho) = well_instance(line(31));
    let var = variational_minimize(
        &cost.potential().unwrap(),
        &rho,
        &VariationalConfig::default(),
    )
    .unwrap();
    let cont =
        continuation_solve(&cost, &rho, &default_schedule(), &CouplingConfig::default()).unwrap();
    assert!(var.m.dist_inf(&cont.m).unwrap() <= 1e-4);
    let battery = feasible_battery(&rho, 8, 3).unwrap();
    assert!(euler_lagrange_certificate(&cost, &var.m, &battery).unwrap() >= -1e-6);
    let fm = cost.evaluate(&var.m).unwrap();
    let u = mfgstop::obstacle::solve_obstacle_stationary(
        &fm,
        &ScalarField::zeros(*rho.grid()),
        &Default::default(),
    )
    .unwrap();
    let rep = verify_mixed(&u, &var.m, &cost, &rho, 1e-8).unwrap();
    assert!(rep.r_duality <= 1e-6, "duality {}", rep.r_duality);
}

#[test]
fn battery_members_are_feasible() {
    let g = Grid::square(0.0, 1.0, 7).unwrap();
    let rho = raised_cosine_bump(g);
    for m in feasible_battery(&rho, 5, 1).unwrap() {
        assert!(m.min() >= 0.0);
        let slack = rho.sub(&apply_elliptic(&m)).unwrap();
        assert!(slack.min() >= -1e-12);
    }
}

#[test]
fn verifier_flags_non_solutions() {
    let g = line(31);
    let rho = raised_cosine_bump(g);
    let cost = CostOperator::local_power(1.0, 1.0, ScalarField::constant(g, -0.5)).unwrap();
    let rep = verify_mixed(&ScalarField::zeros(g), &free(&rho), &cost, &rho, 1e-8).unwrap();
    assert!(rep.r_obstacle > 0.1);
    let pos = CostOperator::local_power(1.0, 1.0, ScalarField::constant(g, 0.5)).unwrap();
    let u = mfgstop::obstacle::solve_obstacle_stationary(
        &ScalarField::constant(g, 0.5),
        &ScalarField::zeros(g),
        &Default::default(),
    )
    .unwrap();
    assert_eq!(u.norm_inf(), 0.0);
    let rep = verify_mixed(&u, &ScalarField::zeros(g), &pos, &rho, 1e-8).unwrap();
    assert_eq!(rep.max_residual(), 0.0);
}

#[test]
fn verifier_duality_matches_definition() {
    let (cost, rho) = well_instance(line(15));
    let r =
        continuation_solve(&cost, &rho, &default_schedule(), &CouplingConfig::default()).unwrap();
    let fm = cost.evaluate(&r.m).unwrap();
    let direct = (inner(&fm, &r.m).unwrap() - inner(&r.u, &rho).unwrap()).abs();
    assert!((direct - r.report.r_duality).abs() < 1e-15);
}

#[test]
fn uniqueness_probe_identical_seeds_and_errors() {
    let (cost, rho) = well_instance(line(15));
    let cfg = CouplingConfig::default();
    let sched = default_schedule();
    let p = uniqueness_probe_with_seeds(&cost, &rho, &[7, 7], &sched, &cfg, 1).unwrap();
    assert_eq!(p.max_pairwise_gap, 0.0);
    assert!(uniqueness_probe(&cost, &rho, 1, 0, &sched, &cfg, 1).is_err());
}

#[test]
fn uniqueness_probe_is_thread_count_invariant() {
    let (cost, rho) = well_instance(line(15));
    let cfg = CouplingConfig::default();
    let sched = default_schedule();
    let a = uniqueness_probe(&cost, &rho, 4, 9, &sched, &cfg, 1).unwrap();
    let b = uniqueness_probe(&cost, &rho, 4, 9, &sched, &cfg, 3).unwrap();
    assert_eq!(a.solutions, b.solutions);
    assert!(a.max_pairwise_gap <= 1e-5);
}

#[test]
fn cost_tags_follow_signs() {
    let g = line(5);
    let w = ScalarField::constant(g, 1.0);
    assert_eq!(
        CostOperator::local_power(2.0, 1.0, w.clone())
            .unwrap()
            .monotonicity(),
        Monotonicity::StrictMonotone
    );
    assert_eq!(
        CostOperator::nonlocal_affine(1.0, -1.0, w.clone())
            .unwrap()
            .monotonicity(),
        Monotonicity::AntiMonotone
    );
    assert_eq!(
        CostOperator::nonlocal_affine(1.0, 1.0, w.clone())
            .unwrap()
            .monotonicity(),
        Monotonicity::Neither
    );
    assert!(CostOperator::local_power(1.0, 0.5, w).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_derivative_is_the_cost(a in 0.1f64..3.0, p in 1.0f64..3.0, f0 in -1.0f64..1.0, m in 0.01f64..2.0) {
        let g = line(3);
        let cost = CostOperator::local_power(a, p, ScalarField::constant(g, f0)).unwrap();
        let pot = cost.potential().unwrap();
        let d = 1e-6;
        let fd = (pot.pointwise(1, m + d) - pot.pointwise(1, m - d)) / (2.0 * d);
        let f = cost.evaluate(&ScalarField::constant(g, m)).unwrap().values()[1];
        prop_assert!((fd - f).abs() <= 1e-6 * (1.0 + f.abs()));
        prop_assert!((pot.derivative(1, m) - f).abs() <= 1e-12 * (1.0 + f.abs()));
    }

    #[test]
    fn local_power_is_monotone(a in 0.1f64..3.0, p in 1.0f64..3.0, m1 in prop::collection::vec(0.0f64..2.0, 6), m2 in prop::collection::vec(0.0f64..2.0, 6)) {
        let g = line(6);
        let cost = CostOperator::local_power(a, p, well_profile(g)).unwrap();
        let (m1, m2) = (ScalarField::new(g, m1).unwrap(), ScalarField::new(g, m2).unwrap());
        let df = cost.evaluate(&m1).unwrap().sub(&cost.evaluate(&m2).unwrap()).unwrap();
        prop_assert!(inner(&df, &m1.sub(&m2).unwrap()).unwrap() >= -1e-14);
    }
}
