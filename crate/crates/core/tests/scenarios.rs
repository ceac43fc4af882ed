mod common;

use common::dense_solve;
use mfgstop::cost::CostOperator;
use mfgstop::grid::{inner, Grid, ScalarField};
use mfgstop::scenarios::{
    build_nonexistence, build_nonuniqueness, build_obstacle_nonuniqueness, distance_to_center,
    free_density, nonexistence_profile, raised_cosine_bump, run_evidence, scenario,
    scenario_nonexistence, scenario_nonuniqueness, scenario_obstacle_nonuniqueness,
    scenario_standard, EvidenceOptions, ExpectedOutcome, NonexistenceVariant, Problem, REGISTRY,
    STANDARD,
};
use mfgstop::Error;

#[test]
fn registry_builds_every_name() {
    for name in REGISTRY {
        let s = scenario(name).unwrap();
        assert_eq!(&s.name, name);
    }
    for name in STANDARD {
        assert_eq!(scenario_standard(name).unwrap(), scenario(name).unwrap());
    }
    assert!(matches!(
        scenario("no_such"),
        Err(Error::UnknownScenario(_))
    ));
    assert!(matches!(
        scenario_standard("nonuniqueness"),
        Err(Error::UnknownScenario(_))
    ));
}

#[test]
fn expected_outcomes_are_tagged() {
    use ExpectedOutcome::*;
    let expect = [
        ("monotone_1d", UniqueMixed),
        ("monotone_2d", UniqueMixed),
        ("anti_monotone_1d", MultipleClassical),
        ("evolutive_psi0", UniqueMixed),
        ("evolutive_heat_g", UniqueMixed),
        ("control_smoothnorm", UniqueMixed),
        ("nonuniqueness", MultipleClassical),
        ("nonexistence", NoClassicalMixedExists),
        ("nonexistence_ball", NoClassicalMixedExists),
        ("obstacle_nonuniqueness", MultipleWithObstacle),
    ];
    for (name, outcome) in expect {
        assert_eq!(scenario(name).unwrap().expected_outcome, outcome, "{name}");
    }
}

#[test]
fn free_density_matches_dense_solve() {
    let g = Grid::square(0.0, 1.0, 7).unwrap();
    let rho = raised_cosine_bump(g);
    let m = free_density(&rho).unwrap();
    let oracle = dense_solve(&common::dense_operator(&g, 1.0), rho.values());
    assert!(common::max_diff(m.values(), &oracle) < 1e-12);
    assert!(m.min() > 0.0);
}

#[test]
fn nonuniqueness_cost_takes_the_designed_values() {
    let g = Grid::line(0.0, 1.0, 31).unwrap();
    let s = build_nonuniqueness(g).unwrap();
    let Problem::Stationary { rho, .. } = &s.problem else {
        panic!()
    };
    let m_star = free_density(rho).unwrap();
    let f_star = s.cost.evaluate(&m_star).unwrap();
    let f_zero = s.cost.evaluate(&ScalarField::zeros(g)).unwrap();
    assert!(f_star.values().iter().all(|v| (v + 1.0).abs() <= 1e-12));
    assert!(f_zero.values().iter().all(|v| (v - 1.0).abs() <= 1e-12));
    // The weight is the distance to the centre, so E(m*) > 0 and the cost is anti-monotone.
    assert!(inner(&distance_to_center(g), &m_star).unwrap() > 0.0);
}

#[test]
fn nonuniqueness_evidence_confirms_two_solutions() {
    let (_, ev) = scenario_nonuniqueness().unwrap();
    assert!(ev.confirmed(), "{:?}", ev.checks);
    let names: Vec<&str> = ev.fields.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["u_zero", "m_zero", "u_star", "m_star"]);
}

#[test]
fn nonexistence_profile_touches_zero_only_at_the_center() {
    let g = Grid::line(0.0, 1.0, 31).unwrap();
    let point = nonexistence_profile(g, NonexistenceVariant::Point);
    let zeros: Vec<usize> = (0..g.len()).filter(|&i| point.values()[i] == 0.0).collect();
    assert_eq!(zeros, vec![15]);
    assert!(point.max() <= 0.0);
    let ball = nonexistence_profile(g, NonexistenceVariant::Ball);
    let zeros: Vec<usize> = (0..g.len()).filter(|&i| ball.values()[i] == 0.0).collect();
    assert_eq!(zeros, vec![14, 15, 16]);
}

#[test]
fn nonexistence_evidence_is_confirmed_and_deterministic() {
    for variant in [NonexistenceVariant::Point, NonexistenceVariant::Ball] {
        let (s, ev) = scenario_nonexistence(variant).unwrap();
        assert!(ev.confirmed(), "{:?}", ev.checks);
        assert!(ev.tables.iter().any(|t| t.name == "residual_floor"));
        let again = run_evidence(&s, &EvidenceOptions::default()).unwrap();
        assert_eq!(ev, again);
    }
}

#[test]
fn nonexistence_rejects_other_costs() {
    let g = Grid::line(0.0, 1.0, 15).unwrap();
    let mut s = build_nonexistence(g, NonexistenceVariant::Point).unwrap();
    s.cost = CostOperator::local_power(1.0, 1.0, ScalarField::zeros(g)).unwrap();
    assert!(run_evidence(&s, &EvidenceOptions::default()).is_err());
}

#[test]
fn obstacle_interpolation_hits_both_endpoints() {
    let s = scenario("obstacle_nonuniqueness").unwrap();
    let Problem::Stationary {
        obstacle: Some(ob), ..
    } = &s.problem
    else {
        panic!()
    };
    assert_eq!(ob.apply(&ob.m_star).unwrap(), ob.upper);
    assert_eq!(ob.apply(&ScalarField::zeros(s.grid)).unwrap(), ob.lower);
    let half = ob.apply(&ob.m_star.scale(0.5)).unwrap();
    let mid = ob.upper.add(&ob.lower).unwrap().scale(0.5);
    assert!(half.dist_inf(&mid).unwrap() <= 1e-15);
    assert_eq!(ob.guarded().count(), 0);
    let other = Grid::line(0.0, 1.0, 7).unwrap();
    assert!(ob.apply(&ScalarField::zeros(other)).is_err());
}

#[test]
fn obstacle_construction_needs_strict_monotonicity() {
    let g = Grid::line(0.0, 1.0, 31).unwrap();
    let rho = raised_cosine_bump(g);
    let flat = CostOperator::local_power(0.0, 1.0, ScalarField::constant(g, 1.0)).unwrap();
    assert!(build_obstacle_nonuniqueness(flat, rho.clone()).is_err());
    let cost = CostOperator::local_power(1.0, 1.0, ScalarField::constant(g, -0.5)).unwrap();
    let (_, ev) = scenario_obstacle_nonuniqueness(cost, rho).unwrap();
    assert!(ev.confirmed(), "{:?}", ev.checks);
}

#[test]
fn stationary_standard_evidence_is_confirmed() {
    for name in ["monotone_1d", "anti_monotone_1d"] {
        let ev = run_evidence(&scenario(name).unwrap(), &EvidenceOptions::default()).unwrap();
        assert!(ev.confirmed(), "{name}: {:?}", ev.checks);
        assert!(ev.densities().all(|m| m.min() >= -1e-12));
        assert!(!ev.tables.is_empty());
    }
}
