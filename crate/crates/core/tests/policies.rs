//! Policy evaluation against the grid solution.

use ultimax::gain::g_monte_carlo;
use ultimax::model::{figure_model, immediate_exercise_model, maturity_model, RegimeModel};
use ultimax::paths::SimOptions;
use ultimax::solve::solve;
use ultimax::strategy::{compare_policies, Policy};
use ultimax::tolerances::{SCHEME_TOL, TOL_ABS};
use ultimax::volterra::estimate_j;
use ultimax::Grid;

const N: u64 = 100_000;

fn opts() -> SimOptions {
    SimOptions::new(100, true)
}

fn policies_for(model: RegimeModel) -> (ultimax::ValidatedModel, Vec<Policy>, f64, f64) {
    let model = model.validate().unwrap();
    let grid = Grid::new(&model, 400, 100, None).unwrap();
    let s = solve(&model, &grid, TOL_ABS).unwrap();
    let v = [s.value.v.get(0, 0, 0), s.value.v.get(0, 0, 1)];
    let policies = vec![
        Policy::Boundary(s.boundary),
        Policy::Immediate,
        Policy::AtMaturity,
        Policy::FixedThreshold(vec![1.05, 1.05]),
    ];
    (model, policies, v[0], v[1])
}

#[test]
fn boundary_policy_matches_value_and_dominates() {
    let (model, policies, v0, v1) = policies_for(figure_model());
    for (j0, v) in [(0, v0), (1, v1)] {
        let c = compare_policies(&model, &policies, j0, N, opts(), 7 + j0 as u64).unwrap();
        let b = &c.estimates[0];
        assert_eq!(b.below_one, 0);
        assert!(
            (b.estimate.mean - v).abs() <= 3.0 * b.estimate.std_error + SCHEME_TOL,
            "j0={j0}: {} vs {v}",
            b.estimate.mean
        );
        // Pairs (0, 1), (0, 2), (0, 3) come first.
        for d in &c.paired[..3] {
            assert!(d.diff <= 3.0 * d.diff_se, "{d:?}");
        }
        assert_eq!(c.ranking[0], 0);
    }
}

#[test]
fn trivial_policies_match_their_definitions() {
    let model = figure_model().validate().unwrap();
    let c = compare_policies(&model, &[Policy::Immediate, Policy::AtMaturity], 0, N, opts(), 11)
        .unwrap();
    let g = g_monte_carlo(&model, 0.0, 1.0, 0, N, SimOptions::new(1, true), 12);
    let j = estimate_j(&model, 0.0, 1.0, 0, N, SimOptions::new(1, true), 13);
    let imm = c.estimates[0].estimate;
    let mat = c.estimates[1].estimate;
    let se = |a: f64, b: f64| (a * a + b * b).sqrt();
    assert!((imm.mean - g.mean).abs() <= 3.0 * se(imm.std_error, g.std_error));
    assert!((mat.mean - j.mean).abs() <= 3.0 * se(mat.std_error, j.std_error));
}

#[test]
fn special_models_tie_exactly() {
    for (model, other) in [(immediate_exercise_model(), 1), (maturity_model(), 2)] {
        let (model, policies, _, _) = policies_for(model);
        for j0 in 0..2 {
            let c = compare_policies(&model, &policies[..3], j0, 20_000, opts(), 5).unwrap();
            let tie = &c.paired[other - 1];
            assert_eq!(tie.max_abs, 0.0, "{tie:?}");
            assert_eq!(c.estimates[0].estimate, c.estimates[other].estimate);
        }
    }
}
