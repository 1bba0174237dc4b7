//! Grid refinement studies on the figure model.

use ultimax::model::figure_model;
use ultimax::solve::{at_probe, probe_points, solve, Solution};
use ultimax::tolerances::{C_NR, C_SF, REFINEMENT_RATIO, TOL_ABS};
use ultimax::value::{check_normal_reflection, check_smooth_fit};
use ultimax::Grid;

fn ladder(base: Grid, levels: usize, refine: fn(&Grid) -> Grid) -> Vec<Solution> {
    let model = figure_model().validate().unwrap();
    let mut grid = base;
    let mut out = Vec::new();
    for _ in 0..levels {
        out.push(solve(&model, &grid, TOL_ABS).unwrap());
        grid = refine(&grid);
    }
    out
}

fn base() -> Grid {
    let model = figure_model().validate().unwrap();
    Grid::new(&model, 400, 100, None).unwrap()
}

fn probe_differences(a: &Solution, b: &Solution, value: bool) -> f64 {
    probe_points(a.grid())
        .into_iter()
        .map(|p| {
            let (sa, sb) = if value {
                (&a.value.v, &b.value.v)
            } else {
                (&a.gain.g, &b.gain.g)
            };
            (at_probe(sa, a.grid(), p) - at_probe(sb, b.grid(), p)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn joint_refinement_converges_at_first_order_or_better() {
    let s = ladder(base(), 3, Grid::refined);
    for value in [false, true] {
        let d1 = probe_differences(&s[0], &s[1], value);
        let d2 = probe_differences(&s[1], &s[2], value);
        assert!(d1 / d2 >= REFINEMENT_RATIO, "value={value}: {d1:e} / {d2:e}");
    }
}

#[test]
fn slope_mismatches_shrink_with_spatial_refinement() {
    let s = ladder(base(), 3, Grid::refined_x);
    let sf: Vec<f64> = s
        .iter()
        .map(|s| check_smooth_fit(&s.value, &s.boundary, None).max_mismatch)
        .collect();
    let nr: Vec<f64> = s
        .iter()
        .map(|s| check_normal_reflection(&s.value).max_abs)
        .collect();
    for (level, s) in s.iter().enumerate() {
        let dx = s.grid().dx();
        assert!(sf[level] <= C_SF * dx, "level {level}: {} > {}", sf[level], C_SF * dx);
        assert!(nr[level] <= C_NR * dx, "level {level}: {} > {}", nr[level], C_NR * dx);
    }
    for w in sf.windows(2).chain(nr.windows(2)) {
        assert!(w[0] / w[1] >= REFINEMENT_RATIO, "{w:?}");
    }
}
