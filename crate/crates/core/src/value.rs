//! Obstacle problem for `V(t, x, j)`: backward induction with the
//! ratio-process generator followed by projection onto `V <= G`.

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Surface};
use crate::model::ValidatedModel;
use crate::gain::terminal_gain;
use crate::stepper::{EdgeConditions, OperatorKind, Stepper, TERMINAL_SUBSTEPS};

/// Solution of the obstacle problem on one grid.
#[derive(Debug, Clone)]
pub struct ValueSurfaces {
    pub v: Surface,
    pub g: Surface,
    /// `F = V - G <= 0`.
    pub f: Surface,
    /// Continuation value minus gain before projection; nonnegative exactly
    /// on the stopping nodes, and linear through the free boundary.
    pub gap: Surface,
    /// `V` one substep after the last interior time node.
    pub terminal_substep: Vec<Vec<f64>>,
    pub grid: Grid,
    pub model: ValidatedModel,
}

pub fn solve_value(model: &ValidatedModel, grid: &Grid, g: &Surface) -> Result<ValueSurfaces> {
    if g.n_t != grid.n_t || g.n_x != grid.n_x || g.regimes != grid.regimes {
        return Err(Error::InvalidArgument(
            "gain surface does not match the grid".into(),
        ));
    }
    let bc = EdgeConditions::REFLECTING_LINEAR;
    let stepper = Stepper::new(model, grid, OperatorKind::Ratio, bc)?;
    let fine = Stepper::with_step(
        model,
        grid,
        OperatorKind::Ratio,
        bc,
        grid.dt() / TERMINAL_SUBSTEPS as f64,
    )?;
    let m = grid.regimes;
    let n = grid.n_x;
    let mut v = Surface::zeros(Field::V, grid);
    let mut gap = Surface::zeros(Field::F, grid);
    let xs = grid.x_nodes();
    for j in 0..m {
        v.slice_mut(grid.n_t, j).copy_from_slice(&xs);
    }
    let mut work = vec![Vec::with_capacity(n); m];

    // Last interval: substeps against the gain on the same substeps.
    let k = grid.n_t - 1;
    let obstacle = terminal_gain(model, grid)?;
    let mut cur: Vec<Vec<f64>> = vec![xs.clone(); m];
    let mut terminal_substep = cur.clone();
    for s in (0..TERMINAL_SUBSTEPS).rev() {
        let next: Vec<&[f64]> = cur.iter().map(|c| c.as_slice()).collect();
        fine.step(&next, &mut work);
        for (j, wk) in work.iter().enumerate() {
            let ob = &obstacle[s][j];
            if s == 0 {
                for (o, (w, g)) in gap.slice_mut(k, j).iter_mut().zip(wk.iter().zip(ob)) {
                    *o = w - g;
                }
            }
            for (c, (w, g)) in cur[j].iter_mut().zip(wk.iter().zip(ob)) {
                *c = w.min(*g);
            }
        }
        if s == 1 {
            terminal_substep.clone_from(&cur);
        }
    }
    for (j, c) in cur.iter().enumerate() {
        v.slice_mut(k, j).copy_from_slice(c);
    }

    for k in (0..grid.n_t - 1).rev() {
        let next: Vec<&[f64]> = (0..m).map(|j| v.slice(k + 1, j)).collect();
        stepper.step(&next, &mut work);
        for (j, w) in work.iter().enumerate() {
            let gs = g.slice(k, j);
            let gp = gap.slice_mut(k, j);
            for i in 0..n {
                gp[i] = w[i] - gs[i];
            }
            let vs = v.slice_mut(k, j);
            for i in 0..n {
                vs[i] = w[i].min(gs[i]);
            }
        }
    }
    let f = v.map2(g, Field::F, |a, b| a - b);
    Ok(ValueSurfaces {
        v,
        g: g.clone(),
        f,
        gap,
        terminal_substep,
        grid: grid.clone(),
        model: model.clone(),
    })
}

impl ValueSurfaces {
    /// Discrete generator of the stepping scheme applied to `V`:
    /// `(exp(Q h) V(t + h) - V(t)) / h + A V(t)`, which vanishes on nodes
    /// where the projection is inactive. `h` is the grid step, or the
    /// substep on the last interval. The terminal slice repeats the last
    /// interior one.
    pub fn lv(&self) -> Result<Surface> {
        let grid = &self.grid;
        let m = grid.regimes;
        let bc = EdgeConditions::REFLECTING_LINEAR;
        let coarse = Stepper::new(&self.model, grid, OperatorKind::Ratio, bc)?;
        let fine = Stepper::with_step(
            &self.model,
            grid,
            OperatorKind::Ratio,
            bc,
            grid.dt() / TERMINAL_SUBSTEPS as f64,
        )?;
        let mut out = Surface::zeros(Field::LV, grid);
        let mut mixed = vec![Vec::with_capacity(grid.n_x); m];
        let mut av = vec![0.0; grid.n_x];
        for k in 0..grid.n_t {
            let (stepper, next): (&Stepper, Vec<&[f64]>) = if k + 1 == grid.n_t {
                (&fine, self.terminal_substep.iter().map(|c| c.as_slice()).collect())
            } else {
                (&coarse, (0..m).map(|j| self.v.slice(k + 1, j)).collect())
            };
            let h = stepper.dt();
            stepper.mix(&next, &mut mixed);
            for j in 0..m {
                let vk = self.v.slice(k, j);
                stepper.apply(j, vk, &mut av);
                let o = out.slice_mut(k, j);
                for i in 0..grid.n_x {
                    o[i] = (mixed[j][i] - vk[i]) / h + av[i];
                }
            }
        }
        for j in 0..m {
            let last = out.slice(grid.n_t - 1, j).to_vec();
            out.slice_mut(grid.n_t, j).copy_from_slice(&last);
        }
        Ok(out)
    }

    /// Largest `|V - G| / G` over all nodes.
    pub fn max_relative_gap(&self) -> f64 {
        self.f
            .values()
            .iter()
            .zip(self.g.values())
            .fold(0.0, |m, (f, g)| m.max(f.abs() / g))
    }

    /// Value at `(t_node, x, j)` by linear interpolation in `z`.
    pub fn value_at(&self, k: usize, x: f64, j: usize) -> f64 {
        self.v.interp_z(&self.grid, k, j, x.ln())
    }
}

/// Slope mismatch across the free boundary for every `(t, j)` where the
/// boundary lies strictly inside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFitReport {
    /// `mismatch[k][j]`, `None` where the boundary is at `x = 1`, at the top, or absent.
    pub mismatch: Vec<Vec<Option<f64>>>,
    pub slope_below: Vec<Vec<Option<f64>>>,
    pub slope_above: Vec<Vec<Option<f64>>>,
    pub max_mismatch: f64,
}

/// One-sided difference quotients of `V` on either side of the first
/// stopping node `i_b`: `(V_{i_b} - V_{i_b-1}) / dx` against
/// `(V_{i_b+1} - V_{i_b}) / dx`.
pub fn check_smooth_fit(s: &ValueSurfaces, boundary: &Boundary, t_max: Option<f64>) -> SmoothFitReport {
    let grid = &s.grid;
    let xs = grid.x_nodes();
    let t_max = t_max.unwrap_or(grid.horizon);
    let mut mismatch = vec![vec![None; grid.regimes]; grid.n_t + 1];
    let mut below = mismatch.clone();
    let mut above = mismatch.clone();
    let mut max_mismatch: f64 = 0.0;
    for k in 0..=grid.n_t {
        if grid.t(k) > t_max + 1e-12 {
            continue;
        }
        for j in 0..grid.regimes {
            let Some(ib) = boundary.node[k][j] else { continue };
            if ib == 0 || ib + 1 >= grid.n_x {
                continue;
            }
            let v = s.v.slice(k, j);
            let lo = (v[ib] - v[ib - 1]) / (xs[ib] - xs[ib - 1]);
            let hi = (v[ib + 1] - v[ib]) / (xs[ib + 1] - xs[ib]);
            let d = (hi - lo).abs();
            below[k][j] = Some(lo);
            above[k][j] = Some(hi);
            mismatch[k][j] = Some(d);
            max_mismatch = max_mismatch.max(d);
        }
    }
    SmoothFitReport {
        mismatch,
        slope_below: below,
        slope_above: above,
        max_mismatch,
    }
}

/// Forward-difference slope of `V` at the reflecting edge `x = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionReport {
    /// `slope[k][j]` for `k < n_t`; the terminal slice has slope 1 and is excluded.
    pub slope: Vec<Vec<f64>>,
    pub max_abs: f64,
}

pub fn check_normal_reflection(s: &ValueSurfaces) -> ReflectionReport {
    let grid = &s.grid;
    let dx = grid.x(1) - grid.x(0);
    let slope: Vec<Vec<f64>> = (0..grid.n_t)
        .map(|k| {
            (0..grid.regimes)
                .map(|j| (s.v.get(k, 1, j) - s.v.get(k, 0, j)) / dx)
                .collect()
        })
        .collect();
    let max_abs = slope
        .iter()
        .flatten()
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    ReflectionReport { slope, max_abs }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    /// Largest `F(t_k) - F(t_{k+1})` over all node pairs.
    pub max_violation: f64,
    pub tolerance: f64,
    pub violations: usize,
}

impl MonotoneReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// `F` must be nondecreasing in `t` when every drift is nonnegative; the
/// tolerance is `rel_tol * max|F|`.
pub fn check_f_monotone_t(s: &ValueSurfaces, rel_tol: f64) -> Result<MonotoneReport> {
    if let Some(j) = s.model.mu.iter().position(|&m| m < 0.0) {
        return Err(Error::NotApplicable(format!(
            "drift of regime {j} is negative"
        )));
    }
    let grid = &s.grid;
    let tolerance = rel_tol * s.f.max_abs();
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    for k in 0..grid.n_t {
        for j in 0..grid.regimes {
            let a = s.f.slice(k, j);
            let b = s.f.slice(k + 1, j);
            for (fa, fb) in a.iter().zip(b) {
                let d = fa - fb;
                max_violation = max_violation.max(d);
                if d > tolerance {
                    violations += 1;
                }
            }
        }
    }
    Ok(MonotoneReport {
        max_violation,
        tolerance,
        violations,
    })
}

/// Nodes with `LG < -eps_sign` that were nevertheless classified as
/// stopping (`F >= -tol_abs`), over `t < T`.
pub fn containment_violations(s: &ValueSurfaces, lg: &Surface, eps_sign: f64, tol_abs: f64) -> usize {
    let grid = &s.grid;
    let mut count = 0;
    for k in 0..grid.n_t {
        for j in 0..grid.regimes {
            let l = lg.slice(k, j);
            let f = s.f.slice(k, j);
            count += l
                .iter()
                .zip(f)
                .filter(|(l, f)| **l < -eps_sign && **f >= -tol_abs)
                .count();
        }
    }
    count
}

/// Complementarity: at every node with `t < T` either the obstacle is
/// active (`F >= -tol_abs`) or the discrete generator vanishes (`|LV| <= lv_tol`).
/// Returns the number of nodes where neither holds.
pub fn complementarity_violations(s: &ValueSurfaces, lv: &Surface, tol_abs: f64, lv_tol: f64) -> usize {
    let grid = &s.grid;
    let mut count = 0;
    for k in 0..grid.n_t {
        for j in 0..grid.regimes {
            let l = lv.slice(k, j);
            let f = s.f.slice(k, j);
            count += l
                .iter()
                .zip(f)
                .filter(|(l, f)| **f < -tol_abs && l.abs() > lv_tol)
                .count();
        }
    }
    count
}

/// Largest `F` over `t <= T - 5 dt` and `x` in `[1 + 5 dx, x_max / 2]`,
/// the region where waiting must be strictly better when every drift
/// dominates its variance.
pub fn max_f_away_from_maturity(s: &ValueSurfaces) -> f64 {
    let grid = &s.grid;
    let lo = 1.0 + 5.0 * grid.dx();
    let hi = 0.5 * grid.x_max();
    let xs = grid.x_nodes();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..=grid.n_t.saturating_sub(5) {
        for j in 0..grid.regimes {
            for (&x, &f) in xs.iter().zip(s.f.slice(k, j)) {
                if x >= lo && x <= hi {
                    worst = worst.max(f);
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::extract_boundary;
    use crate::gain::gain_surfaces;
    use crate::model::{
        figure_generator, figure_model, immediate_exercise_model, maturity_model,
        single_regime_model, zero_drift_model, RegimeModel,
    };
    use crate::tolerances::{C_NR, C_SF, MATURITY_MARGIN, SCHEME_TOL, TOL_ABS};

    fn solved(model: RegimeModel) -> (ValueSurfaces, crate::gain::GainSurfaces) {
        let model = model.validate().unwrap();
        let grid = Grid::default_for(&model).unwrap();
        let gs = gain_surfaces(&model, &grid).unwrap();
        (solve_value(&model, &grid, &gs.g).unwrap(), gs)
    }

    #[test]
    fn terminal_slice_and_shape() {
        let (s, _) = solved(figure_model());
        let g = &s.grid;
        for j in 0..2 {
            for i in 0..g.n_x {
                assert_eq!(s.v.get(g.n_t, i, j), g.x(i));
                assert_eq!(s.f.get(g.n_t, i, j), 0.0);
            }
            for k in 0..=g.n_t {
                let v = s.v.slice(k, j);
                assert!(v.iter().all(|&v| v >= 1.0));
                assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-10));
                assert!(s.f.slice(k, j).iter().all(|&f| f <= 0.0));
            }
        }
    }

    #[test]
    fn immediate_exercise_model_has_v_equal_g() {
        let (s, _) = solved(immediate_exercise_model());
        assert!(s.max_relative_gap() <= 1e-3);
    }

    #[test]
    fn zero_drift_model_has_identically_zero_f() {
        let (s, _) = solved(zero_drift_model());
        assert_eq!(s.f.max_abs(), 0.0);
        let r = check_f_monotone_t(&s, 1e-6).unwrap();
        assert!(r.holds());
    }

    #[test]
    fn maturity_model_continues_away_from_maturity() {
        let (s, _) = solved(maturity_model());
        let worst = max_f_away_from_maturity(&s);
        assert!(worst < -MATURITY_MARGIN, "{worst}");
    }

    #[test]
    fn monotonicity_check_refuses_negative_drift() {
        let model = RegimeModel::new(vec![0.15, -0.05], vec![0.5, 0.3], figure_generator(), 0.5);
        let (s, _) = solved(model);
        assert!(matches!(check_f_monotone_t(&s, 1e-6), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn figure_model_f_is_nondecreasing_in_time() {
        let (s, _) = solved(figure_model());
        let r = check_f_monotone_t(&s, 1e-6).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn complementarity_and_containment_on_figure_model() {
        let (s, gs) = solved(figure_model());
        let lv = s.lv().unwrap();
        assert_eq!(complementarity_violations(&s, &lv, SCHEME_TOL, 1e-8), 0);
        assert_eq!(containment_violations(&s, &gs.lg, 10.0 * SCHEME_TOL, TOL_ABS), 0);
    }

    #[test]
    fn lv_vanishes_in_the_continuation_region() {
        let (s, _) = solved(figure_model());
        let lv = s.lv().unwrap();
        let b = extract_boundary(&s, TOL_ABS).unwrap();
        for k in 0..s.grid.n_t {
            for j in 0..2 {
                let ib = b.node[k][j].unwrap();
                for i in 0..ib.saturating_sub(1) {
                    assert!(lv.get(k, i, j).abs() < 1e-9, "k{k} i{i} j{j}");
                }
            }
        }
    }

    #[test]
    fn immediate_model_slopes() {
        let (s, gs) = solved(immediate_exercise_model());
        let b = extract_boundary(&s, TOL_ABS).unwrap();
        assert_eq!(check_smooth_fit(&s, &b, None).max_mismatch, 0.0);
        let nr = check_normal_reflection(&s);
        // The one-sided slope carries the terminal layer of G near maturity.
        let early = nr.slope[..=s.grid.n_t / 2].iter().flatten();
        assert!(early.fold(0.0f64, |m, v| m.max(v.abs())) <= C_NR * s.grid.dx());
        for k in 0..s.grid.n_t {
            assert_eq!(gs.dgdx.surface.get(k, 0, 0), 0.0);
        }
    }

    #[test]
    fn single_regime_smooth_fit_matches_gain_slope() {
        let (s, gs) = solved(single_regime_model());
        let b = extract_boundary(&s, TOL_ABS).unwrap();
        let g = &s.grid;
        let k = g.n_t / 2;
        let sf = check_smooth_fit(&s, &b, Some(0.5 * g.horizon));
        assert!(sf.max_mismatch <= C_SF * g.dx(), "{}", sf.max_mismatch);
        let ib = b.node[k][0].unwrap();
        let above = sf.slope_above[k][0].unwrap();
        let d = gs.dgdx.surface.get(k, ib, 0);
        assert!((above - d).abs() <= C_SF * g.dx(), "{above} vs {d}");
    }

    #[test]
    fn rejects_mismatched_gain_surface() {
        let model = figure_model().validate().unwrap();
        let grid = Grid::new(&model, 100, 50, None).unwrap();
        let other = Grid::new(&model, 120, 50, None).unwrap();
        let gs = gain_surfaces(&model, &other).unwrap();
        assert!(matches!(
            solve_value(&model, &grid, &gs.g),
            Err(Error::InvalidArgument(_))
        ));
    }
}
