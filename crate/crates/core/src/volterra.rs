//! Both sides of the boundary integral equation
//!
//! `G(t, b, j) = J(t, b, j) - int_t^T K(t, r, b, j) dr`,
//!
//! with `J(t, x, j) = E[X_T^{t,x} | j]` and
//! `K(t, r, x, j) = E[LV(r, X_r^{t,x}, beta_r) 1{X_r^{t,x} > b(r, beta_r)}]`,
//! evaluated by Monte Carlo at the extracted boundary.

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::grid::Surface;
use crate::mc::{reduce_paths, Estimate, Moments};
use crate::model::ValidatedModel;
use crate::paths::{PathSimulator, SamplePath, SimOptions};
use crate::rng::derive_seed;
use crate::value::ValueSurfaces;

/// Report every this many time nodes (the terminal node is always included).
pub const REPORT_STRIDE: usize = 10;
pub const DEFAULT_N_QUAD: usize = 64;

/// Monte Carlo estimate of `J(t, x, j)`.
pub fn estimate_j(
    model: &ValidatedModel,
    t: f64,
    x: f64,
    j: usize,
    n_paths: u64,
    opts: SimOptions,
    seed: u64,
) -> Estimate {
    assert!(x >= 1.0, "x must be at least 1");
    if t >= model.horizon {
        return Estimate::exact(x);
    }
    let sim = PathSimulator::new(model, t, j, opts, seed);
    let n = opts.n_steps;
    reduce_paths(
        n_paths,
        Moments::default,
        |range, acc| {
            let mut p = SamplePath::with_steps(n);
            for i in range {
                sim.sample_into(i, &mut p);
                acc.push(p.x_at(x, n));
            }
        },
        |a, b| a.merge(&b),
    )
    .estimate()
}

/// `K` estimate together with the number of samples beyond the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KEstimate {
    pub estimate: Estimate,
    /// Samples with `X_r > e^{z_max}`, evaluated at the clamped edge.
    pub extrapolated: u64,
}

/// Integrand of `K` tabulated at fixed times: `LV` interpolated in time
/// onto each time, and the log of the smoothed boundary.
struct Kernel {
    log_b: Vec<Vec<f64>>,
    lv: Vec<Vec<Vec<f64>>>,
    dz: f64,
    z_max: f64,
}

impl Kernel {
    fn new(s: &ValueSurfaces, lv: &Surface, boundary: &Boundary, times: &[f64]) -> Self {
        let grid = &s.grid;
        let m = grid.regimes;
        let log_b = times
            .iter()
            .map(|&r| (0..m).map(|j| boundary.smoothed_at(r, j).ln()).collect())
            .collect();
        let lv = times
            .iter()
            .map(|&r| {
                let (k, w) = grid.locate_t(r);
                (0..m)
                    .map(|j| {
                        let a = lv.slice(k, j);
                        let b = lv.slice(k + 1, j);
                        a.iter().zip(b).map(|(a, b)| (1.0 - w) * a + w * b).collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            log_b,
            lv,
            dz: grid.dz(),
            z_max: grid.z_max,
        }
    }

    /// Integrand at the `q`-th time for `ln X = z`; flags samples beyond the grid.
    fn eval(&self, q: usize, z: f64, j: usize) -> (f64, bool) {
        let outside = z > self.z_max;
        if z <= self.log_b[q][j] {
            return (0.0, outside);
        }
        let s = &self.lv[q][j];
        let u = (z / self.dz).clamp(0.0, (s.len() - 1) as f64);
        let i = (u as usize).min(s.len() - 2);
        let w = u - i as f64;
        ((1.0 - w) * s[i] + w * s[i + 1], outside)
    }
}

fn check_inputs(s: &ValueSurfaces, lv: &Surface, boundary: &Boundary) -> Result<()> {
    let g = &s.grid;
    if lv.n_t != g.n_t || lv.n_x != g.n_x || lv.regimes != g.regimes || boundary.grid != *g {
        return Err(Error::InvalidArgument(
            "surfaces and boundary come from different grids".into(),
        ));
    }
    Ok(())
}

/// Monte Carlo estimate of `K(t, r, x, j)` with `LV` interpolated
/// bilinearly and the indicator read from the smoothed boundary.
#[allow(clippy::too_many_arguments)]
pub fn estimate_k(
    s: &ValueSurfaces,
    lv: &Surface,
    boundary: &Boundary,
    t: f64,
    r: f64,
    x: f64,
    j: usize,
    n_paths: u64,
    n_steps: usize,
    seed: u64,
) -> Result<KEstimate> {
    check_inputs(s, lv, boundary)?;
    if !(t <= r && r <= s.model.horizon) {
        return Err(Error::InvalidArgument(format!("need t <= r <= T, got t={t}, r={r}")));
    }
    let kernel = Kernel::new(s, lv, boundary, &[r]);
    let log_x = x.ln();
    if r <= t {
        let (v, out) = kernel.eval(0, log_x, j);
        return Ok(KEstimate {
            estimate: Estimate::exact(v),
            extrapolated: u64::from(out),
        });
    }
    // Paths from t to r: same law as the first part of paths to T.
    let mut sub = s.model.clone().into_inner();
    sub.horizon = r;
    let sub = sub.validate()?;
    let opts = SimOptions::new(n_steps, true);
    let sim = PathSimulator::new(&sub, t, j, opts, seed);
    let (m, ext) = reduce_paths(
        n_paths,
        || (Moments::default(), 0u64),
        |range, acc| {
            let mut p = SamplePath::with_steps(n_steps);
            for i in range {
                sim.sample_into(i, &mut p);
                let (v, out) = kernel.eval(0, p.log_x_at(log_x, n_steps), p.states[n_steps]);
                acc.0.push(v);
                acc.1 += u64::from(out);
            }
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1 += b.1;
        },
    );
    Ok(KEstimate {
        estimate: m.estimate(),
        extrapolated: ext,
    })
}

/// One reported `(t, j)` row.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraRow {
    pub t_index: usize,
    pub t: f64,
    pub j: usize,
    pub b: f64,
    pub lhs: f64,
    pub j_est: Estimate,
    pub k_integral: Estimate,
    pub residual: f64,
    /// Standard error of `J - int K` from the per-path estimator.
    pub residual_se: f64,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraReport {
    pub rows: Vec<VolterraRow>,
    /// `(t_index, j)` pairs skipped because the boundary is the sentinel.
    pub skipped: Vec<(usize, usize)>,
    pub extrapolated: u64,
    pub n_paths: u64,
    pub n_quad: usize,
}

impl VolterraReport {
    /// Median of `|relative_residual|`, optionally leaving out the terminal
    /// rows where the residual vanishes by construction.
    pub fn median_abs_relative(&self, include_terminal: bool) -> Option<f64> {
        let n_t = self.rows.iter().map(|r| r.t_index).max()?;
        let mut v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| include_terminal || r.t_index < n_t)
            .map(|r| r.relative_residual.abs())
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }
}

/// Evaluates the equation at every `REPORT_STRIDE`-th time node and regime,
/// at the raw boundary level. `J` and the trapezoid integral of `K` over
/// `n_quad` equally spaced nodes in `[t, T]` share one set of paths.
pub fn volterra_residual(
    s: &ValueSurfaces,
    lv: &Surface,
    boundary: &Boundary,
    n_paths: u64,
    n_quad: usize,
    seed: u64,
) -> Result<VolterraReport> {
    check_inputs(s, lv, boundary)?;
    if n_quad < 2 {
        return Err(Error::InvalidArgument("n_quad must be at least 2".into()));
    }
    if n_paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let grid = &s.grid;
    let model = &s.model;
    let mut ks: Vec<usize> = (0..grid.n_t).step_by(REPORT_STRIDE).collect();
    ks.push(grid.n_t);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut extrapolated = 0;
    for &k in &ks {
        for j in 0..grid.regimes {
            let b = boundary.raw[k][j];
            if !b.is_finite() {
                skipped.push((k, j));
                continue;
            }
            let t = grid.t(k);
            let lhs = s.g.interp_z(grid, k, j, b.ln());
            if k == grid.n_t {
                rows.push(VolterraRow {
                    t_index: k,
                    t,
                    j,
                    b,
                    lhs,
                    j_est: Estimate::exact(b),
                    k_integral: Estimate::exact(0.0),
                    residual: lhs - b,
                    residual_se: 0.0,
                    relative_residual: (lhs - b) / lhs,
                });
                continue;
            }
            let steps = n_quad - 1;
            let h = (model.horizon - t) / steps as f64;
            let sim = PathSimulator::new(
                model,
                t,
                j,
                SimOptions::new(steps, true),
                derive_seed(seed, (k * grid.regimes + j) as u64),
            );
            let kernel = Kernel::new(s, lv, boundary, sim.times());
            let log_b = b.ln();
            let (mj, mk, mr, ext) = reduce_paths(
                n_paths,
                || (Moments::default(), Moments::default(), Moments::default(), 0u64),
                |range, acc| {
                    let mut p = SamplePath::with_steps(steps);
                    for i in range {
                        sim.sample_into(i, &mut p);
                        let mut integral = 0.0;
                        for q in 0..=steps {
                            let (v, out) = kernel.eval(q, p.log_x_at(log_b, q), p.states[q]);
                            let w = if q == 0 || q == steps { 0.5 } else { 1.0 };
                            integral += w * v;
                            acc.3 += u64::from(out);
                        }
                        integral *= h;
                        let xt = p.log_x_at(log_b, steps).exp();
                        acc.0.push(xt);
                        acc.1.push(integral);
                        acc.2.push(xt - integral);
                    }
                },
                |a, o| {
                    a.0.merge(&o.0);
                    a.1.merge(&o.1);
                    a.2.merge(&o.2);
                    a.3 += o.3;
                },
            );
            extrapolated += ext;
            let rhs = mr.estimate();
            let residual = lhs - rhs.mean;
            rows.push(VolterraRow {
                t_index: k,
                t,
                j,
                b,
                lhs,
                j_est: mj.estimate(),
                k_integral: mk.estimate(),
                residual,
                residual_se: rhs.std_error,
                relative_residual: residual / lhs,
            });
        }
    }
    Ok(VolterraReport {
        rows,
        skipped,
        extrapolated,
        n_paths,
        n_quad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::extract_boundary;
    use crate::gain::gain_surfaces;
    use crate::grid::Grid;
    use crate::model::RegimeModel;
    use crate::value::solve_value;

    fn single() -> (ValueSurfaces, Surface, Boundary) {
        let model = RegimeModel::single(0.05, 0.3, 1.0).validate().unwrap();
        let grid = Grid::new(&model, 200, 100, None).unwrap();
        let gs = gain_surfaces(&model, &grid).unwrap();
        let s = solve_value(&model, &grid, &gs.g).unwrap();
        let lv = s.lv().unwrap();
        let b = extract_boundary(&s, 1e-12).unwrap();
        (s, lv, b)
    }

    #[test]
    fn j_at_maturity_is_exact() {
        let model = RegimeModel::single(0.05, 0.3, 1.0).validate().unwrap();
        let e = estimate_j(&model, 1.0, 1.7, 0, 10, SimOptions::new(4, true), 1);
        assert_eq!(e, Estimate::exact(1.7));
    }

    #[test]
    fn j_for_large_x_matches_inverse_moment() {
        // X_T = x / Y_T once the cap dominates: E[1 / Y_T] = exp((sigma^2 - mu) T).
        let model = RegimeModel::single(0.05, 0.3, 1.0).validate().unwrap();
        let x = 50.0;
        let e = estimate_j(&model, 0.0, x, 0, 100_000, SimOptions::new(1, true), 4);
        let exact = x * ((0.09f64 - 0.05) * 1.0).exp();
        assert!((e.mean - exact).abs() < 3.0 * e.std_error, "{e:?} vs {exact}");
    }

    #[test]
    fn k_at_equal_times_is_the_kernel() {
        let (s, lv, b) = single();
        let x = 1.8;
        let k = estimate_k(&s, &lv, &b, 0.3, 0.3, x, 0, 10, 4, 1).unwrap();
        let expect = if x > b.smoothed_at(0.3, 0) {
            lv.interp(&s.grid, 0.3, x.ln(), 0)
        } else {
            0.0
        };
        assert_eq!(k.estimate, Estimate::exact(expect));
    }

    #[test]
    fn terminal_rows_have_zero_residual() {
        let (s, lv, b) = single();
        let rep = volterra_residual(&s, &lv, &b, 200, 8, 3).unwrap();
        let last = rep.rows.last().unwrap();
        assert_eq!(last.t_index, s.grid.n_t);
        assert_eq!(last.lhs, 1.0);
        assert_eq!(last.residual, 0.0);
        assert_eq!(rep.rows.len(), 11);
    }

    #[test]
    fn rejects_bad_quadrature() {
        let (s, lv, b) = single();
        assert!(volterra_residual(&s, &lv, &b, 100, 1, 3).is_err());
        assert!(estimate_k(&s, &lv, &b, 0.5, 0.2, 1.0, 0, 10, 4, 1).is_err());
    }
}
