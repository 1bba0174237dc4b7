//! Free-boundary extraction `b(t, j) = inf{x : V(t, x, j) = G(t, x, j)}`
//! and checks on its shape.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::ValidatedModel;
use crate::value::ValueSurfaces;

/// Continuation gaps of up to this many nodes inside the stopping region are
/// treated as projection noise.
pub const DISLOCATION_ALLOWANCE: usize = 2;

/// Per-`(t_node, regime)` stopping level; `+inf` marks "no stopping below the
/// top of the domain".
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    /// `raw[k][j]`, refined to sub-cell accuracy.
    pub raw: Vec<Vec<f64>>,
    /// Three-point running median of `raw` in time.
    pub smoothed: Vec<Vec<f64>>,
    /// First stopping node, `None` for the sentinel.
    pub node: Vec<Vec<Option<usize>>>,
    pub tol_abs: f64,
    pub grid: Grid,
}

impl Boundary {
    pub fn is_sentinel(&self, k: usize, j: usize) -> bool {
        self.node[k][j].is_none()
    }

    /// Local cell width at level `b`, the discrete resolution of the boundary.
    pub fn cell_width(&self, b: f64) -> f64 {
        b.max(1.0) * self.grid.dx()
    }

    /// Step lookup: boundary at the last time node not after `t`.
    pub fn level_before(&self, t: f64, j: usize) -> f64 {
        let k = ((t / self.grid.dt() + 1e-9).floor() as usize).min(self.grid.n_t);
        self.raw[k][j]
    }

    /// Smoothed boundary linearly interpolated in time; sentinel-adjacent
    /// intervals use the left node.
    pub fn smoothed_at(&self, t: f64, j: usize) -> f64 {
        let (k, w) = self.grid.locate_t(t);
        let a = self.smoothed[k][j];
        let b = self.smoothed[k + 1][j];
        if a.is_finite() && b.is_finite() {
            (1.0 - w) * a + w * b
        } else if w >= 1.0 {
            b
        } else {
            a
        }
    }
}

fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Scans each slice from the top for the stopping up-set `{F >= -tol_abs}`.
pub fn extract_boundary(s: &ValueSurfaces, tol_abs: f64) -> Result<Boundary> {
    let grid = &s.grid;
    let n = grid.n_x;
    let dz = grid.dz();
    let mut raw = vec![vec![f64::INFINITY; grid.regimes]; grid.n_t + 1];
    let mut node = vec![vec![None; grid.regimes]; grid.n_t + 1];
    for k in 0..=grid.n_t {
        for j in 0..grid.regimes {
            let f = s.f.slice(k, j);
            let stop = |i: usize| f[i] >= -tol_abs;
            if !stop(n - 1) {
                if (0..n).any(stop) {
                    return Err(Error::NonMonotoneSlice { t_index: k, regime: j });
                }
                continue;
            }
            let mut lowest = n - 1;
            while lowest > 0 && stop(lowest - 1) {
                lowest -= 1;
            }
            // Bridge small continuation holes, then require a clean up-set.
            loop {
                let below = (0..lowest).rev().take_while(|&i| !stop(i)).count();
                if below == lowest {
                    break;
                }
                if below > DISLOCATION_ALLOWANCE {
                    return Err(Error::NonMonotoneSlice { t_index: k, regime: j });
                }
                lowest -= below + 1;
                while lowest > 0 && stop(lowest - 1) {
                    lowest -= 1;
                }
            }
            node[k][j] = Some(lowest);
            raw[k][j] = if lowest == 0 {
                1.0
            } else {
                let gap = s.gap.slice(k, j);
                let (g0, g1) = (gap[lowest - 1], gap[lowest]);
                if k < grid.n_t && g0 < 0.0 && g1 >= 0.0 {
                    (grid.z(lowest - 1) + dz * (-g0) / (g1 - g0)).exp()
                } else {
                    grid.x(lowest)
                }
            };
        }
    }
    let mut smoothed = raw.clone();
    for k in 1..grid.n_t {
        for j in 0..grid.regimes {
            smoothed[k][j] = median3(raw[k - 1][j], raw[k][j], raw[k + 1][j]);
        }
    }
    Ok(Boundary {
        raw,
        smoothed,
        node,
        tol_abs,
        grid: grid.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMonotoneReport {
    /// Largest `b(t_{k+1}) - b(t_k) - width` per regime (positive means a violation).
    pub max_excess: Vec<f64>,
    pub violations: usize,
    /// Largest `|b(t_{k+1}) - b(t_k)|` over finite pairs, per regime.
    pub max_jump: Vec<f64>,
    /// `max_jump / sqrt(dt)`.
    pub continuity_ratio: f64,
}

impl BoundaryMonotoneReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// The boundary must be nonincreasing in `t` (up to one local cell width)
/// when every drift is nonnegative.
pub fn check_boundary_monotone(
    boundary: &Boundary,
    model: &ValidatedModel,
) -> Result<BoundaryMonotoneReport> {
    if let Some(j) = model.mu.iter().position(|&m| m < 0.0) {
        return Err(Error::NotApplicable(format!(
            "drift of regime {j} is negative; the boundary need not be monotone"
        )));
    }
    let grid = &boundary.grid;
    let mut max_excess = vec![f64::NEG_INFINITY; grid.regimes];
    let mut max_jump = vec![0.0f64; grid.regimes];
    let mut violations = 0;
    for k in 0..grid.n_t {
        for j in 0..grid.regimes {
            let a = boundary.raw[k][j];
            let b = boundary.raw[k + 1][j];
            if a.is_infinite() {
                continue;
            }
            let excess = if b.is_infinite() {
                f64::INFINITY
            } else {
                max_jump[j] = max_jump[j].max((b - a).abs());
                b - a - boundary.cell_width(a.max(b))
            };
            max_excess[j] = max_excess[j].max(excess);
            if excess > 0.0 {
                violations += 1;
            }
        }
    }
    let continuity_ratio = max_jump.iter().fold(0.0f64, |m, v| m.max(*v)) / grid.dt().sqrt();
    Ok(BoundaryMonotoneReport {
        max_excess,
        violations,
        max_jump,
        continuity_ratio,
    })
}

/// Number of time nodes where `b(t, a) > b(t, b) + width`, i.e. where regime
/// `a` does not stop at least as early as regime `b`.
pub fn ordering_violations(boundary: &Boundary, a: usize, b: usize) -> usize {
    (0..=boundary.grid.n_t)
        .filter(|&k| {
            let (ba, bb) = (boundary.raw[k][a], boundary.raw[k][b]);
            if ba.is_infinite() {
                return bb.is_finite();
            }
            bb.is_finite() && ba > bb + boundary.cell_width(bb)
        })
        .count()
}
