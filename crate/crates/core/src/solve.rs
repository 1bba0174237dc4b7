//! The full grid pipeline: gain surfaces, value surfaces, `LV` and the
//! extracted boundary, on one grid.

use crate::boundary::{extract_boundary, Boundary};
use crate::error::Result;
use crate::gain::{gain_surfaces, GainSurfaces};
use crate::grid::{Grid, Surface};
use crate::model::ValidatedModel;
use crate::value::{solve_value, ValueSurfaces};

#[derive(Debug, Clone)]
pub struct Solution {
    pub gain: GainSurfaces,
    pub value: ValueSurfaces,
    pub lv: Surface,
    pub boundary: Boundary,
}

impl Solution {
    pub fn grid(&self) -> &Grid {
        &self.value.grid
    }

    pub fn model(&self) -> &ValidatedModel {
        &self.value.model
    }
}

pub fn solve(model: &ValidatedModel, grid: &Grid, tol_abs: f64) -> Result<Solution> {
    let gain = gain_surfaces(model, grid)?;
    let value = solve_value(model, grid, &gain.g)?;
    let lv = value.lv()?;
    let boundary = extract_boundary(&value, tol_abs)?;
    Ok(Solution {
        gain,
        value,
        lv,
        boundary,
    })
}

/// Probe points `(t, x, j)`: `t` in `{0, T/2}`, `x` in `{1, 1.5, 3}`, every
/// regime.
pub fn probe_points(grid: &Grid) -> Vec<(f64, f64, usize)> {
    let mut out = Vec::new();
    for t in [0.0, 0.5 * grid.horizon] {
        for x in [1.0, 1.5, 3.0] {
            for j in 0..grid.regimes {
                out.push((t, x, j));
            }
        }
    }
    out
}

/// Surface value at a probe point: nearest time node, linear in `z`.
pub fn at_probe(s: &Surface, grid: &Grid, (t, x, j): (f64, f64, usize)) -> f64 {
    s.interp_z(grid, grid.t_index(t), j, x.ln())
}
