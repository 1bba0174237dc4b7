//! Discretization of `[0, T] x [1, e^{z_max}] x regimes` on a uniform
//! log-ratio grid `z = ln x`, and the scalar fields stored on it.

use crate::error::{Error, Result};
use crate::model::ValidatedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_x: usize,
    pub n_t: usize,
    pub z_max: f64,
    pub horizon: f64,
    pub regimes: usize,
}

/// Truncation level such that the running maximum of the most volatile
/// regime rarely leaves the domain: `4 max(sigma) sqrt(T) + max(0, max(mu - sigma^2/2)) T + ln 2`.
pub fn default_z_max(model: &ValidatedModel) -> f64 {
    let t = model.horizon;
    let sigma_max = model.sigma.iter().copied().fold(0.0, f64::max);
    let drift_max = model
        .mu
        .iter()
        .zip(&model.sigma)
        .map(|(m, s)| m - 0.5 * s * s)
        .fold(0.0, f64::max);
    4.0 * sigma_max * t.sqrt() + drift_max * t + std::f64::consts::LN_2
}

/// Default number of time steps: 200 per unit of horizon (at least 200).
pub fn default_n_t(horizon: f64) -> usize {
    (200.0 * horizon.max(1.0)).ceil() as usize
}

pub const DEFAULT_N_X: usize = 400;

impl Grid {
    pub fn new(model: &ValidatedModel, n_x: usize, n_t: usize, z_max: Option<f64>) -> Result<Self> {
        let z_max = z_max.unwrap_or_else(|| default_z_max(model));
        if n_x < 3 {
            return Err(Error::InvalidGrid(format!("n_x = {n_x} < 3")));
        }
        if n_t < 1 {
            return Err(Error::InvalidGrid("n_t must be at least 1".into()));
        }
        if !(z_max.is_finite() && z_max > 0.0) {
            return Err(Error::InvalidGrid(format!("z_max = {z_max} must be positive")));
        }
        Ok(Self {
            n_x,
            n_t,
            z_max,
            horizon: model.horizon,
            regimes: model.regimes(),
        })
    }

    pub fn default_for(model: &ValidatedModel) -> Result<Self> {
        Self::new(model, DEFAULT_N_X, default_n_t(model.horizon), None)
    }

    /// Same domain with both spacings halved.
    pub fn refined(&self) -> Self {
        Self {
            n_x: 2 * (self.n_x - 1) + 1,
            n_t: 2 * self.n_t,
            ..self.clone()
        }
    }

    /// Same domain and time grid with the spatial spacing halved.
    pub fn refined_x(&self) -> Self {
        Self {
            n_x: 2 * (self.n_x - 1) + 1,
            ..self.clone()
        }
    }

    pub fn dz(&self) -> f64 {
        self.z_max / (self.n_x - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        i as f64 * self.dz()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.z(i).exp()
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_t {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn x_max(&self) -> f64 {
        self.z_max.exp()
    }

    /// Width of the first spatial cell in ratio units, `e^{dz} - 1`.
    pub fn dx(&self) -> f64 {
        self.dz().exp_m1()
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    /// Nearest time node to `t`.
    pub fn t_index(&self, t: f64) -> usize {
        ((t / self.dt()).round() as usize).min(self.n_t)
    }

    /// Cell index `i` and weight `w` with `z = (1 - w) z_i + w z_{i+1}`,
    /// clamped to the domain.
    pub fn locate_z(&self, z: f64) -> (usize, f64) {
        let s = (z / self.dz()).clamp(0.0, (self.n_x - 1) as f64);
        let i = (s.floor() as usize).min(self.n_x - 2);
        (i, s - i as f64)
    }

    /// Cell index `k` and weight `w` with `t = (1 - w) t_k + w t_{k+1}`.
    pub fn locate_t(&self, t: f64) -> (usize, f64) {
        let s = (t / self.dt()).clamp(0.0, self.n_t as f64);
        let k = (s.floor() as usize).min(self.n_t - 1);
        (k, s - k as f64)
    }
}

/// Which field a [`Surface`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    G,
    V,
    F,
    LG,
    LV,
    DGdx,
}

impl Field {
    pub fn name(&self) -> &'static str {
        match self {
            Field::G => "G",
            Field::V => "V",
            Field::F => "F",
            Field::LG => "LG",
            Field::LV => "LV",
            Field::DGdx => "dGdx",
        }
    }
}

/// Scalar field over `(t_node, regime, z_node)`, stored slice by slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub field: Field,
    pub n_t: usize,
    pub regimes: usize,
    pub n_x: usize,
    values: Vec<f64>,
}

impl Surface {
    pub fn zeros(field: Field, grid: &Grid) -> Self {
        Self {
            field,
            n_t: grid.n_t,
            regimes: grid.regimes,
            n_x: grid.n_x,
            values: vec![0.0; (grid.n_t + 1) * grid.regimes * grid.n_x],
        }
    }

    fn offset(&self, k: usize, j: usize) -> usize {
        (k * self.regimes + j) * self.n_x
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[self.offset(k, j) + i]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let o = self.offset(k, j);
        self.values[o + i] = v;
    }

    /// Values along z at time node `k`, regime `j`.
    pub fn slice(&self, k: usize, j: usize) -> &[f64] {
        let o = self.offset(k, j);
        &self.values[o..o + self.n_x]
    }

    pub fn slice_mut(&mut self, k: usize, j: usize) -> &mut [f64] {
        let o = self.offset(k, j);
        &mut self.values[o..o + self.n_x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter_nodes(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (0..=self.n_t).flat_map(move |k| {
            (0..self.n_x).flat_map(move |i| (0..self.regimes).map(move |j| (k, i, j, self.get(k, i, j))))
        })
    }

    /// Linear interpolation in z at time node `k`.
    pub fn interp_z(&self, grid: &Grid, k: usize, j: usize, z: f64) -> f64 {
        let (i, w) = grid.locate_z(z);
        let s = self.slice(k, j);
        (1.0 - w) * s[i] + w * s[i + 1]
    }

    /// Bilinear interpolation in `(t, z)`, clamped to the domain.
    pub fn interp(&self, grid: &Grid, t: f64, z: f64, j: usize) -> f64 {
        let (k, wt) = grid.locate_t(t);
        let a = self.interp_z(grid, k, j, z);
        if wt == 0.0 {
            return a;
        }
        let b = self.interp_z(grid, k + 1, j, z);
        (1.0 - wt) * a + wt * b
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map2(&self, other: &Surface, field: Field, f: impl Fn(f64, f64) -> f64) -> Surface {
        assert_eq!(self.values.len(), other.values.len());
        Surface {
            field,
            n_t: self.n_t,
            regimes: self.regimes,
            n_x: self.n_x,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}
