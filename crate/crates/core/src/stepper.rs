//! Backward time-stepping kernel shared by the gain and value solvers.
//!
//! In `z = ln x` each regime carries a constant-coefficient operator
//! `A_j u = a u_zz + b u_z + c u`. One backward step of size `dt` first mixes
//! regimes with the exact kernel `exp(Q dt)` and then solves
//! `(I - dt A_j) u = w_j` per regime (Lie splitting, first order in time).
//!
//! Boundary rows:
//! * `z = 0`: prescribed flux `u_z = s` through the ghost value
//!   `u_{-1} = u_1 - 2 dz s`; `s = 0` is the reflecting condition.
//! * `z = z_max`: either a Dirichlet value, or `u_xx = 0` (linear in `x`),
//!   where the row reduces to `(a + b) x u_x + c u` with the backward
//!   difference in `x`, exact for linear functions.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::markov::{transition_matrix, TransitionMatrix};
use crate::model::ValidatedModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub diffusion: f64,
    pub drift: f64,
    pub reaction: f64,
}

/// Which backward equation is being stepped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `mu G + G_t - mu x G_x + sigma^2 x^2 G_xx / 2 + (QG) = 0`.
    Gain,
    /// Generator of the ratio process: drift `x (sigma^2 - mu)`, diffusion `sigma^2 x^2 / 2`.
    Ratio,
}

impl OperatorKind {
    pub fn coefficients(&self, mu: f64, sigma: f64) -> Coefficients {
        let a = 0.5 * sigma * sigma;
        match self {
            OperatorKind::Gain => Coefficients {
                diffusion: a,
                drift: -mu - a,
                reaction: mu,
            },
            OperatorKind::Ratio => Coefficients {
                diffusion: a,
                drift: a - mu,
                reaction: 0.0,
            },
        }
    }
}

/// Condition imposed at `z = z_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Top {
    Dirichlet(f64),
    LinearInX,
}

/// Boundary data of the stepped equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeConditions {
    /// `u_z` at `z = 0`.
    pub bottom_flux: f64,
    pub top: Top,
}

impl EdgeConditions {
    pub const REFLECTING_LINEAR: EdgeConditions = EdgeConditions {
        bottom_flux: 0.0,
        top: Top::LinearInX,
    };
}

/// Affine operator `A_j u = M u + source`, `M` tridiagonal.
#[derive(Debug, Clone)]
struct Rows {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    source: Vec<f64>,
    dirichlet: Option<f64>,
}

fn operator_rows(c: Coefficients, n: usize, dz: f64, bc: EdgeConditions) -> Rows {
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut source = vec![0.0; n];
    let a = c.diffusion / (dz * dz);
    // Central first differences while the off-diagonals stay nonnegative,
    // upwind beyond that (cell Peclet number above 2).
    let (down, up) = if c.drift.abs() * dz <= 2.0 * c.diffusion {
        let b = c.drift / (2.0 * dz);
        (a - b, a + b)
    } else {
        (a - c.drift.min(0.0) / dz, a + c.drift.max(0.0) / dz)
    };
    diag[0] = -2.0 * a + c.reaction;
    upper[0] = 2.0 * a;
    source[0] = (c.drift - 2.0 * c.diffusion / dz) * bc.bottom_flux;
    for i in 1..n - 1 {
        lower[i] = down;
        diag[i] = -(down + up) + c.reaction;
        upper[i] = up;
    }
    let dirichlet = match bc.top {
        Top::Dirichlet(v) => Some(v),
        Top::LinearInX => {
            let beta = (c.diffusion + c.drift) / -(-dz).exp_m1();
            lower[n - 1] = -beta;
            diag[n - 1] = beta + c.reaction;
            None
        }
    };
    Rows {
        lower,
        diag,
        upper,
        source,
        dirichlet,
    }
}

/// Precomputed Thomas factorization of `I - dt A`.
#[derive(Debug, Clone)]
struct Factorized {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper_scaled: Vec<f64>,
}

impl Factorized {
    fn new(rows: &Rows, dt: f64) -> Self {
        let n = rows.diag.len();
        let mut lower: Vec<f64> = rows.lower.iter().map(|v| -dt * v).collect();
        let mut diag: Vec<f64> = rows.diag.iter().map(|v| 1.0 - dt * v).collect();
        let upper: Vec<f64> = rows.upper.iter().map(|v| -dt * v).collect();
        if rows.dirichlet.is_some() {
            lower[n - 1] = 0.0;
            diag[n - 1] = 1.0;
        }
        let mut inv_pivot = vec![0.0; n];
        let mut upper_scaled = vec![0.0; n];
        let mut pivot = diag[0];
        inv_pivot[0] = 1.0 / pivot;
        upper_scaled[0] = upper[0] / pivot;
        for i in 1..n {
            pivot = diag[i] - lower[i] * upper_scaled[i - 1];
            inv_pivot[i] = 1.0 / pivot;
            upper_scaled[i] = upper[i] / pivot;
        }
        Self {
            lower,
            inv_pivot,
            upper_scaled,
        }
    }

    fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_scaled[i] * rhs[i + 1];
        }
    }
}

/// Substeps taken over the last time interval, where the kink of the
/// terminal data at `x = 1` is still unresolved by a single implicit step.
pub const TERMINAL_SUBSTEPS: usize = 8;

/// Checks `max_j |q_jj| dt <= 0.5`.
pub fn check_coupling(model: &ValidatedModel, grid: &Grid) -> Result<()> {
    let coupling = model.max_exit_rate() * grid.dt();
    if coupling > 0.5 {
        return Err(Error::GridTooCoarse { coupling });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Stepper {
    dt: f64,
    rows: Vec<Rows>,
    factors: Vec<Factorized>,
    transition: TransitionMatrix,
    n_x: usize,
}

impl Stepper {
    pub fn new(
        model: &ValidatedModel,
        grid: &Grid,
        kind: OperatorKind,
        bc: EdgeConditions,
    ) -> Result<Self> {
        Self::with_step(model, grid, kind, bc, grid.dt())
    }

    /// Stepper for a time step `dt <= grid.dt()`.
    pub fn with_step(
        model: &ValidatedModel,
        grid: &Grid,
        kind: OperatorKind,
        bc: EdgeConditions,
        dt: f64,
    ) -> Result<Self> {
        check_coupling(model, grid)?;
        let dz = grid.dz();
        let rows: Vec<Rows> = (0..model.regimes())
            .map(|j| {
                operator_rows(
                    kind.coefficients(model.mu[j], model.sigma[j]),
                    grid.n_x,
                    dz,
                    bc,
                )
            })
            .collect();
        let factors = rows.iter().map(|r| Factorized::new(r, dt)).collect();
        Ok(Self {
            dt,
            rows,
            factors,
            transition: transition_matrix(&model.q, dt),
            n_x: grid.n_x,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    /// Regime mixing `w_j = sum_i P_ji next_i`.
    pub fn mix(&self, next: &[&[f64]], out: &mut [Vec<f64>]) {
        for (j, w) in out.iter_mut().enumerate() {
            w.clear();
            w.resize(self.n_x, 0.0);
            for (i, slice) in next.iter().enumerate() {
                let p = self.transition.p[j][i];
                if p == 0.0 {
                    continue;
                }
                for (o, v) in w.iter_mut().zip(slice.iter()) {
                    *o += p * v;
                }
            }
        }
    }

    /// One backward step: `out_j = (I - dt A_j)^{-1} sum_i P_ji next_i`.
    pub fn step(&self, next: &[&[f64]], out: &mut [Vec<f64>]) {
        self.mix(next, out);
        let n = self.n_x;
        for ((w, f), r) in out.iter_mut().zip(&self.factors).zip(&self.rows) {
            for (wi, si) in w.iter_mut().zip(&r.source) {
                *wi += self.dt * si;
            }
            if let Some(v) = r.dirichlet {
                w[n - 1] = v;
            }
            f.solve_in_place(w);
        }
    }

    /// `A_j u` with the boundary rows described in the module docs. A
    /// Dirichlet top row is reported as zero.
    pub fn apply(&self, j: usize, u: &[f64], out: &mut [f64]) {
        let r = &self.rows[j];
        let n = self.n_x;
        out[0] = r.diag[0] * u[0] + r.upper[0] * u[1] + r.source[0];
        for i in 1..n - 1 {
            out[i] = r.lower[i] * u[i - 1] + r.diag[i] * u[i] + r.upper[i] * u[i + 1];
        }
        out[n - 1] = if r.dirichlet.is_some() {
            0.0
        } else {
            r.lower[n - 1] * u[n - 2] + r.diag[n - 1] * u[n - 1]
        };
    }
}
