//! The gain function `G(t, x, j) = E[max(x, Ymax_{t,T} / Y_t) | regime j]`,
//! its x-derivative, its image under the ratio-process generator, and the
//! level above which that image is nonnegative.

use crate::error::Result;
use crate::grid::{Field, Grid, Surface};
use crate::mc::{reduce_paths, Estimate, Moments};
use crate::model::ValidatedModel;
use crate::paths::{PathSimulator, SamplePath, SimOptions};
use crate::stepper::{EdgeConditions, OperatorKind, Stepper, Top, TERMINAL_SUBSTEPS};

/// Monte Carlo estimate of `G(t, x, j)` from paths started at `(t, j)`.
pub fn g_monte_carlo(
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
                acc.push(x.max(p.ymax(n)));
            }
        },
        |a, b| a.merge(&b),
    )
    .estimate()
}

/// Monte Carlo estimate of `P(Ymax_{t,T} / Y_t < x | regime j)`, the
/// probabilistic form of `dG/dx`.
pub fn max_ratio_cdf_monte_carlo(
    model: &ValidatedModel,
    t: f64,
    x: f64,
    j: usize,
    n_paths: u64,
    opts: SimOptions,
    seed: u64,
) -> Estimate {
    let sim = PathSimulator::new(model, t, j, opts, seed);
    let n = opts.n_steps;
    reduce_paths(
        n_paths,
        Moments::default,
        |range, acc| {
            let mut p = SamplePath::with_steps(n);
            for i in range {
                sim.sample_into(i, &mut p);
                acc.push(if p.ymax(n) < x { 1.0 } else { 0.0 });
            }
        },
        |a, b| a.merge(&b),
    )
    .estimate()
}

/// Backward finite-difference solution of the gain PDE with `G(T, x) = x`
/// and `dG/dx(t, 1+, j) = 0`. The last interval is covered in
/// `TERMINAL_SUBSTEPS` substeps.
///
/// The scheme steps the excess `H = G - x`, which solves the same equation
/// (the gain operator annihilates `x`) with `H(T) = 0`, `H_z(0) = -1` and
/// `H = 0` at `z_max`. The discrete maximum principle then keeps `H >= 0`,
/// so `G >= x` holds at every node.
pub fn g_pde(model: &ValidatedModel, grid: &Grid) -> Result<Surface> {
    let stepper = Stepper::new(model, grid, OperatorKind::Gain, GAIN_BC)?;
    let m = grid.regimes;
    let xs = grid.x_nodes();
    let mut g = Surface::zeros(Field::G, grid);
    let fill = |g: &mut Surface, k: usize, excess: &[Vec<f64>]| {
        for (j, h) in excess.iter().enumerate() {
            for ((o, x), h) in g.slice_mut(k, j).iter_mut().zip(&xs).zip(h) {
                *o = x + h.max(0.0);
            }
        }
    };
    let mut excess = terminal_excess(model, grid)?.swap_remove(0);
    fill(&mut g, grid.n_t, &vec![vec![0.0; grid.n_x]; m]);
    fill(&mut g, grid.n_t - 1, &excess);
    let mut work = vec![Vec::with_capacity(grid.n_x); m];
    for k in (0..grid.n_t - 1).rev() {
        let next: Vec<&[f64]> = excess.iter().map(Vec::as_slice).collect();
        stepper.step(&next, &mut work);
        std::mem::swap(&mut excess, &mut work);
        fill(&mut g, k, &excess);
    }
    Ok(g)
}

const GAIN_BC: EdgeConditions = EdgeConditions {
    bottom_flux: -1.0,
    top: Top::Dirichlet(0.0),
};

/// Excess `G - x` on the substeps of the last interval: entry `s` holds the
/// slices at `t_{n_t - 1} + s dt / TERMINAL_SUBSTEPS`.
fn terminal_excess(model: &ValidatedModel, grid: &Grid) -> Result<Vec<Vec<Vec<f64>>>> {
    let h = grid.dt() / TERMINAL_SUBSTEPS as f64;
    let fine = Stepper::with_step(model, grid, OperatorKind::Gain, GAIN_BC, h)?;
    let m = grid.regimes;
    let mut out = vec![vec![vec![0.0; grid.n_x]; m]; TERMINAL_SUBSTEPS + 1];
    let mut work = vec![Vec::with_capacity(grid.n_x); m];
    for s in (0..TERMINAL_SUBSTEPS).rev() {
        let next: Vec<&[f64]> = out[s + 1].iter().map(Vec::as_slice).collect();
        fine.step(&next, &mut work);
        out[s].clone_from(&work);
    }
    Ok(out)
}

/// `G` on the substeps of the last interval, indexed as in the value
/// scheme: entry `s` is the time `t_{n_t - 1} + s dt / TERMINAL_SUBSTEPS`.
pub fn terminal_gain(model: &ValidatedModel, grid: &Grid) -> Result<Vec<Vec<Vec<f64>>>> {
    let xs = grid.x_nodes();
    Ok(terminal_excess(model, grid)?
        .into_iter()
        .map(|slices| {
            slices
                .into_iter()
                .map(|h| xs.iter().zip(h).map(|(x, h)| x + h.max(0.0)).collect())
                .collect()
        })
        .collect())
}

/// `dG/dx` together with the number of nodes that needed clamping to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub surface: Surface,
    pub clamped: usize,
    /// Largest distance of an unclamped difference from `[0, 1]`.
    pub max_excursion: f64,
    pub nodes: usize,
}

impl Derivative {
    pub fn clamp_rate(&self) -> f64 {
        self.clamped as f64 / self.nodes as f64
    }
}

/// Differences in `x`: central in the interior (exact for functions linear
/// in `x`), one-sided at the top; the reflecting node `x = 1` carries the
/// Neumann value 0.
pub fn dg_dx(g: &Surface, grid: &Grid) -> Derivative {
    let xs = grid.x_nodes();
    let n = grid.n_x;
    let mut d = Surface::zeros(Field::DGdx, grid);
    let mut clamped = 0;
    let mut max_excursion = 0.0f64;
    for k in 0..=grid.n_t {
        for j in 0..grid.regimes {
            let s = g.slice(k, j);
            let out = d.slice_mut(k, j);
            out[0] = 0.0;
            for i in 1..n {
                let raw = if i == n - 1 {
                    (s[i] - s[i - 1]) / (xs[i] - xs[i - 1])
                } else {
                    (s[i + 1] - s[i - 1]) / (xs[i + 1] - xs[i - 1])
                };
                let c = raw.clamp(0.0, 1.0);
                max_excursion = max_excursion.max((c - raw).abs());
                // Rounding-level excursions are not scheme defects.
                if (c - raw).abs() > 1e-12 {
                    clamped += 1;
                }
                out[i] = c;
            }
        }
    }
    Derivative {
        surface: d,
        clamped,
        max_excursion,
        nodes: (grid.n_t + 1) * grid.regimes * n,
    }
}

/// `LG = x sigma^2 dG/dx - mu G`, nodewise.
pub fn lg(g: &Surface, dgdx: &Surface, model: &ValidatedModel, grid: &Grid) -> Surface {
    let xs = grid.x_nodes();
    let mut out = Surface::zeros(Field::LG, grid);
    for k in 0..=grid.n_t {
        for j in 0..grid.regimes {
            let s2 = model.sigma[j] * model.sigma[j];
            let mu = model.mu[j];
            let gs = g.slice(k, j);
            let ds = dgdx.slice(k, j);
            for (i, o) in out.slice_mut(k, j).iter_mut().enumerate() {
                *o = xs[i] * s2 * ds[i] - mu * gs[i];
            }
        }
    }
    out
}

/// `h(t, j)`: the smallest node `x` such that `LG >= -eps_sign` at every
/// node at or above it; `+inf` when the top node already fails.
pub fn h_level(lg: &Surface, grid: &Grid, j: usize, eps_sign: f64) -> Vec<f64> {
    (0..=grid.n_t)
        .map(|k| {
            let s = lg.slice(k, j);
            let mut lowest = None;
            for i in (0..grid.n_x).rev() {
                if s[i] >= -eps_sign {
                    lowest = Some(i);
                } else {
                    break;
                }
            }
            lowest.map_or(f64::INFINITY, |i| grid.x(i))
        })
        .collect()
}

/// Everything the gain-side diagnostics need, computed on one grid.
#[derive(Debug, Clone)]
pub struct GainSurfaces {
    pub g: Surface,
    pub dgdx: Derivative,
    pub lg: Surface,
}

pub fn gain_surfaces(model: &ValidatedModel, grid: &Grid) -> Result<GainSurfaces> {
    let g = g_pde(model, grid)?;
    let dgdx = dg_dx(&g, grid);
    let lg = lg(&g, &dgdx.surface, model, grid);
    Ok(GainSurfaces { g, dgdx, lg })
}
