//! Joint simulation of the regime chain, the asset level and its running
//! maximum, plus the lift to the max-to-current ratio process `X`.
//!
//! The regime path is sampled exactly and merged with the uniform step grid,
//! so each sub-interval has a single frozen regime and the asset moves by the
//! exact log-normal update. The running maximum is tracked at merged event
//! times; with `bridge_max` enabled it also includes the exact maximum of the
//! Brownian bridge on every frozen-regime interval, which makes the sampled
//! maximum exact in law.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::markov::sample_chain_with;
use crate::model::ValidatedModel;
use crate::rng::{path_rng, PathRng};

/// Sampling options shared by all Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub n_steps: usize,
    /// Add the sampled intra-interval Brownian-bridge maximum.
    pub bridge_max: bool,
}

impl SimOptions {
    pub fn new(n_steps: usize, bridge_max: bool) -> Self {
        Self { n_steps, bridge_max }
    }
}

/// One simulated path on the step grid, `Y_{t0} = 1`, stored in logs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplePath {
    pub states: Vec<usize>,
    /// `ln Y` at each step.
    pub log_y: Vec<f64>,
    /// `ln` of the running maximum of `Y` since `t0`.
    pub log_max: Vec<f64>,
}

impl SamplePath {
    pub fn with_steps(n_steps: usize) -> Self {
        Self {
            states: vec![0; n_steps + 1],
            log_y: vec![0.0; n_steps + 1],
            log_max: vec![0.0; n_steps + 1],
        }
    }

    /// Builds a path from levels; `ymax` is taken as given.
    pub fn from_levels(states: Vec<usize>, y: &[f64], ymax: &[f64]) -> Self {
        Self {
            states,
            log_y: y.iter().map(|v| v.ln()).collect(),
            log_max: ymax.iter().map(|v| v.ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_y.is_empty()
    }

    pub fn y(&self, k: usize) -> f64 {
        self.log_y[k].exp()
    }

    pub fn ymax(&self, k: usize) -> f64 {
        self.log_max[k].exp()
    }

    /// Ratio process `X_s = max(x0 Y_{t0}, Ymax_s) / Y_s` at step `k`.
    pub fn x_at(&self, x0: f64, k: usize) -> f64 {
        self.log_x_at(x0.ln(), k).exp()
    }

    /// `ln X_s` at step `k` given `ln x0`.
    pub fn log_x_at(&self, log_x0: f64, k: usize) -> f64 {
        (log_x0 + self.log_y[0]).max(self.log_max[k]) - self.log_y[k]
    }
}

/// Streaming path generator: path `i` is a pure function of `(seed, i)`.
#[derive(Debug, Clone)]
pub struct PathSimulator<'a> {
    model: &'a ValidatedModel,
    t0: f64,
    j0: usize,
    times: Vec<f64>,
    opts: SimOptions,
    seed: u64,
}

impl<'a> PathSimulator<'a> {
    pub fn new(model: &'a ValidatedModel, t0: f64, j0: usize, opts: SimOptions, seed: u64) -> Self {
        assert!(opts.n_steps >= 1, "n_steps must be at least 1");
        assert!(t0 <= model.horizon, "t0 must not exceed the horizon");
        assert!(j0 < model.regimes(), "initial regime out of range");
        let h = (model.horizon - t0) / opts.n_steps as f64;
        let times = (0..=opts.n_steps)
            .map(|k| {
                if k == opts.n_steps {
                    model.horizon
                } else {
                    t0 + k as f64 * h
                }
            })
            .collect();
        Self {
            model,
            t0,
            j0,
            times,
            opts,
            seed,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.opts.n_steps
    }

    pub fn rng_for(&self, index: u64) -> PathRng {
        path_rng(self.seed, index)
    }

    /// Fills `out` with path `index`.
    pub fn sample_into(&self, index: u64, out: &mut SamplePath) {
        let mut rng = self.rng_for(index);
        self.sample_with(&mut rng, out);
    }

    pub fn sample(&self, index: u64) -> SamplePath {
        let mut out = SamplePath::with_steps(self.opts.n_steps);
        self.sample_into(index, &mut out);
        out
    }

    fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut SamplePath) {
        let n = self.opts.n_steps;
        out.states.resize(n + 1, 0);
        out.log_y.resize(n + 1, 0.0);
        out.log_max.resize(n + 1, 0.0);

        let chain = sample_chain_with(&self.model.q, self.t0, self.model.horizon, self.j0, rng);
        let mut walker = LogWalker::new(self.model, self.opts.bridge_max);
        let mut t = self.t0;
        let mut next_jump = 0usize;
        let mut state = self.j0;
        out.states[0] = state;
        out.log_y[0] = 0.0;
        out.log_max[0] = 0.0;
        for k in 1..=n {
            let target = self.times[k];
            while next_jump < chain.jump_times.len() && chain.jump_times[next_jump] < target {
                let tj = chain.jump_times[next_jump];
                walker.advance(state, tj - t, rng);
                t = tj;
                next_jump += 1;
                state = chain.states[next_jump];
            }
            walker.advance(state, target - t, rng);
            t = target;
            out.states[k] = state;
            out.log_y[k] = walker.log_y;
            out.log_max[k] = walker.log_max;
        }
    }
}

/// Exact log-level update with a frozen regime.
struct LogWalker<'a> {
    model: &'a ValidatedModel,
    bridge: bool,
    log_y: f64,
    log_max: f64,
}

impl<'a> LogWalker<'a> {
    fn new(model: &'a ValidatedModel, bridge: bool) -> Self {
        Self {
            model,
            bridge,
            log_y: 0.0,
            log_max: 0.0,
        }
    }

    fn advance<R: Rng + ?Sized>(&mut self, regime: usize, dt: f64, rng: &mut R) {
        if dt <= 0.0 {
            return;
        }
        let sigma = self.model.sigma[regime];
        let drift = self.model.mu[regime] - 0.5 * sigma * sigma;
        let z: f64 = rng.sample(StandardNormal);
        let inc = drift * dt + sigma * dt.sqrt() * z;
        let peak = if self.bridge {
            // Maximum of a Brownian bridge from 0 to `inc` with variance
            // sigma^2 dt; `e` plays the role of `-ln U`.
            let e: f64 = rng.sample(Exp1);
            0.5 * (inc + (inc * inc + 2.0 * sigma * sigma * dt * e).sqrt())
        } else {
            inc.max(0.0)
        };
        self.log_max = self.log_max.max(self.log_y + peak);
        self.log_y += inc;
    }
}

/// A materialized set of paths on a common step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub n_paths: usize,
    pub n_steps: usize,
    pub times: Vec<f64>,
    pub seed: u64,
    pub paths: Vec<SamplePath>,
}

/// Simulates `n_paths` paths started at `(t0, j0)` with `Y_{t0} = 1`.
pub fn simulate_paths(
    model: &ValidatedModel,
    t0: f64,
    j0: usize,
    n_paths: usize,
    opts: SimOptions,
    seed: u64,
) -> PathBundle {
    use rayon::prelude::*;
    let sim = PathSimulator::new(model, t0, j0, opts, seed);
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| sim.sample(i))
        .collect();
    PathBundle {
        n_paths,
        n_steps: opts.n_steps,
        times: sim.times().to_vec(),
        seed,
        paths,
    }
}

/// Ratio-process values `X` for every path and step of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct XPath {
    pub x0: f64,
    pub x: Vec<Vec<f64>>,
}

pub fn lift_to_x(bundle: &PathBundle, x0: f64) -> XPath {
    assert!(x0 >= 1.0, "x0 must be at least 1");
    let x = bundle
        .paths
        .iter()
        .map(|p| (0..p.len()).map(|k| p.x_at(x0, k)).collect())
        .collect();
    XPath { x0, x }
}
