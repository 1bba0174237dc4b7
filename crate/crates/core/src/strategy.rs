//! Path-level evaluation of the regret `E[sup_{s <= T} Y_s / Y_tau]` for
//! stopping policies, on common random numbers.

use std::fmt;

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::mc::{reduce_paths, Estimate, Moments};
use crate::model::ValidatedModel;
use crate::paths::{PathSimulator, SamplePath, SimOptions};

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// Stop at the first step with `X >= b(t, regime)`, the boundary read at
    /// the last grid node not after `t`.
    Boundary(Boundary),
    Immediate,
    AtMaturity,
    /// Stop at the first step with `X >= level[regime]`.
    FixedThreshold(Vec<f64>),
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::Boundary(_) => "boundary".into(),
            Policy::Immediate => "immediate".into(),
            Policy::AtMaturity => "at_maturity".into(),
            Policy::FixedThreshold(l) => {
                let parts: Vec<String> = l.iter().map(|v| format!("{v}")).collect();
                format!("threshold({})", parts.join(";"))
            }
        }
    }

    fn check(&self, model: &ValidatedModel) -> Result<()> {
        match self {
            Policy::Boundary(b) => {
                if b.grid.regimes != model.regimes()
                    || (b.grid.horizon - model.horizon).abs() > 1e-12 * model.horizon
                {
                    return Err(Error::InvalidArgument(
                        "boundary grid does not match the model".into(),
                    ));
                }
            }
            Policy::FixedThreshold(l) => {
                if l.len() != model.regimes() || l.iter().any(|v| v.is_nan()) {
                    return Err(Error::InvalidArgument(format!(
                        "threshold policy needs {} levels",
                        model.regimes()
                    )));
                }
            }
            Policy::Immediate | Policy::AtMaturity => {}
        }
        Ok(())
    }

    /// Log stopping levels `ln b` per step and regime on the time grid
    /// `times`; the rule at step `k` depends only on `times[k]`.
    pub fn rule(&self, times: &[f64], regimes: usize) -> StopRule {
        let levels = times
            .iter()
            .map(|&t| {
                (0..regimes)
                    .map(|j| match self {
                        Policy::Immediate => f64::NEG_INFINITY,
                        Policy::AtMaturity => f64::INFINITY,
                        Policy::Boundary(b) => b.level_before(t, j).ln(),
                        Policy::FixedThreshold(l) => l[j].ln(),
                    })
                    .collect()
            })
            .collect();
        StopRule { levels }
    }
}

/// Stopping levels tabulated on a simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StopRule {
    /// `levels[k][j] = ln b(t_k, j)`.
    pub levels: Vec<Vec<f64>>,
}

impl StopRule {
    /// First step `k < n` with `ln X_k >= levels[k][regime_k]`, else `n`.
    /// Only step `k` of the path is read when deciding at `k`.
    pub fn stopping_index(&self, path: &SamplePath) -> usize {
        let n = self.levels.len() - 1;
        (0..n)
            .find(|&k| path.log_x_at(0.0, k) >= self.levels[k][path.states[k]])
            .unwrap_or(n)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Step index at which `policy` stops on `path`, `n_steps` if it never does
/// before maturity.
pub fn stopping_index(policy: &Policy, path: &SamplePath, times: &[f64]) -> usize {
    let regimes = path.states.iter().max().map_or(1, |m| m + 1);
    let regimes = match policy {
        Policy::Boundary(b) => b.grid.regimes,
        Policy::FixedThreshold(l) => l.len(),
        _ => regimes,
    };
    policy.rule(times, regimes).stopping_index(path)
}

/// `sup_{s <= T} Y_s / Y_tau` on one path.
pub fn path_regret(path: &SamplePath, tau: usize) -> f64 {
    (path.log_max[path.len() - 1] - path.log_y[tau]).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretEstimate {
    pub policy: String,
    pub j0: usize,
    pub estimate: Estimate,
    /// Paths whose regret fell below 1 (must be zero).
    pub below_one: u64,
}

pub fn evaluate_policy(
    model: &ValidatedModel,
    policy: &Policy,
    j0: usize,
    n_paths: u64,
    opts: SimOptions,
    seed: u64,
) -> Result<RegretEstimate> {
    let cmp = compare_policies(model, std::slice::from_ref(policy), j0, n_paths, opts, seed)?;
    Ok(cmp.estimates.into_iter().next().expect("one policy"))
}

/// Paired difference `regret(a) - regret(b)` on common paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifference {
    pub policy_a: String,
    pub policy_b: String,
    pub diff: f64,
    pub diff_se: f64,
    /// Largest per-path `|regret(a) - regret(b)|`; zero for an exact tie.
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// In input order.
    pub estimates: Vec<RegretEstimate>,
    /// Policy indices sorted by increasing mean regret (stable).
    pub ranking: Vec<usize>,
    /// All pairs `a < b` in input order.
    pub paired: Vec<PairedDifference>,
}

#[derive(Debug, Clone)]
struct Acc {
    single: Vec<Moments>,
    below_one: Vec<u64>,
    diffs: Vec<Moments>,
    max_abs: Vec<f64>,
}

impl Acc {
    fn new(p: usize) -> Self {
        let pairs = p * p.saturating_sub(1) / 2;
        Self {
            single: vec![Moments::default(); p],
            below_one: vec![0; p],
            diffs: vec![Moments::default(); pairs],
            max_abs: vec![0.0; pairs],
        }
    }

    fn merge(&mut self, o: &Acc) {
        for (a, b) in self.single.iter_mut().zip(&o.single) {
            a.merge(b);
        }
        for (a, b) in self.below_one.iter_mut().zip(&o.below_one) {
            *a += b;
        }
        for (a, b) in self.diffs.iter_mut().zip(&o.diffs) {
            a.merge(b);
        }
        for (a, b) in self.max_abs.iter_mut().zip(&o.max_abs) {
            *a = a.max(*b);
        }
    }
}

/// Evaluates every policy on the same paths started at `(0, x = 1, j0)`.
pub fn compare_policies(
    model: &ValidatedModel,
    policies: &[Policy],
    j0: usize,
    n_paths: u64,
    opts: SimOptions,
    seed: u64,
) -> Result<Comparison> {
    if policies.is_empty() {
        return Err(Error::InvalidArgument("no policies to evaluate".into()));
    }
    if j0 >= model.regimes() {
        return Err(Error::InvalidArgument(format!("initial regime {j0} out of range")));
    }
    if n_paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    for p in policies {
        p.check(model)?;
    }
    let sim = PathSimulator::new(model, 0.0, j0, opts, seed);
    let rules: Vec<StopRule> = policies
        .iter()
        .map(|p| p.rule(sim.times(), model.regimes()))
        .collect();
    let np = policies.len();
    let acc = reduce_paths(
        n_paths,
        || Acc::new(np),
        |range, acc| {
            let mut path = SamplePath::with_steps(opts.n_steps);
            let mut r = vec![0.0; np];
            for i in range {
                sim.sample_into(i, &mut path);
                for (rule, slot) in rules.iter().zip(r.iter_mut()) {
                    *slot = path_regret(&path, rule.stopping_index(&path));
                }
                for (q, &v) in r.iter().enumerate() {
                    acc.single[q].push(v);
                    if v < 1.0 {
                        acc.below_one[q] += 1;
                    }
                }
                let mut idx = 0;
                for a in 0..np {
                    for b in a + 1..np {
                        let d = r[a] - r[b];
                        acc.diffs[idx].push(d);
                        acc.max_abs[idx] = acc.max_abs[idx].max(d.abs());
                        idx += 1;
                    }
                }
            }
        },
        |a, b| a.merge(&b),
    );
    let estimates: Vec<RegretEstimate> = policies
        .iter()
        .enumerate()
        .map(|(q, p)| RegretEstimate {
            policy: p.name(),
            j0,
            estimate: acc.single[q].estimate(),
            below_one: acc.below_one[q],
        })
        .collect();
    let mut ranking: Vec<usize> = (0..np).collect();
    ranking.sort_by(|&a, &b| estimates[a].estimate.mean.total_cmp(&estimates[b].estimate.mean));
    let mut paired = Vec::new();
    let mut idx = 0;
    for a in 0..np {
        for b in a + 1..np {
            let e = acc.diffs[idx].estimate();
            paired.push(PairedDifference {
                policy_a: estimates[a].policy.clone(),
                policy_b: estimates[b].policy.clone(),
                diff: e.mean,
                diff_se: e.std_error,
                max_abs: acc.max_abs[idx],
            });
            idx += 1;
        }
    }
    Ok(Comparison {
        estimates,
        ranking,
        paired,
    })
}
