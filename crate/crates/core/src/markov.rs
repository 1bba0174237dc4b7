//! Transition kernels and exact path sampling for the regime chain.

use rand::Rng;

use crate::rng::{open_unit, path_rng};
use crate::tolerances::UNIFORMIZATION_TAIL;

/// Largest `rate * dt` handled by a single uniformization pass; longer steps
/// are split and the pieces multiplied together.
const MAX_POISSON_MEAN: f64 = 20.0;

/// Row-stochastic matrix `exp(Q dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub p: Vec<Vec<f64>>,
    pub dt: f64,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `out[j] = sum_i p[j][i] * v[i]`, the conditional expectation of a
    /// regime-indexed quantity one step ahead.
    pub fn expect(&self, values: &[f64]) -> Vec<f64> {
        self.p
            .iter()
            .map(|row| row.iter().zip(values).map(|(p, v)| p * v).sum())
            .collect()
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn uniformized(q: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let m = q.len();
    let rate = (0..m).map(|j| -q[j][j]).fold(0.0, f64::max);
    if rate == 0.0 || dt == 0.0 {
        return identity(m);
    }
    // Uniformized kernel K = I + Q / rate is stochastic with nonnegative entries.
    let kernel: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| q[i][j] / rate + if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let lambda = rate * dt;
    let mut weight = (-lambda).exp();
    let mut cumulative = weight;
    let mut power = identity(m);
    let mut out: Vec<Vec<f64>> = power
        .iter()
        .map(|row| row.iter().map(|v| v * weight).collect())
        .collect();
    let mut k = 0u32;
    while 1.0 - cumulative >= UNIFORMIZATION_TAIL && k < 10_000 {
        k += 1;
        power = mat_mul(&power, &kernel);
        weight *= lambda / f64::from(k);
        cumulative += weight;
        for (orow, prow) in out.iter_mut().zip(&power) {
            for (o, p) in orow.iter_mut().zip(prow) {
                *o += weight * p;
            }
        }
    }
    out
}

/// `exp(Q dt)` by uniformization, rows renormalized to sum to one.
pub fn transition_matrix(q: &[Vec<f64>], dt: f64) -> TransitionMatrix {
    assert!(dt >= 0.0, "dt must be nonnegative");
    let m = q.len();
    let rate = (0..m).map(|j| -q[j][j]).fold(0.0, f64::max);
    let pieces = ((rate * dt) / MAX_POISSON_MEAN).ceil().max(1.0) as u32;
    let piece = uniformized(q, dt / f64::from(pieces));
    let mut p = piece.clone();
    for _ in 1..pieces {
        p = mat_mul(&p, &piece);
    }
    for row in &mut p {
        for v in row.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    TransitionMatrix { p, dt }
}

/// One realization of the regime chain on `[t0, horizon]`.
///
/// `states[k]` is the regime on `[jump_times[k-1], jump_times[k])`, with
/// `states[0]` the initial regime; `states.len() == jump_times.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub t0: f64,
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
}

impl ChainPath {
    pub fn initial_state(&self) -> usize {
        self.states[0]
    }

    /// Regime in force at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k]
    }
}

fn next_state<R: Rng + ?Sized>(q: &[Vec<f64>], from: usize, rng: &mut R) -> usize {
    let rate = -q[from][from];
    let target = rng.random::<f64>() * rate;
    let mut acc = 0.0;
    let mut last = from;
    for (j, &v) in q[from].iter().enumerate() {
        if j == from || v <= 0.0 {
            continue;
        }
        acc += v;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

/// Exact sojourn sampling driven by a caller-supplied generator.
///
/// Holding times are drawn by inverse CDF, `-ln(U) / |q_jj|`, and the next
/// regime proportionally to the off-diagonal row entries.
pub fn sample_chain_with<R: Rng + ?Sized>(
    q: &[Vec<f64>],
    t0: f64,
    horizon: f64,
    j0: usize,
    rng: &mut R,
) -> ChainPath {
    let mut jump_times = Vec::new();
    let mut states = vec![j0];
    let mut t = t0;
    let mut state = j0;
    loop {
        let rate = -q[state][state];
        if rate <= 0.0 {
            break;
        }
        t += -open_unit(rng).ln() / rate;
        if t >= horizon {
            break;
        }
        state = next_state(q, state, rng);
        jump_times.push(t);
        states.push(state);
    }
    ChainPath {
        t0,
        horizon,
        jump_times,
        states,
    }
}

pub fn sample_chain(q: &[Vec<f64>], t0: f64, horizon: f64, j0: usize, seed: u64) -> ChainPath {
    assert!(t0 <= horizon, "t0 must not exceed the horizon");
    let mut rng = path_rng(seed, 0);
    sample_chain_with(q, t0, horizon, j0, &mut rng)
}

/// Stationary distribution of an irreducible generator, by solving
/// `pi Q = 0`, `sum(pi) = 1` with Gaussian elimination.
pub fn stationary_distribution(q: &[Vec<f64>]) -> Vec<f64> {
    let m = q.len();
    // Rows of the system: transpose of Q, last equation replaced by normalization.
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| q[j][i]).collect())
        .collect();
    let mut b = vec![0.0; m];
    a[m - 1] = vec![1.0; m];
    b[m - 1] = 1.0;
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        for row in col + 1..m {
            let f = a[row][col] / d;
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::figure_generator;
    use proptest::prelude::*;

    fn taylor_oracle(q: &[Vec<f64>], dt: f64, terms: u32) -> Vec<Vec<f64>> {
        let m = q.len();
        let mut out = identity(m);
        let mut term = identity(m);
        for k in 1..=terms {
            term = mat_mul(&term, q);
            for row in term.iter_mut() {
                for v in row.iter_mut() {
                    *v *= dt / f64::from(k);
                }
            }
            for i in 0..m {
                for j in 0..m {
                    out[i][j] += term[i][j];
                }
            }
        }
        out
    }

    #[test]
    fn zero_generator_gives_identity() {
        let p = transition_matrix(&[vec![0.0]], 0.1);
        assert_eq!(p.p, vec![vec![1.0]]);
        let p = transition_matrix(&figure_generator(), 0.0);
        assert_eq!(p.p, identity(2));
    }

    #[test]
    fn long_horizon_rows_reach_stationary_law() {
        let p = transition_matrix(&figure_generator(), 100.0);
        // pi Q = 0 by hand: 2.5 pi1 = 2 pi2, pi1 + pi2 = 1.
        let pi = [4.0 / 9.0, 5.0 / 9.0];
        for row in &p.p {
            for (v, e) in row.iter().zip(pi) {
                assert!((v - e).abs() < 1e-12, "{v} vs {e}");
            }
        }
        let solved = stationary_distribution(&figure_generator());
        assert!((solved[0] - pi[0]).abs() < 1e-14);
    }

    #[test]
    fn short_step_matches_taylor_series() {
        let q = figure_generator();
        let dt = 0.005;
        let p = transition_matrix(&q, dt);
        let oracle = taylor_oracle(&q, dt, 20);
        // Remainder of the 20-term series is below (4.5 * dt)^21 / 21!.
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.p[i][j] - oracle[i][j]).abs() < 1e-14);
                let first = if i == j { 1.0 } else { 0.0 } + q[i][j] * dt;
                assert!((p.p[i][j] - first).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let q = vec![
            vec![-3.0, 1.0, 2.0],
            vec![0.5, -0.5, 0.0],
            vec![0.0, 4.0, -4.0],
        ];
        for dt in [0.0, 1e-4, 0.3, 7.0, 500.0] {
            let p = transition_matrix(&q, dt);
            for row in &p.p {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn zero_rates_never_jump() {
        let path = sample_chain(&[vec![0.0, 0.0], vec![0.0, 0.0]], 0.0, 1.0, 1, 42);
        assert!(path.jump_times.is_empty());
        assert_eq!(path.states, vec![1]);
        assert_eq!(path.state_at(0.7), 1);
    }

    #[test]
    fn absorbing_state_stops_jumping() {
        let q = vec![vec![-5.0, 5.0], vec![0.0, 0.0]];
        let path = sample_chain(&q, 0.0, 10.0, 0, 3);
        assert!(path.jump_times.len() <= 1);
        assert_eq!(*path.states.last().unwrap(), 1);
    }

    #[test]
    fn chain_path_invariants() {
        let q = figure_generator();
        for seed in 0..50 {
            let path = sample_chain(&q, 0.1, 3.0, 0, seed);
            assert_eq!(path.states.len(), path.jump_times.len() + 1);
            assert!(path.jump_times.windows(2).all(|w| w[0] < w[1]));
            assert!(path.jump_times.iter().all(|&t| t > 0.1 && t < 3.0));
            assert!(path.states.windows(2).all(|w| w[0] != w[1]));
        }
    }

    fn mean_first_sojourn(j0: usize) -> (f64, f64) {
        let q = figure_generator();
        let n = 100_000u64;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let mut rng = path_rng(99, i);
            let path = sample_chain_with(&q, 0.0, 50.0, j0, &mut rng);
            let h = path.jump_times[0];
            s += h;
            s2 += h * h;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn mean_sojourn_regime_one_is_0_4() {
        let (mean, se) = mean_first_sojourn(0);
        assert!((mean - 0.4).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn mean_sojourn_regime_two_is_0_5() {
        let (mean, se) = mean_first_sojourn(1);
        assert!((mean - 0.5).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn occupation_frequencies_approach_stationary_law() {
        let q = figure_generator();
        let horizon = 20_000.0;
        let path = sample_chain(&q, 0.0, horizon, 0, 5);
        let mut occ = [0.0; 2];
        let mut t = 0.0;
        for (k, &s) in path.states.iter().enumerate() {
            let end = path.jump_times.get(k).copied().unwrap_or(horizon);
            occ[s] += end - t;
            t = end;
        }
        let frac = occ[0] / horizon;
        // Batch-means scale of the error for ~20k sojourn cycles.
        assert!((frac - 4.0 / 9.0).abs() < 0.01, "{frac}");
    }

    proptest! {
        #[test]
        fn semigroup_property(a in 0.0f64..2.0, b in 0.0f64..2.0, r01 in 0.0f64..5.0, r10 in 0.0f64..5.0) {
            let q = vec![vec![-r01, r01], vec![r10, -r10]];
            let pa = transition_matrix(&q, a);
            let pb = transition_matrix(&q, b);
            let pab = transition_matrix(&q, a + b);
            let prod = mat_mul(&pa.p, &pb.p);
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((prod[i][j] - pab.p[i][j]).abs() < 1e-10);
                }
            }
        }
    }
}
