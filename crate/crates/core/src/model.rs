//! Problem instance: a geometric Brownian motion whose drift and volatility
//! are driven by a finite-state continuous-time Markov chain.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::tolerances::GENERATOR_ROW_TOL;

/// Regime-switching GBM on a finite horizon.
///
/// `q` is the generator of the regime chain, stored row-major as `q[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeModel {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub horizon: f64,
}

impl RegimeModel {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>, q: Vec<Vec<f64>>, horizon: f64) -> Self {
        Self {
            mu,
            sigma,
            q,
            horizon,
        }
    }

    /// Single-regime model (no switching).
    pub fn single(mu: f64, sigma: f64, horizon: f64) -> Self {
        Self::new(vec![mu], vec![sigma], vec![vec![0.0]], horizon)
    }

    pub fn regimes(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(self) -> Result<ValidatedModel> {
        validate(self)
    }
}

/// A [`RegimeModel`] whose invariants have been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel(RegimeModel);

impl ValidatedModel {
    pub fn model(&self) -> &RegimeModel {
        &self.0
    }

    pub fn into_inner(self) -> RegimeModel {
        self.0
    }

    /// Total jump intensity `|q_jj|` of regime `j`.
    pub fn exit_rate(&self, j: usize) -> f64 {
        -self.0.q[j][j]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.regimes())
            .map(|j| self.exit_rate(j))
            .fold(0.0, f64::max)
    }

    pub fn classify(&self) -> ExerciseRegime {
        classify(self)
    }
}

impl Deref for ValidatedModel {
    type Target = RegimeModel;

    fn deref(&self) -> &RegimeModel {
        &self.0
    }
}

/// Exercise structure that is known in closed form from the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExerciseRegime {
    /// Every drift is nonpositive: stopping at once is optimal.
    ImmediateExercise,
    /// Every drift dominates its variance: waiting until the horizon is optimal.
    ExerciseAtMaturity,
    General,
}

impl ExerciseRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExerciseRegime::ImmediateExercise => "ImmediateExercise",
            ExerciseRegime::ExerciseAtMaturity => "ExerciseAtMaturity",
            ExerciseRegime::General => "General",
        }
    }
}

impl std::fmt::Display for ExerciseRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Checks the standing assumptions and returns the model unchanged on success.
pub fn validate(model: RegimeModel) -> Result<ValidatedModel> {
    let m = model.mu.len();
    if m == 0 {
        return Err(Error::Shape("at least one regime is required".into()));
    }
    if model.sigma.len() != m {
        return Err(Error::Shape(format!(
            "sigma has {} entries, mu has {m}",
            model.sigma.len()
        )));
    }
    if model.q.len() != m || model.q.iter().any(|row| row.len() != m) {
        return Err(Error::Shape(format!("generator must be {m}x{m}")));
    }
    if !(model.horizon.is_finite() && model.horizon > 0.0) {
        return Err(Error::NonPositiveHorizon(model.horizon));
    }
    for (j, &mu) in model.mu.iter().enumerate() {
        if !mu.is_finite() {
            return Err(Error::NonFinite(format!("mu[{j}] = {mu}")));
        }
    }
    for (j, &s) in model.sigma.iter().enumerate() {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::NonPositiveVolatility {
                regime: j,
                value: s,
            });
        }
    }
    for (i, row) in model.q.iter().enumerate() {
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("q[{i}] contains {v}")));
        }
        if let Some((j, v)) = row
            .iter()
            .enumerate()
            .find(|&(j, &v)| j != i && v < 0.0)
        {
            return Err(Error::BadGeneratorRow {
                row: i,
                reason: format!("off-diagonal entry q[{i}][{j}] = {v} is negative"),
            });
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > GENERATOR_ROW_TOL {
            return Err(Error::BadGeneratorRow {
                row: i,
                reason: format!("row sums to {sum}, expected 0"),
            });
        }
    }
    Ok(ValidatedModel(model))
}

/// Reads off the closed-form exercise structure from the drifts and volatilities.
///
/// Boundary cases use the non-strict inequalities: `mu = 0` counts as
/// immediate exercise and `mu = sigma^2` as exercise at maturity.
pub fn classify(model: &ValidatedModel) -> ExerciseRegime {
    if model.mu.iter().all(|&mu| mu <= 0.0) {
        ExerciseRegime::ImmediateExercise
    } else if model
        .mu
        .iter()
        .zip(&model.sigma)
        .all(|(&mu, &s)| mu >= s * s)
    {
        ExerciseRegime::ExerciseAtMaturity
    } else {
        ExerciseRegime::General
    }
}

/// Two-regime generator used throughout the examples and the figure run.
pub fn figure_generator() -> Vec<Vec<f64>> {
    vec![vec![-2.5, 2.5], vec![2.0, -2.0]]
}

/// The two-state model with positive drifts used for the boundary figure.
pub fn figure_model() -> RegimeModel {
    RegimeModel::new(vec![0.15, 0.05], vec![0.5, 0.3], figure_generator(), 0.5)
}

/// Both drifts negative, figure generator and horizon.
pub fn immediate_exercise_model() -> RegimeModel {
    RegimeModel::new(vec![-0.05, -0.1], vec![0.3, 0.5], figure_generator(), 0.5)
}

/// Both drifts above their variances, figure generator and horizon.
pub fn maturity_model() -> RegimeModel {
    RegimeModel::new(vec![0.3, 0.5], vec![0.5, 0.7], figure_generator(), 0.5)
}

/// Figure model with both drifts set to zero.
pub fn zero_drift_model() -> RegimeModel {
    RegimeModel::new(vec![0.0, 0.0], vec![0.5, 0.3], figure_generator(), 0.5)
}

/// Single regime without switching.
pub fn single_regime_model() -> RegimeModel {
    RegimeModel::single(0.05, 0.3, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn presets_classify_as_named() {
        let c = |m: RegimeModel| m.validate().unwrap().classify();
        assert_eq!(c(immediate_exercise_model()), ExerciseRegime::ImmediateExercise);
        assert_eq!(c(maturity_model()), ExerciseRegime::ExerciseAtMaturity);
        assert_eq!(c(zero_drift_model()), ExerciseRegime::ImmediateExercise);
        assert_eq!(c(single_regime_model()), ExerciseRegime::General);
    }

    #[test]
    fn figure_model_is_valid_and_general() {
        let m = figure_model().validate().unwrap();
        assert_eq!(m.regimes(), 2);
        assert_eq!(m.classify(), ExerciseRegime::General);
    }

    #[test]
    fn single_regime_is_valid() {
        let m = RegimeModel::single(0.05, 0.3, 1.0).validate().unwrap();
        assert_eq!(m.q, vec![vec![0.0]]);
    }

    #[test]
    fn bad_row_sum_rejected() {
        let m = RegimeModel::new(
            vec![0.1, 0.1],
            vec![0.2, 0.2],
            vec![vec![-1.0, 0.5], vec![2.0, -2.0]],
            1.0,
        );
        assert!(matches!(
            m.validate(),
            Err(Error::BadGeneratorRow { row: 0, .. })
        ));
    }

    #[test]
    fn negative_off_diagonal_rejected() {
        let m = RegimeModel::new(
            vec![0.1, 0.1],
            vec![0.2, 0.2],
            vec![vec![1.0, -1.0], vec![2.0, -2.0]],
            1.0,
        );
        assert!(matches!(
            m.validate(),
            Err(Error::BadGeneratorRow { row: 0, .. })
        ));
    }

    #[test]
    fn row_sum_tolerance_is_absolute_1e12() {
        let ok = RegimeModel::new(
            vec![0.1, 0.1],
            vec![0.2, 0.2],
            vec![vec![-1.0 + 5e-13, 1.0], vec![2.0, -2.0]],
            1.0,
        );
        assert!(ok.validate().is_ok());
        let bad = RegimeModel::new(
            vec![0.1, 0.1],
            vec![0.2, 0.2],
            vec![vec![-1.0 + 5e-12, 1.0], vec![2.0, -2.0]],
            1.0,
        );
        assert!(bad.validate().is_err());
    }

    #[test]
    fn volatility_and_horizon_errors() {
        let m = RegimeModel::single(0.1, 0.0, 1.0);
        assert!(matches!(
            m.validate(),
            Err(Error::NonPositiveVolatility { regime: 0, .. })
        ));
        let m = RegimeModel::single(0.1, 0.2, 0.0);
        assert!(matches!(m.validate(), Err(Error::NonPositiveHorizon(_))));
        let m = RegimeModel::single(f64::NAN, 0.2, 1.0);
        assert!(matches!(m.validate(), Err(Error::NonFinite(_))));
    }

    #[test]
    fn classification_examples() {
        let q = figure_generator();
        let imm = RegimeModel::new(vec![-0.05, -0.1], vec![0.3, 0.5], q.clone(), 0.5)
            .validate()
            .unwrap();
        assert_eq!(imm.classify(), ExerciseRegime::ImmediateExercise);
        let mat = RegimeModel::new(vec![0.3, 0.5], vec![0.5, 0.7], q.clone(), 0.5)
            .validate()
            .unwrap();
        assert_eq!(mat.classify(), ExerciseRegime::ExerciseAtMaturity);
    }

    #[test]
    fn classification_boundary_cases_are_non_strict() {
        let q = figure_generator();
        let zero = RegimeModel::new(vec![0.0, 0.0], vec![0.3, 0.5], q.clone(), 0.5)
            .validate()
            .unwrap();
        assert_eq!(zero.classify(), ExerciseRegime::ImmediateExercise);
        let eq = RegimeModel::new(vec![0.25, 0.09], vec![0.5, 0.3], q, 0.5)
            .validate()
            .unwrap();
        assert_eq!(eq.classify(), ExerciseRegime::ExerciseAtMaturity);
    }

    fn arb_model() -> impl Strategy<Value = RegimeModel> {
        (1usize..5).prop_flat_map(|m| {
            (
                prop::collection::vec(-1.0f64..1.0, m),
                prop::collection::vec(0.05f64..1.0, m),
                prop::collection::vec(0.0f64..3.0, m * m),
            )
                .prop_map(move |(mu, sigma, rates)| {
                    let mut q = vec![vec![0.0; m]; m];
                    for i in 0..m {
                        for j in 0..m {
                            if i != j {
                                q[i][j] = rates[i * m + j];
                            }
                        }
                        q[i][i] = -(0..m).filter(|&j| j != i).map(|j| q[i][j]).sum::<f64>();
                    }
                    RegimeModel::new(mu, sigma, q, 1.0)
                })
        })
    }

    proptest! {
        #[test]
        fn validate_is_idempotent(model in arb_model()) {
            let once = model.clone().validate().unwrap();
            let twice = once.clone().into_inner().validate().unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn classification_invariant_under_relabelling(model in arb_model(), shift in 0usize..5) {
            let m = model.regimes();
            let perm: Vec<usize> = (0..m).map(|i| (i + shift) % m).collect();
            let q = (0..m)
                .map(|i| (0..m).map(|j| model.q[perm[i]][perm[j]]).collect())
                .collect();
            let permuted = RegimeModel::new(
                perm.iter().map(|&i| model.mu[i]).collect(),
                perm.iter().map(|&i| model.sigma[i]).collect(),
                q,
                model.horizon,
            );
            prop_assert_eq!(
                model.validate().unwrap().classify(),
                permuted.validate().unwrap().classify()
            );
        }
    }
}
