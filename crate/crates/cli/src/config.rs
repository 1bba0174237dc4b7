//! Run configuration, read from a TOML file.
//!
//! Regime indices in the file and in every output are 1-based.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use ultimax::tolerances::{EPS_SIGN, TOL_ABS};
use ultimax::volterra::DEFAULT_N_QUAD;
use ultimax::{Grid, RegimeModel, ValidatedModel};

use crate::error::CliError;

/// Parameters of the boundary figure: positive drifts, `T = 0.5`, 100 steps.
pub const FIGURE_CONFIG: &str = r#"
[model]
mu = [0.15, 0.05]
sigma = [0.5, 0.3]
q = [[-2.5, 2.5], [2.0, -2.0]]
horizon = 0.5

[grid]
n_x = 400
n_t = 100

[mc]
seed = 0
"#;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_x: Option<usize>,
    pub n_t: Option<usize>,
    pub z_max: Option<f64>,
}

fn default_n_paths() -> u64 {
    100_000
}

fn default_n_steps() -> usize {
    100
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    /// No default: every run names its seed.
    pub seed: u64,
    #[serde(default = "default_n_paths")]
    pub n_paths: u64,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    /// Exact running maximum between steps (Brownian bridge).
    #[serde(default = "yes")]
    pub bridge_max: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolerancesSection {
    pub tol_abs: f64,
    pub eps_sign: f64,
}

impl Default for TolerancesSection {
    fn default() -> Self {
        Self {
            tol_abs: TOL_ABS,
            eps_sign: EPS_SIGN,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub dir: PathBuf,
    /// Write a gnuplot script next to each plottable CSV.
    pub plots: bool,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plots: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolterraSection {
    pub n_quad: usize,
    /// Overrides `mc.n_paths`.
    pub n_paths: Option<u64>,
}

impl Default for VolterraSection {
    fn default() -> Self {
        Self {
            n_quad: DEFAULT_N_QUAD,
            n_paths: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Initial regimes; all of them when empty.
    pub j0: Vec<usize>,
    /// Extra fixed-threshold policies, one level per regime each.
    pub thresholds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    pub mc: McSection,
    #[serde(default)]
    pub tolerances: TolerancesSection,
    #[serde(default)]
    pub outputs: OutputsSection,
    #[serde(default)]
    pub volterra: VolterraSection,
    #[serde(default)]
    pub eval: EvalSection,
}

/// A parsed and validated configuration with the objects it describes.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub model: ValidatedModel,
    pub grid: Grid,
    /// SHA-256 of the configuration text, lowercase hex.
    pub hash: String,
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    fn check(&self) -> Result<(), CliError> {
        let m = self.model.mu.len();
        if self.grid.n_x.is_some_and(|n| n < 3) {
            return Err(invalid("grid.n_x", "must be at least 3"));
        }
        if self.grid.n_t == Some(0) {
            return Err(invalid("grid.n_t", "must be at least 1"));
        }
        if let Some(z) = self.grid.z_max {
            if !(z.is_finite() && z > 0.0) {
                return Err(invalid("grid.z_max", format!("must be positive, got {z}")));
            }
        }
        if self.mc.n_paths < 2 {
            return Err(invalid("mc.n_paths", "must be at least 2"));
        }
        if self.mc.n_steps == 0 {
            return Err(invalid("mc.n_steps", "must be at least 1"));
        }
        if !(self.tolerances.tol_abs.is_finite() && self.tolerances.tol_abs >= 0.0) {
            return Err(invalid("tolerances.tol_abs", "must be finite and nonnegative"));
        }
        if !(self.tolerances.eps_sign.is_finite() && self.tolerances.eps_sign >= 0.0) {
            return Err(invalid("tolerances.eps_sign", "must be finite and nonnegative"));
        }
        if self.volterra.n_quad < 2 {
            return Err(invalid("volterra.n_quad", "must be at least 2"));
        }
        if self.volterra.n_paths.is_some_and(|n| n < 2) {
            return Err(invalid("volterra.n_paths", "must be at least 2"));
        }
        if let Some(&j) = self.eval.j0.iter().find(|&&j| j == 0 || j > m) {
            return Err(invalid("eval.j0", format!("regime {j} is not in 1..={m}")));
        }
        for (i, t) in self.eval.thresholds.iter().enumerate() {
            if t.len() != m {
                return Err(invalid(
                    &format!("eval.thresholds[{i}]"),
                    format!("needs {m} levels, got {}", t.len()),
                ));
            }
            if t.iter().any(|v| !(v.is_finite() && *v >= 1.0)) {
                return Err(invalid(
                    &format!("eval.thresholds[{i}]"),
                    "levels must be finite and at least 1",
                ));
            }
        }
        Ok(())
    }

    /// Validates the configuration and builds the model and grid.
    pub fn load(self, text: &str) -> Result<Loaded, CliError> {
        self.check()?;
        let model = RegimeModel::new(
            self.model.mu.clone(),
            self.model.sigma.clone(),
            self.model.q.clone(),
            self.model.horizon,
        )
        .validate()
        .map_err(|e| invalid("model", e))?;
        let n_x = self.grid.n_x.unwrap_or(ultimax::grid::DEFAULT_N_X);
        let n_t = self
            .grid
            .n_t
            .unwrap_or_else(|| ultimax::grid::default_n_t(model.horizon));
        let grid = Grid::new(&model, n_x, n_t, self.grid.z_max).map_err(|e| invalid("grid", e))?;
        let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
        Ok(Loaded {
            config: self,
            model,
            grid,
            hash,
        })
    }

    pub fn j0s(&self) -> Vec<usize> {
        if self.eval.j0.is_empty() {
            (0..self.model.mu.len()).collect()
        } else {
            self.eval.j0.iter().map(|j| j - 1).collect()
        }
    }
}

pub fn load_text(text: &str) -> Result<Loaded, CliError> {
    RunConfig::parse(text)?.load(text)
}

pub fn load_file(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    load_text(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
