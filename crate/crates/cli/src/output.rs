//! CSV, plot-script and manifest emission.
//!
//! Every CSV is comma separated with a header row and LF line endings;
//! reals carry 12 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Formats a real with 12 significant digits; infinities as `inf`/`-inf`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.11e}")
    }
}

pub struct Outputs {
    dir: PathBuf,
    plots: bool,
    written: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path, plots: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            plots,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        fs::write(self.dir.join(name), content)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Gnuplot script, skipped when plots are disabled.
    pub fn plot(&mut self, name: &str, script: &str) -> Result<(), CliError> {
        if self.plots {
            self.text(name, script)?;
        }
        Ok(())
    }
}

/// One line of `checks.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Reported against a reference bound calibrated on another model.
    Info,
    NotApplicable,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
            Status::NotApplicable => "not_applicable",
        }
    }
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            status: if value <= bound { Status::Pass } else { Status::Fail },
        }
    }

    /// Turns a failing check into an informational one.
    pub fn informational(mut self) -> Self {
        if self.status != Status::NotApplicable {
            self.status = Status::Info;
        }
        self
    }

    pub fn not_applicable(name: &str) -> Self {
        Self {
            name: name.into(),
            value: f64::NAN,
            bound: f64::NAN,
            status: Status::NotApplicable,
        }
    }
}

pub fn write_checks(out: &mut Outputs, checks: &[Check]) -> Result<(), CliError> {
    out.csv(
        "checks.csv",
        &["check", "value", "bound", "status"],
        checks.iter().map(|c| {
            vec![
                c.name.clone(),
                num(c.value),
                num(c.bound),
                c.status.as_str().to_string(),
            ]
        }),
    )
}

/// Gnuplot script drawing column `y` against column `x`, one curve per
/// regime (1-based, in column `j`), on rows passing the optional `filter`.
pub fn regime_plot(csv: &str, title: &str, (x, y, j_col): (usize, usize, usize), regimes: usize, filter: Option<&str>) -> String {
    let extra = filter.map(|f| format!(" && {f}")).unwrap_or_default();
    let curves: Vec<String> = (1..=regimes)
        .map(|j| {
            format!(
                "'{csv}' using ((${j_col}=={j}{extra}) ? ${x} : 1/0):{y} with lines title 'regime {j}'"
            )
        })
        .collect();
    format!(
        "set datafile separator ','\nset key autotitle columnhead\nset title '{title}'\nset grid\nplot {}\npause -1\n",
        curves.join(", \\\n     ")
    )
}
