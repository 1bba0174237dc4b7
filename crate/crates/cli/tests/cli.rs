//! End-to-end runs of the `ultimax` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[model]
mu = [0.15, 0.05]
sigma = [0.5, 0.3]
q = [[-2.5, 2.5], [2.0, -2.0]]
horizon = 0.5

[grid]
n_x = 120
n_t = 50

[mc]
seed = 11
n_paths = 3000
n_steps = 25

[volterra]
n_quad = 8
n_paths = 500

[eval]
thresholds = [[1.05, 1.05]]
"#;

fn ultimax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultimax"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_in(dir: &Path, cmd: &str, config: Option<&Path>, extra: &[&str]) -> (i32, PathBuf) {
    let out = dir.join(format!("{cmd}-{}", extra.join("")));
    let out_s = out.to_str().unwrap().to_string();
    let cfg_s = config.map(|c| c.to_str().unwrap().to_string());
    let mut args = vec![cmd, "--out", &out_s];
    if let Some(c) = &cfg_s {
        args.extend(["--config", c.as_str()]);
    }
    args.extend(extra);
    let o = ultimax(&args);
    (o.status.code().unwrap(), out)
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn invalid_generator_exits_2_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SMALL.replace("[2.0, -2.0]", "[2.0, -1.0]"));
    let (code, out) = run_in(dir.path(), "solve", Some(&cfg), &[]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn config_errors_are_located() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "typo.toml", &SMALL.replace("n_steps = 25", "n_step = 25"));
    let o = ultimax(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line") && err.contains("n_step"), "{err}");

    let o = ultimax(&["solve"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ultimax(&["figure", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn coarse_time_grid_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "coarse.toml", &SMALL.replace("n_t = 50", "n_t = 2"));
    let (code, out) = run_in(dir.path(), "solve", Some(&cfg), &[]);
    assert_eq!(code, 3);
    assert!(!out.exists());
}

#[test]
fn immediate_exercise_is_flagged_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("mu = [0.15, 0.05]", "mu = [-0.05, -0.1]");
    let cfg = write_config(dir.path(), "imm.toml", &text);
    let (code, out) = run_in(dir.path(), "solve", Some(&cfg), &[]);
    assert_eq!(code, 0);
    let manifest = read(&out.join("manifest.txt"));
    assert!(manifest.contains("exercise_regime = ImmediateExercise"));
    assert!(manifest.contains("pinned.SCHEME_TOL = 7.00000000000e-4"));
    assert!(manifest.contains(&format!("library = ultimax {}", env!("CARGO_PKG_VERSION"))));
    let checks = read(&out.join("checks.csv"));
    assert!(checks.contains("immediate_exercise_relative_gap"));
}

#[test]
fn figure_reports_boundaries_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = run_in(dir.path(), "figure", None, &[]);
    // The regime-ordering check fails on this model; everything else holds.
    assert_eq!(code, 4);
    let checks = read(&out.join("checks.csv"));
    let failed: Vec<&str> = checks.lines().filter(|l| l.ends_with(",fail")).collect();
    assert_eq!(failed.len(), 1, "{checks}");
    assert!(failed[0].starts_with("ordering_b1_le_b2_violations"));
    let b = read(&out.join("boundary.csv"));
    let mut lines = b.lines();
    assert_eq!(lines.next(), Some("t,j,b,b_smoothed"));
    assert_eq!(lines.count(), 101 * 2);
    assert!(out.join("boundary.gp").exists());
    let manifest = read(&out.join("manifest.txt"));
    assert!(manifest.contains("grid.n_t = 100"));
    assert!(manifest.contains("config_sha256 = "));
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    for cmd in ["gcheck", "solve", "boundary", "volterra", "eval"] {
        let (c1, a) = run_in(dir.path(), cmd, Some(&cfg), &["--threads", "1"]);
        let (c2, b) = run_in(dir.path(), cmd, Some(&cfg), &["--threads", "3"]);
        assert_eq!(c1, c2);
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.iter().any(|n| n.to_string_lossy().ends_with(".csv")));
        for n in names {
            assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{cmd} {n:?}");
        }
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (_, a) = run_in(dir.path(), "gcheck", Some(&cfg), &[]);
    let (_, b) = run_in(dir.path(), "gcheck", Some(&cfg), &["--seed", "12"]);
    assert_ne!(read(&a.join("gcheck.csv")), read(&b.join("gcheck.csv")));
    assert!(read(&b.join("manifest.txt")).contains("seed = 12\n"));
    assert_eq!(read(&a.join("gain.csv")), read(&b.join("gain.csv")));
}

#[test]
fn csv_format_and_paths_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (code, out) = run_in(dir.path(), "eval", Some(&cfg), &["--paths-dump"]);
    assert_eq!(code, 0);
    let paths = read(&out.join("paths.csv"));
    assert!(paths.starts_with("path,step,t,j,y,ymax\n"));
    assert_eq!(paths.lines().count(), 1 + 16 * 26);
    for f in ["evaluation.csv", "paired.csv", "paths.csv", "checks.csv"] {
        let text = read(&out.join(f));
        assert!(!text.contains('\r'));
        let cols = text.lines().next().unwrap().split(',').count();
        assert!(text.lines().all(|l| l.split(',').count() == cols), "{f}");
    }
    let eval = read(&out.join("evaluation.csv"));
    assert_eq!(eval.lines().next(), Some("policy,j0,mean,std_error,n_paths"));
    assert!(eval.contains("threshold(1.05;1.05),1,"));
}

#[test]
fn plots_can_be_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "np.toml", &format!("{SMALL}\n[outputs]\nplots = false\n"));
    let (code, out) = run_in(dir.path(), "boundary", Some(&cfg), &[]);
    assert_eq!(code, 0);
    assert!(out.join("boundary.csv").exists());
    assert!(!out.join("boundary.gp").exists());
}
