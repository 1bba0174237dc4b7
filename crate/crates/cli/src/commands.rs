//! Subcommand pipelines. Each one writes its CSVs, a `checks.csv` table and
//! a `manifest.txt` into the output directory.

use std::path::PathBuf;

use ultimax::boundary::{check_boundary_monotone, ordering_violations};
use ultimax::gain::{g_monte_carlo, gain_surfaces, h_level, GainSurfaces};
use ultimax::model::ExerciseRegime;
use ultimax::paths::{PathSimulator, SimOptions};
use ultimax::rng::derive_seed;
use ultimax::solve::{at_probe, probe_points, solve, Solution};
use ultimax::stepper::check_coupling;
use ultimax::strategy::{compare_policies, Policy};
use ultimax::tolerances::*;
use ultimax::value::{
    check_f_monotone_t, check_normal_reflection, check_smooth_fit, complementarity_violations,
    containment_violations, max_f_away_from_maturity, solve_value, ValueSurfaces,
};
use ultimax::volterra::volterra_residual;
use ultimax::{Error, Grid, Surface};

use crate::config::{load_file, load_text, Loaded, FIGURE_CONFIG};
use crate::error::CliError;
use crate::output::{num, regime_plot, write_checks, Check, Outputs, Status};

/// Number of paths written by `--paths-dump`.
pub const DUMP_PATHS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gcheck,
    Solve,
    Boundary,
    Volterra,
    Eval,
    Figure,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Gcheck,
        Command::Solve,
        Command::Boundary,
        Command::Volterra,
        Command::Eval,
        Command::Figure,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Gcheck => "gcheck",
            Command::Solve => "solve",
            Command::Boundary => "boundary",
            Command::Volterra => "volterra",
            Command::Eval => "eval",
            Command::Figure => "figure",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub paths_dump: bool,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail).collect()
    }
}

/// Scheme allowance for the gain cross-check: `C_G (dx^2 + dt)`.
pub fn g_scheme_bound(grid: &Grid) -> f64 {
    C_G * (grid.dx() * grid.dx() + grid.dt())
}

fn load(cmd: Command, opts: &Options) -> Result<Loaded, CliError> {
    let mut loaded = match (cmd, &opts.config) {
        (Command::Figure, None) => load_text(FIGURE_CONFIG)?,
        (Command::Figure, Some(_)) => {
            return Err(CliError::Config(
                "figure runs the pinned configuration and takes no --config".into(),
            ))
        }
        (_, Some(path)) => load_file(path)?,
        (_, None) => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(seed) = opts.seed {
        loaded.config.mc.seed = seed;
    }
    if opts.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    Ok(loaded)
}

/// Runs one subcommand. Configuration problems are reported before any
/// file is written.
pub fn run(cmd: Command, opts: &Options) -> Result<Report, CliError> {
    let loaded = load(cmd, opts)?;
    check_coupling(&loaded.model, &loaded.grid)?;
    let dir = opts
        .out
        .clone()
        .unwrap_or_else(|| loaded.config.outputs.dir.clone());
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?
            .install(|| execute(cmd, &loaded, dir, opts.paths_dump)),
        None => execute(cmd, &loaded, dir, opts.paths_dump),
    }
}

fn execute(cmd: Command, l: &Loaded, dir: PathBuf, paths_dump: bool) -> Result<Report, CliError> {
    let mut out = Outputs::create(&dir, l.config.outputs.plots)?;
    let mut checks = Vec::new();
    match cmd {
        Command::Gcheck => gcheck(l, &mut out, &mut checks)?,
        Command::Solve => solve_cmd(l, &mut out, &mut checks)?,
        Command::Boundary => {
            let s = full_solve(l)?;
            write_boundary(l, &s, false, &mut out, &mut checks)?;
        }
        Command::Volterra => volterra(l, &mut out, &mut checks)?,
        Command::Eval => eval(l, &mut out, &mut checks)?,
        Command::Figure => figure(l, &mut out, &mut checks)?,
    }
    if paths_dump {
        dump_paths(l, &mut out)?;
    }
    write_checks(&mut out, &checks)?;
    let manifest = manifest(cmd, l, &out, &checks);
    out.text("manifest.txt", &manifest)?;
    Ok(Report {
        out_dir: dir,
        files: out.written().to_vec(),
        checks,
    })
}

fn full_solve(l: &Loaded) -> Result<Solution, CliError> {
    Ok(solve(&l.model, &l.grid, l.config.tolerances.tol_abs)?)
}

fn sim_options(l: &Loaded) -> SimOptions {
    SimOptions::new(l.config.mc.n_steps, l.config.mc.bridge_max)
}

fn gain_rows<'a>(grid: &'a Grid, gs: &'a GainSurfaces) -> impl Iterator<Item = Vec<String>> + 'a {
    gs.g.iter_nodes().map(move |(k, i, j, g)| {
        vec![
            num(grid.t(k)),
            num(grid.x(i)),
            (j + 1).to_string(),
            num(g),
            num(gs.dgdx.surface.get(k, i, j)),
            num(gs.lg.get(k, i, j)),
        ]
    })
}

fn gcheck(l: &Loaded, out: &mut Outputs, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let (model, grid, mc) = (&l.model, &l.grid, &l.config.mc);
    let gs = gain_surfaces(model, grid)?;
    out.csv("gain.csv", &["t", "x", "j", "G", "dGdx", "LG"], gain_rows(grid, &gs))?;
    let eps = l.config.tolerances.eps_sign;
    let h: Vec<Vec<f64>> = (0..grid.regimes).map(|j| h_level(&gs.lg, grid, j, eps)).collect();
    out.csv(
        "h.csv",
        &["t", "j", "h"],
        (0..=grid.n_t).flat_map(|k| {
            let h = &h;
            (0..grid.regimes).map(move |j| vec![num(grid.t(k)), (j + 1).to_string(), num(h[j][k])])
        }),
    )?;
    // With the bridge maximum one step per regime sojourn is exact in law.
    let opts = if mc.bridge_max {
        SimOptions::new(1, true)
    } else {
        sim_options(l)
    };
    let scheme = g_scheme_bound(grid);
    let mut rows = Vec::new();
    let mut excess = f64::NEG_INFINITY;
    for (idx, p) in probe_points(grid).into_iter().enumerate() {
        let (t, x, j) = p;
        let mc_est = g_monte_carlo(model, t, x, j, mc.n_paths, opts, derive_seed(mc.seed, idx as u64));
        let pde = at_probe(&gs.g, grid, p);
        let diff = (pde - mc_est.mean).abs();
        let bound = 3.0 * mc_est.std_error + scheme;
        excess = excess.max(diff - 3.0 * mc_est.std_error);
        rows.push(vec![
            num(t),
            num(x),
            (j + 1).to_string(),
            num(pde),
            num(mc_est.mean),
            num(mc_est.std_error),
            num(diff),
            num(bound),
        ]);
    }
    out.csv(
        "gcheck.csv",
        &["t", "x", "j", "g_pde", "g_mc", "g_mc_se", "abs_diff", "bound"],
        rows,
    )?;
    checks.push(Check::at_most("g_pde_mc_excess_over_3se", excess, scheme));
    checks.push(Check::at_most("g_derivative_clamp_rate", gs.dgdx.clamp_rate(), 0.0));
    out.plot(
        "gain.gp",
        &regime_plot("gain.csv", "G(0, x, j)", (2, 4, 3), grid.regimes, Some("$1==0")),
    )?;
    Ok(())
}

fn surface_rows<'a>(s: &'a ValueSurfaces) -> impl Iterator<Item = Vec<String>> + 'a {
    let grid = &s.grid;
    s.v.iter_nodes().map(move |(k, i, j, v)| {
        vec![
            num(grid.t(k)),
            num(grid.x(i)),
            (j + 1).to_string(),
            num(v),
            num(s.g.get(k, i, j)),
            num(s.f.get(k, i, j)),
        ]
    })
}

fn write_surfaces(s: &ValueSurfaces, out: &mut Outputs) -> Result<(), CliError> {
    out.csv("surfaces.csv", &["t", "x", "j", "V", "G", "F"], surface_rows(s))?;
    let script = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset title 'V and G at t = 0'\nset grid\nset xlabel 'x'\nplot {}\npause -1\n",
        (1..=s.grid.regimes)
            .flat_map(|j| {
                [
                    format!("'surfaces.csv' using (($1==0 && $3=={j}) ? $2 : 1/0):4 with lines title 'V, regime {j}'"),
                    format!("'surfaces.csv' using (($1==0 && $3=={j}) ? $2 : 1/0):5 with lines dt 2 title 'G, regime {j}'"),
                ]
            })
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    );
    out.plot("surfaces.gp", &script)
}

fn surface_checks(s: &ValueSurfaces, lg: &Surface, lv: &Surface, l: &Loaded, checks: &mut Vec<Check>) {
    let tol = &l.config.tolerances;
    checks.push(Check::at_most(
        "complementarity_violations",
        complementarity_violations(s, lv, SCHEME_TOL, LV_TOL) as f64,
        0.0,
    ));
    checks.push(Check::at_most(
        "containment_violations",
        containment_violations(s, lg, tol.eps_sign, tol.tol_abs) as f64,
        0.0,
    ));
    match check_f_monotone_t(s, F_MONOTONE_REL) {
        Ok(r) => checks.push(Check::at_most("f_time_monotone_violations", r.violations as f64, 0.0)),
        Err(_) => checks.push(Check::not_applicable("f_time_monotone_violations")),
    }
    match l.model.classify() {
        ExerciseRegime::ImmediateExercise => checks.push(Check::at_most(
            "immediate_exercise_relative_gap",
            s.max_relative_gap(),
            IMMEDIATE_REL_GAP,
        )),
        ExerciseRegime::ExerciseAtMaturity => checks.push(Check::at_most(
            "maturity_max_f_plus_margin",
            max_f_away_from_maturity(s) + MATURITY_MARGIN,
            0.0,
        )),
        ExerciseRegime::General => {}
    }
}

fn solve_cmd(l: &Loaded, out: &mut Outputs, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let gs = gain_surfaces(&l.model, &l.grid)?;
    let s = solve_value(&l.model, &l.grid, &gs.g)?;
    let lv = s.lv()?;
    write_surfaces(&s, out)?;
    surface_checks(&s, &gs.lg, &lv, l, checks);
    Ok(())
}

fn write_boundary(
    l: &Loaded,
    sol: &Solution,
    binding: bool,
    out: &mut Outputs,
    checks: &mut Vec<Check>,
) -> Result<(), CliError> {
    let b = &sol.boundary;
    let grid = &l.grid;
    out.csv(
        "boundary.csv",
        &["t", "j", "b", "b_smoothed"],
        (0..=grid.n_t).flat_map(|k| {
            (0..grid.regimes).map(move |j| {
                vec![
                    num(grid.t(k)),
                    (j + 1).to_string(),
                    num(b.raw[k][j]),
                    num(b.smoothed[k][j]),
                ]
            })
        }),
    )?;
    out.plot(
        "boundary.gp",
        &regime_plot("boundary.csv", "stopping boundary b(t, j)", (1, 3, 2), grid.regimes, None),
    )?;
    boundary_checks(l, sol, binding, checks);
    Ok(())
}

/// Shape checks of the boundary. The slope and continuity constants are
/// calibrated on the figure model and are binding only for `figure`.
fn boundary_checks(l: &Loaded, sol: &Solution, binding: bool, checks: &mut Vec<Check>) {
    let (b, grid) = (&sol.boundary, &l.grid);
    let calibrated = |c: Check| if binding { c } else { c.informational() };
    let terminal = (0..grid.regimes)
        .map(|j| (b.raw[grid.n_t][j] - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("terminal_boundary_distance_from_1", terminal, grid.dx()));
    match check_boundary_monotone(b, &l.model) {
        Ok(r) => {
            checks.push(Check::at_most("boundary_time_monotone_violations", r.violations as f64, 0.0));
            checks.push(calibrated(Check::at_most("boundary_continuity_ratio", r.continuity_ratio, C_CONT)));
        }
        Err(Error::NotApplicable(_)) => {
            checks.push(Check::not_applicable("boundary_time_monotone_violations"));
        }
        Err(_) => unreachable!("monotonicity check only refuses"),
    }
    let dx = grid.dx();
    let sf = check_smooth_fit(&sol.value, b, None).max_mismatch;
    checks.push(calibrated(Check::at_most("smooth_fit_max_mismatch", sf, C_SF * dx)));
    let nr = check_normal_reflection(&sol.value).max_abs;
    checks.push(calibrated(Check::at_most("normal_reflection_max_slope", nr, C_NR * dx)));
}

fn figure(l: &Loaded, out: &mut Outputs, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let sol = full_solve(l)?;
    write_surfaces(&sol.value, out)?;
    write_boundary(l, &sol, true, out, checks)?;
    surface_checks(&sol.value, &sol.gain.lg, &sol.lv, l, checks);
    checks.push(Check::at_most(
        "ordering_b1_le_b2_violations",
        ordering_violations(&sol.boundary, 0, 1) as f64,
        0.0,
    ));
    Ok(())
}

fn volterra(l: &Loaded, out: &mut Outputs, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let sol = full_solve(l)?;
    let v = &l.config.volterra;
    let n_paths = v.n_paths.unwrap_or(l.config.mc.n_paths);
    let r = volterra_residual(&sol.value, &sol.lv, &sol.boundary, n_paths, v.n_quad, l.config.mc.seed)?;
    out.csv(
        "volterra.csv",
        &[
            "t",
            "j",
            "b",
            "lhs",
            "J",
            "J_se",
            "K_integral",
            "K_se",
            "residual",
            "residual_se",
            "relative_residual",
        ],
        r.rows.iter().map(|row| {
            vec![
                num(row.t),
                (row.j + 1).to_string(),
                num(row.b),
                num(row.lhs),
                num(row.j_est.mean),
                num(row.j_est.std_error),
                num(row.k_integral.mean),
                num(row.k_integral.std_error),
                num(row.residual),
                num(row.residual_se),
                num(row.relative_residual),
            ]
        }),
    )?;
    out.plot(
        "volterra.gp",
        &regime_plot("volterra.csv", "relative residual", (1, 11, 2), l.grid.regimes, None),
    )?;
    match r.median_abs_relative(false) {
        Some(m) => checks.push(Check::at_most("volterra_median_relative_residual", m, VOLTERRA_REL)),
        None => checks.push(Check::not_applicable("volterra_median_relative_residual")),
    }
    Ok(())
}

fn eval(l: &Loaded, out: &mut Outputs, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let sol = full_solve(l)?;
    let mc = &l.config.mc;
    let mut policies = vec![
        Policy::Boundary(sol.boundary.clone()),
        Policy::Immediate,
        Policy::AtMaturity,
    ];
    policies.extend(l.config.eval.thresholds.iter().cloned().map(Policy::FixedThreshold));
    let mut est_rows = Vec::new();
    let mut pair_rows = Vec::new();
    for j0 in l.config.j0s() {
        let c = compare_policies(&l.model, &policies, j0, mc.n_paths, sim_options(l), derive_seed(mc.seed, j0 as u64))?;
        for &q in &c.ranking {
            let e = &c.estimates[q];
            est_rows.push(vec![
                e.policy.clone(),
                (j0 + 1).to_string(),
                num(e.estimate.mean),
                num(e.estimate.std_error),
                e.estimate.n.to_string(),
            ]);
        }
        for d in &c.paired {
            pair_rows.push(vec![
                (j0 + 1).to_string(),
                d.policy_a.clone(),
                d.policy_b.clone(),
                num(d.diff),
                num(d.diff_se),
                num(d.max_abs),
            ]);
        }
        let b = &c.estimates[0].estimate;
        let v = sol.value.v.get(0, 0, j0);
        checks.push(Check::at_most(
            &format!("boundary_regret_vs_value_j{}", j0 + 1),
            (b.mean - v).abs() - 3.0 * b.std_error,
            SCHEME_TOL,
        ));
        // The first policies.len() - 1 pairs compare the boundary with the rest.
        for d in &c.paired[..policies.len() - 1] {
            checks.push(Check::at_most(
                &format!("boundary_dominates_{}_j{}", d.policy_b, j0 + 1),
                d.diff - 3.0 * d.diff_se,
                0.0,
            ));
        }
    }
    out.csv("evaluation.csv", &["policy", "j0", "mean", "std_error", "n_paths"], est_rows)?;
    out.csv(
        "paired.csv",
        &["j0", "policy_a", "policy_b", "diff", "diff_se", "max_abs_diff"],
        pair_rows,
    )?;
    Ok(())
}

fn dump_paths(l: &Loaded, out: &mut Outputs) -> Result<(), CliError> {
    let j0 = l.config.j0s()[0];
    let sim = PathSimulator::new(&l.model, 0.0, j0, sim_options(l), l.config.mc.seed);
    let times = sim.times().to_vec();
    let rows = (0..DUMP_PATHS).flat_map(|p| {
        let path = sim.sample(p);
        let times = times.clone();
        (0..path.len()).map(move |k| {
            vec![
                p.to_string(),
                k.to_string(),
                num(times[k]),
                (path.states[k] + 1).to_string(),
                num(path.y(k)),
                num(path.ymax(k)),
            ]
        })
    });
    out.csv("paths.csv", &["path", "step", "t", "j", "y", "ymax"], rows)
}

fn manifest(cmd: Command, l: &Loaded, out: &Outputs, checks: &[Check]) -> String {
    let c = &l.config;
    let mut m = String::new();
    let mut line = |k: &str, v: String| m.push_str(&format!("{k} = {v}\n"));
    line("library", format!("ultimax {}", env!("CARGO_PKG_VERSION")));
    line("command", cmd.name().into());
    line("config_sha256", l.hash.clone());
    line("seed", c.mc.seed.to_string());
    line("exercise_regime", l.model.classify().as_str().into());
    line("grid.n_x", l.grid.n_x.to_string());
    line("grid.n_t", l.grid.n_t.to_string());
    line("grid.z_max", num(l.grid.z_max));
    line("mc.n_paths", c.mc.n_paths.to_string());
    line("mc.n_steps", c.mc.n_steps.to_string());
    line("mc.bridge_max", c.mc.bridge_max.to_string());
    line("tolerances.tol_abs", num(c.tolerances.tol_abs));
    line("tolerances.eps_sign", num(c.tolerances.eps_sign));
    for (k, v) in [
        ("SCHEME_TOL", SCHEME_TOL),
        ("EPS_SIGN", EPS_SIGN),
        ("TOL_ABS", TOL_ABS),
        ("C_G", C_G),
        ("C_SF", C_SF),
        ("C_NR", C_NR),
        ("C_CONT", C_CONT),
        ("REFINEMENT_RATIO", REFINEMENT_RATIO),
        ("MATURITY_MARGIN", MATURITY_MARGIN),
        ("F_MONOTONE_REL", F_MONOTONE_REL),
        ("LV_TOL", LV_TOL),
        ("IMMEDIATE_REL_GAP", IMMEDIATE_REL_GAP),
        ("VOLTERRA_REL", VOLTERRA_REL),
    ] {
        line(&format!("pinned.{k}"), num(v));
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    line("checks_failed", failed.to_string());
    line("files", out.written().join(","));
    m
}
