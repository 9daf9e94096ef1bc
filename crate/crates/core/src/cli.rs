//! Command-line surface: configuration loading, subcommand dispatch and
//! file emission.
//!
//! Exit codes: 0 success, 1 usage/configuration/validation error,
//! 2 numerical failure (non-converged linear or fixed-point solve).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::{parse_config, RunConfig};
use crate::error::{Error, Result};
use crate::fem::P1Space;
use crate::model::{linf_bounds, reaction_max_factors};
use crate::solver::{run, stable_dt, total_v_mass, NoForcing, Observer};
use crate::verify::eoc::{EocConfig, ErrorColumn};
use crate::verify::interp::interpolation_rate_test;
use crate::verify::kconst::{estimate_k, exact_space_time_norms, sampled_sup};
use crate::verify::mms::{AxisTrig, SpaceFactor};
use crate::verify::{run_eoc, trace_inequality_check, BoundsMonitor};
use crate::{CoupledOperators, SolverConfig, State, TwoScaleField};

const USAGE: &str = "\
usage: twoscale-fem <subcommand> [--config FILE] [--levels N] [--threads N] [--out DIR]

subcommands:
  run           advance the coupled system, write field/series CSV output
  eoc           manufactured-solution convergence study (eoc.csv, kconst.csv)
  interp-test   projection convergence orders (rates.csv)
  bounds-check  positivity/boundedness monitor on a physical run (bounds.csv)
  trace-check   interface trace-inequality sweep (trace.csv)

flags:
  --config FILE  configuration file (defaults are used when omitted)
  --levels N     override verify.levels
  --threads N    cap the worker thread pool
  --out DIR      override output.dir
  --help         this text, plus every configuration key with its default
";

fn config_help() -> String {
    let d = RunConfig::default();
    let mut s = String::new();
    let _ = write!(
        s,
        "configuration keys (key = default), '#' starts a comment:

[mesh]
  macro_rect = {} {} {} {}   # macro domain rectangle x0 y0 x1 y1
  micro_rect = {} {} {} {}   # micro cell rectangle
  macro_nx = {}, macro_ny = {}, micro_nx = {}, micro_ny = {}  # grid cells per direction
  gamma_r = top_edge         # reactive interface: top_edge | left_edge | full_boundary_minus_bottom
                             # the remaining micro boundary is insulated; the interface must be nonempty

[model]   (assumptions: A1 positive diffusivities; A2 transfer law globally
           Lipschitz with b(z) = 0 for z <= 0; A3 reaction rate R(r)Q(s) with
           Lipschitz factors vanishing on the nonpositive axis, k >= 0, alpha > 0)
  theta = {}                 # porosity, > 0
  d_macro = {}, d1 = {}, d2 = {}   # diffusivities, > 0 (A1)
  k = {}                     # reaction constant, >= 0 (A3; 0 decouples the reaction)
  alpha = {}                 # molecular-weight ratio, > 0 (A3)
  b = linear:1               # linear:<c_hat> | saturating:<c_hat>:<z_sat> (A2)
  r_factor = positive_part   # positive_part | clipped:<cap> (A3)
  q_factor = positive_part
  u_ext = {}                 # exterior concentration, expression in t, x, y
  macro_init = {}            # initial macro concentration, expression in x, y
  micro_u_init_macro = {}, micro_u_init_micro = {}  # separable micro initial data (macro factor * micro factor)
  micro_v_init_macro = {}, micro_v_init_micro = {}

[solver]
  dt = {}, t_end = {}
  scheme = semi_implicit     # semi_implicit | picard
  picard_tol = {}, picard_max = {}
  cg_tol = {}, cg_max_iter = {}
  mass = lumped              # lumped | consistent mass in the time-derivative terms
  auto_dt = {}               # clamp dt to the explicit-term stability bound

[verify]
  levels = {}                # refinement levels for eoc / interp-test (>= 3)
  dt_rule = quadratic:{}     # quadratic:<c> (dt = c h^2) | linear:<c> (flagged)
  exact = coupled_trig       # manufactured solution: coupled_trig | heat_only
  bounds_tol = {}            # slack for the positivity/boundedness monitor

[output]
  dir = {}                   # output directory
  snapshot_stride = {}       # write field snapshots every N steps (0: never)

expressions use: numbers, pi, t, x, y, + - *, ^<int>, sin, cos, exp, parentheses
",
        d.mesh.macro_rect[0],
        d.mesh.macro_rect[1],
        d.mesh.macro_rect[2],
        d.mesh.macro_rect[3],
        d.mesh.micro_rect[0],
        d.mesh.micro_rect[1],
        d.mesh.micro_rect[2],
        d.mesh.micro_rect[3],
        d.mesh.macro_nx,
        d.mesh.macro_ny,
        d.mesh.micro_nx,
        d.mesh.micro_ny,
        d.model.theta,
        d.model.d_macro,
        d.model.d1,
        d.model.d2,
        d.model.k,
        d.model.alpha,
        d.model.u_ext,
        d.model.macro_init,
        d.model.micro_u_init_macro,
        d.model.micro_u_init_micro,
        d.model.micro_v_init_macro,
        d.model.micro_v_init_micro,
        d.solver.dt,
        d.solver.t_end,
        d.solver.picard_tol,
        d.solver.picard_max,
        d.solver.cg_tol,
        d.solver.cg_max_iter,
        d.solver.auto_dt,
        d.verify.levels,
        d.verify.dt_rule_c,
        d.verify.bounds_tol,
        d.output.dir,
        d.output.snapshot_stride,
    );
    s
}

struct Args {
    subcommand: String,
    config: Option<PathBuf>,
    levels: Option<usize>,
    threads: Option<usize>,
    out: Option<String>,
}

fn parse_args(args: &[String]) -> std::result::Result<Option<Args>, String> {
    if args.is_empty() || args.iter().any(|a| a == "--help" || a == "-h") {
        return Ok(None);
    }
    let subcommand = args[0].clone();
    if !["run", "eoc", "interp-test", "bounds-check", "trace-check"].contains(&subcommand.as_str())
    {
        return Err(format!("unknown subcommand '{subcommand}'"));
    }
    let mut parsed = Args {
        subcommand,
        config: None,
        levels: None,
        threads: None,
        out: None,
    };
    let mut i = 1;
    while i < args.len() {
        let flag = &args[i];
        let value = args
            .get(i + 1)
            .ok_or_else(|| format!("{flag} needs a value"))?;
        match flag.as_str() {
            "--config" => parsed.config = Some(PathBuf::from(value)),
            "--levels" => {
                parsed.levels = Some(
                    value
                        .parse()
                        .map_err(|_| format!("--levels: bad count '{value}'"))?,
                )
            }
            "--threads" => {
                parsed.threads = Some(
                    value
                        .parse()
                        .map_err(|_| format!("--threads: bad count '{value}'"))?,
                )
            }
            "--out" => parsed.out = Some(value.clone()),
            other => return Err(format!("unknown flag '{other}'")),
        }
        i += 2;
    }
    Ok(Some(parsed))
}

/// Entry point behind the binary; returns the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let parsed = match parse_args(&args) {
        Ok(Some(p)) => p,
        Ok(None) => {
            println!("{USAGE}");
            println!("{}", config_help());
            return 0;
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            eprintln!("{USAGE}");
            return 1;
        }
    };
    if let Some(n) = parsed.threads {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match dispatch(&parsed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::CgNoConvergence { .. } | Error::PicardNoConvergence { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(args: &Args) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(levels) = args.levels {
        cfg.verify.levels = levels;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    let out_dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("config_echo.cfg"), cfg.emit())?;

    match args.subcommand.as_str() {
        "run" => cmd_run(&cfg, &out_dir),
        "eoc" => cmd_eoc(&cfg, &out_dir),
        "interp-test" => cmd_interp(&cfg, &out_dir),
        "bounds-check" => cmd_bounds(&cfg, &out_dir),
        "trace-check" => cmd_trace(&cfg, &out_dir),
        _ => unreachable!(),
    }
}

fn build_ops(cfg: &RunConfig) -> Result<CoupledOperators> {
    let (macro_mesh, micro_mesh) = cfg.build_meshes()?;
    CoupledOperators::build(
        Arc::new(P1Space::new(Arc::new(macro_mesh))),
        Arc::new(P1Space::new(Arc::new(micro_mesh))),
    )
}

/// Suprema of the configured data, sampled on mesh vertices and a uniform
/// time grid; feeds the bound constants.
fn data_suprema(cfg: &RunConfig, ops: &CoupledOperators) -> Result<(f64, f64, f64, f64)> {
    let params = cfg.build_params()?;
    let t_end = cfg.solver.t_end;
    let u_ext = params.u_ext.clone();
    let sup_ext = sampled_sup(move |t, p| u_ext(t, p), &ops.macro_space, t_end, 20);
    let macro_init = params.macro_init.clone();
    let sup_init = sampled_sup(move |_, p| macro_init(p), &ops.macro_space, 0.0, 0);
    let mut sup_u = 0.0f64;
    let mut sup_v = 0.0f64;
    for &x in &ops.macro_space.mesh.vertices {
        for &y in &ops.micro_space.mesh.vertices {
            sup_u = sup_u.max((params.micro_u_init)(x, y).abs());
            sup_v = sup_v.max((params.micro_v_init)(x, y).abs());
        }
    }
    Ok((sup_ext, sup_init, sup_u, sup_v))
}

/// Clamp the configured step to the documented stability bound of the
/// explicit nonlinear terms.
fn effective_solver_config(
    cfg: &RunConfig,
    ops: &CoupledOperators,
) -> Result<(SolverConfig, (f64, f64, f64))> {
    let params = cfg.build_params()?;
    let (sup_ext, sup_init, sup_u, sup_v) = data_suprema(cfg, ops)?;
    let (m1, m2, m3) = linf_bounds(sup_ext, sup_init, sup_u, sup_v)?;
    let mut solver_cfg = cfg.build_solver_config();
    if cfg.solver.auto_dt {
        let bound = stable_dt(&params, ops, m2, m3);
        if bound.is_finite() && bound < solver_cfg.dt {
            solver_cfg.dt = bound;
        }
    }
    Ok((solver_cfg, (m1, m2, m3)))
}

/// Scalar time series: one row per step.
struct SeriesObserver {
    rows: String,
}

impl SeriesObserver {
    fn new() -> Self {
        SeriesObserver {
            rows: String::from("t,total_v,min_U,max_U,min_u,max_u,min_v,max_v\n"),
        }
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

impl Observer<f64> for SeriesObserver {
    fn observe(&mut self, _step: usize, state: &State, ops: &CoupledOperators) {
        let (min_u_macro, max_u_macro) = min_max(state.u_macro.iter().copied());
        let (min_u, max_u) = min_max(state.u_micro.coeffs.data().iter().copied());
        let (min_v, max_v) = min_max(state.v_micro.coeffs.data().iter().copied());
        let _ = writeln!(
            self.rows,
            "{},{},{},{},{},{},{},{}",
            state.t,
            total_v_mass(state, ops),
            min_u_macro,
            max_u_macro,
            min_u,
            max_u,
            min_v,
            max_v
        );
    }
}

/// Field snapshots every `stride` steps.
struct SnapshotObserver {
    stride: usize,
    dir: PathBuf,
    failures: Vec<String>,
}

impl SnapshotObserver {
    fn write(&self, step: usize, state: &State, ops: &CoupledOperators) -> Result<()> {
        let mut text = String::from("node,x,y,U\n");
        for (i, v) in ops.macro_space.mesh.vertices.iter().enumerate() {
            let _ = writeln!(text, "{},{},{},{}", i, v[0], v[1], state.u_macro[i]);
        }
        fs::write(self.dir.join(format!("macro_{step:06}.csv")), text)?;
        for (name, field) in [("micro_u", &state.u_micro), ("micro_v", &state.v_micro)] {
            let mut buf = Vec::new();
            field.write_csv(&mut buf)?;
            fs::write(self.dir.join(format!("{name}_{step:06}.csv")), buf)?;
        }
        Ok(())
    }
}

impl Observer<f64> for SnapshotObserver {
    fn observe(&mut self, step: usize, state: &State, ops: &CoupledOperators) {
        if self.stride > 0 && step.is_multiple_of(self.stride) {
            if let Err(e) = self.write(step, state, ops) {
                self.failures.push(format!("snapshot at step {step}: {e}"));
            }
        }
    }
}

fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let ops = build_ops(cfg)?;
    let params = cfg.build_params()?;
    let (solver_cfg, _) = effective_solver_config(cfg, &ops)?;
    let mut series = SeriesObserver::new();
    let mut snapshots = SnapshotObserver {
        stride: cfg.output.snapshot_stride,
        dir: out_dir.to_path_buf(),
        failures: Vec::new(),
    };
    let summary = run(
        &params,
        &ops,
        &solver_cfg,
        &NoForcing,
        &mut [&mut series, &mut snapshots],
    )?;
    fs::write(out_dir.join("series.csv"), &series.rows)?;
    if !snapshots.failures.is_empty() {
        return Err(Error::Io(std::io::Error::other(
            snapshots.failures.join("; "),
        )));
    }
    let (lo, hi) = min_max(summary.final_state.u_macro.iter().copied());
    println!(
        "run: {} steps (dt = {:.3e}), final total_v = {:.6e}, macro field in [{:.3e}, {:.3e}]",
        summary.steps,
        summary.dt,
        total_v_mass(&summary.final_state, &ops),
        lo,
        hi
    );
    Ok(())
}

/// Canonical projection test functions: a zero-trace macro profile and a
/// separable two-scale profile.
fn canonical_test_functions() -> (SpaceFactor<f64>, SpaceFactor<f64>, SpaceFactor<f64>) {
    (
        SpaceFactor::trig(0.0, 1.0, AxisTrig::Sin, AxisTrig::Sin),
        SpaceFactor::trig(0.0, 1.0, AxisTrig::Sin, AxisTrig::Sin),
        SpaceFactor::trig(0.0, 1.0, AxisTrig::Cos, AxisTrig::Cos),
    )
}

fn cmd_interp(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let (macro_mesh, micro_mesh) = cfg.build_meshes()?;
    let (macro_fn, two_macro, two_micro) = canonical_test_functions();
    let report = interpolation_rate_test(
        &macro_fn,
        &two_macro,
        &two_micro,
        &macro_mesh,
        &micro_mesh,
        cfg.verify.levels,
    )?;
    fs::write(out_dir.join("rates.csv"), report.to_csv())?;
    if report.saturated {
        println!("interp-test: errors at solver tolerance on every level (rates saturated)");
    } else {
        println!(
            "interp-test: orders L2(macro)={:.3} H1(macro)={:.3} L2(two-scale)={:.3} H1y(two-scale)={:.3}",
            report.rates[0], report.rates[1], report.rates[2], report.rates[3]
        );
    }
    Ok(())
}

fn cmd_eoc(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let (macro_mesh, micro_mesh) = cfg.build_meshes()?;
    let exact = cfg.exact_solution();
    let params = cfg.build_params()?;
    let solver_base = cfg.build_solver_config();

    // fitted projection constants feed the error-bound constant and the
    // h^2 max(gamma1, gamma3) < 1 sanity line
    let (macro_fn, two_macro, two_micro) = canonical_test_functions();
    let fit = interpolation_rate_test(
        &macro_fn,
        &two_macro,
        &two_micro,
        &macro_mesh,
        &micro_mesh,
        cfg.verify.levels,
    )?;
    let (gamma1, gamma3) = (fit.gammas[0], fit.gammas[2]);

    let outcome = run_eoc(
        &exact,
        &params,
        &macro_mesh,
        &micro_mesh,
        &solver_base,
        &EocConfig {
            levels: cfg.verify.levels,
            t_end: cfg.solver.t_end,
            dt_rule: cfg.dt_rule(),
            gamma_fit: Some((gamma1, gamma3)),
        },
    )?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    fs::write(out_dir.join("eoc.csv"), outcome.table.to_csv())?;
    for col in ErrorColumn::ALL {
        fs::write(
            out_dir.join(format!("eoc_{}.dat", col.name())),
            outcome.table.to_plot_text(col),
        )?;
    }

    // error-bound constant check per level
    let finest_macro = Arc::new(P1Space::new(Arc::new(macro_mesh.clone())));
    let finest_micro = Arc::new(P1Space::new(Arc::new(micro_mesh.clone())));
    let norms = exact_space_time_norms(&exact, &finest_macro, &finest_micro, cfg.solver.t_end);
    let mut params_data = params.clone();
    exact.install_data(&mut params_data);
    let ops0 = build_ops(cfg)?;
    let (sup_ext, sup_init, sup_u, sup_v) = {
        let u_ext = params_data.u_ext.clone();
        let se = sampled_sup(
            move |t, p| u_ext(t, p),
            &ops0.macro_space,
            cfg.solver.t_end,
            20,
        );
        let mi = params_data.macro_init.clone();
        let si = sampled_sup(move |_, p| mi(p), &ops0.macro_space, 0.0, 0);
        let mut su = 0.0f64;
        let mut sv = 0.0f64;
        for &x in &ops0.macro_space.mesh.vertices {
            for &y in &ops0.micro_space.mesh.vertices {
                su = su.max((params_data.micro_u_init)(x, y).abs());
                sv = sv.max((params_data.micro_v_init)(x, y).abs());
            }
        }
        (se, si, su, sv)
    };
    let (_, m2, m3) = linf_bounds(sup_ext, sup_init, sup_u, sup_v)?;
    let (r_m, q_m) = reaction_max_factors(&params.r_factor, &params.q_factor, m2, m3);
    let k_hat = estimate_k(&norms, &params, gamma1, gamma3, r_m, q_m);
    // step-size sanity line: the coarsest level decides
    let h0 = outcome.table.rows[0].h;
    let sanity = h0 * h0 * gamma1.max(gamma3);
    let mut kcsv = format!(
        "# coarsest h^2 * max(gamma1, gamma3) = {sanity} ({})\n",
        if sanity < 1.0 { "ok" } else { "too coarse" }
    );
    kcsv.push_str("level,h,estimate_k,combined_err_sq,bound_10_k_h_sq,within\n");
    for row in &outcome.table.rows {
        let err_sq = row.errors.combined_energy_sq();
        let bound = 10.0 * k_hat * row.h * row.h;
        let _ = writeln!(
            kcsv,
            "{},{},{},{},{},{}",
            row.level,
            row.h,
            k_hat,
            err_sq,
            bound,
            err_sq <= bound
        );
    }
    fs::write(out_dir.join("kconst.csv"), kcsv)?;

    let worst = [
        ErrorColumn::MacroH1,
        ErrorColumn::MicroUEnergy,
        ErrorColumn::MicroVEnergy,
    ]
    .iter()
    .map(|c| outcome.table.ls_rate(*c))
    .fold(f64::INFINITY, f64::min);
    println!(
        "eoc: worst energy-norm order {:.3} over {} levels (K estimate {:.3e})",
        worst,
        outcome.table.rows.len(),
        k_hat
    );
    Ok(())
}

fn cmd_bounds(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let ops = build_ops(cfg)?;
    let params = cfg.build_params()?;
    let (solver_cfg, (m1, m2, m3)) = effective_solver_config(cfg, &ops)?;
    let mut monitor = BoundsMonitor::new(m1, m2, m3, cfg.verify.bounds_tol);
    run(&params, &ops, &solver_cfg, &NoForcing, &mut [&mut monitor])?;
    fs::write(out_dir.join("bounds.csv"), monitor.to_csv())?;
    println!(
        "bounds-check: {} violations over {} steps (m1 = {m1}, m2 = {m2}, m3 = {m3}, tol = {})",
        monitor.violations.len(),
        monitor.history.len() - 1,
        cfg.verify.bounds_tol
    );
    Ok(())
}

fn cmd_trace(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let ops = build_ops(cfg)?;
    // deterministic pseudo-random coefficient fields
    let mut seed = 0x2545f4914f6cdd1du64;
    let mut next = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let fields: Vec<TwoScaleField> = (0..50)
        .map(|_| {
            let mut f = TwoScaleField::zeros(ops.macro_space.clone(), ops.micro_space.clone());
            for j in 0..f.n_macro() {
                for k in 0..f.n_micro() {
                    f.coeffs.set(j, k, next());
                }
            }
            f
        })
        .collect();
    let sweep = trace_inequality_check(&fields, &[1.0, 0.1, 0.01], &ops)?;
    fs::write(out_dir.join("trace.csv"), sweep.to_csv())?;
    let line: Vec<String> = sweep
        .eps
        .iter()
        .zip(&sweep.constants)
        .map(|(e, c)| format!("C({e}) = {c:.4}"))
        .collect();
    println!("trace-check: {} over 50 random fields", line.join(", "));
    Ok(())
}
