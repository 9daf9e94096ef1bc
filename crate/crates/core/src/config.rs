//! Run configuration: `key = value` lines under `[section]` headers, with
//! `#` comments. Every key has a default; unknown sections or keys are
//! rejected; validation reports all problems at once, each citing the
//! structural assumption it enforces (A1: positive diffusivities, A2:
//! Lipschitz transfer law vanishing on the nonpositive axis, A3: product
//! reaction rate with nonnegative constants).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Var};
use crate::mesh::{make_rect_mesh, tag_boundary, BoundaryTag, Mesh2D};
use crate::model::{ModelParams, ReactionFactorFn, TransferFn};
use crate::solver::{MassForm, Scheme, SolverConfig};
use crate::verify::eoc::DtRule;
use crate::verify::mms::{coupled_trig, heat_only, ExactSolution};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaPreset {
    TopEdge,
    LeftEdge,
    FullBoundaryMinusBottom,
}

impl GammaPreset {
    fn name(&self) -> &'static str {
        match self {
            GammaPreset::TopEdge => "top_edge",
            GammaPreset::LeftEdge => "left_edge",
            GammaPreset::FullBoundaryMinusBottom => "full_boundary_minus_bottom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExactPreset {
    CoupledTrig,
    HeatOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshSection {
    pub macro_rect: [f64; 4],
    pub micro_rect: [f64; 4],
    pub macro_nx: usize,
    pub macro_ny: usize,
    pub micro_nx: usize,
    pub micro_ny: usize,
    pub gamma_r: GammaPreset,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub theta: f64,
    pub d_macro: f64,
    pub d1: f64,
    pub d2: f64,
    pub k: f64,
    pub alpha: f64,
    pub b: TransferFn<f64>,
    pub r_factor: ReactionFactorFn<f64>,
    pub q_factor: ReactionFactorFn<f64>,
    /// expression in `t, x, y`
    pub u_ext: String,
    /// expression in `x, y`
    pub macro_init: String,
    /// separable two-scale data: macro factor times micro factor
    pub micro_u_init_macro: String,
    pub micro_u_init_micro: String,
    pub micro_v_init_macro: String,
    pub micro_v_init_micro: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSection {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub mass: MassForm,
    /// clamp dt to the documented stability bound of the explicit terms
    pub auto_dt: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifySection {
    pub levels: usize,
    pub dt_rule_quadratic: bool,
    pub dt_rule_c: f64,
    pub exact: ExactPreset,
    pub bounds_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSection {
    pub dir: String,
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub model: ModelSection,
    pub solver: SolverSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshSection {
                macro_rect: [0.0, 0.0, 1.0, 1.0],
                micro_rect: [0.0, 0.0, 1.0, 1.0],
                macro_nx: 8,
                macro_ny: 8,
                micro_nx: 8,
                micro_ny: 8,
                gamma_r: GammaPreset::TopEdge,
            },
            model: ModelSection {
                theta: 1.0,
                d_macro: 1.0,
                d1: 0.1,
                d2: 0.1,
                k: 1.0,
                alpha: 1.0,
                b: TransferFn::LinearPositivePart { c_hat: 1.0 },
                r_factor: ReactionFactorFn::PositivePart,
                q_factor: ReactionFactorFn::PositivePart,
                u_ext: "1".into(),
                macro_init: "0.5".into(),
                micro_u_init_macro: "0".into(),
                micro_u_init_micro: "0".into(),
                micro_v_init_macro: "1".into(),
                micro_v_init_micro: "1".into(),
            },
            solver: SolverSection {
                dt: 0.01,
                t_end: 1.0,
                scheme: Scheme::SemiImplicit,
                picard_tol: 1e-10,
                picard_max: 50,
                cg_tol: 1e-12,
                cg_max_iter: 50_000,
                mass: MassForm::Lumped,
                auto_dt: true,
            },
            verify: VerifySection {
                levels: 4,
                dt_rule_quadratic: true,
                dt_rule_c: 0.1,
                exact: ExactPreset::CoupledTrig,
                bounds_tol: 1e-10,
            },
            output: OutputSection {
                dir: "out".into(),
                snapshot_stride: 0,
            },
        }
    }
}

fn parse_f64(value: &str, errors: &mut Vec<String>, ctx: &str) -> Option<f64> {
    match value.parse::<f64>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(format!("{ctx}: '{value}' is not a number"));
            None
        }
    }
}

fn parse_usize(value: &str, errors: &mut Vec<String>, ctx: &str) -> Option<usize> {
    match value.parse::<usize>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(format!("{ctx}: '{value}' is not a nonnegative integer"));
            None
        }
    }
}

fn parse_bool(value: &str, errors: &mut Vec<String>, ctx: &str) -> Option<bool> {
    match value {
        "true" => Some(true),
        "false" => Some(false),
        _ => {
            errors.push(format!("{ctx}: expected true or false, found '{value}'"));
            None
        }
    }
}

fn parse_rect(value: &str, errors: &mut Vec<String>, ctx: &str) -> Option<[f64; 4]> {
    let parts: Vec<f64> = value
        .split_whitespace()
        .filter_map(|p| p.parse::<f64>().ok())
        .collect();
    if parts.len() == 4 && value.split_whitespace().count() == 4 {
        Some([parts[0], parts[1], parts[2], parts[3]])
    } else {
        errors.push(format!(
            "{ctx}: expected four numbers 'x0 y0 x1 y1', found '{value}'"
        ));
        None
    }
}

fn parse_transfer(value: &str, errors: &mut Vec<String>, ctx: &str) -> Option<TransferFn<f64>> {
    let parts: Vec<&str> = value.split(':').collect();
    match parts.as_slice() {
        ["linear", c] => c
            .parse::<f64>()
            .ok()
            .map(|c_hat| TransferFn::LinearPositivePart { c_hat }),
        ["saturating", c, z] => match (c.parse::<f64>(), z.parse::<f64>()) {
            (Ok(c_hat), Ok(z_sat)) => Some(TransferFn::Saturating { c_hat, z_sat }),
            _ => None,
        },
        _ => None,
    }
    .or_else(|| {
        errors.push(format!(
            "{ctx}: expected 'linear:<c_hat>' or 'saturating:<c_hat>:<z_sat>', found '{value}'"
        ));
        None
    })
}

fn parse_factor(value: &str, errors: &mut Vec<String>, ctx: &str) -> Option<ReactionFactorFn<f64>> {
    let parts: Vec<&str> = value.split(':').collect();
    match parts.as_slice() {
        ["positive_part"] => Some(ReactionFactorFn::PositivePart),
        ["clipped", cap] => cap
            .parse::<f64>()
            .ok()
            .map(|cap| ReactionFactorFn::ClippedPositivePart { cap }),
        _ => None,
    }
    .or_else(|| {
        errors.push(format!(
            "{ctx}: expected 'positive_part' or 'clipped:<cap>', found '{value}'"
        ));
        None
    })
}

/// Parse and validate a configuration; on failure every problem found is
/// reported, not just the first.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut errors: Vec<String> = Vec::new();
    let mut section = String::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ctx_line = lineno + 1;
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) if ["mesh", "model", "solver", "verify", "output"].contains(&name) => {
                    section = name.to_string();
                }
                Some(name) => errors.push(format!("line {ctx_line}: unknown section [{name}]")),
                None => errors.push(format!("line {ctx_line}: malformed section header")),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {ctx_line}: expected 'key = value'"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let ctx = format!("line {ctx_line}: {section}.{key}");
        let e = &mut errors;
        match (section.as_str(), key) {
            ("mesh", "macro_rect") => {
                if let Some(v) = parse_rect(value, e, &ctx) {
                    cfg.mesh.macro_rect = v;
                }
            }
            ("mesh", "micro_rect") => {
                if let Some(v) = parse_rect(value, e, &ctx) {
                    cfg.mesh.micro_rect = v;
                }
            }
            ("mesh", "macro_nx") => {
                if let Some(v) = parse_usize(value, e, &ctx) {
                    cfg.mesh.macro_nx = v;
                }
            }
            ("mesh", "macro_ny") => {
                if let Some(v) = parse_usize(value, e, &ctx) {
                    cfg.mesh.macro_ny = v;
                }
            }
            ("mesh", "micro_nx") => {
                if let Some(v) = parse_usize(value, e, &ctx) {
                    cfg.mesh.micro_nx = v;
                }
            }
            ("mesh", "micro_ny") => {
                if let Some(v) = parse_usize(value, e, &ctx) {
                    cfg.mesh.micro_ny = v;
                }
            }
            ("mesh", "gamma_r") => match value {
                "top_edge" => cfg.mesh.gamma_r = GammaPreset::TopEdge,
                "left_edge" => cfg.mesh.gamma_r = GammaPreset::LeftEdge,
                "full_boundary_minus_bottom" => {
                    cfg.mesh.gamma_r = GammaPreset::FullBoundaryMinusBottom
                }
                _ => e.push(format!(
                    "{ctx}: expected one of top_edge, left_edge, full_boundary_minus_bottom"
                )),
            },
            ("model", "theta") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.model.theta = v;
                }
            }
            ("model", "d_macro") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.model.d_macro = v;
                }
            }
            ("model", "d1") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.model.d1 = v;
                }
            }
            ("model", "d2") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.model.d2 = v;
                }
            }
            ("model", "k") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.model.k = v;
                }
            }
            ("model", "alpha") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.model.alpha = v;
                }
            }
            ("model", "b") => {
                if let Some(v) = parse_transfer(value, e, &ctx) {
                    cfg.model.b = v;
                }
            }
            ("model", "r_factor") => {
                if let Some(v) = parse_factor(value, e, &ctx) {
                    cfg.model.r_factor = v;
                }
            }
            ("model", "q_factor") => {
                if let Some(v) = parse_factor(value, e, &ctx) {
                    cfg.model.q_factor = v;
                }
            }
            ("model", "u_ext") => cfg.model.u_ext = value.to_string(),
            ("model", "macro_init") => cfg.model.macro_init = value.to_string(),
            ("model", "micro_u_init_macro") => cfg.model.micro_u_init_macro = value.to_string(),
            ("model", "micro_u_init_micro") => cfg.model.micro_u_init_micro = value.to_string(),
            ("model", "micro_v_init_macro") => cfg.model.micro_v_init_macro = value.to_string(),
            ("model", "micro_v_init_micro") => cfg.model.micro_v_init_micro = value.to_string(),
            ("solver", "dt") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.solver.dt = v;
                }
            }
            ("solver", "t_end") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.solver.t_end = v;
                }
            }
            ("solver", "scheme") => match value {
                "semi_implicit" => cfg.solver.scheme = Scheme::SemiImplicit,
                "picard" => cfg.solver.scheme = Scheme::Picard,
                _ => e.push(format!("{ctx}: expected semi_implicit or picard")),
            },
            ("solver", "picard_tol") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.solver.picard_tol = v;
                }
            }
            ("solver", "picard_max") => {
                if let Some(v) = parse_usize(value, e, &ctx) {
                    cfg.solver.picard_max = v;
                }
            }
            ("solver", "cg_tol") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.solver.cg_tol = v;
                }
            }
            ("solver", "cg_max_iter") => {
                if let Some(v) = parse_usize(value, e, &ctx) {
                    cfg.solver.cg_max_iter = v;
                }
            }
            ("solver", "mass") => match value {
                "lumped" => cfg.solver.mass = MassForm::Lumped,
                "consistent" => cfg.solver.mass = MassForm::Consistent,
                _ => e.push(format!("{ctx}: expected lumped or consistent")),
            },
            ("solver", "auto_dt") => {
                if let Some(v) = parse_bool(value, e, &ctx) {
                    cfg.solver.auto_dt = v;
                }
            }
            ("verify", "levels") => {
                if let Some(v) = parse_usize(value, e, &ctx) {
                    cfg.verify.levels = v;
                }
            }
            ("verify", "dt_rule") => {
                let parts: Vec<&str> = value.split(':').collect();
                match parts.as_slice() {
                    ["quadratic", c] if c.parse::<f64>().is_ok() => {
                        cfg.verify.dt_rule_quadratic = true;
                        cfg.verify.dt_rule_c = c.parse().unwrap();
                    }
                    ["linear", c] if c.parse::<f64>().is_ok() => {
                        cfg.verify.dt_rule_quadratic = false;
                        cfg.verify.dt_rule_c = c.parse().unwrap();
                    }
                    _ => e.push(format!(
                        "{ctx}: expected 'quadratic:<c>' or 'linear:<c>', found '{value}'"
                    )),
                }
            }
            ("verify", "exact") => match value {
                "coupled_trig" => cfg.verify.exact = ExactPreset::CoupledTrig,
                "heat_only" => cfg.verify.exact = ExactPreset::HeatOnly,
                _ => e.push(format!("{ctx}: expected coupled_trig or heat_only")),
            },
            ("verify", "bounds_tol") => {
                if let Some(v) = parse_f64(value, e, &ctx) {
                    cfg.verify.bounds_tol = v;
                }
            }
            ("output", "dir") => cfg.output.dir = value.to_string(),
            ("output", "snapshot_stride") => {
                if let Some(v) = parse_usize(value, e, &ctx) {
                    cfg.output.snapshot_stride = v;
                }
            }
            ("", _) => errors.push(format!(
                "line {ctx_line}: key '{key}' appears before any [section] header"
            )),
            (_, _) => errors.push(format!(
                "line {ctx_line}: unknown key '{key}' in section [{section}]"
            )),
        }
    }

    validate(&cfg, &mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

fn validate(cfg: &RunConfig, errors: &mut Vec<String>) {
    let m = &cfg.mesh;
    if m.macro_rect[2] <= m.macro_rect[0] || m.macro_rect[3] <= m.macro_rect[1] {
        errors.push("mesh.macro_rect: degenerate rectangle".into());
    }
    if m.micro_rect[2] <= m.micro_rect[0] || m.micro_rect[3] <= m.micro_rect[1] {
        errors.push("mesh.micro_rect: degenerate rectangle".into());
    }
    for (name, v) in [
        ("macro_nx", m.macro_nx),
        ("macro_ny", m.macro_ny),
        ("micro_nx", m.micro_nx),
        ("micro_ny", m.micro_ny),
    ] {
        if v < 1 {
            errors.push(format!("mesh.{name}: must be at least 1"));
        }
    }

    let md = &cfg.model;
    if md.theta <= 0.0 {
        errors.push("model.theta: porosity must be > 0".into());
    }
    for (name, v) in [("d_macro", md.d_macro), ("d1", md.d1), ("d2", md.d2)] {
        if v <= 0.0 {
            errors.push(format!(
                "model.{name} = {v}: diffusivities must be strictly positive (assumption A1)"
            ));
        }
    }
    if md.k < 0.0 {
        errors.push(format!(
            "model.k = {}: reaction constant must be nonnegative (assumption A3; k = 0 decouples the reaction)",
            md.k
        ));
    }
    if md.alpha <= 0.0 {
        errors.push(format!(
            "model.alpha = {}: molecular-weight ratio must be > 0 (assumption A3)",
            md.alpha
        ));
    }
    if md.b.lipschitz() < 0.0 {
        errors.push(
            "model.b: c_hat must be nonnegative (assumption A2: globally Lipschitz transfer law)"
                .into(),
        );
    }
    if let TransferFn::Saturating { z_sat, .. } = md.b {
        if z_sat <= 0.0 {
            errors.push("model.b: saturation threshold must be > 0 (assumption A2)".into());
        }
    }
    if let ReactionFactorFn::ClippedPositivePart { cap } = md.r_factor {
        if cap <= 0.0 {
            errors.push("model.r_factor: cap must be > 0 (assumption A3)".into());
        }
    }
    if let ReactionFactorFn::ClippedPositivePart { cap } = md.q_factor {
        if cap <= 0.0 {
            errors.push("model.q_factor: cap must be > 0 (assumption A3)".into());
        }
    }
    for (name, src, allowed) in [
        ("u_ext", &md.u_ext, vec![Var::T, Var::X, Var::Y]),
        ("macro_init", &md.macro_init, vec![Var::X, Var::Y]),
        (
            "micro_u_init_macro",
            &md.micro_u_init_macro,
            vec![Var::X, Var::Y],
        ),
        (
            "micro_u_init_micro",
            &md.micro_u_init_micro,
            vec![Var::X, Var::Y],
        ),
        (
            "micro_v_init_macro",
            &md.micro_v_init_macro,
            vec![Var::X, Var::Y],
        ),
        (
            "micro_v_init_micro",
            &md.micro_v_init_micro,
            vec![Var::X, Var::Y],
        ),
    ] {
        match parse_expr(src) {
            Ok(expr) => {
                if !expr.uses_only(&allowed) {
                    errors.push(format!(
                        "model.{name}: expression '{src}' uses a variable outside {allowed:?}"
                    ));
                }
            }
            Err(msg) => errors.push(format!("model.{name}: {msg}")),
        }
    }

    let s = &cfg.solver;
    if s.dt <= 0.0 || s.t_end <= 0.0 {
        errors.push("solver.dt and solver.t_end must be > 0".into());
    } else if s.dt > s.t_end {
        errors.push("solver.dt must not exceed solver.t_end".into());
    }
    if s.picard_tol <= 0.0 {
        errors.push("solver.picard_tol must be > 0".into());
    }
    if s.cg_tol <= 0.0 {
        errors.push("solver.cg_tol must be > 0".into());
    }
    if cfg.verify.levels < 1 {
        errors.push("verify.levels: must be at least 1".into());
    }
    if cfg.verify.dt_rule_c <= 0.0 {
        errors.push("verify.dt_rule: constant must be > 0".into());
    }
    if cfg.verify.bounds_tol <= 0.0 {
        errors.push("verify.bounds_tol must be > 0".into());
    }
}

impl RunConfig {
    /// Canonical text form; `parse_config(emit(cfg)) == cfg`.
    pub fn emit(&self) -> String {
        let m = &self.mesh;
        let md = &self.model;
        let s = &self.solver;
        let v = &self.verify;
        let o = &self.output;
        let b = match md.b {
            TransferFn::LinearPositivePart { c_hat } => format!("linear:{c_hat}"),
            TransferFn::Saturating { c_hat, z_sat } => format!("saturating:{c_hat}:{z_sat}"),
        };
        let factor = |f: &ReactionFactorFn<f64>| match f {
            ReactionFactorFn::PositivePart => "positive_part".to_string(),
            ReactionFactorFn::ClippedPositivePart { cap } => format!("clipped:{cap}"),
        };
        format!(
            "[mesh]\n\
             macro_rect = {} {} {} {}\n\
             micro_rect = {} {} {} {}\n\
             macro_nx = {}\nmacro_ny = {}\nmicro_nx = {}\nmicro_ny = {}\n\
             gamma_r = {}\n\
             \n[model]\n\
             theta = {}\nd_macro = {}\nd1 = {}\nd2 = {}\nk = {}\nalpha = {}\n\
             b = {}\nr_factor = {}\nq_factor = {}\n\
             u_ext = {}\nmacro_init = {}\n\
             micro_u_init_macro = {}\nmicro_u_init_micro = {}\n\
             micro_v_init_macro = {}\nmicro_v_init_micro = {}\n\
             \n[solver]\n\
             dt = {}\nt_end = {}\nscheme = {}\npicard_tol = {}\npicard_max = {}\n\
             cg_tol = {}\ncg_max_iter = {}\nmass = {}\nauto_dt = {}\n\
             \n[verify]\n\
             levels = {}\ndt_rule = {}:{}\nexact = {}\nbounds_tol = {}\n\
             \n[output]\n\
             dir = {}\nsnapshot_stride = {}\n",
            m.macro_rect[0],
            m.macro_rect[1],
            m.macro_rect[2],
            m.macro_rect[3],
            m.micro_rect[0],
            m.micro_rect[1],
            m.micro_rect[2],
            m.micro_rect[3],
            m.macro_nx,
            m.macro_ny,
            m.micro_nx,
            m.micro_ny,
            m.gamma_r.name(),
            md.theta,
            md.d_macro,
            md.d1,
            md.d2,
            md.k,
            md.alpha,
            b,
            factor(&md.r_factor),
            factor(&md.q_factor),
            md.u_ext,
            md.macro_init,
            md.micro_u_init_macro,
            md.micro_u_init_micro,
            md.micro_v_init_macro,
            md.micro_v_init_micro,
            s.dt,
            s.t_end,
            match s.scheme {
                Scheme::SemiImplicit => "semi_implicit",
                Scheme::Picard => "picard",
            },
            s.picard_tol,
            s.picard_max,
            s.cg_tol,
            s.cg_max_iter,
            match s.mass {
                MassForm::Lumped => "lumped",
                MassForm::Consistent => "consistent",
            },
            s.auto_dt,
            v.levels,
            if v.dt_rule_quadratic {
                "quadratic"
            } else {
                "linear"
            },
            v.dt_rule_c,
            match v.exact {
                ExactPreset::CoupledTrig => "coupled_trig",
                ExactPreset::HeatOnly => "heat_only",
            },
            v.bounds_tol,
            o.dir,
            o.snapshot_stride,
        )
    }

    pub fn build_meshes(&self) -> Result<(Mesh2D<f64>, Mesh2D<f64>)> {
        let m = &self.mesh;
        let macro_mesh = make_rect_mesh(
            [m.macro_rect[0], m.macro_rect[1]],
            [m.macro_rect[2], m.macro_rect[3]],
            m.macro_nx,
            m.macro_ny,
        )?;
        let micro_plain = make_rect_mesh(
            [m.micro_rect[0], m.micro_rect[1]],
            [m.micro_rect[2], m.micro_rect[3]],
            m.micro_nx,
            m.micro_ny,
        )?;
        let rect = m.micro_rect;
        let eps = 1e-12 * (rect[2] - rect[0]).max(rect[3] - rect[1]);
        let preset = m.gamma_r;
        let micro_mesh = tag_boundary(&micro_plain, move |mid| match preset {
            GammaPreset::TopEdge => {
                if mid[1] > rect[3] - eps {
                    BoundaryTag::GammaR
                } else {
                    BoundaryTag::GammaN
                }
            }
            GammaPreset::LeftEdge => {
                if mid[0] < rect[0] + eps {
                    BoundaryTag::GammaR
                } else {
                    BoundaryTag::GammaN
                }
            }
            GammaPreset::FullBoundaryMinusBottom => {
                if mid[1] > rect[1] + eps {
                    BoundaryTag::GammaR
                } else {
                    BoundaryTag::GammaN
                }
            }
        })?;
        Ok((macro_mesh, micro_mesh))
    }

    pub fn build_params(&self) -> Result<ModelParams<f64>> {
        let md = &self.model;
        let mut params = ModelParams::new(
            md.theta,
            md.d_macro,
            md.d1,
            md.d2,
            md.k,
            md.alpha,
            md.b,
            md.r_factor,
            md.q_factor,
        );
        let bad = |name: &str, msg: String| Error::Config(vec![format!("model.{name}: {msg}")]);
        let u_ext = parse_expr(&md.u_ext).map_err(|m| bad("u_ext", m))?;
        params.u_ext = Arc::new(move |t, p| u_ext.eval(t, p));
        let macro_init = parse_expr(&md.macro_init).map_err(|m| bad("macro_init", m))?;
        params.macro_init = Arc::new(move |p| macro_init.eval(0.0, p));
        let um = parse_expr(&md.micro_u_init_macro).map_err(|m| bad("micro_u_init_macro", m))?;
        let uy = parse_expr(&md.micro_u_init_micro).map_err(|m| bad("micro_u_init_micro", m))?;
        params.micro_u_init = Arc::new(move |x, y| um.eval(0.0, x) * uy.eval(0.0, y));
        let vm = parse_expr(&md.micro_v_init_macro).map_err(|m| bad("micro_v_init_macro", m))?;
        let vy = parse_expr(&md.micro_v_init_micro).map_err(|m| bad("micro_v_init_micro", m))?;
        params.micro_v_init = Arc::new(move |x, y| vm.eval(0.0, x) * vy.eval(0.0, y));
        params.validate()?;
        Ok(params)
    }

    pub fn build_solver_config(&self) -> SolverConfig<f64> {
        let s = &self.solver;
        SolverConfig {
            dt: s.dt,
            t_end: s.t_end,
            scheme: s.scheme,
            picard_tol: s.picard_tol,
            picard_max: s.picard_max,
            cg_tol: s.cg_tol,
            cg_max_iter: s.cg_max_iter,
            mass_form: s.mass,
        }
    }

    pub fn exact_solution(&self) -> ExactSolution<f64> {
        match self.verify.exact {
            ExactPreset::CoupledTrig => coupled_trig(),
            ExactPreset::HeatOnly => heat_only(),
        }
    }

    pub fn dt_rule(&self) -> DtRule<f64> {
        if self.verify.dt_rule_quadratic {
            DtRule::QuadraticInH {
                c: self.verify.dt_rule_c,
            }
        } else {
            DtRule::LinearInH {
                c: self.verify.dt_rule_c,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = parse_config("[solver]\ndt = 0.5\n").unwrap();
        assert_eq!(cfg.solver.dt, 0.5);
        assert_eq!(cfg.mesh.macro_nx, 8);
    }

    #[test]
    fn negative_diffusivity_cites_the_assumption() {
        let err = parse_config("[model]\nd_macro = -1\n").unwrap_err();
        match err {
            Error::Config(msgs) => {
                assert!(msgs.iter().any(|m| m.contains("A1")), "{msgs:?}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = parse_config("[mesh]\nfoo = 3\n[model]\nbar = 1\n").unwrap_err();
        match err {
            Error::Config(msgs) => {
                assert!(msgs.iter().any(|m| m.contains("'foo'")));
                assert!(msgs.iter().any(|m| m.contains("'bar'")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_errors_are_collected() {
        let err = parse_config(
            "[model]\nd_macro = -1\nk = -2\nalpha = 0\nu_ext = sin(\n[solver]\ndt = 0\n",
        )
        .unwrap_err();
        match err {
            Error::Config(msgs) => assert!(msgs.len() >= 5, "{msgs:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.mesh.macro_nx = 5;
        cfg.mesh.gamma_r = GammaPreset::LeftEdge;
        cfg.model.b = TransferFn::Saturating {
            c_hat: 1.5,
            z_sat: 0.25,
        };
        cfg.model.u_ext = "1 + 0.5*t".into();
        cfg.solver.scheme = Scheme::Picard;
        cfg.verify.exact = ExactPreset::HeatOnly;
        cfg.verify.dt_rule_quadratic = false;
        cfg.output.snapshot_stride = 7;
        let reparsed = parse_config(&cfg.emit()).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn builders_produce_consistent_objects() {
        let cfg = parse_config(
            "[mesh]\nmacro_nx = 2\nmacro_ny = 2\nmicro_nx = 2\nmicro_ny = 2\n\
             gamma_r = full_boundary_minus_bottom\n\
             [model]\nmacro_init = x*(1 - x)\n",
        )
        .unwrap();
        let (macro_mesh, micro_mesh) = cfg.build_meshes().unwrap();
        assert_eq!(macro_mesh.n_triangles(), 8);
        assert_eq!(micro_mesh.count_tag(BoundaryTag::GammaR), 6);
        assert_eq!(micro_mesh.count_tag(BoundaryTag::GammaN), 2);
        let params = cfg.build_params().unwrap();
        assert_eq!((params.macro_init)([0.5, 0.0]), 0.25);
        assert_eq!((params.micro_v_init)([0.1, 0.2], [0.3, 0.4]), 1.0);
    }

    #[test]
    fn expression_variable_restrictions() {
        let err = parse_config("[model]\nmacro_init = t + x\n").unwrap_err();
        match err {
            Error::Config(msgs) => assert!(msgs[0].contains("macro_init")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
