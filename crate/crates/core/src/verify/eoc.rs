//! Empirical-order-of-convergence studies: run the solver against a
//! manufactured solution on a refinement family `h, h/2, h/4, ...` and
//! tabulate the space-time error norms with observed rates.

use std::sync::Arc;

use crate::coupling::CoupledOperators;
use crate::error::{Error, Result};
use crate::fem::P1Space;
use crate::mesh::{mesh_size, refine_uniform, Mesh2D};
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::solver::{run, SolverConfig};
use crate::verify::errors::{ErrorAccumulator, SpaceTimeErrors};
use crate::verify::mms::{mms_forcing, ExactSolution};

/// Step-size rule tied to the mesh size. The quadratic rule keeps the
/// first-order time error below the measured spatial orders; the linear rule
/// is accepted but flagged, since temporal error may then pollute the rates.
#[derive(Clone, Copy, Debug)]
pub enum DtRule<T> {
    QuadraticInH { c: T },
    LinearInH { c: T },
}

impl<T: Scalar> DtRule<T> {
    pub fn dt_for(&self, h: T) -> T {
        match *self {
            DtRule::QuadraticInH { c } => c * h * h,
            DtRule::LinearInH { c } => c * h,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EocRow<T> {
    pub level: usize,
    pub h: T,
    pub dt: T,
    pub errors: SpaceTimeErrors<T>,
}

/// Error norm selector for rate extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorColumn {
    MacroH1,
    MacroL2,
    MicroUEnergy,
    MicroUL2,
    MicroVEnergy,
    MicroVL2,
}

impl ErrorColumn {
    pub const ALL: [ErrorColumn; 6] = [
        ErrorColumn::MacroH1,
        ErrorColumn::MicroUEnergy,
        ErrorColumn::MicroVEnergy,
        ErrorColumn::MacroL2,
        ErrorColumn::MicroUL2,
        ErrorColumn::MicroVL2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ErrorColumn::MacroH1 => "e_U_H1",
            ErrorColumn::MacroL2 => "e_U_L2",
            ErrorColumn::MicroUEnergy => "e_u_L2H1y",
            ErrorColumn::MicroUL2 => "e_u_L2",
            ErrorColumn::MicroVEnergy => "e_v_L2H1y",
            ErrorColumn::MicroVL2 => "e_v_L2",
        }
    }

    pub fn pick<T: Scalar>(&self, e: &SpaceTimeErrors<T>) -> T {
        match self {
            ErrorColumn::MacroH1 => e.macro_h1,
            ErrorColumn::MacroL2 => e.macro_l2,
            ErrorColumn::MicroUEnergy => e.micro_u_energy,
            ErrorColumn::MicroUL2 => e.micro_u_l2,
            ErrorColumn::MicroVEnergy => e.micro_v_energy,
            ErrorColumn::MicroVL2 => e.micro_v_l2,
        }
    }
}

/// Least-squares slope of `log e` against `log h` (the fitted order), with
/// the fitted constant `exp(intercept)`.
pub fn fit_log_slope<T: Scalar>(hs: &[T], es: &[T]) -> (T, T) {
    assert_eq!(hs.len(), es.len());
    let n = T::of_usize(hs.len());
    let xs: Vec<T> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<T> = es.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (x, y) in xs.iter().zip(&ys) {
        num += (*x - mx) * (*y - my);
        den += (*x - mx) * (*x - mx);
    }
    let slope = num / den;
    let intercept = my - slope * mx;
    (slope, intercept.exp())
}

#[derive(Clone, Debug)]
pub struct EocTable<T> {
    pub rows: Vec<EocRow<T>>,
}

impl<T: Scalar> EocTable<T> {
    pub fn column(&self, col: ErrorColumn) -> Vec<T> {
        self.rows.iter().map(|r| col.pick(&r.errors)).collect()
    }

    /// Pairwise observed orders `log2(e_{l-1} / e_l)`.
    pub fn pairwise_rates(&self, col: ErrorColumn) -> Vec<T> {
        let es = self.column(col);
        es.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    }

    /// Least-squares order over all levels.
    pub fn ls_rate(&self, col: ErrorColumn) -> T {
        let hs: Vec<T> = self.rows.iter().map(|r| r.h).collect();
        fit_log_slope(&hs, &self.column(col)).0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,h,dt");
        for col in ErrorColumn::ALL {
            out.push(',');
            out.push_str(col.name());
        }
        for col in ErrorColumn::ALL {
            out.push_str(",rate_");
            out.push_str(col.name());
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("{},{},{}", row.level, row.h, row.dt));
            for col in ErrorColumn::ALL {
                out.push_str(&format!(",{}", col.pick(&row.errors)));
            }
            for col in ErrorColumn::ALL {
                if i == 0 {
                    out.push(',');
                } else {
                    let prev = col.pick(&self.rows[i - 1].errors);
                    let cur = col.pick(&row.errors);
                    out.push_str(&format!(",{}", (prev / cur).log2()));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Two-column `h error` text per norm, for plotting.
    pub fn to_plot_text(&self, col: ErrorColumn) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&format!("{} {}\n", row.h, col.pick(&row.errors)));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct EocConfig<T> {
    pub levels: usize,
    pub t_end: T,
    pub dt_rule: DtRule<T>,
    /// fitted interpolation constants (gamma1, gamma3) for the step-size
    /// sanity check `h^2 max(gamma1, gamma3) < 1`
    pub gamma_fit: Option<(T, T)>,
}

#[derive(Clone, Debug)]
pub struct EocOutcome<T> {
    pub table: EocTable<T>,
    pub warnings: Vec<String>,
}

/// Run the manufactured-solution study over `levels` uniform refinements of
/// the base meshes. `params` supplies coefficients and nonlinearities; the
/// boundary/initial data are installed from `exact`.
pub fn run_eoc<T: Scalar>(
    exact: &ExactSolution<T>,
    params: &ModelParams<T>,
    base_macro_mesh: &Mesh2D<T>,
    base_micro_mesh: &Mesh2D<T>,
    solver_base: &SolverConfig<T>,
    cfg: &EocConfig<T>,
) -> Result<EocOutcome<T>> {
    if cfg.levels < 3 {
        return Err(Error::Precondition(
            "an order study needs at least 3 refinement levels".into(),
        ));
    }
    let mut warnings = Vec::new();
    if matches!(cfg.dt_rule, DtRule::LinearInH { .. }) {
        warnings.push(
            "dt rule is linear in h: first-order temporal error may pollute the measured spatial rates"
                .to_string(),
        );
    }
    let mut params_run = params.clone();
    exact.install_data(&mut params_run);

    let mut macro_mesh = base_macro_mesh.clone();
    let mut micro_mesh = base_micro_mesh.clone();
    let mut rows = Vec::with_capacity(cfg.levels);
    for level in 0..cfg.levels {
        if level > 0 {
            macro_mesh = refine_uniform(&macro_mesh);
            micro_mesh = refine_uniform(&micro_mesh);
        }
        let h = mesh_size(&macro_mesh).max(mesh_size(&micro_mesh));
        if let Some((g1, g3)) = cfg.gamma_fit {
            if h * h * g1.max(g3) >= T::one() {
                warnings.push(format!(
                    "level {level}: h^2 max(gamma1, gamma3) = {} >= 1, refinement too coarse for the error bound",
                    (h * h * g1.max(g3)).to_f64_lossy()
                ));
            }
        }
        let macro_space = Arc::new(P1Space::new(Arc::new(macro_mesh.clone())));
        let micro_space = Arc::new(P1Space::new(Arc::new(micro_mesh.clone())));
        let ops = CoupledOperators::build(macro_space.clone(), micro_space.clone())?;

        let dt_raw = cfg.dt_rule.dt_for(h);
        let n_steps = (cfg.t_end / dt_raw).ceil().to_usize().unwrap_or(1).max(1);
        let dt = cfg.t_end / T::of_usize(n_steps);
        let mut solver_cfg = solver_base.clone();
        solver_cfg.dt = dt;
        solver_cfg.t_end = cfg.t_end;

        let forcing = mms_forcing(exact, &params_run, &macro_space, &micro_space);
        let mut acc = ErrorAccumulator::new(exact, &macro_space, &micro_space, dt);
        run(&params_run, &ops, &solver_cfg, &forcing, &mut [&mut acc])?;
        rows.push(EocRow {
            level,
            h,
            dt,
            errors: acc.finalize(),
        });
    }
    Ok(EocOutcome {
        table: EocTable { rows },
        warnings,
    })
}
