//! Time integration of the semi-discrete two-scale system.
//!
//! Each step treats the linear diffusion operators implicitly (backward
//! Euler) and the nonlinear exchange and reaction terms explicitly, or
//! re-evaluates them by fixed-point sweeps (`Picard`) for a fully implicit
//! step. The macro solve comes first; the micro problems of all macro nodes
//! then share the same pair of operators `M + dt d A` and run as an
//! independent parallel loop over macro rows, which is the payoff of lumping
//! the macro integrals of the nonlinear terms.
//!
//! Mass form: by default the time-derivative terms use the lumped (row-sum)
//! mass on both scales. On the right-triangle meshes produced by this crate
//! the resulting implicit operators are M-matrices, so nonnegative states
//! stay nonnegative and bounded states stay bounded up to solver tolerance;
//! the consistent-mass variant is available but offers no such guarantee.
//! The explicit nonlinear terms respect the same structure only under a step
//! size restriction from the global Lipschitz constants of `b` and the
//! reaction factors, see [`stable_dt`].

use std::sync::Arc;

use rayon::prelude::*;

use crate::coupling::{exchange_loads_into, exchange_total, CoupledOperators};
use crate::error::{Error, Result};
use crate::fem::{cg_solve_into, DirichletSystem, P1Space, SparseOperator};
use crate::model::{eval_eta, ModelParams};
use crate::scalar::Scalar;
use crate::twoscale::{weighted_total, TwoScaleField};

/// Solution triple at one time level.
#[derive(Clone)]
pub struct State<T> {
    pub t: T,
    /// macro concentration coefficients
    pub u_macro: Vec<T>,
    /// micro concentration of the transferred species
    pub u_micro: TwoScaleField<T>,
    /// micro concentration of the consumed species
    pub v_micro: TwoScaleField<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// implicit diffusion, nonlinear terms frozen at the previous step
    SemiImplicit,
    /// fixed-point sweeps towards the fully implicit step
    Picard,
}

/// Mass treatment in the time-derivative terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassForm {
    Lumped,
    Consistent,
}

#[derive(Clone, Debug)]
pub struct SolverConfig<T> {
    pub dt: T,
    pub t_end: T,
    pub scheme: Scheme,
    pub picard_tol: T,
    pub picard_max: usize,
    pub cg_tol: T,
    pub cg_max_iter: usize,
    pub mass_form: MassForm,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            dt: T::cst(1e-3),
            t_end: T::cst(1e-2),
            scheme: Scheme::SemiImplicit,
            picard_tol: T::cst(1e-10),
            picard_max: 50,
            cg_tol: T::cst(1e-12),
            cg_max_iter: 50_000,
            mass_form: MassForm::Lumped,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.dt <= T::zero() || self.t_end <= T::zero() {
            return Err(Error::Precondition("dt and t_end must be positive".into()));
        }
        if self.dt > self.t_end * (T::one() + T::cst(1e-12)) {
            return Err(Error::Precondition("dt must not exceed t_end".into()));
        }
        if self.picard_tol <= T::zero() {
            return Err(Error::Precondition("picard_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step load vectors for manufactured-solution runs. Implementations
/// must be callable concurrently for different macro rows.
pub trait Forcing<T: Scalar>: Send + Sync {
    fn is_zero(&self) -> bool {
        false
    }
    /// `out_j = ∫ f_U(t, .) ξ_j`
    fn macro_load(&self, t: T, out: &mut [T]);
    /// micro load of `f_u(t, x_j, .)` against the micro hats, including any
    /// boundary residual terms
    fn micro_u_load(&self, t: T, j: usize, out: &mut [T]);
    fn micro_v_load(&self, t: T, j: usize, out: &mut [T]);
}

/// No forcing: the plain physical system.
pub struct NoForcing;

impl<T: Scalar> Forcing<T> for NoForcing {
    fn is_zero(&self) -> bool {
        true
    }
    fn macro_load(&self, _t: T, out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
    }
    fn micro_u_load(&self, _t: T, _j: usize, out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
    }
    fn micro_v_load(&self, _t: T, _j: usize, out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
    }
}

enum MassApply<T> {
    Lumped(Vec<T>),
    Consistent(SparseOperator<T>),
}

impl<T: Scalar> MassApply<T> {
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        match self {
            MassApply::Lumped(w) => {
                for ((o, &xi), &wi) in out.iter_mut().zip(x).zip(w) {
                    *o = wi * xi;
                }
            }
            MassApply::Consistent(op) => op.matvec(x, out),
        }
    }

    fn to_operator(&self) -> SparseOperator<T> {
        match self {
            MassApply::Lumped(w) => SparseOperator::from_diagonal(w),
            MassApply::Consistent(op) => op.clone(),
        }
    }
}

/// Report from state initialization: largest mismatch between the initial
/// macro datum and the exterior concentration on the Dirichlet boundary
/// (compatibility asks for zero).
#[derive(Clone, Copy, Debug)]
pub struct InitReport<T> {
    pub boundary_mismatch: T,
}

/// Nodal interpolation of the initial data; Dirichlet vertices take the
/// exterior value at `t = 0`.
pub fn initial_state<T: Scalar>(
    params: &ModelParams<T>,
    macro_space: &Arc<P1Space<T>>,
    micro_space: &Arc<P1Space<T>>,
) -> (State<T>, InitReport<T>) {
    let mut u_macro: Vec<T> = macro_space
        .mesh
        .vertices
        .iter()
        .map(|&p| (params.macro_init)(p))
        .collect();
    let mut mismatch = T::zero();
    for (i, &masked) in macro_space.dirichlet_mask.iter().enumerate() {
        if masked {
            let ext = (params.u_ext)(T::zero(), macro_space.mesh.vertices[i]);
            mismatch = mismatch.max((u_macro[i] - ext).abs());
            u_macro[i] = ext;
        }
    }
    let u_micro = TwoScaleField::interpolate(macro_space.clone(), micro_space.clone(), |x, y| {
        (params.micro_u_init)(x, y)
    });
    let v_micro = TwoScaleField::interpolate(macro_space.clone(), micro_space.clone(), |x, y| {
        (params.micro_v_init)(x, y)
    });
    (
        State {
            t: T::zero(),
            u_macro,
            u_micro,
            v_micro,
        },
        InitReport {
            boundary_mismatch: mismatch,
        },
    )
}

/// Precomputed step operators: one Dirichlet-constrained macro system and
/// one shared micro operator per species, reused across all macro rows and
/// all steps.
pub struct Integrator<'a, T: Scalar> {
    params: &'a ModelParams<T>,
    ops: &'a CoupledOperators<T>,
    cfg: SolverConfig<T>,
    forcing: &'a dyn Forcing<T>,
    macro_system: DirichletSystem<T>,
    macro_mass: MassApply<T>,
    micro_mass: MassApply<T>,
    micro_u_op: SparseOperator<T>,
    micro_v_op: SparseOperator<T>,
}

impl<'a, T: Scalar> Integrator<'a, T> {
    pub fn new(
        params: &'a ModelParams<T>,
        ops: &'a CoupledOperators<T>,
        cfg: SolverConfig<T>,
        forcing: &'a dyn Forcing<T>,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let dt = cfg.dt;
        let macro_mass = match cfg.mass_form {
            MassForm::Lumped => MassApply::Lumped(ops.wx.clone()),
            MassForm::Consistent => MassApply::Consistent(ops.mass_x.clone()),
        };
        let micro_mass = match cfg.mass_form {
            MassForm::Lumped => MassApply::Lumped(ops.wy.clone()),
            MassForm::Consistent => MassApply::Consistent(ops.mass_y.clone()),
        };
        let macro_op = SparseOperator::linear_combination(&[
            (params.theta, &macro_mass.to_operator()),
            (dt * params.d_macro, &ops.stiffness_x),
        ]);
        let macro_system = DirichletSystem::new(macro_op, &ops.macro_space.dirichlet_mask);
        let micro_mass_op = micro_mass.to_operator();
        let micro_u_op = SparseOperator::linear_combination(&[
            (T::one(), &micro_mass_op),
            (dt * params.d1, &ops.stiffness_y),
        ]);
        let micro_v_op = SparseOperator::linear_combination(&[
            (T::one(), &micro_mass_op),
            (dt * params.d2, &ops.stiffness_y),
        ]);
        Ok(Integrator {
            params,
            ops,
            cfg,
            forcing,
            macro_system,
            macro_mass,
            micro_mass,
            micro_u_op,
            micro_v_op,
        })
    }

    pub fn dt(&self) -> T {
        self.cfg.dt
    }

    /// Advance one step of length `dt` from `state`.
    pub fn step(&self, state: &State<T>) -> Result<State<T>> {
        let t_next = state.t + self.cfg.dt;
        match self.cfg.scheme {
            Scheme::SemiImplicit => self.step_linearized(state, state, t_next),
            Scheme::Picard => {
                let mut iterate = self.step_linearized(state, state, t_next)?;
                for sweep in 1..=self.cfg.picard_max {
                    let next = self.step_linearized(state, &iterate, t_next)?;
                    let diff = self.combined_distance(&next, &iterate);
                    iterate = next;
                    if diff < self.cfg.picard_tol {
                        return Ok(iterate);
                    }
                    if sweep == self.cfg.picard_max {
                        return Err(Error::PicardNoConvergence {
                            iterations: sweep,
                            residual: diff.to_f64_lossy(),
                        });
                    }
                }
                Ok(iterate)
            }
        }
    }

    /// Backward-Euler step with the nonlinear terms evaluated at `lin`.
    fn step_linearized(&self, state: &State<T>, lin: &State<T>, t_next: T) -> Result<State<T>> {
        let ops = self.ops;
        let params = self.params;
        let dt = self.cfg.dt;
        let n_x = ops.n_macro();
        let n_y = ops.n_micro();

        // macro solve
        let mut rhs = vec![T::zero(); n_x];
        self.macro_mass.apply_into(&state.u_macro, &mut rhs);
        rhs.iter_mut().for_each(|v| *v *= params.theta);
        let mut f_macro = vec![T::zero(); n_x];
        if !self.forcing.is_zero() {
            self.forcing.macro_load(t_next, &mut f_macro);
        }
        for j in 0..n_x {
            let sink = exchange_total(
                lin.u_macro[j],
                lin.u_micro.coeffs.row(j),
                &params.b,
                &ops.gamma_edges,
            );
            rhs[j] += dt * (f_macro[j] - ops.wx[j] * sink);
        }
        let bc: Vec<T> = ops
            .macro_space
            .mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if ops.macro_space.dirichlet_mask[i] {
                    (params.u_ext)(t_next, p)
                } else {
                    T::zero()
                }
            })
            .collect();
        let mut u_macro = state.u_macro.clone();
        self.macro_system.solve(
            &rhs,
            &bc,
            &mut u_macro,
            self.cfg.cg_tol,
            self.cfg.cg_max_iter,
        )?;

        // micro solves, one independent pair per macro row
        let mut u_micro = state.u_micro.clone();
        let mut v_micro = state.v_micro.clone();
        let forcing_zero = self.forcing.is_zero();
        let row_results: Vec<Result<()>> = u_micro
            .coeffs
            .par_rows_mut()
            .zip(v_micro.coeffs.par_rows_mut())
            .enumerate()
            .map(|(j, (u_row, v_row))| {
                let mut rhs_u = vec![T::zero(); n_y];
                let mut rhs_v = vec![T::zero(); n_y];
                let mut load = vec![T::zero(); n_y];

                // b(U_j - u_j) interface loads
                exchange_loads_into(
                    lin.u_macro[j],
                    lin.u_micro.coeffs.row(j),
                    &params.b,
                    &ops.gamma_edges,
                    &mut load,
                );
                let lin_u = lin.u_micro.coeffs.row(j);
                let lin_v = lin.v_micro.coeffs.row(j);

                self.micro_mass
                    .apply_into(state.u_micro.coeffs.row(j), &mut rhs_u);
                self.micro_mass
                    .apply_into(state.v_micro.coeffs.row(j), &mut rhs_v);
                for m in 0..n_y {
                    let eta = eval_eta(&params.r_factor, &params.q_factor, lin_u[m], lin_v[m]);
                    let reaction = params.k * ops.wy[m] * eta;
                    rhs_u[m] += dt * (load[m] - reaction);
                    rhs_v[m] -= dt * params.alpha * reaction;
                }
                if !forcing_zero {
                    load.iter_mut().for_each(|v| *v = T::zero());
                    self.forcing.micro_u_load(t_next, j, &mut load);
                    for m in 0..n_y {
                        rhs_u[m] += dt * load[m];
                    }
                    load.iter_mut().for_each(|v| *v = T::zero());
                    self.forcing.micro_v_load(t_next, j, &mut load);
                    for m in 0..n_y {
                        rhs_v[m] += dt * load[m];
                    }
                }
                cg_solve_into(
                    &self.micro_u_op,
                    &rhs_u,
                    u_row,
                    self.cfg.cg_tol,
                    self.cfg.cg_max_iter,
                )?;
                cg_solve_into(
                    &self.micro_v_op,
                    &rhs_v,
                    v_row,
                    self.cfg.cg_tol,
                    self.cfg.cg_max_iter,
                )?;
                Ok(())
            })
            .collect();
        row_results.into_iter().collect::<Result<()>>()?;

        Ok(State {
            t: t_next,
            u_macro,
            u_micro,
            v_micro,
        })
    }

    /// Lumped L2 distance between two states (all three fields combined).
    fn combined_distance(&self, a: &State<T>, b: &State<T>) -> T {
        let ops = self.ops;
        let mut acc = T::zero();
        for j in 0..ops.n_macro() {
            let d = a.u_macro[j] - b.u_macro[j];
            acc += ops.wx[j] * d * d;
            let au = a.u_micro.coeffs.row(j);
            let bu = b.u_micro.coeffs.row(j);
            let av = a.v_micro.coeffs.row(j);
            let bv = b.v_micro.coeffs.row(j);
            let mut row_acc = T::zero();
            for m in 0..ops.n_micro() {
                let du = au[m] - bu[m];
                let dv = av[m] - bv[m];
                row_acc += ops.wy[m] * (du * du + dv * dv);
            }
            acc += ops.wx[j] * row_acc;
        }
        acc.max(T::zero()).sqrt()
    }
}

/// One unforced step (convenience wrapper building the integrator once).
pub fn step<T: Scalar>(
    state: &State<T>,
    params: &ModelParams<T>,
    ops: &CoupledOperators<T>,
    cfg: &SolverConfig<T>,
) -> Result<State<T>> {
    Integrator::new(params, ops, cfg.clone(), &NoForcing)?.step(state)
}

/// Step-by-step hook for error accumulators, bound monitors and mass
/// trackers. `observe` is called once with the initial state (step 0) and
/// once after every step.
pub trait Observer<T: Scalar> {
    fn observe(&mut self, step: usize, state: &State<T>, ops: &CoupledOperators<T>);
}

#[derive(Clone)]
pub struct RunSummary<T> {
    pub final_state: State<T>,
    pub steps: usize,
    pub dt: T,
    pub boundary_mismatch: T,
}

/// Advance from `t = 0` to `t_end`. The step count is `round(t_end / dt)`
/// (at least one) and the step size is adjusted to divide `t_end` exactly;
/// times are computed as multiples of the step to avoid accumulation drift.
pub fn run<T: Scalar>(
    params: &ModelParams<T>,
    ops: &CoupledOperators<T>,
    cfg: &SolverConfig<T>,
    forcing: &dyn Forcing<T>,
    observers: &mut [&mut dyn Observer<T>],
) -> Result<RunSummary<T>> {
    cfg.validate()?;
    let ratio = (cfg.t_end / cfg.dt).round();
    let n_steps = ratio.to_usize().unwrap_or(1).max(1);
    let mut cfg_run = cfg.clone();
    cfg_run.dt = cfg.t_end / T::of_usize(n_steps);
    let integrator = Integrator::new(params, ops, cfg_run.clone(), forcing)?;

    let (mut state, init_report) = initial_state(params, &ops.macro_space, &ops.micro_space);
    for obs in observers.iter_mut() {
        obs.observe(0, &state, ops);
    }
    for n in 1..=n_steps {
        state = integrator.step(&state)?;
        state.t = cfg_run.dt * T::of_usize(n);
        for obs in observers.iter_mut() {
            obs.observe(n, &state, ops);
        }
    }
    Ok(RunSummary {
        final_state: state,
        steps: n_steps,
        dt: cfg_run.dt,
        boundary_mismatch: init_report.boundary_mismatch,
    })
}

/// Total mass of the consumed species, `Σ_{jk} wx_j γ_{jk} wy_k`; testing
/// its balance equation with the all-ones function shows it cannot increase
/// while the reaction is active and is conserved when `k = 0`.
pub fn total_v_mass<T: Scalar>(state: &State<T>, ops: &CoupledOperators<T>) -> T {
    weighted_total(&state.v_micro.coeffs, &ops.wx, &ops.wy)
}

/// Largest step size for which the explicit nonlinear terms preserve the
/// nonnegativity/boundedness structure, with a safety factor of 0.9:
///
/// - macro sink:      `dt <= theta / (c_hat |Γ_R|)`
/// - micro transfer:  `dt <= min_k wy_k / (c_hat ly_k)` over interface nodes
///   (`ly` the lumped interface weights)
/// - reaction decay of `u`: `dt <= 1 / (k c_R Q_m)`
/// - reaction decay of `v`: `dt <= 1 / (alpha k c_Q R_m)`
///
/// `m2`, `m3` are the field bounds that feed the reaction factor maxima.
/// Returns infinity when no constraint applies (`b = 0` and `k = 0`).
pub fn stable_dt<T: Scalar>(params: &ModelParams<T>, ops: &CoupledOperators<T>, m2: T, m3: T) -> T {
    let mut dt = T::infinity();
    let c_hat = params.b.lipschitz();
    if c_hat > T::zero() {
        dt = dt.min(params.theta / (c_hat * ops.gamma_len));
        for (k, &ly) in ops.gamma_weights.iter().enumerate() {
            if ly > T::zero() {
                dt = dt.min(ops.wy[k] / (c_hat * ly));
            }
        }
    }
    if params.k > T::zero() {
        let (r_m, q_m) =
            crate::model::reaction_max_factors(&params.r_factor, &params.q_factor, m2, m3);
        let c_r = params.r_factor.lipschitz();
        let c_q = params.q_factor.lipschitz();
        if q_m > T::zero() {
            dt = dt.min(T::one() / (params.k * c_r * q_m));
        }
        if r_m > T::zero() {
            dt = dt.min(T::one() / (params.alpha * params.k * c_q * r_m));
        }
    }
    dt * T::cst(0.9)
}
