//! Manufactured solutions and their forcing terms.
//!
//! Exact solutions are tensor-separable products of a time factor, a macro
//! space factor and (for the micro fields) a micro space factor, each with
//! analytic derivatives. Separability is what makes the per-step forcing
//! loads cheap: every bulk term of the forcing is a scalar time/macro
//! coefficient times a fixed micro load vector assembled once per mesh
//! level. Only the interface-transfer terms, which are nonlinear in mixed
//! arguments, are quadratured per step, and those integrals are
//! one-dimensional.
//!
//! A manufactured micro solution has no reason to satisfy the interface flux
//! conditions, so the weak-form residual fluxes (`d ∂_n u` minus the
//! transfer term on the reactive part, `d ∂_n` alone elsewhere) are added as
//! boundary forcing loads; this path is on by default.

use std::collections::HashMap;
use std::sync::Arc;

use crate::fem::quad::{gauss1d, tri_quad};
use crate::fem::{assemble_load, P1Space};
use crate::model::{FieldFn, GradFieldFn, ModelParams, ReactionFactorFn, TimeFn, TransferFn};
use crate::scalar::Scalar;
use crate::solver::Forcing;

pub type HessFn<T> = Arc<dyn Fn([T; 2]) -> [T; 3] + Send + Sync>;

/// Scalar factor of time with its derivative.
#[derive(Clone)]
pub struct TimeFactor<T> {
    pub f: TimeFn<T>,
    pub df: TimeFn<T>,
}

impl<T: Scalar> TimeFactor<T> {
    pub fn constant(c: T) -> Self {
        TimeFactor {
            f: Arc::new(move |_| c),
            df: Arc::new(|_| T::zero()),
        }
    }

    /// `a + b t`
    pub fn linear(a: T, b: T) -> Self {
        TimeFactor {
            f: Arc::new(move |t| a + b * t),
            df: Arc::new(move |_| b),
        }
    }

    /// `exp(-rate t)`
    pub fn exp_decay(rate: T) -> Self {
        TimeFactor {
            f: Arc::new(move |t| (-rate * t).exp()),
            df: Arc::new(move |t| -rate * (-rate * t).exp()),
        }
    }

    pub fn eval(&self, t: T) -> T {
        (self.f)(t)
    }

    pub fn deriv(&self, t: T) -> T {
        (self.df)(t)
    }
}

/// Scalar factor of one 2D variable with analytic gradient and Hessian
/// (`[f_xx, f_xy, f_yy]`).
#[derive(Clone)]
pub struct SpaceFactor<T> {
    pub f: FieldFn<T>,
    pub grad: GradFieldFn<T>,
    pub hess: HessFn<T>,
}

/// Trigonometric profile along one axis.
#[derive(Clone, Copy, Debug)]
pub enum AxisTrig {
    /// `sin(pi s)`
    Sin,
    /// `cos(pi s)`
    Cos,
}

impl AxisTrig {
    fn eval<T: Scalar>(self, s: T) -> T {
        match self {
            AxisTrig::Sin => (T::PI() * s).sin(),
            AxisTrig::Cos => (T::PI() * s).cos(),
        }
    }

    fn d1<T: Scalar>(self, s: T) -> T {
        let pi = T::PI();
        match self {
            AxisTrig::Sin => pi * (pi * s).cos(),
            AxisTrig::Cos => -pi * (pi * s).sin(),
        }
    }

    fn d2<T: Scalar>(self, s: T) -> T {
        -T::PI() * T::PI() * self.eval(s)
    }
}

impl<T: Scalar> SpaceFactor<T> {
    pub fn from_parts(f: FieldFn<T>, grad: GradFieldFn<T>, hess: HessFn<T>) -> Self {
        SpaceFactor { f, grad, hess }
    }

    pub fn constant(c: T) -> Self {
        SpaceFactor {
            f: Arc::new(move |_| c),
            grad: Arc::new(|_| [T::zero(), T::zero()]),
            hess: Arc::new(|_| [T::zero(), T::zero(), T::zero()]),
        }
    }

    /// `offset + amp * X(p0) * Y(p1)` with trigonometric axis profiles.
    pub fn trig(offset: T, amp: T, ax0: AxisTrig, ax1: AxisTrig) -> Self {
        SpaceFactor {
            f: Arc::new(move |p| offset + amp * ax0.eval(p[0]) * ax1.eval(p[1])),
            grad: Arc::new(move |p| {
                [
                    amp * ax0.d1(p[0]) * ax1.eval(p[1]),
                    amp * ax0.eval(p[0]) * ax1.d1(p[1]),
                ]
            }),
            hess: Arc::new(move |p| {
                [
                    amp * ax0.d2(p[0]) * ax1.eval(p[1]),
                    amp * ax0.d1(p[0]) * ax1.d1(p[1]),
                    amp * ax0.eval(p[0]) * ax1.d2(p[1]),
                ]
            }),
        }
    }

    pub fn eval(&self, p: [T; 2]) -> T {
        (self.f)(p)
    }

    pub fn laplacian(&self, p: [T; 2]) -> T {
        let h = (self.hess)(p);
        h[0] + h[2]
    }
}

/// `g(t) Φ(x)`
#[derive(Clone)]
pub struct SeparableField<T> {
    pub time: TimeFactor<T>,
    pub space: SpaceFactor<T>,
}

impl<T: Scalar> SeparableField<T> {
    pub fn zero() -> Self {
        SeparableField {
            time: TimeFactor::constant(T::zero()),
            space: SpaceFactor::constant(T::zero()),
        }
    }

    pub fn eval(&self, t: T, x: [T; 2]) -> T {
        self.time.eval(t) * self.space.eval(x)
    }

    pub fn dt(&self, t: T, x: [T; 2]) -> T {
        self.time.deriv(t) * self.space.eval(x)
    }

    pub fn grad(&self, t: T, x: [T; 2]) -> [T; 2] {
        let g = (self.space.grad)(x);
        let s = self.time.eval(t);
        [s * g[0], s * g[1]]
    }
}

/// `g(t) Φ(x) Ψ(y)`
#[derive(Clone)]
pub struct SeparableTwoScale<T> {
    pub time: TimeFactor<T>,
    pub macro_f: SpaceFactor<T>,
    pub micro_f: SpaceFactor<T>,
}

impl<T: Scalar> SeparableTwoScale<T> {
    pub fn zero() -> Self {
        SeparableTwoScale {
            time: TimeFactor::constant(T::zero()),
            macro_f: SpaceFactor::constant(T::zero()),
            micro_f: SpaceFactor::constant(T::zero()),
        }
    }

    pub fn eval(&self, t: T, x: [T; 2], y: [T; 2]) -> T {
        self.time.eval(t) * self.macro_f.eval(x) * self.micro_f.eval(y)
    }

    pub fn dt(&self, t: T, x: [T; 2], y: [T; 2]) -> T {
        self.time.deriv(t) * self.macro_f.eval(x) * self.micro_f.eval(y)
    }

    pub fn grad_y(&self, t: T, x: [T; 2], y: [T; 2]) -> [T; 2] {
        let s = self.time.eval(t) * self.macro_f.eval(x);
        let g = (self.micro_f.grad)(y);
        [s * g[0], s * g[1]]
    }
}

/// Exact solution triple. The macro concentration is `u_lift + u_ext` where
/// the lift has zero trace on the macro boundary and `u_ext` doubles as the
/// Dirichlet datum (defined on all of the macro domain), so the data are
/// compatible by construction.
#[derive(Clone)]
pub struct ExactSolution<T> {
    pub u_lift: SeparableField<T>,
    pub u_ext: SeparableField<T>,
    pub micro_u: SeparableTwoScale<T>,
    pub micro_v: SeparableTwoScale<T>,
}

impl<T: Scalar> ExactSolution<T> {
    pub fn macro_eval(&self, t: T, x: [T; 2]) -> T {
        self.u_lift.eval(t, x) + self.u_ext.eval(t, x)
    }

    pub fn macro_grad(&self, t: T, x: [T; 2]) -> [T; 2] {
        let a = self.u_lift.grad(t, x);
        let b = self.u_ext.grad(t, x);
        [a[0] + b[0], a[1] + b[1]]
    }

    /// Install the boundary and initial data this solution induces.
    pub fn install_data(&self, params: &mut ModelParams<T>) {
        let ext = self.u_ext.clone();
        params.u_ext = Arc::new(move |t, x| ext.eval(t, x));
        let me = self.clone();
        params.macro_init = Arc::new(move |x| me.macro_eval(T::zero(), x));
        let mu = self.micro_u.clone();
        params.micro_u_init = Arc::new(move |x, y| mu.eval(T::zero(), x, y));
        let mv = self.micro_v.clone();
        params.micro_v_init = Arc::new(move |x, y| mv.eval(T::zero(), x, y));
    }
}

/// Fully coupled smooth solution, strictly positive in all three fields
/// (so `eta(u, v) = u v` under positive-part reaction factors, which keeps
/// the reaction forcing separable).
pub fn coupled_trig<T: Scalar>() -> ExactSolution<T> {
    let half = T::cst(0.5);
    ExactSolution {
        u_lift: SeparableField {
            time: TimeFactor::linear(T::one(), half),
            space: SpaceFactor::trig(T::zero(), T::one(), AxisTrig::Sin, AxisTrig::Sin),
        },
        u_ext: SeparableField {
            time: TimeFactor::linear(T::one(), T::cst(0.25)),
            space: SpaceFactor::constant(T::one()),
        },
        micro_u: SeparableTwoScale {
            time: TimeFactor::linear(T::one(), half),
            macro_f: SpaceFactor::trig(T::one(), half, AxisTrig::Sin, AxisTrig::Sin),
            micro_f: SpaceFactor::trig(T::one(), half, AxisTrig::Cos, AxisTrig::Cos),
        },
        micro_v: SeparableTwoScale {
            time: TimeFactor::exp_decay(half),
            macro_f: SpaceFactor::trig(T::one(), half, AxisTrig::Cos, AxisTrig::Sin),
            micro_f: SpaceFactor::trig(T::one(), half, AxisTrig::Sin, AxisTrig::Cos),
        },
    }
}

/// Macro heat equation alone (zero micro fields, homogeneous Dirichlet);
/// pair with `b = 0`, `k = 0`.
pub fn heat_only<T: Scalar>() -> ExactSolution<T> {
    ExactSolution {
        u_lift: SeparableField {
            time: TimeFactor::linear(T::one(), T::one()),
            space: SpaceFactor::trig(T::zero(), T::one(), AxisTrig::Sin, AxisTrig::Sin),
        },
        u_ext: SeparableField::zero(),
        micro_u: SeparableTwoScale::zero(),
        micro_v: SeparableTwoScale::zero(),
    }
}

struct MacroQpt<T> {
    verts: [usize; 3],
    hat: [T; 3],
    w_area: T,
    phi_lift: T,
    phi_ext: T,
    phi_u: T,
}

struct GammaQpt<T> {
    p: usize,
    q: usize,
    hat_p: T,
    hat_q: T,
    /// gauss weight times edge length
    w: T,
    psi_u: T,
}

struct MicroQpt<T> {
    verts: [usize; 3],
    hat: [T; 3],
    w_area: T,
    psi_u: T,
    psi_v: T,
}

/// Forcing loads that make the semi-discrete system reproduce a registered
/// exact solution. Built once per mesh pair; per-step work is a handful of
/// scaled vector additions plus the one-dimensional interface quadratures.
pub struct MmsForcing<T> {
    theta: T,
    d_macro: T,
    d1: T,
    d2: T,
    k: T,
    alpha: T,
    b: TransferFn<T>,
    r_factor: ReactionFactorFn<T>,
    q_factor: ReactionFactorFn<T>,
    exact: ExactSolution<T>,
    // macro side
    lx_lift: Vec<T>,
    lx_lift_lap: Vec<T>,
    lx_ext: Vec<T>,
    lx_ext_lap: Vec<T>,
    macro_qpts: Vec<MacroQpt<T>>,
    // micro side
    ly_u: Vec<T>,
    ly_u_lap: Vec<T>,
    ly_v: Vec<T>,
    ly_v_lap: Vec<T>,
    ly_uv: Vec<T>,
    /// boundary loads of the normal flux of the micro profiles over the
    /// whole micro boundary
    lb_u: Vec<T>,
    lb_v: Vec<T>,
    gamma_qpts: Vec<GammaQpt<T>>,
    micro_qpts: Vec<MicroQpt<T>>,
    /// nodal macro-profile values
    phi_lift_nodes: Vec<T>,
    phi_ext_nodes: Vec<T>,
    phi_u_nodes: Vec<T>,
    phi_v_nodes: Vec<T>,
    /// reaction loads stay separable only for positive-part factors applied
    /// to positive solutions; otherwise quadrature the reaction per call
    separable_reaction: bool,
}

/// Boundary load of the outward normal flux `s ↦ grad(s) · n` over every
/// boundary edge of the mesh.
fn normal_flux_load<T: Scalar>(space: &P1Space<T>, factor: &SpaceFactor<T>) -> Vec<T> {
    let mesh = &space.mesh;
    // owner triangle of each boundary edge, for the outward direction
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (a.min(b), a.max(b));
            owner.entry(key).or_insert(ti);
        }
    }
    let rule = gauss1d::<T>(4);
    let mut load = vec![T::zero(); space.n_dof()];
    for e in &mesh.boundary_edges {
        let [p, q] = e.vertices;
        let pa = mesh.vertices[p];
        let pb = mesh.vertices[q];
        let ti = owner[&(p.min(q), p.max(q))];
        let third = mesh.triangles[ti]
            .iter()
            .copied()
            .find(|&v| v != p && v != q)
            .unwrap();
        let pc = mesh.vertices[third];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let mut n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let mid = [(pa[0] + pb[0]) * T::cst(0.5), (pa[1] + pb[1]) * T::cst(0.5)];
        if n[0] * (mid[0] - pc[0]) + n[1] * (mid[1] - pc[1]) < T::zero() {
            n = [-n[0], -n[1]];
        }
        for &(s, w) in &rule {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let g = (factor.grad)(x);
            let flux = (g[0] * n[0] + g[1] * n[1]) * w * len;
            load[p] += flux * (T::one() - s);
            load[q] += flux * s;
        }
    }
    load
}

pub fn mms_forcing<T: Scalar>(
    exact: &ExactSolution<T>,
    params: &ModelParams<T>,
    macro_space: &Arc<P1Space<T>>,
    micro_space: &Arc<P1Space<T>>,
) -> MmsForcing<T> {
    let lift = &exact.u_lift.space;
    let ext = &exact.u_ext.space;
    let phi_u = &exact.micro_u.macro_f;
    let phi_v = &exact.micro_v.macro_f;
    let psi_u = &exact.micro_u.micro_f;
    let psi_v = &exact.micro_v.micro_f;

    let rule = tri_quad::<T>(4);
    let mm = &macro_space.mesh;
    let mut macro_qpts = Vec::with_capacity(mm.n_triangles() * rule.points.len());
    for (ti, t) in mm.triangles.iter().enumerate() {
        let area = mm.triangle_area(ti);
        let pa = mm.vertices[t[0]];
        let pb = mm.vertices[t[1]];
        let pc = mm.vertices[t[2]];
        for &(l, w) in &rule.points {
            let x = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            macro_qpts.push(MacroQpt {
                verts: *t,
                hat: l,
                w_area: w * area,
                phi_lift: lift.eval(x),
                phi_ext: ext.eval(x),
                phi_u: phi_u.eval(x),
            });
        }
    }

    let ym = &micro_space.mesh;
    let mut micro_qpts = Vec::with_capacity(ym.n_triangles() * rule.points.len());
    for (ti, t) in ym.triangles.iter().enumerate() {
        let area = ym.triangle_area(ti);
        let pa = ym.vertices[t[0]];
        let pb = ym.vertices[t[1]];
        let pc = ym.vertices[t[2]];
        for &(l, w) in &rule.points {
            let y = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            micro_qpts.push(MicroQpt {
                verts: *t,
                hat: l,
                w_area: w * area,
                psi_u: psi_u.eval(y),
                psi_v: psi_v.eval(y),
            });
        }
    }

    let edge_rule = gauss1d::<T>(4);
    let mut gamma_qpts = Vec::new();
    for e in ym
        .boundary_edges
        .iter()
        .filter(|e| e.tag == crate::mesh::BoundaryTag::GammaR)
    {
        let [p, q] = e.vertices;
        let pa = ym.vertices[p];
        let pb = ym.vertices[q];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for &(s, w) in &edge_rule {
            let y = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            gamma_qpts.push(GammaQpt {
                p,
                q,
                hat_p: T::one() - s,
                hat_q: s,
                w: w * len,
                psi_u: psi_u.eval(y),
            });
        }
    }

    let separable_reaction = matches!(params.r_factor, ReactionFactorFn::PositivePart)
        && matches!(params.q_factor, ReactionFactorFn::PositivePart);

    MmsForcing {
        theta: params.theta,
        d_macro: params.d_macro,
        d1: params.d1,
        d2: params.d2,
        k: params.k,
        alpha: params.alpha,
        b: params.b,
        r_factor: params.r_factor,
        q_factor: params.q_factor,
        exact: exact.clone(),
        lx_lift: assemble_load(macro_space, |p| lift.eval(p), 4),
        lx_lift_lap: assemble_load(macro_space, |p| lift.laplacian(p), 4),
        lx_ext: assemble_load(macro_space, |p| ext.eval(p), 4),
        lx_ext_lap: assemble_load(macro_space, |p| ext.laplacian(p), 4),
        macro_qpts,
        ly_u: assemble_load(micro_space, |p| psi_u.eval(p), 4),
        ly_u_lap: assemble_load(micro_space, |p| psi_u.laplacian(p), 4),
        ly_v: assemble_load(micro_space, |p| psi_v.eval(p), 4),
        ly_v_lap: assemble_load(micro_space, |p| psi_v.laplacian(p), 4),
        ly_uv: assemble_load(micro_space, |p| psi_u.eval(p) * psi_v.eval(p), 4),
        lb_u: normal_flux_load(micro_space, psi_u),
        lb_v: normal_flux_load(micro_space, psi_v),
        gamma_qpts,
        micro_qpts,
        phi_lift_nodes: mm.vertices.iter().map(|&x| lift.eval(x)).collect(),
        phi_ext_nodes: mm.vertices.iter().map(|&x| ext.eval(x)).collect(),
        phi_u_nodes: mm.vertices.iter().map(|&x| phi_u.eval(x)).collect(),
        phi_v_nodes: mm.vertices.iter().map(|&x| phi_v.eval(x)).collect(),
        separable_reaction,
    }
}

impl<T: Scalar> Forcing<T> for MmsForcing<T> {
    /// `∫ f_U ξ_j` with
    /// `f_U = θ ∂_t U - D ΔU + ∫_{Γ_R} b(U - u) dλ_y`.
    fn macro_load(&self, t: T, out: &mut [T]) {
        let g0 = self.exact.u_lift.time.eval(t);
        let dg0 = self.exact.u_lift.time.deriv(t);
        let ge = self.exact.u_ext.time.eval(t);
        let dge = self.exact.u_ext.time.deriv(t);
        let su = self.exact.micro_u.time.eval(t);
        for i in 0..out.len() {
            out[i] = self.theta * (dg0 * self.lx_lift[i] + dge * self.lx_ext[i])
                - self.d_macro * (g0 * self.lx_lift_lap[i] + ge * self.lx_ext_lap[i]);
        }
        if self.b.is_zero() || self.gamma_qpts.is_empty() {
            return;
        }
        for q in &self.macro_qpts {
            let u_here = g0 * q.phi_lift + ge * q.phi_ext;
            let cu = su * q.phi_u;
            let mut transfer = T::zero();
            for g in &self.gamma_qpts {
                transfer += g.w * self.b.eval(u_here - cu * g.psi_u);
            }
            let scaled = q.w_area * transfer;
            for i in 0..3 {
                out[q.verts[i]] += scaled * q.hat[i];
            }
        }
    }

    /// Micro load of `f_u = ∂_t u - d1 Δ_y u + k η(u, v)` plus the boundary
    /// residual `d1 ∂_n u` on the whole boundary and `-b(U - u)` on the
    /// reactive part.
    fn micro_u_load(&self, t: T, j: usize, out: &mut [T]) {
        let su = self.exact.micro_u.time.eval(t);
        let dsu = self.exact.micro_u.time.deriv(t);
        let sv = self.exact.micro_v.time.eval(t);
        let phi_uj = self.phi_u_nodes[j];
        let phi_vj = self.phi_v_nodes[j];
        let c_dt = dsu * phi_uj;
        let c_lap = self.d1 * su * phi_uj;
        let c_flux = self.d1 * su * phi_uj;
        for m in 0..out.len() {
            out[m] = c_dt * self.ly_u[m] - c_lap * self.ly_u_lap[m] + c_flux * self.lb_u[m];
        }
        self.add_reaction_load(self.k, su, sv, phi_uj, phi_vj, out);
        if self.b.is_zero() {
            return;
        }
        let g0 = self.exact.u_lift.time.eval(t);
        let ge = self.exact.u_ext.time.eval(t);
        let u_here = g0 * self.phi_lift_nodes[j] + ge * self.phi_ext_nodes[j];
        let cu = su * phi_uj;
        for g in &self.gamma_qpts {
            let bval = g.w * self.b.eval(u_here - cu * g.psi_u);
            out[g.p] -= bval * g.hat_p;
            out[g.q] -= bval * g.hat_q;
        }
    }

    /// Micro load of `f_v = ∂_t v - d2 Δ_y v + α k η(u, v)` plus the
    /// homogeneous-Neumann residual `d2 ∂_n v` on the whole boundary.
    fn micro_v_load(&self, t: T, j: usize, out: &mut [T]) {
        let su = self.exact.micro_u.time.eval(t);
        let sv = self.exact.micro_v.time.eval(t);
        let dsv = self.exact.micro_v.time.deriv(t);
        let phi_uj = self.phi_u_nodes[j];
        let phi_vj = self.phi_v_nodes[j];
        let c_dt = dsv * phi_vj;
        let c_lap = self.d2 * sv * phi_vj;
        let c_flux = self.d2 * sv * phi_vj;
        for m in 0..out.len() {
            out[m] = c_dt * self.ly_v[m] - c_lap * self.ly_v_lap[m] + c_flux * self.lb_v[m];
        }
        self.add_reaction_load(self.alpha * self.k, su, sv, phi_uj, phi_vj, out);
    }
}

impl<T: Scalar> MmsForcing<T> {
    fn add_reaction_load(&self, coef: T, su: T, sv: T, phi_uj: T, phi_vj: T, out: &mut [T]) {
        if self.k == T::zero() {
            return;
        }
        if self.separable_reaction {
            // eta(u, v) = u v for strictly positive manufactured solutions
            let c = coef * su * sv * phi_uj * phi_vj;
            for m in 0..out.len() {
                out[m] += c * self.ly_uv[m];
            }
        } else {
            let cu = su * phi_uj;
            let cv = sv * phi_vj;
            for q in &self.micro_qpts {
                let eta = self.r_factor.eval(cu * q.psi_u) * self.q_factor.eval(cv * q.psi_v);
                let scaled = coef * q.w_area * eta;
                for i in 0..3 {
                    out[q.verts[i]] += scaled * q.hat[i];
                }
            }
        }
    }
}
