//! Space-time error norms of a trajectory against a registered exact
//! solution.
//!
//! Per step the macro error is quadratured directly (degree 6); the micro
//! errors expand `‖u_h - u‖² = ‖u_h‖² - 2 (u_h, u) + ‖u‖²`, where the first
//! term is an exact Kronecker contraction of the coefficients, the cross
//! term contracts the coefficients against precomputed degree-6 load vectors
//! of the separable exact factors, and the last term is a scalar profile.
//! Accumulated values are `Σ_n dt ‖e(t_n)‖²` over the steps `n >= 1`.

use std::sync::Arc;

use crate::coupling::CoupledOperators;
use crate::fem::quad::tri_quad;
use crate::fem::{assemble_gradient_load, assemble_load, P1Space};
use crate::scalar::{pairwise_sum, Scalar};
use crate::solver::{Observer, State};
use crate::twoscale::{kron_quadratic_form, weighted_total, DenseMat};
use crate::verify::mms::{ExactSolution, SpaceFactor};

/// Completed space-time error norms.
#[derive(Clone, Copy, Debug)]
pub struct SpaceTimeErrors<T> {
    /// `‖U - U_h‖` in `L2(S; H1(Ω))`
    pub macro_h1: T,
    /// `‖U - U_h‖` in `L2(S; L2(Ω))`
    pub macro_l2: T,
    /// `‖u - u_h‖` in `L2(S; L2(Ω; H1(Y)))`
    pub micro_u_energy: T,
    pub micro_u_l2: T,
    pub micro_v_energy: T,
    pub micro_v_l2: T,
}

impl<T: Scalar> SpaceTimeErrors<T> {
    /// `e_U² + e_u² + e_v²` in the energy norms entering the `h²` bound.
    pub fn combined_energy_sq(&self) -> T {
        self.macro_h1 * self.macro_h1
            + self.micro_u_energy * self.micro_u_energy
            + self.micro_v_energy * self.micro_v_energy
    }
}

struct MacroQpt<T> {
    verts: [usize; 3],
    hat: [T; 3],
    grads: [[T; 2]; 3],
    w_area: T,
    x: [T; 2],
}

/// Degree-6 L2 norm squared of a space factor.
pub fn l2_norm_sq<T: Scalar>(space: &P1Space<T>, factor: &SpaceFactor<T>) -> T {
    quad_sq(space, |x| {
        let v = factor.eval(x);
        v * v
    })
}

/// Degree-6 full H1 norm squared of a space factor.
pub fn h1_norm_sq<T: Scalar>(space: &P1Space<T>, factor: &SpaceFactor<T>) -> T {
    quad_sq(space, |x| {
        let v = factor.eval(x);
        let g = (factor.grad)(x);
        v * v + g[0] * g[0] + g[1] * g[1]
    })
}

/// Degree-6 full H2 norm squared (L2 + gradient + Frobenius Hessian).
pub fn h2_norm_sq<T: Scalar>(space: &P1Space<T>, factor: &SpaceFactor<T>) -> T {
    quad_sq(space, |x| {
        let v = factor.eval(x);
        let g = (factor.grad)(x);
        let h = (factor.hess)(x);
        let two = T::cst(2.0);
        v * v + g[0] * g[0] + g[1] * g[1] + h[0] * h[0] + two * h[1] * h[1] + h[2] * h[2]
    })
}

fn quad_sq<T: Scalar>(space: &P1Space<T>, integrand: impl Fn([T; 2]) -> T) -> T {
    let mesh = &space.mesh;
    let rule = tri_quad::<T>(6);
    let per_tri: Vec<T> = (0..mesh.n_triangles())
        .map(|ti| {
            let t = mesh.triangles[ti];
            let area = mesh.triangle_area(ti);
            let pa = mesh.vertices[t[0]];
            let pb = mesh.vertices[t[1]];
            let pc = mesh.vertices[t[2]];
            let mut acc = T::zero();
            for &(l, w) in &rule.points {
                let x = [
                    l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                    l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
                ];
                acc += w * area * integrand(x);
            }
            acc
        })
        .collect();
    pairwise_sum(&per_tri)
}

/// Observer that accumulates the six space-time error norms of a run.
pub struct ErrorAccumulator<T> {
    exact: ExactSolution<T>,
    dt: T,
    macro_qpts: Vec<MacroQpt<T>>,
    // degree-6 cross-term loads of the separable micro factors
    lx_u: Vec<T>,
    ly_u_l2: Vec<T>,
    ly_u_h1: Vec<T>,
    lx_v: Vec<T>,
    ly_v_l2: Vec<T>,
    ly_v_h1: Vec<T>,
    // exact norm profiles (scalars; time factors applied per step)
    phi_u_l2_sq: T,
    psi_u_l2_sq: T,
    psi_u_h1_sq: T,
    phi_v_l2_sq: T,
    psi_v_l2_sq: T,
    psi_v_h1_sq: T,
    sum_macro_h1_sq: T,
    sum_macro_l2_sq: T,
    sum_u_energy_sq: T,
    sum_u_l2_sq: T,
    sum_v_energy_sq: T,
    sum_v_l2_sq: T,
}

impl<T: Scalar> ErrorAccumulator<T> {
    pub fn new(
        exact: &ExactSolution<T>,
        macro_space: &Arc<P1Space<T>>,
        micro_space: &Arc<P1Space<T>>,
        dt: T,
    ) -> Self {
        let mesh = &macro_space.mesh;
        let rule = tri_quad::<T>(6);
        let mut macro_qpts = Vec::with_capacity(mesh.n_triangles() * rule.points.len());
        for ti in 0..mesh.n_triangles() {
            let t = mesh.triangles[ti];
            let (grads, area) = crate::fem::tri_gradients(mesh, ti);
            let pa = mesh.vertices[t[0]];
            let pb = mesh.vertices[t[1]];
            let pc = mesh.vertices[t[2]];
            for &(l, w) in &rule.points {
                macro_qpts.push(MacroQpt {
                    verts: t,
                    hat: l,
                    grads,
                    w_area: w * area,
                    x: [
                        l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                        l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
                    ],
                });
            }
        }

        let phi_u = &exact.micro_u.macro_f;
        let psi_u = &exact.micro_u.micro_f;
        let phi_v = &exact.micro_v.macro_f;
        let psi_v = &exact.micro_v.micro_f;
        let load_l2 = |space: &Arc<P1Space<T>>, f: &SpaceFactor<T>| {
            let f = f.clone();
            assemble_load(space, move |p| f.eval(p), 6)
        };
        let load_h1 = |space: &Arc<P1Space<T>>, f: &SpaceFactor<T>| {
            let fc = f.clone();
            let mut l = assemble_load(space, move |p| fc.eval(p), 6);
            let fg = f.clone();
            let lg = assemble_gradient_load(space, move |p| (fg.grad)(p), 6);
            for (a, b) in l.iter_mut().zip(lg) {
                *a += b;
            }
            l
        };

        ErrorAccumulator {
            exact: exact.clone(),
            dt,
            macro_qpts,
            lx_u: load_l2(macro_space, phi_u),
            ly_u_l2: load_l2(micro_space, psi_u),
            ly_u_h1: load_h1(micro_space, psi_u),
            lx_v: load_l2(macro_space, phi_v),
            ly_v_l2: load_l2(micro_space, psi_v),
            ly_v_h1: load_h1(micro_space, psi_v),
            phi_u_l2_sq: l2_norm_sq(macro_space, phi_u),
            psi_u_l2_sq: l2_norm_sq(micro_space, psi_u),
            psi_u_h1_sq: h1_norm_sq(micro_space, psi_u),
            phi_v_l2_sq: l2_norm_sq(macro_space, phi_v),
            psi_v_l2_sq: l2_norm_sq(micro_space, psi_v),
            psi_v_h1_sq: h1_norm_sq(micro_space, psi_v),
            sum_macro_h1_sq: T::zero(),
            sum_macro_l2_sq: T::zero(),
            sum_u_energy_sq: T::zero(),
            sum_u_l2_sq: T::zero(),
            sum_v_energy_sq: T::zero(),
            sum_v_l2_sq: T::zero(),
        }
    }

    fn macro_error_sq(&self, coeffs: &[T], t: T) -> (T, T) {
        let mut l2 = T::zero();
        let mut h1 = T::zero();
        for q in &self.macro_qpts {
            let mut uh = T::zero();
            let mut guh = [T::zero(), T::zero()];
            for i in 0..3 {
                let c = coeffs[q.verts[i]];
                uh += q.hat[i] * c;
                guh[0] += c * q.grads[i][0];
                guh[1] += c * q.grads[i][1];
            }
            let ue = self.exact.macro_eval(t, q.x);
            let gue = self.exact.macro_grad(t, q.x);
            let dv = uh - ue;
            let dg = [guh[0] - gue[0], guh[1] - gue[1]];
            l2 += q.w_area * dv * dv;
            h1 += q.w_area * (dg[0] * dg[0] + dg[1] * dg[1]);
        }
        (l2, l2 + h1)
    }

    #[allow(clippy::too_many_arguments)]
    fn micro_error_sq(
        &self,
        coeffs: &DenseMat<T>,
        ops: &CoupledOperators<T>,
        time_val: T,
        lx: &[T],
        ly_l2: &[T],
        ly_h1: &[T],
        phi_l2_sq: T,
        psi_l2_sq: T,
        psi_h1_sq: T,
    ) -> (T, T) {
        let qh_l2 = kron_quadratic_form(coeffs, &ops.mass_x, &ops.mass_y).unwrap();
        let qh_semi = kron_quadratic_form(coeffs, &ops.mass_x, &ops.stiffness_y).unwrap();
        let cross_l2 = time_val * weighted_total(coeffs, lx, ly_l2);
        let cross_h1 = time_val * weighted_total(coeffs, lx, ly_h1);
        let exact_l2 = time_val * time_val * phi_l2_sq * psi_l2_sq;
        let exact_h1 = time_val * time_val * phi_l2_sq * psi_h1_sq;
        let two = T::cst(2.0);
        let e_l2 = (qh_l2 - two * cross_l2 + exact_l2).max(T::zero());
        let e_h1 = (qh_l2 + qh_semi - two * cross_h1 + exact_h1).max(T::zero());
        (e_l2, e_h1)
    }

    pub fn finalize(&self) -> SpaceTimeErrors<T> {
        SpaceTimeErrors {
            macro_h1: self.sum_macro_h1_sq.max(T::zero()).sqrt(),
            macro_l2: self.sum_macro_l2_sq.max(T::zero()).sqrt(),
            micro_u_energy: self.sum_u_energy_sq.max(T::zero()).sqrt(),
            micro_u_l2: self.sum_u_l2_sq.max(T::zero()).sqrt(),
            micro_v_energy: self.sum_v_energy_sq.max(T::zero()).sqrt(),
            micro_v_l2: self.sum_v_l2_sq.max(T::zero()).sqrt(),
        }
    }
}

impl<T: Scalar> Observer<T> for ErrorAccumulator<T> {
    fn observe(&mut self, step: usize, state: &State<T>, ops: &CoupledOperators<T>) {
        if step == 0 {
            return;
        }
        let t = state.t;
        let expected = self.dt * T::of_usize(step);
        assert!(
            (t - expected).abs() <= T::cst(1e-9) * T::one().max(expected),
            "trajectory time grid does not match the accumulator step size"
        );
        let (l2, h1) = self.macro_error_sq(&state.u_macro, t);
        self.sum_macro_l2_sq += self.dt * l2;
        self.sum_macro_h1_sq += self.dt * h1;

        let su = self.exact.micro_u.time.eval(t);
        let (ul2, uh1) = self.micro_error_sq(
            &state.u_micro.coeffs,
            ops,
            su,
            &self.lx_u,
            &self.ly_u_l2,
            &self.ly_u_h1,
            self.phi_u_l2_sq,
            self.psi_u_l2_sq,
            self.psi_u_h1_sq,
        );
        self.sum_u_l2_sq += self.dt * ul2;
        self.sum_u_energy_sq += self.dt * uh1;

        let sv = self.exact.micro_v.time.eval(t);
        let (vl2, vh1) = self.micro_error_sq(
            &state.v_micro.coeffs,
            ops,
            sv,
            &self.lx_v,
            &self.ly_v_l2,
            &self.ly_v_h1,
            self.phi_v_l2_sq,
            self.psi_v_l2_sq,
            self.psi_v_h1_sq,
        );
        self.sum_v_l2_sq += self.dt * vl2;
        self.sum_v_energy_sq += self.dt * vh1;
    }
}
