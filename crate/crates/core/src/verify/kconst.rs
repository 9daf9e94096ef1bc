//! Estimate of the constant in the `h²` error bound from the fitted
//! interpolation constants and the space-time norms of the exact solution:
//!
//! `K = (γ3/2)(‖u‖²_X + ‖v‖²_X) + (γ1 θ/2) ‖U0‖²
//!      + 3 k γ3 (1+α)(Q_m c_R + R_m c_Q)(‖u‖²_X + ‖v‖²_X)`
//!
//! where `X` couples `L2(S; L2(Ω; H2(Y)))` with `L2(S; L2(Y; H2(Ω)))` (the
//! intersection norm is taken as the larger of the two), `‖U0‖` is the
//! `L2(S; H2(Ω))` norm of the lifted macro solution, and `R_m`, `Q_m` are
//! the reaction factor maxima over the solution bounds.

use std::sync::Arc;

use crate::fem::quad::gauss1d;
use crate::fem::P1Space;
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::verify::errors::{h2_norm_sq, l2_norm_sq};
use crate::verify::mms::{ExactSolution, TimeFactor};

/// Space-time norms of the exact solution entering the bound constant.
#[derive(Clone, Copy, Debug)]
pub struct ExactNorms<T> {
    /// `‖u‖²_X`
    pub u_x_sq: T,
    /// `‖v‖²_X`
    pub v_x_sq: T,
    /// `‖U0‖²` in `L2(S; H2(Ω))`
    pub lift_h2_sq: T,
}

/// `∫_0^T g(t)² dt` by composite Gauss quadrature.
fn time_l2_sq<T: Scalar>(g: &TimeFactor<T>, t_end: T, panels: usize) -> T {
    let rule = gauss1d::<T>(5);
    let width = t_end / T::of_usize(panels);
    let mut acc = T::zero();
    for p in 0..panels {
        let left = width * T::of_usize(p);
        for &(s, w) in &rule {
            let t = left + s * width;
            let v = g.eval(t);
            acc += w * width * v * v;
        }
    }
    acc
}

/// Quadrature the solution norms on the given spaces (used only for their
/// meshes; finer meshes give more accurate profiles).
pub fn exact_space_time_norms<T: Scalar>(
    exact: &ExactSolution<T>,
    macro_space: &Arc<P1Space<T>>,
    micro_space: &Arc<P1Space<T>>,
    t_end: T,
) -> ExactNorms<T> {
    let panels = 8;
    let gu_sq = time_l2_sq(&exact.micro_u.time, t_end, panels);
    let gv_sq = time_l2_sq(&exact.micro_v.time, t_end, panels);
    let g0_sq = time_l2_sq(&exact.u_lift.time, t_end, panels);

    let mix = |two_macro: &super::mms::SpaceFactor<T>, two_micro: &super::mms::SpaceFactor<T>| {
        let a = l2_norm_sq(macro_space, two_macro) * h2_norm_sq(micro_space, two_micro);
        let b = h2_norm_sq(macro_space, two_macro) * l2_norm_sq(micro_space, two_micro);
        a.max(b)
    };
    ExactNorms {
        u_x_sq: gu_sq * mix(&exact.micro_u.macro_f, &exact.micro_u.micro_f),
        v_x_sq: gv_sq * mix(&exact.micro_v.macro_f, &exact.micro_v.micro_f),
        lift_h2_sq: g0_sq * h2_norm_sq(macro_space, &exact.u_lift.space),
    }
}

/// The bound constant. `r_m`, `q_m` come from the reaction factor maxima
/// over the solution bounds (`reaction_max_factors`).
pub fn estimate_k<T: Scalar>(
    norms: &ExactNorms<T>,
    params: &ModelParams<T>,
    gamma1: T,
    gamma3: T,
    r_m: T,
    q_m: T,
) -> T {
    let half = T::cst(0.5);
    let micro_sq = norms.u_x_sq + norms.v_x_sq;
    let c_r = params.r_factor.lipschitz();
    let c_q = params.q_factor.lipschitz();
    gamma3 * half * micro_sq
        + gamma1 * params.theta * half * norms.lift_h2_sq
        + T::cst(3.0)
            * params.k
            * gamma3
            * (T::one() + params.alpha)
            * (q_m * c_r + r_m * c_q)
            * micro_sq
}

/// Supremum of `|f|` sampled on the vertices of a mesh over a uniform time
/// grid; good enough to feed the bound constants for smooth data.
pub fn sampled_sup<T: Scalar>(
    f: impl Fn(T, [T; 2]) -> T,
    space: &Arc<P1Space<T>>,
    t_end: T,
    time_samples: usize,
) -> T {
    let mut sup = T::zero();
    for n in 0..=time_samples {
        let t = t_end * T::of_usize(n) / T::of_usize(time_samples.max(1));
        for &p in &space.mesh.vertices {
            sup = sup.max(f(t, p).abs());
        }
    }
    sup
}
