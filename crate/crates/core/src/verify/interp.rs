//! Measured convergence orders of the projection operators: the macro
//! energy projection in L2 and H1, and the tensor two-scale projection in
//! `L2(Ω; L2(Y))` and `L2(Ω; H1(Y))`. The fitted constants normalize the
//! errors by the H2-type norms of the test function, so they can feed the
//! error-bound estimate and the `h^2 max(gamma1, gamma3) < 1` sanity check.

use std::sync::Arc;

use crate::error::Result;
use crate::fem::{h1_error, h1_riesz_projection, l2_error, P1Space, RieszVariant};
use crate::mesh::{mesh_size, refine_uniform, Mesh2D};
use crate::scalar::Scalar;
use crate::twoscale::{
    kron_quadratic_form, micro_macro_riesz, weighted_total, SeparableTwoScaleFn,
};
use crate::verify::eoc::fit_log_slope;
use crate::verify::errors::{h1_norm_sq, h2_norm_sq, l2_norm_sq};
use crate::verify::mms::SpaceFactor;

#[derive(Clone, Copy, Debug)]
pub struct InterpLevel<T> {
    pub h: T,
    /// macro projection error in L2 (targets order 2)
    pub e_macro_l2: T,
    /// macro projection error in H1 (targets order 1)
    pub e_macro_h1: T,
    /// two-scale projection error in L2(Ω; L2(Y)) (targets order 2)
    pub e_two_l2: T,
    /// two-scale projection error in L2(Ω; H1(Y)) (targets order 1)
    pub e_two_h1y: T,
}

#[derive(Clone, Debug)]
pub struct InterpReport<T> {
    pub levels: Vec<InterpLevel<T>>,
    /// least-squares orders for the four error families
    pub rates: [T; 4],
    /// fitted constants: smallest `gamma` with `e <= gamma h^q norm` across
    /// the measured levels, `q` the theoretical order
    pub gammas: [T; 4],
    /// all errors at solver tolerance; rates are meaningless
    pub saturated: bool,
}

impl<T: Scalar> InterpReport<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,e_macro_l2,e_macro_h1,e_two_l2,e_two_h1y\n");
        for l in &self.levels {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                l.h, l.e_macro_l2, l.e_macro_h1, l.e_two_l2, l.e_two_h1y
            ));
        }
        out.push_str(&format!(
            "# rates,{},{},{},{}\n",
            self.rates[0], self.rates[1], self.rates[2], self.rates[3]
        ));
        out.push_str(&format!(
            "# gammas,{},{},{},{}\n",
            self.gammas[0], self.gammas[1], self.gammas[2], self.gammas[3]
        ));
        out
    }
}

/// Measure projection orders for a macro test function and a separable
/// two-scale test function over `levels` uniform refinements.
pub fn interpolation_rate_test<T: Scalar>(
    macro_fn: &SpaceFactor<T>,
    two_scale_macro: &SpaceFactor<T>,
    two_scale_micro: &SpaceFactor<T>,
    base_macro_mesh: &Mesh2D<T>,
    base_micro_mesh: &Mesh2D<T>,
    levels: usize,
) -> Result<InterpReport<T>> {
    let mut macro_mesh = base_macro_mesh.clone();
    let mut micro_mesh = base_micro_mesh.clone();
    let mut rows: Vec<InterpLevel<T>> = Vec::with_capacity(levels);
    let mut norm_macro_h2 = T::zero();
    let mut norm_two_mixed = T::zero();

    for level in 0..levels {
        if level > 0 {
            macro_mesh = refine_uniform(&macro_mesh);
            micro_mesh = refine_uniform(&micro_mesh);
        }
        let h = mesh_size(&macro_mesh).max(mesh_size(&micro_mesh));
        let macro_space = Arc::new(P1Space::new(Arc::new(macro_mesh.clone())));
        let micro_space = Arc::new(P1Space::new(Arc::new(micro_mesh.clone())));

        // macro energy projection
        let f = macro_fn.clone();
        let fg = macro_fn.clone();
        let coeffs = h1_riesz_projection(
            &macro_space,
            move |p| f.eval(p),
            move |p| (fg.grad)(p),
            RieszVariant::DirichletZero,
        )?;
        let fe = macro_fn.clone();
        let feg = macro_fn.clone();
        let e_macro_l2 = l2_error(&macro_space, &coeffs, |p| fe.eval(p), 6);
        let fe2 = macro_fn.clone();
        let e_macro_h1 = h1_error(&macro_space, &coeffs, |p| fe2.eval(p), |p| (feg.grad)(p), 6);

        // two-scale tensor projection
        let fx = two_scale_macro.clone();
        let fy = two_scale_micro.clone();
        let fyg = two_scale_micro.clone();
        let w = SeparableTwoScaleFn::single(
            Arc::new(move |p| fx.eval(p)),
            Arc::new(move |p| fy.eval(p)),
            Arc::new(move |p| (fyg.grad)(p)),
        );
        let field = micro_macro_riesz(&w, &macro_space, &micro_space)?;
        let ops_mx = crate::fem::assemble_mass(&macro_space);
        let ops_my = crate::fem::assemble_mass(&micro_space);
        let ops_ay = crate::fem::assemble_stiffness(&micro_space);
        let fx2 = two_scale_macro.clone();
        let lx = crate::fem::assemble_load(&macro_space, move |p| fx2.eval(p), 6);
        let fy2 = two_scale_micro.clone();
        let ly_l2 = crate::fem::assemble_load(&micro_space, move |p| fy2.eval(p), 6);
        let fy3 = two_scale_micro.clone();
        let ly_grad = crate::fem::assemble_gradient_load(&micro_space, move |p| (fy3.grad)(p), 6);
        let ly_h1: Vec<T> = ly_l2.iter().zip(&ly_grad).map(|(&a, &b)| a + b).collect();

        let phi_l2 = l2_norm_sq(&macro_space, two_scale_macro);
        let psi_l2 = l2_norm_sq(&micro_space, two_scale_micro);
        let psi_h1 = h1_norm_sq(&micro_space, two_scale_micro);

        let qh_l2 = kron_quadratic_form(&field.coeffs, &ops_mx, &ops_my)?;
        let qh_semi = kron_quadratic_form(&field.coeffs, &ops_mx, &ops_ay)?;
        let cross_l2 = weighted_total(&field.coeffs, &lx, &ly_l2);
        let cross_h1 = weighted_total(&field.coeffs, &lx, &ly_h1);
        let two = T::cst(2.0);
        let e_two_l2 = (qh_l2 - two * cross_l2 + phi_l2 * psi_l2)
            .max(T::zero())
            .sqrt();
        let e_two_h1y = (qh_l2 + qh_semi - two * cross_h1 + phi_l2 * psi_h1)
            .max(T::zero())
            .sqrt();

        rows.push(InterpLevel {
            h,
            e_macro_l2,
            e_macro_h1,
            e_two_l2,
            e_two_h1y,
        });

        if level == levels - 1 {
            // norms quadratured on the finest meshes
            norm_macro_h2 = h2_norm_sq(&macro_space, macro_fn).sqrt();
            let mixed_a = l2_norm_sq(&macro_space, two_scale_macro)
                * h2_norm_sq(&micro_space, two_scale_micro);
            let mixed_b = h2_norm_sq(&macro_space, two_scale_macro)
                * l2_norm_sq(&micro_space, two_scale_micro);
            norm_two_mixed = mixed_a.max(mixed_b).sqrt();
        }
    }

    let floor = T::cst(1e-11);
    let saturated = rows
        .iter()
        .all(|r| r.e_macro_l2 < floor && r.e_two_l2 < floor && r.e_macro_h1 < floor);

    let hs: Vec<T> = rows.iter().map(|r| r.h).collect();
    let pick = |sel: usize, r: &InterpLevel<T>| match sel {
        0 => r.e_macro_l2,
        1 => r.e_macro_h1,
        2 => r.e_two_l2,
        _ => r.e_two_h1y,
    };
    let mut rates = [T::zero(); 4];
    let mut gammas = [T::zero(); 4];
    for sel in 0..4 {
        let es: Vec<T> = rows.iter().map(|r| pick(sel, r)).collect();
        rates[sel] = if saturated {
            T::nan()
        } else {
            fit_log_slope(&hs, &es).0
        };
        let (order, norm) = match sel {
            0 => (2, norm_macro_h2),
            1 => (1, norm_macro_h2),
            2 => (2, norm_two_mixed),
            _ => (1, norm_two_mixed),
        };
        gammas[sel] = rows
            .iter()
            .map(|r| pick(sel, r) / (r.h.powi(order) * norm))
            .fold(T::zero(), |a, b| a.max(b));
    }

    Ok(InterpReport {
        levels: rows,
        rates,
        gammas,
        saturated,
    })
}
