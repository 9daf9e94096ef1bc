//! Nonlinear coupling terms of the semi-discrete system: the macro
//! sink/source from interface mass transfer, its micro counterpart, and the
//! bulk reaction term.
//!
//! The macro integral of every nonlinear term is lumped at the macro nodes
//! (weights `wx` = mass-matrix row sums), which decouples the micro problems
//! across macro nodes; a consistent macro mass would tie all micro cells
//! together in one linear solve. On the micro side the transfer integrand is
//! integrated with the trapezoidal rule along interface edges and the
//! reaction with nodal weights `wy`, so nonnegative fields produce
//! nonnegative transfer/reaction loads nodewise. Both crimes cost O(h^2),
//! below every rate measured by the verification harness.
//!
//! The trapezoidal interface quadrature is shared verbatim between
//! [`macro_exchange_rhs`] and [`micro_exchange_rhs`], which makes the
//! discrete exchange conservative to rounding: summed against all-ones test
//! vectors the two sides cancel exactly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_mass, assemble_mass, assemble_stiffness, P1Space, SparseOperator,
};
use crate::mesh::BoundaryTag;
use crate::model::{eval_eta, ReactionFactorFn, TransferFn};
use crate::scalar::Scalar;
use crate::twoscale::TwoScaleField;

/// One reactive-interface edge of the micro mesh.
#[derive(Clone, Copy, Debug)]
pub struct GammaEdge<T> {
    pub p: usize,
    pub q: usize,
    pub len: T,
}

/// Assembled operators shared by the time stepper and the verification
/// harness. Immutable after construction.
pub struct CoupledOperators<T> {
    pub macro_space: Arc<P1Space<T>>,
    pub micro_space: Arc<P1Space<T>>,
    pub mass_x: SparseOperator<T>,
    pub stiffness_x: SparseOperator<T>,
    pub mass_y: SparseOperator<T>,
    pub stiffness_y: SparseOperator<T>,
    /// boundary mass on the reactive interface
    pub gamma_mass: SparseOperator<T>,
    /// lumped macro weights (row sums of `mass_x`), summing to the macro area
    pub wx: Vec<T>,
    /// lumped micro weights (row sums of `mass_y`)
    pub wy: Vec<T>,
    /// lumped interface weights (row sums of `gamma_mass`)
    pub gamma_weights: Vec<T>,
    pub gamma_edges: Vec<GammaEdge<T>>,
    pub gamma_len: T,
}

impl<T: Scalar> CoupledOperators<T> {
    pub fn build(macro_space: Arc<P1Space<T>>, micro_space: Arc<P1Space<T>>) -> Result<Self> {
        let mass_x = assemble_mass(&macro_space);
        let stiffness_x = assemble_stiffness(&macro_space);
        let mass_y = assemble_mass(&micro_space);
        let stiffness_y = assemble_stiffness(&micro_space);
        let gamma_mass = assemble_boundary_mass(&micro_space, BoundaryTag::GammaR)?;
        let wx = mass_x.row_sums();
        let wy = mass_y.row_sums();
        let gamma_weights = gamma_mass.row_sums();
        let mesh = &micro_space.mesh;
        let gamma_edges: Vec<GammaEdge<T>> = mesh
            .boundary_edges
            .iter()
            .filter(|e| e.tag == BoundaryTag::GammaR)
            .map(|e| {
                let [p, q] = e.vertices;
                let pa = mesh.vertices[p];
                let pb = mesh.vertices[q];
                let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                GammaEdge { p, q, len }
            })
            .collect();
        let gamma_len = gamma_edges.iter().map(|e| e.len).sum();
        Ok(CoupledOperators {
            macro_space,
            micro_space,
            mass_x,
            stiffness_x,
            mass_y,
            stiffness_y,
            gamma_mass,
            wx,
            wy,
            gamma_weights,
            gamma_edges,
            gamma_len,
        })
    }

    pub fn n_macro(&self) -> usize {
        self.wx.len()
    }

    pub fn n_micro(&self) -> usize {
        self.wy.len()
    }
}

/// Trapezoidal interface quadrature of `b(U_j - u_j(.))`: scatters the edge
/// loads into `out` (length `n_micro`) and returns the total `s_j`.
pub(crate) fn exchange_loads_into<T: Scalar>(
    u_macro_j: T,
    u_row: &[T],
    b: &TransferFn<T>,
    edges: &[GammaEdge<T>],
    out: &mut [T],
) -> T {
    let half = T::cst(0.5);
    let mut total = T::zero();
    for e in edges {
        let w = e.len * half;
        let bp = b.eval(u_macro_j - u_row[e.p]) * w;
        let bq = b.eval(u_macro_j - u_row[e.q]) * w;
        out[e.p] += bp;
        out[e.q] += bq;
        total += bp + bq;
    }
    total
}

/// Total interface transfer `s_j` only (macro side of the exchange).
pub(crate) fn exchange_total<T: Scalar>(
    u_macro_j: T,
    u_row: &[T],
    b: &TransferFn<T>,
    edges: &[GammaEdge<T>],
) -> T {
    let half = T::cst(0.5);
    let mut total = T::zero();
    for e in edges {
        let w = e.len * half;
        total += (b.eval(u_macro_j - u_row[e.p]) + b.eval(u_macro_j - u_row[e.q])) * w;
    }
    total
}

fn check_pair<T: Scalar>(
    u_macro: &[T],
    u: &TwoScaleField<T>,
    ops: &CoupledOperators<T>,
) -> Result<()> {
    if u_macro.len() != ops.n_macro()
        || u.n_macro() != ops.n_macro()
        || u.n_micro() != ops.n_micro()
    {
        return Err(Error::DimensionMismatch(
            "exchange term: field dimensions do not match the operators".into(),
        ));
    }
    Ok(())
}

/// Macro right-hand side of the interface exchange: entry `j` is
/// `-wx_j * s_j` with `s_j` the trapezoidal interface quadrature of
/// `b(U_j - u_j(.))`. The sign is the macro sink.
pub fn macro_exchange_rhs<T: Scalar>(
    u_macro: &[T],
    u: &TwoScaleField<T>,
    b: &TransferFn<T>,
    ops: &CoupledOperators<T>,
) -> Result<Vec<T>> {
    check_pair(u_macro, u, ops)?;
    Ok((0..ops.n_macro())
        .map(|j| -ops.wx[j] * exchange_total(u_macro[j], u.coeffs.row(j), b, &ops.gamma_edges))
        .collect())
}

/// Micro right-hand side of the interface exchange: row `j` carries
/// `+wx_j` times the interface edge loads of `b(U_j - u_j(.))`; zero off the
/// interface vertices.
pub fn micro_exchange_rhs<T: Scalar>(
    u_macro: &[T],
    u: &TwoScaleField<T>,
    b: &TransferFn<T>,
    ops: &CoupledOperators<T>,
) -> Result<TwoScaleField<T>> {
    check_pair(u_macro, u, ops)?;
    let mut out = TwoScaleField::zeros(ops.macro_space.clone(), ops.micro_space.clone());
    for j in 0..ops.n_macro() {
        let row = out.coeffs.row_mut(j);
        exchange_loads_into(u_macro[j], u.coeffs.row(j), b, &ops.gamma_edges, row);
        let wxj = ops.wx[j];
        row.iter_mut().for_each(|v| *v *= wxj);
    }
    Ok(out)
}

/// Reaction right-hand sides for both micro species: row `j`, node `m` of
/// the first output is `-k wx_j wy_m eta(u_jm, v_jm)`; the second output is
/// the first scaled by `alpha`.
pub fn reaction_rhs<T: Scalar>(
    u: &TwoScaleField<T>,
    v: &TwoScaleField<T>,
    r_factor: &ReactionFactorFn<T>,
    q_factor: &ReactionFactorFn<T>,
    k: T,
    alpha: T,
    ops: &CoupledOperators<T>,
) -> Result<(TwoScaleField<T>, TwoScaleField<T>)> {
    if u.n_macro() != ops.n_macro()
        || v.n_macro() != ops.n_macro()
        || u.n_micro() != ops.n_micro()
        || v.n_micro() != ops.n_micro()
    {
        return Err(Error::DimensionMismatch(
            "reaction term: field dimensions do not match the operators".into(),
        ));
    }
    let mut out_u = TwoScaleField::zeros(ops.macro_space.clone(), ops.micro_space.clone());
    let mut out_v = TwoScaleField::zeros(ops.macro_space.clone(), ops.micro_space.clone());
    for j in 0..ops.n_macro() {
        let scale = -k * ops.wx[j];
        let urow = u.coeffs.row(j);
        let vrow = v.coeffs.row(j);
        let ou = out_u.coeffs.row_mut(j);
        let ov = out_v.coeffs.row_mut(j);
        for m in 0..ops.n_micro() {
            let e = scale * ops.wy[m] * eval_eta(r_factor, q_factor, urow[m], vrow[m]);
            ou[m] = e;
            ov[m] = alpha * e;
        }
    }
    Ok((out_u, out_v))
}
