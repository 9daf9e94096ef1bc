//! Single-scale P1 (continuous piecewise linear) finite elements on a
//! [`Mesh2D`]: operator assembly, nodal interpolation, L2 and energy (Riesz)
//! projections, norms and error norms against smooth fields.
//!
//! Element integrals of products of hat functions are assembled in closed
//! form; load vectors use a degree-4 triangle rule, error norms a degree-6
//! rule, so quadrature errors stay far below the O(h^2) signals the
//! verification harness measures.

pub mod quad;
mod sparse;

pub use sparse::{cg_solve, cg_solve_into, CgOutcome, SparseOperator};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh2D};
use crate::scalar::{pairwise_sum, Scalar};
use quad::{gauss1d, tri_quad};

/// Default relative residual tolerance for the CG solves behind projections.
pub const DEFAULT_CG_TOL: f64 = 1e-10;
/// Default iteration cap for CG.
pub const DEFAULT_CG_MAX_ITER: usize = 50_000;

/// Nodal P1 space on a triangulation. Degrees of freedom are the vertices;
/// the Dirichlet mask marks vertices incident to a `Dirichlet` boundary edge
/// (empty for micro meshes, whose tags are `GammaR`/`GammaN`).
#[derive(Clone, Debug)]
pub struct P1Space<T> {
    pub mesh: Arc<Mesh2D<T>>,
    pub dirichlet_mask: Vec<bool>,
}

impl<T: Scalar> P1Space<T> {
    pub fn new(mesh: Arc<Mesh2D<T>>) -> Self {
        let mut mask = vec![false; mesh.n_vertices()];
        for e in &mesh.boundary_edges {
            if e.tag == BoundaryTag::Dirichlet {
                mask[e.vertices[0]] = true;
                mask[e.vertices[1]] = true;
            }
        }
        P1Space {
            mesh,
            dirichlet_mask: mask,
        }
    }

    pub fn n_dof(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn n_dirichlet(&self) -> usize {
        self.dirichlet_mask.iter().filter(|&&m| m).count()
    }
}

/// Constant gradients of the three hat functions on triangle `tri`, plus its
/// area. `grads[i]` is the gradient of the hat of local vertex `i`.
pub fn tri_gradients<T: Scalar>(mesh: &Mesh2D<T>, tri: usize) -> ([[T; 2]; 3], T) {
    let [a, b, c] = mesh.triangles[tri];
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let pc = mesh.vertices[c];
    let two_area = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
    let inv = T::one() / two_area;
    let grads = [
        [(pb[1] - pc[1]) * inv, (pc[0] - pb[0]) * inv],
        [(pc[1] - pa[1]) * inv, (pa[0] - pc[0]) * inv],
        [(pa[1] - pb[1]) * inv, (pb[0] - pa[0]) * inv],
    ];
    (grads, two_area * T::cst(0.5))
}

/// Consistent mass matrix: `M_ij = ∫ ξ_i ξ_j`. Symmetric positive definite;
/// the row-sum vector is the lumped mass used by the coupling terms.
pub fn assemble_mass<T: Scalar>(space: &P1Space<T>) -> SparseOperator<T> {
    let mesh = &space.mesh;
    let n = space.n_dof();
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    let twelfth = T::cst(1.0 / 12.0);
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let scale = mesh.triangle_area(ti) * twelfth;
        for (i, &vi) in t.iter().enumerate() {
            for (j, &vj) in t.iter().enumerate() {
                let coef = if i == j { T::cst(2.0) } else { T::one() };
                triplets.push((vi, vj, scale * coef));
            }
        }
    }
    SparseOperator::from_triplets(n, n, triplets, true)
}

/// Unit-coefficient stiffness matrix: `A_ij = ∫ ∇ξ_i · ∇ξ_j`. Symmetric
/// positive semidefinite with the constants in its kernel.
pub fn assemble_stiffness<T: Scalar>(space: &P1Space<T>) -> SparseOperator<T> {
    let mesh = &space.mesh;
    let n = space.n_dof();
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for ti in 0..mesh.n_triangles() {
        let (grads, area) = tri_gradients(mesh, ti);
        let t = mesh.triangles[ti];
        for i in 0..3 {
            for j in 0..3 {
                let dot = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                triplets.push((t[i], t[j], area * dot));
            }
        }
    }
    SparseOperator::from_triplets(n, n, triplets, true)
}

/// Boundary mass matrix over the edges carrying `tag`:
/// `B_ij = ∫_{tagged} ξ_i ξ_j ds`, supported on tagged-boundary vertices.
pub fn assemble_boundary_mass<T: Scalar>(
    space: &P1Space<T>,
    tag: BoundaryTag,
) -> Result<SparseOperator<T>> {
    let mesh = &space.mesh;
    if !mesh.has_tag(tag) {
        return Err(Error::InvalidTag(tag.to_string()));
    }
    let n = space.n_dof();
    let sixth = T::cst(1.0 / 6.0);
    let mut triplets = Vec::new();
    for e in mesh.boundary_edges.iter().filter(|e| e.tag == tag) {
        let [p, q] = e.vertices;
        let pa = mesh.vertices[p];
        let pb = mesh.vertices[q];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let s = len * sixth;
        triplets.push((p, p, s * T::cst(2.0)));
        triplets.push((q, q, s * T::cst(2.0)));
        triplets.push((p, q, s));
        triplets.push((q, p, s));
    }
    Ok(SparseOperator::from_triplets(n, n, triplets, true))
}

/// Nodal interpolation: coefficient `j` is `f` at vertex `j`.
pub fn interpolate_nodal<T: Scalar>(space: &P1Space<T>, f: impl Fn([T; 2]) -> T) -> Vec<T> {
    space.mesh.vertices.iter().map(|&p| f(p)).collect()
}

/// Load vector `ℓ_j = ∫ f ξ_j` with a triangle rule of the given degree.
pub fn assemble_load<T: Scalar>(
    space: &P1Space<T>,
    f: impl Fn([T; 2]) -> T,
    degree: usize,
) -> Vec<T> {
    let mesh = &space.mesh;
    let rule = tri_quad::<T>(degree);
    let mut load = vec![T::zero(); space.n_dof()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(ti);
        let pa = mesh.vertices[t[0]];
        let pb = mesh.vertices[t[1]];
        let pc = mesh.vertices[t[2]];
        for &(l, w) in &rule.points {
            let x = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            let fv = f(x) * w * area;
            for i in 0..3 {
                load[t[i]] += fv * l[i];
            }
        }
    }
    load
}

/// Gradient load `ℓ_j = ∫ g · ∇ξ_j` with a triangle rule of the given degree.
pub fn assemble_gradient_load<T: Scalar>(
    space: &P1Space<T>,
    g: impl Fn([T; 2]) -> [T; 2],
    degree: usize,
) -> Vec<T> {
    let mesh = &space.mesh;
    let rule = tri_quad::<T>(degree);
    let mut load = vec![T::zero(); space.n_dof()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let (grads, area) = tri_gradients(mesh, ti);
        let pa = mesh.vertices[t[0]];
        let pb = mesh.vertices[t[1]];
        let pc = mesh.vertices[t[2]];
        for &(l, w) in &rule.points {
            let x = [
                l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
            ];
            let gv = g(x);
            let wa = w * area;
            for i in 0..3 {
                load[t[i]] += wa * (gv[0] * grads[i][0] + gv[1] * grads[i][1]);
            }
        }
    }
    load
}

/// Boundary load `ℓ_j = ∫_{tagged} g ξ_j ds` with an `n`-point Gauss rule
/// per edge.
pub fn assemble_boundary_load<T: Scalar>(
    space: &P1Space<T>,
    tag: BoundaryTag,
    g: impl Fn([T; 2]) -> T,
    n_gauss: usize,
) -> Result<Vec<T>> {
    let mesh = &space.mesh;
    if !mesh.has_tag(tag) {
        return Err(Error::InvalidTag(tag.to_string()));
    }
    let rule = gauss1d::<T>(n_gauss);
    let mut load = vec![T::zero(); space.n_dof()];
    for e in mesh.boundary_edges.iter().filter(|e| e.tag == tag) {
        let [p, q] = e.vertices;
        let pa = mesh.vertices[p];
        let pb = mesh.vertices[q];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for &(s, w) in &rule {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let gv = g(x) * w * len;
            load[p] += gv * (T::one() - s);
            load[q] += gv * s;
        }
    }
    Ok(load)
}

/// Dirichlet-constrained SPD system: keeps the unconstrained operator for
/// right-hand-side corrections and the symmetrically eliminated operator for
/// the CG solve.
#[derive(Clone, Debug)]
pub struct DirichletSystem<T> {
    pub original: SparseOperator<T>,
    pub constrained: SparseOperator<T>,
    mask: Vec<bool>,
}

impl<T: Scalar> DirichletSystem<T> {
    pub fn new(op: SparseOperator<T>, mask: &[bool]) -> Self {
        let constrained = op.constrained(mask);
        DirichletSystem {
            original: op,
            constrained,
            mask: mask.to_vec(),
        }
    }

    /// Solve `op x = load` with `x = bc` pinned on masked vertices; `x` is
    /// also the CG initial guess on the free vertices.
    pub fn solve(
        &self,
        load: &[T],
        bc: &[T],
        x: &mut [T],
        tol: T,
        max_iter: usize,
    ) -> Result<CgOutcome> {
        let n = self.mask.len();
        if load.len() != n || bc.len() != n || x.len() != n {
            return Err(Error::DimensionMismatch(
                "dirichlet solve: vector lengths must match the operator".into(),
            ));
        }
        let g: Vec<T> = (0..n)
            .map(|i| if self.mask[i] { bc[i] } else { T::zero() })
            .collect();
        let correction = self.original.apply(&g);
        let rhs: Vec<T> = (0..n)
            .map(|i| {
                if self.mask[i] {
                    bc[i]
                } else {
                    load[i] - correction[i]
                }
            })
            .collect();
        for i in 0..n {
            if self.mask[i] {
                x[i] = bc[i];
            }
        }
        cg_solve_into(&self.constrained, &rhs, x, tol, max_iter)
    }
}

/// Variants of the energy (Riesz) projection onto the P1 space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RieszVariant {
    /// Elliptic projection with Dirichlet values taken from nodal
    /// interpolation; requires a space with Dirichlet vertices.
    DirichletZero,
    /// Projection in the full H1 inner product `(∇·,∇·) + (·,·)`;
    /// well-posed without boundary conditions (used on the micro cell).
    FullH1,
}

/// L2 projection: solves `M c = (f, ξ)` with a degree-4 load.
pub fn l2_projection<T: Scalar>(space: &P1Space<T>, f: impl Fn([T; 2]) -> T) -> Result<Vec<T>> {
    let mass = assemble_mass(space);
    let load = assemble_load(space, f, 4);
    cg_solve(&mass, &load, T::cst(DEFAULT_CG_TOL), DEFAULT_CG_MAX_ITER)
}

/// Energy projection of `f` (with analytic gradient `grad_f`).
pub fn h1_riesz_projection<T: Scalar>(
    space: &P1Space<T>,
    f: impl Fn([T; 2]) -> T,
    grad_f: impl Fn([T; 2]) -> [T; 2],
    variant: RieszVariant,
) -> Result<Vec<T>> {
    let tol = T::cst(DEFAULT_CG_TOL);
    match variant {
        RieszVariant::DirichletZero => {
            if space.n_dirichlet() == 0 {
                return Err(Error::Precondition(
                    "dirichlet_zero projection requires a space with Dirichlet vertices".into(),
                ));
            }
            let stiffness = assemble_stiffness(space);
            let load = assemble_gradient_load(space, &grad_f, 4);
            let bc = interpolate_nodal(space, &f);
            let system = DirichletSystem::new(stiffness, &space.dirichlet_mask);
            let mut x = vec![T::zero(); space.n_dof()];
            system.solve(&load, &bc, &mut x, tol, DEFAULT_CG_MAX_ITER)?;
            Ok(x)
        }
        RieszVariant::FullH1 => {
            let stiffness = assemble_stiffness(space);
            let mass = assemble_mass(space);
            let op =
                SparseOperator::linear_combination(&[(T::one(), &stiffness), (T::one(), &mass)]);
            let mut load = assemble_gradient_load(space, &grad_f, 4);
            let l2 = assemble_load(space, &f, 4);
            for (a, b) in load.iter_mut().zip(l2) {
                *a += b;
            }
            cg_solve(&op, &load, tol, DEFAULT_CG_MAX_ITER)
        }
    }
}

/// `(‖c‖_{L2}, |c|_{H1})`: mass norm and stiffness seminorm of a coefficient
/// vector. Assembles both operators; hot paths should reuse assembled ones.
pub fn norms<T: Scalar>(space: &P1Space<T>, coeffs: &[T]) -> (T, T) {
    let mass = assemble_mass(space);
    let stiffness = assemble_stiffness(space);
    let l2 = mass.quadratic_form(coeffs).max(T::zero()).sqrt();
    let h1 = stiffness.quadratic_form(coeffs).max(T::zero()).sqrt();
    (l2, h1)
}

/// `‖c - f‖_{L2}` by a triangle rule of the given degree.
pub fn l2_error<T: Scalar>(
    space: &P1Space<T>,
    coeffs: &[T],
    f: impl Fn([T; 2]) -> T,
    degree: usize,
) -> T {
    let mesh = &space.mesh;
    let rule = tri_quad::<T>(degree);
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
                let uh = l[0] * coeffs[t[0]] + l[1] * coeffs[t[1]] + l[2] * coeffs[t[2]];
                acc += w * area * (uh - f(x)).powi(2);
            }
            acc
        })
        .collect();
    pairwise_sum(&per_tri).max(T::zero()).sqrt()
}

/// `|c - f|_{H1}` (gradient seminorm of the error).
pub fn h1_semi_error<T: Scalar>(
    space: &P1Space<T>,
    coeffs: &[T],
    grad_f: impl Fn([T; 2]) -> [T; 2],
    degree: usize,
) -> T {
    let mesh = &space.mesh;
    let rule = tri_quad::<T>(degree);
    let per_tri: Vec<T> = (0..mesh.n_triangles())
        .map(|ti| {
            let t = mesh.triangles[ti];
            let (grads, area) = tri_gradients(mesh, ti);
            let pa = mesh.vertices[t[0]];
            let pb = mesh.vertices[t[1]];
            let pc = mesh.vertices[t[2]];
            let gh = [
                coeffs[t[0]] * grads[0][0]
                    + coeffs[t[1]] * grads[1][0]
                    + coeffs[t[2]] * grads[2][0],
                coeffs[t[0]] * grads[0][1]
                    + coeffs[t[1]] * grads[1][1]
                    + coeffs[t[2]] * grads[2][1],
            ];
            let mut acc = T::zero();
            for &(l, w) in &rule.points {
                let x = [
                    l[0] * pa[0] + l[1] * pb[0] + l[2] * pc[0],
                    l[0] * pa[1] + l[1] * pb[1] + l[2] * pc[1],
                ];
                let ge = grad_f(x);
                acc += w * area * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
            }
            acc
        })
        .collect();
    pairwise_sum(&per_tri).max(T::zero()).sqrt()
}

/// Full H1 error `(‖c-f‖² + |c-f|²)^{1/2}`.
pub fn h1_error<T: Scalar>(
    space: &P1Space<T>,
    coeffs: &[T],
    f: impl Fn([T; 2]) -> T,
    grad_f: impl Fn([T; 2]) -> [T; 2],
    degree: usize,
) -> T {
    let l2 = l2_error(space, coeffs, f, degree);
    let h1 = h1_semi_error(space, coeffs, grad_f, degree);
    (l2 * l2 + h1 * h1).sqrt()
}
