//! Shared oracle helpers for the integration suites: a deterministic RNG, a
//! dense Gaussian-elimination solver, brute-force tensor quadrature and an
//! independent single-scale heat stepper. Everything here is deliberately
//! written against the plain definitions, not the library's fast paths.

#![allow(clippy::needless_range_loop)] // index-based loops are the local idiom
#![allow(dead_code)] // each integration target uses its own subset of these helpers

use std::sync::Arc;

use twoscale_fem::fem::quad::tri_quad;
use twoscale_fem::fem::{
    assemble_mass, assemble_stiffness, tri_gradients, P1Space, SparseOperator,
};
use twoscale_fem::twoscale::TwoScaleField;

/// xorshift64*; deterministic across platforms
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed.max(1))
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    /// uniform in [-1, 1)
    pub fn sym(&mut self) -> f64 {
        self.next_f64() * 2.0 - 1.0
    }
}

pub fn random_two_scale_field(
    macro_space: &Arc<P1Space<f64>>,
    micro_space: &Arc<P1Space<f64>>,
    rng: &mut Rng,
) -> TwoScaleField<f64> {
    let mut f = TwoScaleField::zeros(macro_space.clone(), micro_space.clone());
    for j in 0..f.n_macro() {
        for k in 0..f.n_micro() {
            f.coeffs.set(j, k, rng.sym());
        }
    }
    f
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / d;
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

pub fn sparse_to_dense(op: &SparseOperator<f64>) -> Vec<Vec<f64>> {
    let mut dense = vec![vec![0.0; op.ncols()]; op.nrows()];
    for i in 0..op.nrows() {
        let (cols, vals) = op.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            dense[i][c] = v;
        }
    }
    dense
}

/// Brute-force tensor quadrature of `∫∫ w²` (or `∫∫ |∇_y w|²` when
/// `gradient` is set) over the product of both meshes; viable only on very
/// small meshes.
pub fn brute_force_tensor_sq(w: &TwoScaleField<f64>, gradient: bool) -> f64 {
    let rule = tri_quad::<f64>(4);
    let mx = &w.macro_space.mesh;
    let my = &w.micro_space.mesh;
    let mut total = 0.0;
    for tx in 0..mx.n_triangles() {
        let t = mx.triangles[tx];
        let ax = mx.triangle_area(tx);
        for &(hat_x, wx) in &rule.points {
            for ty in 0..my.n_triangles() {
                let s = my.triangles[ty];
                let ay = my.triangle_area(ty);
                let (grads, _) = tri_gradients(my, ty);
                for &(hat_y, wy) in &rule.points {
                    let weight = wx * ax * wy * ay;
                    if gradient {
                        let mut g = [0.0, 0.0];
                        for i in 0..3 {
                            for m in 0..3 {
                                let c = w.coeffs.get(t[i], s[m]);
                                g[0] += c * hat_x[i] * grads[m][0];
                                g[1] += c * hat_x[i] * grads[m][1];
                            }
                        }
                        total += weight * (g[0] * g[0] + g[1] * g[1]);
                    } else {
                        let mut val = 0.0;
                        for i in 0..3 {
                            for m in 0..3 {
                                val += w.coeffs.get(t[i], s[m]) * hat_x[i] * hat_y[m];
                            }
                        }
                        total += weight * val * val;
                    }
                }
            }
        }
    }
    total
}

/// Independent single-scale reference for the decoupled macro problem:
/// backward-Euler heat equation with lumped mass and nodal Dirichlet data,
/// solved densely. Returns the states after each step.
#[allow(clippy::too_many_arguments)]
pub fn reference_heat_trajectory(
    space: &Arc<P1Space<f64>>,
    theta: f64,
    diffusivity: f64,
    u_ext: impl Fn(f64, [f64; 2]) -> f64,
    u_init: impl Fn([f64; 2]) -> f64,
    dt: f64,
    n_steps: usize,
) -> Vec<Vec<f64>> {
    let n = space.n_dof();
    let mass = assemble_mass(space);
    let stiffness = assemble_stiffness(space);
    let lumped = mass.row_sums();

    let mut u: Vec<f64> = space.mesh.vertices.iter().map(|&p| u_init(p)).collect();
    for (i, &masked) in space.dirichlet_mask.iter().enumerate() {
        if masked {
            u[i] = u_ext(0.0, space.mesh.vertices[i]);
        }
    }

    let stiff_dense = sparse_to_dense(&stiffness);
    let mut states = Vec::with_capacity(n_steps);
    for step in 1..=n_steps {
        let t = dt * step as f64;
        let mut a = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = dt * diffusivity * stiff_dense[i][j];
            }
            a[i][i] += theta * lumped[i];
            rhs[i] = theta * lumped[i] * u[i];
        }
        for i in 0..n {
            if space.dirichlet_mask[i] {
                let g = u_ext(t, space.mesh.vertices[i]);
                for j in 0..n {
                    a[i][j] = 0.0;
                }
                // keep the system symmetric: move the column to the rhs
                for j in 0..n {
                    if !space.dirichlet_mask[j] {
                        rhs[j] -= a[j][i] * g;
                        a[j][i] = 0.0;
                    }
                }
                a[i][i] = 1.0;
                rhs[i] = g;
            }
        }
        u = dense_solve(a, rhs);
        states.push(u.clone());
    }
    states
}

/// Brute-force tensor quadrature of the squared error `∫∫ (w_h - g)²`
/// (or of the micro-gradient error when `gradient` is set) against an
/// arbitrary exact field `g(x, y)`.
pub fn brute_force_error_sq(
    w: &TwoScaleField<f64>,
    g: impl Fn([f64; 2], [f64; 2]) -> f64,
    grad_g: impl Fn([f64; 2], [f64; 2]) -> [f64; 2],
    gradient: bool,
) -> f64 {
    let rule = tri_quad::<f64>(6);
    let mx = &w.macro_space.mesh;
    let my = &w.micro_space.mesh;
    let mut total = 0.0;
    for tx in 0..mx.n_triangles() {
        let t = mx.triangles[tx];
        let ax = mx.triangle_area(tx);
        let pax = mx.vertices[t[0]];
        let pbx = mx.vertices[t[1]];
        let pcx = mx.vertices[t[2]];
        for &(hat_x, wx) in &rule.points {
            let x = [
                hat_x[0] * pax[0] + hat_x[1] * pbx[0] + hat_x[2] * pcx[0],
                hat_x[0] * pax[1] + hat_x[1] * pbx[1] + hat_x[2] * pcx[1],
            ];
            for ty in 0..my.n_triangles() {
                let s = my.triangles[ty];
                let ay = my.triangle_area(ty);
                let pay = my.vertices[s[0]];
                let pby = my.vertices[s[1]];
                let pcy = my.vertices[s[2]];
                let (grads, _) = tri_gradients(my, ty);
                for &(hat_y, wy) in &rule.points {
                    let y = [
                        hat_y[0] * pay[0] + hat_y[1] * pby[0] + hat_y[2] * pcy[0],
                        hat_y[0] * pay[1] + hat_y[1] * pby[1] + hat_y[2] * pcy[1],
                    ];
                    let weight = wx * ax * wy * ay;
                    if gradient {
                        let mut gh = [0.0, 0.0];
                        for i in 0..3 {
                            for m in 0..3 {
                                let c = w.coeffs.get(t[i], s[m]);
                                gh[0] += c * hat_x[i] * grads[m][0];
                                gh[1] += c * hat_x[i] * grads[m][1];
                            }
                        }
                        let ge = grad_g(x, y);
                        total += weight * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
                    } else {
                        let mut val = 0.0;
                        for i in 0..3 {
                            for m in 0..3 {
                                val += w.coeffs.get(t[i], s[m]) * hat_x[i] * hat_y[m];
                            }
                        }
                        total += weight * (val - g(x, y)).powi(2);
                    }
                }
            }
        }
    }
    total
}
