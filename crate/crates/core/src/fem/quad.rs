//! Quadrature rules: symmetric Gauss rules on the reference triangle
//! (barycentric coordinates, weights summing to one) and Gauss-Legendre
//! rules on the unit interval.

use crate::scalar::Scalar;

/// Triangle rule: points in barycentric coordinates with weights summing to
/// one; an integral over a physical triangle is `area * Σ w_q f(x_q)`.
pub struct TriQuad<T> {
    pub points: Vec<([T; 3], T)>,
}

/// Rule exact for polynomials up to the requested degree (1, 2, 4 or 6).
pub fn tri_quad<T: Scalar>(degree: usize) -> TriQuad<T> {
    let c = T::cst;
    let mut points = Vec::new();
    match degree {
        0 | 1 => {
            let third = T::one() / c(3.0);
            points.push(([third, third, third], T::one()));
        }
        2 => {
            let a = c(2.0 / 3.0);
            let b = c(1.0 / 6.0);
            let w = T::one() / c(3.0);
            points.push(([a, b, b], w));
            points.push(([b, a, b], w));
            points.push(([b, b, a], w));
        }
        3 | 4 => {
            // 6-point degree-4 rule
            push_perm3(&mut points, 0.445948490915965, 0.223381589678011);
            push_perm3(&mut points, 0.091576213509771, 0.109951743655322);
        }
        5 | 6 => {
            // 12-point degree-6 rule
            push_perm3(&mut points, 0.249286745170910, 0.116786275726379);
            push_perm3(&mut points, 0.063089014491502, 0.050844906370207);
            push_perm6(
                &mut points,
                0.310352451033785,
                0.636502499121399,
                0.082851075618374,
            );
        }
        other => panic!("no triangle quadrature rule of degree {other}"),
    }
    TriQuad { points }
}

fn push_perm3<T: Scalar>(points: &mut Vec<([T; 3], T)>, a: f64, w: f64) {
    let a = T::cst(a);
    let w = T::cst(w);
    let b = T::one() - a - a;
    points.push(([b, a, a], w));
    points.push(([a, b, a], w));
    points.push(([a, a, b], w));
}

fn push_perm6<T: Scalar>(points: &mut Vec<([T; 3], T)>, a: f64, b: f64, w: f64) {
    let a = T::cst(a);
    let b = T::cst(b);
    let w = T::cst(w);
    let c = T::one() - a - b;
    for p in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        points.push((p, w));
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, `n` in `1..=5`.
pub fn gauss1d<T: Scalar>(n: usize) -> Vec<(T, T)> {
    let raw: &[(f64, f64)] = match n {
        1 => &[(0.0, 2.0)],
        2 => &[(-0.5773502691896257, 1.0), (0.5773502691896257, 1.0)],
        3 => &[
            (-0.7745966692414834, 0.5555555555555556),
            (0.0, 0.8888888888888888),
            (0.7745966692414834, 0.5555555555555556),
        ],
        4 => &[
            (-0.8611363115940526, 0.3478548451374538),
            (-0.3399810435848563, 0.6521451548625461),
            (0.3399810435848563, 0.6521451548625461),
            (0.8611363115940526, 0.3478548451374538),
        ],
        5 => &[
            (-0.906179845938664, 0.2369268850561891),
            (-0.5384693101056831, 0.4786286704993665),
            (0.0, 0.5688888888888889),
            (0.5384693101056831, 0.4786286704993665),
            (0.906179845938664, 0.2369268850561891),
        ],
        other => panic!("no 1D Gauss rule with {other} points"),
    };
    let half = T::cst(0.5);
    raw.iter()
        .map(|&(x, w)| (half * (T::one() + T::cst(x)), half * T::cst(w)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// exact value of `∫_T x^p y^q` over the reference triangle
    fn monomial_exact(p: u32, q: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn triangle_rules_integrate_monomials_exactly() {
        for degree in [1usize, 2, 4, 6] {
            let rule = tri_quad::<f64>(degree);
            for p in 0..=degree as u32 {
                for q in 0..=(degree as u32 - p) {
                    // reference triangle has area 1/2; weights sum to one
                    let approx_val: f64 = 0.5
                        * rule
                            .points
                            .iter()
                            .map(|&(l, w)| {
                                let x = l[1];
                                let y = l[2];
                                w * x.powi(p as i32) * y.powi(q as i32)
                            })
                            .sum::<f64>();
                    assert_relative_eq!(
                        approx_val,
                        monomial_exact(p, q),
                        max_relative = 1e-13,
                        epsilon = 1e-15
                    );
                }
            }
        }
    }

    #[test]
    fn gauss1d_integrates_polynomials() {
        for n in 1..=5usize {
            let rule = gauss1d::<f64>(n);
            for p in 0..(2 * n) as u32 {
                let val: f64 = rule.iter().map(|&(x, w)| w * x.powi(p as i32)).sum();
                assert_relative_eq!(val, 1.0 / (p as f64 + 1.0), max_relative = 1e-13);
            }
        }
    }
}
