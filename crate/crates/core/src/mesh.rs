//! Conforming 2D triangulations of the macroscopic domain and of the micro
//! cell, with tagged boundary edges.
//!
//! Meshes are uniform right-triangle grids over axis-aligned rectangles: each
//! grid cell is split along the same diagonal, so refinement by edge midpoints
//! halves the mesh size exactly and keeps the family quasi-uniform. Boundary
//! edges carry a tag: `Dirichlet` for the macro boundary, `GammaR` (reactive,
//! mass transfer) or `GammaN` (insulated) for the two parts of the micro-cell
//! boundary. A micro mesh must have at least one reactive edge, otherwise the
//! transfer term integrates over an empty interface.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Boundary-edge classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Macro boundary: Dirichlet data imposed from the exterior concentration.
    Dirichlet,
    /// Reactive part of the micro-cell boundary (interface mass transfer).
    GammaR,
    /// Insulated part of the micro-cell boundary (homogeneous Neumann).
    GammaN,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::GammaR => "gamma_r",
            BoundaryTag::GammaN => "gamma_n",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Conforming triangulation with tagged boundary edges.
///
/// Invariants (checked by [`Mesh2D::validate`]):
/// - every triangle has strictly positive signed area (counter-clockwise);
/// - every edge belongs to one triangle (boundary) or two (interior);
/// - the `boundary_edges` list is exactly the set of single-triangle edges;
/// - tags are either all `Dirichlet` (macro mesh) or drawn from
///   `{GammaR, GammaN}` with at least one `GammaR` edge (micro mesh).
#[derive(Clone, Debug)]
pub struct Mesh2D<T> {
    pub vertices: Vec<[T; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<T: Scalar> Mesh2D<T> {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area of triangle `i` (positive for counter-clockwise vertices).
    pub fn triangle_area(&self, i: usize) -> T {
        let [a, b, c] = self.triangles[i];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let pc = self.vertices[c];
        ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])) * T::cst(0.5)
    }

    pub fn total_area(&self) -> T {
        (0..self.n_triangles()).map(|i| self.triangle_area(i)).sum()
    }

    fn edge_length(&self, a: usize, b: usize) -> T {
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()
    }

    /// Map from undirected edge to the number of triangles containing it.
    fn edge_use_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *counts.entry(sorted_pair(a, b)).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= self.vertices.len()) {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {i} references a vertex out of range"
                )));
            }
            if self.triangle_area(i) <= T::zero() {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {i} has non-positive signed area"
                )));
            }
        }
        let counts = self.edge_use_counts();
        if let Some((e, n)) = counts.iter().find(|(_, &n)| n > 2) {
            return Err(Error::InvalidGeometry(format!(
                "edge {e:?} shared by {n} triangles"
            )));
        }
        let mut single: Vec<(usize, usize)> = counts
            .iter()
            .filter(|(_, &n)| n == 1)
            .map(|(&e, _)| e)
            .collect();
        single.sort_unstable();
        let mut listed: Vec<(usize, usize)> = self
            .boundary_edges
            .iter()
            .map(|e| sorted_pair(e.vertices[0], e.vertices[1]))
            .collect();
        listed.sort_unstable();
        if single != listed {
            return Err(Error::InvalidGeometry(
                "boundary edge list does not match the single-triangle edges".into(),
            ));
        }
        self.validate_tag_partition()
    }

    fn validate_tag_partition(&self) -> Result<()> {
        let n_d = self.count_tag(BoundaryTag::Dirichlet);
        let n_r = self.count_tag(BoundaryTag::GammaR);
        let n_n = self.count_tag(BoundaryTag::GammaN);
        if n_d > 0 && (n_r + n_n) > 0 {
            return Err(Error::InvalidTagging(
                "mesh mixes Dirichlet tags with micro-cell interface tags".into(),
            ));
        }
        if n_d == 0 && n_r == 0 {
            return Err(Error::InvalidTagging(
                "micro mesh has no reactive (gamma_r) boundary edge; the transfer interface must
have positive measure"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn count_tag(&self, tag: BoundaryTag) -> usize {
        self.boundary_edges.iter().filter(|e| e.tag == tag).count()
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.count_tag(tag) > 0
    }

    /// Total length of the boundary edges carrying `tag`.
    pub fn boundary_length(&self, tag: BoundaryTag) -> T {
        self.boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| self.edge_length(e.vertices[0], e.vertices[1]))
            .sum()
    }

    /// Sorted list of vertices incident to an edge with the given tag.
    pub fn vertices_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut vs: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.vertices)
            .collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }

    /// Ratio of the longest side to the smallest inscribed-circle diameter;
    /// stays constant under uniform refinement of a fixed parent mesh.
    pub fn quasi_uniformity_ratio(&self) -> T {
        let h = mesh_size(self);
        let mut min_d = T::infinity();
        for (i, t) in self.triangles.iter().enumerate() {
            let a = self.edge_length(t[0], t[1]);
            let b = self.edge_length(t[1], t[2]);
            let c = self.edge_length(t[2], t[0]);
            let s = (a + b + c) * T::cst(0.5);
            let d = self.triangle_area(i) / s * T::cst(2.0);
            if d < min_d {
                min_d = d;
            }
        }
        h / min_d
    }

    /// Plain-text dump: `v x y`, `t i j k`, `b i j TAG` lines (0-based indices).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {}\n", v[0], v[1]));
        }
        for t in &self.triangles {
            out.push_str(&format!("t {} {} {}\n", t[0], t[1], t[2]));
        }
        for e in &self.boundary_edges {
            out.push_str(&format!(
                "b {} {} {}\n",
                e.vertices[0], e.vertices[1], e.tag
            ));
        }
        out
    }
}

/// Build a uniform right-triangle mesh of the rectangle spanned by
/// `lower_left` and `upper_right`, with `nx` by `ny` grid cells each split
/// along the same diagonal. All boundary edges start as `Dirichlet`.
pub fn make_rect_mesh<T: Scalar>(
    lower_left: [T; 2],
    upper_right: [T; 2],
    nx: usize,
    ny: usize,
) -> Result<Mesh2D<T>> {
    if nx < 1 || ny < 1 {
        return Err(Error::InvalidGeometry(
            "subdivision counts must be at least 1".into(),
        ));
    }
    if upper_right[0] <= lower_left[0] || upper_right[1] <= lower_left[1] {
        return Err(Error::InvalidGeometry(
            "degenerate rectangle: upper_right must strictly dominate lower_left".into(),
        ));
    }
    let dx = (upper_right[0] - lower_left[0]) / T::of_usize(nx);
    let dy = (upper_right[1] - lower_left[1]) / T::of_usize(ny);
    let id = |ix: usize, iy: usize| iy * (nx + 1) + ix;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            vertices.push([
                lower_left[0] + dx * T::of_usize(ix),
                lower_left[1] + dy * T::of_usize(iy),
            ]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let v00 = id(ix, iy);
            let v10 = id(ix + 1, iy);
            let v11 = id(ix + 1, iy + 1);
            let v01 = id(ix, iy + 1);
            // fixed diagonal v00-v11 for reproducible assembly ordering
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    let tag = BoundaryTag::Dirichlet;
    for ix in 0..nx {
        boundary_edges.push(BoundaryEdge {
            vertices: [id(ix, 0), id(ix + 1, 0)],
            tag,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [id(ix, ny), id(ix + 1, ny)],
            tag,
        });
    }
    for iy in 0..ny {
        boundary_edges.push(BoundaryEdge {
            vertices: [id(0, iy), id(0, iy + 1)],
            tag,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [id(nx, iy), id(nx, iy + 1)],
            tag,
        });
    }

    let mesh = Mesh2D {
        vertices,
        triangles,
        boundary_edges,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Re-tag the boundary edges by classifying each edge midpoint. The returned
/// mesh is identical otherwise. Fails if the resulting tags violate the
/// partition rule (in particular, a micro mesh must keep at least one
/// `GammaR` edge).
pub fn tag_boundary<T: Scalar>(
    mesh: &Mesh2D<T>,
    classifier: impl Fn([T; 2]) -> BoundaryTag,
) -> Result<Mesh2D<T>> {
    let mut out = mesh.clone();
    for e in &mut out.boundary_edges {
        let a = mesh.vertices[e.vertices[0]];
        let b = mesh.vertices[e.vertices[1]];
        let mid = [(a[0] + b[0]) * T::cst(0.5), (a[1] + b[1]) * T::cst(0.5)];
        e.tag = classifier(mid);
    }
    out.validate_tag_partition()?;
    Ok(out)
}

/// Uniform refinement: each triangle is split into four by its edge
/// midpoints; boundary tags are inherited by the child edges; the mesh size
/// halves exactly (midpoints of dyadic coordinates are exact in binary
/// floating point).
pub fn refine_uniform<T: Scalar>(mesh: &Mesh2D<T>) -> Mesh2D<T> {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid_of = |a: usize, b: usize, vertices: &mut Vec<[T; 2]>| -> usize {
        let key = sorted_pair(a, b);
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let pa = vertices[a];
        let pb = vertices[b];
        let m = vertices.len();
        vertices.push([(pa[0] + pb[0]) * T::cst(0.5), (pa[1] + pb[1]) * T::cst(0.5)]);
        midpoint.insert(key, m);
        m
    };

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let mab = mid_of(a, b, &mut vertices);
        let mbc = mid_of(b, c, &mut vertices);
        let mca = mid_of(c, a, &mut vertices);
        triangles.push([a, mab, mca]);
        triangles.push([mab, b, mbc]);
        triangles.push([mca, mbc, c]);
        triangles.push([mab, mbc, mca]);
    }

    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.vertices;
        let m = mid_of(a, b, &mut vertices);
        boundary_edges.push(BoundaryEdge {
            vertices: [a, m],
            tag: e.tag,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [m, b],
            tag: e.tag,
        });
    }

    Mesh2D {
        vertices,
        triangles,
        boundary_edges,
    }
}

/// Maximum side length over all triangles.
pub fn mesh_size<T: Scalar>(mesh: &Mesh2D<T>) -> T {
    let mut h = T::zero();
    for &[a, b, c] in &mesh.triangles {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            let len = mesh.edge_length(p, q);
            if len > h {
                h = len;
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square(n: usize) -> Mesh2D<f64> {
        make_rect_mesh([0.0, 0.0], [1.0, 1.0], n, n).unwrap()
    }

    /// top edge reactive, rest insulated
    pub fn top_edge_classifier(mid: [f64; 2]) -> BoundaryTag {
        if mid[1] > 1.0 - 1e-12 {
            BoundaryTag::GammaR
        } else {
            BoundaryTag::GammaN
        }
    }

    #[test]
    fn smallest_mesh_counts() {
        let m = unit_square(1);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.boundary_edges.len(), 4);
    }

    #[test]
    fn two_by_two_counts() {
        let m = unit_square(2);
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(m.boundary_edges.len(), 8);
        assert_eq!(m.count_tag(BoundaryTag::Dirichlet), 8);
    }

    #[test]
    fn mesh_size_is_the_longest_side() {
        // oracle: exhaustive scan over all triangle sides
        let scan = |m: &Mesh2D<f64>| -> f64 {
            let mut h: f64 = 0.0;
            for t in &m.triangles {
                for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                    let pa = m.vertices[a];
                    let pb = m.vertices[b];
                    h = h.max(((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt());
                }
            }
            h
        };

        let m1 = unit_square(1);
        assert_relative_eq!(mesh_size(&m1), 2f64.sqrt(), max_relative = 1e-15);
        assert_eq!(mesh_size(&m1), scan(&m1));

        let m4 = unit_square(4);
        assert_relative_eq!(mesh_size(&m4), 2f64.sqrt() / 4.0, max_relative = 1e-15);
        assert_eq!(mesh_size(&m4), scan(&m4));

        let rect = make_rect_mesh([0.0, 0.0], [2.0, 1.0], 2, 1).unwrap();
        assert_relative_eq!(mesh_size(&rect), 2f64.sqrt(), max_relative = 1e-15);
        assert_eq!(mesh_size(&rect), scan(&rect));
    }

    #[test]
    fn degenerate_rectangle_rejected() {
        assert!(make_rect_mesh([0.0, 0.0], [0.0, 1.0], 1, 1).is_err());
        assert!(make_rect_mesh([0.0, 0.0], [1.0, 1.0], 0, 1).is_err());
    }

    #[test]
    fn tagging_top_edge() {
        let m = tag_boundary(&unit_square(2), top_edge_classifier).unwrap();
        assert_eq!(m.count_tag(BoundaryTag::GammaR), 2);
        assert_eq!(m.count_tag(BoundaryTag::GammaN), 6);
        m.validate().unwrap();
    }

    #[test]
    fn tagging_everything_insulated_is_rejected() {
        let err = tag_boundary(&unit_square(2), |_| BoundaryTag::GammaN).unwrap_err();
        assert!(matches!(err, Error::InvalidTagging(_)));
    }

    #[test]
    fn refinement_counts_and_mesh_size() {
        let m = unit_square(1);
        let r = refine_uniform(&m);
        assert_eq!(r.n_triangles(), 8);
        assert_eq!(r.boundary_edges.len(), 8);
        assert_eq!(mesh_size(&r), mesh_size(&m) / 2.0);
        r.validate().unwrap();

        let rr = refine_uniform(&r);
        assert_eq!(rr.n_triangles(), 32);
        assert_eq!(mesh_size(&rr), mesh_size(&m) / 4.0);
        rr.validate().unwrap();
    }

    #[test]
    fn refinement_inherits_tags() {
        let m = tag_boundary(&unit_square(2), top_edge_classifier).unwrap();
        let r = refine_uniform(&m);
        assert_eq!(r.count_tag(BoundaryTag::GammaR), 4);
        assert_eq!(r.count_tag(BoundaryTag::GammaN), 12);
        r.validate().unwrap();
    }

    #[test]
    fn area_preserved_across_refinements() {
        let mut m = make_rect_mesh([0.0, 0.0], [2.0, 1.5], 3, 2).unwrap();
        for _ in 0..3 {
            assert_relative_eq!(m.total_area(), 3.0, max_relative = 1e-12);
            m = refine_uniform(&m);
        }
        assert_relative_eq!(m.total_area(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn quasi_uniformity_constant_under_refinement() {
        let m = unit_square(2);
        let q0 = m.quasi_uniformity_ratio();
        let q1 = refine_uniform(&m).quasi_uniformity_ratio();
        let q2 = refine_uniform(&refine_uniform(&m)).quasi_uniformity_ratio();
        assert_relative_eq!(q0, q1, max_relative = 1e-12);
        assert_relative_eq!(q1, q2, max_relative = 1e-12);
    }

    #[test]
    fn boundary_length_by_tag() {
        let m = tag_boundary(&unit_square(4), top_edge_classifier).unwrap();
        assert_relative_eq!(
            m.boundary_length(BoundaryTag::GammaR),
            1.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            m.boundary_length(BoundaryTag::GammaN),
            3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn text_dump_golden() {
        let m = unit_square(1);
        let expected = "\
v 0 0
v 1 0
v 0 1
v 1 1
t 0 1 3
t 0 3 2
b 0 1 dirichlet
b 2 3 dirichlet
b 0 2 dirichlet
b 1 3 dirichlet
";
        assert_eq!(m.to_text(), expected);
    }

    #[test]
    fn f32_mesh_works() {
        let m = make_rect_mesh([0.0f32, 0.0], [1.0, 1.0], 2, 2).unwrap();
        assert_eq!(m.n_triangles(), 8);
        assert!((mesh_size(&m) - 2f32.sqrt() / 2.0).abs() < 1e-6);
    }
}
