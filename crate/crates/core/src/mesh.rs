//! Conforming triangulations of convex polygonal domains.
//!
//! Meshes are immutable after construction. Uniform (red) refinement splits
//! every triangle into four congruent children, so the maximal mesh size
//! halves exactly and shape regularity is preserved.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-conforming mesh: edge ({0}, {1}) shared by {2} elements")]
    NonConforming(usize, usize, usize),
    #[error("element {0} is degenerate (zero area)")]
    DegenerateElement(usize),
    #[error("boundary edge mismatch: edge ({0}, {1})")]
    BoundaryMismatch(usize, usize),
    #[error("domain polygon is not convex at boundary vertex {0}")]
    NonConvex(usize),
    #[error("vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("boundary is not a single closed loop")]
    BrokenBoundary,
}

/// Affine map from the reference simplex {(0,0),(1,0),(0,1)} onto an element.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub matrix: [[f64; 2]; 2],
    pub offset: [f64; 2],
    pub inverse: [[f64; 2]; 2],
    pub det: f64,
}

impl AffineMap {
    pub fn new(p0: Point, p1: Point, p2: Point) -> Self {
        let matrix = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        let inverse = [
            [matrix[1][1] / det, -matrix[0][1] / det],
            [-matrix[1][0] / det, matrix[0][0] / det],
        ];
        AffineMap { matrix, offset: p0, inverse, det }
    }

    /// Reference coordinates -> physical coordinates.
    pub fn apply(&self, xi: Point) -> Point {
        [
            self.matrix[0][0] * xi[0] + self.matrix[0][1] * xi[1] + self.offset[0],
            self.matrix[1][0] * xi[0] + self.matrix[1][1] * xi[1] + self.offset[1],
        ]
    }

    /// Physical coordinates -> reference coordinates.
    pub fn apply_inverse(&self, x: Point) -> Point {
        let d = [x[0] - self.offset[0], x[1] - self.offset[1]];
        [
            self.inverse[0][0] * d[0] + self.inverse[0][1] * d[1],
            self.inverse[1][0] * d[0] + self.inverse[1][1] * d[1],
        ]
    }

    /// Chain rule factor: grad_phys = inv(J)^T * grad_ref.
    pub fn grad_to_physical(&self, gref: Point) -> Point {
        [
            self.inverse[0][0] * gref[0] + self.inverse[1][0] * gref[1],
            self.inverse[0][1] * gref[0] + self.inverse[1][1] * gref[1],
        ]
    }
}

/// All elements touching a center element (sharing at least a vertex), S_E.
#[derive(Debug, Clone)]
pub struct Patch {
    pub center: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub elements: Vec<[usize; 3]>,
    /// Normalized (min, max) vertex pairs.
    pub boundary_edges: Vec<[usize; 2]>,
    /// Unique edges, normalized (min, max), in deterministic order.
    pub edges: Vec<[usize; 2]>,
    /// For each element, the global edge id opposite to local vertex i.
    pub element_edges: Vec<[usize; 3]>,
    /// Neighbor across the edge opposite to local vertex i, if any.
    pub element_neighbors: Vec<[Option<usize>; 3]>,
    pub boundary_vertex: Vec<bool>,
    pub boundary_edge_flag: Vec<bool>,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Mesh {
    pub fn from_data(
        vertices: Vec<Point>,
        mut elements: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
    ) -> Result<Mesh, MeshError> {
        for (ei, e) in elements.iter_mut().enumerate() {
            for &v in e.iter() {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange(v));
                }
            }
            let a = vertices[e[0]];
            let b = vertices[e[1]];
            let c = vertices[e[2]];
            let sa = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if sa == 0.0 {
                return Err(MeshError::DegenerateElement(ei));
            }
            if sa < 0.0 {
                e.swap(1, 2); // normalize to counterclockwise
            }
        }

        // Edge table: local edge i is opposite local vertex i.
        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_elems: Vec<Vec<usize>> = Vec::new();
        let mut element_edges = vec![[0usize; 3]; elements.len()];
        for (ei, e) in elements.iter().enumerate() {
            for le in 0..3 {
                let a = e[(le + 1) % 3];
                let b = e[(le + 2) % 3];
                let key = [a.min(b), a.max(b)];
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_elems.push(Vec::new());
                    edges.len() - 1
                });
                edge_elems[id].push(ei);
                element_edges[ei][le] = id;
            }
        }
        for (id, elems) in edge_elems.iter().enumerate() {
            if elems.len() > 2 {
                return Err(MeshError::NonConforming(edges[id][0], edges[id][1], elems.len()));
            }
        }

        // Boundary edges must be exactly the edges owned by one element.
        let mut expected: Vec<[usize; 2]> = edge_elems
            .iter()
            .enumerate()
            .filter(|(_, v)| v.len() == 1)
            .map(|(id, _)| edges[id])
            .collect();
        let mut given: Vec<[usize; 2]> = boundary_edges
            .iter()
            .map(|&[a, b]| [a.min(b), a.max(b)])
            .collect();
        expected.sort_unstable();
        given.sort_unstable();
        if expected != given {
            let off = given
                .iter()
                .find(|e| expected.binary_search(e).is_err())
                .or_else(|| expected.iter().find(|e| given.binary_search(e).is_err()))
                .copied()
                .unwrap_or([0, 0]);
            return Err(MeshError::BoundaryMismatch(off[0], off[1]));
        }

        let mut element_neighbors = vec![[None; 3]; elements.len()];
        for (ei, ee) in element_edges.iter().enumerate() {
            for le in 0..3 {
                element_neighbors[ei][le] =
                    edge_elems[ee[le]].iter().copied().find(|&other| other != ei);
            }
        }

        let mut boundary_vertex = vec![false; vertices.len()];
        let boundary_edge_flag: Vec<bool> =
            edge_elems.iter().map(|v| v.len() == 1).collect();
        for (id, &flag) in boundary_edge_flag.iter().enumerate() {
            if flag {
                boundary_vertex[edges[id][0]] = true;
                boundary_vertex[edges[id][1]] = true;
            }
        }

        let mesh = Mesh {
            vertices,
            elements,
            boundary_edges: expected,
            edges,
            element_edges,
            element_neighbors,
            boundary_vertex,
            boundary_edge_flag,
        };
        mesh.check_convex()?;
        Ok(mesh)
    }

    /// Walk the boundary loop and check convexity of the domain polygon.
    fn check_convex(&self) -> Result<(), MeshError> {
        let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
        for e in &self.boundary_edges {
            next.entry(e[0]).or_default().push(e[1]);
            next.entry(e[1]).or_default().push(e[0]);
        }
        if next.values().any(|v| v.len() != 2) {
            return Err(MeshError::BrokenBoundary);
        }
        let start = self.boundary_edges[0][0];
        let mut loop_vs = vec![start];
        let mut prev = start;
        let mut cur = next[&start][0];
        while cur != start {
            loop_vs.push(cur);
            let nbrs = &next[&cur];
            let nxt = if nbrs[0] == prev { nbrs[1] } else { nbrs[0] };
            prev = cur;
            cur = nxt;
            if loop_vs.len() > self.boundary_edges.len() {
                return Err(MeshError::BrokenBoundary);
            }
        }
        if loop_vs.len() != self.boundary_edges.len() {
            return Err(MeshError::BrokenBoundary);
        }
        // Signed turn at each vertex must have one sign (collinear allowed).
        let n = loop_vs.len();
        let mut sign = 0.0f64;
        for i in 0..n {
            let a = self.vertices[loop_vs[i]];
            let b = self.vertices[loop_vs[(i + 1) % n]];
            let c = self.vertices[loop_vs[(i + 2) % n]];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            let scale = dist(a, b) * dist(b, c);
            if cross.abs() < 1e-12 * scale {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return Err(MeshError::NonConvex(loop_vs[(i + 1) % n]));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
        let text = std::fs::read_to_string(path)?;
        Mesh::parse(&text)
    }

    /// Plain-text format: "V E B" counts, V vertex lines, E element lines,
    /// B boundary-edge lines. '#' starts a comment.
    pub fn parse(text: &str) -> Result<Mesh, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let perr = |line: usize, msg: &str| MeshError::Parse { line, msg: msg.to_string() };

        let (hline, header) = lines.next().ok_or_else(|| perr(0, "empty file"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(hline, "bad count")))
            .collect::<Result<_, _>>()?;
        if counts.len() != 3 {
            return Err(perr(hline, "expected header 'V E B'"));
        }
        let (nv, ne, nb) = (counts[0], counts[1], counts[2]);

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing vertex line"))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad coordinate")))
                .collect::<Result<_, _>>()?;
            if xs.len() != 2 {
                return Err(perr(ln, "expected 'x y'"));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing element line"))?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad vertex id")))
                .collect::<Result<_, _>>()?;
            if ids.len() != 3 {
                return Err(perr(ln, "expected 'i j k'"));
            }
            elements.push([ids[0], ids[1], ids[2]]);
        }
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing boundary line"))?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad vertex id")))
                .collect::<Result<_, _>>()?;
            if ids.len() != 2 {
                return Err(perr(ln, "expected 'i j'"));
            }
            boundary.push([ids[0], ids[1]]);
        }
        Mesh::from_data(vertices, elements, boundary)
    }

    /// Unit square split along the main diagonal (2 elements).
    pub fn unit_square() -> Mesh {
        Mesh::from_data(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![[0, 1], [1, 2], [2, 3], [3, 0]],
        )
        .expect("builtin mesh")
    }

    /// Unit square with a center vertex (4 elements).
    pub fn unit_square_crisscross() -> Mesh {
        Mesh::from_data(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]],
            vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
            vec![[0, 1], [1, 2], [2, 3], [3, 0]],
        )
        .expect("builtin mesh")
    }

    pub fn builtin(tag: &str) -> Option<Mesh> {
        match tag {
            "unit_square" => Some(Mesh::unit_square()),
            "unit_square_crisscross" => Some(Mesh::unit_square_crisscross()),
            _ => None,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_vertices(&self, e: usize) -> [Point; 3] {
        let el = self.elements[e];
        [self.vertices[el[0]], self.vertices[el[1]], self.vertices[el[2]]]
    }

    pub fn affine_map(&self, e: usize) -> AffineMap {
        let [a, b, c] = self.element_vertices(e);
        AffineMap::new(a, b, c)
    }

    pub fn element_area(&self, e: usize) -> f64 {
        0.5 * self.affine_map(e).det
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_vertices(e);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn element_inradius(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_vertices(e);
        let (la, lb, lc) = (dist(b, c), dist(c, a), dist(a, b));
        let s = 0.5 * (la + lb + lc);
        self.element_area(e) / s
    }

    pub fn element_barycenter(&self, e: usize) -> Point {
        let [a, b, c] = self.element_vertices(e);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.element_diameter(e))
            .fold(0.0, f64::max)
    }

    pub fn area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_area(e)).sum()
    }

    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.vertices.len() {
            for j in (i + 1)..self.vertices.len() {
                d = d.max(dist(self.vertices[i], self.vertices[j]));
            }
        }
        d
    }

    /// Max over elements of diam(E) / inradius(E).
    pub fn shape_regularity(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.element_diameter(e) / self.element_inradius(e))
            .fold(0.0, f64::max)
    }

    /// S_E for every element: all elements sharing at least one vertex with E.
    pub fn patches(&self) -> Vec<Patch> {
        let mut vertex_elems: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for (ei, e) in self.elements.iter().enumerate() {
            for &v in e {
                vertex_elems[v].push(ei);
            }
        }
        (0..self.n_elements())
            .map(|ei| {
                let mut members: Vec<usize> = self.elements[ei]
                    .iter()
                    .flat_map(|&v| vertex_elems[v].iter().copied())
                    .collect();
                members.sort_unstable();
                members.dedup();
                Patch { center: ei, members }
            })
            .collect()
    }

    /// Elements adjacent to each vertex.
    pub fn vertex_elements(&self) -> Vec<Vec<usize>> {
        let mut vertex_elems: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for (ei, e) in self.elements.iter().enumerate() {
            for &v in e {
                vertex_elems[v].push(ei);
            }
        }
        vertex_elems
    }

    /// Red refinement: each triangle split into 4 congruent children.
    pub fn refine_uniform(&self) -> Mesh {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        // one new vertex per edge, indexed nv + edge_id
        for e in &self.edges {
            let a = self.vertices[e[0]];
            let b = self.vertices[e[1]];
            vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        let mut elements = Vec::with_capacity(4 * self.n_elements());
        for (ei, el) in self.elements.iter().enumerate() {
            let m = [
                nv + self.element_edges[ei][0], // midpoint opposite v0: (v1,v2)
                nv + self.element_edges[ei][1],
                nv + self.element_edges[ei][2],
            ];
            elements.push([el[0], m[2], m[1]]);
            elements.push([el[1], m[0], m[2]]);
            elements.push([el[2], m[1], m[0]]);
            elements.push([m[0], m[1], m[2]]);
        }
        let mut boundary = Vec::with_capacity(2 * self.boundary_edges.len());
        for (id, e) in self.edges.iter().enumerate() {
            if self.boundary_edge_flag[id] {
                boundary.push([e[0], nv + id]);
                boundary.push([nv + id, e[1]]);
            }
        }
        Mesh::from_data(vertices, elements, boundary).expect("refinement preserves validity")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_triangle_square() {
        let m = Mesh::unit_square();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.boundary_edges.len(), 4);
        assert!((m.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crisscross_counts() {
        let m = Mesh::unit_square_crisscross();
        assert_eq!(m.vertices.len(), 5);
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.boundary_edges.len(), 4);
    }

    #[test]
    fn duplicated_element_rejected() {
        let r = Mesh::from_data(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 1, 2], [0, 2, 3]],
            vec![[0, 1], [1, 2], [2, 3], [3, 0]],
        );
        assert!(matches!(r, Err(MeshError::NonConforming(..))));
    }

    #[test]
    fn nonconvex_rejected() {
        // L-shaped domain
        let r = Mesh::from_data(
            vec![
                [0.0, 0.0],
                [2.0, 0.0],
                [2.0, 1.0],
                [1.0, 1.0],
                [1.0, 2.0],
                [0.0, 2.0],
            ],
            vec![[0, 1, 3], [1, 2, 3], [0, 3, 4], [0, 4, 5]],
            vec![[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 0]],
        );
        assert!(matches!(r, Err(MeshError::NonConvex(_))));
    }

    #[test]
    fn parse_roundtrip_and_errors() {
        let text = "# unit square\n4 2 4\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n0 1\n1 2\n2 3\n3 0\n";
        let m = Mesh::parse(text).unwrap();
        assert_eq!(m.n_elements(), 2);
        let bad = "4 2 4\n0 0\nnope 0\n";
        match Mesh::parse(bad) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn refinement_counts_and_h() {
        let m = Mesh::unit_square();
        let r = m.refine_uniform();
        assert_eq!(r.n_elements(), 8);
        assert_eq!(r.vertices.len(), 9);
        assert!((r.h_max() - m.h_max() / 2.0).abs() < 1e-14);
        assert!((r.shape_regularity() - m.shape_regularity()).abs() < 1e-12);
        assert!((r.area() - m.area()).abs() < 1e-12);
    }

    #[test]
    fn shape_regularity_closed_forms() {
        // single equilateral triangle: diam/inradius = 2*sqrt(3)
        let s = 3.0f64.sqrt() / 2.0;
        let m = Mesh::from_data(
            vec![[0.0, 0.0], [1.0, 0.0], [0.5, s]],
            vec![[0, 1, 2]],
            vec![[0, 1], [1, 2], [2, 0]],
        )
        .unwrap();
        assert!((m.shape_regularity() - 2.0 * 3.0f64.sqrt()).abs() < 1e-12);

        // right isoceles (legs 1): diam = sqrt(2), inradius = (a+b-c)/2
        let m = Mesh::from_data(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![[0, 1], [1, 2], [2, 0]],
        )
        .unwrap();
        let expected = 2.0f64.sqrt() / ((2.0 - 2.0f64.sqrt()) / 2.0);
        assert!((m.shape_regularity() - expected).abs() < 1e-12);
        assert!((expected - 4.8284271247461903).abs() < 1e-10);
    }

    #[test]
    fn patches_two_element_square() {
        let m = Mesh::unit_square();
        let patches = m.patches();
        for p in &patches {
            assert_eq!(p.members.len(), 2);
            assert!(p.members.contains(&p.center));
        }
    }

    #[test]
    fn patch_cardinality_stable_under_refinement() {
        let mut m = Mesh::unit_square_crisscross();
        let mut maxima = Vec::new();
        let mut area_ratios = Vec::new();
        for _ in 0..4 {
            m = m.refine_uniform();
            let patches = m.patches();
            maxima.push(patches.iter().map(|p| p.members.len()).max().unwrap());
            let ratio = patches
                .iter()
                .map(|p| {
                    let sa: f64 = p.members.iter().map(|&e| m.element_area(e)).sum();
                    sa / m.element_area(p.center)
                })
                .fold(0.0f64, f64::max);
            area_ratios.push(ratio);
        }
        // one cardinality bound and one area constant m once the pattern settles
        assert!(maxima[1..].iter().all(|&c| c == *maxima.last().unwrap()));
        let m0 = area_ratios[1];
        assert!(area_ratios[1..].iter().all(|&r| (r - m0).abs() < 1e-9));
    }

    #[test]
    fn interior_patch_uniform_pattern() {
        // After refining the 2-element square 3 times, interior vertices have
        // valence 6, giving 13-element patches for interior elements.
        let mut m = Mesh::unit_square();
        for _ in 0..3 {
            m = m.refine_uniform();
        }
        let max_members = m.patches().iter().map(|p| p.members.len()).max().unwrap();
        assert_eq!(max_members, 13);
    }

    #[test]
    fn refinement_nesting() {
        let m = Mesh::unit_square_crisscross();
        let r = m.refine_uniform();
        // every child vertex set is contained in the parent's closure
        for ci in 0..r.n_elements() {
            let parent = ci / 4;
            let pm = m.affine_map(parent);
            for &v in &r.elements[ci] {
                let xi = pm.apply_inverse(r.vertices[v]);
                assert!(xi[0] >= -1e-12 && xi[1] >= -1e-12 && xi[0] + xi[1] <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn conformity_interior_edges() {
        let m = Mesh::unit_square_crisscross().refine_uniform();
        for (id, flag) in m.boundary_edge_flag.iter().enumerate() {
            let owners = m
                .element_edges
                .iter()
                .flatten()
                .filter(|&&e| e == id)
                .count();
            assert_eq!(owners, if *flag { 1 } else { 2 });
        }
    }
}
