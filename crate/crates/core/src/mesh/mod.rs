//! Closed orientable triangle meshes with intrinsic edge lengths.
//!
//! A [`TriangleMesh`] owns its connectivity, cosmetic 3-D positions and one
//! length per undirected edge. Every metric quantity (areas, angles, the
//! stiffness operator) is computed from the edge lengths alone, so meshes
//! whose metric is not the one induced by an embedding (flat tori, glued
//! surfaces) are represented exactly.

mod generate;
mod geodesic;
pub mod io;

pub use generate::{build_flat_torus, build_icosphere, Lattice, MAX_SUBDIVISIONS, MAX_TORUS_RESOLUTION};
pub use geodesic::{geodesic_ball_vertices, geodesic_distances};

use std::collections::HashMap;

use crate::error::{MeshError, Result};

pub type Point3 = [f64; 3];

/// Unordered edge key, smaller index first.
#[inline]
pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    positions: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_lengths: Vec<f64>,
    /// `face_edges[f][i]` is the edge opposite corner `i` of face `f`.
    face_edges: Vec<[usize; 3]>,
    edge_faces: Vec<[usize; 2]>,
    edge_index: HashMap<(usize, usize), usize>,
    vertex_faces: Vec<Vec<usize>>,
}

/// Collects positions, faces and intrinsic length overrides before
/// validation. Edges without an override take the Euclidean distance of
/// their endpoint positions.
#[derive(Debug, Clone, Default)]
pub struct MeshBuilder {
    pub positions: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
    pub lengths: HashMap<(usize, usize), f64>,
}

impl MeshBuilder {
    pub fn new(positions: Vec<Point3>, faces: Vec<[usize; 3]>) -> Self {
        Self {
            positions,
            faces,
            lengths: HashMap::new(),
        }
    }

    pub fn set_length(&mut self, a: usize, b: usize, length: f64) {
        self.lengths.insert(edge_key(a, b), length);
    }

    pub fn build(self) -> Result<TriangleMesh> {
        TriangleMesh::assemble(self.positions, self.faces, &self.lengths)
    }
}

impl TriangleMesh {
    /// Builds a mesh whose metric is induced by the vertex positions.
    pub fn new(positions: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::assemble(positions, faces, &HashMap::new())
    }

    fn assemble(
        positions: Vec<Point3>,
        faces: Vec<[usize; 3]>,
        overrides: &HashMap<(usize, usize), f64>,
    ) -> Result<Self> {
        let n = positions.len();
        if faces.is_empty() {
            return Err(MeshError::Empty.into());
        }
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                if v >= n {
                    return Err(MeshError::IndexOutOfRange {
                        face: f,
                        index: v,
                        count: n,
                    }
                    .into());
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::RepeatedVertex { face: f }.into());
            }
        }

        // Directed half-edges: each must appear exactly once.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        for (f, face) in faces.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (face[i], face[(i + 1) % 3]);
                if directed.insert((a, b), f).is_some() {
                    return Err(MeshError::InconsistentOrientation { a, b }.into());
                }
            }
        }

        let mut edge_index = HashMap::with_capacity(faces.len() * 3 / 2);
        let mut edges = Vec::with_capacity(faces.len() * 3 / 2);
        let mut edge_faces: Vec<[usize; 2]> = Vec::with_capacity(faces.len() * 3 / 2);
        let mut face_edges = vec![[0usize; 3]; faces.len()];
        for (f, face) in faces.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (face[(i + 1) % 3], face[(i + 2) % 3]);
                let key = edge_key(a, b);
                let e = match edge_index.get(&key) {
                    Some(&e) => e,
                    None => {
                        let twin = directed.get(&(b, a)).copied();
                        let Some(g) = twin else {
                            return Err(MeshError::BoundaryEdge { a, b }.into());
                        };
                        let e = edges.len();
                        edges.push([key.0, key.1]);
                        edge_faces.push([f, g]);
                        edge_index.insert(key, e);
                        e
                    }
                };
                face_edges[f][i] = e;
            }
        }
        // Every edge was created from its first face; a third face on the
        // same undirected edge necessarily repeats a directed half-edge,
        // which was rejected above. Count incident faces explicitly anyway to
        // report edges used by more than two faces through distinct pairs.
        let mut incidence = vec![0usize; edges.len()];
        for fe in &face_edges {
            for &e in fe {
                incidence[e] += 1;
            }
        }
        for (e, &count) in incidence.iter().enumerate() {
            if count != 2 {
                let [a, b] = edges[e];
                return Err(MeshError::NonManifoldEdge { a, b, faces: count }.into());
            }
        }

        let mut vertex_faces = vec![Vec::new(); n];
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                vertex_faces[v].push(f);
            }
        }
        for (v, incident) in vertex_faces.iter().enumerate() {
            if incident.is_empty() {
                return Err(MeshError::UnreferencedVertex { vertex: v }.into());
            }
        }
        check_vertex_links(&faces, &vertex_faces)?;

        let mut edge_lengths = Vec::with_capacity(edges.len());
        for &[a, b] in &edges {
            let length = match overrides.get(&(a, b)) {
                Some(&l) => l,
                None => distance(&positions[a], &positions[b]),
            };
            if !(length.is_finite() && length > 0.0) {
                return Err(MeshError::InvalidLength { a, b, length }.into());
            }
            edge_lengths.push(length);
        }

        let mesh = Self {
            positions,
            faces,
            edges,
            edge_lengths,
            face_edges,
            edge_faces,
            edge_index,
            vertex_faces,
        };

        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.face_lengths(f);
            let area = heron(a, b, c);
            let scale = a.max(b).max(c);
            if !(area > 1e-14 * scale * scale) {
                return Err(MeshError::DegenerateFace { face: f, area }.into());
            }
        }

        let components = mesh.connected_components();
        if components != 1 {
            return Err(MeshError::Disconnected { components }.into());
        }
        let chi = mesh.euler_characteristic();
        if chi > 2 || chi % 2 != 0 {
            return Err(MeshError::InvalidEuler { chi }.into());
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    pub fn edge_faces(&self, e: usize) -> [usize; 2] {
        self.edge_faces[e]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&edge_key(a, b)).copied()
    }

    pub fn edge_length(&self, a: usize, b: usize) -> Option<f64> {
        self.edge_between(a, b).map(|e| self.edge_lengths[e])
    }

    /// Lengths of the edges opposite the three corners of face `f`.
    pub fn face_lengths(&self, f: usize) -> [f64; 3] {
        let fe = self.face_edges[f];
        [
            self.edge_lengths[fe[0]],
            self.edge_lengths[fe[1]],
            self.edge_lengths[fe[2]],
        ]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_lengths(f);
        heron(a, b, c)
    }

    /// Cotangents of the three corner angles of face `f`.
    pub fn face_cotangents(&self, f: usize) -> [f64; 3] {
        let l = self.face_lengths(f);
        let area = heron(l[0], l[1], l[2]);
        let sq = [l[0] * l[0], l[1] * l[1], l[2] * l[2]];
        let mut cot = [0.0; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            cot[i] = (sq[j] + sq[k] - sq[i]) / (4.0 * area);
        }
        cot
    }

    /// Interior angles of face `f` at its three corners.
    pub fn face_angles(&self, f: usize) -> [f64; 3] {
        let l = self.face_lengths(f);
        let mut angles = [0.0; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let c = (l[j] * l[j] + l[k] * l[k] - l[i] * l[i]) / (2.0 * l[j] * l[k]);
            angles[i] = c.clamp(-1.0, 1.0).acos();
        }
        angles
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_faces()).map(|f| self.face_area(f)).sum()
    }

    /// One third of the area of the faces incident to each vertex.
    pub fn vertex_area_shares(&self) -> Vec<f64> {
        let mut shares = vec![0.0; self.num_vertices()];
        for (f, face) in self.faces.iter().enumerate() {
            let third = self.face_area(f) / 3.0;
            for &v in face {
                shares[v] += third;
            }
        }
        shares
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_faces() as i64
    }

    pub fn genus(&self) -> usize {
        ((2 - self.euler_characteristic()) / 2) as usize
    }

    /// Neighbouring vertices of `v` paired with the connecting edge index.
    pub fn neighbors(&self, v: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.vertex_faces[v].len());
        for &f in &self.vertex_faces[v] {
            let face = self.faces[f];
            let i = face.iter().position(|&x| x == v).unwrap();
            let w = face[(i + 1) % 3];
            out.push((w, self.edge_between(v, w).unwrap()));
        }
        out
    }

    /// Neighbours of `v` in counter-clockwise order, consistent with the
    /// face orientation.
    pub fn ordered_one_ring(&self, v: usize) -> Vec<usize> {
        let mut next = HashMap::with_capacity(self.vertex_faces[v].len());
        for &f in &self.vertex_faces[v] {
            let face = self.faces[f];
            let i = face.iter().position(|&x| x == v).unwrap();
            next.insert(face[(i + 1) % 3], face[(i + 2) % 3]);
        }
        let start = *next.keys().min().unwrap();
        let mut ring = vec![start];
        let mut cur = next[&start];
        while cur != start {
            ring.push(cur);
            cur = next[&cur];
        }
        ring
    }

    /// Copy of this mesh with every length (and position) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> TriangleMesh {
        let mut out = self.clone();
        for p in &mut out.positions {
            for x in p.iter_mut() {
                *x *= factor;
            }
        }
        for l in &mut out.edge_lengths {
            *l *= factor;
        }
        out
    }

    /// Builder pre-loaded with this mesh, every edge length pinned.
    pub fn to_builder(&self) -> MeshBuilder {
        let mut b = MeshBuilder::new(self.positions.clone(), self.faces.clone());
        for (e, &[a, c]) in self.edges.iter().enumerate() {
            b.lengths.insert((a, c), self.edge_lengths[e]);
        }
        b
    }

    /// True when every edge length equals the Euclidean distance of its
    /// endpoints to `rel_tol`.
    pub fn is_embedded_metric(&self, rel_tol: f64) -> bool {
        self.edges.iter().zip(&self.edge_lengths).all(|(&[a, b], &l)| {
            let d = distance(&self.positions[a], &self.positions[b]);
            (d - l).abs() <= rel_tol * l
        })
    }

    fn connected_components(&self) -> usize {
        let n = self.num_vertices();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &[a, b] in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n).filter(|&v| find(&mut parent, v) == v).count()
    }
}

fn check_vertex_links(faces: &[[usize; 3]], vertex_faces: &[Vec<usize>]) -> Result<()> {
    for (v, incident) in vertex_faces.iter().enumerate() {
        let mut next = HashMap::with_capacity(incident.len());
        for &f in incident {
            let face = faces[f];
            let i = face.iter().position(|&x| x == v).unwrap();
            if next.insert(face[(i + 1) % 3], face[(i + 2) % 3]).is_some() {
                return Err(MeshError::NonManifoldVertex { vertex: v }.into());
            }
        }
        let start = *next.keys().next().unwrap();
        let mut cur = start;
        let mut steps = 0;
        loop {
            let Some(&nx) = next.get(&cur) else {
                return Err(MeshError::NonManifoldVertex { vertex: v }.into());
            };
            cur = nx;
            steps += 1;
            if cur == start || steps > incident.len() {
                break;
            }
        }
        if steps != incident.len() {
            return Err(MeshError::NonManifoldVertex { vertex: v }.into());
        }
    }
    Ok(())
}

pub(crate) fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Triangle area from side lengths (Kahan's cancellation-free Heron form).
/// Returns 0 for lengths violating the triangle inequality.
pub fn heron(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    let [a, b, c] = s;
    let p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    if p <= 0.0 || !p.is_finite() {
        0.0
    } else {
        0.25 * p.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriangleMesh {
        let p = vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        TriangleMesh::new(p, f).unwrap()
    }

    #[test]
    fn tetrahedron_is_a_sphere() {
        let m = tetrahedron();
        assert_eq!(m.num_edges(), 6);
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.genus(), 0);
        let ring = m.ordered_one_ring(0);
        assert_eq!(ring.len(), 3);
    }

    #[test]
    fn open_surface_reports_boundary_edge() {
        let p = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3]];
        let err = TriangleMesh::new(p, f).unwrap_err();
        assert!(
            matches!(err, crate::Error::Mesh(MeshError::BoundaryEdge { .. })),
            "{err}"
        );
    }

    #[test]
    fn flipped_face_is_rejected() {
        let p = vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 2, 3]];
        let err = TriangleMesh::new(p, f).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Mesh(MeshError::InconsistentOrientation { .. })
        ));
    }

    #[test]
    fn degenerate_face_is_rejected() {
        let mut b = tetrahedron().to_builder();
        b.set_length(0, 1, 10.0);
        let err = b.build().unwrap_err();
        assert!(matches!(err, crate::Error::Mesh(MeshError::DegenerateFace { .. })));
    }

    #[test]
    fn pinched_vertex_is_rejected() {
        // Two tetrahedra sharing vertex 0.
        let mut p = tetrahedron().positions().to_vec();
        p.extend([[3.0, 3.0, 3.0], [3.0, 1.0, 1.0], [1.0, 3.0, 1.0]]);
        let mut f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        f.extend([[0, 4, 5], [0, 6, 4], [0, 5, 6], [4, 6, 5]]);
        let err = TriangleMesh::new(p, f).unwrap_err();
        assert!(
            matches!(err, crate::Error::Mesh(MeshError::NonManifoldVertex { .. })),
            "{err}"
        );
    }

    #[test]
    fn heron_matches_right_triangle() {
        assert!((heron(3.0, 4.0, 5.0) - 6.0).abs() < 1e-14);
        assert_eq!(heron(1.0, 1.0, 3.0), 0.0);
    }
}
