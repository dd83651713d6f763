use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{MeshBuilder, Point3, TriangleMesh};
use crate::error::{Error, Result};

pub const MAX_SUBDIVISIONS: u32 = 8;
pub const MAX_TORUS_RESOLUTION: usize = 512;

/// Unit icosphere obtained by `subdivisions` rounds of 1-to-4 midpoint
/// subdivision of the icosahedron, with vertices projected to the sphere.
pub fn build_icosphere(subdivisions: u32) -> Result<TriangleMesh> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::ResourceLimit(format!(
            "icosphere subdivision {subdivisions} exceeds the cap of {MAX_SUBDIVISIONS}"
        )));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Point3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, positions: &mut Vec<Point3>| -> usize {
            *midpoints.entry(super::edge_key(a, b)).or_insert_with(|| {
                let (p, q) = (positions[a], positions[b]);
                positions.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                positions.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut positions);
            let bc = midpoint(b, c, &mut positions);
            let ca = midpoint(c, a, &mut positions);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(positions, faces)
}

fn normalize(p: Point3) -> Point3 {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Basis of a lattice in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub e1: [f64; 2],
    pub e2: [f64; 2],
}

impl Lattice {
    pub fn new(e1: [f64; 2], e2: [f64; 2]) -> Result<Self> {
        let lattice = Self { e1, e2 };
        if !(e1.iter().chain(&e2).all(|x| x.is_finite())) || lattice.covolume() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lattice vectors {e1:?}, {e2:?} are not linearly independent"
            )));
        }
        Ok(lattice)
    }

    pub fn square() -> Self {
        Self {
            e1: [1.0, 0.0],
            e2: [0.0, 1.0],
        }
    }

    pub fn equilateral() -> Self {
        Self {
            e1: [1.0, 0.0],
            e2: [0.5, 3f64.sqrt() / 2.0],
        }
    }

    /// Rectangular lattice with `|e2| / |e1| = ratio`.
    pub fn rectangular(ratio: f64) -> Result<Self> {
        Self::new([1.0, 0.0], [0.0, ratio])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            e1: [self.e1[0] * factor, self.e1[1] * factor],
            e2: [self.e2[0] * factor, self.e2[1] * factor],
        }
    }

    /// Area of the fundamental domain, `|e1 x e2|`.
    pub fn covolume(&self) -> f64 {
        (self.e1[0] * self.e2[1] - self.e1[1] * self.e2[0]).abs()
    }

    /// Angle between the basis vectors, in radians within `[0, pi/2]`
    /// after folding obtuse angles.
    pub fn angle(&self) -> f64 {
        let dot = self.e1[0] * self.e2[0] + self.e1[1] * self.e2[1];
        let n = norm2(self.e1) * norm2(self.e2);
        let a = (dot / n).clamp(-1.0, 1.0).acos();
        a.min(PI - a)
    }

    /// Dual basis `e_i* . e_j = delta_ij`.
    pub fn dual(&self) -> Lattice {
        let det = self.e1[0] * self.e2[1] - self.e1[1] * self.e2[0];
        Lattice {
            e1: [self.e2[1] / det, -self.e2[0] / det],
            e2: [-self.e1[1] / det, self.e1[0] / det],
        }
    }

    pub fn point(&self, s: f64, t: f64) -> [f64; 2] {
        [s * self.e1[0] + t * self.e2[0], s * self.e1[1] + t * self.e2[1]]
    }
}

impl std::str::FromStr for Lattice {
    type Err = Error;

    /// Accepts `equilateral`, `square`, `elongated:<ratio>` (rectangular) or
    /// four comma-separated numbers `e1x,e1y,e2x,e2y`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "equilateral" => return Ok(Lattice::equilateral()),
            "square" => return Ok(Lattice::square()),
            _ => {}
        }
        let bad = || Error::InvalidArgument(format!("unrecognized lattice {s:?}"));
        if let Some(r) = t.strip_prefix("elongated:") {
            let ratio: f64 = r.trim().parse().map_err(|_| bad())?;
            if !(ratio > 0.0) || !ratio.is_finite() {
                return Err(bad());
            }
            return Lattice::rectangular(ratio);
        }
        let v: Vec<f64> = t
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        if v.len() != 4 {
            return Err(bad());
        }
        Lattice::new([v[0], v[1]], [v[2], v[3]])
    }
}

fn norm2(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Flat torus `R^2 / lattice` triangulated on a `resolution x resolution`
/// grid of the fundamental domain. Edge lengths are the exact flat lengths;
/// positions are a cosmetic torus of revolution.
pub fn build_flat_torus(lattice: Lattice, resolution: usize) -> Result<TriangleMesh> {
    let lattice = Lattice::new(lattice.e1, lattice.e2)?;
    if resolution < 4 {
        return Err(Error::InvalidArgument(format!(
            "torus resolution {resolution} is below the minimum of 4"
        )));
    }
    if resolution > MAX_TORUS_RESOLUTION {
        return Err(Error::ResourceLimit(format!(
            "torus resolution {resolution} exceeds the cap of {MAX_TORUS_RESOLUTION}"
        )));
    }
    if lattice.angle() < 1f64.to_radians() {
        return Err(Error::IllConditioned(format!(
            "lattice angle {:.4} deg is below 1 deg",
            lattice.angle().to_degrees()
        )));
    }

    let r = resolution;
    let h = 1.0 / r as f64;
    let idx = |i: usize, j: usize| (i % r) * r + (j % r);
    let major = 2.0 * norm2(lattice.e1).max(norm2(lattice.e2));
    let minor = 0.5 * major;
    let mut positions = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            let (u, v) = (2.0 * PI * i as f64 * h, 2.0 * PI * j as f64 * h);
            positions.push([
                (major + minor * v.cos()) * u.cos(),
                (major + minor * v.cos()) * u.sin(),
                minor * v.sin(),
            ]);
        }
    }

    // Split each cell along its shorter diagonal.
    let d_main = norm2(lattice.point(h, h));
    let d_anti = norm2(lattice.point(-h, h));
    let main_diagonal = d_main <= d_anti;
    let orientation = (lattice.e1[0] * lattice.e2[1] - lattice.e1[1] * lattice.e2[0]).signum();

    let mut builder = MeshBuilder::new(positions, Vec::with_capacity(2 * r * r));
    for i in 0..r {
        for j in 0..r {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            // Corner offsets (in grid steps) of a, b, c, d.
            let offsets = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
            let ids = [a, b, c, d];
            let tris: [[usize; 3]; 2] = if main_diagonal {
                [[0, 1, 2], [0, 2, 3]]
            } else {
                [[0, 1, 3], [1, 2, 3]]
            };
            for t in tris {
                let mut tri = t;
                if orientation < 0.0 {
                    tri.swap(1, 2);
                }
                builder.faces.push([ids[tri[0]], ids[tri[1]], ids[tri[2]]]);
                for k in 0..3 {
                    let (p, q) = (tri[k], tri[(k + 1) % 3]);
                    let ds = (offsets[q].0 - offsets[p].0) * h;
                    let dt = (offsets[q].1 - offsets[p].1) * h;
                    builder.set_length(ids[p], ids[q], norm2(lattice.point(ds, dt)));
                }
            }
        }
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    #[test]
    fn lattice_parsing() {
        assert_eq!("equilateral".parse::<Lattice>().unwrap(), Lattice::equilateral());
        assert_eq!("Square".parse::<Lattice>().unwrap(), Lattice::square());
        assert_eq!(
            "elongated:1.4".parse::<Lattice>().unwrap(),
            Lattice::rectangular(1.4).unwrap()
        );
        assert_eq!(
            "1,0, 0.5,2".parse::<Lattice>().unwrap(),
            Lattice::new([1.0, 0.0], [0.5, 2.0]).unwrap()
        );
        for bad in [
            "",
            "hex",
            "elongated:",
            "elongated:-1",
            "elongated:nan",
            "1,0,2,0",
            "1,2,3",
            "1,0,0,inf",
        ] {
            assert!(bad.parse::<Lattice>().is_err(), "{bad}");
        }
    }

    use super::*;

    #[test]
    fn icosahedron_counts() {
        let m = build_icosphere(0).unwrap();
        assert_eq!((m.num_vertices(), m.num_faces()), (12, 20));
        assert_eq!(m.genus(), 0);
    }

    #[test]
    fn vertex_count_follows_edge_recurrence() {
        // V_{s+1} = V_s + E_s and E_s = 3 F_s / 2 with F_s = 20 * 4^s.
        let mut v = 12usize;
        for s in 0..=4u32 {
            let m = build_icosphere(s).unwrap();
            let f = 20 * 4usize.pow(s);
            assert_eq!(m.num_vertices(), v);
            assert_eq!(m.num_faces(), f);
            assert_eq!(m.genus(), 0);
            v += 3 * f / 2;
        }
        let m = build_icosphere(2).unwrap();
        assert_eq!((m.num_vertices(), m.num_faces()), (162, 320));
    }

    #[test]
    fn icosphere_vertices_on_unit_sphere() {
        let m = build_icosphere(3).unwrap();
        for p in m.positions() {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - 1.0).abs() < 1e-14);
        }
        assert!(m.is_embedded_metric(1e-14));
    }

    #[test]
    fn icosphere_cap_is_a_resource_limit() {
        assert!(matches!(build_icosphere(9), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn square_and_equilateral_torus_areas() {
        let sq = build_flat_torus(Lattice::square(), 8).unwrap();
        assert_eq!(sq.genus(), 1);
        assert!((sq.total_area() - 1.0).abs() < 1e-12);
        let eq = build_flat_torus(Lattice::equilateral(), 8).unwrap();
        assert_eq!(eq.genus(), 1);
        assert!((eq.total_area() - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn equilateral_torus_is_made_of_equilateral_triangles() {
        let m = build_flat_torus(Lattice::equilateral(), 6).unwrap();
        for &l in m.edge_lengths() {
            assert!((l - 1.0 / 6.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_lattice_is_ill_conditioned() {
        let l = Lattice::new([1.0, 0.0], [1.0, 0.01]).unwrap();
        assert!(matches!(build_flat_torus(l, 8), Err(Error::IllConditioned(_))));
        assert!(Lattice::new([1.0, 0.0], [2.0, 0.0]).is_err());
    }

    #[test]
    fn negatively_oriented_lattice_still_builds() {
        let l = Lattice::new([0.0, 1.0], [1.0, 0.0]).unwrap();
        let m = build_flat_torus(l, 5).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dual_lattice_pairs_to_identity() {
        let l = Lattice::new([1.3, 0.2], [0.4, 0.9]).unwrap();
        let d = l.dual();
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        assert!((dot(l.e1, d.e1) - 1.0).abs() < 1e-14);
        assert!(dot(l.e1, d.e2).abs() < 1e-14);
        assert!(dot(l.e2, d.e1).abs() < 1e-14);
        assert!((dot(l.e2, d.e2) - 1.0).abs() < 1e-14);
    }
}
