//! Discrete Laplace–Beltrami spectra in conformal form.
//!
//! In two dimensions the Dirichlet energy does not see a conformal change of
//! metric, so the cotangent stiffness matrix depends on the mesh only and a
//! conformal density enters through the (lumped) mass matrix alone. The
//! pencil `L u = lambda M u` is solved by [`solve_spectrum`].

mod gradient;
mod report;
mod solver;
mod torus;

pub use gradient::{eigenvalue_gradient, eigenvalue_gradient_from};
pub use report::{detect_clusters, SpectrumReport, CLUSTER_TOL, TOL_ZERO};
pub use solver::{solve_spectrum, solve_spectrum_with, SolverMethod, SolverOptions};
pub use torus::flat_torus_closed_form;

use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Densities below this value are raised to it.
pub const DENSITY_FLOOR: f64 = 1e-9;
/// Cotangent magnitude above which a corner is clamped.
pub const COT_CLAMP: f64 = 1e6;

/// Positive per-vertex conformal weight (the discrete `f^2` of `f^2 g`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ConformalDensity(Vec<f64>);

impl ConformalDensity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let mut values = values;
        for (i, v) in values.iter_mut().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Density(format!(
                    "vertex {i} has non-positive or non-finite density {v}"
                )));
            }
            if *v < DENSITY_FLOOR {
                *v = DENSITY_FLOOR;
            }
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * c).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ConformalDensity {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ConformalDensity> for Vec<f64> {
    fn from(d: ConformalDensity) -> Self {
        d.0
    }
}

/// Lumped masses `m_i = rho_i * a_i` with `a_i` one third of the area of the
/// faces around vertex `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassVector {
    masses: Vec<f64>,
    area_shares: Vec<f64>,
}

impl MassVector {
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn area_shares(&self) -> &[f64] {
        &self.area_shares
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Conformal total area `V(g')`.
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub(crate) fn from_parts(area_shares: Vec<f64>, density: &[f64]) -> Self {
        let masses = area_shares.iter().zip(density).map(|(a, r)| a * r).collect();
        Self { masses, area_shares }
    }
}

pub fn assemble_mass(mesh: &TriangleMesh, density: &ConformalDensity) -> Result<MassVector> {
    if density.len() != mesh.num_vertices() {
        return Err(Error::Density(format!(
            "density has {} entries for {} vertices",
            density.len(),
            mesh.num_vertices()
        )));
    }
    Ok(MassVector::from_parts(mesh.vertex_area_shares(), density.values()))
}

/// A corner whose cotangent exceeded [`COT_CLAMP`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampWarning {
    pub face: usize,
    pub corner: usize,
    pub cotangent: f64,
}

/// Cotangent stiffness matrix: `L_ij = -(cot a_ij + cot b_ij) / 2` off the
/// diagonal, rows summing to zero.
#[derive(Debug, Clone)]
pub struct StiffnessOperator {
    matrix: CsMat<f64>,
    clamped: Vec<ClampWarning>,
}

impl StiffnessOperator {
    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    pub fn clamped(&self) -> &[ClampWarning] {
        &self.clamped
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j).copied().unwrap_or(0.0)
    }

    /// `y = L x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (i, row) in self.matrix.outer_iterator().enumerate() {
            y[i] = row.iter().map(|(j, &v)| v * x[j]).sum();
        }
        y
    }

    /// Dirichlet energy `x^T L x`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

pub fn assemble_stiffness(mesh: &TriangleMesh) -> StiffnessOperator {
    let n = mesh.num_vertices();
    let mut off = vec![0.0; mesh.num_edges()];
    let mut clamped = Vec::new();
    for f in 0..mesh.num_faces() {
        let cot = mesh.face_cotangents(f);
        let fe = face_edge_ids(mesh, f);
        for i in 0..3 {
            let mut c = cot[i];
            if c.abs() > COT_CLAMP || !c.is_finite() {
                let clamped_value = if c.is_nan() {
                    0.0
                } else {
                    c.clamp(-COT_CLAMP, COT_CLAMP)
                };
                log::warn!("face {f} corner {i}: cotangent {c:e} clamped to {clamped_value:e}");
                clamped.push(ClampWarning {
                    face: f,
                    corner: i,
                    cotangent: c,
                });
                c = clamped_value;
            }
            off[fe[i]] -= 0.5 * c;
        }
    }
    let mut diag = vec![0.0; n];
    let mut tri = TriMat::with_capacity((n, n), n + 2 * mesh.num_edges());
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        tri.add_triplet(a, b, off[e]);
        tri.add_triplet(b, a, off[e]);
        diag[a] -= off[e];
        diag[b] -= off[e];
    }
    for (i, d) in diag.into_iter().enumerate() {
        tri.add_triplet(i, i, d);
    }
    StiffnessOperator {
        matrix: tri.to_csr(),
        clamped,
    }
}

fn face_edge_ids(mesh: &TriangleMesh, f: usize) -> [usize; 3] {
    let face = mesh.faces()[f];
    let mut ids = [0; 3];
    for i in 0..3 {
        ids[i] = mesh
            .edge_between(face[(i + 1) % 3], face[(i + 2) % 3])
            .expect("face edge exists");
    }
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_flat_torus, build_icosphere, Lattice, MeshBuilder};

    /// Two equilateral triangles glued into a closed "pillow" share all
    /// three edges, so each edge sees two 60 degree angles.
    #[test]
    fn equilateral_pair_weight_is_minus_inv_sqrt3() {
        let s = 3f64.sqrt();
        let p = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, s / 2.0, 0.0]];
        let mut b = MeshBuilder::new(p, vec![[0, 1, 2], [0, 2, 1]]);
        b.set_length(0, 1, 1.0);
        b.set_length(1, 2, 1.0);
        b.set_length(0, 2, 1.0);
        // A two-face pillow has chi = 3 - 3 + 2 = 2 and is a valid sphere.
        let m = b.build().unwrap();
        let l = assemble_stiffness(&m);
        assert!((l.get(0, 1) + 1.0 / s).abs() < 1e-14);
        assert!((l.get(0, 0) - 2.0 / s).abs() < 1e-14);
    }

    #[test]
    fn rows_sum_to_zero() {
        for m in [
            build_icosphere(3).unwrap(),
            build_flat_torus(Lattice::equilateral(), 9).unwrap(),
        ] {
            let l = assemble_stiffness(&m);
            let ones = vec![1.0; m.num_vertices()];
            let worst = l.apply(&ones).iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(worst < 1e-10, "{worst}");
        }
    }

    #[test]
    fn stiffness_is_scale_invariant() {
        let m = build_icosphere(2).unwrap();
        let a = assemble_stiffness(&m);
        let b = assemble_stiffness(&m.scaled(3.7));
        for (i, row) in a.matrix().outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                assert!((v - b.get(i, j)).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn mass_examples() {
        let m = build_flat_torus(Lattice::square(), 8).unwrap();
        let n = m.num_vertices();
        let mass = assemble_mass(&m, &ConformalDensity::uniform(n)).unwrap();
        assert!((mass.total() - 1.0).abs() < 1e-12);
        let doubled = assemble_mass(&m, &ConformalDensity::constant(n, 2.0).unwrap()).unwrap();
        for (a, b) in mass.masses().iter().zip(doubled.masses()) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
        assert!(assemble_mass(&m, &ConformalDensity::uniform(n - 1)).is_err());
    }

    #[test]
    fn lumped_total_matches_face_average() {
        let m = build_icosphere(2).unwrap();
        let rho: Vec<f64> = (0..m.num_vertices())
            .map(|i| 1.0 + (i as f64 * 0.37).sin().abs())
            .collect();
        let mass = assemble_mass(&m, &ConformalDensity::new(rho.clone()).unwrap()).unwrap();
        let by_face: f64 = m
            .faces()
            .iter()
            .enumerate()
            .map(|(f, t)| m.face_area(f) * (rho[t[0]] + rho[t[1]] + rho[t[2]]) / 3.0)
            .sum();
        assert!((mass.total() - by_face).abs() < 1e-12 * by_face);
    }

    #[test]
    fn density_validation() {
        assert!(ConformalDensity::new(vec![1.0, 0.0]).is_err());
        assert!(ConformalDensity::new(vec![1.0, -2.0]).is_err());
        assert!(ConformalDensity::new(vec![f64::NAN]).is_err());
        assert_eq!(ConformalDensity::new(vec![1e-12]).unwrap().values(), &[DENSITY_FLOOR]);
        let json = serde_json::to_string(&ConformalDensity::uniform(2)).unwrap();
        assert_eq!(json, "[1.0,1.0]");
        assert!(serde_json::from_str::<ConformalDensity>("[1.0,-1.0]").is_err());
    }

    #[test]
    fn sliver_cotangents_are_clamped_and_logged() {
        // Pillow of two nearly flat triangles: the obtuse corner has a huge
        // negative cotangent.
        let mut b = MeshBuilder::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 1]],
        );
        b.set_length(0, 1, 1.0);
        b.set_length(1, 2, 1.0);
        b.set_length(0, 2, 2.0 - 1e-13);
        let m = b.build();
        // Either rejected as degenerate or clamped; never silently accepted.
        if let Ok(m) = m {
            assert!(!assemble_stiffness(&m).clamped().is_empty());
        }
    }
}
