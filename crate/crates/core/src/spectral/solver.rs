//! Generalized symmetric eigensolver for `L u = lambda M u` with `M`
//! diagonal and positive.
//!
//! Small pencils go through a dense symmetric eigendecomposition of
//! `M^{-1/2} L M^{-1/2}`. Larger ones use block LOBPCG on the pencil,
//! preconditioned by an `LDL^T` factorization of `L + sigma M`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sprs::CsMat;
use sprs_ldl::{Ldl, LdlNumeric};

use super::report::{detect_clusters, SpectrumReport, CLUSTER_TOL, TOL_ZERO};
use super::{MassVector, StiffnessOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Dense below `dense_threshold` vertices, LOBPCG above.
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative residual target per eigenpair.
    pub tol: f64,
    /// Iteration cap; `None` means `10 * K * sqrt(V)`.
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub method: SolverMethod,
    pub dense_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: None,
            seed: 42,
            method: SolverMethod::Auto,
            dense_threshold: 400,
        }
    }
}

/// Lowest `count + 1` eigenpairs `lambda_0 .. lambda_count`.
pub fn solve_spectrum(
    stiffness: &StiffnessOperator,
    mass: &MassVector,
    count: usize,
    want_vectors: bool,
) -> Result<SpectrumReport> {
    solve_spectrum_with(stiffness, mass, count, want_vectors, &SolverOptions::default(), None)
}

pub fn solve_spectrum_with(
    stiffness: &StiffnessOperator,
    mass: &MassVector,
    count: usize,
    want_vectors: bool,
    options: &SolverOptions,
    warm_start: Option<&[Vec<f64>]>,
) -> Result<SpectrumReport> {
    let n = stiffness.dim();
    if mass.len() != n {
        return Err(Error::InvalidArgument(format!(
            "mass has {} entries, stiffness is {n}x{n}",
            mass.len()
        )));
    }
    if count < 1 || count + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "requested {count} eigenvalues beyond lambda_0 on a mesh with {n} vertices"
        )));
    }
    let m = mass.masses();
    let nev = count + 1;
    let dense = match options.method {
        SolverMethod::Dense => true,
        SolverMethod::Iterative => false,
        SolverMethod::Auto => n <= options.dense_threshold,
    };
    let (values, vectors, iterations) = if dense {
        let (v, x) = dense_pencil(stiffness.matrix(), m, nev);
        (v, x, 0)
    } else {
        let max_iter = options
            .max_iterations
            .unwrap_or_else(|| (((10 * count) as f64 * (n as f64).sqrt()).ceil() as usize).max(50));
        lobpcg(stiffness.matrix(), m, nev, options, max_iter, warm_start)?
    };

    let residuals = relative_residuals(stiffness.matrix(), m, &values, &vectors);
    let total_mass = mass.total();
    let mut warnings = Vec::new();
    if values.len() > 1 && values[0] > TOL_ZERO * values[1] {
        warnings.push(format!("lambda_0 = {:e} exceeds {TOL_ZERO:e} * lambda_1", values[0]));
    }
    if !stiffness.clamped().is_empty() {
        warnings.push(format!("{} cotangents clamped", stiffness.clamped().len()));
    }
    Ok(SpectrumReport {
        normalized: values.iter().map(|v| v * total_mass).collect(),
        clusters: detect_clusters(&values, CLUSTER_TOL),
        eigenvalues: values,
        total_mass,
        residuals,
        eigenvectors: want_vectors.then_some(vectors),
        iterations,
        warnings,
    })
}

/// `||L u - lambda M u||_{M^-1} / (scale * ||u||_M)` with `scale` the largest
/// returned eigenvalue.
fn relative_residuals(l: &CsMat<f64>, m: &[f64], values: &[f64], vectors: &[Vec<f64>]) -> Vec<f64> {
    let scale = values
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(f64::MIN_POSITIVE);
    values
        .iter()
        .zip(vectors)
        .map(|(&lambda, u)| {
            let mut r2 = 0.0;
            let mut norm2 = 0.0;
            for (i, row) in l.outer_iterator().enumerate() {
                let lu: f64 = row.iter().map(|(j, &v)| v * u[j]).sum();
                let r = lu - lambda * m[i] * u[i];
                r2 += r * r / m[i];
                norm2 += m[i] * u[i] * u[i];
            }
            r2.sqrt() / (scale * norm2.sqrt())
        })
        .collect()
}

fn dense_pencil(l: &CsMat<f64>, m: &[f64], nev: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let inv_sqrt: Vec<f64> = m.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, row) in l.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            a[(i, j)] = v * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    // Exact symmetry before the decomposition.
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let mut values = Vec::with_capacity(nev);
    let mut vectors = Vec::with_capacity(nev);
    for &k in order.iter().take(nev) {
        values.push(eig.eigenvalues[k]);
        let col = eig.eigenvectors.column(k);
        vectors.push((0..n).map(|i| col[i] * inv_sqrt[i]).collect());
    }
    (values, vectors)
}

struct Pencil<'a> {
    l: &'a CsMat<f64>,
    m: &'a [f64],
    factor: LdlNumeric<f64, usize>,
}

impl Pencil<'_> {
    fn apply_l(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            for (i, row) in self.l.outer_iterator().enumerate() {
                yc[i] = row.iter().map(|(j, &v)| v * xc[j]).sum();
            }
        }
        y
    }

    fn apply_m(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x.clone();
        for c in 0..y.ncols() {
            for (i, v) in y.column_mut(c).iter_mut().enumerate() {
                *v *= self.m[i];
            }
        }
        y
    }

    fn precondition(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(r.nrows(), r.ncols());
        for c in 0..r.ncols() {
            let rhs: Vec<f64> = r.column(c).iter().copied().collect();
            let sol = self.factor.solve(&rhs);
            w.set_column(c, &DVector::from_vec(sol));
        }
        w
    }

    /// M-orthonormal basis of the column span of `s`, dropping numerically
    /// dependent directions (two passes of SVQB).
    fn orthonormalize(&self, s: DMatrix<f64>) -> DMatrix<f64> {
        let mut s = s;
        for _ in 0..2 {
            if s.ncols() == 0 {
                return s;
            }
            let g = s.transpose() * self.apply_m(&s);
            let g = (&g + g.transpose()) * 0.5;
            let d: Vec<f64> = (0..g.nrows())
                .map(|i| g[(i, i)].max(f64::MIN_POSITIVE).sqrt().recip())
                .collect();
            let mut scaled = g.clone();
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    scaled[(i, j)] *= d[i] * d[j];
                }
            }
            let eig = SymmetricEigen::new(scaled);
            let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
            let keep: Vec<usize> = (0..eig.eigenvalues.len())
                .filter(|&i| eig.eigenvalues[i] > 1e-13 * max)
                .collect();
            let mut t = DMatrix::zeros(g.nrows(), keep.len());
            for (c, &k) in keep.iter().enumerate() {
                let inv = eig.eigenvalues[k].sqrt().recip();
                for i in 0..g.nrows() {
                    t[(i, c)] = d[i] * eig.eigenvectors[(i, k)] * inv;
                }
            }
            s *= t;
        }
        s
    }

    /// Rayleigh–Ritz on an M-orthonormal basis; returns the `keep` lowest
    /// Ritz pairs.
    fn rayleigh_ritz(&self, s: &DMatrix<f64>, keep: usize) -> (Vec<f64>, DMatrix<f64>) {
        let h = s.transpose() * self.apply_l(s);
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let keep = keep.min(order.len());
        let mut c = DMatrix::zeros(s.ncols(), keep);
        let mut theta = Vec::with_capacity(keep);
        for (col, &k) in order.iter().take(keep).enumerate() {
            theta.push(eig.eigenvalues[k]);
            c.set_column(col, &eig.eigenvectors.column(k));
        }
        (theta, s * c)
    }
}

fn lobpcg(
    l: &CsMat<f64>,
    m: &[f64],
    nev: usize,
    options: &SolverOptions,
    max_iter: usize,
    warm_start: Option<&[Vec<f64>]>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let n = m.len();
    let guard = (nev / 2).max(4);
    let block = (nev + guard).min(n / 3).max(nev);
    if block * 3 > n {
        return Err(Error::InvalidArgument(format!(
            "{nev} eigenpairs on {n} vertices is too dense for the iterative solver"
        )));
    }

    let total_mass: f64 = m.iter().sum();
    let sigma = 1.0 / total_mass;
    let mut shifted = l.clone();
    for (i, mut row) in shifted.outer_iterator_mut().enumerate() {
        for (j, v) in row.iter_mut() {
            if i == j {
                *v += sigma * m[i];
            }
        }
    }
    let factor = Ldl::new()
        .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
        .numeric(shifted.view())
        .map_err(|e| Error::IllConditioned(format!("factorization of L + sigma M failed: {e}")))?;
    let pencil = Pencil { l, m, factor };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut x = DMatrix::<f64>::from_fn(n, block, |_, _| rng.gen_range(-1.0..1.0));
    if let Some(warm) = warm_start {
        for (c, v) in warm.iter().take(block).enumerate() {
            if v.len() == n {
                x.set_column(c, &DVector::from_column_slice(v));
            }
        }
    }
    let x = pencil.orthonormalize(x);
    let (mut theta, mut x) = pencil.rayleigh_ritz(&x, block);
    let mut p: Option<DMatrix<f64>> = None;
    let mut residuals = vec![f64::INFINITY; nev];

    for iter in 0..max_iter {
        let lx = pencil.apply_l(&x);
        let mut r = lx - pencil.apply_m(&x) * DMatrix::from_diagonal(&DVector::from_vec(theta.clone()));
        let scale = theta[nev - 1]
            .abs()
            .max(theta.iter().fold(0.0f64, |a, &b| a.max(b.abs())) * 1e-3);
        let col_res: Vec<f64> = (0..x.ncols())
            .map(|c| {
                let s: f64 = r.column(c).iter().zip(m).map(|(v, mi)| v * v / mi).sum();
                s.sqrt() / scale
            })
            .collect();
        residuals.copy_from_slice(&col_res[..nev]);
        if residuals.iter().all(|&res| res < options.tol) {
            let values = theta[..nev].to_vec();
            let vectors = (0..nev).map(|c| x.column(c).iter().copied().collect()).collect();
            return Ok((values, vectors, iter));
        }

        // Columns still moving; converged ones are soft-locked.
        let active: Vec<usize> = (0..x.ncols()).filter(|&c| col_res[c] >= 0.1 * options.tol).collect();
        let mut ra = DMatrix::zeros(n, active.len());
        for (k, &c) in active.iter().enumerate() {
            ra.set_column(k, &r.column(c));
        }
        r = ra;
        let w = pencil.precondition(&r);

        let extra = p.as_ref().map_or(0, |p| p.ncols());
        let mut s = DMatrix::zeros(n, x.ncols() + w.ncols() + extra);
        s.columns_mut(0, x.ncols()).copy_from(&x);
        s.columns_mut(x.ncols(), w.ncols()).copy_from(&w);
        if let Some(p) = &p {
            s.columns_mut(x.ncols() + w.ncols(), extra).copy_from(p);
        }
        let s = pencil.orthonormalize(s);
        let (new_theta, new_x) = pencil.rayleigh_ritz(&s, block);
        if new_x.ncols() < block {
            return Err(Error::IllConditioned("search space collapsed".into()));
        }
        // Component of the new block outside the old one.
        let overlap = x.transpose() * pencil.apply_m(&new_x);
        p = Some(&new_x - &x * overlap);
        x = new_x;
        theta = new_theta;
    }

    let worst = residuals.iter().fold(0.0f64, |a, &b| a.max(b));
    Err(Error::NotConverged {
        iterations: max_iter,
        worst,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_flat_torus, build_icosphere, Lattice};
    use crate::spectral::{assemble_mass, assemble_stiffness, ConformalDensity};

    fn both_routes(
        mesh: &crate::mesh::TriangleMesh,
        density: &ConformalDensity,
        k: usize,
    ) -> (SpectrumReport, SpectrumReport) {
        let l = assemble_stiffness(mesh);
        let m = assemble_mass(mesh, density).unwrap();
        let dense = SolverOptions {
            method: SolverMethod::Dense,
            ..Default::default()
        };
        let iter = SolverOptions {
            method: SolverMethod::Iterative,
            ..Default::default()
        };
        (
            solve_spectrum_with(&l, &m, k, true, &dense, None).unwrap(),
            solve_spectrum_with(&l, &m, k, true, &iter, None).unwrap(),
        )
    }

    #[test]
    fn iterative_route_agrees_with_dense_route() {
        let mesh = build_icosphere(2).unwrap();
        let rho: Vec<f64> = mesh
            .positions()
            .iter()
            .map(|p| 1.0 + 0.5 * p[2] + 0.3 * p[0] * p[1])
            .collect();
        let (d, it) = both_routes(&mesh, &ConformalDensity::new(rho).unwrap(), 8);
        for (a, b) in d.eigenvalues.iter().zip(&it.eigenvalues).skip(1) {
            assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
        }
        assert!(it.residuals.iter().all(|&r| r < 1e-9));
    }

    #[test]
    fn iterative_route_resolves_sixfold_cluster() {
        let mesh = build_flat_torus(Lattice::equilateral(), 24).unwrap();
        let (d, it) = both_routes(&mesh, &ConformalDensity::uniform(mesh.num_vertices()), 7);
        for (a, b) in d.eigenvalues.iter().zip(&it.eigenvalues).skip(1) {
            assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
        }
        assert_eq!(it.cluster_of(1), &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn eigenvectors_are_m_orthonormal() {
        let mesh = build_icosphere(3).unwrap();
        let l = assemble_stiffness(&mesh);
        let m = assemble_mass(&mesh, &ConformalDensity::uniform(mesh.num_vertices())).unwrap();
        let rep = solve_spectrum(&l, &m, 5, true).unwrap();
        let u = rep.eigenvectors.as_ref().unwrap();
        for a in 0..u.len() {
            for b in 0..u.len() {
                let g: f64 = (0..m.len()).map(|i| u[a][i] * m.masses()[i] * u[b][i]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-8, "gram[{a}][{b}] = {g}");
            }
        }
        // Constant kernel.
        assert!(rep.eigenvalues[0].abs() < 1e-8 * rep.eigenvalues[1]);
        let u0 = &u[0];
        let spread = u0.iter().fold(0.0f64, |a, &b| a.max((b - u0[0]).abs()));
        assert!(spread < 1e-6 * u0[0].abs());
    }

    #[test]
    fn count_is_validated() {
        let mesh = build_icosphere(0).unwrap();
        let l = assemble_stiffness(&mesh);
        let m = assemble_mass(&mesh, &ConformalDensity::uniform(12)).unwrap();
        assert!(solve_spectrum(&l, &m, 0, false).is_err());
        assert!(solve_spectrum(&l, &m, 12, false).is_err());
        assert!(solve_spectrum(&l, &m, 11, false).is_ok());
    }

    #[test]
    fn iteration_cap_reports_best_residuals() {
        let mesh = build_icosphere(3).unwrap();
        let l = assemble_stiffness(&mesh);
        let m = assemble_mass(&mesh, &ConformalDensity::uniform(mesh.num_vertices())).unwrap();
        let opts = SolverOptions {
            method: SolverMethod::Iterative,
            max_iterations: Some(1),
            tol: 1e-14,
            ..Default::default()
        };
        match solve_spectrum_with(&l, &m, 4, false, &opts, None) {
            Err(Error::NotConverged { residuals, .. }) => assert_eq!(residuals.len(), 5),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
