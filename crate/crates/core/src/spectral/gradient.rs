use super::{solve_spectrum, MassVector, SpectrumReport, StiffnessOperator};
use crate::error::{Error, Result};

/// Derivative of a simple eigenvalue `lambda_k` with respect to each vertex
/// density: `-lambda_k * u_k(i)^2 * a_i / (u^T M u)`.
///
/// Solves for `lambda_0 .. lambda_{k+1}` and widens the range while the
/// cluster containing `k` reaches its top.
pub fn eigenvalue_gradient(stiffness: &StiffnessOperator, mass: &MassVector, k: usize) -> Result<Vec<f64>> {
    let n = stiffness.dim();
    let mut count = (k + 1).min(n - 1).max(k);
    loop {
        let report = solve_spectrum(stiffness, mass, count, true)?;
        let touches_top = report.cluster_of(k).last() == Some(&count);
        if !touches_top || count >= n - 1 {
            return eigenvalue_gradient_from(&report, mass, k);
        }
        count = (2 * count).min(n - 1);
    }
}

/// Same as [`eigenvalue_gradient`] from an existing report with vectors.
pub fn eigenvalue_gradient_from(report: &SpectrumReport, mass: &MassVector, k: usize) -> Result<Vec<f64>> {
    if k >= report.count() {
        return Err(Error::InvalidArgument(format!(
            "index {k} outside the {} computed eigenvalues",
            report.count()
        )));
    }
    let cluster = report.cluster_of(k);
    if cluster.len() > 1 {
        return Err(Error::Multiplicity {
            index: k,
            cluster: cluster.to_vec(),
        });
    }
    let vectors = report
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("report carries no eigenvectors".into()))?;
    Ok(density_derivative(report.eigenvalues[k], &vectors[k], mass))
}

/// Derivative of the Rayleigh quotient `u^T L u / u^T M u` along each
/// vertex density, for a fixed vector `u`.
pub(crate) fn density_derivative(lambda: f64, u: &[f64], mass: &MassVector) -> Vec<f64> {
    let m = mass.masses();
    let a = mass.area_shares();
    let norm: f64 = u.iter().zip(m).map(|(x, mi)| x * x * mi).sum();
    u.iter().zip(a).map(|(x, ai)| -lambda * x * x * ai / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_icosphere;
    use crate::spectral::{assemble_mass, assemble_stiffness, ConformalDensity};

    #[test]
    fn uniform_scaling_direction_gives_minus_lambda() {
        let mesh = build_icosphere(1).unwrap();
        let rho: Vec<f64> = mesh
            .positions()
            .iter()
            .map(|p| 1.0 + 0.4 * p[0] + 0.2 * p[1] * p[2])
            .collect();
        let l = assemble_stiffness(&mesh);
        let mass = assemble_mass(&mesh, &ConformalDensity::new(rho.clone()).unwrap()).unwrap();
        let rep = solve_spectrum(&l, &mass, 6, true).unwrap();
        let k = (1..6).find(|&k| rep.is_simple(k)).expect("a simple eigenvalue");
        let g = eigenvalue_gradient_from(&rep, &mass, k).unwrap();
        let directional: f64 = g.iter().zip(&rho).map(|(a, b)| a * b).sum();
        assert!((directional + rep.eigenvalues[k]).abs() < 1e-10 * rep.eigenvalues[k]);
        assert!(g.iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn clustered_eigenvalue_is_refused() {
        let mesh = build_icosphere(2).unwrap();
        let l = assemble_stiffness(&mesh);
        let mass = assemble_mass(&mesh, &ConformalDensity::uniform(mesh.num_vertices())).unwrap();
        match eigenvalue_gradient(&l, &mass, 1) {
            Err(Error::Multiplicity { cluster, .. }) => assert_eq!(cluster, vec![1, 2, 3]),
            other => panic!("expected multiplicity error, got {other:?}"),
        }
    }
}
