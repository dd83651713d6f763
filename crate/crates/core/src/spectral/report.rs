use serde::{Deserialize, Serialize};

/// Relative gap below which neighbouring eigenvalues form one cluster.
pub const CLUSTER_TOL: f64 = 1e-3;
/// `lambda_0 <= TOL_ZERO * lambda_1` identifies the constant mode.
pub const TOL_ZERO: f64 = 1e-8;

/// Low end of the spectrum of a pencil `(L, M)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// `lambda_0 <= ... <= lambda_K`.
    pub eigenvalues: Vec<f64>,
    /// `lambda_k * V`.
    pub normalized: Vec<f64>,
    pub total_mass: f64,
    pub clusters: Vec<Vec<usize>>,
    /// Relative residual of every returned pair.
    pub residuals: Vec<f64>,
    /// M-orthonormal eigenvectors, one per eigenvalue, when requested.
    #[serde(skip)]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl SpectrumReport {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Cluster containing index `k`.
    pub fn cluster_of(&self, k: usize) -> &[usize] {
        self.clusters
            .iter()
            .find(|c| c.contains(&k))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_simple(&self, k: usize) -> bool {
        self.cluster_of(k).len() == 1
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Groups consecutive eigenvalues whose relative gap is below `tol`.
pub fn detect_clusters(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let joins = i > 0 && {
            let prev = values[i - 1];
            let scale = v.abs().max(prev.abs());
            scale > 0.0 && (v - prev).abs() <= tol * scale
        };
        match clusters.last_mut() {
            Some(last) if joins => last.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    clusters
}
