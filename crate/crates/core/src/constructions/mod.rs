//! Conformal factors of the flat-cap construction, local flattening of a
//! density, surgeries (gluing, collapse, handles) and their limit spectra.

mod surgery;

pub use surgery::{
    attach_handle, collapse_component, glue_surfaces, prepare_cap, GlueSpec, HandleSpec, PreparedCap, SurgeryOutput,
    GUEST, HOST, RING_VERTICES,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{geodesic_distances, io, TriangleMesh};
use crate::spectral::ConformalDensity;

/// Round-sphere conformal factor `4 / (1 + |x|^2)^2` in stereographic
/// coordinates.
pub fn stereographic_factor(x: [f64; 2]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    4.0 / (1.0 + r2).powi(2)
}

/// Parameters of the flat-cap metric `g_R` and its rescaled form with
/// prescribed flat-ball radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapSpec {
    pub r: f64,
    /// Radius `rho` of the coordinate ball outside of which the metric is
    /// flat; `None` leaves the coordinates unscaled (`rho = R`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
}

impl CapSpec {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cap parameter R = {r} must be positive"
            )));
        }
        Ok(Self { r, rho: None })
    }

    pub fn with_flat_radius(r: f64, rho: f64) -> Result<Self> {
        let mut spec = Self::new(r)?;
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!("flat radius {rho} must be positive")));
        }
        spec.rho = Some(rho);
        Ok(spec)
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_of_r(self.r)
    }
}

/// Radius `2R / (1 + R^2)` of the Euclidean ball isometric to `{|x| >= R}`
/// under `g_R`.
pub fn epsilon_of_r(r: f64) -> f64 {
    2.0 * r / (1.0 + r * r)
}

/// Conformal factor of `g_R` (or of the rescaled `g_{1,R,rho}`) at `x`.
pub fn cap_metric_factor(x: [f64; 2], spec: &CapSpec) -> f64 {
    cap_metric_factor_with(x, spec, |_| 1.0)
}

/// Conformal factor of `g_{f,R,rho}`: `f^2(Rx/rho) g_R(Rx/rho)` with the
/// Jacobian of the rescaling, where `profile` is `f` (taken as 1 outside
/// `|y| < R`).
pub fn cap_metric_factor_with(x: [f64; 2], spec: &CapSpec, profile: impl Fn([f64; 2]) -> f64) -> f64 {
    let r = spec.r;
    let rho = spec.rho.unwrap_or(r);
    let s = r / rho;
    let y = [s * x[0], s * x[1]];
    let ny2 = y[0] * y[0] + y[1] * y[1];
    let base = if ny2 <= r * r {
        let f = profile(y);
        f * f * stereographic_factor(y)
    } else {
        4.0 * r.powi(4) / ((1.0 + r * r).powi(2) * ny2 * ny2)
    };
    s * s * base
}

/// Result of [`flatten_density_near`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlattenedDensity {
    pub density: ConformalDensity,
    /// Quasi-isometry constant: the new metric lies within `(1 + delta)` of
    /// the old one in length.
    pub delta: f64,
}

/// Makes `density` constant (equal to its value at `vertex`) on the graph
/// ball of radius `radius`, leaves it unchanged beyond `radius + width`, and
/// blends `log rho` with a smoothstep in between.
pub fn flatten_density_near(
    mesh: &TriangleMesh,
    density: &ConformalDensity,
    vertex: usize,
    radius: f64,
    width: f64,
) -> Result<FlattenedDensity> {
    let n = mesh.num_vertices();
    if density.len() != n {
        return Err(Error::Density(format!(
            "density has {} entries for {n} vertices",
            density.len()
        )));
    }
    if vertex >= n {
        return Err(Error::InvalidArgument(format!("vertex {vertex} out of range")));
    }
    if !(radius >= 0.0) || !(width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} and width {width} must be non-negative and positive"
        )));
    }
    let d = geodesic_distances(mesh, vertex);
    let eccentricity = d.iter().cloned().fold(0.0, f64::max);
    if radius + width >= 0.5 * eccentricity {
        return Err(Error::Guard(format!(
            "flattening radius {radius} + width {width} reaches half the eccentricity {eccentricity:.4}"
        )));
    }
    let rho = density.values();
    let target = rho[vertex].ln();
    let mut out = Vec::with_capacity(n);
    let mut worst = 0.0f64;
    for (i, &r) in rho.iter().enumerate() {
        let t = ((d[i] - radius) / width).clamp(0.0, 1.0);
        let s = t * t * (3.0 - 2.0 * t);
        let log_new = (1.0 - s) * target + s * r.ln();
        worst = worst.max((log_new - r.ln()).abs());
        out.push(log_new.exp());
    }
    Ok(FlattenedDensity {
        density: ConformalDensity::new(out)?,
        delta: (0.5 * worst).exp() - 1.0,
    })
}

/// Sorted union of two spectra truncated to `count + 1` values.
pub fn union_spectrum_oracle(first: &[f64], second: &[f64], count: usize) -> Vec<f64> {
    let mut all: Vec<f64> = first.iter().chain(second).copied().collect();
    all.sort_by(f64::total_cmp);
    all.truncate(count + 1);
    all
}

/// Dirichlet eigenvalues `(m pi / l)^2`, `m = 1 ..= count`, of `[0, l]`.
pub fn dirichlet_segment_spectrum(length: f64, count: usize) -> Result<Vec<f64>> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "segment length {length} must be positive"
        )));
    }
    Ok((1..=count)
        .map(|m| (m as f64 * std::f64::consts::PI / length).powi(2))
        .collect())
}

/// JSON sidecar stored next to a surgery mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub component_labels: Vec<u8>,
    pub density: Vec<f64>,
    pub genus: usize,
    pub spec: serde_json::Value,
    /// Intrinsic edge lengths `[a, b, length]`; positions in the OFF file are
    /// only a rough embedding.
    pub edge_lengths: Vec<(usize, usize, f64)>,
}

/// Writes `<path>` as OFF and `<path>.json` as the sidecar.
pub fn save_surgery(output: &SurgeryOutput, path: &Path) -> Result<()> {
    std::fs::write(path, io::write_off(&output.mesh))?;
    let sidecar = Sidecar {
        component_labels: output.labels.clone(),
        density: output.density.values().to_vec(),
        genus: output.mesh.genus(),
        spec: output.spec.clone(),
        edge_lengths: output
            .mesh
            .edges()
            .iter()
            .zip(output.mesh.edge_lengths())
            .map(|(&[a, b], &l)| (a, b, l))
            .collect(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a mesh written by [`save_surgery`], restoring intrinsic lengths.
pub fn load_surgery(path: &Path) -> Result<SurgeryOutput> {
    decode_surgery(
        &std::fs::read_to_string(path)?,
        &std::fs::read_to_string(sidecar_path(path))?,
    )
}

/// Rebuilds a surgery output from OFF text and its JSON sidecar.
pub fn decode_surgery(off: &str, sidecar: &str) -> Result<SurgeryOutput> {
    let plain = io::parse_off(off)?;
    let sidecar: Sidecar = serde_json::from_str(sidecar)?;
    let mut builder = plain.to_builder();
    builder.lengths.clear();
    for &(a, b, l) in &sidecar.edge_lengths {
        builder.set_length(a, b, l);
    }
    let mesh = builder.build()?;
    if sidecar.component_labels.len() != mesh.num_vertices() || sidecar.density.len() != mesh.num_vertices() {
        return Err(Error::InvalidArgument(
            "sidecar labels or density do not match the mesh".into(),
        ));
    }
    if mesh.genus() != sidecar.genus {
        return Err(Error::InvalidArgument(format!(
            "sidecar genus {} differs from mesh genus {}",
            sidecar.genus,
            mesh.genus()
        )));
    }
    Ok(SurgeryOutput {
        density: ConformalDensity::new(sidecar.density)?,
        labels: sidecar.component_labels,
        spec: sidecar.spec,
        mesh,
    })
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_icosphere;
    use std::f64::consts::PI;

    #[test]
    fn stereographic_examples() {
        assert_eq!(stereographic_factor([0.0, 0.0]), 4.0);
        assert!((stereographic_factor([0.6, 0.8]) - 1.0).abs() < 1e-15);
        let mut prev = 4.0;
        for i in 1..50 {
            let v = stereographic_factor([i as f64 * 0.2, 0.0]);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn cap_factor_examples() {
        let one = CapSpec::new(1.0).unwrap();
        assert!((cap_metric_factor([1.0, 0.0], &one) - 1.0).abs() < 1e-15);
        assert!((cap_metric_factor([1.0 + 1e-12, 0.0], &one) - 1.0).abs() < 1e-10);
        assert_eq!(epsilon_of_r(1.0), 1.0);
        assert!((epsilon_of_r(3.0) - 0.6).abs() < 1e-15);
        assert!(epsilon_of_r(1e-9) < 1e-8);
        assert!(CapSpec::new(0.0).is_err());
    }

    #[test]
    fn cap_factor_continuity_and_flat_radius() {
        for r in [0.3, 1.0, 2.5] {
            let spec = CapSpec::new(r).unwrap();
            let inside = cap_metric_factor([r * (1.0 - 1e-12), 0.0], &spec);
            let outside = cap_metric_factor([0.0, r * (1.0 + 1e-12)], &spec);
            assert!((inside - outside).abs() < 1e-9 * inside);
            // At |x| = rho the factor is eps(R)^2 / rho^2.
            let rho = 0.7;
            let s = CapSpec::with_flat_radius(r, rho).unwrap();
            let v = cap_metric_factor([rho, 0.0], &s);
            assert!((v - epsilon_of_r(r).powi(2) / (rho * rho)).abs() < 1e-12 * v);
        }
    }

    #[test]
    fn outer_region_is_a_flat_disk_of_radius_eps() {
        // Inversion y = x / |x|^2 maps {|x| >= R} onto {|y| <= 1/R}; the
        // factor becomes constant, and the disk radius is sqrt(c) / R.
        let r = 2.0;
        let spec = CapSpec::new(r).unwrap();
        let mut radii = Vec::new();
        for &y in &[0.1, 0.3, 0.45] {
            let x = 1.0 / y;
            let pulled = cap_metric_factor([x, 0.0], &spec) * x.powi(4);
            radii.push(pulled.sqrt() / r);
        }
        for rad in radii {
            assert!((rad - epsilon_of_r(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_constant_is_identity() {
        let m = build_icosphere(2).unwrap();
        let rho = ConformalDensity::constant(m.num_vertices(), 2.5).unwrap();
        let f = flatten_density_near(&m, &rho, 0, 0.3, 0.2).unwrap();
        assert_eq!(f.delta, 0.0);
        assert_eq!(f.density.values(), rho.values());
    }

    #[test]
    fn flatten_guard_and_shape() {
        let m = build_icosphere(3).unwrap();
        let rho = ConformalDensity::new(m.positions().iter().map(|p| 1.5 + p[0]).collect()).unwrap();
        assert!(matches!(
            flatten_density_near(&m, &rho, 0, 1.2, 0.5),
            Err(Error::Guard(_))
        ));
        let f = flatten_density_near(&m, &rho, 0, 0.3, 0.2).unwrap();
        let d = geodesic_distances(&m, 0);
        for (i, &di) in d.iter().enumerate() {
            if di <= 0.3 {
                assert!((f.density.values()[i] - rho.values()[0]).abs() < 1e-12);
            } else if di >= 0.5 {
                assert_eq!(f.density.values()[i], rho.values()[i]);
            }
        }
        assert!(f.delta > 0.0);
    }

    #[test]
    fn union_examples() {
        let half = 16.0 * PI;
        let s = [0.0, half, half, half];
        let u = union_spectrum_oracle(&s, &s, 7);
        assert_eq!(u, vec![0.0, 0.0, half, half, half, half, half, half]);
        assert_eq!(union_spectrum_oracle(&s, &[], 3), s.to_vec());
    }

    #[test]
    fn segment_examples() {
        let v = dirichlet_segment_spectrum(1.0, 3).unwrap();
        assert!((v[0] - PI * PI).abs() < 1e-12 && (v[1] - 4.0 * PI * PI).abs() < 1e-12);
        assert!((v[2] - 9.0 * PI * PI).abs() < 1e-11);
        assert!((dirichlet_segment_spectrum(2.0, 1).unwrap()[0] - PI * PI / 4.0).abs() < 1e-12);
        assert!(dirichlet_segment_spectrum(0.1, 1).unwrap()[0] > 8.0 * PI * 3.0);
        assert!(dirichlet_segment_spectrum(0.0, 1).is_err());
    }
}
