//! Experiment drivers that wire the modules together and emit
//! self-contained reports.
//!
//! Every report carries the [`ExperimentInputs`] that produced it, so
//! [`rerun`] can reproduce it, and every check cites an id of the
//! [`BoundTable`].

use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{corollary1_bound, gap_bound, sphere_normalized_eigenvalue, BoundTable};
use crate::constructions::{
    attach_handle, collapse_component, dirichlet_segment_spectrum, glue_surfaces, union_spectrum_oracle, GlueSpec,
    HandleSpec, RING_VERTICES,
};
use crate::error::{Error, Result};
use crate::mesh::{build_flat_torus, build_icosphere, geodesic_distances, io, Lattice, TriangleMesh};
use crate::optimize::{maximize_lambda_k, OptimizerOptions};
use crate::spectral::{
    assemble_mass, assemble_stiffness, flat_torus_closed_form, solve_spectrum_with, ConformalDensity, SolverOptions,
    SpectrumReport, TOL_ZERO,
};

/// Where a mesh comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSource {
    Icosphere { subdivisions: u32 },
    Torus { lattice: Lattice, resolution: usize },
    File { path: PathBuf },
}

impl MeshSource {
    pub fn load(&self) -> Result<TriangleMesh> {
        match self {
            MeshSource::Icosphere { subdivisions } => build_icosphere(*subdivisions),
            MeshSource::Torus { lattice, resolution } => build_flat_torus(*lattice, *resolution),
            MeshSource::File { path } => io::load_mesh(path),
        }
    }

    fn is_sphere(&self) -> bool {
        matches!(self, MeshSource::Icosphere { .. })
    }

    fn is_equilateral_torus(&self) -> bool {
        match self {
            MeshSource::Torus { lattice, .. } => {
                let n1 = lattice.e1[0].hypot(lattice.e1[1]);
                let n2 = lattice.e2[0].hypot(lattice.e2[1]);
                (n1 / n2 - 1.0).abs() < 1e-9 && (lattice.angle() - PI / 3.0).abs() < 1e-9
            }
            _ => false,
        }
    }
}

/// Parses `icosphere:<subdivisions>`, `torus:<lattice>:<resolution>` or a
/// mesh file path.
impl FromStr for MeshSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("icosphere:") {
            let subdivisions = rest
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad icosphere subdivision count {rest:?}")))?;
            return Ok(MeshSource::Icosphere { subdivisions });
        }
        if let Some(rest) = s.strip_prefix("torus:") {
            let (lattice, res) = rest
                .rsplit_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("expected torus:<lattice>:<resolution>, got {s:?}")))?;
            let resolution = res
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad torus resolution {res:?}")))?;
            return Ok(MeshSource::Torus {
                lattice: lattice.parse()?,
                resolution,
            });
        }
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty mesh source".into()));
        }
        Ok(MeshSource::File { path: PathBuf::from(s) })
    }
}

/// Where a density comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySource {
    Uniform,
    /// JSON array of per-vertex values.
    File {
        path: PathBuf,
    },
}

impl DensitySource {
    pub fn load(&self, mesh: &TriangleMesh) -> Result<ConformalDensity> {
        let rho = match self {
            DensitySource::Uniform => ConformalDensity::uniform(mesh.num_vertices()),
            DensitySource::File { path } => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        };
        if rho.len() != mesh.num_vertices() {
            return Err(Error::Density(format!(
                "density has {} entries for {} vertices",
                rho.len(),
                mesh.num_vertices()
            )));
        }
        Ok(rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|value - target| <= tolerance * |target|`.
    Within,
    /// `value >= target * (1 - tolerance)`.
    AtLeast,
    /// `value <= target + tolerance`.
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    /// Id of the cited [`BoundTable`] entry or formula.
    pub target_id: String,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        value: f64,
        target: f64,
        target_id: &str,
        tolerance: f64,
        relation: Relation,
    ) -> Result<Self> {
        if !BoundTable::standard().contains(target_id) {
            return Err(Error::UnknownName(format!("bound id {target_id}")));
        }
        let pass = value.is_finite()
            && match relation {
                Relation::Within => (value - target).abs() <= tolerance * target.abs(),
                Relation::AtLeast => value >= target * (1.0 - tolerance),
                Relation::AtMost => value <= target + tolerance,
            };
        Ok(Self {
            name: name.into(),
            value,
            target,
            target_id: target_id.to_string(),
            tolerance,
            relation,
            pass,
        })
    }

    /// A yes/no property, recorded as `value = 1` for true against target 1.
    pub fn holds(name: impl Into<String>, ok: bool, target_id: &str) -> Result<Self> {
        Self::new(name, if ok { 1.0 } else { 0.0 }, 1.0, target_id, 0.0, Relation::Within)
    }
}

/// Plot-ready numeric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub inputs: ExperimentInputs,
    pub values: Value,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub caveats: Vec<String>,
    pub wall_time_s: f64,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Checks table followed by every data table, each preceded by a
    /// `# name` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# checks\nname,value,target,target_id,tolerance,relation,pass\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{:.15e},{:.15e},{},{:e},{:?},{}\n",
                c.name, c.value, c.target, c.target_id, c.tolerance, c.relation, c.pass
            ));
        }
        for t in &self.tables {
            out.push_str(&format!("# {}\n{}\n", t.name, t.columns.join(",")));
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(|x| format!("{x:.15e}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        out
    }
}

/// How a glue sweep is compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GlueMode {
    /// Neck radius sweep against the union of both spectra.
    Union,
    /// Fixed neck, guest density scaled by `scale^2`, against the host alone.
    Collapse { neck: f64, scales: Vec<f64> },
}

/// Complete, re-runnable description of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentInputs {
    Spectrum {
        mesh: MeshSource,
        density: DensitySource,
        k: usize,
        tolerance: f64,
        solver: SolverOptions,
    },
    Maximize {
        mesh: MeshSource,
        k: usize,
        options: OptimizerOptions,
        slack: f64,
        /// Icosphere subdivision of the reference sphere run.
        sphere_reference: Option<u32>,
    },
    Gap {
        mesh: MeshSource,
        k: usize,
        options: OptimizerOptions,
        slack: f64,
        /// Neck radii of two glued copies of the mesh offered as extra
        /// candidates for `lambda_bar_{k+1}`.
        glue_epsilons: Vec<f64>,
    },
    Glue {
        host: MeshSource,
        guest: MeshSource,
        epsilons: Vec<f64>,
        k: usize,
        mode: GlueMode,
        tolerance: f64,
        solver: SolverOptions,
    },
    Handle {
        mesh: MeshSource,
        epsilons: Vec<f64>,
        length: f64,
        /// Size of the union window.
        window: usize,
        /// Leading normalized eigenvalues compared with the host.
        k: usize,
        tolerance: f64,
        solver: SolverOptions,
    },
}

impl ExperimentInputs {
    fn name(&self) -> &'static str {
        match self {
            ExperimentInputs::Spectrum { .. } => "spectrum",
            ExperimentInputs::Maximize { .. } => "maximize",
            ExperimentInputs::Gap { .. } => "gap",
            ExperimentInputs::Glue { .. } => "glue",
            ExperimentInputs::Handle { .. } => "handle",
        }
    }

    fn seed(&self) -> u64 {
        match self {
            ExperimentInputs::Spectrum { solver, .. }
            | ExperimentInputs::Glue { solver, .. }
            | ExperimentInputs::Handle { solver, .. } => solver.seed,
            ExperimentInputs::Maximize { options, .. } | ExperimentInputs::Gap { options, .. } => options.seed,
        }
    }
}

struct Body {
    values: Value,
    tables: Vec<Table>,
    checks: Vec<Check>,
    caveats: Vec<String>,
}

/// Runs an experiment from its inputs block.
pub fn run(inputs: &ExperimentInputs) -> Result<ExperimentReport> {
    let start = Instant::now();
    log::info!("running {} with seed {}", inputs.name(), inputs.seed());
    let body = match inputs {
        ExperimentInputs::Spectrum {
            mesh,
            density,
            k,
            tolerance,
            solver,
        } => spectrum_body(mesh, density, *k, *tolerance, solver)?,
        ExperimentInputs::Maximize {
            mesh,
            k,
            options,
            slack,
            sphere_reference,
        } => maximize_body(mesh, *k, options, *slack, *sphere_reference)?,
        ExperimentInputs::Gap {
            mesh,
            k,
            options,
            slack,
            glue_epsilons,
        } => gap_body(mesh, *k, options, *slack, glue_epsilons)?,
        ExperimentInputs::Glue {
            host,
            guest,
            epsilons,
            k,
            mode,
            tolerance,
            solver,
        } => glue_body(host, guest, epsilons, *k, mode, *tolerance, solver)?,
        ExperimentInputs::Handle {
            mesh,
            epsilons,
            length,
            window,
            k,
            tolerance,
            solver,
        } => handle_body(mesh, epsilons, *length, *window, *k, *tolerance, solver)?,
    };
    Ok(ExperimentReport {
        experiment: inputs.name().to_string(),
        inputs: inputs.clone(),
        values: body.values,
        tables: body.tables,
        checks: body.checks,
        caveats: body.caveats,
        wall_time_s: start.elapsed().as_secs_f64(),
        seed: inputs.seed(),
    })
}

/// Re-runs `report` from its inputs block and adds a check that every
/// numeric value was reproduced to `1e-9` relative.
pub fn rerun(report: &ExperimentReport) -> Result<ExperimentReport> {
    let mut fresh = run(&report.inputs)?;
    let worst = max_relative_difference(&report.values, &fresh.values);
    fresh.checks.push(Check::new(
        "reproduced_values",
        worst,
        0.0,
        "reproducibility",
        1e-9,
        Relation::AtMost,
    )?);
    Ok(fresh)
}

/// Largest relative difference between matching numbers of two JSON
/// values; infinite when the shapes differ.
pub fn max_relative_difference(a: &Value, b: &Value) -> f64 {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            let d = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
            if d.is_nan() {
                f64::INFINITY
            } else {
                d
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
            .iter()
            .zip(y)
            .map(|(p, q)| max_relative_difference(p, q))
            .fold(0.0, f64::max),
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => x
            .iter()
            .map(|(key, p)| y.get(key).map_or(f64::INFINITY, |q| max_relative_difference(p, q)))
            .fold(0.0, f64::max),
        _ if a == b => 0.0,
        _ => f64::INFINITY,
    }
}

fn solve(mesh: &TriangleMesh, rho: &ConformalDensity, k: usize, solver: &SolverOptions) -> Result<SpectrumReport> {
    let stiffness = assemble_stiffness(mesh);
    let mass = assemble_mass(mesh, rho)?;
    solve_spectrum_with(&stiffness, &mass, k, false, solver, None)
}

/// Relative error of `value` against `oracle`, measured against the first
/// nonzero oracle value when the oracle entry itself is a zero mode.
fn zero_safe_error(value: f64, oracle: f64, scale: f64) -> f64 {
    (value - oracle).abs() / oracle.abs().max(scale)
}

fn first_nonzero(values: &[f64]) -> f64 {
    let top = values.iter().cloned().fold(0.0, f64::max);
    values
        .iter()
        .cloned()
        .find(|&v| v > TOL_ZERO * top.max(1.0) * 1e3)
        .unwrap_or(top)
}

fn is_non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn spectrum_body(
    mesh_src: &MeshSource,
    density: &DensitySource,
    k: usize,
    tol: f64,
    solver: &SolverOptions,
) -> Result<Body> {
    let mesh = mesh_src.load()?;
    let rho = density.load(&mesh)?;
    let report = solve(&mesh, &rho, k, solver)?;
    let mut checks = vec![Check::new(
        "lambda_0_vs_lambda_1",
        report.eigenvalues[0].abs() / report.eigenvalues[1],
        0.0,
        "zero_mode",
        TOL_ZERO,
        Relation::AtMost,
    )?];
    let mut table = Table::new("spectrum", &["index", "lambda", "lambda_bar", "residual", "target"]);
    let targets: Option<Vec<f64>> = match (mesh_src, density) {
        (MeshSource::Icosphere { .. }, DensitySource::Uniform) => {
            Some((0..=k).map(|j| sphere_normalized_eigenvalue(j as u64)).collect())
        }
        (MeshSource::Torus { lattice, .. }, DensitySource::Uniform) => Some(flat_torus_closed_form(lattice, k)),
        _ => None,
    };
    for j in 0..=k {
        let target = targets.as_ref().map_or(f64::NAN, |t| t[j]);
        table.rows.push(vec![
            j as f64,
            report.eigenvalues[j],
            report.normalized[j],
            report.residuals[j],
            target,
        ]);
    }
    if let Some(t) = &targets {
        let id = if mesh_src.is_sphere() {
            "sphere_normalized_eigenvalue"
        } else {
            "flat_torus_closed_form"
        };
        for (j, (&value, &target)) in report.normalized.iter().zip(t).enumerate().take(k + 1).skip(1) {
            checks.push(Check::new(
                format!("lambda_bar_{j}"),
                value,
                target,
                id,
                tol,
                Relation::Within,
            )?);
        }
        let expected = t[1..].iter().filter(|&&x| (x - t[1]).abs() <= 1e-9 * t[1]).count();
        checks.push(Check::new(
            "cluster_size_1",
            report.cluster_of(1).len() as f64,
            expected as f64,
            id,
            0.0,
            Relation::Within,
        )?);
    }
    Ok(Body {
        values: json!({
            "eigenvalues": report.eigenvalues,
            "normalized": report.normalized,
            "clusters": report.clusters,
            "residuals": report.residuals,
            "total_mass": report.total_mass,
            "vertices": mesh.num_vertices(),
            "genus": mesh.genus(),
        }),
        tables: vec![table],
        checks,
        caveats: report.warnings,
    })
}

fn maximize_body(
    mesh_src: &MeshSource,
    k: usize,
    options: &OptimizerOptions,
    slack: f64,
    sphere_reference: Option<u32>,
) -> Result<Body> {
    let mesh = mesh_src.load()?;
    let result = maximize_lambda_k(&mesh, k, options, None)?;
    let uniform = solve(
        &mesh,
        &ConformalDensity::uniform(mesh.num_vertices()),
        k,
        &options.solver,
    )?
    .normalized[k];
    let mut checks = vec![
        Check::new(
            "corollary1",
            result.best_value,
            corollary1_bound(2, k as u32),
            "corollary1_bound",
            slack,
            Relation::AtLeast,
        )?,
        Check::new(
            "not_below_uniform",
            result.best_value,
            uniform,
            "uniform_start",
            1e-9,
            Relation::AtLeast,
        )?,
    ];
    if mesh_src.is_sphere() && k == 1 {
        checks.push(Check::new(
            "hersch",
            result.best_value,
            8.0 * PI,
            "hersch",
            slack,
            Relation::Within,
        )?);
    }
    if mesh_src.is_equilateral_torus() && k == 1 {
        checks.push(Check::new(
            "nadirashvili_torus",
            result.best_value,
            8.0 * PI * PI / 3f64.sqrt(),
            "nadirashvili_torus",
            slack,
            Relation::Within,
        )?);
    }
    let mut sphere_value = Value::Null;
    if let Some(s) = sphere_reference.filter(|_| !mesh_src.is_sphere()) {
        let sphere = build_icosphere(s)?;
        let reference = maximize_lambda_k(&sphere, k, options, None)?;
        checks.push(Check::new(
            "theorem_a_ordering",
            result.best_value,
            reference.best_value,
            "theorem_a_ordering",
            slack,
            Relation::AtLeast,
        )?);
        sphere_value = json!(reference.best_value);
    }
    let mut history = Table::new(
        "history",
        &["iteration", "lambda_bar", "step", "objective", "cluster_size"],
    );
    for h in &result.history {
        history.rows.push(vec![
            h.iteration as f64,
            h.lambda_bar,
            h.step,
            h.objective,
            h.cluster_size as f64,
        ]);
    }
    Ok(Body {
        values: json!({
            "best_value": result.best_value,
            "uniform_value": uniform,
            "restart_values": result.restart_values,
            "restart": result.restart,
            "status": result.status,
            "sphere_value": sphere_value,
            "genus": mesh.genus(),
        }),
        tables: vec![history],
        checks,
        caveats: vec!["optimized values are lower bounds of the conformal eigenvalue on this mesh".into()],
    })
}

fn gap_body(mesh_src: &MeshSource, k: usize, options: &OptimizerOptions, slack: f64, glue_eps: &[f64]) -> Result<Body> {
    let mesh = mesh_src.load()?;
    let n = mesh.num_vertices();
    if k == 0 || k + 1 + options.cluster_margin.max(1) > n - 1 {
        return Err(Error::InvalidArgument(format!(
            "gap at k = {k} needs eigenvalues up to {} on a mesh with {n} vertices",
            k + 1 + options.cluster_margin.max(1)
        )));
    }
    let lower = maximize_lambda_k(&mesh, k, options, None)?;
    let upper = maximize_lambda_k(&mesh, k + 1, options, None)?;
    let mut upper_value = upper.best_value;
    let mut family = Table::new("glued_family", &["epsilon", "lambda_bar_k_plus_1"]);
    let uniform = ConformalDensity::uniform(n);
    for &eps in glue_eps {
        let out = glue_surfaces(&GlueSpec {
            host: &mesh,
            host_density: &uniform,
            host_center: 0,
            guest: &mesh,
            guest_density: &uniform,
            guest_center: 0,
            epsilon: eps,
            resolution: RING_VERTICES,
        })?;
        let v = solve(&out.mesh, &out.density, k + 1, &options.solver)?.normalized[k + 1];
        family.rows.push(vec![eps, v]);
        upper_value = upper_value.max(v);
    }
    let gap = upper_value - lower.best_value;
    Ok(Body {
        values: json!({
            "lambda_bar_k_max": lower.best_value,
            "lambda_bar_k_plus_1_max": upper_value,
            "optimizer_k_plus_1": upper.best_value,
            "gap": gap,
        }),
        tables: vec![family],
        checks: vec![Check::new("gap", gap, gap_bound(2), "gap_n2", slack, Relation::AtLeast)?],
        caveats: vec![
            "both maxima are discrete lower bounds of the true suprema, so their difference is not a bound on the true gap".into(),
        ],
    })
}

#[allow(clippy::too_many_arguments)]
fn glue_body(
    host_src: &MeshSource,
    guest_src: &MeshSource,
    epsilons: &[f64],
    k: usize,
    mode: &GlueMode,
    tol: f64,
    solver: &SolverOptions,
) -> Result<Body> {
    let host = host_src.load()?;
    let guest = guest_src.load()?;
    let uh = ConformalDensity::uniform(host.num_vertices());
    let ug = ConformalDensity::uniform(guest.num_vertices());
    let glue = |eps: f64| {
        glue_surfaces(&GlueSpec {
            host: &host,
            host_density: &uh,
            host_center: 0,
            guest: &guest,
            guest_density: &ug,
            guest_center: 0,
            epsilon: eps,
            resolution: RING_VERTICES,
        })
    };
    let host_spec = solve(&host, &uh, k, solver)?;
    let mut checks = Vec::new();
    let mut caveats = Vec::new();
    let mut columns: Vec<String> = vec!["parameter".into()];
    columns.extend((1..=k).map(|j| format!("lambda_{j}")));
    columns.push("max_error".into());
    let mut table = Table {
        name: "sweep".into(),
        columns,
        rows: Vec::new(),
    };
    let mut errors = Vec::new();
    let mut values = json!({});
    match mode {
        GlueMode::Union => {
            let guest_spec = solve(&guest, &ug, k, solver)?;
            let oracle = union_spectrum_oracle(&host_spec.eigenvalues, &guest_spec.eigenvalues, k);
            let scale = first_nonzero(&oracle);
            let both_spheres = host_src.is_sphere() && guest_src.is_sphere();
            let mut lambda2_errors = Vec::new();
            let mut lambda2 = Vec::new();
            for &eps in epsilons {
                let out = glue(eps)?;
                checks.push(Check::holds(
                    format!("genus_eps_{eps}"),
                    out.genus() == host.genus() + guest.genus(),
                    "genus_bookkeeping",
                )?);
                let r = solve(&out.mesh, &out.density, k, solver)?;
                let err = (1..=k)
                    .map(|j| zero_safe_error(r.eigenvalues[j], oracle[j], scale))
                    .fold(0.0, f64::max);
                let mut row = vec![eps];
                row.extend(&r.eigenvalues[1..]);
                row.push(err);
                table.rows.push(row);
                errors.push(err);
                if both_spheres && k >= 2 {
                    lambda2.push(r.normalized[2]);
                    lambda2_errors.push((r.normalized[2] / (16.0 * PI) - 1.0).abs());
                }
            }
            values["oracle"] = json!(oracle);
            checks.push(Check::holds(
                "union_error_monotone",
                is_non_increasing(&errors),
                "union_spectrum",
            )?);
            checks.push(Check::new(
                "union_error_final",
                *errors.last().unwrap_or(&f64::INFINITY),
                0.0,
                "union_spectrum",
                tol,
                Relation::AtMost,
            )?);
            if !lambda2.is_empty() {
                values["lambda_bar_2"] = json!(lambda2);
                values["lambda_bar_2_errors"] = json!(lambda2_errors);
                checks.push(Check::holds(
                    "lambda_bar_2_error_monotone",
                    is_non_increasing(&lambda2_errors),
                    "sphere_lambda2_conformal",
                )?);
                checks.push(Check::new(
                    "lambda_bar_2_final",
                    *lambda2.last().unwrap(),
                    16.0 * PI,
                    "sphere_lambda2_conformal",
                    tol,
                    Relation::Within,
                )?);
            }
            caveats
                .push("errors of zero-mode oracle entries are measured against the first nonzero oracle value".into());
        }
        GlueMode::Collapse { neck, scales } => {
            let out = glue(*neck)?;
            for &s in scales {
                let rho = collapse_component(&out, s)?;
                let r = solve(&out.mesh, &rho, k, solver)?;
                let err = (1..=k)
                    .map(|j| (r.eigenvalues[j] / host_spec.eigenvalues[j] - 1.0).abs())
                    .fold(0.0, f64::max);
                let mut row = vec![s];
                row.extend(&r.eigenvalues[1..]);
                row.push(err);
                table.rows.push(row);
                errors.push(err);
            }
            values["host"] = json!(host_spec.eigenvalues);
            checks.push(Check::holds(
                "collapse_error_monotone",
                is_non_increasing(&errors),
                "host_spectrum",
            )?);
            checks.push(Check::new(
                "collapse_error_final",
                *errors.last().unwrap_or(&f64::INFINITY),
                0.0,
                "host_spectrum",
                tol,
                Relation::AtMost,
            )?);
        }
    }
    values["errors"] = json!(errors);
    values["rows"] = json!(table.rows);
    Ok(Body {
        values,
        tables: vec![table],
        checks,
        caveats,
    })
}

fn farthest_vertex(mesh: &TriangleMesh, from: usize) -> usize {
    let d = geodesic_distances(mesh, from);
    (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(from)
}

fn handle_body(
    mesh_src: &MeshSource,
    epsilons: &[f64],
    length: f64,
    window: usize,
    k: usize,
    tol: f64,
    solver: &SolverOptions,
) -> Result<Body> {
    if k == 0 || k > window {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={window}")));
    }
    let mesh = mesh_src.load()?;
    let rho = ConformalDensity::uniform(mesh.num_vertices());
    let host = solve(&mesh, &rho, window, solver)?;
    let segment = dirichlet_segment_spectrum(length, window)?;
    let oracle = union_spectrum_oracle(&host.eigenvalues, &segment, window);
    let scale = first_nonzero(&oracle);
    let b = farthest_vertex(&mesh, 0);
    let mut checks = Vec::new();
    let mut union_errors = Vec::new();
    let mut host_errors = Vec::new();
    let mut columns: Vec<String> = vec!["epsilon".into(), "area".into()];
    columns.extend((1..=window).map(|j| format!("lambda_{j}")));
    columns.extend(["union_error".into(), "host_error".into()]);
    let mut table = Table {
        name: "sweep".into(),
        columns,
        rows: Vec::new(),
    };
    for &eps in epsilons {
        let out = attach_handle(
            &mesh,
            &rho,
            &HandleSpec {
                a: 0,
                b,
                epsilon: eps,
                length,
                resolution: RING_VERTICES,
            },
        )?;
        checks.push(Check::holds(
            format!("genus_eps_{eps}"),
            out.genus() == mesh.genus() + 1,
            "genus_bookkeeping",
        )?);
        let r = solve(&out.mesh, &out.density, window, solver)?;
        let ue = (1..=window)
            .map(|j| zero_safe_error(r.eigenvalues[j], oracle[j], scale))
            .fold(0.0, f64::max);
        let he = (1..=k)
            .map(|j| (r.normalized[j] / host.normalized[j] - 1.0).abs())
            .fold(0.0, f64::max);
        let mut row = vec![eps, out.mesh.total_area()];
        row.extend(&r.eigenvalues[1..]);
        row.extend([ue, he]);
        table.rows.push(row);
        union_errors.push(ue);
        host_errors.push(he);
    }
    checks.push(Check::holds(
        "union_error_monotone",
        is_non_increasing(&union_errors),
        "dirichlet_segment",
    )?);
    checks.push(Check::new(
        "union_error_final",
        *union_errors.last().unwrap_or(&f64::INFINITY),
        0.0,
        "union_spectrum",
        tol,
        Relation::AtMost,
    )?);
    checks.push(Check::new(
        "host_error_final",
        *host_errors.last().unwrap_or(&f64::INFINITY),
        0.0,
        "host_spectrum",
        tol,
        Relation::AtMost,
    )?);
    Ok(Body {
        values: json!({
            "host": host.eigenvalues,
            "host_normalized": host.normalized,
            "oracle": oracle,
            "union_errors": union_errors,
            "host_errors": host_errors,
            "rows": table.rows,
            "b": b,
        }),
        tables: vec![table],
        checks,
        caveats: vec!["host errors compare normalized eigenvalues before and after the handle".into()],
    })
}

/// Spectrum of a mesh against its closed form when one is known.
pub fn run_spectrum(mesh: MeshSource, density: DensitySource, k: usize, tolerance: f64) -> Result<ExperimentReport> {
    run(&ExperimentInputs::Spectrum {
        mesh,
        density,
        k,
        tolerance,
        solver: SolverOptions::default(),
    })
}

/// Maximization of `lambda_bar_k` with Corollary 1 and sphere-ordering checks.
pub fn run_maximize(
    mesh: MeshSource,
    k: usize,
    options: OptimizerOptions,
    slack: f64,
    sphere_reference: Option<u32>,
) -> Result<ExperimentReport> {
    run(&ExperimentInputs::Maximize {
        mesh,
        k,
        options,
        slack,
        sphere_reference,
    })
}

/// Independent maximization of `lambda_bar_k` and `lambda_bar_{k+1}`.
pub fn run_gap(
    mesh: MeshSource,
    k: usize,
    options: OptimizerOptions,
    slack: f64,
    glue_epsilons: Vec<f64>,
) -> Result<ExperimentReport> {
    run(&ExperimentInputs::Gap {
        mesh,
        k,
        options,
        slack,
        glue_epsilons,
    })
}

/// Gluing or collapse sweep.
pub fn run_glue_sweep(
    host: MeshSource,
    guest: MeshSource,
    epsilons: Vec<f64>,
    k: usize,
    mode: GlueMode,
    tolerance: f64,
) -> Result<ExperimentReport> {
    run(&ExperimentInputs::Glue {
        host,
        guest,
        epsilons,
        k,
        mode,
        tolerance,
        solver: SolverOptions::default(),
    })
}

/// Handle attachment sweep against the host and the segment union.
pub fn run_handle(
    mesh: MeshSource,
    epsilons: Vec<f64>,
    length: f64,
    window: usize,
    k: usize,
    tolerance: f64,
) -> Result<ExperimentReport> {
    run(&ExperimentInputs::Handle {
        mesh,
        epsilons,
        length,
        window,
        k,
        tolerance,
        solver: SolverOptions::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_report_round_trip_and_rerun() {
        let r = run_spectrum(
            MeshSource::Icosphere { subdivisions: 2 },
            DensitySource::Uniform,
            3,
            0.02,
        )
        .unwrap();
        assert!(r.passed(), "{:?}", r.checks);
        assert!(r.checks.iter().all(|c| BoundTable::standard().contains(&c.target_id)));
        let back = ExperimentReport::from_json(&r.to_json().unwrap()).unwrap();
        let again = rerun(&back).unwrap();
        assert!(again.check("reproduced_values").unwrap().pass);
        assert!(r.to_csv().starts_with("# checks\n"));
    }

    #[test]
    fn torus_spectrum_checks_cluster() {
        let r = run_spectrum(
            MeshSource::Torus {
                lattice: Lattice::square(),
                resolution: 16,
            },
            DensitySource::Uniform,
            4,
            0.02,
        )
        .unwrap();
        let c = r.check("cluster_size_1").unwrap();
        assert_eq!(c.target, 4.0);
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn unknown_bound_id_is_refused() {
        assert!(Check::new("x", 1.0, 1.0, "no_such_id", 0.1, Relation::Within).is_err());
        assert!(
            !Check::new("x", f64::NAN, 1.0, "hersch", 0.1, Relation::AtLeast)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn gap_rejects_oversized_k() {
        let options = OptimizerOptions::default();
        let err = run_gap(MeshSource::Icosphere { subdivisions: 0 }, 6, options, 0.05, vec![]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mesh_source_parsing() {
        assert_eq!(
            "icosphere:3".parse::<MeshSource>().unwrap(),
            MeshSource::Icosphere { subdivisions: 3 }
        );
        let t: MeshSource = "torus:elongated:1.4:24".parse().unwrap();
        assert_eq!(
            t,
            MeshSource::Torus {
                lattice: Lattice::rectangular(1.4).unwrap(),
                resolution: 24
            }
        );
        assert!("torus:square".parse::<MeshSource>().is_err());
        assert!("icosphere:x".parse::<MeshSource>().is_err());
        assert!(matches!(
            "a.off".parse::<MeshSource>().unwrap(),
            MeshSource::File { .. }
        ));
    }

    #[test]
    fn value_comparison() {
        let a = json!({"x": [1.0, 2.0], "s": "ok"});
        let b = json!({"x": [1.0, 2.0 + 1e-12], "s": "ok"});
        assert!(max_relative_difference(&a, &b) < 1e-11);
        assert_eq!(max_relative_difference(&a, &json!({"x": [1.0]})), f64::INFINITY);
    }

    #[test]
    fn inputs_json_is_tagged() {
        let inputs = ExperimentInputs::Handle {
            mesh: MeshSource::Icosphere { subdivisions: 1 },
            epsilons: vec![0.1],
            length: 0.5,
            window: 4,
            k: 2,
            tolerance: 0.05,
            solver: SolverOptions::default(),
        };
        let text = serde_json::to_string(&inputs).unwrap();
        assert!(text.contains("\"experiment\":\"handle\""));
        let back: ExperimentInputs = serde_json::from_str(&text).unwrap();
        assert_eq!(back, inputs);
    }
}
