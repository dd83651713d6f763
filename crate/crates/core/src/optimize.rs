//! Maximization of the normalized eigenvalue `lambda_k * V` over vertex
//! densities on a fixed mesh.
//!
//! The density is parametrized by its logarithm and kept at total mass 1 by
//! exact rescaling. The ascent objective is a soft-min of `lambda_bar_j`,
//! `j = k ..= K`, at temperature `T = temperature * lambda_bar_k`, so that a
//! cluster of nearly equal eigenvalues is raised as a whole.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::corollary1_bound;
use crate::error::{Error, Result};
use crate::mesh::{geodesic_distances, TriangleMesh};
use crate::spectral::{
    assemble_stiffness, solve_spectrum_with, ConformalDensity, MassVector, SolverOptions, SpectrumReport,
    StiffnessOperator,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    /// Initial step in `||log rho||_inf` units.
    pub initial_step: f64,
    pub max_step: f64,
    /// Step multiplier after an accepted step.
    pub growth: f64,
    /// Step multiplier after a rejected step.
    pub backtracking: f64,
    /// Soft-min temperature relative to `lambda_bar_k`.
    pub temperature: f64,
    /// Extra eigenvalues above `k` entering the soft-min window.
    pub cluster_margin: usize,
    pub density_floor: f64,
    pub restarts: usize,
    /// Consecutive rejected steps before giving up.
    pub stall_limit: usize,
    /// Relative objective gain below which an accepted step counts as idle.
    pub gain_tol: f64,
    /// Consecutive idle accepted steps that declare convergence.
    pub idle_limit: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            initial_step: 0.1,
            max_step: 1.0,
            growth: 1.2,
            backtracking: 0.5,
            temperature: 1e-2,
            cluster_margin: 6,
            density_floor: 1e-9,
            restarts: 4,
            stall_limit: 50,
            gain_tol: 1e-7,
            idle_limit: 5,
            seed: 42,
            solver: SolverOptions::default(),
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
            ("temperature", self.temperature),
            ("density_floor", self.density_floor),
            ("gain_tol", self.gain_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.growth >= 1.0) {
            return Err(Error::InvalidArgument("growth must be at least 1".into()));
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return Err(Error::InvalidArgument("backtracking must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 || self.restarts == 0 || self.stall_limit == 0 || self.idle_limit == 0 {
            return Err(Error::InvalidArgument(
                "iteration, restart, stall and idle limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Starting density of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialDensity {
    Uniform,
    /// `4 / (1 + (d / width)^2)^2` of the graph-geodesic distance `d` to `center`.
    Bump {
        center: usize,
        width: f64,
    },
    /// Graph-smoothed random log-density with standard deviation `sigma`.
    Random {
        seed: u64,
        sigma: f64,
    },
    Given(ConformalDensity),
}

impl InitialDensity {
    pub fn realize(&self, mesh: &TriangleMesh) -> Result<ConformalDensity> {
        let n = mesh.num_vertices();
        match self {
            InitialDensity::Uniform => Ok(ConformalDensity::uniform(n)),
            InitialDensity::Bump { center, width } => {
                if *center >= n || !(*width > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "bump center {center} / width {width} invalid"
                    )));
                }
                let d = geodesic_distances(mesh, *center);
                ConformalDensity::new(d.iter().map(|&x| stereographic_bump(x / width)).collect())
            }
            InitialDensity::Random { seed, sigma } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let rings: Vec<Vec<usize>> = (0..n)
                    .map(|v| mesh.neighbors(v).into_iter().map(|(w, _)| w).collect())
                    .collect();
                for _ in 0..10 {
                    x = (0..n)
                        .map(|v| {
                            let mean = rings[v].iter().map(|&w| x[w]).sum::<f64>() / rings[v].len() as f64;
                            0.5 * (x[v] + mean)
                        })
                        .collect();
                }
                let mean = x.iter().sum::<f64>() / n as f64;
                let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
                let scale = if sd > 0.0 { sigma / sd } else { 0.0 };
                ConformalDensity::new(x.iter().map(|v| ((v - mean) * scale).exp()).collect())
            }
            InitialDensity::Given(rho) => {
                if rho.len() != n {
                    return Err(Error::Density(format!(
                        "initial density has {} entries for {n} vertices",
                        rho.len()
                    )));
                }
                Ok(rho.clone())
            }
        }
    }
}

fn stereographic_bump(t: f64) -> f64 {
    4.0 / (1.0 + t * t).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizationStatus {
    Converged,
    IterationCap,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub lambda_bar: f64,
    pub objective: f64,
    pub step: f64,
    pub cluster_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub k: usize,
    /// Maximizing density, scaled to total mass 1.
    pub best_density: ConformalDensity,
    pub best_value: f64,
    pub status: OptimizationStatus,
    /// Accepted steps of the winning restart, starting with its initial point.
    pub history: Vec<HistoryEntry>,
    pub restart: usize,
    /// Final `lambda_bar_k` of every restart, in restart order.
    pub restart_values: Vec<f64>,
    pub seed: u64,
}

impl OptimizationResult {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,lambda_bar,step,objective,cluster_size\n");
        for h in &self.history {
            out.push_str(&format!(
                "{},{:.15e},{:.6e},{:.15e},{}\n",
                h.iteration, h.lambda_bar, h.step, h.objective, h.cluster_size
            ));
        }
        out
    }
}

/// Fixed data of one maximization: stiffness, area shares and the window.
pub struct AscentProblem<'a> {
    stiffness: &'a StiffnessOperator,
    area_shares: Vec<f64>,
    k: usize,
    options: &'a OptimizerOptions,
}

/// An evaluated, mass-normalized iterate.
#[derive(Debug, Clone)]
pub struct AscentState {
    pub density: Vec<f64>,
    pub mass: MassVector,
    pub report: SpectrumReport,
    /// Soft-min temperature frozen at this iterate.
    pub temperature: f64,
    pub objective: f64,
}

impl AscentState {
    pub fn lambda_bar(&self, k: usize) -> f64 {
        self.report.normalized[k]
    }
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Accepted(Box<AscentState>),
    Rejected { objective: f64, lambda_bar: f64 },
}

impl<'a> AscentProblem<'a> {
    pub fn new(
        mesh: &TriangleMesh,
        stiffness: &'a StiffnessOperator,
        k: usize,
        options: &'a OptimizerOptions,
    ) -> Result<Self> {
        options.validate()?;
        let n = mesh.num_vertices();
        if stiffness.dim() != n {
            return Err(Error::InvalidArgument("stiffness does not match the mesh".into()));
        }
        if k < 1 || k + 1 > n - 1 {
            return Err(Error::InvalidArgument(format!(
                "index k = {k} needs 1 <= k and k + 1 <= {}",
                n - 1
            )));
        }
        Ok(Self {
            stiffness,
            area_shares: mesh.vertex_area_shares(),
            k,
            options,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn window_top(&self) -> usize {
        (self.k + self.options.cluster_margin.max(1)).min(self.stiffness.dim() - 1)
    }

    /// Rescales `density` to mass 1 and solves, widening the window until the
    /// cluster of `k` ends strictly inside it.
    pub fn evaluate(&self, density: Vec<f64>, warm: Option<&[Vec<f64>]>) -> Result<AscentState> {
        let floor = self.options.density_floor;
        let raw: Vec<f64> = density.iter().map(|&r| r.max(floor)).collect();
        let total: f64 = raw.iter().zip(&self.area_shares).map(|(r, a)| r * a).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Density(format!("density has total mass {total}")));
        }
        let density: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let mass = MassVector::from_parts(self.area_shares.clone(), &density);
        let n = self.stiffness.dim();
        let mut top = self.window_top();
        let report = loop {
            let warm = warm.filter(|w| w.len() <= top + 1);
            let report = solve_spectrum_with(self.stiffness, &mass, top, true, &self.options.solver, warm)?;
            if report.cluster_of(self.k).last() != Some(&top) || top == n - 1 {
                break report;
            }
            top = (top * 2).min(n - 1);
        };
        let temperature = self.options.temperature * report.normalized[self.k];
        let objective = soft_min(&report.normalized[self.k..], temperature).0;
        Ok(AscentState {
            density,
            mass,
            report,
            temperature,
            objective,
        })
    }

    /// Gradient of the soft-min objective (at the state's own temperature)
    /// with respect to `log rho_i`.
    pub fn objective_gradient(&self, state: &AscentState) -> Vec<f64> {
        let k = self.k;
        let (_, weights) = soft_min(&state.report.normalized[k..], state.temperature);
        let vectors = state.report.eigenvectors.as_ref().expect("evaluate keeps vectors");
        let m = state.mass.masses();
        let v = state.mass.total();
        let mut grad = vec![0.0; m.len()];
        for (offset, w) in weights.iter().enumerate() {
            if *w < 1e-300 {
                continue;
            }
            let j = k + offset;
            let u = &vectors[j];
            let norm: f64 = u.iter().zip(m).map(|(x, mi)| x * x * mi).sum();
            let lam_bar = state.report.normalized[j];
            for i in 0..m.len() {
                grad[i] += w * lam_bar * m[i] / v * (1.0 - v * u[i] * u[i] / norm);
            }
        }
        grad
    }

    /// Ascent direction: the objective gradient in the mass-weighted inner
    /// product, `grad_i / (m_i / V)`.
    pub fn direction(&self, state: &AscentState) -> Vec<f64> {
        let v = state.mass.total();
        self.objective_gradient(state)
            .iter()
            .zip(state.mass.masses())
            .map(|(g, m)| g * v / m)
            .collect()
    }

    /// Trial density `rho * exp(step * d / ||d||_inf)`, rescaled to mass 1.
    pub fn trial_density(&self, state: &AscentState, direction: &[f64], step: f64) -> Vec<f64> {
        let dmax = direction.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        if dmax == 0.0 || step == 0.0 {
            return state.density.clone();
        }
        state
            .density
            .iter()
            .zip(direction)
            .map(|(r, d)| r * (step * d / dmax).exp())
            .collect()
    }

    /// Evaluates one log-density step. Accepted only when the soft-min at the
    /// current temperature increases and `lambda_bar_k` does not decrease.
    pub fn ascent_step(&self, state: &AscentState, direction: &[f64], step: f64) -> Result<StepOutcome> {
        let trial = self.trial_density(state, direction, step);
        let vectors = state.report.eigenvectors.as_deref();
        let next = self.evaluate(trial, vectors)?;
        let objective = soft_min(&next.report.normalized[self.k..], state.temperature).0;
        let lambda_bar = next.lambda_bar(self.k);
        if objective > state.objective && lambda_bar >= state.lambda_bar(self.k) {
            Ok(StepOutcome::Accepted(Box::new(next)))
        } else {
            Ok(StepOutcome::Rejected { objective, lambda_bar })
        }
    }
}

/// `-T log sum exp(-x_j / T)` and its weights `d/dx_j`.
fn soft_min(values: &[f64], temperature: f64) -> (f64, Vec<f64>) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = values.iter().map(|x| (-(x - lo) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    (lo - temperature * s.ln(), e.iter().map(|x| x / s).collect())
}

struct RunOutcome {
    state: AscentState,
    history: Vec<HistoryEntry>,
    status: OptimizationStatus,
}

fn run_single(problem: &AscentProblem<'_>, start: ConformalDensity) -> Result<RunOutcome> {
    let opts = problem.options;
    let k = problem.k;
    let mut state = problem.evaluate(start.into_inner(), None)?;
    let mut step = opts.initial_step;
    let entry = |it: usize, s: &AscentState, step: f64| HistoryEntry {
        iteration: it,
        lambda_bar: s.lambda_bar(k),
        objective: s.objective,
        step,
        cluster_size: s.report.cluster_of(k).len(),
    };
    let mut history = vec![entry(0, &state, 0.0)];
    let mut rejections = 0;
    let mut idle = 0;
    let mut direction = problem.direction(&state);
    for it in 1..=opts.max_iterations {
        match problem.ascent_step(&state, &direction, step)? {
            StepOutcome::Accepted(next) => {
                let gain = (next.objective - state.objective) / state.objective.abs().max(f64::MIN_POSITIVE);
                let next = *next;
                history.push(entry(it, &next, step));
                state = next;
                direction = problem.direction(&state);
                step = (step * opts.growth).min(opts.max_step);
                rejections = 0;
                idle = if gain < opts.gain_tol { idle + 1 } else { 0 };
                if idle >= opts.idle_limit {
                    return Ok(RunOutcome {
                        state,
                        history,
                        status: OptimizationStatus::Converged,
                    });
                }
            }
            StepOutcome::Rejected { .. } => {
                step *= opts.backtracking;
                rejections += 1;
                if rejections >= opts.stall_limit {
                    return Ok(RunOutcome {
                        state,
                        history,
                        status: OptimizationStatus::Stalled,
                    });
                }
            }
        }
    }
    Ok(RunOutcome {
        state,
        history,
        status: OptimizationStatus::IterationCap,
    })
}

/// Default restart list: uniform, a stereographic bump, then smoothed random
/// log-densities; an explicit initial density goes first.
pub fn default_starts(
    mesh: &TriangleMesh,
    options: &OptimizerOptions,
    initial: Option<&ConformalDensity>,
) -> Vec<InitialDensity> {
    let mut starts = Vec::new();
    if let Some(rho) = initial {
        starts.push(InitialDensity::Given(rho.clone()));
    }
    starts.push(InitialDensity::Uniform);
    starts.push(InitialDensity::Bump {
        center: 0,
        width: default_bump_width(mesh),
    });
    let mut r = starts.len();
    while starts.len() < options.restarts {
        starts.push(InitialDensity::Random {
            seed: options.seed + r as u64,
            sigma: 0.5,
        });
        r += 1;
    }
    starts.truncate(options.restarts);
    starts
}

/// Half the radius of the round sphere with the mesh's area.
pub fn default_bump_width(mesh: &TriangleMesh) -> f64 {
    0.5 * (mesh.total_area() / (4.0 * std::f64::consts::PI)).sqrt()
}

/// Maximizes `lambda_bar_k` from the default restarts (see [`default_starts`]).
pub fn maximize_lambda_k(
    mesh: &TriangleMesh,
    k: usize,
    options: &OptimizerOptions,
    initial: Option<&ConformalDensity>,
) -> Result<OptimizationResult> {
    let starts = default_starts(mesh, options, initial);
    maximize_from(mesh, k, options, &starts)
}

/// Maximizes `lambda_bar_k` from each listed start, in parallel; restart `r`
/// solves with seed `options.seed + r`.
pub fn maximize_from(
    mesh: &TriangleMesh,
    k: usize,
    options: &OptimizerOptions,
    starts: &[InitialDensity],
) -> Result<OptimizationResult> {
    options.validate()?;
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no starting densities".into()));
    }
    let stiffness = assemble_stiffness(mesh);
    AscentProblem::new(mesh, &stiffness, k, options)?;
    let runs: Vec<Result<RunOutcome>> = starts
        .par_iter()
        .enumerate()
        .map(|(r, start)| {
            let mut opts = options.clone();
            opts.solver.seed = options.solver.seed.wrapping_add(r as u64);
            let problem = AscentProblem::new(mesh, &stiffness, k, &opts)?;
            let rho = start.realize(mesh)?;
            let out = run_single(&problem, rho)?;
            log::info!(
                "restart {r} ({start:?}): lambda_bar_{k} = {:.6}, {:?}",
                out.state.lambda_bar(k),
                out.status
            );
            Ok(out)
        })
        .collect();
    let runs: Vec<RunOutcome> = runs.into_iter().collect::<Result<_>>()?;
    let restart_values: Vec<f64> = runs.iter().map(|r| r.state.lambda_bar(k)).collect();
    let (best, _) =
        restart_values.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    let run = runs.into_iter().nth(best).expect("at least one restart");
    Ok(OptimizationResult {
        k,
        best_value: run.state.lambda_bar(k),
        best_density: ConformalDensity::new(run.state.density)?,
        status: run.status,
        history: run.history,
        restart: best,
        restart_values,
        seed: options.seed,
    })
}

/// Euclidean norm of the soft-min gradient with respect to `log rho` at
/// `density` rescaled to mass 1. The objective is scale invariant, so the
/// gradient is already tangent to the mass constraint.
pub fn stationarity(
    mesh: &TriangleMesh,
    density: &ConformalDensity,
    k: usize,
    options: &OptimizerOptions,
) -> Result<f64> {
    let stiffness = assemble_stiffness(mesh);
    let problem = AscentProblem::new(mesh, &stiffness, k, options)?;
    let state = problem.evaluate(density.values().to_vec(), None)?;
    Ok(problem
        .objective_gradient(&state)
        .iter()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt())
}

/// Comparison of an optimized value against `8 pi k` and, optionally, against
/// the optimized sphere value at the same `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corollary1Report {
    pub k: usize,
    pub best_value: f64,
    pub bound: f64,
    pub ratio: f64,
    pub slack: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sphere_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sphere_pass: Option<bool>,
}

pub fn check_corollary1(result: &OptimizationResult, slack: f64, sphere_value: Option<f64>) -> Corollary1Report {
    let bound = corollary1_bound(2, result.k as u32);
    let ratio = result.best_value / bound;
    Corollary1Report {
        k: result.k,
        best_value: result.best_value,
        bound,
        ratio,
        slack,
        pass: result.best_value >= bound * (1.0 - slack),
        sphere_value,
        sphere_pass: sphere_value.map(|s| result.best_value >= s * (1.0 - slack)),
    }
}
