use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conformal_lab::bounds::BoundTable;
use conformal_lab::experiments::{self, DensitySource, ExperimentInputs, ExperimentReport, GlueMode, MeshSource};
use conformal_lab::mesh::Lattice;
use conformal_lab::optimize::OptimizerOptions;
use conformal_lab::spectral::SolverOptions;

const THREADS_VAR: &str = "CONFORMAL_LAB_THREADS";

#[derive(Parser)]
#[command(name = "conformal-lab", version, about = "Conformal Laplace spectrum experiments")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
#[group(multiple = false)]
struct MeshArgs {
    /// OFF or OBJ mesh file.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Icosphere subdivision level.
    #[arg(long)]
    icosphere: Option<u32>,
    /// Flat torus lattice: equilateral, square, elongated:<ratio> or e1x,e1y,e2x,e2y.
    #[arg(long)]
    torus: Option<Lattice>,
}

#[derive(Args, Clone)]
struct Source {
    #[command(flatten)]
    mesh: MeshArgs,
    /// Grid resolution of the flat torus.
    #[arg(long, default_value_t = 32)]
    res: usize,
}

impl Source {
    fn resolve(&self, default: MeshSource) -> MeshSource {
        let m = &self.mesh;
        if let Some(path) = &m.mesh {
            MeshSource::File { path: path.clone() }
        } else if let Some(subdivisions) = m.icosphere {
            MeshSource::Icosphere { subdivisions }
        } else if let Some(lattice) = m.torus {
            MeshSource::Torus {
                lattice,
                resolution: self.res,
            }
        } else {
            default
        }
    }
}

#[derive(Args, Clone)]
struct Optimizer {
    /// Iteration cap per restart.
    #[arg(long, default_value_t = 300)]
    iters: usize,
    /// Number of restarts.
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl Optimizer {
    fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_iterations: self.iters,
            restarts: self.restarts,
            seed: self.seed,
            ..OptimizerOptions::default()
        }
    }
}

fn solver(seed: u64) -> SolverOptions {
    SolverOptions {
        seed,
        ..SolverOptions::default()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Low spectrum of a mesh, checked against closed forms when known.
    Spectrum {
        #[command(flatten)]
        source: Source,
        #[arg(short, default_value_t = 8)]
        k: usize,
        /// Per-vertex density as a JSON array; uniform when omitted.
        #[arg(long)]
        density: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Maximize the k-th normalized eigenvalue over the conformal class.
    Maximize {
        #[command(flatten)]
        source: Source,
        #[arg(short, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        optimizer: Optimizer,
        #[arg(long, default_value_t = 0.03)]
        tol: f64,
        /// Icosphere level of the reference sphere run; 0 disables it.
        #[arg(long, default_value_t = 3)]
        sphere_reference: u32,
    },
    /// Difference of the maxima of consecutive normalized eigenvalues.
    Gap {
        #[command(flatten)]
        source: Source,
        #[arg(short, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        optimizer: Optimizer,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        /// Neck radii of the glued two-copy family.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
    /// Connected sum sweep against the union or host spectrum.
    Glue {
        #[command(flatten)]
        source: Source,
        /// Guest: icosphere:<n>, torus:<lattice>:<res> or a mesh path; the host when omitted.
        #[arg(long)]
        guest: Option<MeshSource>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05])]
        eps: Vec<f64>,
        #[arg(short, default_value_t = 5)]
        k: usize,
        /// Guest density scales; switches to the collapse sweep.
        #[arg(long, value_delimiter = ',')]
        collapse: Vec<f64>,
        /// Neck radius of the collapse sweep.
        #[arg(long, default_value_t = 0.05)]
        neck: f64,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Handle attachment sweep.
    Handle {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', default_values_t = [0.08, 0.04, 0.02])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        length: f64,
        /// Leading normalized eigenvalues compared with the host.
        #[arg(short, default_value_t = 4)]
        k: usize,
        /// Size of the union comparison window.
        #[arg(long, default_value_t = 8)]
        window: usize,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Dump the table of closed-form bounds.
    Bounds,
    /// Summarize a saved report, or re-run it from its inputs.
    Report {
        path: PathBuf,
        #[arg(long)]
        rerun: bool,
    },
}

fn inputs(command: &Command) -> Option<ExperimentInputs> {
    let sphere = MeshSource::Icosphere { subdivisions: 4 };
    let torus = MeshSource::Torus {
        lattice: Lattice::equilateral(),
        resolution: 32,
    };
    Some(match command {
        Command::Spectrum {
            source,
            k,
            density,
            tol,
            seed,
        } => ExperimentInputs::Spectrum {
            mesh: source.resolve(sphere),
            density: density
                .clone()
                .map_or(DensitySource::Uniform, |path| DensitySource::File { path }),
            k: *k,
            tolerance: *tol,
            solver: solver(*seed),
        },
        Command::Maximize {
            source,
            k,
            optimizer,
            tol,
            sphere_reference,
        } => ExperimentInputs::Maximize {
            mesh: source.resolve(MeshSource::Icosphere { subdivisions: 3 }),
            k: *k,
            options: optimizer.options(),
            slack: *tol,
            sphere_reference: (*sphere_reference > 0).then_some(*sphere_reference),
        },
        Command::Gap {
            source,
            k,
            optimizer,
            tol,
            eps,
        } => ExperimentInputs::Gap {
            mesh: source.resolve(MeshSource::Icosphere { subdivisions: 3 }),
            k: *k,
            options: optimizer.options(),
            slack: *tol,
            glue_epsilons: eps.clone(),
        },
        Command::Glue {
            source,
            guest,
            eps,
            k,
            collapse,
            neck,
            tol,
            seed,
        } => {
            let host = source.resolve(sphere);
            ExperimentInputs::Glue {
                guest: guest.clone().unwrap_or_else(|| host.clone()),
                host,
                epsilons: eps.clone(),
                k: *k,
                mode: if collapse.is_empty() {
                    GlueMode::Union
                } else {
                    GlueMode::Collapse {
                        neck: *neck,
                        scales: collapse.clone(),
                    }
                },
                tolerance: *tol,
                solver: solver(*seed),
            }
        }
        Command::Handle {
            source,
            eps,
            length,
            k,
            window,
            tol,
            seed,
        } => ExperimentInputs::Handle {
            mesh: source.resolve(torus),
            epsilons: eps.clone(),
            length: *length,
            window: *window,
            k: *k,
            tolerance: *tol,
            solver: solver(*seed),
        },
        Command::Bounds | Command::Report { .. } => return None,
    })
}

fn emit(text: &str, out: Option<&PathBuf>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            other => other,
        },
    }
}

fn render(report: &ExperimentReport, format: Format) -> Result<String, Box<dyn std::error::Error>> {
    Ok(match format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv(),
    })
}

fn summarize(report: &ExperimentReport) {
    for c in &report.checks {
        eprintln!(
            "[{}] {}: {:.6} vs {:.6} ({}, tol {})",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.target,
            c.target_id,
            c.tolerance
        );
    }
    for caveat in &report.caveats {
        eprintln!("note: {caveat}");
    }
    eprintln!(
        "{} finished in {:.2} s (seed {})",
        report.experiment, report.wall_time_s, report.seed
    );
}

fn configure_threads() -> Result<(), Box<dyn std::error::Error>> {
    if let Ok(value) = std::env::var(THREADS_VAR) {
        let threads: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got {value:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
        log::info!("thread pool capped at {threads}");
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<bool, Box<dyn std::error::Error>> {
    configure_threads()?;
    if let Some(inputs) = inputs(&cli.command) {
        let report = experiments::run(&inputs)?;
        summarize(&report);
        emit(&render(&report, cli.format)?, cli.out.as_ref())?;
        return Ok(report.passed());
    }
    match &cli.command {
        Command::Bounds => {
            let table = BoundTable::standard();
            let text = match cli.format {
                Format::Json => serde_json::to_string_pretty(&table)?,
                Format::Csv => table.to_csv(),
            };
            emit(&text, cli.out.as_ref())?;
            Ok(true)
        }
        Command::Report { path, rerun } => {
            let saved = ExperimentReport::from_json(&std::fs::read_to_string(path)?)?;
            let report = if *rerun { experiments::rerun(&saved)? } else { saved };
            summarize(&report);
            if *rerun {
                emit(&render(&report, cli.format)?, cli.out.as_ref())?;
            }
            Ok(report.passed())
        }
        _ => unreachable!("experiment commands are handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn torus_flag_builds_torus_source() {
        let cli = Cli::try_parse_from([
            "conformal-lab",
            "spectrum",
            "--torus",
            "square",
            "--res",
            "16",
            "-k",
            "4",
        ])
        .unwrap();
        match inputs(&cli.command).unwrap() {
            ExperimentInputs::Spectrum { mesh, k, .. } => {
                assert_eq!(
                    mesh,
                    MeshSource::Torus {
                        lattice: Lattice::square(),
                        resolution: 16
                    }
                );
                assert_eq!(k, 4);
            }
            _ => panic!("wrong experiment"),
        }
    }

    #[test]
    fn mesh_flags_are_exclusive() {
        assert!(Cli::try_parse_from(["conformal-lab", "spectrum", "--icosphere", "2", "--torus", "square"]).is_err());
    }

    #[test]
    fn collapse_list_selects_collapse_mode() {
        let cli =
            Cli::try_parse_from(["conformal-lab", "glue", "--icosphere", "3", "--collapse", "1,0.3,0.1"]).unwrap();
        match inputs(&cli.command).unwrap() {
            ExperimentInputs::Glue { mode, guest, host, .. } => {
                assert_eq!(guest, host);
                assert_eq!(
                    mode,
                    GlueMode::Collapse {
                        neck: 0.05,
                        scales: vec![1.0, 0.3, 0.1]
                    }
                );
            }
            _ => panic!("wrong experiment"),
        }
    }
}
