use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Structural defects of a triangle mesh. Each variant names the first
/// offending simplex found during validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} has {arity} vertices, only triangles are supported")]
    NonTriangleFace { face: usize, arity: usize },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },
    #[error("edge ({a}, {b}) lies on the boundary (only one incident face)")]
    BoundaryEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) is non-manifold ({faces} incident faces)")]
    NonManifoldEdge { a: usize, b: usize, faces: usize },
    #[error("edge ({a}, {b}) is traversed twice in the same direction (inconsistent orientation)")]
    InconsistentOrientation { a: usize, b: usize },
    #[error("vertex {vertex} is non-manifold (its link is not a single cycle)")]
    NonManifoldVertex { vertex: usize },
    #[error("vertex {vertex} is not referenced by any face")]
    UnreferencedVertex { vertex: usize },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("edge ({a}, {b}) has invalid length {length}")]
    InvalidLength { a: usize, b: usize, length: f64 },
    #[error("mesh has {components} connected components")]
    Disconnected { components: usize },
    #[error("Euler characteristic {chi} does not describe a closed orientable surface")]
    InvalidEuler { chi: i64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("ill-conditioned input: {0}")]
    IllConditioned(String),
    #[error("invalid density: {0}")]
    Density(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("solver did not converge after {iterations} iterations (worst residual {worst:.3e})")]
    NotConverged {
        iterations: usize,
        worst: f64,
        residuals: Vec<f64>,
    },
    #[error("eigenvalue {index} belongs to the multiplicity cluster {cluster:?}; use the cluster objective")]
    Multiplicity { index: usize, cluster: Vec<usize> },
    #[error("guard violated: {0}")]
    Guard(String),
    #[error("surgery preparation failed: {0}")]
    Preparation(String),
    #[error("caps around vertices {a} and {b} overlap")]
    OverlappingCaps { a: usize, b: usize },
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
