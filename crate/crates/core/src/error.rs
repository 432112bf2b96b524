use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("infeasible envelope bound: the limit {limit} does not vanish")]
    Infeasible { limit: String },

    #[error("condition (g4) violated: sup G(xi)/xi^2 = {sup} <= 0")]
    G4Violation { sup: f64 },

    #[error("dilation pushes mass {lost_mass:e} past the truncation radius")]
    Truncation { lost_mass: f64 },

    #[error("non-finite value while evaluating {0}")]
    Evaluation(String),

    #[error("no shooting bracket for {nodes} nodes in s in [{s_lo:e}, {s_hi:e}]")]
    BracketNotFound { nodes: usize, s_lo: f64, s_hi: f64 },

    #[error("Newton polish did not converge: residual {residual:e} after {iterations} iterations")]
    PolishDivergence { residual: f64, iterations: usize },

    #[error("mountain-pass geometry not found: {0}")]
    Geometry(String),

    #[error("flow stalled after {steps} steps: {reason}")]
    StalledFlow { steps: usize, reason: String },

    #[error("no multiplier with mass {target} in lambda window [{lo}, {hi}] (mass range [{mass_lo}, {mass_hi}])")]
    NoMassRoot {
        target: f64,
        lo: f64,
        hi: f64,
        mass_lo: f64,
        mass_hi: f64,
    },

    #[error("energy unbounded below on the mass sphere: {0}")]
    Unbounded(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
