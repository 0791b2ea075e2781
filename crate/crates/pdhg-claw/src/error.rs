//! Error types for each stage of the pipeline.

use thiserror::Error;

/// Grid construction failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("spatial cell count must be at least 2, got {got}")]
    TooFewCells { got: usize },
    #[error("time step count must be at least 1")]
    NoTimeSteps,
    #[error("domain is empty or non-finite: x_min = {x_min}, x_max = {x_max}")]
    EmptyDomain { x_min: f64, x_max: f64 },
    #[error("time horizon must be positive and finite, got {t_final}")]
    NonPositiveHorizon { t_final: f64 },
}

/// Scheme assembly failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("diffusion coefficient must be positive at every half node; sample {index} is {value}")]
    NonPositiveViscosity { index: usize, value: f64 },
    #[error("viscosity table has {got} entries but the grid has {expected} cells")]
    ViscosityLengthMismatch { got: usize, expected: usize },
    #[error("the two-step time scheme needs at least 2 time steps, grid has {n_t}")]
    TwoStepNeedsHistory { n_t: usize },
    #[error("field layout {got:?} does not match the scheme's layout {expected:?}")]
    LayoutMismatch {
        got: crate::grid::Layout,
        expected: crate::grid::Layout,
    },
}

/// Preconditioner build/solve failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecondError {
    #[error("dense factorization limited to 10^4 unknowns, requested {unknowns}")]
    SizeGuardExceeded { unknowns: usize },
    #[error("right-hand side has {got} slices, operator expects {expected}")]
    SliceCountMismatch { got: usize, expected: usize },
}

/// Saddle-point solver failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(
        "divergence at iteration {iteration}: {field}[{index}] is non-finite"
    )]
    Divergence {
        iteration: usize,
        field: &'static str,
        index: usize,
    },
    #[error(
        "step sizes violate the spectral bound: tau_u * tau_phi * nu_max = {product:.6} >= 1"
    )]
    StepSizeBound { product: f64 },
    #[error("spectral bound estimation requires a linear flux")]
    SpectralBoundNeedsLinearFlux,
    #[error("power iteration did not reach the requested tolerance")]
    PowerIterationStalled,
    #[error("contraction report needs at least {needed} recorded residuals, history has {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Strategy-level (refinement / marching) failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("refinement plan is empty or inverted: coarsest 2^{coarsest} > finest 2^{finest}")]
    BadLevelRange { coarsest: u32, finest: u32 },
    #[error("warm-start transfer expects the fine grid to double the coarse step count ({coarse} -> {fine})")]
    GridMismatch { coarse: usize, fine: usize },
    #[error("level with 2^{exponent} steps failed: {source}")]
    Level {
        exponent: u32,
        source: SolveError,
    },
    #[error("window {window} failed: {source}")]
    Window {
        window: usize,
        source: SolveError,
    },
    #[error("cost report needs at least one run")]
    EmptyCostReport,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Reference-solver failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("direct solve limited to 10^4 unknowns per step, requested {unknowns}")]
    SizeGuardExceeded { unknowns: usize },
    #[error("direct solve needs a linear flux or diffusion scheme")]
    NeedsLinearOperator,
    #[error("step matrix is singular")]
    SingularStepMatrix,
    #[error("explicit step {dt} violates the stability bound {bound}")]
    StabilityBound { dt: f64, bound: f64 },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Configuration parse errors (file or inline).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: unknown field `{field}`")]
    UnknownField { line: usize, field: String },
    #[error("line {line}: field `{field}`: {message}")]
    BadValue {
        line: usize,
        field: String,
        message: String,
    },
    #[error("field `{field}` is required")]
    MissingField { field: String },
}

/// CSV emission errors.
#[derive(Debug, Error)]
pub enum CsvError {
    #[error("I/O error writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}
