//! Implicit space-time solvers for 1-D periodic scalar conservation laws.
//!
//! The library discretizes equations of the form
//!
//! ```text
//!     u_t + f(u)_x = (gamma(x) u_x)_x        on a periodic interval,
//! ```
//!
//! with backward Euler or BDF2 in time and either a variable-coefficient
//! finite-difference diffusion stencil or an upwind discontinuous Galerkin
//! scheme (piecewise linear, two quarter-point dofs per cell) in space.
//! Instead of solving each implicit step with Newton iterations, the whole
//! space-time system is written as a saddle-point problem and solved with
//! preconditioned primal-dual (PDHG) iterations whose dual metric is induced
//! by a constant-coefficient elliptic operator `K` inverted spectrally (FFT
//! in space, cosine transform in time).  The step-size/contraction theory for
//! the linear case, a mesh-refinement-in-time strategy, and a one-timestep
//! marching strategy are all provided, together with direct and explicit
//! reference solvers used as independent oracles.

pub mod config;
pub mod csvout;
pub mod error;
pub mod grid;
pub mod operators;
pub mod oracle;
pub mod pdhg;
pub mod precond;
pub mod problems;
pub mod strategies;
pub mod transforms;

pub use error::{
    ConfigError, CsvError, GridError, OracleError, PrecondError, SchemeError, SolveError,
    StrategyError,
};
pub use grid::{inner_product, weighted_norm, Field, Layout, SpaceTimeGrid};
pub use operators::{
    apply_adjoint, apply_forward, monotonicity_shift, FluxKind, FluxSpec, SchemeConfig,
    SpaceDiscretization, TimeScheme,
};
pub use pdhg::{
    contraction_report, estimate_spectral_bound, residual_pair, solve, solve_with_probe,
    ContractionReport, PdhgConfig, ResidualNorm, SaddlePointProblem, Solution, SolveStats,
    WarmStart,
};
pub use precond::{estimate_viscosity_bound, KKind, KOperator};
pub use problems::{
    analytic_transport, convergence_orders, heat_problem, l2_error, traffic_problem,
    transport_problem, ProblemSpec, TransportInit,
};
pub use strategies::{
    cost_report, refine_in_time, solve_one_timestep, solve_with_refinement, CostRow, CostTable,
    RefinementPlan,
};
