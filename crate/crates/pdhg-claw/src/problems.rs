//! Built-in benchmark problems and error metrics.
//!
//! Three canonical setups cover the three operator families:
//!
//! * [`heat_problem`] — variable-coefficient diffusion
//!   `u_t = (gamma(x) u_x)_x`, `gamma(x) = 0.5 + 0.1 sin(2 pi x)`, Gaussian
//!   bump initial data on `[0, 1]`, horizon `0.1`;
//! * [`transport_problem`] — linear advection `u_t + 2 u_x = 0` on `[0, 1]`,
//!   either a smooth sine profile (horizon `0.5`) or a box profile
//!   (horizon `0.25`);
//! * [`traffic_problem`] — the nonlinear flux `f(u) = u (1 - u)` on
//!   `[0, 2]`, horizon `1`, piecewise-constant data that develops both a
//!   shock and a rarefaction fan.
//!
//! Each problem knows its layout, how to sample coefficients and initial
//! data on a grid, which preconditioner to build, and a set of step sizes
//! for which the iteration provably (linear case) or empirically (traffic)
//! contracts.

use std::f64::consts::PI;

use crate::error::SchemeError;
use crate::error::GridError;
use crate::grid::{sample_initial, Field, Layout, SpaceTimeGrid};
use crate::operators::{monotonicity_shift, FluxKind, FluxSpec, SchemeConfig, TimeScheme};
use crate::precond::{estimate_viscosity_bound, KKind, KOperator};

/// Initial profile for the linear transport benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportInit {
    /// `sin(2 pi x)`, horizon `0.5`.
    Smooth,
    /// Indicator of `[1/4, 3/4]`, horizon `0.25`.
    Step,
}

#[derive(Debug, Clone, Copy)]
enum ProblemKind {
    Diffusion { gamma: fn(f64) -> f64 },
    LinearTransport { advection: f64 },
    NonlinearConservation {
        flux: FluxKind,
        /// Bound on `|f'(u)|` over the admissible states, used by the
        /// preconditioner.
        wave_speed_bound: f64,
    },
}

/// A named benchmark: domain, horizon, coefficients, initial data and
/// recommended step sizes.
#[derive(Debug, Clone, Copy)]
pub struct ProblemSpec {
    name: &'static str,
    x_min: f64,
    x_max: f64,
    t_final: f64,
    kind: ProblemKind,
    initial: fn(f64) -> f64,
    default_steps: (f64, f64, f64),
}

fn heat_gamma(x: f64) -> f64 {
    0.5 + 0.1 * (2.0 * PI * x).sin()
}

fn heat_initial(x: f64) -> f64 {
    (-64.0 * (x - 0.5) * (x - 0.5)).exp()
}

fn transport_smooth_initial(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

fn transport_step_initial(x: f64) -> f64 {
    if (0.25..=0.75).contains(&x) {
        1.0
    } else {
        0.0
    }
}

fn traffic_initial(x: f64) -> f64 {
    if x >= 1.0 {
        0.1
    } else {
        0.25
    }
}

/// Variable-coefficient diffusion benchmark.
pub fn heat_problem() -> ProblemSpec {
    ProblemSpec {
        name: "heat",
        x_min: 0.0,
        x_max: 1.0,
        t_final: 0.1,
        kind: ProblemKind::Diffusion { gamma: heat_gamma },
        initial: heat_initial,
        default_steps: (0.8, 0.8, 0.99),
    }
}

/// Linear advection benchmark with speed 2.
pub fn transport_problem(init: TransportInit) -> ProblemSpec {
    ProblemSpec {
        name: match init {
            TransportInit::Smooth => "transport",
            TransportInit::Step => "transport-step",
        },
        x_min: 0.0,
        x_max: 1.0,
        t_final: match init {
            TransportInit::Smooth => 0.5,
            TransportInit::Step => 0.25,
        },
        kind: ProblemKind::LinearTransport {
            advection: 2.0,
        },
        initial: match init {
            TransportInit::Smooth => transport_smooth_initial,
            TransportInit::Step => transport_step_initial,
        },
        // the two-step time scheme roughly quadruples the spectral bound of
        // the preconditioned operator, so stay well inside the step bound
        default_steps: (0.5, 0.5, 0.99),
    }
}

/// Nonlinear traffic-flow benchmark, `f(u) = u (1 - u)`.
pub fn traffic_problem() -> ProblemSpec {
    ProblemSpec {
        name: "traffic",
        x_min: 0.0,
        x_max: 2.0,
        t_final: 1.0,
        kind: ProblemKind::NonlinearConservation {
            flux: FluxKind::Quadratic {
                quadratic: -1.0,
                linear: 1.0,
            },
            // |f'(u)| = |1 - 2u| <= 1 over the admissible densities [0, 1]
            wave_speed_bound: 1.0,
        },
        initial: traffic_initial,
        default_steps: (0.4, 0.4, 0.99),
    }
}

impl ProblemSpec {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "heat" => Some(heat_problem()),
            "transport" => Some(transport_problem(TransportInit::Smooth)),
            "transport-step" => Some(transport_problem(TransportInit::Step)),
            "traffic" => Some(traffic_problem()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn layout(&self) -> Layout {
        match self.kind {
            ProblemKind::Diffusion { .. } => Layout::Node,
            _ => Layout::QuarterPair,
        }
    }

    /// `(tau_u, tau_phi, tau_lambda)` known to keep the iteration inside its
    /// contraction region for this problem family.
    pub fn default_steps(&self) -> (f64, f64, f64) {
        self.default_steps
    }

    pub fn initial_value(&self, x: f64) -> f64 {
        (self.initial)(x)
    }

    /// Flux of the conservation-law problems (`None` for diffusion).
    pub fn flux(&self) -> Option<FluxKind> {
        match self.kind {
            ProblemKind::Diffusion { .. } => None,
            ProblemKind::LinearTransport { advection, .. } => {
                Some(FluxKind::Linear { advection })
            }
            ProblemKind::NonlinearConservation { flux, .. } => Some(flux),
        }
    }

    /// Diffusion coefficient at a point (`None` for conservation laws).
    pub fn viscosity_at(&self, x: f64) -> Option<f64> {
        match self.kind {
            ProblemKind::Diffusion { gamma } => Some(gamma(x)),
            _ => None,
        }
    }

    pub fn grid(&self, n_x: usize, n_t: usize) -> Result<SpaceTimeGrid, GridError> {
        SpaceTimeGrid::new(self.x_min, self.x_max, n_x, self.t_final, n_t)
    }

    /// Initial data sampled at the problem's dof coordinates.
    pub fn initial_slice(&self, grid: &SpaceTimeGrid) -> Vec<f64> {
        sample_initial(self.layout(), grid, self.initial)
    }

    /// Discretization for this problem on the given grid.  Conservation
    /// laws get the monotonicity shift computed from the sampled initial
    /// data (zero for all three stock problems).
    pub fn scheme_for_grid(
        &self,
        time: TimeScheme,
        grid: &SpaceTimeGrid,
    ) -> Result<SchemeConfig, SchemeError> {
        match self.kind {
            ProblemKind::Diffusion { gamma } => {
                let samples: Vec<f64> = (0..grid.n_x()).map(|j| gamma(grid.x_half(j))).collect();
                SchemeConfig::fd_diffusion(time, samples)
            }
            ProblemKind::LinearTransport { advection, .. } => {
                let kind = FluxKind::Linear { advection };
                let shift = monotonicity_shift(kind, &self.initial_slice(grid));
                Ok(SchemeConfig::dg_upwind(time, FluxSpec { kind, shift }))
            }
            ProblemKind::NonlinearConservation { flux, .. } => {
                let shift = monotonicity_shift(flux, &self.initial_slice(grid));
                Ok(SchemeConfig::dg_upwind(time, FluxSpec { kind: flux, shift }))
            }
        }
    }

    /// Preconditioner matched to the problem's coefficients.
    pub fn k_operator(&self, grid: &SpaceTimeGrid) -> KOperator {
        let kind = match self.kind {
            ProblemKind::Diffusion { gamma } => {
                let samples: Vec<f64> = (0..grid.n_x()).map(|j| gamma(grid.x_half(j))).collect();
                KKind::LinearLaw {
                    advection: 0.0,
                    viscosity_bound: estimate_viscosity_bound(&samples),
                }
            }
            ProblemKind::LinearTransport { advection, .. } => KKind::LinearLaw {
                advection,
                viscosity_bound: 0.0,
            },
            ProblemKind::NonlinearConservation {
                wave_speed_bound, ..
            } => KKind::NonlinearLaw {
                wave_speed: wave_speed_bound,
            },
        };
        KOperator::build(kind, grid, self.layout())
    }
}

/// Exact solution of the linear transport benchmarks: the initial profile
/// carried along characteristics with periodic wrap.  `None` for problems
/// without that closed form.
pub fn analytic_transport(spec: &ProblemSpec, x: f64, t: f64) -> Option<f64> {
    match spec.kind {
        ProblemKind::LinearTransport { advection, .. } => {
            let length = spec.x_max - spec.x_min;
            let mut origin = (x - advection * t - spec.x_min) % length;
            if origin < 0.0 {
                origin += length;
            }
            Some((spec.initial)(spec.x_min + origin))
        }
        _ => None,
    }
}

/// Space-time `L^2` error of the interior slices against an exact solution
/// `exact(x, t)`, normalized by the measure of the space-time cylinder —
/// i.e. the root-mean-square of the pointwise error:
///
/// ```text
///     sqrt( (1 / (T |Omega|)) sum_{l=1..n_t} sum_dofs h_t dx (u_l - exact)^2 ) .
/// ```
///
/// The quadrature weight `h_t dx` is uniform, so this equals the plain
/// per-dof mean; the normalization makes errors comparable across domain
/// sizes and final times.
pub fn l2_error(grid: &SpaceTimeGrid, u: &Field, exact: &dyn Fn(f64, f64) -> f64) -> f64 {
    let layout = u.layout();
    let mut total = 0.0;
    let mut count = 0usize;
    for l in 1..u.n_slices() {
        let t = grid.t_node(l);
        for j in 0..grid.n_x() {
            for d in 0..layout.dof_per_cell() {
                let x = grid.dof_coordinate(layout, j, d);
                let diff = u.at(l, j, d) - exact(x, t);
                total += diff * diff;
                count += 1;
            }
        }
    }
    if count == 0 {
        return 0.0;
    }
    (total / count as f64).sqrt()
}

/// Observed orders between successive mesh errors,
/// `log2(e_k / e_{k+1})`; `None` when fewer than two errors are given or
/// any entry is not positive.
pub fn convergence_orders(errors: &[f64]) -> Option<Vec<f64>> {
    if errors.len() < 2 || errors.iter().any(|&e| !(e > 0.0)) {
        return None;
    }
    Some(
        errors
            .windows(2)
            .map(|pair| (pair[0] / pair[1]).log2())
            .collect(),
    )
}
