//! Discrete space and space-time operators.
//!
//! Spatial operators return the semi-discrete right-hand side `S(u)` of
//! `du/dt = S(u)`:
//!
//! * [`variable_laplacian`] — conservative second difference
//!   `((gamma u_x)_x)_j = (g_{j+1/2} (u_{j+1} - u_j) - g_{j-1/2} (u_j - u_{j-1})) / h^2`;
//! * [`dg_linear_rhs`] / [`dg_quadratic_rhs`] — upwind discontinuous
//!   Galerkin on piecewise linears with quarter-point nodal dofs.  With
//!   cell-local dof vectors `u_j = (u_{j,0}, u_{j,1})` the linear update is
//!   `S(u)_j = A1 u_j + A2 u_{j-1}` and the quadratic flux adds cell-local
//!   quadratic forms; all blocks are scaled by `1/h`.
//!
//! The space-time operator [`apply_forward`] stacks the implicit residual
//! rows `(u^{l+1} - u^l)/h_t - S(u^{l+1})` (backward Euler) or the
//! three-level BDF2 analogue, and [`apply_adjoint`] is its transpose in the
//! interior unknowns (exactly summation-by-parts; nonlinear fluxes use the
//! Jacobian transpose at a supplied linearization trajectory).

use crate::error::SchemeError;
use crate::grid::{Field, Layout, SpaceTimeGrid};

/// One-step or two-step implicit time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    BackwardEuler,
    Bdf2,
}

/// Flux function `f(u)`, either `a u` or `a u^2 + b u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxKind {
    Linear { advection: f64 },
    Quadratic { quadratic: f64, linear: f64 },
}

impl FluxKind {
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            FluxKind::Linear { advection } => advection * u,
            FluxKind::Quadratic { quadratic, linear } => quadratic * u * u + linear * u,
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            FluxKind::Linear { advection } => advection,
            FluxKind::Quadratic { quadratic, linear } => 2.0 * quadratic * u + linear,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, FluxKind::Linear { .. })
    }
}

/// Flux plus the constant `shift` added to its linear part so that the
/// shifted wave speed is nonnegative and upwinding is valid.  The shift
/// corresponds to a moving frame; callers that use a nonzero shift must
/// account for the frame change themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxSpec {
    pub kind: FluxKind,
    pub shift: f64,
}

impl FluxSpec {
    pub fn unshifted(kind: FluxKind) -> Self {
        Self { kind, shift: 0.0 }
    }

    /// Linear coefficient seen by the upwind stencil (flux linear part plus
    /// shift).
    fn effective_linear(&self) -> f64 {
        match self.kind {
            FluxKind::Linear { advection } => advection + self.shift,
            FluxKind::Quadratic { linear, .. } => linear + self.shift,
        }
    }
}

/// Smallest nonnegative `s` (with a 10% margin) such that `f'(u) + s >= 0`
/// over the sampled states: `s = 1.1 * max(0, -min f'(u_j))`.
pub fn monotonicity_shift(kind: FluxKind, samples: &[f64]) -> f64 {
    let min_speed = samples
        .iter()
        .map(|&u| kind.derivative(u))
        .fold(f64::INFINITY, f64::min);
    if min_speed.is_finite() {
        1.1 * (-min_speed).max(0.0)
    } else {
        0.0
    }
}

/// Conservative variable-coefficient second difference on periodic nodes.
/// `gamma_half[j]` holds `gamma(x_{j+1/2})`.
pub fn variable_laplacian(values: &[f64], gamma_half: &[f64], h_x: f64, out: &mut [f64]) {
    let n = values.len();
    debug_assert_eq!(gamma_half.len(), n);
    debug_assert_eq!(out.len(), n);
    let inv_h2 = 1.0 / (h_x * h_x);
    for j in 0..n {
        let left = if j == 0 { n - 1 } else { j - 1 };
        let right = if j + 1 == n { 0 } else { j + 1 };
        out[j] = inv_h2
            * (gamma_half[j] * (values[right] - values[j])
                - gamma_half[left] * (values[j] - values[left]));
    }
}

// Upwind DG blocks for f(u) = a u on piecewise linears with quarter-point
// dofs (scaled by a/h):  S(u)_j = A1 u_j + A2 u_{j-1}.
const A1: [[f64; 2]; 2] = [[-1.75, -0.75], [2.75, -2.25]];
const A2: [[f64; 2]; 2] = [[-1.25, 3.75], [0.25, -0.75]];

/// `S(u)_j = A1 u_j + A2 u_{j-1}` (upwind, valid for `advection >= 0`).
pub fn dg_linear_rhs(values: &[f64], advection: f64, h_x: f64, out: &mut [f64]) {
    let cells = values.len() / 2;
    debug_assert_eq!(values.len(), 2 * cells);
    debug_assert_eq!(out.len(), 2 * cells);
    let scale = advection / h_x;
    for j in 0..cells {
        let jl = if j == 0 { cells - 1 } else { j - 1 };
        let (u0, u1) = (values[2 * j], values[2 * j + 1]);
        let (l0, l1) = (values[2 * jl], values[2 * jl + 1]);
        out[2 * j] = scale * (A1[0][0] * u0 + A1[0][1] * u1 + A2[0][0] * l0 + A2[0][1] * l1);
        out[2 * j + 1] = scale * (A1[1][0] * u0 + A1[1][1] * u1 + A2[1][0] * l0 + A2[1][1] * l1);
    }
}

/// Transpose of [`dg_linear_rhs`]: `(S^T phi)_j = A1^T phi_j + A2^T phi_{j+1}`.
pub fn dg_linear_adjoint(phi: &[f64], advection: f64, h_x: f64, out: &mut [f64]) {
    let cells = phi.len() / 2;
    debug_assert_eq!(out.len(), 2 * cells);
    let scale = advection / h_x;
    for j in 0..cells {
        let jr = if j + 1 == cells { 0 } else { j + 1 };
        let (p0, p1) = (phi[2 * j], phi[2 * j + 1]);
        let (q0, q1) = (phi[2 * jr], phi[2 * jr + 1]);
        out[2 * j] = scale * (A1[0][0] * p0 + A1[1][0] * p1 + A2[0][0] * q0 + A2[1][0] * q1);
        out[2 * j + 1] = scale * (A1[0][1] * p0 + A1[1][1] * p1 + A2[0][1] * q0 + A2[1][1] * q1);
    }
}

/// Upwind DG right-hand side for `f(u) = quad u^2 + lin u`.
///
/// Each dof of cell `j` receives quadratic forms of `u_{j-1}` and `u_j`
/// (coefficient `quad/8h`) plus the linear blocks of [`dg_linear_rhs`] with
/// coefficient `lin`.
pub fn dg_quadratic_rhs(values: &[f64], quad: f64, lin: f64, h_x: f64, out: &mut [f64]) {
    let cells = values.len() / 2;
    debug_assert_eq!(out.len(), 2 * cells);
    let qs = quad / (8.0 * h_x);
    let ls = lin / h_x;
    for j in 0..cells {
        let jl = if j == 0 { cells - 1 } else { j - 1 };
        let (u0, u1) = (values[2 * j], values[2 * j + 1]);
        let (l0, l1) = (values[2 * jl], values[2 * jl + 1]);
        // quadratic forms: inflow cell enters through (l0 - 3 l1)^2, the own
        // cell through two fixed symmetric forms
        let s_in = l0 - 3.0 * l1;
        let q_in = s_in * s_in;
        let own0 = 13.0 * u0 * u0 + 2.0 * u0 * u1 + 5.0 * u1 * u1;
        let own1 = 9.0 * u0 * u0 + 26.0 * u0 * u1 - 31.0 * u1 * u1;
        out[2 * j] = qs * (5.0 * q_in - own0)
            + ls * (A1[0][0] * u0 + A1[0][1] * u1 + A2[0][0] * l0 + A2[0][1] * l1);
        out[2 * j + 1] = qs * (-q_in + own1)
            + ls * (A1[1][0] * u0 + A1[1][1] * u1 + A2[1][0] * l0 + A2[1][1] * l1);
    }
}

/// Jacobian transpose of [`dg_quadratic_rhs`] at state `u`, applied to `phi`.
pub fn dg_quadratic_adjoint(
    phi: &[f64],
    u: &[f64],
    quad: f64,
    lin: f64,
    h_x: f64,
    out: &mut [f64],
) {
    let cells = phi.len() / 2;
    debug_assert_eq!(u.len(), 2 * cells);
    debug_assert_eq!(out.len(), 2 * cells);
    let qs = quad / (4.0 * h_x);
    let ls = lin / h_x;
    for j in 0..cells {
        let jr = if j + 1 == cells { 0 } else { j + 1 };
        let (p0, p1) = (phi[2 * j], phi[2 * j + 1]);
        let (q0, q1) = (phi[2 * jr], phi[2 * jr + 1]);
        let (u0, u1) = (u[2 * j], u[2 * j + 1]);
        // symmetric 2x2 matrix 2 * (p0 C3 + p1 C4 + q0 C1 + q1 C2) / (quad/h)
        let m00 = qs * (-13.0 * p0 + 9.0 * p1 + 5.0 * q0 - q1);
        let m01 = qs * (-p0 + 13.0 * p1 - 15.0 * q0 + 3.0 * q1);
        let m11 = qs * (-5.0 * p0 - 31.0 * p1 + 45.0 * q0 - 9.0 * q1);
        out[2 * j] = m00 * u0
            + m01 * u1
            + ls * (A1[0][0] * p0 + A1[1][0] * p1 + A2[0][0] * q0 + A2[1][0] * q1);
        out[2 * j + 1] = m01 * u0
            + m11 * u1
            + ls * (A1[0][1] * p0 + A1[1][1] * p1 + A2[0][1] * q0 + A2[1][1] * q1);
    }
}

/// Spatial discretization choice.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceDiscretization {
    /// `S(u) = (gamma u_x)_x` on nodes; `gamma_half[j] = gamma(x_{j+1/2})`.
    FdDiffusion { gamma_half: Vec<f64> },
    /// `S(u) = -f(u)_x` by upwind DG on quarter-point pairs.
    DgUpwind { flux: FluxSpec },
}

/// A time scheme paired with a spatial discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    time: TimeScheme,
    space: SpaceDiscretization,
}

impl SchemeConfig {
    /// Finite-difference diffusion; every half-node coefficient must be
    /// strictly positive.
    pub fn fd_diffusion(time: TimeScheme, gamma_half: Vec<f64>) -> Result<Self, SchemeError> {
        for (index, &value) in gamma_half.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(SchemeError::NonPositiveViscosity { index, value });
            }
        }
        Ok(Self {
            time,
            space: SpaceDiscretization::FdDiffusion { gamma_half },
        })
    }

    /// Upwind DG for the given flux (diffusion-free).
    pub fn dg_upwind(time: TimeScheme, flux: FluxSpec) -> Self {
        Self {
            time,
            space: SpaceDiscretization::DgUpwind { flux },
        }
    }

    pub fn time(&self) -> TimeScheme {
        self.time
    }

    pub fn space(&self) -> &SpaceDiscretization {
        &self.space
    }

    pub fn flux(&self) -> Option<FluxSpec> {
        match &self.space {
            SpaceDiscretization::DgUpwind { flux } => Some(*flux),
            SpaceDiscretization::FdDiffusion { .. } => None,
        }
    }

    pub fn layout(&self) -> Layout {
        match self.space {
            SpaceDiscretization::FdDiffusion { .. } => Layout::Node,
            SpaceDiscretization::DgUpwind { .. } => Layout::QuarterPair,
        }
    }

    /// True when the space-time operator is linear in `u`.
    pub fn is_linear(&self) -> bool {
        match &self.space {
            SpaceDiscretization::FdDiffusion { .. } => true,
            SpaceDiscretization::DgUpwind { flux } => flux.kind.is_linear(),
        }
    }

    /// Checks scheme/grid compatibility (step counts, table lengths).
    pub fn validate_grid(&self, grid: &SpaceTimeGrid) -> Result<(), SchemeError> {
        if self.time == TimeScheme::Bdf2 && grid.n_t() < 2 {
            return Err(SchemeError::TwoStepNeedsHistory { n_t: grid.n_t() });
        }
        if let SpaceDiscretization::FdDiffusion { gamma_half } = &self.space {
            if gamma_half.len() != grid.n_x() {
                return Err(SchemeError::ViscosityLengthMismatch {
                    got: gamma_half.len(),
                    expected: grid.n_x(),
                });
            }
        }
        Ok(())
    }

    /// Semi-discrete right-hand side `S(u)` of one slice.
    pub fn spatial_rhs_into(&self, h_x: f64, slice: &[f64], out: &mut [f64]) {
        match &self.space {
            SpaceDiscretization::FdDiffusion { gamma_half } => {
                variable_laplacian(slice, gamma_half, h_x, out)
            }
            SpaceDiscretization::DgUpwind { flux } => match flux.kind {
                FluxKind::Linear { .. } => {
                    dg_linear_rhs(slice, flux.effective_linear(), h_x, out)
                }
                FluxKind::Quadratic { quadratic, .. } => {
                    dg_quadratic_rhs(slice, quadratic, flux.effective_linear(), h_x, out)
                }
            },
        }
    }

    /// Transpose (Jacobian transpose at `u_slice` for nonlinear fluxes) of
    /// the spatial right-hand side.
    pub fn spatial_adjoint_into(&self, h_x: f64, phi: &[f64], u_slice: &[f64], out: &mut [f64]) {
        match &self.space {
            SpaceDiscretization::FdDiffusion { gamma_half } => {
                // conservative diffusion stencil is symmetric
                variable_laplacian(phi, gamma_half, h_x, out)
            }
            SpaceDiscretization::DgUpwind { flux } => match flux.kind {
                FluxKind::Linear { .. } => {
                    dg_linear_adjoint(phi, flux.effective_linear(), h_x, out)
                }
                FluxKind::Quadratic { quadratic, .. } => dg_quadratic_adjoint(
                    phi,
                    u_slice,
                    quadratic,
                    flux.effective_linear(),
                    h_x,
                    out,
                ),
            },
        }
    }
}

/// Residual of the implicit scheme: one slice per time step.
///
/// Row `m` (for the step reaching level `m + 1`) is
/// `(u^{m+1} - u^m)/h_t - S(u^{m+1})` under backward Euler; BDF2 replaces
/// the difference by `(3 u^{m+1} - 4 u^m + u^{m-1})/(2 h_t)` for `m >= 1`
/// and starts up with one backward Euler row.
pub fn apply_forward(
    scheme: &SchemeConfig,
    grid: &SpaceTimeGrid,
    u: &Field,
) -> Result<Field, SchemeError> {
    scheme.validate_grid(grid)?;
    if u.layout() != scheme.layout() {
        return Err(SchemeError::LayoutMismatch {
            got: u.layout(),
            expected: scheme.layout(),
        });
    }
    assert_eq!(u.n_slices(), grid.n_t() + 1, "trajectory must hold n_t + 1 slices");
    let mut out = Field::zeros(u.layout(), u.n_x(), grid.n_t());
    apply_forward_into(scheme, grid, u, &mut out);
    Ok(out)
}

/// In-place variant of [`apply_forward`]; `out` must hold `n_t` slices.
pub fn apply_forward_into(scheme: &SchemeConfig, grid: &SpaceTimeGrid, u: &Field, out: &mut Field) {
    let n_t = grid.n_t();
    let h_t = grid.h_t();
    let n = u.n_dof();
    debug_assert_eq!(out.n_slices(), n_t);
    for m in 0..n_t {
        // out[m] <- S(u^{m+1}), then flip sign while adding the time part
        let (next, out_m) = (u.slice(m + 1), out.slice_mut(m));
        scheme.spatial_rhs_into(grid.h_x(), next, out_m);
        match (scheme.time(), m) {
            (TimeScheme::BackwardEuler, _) | (TimeScheme::Bdf2, 0) => {
                let prev = u.slice(m);
                let next = u.slice(m + 1);
                let out_m = out.slice_mut(m);
                for i in 0..n {
                    out_m[i] = (next[i] - prev[i]) / h_t - out_m[i];
                }
            }
            (TimeScheme::Bdf2, _) => {
                let oldest = u.slice(m - 1);
                let prev = u.slice(m);
                let next = u.slice(m + 1);
                let out_m = out.slice_mut(m);
                for i in 0..n {
                    out_m[i] =
                        (3.0 * next[i] - 4.0 * prev[i] + oldest[i]) / (2.0 * h_t) - out_m[i];
                }
            }
        }
    }
}

/// Transpose of [`apply_forward`] with respect to the interior unknowns
/// `u^1..u^{n_t}`; row `r` is the gradient of `<A(u), phi>` (plain stencil
/// scaling, no quadrature weights) with respect to `u^{r+1}`.
///
/// `phi` may carry either `n_t` slices or `n_t + 1`; a stored terminal slice
/// participates exactly as written, otherwise it is taken as zero.  For
/// quadratic fluxes the rows use the Jacobian transpose at trajectory `u`.
pub fn apply_adjoint(
    scheme: &SchemeConfig,
    grid: &SpaceTimeGrid,
    phi: &Field,
    u: &Field,
) -> Result<Field, SchemeError> {
    scheme.validate_grid(grid)?;
    if phi.layout() != scheme.layout() {
        return Err(SchemeError::LayoutMismatch {
            got: phi.layout(),
            expected: scheme.layout(),
        });
    }
    assert!(
        phi.n_slices() == grid.n_t() || phi.n_slices() == grid.n_t() + 1,
        "multiplier must hold n_t or n_t + 1 slices"
    );
    assert_eq!(u.n_slices(), grid.n_t() + 1);
    let mut out = Field::zeros(phi.layout(), phi.n_x(), grid.n_t());
    apply_adjoint_into(scheme, grid, phi, u, &mut out);
    Ok(out)
}

/// In-place variant of [`apply_adjoint`]; `out` must hold `n_t` slices.
pub fn apply_adjoint_into(
    scheme: &SchemeConfig,
    grid: &SpaceTimeGrid,
    phi: &Field,
    u: &Field,
    out: &mut Field,
) {
    let n_t = grid.n_t();
    let h_t = grid.h_t();
    let n = phi.n_dof();
    debug_assert_eq!(out.n_slices(), n_t);
    let stored = phi.n_slices();
    // slice l of phi, taking levels beyond storage as zero
    let phi_get = |l: usize| -> Option<&[f64]> {
        if l < stored {
            Some(phi.slice(l))
        } else {
            None
        }
    };
    for r in 0..n_t {
        // spatial part: S^T(phi^r) linearized at u^{r+1}
        scheme.spatial_adjoint_into(grid.h_x(), phi.slice(r), u.slice(r + 1), out.slice_mut(r));
        match (scheme.time(), r) {
            (TimeScheme::BackwardEuler, _) => {
                let here = phi.slice(r);
                let next = phi_get(r + 1);
                let out_r = out.slice_mut(r);
                for i in 0..n {
                    let diff = here[i] - next.map_or(0.0, |s| s[i]);
                    out_r[i] = diff / h_t - out_r[i];
                }
            }
            (TimeScheme::Bdf2, 0) => {
                // gradient w.r.t. u^1: phi^0 - 2 phi^1 + phi^2 / 2
                let p0 = phi.slice(0);
                let p1 = phi_get(1);
                let p2 = phi_get(2);
                let out_r = out.slice_mut(r);
                for i in 0..n {
                    let diff = p0[i] - 2.0 * p1.map_or(0.0, |s| s[i])
                        + 0.5 * p2.map_or(0.0, |s| s[i]);
                    out_r[i] = diff / h_t - out_r[i];
                }
            }
            (TimeScheme::Bdf2, _) => {
                // gradient w.r.t. u^{r+1}: 3 phi^r / 2 - 2 phi^{r+1} + phi^{r+2} / 2
                let p0 = phi.slice(r);
                let p1 = phi_get(r + 1);
                let p2 = phi_get(r + 2);
                let out_r = out.slice_mut(r);
                for i in 0..n {
                    let diff = 1.5 * p0[i] - 2.0 * p1.map_or(0.0, |s| s[i])
                        + 0.5 * p2.map_or(0.0, |s| s[i]);
                    out_r[i] = diff / h_t - out_r[i];
                }
            }
        }
    }
}

/// Gradient factor of the initial-slice update: `phi^0 - lambda` under
/// backward Euler, `phi^0 - phi^1 / 2 - lambda` under BDF2 (the extra term
/// comes from `u^0` entering the second BDF2 row).
pub fn initial_gradient(
    scheme: &SchemeConfig,
    phi: &Field,
    lambda: &[f64],
    out: &mut [f64],
) {
    let p0 = phi.slice(0);
    match scheme.time() {
        TimeScheme::BackwardEuler => {
            for i in 0..out.len() {
                out[i] = p0[i] - lambda[i];
            }
        }
        TimeScheme::Bdf2 => {
            let p1 = phi.slice(1);
            for i in 0..out.len() {
                out[i] = p0[i] - 0.5 * p1[i] - lambda[i];
            }
        }
    }
}
