//! Preconditioned primal-dual (PDHG) iteration for the space-time saddle
//! point
//!
//! ```text
//!     min_u max_{phi, lambda}  -<A(u), phi>_w - dx <lambda, u^0 - g>
//! ```
//!
//! whose stationary points are exactly the trajectories with `A(u) = 0` and
//! `u^0 = g` (the multipliers vanish there).  The dual ascent step is
//! preconditioned by [`KOperator`]: `phi <- phi - tau_phi K^{-1} A(u)`, which
//! makes the iteration's contraction factor mesh-independent for linear
//! laws.  Primal updates use the (Jacobian-transposed) adjoint of the
//! forward operator; both dual variables are extrapolated with factor one.
//!
//! The iteration stops when the weighted norms of the primal residual
//! `A(u)` and the dual residual `A'(u)^T phi` both drop below `eps`; hitting
//! the iteration cap is reported as a non-converged but otherwise usable
//! solution, while non-finite values abort with [`SolveError::Divergence`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SolveError;
use crate::grid::{weighted_norm, Field, Layout, SpaceTimeGrid};
use crate::operators::{
    apply_adjoint_into, apply_forward_into, initial_gradient, SchemeConfig,
};
use crate::precond::KOperator;

/// Norm used for the residual pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualNorm {
    /// `sqrt(sum h_t dx v^2)` over all slices (whole-trajectory solves).
    SpaceTime,
    /// `sqrt(sum dx v^2)`; used by single-step marching windows so that the
    /// tolerance does not shrink with the step size.
    SpatialOnly,
}

/// Step sizes and stopping policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PdhgConfig {
    pub tau_u: f64,
    pub tau_phi: f64,
    pub tau_lambda: f64,
    /// Step for the initial slice; defaults to `tau_u`.
    pub tau_u0: Option<f64>,
    pub eps: f64,
    pub max_iters: usize,
    /// Refuse to start when `tau_u tau_phi nu_max >= 1` (linear laws only).
    pub enforce_bound: bool,
    pub residual_norm: ResidualNorm,
}

impl PdhgConfig {
    pub fn with_steps(tau_u: f64, tau_phi: f64, tau_lambda: f64) -> Self {
        Self {
            tau_u,
            tau_phi,
            tau_lambda,
            tau_u0: None,
            eps: 1e-6,
            max_iters: 100_000,
            enforce_bound: false,
            residual_norm: ResidualNorm::SpaceTime,
        }
    }

    fn tau_u0(&self) -> f64 {
        self.tau_u0.unwrap_or(self.tau_u)
    }
}

/// One saddle-point instance: scheme, grid, preconditioner and initial data.
pub struct SaddlePointProblem<'a> {
    pub scheme: &'a SchemeConfig,
    pub grid: &'a SpaceTimeGrid,
    pub k_op: &'a KOperator,
    pub initial_data: &'a [f64],
}

/// Optional starting state (otherwise: constant-in-time extension of the
/// initial data, zero multipliers).  Extrapolation history starts fresh.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub u: Field,
    pub phi: Field,
    pub lambda: Vec<f64>,
}

/// Per-solve grid/iteration bookkeeping used by the cost accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveStats {
    pub n_t: usize,
    pub n_x: usize,
    pub iterations: usize,
}

/// Converged (or capped) saddle-point state plus run records.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Field,
    pub phi: Field,
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `(primal, dual)` residual norms; entry 0 is the starting state.
    pub residual_history: Vec<(f64, f64)>,
    pub stats: Vec<SolveStats>,
}

/// Spectral bound and predicted/observed per-iteration contraction factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub spectral_bound: f64,
    pub predicted_factor: f64,
    pub observed_factor: f64,
}

fn field_norm(grid: &SpaceTimeGrid, norm: ResidualNorm, f: &Field) -> f64 {
    match norm {
        ResidualNorm::SpaceTime => weighted_norm(grid, f),
        ResidualNorm::SpatialOnly => {
            let w = f.layout().dof_spacing(grid.h_x());
            f.values().iter().map(|v| w * v * v).sum::<f64>().sqrt()
        }
    }
}

/// Norms of the primal residual `A(u)` and dual residual `A'(u)^T phi`.
pub fn residual_pair(
    scheme: &SchemeConfig,
    grid: &SpaceTimeGrid,
    norm: ResidualNorm,
    u: &Field,
    phi: &Field,
) -> Result<(f64, f64), SolveError> {
    let forward = crate::operators::apply_forward(scheme, grid, u)?;
    let adjoint = crate::operators::apply_adjoint(scheme, grid, phi, u)?;
    Ok((
        field_norm(grid, norm, &forward),
        field_norm(grid, norm, &adjoint),
    ))
}

struct State {
    u: Field,
    phi: Field,
    phi_prev: Field,
    lambda: Vec<f64>,
    lambda_prev: Vec<f64>,
}

struct Workspace {
    phi_tilde: Field,
    lambda_tilde: Vec<f64>,
    adjoint: Field,
    forward: Field,
    initial_grad: Vec<f64>,
}

impl Workspace {
    fn new(layout: Layout, n_x: usize, n_t: usize) -> Self {
        let n_dof = n_x * layout.dof_per_cell();
        Self {
            phi_tilde: Field::zeros(layout, n_x, n_t),
            lambda_tilde: vec![0.0; n_dof],
            adjoint: Field::zeros(layout, n_x, n_t),
            forward: Field::zeros(layout, n_x, n_t),
            initial_grad: vec![0.0; n_dof],
        }
    }
}

/// One full primal-dual sweep; returns the residual pair of the new state.
fn iterate_once(
    problem: &SaddlePointProblem,
    config: &PdhgConfig,
    state: &mut State,
    ws: &mut Workspace,
) -> (f64, f64) {
    let (scheme, grid) = (problem.scheme, problem.grid);
    let n_t = grid.n_t();

    // extrapolate the duals
    for ((t, &cur), &old) in ws
        .phi_tilde
        .values_mut()
        .iter_mut()
        .zip(state.phi.values())
        .zip(state.phi_prev.values())
    {
        *t = 2.0 * cur - old;
    }
    for ((t, &cur), &old) in ws
        .lambda_tilde
        .iter_mut()
        .zip(&state.lambda)
        .zip(&state.lambda_prev)
    {
        *t = 2.0 * cur - old;
    }

    // primal descent: interior slices take the adjoint of the extrapolated
    // multiplier, the initial slice its own gradient
    apply_adjoint_into(scheme, grid, &ws.phi_tilde, &state.u, &mut ws.adjoint);
    for l in 1..=n_t {
        let row = ws.adjoint.slice(l - 1);
        let target = state.u.slice_mut(l);
        for i in 0..row.len() {
            target[i] += config.tau_u * row[i];
        }
    }
    initial_gradient(scheme, &ws.phi_tilde, &ws.lambda_tilde, &mut ws.initial_grad);
    let tau_u0 = config.tau_u0();
    {
        let first = state.u.slice_mut(0);
        for i in 0..first.len() {
            first[i] -= tau_u0 * ws.initial_grad[i];
        }
    }

    // dual ascent, preconditioned for phi
    apply_forward_into(scheme, grid, &state.u, &mut ws.forward);
    state.phi_prev.values_mut().copy_from_slice(state.phi.values());
    let step = problem
        .k_op
        .solve(&ws.forward)
        .expect("preconditioner shape was validated at solve start");
    for (p, z) in state.phi.values_mut().iter_mut().zip(step.values()) {
        *p -= config.tau_phi * z;
    }
    state.lambda_prev.copy_from_slice(&state.lambda);
    for (j, lam) in state.lambda.iter_mut().enumerate() {
        *lam -= config.tau_lambda * (state.u.slice(0)[j] - problem.initial_data[j]);
    }

    // residuals of the new state; the primal one reuses A(u_new)
    let res_primal = field_norm(grid, config.residual_norm, &ws.forward);
    apply_adjoint_into(scheme, grid, &state.phi, &state.u, &mut ws.adjoint);
    let res_dual = field_norm(grid, config.residual_norm, &ws.adjoint);
    (res_primal, res_dual)
}

fn scan_divergence(state: &State, residuals: (f64, f64), iteration: usize) -> Result<(), SolveError> {
    if let Some(index) = state.u.first_non_finite() {
        return Err(SolveError::Divergence {
            iteration,
            field: "u",
            index,
        });
    }
    if let Some(index) = state.phi.first_non_finite() {
        return Err(SolveError::Divergence {
            iteration,
            field: "phi",
            index,
        });
    }
    if let Some(index) = state.lambda.iter().position(|v| !v.is_finite()) {
        return Err(SolveError::Divergence {
            iteration,
            field: "lambda",
            index,
        });
    }
    if !residuals.0.is_finite() || !residuals.1.is_finite() {
        return Err(SolveError::Divergence {
            iteration,
            field: "residual",
            index: 0,
        });
    }
    Ok(())
}

/// Runs the preconditioned primal-dual iteration to tolerance or cap.
pub fn solve(
    problem: &SaddlePointProblem,
    config: &PdhgConfig,
    warm: Option<WarmStart>,
) -> Result<Solution, SolveError> {
    solve_with_probe(problem, config, warm, None)
}

/// [`solve`] with a per-iteration observer called as
/// `probe(iteration, current_u, (res_primal, res_dual))`, including the
/// starting state at iteration 0.
pub fn solve_with_probe(
    problem: &SaddlePointProblem,
    config: &PdhgConfig,
    warm: Option<WarmStart>,
    mut probe: Option<&mut dyn FnMut(usize, &Field, (f64, f64))>,
) -> Result<Solution, SolveError> {
    let (scheme, grid) = (problem.scheme, problem.grid);
    scheme.validate_grid(grid)?;
    let layout = scheme.layout();
    let n_t = grid.n_t();
    let n_dof = grid.n_x() * layout.dof_per_cell();
    assert_eq!(problem.initial_data.len(), n_dof, "initial data length");
    assert_eq!(problem.k_op.layout(), layout, "preconditioner layout");
    assert_eq!(problem.k_op.slice_count(), n_t, "preconditioner slice count");

    if config.enforce_bound {
        let bound = estimate_spectral_bound(scheme, grid, problem.k_op, 0)?;
        let product = config.tau_u * config.tau_phi * bound;
        if product >= 1.0 {
            return Err(SolveError::StepSizeBound { product });
        }
    }

    let mut state = match warm {
        Some(w) => {
            assert_eq!(w.u.n_slices(), n_t + 1, "warm start u slice count");
            assert_eq!(w.phi.n_slices(), n_t, "warm start phi slice count");
            assert_eq!(w.lambda.len(), n_dof, "warm start lambda length");
            State {
                phi_prev: w.phi.clone(),
                lambda_prev: w.lambda.clone(),
                u: w.u,
                phi: w.phi,
                lambda: w.lambda,
            }
        }
        None => {
            let u = Field::from_constant_extension(layout, grid.n_x(), n_t + 1, problem.initial_data);
            let phi = Field::zeros(layout, grid.n_x(), n_t);
            let lambda = vec![0.0; n_dof];
            State {
                phi_prev: phi.clone(),
                lambda_prev: lambda.clone(),
                u,
                phi,
                lambda,
            }
        }
    };

    let mut ws = Workspace::new(layout, grid.n_x(), n_t);
    let initial =
        residual_pair(scheme, grid, config.residual_norm, &state.u, &state.phi)?;
    let mut history = Vec::with_capacity(config.max_iters.min(4096) + 1);
    history.push(initial);
    if let Some(p) = probe.as_deref_mut() {
        p(0, &state.u, initial);
    }

    let mut converged = false;
    let mut iterations = 0;
    for n in 1..=config.max_iters {
        let residuals = iterate_once(problem, config, &mut state, &mut ws);
        scan_divergence(&state, residuals, n)?;
        history.push(residuals);
        if let Some(p) = probe.as_deref_mut() {
            p(n, &state.u, residuals);
        }
        iterations = n;
        if residuals.0 <= config.eps && residuals.1 <= config.eps {
            converged = true;
            break;
        }
    }

    Ok(Solution {
        stats: vec![SolveStats {
            n_t,
            n_x: grid.n_x(),
            iterations,
        }],
        u: state.u,
        phi: state.phi,
        lambda: state.lambda,
        iterations,
        converged,
        residual_history: history,
    })
}

/// `A^T K^{-1} A` restricted to the interior unknowns (`u^0 = 0`); this is
/// the operator whose spectrum governs the iteration.
pub(crate) fn apply_normal_operator(
    scheme: &SchemeConfig,
    grid: &SpaceTimeGrid,
    k_op: &KOperator,
    interior: &Field,
) -> Field {
    let n_t = grid.n_t();
    debug_assert_eq!(interior.n_slices(), n_t);
    let mut padded = Field::zeros(interior.layout(), interior.n_x(), n_t + 1);
    for l in 0..n_t {
        padded
            .slice_mut(l + 1)
            .copy_from_slice(interior.slice(l));
    }
    let mut forward = Field::zeros(interior.layout(), interior.n_x(), n_t);
    apply_forward_into(scheme, grid, &padded, &mut forward);
    let z = k_op
        .solve(&forward)
        .expect("normal operator uses the operator's own slice count");
    let mut out = Field::zeros(interior.layout(), interior.n_x(), n_t);
    apply_adjoint_into(scheme, grid, &z, &padded, &mut out);
    out
}

/// Largest eigenvalue `nu_max` of `A^T K^{-1} A` by power iteration in the
/// weighted metric (linear laws only; the operator is symmetric positive
/// semidefinite there).
pub fn estimate_spectral_bound(
    scheme: &SchemeConfig,
    grid: &SpaceTimeGrid,
    k_op: &KOperator,
    seed: u64,
) -> Result<f64, SolveError> {
    if !scheme.is_linear() {
        return Err(SolveError::SpectralBoundNeedsLinearFlux);
    }
    scheme.validate_grid(grid)?;
    let layout = scheme.layout();
    let n_t = grid.n_t();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Field::zeros(layout, grid.n_x(), n_t);
    for x in v.values_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }
    let norm0 = crate::grid::weighted_norm(grid, &v);
    if norm0 == 0.0 {
        return Err(SolveError::PowerIterationStalled);
    }
    for x in v.values_mut() {
        *x /= norm0;
    }

    // The Rayleigh quotient converges twice as fast as the iterate and keeps
    // improving even when trailing eigenvalues cluster (where the iterate
    // itself, and hence any eigenvector-defect test, stagnates), so the stop
    // is quotient stagnation over a few consecutive steps.
    let mut previous = f64::NAN;
    let mut stable_steps = 0usize;
    for _ in 0..100_000 {
        let image = apply_normal_operator(scheme, grid, k_op, &v);
        let vv = crate::grid::inner_product(grid, &v, &v);
        let rayleigh = crate::grid::inner_product(grid, &v, &image) / vv;
        if (rayleigh - previous).abs() <= 1e-12 * rayleigh.abs().max(1e-300) {
            stable_steps += 1;
            if stable_steps >= 4 {
                return Ok(rayleigh);
            }
        } else {
            stable_steps = 0;
        }
        previous = rayleigh;
        let image_norm = crate::grid::weighted_norm(grid, &image);
        if image_norm == 0.0 {
            return Ok(0.0);
        }
        for (x, y) in v.values_mut().iter_mut().zip(image.values()) {
            *x = y / image_norm;
        }
    }
    Err(SolveError::PowerIterationStalled)
}

/// Contraction modulus of one scalar mode: `sqrt(max(0, 1 - s))` with
/// `s = tau_u tau_phi nu`, clamped to `[0, 1]`.
pub(crate) fn contraction_modulus(step_product: f64, nu: f64) -> f64 {
    (1.0 - step_product * nu).clamp(0.0, 1.0).sqrt()
}

/// Compares the predicted linear-theory contraction factor with the rate
/// observed over the tail half of a run's residual history.
///
/// The prediction keys on the *slowest relevant* mode: eigenmodes of
/// `A^T K^{-1} A` that actually appear in the starting error (projection at
/// least `1e-6` of the error norm).  Pass `u_star` (the converged trajectory) to identify the
/// starting error of a cold start; without it every non-negligible mode
/// counts.
pub fn contraction_report(
    problem: &SaddlePointProblem,
    config: &PdhgConfig,
    run: &Solution,
    u_star: Option<&Field>,
) -> Result<ContractionReport, SolveError> {
    const NEEDED: usize = 20;
    if run.residual_history.len() < NEEDED {
        return Err(SolveError::InsufficientHistory {
            needed: NEEDED,
            got: run.residual_history.len(),
        });
    }
    let spectral_bound = estimate_spectral_bound(problem.scheme, problem.grid, problem.k_op, 7)?;

    let (scheme, grid) = (problem.scheme, problem.grid);
    let layout = scheme.layout();
    let n_t = grid.n_t();
    let n_dof = grid.n_x() * layout.dof_per_cell();
    let total = n_t * n_dof;
    // dense normal operator by probing coordinate fields
    let mut dense = nalgebra::DMatrix::zeros(total, total);
    let mut probe = Field::zeros(layout, grid.n_x(), n_t);
    for col in 0..total {
        probe.values_mut().fill(0.0);
        probe.values_mut()[col] = 1.0;
        let image = apply_normal_operator(scheme, grid, problem.k_op, &probe);
        for row in 0..total {
            dense[(row, col)] = image.values()[row];
        }
    }
    let eigen = dense.symmetric_eigen();

    // starting interior error of a cold start
    let error0: Option<nalgebra::DVector<f64>> = u_star.map(|star| {
        let mut e = nalgebra::DVector::zeros(total);
        for l in 0..n_t {
            let star_slice = star.slice(l + 1);
            for i in 0..n_dof {
                e[l * n_dof + i] = problem.initial_data[i] - star_slice[i];
            }
        }
        e
    });
    let error_norm = error0.as_ref().map(|e| e.norm()).unwrap_or(0.0);

    let mut nu_rel_min = f64::INFINITY;
    for idx in 0..total {
        let nu = eigen.eigenvalues[idx];
        if nu <= 1e-10 * spectral_bound {
            continue;
        }
        if let Some(e) = &error0 {
            let projection = eigen.eigenvectors.column(idx).dot(e);
            if projection.abs() < 1e-6 * error_norm {
                continue;
            }
        }
        nu_rel_min = nu_rel_min.min(nu);
    }
    if !nu_rel_min.is_finite() {
        nu_rel_min = spectral_bound;
    }
    let predicted_factor = contraction_modulus(config.tau_u * config.tau_phi, nu_rel_min);

    // observed geometric rate over the tail half of the combined residuals
    let combined: Vec<f64> = run
        .residual_history
        .iter()
        .map(|&(p, d)| p.hypot(d))
        .collect();
    let start = combined.len() / 2;
    let span = combined.len() - 1 - start;
    let first = combined[start];
    let last = combined[combined.len() - 1];
    let observed_factor = if span == 0 || first <= 0.0 {
        0.0
    } else {
        (last / first).powf(1.0 / span as f64)
    };

    Ok(ContractionReport {
        spectral_bound,
        predicted_factor,
        observed_factor,
    })
}
