//! Independent reference solvers used to validate the saddle-point route.
//!
//! Everything here assembles its own discrete operators from the problem
//! definition — the finite-difference stencil from the flux form of the
//! diffusion term, the DG blocks from numerical Galerkin quadrature on the
//! reference cell — and never calls the stencil routines in
//! [`crate::operators`].  Agreement between the two routes is therefore a
//! genuine cross-check, exercised by the integration tests:
//!
//! * [`direct_implicit_solve`] — dense LU time stepping of the implicit
//!   scheme (linear operators only);
//! * [`explicit_reference`] — forward-Euler sub-stepping of the
//!   semi-discrete system under a conservative CFL bound, usable for the
//!   nonlinear flux as well;
//! * [`adjoint_check`] — randomized verification that the forward/adjoint
//!   operator pair satisfies its summation-by-parts identity.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{OracleError, SchemeError};
use crate::grid::{Field, SpaceTimeGrid};
use crate::operators::{FluxKind, SchemeConfig, TimeScheme};
use crate::problems::ProblemSpec;

/// Trajectory of the explicit reference run plus its sub-step bookkeeping.
#[derive(Debug, Clone)]
pub struct ExplicitRun {
    pub trajectory: Field,
    pub substeps_per_step: usize,
    pub dt: f64,
}

// reference cell [-1/2, 1/2], nodal basis at the quarter points:
//   l1(xi) = 1/2 - 2 xi ,   l2(xi) = 1/2 + 2 xi
fn basis(xi: f64) -> Vector2<f64> {
    Vector2::new(0.5 - 2.0 * xi, 0.5 + 2.0 * xi)
}

const BASIS_DERIVATIVE: [f64; 2] = [-2.0, 2.0];
// two-point Gauss rule on [-1/2, 1/2] (exact through cubic integrands)
const GAUSS_NODE: f64 = 0.288_675_134_594_812_9;
const GAUSS: [(f64, f64); 2] = [(-GAUSS_NODE, 0.5), (GAUSS_NODE, 0.5)];

/// Reference mass matrix by quadrature.
fn reference_mass() -> Matrix2<f64> {
    let mut mass = Matrix2::zeros();
    for (xi, w) in GAUSS {
        let b = basis(xi);
        mass += w * b * b.transpose();
    }
    mass
}

/// Galerkin blocks of the linear upwind DG operator: the own-cell block and
/// the inflow-neighbor block, both scaled by `advection / h`.
fn galerkin_linear_blocks(advection: f64, h: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let mass_inv = reference_mass()
        .try_inverse()
        .expect("reference mass matrix is SPD");
    let mut stiff = Matrix2::zeros();
    for (xi, w) in GAUSS {
        let b = basis(xi);
        for i in 0..2 {
            for k in 0..2 {
                stiff[(i, k)] += w * BASIS_DERIVATIVE[i] * b[k];
            }
        }
    }
    let outflow = basis(0.5);
    let inflow_trace = basis(-0.5);
    let own = mass_inv * (stiff - outflow * outflow.transpose()) * (advection / h);
    let neighbor = mass_inv * (inflow_trace * outflow.transpose()) * (advection / h);
    (own, neighbor)
}

/// Monotonicity shift recomputed from the problem definition (same rule,
/// separate implementation).
fn own_shift(flux: FluxKind, samples: &[f64]) -> f64 {
    let mut low = f64::INFINITY;
    for &u in samples {
        low = low.min(flux.derivative(u));
    }
    if low.is_finite() && low < 0.0 {
        -1.1 * low
    } else {
        0.0
    }
}

/// Effective flux after the monotonicity shift, from the spec's own data.
fn effective_flux(spec: &ProblemSpec, grid: &SpaceTimeGrid) -> Option<FluxKind> {
    let flux = spec.flux()?;
    let shift = own_shift(flux, &spec.initial_slice(grid));
    Some(match flux {
        FluxKind::Linear { advection } => FluxKind::Linear {
            advection: advection + shift,
        },
        FluxKind::Quadratic { quadratic, linear } => FluxKind::Quadratic {
            quadratic,
            linear: linear + shift,
        },
    })
}

/// Dense semi-discrete operator `S` with `du/dt = S u`, assembled from the
/// problem definition alone.  `None` for nonlinear fluxes.
fn dense_semi_discrete(spec: &ProblemSpec, grid: &SpaceTimeGrid) -> Option<DMatrix<f64>> {
    let n_x = grid.n_x();
    let h = grid.h_x();
    match spec.flux() {
        None => {
            // conservative flux-form diffusion stencil, own sampling
            let gamma: Vec<f64> = (0..n_x)
                .map(|j| {
                    spec.viscosity_at(grid.x_half(j))
                        .expect("diffusion problems define a coefficient")
                })
                .collect();
            let mut s = DMatrix::zeros(n_x, n_x);
            for j in 0..n_x {
                let left = (j + n_x - 1) % n_x;
                let right = (j + 1) % n_x;
                s[(j, right)] += gamma[j] / (h * h);
                s[(j, j)] -= (gamma[j] + gamma[left]) / (h * h);
                s[(j, left)] += gamma[left] / (h * h);
            }
            Some(s)
        }
        Some(_) => {
            let advection = match effective_flux(spec, grid)? {
                FluxKind::Linear { advection } => advection,
                FluxKind::Quadratic { .. } => return None,
            };
            let (own, neighbor) = galerkin_linear_blocks(advection, h);
            let n = 2 * n_x;
            let mut s = DMatrix::zeros(n, n);
            for j in 0..n_x {
                let jl = (j + n_x - 1) % n_x;
                for i in 0..2 {
                    for k in 0..2 {
                        s[(2 * j + i, 2 * j + k)] += own[(i, k)];
                        s[(2 * j + i, 2 * jl + k)] += neighbor[(i, k)];
                    }
                }
            }
            Some(s)
        }
    }
}

/// Solves the implicit scheme exactly by dense LU, one factorization per
/// distinct step matrix.  Linear operators only.
pub fn direct_implicit_solve(
    spec: &ProblemSpec,
    time: TimeScheme,
    grid: &SpaceTimeGrid,
) -> Result<Field, OracleError> {
    let layout = spec.layout();
    let n_dof = grid.n_x() * layout.dof_per_cell();
    if n_dof > 10_000 {
        return Err(OracleError::SizeGuardExceeded { unknowns: n_dof });
    }
    if time == TimeScheme::Bdf2 && grid.n_t() < 2 {
        return Err(SchemeError::TwoStepNeedsHistory { n_t: grid.n_t() }.into());
    }
    let semi = dense_semi_discrete(spec, grid).ok_or(OracleError::NeedsLinearOperator)?;
    let h_t = grid.h_t();
    let n_t = grid.n_t();

    let identity = DMatrix::identity(n_dof, n_dof);
    let euler_lu = (&identity / h_t - &semi).lu();
    let two_step_lu = match time {
        TimeScheme::BackwardEuler => None,
        TimeScheme::Bdf2 => Some((&identity * (1.5 / h_t) - &semi).lu()),
    };

    let mut out = Field::zeros(layout, grid.n_x(), n_t + 1);
    out.slice_mut(0).copy_from_slice(&spec.initial_slice(grid));
    for l in 0..n_t {
        let rhs = match (&two_step_lu, l) {
            (None, _) | (Some(_), 0) => DVector::from_column_slice(out.slice(l)) / h_t,
            (Some(_), _) => {
                let prev = DVector::from_column_slice(out.slice(l));
                let older = DVector::from_column_slice(out.slice(l - 1));
                prev * (2.0 / h_t) - older * (0.5 / h_t)
            }
        };
        let lu = match (&two_step_lu, l) {
            (Some(lu), l) if l > 0 => lu,
            _ => &euler_lu,
        };
        let next = lu.solve(&rhs).ok_or(OracleError::SingularStepMatrix)?;
        out.slice_mut(l + 1).copy_from_slice(next.as_slice());
    }
    Ok(out)
}

/// Nonlinear semi-discrete DG right-hand side by quadrature (used by the
/// explicit reference when the flux is quadratic).
fn dg_rhs_by_quadrature(flux: FluxKind, h: f64, state: &[f64], out: &mut [f64]) {
    let cells = state.len() / 2;
    let mass_inv = reference_mass()
        .try_inverse()
        .expect("reference mass matrix is SPD");
    let outflow = basis(0.5);
    let inflow_trace = basis(-0.5);
    for j in 0..cells {
        let jl = (j + cells - 1) % cells;
        let own = Vector2::new(state[2 * j], state[2 * j + 1]);
        let upstream = Vector2::new(state[2 * jl], state[2 * jl + 1]);
        let mut weak = Vector2::zeros();
        for (xi, w) in GAUSS {
            let b = basis(xi);
            let value = flux.value(b.dot(&own));
            weak[0] += w * value * BASIS_DERIVATIVE[0];
            weak[1] += w * value * BASIS_DERIVATIVE[1];
        }
        let upwind_out = flux.value(outflow.dot(&own));
        let upwind_in = flux.value(outflow.dot(&upstream));
        let rhs = mass_inv * (weak - outflow * upwind_out + inflow_trace * upwind_in) / h;
        out[2 * j] = rhs[0];
        out[2 * j + 1] = rhs[1];
    }
}

fn semi_discrete_rhs(
    h_x: f64,
    flux: Option<FluxKind>,
    linear: Option<&DMatrix<f64>>,
    state: &[f64],
    out: &mut [f64],
) {
    match (flux, linear) {
        (_, Some(matrix)) => {
            let v = DVector::from_column_slice(state);
            let image = matrix * v;
            out.copy_from_slice(image.as_slice());
        }
        (Some(f), None) => dg_rhs_by_quadrature(f, h_x, state, out),
        (None, None) => unreachable!("diffusion problems always assemble a matrix"),
    }
}

/// Forward-Euler sub-stepped reference trajectory sampled at the grid's
/// time nodes.  `refine` multiplies the sub-step count (for order checks).
pub fn explicit_reference(
    spec: &ProblemSpec,
    grid: &SpaceTimeGrid,
    refine: usize,
) -> Result<ExplicitRun, OracleError> {
    let layout = spec.layout();
    let h = grid.h_x();
    let initial = spec.initial_slice(grid);

    // conservative stability bound for the sub-step
    let dt_bound = match spec.flux() {
        None => {
            let max_gamma = (0..grid.n_x())
                .map(|j| spec.viscosity_at(grid.x_half(j)).unwrap_or(0.0))
                .fold(0.0, f64::max);
            0.5 * h * h / (2.0 * max_gamma)
        }
        Some(_) => {
            let flux = effective_flux(spec, grid).expect("flux checked above");
            let max_speed = initial
                .iter()
                .map(|&u| flux.derivative(u).abs())
                .fold(0.0, f64::max);
            if max_speed == 0.0 {
                f64::INFINITY
            } else {
                0.9 * h / (3.0 * max_speed)
            }
        }
    };
    if !(dt_bound > 0.0) {
        return Err(OracleError::StabilityBound {
            dt: grid.h_t(),
            bound: dt_bound,
        });
    }
    let base = (grid.h_t() / dt_bound).ceil().max(1.0) as usize;
    let substeps = base * refine.max(1);
    if substeps.saturating_mul(grid.n_t()) > 50_000_000 {
        return Err(OracleError::StabilityBound {
            dt: grid.h_t() / substeps as f64,
            bound: dt_bound,
        });
    }
    let dt = grid.h_t() / substeps as f64;

    let linear = match spec.flux() {
        Some(FluxKind::Quadratic { .. }) => None,
        _ => dense_semi_discrete(spec, grid),
    };
    let flux = effective_flux(spec, grid);

    let mut out = Field::zeros(layout, grid.n_x(), grid.n_t() + 1);
    out.slice_mut(0).copy_from_slice(&initial);
    let mut state = initial;
    let mut rate = vec![0.0; state.len()];
    for l in 0..grid.n_t() {
        for _ in 0..substeps {
            semi_discrete_rhs(grid.h_x(), flux, linear.as_ref(), &state, &mut rate);
            for (u, r) in state.iter_mut().zip(&rate) {
                *u += dt * r;
            }
        }
        out.slice_mut(l + 1).copy_from_slice(&state);
    }
    Ok(ExplicitRun {
        trajectory: out,
        substeps_per_step: substeps,
        dt,
    })
}

/// Randomized adjoint verification: the largest relative defect of the
/// Jacobian/adjoint identity over ten seeded random states and directions.
///
/// The forward map is at most quadratic in the state, so the centered
/// difference `[A(u+v) - A(u-v)] / 2` equals its directional derivative at
/// `u` exactly (no truncation term), and the identity
/// `<dA, phi>_w = <v, grad_A(u)^T phi>_w + boundary(v, phi)` must hold to
/// rounding.  For one-step schemes the boundary term is
/// `sum_dofs dx (phi^N v^N - phi^0 v^0)` with a stored terminal multiplier
/// slice; the two-step scheme uses the interior identity (zero initial
/// direction slice, no stored terminal slice) instead.  Linear fluxes are
/// the special case where the derivative is state-independent.
pub fn adjoint_check(scheme: &SchemeConfig, grid: &SpaceTimeGrid, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let layout = scheme.layout();
    let n_t = grid.n_t();
    let n_dof = grid.n_x() * layout.dof_per_cell();
    let dx = layout.dof_spacing(grid.h_x());
    let weight = grid.h_t() * dx;

    let mut fill = |field: &mut Field| {
        for v in field.values_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    };

    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut base = Field::zeros(layout, grid.n_x(), n_t + 1);
        fill(&mut base);
        let mut direction = Field::zeros(layout, grid.n_x(), n_t + 1);
        fill(&mut direction);
        let boundary_form = scheme.time() == TimeScheme::BackwardEuler;
        let phi_slices = if boundary_form { n_t + 1 } else { n_t };
        if !boundary_form {
            direction.slice_mut(0).iter_mut().for_each(|v| *v = 0.0);
        }
        let mut phi = Field::zeros(layout, grid.n_x(), phi_slices);
        fill(&mut phi);

        let mut plus = base.clone();
        for (p, d) in plus.values_mut().iter_mut().zip(direction.values()) {
            *p += d;
        }
        let mut minus = base.clone();
        for (m, d) in minus.values_mut().iter_mut().zip(direction.values()) {
            *m -= d;
        }
        let fwd_plus = crate::operators::apply_forward(scheme, grid, &plus).expect("valid shapes");
        let fwd_minus =
            crate::operators::apply_forward(scheme, grid, &minus).expect("valid shapes");
        let adjoint =
            crate::operators::apply_adjoint(scheme, grid, &phi, &base).expect("valid shapes");

        let mut lhs = 0.0;
        for m in 0..n_t {
            for i in 0..n_dof {
                let derivative = 0.5 * (fwd_plus.slice(m)[i] - fwd_minus.slice(m)[i]);
                lhs += weight * derivative * phi.slice(m)[i];
            }
        }
        let mut rhs = 0.0;
        for r in 0..n_t {
            for i in 0..n_dof {
                rhs += weight * direction.slice(r + 1)[i] * adjoint.slice(r)[i];
            }
        }
        let mut boundary = 0.0;
        if boundary_form {
            for i in 0..n_dof {
                boundary += dx
                    * (phi.slice(n_t)[i] * direction.slice(n_t)[i]
                        - phi.slice(0)[i] * direction.slice(0)[i]);
            }
        }
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        worst = worst.max(((lhs - rhs) - boundary).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{apply_forward, dg_linear_rhs, variable_laplacian};
    use crate::problems::{heat_problem, traffic_problem, transport_problem, TransportInit};
    use approx::assert_relative_eq;

    #[test]
    fn galerkin_blocks_match_the_production_stencil_by_probing() {
        let (own, neighbor) = galerkin_linear_blocks(1.3, 0.25);
        // probe the production routine on a 3-cell grid with unit vectors
        for dof in 0..2 {
            let mut state = vec![0.0; 6];
            state[2 + dof] = 1.0; // cell 1, dof `dof`
            let mut image = vec![0.0; 6];
            dg_linear_rhs(&state, 1.3, 0.25, &mut image);
            for i in 0..2 {
                assert_relative_eq!(image[2 + i], own[(i, dof)], epsilon = 1e-12);
                assert_relative_eq!(image[4 + i], neighbor[(i, dof)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn diffusion_assembly_matches_the_production_stencil_by_probing() {
        let spec = heat_problem();
        let grid = spec.grid(8, 2).unwrap();
        let dense = dense_semi_discrete(&spec, &grid).unwrap();
        let gamma: Vec<f64> = (0..8).map(|j| spec.viscosity_at(grid.x_half(j)).unwrap()).collect();
        for col in 0..8 {
            let mut state = vec![0.0; 8];
            state[col] = 1.0;
            let mut image = vec![0.0; 8];
            variable_laplacian(&state, &gamma, grid.h_x(), &mut image);
            for row in 0..8 {
                assert_relative_eq!(dense[(row, col)], image[row], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn direct_solutions_satisfy_the_forward_operator() {
        let cases: Vec<(ProblemSpec, TimeScheme, usize, usize)> = vec![
            (heat_problem(), TimeScheme::BackwardEuler, 8, 8),
            (heat_problem(), TimeScheme::Bdf2, 8, 6),
            (
                transport_problem(TransportInit::Smooth),
                TimeScheme::BackwardEuler,
                8,
                4,
            ),
            (transport_problem(TransportInit::Smooth), TimeScheme::Bdf2, 6, 5),
        ];
        for (spec, time, n_x, n_t) in cases {
            let grid = spec.grid(n_x, n_t).unwrap();
            let trajectory = direct_implicit_solve(&spec, time, &grid).unwrap();
            let scheme = spec.scheme_for_grid(time, &grid).unwrap();
            let residual = apply_forward(&scheme, &grid, &trajectory).unwrap();
            let scale = trajectory.max_abs().max(1.0) / grid.h_t();
            assert!(
                residual.max_abs() <= 1e-11 * scale,
                "{} {:?}: residual {} vs scale {}",
                spec.name(),
                time,
                residual.max_abs(),
                scale
            );
        }
    }

    #[test]
    fn direct_solve_rejects_nonlinear_fluxes() {
        let spec = traffic_problem();
        let grid = spec.grid(8, 4).unwrap();
        assert_eq!(
            direct_implicit_solve(&spec, TimeScheme::BackwardEuler, &grid).unwrap_err(),
            OracleError::NeedsLinearOperator
        );
    }

    #[test]
    fn direct_solve_guards_its_size() {
        let spec = heat_problem();
        let grid = spec.grid(20_000, 2).unwrap();
        assert_eq!(
            direct_implicit_solve(&spec, TimeScheme::BackwardEuler, &grid).unwrap_err(),
            OracleError::SizeGuardExceeded { unknowns: 20_000 }
        );
    }

    #[test]
    fn explicit_reference_converges_at_first_order() {
        let spec = heat_problem();
        let grid = spec.grid(8, 2).unwrap();
        let runs: Vec<Field> = [1, 2, 4]
            .iter()
            .map(|&r| explicit_reference(&spec, &grid, r).unwrap().trajectory)
            .collect();
        // successive differences of a first-order method shrink by 2
        let diff = |a: &Field, b: &Field| -> f64 {
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let d1 = diff(&runs[0], &runs[1]);
        let d2 = diff(&runs[1], &runs[2]);
        let order = (d1 / d2).log2();
        assert!(
            (0.9..=1.1).contains(&order),
            "observed order {order} (d1 = {d1}, d2 = {d2})"
        );
    }

    #[test]
    fn explicit_and_direct_routes_agree_as_the_step_shrinks() {
        // both approximate the same semi-discrete flow to first order in
        // time with opposite-signed error constants, so the gap between the
        // routes must shrink by ~2 per time-step halving and be small once
        // h_t resolves the solution's curvature
        let spec = transport_problem(TransportInit::Smooth);
        let gap_at = |n_t: usize| -> f64 {
            let grid = spec.grid(8, n_t).unwrap();
            let direct =
                direct_implicit_solve(&spec, TimeScheme::BackwardEuler, &grid).unwrap();
            let explicit = explicit_reference(&spec, &grid, 4).unwrap().trajectory;
            direct
                .values()
                .iter()
                .zip(explicit.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let coarse = gap_at(128);
        let fine = gap_at(256);
        let ratio = coarse / fine;
        assert!(
            (1.6..=2.4).contains(&ratio),
            "gap ratio {ratio} (coarse {coarse}, fine {fine})"
        );
        assert!(fine < 0.15, "routes drifted apart by {fine}");
    }

    #[test]
    fn adjoint_check_is_tight_for_every_scheme_family() {
        let heat = heat_problem();
        let heat_grid = heat.grid(6, 5).unwrap();
        for time in [TimeScheme::BackwardEuler, TimeScheme::Bdf2] {
            let scheme = heat.scheme_for_grid(time, &heat_grid).unwrap();
            let defect = adjoint_check(&scheme, &heat_grid, 11);
            assert!(defect <= 1e-12, "heat {time:?}: {defect}");
        }
        let transport = transport_problem(TransportInit::Smooth);
        let tgrid = transport.grid(5, 4).unwrap();
        for time in [TimeScheme::BackwardEuler, TimeScheme::Bdf2] {
            let scheme = transport.scheme_for_grid(time, &tgrid).unwrap();
            let defect = adjoint_check(&scheme, &tgrid, 12);
            assert!(defect <= 1e-12, "transport {time:?}: {defect}");
        }
        let traffic = traffic_problem();
        let rgrid = traffic.grid(5, 4).unwrap();
        let scheme = traffic.scheme_for_grid(TimeScheme::BackwardEuler, &rgrid).unwrap();
        let defect = adjoint_check(&scheme, &rgrid, 13);
        assert!(defect <= 1e-11, "traffic: {defect}");
    }

    #[test]
    fn quadrature_rhs_matches_the_production_quadratic_stencil() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let flux = FluxKind::Quadratic {
            quadratic: -1.0,
            linear: 1.0,
        };
        let h = 0.25;
        for _ in 0..10 {
            let state: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut by_quadrature = vec![0.0; 10];
            dg_rhs_by_quadrature(flux, h, &state, &mut by_quadrature);
            let mut by_stencil = vec![0.0; 10];
            crate::operators::dg_quadratic_rhs(&state, -1.0, 1.0, h, &mut by_stencil);
            for (a, b) in by_quadrature.iter().zip(&by_stencil) {
                assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-11);
            }
        }
    }
}
