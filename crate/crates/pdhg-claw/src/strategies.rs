//! Solution strategies built on top of the core saddle-point solver:
//! nested mesh refinement in time, per-step marching, and the cost
//! accounting used to compare them.

use std::fmt;

use crate::error::{SolveError, StrategyError};
use crate::grid::{Field, SpaceTimeGrid};
use crate::operators::{SchemeConfig, SpaceDiscretization, TimeScheme};
use crate::pdhg::{self, PdhgConfig, ResidualNorm, SaddlePointProblem, Solution, SolveStats, WarmStart};
use crate::precond::{KKind, KOperator};

/// Ladder of time meshes `2^coarsest .. 2^finest` steps, each non-final
/// level capped at `level_cap` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefinementPlan {
    pub coarsest_exponent: u32,
    pub finest_exponent: u32,
    pub level_cap: usize,
}

impl RefinementPlan {
    pub fn new(coarsest_exponent: u32, finest_exponent: u32) -> Self {
        Self {
            coarsest_exponent,
            finest_exponent,
            level_cap: 1000,
        }
    }

    pub fn with_level_cap(mut self, level_cap: usize) -> Self {
        self.level_cap = level_cap;
        self
    }
}

/// Transfers a converged coarse-in-time state to a grid with twice the
/// time steps: nodes are kept, midpoints averaged.  The multiplier field
/// has one slice per equation, so its last midpoint averages against the
/// implicit zero beyond the final slice; the initial-data multiplier is
/// mesh-independent and carried over unchanged.
pub fn refine_in_time(
    coarse: &SpaceTimeGrid,
    fine: &SpaceTimeGrid,
    solution: &Solution,
) -> Result<WarmStart, StrategyError> {
    if fine.n_t() != 2 * coarse.n_t() {
        return Err(StrategyError::GridMismatch {
            coarse: coarse.n_t(),
            fine: fine.n_t(),
        });
    }
    let n_t = coarse.n_t();
    let layout = solution.u.layout();
    let n_x = solution.u.n_x();
    let n_dof = solution.u.slice(0).len();
    assert_eq!(solution.u.n_slices(), n_t + 1, "state slice count");
    assert_eq!(solution.phi.n_slices(), n_t, "multiplier slice count");

    let mut u = Field::zeros(layout, n_x, 2 * n_t + 1);
    for l in 0..=n_t {
        u.slice_mut(2 * l).copy_from_slice(solution.u.slice(l));
        if l < n_t {
            let (a, b) = (solution.u.slice(l), solution.u.slice(l + 1));
            for (i, v) in u.slice_mut(2 * l + 1).iter_mut().enumerate() {
                *v = 0.5 * (a[i] + b[i]);
            }
        }
    }

    let mut phi = Field::zeros(layout, n_x, 2 * n_t);
    for m in 0..n_t {
        phi.slice_mut(2 * m).copy_from_slice(solution.phi.slice(m));
        let current = solution.phi.slice(m);
        let next = (m + 1 < n_t).then(|| solution.phi.slice(m + 1));
        for (i, v) in phi.slice_mut(2 * m + 1).iter_mut().enumerate() {
            *v = 0.5 * (current[i] + next.map_or(0.0, |s| s[i]));
        }
    }

    let mut lambda = vec![0.0; n_dof];
    lambda.copy_from_slice(&solution.lambda);
    Ok(WarmStart { u, phi, lambda })
}

/// Solves on a ladder of time meshes, warm-starting each level from the
/// interpolated previous one.  The returned state lives on the finest
/// grid; iteration counts, residual histories, and per-level stats are
/// accumulated across levels, and `converged` reports the final level.
pub fn solve_with_refinement(
    scheme: &SchemeConfig,
    base_grid: &SpaceTimeGrid,
    k_kind: KKind,
    initial_data: &[f64],
    config: &PdhgConfig,
    plan: &RefinementPlan,
) -> Result<Solution, StrategyError> {
    if plan.coarsest_exponent > plan.finest_exponent {
        return Err(StrategyError::BadLevelRange {
            coarsest: plan.coarsest_exponent,
            finest: plan.finest_exponent,
        });
    }

    let mut warm: Option<WarmStart> = None;
    let mut history = Vec::new();
    let mut stats = Vec::new();
    let mut total_iterations = 0;
    let mut final_solution: Option<Solution> = None;

    for exponent in plan.coarsest_exponent..=plan.finest_exponent {
        let level_grid = base_grid.with_time_steps(1usize << exponent)?;
        let k_op = KOperator::build(k_kind, &level_grid, scheme.layout());
        let is_final = exponent == plan.finest_exponent;
        let mut level_config = config.clone();
        if !is_final {
            level_config.max_iters = plan.level_cap;
        }
        let problem = SaddlePointProblem {
            scheme,
            grid: &level_grid,
            k_op: &k_op,
            initial_data,
        };
        let solution = pdhg::solve(&problem, &level_config, warm.take())
            .map_err(|source| StrategyError::Level { exponent, source })?;
        total_iterations += solution.iterations;
        history.extend_from_slice(&solution.residual_history);
        stats.extend_from_slice(&solution.stats);
        if is_final {
            final_solution = Some(solution);
        } else {
            let next_grid = base_grid.with_time_steps(1usize << (exponent + 1))?;
            warm = Some(refine_in_time(&level_grid, &next_grid, &solution)?);
        }
    }

    let mut solution = final_solution.expect("range is non-empty");
    solution.iterations = total_iterations;
    solution.residual_history = history;
    solution.stats = stats;
    Ok(solution)
}

/// Marches one implicit step at a time, each step solved as a one-step
/// saddle-point problem.
///
/// Every window is a backward-Euler problem: the two-step scheme's window
/// `l >= 1` is algebraically identical to a backward-Euler step of size
/// `2 h_t / 3` started from the combination `(4 u^l - u^{l-1}) / 3`, so
/// the marched trajectory satisfies the original stencil exactly.  Window
/// residuals are measured in the spatial norm so the stopping threshold
/// keeps its meaning as the outer step count grows.
pub fn solve_one_timestep(
    scheme: &SchemeConfig,
    grid: &SpaceTimeGrid,
    k_kind: KKind,
    initial_data: &[f64],
    config: &PdhgConfig,
) -> Result<Solution, StrategyError> {
    scheme.validate_grid(grid).map_err(SolveError::from)?;
    let layout = scheme.layout();
    let n_t = grid.n_t();
    let n_dof = grid.n_x() * layout.dof_per_cell();
    assert_eq!(initial_data.len(), n_dof, "initial data length");

    let window_scheme = match scheme.space() {
        SpaceDiscretization::FdDiffusion { gamma_half } => {
            SchemeConfig::fd_diffusion(TimeScheme::BackwardEuler, gamma_half.clone())
                .map_err(SolveError::from)?
        }
        SpaceDiscretization::DgUpwind { flux } => {
            SchemeConfig::dg_upwind(TimeScheme::BackwardEuler, *flux)
        }
    };
    let window_grid_for = |h_eff: f64| {
        SpaceTimeGrid::new(grid.x_min(), grid.x_max(), grid.n_x(), h_eff, 1)
    };
    let mut window_config = config.clone();
    window_config.residual_norm = ResidualNorm::SpatialOnly;

    // one preconditioner per distinct effective step size
    let euler_grid = window_grid_for(grid.h_t())?;
    let euler_k = KOperator::build(k_kind, &euler_grid, layout);
    let two_step = match scheme.time() {
        TimeScheme::BackwardEuler => None,
        TimeScheme::Bdf2 => {
            let shrunk_grid = window_grid_for(2.0 * grid.h_t() / 3.0)?;
            let shrunk_k = KOperator::build(k_kind, &shrunk_grid, layout);
            Some((shrunk_grid, shrunk_k))
        }
    };

    let mut u = Field::zeros(layout, grid.n_x(), n_t + 1);
    u.slice_mut(0).copy_from_slice(initial_data);
    let mut phi = Field::zeros(layout, grid.n_x(), n_t);
    let mut lambda = vec![0.0; n_dof];
    let mut history = Vec::new();
    let mut stats = Vec::new();
    let mut total_iterations = 0;
    let mut converged = true;

    for window in 0..n_t {
        let (window_grid, window_k) = match (&two_step, window) {
            (Some((g, k)), w) if w > 0 => (g, k),
            _ => (&euler_grid, &euler_k),
        };
        let window_data: Vec<f64> = match (&two_step, window) {
            (Some(_), w) if w > 0 => {
                let current = u.slice(w);
                let previous = u.slice(w - 1);
                current
                    .iter()
                    .zip(previous)
                    .map(|(c, p)| (4.0 * c - p) / 3.0)
                    .collect()
            }
            _ => u.slice(window).to_vec(),
        };
        let mut warm_u = Field::zeros(layout, grid.n_x(), 2);
        warm_u.slice_mut(0).copy_from_slice(&window_data);
        warm_u.slice_mut(1).copy_from_slice(u.slice(window));
        let warm = WarmStart {
            u: warm_u,
            phi: Field::zeros(layout, grid.n_x(), 1),
            lambda: vec![0.0; n_dof],
        };
        let problem = SaddlePointProblem {
            scheme: &window_scheme,
            grid: window_grid,
            k_op: window_k,
            initial_data: &window_data,
        };
        let solution = pdhg::solve(&problem, &window_config, Some(warm))
            .map_err(|source| StrategyError::Window { window, source })?;
        u.slice_mut(window + 1).copy_from_slice(solution.u.slice(1));
        phi.slice_mut(window).copy_from_slice(solution.phi.slice(0));
        if window == 0 {
            lambda.copy_from_slice(&solution.lambda);
        }
        total_iterations += solution.iterations;
        history.extend_from_slice(&solution.residual_history);
        stats.extend_from_slice(&solution.stats);
        converged &= solution.converged;
    }

    Ok(Solution {
        u,
        phi,
        lambda,
        iterations: total_iterations,
        converged,
        residual_history: history,
        stats,
    })
}

/// One strategy's cost line: total iterations and the operator-application
/// count `sum over runs of iterations x (steps + 1) x cells`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub label: String,
    pub iterations: usize,
    pub operator_applications: u64,
}

impl CostRow {
    pub fn from_stats(label: &str, stats: &[SolveStats]) -> Self {
        let iterations = stats.iter().map(|s| s.iterations).sum();
        let operator_applications = stats
            .iter()
            .map(|s| s.iterations as u64 * (s.n_t as u64 + 1) * s.n_x as u64)
            .sum();
        Self {
            label: label.to_owned(),
            iterations,
            operator_applications,
        }
    }
}

/// Cost comparison across strategies, printable as an aligned table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostTable {
    pub rows: Vec<CostRow>,
}

impl fmt::Display for CostTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label_width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max("strategy".len());
        writeln!(
            f,
            "{:<label_width$}  {:>10}  {:>20}",
            "strategy", "iterations", "operator applications"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<label_width$}  {:>10}  {:>20}",
                row.label, row.iterations, row.operator_applications
            )?;
        }
        Ok(())
    }
}

/// Builds the cost table for a set of labeled runs.
pub fn cost_report(runs: &[(&str, &Solution)]) -> Result<CostTable, StrategyError> {
    if runs.is_empty() {
        return Err(StrategyError::EmptyCostReport);
    }
    Ok(CostTable {
        rows: runs
            .iter()
            .map(|(label, solution)| CostRow::from_stats(label, &solution.stats))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::direct_implicit_solve;
    use crate::problems::{heat_problem, transport_problem, TransportInit};
    use approx::assert_relative_eq;

    fn max_gap(a: &Field, b: &Field) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn refinement_transfer_keeps_nodes_and_averages_midpoints() {
        let spec = heat_problem();
        let coarse = spec.grid(4, 2).unwrap();
        let fine = spec.grid(4, 4).unwrap();
        let layout = spec.layout();
        let mut u = Field::zeros(layout, 4, 3);
        let mut phi = Field::zeros(layout, 4, 2);
        for (l, v) in [10.0, 20.0, 40.0].iter().enumerate() {
            u.slice_mut(l).iter_mut().for_each(|x| *x = *v);
        }
        for (m, v) in [6.0, 2.0].iter().enumerate() {
            phi.slice_mut(m).iter_mut().for_each(|x| *x = *v);
        }
        let solution = Solution {
            u,
            phi,
            lambda: vec![3.5; 4],
            iterations: 0,
            converged: true,
            residual_history: vec![],
            stats: vec![],
        };
        let warm = refine_in_time(&coarse, &fine, &solution).unwrap();
        let u_slices: Vec<f64> = (0..5).map(|l| warm.u.slice(l)[0]).collect();
        assert_eq!(u_slices, vec![10.0, 15.0, 20.0, 30.0, 40.0]);
        let phi_slices: Vec<f64> = (0..4).map(|m| warm.phi.slice(m)[0]).collect();
        // last midpoint averages against the zero beyond the final slice
        assert_eq!(phi_slices, vec![6.0, 4.0, 2.0, 1.0]);
        assert_eq!(warm.lambda, vec![3.5; 4]);
    }

    #[test]
    fn refinement_transfer_rejects_other_ratios() {
        let spec = heat_problem();
        let coarse = spec.grid(4, 2).unwrap();
        let fine = spec.grid(4, 6).unwrap();
        let solution = Solution {
            u: Field::zeros(spec.layout(), 4, 3),
            phi: Field::zeros(spec.layout(), 4, 2),
            lambda: vec![0.0; 4],
            iterations: 0,
            converged: true,
            residual_history: vec![],
            stats: vec![],
        };
        assert_eq!(
            refine_in_time(&coarse, &fine, &solution).unwrap_err(),
            StrategyError::GridMismatch { coarse: 2, fine: 6 }
        );
    }

    #[test]
    fn single_level_ladder_is_the_plain_solve() {
        let spec = heat_problem();
        let grid = spec.grid(8, 4).unwrap();
        let scheme = spec
            .scheme_for_grid(TimeScheme::BackwardEuler, &grid)
            .unwrap();
        let k_op = spec.k_operator(&grid);
        let initial = spec.initial_slice(&grid);
        let (tau_u, tau_phi, tau_lambda) = spec.default_steps();
        let mut config = PdhgConfig::with_steps(tau_u, tau_phi, tau_lambda);
        config.eps = 1e-8;

        let plan = RefinementPlan::new(2, 2);
        let ladder = solve_with_refinement(&scheme, &grid, k_op.kind(), &initial, &config, &plan)
            .unwrap();
        let problem = SaddlePointProblem {
            scheme: &scheme,
            grid: &grid,
            k_op: &k_op,
            initial_data: &initial,
        };
        let plain = pdhg::solve(&problem, &config, None).unwrap();
        assert_eq!(ladder.iterations, plain.iterations);
        assert_eq!(ladder.u.values(), plain.u.values());
        assert_eq!(ladder.stats, plain.stats);
    }

    #[test]
    fn ladder_rejects_inverted_ranges() {
        let spec = heat_problem();
        let grid = spec.grid(8, 8).unwrap();
        let scheme = spec
            .scheme_for_grid(TimeScheme::BackwardEuler, &grid)
            .unwrap();
        let initial = spec.initial_slice(&grid);
        let config = PdhgConfig::with_steps(0.8, 0.8, 0.99);
        let plan = RefinementPlan::new(3, 1);
        assert_eq!(
            solve_with_refinement(
                &scheme,
                &grid,
                spec.k_operator(&grid).kind(),
                &initial,
                &config,
                &plan
            )
            .unwrap_err(),
            StrategyError::BadLevelRange {
                coarsest: 3,
                finest: 1
            }
        );
    }

    #[test]
    fn ladder_reaches_the_same_state_with_cheaper_early_work() {
        let spec = heat_problem();
        let grid = spec.grid(8, 8).unwrap();
        let scheme = spec
            .scheme_for_grid(TimeScheme::BackwardEuler, &grid)
            .unwrap();
        let k_op = spec.k_operator(&grid);
        let initial = spec.initial_slice(&grid);
        let (tau_u, tau_phi, tau_lambda) = spec.default_steps();
        let mut config = PdhgConfig::with_steps(tau_u, tau_phi, tau_lambda);
        config.eps = 1e-9;

        let problem = SaddlePointProblem {
            scheme: &scheme,
            grid: &grid,
            k_op: &k_op,
            initial_data: &initial,
        };
        let plain = pdhg::solve(&problem, &config, None).unwrap();

        let plan = RefinementPlan::new(1, 3);
        let ladder = solve_with_refinement(&scheme, &grid, k_op.kind(), &initial, &config, &plan)
            .unwrap();
        assert!(ladder.converged);
        assert_eq!(ladder.stats.len(), 3);
        assert_eq!(
            ladder.iterations,
            ladder.stats.iter().map(|s| s.iterations).sum::<usize>()
        );
        assert!(max_gap(&ladder.u, &plain.u) <= 1e-6);
        // the warm start must save iterations on the expensive final level
        let final_level = ladder.stats.last().unwrap();
        assert!(
            final_level.iterations < plain.iterations,
            "warm-started final level took {} iterations, cold solve {}",
            final_level.iterations,
            plain.iterations
        );
    }

    #[test]
    fn marching_reproduces_the_one_step_trajectory() {
        let spec = heat_problem();
        let grid = spec.grid(8, 4).unwrap();
        let scheme = spec
            .scheme_for_grid(TimeScheme::BackwardEuler, &grid)
            .unwrap();
        let k_op = spec.k_operator(&grid);
        let initial = spec.initial_slice(&grid);
        let (tau_u, tau_phi, tau_lambda) = spec.default_steps();
        let mut config = PdhgConfig::with_steps(tau_u, tau_phi, tau_lambda);
        config.eps = 1e-11;

        let marched = solve_one_timestep(
            &scheme,
            &grid,
            k_op.kind(),
            &initial,
            &config,
        )
        .unwrap();
        assert!(marched.converged);
        assert_eq!(marched.stats.len(), 4);
        let direct = direct_implicit_solve(&spec, TimeScheme::BackwardEuler, &grid).unwrap();
        assert!(
            max_gap(&marched.u, &direct) <= 1e-6,
            "gap {}",
            max_gap(&marched.u, &direct)
        );
    }

    #[test]
    fn marching_matches_the_two_step_stencil_exactly() {
        // the shrunk-step rewrite must land on the same trajectory as the
        // dense two-step solve
        for spec in [heat_problem(), transport_problem(TransportInit::Smooth)] {
            let grid = spec.grid(8, 5).unwrap();
            let scheme = spec.scheme_for_grid(TimeScheme::Bdf2, &grid).unwrap();
            let k_op = spec.k_operator(&grid);
            let initial = spec.initial_slice(&grid);
            let (tau_u, tau_phi, tau_lambda) = spec.default_steps();
            let mut config = PdhgConfig::with_steps(tau_u, tau_phi, tau_lambda);
            config.eps = 1e-11;

            let marched =
                solve_one_timestep(&scheme, &grid, k_op.kind(), &initial, &config).unwrap();
            assert!(marched.converged, "{} windows did not converge", spec.name());
            let direct = direct_implicit_solve(&spec, TimeScheme::Bdf2, &grid).unwrap();
            assert!(
                max_gap(&marched.u, &direct) <= 1e-6,
                "{}: gap {}",
                spec.name(),
                max_gap(&marched.u, &direct)
            );
        }
    }

    #[test]
    fn cost_arithmetic_matches_hand_counts() {
        let vanilla = CostRow::from_stats(
            "vanilla",
            &[SolveStats {
                n_t: 32,
                n_x: 256,
                iterations: 4573,
            }],
        );
        assert_eq!(vanilla.iterations, 4573);
        assert_eq!(vanilla.operator_applications, 4573 * 33 * 256);

        let ladder = CostRow::from_stats(
            "refinement",
            &[
                SolveStats {
                    n_t: 8,
                    n_x: 256,
                    iterations: 1000,
                },
                SolveStats {
                    n_t: 16,
                    n_x: 256,
                    iterations: 1000,
                },
                SolveStats {
                    n_t: 32,
                    n_x: 256,
                    iterations: 3601,
                },
            ],
        );
        assert_eq!(ladder.iterations, 5601);
        assert_eq!(
            ladder.operator_applications,
            (1000 * 9 + 1000 * 17 + 3601 * 33) * 256
        );
        assert_eq!(ladder.operator_applications, 144_833 * 256);

        let marching = CostRow::from_stats(
            "one-step",
            &[SolveStats {
                n_t: 1,
                n_x: 256,
                iterations: 8627,
            }],
        );
        assert_eq!(marching.operator_applications, 8627 * 2 * 256);

        let tiny = CostRow::from_stats(
            "window",
            &[SolveStats {
                n_t: 1,
                n_x: 7,
                iterations: 1,
            }],
        );
        assert_eq!(tiny.operator_applications, 14);
    }

    #[test]
    fn cost_report_requires_runs() {
        assert_eq!(
            cost_report(&[]).unwrap_err(),
            StrategyError::EmptyCostReport
        );
    }

    #[test]
    fn cost_table_renders_every_row() {
        let rows = vec![
            CostRow {
                label: "vanilla".into(),
                iterations: 10,
                operator_applications: 330,
            },
            CostRow {
                label: "one-step".into(),
                iterations: 12,
                operator_applications: 24,
            },
        ];
        let rendered = CostTable { rows }.to_string();
        assert!(rendered.contains("vanilla"));
        assert!(rendered.contains("330"));
        assert!(rendered.contains("one-step"));
        assert_eq!(rendered.lines().count(), 3);
    }

    #[test]
    fn midpoint_values_survive_rounding() {
        // guard the averaging arithmetic itself
        let spec = heat_problem();
        let coarse = spec.grid(2, 1).unwrap();
        let fine = spec.grid(2, 2).unwrap();
        let layout = spec.layout();
        let mut u = Field::zeros(layout, 2, 2);
        u.slice_mut(0).copy_from_slice(&[0.1, 0.3]);
        u.slice_mut(1).copy_from_slice(&[0.2, 0.7]);
        let mut phi = Field::zeros(layout, 2, 1);
        phi.slice_mut(0).copy_from_slice(&[0.5, -0.5]);
        let solution = Solution {
            u,
            phi,
            lambda: vec![1.0, -1.0],
            iterations: 0,
            converged: true,
            residual_history: vec![],
            stats: vec![],
        };
        let warm = refine_in_time(&coarse, &fine, &solution).unwrap();
        assert_relative_eq!(warm.u.slice(1)[0], 0.15, epsilon = 1e-15);
        assert_relative_eq!(warm.u.slice(1)[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(warm.phi.slice(1)[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(warm.phi.slice(1)[1], -0.25, epsilon = 1e-15);
    }
}
