//! Command-line front end for the space-time saddle-point solver.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pdhg_claw::config::{RunConfig, StrategyKind};
use pdhg_claw::csvout::{write_residual_csv, write_solution_csv};
use pdhg_claw::oracle::direct_implicit_solve;
use pdhg_claw::pdhg::{self, PdhgConfig, SaddlePointProblem, Solution};
use pdhg_claw::problems::{transport_problem, ProblemSpec, TransportInit};
use pdhg_claw::strategies::{
    cost_report, solve_one_timestep, solve_with_refinement, RefinementPlan,
};
use pdhg_claw::{
    inner_product, weighted_norm, Field, Layout, SolveError, SpaceTimeGrid, StrategyError,
    TimeScheme,
};

#[derive(Parser)]
#[command(
    name = "pdhg-claw",
    version,
    about = "Implicit space-time solver for 1-D periodic conservation laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured problem and optionally write CSV artifacts
    Solve(SolveArgs),
    /// Iteration counts of the one-step scheme across a mesh ladder
    Table1(OutArg),
    /// Convergence orders of the two-step scheme on smooth transport
    Table2(OutArg),
    /// Cost comparison of the three strategies on the traffic problem
    Table3(OutArg),
    /// Per-iteration residuals and error against the direct reference
    FigureData(OutArg),
    /// Fast internal consistency checks
    Check,
}

#[derive(Args)]
struct OutArg {
    /// Directory for CSV output (stdout only when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpatialChoice {
    /// Variable-coefficient diffusion stencil on cell centers
    Fd,
    /// Upwind discontinuous Galerkin with quarter-point dofs
    Dg,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimeChoice {
    BackwardEuler,
    Bdf2,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyChoice {
    Vanilla,
    Refine,
    March,
}

#[derive(Args)]
struct SolveArgs {
    /// Configuration file (flat `key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem name: heat, transport, transport-step, or traffic
    #[arg(long)]
    problem: Option<String>,
    /// Number of space cells
    #[arg(long)]
    nx: Option<usize>,
    /// Number of time steps
    #[arg(long)]
    nt: Option<usize>,
    /// Residual tolerance
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tau_u: Option<f64>,
    #[arg(long)]
    tau_phi: Option<f64>,
    #[arg(long)]
    tau_lambda: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Outer strategy
    #[arg(long)]
    strategy: Option<StrategyChoice>,
    /// Spatial discretization sanity check (each problem fixes its own)
    #[arg(long)]
    scheme: Option<SpatialChoice>,
    /// Time discretization
    #[arg(long)]
    time_scheme: Option<TimeChoice>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 4 when the iteration cap is hit before tolerance
    #[arg(long)]
    strict: bool,
    /// Directory for solution.csv and residuals.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the process exit status it maps to: 2 for configuration
/// problems, 3 for numerical divergence, 4 for a strict run that hit its
/// iteration cap, 1 for anything else.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    fn io(message: impl Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn from_solve(error: SolveError) -> Self {
        let code = match error {
            SolveError::Divergence { .. } | SolveError::PowerIterationStalled => 3,
            _ => 2,
        };
        Self {
            code,
            message: error.to_string(),
        }
    }

    fn from_strategy(error: StrategyError) -> Self {
        let code = match &error {
            StrategyError::Level { source, .. }
            | StrategyError::Window { source, .. }
            | StrategyError::Solve(source) => Self::from_solve(source.clone()).code,
            _ => 2,
        };
        Self {
            code,
            message: error.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Table1(out) => run_table1(out.out.as_deref()),
        Command::Table2(out) => run_table2(out.out.as_deref()),
        Command::Table3(out) => run_table3(out.out.as_deref()),
        Command::FigureData(out) => run_figure_data(out.out.as_deref()),
        Command::Check => run_check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn resolve_config(args: &SolveArgs) -> Result<RunConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(Failure::config)?
        }
        None => {
            let name = args
                .problem
                .as_deref()
                .ok_or_else(|| Failure::config("--problem is required without --config"))?;
            let n_x = args
                .nx
                .ok_or_else(|| Failure::config("--nx is required without --config"))?;
            let n_t = args
                .nt
                .ok_or_else(|| Failure::config("--nt is required without --config"))?;
            RunConfig::new(name, n_x, n_t)
        }
    };
    if let Some(name) = &args.problem {
        config.problem_name = name.clone();
    }
    if let Some(v) = args.nx {
        config.n_x = v;
    }
    if let Some(v) = args.nt {
        config.n_t = v;
    }
    if let Some(v) = args.eps {
        config.eps = v;
    }
    if let Some(v) = args.tau_u {
        config.tau_u = Some(v);
    }
    if let Some(v) = args.tau_phi {
        config.tau_phi = Some(v);
    }
    if let Some(v) = args.tau_lambda {
        config.tau_lambda = Some(v);
    }
    if let Some(v) = args.max_iters {
        config.max_iters = v;
    }
    if let Some(v) = args.strategy {
        config.strategy = match v {
            StrategyChoice::Vanilla => StrategyKind::Vanilla,
            StrategyChoice::Refine => StrategyKind::Refine,
            StrategyChoice::March => StrategyKind::March,
        };
    }
    if let Some(v) = args.time_scheme {
        config.time_scheme = match v {
            TimeChoice::BackwardEuler => TimeScheme::BackwardEuler,
            TimeChoice::Bdf2 => TimeScheme::Bdf2,
        };
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if args.strict {
        config.strict = true;
    }
    if let Some(dir) = &args.out {
        config.output_dir = Some(dir.display().to_string());
    }
    Ok(config)
}

fn pdhg_config_for(spec: &ProblemSpec, config: &RunConfig) -> PdhgConfig {
    let (tau_u, tau_phi, tau_lambda) = spec.default_steps();
    let mut solver = PdhgConfig::with_steps(
        config.tau_u.unwrap_or(tau_u),
        config.tau_phi.unwrap_or(tau_phi),
        config.tau_lambda.unwrap_or(tau_lambda),
    );
    solver.tau_u0 = config.tau_u0;
    solver.eps = config.eps;
    solver.max_iters = config.max_iters;
    solver
}

fn ladder_for(config: &RunConfig) -> Result<RefinementPlan, Failure> {
    let finest = match config.finest_exponent {
        Some(m) => {
            if (1usize << m) != config.n_t {
                return Err(Failure::config(format!(
                    "strategy.m0 = {m} puts the final level at {} steps, but grid.nt = {}",
                    1usize << m,
                    config.n_t
                )));
            }
            m
        }
        None => {
            if !config.n_t.is_power_of_two() {
                return Err(Failure::config(
                    "refinement needs grid.nt to be a power of two (or an explicit strategy.m0)",
                ));
            }
            config.n_t.trailing_zeros()
        }
    };
    let minimum = match config.time_scheme {
        TimeScheme::BackwardEuler => 0,
        TimeScheme::Bdf2 => 1, // two-step scheme needs at least two steps
    };
    let coarsest = config
        .coarsest_exponent
        .unwrap_or_else(|| finest.saturating_sub(2).max(minimum));
    Ok(RefinementPlan::new(coarsest, finest).with_level_cap(config.level_cap))
}

fn run_strategy(
    spec: &ProblemSpec,
    grid: &SpaceTimeGrid,
    config: &RunConfig,
) -> Result<Solution, Failure> {
    let scheme = spec
        .scheme_for_grid(config.time_scheme, grid)
        .map_err(Failure::config)?;
    let solver_config = pdhg_config_for(spec, config);
    let initial = spec.initial_slice(grid);
    match config.strategy {
        StrategyKind::Vanilla => {
            let k_op = spec.k_operator(grid);
            let problem = SaddlePointProblem {
                scheme: &scheme,
                grid,
                k_op: &k_op,
                initial_data: &initial,
            };
            pdhg::solve(&problem, &solver_config, None).map_err(Failure::from_solve)
        }
        StrategyKind::Refine => {
            let plan = ladder_for(config)?;
            solve_with_refinement(
                &scheme,
                grid,
                spec.k_operator(grid).kind(),
                &initial,
                &solver_config,
                &plan,
            )
            .map_err(Failure::from_strategy)
        }
        StrategyKind::March => solve_one_timestep(
            &scheme,
            grid,
            spec.k_operator(grid).kind(),
            &initial,
            &solver_config,
        )
        .map_err(Failure::from_strategy),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))
}

fn strategy_name(kind: StrategyKind) -> &'static str {
    match kind {
        StrategyKind::Vanilla => "vanilla",
        StrategyKind::Refine => "refine",
        StrategyKind::March => "march",
    }
}

fn time_name(scheme: TimeScheme) -> &'static str {
    match scheme {
        TimeScheme::BackwardEuler => "backward-euler",
        TimeScheme::Bdf2 => "bdf2",
    }
}

fn run_solve(args: SolveArgs) -> Result<(), Failure> {
    let config = resolve_config(&args)?;
    let spec = ProblemSpec::from_name(&config.problem_name)
        .ok_or_else(|| Failure::config(format!("unknown problem `{}`", config.problem_name)))?;
    if let Some(choice) = args.scheme {
        let actual = match spec.layout() {
            Layout::Node => SpatialChoice::Fd,
            Layout::QuarterPair => SpatialChoice::Dg,
        };
        if choice != actual {
            return Err(Failure::config(format!(
                "problem `{}` is discretized with `{}`; --scheme {} is incompatible",
                spec.name(),
                match actual {
                    SpatialChoice::Fd => "fd",
                    SpatialChoice::Dg => "dg",
                },
                match choice {
                    SpatialChoice::Fd => "fd",
                    SpatialChoice::Dg => "dg",
                },
            )));
        }
    }
    let grid = spec.grid(config.n_x, config.n_t).map_err(Failure::config)?;
    let solution = run_strategy(&spec, &grid, &config)?;

    let (res_primal, res_dual) = *solution
        .residual_history
        .last()
        .expect("history always holds the starting state");
    println!(
        "problem {}: {} cells x {} steps, {}, strategy {}",
        spec.name(),
        config.n_x,
        config.n_t,
        time_name(config.time_scheme),
        strategy_name(config.strategy),
    );
    if solution.converged {
        println!(
            "converged in {} iterations (residuals {res_primal:.3e} / {res_dual:.3e})",
            solution.iterations
        );
    } else {
        println!(
            "stopped at the {}-iteration cap without reaching eps = {:.3e} (residuals {res_primal:.3e} / {res_dual:.3e})",
            solution.iterations, config.eps
        );
    }

    if let Some(dir) = &config.output_dir {
        let dir = PathBuf::from(dir);
        ensure_dir(&dir)?;
        let metadata = run_metadata(&spec, &config, &solution);
        write_solution_csv(&dir.join("solution.csv"), &metadata, &grid, &solution.u)
            .map_err(Failure::io)?;
        write_residual_csv(
            &dir.join("residuals.csv"),
            &metadata,
            &solution.residual_history,
            None,
        )
        .map_err(Failure::io)?;
        println!("wrote {}", dir.join("solution.csv").display());
        println!("wrote {}", dir.join("residuals.csv").display());
    }

    if !solution.converged && config.strict {
        return Err(Failure {
            code: 4,
            message: format!(
                "strict mode: not converged after {} iterations",
                solution.iterations
            ),
        });
    }
    Ok(())
}

fn run_metadata(
    spec: &ProblemSpec,
    config: &RunConfig,
    solution: &Solution,
) -> Vec<(&'static str, String)> {
    let solver = pdhg_config_for(spec, config);
    let grid = spec
        .grid(config.n_x, config.n_t)
        .expect("metadata is only built for grids that already solved");
    vec![
        ("problem", spec.name().to_owned()),
        ("nx", config.n_x.to_string()),
        ("nt", config.n_t.to_string()),
        // Step-size ratios of the mesh; the implicit solver has no
        // stability ceiling on either, so these document how far a run
        // sits beyond the explicit-scheme limits.
        ("ht_over_hx", format!("{:.17e}", grid.h_t() / grid.h_x())),
        (
            "ht_over_hx_sq",
            format!("{:.17e}", grid.h_t() / (grid.h_x() * grid.h_x())),
        ),
        ("time_scheme", time_name(config.time_scheme).to_owned()),
        ("strategy", strategy_name(config.strategy).to_owned()),
        ("eps", format!("{:e}", solver.eps)),
        (
            "steps",
            format!(
                "({}, {}, {})",
                solver.tau_u, solver.tau_phi, solver.tau_lambda
            ),
        ),
        ("seed", config.seed.to_string()),
        ("iterations", solution.iterations.to_string()),
        ("converged", solution.converged.to_string()),
    ]
}

/// `(n_x, n_t)` pairs for the mesh-independence study.  Every mesh sits far
/// beyond the explicit diffusion limit: `h_t / h_x^2` runs 25.6 -> 204.8.
const LADDER_MESHES: [(usize, usize); 4] = [(64, 16), (128, 32), (256, 64), (512, 128)];
const LADDER_TOLERANCES: [f64; 2] = [1e-6, 1e-10];

fn run_table1(out: Option<&Path>) -> Result<(), Failure> {
    let spec = pdhg_claw::heat_problem();
    let (tau_u, tau_phi, tau_lambda) = spec.default_steps();
    println!(
        "iterations to tolerance (one-step scheme, diffusion stencil, steps ({tau_u}, {tau_phi}, {tau_lambda}))"
    );
    println!("{:>6} {:>6} {:>12} {:>12}", "cells", "steps", "eps 1e-6", "eps 1e-10");
    let mut rows = Vec::new();
    for (n_x, n_t) in LADDER_MESHES {
        let grid = spec.grid(n_x, n_t).map_err(Failure::config)?;
        let scheme = spec
            .scheme_for_grid(TimeScheme::BackwardEuler, &grid)
            .map_err(Failure::config)?;
        let k_op = spec.k_operator(&grid);
        let initial = spec.initial_slice(&grid);
        let mut counts = Vec::new();
        for eps in LADDER_TOLERANCES {
            let mut config = PdhgConfig::with_steps(tau_u, tau_phi, tau_lambda);
            config.eps = eps;
            let problem = SaddlePointProblem {
                scheme: &scheme,
                grid: &grid,
                k_op: &k_op,
                initial_data: &initial,
            };
            let solution = pdhg::solve(&problem, &config, None).map_err(Failure::from_solve)?;
            counts.push(solution.iterations);
        }
        println!(
            "{:>6} {:>6} {:>12} {:>12}",
            n_x, n_t, counts[0], counts[1]
        );
        rows.push((n_x, n_t, counts[0], counts[1]));
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut csv = String::from("nx,nt,iterations_at_1e-6,iterations_at_1e-10\n");
        for (n_x, n_t, a, b) in rows {
            csv.push_str(&format!("{n_x},{n_t},{a},{b}\n"));
        }
        let path = dir.join("mesh_iterations.csv");
        std::fs::write(&path, csv).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

const CONVERGENCE_MESHES: [(usize, usize); 3] = [(32, 16), (64, 32), (128, 64)];

fn run_table2(out: Option<&Path>) -> Result<(), Failure> {
    let spec = transport_problem(TransportInit::Smooth);
    let (_, _, tau_lambda) = spec.default_steps();
    println!("smooth transport, two-step scheme + upwind DG, eps 1e-8");
    println!("{:>6} {:>6} {:>14} {:>8}", "cells", "steps", "l2 error", "order");
    let mut errors = Vec::new();
    for (n_x, n_t) in CONVERGENCE_MESHES {
        let grid = spec.grid(n_x, n_t).map_err(Failure::config)?;
        let scheme = spec
            .scheme_for_grid(TimeScheme::Bdf2, &grid)
            .map_err(Failure::config)?;
        let k_op = spec.k_operator(&grid);
        let initial = spec.initial_slice(&grid);
        // The two-step scheme's spectral bound grows with refinement (the
        // discontinuous-Galerkin flux is not majorized uniformly by the
        // preconditioner's scalar symbols), so derive the stepsizes from
        // the measured bound instead of using fixed defaults.
        let bound = pdhg_claw::estimate_spectral_bound(&scheme, &grid, &k_op, 0)
            .map_err(Failure::from_solve)?;
        let tau = (0.9 / bound.sqrt()).min(0.5);
        let mut config = PdhgConfig::with_steps(tau, tau, tau_lambda);
        config.eps = 1e-8;
        let problem = SaddlePointProblem {
            scheme: &scheme,
            grid: &grid,
            k_op: &k_op,
            initial_data: &initial,
        };
        let solution = pdhg::solve(&problem, &config, None).map_err(Failure::from_solve)?;
        let error = pdhg_claw::l2_error(&grid, &solution.u, &|x, t| {
            pdhg_claw::analytic_transport(&spec, x, t).expect("transport has a closed form")
        });
        errors.push(error);
        let order = pdhg_claw::convergence_orders(&errors)
            .and_then(|orders| orders.last().copied())
            .map_or("-".to_owned(), |p| format!("{p:.4}"));
        println!("{:>6} {:>6} {:>14.6e} {:>8}", n_x, n_t, error, order);
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let orders = pdhg_claw::convergence_orders(&errors).unwrap_or_default();
        let mut csv = String::from("nx,nt,l2_error,order\n");
        for (i, (n_x, n_t)) in CONVERGENCE_MESHES.iter().enumerate() {
            let order = if i == 0 {
                "-".to_owned()
            } else {
                format!("{:.6}", orders[i - 1])
            };
            csv.push_str(&format!("{n_x},{n_t},{:.16e},{order}\n", errors[i]));
        }
        let path = dir.join("transport_convergence.csv");
        std::fs::write(&path, csv).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_table3(out: Option<&Path>) -> Result<(), Failure> {
    let spec = pdhg_claw::traffic_problem();
    let grid = spec.grid(256, 32).map_err(Failure::config)?;
    let scheme = spec
        .scheme_for_grid(TimeScheme::BackwardEuler, &grid)
        .map_err(Failure::config)?;
    let k_op = spec.k_operator(&grid);
    let initial = spec.initial_slice(&grid);
    let (tau_u, tau_phi, tau_lambda) = spec.default_steps();
    let mut config = PdhgConfig::with_steps(tau_u, tau_phi, tau_lambda);
    config.eps = 1e-3;

    let problem = SaddlePointProblem {
        scheme: &scheme,
        grid: &grid,
        k_op: &k_op,
        initial_data: &initial,
    };
    let vanilla = pdhg::solve(&problem, &config, None).map_err(Failure::from_solve)?;
    let plan = RefinementPlan::new(3, 5);
    let refined = solve_with_refinement(&scheme, &grid, k_op.kind(), &initial, &config, &plan)
        .map_err(Failure::from_strategy)?;
    let marched = solve_one_timestep(&scheme, &grid, k_op.kind(), &initial, &config)
        .map_err(Failure::from_strategy)?;

    println!("traffic flow, 256 cells x 32 steps, one-step scheme, eps 1e-3");
    let table = cost_report(&[
        ("vanilla", &vanilla),
        ("refinement", &refined),
        ("one-timestep", &marched),
    ])
    .map_err(Failure::from_strategy)?;
    print!("{table}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut csv = String::from("strategy,iterations,operator_applications\n");
        for row in &table.rows {
            csv.push_str(&format!(
                "{},{},{}\n",
                row.label, row.iterations, row.operator_applications
            ));
        }
        let path = dir.join("strategy_costs.csv");
        std::fs::write(&path, csv).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_figure_data(out: Option<&Path>) -> Result<(), Failure> {
    let spec = pdhg_claw::heat_problem();
    let grid = spec.grid(16, 64).map_err(Failure::config)?;
    let scheme = spec
        .scheme_for_grid(TimeScheme::BackwardEuler, &grid)
        .map_err(Failure::config)?;
    let k_op = spec.k_operator(&grid);
    let initial = spec.initial_slice(&grid);
    let (tau_u, tau_phi, tau_lambda) = spec.default_steps();
    let mut config = PdhgConfig::with_steps(tau_u, tau_phi, tau_lambda);
    config.eps = 1e-10;

    let reference = direct_implicit_solve(&spec, TimeScheme::BackwardEuler, &grid)
        .map_err(|e| Failure::config(format!("reference solve failed: {e}")))?;
    let mut errors = Vec::new();
    let mut probe = |_iter: usize, state: &Field, _res: (f64, f64)| {
        let mut gap = Field::zeros(state.layout(), state.n_x(), state.n_slices());
        for (g, (a, b)) in gap
            .values_mut()
            .iter_mut()
            .zip(state.values().iter().zip(reference.values()))
        {
            *g = a - b;
        }
        errors.push(weighted_norm(&grid, &gap));
    };
    let problem = SaddlePointProblem {
        scheme: &scheme,
        grid: &grid,
        k_op: &k_op,
        initial_data: &initial,
    };
    let solution = pdhg::solve_with_probe(&problem, &config, None, Some(&mut probe))
        .map_err(Failure::from_solve)?;

    println!(
        "heat, 16 cells x 64 steps, eps 1e-10: {} iterations, final error vs reference {:.3e}",
        solution.iterations,
        errors.last().copied().unwrap_or(f64::NAN)
    );
    let dir = out.unwrap_or_else(|| Path::new("."));
    ensure_dir(dir)?;
    let metadata = [
        ("problem", "heat".to_owned()),
        ("nx", "16".to_owned()),
        ("nt", "64".to_owned()),
        ("eps", "1e-10".to_owned()),
        ("reference", "dense implicit solve".to_owned()),
    ];
    let path = dir.join("iteration_error.csv");
    write_residual_csv(&path, &metadata, &solution.residual_history, Some(&errors))
        .map_err(Failure::io)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_check() -> Result<(), Failure> {
    let mut all_ok = true;
    let mut report = |name: &str, value: f64, limit: f64| {
        let ok = value <= limit;
        all_ok &= ok;
        println!(
            "check {name}: {value:.3e} (limit {limit:.1e}) {}",
            if ok { "ok" } else { "FAIL" }
        );
    };

    let heat = pdhg_claw::heat_problem();
    let heat_grid = heat.grid(6, 5).map_err(Failure::config)?;
    for time in [TimeScheme::BackwardEuler, TimeScheme::Bdf2] {
        let scheme = heat
            .scheme_for_grid(time, &heat_grid)
            .map_err(Failure::config)?;
        report(
            &format!("adjoint defect, diffusion, {}", time_name(time)),
            pdhg_claw::oracle::adjoint_check(&scheme, &heat_grid, 1),
            1e-12,
        );
    }
    let traffic = pdhg_claw::traffic_problem();
    let traffic_grid = traffic.grid(6, 4).map_err(Failure::config)?;
    let scheme = traffic
        .scheme_for_grid(TimeScheme::BackwardEuler, &traffic_grid)
        .map_err(Failure::config)?;
    report(
        "adjoint defect, nonlinear DG",
        pdhg_claw::oracle::adjoint_check(&scheme, &traffic_grid, 2),
        1e-11,
    );

    // preconditioner inversion quality
    let k_op = heat.k_operator(&heat_grid);
    let field = Field::from_fn(heat.layout(), &heat_grid, heat_grid.n_t(), |l, x| {
        (x * 7.0).sin() + 0.3 * l as f64
    });
    let image = k_op.apply(&field).map_err(Failure::config)?;
    let recovered = k_op.solve(&image).map_err(Failure::config)?;
    let mut gap = 0.0f64;
    for (a, b) in recovered.values().iter().zip(field.values()) {
        gap = gap.max((a - b).abs());
    }
    report("preconditioner solve round trip", gap, 1e-9);

    // quadratic-form consistency of the preconditioner metric
    let quadratic = inner_product(&heat_grid, &field, &image);
    let h_norm = k_op.h_norm_sq(&field).map_err(Failure::config)?;
    report(
        "preconditioner metric consistency",
        (quadratic - h_norm).abs() / h_norm.max(1e-30),
        1e-10,
    );

    // quick end-to-end agreement with the dense reference
    let grid = heat.grid(16, 8).map_err(Failure::config)?;
    let scheme = heat
        .scheme_for_grid(TimeScheme::BackwardEuler, &grid)
        .map_err(Failure::config)?;
    let k_op = heat.k_operator(&grid);
    let initial = heat.initial_slice(&grid);
    let (tau_u, tau_phi, tau_lambda) = heat.default_steps();
    let mut config = PdhgConfig::with_steps(tau_u, tau_phi, tau_lambda);
    config.eps = 1e-8;
    let problem = SaddlePointProblem {
        scheme: &scheme,
        grid: &grid,
        k_op: &k_op,
        initial_data: &initial,
    };
    let solution = pdhg::solve(&problem, &config, None).map_err(Failure::from_solve)?;
    let reference = direct_implicit_solve(&heat, TimeScheme::BackwardEuler, &grid)
        .map_err(|e| Failure::config(format!("reference solve failed: {e}")))?;
    let mut gap = 0.0f64;
    for (a, b) in solution.u.values().iter().zip(reference.values()) {
        gap = gap.max((a - b).abs());
    }
    report("saddle-point vs dense solve", gap, 1e-6);

    if all_ok {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: "self-checks failed".to_owned(),
        })
    }
}
