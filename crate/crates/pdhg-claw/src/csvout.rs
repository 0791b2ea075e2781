//! CSV emission for solver artifacts.
//!
//! Files start with `# key: value` metadata lines, then a header row, then
//! data rows.  All floats are written as `{:.16e}` so repeated runs of the
//! same configuration produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CsvError;
use crate::grid::{Field, SpaceTimeGrid};

fn persist(path: &Path, contents: &str) -> Result<(), CsvError> {
    std::fs::write(path, contents).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn push_metadata(out: &mut String, metadata: &[(&str, String)]) {
    for (key, value) in metadata {
        let _ = writeln!(out, "# {key}: {value}");
    }
}

/// Writes a space-time state as `t,x,dof,u` rows, time-major.
pub fn write_solution_csv(
    path: &Path,
    metadata: &[(&str, String)],
    grid: &SpaceTimeGrid,
    state: &Field,
) -> Result<(), CsvError> {
    let layout = state.layout();
    let per_cell = layout.dof_per_cell();
    let mut out = String::new();
    push_metadata(&mut out, metadata);
    out.push_str("t,x,dof,u\n");
    for l in 0..state.n_slices() {
        let t = grid.t_node(l);
        let slice = state.slice(l);
        for j in 0..state.n_x() {
            for d in 0..per_cell {
                let x = grid.dof_coordinate(layout, j, d);
                let value = slice[j * per_cell + d];
                let _ = writeln!(out, "{t:.16e},{x:.16e},{d},{value:.16e}");
            }
        }
    }
    persist(path, &out)
}

/// Writes a residual history as `iter,res_primal,res_dual` rows, with an
/// `error_vs_reference` column when per-iteration errors are supplied.
pub fn write_residual_csv(
    path: &Path,
    metadata: &[(&str, String)],
    history: &[(f64, f64)],
    errors: Option<&[f64]>,
) -> Result<(), CsvError> {
    if let Some(errors) = errors {
        assert_eq!(errors.len(), history.len(), "one error per history entry");
    }
    let mut out = String::new();
    push_metadata(&mut out, metadata);
    match errors {
        None => out.push_str("iter,res_primal,res_dual\n"),
        Some(_) => out.push_str("iter,res_primal,res_dual,error_vs_reference\n"),
    }
    for (iter, (primal, dual)) in history.iter().enumerate() {
        let _ = write!(out, "{iter},{primal:.16e},{dual:.16e}");
        if let Some(errors) = errors {
            let _ = write!(out, ",{:.16e}", errors[iter]);
        }
        out.push('\n');
    }
    persist(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Layout;

    fn sample_state() -> (SpaceTimeGrid, Field) {
        let grid = SpaceTimeGrid::new(0.0, 1.0, 4, 0.5, 2).unwrap();
        let state = Field::from_fn(Layout::QuarterPair, &grid, 3, |l, x| l as f64 + x);
        (grid, state)
    }

    #[test]
    fn solution_rows_cover_the_grid_time_major() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        let (grid, state) = sample_state();
        write_solution_csv(&path, &[("problem", "demo".to_owned())], &grid, &state).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# problem: demo");
        assert_eq!(lines[1], "t,x,dof,u");
        // 3 slices x 4 cells x 2 dofs data rows
        assert_eq!(lines.len(), 2 + 3 * 4 * 2);
        // first data row: t = 0, first quarter point, dof 0
        let fields: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(fields.len(), 4);
        assert_eq!(fields[0].parse::<f64>().unwrap(), 0.0);
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.0625);
        assert_eq!(fields[2], "0");
        // last data row sits on the final slice
        let last: Vec<&str> = lines.last().unwrap().split(',').collect();
        assert_eq!(last[0].parse::<f64>().unwrap(), 0.5);
    }

    #[test]
    fn residual_rows_number_iterations_from_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("res.csv");
        let history = vec![(1.0, 2.0), (0.5, 0.25)];
        write_residual_csv(&path, &[], &history, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,res_primal,res_dual");
        assert!(lines[1].starts_with("0,"));
        assert!(lines[2].starts_with("1,"));
        assert_eq!(lines.len(), 3);

        let with_errors = dir.path().join("res_err.csv");
        write_residual_csv(&with_errors, &[], &history, Some(&[0.1, 0.01])).unwrap();
        let text = std::fs::read_to_string(&with_errors).unwrap();
        assert!(text.starts_with("iter,res_primal,res_dual,error_vs_reference\n"));
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 4);
    }

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (grid, state) = sample_state();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let meta = [("seed", "0".to_owned())];
        write_solution_csv(&a, &meta, &grid, &state).unwrap();
        write_solution_csv(&b, &meta, &grid, &state).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn write_failures_name_the_path() {
        let missing = Path::new("/nonexistent-dir/out.csv");
        let err = write_residual_csv(missing, &[], &[], None).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
    }
}
