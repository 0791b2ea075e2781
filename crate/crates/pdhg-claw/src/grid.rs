//! Space-time grids and discrete fields.
//!
//! Space is a periodic interval `[x_min, x_max)` split into `n_x` uniform
//! cells of width `h_x`; time is `[0, t_final]` split into `n_t` steps of
//! size `h_t`, giving `n_t + 1` time levels.  Two degree-of-freedom layouts
//! are supported:
//!
//! * [`Layout::Node`] — one value per cell, collocated at the left node
//!   `x_j = x_min + j h_x` (finite differences);
//! * [`Layout::QuarterPair`] — two values per cell at the quarter points
//!   `center - h_x/4` (dof 0) and `center + h_x/4` (dof 1), i.e. a uniform
//!   sub-grid of spacing `h_x / 2` (piecewise-linear DG).

use crate::error::GridError;

/// Uniform periodic-in-space, bounded-in-time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    x_min: f64,
    x_max: f64,
    n_x: usize,
    t_final: f64,
    n_t: usize,
    h_x: f64,
    h_t: f64,
}

impl SpaceTimeGrid {
    /// Builds a grid, validating extents and counts.
    pub fn new(
        x_min: f64,
        x_max: f64,
        n_x: usize,
        t_final: f64,
        n_t: usize,
    ) -> Result<Self, GridError> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(GridError::EmptyDomain { x_min, x_max });
        }
        if n_x < 2 {
            return Err(GridError::TooFewCells { got: n_x });
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(GridError::NonPositiveHorizon { t_final });
        }
        if n_t < 1 {
            return Err(GridError::NoTimeSteps);
        }
        Ok(Self {
            x_min,
            x_max,
            n_x,
            t_final,
            n_t,
            h_x: (x_max - x_min) / n_x as f64,
            h_t: t_final / n_t as f64,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn h_x(&self) -> f64 {
        self.h_x
    }

    pub fn h_t(&self) -> f64 {
        self.h_t
    }

    pub fn domain_length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Left node of cell `j`.
    pub fn x_node(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.h_x
    }

    /// Midpoint between nodes `j` and `j + 1` (where diffusion coefficients
    /// are sampled).
    pub fn x_half(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.h_x
    }

    /// Quarter-point coordinate of cell `j`: dof 0 sits a quarter cell left
    /// of the center, dof 1 a quarter cell right of it.
    pub fn x_quarter(&self, j: usize, dof: usize) -> f64 {
        debug_assert!(dof < 2);
        let center = self.x_min + (j as f64 + 0.5) * self.h_x;
        match dof {
            0 => center - 0.25 * self.h_x,
            _ => center + 0.25 * self.h_x,
        }
    }

    /// Coordinate of dof `(j, d)` under `layout`.
    pub fn dof_coordinate(&self, layout: Layout, j: usize, d: usize) -> f64 {
        match layout {
            Layout::Node => self.x_node(j),
            Layout::QuarterPair => self.x_quarter(j, d),
        }
    }

    pub fn t_node(&self, l: usize) -> f64 {
        l as f64 * self.h_t
    }

    /// Same spatial extent and resolution, different number of time steps
    /// over the same horizon.
    pub fn with_time_steps(&self, n_t: usize) -> Result<Self, GridError> {
        Self::new(self.x_min, self.x_max, self.n_x, self.t_final, n_t)
    }

    /// Wraps a possibly-negative cell index into `0..n_x`.
    #[inline]
    pub fn wrap_cell(&self, j: isize) -> usize {
        j.rem_euclid(self.n_x as isize) as usize
    }
}

/// Degree-of-freedom arrangement of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One dof per cell at the left node (finite differences).
    Node,
    /// Two dofs per cell at the quarter points (piecewise-linear DG).
    QuarterPair,
}

impl Layout {
    #[inline]
    pub fn dof_per_cell(self) -> usize {
        match self {
            Layout::Node => 1,
            Layout::QuarterPair => 2,
        }
    }

    /// Spacing of the flattened dof grid: `h_x` for nodes, `h_x / 2` for
    /// quarter pairs (the quarter points are uniformly spaced).
    #[inline]
    pub fn dof_spacing(self, h_x: f64) -> f64 {
        h_x / self.dof_per_cell() as f64
    }
}

/// A space-time array of dof values, stored slice-major:
/// `values[(l * n_x + j) * dof_per_cell + d]`.
///
/// `n_slices` is the number of stored time levels; a trajectory holds
/// `n_t + 1` slices, a multiplier or residual field holds `n_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    layout: Layout,
    n_x: usize,
    n_slices: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(layout: Layout, n_x: usize, n_slices: usize) -> Self {
        Self {
            layout,
            n_x,
            n_slices,
            values: vec![0.0; n_slices * n_x * layout.dof_per_cell()],
        }
    }

    /// Builds a field by evaluating `f(l, x)` at every dof coordinate.
    pub fn from_fn(
        layout: Layout,
        grid: &SpaceTimeGrid,
        n_slices: usize,
        mut f: impl FnMut(usize, f64) -> f64,
    ) -> Self {
        let mut field = Self::zeros(layout, grid.n_x(), n_slices);
        for l in 0..n_slices {
            for j in 0..grid.n_x() {
                for d in 0..layout.dof_per_cell() {
                    let x = grid.dof_coordinate(layout, j, d);
                    let idx = field.idx(l, j, d);
                    field.values[idx] = f(l, x);
                }
            }
        }
        field
    }

    /// A field constant in time, equal to `slice` on every level.
    pub fn from_constant_extension(
        layout: Layout,
        n_x: usize,
        n_slices: usize,
        slice: &[f64],
    ) -> Self {
        assert_eq!(slice.len(), n_x * layout.dof_per_cell());
        let mut field = Self::zeros(layout, n_x, n_slices);
        for l in 0..n_slices {
            field.slice_mut(l).copy_from_slice(slice);
        }
        field
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    /// Total dofs per time slice.
    pub fn n_dof(&self) -> usize {
        self.n_x * self.layout.dof_per_cell()
    }

    #[inline]
    pub fn idx(&self, l: usize, j: usize, d: usize) -> usize {
        debug_assert!(l < self.n_slices && j < self.n_x && d < self.layout.dof_per_cell());
        (l * self.n_x + j) * self.layout.dof_per_cell() + d
    }

    #[inline]
    pub fn at(&self, l: usize, j: usize, d: usize) -> f64 {
        self.values[self.idx(l, j, d)]
    }

    #[inline]
    pub fn at_mut(&mut self, l: usize, j: usize, d: usize) -> &mut f64 {
        let idx = self.idx(l, j, d);
        &mut self.values[idx]
    }

    pub fn slice(&self, l: usize) -> &[f64] {
        let n = self.n_dof();
        &self.values[l * n..(l + 1) * n]
    }

    pub fn slice_mut(&mut self, l: usize) -> &mut [f64] {
        let n = self.n_dof();
        &mut self.values[l * n..(l + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Flat index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }
}

/// Samples initial data `f(x)` at the dof coordinates of one time slice.
pub fn sample_initial(
    layout: Layout,
    grid: &SpaceTimeGrid,
    mut f: impl FnMut(f64) -> f64,
) -> Vec<f64> {
    let mut slice = vec![0.0; grid.n_x() * layout.dof_per_cell()];
    for j in 0..grid.n_x() {
        for d in 0..layout.dof_per_cell() {
            slice[j * layout.dof_per_cell() + d] = f(grid.dof_coordinate(layout, j, d));
        }
    }
    slice
}

/// Quadrature weight of a single dof: `h_t * h_x` for nodes, `h_t * h_x / 2`
/// for quarter pairs.
pub fn dof_weight(grid: &SpaceTimeGrid, layout: Layout) -> f64 {
    grid.h_t() * layout.dof_spacing(grid.h_x())
}

/// Discrete space-time inner product `sum w * a * b` over all stored dofs.
///
/// Both fields must share layout and shape.  The weight is uniform, so the
/// product is symmetric and positive definite.
pub fn inner_product(grid: &SpaceTimeGrid, a: &Field, b: &Field) -> f64 {
    assert_eq!(a.layout(), b.layout());
    assert_eq!(a.n_x(), b.n_x());
    assert_eq!(a.n_slices(), b.n_slices());
    let w = dof_weight(grid, a.layout());
    w * a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .sum::<f64>()
}

/// Discrete space-time L2 norm.
pub fn weighted_norm(grid: &SpaceTimeGrid, a: &Field) -> f64 {
    inner_product(grid, a, a).sqrt()
}

/// Discrete spatial L2 norm of a single slice (weight `h_x` or `h_x / 2`,
/// no time factor).
pub fn slice_norm(grid: &SpaceTimeGrid, layout: Layout, slice: &[f64]) -> f64 {
    let w = layout.dof_spacing(grid.h_x());
    (w * slice.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn heat_table_grid_spacings() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 16, 0.1, 64).unwrap();
        assert_relative_eq!(g.h_x(), 1.0 / 16.0);
        assert_relative_eq!(g.h_t(), 0.1 / 64.0);
        assert_eq!(g.n_t(), 64);
    }

    #[test]
    fn wide_domain_grid_spacings() {
        let g = SpaceTimeGrid::new(0.0, 2.0, 256, 1.0, 32).unwrap();
        assert_relative_eq!(g.h_x(), 1.0 / 128.0);
        assert_relative_eq!(g.h_t(), 1.0 / 32.0);
    }

    #[test]
    fn smallest_valid_grid() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 2, 1.0, 1).unwrap();
        assert_eq!(g.n_x(), 2);
        assert_eq!(g.n_t(), 1);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert_eq!(
            SpaceTimeGrid::new(0.0, 1.0, 1, 1.0, 4).unwrap_err(),
            GridError::TooFewCells { got: 1 }
        );
        assert_eq!(
            SpaceTimeGrid::new(0.0, 1.0, 8, 1.0, 0).unwrap_err(),
            GridError::NoTimeSteps
        );
        assert!(matches!(
            SpaceTimeGrid::new(1.0, 1.0, 8, 1.0, 4).unwrap_err(),
            GridError::EmptyDomain { .. }
        ));
        assert!(matches!(
            SpaceTimeGrid::new(0.0, 1.0, 8, 0.0, 4).unwrap_err(),
            GridError::NonPositiveHorizon { .. }
        ));
        assert!(matches!(
            SpaceTimeGrid::new(0.0, f64::NAN, 8, 1.0, 4).unwrap_err(),
            GridError::EmptyDomain { .. }
        ));
    }

    #[test]
    fn quarter_points_bracket_cell_centers() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 4, 1.0, 1).unwrap();
        // cell 0 spans [0, 0.25]; center 0.125; quarter points 0.0625, 0.1875
        assert_relative_eq!(g.x_quarter(0, 0), 0.0625);
        assert_relative_eq!(g.x_quarter(0, 1), 0.1875);
        // the flattened quarter-point grid is uniform with spacing h_x / 2
        for j in 0..3 {
            assert_relative_eq!(g.x_quarter(j, 1) - g.x_quarter(j, 0), 0.125);
            assert_relative_eq!(g.x_quarter(j + 1, 0) - g.x_quarter(j, 1), 0.125);
        }
    }

    #[test]
    fn node_sampling_of_sine_wave() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 4, 1.0, 1).unwrap();
        let s = sample_initial(Layout::Node, &g, |x| (2.0 * std::f64::consts::PI * x).sin());
        assert!(s[0].abs() < 1e-15);
        assert_relative_eq!(s[1], 1.0);
        assert!(s[2].abs() < 1e-15);
        assert_relative_eq!(s[3], -1.0);
    }

    #[test]
    fn quarter_sampling_uses_quarter_coordinates() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 2, 1.0, 1).unwrap();
        let s = sample_initial(Layout::QuarterPair, &g, |x| x);
        assert_eq!(s.len(), 4);
        assert_relative_eq!(s[0], 0.125);
        assert_relative_eq!(s[1], 0.375);
        assert_relative_eq!(s[2], 0.625);
        assert_relative_eq!(s[3], 0.875);
    }

    #[test]
    fn inner_product_weights_match_layout() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 16, 0.1, 64).unwrap();
        // constant 1 over all 65 slices: sum = n_slices * n_x * h_t * h_x
        let ones = Field::from_fn(Layout::Node, &g, 65, |_, _| 1.0);
        assert_relative_eq!(
            inner_product(&g, &ones, &ones),
            65.0 * 16.0 * (0.1 / 64.0) * (1.0 / 16.0),
            max_relative = 1e-14
        );
        // quarter-pair layout halves the per-dof weight but doubles the count
        let ones2 = Field::from_fn(Layout::QuarterPair, &g, 65, |_, _| 1.0);
        assert_relative_eq!(
            inner_product(&g, &ones2, &ones2),
            inner_product(&g, &ones, &ones),
            max_relative = 1e-14
        );
    }

    #[test]
    fn inner_product_is_symmetric_and_positive() {
        let g = SpaceTimeGrid::new(0.0, 2.0, 8, 1.0, 3).unwrap();
        let a = Field::from_fn(Layout::QuarterPair, &g, 3, |l, x| (l as f64 + x).sin());
        let b = Field::from_fn(Layout::QuarterPair, &g, 3, |l, x| (2.0 * l as f64 - x).cos());
        assert_relative_eq!(inner_product(&g, &a, &b), inner_product(&g, &b, &a));
        assert!(inner_product(&g, &a, &a) > 0.0);
        assert_relative_eq!(weighted_norm(&g, &a), inner_product(&g, &a, &a).sqrt());
    }

    #[test]
    fn field_indexing_is_slice_major() {
        let mut f = Field::zeros(Layout::QuarterPair, 3, 2);
        *f.at_mut(1, 2, 1) = 7.0;
        assert_eq!(f.values()[(1 * 3 + 2) * 2 + 1], 7.0);
        assert_eq!(f.slice(1)[5], 7.0);
        assert_eq!(f.at(1, 2, 1), 7.0);
    }

    #[test]
    fn wrap_cell_covers_negative_and_large_offsets() {
        let g = SpaceTimeGrid::new(0.0, 1.0, 5, 1.0, 1).unwrap();
        assert_eq!(g.wrap_cell(-1), 4);
        assert_eq!(g.wrap_cell(5), 0);
        assert_eq!(g.wrap_cell(-6), 4);
        assert_eq!(g.wrap_cell(12), 2);
    }

    #[test]
    fn non_finite_detection_reports_first_entry() {
        let mut f = Field::zeros(Layout::Node, 4, 2);
        assert!(f.is_finite());
        *f.at_mut(1, 1, 0) = f64::NAN;
        *f.at_mut(1, 3, 0) = f64::INFINITY;
        assert_eq!(f.first_non_finite(), Some(5));
    }
}
