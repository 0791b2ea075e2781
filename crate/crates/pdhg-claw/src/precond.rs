//! Dual-step preconditioner `K` for the saddle-point iteration: a
//! positive-definite space-time operator, cheap to invert exactly, whose
//! energy tracks that of the forward stencil's normal operator.  Each
//! coefficient family gets the closure that serves it best; both are
//! strictly positive definite, so no nullspace handling is ever needed.
//!
//! **Linear laws** (advection `a`, diffusion bound `g`) use the factored
//! normal operator `K = B * B^T` of the one-sided implicit stencil
//!
//! ```text
//! (B v)^l = (v^l - v^{l-1}) / h_t + a * (U_x v^l) + g * (L_x v^l),   v^{-1} = 0,
//! ```
//!
//! with `U_x` the periodic first difference biased against the flow
//! (upwind) and `L_x` the negated periodic second difference.  The upwind
//! bias matters: its symbol's squared magnitude is `a^2 * omega(k)`, the
//! full spatial energy `-a^2 * Laplacian`, so the factor dominates
//! dissipative (upwind / discontinuous-Galerkin) flux stencils as well as
//! smooth ones, which a centered difference — whose symbol vanishes at
//! the grid's highest frequency — would not.  Under the spatial FFT each
//! mode `k` reduces `B` to an `M x M` lower bidiagonal block with
//! sub-diagonal `-1/h_t` and diagonal
//!
//! ```text
//! beta_k = 1/h_t + g*omega(k) + |a|*eta(k) + i*a*sigma(k),
//! ```
//!
//! where `sigma(k) = sin(t_k)/dx`, `eta(k) = (1 - cos(t_k))/dx`, and
//! `omega(k) = (2 - 2cos(t_k))/dx^2` at angle `t_k = 2*pi*k/n`.  Since
//! `Re beta_k >= 1/h_t > 0`, solving `K z = r` is exact: an FFT per time
//! slice, a forward and a backward substitution per mode (`O(M)` each),
//! and an inverse FFT.  Because the factored closure carries the full
//! time-space cross term, it keeps the iteration's contraction rate
//! mesh-uniform for the implicit diffusion runs.
//!
//! **Nonlinear laws** (wave-speed bound `c`) use the classical diagonal
//! closure: the separable stencil `K = T_t / h_t^2 + c^2 * L_x`, where
//! `T_t = tridiag(-1, [1, 2, .., 2], -1)` is the squared backward time
//! difference with free start and fixed end.  It diagonalizes in the
//! product basis of quarter-shifted cosines in time and Fourier modes in
//! space with symbol `lambda_t(m) + c^2 * omega(k)`, so solving is three
//! transforms and a pointwise division.  For a genuinely nonlinear flux
//! the factor's cross term would model a coupling the linearized-at-bound
//! operator does not actually have; the diagonal closure is the
//! established choice there, and its damping of the dual step is part of
//! the method's observed iteration behavior on shock-forming problems.

use crate::error::PrecondError;
use crate::grid::{Field, Layout, SpaceTimeGrid};
use crate::transforms::SpectralPlans;
use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;

/// Unknown-count ceiling for the dense reference routines.
const DENSE_GUARD: usize = 10_000;

/// Coefficient bounds that shape the preconditioner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KKind {
    /// Linear flux: signed advection speed plus a diffusion bound.
    LinearLaw { advection: f64, viscosity_bound: f64 },
    /// Nonlinear flux: only a bound on the characteristic speed remains.
    NonlinearLaw { wave_speed: f64 },
}

/// Upper bound of a sampled diffusion coefficient (its half-point values).
pub fn estimate_viscosity_bound(gamma_half: &[f64]) -> f64 {
    gamma_half.iter().copied().fold(0.0, f64::max)
}

/// Precomputed spectral data for the closure a coefficient family uses.
enum Closure {
    /// `K = B * B^T`: diagonal entry of the lower-bidiagonal time block
    /// for each spatial mode (linear laws).
    Factored { beta: Vec<Complex64> },
    /// Separable symbol `lambda_t(m) + c^2 * omega(k)`, mode-major in
    /// time, in the quarter-cosine x Fourier product basis (nonlinear
    /// laws).
    Diagonal { symbol: Vec<f64> },
}

/// The dual-step operator `K` described in the module docs, with its
/// transform plans and per-mode spectral data precomputed.
pub struct KOperator {
    kind: KKind,
    layout: Layout,
    n_x: usize,
    n_dof: usize,
    m_time: usize,
    h_t: f64,
    dx: f64,
    closure: Closure,
    plans: SpectralPlans,
}

impl KOperator {
    /// Builds the operator for `n_t` slices of `n_x * dof_per_cell`
    /// unknowns each.
    pub fn build(kind: KKind, grid: &SpaceTimeGrid, layout: Layout) -> Self {
        let n_x = grid.n_x();
        let n_dof = n_x * layout.dof_per_cell();
        let m_time = grid.n_t();
        let h_t = grid.h_t();
        let dx = layout.dof_spacing(grid.h_x());
        let space_angle = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / n_dof as f64;
        let closure = match kind {
            KKind::LinearLaw {
                advection,
                viscosity_bound,
            } => {
                let beta = (0..n_dof)
                    .map(|k| {
                        let angle = space_angle(k);
                        let sigma = angle.sin() / dx;
                        let eta = (1.0 - angle.cos()) / dx;
                        let omega = (2.0 - 2.0 * angle.cos()) / (dx * dx);
                        Complex64::new(
                            1.0 / h_t + viscosity_bound * omega + advection.abs() * eta,
                            advection * sigma,
                        )
                    })
                    .collect();
                Closure::Factored { beta }
            }
            KKind::NonlinearLaw { wave_speed } => {
                let c_sq = wave_speed * wave_speed;
                let doubled = (2 * m_time + 1) as f64;
                let mut symbol = Vec::with_capacity(n_dof * m_time);
                for mode in 0..m_time {
                    let theta = std::f64::consts::PI * (2 * mode + 1) as f64 / doubled;
                    let lambda_t = (2.0 - 2.0 * theta.cos()) / (h_t * h_t);
                    for k in 0..n_dof {
                        let omega = (2.0 - 2.0 * space_angle(k).cos()) / (dx * dx);
                        symbol.push(lambda_t + c_sq * omega);
                    }
                }
                Closure::Diagonal { symbol }
            }
        };
        Self {
            kind,
            layout,
            n_x,
            n_dof,
            m_time,
            h_t,
            dx,
            closure,
            plans: SpectralPlans::new(n_dof, m_time),
        }
    }

    pub fn kind(&self) -> KKind {
        self.kind
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Number of time slices the operator acts on.
    pub fn slice_count(&self) -> usize {
        self.m_time
    }

    /// Total unknowns per application.
    pub fn unknowns(&self) -> usize {
        self.n_dof * self.m_time
    }

    fn check_shape(&self, field: &Field) -> Result<(), PrecondError> {
        if field.n_slices() != self.m_time {
            return Err(PrecondError::SliceCountMismatch {
                got: field.n_slices(),
                expected: self.m_time,
            });
        }
        debug_assert_eq!(field.layout(), self.layout);
        debug_assert_eq!(field.n_x(), self.n_x);
        Ok(())
    }

    /// Lifts a real field into its per-slice spatial Fourier coefficients.
    fn to_modes(&self, field: &Field) -> Vec<Complex64> {
        let mut hat: Vec<Complex64> = field
            .values()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        for l in 0..self.m_time {
            self.plans
                .fft_forward(&mut hat[l * self.n_dof..(l + 1) * self.n_dof]);
        }
        hat
    }

    /// Inverse of [`Self::to_modes`]; the imaginary parts vanish to
    /// roundoff because the mode data keeps its conjugate symmetry.
    fn from_modes(&self, mut hat: Vec<Complex64>) -> Field {
        let mut out = Field::zeros(self.layout, self.n_x, self.m_time);
        for l in 0..self.m_time {
            let range = l * self.n_dof..(l + 1) * self.n_dof;
            self.plans.fft_inverse(&mut hat[range.clone()]);
            for (dst, src) in out.slice_mut(l).iter_mut().zip(&hat[range]) {
                *dst = src.re;
            }
        }
        out
    }

    /// Applies `K` exactly.
    pub fn apply(&self, v: &Field) -> Result<Field, PrecondError> {
        self.check_shape(v)?;
        match &self.closure {
            Closure::Factored { beta } => Ok(self.factored_apply(v, beta)),
            Closure::Diagonal { symbol } => Ok(self.product_basis_scale(v, symbol, false)),
        }
    }

    /// Solves `K z = rhs` exactly.
    pub fn solve(&self, rhs: &Field) -> Result<Field, PrecondError> {
        self.check_shape(rhs)?;
        match &self.closure {
            Closure::Factored { beta } => Ok(self.factored_solve(rhs, beta)),
            Closure::Diagonal { symbol } => Ok(self.product_basis_scale(rhs, symbol, true)),
        }
    }

    /// `K v = B * B^T v`: two bidiagonal sweeps per spatial mode.
    fn factored_apply(&self, v: &Field, beta: &[Complex64]) -> Field {
        let n = self.n_dof;
        let m = self.m_time;
        let inv_ht = 1.0 / self.h_t;
        let mut hat = self.to_modes(v);
        for (k, &beta) in beta.iter().enumerate() {
            let beta_c = beta.conj();
            // w = B^H v: ascending, so the not-yet-overwritten entry
            // above is still the original (terminal ghost slice is zero).
            for l in 0..m {
                let idx = l * n + k;
                let above = if l + 1 < m {
                    hat[idx + n]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                hat[idx] = beta_c * hat[idx] - above * inv_ht;
            }
            // out = B w: descending, so the entry below is still `w`.
            for l in (0..m).rev() {
                let idx = l * n + k;
                let below = if l > 0 {
                    hat[idx - n]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                hat[idx] = beta * hat[idx] - below * inv_ht;
            }
        }
        self.from_modes(hat)
    }

    /// `K^{-1} rhs`: forward substitution through `B`, then backward
    /// substitution through `B^H`, per spatial mode.
    fn factored_solve(&self, rhs: &Field, beta: &[Complex64]) -> Field {
        let n = self.n_dof;
        let m = self.m_time;
        let inv_ht = 1.0 / self.h_t;
        let mut hat = self.to_modes(rhs);
        for (k, &beta) in beta.iter().enumerate() {
            let beta_c = beta.conj();
            let mut carry = Complex64::new(0.0, 0.0);
            for l in 0..m {
                let idx = l * n + k;
                carry = (hat[idx] + carry * inv_ht) / beta;
                hat[idx] = carry;
            }
            carry = Complex64::new(0.0, 0.0);
            for l in (0..m).rev() {
                let idx = l * n + k;
                carry = (hat[idx] + carry * inv_ht) / beta_c;
                hat[idx] = carry;
            }
        }
        self.from_modes(hat)
    }

    /// Multiplies (or, with `invert`, divides) by the separable symbol in
    /// the quarter-cosine (time) x Fourier (space) product basis: time
    /// analysis per dof column, spatial FFT per time mode, pointwise
    /// scale, and the two syntheses back.
    fn product_basis_scale(&self, v: &Field, symbol: &[f64], invert: bool) -> Field {
        let n = self.n_dof;
        let m = self.m_time;
        let mut coeffs = vec![0.0; n * m];
        let mut column = vec![0.0; m];
        let mut transformed = vec![0.0; m];
        for d in 0..n {
            for (l, slot) in column.iter_mut().enumerate() {
                *slot = v.slice(l)[d];
            }
            self.plans.mixed_cosine(&column, &mut transformed);
            for (mode, &c) in transformed.iter().enumerate() {
                coeffs[mode * n + d] = c;
            }
        }
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        for mode in 0..m {
            let base = mode * n;
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = Complex64::new(coeffs[base + k], 0.0);
            }
            self.plans.fft_forward(&mut row);
            for (k, slot) in row.iter_mut().enumerate() {
                let s = symbol[base + k];
                *slot = if invert { *slot / s } else { *slot * s };
            }
            self.plans.fft_inverse(&mut row);
            for (k, slot) in row.iter().enumerate() {
                coeffs[base + k] = slot.re;
            }
        }
        let mut out = Field::zeros(self.layout, self.n_x, m);
        for d in 0..n {
            for (mode, slot) in column.iter_mut().enumerate() {
                *slot = coeffs[mode * n + d];
            }
            self.plans.mixed_cosine_inverse(&column, &mut transformed);
            for (l, &val) in transformed.iter().enumerate() {
                out.slice_mut(l)[d] = val;
            }
        }
        out
    }

    /// Dense assembly of the implicit factor `B` (slice-major blocks;
    /// linear laws only).
    fn dense_factor(&self, advect: f64, diffuse: f64) -> DMatrix<f64> {
        let n = self.n_dof;
        let total = self.unknowns();
        let inv_ht = 1.0 / self.h_t;
        let up = advect.abs() / self.dx;
        let inv_dx2 = 1.0 / (self.dx * self.dx);
        let mut factor = DMatrix::<f64>::zeros(total, total);
        for l in 0..self.m_time {
            for i in 0..n {
                let row = l * n + i;
                let right = l * n + (i + 1) % n;
                let left = l * n + (i + n - 1) % n;
                let upstream = if advect >= 0.0 { left } else { right };
                factor[(row, row)] += inv_ht + up + 2.0 * diffuse * inv_dx2;
                factor[(row, upstream)] -= up;
                factor[(row, right)] -= diffuse * inv_dx2;
                factor[(row, left)] -= diffuse * inv_dx2;
                if l > 0 {
                    factor[(row, row - n)] -= inv_ht;
                }
            }
        }
        factor
    }

    /// Dense assembly of the separable stencil `T_t / h_t^2 + c^2 * L_x`
    /// (nonlinear laws only).
    fn dense_separable(&self, wave_speed: f64) -> DMatrix<f64> {
        let n = self.n_dof;
        let total = self.unknowns();
        let inv_ht2 = 1.0 / (self.h_t * self.h_t);
        let c2_inv_dx2 = wave_speed * wave_speed / (self.dx * self.dx);
        let mut matrix = DMatrix::<f64>::zeros(total, total);
        for l in 0..self.m_time {
            for i in 0..n {
                let row = l * n + i;
                // Squared backward time difference with free start and
                // fixed (ghost-zero) end: diagonal 1 on the first slice,
                // 2 elsewhere, off-diagonals -1.
                let time_diag = if l == 0 { 1.0 } else { 2.0 };
                matrix[(row, row)] += time_diag * inv_ht2 + 2.0 * c2_inv_dx2;
                if l > 0 {
                    matrix[(row, row - n)] -= inv_ht2;
                }
                if l + 1 < self.m_time {
                    matrix[(row, row + n)] -= inv_ht2;
                }
                matrix[(row, l * n + (i + 1) % n)] -= c2_inv_dx2;
                matrix[(row, l * n + (i + n - 1) % n)] -= c2_inv_dx2;
            }
        }
        matrix
    }

    /// Dense assembly of `K` for cross-checking the spectral route.
    /// Guarded: refuses more than `10^4` unknowns.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>, PrecondError> {
        let total = self.unknowns();
        if total > DENSE_GUARD {
            return Err(PrecondError::SizeGuardExceeded { unknowns: total });
        }
        Ok(match self.kind {
            KKind::LinearLaw {
                advection,
                viscosity_bound,
            } => {
                let factor = self.dense_factor(advection, viscosity_bound);
                &factor * factor.transpose()
            }
            KKind::NonlinearLaw { wave_speed } => self.dense_separable(wave_speed),
        })
    }

    /// Solves `K z = rhs` through the dense assembly (Cholesky), as an
    /// independent reference for the FFT route.  Same size guard as
    /// [`Self::dense_matrix`].
    pub fn solve_direct(&self, rhs: &Field) -> Result<Field, PrecondError> {
        self.check_shape(rhs)?;
        let matrix = self.dense_matrix()?;
        let chol = matrix
            .cholesky()
            .expect("both closures are positive definite by construction");
        let solution = chol.solve(&DVector::from_column_slice(rhs.values()));
        let mut out = Field::zeros(self.layout, self.n_x, self.m_time);
        out.values_mut().copy_from_slice(solution.as_slice());
        Ok(out)
    }

    /// Energy `<v, K v>` in the weighted space-time inner product,
    /// evaluated as a first-difference quadrature (no FFT, no dense
    /// matrix).  For linear laws this is `cell * |B^T v|^2`; for
    /// nonlinear laws, `cell` times the squared time and space
    /// differences of the separable stencil.
    pub fn h_norm_sq(&self, v: &Field) -> Result<f64, PrecondError> {
        self.check_shape(v)?;
        let n = self.n_dof;
        let inv_ht = 1.0 / self.h_t;
        let inv_dx2 = 1.0 / (self.dx * self.dx);
        let cell = self.dx * self.h_t;
        let mut total = 0.0;
        match self.kind {
            KKind::LinearLaw {
                advection,
                viscosity_bound,
            } => {
                let up = advection.abs() / self.dx;
                for l in 0..self.m_time {
                    let cur = v.slice(l);
                    let next = (l + 1 < self.m_time).then(|| v.slice(l + 1));
                    for i in 0..n {
                        let right = cur[(i + 1) % n];
                        let left = cur[(i + n - 1) % n];
                        let ahead = next.map_or(0.0, |s| s[i]);
                        // Row of B^T: the time difference and the upwind
                        // bias both reverse direction under transposition.
                        let downstream = if advection >= 0.0 { right } else { left };
                        let row = (cur[i] - ahead) * inv_ht
                            + up * (cur[i] - downstream)
                            + viscosity_bound * (2.0 * cur[i] - right - left) * inv_dx2;
                        total += cell * row * row;
                    }
                }
            }
            KKind::NonlinearLaw { wave_speed } => {
                let c2 = wave_speed * wave_speed;
                for l in 0..self.m_time {
                    let cur = v.slice(l);
                    let next = (l + 1 < self.m_time).then(|| v.slice(l + 1));
                    for i in 0..n {
                        let right = cur[(i + 1) % n];
                        let ahead = next.map_or(0.0, |s| s[i]);
                        let time_diff = (cur[i] - ahead) * inv_ht;
                        let space_diff_sq = (right - cur[i]) * (right - cur[i]) * inv_dx2;
                        total += cell * (time_diff * time_diff + c2 * space_diff_sq);
                    }
                }
            }
        }
        Ok(total)
    }
}
