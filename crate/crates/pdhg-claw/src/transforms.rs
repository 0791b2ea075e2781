//! Transforms used by the preconditioner solves.
//!
//! Space is periodic, so the spatial direction diagonalizes under a plain
//! complex FFT over the ring of degrees of freedom.  The time direction
//! of the diagonal-symbol preconditioner diagonalizes under quarter-
//! shifted cosines `cos(theta_m (l + 1/2))`, `theta_m = pi (2m+1)/(2M+1)`
//! — the eigenvectors of the squared backward time difference with a free
//! start and a fixed end.  That analysis kernel is symmetric with
//! `G^2 = ((2M+1)/4) I`, so the inverse is the forward transform rescaled.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Pre-planned transforms for one spatial ring size and slice count.
pub struct SpectralPlans {
    n_space: usize,
    m_time: usize,
    space_fwd: Arc<dyn Fft<f64>>,
    space_inv: Arc<dyn Fft<f64>>,
    /// Length `2 (2M+1)` plan evaluating the quarter-shifted cosine sums.
    time_fwd: Arc<dyn Fft<f64>>,
}

impl SpectralPlans {
    pub fn new(n_space: usize, m_time: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_space,
            m_time,
            space_fwd: planner.plan_fft_forward(n_space),
            space_inv: planner.plan_fft_inverse(n_space),
            time_fwd: planner.plan_fft_forward(2 * (2 * m_time + 1)),
        }
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn m_time(&self) -> usize {
        self.m_time
    }

    /// Unnormalized forward FFT in place.
    pub fn fft_forward(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n_space);
        self.space_fwd.process(buf);
    }

    /// Normalized inverse FFT in place (`ifft(fft(x)) = x`).
    pub fn fft_inverse(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n_space);
        self.space_inv.process(buf);
        let scale = 1.0 / self.n_space as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Quarter-shifted cosine analysis:
    /// `out[m] = sum_l input[l] * cos(theta_m (l + 1/2))`.
    ///
    /// Evaluated by zero-padding the `M` samples into a length `2 (2M+1)`
    /// FFT and reading the odd bins with a half-sample twiddle.
    pub fn mixed_cosine(&self, input: &[f64], out: &mut [f64]) {
        let m = self.m_time;
        debug_assert_eq!(input.len(), m);
        debug_assert_eq!(out.len(), m);
        let doubled = 2 * (2 * m + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); doubled];
        for (slot, &v) in buf.iter_mut().zip(input) {
            *slot = Complex64::new(v, 0.0);
        }
        self.time_fwd.process(&mut buf);
        for (mode, slot) in out.iter_mut().enumerate() {
            let angle = -std::f64::consts::PI * (2 * mode + 1) as f64 / doubled as f64;
            *slot = (Complex64::from_polar(1.0, angle) * buf[2 * mode + 1]).re;
        }
    }

    /// Inverse of [`Self::mixed_cosine`]: the same symmetric kernel scaled
    /// by `4 / (2M+1)`.
    pub fn mixed_cosine_inverse(&self, input: &[f64], out: &mut [f64]) {
        self.mixed_cosine(input, out);
        let scale = 4.0 / (2 * self.m_time + 1) as f64;
        for v in out.iter_mut() {
            *v *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mixed_cosine_matches_naive_evaluation() {
        let m = 7;
        let plans = SpectralPlans::new(4, m);
        let input: Vec<f64> = (0..m).map(|l| (l as f64 * 0.9).sin() - 0.4).collect();
        let mut fast = vec![0.0; m];
        plans.mixed_cosine(&input, &mut fast);
        for mode in 0..m {
            let theta = std::f64::consts::PI * (2 * mode + 1) as f64 / (2 * m + 1) as f64;
            let naive: f64 = input
                .iter()
                .enumerate()
                .map(|(l, &v)| v * (theta * (l as f64 + 0.5)).cos())
                .sum();
            assert_relative_eq!(fast[mode], naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixed_cosine_inverse_round_trips() {
        let m = 9;
        let plans = SpectralPlans::new(4, m);
        let input: Vec<f64> = (0..m).map(|l| (l as f64 * 1.7).cos() + 0.1).collect();
        let mut coeffs = vec![0.0; m];
        let mut back = vec![0.0; m];
        plans.mixed_cosine(&input, &mut coeffs);
        plans.mixed_cosine_inverse(&coeffs, &mut back);
        for (a, b) in back.iter().zip(&input) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixed_cosine_diagonalizes_free_start_fixed_end_difference() {
        // The basis vectors are eigenvectors of
        // tridiag(-1, [1, 2, .., 2], -1): free start, zero ghost at the end.
        let m = 6;
        let plans = SpectralPlans::new(4, m);
        for mode in 0..m {
            let theta = std::f64::consts::PI * (2 * mode + 1) as f64 / (2 * m + 1) as f64;
            let lambda = 2.0 - 2.0 * theta.cos();
            let v: Vec<f64> = (0..m).map(|l| (theta * (l as f64 + 0.5)).cos()).collect();
            for l in 0..m {
                let diag = if l == 0 { 1.0 } else { 2.0 };
                let below = if l > 0 { v[l - 1] } else { 0.0 };
                let above = if l + 1 < m { v[l + 1] } else { 0.0 };
                assert_relative_eq!(
                    diag * v[l] - below - above,
                    lambda * v[l],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn fft_inverse_is_normalized() {
        let plans = SpectralPlans::new(12, 3);
        let signal: Vec<Complex64> = (0..12)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut buf = signal.clone();
        plans.fft_forward(&mut buf);
        plans.fft_inverse(&mut buf);
        for (a, b) in buf.iter().zip(&signal) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-12);
            assert_relative_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_transform_matches_naive_dft() {
        let n = 9usize;
        let plans = SpectralPlans::new(n, 2);
        let signal: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin() + 0.2).collect();
        let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        plans.fft_forward(&mut buf);
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &v) in signal.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                acc += Complex64::from_polar(v, angle);
            }
            assert_relative_eq!(buf[k].re, acc.re, epsilon = 1e-10);
            assert_relative_eq!(buf[k].im, acc.im, epsilon = 1e-10);
        }
    }
}
