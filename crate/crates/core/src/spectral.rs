//! FFT-based Fourier multipliers along one grid axis.
//!
//! On `[-a, a]` with periodic wrap the integer frequency `xi` corresponds to
//! the wave number `pi xi / a`, so the spectral derivative multiplies mode `xi`
//! by `i pi xi / a`.

use std::sync::Arc;

use faer::{c64, Mat};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Per-axis line FFTs on a row-major grid.
#[derive(Clone)]
pub struct AxisTransform {
    n: usize,
    stride: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AxisTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AxisTransform")
            .field("n", &self.n)
            .field("stride", &self.stride)
            .field("len", &self.len)
            .finish()
    }
}

impl AxisTransform {
    pub fn new(grid: &GridSpec, axis: usize) -> Result<Self> {
        if axis >= grid.dim() {
            return Err(Error::AxisOutOfRange { axis, dim: grid.dim() });
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n: grid.n(),
            stride: grid.stride(axis),
            len: grid.len(),
            forward: planner.plan_fft_forward(grid.n()),
            inverse: planner.plan_fft_inverse(grid.n()),
        })
    }

    /// Applies `x -> IDFT(diag(symbol) DFT x)` along the axis, in place.
    /// `symbol` is indexed in FFT order.
    pub fn apply_in_place(&self, data: &mut [Complex64], symbol: &[Complex64]) {
        debug_assert_eq!(data.len(), self.len);
        debug_assert_eq!(symbol.len(), self.n);
        let n = self.n;
        let inv_n = 1.0 / n as f64;
        let mut scratch =
            vec![Complex64::default(); self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len())];
        if self.stride == 1 {
            for line in data.chunks_exact_mut(n) {
                self.forward.process_with_scratch(line, &mut scratch);
                for (v, s) in line.iter_mut().zip(symbol) {
                    *v *= s * inv_n;
                }
                self.inverse.process_with_scratch(line, &mut scratch);
            }
            return;
        }
        let mut buf = vec![Complex64::default(); n];
        let block = n * self.stride;
        for outer in (0..self.len).step_by(block) {
            for inner in 0..self.stride {
                let base = outer + inner;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = data[base + k * self.stride];
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                for (v, s) in buf.iter_mut().zip(symbol) {
                    *v *= s * inv_n;
                }
                self.inverse.process_with_scratch(&mut buf, &mut scratch);
                for (k, b) in buf.iter().enumerate() {
                    data[base + k * self.stride] = *b;
                }
            }
        }
    }
}

/// Spectral `d/dx_axis` on a periodic grid.
#[derive(Clone, Debug)]
pub struct SpectralDerivative {
    axis: usize,
    transform: AxisTransform,
    symbol: Vec<Complex64>,
    adjoint_symbol: Vec<Complex64>,
}

impl SpectralDerivative {
    pub fn new(grid: &GridSpec, axis: usize) -> Result<Self> {
        let transform = AxisTransform::new(grid, axis)?;
        let symbol: Vec<Complex64> = (0..grid.n())
            .map(|k| Complex64::new(0.0, wave_number(grid, k)))
            .collect();
        let adjoint_symbol = symbol.iter().map(|s| s.conj()).collect();
        Ok(Self {
            axis,
            transform,
            symbol,
            adjoint_symbol,
        })
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    /// `out = D v`.
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(v);
        self.transform.apply_in_place(out, &self.symbol);
    }

    /// `out = D^† v = -D v`.
    pub fn apply_adjoint(&self, v: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(v);
        self.transform.apply_in_place(out, &self.adjoint_symbol);
    }

    pub fn apply_in_place(&self, v: &mut [Complex64]) {
        self.transform.apply_in_place(v, &self.symbol);
    }

    /// Dense matrix of the operator; only sensible for small grids.
    pub fn dense(&self, grid: &GridSpec) -> Mat<c64> {
        dense_from_apply(grid.len(), grid.len(), |v, out| self.apply(v, out))
    }
}

/// `pi xi / a` for FFT slot `k`.
pub fn wave_number(grid: &GridSpec, k: usize) -> f64 {
    std::f64::consts::PI * grid.frequency(k) as f64 / grid.half_width()
}

/// Builds a dense matrix column by column from a matrix-free apply.
pub fn dense_from_apply<F>(rows: usize, cols: usize, apply: F) -> Mat<c64>
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    let mut m = Mat::<c64>::zeros(rows, cols);
    let mut e = vec![Complex64::default(); cols];
    let mut col = vec![Complex64::default(); rows];
    for j in 0..cols {
        e[j] = Complex64::new(1.0, 0.0);
        apply(&e, &mut col);
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
        e[j] = Complex64::default();
    }
    m
}

/// Spectral Laplacian `sum_j D_j^2` applied to `v`.
pub fn spectral_laplacian(grid: &GridSpec, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut acc = vec![Complex64::default(); v.len()];
    for axis in 0..grid.dim() {
        let t = AxisTransform::new(grid, axis)?;
        let symbol: Vec<Complex64> = (0..grid.n())
            .map(|k| Complex64::new(-wave_number(grid, k).powi(2), 0.0))
            .collect();
        let mut w = v.to_vec();
        t.apply_in_place(&mut w, &symbol);
        acc.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
    }
    Ok(acc)
}
