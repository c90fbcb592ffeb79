//! Periodic tensor-product grids on `c + [-a, a]^d` and unit-norm states on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Potential;

/// Largest number of grid points a single grid may hold.
pub const GRID_GUARD: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    half_width: f64,
    /// Box center per axis; empty means the origin.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    center: Vec<f64>,
}

impl GridSpec {
    /// `n` points per axis on `[-a, a)` with periodic wrap. `n` must be even
    /// and at least 4.
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be positive".into()));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("points per axis must be even and >= 4, got {n}")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        let len = checked_pow(n, dim).filter(|&l| l <= GRID_GUARD).ok_or(Error::GuardExceeded {
            what: "grid",
            requested: checked_pow(n, dim).unwrap_or(usize::MAX),
            limit: GRID_GUARD,
        })?;
        debug_assert!(len > 0);
        Ok(Self {
            dim,
            n,
            half_width,
            center: Vec::new(),
        })
    }

    /// Same grid translated to `center + [-a, a]^d`. Derivative operators are
    /// unaffected by the shift.
    pub fn with_center(mut self, center: &[f64]) -> Result<Self> {
        if center.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: center.len(),
            });
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGrid("center must be finite".into()));
        }
        self.center = if center.iter().all(|&c| c == 0.0) { Vec::new() } else { center.to_vec() };
        Ok(self)
    }

    pub fn center(&self, axis: usize) -> f64 {
        self.center.get(axis).copied().unwrap_or(0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Total number of points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of the `k`-th node along `axis`.
    pub fn coordinate(&self, axis: usize, k: usize) -> f64 {
        self.center(axis) - self.half_width + k as f64 * self.spacing()
    }

    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        (0..self.n).map(|k| self.coordinate(axis, k)).collect()
    }

    /// Lower and upper edge of the box along `axis`.
    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        let c = self.center(axis);
        (c - self.half_width, c + self.half_width)
    }

    /// Integer frequency stored at FFT-order slot `k`: `0..n/2-1` then `-n/2..-1`.
    pub fn frequency(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Inverse of [`frequency`](Self::frequency).
    pub fn frequency_slot(&self, xi: i64) -> Option<usize> {
        let n = self.n as i64;
        if xi < -n / 2 || xi >= n / 2 {
            return None;
        }
        Some(if xi >= 0 { xi as usize } else { (xi + n) as usize })
    }

    /// Stride of `axis` in the row-major layout (axis 0 slowest).
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, mut index: usize, out: &mut [usize]) {
        for axis in (0..self.dim).rev() {
            out[axis] = index % self.n;
            index /= self.n;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.n + k)
    }

    pub fn point_into(&self, index: usize, out: &mut [f64]) {
        let mut rem = index;
        for axis in (0..self.dim).rev() {
            out[axis] = self.coordinate(axis, rem % self.n);
            rem /= self.n;
        }
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.point_into(index, &mut x);
        x
    }

    /// Same axis discretization with `dim * factor` axes (the replica grid).
    pub fn power(&self, factor: usize) -> Result<Self> {
        let g = Self::new(self.dim * factor, self.n, self.half_width)?;
        let c: Vec<f64> = (0..self.dim * factor).map(|k| self.center(k % self.dim)).collect();
        g.with_center(&c)
    }

    /// Same domain with `m` points per axis.
    pub fn refined(&self, m: usize) -> Result<Self> {
        let c: Vec<f64> = (0..self.dim).map(|k| self.center(k)).collect();
        Self::new(self.dim, m, self.half_width)?.with_center(&c)
    }
}

pub fn build_grid(dim: usize, n: usize, half_width: f64) -> Result<GridSpec> {
    GridSpec::new(dim, n, half_width)
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

/// Unit-norm complex amplitudes over a grid.
#[derive(Clone, Debug)]
pub struct WaveState {
    amplitudes: Vec<Complex64>,
    grid: GridSpec,
}

impl WaveState {
    /// Normalizes `amplitudes`; fails if they are all zero.
    pub fn new(amplitudes: Vec<Complex64>, grid: GridSpec) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: amplitudes.len(),
            });
        }
        let mut state = Self { amplitudes, grid };
        let norm = state.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Underflow);
        }
        state.scale(1.0 / norm);
        Ok(state)
    }

    pub fn from_real(values: &[f64], grid: GridSpec) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), grid)
    }

    /// `sqrt(density)` on the grid, normalized.
    pub fn from_density(density: &[f64], grid: GridSpec) -> Result<Self> {
        Self::new(
            density.iter().map(|&p| Complex64::new(p.max(0.0).sqrt(), 0.0)).collect(),
            grid,
        )
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    fn scale(&mut self, s: f64) {
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
    }

    /// Probabilities `|amplitude|^2`, summing to one.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &WaveState) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("states live on different grids".into()));
        }
        Ok(dot(&self.amplitudes, &other.amplitudes))
    }
}

/// `sum conj(a_i) b_i`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Unnormalized Gibbs weights `exp(-beta (V - min V))` on the grid.
pub fn gibbs_weights(p: &Potential, beta: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    let values = p.values_on(grid)?;
    let vmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(values.iter().map(|v| (-beta * (v - vmin)).exp()).collect())
}

/// Encoded Gibbs state with amplitudes proportional to `exp(-beta V / 2)`.
pub fn gibbs_state(p: &Potential, beta: f64, grid: &GridSpec) -> Result<WaveState> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
    }
    let weights = gibbs_weights(p, beta, grid)?;
    WaveState::from_density(&weights, grid.clone())
}

/// Gibbs probability masses on the grid (sum to one).
pub fn gibbs_probabilities(p: &Potential, beta: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    let w = gibbs_weights(p, beta, grid)?;
    let z: f64 = w.iter().sum();
    if !(z > 0.0) {
        return Err(Error::Underflow);
    }
    Ok(w.iter().map(|x| x / z).collect())
}

/// Normalized Gaussian state `sqrt(N(center, std^2 I))` sampled on the grid.
pub fn gaussian_state(center: &[f64], std: f64, grid: &GridSpec) -> Result<WaveState> {
    if center.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: center.len(),
        });
    }
    let mut x = vec![0.0; grid.dim()];
    let density: Vec<f64> = (0..grid.len())
        .map(|i| {
            grid.point_into(i, &mut x);
            let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            (-0.5 * r2 / (std * std)).exp()
        })
        .collect();
    WaveState::from_density(&density, grid.clone())
}
