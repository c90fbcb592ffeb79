//! The stacked operator `𝕃 = [L_1; ...; L_p]`, its normalization and the
//! directly assembled Witten Hamiltonian.

use std::f64::consts::PI;
use std::sync::OnceLock;

use faer::{c64, Mat};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::factors::{assemble_langevin_factors, FactorSet};
use crate::grid::GridSpec;
use crate::potentials::Potential;
use crate::spectral::{dense_from_apply, spectral_laplacian, SpectralDerivative};

/// Largest matrix dimension (columns) for which dense SVD or eigen
/// decompositions are attempted.
pub const DENSE_GUARD: usize = 4096;

pub(crate) fn check_dense(what: &'static str, n: usize) -> Result<()> {
    if n > DENSE_GUARD {
        return Err(Error::GuardExceeded {
            what,
            requested: n,
            limit: DENSE_GUARD,
        });
    }
    Ok(())
}

/// Right singular data of `𝕃`, ascending.
#[derive(Clone, Debug)]
pub struct DenseSvd {
    pub singular_values: Vec<f64>,
    /// Column `k` is the right singular vector of `singular_values[k]`.
    pub right_vectors: Mat<c64>,
}

#[derive(Debug)]
pub struct BlockOperator {
    factor_set: FactorSet,
    alpha: f64,
    svd: OnceLock<DenseSvd>,
}

impl Clone for BlockOperator {
    fn clone(&self) -> Self {
        let svd = OnceLock::new();
        if let Some(s) = self.svd.get() {
            let _ = svd.set(s.clone());
        }
        Self {
            factor_set: self.factor_set.clone(),
            alpha: self.alpha,
            svd,
        }
    }
}

impl BlockOperator {
    pub fn new(factor_set: FactorSet, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            factor_set,
            alpha,
            svd: OnceLock::new(),
        })
    }

    /// Langevin factors of `p` with the domain-adjusted alpha attached.
    pub fn langevin(p: &Potential, beta: f64, grid: &GridSpec) -> Result<Self> {
        let fs = assemble_langevin_factors(p, beta, grid)?;
        Self::new(fs, alpha_normalization(p, grid, beta)?)
    }

    pub fn factor_set(&self) -> &FactorSet {
        &self.factor_set
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &GridSpec {
        self.factor_set.grid()
    }

    /// Number of columns, `N^d` (or `N^{2d}` for replicas).
    pub fn cols(&self) -> usize {
        self.grid().len()
    }

    pub fn rows(&self) -> usize {
        self.cols() * self.factor_set.len()
    }

    /// Stacked `[L_1 v; ...; L_p v]`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.cols();
        let mut out = vec![Complex64::default(); self.rows()];
        for (f, chunk) in self.factor_set.factors().iter().zip(out.chunks_exact_mut(n)) {
            f.apply(v, chunk);
        }
        out
    }

    /// `sum_j L_j^† w_j`.
    pub fn adjoint_apply(&self, w: &[Complex64]) -> Vec<Complex64> {
        let n = self.cols();
        let mut acc = vec![Complex64::default(); n];
        let mut tmp = vec![Complex64::default(); n];
        for (f, chunk) in self.factor_set.factors().iter().zip(w.chunks_exact(n)) {
            f.adjoint_apply(chunk, &mut tmp);
            acc.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        acc
    }

    pub fn witten_apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.factor_set.witten_apply(v)
    }

    pub fn dense(&self) -> Result<Mat<c64>> {
        check_dense("dense block operator", self.cols())?;
        Ok(dense_from_apply(self.rows(), self.cols(), |v, out| {
            out.copy_from_slice(&self.apply(v))
        }))
    }

    /// `𝕃^† 𝕃` materialized column by column.
    pub fn witten_dense(&self) -> Result<Mat<c64>> {
        check_dense("dense Witten Hamiltonian", self.cols())?;
        let mut h = dense_from_apply(self.cols(), self.cols(), |v, out| {
            out.copy_from_slice(&self.witten_apply(v))
        });
        hermitize(&mut h);
        Ok(h)
    }

    /// Thin SVD of the dense `𝕃`, computed once and cached.
    pub fn dense_svd(&self) -> Result<&DenseSvd> {
        if let Some(s) = self.svd.get() {
            return Ok(s);
        }
        let m = self.dense()?;
        let svd = m
            .thin_svd()
            .map_err(|e| Error::LinearAlgebra(format!("svd: {e:?}")))?;
        let s = svd.S().column_vector();
        let k = s.nrows();
        // faer sorts descending; store ascending
        let singular_values: Vec<f64> = (0..k).rev().map(|i| s[i].re).collect();
        let v = svd.V();
        let right_vectors = Mat::from_fn(v.nrows(), k, |i, j| v[(i, k - 1 - j)]);
        let _ = self.svd.set(DenseSvd {
            singular_values,
            right_vectors,
        });
        Ok(self.svd.get().expect("just set"))
    }

    /// Singular values only (cheaper than [`dense_svd`](Self::dense_svd)), ascending.
    pub fn dense_singular_values(&self) -> Result<Vec<f64>> {
        if let Some(s) = self.svd.get() {
            return Ok(s.singular_values.clone());
        }
        let m = self.dense()?;
        let mut s = m
            .singular_values()
            .map_err(|e| Error::LinearAlgebra(format!("singular values: {e:?}")))?;
        s.sort_by(f64::total_cmp);
        Ok(s)
    }
}

pub fn block_operator(fs: FactorSet, alpha: f64) -> Result<BlockOperator> {
    BlockOperator::new(fs, alpha)
}

pub(crate) fn hermitize(h: &mut Mat<c64>) {
    let n = h.nrows();
    for i in 0..n {
        h[(i, i)] = c64::new(h[(i, i)].re, 0.0);
        for j in 0..i {
            let avg = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            h[(i, j)] = avg;
            h[(j, i)] = avg.conj();
        }
    }
}

/// `-(1/beta) Δ + diag(beta |∇V|^2 / 4 - ΔV / 2)`, with `ΔV` obtained by
/// spectrally differentiating the tabulated gradient.
pub fn witten_dense_direct(p: &Potential, beta: f64, grid: &GridSpec) -> Result<Mat<c64>> {
    check_dense("direct Witten Hamiltonian", grid.len())?;
    let n = grid.len();
    let grads = p.gradients_on(grid)?;
    let mut lap_v = vec![0.0; n];
    let mut grad_sq = vec![0.0; n];
    for (axis, g) in grads.iter().enumerate() {
        let d = SpectralDerivative::new(grid, axis)?;
        let mut gc: Vec<Complex64> = g.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        d.apply_in_place(&mut gc);
        for i in 0..n {
            lap_v[i] += gc[i].re;
            grad_sq[i] += g[i] * g[i];
        }
    }
    let mut h = dense_from_apply(n, n, |v, out| {
        let lap = spectral_laplacian(grid, v).expect("grid axes are valid");
        for i in 0..n {
            out[i] = -lap[i] / beta + v[i] * (0.25 * beta * grad_sq[i] - 0.5 * lap_v[i]);
        }
    });
    hermitize(&mut h);
    Ok(h)
}

/// Largest frequency term `pi N sqrt(d / beta) / (2a)` of the single-replica bound.
fn frequency_bound(grid: &GridSpec, beta: f64) -> f64 {
    PI * grid.n() as f64 * (grid.dim() as f64 / beta).sqrt() / (2.0 * grid.half_width())
}

/// Upper bound on `‖𝕃‖` for the Langevin factors on `[-a, a]^d`:
/// `pi N sqrt(d/beta) / (2a) + sqrt(beta) R / 2`.
pub fn alpha_normalization(p: &Potential, grid: &GridSpec, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let r = p.max_gradient_norm(grid)?;
    Ok(frequency_bound(grid, beta) + 0.5 * beta.sqrt() * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::potentials::{cap_above, harmonic, muller_brown, quartic_cosine_1d};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn adjoint_of_apply_is_witten_apply() {
        let g = build_grid(2, 12, 1.5).unwrap();
        let b = BlockOperator::langevin(&muller_brown(), 0.5, &g).unwrap();
        let v = random_vec(b.cols(), 3);
        let lhs = b.adjoint_apply(&b.apply(&v));
        let rhs = b.witten_apply(&v);
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).norm() <= 1e-12 * y.norm().max(1.0));
        }
        assert_eq!(g.len(), 144);
    }

    #[test]
    fn free_alpha_bounds_fourier_modes() {
        let g = build_grid(1, 16, 2.0).unwrap();
        let p = harmonic(1.0, 1);
        // capping below the minimum flattens everything
        let flat = cap_above(&p, -1.0);
        let alpha = alpha_normalization(&flat, &g, 2.0).unwrap();
        let max_freq = PI * 8.0 / 2.0 / 2f64.sqrt();
        assert!(alpha >= max_freq);
        assert!((alpha - max_freq).abs() < 1e-12);
        assert!(alpha_normalization(&p, &g, 2.0).unwrap() > alpha);
    }

    #[test]
    fn alpha_bounds_sigma_max() {
        let g = build_grid(1, 32, 6.0).unwrap();
        let b = BlockOperator::langevin(&harmonic(1.0, 1), 1.0, &g).unwrap();
        let s = b.dense_singular_values().unwrap();
        assert!(*s.last().unwrap() <= b.alpha());
    }

    #[test]
    fn cap_reduces_alpha() {
        let g = build_grid(2, 50, 2.0).unwrap();
        let raw = alpha_normalization(&muller_brown(), &g, 0.4).unwrap();
        let capped = alpha_normalization(&cap_above(&muller_brown(), 5.0), &g, 0.4).unwrap();
        assert!(capped < raw);
    }

    #[test]
    fn dense_guard() {
        let g = build_grid(2, 66, 2.0).unwrap();
        let b = BlockOperator::langevin(&harmonic(1.0, 2), 1.0, &g).unwrap();
        assert!(matches!(b.dense(), Err(Error::GuardExceeded { .. })));
    }

    #[test]
    fn svd_sorted_and_consistent() {
        let g = build_grid(1, 24, 3.0).unwrap();
        let b = BlockOperator::langevin(&quartic_cosine_1d(), 2.0, &g).unwrap();
        let svd = b.dense_svd().unwrap();
        assert!(svd.singular_values.windows(2).all(|w| w[0] <= w[1]));
        let s = b.dense_singular_values().unwrap();
        assert_eq!(s, svd.singular_values);
        // right vector of the smallest singular value is nearly annihilated
        let v0: Vec<Complex64> = (0..b.cols()).map(|i| svd.right_vectors[(i, 0)]).collect();
        let lv = b.apply(&v0);
        assert!((crate::grid::norm(&lv) - svd.singular_values[0]).abs() < 1e-10);
    }
}
