//! Replica exchange: joint grid, swap permutation and the `2d + 1` factors
//! of the generalized Witten Laplacian.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::block::BlockOperator;
use crate::error::{Error, Result};
use crate::factors::{Factor, FactorKind, FactorSet, LangevinFactor, SwapFactor};
use crate::grid::{gibbs_state, GridSpec, WaveState};
use crate::potentials::Potential;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReldParams {
    pub beta: f64,
    pub beta_prime: f64,
    pub mu: f64,
    pub base_grid: GridSpec,
}

impl ReldParams {
    /// Requires `beta >= beta_prime > 0` and `mu >= 0`. Equal temperatures are
    /// allowed as a degenerate case.
    pub fn new(beta: f64, beta_prime: f64, mu: f64, base_grid: GridSpec) -> Result<Self> {
        if !(beta_prime > 0.0) || !(beta >= beta_prime) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need beta >= beta' > 0, got beta = {beta}, beta' = {beta_prime}"
            )));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("swap intensity must be >= 0, got {mu}")));
        }
        Ok(Self {
            beta,
            beta_prime,
            mu,
            base_grid,
        })
    }

    pub fn joint_grid(&self) -> Result<GridSpec> {
        self.base_grid.power(2)
    }
}

/// `exp(min(0, (beta - beta') (V(x) - V(y))))` from two potential values.
pub fn swap_rate_from_values(beta: f64, beta_prime: f64, vx: f64, vy: f64) -> f64 {
    ((beta - beta_prime) * (vx - vy)).min(0.0).exp()
}

pub fn swap_rate(p: &Potential, params: &ReldParams, x: &[f64], y: &[f64]) -> f64 {
    swap_rate_from_values(params.beta, params.beta_prime, p.value(x), p.value(y))
}

/// `(x, y) -> (y, x)` on a row-major joint grid (x slow, y fast).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapPermutation {
    base_len: usize,
}

impl SwapPermutation {
    pub fn new(joint: &GridSpec) -> Result<Self> {
        if joint.dim() % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "joint grid must have an even number of axes, got {}",
                joint.dim()
            )));
        }
        Ok(Self {
            base_len: joint.n().pow((joint.dim() / 2) as u32),
        })
    }

    pub fn len(&self) -> usize {
        self.base_len * self.base_len
    }

    pub fn is_empty(&self) -> bool {
        self.base_len == 0
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn index(&self, i: usize) -> usize {
        let (ix, iy) = (i / self.base_len, i % self.base_len);
        iy * self.base_len + ix
    }

    pub fn apply<T: Copy>(&self, v: &[T], out: &mut [T]) {
        let m = self.base_len;
        for ix in 0..m {
            for iy in 0..m {
                out[ix * m + iy] = v[iy * m + ix];
            }
        }
    }
}

pub fn swap_permutation(joint: &GridSpec) -> Result<SwapPermutation> {
    SwapPermutation::new(joint)
}

/// Langevin factors in x at `beta`, in y at `beta'`, then the swap factor.
pub fn assemble_reld_factors(p: &Potential, params: &ReldParams) -> Result<FactorSet> {
    let base = &params.base_grid;
    let d = base.dim();
    if p.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
    }
    let joint = params.joint_grid()?;
    let m = base.len();
    let grads = p.gradients_on(base)?;
    let values = p.values_on(base)?;

    let mut factors = Vec::with_capacity(2 * d + 1);
    for (j, g) in grads.iter().enumerate() {
        let drift: Vec<f64> = (0..m * m).map(|i| g[i / m]).collect();
        factors.push(Factor::Langevin(LangevinFactor::new(&joint, j, drift, params.beta)?));
    }
    for (j, g) in grads.iter().enumerate() {
        let drift: Vec<f64> = (0..m * m).map(|i| g[i % m]).collect();
        factors.push(Factor::Langevin(LangevinFactor::new(&joint, d + j, drift, params.beta_prime)?));
    }
    let sqrt_rate: Vec<f64> = (0..m * m)
        .map(|i| swap_rate_from_values(params.beta, params.beta_prime, values[i / m], values[i % m]).sqrt())
        .collect();
    factors.push(Factor::Swap(SwapFactor::new(params.mu, sqrt_rate, SwapPermutation::new(&joint)?)?));
    Ok(FactorSet::new(factors, params.beta, joint, FactorKind::Reld))
}

/// `sqrt(sigma_beta) ⊗ sqrt(sigma_beta')` on the joint grid.
pub fn joint_gibbs_state(p: &Potential, params: &ReldParams) -> Result<WaveState> {
    let base = &params.base_grid;
    let sx = gibbs_state(p, params.beta, base)?;
    let sy = gibbs_state(p, params.beta_prime, base)?;
    let amps: Vec<Complex64> = sx
        .amplitudes()
        .iter()
        .flat_map(|a| sy.amplitudes().iter().map(move |b| a * b))
        .collect();
    WaveState::new(amps, params.joint_grid()?)
}

/// Domain-adjusted bound on `‖𝕃_RE‖`:
/// `sqrt(f^2 d (1/beta + 1/beta') + (beta + beta') R^2 / 4 + 2 f sqrt(d) R + 2 mu)`
/// with `f = pi N / (2a)`.
pub fn reld_alpha(p: &Potential, params: &ReldParams) -> Result<f64> {
    let base = &params.base_grid;
    let r = p.max_gradient_norm(base)?;
    let f = PI * base.n() as f64 / (2.0 * base.half_width());
    let d = base.dim() as f64;
    let (b, bp) = (params.beta, params.beta_prime);
    Ok((f * f * d * (1.0 / b + 1.0 / bp) + (b + bp) * r * r / 4.0 + 2.0 * f * d.sqrt() * r + 2.0 * params.mu).sqrt())
}

impl BlockOperator {
    pub fn reld(p: &Potential, params: &ReldParams) -> Result<Self> {
        let fs = assemble_reld_factors(p, params)?;
        Self::new(fs, reld_alpha(p, params)?)
    }
}

/// Sum of joint probabilities over the y replica.
pub fn marginal_x(joint_probabilities: &[f64], base_len: usize) -> Result<Vec<f64>> {
    if joint_probabilities.len() != base_len * base_len {
        return Err(Error::DimensionMismatch {
            expected: base_len * base_len,
            got: joint_probabilities.len(),
        });
    }
    Ok(joint_probabilities.chunks_exact(base_len).map(|row| row.iter().sum()).collect())
}

/// x-marginal density of a joint state.
pub fn marginal_x_state(state: &WaveState) -> Result<Vec<f64>> {
    let perm = SwapPermutation::new(state.grid())?;
    marginal_x(&state.probabilities(), perm.base_len())
}

/// First `d` coordinates of each joint sample.
pub fn marginal_x_samples(samples: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    samples.iter().map(|s| s[..d].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, norm};
    use crate::potentials::{harmonic, quartic_cosine_1d};

    #[test]
    fn swap_rate_values() {
        assert_eq!(swap_rate_from_values(2.0, 1.0, 0.3, 0.3), 1.0);
        assert!((swap_rate_from_values(2.0, 1.0, 0.0, 1.0) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(swap_rate_from_values(2.0, 1.0, 1.0, 0.0), 1.0);
    }

    #[test]
    fn permutation_is_involution() {
        let base = build_grid(1, 6, 1.0).unwrap();
        let joint = base.power(2).unwrap();
        let w = SwapPermutation::new(&joint).unwrap();
        let v: Vec<f64> = (0..36).map(|i| i as f64 * 0.37).collect();
        let mut once = vec![0.0; 36];
        let mut twice = vec![0.0; 36];
        w.apply(&v, &mut once);
        w.apply(&once, &mut twice);
        assert_eq!(v, twice);
        assert_ne!(v, once);
        let odd = build_grid(3, 4, 1.0).unwrap();
        assert!(SwapPermutation::new(&odd).is_err());
    }

    #[test]
    fn joint_state_is_product_and_annihilated_by_swap() {
        let base = build_grid(1, 16, 3.0).unwrap();
        let p = quartic_cosine_1d();
        let params = ReldParams::new(4.0, 1.0, 1.0, base.clone()).unwrap();
        let s = joint_gibbs_state(&p, &params).unwrap();
        let fs = assemble_reld_factors(&p, &params).unwrap();
        assert_eq!(fs.len(), 3);
        let mut out = vec![Complex64::default(); s.len()];
        fs.factors()[2].apply(s.amplitudes(), &mut out);
        assert!(norm(&out) <= 1e-12);
        let marg = marginal_x_state(&s).unwrap();
        let single = gibbs_state(&p, 4.0, &base).unwrap().probabilities();
        for (a, b) in marg.iter().zip(&single) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn equal_temperature_alpha_is_sqrt2_single() {
        let base = build_grid(1, 16, 4.0).unwrap();
        let p = harmonic(1.0, 1);
        let params = ReldParams::new(2.0, 2.0, 0.0, base.clone()).unwrap();
        let single = crate::block::alpha_normalization(&p, &base, 2.0).unwrap();
        let joint = reld_alpha(&p, &params).unwrap();
        assert!((joint - 2f64.sqrt() * single).abs() < 1e-12 * joint);
    }

    #[test]
    fn rejects_bad_params() {
        let base = build_grid(1, 8, 1.0).unwrap();
        assert!(ReldParams::new(1.0, 2.0, 1.0, base.clone()).is_err());
        assert!(ReldParams::new(2.0, 1.0, -1.0, base).is_err());
    }
}
