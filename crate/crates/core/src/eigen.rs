//! Thick-restart Lanczos for the smallest eigenpair of a Hermitian operator
//! restricted to the orthogonal complement of known vectors.

use faer::{c64, Mat, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{dot, norm};

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub max_basis: usize,
    pub keep: usize,
    pub max_matvecs: usize,
    /// Residual tolerance relative to `norm_bound`.
    pub tol: f64,
    /// Upper bound on the operator norm (`alpha^2` for a Witten Hamiltonian).
    pub norm_bound: f64,
    pub check_every: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            max_basis: 60,
            keep: 16,
            max_matvecs: 5000,
            tol: 1e-8,
            norm_bound: 1.0,
            check_every: 8,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    pub residual: f64,
    pub matvecs: usize,
}

fn project_out(v: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for b in basis {
        let c = dot(b, v);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

fn scale(v: &mut [Complex64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Orthogonalizes `v` twice against `deflate` and `basis`; returns the norm
/// left over (before normalizing).
fn orthonormalize(v: &mut [Complex64], deflate: &[Vec<Complex64>], basis: &[Vec<Complex64>]) -> f64 {
    for _ in 0..2 {
        project_out(v, deflate);
        project_out(v, basis);
    }
    let n = norm(v);
    if n > 0.0 {
        scale(v, 1.0 / n);
    }
    n
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, deflate: &[Vec<Complex64>], basis: &[Vec<Complex64>]) -> Vec<Complex64> {
    loop {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        if orthonormalize(&mut v, deflate, basis) > 1e-8 {
            return v;
        }
    }
}

fn combine(vs: &[Vec<Complex64>], coeffs: impl Iterator<Item = c64>) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); vs[0].len()];
    for (v, c) in vs.iter().zip(coeffs) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    out
}

/// Smallest eigenpair of `P A P` on the range of `P = I - sum_k |d_k><d_k|`.
/// `deflate` must be orthonormal.
pub fn smallest_deflated<F>(apply: F, n: usize, deflate: &[Vec<Complex64>], opts: &LanczosOptions) -> Result<EigenPair>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    if n <= deflate.len() {
        return Err(Error::InvalidParameter("nothing left after deflation".into()));
    }
    let max_basis = opts.max_basis.min(n - deflate.len()).max(2);
    let keep = opts.keep.clamp(1, max_basis - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<Complex64>> = Vec::with_capacity(max_basis);
    // Rayleigh quotient matrix V^† A V, stored densely
    let mut t = Mat::<c64>::zeros(max_basis, max_basis);
    let mut q = random_unit(n, &mut rng, deflate, &basis);
    let mut matvecs = 0usize;
    let mut last_residual = f64::INFINITY;
    let tol = opts.tol * opts.norm_bound;

    loop {
        let mut aq = apply(&q);
        matvecs += 1;
        project_out(&mut aq, deflate);
        let j = basis.len();
        for (i, v) in basis.iter().enumerate() {
            let c = dot(v, &aq);
            t[(i, j)] = c;
            t[(j, i)] = c.conj();
        }
        t[(j, j)] = c64::new(dot(&q, &aq).re, 0.0);

        let mut next = aq.clone();
        basis.push(std::mem::take(&mut q));
        images.push(aq);
        let left = orthonormalize(&mut next, deflate, &basis);
        let invariant = left <= 1e-12 * opts.norm_bound;

        let k = basis.len();
        let full = k == max_basis;
        if full || invariant || k % opts.check_every == 0 || matvecs >= opts.max_matvecs {
            let tk = t.submatrix(0, 0, k, k).to_owned();
            let eig = tk
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::LinearAlgebra(format!("ritz: {e:?}")))?;
            let u = eig.U();
            let theta = eig.S().column_vector()[0].re;
            let s0 = (0..k).map(|i| u[(i, 0)]);
            let x = combine(&basis, s0.clone());
            let ax = combine(&images, s0);
            let r: Vec<Complex64> = ax.iter().zip(&x).map(|(a, b)| a - b * theta).collect();
            last_residual = norm(&r);
            log::debug!("lanczos: {matvecs} applies, theta = {theta:e}, residual = {last_residual:e}");
            if last_residual <= tol {
                return Ok(EigenPair {
                    value: theta,
                    vector: x,
                    residual: last_residual,
                    matvecs,
                });
            }
            if matvecs >= opts.max_matvecs {
                return Err(Error::NoConvergence {
                    iterations: matvecs,
                    residual: last_residual,
                });
            }
            if full || invariant {
                let m = if full { keep } else { k };
                let new_basis: Vec<Vec<Complex64>> =
                    (0..m).map(|c| combine(&basis, (0..k).map(|i| u[(i, c)]))).collect();
                let new_images: Vec<Vec<Complex64>> =
                    (0..m).map(|c| combine(&images, (0..k).map(|i| u[(i, c)]))).collect();
                let s = eig.S().column_vector();
                t.fill(c64::new(0.0, 0.0));
                for c in 0..m {
                    t[(c, c)] = c64::new(s[c].re, 0.0);
                }
                basis = new_basis;
                images = new_images;
                if invariant {
                    next = random_unit(n, &mut rng, deflate, &basis);
                } else {
                    // the continuation vector must stay orthogonal to the kept Ritz vectors
                    orthonormalize(&mut next, deflate, &basis);
                }
            }
        }
        if matvecs >= opts.max_matvecs {
            return Err(Error::NoConvergence {
                iterations: matvecs,
                residual: last_residual,
            });
        }
        q = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator_with_deflation() {
        let n = 400;
        let diag: Vec<f64> = (0..n).map(|i| i as f64 * 0.25).collect();
        let apply = |v: &[Complex64]| v.iter().zip(&diag).map(|(x, d)| x * *d).collect::<Vec<_>>();
        let mut e0 = vec![Complex64::default(); n];
        e0[0] = Complex64::new(1.0, 0.0);
        let opts = LanczosOptions {
            norm_bound: 100.0,
            ..Default::default()
        };
        let res = smallest_deflated(apply, n, &[e0], &opts).unwrap();
        assert!((res.value - 0.25).abs() < 1e-10, "{}", res.value);
        assert!(res.vector[1].norm() > 1.0 - 1e-6);
    }

    #[test]
    fn reports_nonconvergence() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sqrt()).collect();
        let apply = |v: &[Complex64]| v.iter().zip(&diag).map(|(x, d)| x * *d).collect::<Vec<_>>();
        let opts = LanczosOptions {
            max_matvecs: 5,
            tol: 1e-14,
            ..Default::default()
        };
        assert!(matches!(smallest_deflated(apply, n, &[], &opts), Err(Error::NoConvergence { .. })));
    }
}
