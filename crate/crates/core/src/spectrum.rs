//! Singular and eigen gaps of `𝕃` and `H = 𝕃^† 𝕃`.

use std::io::Write;
use std::path::Path;

use faer::Side;
use serde::{Deserialize, Serialize};

use crate::block::BlockOperator;
use crate::eigen::{smallest_deflated, LanczosOptions};
use crate::error::{Error, Result};
use crate::grid::{norm, WaveState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    DenseSvd,
    DenseEigen,
    IterativeDeflated,
}

#[derive(Clone, Debug)]
pub enum SpectralMode {
    /// Full SVD of `𝕃` plus an independent dense eigendecomposition of `H`.
    Dense,
    /// Dense eigendecomposition of `H` only; singular values are derived.
    DenseEigen,
    /// Lanczos on `H` with the given (Gibbs) state deflated.
    Iterative { deflation: WaveState, options: LanczosOptions },
}

impl SpectralMode {
    pub fn iterative(deflation: WaveState) -> Self {
        SpectralMode::Iterative {
            deflation,
            options: LanczosOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Ascending. For the iterative method this is `[‖𝕃 ψ‖, sqrt(λ_min)]`.
    pub singular_values: Vec<f64>,
    /// `sqrt(σ₂² − σ₁²)`; equals `σ₂` when the kernel is exact.
    pub gap: f64,
    pub hamiltonian_gap: f64,
    pub poincare_constant: f64,
    pub method: SpectralMethod,
    /// Ascending eigenvalues of `H` (dense methods only).
    pub hamiltonian_eigenvalues: Vec<f64>,
    pub matvecs: usize,
    pub residual: f64,
}

/// Singular gap consistent with the eigen gap: `sqrt(σ₂² − σ₁²)`.
pub fn singular_gap(singular_values: &[f64]) -> f64 {
    match singular_values {
        [s1, s2, ..] => (s2 * s2 - s1 * s1).max(0.0).sqrt(),
        _ => 0.0,
    }
}

fn dense_eigenvalues(b: &BlockOperator) -> Result<Vec<f64>> {
    let h = b.witten_dense()?;
    let mut ev = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigenvalues: {e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

fn eigen_gap(ev: &[f64]) -> Result<f64> {
    if ev.len() < 2 {
        return Err(Error::InvalidParameter("need at least two eigenvalues for a gap".into()));
    }
    Ok(ev[1] - ev[0])
}

pub fn spectral_report(b: &BlockOperator, mode: &SpectralMode) -> Result<SpectralReport> {
    match mode {
        SpectralMode::Dense => {
            let sv = b.dense_singular_values()?;
            let ev = dense_eigenvalues(b)?;
            let hg = eigen_gap(&ev)?;
            Ok(SpectralReport {
                gap: singular_gap(&sv),
                singular_values: sv,
                hamiltonian_gap: hg,
                poincare_constant: 1.0 / hg,
                method: SpectralMethod::DenseSvd,
                hamiltonian_eigenvalues: ev,
                matvecs: 0,
                residual: 0.0,
            })
        }
        SpectralMode::DenseEigen => {
            let ev = dense_eigenvalues(b)?;
            let hg = eigen_gap(&ev)?;
            let sv: Vec<f64> = ev.iter().map(|l| l.max(0.0).sqrt()).collect();
            Ok(SpectralReport {
                gap: hg.max(0.0).sqrt(),
                singular_values: sv,
                hamiltonian_gap: hg,
                poincare_constant: 1.0 / hg,
                method: SpectralMethod::DenseEigen,
                hamiltonian_eigenvalues: ev,
                matvecs: 0,
                residual: 0.0,
            })
        }
        SpectralMode::Iterative { deflation, options } => {
            if deflation.len() != b.cols() {
                return Err(Error::DimensionMismatch {
                    expected: b.cols(),
                    got: deflation.len(),
                });
            }
            let psi = deflation.amplitudes().to_vec();
            let kernel = norm(&b.apply(&psi));
            let opts = LanczosOptions {
                norm_bound: b.alpha() * b.alpha(),
                ..options.clone()
            };
            let pair = smallest_deflated(|v| b.witten_apply(v), b.cols(), &[psi], &opts)?;
            let lambda = pair.value;
            let mut sv = vec![kernel, lambda.max(0.0).sqrt()];
            sv.sort_by(f64::total_cmp);
            Ok(SpectralReport {
                singular_values: sv,
                gap: lambda.max(0.0).sqrt(),
                hamiltonian_gap: lambda,
                poincare_constant: 1.0 / lambda,
                method: SpectralMethod::IterativeDeflated,
                hamiltonian_eigenvalues: Vec::new(),
                matvecs: pair.matvecs,
                residual: pair.residual,
            })
        }
    }
}

/// One value per line, ascending, under a one-line header.
pub fn write_spectrum_csv(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for v in sorted {
        writeln!(f, "{v:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, gibbs_state};
    use crate::potentials::harmonic;

    #[test]
    fn harmonic_gap_is_gamma() {
        for gamma in [1.0, 2.0] {
            for beta in [1.0, 4.0] {
                let g = build_grid(1, 64, 8.0).unwrap();
                let b = BlockOperator::langevin(&harmonic(gamma, 1), beta, &g).unwrap();
                let r = spectral_report(&b, &SpectralMode::Dense).unwrap();
                assert!((r.hamiltonian_gap - gamma).abs() < 1e-3, "{gamma} {beta} {}", r.hamiltonian_gap);
                assert!((r.gap * r.gap - r.hamiltonian_gap).abs() <= 1e-8 * r.hamiltonian_gap);
                assert_eq!(r.poincare_constant, 1.0 / r.hamiltonian_gap);
            }
        }
    }

    #[test]
    fn iterative_matches_dense() {
        let g = build_grid(1, 32, 6.0).unwrap();
        let p = harmonic(1.0, 1);
        let b = BlockOperator::langevin(&p, 1.0, &g).unwrap();
        let dense = spectral_report(&b, &SpectralMode::Dense).unwrap();
        let it = spectral_report(&b, &SpectralMode::iterative(gibbs_state(&p, 1.0, &g).unwrap())).unwrap();
        let rel = (dense.hamiltonian_gap - it.hamiltonian_gap).abs() / dense.hamiltonian_gap;
        assert!(rel < 1e-6, "{} vs {}", dense.hamiltonian_gap, it.hamiltonian_gap);
    }

    #[test]
    fn csv_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_spectrum_csv(&p, "singular_value", &[3.0, 1.0, 2.0]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let vals: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }
}
