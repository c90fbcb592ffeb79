//! Discretized Langevin factors `L_j` and the RELD swap factor.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::potentials::Potential;
use crate::reld::SwapPermutation;
use crate::spectral::{dense_from_apply, SpectralDerivative};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    Langevin,
    Reld,
}

/// `v -> -i (D_axis v / sqrt(beta) + sqrt(beta)/2 * drift .* v)`.
#[derive(Clone, Debug)]
pub struct LangevinFactor {
    deriv: SpectralDerivative,
    drift: Vec<f64>,
    beta: f64,
}

impl LangevinFactor {
    /// `drift` is `d_j V` tabulated on every point of `grid`.
    pub fn new(grid: &GridSpec, axis: usize, drift: Vec<f64>, beta: f64) -> Result<Self> {
        if drift.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: drift.len(),
            });
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        Ok(Self {
            deriv: SpectralDerivative::new(grid, axis)?,
            drift,
            beta,
        })
    }

    pub fn axis(&self) -> usize {
        self.deriv.axis()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let a = 1.0 / self.beta.sqrt();
        let b = 0.5 * self.beta.sqrt();
        self.deriv.apply(v, out);
        // -i (a Dv + b g v)
        for ((o, x), g) in out.iter_mut().zip(v).zip(&self.drift) {
            let s = *o * a + x * (b * g);
            *o = Complex64::new(s.im, -s.re);
        }
    }

    fn adjoint_apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let a = 1.0 / self.beta.sqrt();
        let b = 0.5 * self.beta.sqrt();
        self.deriv.apply(v, out);
        // i (-a Dv + b g v)
        for ((o, x), g) in out.iter_mut().zip(v).zip(&self.drift) {
            let s = x * (b * g) - *o * a;
            *o = Complex64::new(-s.im, s.re);
        }
    }
}

/// `L_s = sqrt(mu/2) (I - W) diag(sqrt(s))` on the joint grid.
#[derive(Clone, Debug)]
pub struct SwapFactor {
    coef: f64,
    sqrt_rate: Vec<f64>,
    perm: SwapPermutation,
}

impl SwapFactor {
    pub fn new(mu: f64, sqrt_rate: Vec<f64>, perm: SwapPermutation) -> Result<Self> {
        if sqrt_rate.len() != perm.len() {
            return Err(Error::DimensionMismatch {
                expected: perm.len(),
                got: sqrt_rate.len(),
            });
        }
        Ok(Self {
            coef: (0.5 * mu).sqrt(),
            sqrt_rate,
            perm,
        })
    }

    pub fn sqrt_rate(&self) -> &[f64] {
        &self.sqrt_rate
    }

    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let scaled: Vec<Complex64> = v.iter().zip(&self.sqrt_rate).map(|(x, s)| x * *s).collect();
        self.perm.apply(&scaled, out);
        for (o, x) in out.iter_mut().zip(&scaled) {
            *o = (x - *o) * self.coef;
        }
    }

    fn adjoint_apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        self.perm.apply(v, out);
        for ((o, x), s) in out.iter_mut().zip(v).zip(&self.sqrt_rate) {
            *o = (x - *o) * (self.coef * s);
        }
    }
}

#[derive(Clone, Debug)]
pub enum Factor {
    Langevin(LangevinFactor),
    Swap(SwapFactor),
}

impl Factor {
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        match self {
            Factor::Langevin(f) => f.apply(v, out),
            Factor::Swap(f) => f.apply(v, out),
        }
    }

    pub fn adjoint_apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        match self {
            Factor::Langevin(f) => f.adjoint_apply(v, out),
            Factor::Swap(f) => f.adjoint_apply(v, out),
        }
    }

    pub fn dense(&self, grid: &GridSpec) -> faer::Mat<faer::c64> {
        dense_from_apply(grid.len(), grid.len(), |v, out| self.apply(v, out))
    }
}

#[derive(Clone, Debug)]
pub struct FactorSet {
    factors: Vec<Factor>,
    beta: f64,
    grid: GridSpec,
    kind: FactorKind,
}

impl FactorSet {
    pub fn new(factors: Vec<Factor>, beta: f64, grid: GridSpec, kind: FactorKind) -> Self {
        Self {
            factors,
            beta,
            grid,
            kind,
        }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    /// `sum_j L_j^† L_j v`.
    pub fn witten_apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        let mut acc = vec![Complex64::default(); n];
        let mut tmp = vec![Complex64::default(); n];
        let mut back = vec![Complex64::default(); n];
        for f in &self.factors {
            f.apply(v, &mut tmp);
            f.adjoint_apply(&tmp, &mut back);
            acc.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
        }
        acc
    }
}

/// The `d` factors of overdamped Langevin dynamics at inverse temperature `beta`.
pub fn assemble_langevin_factors(p: &Potential, beta: f64, grid: &GridSpec) -> Result<FactorSet> {
    if p.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: p.dim(),
        });
    }
    let grads = p.gradients_on(grid)?;
    let factors = grads
        .into_iter()
        .enumerate()
        .map(|(axis, drift)| LangevinFactor::new(grid, axis, drift, beta).map(Factor::Langevin))
        .collect::<Result<Vec<_>>>()?;
    Ok(FactorSet::new(factors, beta, grid.clone(), FactorKind::Langevin))
}
