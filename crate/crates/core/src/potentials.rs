//! Potential energy landscapes `V: R^d -> R` with analytic gradients.
//!
//! A [`Potential`] is an immutable value: a named landscape plus an optional
//! cap-above value. Capping replaces `V` by `min(V, c)` and zeroes the
//! gradient wherever the uncapped value reaches `c`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Müller-Brown amplitudes and exponent coefficients.
const MB_A: [f64; 4] = [-200.0, -100.0, -170.0, 15.0];
const MB_LA: [f64; 4] = [-1.0, -1.0, -6.5, 0.7];
const MB_LB: [f64; 4] = [0.0, 0.0, 11.0, 0.6];
const MB_LC: [f64; 4] = [-10.0, -10.0, -6.5, 0.7];
const MB_X0: [f64; 4] = [1.0, 0.0, -0.5, -1.0];
const MB_Y0: [f64; 4] = [0.0, 0.5, 1.5, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Landscape {
    MullerBrown,
    QuarticCosine1d,
    Harmonic { gamma: f64, dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub landscape: Landscape,
    pub cap: Option<f64>,
}

/// Parameters accepted by the string-keyed registry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PotentialParams {
    pub gamma: Option<f64>,
    pub dim: Option<usize>,
    pub cap: Option<f64>,
}

pub const REGISTRY_KEYS: [&str; 3] = ["muller-brown", "quartic-cosine-1d", "harmonic"];

pub fn muller_brown() -> Potential {
    Potential::new(Landscape::MullerBrown)
}

/// `cos(pi x)^2 + x^4 / 4`, four local minima.
pub fn quartic_cosine_1d() -> Potential {
    Potential::new(Landscape::QuarticCosine1d)
}

pub fn harmonic(gamma: f64, dim: usize) -> Potential {
    Potential::new(Landscape::Harmonic { gamma, dim })
}

/// `min(V, c)` with zero gradient in the capped region. Capping twice at the
/// same level is a no-op; nested caps keep the lower value.
pub fn cap_above(p: &Potential, c: f64) -> Potential {
    let cap = match p.cap {
        Some(existing) => existing.min(c),
        None => c,
    };
    Potential {
        landscape: p.landscape.clone(),
        cap: Some(cap),
    }
}

impl Potential {
    pub fn new(landscape: Landscape) -> Self {
        Self {
            landscape,
            cap: None,
        }
    }

    /// Look up a potential by registry key.
    pub fn from_key(key: &str, params: &PotentialParams) -> Result<Self> {
        let base = match key {
            "muller-brown" => muller_brown(),
            "quartic-cosine-1d" => quartic_cosine_1d(),
            "harmonic" => {
                let gamma = params.gamma.unwrap_or(1.0);
                if !(gamma > 0.0) {
                    return Err(Error::config("potential.gamma", "must be positive"));
                }
                harmonic(gamma, params.dim.unwrap_or(1).max(1))
            }
            other => return Err(Error::UnknownPotential(other.to_string())),
        };
        Ok(match params.cap {
            Some(c) => cap_above(&base, c),
            None => base,
        })
    }

    pub fn name(&self) -> String {
        let base = match &self.landscape {
            Landscape::MullerBrown => "muller-brown".to_string(),
            Landscape::QuarticCosine1d => "quartic-cosine-1d".to_string(),
            Landscape::Harmonic { gamma, dim } => format!("harmonic(gamma={gamma},d={dim})"),
        };
        match self.cap {
            Some(c) => format!("{base}|cap={c}"),
            None => base,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.landscape {
            Landscape::MullerBrown => 2,
            Landscape::QuarticCosine1d => 1,
            Landscape::Harmonic { dim, .. } => *dim,
        }
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    fn raw_value(&self, x: &[f64]) -> f64 {
        match &self.landscape {
            Landscape::MullerBrown => {
                let (px, py) = (x[0], x[1]);
                (0..4)
                    .map(|k| {
                        let dx = px - MB_X0[k];
                        let dy = py - MB_Y0[k];
                        MB_A[k] * (MB_LA[k] * dx * dx + MB_LB[k] * dx * dy + MB_LC[k] * dy * dy).exp()
                    })
                    .sum()
            }
            Landscape::QuarticCosine1d => {
                let c = (PI * x[0]).cos();
                c * c + 0.25 * x[0].powi(4)
            }
            Landscape::Harmonic { gamma, .. } => 0.5 * gamma * x.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    fn raw_gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.landscape {
            Landscape::MullerBrown => {
                let (px, py) = (x[0], x[1]);
                out[0] = 0.0;
                out[1] = 0.0;
                for k in 0..4 {
                    let dx = px - MB_X0[k];
                    let dy = py - MB_Y0[k];
                    let e = MB_A[k]
                        * (MB_LA[k] * dx * dx + MB_LB[k] * dx * dy + MB_LC[k] * dy * dy).exp();
                    out[0] += e * (2.0 * MB_LA[k] * dx + MB_LB[k] * dy);
                    out[1] += e * (MB_LB[k] * dx + 2.0 * MB_LC[k] * dy);
                }
            }
            Landscape::QuarticCosine1d => {
                let t = PI * x[0];
                out[0] = -2.0 * PI * t.cos() * t.sin() + x[0].powi(3);
            }
            Landscape::Harmonic { gamma, .. } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = gamma * xi;
                }
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let v = self.raw_value(x);
        match self.cap {
            Some(c) => v.min(c),
            None => v,
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        if let Some(c) = self.cap {
            if self.raw_value(x) >= c {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
        }
        self.raw_gradient(x, out);
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }

    /// `V` at every grid point, in the grid's row-major order.
    pub fn values_on(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        self.check_grid(grid)?;
        let mut x = vec![0.0; grid.dim()];
        Ok((0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut x);
                self.value(&x)
            })
            .collect())
    }

    /// Gradient components at every grid point; `out[axis][i]`.
    pub fn gradients_on(&self, grid: &GridSpec) -> Result<Vec<Vec<f64>>> {
        self.check_grid(grid)?;
        let d = grid.dim();
        let mut out = vec![vec![0.0; grid.len()]; d];
        let mut x = vec![0.0; d];
        let mut g = vec![0.0; d];
        for i in 0..grid.len() {
            grid.point_into(i, &mut x);
            self.gradient_into(&x, &mut g);
            for axis in 0..d {
                out[axis][i] = g[axis];
            }
        }
        Ok(out)
    }

    /// Largest gradient norm over the grid points.
    pub fn max_gradient_norm(&self, grid: &GridSpec) -> Result<f64> {
        let grads = self.gradients_on(grid)?;
        Ok((0..grid.len())
            .map(|i| grads.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max))
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: grid.dim(),
            });
        }
        Ok(())
    }
}
