//! Resolution boosting, measurement with jitter, and discrepancy metrics.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, WaveState};
use crate::samplers::{chain_rng, ChainParams, SampleBatch, SamplerKind};

/// Largest number of fine-grid points.
pub const FINE_GUARD: usize = 1 << 20;

/// A state resampled on a refined grid of `M = 2^r` points per axis.
#[derive(Clone, Debug)]
pub struct FineState {
    pub state: WaveState,
    pub parent: GridSpec,
}

impl FineState {
    pub fn grid(&self) -> &GridSpec {
        self.state.grid()
    }

    /// Amplitudes at the parent nodes, renormalized.
    pub fn downsample(&self) -> Result<WaveState> {
        let step = self.grid().n() / self.parent.n();
        let fine = self.grid();
        let mut idx = vec![0; fine.dim()];
        let amps: Vec<Complex64> = (0..self.parent.len())
            .map(|i| {
                self.parent.multi_index(i, &mut idx);
                idx.iter_mut().for_each(|k| *k *= step);
                self.state.amplitudes()[fine.flat_index(&idx)]
            })
            .collect();
        WaveState::new(amps, self.parent.clone())
    }
}

/// Zero-pads the spectrum of every line along `axis` from `n` to `m` modes.
/// The Nyquist coefficient is split evenly between `±m/2`.
fn pad_axis(data: &[Complex64], shape: &[usize], axis: usize, m: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![Complex64::default(); outer * m * inner];
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(m);
    let mut line = vec![Complex64::default(); n];
    let mut wide = vec![Complex64::default(); m];
    for o in 0..outer {
        for i in 0..inner {
            for k in 0..n {
                line[k] = data[(o * n + k) * inner + i];
            }
            fwd.process(&mut line);
            wide.iter_mut().for_each(|w| *w = Complex64::default());
            if m == n {
                wide.copy_from_slice(&line);
            } else {
                let half = n / 2;
                wide[..half].copy_from_slice(&line[..half]);
                for k in half + 1..n {
                    wide[m - n + k] = line[k];
                }
                if n % 2 == 0 {
                    let nyq = line[half] * 0.5;
                    wide[half] = nyq;
                    wide[m - half] = nyq;
                } else {
                    wide[m - n + half] = line[half];
                }
            }
            inv.process(&mut wide);
            for k in 0..m {
                out[(o * m + k) * inner + i] = wide[k] / n as f64;
            }
        }
    }
    out
}

/// Trigonometric interpolant of `v` sampled on `2^r` points per axis,
/// renormalized to unit norm.
pub fn boost_resolution(v: &WaveState, r: u32) -> Result<FineState> {
    let parent = v.grid().clone();
    let m = 1usize
        .checked_shl(r)
        .ok_or_else(|| Error::InvalidParameter(format!("resolution exponent {r} too large")))?;
    if m < parent.n() {
        return Err(Error::InvalidParameter(format!(
            "2^{r} = {m} points is coarser than the {} grid points",
            parent.n()
        )));
    }
    let total = m.checked_pow(parent.dim() as u32).unwrap_or(usize::MAX);
    if total > FINE_GUARD {
        return Err(Error::GuardExceeded {
            what: "fine grid",
            requested: total,
            limit: FINE_GUARD,
        });
    }
    let mut planner = FftPlanner::new();
    let mut shape = vec![parent.n(); parent.dim()];
    let mut data = v.amplitudes().to_vec();
    for axis in 0..parent.dim() {
        data = pad_axis(&data, &shape, axis, m, &mut planner);
        shape[axis] = m;
    }
    let fine = parent.refined(m)?;
    Ok(FineState {
        state: WaveState::new(data, fine)?,
        parent,
    })
}

/// Draws `n` cells with probability `|amplitude|²` and returns each cell's
/// node plus uniform jitter over the cell.
pub fn measure_and_jitter(f: &FineState, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let g = f.grid();
    let weights = f.state.probabilities();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidParameter(format!("measurement weights: {e}")))?;
    let mut rng = chain_rng(seed, 0);
    let h = g.spacing();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = g.point(dist.sample(&mut rng));
        for v in x.iter_mut() {
            *v += h * (rng.random::<f64>() - 0.5);
        }
        samples.push(x);
    }
    Ok(SampleBatch {
        samples,
        sampler: SamplerKind::Measurement,
        params: ChainParams {
            beta: 0.0,
            dt: 0.0,
            n_steps: n,
            burn_in: Some(0),
            seed,
            stream: 0,
        },
        acceptance_rate: None,
        swap_events: None,
    })
}

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(())
}

/// `½ Σ |p - q| · cell_volume` for densities on a common grid.
pub fn tv_distance(p: &[f64], q: &[f64], cell_volume: f64) -> Result<f64> {
    same_len(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() * cell_volume)
}

/// `Σ (p/σ - 1)² σ · cell_volume`; cells with `σ = 0` are skipped.
pub fn chi2_divergence(p: &[f64], sigma: &[f64], cell_volume: f64) -> Result<f64> {
    same_len(p, sigma)?;
    Ok(p
        .iter()
        .zip(sigma)
        .filter(|(_, s)| **s > 0.0)
        .map(|(a, s)| (a - s) * (a - s) / s)
        .sum::<f64>()
        * cell_volume)
}

/// `|<u|v>|`.
pub fn state_overlap(u: &WaveState, v: &WaveState) -> Result<f64> {
    Ok(u.inner(v)?.norm())
}

/// Riemann-normalized density from unnormalized nonnegative weights.
pub fn riemann_density(weights: &[f64], cell_volume: f64) -> Result<Vec<f64>> {
    let z: f64 = weights.iter().sum::<f64>() * cell_volume;
    if !(z > 0.0) {
        return Err(Error::Underflow);
    }
    Ok(weights.iter().map(|w| w / z).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    pub beta: f64,
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub tv: f64,
    pub chi2: f64,
    pub overlap: f64,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "label,beta,n,m,samples,tv,chi2,overlap")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{:.10e},{:.10e},{:.10e}",
            r.label, r.beta, r.n, r.m, r.samples, r.tv, r.chi2, r.overlap
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, gibbs_state};
    use crate::potentials::quartic_cosine_1d;
    use std::f64::consts::PI;

    #[test]
    fn boost_at_native_resolution_is_identity() {
        let g = build_grid(1, 32, 3.0).unwrap();
        let v = gibbs_state(&quartic_cosine_1d(), 2.0, &g).unwrap();
        let f = boost_resolution(&v, 5).unwrap();
        for (a, b) in f.state.amplitudes().iter().zip(v.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn fourier_mode_is_preserved() {
        let g = build_grid(1, 16, PI).unwrap();
        let mode = |grid: &GridSpec| -> Vec<Complex64> {
            grid.axis_points(0).iter().map(|x| Complex64::from_polar(1.0, 3.0 * x)).collect()
        };
        let v = WaveState::new(mode(&g), g.clone()).unwrap();
        let f = boost_resolution(&v, 7).unwrap();
        let want = WaveState::new(mode(f.grid()), f.grid().clone()).unwrap();
        for (a, b) in f.state.amplitudes().iter().zip(want.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn boost_then_downsample_round_trips() {
        let g = build_grid(2, 8, 2.0).unwrap();
        let amps: Vec<Complex64> = (0..64).map(|i| Complex64::new((i as f64 * 0.3).sin(), (i as f64).cos())).collect();
        let v = WaveState::new(amps, g).unwrap();
        let f = boost_resolution(&v, 5).unwrap();
        assert!((f.state.norm() - 1.0).abs() < 1e-12);
        let back = f.downsample().unwrap();
        for (a, b) in back.amplitudes().iter().zip(v.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn real_input_stays_real() {
        let g = build_grid(1, 8, 1.0).unwrap();
        let v = WaveState::from_real(&[1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0, 2.0], g).unwrap();
        let f = boost_resolution(&v, 6).unwrap();
        assert!(f.state.amplitudes().iter().all(|a| a.im.abs() < 1e-14));
    }

    #[test]
    fn guards_and_bad_exponents() {
        let g = build_grid(1, 32, 1.0).unwrap();
        let v = WaveState::from_real(&[1.0; 32], g).unwrap();
        assert!(boost_resolution(&v, 4).is_err());
        let g2 = build_grid(2, 8, 1.0).unwrap();
        let v2 = WaveState::from_real(&[1.0; 64], g2).unwrap();
        assert!(matches!(boost_resolution(&v2, 11), Err(Error::GuardExceeded { .. })));
    }

    #[test]
    fn delta_state_samples_stay_in_cell() {
        let g = build_grid(1, 16, 1.0).unwrap();
        let mut a = vec![0.0; 16];
        a[5] = 1.0;
        let f = FineState {
            state: WaveState::from_real(&a, g.clone()).unwrap(),
            parent: g.clone(),
        };
        let b = measure_and_jitter(&f, 1000, 3).unwrap();
        let x = g.coordinate(0, 5);
        let h = g.spacing();
        assert!(b.samples.iter().all(|s| (s[0] - x).abs() <= 0.5 * h));
        let again = measure_and_jitter(&f, 1000, 3).unwrap();
        assert_eq!(b.samples, again.samples);
    }

    #[test]
    fn metric_extremes() {
        assert_eq!(tv_distance(&[1.0, 0.0], &[1.0, 0.0], 0.5).unwrap(), 0.0);
        assert!((tv_distance(&[2.0, 0.0], &[0.0, 2.0], 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(tv_distance(&[1.0], &[1.0, 0.0], 1.0).is_err());
        assert_eq!(chi2_divergence(&[0.5, 0.5], &[0.5, 0.5], 1.0).unwrap(), 0.0);
        let g = build_grid(1, 8, 1.0).unwrap();
        let mut e = vec![0.0; 8];
        e[0] = 1.0;
        let u = WaveState::from_real(&e, g.clone()).unwrap();
        e.swap(0, 1);
        let v = WaveState::from_real(&e, g).unwrap();
        assert_eq!(state_overlap(&u, &u).unwrap(), 1.0);
        assert_eq!(state_overlap(&u, &v).unwrap(), 0.0);
    }
}
