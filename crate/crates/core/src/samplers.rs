//! Classical baselines: ULA, MALA and replica-exchange Langevin with
//! exponential-clock swaps.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gibbs_probabilities, GridSpec};
use crate::potentials::Potential;
use crate::reld::{swap_rate_from_values, ReldParams};

/// `‖X‖` beyond which a chain is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

/// Stream offsets separating the noise sources of one RELD chain.
const Y_STREAM: u64 = 1 << 32;
const SWAP_STREAM: u64 = 2 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ula,
    Mala,
    Reld,
    /// Measurement of a prepared state.
    Measurement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub beta: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Defaults to 10% of `n_steps`.
    pub burn_in: Option<usize>,
    pub seed: u64,
    /// Independent stream index for concurrent chains sharing a seed.
    #[serde(default)]
    pub stream: u64,
}

impl ChainParams {
    pub fn new(beta: f64, dt: f64, n_steps: usize, seed: u64) -> Self {
        Self {
            beta,
            dt,
            n_steps,
            burn_in: None,
            seed,
            stream: 0,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_steps / 10).min(self.n_steps)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleBatch {
    /// Post burn-in states; RELD rows are `(x, y)` concatenated.
    pub samples: Vec<Vec<f64>>,
    pub sampler: SamplerKind,
    pub params: ChainParams,
    /// MALA: accepted proposals / proposals. RELD: accepted swaps / swap
    /// events (1 when no event fired).
    pub acceptance_rate: Option<f64>,
    /// RELD only.
    pub swap_events: Option<usize>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `d` coordinates of every sample.
    pub fn marginal(&self, d: usize) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s[..d].to_vec()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.samples.first().map_or(0, |s| s.len());
        let header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        writeln!(f, "{}", header.join(","))?;
        for s in &self.samples {
            let row: Vec<String> = s.iter().map(|v| format!("{v:.10e}")).collect();
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Seed, parameters and acceptance rate (no samples).
    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "sampler": self.sampler,
            "seed": self.params.seed,
            "stream": self.params.stream,
            "params": self.params,
            "burn_in": self.params.burn_in(),
            "samples": self.samples.len(),
            "acceptance_rate": self.acceptance_rate,
            "swap_events": self.swap_events,
        });
        std::fs::write(path, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// Seeded generator for one stream of one chain.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_point(x: &[f64], step: usize) -> Result<()> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n <= DIVERGENCE_LIMIT) {
        return Err(Error::Divergence { step, norm: n });
    }
    Ok(())
}

fn check_start(p: &Potential, x0: &[f64]) -> Result<()> {
    if x0.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: x0.len(),
        });
    }
    check_point(x0, 0)
}

/// One Euler-Maruyama step `x - ∇V dt + sqrt(2 dt / beta) ξ` into `out`.
fn em_step(p: &Potential, x: &[f64], beta: f64, dt: f64, rng: &mut ChaCha8Rng, grad: &mut [f64], out: &mut [f64]) {
    p.gradient_into(x, grad);
    let s = (2.0 * dt / beta).sqrt();
    for k in 0..x.len() {
        let xi: f64 = rng.sample(StandardNormal);
        out[k] = x[k] - grad[k] * dt + s * xi;
    }
}

pub fn ula_chain(p: &Potential, params: &ChainParams, x0: &[f64]) -> Result<SampleBatch> {
    params.validate()?;
    check_start(p, x0)?;
    let mut rng = chain_rng(params.seed, params.stream);
    let burn = params.burn_in();
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut samples = Vec::with_capacity(params.n_steps - burn);
    for step in 1..=params.n_steps {
        em_step(p, &x, params.beta, params.dt, &mut rng, &mut grad, &mut next);
        std::mem::swap(&mut x, &mut next);
        check_point(&x, step)?;
        if step > burn {
            samples.push(x.clone());
        }
    }
    Ok(SampleBatch {
        samples,
        sampler: SamplerKind::Ula,
        params: params.clone(),
        acceptance_rate: None,
        swap_events: None,
    })
}

/// `log q(to | from)` up to a constant, for the Langevin proposal.
fn log_proposal(to: &[f64], from: &[f64], grad_from: &[f64], beta: f64, dt: f64) -> f64 {
    let r2: f64 = (0..to.len())
        .map(|k| {
            let m = to[k] - from[k] + grad_from[k] * dt;
            m * m
        })
        .sum();
    -r2 * beta / (4.0 * dt)
}

pub fn mala_chain(p: &Potential, params: &ChainParams, x0: &[f64]) -> Result<SampleBatch> {
    params.validate()?;
    check_start(p, x0)?;
    let mut rng = chain_rng(params.seed, params.stream);
    let (beta, dt) = (params.beta, params.dt);
    let burn = params.burn_in();
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut vx = p.value(&x);
    let mut gx = p.gradient(&x);
    let mut y = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(params.n_steps - burn);
    let s = (2.0 * dt / beta).sqrt();
    for step in 1..=params.n_steps {
        for k in 0..d {
            let xi: f64 = rng.sample(StandardNormal);
            y[k] = x[k] - gx[k] * dt + s * xi;
        }
        let u: f64 = rng.random();
        if y.iter().all(|v| v.is_finite()) {
            let vy = p.value(&y);
            p.gradient_into(&y, &mut gy);
            let log_ratio =
                -beta * (vy - vx) + log_proposal(&x, &y, &gy, beta, dt) - log_proposal(&y, &x, &gx, beta, dt);
            if u.ln() < log_ratio {
                x.copy_from_slice(&y);
                gx.copy_from_slice(&gy);
                vx = vy;
                accepted += 1;
            }
        }
        check_point(&x, step)?;
        if step > burn {
            samples.push(x.clone());
        }
    }
    Ok(SampleBatch {
        samples,
        sampler: SamplerKind::Mala,
        params: params.clone(),
        acceptance_rate: Some(accepted as f64 / params.n_steps.max(1) as f64),
        swap_events: None,
    })
}

/// Two Euler-Maruyama replicas at `beta` (x) and `beta'` (y) with independent
/// noise streams; a swap event fires per step with probability
/// `1 - exp(-mu dt)` and exchanges the replicas with probability `s(x, y)`.
/// `params.beta` is ignored in favour of `reld.beta`.
pub fn reld_sde(p: &Potential, reld: &ReldParams, params: &ChainParams, x0: &[f64], y0: &[f64]) -> Result<SampleBatch> {
    params.validate()?;
    check_start(p, x0)?;
    check_start(p, y0)?;
    let mut rx = chain_rng(params.seed, params.stream);
    let mut ry = chain_rng(params.seed, params.stream ^ Y_STREAM);
    let mut rs = chain_rng(params.seed, params.stream ^ SWAP_STREAM);
    let dt = params.dt;
    let fire = 1.0 - (-reld.mu * dt).exp();
    let burn = params.burn_in();
    let d = x0.len();
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let mut next = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let (mut events, mut swaps) = (0usize, 0usize);
    let mut samples = Vec::with_capacity(params.n_steps - burn);
    for step in 1..=params.n_steps {
        em_step(p, &x, reld.beta, dt, &mut rx, &mut grad, &mut next);
        std::mem::swap(&mut x, &mut next);
        em_step(p, &y, reld.beta_prime, dt, &mut ry, &mut grad, &mut next);
        std::mem::swap(&mut y, &mut next);
        check_point(&x, step)?;
        check_point(&y, step)?;
        if fire > 0.0 && rs.random::<f64>() < fire {
            events += 1;
            let s = swap_rate_from_values(reld.beta, reld.beta_prime, p.value(&x), p.value(&y));
            if rs.random::<f64>() < s {
                std::mem::swap(&mut x, &mut y);
                swaps += 1;
            }
        }
        if step > burn {
            let mut row = x.clone();
            row.extend_from_slice(&y);
            samples.push(row);
        }
    }
    let mut params = params.clone();
    params.beta = reld.beta;
    Ok(SampleBatch {
        samples,
        sampler: SamplerKind::Reld,
        params,
        acceptance_rate: Some(if events == 0 { 1.0 } else { swaps as f64 / events as f64 }),
        swap_events: Some(events),
    })
}

/// Runs `count` chains concurrently; chain `i` gets stream `i`.
pub fn run_chains<F>(count: usize, f: F) -> Vec<Result<SampleBatch>>
where
    F: Fn(u64) -> Result<SampleBatch> + Sync,
{
    (0..count as u64).into_par_iter().map(&f).collect()
}

/// Normalized piecewise-constant density over right-open bins, row-major
/// with axis 0 slowest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: usize,
    /// `[lo, hi)` per axis.
    pub domain: Vec<(f64, f64)>,
    pub counts: Vec<u64>,
    /// Samples inside the domain.
    pub total: u64,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn bin_volume(&self) -> f64 {
        self.domain.iter().map(|(lo, hi)| (hi - lo) / self.bins as f64).product()
    }

    /// Bin masses (sum to one when any sample landed).
    pub fn masses(&self) -> Vec<f64> {
        let t = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn centers(&self, axis: usize) -> Vec<f64> {
        let (lo, hi) = self.domain[axis];
        let w = (hi - lo) / self.bins as f64;
        (0..self.bins).map(|k| lo + (k as f64 + 0.5) * w).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.dim();
        let cols: Vec<String> = (0..d).map(|k| format!("center{k}")).collect();
        writeln!(f, "{},count,density", cols.join(","))?;
        let centers: Vec<Vec<f64>> = (0..d).map(|k| self.centers(k)).collect();
        for (i, (c, p)) in self.counts.iter().zip(&self.density).enumerate() {
            let mut rem = i;
            let mut idx = vec![0; d];
            for axis in (0..d).rev() {
                idx[axis] = rem % self.bins;
                rem /= self.bins;
            }
            let xs: Vec<String> = (0..d).map(|k| format!("{:.8}", centers[k][idx[k]])).collect();
            writeln!(f, "{},{c},{p:.10e}", xs.join(","))?;
        }
        Ok(())
    }
}

pub fn histogram(samples: &[Vec<f64>], bins: usize, domain: &[(f64, f64)]) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least two bins, got {bins}")));
    }
    if domain.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::InvalidParameter("histogram domain needs lo < hi on every axis".into()));
    }
    let d = domain.len();
    let cells = bins
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidParameter("too many histogram cells".into()))?;
    let mut counts = vec![0u64; cells];
    let mut total = 0u64;
    'outer: for s in samples {
        if s.len() < d {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
        let mut flat = 0usize;
        for (k, (lo, hi)) in domain.iter().enumerate() {
            let v = s[k];
            if !(v >= *lo && v < *hi) {
                continue 'outer;
            }
            let b = (((v - lo) / (hi - lo)) * bins as f64) as usize;
            flat = flat * bins + b.min(bins - 1);
        }
        counts[flat] += 1;
        total += 1;
    }
    let mut h = Histogram {
        bins,
        domain: domain.to_vec(),
        counts,
        total,
        density: Vec::new(),
    };
    let scale = 1.0 / (h.total.max(1) as f64 * h.bin_volume());
    h.density = h.counts.iter().map(|&c| c as f64 * scale).collect();
    Ok(h)
}

/// Histogram whose bins are the grid cells centred at the grid nodes.
pub fn histogram_on_grid(samples: &[Vec<f64>], g: &GridSpec) -> Result<Histogram> {
    let h = g.spacing();
    let domain: Vec<(f64, f64)> = (0..g.dim())
        .map(|k| {
            let (lo, hi) = g.bounds(k);
            (lo - 0.5 * h, hi - 0.5 * h)
        })
        .collect();
    histogram(samples, g.n(), &domain)
}

/// `|Σ sqrt(hist_k) sqrt(σ_k)|` with both sides normalized on the common cells.
pub fn empirical_overlap(hist: &Histogram, p: &Potential, beta: f64, g: &GridSpec) -> Result<f64> {
    if hist.bins != g.n() || hist.dim() != g.dim() {
        return Err(Error::InvalidGrid(format!(
            "histogram has {} bins on {} axes, grid has {} points on {} axes",
            hist.bins,
            hist.dim(),
            g.n(),
            g.dim()
        )));
    }
    let sigma = gibbs_probabilities(p, beta, g)?;
    Ok(hist
        .masses()
        .iter()
        .zip(&sigma)
        .map(|(a, b)| (a * b).sqrt())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::potentials::{cap_above, harmonic, quartic_cosine_1d};

    fn params(beta: f64, dt: f64, n: usize, seed: u64) -> ChainParams {
        ChainParams::new(beta, dt, n, seed)
    }

    #[test]
    fn free_walk_variance() {
        let flat = cap_above(&harmonic(1.0, 1), -1.0);
        let mut pr = params(1.0, 0.01, 100_001, 4);
        pr.burn_in = Some(0);
        let b = ula_chain(&flat, &pr, &[0.0]).unwrap();
        let inc: Vec<f64> = b.samples.windows(2).map(|w| w[1][0] - w[0][0]).collect();
        let var = inc.iter().map(|v| v * v).sum::<f64>() / inc.len() as f64;
        assert!((var / 0.02 - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn ula_is_deterministic_and_guarded() {
        let p = harmonic(1.0, 2);
        let a = ula_chain(&p, &params(1.0, 0.01, 500, 9), &[0.5, 0.5]).unwrap();
        let b = ula_chain(&p, &params(1.0, 0.01, 500, 9), &[0.5, 0.5]).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.len(), 450);
        let stiff = harmonic(1000.0, 1);
        assert!(matches!(
            ula_chain(&stiff, &params(1.0, 0.01, 1000, 1), &[1.0]),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn mala_small_step_accepts_everything() {
        let p = harmonic(1.0, 1);
        let b = mala_chain(&p, &params(1.0, 1e-6, 2000, 2), &[0.3]).unwrap();
        assert!(b.acceptance_rate.unwrap() >= 0.999);
    }

    #[test]
    fn reld_without_swaps_is_two_ula_chains() {
        let p = quartic_cosine_1d();
        let reld = ReldParams::new(4.0, 1.0, 0.0, build_grid(1, 8, 3.0).unwrap()).unwrap();
        let pr = params(4.0, 1e-3, 2000, 11);
        let r = reld_sde(&p, &reld, &pr, &[0.5], &[-0.5]).unwrap();
        let x = ula_chain(&p, &pr, &[0.5]).unwrap();
        let mut py = params(1.0, 1e-3, 2000, 11);
        py.stream = Y_STREAM;
        let y = ula_chain(&p, &py, &[-0.5]).unwrap();
        for ((row, a), b) in r.samples.iter().zip(&x.samples).zip(&y.samples) {
            assert_eq!(row[0], a[0]);
            assert_eq!(row[1], b[0]);
        }
        assert_eq!(r.swap_events, Some(0));
    }

    #[test]
    fn equal_temperatures_always_swap() {
        let p = quartic_cosine_1d();
        let reld = ReldParams::new(2.0, 2.0, 50.0, build_grid(1, 8, 3.0).unwrap()).unwrap();
        let r = reld_sde(&p, &reld, &params(2.0, 1e-3, 5000, 3), &[0.5], &[-0.5]).unwrap();
        assert!(r.swap_events.unwrap() > 0);
        assert_eq!(r.acceptance_rate, Some(1.0));
    }

    #[test]
    fn histogram_bins() {
        let s = vec![vec![0.1], vec![0.1], vec![0.1]];
        let h = histogram(&s, 4, &[(0.0, 1.0)]).unwrap();
        assert_eq!(h.counts, vec![3, 0, 0, 0]);
        assert!((h.density[0] - 4.0).abs() < 1e-12);
        // right-open: the upper edge is outside
        let h = histogram(&[vec![1.0], vec![0.25]], 4, &[(0.0, 1.0)]).unwrap();
        assert_eq!(h.counts, vec![0, 1, 0, 0]);
        assert!(histogram(&s, 1, &[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn overlap_of_exact_gibbs_is_one() {
        let g = build_grid(1, 40, 3.0).unwrap();
        let p = quartic_cosine_1d();
        let sigma = gibbs_probabilities(&p, 2.0, &g).unwrap();
        let total = 1_000_000u64;
        let counts: Vec<u64> = sigma.iter().map(|s| (s * total as f64).round() as u64).collect();
        let samples: Vec<Vec<f64>> = counts
            .iter()
            .enumerate()
            .flat_map(|(k, &c)| std::iter::repeat_n(vec![g.coordinate(0, k)], c as usize))
            .collect();
        let h = histogram_on_grid(&samples, &g).unwrap();
        assert!((empirical_overlap(&h, &p, 2.0, &g).unwrap() - 1.0).abs() < 1e-6);
    }
}
