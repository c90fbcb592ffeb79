//! Experiment runners. Each one sweeps the configured betas on a worker pool,
//! checkpoints every finished entry and writes CSV outputs plus a manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::block::{BlockOperator, DENSE_GUARD};
use crate::chebfilter::{validate_filter, FilterReport, FilterSpec};
use crate::config::{ExperimentConfig, ExperimentKind, SampleSource, SpectralChoice};
use crate::error::{Error, Result};
use crate::factors::assemble_langevin_factors;
use crate::grid::{gaussian_state, gibbs_probabilities, gibbs_state, gibbs_weights, norm, GridSpec, WaveState};
use crate::lindblad::{rk4_evolve, weak_convergence_many, DensityState, EvolveOptions, Observer, Snapshot};
use crate::metrics::{boost_resolution, chi2_divergence, measure_and_jitter, riemann_density, tv_distance, MetricRow};
use crate::potentials::Potential;
use crate::reld::{joint_gibbs_state, ReldParams};
use crate::samplers::{chain_rng, histogram_on_grid, mala_chain, reld_sde, run_chains, ula_chain, ChainParams, SampleBatch};
use crate::spectrum::{singular_gap, spectral_report, SpectralMethod, SpectralMode};
use crate::svt::{prepare_gibbs_with, threshold, GapSource, PrepareOptions, StageLog};

/// Number of threads for beta sweeps; defaults to rayon's choice.
pub const WORKERS_ENV: &str = "WITTEN_SAMPLER_WORKERS";

/// Stream offset for drawing chain starting points.
const START_STREAM: u64 = 3 << 32;

/// Operators with at most this many columns get a full SVD under `auto`.
const FULL_SVD_LIMIT: usize = 512;

pub fn version() -> String {
    match option_env!("WITTEN_SAMPLER_GIT") {
        Some(g) if !g.is_empty() => format!("v{}-{g}", env!("CARGO_PKG_VERSION")),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::config(WORKERS_ENV, format!("expected a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))
}

/// Resumable per-beta results stored under `<output>/checkpoints`.
struct Checkpoints {
    dir: Option<PathBuf>,
    key: serde_json::Value,
    name: &'static str,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile<T> {
    key: serde_json::Value,
    beta: f64,
    seed: u64,
    entry: T,
}

impl Checkpoints {
    fn new(cfg: &ExperimentConfig, enabled: bool) -> Result<Self> {
        let mut key = serde_json::to_value(cfg)?;
        if let Some(obj) = key.as_object_mut() {
            obj.remove("output");
            obj.remove("betas");
        }
        Ok(Self {
            dir: enabled.then(|| cfg.output.join("checkpoints")),
            key,
            name: cfg.experiment.name(),
        })
    }

    fn run<T, F>(&self, index: usize, beta: f64, seed: u64, f: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let Some(dir) = &self.dir else { return f() };
        let path = dir.join(format!("{}-{index:03}-beta{beta}.json", self.name));
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(cp) = serde_json::from_str::<CheckpointFile<T>>(&text) {
                if cp.key == self.key && cp.beta == beta && cp.seed == seed {
                    log::info!("resuming {} beta={beta} from {}", self.name, path.display());
                    return Ok(cp.entry);
                }
            }
        }
        let entry = f()?;
        std::fs::create_dir_all(dir)?;
        let cp = CheckpointFile {
            key: self.key.clone(),
            beta,
            seed,
            entry,
        };
        std::fs::write(&path, serde_json::to_string(&cp)?)?;
        Ok(cp.entry)
    }
}

/// Runs `f(index, beta, seed + index)` for every beta on the worker pool,
/// preserving order.
fn sweep<T, F>(cfg: &ExperimentConfig, checkpoints: bool, f: F) -> Result<Vec<T>>
where
    T: Serialize + DeserializeOwned + Send,
    F: Fn(usize, f64, u64) -> Result<T> + Sync,
{
    let cp = Checkpoints::new(cfg, checkpoints)?;
    let pool = worker_pool()?;
    pool.install(|| {
        cfg.betas
            .par_iter()
            .enumerate()
            .map(|(i, &beta)| {
                let seed = cfg.seed.wrapping_add(i as u64);
                cp.run(i, beta, seed, || f(i, beta, seed))
                    .map_err(|e| e.in_stage(format!("{}[beta={beta}]", cfg.experiment.name())))
            })
            .collect()
    })
}

/// Least-squares slope and coefficient of determination.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.12e}"))
}

// ---------------------------------------------------------------- gap-scan

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRow {
    pub beta: f64,
    /// Eigen gap of `H` (classical spectral gap).
    pub ld_gap: f64,
    pub reld_gap: f64,
    /// `sqrt(σ₂² − σ₁²)` of the block operator.
    pub ld_singular_gap: f64,
    pub reld_singular_gap: f64,
    pub ld_method: SpectralMethod,
    pub reld_method: SpectralMethod,
    pub ld_residual: f64,
    pub reld_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapScan {
    pub rows: Vec<GapRow>,
    /// Slope of `log(1/gap)` against beta.
    pub ld_slope: f64,
    pub reld_slope: f64,
    /// Largest `|singular_gap / sqrt(gap) − 1|` over all rows.
    pub sqrt_relation_error: f64,
}

fn spectral_mode(choice: SpectralChoice, cols: usize, reference: impl FnOnce() -> Result<WaveState>) -> Result<SpectralMode> {
    Ok(match choice {
        SpectralChoice::Dense => SpectralMode::Dense,
        SpectralChoice::DenseEigen => SpectralMode::DenseEigen,
        SpectralChoice::Iterative => SpectralMode::iterative(reference()?),
        SpectralChoice::Auto if cols <= FULL_SVD_LIMIT => SpectralMode::Dense,
        SpectralChoice::Auto if cols <= DENSE_GUARD => SpectralMode::DenseEigen,
        SpectralChoice::Auto => SpectralMode::iterative(reference()?),
    })
}

pub fn gap_scan(cfg: &ExperimentConfig, checkpoints: bool) -> Result<GapScan> {
    let p = cfg.potential()?;
    let g = cfg.grid_spec()?;
    let rows = sweep(cfg, checkpoints, |_, beta, _| {
        let ld = BlockOperator::langevin(&p, beta, &g).map_err(|e| e.in_stage("ld-factors"))?;
        let mode = spectral_mode(cfg.spectral, ld.cols(), || gibbs_state(&p, beta, &g))?;
        let ld_rep = spectral_report(&ld, &mode).map_err(|e| e.in_stage("ld-gap"))?;

        let params = ReldParams::new(beta, cfg.reld.beta_prime, cfg.reld.mu, g.clone()).map_err(|e| e.in_stage("reld-factors"))?;
        let re = BlockOperator::reld(&p, &params).map_err(|e| e.in_stage("reld-factors"))?;
        let mode = spectral_mode(cfg.spectral, re.cols(), || joint_gibbs_state(&p, &params))?;
        let re_rep = spectral_report(&re, &mode).map_err(|e| e.in_stage("reld-gap"))?;
        log::info!(
            "gap-scan beta={beta}: ld {:.4e} ({:?}), reld {:.4e} ({:?})",
            ld_rep.hamiltonian_gap,
            ld_rep.method,
            re_rep.hamiltonian_gap,
            re_rep.method
        );
        Ok(GapRow {
            beta,
            ld_gap: ld_rep.hamiltonian_gap,
            reld_gap: re_rep.hamiltonian_gap,
            ld_singular_gap: singular_gap(&ld_rep.singular_values),
            reld_singular_gap: singular_gap(&re_rep.singular_values),
            ld_method: ld_rep.method,
            reld_method: re_rep.method,
            ld_residual: ld_rep.residual,
            reld_residual: re_rep.residual,
        })
    })?;
    let betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
    let inv_log = |f: fn(&GapRow) -> f64| -> Vec<f64> { rows.iter().map(|r| (1.0 / f(r)).ln()).collect() };
    let (ld_slope, reld_slope) = if rows.len() >= 2 {
        (fit_line(&betas, &inv_log(|r| r.ld_gap)).0, fit_line(&betas, &inv_log(|r| r.reld_gap)).0)
    } else {
        (f64::NAN, f64::NAN)
    };
    let sqrt_relation_error = rows
        .iter()
        .flat_map(|r| [(r.ld_singular_gap, r.ld_gap), (r.reld_singular_gap, r.reld_gap)])
        .map(|(s, l)| (s / l.sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(GapScan {
        rows,
        ld_slope,
        reld_slope,
        sqrt_relation_error,
    })
}

fn write_gap_scan(dir: &Path, scan: &GapScan) -> Result<Vec<String>> {
    write_csv(
        &dir.join("gaps.csv"),
        "beta,ld_gap,reld_gap,ld_singular_gap,reld_singular_gap,inv_ld_gap,inv_reld_gap,inv_ld_singular_gap,inv_reld_singular_gap,ld_method,reld_method",
        scan.rows.iter().map(|r| {
            format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                r.beta,
                r.ld_gap,
                r.reld_gap,
                r.ld_singular_gap,
                r.reld_singular_gap,
                1.0 / r.ld_gap,
                1.0 / r.reld_gap,
                1.0 / r.ld_singular_gap,
                1.0 / r.reld_singular_gap,
                method_name(r.ld_method),
                method_name(r.reld_method),
            )
        }),
    )?;
    Ok(vec!["gaps.csv".into()])
}

fn method_name(m: SpectralMethod) -> &'static str {
    match m {
        SpectralMethod::DenseSvd => "dense_svd",
        SpectralMethod::DenseEigen => "dense_eigen",
        SpectralMethod::IterativeDeflated => "iterative_deflated",
    }
}

// ---------------------------------------------------------------- mb-compare

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareRow {
    pub beta: f64,
    /// Median over chains of the first checked step count at which the
    /// histogram overlap reaches the target; `None` if fewer than half reach it.
    pub mala_iterations: Option<usize>,
    pub mala_hits: Vec<Option<usize>>,
    pub mala_acceptance: f64,
    /// Smallest degree (to within the bisection tolerance) whose filtered
    /// warm start reaches the target overlap.
    pub svt_degree: Option<usize>,
    pub svt_overlap: f64,
    pub warm_overlap: f64,
    pub alpha: f64,
    /// `‖𝕃 ψ‖ / α` on the SVT grid.
    pub kernel_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// Ratios between consecutive betas.
    pub mala_growth: Vec<Option<f64>>,
    pub svt_growth: Vec<Option<f64>>,
}

/// Bin index of `x` among cells centred on the grid nodes.
fn cell_of(g: &GridSpec, x: &[f64]) -> Option<usize> {
    let h = g.spacing();
    let mut flat = 0;
    for (k, v) in x.iter().enumerate().take(g.dim()) {
        let lo = g.bounds(k).0 - 0.5 * h;
        let t = (v - lo) / h;
        if !(t >= 0.0 && t < g.n() as f64) {
            return None;
        }
        flat = flat * g.n() + t as usize;
    }
    Some(flat)
}

/// First multiple of `every` at which `Σ sqrt(count/k · σ)` reaches `target`.
fn first_hit(samples: &[Vec<f64>], g: &GridSpec, sigma: &[f64], every: usize, target: f64) -> Option<usize> {
    let mut counts = vec![0u64; g.len()];
    for (k, s) in samples.iter().enumerate() {
        if let Some(c) = cell_of(g, s) {
            counts[c] += 1;
        }
        let n = k + 1;
        if n % every == 0 {
            let ov: f64 = counts
                .iter()
                .zip(sigma)
                .filter(|(c, _)| **c > 0)
                .map(|(c, s)| (*c as f64 / n as f64 * s).sqrt())
                .sum();
            if ov >= target {
                return Some(n);
            }
        }
    }
    None
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

pub fn mb_compare(cfg: &ExperimentConfig, checkpoints: bool) -> Result<Comparison> {
    let p = cfg.potential()?;
    let c = &cfg.compare;
    let base = cfg.grid_spec()?;
    let hist_grid = {
        let mut gc = cfg.grid.clone();
        gc.n = cfg.sampler.bins;
        gc.build("sampler.bins")?
    };
    let svt_grid = match &c.svt_grid {
        Some(sg) => sg.build("compare.svt_grid")?,
        None => base,
    };
    let rows = sweep(cfg, checkpoints, |_, beta, seed| {
        // MALA chains start at draws from the same Gaussian as the SVT warm
        // start unless a fixed point is configured
        let sigma = gibbs_probabilities(&p, beta, &hist_grid)?;
        let chains = run_chains(cfg.sampler.chains, |stream| {
            let x0 = match &cfg.sampler.x0 {
                Some(x) => x.clone(),
                None => {
                    let mut rng = chain_rng(seed, stream + START_STREAM);
                    c.warm_center
                        .iter()
                        .map(|m| m + c.warm_std * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                }
            };
            let mut params = ChainParams::new(beta, cfg.sampler.dt, c.max_steps, seed);
            params.burn_in = Some(0);
            params.stream = stream;
            mala_chain(&p, &params, &x0)
        });
        let mut hits = Vec::new();
        let mut acceptance = 0.0;
        for ch in chains {
            let ch = ch.map_err(|e| e.in_stage("mala"))?;
            acceptance += ch.acceptance_rate.unwrap_or(0.0);
            hits.push(first_hit(&ch.samples, &hist_grid, &sigma, c.check_every, c.target_overlap));
        }
        let reached: Vec<usize> = hits.iter().flatten().copied().collect();
        let mala_iterations = (2 * reached.len() > hits.len()).then(|| {
            // unreached chains count as slower than every reached one
            let mut all = reached.clone();
            all.resize(hits.len(), usize::MAX);
            median(all)
        });

        // SVT degree search on the finer grid
        let b = BlockOperator::langevin(&p, beta, &svt_grid).map_err(|e| e.in_stage("svt-factors"))?;
        let psi = gibbs_state(&p, beta, &svt_grid)?;
        let phi = gaussian_state(&c.warm_center, c.warm_std, &svt_grid)?;
        let warm_overlap = phi.inner(&psi)?.norm();
        let s1 = norm(&b.apply(psi.amplitudes())) / b.alpha();
        let overlap_at = |d: usize| -> Result<f64> {
            let delta = c.width_constant / d as f64;
            let s2 = s1 + 2.0 * delta;
            if s2 > 1.0 {
                return Ok(0.0);
            }
            let fs = FilterSpec::design(s1, s2, delta, d, cfg.filter.eps)?;
            match threshold(&b, &fs, &phi, cfg.filter.route) {
                Ok(r) => Ok(r.state.inner(&psi)?.norm()),
                Err(Error::PostSelectionFloor { .. }) => Ok(0.0),
                Err(e) => Err(e),
            }
        };
        let mut d = c.min_degree;
        let mut found = None;
        while d <= c.max_degree {
            let ov = overlap_at(d).map_err(|e| e.in_stage("svt"))?;
            log::info!("mb-compare beta={beta}: degree {d} overlap {ov:.4}");
            if ov >= c.target_overlap {
                found = Some((d, ov));
                break;
            }
            d *= 2;
        }
        let mut svt_overlap = 0.0;
        let svt_degree = match found {
            Some((hi0, ov)) if hi0 > c.min_degree => {
                let (mut lo, mut hi, mut best) = (hi0 / 2, hi0, ov);
                while hi - lo > (hi / 64).max(1) {
                    let mid = (lo + hi) / 2;
                    let ov = overlap_at(mid).map_err(|e| e.in_stage("svt"))?;
                    if ov >= c.target_overlap {
                        hi = mid;
                        best = ov;
                    } else {
                        lo = mid;
                    }
                }
                svt_overlap = best;
                Some(hi)
            }
            Some((d, ov)) => {
                svt_overlap = ov;
                Some(d)
            }
            None => None,
        };
        Ok(CompareRow {
            beta,
            mala_iterations,
            mala_hits: hits,
            mala_acceptance: acceptance / cfg.sampler.chains as f64,
            svt_degree,
            svt_overlap,
            warm_overlap,
            alpha: b.alpha(),
            kernel_residual: s1,
        })
    })?;
    let ratio = |a: Option<usize>, b: Option<usize>| match (a, b) {
        (Some(a), Some(b)) if a > 0 => Some(b as f64 / a as f64),
        _ => None,
    };
    let mala_growth = rows.windows(2).map(|w| ratio(w[0].mala_iterations, w[1].mala_iterations)).collect();
    let svt_growth = rows.windows(2).map(|w| ratio(w[0].svt_degree, w[1].svt_degree)).collect();
    Ok(Comparison {
        rows,
        mala_growth,
        svt_growth,
    })
}

fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<Vec<String>> {
    let u = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
    write_csv(
        &dir.join("mb_compare.csv"),
        "beta,mala_iterations,mala_acceptance,svt_degree,svt_overlap,warm_overlap,alpha,kernel_residual",
        cmp.rows.iter().map(|r| {
            format!(
                "{},{},{:.6},{},{:.8},{:.8},{:.6e},{:.6e}",
                r.beta,
                u(r.mala_iterations),
                r.mala_acceptance,
                u(r.svt_degree),
                r.svt_overlap,
                r.warm_overlap,
                r.alpha,
                r.kernel_residual
            )
        }),
    )?;
    Ok(vec!["mb_compare.csv".into()])
}

// ---------------------------------------------------------------- lindblad-warmstart

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WarmstartRow {
    pub beta: f64,
    pub initial_overlap: f64,
    pub final_overlap: f64,
    /// Smallest overlap after the initial state.
    pub min_overlap: f64,
    pub min_eigenvalue: f64,
    pub max_trace_drift: f64,
    pub snapshots: Vec<Snapshot>,
}

pub fn lindblad_warmstart(cfg: &ExperimentConfig, checkpoints: bool) -> Result<Vec<WarmstartRow>> {
    let p = cfg.potential()?;
    let g = cfg.grid_spec()?;
    let l = &cfg.lindblad;
    sweep(cfg, checkpoints, |_, beta, _| {
        let fs = assemble_langevin_factors(&p, beta, &g).map_err(|e| e.in_stage("factors"))?;
        let psi = gibbs_state(&p, beta, &g)?;
        let phi = gaussian_state(&l.center, l.std, &g)?;
        let rho0 = DensityState::pure(&phi)?;
        let traj = rk4_evolve(
            &rho0,
            &fs,
            &EvolveOptions {
                dt: l.dt,
                t_final: l.t_final,
                observe_every: l.observe_every,
                observers: vec![Observer::Overlap(psi), Observer::MinEigenvalue],
            },
        )
        .map_err(|e| e.in_stage("rk4"))?;
        let ov: Vec<f64> = traj.snapshots.iter().map(|s| s.overlap.unwrap_or(f64::NAN)).collect();
        let row = WarmstartRow {
            beta,
            initial_overlap: ov[0],
            final_overlap: *ov.last().expect("final snapshot"),
            min_overlap: ov[1..].iter().cloned().fold(f64::INFINITY, f64::min),
            min_eigenvalue: traj.snapshots.iter().filter_map(|s| s.min_eig).fold(f64::INFINITY, f64::min),
            max_trace_drift: traj.snapshots.iter().map(|s| (s.trace - 1.0).abs()).fold(0.0, f64::max),
            snapshots: traj.snapshots,
        };
        log::info!(
            "lindblad-warmstart beta={beta}: overlap {:.4} -> {:.4}",
            row.initial_overlap,
            row.final_overlap
        );
        Ok(row)
    })
}

fn write_warmstart(dir: &Path, rows: &[WarmstartRow]) -> Result<Vec<String>> {
    let mut files = vec!["warmstart_summary.csv".to_string()];
    write_csv(
        &dir.join(&files[0]),
        "beta,initial_overlap,final_overlap,min_overlap,min_eigenvalue,max_trace_drift",
        rows.iter().map(|r| {
            format!(
                "{},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e}",
                r.beta, r.initial_overlap, r.final_overlap, r.min_overlap, r.min_eigenvalue, r.max_trace_drift
            )
        }),
    )?;
    for r in rows {
        let name = format!("overlap_beta{}.csv", r.beta);
        write_csv(
            &dir.join(&name),
            "t,overlap,trace,min_eig",
            r.snapshots.iter().map(|s| format!("{:.8},{},{:.15},{}", s.t, opt(s.overlap), s.trace, opt(s.min_eig))),
        )?;
        files.push(name);
    }
    Ok(files)
}

// ---------------------------------------------------------------- filter-design

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterRow {
    pub degree: usize,
    pub report: FilterReport,
    pub spec: FilterSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterDesign {
    pub rows: Vec<FilterRow>,
    /// Fit of `ln(stop error)` against degree.
    pub log_stop_slope: f64,
    pub log_stop_r2: f64,
}

pub fn filter_design(cfg: &ExperimentConfig) -> Result<FilterDesign> {
    let f = &cfg.filter;
    let rows = f
        .degrees
        .iter()
        .map(|&d| {
            let spec = FilterSpec::design(f.s1, f.s2, f.delta, d, f.eps).map_err(|e| e.in_stage(format!("filter[degree={d}]")))?;
            let (spec, report) = validate_filter(&spec);
            Ok(FilterRow { degree: d, report, spec })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.degree as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.report.stop_err.max(f64::MIN_POSITIVE).ln()).collect();
    let (log_stop_slope, log_stop_r2) = if rows.len() >= 2 { fit_line(&xs, &ys) } else { (f64::NAN, f64::NAN) };
    Ok(FilterDesign {
        rows,
        log_stop_slope,
        log_stop_r2,
    })
}

fn write_filter_design(dir: &Path, fd: &FilterDesign) -> Result<Vec<String>> {
    let mut files = vec!["filter_summary.csv".to_string()];
    write_csv(
        &dir.join(&files[0]),
        "degree,pass_err,stop_err,sup_norm,scale",
        fd.rows.iter().map(|r| {
            format!(
                "{},{:.6e},{:.6e},{:.15},{:.15}",
                r.degree, r.report.pass_err, r.report.stop_err, r.report.sup_norm, r.spec.rescale.scale
            )
        }),
    )?;
    for r in &fd.rows {
        let csv = format!("filter_d{}.csv", r.degree);
        let js = format!("filter_d{}.json", r.degree);
        r.spec.write_csv(&dir.join(&csv), 2001)?;
        r.spec.write_json(&dir.join(&js))?;
        files.push(csv);
        files.push(js);
    }
    Ok(files)
}

// ---------------------------------------------------------------- sample

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleEntry {
    pub metrics: MetricRow,
    /// Histogram density on the comparison grid.
    pub density: Vec<f64>,
    pub reference: Vec<f64>,
    pub acceptance_rate: Option<f64>,
    pub fidelity: Option<f64>,
    #[serde(skip)]
    pub batch: Option<SampleBatch>,
}

fn compare_histogram(samples: &[Vec<f64>], p: &Potential, beta: f64, g: &GridSpec) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let d = g.dim();
    let xs: Vec<Vec<f64>> = samples.iter().map(|s| s[..d].to_vec()).collect();
    let h = histogram_on_grid(&xs, g)?;
    let cv = g.cell_volume();
    let reference = riemann_density(&gibbs_weights(p, beta, g)?, cv)?;
    let tv = tv_distance(&h.density, &reference, cv)?;
    let chi2 = chi2_divergence(&h.density, &reference, cv)?;
    Ok((h.density, reference, tv, chi2))
}

pub fn sample(cfg: &ExperimentConfig, keep_samples: bool) -> Result<Vec<SampleEntry>> {
    let p = cfg.potential()?;
    let g = cfg.grid_spec()?;
    let pool = worker_pool()?;
    pool.install(|| {
        cfg.betas
            .par_iter()
            .enumerate()
            .map(|(i, &beta)| {
                let seed = cfg.seed.wrapping_add(i as u64);
                sample_one(cfg, &p, &g, beta, seed, keep_samples).map_err(|e| e.in_stage(format!("sample[beta={beta}]")))
            })
            .collect()
    })
}

fn sample_one(cfg: &ExperimentConfig, p: &Potential, g: &GridSpec, beta: f64, seed: u64, keep: bool) -> Result<SampleEntry> {
    let s = &cfg.sampler;
    let m = &cfg.measure;
    match s.source {
        SampleSource::Svt => {
            let phi = gaussian_state(&m.warm_center, m.warm_std, g)?;
            let opts = PrepareOptions {
                gap: GapSource::Auto,
                route: cfg.filter.route,
                degree_constant: cfg.filter.degree_constant,
                degree: None,
            };
            let prepared = prepare_gibbs_with(p, beta, g, &phi, cfg.filter.eps, &opts, &mut StageLog::new())?;
            let fine = boost_resolution(&prepared.result.state, m.boost).map_err(|e| e.in_stage("boost"))?;
            let batch = measure_and_jitter(&fine, m.samples, seed).map_err(|e| e.in_stage("measure"))?;
            let (density, reference, tv, chi2) = compare_histogram(&batch.samples, p, beta, fine.grid())?;
            Ok(SampleEntry {
                metrics: MetricRow {
                    label: "svt".into(),
                    beta,
                    n: g.n(),
                    m: fine.grid().n(),
                    samples: batch.len(),
                    tv,
                    chi2,
                    overlap: prepared.fidelity.sqrt(),
                },
                density,
                reference,
                acceptance_rate: None,
                fidelity: Some(prepared.fidelity),
                batch: keep.then_some(batch),
            })
        }
        source => {
            let x0 = s.x0.clone().unwrap_or_else(|| vec![0.0; g.dim()]);
            let reld = match source {
                SampleSource::Reld => Some(ReldParams::new(beta, cfg.reld.beta_prime, cfg.reld.mu, g.clone())?),
                _ => None,
            };
            let batches = run_chains(s.chains, |stream| {
                let mut params = ChainParams::new(beta, s.dt, s.n_steps, seed);
                params.burn_in = s.burn_in;
                params.stream = stream;
                match (source, &reld) {
                    (SampleSource::Ula, _) => ula_chain(p, &params, &x0),
                    (SampleSource::Reld, Some(r)) => reld_sde(p, r, &params, &x0, &x0),
                    _ => mala_chain(p, &params, &x0),
                }
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("chains"))?;
            let acceptance = batches
                .iter()
                .map(|b| b.acceptance_rate)
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64);
            let mut merged = batches[0].clone();
            merged.samples = batches.iter().flat_map(|b| b.samples.iter().cloned()).collect();
            let (density, reference, tv, chi2) = compare_histogram(&merged.samples, p, beta, g)?;
            let cv = g.cell_volume();
            let overlap = density.iter().zip(&reference).map(|(a, b)| (a * b).sqrt() * cv).sum();
            let label = match source {
                SampleSource::Ula => "ula",
                SampleSource::Reld => "reld",
                _ => "mala",
            };
            Ok(SampleEntry {
                metrics: MetricRow {
                    label: label.into(),
                    beta,
                    n: g.n(),
                    m: g.n(),
                    samples: merged.len(),
                    tv,
                    chi2,
                    overlap,
                },
                density,
                reference,
                acceptance_rate: acceptance,
                fidelity: None,
                batch: keep.then_some(merged),
            })
        }
    }
}

fn write_samples(dir: &Path, entries: &[SampleEntry]) -> Result<Vec<String>> {
    let mut files = vec!["metrics.csv".to_string()];
    let rows: Vec<MetricRow> = entries.iter().map(|e| e.metrics.clone()).collect();
    crate::metrics::write_metrics_csv(&dir.join(&files[0]), &rows)?;
    for e in entries {
        let name = format!("density_beta{}.csv", e.metrics.beta);
        write_csv(
            &dir.join(&name),
            "cell,empirical_density,gibbs_density",
            e.density
                .iter()
                .zip(&e.reference)
                .enumerate()
                .map(|(k, (a, b))| format!("{k},{a:.10e},{b:.10e}")),
        )?;
        files.push(name);
        if let Some(b) = &e.batch {
            let csv = format!("samples_beta{}.csv", e.metrics.beta);
            let meta = format!("samples_beta{}.json", e.metrics.beta);
            b.write_csv(&dir.join(&csv))?;
            b.write_metadata(&dir.join(&meta))?;
            files.push(csv);
            files.push(meta);
        }
    }
    Ok(files)
}

// ---------------------------------------------------------------- weak-convergence

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeakRow {
    pub beta: f64,
    pub moment: u32,
    pub times: Vec<f64>,
    pub lindblad: Vec<f64>,
    pub fokker_planck: Vec<f64>,
    pub max_discrepancy: f64,
}

pub fn weak_convergence(cfg: &ExperimentConfig, checkpoints: bool) -> Result<Vec<WeakRow>> {
    let p = cfg.potential()?;
    let g = cfg.grid_spec()?;
    let l = &cfg.lindblad;
    let per_beta = sweep(cfg, checkpoints, |_, beta, _| {
        let fs = assemble_langevin_factors(&p, beta, &g).map_err(|e| e.in_stage("factors"))?;
        let phi = gaussian_state(&l.center, l.std, &g)?;
        // x^k along the first axis
        let ws: Vec<Vec<f64>> = l
            .moments
            .iter()
            .map(|&k| (0..g.len()).map(|i| g.point(i)[0].powi(k as i32)).collect())
            .collect();
        let out = weak_convergence_many(&fs, &p, &phi, &ws, l.dt, l.t_final, l.observe_every).map_err(|e| e.in_stage("evolve"))?;
        Ok(l.moments
            .iter()
            .zip(out)
            .map(|(&moment, w)| WeakRow {
                beta,
                moment,
                times: w.times,
                lindblad: w.lindblad,
                fokker_planck: w.fokker_planck,
                max_discrepancy: w.max_discrepancy,
            })
            .collect::<Vec<_>>())
    })?;
    Ok(per_beta.into_iter().flatten().collect())
}

fn write_weak(dir: &Path, rows: &[WeakRow]) -> Result<Vec<String>> {
    write_csv(
        &dir.join("weak_convergence.csv"),
        "beta,moment,t,lindblad,fokker_planck,abs_diff",
        rows.iter().flat_map(|r| {
            (0..r.times.len()).map(move |k| {
                format!(
                    "{},{},{:.8},{:.15e},{:.15e},{:.3e}",
                    r.beta,
                    r.moment,
                    r.times[k],
                    r.lindblad[k],
                    r.fokker_planck[k],
                    (r.lindblad[k] - r.fokker_planck[k]).abs()
                )
            })
        }),
    )?;
    Ok(vec!["weak_convergence.csv".into()])
}

// ---------------------------------------------------------------- driver

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Validates the config, runs the experiment and writes every output plus
/// `manifest.json` into `cfg.output`.
pub fn run(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    cfg.prepare_output()?;
    let start = Instant::now();
    let dir = cfg.output.as_path();
    let (outputs, summary) = match cfg.experiment {
        ExperimentKind::GapScan => {
            let scan = gap_scan(cfg, true)?;
            let files = write_gap_scan(dir, &scan).map_err(|e| e.in_stage("write"))?;
            let s = json!({"ld_slope": scan.ld_slope, "reld_slope": scan.reld_slope, "sqrt_relation_error": scan.sqrt_relation_error});
            (files, s)
        }
        ExperimentKind::MbCompare => {
            let cmp = mb_compare(cfg, true)?;
            let files = write_comparison(dir, &cmp).map_err(|e| e.in_stage("write"))?;
            (files, json!({"mala_growth": cmp.mala_growth, "svt_growth": cmp.svt_growth}))
        }
        ExperimentKind::LindbladWarmstart => {
            let rows = lindblad_warmstart(cfg, true)?;
            let files = write_warmstart(dir, &rows).map_err(|e| e.in_stage("write"))?;
            let finals: Vec<f64> = rows.iter().map(|r| r.final_overlap).collect();
            (files, json!({"final_overlaps": finals}))
        }
        ExperimentKind::FilterDesign => {
            let fd = filter_design(cfg)?;
            let files = write_filter_design(dir, &fd).map_err(|e| e.in_stage("write"))?;
            (files, json!({"log_stop_slope": fd.log_stop_slope, "log_stop_r2": fd.log_stop_r2}))
        }
        ExperimentKind::Sample => {
            let entries = sample(cfg, cfg.sampler.write_samples)?;
            let files = write_samples(dir, &entries).map_err(|e| e.in_stage("write"))?;
            let tv: Vec<f64> = entries.iter().map(|e| e.metrics.tv).collect();
            (files, json!({"tv": tv}))
        }
        ExperimentKind::WeakConvergence => {
            let rows = weak_convergence(cfg, true)?;
            let files = write_weak(dir, &rows).map_err(|e| e.in_stage("write"))?;
            let worst = rows.iter().map(|r| r.max_discrepancy).fold(0.0, f64::max);
            (files, json!({"max_discrepancy": worst}))
        }
    };
    let manifest = Manifest {
        experiment: cfg.experiment,
        version: version(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs,
        summary,
        config: cfg.clone(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::from(e).in_stage("manifest"))?;
    Ok(manifest)
}
