//! Singular value thresholding of a warm start, by explicit SVD filtering or
//! by a matrix-free Chebyshev recurrence in the Witten Hamiltonian.

use std::io::Write;
use std::path::Path;

use faer::c64;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::block::{BlockOperator, DENSE_GUARD};
use crate::chebfilter::{clenshaw, degree_for, edges_between, validate_filter, FilterSpec};
use crate::error::{Error, Result};
use crate::grid::{gibbs_state, norm, GridSpec, WaveState};
use crate::potentials::Potential;
use crate::spectrum::{spectral_report, SpectralMode, SpectralReport};

/// Post-selection floor on the success probability.
pub const SUCCESS_FLOOR: f64 = 1e-8;

/// `‖T_k(Y) φ‖` may not exceed this multiple of `‖φ‖`.
const RECURRENCE_LIMIT: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvtRoute {
    Svd,
    Recurrence,
}

#[derive(Clone, Debug)]
pub struct SvtResult {
    pub state: WaveState,
    /// `‖P φ‖²` for the unit-norm input.
    pub success_probability: f64,
    /// `‖𝕃 state‖ / α`.
    pub residual: f64,
    pub route: SvtRoute,
    pub filter: FilterSpec,
    pub degree: usize,
}

impl SvtResult {
    /// `|<reference|state>|²`.
    pub fn fidelity(&self, reference: &WaveState) -> Result<f64> {
        Ok(self.state.inner(reference)?.norm_sqr())
    }
}

fn check_input(b: &BlockOperator, phi: &WaveState) -> Result<()> {
    if phi.len() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: b.cols(),
            got: phi.len(),
        });
    }
    Ok(())
}

fn finish(b: &BlockOperator, fs: &FilterSpec, out: Vec<Complex64>, grid: &GridSpec, route: SvtRoute) -> Result<SvtResult> {
    let n = norm(&out);
    let success_probability = n * n;
    if !(success_probability >= SUCCESS_FLOOR) {
        return Err(Error::PostSelectionFloor {
            norm: success_probability,
            floor: SUCCESS_FLOOR,
        });
    }
    let state = WaveState::new(out, grid.clone())?;
    let residual = norm(&b.apply(state.amplitudes())) / b.alpha();
    Ok(SvtResult {
        state,
        success_probability,
        residual,
        route,
        filter: fs.clone(),
        degree: fs.degree,
    })
}

/// `V P(Σ/α) V^† φ` from the cached dense SVD of `𝕃`.
pub fn threshold_svd(b: &BlockOperator, fs: &FilterSpec, phi: &WaveState) -> Result<SvtResult> {
    check_input(b, phi)?;
    let svd = b.dense_svd()?;
    let v = &svd.right_vectors;
    let n = b.cols();
    let alpha = b.alpha();
    let x = phi.amplitudes();
    let mut out = vec![Complex64::default(); n];
    for (k, s) in svd.singular_values.iter().enumerate() {
        let col = v.col(k);
        let mut c = c64::new(0.0, 0.0);
        for i in 0..n {
            c += col[i].conj() * x[i];
        }
        let weight = clenshaw(&fs.coeffs, (s / alpha).min(1.0)) * c;
        for i in 0..n {
            out[i] += col[i] * weight;
        }
    }
    finish(b, fs, out, phi.grid(), SvtRoute::Svd)
}

/// Applies `Σ e_k T_k(Y) φ` with `Y = 2H/α² - I` (so that `2x² - 1 = Y` for
/// `x = σ/α`), using only applications of `H = 𝕃^† 𝕃`.
pub fn threshold_recurrence(b: &BlockOperator, fs: &FilterSpec, phi: &WaveState) -> Result<SvtResult> {
    check_input(b, phi)?;
    let e = fs.eigen_axis_coefficients();
    let x = phi.amplitudes();
    let s = 2.0 / (b.alpha() * b.alpha());
    let apply_y = |v: &[Complex64]| -> Vec<Complex64> {
        let h = b.witten_apply(v);
        h.iter().zip(v).map(|(a, b)| a * s - b).collect()
    };
    let limit = RECURRENCE_LIMIT * norm(x);
    let mut out: Vec<Complex64> = x.iter().map(|v| v * e[0]).collect();
    if e.len() > 1 {
        let mut prev = x.to_vec();
        let mut cur = apply_y(x);
        out.iter_mut().zip(&cur).for_each(|(o, t)| *o += t * e[1]);
        for (k, ek) in e.iter().enumerate().skip(2) {
            let ycur = apply_y(&cur);
            let next: Vec<Complex64> = ycur.iter().zip(&prev).map(|(y, p)| y * 2.0 - p).collect();
            let nn = norm(&next);
            if !(nn <= limit) {
                return Err(Error::RecurrenceOverflow { step: k, norm: nn });
            }
            out.iter_mut().zip(&next).for_each(|(o, t)| *o += t * *ek);
            prev = std::mem::replace(&mut cur, next);
        }
    }
    finish(b, fs, out, phi.grid(), SvtRoute::Recurrence)
}

pub fn threshold(b: &BlockOperator, fs: &FilterSpec, phi: &WaveState, route: SvtRoute) -> Result<SvtResult> {
    match route {
        SvtRoute::Svd => threshold_svd(b, fs, phi),
        SvtRoute::Recurrence => threshold_recurrence(b, fs, phi),
    }
}

/// JSON-lines record of pipeline stages.
#[derive(Default)]
pub struct StageLog {
    entries: Vec<serde_json::Value>,
    sink: Option<std::io::BufWriter<std::fs::File>>,
}

impl StageLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        Ok(Self {
            entries: Vec::new(),
            sink: Some(std::io::BufWriter::new(std::fs::File::create(path)?)),
        })
    }

    pub fn record(&mut self, stage: &str, mut fields: serde_json::Value) -> Result<()> {
        if let Some(obj) = fields.as_object_mut() {
            obj.insert("stage".into(), json!(stage));
        }
        log::info!("{stage}: {fields}");
        if let Some(w) = self.sink.as_mut() {
            writeln!(w, "{fields}")?;
            w.flush()?;
        }
        self.entries.push(fields);
        Ok(())
    }

    pub fn entries(&self) -> &[serde_json::Value] {
        &self.entries
    }
}

/// Where the pipeline gets `σ₁ < σ₂` from.
#[derive(Clone, Debug)]
pub enum GapSource {
    /// Dense eigensolve when the guard allows, deflated Lanczos otherwise.
    Auto,
    Spectral(SpectralMode),
    /// User-supplied smallest two singular values of `𝕃` (unnormalized).
    Supplied { sigma1: f64, sigma2: f64 },
}

#[derive(Clone, Debug)]
pub struct PrepareOptions {
    pub gap: GapSource,
    pub route: SvtRoute,
    /// Constant in `degree_for`.
    pub degree_constant: f64,
    /// Overrides the degree from `degree_for`.
    pub degree: Option<usize>,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            gap: GapSource::Auto,
            route: SvtRoute::Recurrence,
            degree_constant: 12.0,
            degree: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub result: SvtResult,
    /// `None` when the gap was supplied.
    pub report: Option<SpectralReport>,
    pub warm_overlap: f64,
    pub fidelity: f64,
}

/// Factors, alpha, gap estimate, filter design and thresholding, each stage
/// logged to `log`.
pub fn prepare_gibbs_with(
    p: &Potential,
    beta: f64,
    g: &GridSpec,
    phi: &WaveState,
    eps: f64,
    opts: &PrepareOptions,
    log: &mut StageLog,
) -> Result<Prepared> {
    let b = BlockOperator::langevin(p, beta, g).map_err(|e| e.in_stage("factors"))?;
    let reference = gibbs_state(p, beta, g).map_err(|e| e.in_stage("factors"))?;
    let warm_overlap = phi.inner(&reference).map_err(|e| e.in_stage("warm-start"))?.norm();
    log.record(
        "factors",
        json!({"potential": p.name(), "beta": beta, "n": g.n(), "dim": g.dim(), "alpha": b.alpha(), "warm_overlap": warm_overlap}),
    )?;

    let (sigma1, sigma2, report) = match &opts.gap {
        GapSource::Supplied { sigma1, sigma2 } => (*sigma1, *sigma2, None),
        source => {
            let mode = match source {
                GapSource::Spectral(m) => m.clone(),
                _ if b.cols() <= DENSE_GUARD => SpectralMode::DenseEigen,
                _ => SpectralMode::iterative(reference.clone()),
            };
            let r = spectral_report(&b, &mode).map_err(|e| e.in_stage("gap"))?;
            (r.singular_values[0], r.singular_values[1], Some(r))
        }
    };
    let (s1, s2) = edges_between(sigma1, sigma2, b.alpha()).map_err(|e| e.in_stage("filter"))?;
    log.record("gap", json!({"sigma1": sigma1, "sigma2": sigma2, "s1": s1, "s2": s2}))?;

    let degree = match opts.degree {
        Some(d) => d,
        None => degree_for(s2 - s1, eps, opts.degree_constant).map_err(|e| e.in_stage("filter"))?,
    };
    let fs = FilterSpec::design(s1, s2, 0.25 * (s2 - s1), degree, eps).map_err(|e| e.in_stage("filter"))?;
    let (fs, rep) = validate_filter(&fs);
    log.record(
        "filter",
        json!({"degree": degree, "pass_err": rep.pass_err, "stop_err": rep.stop_err, "sup_norm": rep.sup_norm}),
    )?;

    let result = threshold(&b, &fs, phi, opts.route).map_err(|e| e.in_stage("threshold"))?;
    let fidelity = result.fidelity(&reference)?;
    log.record(
        "threshold",
        json!({
            "route": opts.route,
            "success_probability": result.success_probability,
            "residual": result.residual,
            "fidelity": fidelity,
        }),
    )?;
    Ok(Prepared {
        result,
        report,
        warm_overlap,
        fidelity,
    })
}

/// [`prepare_gibbs_with`] using default options and an in-memory log.
pub fn prepare_gibbs(p: &Potential, beta: f64, g: &GridSpec, phi: &WaveState, eps: f64) -> Result<(SvtResult, SpectralReport)> {
    let mut log = StageLog::new();
    let out = prepare_gibbs_with(p, beta, g, phi, eps, &PrepareOptions::default(), &mut log)?;
    let report = out.report.expect("gap is computed, not supplied");
    Ok((out.result, report))
}
