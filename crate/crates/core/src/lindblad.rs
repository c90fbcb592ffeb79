//! Lindblad evolution with the Witten factors as jump operators, and the
//! matching Fokker-Planck evolution in the `u = p / sqrt(σ)` variables.

use std::io::Write;
use std::path::Path;

use faer::{c64, Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::block::{check_dense, hermitize};
use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::grid::{gibbs_state, GridSpec, WaveState};
use crate::potentials::Potential;

/// Trace drift that aborts an integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Below this `sqrt(σ)` the transformed density is masked to zero.
pub const SQRT_SIGMA_FLOOR: f64 = 1e-150;

#[derive(Clone, Debug)]
pub struct DensityState {
    matrix: Mat<c64>,
    grid: GridSpec,
}

impl DensityState {
    pub fn new(matrix: Mat<c64>, grid: GridSpec) -> Result<Self> {
        let n = grid.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        check_dense("density matrix", n)?;
        Ok(Self { matrix, grid })
    }

    /// `|v><v|`.
    pub fn pure(v: &WaveState) -> Result<Self> {
        let a = v.amplitudes();
        Self::new(Mat::from_fn(a.len(), a.len(), |i, j| a[i] * a[j].conj()), v.grid().clone())
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trace(&self) -> f64 {
        (0..self.len()).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Largest `|ρ_ij - conj(ρ_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.len();
        let mut e = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                e = e.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        e
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let ev = self
            .matrix
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("eigenvalues: {e:?}")))?;
        Ok(ev.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    /// `Tr[diag(w) ρ]`.
    pub fn expectation(&self, w: &[f64]) -> f64 {
        w.iter().enumerate().map(|(i, wi)| wi * self.matrix[(i, i)].re).sum()
    }

    fn symmetrize(&mut self) {
        hermitize(&mut self.matrix);
    }
}

/// `sqrt(v^† ρ v)`, clamped at zero.
pub fn overlap(rho: &DensityState, v: &WaveState) -> Result<f64> {
    if v.len() != rho.len() {
        return Err(Error::DimensionMismatch {
            expected: rho.len(),
            got: v.len(),
        });
    }
    let a = v.amplitudes();
    let n = a.len();
    let mut acc = Complex64::default();
    for j in 0..n {
        let mut col = Complex64::default();
        for i in 0..n {
            col += a[i].conj() * rho.matrix[(i, j)];
        }
        acc += col * a[j];
    }
    Ok(acc.re.max(0.0).sqrt())
}

/// Dense jump operators and `K = Σ L_j^† L_j`, materialized once.
#[derive(Clone, Debug)]
pub struct Lindbladian {
    jumps: Vec<Mat<c64>>,
    jumps_adj: Vec<Mat<c64>>,
    k: Mat<c64>,
}

impl Lindbladian {
    pub fn new(fs: &FactorSet) -> Result<Self> {
        let n = fs.grid().len();
        check_dense("Lindblad jump operators", n)?;
        let jumps: Vec<Mat<c64>> = fs.factors().iter().map(|f| f.dense(fs.grid())).collect();
        let jumps_adj: Vec<Mat<c64>> = jumps.iter().map(|l| l.adjoint().to_owned()).collect();
        let mut k = Mat::<c64>::zeros(n, n);
        for (l, lt) in jumps.iter().zip(&jumps_adj) {
            k += lt * l;
        }
        hermitize(&mut k);
        Ok(Self { jumps, jumps_adj, k })
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    /// `Σ_j (2 L_j ρ L_j^† - {L_j^† L_j, ρ})` for Hermitian `ρ`.
    pub fn apply(&self, rho: &Mat<c64>) -> Mat<c64> {
        let kr = &self.k * rho;
        // ρK = (Kρ)^† for Hermitian ρ
        let mut out = -(&kr + kr.adjoint());
        for (l, lt) in self.jumps.iter().zip(&self.jumps_adj) {
            let lr = l * rho;
            out += (&lr * lt) * faer::Scale(c64::new(2.0, 0.0));
        }
        out
    }
}

/// The Lindblad generator at `rho`.
pub fn lindblad_rhs(rho: &DensityState, fs: &FactorSet) -> Result<Mat<c64>> {
    if fs.grid().len() != rho.len() {
        return Err(Error::DimensionMismatch {
            expected: fs.grid().len(),
            got: rho.len(),
        });
    }
    let mut out = Lindbladian::new(fs)?.apply(&rho.matrix);
    hermitize(&mut out);
    Ok(out)
}

#[derive(Clone, Debug)]
pub enum Observer {
    Overlap(WaveState),
    MinEigenvalue,
    Diagonal,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub trace: f64,
    pub overlap: Option<f64>,
    pub min_eig: Option<f64>,
    pub diagonal: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Steps between snapshots; the initial and final states are always observed.
    pub observe_every: usize,
    pub observers: Vec<Observer>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub state: DensityState,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
}

fn check_time(dt: f64, t_final: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("need dt > 0 and t_final >= 0, got {dt}, {t_final}")));
    }
    Ok((t_final / dt - 1e-9).ceil().max(0.0) as usize)
}

fn observe(t: f64, rho: &DensityState, observers: &[Observer]) -> Result<Snapshot> {
    let mut s = Snapshot {
        t,
        trace: rho.trace(),
        overlap: None,
        min_eig: None,
        diagonal: None,
    };
    for o in observers {
        match o {
            Observer::Overlap(v) => s.overlap = Some(overlap(rho, v)?),
            Observer::MinEigenvalue => s.min_eig = Some(rho.min_eigenvalue()?),
            Observer::Diagonal => s.diagonal = Some(rho.diagonal()),
        }
    }
    Ok(s)
}

fn axpy(y: &Mat<c64>, x: &Mat<c64>, s: f64) -> Mat<c64> {
    y + x * faer::Scale(c64::new(s, 0.0))
}

/// Classic RK4 for `dρ/dt = 𝔏[ρ]`, symmetrizing after every step.
pub fn rk4_evolve(rho0: &DensityState, fs: &FactorSet, opts: &EvolveOptions) -> Result<Trajectory> {
    let steps = check_time(opts.dt, opts.t_final)?;
    let gen = Lindbladian::new(fs)?;
    if gen.dim() != rho0.len() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            got: rho0.len(),
        });
    }
    let every = opts.observe_every.max(1);
    let mut rho = rho0.clone();
    let tr0 = rho.trace();
    let mut snapshots = vec![observe(0.0, &rho, &opts.observers)?];
    let dt = opts.dt;
    for step in 1..=steps {
        let r = &rho.matrix;
        let k1 = gen.apply(r);
        let k2 = gen.apply(&axpy(r, &k1, 0.5 * dt));
        let k3 = gen.apply(&axpy(r, &k2, 0.5 * dt));
        let k4 = gen.apply(&axpy(r, &k3, dt));
        let incr = (&k1 + &k4 + (&k2 + &k3) * faer::Scale(c64::new(2.0, 0.0))) * faer::Scale(c64::new(dt / 6.0, 0.0));
        rho.matrix += incr;
        rho.symmetrize();
        let t = step as f64 * dt;
        let drift = (rho.trace() - tr0).abs();
        if !(drift <= TRACE_DRIFT_LIMIT) {
            return Err(Error::TraceDrift {
                drift,
                limit: TRACE_DRIFT_LIMIT,
                time: t,
            });
        }
        if step % every == 0 || step == steps {
            snapshots.push(observe(t, &rho, &opts.observers)?);
        }
    }
    Ok(Trajectory {
        state: rho,
        snapshots,
        steps,
    })
}

/// Overlap-vs-time CSV with columns `t,overlap,trace,min_eig` (blank when
/// not observed).
pub fn write_overlap_csv(path: &Path, snapshots: &[Snapshot]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,overlap,trace,min_eig")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
    for s in snapshots {
        writeln!(f, "{:.6},{},{:.15e},{}", s.t, opt(s.overlap), s.trace, opt(s.min_eig))?;
    }
    Ok(())
}

/// Fokker-Planck trajectory as probability masses on the grid.
#[derive(Clone, Debug)]
pub struct FpTrajectory {
    pub times: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
}

/// Evolves grid probability masses `p0` (summing to one) under Fokker-Planck
/// by RK4 on `du/dt = -H u`, `p = sqrt(σ) u`. Snapshots every `observe_every`
/// steps plus the endpoints.
pub fn fp_evolve(
    p0: &[f64],
    pot: &Potential,
    beta: f64,
    g: &GridSpec,
    dt: f64,
    t_final: f64,
    observe_every: usize,
) -> Result<FpTrajectory> {
    let fs = crate::factors::assemble_langevin_factors(pot, beta, g)?;
    fp_evolve_with(p0, &fs, pot, dt, t_final, observe_every)
}

fn fp_evolve_with(
    p0: &[f64],
    fs: &FactorSet,
    pot: &Potential,
    dt: f64,
    t_final: f64,
    observe_every: usize,
) -> Result<FpTrajectory> {
    let g = fs.grid();
    if p0.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: p0.len(),
        });
    }
    if p0.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidParameter("initial density must be nonnegative".into()));
    }
    let steps = check_time(dt, t_final)?;
    let root: Vec<f64> = gibbs_state(pot, fs.beta(), g)?.amplitudes().iter().map(|a| a.re).collect();
    let mut u: Vec<Complex64> = p0
        .iter()
        .zip(&root)
        .map(|(p, r)| {
            if *r < SQRT_SIGMA_FLOOR {
                Complex64::default()
            } else {
                Complex64::new(p / r, 0.0)
            }
        })
        .collect();
    let to_mass = |u: &[Complex64]| -> Vec<f64> { u.iter().zip(&root).map(|(x, r)| x.re * r).collect() };
    let rhs = |v: &[Complex64]| -> Vec<Complex64> { fs.witten_apply(v).into_iter().map(|x| -x).collect() };
    let shifted = |v: &[Complex64], k: &[Complex64], s: f64| -> Vec<Complex64> {
        v.iter().zip(k).map(|(a, b)| a + b * s).collect()
    };
    let every = observe_every.max(1);
    let mut out = FpTrajectory {
        times: vec![0.0],
        masses: vec![to_mass(&u)],
    };
    for step in 1..=steps {
        let k1 = rhs(&u);
        let k2 = rhs(&shifted(&u, &k1, 0.5 * dt));
        let k3 = rhs(&shifted(&u, &k2, 0.5 * dt));
        let k4 = rhs(&shifted(&u, &k3, dt));
        for i in 0..u.len() {
            u[i] += (k1[i] + k4[i] + (k2[i] + k3[i]) * 2.0) * (dt / 6.0);
        }
        if step % every == 0 || step == steps {
            out.times.push(step as f64 * dt);
            out.masses.push(to_mass(&u));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct WeakConvergence {
    pub times: Vec<f64>,
    /// `Tr[ŵ ρ(t)]`.
    pub lindblad: Vec<f64>,
    /// `Σ w p(t)` over grid masses.
    pub fokker_planck: Vec<f64>,
    pub max_discrepancy: f64,
}

/// Evolves `|φ><φ|` under Lindblad and `|φ|²` under Fokker-Planck with the same
/// step, and compares the expectations of the multiplication operator `w`.
pub fn weak_convergence_check(
    fs: &FactorSet,
    pot: &Potential,
    phi: &WaveState,
    w: &[f64],
    dt: f64,
    t_final: f64,
    observe_every: usize,
) -> Result<WeakConvergence> {
    let mut out = weak_convergence_many(fs, pot, phi, &[w.to_vec()], dt, t_final, observe_every)?;
    Ok(out.remove(0))
}

/// [`weak_convergence_check`] for several test functions from one pair of runs.
pub fn weak_convergence_many(
    fs: &FactorSet,
    pot: &Potential,
    phi: &WaveState,
    ws: &[Vec<f64>],
    dt: f64,
    t_final: f64,
    observe_every: usize,
) -> Result<Vec<WeakConvergence>> {
    if let Some(w) = ws.iter().find(|w| w.len() != phi.len()) {
        return Err(Error::DimensionMismatch {
            expected: phi.len(),
            got: w.len(),
        });
    }
    let rho0 = DensityState::pure(phi)?;
    let traj = rk4_evolve(
        &rho0,
        fs,
        &EvolveOptions {
            dt,
            t_final,
            observe_every,
            observers: vec![Observer::Diagonal],
        },
    )?;
    let fp = fp_evolve_with(&phi.probabilities(), fs, pot, dt, t_final, observe_every)?;
    Ok(ws
        .iter()
        .map(|w| {
            let dot = |p: &[f64]| -> f64 { p.iter().zip(w).map(|(a, b)| a * b).sum() };
            let lindblad: Vec<f64> = traj
                .snapshots
                .iter()
                .map(|s| dot(s.diagonal.as_deref().expect("diagonal observer")))
                .collect();
            let fokker_planck: Vec<f64> = fp.masses.iter().map(|m| dot(m)).collect();
            let max_discrepancy = lindblad
                .iter()
                .zip(&fokker_planck)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            WeakConvergence {
                times: fp.times.clone(),
                lindblad,
                fokker_planck,
                max_discrepancy,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::assemble_langevin_factors;
    use crate::grid::{build_grid, gaussian_state, gibbs_probabilities};
    use crate::potentials::{harmonic, quartic_cosine_1d};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_density(n: usize, seed: u64) -> Mat<c64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Mat::<c64>::from_fn(n, n, |_, _| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mut r = &a * a.adjoint();
        let tr: f64 = (0..n).map(|i| r[(i, i)].re).sum();
        r *= faer::Scale(c64::new(1.0 / tr, 0.0));
        r
    }

    #[test]
    fn generator_is_traceless_and_hermitian() {
        let g = build_grid(1, 16, 3.0).unwrap();
        let fs = assemble_langevin_factors(&quartic_cosine_1d(), 2.0, &g).unwrap();
        let rho = DensityState::new(random_density(16, 3), g.clone()).unwrap();
        let gen = Lindbladian::new(&fs).unwrap();
        let out = gen.apply(rho.matrix());
        let tr: f64 = (0..16).map(|i| out[(i, i)].re).sum();
        let scale = (0..16).map(|i| out[(i, i)].norm()).fold(0.0, f64::max);
        assert!(tr.abs() <= 1e-10 * scale.max(1.0), "{tr}");
        let herm = DensityState::new(out, g).unwrap().hermiticity_error();
        assert!(herm <= 1e-12 * scale.max(1.0), "{herm}");
    }

    #[test]
    fn gibbs_state_is_fixed_point() {
        let g = build_grid(1, 64, 8.0).unwrap();
        let p = harmonic(1.0, 1);
        let fs = assemble_langevin_factors(&p, 1.0, &g).unwrap();
        let psi = gibbs_state(&p, 1.0, &g).unwrap();
        let rhs = lindblad_rhs(&DensityState::pure(&psi).unwrap(), &fs).unwrap();
        assert!(rhs.norm_l2() <= 1e-5, "{}", rhs.norm_l2());
        let traj = rk4_evolve(
            &DensityState::pure(&psi).unwrap(),
            &fs,
            &EvolveOptions {
                dt: 1e-3,
                t_final: 1.0,
                observe_every: 1000,
                observers: vec![Observer::Overlap(psi.clone())],
            },
        )
        .unwrap();
        assert!(1.0 - traj.snapshots.last().unwrap().overlap.unwrap() <= 1e-6);
    }

    #[test]
    fn overlap_extremes() {
        let g = build_grid(1, 8, 1.0).unwrap();
        let mut e0 = vec![Complex64::default(); 8];
        e0[0] = Complex64::new(1.0, 0.0);
        let mut e1 = vec![Complex64::default(); 8];
        e1[1] = Complex64::new(0.0, 1.0);
        let a = WaveState::new(e0, g.clone()).unwrap();
        let b = WaveState::new(e1, g).unwrap();
        let rho = DensityState::pure(&a).unwrap();
        assert!((overlap(&rho, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(overlap(&rho, &b).unwrap(), 0.0);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let g = build_grid(1, 16, 3.0).unwrap();
        let p = quartic_cosine_1d();
        let fs = assemble_langevin_factors(&p, 2.0, &g).unwrap();
        let rho0 = DensityState::pure(&gaussian_state(&[-1.0], 0.4, &g).unwrap()).unwrap();
        let run = |dt: f64| {
            let opts = EvolveOptions {
                dt,
                t_final: 0.05,
                observe_every: usize::MAX,
                observers: vec![],
            };
            rk4_evolve(&rho0, &fs, &opts).unwrap().state.matrix().clone()
        };
        let (a, b, c) = (run(2e-3), run(1e-3), run(5e-4));
        let ratio = (&a - &b).norm_l2() / (&b - &c).norm_l2();
        assert!((ratio - 16.0).abs() < 2.0, "{ratio}");
    }

    #[test]
    fn large_step_trips_trace_guard() {
        let g = build_grid(1, 32, 3.0).unwrap();
        let fs = assemble_langevin_factors(&quartic_cosine_1d(), 4.0, &g).unwrap();
        let rho0 = DensityState::pure(&gaussian_state(&[0.0], 0.3, &g).unwrap()).unwrap();
        let opts = EvolveOptions {
            dt: 0.05,
            t_final: 5.0,
            observe_every: 10,
            observers: vec![],
        };
        assert!(matches!(rk4_evolve(&rho0, &fs, &opts), Err(Error::TraceDrift { .. })));
    }

    #[test]
    fn fp_keeps_gibbs_and_mass() {
        // stationarity is limited by the kernel residual, so resolve the grid
        let g = build_grid(1, 96, 3.0).unwrap();
        let p = quartic_cosine_1d();
        let sigma = gibbs_probabilities(&p, 2.0, &g).unwrap();
        let traj = fp_evolve(&sigma, &p, 2.0, &g, 1e-4, 1.0, 10_000).unwrap();
        let last = traj.masses.last().unwrap();
        let dev = last.iter().zip(&sigma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-8, "{dev}");
        let p0 = gaussian_state(&[-1.0], 0.3, &g).unwrap().probabilities();
        let traj = fp_evolve(&p0, &p, 2.0, &g, 1e-3, 1.0, 100).unwrap();
        for m in &traj.masses {
            assert!((m.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn weak_convergence_at_start_and_for_constants() {
        let g = build_grid(1, 32, 5.0).unwrap();
        let p = harmonic(1.0, 1);
        let fs = assemble_langevin_factors(&p, 1.0, &g).unwrap();
        let phi = gaussian_state(&[1.0], 0.5, &g).unwrap();
        let res = weak_convergence_check(&fs, &p, &phi, &vec![1.0; 32], 1e-3, 0.2, 50).unwrap();
        assert!(res.max_discrepancy <= 1e-8, "{}", res.max_discrepancy);
        let x = g.axis_points(0);
        let res = weak_convergence_check(&fs, &p, &phi, &x, 1e-3, 0.0, 1).unwrap();
        assert!(res.max_discrepancy <= 1e-12);
    }
}
