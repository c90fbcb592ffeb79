//! Smoothed rectangle filters and their Chebyshev expansions.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points used for sup-norm measurements on `[-1, 1]`.
pub const VALIDATION_POINTS: usize = 20_001;

fn ramp_down(t: f64) -> f64 {
    0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Even filter `F(|x|)`: 1 on `[0, s2]`, a half-cosine ramp on `[s2, s2 + δ]`,
/// 0 beyond. `s1` only enters the asymmetric form and is validated here.
pub fn smooth_rectangle(s1: f64, s2: f64, delta: f64) -> Result<impl Fn(f64) -> f64 + Clone> {
    check_edges(s1, s2, delta)?;
    Ok(move |x: f64| {
        let y = x.abs();
        if y <= s2 {
            1.0
        } else if y >= s2 + delta {
            0.0
        } else {
            ramp_down((y - s2) / delta)
        }
    })
}

/// The asymmetric piecewise form: plateau on `[-s1, s2]`, ramps of width `δ`
/// on both shoulders. Not even unless `s1 = s2`.
pub fn smooth_rectangle_asymmetric(s1: f64, s2: f64, delta: f64) -> Result<impl Fn(f64) -> f64 + Clone> {
    check_edges(s1, s2, delta)?;
    Ok(move |x: f64| {
        if x <= -s1 - delta || x >= s2 + delta {
            0.0
        } else if x < -s1 {
            0.5 * (1.0 - (std::f64::consts::PI * (x + s1 + delta) / delta).cos())
        } else if x <= s2 {
            1.0
        } else {
            ramp_down((x - s2) / delta)
        }
    })
}

fn check_edges(s1: f64, s2: f64, delta: f64) -> Result<()> {
    let ok = s1 >= 0.0 && s1 <= s2 && delta > 0.0 && s2 + delta <= 1.0 + 1e-15 && s1.is_finite();
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "filter edges need 0 <= s1 <= s2, delta > 0, s2 + delta <= 1; got s1 = {s1}, s2 = {s2}, delta = {delta}"
        )))
    }
}

/// Coefficients `c_0..=c_degree` of `F ≈ Σ c_j T_j` from `2K` equispaced
/// angles, via one FFT.
pub fn chebyshev_coefficients<F: Fn(f64) -> f64>(f: F, degree: usize, k: usize) -> Result<Vec<f64>> {
    if k < degree + 1 {
        return Err(Error::InvalidParameter(format!(
            "quadrature count {k} must exceed the degree {degree}"
        )));
    }
    let m = 2 * k;
    let mut buf: Vec<Complex64> = (0..m)
        .map(|l| {
            let theta = std::f64::consts::PI * l as f64 / k as f64;
            Complex64::new(f(-theta.cos()), 0.0)
        })
        .collect();
    // inverse FFT computes sum_l f_l exp(+2 pi i j l / m) = sum_l f_l exp(i j theta_l)
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    Ok((0..=degree)
        .map(|j| {
            let w = if j == 0 { 1.0 } else { 2.0 };
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            w / m as f64 * sign * buf[j].re
        })
        .collect())
}

/// Clenshaw evaluation of `Σ c_j T_j(x)`.
pub fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// Direct `Σ c_j T_j(x)` through the three-term recurrence of `T_j`.
pub fn chebyshev_sum(coeffs: &[f64], x: f64) -> f64 {
    let (mut t0, mut t1) = (1.0, x);
    let mut acc = 0.0;
    for (j, &c) in coeffs.iter().enumerate() {
        let t = match j {
            0 => t0,
            1 => t1,
            _ => {
                let t2 = 2.0 * x * t1 - t0;
                t0 = t1;
                t1 = t2;
                t2
            }
        };
        acc += c * t;
    }
    acc
}

/// `ceil(C log(1/eps) / gap_norm)`.
pub fn degree_for(gap_norm: f64, eps: f64, c: f64) -> Result<usize> {
    if !(gap_norm > 0.0 && gap_norm <= 1.0) {
        return Err(Error::InvalidParameter(format!("normalized gap must be in (0, 1], got {gap_norm}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must be in (0, 1), got {eps}")));
    }
    Ok((c * (1.0 / eps).ln() / gap_norm).ceil() as usize)
}

/// Filter edges placed between the two smallest singular values, on the
/// alpha-normalized axis: a quarter and three quarters of the way from `σ₁`
/// to `σ₂`. With an exact kernel these are `ĝ/(4α)` and `3ĝ/(4α)`.
pub fn edges_between(sigma1: f64, sigma2: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(sigma2 > sigma1 && sigma1 >= 0.0 && alpha >= sigma2) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= sigma1 < sigma2 <= alpha, got {sigma1}, {sigma2}, {alpha}"
        )));
    }
    let w = sigma2 - sigma1;
    Ok(((sigma1 + 0.25 * w) / alpha, (sigma1 + 0.75 * w) / alpha))
}

/// `P = scale * (P_raw - shift)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub scale: f64,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Pass band is `[0, s1]`.
    pub s1: f64,
    /// Stop band is `[s2, 1]`.
    pub s2: f64,
    /// Width of the cosine ramp, centered in `(s1, s2)`.
    pub delta: f64,
    pub degree: usize,
    pub quadrature: usize,
    /// Coefficients of the final (rescaled) polynomial.
    pub coeffs: Vec<f64>,
    pub rescale: Rescale,
    pub target_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub pass_err: f64,
    pub stop_err: f64,
    pub sup_norm: f64,
}

fn dense_axis() -> impl Iterator<Item = f64> {
    let m = VALIDATION_POINTS - 1;
    (0..=m).map(move |i| -1.0 + 2.0 * i as f64 / m as f64)
}

impl FilterSpec {
    /// Expands the ramp-centered smooth rectangle to `degree` and scales by
    /// `1 / max(1, sup |P|)` so that `|P| <= 1` on the validation grid.
    pub fn design(s1: f64, s2: f64, delta: f64, degree: usize, target_eps: f64) -> Result<Self> {
        if !(s1 >= 0.0 && s1 < s2 && s2 <= 1.0) {
            return Err(Error::InvalidParameter(format!("need 0 <= s1 < s2 <= 1, got {s1}, {s2}")));
        }
        if !(delta > 0.0 && delta <= s2 - s1) {
            return Err(Error::InvalidParameter(format!(
                "ramp width {delta} must be positive and fit between the edges ({})",
                s2 - s1
            )));
        }
        let start = 0.5 * (s1 + s2) - 0.5 * delta;
        let f = smooth_rectangle(s1.min(start), start, delta)?;
        let quadrature = (4 * degree).max(1024);
        let raw = chebyshev_coefficients(f, degree, quadrature)?;
        let sup = dense_axis().map(|x| clenshaw(&raw, x).abs()).fold(0.0, f64::max);
        let scale = 1.0 / sup.max(1.0);
        let coeffs: Vec<f64> = raw.iter().map(|c| c * scale).collect();
        Ok(Self {
            s1,
            s2,
            delta,
            degree,
            quadrature,
            coeffs,
            rescale: Rescale { scale, shift: 0.0 },
            target_eps,
        })
    }

    /// Default design: `δ = (s2 - s1)/4` and degree from [`degree_for`].
    pub fn with_defaults(s1: f64, s2: f64, eps: f64, c: f64) -> Result<Self> {
        let degree = degree_for(s2 - s1, eps, c)?;
        Self::design(s1, s2, 0.25 * (s2 - s1), degree, eps)
    }

    /// `P ≡ 1`: passes every singular value.
    pub fn identity() -> Self {
        Self {
            s1: 1.0,
            s2: 1.0,
            delta: 0.0,
            degree: 0,
            quadrature: 0,
            coeffs: vec![1.0],
            rescale: Rescale { scale: 1.0, shift: 0.0 },
            target_eps: 0.0,
        }
    }

    /// Start of the cosine ramp.
    pub fn ramp_start(&self) -> f64 {
        0.5 * (self.s1 + self.s2) - 0.5 * self.delta
    }

    /// The smooth target function `F` (before rescaling).
    pub fn target(&self, x: f64) -> f64 {
        let y = x.abs();
        let start = self.ramp_start();
        if y <= start {
            1.0
        } else if y >= start + self.delta {
            0.0
        } else {
            ramp_down((y - start) / self.delta)
        }
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if x.abs() > 1.0 {
            return Err(Error::InvalidParameter(format!("filter argument {x} outside [-1, 1]")));
        }
        Ok(clenshaw(&self.coeffs, x))
    }

    /// Even part as a Chebyshev series in `y = 2x² - 1`: `P(x) = Σ c_{2k} T_k(y)`.
    pub fn eigen_axis_coefficients(&self) -> Vec<f64> {
        self.coeffs.iter().step_by(2).copied().collect()
    }

    pub fn write_csv(&self, path: &Path, points: usize) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,target,polynomial")?;
        let m = points.max(2) - 1;
        for i in 0..=m {
            let x = -1.0 + 2.0 * i as f64 / m as f64;
            writeln!(f, "{x:.8},{:.12e},{:.12e}", self.target(x), clenshaw(&self.coeffs, x))?;
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn evaluate_filter(fs: &FilterSpec, x: f64) -> Result<f64> {
    fs.evaluate(x)
}

fn measure(fs: &FilterSpec) -> FilterReport {
    let mut rep = FilterReport {
        pass_err: 0.0,
        stop_err: 0.0,
        sup_norm: 0.0,
    };
    for x in dense_axis() {
        let p = clenshaw(&fs.coeffs, x);
        rep.sup_norm = rep.sup_norm.max(p.abs());
        if (0.0..=fs.s1).contains(&x) {
            rep.pass_err = rep.pass_err.max((p - 1.0).abs());
        }
        if x >= fs.s2 {
            rep.stop_err = rep.stop_err.max(p.abs());
        }
    }
    rep
}

/// Measures pass/stop-band errors and the sup norm on a dense grid; rescales
/// once more if the sup norm exceeds one.
pub fn validate_filter(fs: &FilterSpec) -> (FilterSpec, FilterReport) {
    let rep = measure(fs);
    if rep.sup_norm <= 1.0 {
        return (fs.clone(), rep);
    }
    let mut out = fs.clone();
    let s = 1.0 / rep.sup_norm;
    out.coeffs.iter_mut().for_each(|c| *c *= s);
    out.rescale.scale *= s;
    let rep = measure(&out);
    (out, rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_values() {
        let f = smooth_rectangle(0.1, 0.3, 0.1).unwrap();
        assert_eq!(f(0.0), 1.0);
        assert_eq!(f(1.0), 0.0);
        assert!((f(0.35) - 0.5).abs() < 1e-15);
        assert_eq!(f(-0.35), f(0.35));
        assert!(smooth_rectangle(0.5, 0.3, 0.1).is_err());
        assert!(smooth_rectangle(0.1, 0.95, 0.1).is_err());
    }

    #[test]
    fn asymmetric_form_plateau() {
        let f = smooth_rectangle_asymmetric(0.1, 0.3, 0.1).unwrap();
        assert_eq!(f(-0.1), 1.0);
        assert!((f(-0.15) - 0.5).abs() < 1e-15);
        assert_eq!(f(-0.25), 0.0);
        assert!((f(0.35) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_and_t2() {
        let c = chebyshev_coefficients(|_| 1.0, 10, 64).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-12));
        let c = chebyshev_coefficients(|x| 2.0 * x * x - 1.0, 10, 64).unwrap();
        for (j, v) in c.iter().enumerate() {
            let want = if j == 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "c_{j} = {v}");
        }
    }

    fn sup_error(s2: f64, delta: f64, degree: usize) -> f64 {
        let f = smooth_rectangle(0.0, s2, delta).unwrap();
        let c = chebyshev_coefficients(f.clone(), degree, 1024).unwrap();
        dense_axis().map(|x| (clenshaw(&c, x) - f(x)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rectangle_expansion_accuracy() {
        // truncation error of the C^1 ramp; 1.40e-3 at degree 200 per an
        // independent quadrature, so 1e-3 needs a slightly higher degree
        let e200 = sup_error(0.4, 0.1, 200);
        assert!((e200 - 1.40e-3).abs() < 0.05e-3, "{e200}");
        assert!(sup_error(0.4, 0.1, 250) <= 1e-3);
    }

    #[test]
    fn clenshaw_matches_direct_sum() {
        let c: Vec<f64> = (0..50).map(|j| 1.0 / (1.0 + j as f64)).collect();
        for i in 0..=100 {
            let x = -1.0 + 0.02 * i as f64;
            assert!((clenshaw(&c, x) - chebyshev_sum(&c, x)).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_formula() {
        assert_eq!(degree_for(0.5, 1e-3, 2.0).unwrap(), 28);
        let a = degree_for(0.2, 1e-4, 2.0).unwrap() as f64;
        let b = degree_for(0.1, 1e-4, 2.0).unwrap() as f64;
        assert!((b / a - 2.0).abs() < 0.02);
    }

    #[test]
    fn designed_filter_is_bounded_and_even() {
        let fs = FilterSpec::design(0.1, 0.5, 0.2, 300, 1e-3).unwrap();
        let (v, rep) = validate_filter(&fs);
        assert!(rep.sup_norm <= 1.0);
        assert_eq!(v, fs);
        assert!(fs.coeffs.iter().skip(1).step_by(2).all(|c| c.abs() <= 1e-10));
        assert!((fs.evaluate(0.0).unwrap() - 1.0).abs() < 1e-3);
        assert!(fs.evaluate(0.99).unwrap() < 1e-3);
        assert!(fs.evaluate(1.5).is_err());
    }

    #[test]
    fn eigen_axis_series_reproduces_polynomial() {
        let fs = FilterSpec::design(0.1, 0.3, 0.1, 120, 1e-3).unwrap();
        let b = fs.eigen_axis_coefficients();
        for i in 0..=50 {
            let x = -1.0 + 0.04 * i as f64;
            let y = 2.0 * x * x - 1.0;
            assert!((clenshaw(&b, y) - clenshaw(&fs.coeffs, x)).abs() < 1e-12);
        }
    }
}
