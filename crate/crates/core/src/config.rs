//! Declarative experiment configuration (JSON) with field-level validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::potentials::{Potential, PotentialParams, REGISTRY_KEYS};
use crate::svt::SvtRoute;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GapScan,
    MbCompare,
    LindbladWarmstart,
    FilterDesign,
    Sample,
    WeakConvergence,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::GapScan,
        ExperimentKind::MbCompare,
        ExperimentKind::LindbladWarmstart,
        ExperimentKind::FilterDesign,
        ExperimentKind::Sample,
        ExperimentKind::WeakConvergence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::GapScan => "gap-scan",
            ExperimentKind::MbCompare => "mb-compare",
            ExperimentKind::LindbladWarmstart => "lindblad-warmstart",
            ExperimentKind::FilterDesign => "filter-design",
            ExperimentKind::Sample => "sample",
            ExperimentKind::WeakConvergence => "weak-convergence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub key: String,
    #[serde(flatten)]
    pub params: PotentialParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

impl GridConfig {
    pub fn build(&self, field: &str) -> Result<GridSpec> {
        if self.n < 2 {
            return Err(Error::config(format!("{field}.n"), "need at least two points per axis"));
        }
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::config(format!("{field}.half_width"), "must be positive and finite"));
        }
        if self.dim == 0 {
            return Err(Error::config(format!("{field}.dim"), "must be at least 1"));
        }
        let g = GridSpec::new(self.dim, self.n, self.half_width).map_err(|e| Error::config(field, e.to_string()))?;
        match &self.center {
            Some(c) => g
                .with_center(c)
                .map_err(|e| Error::config(format!("{field}.center"), e.to_string())),
            None => Ok(g),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReldConfig {
    pub beta_prime: f64,
    pub mu: f64,
}

impl Default for ReldConfig {
    fn default() -> Self {
        Self { beta_prime: 1.0, mu: 1.0 }
    }
}

/// How gaps are computed in `gap-scan`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralChoice {
    /// Full SVD for small operators, dense eigensolve up to the dense guard,
    /// deflated Lanczos beyond.
    #[default]
    Auto,
    Dense,
    DenseEigen,
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub s1: f64,
    pub s2: f64,
    pub delta: f64,
    pub degrees: Vec<usize>,
    pub eps: f64,
    pub degree_constant: f64,
    pub route: SvtRoute,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            s1: 0.2,
            s2: 0.3,
            delta: 0.05,
            degrees: vec![50, 100, 200, 400],
            eps: 1e-3,
            degree_constant: 12.0,
            route: SvtRoute::Recurrence,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSource {
    /// Prepared Gibbs state, boosted and measured.
    #[default]
    Svt,
    Ula,
    Mala,
    Reld,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub source: SampleSource,
    pub dt: f64,
    pub n_steps: usize,
    pub burn_in: Option<usize>,
    pub chains: usize,
    pub bins: usize,
    pub x0: Option<Vec<f64>>,
    /// Write every sample to CSV (large).
    pub write_samples: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            source: SampleSource::Svt,
            dt: 1e-3,
            n_steps: 100_000,
            burn_in: None,
            chains: 4,
            bins: 50,
            x0: None,
            write_samples: false,
        }
    }
}

/// Target overlap and search limits for `mb-compare`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub target_overlap: f64,
    /// Steps between overlap checks along a MALA chain.
    pub check_every: usize,
    pub max_steps: usize,
    /// Finer grid on which the SVT runs.
    pub svt_grid: Option<GridConfig>,
    pub warm_center: Vec<f64>,
    pub warm_std: f64,
    /// Ramp width is `width_constant / degree`.
    pub width_constant: f64,
    pub min_degree: usize,
    pub max_degree: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            target_overlap: 0.9,
            check_every: 100,
            max_steps: 300_000,
            svt_grid: None,
            warm_center: vec![-0.558, 1.442],
            warm_std: 0.3,
            width_constant: 20.0,
            min_degree: 64,
            max_degree: 8192,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LindbladConfig {
    pub dt: f64,
    pub t_final: f64,
    pub observe_every: usize,
    pub center: Vec<f64>,
    pub std: f64,
    /// Test functions `x^k` for `weak-convergence`.
    pub moments: Vec<u32>,
}

impl Default for LindbladConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_final: 1.0,
            observe_every: 100,
            center: vec![-1.7],
            std: 0.02,
            moments: vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    /// Fine grid has `2^boost` points per axis.
    pub boost: u32,
    pub samples: usize,
    pub warm_center: Vec<f64>,
    pub warm_std: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            boost: 10,
            samples: 1_000_000,
            warm_center: vec![0.0],
            warm_std: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub potential: PotentialConfig,
    pub grid: GridConfig,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub reld: ReldConfig,
    #[serde(default)]
    pub spectral: SpectralChoice,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub lindblad: LindbladConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(json_field(&e), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn potential(&self) -> Result<Potential> {
        if !REGISTRY_KEYS.contains(&self.potential.key.as_str()) {
            return Err(Error::config(
                "potential.key",
                format!("{:?} is not one of {}", self.potential.key, REGISTRY_KEYS.join(", ")),
            ));
        }
        Potential::from_key(&self.potential.key, &self.potential.params)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        self.grid.build("grid")
    }

    /// Checks everything that can be checked without touching the output
    /// directory.
    pub fn validate(&self) -> Result<()> {
        let p = self.potential()?;
        let g = self.grid_spec()?;
        if p.dim() != g.dim() {
            return Err(Error::config(
                "grid.dim",
                format!("potential {} is {}-dimensional, grid is {}-dimensional", p.name(), p.dim(), g.dim()),
            ));
        }
        if self.betas.is_empty() {
            return Err(Error::config("betas", "must be nonempty"));
        }
        for (i, b) in self.betas.iter().enumerate() {
            positive(&format!("betas[{i}]"), *b)?;
        }
        let f = &self.filter;
        positive("filter.eps", f.eps)?;
        positive("filter.degree_constant", f.degree_constant)?;
        match self.experiment {
            ExperimentKind::GapScan => {
                positive("reld.beta_prime", self.reld.beta_prime)?;
                if !(self.reld.mu >= 0.0) {
                    return Err(Error::config("reld.mu", "must be nonnegative"));
                }
                if let Some(b) = self.betas.iter().find(|b| **b < self.reld.beta_prime) {
                    return Err(Error::config("reld.beta_prime", format!("must not exceed every beta (found {b})")));
                }
            }
            ExperimentKind::FilterDesign => {
                if !(f.s1 >= 0.0 && f.s1 < f.s2 && f.s2 <= 1.0) {
                    return Err(Error::config("filter.s2", "need 0 <= s1 < s2 <= 1"));
                }
                if !(f.delta > 0.0 && f.delta <= f.s2 - f.s1) {
                    return Err(Error::config("filter.delta", "must be positive and at most s2 - s1"));
                }
                if f.degrees.is_empty() || f.degrees.contains(&0) {
                    return Err(Error::config("filter.degrees", "need a nonempty list of positive degrees"));
                }
            }
            ExperimentKind::MbCompare => {
                let c = &self.compare;
                if !(c.target_overlap > 0.0 && c.target_overlap < 1.0) {
                    return Err(Error::config("compare.target_overlap", "must lie in (0, 1)"));
                }
                if c.check_every == 0 || c.max_steps < c.check_every {
                    return Err(Error::config("compare.check_every", "need 0 < check_every <= max_steps"));
                }
                if c.min_degree < 2 || c.max_degree < c.min_degree {
                    return Err(Error::config("compare.max_degree", "need 2 <= min_degree <= max_degree"));
                }
                positive("compare.warm_std", c.warm_std)?;
                positive("compare.width_constant", c.width_constant)?;
                self.check_point("compare.warm_center", &c.warm_center, p.dim())?;
                if let Some(sg) = &c.svt_grid {
                    sg.build("compare.svt_grid")?;
                }
                self.check_sampler(p.dim())?;
            }
            ExperimentKind::LindbladWarmstart | ExperimentKind::WeakConvergence => {
                let l = &self.lindblad;
                positive("lindblad.dt", l.dt)?;
                if !(l.t_final >= 0.0) || !l.t_final.is_finite() {
                    return Err(Error::config("lindblad.t_final", "must be nonnegative and finite"));
                }
                positive("lindblad.std", l.std)?;
                self.check_point("lindblad.center", &l.center, p.dim())?;
                if self.experiment == ExperimentKind::WeakConvergence && l.moments.is_empty() {
                    return Err(Error::config("lindblad.moments", "need at least one test function"));
                }
            }
            ExperimentKind::Sample => {
                let m = &self.measure;
                if m.samples == 0 {
                    return Err(Error::config("measure.samples", "must be positive"));
                }
                if (1usize << m.boost.min(63)) < self.grid.n {
                    return Err(Error::config("measure.boost", "2^boost must be at least grid.n"));
                }
                positive("measure.warm_std", m.warm_std)?;
                self.check_point("measure.warm_center", &m.warm_center, p.dim())?;
                self.check_sampler(p.dim())?;
                if self.sampler.source == SampleSource::Reld {
                    positive("reld.beta_prime", self.reld.beta_prime)?;
                }
            }
        }
        Ok(())
    }

    fn check_point(&self, field: &str, x: &[f64], dim: usize) -> Result<()> {
        if x.len() != dim {
            return Err(Error::config(field, format!("needs {dim} coordinates, got {}", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(field, "coordinates must be finite"));
        }
        Ok(())
    }

    fn check_sampler(&self, dim: usize) -> Result<()> {
        let s = &self.sampler;
        positive("sampler.dt", s.dt)?;
        if s.n_steps == 0 {
            return Err(Error::config("sampler.n_steps", "must be positive"));
        }
        if s.chains == 0 {
            return Err(Error::config("sampler.chains", "must be positive"));
        }
        if s.bins < 2 {
            return Err(Error::config("sampler.bins", "need at least two bins"));
        }
        if let Some(x0) = &s.x0 {
            self.check_point("sampler.x0", x0, dim)?;
        }
        Ok(())
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_output(&self) -> Result<()> {
        let dir = &self.output;
        std::fs::create_dir_all(dir).map_err(|e| Error::config("output", format!("{}: {e}", dir.display())))?;
        let probe = dir.join(".write-test");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| Error::config("output", format!("{} is not writable: {e}", dir.display())))
    }
}

/// Best-effort field name from a serde error message.
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["missing field `", "unknown field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "config".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
            "experiment": "gap-scan",
            "potential": {"key": "quartic-cosine-1d"},
            "grid": {"n": 32, "half_width": 2.5},
            "betas": [2.0, 4.0],
            "output": "out"
        }"#
        .to_string()
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(&minimal()).unwrap();
        assert_eq!(c.experiment, ExperimentKind::GapScan);
        assert_eq!(c.grid.dim, 1);
        assert_eq!(c.reld, ReldConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_json(&minimal()).unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn field_level_errors() {
        let bad = minimal().replace("quartic-cosine-1d", "nope");
        let e = ExperimentConfig::from_json(&bad).unwrap().validate().unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "potential.key"), "{e}");

        let bad = minimal().replace("[2.0, 4.0]", "[]");
        let e = ExperimentConfig::from_json(&bad).unwrap().validate().unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "betas"), "{e}");

        let bad = minimal().replace("\"n\": 32", "\"n\": 32, \"bogus\": 1");
        let e = ExperimentConfig::from_json(&bad).unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "bogus"), "{e}");

        let bad = minimal().replace("\"half_width\": 2.5", "\"half_width\": -1");
        let e = ExperimentConfig::from_json(&bad).unwrap().validate().unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "grid.half_width"), "{e}");
    }

    #[test]
    fn beta_prime_must_not_exceed_betas() {
        let bad = minimal().replace("[2.0, 4.0]", "[0.5]");
        let e = ExperimentConfig::from_json(&bad).unwrap().validate().unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "reld.beta_prime"), "{e}");
    }

    #[test]
    fn experiment_names_parse() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::parse(k.name()).unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!(ExperimentKind::parse("nope").is_err());
    }
}
