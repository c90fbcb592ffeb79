//! Classical simulation of Witten-Laplacian based Gibbs samplers: spectral
//! discretization, emulated singular value thresholding, Lindblad warm starts
//! and classical Langevin baselines.

pub mod block;
pub mod chebfilter;
pub mod config;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod factors;
pub mod grid;
pub mod lindblad;
pub mod metrics;
pub mod potentials;
pub mod reld;
pub mod samplers;
pub mod spectral;
pub mod spectrum;
pub mod svt;

pub use block::{alpha_normalization, block_operator, witten_dense_direct, BlockOperator, DENSE_GUARD};
pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{Error, Result};
pub use experiments::{run, Manifest};
pub use factors::{assemble_langevin_factors, Factor, FactorKind, FactorSet};
pub use grid::{build_grid, gibbs_state, GridSpec, WaveState};
pub use lindblad::{rk4_evolve, DensityState, Lindbladian};
pub use metrics::{boost_resolution, measure_and_jitter, tv_distance};
pub use potentials::{cap_above, harmonic, muller_brown, quartic_cosine_1d, Potential};
pub use samplers::{mala_chain, reld_sde, ula_chain, ChainParams, SampleBatch};
pub use reld::{assemble_reld_factors, joint_gibbs_state, reld_alpha, swap_rate, ReldParams};
pub use spectrum::{spectral_report, SpectralMethod, SpectralMode, SpectralReport};
pub use svt::{prepare_gibbs, threshold_recurrence, threshold_svd, SvtResult, SvtRoute};
