//! Key-rate simulation for measurement-device-independent QKD over two
//! lognormal free-space channels, with a lookup-table policy that attenuates
//! the stronger arm to restore interference visibility.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`turbulence`] discretises the lognormal transmittance distribution.
//! 2. [`noise`] gives per-pulse sifted and error probabilities at fixed transmittances.
//! 3. [`finite_key`] turns counts into a finite secret key rate.
//! 4. [`policy`] and [`integrator`] build the attenuation table and average
//!    counts over turbulence.
//!
//! [`optimizer`] tunes decoy settings; [`sweep`] runs σ² sweeps.

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod error;
pub mod finite_key;
pub mod integrator;
pub mod noise;
pub mod optimizer;
pub mod params;
pub mod policy;
pub mod sweep;
pub mod turbulence;

pub use error::{Error, Result};
pub use finite_key::{
    apply_bounds, asymptotic_key_rate, binary_entropy, e11_upper_bound, secure_key_rate,
    y11_lower_bound, BoundedGain, KeyRateResult,
};
pub use integrator::{
    averaged_key_rate, averaged_rate_asymptotic, integrate_counts, AttenuationMode, AveragedCounts,
    AveragedRate, ScenarioConfig,
};
pub use noise::{all_sifted_counts, x_counts, z_counts, Counts, PairMap, SiftedCounts};
pub use optimizer::{
    evaluate_candidate, optimize_decoy, DecoyDocument, OptimizationResult, OptimizerSettings,
    ParamBounds,
};
pub use params::{reference_points, DecoyParams, Intensity, Party, ReferencePoint, SystemParams};
pub use policy::{
    attenuation_profile, build_table, build_table_detailed, optimal_attenuation,
    parameter_fingerprint, sha256_hex, AttenuationChoice, AttenuationTable, ProfilePoint,
    SearchSettings, TableBuild, VoaMode,
};
pub use sweep::{run_sweep, SweepPlan, SweepRow};
pub use turbulence::{
    discretize, joint_pdtc, pdtc_density, ChannelModel, Discretized, TransmittanceGrid,
};
