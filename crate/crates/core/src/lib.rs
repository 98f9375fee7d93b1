//! Steady states, stability, covariances and bipartite entanglement of a
//! four-mode optomechanical system: a mechanical resonator coupled to an
//! optical cavity, its second-harmonic mode, and a microwave cavity.
//!
//! The usual entry point is [`run_point`], or [`run_sweep`] for a grid.

pub mod config;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod steadystate;
pub mod sweep;

pub use config::{config_to_json, load_config, parse_config};
pub use dynamics::{
    assess_stability, build_diffusion, build_drift, build_drift_with, linearize_mean_field,
    DiffusionMatrix, DriftConvention, DriftMatrix, StabilityReport, DIM,
};
pub use error::{Error, Result};
pub use gaussian::{
    check_physicality, entanglement_verdict, partial_transpose, reduce_bipartite, solve_lyapunov,
    symplectic_eta_minus, BipartitePair, CovarianceMatrix, EntanglementResult, Party,
    PhysicalityReport,
};
pub use oracle::{
    compare_cm, simulate_ensemble, step_amplification, CmComparison, EnsembleEstimate,
    EnsembleSettings,
};
pub use params::{
    derive_rates, thermal_occupancy, validate_config, Coupling, DerivedRates, PhysicalConfig,
    ValidationReport,
};
pub use pipeline::{run_point, PairVerdict, PointResult, SystemVariant};
pub use steadystate::{solve_steady_state, SolverOptions, SteadyState, SteadyStateSolution};
pub use sweep::{format_csv, linspace, run_sweep, write_csv, SweepAxis, SweepRow, SweepSpec};
