//! Shared fixtures for the benchmarks.

use cavent_core::dynamics::{build_diffusion, build_drift, DiffusionMatrix, DriftMatrix};
use cavent_core::steadystate::{solve_steady_state, SolverOptions};
use cavent_core::{derive_rates, Coupling, PhysicalConfig, SystemVariant};

/// A stable Sys I point with entangled cavity modes.
pub fn operating_point() -> PhysicalConfig {
    let base = PhysicalConfig::table_one();
    PhysicalConfig {
        delta_w: -base.omega_m(),
        coupling: Coupling::Direct {
            g_oc: 200.0,
            g_oc2: 0.0,
            g_ow: 0.15,
        },
        ..base
    }
}

pub fn operating_matrices() -> (DriftMatrix, DiffusionMatrix) {
    let cfg = operating_point();
    let rates = SystemVariant::SysI.apply(&derive_rates(&cfg).expect("valid constants"));
    let state = solve_steady_state(&rates, &SolverOptions::default())
        .expect("steady state")
        .state;
    (
        build_drift(&rates, &state),
        build_diffusion(&rates, cfg.temperature).expect("diffusion"),
    )
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_matches_shipped_config() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs/sys1_operating_point.json");
        assert_eq!(
            cavent_core::load_config(&path).unwrap(),
            super::operating_point()
        );
    }
}
