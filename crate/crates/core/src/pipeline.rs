//! One full evaluation: configuration to steady state, stability,
//! covariance and the six bipartite verdicts.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{assess_stability, build_diffusion, build_drift, StabilityReport};
use crate::error::Result;
use crate::gaussian::{
    check_physicality, entanglement_verdict, lyapunov_residual, reduce_bipartite, solve_lyapunov,
    BipartitePair, CovarianceMatrix, EntanglementResult, PhysicalityReport,
};
use crate::params::{derive_rates, validate_config, Coupling, DerivedRates, PhysicalConfig};
use crate::steadystate::{solve_steady_state, SolverOptions, SteadyState};

/// `SysI` drops the second-harmonic process (`χ' = 0`, `G_oc2 = 0`);
/// `SysII` keeps it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum SystemVariant {
    #[serde(rename = "sys1")]
    SysI,
    #[default]
    #[serde(rename = "sys2")]
    SysII,
}

impl SystemVariant {
    pub fn name(self) -> &'static str {
        match self {
            SystemVariant::SysI => "sys1",
            SystemVariant::SysII => "sys2",
        }
    }

    pub fn apply(self, rates: &DerivedRates) -> DerivedRates {
        match self {
            SystemVariant::SysI => DerivedRates {
                chi_eff: 0.0,
                g_oc2: 0.0,
                ..*rates
            },
            SystemVariant::SysII => *rates,
        }
    }

    /// Same restriction applied at the configuration level.
    pub fn apply_config(self, cfg: &PhysicalConfig) -> PhysicalConfig {
        match self {
            SystemVariant::SysI => {
                let mut out = *cfg;
                out.chi_eff = 0.0;
                if let Coupling::Direct { g_oc, g_ow, .. } = cfg.coupling {
                    out.coupling = Coupling::Direct {
                        g_oc,
                        g_oc2: 0.0,
                        g_ow,
                    };
                }
                out
            }
            SystemVariant::SysII => *cfg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairVerdict {
    pub pair: BipartitePair,
    #[serde(flatten)]
    pub result: EntanglementResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub config: PhysicalConfig,
    pub system: SystemVariant,
    pub rates: DerivedRates,
    pub steady_state: SteadyState,
    pub steady_state_residual: f64,
    pub stability: StabilityReport,
    /// Present only for stable points.
    pub pairs: Option<Vec<PairVerdict>>,
    pub lyapunov_residual: Option<f64>,
    pub physicality: Option<PhysicalityReport>,
    pub warnings: Vec<String>,
    /// Wall-clock seconds; the only field that varies between runs.
    pub elapsed_seconds: f64,
}

impl PointResult {
    pub fn verdict(&self, pair: BipartitePair) -> Option<&EntanglementResult> {
        self.pairs
            .as_ref()?
            .iter()
            .find(|v| v.pair == pair)
            .map(|v| &v.result)
    }

    /// Copy with the timing field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> PointResult {
        PointResult {
            elapsed_seconds: 0.0,
            ..self.clone()
        }
    }
}

/// Runs the whole chain for one configuration. An unstable drift matrix is a
/// normal outcome (no verdicts); invalid input and solver failures are errors.
pub fn run_point(cfg: &PhysicalConfig, system: SystemVariant) -> Result<PointResult> {
    run_point_with(cfg, system, &SolverOptions::default())
}

pub fn run_point_with(
    cfg: &PhysicalConfig,
    system: SystemVariant,
    opts: &SolverOptions,
) -> Result<PointResult> {
    let start = Instant::now();
    validate_config(cfg).into_result()?;
    let rates = system.apply(&derive_rates(cfg)?);
    let solution = solve_steady_state(&rates, opts)?;
    let state = solution.state;

    let a = build_drift(&rates, &state);
    let d = build_diffusion(&rates, cfg.temperature)?;
    let stability = assess_stability(&a)?;
    let mut warnings = solution.warnings.clone();

    let (pairs, lyap_res, physicality) = if stability.stable {
        let v = solve_lyapunov(&a, &d)?;
        let res = lyapunov_residual(&a.as_dense(), &d.as_dense(), &v.as_dense());
        let phys = check_physicality(&v)?;
        if !phys.physical {
            warnings.push(format!(
                "covariance violates the uncertainty bound (smallest symplectic eigenvalue {:.6e})",
                phys.min_symplectic_eig
            ));
        }
        (Some(all_verdicts(&v)?), Some(res), Some(phys))
    } else {
        (None, None, None)
    };

    Ok(PointResult {
        config: *cfg,
        system,
        rates,
        steady_state: state,
        steady_state_residual: solution.residual,
        stability,
        pairs,
        lyapunov_residual: lyap_res,
        physicality,
        warnings,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn all_verdicts(v: &CovarianceMatrix) -> Result<Vec<PairVerdict>> {
    BipartitePair::ALL
        .into_iter()
        .map(|pair| {
            Ok(PairVerdict {
                pair,
                result: entanglement_verdict(&reduce_bipartite(v, pair))?,
            })
        })
        .collect()
}
