//! Parameter sweeps and their CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::BipartitePair;
use crate::params::PhysicalConfig;
use crate::pipeline::{run_point, PointResult, SystemVariant};

/// Environment variable capping the sweep worker count (`0` = all cores).
pub const THREADS_ENV: &str = "CAVENT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Microwave detuning in units of the mechanical frequency, `Δ_w / ω_m`.
    Detuning,
    /// Bath temperature (K).
    Temperature,
    /// Resonator mass (kg).
    Mass,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Detuning => "detuning",
            SweepAxis::Temperature => "temperature",
            SweepAxis::Mass => "mass",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &PhysicalConfig, value: f64) -> PhysicalConfig {
        let mut cfg = *base;
        match self {
            SweepAxis::Detuning => cfg.delta_w = value * base.omega_m(),
            SweepAxis::Temperature => cfg.temperature = value,
            SweepAxis::Mass => cfg.mass = value,
        }
        cfg
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detuning" | "delta_w" => Ok(SweepAxis::Detuning),
            "temperature" => Ok(SweepAxis::Temperature),
            "mass" => Ok(SweepAxis::Mass),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub base: PhysicalConfig,
    pub system: SystemVariant,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if let Some(bad) = self.grid.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("sweep grid contains {bad}")));
        }
        let increasing = self.grid.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.grid.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::Config("sweep grid must be strictly monotone".into()));
        }
        Ok(())
    }
}

/// `n` evenly spaced points from `from` to `to`, both included.
pub fn linspace(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => {
            let step = (to - from) / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        to
                    } else {
                        from + step * i as f64
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    /// A failed point keeps its error message; the sweep carries on.
    pub outcome: std::result::Result<PointResult, String>,
}

/// Worker count from [`THREADS_ENV`]; unset, empty or unparsable means auto.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    run_sweep_with_threads(spec, threads_from_env())
}

/// Rows come back in grid order regardless of `threads`.
pub fn run_sweep_with_threads(spec: &SweepSpec, threads: usize) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| {
        spec.grid
            .par_iter()
            .map(|&value| {
                let cfg = spec.axis.apply(&spec.base, value);
                SweepRow {
                    axis_value: value,
                    outcome: run_point(&cfg, spec.system).map_err(|e| e.to_string()),
                }
            })
            .collect()
    });
    Ok(rows)
}

pub const CSV_HEADER: &str = "axis_value,stable,spectral_abscissa,q1_re,q1_im,alpha1_abs,alpha2_abs,beta_abs,\
two_eta_mr_oc,two_eta_mr_mw,two_eta_mr_oc2,two_eta_oc_mw,two_eta_oc_oc2,two_eta_oc2_mw,logneg_oc_mw,lyap_residual";

pub const NA: &str = "NA";

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(real).unwrap_or_else(|| NA.to_string())
}

pub fn format_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(256 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let mut fields = vec![real(row.axis_value)];
        match &row.outcome {
            Ok(p) => {
                let s = &p.steady_state;
                fields.push(p.stability.stable.to_string());
                fields.push(real(p.stability.spectral_abscissa));
                fields.push(real(s.q1.re));
                fields.push(real(s.q1.im));
                fields.push(real(s.alpha1.norm()));
                fields.push(real(s.alpha2.norm()));
                fields.push(real(s.beta.norm()));
                for pair in BipartitePair::ALL {
                    fields.push(opt(p.verdict(pair).map(|v| v.two_eta)));
                }
                fields.push(opt(p
                    .verdict(BipartitePair::OcMw)
                    .map(|v| v.log_negativity)));
                fields.push(opt(p.lyapunov_residual));
            }
            Err(_) => fields.extend(std::iter::repeat_n(NA.to_string(), 15)),
        }
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config(
            "refusing to write an empty sweep table".into(),
        ));
    }
    std::fs::write(path, format_csv(rows)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
