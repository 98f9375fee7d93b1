//! Physical configuration, unit conversion and bath occupancies.
//!
//! Everything downstream works in SI units with angular frequencies (rad/s).
//! Ordinary frequencies (`f_m`, `f_w`) and the optical wavelength are
//! converted once, in [`derive_rates`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{C_LIGHT, HBAR, K_B};
use crate::error::{Error, Result};

/// How the single-photon optomechanical couplings are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Coupling {
    /// Explicit couplings in rad/s per unit dimensionless displacement.
    Direct { g_oc: f64, g_oc2: f64, g_ow: f64 },
    /// Couplings computed from geometry: participation ratio `mu` and
    /// capacitor gap `d` (m) for the microwave coupling.
    Derived { mu: Option<f64>, d: Option<f64> },
}

impl Coupling {
    /// Placeholder geometry shipped with the default configuration. These
    /// values are illustrative, not measured.
    pub const PLACEHOLDER_DERIVED: Coupling = Coupling::Derived {
        mu: Some(0.008),
        d: Some(100e-9),
    };
}

/// One simulation point. Field names double as the JSON configuration keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConfig {
    /// Optical drive wavelength (m).
    pub lambda_c: f64,
    /// Mechanical resonance frequency (Hz).
    pub f_m: f64,
    /// Microwave resonance frequency (Hz).
    pub f_w: f64,
    /// Optical cavity length (m).
    pub l_c: f64,
    /// Optical drive power (W).
    pub p_c: f64,
    /// Microwave drive power (W).
    pub p_w: f64,
    /// Optical detuning, mode minus drive (rad/s).
    pub delta_c: f64,
    /// Second-harmonic detuning, mode minus twice the drive (rad/s).
    pub delta_c2: f64,
    /// Microwave detuning, mode minus drive (rad/s).
    pub delta_w: f64,
    /// Mechanical damping rate (rad/s).
    pub gamma_m: f64,
    pub kappa_c: f64,
    pub kappa_c2: f64,
    pub kappa_w: f64,
    /// Resonator mass (kg).
    pub mass: f64,
    /// Bath temperature (K).
    pub temperature: f64,
    /// Effective second-harmonic coupling, twice the susceptibility times
    /// the internal field (rad/s).
    pub chi_eff: f64,
    pub coupling: Coupling,
}

impl PhysicalConfig {
    /// Mechanical angular frequency implied by `f_m`.
    pub fn omega_m(&self) -> f64 {
        2.0 * PI * self.f_m
    }

    /// The standard constants set: 808 nm drive, 10 MHz resonator, 10 GHz
    /// microwave cavity, 1 mm cavity, 30 mW drives, 20 ng, 100 mK.
    pub fn table_one() -> Self {
        let omega_m = 2.0 * PI * 10e6;
        PhysicalConfig {
            lambda_c: 808e-9,
            f_m: 10e6,
            f_w: 10e9,
            l_c: 1e-3,
            p_c: 30e-3,
            p_w: 30e-3,
            delta_c: omega_m,
            delta_c2: omega_m,
            delta_w: omega_m,
            gamma_m: 110.0,
            kappa_c: 0.02 * omega_m,
            kappa_c2: 1e13,
            kappa_w: 0.03 * omega_m,
            mass: 20e-12,
            temperature: 0.1,
            chi_eff: 0.0,
            coupling: Coupling::PLACEHOLDER_DERIVED,
        }
    }
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        Self::table_one()
    }
}

/// List of violated invariants; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self.violations))
        }
    }
}

pub fn validate_config(cfg: &PhysicalConfig) -> ValidationReport {
    let mut violations = Vec::new();
    let mut positive = |name: &str, value: f64| {
        if !(value.is_finite() && value > 0.0) {
            violations.push(format!("{name} must be positive (got {value})"));
        }
    };
    positive("lambda_c", cfg.lambda_c);
    positive("f_m", cfg.f_m);
    positive("f_w", cfg.f_w);
    positive("l_c", cfg.l_c);
    positive("p_c", cfg.p_c);
    positive("p_w", cfg.p_w);
    positive("gamma_m", cfg.gamma_m);
    positive("kappa_c", cfg.kappa_c);
    positive("kappa_c2", cfg.kappa_c2);
    positive("kappa_w", cfg.kappa_w);
    positive("mass", cfg.mass);
    if let Coupling::Derived { mu, d } = cfg.coupling {
        if let Some(mu) = mu {
            positive("coupling.mu", mu);
        }
        if let Some(d) = d {
            positive("coupling.d", d);
        }
    }

    for (name, value) in [
        ("delta_c", cfg.delta_c),
        ("delta_c2", cfg.delta_c2),
        ("delta_w", cfg.delta_w),
    ] {
        if !value.is_finite() {
            violations.push(format!("{name} must be finite (got {value})"));
        }
    }
    if !(cfg.temperature.is_finite() && cfg.temperature >= 0.0) {
        violations.push(format!("temperature must be ≥ 0 (got {})", cfg.temperature));
    }
    if !(cfg.chi_eff.is_finite() && cfg.chi_eff >= 0.0) {
        violations.push(format!("chi_eff must be ≥ 0 (got {})", cfg.chi_eff));
    }
    if let Coupling::Direct { g_oc, g_oc2, g_ow } = cfg.coupling {
        for (name, value) in [("g_oc", g_oc), ("g_oc2", g_oc2), ("g_ow", g_ow)] {
            if !value.is_finite() {
                violations.push(format!("coupling.{name} must be finite (got {value})"));
            }
        }
    }
    ValidationReport { violations }
}

/// Every rate entering the linearized dynamics, in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedRates {
    pub omega_m: f64,
    pub omega_c: f64,
    pub omega_c2: f64,
    pub omega_w: f64,
    pub g_oc: f64,
    pub g_oc2: f64,
    pub g_ow: f64,
    /// Drive amplitudes. Real and non-negative from [`derive_rates`]; a
    /// phase may be applied afterwards.
    #[serde(serialize_with = "serialize_complex")]
    pub e_c: Complex64,
    #[serde(serialize_with = "serialize_complex")]
    pub e_w: Complex64,
    pub delta_c: f64,
    pub delta_c2: f64,
    pub delta_w: f64,
    pub gamma_m: f64,
    pub kappa_c: f64,
    pub kappa_c2: f64,
    pub kappa_w: f64,
    pub chi_eff: f64,
}

pub(crate) fn serialize_complex<S: serde::Serializer>(
    z: &Complex64,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

impl DerivedRates {
    /// Divides every rate and drive amplitude by `s`. The steady-state
    /// amplitudes are unchanged; drift and diffusion scale by `1/s`.
    pub fn scaled(&self, s: f64) -> DerivedRates {
        DerivedRates {
            omega_m: self.omega_m / s,
            omega_c: self.omega_c / s,
            omega_c2: self.omega_c2 / s,
            omega_w: self.omega_w / s,
            g_oc: self.g_oc / s,
            g_oc2: self.g_oc2 / s,
            g_ow: self.g_ow / s,
            e_c: self.e_c / s,
            e_w: self.e_w / s,
            delta_c: self.delta_c / s,
            delta_c2: self.delta_c2 / s,
            delta_w: self.delta_w / s,
            gamma_m: self.gamma_m / s,
            kappa_c: self.kappa_c / s,
            kappa_c2: self.kappa_c2 / s,
            kappa_w: self.kappa_w / s,
            chi_eff: self.chi_eff / s,
        }
    }

    /// Rates with all couplings and the second-harmonic term switched off.
    pub fn decoupled(&self) -> DerivedRates {
        DerivedRates {
            g_oc: 0.0,
            g_oc2: 0.0,
            g_ow: 0.0,
            chi_eff: 0.0,
            ..*self
        }
    }
}

/// Bose–Einstein occupancy `1 / (exp(ħω/k_B T) − 1)`.
pub fn thermal_occupancy(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::Domain(format!(
            "thermal occupancy needs a positive frequency, got {omega}"
        )));
    }
    if temperature.is_nan() || temperature < 0.0 {
        return Err(Error::Domain(format!(
            "thermal occupancy needs a non-negative temperature, got {temperature}"
        )));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let x = HBAR * omega / (K_B * temperature);
    // expm1 keeps full precision for x ≪ 1 and overflows cleanly to +inf.
    Ok(1.0 / x.exp_m1())
}

/// Zero-point displacement `√(ħ / m ω_m)` of the resonator.
pub fn zero_point_length(mass: f64, omega_m: f64) -> f64 {
    (HBAR / (mass * omega_m)).sqrt()
}

pub fn derive_rates(cfg: &PhysicalConfig) -> Result<DerivedRates> {
    validate_config(cfg).into_result()?;

    let omega_m = 2.0 * PI * cfg.f_m;
    let omega_c = 2.0 * PI * C_LIGHT / cfg.lambda_c;
    let omega_c2 = 2.0 * omega_c;
    let omega_w = 2.0 * PI * cfg.f_w;

    let (g_oc, g_oc2, g_ow) = match cfg.coupling {
        Coupling::Direct { g_oc, g_oc2, g_ow } => (g_oc, g_oc2, g_ow),
        Coupling::Derived { mu, d } => {
            let (mu, d) = match (mu, d) {
                (Some(mu), Some(d)) => (mu, d),
                _ => {
                    return Err(Error::Config(
                        "derived coupling mode requires both `mu` and `d`".into(),
                    ))
                }
            };
            let x_zpf = zero_point_length(cfg.mass, omega_m);
            (
                omega_c / cfg.l_c * x_zpf,
                omega_c2 / cfg.l_c * x_zpf,
                mu * omega_w / (2.0 * d) * x_zpf,
            )
        }
    };

    let e_c = (2.0 * cfg.p_c * cfg.kappa_c / (HBAR * omega_c)).sqrt();
    let e_w = (2.0 * cfg.p_w * cfg.kappa_w / (HBAR * omega_w)).sqrt();

    Ok(DerivedRates {
        omega_m,
        omega_c,
        omega_c2,
        omega_w,
        g_oc,
        g_oc2,
        g_ow,
        e_c: Complex64::new(e_c, 0.0),
        e_w: Complex64::new(e_w, 0.0),
        delta_c: cfg.delta_c,
        delta_c2: cfg.delta_c2,
        delta_w: cfg.delta_w,
        gamma_m: cfg.gamma_m,
        kappa_c: cfg.kappa_c,
        kappa_c2: cfg.kappa_c2,
        kappa_w: cfg.kappa_w,
        chi_eff: cfg.chi_eff,
    })
}
