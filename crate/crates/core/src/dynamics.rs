//! Linearized fluctuation dynamics `u̇ = A u + n` and its stability.
//!
//! Basis order: `(δq, δp, δX1, δP1, δX2, δP2, δXb, δPb)` with
//! `δX = (δa + δa†)/√2`, `δP = (δa − δa†)/(i√2)` (vacuum variance 1/2).

use nalgebra::{DMatrix, SMatrix};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{thermal_occupancy, DerivedRates};
use crate::steadystate::SteadyState;

pub const DIM: usize = 8;
pub type Mat8 = SMatrix<f64, DIM, DIM>;

/// Index of each quadrature in the fluctuation vector.
pub mod idx {
    pub const Q: usize = 0;
    pub const P: usize = 1;
    pub const X1: usize = 2;
    pub const P1: usize = 3;
    pub const X2: usize = 4;
    pub const P2: usize = 5;
    pub const XB: usize = 6;
    pub const PB: usize = 7;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMatrix(pub Mat8);

/// Diagonal noise intensity matrix, `⟨n(t) n(t')ᵀ⟩_sym = D δ(t − t')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionMatrix(pub Mat8);

impl DriftMatrix {
    pub fn as_dense(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(DIM, DIM, self.0.as_slice())
    }

    pub fn scaled(&self, s: f64) -> DriftMatrix {
        DriftMatrix(self.0 / s)
    }
}

impl DiffusionMatrix {
    pub fn as_dense(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(DIM, DIM, self.0.as_slice())
    }

    pub fn scaled(&self, s: f64) -> DiffusionMatrix {
        DiffusionMatrix(self.0 / s)
    }
}

/// Which frequency multiplies the mean displacement in the cavity detuning
/// shifts of the drift matrix.
///
/// `Consistent` uses the bare couplings (`Δ_c − G_oc q1`), which is what the
/// linearization of the mean-field equations produces and matches the shift
/// already present in the steady state. `AsPrinted` multiplies by the
/// effective coupling instead, so the shift reads `Δ_c − √2 G_oc α1r q1`.
/// That product is not a frequency, and at realistic drive amplitudes it
/// detunes every cavity by many mechanical linewidths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftConvention {
    #[default]
    Consistent,
    AsPrinted,
}

pub fn build_drift(rates: &DerivedRates, state: &SteadyState) -> DriftMatrix {
    build_drift_with(rates, state, DriftConvention::Consistent)
}

pub fn build_drift_with(
    rates: &DerivedRates,
    state: &SteadyState,
    convention: DriftConvention,
) -> DriftMatrix {
    let r = rates;
    let sqrt2 = std::f64::consts::SQRT_2;
    let (a1r, a1i) = (state.alpha1.re, state.alpha1.im);
    let (a2r, a2i) = (state.alpha2.re, state.alpha2.im);
    let (br, bi) = (state.beta.re, state.beta.im);
    let (q1r, q1i) = (state.q1.re, state.q1.im);
    let chi = r.chi_eff;

    let g_ocr = sqrt2 * r.g_oc * a1r;
    let g_oci = sqrt2 * r.g_oc * a1i;
    let g_ocr2 = sqrt2 * r.g_oc2 * a2r;
    let g_oci2 = sqrt2 * r.g_oc2 * a2i;
    let g_oor = sqrt2 * r.g_ow * br;
    let g_ooi = sqrt2 * r.g_ow * bi;

    let (shift_c, shift_c2, shift_w) = match convention {
        DriftConvention::Consistent => (r.g_oc, r.g_oc2, r.g_ow),
        DriftConvention::AsPrinted => (g_ocr, g_ocr2, g_oor),
    };

    let a_1 = -r.kappa_c - shift_c * q1i + chi * a2i;
    let a_2 = r.delta_c - shift_c * q1r - chi * a2r;
    let a_3 = -r.delta_c + shift_c * q1r - chi * a2r;
    let a_4 = -r.kappa_c - shift_c * q1i - chi * a2i;
    let a_5 = -r.kappa_c2 - shift_c2 * q1i;
    let a_6 = r.delta_c2 - shift_c2 * q1r;
    let a_7 = -r.delta_c2 + shift_c2 * q1r;
    let a_8 = -r.kappa_c2 - shift_c2 * q1i;
    let a_9 = -r.kappa_w - shift_w * q1i;
    let a_10 = r.delta_w - shift_w * q1r;
    let a_11 = -r.delta_w + shift_w * q1r;
    let a_12 = -r.kappa_w - shift_w * q1i;

    let w = r.omega_m;
    #[rustfmt::skip]
    let m = Mat8::from_row_slice(&[
        0.0,     w,         0.0,         0.0,        0.0,         0.0,         0.0,   0.0,
        -w,      -r.gamma_m, g_ocr,      g_oci,      g_ocr2,      g_oci2,      g_oor, g_ooi,
        -g_oci,  0.0,       a_1,         a_2,        -chi * a1i,  chi * a1r,   0.0,   0.0,
        g_ocr,   0.0,       a_3,         a_4,        -chi * a1r,  -chi * a1i,  0.0,   0.0,
        -g_oci2, 0.0,       chi * a1i,   chi * a1r,  a_5,         a_6,         0.0,   0.0,
        g_ocr2,  0.0,       -chi * a1r,  chi * a1i,  a_7,         a_8,         0.0,   0.0,
        -g_ooi,  0.0,       0.0,         0.0,        0.0,         0.0,         a_9,   a_10,
        g_oor,   0.0,       0.0,         0.0,        0.0,         0.0,         a_11,  a_12,
    ]);
    DriftMatrix(m)
}

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Mean-field vector field in real quadrature coordinates, evaluated with the
/// displacement offset from a (possibly complex) reference `q_ref`.
fn mean_field(rates: &DerivedRates, q_ref: Complex64, y: &[f64; DIM]) -> [f64; DIM] {
    let r = rates;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let q = q_ref + y[idx::Q];
    let p = y[idx::P];
    let a1 = Complex64::new(y[idx::X1], y[idx::P1]) * s;
    let a2 = Complex64::new(y[idx::X2], y[idx::P2]) * s;
    let b = Complex64::new(y[idx::XB], y[idx::PB]) * s;
    let chi = r.chi_eff;

    let dq = r.omega_m * p;
    let dp = -r.omega_m * q - r.gamma_m * p
        + r.g_ow * b.norm_sqr()
        + r.g_oc * a1.norm_sqr()
        + r.g_oc2 * a2.norm_sqr();
    let da1 =
        -(I * r.delta_c + r.kappa_c) * a1 + I * r.g_oc * q * a1 - I * chi * a1.conj() * a2 + r.e_c;
    let da2 =
        -(I * r.delta_c2 + r.kappa_c2) * a2 + I * r.g_oc2 * q * a2 - I * (0.5 * chi) * a1 * a1;
    let db = -(I * r.delta_w + r.kappa_w) * b + I * r.g_ow * q * b + r.e_w;

    let t = std::f64::consts::SQRT_2;
    [
        dq,
        dp.re,
        t * da1.re,
        t * da1.im,
        t * da2.re,
        t * da2.im,
        t * db.re,
        t * db.im,
    ]
}

/// Drift obtained by differentiating the nonlinear mean-field equations at
/// `state`, independent of the coefficient table in [`build_drift`].
///
/// The vector field is quadratic, so central differences are exact up to
/// round-off for any step; the step is taken at the scale of each coordinate.
pub fn linearize_mean_field(rates: &DerivedRates, state: &SteadyState) -> DriftMatrix {
    let t = std::f64::consts::SQRT_2;
    let y0 = [
        0.0,
        state.p1,
        t * state.alpha1.re,
        t * state.alpha1.im,
        t * state.alpha2.re,
        t * state.alpha2.im,
        t * state.beta.re,
        t * state.beta.im,
    ];
    let mut m = Mat8::zeros();
    for k in 0..DIM {
        let h = if k == idx::Q {
            state.q1.norm().max(1.0)
        } else {
            y0[k].abs().max(1.0)
        };
        let mut plus = y0;
        let mut minus = y0;
        plus[k] += h;
        minus[k] -= h;
        let fp = mean_field(rates, state.q1, &plus);
        let fm = mean_field(rates, state.q1, &minus);
        for i in 0..DIM {
            m[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    DriftMatrix(m)
}

/// Diagonal diffusion from the bath correlators: `κ(2N + 1)` per cavity
/// quadrature, `γ_m(2N(ω_m) + 1)` on the momentum, zero on the position.
pub fn build_diffusion(rates: &DerivedRates, temperature: f64) -> Result<DiffusionMatrix> {
    let r = rates;
    let n_m = thermal_occupancy(r.omega_m, temperature)?;
    let n_c = thermal_occupancy(r.omega_c, temperature)?;
    let n_c2 = thermal_occupancy(r.omega_c2, temperature)?;
    let n_w = thermal_occupancy(r.omega_w, temperature)?;
    let diag = [
        0.0,
        r.gamma_m * (2.0 * n_m + 1.0),
        r.kappa_c * (2.0 * n_c + 1.0),
        r.kappa_c * (2.0 * n_c + 1.0),
        r.kappa_c2 * (2.0 * n_c2 + 1.0),
        r.kappa_c2 * (2.0 * n_c2 + 1.0),
        r.kappa_w * (2.0 * n_w + 1.0),
        r.kappa_w * (2.0 * n_w + 1.0),
    ];
    Ok(DiffusionMatrix(Mat8::from_diagonal(&diag.into())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Sorted by real part, largest first.
    #[serde(serialize_with = "serialize_eigs")]
    pub eigenvalues: Vec<Complex64>,
    pub spectral_abscissa: f64,
    /// Margin below zero a real part must clear to count as stable.
    pub tolerance: f64,
}

fn serialize_eigs<S: serde::Serializer>(
    eigs: &[Complex64],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(eigs.len()))?;
    for z in eigs {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Relative margin applied to the Frobenius norm of the drift.
///
/// Eigenvalues from a backward-stable solver are perturbed by about
/// `ε‖A‖`; the margin sits a few hundred ulps above that. Drift matrices
/// here mix rates from ~10² to ~10¹³ s⁻¹, so a looser margin would
/// classify the bare mechanical damping (γ_m/2 ≈ 55 s⁻¹) as marginal.
pub const STABILITY_RTOL: f64 = 256.0 * f64::EPSILON;

pub fn assess_stability(a: &DriftMatrix) -> Result<StabilityReport> {
    assess_stability_dense(&a.as_dense())
}

/// Stability of a square drift matrix of any size.
pub fn assess_stability_dense(a: &DMatrix<f64>) -> Result<StabilityReport> {
    let mut eigenvalues = eigenvalues(a)?;
    eigenvalues.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    let spectral_abscissa = eigenvalues
        .first()
        .map(|z| z.re)
        .unwrap_or(f64::NEG_INFINITY);
    let tolerance = STABILITY_RTOL * a.norm();
    Ok(StabilityReport {
        stable: spectral_abscissa < -tolerance,
        eigenvalues,
        spectral_abscissa,
        tolerance,
    })
}

/// Eigenvalues of a real square matrix. The matrix is scaled by a power of
/// two first, which is exact and keeps the Schur iteration well inside the
/// floating-point range.
pub(crate) fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let scale = pow2_scale(a.amax());
    let scaled = a / scale;
    let schur = nalgebra::Schur::try_new(scaled, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen(format!("{a:.6e}")))?;
    let eigs = schur.complex_eigenvalues();
    if eigs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen(format!("{a:.6e}")));
    }
    Ok(eigs.iter().map(|z| z * scale).collect())
}

/// Nearest power of two to `x` (1 for zero or non-finite input).
pub(crate) fn pow2_scale(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        2f64.powi(x.log2().round() as i32)
    } else {
        1.0
    }
}
