//! Mean-field steady state of the driven, coupled modes.
//!
//! The five balance conditions are
//!
//! ```text
//! p1 = 0
//! ω_m q1 = G_oω |β|² + G_oc |α1|² + G_oc2 |α2|²
//! 0 = −(iΔ_c + κ_c) α1 + i G_oc q1 α1 − i χ' α1* α2 + E_c
//! 0 = −(iΔ_c2 + κ_c2) α2 + i G_oc2 q1 α2 − i (χ'/2) α1²
//! 0 = −(iΔ_ω + κ_ω) β + i G_oω q1 β + E_ω
//! ```
//!
//! with `χ'` the effective second-harmonic coupling. The solver starts from
//! the closed-form decoupled solution and ramps couplings and `χ'` from zero
//! to their configured values, polishing with Newton at every step, so the
//! returned root is the branch connected to the undriven-coupling limit.

use nalgebra::{Matrix3, SMatrix, SVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{serialize_complex, DerivedRates};

type Vec8 = SVector<f64, 8>;
type Mat8 = SMatrix<f64, 8, 8>;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    /// Mean dimensionless displacement. Stored complex; physical roots have
    /// a vanishing imaginary part.
    #[serde(serialize_with = "serialize_complex")]
    pub q1: Complex64,
    pub p1: f64,
    #[serde(serialize_with = "serialize_complex")]
    pub alpha1: Complex64,
    #[serde(serialize_with = "serialize_complex")]
    pub alpha2: Complex64,
    #[serde(serialize_with = "serialize_complex")]
    pub beta: Complex64,
}

impl SteadyState {
    pub const ZERO: SteadyState = SteadyState {
        q1: Complex64::new(0.0, 0.0),
        p1: 0.0,
        alpha1: Complex64::new(0.0, 0.0),
        alpha2: Complex64::new(0.0, 0.0),
        beta: Complex64::new(0.0, 0.0),
    };

    /// True when `Im q1` is larger than round-off would explain.
    pub fn q1_has_imaginary_part(&self) -> bool {
        self.q1.im.abs() > 1e-8 * (1.0 + self.q1.re.abs())
    }

    fn to_vec(self) -> Vec8 {
        Vec8::from([
            self.q1.re,
            self.q1.im,
            self.alpha1.re,
            self.alpha1.im,
            self.alpha2.re,
            self.alpha2.im,
            self.beta.re,
            self.beta.im,
        ])
    }

    fn from_vec(x: &Vec8) -> SteadyState {
        SteadyState {
            q1: Complex64::new(x[0], x[1]),
            p1: 0.0,
            alpha1: Complex64::new(x[2], x[3]),
            alpha2: Complex64::new(x[4], x[5]),
            beta: Complex64::new(x[6], x[7]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target relative residual (see [`relative_residual`]).
    pub tolerance: f64,
    /// Total Newton iteration budget across all continuation steps.
    pub max_iterations: usize,
    /// Number of equal continuation steps tried first; steps are halved on
    /// failure and regrown on success.
    pub initial_steps: usize,
    /// Smallest continuation step before giving up.
    pub min_step: f64,
    /// Also report the other real roots of the single-cavity cubic, when
    /// the configuration reduces to one.
    pub enumerate_roots: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-12,
            max_iterations: 200,
            initial_steps: 8,
            min_step: 1e-6,
            enumerate_roots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyStateSolution {
    pub state: SteadyState,
    /// Relative residual of the returned state.
    pub residual: f64,
    pub iterations: usize,
    /// Other real `q1` roots of the single-cavity reduction, ascending.
    /// Empty unless requested and applicable.
    pub alternate_q1: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Closed-form solution with every coupling and `χ'` set to zero.
pub fn decoupled_steady_state(rates: &DerivedRates) -> SteadyState {
    SteadyState {
        q1: Complex64::new(0.0, 0.0),
        p1: 0.0,
        alpha1: rates.e_c / Complex64::new(rates.kappa_c, rates.delta_c),
        alpha2: Complex64::new(0.0, 0.0),
        beta: rates.e_w / Complex64::new(rates.kappa_w, rates.delta_w),
    }
}

/// Left-hand sides of the five balance conditions, in order.
fn balance(rates: &DerivedRates, s: &SteadyState) -> [Complex64; 5] {
    let r = rates;
    let chi = r.chi_eff;
    let force = -r.omega_m * s.q1 - r.gamma_m * s.p1
        + r.g_ow * s.beta.norm_sqr()
        + r.g_oc * s.alpha1.norm_sqr()
        + r.g_oc2 * s.alpha2.norm_sqr();
    let a1 = -(I * r.delta_c + r.kappa_c) * s.alpha1 + I * r.g_oc * s.q1 * s.alpha1
        - I * chi * s.alpha1.conj() * s.alpha2
        + r.e_c;
    let a2 = -(I * r.delta_c2 + r.kappa_c2) * s.alpha2 + I * r.g_oc2 * s.q1 * s.alpha2
        - I * (0.5 * chi) * s.alpha1 * s.alpha1;
    let b = -(I * r.delta_w + r.kappa_w) * s.beta + I * r.g_ow * s.q1 * s.beta + r.e_w;
    [Complex64::new(s.p1, 0.0), force, a1, a2, b]
}

/// Magnitude of the individual terms of each balance condition; the
/// denominator of the relative residual.
fn balance_scale(rates: &DerivedRates, s: &SteadyState) -> [f64; 5] {
    let r = rates;
    let chi = r.chi_eff.abs();
    let (q, a1, a2, b) = (s.q1.norm(), s.alpha1.norm(), s.alpha2.norm(), s.beta.norm());
    [
        s.p1.abs(),
        r.omega_m * q
            + r.gamma_m * s.p1.abs()
            + r.g_ow.abs() * b * b
            + r.g_oc.abs() * a1 * a1
            + r.g_oc2.abs() * a2 * a2,
        Complex64::new(r.kappa_c, r.delta_c).norm() * a1
            + r.g_oc.abs() * q * a1
            + chi * a1 * a2
            + r.e_c.norm(),
        Complex64::new(r.kappa_c2, r.delta_c2).norm() * a2
            + r.g_oc2.abs() * q * a2
            + 0.5 * chi * a1 * a1,
        Complex64::new(r.kappa_w, r.delta_w).norm() * b + r.g_ow.abs() * q * b + r.e_w.norm(),
    ]
}

/// Euclidean norm of the five balance conditions at `state`.
pub fn steady_state_residual(rates: &DerivedRates, state: &SteadyState) -> f64 {
    balance(rates, state)
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// [`steady_state_residual`] divided by the norm of the per-line term
/// magnitudes. Zero when every term vanishes.
pub fn relative_residual(rates: &DerivedRates, state: &SteadyState) -> f64 {
    let abs = steady_state_residual(rates, state);
    let scale = balance_scale(rates, state)
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if scale == 0.0 {
        abs
    } else {
        abs / scale
    }
}

fn residual_vec(rates: &DerivedRates, x: &Vec8) -> Vec8 {
    let [_, f, a1, a2, b] = balance(rates, &SteadyState::from_vec(x));
    Vec8::from([f.re, f.im, a1.re, a1.im, a2.re, a2.im, b.re, b.im])
}

/// Real 8×8 Jacobian of [`residual_vec`], assembled from Wirtinger
/// derivatives `(∂/∂u, ∂/∂u*)` of each complex equation.
fn jacobian(rates: &DerivedRates, x: &Vec8) -> Mat8 {
    let s = SteadyState::from_vec(x);
    let r = rates;
    let chi = r.chi_eff;
    let zero = Complex64::new(0.0, 0.0);
    let (q, a1, a2, b) = (s.q1, s.alpha1, s.alpha2, s.beta);

    // wirtinger[eq][var] = (d/du, d/du*) with vars ordered q1, α1, α2, β.
    let mut w = [[(zero, zero); 4]; 4];
    w[0][0] = (Complex64::new(-r.omega_m, 0.0), zero);
    w[0][1] = (r.g_oc * a1.conj(), r.g_oc * a1);
    w[0][2] = (r.g_oc2 * a2.conj(), r.g_oc2 * a2);
    w[0][3] = (r.g_ow * b.conj(), r.g_ow * b);

    w[1][0] = (I * r.g_oc * a1, zero);
    w[1][1] = (-(I * r.delta_c + r.kappa_c) + I * r.g_oc * q, -I * chi * a2);
    w[1][2] = (-I * chi * a1.conj(), zero);

    w[2][0] = (I * r.g_oc2 * a2, zero);
    w[2][1] = (-I * chi * a1, zero);
    w[2][2] = (-(I * r.delta_c2 + r.kappa_c2) + I * r.g_oc2 * q, zero);

    w[3][0] = (I * r.g_ow * b, zero);
    w[3][3] = (-(I * r.delta_w + r.kappa_w) + I * r.g_ow * q, zero);

    let mut jac = Mat8::zeros();
    for (eq, row) in w.iter().enumerate() {
        for (var, &(d, dc)) in row.iter().enumerate() {
            let d_re = d + dc;
            let d_im = I * (d - dc);
            jac[(2 * eq, 2 * var)] = d_re.re;
            jac[(2 * eq + 1, 2 * var)] = d_re.im;
            jac[(2 * eq, 2 * var + 1)] = d_im.re;
            jac[(2 * eq + 1, 2 * var + 1)] = d_im.im;
        }
    }
    jac
}

fn ramp(rates: &DerivedRates, t: f64) -> DerivedRates {
    DerivedRates {
        g_oc: rates.g_oc * t,
        g_oc2: rates.g_oc2 * t,
        g_ow: rates.g_ow * t,
        chi_eff: rates.chi_eff * t,
        ..*rates
    }
}

enum StepOutcome {
    Converged(Vec8, usize),
    Failed { singular: bool, iterations: usize },
}

/// Newton iterations at a fixed continuation parameter.
fn newton(rates: &DerivedRates, mut x: Vec8, tol: f64, budget: usize) -> StepOutcome {
    let mut res = relative_residual(rates, &SteadyState::from_vec(&x));
    for it in 0..=budget {
        if res <= tol {
            return StepOutcome::Converged(x, it);
        }
        if it == budget {
            break;
        }
        let f = residual_vec(rates, &x);
        let jac = jacobian(rates, &x);

        // Column equilibration by variable magnitude keeps pivoting sane when
        // |β| and |α1| differ by orders of magnitude.
        let mut scale = Vec8::zeros();
        for k in 0..4 {
            let m = x[2 * k].hypot(x[2 * k + 1]).max(1.0);
            scale[2 * k] = m;
            scale[2 * k + 1] = m;
        }
        let scaled = jac * Mat8::from_diagonal(&scale);
        let Some(dy) = scaled.full_piv_lu().solve(&(-f)) else {
            return StepOutcome::Failed {
                singular: true,
                iterations: it,
            };
        };
        let dx = dy.component_mul(&scale);
        if !dx.iter().all(|v| v.is_finite()) {
            return StepOutcome::Failed {
                singular: true,
                iterations: it,
            };
        }
        x += dx;
        let next = relative_residual(rates, &SteadyState::from_vec(&x));
        if !next.is_finite() {
            return StepOutcome::Failed {
                singular: false,
                iterations: it + 1,
            };
        }
        // Round-off floor: the step no longer moves the iterate.
        if next > tol && dx.norm() <= 4.0 * f64::EPSILON * x.norm() {
            return StepOutcome::Failed {
                singular: false,
                iterations: it + 1,
            };
        }
        res = next;
    }
    StepOutcome::Failed {
        singular: false,
        iterations: budget,
    }
}

const NEWTON_PER_STEP: usize = 12;

struct ContinuationFailure {
    error: Error,
    last: Vec8,
    iterations: usize,
}

/// Ramps couplings and `χ'` from zero to one, returning the converged point
/// and the Newton iterations spent.
fn continuation(
    scaled: &DerivedRates,
    start: SteadyState,
    opts: &SolverOptions,
) -> std::result::Result<(Vec8, usize), ContinuationFailure> {
    let mut x = start.to_vec();
    let mut x_prev: Option<(Vec8, f64)> = None;
    let mut t = 0.0_f64;
    let mut h = 1.0 / opts.initial_steps.max(1) as f64;
    let mut iterations = 0usize;

    let non_convergence = |x: &Vec8, t: f64, iterations: usize| {
        let last = SteadyState::from_vec(x);
        ContinuationFailure {
            error: Error::NonConvergence {
                iterations,
                residual: relative_residual(&ramp(scaled, t), &last),
                progress: t,
                last: Box::new(last),
            },
            last: *x,
            iterations,
        }
    };

    while t < 1.0 {
        let h_eff = h.min(1.0 - t);
        let target = if t + h_eff >= 1.0 - 1e-15 {
            1.0
        } else {
            t + h_eff
        };
        let r = ramp(scaled, target);

        // Secant predictor from the previous accepted point.
        let guess = match x_prev {
            Some((xp, tp)) if t > tp => x + (x - xp) * ((target - t) / (t - tp)),
            _ => x,
        };
        let remaining = opts.max_iterations.saturating_sub(iterations);
        match newton(&r, guess, opts.tolerance, NEWTON_PER_STEP.min(remaining)) {
            StepOutcome::Converged(xn, its) => {
                iterations += its;
                x_prev = Some((x, t));
                x = xn;
                t = target;
                h = (2.0 * h_eff).min(1.0);
            }
            StepOutcome::Failed {
                singular,
                iterations: its,
            } => {
                iterations += its;
                if iterations >= opts.max_iterations {
                    return Err(non_convergence(&x, t, iterations));
                }
                h = 0.5 * h_eff;
                if h < opts.min_step {
                    if singular {
                        return Err(ContinuationFailure {
                            error: Error::JacobianSingular { progress: t },
                            last: x,
                            iterations,
                        });
                    }
                    return Err(non_convergence(&x, t, iterations));
                }
            }
        }
    }
    Ok((x, iterations))
}

/// Solves the balance conditions by homotopy continuation from
/// [`decoupled_steady_state`].
///
/// Without second-harmonic coupling the continued branch can end at a fold
/// of a bistable response. The solver then takes the coexisting real root
/// (see [`real_q1_roots`]) nearest to where continuation stopped and says so
/// in the warnings.
pub fn solve_steady_state(
    rates: &DerivedRates,
    opts: &SolverOptions,
) -> Result<SteadyStateSolution> {
    // Conditioning only: the amplitudes are invariant under a common rescale.
    let unit = if rates.omega_m > 0.0 {
        rates.omega_m
    } else {
        1.0
    };
    let scaled = rates.scaled(unit);

    let mut warnings = Vec::new();
    let (x, iterations) = match continuation(&scaled, decoupled_steady_state(rates), opts) {
        Ok(done) => done,
        Err(failure) => {
            let jumped = if rates.chi_eff == 0.0 {
                jump_to_coexisting_branch(&scaled, &failure.last, opts)
            } else {
                None
            };
            match jumped {
                Some(x) => {
                    warnings.push(format!(
                        "continuation stopped at a fold ({}); using the coexisting branch q1 = {:.6e}",
                        failure.error, x[0]
                    ));
                    (x, failure.iterations)
                }
                None => return Err(failure.error),
            }
        }
    };

    let state = SteadyState::from_vec(&x);
    let residual = relative_residual(rates, &state);
    if state.q1_has_imaginary_part() {
        warnings.push(format!(
            "mean displacement has a non-negligible imaginary part ({:.3e})",
            state.q1.im
        ));
    }
    let alternate_q1 = if opts.enumerate_roots {
        real_q1_roots(rates)
            .map(|roots| {
                roots
                    .into_iter()
                    .filter(|q| (q - state.q1.re).abs() > 1e-7 * (1.0 + q.abs()))
                    .collect()
            })
            .unwrap_or_default()
    } else {
        Vec::new()
    };

    Ok(SteadyStateSolution {
        state,
        residual,
        iterations,
        alternate_q1,
        warnings,
    })
}

fn jump_to_coexisting_branch(
    scaled: &DerivedRates,
    last: &Vec8,
    opts: &SolverOptions,
) -> Option<Vec8> {
    let q_last = last[0];
    let q = real_q1_roots(scaled)?
        .into_iter()
        .min_by(|a, b| (a - q_last).abs().total_cmp(&(b - q_last).abs()))?;
    let start = state_on_branch(scaled, q).to_vec();
    match newton(scaled, start, opts.tolerance, NEWTON_PER_STEP) {
        StepOutcome::Converged(x, _) => Some(x),
        StepOutcome::Failed { .. } => None,
    }
}

/// Steady state with `χ' = 0` and mean displacement `q1`: every cavity
/// amplitude follows from its own balance condition.
pub fn state_on_branch(rates: &DerivedRates, q1: f64) -> SteadyState {
    let amp =
        |e: Complex64, kappa: f64, delta: f64, g: f64| e / Complex64::new(kappa, delta - g * q1);
    SteadyState {
        q1: Complex64::new(q1, 0.0),
        p1: 0.0,
        alpha1: amp(rates.e_c, rates.kappa_c, rates.delta_c, rates.g_oc),
        alpha2: Complex64::new(0.0, 0.0),
        beta: amp(rates.e_w, rates.kappa_w, rates.delta_w, rates.g_ow),
    }
}

/// Upper bound on grid cells scanned by [`real_q1_roots`].
const MAX_SCAN_CELLS: usize = 1 << 22;

/// Every real root of `ω_m q = Σ G |E|² / (κ² + (Δ − G q)²)`, ascending.
///
/// With `χ' = 0` the second-harmonic mode stays empty and the balance
/// conditions collapse to this scalar equation. Roots are bracketed on a grid
/// finer than the narrowest cavity response in `q` and refined by bisection.
/// Returns `None` when `χ' ≠ 0`.
pub fn real_q1_roots(rates: &DerivedRates) -> Option<Vec<f64>> {
    if rates.chi_eff != 0.0 || rates.omega_m.is_nan() || rates.omega_m <= 0.0 {
        return None;
    }
    let modes: Vec<(f64, f64, f64, f64)> = [
        (
            rates.g_oc,
            rates.kappa_c,
            rates.delta_c,
            rates.e_c.norm_sqr(),
        ),
        (
            rates.g_ow,
            rates.kappa_w,
            rates.delta_w,
            rates.e_w.norm_sqr(),
        ),
    ]
    .into_iter()
    .filter(|&(g, _, _, e2)| g != 0.0 && e2 != 0.0)
    .collect();
    if modes.is_empty() {
        return Some(vec![0.0]);
    }
    let w = rates.omega_m;
    let f = |q: f64| {
        let force: f64 = modes
            .iter()
            .map(|&(g, k, d, e2)| {
                let x = d - g * q;
                g * e2 / (k * k + x * x)
            })
            .sum();
        w * q - force
    };

    // |force| ≤ Σ |G| E² / κ², which bounds every root.
    let bound = modes
        .iter()
        .map(|&(g, k, _, e2)| g.abs() * e2 / (k * k))
        .sum::<f64>()
        / w;
    let width = modes
        .iter()
        .map(|&(g, k, _, _)| k / g.abs())
        .fold(f64::INFINITY, f64::min);
    let (lo, hi) = (-bound * (1.0 + 1e-12), bound * (1.0 + 1e-12));
    let cells = ((hi - lo) / (width / 8.0))
        .ceil()
        .clamp(16.0, MAX_SCAN_CELLS as f64) as usize;
    let step = (hi - lo) / cells as f64;

    let mut roots = Vec::new();
    let mut a = lo;
    let mut fa = f(a);
    for i in 1..=cells {
        let b = if i == cells { hi } else { lo + step * i as f64 };
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            roots.push(bisect(&f, a, b, fa));
        }
        a = b;
        fa = fb;
    }
    if fa == 0.0 {
        roots.push(a);
    }
    Some(roots)
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Real roots of the cubic `ω_m q (κ² + (Δ − G q)²) = G |E|²`, available
/// when `χ' = 0` and exactly one driven mode couples to the resonator.
pub fn single_cavity_roots(rates: &DerivedRates) -> Option<Vec<f64>> {
    if rates.chi_eff != 0.0 {
        return None;
    }
    let active: Vec<(f64, f64, f64, f64)> = [
        (rates.g_oc, rates.kappa_c, rates.delta_c, rates.e_c.norm()),
        (rates.g_ow, rates.kappa_w, rates.delta_w, rates.e_w.norm()),
        // the second-harmonic mode is undriven without χ', so α2 = 0
        (rates.g_oc2, rates.kappa_c2, rates.delta_c2, 0.0),
    ]
    .into_iter()
    .filter(|&(g, _, _, e)| g != 0.0 && e != 0.0)
    .collect();
    let [(g, kappa, delta, e)] = active[..] else {
        return None;
    };
    let w = rates.omega_m;

    // ω G² q³ − 2ωΔG q² + ω(κ² + Δ²) q − G E² = 0, made monic.
    let c2 = -2.0 * delta / g;
    let c1 = (kappa * kappa + delta * delta) / (g * g);
    let c0 = -e * e / (w * g);
    let companion = Matrix3::new(0.0, 0.0, -c0, 1.0, 0.0, -c1, 0.0, 1.0, -c2);
    let poly = |q: f64| ((q + c2) * q + c1) * q + c0;
    let dpoly = |q: f64| (3.0 * q + 2.0 * c2) * q + c1;

    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
        .map(|z| {
            let mut q = z.re;
            for _ in 0..8 {
                let d = dpoly(q);
                if d == 0.0 {
                    break;
                }
                q -= poly(q) / d;
            }
            q
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    Some(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_rates, PhysicalConfig};
    use approx::assert_relative_eq;

    fn unit_rates() -> DerivedRates {
        DerivedRates {
            omega_m: 1.0,
            omega_c: 10.0,
            omega_c2: 20.0,
            omega_w: 5.0,
            g_oc: 0.0,
            g_oc2: 0.0,
            g_ow: 0.0,
            e_c: Complex64::new(1.0, 0.0),
            e_w: Complex64::new(1.0, 0.0),
            delta_c: 0.0,
            delta_c2: 0.0,
            delta_w: 1.0,
            gamma_m: 0.01,
            kappa_c: 1.0,
            kappa_c2: 1.0,
            kappa_w: 1.0,
            chi_eff: 0.0,
        }
    }

    #[test]
    fn decoupled_closed_forms() {
        let r = unit_rates();
        let s = decoupled_steady_state(&r);
        assert_eq!(s.alpha1, Complex64::new(1.0, 0.0));
        assert_eq!(s.beta, Complex64::new(0.5, -0.5));
        assert_eq!(s.alpha2, Complex64::new(0.0, 0.0));
        assert_eq!(s.q1, Complex64::new(0.0, 0.0));

        let undriven = DerivedRates {
            e_c: Complex64::new(0.0, 0.0),
            e_w: Complex64::new(0.0, 0.0),
            ..r
        };
        assert_eq!(decoupled_steady_state(&undriven), SteadyState::ZERO);
    }

    #[test]
    fn residual_examples() {
        let r = unit_rates();
        let s = decoupled_steady_state(&r);
        assert!(steady_state_residual(&r, &s) < 1e-15);

        let bumped = SteadyState {
            alpha1: s.alpha1 + 1.0,
            ..s
        };
        // −(κ_c)(α1 + 1) + E_c = −1 with κ_c = E_c = 1; nothing else moves.
        assert_relative_eq!(steady_state_residual(&r, &bumped), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_coupling_solve_is_exactly_decoupled() {
        let rates = derive_rates(&PhysicalConfig {
            coupling: crate::params::Coupling::Direct {
                g_oc: 0.0,
                g_oc2: 0.0,
                g_ow: 0.0,
            },
            ..PhysicalConfig::table_one()
        })
        .unwrap();
        let sol = solve_steady_state(&rates, &SolverOptions::default()).unwrap();
        assert_eq!(sol.state, decoupled_steady_state(&rates));
    }

    /// Damped fixed-point iteration of the scalar displacement equation.
    fn scalar_fixed_point(r: &DerivedRates) -> f64 {
        let mut q = 0.0;
        for _ in 0..100_000 {
            let a = r.e_c / Complex64::new(r.kappa_c, r.delta_c - r.g_oc * q);
            let next = r.g_oc * a.norm_sqr() / r.omega_m;
            let q_new = 0.7 * q + 0.3 * next;
            if (q_new - q).abs() < 1e-16 * (1.0 + q.abs()) {
                return q_new;
            }
            q = q_new;
        }
        q
    }

    #[test]
    fn single_optical_mode_matches_fixed_point() {
        let r = DerivedRates {
            g_oc: 0.1,
            e_c: Complex64::new(2.0, 0.0),
            delta_c: 1.0,
            kappa_c: 0.5,
            e_w: Complex64::new(0.0, 0.0),
            ..unit_rates()
        };
        let q_ref = scalar_fixed_point(&r);
        let sol = solve_steady_state(&r, &SolverOptions::default()).unwrap();
        assert!((sol.state.q1.re - q_ref).abs() < 1e-10 * (1.0 + q_ref.abs()));
        assert!(sol.state.q1.im.abs() < 1e-12);
        let a_ref = r.e_c / Complex64::new(r.kappa_c, r.delta_c - r.g_oc * q_ref);
        assert!((sol.state.alpha1 - a_ref).norm() < 1e-10);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn table_one_sys_one_converges() {
        let rates = derive_rates(&PhysicalConfig::table_one()).unwrap();
        let rates = DerivedRates {
            g_oc2: 0.0,
            chi_eff: 0.0,
            ..rates
        };
        let sol = solve_steady_state(&rates, &SolverOptions::default()).unwrap();
        assert!(sol.residual < 1e-12, "residual {}", sol.residual);
        assert!(sol.state.beta.norm_sqr() > 0.0);
        assert!(!sol.state.q1_has_imaginary_part());
        assert!(sol.warnings.is_empty());
        assert_eq!(sol.state.p1, 0.0);
    }

    #[test]
    fn drive_phase_rotates_amplitudes() {
        let base = DerivedRates {
            g_oc: 0.05,
            g_oc2: 0.02,
            g_ow: 0.03,
            chi_eff: 0.2,
            e_c: Complex64::new(1.5, 0.0),
            delta_c: 0.7,
            delta_c2: 0.4,
            ..unit_rates()
        };
        let ref_sol = solve_steady_state(&base, &SolverOptions::default()).unwrap();
        assert!(ref_sol.state.alpha2.norm() > 1e-3);
        for phi in [std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2] {
            let rot = Complex64::from_polar(1.0, phi);
            let r = DerivedRates {
                e_c: base.e_c * rot,
                ..base
            };
            let s = solve_steady_state(&r, &SolverOptions::default())
                .unwrap()
                .state;
            let s0 = ref_sol.state;
            assert!((s.alpha1 - s0.alpha1 * rot).norm() < 1e-10);
            assert!((s.alpha2 - s0.alpha2 * rot * rot).norm() < 1e-10);
            assert!((s.q1 - s0.q1).norm() < 1e-10);
            assert!((s.beta.norm() - s0.beta.norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let rates = derive_rates(&PhysicalConfig::table_one()).unwrap();
        let a = solve_steady_state(&rates, &SolverOptions::default()).unwrap();
        let b = solve_steady_state(&rates, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.state.q1.re.to_bits(), b.state.q1.re.to_bits());
    }

    #[test]
    fn intracavity_power_grows_with_drive() {
        let mut last = 0.0;
        for k in 1..=20 {
            let r = DerivedRates {
                g_oc: 0.1,
                e_c: Complex64::new(0.25 * k as f64, 0.0),
                delta_c: 0.0,
                e_w: Complex64::new(0.0, 0.0),
                ..unit_rates()
            };
            let s = solve_steady_state(&r, &SolverOptions::default())
                .unwrap()
                .state;
            assert!(s.alpha1.norm_sqr() >= last);
            last = s.alpha1.norm_sqr();
        }
    }

    #[test]
    fn bistable_cubic_reports_other_roots() {
        // Strong drive on the red side of a narrow cavity: three real roots.
        let r = DerivedRates {
            g_oc: 0.1,
            e_c: Complex64::new(3.0, 0.0),
            delta_c: 2.0,
            kappa_c: 0.1,
            e_w: Complex64::new(0.0, 0.0),
            ..unit_rates()
        };
        let roots = single_cavity_roots(&r).unwrap();
        assert_eq!(roots.len(), 3);
        for q in &roots {
            let a = r.e_c / Complex64::new(r.kappa_c, r.delta_c - r.g_oc * q);
            let lhs = r.omega_m * q;
            assert_relative_eq!(lhs, r.g_oc * a.norm_sqr(), max_relative = 1e-9);
        }
        let opts = SolverOptions {
            enumerate_roots: true,
            ..SolverOptions::default()
        };
        let sol = solve_steady_state(&r, &opts).unwrap();
        assert_eq!(sol.alternate_q1.len(), 2);
        // the continued branch is the one nearest the uncoupled solution
        assert_relative_eq!(sol.state.q1.re, roots[0], max_relative = 1e-9);
    }

    #[test]
    fn cubic_not_applicable_with_two_active_modes() {
        let r = DerivedRates {
            g_oc: 0.1,
            g_ow: 0.1,
            ..unit_rates()
        };
        assert!(single_cavity_roots(&r).is_none());
    }

    #[test]
    fn scan_agrees_with_cubic() {
        let r = DerivedRates {
            g_oc: 0.1,
            e_c: Complex64::new(3.0, 0.0),
            delta_c: 2.0,
            kappa_c: 0.1,
            e_w: Complex64::new(0.0, 0.0),
            ..unit_rates()
        };
        let cubic = single_cavity_roots(&r).unwrap();
        let scan = real_q1_roots(&r).unwrap();
        assert_eq!(scan.len(), cubic.len());
        for (a, b) in scan.iter().zip(&cubic) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn scan_roots_solve_two_mode_balance() {
        let r = DerivedRates {
            g_oc: 0.1,
            g_ow: 0.05,
            e_c: Complex64::new(3.0, 0.0),
            e_w: Complex64::new(4.0, 0.0),
            delta_c: 2.0,
            delta_w: 1.5,
            kappa_c: 0.1,
            kappa_w: 0.2,
            ..unit_rates()
        };
        let roots = real_q1_roots(&r).unwrap();
        assert!(roots.len() >= 3, "{roots:?}");
        for q in roots {
            assert!(relative_residual(&r, &state_on_branch(&r, q)) < 1e-12);
        }
    }

    #[test]
    fn fold_falls_back_to_coexisting_branch() {
        // Past the upper fold of the bistable response the continued branch
        // disappears before the full coupling is reached.
        let base = DerivedRates {
            e_c: Complex64::new(3.0, 0.0),
            delta_c: 2.0,
            kappa_c: 0.1,
            e_w: Complex64::new(0.0, 0.0),
            ..unit_rates()
        };
        let mut found = false;
        for g in [0.2, 0.3, 0.4, 0.6, 0.8] {
            let r = DerivedRates { g_oc: g, ..base };
            let sol = solve_steady_state(&r, &SolverOptions::default()).unwrap();
            assert!(sol.residual < 1e-12);
            let roots = real_q1_roots(&r).unwrap();
            assert!(roots
                .iter()
                .any(|q| (q - sol.state.q1.re).abs() < 1e-9 * (1.0 + q.abs())));
            found |= sol.warnings.iter().any(|w| w.contains("coexisting branch"));
        }
        assert!(found);
    }

    #[test]
    fn no_scan_with_second_harmonic() {
        let r = DerivedRates {
            chi_eff: 0.1,
            ..unit_rates()
        };
        assert!(real_q1_roots(&r).is_none());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let r = DerivedRates {
            g_oc: 0.05,
            g_oc2: 0.02,
            g_ow: 0.03,
            chi_eff: 0.2,
            ..unit_rates()
        };
        let x = Vec8::from([0.3, -0.1, 0.8, 0.2, -0.4, 0.5, 0.6, -0.7]);
        let jac = jacobian(&r, &x);
        // residual_vec is polynomial of degree two: central differences are exact
        let h = 0.5;
        for k in 0..8 {
            let mut e = Vec8::zeros();
            e[k] = h;
            let col = (residual_vec(&r, &(x + e)) - residual_vec(&r, &(x - e))) / (2.0 * h);
            for i in 0..8 {
                assert!((col[i] - jac[(i, k)]).abs() < 1e-13, "({i},{k})");
            }
        }
    }
}
