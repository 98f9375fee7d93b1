//! Monte-Carlo cross-check of the steady covariance.
//!
//! Integrates `du = A u dt + dw`, `⟨dw dwᵀ⟩ = D dt`, with Euler–Maruyama from
//! `u(0) = 0` over an ensemble of independent trajectories and estimates the
//! equal-time covariance at `t_end`.
//!
//! Random numbers: trajectory `k` draws from a ChaCha8 stream
//! (`rand_chacha::ChaCha8Rng`) seeded with `seed ^ k`, so the estimate does
//! not depend on how trajectories are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{assess_stability_dense, DiffusionMatrix, DriftMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSettings {
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Refuse to start when `n_traj · t_end / dt` exceeds this.
    pub max_trajectory_steps: Option<f64>,
}

impl EnsembleSettings {
    /// Largest step and shortest horizon the integrator accepts for `a`:
    /// `dt = 0.1 / ρ(A)` and `t_end = 10 / |spectral abscissa|`.
    pub fn bounds(a: &DMatrix<f64>) -> Result<(f64, f64)> {
        let report = assess_stability_dense(a)?;
        if !report.stable {
            return Err(Error::UnstableDrift {
                spectral_abscissa: report.spectral_abscissa,
            });
        }
        let radius = report
            .eigenvalues
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        Ok((0.1 / radius, 10.0 / report.spectral_abscissa.abs()))
    }

    /// Settings for `n_traj` trajectories on drift `a`. For an eigenvalue `λ`
    /// the Euler–Maruyama covariance is biased by about `dt |λ|² / (2 |Re λ|)`
    /// (relative); the step keeps that at a tenth of the ensemble's standard
    /// error `√(2 / n_traj)` for every eigenvalue.
    pub fn recommended(a: &DMatrix<f64>, n_traj: usize, seed: u64) -> Result<EnsembleSettings> {
        let (dt_max, t_end) = Self::bounds(a)?;
        let stderr = (2.0 / n_traj.max(1) as f64).sqrt();
        let dt_bias = assess_stability_dense(a)?
            .eigenvalues
            .iter()
            .map(|z| 0.2 * stderr * z.re.abs() / z.norm_sqr())
            .fold(f64::INFINITY, f64::min);
        Ok(EnsembleSettings {
            dt: dt_max.min(dt_bias),
            t_end,
            n_traj,
            seed,
            max_trajectory_steps: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Standard error of each covariance entry.
    pub stderr: DMatrix<f64>,
    pub n_traj: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
}

/// Largest modulus of `1 + dt λ` over the eigenvalues of `a`; the explicit
/// scheme's mean decays only when this is below one.
pub fn step_amplification(a: &DMatrix<f64>, dt: f64) -> Result<f64> {
    let report = assess_stability_dense(a)?;
    Ok(report
        .eigenvalues
        .iter()
        .map(|z| (z * dt + 1.0).norm())
        .fold(0.0, f64::max))
}

pub fn simulate_ensemble(
    a: &DriftMatrix,
    d: &DiffusionMatrix,
    settings: &EnsembleSettings,
) -> Result<EnsembleEstimate> {
    simulate_ensemble_dense(&a.as_dense(), &d.as_dense(), settings)
}

/// Noise loading `B` with `B Bᵀ = D`, via the symmetric eigendecomposition
/// so that singular (e.g. zero position noise) diffusion is fine.
fn noise_factor(d: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (d + d.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_l = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_l)
}

pub fn simulate_ensemble_dense(
    a: &DMatrix<f64>,
    d: &DMatrix<f64>,
    settings: &EnsembleSettings,
) -> Result<EnsembleEstimate> {
    let n = a.nrows();
    let EnsembleSettings {
        dt,
        t_end,
        n_traj,
        seed,
        max_trajectory_steps,
    } = *settings;
    if n_traj < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 trajectories, got {n_traj}"
        )));
    }
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::Domain(format!(
            "dt and t_end must be positive (dt = {dt}, t_end = {t_end})"
        )));
    }
    let (dt_max, t_min) = EnsembleSettings::bounds(a)?;
    if dt > dt_max {
        return Err(Error::StepTooLarge { dt, bound: dt_max });
    }
    if t_end < t_min {
        return Err(Error::Domain(format!(
            "t_end = {t_end:.3e} is shorter than the settling time {t_min:.3e}"
        )));
    }

    let growth = step_amplification(a, dt)?;
    if growth >= 1.0 {
        return Err(Error::Domain(format!(
            "Euler-Maruyama amplifies at dt = {dt:.3e} (max |1 + dt λ| = {growth:.12}); \
             lightly damped modes need dt < 2 |Re λ| / |λ|²"
        )));
    }

    let steps = (t_end / dt).ceil();
    let required = steps * n_traj as f64;
    if let Some(budget) = max_trajectory_steps {
        if required > budget {
            return Err(Error::BudgetExceeded { required, budget });
        }
    }
    let steps = steps as usize;
    let h = t_end / steps as f64;
    let sqrt_h = h.sqrt();

    // Row-major copies for the inner loop.
    let a_rows: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| a[(i, j)])
        .collect();
    let b = noise_factor(d);
    let b_rows: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| b[(i, j)])
        .collect();

    let finals: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k as u64);
            let mut u = vec![0.0; n];
            let mut du = vec![0.0; n];
            let mut xi = vec![0.0; n];
            for _ in 0..steps {
                for x in xi.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                for i in 0..n {
                    let row_a = &a_rows[i * n..(i + 1) * n];
                    let row_b = &b_rows[i * n..(i + 1) * n];
                    let drift: f64 = row_a.iter().zip(&u).map(|(x, y)| x * y).sum();
                    let noise: f64 = row_b.iter().zip(&xi).map(|(x, y)| x * y).sum();
                    du[i] = drift * h + noise * sqrt_h;
                }
                for (x, dx) in u.iter_mut().zip(&du) {
                    *x += dx;
                }
            }
            u
        })
        .collect();

    Ok(ensemble_statistics(&finals, n, h, t_end, seed))
}

/// Sample mean, covariance and per-entry standard errors, reduced in
/// trajectory order.
fn ensemble_statistics(
    finals: &[Vec<f64>],
    n: usize,
    dt: f64,
    t_end: f64,
    seed: u64,
) -> EnsembleEstimate {
    let m = finals.len() as f64;
    let mut mean = DVector::zeros(n);
    for u in finals {
        for i in 0..n {
            mean[i] += u[i];
        }
    }
    mean /= m;

    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut sum_sq = DMatrix::<f64>::zeros(n, n);
    for u in finals {
        for i in 0..n {
            for j in 0..n {
                let y = (u[i] - mean[i]) * (u[j] - mean[j]);
                sum[(i, j)] += y;
                sum_sq[(i, j)] += y * y;
            }
        }
    }
    let cov = &sum / (m - 1.0);
    let stderr = DMatrix::from_fn(n, n, |i, j| {
        let mu = sum[(i, j)] / m;
        let var = ((sum_sq[(i, j)] - m * mu * mu) / (m - 1.0)).max(0.0);
        (var / m).sqrt()
    });
    let cov = (&cov + cov.transpose()) * 0.5;
    EnsembleEstimate {
        mean,
        cov,
        stderr,
        n_traj: finals.len(),
        t_end,
        dt,
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CmComparison {
    pub max_z: f64,
    /// Largest absolute deviation relative to the largest reference entry.
    pub max_rel: f64,
    pub pass: bool,
}

pub const Z_THRESHOLD: f64 = 5.0;

pub fn compare_cm(v_ref: &DMatrix<f64>, est: &EnsembleEstimate) -> CmComparison {
    let scale = v_ref.amax();
    let mut max_z: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for ((r, e), s) in v_ref.iter().zip(est.cov.iter()).zip(est.stderr.iter()) {
        let diff = (e - r).abs();
        max_abs = max_abs.max(diff);
        let z = if *s > 0.0 {
            diff / s
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z);
    }
    CmComparison {
        max_z,
        max_rel: if scale > 0.0 {
            max_abs / scale
        } else {
            max_abs
        },
        pass: max_z < Z_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::solve_lyapunov_dense;

    fn settings(dt: f64, t_end: f64, n_traj: usize, seed: u64) -> EnsembleSettings {
        EnsembleSettings {
            dt,
            t_end,
            n_traj,
            seed,
            max_trajectory_steps: None,
        }
    }

    #[test]
    fn ornstein_uhlenbeck_variance() {
        let gamma = 2.0;
        let a = DMatrix::from_element(1, 1, -gamma);
        let d = DMatrix::from_element(1, 1, 2.0 * gamma);
        let est = simulate_ensemble_dense(&a, &d, &settings(0.002, 5.0, 10_000, 42)).unwrap();
        let z = (est.cov[(0, 0)] - 1.0).abs() / est.stderr[(0, 0)];
        assert!(z < 5.0, "z = {z}, var = {}", est.cov[(0, 0)]);
        // first moments have decayed into the noise
        let se_mean = (est.cov[(0, 0)] / est.n_traj as f64).sqrt();
        assert!(est.mean[0].abs() < 5.0 * se_mean);
    }

    #[test]
    fn halving_dt_stays_within_noise() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let d = DMatrix::from_element(1, 1, 2.0);
        let coarse = simulate_ensemble_dense(&a, &d, &settings(0.01, 10.0, 4000, 5)).unwrap();
        let fine = simulate_ensemble_dense(&a, &d, &settings(0.005, 10.0, 4000, 5)).unwrap();
        let diff = (coarse.cov[(0, 0)] - fine.cov[(0, 0)]).abs();
        let noise = coarse.stderr[(0, 0)].hypot(fine.stderr[(0, 0)]);
        assert!(diff < 5.0 * noise);
    }

    #[test]
    fn deterministic_estimates() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -1.0]);
        let d = DMatrix::identity(2, 2);
        let s = settings(0.01, 10.0, 200, 9);
        let x = simulate_ensemble_dense(&a, &d, &s).unwrap();
        let y = simulate_ensemble_dense(&a, &d, &s).unwrap();
        assert_eq!(x, y);
        let v = solve_lyapunov_dense(&a, &d).unwrap();
        assert!(compare_cm(&v, &x).max_z.is_finite());
    }

    #[test]
    fn precondition_errors() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let d = DMatrix::from_element(1, 1, 2.0);
        assert!(matches!(
            simulate_ensemble_dense(&a, &d, &settings(0.5, 10.0, 10, 1)),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(matches!(
            simulate_ensemble_dense(
                &DMatrix::from_element(1, 1, 1.0),
                &d,
                &settings(0.01, 10.0, 10, 1)
            ),
            Err(Error::UnstableDrift { .. })
        ));
        assert!(matches!(
            simulate_ensemble_dense(&a, &d, &settings(0.01, 1.0, 10, 1)),
            Err(Error::Domain(_))
        ));
        let budgeted = EnsembleSettings {
            max_trajectory_steps: Some(100.0),
            ..settings(0.01, 10.0, 10, 1)
        };
        assert!(matches!(
            simulate_ensemble_dense(&a, &d, &budgeted),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn lightly_damped_oscillator_is_refused() {
        let (w, g) = (100.0, 0.01);
        let a = DMatrix::from_row_slice(2, 2, &[-g / 2.0, w, -w, -g / 2.0]);
        let d = DMatrix::identity(2, 2) * g;
        let (dt, t_end) = EnsembleSettings::bounds(&a).unwrap();
        assert!(step_amplification(&a, dt).unwrap() > 1.0);
        assert!(matches!(
            simulate_ensemble_dense(&a, &d, &settings(dt, t_end, 10, 1)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn recommended_step_shrinks_with_ensemble_size() {
        let a = -DMatrix::identity(3, 3) * 2.0;
        let small = EnsembleSettings::recommended(&a, 2, 0).unwrap();
        assert_eq!(small.dt, 0.05);
        let big = EnsembleSettings::recommended(&a, 10_000, 0).unwrap();
        assert!((big.dt - 0.1 * (2.0e-4_f64).sqrt()).abs() < 1e-15);
        assert_eq!(big.t_end, 5.0);
    }

    fn fake_estimate(cov: DMatrix<f64>, stderr: f64) -> EnsembleEstimate {
        let n = cov.nrows();
        EnsembleEstimate {
            mean: DVector::zeros(n),
            stderr: DMatrix::from_element(n, n, stderr),
            cov,
            n_traj: 100,
            t_end: 1.0,
            dt: 0.1,
            seed: 0,
        }
    }

    #[test]
    fn compare_examples() {
        let v = DMatrix::identity(8, 8) * 0.7;
        assert!(compare_cm(&v, &fake_estimate(v.clone(), 1e-9)).pass);
        let doubled = fake_estimate(&v * 2.0, 1e-3);
        let c = compare_cm(&v, &doubled);
        assert!(!c.pass);
        assert!((c.max_rel - 1.0).abs() < 1e-15);
        // zero stderr falls back to an absolute comparison
        assert!(compare_cm(&v, &fake_estimate(v.clone(), 0.0)).pass);
        assert!(!compare_cm(&v, &fake_estimate(&v * 1.01, 0.0)).pass);
    }
}
