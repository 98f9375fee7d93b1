//! The closed-form smallest symplectic eigenvalue against a direct
//! eigen-solve of the partially transposed covariance.

use cavent_core::gaussian::{
    entanglement_verdict, partial_transpose, symplectic_eigenvalues, symplectic_eta_minus,
    symplectic_form,
};
use nalgebra::{DMatrix, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `S diag(ν1, ν1, ν2, ν2) Sᵀ` with `S = exp(Ω H)` for a random symmetric
/// `H`: a random two-mode Gaussian state, physical by construction.
fn random_state(rng: &mut ChaCha8Rng) -> Matrix4<f64> {
    let h = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-0.6..0.6));
    let h = (&h + h.transpose()) * 0.5;
    let s = (symplectic_form(2) * h).exp();
    let nu1 = 0.5 + rng.random_range(0.0..1.5_f64).powi(2);
    let nu2 = 0.5 + rng.random_range(0.0..1.5_f64).powi(2);
    let thermal = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![nu1, nu1, nu2, nu2]));
    let v = &s * thermal * s.transpose();
    Matrix4::from_fn(|i, j| 0.5 * (v[(i, j)] + v[(j, i)]))
}

fn eigen_route(cm4: &Matrix4<f64>) -> f64 {
    let pt = partial_transpose(cm4);
    let dense = DMatrix::from_fn(4, 4, |i, j| pt[(i, j)]);
    symplectic_eigenvalues(&dense).unwrap()[0]
}

#[test]
fn closed_form_matches_eigen_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut entangled = 0;
    for k in 0..1000 {
        let v = random_state(&mut rng);
        let closed = symplectic_eta_minus(&v).unwrap();
        let eig = eigen_route(&v);
        assert!(
            (closed - eig).abs() <= 1e-9 * eig.max(1.0),
            "state {k}: closed form {closed}, eigen-solve {eig}"
        );
        let verdict = entanglement_verdict(&v).unwrap();
        assert_eq!(verdict.entangled, 2.0 * eig < 1.0, "state {k}");
        entangled += verdict.entangled as usize;
    }
    // The ensemble must exercise both outcomes to mean anything.
    assert!(entangled > 100 && entangled < 900, "{entangled} entangled");
}

#[test]
fn local_symplectic_operations_preserve_eta() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let v = random_state(&mut rng);
        // Independent single-mode squeezers and rotations on each party.
        let local = |rng: &mut ChaCha8Rng| {
            let (r, th) = (
                rng.random_range(-1.0..1.0_f64),
                rng.random_range(0.0..6.3_f64),
            );
            let rot = nalgebra::Matrix2::new(th.cos(), th.sin(), -th.sin(), th.cos());
            rot * nalgebra::Matrix2::new(r.exp(), 0.0, 0.0, (-r).exp())
        };
        let mut s = Matrix4::zeros();
        s.fixed_view_mut::<2, 2>(0, 0).copy_from(&local(&mut rng));
        s.fixed_view_mut::<2, 2>(2, 2).copy_from(&local(&mut rng));
        let w = s * v * s.transpose();
        let a = symplectic_eta_minus(&v).unwrap();
        let b = symplectic_eta_minus(&w).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn swapping_parties_preserves_eta() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let swap = Matrix4::new(
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    );
    for _ in 0..100 {
        let v = random_state(&mut rng);
        let a = symplectic_eta_minus(&v).unwrap();
        let b = symplectic_eta_minus(&(swap * v * swap)).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }
}
