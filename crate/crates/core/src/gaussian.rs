//! Steady-state covariance and bipartite Gaussian entanglement.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use serde::Serialize;

use crate::dynamics::{assess_stability, pow2_scale, DiffusionMatrix, DriftMatrix, Mat8, DIM};
use crate::error::{Error, Result};

/// Symmetrically ordered second moments `V_ij = ⟨u_i u_j + u_j u_i⟩/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(pub Mat8);

impl CovarianceMatrix {
    pub fn as_dense(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(DIM, DIM, self.0.as_slice())
    }
}

/// Solves `A V + V Aᵀ + D = 0` for a stable 8×8 drift.
pub fn solve_lyapunov(a: &DriftMatrix, d: &DiffusionMatrix) -> Result<CovarianceMatrix> {
    let report = assess_stability(a)?;
    if !report.stable {
        return Err(Error::UnstableDrift {
            spectral_abscissa: report.spectral_abscissa,
        });
    }
    let v = solve_lyapunov_dense(&a.as_dense(), &d.as_dense())?;
    Ok(CovarianceMatrix(Mat8::from_column_slice(v.as_slice())))
}

/// Dense Lyapunov solve by vectorization: `(I ⊗ A + A ⊗ I) vec V = −vec D`.
///
/// No stability check is made here; a singular Kronecker sum (an eigenvalue
/// pair with `λ_i + λ_j = 0`) is reported as [`Error::SolveSingular`].
pub fn solve_lyapunov_dense(a: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(a.shape(), (n, n), "drift must be square");
    assert_eq!(d.shape(), (n, n), "diffusion must match the drift");

    // A power-of-two rescale is exact and V is invariant under A, D → A/s, D/s.
    let s = pow2_scale(a.amax());
    let a = a / s;
    let d = d / s;

    let nn = n * n;
    let mut k = DMatrix::<f64>::zeros(nn, nn);
    // column-major vec: index of V[(i, j)] is i + n j
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for m in 0..n {
                // (A V)_ij = Σ_m A_im V_mj
                k[(row, m + n * j)] += a[(i, m)];
                // (V Aᵀ)_ij = Σ_m V_im A_jm
                k[(row, i + n * m)] += a[(j, m)];
            }
        }
    }
    let rhs = DVector::from_iterator(nn, d.iter().map(|x| -x));
    let lu = k.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(Error::SolveSingular)?;
    // Two rounds of iterative refinement tighten the residual at no real cost.
    for _ in 0..2 {
        let r = &rhs - &k * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => return Err(Error::SolveSingular),
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::SolveSingular);
    }
    let v = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&v + v.transpose()) * 0.5)
}

/// `‖A V + V Aᵀ + D‖_F / ‖D‖_F` (unnormalized when `D = 0`).
pub fn lyapunov_residual(a: &DMatrix<f64>, d: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let r = a * v + v * a.transpose() + d;
    let dn = d.norm();
    if dn == 0.0 {
        r.norm()
    } else {
        r.norm() / dn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicalityReport {
    pub physical: bool,
    pub min_symplectic_eig: f64,
    pub symplectic_eigenvalues: Vec<f64>,
}

/// Block-diagonal symplectic form `⊕ [0, 1; −1, 0]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic eigenvalues (moduli of the spectrum of `iΩV`), ascending.
pub fn symplectic_eigenvalues(v: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = v.nrows();
    if !n.is_multiple_of(2) || v.ncols() != n {
        return Err(Error::InvalidState(format!(
            "covariance must be square with even size, got {}×{}",
            n,
            v.ncols()
        )));
    }
    let omega = symplectic_form(n / 2);
    let mut moduli: Vec<f64> = match v.clone().cholesky() {
        // V = L Lᵀ: LᵀΩL is antisymmetric with eigenvalues ±iν, so ν² are
        // the eigenvalues of the symmetric matrix −(LᵀΩL)².
        Some(ch) => {
            let l = ch.l();
            let m = l.transpose() * &omega * &l;
            let sq = -(&m * &m);
            let sq = (&sq + sq.transpose()) * 0.5;
            sq.symmetric_eigenvalues()
                .iter()
                .map(|x| x.max(0.0).sqrt())
                .collect()
        }
        None => crate::dynamics::eigenvalues(&(&omega * v))?
            .iter()
            .map(|z| z.norm())
            .collect(),
    };
    moduli.sort_by(f64::total_cmp);
    Ok(moduli.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}

pub const PHYSICALITY_TOL: f64 = 1e-9;

pub fn check_physicality(v: &CovarianceMatrix) -> Result<PhysicalityReport> {
    check_physicality_dense(&v.as_dense())
}

pub fn check_physicality_dense(v: &DMatrix<f64>) -> Result<PhysicalityReport> {
    let eigs = symplectic_eigenvalues(v)?;
    let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PhysicalityReport {
        physical: min >= 0.5 - PHYSICALITY_TOL,
        min_symplectic_eig: min,
        symplectic_eigenvalues: eigs,
    })
}

/// One of the four subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Party {
    /// Mechanical resonator.
    Mr,
    /// Optical cavity.
    Oc,
    /// Second-harmonic mode.
    Oc2,
    /// Microwave cavity.
    Mw,
}

impl Party {
    /// Index of the first quadrature in the fluctuation vector.
    pub fn offset(self) -> usize {
        match self {
            Party::Mr => 0,
            Party::Oc => 2,
            Party::Oc2 => 4,
            Party::Mw => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Party::Mr => "mr",
            Party::Oc => "oc",
            Party::Oc2 => "oc2",
            Party::Mw => "mw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BipartitePair {
    MrOc,
    MrMw,
    MrOc2,
    OcMw,
    OcOc2,
    Oc2Mw,
}

impl BipartitePair {
    pub const ALL: [BipartitePair; 6] = [
        BipartitePair::MrOc,
        BipartitePair::MrMw,
        BipartitePair::MrOc2,
        BipartitePair::OcMw,
        BipartitePair::OcOc2,
        BipartitePair::Oc2Mw,
    ];

    pub fn parties(self) -> (Party, Party) {
        use Party::*;
        match self {
            BipartitePair::MrOc => (Mr, Oc),
            BipartitePair::MrMw => (Mr, Mw),
            BipartitePair::MrOc2 => (Mr, Oc2),
            BipartitePair::OcMw => (Oc, Mw),
            BipartitePair::OcOc2 => (Oc, Oc2),
            BipartitePair::Oc2Mw => (Oc2, Mw),
        }
    }

    /// `"mr_oc"`, `"oc_mw"`, ...
    pub fn name(self) -> String {
        let (a, b) = self.parties();
        format!("{}_{}", a.name(), b.name())
    }

    pub fn from_name(name: &str) -> Option<BipartitePair> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Extracts the 4×4 covariance of a pair, first party in the upper block.
pub fn reduce_bipartite(v: &CovarianceMatrix, pair: BipartitePair) -> Matrix4<f64> {
    let (a, b) = pair.parties();
    let index = [a.offset(), a.offset() + 1, b.offset(), b.offset() + 1];
    Matrix4::from_fn(|i, j| v.0[(index[i], index[j])])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementResult {
    /// `det A + det B − 2 det C`.
    pub sigma: f64,
    pub eta_minus: f64,
    pub two_eta: f64,
    pub entangled: bool,
    pub log_negativity: f64,
}

fn det2(m: Matrix2<f64>) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Smallest symplectic eigenvalue of the partially transposed two-mode
/// covariance `[A, C; Cᵀ, B]`.
pub fn symplectic_eta_minus(cm4: &Matrix4<f64>) -> Result<f64> {
    let a: Matrix2<f64> = cm4.fixed_view::<2, 2>(0, 0).into();
    let b: Matrix2<f64> = cm4.fixed_view::<2, 2>(2, 2).into();
    let c: Matrix2<f64> = cm4.fixed_view::<2, 2>(0, 2).into();
    let sigma = det2(a) + det2(b) - 2.0 * det2(c);
    let det_v = cm4.determinant();

    let slack = 1e-12 * sigma.abs().max(1.0);
    let mut disc = sigma * sigma - 4.0 * det_v;
    if disc < 0.0 {
        if disc < -slack * sigma.abs().max(1.0) {
            return Err(Error::InvalidState(format!(
                "σ² − 4 det V = {disc:.3e} is negative (σ = {sigma:.6e}, det V = {det_v:.6e})"
            )));
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    let larger = sigma + root;
    // η₋² η₊² = det V; dividing avoids the cancellation in σ − √disc.
    let eta_sq = if larger > 0.0 {
        2.0 * det_v / larger
    } else {
        0.5 * (sigma - root)
    };
    if eta_sq < 0.0 {
        if eta_sq < -slack {
            return Err(Error::InvalidState(format!(
                "negative squared symplectic eigenvalue {eta_sq:.3e}"
            )));
        }
        return Ok(0.0);
    }
    Ok(eta_sq.sqrt())
}

/// Partial transposition of the second party: flips the sign of its
/// momentum quadrature.
pub fn partial_transpose(cm4: &Matrix4<f64>) -> Matrix4<f64> {
    let flip = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0, -1.0));
    flip * cm4 * flip
}

/// Round-off allowance on the `2η < 1` test. Uncorrelated vacuum pairs
/// otherwise land a few ulps below one and read as entangled.
pub const VERDICT_MARGIN: f64 = 1e-12;

pub fn entanglement_verdict(cm4: &Matrix4<f64>) -> Result<EntanglementResult> {
    let a: Matrix2<f64> = cm4.fixed_view::<2, 2>(0, 0).into();
    let b: Matrix2<f64> = cm4.fixed_view::<2, 2>(2, 2).into();
    let c: Matrix2<f64> = cm4.fixed_view::<2, 2>(0, 2).into();
    let sigma = det2(a) + det2(b) - 2.0 * det2(c);
    let eta_minus = symplectic_eta_minus(cm4)?;
    let two_eta = 2.0 * eta_minus;
    let entangled = two_eta < 1.0 - VERDICT_MARGIN;
    Ok(EntanglementResult {
        sigma,
        eta_minus,
        two_eta,
        entangled,
        log_negativity: if entangled { -two_eta.ln() } else { 0.0 },
    })
}
