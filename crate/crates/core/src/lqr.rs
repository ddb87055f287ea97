//! Discrete-time finite-horizon LQR.
//!
//! The backward Riccati sweep over a time-varying Jacobian sequence,
//!
//! ```text
//!   P_N = S
//!   R̄ = R + B_kᵀ P_{k+1} B_k
//!   K_k = R̄⁻¹ B_kᵀ P_{k+1} A_k
//!   P_k = A_kᵀ (P_{k+1} − P_{k+1} B_k R̄⁻¹ B_kᵀ P_{k+1}) A_k + Q
//! ```
//!
//! produces the whole gain schedule offline. R̄ is factored by Cholesky and
//! every P_k is re-symmetrized to bound drift over long horizons.

use nalgebra::{DMatrix, SMatrix};
use thiserror::Error;

use crate::linearize::{DiscreteJacobians, StateMat, ERROR_DIM, INPUT_DIM};

pub type GainMat = SMatrix<f64, INPUT_DIM, ERROR_DIM>;
type WeightRMat = SMatrix<f64, INPUT_DIM, INPUT_DIM>;

#[derive(Debug, Error)]
pub enum LqrError {
    #[error("{which} weight must be symmetric")]
    NotSymmetric { which: &'static str },
    #[error("{which} weight must be positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { which: &'static str, min_eig: f64 },
    #[error("R weight must be positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("effort matrix R + BᵀPB is numerically singular at step {step}")]
    SingularEffort { step: usize },
    #[error("Riccati recursion diverged at step {step} (‖P‖ beyond 1e12)")]
    Divergence { step: usize },
}

fn check_symmetric<const N: usize>(
    m: &SMatrix<f64, N, N>,
    which: &'static str,
) -> Result<(), LqrError> {
    if (m - m.transpose()).abs().max() > 1e-9 {
        return Err(LqrError::NotSymmetric { which });
    }
    Ok(())
}

fn min_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    DMatrix::from_column_slice(N, N, m.as_slice())
        .symmetric_eigenvalues()
        .min()
}

/// Cost-function weights for the 12-state, 4-input problem.
///
/// `Default` weights the position errors an order of magnitude above the
/// attitude and velocity errors, keeps a light pull on the integrator
/// state, and uses S = Q on the terminal error.
#[derive(Clone, Copy, Debug)]
pub struct LqrWeights {
    pub q: StateMat,
    pub r: WeightRMat,
    pub s: StateMat,
}

impl Default for LqrWeights {
    fn default() -> Self {
        let q = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 10.0, 10.0, 0.1, 0.1, 0.1];
        LqrWeights::from_diagonals(&q, &[1.0; 4], &q).expect("default weights are valid")
    }
}

impl LqrWeights {
    /// Validates symmetry and definiteness: Q, S ⪰ 0 and R ≻ 0, by
    /// symmetric eigenvalue test.
    pub fn new(q: StateMat, r: WeightRMat, s: StateMat) -> Result<Self, LqrError> {
        check_symmetric(&q, "Q")?;
        check_symmetric(&s, "S")?;
        check_symmetric(&r, "R")?;
        for (m, which) in [(&q, "Q"), (&s, "S")] {
            let min_eig = min_eigenvalue(m);
            if min_eig < -1e-8 {
                return Err(LqrError::NotPositiveSemidefinite { which, min_eig });
            }
        }
        let min_eig = min_eigenvalue(&r);
        if min_eig <= 1e-12 {
            return Err(LqrError::NotPositiveDefinite { min_eig });
        }
        Ok(LqrWeights { q, r, s })
    }

    pub fn from_diagonals(
        q: &[f64; ERROR_DIM],
        r: &[f64; INPUT_DIM],
        s: &[f64; ERROR_DIM],
    ) -> Result<Self, LqrError> {
        Self::new(
            StateMat::from_diagonal(&SMatrix::from_column_slice(q)),
            WeightRMat::from_diagonal(&SMatrix::from_column_slice(r)),
            StateMat::from_diagonal(&SMatrix::from_column_slice(s)),
        )
    }
}

/// The offline product of the sweep: gains K_0..K_{N−1} and costs-to-go
/// P_0..P_N.
#[derive(Clone, Debug)]
pub struct GainSchedule {
    pub gains: Vec<GainMat>,
    pub costs_to_go: Vec<StateMat>,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Gain for tick `k`; holds the last gain when the trajectory outruns
    /// the schedule.
    pub fn gain(&self, k: usize) -> &GainMat {
        let last = self.gains.len() - 1;
        &self.gains[k.min(last)]
    }

    /// Smallest eigenvalue across all P_k, for positive-semidefiniteness
    /// checks in tests.
    pub fn min_cost_eigenvalue(&self) -> f64 {
        self.costs_to_go
            .iter()
            .map(min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Backward Riccati sweep over an arbitrary state/input dimension.
///
/// Returns (gains, costs-to-go). Dimension agreement is enforced by the
/// types.
pub fn riccati_sweep_generic<const NX: usize, const NU: usize>(
    steps: &[(SMatrix<f64, NX, NX>, SMatrix<f64, NX, NU>)],
    q: &SMatrix<f64, NX, NX>,
    r: &SMatrix<f64, NU, NU>,
    s: &SMatrix<f64, NX, NX>,
) -> Result<(Vec<SMatrix<f64, NU, NX>>, Vec<SMatrix<f64, NX, NX>>), LqrError> {
    assert!(!steps.is_empty(), "Riccati sweep needs at least one step");
    let n = steps.len();
    let mut costs = vec![SMatrix::<f64, NX, NX>::zeros(); n + 1];
    let mut gains = vec![SMatrix::<f64, NU, NX>::zeros(); n];
    costs[n] = *s;
    for k in (0..n).rev() {
        let (a, b) = &steps[k];
        let p_next = &costs[k + 1];
        let pb = p_next * b;
        let r_bar = r + b.transpose() * pb;
        let chol = r_bar
            .cholesky()
            .ok_or(LqrError::SingularEffort { step: k })?;
        let bt_p = pb.transpose();
        gains[k] = chol.solve(&(bt_p * a));
        let p = a.transpose() * (p_next - pb * chol.solve(&bt_p)) * a + q;
        costs[k] = (p + p.transpose()) * 0.5;
    }
    Ok((gains, costs))
}

/// Backward sweep over a discretized Jacobian sequence, producing the
/// offline gain schedule. P_N starts at S and each P_k is symmetrized.
pub fn riccati_sweep(
    jacobians: &[DiscreteJacobians],
    weights: &LqrWeights,
) -> Result<GainSchedule, LqrError> {
    let steps: Vec<_> = jacobians.iter().map(|j| (j.a, j.b)).collect();
    let (gains, costs_to_go) =
        riccati_sweep_generic(&steps, &weights.q, &weights.r, &weights.s)?;
    Ok(GainSchedule {
        gains,
        costs_to_go,
    })
}

/// Runs the sweep with constant Jacobians for `iterations` steps and
/// returns the stationarity residual ‖P_0 − P_1‖∞. A converged horizon has
/// residual below 1e-8; this is the self-consistency oracle for long-horizon
/// behavior, not a general-purpose algebraic Riccati solver.
pub fn infinite_horizon_check<const NX: usize, const NU: usize>(
    a: &SMatrix<f64, NX, NX>,
    b: &SMatrix<f64, NX, NU>,
    q: &SMatrix<f64, NX, NX>,
    r: &SMatrix<f64, NU, NU>,
    s: &SMatrix<f64, NX, NX>,
    iterations: usize,
) -> Result<f64, LqrError> {
    assert!(iterations >= 2);
    let mut p = *s;
    let mut prev = p;
    for step in 0..iterations {
        let pb = p * b;
        let r_bar = r + b.transpose() * pb;
        let chol = r_bar
            .cholesky()
            .ok_or(LqrError::SingularEffort { step })?;
        let next = a.transpose() * (p - pb * chol.solve(&pb.transpose())) * a + q;
        prev = p;
        p = (next + next.transpose()) * 0.5;
        if p.abs().max() > 1e12 {
            return Err(LqrError::Divergence { step });
        }
    }
    Ok((p - prev).abs().max())
}
