//! Matrix Lie group math for SO(3) and SE₂(3).
//!
//! SE₂(3) elements bundle a direction cosine matrix, an inertial velocity,
//! and an inertial position into one 5×5 matrix,
//!
//! ```text
//!     X = | C  v  r |
//!         | 0  1  0 |
//!         | 0  0  1 |
//! ```
//!
//! and tangent elements are 9-vectors ξ = (ξ^φ, ξ^v, ξ^r). The exponential
//! map couples the translational components through the SO(3) left Jacobian.
//!
//! # Conventions
//!
//! - Rotation vectors are axis-angle with magnitude = angle in radians.
//! - `so3_log` returns the principal branch, ‖φ‖ ≤ π. At an angle of exactly
//!   π the axis sign is ambiguous; the axis is extracted from the symmetric
//!   part of the DCM and the sign is chosen so that the first component of
//!   the axis larger than 1e-9 in magnitude is nonnegative.
//! - `se23_log` is strict and reports [`LieError::AngleAtPi`] on the
//!   boundary; [`se23_log_principal`] applies the convention above instead.
//!   In f64 the boundary is a discrete event: representable rotation angles
//!   jump from exactly π to roughly π − 1.5e-8.

use nalgebra::{Matrix3, Matrix5, SVector, Vector3};
use thiserror::Error;

/// Angle below which trig ratios are evaluated by 4th-order Taylor series.
const SMALL_ANGLE: f64 = 1e-6;

/// Width of the robust log branch next to the π boundary.
const NEAR_PI: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LieError {
    /// Input matrix is not a rotation within tolerance.
    #[error("matrix is not orthonormal with unit determinant (defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },
    /// The rotation angle is exactly π, where the logarithm branch is ambiguous.
    #[error("rotation angle is exactly pi; logarithm branch is ambiguous")]
    AngleAtPi,
    /// A 5×5 matrix fed to `se23_vee` does not have the Lie-algebra sparsity pattern.
    #[error("matrix does not have the se2(3) sparsity pattern (defect {defect:.3e})")]
    MalformedAlgebra { defect: f64 },
}

/// Cross-product (skew-symmetric) matrix of a 3-vector.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
fn unskew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A direction cosine matrix, i.e. an element of SO(3).
///
/// Constructed values stay orthonormal with determinant +1; use
/// [`Rotation::from_matrix`] to validate external data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix after checking orthonormality and determinant.
    ///
    /// The acceptance tolerance is 1e-6; derived rotations produced by this
    /// crate hold the invariants to better than 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, LieError> {
        let defect = orthonormality_defect(&m);
        if defect > 1e-6 {
            return Err(LieError::NotOrthonormal { defect });
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix that is already known to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Projects an arbitrary matrix onto SO(3) through the polar factor of
    /// its SVD, flipping one axis if needed to keep det = +1.
    pub fn project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd of 3x3 requested with u");
        let vt = svd.v_t.expect("svd of 3x3 requested with v_t");
        let mut c = u * vt;
        if c.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            c = u * vt;
        }
        Rotation(c)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    #[inline]
    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// Rotation angle in [0, π].
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// max(‖CᵀC − I‖_max, |det C − 1|), zero for an exact rotation.
pub fn orthonormality_defect(m: &Matrix3<f64>) -> f64 {
    let gram = (m.transpose() * m - Matrix3::identity()).abs().max();
    gram.max((m.determinant() - 1.0).abs())
}

/// An element of SE₂(3): attitude, inertial velocity, inertial position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE23 {
    pub rotation: Rotation,
    pub velocity: Vector3<f64>,
    pub position: Vector3<f64>,
}

impl PoseSE23 {
    pub fn identity() -> Self {
        PoseSE23 {
            rotation: Rotation::identity(),
            velocity: Vector3::zeros(),
            position: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, velocity: Vector3<f64>, position: Vector3<f64>) -> Self {
        PoseSE23 {
            rotation,
            velocity,
            position,
        }
    }

    /// Dense 5×5 group-element matrix.
    pub fn matrix(&self) -> Matrix5<f64> {
        let mut m = Matrix5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.velocity);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.position);
        m
    }

    /// Group composition, equal to the 5×5 matrix product.
    pub fn compose(&self, other: &PoseSE23) -> PoseSE23 {
        PoseSE23 {
            rotation: self.rotation * other.rotation,
            velocity: self.rotation * other.velocity + self.velocity,
            position: self.rotation * other.position + self.position,
        }
    }

    /// Group inverse, (Cᵀ, −Cᵀv, −Cᵀr).
    pub fn inverse(&self) -> PoseSE23 {
        let ct = self.rotation.transpose();
        PoseSE23 {
            rotation: ct,
            velocity: -(ct * self.velocity),
            position: -(ct * self.position),
        }
    }
}

/// An element of the Lie algebra se₂(3) in vector form, ξ = (ξ^φ, ξ^v, ξ^r).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentSE23 {
    /// Rotational component, rad.
    pub xi_phi: Vector3<f64>,
    /// Velocity component, m/s.
    pub xi_v: Vector3<f64>,
    /// Position component, m.
    pub xi_r: Vector3<f64>,
}

impl TangentSE23 {
    pub fn zero() -> Self {
        TangentSE23 {
            xi_phi: Vector3::zeros(),
            xi_v: Vector3::zeros(),
            xi_r: Vector3::zeros(),
        }
    }

    pub fn new(xi_phi: Vector3<f64>, xi_v: Vector3<f64>, xi_r: Vector3<f64>) -> Self {
        TangentSE23 { xi_phi, xi_v, xi_r }
    }

    pub fn from_vector(v: &SVector<f64, 9>) -> Self {
        TangentSE23 {
            xi_phi: v.fixed_rows::<3>(0).into(),
            xi_v: v.fixed_rows::<3>(3).into(),
            xi_r: v.fixed_rows::<3>(6).into(),
        }
    }

    pub fn as_vector(&self) -> SVector<f64, 9> {
        let mut v = SVector::<f64, 9>::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.xi_phi);
        v.fixed_rows_mut::<3>(3).copy_from(&self.xi_v);
        v.fixed_rows_mut::<3>(6).copy_from(&self.xi_r);
        v
    }

    pub fn scale(&self, factor: f64) -> Self {
        TangentSE23 {
            xi_phi: self.xi_phi * factor,
            xi_v: self.xi_v * factor,
            xi_r: self.xi_r * factor,
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.as_vector().abs().max()
    }
}

/// Exponential map from so(3) (Rodrigues formula, series fallback near zero).
pub fn so3_exp(phi: &Vector3<f64>) -> Rotation {
    let angle = phi.norm();
    let px = skew(phi);
    let (a, b) = if angle < SMALL_ANGLE {
        let t2 = angle * angle;
        // sin θ / θ and (1 − cos θ) / θ² by Taylor series
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
        )
    } else {
        (angle.sin() / angle, (1.0 - angle.cos()) / (angle * angle))
    };
    Rotation(Matrix3::identity() + px * a + px * px * b)
}

/// Principal-branch logarithmic map of SO(3), total on valid rotations.
///
/// At the π boundary, resolves the axis-sign ambiguity deterministically
/// (see the module docs).
pub fn so3_log(c: &Rotation) -> Vector3<f64> {
    let m = c.matrix();
    let cos_t = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_t.acos();
    // sin θ · a, exact skew part of the DCM
    let s = unskew(&((m - m.transpose()) * 0.5));

    if theta < 1e-4 {
        // θ/sin θ ≈ 1 + θ²/6 + 7θ⁴/360
        let t2 = theta * theta;
        return s * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0);
    }
    if cos_t < -1.0 + NEAR_PI {
        // Near π the skew part vanishes; recover the axis from the symmetric
        // part, where (M − cos θ·I)/(1 − cos θ) = aaᵀ is well conditioned.
        let sym = (m + m.transpose()) * 0.5;
        let aat = (sym - Matrix3::identity() * cos_t) / (1.0 - cos_t);
        let diag = aat.diagonal();
        let mut imax = 0;
        for i in 1..3 {
            if diag[i] > diag[imax] {
                imax = i;
            }
        }
        let col: Vector3<f64> = aat.column(imax).into();
        let mut axis = col / col.norm();
        if s.norm() > 1e-12 {
            // strictly below π: the skew part still fixes the sign
            if s.dot(&axis) < 0.0 {
                axis = -axis;
            }
        } else {
            // exactly at π: first component larger than 1e-9 must be nonnegative
            for i in 0..3 {
                if axis[i].abs() > 1e-9 {
                    if axis[i] < 0.0 {
                        axis = -axis;
                    }
                    break;
                }
            }
        }
        return axis * theta;
    }
    s * (theta / theta.sin())
}

/// SO(3) left Jacobian, coupling rotational and translational tangent parts.
///
/// Equivalent to (sin φ/φ)·I + (1 − sin φ/φ)·aaᵀ + ((1 − cos φ)/φ)·a^× with
/// a = φ/‖φ‖, written here on the unnormalized rotation vector.
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let angle = phi.norm();
    let px = skew(phi);
    let (b, c) = if angle < SMALL_ANGLE {
        let t2 = angle * angle;
        // (1 − cos θ)/θ² and (θ − sin θ)/θ³ by Taylor series
        (
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let t2 = angle * angle;
        (
            (1.0 - angle.cos()) / t2,
            (angle - angle.sin()) / (t2 * angle),
        )
    };
    Matrix3::identity() + px * b + px * px * c
}

/// Places a tangent vector into its 5×5 Lie-algebra matrix.
pub fn se23_wedge(xi: &TangentSE23) -> Matrix5<f64> {
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xi.xi_phi));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.xi_v);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&xi.xi_r);
    m
}

/// Inverse of [`se23_wedge`]; checks the sparsity pattern to 1e-12.
pub fn se23_vee(m: &Matrix5<f64>) -> Result<TangentSE23, LieError> {
    let mut defect: f64 = 0.0;
    for r in 3..5 {
        for c in 0..5 {
            defect = defect.max(m[(r, c)].abs());
        }
    }
    let top = m.fixed_view::<3, 3>(0, 0);
    defect = defect.max((top + top.transpose()).abs().max());
    if defect > 1e-12 {
        return Err(LieError::MalformedAlgebra { defect });
    }
    Ok(TangentSE23 {
        xi_phi: Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]),
        xi_v: Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]),
        xi_r: Vector3::new(m[(0, 4)], m[(1, 4)], m[(2, 4)]),
    })
}

/// Exponential map from se₂(3) to SE₂(3).
pub fn se23_exp(xi: &TangentSE23) -> PoseSE23 {
    let j = so3_left_jacobian(&xi.xi_phi);
    PoseSE23 {
        rotation: so3_exp(&xi.xi_phi),
        velocity: j * xi.xi_v,
        position: j * xi.xi_r,
    }
}

/// Logarithmic map from SE₂(3), strict at the π boundary.
pub fn se23_log(x: &PoseSE23) -> Result<TangentSE23, LieError> {
    let cos_t = ((x.rotation.matrix().trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    if cos_t <= -1.0 {
        return Err(LieError::AngleAtPi);
    }
    Ok(se23_log_principal(x))
}

/// Logarithmic map from SE₂(3), total; applies the deterministic axis
/// convention at the π boundary instead of failing.
pub fn se23_log_principal(x: &PoseSE23) -> TangentSE23 {
    let phi = so3_log(&x.rotation);
    let j = so3_left_jacobian(&phi);
    let lu = j.lu();
    let xi_v = lu
        .solve(&x.velocity)
        .expect("left Jacobian is nonsingular for angles at or below pi");
    let xi_r = lu
        .solve(&x.position)
        .expect("left Jacobian is nonsingular for angles at or below pi");
    TangentSE23 {
        xi_phi: phi,
        xi_v,
        xi_r,
    }
}
