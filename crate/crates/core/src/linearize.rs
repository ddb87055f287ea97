//! Error-state linearization about the reference trajectory.
//!
//! The 12-dimensional error state is ordered (ξ^φ, ξ^v, ξ^r, ξ^i) and the
//! input error (δf^T, δω). Four variants are supported: the invariant
//! SE₂(3) error and the conventional error, each with and without the
//! rotor-drag terms. The drag-free SE₂(3) Jacobians contain no
//! reference-attitude terms at all, which is what makes that variant robust
//! to large attitude errors; the conventional ones depend on C_ar even with
//! drag removed.
//!
//! Discretization is zero-order hold through the block matrix exponential:
//! exp([[A, B], [0, 0]]·T) carries A_k in its top-left and B_k in its
//! top-right block, exactly for the frozen continuous-time pair.
//!
//! [`finite_difference_check`] validates the Jacobian algebra against the
//! exact nonlinear error propagation and is used throughout the test suite.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::dynamics::QuadParams;
use crate::flatness::ReferenceSample;
use crate::lie::{se23_exp, se23_log_principal, skew, so3_exp, so3_log, PoseSE23, Rotation, TangentSE23};

/// Dimension of the augmented error state (ξ^φ, ξ^v, ξ^r, ξ^i).
pub const ERROR_DIM: usize = 12;
/// Dimension of the input error (δf^T, δω).
pub const INPUT_DIM: usize = 4;

pub type StateMat = SMatrix<f64, ERROR_DIM, ERROR_DIM>;
pub type InputMat = SMatrix<f64, ERROR_DIM, INPUT_DIM>;
pub type ErrorVec = SVector<f64, ERROR_DIM>;
pub type InputVec = SVector<f64, INPUT_DIM>;

/// Error convention × drag handling used for the Jacobians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Se23WithDrag,
    Se23DragFree,
    ConventionalWithDrag,
    ConventionalDragFree,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Se23WithDrag,
        Variant::Se23DragFree,
        Variant::ConventionalWithDrag,
        Variant::ConventionalDragFree,
    ];

    pub fn is_se23(self) -> bool {
        matches!(self, Variant::Se23WithDrag | Variant::Se23DragFree)
    }

    pub fn includes_drag(self) -> bool {
        matches!(self, Variant::Se23WithDrag | Variant::ConventionalWithDrag)
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Se23WithDrag => "se23-drag",
            Variant::Se23DragFree => "se23-drag-free",
            Variant::ConventionalWithDrag => "conventional-drag",
            Variant::ConventionalDragFree => "conventional-drag-free",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "se23-drag" => Ok(Variant::Se23WithDrag),
            "se23-drag-free" => Ok(Variant::Se23DragFree),
            "conventional-drag" => Ok(Variant::ConventionalWithDrag),
            "conventional-drag-free" => Ok(Variant::ConventionalDragFree),
            other => Err(format!(
                "unknown variant `{other}` (expected se23-drag, se23-drag-free, \
                 conventional-drag, or conventional-drag-free)"
            )),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Continuous-time error-state Jacobian pair δξ̇ = A·δξ + B·δu.
#[derive(Clone, Copy, Debug)]
pub struct ErrorJacobians {
    pub a: StateMat,
    pub b: InputMat,
    pub variant: Variant,
}

/// Zero-order-hold discretization of an [`ErrorJacobians`] pair.
#[derive(Clone, Copy, Debug)]
pub struct DiscreteJacobians {
    pub a: StateMat,
    pub b: InputMat,
    pub dt: f64,
}

fn set_block3(m: &mut StateMat, row: usize, col: usize, block: &Matrix3<f64>) {
    m.fixed_view_mut::<3, 3>(row, col).copy_from(block);
}

/// Builds the continuous-time A and B for the requested variant, evaluated
/// at one reference sample with the integrator rows included (gain c₁).
pub fn continuous_jacobians(
    reference: &ReferenceSample,
    params: &QuadParams,
    c1: f64,
    variant: Variant,
) -> ErrorJacobians {
    let m = params.mass;
    let eye = Matrix3::identity();
    let omega_cross = skew(&reference.omega_r);
    let thrust_cross = skew(&Vector3::new(0.0, 0.0, reference.thrust_r));

    let mut a = StateMat::zeros();
    let mut b = InputMat::zeros();

    // attitude row: δξ̇^φ = δω
    b.fixed_view_mut::<3, 3>(0, 1).copy_from(&eye);

    match variant {
        Variant::Se23WithDrag => {
            let d = params.drag_d;
            let v_ref_body = reference.c_ar.transpose() * reference.v_r;
            let a21 = (skew(&(d * v_ref_body)) - d * skew(&v_ref_body) - thrust_cross) / m;
            set_block3(&mut a, 3, 0, &a21);
            set_block3(&mut a, 3, 3, &(-omega_cross - d / m));
            set_block3(&mut a, 6, 3, &eye);
            set_block3(&mut a, 6, 6, &(-omega_cross));
            b.fixed_view_mut::<3, 1>(3, 0)
                .copy_from(&Vector3::new(0.0, 0.0, 1.0 / m));
        }
        Variant::Se23DragFree => {
            set_block3(&mut a, 3, 0, &(-thrust_cross / m));
            set_block3(&mut a, 3, 3, &(-omega_cross));
            set_block3(&mut a, 6, 3, &eye);
            set_block3(&mut a, 6, 6, &(-omega_cross));
            b.fixed_view_mut::<3, 1>(3, 0)
                .copy_from(&Vector3::new(0.0, 0.0, 1.0 / m));
        }
        Variant::ConventionalWithDrag => {
            let d = params.drag_d;
            let c_ar = reference.c_ar.matrix();
            let v_ref_body = reference.c_ar.transpose() * reference.v_r;
            let a21 =
                (c_ar * skew(&(d * v_ref_body)) - c_ar * d * skew(&v_ref_body) - c_ar * thrust_cross)
                    / m;
            set_block3(&mut a, 3, 0, &a21);
            set_block3(&mut a, 3, 3, &(-(c_ar * d * c_ar.transpose()) / m));
            set_block3(&mut a, 6, 3, &eye);
            b.fixed_view_mut::<3, 1>(3, 0)
                .copy_from(&(c_ar * Vector3::new(0.0, 0.0, 1.0 / m)));
        }
        Variant::ConventionalDragFree => {
            let c_ar = reference.c_ar.matrix();
            set_block3(&mut a, 3, 0, &(-(c_ar * thrust_cross) / m));
            set_block3(&mut a, 6, 3, &eye);
            b.fixed_view_mut::<3, 1>(3, 0)
                .copy_from(&(c_ar * Vector3::new(0.0, 0.0, 1.0 / m)));
        }
    }

    // integrator row, identical for all variants: ξ̇^i = δv + c₁·δr
    set_block3(&mut a, 9, 3, &eye);
    set_block3(&mut a, 9, 6, &(eye * c1));

    ErrorJacobians { a, b, variant }
}

/// Zero-order-hold discretization through the block matrix exponential.
pub fn discretize_zoh(jacobians: &ErrorJacobians, dt: f64) -> DiscreteJacobians {
    debug_assert!(dt > 0.0);
    let mut block = SMatrix::<f64, 16, 16>::zeros();
    block
        .fixed_view_mut::<ERROR_DIM, ERROR_DIM>(0, 0)
        .copy_from(&jacobians.a);
    block
        .fixed_view_mut::<ERROR_DIM, INPUT_DIM>(0, ERROR_DIM)
        .copy_from(&jacobians.b);
    let exp = (block * dt).exp();
    DiscreteJacobians {
        a: exp.fixed_view::<ERROR_DIM, ERROR_DIM>(0, 0).into_owned(),
        b: exp
            .fixed_view::<ERROR_DIM, INPUT_DIM>(0, ERROR_DIM)
            .into_owned(),
        dt,
    }
}

// ---------------------------------------------------------------------------
// Finite-difference validation of the Jacobian algebra.
//
// The exact nonlinear error dynamics are propagated over a short window
// around t = 0 and centrally differenced; the result is compared with
// A·δξ + B·δu. The propagation never touches the Jacobian formulas: it
// builds the perturbed plant state from the error definition, integrates
// plant and reference through the equations of motion with frozen inputs,
// and re-extracts the error.
// ---------------------------------------------------------------------------

/// Central-difference half-width used by [`finite_difference_check`].
const FD_WINDOW: f64 = 1e-3;

#[derive(Clone, Copy)]
struct FlatStates {
    c: Matrix3<f64>,
    v: Vector3<f64>,
    r: Vector3<f64>,
}

/// ODE right-hand side common to the plant and the reference world: DCM
/// kinematics plus the translational dynamics with constant thrust along
/// the body 3-axis.
fn translational_rhs(s: &FlatStates, omega: &Vector3<f64>, thrust: f64, p: &QuadParams) -> FlatStates {
    FlatStates {
        c: s.c * skew(omega),
        v: p.gravity_vec() + s.c * Vector3::new(0.0, 0.0, thrust / p.mass)
            - s.c * p.drag_d * s.c.transpose() * s.v / p.mass,
        r: s.v,
    }
}

fn rk4(s: &FlatStates, omega: &Vector3<f64>, thrust: f64, p: &QuadParams, dt: f64) -> FlatStates {
    let add = |a: &FlatStates, b: &FlatStates, w: f64| FlatStates {
        c: a.c + b.c * w,
        v: a.v + b.v * w,
        r: a.r + b.r * w,
    };
    let k1 = translational_rhs(s, omega, thrust, p);
    let k2 = translational_rhs(&add(s, &k1, dt / 2.0), omega, thrust, p);
    let k3 = translational_rhs(&add(s, &k2, dt / 2.0), omega, thrust, p);
    let k4 = translational_rhs(&add(s, &k3, dt), omega, thrust, p);
    FlatStates {
        c: s.c + (k1.c + k2.c * 2.0 + k3.c * 2.0 + k4.c) * (dt / 6.0),
        v: s.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * (dt / 6.0),
        r: s.r + (k1.r + k2.r * 2.0 + k3.r * 2.0 + k4.r) * (dt / 6.0),
    }
}

/// Extracts the 12-dimensional error (9 error coordinates plus the exact
/// integrator integrand slot left at zero) between plant and reference.
fn extract_error(plant: &FlatStates, reference: &FlatStates, se23: bool) -> SVector<f64, 9> {
    let c_plant = Rotation::from_matrix_unchecked(plant.c);
    let c_ref = Rotation::from_matrix_unchecked(reference.c);
    if se23 {
        let x = PoseSE23::new(c_plant, plant.v, plant.r);
        let xr = PoseSE23::new(c_ref, reference.v, reference.r);
        se23_log_principal(&x.inverse().compose(&xr)).as_vector()
    } else {
        let mut e = SVector::<f64, 9>::zeros();
        e.fixed_rows_mut::<3>(0)
            .copy_from(&so3_log(&(c_plant.transpose() * c_ref)));
        e.fixed_rows_mut::<3>(3).copy_from(&(reference.v - plant.v));
        e.fixed_rows_mut::<3>(6).copy_from(&(reference.r - plant.r));
        e
    }
}

/// Group-block (δv, δr) error pair feeding the integrator integrand.
fn integrand_blocks(
    plant: &FlatStates,
    reference: &FlatStates,
    se23: bool,
) -> (Vector3<f64>, Vector3<f64>) {
    if se23 {
        let ct = plant.c.transpose();
        (ct * (reference.v - plant.v), ct * (reference.r - plant.r))
    } else {
        (reference.v - plant.v, reference.r - plant.r)
    }
}

/// Exact time derivative of the error state at t = 0 for a given error and
/// input perturbation, by central differencing the nonlinear propagation.
fn exact_error_derivative(
    reference: &ReferenceSample,
    params: &QuadParams,
    c1: f64,
    se23: bool,
    delta_xi: &SVector<f64, 9>,
    delta_u: &InputVec,
) -> ErrorVec {
    let ref0 = FlatStates {
        c: *reference.c_ar.matrix(),
        v: reference.v_r,
        r: reference.r_r,
    };

    // Plant state realizing the requested error.
    let delta_phi: Vector3<f64> = delta_xi.fixed_rows::<3>(0).into();
    let plant0 = if se23 {
        let delta = se23_exp(&TangentSE23::from_vector(delta_xi));
        let x = PoseSE23::new(
            Rotation::from_matrix_unchecked(ref0.c),
            ref0.v,
            ref0.r,
        )
        .compose(&delta.inverse());
        FlatStates {
            c: *x.rotation.matrix(),
            v: x.velocity,
            r: x.position,
        }
    } else {
        FlatStates {
            c: ref0.c * so3_exp(&-delta_phi).matrix(),
            v: ref0.v - Vector3::from(delta_xi.fixed_rows::<3>(3)),
            r: ref0.r - Vector3::from(delta_xi.fixed_rows::<3>(6)),
        }
    };

    // Inputs realizing the requested input error: δf = f^Tr − f and
    // δω = δC·ω_r − ω.
    let delta_c = so3_exp(&delta_phi);
    let thrust = reference.thrust_r - delta_u[0];
    let delta_omega: Vector3<f64> = delta_u.fixed_rows::<3>(1).into();
    let omega_b = delta_c * reference.omega_r - delta_omega;

    let h = FD_WINDOW;
    let substeps = 4;
    let step = |sign: f64, s: &FlatStates, omega: &Vector3<f64>, thrust: f64| {
        let mut s = *s;
        for _ in 0..substeps {
            s = rk4(&s, omega, thrust, params, sign * h / substeps as f64);
        }
        s
    };
    let plant_fwd = step(1.0, &plant0, &omega_b, thrust);
    let plant_bwd = step(-1.0, &plant0, &omega_b, thrust);
    let ref_fwd = step(1.0, &ref0, &reference.omega_r, reference.thrust_r);
    let ref_bwd = step(-1.0, &ref0, &reference.omega_r, reference.thrust_r);

    let e_fwd = extract_error(&plant_fwd, &ref_fwd, se23);
    let e_bwd = extract_error(&plant_bwd, &ref_bwd, se23);

    let mut d = ErrorVec::zeros();
    d.fixed_rows_mut::<9>(0)
        .copy_from(&((e_fwd - e_bwd) / (2.0 * h)));
    // the integrator derivative is its integrand, available exactly
    let (dv, dr) = integrand_blocks(&plant0, &ref0, se23);
    d.fixed_rows_mut::<3>(9).copy_from(&(dv + dr * c1));
    d
}

/// Compares A·δξ + B·δu against the exact nonlinear error derivative over a
/// panel of probe directions of magnitude `eps` and returns the worst
/// deviation normalized by eps and the magnitude of the Jacobian pair.
///
/// For drag-free variants the nonlinear propagation runs the drag-free
/// plant, which is the model those Jacobians linearize.
pub fn finite_difference_check(
    reference: &ReferenceSample,
    params: &QuadParams,
    c1: f64,
    variant: Variant,
    eps: f64,
) -> f64 {
    debug_assert!(eps > 1e-8 && eps < 1e-4);
    let plant_params = if variant.includes_drag() {
        *params
    } else {
        params.drag_free()
    };
    let jac = continuous_jacobians(reference, &plant_params, c1, variant);
    let scale = jac.a.abs().max().max(jac.b.abs().max()).max(1.0);

    let mut probes: Vec<(SVector<f64, 9>, InputVec)> = Vec::new();
    probes.push((SVector::zeros(), InputVec::zeros()));
    for i in 0..9 {
        let mut xi = SVector::<f64, 9>::zeros();
        xi[i] = eps;
        probes.push((xi, InputVec::zeros()));
    }
    for j in 0..INPUT_DIM {
        let mut u = InputVec::zeros();
        u[j] = eps;
        probes.push((SVector::zeros(), u));
    }
    // mixed directions
    probes.push((
        SVector::<f64, 9>::repeat(eps / 3.0),
        InputVec::repeat(-eps / 2.0),
    ));
    probes.push((
        SVector::<f64, 9>::from_fn(|i, _| if i % 2 == 0 { eps } else { -eps } * 0.5),
        InputVec::from_fn(|j, _| if j == 0 { eps } else { eps / 4.0 }),
    ));

    let mut worst: f64 = 0.0;
    for (xi9, du) in &probes {
        let exact = exact_error_derivative(reference, &plant_params, c1, variant.is_se23(), xi9, du);
        let mut xi12 = ErrorVec::zeros();
        xi12.fixed_rows_mut::<9>(0).copy_from(xi9);
        let predicted = jac.a * xi12 + jac.b * du;
        worst = worst.max((exact - predicted).abs().max() / (eps * scale));
    }
    worst
}
