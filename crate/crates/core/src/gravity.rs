//! Rotations and transfer of the gravity direction into the camera frame.
//!
//! With an IMU rigidly attached to the camera, gravity measured in the body frame is
//! rotated by the body-to-camera extrinsic `R_cb`. When acceleration is available in
//! both the body and a spatial (world, z-up) frame, the spatial-to-body rotation `R_bs`
//! is estimated from those pairs and the camera-frame gravity is `R_cb R_bs [0, 0, 9.8]`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

/// Gravity in the spatial frame, m/s^2.
pub const SPATIAL_GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, 9.8);

const ROTATION_TOLERANCE: f64 = 1e-9;

/// Proper rotation stored as a 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates orthogonality and `det = +1` to within 1e-9.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        Self::with_tolerance(m, ROTATION_TOLERANCE)
    }

    pub fn with_tolerance(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("rotation has non-finite entries"));
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if ortho > tol || (det - 1.0).abs() > tol {
            return Err(Error::invalid(format!(
                "matrix is not a rotation (|R^T R - I| = {ortho:.3e}, det = {det})"
            )));
        }
        Ok(Rotation(m))
    }

    pub fn from_row_slice(values: &[f64]) -> Result<Self> {
        if values.len() != 9 {
            return Err(Error::invalid(format!("rotation needs 9 values, got {}", values.len())));
        }
        Self::new(Matrix3::from_row_slice(values))
    }

    /// Roll-pitch-yaw in radians, ZYX convention: `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Rotation(*Rotation3::from_euler_angles(roll, pitch, yaw).matrix())
    }

    /// Right-handed rotation by `angle` radians about `axis`.
    pub fn about_axis(axis: &Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("rotation axis must be non-zero"));
        }
        let axis = Unit::new_normalize(*axis);
        Ok(Rotation(*Rotation3::from_axis_angle(&axis, angle).matrix()))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, rhs: &Rotation) -> Self {
        Rotation(self.0 * rhs.0)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic angle to `other` in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let rel = self.0.transpose() * other.0;
        let skew = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        );
        // atan2 keeps full precision for small angles, where acos of the trace does not.
        (skew.norm() / 2.0).atan2((rel.trace() - 1.0) / 2.0)
    }

    pub fn to_row_vec(&self) -> Vec<f64> {
        let m = &self.0;
        (0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])).collect()
    }
}

/// Unit gravity direction in the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GravityVector(Vector3<f64>);

impl GravityVector {
    /// Normalizes `v`; fails on zero or non-finite input.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid(format!("gravity vector must be non-zero, got {v:?}")));
        }
        Ok(GravityVector(v / n))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// `normalize(R_cb * gamma_b)`.
pub fn gravity_from_body(gamma_body: &Vector3<f64>, r_cb: &Rotation) -> Result<GravityVector> {
    if !(gamma_body.norm() > 0.0) {
        return Err(Error::invalid("body-frame gravity has zero norm"));
    }
    GravityVector::new(r_cb.apply(gamma_body))
}

/// `normalize(R_cb * R_bs * [0, 0, 9.8])`.
pub fn gravity_from_spatial(r_cb: &Rotation, r_bs: &Rotation) -> GravityVector {
    let v = r_cb.apply(&r_bs.apply(&SPATIAL_GRAVITY));
    // A rotation preserves the norm of a non-zero vector.
    GravityVector::new(v).expect("rotated gravity is non-zero")
}

/// One simultaneous acceleration reading in the body and spatial frames (m/s^2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccelPair {
    pub body: Vector3<f64>,
    pub spatial: Vector3<f64>,
}

/// How `R_bs` is recovered from acceleration pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RbsSolver {
    /// Least squares over all pairs (Wahba's problem); needs two independent directions.
    #[default]
    LeastSquares,
    /// Minimal rotation taking the first spatial vector onto its body counterpart.
    /// The rotation about that vector is unobservable, which leaves the gravity
    /// direction unaffected when the pair is gravity-dominated.
    SinglePair,
}

/// Rotation minimizing `sum |body_i - R spatial_i|^2`.
pub fn estimate_r_bs(pairs: &[AccelPair]) -> Result<Rotation> {
    estimate_r_bs_with(pairs, RbsSolver::LeastSquares)
}

pub fn estimate_r_bs_with(pairs: &[AccelPair], solver: RbsSolver) -> Result<Rotation> {
    if pairs.is_empty() {
        return Err(Error::invalid("no acceleration pairs"));
    }
    if pairs
        .iter()
        .any(|p| p.body.iter().chain(p.spatial.iter()).any(|v| !v.is_finite()))
    {
        return Err(Error::invalid("acceleration pairs contain non-finite values"));
    }
    match solver {
        RbsSolver::LeastSquares => wahba(pairs),
        RbsSolver::SinglePair => minimal_alignment(&pairs[0].spatial, &pairs[0].body),
    }
}

/// Last `window` pairs (all of them when `window` is 0 or larger than the record).
pub fn window_tail(pairs: &[AccelPair], window: usize) -> &[AccelPair] {
    if window == 0 || window >= pairs.len() {
        pairs
    } else {
        &pairs[pairs.len() - window..]
    }
}

fn wahba(pairs: &[AccelPair]) -> Result<Rotation> {
    let mut b = Matrix3::zeros();
    for p in pairs {
        b += p.body * p.spatial.transpose();
    }
    let svd = b.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-10 * sv[0] {
        return Err(Error::Degenerate(
            "acceleration pairs span fewer than two independent directions; \
             use the single-pair solver"
                .into(),
        ));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let d = (u.determinant() * v_t.determinant()).signum();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    Rotation::with_tolerance(r, 1e-6)
}

fn minimal_alignment(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<Rotation> {
    let (nf, nt) = (from.norm(), to.norm());
    if !(nf > 0.0 && nt > 0.0) {
        return Err(Error::invalid("single-pair alignment needs non-zero vectors"));
    }
    let a = from / nf;
    let b = to / nt;
    match Rotation3::rotation_between(&a, &b) {
        Some(r) => Ok(Rotation(*r.matrix())),
        None => {
            // Antiparallel: half turn about any axis orthogonal to `a`.
            let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let axis = a.cross(&helper);
            Rotation::about_axis(&axis, std::f64::consts::PI)
        }
    }
}
