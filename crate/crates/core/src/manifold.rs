//! Coordinate-free primitives on the two-sphere and the rotation group.
//!
//! Everything here is a pure function of its inputs. Rotations act on
//! inertial-frame vectors; the hat map is `hat(v) * y == v.cross(&y)`.

use std::ops::Deref;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Below this rotation angle the Rodrigues coefficients switch to series.
pub const SMALL_ANGLE: f64 = 1e-6;

const UNIT_TOL: f64 = 1e-12;
const SKEW_TOL: f64 = 1e-8;

pub fn e1() -> Vector3<f64> {
    Vector3::x()
}

pub fn e2() -> Vector3<f64> {
    Vector3::y()
}

pub fn e3() -> Vector3<f64> {
    Vector3::z()
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds 1e-8.
pub fn vee(s: &Matrix3<f64>) -> Result<Vector3<f64>> {
    if (s + s.transpose()).norm() >= SKEW_TOL {
        return Err(Error::NotSkew(format!("{s:?}")));
    }
    Ok(vee_unchecked(s))
}

/// Reads the three off-diagonal entries without checking skewness.
pub fn vee_unchecked(s: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)])
}

/// Rodrigues formula for `exp(hat(v))`.
pub fn exp_so3(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(v);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Principal logarithm, returned as a rotation vector with angle in [0, π].
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let axis_sin = 0.5
        * Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        );
    let sin = axis_sin.norm();
    let theta = sin.atan2(cos);
    if theta < SMALL_ANGLE {
        return axis_sin * (1.0 + theta * theta / 6.0);
    }
    if theta < std::f64::consts::PI - 1e-4 {
        return axis_sin * (theta / sin);
    }
    // Near π the skew part vanishes; recover the axis from the symmetric part.
    let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
    let (mut col, mut best) = (0, b[(0, 0)]);
    for i in 1..3 {
        if b[(i, i)] > best {
            best = b[(i, i)];
            col = i;
        }
    }
    let mut axis: Vector3<f64> = b.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&axis_sin) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// `(I - q qᵀ) v`, the component of `v` tangent to the sphere at `q`.
pub fn project_tangent(q: &UnitVector3, v: &Vector3<f64>) -> Vector3<f64> {
    v - q.as_vec() * q.dot(v)
}

/// Exact rotation of `q` by the constant angular velocity `omega` over `h`.
pub fn rotate_unit(q: &UnitVector3, omega: &TangentVector, h: f64) -> UnitVector3 {
    UnitVector3::renormalized(exp_so3(&(omega.vector * h)) * q.as_vec())
}

fn dexp_coefficients(sigma: &Vector3<f64>) -> f64 {
    let theta2 = sigma.norm_squared();
    if theta2 < 1e-8 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / theta2
    }
}

/// Inverse of the right-trivialised differential of `exp`: if
/// `R(t) = exp(hat(σ(t)))` and `Ṙ Rᵀ = hat(w)` then `σ̇ = dexp_inv(σ, w)`.
pub fn dexp_inv(sigma: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
    let sw = sigma.cross(w);
    w - sw * 0.5 + sigma.cross(&sw) * dexp_coefficients(sigma)
}

/// Re-orthonormalises a near-rotation by Gram–Schmidt on its columns.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let c1 = (r.column(1) - c0 * c0.dot(&r.column(1))).normalize();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

/// A point on the two-sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    /// Accepts `v` if its norm is 1 within 1e-12 (renormalising the rest away).
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidState(format!("|q| = {n} is not unit")));
        }
        Ok(Self(v / n))
    }

    /// Normalises any nonzero finite vector.
    pub fn normalize(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::InvalidState("cannot normalise a zero vector".into()));
        }
        Ok(Self(v / n))
    }

    pub(crate) fn renormalized(v: Vector3<f64>) -> Self {
        Self(v / v.norm())
    }

    pub fn e1() -> Self {
        Self(e1())
    }

    pub fn e2() -> Self {
        Self(e2())
    }

    pub fn e3() -> Self {
        Self(e3())
    }

    pub fn down() -> Self {
        Self::e3()
    }

    /// The direction `-e3`, straight up against gravity.
    pub fn up() -> Self {
        Self(-e3())
    }

    pub fn as_vec(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }
}

impl Deref for UnitVector3 {
    type Target = Vector3<f64>;

    fn deref(&self) -> &Vector3<f64> {
        &self.0
    }
}

impl std::ops::Neg for UnitVector3 {
    type Output = UnitVector3;

    fn neg(self) -> UnitVector3 {
        UnitVector3(-self.0)
    }
}

/// A vector in the tangent plane of `base`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    pub base: UnitVector3,
    pub vector: Vector3<f64>,
}

impl TangentVector {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(base: UnitVector3, vector: Vector3<f64>) -> Result<Self> {
        let dot = base.dot(&vector);
        if dot.abs() > Self::TOLERANCE * vector.norm().max(1.0) {
            return Err(Error::InvalidState(format!("q·ω = {dot:e} is not zero")));
        }
        Ok(Self { base, vector })
    }

    /// Projects an arbitrary vector onto the tangent plane of `base`.
    pub fn projected(base: UnitVector3, vector: &Vector3<f64>) -> Self {
        Self {
            base,
            vector: project_tangent(&base, vector),
        }
    }

    pub fn zero(base: UnitVector3) -> Self {
        Self {
            base,
            vector: Vector3::zeros(),
        }
    }
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let err = orthogonality_error(&m);
        let det = m.determinant();
        if !(err <= Self::TOLERANCE) || (det - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::InvalidState(format!(
                "not a rotation: |RᵀR - I| = {err:e}, det = {det}"
            )));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn exp(v: &Vector3<f64>) -> Self {
        Self(exp_so3(v))
    }

    pub(crate) fn from_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn as_matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn renormalized(&self) -> Self {
        Self(orthonormalize(&self.0))
    }
}

impl Deref for RotationMatrix {
    type Target = Matrix3<f64>;

    fn deref(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Frobenius norm of `RᵀR - I`.
pub fn orthogonality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}
