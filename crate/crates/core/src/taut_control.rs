//! Control of a single taut link: exact tension through the component of the
//! thrust along the link, geometric direction tracking through the normal
//! component, and the attitude loop that realizes the thrust vector with
//! `(f, M)`. The same law drives a flexible chain by treating the straight
//! line from the pivot to the quadrotor as the link.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Diagnostics;
use crate::manifold::{e3, hat, log_so3, vee_unchecked, RotationMatrix, UnitVector3};
use crate::model::{BodyState, ChainState, ControlInput, SystemParams};

/// Smallest thrust for which the commanded body axis is defined, N.
pub const THRUST_MIN: f64 = 1e-6;
const FRAME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TautGains {
    pub k_q: f64,
    pub k_omega: f64,
    pub k_r: f64,
    pub k_body_rate: f64,
    pub epsilon: f64,
    /// Cross term of the Lyapunov function; only used by the certificate.
    pub c_q: f64,
}

impl Default for TautGains {
    fn default() -> Self {
        Self {
            k_q: 9.0,
            k_omega: 6.0,
            k_r: 8.0,
            k_body_rate: 2.0,
            epsilon: 0.1,
            c_q: 0.5,
        }
    }
}

impl TautGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_q", self.k_q),
            ("k_omega", self.k_omega),
            ("k_r", self.k_r),
            ("k_body_rate", self.k_body_rate),
            ("epsilon", self.epsilon),
            ("c_q", self.c_q),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if self.epsilon >= 1.0 {
            return Err(Error::param("epsilon", "must be below 1"));
        }
        Ok(())
    }

    pub fn attitude(&self) -> AttitudeGains {
        AttitudeGains {
            k_r: self.k_r,
            k_body_rate: self.k_body_rate,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeGains {
    pub k_r: f64,
    pub k_body_rate: f64,
    pub epsilon: f64,
}

/// Desired link direction with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionSample {
    pub q_d: UnitVector3,
    pub omega_d: Vector3<f64>,
    pub omega_d_dot: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionReference {
    /// `θ = (π/6) sin(0.2πt)`, `φ = (π/18) sin(0.4πt) + π/2`,
    /// `q_d = [cθ cφ, sθ, -cθ sφ]`; starts straight up at `-e3`.
    FigureEight,
    Fixed {
        direction: [f64; 3],
    },
}

impl DirectionReference {
    pub fn sample(&self, t: f64) -> Result<DirectionSample> {
        match self {
            DirectionReference::Fixed { direction } => Ok(DirectionSample {
                q_d: UnitVector3::normalize(Vector3::from(*direction))?,
                omega_d: Vector3::zeros(),
                omega_d_dot: Vector3::zeros(),
            }),
            DirectionReference::FigureEight => Ok(figure_eight(t)),
        }
    }
}

pub fn figure_eight(t: f64) -> DirectionSample {
    let (a, wa) = (PI / 6.0, 0.2 * PI);
    let (b, wb) = (PI / 18.0, 0.4 * PI);
    let th = a * (wa * t).sin();
    let th_d = a * wa * (wa * t).cos();
    let th_dd = -a * wa * wa * (wa * t).sin();
    let ph = b * (wb * t).sin() + PI / 2.0;
    let ph_d = b * wb * (wb * t).cos();
    let ph_dd = -b * wb * wb * (wb * t).sin();
    let (st, ct) = th.sin_cos();
    let (sp, cp) = ph.sin_cos();

    let q = Vector3::new(ct * cp, st, -ct * sp);
    let q_th = Vector3::new(-st * cp, ct, st * sp);
    let q_ph = Vector3::new(-ct * sp, 0.0, -ct * cp);
    let q_thph = Vector3::new(st * sp, 0.0, st * cp);
    let q_phph = Vector3::new(-ct * cp, 0.0, ct * sp);

    let q_dot = q_th * th_d + q_ph * ph_d;
    let q_ddot = -q * th_d * th_d
        + q_thph * (2.0 * th_d * ph_d)
        + q_phph * (ph_d * ph_d)
        + q_th * th_dd
        + q_ph * ph_dd;
    DirectionSample {
        q_d: UnitVector3::renormalized(q),
        omega_d: q.cross(&q_dot),
        omega_d_dot: q.cross(&q_ddot),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TautReference {
    pub direction: DirectionReference,
    pub tension: f64,
    pub heading: UnitVector3,
}

impl TautReference {
    pub fn new(direction: DirectionReference, tension: f64) -> Self {
        Self {
            direction,
            tension,
            heading: UnitVector3::e1(),
        }
    }
}

/// `e_q = q_d × q`, `e_ω = ω + q̂² ω_d`.
pub fn direction_errors(
    q: &UnitVector3,
    omega: &Vector3<f64>,
    q_d: &UnitVector3,
    omega_d: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let qh = hat(q);
    (q_d.cross(q), omega + qh * qh * omega_d)
}

/// Constants of the single-link equation `ω̇ = α q̂ e3 + β q̂ u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleLink {
    pub quad_mass: f64,
    pub link_mass: f64,
    pub length: f64,
    pub gravity: f64,
}

impl SingleLink {
    pub fn from_params(params: &SystemParams) -> Result<Self> {
        if params.links() != 1 {
            return Err(Error::param("link_masses", "single-link law needs n = 1"));
        }
        Ok(Self::equivalent(params))
    }

    /// The whole tether lumped into one link of the same mass and length.
    pub fn equivalent(params: &SystemParams) -> Self {
        Self {
            quad_mass: params.quad_mass,
            link_mass: params.tether_mass(),
            length: params.tether_length(),
            gravity: params.gravity,
        }
    }

    pub fn alpha(&self) -> f64 {
        (self.quad_mass + self.link_mass / 2.0) * self.gravity
            / ((self.quad_mass + self.link_mass / 3.0) * self.length)
    }

    pub fn beta(&self) -> f64 {
        1.0 / ((self.quad_mass + self.link_mass / 3.0) * self.length)
    }
}

/// Thrust component along `q` that makes the tension equal `T_d`.
pub fn u_parallel(
    link: &SingleLink,
    q: &UnitVector3,
    omega: &Vector3<f64>,
    t_d: f64,
) -> Vector3<f64> {
    let m = link.quad_mass;
    q.as_vec() * (t_d - m * link.gravity * q.dot(&e3()) - m * link.length * omega.norm_squared())
}

/// Thrust component normal to `q` that imposes
/// `ω̇ = -k_q e_q - k_ω e_ω - (q·ω_d) q̇ - q̂² ω̇_d`.
pub fn u_perp(
    link: &SingleLink,
    q: &UnitVector3,
    omega: &Vector3<f64>,
    reference: &DirectionSample,
    k_q: f64,
    k_omega: f64,
) -> Vector3<f64> {
    let qh = hat(q);
    let (e_q, e_w) = direction_errors(q, omega, &reference.q_d, &reference.omega_d);
    let q_dot = omega.cross(q);
    let inner = -e_q * k_q
        - e_w * k_omega
        - q_dot * q.dot(&reference.omega_d)
        - qh * qh * reference.omega_d_dot
        - qh * e3() * link.alpha();
    -(qh * inner) / link.beta()
}

pub fn u_total(
    link: &SingleLink,
    q: &UnitVector3,
    omega: &Vector3<f64>,
    reference: &DirectionSample,
    t_d: f64,
    gains: &TautGains,
) -> Vector3<f64> {
    u_parallel(link, q, omega, t_d) + u_perp(link, q, omega, reference, gains.k_q, gains.k_omega)
}

/// Commanded attitude whose third axis opposes `u`.
pub fn attitude_frame(u: &Vector3<f64>, heading: &UnitVector3) -> Result<RotationMatrix> {
    let norm = u.norm();
    if !(norm > THRUST_MIN) {
        return Err(Error::ThrustSingularity { magnitude: norm });
    }
    let b3 = -u / norm;
    let b3h = hat(&b3);
    let b2 = b3h * heading.as_vec();
    let s = b2.norm();
    if s < FRAME_TOLERANCE {
        return Err(Error::FrameDegenerate);
    }
    let b1 = -(b3h * b2) / s;
    Ok(RotationMatrix::from_unchecked(Matrix3::from_columns(&[
        b1,
        b2 / s,
        b3,
    ])))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeSetpoint {
    pub r_c: RotationMatrix,
    pub omega_c: Vector3<f64>,
    pub omega_c_dot: Vector3<f64>,
}

impl AttitudeSetpoint {
    pub fn fixed(r_c: RotationMatrix) -> Self {
        Self {
            r_c,
            omega_c: Vector3::zeros(),
            omega_c_dot: Vector3::zeros(),
        }
    }

    /// Body rates of `R_c` by central differences of the logarithm over `±h`.
    pub fn from_samples(
        before: &RotationMatrix,
        r_c: RotationMatrix,
        after: &RotationMatrix,
        h: f64,
    ) -> Self {
        let fwd = log_so3(&(r_c.transpose() * after.as_matrix()));
        let bwd = log_so3(&(r_c.transpose() * before.as_matrix()));
        Self {
            r_c,
            omega_c: (fwd - bwd) / (2.0 * h),
            omega_c_dot: (fwd + bwd) / (h * h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeErrors {
    pub e_r: Vector3<f64>,
    pub e_body_rate: Vector3<f64>,
}

pub fn attitude_errors(body: &BodyState, setpoint: &AttitudeSetpoint) -> AttitudeErrors {
    let r = body.attitude.as_matrix();
    let rc = setpoint.r_c.as_matrix();
    AttitudeErrors {
        e_r: vee_unchecked(&(rc.transpose() * r - r.transpose() * rc)) * 0.5,
        e_body_rate: body.body_rate - r.transpose() * rc * setpoint.omega_c,
    }
}

/// `f = -u·R e3` and the geometric moment tracking `R_c`.
pub fn thrust_moment(
    inertia: &Matrix3<f64>,
    body: &BodyState,
    u: &Vector3<f64>,
    setpoint: &AttitudeSetpoint,
    gains: &AttitudeGains,
) -> Result<(ControlInput, AttitudeErrors)> {
    let r = body.attitude.as_matrix();
    let rc = setpoint.r_c.as_matrix();
    let err = attitude_errors(body, setpoint);
    let w = body.body_rate;
    let eps = gains.epsilon;
    let rt_rc = r.transpose() * rc;
    let moment = -err.e_r * (gains.k_r / (eps * eps)) - err.e_body_rate * (gains.k_body_rate / eps)
        + w.cross(&(inertia * w))
        - inertia * (hat(&w) * rt_rc * setpoint.omega_c - rt_rc * setpoint.omega_c_dot);
    let thrust = -u.dot(&(r * e3()));
    Ok((ControlInput::new(thrust, moment)?, err))
}

/// Straight-line approximation of a chain: direction from the pivot to the
/// quadrotor and its angular velocity.
pub fn taut_direction(lengths: &[f64], chain: &ChainState) -> Result<(UnitVector3, Vector3<f64>)> {
    let mut x = Vector3::zeros();
    let mut v = Vector3::zeros();
    for (i, l) in lengths.iter().enumerate() {
        x += chain.directions[i].as_vec() * *l;
        v += chain.direction_rate(i) * *l;
    }
    let r = x.norm();
    if r < 1e-9 {
        return Err(Error::UndefinedDirection);
    }
    let q = UnitVector3::renormalized(x / r);
    let q_dot = (v - q.as_vec() * q.dot(&v)) / r;
    Ok((q, q.cross(&q_dot)))
}

/// Thrust vector and tracking quantities from a thrust law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawOutput {
    pub u: Vector3<f64>,
    pub diagnostics: Diagnostics,
}

/// A feedback law producing the desired thrust vector from the chain state.
pub trait ThrustLaw: Send + Sync {
    fn thrust(&self, t: f64, chain: &ChainState) -> Result<LawOutput>;

    /// The sub-law in force at time `t` when the law switches between
    /// phases; `None` when it does not.
    fn phase_at(&self, _t: f64) -> Option<&dyn ThrustLaw> {
        None
    }

    fn heading(&self, _t: f64) -> UnitVector3 {
        UnitVector3::e1()
    }
}

/// The single-link controller, applied either to a one-link model or to the
/// pivot-to-quadrotor line of a flexible chain.
#[derive(Debug, Clone)]
pub struct TautLaw {
    pub link: SingleLink,
    pub reference: TautReference,
    pub gains: TautGains,
    /// `None` for a genuine single link; link lengths for the taut approximation.
    pub approx_lengths: Option<Vec<f64>>,
}

impl TautLaw {
    pub fn single(
        params: &SystemParams,
        reference: TautReference,
        gains: TautGains,
    ) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            link: SingleLink::from_params(params)?,
            reference,
            gains,
            approx_lengths: None,
        })
    }

    pub fn approximate(
        params: &SystemParams,
        reference: TautReference,
        gains: TautGains,
    ) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            link: SingleLink::equivalent(params),
            reference,
            gains,
            approx_lengths: Some(params.link_lengths.clone()),
        })
    }

    /// Direction and angular velocity the law acts on.
    pub fn measured(&self, chain: &ChainState) -> Result<(UnitVector3, Vector3<f64>)> {
        match &self.approx_lengths {
            None => Ok((chain.directions[0], chain.velocities[0])),
            Some(lengths) => taut_direction(lengths, chain),
        }
    }
}

impl ThrustLaw for TautLaw {
    fn thrust(&self, t: f64, chain: &ChainState) -> Result<LawOutput> {
        let (q, omega) = self.measured(chain)?;
        let reference = self.reference.direction.sample(t)?;
        let u = u_total(
            &self.link,
            &q,
            &omega,
            &reference,
            self.reference.tension,
            &self.gains,
        );
        let (e_q, e_omega) = direction_errors(&q, &omega, &reference.q_d, &reference.omega_d);
        Ok(LawOutput {
            u,
            diagnostics: Diagnostics {
                e_q: Some(e_q),
                e_omega: Some(e_omega),
                tension_target: Some(self.reference.tension),
                ..Diagnostics::default()
            },
        })
    }

    fn heading(&self, _t: f64) -> UnitVector3 {
        self.reference.heading
    }
}
