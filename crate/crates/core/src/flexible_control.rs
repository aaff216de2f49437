//! Control of a flexible tether: quadrotor position tracking by output
//! feedback linearization toward a point just inside the reachable ball, then
//! linear stabilization of the whole chain about the hanging equilibrium.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Diagnostics;
use crate::lqr;
use crate::manifold::{e3, hat, UnitVector3};
use crate::model::{inertia_coefficients, ChainState, SystemParams, TetherModel};
use crate::taut_control::{LawOutput, ThrustLaw};

/// Input-map conditioning beyond which the tether counts as taut.
pub const CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlexConfig {
    pub delta: f64,
    pub gamma: f64,
    pub k_x: f64,
    pub k_x_dot: f64,
    pub t_switch: f64,
    /// Target position; `None` means directly over the pivot at full length.
    pub x_d: Option<[f64; 3]>,
}

impl Default for FlexConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            gamma: 1.0,
            k_x: 4.0,
            k_x_dot: 4.0,
            t_switch: 3.0,
            x_d: None,
        }
    }
}

impl FlexConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("k_x", self.k_x),
            ("k_x_dot", self.k_x_dot),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if !(self.t_switch.is_finite() && self.t_switch >= 0.0) {
            return Err(Error::param("t_switch", "must be non-negative"));
        }
        Ok(())
    }

    pub fn target(&self, params: &SystemParams) -> Vector3<f64> {
        self.x_d
            .map(Vector3::from)
            .unwrap_or_else(|| -e3() * params.tether_length())
    }
}

/// Intermediate-point reference and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionReference {
    pub y: Vector3<f64>,
    pub y_dot: Vector3<f64>,
    pub y_ddot: Vector3<f64>,
}

/// `y_d(t) = x0 e^{−γt} + (1−δ)(1−e^{−γt}) x_d`.
pub fn reference_yd(
    t: f64,
    x0: &Vector3<f64>,
    x_d: &Vector3<f64>,
    cfg: &FlexConfig,
    radius: f64,
) -> Result<PositionReference> {
    let r0 = x0.norm();
    if r0 >= radius {
        return Err(Error::OutsideReach { norm: r0, radius });
    }
    let s = (-cfg.gamma * t).exp();
    let end = x_d * (1.0 - cfg.delta);
    let gap = x0 - end;
    Ok(PositionReference {
        y: x0 * s + end * (1.0 - s),
        y_dot: -gap * (cfg.gamma * s),
        y_ddot: gap * (cfg.gamma * cfg.gamma * s),
    })
}

fn condition(b: &Matrix3<f64>) -> f64 {
    let sv = b.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Tracking command together with the position errors it acts on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingCommand {
    pub u: Vector3<f64>,
    pub e_x: Vector3<f64>,
    pub e_x_dot: Vector3<f64>,
}

/// `u = −B⁻¹ (F − k_x e_x − k_ẋ ė_x + ÿ_d)` with `ẍ = −F − B u`.
pub fn u_track(
    model: &TetherModel,
    chain: &ChainState,
    reference: &PositionReference,
    cfg: &FlexConfig,
) -> Result<TrackingCommand> {
    let radius = model.params().tether_length();
    let x = model.quad_position(chain);
    if x.norm() >= radius {
        return Err(Error::OutsideReach {
            norm: x.norm(),
            radius,
        });
    }
    let (f, b) = model.quad_accel_decomposition(chain)?;
    let condition = condition(&b);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::NearTaut { condition });
    }
    let e_x = x - reference.y;
    let e_x_dot = model.quad_velocity(chain) - reference.y_dot;
    let rhs = f - e_x * cfg.k_x - e_x_dot * cfg.k_x_dot + reference.y_ddot;
    let u = -b
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("input map is singular".into()))?;
    Ok(TrackingCommand { u, e_x, e_x_dot })
}

/// `𝐌 ẍ + 𝐆 x = 𝐁 δu` about the hanging equilibrium, with
/// `x = [Cᵀξ_1; …; Cᵀξ_n]`, `C = [e1, e2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub input: DMatrix<f64>,
    pub hover_thrust: Vector3<f64>,
}

fn plane() -> Matrix3x2<f64> {
    Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

pub fn linearize(params: &SystemParams) -> Result<LinearizedModel> {
    params.validate()?;
    let n = params.links();
    let c = inertia_coefficients(params);
    let m_total = params.total_mass();
    let g = params.gravity;
    let mut mass = DMatrix::zeros(2 * n, 2 * n);
    let mut stiffness = DMatrix::zeros(2 * n, 2 * n);
    let mut input = DMatrix::zeros(2 * n, 3);
    let row: Matrix2x3<f64> = plane().transpose() * hat(&e3());
    for i in 0..n {
        let l = params.link_lengths[i];
        for j in 0..n {
            for k in 0..2 {
                mass[(2 * i + k, 2 * j + k)] = c.mij[(i, j)];
            }
        }
        for k in 0..2 {
            stiffness[(2 * i + k, 2 * i + k)] = (m_total - c.mg[i]) * g * l;
        }
        input.view_mut((2 * i, 0), (2, 3)).copy_from(&(-row * l));
    }
    Ok(LinearizedModel {
        mass,
        stiffness,
        input,
        hover_thrust: -e3() * (m_total * g),
    })
}

impl LinearizedModel {
    pub fn links(&self) -> usize {
        self.mass.nrows() / 2
    }

    /// First-order form `ż = A z + B δu`, `z = [x; ẋ]`.
    pub fn first_order(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.mass.nrows();
        let chol = self.mass.clone().cholesky().ok_or_else(|| {
            Error::Synthesis("linearized mass matrix is not positive-definite".into())
        })?;
        let mut a = DMatrix::zeros(2 * d, 2 * d);
        a.view_mut((0, d), (d, d)).fill_with_identity();
        a.view_mut((d, 0), (d, d))
            .copy_from(&-chol.solve(&self.stiffness));
        let mut b = DMatrix::zeros(2 * d, 3);
        b.view_mut((d, 0), (d, 3))
            .copy_from(&chol.solve(&self.input));
        Ok((a, b))
    }

    pub fn closed_loop(&self, gains: &StabilizerGains) -> Result<DMatrix<f64>> {
        let (a, b) = self.first_order()?;
        Ok(a - b * gains.stacked())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrWeights {
    /// Multiple of the identity on `[x; ẋ]`.
    pub state: f64,
    /// Multiple of the identity on `δu`.
    pub input: f64,
    /// Hold interval of the discretization, s.
    pub dt: f64,
    /// Required distance of the closed-loop spectrum from the imaginary axis, 1/s.
    pub margin: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            state: 1.0,
            input: 0.1,
            dt: 1e-3,
            margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerGains {
    pub k_x: DMatrix<f64>,
    pub k_x_dot: DMatrix<f64>,
    /// Largest real part of the continuous closed-loop spectrum.
    pub abscissa: f64,
}

impl StabilizerGains {
    pub fn stacked(&self) -> DMatrix<f64> {
        let d = self.k_x.ncols();
        let mut k = DMatrix::zeros(3, 2 * d);
        k.view_mut((0, 0), (3, d)).copy_from(&self.k_x);
        k.view_mut((0, d), (3, d)).copy_from(&self.k_x_dot);
        k
    }
}

/// Certifies `gains` on `lin`, returning the spectral abscissa.
pub fn certify(lin: &LinearizedModel, gains: &StabilizerGains, margin: f64) -> Result<f64> {
    let abscissa = lqr::spectral_abscissa(&lin.closed_loop(gains)?);
    if !(abscissa < -margin) {
        return Err(Error::Synthesis(format!(
            "closed-loop spectral abscissa {abscissa:.4e} is not below -{margin}"
        )));
    }
    Ok(abscissa)
}

pub fn synthesize_gains(lin: &LinearizedModel, weights: &LqrWeights) -> Result<StabilizerGains> {
    if !(weights.state > 0.0 && weights.input > 0.0 && weights.dt > 0.0 && weights.margin >= 0.0) {
        return Err(Error::param(
            "lqr",
            "weights and hold interval must be positive",
        ));
    }
    let (a, b) = lin.first_order()?;
    let (ad, bd) = lqr::zoh(&a, &b, weights.dt);
    let q = DMatrix::identity(a.nrows(), a.nrows()) * weights.state;
    let r = DMatrix::identity(3, 3) * weights.input;
    let (p, _) = lqr::dare(&ad, &bd, &q, &r)?;
    let residual = lqr::dare_residual(&ad, &bd, &q, &r, &p);
    if !(residual < 1e-6) {
        return Err(Error::Synthesis(format!(
            "Riccati residual {residual:.3e} too large"
        )));
    }
    let k = lqr::discrete_gain(&ad, &bd, &r, &p)?;
    let d = lin.mass.nrows();
    let mut gains = StabilizerGains {
        k_x: k.view((0, 0), (3, d)).into_owned(),
        k_x_dot: k.view((0, d), (3, d)).into_owned(),
        abscissa: f64::NAN,
    };
    gains.abscissa = certify(lin, &gains, weights.margin)?;
    Ok(gains)
}

/// Rotation vector of the minimal rotation taking `-e3` to `q`.
pub fn deflection(q: &UnitVector3, link: usize) -> Result<Vector3<f64>> {
    let down = -e3();
    let axis = down.cross(q);
    let s = axis.norm();
    let c = down.dot(q);
    if s < 1e-12 {
        if c < 0.0 {
            return Err(Error::AntipodalLink { link });
        }
        return Ok(axis);
    }
    Ok(axis * (s.atan2(c) / s))
}

/// Linear state `(x, ẋ)` of a chain near the hanging equilibrium.
pub fn linear_state(chain: &ChainState) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = chain.links();
    let ct = plane().transpose();
    let mut x = DVector::zeros(2 * n);
    let mut v = DVector::zeros(2 * n);
    for i in 0..n {
        let xi: Vector2<f64> = ct * deflection(&chain.directions[i], i + 1)?;
        let vi: Vector2<f64> = ct * chain.velocities[i];
        x.fixed_rows_mut::<2>(2 * i).copy_from(&xi);
        v.fixed_rows_mut::<2>(2 * i).copy_from(&vi);
    }
    Ok((x, v))
}

/// `u = −K_x x − K_ẋ ẋ − m_T g e3`.
pub fn u_stabilize(
    lin: &LinearizedModel,
    chain: &ChainState,
    gains: &StabilizerGains,
) -> Result<Vector3<f64>> {
    let (x, v) = linear_state(chain)?;
    let du = -(&gains.k_x * x) - &gains.k_x_dot * v;
    Ok(lin.hover_thrust + Vector3::new(du[0], du[1], du[2]))
}

/// Position tracking toward the intermediate point.
#[derive(Debug, Clone)]
pub struct TrackingLaw {
    pub model: TetherModel,
    pub x0: Vector3<f64>,
    pub x_d: Vector3<f64>,
    pub cfg: FlexConfig,
}

impl TrackingLaw {
    pub fn new(model: TetherModel, x0: Vector3<f64>, cfg: FlexConfig) -> Result<Self> {
        cfg.validate()?;
        let x_d = cfg.target(model.params());
        let radius = model.params().tether_length();
        if x0.norm() >= radius {
            return Err(Error::OutsideReach {
                norm: x0.norm(),
                radius,
            });
        }
        Ok(Self {
            model,
            x0,
            x_d,
            cfg,
        })
    }

    pub fn reference(&self, t: f64) -> Result<PositionReference> {
        reference_yd(
            t,
            &self.x0,
            &self.x_d,
            &self.cfg,
            self.model.params().tether_length(),
        )
    }
}

impl ThrustLaw for TrackingLaw {
    fn thrust(&self, t: f64, chain: &ChainState) -> Result<LawOutput> {
        let cmd = u_track(&self.model, chain, &self.reference(t)?, &self.cfg)?;
        Ok(LawOutput {
            u: cmd.u,
            diagnostics: Diagnostics {
                e_x: Some(cmd.e_x),
                e_x_rate: Some(cmd.e_x_dot),
                phase: Some(1),
                ..Diagnostics::default()
            },
        })
    }
}

/// Linear stabilization of the hanging equilibrium.
#[derive(Debug, Clone)]
pub struct StabilizingLaw {
    pub lin: LinearizedModel,
    pub gains: StabilizerGains,
    pub lengths: Vec<f64>,
    pub x_d: Vector3<f64>,
}

impl StabilizingLaw {
    pub fn new(params: &SystemParams, lin: LinearizedModel, gains: StabilizerGains) -> Self {
        Self {
            lin,
            gains,
            lengths: params.link_lengths.clone(),
            x_d: -e3() * params.tether_length(),
        }
    }
}

impl ThrustLaw for StabilizingLaw {
    fn thrust(&self, _t: f64, chain: &ChainState) -> Result<LawOutput> {
        let u = u_stabilize(&self.lin, chain, &self.gains)?;
        let (mut x, mut v) = (Vector3::zeros(), Vector3::zeros());
        for (i, l) in self.lengths.iter().enumerate() {
            x += chain.directions[i].as_vec() * *l;
            v += chain.direction_rate(i) * *l;
        }
        Ok(LawOutput {
            u,
            diagnostics: Diagnostics {
                e_x: Some(x - self.x_d),
                e_x_rate: Some(v),
                phase: Some(2),
                ..Diagnostics::default()
            },
        })
    }
}

/// Tracking before `t_switch`, stabilization from then on.
#[derive(Debug, Clone)]
pub struct TwoPhaseLaw {
    pub tracking: TrackingLaw,
    pub stabilizing: StabilizingLaw,
    pub t_switch: f64,
}

impl TwoPhaseLaw {
    pub fn new(tracking: TrackingLaw, stabilizing: StabilizingLaw) -> Self {
        let t_switch = tracking.cfg.t_switch;
        Self {
            tracking,
            stabilizing,
            t_switch,
        }
    }

    fn active(&self, t: f64) -> &dyn ThrustLaw {
        if t < self.t_switch {
            &self.tracking
        } else {
            &self.stabilizing
        }
    }
}

impl ThrustLaw for TwoPhaseLaw {
    fn thrust(&self, t: f64, chain: &ChainState) -> Result<LawOutput> {
        self.active(t).thrust(t, chain)
    }

    fn phase_at(&self, t: f64) -> Option<&dyn ThrustLaw> {
        Some(self.active(t))
    }
}

/// Chain through `x0` at minimum gravitational potential.
///
/// Stationarity puts each link along `μ + g w_i e3`, where `w_i` is the tether
/// mass the link supports; the three components of `μ` are fixed by the
/// position constraint and found by damped Newton iteration.
pub fn hanging_chain(params: &SystemParams, x0: &Vector3<f64>) -> Result<ChainState> {
    params.validate()?;
    let radius = params.tether_length();
    if x0.norm() >= radius {
        return Err(Error::OutsideReach {
            norm: x0.norm(),
            radius,
        });
    }
    let c = inertia_coefficients(params);
    let g = params.gravity;
    let l = &params.link_lengths;
    let loads: Vec<f64> = c.mg.iter().map(|mg| (mg - params.quad_mass) * g).collect();
    let shape = |mu: &Vector3<f64>| -> Vec<(Vector3<f64>, f64)> {
        loads
            .iter()
            .map(|w| {
                let v = mu + e3() * *w;
                let r = v.norm();
                (v / r, r)
            })
            .collect()
    };
    let residual = |mu: &Vector3<f64>| -> Vector3<f64> {
        shape(mu)
            .iter()
            .zip(l)
            .fold(-x0, |acc, ((q, _), li)| acc + q * *li)
    };

    let horizontal = Vector3::new(x0.x, x0.y, 0.0);
    let total_load = loads.iter().cloned().fold(0.0, f64::max);
    let mut mu = if horizontal.norm() > 1e-9 {
        horizontal.normalize() * total_load - e3() * (0.5 * total_load)
    } else {
        Vector3::new(1e-3, 0.0, 0.0) - e3() * (0.5 * total_load)
    };
    let mut res = residual(&mu);
    for _ in 0..200 {
        if res.norm() < 1e-14 * radius {
            break;
        }
        let jac = shape(&mu)
            .iter()
            .zip(l)
            .fold(Matrix3::zeros(), |acc, ((q, r), li)| {
                acc + (Matrix3::identity() - q * q.transpose()) * (*li / *r)
            });
        let step = jac
            .lu()
            .solve(&-res)
            .ok_or_else(|| Error::Solver("hanging-shape Jacobian is singular".into()))?;
        let mut scale = 1.0;
        loop {
            let trial = mu + step * scale;
            let trial_res = residual(&trial);
            if trial_res.norm() < res.norm() || scale < 1e-6 {
                mu = trial;
                res = trial_res;
                break;
            }
            scale *= 0.5;
        }
    }
    if !(res.norm() < 1e-10 * radius) {
        return Err(Error::Solver(format!(
            "hanging shape did not converge; residual {:.3e} m",
            res.norm()
        )));
    }
    let directions = shape(&mu)
        .into_iter()
        .map(|(q, _)| UnitVector3::renormalized(q))
        .collect();
    Ok(ChainState::at_rest(directions))
}
