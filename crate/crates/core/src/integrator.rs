//! Fixed-step time integration on `(S²)ⁿ × SO(3)`.
//!
//! Configurations never leave the manifold: link directions advance by
//! rotations `exp(σ) q` and the attitude by `R exp(ρ)`, where the Lie-algebra
//! increments are accumulated Runge–Kutta style with the exact inverse
//! differential of `exp`. Velocities advance in their linear spaces and are
//! projected back onto the tangent planes after each step.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::manifold::{
    dexp_inv, exp_so3, orthogonality_error, project_tangent, RotationMatrix, UnitVector3,
};
use crate::model::{BodyState, ChainState, ControlInput, TetherModel, ThrustVector};

/// Largest admissible step, s.
pub const MAX_STEP: f64 = 0.01;
/// Abort once any link spins faster than this, rad/s.
pub const DIVERGENCE_RATE: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4Manifold,
    EulerManifold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
    pub renormalize_every: usize,
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        Self {
            step,
            renormalize_every: 1,
            scheme: Scheme::Rk4Manifold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= MAX_STEP) {
            return Err(Error::param(
                "step",
                format!("must lie in (0, {MAX_STEP}] s"),
            ));
        }
        if self.renormalize_every == 0 {
            return Err(Error::param("renormalize_every", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::rk4(1e-3)
    }
}

/// A point of the configuration manifold with its velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub chain: ChainState,
    pub body: BodyState,
    pub t: f64,
}

impl FullState {
    pub fn new(chain: ChainState, body: BodyState) -> Self {
        Self {
            chain,
            body,
            t: 0.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.chain.check()?;
        RotationMatrix::new(*self.body.attitude.as_matrix())?;
        Ok(())
    }
}

/// What the controller commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Actuation {
    /// Simplified model: the thrust vector is applied directly.
    Thrust(Vector3<f64>),
    /// Full model: thrust magnitude along `-R e3` plus body moment.
    Body(ControlInput),
}

impl Actuation {
    pub fn thrust_vector(&self, body: &BodyState) -> ThrustVector {
        match self {
            Actuation::Thrust(u) => ThrustVector(*u),
            Actuation::Body(input) => ThrustVector::from_input(input, &body.attitude),
        }
    }

    pub fn moment(&self) -> Vector3<f64> {
        match self {
            Actuation::Thrust(_) => Vector3::zeros(),
            Actuation::Body(input) => input.moment,
        }
    }
}

/// Tracking quantities a controller reports alongside its command.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub e_q: Option<Vector3<f64>>,
    pub e_omega: Option<Vector3<f64>>,
    pub e_r: Option<Vector3<f64>>,
    pub e_body_rate: Option<Vector3<f64>>,
    pub e_x: Option<Vector3<f64>>,
    pub e_x_rate: Option<Vector3<f64>>,
    pub tension_target: Option<f64>,
    pub phase: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub actuation: Actuation,
    pub diagnostics: Diagnostics,
}

impl ControlOutput {
    pub fn thrust(u: Vector3<f64>) -> Self {
        Self {
            actuation: Actuation::Thrust(u),
            diagnostics: Diagnostics::default(),
        }
    }
}

/// A control law: a pure function of time and state.
pub trait Controller {
    fn control(&self, t: f64, state: &FullState) -> Result<ControlOutput>;
}

impl<F> Controller for F
where
    F: Fn(f64, &FullState) -> Result<ControlOutput>,
{
    fn control(&self, t: f64, state: &FullState) -> Result<ControlOutput> {
        self(t, state)
    }
}

/// Applies the same actuation at every stage.
#[derive(Debug, Clone, Copy)]
pub struct ConstantInput(pub Actuation);

impl Controller for ConstantInput {
    fn control(&self, _t: f64, _state: &FullState) -> Result<ControlOutput> {
        Ok(ControlOutput {
            actuation: self.0,
            diagnostics: Diagnostics::default(),
        })
    }
}

/// No thrust, no moment.
pub fn unforced() -> ConstantInput {
    ConstantInput(Actuation::Thrust(Vector3::zeros()))
}

struct Derivative {
    sigma: Vec<Vector3<f64>>,
    omega: Vec<Vector3<f64>>,
    rho: Vector3<f64>,
    body_rate: Vector3<f64>,
}

fn evaluate(
    model: &TetherModel,
    stage: &FullState,
    sigma: &[Vector3<f64>],
    rho: &Vector3<f64>,
    output: &ControlOutput,
) -> Result<Derivative> {
    let u = output.actuation.thrust_vector(&stage.body);
    let omega_dot = model.link_accelerations(&stage.chain, &u)?;
    let body_dot = model.attitude_dynamics(&stage.body, &output.actuation.moment());
    Ok(Derivative {
        sigma: sigma
            .iter()
            .zip(&stage.chain.velocities)
            .map(|(s, w)| dexp_inv(s, w))
            .collect(),
        omega: omega_dot,
        // Body-frame rates: R = R0 exp(ρ) gives ρ̇ = dexp_inv(-ρ, Ω).
        rho: dexp_inv(&-rho, &stage.body.body_rate),
        body_rate: body_dot,
    })
}

fn stage_state(
    base: &FullState,
    sigma: &[Vector3<f64>],
    omega: &[Vector3<f64>],
    rho: &Vector3<f64>,
    body_rate: &Vector3<f64>,
    t: f64,
) -> FullState {
    let directions: Vec<UnitVector3> = base
        .chain
        .directions
        .iter()
        .zip(sigma)
        .map(|(q, s)| UnitVector3::renormalized(exp_so3(s) * q.as_vec()))
        .collect();
    let velocities = directions
        .iter()
        .zip(omega)
        .map(|(q, w)| project_tangent(q, w))
        .collect();
    FullState {
        chain: ChainState {
            directions,
            velocities,
        },
        body: BodyState {
            attitude: RotationMatrix::from_unchecked(base.body.attitude.as_matrix() * exp_so3(rho)),
            body_rate: *body_rate,
        },
        t,
    }
}

fn axpy(base: &[Vector3<f64>], parts: &[(&[Vector3<f64>], f64)]) -> Vec<Vector3<f64>> {
    base.iter()
        .enumerate()
        .map(|(i, b)| parts.iter().fold(*b, |acc, (v, w)| acc + v[i] * *w))
        .collect()
}

fn control_at(controller: &dyn Controller, state: &FullState) -> Result<ControlOutput> {
    controller.control(state.t, state).map_err(|e| match e {
        Error::Controller { .. } => e,
        other => Error::Controller {
            t: state.t,
            source: Box::new(other),
        },
    })
}

/// Advances by a signed step `h`. `first` is the controller output at `state`.
pub(crate) fn advance(
    model: &TetherModel,
    state: &FullState,
    first: &ControlOutput,
    controller: &dyn Controller,
    scheme: Scheme,
    h: f64,
) -> Result<FullState> {
    let n = state.chain.links();
    let zeros = vec![Vector3::zeros(); n];
    let zero3 = Vector3::zeros();
    let k1 = evaluate(model, state, &zeros, &zero3, first)?;

    let (sigma, omega, rho, body_rate) = match scheme {
        Scheme::EulerManifold => (
            k1.sigma.iter().map(|s| s * h).collect::<Vec<_>>(),
            axpy(&state.chain.velocities, &[(&k1.omega, h)]),
            k1.rho * h,
            state.body.body_rate + k1.body_rate * h,
        ),
        Scheme::Rk4Manifold => {
            let w0 = &state.chain.velocities;
            let b0 = state.body.body_rate;
            let stage = |k: &Derivative, c: f64| -> Result<Derivative> {
                let sigma: Vec<_> = k.sigma.iter().map(|s| s * (c * h)).collect();
                let omega = axpy(w0, &[(&k.omega, c * h)]);
                let rho = k.rho * (c * h);
                let br = b0 + k.body_rate * (c * h);
                let s = stage_state(state, &sigma, &omega, &rho, &br, state.t + c * h);
                let out = control_at(controller, &s)?;
                evaluate(model, &s, &sigma, &rho, &out)
            };
            let k2 = stage(&k1, 0.5)?;
            let k3 = stage(&k2, 0.5)?;
            let k4 = stage(&k3, 1.0)?;
            let w = h / 6.0;
            let comb =
                |a: &[Vector3<f64>], b: &[Vector3<f64>], c: &[Vector3<f64>], d: &[Vector3<f64>]| {
                    (0..n)
                        .map(|i| (a[i] + b[i] * 2.0 + c[i] * 2.0 + d[i]) * w)
                        .collect::<Vec<_>>()
                };
            let sigma = comb(&k1.sigma, &k2.sigma, &k3.sigma, &k4.sigma);
            let domega = comb(&k1.omega, &k2.omega, &k3.omega, &k4.omega);
            let omega = axpy(w0, &[(&domega, 1.0)]);
            let rho = (k1.rho + k2.rho * 2.0 + k3.rho * 2.0 + k4.rho) * w;
            let body_rate =
                b0 + (k1.body_rate + k2.body_rate * 2.0 + k3.body_rate * 2.0 + k4.body_rate) * w;
            (sigma, omega, rho, body_rate)
        }
    };
    Ok(stage_state(
        state,
        &sigma,
        &omega,
        &rho,
        &body_rate,
        state.t + h,
    ))
}

fn guard(state: &FullState) -> Result<()> {
    let finite = state
        .chain
        .directions
        .iter()
        .all(|q| q.iter().all(|x| x.is_finite()))
        && state
            .chain
            .velocities
            .iter()
            .all(|w| w.iter().all(|x| x.is_finite()))
        && state.body.attitude.iter().all(|x| x.is_finite())
        && state.body.body_rate.iter().all(|x| x.is_finite());
    if !finite {
        return Err(Error::NonFinite {
            t: state.t,
            dump: format!("{state:?}"),
        });
    }
    for (i, w) in state.chain.velocities.iter().enumerate() {
        if w.norm() > DIVERGENCE_RATE {
            return Err(Error::Divergence {
                t: state.t,
                link: i + 1,
                rate: w.norm(),
            });
        }
    }
    Ok(())
}

fn renormalize(state: &mut FullState) {
    for q in state.chain.directions.iter_mut() {
        *q = UnitVector3::renormalized(*q.as_vec());
    }
    state.body.attitude = state.body.attitude.renormalized();
}

/// One integrator step under a feedback controller evaluated at every stage.
pub fn step(
    model: &TetherModel,
    state: &FullState,
    controller: &dyn Controller,
    cfg: &IntegratorConfig,
) -> Result<FullState> {
    cfg.validate()?;
    let first = control_at(controller, state)?;
    let mut next = advance(model, state, &first, controller, cfg.scheme, cfg.step)?;
    renormalize(&mut next);
    guard(&next)?;
    Ok(next)
}

/// One step with a fixed `(f, M)` or thrust vector.
pub fn step_with_input(
    model: &TetherModel,
    state: &FullState,
    input: Actuation,
    cfg: &IntegratorConfig,
) -> Result<FullState> {
    step(model, state, &ConstantInput(input), cfg)
}

/// One sample of a simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub directions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub attitude: Matrix3<f64>,
    pub body_rate: Vector3<f64>,
    pub thrust: Option<f64>,
    pub moment: Option<Vector3<f64>>,
    pub u: Vector3<f64>,
    pub tension: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl TrajectoryRow {
    pub fn state(&self) -> FullState {
        FullState {
            chain: ChainState {
                directions: self
                    .directions
                    .iter()
                    .map(|q| UnitVector3::renormalized(*q))
                    .collect(),
                velocities: self.velocities.clone(),
            },
            body: BodyState {
                attitude: RotationMatrix::from_unchecked(self.attitude),
                body_rate: self.body_rate,
            },
            t: self.t,
        }
    }

    pub fn links(&self) -> usize {
        self.directions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn step(&self) -> Option<f64> {
        (self.rows.len() >= 2).then(|| self.rows[1].t - self.rows[0].t)
    }

    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }
}

fn row(model: &TetherModel, state: &FullState, out: &ControlOutput) -> TrajectoryRow {
    let u = out.actuation.thrust_vector(&state.body);
    let (thrust, moment) = match out.actuation {
        Actuation::Thrust(_) => (None, None),
        Actuation::Body(input) => (Some(input.thrust), Some(input.moment)),
    };
    let tension = (model.links() == 1)
        .then(|| model.tension(&state.chain.directions[0], &state.chain.tangent(0), &u));
    TrajectoryRow {
        t: state.t,
        directions: state
            .chain
            .directions
            .iter()
            .map(|q| q.into_inner())
            .collect(),
        velocities: state.chain.velocities.clone(),
        attitude: *state.body.attitude.as_matrix(),
        body_rate: state.body.body_rate,
        thrust,
        moment,
        u: u.0,
        tension,
        diagnostics: out.diagnostics,
    }
}

/// Integrates for `duration` seconds, recording every step.
pub fn simulate(
    model: &TetherModel,
    initial: &FullState,
    controller: &dyn Controller,
    cfg: &IntegratorConfig,
    duration: f64,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(duration > 0.0) {
        return Err(Error::param("duration", "must be positive"));
    }
    initial.check()?;
    let steps = (duration / cfg.step).round() as usize;
    let t0 = initial.t;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut state = initial.clone();
    for k in 0..=steps {
        let out = control_at(controller, &state)?;
        rows.push(row(model, &state, &out));
        if k == steps {
            break;
        }
        let mut next = advance(model, &state, &out, controller, cfg.scheme, cfg.step)?;
        // Keep sample times on an exact grid.
        next.t = t0 + (k + 1) as f64 * cfg.step;
        if (k + 1) % cfg.renormalize_every == 0 {
            renormalize(&mut next);
        }
        guard(&next)?;
        state = next;
    }
    Ok(Trajectory { rows })
}

/// Largest deviations from the manifold constraints along a trajectory:
/// `(max |‖q‖-1|, max |q·ω|, max ‖RᵀR - I‖_F)`.
pub fn constraint_drift(traj: &Trajectory) -> (f64, f64, f64) {
    let mut out = (0.0f64, 0.0f64, 0.0f64);
    for r in &traj.rows {
        for (q, w) in r.directions.iter().zip(&r.velocities) {
            out.0 = out.0.max((q.norm() - 1.0).abs());
            out.1 = out.1.max(q.dot(w).abs());
        }
        out.2 = out.2.max(orthogonality_error(&r.attitude));
    }
    out
}
