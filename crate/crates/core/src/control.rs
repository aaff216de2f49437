//! Adapters from thrust laws to the integrator's controller interface.
//!
//! With the simplified model the thrust vector is applied directly. With the
//! full model the attitude loop tracks the frame whose third axis opposes the
//! thrust vector; the rates of that frame are obtained by predicting the chain
//! a short time forward and backward under the same law and differencing the
//! resulting frames on `SO(3)`.

use crate::error::Result;
use crate::integrator::{advance, Actuation, ControlOutput, Controller, FullState, Scheme};
use crate::model::TetherModel;
use crate::taut_control::{
    attitude_frame, thrust_moment, AttitudeGains, AttitudeSetpoint, ThrustLaw,
};

struct Direct<'a>(&'a dyn ThrustLaw);

impl Controller for Direct<'_> {
    fn control(&self, t: f64, state: &FullState) -> Result<ControlOutput> {
        let out = self.0.thrust(t, &state.chain)?;
        Ok(ControlOutput {
            actuation: Actuation::Thrust(out.u),
            diagnostics: out.diagnostics,
        })
    }
}

/// Applies the law's thrust vector directly, ignoring the attitude.
pub struct SimplifiedController<L> {
    pub law: L,
}

impl<L: ThrustLaw> SimplifiedController<L> {
    pub fn new(law: L) -> Self {
        Self { law }
    }
}

impl<L: ThrustLaw> Controller for SimplifiedController<L> {
    fn control(&self, t: f64, state: &FullState) -> Result<ControlOutput> {
        Direct(&self.law).control(t, state)
    }
}

/// Realizes the law's thrust vector with thrust magnitude and body moment.
pub struct GeometricController<L> {
    pub law: L,
    pub model: TetherModel,
    pub gains: AttitudeGains,
    /// Time offset for differencing the commanded attitude, s.
    pub diff_step: f64,
}

impl<L: ThrustLaw> GeometricController<L> {
    pub fn new(law: L, model: TetherModel, gains: AttitudeGains, diff_step: f64) -> Self {
        Self {
            law,
            model,
            gains,
            diff_step,
        }
    }

    /// Commanded attitude and its body rates at `state`.
    pub fn setpoint(&self, t: f64, state: &FullState) -> Result<(AttitudeSetpoint, ControlOutput)> {
        let active: &dyn ThrustLaw = self.law.phase_at(t).unwrap_or(&self.law);
        let direct = Direct(active);
        let now = direct.control(t, state)?;
        let Actuation::Thrust(u) = now.actuation else {
            unreachable!("thrust laws command thrust vectors")
        };
        let r_c = attitude_frame(&u, &self.law.heading(t))?;
        let h = self.diff_step;
        let mut base = state.clone();
        base.t = t;
        let frame_at = |s: f64| -> Result<_> {
            let predicted = advance(&self.model, &base, &now, &direct, Scheme::Rk4Manifold, s)?;
            let u_s = active.thrust(t + s, &predicted.chain)?.u;
            attitude_frame(&u_s, &self.law.heading(t + s))
        };
        let before = frame_at(-h)?;
        let after = frame_at(h)?;
        Ok((AttitudeSetpoint::from_samples(&before, r_c, &after, h), now))
    }
}

impl<L: ThrustLaw> Controller for GeometricController<L> {
    fn control(&self, t: f64, state: &FullState) -> Result<ControlOutput> {
        let (setpoint, now) = self.setpoint(t, state)?;
        let Actuation::Thrust(u) = now.actuation else {
            unreachable!("thrust laws command thrust vectors")
        };
        let inertia = self.model.params().quad_inertia;
        let (input, err) = thrust_moment(&inertia, &state.body, &u, &setpoint, &self.gains)?;
        let mut diagnostics = now.diagnostics;
        diagnostics.e_r = Some(err.e_r);
        diagnostics.e_body_rate = Some(err.e_body_rate);
        Ok(ControlOutput {
            actuation: Actuation::Body(input),
            diagnostics,
        })
    }
}
