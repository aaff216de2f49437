//! Scenario files: system, initial state, controller and integrator settings,
//! and the run harness that turns them into a trajectory with metrics.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::{GeometricController, SimplifiedController};
use crate::error::{Error, Result};
use crate::flexible_control::{
    hanging_chain, linearize, synthesize_gains, FlexConfig, LqrWeights, StabilizerGains,
    StabilizingLaw, TrackingLaw, TwoPhaseLaw,
};
use crate::integrator::{
    simulate, unforced, Controller, FullState, IntegratorConfig, Scheme, Trajectory,
};
use crate::manifold::{RotationMatrix, UnitVector3};
use crate::model::{positions, BodyState, ChainState, SystemParams, TetherModel, DEFAULT_GRAVITY};
use crate::taut_control::{
    taut_direction, DirectionReference, TautGains, TautLaw, TautReference, ThrustLaw,
};
use crate::verify::{audit, AuditReport};

pub const PRESETS: [&str; 4] = ["fig2", "fig3", "fig4", "fig5"];

fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "fig2" => Some(include_str!("../scenarios/fig2.toml")),
        "fig3" => Some(include_str!("../scenarios/fig3.toml")),
        "fig4" => Some(include_str!("../scenarios/fig4.toml")),
        "fig5" => Some(include_str!("../scenarios/fig5.toml")),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: f64,
    pub params: ParamsConfig,
    pub initial: InitialConfig,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub quad_mass: f64,
    /// Principal moments, kg·m².
    pub quad_inertia: [f64; 3],
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Uniform split of `tether_mass` and `tether_length` into `links` links.
    pub links: Option<usize>,
    pub tether_mass: Option<f64>,
    pub tether_length: Option<f64>,
    /// Explicit per-link values, ground link first.
    pub link_masses: Option<Vec<f64>>,
    pub link_lengths: Option<Vec<f64>>,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

impl ParamsConfig {
    pub fn build(&self) -> Result<SystemParams> {
        let inertia = Matrix3::from_diagonal(&Vector3::from(self.quad_inertia));
        let params = match (&self.link_masses, &self.link_lengths, self.links) {
            (Some(m), Some(l), None) => SystemParams {
                quad_mass: self.quad_mass,
                quad_inertia: inertia,
                link_masses: m.clone(),
                link_lengths: l.clone(),
                gravity: self.gravity,
            },
            (None, None, Some(n)) => {
                let (Some(mass), Some(length)) = (self.tether_mass, self.tether_length) else {
                    return Err(Error::Config(
                        "params: `links` needs `tether_mass` and `tether_length`".into(),
                    ));
                };
                SystemParams::uniform(self.quad_mass, inertia, n, mass, length, self.gravity)
            }
            _ => {
                return Err(Error::Config(
                    "params: give either `links` with tether totals or both `link_masses` and `link_lengths`".into(),
                ))
            }
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Directions,
    /// Minimum-potential chain through the quadrotor position `x0`.
    HangingThrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub directions: Option<Vec<[f64; 3]>>,
    pub velocities: Option<Vec<[f64; 3]>>,
    pub x0: Option<[f64; 3]>,
    /// Rows of `R`; identity when absent.
    pub attitude: Option<[[f64; 3]; 3]>,
    pub body_rate: Option<[f64; 3]>,
}

impl InitialConfig {
    pub fn build(&self, params: &SystemParams) -> Result<FullState> {
        let n = params.links();
        let chain = match self.kind {
            InitialKind::Directions => {
                let dirs = self
                    .directions
                    .as_ref()
                    .ok_or_else(|| Error::Config("initial: `directions` is required".into()))?;
                if dirs.len() != n {
                    return Err(Error::Config(format!(
                        "initial: {} directions for {n} links",
                        dirs.len()
                    )));
                }
                let dirs = dirs
                    .iter()
                    .map(|d| UnitVector3::normalize(Vector3::from(*d)))
                    .collect::<Result<Vec<_>>>()?;
                let vels = match &self.velocities {
                    None => vec![Vector3::zeros(); n],
                    Some(v) if v.len() == n => v.iter().map(|w| Vector3::from(*w)).collect(),
                    Some(v) => {
                        return Err(Error::Config(format!(
                            "initial: {} velocities for {n} links",
                            v.len()
                        )))
                    }
                };
                ChainState::new(dirs, vels)?
            }
            InitialKind::HangingThrough => {
                let x0 = self
                    .x0
                    .ok_or_else(|| Error::Config("initial: `x0` is required".into()))?;
                hanging_chain(params, &Vector3::from(x0))?
            }
        };
        let attitude = match self.attitude {
            None => RotationMatrix::identity(),
            Some(rows) => RotationMatrix::new(Matrix3::from_fn(|i, j| rows[i][j]))?,
        };
        let body_rate = self
            .body_rate
            .map(Vector3::from)
            .unwrap_or_else(Vector3::zeros);
        Ok(FullState::new(
            chain,
            BodyState {
                attitude,
                body_rate,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    TautN1,
    TautApprox,
    FlexibleTwoPhase,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Thrust magnitude and moment drive the attitude.
    #[default]
    Full,
    /// The thrust vector is applied directly.
    Simplified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    #[serde(default)]
    pub model: ModelKind,
    /// Desired tension for the taut controllers, N.
    pub tension: Option<f64>,
    pub reference: Option<DirectionReference>,
    pub heading: Option<[f64; 3]>,
    #[serde(default)]
    pub gains: TautGains,
    #[serde(default)]
    pub flex: FlexConfig,
    #[serde(default)]
    pub lqr: LqrWeights,
    /// Domain bound on `1 − q·q_d` for the Lyapunov certificate.
    #[serde(default = "default_psi_q")]
    pub psi_q: f64,
}

fn default_psi_q() -> f64 {
    1.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub step: f64,
    pub renormalize_every: usize,
    pub scheme: Scheme,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            step: 1e-3,
            renormalize_every: 1,
            scheme: Scheme::Rk4Manifold,
        }
    }
}

impl From<IntegratorSection> for IntegratorConfig {
    fn from(s: IntegratorSection) -> Self {
        IntegratorConfig {
            step: s.step,
            renormalize_every: s.renormalize_every,
            scheme: s.scheme,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub decimate: usize,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            decimate: 10,
            svg: false,
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let text = preset_text(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset `{name}`; available: {}",
            PRESETS.join(", ")
        ))
    })?;
    parse_scenario(text)
}

/// Reads a scenario file, or a preset when `source` names one and no such file exists.
pub fn load_scenario(source: &str) -> Result<ScenarioConfig> {
    let path = Path::new(source);
    if path.exists() {
        parse_scenario(&std::fs::read_to_string(path)?)
    } else if preset_text(source).is_some() {
        preset(source)
    } else {
        Err(Error::Config(format!(
            "`{source}` is neither a file nor a preset"
        )))
    }
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::param("duration", "must be positive"));
        }
        let params = self.params.build()?;
        IntegratorConfig::from(self.integrator).validate()?;
        if self.output.decimate == 0 {
            return Err(Error::param("output.decimate", "must be at least 1"));
        }
        let c = &self.controller;
        match c.kind {
            ControllerKind::TautN1 | ControllerKind::TautApprox => {
                if c.kind == ControllerKind::TautN1 && params.links() != 1 {
                    return Err(Error::param(
                        "controller.kind",
                        "taut_n1 needs a single link; use taut_approx for n > 1",
                    ));
                }
                c.gains.validate()?;
                if !c.tension.is_some_and(|t| t.is_finite()) {
                    return Err(Error::param(
                        "controller.tension",
                        "required for taut controllers",
                    ));
                }
            }
            ControllerKind::FlexibleTwoPhase => c.flex.validate()?,
            ControllerKind::None => {}
        }
        if c.model == ModelKind::Full && c.kind != ControllerKind::None {
            c.gains.validate()?;
        }
        Ok(())
    }
}

/// A scenario ready to integrate.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: TetherModel,
    pub initial: FullState,
    pub controller: Box<dyn Controller + Send + Sync>,
    pub integrator: IntegratorConfig,
    pub reference: Option<TautReference>,
    pub stabilizer: Option<StabilizerGains>,
}

fn wrap<L: ThrustLaw + 'static>(
    law: L,
    kind: ModelKind,
    model: &TetherModel,
    gains: &TautGains,
    step: f64,
) -> Box<dyn Controller + Send + Sync> {
    match kind {
        ModelKind::Simplified => Box::new(SimplifiedController::new(law)),
        ModelKind::Full => Box::new(GeometricController::new(
            law,
            model.clone(),
            gains.attitude(),
            step,
        )),
    }
}

pub fn build(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let params = config.params.build()?;
    let model = TetherModel::new(params.clone())?;
    let initial = config.initial.build(&params)?;
    let integrator = IntegratorConfig::from(config.integrator);
    let c = &config.controller;
    let mut reference = None;
    let mut stabilizer = None;
    let controller: Box<dyn Controller + Send + Sync> = match c.kind {
        ControllerKind::None => Box::new(unforced()),
        ControllerKind::TautN1 | ControllerKind::TautApprox => {
            let heading = match c.heading {
                Some(h) => UnitVector3::normalize(Vector3::from(h))?,
                None => UnitVector3::e1(),
            };
            let r = TautReference {
                direction: c.reference.unwrap_or(DirectionReference::FigureEight),
                tension: c.tension.unwrap_or_default(),
                heading,
            };
            reference = Some(r);
            let law = if c.kind == ControllerKind::TautN1 {
                TautLaw::single(&params, r, c.gains)?
            } else {
                TautLaw::approximate(&params, r, c.gains)?
            };
            wrap(law, c.model, &model, &c.gains, integrator.step)
        }
        ControllerKind::FlexibleTwoPhase => {
            let lin = linearize(&params)?;
            let gains = synthesize_gains(&lin, &c.lqr)?;
            stabilizer = Some(gains.clone());
            let x0 = model.quad_position(&initial.chain);
            let tracking = TrackingLaw::new(model.clone(), x0, c.flex)?;
            let law = TwoPhaseLaw::new(tracking, StabilizingLaw::new(&params, lin, gains));
            wrap(law, c.model, &model, &c.gains, integrator.step)
        }
    };
    Ok(Scenario {
        config: config.clone(),
        model,
        initial,
        controller,
        integrator,
        reference,
        stabilizer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub name: String,
    pub links: usize,
    pub step: f64,
    pub duration: f64,
    pub rows: usize,
    pub final_e_q: Option<f64>,
    pub final_e_omega: Option<f64>,
    pub final_e_r: Option<f64>,
    pub final_e_body_rate: Option<f64>,
    pub final_e_x: Option<f64>,
    pub max_tension_error: Option<f64>,
    pub final_tension_error: Option<f64>,
    /// Exponential rate fitted to `‖e_q‖`, 1/s.
    pub decay_rate: Option<f64>,
    /// Largest `1 − q·q_d` seen by a taut controller.
    pub max_psi: Option<f64>,
    /// RMS deviation of interior link endpoints from the pivot-to-quadrotor
    /// chord over the last `VIBRATION_WINDOW` seconds, m.
    pub vibration_index: Option<f64>,
    pub vibration_per_link: Vec<f64>,
    /// `‖x(T) − x_d‖ / ‖x_d‖` for the flexible controller.
    pub final_position_error_rel: Option<f64>,
    pub max_quad_distance: f64,
    pub max_thrust: f64,
}

/// Width of the trailing window for the vibration index, s.
pub const VIBRATION_WINDOW: f64 = 2.0;
/// Samples of `‖e_q‖` below this are excluded from the decay fit.
pub const DECAY_FLOOR: f64 = 1e-9;

/// Slope of the least-squares line through `(t, ln y)` for `y > floor`, negated.
pub fn decay_rate(samples: impl IntoIterator<Item = (f64, f64)>, floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples
        .into_iter()
        .filter(|(_, y)| *y > floor)
        .map(|(t, y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let (mt, my) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0 / k, a.1 + p.1 / k));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.0 - mt) * (p.1 - my), a.1 + (p.0 - mt) * (p.0 - mt))
    });
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Per-link and overall RMS lateral deviation of interior endpoints from the
/// chord, over rows with `t ≥ from`.
pub fn vibration_index(lengths: &[f64], traj: &Trajectory, from: f64) -> Option<(f64, Vec<f64>)> {
    let n = lengths.len();
    if n < 2 {
        return None;
    }
    let total: f64 = lengths.iter().sum();
    let mut sums = vec![0.0; n - 1];
    let mut count = 0usize;
    for row in traj.rows.iter().filter(|r| r.t >= from) {
        let xs = positions(lengths, &row.state().chain);
        let quad = xs[n - 1];
        let mut reach = 0.0;
        for i in 0..n - 1 {
            reach += lengths[i];
            sums[i] += (xs[i] - quad * (reach / total)).norm_squared();
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let per_link: Vec<f64> = sums.iter().map(|s| (s / count as f64).sqrt()).collect();
    let overall = (sums.iter().sum::<f64>() / (count * (n - 1)) as f64).sqrt();
    Some((overall, per_link))
}

pub fn metrics(scenario: &Scenario, traj: &Trajectory) -> Result<Metrics> {
    let cfg = &scenario.config;
    let params = scenario.model.params();
    let last = traj
        .last()
        .ok_or_else(|| Error::InvalidState("empty trajectory".into()))?;
    let d = last.diagnostics;
    let tension_errors: Vec<f64> = traj
        .rows
        .iter()
        .filter_map(|r| Some((r.tension? - r.diagnostics.tension_target?).abs()))
        .collect();
    let decay = decay_rate(
        traj.rows
            .iter()
            .filter_map(|r| Some((r.t, r.diagnostics.e_q?.norm()))),
        DECAY_FLOOR,
    );
    let max_psi = match &scenario.reference {
        Some(reference) => {
            let mut worst: f64 = 0.0;
            for r in &traj.rows {
                let chain = r.state().chain;
                let q = if params.links() == 1 {
                    chain.directions[0]
                } else {
                    taut_direction(&params.link_lengths, &chain)?.0
                };
                let qd = reference.direction.sample(r.t)?.q_d;
                worst = worst.max(1.0 - q.dot(&qd));
            }
            Some(worst)
        }
        None => None,
    };
    let vibration = vibration_index(&params.link_lengths, traj, last.t - VIBRATION_WINDOW);
    let final_position_error_rel =
        (cfg.controller.kind == ControllerKind::FlexibleTwoPhase).then(|| {
            let target = cfg.controller.flex.target(params);
            (scenario.model.quad_position(&last.state().chain) - target).norm() / target.norm()
        });
    let max_quad_distance = traj
        .rows
        .iter()
        .map(|r| positions(&params.link_lengths, &r.state().chain)[params.links() - 1].norm())
        .fold(0.0, f64::max);
    Ok(Metrics {
        name: cfg.name.clone(),
        links: params.links(),
        step: scenario.integrator.step,
        duration: cfg.duration,
        rows: traj.rows.len(),
        final_e_q: d.e_q.map(|v| v.norm()),
        final_e_omega: d.e_omega.map(|v| v.norm()),
        final_e_r: d.e_r.map(|v| v.norm()),
        final_e_body_rate: d.e_body_rate.map(|v| v.norm()),
        final_e_x: d.e_x.map(|v| v.norm()),
        max_tension_error: tension_errors.iter().copied().reduce(f64::max),
        final_tension_error: tension_errors.last().copied(),
        decay_rate: decay,
        max_psi,
        vibration_index: vibration.as_ref().map(|v| v.0),
        vibration_per_link: vibration.map(|v| v.1).unwrap_or_default(),
        final_position_error_rel,
        max_quad_distance,
        max_thrust: traj.rows.iter().map(|r| r.u.norm()).fold(0.0, f64::max),
    })
}

pub struct RunOutput {
    pub trajectory: Trajectory,
    pub metrics: Metrics,
    pub audit: AuditReport,
}

pub fn tracking_gain(config: &ScenarioConfig) -> Option<f64> {
    (config.controller.kind == ControllerKind::FlexibleTwoPhase)
        .then_some(config.controller.flex.k_x)
}

pub fn run(config: &ScenarioConfig) -> Result<RunOutput> {
    let scenario = build(config)?;
    let trajectory = simulate(
        &scenario.model,
        &scenario.initial,
        scenario.controller.as_ref(),
        &scenario.integrator,
        config.duration,
    )?;
    let metrics = metrics(&scenario, &trajectory)?;
    let audit = audit(&scenario.model, &trajectory, tracking_gain(config))?;
    Ok(RunOutput {
        trajectory,
        metrics,
        audit,
    })
}
