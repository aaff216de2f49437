//! Post-hoc checks of simulated trajectories and controller certificates.
//!
//! Each check recomputes its quantity along a route different from the code
//! it audits: accelerations by differencing sampled velocities rather than
//! solving the equations of motion, energy rather than forces, and finite
//! differences rather than the analytic linearization.

use nalgebra::{DVector, Matrix2, Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flexible_control::LinearizedModel;
use crate::integrator::{constraint_drift, Trajectory, TrajectoryRow};
use crate::manifold::{e3, exp_so3, hat, UnitVector3};
use crate::model::{inertia_coefficients, ChainState, SystemParams, TetherModel, ThrustVector};
use crate::taut_control::{DirectionSample, TautGains};

/// Tolerance on step-to-step growth of a quantity that must not increase.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-9;
/// Relative Euler–Lagrange residual above which a row is flagged.
pub const EL_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCertificate {
    pub p_lower: Matrix2<f64>,
    pub p_upper: Matrix2<f64>,
    pub w_q: Matrix2<f64>,
    pub psi_q: f64,
    pub is_valid: bool,
}

fn positive_definite(m: &Matrix2<f64>) -> bool {
    m.symmetric_eigenvalues().min() > 0.0
}

pub fn lyapunov_certificate(gains: &TautGains, psi_q: f64) -> Result<LyapunovCertificate> {
    if !(psi_q > 0.0 && psi_q < 2.0) {
        return Err(Error::param("psi_q", "must lie in (0, 2)"));
    }
    let (kq, kw, c) = (gains.k_q, gains.k_omega, gains.c_q);
    let p_lower = Matrix2::new(2.0 * kq, -c, -c, 1.0) * 0.5;
    let p_upper = Matrix2::new(2.0 * kq / (2.0 - psi_q), c, c, 1.0) * 0.5;
    let w_q = Matrix2::new(c * kq, -c * kw / 2.0, -c * kw / 2.0, kw - c);
    let is_valid =
        positive_definite(&p_lower) && positive_definite(&p_upper) && positive_definite(&w_q);
    Ok(LyapunovCertificate {
        p_lower,
        p_upper,
        w_q,
        psi_q,
        is_valid,
    })
}

/// Value and time derivative of `V = ½‖e_ω‖² + c_q e_ω·e_q + k_q (1 − q·q_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub v: f64,
    pub v_dot: f64,
    /// `−zᵀ W_q z` with `z = (‖e_q‖, ‖e_ω‖)`.
    pub bound: f64,
    pub psi: f64,
}

/// Differentiates `V` along the motion from its definition, given the link
/// angular acceleration `ω̇`.
pub fn lyapunov_rate(
    q: &UnitVector3,
    omega: &Vector3<f64>,
    omega_dot: &Vector3<f64>,
    reference: &DirectionSample,
    gains: &TautGains,
    certificate: &LyapunovCertificate,
) -> LyapunovSample {
    let qd = reference.q_d.as_vec();
    let wd = reference.omega_d;
    let q_dot = omega.cross(q);
    let qd_dot = wd.cross(qd);
    let qh = hat(q);
    let qh_dot = hat(&q_dot);

    let e_q = qd.cross(q);
    let e_w = omega + qh * qh * wd;
    let psi = 1.0 - q.dot(qd);
    let e_q_dot = qd_dot.cross(q) + qd.cross(&q_dot);
    let e_w_dot = omega_dot + (qh_dot * qh + qh * qh_dot) * wd + qh * qh * reference.omega_d_dot;
    let psi_dot = -(q_dot.dot(qd) + q.dot(&qd_dot));

    let v = 0.5 * e_w.norm_squared() + gains.c_q * e_w.dot(&e_q) + gains.k_q * psi;
    let v_dot = e_w.dot(&e_w_dot)
        + gains.c_q * (e_w_dot.dot(&e_q) + e_w.dot(&e_q_dot))
        + gains.k_q * psi_dot;
    let z = Vector2::new(e_q.norm(), e_w.norm());
    LyapunovSample {
        v,
        v_dot,
        bound: -(z.transpose() * certificate.w_q * z)[(0, 0)],
        psi,
    }
}

fn uniform_step(traj: &Trajectory) -> Result<f64> {
    let h = traj
        .step()
        .ok_or_else(|| Error::InvalidState("trajectory needs at least two rows".into()))?;
    for w in traj.rows.windows(2) {
        if ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::InvalidState(format!(
                "non-uniform sampling at t = {}",
                w[0].t
            )));
        }
    }
    Ok(h)
}

fn rates(row: &TrajectoryRow) -> Vec<Vector3<f64>> {
    row.directions
        .iter()
        .zip(&row.velocities)
        .map(|(q, w)| w.cross(q))
        .collect()
}

/// Per-row Euler–Lagrange residual, relative to the size of its terms.
/// End rows and rows whose neighbours straddle a control discontinuity are
/// reported as `None`.
pub fn el_residual(params: &SystemParams, traj: &Trajectory) -> Result<Vec<Option<f64>>> {
    let h = uniform_step(traj)?;
    let n = params.links();
    let c = inertia_coefficients(params);
    let g = params.gravity;
    let rows = &traj.rows;
    let mut out = vec![None; rows.len()];
    for k in 2..rows.len().saturating_sub(2) {
        let row = &rows[k];
        if row.links() != n {
            return Err(Error::InvalidState(
                "link count differs from parameters".into(),
            ));
        }
        if rows[k - 2].diagnostics.phase != rows[k + 2].diagnostics.phase {
            continue;
        }
        // Five-point central difference of q̇ = ω × q.
        let r: Vec<Vec<Vector3<f64>>> = (k - 2..=k + 2).map(|j| rates(&rows[j])).collect();
        let r0 = &r[2];
        let acc: Vec<Vector3<f64>> = (0..n)
            .map(|i| (r[0][i] - r[1][i] * 8.0 + r[3][i] * 8.0 - r[4][i]) / (12.0 * h))
            .collect();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let q = row.directions[i];
            let qh2 = hat(&q) * hat(&q);
            let l = params.link_lengths[i];
            let mut coupling = Vector3::zeros();
            for j in (0..n).filter(|&j| j != i) {
                coupling += acc[j] * c.mij[(i, j)];
            }
            let terms = [
                acc[i] * c.mij[(i, i)],
                -(qh2 * coupling),
                q * (c.mij[(i, i)] * r0[i].norm_squared()),
                qh2 * e3() * (c.mg[i] * l * g),
                qh2 * row.u * l,
            ];
            let sum: Vector3<f64> = terms.iter().sum();
            let scale: f64 = terms.iter().map(|t| t.norm()).sum();
            if scale > 0.0 {
                worst = worst.max(sum.norm() / scale);
            }
        }
        out[k] = Some(worst);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyAudit {
    /// `max |E(t) − E(0)| / |E(0)|`, or the absolute drift when `E(0) = 0`.
    pub drift: f64,
    pub relative: bool,
}

/// Energy drift of an unforced trajectory.
pub fn energy_audit(model: &TetherModel, traj: &Trajectory) -> Result<EnergyAudit> {
    let unforced = traj.rows.iter().all(|r| {
        r.u.norm() == 0.0
            && r.moment.is_none_or(|m| m.norm() == 0.0)
            && r.thrust.is_none_or(|f| f == 0.0)
    });
    if !unforced {
        return Err(Error::InvalidState(
            "energy audit needs u = 0 and M = 0".into(),
        ));
    }
    let energy = |r: &TrajectoryRow| {
        let s = r.state();
        model.energies(&s.chain, &s.body).total()
    };
    let first = traj
        .rows
        .first()
        .ok_or_else(|| Error::InvalidState("empty trajectory".into()))?;
    let e0 = energy(first);
    let max_dev = traj
        .rows
        .iter()
        .map(|r| (energy(r) - e0).abs())
        .fold(0.0, f64::max);
    Ok(if e0 != 0.0 {
        EnergyAudit {
            drift: max_dev / e0.abs(),
            relative: true,
        }
    } else {
        EnergyAudit {
            drift: max_dev,
            relative: false,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingBoundReport {
    pub rows_checked: usize,
    pub monotonicity_violations: usize,
    pub bound_violations: usize,
    /// `‖ė_x(0)‖ / √(2 k_x)`.
    pub bound: f64,
    pub max_error: f64,
}

impl TrackingBoundReport {
    pub fn violations(&self) -> usize {
        self.monotonicity_violations + self.bound_violations
    }
}

/// Checks that `½‖ė_x‖² + (k_x/2)‖e_x‖²` never increases and that
/// `‖e_x‖ ≤ ‖ė_x(0)‖/√(2k_x)` on the tracking phase.
pub fn tracking_bound_check(traj: &Trajectory, k_x: f64) -> Result<TrackingBoundReport> {
    let tracked: Vec<(Vector3<f64>, Vector3<f64>)> = traj
        .rows
        .iter()
        .take_while(|r| r.diagnostics.phase.is_none_or(|p| p == 1))
        .map_while(|r| Some((r.diagnostics.e_x?, r.diagnostics.e_x_rate?)))
        .collect();
    let Some(&(_, ed0)) = tracked.first() else {
        return Err(Error::InvalidState(
            "trajectory has no tracking-phase rows".into(),
        ));
    };
    let bound = ed0.norm() / (2.0 * k_x).sqrt();
    let energy = |(e, ed): &(Vector3<f64>, Vector3<f64>)| {
        0.5 * ed.norm_squared() + 0.5 * k_x * e.norm_squared()
    };
    let monotonicity_violations = tracked
        .windows(2)
        .filter(|w| energy(&w[1]) - energy(&w[0]) > MONOTONICITY_TOLERANCE)
        .count();
    let bound_violations = tracked
        .iter()
        .filter(|(e, _)| e.norm() > bound + MONOTONICITY_TOLERANCE)
        .count();
    Ok(TrackingBoundReport {
        rows_checked: tracked.len(),
        monotonicity_violations,
        bound_violations,
        bound,
        max_error: tracked.iter().map(|(e, _)| e.norm()).fold(0.0, f64::max),
    })
}

/// Relative discrepancies `(state, input)` between the analytic linear model
/// and central differences of the nonlinear link accelerations at the
/// hanging equilibrium.
pub fn linearization_check(
    model: &TetherModel,
    lin: &LinearizedModel,
    h: f64,
) -> Result<(f64, f64)> {
    let n = model.links();
    let d = 2 * n;
    let (a, b) = lin.first_order()?;
    let accel = |x: &DVector<f64>, du: &Vector3<f64>| -> Result<DVector<f64>> {
        let dirs = (0..n)
            .map(|i| {
                UnitVector3::normalize(exp_so3(&Vector3::new(x[2 * i], x[2 * i + 1], 0.0)) * -e3())
            })
            .collect::<Result<Vec<_>>>()?;
        let chain = ChainState::at_rest(dirs);
        let u = ThrustVector(-e3() * (model.params().total_mass() * model.params().gravity) + du);
        let w = model.link_accelerations(&chain, &u)?;
        Ok(DVector::from_iterator(d, w.iter().flat_map(|v| [v.x, v.y])))
    };
    let rel = |fd: DVector<f64>, exact: DVector<f64>| {
        let scale = exact.norm();
        if scale > 0.0 {
            (fd - &exact).norm() / scale
        } else {
            fd.norm()
        }
    };
    let mut state: f64 = 0.0;
    for k in 0..d {
        let mut dx = DVector::zeros(d);
        dx[k] = h;
        let fd = (accel(&dx, &Vector3::zeros())? - accel(&-dx, &Vector3::zeros())?) / (2.0 * h);
        state = state.max(rel(fd, a.view((d, k), (d, 1)).column(0).into_owned()));
    }
    let mut input: f64 = 0.0;
    for k in 0..3 {
        let mut du = Vector3::zeros();
        du[k] = h;
        let zero = DVector::zeros(d);
        let fd = (accel(&zero, &du)? - accel(&zero, &-du)?) / (2.0 * h);
        let exact = b.view((d, k), (d, 1)).column(0).into_owned();
        // Vertical thrust has no first-order effect; compare absolutely.
        input = input.max(if exact.norm() > 0.0 {
            rel(fd, exact)
        } else {
            fd.norm()
        });
    }
    Ok((state, input))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintDrift {
    pub unit_norm: f64,
    pub tangency: f64,
    pub orthogonality: f64,
}

impl ConstraintDrift {
    pub fn max(&self) -> f64 {
        self.unit_norm.max(self.tangency).max(self.orthogonality)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub max_constraint_drift: f64,
    pub constraint_drift: ConstraintDrift,
    pub energy_drift_rel: Option<f64>,
    pub max_el_residual: f64,
    pub el_violations: usize,
    pub bound_violations: Option<usize>,
    pub tracking_bound: Option<TrackingBoundReport>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.max_constraint_drift < 1e-9
            && self.el_violations == 0
            && self.bound_violations.unwrap_or(0) == 0
    }
}

/// Runs every check that applies to `traj`. `k_x` enables the tracking-bound
/// check for flexible-tether runs.
pub fn audit(model: &TetherModel, traj: &Trajectory, k_x: Option<f64>) -> Result<AuditReport> {
    let (unit_norm, tangency, orthogonality) = constraint_drift(traj);
    let drift = ConstraintDrift {
        unit_norm,
        tangency,
        orthogonality,
    };
    let residuals = el_residual(model.params(), traj)?;
    let flagged: Vec<f64> = residuals.iter().flatten().copied().collect();
    let energy = energy_audit(model, traj)
        .ok()
        .filter(|e| e.relative)
        .map(|e| e.drift);
    let tracking = match k_x {
        Some(k) if traj.rows.iter().any(|r| r.diagnostics.phase == Some(1)) => {
            Some(tracking_bound_check(traj, k)?)
        }
        _ => None,
    };
    Ok(AuditReport {
        max_constraint_drift: drift.max(),
        constraint_drift: drift,
        energy_drift_rel: energy,
        max_el_residual: flagged.iter().copied().fold(0.0, f64::max),
        el_violations: flagged.iter().filter(|r| **r > EL_THRESHOLD).count(),
        bound_violations: tracking.map(|t| t.violations()),
        tracking_bound: tracking,
    })
}

/// Link angular accelerations along a recorded trajectory, from the plant
/// model and the recorded thrust vector.
pub fn plant_accelerations(model: &TetherModel, row: &TrajectoryRow) -> Result<Vec<Vector3<f64>>> {
    let s = row.state();
    model.link_accelerations(&s.chain, &ThrustVector(row.u))
}
