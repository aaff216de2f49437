//! Physical model of the tethered quadrotor.
//!
//! The tether is a chain of `n` uniform rigid links joined by ball joints,
//! indexed from the ground pivot (link 1) to the quadrotor (link n). The
//! inertial third axis `e3` points down along gravity, so "up" is `-e3`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::manifold::{e3, hat, project_tangent, RotationMatrix, TangentVector, UnitVector3};

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Reference quadrotor: 0.755 kg with `J = diag(0.0043, 0.0043, 0.0103)`.
pub const REFERENCE_QUAD_MASS: f64 = 0.755;
pub const REFERENCE_QUAD_INERTIA: [f64; 3] = [0.0043, 0.0043, 0.0103];
/// Reference tether: 0.3 kg over 5 m.
pub const REFERENCE_TETHER_MASS: f64 = 0.3;
pub const REFERENCE_TETHER_LENGTH: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// kg
    pub quad_mass: f64,
    /// kg·m², body frame
    pub quad_inertia: Matrix3<f64>,
    /// kg, ground link first
    pub link_masses: Vec<f64>,
    /// m, ground link first
    pub link_lengths: Vec<f64>,
    /// m/s²
    pub gravity: f64,
}

impl SystemParams {
    /// Reference quadrotor with its tether split uniformly into `n` links.
    pub fn reference(n: usize) -> Self {
        Self::uniform(
            REFERENCE_QUAD_MASS,
            Matrix3::from_diagonal(&Vector3::from(REFERENCE_QUAD_INERTIA)),
            n,
            REFERENCE_TETHER_MASS,
            REFERENCE_TETHER_LENGTH,
            DEFAULT_GRAVITY,
        )
    }

    pub fn uniform(
        quad_mass: f64,
        quad_inertia: Matrix3<f64>,
        n: usize,
        tether_mass: f64,
        tether_length: f64,
        gravity: f64,
    ) -> Self {
        let n_f = n as f64;
        Self {
            quad_mass,
            quad_inertia,
            link_masses: vec![tether_mass / n_f; n],
            link_lengths: vec![tether_length / n_f; n],
            gravity,
        }
    }

    pub fn links(&self) -> usize {
        self.link_masses.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.quad_mass + self.link_masses.iter().sum::<f64>()
    }

    pub fn tether_mass(&self) -> f64 {
        self.link_masses.iter().sum()
    }

    pub fn tether_length(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.link_masses.len();
        if n == 0 {
            return Err(Error::param("link_masses", "at least one link is required"));
        }
        if self.link_lengths.len() != n {
            return Err(Error::param(
                "link_lengths",
                format!("expected {n} entries, got {}", self.link_lengths.len()),
            ));
        }
        if !(self.quad_mass > 0.0 && self.quad_mass.is_finite()) {
            return Err(Error::param("quad_mass", "must be positive"));
        }
        if let Some(i) = self
            .link_masses
            .iter()
            .position(|m| !(*m > 0.0 && m.is_finite()))
        {
            return Err(Error::param(
                "link_masses",
                format!("entry {} must be positive", i + 1),
            ));
        }
        if let Some(i) = self
            .link_lengths
            .iter()
            .position(|l| !(*l > 0.0 && l.is_finite()))
        {
            return Err(Error::param(
                "link_lengths",
                format!("entry {} must be positive", i + 1),
            ));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(Error::param("gravity", "must be non-negative"));
        }
        let j = &self.quad_inertia;
        if (j - j.transpose()).norm() > 1e-12 * j.norm() {
            return Err(Error::param("quad_inertia", "must be symmetric"));
        }
        let eig = j.symmetric_eigenvalues();
        if eig.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::param("quad_inertia", "must be positive-definite"));
        }
        Ok(())
    }
}

/// Constant inertia and gravity coefficients of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct InertiaCoefficients {
    /// `M_ij`, symmetric n×n, kg·m²
    pub mij: DMatrix<f64>,
    /// `M_g_i`, kg
    pub mg: DVector<f64>,
}

pub fn inertia_coefficients(params: &SystemParams) -> InertiaCoefficients {
    let n = params.links();
    let m = params.quad_mass;
    let mi = &params.link_masses;
    let l = &params.link_lengths;
    // outboard[i] = Σ_{p>i} m_p
    let mut outboard = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        outboard[i] = outboard[i + 1] + mi[i + 1];
    }
    let mut mij = DMatrix::zeros(n, n);
    for i in 0..n {
        mij[(i, i)] = (m + mi[i] / 3.0) * l[i] * l[i] + outboard[i] * l[i] * l[i];
        for j in 0..i {
            let v = (m + mi[i] / 2.0) * l[i] * l[j] + outboard[i] * l[i] * l[j];
            mij[(i, j)] = v;
            mij[(j, i)] = v;
        }
    }
    let mg = DVector::from_fn(n, |i, _| m + mi[i] / 2.0 + outboard[i]);
    InertiaCoefficients { mij, mg }
}

/// Tether configuration and velocity on `(S²)ⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub directions: Vec<UnitVector3>,
    /// Inertial angular velocities, each perpendicular to its direction.
    pub velocities: Vec<Vector3<f64>>,
}

impl ChainState {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(directions: Vec<UnitVector3>, velocities: Vec<Vector3<f64>>) -> Result<Self> {
        let s = Self {
            directions,
            velocities,
        };
        s.check()?;
        Ok(s)
    }

    pub fn at_rest(directions: Vec<UnitVector3>) -> Self {
        let n = directions.len();
        Self {
            directions,
            velocities: vec![Vector3::zeros(); n],
        }
    }

    /// All links straight up (`-e3`) and at rest.
    pub fn hanging(n: usize) -> Self {
        Self::at_rest(vec![UnitVector3::up(); n])
    }

    pub fn links(&self) -> usize {
        self.directions.len()
    }

    pub fn tangent(&self, i: usize) -> TangentVector {
        TangentVector {
            base: self.directions[i],
            vector: self.velocities[i],
        }
    }

    /// `q̇_i = ω_i × q_i`
    pub fn direction_rate(&self, i: usize) -> Vector3<f64> {
        self.velocities[i].cross(&self.directions[i])
    }

    pub fn check(&self) -> Result<()> {
        if self.directions.len() != self.velocities.len() {
            return Err(Error::InvalidState(
                "direction/velocity count mismatch".into(),
            ));
        }
        for (i, (q, w)) in self.directions.iter().zip(&self.velocities).enumerate() {
            if (q.norm() - 1.0).abs() > Self::TOLERANCE {
                return Err(Error::InvalidState(format!("|q_{}| = {}", i + 1, q.norm())));
            }
            if q.dot(w).abs() > Self::TOLERANCE * w.norm().max(1.0) {
                return Err(Error::InvalidState(format!(
                    "q_{0}·ω_{0} = {1:e}",
                    i + 1,
                    q.dot(w)
                )));
            }
        }
        Ok(())
    }

    /// Removes any component of each `ω_i` along `q_i`.
    pub fn project_velocities(&mut self) {
        for (q, w) in self.directions.iter().zip(self.velocities.iter_mut()) {
            *w = project_tangent(q, w);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub attitude: RotationMatrix,
    /// rad/s, body frame
    pub body_rate: Vector3<f64>,
}

impl BodyState {
    pub fn level() -> Self {
        Self {
            attitude: RotationMatrix::identity(),
            body_rate: Vector3::zeros(),
        }
    }
}

/// Thrust magnitude and body moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    /// N
    pub thrust: f64,
    /// N·m, body frame
    pub moment: Vector3<f64>,
}

impl ControlInput {
    pub fn new(thrust: f64, moment: Vector3<f64>) -> Result<Self> {
        if !thrust.is_finite() || moment.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidState("non-finite control input".into()));
        }
        Ok(Self { thrust, moment })
    }
}

/// Inertial-frame thrust force `u`, N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustVector(pub Vector3<f64>);

impl ThrustVector {
    /// `u = -f R e3`
    pub fn from_input(input: &ControlInput, attitude: &RotationMatrix) -> Self {
        Self(-(attitude.as_matrix() * e3()) * input.thrust)
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energies {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// Parameters together with their derived coefficients.
#[derive(Debug, Clone)]
pub struct TetherModel {
    params: SystemParams,
    coeffs: InertiaCoefficients,
    inertia_inv: Matrix3<f64>,
}

impl TetherModel {
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate()?;
        let coeffs = inertia_coefficients(&params);
        let inertia_inv = params
            .quad_inertia
            .try_inverse()
            .ok_or_else(|| Error::param("quad_inertia", "singular"))?;
        Ok(Self {
            params,
            coeffs,
            inertia_inv,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn coefficients(&self) -> &InertiaCoefficients {
        &self.coeffs
    }

    pub fn links(&self) -> usize {
        self.params.links()
    }

    fn check_links(&self, chain: &ChainState) -> Result<()> {
        if chain.links() != self.links() {
            return Err(Error::InvalidState(format!(
                "chain has {} links, model has {}",
                chain.links(),
                self.links()
            )));
        }
        Ok(())
    }

    /// Block mass matrix of the `q̈` form: `M_ii I` on the diagonal and
    /// `-hat(q_i)² M_ij` off it.
    pub fn mass_matrix(&self, chain: &ChainState) -> DMatrix<f64> {
        let n = self.links();
        let mut out = DMatrix::zeros(3 * n, 3 * n);
        for i in 0..n {
            let qh = hat(&chain.directions[i]);
            let neg_qh2 = -(qh * qh);
            for j in 0..n {
                let block = if i == j {
                    Matrix3::identity() * self.coeffs.mij[(i, i)]
                } else {
                    neg_qh2 * self.coeffs.mij[(i, j)]
                };
                out.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(&block);
            }
        }
        out
    }

    /// Link angular accelerations from the angular-velocity form of the
    /// equations of motion, all links solved simultaneously.
    pub fn link_accelerations(
        &self,
        chain: &ChainState,
        u: &ThrustVector,
    ) -> Result<Vec<Vector3<f64>>> {
        self.check_links(chain)?;
        let n = self.links();
        let g = self.params.gravity;
        let mij = &self.coeffs.mij;
        let hats: Vec<Matrix3<f64>> = chain.directions.iter().map(|q| hat(q)).collect();

        let mut a = DMatrix::zeros(3 * n, 3 * n);
        let mut rhs = DVector::zeros(3 * n);
        for i in 0..n {
            let mut force = e3() * (self.coeffs.mg[i] * self.params.link_lengths[i] * g)
                + u.0 * self.params.link_lengths[i];
            for j in 0..n {
                if i == j {
                    a.fixed_view_mut::<3, 3>(3 * i, 3 * i)
                        .copy_from(&(Matrix3::identity() * mij[(i, i)]));
                } else {
                    a.fixed_view_mut::<3, 3>(3 * i, 3 * j)
                        .copy_from(&(hats[i] * hats[j] * -mij[(i, j)]));
                    force += chain.directions[j].as_vec()
                        * (mij[(i, j)] * chain.velocities[j].norm_squared());
                }
            }
            rhs.fixed_rows_mut::<3>(3 * i)
                .copy_from(&chain.directions[i].cross(&force));
        }
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("link acceleration system is singular".into()))?;
        Ok((0..n)
            .map(|i| sol.fixed_rows::<3>(3 * i).into_owned())
            .collect())
    }

    /// `Ω̇ = J⁻¹(M - Ω × JΩ)`
    pub fn attitude_dynamics(&self, body: &BodyState, moment: &Vector3<f64>) -> Vector3<f64> {
        let w = &body.body_rate;
        let jw = self.params.quad_inertia * w;
        self.inertia_inv * (moment - w.cross(&jw))
    }

    /// Tension of a single-link tether; positive when stretched.
    pub fn tension(&self, q: &UnitVector3, omega: &TangentVector, u: &ThrustVector) -> f64 {
        let m = self.params.quad_mass;
        let l = self.params.link_lengths[0];
        m * self.params.gravity * q.dot(&e3()) + m * l * omega.vector.norm_squared() + q.dot(&u.0)
    }

    /// Splits the quadrotor acceleration as `ẍ = -F - B u`.
    pub fn quad_accel_decomposition(
        &self,
        chain: &ChainState,
    ) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        self.check_links(chain)?;
        let n = self.links();
        let g = self.params.gravity;
        let l = &self.params.link_lengths;
        let mut rhs = DMatrix::zeros(3 * n, 4);
        for j in 0..n {
            let q = &chain.directions[j];
            let qh = hat(q);
            let qh2 = qh * qh;
            let speed2 = chain.direction_rate(j).norm_squared();
            let gj = q.as_vec() * (self.coeffs.mij[(j, j)] * speed2)
                + qh2 * e3() * (self.coeffs.mg[j] * l[j] * g);
            rhs.fixed_view_mut::<3, 1>(3 * j, 0).copy_from(&gj);
            rhs.fixed_view_mut::<3, 3>(3 * j, 1)
                .copy_from(&(qh2 * l[j]));
        }
        let sol = self
            .mass_matrix(chain)
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("tether mass matrix is singular".into()))?;
        let mut f = Vector3::zeros();
        let mut b = Matrix3::zeros();
        for i in 0..n {
            f += sol.fixed_view::<3, 1>(3 * i, 0) * l[i];
            b += sol.fixed_view::<3, 3>(3 * i, 1) * l[i];
        }
        Ok((f, b))
    }

    pub fn energies(&self, chain: &ChainState, body: &BodyState) -> Energies {
        let n = self.links();
        let rates: Vec<Vector3<f64>> = (0..n).map(|i| chain.direction_rate(i)).collect();
        let mut kinetic = 0.0;
        for i in 0..n {
            for j in 0..n {
                kinetic += 0.5 * self.coeffs.mij[(i, j)] * rates[i].dot(&rates[j]);
            }
        }
        kinetic += 0.5
            * body
                .body_rate
                .dot(&(self.params.quad_inertia * body.body_rate));
        let mut weighted = Vector3::zeros();
        for i in 0..n {
            weighted +=
                chain.directions[i].as_vec() * (self.coeffs.mg[i] * self.params.link_lengths[i]);
        }
        Energies {
            kinetic,
            potential: -self.params.gravity * e3().dot(&weighted),
        }
    }

    /// Outer link endpoints `x_1..x_n`; `x_n` is the quadrotor.
    pub fn positions(&self, chain: &ChainState) -> Vec<Vector3<f64>> {
        positions(&self.params.link_lengths, chain)
    }

    pub fn quad_position(&self, chain: &ChainState) -> Vector3<f64> {
        chain
            .directions
            .iter()
            .zip(&self.params.link_lengths)
            .fold(Vector3::zeros(), |acc, (q, l)| acc + q.as_vec() * *l)
    }

    pub fn quad_velocity(&self, chain: &ChainState) -> Vector3<f64> {
        (0..self.links()).fold(Vector3::zeros(), |acc, i| {
            acc + chain.direction_rate(i) * self.params.link_lengths[i]
        })
    }
}

pub fn positions(lengths: &[f64], chain: &ChainState) -> Vec<Vector3<f64>> {
    let mut acc = Vector3::zeros();
    chain
        .directions
        .iter()
        .zip(lengths)
        .map(|(q, l)| {
            acc += q.as_vec() * *l;
            acc
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::manifold::e1;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_unit(rng: &mut StdRng) -> UnitVector3 {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() > 0.1 {
                return UnitVector3::normalize(v).unwrap();
            }
        }
    }

    fn random_chain(rng: &mut StdRng, n: usize, speed: f64) -> ChainState {
        let dirs: Vec<UnitVector3> = (0..n).map(|_| random_unit(rng)).collect();
        let vels = dirs
            .iter()
            .map(|q| {
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                project_tangent(q, &v) * speed
            })
            .collect();
        ChainState::new(dirs, vels).unwrap()
    }

    #[test]
    fn single_link_inertia() {
        let c = inertia_coefficients(&SystemParams::reference(1));
        assert!((c.mij[(0, 0)] - 21.375).abs() < 1e-12);
        assert!((c.mg[0] - 0.905).abs() < 1e-12);
    }

    #[test]
    fn five_link_inertia() {
        let c = inertia_coefficients(&SystemParams::reference(5));
        assert!((c.mij[(0, 0)] - 1.015).abs() < 1e-12);
        assert!((c.mij[(1, 0)] - 0.965).abs() < 1e-12);
        assert_eq!(c.mij, c.mij.transpose());
        assert!(c.mg.iter().all(|m| *m > 0.0));
    }

    #[test]
    fn massless_link_is_point_pendulum() {
        let mut p = SystemParams::reference(1);
        p.link_masses[0] = 1e-12;
        let c = inertia_coefficients(&p);
        assert!((c.mij[(0, 0)] - p.quad_mass * 25.0).abs() < 1e-9);
        assert!((c.mg[0] - p.quad_mass).abs() < 1e-9);
    }

    #[test]
    fn off_diagonal_matches_formula() {
        // General masses/lengths: compare against the stated sums directly.
        let p = SystemParams {
            quad_mass: 0.9,
            quad_inertia: Matrix3::identity(),
            link_masses: vec![0.1, 0.2, 0.05, 0.3],
            link_lengths: vec![1.0, 0.5, 2.0, 0.7],
            gravity: 9.81,
        };
        let c = inertia_coefficients(&p);
        let n = 4;
        for i in 0..n {
            for j in 0..n {
                let k = i.max(j);
                let tail: f64 = p.link_masses[k + 1..].iter().sum();
                let li = p.link_lengths[i];
                let lj = p.link_lengths[j];
                let expect = if i == j {
                    (p.quad_mass + p.link_masses[i] / 3.0) * li * li + tail * li * li
                } else {
                    (p.quad_mass + p.link_masses[k] / 2.0) * li * lj + tail * li * lj
                };
                assert!((c.mij[(i, j)] - expect).abs() < 1e-14);
            }
        }
        assert!((p.total_mass() - 1.55).abs() < 1e-14);
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = SystemParams::reference(2);
        p.link_lengths[1] = 0.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { .. })));
        let mut p = SystemParams::reference(2);
        p.quad_inertia[(0, 0)] = -1.0;
        assert!(p.validate().is_err());
        let mut p = SystemParams::reference(2);
        p.link_masses.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn mass_matrix_blocks() {
        let model = TetherModel::new(SystemParams::reference(1)).unwrap();
        let m = model.mass_matrix(&ChainState::at_rest(vec![UnitVector3::e1()]));
        assert_eq!(m, DMatrix::identity(3, 3) * 21.375);

        let model = TetherModel::new(SystemParams::reference(3)).unwrap();
        let m = model.mass_matrix(&ChainState::hanging(3));
        let mij = &model.coefficients().mij;
        let diag110 = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert!((m.fixed_view::<3, 3>(0, 3).into_owned() - diag110 * mij[(0, 1)]).norm() < 1e-15);
        assert!((m.fixed_view::<3, 3>(6, 0).into_owned() - diag110 * mij[(2, 0)]).norm() < 1e-15);
    }

    #[test]
    fn mass_matrix_quadratic_form_is_twice_kinetic_energy() {
        let mut rng = StdRng::seed_from_u64(7);
        let model = TetherModel::new(SystemParams::reference(3)).unwrap();
        let chain = random_chain(&mut rng, 3, 2.0);
        let qdot = DVector::from_iterator(
            9,
            (0..3).flat_map(|i| chain.direction_rate(i).iter().copied().collect::<Vec<_>>()),
        );
        let quad = (qdot.transpose() * model.mass_matrix(&chain) * &qdot)[(0, 0)];
        let ke = model.energies(&chain, &BodyState::level()).kinetic;
        assert!((quad - 2.0 * ke).abs() < 1e-12 * ke.max(1.0));
    }

    #[test]
    fn mass_matrix_positive_on_constraint_space() {
        let mut rng = StdRng::seed_from_u64(11);
        for &n in &[1usize, 2, 3, 5] {
            let model = TetherModel::new(SystemParams::reference(n)).unwrap();
            for _ in 0..1000 {
                let chain = random_chain(&mut rng, n, 1.0);
                let qdot = DVector::from_iterator(
                    3 * n,
                    (0..n)
                        .flat_map(|i| chain.direction_rate(i).iter().copied().collect::<Vec<_>>()),
                );
                if qdot.norm() < 1e-9 {
                    continue;
                }
                let quad = (qdot.transpose() * model.mass_matrix(&chain) * &qdot)[(0, 0)];
                assert!(quad > 0.0);
            }
        }
    }

    #[test]
    fn hanging_equilibrium_is_static() {
        for n in 1..=5 {
            let model = TetherModel::new(SystemParams::reference(n)).unwrap();
            let u = ThrustVector(-e3() * (model.params().total_mass() * DEFAULT_GRAVITY));
            let acc = model
                .link_accelerations(&ChainState::hanging(n), &u)
                .unwrap();
            assert!(acc.iter().all(|a| a.norm() < 1e-12));
        }
    }

    #[test]
    fn single_link_horizontal_fall() {
        // q = e1, ω = 0, u = 0: ω̇ = α hat(e1) e3 = -α e2.
        let model = TetherModel::new(SystemParams::reference(1)).unwrap();
        let acc = model
            .link_accelerations(
                &ChainState::at_rest(vec![UnitVector3::e1()]),
                &ThrustVector::zero(),
            )
            .unwrap();
        let alpha = 0.905 * 9.81 / (0.855 * 5.0);
        assert!((acc[0] - Vector3::new(0.0, -alpha, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn link_accelerations_are_tangent() {
        let mut rng = StdRng::seed_from_u64(3);
        for &n in &[2usize, 3, 5] {
            let model = TetherModel::new(SystemParams::reference(n)).unwrap();
            for _ in 0..200 {
                let chain = random_chain(&mut rng, n, 3.0);
                let u = ThrustVector(Vector3::new(
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-20.0..20.0),
                ));
                let acc = model.link_accelerations(&chain, &u).unwrap();
                for (a, q) in acc.iter().zip(&chain.directions) {
                    assert!(a.dot(q).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn decomposition_matches_link_accelerations() {
        let mut rng = StdRng::seed_from_u64(5);
        for &n in &[1usize, 2, 3, 5] {
            let model = TetherModel::new(SystemParams::reference(n)).unwrap();
            for _ in 0..50 {
                let chain = random_chain(&mut rng, n, 1.5);
                let u = ThrustVector(Vector3::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-20.0..0.0),
                ));
                let (f, b) = model.quad_accel_decomposition(&chain).unwrap();
                let acc = model.link_accelerations(&chain, &u).unwrap();
                // q̈_i = ω̇_i × q_i + ω_i × q̇_i
                let mut xdd = Vector3::zeros();
                for i in 0..n {
                    let q = chain.directions[i].as_vec();
                    let qdd = acc[i].cross(q) + chain.velocities[i].cross(&chain.direction_rate(i));
                    xdd += qdd * model.params().link_lengths[i];
                }
                assert!((xdd - (-f - b * u.0)).norm() < 1e-9 * (1.0 + xdd.norm()));
            }
        }
    }

    #[test]
    fn input_map_null_space_when_taut() {
        let model = TetherModel::new(SystemParams::reference(5)).unwrap();
        let q = UnitVector3::normalize(Vector3::new(0.3, -0.5, -0.8)).unwrap();
        let chain = ChainState::at_rest(vec![q; 5]);
        let (_, b) = model.quad_accel_decomposition(&chain).unwrap();
        assert!((b * q.as_vec()).norm() / b.norm() < 1e-8);
    }

    #[test]
    fn equilibrium_decomposition_consistent() {
        let model = TetherModel::new(SystemParams::reference(5)).unwrap();
        let (f, b) = model
            .quad_accel_decomposition(&ChainState::hanging(5))
            .unwrap();
        let ud = -e3() * (model.params().total_mass() * DEFAULT_GRAVITY);
        assert!((-f - b * ud).norm() < 1e-12);
    }

    #[test]
    fn attitude_dynamics_examples() {
        let model = TetherModel::new(SystemParams::reference(1)).unwrap();
        assert_eq!(
            model.attitude_dynamics(&BodyState::level(), &Vector3::zeros()),
            Vector3::zeros()
        );
        let spin = BodyState {
            attitude: RotationMatrix::identity(),
            body_rate: e3() * 4.0,
        };
        assert!(model.attitude_dynamics(&spin, &Vector3::zeros()).norm() < 1e-15);
        // Ω = [1,1,0]: JΩ = [0.0043, 0.0043, 0], Ω×JΩ = 0 (equal inertia in x, y).
        let tumble = BodyState {
            attitude: RotationMatrix::identity(),
            body_rate: Vector3::new(1.0, 1.0, 0.0),
        };
        assert!(model.attitude_dynamics(&tumble, &Vector3::zeros()).norm() < 1e-15);
        // Ω = [1,0,1]: Ω×JΩ = [0, 0.0043 - 0.0103, 0]; Ω̇_y = 0.006/0.0043.
        let tumble = BodyState {
            attitude: RotationMatrix::identity(),
            body_rate: Vector3::new(1.0, 0.0, 1.0),
        };
        let wd = model.attitude_dynamics(&tumble, &Vector3::zeros());
        assert!((wd - Vector3::new(0.0, 0.006 / 0.0043, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn tension_examples() {
        let model = TetherModel::new(SystemParams::reference(1)).unwrap();
        let mg = REFERENCE_QUAD_MASS * DEFAULT_GRAVITY;
        let up = UnitVector3::up();
        let t = model.tension(
            &up,
            &TangentVector::zero(up),
            &ThrustVector(up.into_inner() * (5.0 + mg)),
        );
        assert!((t - 5.0).abs() < 1e-12);
        let t = model.tension(&up, &TangentVector::zero(up), &ThrustVector::zero());
        assert!((t + mg).abs() < 1e-12);
        let q = UnitVector3::e1();
        let w = TangentVector::new(q, e3() * 2.0).unwrap();
        let t = model.tension(&q, &w, &ThrustVector::zero());
        assert!((t - REFERENCE_QUAD_MASS * 5.0 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        let model = TetherModel::new(SystemParams::reference(3)).unwrap();
        let e = model.energies(&ChainState::hanging(3), &BodyState::level());
        assert_eq!(e.kinetic, 0.0);
        let c = model.coefficients();
        let expect: f64 = (0..3)
            .map(|i| c.mg[i] * model.params().link_lengths[i])
            .sum::<f64>()
            * DEFAULT_GRAVITY;
        assert!((e.potential - expect).abs() < 1e-12);
    }

    #[test]
    fn position_examples() {
        let model = TetherModel::new(SystemParams::reference(5)).unwrap();
        let x = model.positions(&ChainState::hanging(5));
        assert!((x[4] + e3() * 5.0).norm() < 1e-14);

        let model = TetherModel::new(SystemParams::reference(1)).unwrap();
        let x = model.positions(&ChainState::at_rest(vec![UnitVector3::e1()]));
        assert_eq!(x[0], e1() * 5.0);

        let mut rng = StdRng::seed_from_u64(9);
        let model = TetherModel::new(SystemParams::reference(4)).unwrap();
        let chain = random_chain(&mut rng, 4, 0.0);
        let x = model.positions(&chain);
        let mut prev = Vector3::zeros();
        for (xi, l) in x.iter().zip(&model.params().link_lengths) {
            assert!(((xi - prev).norm() - l).abs() < 1e-14);
            prev = *xi;
        }
    }
}
