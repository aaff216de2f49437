//! Discrete-time linear-quadratic regulator on a zero-order-hold
//! discretization, with a continuous-time stability certificate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_DOUBLINGS: usize = 100;
const CONVERGENCE: f64 = 1e-13;

/// `(A_d, B_d)` of `ż = A z + B u` under a zero-order hold of length `dt`.
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = aug.exp();
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    )
}

/// Stabilizing solution of `P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q` by the
/// structure-preserving doubling iteration. Returns `P` and the number of
/// doublings used.
pub fn dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize)> {
    let n = a.nrows();
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("input weight is singular".into()))?;
    let id = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r_inv * b.transpose();
    let mut hk = q.clone();
    for k in 0..MAX_DOUBLINGS {
        let w = (&id + &gk * &hk)
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Synthesis(format!("singular update at doubling {k}")))?;
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let change = (&h_next - &hk).norm() / h_next.norm();
        ak = a_next;
        gk = (&g_next + g_next.transpose()) * 0.5;
        hk = (&h_next + h_next.transpose()) * 0.5;
        if !change.is_finite() {
            return Err(Error::Synthesis(format!(
                "Riccati iterate became non-finite at doubling {k}"
            )));
        }
        if change < CONVERGENCE {
            return Ok((hk, k + 1));
        }
    }
    Err(Error::Synthesis(format!(
        "Riccati doubling did not converge in {MAX_DOUBLINGS} iterations; last ‖A_k‖ = {:.3e}",
        ak.norm()
    )))
}

/// Relative residual of the discrete Riccati equation.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let btp = b.transpose() * p;
    let s = r + &btp * b;
    let Some(s_inv) = s.try_inverse() else {
        return f64::INFINITY;
    };
    let rhs = a.transpose() * p * a - a.transpose() * btp.transpose() * s_inv * &btp * a + q;
    (p - rhs).norm() / p.norm()
}

/// `K = (R + BᵀPB)⁻¹ BᵀPA`, so that `u = −K z`.
pub fn discrete_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let btp = b.transpose() * p;
    (r + &btp * b)
        .lu()
        .solve(&(btp * a))
        .ok_or_else(|| Error::Synthesis("gain equation is singular".into()))
}

/// Largest real part among the eigenvalues of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoh_of_double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (ad, bd) = zoh(&a, &b, 0.1);
        assert!((ad - DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).norm() < 1e-14);
        assert!((bd - DMatrix::from_row_slice(2, 1, &[0.005, 0.1])).norm() < 1e-14);
    }

    #[test]
    fn scalar_riccati_closed_form() {
        // p = a²p − a²p²b²/(r + b²p) + q, solved as a quadratic in p.
        let (a, b, q, r) = (1.2, 0.5, 2.0, 3.0);
        let (p, _) = dare(
            &DMatrix::from_element(1, 1, a),
            &DMatrix::from_element(1, 1, b),
            &DMatrix::from_element(1, 1, q),
            &DMatrix::from_element(1, 1, r),
        )
        .unwrap();
        // b²p² + (r − a²r − q b²)p − q r = 0
        let (c2, c1, c0) = (b * b, r - a * a * r - q * b * b, -q * r);
        let expect = (-c1 + (c1 * c1 - 4.0 * c2 * c0).sqrt()) / (2.0 * c2);
        assert!((p[(0, 0)] - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn riccati_residual_small_for_oscillator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (ad, bd) = zoh(&a, &b, 1e-3);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::from_element(1, 1, 10.0);
        let (p, _) = dare(&ad, &bd, &q, &r).unwrap();
        assert!(dare_residual(&ad, &bd, &q, &r, &p) < 1e-9);
        let k = discrete_gain(&ad, &bd, &r, &p).unwrap();
        assert!(spectral_abscissa(&(a - b * k)) < 0.0);
    }

    #[test]
    fn abscissa_of_known_spectrum() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, -3.0, -1.0]);
        assert!((spectral_abscissa(&a) + 1.0).abs() < 1e-12);
    }
}
