//! Reduction of the constrained rigid body to the unit sphere in redundant
//! coordinates `(q, p) ∈ ℝ²ⁿ`, with the diagonal metric defined by
//! `A = diag(A_1..A_n)`:
//!
//! ```text
//! q̇ = (det A/(q,Aq)) [A⁻¹p - ((p,A⁻¹q)/(q,q)) q],
//! ṗ = -det A [(p,A⁻¹p)(q,q) - (p,q)(q,A⁻¹p)] / ((q,Aq)(q,q)²) · q.
//! ```
//!
//! `(q,q) = 1` and `(q,p) = 0` are conserved identically, the flow keeps the
//! measure with density `(Aq,q)^{-(n-2)/2}`, and after the time substitution
//! `dτ = √(det A/(Aq,q)) dt` the motion is a geodesic flow with Lagrangian
//! `L*`.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::integrate::{reparameterize, Channel, Trajectory};

/// Sphere state in redundant coordinates.
#[derive(Debug, Clone)]
pub struct SphereState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl SphereState {
    pub fn flatten(&self) -> DVector<f64> {
        let n = self.q.len();
        let mut y = DVector::zeros(2 * n);
        y.rows_mut(0, n).copy_from(&self.q);
        y.rows_mut(n, n).copy_from(&self.p);
        y
    }

    pub fn unflatten(n: usize, y: &DVector<f64>) -> Result<Self> {
        if y.len() != 2 * n {
            return Err(Error::Dimension(format!(
                "expected {} coordinates, got {}",
                2 * n,
                y.len()
            )));
        }
        Ok(Self {
            q: y.rows(0, n).into_owned(),
            p: y.rows(n, n).into_owned(),
        })
    }

    /// Residuals of the defining constraints `(q,q) - 1` and `(q,p)`.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        (self.q.dot(&self.q) - 1.0, self.q.dot(&self.p))
    }
}

/// The reduced system on the unit sphere for a diagonal metric.
#[derive(Debug, Clone)]
pub struct ReducedVeselova {
    a: DVector<f64>,
    det_a: f64,
}

impl ReducedVeselova {
    pub fn new(a: &[f64]) -> Result<Self> {
        if a.len() < 2 {
            return Err(Error::Parameter("need at least two diagonal entries".into()));
        }
        if a.iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter("diagonal entries must be positive".into()));
        }
        Ok(Self {
            a: DVector::from_row_slice(a),
            det_a: a.iter().product(),
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn a_diag(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn det_a(&self) -> f64 {
        self.det_a
    }

    pub fn a_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_mul(&self.a)
    }

    pub fn a_inv_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_div(&self.a)
    }

    /// Velocity map `q̇(q, p)`.
    pub fn qdot(&self, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let qaq = self.a_mul(q).dot(q);
        let ainv_p = self.a_inv_mul(p);
        let coeff = p.dot(&self.a_inv_mul(q)) / q.dot(q);
        (ainv_p - q * coeff) * (self.det_a / qaq)
    }

    /// Momenta from velocities, the inverse of [`Self::qdot`] on the
    /// constraint manifold.
    pub fn p_from_qdot(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        let aq = self.a_mul(q);
        let aqdot = self.a_mul(qdot);
        (aqdot * aq.dot(q) - &aq * aq.dot(qdot)) / self.det_a
    }

    /// Kinetic Lagrangian in velocities.
    pub fn lagrangian(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
        let aq = self.a_mul(q);
        let aqd = self.a_mul(qdot);
        (aqd.dot(qdot) * aq.dot(q) - aq.dot(qdot).powi(2)) / (2.0 * self.det_a)
    }

    /// Energy as a function of `(q, p)`.
    pub fn energy(&self, st: &SphereState) -> f64 {
        self.lagrangian(&st.q, &self.qdot(&st.q, &st.p))
    }

    /// Time derivative of the state.
    pub fn rhs(&self, st: &SphereState) -> SphereState {
        let q = &st.q;
        let p = &st.p;
        let qq = q.dot(q);
        let qaq = self.a_mul(q).dot(q);
        let ainv_p = self.a_inv_mul(p);
        let q_dot = (&ainv_p - q * (ainv_p.dot(q) / qq)) * (self.det_a / qaq);
        let lam = self.det_a * (p.dot(&ainv_p) * qq - p.dot(q) * q.dot(&ainv_p))
            / (qaq * qq * qq);
        SphereState {
            q: q_dot,
            p: q * (-lam),
        }
    }

    /// Field in the flat chart `[q | p]`.
    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        let n = self.n();
        move |y: &DVector<f64>| {
            let st = SphereState::unflatten(n, y).expect("chart dimensions fixed");
            self.rhs(&st).flatten()
        }
    }

    /// Density `(Aq,q)^{-(n-2)/2}` of the invariant measure in the
    /// `(q, p)` chart.
    pub fn measure_density(&self, q: &DVector<f64>) -> f64 {
        let e = -(self.n() as f64 - 2.0) / 2.0;
        self.a_mul(q).dot(q).powf(e)
    }

    /// Reducing-multiplier rate `√(det A/(Aq,q))`.
    pub fn multiplier_rate(&self, q: &DVector<f64>) -> f64 {
        (self.det_a / self.a_mul(q).dot(q)).sqrt()
    }

    /// Geodesic Lagrangian of the rescaled time,
    /// `L*(q, q') = ((Aq',q')(Aq,q) - (Aq,q')²) / (2(q,Aq))`.
    pub fn lstar(&self, q: &DVector<f64>, qprime: &DVector<f64>) -> f64 {
        let aq = self.a_mul(q);
        let aqp = self.a_mul(qprime);
        (aqp.dot(qprime) * aq.dot(q) - aq.dot(qprime).powi(2)) / (2.0 * aq.dot(q))
    }

    /// Drift-repair hook: renormalizes `q` and removes the `p` component
    /// along `q`.
    pub fn projection_hook(&self) -> impl Fn(&mut DVector<f64>) + '_ {
        let n = self.n();
        move |y: &mut DVector<f64>| {
            let mut st = SphereState::unflatten(n, y).expect("chart dimensions fixed");
            let nq = st.q.norm();
            st.q /= nq;
            let qp = st.q.dot(&st.p);
            st.p -= &st.q * qp;
            y.copy_from(&st.flatten());
        }
    }

    /// Random state on the constraint manifold with `|q| = 1`, `(q,p) = 0`.
    pub fn random_state<R: Rng>(&self, rng: &mut R, scale: f64) -> SphereState {
        let n = self.n();
        let mut q;
        loop {
            q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            if q.norm() > 0.3 {
                break;
            }
        }
        q /= q.norm();
        let mut p = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)) * scale;
        let qp = q.dot(&p);
        p -= &q * qp;
        SphereState { q, p }
    }

    /// Random state rescaled onto the kinetic-energy level `energy`.
    pub fn random_state_with_energy<R: Rng>(&self, rng: &mut R, energy: f64) -> SphereState {
        let mut st = self.random_state(rng, 1.0);
        let e = self.energy(&st);
        st.p *= (energy / e).sqrt();
        st
    }
}

/// Applies the reducing-multiplier substitution `dτ = √(det A/(Aq,q)) dt`
/// to a `(q, p)` trajectory and attaches the geodesic energy `L*` as a
/// monitor channel.
pub fn chaplygin_reparameterize(rv: &ReducedVeselova, traj: &Trajectory) -> Result<Trajectory> {
    let n = rv.n();
    let mut out = reparameterize(traj, |y: &DVector<f64>| {
        let st = SphereState::unflatten(n, y).expect("chart dimensions fixed");
        rv.multiplier_rate(&st.q)
    })?;
    let lstar: Vec<f64> = out
        .states
        .iter()
        .map(|y| {
            let st = SphereState::unflatten(n, y).expect("chart dimensions fixed");
            let qprime = rv.qdot(&st.q, &st.p) / rv.multiplier_rate(&st.q);
            rv.lstar(&st.q, &qprime)
        })
        .collect();
    out.channels.push(Channel {
        name: "lstar".into(),
        values: lstar,
    });
    Ok(out)
}
