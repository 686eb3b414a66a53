//! Three-dimensional vector form of the rigid body with the constraint
//! `(Ω, γ) = 0`, γ fixed in space:
//!
//! ```text
//! I Ω̇ = IΩ × Ω + λγ,   γ̇ = γ × Ω,
//! λ = -(IΩ × Ω, I⁻¹γ) / (I⁻¹γ, γ).
//! ```

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

/// The 3D constrained rigid body in body coordinates.
#[derive(Debug, Clone)]
pub struct Veselova3 {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
}

impl Veselova3 {
    pub fn new(inertia: Matrix3<f64>) -> Result<Self> {
        if (inertia - inertia.transpose()).norm() > 1e-12 {
            return Err(Error::Parameter("inertia tensor must be symmetric".into()));
        }
        let eig = inertia.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter(
                "inertia tensor must be positive definite".into(),
            ));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::Parameter("inertia tensor is singular".into()))?;
        Ok(Self {
            inertia,
            inertia_inv,
        })
    }

    /// The operator matching the determinant-normalized diagonal form on
    /// `so(3)`: a diagonal mass matrix `I = A⁻¹`.
    pub fn from_a_diag(a: &[f64]) -> Result<Self> {
        if a.len() != 3 || a.iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter("need three positive diagonal entries".into()));
        }
        Self::new(Matrix3::from_diagonal(&Vector3::new(
            1.0 / a[0],
            1.0 / a[1],
            1.0 / a[2],
        )))
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    /// Lagrange multiplier keeping `(Ω, γ)` constant.
    pub fn lambda(&self, omega: &Vector3<f64>, gamma: &Vector3<f64>) -> f64 {
        let torque = (self.inertia * omega).cross(omega);
        let ig = self.inertia_inv * gamma;
        -torque.dot(&ig) / ig.dot(gamma)
    }

    /// `(Ω̇, γ̇)`.
    pub fn rhs(&self, omega: &Vector3<f64>, gamma: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let torque = (self.inertia * omega).cross(omega);
        let lambda = self.lambda(omega, gamma);
        let domega = self.inertia_inv * (torque + gamma * lambda);
        (domega, gamma.cross(omega))
    }

    pub fn energy(&self, omega: &Vector3<f64>) -> f64 {
        0.5 * (self.inertia * omega).dot(omega)
    }

    /// Density of the invariant measure in the `(Ω, γ)` chart,
    /// `(γ, I⁻¹γ)^(1/2)`.
    pub fn measure_density(&self, gamma: &Vector3<f64>) -> f64 {
        (self.inertia_inv * gamma).dot(gamma).sqrt()
    }

    /// Field in the flat chart `[Ω | γ]`.
    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        move |y: &DVector<f64>| {
            let (omega, gamma) = split(y);
            let (dw, dg) = self.rhs(&omega, &gamma);
            DVector::from_row_slice(&[dw[0], dw[1], dw[2], dg[0], dg[1], dg[2]])
        }
    }
}

/// Splits the flat chart `[Ω | γ]`.
pub fn split(y: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
    (
        Vector3::new(y[0], y[1], y[2]),
        Vector3::new(y[3], y[4], y[5]),
    )
}

/// Packs `(Ω, γ)` into the flat chart.
pub fn pack(omega: &Vector3<f64>, gamma: &Vector3<f64>) -> DVector<f64> {
    DVector::from_row_slice(&[omega[0], omega[1], omega[2], gamma[0], gamma[1], gamma[2]])
}

/// Random unit `γ` and admissible `Ω ⊥ γ`.
pub fn random_admissible<R: rand::Rng>(rng: &mut R, scale: f64) -> (Vector3<f64>, Vector3<f64>) {
    let mut gamma;
    loop {
        gamma = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if gamma.norm() > 0.3 {
            break;
        }
    }
    gamma /= gamma.norm();
    let mut omega = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ) * scale;
    omega -= gamma * omega.dot(&gamma);
    (omega, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, liouville_residual, Monitor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rest_state_is_an_equilibrium() {
        let sys = Veselova3::from_a_diag(&[1.0, 2.0, 3.0]).unwrap();
        let (dw, dg) = sys.rhs(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0));
        assert!(dw.norm() < 1e-15);
        assert!(dg.norm() < 1e-15);
    }

    #[test]
    fn spherical_tensor_has_no_dynamics() {
        let sys = Veselova3::new(Matrix3::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (omega, gamma) = random_admissible(&mut rng, 1.0);
        assert!(sys.lambda(&omega, &gamma).abs() < 1e-14);
        let (dw, _) = sys.rhs(&omega, &gamma);
        assert!(dw.norm() < 1e-14);
    }

    #[test]
    fn constraint_stays_zero_over_long_runs() {
        let sys = Veselova3::from_a_diag(&[1.0, 2.0, 3.0]).unwrap();
        // gamma an eigenvector of I, omega orthogonal to it.
        let gamma = Vector3::new(0.0, 0.0, 1.0);
        let omega = Vector3::new(0.7, -0.4, 0.0);
        let y0 = pack(&omega, &gamma);
        let constraint = Monitor::new("omega_gamma", 1e-8, |y: &DVector<f64>| {
            let (w, g) = split(y);
            w.dot(&g)
        });
        let traj = integrate(sys.flat_field(), &y0, 100.0, 1e-3, &[constraint], None, 1, 100)
            .unwrap();
        let sup = traj
            .channel("omega_gamma")
            .unwrap()
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup < 1e-10, "constraint residual {sup}");
    }

    #[test]
    fn energy_and_measure_are_invariant() {
        let sys = Veselova3::from_a_diag(&[1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (omega, gamma) = random_admissible(&mut rng, 1.0);
        let y0 = pack(&omega, &gamma);
        let sys_e = sys.clone();
        let energy = Monitor::new("energy", 1e-8, move |y: &DVector<f64>| {
            let (w, _) = split(y);
            sys_e.energy(&w)
        });
        let traj =
            integrate(sys.flat_field(), &y0, 20.0, 1e-3, &[energy], None, 1, 20).unwrap();
        assert!(traj.max_drift("energy").unwrap() < 1e-10);

        // Correct exponent passes, wrong exponent fails by a wide margin.
        let sys_m = sys.clone();
        let good = liouville_residual(
            sys.flat_field(),
            move |y: &DVector<f64>| {
                let (_, g) = split(y);
                sys_m.measure_density(&g)
            },
            &traj,
            1e-5,
            29,
        )
        .unwrap();
        assert!(good < 1e-6, "liouville residual {good}");

        let sys_w = sys.clone();
        let wrong = liouville_residual(
            sys.flat_field(),
            move |y: &DVector<f64>| {
                let (_, g) = split(y);
                sys_w.measure_density(&g).powi(2)
            },
            &traj,
            1e-5,
            29,
        )
        .unwrap();
        assert!(wrong > 1e-2, "negative control residual {wrong}");
    }
}
