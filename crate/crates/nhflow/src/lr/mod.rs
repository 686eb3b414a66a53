//! LR systems: left-invariant metric, right-invariant constraints.
//!
//! The closed form of the equations lives on the product of `1 + ρ` copies
//! of the algebra, in the momentum `x` and the transported constraint
//! vectors `αⁱ = g⁻¹·aⁱ·g`:
//!
//! ```text
//! ẋ  = [x, A x] + Σ λ_i αⁱ,      α̇ⁱ = [αⁱ, A x],
//! ```
//!
//! with the multipliers keeping `⟨αⁱ, A x⟩ = 0`. The flow preserves the
//! measure with density `√det(⟨A αⁱ, αʲ⟩)`.
//!
//! Submodules cover the concrete integrable family on `SO(n)`: the
//! three-dimensional vector form ([`veselova3`]), the reduction to the unit
//! sphere in redundant coordinates ([`reduced`]), separable potentials and
//! the iso-energy comparison of scaled-metric flows ([`potential`]), the
//! correspondence with the quadratic-potential sphere system ([`neumann`]),
//! geodesics on a quadric with their isospectral matrix ([`quadric`]),
//! frame reconstruction on the group ([`reconstruct`]) and spheroconic
//! separation ([`spheroconic`]).

pub mod neumann;
pub mod potential;
pub mod quadric;
pub mod reconstruct;
pub mod reduced;
pub mod spheroconic;
pub mod veselova3;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::liealg::{commutator, killing_inner, project_span, wedge_dim, AlgebraElement};
use crate::operators::InertiaOperator;

/// State of the closed LR system: momentum plus transported constraint
/// vectors.
#[derive(Debug, Clone)]
pub struct LrState {
    pub x: AlgebraElement,
    pub alphas: Vec<AlgebraElement>,
}

impl LrState {
    pub fn n(&self) -> usize {
        self.x.n()
    }

    /// Flat chart `[x | α¹ | … | α^ρ]` in wedge coordinates.
    pub fn flatten(&self) -> DVector<f64> {
        let m = wedge_dim(self.n());
        let mut out = DVector::zeros(m * (1 + self.alphas.len()));
        out.rows_mut(0, m).copy_from(&self.x.to_wedge_coords());
        for (k, a) in self.alphas.iter().enumerate() {
            out.rows_mut(m * (k + 1), m).copy_from(&a.to_wedge_coords());
        }
        out
    }

    pub fn unflatten(n: usize, rho: usize, y: &DVector<f64>) -> Result<Self> {
        let m = wedge_dim(n);
        if y.len() != m * (1 + rho) {
            return Err(Error::Dimension(format!(
                "expected {} coordinates, got {}",
                m * (1 + rho),
                y.len()
            )));
        }
        let x = AlgebraElement::from_wedge_coords(n, &y.rows(0, m).into_owned())?;
        let alphas = (0..rho)
            .map(|k| {
                AlgebraElement::from_wedge_coords(n, &y.rows(m * (k + 1), m).into_owned())
            })
            .collect::<Result<_>>()?;
        Ok(Self { x, alphas })
    }
}

/// An LR system on `so(n)` with inverse inertia `A`.
#[derive(Debug, Clone)]
pub struct LrSystem {
    a_op: InertiaOperator,
}

impl LrSystem {
    pub fn new(a_op: InertiaOperator) -> Self {
        Self { a_op }
    }

    pub fn n(&self) -> usize {
        self.a_op.n()
    }

    pub fn operator(&self) -> &InertiaOperator {
        &self.a_op
    }

    pub fn energy(&self, st: &LrState) -> Result<f64> {
        Ok(0.5 * killing_inner(&self.a_op.apply(&st.x)?, &st.x)?)
    }

    /// Constraint values `⟨αⁱ, A x⟩` (zero on the admissible manifold).
    pub fn constraints(&self, st: &LrState) -> Result<Vec<f64>> {
        let ax = self.a_op.apply(&st.x)?;
        st.alphas.iter().map(|a| killing_inner(a, &ax)).collect()
    }

    /// Pairwise products `⟨αⁱ, αʲ⟩`, `i ≤ j` (an orthonormal frame stays
    /// orthonormal along the flow).
    pub fn frame_products(&self, st: &LrState) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for i in 0..st.alphas.len() {
            for j in i..st.alphas.len() {
                out.push(killing_inner(&st.alphas[i], &st.alphas[j])?);
            }
        }
        Ok(out)
    }

    /// Time derivative of the state; multipliers solve the Gram system built
    /// from the full derivative of the constraints.
    pub fn rhs(&self, st: &LrState) -> Result<LrState> {
        let ax = self.a_op.apply(&st.x)?;
        let free = commutator(&st.x, &ax)?;
        let rho = st.alphas.len();
        let alpha_dots: Vec<AlgebraElement> = st
            .alphas
            .iter()
            .map(|a| commutator(a, &ax))
            .collect::<Result<_>>()?;
        let x_dot = if rho == 0 {
            free
        } else {
            let a_free = self.a_op.apply(&free)?;
            let mut gram = DMatrix::zeros(rho, rho);
            let mut rhs = DVector::zeros(rho);
            for (i, ai) in st.alphas.iter().enumerate() {
                // d/dt <alpha^i, A x> = <alpha_dot^i, A x> + <alpha^i, A x_dot>.
                rhs[i] = -killing_inner(ai, &a_free)? - killing_inner(&alpha_dots[i], &ax)?;
                for (j, aj) in st.alphas.iter().enumerate() {
                    gram[(i, j)] = killing_inner(ai, &self.a_op.apply(aj)?)?;
                }
            }
            let lambda = gram.lu().solve(&rhs).ok_or_else(|| {
                Error::DegenerateConstraint("LR multiplier gram matrix is singular".into())
            })?;
            let mut out = free;
            for (l, a) in lambda.iter().zip(st.alphas.iter()) {
                out = out.add(&a.scale(*l))?;
            }
            out
        };
        Ok(LrState {
            x: x_dot,
            alphas: alpha_dots,
        })
    }

    /// Density `√det(⟨A αⁱ, αʲ⟩)` of the invariant measure.
    pub fn measure_density(&self, alphas: &[AlgebraElement]) -> Result<f64> {
        let rho = alphas.len();
        if rho == 0 {
            return Ok(1.0);
        }
        let mut gram = DMatrix::zeros(rho, rho);
        for (i, ai) in alphas.iter().enumerate() {
            for (j, aj) in alphas.iter().enumerate() {
                gram[(i, j)] = killing_inner(&self.a_op.apply(ai)?, aj)?;
            }
        }
        let det = gram.determinant();
        if det <= 0.0 {
            return Err(Error::Measure(format!(
                "gram determinant not positive: {det:.3e}"
            )));
        }
        Ok(det.sqrt())
    }

    /// Initial state with `αⁱ` equal to the given orthonormal constraint
    /// vectors and an admissible random momentum.
    pub fn random_state<R: Rng>(
        &self,
        alphas: &[AlgebraElement],
        rng: &mut R,
        scale: f64,
    ) -> Result<LrState> {
        let x = AlgebraElement::random(self.n(), rng).scale(scale);
        let images: Vec<AlgebraElement> = alphas
            .iter()
            .map(|a| self.a_op.apply(a))
            .collect::<Result<_>>()?;
        let x = if images.is_empty() {
            x
        } else {
            let leak = project_span(&x, &images)?;
            x.sub(&leak)?
        };
        Ok(LrState {
            x,
            alphas: alphas.to_vec(),
        })
    }

    /// Random admissible state rescaled onto the energy level `energy`.
    pub fn random_state_with_energy<R: Rng>(
        &self,
        alphas: &[AlgebraElement],
        rng: &mut R,
        energy: f64,
    ) -> Result<LrState> {
        let st = self.random_state(alphas, rng, 1.0)?;
        let e = self.energy(&st)?;
        if e <= 0.0 {
            return Err(Error::NonGenericData("sampled a zero-energy state".into()));
        }
        Ok(LrState {
            x: st.x.scale((energy / e).sqrt()),
            alphas: st.alphas,
        })
    }

    /// Field in the flat chart, for the integration engine.
    pub fn flat_field(&self, rho: usize) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        let n = self.n();
        move |y: &DVector<f64>| {
            let st = LrState::unflatten(n, rho, y).expect("chart dimensions fixed");
            self.rhs(&st).expect("rhs evaluation").flatten()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, liouville_residual, Monitor};
    use crate::liealg::hat;
    use crate::operators::{veselova_distribution, veselova_inertia};
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn veselova_lr(n: usize, a: &[f64]) -> (LrSystem, Vec<AlgebraElement>) {
        let iop = veselova_inertia(a).unwrap();
        let sys = LrSystem::new(iop.inverse().unwrap());
        let alphas = veselova_distribution(n).unwrap().annihilator().to_vec();
        (sys, alphas)
    }

    #[test]
    fn equilibrium_at_zero_momentum() {
        let (sys, alphas) = veselova_lr(3, &[1.0, 2.0, 3.0]);
        let st = LrState {
            x: AlgebraElement::zeros(3),
            alphas,
        };
        let dot = sys.rhs(&st).unwrap();
        assert!(dot.x.norm() < 1e-15);
        for a in &dot.alphas {
            assert!(a.norm() < 1e-15);
        }
    }

    #[test]
    fn identity_operator_freezes_momentum() {
        // A = Id: [x, x] = 0 and the multipliers vanish; alphas rotate.
        let sys = LrSystem::new(InertiaOperator::identity(4));
        let alphas = veselova_distribution(4).unwrap().annihilator().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let st = sys.random_state(&alphas, &mut rng, 1.0).unwrap();
        let dot = sys.rhs(&st).unwrap();
        assert!(dot.x.norm() < 1e-13);
        for (da, a) in dot.alphas.iter().zip(st.alphas.iter()) {
            let want = commutator(a, &st.x).unwrap();
            assert!(da.sub(&want).unwrap().norm() < 1e-13);
        }
    }

    #[test]
    fn rhs_keeps_constraints_and_frame() {
        let (sys, alphas) = veselova_lr(4, &[1.0, 2.0, 3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let st = sys.random_state(&alphas, &mut rng, 1.0).unwrap();
        for c in sys.constraints(&st).unwrap() {
            assert!(c.abs() < 1e-13);
        }
        // d/dt <alpha^i, A x> = 0 exactly at the solution.
        let dot = sys.rhs(&st).unwrap();
        let ax = sys.operator().apply(&st.x).unwrap();
        let axdot = sys.operator().apply(&dot.x).unwrap();
        for (a, da) in st.alphas.iter().zip(dot.alphas.iter()) {
            let ddt = killing_inner(da, &ax).unwrap() + killing_inner(a, &axdot).unwrap();
            assert!(ddt.abs() < 1e-13);
        }
    }

    #[test]
    fn matches_vector_form_on_so3() {
        // Same flow as the 3-vector realization under the hat map.
        let a = [1.0, 2.0, 3.0];
        let (sys, _) = veselova_lr(3, &a);
        let v3 = veselova3::Veselova3::from_a_diag(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..10 {
            let gamma = {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                v / v.norm()
            };
            let mut omega = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            omega -= gamma * omega.dot(&gamma);
            let (domega, dgamma) = v3.rhs(&omega, &gamma);

            let x = hat(&(v3.inertia() * omega));
            let st = LrState {
                x,
                alphas: vec![hat(&gamma)],
            };
            let dot = sys.rhs(&st).unwrap();
            assert!(
                dot.x.sub(&hat(&(v3.inertia() * domega))).unwrap().norm() < 1e-12,
                "momentum equations disagree"
            );
            assert!(dot.alphas[0].sub(&hat(&dgamma)).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn measure_density_identity_and_rank_one() {
        let sys = LrSystem::new(InertiaOperator::identity(4));
        let alphas = veselova_distribution(4).unwrap().annihilator().to_vec();
        assert_abs_diff_eq!(sys.measure_density(&alphas).unwrap(), 1.0, epsilon = 1e-14);

        // Single constraint: sqrt of a 1x1 gram.
        let (sys, alphas) = veselova_lr(3, &[1.0, 2.0, 3.0]);
        let want = killing_inner(
            &sys.operator().apply(&alphas[0]).unwrap(),
            &alphas[0],
        )
        .unwrap()
        .sqrt();
        assert_abs_diff_eq!(sys.measure_density(&alphas).unwrap(), want, epsilon = 1e-14);
    }

    #[test]
    fn conservation_and_liouville_along_the_flow() {
        let (sys, alphas) = veselova_lr(4, &[1.0, 2.0, 3.0, 4.0]);
        let rho = alphas.len();
        let n = sys.n();
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let st0 = sys.random_state_with_energy(&alphas, &mut rng, 0.5).unwrap();

        let sys2 = sys.clone();
        let energy = Monitor::new("energy", 1e-8, move |y: &DVector<f64>| {
            let st = LrState::unflatten(n, rho, y).unwrap();
            sys2.energy(&st).unwrap()
        });
        let traj = integrate(
            sys.flat_field(rho),
            &st0.flatten(),
            10.0,
            1e-3,
            &[energy],
            None,
            1,
            10,
        )
        .unwrap();
        assert!(traj.max_drift("energy").unwrap() < 1e-10);

        // Constraints and frame products stay put without projection.
        let last = LrState::unflatten(n, rho, traj.states.last().unwrap()).unwrap();
        for c in sys.constraints(&last).unwrap() {
            assert!(c.abs() < 1e-10);
        }
        let fp0 = sys.frame_products(&st0).unwrap();
        let fp1 = sys.frame_products(&last).unwrap();
        for (a, b) in fp0.iter().zip(fp1.iter()) {
            assert!((a - b).abs() < 1e-10);
        }

        // Liouville residual of the gram-determinant density.
        let sys3 = sys.clone();
        let density = move |y: &DVector<f64>| {
            let st = LrState::unflatten(n, rho, y).unwrap();
            sys3.measure_density(&st.alphas).unwrap()
        };
        let res = liouville_residual(sys.flat_field(rho), density, &traj, 1e-5, 97).unwrap();
        assert!(res < 1e-6, "liouville residual {res}");
    }
}
