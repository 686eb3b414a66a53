//! Separable potentials on the reduced sphere system and the iso-energy
//! comparison between the potential flow and the conformally rescaled
//! kinetic flow.
//!
//! The supported potential family is
//!
//! ```text
//! V(q) = α₁(A⁻¹q,q) + α₂((A⁻¹q,A⁻¹q) - (A⁻¹q,q)²) + Σ_i β_i/q_i² + (ℓ, q),
//! ```
//!
//! the last term covering the symmetric-body case with a linear potential in
//! one coordinate. The potential force enters the momentum equation with its
//! multiplier adjusted so that `(q,q) = 1` and `(q,p) = 0` stay invariant.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::integrate::{hermite_resample, integrate, Trajectory};
use crate::lr::reduced::{ReducedVeselova, SphereState};

/// Coefficients of the separable potential family.
#[derive(Debug, Clone)]
pub struct PotentialParams {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Inverse-square coefficients, one per coordinate.
    pub inv_sq: Vec<f64>,
    /// Linear term coefficients.
    pub linear: Vec<f64>,
}

impl PotentialParams {
    pub fn zero(n: usize) -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 0.0,
            inv_sq: vec![0.0; n],
            linear: vec![0.0; n],
        }
    }

    pub fn quadratic(n: usize, alpha1: f64) -> Self {
        Self {
            alpha1,
            ..Self::zero(n)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.alpha1 == 0.0
            && self.alpha2 == 0.0
            && self.inv_sq.iter().all(|&v| v == 0.0)
            && self.linear.iter().all(|&v| v == 0.0)
    }

    pub fn value(&self, rv: &ReducedVeselova, q: &DVector<f64>) -> Result<f64> {
        let aq = rv.a_inv_mul(q);
        let mut v = self.alpha1 * aq.dot(q) + self.alpha2 * (aq.dot(&aq) - aq.dot(q).powi(2));
        for (i, &b) in self.inv_sq.iter().enumerate() {
            if b != 0.0 {
                if q[i].abs() < 1e-9 {
                    return Err(Error::Singularity(format!(
                        "inverse-square term active on a vanishing coordinate q[{i}]"
                    )));
                }
                v += b / (q[i] * q[i]);
            }
        }
        for (i, &l) in self.linear.iter().enumerate() {
            v += l * q[i];
        }
        Ok(v)
    }

    pub fn gradient(&self, rv: &ReducedVeselova, q: &DVector<f64>) -> Result<DVector<f64>> {
        let n = q.len();
        let aq = rv.a_inv_mul(q);
        let a2q = rv.a_inv_mul(&aq);
        let mut g = &aq * (2.0 * self.alpha1)
            + (&a2q * 2.0 - &aq * (4.0 * aq.dot(q))) * self.alpha2;
        for i in 0..n {
            let b = self.inv_sq[i];
            if b != 0.0 {
                if q[i].abs() < 1e-9 {
                    return Err(Error::Singularity(format!(
                        "inverse-square term active on a vanishing coordinate q[{i}]"
                    )));
                }
                g[i] += -2.0 * b / (q[i] * q[i] * q[i]);
            }
            g[i] += self.linear[i];
        }
        Ok(g)
    }
}

/// The reduced flow with a potential: same velocity map, momentum equation
/// `ṗ = -∇V - Λq` with `Λ = ((q̇,p) - (∇V,q))/(q,q)`.
#[derive(Debug, Clone)]
pub struct ReducedPotentialSystem {
    rv: ReducedVeselova,
    pot: PotentialParams,
}

impl ReducedPotentialSystem {
    pub fn new(rv: ReducedVeselova, pot: PotentialParams) -> Result<Self> {
        if pot.inv_sq.len() != rv.n() || pot.linear.len() != rv.n() {
            return Err(Error::Dimension(
                "potential coefficient count must match the dimension".into(),
            ));
        }
        Ok(Self { rv, pot })
    }

    pub fn reduced(&self) -> &ReducedVeselova {
        &self.rv
    }

    pub fn potential(&self) -> &PotentialParams {
        &self.pot
    }

    /// Dirac multiplier of the potential flow at a chart point.
    pub fn multiplier(&self, st: &SphereState) -> Result<f64> {
        let qdot = self.rv.qdot(&st.q, &st.p);
        let grad = self.pot.gradient(&self.rv, &st.q)?;
        Ok((qdot.dot(&st.p) - grad.dot(&st.q)) / st.q.dot(&st.q))
    }

    pub fn rhs(&self, st: &SphereState) -> Result<SphereState> {
        let qdot = self.rv.qdot(&st.q, &st.p);
        let grad = self.pot.gradient(&self.rv, &st.q)?;
        let lam = (qdot.dot(&st.p) - grad.dot(&st.q)) / st.q.dot(&st.q);
        Ok(SphereState {
            q: qdot,
            p: -grad - &st.q * lam,
        })
    }

    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        let n = self.rv.n();
        move |y: &DVector<f64>| {
            let st = SphereState::unflatten(n, y).expect("chart dimensions fixed");
            self.rhs(&st).expect("potential regular along the run").flatten()
        }
    }

    /// Total energy `L(q, q̇) + V(q)`.
    pub fn energy(&self, st: &SphereState) -> Result<f64> {
        Ok(self.rv.energy(st) + self.pot.value(&self.rv, &st.q)?)
    }
}

/// The kinetic flow of the conformally rescaled metric `(c - V)·g` in the
/// same `(q, p)` chart; on the level `{L + V = c}` it traces the same paths
/// as the potential flow, with multipliers in the ratio `(c - V)`.
#[derive(Debug, Clone)]
pub struct JacobiSystem {
    rv: ReducedVeselova,
    pot: PotentialParams,
    c: f64,
}

impl JacobiSystem {
    pub fn new(rv: ReducedVeselova, pot: PotentialParams, c: f64) -> Result<Self> {
        if pot.inv_sq.len() != rv.n() || pot.linear.len() != rv.n() {
            return Err(Error::Dimension(
                "potential coefficient count must match the dimension".into(),
            ));
        }
        Ok(Self { rv, pot, c })
    }

    fn conformal(&self, q: &DVector<f64>) -> Result<f64> {
        let f = self.c - self.pot.value(&self.rv, q)?;
        if f <= 0.0 {
            return Err(Error::Precondition(format!(
                "energy level {} is below the potential",
                self.c
            )));
        }
        Ok(f)
    }

    /// Velocity map of the rescaled metric.
    pub fn qdot(&self, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.rv.qdot(q, p) / self.conformal(q)?)
    }

    /// Dirac multiplier of the rescaled flow at a chart point.
    pub fn multiplier(&self, st: &SphereState) -> Result<f64> {
        let qdot = self.qdot(&st.q, &st.p)?;
        let kin = self.rv.lagrangian(&st.q, &qdot);
        let grad = self.pot.gradient(&self.rv, &st.q)?;
        Ok((qdot.dot(&st.p) - kin * grad.dot(&st.q)) / st.q.dot(&st.q))
    }

    pub fn rhs(&self, st: &SphereState) -> Result<SphereState> {
        let qdot = self.qdot(&st.q, &st.p)?;
        let kin = self.rv.lagrangian(&st.q, &qdot);
        let grad = self.pot.gradient(&self.rv, &st.q)?;
        let lam = (qdot.dot(&st.p) - kin * grad.dot(&st.q)) / st.q.dot(&st.q);
        Ok(SphereState {
            q: qdot,
            p: -&grad * kin - &st.q * lam,
        })
    }

    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        let n = self.rv.n();
        move |y: &DVector<f64>| {
            let st = SphereState::unflatten(n, y).expect("chart dimensions fixed");
            self.rhs(&st).expect("level set regular").flatten()
        }
    }

    /// Conserved energy of the rescaled metric, `(c - V)·L(q, q̇)`.
    pub fn energy(&self, st: &SphereState) -> Result<f64> {
        let qdot = self.qdot(&st.q, &st.p)?;
        Ok(self.conformal(&st.q)? * self.rv.lagrangian(&st.q, &qdot))
    }
}

/// Outcome of the iso-energy trajectory comparison.
#[derive(Debug, Clone)]
pub struct MaupertuisReport {
    /// sup |q_pot(s) - q_kin(s)| after arc-length matching.
    pub geometric_sup: f64,
    /// sup |Λ - (c - V)·Λ_rescaled| along the potential trajectory.
    pub multiplier_sup: f64,
    /// Arc length over which the two runs were compared.
    pub matched_arc: f64,
}

/// Integrates the potential flow and the rescaled kinetic flow from the
/// same phase point on `{L + V = c}`, matches them by arc length and
/// reports the geometric distance and the pointwise multiplier-ratio
/// residual.
pub fn maupertuis_check(
    rv: &ReducedVeselova,
    pot: &PotentialParams,
    c: f64,
    st0: &SphereState,
    t_final: f64,
    dt: f64,
) -> Result<MaupertuisReport> {
    let n = rv.n();
    let pot_sys = ReducedPotentialSystem::new(rv.clone(), pot.clone())?;
    let jac_sys = JacobiSystem::new(rv.clone(), pot.clone(), c)?;
    let e0 = pot_sys.energy(st0)?;
    if (e0 - c).abs() > 1e-8 * c.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "initial energy {e0} is not on the level {c}"
        )));
    }

    let traj_h = integrate(pot_sys.flat_field(), &st0.flatten(), t_final, dt, &[], None, 1, 1)?;

    // The rescaled flow moves slower by the factor (c - V); size its horizon
    // from the potential range seen by the reference run.
    let mut v_min = f64::INFINITY;
    for y in traj_h.states.iter() {
        let st = SphereState::unflatten(n, y)?;
        v_min = v_min.min(pot.value(rv, &st.q)?);
    }
    let t_j = t_final * (c - v_min) * 1.2;
    let traj_j = integrate(jac_sys.flat_field(), &st0.flatten(), t_j, dt, &[], None, 1, 1)?;

    // Arc lengths of the configuration paths.
    let arc = |traj: &Trajectory, jac: bool| -> Result<Vec<f64>> {
        let mut s = vec![0.0; traj.len()];
        let mut prev_speed = None;
        for (k, y) in traj.states.iter().enumerate() {
            let st = SphereState::unflatten(n, y)?;
            let qd = if jac {
                jac_sys.qdot(&st.q, &st.p)?
            } else {
                rv.qdot(&st.q, &st.p)
            };
            let speed = qd.norm();
            if k > 0 {
                let dt_k = traj.times[k] - traj.times[k - 1];
                s[k] = s[k - 1] + 0.5 * (speed + prev_speed.unwrap()) * dt_k;
            }
            prev_speed = Some(speed);
        }
        Ok(s)
    };
    let s_h = arc(&traj_h, false)?;
    let s_j = arc(&traj_j, true)?;
    let smax = s_h.last().unwrap().min(*s_j.last().unwrap());
    if smax <= 0.0 {
        return Err(Error::Parameter("trajectories cover no arc length".into()));
    }
    let grid_len = 512;
    let grid: Vec<f64> = (0..grid_len)
        .map(|k| smax * k as f64 / (grid_len - 1) as f64)
        .collect();

    let resample_q = |traj: &Trajectory, s: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let col: Vec<f64> = traj.states.iter().map(|y| y[i]).collect();
                hermite_resample(s, &col, &grid)
            })
            .collect()
    };
    let qh = resample_q(&traj_h, &s_h);
    let qj = resample_q(&traj_j, &s_j);
    let mut geometric_sup: f64 = 0.0;
    for k in 0..grid_len {
        let mut d2 = 0.0;
        for i in 0..n {
            let d = qh[i][k] - qj[i][k];
            d2 += d * d;
        }
        geometric_sup = geometric_sup.max(d2.sqrt());
    }

    // Pointwise multiplier ratio along the potential run.
    let mut multiplier_sup: f64 = 0.0;
    for y in traj_h.states.iter().step_by(16) {
        let st = SphereState::unflatten(n, y)?;
        let lam_h = pot_sys.multiplier(&st)?;
        let lam_j = jac_sys.multiplier(&st)?;
        let f = c - pot.value(rv, &st.q)?;
        multiplier_sup = multiplier_sup.max((lam_h - f * lam_j).abs());
    }

    Ok(MaupertuisReport {
        geometric_sup,
        multiplier_sup,
        matched_arc: smax,
    })
}
