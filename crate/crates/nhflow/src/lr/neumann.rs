//! The sphere system with quadratic potential `½(A⁻¹q, q)` and its
//! correspondence with the reduced constrained flow.
//!
//! On the iso-energy level `L = h`, the substitution
//! `dτ₁ = √(det A · 2h/(Aq,q)) dt` maps reduced trajectories onto solutions
//! of `q'' = -A⁻¹q + λq` with the integral
//! `F₀ = (Aq',q')(Aq,q) - (Aq,q')² - (Aq,q)` equal to zero, and back.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::integrate::{integrate, reparameterize, Trajectory};
use crate::lr::reduced::{ReducedVeselova, SphereState};

/// Point and velocity on the unit sphere, parameterized by the rescaled
/// time.
#[derive(Debug, Clone)]
pub struct NeumannState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
}

impl NeumannState {
    pub fn flatten(&self) -> DVector<f64> {
        let n = self.q.len();
        let mut y = DVector::zeros(2 * n);
        y.rows_mut(0, n).copy_from(&self.q);
        y.rows_mut(n, n).copy_from(&self.dq);
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
            dq: y.rows(n, n).into_owned(),
        })
    }

    pub fn constraint_residuals(&self) -> (f64, f64) {
        (self.q.dot(&self.q) - 1.0, self.q.dot(&self.dq))
    }
}

/// The quadratic-potential sphere system for diagonal `A`.
#[derive(Debug, Clone)]
pub struct NeumannSystem {
    a: DVector<f64>,
}

impl NeumannSystem {
    pub fn new(a: &[f64]) -> Result<Self> {
        if a.len() < 2 || a.iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter(
                "need at least two positive diagonal entries".into(),
            ));
        }
        Ok(Self {
            a: DVector::from_row_slice(a),
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// `q'' = -A⁻¹q + λq` with `λ = (A⁻¹q, q) - (q', q')`, the unique
    /// multiplier keeping `(q, q) = 1`.
    pub fn rhs(&self, st: &NeumannState) -> NeumannState {
        let ainv_q = st.q.component_div(&self.a);
        let lambda = ainv_q.dot(&st.q) - st.dq.dot(&st.dq);
        NeumannState {
            q: st.dq.clone(),
            dq: -ainv_q + &st.q * lambda,
        }
    }

    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        let n = self.n();
        move |y: &DVector<f64>| {
            let st = NeumannState::unflatten(n, y).expect("chart dimensions fixed");
            self.rhs(&st).flatten()
        }
    }

    /// `½(q',q') + ½(A⁻¹q, q)`.
    pub fn energy(&self, st: &NeumannState) -> f64 {
        0.5 * st.dq.dot(&st.dq) + 0.5 * st.q.component_div(&self.a).dot(&st.q)
    }

    /// The quartic integral distinguished by the correspondence:
    /// `F₀ = (Aq',q')(Aq,q) - (Aq,q')² - (Aq,q)`.
    pub fn f0(&self, st: &NeumannState) -> f64 {
        let aq = st.q.component_mul(&self.a);
        let adq = st.dq.component_mul(&self.a);
        adq.dot(&st.dq) * aq.dot(&st.q) - aq.dot(&st.dq).powi(2) - aq.dot(&st.q)
    }
}

/// Deviation report of a correspondence run.
#[derive(Debug, Clone)]
pub struct CorrespondenceReport {
    /// Supremum over the compared range of `|q_mapped - q_direct|`.
    pub sup_deviation: f64,
    /// `F₀` at the mapped initial state.
    pub f0_initial: f64,
    /// Supremum of `|F₀|` along the mapped trajectory.
    pub f0_sup: f64,
}

/// Maps a reduced `(q, p)` trajectory on the level `L = h` into the
/// rescaled time, verifies `F₀ ≈ 0` on the image, integrates the
/// quadratic-potential system from the mapped initial state and reports the
/// deviation.
///
/// Returns the mapped trajectory (states `[q | dq/dτ₁]` on a uniform τ₁
/// grid), the directly integrated one on the same grid, and the report.
pub fn veselova_to_neumann(
    rv: &ReducedVeselova,
    traj: &Trajectory,
    h: f64,
    tau1_final: f64,
) -> Result<(Trajectory, Trajectory, CorrespondenceReport)> {
    let n = rv.n();
    if traj.len() < 2 {
        return Err(Error::Parameter("trajectory too short".into()));
    }
    let st0 = SphereState::unflatten(n, &traj.states[0])?;
    let e0 = rv.energy(&st0);
    if (e0 - h).abs() > 1e-8 * h.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "trajectory energy {e0} does not match the stated level {h}"
        )));
    }

    let rate = |y: &DVector<f64>| -> f64 {
        let st = SphereState::unflatten(n, y).expect("chart dimensions fixed");
        (rv.det_a() * 2.0 * h / rv.a_mul(&st.q).dot(&st.q)).sqrt()
    };
    let tau_traj = reparameterize(traj, rate)?;
    if *tau_traj.times.last().unwrap() < tau1_final {
        return Err(Error::Parameter(format!(
            "trajectory covers only τ₁ ≤ {:.3}, need {tau1_final}",
            tau_traj.times.last().unwrap()
        )));
    }

    // Truncate to the requested range and convert (q, p) to (q, dq/dτ₁).
    let cut = tau_traj
        .times
        .iter()
        .position(|&t| t > tau1_final)
        .unwrap_or(tau_traj.len());
    let mut mapped = Trajectory::default();
    for k in 0..cut {
        let st = SphereState::unflatten(n, &tau_traj.states[k])?;
        let dq = rv.qdot(&st.q, &st.p) / rate(&tau_traj.states[k]);
        mapped.times.push(tau_traj.times[k]);
        mapped.states.push(NeumannState { q: st.q, dq }.flatten());
    }

    let nsys = NeumannSystem::new(rv.a_diag().as_slice())?;
    let st_map0 = NeumannState::unflatten(n, &mapped.states[0])?;
    let f0_initial = nsys.f0(&st_map0);
    let f0_sup = mapped
        .states
        .iter()
        .map(|y| nsys.f0(&NeumannState::unflatten(n, y).unwrap()).abs())
        .fold(0.0f64, f64::max);

    // Direct integration on the same uniform grid.
    let dtau = mapped.times[1] - mapped.times[0];
    let horizon = *mapped.times.last().unwrap();
    let direct = integrate(
        nsys.flat_field(),
        &mapped.states[0],
        horizon,
        dtau,
        &[],
        None,
        1,
        1,
    )?;
    let sup_deviation = mapped
        .states
        .iter()
        .zip(direct.states.iter())
        .map(|(a, b)| {
            let qa = a.rows(0, n);
            let qb = b.rows(0, n);
            (qa - qb).norm()
        })
        .fold(0.0f64, f64::max);

    Ok((
        mapped,
        direct,
        CorrespondenceReport {
            sup_deviation,
            f0_initial,
            f0_sup,
        },
    ))
}

/// Inverse correspondence: starting from a state with `F₀ = 0`, integrates
/// the quadratic-potential system, maps it back to the original time and
/// compares with a direct integration of the reduced flow.
///
/// `h` fixes the inverse time scaling; any positive value selects one member
/// of the family of matched reduced trajectories.
pub fn neumann_to_veselova(
    rv: &ReducedVeselova,
    st0: &NeumannState,
    h: f64,
    tau1_final: f64,
    dtau: f64,
) -> Result<CorrespondenceReport> {
    let n = rv.n();
    let nsys = NeumannSystem::new(rv.a_diag().as_slice())?;
    let f0_initial = nsys.f0(st0);
    if f0_initial.abs() > 1e-8 {
        return Err(Error::Precondition(format!(
            "inverse correspondence needs F₀ = 0, got {f0_initial:.3e}"
        )));
    }

    // Map the initial state back: q̇ = q' · dτ₁/dt.
    let rate0 = (rv.det_a() * 2.0 * h / rv.a_mul(&st0.q).dot(&st0.q)).sqrt();
    let qdot0 = &st0.dq * rate0;
    let p0 = rv.p_from_qdot(&st0.q, &qdot0);
    let red0 = SphereState {
        q: st0.q.clone(),
        p: p0,
    };

    // F₀ = 0 forces the reduced energy onto the level h.
    let e0 = rv.energy(&red0);
    if (e0 - h).abs() > 1e-8 * h.abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "mapped energy {e0} escaped the level {h}"
        )));
    }

    // The reduced run must cover τ₁ ∈ [0, tau1_final]; bound the needed
    // horizon through the smallest possible rate.
    let rate_min = (rv.det_a() * 2.0 * h
        / rv.a_diag().iter().cloned().fold(f64::MIN_POSITIVE, f64::max))
    .sqrt();
    let t_final = tau1_final / rate_min * 1.25;
    let dt = dtau / rate0;
    let reduced = integrate(rv.flat_field(), &red0.flatten(), t_final, dt, &[], None, 1, 1)?;
    let (mapped, direct, fwd) = veselova_to_neumann(rv, &reduced, h, tau1_final)?;

    let f0_sup = mapped
        .states
        .iter()
        .map(|y| nsys.f0(&NeumannState::unflatten(n, y).unwrap()).abs())
        .fold(0.0f64, f64::max);
    let _ = direct;
    Ok(CorrespondenceReport {
        sup_deviation: fwd.sup_deviation,
        f0_initial,
        f0_sup,
    })
}

/// A state with `F₀ = 0`: random unit `q`, random tangent direction, speed
/// scaled so that the quartic integral vanishes.
pub fn random_f0_zero_state<R: rand::Rng>(
    a: &[f64],
    rng: &mut R,
) -> Result<NeumannState> {
    let n = a.len();
    let av = DVector::from_row_slice(a);
    let mut q;
    loop {
        q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if q.norm() > 0.3 {
            break;
        }
    }
    q /= q.norm();
    let mut u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let qu = q.dot(&u);
    u -= &q * qu;
    u /= u.norm();
    let aq = q.component_mul(&av);
    let au = u.component_mul(&av);
    let denom = au.dot(&u) * aq.dot(&q) - aq.dot(&u).powi(2);
    if denom <= 0.0 {
        return Err(Error::NonGenericData("degenerate tangent direction".into()));
    }
    let s = (aq.dot(&q) / denom).sqrt();
    Ok(NeumannState { q, dq: u * s })
}
