//! Geodesics on the quadric `Σ X_k²/A_k = 1` in natural parameterization,
//! the isospectral matrix of the tangent-line flow, and the normal map onto
//! the quadratic-potential sphere system with the time change
//! `ds = √((X',A⁻¹X')/(X,A⁻²X)) dτ₁`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::lr::neumann::{NeumannState, NeumannSystem};

/// Position and unit tangent of a geodesic on the quadric.
#[derive(Debug, Clone)]
pub struct QuadricGeodesicState {
    pub x: DVector<f64>,
    pub dx: DVector<f64>,
}

impl QuadricGeodesicState {
    pub fn flatten(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut y = DVector::zeros(2 * n);
        y.rows_mut(0, n).copy_from(&self.x);
        y.rows_mut(n, n).copy_from(&self.dx);
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
            x: y.rows(0, n).into_owned(),
            dx: y.rows(n, n).into_owned(),
        })
    }
}

/// Geodesic flow on `Q = {Σ X_k²/A_k = 1}` for diagonal positive `A`.
#[derive(Debug, Clone)]
pub struct QuadricGeodesic {
    a: DVector<f64>,
}

impl QuadricGeodesic {
    pub fn new(a: &[f64]) -> Result<Self> {
        if a.len() < 2 || a.iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter(
                "need at least two positive semi-axis parameters".into(),
            ));
        }
        Ok(Self {
            a: DVector::from_row_slice(a),
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn a_diag(&self) -> &DVector<f64> {
        &self.a
    }

    /// Quadric membership residual `Σ X_k²/A_k - 1`.
    pub fn membership(&self, x: &DVector<f64>) -> f64 {
        x.component_div(&self.a).dot(x) - 1.0
    }

    /// Tangency residual `(X', A⁻¹X)` (half the gradient pairing).
    pub fn tangency(&self, st: &QuadricGeodesicState) -> f64 {
        st.dx.dot(&st.x.component_div(&self.a))
    }

    /// Geodesic equation in natural parameter: `X'' = μ A⁻¹X` with the
    /// multiplier from twice-differentiating the quadric equation.
    pub fn rhs(&self, st: &QuadricGeodesicState) -> QuadricGeodesicState {
        let ainv_x = st.x.component_div(&self.a);
        let ainv_dx = st.dx.component_div(&self.a);
        let mu = -st.dx.dot(&ainv_dx) / ainv_x.dot(&ainv_x);
        QuadricGeodesicState {
            x: st.dx.clone(),
            dx: ainv_x * mu,
        }
    }

    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        let n = self.n();
        move |y: &DVector<f64>| {
            let st = QuadricGeodesicState::unflatten(n, y).expect("chart dimensions fixed");
            self.rhs(&st).flatten()
        }
    }

    /// Random point on the quadric with a random unit tangent.
    pub fn random_state<R: rand::Rng>(&self, rng: &mut R) -> QuadricGeodesicState {
        let n = self.n();
        let mut u;
        loop {
            u = DVector::from_fn(n, |_, _| rng.random_range(-1.0_f64..1.0));
            if u.norm() > 0.3 {
                break;
            }
        }
        u /= u.norm();
        let x = DVector::from_fn(n, |i, _| u[i] * self.a[i].sqrt());
        let normal = x.component_div(&self.a);
        let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0_f64..1.0));
        let c = v.dot(&normal) / normal.dot(&normal);
        v -= &normal * c;
        v /= v.norm();
        QuadricGeodesicState { x, dx: v }
    }
}

/// The isospectral matrix of the tangent line `{x + σγ}`:
/// `L = Π_γ (A - x⊗x) Π_γ` with `Π_γ = Id - γ⊗γ/(γ,γ)`.
///
/// Returns the matrix and its eigenvalues in ascending order. Along a
/// geodesic the spectrum is constant; it consists of the confocal
/// parameters of the quadrics touched by the line, one zero for the base
/// quadric and one extra zero (eigenvector along `γ`).
pub fn moser_lax(
    a: &[f64],
    x: &DVector<f64>,
    gamma: &DVector<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = a.len();
    if x.len() != n || gamma.len() != n {
        return Err(Error::Dimension("lax matrix dimension mismatch".into()));
    }
    let g2 = gamma.dot(gamma);
    if g2 <= 0.0 {
        return Err(Error::Parameter("tangent direction must be nonzero".into()));
    }
    let proj = DMatrix::identity(n, n) - gamma * gamma.transpose() / g2;
    let amat = DMatrix::from_diagonal(&DVector::from_row_slice(a));
    let core = amat - x * x.transpose();
    let lax = &proj * core * &proj;
    let lax = (&lax + lax.transpose()) * 0.5;
    let mut evs: Vec<f64> = lax
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    evs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    Ok((lax, evs))
}

/// Residual report of the normal map applied to a geodesic trajectory.
#[derive(Debug, Clone)]
pub struct KnorrerReport {
    /// Supremum of the second-order equation residual on the image.
    pub neumann_residual_sup: f64,
    /// Supremum of `|F₀|` on the image.
    pub f0_sup: f64,
    /// Supremum of `| |q| - 1 |` (zero up to round-off by construction).
    pub q_norm_err: f64,
}

/// Maps a geodesic trajectory `X(s)` to `q = A⁻¹X/|A⁻¹X|` with the
/// associated time change and verifies the quadratic-potential equation by
/// exact chain-rule differentiation along the flow.
///
/// Returns the mapped trajectory (states `[q | dq/dτ₁]`, times `τ₁`) and
/// the residual report.
pub fn knorrer_map(
    geo: &QuadricGeodesic,
    traj: &Trajectory,
) -> Result<(Trajectory, KnorrerReport)> {
    let n = geo.n();
    let a = geo.a_diag();
    let nsys = NeumannSystem::new(a.as_slice())?;
    let mut mapped = Trajectory::default();
    let mut residual_sup: f64 = 0.0;
    let mut f0_sup: f64 = 0.0;
    let mut qn_err: f64 = 0.0;
    let mut tau = 0.0;
    let mut prev_inv_rate: Option<f64> = None;
    let mut prev_time = 0.0;

    for (k, y) in traj.states.iter().enumerate() {
        let st = QuadricGeodesicState::unflatten(n, y)?;
        let ddx = geo.rhs(&st).dx;

        // u = A⁻¹X and its s-derivatives.
        let u = st.x.component_div(a);
        let du = st.dx.component_div(a);
        let d2u = ddx.component_div(a);
        let nu = u.norm();
        let dnu = u.dot(&du) / nu;
        let d2nu = (du.dot(&du) + u.dot(&d2u) - dnu * dnu) / nu;

        let q = &u / nu;
        let dq_s = (&du - &q * dnu) / nu;
        let d2q_s = &d2u / nu - &du * (2.0 * dnu / (nu * nu)) - &u * (d2nu / (nu * nu))
            + &u * (2.0 * dnu * dnu / (nu * nu * nu));

        // Rate r = ds/dτ₁ = √((X,A⁻²X)/(X',A⁻¹X')) and its s-derivative.
        // (The rescaled velocity with this orientation satisfies the
        // second-order sphere equation exactly; the inverse one does not.)
        let num = st.x.dot(&u.component_div(a));
        let dnum = 2.0 * st.dx.dot(&u.component_div(a));
        let den = st.dx.dot(&du);
        let dden = 2.0 * ddx.dot(&du);
        let r = (num / den).sqrt();
        let dr = (dnum * den - num * dden) / (2.0 * r * den * den);

        let dq_tau = &dq_s * r;
        let d2q_tau = &dq_s * (r * dr) + &d2q_s * (r * r);

        let lambda = q.component_div(a).dot(&q) - dq_tau.dot(&dq_tau);
        let want = -q.component_div(a) + &q * lambda;
        residual_sup = residual_sup.max((&d2q_tau - want).norm());

        let nst = NeumannState {
            q: q.clone(),
            dq: dq_tau,
        };
        f0_sup = f0_sup.max(nsys.f0(&nst).abs());
        qn_err = qn_err.max((q.norm() - 1.0).abs());

        // τ₁ accumulates with dτ₁/ds = 1/r.
        let inv_rate = 1.0 / r;
        if k > 0 {
            let ds = traj.times[k] - prev_time;
            tau += 0.5 * (inv_rate + prev_inv_rate.unwrap()) * ds;
        }
        prev_inv_rate = Some(inv_rate);
        prev_time = traj.times[k];

        mapped.times.push(tau);
        mapped.states.push(nst.flatten());
    }

    Ok((
        mapped,
        KnorrerReport {
            neumann_residual_sup: residual_sup,
            f0_sup,
            q_norm_err: qn_err,
        },
    ))
}
