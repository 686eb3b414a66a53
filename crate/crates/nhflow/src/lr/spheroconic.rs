//! Spheroconic coordinates on the unit sphere and the hyperelliptic
//! quadrature identities of the separated geodesic flow.
//!
//! For distinct parameters `I_1..I_n` (the reciprocals of the metric
//! diagonal), the coordinates `λ_1 < … < λ_{n-1}` of a generic point `q`
//! are the roots of the resolvent `Σ q_i²/(I_i - λ) = 0` and satisfy
//!
//! ```text
//! q_i² = Π_k (I_i - λ_k) / Π_{j≠i} (I_i - I_j),
//! ```
//!
//! interlacing the sorted `I`s. Along a rescaled-time trajectory of energy
//! `h` the separated variables obey
//!
//! ```text
//! Σ_k λ_k^{j-1} λ̇_k / (2√R(λ_k)) = δ_{j,n-1} √(2h),
//! R(λ) = -(λ-I_1)…(λ-I_n)·λ·(λ-c_2)…(λ-c_{n-1}),
//! ```
//!
//! with constants of motion `c_2..c_{n-1}` (and `c_1 = 0`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::lr::reduced::{ReducedVeselova, SphereState};

/// Root-bracketing tolerance of the resolvent bisection.
const ROOT_TOL: f64 = 1e-13;
/// Minimal |q_i| accepted away from the coordinate hyperplanes.
const HYPERPLANE_TOL: f64 = 1e-10;
/// Exclusion radius around the branch points of `R`.
const BRANCH_RADIUS: f64 = 1e-4;
/// Samples dropped on both sides of a turning point of any `λ_k`.
const TURNING_WINDOW: usize = 5;

/// Spheroconic coordinates of a generic unit vector; returned ascending.
///
/// `ivec` may be supplied in any order; it is sorted internally and must be
/// pairwise distinct.
pub fn spheroconic_coords(q: &DVector<f64>, ivec: &[f64]) -> Result<Vec<f64>> {
    let n = ivec.len();
    if q.len() != n {
        return Err(Error::Dimension("coordinate count mismatch".into()));
    }
    if let Some(qi) = q.iter().find(|v| v.abs() < HYPERPLANE_TOL) {
        return Err(Error::Boundary(format!(
            "component {qi:.3e} too close to a coordinate hyperplane"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ivec[a].partial_cmp(&ivec[b]).unwrap());
    let is: Vec<f64> = order.iter().map(|&k| ivec[k]).collect();
    let qs: Vec<f64> = order.iter().map(|&k| q[k]).collect();
    let span = is[n - 1] - is[0];
    if is.windows(2).any(|w| w[1] - w[0] < 1e-10 * span.max(1.0)) {
        return Err(Error::Parameter("metric parameters must be distinct".into()));
    }

    let resolvent = |lam: f64| -> f64 {
        (0..n).map(|i| qs[i] * qs[i] / (is[i] - lam)).sum()
    };
    let resolvent_deriv = |lam: f64| -> f64 {
        (0..n)
            .map(|i| qs[i] * qs[i] / ((is[i] - lam) * (is[i] - lam)))
            .sum()
    };

    let mut out = Vec::with_capacity(n - 1);
    for band in 0..n - 1 {
        let gap = is[band + 1] - is[band];
        // Shrink the bracket until the asymptotic signs show up.
        let mut eps = gap * 1e-3;
        let (mut lo, mut hi);
        loop {
            lo = is[band] + eps;
            hi = is[band + 1] - eps;
            if resolvent(lo) < 0.0 && resolvent(hi) > 0.0 {
                break;
            }
            eps *= 0.25;
            if eps < 1e-300 {
                return Err(Error::Boundary(
                    "resolvent bracketing failed (point too degenerate)".into(),
                ));
            }
        }
        // The resolvent is strictly increasing between poles.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if resolvent(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < ROOT_TOL * gap {
                break;
            }
        }
        let mut root = 0.5 * (lo + hi);
        // A couple of Newton polish steps inside the band.
        for _ in 0..2 {
            let f = resolvent(root);
            let df = resolvent_deriv(root);
            let next = root - f / df;
            if next > is[band] && next < is[band + 1] {
                root = next;
            }
        }
        out.push(root);
    }
    Ok(out)
}

/// Squared coordinates from spheroconic variables:
/// `q_i² = Π_k (I_i - λ_k) / Π_{j≠i} (I_i - I_j)`.
pub fn spheroconic_inverse(lambdas: &[f64], ivec: &[f64]) -> Result<Vec<f64>> {
    let n = ivec.len();
    if lambdas.len() != n - 1 {
        return Err(Error::Dimension(format!(
            "expected {} coordinates, got {}",
            n - 1,
            lambdas.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut num = 1.0;
        for l in lambdas {
            num *= ivec[i] - l;
        }
        let mut den = 1.0;
        for j in 0..n {
            if j != i {
                den *= ivec[i] - ivec[j];
            }
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Quadrature verification summary.
#[derive(Debug, Clone)]
pub struct QuadratureReport {
    /// Fitted constants (roots of the monic factor) at the early sample.
    pub c_early: Vec<f64>,
    /// The same constants refitted at the late sample.
    pub c_late: Vec<f64>,
    /// Max absolute difference between the two fits.
    pub c_drift: f64,
    /// Supremum of the quadrature residuals over unmasked samples.
    pub residual_sup: f64,
    /// Fraction of samples masked around turning points and branch points.
    pub masked_fraction: f64,
}

/// `λ` and `dλ/dτ` at one trajectory sample, by implicit differentiation of
/// the resolvent.
fn lambdas_and_rates(
    rv: &ReducedVeselova,
    ivec: &[f64],
    y: &DVector<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rv.n();
    let st = SphereState::unflatten(n, y)?;
    let lam = spheroconic_coords(&st.q, ivec)?;
    let qprime = rv.qdot(&st.q, &st.p) / rv.multiplier_rate(&st.q);
    let mut rates = Vec::with_capacity(lam.len());
    for &l in &lam {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += st.q[i] * qprime[i] / (ivec[i] - l);
            den += st.q[i] * st.q[i] / ((ivec[i] - l) * (ivec[i] - l));
        }
        rates.push(-2.0 * num / den);
    }
    Ok((lam, rates))
}

/// Monic polynomial with the fitted nontrivial roots, evaluated through its
/// coefficients `Q(λ) = λ^g + c_{g-1} λ^{g-1} + … + c_0`.
fn poly_eval(coeffs: &[f64], lam: f64) -> f64 {
    let mut v = lam.powi(coeffs.len() as i32);
    let mut p = 1.0;
    for c in coeffs.iter() {
        v += c * p;
        p *= lam;
    }
    v
}

/// Roots of the monic fitted factor for low degree (`n ≤ 4`).
fn poly_roots(coeffs: &[f64]) -> Result<Vec<f64>> {
    match coeffs.len() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![-coeffs[0]]),
        2 => {
            let (c0, c1) = (coeffs[0], coeffs[1]);
            let disc = c1 * c1 - 4.0 * c0;
            if disc < 0.0 {
                return Err(Error::Fit(format!(
                    "complex constants of motion (discriminant {disc:.3e})"
                )));
            }
            let r = disc.sqrt();
            Ok(vec![(-c1 - r) / 2.0, (-c1 + r) / 2.0])
        }
        d => Err(Error::Fit(format!("unsupported constant count {d}"))),
    }
}

/// Fits the monic factor coefficients from one sample:
/// `Q(λ_k) = -λ̇_k² M_k² / (8 h P(λ_k))` with `P(λ) = λ·Π(λ - I_i)`.
fn fit_constants(lam: &[f64], rates: &[f64], ivec: &[f64], h: f64) -> Result<Vec<f64>> {
    let nm1 = lam.len();
    let g = nm1 - 1;
    let mut rows = DMatrix::zeros(nm1, g);
    let mut rhs = DVector::zeros(nm1);
    for k in 0..nm1 {
        let mut mk = 1.0;
        for s in 0..nm1 {
            if s != k {
                mk *= lam[k] - lam[s];
            }
        }
        let mut p = lam[k];
        for i in ivec {
            p *= lam[k] - i;
        }
        let y = -rates[k] * rates[k] * mk * mk / (8.0 * h * p);
        let mut pow = 1.0;
        for j in 0..g {
            rows[(k, j)] = pow;
            pow *= lam[k];
        }
        rhs[k] = y - pow; // pow = λ^g after the loop
    }
    if g == 0 {
        return Ok(Vec::new());
    }
    let at = rows.transpose();
    let normal = &at * &rows;
    let coeffs = normal
        .lu()
        .solve(&(at * rhs))
        .ok_or_else(|| Error::Fit("constant fit is singular".into()))?;
    Ok(coeffs.iter().cloned().collect())
}

/// Verifies the quadrature identities along a rescaled-time trajectory of
/// energy `h`, fitting the constants of motion and reporting the residual
/// supremum away from turning and branch points.
pub fn quadrature_residual(
    rv: &ReducedVeselova,
    traj_tau: &Trajectory,
    h: f64,
) -> Result<QuadratureReport> {
    let n = rv.n();
    if n < 3 {
        return Err(Error::Parameter("need n >= 3".into()));
    }
    let ivec: Vec<f64> = rv.a_diag().iter().map(|a| 1.0 / a).collect();
    let samples = traj_tau.len();
    if samples < 2 * TURNING_WINDOW + 3 {
        return Err(Error::Parameter("trajectory too short".into()));
    }

    let mut lams: Vec<Vec<f64>> = Vec::with_capacity(samples);
    let mut rates: Vec<Vec<f64>> = Vec::with_capacity(samples);
    for y in traj_tau.states.iter() {
        let (l, r) = lambdas_and_rates(rv, &ivec, y)?;
        lams.push(l);
        rates.push(r);
    }

    // Mask samples near turning points of any λ_k.
    let nm1 = n - 1;
    let mut masked = vec![false; samples];
    for k in 0..nm1 {
        for s in 1..samples {
            if rates[s][k] * rates[s - 1][k] <= 0.0 {
                let lo = s.saturating_sub(TURNING_WINDOW);
                let hi = (s + TURNING_WINDOW).min(samples - 1);
                for m in masked.iter_mut().take(hi + 1).skip(lo) {
                    *m = true;
                }
            }
        }
    }
    // Mask samples with λ too close to the fixed branch points (the I's
    // and zero); the fitted roots are added after the first fit.
    let mut fixed_roots: Vec<f64> = ivec.clone();
    fixed_roots.push(0.0);
    let near_roots = |lam: &[f64], roots: &[f64]| -> bool {
        lam.iter()
            .any(|l| roots.iter().any(|r| (l - r).abs() <= BRANCH_RADIUS))
    };
    for s in 0..samples {
        if near_roots(&lams[s], &fixed_roots) {
            masked[s] = true;
        }
    }

    let early = masked
        .iter()
        .position(|&m| !m)
        .ok_or_else(|| Error::Branch("no sample clear of branch points".into()))?;
    let coeffs_early = fit_constants(&lams[early], &rates[early], &ivec, h)?;
    let c_early = poly_roots(&coeffs_early)?;

    // Complete the mask with the fitted branch points.
    let mut all_roots = fixed_roots.clone();
    all_roots.extend_from_slice(&c_early);
    for s in 0..samples {
        if near_roots(&lams[s], &c_early) {
            masked[s] = true;
        }
    }
    let late = (0..samples)
        .rev()
        .find(|&s| !masked[s])
        .ok_or_else(|| Error::Branch("no trailing sample clear of branch points".into()))?;
    let coeffs_late = fit_constants(&lams[late], &rates[late], &ivec, h)?;
    let c_late = poly_roots(&coeffs_late)?;
    let c_drift = c_early
        .iter()
        .zip(c_late.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    // Residuals of the quadrature identities with per-sample branch signs.
    let target = (2.0 * h).sqrt();
    let mut residual_sup: f64 = 0.0;
    let mut masked_count = 0usize;
    for s in 0..samples {
        if masked[s] {
            masked_count += 1;
            continue;
        }
        let lam = &lams[s];
        let rate = &rates[s];
        let mut terms = vec![0.0; nm1];
        for k in 0..nm1 {
            let mut mk = 1.0;
            for t in 0..nm1 {
                if t != k {
                    mk *= lam[k] - lam[t];
                }
            }
            let mut p = lam[k];
            for i in &ivec {
                p *= lam[k] - i;
            }
            let r_val = -p * poly_eval(&coeffs_early, lam[k]);
            let sign = (rate[k] * mk).signum();
            let root = sign * r_val.abs().sqrt();
            terms[k] = rate[k] / (2.0 * root);
        }
        for j in 1..=nm1 {
            let mut acc = 0.0;
            for k in 0..nm1 {
                acc += lam[k].powi(j as i32 - 1) * terms[k];
            }
            let want = if j == nm1 { target } else { 0.0 };
            residual_sup = residual_sup.max((acc - want).abs());
        }
    }

    Ok(QuadratureReport {
        c_early,
        c_late,
        c_drift,
        residual_sup,
        masked_fraction: masked_count as f64 / samples as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::integrate;
    use crate::lr::reduced::chaplygin_reparameterize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
        loop {
            let q = DVector::from_fn(n, |_, _| rng.random_range(-1.0_f64..1.0));
            if q.norm() > 0.3 && q.iter().all(|v| v.abs() > 0.05) {
                return q.clone() / q.norm();
            }
        }
    }

    #[test]
    fn round_trip_and_interlacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(157);
        for &n in &[3usize, 4, 5] {
            let a: Vec<f64> = (0..n).map(|k| 1.0 + k as f64).collect();
            let ivec: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
            let mut sorted = ivec.clone();
            sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for _ in 0..20 {
                let q = random_unit(n, &mut rng);
                let lam = spheroconic_coords(&q, &ivec).unwrap();
                // Strict interlacing against the sorted parameters.
                for (k, l) in lam.iter().enumerate() {
                    assert!(sorted[k] < *l && *l < sorted[k + 1]);
                }
                let q2 = spheroconic_inverse(&lam, &ivec).unwrap();
                for i in 0..n {
                    assert!(
                        (q2[i] - q[i] * q[i]).abs() < 1e-10,
                        "round trip error {}",
                        (q2[i] - q[i] * q[i]).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn hyperplane_points_are_rejected() {
        let q = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            spheroconic_coords(&q, &[1.0, 0.5, 1.0 / 3.0]),
            Err(Error::Boundary(_))
        ));
        // Repeated parameters are a parameter error.
        let q = DVector::from_row_slice(&[0.6, 0.64, 0.48]);
        assert!(matches!(
            spheroconic_coords(&q, &[1.0, 1.0, 0.5]),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn quadrature_identities_hold_with_constant_fit() {
        let a = [1.0, 2.0, 3.0];
        let rv = ReducedVeselova::new(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(163);
        let st0 = rv.random_state(&mut rng, 1.0);
        let traj = integrate(rv.flat_field(), &st0.flatten(), 20.0, 1e-3, &[], None, 1, 4)
            .unwrap();
        let tau = chaplygin_reparameterize(&rv, &traj).unwrap();
        let h = tau.channel("lstar").unwrap().values[0];
        let report = quadrature_residual(&rv, &tau, h).unwrap();
        assert!(
            report.residual_sup < 1e-5,
            "quadrature residual {}",
            report.residual_sup
        );
        assert!(report.c_drift < 1e-5, "constant drift {}", report.c_drift);
        assert!(report.masked_fraction < 0.9);
        // The single constant separates the oscillation bands.
        let c2 = report.c_early[0];
        let ivec = [1.0, 0.5, 1.0 / 3.0];
        assert!(c2 > ivec[2] && c2 < ivec[0], "c2 = {c2}");
    }
}
