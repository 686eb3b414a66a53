//! Reconstruction of the group motion from a reduced trajectory.
//!
//! Along a reduced trajectory `(q(t), p(t))` the body-frame images of the
//! space-fixed axes are `e₁ = q`, `e_n = γ` (the unit tangent of the
//! associated quadric geodesic `X = (q,Aq)^{-1/2} A q`), and in between the
//! unit eigenvectors of the isospectral matrix for its simple nonzero
//! eigenvalues. The group element `g(t)` maps the moving frame to the fixed
//! one; its velocity must reproduce the angular velocity `ω = q∧q̇`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::lr::quadric::moser_lax;
use crate::lr::reduced::{ReducedVeselova, SphereState};

/// Residual summary of a reconstruction run.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    /// sup ‖gᵀg - I‖ over the trajectory.
    pub orthogonality_sup: f64,
    /// sup |⟨ω, e_i∧e_j⟩| over `2 ≤ i < j ≤ n` and time.
    pub constraint_sup: f64,
    /// sup ‖g⁻¹ġ - ω‖ with `ġ` by central finite differences.
    pub kinematic_sup: f64,
    /// sup eigenvalue drift of the isospectral matrix.
    pub eigenvalue_drift: f64,
}

/// Reconstructed frames with their report.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub times: Vec<f64>,
    pub frames: Vec<DMatrix<f64>>,
    pub report: ReconstructionReport,
}

/// Eigenvalue-degeneracy threshold separating the mandated zeros and
/// guarding simplicity along the trajectory.
const EIGEN_GAP_TOL: f64 = 1e-8;

/// Reconstructs `g(t)` from a reduced `(q, p)` trajectory in original time.
///
/// `gauge` optionally applies a constant rotation to the trailing `n-1`
/// frame vectors; the reconstruction residuals are invariant under it.
pub fn reconstruct_frame(
    rv: &ReducedVeselova,
    traj: &Trajectory,
    gauge: Option<&DMatrix<f64>>,
) -> Result<Reconstruction> {
    let n = rv.n();
    if traj.len() < 3 {
        return Err(Error::Parameter("need at least three samples".into()));
    }
    if let Some(r) = gauge {
        if r.nrows() != n - 1 || r.ncols() != n - 1 {
            return Err(Error::Parameter(format!(
                "gauge rotation must be {}x{}",
                n - 1,
                n - 1
            )));
        }
    }

    let a = rv.a_diag().clone();
    let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(traj.len());
    let mut omegas: Vec<DMatrix<f64>> = Vec::with_capacity(traj.len());
    let mut evs0: Option<Vec<f64>> = None;
    let mut prev_normals: Option<Vec<DVector<f64>>> = None;

    let mut orthogonality_sup: f64 = 0.0;
    let mut constraint_sup: f64 = 0.0;
    let mut eigenvalue_drift: f64 = 0.0;

    for y in traj.states.iter() {
        let st = SphereState::unflatten(n, y)?;
        let qdot = rv.qdot(&st.q, &st.p);
        let aq = rv.a_mul(&st.q);
        let qaq = aq.dot(&st.q);
        // X = (q,Aq)^{-1/2} A q and its time derivative.
        let x = &aq / qaq.sqrt();
        let aqdot = rv.a_mul(&qdot);
        let xdot = &aqdot / qaq.sqrt() - &aq * (aq.dot(&qdot) / qaq.powf(1.5));
        let speed = xdot.norm();
        if speed < 1e-10 {
            return Err(Error::NonGenericData(
                "trajectory passes through a configuration stop".into(),
            ));
        }
        let gamma = &xdot / speed;

        let (lax, _) = moser_lax(a.as_slice(), &x, &gamma)?;
        let eig = lax.symmetric_eigen();
        // Split the spectrum into the two mandated zeros and the simple rest.
        let scale = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        let mut pairs: Vec<(f64, DVector<f64>)> = (0..n)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned()))
            .collect();
        pairs.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap());
        let zeros: Vec<usize> = (0..n)
            .filter(|&k| pairs[k].0.abs() < EIGEN_GAP_TOL * scale)
            .collect();
        if zeros.len() != 2 {
            return Err(Error::NonGenericData(format!(
                "expected exactly two zero eigenvalues, found {}",
                zeros.len()
            )));
        }
        let nonzero: Vec<(f64, DVector<f64>)> = pairs
            .into_iter()
            .filter(|(v, _)| v.abs() >= EIGEN_GAP_TOL * scale)
            .collect();
        for w in nonzero.windows(2) {
            if (w[1].0 - w[0].0).abs() < EIGEN_GAP_TOL * scale {
                return Err(Error::NonGenericData(format!(
                    "eigenvalue collision at {:.6e}",
                    w[0].0
                )));
            }
        }
        let evs: Vec<f64> = nonzero.iter().map(|(v, _)| *v).collect();
        match &evs0 {
            None => evs0 = Some(evs.clone()),
            Some(base) => {
                for (v, b) in evs.iter().zip(base.iter()) {
                    eigenvalue_drift = eigenvalue_drift.max((v - b).abs());
                }
            }
        }

        // Middle frame vectors with sign continuity; the first sample fixes
        // the gauge.
        let mut normals: Vec<DVector<f64>> = nonzero.into_iter().map(|(_, v)| v).collect();
        match &prev_normals {
            None => {
                for v in normals.iter_mut() {
                    let lead = v.iter().cloned().fold(0.0f64, |m, c| {
                        if c.abs() > m.abs() {
                            c
                        } else {
                            m
                        }
                    });
                    if lead < 0.0 {
                        *v = -&*v;
                    }
                }
            }
            Some(prev) => {
                for (v, pv) in normals.iter_mut().zip(prev.iter()) {
                    if v.dot(pv) < 0.0 {
                        *v = -&*v;
                    }
                }
            }
        }

        // Assemble F = [q, n_2, …, n_{n-1}, γ]; make it right-handed on the
        // first sample by flipping one normal if needed.
        let mut f = DMatrix::zeros(n, n);
        f.set_column(0, &st.q);
        for (c, v) in normals.iter().enumerate() {
            f.set_column(c + 1, v);
        }
        f.set_column(n - 1, &gamma);
        if prev_normals.is_none() && f.determinant() < 0.0 {
            let flipped = -&normals[0];
            normals[0] = flipped.clone();
            f.set_column(1, &flipped);
        }
        prev_normals = Some(normals);

        if let Some(r) = gauge {
            let sub = f.columns(1, n - 1) * r;
            f.columns_mut(1, n - 1).copy_from(&sub);
        }

        orthogonality_sup = orthogonality_sup
            .max((f.transpose() * &f - DMatrix::identity(n, n)).norm());

        // Constraint pairing against the angular velocity ω = q∧q̇.
        for i in 1..n {
            for j in (i + 1)..n {
                let ei = f.column(i);
                let ej = f.column(j);
                let r = st.q.dot(&ei) * qdot.dot(&ej) - st.q.dot(&ej) * qdot.dot(&ei);
                constraint_sup = constraint_sup.max(r.abs());
            }
        }

        omegas.push(&st.q * qdot.transpose() - &qdot * st.q.transpose());
        frames.push(f.transpose());
    }

    // Kinematic residual ‖g⁻¹ġ - ω‖ with central differences.
    let mut kinematic_sup: f64 = 0.0;
    for k in 1..frames.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k - 1];
        let gdot = (&frames[k + 1] - &frames[k - 1]) / dt;
        let body_vel = frames[k].transpose() * gdot;
        kinematic_sup = kinematic_sup.max((body_vel - &omegas[k]).norm());
    }

    Ok(Reconstruction {
        times: traj.times.clone(),
        frames,
        report: ReconstructionReport {
            orthogonality_sup,
            constraint_sup,
            kinematic_sup,
            eigenvalue_drift,
        },
    })
}

/// A deterministic rotation of the trailing frame vectors, for gauge tests.
pub fn gauge_rotation(n_minus_1: usize, plane: (usize, usize), angle: f64) -> Result<DMatrix<f64>> {
    let (i, j) = plane;
    if i >= j || j >= n_minus_1 {
        return Err(Error::Parameter("invalid gauge plane".into()));
    }
    let mut r = DMatrix::identity(n_minus_1, n_minus_1);
    r[(i, i)] = angle.cos();
    r[(j, j)] = angle.cos();
    r[(i, j)] = angle.sin();
    r[(j, i)] = -angle.sin();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::integrate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reduced_run(a: &[f64], seed: u64, t_final: f64) -> (ReducedVeselova, Trajectory) {
        let rv = ReducedVeselova::new(a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st0 = rv.random_state_with_energy(&mut rng, 0.5);
        let traj = integrate(rv.flat_field(), &st0.flatten(), t_final, 1e-3, &[], None, 1, 1)
            .unwrap();
        (rv, traj)
    }

    #[test]
    fn frames_are_orthogonal_and_kinematically_consistent() {
        let (rv, traj) = reduced_run(&[1.0, 2.0, 3.0, 4.0], 139, 5.0);
        let rec = reconstruct_frame(&rv, &traj, None).unwrap();
        assert!(
            rec.report.orthogonality_sup < 1e-10,
            "orthogonality {}",
            rec.report.orthogonality_sup
        );
        assert!(
            rec.report.constraint_sup < 1e-6,
            "constraints {}",
            rec.report.constraint_sup
        );
        assert!(
            rec.report.kinematic_sup < 1e-5,
            "kinematics {}",
            rec.report.kinematic_sup
        );
        assert!(
            rec.report.eigenvalue_drift < 1e-8,
            "eigenvalues {}",
            rec.report.eigenvalue_drift
        );
        // g lands in the proper component.
        for g in rec.frames.iter().step_by(500) {
            assert!(g.determinant() > 0.0);
        }
    }

    #[test]
    fn gauge_rotation_leaves_residuals_invariant() {
        let (rv, traj) = reduced_run(&[1.0, 2.0, 3.0, 4.0], 149, 3.0);
        let base = reconstruct_frame(&rv, &traj, None).unwrap();
        let r = gauge_rotation(3, (0, 2), 0.77).unwrap();
        let rotated = reconstruct_frame(&rv, &traj, Some(&r)).unwrap();
        // q is untouched; residuals match to round-off.
        for (a, b) in base.frames.iter().zip(rotated.frames.iter()).step_by(100) {
            assert!((a.row(0) - b.row(0)).norm() < 1e-14);
        }
        assert!(
            (base.report.kinematic_sup - rotated.report.kinematic_sup).abs() < 1e-9,
            "kinematic residual changed under gauge"
        );
        assert!(
            (base.report.orthogonality_sup - rotated.report.orthogonality_sup).abs() < 1e-12
        );
        assert!((base.report.constraint_sup - rotated.report.constraint_sup).abs() < 1e-9);
    }

    #[test]
    fn three_dimensional_case_also_reconstructs() {
        let (rv, traj) = reduced_run(&[1.0, 2.0, 3.0], 151, 4.0);
        let rec = reconstruct_frame(&rv, &traj, None).unwrap();
        assert!(rec.report.orthogonality_sup < 1e-10);
        assert!(rec.report.kinematic_sup < 1e-5);
    }
}
