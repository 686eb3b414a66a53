//! LR-family scenarios: right-invariant constraints, the sphere reduction
//! and its correspondences.

use anyhow::{bail, Result};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use nhflow::integrate::{integrate, liouville_residual, Channel, Monitor, Trajectory};
use nhflow::liealg::hat;
use nhflow::lr::neumann::{neumann_to_veselova, random_f0_zero_state, veselova_to_neumann};
use nhflow::lr::potential::{maupertuis_check, PotentialParams, ReducedPotentialSystem};
use nhflow::lr::quadric::{knorrer_map, moser_lax, QuadricGeodesic, QuadricGeodesicState};
use nhflow::lr::reconstruct::{gauge_rotation, reconstruct_frame};
use nhflow::lr::reduced::{chaplygin_reparameterize, ReducedVeselova, SphereState};
use nhflow::lr::spheroconic::{quadrature_residual, spheroconic_coords, spheroconic_inverse};
use nhflow::lr::veselova3::{self, Veselova3};
use nhflow::lr::{LrState, LrSystem};
use nhflow::operators::veselova_inertia;

use crate::config::{params_or_default, ResolvedConfig};
use crate::report::{vector_columns, Check, TrajectoryDump};
use crate::scenarios::ScenarioResult;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ADiagParams {
    a: Vec<f64>,
}

fn a_params(config: &ResolvedConfig, default: Vec<f64>) -> Result<Vec<f64>> {
    let p: ADiagParams = params_or_default(&config.params, ADiagParams { a: default })?;
    if p.a.len() < 2 {
        bail!("config error: params.a needs at least two entries");
    }
    Ok(p.a)
}

fn sphere_dump(name: &str, n: usize, time_label: &str, traj: &Trajectory) -> TrajectoryDump {
    let mut columns = vector_columns("q", n);
    columns.extend(vector_columns("p", n));
    TrajectoryDump {
        name: name.into(),
        time_label: time_label.into(),
        columns,
        traj: traj.clone(),
    }
}

// ---------------------------------------------------------------------------

/// Three-dimensional constrained body in the `(Ω, γ)` chart, checked
/// against the algebra realization and carrying its invariant measure.
pub fn veselova3(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let a = a_params(config, vec![1.0, 2.0, 3.0])?;
    if a.len() != 3 {
        bail!("config error: params.a must have length 3");
    }
    let v3 = Veselova3::from_a_diag(&a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (omega, gamma) = veselova3::random_admissible(&mut rng, 1.0);

    // Oracle equivalence against the algebra form at sampled states.
    let lr = LrSystem::new(veselova_inertia(&a)?.inverse()?);
    let mut oracle_sup: f64 = 0.0;
    for _ in 0..20 {
        let (w, g) = veselova3::random_admissible(&mut rng, 1.0);
        let (dw, dg) = v3.rhs(&w, &g);
        let st = LrState {
            x: hat(&(v3.inertia() * w)),
            alphas: vec![hat(&g)],
        };
        let dot = lr.rhs(&st)?;
        oracle_sup = oracle_sup
            .max(dot.x.sub(&hat(&(v3.inertia() * dw)))?.norm())
            .max(dot.alphas[0].sub(&hat(&dg))?.norm());
    }

    let v3e = v3.clone();
    let monitors = vec![
        Monitor::new("energy", 1e-7, move |y: &DVector<f64>| {
            let (w, _) = veselova3::split(y);
            v3e.energy(&w)
        }),
        Monitor::new("omega_gamma", 1e-7, |y: &DVector<f64>| {
            let (w, g) = veselova3::split(y);
            w.dot(&g)
        }),
        Monitor::new("gamma_norm", 1e-7, |y: &DVector<f64>| {
            let (_, g) = veselova3::split(y);
            g.norm() - 1.0
        }),
    ];
    let y0 = veselova3::pack(&omega, &gamma);
    let traj = integrate(
        v3.flat_field(),
        &y0,
        config.t_final_or(50.0),
        config.dt_or(1e-3),
        &monitors,
        None,
        1,
        config.integrator.sample_every,
    )?;

    let sup_abs = |name: &str| {
        traj.channel(name)
            .unwrap()
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };

    // Both candidate density exponents are evaluated; only the square root
    // satisfies the transport equation.
    let va = v3.clone();
    let good = liouville_residual(
        v3.flat_field(),
        move |y: &DVector<f64>| {
            let (_, g) = veselova3::split(y);
            va.measure_density(&g)
        },
        &traj,
        config.integrator.fd_h,
        37,
    )?;
    let vb = v3.clone();
    let rejected = liouville_residual(
        v3.flat_field(),
        move |y: &DVector<f64>| {
            let (_, g) = veselova3::split(y);
            vb.measure_density(&g).powi(2)
        },
        &traj,
        config.integrator.fd_h,
        37,
    )?;

    // Reduction consistency: the reduced chart evolves the constraint
    // vector itself.
    let rv = ReducedVeselova::new(&a)?;
    let gdot = gamma.cross(&omega);
    let q0 = DVector::from_row_slice(gamma.as_slice());
    let p0 = rv.p_from_qdot(&q0, &DVector::from_row_slice(gdot.as_slice()));
    let st0 = SphereState { q: q0, p: p0 };
    let horizon = config.t_final_or(50.0).min(10.0);
    let reduced = integrate(
        rv.flat_field(),
        &st0.flatten(),
        horizon,
        config.dt_or(1e-3),
        &[],
        None,
        1,
        10,
    )?;
    let body = integrate(
        v3.flat_field(),
        &y0,
        horizon,
        config.dt_or(1e-3),
        &[],
        None,
        1,
        10,
    )?;
    let mut reduction_sup: f64 = 0.0;
    for (yr, yb) in reduced.states.iter().zip(body.states.iter()) {
        let q = SphereState::unflatten(3, yr)?.q;
        let (_, g) = veselova3::split(yb);
        reduction_sup = reduction_sup.max((&q - DVector::from_row_slice(g.as_slice())).norm());
    }

    let checks = vec![
        Check::upper("algebra-form oracle sup", oracle_sup, 1e-12),
        Check::upper("energy drift", traj.max_drift("energy").unwrap(), 1e-8),
        Check::upper("constraint (Omega,gamma) sup", sup_abs("omega_gamma"), 1e-9),
        Check::upper("unit gamma sup", sup_abs("gamma_norm"), 1e-9),
        Check::upper("measure residual, exponent 1/2", good, 1e-6),
        Check::lower("measure residual, exponent 1 (rejected)", rejected, 1e-2),
        Check::upper("reduction consistency sup", reduction_sup, 1e-6),
    ];

    let mut columns = vector_columns("omega", 3);
    columns.extend(vector_columns("gamma", 3));
    Ok(ScenarioResult {
        checks,
        dumps: vec![TrajectoryDump {
            name: config.scenario.clone(),
            time_label: "t".into(),
            columns,
            traj,
        }],
    })
}

// ---------------------------------------------------------------------------

/// Reduced constrained body on the unit sphere for any dimension:
/// conservation, identical constraints, the invariant measure with a
/// negative control, and the geodesic energy after the multiplier
/// substitution.
pub fn veselova_n(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let a = a_params(config, vec![1.0, 2.0, 3.0, 4.0])?;
    let n = a.len();
    let rv = ReducedVeselova::new(&a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let st0 = rv.random_state_with_energy(&mut rng, 0.5);

    let rv_e = rv.clone();
    let monitors = vec![
        Monitor::new("energy", 1e-7, move |y: &DVector<f64>| {
            rv_e.energy(&SphereState::unflatten(rv_e.n(), y).unwrap())
        }),
        Monitor::new("unit_q", 1e-7, move |y: &DVector<f64>| {
            let st = SphereState::unflatten(n, y).unwrap();
            st.q.dot(&st.q) - 1.0
        }),
        Monitor::new("q_dot_p", 1e-7, move |y: &DVector<f64>| {
            let st = SphereState::unflatten(n, y).unwrap();
            st.q.dot(&st.p)
        }),
    ];
    let traj = integrate(
        rv.flat_field(),
        &st0.flatten(),
        config.t_final_or(50.0),
        config.dt_or(1e-3),
        &monitors,
        None,
        1,
        1,
    )?;

    let sup_abs = |name: &str| {
        traj.channel(name)
            .unwrap()
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };

    let rv_g = rv.clone();
    let good = liouville_residual(
        rv.flat_field(),
        move |y: &DVector<f64>| rv_g.measure_density(&SphereState::unflatten(rv_g.n(), y).unwrap().q),
        &traj,
        config.integrator.fd_h,
        997,
    )?;
    let rv_b = rv.clone();
    let rejected = liouville_residual(
        rv.flat_field(),
        move |y: &DVector<f64>| {
            let st = SphereState::unflatten(rv_b.n(), y).unwrap();
            rv_b.measure_density(&st.q) * rv_b.a_mul(&st.q).dot(&st.q).powf(0.5)
        },
        &traj,
        config.integrator.fd_h,
        997,
    )?;

    let tau = chaplygin_reparameterize(&rv, &traj)?;
    let lstar = tau.channel("lstar").unwrap();
    let v0 = lstar.values[0];
    let lstar_drift = lstar
        .values
        .iter()
        .fold(0.0f64, |m, v| m.max((v - v0).abs() / v0.abs().max(1.0)));

    let checks = vec![
        Check::upper("energy drift", traj.max_drift("energy").unwrap(), 1e-8),
        Check::upper("unit-sphere residual sup", sup_abs("unit_q"), 1e-9),
        Check::upper("(q,p) residual sup", sup_abs("q_dot_p"), 1e-9),
        Check::upper("measure residual", good, 1e-6),
        Check::lower("measure residual, perturbed exponent (rejected)", rejected, 1e-2),
        Check::upper("geodesic energy drift in rescaled time", lstar_drift, 1e-7),
    ];

    // Thin the dumps: the t-run records every step here.
    let thin = |t: &Trajectory, step: usize| -> Trajectory {
        let mut out = t.clone();
        out.times = t.times.iter().step_by(step).cloned().collect();
        out.states = t.states.iter().step_by(step).cloned().collect();
        for (co, ci) in out.channels.iter_mut().zip(t.channels.iter()) {
            co.values = ci.values.iter().step_by(step).cloned().collect();
        }
        out
    };
    let step = config.integrator.sample_every.max(1);
    Ok(ScenarioResult {
        checks,
        dumps: vec![
            sphere_dump(&config.scenario, n, "t", &thin(&traj, step)),
            sphere_dump(&format!("{}_tau", config.scenario), n, "tau", &thin(&tau, step)),
        ],
    })
}

// ---------------------------------------------------------------------------

/// Forward and inverse correspondence between the reduced constrained flow
/// on an energy level and the quadratic-potential sphere system.
pub fn neumann_compare(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let a = a_params(config, vec![1.0, 2.0, 3.0])?;
    let rv = ReducedVeselova::new(&a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let st0 = rv.random_state_with_energy(&mut rng, 0.5);
    let h = rv.energy(&st0);
    let tau1_final = config.t_final_or(10.0);
    let dt = config.dt_or(1e-3);

    // Forward map needs a t-horizon covering the requested rescaled range.
    let rate_min = (rv.det_a() * 2.0 * h
        / rv.a_diag().iter().cloned().fold(f64::MIN_POSITIVE, f64::max))
    .sqrt();
    let t_final = tau1_final / rate_min * 1.25;
    let traj = integrate(rv.flat_field(), &st0.flatten(), t_final, dt, &[], None, 1, 1)?;
    let (mapped, _, fwd) = veselova_to_neumann(&rv, &traj, h, tau1_final)?;

    let st_f0 = random_f0_zero_state(&a, &mut rng)?;
    let inv = neumann_to_veselova(&rv, &st_f0, 0.5, tau1_final.min(8.0), 8e-4)?;

    let checks = vec![
        Check::upper("forward sup deviation", fwd.sup_deviation, 1e-6),
        Check::upper("forward F0 at start", fwd.f0_initial.abs(), 1e-8),
        Check::upper("forward F0 sup", fwd.f0_sup, 1e-8),
        Check::upper("inverse sup deviation", inv.sup_deviation, 1e-6),
        Check::upper("inverse F0 sup", inv.f0_sup, 1e-8),
    ];

    let n = a.len();
    let mut columns = vector_columns("q", n);
    columns.extend(vector_columns("dq", n));
    Ok(ScenarioResult {
        checks,
        dumps: vec![TrajectoryDump {
            name: format!("{}_mapped", config.scenario),
            time_label: "tau1".into(),
            columns,
            traj: mapped,
        }],
    })
}

// ---------------------------------------------------------------------------

/// Geodesics on the quadric with the normal map onto the sphere system and
/// the isospectral matrix of the tangent line.
pub fn knorrer(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let a = a_params(config, vec![1.0, 2.0, 3.0])?;
    let n = a.len();
    let geo = QuadricGeodesic::new(&a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let st0 = geo.random_state(&mut rng);

    let g1 = geo.clone();
    let g2 = geo.clone();
    let monitors = vec![
        Monitor::new("speed", 1e-7, move |y: &DVector<f64>| {
            QuadricGeodesicState::unflatten(g1.n(), y).unwrap().dx.norm()
        }),
        Monitor::new("membership", 1e-7, move |y: &DVector<f64>| {
            let st = QuadricGeodesicState::unflatten(g2.n(), y).unwrap();
            g2.membership(&st.x)
        }),
    ];
    let traj = integrate(
        geo.flat_field(),
        &st0.flatten(),
        config.t_final_or(20.0),
        config.dt_or(1e-3),
        &monitors,
        None,
        1,
        2,
    )?;

    let (_, evs0) = moser_lax(&a, &st0.x, &st0.dx)?;
    let mut eigen_drift: f64 = 0.0;
    for y in traj.states.iter().step_by(10) {
        let st = QuadricGeodesicState::unflatten(n, y)?;
        let (_, evs) = moser_lax(&a, &st.x, &st.dx)?;
        for (p, q) in evs.iter().zip(evs0.iter()) {
            eigen_drift = eigen_drift.max((p - q).abs());
        }
    }

    let (mapped, report) = knorrer_map(&geo, &traj)?;
    let membership_sup = traj
        .channel("membership")
        .unwrap()
        .values
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));

    let checks = vec![
        Check::upper("membership residual sup", membership_sup, 1e-9),
        Check::upper("speed drift", traj.max_drift("speed").unwrap(), 1e-9),
        Check::upper("isospectral eigenvalue drift", eigen_drift, 1e-8),
        Check::upper(
            "mapped second-order equation residual",
            report.neumann_residual_sup,
            1e-6,
        ),
        Check::upper("mapped F0 sup", report.f0_sup, 1e-7),
        Check::upper("mapped |q| - 1 sup", report.q_norm_err, 1e-12),
    ];

    let mut geo_cols = vector_columns("X", n);
    geo_cols.extend(vector_columns("dX", n));
    let mut map_cols = vector_columns("q", n);
    map_cols.extend(vector_columns("dq", n));
    Ok(ScenarioResult {
        checks,
        dumps: vec![
            TrajectoryDump {
                name: config.scenario.clone(),
                time_label: "s".into(),
                columns: geo_cols,
                traj,
            },
            TrajectoryDump {
                name: format!("{}_mapped", config.scenario),
                time_label: "tau1".into(),
                columns: map_cols,
                traj: mapped,
            },
        ],
    })
}

// ---------------------------------------------------------------------------

/// Frame reconstruction of the group motion from the reduced trajectory.
pub fn reconstruction(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let a = a_params(config, vec![1.0, 2.0, 3.0, 4.0])?;
    let n = a.len();
    let rv = ReducedVeselova::new(&a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let st0 = rv.random_state_with_energy(&mut rng, 0.5);
    let traj = integrate(
        rv.flat_field(),
        &st0.flatten(),
        config.t_final_or(5.0),
        config.dt_or(1e-3),
        &[],
        None,
        1,
        1,
    )?;
    let rec = reconstruct_frame(&rv, &traj, None)?;
    let r = gauge_rotation(n - 1, (0, n - 2), 0.93)?;
    let rot = reconstruct_frame(&rv, &traj, Some(&r))?;
    let gauge_delta = (rec.report.kinematic_sup - rot.report.kinematic_sup)
        .abs()
        .max((rec.report.orthogonality_sup - rot.report.orthogonality_sup).abs())
        .max((rec.report.constraint_sup - rot.report.constraint_sup).abs());

    let checks = vec![
        Check::upper("orthogonality sup", rec.report.orthogonality_sup, 1e-10),
        Check::upper("constraint pairing sup", rec.report.constraint_sup, 1e-6),
        Check::upper("kinematic residual sup", rec.report.kinematic_sup, 1e-5),
        Check::upper("eigenvalue drift", rec.report.eigenvalue_drift, 1e-8),
        Check::upper("gauge invariance of residuals", gauge_delta, 1e-9),
    ];

    let step = config.integrator.sample_every.max(1);
    let mut thin = traj.clone();
    thin.times = traj.times.iter().step_by(step).cloned().collect();
    thin.states = traj.states.iter().step_by(step).cloned().collect();
    Ok(ScenarioResult {
        checks,
        dumps: vec![sphere_dump(&config.scenario, n, "t", &thin)],
    })
}

// ---------------------------------------------------------------------------

/// Separation coordinates: round trip through the defining resolvent and
/// the quadrature identities with fitted constants of motion.
pub fn spheroconic(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let a = a_params(config, vec![1.0, 2.0, 3.0])?;
    let n = a.len();
    let ivec: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut round_trip: f64 = 0.0;
    for _ in 0..50 {
        let q = loop {
            let q = DVector::from_fn(n, |_, _| {
                use rand::Rng;
                rng.random_range(-1.0_f64..1.0)
            });
            if q.norm() > 0.3 && q.iter().all(|v| v.abs() > 0.05) {
                break q.clone() / q.norm();
            }
        };
        let lam = spheroconic_coords(&q, &ivec)?;
        let q2 = spheroconic_inverse(&lam, &ivec)?;
        for i in 0..n {
            round_trip = round_trip.max((q2[i] - q[i] * q[i]).abs());
        }
    }

    let mut checks = vec![Check::upper("round-trip error", round_trip, 1e-10)];

    let mut dumps = Vec::new();
    if n == 3 {
        let rv = ReducedVeselova::new(&a)?;
        let st0 = rv.random_state_with_energy(&mut rng, 0.5);
        let traj = integrate(
            rv.flat_field(),
            &st0.flatten(),
            config.t_final_or(20.0),
            config.dt_or(1e-3),
            &[],
            None,
            1,
            4,
        )?;
        let mut tau = chaplygin_reparameterize(&rv, &traj)?;
        let h = tau.channel("lstar").unwrap().values[0];
        let report = quadrature_residual(&rv, &tau, h)?;
        checks.push(Check::upper("quadrature residual sup", report.residual_sup, 1e-5));
        checks.push(Check::upper("fitted constant drift", report.c_drift, 1e-5));

        // Attach the separation coordinates as channels.
        let mut l1 = Vec::with_capacity(tau.len());
        let mut l2 = Vec::with_capacity(tau.len());
        for y in tau.states.iter() {
            let st = SphereState::unflatten(3, y)?;
            let lam = spheroconic_coords(&st.q, &ivec)?;
            l1.push(lam[0]);
            l2.push(lam[1]);
        }
        tau.channels.push(Channel {
            name: "lambda_1".into(),
            values: l1,
        });
        tau.channels.push(Channel {
            name: "lambda_2".into(),
            values: l2,
        });
        dumps.push(sphere_dump(&config.scenario, n, "tau", &tau));
    }

    Ok(ScenarioResult { checks, dumps })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaupertuisParams {
    a: Vec<f64>,
    alpha1: f64,
    c: f64,
}

/// Iso-energy comparison of the potential flow and the conformally
/// rescaled kinetic flow.
pub fn maupertuis(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: MaupertuisParams = params_or_default(
        &config.params,
        MaupertuisParams {
            a: vec![1.0, 2.0, 3.0],
            alpha1: 1.0,
            c: 0.0,
        },
    )?;
    let rv = ReducedVeselova::new(&p.a)?;
    let pot = PotentialParams::quadratic(p.a.len(), p.alpha1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut st0 = rv.random_state_with_energy(&mut rng, 0.5);
    let pot_sys = ReducedPotentialSystem::new(rv.clone(), pot.clone())?;
    // c = 0 in the config means "use the sampled initial energy"; otherwise
    // the initial momentum is rescaled onto the requested level.
    let c = if p.c == 0.0 {
        pot_sys.energy(&st0)?
    } else {
        let v0 = pot.value(&rv, &st0.q)?;
        if p.c <= v0 {
            bail!("config error: params.c must exceed the potential at the start ({v0:.3})");
        }
        let kin = rv.energy(&st0);
        st0.p *= ((p.c - v0) / kin).sqrt();
        p.c
    };
    let report = maupertuis_check(
        &rv,
        &pot,
        c,
        &st0,
        config.t_final_or(6.0),
        config.dt_or(1e-3),
    )?;

    let checks = vec![
        Check::upper("geometric distance after arc matching", report.geometric_sup, 1e-6),
        Check::upper("multiplier-ratio residual", report.multiplier_sup, 1e-7),
        Check::lower("matched arc length", report.matched_arc, 0.5),
    ];
    Ok(ScenarioResult {
        checks,
        dumps: Vec::new(),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LagrangeTopParams {
    a: Vec<f64>,
    kappa: f64,
}

/// Symmetric body in a linear potential: the rescaled rotation momenta of
/// the symmetry group are first integrals.
pub fn lagrange_top(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: LagrangeTopParams = params_or_default(
        &config.params,
        LagrangeTopParams {
            a: vec![1.0, 1.0, 1.0, 2.0],
            kappa: 0.8,
        },
    )?;
    let n = p.a.len();
    if n < 3 {
        bail!("config error: params.a needs at least three entries");
    }
    if p.a[..n - 1].windows(2).any(|w| w[0] != w[1]) {
        bail!("config error: the first n-1 entries of params.a must be equal");
    }
    let rv = ReducedVeselova::new(&p.a)?;
    let mut pot = PotentialParams::zero(n);
    pot.linear[n - 1] = p.kappa;
    let sys = ReducedPotentialSystem::new(rv.clone(), pot)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let st0 = rv.random_state_with_energy(&mut rng, 0.5);

    let s_e = sys.clone();
    let mut monitors = vec![
        Monitor::new("total_energy", 1e-7, move |y: &DVector<f64>| {
            s_e.energy(&SphereState::unflatten(n, y).unwrap()).unwrap()
        }),
        Monitor::new("unit_q", 1e-7, move |y: &DVector<f64>| {
            let st = SphereState::unflatten(n, y).unwrap();
            st.q.dot(&st.q) - 1.0
        }),
        Monitor::new("q_dot_p", 1e-7, move |y: &DVector<f64>| {
            let st = SphereState::unflatten(n, y).unwrap();
            st.q.dot(&st.p)
        }),
    ];
    let mut momentum_names = Vec::new();
    for i in 0..n - 1 {
        for j in (i + 1)..n - 1 {
            let rv_m = rv.clone();
            let name = format!("momentum_{}{}", i + 1, j + 1);
            momentum_names.push(name.clone());
            monitors.push(Monitor::new(name, 1e-7, move |y: &DVector<f64>| {
                let st = SphereState::unflatten(n, y).unwrap();
                rv_m.multiplier_rate(&st.q) * (st.q[i] * st.p[j] - st.q[j] * st.p[i])
            }));
        }
    }
    let traj = integrate(
        sys.flat_field(),
        &st0.flatten(),
        config.t_final_or(50.0),
        config.dt_or(1e-3),
        &monitors,
        None,
        1,
        config.integrator.sample_every,
    )?;

    let sup_abs = |name: &str| {
        traj.channel(name)
            .unwrap()
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let mut checks = vec![
        Check::upper("total energy drift", traj.max_drift("total_energy").unwrap(), 1e-8),
        Check::upper("unit-sphere residual sup", sup_abs("unit_q"), 1e-9),
        Check::upper("(q,p) residual sup", sup_abs("q_dot_p"), 1e-9),
    ];
    for name in momentum_names {
        checks.push(Check::upper(
            format!("{name} drift"),
            traj.max_drift(&name).unwrap(),
            1e-8,
        ));
    }

    Ok(ScenarioResult {
        checks,
        dumps: vec![sphere_dump(&config.scenario, n, "t", &traj)],
    })
}
