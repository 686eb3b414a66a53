//! L+R-family scenarios: perturbed-inertia flows, rolling ball, spherical
//! support and the stiff limit.

use anyhow::{bail, Result};
use nalgebra::{DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use nhflow::integrate::{integrate, liouville_residual, Monitor, Trajectory};
use nhflow::liealg::AlgebraElement;
use nhflow::lplusr::{
    lr_limit_sweep, random_symmetric, support_gamma_from_balls, ChaplyginSphere, ChaplyginState,
    LplusRState, LplusRSystem, SphericalSupport,
};
use nhflow::operators::physical_inertia;

use crate::config::{params_or_default, ResolvedConfig};
use crate::report::{vector_columns, wedge_columns, Check, TrajectoryDump};
use crate::scenarios::ScenarioResult;

fn frame_columns() -> Vec<String> {
    let mut columns = vector_columns("omega", 3);
    columns.extend(vector_columns("alpha", 3));
    columns.extend(vector_columns("beta", 3));
    columns.extend(vector_columns("gamma", 3));
    columns
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenericParams {
    inertia: Vec<f64>,
    gamma_scale: f64,
}

/// General perturbed-inertia flow on `so(n)` with a random symmetric
/// right-invariant part; includes the engine order check on the free top.
pub fn lplusr_generic(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: GenericParams = params_or_default(
        &config.params,
        GenericParams {
            inertia: vec![1.0, 2.0, 3.0],
            gamma_scale: 0.4,
        },
    )?;
    let n = p.inertia.len();
    if n < 3 {
        bail!("config error: params.inertia needs at least three entries");
    }
    let i_op = physical_inertia(&p.inertia, false)?;
    let sys = LplusRSystem::new(i_op);
    let m = sys.inertia().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let st0 = LplusRState::new(
        AlgebraElement::random(n, &mut rng),
        random_symmetric(m, p.gamma_scale, &mut rng),
    )?;
    sys.b_matrix(&st0.gamma)?;

    let s1 = sys.clone();
    let s2 = sys.clone();
    let monitors = vec![
        Monitor::new("energy", 1e-7, move |y: &DVector<f64>| {
            s1.energy(&LplusRState::unflatten(n, y).unwrap()).unwrap()
        }),
        Monitor::new("momentum", 1e-7, move |y: &DVector<f64>| {
            s2.momentum_norm(&LplusRState::unflatten(n, y).unwrap())
                .unwrap()
        }),
    ];
    let traj = integrate(
        sys.flat_field(),
        &st0.flatten(),
        config.t_final_or(50.0),
        config.dt_or(1e-3),
        &monitors,
        None,
        1,
        10,
    )?;

    let spec0 = st0.gamma_spectrum();
    let mut spectrum_drift: f64 = 0.0;
    for y in traj.states.iter().step_by(10) {
        let st = LplusRState::unflatten(n, y)?;
        for (a, b) in st.gamma_spectrum().iter().zip(spec0.iter()) {
            spectrum_drift = spectrum_drift.max((a - b).abs());
        }
    }

    let s3 = sys.clone();
    let good = liouville_residual(
        sys.flat_field(),
        move |y: &DVector<f64>| {
            s3.measure_density(&LplusRState::unflatten(n, y).unwrap().gamma)
                .unwrap()
        },
        &traj,
        config.integrator.fd_h,
        97,
    )?;
    let s4 = sys.clone();
    let rejected = liouville_residual(
        sys.flat_field(),
        move |y: &DVector<f64>| {
            s4.measure_density(&LplusRState::unflatten(n, y).unwrap().gamma)
                .unwrap()
                .powi(2)
        },
        &traj,
        config.integrator.fd_h,
        97,
    )?;

    // Engine order on the free top (zero right-invariant part).
    let free0 = LplusRState::new(
        AlgebraElement::random(n, &mut rng),
        nalgebra::DMatrix::zeros(m, m),
    )?
    .flatten();
    let run = |dt: f64| -> Result<DVector<f64>> {
        Ok(integrate(sys.flat_field(), &free0, 2.0, dt, &[], None, 1, 1)?
            .states
            .last()
            .unwrap()
            .clone())
    };
    let reference = run(1.0 / 2048.0)?;
    let coarse = run(1.0 / 64.0)?;
    let fine = run(1.0 / 128.0)?;
    let order_factor = (coarse - &reference).norm() / (fine - &reference).norm();

    let mut checks = vec![
        Check::upper("energy drift", traj.max_drift("energy").unwrap(), 1e-8),
        Check::upper("momentum norm drift", traj.max_drift("momentum").unwrap(), 1e-8),
        Check::upper("gamma spectrum drift", spectrum_drift, 1e-9),
        Check::upper("measure residual", good, 1e-6),
        Check::lower("measure residual, perturbed exponent (rejected)", rejected, 1e-2),
    ];
    checks.extend(Check::window("step-halving order factor", order_factor, 12.0, 20.0));

    let mut columns = wedge_columns("omega", n);
    for i in 1..=m {
        for j in i..=m {
            columns.push(format!("gamma_{i}{j}"));
        }
    }
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

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereParams {
    j: [f64; 3],
    mass: f64,
    radius: f64,
}

/// Rolling ball in the body frame: momentum family, energy, carried frame
/// and the invariant measure of the closed `(Ω, γ)` subsystem.
pub fn chaplygin_sphere(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: SphereParams = params_or_default(
        &config.params,
        SphereParams {
            j: [1.0, 2.0, 3.0],
            mass: 1.3,
            radius: 0.8,
        },
    )?;
    let ball = ChaplyginSphere::new(&p.j, p.mass, p.radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let st0 = ChaplyginState::random(&mut rng, 1.0);

    // The two forms of the equations agree algebraically.
    let mut k_form_residual: f64 = 0.0;
    for _ in 0..20 {
        let st = ChaplyginState::random(&mut rng, 1.0);
        k_form_residual = k_form_residual.max(ball.k_equation_residual(&st)?);
    }

    let b1 = ball.clone();
    let b2 = ball.clone();
    let b3 = ball.clone();
    let b4 = ball.clone();
    let b5 = ball.clone();
    let monitors = vec![
        Monitor::new("energy", 1e-7, move |y: &DVector<f64>| {
            b1.energy(&ChaplyginState::unflatten(y).unwrap())
        }),
        Monitor::new("k_norm", 1e-7, move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).unwrap();
            let k = b2.k_vector(&st.omega, &st.gamma);
            k.dot(&k)
        }),
        Monitor::new("k_alpha", 1e-7, move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).unwrap();
            b3.k_vector(&st.omega, &st.gamma).dot(&st.alpha)
        }),
        Monitor::new("k_beta", 1e-7, move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).unwrap();
            b4.k_vector(&st.omega, &st.gamma).dot(&st.beta)
        }),
        Monitor::new("k_gamma", 1e-7, move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).unwrap();
            b5.k_vector(&st.omega, &st.gamma).dot(&st.gamma)
        }),
    ];
    let traj = integrate(
        ball.flat_field(),
        &st0.flatten(),
        config.t_final_or(50.0),
        config.dt_or(1e-3),
        &monitors,
        None,
        1,
        config.integrator.sample_every,
    )?;

    let mut frame_residual: f64 = 0.0;
    for y in traj.states.iter() {
        frame_residual = frame_residual.max(ChaplyginState::unflatten(y)?.frame_residual());
    }

    let y0 = DVector::from_row_slice(&[
        st0.omega[0],
        st0.omega[1],
        st0.omega[2],
        st0.gamma[0],
        st0.gamma[1],
        st0.gamma[2],
    ]);
    let planar = integrate(
        ball.planar_field(),
        &y0,
        config.t_final_or(50.0).min(20.0),
        config.dt_or(1e-3),
        &[],
        None,
        1,
        10,
    )?;
    let bm = ball.clone();
    let measure = liouville_residual(
        ball.planar_field(),
        move |y: &DVector<f64>| bm.measure_density(&Vector3::new(y[3], y[4], y[5])),
        &planar,
        config.integrator.fd_h,
        37,
    )?;

    let mut checks = vec![
        Check::upper("momentum-form residual", k_form_residual, 1e-12),
        Check::upper("frame orthonormality sup", frame_residual, 1e-9),
        Check::upper("measure residual", measure, 1e-6),
    ];
    for name in ["energy", "k_norm", "k_alpha", "k_beta", "k_gamma"] {
        checks.push(Check::upper(
            format!("{name} drift"),
            traj.max_drift(name).unwrap(),
            1e-8,
        ));
    }

    Ok(ScenarioResult {
        checks,
        dumps: vec![TrajectoryDump {
            name: config.scenario.clone(),
            time_label: "t".into(),
            columns: frame_columns(),
            traj,
        }],
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    pub d: f64,
    pub rho: f64,
    pub gamma: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupportParams {
    j: [f64; 3],
    balls: Vec<BallSpec>,
}

/// Ball on fixed peripheral balls: the corrected inertia and the spatial
/// operator come from the ball data; integrals and the expanded measure are
/// verified along the run.
pub fn spherical_support(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: SupportParams = params_or_default(
        &config.params,
        SupportParams {
            j: [2.0, 3.0, 4.0],
            balls: vec![
                BallSpec {
                    d: 0.5,
                    rho: 1.0,
                    gamma: [1.0, 0.0, 0.0],
                },
                BallSpec {
                    d: 0.3,
                    rho: 0.7,
                    gamma: [0.0, 0.6, 0.8],
                },
                BallSpec {
                    d: 0.4,
                    rho: 0.9,
                    gamma: [0.0, -0.8, 0.6],
                },
            ],
        },
    )?;
    let d: Vec<f64> = p.balls.iter().map(|b| b.d).collect();
    let rho: Vec<f64> = p.balls.iter().map(|b| b.rho).collect();
    let gammas: Vec<Vector3<f64>> = p
        .balls
        .iter()
        .map(|b| Vector3::new(b.gamma[0], b.gamma[1], b.gamma[2]))
        .collect();
    let (inertia, coeffs, frame) = support_gamma_from_balls(&p.j, &d, &rho, &gammas)?;
    let sys = SphericalSupport::new(inertia, coeffs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut st0 = ChaplyginState::random(&mut rng, 1.0);
    st0.alpha = frame[0];
    st0.beta = frame[1];
    st0.gamma = frame[2];

    // Assembly consistency: direct and expanded density agree at samples.
    let mut density_mismatch: f64 = 0.0;
    for _ in 0..10 {
        let st = ChaplyginState::random(&mut rng, 1.0);
        let direct = sys.measure_density(&st)?;
        density_mismatch =
            density_mismatch.max((direct - sys.measure_density_expanded(&st)).abs() / direct);
    }

    let s1 = sys.clone();
    let s2 = sys.clone();
    let s3 = sys.clone();
    let s4 = sys.clone();
    let s5 = sys.clone();
    let monitors = vec![
        Monitor::new("energy", 1e-7, move |y: &DVector<f64>| {
            s1.energy(&ChaplyginState::unflatten(y).unwrap())
        }),
        Monitor::new("k_norm", 1e-7, move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).unwrap();
            let k = s2.k_vector(&st);
            k.dot(&k)
        }),
        Monitor::new("k_alpha", 1e-7, move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).unwrap();
            s3.k_vector(&st).dot(&st.alpha)
        }),
        Monitor::new("k_beta", 1e-7, move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).unwrap();
            s4.k_vector(&st).dot(&st.beta)
        }),
        Monitor::new("k_gamma", 1e-7, move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).unwrap();
            s5.k_vector(&st).dot(&st.gamma)
        }),
    ];
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

    let mut frame_residual: f64 = 0.0;
    for y in traj.states.iter() {
        frame_residual = frame_residual.max(ChaplyginState::unflatten(y)?.frame_residual());
    }
    let sm = sys.clone();
    let measure = liouville_residual(
        sys.flat_field(),
        move |y: &DVector<f64>| {
            sm.measure_density_expanded(&ChaplyginState::unflatten(y).unwrap())
        },
        &traj,
        config.integrator.fd_h,
        23,
    )?;

    let mut checks = vec![
        Check::upper("density formula agreement", density_mismatch, 1e-10),
        Check::upper("frame orthonormality sup", frame_residual, 1e-9),
        Check::upper("expanded measure residual", measure, 1e-6),
    ];
    for name in ["energy", "k_norm", "k_alpha", "k_beta", "k_gamma"] {
        checks.push(Check::upper(
            format!("{name} drift"),
            traj.max_drift(name).unwrap(),
            1e-8,
        ));
    }

    Ok(ScenarioResult {
        checks,
        dumps: vec![TrajectoryDump {
            name: config.scenario.clone(),
            time_label: "t".into(),
            columns: frame_columns(),
            traj,
        }],
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitParams {
    inertia: [f64; 3],
    eps_grid: Vec<f64>,
}

/// Stiff rank-one family against the constrained flow it approximates.
pub fn lplusr_limit(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: LimitParams = params_or_default(
        &config.params,
        LimitParams {
            inertia: [1.0, 2.0, 3.0],
            eps_grid: vec![10.0, 100.0, 1000.0, 10000.0],
        },
    )?;
    let inertia = Matrix3::from_diagonal(&Vector3::new(p.inertia[0], p.inertia[1], p.inertia[2]));
    let gamma0 = Vector3::new(0.0, 0.0, 1.0);
    let omega0 = Vector3::new(0.6, -0.4, 0.0);
    let report = lr_limit_sweep(
        &inertia,
        &omega0,
        &gamma0,
        &p.eps_grid,
        config.t_final_or(5.0),
        config.dt_or(1e-3),
    )?;

    let decreasing = report.deviations.windows(2).all(|w| w[1] < w[0]);
    let mut checks = vec![Check::lower(
        "deviations strictly decreasing (1 = yes)",
        if decreasing { 1.0 } else { 0.0 },
        1.0,
    )];
    checks.extend(Check::window("log-log deviation slope", report.slope, -1.2, -0.8));
    checks.push(Check::upper(
        "scaled density ratio variation",
        report.density_ratio_variation,
        1e-3,
    ));
    checks.push(Check::upper(
        "scaled density constant deviation from 1",
        (report.density_ratio_mean - 1.0).abs(),
        1e-3,
    ));

    // Dump the sweep curve as a tiny CSV.
    let mut sweep = Trajectory::default();
    for (e, d) in report.eps.iter().zip(report.deviations.iter()) {
        sweep.times.push(*e);
        sweep.states.push(DVector::from_row_slice(&[*d]));
    }
    Ok(ScenarioResult {
        checks,
        dumps: vec![TrajectoryDump {
            name: format!("{}_sweep", config.scenario),
            time_label: "eps".into(),
            columns: vec!["deviation".into()],
            traj: sweep,
        }],
    })
}
