//! LL-family scenarios: constrained rigid bodies with left-invariant
//! constraints on `so(n)`.

use anyhow::{bail, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use nhflow::eps::{
    fk_frequencies, fk_split, from_chart, split_integrals, to_chart, ChainSystem, EpsSystem,
    SymmetricSplit,
};
use nhflow::integrate::{divergence_estimate, integrate, rotation_number, Monitor, Trajectory};
use nhflow::liealg::{commutator, killing_inner, polar_factor, AlgebraElement};
use nhflow::operators::{
    chain_operator, physical_inertia, so_chain_bases, suslov_distribution, wedge_element,
    Distribution,
};

use crate::config::{params_or_default, ResolvedConfig};
use crate::report::{wedge_columns, Check, TrajectoryDump};
use crate::scenarios::ScenarioResult;

fn eps_chart_field(
    sys: &EpsSystem,
    chart: &[AlgebraElement],
) -> impl Fn(&DVector<f64>) -> DVector<f64> {
    let sys = sys.clone();
    let chart = chart.to_vec();
    move |y: &DVector<f64>| {
        let x = from_chart(&chart, y).unwrap();
        to_chart(&chart, &sys.rhs(&x).unwrap()).unwrap()
    }
}

/// Dumps the momentum trajectory in wedge coordinates.
fn wedge_dump(
    name: &str,
    n: usize,
    chart: &[AlgebraElement],
    traj: &Trajectory,
) -> TrajectoryDump {
    let mut out = traj.clone();
    out.states = traj
        .states
        .iter()
        .map(|y| from_chart(chart, y).unwrap().to_wedge_coords())
        .collect();
    TrajectoryDump {
        name: name.into(),
        time_label: "t".into(),
        columns: wedge_columns("x", n),
        traj: out,
    }
}

fn constraint_sup(sys: &EpsSystem, chart: &[AlgebraElement], traj: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    for y in traj.states.iter() {
        let x = from_chart(chart, y).unwrap();
        for r in sys.constraint_residuals(&x).unwrap() {
            worst = worst.max(r.abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuslovParams {
    n: usize,
    r: usize,
    inertia: Vec<f64>,
}

/// Generalized rigid body with rotations restricted to the leading axes.
/// With `r = 1` the admissible momenta are all equilibria and the group
/// motion is a one-parameter subgroup, which the run verifies directly.
pub fn suslov(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: SuslovParams = params_or_default(
        &config.params,
        SuslovParams {
            n: 4,
            r: 1,
            inertia: vec![4.0, 3.0, 2.0, 1.0],
        },
    )?;
    if p.inertia.len() != p.n {
        bail!("config error: params.inertia must have length n = {}", p.n);
    }
    let a_op = physical_inertia(&p.inertia, true)?;
    let sys = EpsSystem::new(a_op, suslov_distribution(p.n, p.r)?)?;
    let chart = sys.momentum_chart()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let x0 = sys.random_admissible(&mut rng, 1.0)?;
    let e0 = sys.energy(&x0)?;
    let x0 = x0.scale((0.5 / e0).sqrt());

    let t_final = config.t_final_or(50.0);
    let dt = config.dt_or(1e-3);
    let sys_e = sys.clone();
    let chart_e = chart.clone();
    let energy = Monitor::new("energy", 1e-7, move |y: &DVector<f64>| {
        sys_e.energy(&from_chart(&chart_e, y).unwrap()).unwrap()
    });
    let field = eps_chart_field(&sys, &chart);
    let y0 = to_chart(&chart, &x0)?;
    let traj = integrate(
        &field,
        &y0,
        t_final,
        dt,
        &[energy],
        None,
        1,
        config.integrator.sample_every,
    )?;

    let mut checks = vec![
        Check::upper("energy drift", traj.max_drift("energy").unwrap(), 1e-8),
        Check::upper("constraint residual sup", constraint_sup(&sys, &chart, &traj), 1e-9),
    ];

    if p.r == 1 {
        // Symmetric-pair regime: momenta are constants of motion...
        let x_drift = traj
            .states
            .iter()
            .map(|y| (y - &y0).norm())
            .fold(0.0f64, f64::max);
        checks.push(Check::upper("momentum constancy sup", x_drift, 1e-9));

        // ...and the group motion is g(t) = g0 exp(t·ω0).
        let omega = sys.operator().apply(&x0)?;
        let omega_mat = omega.mat().clone();
        let n = p.n;
        let kin_field = move |y: &DVector<f64>| {
            let g = DMatrix::from_row_slice(n, n, y.as_slice());
            let dg = &g * &omega_mat;
            DVector::from_row_slice(dg.transpose().as_slice())
        };
        let hook = |y: &mut DVector<f64>| {
            let n = (y.len() as f64).sqrt() as usize;
            let g = DMatrix::from_row_slice(n, n, y.as_slice());
            if let Ok(q) = polar_factor(&g) {
                y.copy_from(&DVector::from_row_slice(q.transpose().as_slice()));
            }
        };
        let g0 = DMatrix::<f64>::identity(n, n);
        let gy0 = DVector::from_row_slice(g0.transpose().as_slice());
        let t_group = t_final.min(20.0);
        let stride = if config.integrator.stride > 0 {
            config.integrator.stride
        } else {
            100
        };
        let gtraj = integrate(kin_field, &gy0, t_group, dt, &[], Some(&hook), stride, 1000)?;
        let g_end = DMatrix::from_row_slice(n, n, gtraj.states.last().unwrap().as_slice());
        let expected = matrix_exp(&(omega.mat() * t_group));
        checks.push(Check::upper(
            "group motion vs one-parameter subgroup",
            (&g_end - expected).norm(),
            1e-8,
        ));
        let ortho = (g_end.transpose() * &g_end - DMatrix::identity(n, n)).norm();
        checks.push(Check::upper("group orthogonality after hook", ortho, 1e-10));
    }

    Ok(ScenarioResult {
        checks,
        dumps: vec![wedge_dump(&config.scenario, p.n, &chart, &traj)],
    })
}

/// Scaling-and-squaring matrix exponential (Taylor core).
fn matrix_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.norm();
    let squarings = norm.log2().ceil().max(0.0) as u32 + 4;
    let scaled = m / 2f64.powi(squarings as i32);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut acc = DMatrix::<f64>::identity(n, n);
    for k in 1..=16 {
        term = &term * &scaled / k as f64;
        acc += &term;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FkParams {
    inertia: Vec<f64>,
}

/// Torus frequencies of the `so(4)` body with two distinguished axes: the
/// measured rotation-number ratio must match the closed form.
pub fn suslov_fk(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: FkParams = params_or_default(
        &config.params,
        FkParams {
            inertia: vec![4.0, 3.0, 2.0, 1.0],
        },
    )?;
    if p.inertia.len() != 4 {
        bail!("config error: params.inertia must have length 4");
    }
    let a_op = physical_inertia(&p.inertia, true)?;
    let sys = EpsSystem::new(a_op, suslov_distribution(4, 2)?)?;
    let split = fk_split(4, sys.operator())?;
    let freqs = fk_frequencies(&p.inertia)?;
    let want_ratio = freqs[0] / freqs[1];

    // Dominant spin in the (1,2) plane keeps the rotation direction fixed.
    let x0 = wedge_element(1, 2, 4)?
        .scale(2.0)
        .add(&wedge_element(1, 3, 4)?.scale(0.40))?
        .add(&wedge_element(2, 3, 4)?.scale(0.30))?
        .add(&wedge_element(1, 4, 4)?.scale(0.35))?
        .add(&wedge_element(2, 4, 4)?.scale(-0.25))?;
    let chart = sys.momentum_chart()?;
    let field = eps_chart_field(&sys, &chart);
    let y0 = to_chart(&chart, &x0)?;

    let t_final = config.t_final_or(1e4);
    let dt = config.dt_or(1e-2);
    let monitors = split_monitors(&sys, &split, &chart, 1e-6);
    let traj = integrate(&field, &y0, t_final, dt, &monitors, None, 1, 5)?;

    let plane_series = |j: usize| -> (Vec<f64>, Vec<f64>) {
        let e1 = wedge_element(1, j, 4).unwrap();
        let e2 = wedge_element(2, j, 4).unwrap();
        let mut xs = Vec::with_capacity(traj.len());
        let mut ys = Vec::with_capacity(traj.len());
        for y in traj.states.iter() {
            let x = from_chart(&chart, y).unwrap();
            xs.push(killing_inner(&x, &e1).unwrap());
            ys.push(killing_inner(&x, &e2).unwrap());
        }
        (xs, ys)
    };
    let (x13, x23) = plane_series(3);
    let (x14, x24) = plane_series(4);
    let (f1, _) = rotation_number(&traj.times, &x13, &x23)?;
    let (f2, _) = rotation_number(&traj.times, &x14, &x24)?;
    let ratio = (f1 / f2).abs();

    let mut checks = vec![Check::upper(
        "rotation-number ratio deviation",
        (ratio - want_ratio).abs(),
        1e-3,
    )];
    for name in ["H", "F", "F1", "F2"] {
        checks.push(Check::upper(
            format!("{name} drift (long horizon)"),
            traj.max_drift(name).unwrap(),
            1e-7,
        ));
    }
    checks.push(Check::upper(
        "constraint residual sup",
        constraint_sup(&sys, &chart, &traj),
        1e-9,
    ));

    // The operator preserves the splitting; its flow keeps the flat measure.
    let adm = sys.distribution().admissible_basis()?;
    let dfield = {
        let sys = sys.clone();
        let adm = adm.clone();
        move |y: &DVector<f64>| {
            let x = from_chart(&adm, y).unwrap();
            to_chart(&adm, &sys.rhs_decomposed(&x).unwrap()).unwrap()
        }
    };
    let mut div_sup: f64 = 0.0;
    for y in traj.states.iter().step_by(traj.len() / 8 + 1) {
        let x = from_chart(&chart, y).unwrap();
        let yd = to_chart(&adm, &x)?;
        div_sup = div_sup.max(
            divergence_estimate(&dfield, &yd, config.integrator.fd_h)?.abs(),
        );
    }
    checks.push(Check::upper("flat-measure divergence sup", div_sup, 1e-8));

    // Keep CSV output bounded on the long run.
    let mut thin = traj.clone();
    let keep = 2000.min(thin.len());
    let step = thin.len() / keep;
    thin.times = thin.times.iter().step_by(step).cloned().collect();
    thin.states = thin.states.iter().step_by(step).cloned().collect();
    for ch in thin.channels.iter_mut() {
        ch.values = ch.values.iter().step_by(step).cloned().collect();
    }

    Ok(ScenarioResult {
        checks,
        dumps: vec![wedge_dump(&config.scenario, 4, &chart, &thin)],
    })
}

fn split_monitors(
    sys: &EpsSystem,
    split: &SymmetricSplit,
    chart: &[AlgebraElement],
    tol: f64,
) -> Vec<Monitor> {
    ["H", "F", "F1", "F2"]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let sys = sys.clone();
            let split = split.clone();
            let chart = chart.to_vec();
            Monitor::new(*name, tol, move |y: &DVector<f64>| {
                let x = from_chart(&chart, y).unwrap();
                split_integrals(&split, sys.operator(), &x).unwrap()[k]
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CartanParams {
    inertia: Vec<f64>,
    axis: [f64; 2],
}

/// Single constraint along a two-plane pair of commuting rotations: the
/// constraint vector commutes with its image and the restricted flow keeps
/// the flat measure.
pub fn eps_so4_cartan(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: CartanParams = params_or_default(
        &config.params,
        CartanParams {
            inertia: vec![4.0, 3.0, 2.0, 1.0],
            axis: [0.6, 0.8],
        },
    )?;
    if p.inertia.len() != 4 {
        bail!("config error: params.inertia must have length 4");
    }
    let (a1, a2) = (p.axis[0], p.axis[1]);
    if a1 == 0.0 || a2 == 0.0 {
        bail!("config error: both axis components must be nonzero");
    }
    let scale = (a1 * a1 + a2 * a2).sqrt();
    let a_op = physical_inertia(&p.inertia, true)?;
    let a_vec = wedge_element(1, 2, 4)?
        .scale(a1 / scale)
        .add(&wedge_element(3, 4, 4)?.scale(a2 / scale))?;
    let commutation = commutator(&a_vec, &a_op.apply(&a_vec)?)?.norm();
    let dist = Distribution::new(4, vec![a_vec.clone()])?;
    let sys = EpsSystem::new(a_op, dist)?;
    let chart = sys.momentum_chart()?;

    // Quadratic integral c1·F + c2·Pf with the coefficient ratio fixed by
    // the constraint direction and the operator eigenvalues.
    let i = &p.inertia;
    let (s12, s34) = (i[0] + i[1], i[2] + i[3]);
    let c1 = 1.0;
    let c2 = -2.0 * c1 * a1 * a2 * (s34 - s12) / (a1 * a1 * s34 - a2 * a2 * s12);
    let quad = move |x: &AlgebraElement| -> f64 {
        let f = killing_inner(x, x).unwrap();
        let pf = x.entry(1, 2) * x.entry(3, 4) - x.entry(1, 3) * x.entry(2, 4)
            + x.entry(1, 4) * x.entry(2, 3);
        c1 * f + c2 * pf
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let x0 = sys.random_admissible(&mut rng, 1.0)?;
    let e0 = sys.energy(&x0)?;
    let x0 = x0.scale((0.5 / e0).sqrt());
    let sys_e = sys.clone();
    let chart_e = chart.clone();
    let chart_q = chart.clone();
    let monitors = vec![
        Monitor::new("energy", 1e-7, move |y: &DVector<f64>| {
            sys_e.energy(&from_chart(&chart_e, y).unwrap()).unwrap()
        }),
        Monitor::new("quadratic_integral", 1e-7, move |y: &DVector<f64>| {
            quad(&from_chart(&chart_q, y).unwrap())
        }),
    ];
    let field = eps_chart_field(&sys, &chart);
    let y0 = to_chart(&chart, &x0)?;
    let traj = integrate(
        &field,
        &y0,
        config.t_final_or(50.0),
        config.dt_or(1e-3),
        &monitors,
        None,
        1,
        config.integrator.sample_every,
    )?;

    let mut div_sup: f64 = 0.0;
    for y in traj.states.iter().step_by(traj.len() / 8 + 1) {
        div_sup = div_sup.max(divergence_estimate(&field, y, config.integrator.fd_h)?.abs());
    }

    let checks = vec![
        Check::upper("constraint commutes with its image", commutation, 1e-13),
        Check::upper("energy drift", traj.max_drift("energy").unwrap(), 1e-8),
        Check::upper(
            "quadratic integral drift",
            traj.max_drift("quadratic_integral").unwrap(),
            1e-8,
        ),
        Check::upper("flat-measure divergence sup", div_sup, 1e-8),
        Check::upper("constraint residual sup", constraint_sup(&sys, &chart, &traj), 1e-9),
    ];

    Ok(ScenarioResult {
        checks,
        dumps: vec![wedge_dump(&config.scenario, 4, &chart, &traj)],
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainParams {
    a0: f64,
    s: [f64; 2],
}

/// Operator adapted to `so(2) ⊂ so(3) ⊂ so(4)`: the equations split into
/// the inner block plus linear chain equations, and the split form must
/// agree with multiplier elimination.
pub fn eps_chain(config: &ResolvedConfig) -> Result<ScenarioResult> {
    let p: ChainParams = params_or_default(
        &config.params,
        ChainParams {
            a0: 0.9,
            s: [1.7, 0.6],
        },
    )?;
    let chain_bases = so_chain_bases(2, 4)?;
    let a0 = DMatrix::identity(1, 1) * p.a0;
    let chain = chain_operator(&a0, &p.s, &chain_bases)?;
    let dist = Distribution::new(
        4,
        vec![wedge_element(2, 3, 4)?, wedge_element(3, 4, 4)?],
    )?;
    let cs = ChainSystem::new(chain, dist)?;
    let sys = cs.system().clone();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut oracle_sup: f64 = 0.0;
    for _ in 0..100 {
        let x = sys.random_admissible(&mut rng, 1.0)?;
        let a = sys.rhs(&x)?;
        let b = cs.split_rhs(&x)?;
        oracle_sup = oracle_sup.max(a.sub(&b)?.norm());
    }

    let chart = sys.momentum_chart()?;
    let x0 = sys.random_admissible(&mut rng, 1.0)?;
    let e0 = sys.energy(&x0)?;
    let x0 = x0.scale((0.5 / e0).sqrt());
    let sys_e = sys.clone();
    let chart_e = chart.clone();
    let chart_f = chart.clone();
    let g0_elem = cs.chain().g0_basis()[0].clone();
    let chart_x0 = chart.clone();
    let monitors = vec![
        Monitor::new("energy", 1e-7, move |y: &DVector<f64>| {
            sys_e.energy(&from_chart(&chart_e, y).unwrap()).unwrap()
        }),
        Monitor::new("F", 1e-7, move |y: &DVector<f64>| {
            let x = from_chart(&chart_f, y).unwrap();
            killing_inner(&x, &x).unwrap()
        }),
        Monitor::new("x0_component", 1e-9, move |y: &DVector<f64>| {
            let x = from_chart(&chart_x0, y).unwrap();
            killing_inner(&x, &g0_elem).unwrap()
        }),
    ];
    let field = eps_chart_field(&sys, &chart);
    let y0 = to_chart(&chart, &x0)?;
    let traj = integrate(
        &field,
        &y0,
        config.t_final_or(50.0),
        config.dt_or(1e-3),
        &monitors,
        None,
        1,
        config.integrator.sample_every,
    )?;

    let checks = vec![
        Check::upper("split vs multiplier elimination sup", oracle_sup, 1e-10),
        Check::upper("energy drift", traj.max_drift("energy").unwrap(), 1e-8),
        Check::upper("momentum norm drift", traj.max_drift("F").unwrap(), 1e-8),
        Check::upper(
            "inner (commutative) component drift",
            traj.max_drift("x0_component").unwrap(),
            1e-10,
        ),
        Check::upper("constraint residual sup", constraint_sup(&sys, &chart, &traj), 1e-9),
    ];

    Ok(ScenarioResult {
        checks,
        dumps: vec![wedge_dump(&config.scenario, 4, &chart, &traj)],
    })
}
