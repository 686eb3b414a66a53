//! Numerical engine: fixed-step RK4 with constraint-projection hooks and
//! conservation monitors, an embedded adaptive pair for stiff sweeps,
//! finite-difference divergence estimation, Liouville-residual evaluation,
//! time reparameterization and rotation-number extraction.
//!
//! All integrators are deterministic: identical inputs produce bit-identical
//! trajectories.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Default finite-difference step for divergence and gradient estimates.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A scalar conservation check attached to an integration run.
///
/// Drift is measured relative to the value at the initial state,
/// `|v(t) - v(0)| / max(1, |v(0)|)`; a run aborts when any monitor exceeds
/// ten times its tolerance.
pub struct Monitor {
    name: String,
    tolerance: f64,
    eval: Box<dyn Fn(&DVector<f64>) -> f64>,
}

impl Monitor {
    pub fn new(
        name: impl Into<String>,
        tolerance: f64,
        eval: impl Fn(&DVector<f64>) -> f64 + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            tolerance,
            eval: Box::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn eval(&self, state: &DVector<f64>) -> f64 {
        (self.eval)(state)
    }
}

/// One recorded monitor channel.
#[derive(Debug, Clone)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

/// A sampled trajectory with attached monitor channels.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub channels: Vec<Channel>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Maximum relative drift of a channel against its initial value.
    pub fn max_drift(&self, name: &str) -> Option<f64> {
        let ch = self.channel(name)?;
        let v0 = *ch.values.first()?;
        let scale = v0.abs().max(1.0);
        ch.values
            .iter()
            .map(|v| (v - v0).abs() / scale)
            .fold(None, |acc, d| Some(acc.map_or(d, |m: f64| m.max(d))))
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(field: F, state: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dt <= 0.0 {
        return Err(Error::Parameter(format!("rk4 step needs dt > 0, got {dt}")));
    }
    let k1 = field(state);
    let k2 = field(&(state + &k1 * (dt / 2.0)));
    let k3 = field(&(state + &k2 * (dt / 2.0)));
    let k4 = field(&(state + &k3 * dt));
    let next = state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("rk4 step produced non-finite state".into()));
    }
    Ok(next)
}

/// Fixed-step integration with optional projection hook and monitors.
///
/// * `projection` — applied in place every `stride` accepted steps;
/// * `sample_every` — thinning factor for the recorded samples (monitors are
///   still checked at every step).
#[allow(clippy::too_many_arguments)]
pub fn integrate<F>(
    field: F,
    state0: &DVector<f64>,
    t_final: f64,
    dt: f64,
    monitors: &[Monitor],
    projection: Option<&dyn Fn(&mut DVector<f64>)>,
    stride: usize,
    sample_every: usize,
) -> Result<Trajectory>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dt <= 0.0 {
        return Err(Error::Parameter(format!("integrate needs dt > 0, got {dt}")));
    }
    if t_final < 0.0 {
        return Err(Error::Parameter(format!(
            "integrate needs t_final >= 0, got {t_final}"
        )));
    }
    let sample_every = sample_every.max(1);
    let stride = stride.max(1);
    let steps = (t_final / dt).round() as usize;

    let baselines: Vec<f64> = monitors.iter().map(|m| m.eval(state0)).collect();

    let mut traj = Trajectory {
        times: Vec::with_capacity(steps / sample_every + 2),
        states: Vec::with_capacity(steps / sample_every + 2),
        channels: monitors
            .iter()
            .map(|m| Channel {
                name: m.name.clone(),
                values: Vec::with_capacity(steps / sample_every + 2),
            })
            .collect(),
    };

    let mut state = state0.clone();
    let record = |traj: &mut Trajectory, t: f64, y: &DVector<f64>, vals: &[f64]| {
        traj.times.push(t);
        traj.states.push(y.clone());
        for (ch, v) in traj.channels.iter_mut().zip(vals.iter()) {
            ch.values.push(*v);
        }
    };
    record(&mut traj, 0.0, &state, &baselines);

    for step in 1..=steps {
        state = rk4_step(&field, &state, dt)?;
        if let Some(proj) = projection {
            if step % stride == 0 {
                proj(&mut state);
            }
        }
        let t = step as f64 * dt;
        let mut vals = Vec::with_capacity(monitors.len());
        for (m, v0) in monitors.iter().zip(baselines.iter()) {
            let v = m.eval(&state);
            let drift = (v - v0).abs() / v0.abs().max(1.0);
            if drift > 10.0 * m.tolerance {
                return Err(Error::Integrity {
                    monitor: m.name.clone(),
                    time: t,
                    drift,
                    limit: 10.0 * m.tolerance,
                });
            }
            vals.push(v);
        }
        if step % sample_every == 0 || step == steps {
            record(&mut traj, t, &state, &vals);
        }
    }
    Ok(traj)
}

/// Embedded Cash-Karp 4(5) step: returns the fifth-order solution and an
/// error estimate against the embedded fourth-order one.
fn cash_karp_step<F>(field: &F, y: &DVector<f64>, dt: f64) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = field(y);
    let k2 = field(&(y + &k1 * (dt / 5.0)));
    let k3 = field(&(y + &k1 * (3.0 * dt / 40.0) + &k2 * (9.0 * dt / 40.0)));
    let k4 =
        field(&(y + &k1 * (3.0 * dt / 10.0) - &k2 * (9.0 * dt / 10.0) + &k3 * (6.0 * dt / 5.0)));
    let k5 = field(
        &(y - &k1 * (11.0 * dt / 54.0) + &k2 * (5.0 * dt / 2.0) - &k3 * (70.0 * dt / 27.0)
            + &k4 * (35.0 * dt / 27.0)),
    );
    let k6 = field(
        &(y + &k1 * (1631.0 * dt / 55296.0)
            + &k2 * (175.0 * dt / 512.0)
            + &k3 * (575.0 * dt / 13824.0)
            + &k4 * (44275.0 * dt / 110592.0)
            + &k5 * (253.0 * dt / 4096.0)),
    );
    let y5 = y + (&k1 * (37.0 / 378.0)
        + &k3 * (250.0 / 621.0)
        + &k4 * (125.0 / 594.0)
        + &k6 * (512.0 / 1771.0))
        * dt;
    let y4 = y + (&k1 * (2825.0 / 27648.0)
        + &k3 * (18575.0 / 48384.0)
        + &k4 * (13525.0 / 55296.0)
        + &k5 * (277.0 / 14336.0)
        + &k6 * 0.25)
        * dt;
    let err = (&y5 - &y4).norm();
    (y5, err)
}

/// Adaptive integration with the embedded Cash-Karp pair.
///
/// Used for stiff parameter sweeps; the record density follows the accepted
/// steps. `tol` is the per-step absolute error target.
pub fn integrate_adaptive<F>(
    field: F,
    state0: &DVector<f64>,
    t_final: f64,
    tol: f64,
    dt_max: f64,
) -> Result<Trajectory>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if t_final < 0.0 || tol <= 0.0 || dt_max <= 0.0 {
        return Err(Error::Parameter("invalid adaptive integration setup".into()));
    }
    let mut traj = Trajectory::default();
    let mut t = 0.0;
    let mut y = state0.clone();
    let mut dt = dt_max;
    traj.times.push(0.0);
    traj.states.push(y.clone());
    let mut guard = 0usize;
    while t < t_final {
        dt = dt.min(t_final - t).min(dt_max);
        let (y_next, err) = cash_karp_step(&field, &y, dt);
        if !err.is_finite() {
            return Err(Error::Numeric("adaptive step produced non-finite state".into()));
        }
        if err <= tol || dt <= 1e-12 {
            t += dt;
            y = y_next;
            traj.times.push(t);
            traj.states.push(y.clone());
            let grow = if err > 0.0 {
                0.9 * (tol / err).powf(0.2)
            } else {
                5.0
            };
            dt *= grow.clamp(0.2, 5.0);
        } else {
            dt *= (0.9 * (tol / err).powf(0.25)).clamp(0.1, 1.0);
        }
        guard += 1;
        if guard > 50_000_000 {
            return Err(Error::Numeric("adaptive integration stalled".into()));
        }
    }
    Ok(traj)
}

/// Central-difference estimate of the divergence of `field` at `state`.
pub fn divergence_estimate<F>(field: F, state: &DVector<f64>, h: f64) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if h <= 0.0 {
        return Err(Error::Parameter(format!(
            "divergence step must be > 0, got {h}"
        )));
    }
    let mut div = 0.0;
    let mut probe = state.clone();
    for i in 0..state.len() {
        probe[i] = state[i] + h;
        let fp = field(&probe)[i];
        probe[i] = state[i] - h;
        let fm = field(&probe)[i];
        probe[i] = state[i];
        let d = (fp - fm) / (2.0 * h);
        if !d.is_finite() {
            return Err(Error::Numeric("divergence estimate hit a non-finite value".into()));
        }
        div += d;
    }
    Ok(div)
}

/// Supremum of the Liouville residual `|d/dt ln μ + div f|` along a
/// trajectory.
///
/// The time derivative of `ln μ` is evaluated through the chain rule,
/// `∇(ln μ)·f`, with central differences in state (step `h`), which keeps
/// the residual free of sampling error. `sample_stride` thins the evaluation
/// points.
pub fn liouville_residual<F, G>(
    field: F,
    density: G,
    traj: &Trajectory,
    h: f64,
    sample_stride: usize,
) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> f64,
{
    let stride = sample_stride.max(1);
    let mut sup: f64 = 0.0;
    let mut probe;
    for state in traj.states.iter().step_by(stride) {
        let mu = density(state);
        if !(mu > 0.0) {
            return Err(Error::Measure(format!(
                "density must stay positive along the trajectory, got {mu}"
            )));
        }
        let f = field(state);
        // d/dt ln(mu) = grad(ln mu) . f
        let mut dlnmu = 0.0;
        probe = state.clone();
        for i in 0..state.len() {
            probe[i] = state[i] + h;
            let lp = density(&probe).ln();
            probe[i] = state[i] - h;
            let lm = density(&probe).ln();
            probe[i] = state[i];
            dlnmu += (lp - lm) / (2.0 * h) * f[i];
        }
        let div = divergence_estimate(&field, state, h)?;
        let res = (dlnmu + div).abs();
        if !res.is_finite() {
            return Err(Error::Numeric("liouville residual non-finite".into()));
        }
        sup = sup.max(res);
    }
    Ok(sup)
}

/// Cubic Hermite interpolation on a nonuniform grid (three-point slopes).
pub(crate) fn hermite_resample(xs: &[f64], ys: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = xs.len();
    debug_assert!(n >= 2);
    let mut slopes = vec![0.0; n];
    for k in 0..n {
        if k == 0 {
            slopes[k] = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        } else if k == n - 1 {
            slopes[k] = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        } else {
            let h0 = xs[k] - xs[k - 1];
            let h1 = xs[k + 1] - xs[k];
            // Weighted three-point formula, exact for quadratics.
            slopes[k] = (h1 * (ys[k] - ys[k - 1]) / h0 + h0 * (ys[k + 1] - ys[k]) / h1) / (h0 + h1);
        }
    }
    let mut out = Vec::with_capacity(targets.len());
    let mut seg = 0usize;
    for &x in targets {
        while seg + 2 < n && xs[seg + 1] < x {
            seg += 1;
        }
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let hseg = x1 - x0;
        let u = ((x - x0) / hseg).clamp(0.0, 1.0);
        let (y0, y1) = (ys[seg], ys[seg + 1]);
        let (m0, m1) = (slopes[seg] * hseg, slopes[seg + 1] * hseg);
        let u2 = u * u;
        let u3 = u2 * u;
        let val = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * m1;
        out.push(val);
    }
    out
}

/// Time substitution `dτ = rate(y) dt`: integrates the rate by the
/// trapezoid rule and resamples states (and channels) onto a uniform `τ`
/// grid with cubic interpolation.
pub fn reparameterize<G>(traj: &Trajectory, rate: G) -> Result<Trajectory>
where
    G: Fn(&DVector<f64>) -> f64,
{
    let n = traj.len();
    if n < 2 {
        return Ok(traj.clone());
    }
    let rates: Vec<f64> = traj.states.iter().map(|s| rate(s)).collect();
    if let Some(bad) = rates.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::Rate(format!(
            "reparameterization rate must stay positive, got {bad}"
        )));
    }
    let mut tau = vec![0.0; n];
    for k in 1..n {
        let dt = traj.times[k] - traj.times[k - 1];
        tau[k] = tau[k - 1] + 0.5 * (rates[k] + rates[k - 1]) * dt;
    }
    let dtau = tau[n - 1] / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|k| k as f64 * dtau).collect();

    let dim = traj.states[0].len();
    let mut new_states = vec![DVector::zeros(dim); n];
    let mut column = vec![0.0; n];
    for i in 0..dim {
        for (k, s) in traj.states.iter().enumerate() {
            column[k] = s[i];
        }
        let vals = hermite_resample(&tau, &column, &grid);
        for (k, v) in vals.into_iter().enumerate() {
            new_states[k][i] = v;
        }
    }
    let channels = traj
        .channels
        .iter()
        .map(|ch| Channel {
            name: ch.name.clone(),
            values: hermite_resample(&tau, &ch.values, &grid),
        })
        .collect();
    Ok(Trajectory {
        times: grid,
        states: new_states,
        channels,
    })
}

/// Rotation-number estimate of a planar series by unwrapped-phase linear
/// regression. Returns `(frequency, standard_error)`.
///
/// Sampling must be fine enough that the phase advances by less than π
/// between consecutive samples.
pub fn rotation_number(times: &[f64], xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = times.len();
    if n < 3 || xs.len() != n || ys.len() != n {
        return Err(Error::Parameter(
            "rotation number needs >= 3 aligned samples".into(),
        ));
    }
    let mut phase = vec![0.0; n];
    let mut prev = ys[0].atan2(xs[0]);
    let mut acc = prev;
    let mut min_r2 = f64::INFINITY;
    let mut max_r2 = 0.0f64;
    phase[0] = acc;
    for k in 1..n {
        let r2 = xs[k] * xs[k] + ys[k] * ys[k];
        min_r2 = min_r2.min(r2);
        max_r2 = max_r2.max(r2);
        let th = ys[k].atan2(xs[k]);
        let mut d = th - prev;
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        while d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        acc += d;
        phase[k] = acc;
        prev = th;
    }
    if max_r2 == 0.0 || min_r2 < 1e-18 * max_r2 {
        return Err(Error::DegenerateOrbit(format!(
            "orbit radius collapsed (min r^2 = {min_r2:.3e})"
        )));
    }
    // Least-squares slope of phase against time.
    let tm = times.iter().sum::<f64>() / n as f64;
    let pm = phase.iter().sum::<f64>() / n as f64;
    let mut stt = 0.0;
    let mut stp = 0.0;
    for k in 0..n {
        stt += (times[k] - tm) * (times[k] - tm);
        stp += (times[k] - tm) * (phase[k] - pm);
    }
    if stt == 0.0 {
        return Err(Error::Parameter("degenerate time grid".into()));
    }
    let slope = stp / stt;
    let mut sse = 0.0;
    for k in 0..n {
        let r = phase[k] - pm - slope * (times[k] - tm);
        sse += r * r;
    }
    let stderr = if n > 2 {
        (sse / (n as f64 - 2.0) / stt).sqrt()
    } else {
        0.0
    };
    Ok((slope, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::{hat, polar_factor};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, Vector3};

    #[test]
    fn rk4_matches_degree_four_taylor_on_linear_fields() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.2, -1.0, 0.0, 0.3, 0.1, -0.5, 0.0]);
        let y0 = DVector::from_row_slice(&[1.0, -0.4, 0.7]);
        let dt = 1e-2;
        let stepped = rk4_step(|y| &a * y, &y0, dt).unwrap();
        let mut taylor = y0.clone();
        let mut term = y0.clone();
        for k in 1..=4 {
            term = (&a * term) * (dt / k as f64);
            taylor += &term;
        }
        assert!((stepped - taylor).norm() < 1e-14);
    }

    #[test]
    fn rk4_zero_field_is_identity() {
        let y0 = DVector::from_row_slice(&[1.0, 2.0]);
        let y1 = rk4_step(|y| DVector::zeros(y.len()), &y0, 0.1).unwrap();
        assert_eq!(y0, y1);
    }

    #[test]
    fn harmonic_oscillator_energy_drift_is_tiny() {
        let field = |y: &DVector<f64>| DVector::from_row_slice(&[y[1], -y[0]]);
        let energy = |y: &DVector<f64>| 0.5 * (y[0] * y[0] + y[1] * y[1]);
        let monitors = vec![Monitor::new("energy", 1e-9, energy)];
        let y0 = DVector::from_row_slice(&[1.0, 0.0]);
        let traj = integrate(field, &y0, 10.0, 1e-3, &monitors, None, 1, 10).unwrap();
        assert!(traj.max_drift("energy").unwrap() < 1e-10);
    }

    #[test]
    fn zero_horizon_yields_single_sample() {
        let field = |y: &DVector<f64>| y.clone();
        let y0 = DVector::from_row_slice(&[1.0]);
        let traj = integrate(field, &y0, 0.0, 1e-2, &[], None, 1, 1).unwrap();
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn monitor_blowup_aborts_with_name_and_time() {
        // Exponential growth destroys the "conserved" first coordinate.
        let field = |y: &DVector<f64>| y.clone();
        let monitors = vec![Monitor::new("first", 1e-6, |y: &DVector<f64>| y[0])];
        let y0 = DVector::from_row_slice(&[1.0]);
        let err = integrate(field, &y0, 10.0, 1e-2, &monitors, None, 1, 1).unwrap_err();
        match err {
            Error::Integrity { monitor, time, .. } => {
                assert_eq!(monitor, "first");
                assert!(time > 0.0);
            }
            other => panic!("expected integrity error, got {other}"),
        }
    }

    #[test]
    fn step_halving_shows_fourth_order() {
        // Free rigid body on so(3) in vector form.
        let inertia = Vector3::new(1.0, 2.0, 3.0);
        let field = move |y: &DVector<f64>| {
            let w = Vector3::new(y[0], y[1], y[2]);
            let iw = Vector3::new(inertia[0] * w[0], inertia[1] * w[1], inertia[2] * w[2]);
            let t = iw.cross(&w);
            DVector::from_row_slice(&[t[0] / inertia[0], t[1] / inertia[1], t[2] / inertia[2]])
        };
        let y0 = DVector::from_row_slice(&[0.3, 1.0, -0.5]);
        let t_final = 2.0;
        let run = |dt: f64| {
            integrate(field, &y0, t_final, dt, &[], None, 1, 1)
                .unwrap()
                .states
                .last()
                .unwrap()
                .clone()
        };
        let reference = run(1.0 / 2048.0);
        let coarse = run(1.0 / 64.0);
        let fine = run(1.0 / 128.0);
        let factor = (coarse - &reference).norm() / (fine - &reference).norm();
        assert!(
            (12.0..=20.0).contains(&factor),
            "error reduction factor {factor} outside [12, 20]"
        );
    }

    #[test]
    fn adaptive_pair_meets_tolerance() {
        let field = |y: &DVector<f64>| DVector::from_row_slice(&[y[1], -y[0]]);
        let y0 = DVector::from_row_slice(&[1.0, 0.0]);
        let traj = integrate_adaptive(field, &y0, 10.0, 1e-10, 0.5).unwrap();
        let last = traj.states.last().unwrap();
        assert!((last[0] - 10.0f64.cos()).abs() < 1e-7);
        assert!((last[1] + 10.0f64.sin()).abs() < 1e-7);
        assert_abs_diff_eq!(*traj.times.last().unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn divergence_of_linear_field_is_the_trace() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 1.0, 0.0, 0.0, -2.0, 1.0, 3.0, 0.0, 0.7]);
        let y = DVector::from_row_slice(&[0.3, -1.0, 0.2]);
        let div = divergence_estimate(|v| &a * v, &y, 1e-5).unwrap();
        assert_abs_diff_eq!(div, 0.5 - 2.0 + 0.7, epsilon = 1e-9);
    }

    #[test]
    fn divergence_of_euler_top_vanishes() {
        let inertia = Vector3::new(1.0, 2.0, 3.0);
        let field = move |y: &DVector<f64>| {
            let w = Vector3::new(y[0], y[1], y[2]);
            let iw = Vector3::new(inertia[0] * w[0], inertia[1] * w[1], inertia[2] * w[2]);
            let t = iw.cross(&w);
            DVector::from_row_slice(&[t[0] / inertia[0], t[1] / inertia[1], t[2] / inertia[2]])
        };
        let y = DVector::from_row_slice(&[0.4, -0.8, 1.1]);
        assert!(divergence_estimate(field, &y, 1e-5).unwrap().abs() < 1e-8);
    }

    #[test]
    fn liouville_residual_detects_wrong_density() {
        // Divergence-free field with constant density: residual ~ 0.
        let field = |y: &DVector<f64>| DVector::from_row_slice(&[y[1], -y[0]]);
        let y0 = DVector::from_row_slice(&[1.0, 0.0]);
        let traj = integrate(field, &y0, 1.0, 1e-2, &[], None, 1, 1).unwrap();
        let ok = liouville_residual(field, |_| 1.0, &traj, 1e-5, 5).unwrap();
        assert!(ok < 1e-8);
        // A fake state-dependent density must fail loudly.
        let bad = liouville_residual(
            field,
            |y: &DVector<f64>| (1.0 + y[0] * y[0]).sqrt(),
            &traj,
            1e-5,
            5,
        )
        .unwrap();
        assert!(bad > 1e-2);
    }

    #[test]
    fn reparameterize_constant_rates() {
        let field = |y: &DVector<f64>| DVector::from_row_slice(&[y[1], -y[0]]);
        let y0 = DVector::from_row_slice(&[1.0, 0.0]);
        let traj = integrate(field, &y0, 2.0, 1e-3, &[], None, 1, 1).unwrap();
        // rate = 1: identity up to resampling error.
        let same = reparameterize(&traj, |_| 1.0).unwrap();
        let max_err = traj
            .states
            .iter()
            .zip(same.states.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-10);
        // rate = 2: tau = 2 t.
        let double = reparameterize(&traj, |_| 2.0).unwrap();
        assert_abs_diff_eq!(*double.times.last().unwrap(), 4.0, epsilon = 1e-12);
        // Monotone time grid.
        assert!(double.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn reparameterize_rejects_nonpositive_rate() {
        let field = |y: &DVector<f64>| DVector::from_row_slice(&[y[1], -y[0]]);
        let y0 = DVector::from_row_slice(&[1.0, 0.0]);
        // cos(t) changes sign inside the horizon.
        let traj = integrate(field, &y0, 2.0, 1e-2, &[], None, 1, 1).unwrap();
        assert!(matches!(
            reparameterize(&traj, |y: &DVector<f64>| y[0]),
            Err(Error::Rate(_))
        ));
    }

    #[test]
    fn rotation_number_of_pure_rotation() {
        let omega = 0.73;
        let n = 20_000;
        let dt = 1e-2;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let xs: Vec<f64> = times.iter().map(|t| (omega * t).cos()).collect();
        let ys: Vec<f64> = times.iter().map(|t| (omega * t).sin()).collect();
        let (freq, _) = rotation_number(&times, &xs, &ys).unwrap();
        assert_abs_diff_eq!(freq, omega, epsilon = 1e-10);
    }

    #[test]
    fn rotation_number_with_speed_modulation() {
        // Phase advances nonuniformly but the mean frequency stays exact.
        let omega = 0.51;
        let n = 400_000;
        let dt = 5e-2;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let phase: Vec<f64> = times
            .iter()
            .map(|t| omega * t + 0.3 * (1.3 * t).sin())
            .collect();
        let xs: Vec<f64> = phase.iter().map(|p| p.cos()).collect();
        let ys: Vec<f64> = phase.iter().map(|p| p.sin()).collect();
        let (freq, _) = rotation_number(&times, &xs, &ys).unwrap();
        assert!((freq - omega).abs() < 1e-6);
    }

    #[test]
    fn rotation_number_rejects_collapsed_orbit() {
        let times = vec![0.0, 1.0, 2.0];
        let xs = vec![1.0, 0.0, 0.0];
        let ys = vec![0.0, 0.0, 0.0];
        assert!(matches!(
            rotation_number(&times, &xs, &ys),
            Err(Error::DegenerateOrbit(_))
        ));
    }

    #[test]
    fn group_reorthogonalization_hook_bounds_drift() {
        // Kinematic equation g' = g·hat(w) for constant w, flattened row-major.
        let w = hat(&Vector3::new(0.4, -0.9, 1.3));
        let wmat = w.mat().clone();
        let field = move |y: &DVector<f64>| {
            let g = DMatrix::from_row_slice(3, 3, y.as_slice());
            let dg = &g * &wmat;
            DVector::from_row_slice(dg.transpose().as_slice())
        };
        let proj = |y: &mut DVector<f64>| {
            let g = DMatrix::from_row_slice(3, 3, y.as_slice());
            if let Ok(q) = polar_factor(&g) {
                y.copy_from(&DVector::from_row_slice(q.transpose().as_slice()));
            }
        };
        let g0 = DMatrix::identity(3, 3);
        let y0 = DVector::from_row_slice(g0.transpose().as_slice());
        let traj = integrate(field, &y0, 50.0, 1e-3, &[], Some(&proj), 100, 100).unwrap();
        let last = DMatrix::from_row_slice(3, 3, traj.states.last().unwrap().as_slice());
        let drift = (last.transpose() * &last - DMatrix::identity(3, 3)).norm();
        assert!(drift < 1e-10, "orthogonality drift {drift}");
        // The hook is idempotent.
        let mut once = traj.states.last().unwrap().clone();
        proj(&mut once);
        let mut twice = once.clone();
        proj(&mut twice);
        assert!((once - twice).norm() < 1e-14);
    }
}
