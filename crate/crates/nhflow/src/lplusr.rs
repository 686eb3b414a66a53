//! L+R systems: a left-invariant inertia perturbed by a right-invariant
//! symmetric operator, transported to the body frame.
//!
//! The closed equations on `(ω, Γ)` read, with `B = I + Γ`,
//!
//! ```text
//! B ω̇ = [Iω, ω],    Γ̇ = Γ·ad_ω + ad_ωᵀ·Γ,
//! ```
//!
//! and preserve the kinetic energy `½⟨ω, Bω⟩`, the momentum norm
//! `⟨Bω, Bω⟩`, the spectrum of `Γ` and the measure with density `√det B`
//! in the `(ω, Γ)` coordinates. The rolling-ball system and the
//! ball-on-fixed-balls support are the rank-one and rank-three instances on
//! `so(3)`, integrated here in the 3-vector chart with the general wedge
//! form kept as a cross-check.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::integrate::integrate;
use crate::liealg::{commutator, wedge_dim, wedge_pairs, AlgebraElement};
use crate::lr::veselova3::Veselova3;
use crate::operators::InertiaOperator;

/// Condition ceiling for the total inertia in stiff sweeps.
const B_COND_LIMIT: f64 = 1e14;

/// Matrix of `ad_ω : X ↦ [ω, X]` in the wedge basis.
pub fn ad_matrix(omega: &AlgebraElement) -> DMatrix<f64> {
    let n = omega.n();
    let m = wedge_dim(n);
    let mut out = DMatrix::zeros(m, m);
    for (col, pair) in wedge_pairs(n).into_iter().enumerate() {
        let e = AlgebraElement::wedge(pair, n).expect("valid pair");
        let br = commutator(omega, &e).expect("same dimension");
        out.set_column(col, &br.to_wedge_coords());
    }
    out
}

/// State of the general system: angular velocity plus the transported
/// right-invariant operator.
#[derive(Debug, Clone)]
pub struct LplusRState {
    pub omega: AlgebraElement,
    pub gamma: DMatrix<f64>,
}

impl LplusRState {
    pub fn new(omega: AlgebraElement, gamma: DMatrix<f64>) -> Result<Self> {
        let m = wedge_dim(omega.n());
        if gamma.nrows() != m || gamma.ncols() != m {
            return Err(Error::Dimension(format!(
                "gamma must be {m}x{m} for so({})",
                omega.n()
            )));
        }
        if (&gamma - gamma.transpose()).norm() > 1e-12 * (1.0 + gamma.norm()) {
            return Err(Error::State("gamma must be symmetric".into()));
        }
        Ok(Self { omega, gamma })
    }

    pub fn n(&self) -> usize {
        self.omega.n()
    }

    /// Flat chart `[ω | Γ upper triangle including the diagonal]`.
    pub fn flatten(&self) -> DVector<f64> {
        let m = self.gamma.nrows();
        let mut y = DVector::zeros(m + m * (m + 1) / 2);
        y.rows_mut(0, m).copy_from(&self.omega.to_wedge_coords());
        let mut k = m;
        for i in 0..m {
            for j in i..m {
                y[k] = self.gamma[(i, j)];
                k += 1;
            }
        }
        y
    }

    pub fn unflatten(n: usize, y: &DVector<f64>) -> Result<Self> {
        let m = wedge_dim(n);
        let want = m + m * (m + 1) / 2;
        if y.len() != want {
            return Err(Error::Dimension(format!(
                "expected {want} coordinates, got {}",
                y.len()
            )));
        }
        let omega = AlgebraElement::from_wedge_coords(n, &y.rows(0, m).into_owned())?;
        let mut gamma = DMatrix::zeros(m, m);
        let mut k = m;
        for i in 0..m {
            for j in i..m {
                gamma[(i, j)] = y[k];
                gamma[(j, i)] = y[k];
                k += 1;
            }
        }
        Ok(Self { omega, gamma })
    }

    /// Eigenvalues of `Γ`, ascending.
    pub fn gamma_spectrum(&self) -> Vec<f64> {
        let mut evs: Vec<f64> = self
            .gamma
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        evs
    }
}

/// The general system for a left inertia `I` on `so(n)`.
#[derive(Debug, Clone)]
pub struct LplusRSystem {
    i_op: InertiaOperator,
}

impl LplusRSystem {
    pub fn new(i_op: InertiaOperator) -> Self {
        Self { i_op }
    }

    pub fn n(&self) -> usize {
        self.i_op.n()
    }

    pub fn inertia(&self) -> &InertiaOperator {
        &self.i_op
    }

    /// Total inertia `B = I + Γ`; must be positive definite.
    pub fn b_matrix(&self, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let b = self.i_op.matrix() + gamma;
        let evs = b.clone().symmetric_eigen().eigenvalues;
        let min_ev = evs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_ev <= 0.0 {
            return Err(Error::DegenerateMetric(format!(
                "total inertia not positive definite (min eigenvalue {min_ev:.3e})"
            )));
        }
        Ok(b)
    }

    pub fn rhs(&self, st: &LplusRState) -> Result<LplusRState> {
        let b = self.b_matrix(&st.gamma)?;
        let i_omega = self.i_op.apply(&st.omega)?;
        let torque = commutator(&i_omega, &st.omega)?;
        let omega_dot_coords = b
            .lu()
            .solve(&torque.to_wedge_coords())
            .ok_or_else(|| Error::DegenerateMetric("total inertia solve failed".into()))?;
        let omega_dot = AlgebraElement::from_wedge_coords(self.n(), &omega_dot_coords)?;
        let ad = ad_matrix(&st.omega);
        let gamma_dot = &st.gamma * &ad + ad.transpose() * &st.gamma;
        Ok(LplusRState {
            omega: omega_dot,
            gamma: gamma_dot,
        })
    }

    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        let n = self.n();
        move |y: &DVector<f64>| {
            let st = LplusRState::unflatten(n, y).expect("chart dimensions fixed");
            self.rhs(&st).expect("total inertia positive").flatten()
        }
    }

    /// Kinetic energy `½⟨ω, Bω⟩`.
    pub fn energy(&self, st: &LplusRState) -> Result<f64> {
        let w = st.omega.to_wedge_coords();
        let b = self.i_op.matrix() + &st.gamma;
        Ok(0.5 * (b * &w).dot(&w))
    }

    /// Momentum norm `⟨Bω, Bω⟩`.
    pub fn momentum_norm(&self, st: &LplusRState) -> Result<f64> {
        let w = st.omega.to_wedge_coords();
        let bw = (self.i_op.matrix() + &st.gamma) * &w;
        Ok(bw.dot(&bw))
    }

    /// Measure density `√det(I + Γ)`.
    pub fn measure_density(&self, gamma: &DMatrix<f64>) -> Result<f64> {
        let det = (self.i_op.matrix() + gamma).determinant();
        if det <= 0.0 {
            return Err(Error::Measure(format!(
                "total inertia determinant not positive: {det:.3e}"
            )));
        }
        Ok(det.sqrt())
    }

    /// Exact value of `d/dt ⟨ω, Bω⟩` assembled from the right-hand side;
    /// vanishes identically.
    pub fn energy_derivative(&self, st: &LplusRState) -> Result<f64> {
        let dot = self.rhs(st)?;
        let w = st.omega.to_wedge_coords();
        let wd = dot.omega.to_wedge_coords();
        let b = self.i_op.matrix() + &st.gamma;
        Ok(2.0 * (b * &wd).dot(&w) + (&dot.gamma * &w).dot(&w))
    }
}

/// Body state of the rolling-ball family: angular velocity and the three
/// space-fixed unit vectors read in the body frame.
#[derive(Debug, Clone)]
pub struct ChaplyginState {
    pub omega: Vector3<f64>,
    pub alpha: Vector3<f64>,
    pub beta: Vector3<f64>,
    pub gamma: Vector3<f64>,
}

impl ChaplyginState {
    pub fn flatten(&self) -> DVector<f64> {
        let mut y = DVector::zeros(12);
        for k in 0..3 {
            y[k] = self.omega[k];
            y[3 + k] = self.alpha[k];
            y[6 + k] = self.beta[k];
            y[9 + k] = self.gamma[k];
        }
        y
    }

    pub fn unflatten(y: &DVector<f64>) -> Result<Self> {
        if y.len() != 12 {
            return Err(Error::Dimension(format!(
                "expected 12 coordinates, got {}",
                y.len()
            )));
        }
        Ok(Self {
            omega: Vector3::new(y[0], y[1], y[2]),
            alpha: Vector3::new(y[3], y[4], y[5]),
            beta: Vector3::new(y[6], y[7], y[8]),
            gamma: Vector3::new(y[9], y[10], y[11]),
        })
    }

    /// Orthonormality residual of the carried frame.
    pub fn frame_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        let vs = [&self.alpha, &self.beta, &self.gamma];
        for i in 0..3 {
            for j in i..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                r = r.max((vs[i].dot(vs[j]) - want).abs());
            }
        }
        r
    }

    /// Random right-handed orthonormal frame and an angular velocity of the
    /// given scale.
    pub fn random<R: Rng>(rng: &mut R, scale: f64) -> Self {
        let mut cols: Vec<Vector3<f64>> = Vec::with_capacity(3);
        while cols.len() < 3 {
            let mut v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            for c in &cols {
                v -= *c * v.dot(c);
            }
            if v.norm() > 0.3 {
                cols.push(v / v.norm());
            }
        }
        let alpha = cols[0];
        let beta = cols[1];
        let mut gamma = cols[2];
        if alpha.cross(&beta).dot(&gamma) < 0.0 {
            gamma = -gamma;
        }
        ChaplyginState {
            omega: Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ) * scale,
            alpha,
            beta,
            gamma,
        }
    }
}

/// Ball of inertia `J`, mass `m` and radius `a` rolling without sliding on
/// a horizontal plane, reduced to the body frame.
#[derive(Debug, Clone)]
pub struct ChaplyginSphere {
    /// `I = J + ma²·Id`.
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    j: Matrix3<f64>,
    ma2: f64,
}

impl ChaplyginSphere {
    pub fn new(j_diag: &[f64], mass: f64, radius: f64) -> Result<Self> {
        if j_diag.len() != 3 || j_diag.iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter("need three positive moments".into()));
        }
        if mass < 0.0 || radius <= 0.0 {
            return Err(Error::Parameter("need mass >= 0 and radius > 0".into()));
        }
        let ma2 = mass * radius * radius;
        let j = Matrix3::from_diagonal(&Vector3::new(j_diag[0], j_diag[1], j_diag[2]));
        let inertia = j + Matrix3::identity() * ma2;
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::Parameter("inertia singular".into()))?;
        Ok(Self {
            inertia,
            inertia_inv,
            j,
            ma2,
        })
    }

    pub fn ma2(&self) -> f64 {
        self.ma2
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    fn denominator(&self, gamma: &Vector3<f64>) -> f64 {
        1.0 - self.ma2 * (self.inertia_inv * gamma).dot(gamma)
    }

    /// Contact-point angular momentum `K = JΩ + ma²Ω - ma²(Ω,γ)γ`.
    pub fn k_vector(&self, omega: &Vector3<f64>, gamma: &Vector3<f64>) -> Vector3<f64> {
        self.j * omega + omega * self.ma2 - gamma * (self.ma2 * omega.dot(gamma))
    }

    pub fn omega_dot(&self, omega: &Vector3<f64>, gamma: &Vector3<f64>) -> Result<Vector3<f64>> {
        let den = self.denominator(gamma);
        if den <= 0.0 {
            return Err(Error::Parameter(format!(
                "rolling denominator 1 - ma²(γ,I⁻¹γ) = {den:.3e} not positive"
            )));
        }
        let torque = (self.inertia * omega).cross(omega);
        let ig = self.inertia_inv * gamma;
        let forced = torque + gamma * (self.ma2 / den * torque.dot(&ig));
        Ok(self.inertia_inv * forced)
    }

    pub fn rhs(&self, st: &ChaplyginState) -> Result<ChaplyginState> {
        Ok(ChaplyginState {
            omega: self.omega_dot(&st.omega, &st.gamma)?,
            alpha: st.alpha.cross(&st.omega),
            beta: st.beta.cross(&st.omega),
            gamma: st.gamma.cross(&st.omega),
        })
    }

    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).expect("chart dimensions fixed");
            self.rhs(&st).expect("denominator positive").flatten()
        }
    }

    /// `½(K, Ω)`.
    pub fn energy(&self, st: &ChaplyginState) -> f64 {
        0.5 * self.k_vector(&st.omega, &st.gamma).dot(&st.omega)
    }

    /// Measure density in the closed `(Ω, γ)` subsystem,
    /// `√(1 - ma²(γ, I⁻¹γ))`.
    pub fn measure_density(&self, gamma: &Vector3<f64>) -> f64 {
        self.denominator(gamma).sqrt()
    }

    /// Algebraic residual `‖K̇ - K×Ω‖` of the momentum form; vanishes
    /// identically.
    pub fn k_equation_residual(&self, st: &ChaplyginState) -> Result<f64> {
        let dot = self.rhs(st)?;
        let dk = self.j * dot.omega + dot.omega * self.ma2
            - dot.gamma * (self.ma2 * st.omega.dot(&st.gamma))
            - st.gamma * (self.ma2 * (dot.omega.dot(&st.gamma) + st.omega.dot(&dot.gamma)));
        let want = self.k_vector(&st.omega, &st.gamma).cross(&st.omega);
        Ok((dk - want).norm())
    }

    /// The closed `(Ω, γ)` subsystem used for the measure check.
    pub fn planar_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        move |y: &DVector<f64>| {
            let omega = Vector3::new(y[0], y[1], y[2]);
            let gamma = Vector3::new(y[3], y[4], y[5]);
            let dw = self.omega_dot(&omega, &gamma).expect("denominator positive");
            let dg = gamma.cross(&omega);
            DVector::from_row_slice(&[dw[0], dw[1], dw[2], dg[0], dg[1], dg[2]])
        }
    }
}

/// Ball spinning about its fixed center on `N` fixed dynamically symmetric
/// balls: an L+R system with `Γ = a·α⊗α + b·β⊗β + c·γ⊗γ` fixed in space.
#[derive(Debug, Clone)]
pub struct SphericalSupport {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    coeffs: Vector3<f64>,
}

impl SphericalSupport {
    pub fn new(inertia: Matrix3<f64>, coeffs: Vector3<f64>) -> Result<Self> {
        if (inertia - inertia.transpose()).norm() > 1e-12 {
            return Err(Error::Parameter("inertia must be symmetric".into()));
        }
        let eig = inertia.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter("inertia must be positive definite".into()));
        }
        let inertia_inv = inertia.try_inverse().unwrap();
        Ok(Self {
            inertia,
            inertia_inv,
            coeffs,
        })
    }

    pub fn coeffs(&self) -> &Vector3<f64> {
        &self.coeffs
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    /// `Γ` assembled from the carried frame.
    pub fn gamma_matrix(&self, st: &ChaplyginState) -> Matrix3<f64> {
        let (a, b, c) = (self.coeffs[0], self.coeffs[1], self.coeffs[2]);
        st.alpha * st.alpha.transpose() * a
            + st.beta * st.beta.transpose() * b
            + st.gamma * st.gamma.transpose() * c
    }

    pub fn k_vector(&self, st: &ChaplyginState) -> Vector3<f64> {
        (self.inertia + self.gamma_matrix(st)) * st.omega
    }

    pub fn rhs(&self, st: &ChaplyginState) -> Result<ChaplyginState> {
        let b = self.inertia + self.gamma_matrix(st);
        let eig = b.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
            return Err(Error::DegenerateMetric(
                "total inertia not positive definite".into(),
            ));
        }
        // B Ω̇ = IΩ × Ω, the resolved form of K̇ = K × Ω.
        let torque = (self.inertia * st.omega).cross(&st.omega);
        let omega_dot = b
            .lu()
            .solve(&torque)
            .ok_or_else(|| Error::DegenerateMetric("total inertia solve failed".into()))?;
        Ok(ChaplyginState {
            omega: omega_dot,
            alpha: st.alpha.cross(&st.omega),
            beta: st.beta.cross(&st.omega),
            gamma: st.gamma.cross(&st.omega),
        })
    }

    pub fn flat_field(&self) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        move |y: &DVector<f64>| {
            let st = ChaplyginState::unflatten(y).expect("chart dimensions fixed");
            self.rhs(&st).expect("total inertia positive").flatten()
        }
    }

    pub fn energy(&self, st: &ChaplyginState) -> f64 {
        0.5 * self.k_vector(st).dot(&st.omega)
    }

    /// `√det(I + Γ)` evaluated directly.
    pub fn measure_density(&self, st: &ChaplyginState) -> Result<f64> {
        let det = (self.inertia + self.gamma_matrix(st)).determinant();
        if det <= 0.0 {
            return Err(Error::Measure(format!(
                "total inertia determinant not positive: {det:.3e}"
            )));
        }
        Ok(det.sqrt())
    }

    /// The expanded closed form of the same density in terms of the frame.
    pub fn measure_density_expanded(&self, st: &ChaplyginState) -> f64 {
        let det_i = self.inertia.determinant();
        let (a, b, c) = (self.coeffs[0], self.coeffs[1], self.coeffs[2]);
        let ii = &self.inertia_inv;
        let i = &self.inertia;
        let term = 1.0
            + a * (ii * st.alpha).dot(&st.alpha)
            + b * (ii * st.beta).dot(&st.beta)
            + c * (ii * st.gamma).dot(&st.gamma)
            + b * c / det_i * (i * st.alpha).dot(&st.alpha)
            + a * c / det_i * (i * st.beta).dot(&st.beta)
            + a * b / det_i * (i * st.gamma).dot(&st.gamma)
            + a * b * c / det_i;
        det_i.sqrt() * term.sqrt()
    }
}

/// Corrected central inertia and spatial operator of the support built from
/// the peripheral-ball data: moments `D_k`, radii `ρ_k`, contact directions
/// `γᵏ`.
///
/// Returns the corrected inertia `I = J - Σ(D_k/ρ_k²)·Id`, the coefficients
/// `(a, b, c)` (ascending) and the right-handed eigenframe of
/// `Γ = Σ (D_k/ρ_k²) γᵏ⊗γᵏ`.
pub fn support_gamma_from_balls(
    j_diag: &[f64],
    d: &[f64],
    rho: &[f64],
    gammas: &[Vector3<f64>],
) -> Result<(Matrix3<f64>, Vector3<f64>, [Vector3<f64>; 3])> {
    if j_diag.len() != 3 || j_diag.iter().any(|&v| v <= 0.0) {
        return Err(Error::Parameter("need three positive moments".into()));
    }
    if d.len() != rho.len() || d.len() != gammas.len() || d.is_empty() {
        return Err(Error::Parameter("need matched nonempty ball data".into()));
    }
    if d.iter().any(|&v| v <= 0.0) || rho.iter().any(|&v| v <= 0.0) {
        return Err(Error::Parameter(
            "ball moments and radii must be positive".into(),
        ));
    }
    let mut gamma = Matrix3::zeros();
    let mut total = 0.0;
    for ((dk, rk), gk) in d.iter().zip(rho.iter()).zip(gammas.iter()) {
        if (gk.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Parameter("contact directions must be unit".into()));
        }
        let w = dk / (rk * rk);
        gamma += gk * gk.transpose() * w;
        total += w;
    }
    let inertia = Matrix3::from_diagonal(&Vector3::new(j_diag[0], j_diag[1], j_diag[2]))
        - Matrix3::identity() * total;
    let eig = inertia.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return Err(Error::Parameter(
            "peripheral balls exhaust the central inertia".into(),
        ));
    }

    let eig = gamma.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| eig.eigenvalues[x].partial_cmp(&eig.eigenvalues[y]).unwrap());
    let coeffs = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let mut frame = [
        Vector3::from(eig.eigenvectors.column(order[0]).into_owned()),
        Vector3::from(eig.eigenvectors.column(order[1]).into_owned()),
        Vector3::from(eig.eigenvectors.column(order[2]).into_owned()),
    ];
    if frame[0].cross(&frame[1]).dot(&frame[2]) < 0.0 {
        frame[2] = -frame[2];
    }
    Ok((inertia, coeffs, frame))
}

/// Outcome of the stiff-limit comparison against the constrained flow.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub eps: Vec<f64>,
    /// Sup-norm trajectory deviation per stiffness value.
    pub deviations: Vec<f64>,
    /// Log-log regression slope of deviation against stiffness.
    pub slope: f64,
    /// Relative variation of `√det B/√ε / √(γ, I⁻¹γ)` along the stiffest
    /// run.
    pub density_ratio_variation: f64,
    /// Mean of that ratio divided by `√det I` (tends to one).
    pub density_ratio_mean: f64,
}

/// Integrates the rank-one stiff family
/// `I Ω̇ = I (I + εγ⊗γ)⁻¹ (IΩ×Ω)`, `γ̇ = γ×Ω` for each `ε` and compares it
/// with the constrained flow it approximates; deviations must fall like
/// `1/ε`.
pub fn lr_limit_sweep(
    inertia: &Matrix3<f64>,
    omega0: &Vector3<f64>,
    gamma0: &Vector3<f64>,
    eps_list: &[f64],
    horizon: f64,
    dt0: f64,
) -> Result<SweepReport> {
    if eps_list.len() < 2 || eps_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("need an increasing stiffness grid".into()));
    }
    if omega0.dot(gamma0).abs() > 1e-12 || (gamma0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(
            "initial state must satisfy (Ω,γ) = 0 with unit γ".into(),
        ));
    }
    let v3 = Veselova3::new(*inertia)?;
    let inertia_inv = inertia.try_inverse().unwrap();

    let mut deviations = Vec::with_capacity(eps_list.len());
    let mut density_ratio_variation = 0.0;
    let mut density_ratio_mean = 0.0;
    for (k, &eps) in eps_list.iter().enumerate() {
        // Conditioning of B = I + ε γ⊗γ grows linearly in ε.
        let cond_scale = eps * (inertia_inv * gamma0).dot(gamma0);
        if cond_scale > B_COND_LIMIT {
            return Err(Error::Conditioning(format!(
                "stiffness {eps:.1e} pushes the total inertia condition past {B_COND_LIMIT:.0e}"
            )));
        }
        // The resolved form stiffens with ε; shrink the step accordingly.
        let dt = dt0.min(0.1 / eps.sqrt());
        let imat = *inertia;
        let stiff_field = move |y: &DVector<f64>| {
            let omega = Vector3::new(y[0], y[1], y[2]);
            let gamma = Vector3::new(y[3], y[4], y[5]);
            let b = imat + gamma * gamma.transpose() * eps;
            let torque = (imat * omega).cross(&omega);
            let dw = b.lu().solve(&torque).expect("B positive definite");
            let dg = gamma.cross(&omega);
            DVector::from_row_slice(&[dw[0], dw[1], dw[2], dg[0], dg[1], dg[2]])
        };
        let y0 = DVector::from_row_slice(&[
            omega0[0], omega0[1], omega0[2], gamma0[0], gamma0[1], gamma0[2],
        ]);
        let record = ((1e-2 / dt).round() as usize).max(1);
        let stiff = integrate(stiff_field, &y0, horizon, dt, &[], None, 1, record)?;
        let reference = integrate(v3.flat_field(), &y0, horizon, dt, &[], None, 1, record)?;
        let dev = stiff
            .states
            .iter()
            .zip(reference.states.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        deviations.push(dev);

        if k == eps_list.len() - 1 {
            // Scaled-density convergence on the stiffest member.
            let det_i = inertia.determinant();
            let mut ratios = Vec::with_capacity(stiff.states.len());
            for y in stiff.states.iter() {
                let gamma = Vector3::new(y[3], y[4], y[5]);
                let b = inertia + gamma * gamma.transpose() * eps;
                let scaled = (b.determinant() / eps).sqrt();
                let lr_density = (inertia_inv * gamma).dot(&gamma).sqrt();
                ratios.push(scaled / lr_density);
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            density_ratio_variation = ratios
                .iter()
                .map(|r| (r - mean).abs() / mean)
                .fold(0.0f64, f64::max);
            density_ratio_mean = mean / det_i.sqrt();
        }
    }

    // Log-log slope of the deviation curve.
    let xs: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = deviations.iter().map(|d| d.max(1e-300).ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum();
    let slope = sxy / sxx;

    Ok(SweepReport {
        eps: eps_list.to_vec(),
        deviations,
        slope,
        density_ratio_variation,
        density_ratio_mean,
    })
}

/// Random symmetric operator for generic scenario initial data.
pub fn random_symmetric<R: Rng>(m: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    (&raw + raw.transpose()) * (0.5 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{liouville_residual, Monitor};
    use crate::operators::physical_inertia;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // hat(e1) = -E23, hat(e2) = +E13, hat(e3) = -E12 in lexicographic wedge
    // order; transports vector-chart operators to the wedge chart.
    fn so3_vector_to_wedge() -> Matrix3<f64> {
        Matrix3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0)
    }

    fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |r, c| m[(r, c)])
    }

    fn generic_so3_system() -> (LplusRSystem, LplusRState) {
        let i_op = physical_inertia(&[1.0, 2.0, 3.0], false).unwrap();
        let sys = LplusRSystem::new(i_op);
        let mut rng = ChaCha8Rng::seed_from_u64(193);
        let omega = AlgebraElement::random(3, &mut rng);
        let gamma = random_symmetric(3, 0.4, &mut rng);
        (sys, LplusRState::new(omega, gamma).unwrap())
    }

    #[test]
    fn rest_state_is_an_equilibrium() {
        let (sys, st) = generic_so3_system();
        let st = LplusRState {
            omega: AlgebraElement::zeros(3),
            gamma: st.gamma,
        };
        let dot = sys.rhs(&st).unwrap();
        assert!(dot.omega.norm() < 1e-15);
        assert!(dot.gamma.norm() < 1e-15);
    }

    #[test]
    fn zero_gamma_reduces_to_the_free_flow() {
        let i_op = physical_inertia(&[1.0, 2.0, 3.0], false).unwrap();
        let a_op = i_op.inverse().unwrap();
        let sys = LplusRSystem::new(i_op.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(197);
        let omega = AlgebraElement::random(3, &mut rng);
        let st = LplusRState::new(omega.clone(), DMatrix::zeros(3, 3)).unwrap();
        let dot = sys.rhs(&st).unwrap();
        // x = Iω obeys ẋ = [x, A x].
        let x = i_op.apply(&omega).unwrap();
        let want = commutator(&x, &a_op.apply(&x).unwrap()).unwrap();
        let got = i_op.apply(&dot.omega).unwrap();
        assert!(got.sub(&want).unwrap().norm() < 1e-12);
        assert!(dot.gamma.norm() < 1e-15);
    }

    #[test]
    fn energy_derivative_vanishes_analytically() {
        let (sys, st) = generic_so3_system();
        assert!(sys.energy_derivative(&st).unwrap().abs() < 1e-12);
        // Also on so(4).
        let i_op = physical_inertia(&[4.0, 3.0, 2.0, 1.0], false).unwrap();
        let sys = LplusRSystem::new(i_op);
        let mut rng = ChaCha8Rng::seed_from_u64(199);
        let st = LplusRState::new(
            AlgebraElement::random(4, &mut rng),
            random_symmetric(6, 0.4, &mut rng),
        )
        .unwrap();
        assert!(sys.energy_derivative(&st).unwrap().abs() < 1e-12);
    }

    #[test]
    fn invariants_and_measure_along_the_flow() {
        let (sys, st0) = generic_so3_system();
        let s1 = sys.clone();
        let s2 = sys.clone();
        let monitors = vec![
            Monitor::new("energy", 1e-8, move |y: &DVector<f64>| {
                s1.energy(&LplusRState::unflatten(3, y).unwrap()).unwrap()
            }),
            Monitor::new("momentum", 1e-8, move |y: &DVector<f64>| {
                s2.momentum_norm(&LplusRState::unflatten(3, y).unwrap())
                    .unwrap()
            }),
        ];
        let traj = integrate(
            sys.flat_field(),
            &st0.flatten(),
            20.0,
            1e-3,
            &monitors,
            None,
            1,
            20,
        )
        .unwrap();
        assert!(traj.max_drift("energy").unwrap() < 1e-9);
        assert!(traj.max_drift("momentum").unwrap() < 1e-9);

        // Spectrum of Γ is carried along unchanged.
        let spec0 = st0.gamma_spectrum();
        let last = LplusRState::unflatten(3, traj.states.last().unwrap()).unwrap();
        for (a, b) in last.gamma_spectrum().iter().zip(spec0.iter()) {
            assert!((a - b).abs() < 1e-9, "spectrum drift {}", (a - b).abs());
        }

        // Liouville residual of sqrt(det B), and a negative control.
        let s3 = sys.clone();
        let good = liouville_residual(
            sys.flat_field(),
            move |y: &DVector<f64>| {
                s3.measure_density(&LplusRState::unflatten(3, y).unwrap().gamma)
                    .unwrap()
            },
            &traj,
            1e-5,
            29,
        )
        .unwrap();
        assert!(good < 1e-6, "liouville residual {good}");
        let s4 = sys.clone();
        let bad = liouville_residual(
            sys.flat_field(),
            move |y: &DVector<f64>| {
                s4.measure_density(&LplusRState::unflatten(3, y).unwrap().gamma)
                    .unwrap()
                    .powi(2)
            },
            &traj,
            1e-5,
            29,
        )
        .unwrap();
        assert!(bad > 1e-2, "negative control {bad}");
    }

    #[test]
    fn massless_ball_is_a_free_top() {
        let ball = ChaplyginSphere::new(&[1.0, 2.0, 3.0], 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(211);
        let st = ChaplyginState::random(&mut rng, 1.0);
        let dot = ball.rhs(&st).unwrap();
        let want =
            ball.inertia().try_inverse().unwrap() * (ball.inertia() * st.omega).cross(&st.omega);
        assert!((dot.omega - want).norm() < 1e-14);
    }

    #[test]
    fn momentum_form_agrees_with_resolved_form() {
        let ball = ChaplyginSphere::new(&[1.0, 2.0, 3.0], 1.3, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(223);
        for _ in 0..20 {
            let st = ChaplyginState::random(&mut rng, 1.0);
            let r = ball.k_equation_residual(&st).unwrap();
            assert!(r < 1e-12, "momentum-form residual {r}");
        }
    }

    #[test]
    fn rolling_ball_invariants_and_measure() {
        let ball = ChaplyginSphere::new(&[1.0, 2.0, 3.0], 1.3, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(227);
        let st0 = ChaplyginState::random(&mut rng, 1.0);
        let b1 = ball.clone();
        let b2 = ball.clone();
        let b3 = ball.clone();
        let b4 = ball.clone();
        let b5 = ball.clone();
        let monitors = vec![
            Monitor::new("energy", 1e-8, move |y: &DVector<f64>| {
                b1.energy(&ChaplyginState::unflatten(y).unwrap())
            }),
            Monitor::new("k_norm", 1e-8, move |y: &DVector<f64>| {
                let st = ChaplyginState::unflatten(y).unwrap();
                let k = b2.k_vector(&st.omega, &st.gamma);
                k.dot(&k)
            }),
            Monitor::new("k_alpha", 1e-8, move |y: &DVector<f64>| {
                let st = ChaplyginState::unflatten(y).unwrap();
                b3.k_vector(&st.omega, &st.gamma).dot(&st.alpha)
            }),
            Monitor::new("k_beta", 1e-8, move |y: &DVector<f64>| {
                let st = ChaplyginState::unflatten(y).unwrap();
                b4.k_vector(&st.omega, &st.gamma).dot(&st.beta)
            }),
            Monitor::new("k_gamma", 1e-8, move |y: &DVector<f64>| {
                let st = ChaplyginState::unflatten(y).unwrap();
                b5.k_vector(&st.omega, &st.gamma).dot(&st.gamma)
            }),
        ];
        let traj = integrate(
            ball.flat_field(),
            &st0.flatten(),
            20.0,
            1e-3,
            &monitors,
            None,
            1,
            20,
        )
        .unwrap();
        for name in ["energy", "k_norm", "k_alpha", "k_beta", "k_gamma"] {
            let d = traj.max_drift(name).unwrap();
            assert!(d < 1e-9, "{name} drift {d}");
        }
        let frame = ChaplyginState::unflatten(traj.states.last().unwrap())
            .unwrap()
            .frame_residual();
        assert!(frame < 1e-9, "frame residual {frame}");

        // Invariant measure on the closed (Ω, γ) subsystem.
        let y0 = DVector::from_row_slice(&[
            st0.omega[0],
            st0.omega[1],
            st0.omega[2],
            st0.gamma[0],
            st0.gamma[1],
            st0.gamma[2],
        ]);
        let planar = integrate(ball.planar_field(), &y0, 20.0, 1e-3, &[], None, 1, 20).unwrap();
        let bm = ball.clone();
        let res = liouville_residual(
            ball.planar_field(),
            move |y: &DVector<f64>| bm.measure_density(&Vector3::new(y[3], y[4], y[5])),
            &planar,
            1e-5,
            29,
        )
        .unwrap();
        assert!(res < 1e-6, "liouville residual {res}");
    }

    #[test]
    fn rolling_ball_matches_the_general_wedge_form() {
        // Rank-one spatial operator under the vector/wedge transport: the
        // 3-vector chart and the general form give the same flow.
        let ball = ChaplyginSphere::new(&[1.0, 2.0, 3.0], 1.3, 0.8).unwrap();
        let t = so3_vector_to_wedge();
        let i_wedge = t * ball.inertia() * t.transpose();
        let sys = LplusRSystem::new(InertiaOperator::new(3, to_dmatrix(&i_wedge)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(229);
        for _ in 0..10 {
            let st = ChaplyginState::random(&mut rng, 1.0);
            let gamma_vec = st.gamma * st.gamma.transpose() * (-ball.ma2());
            let gamma_wedge = t * gamma_vec * t.transpose();
            let omega_alg = crate::liealg::hat(&st.omega);
            let general = sys
                .rhs(&LplusRState::new(omega_alg, to_dmatrix(&gamma_wedge)).unwrap())
                .unwrap();
            let dw_vec = ball.omega_dot(&st.omega, &st.gamma).unwrap();
            let want = crate::liealg::hat(&dw_vec);
            assert!(
                general.omega.sub(&want).unwrap().norm() < 1e-12,
                "wedge form disagrees with the vector chart"
            );
        }
    }

    #[test]
    fn support_reduces_to_free_top_without_balls() {
        let sys = SphericalSupport::new(
            Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)),
            Vector3::zeros(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(233);
        let st = ChaplyginState::random(&mut rng, 1.0);
        let dot = sys.rhs(&st).unwrap();
        let want =
            sys.inertia().try_inverse().unwrap() * (sys.inertia() * st.omega).cross(&st.omega);
        assert!((dot.omega - want).norm() < 1e-13);
    }

    #[test]
    fn support_invariants_and_expanded_measure() {
        let sys = SphericalSupport::new(
            Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)),
            Vector3::new(0.4, 0.7, 1.1),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(239);
        let st0 = ChaplyginState::random(&mut rng, 1.0);

        // The two density formulas agree pointwise.
        for _ in 0..10 {
            let st = ChaplyginState::random(&mut rng, 1.0);
            let direct = sys.measure_density(&st).unwrap();
            let expanded = sys.measure_density_expanded(&st);
            assert!((direct - expanded).abs() < 1e-10 * direct);
        }

        let s1 = sys.clone();
        let s2 = sys.clone();
        let s3 = sys.clone();
        let s4 = sys.clone();
        let s5 = sys.clone();
        let monitors = vec![
            Monitor::new("energy", 1e-8, move |y: &DVector<f64>| {
                s1.energy(&ChaplyginState::unflatten(y).unwrap())
            }),
            Monitor::new("k_norm", 1e-8, move |y: &DVector<f64>| {
                let st = ChaplyginState::unflatten(y).unwrap();
                let k = s2.k_vector(&st);
                k.dot(&k)
            }),
            Monitor::new("k_alpha", 1e-8, move |y: &DVector<f64>| {
                let st = ChaplyginState::unflatten(y).unwrap();
                s3.k_vector(&st).dot(&st.alpha)
            }),
            Monitor::new("k_beta", 1e-8, move |y: &DVector<f64>| {
                let st = ChaplyginState::unflatten(y).unwrap();
                s4.k_vector(&st).dot(&st.beta)
            }),
            Monitor::new("k_gamma", 1e-8, move |y: &DVector<f64>| {
                let st = ChaplyginState::unflatten(y).unwrap();
                s5.k_vector(&st).dot(&st.gamma)
            }),
        ];
        let traj = integrate(
            sys.flat_field(),
            &st0.flatten(),
            20.0,
            1e-3,
            &monitors,
            None,
            1,
            20,
        )
        .unwrap();
        for name in ["energy", "k_norm", "k_alpha", "k_beta", "k_gamma"] {
            let d = traj.max_drift(name).unwrap();
            assert!(d < 1e-9, "{name} drift {d}");
        }
        let frame = ChaplyginState::unflatten(traj.states.last().unwrap())
            .unwrap()
            .frame_residual();
        assert!(frame < 1e-9);

        let sm = sys.clone();
        let res = liouville_residual(
            sys.flat_field(),
            move |y: &DVector<f64>| {
                sm.measure_density(&ChaplyginState::unflatten(y).unwrap())
                    .unwrap()
            },
            &traj,
            1e-5,
            29,
        )
        .unwrap();
        assert!(res < 1e-6, "liouville residual {res}");
    }

    #[test]
    fn ball_data_assembles_the_spatial_operator() {
        // Single ball along e3: rank one.
        let (_, coeffs, _) = support_gamma_from_balls(
            &[2.0, 2.0, 2.0],
            &[0.5],
            &[1.0],
            &[Vector3::new(0.0, 0.0, 1.0)],
        )
        .unwrap();
        assert_abs_diff_eq!(coeffs[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(coeffs[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(coeffs[2], 0.5, epsilon = 1e-14);

        // Three orthogonal balls with equal weight resolve the identity.
        let (_, coeffs, _) = support_gamma_from_balls(
            &[2.0, 2.0, 2.0],
            &[0.5, 0.5, 0.5],
            &[1.0, 1.0, 1.0],
            &[
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(0.0, 0.0, 1.0),
            ],
        )
        .unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(coeffs[k], 0.5, epsilon = 1e-14);
        }
        // Frame is right handed.
        let (_, _, frame) = support_gamma_from_balls(
            &[2.0, 3.0, 4.0],
            &[0.5, 0.3],
            &[1.0, 0.7],
            &[Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 0.6, 0.8)],
        )
        .unwrap();
        assert!(frame[0].cross(&frame[1]).dot(&frame[2]) > 0.0);
        // Nonpositive parameters are rejected.
        assert!(support_gamma_from_balls(
            &[2.0, 2.0, 2.0],
            &[-0.5],
            &[1.0],
            &[Vector3::new(0.0, 0.0, 1.0)]
        )
        .is_err());
    }

    #[test]
    fn assembled_support_matches_expanded_measure_formula() {
        let (inertia, coeffs, frame) = support_gamma_from_balls(
            &[2.0, 3.0, 4.0],
            &[0.5, 0.3, 0.4],
            &[1.0, 0.7, 0.9],
            &[
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 0.6, 0.8),
                Vector3::new(0.0, -0.8, 0.6),
            ],
        )
        .unwrap();
        let sys = SphericalSupport::new(inertia, coeffs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(241);
        let mut st = ChaplyginState::random(&mut rng, 1.0);
        st.alpha = frame[0];
        st.beta = frame[1];
        st.gamma = frame[2];
        let direct = sys.measure_density(&st).unwrap();
        let expanded = sys.measure_density_expanded(&st);
        assert!((direct - expanded).abs() < 1e-10 * direct);
    }

    #[test]
    fn stiff_family_approaches_the_constrained_flow() {
        let inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let gamma0 = Vector3::new(0.0, 0.0, 1.0);
        let omega0 = Vector3::new(0.6, -0.4, 0.0);
        let report = lr_limit_sweep(
            &inertia,
            &omega0,
            &gamma0,
            &[10.0, 100.0, 1000.0],
            2.0,
            1e-3,
        )
        .unwrap();
        assert!(
            report.deviations.windows(2).all(|w| w[1] < w[0]),
            "deviations {:?} not decreasing",
            report.deviations
        );
        assert!(
            (report.slope + 1.0).abs() < 0.2,
            "slope {} not near -1",
            report.slope
        );
    }

    #[test]
    fn stiff_sweep_rejects_bad_setups() {
        let inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let gamma0 = Vector3::new(0.0, 0.0, 1.0);
        // Momentum not admissible.
        assert!(matches!(
            lr_limit_sweep(
                &inertia,
                &Vector3::new(0.0, 0.0, 1.0),
                &gamma0,
                &[10.0, 100.0],
                1.0,
                1e-3
            ),
            Err(Error::Precondition(_))
        ));
        // Conditioning guard.
        assert!(matches!(
            lr_limit_sweep(
                &inertia,
                &Vector3::new(1.0, 0.0, 0.0),
                &gamma0,
                &[10.0, 1e16],
                1.0,
                1e-3
            ),
            Err(Error::Conditioning(_))
        ));
    }
}
