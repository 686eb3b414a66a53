//! Euler–Poincaré–Suslov (LL) systems: left-invariant metric and
//! left-invariant constraints on `so(n)`.
//!
//! The momentum equation is `ẋ = [x, A(x)] + Σ λ_i aⁱ` with the multipliers
//! chosen so that the velocity `A(x)` stays in the admissible space. Special
//! structure is exploited when the operator preserves the splitting
//! `g = h + d` (no multiplier solve) or is adapted to a chain of nested
//! subalgebras (the equations split into a small system plus linear blocks).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::liealg::{
    commutator, killing_inner, orthonormalize, project_span, AlgebraElement,
};
use crate::operators::{complement_basis, ChainOperator, Distribution, InertiaOperator};

/// Condition-number ceiling for the multiplier Gram matrix.
const GRAM_COND_LIMIT: f64 = 1e12;

/// An LL system: inverse inertia `A` and a left-invariant constraint
/// distribution. Immutable after construction; cheap to clone.
#[derive(Debug, Clone)]
pub struct EpsSystem {
    a_op: InertiaOperator,
    dist: Distribution,
    // Inverse of the Gram matrix <A a^j, a^i>, empty when there are no
    // constraints.
    gram_inv: DMatrix<f64>,
}

impl EpsSystem {
    pub fn new(a_op: InertiaOperator, dist: Distribution) -> Result<Self> {
        if a_op.n() != dist.n() {
            return Err(Error::Dimension(format!(
                "operator on so({}) with distribution on so({})",
                a_op.n(),
                dist.n()
            )));
        }
        let rho = dist.rho();
        let mut gram = DMatrix::zeros(rho, rho);
        for (i, ai) in dist.annihilator().iter().enumerate() {
            for (j, aj) in dist.annihilator().iter().enumerate() {
                gram[(i, j)] = killing_inner(&a_op.apply(aj)?, ai)?;
            }
        }
        let gram_inv = if rho == 0 {
            gram
        } else {
            let eig = gram.clone().symmetric_eigen();
            let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if min_ev <= 0.0 || max_ev / min_ev > GRAM_COND_LIMIT {
                return Err(Error::DegenerateConstraint(format!(
                    "multiplier gram matrix condition {:.3e} exceeds {GRAM_COND_LIMIT:.0e}",
                    max_ev / min_ev.max(f64::MIN_POSITIVE)
                )));
            }
            gram.try_inverse().ok_or_else(|| {
                Error::DegenerateConstraint("multiplier gram matrix is singular".into())
            })?
        };
        Ok(Self {
            a_op,
            dist,
            gram_inv,
        })
    }

    pub fn n(&self) -> usize {
        self.a_op.n()
    }

    pub fn operator(&self) -> &InertiaOperator {
        &self.a_op
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    /// `H(x) = ½⟨A x, x⟩`.
    pub fn energy(&self, x: &AlgebraElement) -> Result<f64> {
        Ok(0.5 * killing_inner(&self.a_op.apply(x)?, x)?)
    }

    /// Constraint residuals `⟨A x, aⁱ⟩`.
    pub fn constraint_residuals(&self, x: &AlgebraElement) -> Result<Vec<f64>> {
        let ax = self.a_op.apply(x)?;
        self.dist
            .annihilator()
            .iter()
            .map(|a| killing_inner(&ax, a))
            .collect()
    }

    /// Right-hand side together with the solved multipliers.
    pub fn rhs_with_multipliers(
        &self,
        x: &AlgebraElement,
    ) -> Result<(AlgebraElement, DVector<f64>)> {
        let ax = self.a_op.apply(x)?;
        let free = commutator(x, &ax)?;
        let rho = self.dist.rho();
        if rho == 0 {
            return Ok((free, DVector::zeros(0)));
        }
        let a_free = self.a_op.apply(&free)?;
        let mut rhs = DVector::zeros(rho);
        for (i, ai) in self.dist.annihilator().iter().enumerate() {
            rhs[i] = -killing_inner(&a_free, ai)?;
        }
        let lambda = &self.gram_inv * rhs;
        let mut out = free;
        for (l, a) in lambda.iter().zip(self.dist.annihilator().iter()) {
            out = out.add(&a.scale(*l))?;
        }
        Ok((out, lambda))
    }

    /// `ẋ = [x, A x] + Σ λ_i aⁱ` with multipliers keeping `⟨A x, aⁱ⟩`
    /// constant.
    pub fn rhs(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        Ok(self.rhs_with_multipliers(x)?.0)
    }

    /// True when the operator maps the admissible space into itself (block
    /// structure `A = A_h + A_d`).
    pub fn preserves_decomposition(&self) -> Result<bool> {
        let mut coupling: f64 = 0.0;
        for d in self.dist.admissible_basis()? {
            let ad = self.a_op.apply(&d)?;
            let leak = project_span(&ad, self.dist.annihilator())?;
            coupling = coupling.max(leak.norm());
        }
        Ok(coupling <= 1e-12)
    }

    /// Multiplier-free form for decomposition-preserving operators:
    /// the projection of `[x, A x]` onto the admissible space.
    pub fn rhs_decomposed(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        if !self.preserves_decomposition()? {
            return Err(Error::Applicability(
                "operator does not preserve the constraint splitting".into(),
            ));
        }
        let adm = self.dist.admissible_basis()?;
        let xd = project_span(x, &adm)?;
        let br = commutator(&xd, &self.a_op.apply(&xd)?)?;
        project_span(&br, &adm)
    }

    /// Orthonormal basis of the constraint manifold
    /// `m = {x : ⟨A x, aⁱ⟩ = 0}` (the Killing complement of `span{A aⁱ}`).
    pub fn momentum_chart(&self) -> Result<Vec<AlgebraElement>> {
        if self.dist.rho() == 0 {
            return complement_basis(self.n(), &[]);
        }
        let images: Vec<AlgebraElement> = self
            .dist
            .annihilator()
            .iter()
            .map(|a| self.a_op.apply(a))
            .collect::<Result<_>>()?;
        complement_basis(self.n(), &orthonormalize(&images)?)
    }

    /// Random admissible momentum: a random element projected onto the
    /// constraint manifold (one exact step on the linear constraints).
    pub fn random_admissible<R: Rng>(&self, rng: &mut R, scale: f64) -> Result<AlgebraElement> {
        let x = AlgebraElement::random(self.n(), rng).scale(scale);
        if self.dist.rho() == 0 {
            return Ok(x);
        }
        let images: Vec<AlgebraElement> = self
            .dist
            .annihilator()
            .iter()
            .map(|a| self.a_op.apply(a))
            .collect::<Result<_>>()?;
        let leak = project_span(&x, &images)?;
        x.sub(&leak)
    }
}

/// Expands chart coordinates into an algebra element.
pub fn from_chart(basis: &[AlgebraElement], coords: &DVector<f64>) -> Result<AlgebraElement> {
    if basis.len() != coords.len() {
        return Err(Error::Dimension("chart coordinate count mismatch".into()));
    }
    let n = basis
        .first()
        .ok_or_else(|| Error::DegenerateBasis("empty chart".into()))?
        .n();
    let mut out = AlgebraElement::zeros(n);
    for (c, b) in coords.iter().zip(basis.iter()) {
        out = out.add(&b.scale(*c))?;
    }
    Ok(out)
}

/// Coordinates of an element in an orthonormal chart.
pub fn to_chart(basis: &[AlgebraElement], x: &AlgebraElement) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(basis.len());
    for (k, b) in basis.iter().enumerate() {
        out[k] = killing_inner(x, b)?;
    }
    Ok(out)
}

/// A chain-adapted LL system: the operator comes from [`ChainOperator`] and
/// every constraint vector lives inside the inner subalgebra or inside a
/// single complement block.
#[derive(Debug, Clone)]
pub struct ChainSystem {
    chain: ChainOperator,
    sys: EpsSystem,
    // Annihilator vectors sorted by home block: index 0 = inner subalgebra,
    // index k = complement w_k.
    block_constraints: Vec<Vec<AlgebraElement>>,
}

impl ChainSystem {
    pub fn new(chain: ChainOperator, dist: Distribution) -> Result<Self> {
        let sys = EpsSystem::new(chain.operator().clone(), dist.clone())?;
        let blocks = 1 + chain.complements().len();
        let mut block_constraints: Vec<Vec<AlgebraElement>> = vec![Vec::new(); blocks];
        for a in dist.annihilator() {
            let mut home = None;
            let in_g0 = project_span(a, chain.g0_basis())?.norm();
            if (in_g0 - 1.0).abs() < 1e-10 {
                home = Some(0);
            }
            for (k, comp) in chain.complements().iter().enumerate() {
                let inside = project_span(a, comp)?.norm();
                if (inside - 1.0).abs() < 1e-10 {
                    home = Some(k + 1);
                }
            }
            match home {
                Some(b) => block_constraints[b].push(a.clone()),
                None => {
                    return Err(Error::Applicability(
                        "constraint vector straddles chain blocks".into(),
                    ))
                }
            }
        }
        Ok(Self {
            chain,
            sys,
            block_constraints,
        })
    }

    pub fn system(&self) -> &EpsSystem {
        &self.sys
    }

    pub fn chain(&self) -> &ChainOperator {
        &self.chain
    }

    /// Inner-operator image of the `g0` component.
    fn apply_a0(&self, x0: &AlgebraElement) -> Result<AlgebraElement> {
        let g0 = self.chain.g0_basis();
        let coords = to_chart(g0, x0)?;
        from_chart(g0, &(self.chain.a0_matrix() * coords))
    }

    /// Assembles the split right-hand side: the inner EPS equation plus the
    /// chain of linear block equations.
    pub fn split_rhs(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        let g0 = self.chain.g0_basis();
        let s = self.chain.scalars();
        let x0 = project_span(x, g0)?;
        let blocks: Vec<AlgebraElement> = self
            .chain
            .complements()
            .iter()
            .map(|comp| project_span(x, comp))
            .collect::<Result<_>>()?;

        // Inner EPS equation with its own multipliers.
        let a0x0 = self.apply_a0(&x0)?;
        let mut rhs0 = commutator(&x0, &a0x0)?;
        let inner = &self.block_constraints[0];
        if !inner.is_empty() {
            let rho0 = inner.len();
            let mut gram = DMatrix::zeros(rho0, rho0);
            let mut b = DVector::zeros(rho0);
            let a0_rhs0 = self.apply_a0(&rhs0)?;
            for (i, ai) in inner.iter().enumerate() {
                b[i] = -killing_inner(&a0_rhs0, ai)?;
                for (j, aj) in inner.iter().enumerate() {
                    gram[(i, j)] = killing_inner(&self.apply_a0(aj)?, ai)?;
                }
            }
            let mu = gram.lu().solve(&b).ok_or_else(|| {
                Error::DegenerateConstraint("inner multiplier solve failed".into())
            })?;
            for (m, a) in mu.iter().zip(inner.iter()) {
                rhs0 = rhs0.add(&a.scale(*m))?;
            }
        }

        // Linear chain: ẋ_k = [x_k, A0 x0 - s_k x0 + Σ_{i<k}(s_i - s_k) x_i]
        // projected onto the constrained block.
        let mut total = rhs0;
        for (k, xk) in blocks.iter().enumerate() {
            let sk = s[k];
            let mut y = a0x0.sub(&x0.scale(sk))?;
            for (i, xi) in blocks.iter().enumerate().take(k) {
                y = y.add(&xi.scale(s[i] - sk))?;
            }
            let mut term = commutator(xk, &y)?;
            for a in &self.block_constraints[k + 1] {
                let c = killing_inner(&term, a)?;
                term = term.sub(&a.scale(c))?;
            }
            total = total.add(&term)?;
        }
        Ok(total)
    }
}

/// Frequency ratios of the straight-line (but nonuniform) torus motion of
/// the generalized rigid-body problem with mass-tensor moments
/// `I_1 ≥ I_2 ≥ … ≥ I_n > 0`:
/// `Ω_i = √( (I_1 - I_{i+2})(I_2 - I_{i+2}) / ((I_1 + I_{i+2})(I_2 + I_{i+2})) )`.
pub fn fk_frequencies(moments: &[f64]) -> Result<Vec<f64>> {
    let n = moments.len();
    if n < 3 {
        return Err(Error::Parameter("need at least three moments".into()));
    }
    if moments.iter().any(|&v| v <= 0.0) {
        return Err(Error::Parameter("moments must be positive".into()));
    }
    if moments.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Parameter(
            "moments must be ordered I_1 >= I_2 >= ... >= I_n".into(),
        ));
    }
    Ok((2..n)
        .map(|k| {
            let num = (moments[0] - moments[k]) * (moments[1] - moments[k]);
            let den = (moments[0] + moments[k]) * (moments[1] + moments[k]);
            (num / den).sqrt()
        })
        .collect())
}

/// Splitting data for operators of the form `A = s·Id_u ⊕ A_1 ⊕ … ⊕ A_g`
/// (plus an optional trivially-acting block `d_0`), which carry the extra
/// integrals `F_k = ⟨(A_k - s)x_k, x_k⟩` and the components of `x_0`.
#[derive(Debug, Clone)]
pub struct SymmetricSplit {
    u_basis: Vec<AlgebraElement>,
    s: f64,
    d0_basis: Vec<AlgebraElement>,
    blocks: Vec<Vec<AlgebraElement>>,
}

impl SymmetricSplit {
    pub fn new(
        a_op: &InertiaOperator,
        u_basis: Vec<AlgebraElement>,
        d0_basis: Vec<AlgebraElement>,
        blocks: Vec<Vec<AlgebraElement>>,
    ) -> Result<Self> {
        // The operator must act as a scalar on u and preserve every block.
        let u0 = u_basis
            .first()
            .ok_or_else(|| Error::Applicability("empty u block".into()))?;
        let s = killing_inner(&a_op.apply(u0)?, u0)?;
        for u in &u_basis {
            let au = a_op.apply(u)?;
            if au.sub(&u.scale(s))?.norm() > 1e-10 {
                return Err(Error::Applicability(
                    "operator is not scalar on the u block".into(),
                ));
            }
        }
        for block in blocks.iter().chain(std::iter::once(&d0_basis)) {
            for b in block {
                let ab = a_op.apply(b)?;
                let res = ab.sub(&project_span(&ab, block)?)?;
                if res.norm() > 1e-10 {
                    return Err(Error::Applicability(
                        "operator does not preserve a split block".into(),
                    ));
                }
            }
        }
        Ok(Self {
            u_basis,
            s,
            d0_basis,
            blocks,
        })
    }

    pub fn scalar(&self) -> f64 {
        self.s
    }

    pub fn blocks(&self) -> &[Vec<AlgebraElement>] {
        &self.blocks
    }

    pub fn u_basis(&self) -> &[AlgebraElement] {
        &self.u_basis
    }
}

/// The split structure of the generalized rigid-body problem on `so(n)`
/// with two distinguished axes: `u = span{E_1∧E_2}` and the two-dimensional
/// blocks `span{E_1∧E_j, E_2∧E_j}`, `j = 3..n`.
pub fn fk_split(n: usize, a_op: &InertiaOperator) -> Result<SymmetricSplit> {
    use crate::operators::wedge_element;
    if n < 4 {
        return Err(Error::Parameter("split structure needs n >= 4".into()));
    }
    let u = vec![wedge_element(1, 2, n)?];
    let mut blocks = Vec::with_capacity(n - 2);
    for j in 3..=n {
        blocks.push(vec![wedge_element(1, j, n)?, wedge_element(2, j, n)?]);
    }
    SymmetricSplit::new(a_op, u, Vec::new(), blocks)
}

/// Values `[H, F, x_0 components.., F_1, …, F_g]` of the split integrals.
pub fn split_integrals(
    split: &SymmetricSplit,
    a_op: &InertiaOperator,
    x: &AlgebraElement,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(2 + split.d0_basis.len() + split.blocks.len());
    out.push(0.5 * killing_inner(&a_op.apply(x)?, x)?);
    out.push(killing_inner(x, x)?);
    for b in &split.d0_basis {
        out.push(killing_inner(x, b)?);
    }
    for block in &split.blocks {
        let xk = project_span(x, block)?;
        let axk = a_op.apply(&xk)?;
        out.push(killing_inner(&axk, &xk)? - split.s * killing_inner(&xk, &xk)?);
    }
    Ok(out)
}

/// Diagnostic for the coincidence of the nonholonomic, constrained
/// Hamiltonian and sub-Riemannian flows: both the annihilator component of
/// `[x, A_d x]` and the solved multipliers must vanish on admissible states.
#[derive(Debug, Clone)]
pub struct MultiplierReport {
    pub max_bracket_residual: f64,
    pub max_multiplier_norm: f64,
    pub samples: usize,
}

impl MultiplierReport {
    pub fn vanishes(&self, tol: f64) -> bool {
        self.max_bracket_residual <= tol && self.max_multiplier_norm <= tol
    }
}

/// Samples admissible states and reports the supremum of the invariance
/// residual `‖proj_h [x, A_d x]‖` and of the multiplier norm.
pub fn multiplier_vanishing_check<R: Rng>(
    sys: &EpsSystem,
    samples: usize,
    rng: &mut R,
) -> Result<MultiplierReport> {
    if !sys.preserves_decomposition()? {
        return Err(Error::Applicability(
            "operator does not preserve the constraint splitting".into(),
        ));
    }
    let mut max_bracket: f64 = 0.0;
    let mut max_lambda: f64 = 0.0;
    for _ in 0..samples {
        let x = sys.random_admissible(rng, 1.0)?;
        let ax = sys.operator().apply(&x)?;
        let br = commutator(&x, &ax)?;
        let leak = project_span(&br, sys.distribution().annihilator())?;
        max_bracket = max_bracket.max(leak.norm());
        let (_, lambda) = sys.rhs_with_multipliers(&x)?;
        max_lambda = max_lambda.max(lambda.norm());
    }
    Ok(MultiplierReport {
        max_bracket_residual: max_bracket,
        max_multiplier_norm: max_lambda,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::wedge_dim;
    use crate::operators::{
        chain_operator, physical_inertia, so_chain_bases, suslov_distribution,
        veselova_distribution, wedge_element,
    };
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fk_system() -> EpsSystem {
        let a_op = physical_inertia(&[4.0, 3.0, 2.0, 1.0], true).unwrap();
        let dist = suslov_distribution(4, 2).unwrap();
        EpsSystem::new(a_op, dist).unwrap()
    }

    #[test]
    fn rhs_vanishes_at_the_origin() {
        let sys = fk_system();
        let rhs = sys.rhs(&AlgebraElement::zeros(4)).unwrap();
        assert!(rhs.norm() < 1e-15);
    }

    #[test]
    fn rhs_is_tangent_to_the_constraint_manifold() {
        let sys = fk_system();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let x = sys.random_admissible(&mut rng, 1.0).unwrap();
            for r in sys.constraint_residuals(&x).unwrap() {
                assert!(r.abs() < 1e-13);
            }
            let dx = sys.rhs(&x).unwrap();
            // d/dt <A x, a> = <A dx, a> must vanish exactly at the solution.
            let adx = sys.operator().apply(&dx).unwrap();
            for a in sys.distribution().annihilator() {
                assert!(killing_inner(&adx, a).unwrap().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn symmetric_pair_solutions_are_constants() {
        // Annihilator so(3), physical inertia: [d, d] ⊆ h makes every
        // admissible momentum an equilibrium.
        let a_op = physical_inertia(&[4.0, 3.0, 2.0, 1.0], true).unwrap();
        let dist = suslov_distribution(4, 1).unwrap();
        let sys = EpsSystem::new(a_op, dist).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let x = sys.random_admissible(&mut rng, 1.0).unwrap();
            assert!(sys.rhs(&x).unwrap().norm() < 1e-13);
            assert!(sys.rhs_decomposed(&x).unwrap().norm() < 1e-13);
        }
    }

    #[test]
    fn decomposed_form_matches_multiplier_elimination() {
        let sys = fk_system();
        assert!(sys.preserves_decomposition().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let x = sys.random_admissible(&mut rng, 1.0).unwrap();
            let a = sys.rhs(&x).unwrap();
            let b = sys.rhs_decomposed(&x).unwrap();
            assert!(a.sub(&b).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn decomposed_form_rejects_coupled_operators() {
        // A generic symmetric operator couples the blocks.
        let m = wedge_dim(4);
        let mut mat = DMatrix::identity(m, m);
        mat[(0, 5)] = 0.3;
        mat[(5, 0)] = 0.3;
        let a_op = InertiaOperator::new(4, mat).unwrap();
        let dist = suslov_distribution(4, 2).unwrap();
        let sys = EpsSystem::new(a_op, dist).unwrap();
        assert!(!sys.preserves_decomposition().unwrap());
        let x = AlgebraElement::zeros(4);
        assert!(matches!(
            sys.rhs_decomposed(&x),
            Err(Error::Applicability(_))
        ));
    }

    fn so4_chain_system() -> ChainSystem {
        let chain_bases = so_chain_bases(2, 4).unwrap();
        let a0 = DMatrix::identity(1, 1) * 0.9;
        let chain = chain_operator(&a0, &[1.7, 0.6], &chain_bases).unwrap();
        // One constraint inside each complement block.
        let annihilator = vec![
            wedge_element(2, 3, 4).unwrap(),
            wedge_element(3, 4, 4).unwrap(),
        ];
        let dist = Distribution::new(4, annihilator).unwrap();
        ChainSystem::new(chain, dist).unwrap()
    }

    #[test]
    fn chain_split_matches_general_form() {
        let cs = so4_chain_system();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut sup: f64 = 0.0;
        for _ in 0..100 {
            let x = cs.system().random_admissible(&mut rng, 1.0).unwrap();
            let a = cs.system().rhs(&x).unwrap();
            let b = cs.split_rhs(&x).unwrap();
            sup = sup.max(a.sub(&b).unwrap().norm());
        }
        assert!(sup < 1e-10, "sup deviation {sup}");
    }

    #[test]
    fn chain_keeps_inner_support_and_constant_x0() {
        let cs = so4_chain_system();
        // Momentum supported in g0 stays there (all chain blocks zero).
        let x = wedge_element(1, 2, 4).unwrap().scale(0.8);
        let dx = cs.split_rhs(&x).unwrap();
        assert!(dx.norm() < 1e-14);
        // so(2) is commutative: the g0 component never moves.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = cs.system().random_admissible(&mut rng, 1.0).unwrap();
        let dx = cs.system().rhs(&x).unwrap();
        let g0 = cs.chain().g0_basis();
        assert!(project_span(&dx, g0).unwrap().norm() < 1e-13);
    }

    #[test]
    fn fk_frequencies_closed_form() {
        let f = fk_frequencies(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(f[0], (1.0f64 / 15.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.3f64.sqrt(), epsilon = 1e-15);
        // A repeated moment kills the corresponding frequency.
        let f = fk_frequencies(&[4.0, 3.0, 3.0, 1.0]).unwrap();
        assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-15);
        assert!(fk_frequencies(&[1.0, 2.0, 3.0]).is_err());
        assert!(fk_frequencies(&[3.0, 2.0, -1.0]).is_err());
    }

    #[test]
    fn split_integrals_structure() {
        let a_op = physical_inertia(&[4.0, 3.0, 2.0, 1.0], true).unwrap();
        let split = fk_split(4, &a_op).unwrap();
        let zero = AlgebraElement::zeros(4);
        for v in split_integrals(&split, &a_op, &zero).unwrap() {
            assert_eq!(v, 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x = AlgebraElement::random(4, &mut rng);
        let vals = split_integrals(&split, &a_op, &x).unwrap();
        // F is the Killing norm squared.
        let coords = x.to_wedge_coords();
        assert_abs_diff_eq!(
            vals[1],
            coords.iter().map(|c| c * c).sum::<f64>(),
            epsilon = 1e-13
        );
        // F_k are positive definite for descending moments.
        let xk = wedge_element(1, 3, 4).unwrap().scale(0.5);
        let vals = split_integrals(&split, &a_op, &xk).unwrap();
        assert!(vals[2] > 0.0);
    }

    #[test]
    fn split_integrals_are_conserved_along_the_flow() {
        use crate::integrate::integrate;
        let sys = fk_system();
        let split = fk_split(4, sys.operator()).unwrap();
        let chart = sys.momentum_chart().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let x0 = sys.random_admissible(&mut rng, 1.0).unwrap();
        let y0 = to_chart(&chart, &x0).unwrap();
        let field = {
            let sys = sys.clone();
            let chart = chart.clone();
            move |y: &DVector<f64>| {
                let x = from_chart(&chart, y).unwrap();
                to_chart(&chart, &sys.rhs(&x).unwrap()).unwrap()
            }
        };
        let traj = integrate(field, &y0, 10.0, 1e-3, &[], None, 1, 10).unwrap();
        let v0 = split_integrals(&split, sys.operator(), &x0).unwrap();
        for state in traj.states.iter().step_by(50) {
            let x = from_chart(&chart, state).unwrap();
            let v = split_integrals(&split, sys.operator(), &x).unwrap();
            for (a, b) in v.iter().zip(v0.iter()) {
                assert!((a - b).abs() / b.abs().max(1.0) < 1e-8);
            }
        }
    }

    #[test]
    fn multiplier_check_distinguishes_invariant_hamiltonians() {
        // Identity operator: [x, x] = 0, both residuals vanish.
        let sys = EpsSystem::new(
            InertiaOperator::identity(4),
            veselova_distribution(4).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let rep = multiplier_vanishing_check(&sys, 30, &mut rng).unwrap();
        assert!(rep.vanishes(1e-12));

        // Generic diagonal operator on the same splitting: residuals appear.
        let sys = EpsSystem::new(
            physical_inertia(&[4.0, 3.0, 2.0, 1.0], true).unwrap(),
            veselova_distribution(4).unwrap(),
        )
        .unwrap();
        let rep = multiplier_vanishing_check(&sys, 30, &mut rng).unwrap();
        assert!(rep.max_bracket_residual > 1e-3);
        assert!(rep.max_multiplier_norm > 1e-3);
    }

    #[test]
    fn cartan_axis_constraint_commutes_and_preserves_measure() {
        use crate::integrate::{divergence_estimate, integrate};
        // Single constraint a = a1 E12 + a2 E34 with the rigid-body operator:
        // [a, A a] = 0 and the flow on the constraint manifold is
        // divergence free.
        let a_op = physical_inertia(&[4.0, 3.0, 2.0, 1.0], true).unwrap();
        let a = wedge_element(1, 2, 4)
            .unwrap()
            .scale(0.6)
            .add(&wedge_element(3, 4, 4).unwrap().scale(0.8))
            .unwrap();
        assert!(commutator(&a, &a_op.apply(&a).unwrap())
            .unwrap()
            .norm()
            .abs()
            < 1e-15);
        let dist = Distribution::new(4, vec![a]).unwrap();
        let sys = EpsSystem::new(a_op, dist).unwrap();
        let chart = sys.momentum_chart().unwrap();
        assert_eq!(chart.len(), 5);
        let field = {
            let sys = sys.clone();
            let chart = chart.clone();
            move |y: &DVector<f64>| {
                let x = from_chart(&chart, y).unwrap();
                to_chart(&chart, &sys.rhs(&x).unwrap()).unwrap()
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let x0 = sys.random_admissible(&mut rng, 1.0).unwrap();
        let y0 = to_chart(&chart, &x0).unwrap();
        let traj = integrate(&field, &y0, 5.0, 1e-3, &[], None, 1, 100).unwrap();
        for y in traj.states.iter().step_by(10) {
            let div = divergence_estimate(&field, y, 1e-5).unwrap();
            assert!(div.abs() < 1e-8, "divergence {div}");
        }
    }

    #[test]
    fn decomposed_flow_preserves_the_standard_measure() {
        use crate::integrate::divergence_estimate;
        let sys = fk_system();
        let adm = sys.distribution().admissible_basis().unwrap();
        let field = {
            let sys = sys.clone();
            let adm = adm.clone();
            move |y: &DVector<f64>| {
                let x = from_chart(&adm, y).unwrap();
                to_chart(&adm, &sys.rhs_decomposed(&x).unwrap()).unwrap()
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..5 {
            let x = sys.random_admissible(&mut rng, 1.0).unwrap();
            let y = to_chart(&adm, &x).unwrap();
            let div = divergence_estimate(&field, &y, 1e-5).unwrap();
            assert!(div.abs() < 1e-8);
        }
    }
}
