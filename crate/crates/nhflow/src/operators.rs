//! Inertia operators on `so(n)` and constraint distributions, including the
//! special forms used by the integrable families: the physical rigid-body
//! operator, the determinant-normalized diagonal operator, block operators
//! adapted to a chain of subalgebras, and the Suslov/Veselova distributions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::liealg::{
    commutator, killing_inner, orthonormalize, project_span, wedge_dim, wedge_pairs,
    AlgebraElement, WedgeIndex,
};

/// Positive-definiteness acceptance threshold for operator spectra.
const SPD_TOL: f64 = 1e-10;

/// A symmetric positive-definite linear map on `so(n)`, stored as an
/// `m×m` matrix in the wedge basis, `m = n(n-1)/2`.
#[derive(Debug, Clone)]
pub struct InertiaOperator {
    n: usize,
    mat: DMatrix<f64>,
}

impl InertiaOperator {
    /// Wraps a wedge-basis matrix, checking symmetry and positive spectrum.
    pub fn new(n: usize, mat: DMatrix<f64>) -> Result<Self> {
        let m = wedge_dim(n);
        if mat.nrows() != m || mat.ncols() != m {
            return Err(Error::Dimension(format!(
                "operator on so({n}) must be {m}x{m}, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let sym = (&mat - mat.transpose()).norm();
        if sym > 1e-12 * (1.0 + mat.norm()) {
            return Err(Error::Parameter(format!(
                "operator matrix is not symmetric: ||M - M^T|| = {sym:.3e}"
            )));
        }
        let eig = mat.clone().symmetric_eigen();
        let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_ev <= SPD_TOL {
            return Err(Error::Parameter(format!(
                "operator is not positive definite: min eigenvalue {min_ev:.3e}"
            )));
        }
        Ok(Self { n, mat })
    }

    pub fn identity(n: usize) -> Self {
        let m = wedge_dim(n);
        Self {
            n,
            mat: DMatrix::identity(m, m),
        }
    }

    /// Diagonal operator in the wedge basis; one value per `(i, j)` pair in
    /// lexicographic order.
    pub fn from_wedge_diagonal(n: usize, diag: &[f64]) -> Result<Self> {
        let m = wedge_dim(n);
        if diag.len() != m {
            return Err(Error::Dimension(format!(
                "expected {m} diagonal entries, got {}",
                diag.len()
            )));
        }
        Self::new(n, DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Applies the operator to an algebra element.
    pub fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        if x.n() != self.n {
            return Err(Error::Dimension(format!(
                "operator on so({}) applied to so({})",
                self.n,
                x.n()
            )));
        }
        let y = &self.mat * x.to_wedge_coords();
        AlgebraElement::from_wedge_coords(self.n, &y)
    }

    /// Applies the operator in wedge coordinates.
    pub fn apply_coords(&self, coords: &DVector<f64>) -> DVector<f64> {
        &self.mat * coords
    }

    /// The inverse operator.
    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .mat
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Parameter("operator is singular".into()))?;
        // Resymmetrize round-off before revalidating.
        let inv = (&inv + inv.transpose()) * 0.5;
        Self::new(self.n, inv)
    }
}

/// Rigid-body inertia `E_i∧E_j ↦ (I_i + I_j)·E_i∧E_j` from a mass tensor
/// diagonal, or its inverse when `invert` is set.
pub fn physical_inertia(moments: &[f64], invert: bool) -> Result<InertiaOperator> {
    let n = moments.len();
    if n < 2 {
        return Err(Error::Parameter("need at least two moments".into()));
    }
    if moments.iter().any(|&v| v <= 0.0) {
        return Err(Error::Parameter("mass-tensor moments must be positive".into()));
    }
    let diag: Vec<f64> = wedge_pairs(n)
        .iter()
        .map(|p| {
            let s = moments[p.i() - 1] + moments[p.j() - 1];
            if invert {
                1.0 / s
            } else {
                s
            }
        })
        .collect();
    InertiaOperator::from_wedge_diagonal(n, &diag)
}

/// Determinant-normalized diagonal inertia `E_i∧E_j ↦ (A_i A_j / det A)·E_i∧E_j`.
pub fn veselova_inertia(a: &[f64]) -> Result<InertiaOperator> {
    let n = a.len();
    if n < 2 {
        return Err(Error::Parameter("need at least two diagonal entries".into()));
    }
    if a.iter().any(|&v| v <= 0.0) {
        return Err(Error::Parameter("diagonal entries must be positive".into()));
    }
    let det: f64 = a.iter().product();
    let diag: Vec<f64> = wedge_pairs(n)
        .iter()
        .map(|p| a[p.i() - 1] * a[p.j() - 1] / det)
        .collect();
    InertiaOperator::from_wedge_diagonal(n, &diag)
}

/// Block operator adapted to a chain of nested subalgebras, together with
/// the data needed to split the equations of motion along the chain.
#[derive(Debug, Clone)]
pub struct ChainOperator {
    op: InertiaOperator,
    g0: Vec<AlgebraElement>,
    a0: DMatrix<f64>,
    complements: Vec<Vec<AlgebraElement>>,
    s: Vec<f64>,
}

impl ChainOperator {
    pub fn operator(&self) -> &InertiaOperator {
        &self.op
    }

    /// Orthonormal basis of the innermost subalgebra.
    pub fn g0_basis(&self) -> &[AlgebraElement] {
        &self.g0
    }

    /// Matrix of the inner operator in the `g0` basis.
    pub fn a0_matrix(&self) -> &DMatrix<f64> {
        &self.a0
    }

    /// Orthonormal bases of the successive orthogonal complements `w_k`.
    pub fn complements(&self) -> &[Vec<AlgebraElement>] {
        &self.complements
    }

    pub fn scalars(&self) -> &[f64] {
        &self.s
    }
}

/// Builds `A = A_0 ⊕ s_1·Id ⊕ … ⊕ s_N·Id` along a chain
/// `g_0 ⊂ g_1 ⊂ … ⊂ g_N = so(n)`.
///
/// `chain` lists a basis for each subalgebra in increasing order, the last
/// one spanning the full algebra. `a0` is the matrix of the inner operator
/// in the coordinates of the (orthonormalized) `g_0` basis.
pub fn chain_operator(
    a0: &DMatrix<f64>,
    s: &[f64],
    chain: &[Vec<AlgebraElement>],
) -> Result<ChainOperator> {
    if chain.is_empty() {
        return Err(Error::Chain("chain must contain at least one subalgebra".into()));
    }
    if s.len() != chain.len() - 1 {
        return Err(Error::Chain(format!(
            "need one scalar per chain link: {} links, {} scalars",
            chain.len() - 1,
            s.len()
        )));
    }
    if s.iter().any(|&v| v <= 0.0) {
        return Err(Error::Chain("chain scalars must be positive".into()));
    }
    let n = chain[0]
        .first()
        .ok_or_else(|| Error::Chain("empty subalgebra basis".into()))?
        .n();
    let m = wedge_dim(n);
    if chain.last().map(|b| b.len()) != Some(m) {
        return Err(Error::Chain(format!(
            "outermost subalgebra must span so({n}) (dimension {m})"
        )));
    }

    // Orthonormalize each level and verify nesting plus bracket closure.
    let mut levels: Vec<Vec<AlgebraElement>> = Vec::with_capacity(chain.len());
    for (k, raw) in chain.iter().enumerate() {
        let basis = orthonormalize(raw)?;
        if k > 0 && basis.len() <= levels[k - 1].len() {
            return Err(Error::Chain("chain dimensions must strictly increase".into()));
        }
        if k > 0 {
            for prev in &levels[k - 1] {
                let p = project_span(prev, &basis)?;
                if p.sub(prev)?.norm() > 1e-10 {
                    return Err(Error::Chain(format!(
                        "level {k} does not contain level {}",
                        k - 1
                    )));
                }
            }
        }
        for a in &basis {
            for b in &basis {
                let br = commutator(a, b)?;
                let res = br.sub(&project_span(&br, &basis)?)?;
                if res.norm() > 1e-10 {
                    return Err(Error::Chain(format!(
                        "level {k} is not closed under the bracket"
                    )));
                }
            }
        }
        levels.push(basis);
    }

    let m0 = levels[0].len();
    if a0.nrows() != m0 || a0.ncols() != m0 {
        return Err(Error::Chain(format!(
            "inner operator must be {m0}x{m0}, got {}x{}",
            a0.nrows(),
            a0.ncols()
        )));
    }

    // Coordinate matrices of each level in the wedge basis.
    let coord_mat = |basis: &[AlgebraElement]| {
        let mut b = DMatrix::zeros(m, basis.len());
        for (c, e) in basis.iter().enumerate() {
            b.set_column(c, &e.to_wedge_coords());
        }
        b
    };

    let b0 = coord_mat(&levels[0]);
    let mut mat = &b0 * a0 * b0.transpose();
    let mut complements = Vec::with_capacity(s.len());
    let mut prev_proj = &b0 * b0.transpose();
    for (k, sk) in s.iter().enumerate() {
        let bk = coord_mat(&levels[k + 1]);
        let proj = &bk * bk.transpose();
        mat += (&proj - &prev_proj) * *sk;

        // Orthonormal basis of the complement w_{k+1} = g_{k+1} ⊖ g_k.
        let mut comp: Vec<AlgebraElement> = Vec::new();
        for e in &levels[k + 1] {
            let inner = project_span(e, &levels[k])?;
            let mut v = e.sub(&inner)?;
            for c in &comp {
                let coeff = killing_inner(&v, c)?;
                v = v.sub(&c.scale(coeff))?;
            }
            if v.norm() > 1e-10 {
                comp.push(v.scale(1.0 / v.norm()));
            }
        }
        complements.push(comp);
        prev_proj = proj;
    }
    let mat = (&mat + mat.transpose()) * 0.5;

    Ok(ChainOperator {
        op: InertiaOperator::new(n, mat)?,
        g0: levels[0].clone(),
        a0: a0.clone(),
        complements,
        s: s.to_vec(),
    })
}

/// Wedge bases of the natural chain `so(k0) ⊂ so(k0+1) ⊂ … ⊂ so(n)`.
pub fn so_chain_bases(k0: usize, n: usize) -> Result<Vec<Vec<AlgebraElement>>> {
    if k0 < 2 || k0 >= n {
        return Err(Error::Chain(format!("invalid chain so({k0}) ⊂ … ⊂ so({n})")));
    }
    let mut out = Vec::new();
    for k in k0..=n {
        let basis: Vec<AlgebraElement> = wedge_pairs(n)
            .into_iter()
            .filter(|p| p.j() <= k)
            .map(|p| AlgebraElement::wedge(p, n).expect("valid pair"))
            .collect();
        out.push(basis);
    }
    Ok(out)
}

/// A constraint annihilator: `ρ` orthonormal algebra elements `a¹..a^ρ`
/// spanning the orthogonal complement of the admissible space.
#[derive(Debug, Clone)]
pub struct Distribution {
    n: usize,
    annihilator: Vec<AlgebraElement>,
}

impl Distribution {
    pub fn new(n: usize, annihilator: Vec<AlgebraElement>) -> Result<Self> {
        let m = wedge_dim(n);
        if annihilator.len() >= m {
            return Err(Error::Parameter(format!(
                "annihilator rank {} leaves no admissible directions in so({n})",
                annihilator.len()
            )));
        }
        for (a, ea) in annihilator.iter().enumerate() {
            if ea.n() != n {
                return Err(Error::Dimension("annihilator dimension mismatch".into()));
            }
            for (b, eb) in annihilator.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                if (killing_inner(ea, eb)? - want).abs() > 1e-12 {
                    return Err(Error::Parameter(
                        "annihilator vectors must be orthonormal".into(),
                    ));
                }
            }
        }
        Ok(Self { n, annihilator })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of constraints.
    pub fn rho(&self) -> usize {
        self.annihilator.len()
    }

    pub fn annihilator(&self) -> &[AlgebraElement] {
        &self.annihilator
    }

    /// Dimension of the admissible space.
    pub fn admissible_dim(&self) -> usize {
        wedge_dim(self.n) - self.annihilator.len()
    }

    /// Orthonormal basis of the admissible space (Killing complement of the
    /// annihilator), built by completing the annihilator to a full basis.
    pub fn admissible_basis(&self) -> Result<Vec<AlgebraElement>> {
        complement_basis(self.n, &self.annihilator)
    }

    /// True when the annihilator span is closed under the commutator.
    pub fn annihilator_is_subalgebra(&self) -> Result<bool> {
        for a in &self.annihilator {
            for b in &self.annihilator {
                let br = commutator(a, b)?;
                if br.sub(&project_span(&br, &self.annihilator)?)?.norm() > 1e-10 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Orthonormal basis of the Killing complement of `span(given)` in `so(n)`.
pub fn complement_basis(n: usize, given: &[AlgebraElement]) -> Result<Vec<AlgebraElement>> {
    let m = wedge_dim(n);
    let mut basis: Vec<AlgebraElement> = given.to_vec();
    let mut out = Vec::with_capacity(m - given.len());
    for p in wedge_pairs(n) {
        if basis.len() == m {
            break;
        }
        let cand = AlgebraElement::wedge(p, n)?;
        let mut v = cand.clone();
        for b in &basis {
            let c = killing_inner(&v, b)?;
            v = v.sub(&b.scale(c))?;
        }
        if v.norm() > 1e-8 {
            let v = v.scale(1.0 / v.norm());
            basis.push(v.clone());
            out.push(v);
        }
    }
    if basis.len() != m {
        return Err(Error::DegenerateBasis(
            "failed to complete the annihilator to a full basis".into(),
        ));
    }
    Ok(out)
}

/// Suslov constraints: the annihilator spans `{E_i∧E_j : r+1 ≤ i < j ≤ n}`,
/// so only rotations touching the first `r` axes are admissible.
///
/// `r = 1` is the unrelaxed problem with annihilator `so(n-1)`.
pub fn suslov_distribution(n: usize, r: usize) -> Result<Distribution> {
    if n < 3 || r < 1 || r > n - 1 {
        return Err(Error::Parameter(format!(
            "suslov distribution needs n >= 3 and 1 <= r <= n-1, got n = {n}, r = {r}"
        )));
    }
    let annihilator: Vec<AlgebraElement> = wedge_pairs(n)
        .into_iter()
        .filter(|p| p.i() >= r + 1)
        .map(|p| AlgebraElement::wedge(p, n).expect("valid pair"))
        .collect();
    Distribution::new(n, annihilator)
}

/// Veselova constraints: the annihilator is `so(n-1)` spanned by
/// `{E_p∧E_q : 2 ≤ p < q ≤ n}`; admissible rotations contain axis 1.
pub fn veselova_distribution(n: usize) -> Result<Distribution> {
    if n < 3 {
        return Err(Error::Parameter(format!(
            "veselova distribution needs n >= 3, got {n}"
        )));
    }
    suslov_distribution(n, 1)
}

/// Single wedge basis element, convenience for tests and scenario setup.
pub fn wedge_element(i: usize, j: usize, n: usize) -> Result<AlgebraElement> {
    AlgebraElement::wedge(WedgeIndex::new(i, j, n)?, n)
}
