//! Exact linear-algebra kernel for `so(n)`: wedge basis, Killing form,
//! brackets, adjoint action, projections and orthogonality repair.
//!
//! Conventions used by the whole crate:
//!
//! * the wedge basis element `E_i ∧ E_j` (1-based, `i < j`) is the matrix
//!   with entry `(i, j) = +1`, `(j, i) = -1` and zeros elsewhere, enumerated
//!   in lexicographic `(i, j)` order;
//! * the Killing inner product is `⟨X, Y⟩ = -½ tr(X·Y)`, under which the
//!   wedge basis is orthonormal;
//! * the adjoint action is `adjoint(g, X) = g⁻¹·X·g` (constraint transport
//!   orientation); the inverse orientation `g·X·g⁻¹` is exposed separately.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Skew-symmetry acceptance tolerance for algebra elements.
pub const SKEW_TOL: f64 = 1e-12;
/// Orthogonality acceptance tolerance for group elements.
pub const ORTHO_TOL: f64 = 1e-10;
/// Maximum Frobenius distance from `O(n)` accepted by [`reorthogonalize`].
pub const POLAR_BASIN: f64 = 0.1;

/// Dimension of `so(n)` as a vector space.
pub fn wedge_dim(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Ordered index pair `1 ≤ i < j ≤ n` labelling a wedge-basis element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WedgeIndex {
    i: usize,
    j: usize,
}

impl WedgeIndex {
    pub fn new(i: usize, j: usize, n: usize) -> Result<Self> {
        if i == 0 || j == 0 || i >= j || j > n {
            return Err(Error::Index(format!(
                "wedge index ({i},{j}) out of range for n = {n}"
            )));
        }
        Ok(Self { i, j })
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    /// Position of this pair in the lexicographic enumeration of the basis.
    pub fn position(&self, n: usize) -> usize {
        let (i, j) = (self.i, self.j);
        (i - 1) * n - i * (i - 1) / 2 + (j - i - 1)
    }
}

/// All wedge index pairs of `so(n)` in lexicographic order.
pub fn wedge_pairs(n: usize) -> Vec<WedgeIndex> {
    let mut out = Vec::with_capacity(wedge_dim(n));
    for i in 1..=n {
        for j in (i + 1)..=n {
            out.push(WedgeIndex { i, j });
        }
    }
    out
}

/// A point of `so(n)`: a real skew-symmetric `n×n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    n: usize,
    mat: DMatrix<f64>,
}

impl AlgebraElement {
    /// The zero element.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            mat: DMatrix::zeros(n, n),
        }
    }

    /// Wraps a matrix, checking skew-symmetry to [`SKEW_TOL`].
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n || n < 2 {
            return Err(Error::Dimension(format!(
                "algebra element must be square with n >= 2, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = (&mat + mat.transpose()).norm();
        if asym > SKEW_TOL * (1.0 + mat.norm()) {
            return Err(Error::State(format!(
                "matrix is not skew-symmetric: ||X + X^T|| = {asym:.3e}"
            )));
        }
        // Exact skew-symmetrization removes representable round-off.
        let skew = (&mat - mat.transpose()) * 0.5;
        Ok(Self { n, mat: skew })
    }

    /// Basis element `E_i ∧ E_j`.
    pub fn wedge(idx: WedgeIndex, n: usize) -> Result<Self> {
        if idx.j > n {
            return Err(Error::Index(format!(
                "wedge index ({},{}) out of range for n = {n}",
                idx.i, idx.j
            )));
        }
        let mut mat = DMatrix::zeros(n, n);
        mat[(idx.i - 1, idx.j - 1)] = 1.0;
        mat[(idx.j - 1, idx.i - 1)] = -1.0;
        Ok(Self { n, mat })
    }

    /// Element with the given wedge-basis coefficients (lexicographic order).
    pub fn from_wedge_coords(n: usize, coords: &DVector<f64>) -> Result<Self> {
        if coords.len() != wedge_dim(n) {
            return Err(Error::Dimension(format!(
                "expected {} wedge coefficients for so({n}), got {}",
                wedge_dim(n),
                coords.len()
            )));
        }
        let mut mat = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                mat[(i, j)] = coords[k];
                mat[(j, i)] = -coords[k];
                k += 1;
            }
        }
        Ok(Self { n, mat })
    }

    /// Coefficients in the orthonormal wedge basis (upper-triangle entries).
    pub fn to_wedge_coords(&self) -> DVector<f64> {
        let mut coords = DVector::zeros(wedge_dim(self.n));
        let mut k = 0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                coords[k] = self.mat[(i, j)];
                k += 1;
            }
        }
        coords
    }

    /// Random element with upper-triangle entries uniform in `[-1, 1]`.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let m = wedge_dim(n);
        let coords = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        Self::from_wedge_coords(n, &coords).expect("dimensions consistent")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Entry `(i, j)` with 1-based indices.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.mat[(i - 1, j - 1)]
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            mat: &self.mat * c,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_n(self, other)?;
        Ok(Self {
            n: self.n,
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_n(self, other)?;
        Ok(Self {
            n: self.n,
            mat: &self.mat - &other.mat,
        })
    }

    /// Killing norm `⟨X, X⟩^{1/2}`.
    pub fn norm(&self) -> f64 {
        killing_inner(self, self).expect("same element").sqrt()
    }
}

fn check_same_n(x: &AlgebraElement, y: &AlgebraElement) -> Result<()> {
    if x.n != y.n {
        return Err(Error::Dimension(format!(
            "algebra elements of so({}) and so({}) cannot be combined",
            x.n, y.n
        )));
    }
    Ok(())
}

/// Killing inner product `⟨X, Y⟩ = -½ tr(X·Y)` on `so(n)`.
pub fn killing_inner(x: &AlgebraElement, y: &AlgebraElement) -> Result<f64> {
    check_same_n(x, y)?;
    // -1/2 tr(XY) = +1/2 tr(X Y^T) = 1/2 sum_ij X_ij Y_ij for skew X, Y.
    let mut acc = 0.0;
    for (a, b) in x.mat.iter().zip(y.mat.iter()) {
        acc += a * b;
    }
    Ok(0.5 * acc)
}

/// Commutator `[X, Y] = XY - YX`.
pub fn commutator(x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement> {
    check_same_n(x, y)?;
    let m = &x.mat * &y.mat - &y.mat * &x.mat;
    Ok(AlgebraElement { n: x.n, mat: m })
}

/// A point of `SO(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    n: usize,
    mat: DMatrix<f64>,
}

impl GroupElement {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            mat: DMatrix::identity(n, n),
        }
    }

    /// Wraps a matrix, checking `‖gᵀg - I‖ ≤ 1e-10` and `det g > 0`.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n || n < 2 {
            return Err(Error::Dimension(format!(
                "group element must be square with n >= 2, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let drift = (mat.transpose() * &mat - DMatrix::identity(n, n)).norm();
        if drift > ORTHO_TOL {
            return Err(Error::State(format!(
                "matrix is not orthogonal: ||g^T g - I|| = {drift:.3e}"
            )));
        }
        if mat.determinant() < 0.0 {
            return Err(Error::State("matrix has determinant -1".into()));
        }
        Ok(Self { n, mat })
    }

    /// Wraps a drifted matrix, repairing it with the polar projection when
    /// the orthogonality residual exceeds [`ORTHO_TOL`].
    pub fn from_drifted(mat: DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        let drift = (mat.transpose() * &mat - DMatrix::identity(n, n)).norm();
        if drift <= ORTHO_TOL {
            Self::new(mat)
        } else {
            Self::new(polar_factor(&mat)?)
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Rotation by `angle` in the coordinate plane `(i, j)` (1-based).
    pub fn plane_rotation(n: usize, i: usize, j: usize, angle: f64) -> Result<Self> {
        let idx = WedgeIndex::new(i, j, n)?;
        let mut mat = DMatrix::identity(n, n);
        let (c, s) = (angle.cos(), angle.sin());
        mat[(idx.i - 1, idx.i - 1)] = c;
        mat[(idx.j - 1, idx.j - 1)] = c;
        mat[(idx.i - 1, idx.j - 1)] = s;
        mat[(idx.j - 1, idx.i - 1)] = -s;
        Ok(Self { n, mat })
    }
}

/// Adjoint transport `g⁻¹·X·g` (equals `gᵀXg` for orthogonal `g`).
pub fn adjoint(g: &GroupElement, x: &AlgebraElement) -> Result<AlgebraElement> {
    if g.n != x.n {
        return Err(Error::Dimension(format!(
            "group element of SO({}) cannot act on so({})",
            g.n, x.n
        )));
    }
    let m = g.mat.transpose() * &x.mat * &g.mat;
    // Conjugation by an orthogonal matrix preserves skew-symmetry exactly up
    // to round-off; resymmetrize to keep the invariant tight.
    AlgebraElement::new((&m - m.transpose()) * 0.5)
}

/// Inverse-orientation adjoint transport `g·X·g⁻¹`.
pub fn adjoint_inv(g: &GroupElement, x: &AlgebraElement) -> Result<AlgebraElement> {
    if g.n != x.n {
        return Err(Error::Dimension(format!(
            "group element of SO({}) cannot act on so({})",
            g.n, x.n
        )));
    }
    let m = &g.mat * &x.mat * g.mat.transpose();
    AlgebraElement::new((&m - m.transpose()) * 0.5)
}

/// Killing-orthogonal projection of `x` onto `span(basis)`.
///
/// The basis need not be orthonormal; a Gram solve handles the general case.
pub fn project_span(x: &AlgebraElement, basis: &[AlgebraElement]) -> Result<AlgebraElement> {
    if basis.is_empty() {
        return Ok(AlgebraElement::zeros(x.n));
    }
    let k = basis.len();
    let mut gram = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (a, ba) in basis.iter().enumerate() {
        rhs[a] = killing_inner(x, ba)?;
        for (b, bb) in basis.iter().enumerate() {
            gram[(a, b)] = killing_inner(ba, bb)?;
        }
    }
    let eig = gram.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_ev <= 1e-12 * max_ev.max(1.0) {
        return Err(Error::DegenerateBasis(format!(
            "projection basis is rank deficient (gram eigenvalues in [{min_ev:.3e}, {max_ev:.3e}])"
        )));
    }
    let coeffs = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateBasis("gram solve failed".into()))?;
    let mut out = AlgebraElement::zeros(x.n);
    for (c, b) in coeffs.iter().zip(basis.iter()) {
        out = out.add(&b.scale(*c))?;
    }
    Ok(out)
}

/// Nearest special-orthogonal matrix (polar factor) of a drifted group element.
pub fn reorthogonalize(g: &GroupElement) -> Result<GroupElement> {
    GroupElement::new(polar_factor(&g.mat)?)
}

/// Polar factor `U·Vᵀ` of an arbitrary square matrix near `O(n)`.
pub fn polar_factor(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = mat.nrows();
    let svd = mat.clone().svd(true, true);
    let dist: f64 = svd
        .singular_values
        .iter()
        .map(|s| (s - 1.0) * (s - 1.0))
        .sum::<f64>()
        .sqrt();
    if dist > POLAR_BASIN {
        return Err(Error::ProjectionFailure(format!(
            "matrix is {dist:.3e} away from O({n}) in Frobenius norm (limit {POLAR_BASIN})"
        )));
    }
    let u = svd.u.ok_or_else(|| Error::ProjectionFailure("svd failed".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::ProjectionFailure("svd failed".into()))?;
    let q = u * vt;
    if q.determinant() <= 0.0 {
        return Err(Error::ProjectionFailure(
            "polar factor has nonpositive determinant".into(),
        ));
    }
    Ok(q)
}

/// The `so(3) ≅ ℝ³` identification: `hat(u)·w = u × w`.
pub fn hat(v: &nalgebra::Vector3<f64>) -> AlgebraElement {
    let mat = DMatrix::from_row_slice(
        3,
        3,
        &[0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0],
    );
    AlgebraElement { n: 3, mat }
}

/// Inverse of [`hat`].
pub fn unhat(x: &AlgebraElement) -> Result<nalgebra::Vector3<f64>> {
    if x.n != 3 {
        return Err(Error::Dimension(format!(
            "unhat expects so(3), got so({})",
            x.n
        )));
    }
    Ok(nalgebra::Vector3::new(
        x.mat[(2, 1)],
        x.mat[(0, 2)],
        x.mat[(1, 0)],
    ))
}

/// Orthonormalizes a list of algebra elements in place (modified Gram-Schmidt).
pub fn orthonormalize(elements: &[AlgebraElement]) -> Result<Vec<AlgebraElement>> {
    let mut out: Vec<AlgebraElement> = Vec::with_capacity(elements.len());
    for e in elements {
        let mut v = e.clone();
        for b in &out {
            let c = killing_inner(&v, b)?;
            v = v.sub(&b.scale(c))?;
        }
        let nv = v.norm();
        if nv < 1e-10 {
            return Err(Error::DegenerateBasis(
                "elements are linearly dependent".into(),
            ));
        }
        out.push(v.scale(1.0 / nv));
    }
    Ok(out)
}
