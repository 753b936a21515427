//! ℤ/2-graded linear algebra: named bases with parities, Koszul signs,
//! bilinear forms and their inverses, and the correspondence between
//! quadratic functions and graded-symmetric forms.
//!
//! Basis order is the sign reference frame: every Koszul sign in the crate is
//! computed relative to the element order fixed by a [`GradedBasis`].

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use num::traits::Zero;
use thiserror::Error;

use crate::linalg;
use crate::scalar::{qi, Q};

/// Errors from graded-linear-algebra constructors and operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GradedError {
    #[error("duplicate basis name `{0}`")]
    DuplicateName(String),
    #[error("unknown basis name `{0}`")]
    UnknownName(String),
    #[error("permutation length {permutation} does not match parity count {parities}")]
    LengthMismatch { permutation: usize, parities: usize },
    #[error("sequence is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("matrix size {got} does not match basis size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("form entry ({row},{col}) is nonzero but the parities do not add to the form parity")]
    ParityViolation { row: usize, col: usize },
    #[error("form entry ({row},{col}) violates the declared graded symmetry")]
    SymmetryViolation { row: usize, col: usize },
    #[error("form is degenerate")]
    SingularForm,
    #[error("quadratic function mixes term parities")]
    MixedParity,
    #[error("operation requires a graded-symmetric form")]
    NotSymmetric,
}

/// A ℤ/2 degree. Addition is mod 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn is_odd(self) -> bool {
        self == Parity::Odd
    }

    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    /// 0 or 1, for arithmetic in sign exponents.
    pub fn bit(self) -> u64 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    /// Parity of a count: even count → even.
    pub fn from_count(n: u64) -> Parity {
        if n % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

impl Add for Parity {
    type Output = Parity;
    fn add(self, rhs: Parity) -> Parity {
        Parity::from_count(self.bit() + rhs.bit())
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parity::Even => write!(f, "even"),
            Parity::Odd => write!(f, "odd"),
        }
    }
}

/// An ordered list of named basis elements with parities. Names are unique;
/// the order fixes all sign computations and serializations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradedBasis {
    elements: Vec<(String, Parity)>,
}

impl GradedBasis {
    pub fn new(elements: Vec<(String, Parity)>) -> Result<Self, GradedError> {
        let mut seen = BTreeMap::new();
        for (name, _) in &elements {
            if seen.insert(name.clone(), ()).is_some() {
                return Err(GradedError::DuplicateName(name.clone()));
            }
        }
        Ok(GradedBasis { elements })
    }

    /// Convenience constructor from `(&str, Parity)` pairs.
    pub fn from_pairs(pairs: &[(&str, Parity)]) -> Result<Self, GradedError> {
        Self::new(
            pairs
                .iter()
                .map(|(n, p)| (n.to_string(), *p))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.elements[i].0
    }

    pub fn parity(&self, i: usize) -> Parity {
        self.elements[i].1
    }

    pub fn parities(&self) -> Vec<Parity> {
        self.elements.iter().map(|(_, p)| *p).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|(n, _)| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Parity)> {
        self.elements.iter().map(|(n, p)| (n.as_str(), *p))
    }

    /// Tensor-product basis: element `i·|other| + j` is named `"{v}:{a}"`
    /// with parity the sum. The left factor varies slowest.
    pub fn tensor(&self, other: &GradedBasis) -> GradedBasis {
        let mut elements = Vec::with_capacity(self.len() * other.len());
        for (v, pv) in self.iter() {
            for (a, pa) in other.iter() {
                elements.push((format!("{v}:{a}"), pv + pa));
            }
        }
        GradedBasis { elements }
    }

    /// Index into a tensor basis built by [`GradedBasis::tensor`].
    pub fn tensor_index(&self, other: &GradedBasis, i: usize, j: usize) -> usize {
        debug_assert!(i < self.len() && j < other.len());
        i * other.len() + j
    }
}

/// Sign of a permutation acting on graded elements.
///
/// `permutation[k]` is the original index of the element now at position `k`
/// (0-indexed). The sign is the product of `(−1)^{|a||b|}` over all inverted
/// pairs, i.e. the Koszul sign of reordering a product `a_0 a_1 ⋯` into the
/// permuted order.
pub fn koszul_sign(permutation: &[usize], parities: &[Parity]) -> Result<i64, GradedError> {
    let n = permutation.len();
    if n != parities.len() {
        return Err(GradedError::LengthMismatch {
            permutation: n,
            parities: parities.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in permutation {
        if p >= n || seen[p] {
            return Err(GradedError::NotAPermutation(n));
        }
        seen[p] = true;
    }
    let mut sign = 1i64;
    for k in 0..n {
        for l in (k + 1)..n {
            if permutation[k] > permutation[l]
                && parities[permutation[k]].is_odd()
                && parities[permutation[l]].is_odd()
            {
                sign = -sign;
            }
        }
    }
    Ok(sign)
}

/// Declared symmetry type of a bilinear form. The graded rule is
/// `⟨x,y⟩ = s·(−1)^{|x||y|}⟨y,x⟩` with `s = +1` for `Symmetric`, `−1` for `Skew`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    Symmetric,
    Skew,
}

impl Symmetry {
    pub fn sign(self) -> i64 {
        match self {
            Symmetry::Symmetric => 1,
            Symmetry::Skew => -1,
        }
    }
}

/// A homogeneous bilinear form on a graded basis, stored densely:
/// `matrix[i][j] = ⟨e_i, e_j⟩`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BilinearForm {
    basis: GradedBasis,
    matrix: Vec<Vec<Q>>,
    form_parity: Parity,
    symmetry: Symmetry,
}

impl BilinearForm {
    /// Validates shape, the parity selection rule (nonzero entries only pair
    /// elements whose parities add to the form parity), and graded symmetry.
    pub fn new(
        basis: GradedBasis,
        matrix: Vec<Vec<Q>>,
        form_parity: Parity,
        symmetry: Symmetry,
    ) -> Result<Self, GradedError> {
        let n = basis.len();
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(GradedError::DimensionMismatch {
                expected: n,
                got: matrix.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                if !matrix[i][j].is_zero() && basis.parity(i) + basis.parity(j) != form_parity {
                    return Err(GradedError::ParityViolation { row: i, col: j });
                }
                let cross = basis.parity(i).bit() * basis.parity(j).bit();
                let expected = qi(symmetry.sign() * if cross % 2 == 1 { -1 } else { 1 })
                    * matrix[j][i].clone();
                if matrix[i][j] != expected {
                    return Err(GradedError::SymmetryViolation { row: i, col: j });
                }
            }
        }
        Ok(BilinearForm {
            basis,
            matrix,
            form_parity,
            symmetry,
        })
    }

    /// Build from sparse `(row name, col name, value)` entries.
    pub fn from_entries(
        basis: GradedBasis,
        entries: &[(&str, &str, Q)],
        form_parity: Parity,
        symmetry: Symmetry,
    ) -> Result<Self, GradedError> {
        let n = basis.len();
        let mut matrix = vec![vec![Q::zero(); n]; n];
        for (a, b, v) in entries {
            let i = basis
                .index_of(a)
                .ok_or_else(|| GradedError::UnknownName(a.to_string()))?;
            let j = basis
                .index_of(b)
                .ok_or_else(|| GradedError::UnknownName(b.to_string()))?;
            matrix[i][j] = v.clone();
        }
        Self::new(basis, matrix, form_parity, symmetry)
    }

    pub fn basis(&self) -> &GradedBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &[Vec<Q>] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> &Q {
        &self.matrix[i][j]
    }

    pub fn form_parity(&self) -> Parity {
        self.form_parity
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn is_nondegenerate(&self) -> bool {
        linalg::rank(&self.matrix) == self.basis.len()
    }

    /// The inverse form as a two-tensor. See [`invert_form`].
    pub fn inverse(&self) -> Result<InverseFormTensor, GradedError> {
        invert_form(self)
    }
}

/// The inverse `⟨−,−⟩⁻¹` of a nondegenerate form, stored as a sparse list of
/// pairs `(x_i, y^i, coefficient)` of basis elements together with the dense
/// matrix `G`.
///
/// `G = B⁻¹·S` with `S = diag((−1)^{|form|·|e_p|})`: contracting the original
/// form with `G` on the first slot gives the parity-twisted identity
/// `B·G = S`, and on the second slot `G·B = S′` with
/// `S′ = diag((−1)^{|form|·(|e_p|+|form|)})`. For an even form both are
/// literally the identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InverseFormTensor {
    basis: GradedBasis,
    matrix: Vec<Vec<Q>>,
    pairs: Vec<(usize, usize, Q)>,
    form_parity: Parity,
    symmetry: Symmetry,
}

impl InverseFormTensor {
    pub fn basis(&self) -> &GradedBasis {
        &self.basis
    }

    /// Sparse entries `(i, j, c)` meaning a summand `c·e_i⊗e_j`.
    pub fn pairs(&self) -> &[(usize, usize, Q)] {
        &self.pairs
    }

    pub fn matrix(&self) -> &[Vec<Q>] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> &Q {
        &self.matrix[i][j]
    }

    pub fn form_parity(&self) -> Parity {
        self.form_parity
    }

    /// Reinterpret the tensor as a bilinear form (used to state the
    /// double-inversion identity). Inverting an odd form flips the declared
    /// symmetry; inverting an even form keeps it.
    pub fn as_form(&self) -> BilinearForm {
        BilinearForm::new(
            self.basis.clone(),
            self.matrix.clone(),
            self.form_parity,
            self.symmetry,
        )
        .expect("inverse tensor is a valid graded form")
    }

    /// The contraction identity against the original form: `B·G = S` and
    /// `G·B = S′` as described on the type. Returns false on any mismatch.
    pub fn contraction_is_identity(&self, form: &BilinearForm) -> bool {
        let n = self.basis.len();
        if form.basis() != &self.basis {
            return false;
        }
        let twist =
            |p: Parity| qi(if self.form_parity.is_odd() && p.is_odd() { -1 } else { 1 });
        let bg = linalg::mat_mul(form.matrix(), &self.matrix);
        let gb = linalg::mat_mul(&self.matrix, form.matrix());
        for i in 0..n {
            for j in 0..n {
                let s = if i == j {
                    twist(self.basis.parity(i))
                } else {
                    Q::zero()
                };
                // For an even form S′ = S = δ_ij; the |form| factor in S′ is
                // already absorbed by `twist` acting on the flipped parity.
                let s2 = if i != j {
                    Q::zero()
                } else if self.form_parity.is_odd() {
                    twist(self.basis.parity(i).flip())
                } else {
                    s.clone()
                };
                if bg[i][j] != s || gb[i][j] != s2 {
                    return false;
                }
            }
        }
        true
    }
}

/// Inverts a nondegenerate form: `G = B⁻¹·S`, `S = diag((−1)^{|form|·|e_p|})`.
///
/// This normalization is pinned by two facts downstream: the operator
/// `a ↦ Σ c_i·x_i·y^i·a` built from the inverse form vanishes on the 1|1
/// contractible algebra and equals `n·id` on the n×n matrix algebra.
pub fn invert_form(form: &BilinearForm) -> Result<InverseFormTensor, GradedError> {
    let inv = linalg::invert(form.matrix()).ok_or(GradedError::SingularForm)?;
    let n = form.basis().len();
    let mut matrix = inv;
    for (j, col_parity) in form.basis().parities().iter().enumerate() {
        if form.form_parity().is_odd() && col_parity.is_odd() {
            for row in matrix.iter_mut().take(n) {
                row[j] = -row[j].clone();
            }
        }
    }
    let mut pairs = Vec::new();
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_zero() {
                pairs.push((i, j, v.clone()));
            }
        }
    }
    let symmetry = if form.form_parity().is_odd() {
        match form.symmetry() {
            Symmetry::Symmetric => Symmetry::Skew,
            Symmetry::Skew => Symmetry::Symmetric,
        }
    } else {
        form.symmetry()
    };
    Ok(InverseFormTensor {
        basis: form.basis().clone(),
        matrix,
        pairs,
        form_parity: form.form_parity(),
        symmetry,
    })
}

/// A quadratic function `Σ_{i≤j} c_{ij}·x_i x_j` on the coordinates dual to a
/// graded basis. Keys are normalized to `i ≤ j` with the Koszul sign of the
/// swap; odd-coordinate squares are zero and pruned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticFunction {
    basis: GradedBasis,
    terms: BTreeMap<(usize, usize), Q>,
}

impl QuadraticFunction {
    pub fn zero(basis: GradedBasis) -> Self {
        QuadraticFunction {
            basis,
            terms: BTreeMap::new(),
        }
    }

    /// Build from `(i, j, coefficient)` monomials `c·x_i x_j` in any order.
    pub fn new(basis: GradedBasis, terms: &[(usize, usize, Q)]) -> Self {
        let mut q = Self::zero(basis);
        for (i, j, c) in terms {
            q.add_term(*i, *j, c.clone());
        }
        q
    }

    fn add_term(&mut self, i: usize, j: usize, c: Q) {
        if c.is_zero() {
            return;
        }
        let (key, coeff) = if i <= j {
            ((i, j), c)
        } else {
            // x_i x_j = (−1)^{|x_i||x_j|} x_j x_i
            let flip = self.basis.parity(i).is_odd() && self.basis.parity(j).is_odd();
            ((j, i), if flip { -c } else { c })
        };
        if key.0 == key.1 && self.basis.parity(key.0).is_odd() {
            return; // odd square is zero
        }
        let entry = self.terms.entry(key).or_insert_with(Q::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn basis(&self) -> &GradedBasis {
        &self.basis
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, &Q)> {
        self.terms.iter().map(|(&(i, j), c)| (i, j, c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The common parity of all terms; `Err` when mixed. The zero function is
    /// even.
    pub fn parity(&self) -> Result<Parity, GradedError> {
        let mut parity = None;
        for (&(i, j), _) in &self.terms {
            let p = self.basis.parity(i) + self.basis.parity(j);
            match parity {
                None => parity = Some(p),
                Some(q) if q == p => {}
                Some(_) => return Err(GradedError::MixedParity),
            }
        }
        Ok(parity.unwrap_or(Parity::Even))
    }
}

/// The form corresponding to a quadratic function under
/// `σ = ½·Σ_{ij} B_{ij} x_i x_j`:
/// off-diagonal coefficients map across unchanged (`B_{ij} = c_{ij}` for
/// `i < j`, mirrored with the Koszul sign), and even diagonals double
/// (`B_{ii} = 2c_{ii}`), so `σ = ½x²` corresponds to `x⊗x`.
pub fn quadratic_to_form(q: &QuadraticFunction) -> Result<BilinearForm, GradedError> {
    let parity = q.parity()?;
    let n = q.basis().len();
    let mut matrix = vec![vec![Q::zero(); n]; n];
    for (i, j, c) in q.terms() {
        if i == j {
            matrix[i][i] = qi(2) * c.clone();
        } else {
            matrix[i][j] = c.clone();
            let flip = q.basis().parity(i).is_odd() && q.basis().parity(j).is_odd();
            matrix[j][i] = if flip { -c.clone() } else { c.clone() };
        }
    }
    BilinearForm::new(q.basis().clone(), matrix, parity, Symmetry::Symmetric)
}

/// Inverse direction of [`quadratic_to_form`]; requires a graded-symmetric
/// form. Round trips are exact in both directions.
pub fn form_to_quadratic(form: &BilinearForm) -> Result<QuadraticFunction, GradedError> {
    if form.symmetry() != Symmetry::Symmetric {
        return Err(GradedError::NotSymmetric);
    }
    let n = form.basis().len();
    let mut terms = Vec::new();
    for i in 0..n {
        for j in i..n {
            let b = form.entry(i, j);
            if b.is_zero() {
                continue;
            }
            let c = if i == j {
                b.clone() / qi(2)
            } else {
                b.clone()
            };
            terms.push((i, j, c));
        }
    }
    Ok(QuadraticFunction::new(form.basis().clone(), &terms))
}

/// Product form on a tensor-product basis:
/// `⟨v₁⊗a₁, v₂⊗a₂⟩ = (−1)^{|a₁||v₂|}·⟨v₁,v₂⟩·⟨a₁,a₂⟩`.
/// The parity adds; the symmetry sign multiplies.
pub fn tensor_form(fv: &BilinearForm, fa: &BilinearForm) -> Result<BilinearForm, GradedError> {
    let basis = fv.basis().tensor(fa.basis());
    let nv = fv.basis().len();
    let na = fa.basis().len();
    let n = nv * na;
    let mut matrix = vec![vec![Q::zero(); n]; n];
    for v1 in 0..nv {
        for a1 in 0..na {
            for v2 in 0..nv {
                for a2 in 0..na {
                    let base = fv.entry(v1, v2).clone() * fa.entry(a1, a2).clone();
                    if base.is_zero() {
                        continue;
                    }
                    let twist = fa.basis().parity(a1).is_odd() && fv.basis().parity(v2).is_odd();
                    matrix[v1 * na + a1][v2 * na + a2] = if twist { -base } else { base };
                }
            }
        }
    }
    let symmetry = if fv.symmetry() == fa.symmetry() {
        Symmetry::Symmetric
    } else {
        Symmetry::Skew
    };
    BilinearForm::new(
        basis,
        matrix,
        fv.form_parity() + fa.form_parity(),
        symmetry,
    )
}
