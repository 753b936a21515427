//! Differential graded Frobenius algebras over the rationals.
//!
//! An algebra is described by dense structure tables over a graded basis: a
//! multiplication table, a unit vector, a differential, and an invariant
//! bilinear form. The module validates the axioms exhaustively, constructs
//! contracting homotopies for acyclic algebras, exposes the boundary and
//! handle insertion operators obtained by contracting the inverse form, and
//! evaluates the family of surface tensors indexed by a genus, a count of
//! extra boundary circles, and a profile of letter blocks (one cyclic block
//! per labeled boundary). The six gluing identities those tensors satisfy
//! are available as randomized, exact-arithmetic checks.

use crate::graded::{self, BilinearForm, GradedBasis, GradedError, InverseFormTensor, Parity, Symmetry};
use crate::linalg;
use crate::scalar::{qi, sign_pow, Q};
use num::traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

/// Errors raised while building algebras or homotopies.
#[derive(Debug, Error)]
pub enum FrobeniusError {
    #[error("unknown basis name `{0}`")]
    UnknownName(String),
    #[error("matrix algebra size must be positive")]
    ZeroMatrixSize,
    #[error("homology is nonzero: the class of {witness} survives")]
    NotContractible { witness: String },
    #[error("contracting homotopy construction failed: {0}")]
    HomotopyConstruction(String),
    #[error(transparent)]
    Graded(#[from] GradedError),
}

/// Sparse element: nonzero coordinates over the algebra basis.
type SparseVec = Vec<(usize, Q)>;

/// One argument slot of a surface-tensor evaluation: a parity-homogeneous
/// element of the algebra.
#[derive(Debug, Clone)]
struct Slot {
    parity: u64,
    vec: SparseVec,
}

/// A differential graded Frobenius algebra with dense structure tables.
#[derive(Debug, Clone)]
pub struct DgFrobeniusAlgebra {
    basis: GradedBasis,
    pbits: Vec<u64>,
    unit: Vec<Q>,
    /// `mult[i][j]` is the coordinate vector of `e_i · e_j`.
    mult: Vec<Vec<Vec<Q>>>,
    /// Row `j` is the coordinate vector of `d(e_j)`.
    diff: Vec<Vec<Q>>,
    form: BilinearForm,
    inverse: InverseFormTensor,
}

/// One failed axiom with a witness locating the failure.
#[derive(Debug, Clone)]
pub struct AxiomFailure {
    pub axiom: String,
    pub witness: String,
}

/// Outcome of checking every algebra axiom on the structure tables.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    failures: Vec<AxiomFailure>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failures(&self) -> &[AxiomFailure] {
        &self.failures
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.failures.is_empty() {
            return write!(f, "all axioms hold");
        }
        writeln!(f, "{} axiom failure(s):", self.failures.len())?;
        for fail in &self.failures {
            writeln!(f, "  {}: {}", fail.axiom, fail.witness)?;
        }
        Ok(())
    }
}

/// An acyclic splitting: an odd contracting homotopy `s` and an even
/// projector `pi` onto surviving homology, both as matrices whose row `j`
/// is the image of the `j`-th basis vector.
#[derive(Debug, Clone)]
pub struct HodgeDecomposition {
    s: Vec<Vec<Q>>,
    pi: Vec<Vec<Q>>,
}

impl HodgeDecomposition {
    pub fn new(s: Vec<Vec<Q>>, pi: Vec<Vec<Q>>) -> Self {
        HodgeDecomposition { s, pi }
    }

    pub fn s(&self) -> &[Vec<Q>] {
        &self.s
    }

    pub fn pi(&self) -> &[Vec<Q>] {
        &self.pi
    }

    /// Basis of the image of `s` (the chosen isotropic complement).
    pub fn s_image(&self) -> Vec<Vec<Q>> {
        linalg::row_space_basis(&self.s)
    }
}

/// One randomized identity check: how many trials ran and which failed.
#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub name: String,
    pub trials: usize,
    pub failures: Vec<String>,
}

/// Results of the six gluing-identity checks.
#[derive(Debug, Clone)]
pub struct OtftReport {
    pub checks: Vec<IdentityCheck>,
}

impl OtftReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.failures.is_empty())
    }
}

impl fmt::Display for OtftReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            if c.failures.is_empty() {
                writeln!(f, "{}: ok ({} trials)", c.name, c.trials)?;
            } else {
                writeln!(f, "{}: {} of {} trials failed", c.name, c.failures.len(), c.trials)?;
                for w in c.failures.iter().take(3) {
                    writeln!(f, "  {w}")?;
                }
            }
        }
        Ok(())
    }
}

/// Solve `a·x = b` over the rationals; `a` is given as rows.
fn solve(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let rows = a.len();
    let cols = if rows > 0 { a[0].len() } else { 0 };
    let aug: Vec<Vec<Q>> = (0..rows)
        .map(|r| {
            let mut row = a[r].clone();
            row.push(b[r].clone());
            row
        })
        .collect();
    let (red, pivots) = linalg::rref(&aug);
    if pivots.contains(&cols) {
        return None;
    }
    let mut x = vec![Q::zero(); cols];
    for (r, &p) in pivots.iter().enumerate() {
        x[p] = red[r][cols].clone();
    }
    Some(x)
}

/// Does `v` lie in the row span of `rows`?
fn in_span(rows: &[Vec<Q>], v: &[Q]) -> bool {
    let base = linalg::rank(rows);
    let mut extended: Vec<Vec<Q>> = rows.to_vec();
    extended.push(v.to_vec());
    linalg::rank(&extended) == base
}

impl DgFrobeniusAlgebra {
    /// Build an algebra from sparse tables. Multiplication entries read
    /// `(left, right, result, coefficient)`; differential entries read
    /// `(source, target, coefficient)`. The form must be nondegenerate.
    pub fn new(
        basis: GradedBasis,
        unit: &str,
        mult_entries: &[(&str, &str, &str, Q)],
        diff_entries: &[(&str, &str, Q)],
        form_entries: &[(&str, &str, Q)],
        form_parity: Parity,
    ) -> Result<Self, FrobeniusError> {
        let n = basis.len();
        let idx = |name: &str| {
            basis
                .index_of(name)
                .ok_or_else(|| FrobeniusError::UnknownName(name.to_string()))
        };
        let mut mult = vec![vec![vec![Q::zero(); n]; n]; n];
        for (l, r, out, c) in mult_entries {
            mult[idx(l)?][idx(r)?][idx(out)?] += c.clone();
        }
        let mut diff = vec![vec![Q::zero(); n]; n];
        for (src, dst, c) in diff_entries {
            diff[idx(src)?][idx(dst)?] += c.clone();
        }
        let mut unit_vec = vec![Q::zero(); n];
        unit_vec[idx(unit)?] = qi(1);
        let form = BilinearForm::from_entries(basis.clone(), form_entries, form_parity, Symmetry::Symmetric)?;
        Self::assemble(basis, unit_vec, mult, diff, form)
    }

    fn assemble(
        basis: GradedBasis,
        unit: Vec<Q>,
        mult: Vec<Vec<Vec<Q>>>,
        diff: Vec<Vec<Q>>,
        form: BilinearForm,
    ) -> Result<Self, FrobeniusError> {
        let inverse = form.inverse()?;
        let pbits = basis.parities().iter().map(|p| p.bit()).collect();
        Ok(DgFrobeniusAlgebra {
            basis,
            pbits,
            unit,
            mult,
            diff,
            form,
            inverse,
        })
    }

    pub fn basis(&self) -> &GradedBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn unit_vector(&self) -> &[Q] {
        &self.unit
    }

    pub fn form(&self) -> &BilinearForm {
        &self.form
    }

    pub fn inverse_pairs(&self) -> &[(usize, usize, Q)] {
        self.inverse.pairs()
    }

    pub fn diff_matrix(&self) -> &[Vec<Q>] {
        &self.diff
    }

    /// Coordinate vector of the product `a·b`.
    pub fn product(&self, a: &[Q], b: &[Q]) -> Vec<Q> {
        let n = self.dim();
        let mut out = vec![Q::zero(); n];
        for i in 0..n {
            if a[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if b[j].is_zero() {
                    continue;
                }
                let c = a[i].clone() * b[j].clone();
                for k in 0..n {
                    if !self.mult[i][j][k].is_zero() {
                        out[k] += c.clone() * self.mult[i][j][k].clone();
                    }
                }
            }
        }
        out
    }

    /// Coordinate vector of `d(a)`.
    pub fn apply_diff(&self, a: &[Q]) -> Vec<Q> {
        linalg::vec_mat(a, &self.diff)
    }

    /// Value of the bilinear form on two coordinate vectors.
    pub fn pair(&self, a: &[Q], b: &[Q]) -> Q {
        let n = self.dim();
        let mut out = Q::zero();
        for i in 0..n {
            if a[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if !b[j].is_zero() {
                    out += a[i].clone() * b[j].clone() * self.form.entry(i, j).clone();
                }
            }
        }
        out
    }

    /// Basis vector as a dense coordinate vector.
    pub fn basis_vector(&self, i: usize) -> Vec<Q> {
        let mut v = vec![Q::zero(); self.dim()];
        v[i] = qi(1);
        v
    }

    /// Render a coordinate vector over the basis names.
    pub fn format_element(&self, v: &[Q]) -> String {
        let mut parts = Vec::new();
        for (i, c) in v.iter().enumerate() {
            if !c.is_zero() {
                parts.push(format!("({})*{}", c, self.basis.name(i)));
            }
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        }
    }

    // ------------------------------------------------------------------
    // Sparse element helpers.
    // ------------------------------------------------------------------

    fn sparse_from_dense(v: &[Q]) -> SparseVec {
        v.iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (i, c.clone()))
            .collect()
    }

    fn sparse_product(&self, a: &SparseVec, b: &SparseVec) -> SparseVec {
        let n = self.dim();
        let mut acc = vec![Q::zero(); n];
        for (i, ca) in a {
            for (j, cb) in b {
                let c = ca.clone() * cb.clone();
                for k in 0..n {
                    if !self.mult[*i][*j][k].is_zero() {
                        acc[k] += c.clone() * self.mult[*i][*j][k].clone();
                    }
                }
            }
        }
        Self::sparse_from_dense(&acc)
    }

    fn sparse_pair(&self, a: &SparseVec, b: &SparseVec) -> Q {
        let mut out = Q::zero();
        for (i, ca) in a {
            for (j, cb) in b {
                let e = self.form.entry(*i, *j);
                if !e.is_zero() {
                    out += ca.clone() * cb.clone() * e.clone();
                }
            }
        }
        out
    }

    /// `t` applied to a list of slots: the product of all arguments but the
    /// last, paired with the last. A single argument is paired with the unit.
    fn t_sparse(&self, args: &[&SparseVec]) -> Q {
        let last = match args.last() {
            Some(l) => l,
            None => return Q::zero(),
        };
        let mut acc = Self::sparse_from_dense(&self.unit);
        for a in &args[..args.len() - 1] {
            if acc.is_empty() {
                return Q::zero();
            }
            acc = self.sparse_product(&acc, a);
        }
        self.sparse_pair(&acc, last)
    }

    /// The pairing of the product of all arguments but the last with the
    /// last argument.
    pub fn t_tensor(&self, args: &[Vec<Q>]) -> Q {
        let sparse: Vec<SparseVec> = args.iter().map(|v| Self::sparse_from_dense(v)).collect();
        let refs: Vec<&SparseVec> = sparse.iter().collect();
        self.t_sparse(&refs)
    }

    // ------------------------------------------------------------------
    // Insertion operators.
    // ------------------------------------------------------------------

    /// The element `Σ c·x·y` over the inverse-form pairs. Left multiplication
    /// by it attaches one extra boundary circle.
    pub fn boundary_element(&self) -> Vec<Q> {
        let n = self.dim();
        let mut out = vec![Q::zero(); n];
        for (i, j, c) in self.inverse.pairs() {
            let prod = self.product(&self.basis_vector(*i), &self.basis_vector(*j));
            for k in 0..n {
                out[k] += c.clone() * prod[k].clone();
            }
        }
        out
    }

    /// The element `Σ ± c·c'·x·x'·y·y'` over two inverse-form pairs, with the
    /// interleaving Koszul sign. Left multiplication by it attaches a handle.
    pub fn handle_element(&self) -> Vec<Q> {
        let n = self.dim();
        let mut out = vec![Q::zero(); n];
        for (i1, j1, c1) in self.inverse.pairs() {
            for (i2, j2, c2) in self.inverse.pairs() {
                // Interleave the two pairs as x·x'·y·y': one Koszul swap of
                // y past x'.
                let sign = sign_pow(self.pbits[*i2] * self.pbits[*j1]);
                let mut prod = self.product(&self.basis_vector(*i1), &self.basis_vector(*i2));
                prod = self.product(&prod, &self.basis_vector(*j1));
                prod = self.product(&prod, &self.basis_vector(*j2));
                let c = c1.clone() * c2.clone() * sign;
                for k in 0..n {
                    out[k] += c.clone() * prod[k].clone();
                }
            }
        }
        out
    }

    /// Matrix (row per basis vector) of left multiplication by `u`.
    fn left_mult_matrix(&self, u: &[Q]) -> Vec<Vec<Q>> {
        (0..self.dim())
            .map(|j| self.product(u, &self.basis_vector(j)))
            .collect()
    }

    /// Matrix of the extra-boundary insertion operator.
    pub fn beta_matrix(&self) -> Vec<Vec<Q>> {
        self.left_mult_matrix(&self.boundary_element())
    }

    /// Matrix of the handle insertion operator.
    pub fn gamma_matrix(&self) -> Vec<Vec<Q>> {
        self.left_mult_matrix(&self.handle_element())
    }

    // ------------------------------------------------------------------
    // Surface tensors.
    // ------------------------------------------------------------------

    fn slot_from_letter(&self, letter: usize) -> Slot {
        Slot {
            parity: self.pbits[letter],
            vec: vec![(letter, qi(1))],
        }
    }

    /// The insertion element `b-fold boundary · g-fold handle` and its parity,
    /// as a dense coordinate vector.
    pub(crate) fn insertion_dense(&self, genus: u32, boundaries: u32) -> Option<(Vec<Q>, u64)> {
        if genus == 0 && boundaries == 0 {
            return None;
        }
        let mut u = self.unit.clone();
        for _ in 0..boundaries {
            u = self.product(&self.boundary_element(), &u);
        }
        for _ in 0..genus {
            u = self.product(&self.handle_element(), &u);
        }
        let parity = (u64::from(boundaries) * self.form.form_parity().bit()) % 2;
        Some((u, parity))
    }

    /// The insertion element `b-fold boundary · g-fold handle` and its parity.
    fn insertion_element(&self, genus: u32, boundaries: u32) -> Option<(SparseVec, u64)> {
        self.insertion_dense(genus, boundaries)
            .map(|(u, p)| (Self::sparse_from_dense(&u), p))
    }

    /// Evaluate the surface tensor on blocks of general slots, multiplying
    /// the insertion element into the chosen slot: `Some(i)` targets the
    /// first letter of block `i`, `None` targets the first letter of the
    /// first nonempty block, falling back to the first inverse-form insertion
    /// when every block is empty.
    fn alpha_slots(
        &self,
        genus: u32,
        boundaries: u32,
        blocks: &[Vec<Slot>],
        at_block: Option<usize>,
    ) -> Q {
        let n = blocks.len();
        if n == 0 {
            return Q::zero();
        }
        let mut blocks: Vec<Vec<Slot>> = blocks.to_vec();
        let mut insert_into_first_y = false;
        if let Some((u, upar)) = self.insertion_element(genus, boundaries) {
            let target = match at_block {
                Some(i) => Some(i),
                None => blocks.iter().position(|b| !b.is_empty()),
            };
            match target {
                Some(i) if !blocks[i].is_empty() => {
                    let slot = &mut blocks[i][0];
                    slot.vec = self.sparse_product(&u, &slot.vec);
                    slot.parity = (slot.parity + upar) % 2;
                }
                _ => insert_into_first_y = true,
            }
        }
        let insertion = if insert_into_first_y {
            self.insertion_element(genus, boundaries)
        } else {
            None
        };

        let odd_form = self.form.form_parity().is_odd();
        // Letter-parity sums of the blocks, in order.
        let block_par: Vec<u64> = blocks
            .iter()
            .map(|b| b.iter().map(|s| s.parity).sum::<u64>() % 2)
            .collect();

        let pairs = self.inverse.pairs();
        let m = pairs.len();
        let mut assignment = vec![0usize; n];
        let mut total = Q::zero();
        loop {
            // Coefficient and interleaving sign for this assignment.
            let mut coeff = Q::one();
            for &a in &assignment {
                coeff *= pairs[a].2.clone();
            }
            let mut exp = 0u64;
            let mut prefix = 0u64;
            for r in 1..n {
                prefix = (prefix + block_par[r - 1]) % 2;
                let y_par = self.pbits[pairs[assignment[r]].1];
                let extra = if odd_form { r as u64 } else { 0 };
                exp += y_par * ((prefix + extra) % 2);
            }
            coeff *= sign_pow(exp);

            // Product tensor of the first components, in reverse order.
            let xs: Vec<SparseVec> = assignment
                .iter()
                .rev()
                .map(|&a| vec![(pairs[a].0, qi(1))])
                .collect();
            let x_refs: Vec<&SparseVec> = xs.iter().collect();
            let tx = self.t_sparse(&x_refs);
            if !tx.is_zero() {
                // Big tensor: each second component followed by its block.
                let mut ys: Vec<SparseVec> = Vec::new();
                for (r, &a) in assignment.iter().enumerate() {
                    let y = vec![(pairs[a].1, qi(1))];
                    if r == 0 {
                        if let Some((u, _)) = &insertion {
                            ys.push(self.sparse_product(u, &y));
                            continue;
                        }
                    }
                    ys.push(y);
                }
                let mut big: Vec<&SparseVec> = Vec::new();
                for (r, block) in blocks.iter().enumerate() {
                    big.push(&ys[r]);
                    for slot in block {
                        big.push(&slot.vec);
                    }
                }
                let tb = self.t_sparse(&big);
                total += coeff * tx * tb;
            }

            // Advance the odometer over pair assignments.
            let mut pos = 0;
            loop {
                if pos == n {
                    return total;
                }
                assignment[pos] += 1;
                if assignment[pos] < m {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Surface tensor for given genus and extra boundary count, evaluated on
    /// blocks of basis letters (one block per labeled boundary).
    pub fn alpha(&self, genus: u32, boundaries: u32, blocks: &[Vec<usize>]) -> Q {
        let slot_blocks: Vec<Vec<Slot>> = blocks
            .iter()
            .map(|b| b.iter().map(|&l| self.slot_from_letter(l)).collect())
            .collect();
        self.alpha_slots(genus, boundaries, &slot_blocks, None)
    }

    /// Same tensor with the genus/boundary insertion forced into the first
    /// letter of the block with the given index (which must be nonempty).
    pub fn alpha_inserted_at(
        &self,
        genus: u32,
        boundaries: u32,
        blocks: &[Vec<usize>],
        block: usize,
    ) -> Q {
        let slot_blocks: Vec<Vec<Slot>> = blocks
            .iter()
            .map(|b| b.iter().map(|&l| self.slot_from_letter(l)).collect())
            .collect();
        self.alpha_slots(genus, boundaries, &slot_blocks, Some(block))
    }

    // ------------------------------------------------------------------
    // Axiom validation.
    // ------------------------------------------------------------------

    /// Check every algebra axiom exhaustively over the structure tables.
    pub fn validate(&self) -> ValidationReport {
        let n = self.dim();
        let mut failures = Vec::new();
        let mut fail = |axiom: &str, witness: String| {
            failures.push(AxiomFailure {
                axiom: axiom.to_string(),
                witness,
            })
        };
        let name = |i: usize| self.basis.name(i).to_string();

        // The unit must be even and nonzero.
        let mut unit_odd = Vec::new();
        for i in 0..n {
            if !self.unit[i].is_zero() && self.pbits[i] == 1 {
                unit_odd.push(name(i));
            }
        }
        if self.unit.iter().all(|c| c.is_zero()) {
            fail("unit-nonzero", "the unit vector is zero".into());
        }
        if !unit_odd.is_empty() {
            fail("unit-parity", format!("odd components: {}", unit_odd.join(", ")));
        }

        // Unit laws.
        for i in 0..n {
            let e = self.basis_vector(i);
            if self.product(&self.unit, &e) != e {
                fail("unit-law-left", name(i));
            }
            if self.product(&e, &self.unit) != e {
                fail("unit-law-right", name(i));
            }
        }

        // The product must add parities.
        'grading: for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if !self.mult[i][j][k].is_zero()
                        && (self.pbits[i] + self.pbits[j]) % 2 != self.pbits[k]
                    {
                        fail(
                            "product-grading",
                            format!("{}·{} hits {}", name(i), name(j), name(k)),
                        );
                        break 'grading;
                    }
                }
            }
        }

        // Associativity on all basis triples.
        'assoc: for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let ij_k = self.product(
                        &self.product(&self.basis_vector(i), &self.basis_vector(j)),
                        &self.basis_vector(k),
                    );
                    let i_jk = self.product(
                        &self.basis_vector(i),
                        &self.product(&self.basis_vector(j), &self.basis_vector(k)),
                    );
                    if ij_k != i_jk {
                        fail(
                            "associativity",
                            format!("({}·{})·{} ≠ {}·({}·{})", name(i), name(j), name(k), name(i), name(j), name(k)),
                        );
                        break 'assoc;
                    }
                }
            }
        }

        // The differential must flip parity and square to zero.
        for j in 0..n {
            for k in 0..n {
                if !self.diff[j][k].is_zero() && self.pbits[j] == self.pbits[k] {
                    fail(
                        "differential-parity",
                        format!("d({}) has a {} component", name(j), name(k)),
                    );
                }
            }
        }
        for j in 0..n {
            let dd = self.apply_diff(&self.apply_diff(&self.basis_vector(j)));
            if dd.iter().any(|c| !c.is_zero()) {
                fail(
                    "differential-squares-to-zero",
                    format!("d²({}) = {}", name(j), self.format_element(&dd)),
                );
            }
        }

        // Product rule for the differential.
        for i in 0..n {
            for j in 0..n {
                let lhs = self.apply_diff(&self.product(&self.basis_vector(i), &self.basis_vector(j)));
                let mut rhs = self.product(&self.apply_diff(&self.basis_vector(i)), &self.basis_vector(j));
                let signed = self.product(&self.basis_vector(i), &self.apply_diff(&self.basis_vector(j)));
                let s = sign_pow(self.pbits[i]);
                for k in 0..n {
                    rhs[k] += s.clone() * signed[k].clone();
                }
                if lhs != rhs {
                    fail("product-rule", format!("d({}·{})", name(i), name(j)));
                }
            }
        }

        // Invariance of the form under multiplication.
        'inv: for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let lhs = self.pair(
                        &self.product(&self.basis_vector(i), &self.basis_vector(j)),
                        &self.basis_vector(k),
                    );
                    let rhs = self.pair(
                        &self.basis_vector(i),
                        &self.product(&self.basis_vector(j), &self.basis_vector(k)),
                    );
                    if lhs != rhs {
                        fail(
                            "form-invariance",
                            format!("⟨{}·{},{}⟩ = {} but ⟨{},{}·{}⟩ = {}", name(i), name(j), name(k), lhs, name(i), name(j), name(k), rhs),
                        );
                        break 'inv;
                    }
                }
            }
        }

        // The differential is self-adjoint up to sign.
        for i in 0..n {
            for j in 0..n {
                let lhs = self.pair(&self.apply_diff(&self.basis_vector(i)), &self.basis_vector(j));
                let rhs = self.pair(&self.basis_vector(i), &self.apply_diff(&self.basis_vector(j)));
                if lhs + sign_pow(self.pbits[i]) * rhs != Q::zero() {
                    fail(
                        "form-differential-compatibility",
                        format!("⟨d({}),{}⟩ + ±⟨{},d({})⟩ ≠ 0", name(i), name(j), name(i), name(j)),
                    );
                }
            }
        }

        ValidationReport { failures }
    }

    // ------------------------------------------------------------------
    // Contracting homotopy.
    // ------------------------------------------------------------------

    /// Build a contracting homotopy for an acyclic algebra: an odd operator
    /// `s` with `ds + sd = id`, `s² = 0`, self-adjoint up to sign, whose
    /// image is an isotropic complement of the kernel of `d`. Fails when the
    /// homology is nonzero, naming a surviving class.
    pub fn hodge_for(&self) -> Result<HodgeDecomposition, FrobeniusError> {
        let n = self.dim();
        // Homogeneous basis of the image of d, which equals its kernel when
        // the homology vanishes.
        let even_rows: Vec<Vec<Q>> = (0..n)
            .filter(|&j| self.pbits[j] == 1)
            .map(|j| self.diff[j].clone())
            .collect();
        let odd_rows: Vec<Vec<Q>> = (0..n)
            .filter(|&j| self.pbits[j] == 0)
            .map(|j| self.diff[j].clone())
            .collect();
        let mut k_rows: Vec<Vec<Q>> = Vec::new();
        let mut k_par: Vec<u64> = Vec::new();
        for row in linalg::row_space_basis(&even_rows) {
            k_rows.push(row);
            k_par.push(0);
        }
        for row in linalg::row_space_basis(&odd_rows) {
            k_rows.push(row);
            k_par.push(1);
        }

        // Every kernel vector must already be a boundary.
        let kernel = linalg::kernel_basis(&linalg::transpose(&self.diff));
        for v in &kernel {
            if !in_span(&k_rows, v) {
                return Err(FrobeniusError::NotContractible {
                    witness: self.format_element(v),
                });
            }
        }
        if 2 * k_rows.len() != n {
            return Err(FrobeniusError::HomotopyConstruction(
                "kernel and image dimensions disagree".into(),
            ));
        }

        // Greedily extend the kernel by an isotropic graded complement.
        let mut l_rows: Vec<Vec<Q>> = Vec::new();
        let mut span: Vec<Vec<Q>> = k_rows.clone();
        for c in 0..n {
            if l_rows.len() == k_rows.len() {
                break;
            }
            let cand = self.basis_vector(c);
            if in_span(&span, &cand) {
                continue;
            }
            let p = self.pbits[c];
            let corrections: Vec<&Vec<Q>> = k_rows
                .iter()
                .zip(&k_par)
                .filter(|(_, &kp)| kp == p)
                .map(|(row, _)| row)
                .collect();
            // Kill the pairings with the vectors already chosen.
            let mut system: Vec<Vec<Q>> = Vec::new();
            let mut rhs: Vec<Q> = Vec::new();
            for l in &l_rows {
                system.push(corrections.iter().map(|k| self.pair(l, k)).collect());
                rhs.push(-self.pair(l, &cand));
            }
            let t = solve(&system, &rhs).ok_or_else(|| {
                FrobeniusError::HomotopyConstruction("cross-pairing correction failed".into())
            })?;
            let mut v = cand;
            for (m, coeff) in t.iter().enumerate() {
                for k in 0..n {
                    v[k] += coeff.clone() * corrections[m][k].clone();
                }
            }
            // Kill the self-pairing, preserving the cross-pairings.
            let q = self.pair(&v, &v);
            if !q.is_zero() {
                let mut system: Vec<Vec<Q>> = Vec::new();
                let mut rhs: Vec<Q> = Vec::new();
                for l in &l_rows {
                    system.push(corrections.iter().map(|k| self.pair(l, k)).collect());
                    rhs.push(Q::zero());
                }
                system.push(corrections.iter().map(|k| self.pair(&v, k)).collect());
                rhs.push(-q / qi(2));
                let t = solve(&system, &rhs).ok_or_else(|| {
                    FrobeniusError::HomotopyConstruction("self-pairing correction failed".into())
                })?;
                for (m, coeff) in t.iter().enumerate() {
                    for k in 0..n {
                        v[k] += coeff.clone() * corrections[m][k].clone();
                    }
                }
            }
            span.push(v.clone());
            l_rows.push(v);
        }
        if l_rows.len() != k_rows.len() {
            return Err(FrobeniusError::HomotopyConstruction(
                "isotropic complement is incomplete".into(),
            ));
        }

        // Invert d from the kernel back into the complement.
        let image_of_l: Vec<Vec<Q>> = l_rows.iter().map(|l| linalg::vec_mat(l, &self.diff)).collect();
        let coeff_matrix = linalg::transpose(&image_of_l);
        let mut images_kl: Vec<Vec<Q>> = Vec::new();
        for k in &k_rows {
            let u = solve(&coeff_matrix, k).ok_or_else(|| {
                FrobeniusError::HomotopyConstruction("preimage under d not found".into())
            })?;
            let mut lambda = vec![Q::zero(); n];
            for (m, coeff) in u.iter().enumerate() {
                for idx in 0..n {
                    lambda[idx] += coeff.clone() * l_rows[m][idx].clone();
                }
            }
            images_kl.push(lambda);
        }
        for _ in &l_rows {
            images_kl.push(vec![Q::zero(); n]);
        }

        // Change of basis back to the standard basis.
        let mut b_rows = k_rows.clone();
        b_rows.extend(l_rows.iter().cloned());
        let b_inv = linalg::invert(&b_rows).ok_or_else(|| {
            FrobeniusError::HomotopyConstruction("basis change is singular".into())
        })?;
        let s = linalg::mat_mul(&b_inv, &images_kl);
        let pi = vec![vec![Q::zero(); n]; n];
        Ok(HodgeDecomposition { s, pi })
    }

    /// Check the seven homotopy axioms as exact matrix identities, returning
    /// a witness string per failure.
    pub fn hodge_axiom_failures(&self, h: &HodgeDecomposition) -> Vec<String> {
        let n = self.dim();
        let mut failures = Vec::new();
        let s = h.s();
        let pi = h.pi();
        let id = linalg::identity(n);
        // Operators compose as row-convention products: applying s then d
        // is the matrix product s·d.
        let ds = linalg::mat_mul(s, &self.diff);
        let sd = linalg::mat_mul(&self.diff, s);
        let mut lhs = ds;
        for i in 0..n {
            for j in 0..n {
                lhs[i][j] += sd[i][j].clone() + pi[i][j].clone();
            }
        }
        if lhs != id {
            failures.push("ds + sd ≠ id − pi".to_string());
        }
        if linalg::mat_mul(s, s).iter().flatten().any(|c| !c.is_zero()) {
            failures.push("s² ≠ 0".to_string());
        }
        let pi2 = linalg::mat_mul(pi, pi);
        if &pi2[..] != pi {
            failures.push("pi² ≠ pi".to_string());
        }
        for (nm, m) in [
            ("pi·d", linalg::mat_mul(&self.diff, pi)),
            ("d·pi", linalg::mat_mul(pi, &self.diff)),
            ("pi·s", linalg::mat_mul(s, pi)),
            ("s·pi", linalg::mat_mul(pi, s)),
        ] {
            if m.iter().flatten().any(|c| !c.is_zero()) {
                failures.push(format!("{nm} ≠ 0"));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let lhs = self.pair(&s[i], &self.basis_vector(j));
                let rhs = self.pair(&self.basis_vector(i), &s[j]);
                if lhs != sign_pow(self.pbits[i]) * rhs {
                    failures.push(format!(
                        "s is not self-adjoint at ({}, {})",
                        self.basis.name(i),
                        self.basis.name(j)
                    ));
                }
                let lhs = self.pair(&pi[i], &self.basis_vector(j));
                let rhs = self.pair(&self.basis_vector(i), &pi[j]);
                if lhs != rhs {
                    failures.push(format!(
                        "pi is not self-adjoint at ({}, {})",
                        self.basis.name(i),
                        self.basis.name(j)
                    ));
                }
            }
        }
        failures
    }

    // ------------------------------------------------------------------
    // Gluing identities.
    // ------------------------------------------------------------------

    fn block_parity(&self, block: &[usize]) -> u64 {
        block.iter().map(|&l| self.pbits[l]).sum::<u64>() % 2
    }

    fn random_block(&self, rng: &mut ChaCha8Rng, max_len: usize) -> Vec<usize> {
        let len = rng.gen_range(0..=max_len);
        (0..len).map(|_| rng.gen_range(0..self.dim())).collect()
    }

    fn random_gb(&self, rng: &mut ChaCha8Rng) -> (u32, u32) {
        (rng.gen_range(0..2), rng.gen_range(0..2))
    }

    fn format_blocks(&self, blocks: &[Vec<usize>]) -> String {
        let parts: Vec<String> = blocks
            .iter()
            .map(|b| {
                let names: Vec<&str> = b.iter().map(|&l| self.basis.name(l)).collect();
                format!("({})", names.join(","))
            })
            .collect();
        parts.join("⊗")
    }

    /// Run all six gluing-identity checks on randomized letter blocks.
    pub fn check_otft_identities(&self, trials: usize, seed: u64) -> OtftReport {
        let mut checks = Vec::new();
        let odd_form = self.form.form_parity().is_odd();

        // 1. Permuting the blocks costs the Koszul sign of the block
        //    parities; for an odd form the signed permutation action adds
        //    the sign of the permutation.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut failures = Vec::new();
        for _ in 0..trials {
            let n = rng.gen_range(2..=3);
            let blocks: Vec<Vec<usize>> = (0..n).map(|_| self.random_block(&mut rng, 2)).collect();
            let (g, b) = self.random_gb(&mut rng);
            let r = rng.gen_range(0..n - 1);
            let lhs = self.alpha(g, b, &blocks);
            let mut swapped = blocks.clone();
            swapped.swap(r, r + 1);
            let mut exp = self.block_parity(&blocks[r]) * self.block_parity(&blocks[r + 1]);
            if odd_form {
                exp += 1;
            }
            let rhs = sign_pow(exp) * self.alpha(g, b, &swapped);
            if lhs != rhs {
                failures.push(format!(
                    "swap at {} on {}: {} vs {}",
                    r,
                    self.format_blocks(&blocks),
                    lhs,
                    rhs
                ));
            }
        }
        checks.push(IdentityCheck {
            name: "block-permutation".into(),
            trials,
            failures,
        });

        // 2. Rotating one block costs the Koszul sign of moving its first
        //    letter past the rest.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut failures = Vec::new();
        for _ in 0..trials {
            let n = rng.gen_range(1..=3);
            let mut blocks: Vec<Vec<usize>> = (0..n).map(|_| self.random_block(&mut rng, 3)).collect();
            let r = rng.gen_range(0..n);
            if blocks[r].len() < 2 {
                blocks[r] = vec![rng.gen_range(0..self.dim()), rng.gen_range(0..self.dim())];
            }
            let (g, b) = self.random_gb(&mut rng);
            let lhs = self.alpha(g, b, &blocks);
            let first = blocks[r][0];
            let rest: u64 = blocks[r][1..].iter().map(|&l| self.pbits[l]).sum::<u64>() % 2;
            let mut rotated = blocks.clone();
            rotated[r].rotate_left(1);
            let rhs = sign_pow(self.pbits[first] * rest) * self.alpha(g, b, &rotated);
            if lhs != rhs {
                failures.push(format!(
                    "rotation of block {} on {}: {} vs {}",
                    r,
                    self.format_blocks(&blocks),
                    lhs,
                    rhs
                ));
            }
        }
        checks.push(IdentityCheck {
            name: "block-rotation".into(),
            trials,
            failures,
        });

        // 3. Contracting an inverse-form pair placed around the first
        //    sub-block inside one boundary splits that boundary in two.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        let mut failures = Vec::new();
        for _ in 0..trials {
            let a = self.random_block(&mut rng, 2);
            let bb = self.random_block(&mut rng, 2);
            let n_rest = rng.gen_range(0..=1);
            let rest: Vec<Vec<usize>> = (0..n_rest).map(|_| self.random_block(&mut rng, 2)).collect();
            let (g, b) = self.random_gb(&mut rng);
            let pa = self.block_parity(&a);
            let mut lhs = Q::zero();
            for (x, y, c) in self.inverse.pairs() {
                let mut block1 = vec![*x];
                block1.extend(&a);
                block1.push(*y);
                block1.extend(&bb);
                let mut blocks = vec![block1];
                blocks.extend(rest.iter().cloned());
                lhs += c.clone() * sign_pow(self.pbits[*x] * pa) * self.alpha(g, b, &blocks);
            }
            let mut rhs_blocks = vec![a.clone(), bb.clone()];
            rhs_blocks.extend(rest.iter().cloned());
            let rhs = self.alpha(g, b, &rhs_blocks);
            if lhs != rhs {
                failures.push(format!(
                    "within-boundary gluing on {} | {}: {} vs {}",
                    self.format_blocks(&[a.clone(), bb.clone()]),
                    self.format_blocks(&rest),
                    lhs,
                    rhs
                ));
            }
        }
        checks.push(IdentityCheck {
            name: "same-boundary-gluing".into(),
            trials,
            failures,
        });

        // 4. Contracting a pair split across two boundaries of one surface
        //    merges them and raises the genus.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
        let mut failures = Vec::new();
        for _ in 0..trials {
            let a = self.random_block(&mut rng, 2);
            let bb = self.random_block(&mut rng, 2);
            let n_rest = rng.gen_range(0..=1);
            let rest: Vec<Vec<usize>> = (0..n_rest).map(|_| self.random_block(&mut rng, 2)).collect();
            let (g, b) = self.random_gb(&mut rng);
            let pa = self.block_parity(&a);
            let mut lhs = Q::zero();
            for (x, y, c) in self.inverse.pairs() {
                let mut block1 = a.clone();
                block1.push(*x);
                let mut block2 = vec![*y];
                block2.extend(&bb);
                let mut blocks = vec![block1, block2];
                blocks.extend(rest.iter().cloned());
                let corr = if odd_form {
                    sign_pow(self.pbits[*x] * (pa + 1))
                } else {
                    Q::one()
                };
                lhs += c.clone() * corr * self.alpha(g, b, &blocks);
            }
            let mut merged = a.clone();
            merged.extend(&bb);
            let mut rhs_blocks = vec![merged];
            rhs_blocks.extend(rest.iter().cloned());
            let rhs = self.alpha(g + 1, b, &rhs_blocks);
            if lhs != rhs {
                failures.push(format!(
                    "cross-boundary gluing on {} | {}: {} vs {}",
                    self.format_blocks(&[a.clone(), bb.clone()]),
                    self.format_blocks(&rest),
                    lhs,
                    rhs
                ));
            }
        }
        checks.push(IdentityCheck {
            name: "cross-boundary-gluing".into(),
            trials,
            failures,
        });

        // 5. Contracting a pair split across two separate surfaces merges
        //    them into one, concatenating the glued boundaries.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
        let mut failures = Vec::new();
        for _ in 0..trials {
            let n1 = rng.gen_range(1..=2);
            let n2 = rng.gen_range(1..=2);
            let ab: Vec<Vec<usize>> = (0..n1).map(|_| self.random_block(&mut rng, 2)).collect();
            let bbl: Vec<Vec<usize>> = (0..n2).map(|_| self.random_block(&mut rng, 2)).collect();
            let (g1, b1) = self.random_gb(&mut rng);
            let (g2, b2) = self.random_gb(&mut rng);
            let pa_last = self.block_parity(&ab[n1 - 1]);
            let mut lhs = Q::zero();
            for (x, y, c) in self.inverse.pairs() {
                let mut left = ab.clone();
                left[n1 - 1].push(*x);
                let mut right = bbl.clone();
                right[0].insert(0, *y);
                let corr = if odd_form {
                    sign_pow(self.pbits[*y] * pa_last)
                } else {
                    Q::one()
                };
                lhs += c.clone()
                    * corr
                    * self.alpha(g1, b1, &left)
                    * self.alpha(g2, b2, &right);
            }
            let mut rhs_blocks: Vec<Vec<usize>> = ab[..n1 - 1].to_vec();
            let mut merged = ab[n1 - 1].clone();
            merged.extend(&bbl[0]);
            rhs_blocks.push(merged);
            rhs_blocks.extend(bbl[1..].iter().cloned());
            let rhs = self.alpha(g1 + g2, b1 + b2, &rhs_blocks);
            if lhs != rhs {
                failures.push(format!(
                    "two-surface gluing on {} × {}: {} vs {}",
                    self.format_blocks(&ab),
                    self.format_blocks(&bbl),
                    lhs,
                    rhs
                ));
            }
        }
        checks.push(IdentityCheck {
            name: "two-surface-gluing".into(),
            trials,
            failures,
        });

        // 6. Applying the differential across all letter slots with prefix
        //    Koszul signs annihilates every tensor.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
        let mut failures = Vec::new();
        for _ in 0..trials {
            let n = rng.gen_range(1..=3);
            let blocks: Vec<Vec<usize>> = (0..n).map(|_| self.random_block(&mut rng, 2)).collect();
            let (g, b) = self.random_gb(&mut rng);
            let slot_blocks: Vec<Vec<Slot>> = blocks
                .iter()
                .map(|blk| blk.iter().map(|&l| self.slot_from_letter(l)).collect())
                .collect();
            let mut total = Q::zero();
            let mut prefix = 0u64;
            for bi in 0..slot_blocks.len() {
                for si in 0..slot_blocks[bi].len() {
                    let letter = blocks[bi][si];
                    let d = self.apply_diff(&self.basis_vector(letter));
                    let mut modified = slot_blocks.clone();
                    modified[bi][si] = Slot {
                        parity: (self.pbits[letter] + 1) % 2,
                        vec: Self::sparse_from_dense(&d),
                    };
                    total += sign_pow(prefix) * self.alpha_slots(g, b, &modified, None);
                    prefix += self.pbits[letter];
                }
            }
            if !total.is_zero() {
                failures.push(format!(
                    "differential leakage on {}: {}",
                    self.format_blocks(&blocks),
                    total
                ));
            }
        }
        checks.push(IdentityCheck {
            name: "differential-closedness".into(),
            trials,
            failures,
        });

        OtftReport { checks }
    }
}

// ----------------------------------------------------------------------
// Built-in algebras.
// ----------------------------------------------------------------------

/// The 1|1-dimensional acyclic algebra: even unit `1`, odd generator `a`,
/// `a² = 1`, `d(a) = 1`, odd form `⟨a,1⟩ = 1`.
pub fn xi_algebra() -> DgFrobeniusAlgebra {
    let basis = GradedBasis::from_pairs(&[("1", Parity::Even), ("a", Parity::Odd)]).unwrap();
    DgFrobeniusAlgebra::new(
        basis,
        "1",
        &[
            ("1", "1", "1", qi(1)),
            ("1", "a", "a", qi(1)),
            ("a", "1", "a", qi(1)),
            ("a", "a", "1", qi(1)),
        ],
        &[("a", "1", qi(1))],
        &[("a", "1", qi(1)), ("1", "a", qi(1))],
        Parity::Odd,
    )
    .unwrap()
}

/// The n×n matrix algebra with zero differential and the trace form.
pub fn matrix_algebra(n: usize) -> Result<DgFrobeniusAlgebra, FrobeniusError> {
    if n == 0 {
        return Err(FrobeniusError::ZeroMatrixSize);
    }
    let names: Vec<(String, Parity)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (format!("E{}_{}", i + 1, j + 1), Parity::Even)))
        .collect();
    let basis = GradedBasis::new(names)?;
    let dim = n * n;
    let at = |i: usize, j: usize| i * n + j;
    let mut mult = vec![vec![vec![Q::zero(); dim]; dim]; dim];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    if j == k {
                        mult[at(i, j)][at(k, l)][at(i, l)] = qi(1);
                    }
                }
            }
        }
    }
    let mut unit = vec![Q::zero(); dim];
    for i in 0..n {
        unit[at(i, i)] = qi(1);
    }
    let diff = vec![vec![Q::zero(); dim]; dim];
    // Trace form: ⟨E_ij, E_kl⟩ = δ_jk δ_il.
    let mut matrix = vec![vec![Q::zero(); dim]; dim];
    for i in 0..n {
        for j in 0..n {
            matrix[at(i, j)][at(j, i)] = qi(1);
        }
    }
    let form = BilinearForm::new(basis.clone(), matrix, Parity::Even, Symmetry::Symmetric)?;
    DgFrobeniusAlgebra::assemble(basis, unit, mult, diff, form)
}

/// Graded tensor product of two algebras, with the Koszul sign in the
/// product, the product-rule differential, and the twisted product form.
pub fn tensor_algebras(
    a: &DgFrobeniusAlgebra,
    b: &DgFrobeniusAlgebra,
) -> Result<DgFrobeniusAlgebra, FrobeniusError> {
    let basis = a.basis.tensor(&b.basis);
    let na = a.dim();
    let nb = b.dim();
    let dim = na * nb;
    let at = |i: usize, j: usize| i * nb + j;
    let mut mult = vec![vec![vec![Q::zero(); dim]; dim]; dim];
    for i1 in 0..na {
        for j1 in 0..nb {
            for i2 in 0..na {
                for j2 in 0..nb {
                    // (p⊗q)·(r⊗s) = ±(p·r)⊗(q·s), moving q past r.
                    let sign = sign_pow(b.pbits[j1] * a.pbits[i2]);
                    for k1 in 0..na {
                        if a.mult[i1][i2][k1].is_zero() {
                            continue;
                        }
                        for k2 in 0..nb {
                            if b.mult[j1][j2][k2].is_zero() {
                                continue;
                            }
                            mult[at(i1, j1)][at(i2, j2)][at(k1, k2)] += sign.clone()
                                * a.mult[i1][i2][k1].clone()
                                * b.mult[j1][j2][k2].clone();
                        }
                    }
                }
            }
        }
    }
    let mut unit = vec![Q::zero(); dim];
    for i in 0..na {
        for j in 0..nb {
            unit[at(i, j)] = a.unit[i].clone() * b.unit[j].clone();
        }
    }
    let mut diff = vec![vec![Q::zero(); dim]; dim];
    for i in 0..na {
        for j in 0..nb {
            for k in 0..na {
                diff[at(i, j)][at(k, j)] += a.diff[i][k].clone();
            }
            let sign = sign_pow(a.pbits[i]);
            for l in 0..nb {
                diff[at(i, j)][at(i, l)] += sign.clone() * b.diff[j][l].clone();
            }
        }
    }
    let form = graded::tensor_form(&a.form, &b.form)?;
    DgFrobeniusAlgebra::assemble(basis, unit, mult, diff, form)
}
