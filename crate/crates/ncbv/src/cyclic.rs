//! Cyclic words over a graded symplectic vector space: the loop bracket and
//! cobracket, products of words with two deformation parameters, the
//! associated differential, the master-equation residual, and exponential
//! chains.
//!
//! Letters are dual-basis coordinates of the underlying space. A cyclic word
//! is stored as its canonical rotation (lexicographically minimal under the
//! basis order) together with the Koszul sign relating the input to the
//! canonical form; words equal to minus themselves under rotation are zero.
//!
//! Products of words live in the two-parameter algebra spanned by monomials
//! `g^a n^b (w_1 ⋯ w_m)` where `g` has weight 2 and `n` and each letter have
//! weight 1. The empty word is identified with the parameter `n`, monomials
//! with no word factor are quotiented away, and membership requires total
//! weight ≥ 2. The convention flag selects the sign rules: with an odd
//! symplectic form the bracket is odd, word factors commute with plain
//! Koszul signs, and `n` is even; with an even form the bracket on words is
//! even, factor parities are shifted by one (so equal even-length factors
//! square to zero), and `n` is odd with `n² = 0`.

use std::collections::BTreeMap;

use num::traits::Zero;
use thiserror::Error;

use crate::graded::{BilinearForm, GradedBasis, GradedError, Parity};
use crate::scalar::{qi, qr, sign_pow, Q};

/// Errors from word-algebra constructors and operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CyclicError {
    #[error("unknown letter name `{0}`")]
    UnknownLetter(String),
    #[error("element has weight-graded order {got}, below the required minimum {min}")]
    OrderTooLow { got: usize, min: usize },
    #[error("element carries n-terms but the n-free mode was requested")]
    NuInGammaOnlyMode,
    #[error("convention parity does not match the symplectic form parity")]
    ConventionMismatch,
    #[error(transparent)]
    Graded(#[from] GradedError),
}

/// Selects the parity of the symplectic form and with it every sign rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    OddSymplectic,
    EvenSymplectic,
}

/// Which two-parameter algebra an operation works in: the full one, or its
/// `n`-free quotient (whose differential keeps only `n`-free terms).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    GammaNu,
    GammaOnly,
}

/// A cyclic word in canonical rotation. The empty word (the scalar
/// component of the word space) is allowed here; words that cancel under
/// rotation are represented by their absence from elements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CyclicWord {
    letters: Vec<u32>,
}

impl CyclicWord {
    pub fn letters(&self) -> &[u32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

/// One tensor factor of a product monomial: the parameter `n` (the image of
/// the empty word) or a nonempty cyclic word.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Factor {
    Nu,
    Word(CyclicWord),
}

/// A sparse rational combination of cyclic words.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HElement {
    terms: BTreeMap<CyclicWord, Q>,
}

impl HElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&CyclicWord, &Q)> {
        self.terms.iter()
    }

    pub fn coeff(&self, w: &CyclicWord) -> Q {
        self.terms.get(w).cloned().unwrap_or_else(Q::zero)
    }

    fn insert(&mut self, w: CyclicWord, c: Q) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(w.clone()).or_insert_with(Q::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&w);
        }
    }

    pub fn add_scaled(&mut self, other: &HElement, scale: &Q) {
        for (w, c) in &other.terms {
            self.insert(w.clone(), c.clone() * scale.clone());
        }
    }
}

/// A product monomial `g^gamma n^nu (w_1 ⋯ w_m)`; `words` is kept sorted,
/// with the sorting sign absorbed into the coefficient at insertion.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LambdaMonomial {
    gamma: u32,
    nu: u32,
    words: Vec<CyclicWord>,
}

impl LambdaMonomial {
    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn nu(&self) -> u32 {
        self.nu
    }

    pub fn words(&self) -> &[CyclicWord] {
        &self.words
    }

    /// Total weight: `g` counts 2, `n` counts 1, each letter counts 1.
    pub fn order(&self) -> usize {
        2 * self.gamma as usize
            + self.nu as usize
            + self.words.iter().map(|w| w.len()).sum::<usize>()
    }
}

/// A sparse rational combination of product monomials.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LambdaElement {
    terms: BTreeMap<LambdaMonomial, Q>,
}

impl LambdaElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&LambdaMonomial, &Q)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &LambdaMonomial) -> Q {
        self.terms.get(m).cloned().unwrap_or_else(Q::zero)
    }

    /// Smallest monomial weight present, or `None` when zero.
    pub fn min_order(&self) -> Option<usize> {
        self.terms.keys().map(|m| m.order()).min()
    }

    pub fn has_nu(&self) -> bool {
        self.terms.keys().any(|m| m.nu > 0)
    }

    fn insert(&mut self, m: LambdaMonomial, c: Q) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(Q::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add_scaled(&mut self, other: &LambdaElement, scale: &Q) {
        for (m, c) in &other.terms {
            self.insert(m.clone(), c.clone() * scale.clone());
        }
    }

    /// Drops monomials above the weight cutoff.
    pub fn truncated(&self, max_weight: usize) -> LambdaElement {
        let mut out = LambdaElement::zero();
        for (m, c) in &self.terms {
            if m.order() <= max_weight {
                out.insert(m.clone(), c.clone());
            }
        }
        out
    }

    /// Keeps only `n`-free monomials.
    pub fn nu_free_part(&self) -> LambdaElement {
        let mut out = LambdaElement::zero();
        for (m, c) in &self.terms {
            if m.nu == 0 {
                out.insert(m.clone(), c.clone());
            }
        }
        out
    }
}

/// A chain: a sparse combination of symmetric products of monomials (factor
/// lists are kept sorted, sorting signs absorbed into the coefficients).
/// The empty product is the unit chain.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CeChain {
    terms: BTreeMap<Vec<LambdaMonomial>, Q>,
}

impl CeChain {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn unit() -> Self {
        let mut c = Self::default();
        c.terms.insert(Vec::new(), qi(1));
        c
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<LambdaMonomial>, &Q)> {
        self.terms.iter()
    }

    pub fn coeff(&self, factors: &[LambdaMonomial]) -> Q {
        self.terms.get(factors).cloned().unwrap_or_else(Q::zero)
    }

    fn insert(&mut self, f: Vec<LambdaMonomial>, c: Q) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(f.clone()).or_insert_with(Q::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&f);
        }
    }

    pub fn add_scaled(&mut self, other: &CeChain, scale: &Q) {
        for (f, c) in &other.terms {
            self.insert(f.clone(), c.clone() * scale.clone());
        }
    }

    pub fn scaled(&self, scale: &Q) -> CeChain {
        let mut out = CeChain::zero();
        out.add_scaled(self, scale);
        out
    }
}

/// The operation context for one symplectic vector space and one convention:
/// holds the basis, letter parities, the inverse-form matrix, and every
/// bracket/cobracket/differential routine.
#[derive(Debug, Clone)]
pub struct WordAlgebra {
    basis: GradedBasis,
    conv: Convention,
    /// Plain letter parities as 0/1 bits.
    pbits: Vec<u64>,
    /// Inverse-form matrix on letters.
    g: Vec<Vec<Q>>,
}

impl WordAlgebra {
    /// Builds the context from a nondegenerate form whose parity matches the
    /// convention (odd form ↔ odd bracket, even form ↔ even bracket).
    pub fn new(form: &BilinearForm, conv: Convention) -> Result<Self, CyclicError> {
        let expected = match conv {
            Convention::OddSymplectic => Parity::Odd,
            Convention::EvenSymplectic => Parity::Even,
        };
        if form.form_parity() != expected {
            return Err(CyclicError::ConventionMismatch);
        }
        let inverse = form.inverse()?;
        let basis = form.basis().clone();
        let pbits = basis.parities().iter().map(|p| p.bit()).collect();
        Ok(WordAlgebra {
            basis,
            conv,
            pbits,
            g: inverse.matrix().to_vec(),
        })
    }

    pub fn basis(&self) -> &GradedBasis {
        &self.basis
    }

    pub fn convention(&self) -> Convention {
        self.conv
    }

    pub fn inverse_matrix(&self) -> &[Vec<Q>] {
        &self.g
    }

    fn plain_parity(&self, letters: &[u32]) -> u64 {
        letters.iter().map(|&l| self.pbits[l as usize]).sum::<u64>() % 2
    }

    /// Parity of a product factor under the convention's sign rules: with an
    /// odd form, a word keeps its letter parity and `n` is even; with an
    /// even form, parities are shifted by one and `n` is odd.
    fn factor_parity(&self, f: &Factor) -> u64 {
        let shift = match self.conv {
            Convention::OddSymplectic => 0,
            Convention::EvenSymplectic => 1,
        };
        match f {
            Factor::Nu => shift,
            Factor::Word(w) => (self.plain_parity(&w.letters) + shift) % 2,
        }
    }

    fn monomial_parity(&self, m: &LambdaMonomial) -> u64 {
        let shift = match self.conv {
            Convention::OddSymplectic => 0,
            Convention::EvenSymplectic => 1,
        };
        let word_part: u64 = m
            .words
            .iter()
            .map(|w| (self.plain_parity(&w.letters) + shift) % 2)
            .sum();
        (word_part + m.nu as u64 * shift) % 2
    }

    // ------------------------------------------------------------------
    // Canonicalization
    // ------------------------------------------------------------------

    /// Sign of rotating the word left by one step (the first letter moves
    /// past the rest).
    fn rotate_step_sign(&self, letters: &[u32]) -> i64 {
        let first = self.pbits[letters[0] as usize];
        let rest: u64 = letters[1..]
            .iter()
            .map(|&l| self.pbits[l as usize])
            .sum::<u64>();
        if first * rest % 2 == 1 {
            -1
        } else {
            1
        }
    }

    /// Left-rotates `times` steps, accumulating the Koszul sign.
    fn rotate_left(&self, letters: &[u32], times: usize) -> (Vec<u32>, i64) {
        let mut word = letters.to_vec();
        let mut sign = 1i64;
        for _ in 0..times {
            if word.len() > 1 {
                sign *= self.rotate_step_sign(&word);
                word.rotate_left(1);
            }
        }
        (word, sign)
    }

    /// Canonical rotation with its sign, or `None` when the word cancels
    /// against itself (two rotations realize the minimal word with opposite
    /// signs).
    fn canonical_from_indices(&self, letters: &[u32]) -> Option<(CyclicWord, i64)> {
        let n = letters.len();
        if n <= 1 {
            return Some((
                CyclicWord {
                    letters: letters.to_vec(),
                },
                1,
            ));
        }
        let mut rotations = Vec::with_capacity(n);
        let mut current = letters.to_vec();
        let mut sign = 1i64;
        for _ in 0..n {
            rotations.push((current.clone(), sign));
            sign *= self.rotate_step_sign(&current);
            current.rotate_left(1);
        }
        let best = rotations.iter().map(|(w, _)| w.clone()).min().unwrap();
        let mut best_sign = None;
        for (w, s) in &rotations {
            if *w == best {
                match best_sign {
                    None => best_sign = Some(*s),
                    Some(bs) if bs != *s => return None,
                    _ => {}
                }
            }
        }
        Some((CyclicWord { letters: best }, best_sign.unwrap()))
    }

    fn resolve(&self, names: &[&str]) -> Result<Vec<u32>, CyclicError> {
        names
            .iter()
            .map(|n| {
                self.basis
                    .index_of(n)
                    .map(|i| i as u32)
                    .ok_or_else(|| CyclicError::UnknownLetter(n.to_string()))
            })
            .collect()
    }

    /// Canonicalizes a letter sequence given by names; a self-cancelling
    /// word gives the zero element.
    pub fn word(&self, names: &[&str]) -> Result<HElement, CyclicError> {
        let idx = self.resolve(names)?;
        let mut out = HElement::zero();
        if let Some((w, s)) = self.canonical_from_indices(&idx) {
            out.insert(w, qi(s));
        }
        Ok(out)
    }

    /// Canonical word from letter indices, with the rotation sign.
    pub fn word_from_indices(&self, idx: &[u32]) -> Option<(CyclicWord, i64)> {
        self.canonical_from_indices(idx)
    }

    // ------------------------------------------------------------------
    // Bracket and cobracket on words
    // ------------------------------------------------------------------

    /// The double-sum expansion of the word bracket before cyclic
    /// canonicalization: pairs each letter of `a` with each letter of `b`
    /// through the inverse form, opens both words at the paired letters, and
    /// concatenates. Exposed for expansion-level tests.
    pub(crate) fn bracket_raw_terms(&self, a: &[u32], b: &[u32]) -> Vec<(Vec<u32>, Q)> {
        let n = a.len();
        let m = b.len();
        let mut out = Vec::new();
        let total_a: u64 = a.iter().map(|&l| self.pbits[l as usize]).sum();
        for i in 0..n {
            let pa: u64 = self.pbits[a[i] as usize];
            let prefix_a: u64 = a[..i].iter().map(|&l| self.pbits[l as usize]).sum();
            let suffix_a: u64 = a[i + 1..].iter().map(|&l| self.pbits[l as usize]).sum();
            for j in 0..m {
                let c = &self.g[a[i] as usize][b[j] as usize];
                if c.is_zero() {
                    continue;
                }
                let pb: u64 = self.pbits[b[j] as usize];
                let prefix_b: u64 = b[..j].iter().map(|&l| self.pbits[l as usize]).sum();
                let exp = match self.conv {
                    Convention::OddSymplectic => pa * prefix_a + pb * (total_a + prefix_b),
                    Convention::EvenSymplectic => pa * (suffix_a + prefix_b),
                };
                let mut da: Vec<u32> = a.to_vec();
                da.remove(i);
                let (oa, sa) = self.rotate_left(&da, i);
                let mut db: Vec<u32> = b.to_vec();
                db.remove(j);
                let (ob, sb) = self.rotate_left(&db, j);
                let mut word = oa;
                word.extend_from_slice(&ob);
                out.push((word, c.clone() * qi(sa * sb) * sign_pow(exp)));
            }
        }
        out
    }

    /// Word bracket on sparse combinations; odd with an odd form, even with
    /// an even form. The empty word can appear in the output (the scalar
    /// component of the word space).
    pub fn bracket_h(&self, f: &HElement, g: &HElement) -> HElement {
        let mut out = HElement::zero();
        for (wa, ca) in &f.terms {
            for (wb, cb) in &g.terms {
                for (word, c) in self.bracket_raw_terms(&wa.letters, &wb.letters) {
                    if let Some((w, s)) = self.canonical_from_indices(&word) {
                        out.insert(w, c * qi(s) * ca.clone() * cb.clone());
                    }
                }
            }
        }
        out
    }

    /// Single-word bracket as used between product factors: in the even
    /// convention the factor-level bracket carries the parity shift, which
    /// twists the word bracket by the plain parity of the first argument.
    /// Empty output words become `n` factors.
    fn word_bracket_factors(&self, a: &CyclicWord, b: &CyclicWord) -> Vec<(Factor, Q)> {
        let twist = match self.conv {
            Convention::OddSymplectic => qi(1),
            Convention::EvenSymplectic => sign_pow(self.plain_parity(&a.letters)),
        };
        let mut out = Vec::new();
        for (word, c) in self.bracket_raw_terms(&a.letters, &b.letters) {
            if word.is_empty() {
                out.push((Factor::Nu, c * twist.clone()));
            } else if let Some((w, s)) = self.canonical_from_indices(&word) {
                out.push((Factor::Word(w), c * qi(s) * twist.clone()));
            }
        }
        out
    }

    /// The cobracket terms of one word as ordered factor pairs
    /// `(coefficient, first, second)`; empty segments become `n`.
    fn cobracket_raw(&self, w: &CyclicWord) -> Vec<(Q, Factor, Factor)> {
        let a = &w.letters;
        let n = a.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let c = &self.g[a[i] as usize][a[j] as usize];
                if c.is_zero() {
                    continue;
                }
                let pa: u64 = self.pbits[a[i] as usize];
                let pb: u64 = self.pbits[a[j] as usize];
                let s1: u64 = a[..i].iter().map(|&l| self.pbits[l as usize]).sum();
                let s2: u64 = a[i + 1..j].iter().map(|&l| self.pbits[l as usize]).sum();
                let s3: u64 = a[j + 1..].iter().map(|&l| self.pbits[l as usize]).sum();
                let exp = match self.conv {
                    Convention::OddSymplectic => {
                        pa * (s1 + pa) + pb * (s1 + pa + s2 + pb) + s1 * (s2 + s3)
                    }
                    // The trailing +s2 is the parity-shift interleaving
                    // factor of the first output segment.
                    Convention::EvenSymplectic => s1 * (s2 + s3) + pb * s2 + s2,
                };
                let u: Vec<u32> = a[i + 1..j].to_vec();
                let mut v: Vec<u32> = a[j + 1..].to_vec();
                v.extend_from_slice(&a[..i]);
                let fu = if u.is_empty() {
                    Some((Factor::Nu, 1i64))
                } else {
                    self.canonical_from_indices(&u)
                        .map(|(w, s)| (Factor::Word(w), s))
                };
                let fv = if v.is_empty() {
                    Some((Factor::Nu, 1i64))
                } else {
                    self.canonical_from_indices(&v)
                        .map(|(w, s)| (Factor::Word(w), s))
                };
                if let (Some((fu, su)), Some((fv, sv))) = (fu, fv) {
                    out.push((c.clone() * qi(su * sv) * sign_pow(exp), fu, fv));
                }
            }
        }
        out
    }

    /// The cobracket of a word combination, delivered as two-factor product
    /// monomials (with empty segments as `n` factors).
    pub fn cobracket(&self, f: &HElement) -> LambdaElement {
        let mut out = LambdaElement::zero();
        for (w, c) in &f.terms {
            for (cc, fu, fv) in self.cobracket_raw(w) {
                self.insert_factors(&mut out, 0, vec![fu, fv], cc * c.clone());
            }
        }
        out
    }

    // ------------------------------------------------------------------
    // Product monomials
    // ------------------------------------------------------------------

    /// Sorts a factor list into canonical order (all `n` first, then words
    /// ascending), accumulating Koszul signs, and inserts the resulting
    /// monomial. Monomials with no word factor are quotiented away; a
    /// repeated factor of odd parity annihilates the term.
    fn insert_factors(
        &self,
        out: &mut LambdaElement,
        gamma: u32,
        mut factors: Vec<Factor>,
        mut coeff: Q,
    ) {
        if coeff.is_zero() {
            return;
        }
        // Insertion sort with Koszul signs from adjacent transpositions.
        for k in 1..factors.len() {
            let mut pos = k;
            while pos > 0 && factors[pos] < factors[pos - 1] {
                let p1 = self.factor_parity(&factors[pos - 1]);
                let p2 = self.factor_parity(&factors[pos]);
                if p1 * p2 % 2 == 1 {
                    coeff = -coeff;
                }
                factors.swap(pos - 1, pos);
                pos -= 1;
            }
        }
        for pair in factors.windows(2) {
            if pair[0] == pair[1] && self.factor_parity(&pair[0]) == 1 {
                return;
            }
        }
        let mut nu = 0u32;
        let mut words = Vec::new();
        for f in factors {
            match f {
                Factor::Nu => nu += 1,
                Factor::Word(w) => words.push(w),
            }
        }
        if words.is_empty() {
            return; // scalar summand, quotiented away
        }
        out.insert(LambdaMonomial { gamma, nu, words }, coeff);
    }

    /// Builds a single product monomial from named words. An explicit empty
    /// word counts as an extra `n` factor; monomials with no word factor
    /// are the zero element; a nonzero monomial of total weight < 2 is
    /// rejected.
    pub fn lambda_monomial(
        &self,
        gamma: u32,
        nu: u32,
        words: &[&[&str]],
        coeff: Q,
    ) -> Result<LambdaElement, CyclicError> {
        let mut factors = Vec::new();
        let mut sign = 1i64;
        let mut total_nu = nu;
        let mut cancelled = false;
        for names in words {
            let idx = self.resolve(names)?;
            match self.canonical_from_indices(&idx) {
                Some((w, s)) if !w.is_empty() => {
                    sign *= s;
                    factors.push(Factor::Word(w));
                }
                Some(_) => total_nu += 1,
                None => cancelled = true,
            }
        }
        let mut out = LambdaElement::zero();
        if cancelled {
            return Ok(out);
        }
        let weight: usize = 2 * gamma as usize
            + total_nu as usize
            + factors
                .iter()
                .map(|f| match f {
                    Factor::Word(w) => w.len(),
                    Factor::Nu => 1,
                })
                .sum::<usize>();
        if !factors.is_empty() && weight < 2 {
            return Err(CyclicError::OrderTooLow { got: weight, min: 2 });
        }
        for _ in 0..total_nu {
            factors.push(Factor::Nu);
        }
        self.insert_factors(&mut out, gamma, factors, coeff * qi(sign));
        Ok(out)
    }

    /// Assembles an element from an ordered factor list (used by maps that
    /// build monomials programmatically).
    pub fn lambda_from_factors(
        &self,
        gamma: u32,
        factors: Vec<Factor>,
        coeff: Q,
    ) -> LambdaElement {
        let mut out = LambdaElement::zero();
        self.insert_factors(&mut out, gamma, factors, coeff);
        out
    }

    /// The ordered factor list of a monomial: `n` factors first, then words.
    fn factor_list(&self, m: &LambdaMonomial) -> Vec<Factor> {
        let mut fl = Vec::with_capacity(m.nu as usize + m.words.len());
        for _ in 0..m.nu {
            fl.push(Factor::Nu);
        }
        for w in &m.words {
            fl.push(Factor::Word(w.clone()));
        }
        fl
    }

    // ------------------------------------------------------------------
    // Bracket, differential, master equation
    // ------------------------------------------------------------------

    /// The bracket extended to products by the Leibniz rule: pairs every
    /// word factor of `f` with every word factor of `g` (`n` factors have
    /// vanishing brackets).
    pub fn ce_bracket(
        &self,
        f: &LambdaElement,
        g: &LambdaElement,
        max_weight: Option<usize>,
    ) -> LambdaElement {
        let mut out = LambdaElement::zero();
        for (ma, ca) in &f.terms {
            let fla = self.factor_list(ma);
            let pa: Vec<u64> = fla.iter().map(|x| self.factor_parity(x)).collect();
            let total_a: u64 = pa.iter().sum();
            for (mb, cb) in &g.terms {
                if let Some(cap) = max_weight {
                    // The factor bracket removes one letter from each side.
                    if ma.order() + mb.order() > cap + 2 {
                        continue;
                    }
                }
                let flb = self.factor_list(mb);
                let pb: Vec<u64> = flb.iter().map(|x| self.factor_parity(x)).collect();
                for (i, fi) in fla.iter().enumerate() {
                    let wi = match fi {
                        Factor::Word(w) => w,
                        Factor::Nu => continue,
                    };
                    let prefix_a: u64 = pa[..i].iter().sum();
                    for (j, fj) in flb.iter().enumerate() {
                        let wj = match fj {
                            Factor::Word(w) => w,
                            Factor::Nu => continue,
                        };
                        let prefix_b: u64 = pb[..j].iter().sum();
                        let exp =
                            pa[i] * prefix_a + pb[j] * (total_a + prefix_b) + pa[i] * pb[j];
                        let base = sign_pow(exp) * ca.clone() * cb.clone();
                        for (bf, bc) in self.word_bracket_factors(wi, wj) {
                            let mut factors = vec![bf];
                            for (k, x) in fla.iter().enumerate() {
                                if k != i {
                                    factors.push(x.clone());
                                }
                            }
                            for (k, x) in flb.iter().enumerate() {
                                if k != j {
                                    factors.push(x.clone());
                                }
                            }
                            self.insert_factors(
                                &mut out,
                                ma.gamma + mb.gamma,
                                factors,
                                base.clone() * bc,
                            );
                        }
                    }
                }
            }
        }
        match max_weight {
            Some(cap) => out.truncated(cap),
            None => out,
        }
    }

    /// The differential: one power of `g` times the pairwise factor bracket,
    /// plus the cobracket extended by the Leibniz rule. In the `n`-free mode
    /// the input must be `n`-free and `n`-carrying output terms are dropped.
    pub fn differential(
        &self,
        f: &LambdaElement,
        mode: LambdaMode,
        max_weight: Option<usize>,
    ) -> Result<LambdaElement, CyclicError> {
        if mode == LambdaMode::GammaOnly && f.has_nu() {
            return Err(CyclicError::NuInGammaOnlyMode);
        }
        let mut out = LambdaElement::zero();
        for (m, c) in &f.terms {
            let fl = self.factor_list(m);
            let par: Vec<u64> = fl.iter().map(|x| self.factor_parity(x)).collect();
            // Pairing part: Σ_{i<j} ± g·{x_i,x_j}·(remaining factors).
            for i in 0..fl.len() {
                let wi = match &fl[i] {
                    Factor::Word(w) => w,
                    Factor::Nu => continue,
                };
                for j in (i + 1)..fl.len() {
                    let wj = match &fl[j] {
                        Factor::Word(w) => w,
                        Factor::Nu => continue,
                    };
                    let prefix_i: u64 = par[..i].iter().sum();
                    let prefix_j: u64 = par[..j].iter().sum();
                    let exp = par[i] * prefix_i + par[j] * prefix_j + par[i] * par[j];
                    let base = sign_pow(exp) * c.clone();
                    for (bf, bc) in self.word_bracket_factors(wi, wj) {
                        let mut factors = vec![bf];
                        for (k, x) in fl.iter().enumerate() {
                            if k != i && k != j {
                                factors.push(x.clone());
                            }
                        }
                        self.insert_factors(&mut out, m.gamma + 1, factors, base.clone() * bc);
                    }
                }
            }
            // Cobracket part by the Leibniz rule, multiplied on the left.
            for i in 0..fl.len() {
                let wi = match &fl[i] {
                    Factor::Word(w) => w,
                    Factor::Nu => continue, // the parameter has zero cobracket
                };
                let prefix_i: u64 = par[..i].iter().sum();
                let base = sign_pow(par[i] * prefix_i) * c.clone();
                for (cc, fu, fv) in self.cobracket_raw(wi) {
                    let mut factors = vec![fu, fv];
                    for (k, x) in fl.iter().enumerate() {
                        if k != i {
                            factors.push(x.clone());
                        }
                    }
                    self.insert_factors(&mut out, m.gamma, factors, base.clone() * cc);
                }
            }
        }
        if mode == LambdaMode::GammaOnly {
            out = out.nu_free_part();
        }
        Ok(match max_weight {
            Some(cap) => out.truncated(cap),
            None => out,
        })
    }

    /// The master-equation residual `d(x) + ½{x,x}`, truncated by weight.
    /// Every monomial of the input must have weight-graded order ≥ 3.
    pub fn qme_residual(
        &self,
        x: &LambdaElement,
        max_weight: usize,
        mode: LambdaMode,
    ) -> Result<LambdaElement, CyclicError> {
        if let Some(min) = x.min_order() {
            if min < 3 {
                return Err(CyclicError::OrderTooLow { got: min, min: 3 });
            }
        }
        let mut out = self.differential(x, mode, Some(max_weight))?;
        let mut br = self.ce_bracket(x, x, Some(max_weight));
        if mode == LambdaMode::GammaOnly {
            br = br.nu_free_part();
        }
        out.add_scaled(&br, &qr(1, 2));
        Ok(out.truncated(max_weight))
    }

    // ------------------------------------------------------------------
    // Chains
    // ------------------------------------------------------------------

    fn chain_insert(&self, out: &mut CeChain, mut factors: Vec<LambdaMonomial>, mut coeff: Q) {
        if coeff.is_zero() {
            return;
        }
        for k in 1..factors.len() {
            let mut pos = k;
            while pos > 0 && factors[pos] < factors[pos - 1] {
                let p1 = self.monomial_parity(&factors[pos - 1]);
                let p2 = self.monomial_parity(&factors[pos]);
                if p1 * p2 % 2 == 1 {
                    coeff = -coeff;
                }
                factors.swap(pos - 1, pos);
                pos -= 1;
            }
        }
        for pair in factors.windows(2) {
            if pair[0] == pair[1] && self.monomial_parity(&pair[0]) == 1 {
                return;
            }
        }
        out.insert(factors, coeff);
    }

    fn chain_weight(factors: &[LambdaMonomial]) -> usize {
        factors.iter().map(|m| m.order()).sum()
    }

    /// The chain with one factor per monomial of the element.
    pub fn chain_from_element(&self, e: &LambdaElement) -> CeChain {
        let mut out = CeChain::zero();
        for (m, c) in &e.terms {
            self.chain_insert(&mut out, vec![m.clone()], c.clone());
        }
        out
    }

    /// Symmetric product of chains, truncated by total weight.
    pub fn chain_product(&self, a: &CeChain, b: &CeChain, max_weight: usize) -> CeChain {
        let mut out = CeChain::zero();
        for (fa, ca) in &a.terms {
            for (fb, cb) in &b.terms {
                if Self::chain_weight(fa) + Self::chain_weight(fb) > max_weight {
                    continue;
                }
                let mut factors = fa.clone();
                factors.extend(fb.iter().cloned());
                self.chain_insert(&mut out, factors, ca.clone() * cb.clone());
            }
        }
        out
    }

    /// The exponential chain `1 + x + x·x/2 + …`, truncated by weight. It is
    /// a cycle exactly when `x` solves the master equation to the working
    /// weight; the construction itself does not check that.
    pub fn ch_character(&self, x: &LambdaElement, max_weight: usize) -> CeChain {
        let mut sum = CeChain::unit();
        let mut power = CeChain::unit();
        let base = self.chain_from_element(&x.truncated(max_weight));
        let mut n = 1i64;
        loop {
            power = self
                .chain_product(&power, &base, max_weight)
                .scaled(&qr(1, n));
            if power.is_zero() {
                break;
            }
            sum.add_scaled(&power, &qi(1));
            n += 1;
        }
        sum
    }

    /// The chain differential: pairwise factor brackets plus the internal
    /// differential of each factor, both placed in front of the remaining
    /// factors.
    pub fn chain_differential(
        &self,
        chain: &CeChain,
        mode: LambdaMode,
        max_weight: Option<usize>,
    ) -> Result<CeChain, CyclicError> {
        let mut out = CeChain::zero();
        for (factors, coeff) in &chain.terms {
            let par: Vec<u64> = factors.iter().map(|m| self.monomial_parity(m)).collect();
            let as_elems: Vec<LambdaElement> = factors
                .iter()
                .map(|m| {
                    let mut e = LambdaElement::zero();
                    e.insert(m.clone(), qi(1));
                    e
                })
                .collect();
            for i in 0..factors.len() {
                // Internal differential of the i-th factor.
                let prefix_i: u64 = par[..i].iter().sum();
                let d_i = self.differential(&as_elems[i], mode, max_weight)?;
                for (m, c) in d_i.terms() {
                    let mut rest = vec![m.clone()];
                    for (k, x) in factors.iter().enumerate() {
                        if k != i {
                            rest.push(x.clone());
                        }
                    }
                    if let Some(cap) = max_weight {
                        if Self::chain_weight(&rest) > cap {
                            continue;
                        }
                    }
                    let sign = sign_pow(par[i] * prefix_i);
                    self.chain_insert(&mut out, rest, coeff.clone() * c.clone() * sign);
                }
                // Bracket pairings with later factors.
                for j in (i + 1)..factors.len() {
                    let prefix_j: u64 = par[..j].iter().sum();
                    let exp = par[i] * prefix_i + par[j] * prefix_j + par[i] * par[j];
                    let mut br = self.ce_bracket(&as_elems[i], &as_elems[j], max_weight);
                    if mode == LambdaMode::GammaOnly {
                        br = br.nu_free_part();
                    }
                    for (m, c) in br.terms() {
                        let mut rest = vec![m.clone()];
                        for (k, x) in factors.iter().enumerate() {
                            if k != i && k != j {
                                rest.push(x.clone());
                            }
                        }
                        if let Some(cap) = max_weight {
                            if Self::chain_weight(&rest) > cap {
                                continue;
                            }
                        }
                        self.chain_insert(
                            &mut out,
                            rest,
                            coeff.clone() * c.clone() * sign_pow(exp),
                        );
                    }
                }
            }
        }
        Ok(out)
    }

    // ------------------------------------------------------------------
    // Formatting
    // ------------------------------------------------------------------

    pub fn format_word(&self, w: &CyclicWord) -> String {
        let names: Vec<&str> = w
            .letters
            .iter()
            .map(|&l| self.basis.name(l as usize))
            .collect();
        format!("w[{}]", names.join(","))
    }

    pub fn format_monomial(&self, m: &LambdaMonomial) -> String {
        let mut parts = Vec::new();
        if m.gamma > 0 {
            parts.push(format!("g^{}", m.gamma));
        }
        if m.nu > 0 {
            parts.push(format!("n^{}", m.nu));
        }
        for w in &m.words {
            parts.push(self.format_word(w));
        }
        parts.join("*")
    }

    pub fn format_lambda(&self, e: &LambdaElement) -> String {
        if e.is_zero() {
            return "0".to_string();
        }
        let parts: Vec<String> = e
            .terms
            .iter()
            .map(|(m, c)| format!("({})*{}", c, self.format_monomial(m)))
            .collect();
        parts.join(" + ")
    }

    pub fn format_chain(&self, c: &CeChain) -> String {
        if c.is_zero() {
            return "0".to_string();
        }
        let parts: Vec<String> = c
            .terms
            .iter()
            .map(|(f, q)| {
                if f.is_empty() {
                    format!("({})", q)
                } else {
                    let inner: Vec<String> = f
                        .iter()
                        .map(|m| format!("[{}]", self.format_monomial(m)))
                        .collect();
                    format!("({})*{}", q, inner.join(""))
                }
            })
            .collect();
        parts.join(" + ")
    }
}
