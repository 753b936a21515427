//! Polynomial functions on a graded coordinate space, Gaussian expectation
//! over a Lagrangian gauge, and the pairing that turns master-equation
//! solutions into exact truncated `h`-series.
//!
//! The pipeline glues the lower modules together:
//!
//! 1. [`BvContext::phi_a`] expands cyclic words over the coordinate space `V`
//!    into cyclic words over `W = V ⊗ A`, weighting every letter assignment by
//!    the surface tensor of a differential graded Frobenius algebra `A`.
//! 2. [`BvContext::map_n`] flattens the expanded words into supercommutative
//!    polynomials on `W`; the attached `h`-exponent records `2·genus +
//!    boundaries + words − 1`. [`BvContext::map_m`] multiplies the images of
//!    several factors and divides by one power of `h` per factor.
//! 3. [`BvContext::sigma_d`] is the quadratic potential assembled from the
//!    differential and the pairing of `A`; a [`GaussianSpec`] restricts it to
//!    a Lagrangian gauge and inverts it into a propagator.
//! 4. [`GaussianSpec::moment`] evaluates Gaussian moments as signed sums over
//!    perfect matchings; [`pairing_series`] assembles the logarithm of the
//!    full partition sum as an exact truncated series in `h`, and
//!    [`q_cocycle_eval`] evaluates the same state on arbitrary chains.
//!
//! Everything is exact rational arithmetic; `h` is a formal variable, never a
//! number.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num::traits::{One, Zero};
use thiserror::Error;

use crate::cyclic::{
    CeChain, Convention, CyclicError, Factor, LambdaElement, LambdaMode, LambdaMonomial,
    WordAlgebra,
};
use crate::frobenius::{
    matrix_algebra, tensor_algebras, xi_algebra, DgFrobeniusAlgebra, FrobeniusError,
};
use crate::graded::{
    quadratic_to_form, tensor_form, BilinearForm, GradedBasis, GradedError, Parity,
    QuadraticFunction, Symmetry,
};
use crate::linalg;
use crate::scalar::{qi, Q};
use crate::series::{SeriesError, TruncatedHSeries};

/// Errors from gauge fixing, Gaussian expansion, and the pairing pipeline.
#[derive(Debug, Error)]
pub enum BvError {
    /// The coordinate form and the algebra form must have odd total parity.
    #[error("parity mismatch: {0}")]
    ParityMismatch(String),
    /// A proposed Lagrangian gauge failed a structural requirement.
    #[error("invalid gauge: {0}")]
    InvalidGauge(String),
    /// The quadratic potential does not invert on the chosen gauge.
    #[error("degenerate gauge: the restricted quadratic potential is not invertible")]
    DegenerateGauge,
    /// The input does not solve the master equation, so the pairing is not
    /// defined on it.
    #[error("master equation violated through weight {weight}; residual starts with {residual}")]
    QmeViolation { weight: usize, residual: String },
    /// The requested series order needs more of the input than was provided.
    #[error("insufficient truncation: need the input complete through weight {needed}, have {have}")]
    InsufficientTruncation { needed: usize, have: usize },
    /// A contribution produced a negative power of `h`, which the truncated
    /// series ring cannot represent.
    #[error("contribution with negative h-exponent {exponent}")]
    NegativeExponent { exponent: i64 },
    /// Error from the cyclic-word layer.
    #[error(transparent)]
    Cyclic(#[from] CyclicError),
    /// Error from the graded linear algebra layer.
    #[error(transparent)]
    Graded(#[from] GradedError),
    /// Error from the Frobenius algebra layer.
    #[error(transparent)]
    Frobenius(#[from] FrobeniusError),
    /// Error from the truncated series layer.
    #[error(transparent)]
    Series(#[from] SeriesError),
}

fn sign_pow(e: u64) -> Q {
    if e % 2 == 0 {
        qi(1)
    } else {
        qi(-1)
    }
}

// ---------------------------------------------------------------------------
// Supercommutative polynomials
// ---------------------------------------------------------------------------

/// A monomial `h^e · ξ_{i_1}⋯ξ_{i_k}` with the letters stored in canonical
/// (sorted) order. The `h`-exponent may be negative; intermediate stages of
/// the pairing use that freedom before the final series is assembled.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolyMonomial {
    h_exp: i64,
    vars: Vec<u32>,
}

impl PolyMonomial {
    /// Exponent of `h` carried by this monomial.
    pub fn h_exp(&self) -> i64 {
        self.h_exp
    }

    /// Letters of the monomial, sorted ascending by basis index.
    pub fn vars(&self) -> &[u32] {
        &self.vars
    }
}

/// A finite sum of [`PolyMonomial`]s with rational coefficients: an element
/// of the supercommutative polynomial ring on a graded basis, tensored with
/// Laurent powers of `h`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SuperPolynomial {
    terms: BTreeMap<PolyMonomial, Q>,
}

impl SuperPolynomial {
    /// The zero polynomial.
    pub fn zero() -> Self {
        SuperPolynomial {
            terms: BTreeMap::new(),
        }
    }

    /// The constant polynomial `1`.
    pub fn one() -> Self {
        let mut p = Self::zero();
        p.add_term(
            PolyMonomial {
                h_exp: 0,
                vars: Vec::new(),
            },
            qi(1),
        );
        p
    }

    /// Whether every coefficient vanishes.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterator over `(monomial, coefficient)` pairs in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&PolyMonomial, &Q)> {
        self.terms.iter()
    }

    /// Coefficient of one monomial (zero when absent).
    pub fn coeff(&self, m: &PolyMonomial) -> Q {
        self.terms.get(m).cloned().unwrap_or_else(Q::zero)
    }

    /// Add `scale · other` into `self`.
    pub fn add_scaled(&mut self, other: &SuperPolynomial, scale: &Q) {
        if scale.is_zero() {
            return;
        }
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c.clone() * scale.clone());
        }
    }

    /// The polynomial multiplied by a scalar.
    pub fn scaled(&self, scale: &Q) -> SuperPolynomial {
        let mut out = Self::zero();
        out.add_scaled(self, scale);
        out
    }

    /// The polynomial with every `h`-exponent shifted by `delta`.
    pub fn shifted_h(&self, delta: i64) -> SuperPolynomial {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            out.add_term(
                PolyMonomial {
                    h_exp: m.h_exp + delta,
                    vars: m.vars.clone(),
                },
                c.clone(),
            );
        }
        out
    }

    fn add_term(&mut self, m: PolyMonomial, c: Q) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }
}

/// The polynomial ring on one graded basis: knows letter parities and hence
/// how to sort, differentiate, and bracket.
#[derive(Debug, Clone)]
pub struct PolyAlgebra {
    basis: GradedBasis,
    pbits: Vec<u64>,
}

impl PolyAlgebra {
    /// Polynomial ring on the given coordinate basis.
    pub fn new(basis: &GradedBasis) -> Self {
        let pbits = (0..basis.len()).map(|i| basis.parity(i).bit()).collect();
        PolyAlgebra {
            basis: basis.clone(),
            pbits,
        }
    }

    /// The coordinate basis.
    pub fn basis(&self) -> &GradedBasis {
        &self.basis
    }

    /// Sort letters ascending, tracking the sign from odd-odd swaps; `None`
    /// when an odd letter repeats.
    fn canonical(&self, letters: &[u32]) -> Option<(Vec<u32>, i64)> {
        let mut v = letters.to_vec();
        let mut sign = 1i64;
        for i in 1..v.len() {
            let mut j = i;
            while j > 0 && v[j] < v[j - 1] {
                if self.pbits[v[j] as usize] == 1 && self.pbits[v[j - 1] as usize] == 1 {
                    sign = -sign;
                }
                v.swap(j, j - 1);
                j -= 1;
            }
        }
        for w in v.windows(2) {
            if w[0] == w[1] && self.pbits[w[0] as usize] == 1 {
                return None;
            }
        }
        Some((v, sign))
    }

    /// A single monomial `coeff · h^e · ξ_{letters}`, canonicalized.
    pub fn monomial(&self, h_exp: i64, letters: &[u32], coeff: Q) -> SuperPolynomial {
        let mut p = SuperPolynomial::zero();
        if coeff.is_zero() {
            return p;
        }
        if let Some((vars, sign)) = self.canonical(letters) {
            p.add_term(PolyMonomial { h_exp, vars }, coeff * qi(sign));
        }
        p
    }

    /// Parity bit of a monomial: the sum of its letter parities.
    pub fn monomial_parity(&self, m: &PolyMonomial) -> u64 {
        m.vars.iter().map(|&v| self.pbits[v as usize]).sum::<u64>() % 2
    }

    /// Product in the supercommutative ring.
    pub fn mul(&self, a: &SuperPolynomial, b: &SuperPolynomial) -> SuperPolynomial {
        let mut out = SuperPolynomial::zero();
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                let mut letters = Vec::with_capacity(ma.vars.len() + mb.vars.len());
                letters.extend_from_slice(&ma.vars);
                letters.extend_from_slice(&mb.vars);
                if let Some((vars, sign)) = self.canonical(&letters) {
                    out.add_term(
                        PolyMonomial {
                            h_exp: ma.h_exp + mb.h_exp,
                            vars,
                        },
                        ca.clone() * cb.clone() * qi(sign),
                    );
                }
            }
        }
        out
    }

    /// Left derivative `∂_k`: strip one occurrence of `ξ_k` from the left of
    /// each monomial, with the Koszul sign of carrying `∂_k` past the letters
    /// in front of it.
    pub fn left_derivative(&self, p: &SuperPolynomial, k: u32) -> SuperPolynomial {
        let kp = self.pbits[k as usize];
        let mut out = SuperPolynomial::zero();
        for (m, c) in &p.terms {
            let mut prefix = 0u64;
            for (pos, &v) in m.vars.iter().enumerate() {
                if v == k {
                    let mut vars = m.vars.clone();
                    vars.remove(pos);
                    out.add_term(
                        PolyMonomial {
                            h_exp: m.h_exp,
                            vars,
                        },
                        c.clone() * sign_pow(kp * prefix),
                    );
                }
                prefix = (prefix + self.pbits[v as usize]) % 2;
            }
        }
        out
    }

    /// The second-order operator `Δf = −½ Σ_{k,l} G^{kl} ∂_k ∂_l f` for the
    /// inverse-form tensor `G` of an odd symplectic pairing.
    pub fn laplacian(&self, p: &SuperPolynomial, inverse: &[Vec<Q>]) -> SuperPolynomial {
        let n = self.basis.len();
        let mut out = SuperPolynomial::zero();
        let half = qi(-1) / qi(2);
        for k in 0..n {
            for l in 0..n {
                if inverse[k][l].is_zero() {
                    continue;
                }
                let dl = self.left_derivative(p, l as u32);
                if dl.is_zero() {
                    continue;
                }
                let dkl = self.left_derivative(&dl, k as u32);
                out.add_scaled(&dkl, &(half.clone() * inverse[k][l].clone()));
            }
        }
        out
    }

    /// The odd bracket measuring the failure of [`PolyAlgebra::laplacian`] to
    /// be a derivation: `Δ(fg) = Δ(f)g + (−1)^{|f|} f Δ(g) + {f,g}`.
    pub fn poisson(
        &self,
        f: &SuperPolynomial,
        g: &SuperPolynomial,
        inverse: &[Vec<Q>],
    ) -> SuperPolynomial {
        let n = self.basis.len();
        let mut out = SuperPolynomial::zero();
        let half = qi(-1) / qi(2);
        for (mf, cf) in &f.terms {
            let pf = self.monomial_parity(mf);
            let mut ft = SuperPolynomial::zero();
            ft.add_term(mf.clone(), cf.clone());
            for k in 0..n {
                let kp = self.pbits[k];
                let dkf = self.left_derivative(&ft, k as u32);
                for l in 0..n {
                    if inverse[k][l].is_zero() {
                        continue;
                    }
                    let lp = self.pbits[l];
                    if !dkf.is_zero() {
                        let dlg = self.left_derivative(g, l as u32);
                        if !dlg.is_zero() {
                            let c = half.clone() * inverse[k][l].clone() * sign_pow(lp * pf);
                            out.add_scaled(&self.mul(&dkf, &dlg), &c);
                        }
                    }
                    let dlf = self.left_derivative(&ft, l as u32);
                    if !dlf.is_zero() {
                        let dkg = self.left_derivative(g, k as u32);
                        if !dkg.is_zero() {
                            let c =
                                half.clone() * inverse[k][l].clone() * sign_pow(kp * (pf + lp));
                            out.add_scaled(&self.mul(&dlf, &dkg), &c);
                        }
                    }
                }
            }
        }
        out
    }

    /// Substitute `images[v]` (a polynomial over `target`) for every letter
    /// `ξ_v`, multiplying left to right.
    pub fn substitute(
        &self,
        p: &SuperPolynomial,
        images: &[SuperPolynomial],
        target: &PolyAlgebra,
    ) -> SuperPolynomial {
        let mut out = SuperPolynomial::zero();
        for (m, c) in &p.terms {
            let mut acc = SuperPolynomial::zero();
            acc.add_term(
                PolyMonomial {
                    h_exp: m.h_exp,
                    vars: Vec::new(),
                },
                c.clone(),
            );
            for &v in &m.vars {
                acc = target.mul(&acc, &images[v as usize]);
                if acc.is_zero() {
                    break;
                }
            }
            out.add_scaled(&acc, &qi(1));
        }
        out
    }

    /// Render a polynomial over the basis names, e.g. `3/2·h^2·t:a^2`.
    pub fn format(&self, p: &SuperPolynomial) -> String {
        if p.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (m, c)) in p.terms.iter().enumerate() {
            if i > 0 {
                out.push_str(" + ");
            }
            let mut factors: Vec<String> = Vec::new();
            match m.h_exp {
                0 => {}
                1 => factors.push("h".to_string()),
                e => factors.push(format!("h^{e}")),
            }
            let mut pos = 0;
            while pos < m.vars.len() {
                let v = m.vars[pos];
                let mut run = 1;
                while pos + run < m.vars.len() && m.vars[pos + run] == v {
                    run += 1;
                }
                let name = self.basis.name(v as usize);
                if run == 1 {
                    factors.push(name.to_string());
                } else {
                    factors.push(format!("{name}^{run}"));
                }
                pos += run;
            }
            if factors.is_empty() {
                let _ = write!(out, "{c}");
            } else if c.is_one() {
                let _ = write!(out, "{}", factors.join("·"));
            } else if (-c.clone()).is_one() {
                let _ = write!(out, "-{}", factors.join("·"));
            } else {
                let _ = write!(out, "{c}·{}", factors.join("·"));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Gaussian gauges
// ---------------------------------------------------------------------------

/// A Lagrangian gauge with its restricted quadratic potential inverted into a
/// propagator: everything needed to take Gaussian moments exactly.
#[derive(Debug)]
pub struct GaussianSpec {
    tau: PolyAlgebra,
    sigma_restricted: QuadraticFunction,
    propagator: Vec<Vec<Q>>,
    images: Vec<SuperPolynomial>,
    halve_matched_pairs: bool,
    cache: RefCell<HashMap<Vec<u32>, Q>>,
}

impl GaussianSpec {
    /// Gaussian data for an even quadratic potential on its own basis, with
    /// the identity restriction. The potential is read literally as the
    /// function `Σ c_ij ξ_i ξ_j`, and the propagator is normalized so that a
    /// coordinate with potential `ξ²` has second moment `h`.
    pub fn from_quadratic(sigma: &QuadraticFunction) -> Result<GaussianSpec, BvError> {
        if sigma.parity()? != Parity::Even {
            return Err(BvError::InvalidGauge(
                "the quadratic potential must be even".to_string(),
            ));
        }
        // `quadratic_to_form` doubles: it returns B with σ = ½·ξᵀBξ.
        let bhat = quadratic_to_form(sigma)?;
        let n = sigma.basis().len();
        let mut b = vec![vec![Q::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                b[i][j] = bhat.entry(i, j).clone() / qi(2);
            }
        }
        let propagator = linalg::invert(&b).ok_or(BvError::DegenerateGauge)?;
        let tau = PolyAlgebra::new(sigma.basis());
        let images = (0..n)
            .map(|i| tau.monomial(0, &[i as u32], qi(1)))
            .collect();
        Ok(GaussianSpec {
            tau,
            sigma_restricted: sigma.clone(),
            propagator,
            images,
            halve_matched_pairs: false,
            cache: RefCell::new(HashMap::new()),
        })
    }

    /// The polynomial ring on the gauge coordinates.
    pub fn algebra(&self) -> &PolyAlgebra {
        &self.tau
    }

    /// The gauge coordinate basis.
    pub fn basis(&self) -> &GradedBasis {
        self.tau.basis()
    }

    /// The quadratic potential restricted to the gauge.
    pub fn sigma_restricted(&self) -> &QuadraticFunction {
        &self.sigma_restricted
    }

    /// The matrix of two-point functions divided by `h`.
    pub fn propagator(&self) -> &[Vec<Q>] {
        &self.propagator
    }

    /// Switch to the convention where every matched pair carries an extra
    /// factor `½` (so `⟨ξ²⟩ = h/2` instead of `h`). Off by default.
    pub fn set_matched_pair_halving(&mut self, on: bool) {
        self.halve_matched_pairs = on;
    }

    /// Substitute the gauge coordinates into a polynomial over the ambient
    /// basis: coordinates off the gauge go to zero, constants are unchanged.
    pub fn restrict(&self, source: &PolyAlgebra, p: &SuperPolynomial) -> SuperPolynomial {
        source.substitute(p, &self.images, &self.tau)
    }

    /// Gaussian moment of `ξ_{vars[0]}⋯ξ_{vars[k-1]}` as `(coefficient,
    /// h-power)`: the signed sum over perfect matchings of propagator
    /// entries, with `h`-power half the degree. Odd degree gives zero.
    pub fn moment(&self, vars: &[u32]) -> (Q, usize) {
        let hp = vars.len() / 2;
        let Some((sorted, sign)) = self.tau.canonical(vars) else {
            return (Q::zero(), hp);
        };
        let mut c = self.moment_sorted(&sorted) * qi(sign);
        if self.halve_matched_pairs && !c.is_zero() {
            for _ in 0..hp {
                c /= qi(2);
            }
        }
        (c, hp)
    }

    fn moment_sorted(&self, vars: &[u32]) -> Q {
        if vars.is_empty() {
            return qi(1);
        }
        if vars.len() % 2 == 1 {
            return Q::zero();
        }
        if let Some(c) = self.cache.borrow().get(vars) {
            return c.clone();
        }
        let first = vars[0] as usize;
        let mut total = Q::zero();
        let mut cross = 0u64;
        for j in 1..vars.len() {
            let vj = vars[j] as usize;
            let p = &self.propagator[first][vj];
            if !p.is_zero() {
                let mut rest = Vec::with_capacity(vars.len() - 2);
                rest.extend_from_slice(&vars[1..j]);
                rest.extend_from_slice(&vars[j + 1..]);
                let sub = self.moment_sorted(&rest);
                if !sub.is_zero() {
                    total += sign_pow(cross * self.tau.pbits[vj]) * p.clone() * sub;
                }
            }
            cross = (cross + self.tau.pbits[vj]) % 2;
        }
        self.cache.borrow_mut().insert(vars.to_vec(), total.clone());
        total
    }
}

/// Gaussian moment of a gauge monomial: `(coefficient, h-power)`.
pub fn wick_moment(gauge: &GaussianSpec, vars: &[u32]) -> (Q, usize) {
    gauge.moment(vars)
}

// ---------------------------------------------------------------------------
// The integration context
// ---------------------------------------------------------------------------

/// Everything derived from one coordinate space `V` and one differential
/// graded Frobenius algebra `A`: the tensor space `W = V ⊗ A`, its word
/// algebra, its polynomial ring, and the quadratic potential.
#[derive(Debug)]
pub struct BvContext {
    v_form: BilinearForm,
    v_alg: WordAlgebra,
    frob: DgFrobeniusAlgebra,
    w_form: BilinearForm,
    w_alg: WordAlgebra,
    w_poly: PolyAlgebra,
    sigma: QuadraticFunction,
    v_pbits: Vec<u64>,
    a_pbits: Vec<u64>,
}

impl BvContext {
    /// Build the context. The coordinate form and the algebra form must have
    /// odd total parity, so that `W` carries an odd symplectic pairing.
    pub fn new(v_form: &BilinearForm, algebra: &DgFrobeniusAlgebra) -> Result<Self, BvError> {
        let total = (v_form.form_parity().bit() + algebra.form().form_parity().bit()) % 2;
        if total != 1 {
            return Err(BvError::ParityMismatch(format!(
                "coordinate form is {:?}, algebra form is {:?}; their parities must differ",
                v_form.form_parity(),
                algebra.form().form_parity()
            )));
        }
        let v_conv = if v_form.form_parity() == Parity::Odd {
            Convention::OddSymplectic
        } else {
            Convention::EvenSymplectic
        };
        let v_alg = WordAlgebra::new(v_form, v_conv)?;
        let w_form = tensor_form(v_form, algebra.form())?;
        let w_alg = WordAlgebra::new(&w_form, Convention::OddSymplectic)?;
        let w_poly = PolyAlgebra::new(w_form.basis());
        let nv = v_form.basis().len();
        let da = algebra.dim();
        let v_pbits: Vec<u64> = (0..nv).map(|i| v_form.basis().parity(i).bit()).collect();
        let a_pbits: Vec<u64> = (0..da).map(|i| algebra.basis().parity(i).bit()).collect();
        // Pairing against the differential: dp[i][j] = ⟨e_i, d e_j⟩.
        let mut dp = vec![vec![Q::zero(); da]; da];
        for j in 0..da {
            let dj = algebra.apply_diff(&algebra.basis_vector(j));
            if dj.iter().all(|c| c.is_zero()) {
                continue;
            }
            for (i, row) in dp.iter_mut().enumerate() {
                row[j] = algebra.pair(&algebra.basis_vector(i), &dj);
            }
        }
        // The quadratic potential as the full double sum Σ B[p][q]·ξ_p ξ_q
        // over W, with B[(v,i)][(v',j)] = (−1)^{|e_i|(|v'|+1)}·⟨v,v'⟩·⟨e_i, d e_j⟩.
        let mut entries: Vec<(usize, usize, Q)> = Vec::new();
        for v in 0..nv {
            for i in 0..da {
                for v2 in 0..nv {
                    let vv = v_form.entry(v, v2);
                    if vv.is_zero() {
                        continue;
                    }
                    for j in 0..da {
                        if dp[i][j].is_zero() {
                            continue;
                        }
                        let sgn = sign_pow(a_pbits[i] * (v_pbits[v2] + 1));
                        entries.push((
                            v * da + i,
                            v2 * da + j,
                            sgn * vv.clone() * dp[i][j].clone(),
                        ));
                    }
                }
            }
        }
        let sigma = QuadraticFunction::new(w_form.basis().clone(), &entries);
        Ok(BvContext {
            v_form: v_form.clone(),
            v_alg,
            frob: algebra.clone(),
            w_form,
            w_alg,
            w_poly,
            sigma,
            v_pbits,
            a_pbits,
        })
    }

    /// Word algebra over the coordinate space `V`.
    pub fn word_algebra(&self) -> &WordAlgebra {
        &self.v_alg
    }

    /// Word algebra over the tensor space `W = V ⊗ A`.
    pub fn w_word_algebra(&self) -> &WordAlgebra {
        &self.w_alg
    }

    /// Polynomial ring on `W`.
    pub fn poly_algebra(&self) -> &PolyAlgebra {
        &self.w_poly
    }

    /// The Frobenius algebra.
    pub fn frobenius(&self) -> &DgFrobeniusAlgebra {
        &self.frob
    }

    /// The coordinate form on `V`.
    pub fn coordinate_form(&self) -> &BilinearForm {
        &self.v_form
    }

    /// The odd symplectic pairing on `W`.
    pub fn pair_form(&self) -> &BilinearForm {
        &self.w_form
    }

    /// The quadratic potential on `W` built from the differential.
    pub fn sigma_d(&self) -> &QuadraticFunction {
        &self.sigma
    }

    /// The quadratic potential as a polynomial.
    pub fn sigma_d_poly(&self) -> SuperPolynomial {
        let mut p = SuperPolynomial::zero();
        for (i, j, c) in self.sigma.terms() {
            p.add_scaled(&self.w_poly.monomial(0, &[i as u32, j as u32], c.clone()), &qi(1));
        }
        p
    }

    /// The second-order operator on polynomials over `W`.
    pub fn laplacian(&self, p: &SuperPolynomial) -> SuperPolynomial {
        self.w_poly.laplacian(p, self.w_alg.inverse_matrix())
    }

    /// The odd bracket on polynomials over `W`.
    pub fn poisson(&self, f: &SuperPolynomial, g: &SuperPolynomial) -> SuperPolynomial {
        self.w_poly.poisson(f, g, self.w_alg.inverse_matrix())
    }

    // -- the word expansion ------------------------------------------------

    /// Expand an element of the word Lie algebra over `V` into one over `W`:
    /// every letter slot receives an algebra basis label, each full
    /// assignment is weighted by the surface tensor of `A` at the monomial's
    /// genus and boundary count, and each label contributes the interleaving
    /// sign of moving it past the coordinate letters after its slot. Genus
    /// and boundary markers are kept on the output.
    pub fn phi_a(&self, x: &LambdaElement) -> LambdaElement {
        let mut out = LambdaElement::zero();
        for (m, c) in x.terms() {
            self.phi_monomial(m, c, &mut out);
        }
        out
    }

    fn phi_monomial(&self, m: &LambdaMonomial, c_in: &Q, out: &mut LambdaElement) {
        let da = self.frob.dim();
        let g = m.gamma();
        let b = m.nu();
        let blocks: Vec<Vec<u32>> = m.words().iter().map(|w| w.letters().to_vec()).collect();
        let n = blocks.len();
        if n == 0 {
            return;
        }
        let lens: Vec<usize> = blocks.iter().map(|bl| bl.len()).collect();
        let k_total: usize = lens.iter().sum();
        // Strict-suffix coordinate parities per flattened slot.
        let v_par_flat: Vec<u64> = blocks
            .iter()
            .flatten()
            .map(|&l| self.v_pbits[l as usize])
            .collect();
        let mut v_suffix = vec![0u64; k_total + 1];
        for s in (0..k_total).rev() {
            v_suffix[s] = (v_suffix[s + 1] + v_par_flat[s]) % 2;
        }
        let insertion = self.frob.insertion_dense(g, b);
        let upar = insertion.as_ref().map_or(0, |(_, p)| *p);
        let pairs = self.frob.inverse_pairs();
        let np = pairs.len();
        let odd_form = self.frob.form().form_parity() == Parity::Odd;
        let a_vecs: Vec<Vec<Q>> = (0..da).map(|i| self.frob.basis_vector(i)).collect();
        // Letter elements for the very first slot absorb the genus/boundary
        // insertion from the left.
        let first_vecs: Vec<Vec<Q>> = match &insertion {
            Some((u, _)) => (0..da).map(|i| self.frob.product(u, &a_vecs[i])).collect(),
            None => a_vecs.clone(),
        };
        let mut chosen = vec![0u32; k_total];
        // One dual pair per word; odometer over all assignments.
        let mut assign = vec![0usize; n];
        loop {
            let xs: Vec<Vec<Q>> = assign
                .iter()
                .rev()
                .map(|&a| self.frob.basis_vector(pairs[a].0))
                .collect();
            let tx = self.frob.t_tensor(&xs);
            if !tx.is_zero() {
                let mut base = c_in.clone() * tx;
                for &a in &assign {
                    base *= pairs[a].2.clone();
                }
                let y_par: Vec<u64> = assign
                    .iter()
                    .map(|&a| self.a_pbits[pairs[a].1])
                    .collect();
                let ys: Vec<&Vec<Q>> = assign.iter().map(|&a| &a_vecs[pairs[a].1]).collect();
                let frame = PhiFrame {
                    blocks: &blocks,
                    lens: &lens,
                    ys: &ys,
                    y_par: &y_par,
                    first_vecs: &first_vecs,
                    a_vecs: &a_vecs,
                    upar,
                    odd_form,
                    base,
                    v_suffix: &v_suffix,
                    g,
                    b,
                };
                self.phi_walk(&frame, 0, 0, 0, ys[0], 0, 0, 0, &mut chosen, out);
            }
            let mut pos = 0;
            loop {
                if pos == n {
                    return;
                }
                assign[pos] += 1;
                if assign[pos] < np {
                    break;
                }
                assign[pos] = 0;
                pos += 1;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn phi_walk(
        &self,
        f: &PhiFrame<'_>,
        r: usize,
        s: usize,
        flat: usize,
        acc: &[Q],
        prefix: u64,
        block_par: u64,
        exp: u64,
        chosen: &mut Vec<u32>,
        out: &mut LambdaElement,
    ) {
        let n = f.blocks.len();
        if s == f.lens[r] {
            // Close word r and open word r+1 (the final slot of the final
            // word is consumed by the pairing branch below, never here).
            let new_prefix = (prefix + block_par) % 2;
            let extra = if f.odd_form { (r + 1) as u64 } else { 0 };
            let exp2 = exp + f.y_par[r + 1] * ((new_prefix + extra) % 2);
            let acc2 = self.frob.product(acc, f.ys[r + 1]);
            if acc2.iter().all(|c| c.is_zero()) {
                return;
            }
            self.phi_walk(f, r + 1, 0, flat, &acc2, new_prefix, 0, exp2, chosen, out);
            return;
        }
        let da = self.frob.dim();
        let last = r == n - 1 && s == f.lens[r] - 1;
        for letter in 0..da {
            let elem = if flat == 0 {
                &f.first_vecs[letter]
            } else {
                &f.a_vecs[letter]
            };
            let exp2 = exp + self.a_pbits[letter] * f.v_suffix[flat + 1];
            chosen[flat] = letter as u32;
            if last {
                let tb = self.frob.pair(acc, elem);
                if !tb.is_zero() {
                    self.phi_emit(f, chosen, tb, exp2, out);
                }
            } else {
                let acc2 = self.frob.product(acc, elem);
                if acc2.iter().all(|c| c.is_zero()) {
                    continue;
                }
                let mut bp = block_par + self.a_pbits[letter];
                if flat == 0 {
                    bp += f.upar;
                }
                self.phi_walk(f, r, s + 1, flat + 1, &acc2, prefix, bp, exp2, chosen, out);
            }
        }
    }

    fn phi_emit(
        &self,
        f: &PhiFrame<'_>,
        chosen: &[u32],
        tb: Q,
        exp: u64,
        out: &mut LambdaElement,
    ) {
        let da = self.frob.dim() as u32;
        let mut coeff = f.base.clone() * tb * sign_pow(exp);
        let mut factors: Vec<Factor> = Vec::with_capacity(f.b as usize + f.blocks.len());
        for _ in 0..f.b {
            factors.push(Factor::Nu);
        }
        let mut flat = 0;
        for bl in f.blocks {
            let letters: Vec<u32> = bl
                .iter()
                .enumerate()
                .map(|(i, &v)| v * da + chosen[flat + i])
                .collect();
            flat += bl.len();
            match self.w_alg.word_from_indices(&letters) {
                Some((cw, sgn)) => {
                    factors.push(Factor::Word(cw));
                    coeff *= qi(sgn);
                }
                None => return,
            }
        }
        out.add_scaled(&self.w_alg.lambda_from_factors(f.g, factors, coeff), &qi(1));
    }

    // -- words to polynomials ----------------------------------------------

    /// Flatten an element of the word Lie algebra over `W` into a
    /// polynomial: a monomial with genus `g`, `b` boundary markers, and `n`
    /// words becomes `h^{2g+b+n−1}` times the product of its letters.
    pub fn map_n(&self, y: &LambdaElement) -> SuperPolynomial {
        let mut out = SuperPolynomial::zero();
        for (m, c) in y.terms() {
            let n = m.words().len();
            if n == 0 {
                continue;
            }
            let e = 2 * i64::from(m.gamma()) + i64::from(m.nu()) + n as i64 - 1;
            let letters: Vec<u32> = m
                .words()
                .iter()
                .flat_map(|w| w.letters().iter().copied())
                .collect();
            out.add_scaled(&self.w_poly.monomial(e, &letters, c.clone()), &qi(1));
        }
        out
    }

    /// Multiply the polynomial images of several chain factors and divide by
    /// one power of `h` per factor. No factors gives the constant `1`.
    pub fn map_m(&self, factors: &[SuperPolynomial]) -> SuperPolynomial {
        let mut acc = SuperPolynomial::one();
        for f in factors {
            acc = self.w_poly.mul(&acc, f);
            if acc.is_zero() {
                break;
            }
        }
        acc.shifted_h(-(factors.len() as i64))
    }

    // -- gauges ------------------------------------------------------------

    /// The gauge selected by the contracting homotopy of the algebra: the
    /// homotopy image, reduced to a homogeneous basis per parity.
    pub fn canonical_gauge(&self) -> Result<GaussianSpec, BvError> {
        let hodge = self.frob.hodge_for()?;
        let s = hodge.s();
        let mut by_parity: [Vec<Vec<Q>>; 2] = [Vec::new(), Vec::new()];
        for (j, row) in s.iter().enumerate() {
            if row.iter().all(|c| c.is_zero()) {
                continue;
            }
            let p = ((self.a_pbits[j] + 1) % 2) as usize;
            by_parity[p].push(row.clone());
        }
        let mut rows = Vec::new();
        for class in by_parity.iter() {
            if !class.is_empty() {
                rows.extend(linalg::row_space_basis(class));
            }
        }
        self.gauge_from_rows(&rows)
    }

    /// Build Gaussian data from explicit gauge rows: coordinate vectors in
    /// the algebra spanning an isotropic subspace `L` of half the algebra
    /// dimension. The gauge coordinates are `τ_{v,r} = v ⊗ rows[r]`.
    pub fn gauge_from_rows(&self, rows: &[Vec<Q>]) -> Result<GaussianSpec, BvError> {
        let da = self.frob.dim();
        let nv = self.v_form.basis().len();
        if da % 2 != 0 {
            return Err(BvError::InvalidGauge(format!(
                "algebra dimension {da} is odd, so no half-dimensional gauge exists"
            )));
        }
        if rows.len() != da / 2 {
            return Err(BvError::InvalidGauge(format!(
                "expected {} gauge rows, got {}",
                da / 2,
                rows.len()
            )));
        }
        let mut row_parity = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != da {
                return Err(BvError::InvalidGauge(format!(
                    "gauge row {r} has length {}, expected {da}",
                    row.len()
                )));
            }
            let mut parity = None;
            for (j, c) in row.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                match parity {
                    None => parity = Some(self.a_pbits[j]),
                    Some(p) if p != self.a_pbits[j] => {
                        return Err(BvError::InvalidGauge(format!(
                            "gauge row {r} mixes parities"
                        )));
                    }
                    _ => {}
                }
            }
            match parity {
                None => {
                    return Err(BvError::InvalidGauge(format!("gauge row {r} is zero")));
                }
                Some(p) => row_parity.push(p),
            }
        }
        if linalg::rank(rows) != rows.len() {
            return Err(BvError::InvalidGauge(
                "gauge rows are linearly dependent".to_string(),
            ));
        }
        for (r, row_r) in rows.iter().enumerate() {
            for (s, row_s) in rows.iter().enumerate() {
                if !self.frob.pair(row_r, row_s).is_zero() {
                    return Err(BvError::InvalidGauge(format!(
                        "gauge rows {r} and {s} are not isotropic for the algebra pairing"
                    )));
                }
            }
        }
        // Gauge coordinate basis τ_{v,r}, named after the row when it is a
        // single basis letter.
        let nr = rows.len();
        let mut names: Vec<(String, Parity)> = Vec::with_capacity(nv * nr);
        for v in 0..nv {
            let vname = self.v_form.basis().name(v);
            for (r, row) in rows.iter().enumerate() {
                let single = {
                    let nz: Vec<usize> = (0..da).filter(|&j| !row[j].is_zero()).collect();
                    if nz.len() == 1 && row[nz[0]].is_one() {
                        Some(nz[0])
                    } else {
                        None
                    }
                };
                let rdesc = match single {
                    Some(j) => self.frob.basis().name(j).to_string(),
                    None => format!("l{r}"),
                };
                names.push((
                    format!("{vname}:{rdesc}"),
                    Parity::from_count(self.v_pbits[v] + row_parity[r]),
                ));
            }
        }
        let tau_basis = GradedBasis::new(names)?;
        let tau = PolyAlgebra::new(&tau_basis);
        // Substitution images of the ambient coordinates.
        let mut images = vec![SuperPolynomial::zero(); nv * da];
        for v in 0..nv {
            for j in 0..da {
                let mut p = SuperPolynomial::zero();
                for (r, row) in rows.iter().enumerate() {
                    if row[j].is_zero() {
                        continue;
                    }
                    p.add_scaled(
                        &tau.monomial(0, &[(v * nr + r) as u32], row[j].clone()),
                        &qi(1),
                    );
                }
                images[v * da + j] = p;
            }
        }
        // Restricted potential: B_L = E·B·Eᵀ through the embedding, then
        // graded-symmetrized for the propagator.
        let dim_w = nv * da;
        let mut b_full = vec![vec![Q::zero(); dim_w]; dim_w];
        for (i, j, c) in self.sigma.terms() {
            // The quadratic function stores the folded coefficient of ξ_i ξ_j
            // (i ≤ j); split it evenly into a graded-symmetric matrix.
            if i == j {
                b_full[i][j] = c.clone();
            } else {
                let half = c.clone() / qi(2);
                let pij = self.w_poly.pbits[i] * self.w_poly.pbits[j];
                b_full[i][j] = half.clone();
                b_full[j][i] = sign_pow(pij) * half;
            }
        }
        let nt = nv * nr;
        let mut b_l = vec![vec![Q::zero(); nt]; nt];
        for v in 0..nv {
            for (r, row_r) in rows.iter().enumerate() {
                for v2 in 0..nv {
                    for (s2, row_s) in rows.iter().enumerate() {
                        let mut acc = Q::zero();
                        for j in 0..da {
                            if row_r[j].is_zero() {
                                continue;
                            }
                            for j2 in 0..da {
                                if row_s[j2].is_zero() {
                                    continue;
                                }
                                let e = &b_full[v * da + j][v2 * da + j2];
                                if !e.is_zero() {
                                    acc += row_r[j].clone() * row_s[j2].clone() * e.clone();
                                }
                            }
                        }
                        b_l[v * nr + r][v2 * nr + s2] = acc;
                    }
                }
            }
        }
        // Validate that the restriction is an even symmetric form, then
        // invert it into the propagator.
        BilinearForm::new(tau_basis.clone(), b_l.clone(), Parity::Even, Symmetry::Symmetric)
            .map_err(|e| {
                BvError::InvalidGauge(format!(
                    "restricted quadratic potential is not an even symmetric form: {e}"
                ))
            })?;
        let propagator = linalg::invert(&b_l).ok_or(BvError::DegenerateGauge)?;
        // Express the restricted potential as a quadratic function: the
        // function Σ b_l[i][j]·τ_i τ_j.
        let mut entries = Vec::new();
        for (i, row) in b_l.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if !c.is_zero() {
                    entries.push((i, j, c.clone()));
                }
            }
        }
        let sigma_restricted = QuadraticFunction::new(tau_basis, &entries);
        Ok(GaussianSpec {
            tau,
            sigma_restricted,
            propagator,
            images,
            halve_matched_pairs: false,
            cache: RefCell::new(HashMap::new()),
        })
    }

    // -- the pairing -------------------------------------------------------

    /// The truncated series pairing a master-equation solution with the
    /// Gaussian state of the canonical gauge. See
    /// [`BvContext::pairing_series_with_gauge`].
    pub fn pairing_series(
        &self,
        x: &LambdaElement,
        order: usize,
    ) -> Result<TruncatedHSeries, BvError> {
        let gauge = self.canonical_gauge()?;
        self.pairing_series_with_gauge(x, order, &gauge, None)
    }

    /// The truncated series `ln Σ_k ⟨(Σ pieces)^k⟩/k!` through `h^order`,
    /// where the pieces are the gauge-restricted polynomial images of the
    /// input's expanded words.
    ///
    /// The input must solve the master equation: the full residual is
    /// checked through the weight needed for the requested order, and an
    /// input without boundary markers is also accepted when the algebra's
    /// boundary operator vanishes identically and the genus-only residual is
    /// zero. `x_complete_through` declares through which weight the caller
    /// knows the input completely; when that is insufficient for the
    /// requested order the call is refused rather than silently truncated.
    pub fn pairing_series_with_gauge(
        &self,
        x: &LambdaElement,
        order: usize,
        gauge: &GaussianSpec,
        x_complete_through: Option<usize>,
    ) -> Result<TruncatedHSeries, BvError> {
        let w_cut = 2 * (order + 1);
        if let Some(have) = x_complete_through {
            if have < w_cut {
                return Err(BvError::InsufficientTruncation {
                    needed: w_cut,
                    have,
                });
            }
        }
        if x.is_zero() {
            return Ok(TruncatedHSeries::zero(order));
        }
        let w_need = w_cut + 2;
        let residual = self.v_alg.qme_residual(x, w_need, LambdaMode::GammaNu)?;
        if !residual.is_zero() {
            let beta_zero = self
                .frob
                .beta_matrix()
                .iter()
                .flatten()
                .all(|c| c.is_zero());
            let fallback = beta_zero
                && !x.has_nu()
                && self
                    .v_alg
                    .qme_residual(x, w_need, LambdaMode::GammaOnly)?
                    .is_zero();
            if !fallback {
                return Err(BvError::QmeViolation {
                    weight: w_need,
                    residual: self.v_alg.format_lambda(&residual.truncated(8)),
                });
            }
        }
        let x_cut = x.truncated(w_cut);
        let expanded = self.phi_a(&x_cut);
        let potential = gauge.restrict(&self.w_poly, &self.map_n(&expanded));
        let mut pieces: Vec<Piece> = Vec::new();
        for (m, c) in potential.terms() {
            let mu2 = 2 * (m.h_exp() - 1) + m.vars().len() as i64;
            if mu2 <= 0 {
                return Err(BvError::InsufficientTruncation {
                    needed: 3,
                    have: m.vars().len(),
                });
            }
            let mut poly = SuperPolynomial::zero();
            poly.add_term(m.clone(), c.clone());
            pieces.push(Piece { poly, mu2 });
        }
        let mut acc: BTreeMap<usize, Q> = BTreeMap::new();
        let budget = 2 * order as i64;
        self.expand_multisets(
            &pieces,
            0,
            budget,
            &SuperPolynomial::one(),
            &qi(1),
            0,
            order,
            gauge,
            &mut acc,
        )?;
        let pairs: Vec<(usize, Q)> = acc.into_iter().collect();
        let z_minus_one = TruncatedHSeries::from_pairs(order, &pairs);
        Ok(z_minus_one.ln1p()?)
    }

    /// Depth-first sum over multisets of pieces: at `idx`, choose the
    /// multiplicity of piece `idx`, accumulating `Π cᵢ^{mᵢ}/mᵢ!` and the
    /// polynomial product, and prune on the `h`-order budget.
    #[allow(clippy::too_many_arguments)]
    fn expand_multisets(
        &self,
        pieces: &[Piece],
        idx: usize,
        budget_left: i64,
        prod: &SuperPolynomial,
        combin: &Q,
        n_factors: usize,
        order: usize,
        gauge: &GaussianSpec,
        acc: &mut BTreeMap<usize, Q>,
    ) -> Result<(), BvError> {
        if idx == pieces.len() {
            if n_factors == 0 {
                return Ok(());
            }
            for (m, c) in prod.terms() {
                if m.vars().len() % 2 == 1 {
                    continue;
                }
                let (mom, hp) = gauge.moment(m.vars());
                if mom.is_zero() {
                    continue;
                }
                let expo = m.h_exp() - n_factors as i64 + hp as i64;
                if expo < 0 {
                    return Err(BvError::NegativeExponent { exponent: expo });
                }
                if (expo as usize) <= order {
                    let entry = acc.entry(expo as usize).or_insert_with(Q::zero);
                    *entry += combin.clone() * c.clone() * mom;
                }
            }
            return Ok(());
        }
        let piece = &pieces[idx];
        let mut cur = prod.clone();
        let mut comb = combin.clone();
        let mut used = 0i64;
        let mut mult = 0i64;
        loop {
            self.expand_multisets(
                pieces,
                idx + 1,
                budget_left - used,
                &cur,
                &comb,
                n_factors + mult as usize,
                order,
                gauge,
                acc,
            )?;
            if used + piece.mu2 > budget_left {
                break;
            }
            mult += 1;
            used += piece.mu2;
            cur = gauge.algebra().mul(&cur, &piece.poly);
            if cur.is_zero() {
                break;
            }
            comb /= qi(mult);
        }
        Ok(())
    }

    /// Evaluate the Gaussian state on a chain: each chain term contributes
    /// the moment of the product of its factors' polynomial images, divided
    /// by one `h` per factor. The empty chain term gives `1`.
    pub fn q_cocycle_eval_with_gauge(
        &self,
        chain: &CeChain,
        order: usize,
        gauge: &GaussianSpec,
    ) -> Result<TruncatedHSeries, BvError> {
        let tau = gauge.algebra();
        let mut acc: BTreeMap<usize, Q> = BTreeMap::new();
        for (factors, c) in chain.terms() {
            let mut prod = SuperPolynomial::one();
            for m in factors {
                let mut fs: Vec<Factor> = Vec::with_capacity(m.nu() as usize + m.words().len());
                for _ in 0..m.nu() {
                    fs.push(Factor::Nu);
                }
                for w in m.words() {
                    fs.push(Factor::Word(w.clone()));
                }
                let elem = self.v_alg.lambda_from_factors(m.gamma(), fs, qi(1));
                let poly = gauge.restrict(&self.w_poly, &self.map_n(&self.phi_a(&elem)));
                prod = tau.mul(&prod, &poly);
                if prod.is_zero() {
                    break;
                }
            }
            if prod.is_zero() {
                continue;
            }
            let prod = prod.shifted_h(-(factors.len() as i64));
            for (m, pc) in prod.terms() {
                if m.vars().len() % 2 == 1 {
                    continue;
                }
                let (mom, hp) = gauge.moment(m.vars());
                if mom.is_zero() {
                    continue;
                }
                let expo = m.h_exp() + hp as i64;
                if expo < 0 {
                    return Err(BvError::NegativeExponent { exponent: expo });
                }
                if (expo as usize) <= order {
                    let entry = acc.entry(expo as usize).or_insert_with(Q::zero);
                    *entry += c.clone() * pc.clone() * mom;
                }
            }
        }
        let pairs: Vec<(usize, Q)> = acc.into_iter().collect();
        Ok(TruncatedHSeries::from_pairs(order, &pairs))
    }

    /// [`BvContext::q_cocycle_eval_with_gauge`] on the canonical gauge.
    pub fn q_cocycle_eval(
        &self,
        chain: &CeChain,
        order: usize,
    ) -> Result<TruncatedHSeries, BvError> {
        let gauge = self.canonical_gauge()?;
        self.q_cocycle_eval_with_gauge(chain, order, &gauge)
    }
}

struct PhiFrame<'a> {
    blocks: &'a [Vec<u32>],
    lens: &'a [usize],
    ys: &'a [&'a Vec<Q>],
    y_par: &'a [u64],
    first_vecs: &'a [Vec<Q>],
    a_vecs: &'a [Vec<Q>],
    upar: u64,
    odd_form: bool,
    base: Q,
    v_suffix: &'a [u64],
    g: u32,
    b: u32,
}

struct Piece {
    poly: SuperPolynomial,
    mu2: i64,
}

// ---------------------------------------------------------------------------
// Top-level entry points
// ---------------------------------------------------------------------------

/// The one-dimensional odd coordinate space with `⟨t,t⟩ = 1`.
pub fn odd_line_form() -> Result<BilinearForm, GradedError> {
    let basis = GradedBasis::from_pairs(&[("t", Parity::Odd)])?;
    BilinearForm::new(basis, vec![vec![qi(1)]], Parity::Even, Symmetry::Skew)
}

/// The element `Σᵢ aᵢ·[(t^{2i+1})]` over the odd line, from `(i, aᵢ)` pairs
/// with `i ≥ 1`.
pub fn odd_power_element(
    words: &WordAlgebra,
    coeffs: &[(u32, Q)],
) -> Result<LambdaElement, BvError> {
    let mut x = LambdaElement::zero();
    for (i, c) in coeffs {
        if c.is_zero() {
            continue;
        }
        let letters = vec!["t"; 2 * *i as usize + 1];
        x.add_scaled(&words.lambda_monomial(0, 0, &[&letters], c.clone())?, &qi(1));
    }
    Ok(x)
}

/// Expand a word-algebra element over `V` into one over `V ⊗ A`.
pub fn phi_a(
    v_form: &BilinearForm,
    algebra: &DgFrobeniusAlgebra,
    x: &LambdaElement,
) -> Result<LambdaElement, BvError> {
    Ok(BvContext::new(v_form, algebra)?.phi_a(x))
}

/// The quadratic potential on `V ⊗ A` built from the differential of `A`.
pub fn sigma_d(
    v_form: &BilinearForm,
    algebra: &DgFrobeniusAlgebra,
) -> Result<QuadraticFunction, BvError> {
    Ok(BvContext::new(v_form, algebra)?.sigma_d().clone())
}

/// The pairing series of a master-equation solution over the canonical
/// gauge of `A`, through `h^order`.
pub fn pairing_series(
    v_form: &BilinearForm,
    algebra: &DgFrobeniusAlgebra,
    x: &LambdaElement,
    order: usize,
) -> Result<TruncatedHSeries, BvError> {
    BvContext::new(v_form, algebra)?.pairing_series(x, order)
}

/// Evaluate the Gaussian state of the canonical gauge on a chain.
pub fn q_cocycle_eval(
    v_form: &BilinearForm,
    algebra: &DgFrobeniusAlgebra,
    chain: &CeChain,
    order: usize,
) -> Result<TruncatedHSeries, BvError> {
    BvContext::new(v_form, algebra)?.q_cocycle_eval(chain, order)
}

/// The pairing series for `Σᵢ aᵢ·[(t^{2i+1})]` over the `n×n` matrix algebra
/// tensored with the two-dimensional acyclic algebra.
pub fn matrix_pairing_series(
    n: usize,
    coeffs: &[(u32, Q)],
    order: usize,
) -> Result<TruncatedHSeries, BvError> {
    let algebra = tensor_algebras(&matrix_algebra(n)?, &xi_algebra())?;
    let v_form = odd_line_form()?;
    let ctx = BvContext::new(&v_form, &algebra)?;
    let x = odd_power_element(ctx.word_algebra(), coeffs)?;
    ctx.pairing_series(&x, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::qr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn xi_ctx() -> BvContext {
        let v = odd_line_form().unwrap();
        BvContext::new(&v, &xi_algebra()).unwrap()
    }

    fn m2xi_ctx() -> BvContext {
        let v = odd_line_form().unwrap();
        let a = tensor_algebras(&matrix_algebra(2).unwrap(), &xi_algebra()).unwrap();
        BvContext::new(&v, &a).unwrap()
    }

    fn assert_lambda_eq(words: &WordAlgebra, a: &LambdaElement, b: &LambdaElement, what: &str) {
        let mut diff = a.clone();
        diff.add_scaled(b, &qi(-1));
        assert!(
            diff.is_zero(),
            "{what}: difference is {}",
            words.format_lambda(&diff.truncated(8))
        );
    }

    // -- polynomial ring ---------------------------------------------------

    #[test]
    fn canonical_sorting_tracks_odd_swaps() {
        let basis =
            GradedBasis::from_pairs(&[("x", Parity::Odd), ("y", Parity::Odd), ("z", Parity::Even)])
                .unwrap();
        let alg = PolyAlgebra::new(&basis);
        // y·x = −x·y for odd letters.
        assert_eq!(
            alg.monomial(0, &[1, 0], qi(1)),
            alg.monomial(0, &[0, 1], qi(-1))
        );
        // z commutes with everything.
        assert_eq!(
            alg.monomial(0, &[2, 0], qi(1)),
            alg.monomial(0, &[0, 2], qi(1))
        );
        // Odd squares vanish.
        assert!(alg.monomial(0, &[0, 0], qi(1)).is_zero());
        assert!(!alg.monomial(0, &[2, 2], qi(1)).is_zero());
    }

    #[test]
    fn product_is_graded_commutative() {
        let basis =
            GradedBasis::from_pairs(&[("x", Parity::Odd), ("y", Parity::Odd), ("z", Parity::Even)])
                .unwrap();
        let alg = PolyAlgebra::new(&basis);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..60 {
            let len_a = rng.gen_range(0..4);
            let len_b = rng.gen_range(0..4);
            let la: Vec<u32> = (0..len_a).map(|_| rng.gen_range(0..3)).collect();
            let lb: Vec<u32> = (0..len_b).map(|_| rng.gen_range(0..3)).collect();
            let f = alg.monomial(0, &la, qi(1));
            let g = alg.monomial(1, &lb, qi(3));
            let fg = alg.mul(&f, &g);
            let gf = alg.mul(&g, &f);
            let pa: u64 = la.iter().map(|&v| alg.pbits[v as usize]).sum::<u64>() % 2;
            let pb: u64 = lb.iter().map(|&v| alg.pbits[v as usize]).sum::<u64>() % 2;
            assert_eq!(fg, gf.scaled(&sign_pow(pa * pb)));
        }
    }

    #[test]
    fn left_derivative_satisfies_leibniz() {
        let basis =
            GradedBasis::from_pairs(&[("x", Parity::Odd), ("y", Parity::Odd), ("z", Parity::Even)])
                .unwrap();
        let alg = PolyAlgebra::new(&basis);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..60 {
            let len_a = rng.gen_range(0..4);
            let len_b = rng.gen_range(0..4);
            let la: Vec<u32> = (0..len_a).map(|_| rng.gen_range(0..3)).collect();
            let lb: Vec<u32> = (0..len_b).map(|_| rng.gen_range(0..3)).collect();
            let f = alg.monomial(0, &la, qi(2));
            let g = alg.monomial(0, &lb, qi(5));
            if f.is_zero() || g.is_zero() {
                continue;
            }
            let pa: u64 = la.iter().map(|&v| alg.pbits[v as usize]).sum::<u64>() % 2;
            for k in 0..3u32 {
                let lhs = alg.left_derivative(&alg.mul(&f, &g), k);
                let mut rhs = alg.mul(&alg.left_derivative(&f, k), &g);
                let kp = alg.pbits[k as usize];
                rhs.add_scaled(
                    &alg.mul(&f, &alg.left_derivative(&g, k)),
                    &sign_pow(kp * pa),
                );
                assert_eq!(lhs, rhs, "Leibniz for k={k} la={la:?} lb={lb:?}");
            }
        }
    }

    #[test]
    fn laplacian_anchors_on_the_acyclic_pair() {
        let ctx = xi_ctx();
        // W basis order: 0 = t:1 (odd), 1 = t:a (even).
        assert_eq!(ctx.pair_form().basis().name(0), "t:1");
        assert_eq!(ctx.pair_form().basis().name(1), "t:a");
        let g = ctx.w_word_algebra().inverse_matrix();
        assert_eq!(g[0][1], qi(-1));
        assert_eq!(g[1][0], qi(-1));
        assert!(g[0][0].is_zero() && g[1][1].is_zero());
        let p = &ctx.w_poly;
        // Δ(ξ_odd·ξ_even) = 1 and Δ(ξ_odd·ξ_even²) = 2·ξ_even.
        let f = p.monomial(0, &[0, 1], qi(1));
        assert_eq!(ctx.laplacian(&f), SuperPolynomial::one());
        let f = p.monomial(0, &[0, 1, 1], qi(1));
        assert_eq!(ctx.laplacian(&f), p.monomial(0, &[1], qi(2)));
    }

    #[test]
    fn bracket_measures_laplacian_failure() {
        let ctx = m2xi_ctx();
        let p = &ctx.w_poly;
        let n = p.basis().len() as u32;
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..30 {
            let len_a = rng.gen_range(1..4);
            let len_b = rng.gen_range(1..4);
            let la: Vec<u32> = (0..len_a).map(|_| rng.gen_range(0..n)).collect();
            let lb: Vec<u32> = (0..len_b).map(|_| rng.gen_range(0..n)).collect();
            let f = p.monomial(0, &la, qi(1));
            let g = p.monomial(0, &lb, qi(1));
            if f.is_zero() || g.is_zero() {
                continue;
            }
            let pf: u64 = la.iter().map(|&v| p.pbits[v as usize]).sum::<u64>() % 2;
            let lhs = ctx.laplacian(&p.mul(&f, &g));
            let mut rhs = p.mul(&ctx.laplacian(&f), &g);
            rhs.add_scaled(&p.mul(&f, &ctx.laplacian(&g)), &sign_pow(pf));
            rhs.add_scaled(&ctx.poisson(&f, &g), &qi(1));
            assert_eq!(lhs, rhs, "la={la:?} lb={lb:?}");
        }
    }

    // -- the quadratic potential -------------------------------------------

    #[test]
    fn potential_on_the_acyclic_algebra_is_the_even_square() {
        let ctx = xi_ctx();
        let terms: Vec<(usize, usize, Q)> = ctx
            .sigma_d()
            .terms()
            .map(|(i, j, c)| (i, j, c.clone()))
            .collect();
        assert_eq!(terms, vec![(1, 1, qi(1))]);
        assert_eq!(ctx.w_poly.format(&ctx.sigma_d_poly()), "t:a^2");
    }

    #[test]
    fn potential_vanishes_for_zero_differential() {
        let basis = GradedBasis::from_pairs(&[("1", Parity::Even), ("th", Parity::Odd)]).unwrap();
        let algebra = DgFrobeniusAlgebra::new(
            basis,
            "1",
            &[
                ("1", "1", "1", qi(1)),
                ("1", "th", "th", qi(1)),
                ("th", "1", "th", qi(1)),
            ],
            &[],
            &[("1", "th", qi(1)), ("th", "1", qi(1))],
            Parity::Odd,
        )
        .unwrap();
        let v = odd_line_form().unwrap();
        let ctx = BvContext::new(&v, &algebra).unwrap();
        assert!(ctx.sigma_d().is_zero());
    }

    #[test]
    fn potential_is_closed_for_laplacian_and_bracket() {
        for ctx in [xi_ctx(), m2xi_ctx()] {
            let sigma = ctx.sigma_d_poly();
            assert!(ctx.laplacian(&sigma).is_zero(), "Δσ ≠ 0");
            assert!(ctx.poisson(&sigma, &sigma).is_zero(), "{{σ,σ}} ≠ 0");
        }
    }

    #[test]
    fn mismatched_parities_are_rejected() {
        // Odd coordinate form with an even-form algebra: total parity even.
        let a = matrix_algebra(2).unwrap();
        let v = odd_line_form().unwrap();
        match BvContext::new(&v, &a) {
            Err(BvError::ParityMismatch(_)) => {}
            other => panic!("expected parity mismatch, got {other:?}"),
        }
    }

    // -- the word expansion ------------------------------------------------

    #[test]
    fn expansion_of_zero_is_zero() {
        let ctx = xi_ctx();
        assert!(ctx.phi_a(&LambdaElement::zero()).is_zero());
    }

    /// Independent expansion of one canonical monomial: iterate every letter
    /// assignment, ask the surface-tensor evaluator for its weight, and work
    /// out the interleaving sign directly from the definition.
    fn phi_brute_monomial(
        ctx: &BvContext,
        g: u32,
        b: u32,
        blocks: &[Vec<u32>],
        c: &Q,
    ) -> LambdaElement {
        let da = ctx.frob.dim();
        let mut out = LambdaElement::zero();
        let flat: Vec<u32> = blocks.iter().flatten().copied().collect();
        let k = flat.len();
        let mut suffix = vec![0u64; k + 1];
        for s in (0..k).rev() {
            suffix[s] = (suffix[s + 1] + ctx.v_pbits[flat[s] as usize]) % 2;
        }
        let mut assign = vec![0usize; k];
        'odometer: loop {
            // Surface-tensor weight for this assignment.
            let mut pos = 0;
            let mut idx_blocks: Vec<Vec<usize>> = Vec::new();
            for bl in blocks {
                idx_blocks.push(assign[pos..pos + bl.len()].to_vec());
                pos += bl.len();
            }
            let weight = ctx.frob.alpha(g, b, &idx_blocks);
            if !weight.is_zero() {
                let mut exp = 0u64;
                for (s, &a) in assign.iter().enumerate() {
                    exp += ctx.a_pbits[a] * suffix[s + 1];
                }
                let mut coeff = c.clone() * weight * sign_pow(exp);
                let mut factors: Vec<Factor> = Vec::new();
                for _ in 0..b {
                    factors.push(Factor::Nu);
                }
                let mut ok = true;
                let mut pos = 0;
                for bl in blocks {
                    let letters: Vec<u32> = bl
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| v * da as u32 + assign[pos + i] as u32)
                        .collect();
                    pos += bl.len();
                    match ctx.w_alg.word_from_indices(&letters) {
                        Some((cw, sgn)) => {
                            factors.push(Factor::Word(cw));
                            coeff *= qi(sgn);
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    out.add_scaled(&ctx.w_alg.lambda_from_factors(g, factors, coeff), &qi(1));
                }
            }
            let mut p = 0;
            loop {
                if p == k {
                    break 'odometer;
                }
                assign[p] += 1;
                if assign[p] < da {
                    break;
                }
                assign[p] = 0;
                p += 1;
            }
        }
        out
    }

    fn phi_expand_monomials(ctx: &BvContext, inputs: &[(u32, u32, Vec<Vec<&str>>)]) {
        for (g, b, words) in inputs {
            let refs: Vec<&[&str]> = words.iter().map(|w| w.as_slice()).collect();
            let x = match ctx.v_alg.lambda_monomial(*g, *b, &refs, qi(1)) {
                Ok(x) => x,
                Err(e) => panic!("bad test input: {e}"),
            };
            let fast = ctx.phi_a(&x);
            // The brute-force path works on the canonicalized monomials.
            let mut slow = LambdaElement::zero();
            for (m, c) in x.terms() {
                let blocks: Vec<Vec<u32>> =
                    m.words().iter().map(|w| w.letters().to_vec()).collect();
                slow.add_scaled(
                    &phi_brute_monomial(ctx, m.gamma(), m.nu(), &blocks, c),
                    &qi(1),
                );
            }
            assert_lambda_eq(
                &ctx.w_alg,
                &fast,
                &slow,
                &format!("expansion of g={g} b={b} {words:?}"),
            );
        }
    }

    #[test]
    fn expansion_matches_brute_force_on_the_acyclic_algebra() {
        let ctx = xi_ctx();
        let t = |n: usize| vec!["t"; n];
        let inputs: Vec<(u32, u32, Vec<Vec<&str>>)> = vec![
            (0, 0, vec![t(2)]),
            (0, 0, vec![t(3)]),
            (0, 0, vec![t(4)]),
            (0, 0, vec![t(5)]),
            (0, 0, vec![t(2), t(2)]),
            (0, 0, vec![t(1), t(3)]),
            (0, 0, vec![t(2), t(3)]),
            (0, 0, vec![t(1), t(1), t(2)]),
            (0, 1, vec![t(2)]),
            (0, 1, vec![t(3)]),
            (0, 2, vec![t(2)]),
            (0, 1, vec![t(1), t(2)]),
            (1, 0, vec![t(2)]),
            (1, 0, vec![t(3)]),
            (1, 1, vec![t(2)]),
            (1, 0, vec![t(1), t(2)]),
        ];
        phi_expand_monomials(&ctx, &inputs);
    }

    #[test]
    fn expansion_matches_brute_force_on_the_matrix_tensor() {
        let ctx = m2xi_ctx();
        let t = |n: usize| vec!["t"; n];
        let inputs: Vec<(u32, u32, Vec<Vec<&str>>)> = vec![
            (0, 0, vec![t(2)]),
            (0, 0, vec![t(3)]),
            (0, 0, vec![t(1), t(2)]),
            (0, 1, vec![t(2)]),
            (1, 0, vec![t(2)]),
        ];
        phi_expand_monomials(&ctx, &inputs);
    }

    #[test]
    fn expansion_kills_boundary_markers_on_the_acyclic_algebra() {
        // The boundary element of the acyclic algebra vanishes, so any
        // monomial with a boundary marker expands to zero.
        let ctx = xi_ctx();
        let x = ctx
            .v_alg
            .lambda_monomial(0, 1, &[&["t", "t", "t"]], qi(1))
            .unwrap();
        assert!(ctx.phi_a(&x).is_zero());
        let x = ctx
            .v_alg
            .lambda_monomial(1, 2, &[&["t", "t"]], qi(5))
            .unwrap();
        assert!(ctx.phi_a(&x).is_zero());
    }

    #[test]
    fn expansion_restricts_to_alternating_powers() {
        // Through the whole pipeline: [(t^{2i+1})] expands, flattens, and
        // restricts to (−1)^i · τ^{2i+1} with no h.
        let ctx = xi_ctx();
        let gauge = ctx.canonical_gauge().unwrap();
        for (i, k) in [(1i64, 3usize), (2, 5), (3, 7)] {
            let letters = vec!["t"; k];
            let x = ctx.v_alg.lambda_monomial(0, 0, &[&letters], qi(1)).unwrap();
            let poly = gauge.restrict(&ctx.w_poly, &ctx.map_n(&ctx.phi_a(&x)));
            let expect = gauge
                .algebra()
                .monomial(0, &vec![0u32; k], sign_pow(i as u64));
            assert_eq!(poly, expect, "k = {k}");
        }
    }

    #[test]
    fn expansion_is_a_chain_map() {
        let ctx = xi_ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for trial in 0..12 {
            let x = random_element(&ctx, &mut rng, 5);
            let lhs = ctx.phi_a(&ctx.v_alg.differential(&x, LambdaMode::GammaNu, None).unwrap());
            let rhs = ctx
                .w_alg
                .differential(&ctx.phi_a(&x), LambdaMode::GammaNu, None)
                .unwrap();
            assert_lambda_eq(&ctx.w_alg, &lhs, &rhs, &format!("chain map, trial {trial}"));
        }
    }

    #[test]
    fn expansion_is_a_chain_map_on_the_matrix_tensor() {
        let ctx = m2xi_ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        for trial in 0..6 {
            let x = random_element(&ctx, &mut rng, 3);
            let lhs = ctx.phi_a(&ctx.v_alg.differential(&x, LambdaMode::GammaNu, None).unwrap());
            let rhs = ctx
                .w_alg
                .differential(&ctx.phi_a(&x), LambdaMode::GammaNu, None)
                .unwrap();
            assert_lambda_eq(&ctx.w_alg, &lhs, &rhs, &format!("chain map, trial {trial}"));
        }
    }

    #[test]
    fn expansion_respects_the_bracket() {
        let ctx = xi_ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for trial in 0..8 {
            let x = random_element(&ctx, &mut rng, 4);
            let y = random_element(&ctx, &mut rng, 4);
            let lhs = ctx.phi_a(&ctx.v_alg.ce_bracket(&x, &y, None));
            let rhs = ctx
                .w_alg
                .ce_bracket(&ctx.phi_a(&x), &ctx.phi_a(&y), None);
            assert_lambda_eq(&ctx.w_alg, &lhs, &rhs, &format!("bracket, trial {trial}"));
        }
    }

    fn random_element(ctx: &BvContext, rng: &mut ChaCha20Rng, max_weight: usize) -> LambdaElement {
        let mut x = LambdaElement::zero();
        let n_terms = rng.gen_range(1..3);
        for _ in 0..n_terms {
            let g = rng.gen_range(0..2u32);
            let b = rng.gen_range(0..2u32);
            let base = 2 * g as usize + b as usize;
            if base + 1 > max_weight {
                continue;
            }
            let budget = max_weight - base;
            let n_words = rng.gen_range(1..3usize);
            let mut lens = Vec::new();
            let mut left = budget;
            for w in 0..n_words {
                if left == 0 {
                    break;
                }
                let max_len = if w == n_words - 1 { left } else { left.max(1) };
                let len = rng.gen_range(1..=max_len.max(1));
                lens.push(len);
                left -= len.min(left);
            }
            if lens.is_empty() {
                continue;
            }
            let total: usize = 2 * g as usize + b as usize + lens.iter().sum::<usize>();
            if total < 2 {
                continue;
            }
            let words: Vec<Vec<&str>> = lens.iter().map(|&l| vec!["t"; l]).collect();
            let refs: Vec<&[&str]> = words.iter().map(|w| w.as_slice()).collect();
            let c = qi(rng.gen_range(-3..4));
            if c.is_zero() {
                continue;
            }
            if let Ok(e) = ctx.v_alg.lambda_monomial(g, b, &refs, c) {
                x.add_scaled(&e, &qi(1));
            }
        }
        x
    }

    #[test]
    fn expansion_images_commute_with_the_potential() {
        let ctx = xi_ctx();
        let sigma = ctx.sigma_d_poly();
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        for trial in 0..10 {
            let x = random_element(&ctx, &mut rng, 5);
            let image = ctx.map_n(&ctx.phi_a(&x));
            let br = ctx.poisson(&sigma, &image);
            assert!(
                br.is_zero(),
                "trial {trial}: {{σ, image}} = {}",
                ctx.w_poly.format(&br)
            );
        }
    }

    // -- the flattening maps -----------------------------------------------

    #[test]
    fn flattening_exponent_counts_genus_boundaries_words() {
        let ctx = xi_ctx();
        let y = ctx
            .w_alg
            .lambda_monomial(0, 0, &[&["t:a", "t:a"]], qi(1))
            .unwrap();
        let p = ctx.map_n(&y);
        let (m, _) = p.terms().next().unwrap();
        assert_eq!(m.h_exp(), 0);
        let y = ctx
            .w_alg
            .lambda_monomial(1, 0, &[&["t:a", "t:a"]], qi(1))
            .unwrap();
        let p = ctx.map_n(&y);
        let (m, _) = p.terms().next().unwrap();
        assert_eq!(m.h_exp(), 2);
        let y = ctx
            .w_alg
            .lambda_monomial(0, 1, &[&["t:a", "t:a"]], qi(1))
            .unwrap();
        let p = ctx.map_n(&y);
        let (m, _) = p.terms().next().unwrap();
        assert_eq!(m.h_exp(), 1);
        // Two words: exponent n − 1 = 1.
        let y = ctx
            .w_alg
            .lambda_monomial(0, 0, &[&["t:a", "t:a"], &["t:a", "t:a"]], qi(1))
            .unwrap();
        let p = ctx.map_n(&y);
        let (m, _) = p.terms().next().unwrap();
        assert_eq!(m.h_exp(), 1);
    }

    #[test]
    fn factor_products_divide_by_h_per_factor() {
        let ctx = xi_ctx();
        let p = ctx.w_poly.monomial(0, &[1, 1], qi(3));
        // One factor: h^{-1}·p.
        assert_eq!(ctx.map_m(std::slice::from_ref(&p)), p.shifted_h(-1));
        // No factors: 1.
        assert_eq!(ctx.map_m(&[]), SuperPolynomial::one());
        // Two factors with the second the constant 1: h^{-2}·p.
        assert_eq!(
            ctx.map_m(&[p.clone(), SuperPolynomial::one()]),
            p.shifted_h(-2)
        );
    }

    #[test]
    fn flattening_intertwines_differential_and_laplacian() {
        // Words of length ≥ 3: the contraction of a two-letter word lands in
        // the wordless part of the quotient, which the word layer discards,
        // while the polynomial side keeps the matching constant. On words of
        // length ≥ 3 both sides see every term.
        let ctx = xi_ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(25);
        for trial in 0..14 {
            let y = random_w_element(&ctx, &mut rng, 5, 3);
            let lhs = ctx.map_n(&ctx.w_alg.differential(&y, LambdaMode::GammaNu, None).unwrap());
            let rhs = ctx.laplacian(&ctx.map_n(&y)).shifted_h(1);
            assert_eq!(
                lhs,
                rhs,
                "trial {trial}: lhs = {}, rhs = {}",
                ctx.w_poly.format(&lhs),
                ctx.w_poly.format(&rhs)
            );
        }
    }

    #[test]
    fn flattening_intertwines_bracket_and_poisson() {
        // The word-layer bracket and the polynomial bracket polarize the
        // same second-order operator with opposite orientation, so the
        // flattening map intertwines them up to a global sign. (The
        // polynomial bracket's own sign is fixed by the failure-of-Leibniz
        // identity relative to the operator that matches the word-layer
        // differential.)
        let ctx = xi_ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(26);
        for trial in 0..14 {
            let x = random_w_element(&ctx, &mut rng, 4, 2);
            let y = random_w_element(&ctx, &mut rng, 4, 2);
            let lhs = ctx.map_n(&ctx.w_alg.ce_bracket(&x, &y, None));
            let rhs = ctx
                .poisson(&ctx.map_n(&x), &ctx.map_n(&y))
                .scaled(&qi(-1));
            assert_eq!(
                lhs,
                rhs,
                "trial {trial}: lhs = {}, rhs = {}",
                ctx.w_poly.format(&lhs),
                ctx.w_poly.format(&rhs)
            );
        }
    }

    fn random_w_element(
        ctx: &BvContext,
        rng: &mut ChaCha20Rng,
        max_weight: usize,
        min_len: usize,
    ) -> LambdaElement {
        let dim = ctx.pair_form().basis().len() as u32;
        let mut x = LambdaElement::zero();
        for _ in 0..rng.gen_range(1..3) {
            let g = rng.gen_range(0..2u32);
            let b = rng.gen_range(0..2u32);
            let base = 2 * g as usize + b as usize;
            if base + min_len > max_weight {
                continue;
            }
            let len = rng.gen_range(min_len..=(max_weight - base).max(min_len));
            let letters: Vec<u32> = (0..len).map(|_| rng.gen_range(0..dim)).collect();
            if let Some((cw, sgn)) = ctx.w_alg.word_from_indices(&letters) {
                let mut fs: Vec<Factor> = Vec::new();
                for _ in 0..b {
                    fs.push(Factor::Nu);
                }
                fs.push(Factor::Word(cw));
                let c = qi(rng.gen_range(1..4) * sgn);
                x.add_scaled(&ctx.w_alg.lambda_from_factors(g, fs, c), &qi(1));
            }
        }
        x
    }

    // -- gauges and moments ------------------------------------------------

    #[test]
    fn canonical_gauge_of_the_acyclic_algebra() {
        let ctx = xi_ctx();
        let gauge = ctx.canonical_gauge().unwrap();
        assert_eq!(gauge.basis().len(), 1);
        assert_eq!(gauge.basis().name(0), "t:a");
        assert_eq!(gauge.basis().parity(0), Parity::Even);
        let terms: Vec<(usize, usize, Q)> = gauge
            .sigma_restricted()
            .terms()
            .map(|(i, j, c)| (i, j, c.clone()))
            .collect();
        assert_eq!(terms, vec![(0, 0, qi(1))]);
        assert_eq!(gauge.propagator(), &[vec![qi(1)]]);
    }

    #[test]
    fn restriction_kills_off_gauge_coordinates() {
        let ctx = xi_ctx();
        let gauge = ctx.canonical_gauge().unwrap();
        // ξ_{t:1} is off the gauge.
        let p = ctx.w_poly.monomial(0, &[0], qi(1));
        assert!(gauge.restrict(&ctx.w_poly, &p).is_zero());
        // Constants pass through unchanged.
        let c = ctx.w_poly.monomial(2, &[], qi(7));
        assert_eq!(gauge.restrict(&ctx.w_poly, &c), c);
        // ξ_{t:a} becomes the gauge coordinate.
        let p = ctx.w_poly.monomial(0, &[1], qi(1));
        assert_eq!(
            gauge.restrict(&ctx.w_poly, &p),
            gauge.algebra().monomial(0, &[0], qi(1))
        );
    }

    #[test]
    fn moments_of_even_powers() {
        let ctx = xi_ctx();
        let gauge = ctx.canonical_gauge().unwrap();
        assert_eq!(gauge.moment(&[0, 0]), (qi(1), 1));
        assert_eq!(gauge.moment(&[0; 6]), (qi(15), 3));
        assert_eq!(gauge.moment(&[0; 3]), (qi(0), 1));
        assert_eq!(gauge.moment(&[]), (qi(1), 0));
    }

    #[test]
    fn matched_pair_halving_is_opt_in() {
        let ctx = xi_ctx();
        let mut gauge = ctx.canonical_gauge().unwrap();
        gauge.set_matched_pair_halving(true);
        assert_eq!(gauge.moment(&[0; 6]), (qr(15, 8), 3));
        gauge.set_matched_pair_halving(false);
        assert_eq!(gauge.moment(&[0; 6]), (qi(15), 3));
    }

    #[test]
    fn moments_match_matching_enumeration_on_a_mixed_basis() {
        // A 2|2 coordinate space with a dense even block and an odd block.
        let basis = GradedBasis::from_pairs(&[
            ("x1", Parity::Even),
            ("x2", Parity::Even),
            ("o1", Parity::Odd),
            ("o2", Parity::Odd),
        ])
        .unwrap();
        let sigma = QuadraticFunction::new(
            basis.clone(),
            &[
                (0, 0, qi(1)),
                (0, 1, qi(1)),
                (1, 1, qi(3)),
                (2, 3, qi(2)),
            ],
        );
        let gauge = GaussianSpec::from_quadratic(&sigma).unwrap();
        let pbits: Vec<u64> = (0..4).map(|i| basis.parity(i).bit()).collect();
        // All sorted monomials of degree ≤ 8 over four letters.
        let mut mons: Vec<Vec<u32>> = vec![Vec::new()];
        for _ in 0..8 {
            let mut next = Vec::new();
            for m in &mons {
                let start = m.last().copied().unwrap_or(0);
                for v in start..4 {
                    let mut m2 = m.clone();
                    m2.push(v);
                    next.push(m2);
                }
            }
            mons.extend(next);
            mons.sort();
            mons.dedup();
        }
        for m in &mons {
            if m.len() > 8 {
                continue;
            }
            let (fast, _) = gauge.moment(m);
            let slow = brute_moment(gauge.propagator(), &pbits, m);
            assert_eq!(fast, slow, "monomial {m:?}");
        }
    }

    /// Brute-force moment: enumerate perfect matchings; each matching
    /// contributes the sign of sorting the letters into matched adjacent
    /// pairs times the product of propagator entries.
    fn brute_moment(prop: &[Vec<Q>], pbits: &[u64], vars: &[u32]) -> Q {
        fn matchings(positions: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
            if positions.is_empty() {
                out.push(acc.clone());
                return;
            }
            let first = positions[0];
            for k in 1..positions.len() {
                let partner = positions[k];
                let rest: Vec<usize> = positions[1..]
                    .iter()
                    .copied()
                    .filter(|&p| p != partner)
                    .collect();
                acc.push((first, partner));
                matchings(&rest, acc, out);
                acc.pop();
            }
        }
        if vars.len() % 2 == 1 {
            return Q::zero();
        }
        if vars.is_empty() {
            return qi(1);
        }
        let positions: Vec<usize> = (0..vars.len()).collect();
        let mut out = Vec::new();
        matchings(&positions, &mut Vec::new(), &mut out);
        let parities: Vec<Parity> = vars
            .iter()
            .map(|&v| {
                if pbits[v as usize] == 1 {
                    Parity::Odd
                } else {
                    Parity::Even
                }
            })
            .collect();
        let mut total = Q::zero();
        for matching in out {
            let mut perm = Vec::new();
            for (a, b) in &matching {
                perm.push(*a);
                perm.push(*b);
            }
            let sign = crate::graded::koszul_sign(&perm, &parities).unwrap();
            let mut term = qi(sign);
            for (a, b) in &matching {
                term *= prop[vars[*a] as usize][vars[*b] as usize].clone();
            }
            total += term;
        }
        total
    }

    #[test]
    fn degenerate_gauges_are_refused() {
        let ctx = xi_ctx();
        // span{1} is isotropic and half-dimensional, but d vanishes on it.
        match ctx.gauge_from_rows(&[vec![qi(1), qi(0)]]) {
            Err(BvError::DegenerateGauge) => {}
            other => panic!("expected degenerate gauge, got {other:?}"),
        }
    }

    #[test]
    fn invalid_gauges_are_refused() {
        let ctx = xi_ctx();
        match ctx.gauge_from_rows(&[]) {
            Err(BvError::InvalidGauge(_)) => {}
            other => panic!("expected invalid gauge, got {other:?}"),
        }
        match ctx.gauge_from_rows(&[vec![qi(1), qi(1)]]) {
            Err(BvError::InvalidGauge(msg)) => assert!(msg.contains("mixes parities")),
            other => panic!("expected invalid gauge, got {other:?}"),
        }
        // Commutator-deformed rows on the matrix tensor mix parities too.
        let ctx = m2xi_ctx();
        let basis = ctx.frobenius().basis().clone();
        let dim = ctx.frobenius().dim();
        let mut rows = Vec::new();
        let names = [("E1_1", ""), ("E1_2", "E1_2"), ("E2_1", "E2_1"), ("E2_2", "")];
        for (odd_name, even_name) in names {
            let mut row = vec![Q::zero(); dim];
            row[basis.index_of(&format!("{odd_name}:a")).unwrap()] = qi(1);
            if !even_name.is_empty() {
                row[basis.index_of(&format!("{even_name}:1")).unwrap()] = qi(1);
            }
            rows.push(row);
        }
        match ctx.gauge_from_rows(&rows) {
            Err(BvError::InvalidGauge(msg)) => assert!(msg.contains("mixes parities")),
            other => panic!("expected invalid gauge, got {other:?}"),
        }
    }

    #[test]
    fn matrix_tensor_gauge_coordinates_pair_transposed() {
        let ctx = m2xi_ctx();
        let gauge = ctx.canonical_gauge().unwrap();
        assert_eq!(gauge.basis().len(), 4);
        // ⟨τ_{ij} τ_{kl}⟩/h = δ_{il}δ_{jk}: the propagator is the
        // transposition permutation in the E-basis ordering.
        let names: Vec<&str> = (0..4).map(|i| gauge.basis().name(i)).collect();
        assert_eq!(names, vec!["t:E1_1:a", "t:E1_2:a", "t:E2_1:a", "t:E2_2:a"]);
        let p = gauge.propagator();
        for (i, row) in p.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let expect = match (i, j) {
                    (0, 0) | (3, 3) | (1, 2) | (2, 1) => qi(1),
                    _ => qi(0),
                };
                assert_eq!(*c, expect, "propagator[{i}][{j}]");
            }
        }
    }

    // -- the pairing -------------------------------------------------------

    #[test]
    fn pairing_of_zero_is_zero() {
        let ctx = xi_ctx();
        let s = ctx.pairing_series(&LambdaElement::zero(), 3).unwrap();
        assert!(s.is_zero());
    }

    #[test]
    fn pairing_first_anchor() {
        let ctx = xi_ctx();
        let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1))]).unwrap();
        let s = ctx.pairing_series(&x, 2).unwrap();
        assert_eq!(s.coeff(0), qi(0));
        assert_eq!(s.coeff(1), qr(15, 2));
        assert_eq!(s.coeff(2), qi(405));
    }

    #[test]
    fn pairing_two_coefficient_anchor() {
        // With a₁ = −1 and a₂ = 1 the potential restricts to τ³ + τ⁵, so the
        // partition sum through h² is
        //   1 + [⟨τ⁶⟩/2 + ⟨τ³·τ⁵⟩-cross-terms + ⟨τ^{10}⟩/2 + ⟨τ^{12}⟩/4!·…]
        // Collecting exponents: h¹ gets ⟨τ⁶⟩/2! = 15/2; h² gets
        // ⟨τ^{12}⟩/4!·h^{-4}… = 3465/8 from four cubic factors plus
        // ⟨τ⁸⟩/2!·h^{-2}·… = 105 from one cubic and one quintic factor, so
        // Z = 1 + 15/2·h + 4305/8·h² + O(h³) and ln Z has h²-coefficient
        // 4305/8 − (15/2)²/2 = 510.
        let ctx = xi_ctx();
        let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1)), (2, qi(1))]).unwrap();
        let s = ctx.pairing_series(&x, 2).unwrap();
        assert_eq!(s.coeff(1), qr(15, 2));
        assert_eq!(s.coeff(2), qi(510));
    }

    /// The closed form for the partition sum of `±[(t^{2i+1})]`: `Σ_n
    /// [2n(2i+1)]! / (2^{n(2i+1)}·[n(2i+1)]!·(2n)!) · h^{n(2i−1)}`.
    fn closed_form(i: u64, order: usize) -> TruncatedHSeries {
        let mut pairs = Vec::new();
        let mut n = 1u64;
        loop {
            let expo = (n * (2 * i - 1)) as usize;
            if expo > order {
                break;
            }
            let m = n * (2 * i + 1);
            let mut c = Q::one();
            for k in 1..=2 * m {
                c *= qi(k as i64);
            }
            for _ in 0..m {
                c /= qi(2);
            }
            for k in 1..=m {
                c /= qi(k as i64);
            }
            for k in 1..=2 * n {
                c /= qi(k as i64);
            }
            pairs.push((expo, c));
            n += 1;
        }
        TruncatedHSeries::from_pairs(order, &pairs).ln1p().unwrap()
    }

    #[test]
    fn pairing_matches_the_closed_form() {
        let ctx = xi_ctx();
        for (i, order) in [(1u32, 4usize), (2, 4)] {
            let sign = if i % 2 == 1 { qi(-1) } else { qi(1) };
            let x = odd_power_element(ctx.word_algebra(), &[(i, sign)]).unwrap();
            let s = ctx.pairing_series(&x, order).unwrap();
            let expect = closed_form(u64::from(i), order);
            assert_eq!(
                s.coefficients(),
                expect.coefficients(),
                "power i = {i}, order {order}"
            );
        }
    }

    #[test]
    fn pairing_refuses_incomplete_inputs() {
        let ctx = xi_ctx();
        let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1))]).unwrap();
        let gauge = ctx.canonical_gauge().unwrap();
        match ctx.pairing_series_with_gauge(&x, 2, &gauge, Some(4)) {
            Err(BvError::InsufficientTruncation { needed: 6, have: 4 }) => {}
            other => panic!("expected truncation refusal, got {other:?}"),
        }
        // Completeness through the required weight is accepted.
        assert!(ctx.pairing_series_with_gauge(&x, 2, &gauge, Some(6)).is_ok());
    }

    #[test]
    fn pairing_rejects_master_equation_violations() {
        // Over a one-dimensional odd coordinate space every admissible
        // element solves the master equation vacuously (the obstruction
        // words all vanish under cyclic rotation), and even elements never
        // obstruct through their self-bracket (it is antisymmetric on even
        // arguments).  A genuine violation needs an odd element over an odd
        // plane: the self-bracket of (t1 t1 t1 t2 t2) produces nonzero
        // eight-letter words, which the genus-only reduction cannot excuse
        // once the requested order is high enough to see weight eight.
        let basis = GradedBasis::from_pairs(&[("t1", Parity::Odd), ("t2", Parity::Odd)]).unwrap();
        let v = BilinearForm::new(
            basis,
            vec![vec![qi(0), qi(1)], vec![qi(1), qi(0)]],
            Parity::Even,
            Symmetry::Skew,
        )
        .unwrap();
        let ctx = BvContext::new(&v, &xi_algebra()).unwrap();
        let x = ctx
            .word_algebra()
            .lambda_monomial(0, 0, &[&["t1", "t1", "t1", "t2", "t2"]], qi(1))
            .unwrap();
        assert!(!x.is_zero());
        match ctx.pairing_series(&x, 2) {
            Err(BvError::QmeViolation { .. }) => {}
            other => panic!("expected master-equation rejection, got {other:?}"),
        }
        // At order one the residual check only looks through weight six, so
        // the same element slips past with a zero series.
        let low = ctx.pairing_series(&x, 1).unwrap();
        assert!(low.coefficients().iter().all(|c| c.is_zero()));
    }

    // -- the cocycle evaluation --------------------------------------------

    #[test]
    fn empty_chain_evaluates_to_one() {
        let ctx = xi_ctx();
        let s = ctx.q_cocycle_eval(&CeChain::unit(), 2).unwrap();
        assert_eq!(s.coeff(0), qi(1));
        assert!(s.coeff(1).is_zero() && s.coeff(2).is_zero());
    }

    #[test]
    fn differential_chains_evaluate_to_zero() {
        let ctx = xi_ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for trial in 0..10 {
            let x = random_element(&ctx, &mut rng, 4);
            let mut chain = ctx.v_alg.chain_from_element(&x);
            if rng.gen_bool(0.5) {
                let y = random_element(&ctx, &mut rng, 3);
                chain = ctx
                    .v_alg
                    .chain_product(&chain, &ctx.v_alg.chain_from_element(&y), 8);
            }
            let dchain = ctx
                .v_alg
                .chain_differential(&chain, LambdaMode::GammaNu, Some(8))
                .unwrap();
            let s = ctx.q_cocycle_eval(&dchain, 2).unwrap();
            assert!(
                s.is_zero(),
                "trial {trial}: evaluation of a differential chain is {}",
                s.machine_lines()
            );
        }
    }

    #[test]
    fn character_evaluation_exponentiates_the_pairing() {
        let ctx = xi_ctx();
        let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1))]).unwrap();
        let order = 2;
        // Through h², powers of a weight-3 element contribute up to the
        // fourth power, so the character chain must keep weight 12.
        let chain = ctx.v_alg.ch_character(&x, 12);
        let lhs = ctx.q_cocycle_eval(&chain, order).unwrap();
        let rhs = ctx.pairing_series(&x, order).unwrap().exp0().unwrap();
        assert_eq!(lhs.coefficients(), rhs.coefficients());
    }

    // -- the matrix pairing ------------------------------------------------

    #[test]
    fn one_by_one_matrices_reduce_to_the_scalar_case() {
        let scalar = {
            let ctx = xi_ctx();
            let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1)), (2, qi(1))]).unwrap();
            ctx.pairing_series(&x, 2).unwrap()
        };
        let matrix = matrix_pairing_series(1, &[(1, qi(-1)), (2, qi(1))], 2).unwrap();
        assert_eq!(scalar.coefficients(), matrix.coefficients());
    }

    #[test]
    fn matrix_pairing_with_no_coefficients_is_zero() {
        let s = matrix_pairing_series(2, &[(1, qi(0))], 2).unwrap();
        assert!(s.is_zero());
    }

    #[test]
    fn matrix_pairing_smoke() {
        let s = matrix_pairing_series(2, &[(1, qi(-1))], 1).unwrap();
        assert!(!s.coeff(1).is_zero());
    }
}
