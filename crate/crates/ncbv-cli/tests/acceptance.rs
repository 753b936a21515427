//! End-to-end acceptance suite for the pairing engine and its command-line
//! surface.
//!
//! Each test covers one numbered criterion and prints a single
//! `criterion N: PASS/FAIL — …` line (run with `--nocapture` to see the
//! lines for passing tests); the assertions that follow the line carry the
//! same information, so a plain `cargo test` run reports the same verdicts.
//! Time-sensitive checks assert wall-clock bounds.

use std::process::Command;
use std::time::Instant;

use ncbv::bv::{
    matrix_pairing_series, odd_line_form, odd_power_element, BvContext, GaussianSpec,
};
use ncbv::cyclic::{Convention, LambdaElement, LambdaMode, WordAlgebra};
use ncbv::frobenius::{
    matrix_algebra, tensor_algebras, xi_algebra, DgFrobeniusAlgebra, HodgeDecomposition,
};
use ncbv::graded::{koszul_sign, GradedBasis, Parity, QuadraticFunction};
use ncbv::scalar::{factorial, qi, qr, Q};
use ncbv::series::TruncatedHSeries;
use num::traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

fn report(criterion: usize, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} — {detail}");
}

fn xi_context() -> BvContext {
    let v = odd_line_form().unwrap();
    BvContext::new(&v, &xi_algebra()).unwrap()
}

fn m2xi_algebra() -> DgFrobeniusAlgebra {
    tensor_algebras(&matrix_algebra(2).unwrap(), &xi_algebra()).unwrap()
}

/// Random generator-weight ≤ `max_weight` element over the one-letter
/// coordinate line: a short sum of monomials `g^γ ν^β w[t..]⋯`, mirroring
/// the distribution the library's own randomized identity tests use.
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
        if let Ok(e) = ctx.word_algebra().lambda_monomial(g, b, &refs, c) {
            x.add_scaled(&e, &qi(1));
        }
    }
    x
}

#[test]
fn criterion_01_cube_generator_first_order_coefficient() {
    let t0 = Instant::now();
    let ctx = xi_context();
    let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1))]).unwrap();
    let s = ctx.pairing_series(&x, 1).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let ok = s.coeff(0).is_zero() && s.coeff(1) == qr(15, 2) && secs < 5.0;
    report(1, ok, &format!("series {s} in {secs:.2}s (bound 5s)"));
    assert!(s.coeff(0).is_zero(), "constant term is {}", s.coeff(0));
    assert_eq!(s.coeff(1), qr(15, 2), "h coefficient is {}", s.coeff(1));
    assert!(secs < 5.0, "took {secs:.2}s, bound is 5s");
}

#[test]
fn criterion_02_two_term_element_through_h2() {
    let t0 = Instant::now();
    let ctx = xi_context();
    let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1)), (2, qi(1))]).unwrap();
    let s = ctx.pairing_series(&x, 2).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let required = TruncatedHSeries::from_pairs(2, &[(1, qr(15, 2)), (2, qr(105, 2))]);
    let ok = s.coefficients() == required.coefficients() && secs < 30.0;
    report(
        2,
        ok,
        &format!("engine series {s}, required {required}, in {secs:.2}s (bound 30s)"),
    );
    assert!(secs < 30.0, "took {secs:.2}s, bound is 30s");
    assert_eq!(
        s.coefficients(),
        required.coefficients(),
        "engine computes {s}, required {required}"
    );
}

/// `Σ_{n≥0} [2n(2i+1)]! / (2^{n(2i+1)} · [n(2i+1)]! · (2n)!) · h^{n(2i−1)}`
/// with the `n = 0` term normalized away, then the logarithm.
fn closed_form_log(i: u64, order: usize) -> TruncatedHSeries {
    let mut pairs = Vec::new();
    let mut n = 1u64;
    loop {
        let e = (n * (2 * i - 1)) as usize;
        if e > order {
            break;
        }
        let mut c = factorial(2 * n * (2 * i + 1)) / (factorial(n * (2 * i + 1)) * factorial(2 * n));
        for _ in 0..n * (2 * i + 1) {
            c /= qi(2);
        }
        pairs.push((e, c));
        n += 1;
    }
    TruncatedHSeries::from_pairs(order, &pairs).ln1p().unwrap()
}

#[test]
fn criterion_03_closed_form_cross_check_through_h5() {
    let t0 = Instant::now();
    let ctx = xi_context();
    let mut summary = Vec::new();
    for i in [1u64, 2] {
        let x = odd_power_element(ctx.word_algebra(), &[(i as u32, qi(-1))]).unwrap();
        let engine = ctx.pairing_series(&x, 5).unwrap();
        let closed = closed_form_log(i, 5);
        assert_eq!(
            engine.coefficients(),
            closed.coefficients(),
            "index {i}: engine {engine}, closed form {closed}"
        );
        summary.push(format!("index {i}: {engine}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        3,
        secs < 300.0,
        &format!("{} in {secs:.2}s (bound 300s)", summary.join("; ")),
    );
    assert!(secs < 300.0, "took {secs:.2}s, bound is 300s");
}

#[test]
fn criterion_04_master_equation_holds_for_random_coefficients() {
    let t0 = Instant::now();
    let v = odd_line_form().unwrap();
    let alg = WordAlgebra::new(&v, Convention::EvenSymplectic).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20260822);
    let mut nonzero = 0usize;
    for trial in 0..20 {
        let coeffs: Vec<(u32, Q)> = (1..=3)
            .map(|i| (i, qr(rng.gen_range(-9..=9), rng.gen_range(1..=9))))
            .collect();
        let x = odd_power_element(&alg, &coeffs).unwrap();
        if !x.is_zero() {
            nonzero += 1;
        }
        let residual = alg.qme_residual(&x, 12, LambdaMode::GammaOnly).unwrap();
        assert!(
            residual.is_zero(),
            "trial {trial}: coefficients {coeffs:?} leave residual {}",
            alg.format_lambda(&residual.truncated(12))
        );
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = secs < 60.0 && nonzero >= 15;
    report(
        4,
        ok,
        &format!("20 random coefficient sets ({nonzero} nonzero), residual zero through weight 12, in {secs:.2}s (bound 60s)"),
    );
    assert!(nonzero >= 15, "only {nonzero} of 20 sampled elements were nonzero");
    assert!(secs < 60.0, "took {secs:.2}s, bound is 60s");
}

#[test]
fn criterion_05_gluing_identity_suite_on_both_algebras() {
    let t0 = Instant::now();
    let mut details = Vec::new();
    for (name, algebra) in [("scalar", xi_algebra()), ("matrix-tensor", m2xi_algebra())] {
        let rep = algebra.check_otft_identities(100, 20260822);
        assert_eq!(rep.checks.len(), 6, "{name}: expected six identity families");
        for check in &rep.checks {
            assert_eq!(check.trials, 100, "{name}/{}: short trial count", check.name);
            assert!(
                check.failures.is_empty(),
                "{name}/{}: {} failures, first: {}",
                check.name,
                check.failures.len(),
                check.failures[0]
            );
        }
        assert!(rep.passed());
        details.push(format!("{name}: 6 families × 100 trials"));
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        5,
        secs < 120.0,
        &format!("{} in {secs:.2}s (bound 120s)", details.join("; ")),
    );
    assert!(secs < 120.0, "took {secs:.2}s, bound is 120s");
}

#[test]
fn criterion_06_expansion_is_a_chain_map_with_bracket_vanishing() {
    let t0 = Instant::now();
    let ctx = xi_context();
    let sigma = ctx.sigma_d_poly();
    let mut rng = ChaCha20Rng::seed_from_u64(20260822);
    // Draw until fifty nonzero inputs have been exercised; zero draws are
    // checked too (the identities are trivial there) but do not count.
    let mut nonzero = 0usize;
    let mut draws = 0usize;
    while nonzero < 50 {
        draws += 1;
        assert!(draws <= 400, "generator too degenerate: {nonzero} nonzero in {draws} draws");
        let x = random_element(&ctx, &mut rng, 6);
        if !x.is_zero() {
            nonzero += 1;
        }
        let lhs = ctx.phi_a(
            &ctx.word_algebra()
                .differential(&x, LambdaMode::GammaNu, None)
                .unwrap(),
        );
        let rhs = ctx
            .w_word_algebra()
            .differential(&ctx.phi_a(&x), LambdaMode::GammaNu, None)
            .unwrap();
        let mut diff = lhs.clone();
        diff.add_scaled(&rhs, &qi(-1));
        assert!(
            diff.is_zero(),
            "draw {draws}: expansion does not intertwine the differentials; difference {}",
            ctx.w_word_algebra().format_lambda(&diff.truncated(8))
        );
        let br = ctx.poisson(&sigma, &ctx.map_n(&ctx.phi_a(&x)));
        assert!(
            br.is_zero(),
            "draw {draws}: bracket with the quadratic potential does not vanish"
        );
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        6,
        secs < 120.0,
        &format!("50 nonzero random inputs of weight ≤ 6 ({draws} draws), both identities exact, in {secs:.2}s (bound 120s)"),
    );
    assert!(secs < 120.0, "took {secs:.2}s, bound is 120s");
}

/// Brute-force Gaussian moment: enumerate perfect matchings of the letter
/// positions, sign each matching by the Koszul sign of sorting the letters
/// into matched adjacent pairs, and multiply propagator entries.
fn matching_moment(prop: &[Vec<Q>], parities: &[Parity], vars: &[u32]) -> Q {
    fn enumerate(
        positions: &[usize],
        acc: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
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
            enumerate(&rest, acc, out);
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
    let mut matchings = Vec::new();
    enumerate(&positions, &mut Vec::new(), &mut matchings);
    let letter_parities: Vec<Parity> = vars.iter().map(|&v| parities[v as usize]).collect();
    let mut total = Q::zero();
    for matching in matchings {
        let mut perm = Vec::new();
        for (a, b) in &matching {
            perm.push(*a);
            perm.push(*b);
        }
        let sign = koszul_sign(&perm, &letter_parities).unwrap();
        let mut term = qi(sign);
        for (a, b) in &matching {
            term *= prop[vars[*a] as usize][vars[*b] as usize].clone();
        }
        total += term;
    }
    total
}

#[test]
fn criterion_07_moment_engine_matches_matching_enumeration() {
    let t0 = Instant::now();
    let basis = GradedBasis::from_pairs(&[
        ("x1", Parity::Even),
        ("x2", Parity::Even),
        ("o1", Parity::Odd),
        ("o2", Parity::Odd),
    ])
    .unwrap();
    let parities: Vec<Parity> = (0..4).map(|i| basis.parity(i)).collect();
    // x1² + x1·x2 + 3·x2² + 2·o1·o2 on a two-even, two-odd coordinate space.
    let sigma = QuadraticFunction::new(
        basis,
        &[(0, 0, qi(1)), (0, 1, qi(1)), (1, 1, qi(3)), (2, 3, qi(2))],
    );
    let gauge = GaussianSpec::from_quadratic(&sigma).unwrap();
    // All canonically sorted monomials of degree ≤ 8 in four letters.
    let mut monomials: Vec<Vec<u32>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..8 {
        let mut next = Vec::new();
        for m in &frontier {
            let start = m.last().copied().unwrap_or(0);
            for v in start..4 {
                let mut m2 = m.clone();
                m2.push(v);
                next.push(m2);
            }
        }
        monomials.extend(next.iter().cloned());
        frontier = next;
    }
    let mut checked = 0usize;
    let mut nonzero = 0usize;
    for m in &monomials {
        let (fast, _) = gauge.moment(m);
        let slow = matching_moment(gauge.propagator(), &parities, m);
        assert_eq!(fast, slow, "monomial {m:?}: engine {fast}, enumeration {slow}");
        checked += 1;
        if !fast.is_zero() {
            nonzero += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = secs < 60.0 && nonzero > 0;
    report(
        7,
        ok,
        &format!("{checked} monomials of degree ≤ 8 agree ({nonzero} with nonzero moment), in {secs:.2}s (bound 60s)"),
    );
    assert!(nonzero > 0, "every checked moment was zero; fixture is degenerate");
    assert!(secs < 60.0, "took {secs:.2}s, bound is 60s");
}

#[test]
fn criterion_08_series_from_two_distinct_acyclic_splittings() {
    let algebra = m2xi_algebra();
    let canonical = algebra.hodge_for().unwrap();
    assert!(
        algebra.hodge_axiom_failures(&canonical).is_empty(),
        "the constructed splitting violates its own axioms"
    );
    let n = algebra.dim();
    let s0 = canonical.s().to_vec();
    let pi0 = canonical.pi().to_vec();

    let admits = |s: &[Vec<Q>], pi: &[Vec<Q>]| -> bool {
        let h = HodgeDecomposition::new(s.to_vec(), pi.to_vec());
        algebra.hodge_axiom_failures(&h).is_empty()
    };
    let distinct = |s: &[Vec<Q>], pi: &[Vec<Q>]| s != &s0[..] || pi != &pi0[..];

    let mut candidates = 0usize;
    let mut found: Option<HodgeDecomposition> = None;

    // Systematic single-entry perturbations of the homotopy and the
    // projector.
    let steps = [qi(1), qi(-1), qr(1, 2), qr(-1, 2)];
    'single: for target in 0..2 {
        for r in 0..n {
            for c in 0..n {
                for v in &steps {
                    let mut s = s0.clone();
                    let mut pi = pi0.clone();
                    if target == 0 {
                        s[r][c] += v.clone();
                    } else {
                        pi[r][c] += v.clone();
                    }
                    candidates += 1;
                    if distinct(&s, &pi) && admits(&s, &pi) {
                        found = Some(HodgeDecomposition::new(s, pi));
                        break 'single;
                    }
                }
            }
        }
    }

    // Seeded sparse and dense random perturbations.
    let mut rng = ChaCha8Rng::seed_from_u64(20260822);
    if found.is_none() {
        for round in 0..400 {
            let mut s = s0.clone();
            let mut pi = pi0.clone();
            let entries = if round % 4 == 3 { n * n } else { rng.gen_range(1..=4) };
            for _ in 0..entries {
                let r = rng.gen_range(0..n);
                let c = rng.gen_range(0..n);
                let v = qr(rng.gen_range(-3..=3), rng.gen_range(1..=2));
                if rng.gen_bool(0.8) {
                    s[r][c] += v;
                } else {
                    pi[r][c] += v;
                }
            }
            candidates += 1;
            if distinct(&s, &pi) && admits(&s, &pi) {
                found = Some(HodgeDecomposition::new(s, pi));
                break;
            }
        }
    }

    // Global rescalings of the homotopy.
    if found.is_none() {
        for lambda in [qi(-1), qi(2), qr(1, 2)] {
            let s: Vec<Vec<Q>> = s0
                .iter()
                .map(|row| row.iter().map(|c| c.clone() * lambda.clone()).collect())
                .collect();
            candidates += 1;
            if distinct(&s, &pi0) && admits(&s, &pi0) {
                found = Some(HodgeDecomposition::new(s, pi0.clone()));
                break;
            }
        }
    }

    let v = odd_line_form().unwrap();
    let ctx = BvContext::new(&v, &algebra).unwrap();
    let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1))]).unwrap();
    let reference = ctx.pairing_series(&x, 3).unwrap();

    match found {
        Some(other) => {
            let gauge = ctx.gauge_from_rows(&other.s_image()).unwrap();
            let series = ctx
                .pairing_series_with_gauge(&x, 3, &gauge, None)
                .unwrap();
            let ok = series.coefficients() == reference.coefficients();
            report(
                8,
                ok,
                &format!("second splitting found; series {series} vs {reference}"),
            );
            assert_eq!(series.coefficients(), reference.coefficients());
        }
        None => {
            // The stability half that IS checkable: rebuilding the Gaussian
            // data from the unique splitting's image reproduces the series.
            let gauge = ctx.gauge_from_rows(&canonical.s_image()).unwrap();
            let rebuilt = ctx
                .pairing_series_with_gauge(&x, 3, &gauge, None)
                .unwrap();
            assert_eq!(
                rebuilt.coefficients(),
                reference.coefficients(),
                "rebuilding the gauge from the splitting image changed the series"
            );
            report(
                8,
                false,
                &format!(
                    "no second distinct splitting exists to compare: {candidates} candidate \
                     deformations all violate the seven identities; the unique splitting \
                     reproduces {reference} through h^3"
                ),
            );
            panic!(
                "the seven identities pin the splitting of the matrix-tensor algebra uniquely, \
                 so two distinct ones cannot be produced: the projector's image consists of \
                 cycles, every cycle here is a boundary, and the projector annihilates \
                 boundaries, so idempotence forces the projector to vanish; the homotopy's \
                 residual freedom is a square-zero self-adjoint deformation whose image would \
                 be an isotropic subspace the trace pairing does not admit, so it vanishes \
                 too. Searched {candidates} seeded single-entry, sparse, dense, and rescaling \
                 deformations of the canonical splitting: none satisfies the identity set. \
                 The checkable half holds: the Gaussian data rebuilt from the unique \
                 splitting's image reproduces the reference series {reference} through h^3."
            );
        }
    }
}

#[test]
fn criterion_09_boundary_chains_evaluate_to_zero() {
    let t0 = Instant::now();
    let ctx = xi_context();
    let words = ctx.word_algebra();
    let mut rng = ChaCha20Rng::seed_from_u64(20260822);
    // Evaluate boundaries of random chains until twenty-five with a nonzero
    // boundary have been seen; chains that happen to be cycles are checked
    // too (their zero boundary evaluates to zero trivially) but not counted.
    let mut nontrivial = 0usize;
    let mut draws = 0usize;
    while nontrivial < 25 {
        draws += 1;
        assert!(
            draws <= 600,
            "generator too degenerate: {nontrivial} nonzero boundaries in {draws} draws"
        );
        let x = random_element(&ctx, &mut rng, 4);
        let mut chain = words.chain_from_element(&x);
        if rng.gen_bool(0.5) {
            let y = random_element(&ctx, &mut rng, 3);
            chain = words.chain_product(&chain, &words.chain_from_element(&y), 8);
        }
        let boundary = words
            .chain_differential(&chain, LambdaMode::GammaNu, Some(8))
            .unwrap();
        if !boundary.is_zero() {
            nontrivial += 1;
        }
        let s = ctx.q_cocycle_eval(&boundary, 2).unwrap();
        assert!(
            s.is_zero(),
            "draw {draws}: boundary chain evaluates to {}",
            s.machine_lines()
        );
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        9,
        true,
        &format!("25 nonzero boundary chains evaluate to zero ({draws} draws), in {secs:.2}s"),
    );
}

#[test]
fn criterion_10_one_by_one_matrix_reduces_to_scalar() {
    let ctx = xi_context();
    let x = odd_power_element(ctx.word_algebra(), &[(1, qi(-1))]).unwrap();
    let scalar = ctx.pairing_series(&x, 3).unwrap();
    let matrix = matrix_pairing_series(1, &[(1, qi(-1))], 3).unwrap();
    let ok = scalar.coefficients() == matrix.coefficients();
    report(10, ok, &format!("matrix {matrix} equals scalar {scalar} through h^3"));
    assert_eq!(scalar.coefficients(), matrix.coefficients());
}

#[test]
fn criterion_11_fixed_seed_machine_output_is_byte_identical() {
    let bin = env!("CARGO_BIN_EXE_ncbv");
    let arg_sets: [&[&str]; 3] = [
        &[
            "identities", "--algebra", "xi", "--trials", "40", "--seed", "42", "--output",
            "machine",
        ],
        &[
            "pair", "--coeffs", "1=-1,2=1", "--order", "2", "--seed", "42", "--output", "machine",
        ],
        &[
            "nontriviality", "--max-order", "2", "--seed", "42", "--output", "machine",
        ],
    ];
    let mut total_bytes = 0usize;
    for args in arg_sets {
        let run = |label: &str| {
            let out = Command::new(bin).args(args).output().unwrap();
            assert!(
                out.status.success(),
                "{label} run of {args:?} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            out.stdout
        };
        let first = run("first");
        let second = run("second");
        assert_eq!(
            first, second,
            "machine output of {args:?} differs between identically seeded runs"
        );
        assert!(!first.is_empty(), "machine output of {args:?} is empty");
        total_bytes += first.len();
    }
    report(
        11,
        true,
        &format!("3 seeded command lines re-run byte-identically ({total_bytes} bytes compared)"),
    );
}
