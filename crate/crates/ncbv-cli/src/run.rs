//! Command drivers: each takes plain argument structs and returns captured
//! stdout/stderr plus an exit code, so the binary stays a thin shell and
//! tests can drive commands byte-for-byte.
//!
//! Exit codes: 0 success, 1 mathematical failure (failed axiom, identity,
//! residual, or degenerate series), 2 usage or parse error, 3 resource
//! bound exceeded.

use crate::config::{resolve_algebra, AlgebraError};
use crate::parse::{parse_coeff_list, parse_element, realize_element};
use ncbv::bv::{odd_line_form, odd_power_element, BvContext, BvError};
use ncbv::cyclic::{Convention, LambdaMode, WordAlgebra};
use ncbv::frobenius::xi_algebra;
use ncbv::scalar::{qi, Q};
use ncbv::series::TruncatedHSeries;
use num::traits::Zero;
use std::fmt::Write as _;

pub const EXIT_OK: i32 = 0;
pub const EXIT_MATH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

/// Captured result of one command run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub exit: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome {
            stdout,
            stderr: String::new(),
            exit: EXIT_OK,
        }
    }

    fn report(stdout: String, exit: i32) -> Self {
        Outcome {
            stdout,
            stderr: String::new(),
            exit,
        }
    }

    fn fail(f: Failure) -> Self {
        Outcome {
            stdout: String::new(),
            stderr: format!("{}\n", f.message()),
            exit: f.exit(),
        }
    }
}

/// Human table output or line-oriented machine output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Table,
    Machine,
}

impl OutputMode {
    pub fn from_flag(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(OutputMode::Table),
            "machine" => Ok(OutputMode::Machine),
            other => Err(format!("unknown output mode '{other}' (expected 'table' or 'machine')")),
        }
    }
}

/// Which two-point-function normalization the Gaussian uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorConvention {
    /// Contractions of a matched coordinate pair count once.
    Adopted,
    /// Literal single-integral normalization: matched pairs count half.
    Literal,
}

impl PropagatorConvention {
    pub fn from_flag(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(PropagatorConvention::Adopted),
            "literal" => Ok(PropagatorConvention::Literal),
            other => Err(format!(
                "unknown propagator convention '{other}' (expected 'paper' or 'literal')"
            )),
        }
    }
}

/// Parity convention for the coordinate word algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConventionFlag {
    Even,
    Odd,
}

impl ConventionFlag {
    pub fn from_flag(s: &str) -> Result<Self, String> {
        match s {
            "even" => Ok(ConventionFlag::Even),
            "odd" => Ok(ConventionFlag::Odd),
            other => Err(format!(
                "unknown convention '{other}' (expected 'even' or 'odd')"
            )),
        }
    }
}

/// Which residual quotient the master-equation check works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmeMode {
    GammaOnly,
    GammaNu,
}

impl QmeMode {
    pub fn from_flag(s: &str) -> Result<Self, String> {
        match s {
            "gamma-only" => Ok(QmeMode::GammaOnly),
            "gamma-nu" => Ok(QmeMode::GammaNu),
            other => Err(format!(
                "unknown residual mode '{other}' (expected 'gamma-only' or 'gamma-nu')"
            )),
        }
    }

    fn lambda_mode(self) -> LambdaMode {
        match self {
            QmeMode::GammaOnly => LambdaMode::GammaOnly,
            QmeMode::GammaNu => LambdaMode::GammaNu,
        }
    }

    fn label(self) -> &'static str {
        match self {
            QmeMode::GammaOnly => "gamma-only",
            QmeMode::GammaNu => "gamma-nu",
        }
    }
}

/// A failed run, classified by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Math(String),
    Resource(String),
}

impl Failure {
    fn exit(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Math(_) => EXIT_MATH,
            Failure::Resource(_) => EXIT_RESOURCE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Math(m) | Failure::Resource(m) => m,
        }
    }
}

fn algebra_failure(e: AlgebraError) -> Failure {
    match e {
        AlgebraError::Parse(p) => Failure::Usage(p.to_string()),
        AlgebraError::Usage(m) => Failure::Usage(m),
        AlgebraError::Build(b) => Failure::Math(format!("algebra rejected: {b}")),
    }
}

fn bv_failure(e: BvError) -> Failure {
    match e {
        BvError::InsufficientTruncation { needed, have } => Failure::Usage(format!(
            "truncation bound violated: the input must be known completely through weight {needed}, but is declared complete only through weight {have}"
        )),
        other => Failure::Math(other.to_string()),
    }
}

/// Validates the thread-count environment variable (`NCBV_THREADS`).
///
/// The exact kernels currently run single-threaded; the variable is
/// accepted as an upper bound and must be an integer in 1..=4096.
pub fn validate_thread_env(value: Option<&str>) -> Result<Option<usize>, String> {
    match value {
        None => Ok(None),
        Some(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if (1..=4096).contains(&n) => Ok(Some(n)),
            _ => Err(format!(
                "NCBV_THREADS must be an integer between 1 and 4096, found '{raw}'"
            )),
        },
    }
}

fn odd_line_word_algebra() -> Result<WordAlgebra, Failure> {
    let v = odd_line_form().map_err(|e| Failure::Math(e.to_string()))?;
    WordAlgebra::new(&v, Convention::EvenSymplectic).map_err(|e| Failure::Math(e.to_string()))
}

fn reject_odd_convention(convention: ConventionFlag) -> Result<(), Failure> {
    if convention == ConventionFlag::Odd {
        return Err(Failure::Usage(
            "the coordinate line carries an even pairing, so only the even convention applies here"
                .to_string(),
        ));
    }
    Ok(())
}

/// Everything needed to compute one pairing series.
pub struct SeriesRequest<'a> {
    pub algebra: &'a str,
    pub coeffs: &'a str,
    pub element: Option<&'a str>,
    pub order: usize,
    pub convention: ConventionFlag,
    pub propagator: PropagatorConvention,
    pub x_complete_through: Option<usize>,
}

fn compute_series(req: &SeriesRequest) -> Result<TruncatedHSeries, Failure> {
    reject_odd_convention(req.convention)?;
    let algebra = resolve_algebra(req.algebra).map_err(algebra_failure)?;
    let v = odd_line_form().map_err(|e| Failure::Math(e.to_string()))?;
    let ctx = BvContext::new(&v, &algebra).map_err(bv_failure)?;
    let x = match req.element {
        Some(text) => {
            let ast = parse_element(text).map_err(|e| Failure::Usage(e.to_string()))?;
            realize_element(&ast, ctx.word_algebra())
                .map_err(|e| Failure::Usage(e.to_string()))?
        }
        None => {
            let pairs = parse_coeff_list(req.coeffs).map_err(|e| Failure::Usage(e.to_string()))?;
            odd_power_element(ctx.word_algebra(), &pairs)
                .map_err(|e| Failure::Usage(e.to_string()))?
        }
    };
    let mut gauge = ctx.canonical_gauge().map_err(bv_failure)?;
    if req.propagator == PropagatorConvention::Literal {
        gauge.set_matched_pair_halving(true);
    }
    ctx.pairing_series_with_gauge(&x, req.order, &gauge, req.x_complete_through)
        .map_err(bv_failure)
}

fn series_output(series: &TruncatedHSeries, output: OutputMode) -> String {
    match output {
        OutputMode::Table => format!("{series}\n"),
        OutputMode::Machine => series.machine_lines(),
    }
}

/// `pair`: print the pairing series for the configured input.
pub fn cmd_pair(req: &SeriesRequest, output: OutputMode) -> Outcome {
    match compute_series(req) {
        Ok(series) => Outcome::ok(series_output(&series, output)),
        Err(f) => Outcome::fail(f),
    }
}

/// `matrix`: the pairing series over the n-by-n matrix extension.
pub struct MatrixArgs<'a> {
    pub n: usize,
    pub coeffs: &'a str,
    pub order: usize,
    pub propagator: PropagatorConvention,
    pub max_cost: usize,
}

pub fn cmd_matrix(args: &MatrixArgs, output: OutputMode) -> Outcome {
    if args.n == 0 {
        return Outcome::fail(Failure::Usage(
            "matrix size must be at least 1".to_string(),
        ));
    }
    let cost = args.n * args.n * (args.order + 1);
    if cost > args.max_cost {
        return Outcome::fail(Failure::Resource(format!(
            "resource bound exceeded: estimated cost n^2*(order+1) = {} over the limit {} (raise --max-cost to proceed)",
            cost, args.max_cost
        )));
    }
    let spec = format!("tensor:matrix:{},xi", args.n);
    let req = SeriesRequest {
        algebra: &spec,
        coeffs: args.coeffs,
        element: None,
        order: args.order,
        convention: ConventionFlag::Even,
        propagator: args.propagator,
        x_complete_through: None,
    };
    cmd_pair(&req, output)
}

/// `validate`: axiom report plus a contractibility check.
pub fn cmd_validate(algebra_spec: &str, output: OutputMode) -> Outcome {
    let algebra = match resolve_algebra(algebra_spec) {
        Ok(a) => a,
        Err(AlgebraError::Build(b)) => {
            // The tables parsed but assembly was refused: that is itself the
            // verdict, so report it on stdout as a failed validation.
            let mut out = String::new();
            match output {
                OutputMode::Table => {
                    let _ = writeln!(out, "algebra = {algebra_spec}");
                    let _ = writeln!(out, "assembly: fail ({b})");
                }
                OutputMode::Machine => {
                    let _ = writeln!(out, "algebra\t{algebra_spec}");
                    let _ = writeln!(out, "assembly\tfail\t{b}");
                }
            }
            return Outcome::report(out, EXIT_MATH);
        }
        Err(e) => return Outcome::fail(algebra_failure(e)),
    };
    let report = algebra.validate();
    let contractibility = algebra.hodge_for();
    let mut out = String::new();
    match output {
        OutputMode::Table => {
            let _ = writeln!(out, "algebra = {algebra_spec}");
            if report.passed() {
                let _ = writeln!(out, "axioms: pass");
            } else {
                let _ = writeln!(out, "axioms: fail ({} failures)", report.failures().len());
                for f in report.failures() {
                    let _ = writeln!(out, "  {}: {}", f.axiom, f.witness);
                }
            }
            match &contractibility {
                Ok(_) => {
                    let _ = writeln!(out, "contractibility: pass");
                }
                Err(e) => {
                    let _ = writeln!(out, "contractibility: fail ({e})");
                }
            }
        }
        OutputMode::Machine => {
            let _ = writeln!(out, "algebra\t{algebra_spec}");
            let _ = writeln!(out, "axioms\t{}", if report.passed() { "pass" } else { "fail" });
            for f in report.failures() {
                let _ = writeln!(out, "axiom-failure\t{}\t{}", f.axiom, f.witness);
            }
            match &contractibility {
                Ok(_) => {
                    let _ = writeln!(out, "contractibility\tpass");
                }
                Err(e) => {
                    let _ = writeln!(out, "contractibility\tfail\t{e}");
                }
            }
        }
    }
    let exit = if report.passed() && contractibility.is_ok() {
        EXIT_OK
    } else {
        EXIT_MATH
    };
    Outcome::report(out, exit)
}

/// `qme-check`: print the master-equation residual of the input element.
pub struct QmeArgs<'a> {
    pub coeffs: &'a str,
    pub element: Option<&'a str>,
    pub weight: usize,
    pub mode: QmeMode,
    pub convention: ConventionFlag,
}

pub fn cmd_qme_check(args: &QmeArgs, output: OutputMode) -> Outcome {
    let run = || -> Result<(String, i32), Failure> {
        reject_odd_convention(args.convention)?;
        let alg = odd_line_word_algebra()?;
        let x = match args.element {
            Some(text) => {
                let ast = parse_element(text).map_err(|e| Failure::Usage(e.to_string()))?;
                realize_element(&ast, &alg).map_err(|e| Failure::Usage(e.to_string()))?
            }
            None => {
                let pairs =
                    parse_coeff_list(args.coeffs).map_err(|e| Failure::Usage(e.to_string()))?;
                odd_power_element(&alg, &pairs).map_err(|e| Failure::Usage(e.to_string()))?
            }
        };
        let residual = alg
            .qme_residual(&x, args.weight, args.mode.lambda_mode())
            .map_err(|e| Failure::Usage(e.to_string()))?;
        let formatted = alg.format_lambda(&residual);
        let mut out = String::new();
        match output {
            OutputMode::Table => {
                let _ = writeln!(out, "mode = {}", args.mode.label());
                let _ = writeln!(out, "weight = {}", args.weight);
                let _ = writeln!(out, "residual = {formatted}");
            }
            OutputMode::Machine => {
                let _ = writeln!(out, "mode\t{}", args.mode.label());
                let _ = writeln!(out, "weight\t{}", args.weight);
                let _ = writeln!(out, "residual\t{formatted}");
            }
        }
        let exit = if residual.is_zero() { EXIT_OK } else { EXIT_MATH };
        Ok((out, exit))
    };
    match run() {
        Ok((stdout, exit)) => Outcome::report(stdout, exit),
        Err(f) => Outcome::fail(f),
    }
}

/// `identities`: the seeded six-check gluing-identity suite.
pub fn cmd_identities(algebra_spec: &str, trials: usize, seed: u64, output: OutputMode) -> Outcome {
    let algebra = match resolve_algebra(algebra_spec) {
        Ok(a) => a,
        Err(e) => return Outcome::fail(algebra_failure(e)),
    };
    let report = algebra.check_otft_identities(trials, seed);
    let mut out = String::new();
    match output {
        OutputMode::Table => {
            let _ = writeln!(out, "algebra = {algebra_spec}");
            let _ = writeln!(out, "seed = {seed}");
            let _ = writeln!(out, "trials = {trials}");
            for c in &report.checks {
                if c.failures.is_empty() {
                    let _ = writeln!(out, "identity {}: pass ({} trials)", c.name, c.trials);
                } else {
                    let _ = writeln!(
                        out,
                        "identity {}: fail ({} of {} trials)",
                        c.name,
                        c.failures.len(),
                        c.trials
                    );
                    for w in c.failures.iter().take(3) {
                        let _ = writeln!(out, "  witness: {w}");
                    }
                }
            }
            let _ = writeln!(out, "result: {}", if report.passed() { "pass" } else { "fail" });
        }
        OutputMode::Machine => {
            let _ = writeln!(out, "algebra\t{algebra_spec}");
            let _ = writeln!(out, "seed\t{seed}");
            let _ = writeln!(out, "trials\t{trials}");
            for c in &report.checks {
                let _ = writeln!(out, "identity\t{}\t{}\t{}", c.name, c.trials, c.failures.len());
            }
            let _ = writeln!(out, "result\t{}", if report.passed() { "pass" } else { "fail" });
        }
    }
    let exit = if report.passed() { EXIT_OK } else { EXIT_MATH };
    Outcome::report(out, exit)
}

/// `nontriviality`: inductive coefficient choice.
///
/// For each step `i`, the h^i coefficient of the series for the
/// coefficients chosen so far is examined; when it vanishes, `a_i` is set
/// to `(-1)^i`.  The final series must then be nonzero in every h-power
/// through the requested order.
pub fn cmd_nontriviality(
    max_order: usize,
    propagator: PropagatorConvention,
    output: OutputMode,
) -> Outcome {
    let run = || -> Result<(String, i32), Failure> {
        let algebra = xi_algebra();
        let v = odd_line_form().map_err(|e| Failure::Math(e.to_string()))?;
        let ctx = BvContext::new(&v, &algebra).map_err(bv_failure)?;
        let mut gauge = ctx.canonical_gauge().map_err(bv_failure)?;
        if propagator == PropagatorConvention::Literal {
            gauge.set_matched_pair_halving(true);
        }
        let mut chosen: Vec<(u32, Q)> = Vec::new();
        let mut steps: Vec<(usize, Q, Option<Q>)> = Vec::new();
        for i in 1..=max_order {
            let x = odd_power_element(ctx.word_algebra(), &chosen)
                .map_err(|e| Failure::Math(e.to_string()))?;
            let z = ctx
                .pairing_series_with_gauge(&x, i, &gauge, None)
                .map_err(bv_failure)?;
            let examined = z.coeff(i);
            if examined.is_zero() {
                let value = if i % 2 == 1 { qi(-1) } else { qi(1) };
                chosen.push((i as u32, value.clone()));
                steps.push((i, examined, Some(value)));
            } else {
                steps.push((i, examined, None));
            }
        }
        let x = odd_power_element(ctx.word_algebra(), &chosen)
            .map_err(|e| Failure::Math(e.to_string()))?;
        let series = ctx
            .pairing_series_with_gauge(&x, max_order, &gauge, None)
            .map_err(bv_failure)?;
        let degenerate: Vec<usize> = (1..=max_order)
            .filter(|k| series.coeff(*k).is_zero())
            .collect();
        let mut out = String::new();
        match output {
            OutputMode::Table => {
                for (i, examined, choice) in &steps {
                    match choice {
                        Some(v) => {
                            let _ = writeln!(
                                out,
                                "step {i}: h^{i} coefficient so far = {examined}; set a_{i} = {v}"
                            );
                        }
                        None => {
                            let _ = writeln!(
                                out,
                                "step {i}: h^{i} coefficient so far = {examined}; kept a_{i} = 0"
                            );
                        }
                    }
                }
                if chosen.is_empty() {
                    let _ = writeln!(out, "coefficients = (none)");
                } else {
                    let list: Vec<String> =
                        chosen.iter().map(|(i, q)| format!("{i}={q}")).collect();
                    let _ = writeln!(out, "coefficients = {}", list.join(","));
                }
                let _ = writeln!(out, "series = {series}");
                for k in &degenerate {
                    let _ = writeln!(out, "degenerate: h^{k} coefficient vanishes");
                }
            }
            OutputMode::Machine => {
                for (i, examined, choice) in &steps {
                    let _ = writeln!(
                        out,
                        "examined\t{}\t{}/{}",
                        i,
                        examined.numer(),
                        examined.denom()
                    );
                    if let Some(v) = choice {
                        let _ = writeln!(out, "choice\t{}\t{}/{}", i, v.numer(), v.denom());
                    }
                }
                out.push_str(&series.machine_lines());
                for k in &degenerate {
                    let _ = writeln!(out, "degenerate\t{k}");
                }
            }
        }
        let exit = if degenerate.is_empty() { EXIT_OK } else { EXIT_MATH };
        Ok((out, exit))
    };
    match run() {
        Ok((stdout, exit)) => Outcome::report(stdout, exit),
        Err(f) => Outcome::fail(f),
    }
}
