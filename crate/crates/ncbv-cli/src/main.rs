//! Thin flag-parsing shell over the command drivers in `ncbv_cli::run`.

use clap::{Parser, Subcommand};
use ncbv_cli::run::{
    self, ConventionFlag, MatrixArgs, OutputMode, PropagatorConvention, QmeArgs, QmeMode,
    SeriesRequest,
};

#[derive(Parser)]
#[command(
    name = "ncbv",
    version,
    about = "Exact pairing-series calculator for graded Frobenius algebras and cyclic-word master-equation solutions"
)]
struct Cli {
    /// Output style: 'table' or 'machine' (tab-separated lines).
    #[arg(long, global = true, default_value = "table")]
    output: String,

    /// Algebra: 'xi', 'matrix:n', 'tensor:a,b', or a config file path.
    #[arg(long, global = true, default_value = "xi")]
    algebra: String,

    /// Odd-power coefficients, e.g. '1=-1,2=1' (index i scales the
    /// (2i+1)-letter word).
    #[arg(long, global = true, default_value = "")]
    coeffs: String,

    /// Seed for randomized suites.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Parity convention for the coordinate word algebra: 'even' or 'odd'.
    #[arg(long, global = true, default_value = "even")]
    convention: String,

    /// Two-point normalization: 'paper' (matched pairs count once) or
    /// 'literal' (matched pairs count half).
    #[arg(long, global = true, default_value = "paper")]
    propagator: String,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the algebra axioms and contractibility.
    Validate,
    /// Compute the pairing series to the requested h-order.
    Pair {
        /// Truncation order in h.
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Explicit element text overriding --coeffs.
        #[arg(long)]
        element: Option<String>,
        /// Weight through which the input is declared complete.
        #[arg(long)]
        x_complete_through: Option<usize>,
    },
    /// Print the master-equation residual of the input element.
    QmeCheck {
        /// Weight cap for the residual.
        #[arg(long, default_value_t = 10)]
        weight: usize,
        /// Explicit element text overriding --coeffs.
        #[arg(long)]
        element: Option<String>,
        /// Residual quotient: 'gamma-only' or 'gamma-nu'.
        #[arg(long, default_value = "gamma-only")]
        qme_mode: String,
    },
    /// Run the seeded six-identity gluing suite on the algebra.
    Identities {
        /// Random trials per identity.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Choose coefficients inductively so every series term is nonzero.
    Nontriviality {
        /// Highest h-order to secure.
        #[arg(long, default_value_t = 1)]
        max_order: usize,
    },
    /// Pairing series over the n-by-n matrix extension of the algebra.
    Matrix {
        /// Matrix size (at least 1).
        #[arg(long)]
        n: usize,
        /// Truncation order in h.
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Cost ceiling for n^2*(order+1); exceeding it aborts early.
        #[arg(long, default_value_t = 64)]
        max_cost: usize,
    },
}

fn usage_error(msg: &str) -> ! {
    eprintln!("{msg}");
    std::process::exit(run::EXIT_USAGE);
}

fn main() {
    let cli = Cli::parse();

    let threads = std::env::var("NCBV_THREADS").ok();
    if let Err(msg) = run::validate_thread_env(threads.as_deref()) {
        usage_error(&msg);
    }

    let output = match OutputMode::from_flag(&cli.output) {
        Ok(o) => o,
        Err(m) => usage_error(&m),
    };
    let convention = match ConventionFlag::from_flag(&cli.convention) {
        Ok(c) => c,
        Err(m) => usage_error(&m),
    };
    let propagator = match PropagatorConvention::from_flag(&cli.propagator) {
        Ok(p) => p,
        Err(m) => usage_error(&m),
    };

    let outcome = match &cli.cmd {
        Cmd::Validate => run::cmd_validate(&cli.algebra, output),
        Cmd::Pair {
            order,
            element,
            x_complete_through,
        } => run::cmd_pair(
            &SeriesRequest {
                algebra: &cli.algebra,
                coeffs: &cli.coeffs,
                element: element.as_deref(),
                order: *order,
                convention,
                propagator,
                x_complete_through: *x_complete_through,
            },
            output,
        ),
        Cmd::QmeCheck {
            weight,
            element,
            qme_mode,
        } => {
            let mode = match QmeMode::from_flag(qme_mode) {
                Ok(m) => m,
                Err(m) => usage_error(&m),
            };
            run::cmd_qme_check(
                &QmeArgs {
                    coeffs: &cli.coeffs,
                    element: element.as_deref(),
                    weight: *weight,
                    mode,
                    convention,
                },
                output,
            )
        }
        Cmd::Identities { trials } => {
            run::cmd_identities(&cli.algebra, *trials, cli.seed, output)
        }
        Cmd::Nontriviality { max_order } => {
            run::cmd_nontriviality(*max_order, propagator, output)
        }
        Cmd::Matrix { n, order, max_cost } => run::cmd_matrix(
            &MatrixArgs {
                n: *n,
                coeffs: &cli.coeffs,
                order: *order,
                propagator,
                max_cost: *max_cost,
            },
            output,
        ),
    };

    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    std::process::exit(outcome.exit);
}
