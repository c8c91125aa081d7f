mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{0}")]
    Core(#[from] pspin::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(pspin::Error::Domain(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pspin", version, about = "Complexity of the spherical pure p-spin landscape")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Output directory for artifacts and runs.jsonl.
    #[arg(long, global = true, env = "PSPIN_OUT")]
    pub out: Option<PathBuf>,
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Threshold energies E_inf, E_0 and u_th for a range of p.
    Thresholds {
        #[arg(long)]
        p_min: Option<u32>,
        #[arg(long)]
        p_max: Option<u32>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Pointwise complexity functions at (p, u) and optionally at an overlap r.
    Eval {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long, allow_hyphen_values = true)]
        u: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        r: Option<f64>,
        /// Second energy for the two-point exponent (defaults to u).
        #[arg(long, allow_hyphen_values = true)]
        u2: Option<f64>,
    },
    /// Maximizer of the diagonal two-point exponent over r in [-1, 1].
    Landscape {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long, allow_hyphen_values = true)]
        u: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        refine_tol: Option<f64>,
    },
    /// Certified sign checks.
    Certify {
        #[command(subcommand)]
        target: CertifyTarget,
    },
    /// Tables behind the figures.
    Figures {
        #[command(subcommand)]
        figure: FigureKind,
    },
    /// Random-matrix estimators.
    Rmt {
        #[command(subcommand)]
        experiment: RmtExperiment,
    },
    /// Kac-Rice moment estimates.
    Kacrice {
        #[command(subcommand)]
        experiment: KacRiceExperiment,
    },
    /// Direct critical-point enumeration experiments.
    Enumerate {
        #[command(subcommand)]
        experiment: EnumerateExperiment,
    },
}

#[derive(Debug, Subcommand)]
pub enum CertifyTarget {
    /// Negativity of Q_p^{u_th}(r) on (0, 1).
    Lemma5 {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        mesh: Option<usize>,
    },
    /// Negativity of the Q-tilde function on (0, 1).
    Tilde {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        mesh: Option<usize>,
    },
    /// The tau sequence and its monotonicity.
    Tau {
        #[arg(long)]
        p_max: Option<u32>,
    },
}

#[derive(Debug, Subcommand)]
pub enum FigureKind {
    /// Q_p^{u_th(p)}(r) for a range of p, columns r,p,Q.
    QCurves {
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        p_lo: Option<u32>,
        #[arg(long)]
        p_hi: Option<u32>,
    },
    /// Q-tilde on [0, 1], columns r,tilde_Q.
    TildeQ {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long)]
        points: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RmtExperiment {
    /// Eigenvalues of one GOE(n) sample and its distance to the semicircle.
    Spectrum {
        #[arg(long)]
        n: Option<usize>,
    },
    /// E|det(M - shift I)|^power for M ~ GOE(n).
    Det {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        shift: Option<f64>,
        #[arg(long)]
        power: Option<u32>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Correlated determinant product on a grid of rho.
    Ghat {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        shift: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rho: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Low-rank determinant perturbation bound.
    Perturb {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Largest-eigenvalue tail beyond m.
    Tail {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum KacRiceExperiment {
    /// First moment of the number of critical points below u.
    First {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        u: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Second moment restricted to an overlap interval.
    Second {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        u: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        overlap_lo: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        overlap_hi: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Per-N log-moments against the limiting exponents.
    Asymptote {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long, allow_hyphen_values = true)]
        u: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        second_samples: Option<usize>,
        #[arg(long)]
        second_max_n: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EnumerateExperiment {
    /// Critical points of one sampled Hamiltonian.
    Points {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Empirical moments of the count below u over sampled Hamiltonians.
    Concentration {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        u: Option<f64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Smallest critical value per N against the limiting ground state.
    GroundState {
        #[arg(long)]
        p: Option<u32>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        starts: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pspin: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
