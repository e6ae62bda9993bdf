use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pjac::constructions::{assemble_counterexample, write_grid_csv};
use pjac::energy::DEFAULT_CELLS;
use pjac::experiments::{
    datum_preset, energy_gap_csv, moser_trace_csv, run_check_map, run_energy_gap, run_moser_demo, run_nonuniqueness,
    run_zhukovsky, to_json, zhukovsky_csv, Competitor, Construction,
};
use pjac::Error;

/// Prescribed-Jacobian experiments: energy gaps, Zhukovsky audits, non-uniqueness data,
/// map audits and Moser corrections.
#[derive(Parser, Debug)]
#[command(name = "pjac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Energy exponent: the integrand is |Du|^{2p}.
    #[arg(long, global = true, default_value_t = 1.0)]
    p: f64,
    /// Comma-separated epsilon values in (0, 1].
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Resolution: quadrature cells (energy-gap, nonuniqueness), radii (zhukovsky),
    /// samples (check-map) or field cells (moser-demo).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Output file, written atomically; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for quasi-random sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Moser correction of the wedge map in the competitor.
    #[arg(long, global = true, value_enum, default_value_t = Switch::Off)]
    corrector: Switch,
    /// JSON instead of CSV.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    Off,
    On,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Radial against non-symmetric competitor energies; CSV `epsilon,p,E_radial,E_competitor,ratio`.
    EnergyGap,
    /// Circle-energy comparison; CSV `r,lhs,rhs,ratio,lambda_star`.
    Zhukovsky {
        /// `one`, `power:<eps>`, `gaussian[:<width>]` or a JSON datum file.
        #[arg(long, default_value = "one")]
        datum: String,
        /// `phi:<k>` or `rotated:<k>:<alpha>`.
        #[arg(long, default_value = "phi:1")]
        competitor: String,
    },
    /// Constraint audit, inner-energy blow-up fit and rotated-family energy spread (JSON).
    Nonuniqueness,
    /// Jacobian, derivative, continuity and isoperimetry audits of a construction (JSON).
    CheckMap {
        /// eta, shear, wedge, counterexample or stretching.
        construction: String,
        /// Also write `x,y,ux,uy,J` samples of the counterexample at 100^2 cell centres of [-3, 3]^2.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Constant-Jacobian correction of the wedge map; CSV `iter,max_residual,mass_error`.
    MoserDemo {
        #[arg(long, default_value_t = 3)]
        iterations: usize,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::PreconditionViolated(_) | Error::InvalidDatum(_) | Error::NonPositiveRadius(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

fn eps_list(common: &Common, default: &[f64]) -> Vec<f64> {
    if common.eps.is_empty() {
        default.to_vec()
    } else {
        common.eps.clone()
    }
}

fn single_eps(common: &Common, default: f64) -> Result<f64, Failure> {
    match common.eps.as_slice() {
        [] => Ok(default),
        [e] => Ok(*e),
        _ => Err(Failure::Config("this subcommand takes a single --eps value".into())),
    }
}

/// Write to a sibling temporary file, then rename over the target.
fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(text.as_bytes()).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(path) => write_atomic(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    if !(c.p >= 1.0) {
        return Err(Failure::Config(format!("--p must be at least 1, got {}", c.p)));
    }
    if c.grid == Some(0) {
        return Err(Failure::Config("--grid must be positive".into()));
    }
    let text = match &cli.command {
        Command::EnergyGap => {
            let eps = eps_list(c, &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5]);
            let rows = run_energy_gap(&eps, c.p, c.grid.unwrap_or(DEFAULT_CELLS), c.corrector == Switch::On)?;
            if c.json {
                to_json(&rows)
            } else {
                energy_gap_csv(&rows)
            }
        }
        Command::Zhukovsky { datum, competitor } => {
            let f = datum_preset(datum)?;
            let competitor: Competitor = competitor.parse()?;
            let rows = run_zhukovsky(&f, competitor, c.p, c.grid.unwrap_or(32))?;
            if c.json {
                to_json(&rows)
            } else {
                zhukovsky_csv(&rows)
            }
        }
        Command::Nonuniqueness => to_json(&run_nonuniqueness(c.grid.unwrap_or(64))?),
        Command::CheckMap { construction, dump } => {
            let which: Construction = construction.parse()?;
            let eps = single_eps(c, 0.5)?;
            let audit = run_check_map(which, eps, c.grid.unwrap_or(100_000), c.seed)?;
            if let Some(path) = dump {
                if which != Construction::Counterexample {
                    return Err(Failure::Config("--dump is available for the counterexample only".into()));
                }
                let mut buf = Vec::new();
                write_grid_csv(&assemble_counterexample(eps, None)?, -3.0, 3.0, 100, &mut buf)?;
                write_atomic(path, &String::from_utf8_lossy(&buf))?;
            }
            to_json(&audit)
        }
        Command::MoserDemo { iterations } => {
            let eps = single_eps(c, 0.5)?;
            let outcome = run_moser_demo(eps, *iterations, c.grid.unwrap_or(128))?;
            if c.json {
                to_json(&outcome.trace)
            } else {
                moser_trace_csv(&outcome)
            }
        }
    };
    emit(c, &text)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("pjac: configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("pjac: numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
