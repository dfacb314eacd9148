use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hubbard_work::approx::{approx_work, exact_ni_adiabatic_work, InitialEnergyForm, ModelPair, ThermalInputs};
use hubbard_work::drive::{DriveKind, DriveProtocol};
use hubbard_work::lattice::ChainSpec;
use hubbard_work::metrics::{adiabatic_work, sudden_quench_work, Method, WorkEntropyRecord};
use hubbard_work::persist::{load, persist, sidecar_path};
use hubbard_work::propagate::{StepPolicy, DEFAULT_STEPS};
use hubbard_work::sweep::{run_sweep, summarize, Extremum, SweepConfig};
use hubbard_work::validate::{run_validation, ValidationOptions};
use hubbard_work::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

/// Work extraction and entropy production in driven Hubbard chains.
#[derive(Parser)]
#[command(name = "hubbard-work", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one grid cell.
    Point(PointArgs),
    /// Evaluate a (drive, T, U, tau) grid and write CSV plus a JSON sidecar.
    Sweep(SweepArgs),
    /// Adiabatic and sudden-quench reference values of one cell.
    Limits(CellArgs),
    /// Run the built-in invariant checks.
    Validate(ValidateArgs),
    /// Print per-panel extrema of a saved sweep.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct CellArgs {
    /// Number of sites (half filling).
    #[arg(long = "L")]
    sites: usize,
    /// comb, mi, aef or custom
    #[arg(long)]
    drive: String,
    /// Custom drive: comma-separated initial potentials (J).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu0: Option<Vec<f64>>,
    /// Custom drive: comma-separated ramp amplitudes (J).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mutau: Option<Vec<f64>>,
    /// Temperature (J/k_B).
    #[arg(long = "T", conflicts_with = "beta", required_unless_present = "beta")]
    temperature: Option<f64>,
    /// Inverse temperature (1/J).
    #[arg(long)]
    beta: Option<f64>,
    /// On-site interaction (J).
    #[arg(long = "U", allow_hyphen_values = true)]
    interaction: f64,
    /// Ramp duration (1/J).
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
}

#[derive(Args)]
struct StepArgs {
    /// Midpoint slices per propagator.
    #[arg(long, conflicts_with = "tol")]
    steps: Option<usize>,
    /// Converge the step count to this energy tolerance (J) instead.
    #[arg(long)]
    tol: Option<f64>,
}

impl StepArgs {
    fn policy(&self) -> Option<StepPolicy> {
        match (self.steps, self.tol) {
            (Some(n), _) => Some(StepPolicy::Fixed(n)),
            (None, Some(t)) => Some(StepPolicy::Converged(t)),
            (None, None) => None,
        }
    }
}

#[derive(Args)]
struct PointArgs {
    #[command(flatten)]
    cell: CellArgs,
    /// exact, ni, exact-ni or all; repeatable.
    #[arg(long, default_value = "exact")]
    method: Vec<String>,
    #[command(flatten)]
    steps: StepArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML file with L, drives, temperatures, U_values | U_range + U_count,
    /// tau_values | tau_range + tau_count, steps | tol, methods, output.
    #[arg(long, required_unless_present = "sites")]
    config: Option<PathBuf>,
    /// Run the preset grid for this many sites (ignored with --config).
    #[arg(long = "L")]
    sites: Option<usize>,
    /// Restrict the drives; repeatable.
    #[arg(long)]
    drive: Vec<String>,
    /// Restrict the methods; repeatable.
    #[arg(long)]
    method: Vec<String>,
    #[command(flatten)]
    steps: StepArgs,
    /// CSV destination; the sidecar is written to <output>.json.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Suppress the progress counter.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Restrict the grid to 2- and 4-site chains.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 400)]
    steps: usize,
    /// Test hook: halve one slice of every interacting propagator.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Sweep CSV (its sidecar must sit next to it).
    input: PathBuf,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: Failure::exit_code(&e), message: e.to_string() }
    }
}

impl Failure {
    fn exit_code(e: &Error) -> u8 {
        match e {
            Error::Domain(_) | Error::Parse(_) => EXIT_USAGE,
            Error::Numerical(_) | Error::Convergence { .. } => EXIT_NUMERICAL,
            Error::Io(_) => EXIT_IO,
            Error::Cell { source, .. } => Failure::exit_code(source),
        }
    }
}

type Outcome = Result<(), Failure>;

fn parse_methods(names: &[String]) -> Result<Vec<Method>, Failure> {
    let mut out = Vec::new();
    for name in names {
        if name.eq_ignore_ascii_case("all") {
            out.extend(Method::ALL);
        } else {
            out.push(name.parse::<Method>().map_err(|e| Failure::usage(e.to_string()))?);
        }
    }
    out.dedup();
    Ok(out)
}

struct Cell {
    spec: ChainSpec,
    drive: DriveProtocol,
    beta: f64,
}

impl CellArgs {
    fn resolve(&self) -> Result<Cell, Failure> {
        let kind: DriveKind = self.drive.parse().map_err(|e: Error| Failure::usage(e.to_string()))?;
        let drive = match kind {
            DriveKind::Custom => {
                let (Some(mu0), Some(mutau)) = (&self.mu0, &self.mutau) else {
                    return Err(Failure::usage("--drive custom needs --mu0 and --mutau"));
                };
                DriveProtocol::custom(mu0.clone(), mutau.clone(), self.tau)?
            }
            _ => {
                if self.mu0.is_some() || self.mutau.is_some() {
                    return Err(Failure::usage("--mu0/--mutau only apply to --drive custom"));
                }
                DriveProtocol::preset(kind, self.sites, self.tau)?
            }
        };
        if drive.sites() != self.sites {
            return Err(Failure::usage(format!(
                "custom drive has {} sites but --L is {}",
                drive.sites(),
                self.sites
            )));
        }
        let spec = ChainSpec::half_filled(self.sites, self.interaction)?;
        let beta = match (self.temperature, self.beta) {
            (Some(t), _) if t > 0.0 && t.is_finite() => 1.0 / t,
            (Some(t), _) => return Err(Failure::usage(format!("--T must be positive, got {t}"))),
            (None, Some(b)) if b > 0.0 && b.is_finite() => b,
            (None, Some(b)) => return Err(Failure::usage(format!("--beta must be positive, got {b}"))),
            (None, None) => return Err(Failure::usage("give --T or --beta")),
        };
        Ok(Cell { spec, drive, beta })
    }

    fn header(&self, cell: &Cell) -> String {
        format!(
            "L: {}\ndrive: {}\nT: {} J/k_B\nbeta: {} 1/J\nU: {} J\ntau: {} 1/J",
            self.sites,
            cell.drive.kind,
            1.0 / cell.beta,
            cell.beta,
            self.interaction,
            cell.drive.tau
        )
    }
}

fn print_record(r: &WorkEntropyRecord) {
    println!("method: {}", r.method);
    println!("steps: {}", r.steps);
    println!("W_avg: {:.12e} J", r.w_avg);
    println!("W_ext: {:.12e} J", r.w_ext);
    println!("dF: {:.12e} J", r.d_f);
    println!("dS: {:.12e} dimensionless", r.d_s);
    println!("clamped: {}", r.clamped);
}

fn cmd_point(args: &PointArgs) -> Outcome {
    let methods = parse_methods(&args.method)?;
    let cell = args.cell.resolve()?;
    let policy = args.steps.policy().unwrap_or(StepPolicy::Fixed(DEFAULT_STEPS));
    policy.validate()?;
    println!("{}", args.cell.header(&cell));
    for m in methods {
        let r = approx_work(m.into(), &cell.spec, &cell.drive, cell.beta, policy)?;
        println!();
        print_record(&r);
    }
    Ok(())
}

fn cmd_limits(args: &CellArgs) -> Outcome {
    let cell = args.resolve()?;
    let models = ModelPair::new(&cell.spec, &cell.drive)?;
    let exact = ThermalInputs::from_beta(&models.exact, cell.beta)?;
    let ni = ThermalInputs::from_beta(&models.ni, cell.beta)?;
    let e = &models.exact;
    let n = &models.ni;
    let pops = &exact.state.populations;
    println!("{}", args.header(&cell));
    println!(
        "W_ext_adiabatic_exact: {:.12e} J",
        adiabatic_work(&e.initial, pops, &e.final_)?
    );
    println!(
        "W_ext_adiabatic_ni: {:.12e} J",
        adiabatic_work(&n.initial, &ni.state.populations, &n.final_)?
    );
    for (label, form) in [("", InitialEnergyForm::Trace), ("_population_form", InitialEnergyForm::Populations)] {
        let w = exact_ni_adiabatic_work(&e.initial, pops, &n.initial, &n.final_, form)?;
        println!("W_avg_adiabatic_exact_ni{label}: {w:.12e} J");
    }
    println!("W_avg_sudden_exact: {:.12e} J", sudden_quench_work(&exact.state, &e.h0, &e.hf)?);
    println!("W_avg_sudden_ni: {:.12e} J", sudden_quench_work(&ni.state, &n.h0, &n.hf)?);
    println!("W_avg_sudden_exact_ni: {:.12e} J", sudden_quench_work(&exact.state, &n.h0, &n.hf)?);
    println!("dF_exact: {:.12e} J", exact.d_f);
    println!("dF_ni: {:.12e} J", ni.d_f);
    Ok(())
}

fn extremum(e: &Extremum, unit: &str) -> String {
    let u = e.u.map_or("all".to_string(), |u| format!("{u}J"));
    format!("{:.6e}{unit}@U={u},tau={}/J", e.value, e.tau)
}

fn print_summary(result: &hubbard_work::sweep::SweepResult) {
    for s in summarize(result) {
        println!(
            "panel: drive={} T={} method={} cells={} W_ext_min={} W_ext_max={} dS_min={} dS_max={}",
            s.drive,
            s.temperature,
            s.method,
            s.cells,
            extremum(&s.w_ext_min, "J"),
            extremum(&s.w_ext_max, "J"),
            extremum(&s.d_s_min, ""),
            extremum(&s.d_s_max, ""),
        );
    }
}

fn cmd_sweep(args: &SweepArgs) -> Outcome {
    let mut config = match (&args.config, args.sites) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) })?;
            SweepConfig::from_toml_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(l)) => SweepConfig::preset(l),
        (None, None) => return Err(Failure::usage("give --config or --L")),
    };
    if !args.drive.is_empty() {
        config.drives = args
            .drive
            .iter()
            .map(|d| d.parse())
            .collect::<Result<_, Error>>()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    if !args.method.is_empty() {
        config.methods = parse_methods(&args.method)?;
    }
    if let Some(policy) = args.steps.policy() {
        config.steps = policy;
    }
    if let Some(out) = &args.output {
        config.output = Some(out.clone());
    }
    let output = config.output.clone().unwrap_or_else(|| PathBuf::from(format!("sweep-L{}.csv", config.sites)));
    config.validate()?;
    check_writable(&output)?;

    let quiet = args.quiet;
    let progress = move |done: usize, total: usize| {
        if !quiet {
            eprintln!("propagators {done}/{total}");
        }
    };
    let result = run_sweep(&config, &progress)?;
    persist(&result, &output).map_err(|e| Failure { code: EXIT_IO, message: format!("{}: {e}", output.display()) })?;
    println!("cells: {}", result.records.len());
    println!("wall_time: {:.3} s", result.provenance.wall_seconds);
    println!("threads: {}", result.provenance.threads);
    println!("csv: {}", output.display());
    println!("sidecar: {}", sidecar_path(&output).display());
    print_summary(&result);
    Ok(())
}

/// Fails early, before any computation, when the destination cannot be
/// created.
fn check_writable(path: &Path) -> Outcome {
    let io = |e: std::io::Error| Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) };
    let existed = path.exists();
    std::fs::OpenOptions::new().append(true).create(true).open(path).map_err(io)?;
    if !existed {
        std::fs::remove_file(path).map_err(io)?;
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Outcome {
    if args.steps == 0 {
        return Err(Failure::usage("--steps must be at least 1"));
    }
    let options = ValidationOptions { quick: args.quick, inject_fault: args.inject_fault, steps: args.steps };
    let report = run_validation(&options)?;
    for o in &report.outcomes {
        println!("{o}");
    }
    if report.passed() {
        println!("validation: passed");
        Ok(())
    } else {
        let failed: Vec<_> = report.outcomes.iter().filter(|o| !o.passed).map(|o| o.check.name()).collect();
        Err(Failure { code: EXIT_VALIDATION, message: format!("validation failed: {}", failed.join(", ")) })
    }
}

fn cmd_summarize(args: &SummarizeArgs) -> Outcome {
    let result = load(&args.input)?;
    println!("cells: {}", result.records.len());
    println!("config_hash: {}", result.provenance.config_hash);
    print_summary(&result);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Point(a) => cmd_point(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Limits(a) => cmd_limits(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Summarize(a) => cmd_summarize(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
