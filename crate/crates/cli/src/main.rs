#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use thiserror::Error;
use timebin::bsm::{eq1_efficiency, error_rates, BsmOutcome};
use timebin::decoy::{analyze_counts, DEFAULT_CUTOFF, DEFAULT_SIGMAS};
use timebin::detector::{deadtime_from_physics, interarrival_histogram, REFERENCE_KAPPA};
use timebin::montecarlo::run_parallel;
use timebin::optics::{attenuate, fock_distribution, fock_pattern_oracle, pattern_distribution, Analyzer, FockState};
use timebin::states::{Basis, Qubit};
use timebin::{CountsTable, RunConfig};

use output::{file_name, manifest_path, resolve_out, RunManifest, Staged};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] timebin::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use timebin::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Core(e) => match e {
                E::Config { .. } | E::Domain(_) | E::Precondition(_) => 2,
                E::Parse { .. } | E::IncompleteData(_) | E::Infeasible { .. } | E::Merge(_) => 3,
                E::Numerical(_) | E::Truncation { .. } => 4,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "timebin", version, about = "Time-bin Bell-state measurement simulator and decoy-state analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo simulation producing a counts table.
    Simulate(SimulateArgs),
    /// Raw error rates and projection efficiencies from a counts table.
    Analyze(AnalyzeArgs),
    /// LP decoy-state bounds on single-photon yields and error rates.
    Decoy(DecoyArgs),
    /// Inter-arrival histogram of a dead-time limited detector.
    Deadtime(DeadtimeArgs),
    /// Compares the analytic click model against the Fock-space oracle.
    Oracle(OracleArgs),
    /// Prints the resolved run configuration as JSON.
    Config(ShowConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `detectors.0.tau_ns=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = config::parse_override)]
    overrides: Vec<(String, Value)>,
}

impl ConfigArgs {
    fn given(&self) -> bool {
        self.config.is_some() || !self.overrides.is_empty()
    }

    fn load(&self, seed: Option<u64>, cycles: Option<u64>) -> Result<RunConfig, CliError> {
        config::load(self.config.as_deref(), &self.overrides, seed, cycles)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CountsFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Total cycles; scientific notation such as `1e7` is accepted.
    #[arg(long, value_parser = config::parse_cycles)]
    cycles: Option<u64>,
    /// Counts file; the other format and a manifest are written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: CountsFormat,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Counts table (CSV or JSON).
    counts: PathBuf,
    /// Configuration supplying detector efficiencies for the comparison line.
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
}

#[derive(Args)]
struct DecoyArgs {
    /// Counts table (CSV or JSON).
    counts: PathBuf,
    /// Photon-number cutoff per source.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: usize,
    /// Statistical confidence in standard deviations.
    #[arg(long, default_value_t = DEFAULT_SIGMAS)]
    sigmas: f64,
    /// Configuration supplying channel transmissions; enables efficiency
    /// bounds.
    #[command(flatten)]
    cfg: ConfigArgs,
    /// JSON report file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
}

#[derive(Args)]
struct DeadtimeArgs {
    /// Incident detection rate in Hz.
    #[arg(long, default_value_t = 1e6)]
    rate: f64,
    /// Dead-time in ns; derived from the load resistance when omitted.
    #[arg(long, conflicts_with = "load_resistance")]
    tau: Option<f64>,
    /// Load resistance in ohm.
    #[arg(long)]
    load_resistance: Option<f64>,
    /// Kinetic inductance relative to the reference detector.
    #[arg(long, default_value_t = 1.0)]
    kinetic_inductance: f64,
    /// Lower limit on the dead-time in ns.
    #[arg(long, default_value_t = 0.0)]
    pileup_floor: f64,
    /// Simulated duration in s.
    #[arg(long, default_value_t = 0.1)]
    duration: f64,
    #[arg(long, default_value_t = 1.0)]
    bin_width: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShowConfigArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = config::parse_cycles)]
    cycles: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scenario {
    SinglePhotonIdeal,
    WeakCoherentXBasis,
    WeakCoherentZBasis,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(value_enum)]
    scenario: Scenario,
    /// Mean photon number per pulse for the coherent scenarios.
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Total photon-number cutoff of the Fock expansion.
    #[arg(long, default_value_t = 10)]
    cutoff: usize,
    /// Configuration supplying sources, channels and detectors.
    #[command(flatten)]
    cfg: ConfigArgs,
}

const ORACLE_TOLERANCE: f64 = 1e-6;
const ORACLE_PHASES: [f64; 4] = [0.0, 0.9, 2.1, 4.0];

fn read_counts(path: &Path) -> Result<CountsTable, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read counts file {}: {e}", path.display())))?;
    CountsTable::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let started = output::now();
    let cfg = args.cfg.load(args.seed, args.cycles)?;
    let clock = Instant::now();
    let mut table = run_parallel(&cfg)?;
    let secs = clock.elapsed().as_secs_f64();

    let render = |t: &CountsTable, f: CountsFormat| match f {
        CountsFormat::Csv => t.to_csv(),
        CountsFormat::Json => t.to_json(),
    };
    match &args.out {
        Some(out) => {
            let out = resolve_out(out);
            let (other_fmt, ext) = match args.format {
                CountsFormat::Csv => (CountsFormat::Json, "json"),
                CountsFormat::Json => (CountsFormat::Csv, "csv"),
            };
            let companion = out.with_extension(ext);
            let mpath = manifest_path(&out);
            table.metadata.manifest = Some(file_name(&mpath));

            let mut manifest = RunManifest::new("simulate", started);
            manifest.config_digest = Some(cfg.digest());
            manifest.seed = Some(cfg.seed);
            manifest.cycles = Some(cfg.cycles);
            manifest.inputs = args.cfg.config.iter().map(|p| p.display().to_string()).collect();
            manifest.outputs = vec![out.display().to_string(), companion.display().to_string()];
            manifest.config = serde_json::to_value(&cfg).ok();

            let mut staged = Staged::default();
            staged.add(&out, &render(&table, args.format))?;
            staged.add(&companion, &render(&table, other_fmt))?;
            staged.add(&mpath, &manifest.finish())?;
            staged.commit()?;
            eprintln!("wrote {}, {} and {}", out.display(), companion.display(), mpath.display());
        }
        None => print!("{}", render(&table, args.format)),
    }

    eprintln!(
        "simulated {} cycles in {:.2} s ({:.3e} cycles/s), digest {}",
        cfg.cycles,
        secs,
        cfg.cycles as f64 / secs.max(1e-9),
        &cfg.digest()[..12]
    );
    eprintln!("{:<6}{:>3}{:>3}{:>8}{:>8}{:>14}{:>10}{:>10}", "basis", "a", "b", "mu_a", "mu_b", "cycles", "psi-", "psi+");
    for (k, t) in table.iter() {
        eprintln!(
            "{:<6}{:>3}{:>3}{:>8}{:>8}{:>14}{:>10}{:>10}",
            k.basis().to_string(),
            k.state_a.to_string(),
            k.state_b.to_string(),
            k.mu_a,
            k.mu_b,
            t.n_cycles,
            t.n_psiminus,
            t.n_psiplus
        );
    }
    Ok(())
}

/// Writes `body` to `out` with a manifest, or prints it.
fn emit(out: Option<&Path>, body: &str, mut manifest: RunManifest) -> Result<(), CliError> {
    match out {
        Some(out) => {
            let out = resolve_out(out);
            let mpath = manifest_path(&out);
            manifest.outputs = vec![out.display().to_string()];
            let mut staged = Staged::default();
            staged.add(&out, body)?;
            staged.add(&mpath, &manifest.finish())?;
            staged.commit()?;
            eprintln!("wrote {} and {}", out.display(), mpath.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let started = output::now();
    let counts = read_counts(&args.counts)?;
    let cfg = args.cfg.load(None, None)?;
    let mut report = error_rates(&counts);
    report.eq1_reference = Some(eq1_efficiency(cfg.detectors[0].eta, cfg.detectors[1].eta));
    let body = match args.format {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    };
    let mut manifest = RunManifest::new("analyze", started);
    manifest.config_digest = Some(counts.metadata.config_digest.clone()).filter(|d| !d.is_empty());
    manifest.inputs = vec![args.counts.display().to_string()];
    emit(args.out.as_deref(), &body, manifest)
}

fn decoy(args: DecoyArgs) -> Result<(), CliError> {
    let started = output::now();
    let counts = read_counts(&args.counts)?;
    let transmissions = if args.cfg.given() {
        let cfg = args.cfg.load(None, None)?;
        let digest = &counts.metadata.config_digest;
        if !digest.is_empty() && *digest != cfg.digest() {
            eprintln!("warning: counts were produced with a different configuration (digest {digest})");
        }
        Some(cfg.transmissions())
    } else {
        None
    };
    let report = match analyze_counts(&counts, args.cutoff, args.sigmas, transmissions) {
        Err(timebin::Error::Infeasible { violated }) => {
            let mut msg = String::from("decoy constraints are infeasible for these counts\ninfeasibility certificate:");
            for v in &violated {
                let _ = write!(msg, "\n  violated: {v}");
            }
            msg.push_str("\nlarger --sigmas or more cycles per setting usually restore feasibility");
            return Err(CliError::Data(msg));
        }
        other => other?,
    };
    let json = report.to_json();
    let mut manifest = RunManifest::new("decoy", started);
    manifest.config_digest = Some(counts.metadata.config_digest.clone()).filter(|d| !d.is_empty());
    manifest.inputs = vec![args.counts.display().to_string()];
    manifest.inputs.extend(args.cfg.config.iter().map(|p| p.display().to_string()));
    match (&args.out, args.format) {
        (Some(out), _) => {
            print!("{}", report.to_table());
            emit(Some(out), &json, manifest)
        }
        (None, ReportFormat::Json) => emit(None, &json, manifest),
        (None, ReportFormat::Table) => emit(None, &report.to_table(), manifest),
    }
}

fn deadtime(args: DeadtimeArgs) -> Result<(), CliError> {
    let started = output::now();
    let tau = match (args.tau, args.load_resistance) {
        (Some(t), _) => t,
        (None, Some(r)) => deadtime_from_physics(args.kinetic_inductance, r, REFERENCE_KAPPA, args.pileup_floor)?,
        (None, None) => return Err(CliError::Config("one of --tau or --load-resistance is required".into())),
    };
    let h = interarrival_histogram(args.rate, tau, args.duration, args.bin_width, args.seed)?;
    for w in &h.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "tau {tau} ns: {} detections, first occupied bin starts at {} ns",
        h.detections,
        h.first_nonzero_bin().map_or_else(|| "n/a".to_string(), |i| h.bin_start(i).to_string())
    );
    let mut manifest = RunManifest::new("deadtime", started);
    manifest.seed = Some(args.seed);
    emit(args.out.as_deref(), &h.to_csv(), manifest)
}

/// `(ψ⁻, ψ⁺)` for ideal single photons.
fn ideal_projection(a: Qubit, b: Qubit) -> (f64, f64) {
    match (a.basis(), a == b) {
        (Basis::Z, true) => (0.0, 0.0),
        (Basis::Z, false) => (0.5, 0.5),
        (Basis::X, true) => (0.0, 0.5),
        (Basis::X, false) => (0.5, 0.0),
    }
}

fn oracle(args: OracleArgs) -> Result<(), CliError> {
    let basis = match args.scenario {
        Scenario::WeakCoherentZBasis => Basis::Z,
        _ => Basis::X,
    };
    let mut worst: f64 = 0.0;
    println!("{:<6}{:>8}{:>14}{:>14}{:>14}{:>14}", "a b", "theta", "psi- model", "psi+ model", "psi- oracle", "psi+ oracle");
    if args.scenario == Scenario::SinglePhotonIdeal {
        let analyzer = Analyzer::ideal();
        for basis in Basis::ALL {
            for a in basis.states() {
                for b in basis.states() {
                    let (m, p) = ideal_projection(a, b);
                    for theta in ORACLE_PHASES {
                        let s = FockState::single_photons(a.unit_amplitudes(), b.unit_amplitudes());
                        let d = fock_distribution(&s, &analyzer, theta)?;
                        let (om, op) = (d.outcome_prob(BsmOutcome::PsiMinus), d.outcome_prob(BsmOutcome::PsiPlus));
                        worst = worst.max((om - m).abs()).max((op - p).abs());
                        if theta == 0.0 {
                            println!("{:<6}{:>8.3}{:>14.9}{:>14.9}{:>14.9}{:>14.9}", format!("{a} {b}"), theta, m, p, om, op);
                        }
                    }
                }
            }
        }
    } else {
        let cfg = args.cfg.load(None, None)?;
        let analyzer = cfg.analyzer();
        for a in basis.states() {
            for b in basis.states() {
                let sa = attenuate(&cfg.sources[0].emit(a, args.mu)?, &cfg.channels[0]);
                let sb = attenuate(&cfg.sources[1].emit(b, args.mu)?, &cfg.channels[1]);
                for theta in ORACLE_PHASES {
                    let model = pattern_distribution(&sa, &sb, &analyzer, theta)?;
                    let fock = match fock_pattern_oracle(&sa, &sb, &analyzer, theta, args.cutoff) {
                        Ok(d) => d,
                        Err(e @ timebin::Error::Truncation { .. }) => {
                            println!("FAIL: {e}");
                            return Err(CliError::Numerical(format!("oracle comparison failed: {e}")));
                        }
                        Err(e) => return Err(e.into()),
                    };
                    worst = worst.max(model.max_abs_diff(&fock));
                    println!(
                        "{:<6}{:>8.3}{:>14.6e}{:>14.6e}{:>14.6e}{:>14.6e}",
                        format!("{a} {b}"),
                        theta,
                        model.outcome_prob(BsmOutcome::PsiMinus),
                        model.outcome_prob(BsmOutcome::PsiPlus),
                        fock.outcome_prob(BsmOutcome::PsiMinus),
                        fock.outcome_prob(BsmOutcome::PsiPlus)
                    );
                }
            }
        }
    }
    println!("max |model - oracle| over all patterns: {worst:.3e}");
    if worst <= ORACLE_TOLERANCE {
        println!("PASS at {ORACLE_TOLERANCE:.0e}");
        Ok(())
    } else {
        println!("FAIL at {ORACLE_TOLERANCE:.0e}");
        Err(CliError::Numerical(format!("oracle discrepancy {worst:.3e} exceeds {ORACLE_TOLERANCE:.0e}")))
    }
}

fn show_config(args: ShowConfigArgs) -> Result<(), CliError> {
    let cfg = args.cfg.load(args.seed, args.cycles)?;
    println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
    eprintln!("digest {}", cfg.digest());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Decoy(a) => decoy(a),
        Command::Deadtime(a) => deadtime(a),
        Command::Oracle(a) => oracle(a),
        Command::Config(a) => show_config(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
