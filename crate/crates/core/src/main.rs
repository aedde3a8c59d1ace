use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use ddsim::scenario::table::write_atomic;
use ddsim::scenario::{
    dump_timeline, list_presets, parse_noise_flag, run_scenario, write_tables, ConfigFile, EnsembleSection, GridSpec,
    OutputSection, ScenarioConfig,
};
use ddsim::sequences::{parse_sequence_name, Family, SequenceSpec, Symmetry};
use ddsim::{DdError, Result};

/// Dynamical decoupling simulator.
///
/// Times are in microseconds, noise amplitudes in krad/s. `DDSIM_THREADS`
/// caps the worker pool.
#[derive(Parser)]
#[command(name = "ddsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a custom sweep and write its tables.
    Run(RunArgs),
    /// Sequence utilities.
    Sequence {
        #[command(subcommand)]
        action: SequenceAction,
    },
    /// List the available presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Sequence name (e.g. cpmg, xy8a, cdd3s, udd7, kdd+rp). Repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    sequence: Vec<String>,
    /// Inter-pulse spacing in us.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    cycles: Option<usize>,
    /// Flip-angle error: a value, a list `a,b,c` or a range `start:stop:count`.
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    /// Off-resonance error, same grammar as --epsilon.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// none | static[:sigma] | ou[:sigma[:tau_corr]] | vector:sx,sy,sz
    #[arg(long)]
    noise: Option<String>,
    /// Ensemble size.
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum SequenceAction {
    /// Print or save a sequence timeline.
    Dump(DumpArgs),
}

#[derive(Args)]
struct DumpArgs {
    /// Family (hahn, cp, cpmg, udd, xy4, xy8, xy16, cdd, kdd) or a full name like xy8a or cdd2s.
    #[arg(long)]
    name: String,
    /// UDD pulse count or CDD order.
    #[arg(long)]
    order: Option<usize>,
    /// sym or asym.
    #[arg(long)]
    symmetry: Option<String>,
    /// Replace each pi pulse with the five-pulse robust composite.
    #[arg(long)]
    robust: bool,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1)]
    cycles: usize,
    /// text or json.
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(args) => run(args),
        Command::Sequence { action: SequenceAction::Dump(args) } => dump(args),
        Command::Presets => {
            for (name, description) in list_presets() {
                println!("{name:<12} {description}");
            }
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        preset: args.preset,
        sequence: (!args.sequence.is_empty()).then_some(args.sequence),
        tau: args.tau,
        cycles: args.cycles,
        epsilon: args.epsilon.map(GridSpec::Text),
        delta: args.delta.map(GridSpec::Text),
        noise: args.noise.as_deref().map(parse_noise_flag).transpose()?,
        ensemble: args.ensemble.map(|size| EnsembleSection { size: Some(size), seed: None }),
        seed: args.seed,
        output: (args.out.is_some() || args.format.is_some())
            .then_some(OutputSection { path: args.out, format: args.format }),
        ..ConfigFile::default()
    };
    let cfg = ScenarioConfig::resolve(&file.merged(flags))?;
    let tables = run_scenario(&cfg)?;
    for path in write_tables(&tables, &cfg.output_path(), cfg.format)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn parse_symmetry(s: &str) -> Result<Symmetry> {
    match s.to_ascii_lowercase().as_str() {
        "s" | "sym" | "symmetric" => Ok(Symmetry::Symmetric),
        "a" | "asym" | "asymmetric" => Ok(Symmetry::Asymmetric),
        other => Err(DdError::Config(format!("unknown symmetry '{other}'"))),
    }
}

fn dump(args: DumpArgs) -> Result<()> {
    let mut spec = match args.name.parse::<Family>() {
        Ok(family) => SequenceSpec::new(family, args.tau, args.cycles),
        Err(_) => parse_sequence_name(&args.name, args.tau, args.cycles)?,
    };
    if let Some(order) = args.order {
        spec = spec.order(order);
    }
    if let Some(s) = &args.symmetry {
        spec = spec.symmetry(parse_symmetry(s)?);
    }
    if args.robust {
        spec = spec.robust(true);
    }
    let body = dump_timeline(&spec, &args.format)?;
    match &args.out {
        Some(path) => write_atomic(path, body.as_bytes()),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}
