use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qspir_core::audit::parse_audits;
use qspir_core::harness::{self, ExperimentConfig, RandomnessPolicy, Selection};
use qspir_core::pir::Database;
use qspir_core::protocol::{Detail, DrawPolicy, Protocol};
use qspir_core::transcript::export_transcript;
use qspir_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qspir", version, about = "Symmetric private information retrieval simulator and auditor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its report bundle.
    Run(ExperimentArgs),
    /// Run audits and print their reports.
    Audit(ExperimentArgs),
    /// Run an attack over every database and check that it goes unnoticed.
    Attack(AttackArgs),
    /// Measured communication against the closed forms.
    CommTable(CommArgs),
    /// Write the transcript of one run as JSON.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated audit names, or `all`.
    #[arg(long)]
    audits: Option<String>,
    /// Comma-separated database bit strings, or `all`.
    #[arg(long)]
    databases: Option<String>,
    /// Comma-separated 1-based indices, or `all`.
    #[arg(long)]
    indices: Option<String>,
    /// Replace exhaustive randomness with this many seeded draws.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cap_grid: Option<usize>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, default_value = "trivial1")]
    scheme: String,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value = "parity2")]
    attack: String,
    /// Servers measure every register they receive.
    #[arg(long)]
    countermeasure: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct CommArgs {
    /// Comma-separated protocol names; the default table when omitted.
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated database sizes.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    scheme: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    database: Database,
    #[arg(long, default_value_t = 1)]
    index: usize,
    /// Selects the user's randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record every branch and reduced state, not only the output.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn list<T>(text: &str, item: impl Fn(&str) -> Result<T>) -> Result<Selection<T>> {
    if text.trim() == "all" {
        return Ok(Selection::default());
    }
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect::<Result<_>>().map(Selection::Only)
}

fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let (Some(scheme), Some(n)) = (&a.scheme, a.n) else {
                return Err(Error::Config("give --config or both --scheme and --n".into()));
            };
            ExperimentConfig::new(scheme.clone(), n)
        }
    };
    if let Some(s) = &a.scheme {
        c.scheme = s.clone();
    }
    if let Some(n) = a.n {
        c.n = n;
    }
    if let Some(s) = &a.audits {
        c.audits = if s.trim() == "all" { Selection::default() } else { Selection::Only(parse_audits(s)?) };
    }
    if let Some(s) = &a.databases {
        c.databases = list(s, |t| t.parse())?;
    }
    if let Some(s) = &a.indices {
        c.indices = list(s, |t| t.parse().map_err(|_| Error::Config(format!("bad index `{t}`"))))?;
    }
    if let Some(samples) = a.samples {
        c.randomness = RandomnessPolicy::Seeded { samples };
    }
    if let Some(seed) = a.seed {
        c.seed = seed;
    }
    if let Some(out) = &a.out {
        c.out = Some(out.clone());
    }
    if let Some(cap) = a.cap_grid {
        c.cap_grid = cap;
    }
    Ok(c)
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    if let Some(path) = out {
        std::fs::write(path, text)?;
    }
    print!("{text}");
    Ok(())
}

fn parse_ns(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad size `{s}`"))))
        .collect()
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run(a) => {
            let bundle = harness::run_experiment(&experiment_config(&a)?)?;
            match a.format {
                Format::Json => print!("{}", bundle.to_json()? + "\n"),
                Format::Table => print!("{}", harness::render_bundle(&bundle)),
            }
            Ok(bundle.passed)
        }
        Command::Audit(a) => {
            let mut config = experiment_config(&a)?;
            let out = config.out.take();
            let bundle = harness::run_experiment(&config)?;
            let text = match a.format {
                Format::Json => json(&bundle.audits)?,
                Format::Table => harness::render_audits(&bundle.audits),
            };
            emit(&text, out.as_ref())?;
            Ok(bundle.passed)
        }
        Command::Attack(a) => {
            let summary = harness::attack_experiment(&a.scheme, a.n, &a.attack, a.countermeasure)?;
            let text = match a.format {
                Format::Json => json(&summary)?,
                Format::Table => harness::render_attack(&summary),
            };
            emit(&text, a.out.as_ref())?;
            Ok(summary.passed())
        }
        Command::CommTable(a) => {
            let rows = match (&a.scheme, &a.n) {
                (None, None) => harness::default_comm_table()?,
                (Some(s), Some(ns)) => {
                    let schemes: Vec<&str> = s.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                    harness::comm_table(&schemes, &parse_ns(ns)?)?
                }
                _ => return Err(Error::Config("give both --scheme and --n, or neither".into())),
            };
            let text = match a.format {
                Format::Json => json(&rows)?,
                Format::Table => harness::render_comm(&rows),
            };
            emit(&text, a.out.as_ref())?;
            Ok(rows.iter().all(|r| r.matches))
        }
        Command::Export(a) => {
            let protocol = Protocol::from_name(&a.scheme, a.n)?;
            let draw = protocol.draws(DrawPolicy::Seeded { seed: a.seed, samples: 1 })?.swap_remove(0);
            let detail = if a.full { Detail::FULL } else { Detail::OUTPUT };
            let t = protocol.run(&a.database, a.index, &draw, detail)?;
            if let Some(path) = &a.out {
                export_transcript(&t, path)?;
            }
            match a.format {
                Format::Json if a.out.is_none() => print!("{}", t.to_json()? + "\n"),
                Format::Json => {}
                Format::Table => {
                    println!("{} x={} i={} randomness={}", t.protocol, t.database, a.index, draw.randomness);
                    for s in &t.steps {
                        println!(
                            "{:<12} {:<8} moved [{}] sent {} returned {}",
                            s.label,
                            s.party.to_string(),
                            s.moved.join(","),
                            s.counters.sent,
                            s.counters.returned
                        );
                    }
                    println!("output p0={:.6} p1={:.6}", t.output.p0, t.output.p1);
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match harness::threads_from_env() {
        Ok(Some(t)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
