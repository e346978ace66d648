//! `ergolab`: runs one experiment from a JSON config and writes its report.
//!
//! Exit codes: 0 when every assertion passes, 2 when the experiment ran but
//! an assertion failed (the report is still written), 1 when the config or
//! the invocation is unusable. Errors go to stderr as one JSON line.

mod commands;
mod config;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use commands::Outcome;
use config::Context;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Scan,
    Regularity,
    Besicovitch,
    Dbar,
    Rhobar,
    Bfree,
    Entropy,
    Audit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Parser)]
#[command(name = "ergolab", version, about = "Run one ergolab experiment from a JSON config")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json, report.csv and report.meta.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, env = "ERGOLAB_THREADS")]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
}

/// A run that could not produce a result.
#[derive(Debug)]
pub struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl Display) -> Self {
        Self { kind, message: message.to_string() }
    }

    pub fn config(message: impl Display) -> Self {
        Self::new("config", message)
    }
}

impl From<ergolab::Error> for Failure {
    fn from(e: ergolab::Error) -> Self {
        Self::new(e.kind(), e)
    }
}

/// Parses the command config, applying the `--seed` override.
fn parse<T: DeserializeOwned>(raw: Value, seed: Option<u64>) -> Result<T, Failure> {
    let mut raw = raw;
    if let (Some(seed), Some(obj)) = (seed, raw.as_object_mut()) {
        obj.insert("seed".into(), json!(seed));
    }
    serde_json::from_value(raw).map_err(|e| Failure::config(format!("schema violation: {e}")))
}

fn resolved(cfg: &impl Serialize) -> Result<Value, Failure> {
    serde_json::to_value(cfg).map_err(|e| Failure::new("json", e))
}

fn context(base: &Path, seed: Option<u64>) -> Context {
    Context { base: base.to_path_buf(), rng: seed.map(ChaCha8Rng::seed_from_u64) }
}

fn dispatch(cli: &Cli, raw: Value, base: &Path) -> Result<(Value, Outcome), Failure> {
    macro_rules! run {
        ($ty:ty, $f:path) => {{
            let cfg: $ty = parse(raw, cli.seed)?;
            let mut ctx = context(base, cfg.seed);
            let outcome = $f(&cfg, &mut ctx)?;
            (resolved(&cfg)?, outcome)
        }};
    }
    Ok(match cli.command {
        Command::Scan => run!(config::ScanCommand, commands::scan),
        Command::Regularity => run!(config::RegularityCommand, commands::regularity),
        Command::Besicovitch => run!(config::BesicovitchCommand, commands::besicovitch),
        Command::Dbar => run!(config::DbarCommand, commands::dbar),
        Command::Rhobar => run!(config::RhobarCommand, commands::rhobar),
        Command::Entropy => run!(config::EntropyCommand, commands::entropy),
        Command::Audit => run!(config::AuditCommand, commands::audit),
        Command::Bfree => {
            let cfg: config::BfreeCommand = parse(raw, None)?;
            let outcome = commands::bfree(&cfg)?;
            (resolved(&cfg)?, outcome)
        }
    })
}

fn command_name(c: Command) -> String {
    c.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

fn write(path: PathBuf, contents: &str) -> Result<(), Failure> {
    std::fs::write(&path, contents).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let started = SystemTime::now();
    let clock = Instant::now();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::new("usage", "--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new("usage", e))?;
    }
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| Failure::config(format!("{}: {e}", cli.config.display())))?;
    let raw: Value =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", cli.config.display())))?;
    let base = cli.config.parent().unwrap_or(Path::new("."));
    let (config, outcome) = dispatch(cli, raw, base)?;

    let passed = outcome.assertions.iter().all(|a| a.passed);
    let report = json!({
        "command": command_name(cli.command),
        "version": ergolab::VERSION,
        "config": config,
        "result": outcome.result,
        "assertions": outcome.assertions,
        "passed": passed,
    });
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::new("io", format!("{}: {e}", cli.out.display())))?;
    if cli.format != Format::Csv {
        let body = serde_json::to_string_pretty(&report).map_err(|e| Failure::new("json", e))?;
        write(cli.out.join("report.json"), &(body + "\n"))?;
    }
    if cli.format != Format::Json {
        if let Some(csv) = &outcome.csv {
            write(cli.out.join("report.csv"), csv)?;
        }
    }
    let meta = json!({
        "started_unix_ms": started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
        "elapsed_ms": clock.elapsed().as_millis() as u64,
        "threads": rayon::current_num_threads(),
    });
    write(cli.out.join("report.meta.json"), &(meta.to_string() + "\n"))?;
    Ok(passed)
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let text: Vec<&str> = message
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            return fail(&Failure::new("usage", text.join(" ").trim_start_matches("error: ")));
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(f) => fail(&f),
    }
}
