//! `apxlab <mesh|rates|afem|check> --config PATH [--out DIR] [--seed U64] [--max-cells N]`

mod config;
mod run;

use clap::{Parser, ValueEnum};
use config::{ExperimentConfig, RawConfig};
use run::Failure;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Mesh,
    Rates,
    Afem,
    Check,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Mesh => "mesh",
            Command::Rates => "rates",
            Command::Afem => "afem",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "apxlab", version, about = "Adaptive approximation experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Line-based `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config cell limit.
    #[arg(long = "max-cells")]
    max_cells: Option<usize>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CAP: u8 = 3;

fn threads() -> Result<usize, String> {
    match std::env::var("APXLAB_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("APXLAB_THREADS must be a positive integer, got `{v}`")),
    }
}

fn write_all(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn manifest(cli: &Cli, cfg: &ExperimentConfig, threads: usize, notes: &[String], status: &str) -> String {
    let mut s = format!(
        "apxlab {}\ncommand = {}\nconfig = {}\nthreads = {}\nstatus = {status}\n",
        env!("CARGO_PKG_VERSION"),
        cli.command.name(),
        cli.config.display(),
        if threads == 0 { "all".to_string() } else { threads.to_string() },
    );
    s.push_str("[resolved]\n");
    for (k, v) in cfg.resolved() {
        s.push_str(&format!("{k} = {v}\n"));
    }
    for w in &cfg.warnings {
        s.push_str(&format!("warning = {w}\n"));
    }
    for n in notes {
        s.push_str(&format!("note = {n}\n"));
    }
    s
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let n_threads = match threads() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if n_threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n_threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let cfg = RawConfig::load(&cli.config).and_then(|raw| ExperimentConfig::from_raw(&raw, cli.command.name()));
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.max_cells {
        cfg.max_cells = n;
    }
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    let result = match cli.command {
        Command::Mesh => run::mesh(&cfg),
        Command::Rates => run::rates(&cfg),
        Command::Afem => run::afem(&cfg),
        Command::Check => run::check(&cfg),
    };
    let (mut art, failure) = match result {
        Ok(x) => x,
        Err(f) => (run::Artifacts::default(), Some(f)),
    };
    let (code, status) = match &failure {
        None => (0, "ok".to_string()),
        Some(Failure::Config(m)) => (EXIT_CONFIG, format!("invalid config: {m}")),
        Some(Failure::Numerical(e)) => (EXIT_NUMERICAL, format!("numerical failure: {e}")),
        Some(Failure::Cap(e)) => (EXIT_CAP, format!("iteration cap: {e}")),
        Some(Failure::Checks(f)) => (EXIT_NUMERICAL, format!("{} checks failed: {}", f.len(), f.join("; "))),
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let m = manifest(&cli, &cfg, n_threads, &art.notes, &status);
    art.files.push(("manifest.txt".into(), m));
    if let Err(e) = write_all(&out, &art.files) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return ExitCode::from(EXIT_NUMERICAL);
    }
    for n in &art.notes {
        println!("{n}");
    }
    if code != 0 {
        eprintln!("{status}");
    }
    ExitCode::from(code)
}
