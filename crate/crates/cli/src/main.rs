use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use swid_cli::{cmd_check, cmd_identify, cmd_presets, cmd_simulate, cmd_swig, load, IdentifyArgs, Outcome};
use swid_core::dist::Backend;

#[derive(Parser)]
#[command(name = "swid", version, about = "Single world intervention graphs and identification checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the SWIG of the file's regime as DOT.
    Swig {
        file: PathBuf,
        /// Regime overriding the file's, e.g. `R=1,S=1,Z=z`.
        #[arg(long)]
        regime: Option<String>,
    },
    /// Check exchangeability conditions, claims and positivity.
    Check { file: PathBuf },
    /// Evaluate the g-formula and IPW functionals.
    Identify {
        file: PathBuf,
        /// Outcome levels, comma separated.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<String>>,
        /// Exit 5 when an exchangeability condition fails.
        #[arg(long)]
        strict: bool,
        /// Evaluate despite positivity failures.
        #[arg(long)]
        allow_nonpositive: bool,
    },
    /// Sample from the file's SCM and report plug-in estimates.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Write the dataset here; otherwise it goes to standard output and
        /// the estimates to standard error.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    Presets,
}

fn read(path: &Path) -> Result<String, Outcome> {
    std::fs::read_to_string(path).map_err(|e| Outcome {
        code: 1,
        stdout: String::new(),
        stderr: format!("{}: {e}", path.display()),
    })
}

fn emit(o: &Outcome) -> ExitCode {
    print!("{}", o.stdout);
    if !o.stderr.is_empty() {
        eprintln!("{}", o.stderr.trim_end());
    }
    ExitCode::from(o.code as u8)
}

fn run(cli: Cli) -> Result<Outcome, Outcome> {
    Ok(match cli.command {
        Command::Presets => cmd_presets(),
        Command::Swig { file, regime } => cmd_swig(&load(&read(&file)?)?, regime.as_deref()),
        Command::Check { file } => cmd_check(&load(&read(&file)?)?),
        Command::Identify {
            file,
            thresholds,
            strict,
            allow_nonpositive,
        } => {
            let backend = Backend::from_env().map_err(|e| Outcome {
                code: 1,
                stdout: String::new(),
                stderr: e.to_string(),
            })?;
            let name = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let args = IdentifyArgs {
                thresholds,
                strict,
                allow_nonpositive,
                backend,
            };
            cmd_identify(&load(&read(&file)?)?, &args, &name)
        }
        Command::Simulate { file, n, seed, out } => {
            let model = load(&read(&file)?)?;
            let (csv, mut outcome) = cmd_simulate(&model, n, seed);
            if let Some(csv) = csv {
                match out {
                    Some(path) => std::fs::write(&path, csv).map_err(|e| Outcome {
                        code: 1,
                        stdout: String::new(),
                        stderr: format!("{}: {e}", path.display()),
                    })?,
                    None => {
                        outcome.stderr = format!("{}{}", outcome.stdout, outcome.stderr);
                        outcome.stdout = csv;
                    }
                }
            }
            outcome
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(o) | Err(o) => emit(&o),
    }
}
