use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use regseiqr::workbench::{self, ingest, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "regseiqr", version, about = "Regional SEIQR epidemic model fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to case data and write draws, diagnostics and summaries.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Simulate case counts from the built-in 2020 truth.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Last simulated date (default 2020-12-31).
        #[arg(long)]
        end: Option<NaiveDate>,
    },
    /// Forecast from a finished fit.
    Forecast {
        /// Output directory of a previous `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        horizon: NaiveDate,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute trajectory bands and density tables for a fit.
    Summarize {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduction-number table, optionally with a provincial fit's row.
    R0 {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        provincial: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute convergence diagnostics; exits 2 when not converged.
    Diagnose {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and print it with every default filled in.
    ValidateConfig {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const NOT_CONVERGED: u8 = 2;

fn load_config(path: Option<&Path>) -> regseiqr::Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> regseiqr::Result<ExitCode> {
    match cli.command {
        Command::Fit {
            config,
            data,
            out,
            seed,
            mode,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                cfg.sampler.seed = seed;
            }
            if let Some(mode) = mode {
                cfg.mode = mode;
            }
            let series = ingest(&data, &cfg.region_names())?;
            let summary = workbench::run_fit(&cfg, &series, &out)?;
            for u in &summary.units {
                eprintln!(
                    "{}: {:.1}s, max R-hat {}, {} divergent",
                    u.label,
                    u.seconds,
                    u.max_rhat.map_or("NA".into(), |r| format!("{r:.4}")),
                    u.divergent
                );
            }
            for note in &summary.notes {
                eprintln!("note: {note}");
            }
            eprintln!("wrote {}", out.display());
            Ok(if summary.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(NOT_CONVERGED)
            })
        }
        Command::Simulate {
            config,
            out,
            seed,
            end,
        } => {
            let cfg = load_config(config.as_deref())?;
            let series = workbench::run_simulate(&cfg, seed, end, &out)?;
            eprintln!("simulated {} regions into {}", series.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Forecast {
            fit,
            horizon,
            data,
            out,
        } => {
            let out = out.unwrap_or_else(|| fit.clone());
            workbench::forecast_fit(&fit, data.as_deref(), horizon, &out)?;
            eprintln!("wrote forecasts to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { fit, data, out } => {
            let out = out.unwrap_or_else(|| fit.clone());
            workbench::summarize_fit(&fit, data.as_deref(), &out)?;
            eprintln!("wrote summaries to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::R0 {
            fit,
            provincial,
            out,
        } => {
            let out = out.unwrap_or_else(|| fit.clone());
            let table = workbench::r0_fit(&fit, provincial.as_deref(), &out)?;
            if table.provincial.is_none() {
                eprintln!("note: no provincial row; pass --provincial with a provincial fit");
            }
            let mut stdout = std::io::stdout().lock();
            table.write_csv(&mut stdout)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnose { fit, out } => {
            let out = out.unwrap_or_else(|| fit.clone());
            let cfg = RunConfig::load(&fit.join(workbench::CONFIG_FILE))?;
            let mut ok = true;
            for (label, d) in workbench::diagnose_fit(&fit, &out)? {
                let converged = d.converged(cfg.rhat_threshold);
                ok &= converged;
                println!(
                    "{label}: max R-hat {}, {} divergent, converged {converged}",
                    d.max_rhat().map_or("NA".into(), |r| format!("{r:.4}")),
                    d.divergent
                );
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(NOT_CONVERGED)
            })
        }
        Command::ValidateConfig { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let text = cfg.to_toml()?;
            match out {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| regseiqr::Error::io(&path, e))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
