//! `krylov-lab` command-line front end.
//!
//! Exit codes: 0 when every enabled bound check holds, 1 on a bound
//! violation, 2 on input or configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use krylov_lab::experiment::{
    evaluate, preset, run_batch, run_experiment, sharpness_preset, ExperimentConfig, RunOutcome,
};
use krylov_lab::LabError;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "KRYLOV_LAB_OUT";

#[derive(Parser)]
#[command(name = "krylov-lab", version, about = "FOM/GMRES convergence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more JSON experiment configs; several run concurrently.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a named preset (fig1-left, fig2-right, sharpness-4, ...).
    Preset {
        name: String,
        /// Matrix Market file for the `*-right` presets.
        #[arg(long)]
        mm_path: Option<PathBuf>,
        /// Print the resolved config as JSON instead of running it.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the all-ones instance where the bound is attained at step k.
    Sharpness {
        k: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the checks of a config without writing any files.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Clone)]
struct Overrides {
    /// Output directory; otherwise the config's, then $KRYLOV_LAB_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Skip SVG output.
    #[arg(long)]
    no_plot: bool,
    /// Disable the second Gram-Schmidt pass.
    #[arg(long)]
    no_reorth: bool,
    /// Record error norms and check the error bound.
    #[arg(long)]
    errors: bool,
}

impl Overrides {
    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        } else if cfg.output_dir.is_none() {
            cfg.output_dir = std::env::var_os(OUT_ENV).map(PathBuf::from);
        }
        if let Some(k) = self.k_max {
            cfg.k_max = k;
        }
        cfg.plot &= !self.no_plot;
        cfg.reorthogonalize &= !self.no_reorth;
        cfg.errors |= self.errors;
        cfg
    }
}

fn report_error(context: Option<&Path>, err: &LabError) {
    // Io and Parse errors already carry the path.
    let context = context.filter(|_| !matches!(err, LabError::Io { .. } | LabError::Parse { .. }));
    let msg = match context {
        Some(p) => format!("error: {}: {err}", p.display()),
        None => format!("error: {err}"),
    };
    eprintln!("{msg}");
}

fn finish(outcome: &RunOutcome) -> u8 {
    println!("{}", outcome.summary());
    if outcome.passed() {
        0
    } else {
        eprintln!("{}: bound violated", outcome.name);
        1
    }
}

fn single(cfg: Result<ExperimentConfig, LabError>, write: bool) -> u8 {
    let result = cfg.and_then(|cfg| {
        if write {
            run_experiment(&cfg)
        } else {
            evaluate(&cfg)
        }
    });
    match result {
        Ok(outcome) => finish(&outcome),
        Err(e) => {
            report_error(None, &e);
            2
        }
    }
}

fn run_many(paths: &[PathBuf], overrides: &Overrides) -> u8 {
    let mut cfgs = Vec::new();
    for path in paths {
        match ExperimentConfig::from_file(path) {
            Ok(cfg) => cfgs.push(overrides.apply(cfg)),
            Err(e) => {
                report_error(Some(path), &e);
                return 2;
            }
        }
    }
    let results = match run_batch(&cfgs) {
        Ok(r) => r,
        Err(e) => {
            report_error(None, &e);
            return 2;
        }
    };
    // Input errors take precedence over bound violations.
    let mut code = 0;
    for (path, result) in paths.iter().zip(results) {
        code = code.max(match result {
            Ok(outcome) => finish(&outcome),
            Err(e) => {
                report_error(Some(path), &e);
                2
            }
        });
    }
    code
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run { configs, overrides } => run_many(&configs, &overrides),
        Command::Preset {
            name,
            mm_path,
            print_config,
            overrides,
        } => {
            let cfg = preset(&name, mm_path.as_deref()).map(|c| overrides.apply(c));
            if print_config {
                match cfg {
                    Ok(cfg) => {
                        println!("{}", cfg.to_json());
                        0
                    }
                    Err(e) => {
                        report_error(None, &e);
                        2
                    }
                }
            } else {
                single(cfg, true)
            }
        }
        Command::Sharpness { k, overrides } => {
            single(sharpness_preset(k).map(|c| overrides.apply(c)), true)
        }
        Command::Verify { config, overrides } => {
            match ExperimentConfig::from_file(&config) {
                Ok(cfg) => single(Ok(overrides.apply(cfg)), false),
                Err(e) => {
                    report_error(Some(&config), &e);
                    2
                }
            }
        }
    };
    ExitCode::from(code)
}
