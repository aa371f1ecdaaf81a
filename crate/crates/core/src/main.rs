use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use sacr2::env::Reacher;
use sacr2::expert::{generate_demos, save_demos};
use sacr2::gradcheck;
use sacr2::harness::{self, load_suite, preset, run_suite, write_svg, ExperimentConfig};

#[derive(Parser)]
#[command(name = "sacr2", version, about = "SAC with demonstrations and reward relabeling on a sparse-reward reacher")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations and write them to a file.
    GenDemos {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Take env and expert settings from this experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a multi-seed suite from a preset or a config file.
    #[command(group(ArgGroup::new("source").required(true).args(["preset", "config"])))]
    Run {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of seeds.
        #[arg(long)]
        seeds: Option<usize>,
        /// Base seed; seeds are base, base+1, ...
        #[arg(long)]
        seed: Option<u64>,
        /// Output root (overrides the config and the environment variable).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_env_steps: Option<usize>,
        #[arg(long)]
        stop_at_success: Option<f64>,
        /// Seeds run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Plot suites (directories written by `run`) into one SVG.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Legend labels, one per input; defaults to directory names.
        #[arg(long, num_args = 1..)]
        labels: Vec<String>,
    },
    /// Finite-difference checks of all loss gradients.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Parse and validate an experiment config.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    match cli.command {
        Command::GenDemos { n, seed, out, config } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p).map_err(|e| err(&e))?,
                None => ExperimentConfig::default(),
            };
            let env = Reacher::new(cfg.env.clone()).map_err(|e| err(&e))?;
            let demos = generate_demos(n, &env, &cfg.expert, seed).map_err(|e| err(&e))?;
            save_demos(&demos, &out).map_err(|e| err(&e))?;
            println!(
                "wrote {} demos ({} transitions, mean length N = {}) to {}",
                demos.episodes.len(),
                demos.transition_count(),
                demos.mean_length,
                out.display()
            );
        }
        Command::Run {
            preset: name,
            config,
            seeds,
            seed,
            out,
            max_env_steps,
            stop_at_success,
            jobs,
        } => {
            let mut cfg = match (name, config) {
                (Some(n), _) => preset(&n).map_err(|e| err(&e))?,
                (None, Some(p)) => ExperimentConfig::load(&p).map_err(|e| err(&e))?,
                (None, None) => unreachable!("clap enforces one source"),
            };
            if let Some(n) = seeds {
                cfg.n_seeds = n;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(m) = max_env_steps {
                cfg.max_env_steps = m;
            }
            if stop_at_success.is_some() {
                cfg.stop_at_success = stop_at_success;
            }
            let root = harness::output_root(&cfg, out.as_deref());
            let outcome = run_suite(&cfg, &root, jobs).map_err(|e| err(&e))?;
            harness::suite::describe(&outcome, std::io::stdout()).map_err(|e| err(&e))?;
            if !outcome.complete() {
                return Err(format!("suite {} is incomplete", outcome.dir.display()));
            }
        }
        Command::Plot { inputs, out, labels } => {
            if !labels.is_empty() && labels.len() != inputs.len() {
                return Err(format!(
                    "{} labels given for {} inputs",
                    labels.len(),
                    inputs.len()
                ));
            }
            let mut curves = Vec::new();
            for (i, dir) in inputs.iter().enumerate() {
                let mut c = load_suite(dir).map_err(|e| err(&e))?;
                if let Some(l) = labels.get(i) {
                    c.label = l.clone();
                }
                curves.push(c);
            }
            write_svg(&curves, &out).map_err(|e| err(&e))?;
            println!("wrote {}", out.display());
        }
        Command::Gradcheck { seed } => {
            let reports = gradcheck::run_all(seed).map_err(|e| err(&e))?;
            let mut worst: f64 = 0.0;
            for r in &reports {
                println!(
                    "{:<40} {:>4} params  max rel error {:.3e}",
                    r.name, r.checked, r.max_rel_error
                );
                worst = worst.max(r.max_rel_error);
            }
            println!("max relative error {worst:.3e} (tolerance {:.0e})", gradcheck::TOLERANCE);
            if worst > gradcheck::TOLERANCE {
                return Err(format!("gradient check failed: {worst:.3e}"));
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config).map_err(|e| err(&e))?;
            println!("{}: ok (preset {}, {} seeds)", config.display(), cfg.preset, cfg.n_seeds);
        }
    }
    Ok(ExitCode::SUCCESS)
}
