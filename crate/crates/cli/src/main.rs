use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use wirehop::config::Config;
use wirehop::env::Layout;
use wirehop::harness::{self, ControllerKind, ExperimentSpec, NoiseMode, TrialResult, TuningGrid};
use wirehop::ppo::{checkpoint, train};

#[derive(Parser)]
#[command(name = "wirehop", version, about = "Wire-driven hopper: training, evaluation and comparison")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Ours1,
    Ours2,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Clean,
    Muscle,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a PPO policy and write metrics.csv and checkpoints to DIR.
    Train {
        #[arg(long, value_enum)]
        layout: LayoutArg,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate `basic` or `ckpt PATH` over the given seeds.
    Eval {
        #[arg(long, num_args = 1..=2, value_names = ["basic|ckpt", "PATH"])]
        controller: Vec<String>,
        #[arg(long, value_enum, default_value = "clean")]
        noise: NoiseArg,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 10_000)]
        max_steps: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write one JSONL trajectory per trial here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run the Basic / Ours-1 / Ours-2 x clean / muscle grid and write a CSV.
    Compare {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search Basic gains in the noiseless environment.
    TuneBasic {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2_000)]
        max_steps: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { layout, steps, seed, config, out } => {
            let mut cfg = Config::load(config.as_deref())?;
            cfg.env.layout = match layout {
                LayoutArg::Ours1 => Layout::Ours1,
                LayoutArg::Ours2 => Layout::Ours2,
            };
            if let Some(n) = steps {
                cfg.ppo.total_steps = n;
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            fs::write(out.join("config.txt"), cfg.to_kv_string())?;
            train::train(&cfg.ppo, &cfg.env, seed, Some(&out), |r| {
                println!(
                    "update {:>4}  steps {:>9}  reward {:>9.3}  len {:>7.1}  kl {:.4}  c {:.2}",
                    r.update, r.env_steps, r.mean_reward, r.mean_ep_len, r.kl, r.c
                );
            })?;
            println!("final checkpoint: {}", out.join("final.bin").display());
        }
        Cmd::Eval { controller, noise, trials, seeds, max_steps, config, dump } => {
            let cfg = Config::load(config.as_deref())?;
            let noise = match noise {
                NoiseArg::Clean => NoiseMode::Clean,
                NoiseArg::Muscle => NoiseMode::Muscle,
            };
            let seeds = seeds.unwrap_or_else(|| (0..trials as u64).collect());
            if seeds.len() != trials {
                bail!("--trials {trials} but {} seeds given", seeds.len());
            }
            if let Some(d) = &dump {
                fs::create_dir_all(d)?;
            }
            let results = match controller.as_slice() {
                [c] if c == "basic" => harness::run_cell(
                    ControllerKind::Basic,
                    noise,
                    &cfg.env,
                    &cfg.basic,
                    None,
                    &seeds,
                    max_steps,
                    dump.as_deref(),
                )?,
                [c, path] if c == "ckpt" => eval_checkpoint(Path::new(path), noise, &cfg, &seeds, max_steps, dump.as_deref())?,
                _ => bail!("--controller expects `basic` or `ckpt PATH`"),
            };
            print_trials(&results);
        }
        Cmd::Compare { spec, out } => {
            let spec = ExperimentSpec::from_file(&spec)?;
            let cfg = Config::load(spec.config.as_deref())?;
            let rows = harness::run_comparison(&spec, &cfg.env, &cfg.basic)?;
            harness::write_csv(&out, &rows)?;
            for r in rows.iter().filter(|r| r.row_type == "summary") {
                println!(
                    "{:<6} {:<6} survival mean {:>9.1}  var {:>12.1}",
                    r.controller,
                    r.noise,
                    r.survival_mean.unwrap_or(f64::NAN),
                    r.survival_var.unwrap_or(f64::NAN)
                );
            }
        }
        Cmd::TuneBasic { seed, max_steps, config } => {
            let cfg = Config::load(config.as_deref())?;
            let (gains, r) = harness::tune_basic(&TuningGrid::default(), &cfg.basic, &cfg.env, seed, max_steps)?;
            let mut out = String::new();
            gains.write_kv(&mut out);
            print!("{out}");
            println!("# survival {} jumps {} ({})", r.survival_steps, r.n_jumps, r.termination);
        }
    }
    Ok(())
}

fn eval_checkpoint(
    path: &Path,
    noise: NoiseMode,
    cfg: &Config,
    seeds: &[u64],
    max_steps: u64,
    dump: Option<&Path>,
) -> Result<Vec<TrialResult>> {
    let net = checkpoint::load(path)?;
    let kind = match Layout::from_obs_dim(net.input_dim) {
        Some(Layout::Ours1) => ControllerKind::Ours1,
        Some(Layout::Ours2) => ControllerKind::Ours2,
        None => bail!("checkpoint input width {} matches no observation layout", net.input_dim),
    };
    Ok(harness::run_cell(kind, noise, &cfg.env, &cfg.basic, Some(&net), seeds, max_steps, dump)?)
}

fn print_trials(results: &[TrialResult]) {
    println!("seed,survival_steps,n_jumps,termination,mean_reward");
    for r in results {
        println!("{},{},{},{},{:.6}", r.seed, r.survival_steps, r.n_jumps, r.termination, r.mean_reward);
    }
}
