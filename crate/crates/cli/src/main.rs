use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use aoi_core::env::RewardSign;
use aoi_core::harness::{self, ExperimentConfig, FormulaMode};

#[derive(Parser)]
#[command(name = "aoi", version, about = "Age-of-information analysis, simulation and DQN offloading")]
struct Cli {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Use the index-excluded waiting-time forms instead of the FCFS and max-entropy ones.
    #[arg(long, global = true)]
    literal_paper_formulas: bool,
    /// Reward `+Σ age / (J T)` instead of its negative.
    #[arg(long, global = true)]
    literal_reward_sign: bool,
    /// Train for 10 000 episodes.
    #[arg(long, global = true)]
    full_budget: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form age decomposition and feasibility of the base scenario.
    Analytic,
    /// Monte-Carlo and simulator checks against the closed forms.
    Validate,
    /// Train the configured learned methods once and evaluate them.
    Train,
    /// Run the configured sweep and write figure files.
    Sweep,
    /// Rebuild figure files and summary from an existing sweep directory.
    Report,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let loaded = harness::load_config(path)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            loaded.config
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if cli.literal_paper_formulas {
        cfg.formulas = FormulaMode::Literal;
    }
    if cli.literal_reward_sign {
        cfg.reward_sign = RewardSign::Positive;
    }
    if cli.full_budget {
        cfg.agent.episodes = 10_000;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    match cli.command {
        Command::Report => {
            let (cfg, rows, curves) = harness::load_run_dir(out)
                .with_context(|| format!("reading sweep results from {}", out.display()))?;
            print!("{}", harness::emit_report(&cfg, &rows, &curves, out)?);
        }
        Command::Analytic => {
            let cfg = load(cli)?;
            let r = harness::analytic_report(&cfg)?;
            harness::write_analytic(&r, out)?;
            for (j, s) in r.breakdown.sources.iter().enumerate() {
                println!("source {j}: {:.6} s", s.total);
            }
            println!("mean age {:.6} s, normalized over T={}: {:.6}", r.system.raw, r.slots, r.system.normalized);
            for c in &r.constraints {
                println!("{}: {} (slack {:.6})", c.constraint, if c.satisfied { "ok" } else { "violated" }, c.slack);
            }
        }
        Command::Validate => {
            let cfg = load(cli)?;
            let rows = harness::validate(&cfg, cfg.seeds[0])?;
            harness::write_validation(&rows, out)?;
            for r in &rows {
                println!("{:<55} ref {:>12.6e} est {:>12.6e} rel {:.4}", r.quantity, r.reference, r.estimate, r.rel_error());
            }
        }
        Command::Train => {
            let cfg = load(cli)?;
            let report = harness::train_agents(&cfg, cfg.seeds[0])?;
            harness::write_training(&report, out)?;
            for (m, _, eval) in &report.runs {
                println!("{m}: mean age {:.6} s", eval.mean_aoi);
            }
            println!("random: mean age {:.6} s", report.random.mean_aoi);
        }
        Command::Sweep => {
            let cfg = load(cli)?;
            let result = harness::run_sweep(&cfg, cli.workers)?;
            print!("{}", harness::write_sweep(&cfg, &result, out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
