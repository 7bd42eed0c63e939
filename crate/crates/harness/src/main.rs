use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;
use ucpd_core::cmdp::inner_product;
use ucpd_core::oracle::solve_best_fixed;
use ucpd_harness::config::RunConfig;
use ucpd_harness::run::{run_experiment, FileObserver};
use ucpd_harness::sweep::{sweep, write_cells};

/// Online constrained MDP learner: runs, sweeps and the offline benchmark.
#[derive(Parser)]
#[command(name = "ucpd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one seeded run and write its per-episode log.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (horizon, seed) cell and fit power laws across horizons.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        /// Number of seeds, counted up from the config's seed.
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the best fixed occupancy in hindsight and its value.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Parse the config and check the scenario without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::Sweep { config, horizons, seeds, out } => run_sweep(&config, &horizons, seeds, out),
        Command::Oracle { config } => oracle(&config),
        Command::Validate { config } => validate(&config),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let config = RunConfig::load(path)?;
    let seed = seed.unwrap_or(config.seed);
    let dir = out.unwrap_or_else(|| config.out_dir.clone());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let scenario = config.scenario(config.horizon)?;
    std::fs::write(dir.join("scenario.kv"), scenario.to_kv())?;

    let trace = match config.trace_every {
        0 => None,
        k => Some((create(&dir.join("trace.jsonl"))?, k)),
    };
    let mut observer = FileObserver { csv: csv::Writer::from_writer(create(&dir.join("episodes.csv"))?), trace };
    info!("running T = {} with seed {seed} into {}", config.horizon, dir.display());
    let result = run_experiment(&config, &scenario, seed, &mut observer);
    observer.flush()?;
    let log = result?;
    let summary = log.summary.context("run finished without a summary")?;
    serde_json::to_writer_pretty(create(&dir.join("summary.json"))?, &summary)?;
    println!(
        "T = {}  seed = {}  regret = {:.6}  violation = {:.6}  epochs = {}  max ‖Q‖ = {:.6}  {:.2}s",
        summary.horizon,
        summary.seed,
        summary.regret,
        summary.violation,
        summary.epochs,
        summary.max_q_norm,
        summary.wall_time_s
    );
    Ok(())
}

fn run_sweep(path: &Path, horizons: &[usize], seeds: u64, out: Option<PathBuf>) -> anyhow::Result<()> {
    let config = RunConfig::load(path)?;
    let dir = out.unwrap_or_else(|| config.out_dir.join("sweep"));
    let seed_list: Vec<u64> = (0..seeds).map(|i| config.seed + i).collect();
    let report = sweep(&config, horizons, &seed_list, Some(&dir))?;
    write_cells(&report.cells, create(&dir.join("cells.csv"))?)?;
    serde_json::to_writer_pretty(create(&dir.join("sweep.json"))?, &report)?;

    println!("{:>8} {:>14} {:>14} {:>12} {:>12}", "T", "regret", "violation", "regret/T", "violation/T");
    for row in &report.horizons {
        println!(
            "{:>8} {:>14.6} {:>14.6} {:>12.3e} {:>12.3e}",
            row.horizon, row.mean_regret, row.mean_violation, row.regret_per_episode, row.violation_per_episode
        );
    }
    for (name, fit) in [("regret", report.regret_fit), ("violation", report.violation_fit), ("max ‖Q‖", report.max_q_fit)] {
        match fit {
            Some(f) => println!("{name}: p = {:.4}, R² = {:.4}", f.exponent, f.r_squared),
            None => println!("{name}: no fit (non-positive values)"),
        }
    }
    Ok(())
}

fn oracle(path: &Path) -> anyhow::Result<()> {
    let config = RunConfig::load(path)?;
    let scenario = config.scenario(config.horizon)?;
    let problem = scenario.hindsight(scenario.summed_losses()?)?;
    let star = solve_best_fixed(&problem)?;
    println!("value = {}", star.value);
    println!("duality gap = {:.3e}", star.lp.duality_gap);
    for (i, (g, c)) in problem.constraints.iter().zip(&problem.thresholds).enumerate() {
        println!("constraint {i}: ⟨g, θ*⟩ = {:.9}  c = {c}", inner_product(g, &star.theta)?);
    }
    let layout = &scenario.layout;
    for e in layout.edges() {
        let v = star.theta.values()[e.index];
        if v > 0.0 {
            println!("θ*({}, {}, {}) = {v}", e.state, e.action, e.next);
        }
    }
    Ok(())
}

fn validate(path: &Path) -> anyhow::Result<()> {
    let config = RunConfig::load(path)?;
    let scenario = config.scenario(config.horizon)?;
    let agent = config.agent_config(&scenario)?;
    let layout = &scenario.layout;
    println!("config ok: T = {}, seed = {}", config.horizon, config.seed);
    println!(
        "layers = {:?}, actions = {}, constraints = {}, thresholds = {:?}",
        layout.layer_sizes(),
        layout.actions(),
        scenario.constraints.count(),
        scenario.thresholds
    );
    println!("V = {}, alpha = {}, lambda = {}, zeta = {}", agent.v, agent.alpha, agent.lambda, agent.zeta);
    match ucpd_core::agent::epoch_bound(layout, config.horizon) {
        Some(b) => println!("epoch bound = {b:.3}"),
        None => println!("epoch bound not applicable (T < |S||A|)"),
    }
    Ok(())
}
