//! One seeded run: `T` episodes of agent, environment and metrics.

use std::io::Write;
use std::time::Instant;

use anyhow::{anyhow, bail};
use serde::Serialize;
use ucpd_core::agent::epoch_bound;
use ucpd_core::cmdp::{inner_product, validate_occupancy, OccupancyMeasure};
use ucpd_core::env::{sample_episode, true_occupancy, Scenario};
use ucpd_core::oracle::{solve_best_fixed, MetricsAccumulator};
use ucpd_core::rng;

use crate::config::RunConfig;

/// One CSV row. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub t: usize,
    pub epoch: usize,
    /// Loss summed along the sampled path.
    pub loss_realized: f64,
    /// `⟨f^t, θ̄^t⟩`.
    pub loss_expected: f64,
    pub cum_regret: f64,
    pub violation_norm: f64,
    /// `‖Q(t)‖₂`.
    pub q_norm: f64,
    /// Largest confidence radius of the epoch.
    pub eps_max: f64,
    pub proj_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub horizon: usize,
    pub seed: u64,
    pub regret: f64,
    pub violation: f64,
    pub epochs: usize,
    pub epoch_bound: Option<f64>,
    /// Whether the true kernel was inside every epoch's confidence set.
    pub kernel_covered: bool,
    pub max_q_norm: f64,
    pub max_drift: f64,
    pub theta_star_value: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub records: Vec<EpisodeRecord>,
    pub summary: Option<RunSummary>,
}

/// A run that stopped early, with the episodes completed before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub log: RunLog,
    pub error: anyhow::Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run failed after {} episodes: {:#}", self.log.records.len(), self.error)
    }
}

impl std::error::Error for RunFailure {}

/// Receives every episode as it completes.
pub trait RunObserver {
    fn episode(&mut self, record: &EpisodeRecord, theta: &OccupancyMeasure) -> anyhow::Result<()>;
}

impl RunObserver for () {
    fn episode(&mut self, _: &EpisodeRecord, _: &OccupancyMeasure) -> anyhow::Result<()> {
        Ok(())
    }
}

/// Streams rows to CSV and, every `trace_every` episodes, `θ^t` to JSON lines.
pub struct FileObserver<W: Write, J: Write> {
    pub csv: csv::Writer<W>,
    pub trace: Option<(J, usize)>,
}

impl<W: Write, J: Write> FileObserver<W, J> {
    pub fn flush(&mut self) -> anyhow::Result<()> {
        self.csv.flush()?;
        if let Some((j, _)) = &mut self.trace {
            j.flush()?;
        }
        Ok(())
    }
}

impl<W: Write, J: Write> RunObserver for FileObserver<W, J> {
    fn episode(&mut self, record: &EpisodeRecord, theta: &OccupancyMeasure) -> anyhow::Result<()> {
        self.csv.serialize(record)?;
        if let Some((j, every)) = &mut self.trace {
            if record.t.is_multiple_of(*every) {
                serde_json::to_writer(&mut *j, &serde_json::json!({ "t": record.t, "theta": theta.values() }))?;
                writeln!(j)?;
            }
        }
        Ok(())
    }
}

pub fn write_csv<W: Write>(records: &[EpisodeRecord], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Plays `scenario.horizon` episodes with master seed `seed`.
///
/// Checked on every episode: the drift bound `2L`, `Q ≥ 0` and that `θ^t`
/// lies in the occupancy polytope. The epoch bound is checked at the end.
/// Any failure returns the partial log.
pub fn run_experiment(
    config: &RunConfig,
    scenario: &Scenario,
    seed: u64,
    observer: &mut dyn RunObserver,
) -> Result<RunLog, RunFailure> {
    let mut log = RunLog::default();
    match play(config, scenario, seed, observer, &mut log) {
        Ok(summary) => {
            log.summary = Some(summary);
            Ok(log)
        }
        Err(error) => Err(RunFailure { log, error }),
    }
}

fn play(
    config: &RunConfig,
    scenario: &Scenario,
    seed: u64,
    observer: &mut dyn RunObserver,
    log: &mut RunLog,
) -> anyhow::Result<RunSummary> {
    let started = Instant::now();
    let layout = &scenario.layout;
    let horizon = scenario.horizon;
    let star = solve_best_fixed(&scenario.hindsight(scenario.summed_losses()?)?)?;
    let mut agent = config.agent(scenario)?;
    let mut metrics = MetricsAccumulator::new(scenario.thresholds.clone(), star.theta.clone());
    let mut env_rng = rng::stream(seed, rng::ENV);
    let mut cons_rng = rng::stream(seed, rng::CONSTRAINTS);
    let mut act_rng = rng::stream(seed, rng::ACTIONS);

    let drift_bound = agent.drift_bound();
    let mut covered = true;
    let mut checked_epoch = 0;
    let mut max_q = 0.0f64;
    let mut max_drift = 0.0f64;
    for t in 1..=horizon {
        let epoch = agent.counters().epoch;
        if epoch != checked_epoch {
            covered &= agent.confidence_set().contains_kernel(&scenario.kernel, layout);
            checked_epoch = epoch;
        }
        let eps_max = agent.confidence_set().max_radius();

        let plan = agent.begin_episode()?;
        if plan.drift.abs() > drift_bound {
            bail!("episode {t}: dual drift {} exceeds 2L = {drift_bound}", plan.drift);
        }
        if agent.duals().values().iter().any(|&q| q < 0.0) {
            bail!("episode {t}: negative dual multiplier");
        }
        let report = validate_occupancy(&plan.theta, layout)?;
        if !report.is_ok() {
            bail!("episode {t}: θ^t leaves the occupancy polytope: {report:?}");
        }

        let theta_bar = true_occupancy(layout, &plan.policy, &scenario.kernel);
        let path = sample_episode(layout, &scenario.kernel, &plan.policy, &mut act_rng, &mut env_rng);
        let loss = scenario.loss.loss_at(t)?;
        let constraints = scenario.constraints.constraints_at(t, &mut cons_rng)?;
        metrics.record(&loss, &constraints, &theta_bar)?;

        let q_norm = agent.duals().norm();
        max_q = max_q.max(q_norm);
        max_drift = max_drift.max(plan.drift.abs());
        let record = EpisodeRecord {
            t,
            epoch,
            loss_realized: path.total(layout, loss.values())?,
            loss_expected: inner_product(&loss, &theta_bar)?,
            cum_regret: metrics.cumulative_regret(),
            violation_norm: metrics.violation(),
            q_norm,
            eps_max,
            proj_iters: plan.report.as_ref().map_or(0, |r| r.iterations),
        };
        observer.episode(&record, &plan.theta)?;
        log.records.push(record);
        agent.end_episode(&path, loss, constraints)?;
    }

    let epochs = log.records.last().map_or(0, |r| r.epoch);
    let bound = epoch_bound(layout, horizon);
    if let Some(b) = bound {
        if epochs as f64 > b {
            return Err(anyhow!("{epochs} epochs exceed the bound {b:.3}"));
        }
    }
    Ok(RunSummary {
        horizon,
        seed,
        regret: metrics.cumulative_regret(),
        violation: metrics.violation(),
        epochs,
        epoch_bound: bound,
        kernel_covered: covered,
        max_q_norm: max_q,
        max_drift,
        theta_star_value: star.value,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
