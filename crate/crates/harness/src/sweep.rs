//! Horizon × seed grids and power-law fits of their summaries.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::{run_experiment, FileObserver, RunSummary};

/// `y ≈ c x^p` fitted by least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub r_squared: f64,
}

/// `None` with fewer than two points or any non-positive value.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<PowerFit> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let p = sxy / sxx;
    let b = my - p * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - b - p * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(PowerFit { exponent: p, coefficient: b.exp(), r_squared })
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonRow {
    pub horizon: usize,
    pub mean_regret: f64,
    pub mean_violation: f64,
    pub mean_max_q: f64,
    pub regret_per_episode: f64,
    pub violation_per_episode: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    /// Ordered by `(T, seed)`.
    pub cells: Vec<RunSummary>,
    pub horizons: Vec<HorizonRow>,
    pub regret_fit: Option<PowerFit>,
    pub violation_fit: Option<PowerFit>,
    pub max_q_fit: Option<PowerFit>,
}

/// Runs every `(T, seed)` cell in parallel. With `out`, each cell writes
/// `T<T>_seed<seed>.csv` there.
pub fn sweep(config: &RunConfig, horizons: &[usize], seeds: &[u64], out: Option<&Path>) -> anyhow::Result<SweepReport> {
    if horizons.len() < 2 {
        bail!("a sweep needs at least two horizons");
    }
    if seeds.is_empty() {
        bail!("a sweep needs at least one seed");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let cells: Vec<(usize, u64)> = horizons.iter().flat_map(|&t| seeds.iter().map(move |&s| (t, s))).collect();
    let results: Vec<anyhow::Result<RunSummary>> = cells
        .par_iter()
        .map(|&(horizon, seed)| {
            let scenario = config.scenario(horizon)?;
            let log = match out {
                Some(dir) => {
                    let path = dir.join(format!("T{horizon}_seed{seed}.csv"));
                    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    let mut obs: FileObserver<_, std::io::Sink> =
                        FileObserver { csv: csv::Writer::from_writer(BufWriter::new(file)), trace: None };
                    let result = run_experiment(config, &scenario, seed, &mut obs);
                    obs.flush()?;
                    result?
                }
                None => run_experiment(config, &scenario, seed, &mut ())?,
            };
            log.summary.context("run finished without a summary")
        })
        .collect();
    let cells: Vec<RunSummary> = results
        .into_iter()
        .zip(&cells)
        .map(|(r, (t, s))| r.with_context(|| format!("cell T = {t}, seed = {s}")))
        .collect::<anyhow::Result<_>>()?;
    Ok(summarize(cells, horizons))
}

pub fn summarize(cells: Vec<RunSummary>, horizons: &[usize]) -> SweepReport {
    let rows: Vec<HorizonRow> = horizons
        .iter()
        .map(|&horizon| {
            let group: Vec<&RunSummary> = cells.iter().filter(|c| c.horizon == horizon).collect();
            let n = group.len().max(1) as f64;
            let mean_regret = group.iter().map(|c| c.regret).sum::<f64>() / n;
            let mean_violation = group.iter().map(|c| c.violation).sum::<f64>() / n;
            let mean_max_q = group.iter().map(|c| c.max_q_norm).sum::<f64>() / n;
            HorizonRow {
                horizon,
                mean_regret,
                mean_violation,
                mean_max_q,
                regret_per_episode: mean_regret / horizon as f64,
                violation_per_episode: mean_violation / horizon as f64,
            }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.horizon as f64).collect();
    let fit = |f: fn(&HorizonRow) -> f64| fit_power_law(&xs, &rows.iter().map(f).collect::<Vec<_>>());
    SweepReport {
        regret_fit: fit(|r| r.mean_regret),
        violation_fit: fit(|r| r.mean_violation),
        max_q_fit: fit(|r| r.mean_max_q),
        horizons: rows,
        cells,
    }
}

pub fn write_cells<W: std::io::Write>(cells: &[RunSummary], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let xs = [1000.0, 4000.0, 16000.0];
        let sqrt: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.sqrt()).collect();
        let fit = fit_power_law(&xs, &sqrt).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.01);
        assert!((fit.coefficient - 3.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let linear: Vec<f64> = xs.iter().map(|x| 0.2 * x).collect();
        assert!((fit_power_law(&xs, &linear).unwrap().exponent - 1.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_power_law(&[1.0], &[1.0]).is_none());
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, 0.0]).is_none());
        assert!(fit_power_law(&[2.0, 2.0], &[1.0, 3.0]).is_none());
    }
}
