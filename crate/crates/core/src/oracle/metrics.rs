//! Regret and constraint violation of a played sequence of true occupancies.

use crate::cmdp::{inner_product, OccupancyMeasure, StageFunction};
use crate::error::{structural, Result};

/// Running sums behind `Regret(T)` and `Violation(T)`.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    thresholds: Vec<f64>,
    theta_star: OccupancyMeasure,
    /// `⟨f^t, θ̄^t⟩` per episode.
    pub alg_losses: Vec<f64>,
    /// `⟨f^t, θ*⟩` per episode.
    pub star_losses: Vec<f64>,
    pub cum_alg_loss: f64,
    pub cum_star_loss: f64,
    /// `Σ_t (⟨g_i^t, θ̄^t⟩ − c_i)` per constraint.
    pub slack_sums: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn new(thresholds: Vec<f64>, theta_star: OccupancyMeasure) -> Self {
        let slack_sums = vec![0.0; thresholds.len()];
        Self {
            thresholds,
            theta_star,
            alg_losses: Vec::new(),
            star_losses: Vec::new(),
            cum_alg_loss: 0.0,
            cum_star_loss: 0.0,
            slack_sums,
        }
    }

    /// Adds episode `t` given its loss, realized constraints and the true
    /// occupancy of the executed policy.
    pub fn record(&mut self, loss: &StageFunction, constraints: &[StageFunction], theta_bar: &OccupancyMeasure) -> Result<()> {
        if constraints.len() != self.thresholds.len() {
            return Err(structural("constraint count differs from the threshold count"));
        }
        let alg = inner_product(loss, theta_bar)?;
        let star = inner_product(loss, &self.theta_star)?;
        self.alg_losses.push(alg);
        self.star_losses.push(star);
        self.cum_alg_loss += alg;
        self.cum_star_loss += star;
        for ((sum, g), c) in self.slack_sums.iter_mut().zip(constraints).zip(&self.thresholds) {
            *sum += inner_product(g, theta_bar)? - c;
        }
        Ok(())
    }

    pub fn episodes(&self) -> usize {
        self.alg_losses.len()
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.cum_alg_loss - self.cum_star_loss
    }

    pub fn violation(&self) -> f64 {
        violation(&self.slack_sums)
    }
}

/// `Σ_t ⟨f^t, θ̄^t⟩ − ⟨Σ_t f^t, θ*⟩`.
pub fn regret(acc: &MetricsAccumulator, theta_star: &OccupancyMeasure, losses: &[StageFunction]) -> Result<f64> {
    if losses.len() != acc.episodes() {
        return Err(structural(format!(
            "{} losses for {} recorded episodes",
            losses.len(),
            acc.episodes()
        )));
    }
    let mut star = 0.0;
    for f in losses {
        star += inner_product(f, theta_star)?;
    }
    Ok(acc.cum_alg_loss - star)
}

/// `‖[s]₊‖₂` of the running constraint sums.
pub fn violation(slack_sums: &[f64]) -> f64 {
    slack_sums.iter().fold(0.0, |acc, s| acc + s.max(0.0).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::MdpLayout;

    #[test]
    fn violation_cases() {
        assert_eq!(violation(&[-1.0, -2.0]), 0.0);
        assert!(violation(&[]).is_sign_positive());
        assert_eq!(violation(&[3.0, -1.0]), 3.0);
        assert_eq!(violation(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn regret_cases() {
        let l = MdpLayout::new(&[1, 2, 1], 2).unwrap();
        let star = OccupancyMeasure::uniform(&l);
        let mut acc = MetricsAccumulator::new(vec![], star.clone());
        let f = StageFunction::constant(&l, 0.2);
        acc.record(&f, &[], &star).unwrap();
        assert!(regret(&acc, &star, std::slice::from_ref(&f)).unwrap().abs() < 1e-15);
        assert!(acc.cumulative_regret().abs() < 1e-15);
        assert!(regret(&acc, &star, &[]).is_err());

        // One-hot loss on edge 0: the algorithm puts 0.7 there, θ* puts 0.4.
        let mut one_hot = StageFunction::zeros(&l);
        one_hot.values_mut()[0] = 1.0;
        let mut alg = vec![0.0; l.edge_count()];
        let mut opt = vec![0.0; l.edge_count()];
        let first = l.edge_range(0).len();
        alg[0] = 0.7;
        alg[1] = 0.3;
        opt[0] = 0.4;
        opt[1] = 0.6;
        alg[first] = 1.0;
        opt[first] = 1.0;
        let alg = OccupancyMeasure::from_values(&l, alg).unwrap();
        let opt = OccupancyMeasure::from_values(&l, opt).unwrap();
        let mut acc = MetricsAccumulator::new(vec![], opt.clone());
        acc.record(&one_hot, &[], &alg).unwrap();
        assert!((acc.cumulative_regret() - 0.3).abs() < 1e-15);
        assert!((regret(&acc, &opt, &[one_hot]).unwrap() - 0.3).abs() < 1e-15);
    }
}
