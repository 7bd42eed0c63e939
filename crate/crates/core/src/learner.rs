//! Visit counters, the doubling epoch schedule, and the L1 confidence set
//! around the empirical kernel.

use crate::cmdp::{MdpLayout, OccupancyMeasure, TransitionModel};
use crate::error::{parameter, Result};

/// Global (before the current epoch) and local (within it) visit counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counters {
    /// `N(s, a)`, per pair.
    pub global_pairs: Vec<u64>,
    /// `M(s, a, s')`, per edge.
    pub global_edges: Vec<u64>,
    /// `n(s, a)`.
    pub local_pairs: Vec<u64>,
    /// `m(s, a, s')`.
    pub local_edges: Vec<u64>,
    /// Epoch index `ℓ`, starting at 1.
    pub epoch: usize,
}

impl Counters {
    pub fn new(layout: &MdpLayout) -> Self {
        Self {
            global_pairs: vec![0; layout.pair_count()],
            global_edges: vec![0; layout.edge_count()],
            local_pairs: vec![0; layout.pair_count()],
            local_edges: vec![0; layout.edge_count()],
            epoch: 1,
        }
    }

    /// Counts one observed transition in the current epoch.
    pub fn record_transition(&mut self, layout: &MdpLayout, state: usize, action: usize, next: usize) -> Result<()> {
        let edge = layout.edge_index(state, action, next)?;
        let pair = layout.pair_index(state, action);
        self.local_pairs[pair] += 1;
        self.local_edges[edge] += 1;
        Ok(())
    }

    /// True iff some pair visited in this epoch has `n(s,a) ≥ N(s,a)`.
    pub fn epoch_trigger(&self) -> bool {
        self.local_pairs
            .iter()
            .zip(&self.global_pairs)
            .any(|(&n, &total)| n > 0 && n >= total)
    }

    /// Folds the local counts into the global ones and opens the next epoch.
    pub fn advance_epoch(&mut self, layout: &MdpLayout, horizon: usize, zeta: f64) -> Result<ConfidenceSet> {
        for (g, l) in self.global_pairs.iter_mut().zip(&mut self.local_pairs) {
            *g += std::mem::take(l);
        }
        for (g, l) in self.global_edges.iter_mut().zip(&mut self.local_edges) {
            *g += std::mem::take(l);
        }
        self.epoch += 1;
        ConfidenceSet::from_counters(layout, self, horizon, zeta)
    }

    pub fn total_local(&self) -> u64 {
        self.local_pairs.iter().sum()
    }
}

/// L1 radius `sqrt(2 |S_{k+1}| ln((T+1)|S||A|/ζ) / max(1, N))`.
pub fn confidence_radius(
    visits: u64,
    next_layer_size: usize,
    horizon: usize,
    total_states: usize,
    total_actions: usize,
    zeta: f64,
) -> Result<f64> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(parameter(format!("zeta {zeta} outside (0, 1)")));
    }
    if horizon == 0 {
        return Err(parameter("horizon must be at least 1"));
    }
    let log_term =
        ((horizon as f64 + 1.0) * total_states as f64 * total_actions as f64 / zeta).ln();
    Ok((2.0 * next_layer_size as f64 * log_term / visits.max(1) as f64).sqrt())
}

/// Empirical kernel and per-pair L1 radii defining the optimistic polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    /// `P̂(s' | s, a)` in edge order; rows of unvisited pairs are all zero.
    pub p_hat: Vec<f64>,
    /// `ε(s, a)` per pair.
    pub epsilon: Vec<f64>,
    pub epoch: usize,
    pub horizon: usize,
    pub zeta: f64,
}

impl ConfidenceSet {
    pub fn from_counters(layout: &MdpLayout, counters: &Counters, horizon: usize, zeta: f64) -> Result<Self> {
        let mut p_hat = vec![0.0; layout.edge_count()];
        let mut epsilon = vec![0.0; layout.pair_count()];
        for pair in 0..layout.pair_count() {
            let visits = counters.global_pairs[pair];
            let width = layout.successors_of_pair(pair);
            let start = layout.pair_edge_start(pair);
            let denom = visits.max(1) as f64;
            for j in 0..width {
                p_hat[start + j] = counters.global_edges[start + j] as f64 / denom;
            }
            epsilon[pair] = confidence_radius(
                visits,
                width,
                horizon,
                layout.state_count(),
                layout.actions(),
                zeta,
            )?;
        }
        Ok(Self { p_hat, epsilon, epoch: counters.epoch, horizon, zeta })
    }

    /// Degenerate set pinned to a known kernel with radius `radius` everywhere.
    pub fn around_kernel(kernel: &TransitionModel, layout: &MdpLayout, radius: f64, horizon: usize, zeta: f64) -> Self {
        Self {
            p_hat: kernel.values().to_vec(),
            epsilon: vec![radius; layout.pair_count()],
            epoch: 1,
            horizon,
            zeta,
        }
    }

    pub fn max_radius(&self) -> f64 {
        self.epsilon.iter().copied().fold(0.0, f64::max)
    }

    pub fn p_hat_row<'a>(&'a self, layout: &MdpLayout, pair: usize) -> &'a [f64] {
        let start = layout.pair_edge_start(pair);
        &self.p_hat[start..start + layout.successors_of_pair(pair)]
    }

    /// Whether `‖P(·|s,a) − P̂(·|s,a)‖₁ ≤ ε(s,a)` for every pair.
    pub fn contains_kernel(&self, kernel: &TransitionModel, layout: &MdpLayout) -> bool {
        (0..layout.pair_count()).all(|pair| {
            let dist: f64 = kernel
                .row(layout, pair)
                .iter()
                .zip(self.p_hat_row(layout, pair))
                .map(|(p, q)| (p - q).abs())
                .sum();
            dist <= self.epsilon[pair]
        })
    }
}

/// Outcome of a confidence-set membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    /// `max_{s,a} [Σ_{s'} |θ(s,a,s') − P̂(s'|s,a) m(s,a)| − ε(s,a) m(s,a)]₊`.
    pub worst_residual: f64,
    pub worst_pair: Option<usize>,
}

impl Membership {
    pub fn holds(&self, tol: f64) -> bool {
        self.worst_residual <= tol
    }
}

/// Tests the L1 ratio constraint in denominator-cleared form; pairs with no
/// mass pass vacuously.
pub fn membership_check(theta: &OccupancyMeasure, cs: &ConfidenceSet, layout: &MdpLayout) -> Membership {
    let mass = theta.pair_mass(layout);
    let mut out = Membership { worst_residual: 0.0, worst_pair: None };
    for pair in 0..layout.pair_count() {
        let start = layout.pair_edge_start(pair);
        let deviation: f64 = cs
            .p_hat_row(layout, pair)
            .iter()
            .enumerate()
            .map(|(j, p)| (theta.values()[start + j] - p * mass[pair]).abs())
            .sum();
        let residual = deviation - cs.epsilon[pair] * mass[pair];
        if residual > out.worst_residual {
            out = Membership { worst_residual: residual, worst_pair: Some(pair) };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> MdpLayout {
        MdpLayout::new(&[1, 2, 1], 2).unwrap()
    }

    #[test]
    fn recording() {
        let l = layout();
        let mut c = Counters::new(&l);
        c.record_transition(&l, 0, 1, 2).unwrap();
        let pair = l.pair_index(0, 1);
        assert_eq!(c.local_pairs[pair], 1);
        c.record_transition(&l, 0, 1, 1).unwrap();
        assert_eq!(c.local_pairs[pair], 2);
        assert_eq!(c.local_edges[l.edge_index(0, 1, 1).unwrap()], 1);
        assert_eq!(c.local_edges[l.edge_index(0, 1, 2).unwrap()], 1);
        assert!(c.global_pairs.iter().all(|&n| n == 0));
        assert!(c.record_transition(&l, 0, 0, 3).is_err());
    }

    #[test]
    fn trigger_is_literal() {
        let l = layout();
        let mut c = Counters::new(&l);
        assert!(!c.epoch_trigger());
        c.local_pairs[0] = 1;
        assert!(c.epoch_trigger());
        c.global_pairs.fill(3);
        c.local_pairs.fill(2);
        assert!(!c.epoch_trigger());
        c.local_pairs[3] = 3;
        assert!(c.epoch_trigger());
    }

    #[test]
    fn advance_builds_empirical_rows() {
        let l = layout();
        let mut c = Counters::new(&l);
        for _ in 0..3 {
            c.record_transition(&l, 0, 0, 1).unwrap();
        }
        c.record_transition(&l, 0, 0, 2).unwrap();
        let cs = c.advance_epoch(&l, 9, 0.1).unwrap();
        assert_eq!(c.epoch, 2);
        assert_eq!(cs.epoch, 2);
        assert_eq!(cs.p_hat_row(&l, l.pair_index(0, 0)), &[0.75, 0.25]);
        assert_eq!(cs.p_hat_row(&l, l.pair_index(0, 1)), &[0.0, 0.0]);
        assert!(c.local_pairs.iter().all(|&n| n == 0));
        assert_eq!(c.global_pairs[l.pair_index(0, 0)], 4);
        assert!(cs.epsilon.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn radius_values() {
        let r1 = confidence_radius(1, 2, 9, 4, 2, 0.1).unwrap();
        assert!((r1 - (4.0 * 800f64.ln()).sqrt()).abs() < 1e-12);
        assert!((r1 - 5.1710).abs() < 1e-4);
        let r4 = confidence_radius(4, 2, 9, 4, 2, 0.1).unwrap();
        assert!((r4 - r1 / 2.0).abs() < 1e-12);
        assert_eq!(confidence_radius(0, 2, 9, 4, 2, 0.1).unwrap(), r1);
        let mut prev = f64::INFINITY;
        for n in 0..50 {
            let r = confidence_radius(n, 3, 100, 8, 2, 0.05).unwrap();
            assert!(r <= prev);
            prev = r;
        }
        assert!(confidence_radius(1, 2, 9, 4, 2, 1.5).is_err());
        assert!(confidence_radius(1, 2, 9, 4, 2, 0.0).is_err());
    }

    #[test]
    fn membership_cases() {
        let l = layout();
        let theta = OccupancyMeasure::uniform(&l);
        let mut cs = ConfidenceSet {
            p_hat: vec![0.5, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0],
            epsilon: vec![0.0; l.pair_count()],
            epoch: 1,
            horizon: 10,
            zeta: 0.1,
        };
        assert!(membership_check(&theta, &cs, &l).holds(0.0));
        cs.p_hat[0] = 1.0;
        cs.p_hat[1] = 0.0;
        let m = membership_check(&theta, &cs, &l);
        assert!(!m.holds(1e-9));
        assert_eq!(m.worst_pair, Some(0));
        assert!((m.worst_residual - 0.5).abs() < 1e-15);
        cs.epsilon.fill(2.0);
        assert!(membership_check(&theta, &cs, &l).holds(0.0));
    }

    #[test]
    fn zero_mass_pair_passes() {
        let l = layout();
        let mut v = vec![0.0; l.edge_count()];
        v[l.edge_index(0, 0, 1).unwrap()] = 1.0;
        v[l.edge_index(1, 0, 3).unwrap()] = 1.0;
        let theta = OccupancyMeasure::from_values(&l, v).unwrap();
        let cs = ConfidenceSet {
            p_hat: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            epsilon: vec![0.0; l.pair_count()],
            epoch: 1,
            horizon: 10,
            zeta: 0.1,
        };
        assert!(membership_check(&theta, &cs, &l).holds(0.0));
    }
}
