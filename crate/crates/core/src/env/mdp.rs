use rand::Rng;

use crate::cmdp::{MdpLayout, OccupancyMeasure, Policy, TransitionModel};
use crate::error::{structural, Result};
use crate::rng;

/// Random layered MDP whose kernel rows are drawn from the flat Dirichlet
/// distribution (normalized unit exponentials).
pub fn make_random_mdp(layer_sizes: &[usize], actions: usize, seed: u64) -> Result<(MdpLayout, TransitionModel)> {
    let layout = MdpLayout::new(layer_sizes, actions)?;
    let mut rng = rng::stream(seed, "mdp");
    let mut values = vec![0.0; layout.edge_count()];
    for pair in 0..layout.pair_count() {
        let start = layout.pair_edge_start(pair);
        let row = &mut values[start..start + layout.successors_of_pair(pair)];
        for v in row.iter_mut() {
            // 1 − u lies in (0, 1], so the logarithm is finite.
            *v = -(1.0 - rng.random::<f64>()).ln();
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
        let again: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= again);
    }
    let kernel = TransitionModel::from_values(&layout, values)?;
    Ok((layout, kernel))
}

/// One episode, `L` transitions from the initial to the terminal state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize, usize)>,
}

impl Trajectory {
    /// Checks length, endpoints and layering against `layout`.
    pub fn validate(&self, layout: &MdpLayout) -> Result<()> {
        if self.steps.len() != layout.depth() {
            return Err(structural(format!(
                "trajectory has {} steps, episodes have {}",
                self.steps.len(),
                layout.depth()
            )));
        }
        let mut at = layout.initial_state();
        for &(s, a, next) in &self.steps {
            if s != at {
                return Err(structural(format!("trajectory jumps from {at} to {s}")));
            }
            layout.edge_index(s, a, next)?;
            at = next;
        }
        Ok(())
    }

    /// Sum of a stage function along the path.
    pub fn total(&self, layout: &MdpLayout, values: &[f64]) -> Result<f64> {
        self.steps
            .iter()
            .map(|&(s, a, n)| layout.edge_index(s, a, n).map(|e| values[e]))
            .sum()
    }
}

/// Inverse-CDF draw from one uniform; mass lost to rounding falls on the
/// last positive entry.
fn draw_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Samples a path: actions from `actions_rng`, transitions from `env_rng`.
/// Each stream consumes exactly one uniform per step regardless of the policy.
pub fn sample_episode<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    layout: &MdpLayout,
    kernel: &TransitionModel,
    policy: &Policy,
    actions_rng: &mut R1,
    env_rng: &mut R2,
) -> Trajectory {
    let mut steps = Vec::with_capacity(layout.depth());
    let mut state = layout.initial_state();
    for k in 0..layout.depth() {
        let action = draw_index(policy.row(layout.actions(), state), actions_rng.random::<f64>());
        let pair = layout.pair_index(state, action);
        let j = draw_index(kernel.row(layout, pair), env_rng.random::<f64>());
        let next = layout.state_offset(k + 1) + j;
        steps.push((state, action, next));
        state = next;
    }
    Trajectory { steps }
}

/// Occupancy measure of `policy` under `kernel` by forward recursion:
/// `θ(s,a,s') = d(s) π(a|s) P(s'|s,a)`, `d(s') = Σ_{s,a} θ(s,a,s')`.
pub fn true_occupancy(layout: &MdpLayout, policy: &Policy, kernel: &TransitionModel) -> OccupancyMeasure {
    let mut reach = vec![0.0; layout.state_count()];
    reach[layout.initial_state()] = 1.0;
    let mut values = vec![0.0; layout.edge_count()];
    for e in layout.edges() {
        let p = kernel.values()[e.index];
        let v = reach[e.state] * policy.probs()[e.pair] * p;
        values[e.index] = v;
        reach[e.next] += v;
    }
    OccupancyMeasure::from_values(layout, values).expect("edge-shaped by construction")
}

/// State-visit distribution `d(s)` implied by a measure's outflows
/// (inflow for the terminal state).
pub fn state_distribution(layout: &MdpLayout, theta: &OccupancyMeasure) -> Vec<f64> {
    let (inflow, outflow) = theta.state_flows(layout);
    let mut d = outflow;
    d[layout.terminal_state()] = inflow[layout.terminal_state()];
    d
}
