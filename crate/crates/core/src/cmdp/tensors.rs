use super::MdpLayout;
use crate::error::{structural, Result};

const ROW_TOL: f64 = 1e-12;

fn check_edge_len(layout: &MdpLayout, len: usize, what: &str) -> Result<()> {
    if len != layout.edge_count() {
        return Err(structural(format!(
            "{what} has {len} entries, layout has {} edges",
            layout.edge_count()
        )));
    }
    Ok(())
}

/// Per-layer joint distribution `θ(s, a, s')`, stored densely in edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    values: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn from_values(layout: &MdpLayout, values: Vec<f64>) -> Result<Self> {
        check_edge_len(layout, values.len(), "occupancy measure")?;
        Ok(Self { values })
    }

    /// `1 / (|S_k||A||S_{k+1}|)` on every edge of layer `k`.
    pub fn uniform(layout: &MdpLayout) -> Self {
        let mut values = vec![0.0; layout.edge_count()];
        for k in 0..layout.depth() {
            let w = 1.0 / layout.block_len(k) as f64;
            values[layout.edge_range(k)].fill(w);
        }
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `m(s, a) = Σ_{s'} θ(s, a, s')` for every pair.
    pub fn pair_mass(&self, layout: &MdpLayout) -> Vec<f64> {
        pair_sums(layout, &self.values)
    }

    /// Mass carried by each layer.
    pub fn layer_mass(&self, layout: &MdpLayout) -> Vec<f64> {
        (0..layout.depth())
            .map(|k| self.values[layout.edge_range(k)].iter().sum())
            .collect()
    }

    /// `(inflow, outflow)` per state; the initial state has no inflow and the
    /// terminal state no outflow.
    pub fn state_flows(&self, layout: &MdpLayout) -> (Vec<f64>, Vec<f64>) {
        state_flows(layout, &self.values)
    }

    /// L1 distance between two measures on the same layout.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum()
    }
}

pub(crate) fn pair_sums(layout: &MdpLayout, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; layout.pair_count()];
    for (pair, m) in out.iter_mut().enumerate() {
        let start = layout.pair_edge_start(pair);
        let width = layout.successors_of_pair(pair);
        *m = values[start..start + width].iter().sum();
    }
    out
}

pub(crate) fn state_flows(layout: &MdpLayout, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = layout.state_count();
    let (mut inflow, mut outflow) = (vec![0.0; n], vec![0.0; n]);
    for e in layout.edges() {
        inflow[e.next] += values[e.index];
        outflow[e.state] += values[e.index];
    }
    (inflow, outflow)
}

/// A real-valued function on edges: a per-step loss, a per-step budget price,
/// or a penalty built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFunction {
    values: Vec<f64>,
}

impl StageFunction {
    pub fn from_values(layout: &MdpLayout, values: Vec<f64>) -> Result<Self> {
        check_edge_len(layout, values.len(), "stage function")?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(structural("stage function has non-finite entries"));
        }
        Ok(Self { values })
    }

    pub fn constant(layout: &MdpLayout, value: f64) -> Self {
        Self { values: vec![value; layout.edge_count()] }
    }

    pub fn zeros(layout: &MdpLayout) -> Self {
        Self::constant(layout, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| c * v).collect() }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &StageFunction) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }
}

/// Ground-truth or estimated kernel `P(s' | s, a)`, stored edge-shaped: the row
/// of pair `(s, a)` is the slice starting at `pair_edge_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    values: Vec<f64>,
}

impl TransitionModel {
    pub fn from_values(layout: &MdpLayout, values: Vec<f64>) -> Result<Self> {
        check_edge_len(layout, values.len(), "transition kernel")?;
        for pair in 0..layout.pair_count() {
            let row = row(layout, &values, pair);
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(structural(format!("kernel row {pair} has negative entries")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOL {
                return Err(structural(format!("kernel row {pair} sums to {total}")));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row<'a>(&'a self, layout: &MdpLayout, pair: usize) -> &'a [f64] {
        row(layout, &self.values, pair)
    }

    pub fn prob(&self, layout: &MdpLayout, state: usize, action: usize, next: usize) -> Result<f64> {
        Ok(self.values[layout.edge_index(state, action, next)?])
    }
}

fn row<'a>(layout: &MdpLayout, values: &'a [f64], pair: usize) -> &'a [f64] {
    let start = layout.pair_edge_start(pair);
    &values[start..start + layout.successors_of_pair(pair)]
}

/// Stationary randomized policy `π(a | s)` over non-terminal states, indexed by pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Vec<f64>,
}

impl Policy {
    pub fn from_probs(layout: &MdpLayout, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != layout.pair_count() {
            return Err(structural(format!(
                "policy has {} entries, layout has {} pairs",
                probs.len(),
                layout.pair_count()
            )));
        }
        let a = layout.actions();
        for (s, chunk) in probs.chunks(a).enumerate() {
            if chunk.iter().any(|&p| !(p >= 0.0)) {
                return Err(structural(format!("policy row {s} has negative entries")));
            }
            let total: f64 = chunk.iter().sum();
            if (total - 1.0).abs() > ROW_TOL {
                return Err(structural(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(layout: &MdpLayout) -> Self {
        Self { probs: vec![1.0 / layout.actions() as f64; layout.pair_count()] }
    }

    /// Deterministic policy choosing `choice[s]` at each non-terminal state.
    pub fn deterministic(layout: &MdpLayout, choice: &[usize]) -> Result<Self> {
        let a = layout.actions();
        if choice.len() != layout.state_count() - 1 || choice.iter().any(|&c| c >= a) {
            return Err(structural("deterministic policy does not match the layout"));
        }
        let mut probs = vec![0.0; layout.pair_count()];
        for (s, &c) in choice.iter().enumerate() {
            probs[s * a + c] = 1.0;
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Action distribution at a non-terminal state.
    pub fn row(&self, actions: usize, state: usize) -> &[f64] {
        &self.probs[state * actions..(state + 1) * actions]
    }
}
