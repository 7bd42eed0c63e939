//! Log-partition dual of the KL projection onto the optimistic polytope.
//!
//! The L1 ratio constraint `Σ_{s'} |θ(s,a,s') − P̂(s'|s,a) m(s,a)| ≤ ε(s,a) m(s,a)`
//! is the intersection of the `2^{|S_{k+1}|}` half-spaces
//!
//! ```text
//! Σ_{s'} σ(s') θ(s,a,s') − (⟨σ, P̂(·|s,a)⟩ + ε(s,a)) m(s,a) ≤ 0,   σ ∈ {−1, +1}^{S_{k+1}},
//! ```
//!
//! one facet multiplier `μ_σ(s,a) ≥ 0` per sign vector. Together with flow
//! multipliers `β(s)` the projection of `θ̲` is `θ̲ e^{B} / Z_k` with
//!
//! ```text
//! B(s,a,s') = β(s') − β(s) − Σ_σ μ_σ(s,a) (σ(s') − ⟨σ, P̂(·|s,a)⟩ − ε(s,a)),
//! ```
//!
//! and the multipliers minimize `Σ_k ln Z_k` subject only to `μ ≥ 0`.

use crate::cmdp::{MdpLayout, OccupancyMeasure};
use crate::error::{structural, Result};
use crate::learner::ConfidenceSet;

use super::{exponential_step, PenaltyVector};

/// Largest successor layer the facet enumeration accepts.
pub const MAX_SUCCESSORS: usize = 12;

/// Multipliers of the projection dual.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    /// Facet multipliers, grouped by pair; pair `p` owns `2^{|S_{k+1}|}` slots.
    pub mu: Vec<f64>,
    /// Flow multipliers, one per state.
    pub beta: Vec<f64>,
}

impl DualPoint {
    pub fn zeros(facets: &FacetTable, layout: &MdpLayout) -> Self {
        Self { mu: vec![0.0; facets.len()], beta: vec![0.0; layout.state_count()] }
    }

    pub fn dim(&self) -> usize {
        self.mu.len() + self.beta.len()
    }
}

/// Facet offsets and right-hand coefficients `⟨σ, P̂⟩ + ε` for every pair.
#[derive(Debug, Clone)]
pub struct FacetTable {
    offsets: Vec<usize>,
    widths: Vec<usize>,
    coef: Vec<f64>,
}

impl FacetTable {
    pub fn new(layout: &MdpLayout, cs: &ConfidenceSet) -> Result<Self> {
        if cs.p_hat.len() != layout.edge_count() || cs.epsilon.len() != layout.pair_count() {
            return Err(structural("confidence set does not match the layout"));
        }
        let mut offsets = Vec::with_capacity(layout.pair_count() + 1);
        let mut widths = Vec::with_capacity(layout.pair_count());
        let mut coef = Vec::new();
        for pair in 0..layout.pair_count() {
            let width = layout.successors_of_pair(pair);
            if width > MAX_SUCCESSORS {
                return Err(structural(format!(
                    "successor layer of size {width} exceeds the facet limit {MAX_SUCCESSORS}"
                )));
            }
            offsets.push(coef.len());
            widths.push(width);
            let row = cs.p_hat_row(layout, pair);
            let eps = cs.epsilon[pair];
            for mask in 0..1usize << width {
                let signed: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(j, p)| if mask >> j & 1 == 1 { *p } else { -p })
                    .sum();
                coef.push(signed + eps);
            }
        }
        offsets.push(coef.len());
        Ok(Self { offsets, widths, coef })
    }

    pub fn len(&self) -> usize {
        self.coef.len()
    }

    /// Slots of `pair`'s facet multipliers.
    pub(crate) fn slots(&self, pair: usize) -> std::ops::Range<usize> {
        self.offsets[pair]..self.offsets[pair + 1]
    }

    pub fn is_empty(&self) -> bool {
        self.coef.is_empty()
    }
}

/// Value, gradient and primal point of the dual at one multiplier vector.
#[derive(Debug, Clone)]
pub(crate) struct DualEval {
    pub value: f64,
    pub grad: DualPoint,
}

/// Evaluates `Σ_k ln Z_k` for base weights given in log space (`ln θ̲`).
pub(crate) fn evaluate(layout: &MdpLayout, facets: &FacetTable, log_base: &[f64], dual: &DualPoint) -> DualEval {
    let mut logw = vec![0.0; layout.edge_count()];
    let mut sigma_sum = [0.0f64; MAX_SUCCESSORS];
    for pair in 0..layout.pair_count() {
        let (state, _) = layout.pair_parts(pair);
        let width = facets.widths[pair];
        let base = facets.offsets[pair];
        let mu = &dual.mu[base..base + (1 << width)];
        let coef = &facets.coef[base..base + (1 << width)];
        let mut shift = 0.0;
        sigma_sum[..width].fill(0.0);
        for (mask, (&m, &c)) in mu.iter().zip(coef).enumerate() {
            if m == 0.0 {
                continue;
            }
            shift += m * c;
            for (j, s) in sigma_sum[..width].iter_mut().enumerate() {
                *s += if mask >> j & 1 == 1 { m } else { -m };
            }
        }
        let start = layout.pair_edge_start(pair);
        let next_base = layout.state_offset(layout.layer_of(state) + 1);
        for j in 0..width {
            logw[start + j] = log_base[start + j] + dual.beta[next_base + j] - dual.beta[state]
                - sigma_sum[j]
                + shift;
        }
    }

    let mut value = 0.0;
    let mut theta = vec![0.0; layout.edge_count()];
    for k in 0..layout.depth() {
        let range = layout.edge_range(k);
        let top = logw[range.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logw[range.clone()].iter().map(|w| (w - top).exp()).sum();
        let lse = top + z.ln();
        value += lse;
        for e in range {
            theta[e] = (logw[e] - lse).exp();
        }
    }

    let mut grad = DualPoint { mu: vec![0.0; facets.len()], beta: vec![0.0; layout.state_count()] };
    for e in layout.edges() {
        grad.beta[e.next] += theta[e.index];
        grad.beta[e.state] -= theta[e.index];
    }
    for pair in 0..layout.pair_count() {
        let width = facets.widths[pair];
        let base = facets.offsets[pair];
        let start = layout.pair_edge_start(pair);
        let row = &theta[start..start + width];
        let mass: f64 = row.iter().sum();
        for mask in 0..1usize << width {
            let signed: f64 = row
                .iter()
                .enumerate()
                .map(|(j, t)| if mask >> j & 1 == 1 { *t } else { -t })
                .sum();
            grad.mu[base + mask] = facets.coef[base + mask] * mass - signed;
        }
    }
    DualEval { value, grad }
}

/// Dual objective `Σ_k ln Z_k` and its gradient at `dual`, for the projection
/// of `θ̃ e^{−ψ/α}`.
pub fn dual_objective(
    dual: &DualPoint,
    theta_mixed: &OccupancyMeasure,
    psi: &PenaltyVector,
    alpha: f64,
    cs: &ConfidenceSet,
    layout: &MdpLayout,
) -> Result<(f64, DualPoint)> {
    let facets = FacetTable::new(layout, cs)?;
    if dual.mu.len() != facets.len() || dual.beta.len() != layout.state_count() {
        return Err(structural("dual point does not match the facet table"));
    }
    let unnorm = exponential_step(theta_mixed, psi, alpha)?;
    let eval = evaluate(layout, &facets, unnorm.log_values(), dual);
    Ok((eval.value, eval.grad))
}
