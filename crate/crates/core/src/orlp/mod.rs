//! The per-episode optimistic regularized linear program
//!
//! ```text
//! θ^t = argmin_{θ ∈ Δ(ℓ,ζ)} ⟨ψ, θ⟩ + α D(θ, θ̃^{t−1}),   ψ = V f^{t−1} + Σ_i Q_i g_i^{t−1},
//! ```
//!
//! solved in two steps: the unconstrained minimizer `θ̲ = θ̃ e^{−ψ/α}` in closed
//! form, then the KL projection of `θ̲` onto `Δ(ℓ,ζ)`.

mod ball;
mod dual;
mod projection;

pub use dual::{dual_objective, DualPoint, FacetTable, MAX_SUCCESSORS};
pub use projection::{kl_projection, Projection, MEMBERSHIP_TOL};

use crate::cmdp::{mix_with_uniform, MdpLayout, OccupancyMeasure, StageFunction};
use crate::error::{parameter, structural, Result};
use crate::learner::ConfidenceSet;

/// `ψ = V f + Σ_i Q_i g_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyVector(pub StageFunction);

impl PenaltyVector {
    pub fn values(&self) -> &[f64] {
        self.0.values()
    }
}

pub fn build_penalty(v: f64, f_prev: &StageFunction, q: &[f64], g_prev: &[StageFunction]) -> Result<PenaltyVector> {
    if q.len() != g_prev.len() {
        return Err(structural(format!(
            "{} dual multipliers for {} constraint functions",
            q.len(),
            g_prev.len()
        )));
    }
    let mut psi = f_prev.scaled(v);
    for (qi, gi) in q.iter().zip(g_prev) {
        if gi.len() != psi.len() {
            return Err(structural("constraint function shape differs from the loss"));
        }
        psi.add_scaled(*qi, gi);
    }
    if psi.values().iter().any(|x| !x.is_finite()) {
        return Err(parameter("penalty vector has non-finite entries"));
    }
    Ok(PenaltyVector(psi))
}

/// Strictly positive, not necessarily normalized, edge weights kept in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct UnnormalizedMeasure {
    log_values: Vec<f64>,
}

impl UnnormalizedMeasure {
    pub fn from_log_values(log_values: Vec<f64>) -> Self {
        Self { log_values }
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| l.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }
}

/// Closed-form minimizer of `α⁻¹⟨ψ, θ⟩ + D(θ, θ̃)`: `θ̲ = θ̃ e^{−ψ/α}`.
pub fn exponential_step(theta_mixed: &OccupancyMeasure, psi: &PenaltyVector, alpha: f64) -> Result<UnnormalizedMeasure> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(parameter(format!("alpha must be positive, got {alpha}")));
    }
    if theta_mixed.len() != psi.0.len() {
        return Err(structural("penalty shape differs from the occupancy measure"));
    }
    let log_values = theta_mixed
        .values()
        .iter()
        .zip(psi.values())
        .map(|(t, p)| t.ln() - p / alpha)
        .collect();
    Ok(UnnormalizedMeasure { log_values })
}

/// Inner projection solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stop once the sup-norm of the flow-multiplier gradient falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Seed the solve with the previous episode's dual point when it is better
    /// than the origin.
    pub warm_start: bool,
    /// Keep the dual objective after every accepted step.
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 5000, warm_start: true, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    /// Final gradient sup-norm.
    pub gradient_norm: f64,
    /// Max of `flow_residual` and `membership_residual`.
    pub residual: f64,
    /// Largest polytope residual (layer mass, flow, negativity).
    pub flow_residual: f64,
    pub membership_residual: f64,
    /// Final dual objective `Σ_k ln Z_k`.
    pub objective: f64,
    pub warm_started: bool,
    /// Dual objective after each accepted step, when requested.
    pub trace: Vec<f64>,
}

/// Everything one ORLP solve needs from the learner's state.
#[derive(Debug, Clone, Copy)]
pub struct OrlpInput<'a> {
    /// Episode index `t ≥ 1`.
    pub episode: usize,
    /// `θ^{t−1}`; ignored for `t = 1`.
    pub previous: Option<&'a OccupancyMeasure>,
    pub loss_prev: Option<&'a StageFunction>,
    pub constraints_prev: &'a [StageFunction],
    /// `Q(t − 1)`.
    pub duals: &'a [f64],
    pub v: f64,
    pub alpha: f64,
    pub lambda: f64,
}

/// The uniform first iterate for `t = 1`, otherwise mix → penalty → exponential
/// step → projection.
pub fn solve_orlp(
    input: OrlpInput<'_>,
    cs: &ConfidenceSet,
    layout: &MdpLayout,
    options: &SolverOptions,
    warm: Option<&DualPoint>,
) -> Result<(OccupancyMeasure, Option<Projection>)> {
    if input.episode == 0 {
        return Err(parameter("episodes are numbered from 1"));
    }
    if input.episode == 1 {
        return Ok((OccupancyMeasure::uniform(layout), None));
    }
    let (previous, loss) = match (input.previous, input.loss_prev) {
        (Some(p), Some(f)) => (p, f),
        _ => return Err(structural("episode t ≥ 2 needs the previous iterate and feedback")),
    };
    let mixed = mix_with_uniform(previous, layout, input.lambda)?;
    let psi = build_penalty(input.v, loss, input.duals, input.constraints_prev)?;
    let unnorm = exponential_step(&mixed, &psi, input.alpha)?;
    let projection = kl_projection(&unnorm, cs, layout, options, warm)?;
    Ok((projection.theta.clone(), Some(projection)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> MdpLayout {
        MdpLayout::new(&[1, 2, 1], 2).unwrap()
    }

    #[test]
    fn penalty_cases() {
        let l = layout();
        let f = StageFunction::constant(&l, 0.5);
        let g = vec![StageFunction::constant(&l, 0.2)];
        let psi = build_penalty(3.0, &f, &[0.0], &g).unwrap();
        assert_eq!(psi.0, f.scaled(3.0));
        let psi = build_penalty(0.0, &f, &[1.0], &g).unwrap();
        assert!(psi.values().iter().all(|&x| (x - 0.2).abs() < 1e-15));

        let g = vec![StageFunction::constant(&l, 0.2), StageFunction::constant(&l, -0.1)];
        let q = [0.7, 1.3];
        let once = build_penalty(2.0, &f, &q, &g).unwrap();
        let twice = build_penalty(2.0, &f, &[1.4, 2.6], &g).unwrap();
        for (e, (a, b)) in twice.values().iter().zip(once.values()).enumerate() {
            let expected = q[0] * g[0].values()[e] + q[1] * g[1].values()[e];
            assert!((a - b - expected).abs() < 1e-12);
        }
        assert!(build_penalty(1.0, &f, &[1.0, 2.0], &g[..1]).is_err());
    }

    #[test]
    fn exponential_step_cases() {
        let l = layout();
        let theta = OccupancyMeasure::uniform(&l);
        let zero = PenaltyVector(StageFunction::zeros(&l));
        let same = exponential_step(&theta, &zero, 2.0).unwrap();
        for (a, b) in same.values().iter().zip(theta.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let alpha = 1.7;
        let psi = PenaltyVector(StageFunction::constant(&l, alpha));
        let step = exponential_step(&theta, &psi, alpha).unwrap();
        assert!((step.values()[0] - 0.25 * (-1f64).exp()).abs() < 1e-15);
        assert!((step.values()[0] - 0.091970).abs() < 1e-6);

        let mut ragged = StageFunction::zeros(&l);
        ragged.values_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.3 * i as f64 - 1.0);
        let psi = PenaltyVector(ragged);
        let one = exponential_step(&theta, &psi, alpha).unwrap().values();
        let two = exponential_step(&theta, &psi, 2.0 * alpha).unwrap().values();
        for ((t, a), b) in theta.values().iter().zip(&one).zip(&two) {
            assert!((b - t * (a / t).sqrt()).abs() < 1e-15);
        }
        assert!(exponential_step(&theta, &psi, 0.0).is_err());
        assert!(exponential_step(&theta, &psi, -1.0).is_err());
    }
}
