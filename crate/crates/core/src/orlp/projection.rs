use crate::cmdp::{validate_occupancy, MdpLayout, OccupancyMeasure};
use crate::error::{structural, Error, Result};
use crate::learner::{membership_check, ConfidenceSet};

use nalgebra::{DMatrix, DVector};

use super::ball::{ball_projection, BallProjection};
use super::dual::{DualPoint, FacetTable, MAX_SUCCESSORS};
use super::{SolverOptions, SolverReport, UnnormalizedMeasure};

/// Membership slack tolerated on a returned projection.
pub const MEMBERSHIP_TOL: f64 = 1e-6;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
const FD_STEP: f64 = 1e-6;

/// Result of projecting an unnormalized measure onto the optimistic polytope.
#[derive(Debug, Clone)]
pub struct Projection {
    pub theta: OccupancyMeasure,
    pub dual: DualPoint,
    pub report: SolverReport,
}

/// Reduced dual `g(β) = Σ_k ln Σ_{(s,a) ∈ layer k} exp(ln W(s,a) − v(s,a))` with
/// the facet multipliers of each pair minimized out in closed form, where
/// `W(s,a) = Σ_j θ̲_j e^{β(s'_j) − β(s)}` and `v(s,a)` is the KL distance from
/// the normalized row to its L1 ball.
struct Reduced<'a> {
    layout: &'a MdpLayout,
    cs: &'a ConfidenceSet,
    log_base: &'a [f64],
    /// States whose `β` is free; the first state of every layer stays at zero.
    free: Vec<usize>,
}

struct ReducedEval {
    value: f64,
    grad: Vec<f64>,
    theta: Vec<f64>,
    balls: Vec<BallProjection>,
}

impl Reduced<'_> {
    fn evaluate(&self, beta: &[f64]) -> Result<ReducedEval> {
        let layout = self.layout;
        let mut theta = vec![0.0; layout.edge_count()];
        let mut balls = Vec::with_capacity(layout.pair_count());
        let mut value = 0.0;
        let mut w = [0.0f64; MAX_SUCCESSORS];
        for k in 0..layout.depth() {
            let width = layout.layer_size(k + 1);
            let next_base = layout.state_offset(k + 1);
            let pairs = layout.pair_range(k);
            let mut scores = Vec::with_capacity(pairs.len());
            for pair in pairs.clone() {
                let (state, _) = layout.pair_parts(pair);
                let start = layout.pair_edge_start(pair);
                let mut top = f64::NEG_INFINITY;
                for j in 0..width {
                    w[j] = self.log_base[start + j] + beta[next_base + j];
                    top = top.max(w[j]);
                }
                let mut sum = 0.0;
                for x in &mut w[..width] {
                    *x = (*x - top).exp();
                    sum += *x;
                }
                w[..width].iter_mut().for_each(|x| *x /= sum);
                let ball = ball_projection(&w[..width], self.cs.p_hat_row(layout, pair), self.cs.epsilon[pair])?;
                scores.push(top + sum.ln() - beta[state] - ball.value);
                balls.push(ball);
            }
            let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + scores.iter().map(|s| (s - top).exp()).sum::<f64>().ln();
            value += lse;
            for (i, pair) in pairs.enumerate() {
                let mass = (scores[i] - lse).exp();
                let start = layout.pair_edge_start(pair);
                for j in 0..width {
                    theta[start + j] = mass * balls[pair].q[j];
                }
            }
        }
        let mut grad = vec![0.0; layout.state_count()];
        for e in layout.edges() {
            grad[e.next] += theta[e.index];
            grad[e.state] -= theta[e.index];
        }
        Ok(ReducedEval { value, grad, theta, balls })
    }

    fn free_grad(&self, eval: &ReducedEval) -> Vec<f64> {
        self.free.iter().map(|&s| eval.grad[s]).collect()
    }

    fn sup_norm(&self, eval: &ReducedEval) -> f64 {
        self.free.iter().map(|&s| eval.grad[s].abs()).fold(0.0, f64::max)
    }

    /// Newton direction from a central-difference Hessian, regularized until
    /// Cholesky succeeds; `None` when the step is not a descent direction.
    fn newton_direction(&self, beta: &[f64], grad: &[f64]) -> Result<Option<Vec<f64>>> {
        let n = self.free.len();
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut probe = beta.to_vec();
        for (i, &s) in self.free.iter().enumerate() {
            probe[s] = beta[s] + FD_STEP;
            let up = self.evaluate(&probe)?;
            probe[s] = beta[s] - FD_STEP;
            let down = self.evaluate(&probe)?;
            probe[s] = beta[s];
            for (r, &t) in self.free.iter().enumerate() {
                h[(r, i)] = (up.grad[t] - down.grad[t]) / (2.0 * FD_STEP);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let rhs = -DVector::from_column_slice(grad);
        let scale = h.diagonal().iter().fold(1.0f64, |a, d| a.max(d.abs()));
        let mut shift = 0.0;
        for _ in 0..40 {
            let shifted = &h + DMatrix::<f64>::identity(n, n) * shift;
            if let Some(chol) = shifted.cholesky() {
                let d = chol.solve(&rhs);
                let slope: f64 = d.iter().zip(grad).map(|(a, b)| a * b).sum();
                return Ok((slope < 0.0 && d.iter().all(|x| x.is_finite())).then(|| d.as_slice().to_vec()));
            }
            shift = if shift == 0.0 { 1e-12 * scale } else { shift * 10.0 };
        }
        Ok(None)
    }

    /// Backtracking along `dir`. While the predicted decrease is resolvable in
    /// f64 this is the Armijo rule; below that the objective is flat to
    /// rounding and a step must reduce the gradient sup-norm instead.
    fn line_search(&self, beta: &[f64], cur: &ReducedEval, dir: &[f64]) -> Result<Option<(Vec<f64>, ReducedEval)>> {
        let grad = self.free_grad(cur);
        let slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let slack = 4.0 * f64::EPSILON * (1.0 + cur.value.abs());
        let norm = self.sup_norm(cur);
        let mut step = 1.0;
        while step >= MIN_STEP {
            let mut candidate = beta.to_vec();
            for (&s, d) in self.free.iter().zip(dir) {
                candidate[s] += step * d;
            }
            let eval = self.evaluate(&candidate)?;
            let predicted = ARMIJO * step * slope;
            let accept = if -predicted > slack {
                eval.value <= cur.value + predicted
            } else {
                eval.value <= cur.value + slack && self.sup_norm(&eval) < norm
            };
            if eval.value.is_finite() && accept {
                return Ok(Some((candidate, eval)));
            }
            step *= 0.5;
        }
        Ok(None)
    }
}

/// Facet multipliers equivalent to the per-pair L1 multipliers: `μ_σ = ν Π_j
/// (1 + σ_j s_j)/2`, so that `Σ_σ μ_σ σ = ν s` and `Σ_σ μ_σ = ν`. Pairs whose
/// multiplier is not attained get zeros.
fn facet_multipliers(layout: &MdpLayout, facets: &FacetTable, balls: &[BallProjection]) -> Vec<f64> {
    let mut mu = vec![0.0; facets.len()];
    for (pair, ball) in balls.iter().enumerate() {
        let Some(nu) = ball.nu else { continue };
        if nu == 0.0 {
            continue;
        }
        let width = layout.successors_of_pair(pair);
        for (mask, slot) in facets.slots(pair).enumerate() {
            let weight: f64 = (0..width)
                .map(|j| if mask >> j & 1 == 1 { 0.5 * (1.0 + ball.sign[j]) } else { 0.5 * (1.0 - ball.sign[j]) })
                .product();
            mu[slot] = nu * weight;
        }
    }
    mu
}

/// KL projection `argmin_{θ ∈ Δ(ℓ,ζ)} D(θ, θ̲)`.
///
/// Each pair's L1 constraint is eliminated exactly by an inner projection onto
/// its ball, which leaves a smooth convex problem in the flow multipliers `β`
/// alone. That problem is minimized by Newton steps with a finite-difference
/// Hessian and Armijo backtracking. Adding a constant to `β` on a whole layer
/// leaves the objective unchanged, so the first state of every layer is
/// pinned to zero. The recovered measure is passed through a forward flow repair
/// that rescales each state's outgoing row, which leaves every conditional
/// `θ(s,a,·)/m(s,a)` untouched and closes the remaining flow residual to
/// rounding level.
///
/// The returned dual point carries the equivalent facet multipliers, so it
/// can be checked against [`dual_objective`](super::dual_objective).
pub fn kl_projection(
    unnorm: &UnnormalizedMeasure,
    cs: &ConfidenceSet,
    layout: &MdpLayout,
    options: &SolverOptions,
    warm: Option<&DualPoint>,
) -> Result<Projection> {
    if unnorm.len() != layout.edge_count() {
        return Err(structural("unnormalized measure does not match the layout"));
    }
    let facets = FacetTable::new(layout, cs)?;
    let pinned: Vec<usize> = (0..=layout.depth()).map(|k| layout.state_offset(k)).collect();
    let problem = Reduced {
        layout,
        cs,
        log_base: unnorm.log_values(),
        free: (0..layout.state_count()).filter(|s| !pinned.contains(s)).collect(),
    };

    let mut beta = vec![0.0; layout.state_count()];
    let mut cur = problem.evaluate(&beta)?;
    let mut warm_started = false;
    if let (true, Some(w)) = (options.warm_start, warm) {
        if w.beta.len() == layout.state_count() {
            let mut candidate = w.beta.clone();
            for k in 0..=layout.depth() {
                let anchor = candidate[layout.state_offset(k)];
                layout.layer_states(k).for_each(|s| candidate[s] -= anchor);
            }
            let eval = problem.evaluate(&candidate)?;
            if eval.value < cur.value {
                beta = candidate;
                cur = eval;
                warm_started = true;
            }
        }
    }

    let mut trace = Vec::new();
    if options.record_trace {
        trace.push(cur.value);
    }
    let mut iterations = 0;
    let mut gradient_norm = problem.sup_norm(&cur);
    while gradient_norm > options.tolerance {
        let fail = |cur: &ReducedEval, trace: Vec<f64>, iterations: usize| {
            let theta = repair_flow(layout, &cur.theta);
            let report = report_for(layout, cs, &theta, iterations, gradient_norm, cur.value, warm_started, trace);
            Error::SolverFailure(Box::new(report))
        };
        if iterations >= options.max_iterations {
            return Err(fail(&cur, trace, iterations));
        }
        iterations += 1;

        let grad = problem.free_grad(&cur);
        let mut found = None;
        if let Some(dir) = problem.newton_direction(&beta, &grad)? {
            found = problem.line_search(&beta, &cur, &dir)?;
        }
        if found.is_none() {
            let steepest: Vec<f64> = grad.iter().map(|g| -g).collect();
            found = problem.line_search(&beta, &cur, &steepest)?;
        }
        let Some((next, eval)) = found else {
            return Err(fail(&cur, trace, iterations));
        };
        beta = next;
        cur = eval;
        if options.record_trace {
            trace.push(cur.value);
        }
        gradient_norm = problem.sup_norm(&cur);
    }

    let theta = repair_flow(layout, &cur.theta);
    let report = report_for(layout, cs, &theta, iterations, gradient_norm, cur.value, warm_started, trace);
    let flow_ok = report.flow_residual <= crate::cmdp::POLYTOPE_TOL;
    if !flow_ok || report.membership_residual > MEMBERSHIP_TOL {
        return Err(Error::SolverFailure(Box::new(report)));
    }
    let dual = DualPoint { mu: facet_multipliers(layout, &facets, &cur.balls), beta };
    Ok(Projection { theta: OccupancyMeasure::from_values(layout, theta)?, dual, report })
}

/// Forward pass that rescales every state's outgoing row to the inflow it
/// receives, starting from unit mass at the initial state.
pub(crate) fn repair_flow(layout: &MdpLayout, theta: &[f64]) -> Vec<f64> {
    let mut out = theta.to_vec();
    let mut reach = vec![0.0; layout.state_count()];
    reach[layout.initial_state()] = 1.0;
    let a = layout.actions();
    for k in 0..layout.depth() {
        let width = layout.layer_size(k + 1);
        let next_base = layout.state_offset(k + 1);
        for state in layout.layer_states(k) {
            let start = layout.pair_edge_start(layout.pair_index(state, 0));
            let row = &mut out[start..start + a * width];
            let outflow: f64 = row.iter().sum();
            if outflow > 0.0 {
                let scale = reach[state] / outflow;
                row.iter_mut().for_each(|v| *v *= scale);
            }
            for (i, v) in row.iter().enumerate() {
                reach[next_base + i % width] += v;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn report_for(
    layout: &MdpLayout,
    cs: &ConfidenceSet,
    theta: &[f64],
    iterations: usize,
    gradient_norm: f64,
    objective: f64,
    warm_started: bool,
    trace: Vec<f64>,
) -> SolverReport {
    let measure = OccupancyMeasure::from_values(layout, theta.to_vec())
        .expect("projection output has the layout's shape");
    let flow_residual = validate_occupancy(&measure, layout)
        .map(|r| r.max_residual())
        .unwrap_or(f64::INFINITY);
    let membership_residual = membership_check(&measure, cs, layout).worst_residual;
    SolverReport {
        iterations,
        gradient_norm,
        residual: flow_residual.max(membership_residual),
        flow_residual,
        membership_residual,
        objective,
        warm_started,
        trace,
    }
}
