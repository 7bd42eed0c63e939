//! The best fixed occupancy measure in hindsight.
//!
//! With the kernel known, every measure satisfying the conditional condition
//! is `θ(s,a,s') = x(s,a) P(s'|s,a)` for a state-action flow `x ≥ 0`. The LP is
//! posed over `x`: unit mass leaves the initial state, inflow equals outflow at
//! every interior state, and `⟨g_i, θ⟩ ≤ c_i` becomes `Σ x(s,a) ⟨g_i(s,a,·), P(·|s,a)⟩ ≤ c_i`.

use crate::cmdp::{inner_product, MdpLayout, OccupancyMeasure, Policy, StageFunction, TransitionModel};
use crate::env::true_occupancy;
use crate::error::{parameter, structural, Error, Result};

use super::simplex::{self, LinearProgram, LpSolution};

/// Gap and dual-infeasibility bound every returned solution must meet.
pub const CERTIFICATE_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct HindsightProblem {
    pub layout: MdpLayout,
    pub kernel: TransitionModel,
    /// `F = Σ_t f^t`.
    pub losses: StageFunction,
    /// Expected constraint functions `g_i`.
    pub constraints: Vec<StageFunction>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HindsightSolution {
    pub theta: OccupancyMeasure,
    pub value: f64,
    /// Largest `[⟨g_i, θ⟩ − c_i]₊`.
    pub constraint_residual: f64,
    pub lp: LpSolution,
}

impl HindsightProblem {
    pub fn new(
        layout: MdpLayout,
        kernel: TransitionModel,
        losses: StageFunction,
        constraints: Vec<StageFunction>,
        thresholds: Vec<f64>,
    ) -> Result<Self> {
        if losses.len() != layout.edge_count() || constraints.iter().any(|g| g.len() != layout.edge_count()) {
            return Err(structural("stage functions do not match the layout"));
        }
        if kernel.values().len() != layout.edge_count() {
            return Err(structural("kernel does not match the layout"));
        }
        if constraints.len() != thresholds.len() {
            return Err(structural(format!(
                "{} constraint functions but {} thresholds",
                constraints.len(),
                thresholds.len()
            )));
        }
        Ok(Self { layout, kernel, losses, constraints, thresholds })
    }

    /// Expected value of `func` per unit of flow through each pair.
    fn pair_costs(&self, func: &StageFunction) -> Vec<f64> {
        (0..self.layout.pair_count())
            .map(|pair| {
                let start = self.layout.pair_edge_start(pair);
                self.kernel
                    .row(&self.layout, pair)
                    .iter()
                    .enumerate()
                    .map(|(j, p)| p * func.values()[start + j])
                    .sum()
            })
            .collect()
    }

    fn program(&self, objective: &StageFunction, thresholds: &[f64]) -> LinearProgram {
        let l = &self.layout;
        let n = l.pair_count();
        let mut eq_rows = Vec::new();
        let mut eq_rhs = Vec::new();

        let mut start = vec![0.0; n];
        for a in 0..l.actions() {
            start[l.pair_index(l.initial_state(), a)] = 1.0;
        }
        eq_rows.push(start);
        eq_rhs.push(1.0);

        for k in 1..l.depth() {
            for state in l.layer_states(k) {
                let mut row = vec![0.0; n];
                for a in 0..l.actions() {
                    row[l.pair_index(state, a)] += 1.0;
                }
                let j = state - l.state_offset(k);
                for pair in l.pair_range(k - 1) {
                    row[pair] -= self.kernel.row(l, pair)[j];
                }
                eq_rows.push(row);
                eq_rhs.push(0.0);
            }
        }

        LinearProgram {
            objective: self.pair_costs(objective),
            eq_rows,
            eq_rhs,
            ub_rows: self.constraints.iter().map(|g| self.pair_costs(g)).collect(),
            ub_rhs: thresholds.to_vec(),
        }
    }

    fn measure_from_flow(&self, x: &[f64]) -> Result<OccupancyMeasure> {
        let mut values = vec![0.0; self.layout.edge_count()];
        for e in self.layout.edges() {
            values[e.index] = x[e.pair] * self.kernel.values()[e.index];
        }
        OccupancyMeasure::from_values(&self.layout, values)
    }

    fn constraint_residual(&self, theta: &OccupancyMeasure, thresholds: &[f64]) -> Result<f64> {
        let mut worst = 0.0f64;
        for (g, c) in self.constraints.iter().zip(thresholds) {
            worst = worst.max(inner_product(g, theta)? - c);
        }
        Ok(worst)
    }

    fn solve_with(&self, objective: &StageFunction, thresholds: &[f64]) -> Result<HindsightSolution> {
        let lp = self.program(objective, thresholds);
        let sol = match simplex::solve(&lp) {
            Err(Error::Infeasible { reason, certificate }) => {
                return Err(Error::Infeasible {
                    reason: format!("no occupancy measure meets the constraint thresholds ({reason})"),
                    certificate,
                })
            }
            other => other?,
        };
        if sol.duality_gap > CERTIFICATE_TOL || sol.dual_infeasibility > CERTIFICATE_TOL {
            return Err(structural(format!(
                "simplex certificate too weak: gap {:.3e}, dual infeasibility {:.3e}",
                sol.duality_gap, sol.dual_infeasibility
            )));
        }
        let theta = self.measure_from_flow(&sol.x)?;
        let value = inner_product(objective, &theta)?;
        let constraint_residual = self.constraint_residual(&theta, thresholds)?;
        Ok(HindsightSolution { theta, value, constraint_residual, lp: sol })
    }

    /// The same problem with every threshold tightened by `slack`.
    pub fn with_slack(&self, slack: f64) -> Self {
        let mut out = self.clone();
        out.thresholds.iter_mut().for_each(|c| *c -= slack);
        out
    }

    /// `min` and `max` of `⟨g_i, θ⟩` over the true occupancy polytope, ignoring
    /// the other constraints.
    pub fn constraint_range(&self, i: usize) -> Result<(f64, f64)> {
        let g = self.constraints.get(i).ok_or_else(|| parameter(format!("no constraint {i}")))?;
        let free = Self { constraints: Vec::new(), thresholds: Vec::new(), ..self.clone() };
        let lo = free.solve_with(g, &[])?.value;
        let hi = -free.solve_with(&g.scaled(-1.0), &[])?.value;
        Ok((lo, hi))
    }
}

/// `argmin ⟨F, θ⟩` over occupancy measures of the true kernel with
/// `⟨g_i, θ⟩ ≤ c_i`.
pub fn solve_best_fixed(problem: &HindsightProblem) -> Result<HindsightSolution> {
    problem.solve_with(&problem.losses, &problem.thresholds)
}

/// Largest number of deterministic policies the brute-force oracle enumerates.
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Enumerates deterministic policies and, for at most one constraint, every
/// pairwise mixture on a grid of step `resolution`. Returns `None` when no
/// candidate is feasible.
pub fn brute_force_best_fixed(problem: &HindsightProblem, resolution: f64) -> Result<Option<(OccupancyMeasure, f64)>> {
    let l = &problem.layout;
    let count = l.deterministic_policy_count();
    if count > BRUTE_FORCE_LIMIT {
        return Err(parameter(format!(
            "{count} deterministic policies exceed the brute-force limit {BRUTE_FORCE_LIMIT}"
        )));
    }
    if problem.constraints.len() > 1 {
        return Err(parameter("pairwise mixtures cover the optimum only for a single constraint"));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(parameter(format!("grid resolution {resolution} outside (0, 1]")));
    }

    let decisions = l.state_count() - 1;
    let mut vertices = Vec::with_capacity(count);
    for code in 0..count {
        let mut rest = code;
        let choice: Vec<usize> = (0..decisions)
            .map(|_| {
                let a = rest % l.actions();
                rest /= l.actions();
                a
            })
            .collect();
        let theta = true_occupancy(l, &Policy::deterministic(l, &choice)?, &problem.kernel);
        let obj = inner_product(&problem.losses, &theta)?;
        let con = match problem.constraints.first() {
            Some(g) => inner_product(g, &theta)? - problem.thresholds[0],
            None => f64::NEG_INFINITY,
        };
        vertices.push((theta, obj, con));
    }

    let feasible = |c: f64| c <= 1e-12;
    let mut best: Option<(usize, usize, f64, f64)> = None;
    let mut consider = |i: usize, j: usize, w: f64, obj: f64| {
        if best.is_none_or(|(_, _, _, b)| obj < b) {
            best = Some((i, j, w, obj));
        }
    };
    for (i, v) in vertices.iter().enumerate() {
        if feasible(v.2) {
            consider(i, i, 0.0, v.1);
        }
    }
    if !problem.constraints.is_empty() {
        let steps = (1.0 / resolution).round() as usize;
        for i in 0..count {
            for j in i + 1..count {
                let (oi, ci) = (vertices[i].1, vertices[i].2);
                let (oj, cj) = (vertices[j].1, vertices[j].2);
                for s in 1..steps {
                    let w = s as f64 / steps as f64;
                    if feasible((1.0 - w) * ci + w * cj) {
                        consider(i, j, w, (1.0 - w) * oi + w * oj);
                    }
                }
            }
        }
    }

    Ok(best.map(|(i, j, w, obj)| {
        let values = vertices[i]
            .0
            .values()
            .iter()
            .zip(vertices[j].0.values())
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        (OccupancyMeasure::from_values(l, values).expect("mixture keeps the shape"), obj)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::{conditional_residual, validate_occupancy};
    use crate::env::make_random_mdp;

    /// Deterministic kernel on (1,2,2,1): action a moves to state a of the next layer.
    fn deterministic() -> (MdpLayout, TransitionModel) {
        let l = MdpLayout::new(&[1, 2, 2, 1], 2).unwrap();
        let mut p = vec![0.0; l.edge_count()];
        for e in l.edges() {
            let width = l.layer_size(e.layer + 1);
            let j = e.next - l.state_offset(e.layer + 1);
            if width == 1 || j == e.action {
                p[e.index] = 1.0;
            }
        }
        let kernel = TransitionModel::from_values(&l, p).unwrap();
        (l, kernel)
    }

    #[test]
    fn shortest_path_without_constraints() {
        let (l, kernel) = deterministic();
        let costs: Vec<f64> = (0..l.edge_count()).map(|e| ((e * 7) % 5) as f64 / 5.0).collect();
        let f = StageFunction::from_values(&l, costs.clone()).unwrap();
        let problem = HindsightProblem::new(l.clone(), kernel.clone(), f, vec![], vec![]).unwrap();
        let sol = solve_best_fixed(&problem).unwrap();

        // Enumerate the 4 paths s0 → u → v → end by hand.
        let mut best = f64::INFINITY;
        for a0 in 0..2 {
            for a1 in 0..2 {
                let u = 1 + a0;
                let v = 3 + a1;
                let mut total = costs[l.edge_index(0, a0, u).unwrap()];
                total += costs[l.edge_index(u, a1, v).unwrap()];
                total += (0..2).map(|a| costs[l.edge_index(v, a, 5).unwrap()]).fold(f64::INFINITY, f64::min);
                best = best.min(total);
            }
        }
        assert!((sol.value - best).abs() < 1e-12, "{} vs {best}", sol.value);
        assert!(sol.theta.values().iter().all(|&v| v.abs() < 1e-12 || (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn infeasible_threshold_is_an_error() {
        let (l, kernel) = make_random_mdp(&[1, 2, 1], 2, 3).unwrap();
        let g = StageFunction::constant(&l, 0.4);
        // Every measure has ⟨g, θ⟩ = 0.4 · L = 0.8.
        let problem =
            HindsightProblem::new(l.clone(), kernel, StageFunction::zeros(&l), vec![g], vec![0.7]).unwrap();
        assert!(matches!(solve_best_fixed(&problem), Err(Error::Infeasible { .. })));
        assert!(brute_force_best_fixed(&problem, 1e-3).unwrap().is_none());
    }

    #[test]
    fn binding_constraint_matches_brute_force() {
        let (l, kernel) = make_random_mdp(&[1, 2, 1], 2, 11).unwrap();
        let f = StageFunction::from_values(&l, (0..l.edge_count()).map(|e| (e as f64 * 0.37).sin()).collect())
            .unwrap();
        let g = StageFunction::from_values(&l, (0..l.edge_count()).map(|e| 0.5 * (e as f64 * 0.91).cos().abs()).collect())
            .unwrap();
        let base = HindsightProblem::new(l.clone(), kernel.clone(), f.clone(), vec![g.clone()], vec![0.0]).unwrap();
        let (lo, hi) = base.constraint_range(0).unwrap();
        let problem = HindsightProblem { thresholds: vec![lo + 0.3 * (hi - lo)], ..base };
        let lp = solve_best_fixed(&problem).unwrap();
        let (theta, value) = brute_force_best_fixed(&problem, 1e-5).unwrap().unwrap();
        assert!((lp.value - value).abs() < 1e-4, "{} vs {value}", lp.value);
        assert!(lp.value <= value + 1e-9);
        assert!(lp.constraint_residual <= 1e-9);
        assert!(validate_occupancy(&lp.theta, &l).unwrap().is_ok());
        assert!(conditional_residual(&lp.theta, &kernel, &l) < 1e-12);
        assert!(validate_occupancy(&theta, &l).unwrap().is_ok());
    }

    #[test]
    fn size_guard() {
        let (l, kernel) = make_random_mdp(&[1, 3, 3, 1], 2, 1).unwrap();
        let problem = HindsightProblem::new(l.clone(), kernel, StageFunction::zeros(&l), vec![], vec![]).unwrap();
        assert!(brute_force_best_fixed(&problem, 0.1).is_err());
    }
}
