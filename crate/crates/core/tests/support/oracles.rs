//! Independent reference computations shared by the integration and
//! acceptance tests. Nothing here calls the projection solver.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ucpd_core::cmdp::{MdpLayout, OccupancyMeasure, Policy, TransitionModel};
use ucpd_core::env::true_occupancy;
use ucpd_core::learner::ConfidenceSet;

/// `⟨ψ, θ⟩ + α D(θ, θ̃)` with `0 ln 0 = 0`.
pub fn orlp_objective(theta: &[f64], psi: &[f64], alpha: f64, mixed: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((t, p), m) in theta.iter().zip(psi).zip(mixed) {
        let kl = if *t > 0.0 { t * (t / m).ln() - t + m } else { *m };
        total += p * t + alpha * kl;
    }
    total
}

/// Random distribution of length `n` (flat Dirichlet).
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub fn random_kernel(rng: &mut ChaCha8Rng, layout: &MdpLayout) -> TransitionModel {
    let mut values = vec![0.0; layout.edge_count()];
    for pair in 0..layout.pair_count() {
        let w = layout.successors_of_pair(pair);
        let start = layout.pair_edge_start(pair);
        values[start..start + w].copy_from_slice(&random_simplex(rng, w));
    }
    TransitionModel::from_values(layout, values).unwrap()
}

pub fn random_policy(rng: &mut ChaCha8Rng, layout: &MdpLayout) -> Policy {
    let a = layout.actions();
    let mut probs = Vec::with_capacity(layout.pair_count());
    for _ in 0..layout.state_count() - 1 {
        probs.extend(random_simplex(rng, a));
    }
    Policy::from_probs(layout, probs).unwrap()
}

/// A random member of `Δ(ℓ,ζ)`: the occupancy of a random policy under a kernel
/// whose rows sit inside the L1 balls around `P̂` (which must have proper rows).
pub fn random_member(rng: &mut ChaCha8Rng, layout: &MdpLayout, cs: &ConfidenceSet) -> OccupancyMeasure {
    let mut values = vec![0.0; layout.edge_count()];
    for pair in 0..layout.pair_count() {
        let w = layout.successors_of_pair(pair);
        let start = layout.pair_edge_start(pair);
        let r = random_simplex(rng, w);
        // ‖(1−u)P̂ + u r − P̂‖₁ = u ‖r − P̂‖₁ ≤ 2u.
        let u = rng.random::<f64>() * (cs.epsilon[pair] / 2.0).min(1.0);
        for j in 0..w {
            values[start + j] = (1.0 - u) * cs.p_hat[start + j] + u * r[j];
        }
    }
    let kernel = TransitionModel::from_values(layout, values).unwrap();
    true_occupancy(layout, &random_policy(rng, layout), &kernel)
}

/// Unnormalized KL projection onto the affine set of conditions (a) and (b)
/// by cyclic Bregman projections: rescale layer 0 to unit mass, then balance
/// each interior state's inflow against its outflow multiplicatively.
pub fn bregman_flow_projection(layout: &MdpLayout, base: &[f64]) -> Vec<f64> {
    let mut theta = base.to_vec();
    for _ in 0..200_000 {
        let before = theta.clone();
        let r0 = layout.edge_range(0);
        let mass: f64 = theta[r0.clone()].iter().sum();
        theta[r0].iter_mut().for_each(|v| *v /= mass);
        for k in 1..layout.depth() {
            for s in layout.layer_states(k) {
                let inflow: f64 = layout.edges().filter(|e| e.next == s).map(|e| theta[e.index]).sum();
                let outflow: f64 = layout.edges().filter(|e| e.state == s).map(|e| theta[e.index]).sum();
                let eta = 0.5 * (inflow / outflow).ln();
                for e in layout.edges() {
                    if e.next == s {
                        theta[e.index] *= (-eta).exp();
                    }
                    if e.state == s {
                        theta[e.index] *= eta.exp();
                    }
                }
            }
        }
        let change: f64 = theta.iter().zip(&before).map(|(a, b)| (a - b).abs()).sum();
        if change < 1e-15 {
            break;
        }
    }
    theta
}
