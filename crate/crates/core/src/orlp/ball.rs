//! KL projection of a distribution onto an L1 ball intersected with the simplex:
//!
//! ```text
//! min_q Σ_j q_j ln(q_j / w_j)   s.t.  Σ_j q_j = 1,  Σ_j |q_j − p_j| ≤ ε.
//! ```
//!
//! Stationarity gives `q_j = w_j e^{−τ − ν s_j}` with `s_j ∈ ∂|q_j − p_j|`.
//! Sorting by `ρ_j = p_j / w_j`, the entries raised above `p` form a prefix `U`,
//! those lowered below it a suffix `D`, and the rest stay at `p`. When the ball
//! binds, `U` gains exactly `ε/2` and `D` loses `ε/2`, so each split has a
//! closed form and only the KKT-consistent one is kept.

use crate::error::{structural, Result};

use super::dual::MAX_SUCCESSORS;

const KKT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BallProjection {
    pub q: [f64; MAX_SUCCESSORS],
    /// `KL(q ‖ w)`.
    pub value: f64,
    /// Multiplier of the L1 constraint; `None` when it is not attained
    /// (some `p_j = 0` forces `q_j = 0` under a zero radius).
    pub nu: Option<f64>,
    /// Subgradient `s_j ∈ [−1, 1]` paired with `ν`.
    pub sign: [f64; MAX_SUCCESSORS],
}

fn xlogy(x: f64, ratio: f64) -> f64 {
    if x > 0.0 {
        x * ratio.ln()
    } else {
        0.0
    }
}

/// `w` must be strictly positive and sum to one; `p` is a distribution or
/// identically zero.
pub(crate) fn ball_projection(w: &[f64], p: &[f64], eps: f64) -> Result<BallProjection> {
    let n = w.len();
    let mut out = BallProjection { q: [0.0; MAX_SUCCESSORS], value: 0.0, nu: Some(0.0), sign: [0.0; MAX_SUCCESSORS] };
    let dist: f64 = w.iter().zip(p).map(|(a, b)| (a - b).abs()).sum();
    if dist <= eps {
        out.q[..n].copy_from_slice(w);
        for j in 0..n {
            out.sign[j] = if w[j] > p[j] { 1.0 } else if w[j] < p[j] { -1.0 } else { 0.0 };
        }
        return Ok(out);
    }
    let p_mass: f64 = p.iter().sum();
    if p_mass <= 0.0 {
        return Err(structural(format!("empty empirical row with radius {eps} < 1 has no feasible point")));
    }

    let mut order: [usize; MAX_SUCCESSORS] = std::array::from_fn(|i| i);
    let order = &mut order[..n];
    let rho: Vec<f64> = (0..n).map(|j| p[j] / w[j]).collect();
    order.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));

    if eps <= 0.0 {
        out.q[..n].copy_from_slice(p);
        out.value = (0..n).map(|j| xlogy(p[j], rho[j])).sum();
        let positive: Vec<f64> = rho.iter().copied().filter(|&r| r > 0.0).collect();
        if positive.len() < n {
            out.nu = None;
        } else {
            let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = positive.iter().copied().fold(0.0, f64::max);
            let nu = 0.5 * (hi / lo).ln();
            let tau = -0.5 * (lo * hi).ln();
            out.nu = Some(nu);
            for j in 0..n {
                out.sign[j] = if nu > 0.0 { (-(rho[j].ln() + tau) / nu).clamp(-1.0, 1.0) } else { 0.0 };
            }
        }
        return Ok(out);
    }

    let half = 0.5 * eps;
    let mut best: Option<(f64, usize, usize, f64, f64)> = None;
    'search: for u in 1..n {
        for d in 1..=n - u {
            let up = &order[..u];
            let down = &order[n - d..];
            let keep = &order[u..n - d];
            let (pu, wu): (f64, f64) = up.iter().fold((0.0, 0.0), |(a, b), &j| (a + p[j], b + w[j]));
            let (pd, wd): (f64, f64) = down.iter().fold((0.0, 0.0), |(a, b), &j| (a + p[j], b + w[j]));
            let a_up = (pu + half) / wu;
            let a_down = (pd - half) / wd;
            if a_down <= 0.0 {
                continue;
            }
            let scale = KKT_TOL * (1.0 + a_up.max(a_down));
            let mut violation = (a_up - a_down).max(0.0);
            for &j in up {
                violation = violation.max(rho[j] - a_up);
            }
            for &j in keep {
                violation = violation.max(a_up - rho[j]).max(rho[j] - a_down);
            }
            for &j in down {
                violation = violation.max(a_down - rho[j]);
            }
            if best.is_none_or(|b| violation < b.0) {
                best = Some((violation, u, d, a_up, a_down));
            }
            if violation <= scale {
                break 'search;
            }
        }
    }
    let (_, u, d, a_up, a_down) = best.ok_or_else(|| structural("L1 ball projection found no split"))?;
    let nu = 0.5 * (a_down / a_up).ln();
    let tau = -0.5 * (a_up * a_down).ln();
    for (rank, &j) in order.iter().enumerate() {
        if rank < u {
            out.q[j] = w[j] * a_up;
            out.sign[j] = 1.0;
        } else if rank >= n - d {
            out.q[j] = w[j] * a_down;
            out.sign[j] = -1.0;
        } else {
            out.q[j] = p[j];
            out.sign[j] = if nu > 0.0 { (-(rho[j].ln() + tau) / nu).clamp(-1.0, 1.0) } else { 0.0 };
        }
    }
    out.value = (0..n).map(|j| xlogy(out.q[j], out.q[j] / w[j])).sum();
    out.nu = Some(nu);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kl(q: &[f64], w: &[f64]) -> f64 {
        q.iter().zip(w).map(|(a, b)| xlogy(*a, a / b)).sum()
    }

    #[test]
    fn inactive_ball_returns_w() {
        let b = ball_projection(&[0.2, 0.8], &[0.3, 0.7], 0.5).unwrap();
        assert_eq!(&b.q[..2], &[0.2, 0.8]);
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn two_point_matches_grid() {
        for (w, p, eps) in [([0.9, 0.1], [0.2, 0.8], 0.4), ([0.05, 0.95], [0.6, 0.4], 0.1), ([0.5, 0.5], [1.0, 0.0], 0.2)] {
            let b = ball_projection(&w, &p, eps).unwrap();
            let grid = (0..=1_000_000)
                .map(|i| i as f64 * 1e-6)
                .filter(|x| (x - p[0]).abs() * 2.0 <= eps + 1e-12)
                .map(|x| kl(&[x, 1.0 - x], &w))
                .fold(f64::INFINITY, f64::min);
            assert!(b.value <= grid + 1e-12 && grid - b.value < 1e-9, "{} vs {grid}", b.value);
            let dist: f64 = b.q[..2].iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
            assert!(dist <= eps + 1e-12);
        }
    }

    #[test]
    fn three_point_beats_random_feasible_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let mut p: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            let eps = rng.random::<f64>() * 0.8;
            let b = ball_projection(&w, &p, eps).unwrap();
            let q = &b.q[..3];
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let dist: f64 = q.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
            assert!(dist <= eps + 1e-12);
            for _ in 0..200 {
                let t = rng.random::<f64>();
                let r: Vec<f64> = {
                    let mut r: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = r.iter().sum();
                    r.iter_mut().for_each(|x| *x /= s);
                    r
                };
                // (1−t)q + t r' with r' inside the ball, r' = p + (eps/2)(r − p)/max(1, ‖r−p‖₁/2).
                let d: f64 = r.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
                let k = (eps / d.max(1e-300)).min(1.0);
                let cand: Vec<f64> = (0..3).map(|j| (1.0 - t) * q[j] + t * (p[j] + k * (r[j] - p[j]))).collect();
                assert!(b.value <= kl(&cand, &w) + 1e-12);
            }
        }
    }

    #[test]
    fn zero_radius_pins_to_p() {
        let b = ball_projection(&[0.3, 0.3, 0.4], &[0.5, 0.25, 0.25], 0.0).unwrap();
        assert_eq!(&b.q[..3], &[0.5, 0.25, 0.25]);
        assert!(b.nu.unwrap() > 0.0);
        let b = ball_projection(&[0.3, 0.7], &[1.0, 0.0], 0.0).unwrap();
        assert!(b.nu.is_none());
    }

    #[test]
    fn empty_row_with_small_radius_is_infeasible() {
        assert!(ball_projection(&[0.5, 0.5], &[0.0, 0.0], 0.5).is_err());
        assert!(ball_projection(&[0.5, 0.5], &[0.0, 0.0], 1.0).is_ok());
    }
}
