use super::{MdpLayout, OccupancyMeasure, Policy, StageFunction, TransitionModel};
use crate::error::{parameter, structural, Error, Result};

/// Residual tolerance for the occupancy polytope conditions.
pub const POLYTOPE_TOL: f64 = 1e-9;

/// One violated polytope condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Layer `layer` does not carry unit mass.
    LayerMass { layer: usize, residual: f64 },
    /// Inflow and outflow of an interior state differ.
    Flow { state: usize, residual: f64 },
    /// A negative entry.
    Negative { edge: usize, value: f64 },
}

impl Violation {
    pub fn residual(&self) -> f64 {
        match *self {
            Violation::LayerMass { residual, .. } | Violation::Flow { residual, .. } => residual,
            Violation::Negative { value, .. } => -value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub layer_residuals: Vec<f64>,
    /// Indexed by state; zero for the initial and terminal states.
    pub flow_residuals: Vec<f64>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Largest residual over both conditions (and negativity).
    pub fn max_residual(&self) -> f64 {
        self.layer_residuals
            .iter()
            .chain(&self.flow_residuals)
            .copied()
            .chain(self.violations.iter().map(Violation::residual))
            .fold(0.0, f64::max)
    }
}

/// Checks per-layer normalization, non-negativity and flow conservation.
pub fn validate_occupancy(theta: &OccupancyMeasure, layout: &MdpLayout) -> Result<ValidationReport> {
    validate_with_tolerance(theta, layout, POLYTOPE_TOL)
}

pub fn validate_with_tolerance(
    theta: &OccupancyMeasure,
    layout: &MdpLayout,
    tol: f64,
) -> Result<ValidationReport> {
    if theta.len() != layout.edge_count() {
        return Err(structural(format!(
            "occupancy has {} entries, layout has {} edges",
            theta.len(),
            layout.edge_count()
        )));
    }
    let mut violations = Vec::new();
    for (edge, &v) in theta.values().iter().enumerate() {
        if v < 0.0 {
            violations.push(Violation::Negative { edge, value: v });
        }
    }
    let layer_residuals: Vec<f64> =
        theta.layer_mass(layout).into_iter().map(|m| (m - 1.0).abs()).collect();
    for (layer, &residual) in layer_residuals.iter().enumerate() {
        if residual > tol {
            violations.push(Violation::LayerMass { layer, residual });
        }
    }
    let (inflow, outflow) = theta.state_flows(layout);
    let mut flow_residuals = vec![0.0; layout.state_count()];
    for k in 1..layout.depth() {
        for state in layout.layer_states(k) {
            let residual = (inflow[state] - outflow[state]).abs();
            flow_residuals[state] = residual;
            if residual > tol {
                violations.push(Violation::Flow { state, residual });
            }
        }
    }
    Ok(ValidationReport { layer_residuals, flow_residuals, violations })
}

/// Largest denominator-cleared deviation `Σ_{s'} |θ(s,a,s') − P(s'|s,a) m(s,a)|`
/// over pairs, i.e. how far `θ` is from having conditionals equal to `kernel`.
pub fn conditional_residual(theta: &OccupancyMeasure, kernel: &TransitionModel, layout: &MdpLayout) -> f64 {
    let mass = theta.pair_mass(layout);
    (0..layout.pair_count())
        .map(|pair| {
            let start = layout.pair_edge_start(pair);
            kernel
                .row(layout, pair)
                .iter()
                .enumerate()
                .map(|(j, p)| (theta.values()[start + j] - p * mass[pair]).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// `π(a|s) = Σ_{s'} θ(s,a,s') / Σ_{a,s'} θ(s,a,s')`; states carrying no mass get
/// the uniform action distribution.
pub fn recover_policy(theta: &OccupancyMeasure, layout: &MdpLayout) -> Result<Policy> {
    if theta.len() != layout.edge_count() {
        return Err(structural("occupancy does not match the layout"));
    }
    let a = layout.actions();
    let mut probs = theta.pair_mass(layout);
    for row in probs.chunks_mut(a) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|p| *p /= total);
            // Renormalize once more so the row sums to one to machine precision.
            let again: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= again);
        } else {
            row.fill(1.0 / a as f64);
        }
    }
    Policy::from_probs(layout, probs)
}

/// Convex combination with the uniform measure:
/// `(1 − λ) θ + λ / (|S_k||S_{k+1}||A|)`.
pub fn mix_with_uniform(theta: &OccupancyMeasure, layout: &MdpLayout, lambda: f64) -> Result<OccupancyMeasure> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(parameter(format!("mixing weight {lambda} outside [0, 1]")));
    }
    if theta.len() != layout.edge_count() {
        return Err(structural("occupancy does not match the layout"));
    }
    let mut values = theta.values().to_vec();
    for k in 0..layout.depth() {
        let floor = lambda / layout.block_len(k) as f64;
        for v in &mut values[layout.edge_range(k)] {
            *v = (1.0 - lambda) * *v + floor;
        }
    }
    OccupancyMeasure::from_values(layout, values)
}

/// Unnormalized KL divergence `Σ [θ ln(θ/θ') − θ + θ']` with `0 ln 0 = 0`.
pub fn unnormalized_kl(theta: &OccupancyMeasure, reference: &OccupancyMeasure) -> Result<f64> {
    unnormalized_kl_slices(theta.values(), reference.values())
}

pub(crate) fn unnormalized_kl_slices(theta: &[f64], reference: &[f64]) -> Result<f64> {
    if theta.len() != reference.len() {
        return Err(structural("divergence arguments differ in shape"));
    }
    let mut total = 0.0;
    for (edge, (&x, &y)) in theta.iter().zip(reference).enumerate() {
        if x > 0.0 {
            if y <= 0.0 {
                return Err(Error::DivergenceUndefined { edge, value: x });
            }
            total += x * (x / y).ln() - x + y;
        } else {
            total += y;
        }
    }
    Ok(total)
}

/// `⟨f, θ⟩ = Σ f(s,a,s') θ(s,a,s')`.
pub fn inner_product(func: &StageFunction, theta: &OccupancyMeasure) -> Result<f64> {
    if func.len() != theta.len() {
        return Err(structural(format!(
            "stage function has {} entries, occupancy has {}",
            func.len(),
            theta.len()
        )));
    }
    Ok(func.values().iter().zip(theta.values()).map(|(f, t)| f * t).sum())
}
