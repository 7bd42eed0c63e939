//! Stochastic constraint families: i.i.d. draws `g_i^t` around fixed means `g_i`.

use std::cell::RefCell;
use std::fmt;

use rand::{Rng, RngCore};

use crate::cmdp::{MdpLayout, StageFunction};
use crate::error::{parameter, Result};
use crate::kv::{KvMap, KvWriter};
use crate::registry::Registry;

/// Zero-mean perturbation applied to each constraint's mean function.
pub trait ConstraintNoise: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Largest absolute deviation a draw can add to any entry.
    fn amplitude(&self) -> f64;

    fn perturb(&self, mean: &StageFunction, rng: &mut dyn RngCore) -> StageFunction;

    fn write_params(&self, out: &mut KvWriter);
}

pub struct NoiseContext {
    pub params: RefCell<KvMap>,
}

/// Built-in families: `none`, `bernoulli` (±δ per edge), `uniform` (U[−δ, δ] per edge).
pub fn registry() -> Registry<dyn ConstraintNoise, NoiseContext> {
    let mut r: Registry<dyn ConstraintNoise, NoiseContext> = Registry::new("constraint noise");
    r.register("none", |_| Ok(Box::new(NoNoise)))
        .register("bernoulli", |ctx| Ok(Box::new(Bernoulli { delta: delta(ctx)? })))
        .register("uniform", |ctx| Ok(Box::new(Uniform { delta: delta(ctx)? })));
    r
}

fn delta(ctx: &NoiseContext) -> Result<f64> {
    let d: f64 = ctx.params.borrow_mut().take("delta")?.unwrap_or(0.1);
    if !(0.0..=1.0).contains(&d) {
        return Err(parameter(format!("constraint_delta {d} outside [0, 1]")));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy)]
pub struct NoNoise;

impl ConstraintNoise for NoNoise {
    fn name(&self) -> &'static str {
        "none"
    }

    fn amplitude(&self) -> f64 {
        0.0
    }

    fn perturb(&self, mean: &StageFunction, _rng: &mut dyn RngCore) -> StageFunction {
        mean.clone()
    }

    fn write_params(&self, _out: &mut KvWriter) {}
}

#[derive(Debug, Clone, Copy)]
pub struct Bernoulli {
    pub delta: f64,
}

impl ConstraintNoise for Bernoulli {
    fn name(&self) -> &'static str {
        "bernoulli"
    }

    fn amplitude(&self) -> f64 {
        self.delta
    }

    fn perturb(&self, mean: &StageFunction, rng: &mut dyn RngCore) -> StageFunction {
        let mut out = mean.clone();
        for v in out.values_mut() {
            *v += if rng.random::<bool>() { self.delta } else { -self.delta };
        }
        out
    }

    fn write_params(&self, out: &mut KvWriter) {
        out.put("constraint_delta", self.delta);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Uniform {
    pub delta: f64,
}

impl ConstraintNoise for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn amplitude(&self) -> f64 {
        self.delta
    }

    fn perturb(&self, mean: &StageFunction, rng: &mut dyn RngCore) -> StageFunction {
        let mut out = mean.clone();
        for v in out.values_mut() {
            *v += self.delta * (2.0 * rng.random::<f64>() - 1.0);
        }
        out
    }

    fn write_params(&self, out: &mut KvWriter) {
        out.put("constraint_delta", self.delta);
    }
}

/// `I` constraint functions with declared means and a shared noise family.
#[derive(Debug)]
pub struct ConstraintFamily {
    means: Vec<StageFunction>,
    noise: Box<dyn ConstraintNoise>,
    horizon: usize,
}

impl ConstraintFamily {
    /// Rejects families whose draws could break `Σ_i sup|g_i^t| ≤ 1`.
    pub fn new(layout: &MdpLayout, means: Vec<StageFunction>, noise: Box<dyn ConstraintNoise>, horizon: usize) -> Result<Self> {
        if means.iter().any(|m| m.len() != layout.edge_count()) {
            return Err(parameter("constraint mean does not match the layout"));
        }
        let bound: f64 = means.iter().map(|m| m.sup_norm() + noise.amplitude()).sum();
        if bound > 1.0 + 1e-12 {
            return Err(parameter(format!(
                "constraint family can reach Σ_i sup|g_i| = {bound:.6} > 1"
            )));
        }
        Ok(Self { means, noise, horizon })
    }

    pub fn count(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[StageFunction] {
        &self.means
    }

    pub fn noise(&self) -> &dyn ConstraintNoise {
        self.noise.as_ref()
    }

    /// One draw `(g_1^t, …, g_I^t)`; independent of `t` beyond the range check.
    pub fn constraints_at(&self, t: usize, rng: &mut dyn RngCore) -> Result<Vec<StageFunction>> {
        if t == 0 || t > self.horizon {
            return Err(parameter(format!("episode {t} outside 1..={}", self.horizon)));
        }
        Ok(self.means.iter().map(|m| self.noise.perturb(m, rng)).collect())
    }
}
