//! How the agent turns visit counts into a confidence set.

use std::cell::RefCell;
use std::fmt;

use crate::cmdp::{MdpLayout, TransitionModel};
use crate::error::{parameter, Result};
use crate::kv::{KvMap, KvWriter};
use crate::learner::{ConfidenceSet, Counters};
use crate::registry::Registry;

pub trait ModelEstimator: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Confidence set for the epoch the counters are in.
    fn confidence_set(&self, layout: &MdpLayout, counters: &Counters, horizon: usize, zeta: f64) -> Result<ConfidenceSet>;

    fn write_params(&self, _out: &mut KvWriter) {}
}

/// Constructor input: the true kernel (used only by `known`) and the
/// `model_*` keys of the run config with the prefix stripped.
pub struct ModelContext {
    pub kernel: TransitionModel,
    pub params: RefCell<KvMap>,
}

/// `empirical` (counts plus L1 radii) and `known` (true kernel, fixed radius).
pub fn registry() -> Registry<dyn ModelEstimator, ModelContext> {
    let mut r: Registry<dyn ModelEstimator, ModelContext> = Registry::new("model estimator");
    r.register("empirical", |_| Ok(Box::new(Empirical))).register("known", |ctx| {
        let radius: f64 = ctx.params.borrow_mut().take("radius")?.unwrap_or(0.0);
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(parameter(format!("model_radius {radius} must be a finite non-negative number")));
        }
        Ok(Box::new(Known { kernel: ctx.kernel.clone(), radius }))
    });
    r
}

#[derive(Debug, Clone, Copy)]
pub struct Empirical;

impl ModelEstimator for Empirical {
    fn name(&self) -> &'static str {
        "empirical"
    }

    fn confidence_set(&self, layout: &MdpLayout, counters: &Counters, horizon: usize, zeta: f64) -> Result<ConfidenceSet> {
        ConfidenceSet::from_counters(layout, counters, horizon, zeta)
    }
}

/// `P̂ := P` with the same radius at every pair, independent of the counts.
#[derive(Debug, Clone)]
pub struct Known {
    pub kernel: TransitionModel,
    pub radius: f64,
}

impl ModelEstimator for Known {
    fn name(&self) -> &'static str {
        "known"
    }

    fn confidence_set(&self, layout: &MdpLayout, counters: &Counters, horizon: usize, zeta: f64) -> Result<ConfidenceSet> {
        let mut cs = ConfidenceSet::around_kernel(&self.kernel, layout, self.radius, horizon, zeta);
        cs.epoch = counters.epoch;
        Ok(cs)
    }

    fn write_params(&self, out: &mut KvWriter) {
        out.put("model_radius", self.radius);
    }
}
