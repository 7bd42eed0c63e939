//! A complete simulated world, built from and serialized to flat key=value text.
//!
//! Recognized keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `layers` | layer sizes, e.g. `1,3,3,1` |
//! | `actions` | action count |
//! | `mdp_seed` | seed of the random kernel (default 0) |
//! | `kernel` | explicit kernel in edge order, overrides `mdp_seed` |
//! | `loss` | loss schedule name; `loss_*` keys go to the schedule |
//! | `constraints` | number of constraint functions `I` (default 0) |
//! | `constraint_seed` | seed of the random means (default 0) |
//! | `constraint_mean.<i>` | explicit mean of constraint `i` in edge order |
//! | `constraint_noise` | noise family name; `constraint_delta` is its amplitude |
//! | `thresholds` | explicit `c`, one per constraint |
//! | `threshold_fraction` | otherwise `c_i = lo_i + q (hi_i − lo_i)` over the true polytope (default 0.5) |
//! | `slater_slack` | required strict feasibility margin (default 0) |

use std::cell::RefCell;

use rand::Rng;

use crate::cmdp::{MdpLayout, StageFunction, TransitionModel};
use crate::error::{parameter, Result};
use crate::kv::{KvMap, KvWriter};
use crate::oracle::{solve_best_fixed, HindsightProblem};
use crate::rng;

use super::mdp::make_random_mdp;
use super::noise::{self, ConstraintFamily, NoiseContext};
use super::schedule::{self, LossSchedule, ScheduleContext};

#[derive(Debug)]
pub struct Scenario {
    pub layout: MdpLayout,
    pub kernel: TransitionModel,
    pub horizon: usize,
    pub loss: Box<dyn LossSchedule>,
    pub constraints: ConstraintFamily,
    pub thresholds: Vec<f64>,
    pub slater_slack: f64,
}

impl Scenario {
    /// Parses a scenario; unknown keys are an error.
    pub fn parse(text: &str, horizon: usize) -> Result<Self> {
        let mut map = KvMap::parse(text)?;
        let s = Self::from_kv(&mut map, horizon)?;
        map.finish()?;
        Ok(s)
    }

    /// Builds a scenario from the keys it recognizes, leaving the others in `map`.
    pub fn from_kv(map: &mut KvMap, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(parameter("horizon must be at least 1"));
        }
        let layers: Vec<usize> = map.take_list("layers")?.ok_or_else(|| missing("layers"))?;
        let actions: usize = map.require("actions")?;
        let mdp_seed: u64 = map.take("mdp_seed")?.unwrap_or(0);
        let (layout, kernel) = match map.take_list::<f64>("kernel")? {
            Some(values) => {
                let layout = MdpLayout::new(&layers, actions)?;
                let kernel = TransitionModel::from_values(&layout, values)?;
                (layout, kernel)
            }
            None => make_random_mdp(&layers, actions, mdp_seed)?,
        };

        let loss_name = map.take_str("loss").unwrap_or_else(|| "constant".into());
        let ctx = ScheduleContext { layout: layout.clone(), horizon, params: RefCell::new(map.take_prefixed("loss_")) };
        let loss = schedule::registry().build(&loss_name, &ctx)?;
        ctx.params.into_inner().finish()?;

        let count: usize = map.take("constraints")?.unwrap_or(0);
        let noise_name = map.take_str("constraint_noise").unwrap_or_else(|| "none".into());
        let mut noise_map = KvMap::default();
        if let Some(delta) = map.take_str("constraint_delta") {
            noise_map.insert("delta", delta);
        }
        let nctx = NoiseContext { params: RefCell::new(noise_map) };
        let noise = noise::registry().build(&noise_name, &nctx)?;
        nctx.params.into_inner().finish()?;

        let seed: u64 = map.take("constraint_seed")?.unwrap_or(0);
        let mut explicit = map.take_prefixed("constraint_mean.");
        let budget = if count == 0 { 0.0 } else { 1.0 / count as f64 - noise.amplitude() };
        let mut means = Vec::with_capacity(count);
        for i in 0..count {
            let values = match explicit.take_list::<f64>(&i.to_string())? {
                Some(v) => v,
                None => {
                    if budget < 0.0 {
                        return Err(parameter("constraint noise leaves no room for random means"));
                    }
                    let mut g = rng::indexed_stream(seed, "constraint-mean", i as u64);
                    (0..layout.edge_count()).map(|_| g.random::<f64>() * budget).collect()
                }
            };
            means.push(StageFunction::from_values(&layout, values)?);
        }
        explicit.finish()?;
        let constraints = ConstraintFamily::new(&layout, means, noise, horizon)?;

        let slater_slack: f64 = map.take("slater_slack")?.unwrap_or(0.0);
        if !(slater_slack >= 0.0) {
            return Err(parameter(format!("slater_slack {slater_slack} must be non-negative")));
        }
        let fraction: Option<f64> = map.take("threshold_fraction")?;
        let thresholds = match map.take_list::<f64>("thresholds")? {
            Some(c) => {
                if fraction.is_some() {
                    return Err(parameter("set either thresholds or threshold_fraction, not both"));
                }
                c
            }
            None => {
                let q = fraction.unwrap_or(0.5);
                if !(0.0..=1.0).contains(&q) {
                    return Err(parameter(format!("threshold_fraction {q} outside [0, 1]")));
                }
                let probe = HindsightProblem::new(
                    layout.clone(),
                    kernel.clone(),
                    StageFunction::zeros(&layout),
                    constraints.means().to_vec(),
                    vec![0.0; count],
                )?;
                (0..count)
                    .map(|i| probe.constraint_range(i).map(|(lo, hi)| lo + q * (hi - lo)))
                    .collect::<Result<_>>()?
            }
        };

        let scenario = Self { layout, kernel, horizon, loss, constraints, thresholds, slater_slack };
        scenario.check()?;
        Ok(scenario)
    }

    /// Normalization and strict feasibility. Refuses scenarios without a
    /// fixed policy meeting every expected constraint by `slater_slack`.
    pub fn check(&self) -> Result<()> {
        let count = self.constraints.count();
        if self.thresholds.len() != count {
            return Err(parameter(format!("{} thresholds for {count} constraints", self.thresholds.len())));
        }
        let total: f64 = self.thresholds.iter().map(|c| c.abs()).sum();
        if total > self.layout.depth() as f64 + 1e-12 {
            return Err(parameter(format!(
                "Σ|c_i| = {total:.6} exceeds the episode length {}",
                self.layout.depth()
            )));
        }
        for t in [1, self.horizon] {
            if self.loss.loss_at(t)?.sup_norm() > 1.0 {
                return Err(parameter(format!("loss at episode {t} exceeds 1 in sup-norm")));
            }
        }
        if count > 0 {
            solve_best_fixed(&self.hindsight(StageFunction::zeros(&self.layout))?.with_slack(self.slater_slack))?;
        }
        Ok(())
    }

    /// Benchmark problem for summed losses `losses` and the declared means.
    pub fn hindsight(&self, losses: StageFunction) -> Result<HindsightProblem> {
        HindsightProblem::new(
            self.layout.clone(),
            self.kernel.clone(),
            losses,
            self.constraints.means().to_vec(),
            self.thresholds.clone(),
        )
    }

    /// `F = Σ_{t ≤ T} f^t`.
    pub fn summed_losses(&self) -> Result<StageFunction> {
        let mut total = StageFunction::zeros(&self.layout);
        for t in 1..=self.horizon {
            total.add_scaled(1.0, &self.loss.loss_at(t)?);
        }
        Ok(total)
    }

    /// Fully materialized form: kernel, means and thresholds written out, so the
    /// text reproduces this scenario without reference to any seed.
    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::default();
        w.put_list("layers", self.layout.layer_sizes())
            .put("actions", self.layout.actions())
            .put_list("kernel", self.kernel.values())
            .put("loss", self.loss.name());
        self.loss.write_params(&mut w);
        w.put("constraints", self.constraints.count())
            .put("constraint_noise", self.constraints.noise().name());
        self.constraints.noise().write_params(&mut w);
        for (i, g) in self.constraints.means().iter().enumerate() {
            w.put_list(&format!("constraint_mean.{i}"), g.values());
        }
        if !self.thresholds.is_empty() {
            w.put_list("thresholds", &self.thresholds);
        }
        w.put("slater_slack", self.slater_slack);
        w.finish()
    }
}

fn missing(key: &str) -> crate::error::Error {
    crate::error::Error::Parse { line: 0, message: format!("missing required key '{key}'") }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G1: &str = "
layers = 1,3,3,1
actions = 2
mdp_seed = 7
loss = switching
loss_seed = 3
constraints = 1
constraint_noise = bernoulli
constraint_delta = 0.1
threshold_fraction = 0.3
slater_slack = 0.05
";

    #[test]
    fn builds_and_round_trips() {
        let s = Scenario::parse(G1, 100).unwrap();
        assert_eq!(s.constraints.count(), 1);
        assert!(s.constraints.means()[0].sup_norm() <= 0.9);
        let text = s.to_kv();
        let again = Scenario::parse(&text, 100).unwrap();
        assert_eq!(again.kernel, s.kernel);
        assert_eq!(again.thresholds, s.thresholds);
        assert_eq!(again.constraints.means(), s.constraints.means());
        for t in [1, 10, 11, 57, 100] {
            assert_eq!(again.loss.loss_at(t).unwrap(), s.loss.loss_at(t).unwrap());
        }
        assert_eq!(again.to_kv(), text);
    }

    #[test]
    fn infeasible_scenario_is_refused() {
        let text = "layers = 1,2,1\nactions = 2\nconstraints = 1\nconstraint_mean.0 = 0.4,0.4,0.4,0.4,0.4,0.4,0.4,0.4\nthresholds = 0.79\n";
        assert!(matches!(Scenario::parse(text, 5), Err(crate::Error::Infeasible { .. })));
        let ok = text.replace("0.79", "0.8");
        assert!(Scenario::parse(&ok, 5).is_ok());
        let slack = format!("{ok}slater_slack = 0.01\n");
        assert!(Scenario::parse(&slack, 5).is_err());
    }

    #[test]
    fn threshold_budget_and_unknown_keys() {
        let text = "layers = 1,2,1\nactions = 2\nconstraints = 2\nthresholds = 1.5,0.6\n";
        assert!(Scenario::parse(text, 5).is_err());
        assert!(Scenario::parse("layers = 1,2,1\nactions = 2\nbogus = 1\n", 5).is_err());
        assert!(Scenario::parse("layers = 1,2,1\nactions = 2\nloss_bogus = 1\n", 5).is_err());
    }
}
