//! Run configuration: flat `key = value` lines.
//!
//! | key | meaning |
//! |-----|---------|
//! | `T` | horizon (required) |
//! | `seed` | master seed (default 0) |
//! | `schedule` | `theorem` (default) or `explicit` |
//! | `V`, `alpha`, `lambda` | required with `schedule = explicit`, rejected otherwise |
//! | `zeta` | confidence level in (0, 1) (default 0.1) |
//! | `model` | model estimator name (default `empirical`); `model_*` keys go to it |
//! | `solver_tol`, `solver_max_iter`, `solver_warm_start` | projection solver settings |
//! | `out_dir` | output directory (default `out`) |
//! | `trace_every` | write every k-th `θ^t` to `trace.jsonl`; 0 disables (default) |
//! | `scenario` | scenario file, relative to the config file |
//! | `scenario.*` | inline scenario keys, instead of `scenario` |

use std::cell::RefCell;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use ucpd_core::agent::{model_registry, Agent, AgentConfig, ModelContext};
use ucpd_core::env::Scenario;
use ucpd_core::kv::KvMap;
use ucpd_core::orlp::SolverOptions;

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// `V = L√T`, `α = LT`, `λ = 1/T`.
    Theorem,
    Explicit { v: f64, alpha: f64, lambda: f64 },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub horizon: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub zeta: f64,
    pub model: String,
    pub model_params: KvMap,
    pub solver: SolverOptions,
    pub out_dir: PathBuf,
    pub trace_every: usize,
    pub scenario: KvMap,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    /// Parses config text; `base` resolves a relative `scenario` path.
    pub fn parse(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut map = KvMap::parse(text)?;
        let horizon: usize = map.require("T")?;
        if horizon == 0 {
            bail!("T must be at least 1");
        }
        let seed = map.take("seed")?.unwrap_or(0);
        let v: Option<f64> = map.take("V")?;
        let alpha: Option<f64> = map.take("alpha")?;
        let lambda: Option<f64> = map.take("lambda")?;
        let schedule = match map.take_str("schedule").as_deref().unwrap_or("theorem") {
            "theorem" => {
                if v.is_some() || alpha.is_some() || lambda.is_some() {
                    bail!("V, alpha and lambda are derived under schedule = theorem; use schedule = explicit to set them");
                }
                Schedule::Theorem
            }
            "explicit" => Schedule::Explicit {
                v: v.ok_or_else(|| anyhow!("schedule = explicit needs V"))?,
                alpha: alpha.ok_or_else(|| anyhow!("schedule = explicit needs alpha"))?,
                lambda: lambda.ok_or_else(|| anyhow!("schedule = explicit needs lambda"))?,
            },
            other => bail!("unknown schedule '{other}' (known: theorem, explicit)"),
        };
        let zeta: f64 = map.take("zeta")?.unwrap_or(0.1);
        if !(zeta > 0.0 && zeta < 1.0) {
            bail!("zeta out of (0,1): {zeta}");
        }
        let model = map.take_str("model").unwrap_or_else(|| "empirical".into());
        let model_params = map.take_prefixed("model_");

        let mut solver = SolverOptions::default();
        if let Some(tol) = map.take::<f64>("solver_tol")? {
            if !(tol > 0.0) {
                bail!("solver_tol must be positive");
            }
            solver.tolerance = tol;
        }
        if let Some(n) = map.take("solver_max_iter")? {
            solver.max_iterations = n;
        }
        if let Some(w) = map.take("solver_warm_start")? {
            solver.warm_start = w;
        }
        let out_dir = PathBuf::from(map.take_str("out_dir").unwrap_or_else(|| "out".into()));
        let trace_every = map.take("trace_every")?.unwrap_or(0);

        let inline = map.take_prefixed("scenario.");
        let scenario = match map.take_str("scenario") {
            Some(file) => {
                if !inline.is_empty() {
                    bail!("give the scenario either as a file or inline, not both");
                }
                let path = base.join(file);
                let text =
                    std::fs::read_to_string(&path).with_context(|| format!("reading scenario {}", path.display()))?;
                KvMap::parse(&text).with_context(|| format!("in scenario {}", path.display()))?
            }
            None if inline.is_empty() => bail!("missing required key 'scenario'"),
            None => inline,
        };
        map.finish()?;

        let config = Self { horizon, seed, schedule, zeta, model, model_params, solver, out_dir, trace_every, scenario };
        // Surface scenario and model errors at parse time.
        let scenario = config.scenario(horizon)?;
        config.agent(&scenario)?;
        Ok(config)
    }

    /// Builds the scenario for horizon `horizon`.
    pub fn scenario(&self, horizon: usize) -> anyhow::Result<Scenario> {
        let mut map = self.scenario.clone();
        let scenario = Scenario::from_kv(&mut map, horizon).context("scenario")?;
        map.finish().context("scenario")?;
        Ok(scenario)
    }

    pub fn agent_config(&self, scenario: &Scenario) -> anyhow::Result<AgentConfig> {
        let thresholds = scenario.thresholds.clone();
        let mut config = match self.schedule {
            Schedule::Theorem => AgentConfig::theorem(&scenario.layout, scenario.horizon, self.zeta, thresholds)?,
            Schedule::Explicit { v, alpha, lambda } => AgentConfig {
                v,
                alpha,
                lambda,
                zeta: self.zeta,
                horizon: scenario.horizon,
                thresholds,
                solver: SolverOptions::default(),
            },
        };
        config.solver = self.solver.clone();
        config.validate()?;
        Ok(config)
    }

    pub fn agent(&self, scenario: &Scenario) -> anyhow::Result<Agent> {
        let ctx = ModelContext { kernel: scenario.kernel.clone(), params: RefCell::new(self.model_params.clone()) };
        let estimator = model_registry().build(&self.model, &ctx)?;
        ctx.params.into_inner().finish().context("model parameters")?;
        Ok(Agent::new(scenario.layout.clone(), self.agent_config(scenario)?, estimator)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENARIO: &str = "scenario.layers = 1,2,1\nscenario.actions = 2\n";

    fn parse(extra: &str) -> anyhow::Result<RunConfig> {
        RunConfig::parse(&format!("{SCENARIO}{extra}"), Path::new("."))
    }

    #[test]
    fn theorem_schedule_is_derived() {
        let config = parse("T = 1000\n").unwrap();
        let scenario = config.scenario(config.horizon).unwrap();
        let agent = config.agent_config(&scenario).unwrap();
        let l = 2.0;
        assert!((agent.v - l * 1000f64.sqrt()).abs() < 1e-12);
        assert_eq!(agent.alpha, 1000.0 * l);
        assert_eq!(agent.lambda, 1e-3);
    }

    #[test]
    fn zeta_range_is_checked() {
        let err = parse("T = 10\nzeta = 1.5\n").unwrap_err();
        assert!(format!("{err:#}").contains("zeta out of (0,1)"), "{err:#}");
    }

    #[test]
    fn duplicate_and_unknown_keys_name_their_line() {
        let err = parse("T = 10\nT = 20\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 4"), "{err:#}");
        let err = parse("T = 10\nbogus = 1\n").unwrap_err();
        assert!(format!("{err:#}").contains("unknown key 'bogus'"), "{err:#}");
        let err = parse("T = 10\nscenario.bogus = 1\n").unwrap_err();
        assert!(format!("{err:#}").contains("bogus"), "{err:#}");
    }

    #[test]
    fn explicit_schedule_needs_all_three() {
        assert!(parse("T = 10\nschedule = explicit\nV = 1\nalpha = 2\n").is_err());
        let config = parse("T = 10\nschedule = explicit\nV = 1\nalpha = 2\nlambda = 0.1\n").unwrap();
        assert_eq!(config.schedule, Schedule::Explicit { v: 1.0, alpha: 2.0, lambda: 0.1 });
        assert!(parse("T = 10\nV = 1\n").is_err());
    }

    #[test]
    fn missing_pieces() {
        assert!(RunConfig::parse(SCENARIO, Path::new(".")).is_err());
        assert!(RunConfig::parse("T = 10\n", Path::new(".")).is_err());
        assert!(parse("T = 10\nmodel = oracle\n").is_err());
        assert!(parse("T = 10\nmodel = known\nmodel_radius = 2.5\n").is_ok());
        assert!(parse("T = 0\n").is_err());
    }
}
