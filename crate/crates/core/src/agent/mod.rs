//! The online learner: one ORLP solve per episode, virtual-queue dual updates,
//! and epoch-wise confidence sets.

mod model;

pub use model::{registry as model_registry, Empirical, Known, ModelContext, ModelEstimator};

use crate::cmdp::{inner_product, recover_policy, MdpLayout, OccupancyMeasure, Policy, StageFunction};
use crate::env::Trajectory;
use crate::error::{parameter, structural, Result};
use crate::learner::{ConfidenceSet, Counters};
use crate::orlp::{solve_orlp, DualPoint, OrlpInput, SolverOptions, SolverReport};

/// Virtual queues `Q ∈ R₊^I`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector(Vec<f64>);

impl DualVector {
    pub fn zeros(count: usize) -> Self {
        Self(vec![0.0; count])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|q| q * q).sum::<f64>().sqrt()
    }
}

/// `Q_i ← max(Q_i + ⟨g_i, θ⟩ − c_i, 0)`.
pub fn update_duals(q: &DualVector, g_prev: &[StageFunction], theta: &OccupancyMeasure, c: &[f64]) -> Result<DualVector> {
    if g_prev.len() != q.0.len() || c.len() != q.0.len() {
        return Err(structural("dual, constraint and threshold counts differ"));
    }
    let mut out = Vec::with_capacity(q.0.len());
    for ((qi, gi), ci) in q.0.iter().zip(g_prev).zip(c) {
        out.push((qi + inner_product(gi, theta)? - ci).max(0.0));
    }
    Ok(DualVector(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// Loss weight `V`.
    pub v: f64,
    /// Proximal weight `α`.
    pub alpha: f64,
    /// Uniform mixing weight `λ`.
    pub lambda: f64,
    /// Confidence-set failure probability `ζ`.
    pub zeta: f64,
    pub horizon: usize,
    pub thresholds: Vec<f64>,
    pub solver: SolverOptions,
}

impl AgentConfig {
    /// `V = L√T`, `α = LT`, `λ = 1/T`.
    pub fn theorem(layout: &MdpLayout, horizon: usize, zeta: f64, thresholds: Vec<f64>) -> Result<Self> {
        if horizon == 0 {
            return Err(parameter("horizon must be at least 1"));
        }
        let l = layout.depth() as f64;
        let t = horizon as f64;
        let config = Self {
            v: l * t.sqrt(),
            alpha: l * t,
            lambda: 1.0 / t,
            zeta,
            horizon,
            thresholds,
            solver: SolverOptions::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(parameter(format!("V must be positive, got {}", self.v)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(parameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(parameter(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(parameter(format!("zeta {} outside (0, 1)", self.zeta)));
        }
        if self.horizon == 0 {
            return Err(parameter("horizon must be at least 1"));
        }
        Ok(())
    }
}

/// What the agent commits to at the start of episode `t`.
#[derive(Debug, Clone)]
pub struct EpisodePlan {
    pub t: usize,
    pub theta: OccupancyMeasure,
    pub policy: Policy,
    /// `None` for `t = 1`, which skips the solver.
    pub report: Option<SolverReport>,
    /// `‖Q(t)‖₂ − ‖Q(t−1)‖₂`.
    pub drift: f64,
}

#[derive(Debug)]
pub struct Agent {
    layout: MdpLayout,
    config: AgentConfig,
    estimator: Box<dyn ModelEstimator>,
    t: usize,
    theta: Option<OccupancyMeasure>,
    q: DualVector,
    counters: Counters,
    cs: ConfidenceSet,
    feedback: Option<(StageFunction, Vec<StageFunction>)>,
    warm: Option<DualPoint>,
    planned: bool,
}

impl Agent {
    pub fn new(layout: MdpLayout, config: AgentConfig, estimator: Box<dyn ModelEstimator>) -> Result<Self> {
        config.validate()?;
        let counters = Counters::new(&layout);
        let cs = estimator.confidence_set(&layout, &counters, config.horizon, config.zeta)?;
        let q = DualVector::zeros(config.thresholds.len());
        Ok(Self {
            layout,
            config,
            estimator,
            t: 1,
            theta: None,
            q,
            counters,
            cs,
            feedback: None,
            warm: None,
            planned: false,
        })
    }

    pub fn episode(&self) -> usize {
        self.t
    }

    pub fn duals(&self) -> &DualVector {
        &self.q
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn confidence_set(&self) -> &ConfidenceSet {
        &self.cs
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Drift bound `2L` on `|‖Q(t+1)‖₂ − ‖Q(t)‖₂|`.
    pub fn drift_bound(&self) -> f64 {
        2.0 * self.layout.depth() as f64
    }

    /// Solves for `θ^t`, recovers `π_t` and then moves the queues to `Q(t)`
    /// using `g^{t−1}` and `θ^t`.
    pub fn begin_episode(&mut self) -> Result<EpisodePlan> {
        if self.planned {
            return Err(structural("begin_episode called twice without end_episode"));
        }
        if self.t > self.config.horizon {
            return Err(parameter(format!("horizon {} already played", self.config.horizon)));
        }
        let (loss_prev, constraints_prev) = match &self.feedback {
            Some((f, g)) => (Some(f), g.as_slice()),
            None => (None, &[][..]),
        };
        let input = OrlpInput {
            episode: self.t,
            previous: self.theta.as_ref(),
            loss_prev,
            constraints_prev,
            duals: self.q.values(),
            v: self.config.v,
            alpha: self.config.alpha,
            lambda: self.config.lambda,
        };
        let warm = if self.config.solver.warm_start { self.warm.as_ref() } else { None };
        let (theta, projection) = solve_orlp(input, &self.cs, &self.layout, &self.config.solver, warm)?;
        let report = projection.map(|p| {
            self.warm = Some(p.dual);
            p.report
        });

        let before = self.q.norm();
        if self.t >= 2 {
            self.q = update_duals(&self.q, constraints_prev, &theta, &self.config.thresholds)?;
        }
        let drift = self.q.norm() - before;

        let policy = recover_policy(&theta, &self.layout)?;
        self.theta = Some(theta.clone());
        self.planned = true;
        Ok(EpisodePlan { t: self.t, theta, policy, report, drift })
    }

    /// Ingests the path and feedback of episode `t`. Returns whether a new
    /// epoch started.
    pub fn end_episode(&mut self, trajectory: &Trajectory, loss: StageFunction, constraints: Vec<StageFunction>) -> Result<bool> {
        if !self.planned {
            return Err(structural("end_episode called before begin_episode"));
        }
        trajectory.validate(&self.layout)?;
        if constraints.len() != self.config.thresholds.len() {
            return Err(structural("constraint feedback count differs from the threshold count"));
        }
        for &(s, a, next) in &trajectory.steps {
            self.counters.record_transition(&self.layout, s, a, next)?;
        }
        let advanced = self.counters.epoch_trigger();
        if advanced {
            self.counters.advance_epoch(&self.layout, self.config.horizon, self.config.zeta)?;
            self.cs = self.estimator.confidence_set(&self.layout, &self.counters, self.config.horizon, self.config.zeta)?;
        }
        self.feedback = Some((loss, constraints));
        self.planned = false;
        self.t += 1;
        Ok(advanced)
    }
}

/// Upper bound `|S||A| log₂(8T / (|S||A|))` on the number of epochs, valid for
/// `T ≥ |S||A|`.
pub fn epoch_bound(layout: &MdpLayout, horizon: usize) -> Option<f64> {
    let sa = (layout.state_count() * layout.actions()) as f64;
    let t = horizon as f64;
    (t >= sa).then(|| sa * (8.0 * t / sa).log2())
}
