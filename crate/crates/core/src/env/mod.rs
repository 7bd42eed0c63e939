//! Simulated environments: random layered MDPs, loss schedules and
//! stochastic constraint families.

mod mdp;
mod noise;
mod scenario;
mod schedule;

pub use mdp::{make_random_mdp, sample_episode, state_distribution, true_occupancy, Trajectory};
pub use noise::{registry as noise_registry, Bernoulli, ConstraintFamily, ConstraintNoise, NoNoise, NoiseContext, Uniform};
pub use scenario::Scenario;
pub use schedule::{
    registry as schedule_registry, Arbitrary, Constant, LossSchedule, ScheduleContext, ScheduleRegistry, Sinusoidal,
    Switching,
};
