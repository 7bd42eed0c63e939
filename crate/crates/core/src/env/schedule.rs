//! Oblivious loss schedules: `t ↦ f^t`, fixed before the run starts.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;

use rand::Rng;

use crate::cmdp::{MdpLayout, StageFunction};
use crate::error::{parameter, Result};
use crate::kv::{KvMap, KvWriter};
use crate::registry::Registry;
use crate::rng;

/// A loss sequence for episodes `1..=T`. Implementations are pure functions of
/// the episode index.
pub trait LossSchedule: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn horizon(&self) -> usize;

    /// `f^t` for `1 ≤ t ≤ T`; every value lies in `[−1, 1]`.
    fn loss_at(&self, t: usize) -> Result<StageFunction>;

    /// Writes the keys that reproduce this schedule exactly.
    fn write_params(&self, out: &mut KvWriter);
}

/// What a schedule constructor sees: the layout, the horizon and the
/// `loss_*` keys of the scenario (consumed as they are read).
pub struct ScheduleContext {
    pub layout: MdpLayout,
    pub horizon: usize,
    pub params: RefCell<KvMap>,
}

pub type ScheduleRegistry = Registry<dyn LossSchedule, ScheduleContext>;

/// Built-in schedules: `constant`, `switching`, `sinusoidal`, `arbitrary`.
pub fn registry() -> ScheduleRegistry {
    let mut r: ScheduleRegistry = Registry::new("loss schedule");
    r.register("constant", |ctx| Ok(Box::new(Constant::from_context(ctx)?)))
        .register("switching", |ctx| Ok(Box::new(Switching::from_context(ctx)?)))
        .register("sinusoidal", |ctx| Ok(Box::new(Sinusoidal::from_context(ctx)?)))
        .register("arbitrary", |ctx| Ok(Box::new(Arbitrary::from_context(ctx)?)));
    r
}

fn check_t(t: usize, horizon: usize) -> Result<()> {
    if t == 0 || t > horizon {
        return Err(parameter(format!("episode {t} outside 1..={horizon}")));
    }
    Ok(())
}

fn base_or_random(ctx: &ScheduleContext, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let mut params = ctx.params.borrow_mut();
    let seed: u64 = params.take("seed")?.unwrap_or(0);
    match params.take_list::<f64>("base")? {
        Some(base) => {
            if base.len() != ctx.layout.edge_count() {
                return Err(parameter(format!(
                    "loss_base has {} entries, layout has {} edges",
                    base.len(),
                    ctx.layout.edge_count()
                )));
            }
            if base.iter().any(|v| !(v.abs() <= 1.0)) {
                return Err(parameter("loss_base entries must lie in [-1, 1]"));
            }
            Ok(base)
        }
        None => {
            let mut g = rng::stream(seed, "loss-base");
            Ok((0..ctx.layout.edge_count()).map(|_| g.random_range(lo..=hi)).collect())
        }
    }
}

fn period(ctx: &ScheduleContext) -> Result<usize> {
    let p: usize = ctx.params.borrow_mut().take("period")?.unwrap_or(0);
    Ok(if p == 0 { ((ctx.horizon as f64).sqrt().floor() as usize).max(1) } else { p })
}

/// `f^t = base` for every episode.
#[derive(Debug, Clone)]
pub struct Constant {
    layout: MdpLayout,
    horizon: usize,
    base: Vec<f64>,
}

impl Constant {
    fn from_context(ctx: &ScheduleContext) -> Result<Self> {
        Ok(Self { layout: ctx.layout.clone(), horizon: ctx.horizon, base: base_or_random(ctx, 0.0, 1.0)? })
    }
}

impl LossSchedule for Constant {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn loss_at(&self, t: usize) -> Result<StageFunction> {
        check_t(t, self.horizon)?;
        StageFunction::from_values(&self.layout, self.base.clone())
    }

    fn write_params(&self, out: &mut KvWriter) {
        out.put_list("loss_base", &self.base);
    }
}

/// Base losses in `[0, 1]`; on the flipped subset of edges the sign alternates
/// every `period` episodes, starting positive for `t = 1..=period`.
#[derive(Debug, Clone)]
pub struct Switching {
    layout: MdpLayout,
    horizon: usize,
    base: Vec<f64>,
    flipped: Vec<bool>,
    period: usize,
}

impl Switching {
    fn from_context(ctx: &ScheduleContext) -> Result<Self> {
        let base = base_or_random(ctx, 0.0, 1.0)?;
        let period = period(ctx)?;
        let mut params = ctx.params.borrow_mut();
        let seed: u64 = params.take("mask_seed")?.unwrap_or(1);
        let fraction: f64 = params.take("flip_fraction")?.unwrap_or(0.5);
        let flipped = match params.take_list::<u8>("mask")? {
            Some(mask) if mask.len() == base.len() => mask.into_iter().map(|m| m != 0).collect(),
            Some(_) => return Err(parameter("loss_mask length differs from the edge count")),
            None => {
                let mut g = rng::stream(seed, "loss-mask");
                (0..base.len()).map(|_| g.random::<f64>() < fraction).collect()
            }
        };
        Ok(Self { layout: ctx.layout.clone(), horizon: ctx.horizon, base, flipped, period })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn flipped(&self) -> &[bool] {
        &self.flipped
    }
}

impl LossSchedule for Switching {
    fn name(&self) -> &'static str {
        "switching"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn loss_at(&self, t: usize) -> Result<StageFunction> {
        check_t(t, self.horizon)?;
        let sign = if ((t - 1) / self.period).is_multiple_of(2) { 1.0 } else { -1.0 };
        let values = self
            .base
            .iter()
            .zip(&self.flipped)
            .map(|(&b, &f)| if f { sign * b } else { b })
            .collect();
        StageFunction::from_values(&self.layout, values)
    }

    fn write_params(&self, out: &mut KvWriter) {
        out.put_list("loss_base", &self.base)
            .put_list("loss_mask", &self.flipped.iter().map(|&f| u8::from(f)).collect::<Vec<_>>())
            .put("loss_period", self.period);
    }
}

/// `f^t(e) = base(e) · sin(2π t / period + phase(e))`.
#[derive(Debug, Clone)]
pub struct Sinusoidal {
    layout: MdpLayout,
    horizon: usize,
    base: Vec<f64>,
    phase: Vec<f64>,
    period: usize,
}

impl Sinusoidal {
    fn from_context(ctx: &ScheduleContext) -> Result<Self> {
        let base = base_or_random(ctx, 0.0, 1.0)?;
        let period = period(ctx)?;
        let mut params = ctx.params.borrow_mut();
        let seed: u64 = params.take("phase_seed")?.unwrap_or(2);
        let phase = match params.take_list::<f64>("phase")? {
            Some(p) if p.len() == base.len() => p,
            Some(_) => return Err(parameter("loss_phase length differs from the edge count")),
            None => {
                let mut g = rng::stream(seed, "loss-phase");
                (0..base.len()).map(|_| g.random_range(0.0..2.0 * PI)).collect()
            }
        };
        Ok(Self { layout: ctx.layout.clone(), horizon: ctx.horizon, base, phase, period })
    }
}

impl LossSchedule for Sinusoidal {
    fn name(&self) -> &'static str {
        "sinusoidal"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn loss_at(&self, t: usize) -> Result<StageFunction> {
        check_t(t, self.horizon)?;
        let w = 2.0 * PI * t as f64 / self.period as f64;
        let values = self.base.iter().zip(&self.phase).map(|(b, p)| b * (w + p).sin()).collect();
        StageFunction::from_values(&self.layout, values)
    }

    fn write_params(&self, out: &mut KvWriter) {
        out.put_list("loss_base", &self.base)
            .put_list("loss_phase", &self.phase)
            .put("loss_period", self.period);
    }
}

/// Fresh uniform `[−1, 1]` losses every episode, drawn from a stream keyed by
/// `(seed, t)` so any episode can be regenerated on its own.
#[derive(Debug, Clone)]
pub struct Arbitrary {
    layout: MdpLayout,
    horizon: usize,
    seed: u64,
}

impl Arbitrary {
    fn from_context(ctx: &ScheduleContext) -> Result<Self> {
        let seed = ctx.params.borrow_mut().take("seed")?.unwrap_or(0);
        Ok(Self { layout: ctx.layout.clone(), horizon: ctx.horizon, seed })
    }
}

impl LossSchedule for Arbitrary {
    fn name(&self) -> &'static str {
        "arbitrary"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn loss_at(&self, t: usize) -> Result<StageFunction> {
        check_t(t, self.horizon)?;
        let mut g = rng::indexed_stream(self.seed, "loss", t as u64);
        let values = (0..self.layout.edge_count()).map(|_| g.random_range(-1.0..=1.0)).collect();
        StageFunction::from_values(&self.layout, values)
    }

    fn write_params(&self, out: &mut KvWriter) {
        out.put("loss_seed", self.seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(name: &str, extra: &str, horizon: usize) -> Box<dyn LossSchedule> {
        let layout = MdpLayout::new(&[1, 2, 2, 1], 2).unwrap();
        let ctx = ScheduleContext {
            layout,
            horizon,
            params: RefCell::new(KvMap::parse(extra).unwrap()),
        };
        let s = registry().build(name, &ctx).unwrap();
        ctx.params.into_inner().finish().unwrap();
        s
    }

    #[test]
    fn constant_is_constant() {
        let s = build("constant", "seed = 4", 50);
        assert_eq!(s.loss_at(1).unwrap(), s.loss_at(50).unwrap());
        assert!(s.loss_at(0).is_err());
        assert!(s.loss_at(51).is_err());
    }

    #[test]
    fn switching_flips_on_period_boundary() {
        let s = build("switching", "period = 10\nseed = 3", 100);
        let a = s.loss_at(10).unwrap();
        let b = s.loss_at(11).unwrap();
        let c = s.loss_at(1).unwrap();
        let mut flipped = 0;
        for ((x, y), z) in a.values().iter().zip(b.values()).zip(c.values()) {
            assert_eq!(x, z);
            if x != y {
                assert_eq!(*x, -*y);
                flipped += 1;
            }
        }
        assert!(flipped > 0);
        assert_eq!(s.loss_at(21).unwrap(), a);
    }

    #[test]
    fn default_period_is_floor_sqrt_horizon() {
        let s = build("switching", "", 99);
        // floor(sqrt(99)) = 9: episodes 9 and 10 straddle the first switch.
        assert_ne!(s.loss_at(9).unwrap(), s.loss_at(10).unwrap());
        assert_eq!(s.loss_at(1).unwrap(), s.loss_at(9).unwrap());
    }

    #[test]
    fn every_schedule_is_bounded_and_pure() {
        for name in ["constant", "switching", "sinusoidal", "arbitrary"] {
            let s = build(name, "", 64);
            for t in 1..=64 {
                let f = s.loss_at(t).unwrap();
                assert!(f.sup_norm() <= 1.0, "{name} at {t}");
                assert_eq!(f, s.loss_at(t).unwrap());
            }
        }
    }

    #[test]
    fn unknown_name_lists_choices() {
        let layout = MdpLayout::new(&[1, 2, 1], 2).unwrap();
        let ctx = ScheduleContext {
            layout,
            horizon: 3,
            params: RefCell::new(KvMap::default()),
        };
        let err = registry().build("bogus", &ctx).unwrap_err().to_string();
        assert!(err.contains("switching"), "{err}");
    }
}
