//! Customer-order schedules: a drifting price offset and the per-round
//! assignment of limit prices.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::exchange::{Price, Side, TraderId};

/// Seconds between offset steps.
pub const OFFSET_STEP_SECS: f64 = 30.0;
/// Largest offset change per step, in ticks.
pub const MAX_OFFSET_STEP: Price = 5;

/// An instruction to trade one unit at no worse than `limit_price`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerOrder {
    pub trader_id: TraderId,
    pub side: Side,
    pub limit_price: Price,
    pub issue_time: f64,
}

/// How limit prices are spread over a side's price range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Evenly spaced across the range.
    Fixed,
    /// Evenly spaced, each moved by up to half a step.
    Jittered,
    /// Independent uniform draws.
    Random,
}

impl fmt::Display for StepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepMode::Fixed => "fixed",
            StepMode::Jittered => "jittered",
            StepMode::Random => "random",
        })
    }
}

impl FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(StepMode::Fixed),
            "jittered" => Ok(StepMode::Jittered),
            "random" => Ok(StepMode::Random),
            other => Err(Error::Config(format!("unknown stepmode `{other}`"))),
        }
    }
}

/// Piecewise-constant price offset: a seeded random walk from zero that
/// takes one bounded step every [`OFFSET_STEP_SECS`].
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSeries {
    values: Vec<Price>,
}

impl OffsetSeries {
    pub fn zero() -> Self {
        OffsetSeries { values: vec![0] }
    }

    pub fn at(&self, t: f64) -> Price {
        let k = (t.max(0.0) / OFFSET_STEP_SECS).floor() as usize;
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn values(&self) -> &[Price] {
        &self.values
    }
}

/// Random walk for a session of `duration` seconds. Offsets never fall below
/// `min_offset`, so a range starting at `1 - min_offset` stays positive.
pub fn build_offset_series(seed: u64, duration: f64, min_offset: Price) -> OffsetSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (duration / OFFSET_STEP_SECS).ceil().max(0.0) as usize;
    let mut values = Vec::with_capacity(steps + 1);
    let mut v: Price = 0;
    values.push(v);
    for _ in 0..steps {
        v = (v + rng.gen_range(-MAX_OFFSET_STEP..=MAX_OFFSET_STEP)).max(min_offset.min(0));
        values.push(v);
    }
    OffsetSeries { values }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplyDemandSchedule {
    pub side: Side,
    pub price_range: (Price, Price),
    pub offset: Arc<OffsetSeries>,
    pub issue_interval: f64,
    pub stepmode: StepMode,
}

/// Base limits before the offset: `n` prices in `[low, high]`.
fn base_limits<R: Rng + ?Sized>(
    n: usize,
    (low, high): (Price, Price),
    mode: StepMode,
    rng: &mut R,
) -> Vec<Price> {
    if n == 0 {
        return Vec::new();
    }
    let step = if n > 1 {
        (high - low) as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let even = |i: usize| {
        if n > 1 {
            low as f64 + step * i as f64
        } else {
            (low + high) as f64 / 2.0
        }
    };
    (0..n)
        .map(|i| match mode {
            StepMode::Fixed => even(i).round() as Price,
            StepMode::Jittered => {
                let half = step / 2.0;
                let jitter = if half > 0.0 {
                    rng.gen_range(-half..=half)
                } else {
                    0.0
                };
                ((even(i) + jitter).round() as Price).clamp(low, high)
            }
            StepMode::Random => rng.gen_range(low..=high),
        })
        .collect()
}

/// One round of assignments for `traders`, all on `schedule.side`.
pub fn issue_customer_orders<R: Rng + ?Sized>(
    schedule: &SupplyDemandSchedule,
    traders: &[TraderId],
    time: f64,
    rng: &mut R,
) -> Vec<CustomerOrder> {
    let mut limits = base_limits(traders.len(), schedule.price_range, schedule.stepmode, rng);
    limits.shuffle(rng);
    let offset = schedule.offset.at(time);
    traders
        .iter()
        .zip(limits)
        .map(|(id, base)| CustomerOrder {
            trader_id: id.clone(),
            side: schedule.side,
            limit_price: (base + offset).max(1),
            issue_time: time,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<TraderId> {
        (0..n).map(|i| Arc::from(format!("B{i:02}"))).collect()
    }

    fn schedule(mode: StepMode, offset: OffsetSeries) -> SupplyDemandSchedule {
        SupplyDemandSchedule {
            side: Side::Bid,
            price_range: (50, 150),
            offset: Arc::new(offset),
            issue_interval: 30.0,
            stepmode: mode,
        }
    }

    #[test]
    fn offset_series_is_deterministic_and_anchored() {
        let a = build_offset_series(7, 3600.0, -49);
        let b = build_offset_series(7, 3600.0, -49);
        assert_eq!(a, b);
        assert_eq!(a.at(0.0), 0);
        assert_eq!(a.values().len(), 121);
        assert_ne!(a, build_offset_series(8, 3600.0, -49));
    }

    #[test]
    fn offset_steps_are_bounded() {
        for seed in 0..200 {
            let s = build_offset_series(seed, 3600.0, -49);
            for w in s.values().windows(2) {
                assert!((w[1] - w[0]).abs() <= MAX_OFFSET_STEP || w[1] == -49);
            }
            assert!(s.values().iter().all(|v| v.abs() <= MAX_OFFSET_STEP * 120));
            assert!(s.values().iter().all(|v| 50 + v >= 1));
        }
    }

    #[test]
    fn offset_is_piecewise_constant() {
        let s = build_offset_series(3, 300.0, -49);
        assert_eq!(s.at(29.9), s.at(0.0));
        assert_eq!(s.at(30.0), s.values()[1]);
        assert_eq!(s.at(1e9), *s.values().last().unwrap());
    }

    #[test]
    fn shifted_limits_stay_in_shifted_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sched = schedule(StepMode::Random, OffsetSeries { values: vec![10] });
        for _ in 0..50 {
            for o in issue_customer_orders(&sched, &ids(20), 0.0, &mut rng) {
                assert!((60..=160).contains(&o.limit_price));
            }
        }
    }

    #[test]
    fn fixed_mode_is_evenly_spaced() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sched = schedule(StepMode::Fixed, OffsetSeries::zero());
        let mut limits: Vec<Price> = issue_customer_orders(&sched, &ids(20), 0.0, &mut rng)
            .iter()
            .map(|o| o.limit_price)
            .collect();
        limits.sort();
        let expected: Vec<Price> = (0..20)
            .map(|i| (50.0 + 100.0 * i as f64 / 19.0).round() as Price)
            .collect();
        assert_eq!(limits, expected);
    }

    #[test]
    fn jitter_stays_within_half_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let limits = base_limits(20, (50, 150), StepMode::Jittered, &mut rng);
        let step = 100.0 / 19.0;
        for (i, p) in limits.iter().enumerate() {
            assert!((*p as f64 - (50.0 + step * i as f64)).abs() <= step / 2.0 + 0.5);
        }
    }

    #[test]
    fn same_rng_state_same_orders() {
        let sched = schedule(StepMode::Jittered, build_offset_series(5, 600.0, -49));
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            issue_customer_orders(&sched, &ids(20), 120.0, &mut rng)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn stepmode_parses() {
        assert_eq!("FIXED".parse::<StepMode>().unwrap(), StepMode::Fixed);
        assert!("smooth".parse::<StepMode>().is_err());
        assert_eq!(StepMode::Jittered.to_string(), "jittered");
    }
}
