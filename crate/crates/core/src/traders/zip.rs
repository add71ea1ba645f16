//! Zero-intelligence plus: an adaptive profit margin trained by a Widrow-Hoff
//! rule with momentum.
//!
//! A seller quotes `limit * (1 + margin)` with `margin >= 0`; a buyer uses a
//! margin in `[-1, 0]`. After each market event the trader picks a target price
//! a little beyond the event price, moves a fraction `beta` of the way towards
//! it (smoothed by momentum `gamma`), and re-derives its margin from the result.

use rand::Rng;

use super::MarketEvent;
use crate::exchange::{Price, Side};
use crate::session::CustomerOrder;

#[derive(Debug, Clone, PartialEq)]
pub struct ZipState {
    pub margin: f64,
    pub beta: f64,
    pub momentum: f64,
    pub last_change: f64,
    pub target_price: f64,
}

impl ZipState {
    pub fn new<R: Rng + ?Sized>(side: Side, rng: &mut R) -> Self {
        let magnitude = rng.gen_range(0.05..0.35);
        ZipState {
            margin: match side {
                Side::Bid => -magnitude,
                Side::Ask => magnitude,
            },
            beta: rng.gen_range(0.1..0.5),
            momentum: rng.gen_range(0.0..0.1),
            last_change: 0.0,
            target_price: 0.0,
        }
    }

    /// Unrounded quote price for `limit`.
    pub fn price(&self, limit: Price) -> f64 {
        limit as f64 * (1.0 + self.margin)
    }
}

pub fn zip_quote(state: &ZipState, assignment: &CustomerOrder) -> Price {
    state.price(assignment.limit_price).round() as Price
}

fn clamp_margin(margin: f64, side: Side) -> f64 {
    match side {
        Side::Bid => margin.clamp(-1.0, 0.0),
        Side::Ask => margin.max(0.0),
    }
}

/// Move the quote towards `target` and update the margin accordingly.
pub fn zip_adjust(state: &mut ZipState, side: Side, limit: Price, target: f64) {
    let price = state.price(limit);
    let delta = state.beta * (target - price);
    let change = state.momentum * state.last_change + (1.0 - state.momentum) * delta;
    let new_price = price + change;
    state.margin = clamp_margin(new_price / limit as f64 - 1.0, side);
    state.last_change = change;
    state.target_price = target;
}

fn raise_target<R: Rng + ?Sized>(q: f64, rng: &mut R) -> f64 {
    rng.gen_range(1.0..1.05) * q + rng.gen_range(0.0..=0.05 * q)
}

fn lower_target<R: Rng + ?Sized>(q: f64, rng: &mut R) -> f64 {
    rng.gen_range(0.95..=1.0) * q - rng.gen_range(0.0..=0.05 * q)
}

/// Cliff's ZIP update rules for one market event.
pub fn zip_update<R: Rng + ?Sized>(
    state: &mut ZipState,
    side: Side,
    limit: Price,
    event: &MarketEvent,
    rng: &mut R,
) {
    let price = state.price(limit);
    let target = match (side, *event) {
        (
            Side::Ask,
            MarketEvent::Trade {
                price: q,
                resting_side,
            },
        ) => {
            let q = q as f64;
            if price <= q {
                Some(raise_target(q, rng))
            } else if resting_side == Side::Ask {
                // an ask was lifted below our price: we were undercut
                Some(lower_target(q, rng))
            } else {
                None
            }
        }
        (
            Side::Ask,
            MarketEvent::Shout {
                side: Side::Ask,
                price: q,
            },
        ) if price >= q as f64 => Some(lower_target(q as f64, rng)),
        (
            Side::Bid,
            MarketEvent::Trade {
                price: q,
                resting_side,
            },
        ) => {
            let q = q as f64;
            if price >= q {
                Some(lower_target(q, rng))
            } else if resting_side == Side::Bid {
                Some(raise_target(q, rng))
            } else {
                None
            }
        }
        (
            Side::Bid,
            MarketEvent::Shout {
                side: Side::Bid,
                price: q,
            },
        ) if price <= q as f64 => Some(raise_target(q as f64, rng)),
        _ => None,
    };
    if let Some(target) = target {
        zip_adjust(state, side, limit, target);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn state(margin: f64, beta: f64, momentum: f64) -> ZipState {
        ZipState {
            margin,
            beta,
            momentum,
            last_change: 0.0,
            target_price: 0.0,
        }
    }

    #[test]
    fn seller_quote_formula() {
        let a = CustomerOrder {
            trader_id: Arc::from("S"),
            side: Side::Ask,
            limit_price: 100,
            issue_time: 0.0,
        };
        assert_eq!(zip_quote(&state(0.10, 0.3, 0.0), &a), 110);
    }

    #[test]
    fn widrow_hoff_step() {
        // price 110, target 105, beta 0.5, no momentum:
        // delta = 0.5 * (105 - 110) = -2.5 -> price 107.5, margin 0.075
        let mut s = state(0.10, 0.5, 0.0);
        zip_adjust(&mut s, Side::Ask, 100, 105.0);
        assert!((s.price(100) - 107.5).abs() < 1e-9);
        assert!((s.margin - 0.075).abs() < 1e-12);
        assert!((s.last_change + 2.5).abs() < 1e-12);
    }

    #[test]
    fn momentum_blends_previous_change() {
        let mut s = state(0.10, 0.5, 0.5);
        s.last_change = 1.0;
        zip_adjust(&mut s, Side::Ask, 100, 106.0);
        // delta = -2, change = 0.5 * 1 + 0.5 * -2 = -0.5
        assert!((s.price(100) - 109.5).abs() < 1e-9);
    }

    #[test]
    fn buyer_margin_is_clamped_at_limit() {
        let mut s = state(-0.05, 1.0, 0.0);
        zip_adjust(&mut s, Side::Bid, 100, 130.0);
        assert_eq!(s.margin, 0.0);
        assert_eq!(s.price(100), 100.0);
    }

    #[test]
    fn seller_raises_margin_after_trade_above_quote() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = state(0.05, 0.4, 0.0);
        zip_update(
            &mut s,
            Side::Ask,
            100,
            &MarketEvent::Trade {
                price: 120,
                resting_side: Side::Bid,
            },
            &mut rng,
        );
        assert!(s.margin > 0.05);
    }

    #[test]
    fn buyer_lowers_price_after_cheaper_trade() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = state(-0.05, 0.4, 0.0);
        zip_update(
            &mut s,
            Side::Bid,
            100,
            &MarketEvent::Trade {
                price: 80,
                resting_side: Side::Ask,
            },
            &mut rng,
        );
        assert!(s.margin < -0.05);
    }

    fn event_strategy() -> impl Strategy<Value = MarketEvent> {
        (1i64..400, any::<bool>(), any::<bool>()).prop_map(|(price, trade, bid)| {
            let side = if bid { Side::Bid } else { Side::Ask };
            if trade {
                MarketEvent::Trade {
                    price,
                    resting_side: side,
                }
            } else {
                MarketEvent::Shout { side, price }
            }
        })
    }

    proptest! {
        #[test]
        fn margin_sign_invariant(
            seed in any::<u64>(),
            limit in 1i64..300,
            bid in any::<bool>(),
            events in proptest::collection::vec(event_strategy(), 1..60),
        ) {
            let side = if bid { Side::Bid } else { Side::Ask };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = ZipState::new(side, &mut rng);
            for e in &events {
                zip_update(&mut s, side, limit, e, &mut rng);
                match side {
                    Side::Bid => prop_assert!((-1.0..=0.0).contains(&s.margin)),
                    Side::Ask => prop_assert!(s.margin >= 0.0),
                }
                let a = CustomerOrder { trader_id: Arc::from("x"), side, limit_price: limit, issue_time: 0.0 };
                let q = super::super::respect_limit(zip_quote(&s, &a), side, limit);
                match side {
                    Side::Bid => prop_assert!(q <= limit),
                    Side::Ask => prop_assert!(q >= limit),
                }
            }
        }
    }
}
