//! GDX: belief-based quoting with a finite-horizon dynamic program.
//!
//! The trader keeps a sliding window of recent shouts labelled accepted or
//! not. For a seller the belief that an ask at `a` is accepted is
//!
//! ```text
//! q(a) = (AAG(a) + BG(a)) / (AAG(a) + BG(a) + UAL(a))
//! ```
//!
//! where `AAG` counts accepted asks at or above `a`, `BG` bids at or above
//! `a`, and `UAL` unaccepted asks at or below `a`; buyers use the mirror image.
//! The quote maximizes `V(n) = max_p q(p) s(p) + (1 - q(p)) g V(n - 1)` with
//! `V(0) = 0` over the observed price grid.

use std::collections::VecDeque;

use crate::exchange::{Price, Side};

use super::MarketEvent;

pub const HISTORY_WINDOW: usize = 30;
pub const DISCOUNT: f64 = 0.9;
pub const MAX_HORIZON: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShoutRecord {
    pub side: Side,
    pub price: Price,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct GdxState {
    pub history: VecDeque<ShoutRecord>,
    pub window: usize,
    pub discount: f64,
    cache: Option<QuoteCache>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QuoteCache {
    side: Side,
    limit: Price,
    horizon: usize,
    price: Price,
}

impl Default for GdxState {
    fn default() -> Self {
        GdxState {
            history: VecDeque::with_capacity(HISTORY_WINDOW + 2),
            window: HISTORY_WINDOW,
            discount: DISCOUNT,
            cache: None,
        }
    }
}

/// Remaining assignment refreshes in the session, capped at [`MAX_HORIZON`].
pub fn horizon(now: f64, duration: f64, issue_interval: f64) -> usize {
    let remaining = ((duration - now) / issue_interval).ceil();
    (remaining.max(1.0) as usize).min(MAX_HORIZON)
}

impl GdxState {
    pub fn push(&mut self, record: ShoutRecord) {
        self.history.push_back(record);
        while self.history.len() > self.window {
            self.history.pop_front();
        }
        self.cache = None;
    }

    pub fn observe(&mut self, event: &MarketEvent) {
        match *event {
            MarketEvent::Shout { side, price } => self.push(ShoutRecord {
                side,
                price,
                accepted: false,
            }),
            MarketEvent::Trade {
                price,
                resting_side,
            } => {
                // The resting shout was accepted; relabel it if we saw it.
                let seen = self
                    .history
                    .iter_mut()
                    .rev()
                    .find(|r| r.side == resting_side && r.price == price && !r.accepted);
                match seen {
                    Some(r) => {
                        r.accepted = true;
                        self.cache = None;
                    }
                    None => self.push(ShoutRecord {
                        side: resting_side,
                        price,
                        accepted: true,
                    }),
                }
                self.push(ShoutRecord {
                    side: resting_side.opposite(),
                    price,
                    accepted: true,
                });
            }
        }
    }

    /// Belief at an exact price, straight from the counting formula.
    pub fn belief_at(&self, price: Price, side: Side) -> f64 {
        let (mut support, mut against) = (0usize, 0usize);
        for r in &self.history {
            match side {
                Side::Ask => {
                    if r.price >= price && (r.side == Side::Bid || r.accepted) {
                        support += 1;
                    }
                    if r.side == Side::Ask && !r.accepted && r.price <= price {
                        against += 1;
                    }
                }
                Side::Bid => {
                    if r.price <= price && (r.side == Side::Ask || r.accepted) {
                        support += 1;
                    }
                    if r.side == Side::Bid && !r.accepted && r.price >= price {
                        against += 1;
                    }
                }
            }
        }
        if support + against == 0 {
            0.0
        } else {
            support as f64 / (support + against) as f64
        }
    }

    /// Belief evaluated at each distinct observed price, ascending.
    pub fn belief_grid(&self, side: Side) -> Vec<(Price, f64)> {
        let mut prices: Vec<Price> = self.history.iter().map(|r| r.price).collect();
        prices.sort_unstable();
        prices.dedup();
        prices
            .into_iter()
            .map(|p| (p, self.belief_at(p, side)))
            .collect()
    }

    pub fn quote(&mut self, side: Side, limit: Price, horizon: usize) -> Price {
        if let Some(c) = self.cache {
            if c.side == side && c.limit == limit && c.horizon == horizon {
                return c.price;
            }
        }
        let price = if self.history.is_empty() {
            limit
        } else {
            let grid = self.belief_grid(side);
            plan(&grid, side, limit, horizon, self.discount).map_or(limit, |(p, _)| p)
        };
        self.cache = Some(QuoteCache {
            side,
            limit,
            horizon,
            price,
        });
        price
    }
}

/// Belief at any price: exact on grid points, linear between them, and the
/// counting formula outside the observed range.
pub fn gdx_belief(state: &GdxState, price: Price, side: Side) -> f64 {
    let grid = state.belief_grid(side);
    interpolate(&grid, price).unwrap_or_else(|| state.belief_at(price, side))
}

fn interpolate(grid: &[(Price, f64)], price: Price) -> Option<f64> {
    let idx = grid.partition_point(|(p, _)| *p < price);
    let &(hi_p, hi_q) = grid.get(idx)?;
    if hi_p == price {
        return Some(hi_q);
    }
    let &(lo_p, lo_q) = grid.get(idx.checked_sub(1)?)?;
    let w = (price - lo_p) as f64 / (hi_p - lo_p) as f64;
    Some(lo_q + w * (hi_q - lo_q))
}

fn surplus(side: Side, limit: Price, price: Price) -> f64 {
    match side {
        Side::Ask => (price - limit) as f64,
        Side::Bid => (limit - price) as f64,
    }
}

/// Solve the GDX recursion over the admissible grid points.
///
/// Returns the first-step price and `V(horizon)`. Ties go to the lowest price
/// for sellers and the highest for buyers. `None` when no grid point is
/// admissible.
pub fn plan(
    grid: &[(Price, f64)],
    side: Side,
    limit: Price,
    horizon: usize,
    discount: f64,
) -> Option<(Price, f64)> {
    let mut candidates: Vec<(Price, f64)> = grid
        .iter()
        .copied()
        .filter(|(p, _)| surplus(side, limit, *p) >= 0.0)
        .collect();
    if candidates.is_empty() {
        return None;
    }
    // Scan in tie-break preference order so the first maximum wins.
    if side == Side::Bid {
        candidates.reverse();
    }
    let mut value = 0.0;
    let mut choice = candidates[0].0;
    for _ in 0..horizon.max(1) {
        let continuation = discount * value;
        let mut best = f64::NEG_INFINITY;
        for &(p, q) in &candidates {
            let v = q * surplus(side, limit, p) + (1.0 - q) * continuation;
            if v > best + 1e-12 {
                best = v;
                choice = p;
            }
        }
        value = best;
    }
    Some((choice, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(side: Side, price: Price, accepted: bool) -> ShoutRecord {
        ShoutRecord {
            side,
            price,
            accepted,
        }
    }

    /// Direct count over the window, written independently of `belief_at`.
    fn brute_seller_belief(h: &[ShoutRecord], a: Price) -> f64 {
        let aag = h
            .iter()
            .filter(|r| r.side == Side::Ask && r.accepted && r.price >= a)
            .count();
        let bg = h
            .iter()
            .filter(|r| r.side == Side::Bid && r.price >= a)
            .count();
        let ual = h
            .iter()
            .filter(|r| r.side == Side::Ask && !r.accepted && r.price <= a)
            .count();
        let num = (aag + bg) as f64;
        if num + ual as f64 == 0.0 {
            0.0
        } else {
            num / (num + ual as f64)
        }
    }

    #[test]
    fn seller_belief_worked_example() {
        let mut s = GdxState::default();
        s.push(rec(Side::Ask, 100, true));
        s.push(rec(Side::Bid, 98, false));
        assert_eq!(s.belief_at(95, Side::Ask), 1.0);
        assert_eq!(
            brute_seller_belief(&[rec(Side::Ask, 100, true), rec(Side::Bid, 98, false)], 95),
            1.0
        );
    }

    #[test]
    fn belief_above_every_observation_is_zero() {
        let mut s = GdxState::default();
        s.push(rec(Side::Ask, 100, false));
        s.push(rec(Side::Bid, 90, false));
        assert_eq!(s.belief_at(150, Side::Ask), 0.0);
        assert_eq!(gdx_belief(&s, 150, Side::Ask), 0.0);
    }

    #[test]
    fn interpolates_between_grid_points() {
        let grid = [(100, 0.5), (110, 0.25)];
        assert_eq!(interpolate(&grid, 105), Some(0.375));
        assert_eq!(interpolate(&grid, 100), Some(0.5));
        assert_eq!(interpolate(&grid, 120), None);
    }

    #[test]
    fn one_step_plan_breaks_ties_low_for_sellers() {
        // V = max(0.5 * 10, 0.25 * 20) = 5 at both prices.
        let grid = [(100, 0.5), (110, 0.25)];
        let (price, value) = plan(&grid, Side::Ask, 90, 1, 0.9).unwrap();
        assert_eq!(price, 100);
        assert!((value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn buyer_ties_go_high() {
        // buyer limit 120: 0.5 * 20 = 10 at 100, 0.25 * 40 = 10 at 80
        let grid = [(80, 0.25), (100, 0.5)];
        assert_eq!(plan(&grid, Side::Bid, 120, 1, 0.9).unwrap().0, 100);
    }

    #[test]
    fn two_step_recursion_by_hand() {
        // seller limit 90, grid {100: 0.5, 110: 0.25}, discount 0.9
        // V1 = 5; V2 = max(0.5*10 + 0.5*0.9*5, 0.25*20 + 0.75*0.9*5)
        //           = max(7.25, 8.375) = 8.375 at 110
        let grid = [(100, 0.5), (110, 0.25)];
        let (price, value) = plan(&grid, Side::Ask, 90, 2, 0.9).unwrap();
        assert_eq!(price, 110);
        assert!((value - 8.375).abs() < 1e-12);
    }

    #[test]
    fn empty_history_quotes_limit() {
        let mut s = GdxState::default();
        assert_eq!(s.quote(Side::Ask, 90, 3), 90);
        assert_eq!(s.quote(Side::Bid, 90, 3), 90);
    }

    #[test]
    fn inadmissible_grid_quotes_limit() {
        let mut s = GdxState::default();
        s.push(rec(Side::Bid, 50, false));
        assert_eq!(s.quote(Side::Ask, 90, 3), 90);
    }

    #[test]
    fn horizon_is_capped() {
        assert_eq!(horizon(0.0, 3600.0, 30.0), MAX_HORIZON);
        assert_eq!(horizon(3590.0, 3600.0, 30.0), 1);
        assert_eq!(horizon(3600.0, 3600.0, 30.0), 1);
        assert_eq!(horizon(3540.0, 3600.0, 30.0), 2);
    }

    #[test]
    fn window_is_bounded() {
        let mut s = GdxState::default();
        for p in 0..100 {
            s.observe(&MarketEvent::Shout {
                side: Side::Ask,
                price: 100 + p,
            });
        }
        assert_eq!(s.history.len(), HISTORY_WINDOW);
    }

    #[test]
    fn trade_relabels_seen_shout() {
        let mut s = GdxState::default();
        s.observe(&MarketEvent::Shout {
            side: Side::Ask,
            price: 101,
        });
        s.observe(&MarketEvent::Trade {
            price: 101,
            resting_side: Side::Ask,
        });
        assert_eq!(s.history.len(), 2);
        assert!(s.history.iter().all(|r| r.accepted));
    }

    fn record_strategy() -> impl Strategy<Value = ShoutRecord> {
        (50i64..150, any::<bool>(), any::<bool>())
            .prop_map(|(p, bid, acc)| rec(if bid { Side::Bid } else { Side::Ask }, p, acc))
    }

    proptest! {
        #[test]
        fn belief_is_monotone_and_matches_count(
            records in proptest::collection::vec(record_strategy(), 1..30)
        ) {
            let mut s = GdxState::default();
            for r in &records {
                s.push(*r);
            }
            let seller = s.belief_grid(Side::Ask);
            for w in seller.windows(2) {
                prop_assert!(w[1].1 <= w[0].1 + 1e-12);
            }
            let buyer = s.belief_grid(Side::Bid);
            for w in buyer.windows(2) {
                prop_assert!(w[1].1 + 1e-12 >= w[0].1);
            }
            for p in 40..160 {
                prop_assert_eq!(s.belief_at(p, Side::Ask), brute_seller_belief(&records, p));
                let q = gdx_belief(&s, p, Side::Ask);
                prop_assert!((0.0..=1.0).contains(&q));
            }
        }

        #[test]
        fn plan_respects_limit(
            records in proptest::collection::vec(record_strategy(), 1..30),
            limit in 40i64..160,
            bid in any::<bool>(),
            h in 1usize..=10,
        ) {
            let side = if bid { Side::Bid } else { Side::Ask };
            let mut s = GdxState::default();
            for r in &records {
                s.push(*r);
            }
            let p = s.quote(side, limit, h);
            match side {
                Side::Bid => prop_assert!(p <= limit),
                Side::Ask => prop_assert!(p >= limit),
            }
        }
    }
}
