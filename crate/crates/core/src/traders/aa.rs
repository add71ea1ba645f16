//! Adaptive-aggressive trading.
//!
//! The trader tracks an equilibrium estimate from transaction prices and maps
//! an aggressiveness `r` in `[-1, 1]` to a target price through an
//! exponential family shaped by `theta`. `r = 0` targets the equilibrium for
//! intra-marginal traders (or the limit for extra-marginal ones), `r = 1` the
//! limit, `r = -1` the far market bound. Short-term learning moves `r` after
//! every event; long-term learning moves `theta` with price volatility.

use std::collections::VecDeque;

use rand::Rng;

use crate::exchange::{LobSummary, Price, Side};

use super::{MarketEvent, PRICE_CAP, PRICE_FLOOR};

pub const EQ_DECAY: f64 = 0.95;
pub const THETA_MIN: f64 = -8.0;
pub const THETA_MAX: f64 = 2.0;
pub const SHORT_TERM_RATE: f64 = 0.3;
pub const LONG_TERM_RATE: f64 = 0.05;
pub const LAMBDA_R: f64 = 0.02;
pub const LAMBDA_A: f64 = 0.01;
pub const INITIAL_MARGIN: f64 = 0.10;
/// Step fraction towards the target when improving on the best quote.
pub const ETA: f64 = 3.0;
const VOLATILITY_WINDOW: usize = 10;
const THETA_GAMMA: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct AaState {
    eq_num: f64,
    eq_den: f64,
    pub aggressiveness: f64,
    pub theta: f64,
    pub short_term_rate: f64,
    pub long_term_rate: f64,
    recent: VecDeque<f64>,
    alpha_range: Option<(f64, f64)>,
    pub floor: Price,
    pub cap: Price,
}

impl AaState {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::with_aggressiveness(rng.gen_range(-0.3..0.3))
    }

    pub fn with_aggressiveness(r: f64) -> Self {
        AaState {
            eq_num: 0.0,
            eq_den: 0.0,
            aggressiveness: r.clamp(-1.0, 1.0),
            theta: THETA_MAX,
            short_term_rate: SHORT_TERM_RATE,
            long_term_rate: LONG_TERM_RATE,
            recent: VecDeque::with_capacity(VOLATILITY_WINDOW + 1),
            alpha_range: None,
            floor: PRICE_FLOOR,
            cap: PRICE_CAP,
        }
    }

    /// Weighted mean of all trade prices, weights `EQ_DECAY^age`.
    pub fn equilibrium_estimate(&self) -> Option<f64> {
        (self.eq_den > 0.0).then(|| self.eq_num / self.eq_den)
    }

    pub fn set_equilibrium(&mut self, eq: f64) {
        self.eq_num = eq;
        self.eq_den = 1.0;
    }

    /// Target price for aggressiveness `r`, or `None` before any trade.
    pub fn target_for(&self, side: Side, limit: Price, r: f64) -> Option<f64> {
        let eq = self.equilibrium_estimate()?;
        Some(target_price(
            side,
            limit as f64,
            eq,
            r,
            self.theta,
            self.floor as f64,
            self.cap as f64,
        ))
    }

    pub fn target(&self, side: Side, limit: Price) -> Option<f64> {
        self.target_for(side, limit, self.aggressiveness)
    }

    /// Aggressiveness whose target equals `price`, by bisection.
    pub fn r_shout(&self, side: Side, limit: Price, price: f64) -> f64 {
        let f = |r: f64| self.target_for(side, limit, r).unwrap_or(limit as f64);
        // Buyers' targets rise with r; sellers' fall.
        let rising = side == Side::Bid;
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let below = |v: f64| if rising { v < price } else { v > price };
        if below(f(hi)) {
            return 1.0;
        }
        if !below(f(lo)) {
            return -1.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if below(f(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn nudge(&mut self, side: Side, limit: Price, price: f64, more_aggressive: bool) {
        let rs = self.r_shout(side, limit, price);
        let desired = if more_aggressive {
            (1.0 + LAMBDA_R) * rs + LAMBDA_A
        } else {
            (1.0 - LAMBDA_R) * rs - LAMBDA_A
        };
        self.aggressiveness += self.short_term_rate * (desired - self.aggressiveness);
        self.aggressiveness = self.aggressiveness.clamp(-1.0, 1.0);
    }

    fn record_trade(&mut self, price: f64) {
        self.eq_num = EQ_DECAY * self.eq_num + price;
        self.eq_den = EQ_DECAY * self.eq_den + 1.0;
        self.recent.push_back(price);
        if self.recent.len() > VOLATILITY_WINDOW {
            self.recent.pop_front();
        }
        self.adapt_theta();
    }

    fn adapt_theta(&mut self) {
        let Some(eq) = self.equilibrium_estimate() else {
            return;
        };
        if eq <= 0.0 {
            return;
        }
        let n = self.recent.len() as f64;
        let alpha = (self.recent.iter().map(|p| (p - eq).powi(2)).sum::<f64>() / n).sqrt() / eq;
        let (lo, hi) = match self.alpha_range {
            Some((lo, hi)) => (lo.min(alpha), hi.max(alpha)),
            None => (alpha, alpha),
        };
        self.alpha_range = Some((lo, hi));
        let norm = if hi > lo {
            (alpha - lo) / (hi - lo)
        } else {
            0.5
        };
        let theta_star =
            (THETA_MAX - THETA_MIN) * (1.0 - norm * (THETA_GAMMA * (norm - 1.0)).exp()) + THETA_MIN;
        self.theta += self.long_term_rate * (theta_star - self.theta);
        self.theta = self.theta.clamp(THETA_MIN, THETA_MAX);
    }

    pub fn observe(&mut self, event: &MarketEvent, assignment: Option<(Side, Price)>) {
        if let MarketEvent::Trade { price, .. } = *event {
            self.record_trade(price as f64);
        }
        let Some((side, limit)) = assignment else {
            return;
        };
        let Some(target) = self.target(side, limit) else {
            return;
        };
        match (*event, side) {
            (MarketEvent::Trade { price, .. }, Side::Bid) => {
                let q = price as f64;
                self.nudge(side, limit, q, target < q);
            }
            (MarketEvent::Trade { price, .. }, Side::Ask) => {
                let q = price as f64;
                self.nudge(side, limit, q, target > q);
            }
            (
                MarketEvent::Shout {
                    side: Side::Bid,
                    price,
                },
                Side::Bid,
            ) if target <= price as f64 => {
                self.nudge(side, limit, price as f64, true);
            }
            (
                MarketEvent::Shout {
                    side: Side::Ask,
                    price,
                },
                Side::Ask,
            ) if target >= price as f64 => {
                self.nudge(side, limit, price as f64, true);
            }
            _ => {}
        }
    }

    pub fn quote(&mut self, side: Side, limit: Price, book: &LobSummary) -> Price {
        let Some(target) = self.target(side, limit) else {
            let l = limit as f64;
            return match side {
                Side::Bid => (l * (1.0 - INITIAL_MARGIN)).round() as Price,
                Side::Ask => (l * (1.0 + INITIAL_MARGIN)).round() as Price,
            };
        };
        let price = match side {
            Side::Bid => match (book.best_ask, book.best_bid) {
                (Some(ask), _) if ask as f64 <= target => ask as f64,
                (_, Some(bid)) if (bid as f64) < target => bid as f64 + (target - bid as f64) / ETA,
                _ => target,
            },
            Side::Ask => match (book.best_bid, book.best_ask) {
                (Some(bid), _) if bid as f64 >= target => bid as f64,
                (_, Some(ask)) if (ask as f64) > target => ask as f64 - (ask as f64 - target) / ETA,
                _ => target,
            },
        };
        match side {
            Side::Bid => (price.floor() as Price).min(limit),
            Side::Ask => (price.ceil() as Price).max(limit),
        }
    }
}

/// `(e^{r theta} - 1) / (e^theta - 1)` for `r` in `[0, 1]`; tends to `r` as theta -> 0.
fn shape(r: f64, theta: f64) -> f64 {
    if theta.abs() < 1e-9 {
        r
    } else {
        (r * theta).exp_m1() / theta.exp_m1()
    }
}

/// The aggressiveness-to-target map. Buyers: increasing in `r`; sellers: decreasing.
pub fn target_price(
    side: Side,
    limit: f64,
    eq: f64,
    r: f64,
    theta: f64,
    floor: f64,
    cap: f64,
) -> f64 {
    let r = r.clamp(-1.0, 1.0);
    match side {
        Side::Bid => {
            if limit >= eq {
                if r >= 0.0 {
                    eq + (limit - eq) * shape(r, theta)
                } else {
                    eq - (eq - floor).max(0.0) * shape(-r, theta)
                }
            } else if r >= 0.0 {
                limit
            } else {
                limit - (limit - floor).max(0.0) * shape(-r, theta)
            }
        }
        Side::Ask => {
            if limit <= eq {
                if r >= 0.0 {
                    eq - (eq - limit) * shape(r, theta)
                } else {
                    eq + (cap - eq).max(0.0) * shape(-r, theta)
                }
            } else if r >= 0.0 {
                limit
            } else {
                limit + (cap - limit).max(0.0) * shape(-r, theta)
            }
        }
    }
}
