//! Trading strategies: Giveaway, ZIC, ZIP, GDX and AA, plus dispatch to DTX.
//!
//! Every strategy works from the same inputs: its current customer order, the
//! latest published [`LobSummary`], the trades it has not seen yet and running
//! tape statistics. Quotes always respect the assignment's limit price.

pub mod aa;
pub mod gdx;
pub mod simple;
pub mod zip;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::dtx::DtxState;
use crate::error::{Error, Result};
use crate::exchange::{LobSummary, Price, Side, Trade, TraderId};
use crate::features::TapeStats;
use crate::neural::ModelParams;
use crate::session::CustomerOrder;

pub use aa::AaState;
pub use gdx::GdxState;
pub use zip::ZipState;

/// Lowest price any strategy will quote.
pub const PRICE_FLOOR: Price = 1;
/// Highest price any strategy will quote.
pub const PRICE_CAP: Price = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Zic,
    Zip,
    Gdx,
    Aa,
    Giveaway,
    Dtx,
}

impl StrategyKind {
    pub const LEGACY: [StrategyKind; 5] = [
        StrategyKind::Zic,
        StrategyKind::Zip,
        StrategyKind::Gdx,
        StrategyKind::Aa,
        StrategyKind::Giveaway,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Giveaway => "GVWY",
            StrategyKind::Zic => "ZIC",
            StrategyKind::Zip => "ZIP",
            StrategyKind::Gdx => "GDX",
            StrategyKind::Aa => "AA",
            StrategyKind::Dtx => "DTX",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GVWY" => Ok(StrategyKind::Giveaway),
            "ZIC" => Ok(StrategyKind::Zic),
            "ZIP" => Ok(StrategyKind::Zip),
            "GDX" => Ok(StrategyKind::Gdx),
            "AA" => Ok(StrategyKind::Aa),
            "DTX" => Ok(StrategyKind::Dtx),
            _ => Err(Error::UnknownStrategy(s.trim().to_string())),
        }
    }
}

/// Something a trader noticed on the market since its last look.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarketEvent {
    /// A transaction at `price`; `resting_side` is the shout that was accepted.
    Trade { price: Price, resting_side: Side },
    /// A new best quote that did not trade.
    Shout { side: Side, price: Price },
}

/// Read-only market context handed to strategies on every poll.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    pub time: f64,
    pub summary: &'a LobSummary,
    pub stats: &'a TapeStats,
    pub duration: f64,
    pub issue_interval: f64,
}

/// Turns successive summaries and tape slices into [`MarketEvent`]s.
#[derive(Debug, Clone, Default)]
pub struct EventTracker {
    best_bid: Option<Price>,
    best_ask: Option<Price>,
}

impl EventTracker {
    pub fn events(&mut self, summary: &LobSummary, new_trades: &[Trade]) -> Vec<MarketEvent> {
        let mut events: Vec<MarketEvent> = new_trades
            .iter()
            .map(|t| MarketEvent::Trade {
                price: t.price,
                resting_side: t.resting_side,
            })
            .collect();
        if summary.best_bid != self.best_bid {
            if let Some(price) = summary.best_bid {
                events.push(MarketEvent::Shout {
                    side: Side::Bid,
                    price,
                });
            }
            self.best_bid = summary.best_bid;
        }
        if summary.best_ask != self.best_ask {
            if let Some(price) = summary.best_ask {
                events.push(MarketEvent::Shout {
                    side: Side::Ask,
                    price,
                });
            }
            self.best_ask = summary.best_ask;
        }
        events
    }
}

/// Clamp a price so that it never loses money against `limit`.
pub fn respect_limit(price: Price, side: Side, limit: Price) -> Price {
    match side {
        Side::Bid => price.min(limit).max(PRICE_FLOOR.min(limit)),
        Side::Ask => price.max(limit),
    }
}

#[derive(Debug, Clone)]
pub enum Strategy {
    Giveaway,
    Zic,
    Zip(ZipState),
    Gdx(GdxState),
    Aa(AaState),
    Dtx(DtxState),
}

impl Strategy {
    pub fn new<R: Rng + ?Sized>(
        kind: StrategyKind,
        side: Side,
        model: Option<&Arc<ModelParams>>,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match kind {
            StrategyKind::Giveaway => Strategy::Giveaway,
            StrategyKind::Zic => Strategy::Zic,
            StrategyKind::Zip => Strategy::Zip(ZipState::new(side, rng)),
            StrategyKind::Gdx => Strategy::Gdx(GdxState::default()),
            StrategyKind::Aa => Strategy::Aa(AaState::new(rng)),
            StrategyKind::Dtx => {
                let model = model
                    .ok_or_else(|| Error::Config("DTX traders need a trained model".to_string()))?;
                Strategy::Dtx(DtxState::new(model.clone()))
            }
        })
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Giveaway => StrategyKind::Giveaway,
            Strategy::Zic => StrategyKind::Zic,
            Strategy::Zip(_) => StrategyKind::Zip,
            Strategy::Gdx(_) => StrategyKind::Gdx,
            Strategy::Aa(_) => StrategyKind::Aa,
            Strategy::Dtx(_) => StrategyKind::Dtx,
        }
    }

    /// Learning step for one market event.
    pub fn respond<R: Rng + ?Sized>(
        &mut self,
        event: &MarketEvent,
        assignment: Option<&CustomerOrder>,
        view: &MarketView<'_>,
        rng: &mut R,
    ) {
        match self {
            Strategy::Giveaway | Strategy::Zic => {}
            Strategy::Zip(state) => {
                if let Some(a) = assignment {
                    zip::zip_update(state, a.side, a.limit_price, event, rng);
                }
            }
            Strategy::Gdx(state) => state.observe(event),
            Strategy::Aa(state) => {
                let side_limit = assignment.map(|a| (a.side, a.limit_price));
                state.observe(event, side_limit);
            }
            Strategy::Dtx(state) => {
                if let MarketEvent::Trade { .. } = event {
                    state.on_trade(view.stats.last_trade_time.unwrap_or(view.time));
                }
            }
        }
    }

    pub fn quote<R: Rng + ?Sized>(
        &mut self,
        assignment: &CustomerOrder,
        view: &MarketView<'_>,
        rng: &mut R,
    ) -> Option<Price> {
        let price = match self {
            Strategy::Giveaway => simple::giveaway_quote(Some(assignment))?,
            Strategy::Zic => simple::zic_quote(Some(assignment), rng, PRICE_FLOOR, PRICE_CAP)?,
            Strategy::Zip(state) => zip::zip_quote(state, assignment),
            Strategy::Gdx(state) => {
                let horizon = gdx::horizon(view.time, view.duration, view.issue_interval);
                state.quote(assignment.side, assignment.limit_price, horizon)
            }
            Strategy::Aa(state) => {
                state.quote(assignment.side, assignment.limit_price, view.summary)
            }
            Strategy::Dtx(state) => {
                state.quote_with_stats(assignment, view.summary, view.stats, view.time)
            }
        };
        Some(respect_limit(
            price,
            assignment.side,
            assignment.limit_price,
        ))
    }
}

/// Everything the session keeps about one trader.
#[derive(Debug, Clone)]
pub struct TraderState {
    pub trader_id: TraderId,
    pub side: Side,
    pub strategy: Strategy,
    /// Realized surplus: sum over the blotter.
    pub balance: i64,
    /// Current assignment and its registry id.
    pub current_order: Option<(u64, CustomerOrder)>,
    pub blotter: Vec<Trade>,
    pub tracker: EventTracker,
    /// Price and assignment id of the order this trader last sent.
    pub live: Option<(Price, u64)>,
    pub seen_trades: usize,
}

impl TraderState {
    pub fn new(trader_id: TraderId, side: Side, strategy: Strategy) -> Self {
        TraderState {
            trader_id,
            side,
            strategy,
            balance: 0,
            current_order: None,
            blotter: Vec::new(),
            tracker: EventTracker::default(),
            live: None,
            seen_trades: 0,
        }
    }

    pub fn kind(&self) -> StrategyKind {
        self.strategy.kind()
    }

    /// Digest unseen trades and book changes, then decide whether to send a
    /// new order. Returns the price to send, if it differs from the live one.
    pub fn poll<R: Rng + ?Sized>(
        &mut self,
        view: &MarketView<'_>,
        new_trades: &[Trade],
        rng: &mut R,
    ) -> Option<(Price, u64)> {
        self.seen_trades += new_trades.len();
        let events = self.tracker.events(view.summary, new_trades);
        let assignment = self.current_order.as_ref().map(|(_, a)| a.clone());
        for event in &events {
            self.strategy.respond(event, assignment.as_ref(), view, rng);
        }
        let (aid, assignment) = self.current_order.clone()?;
        let price = self.strategy.quote(&assignment, view, rng)?;
        if self.live == Some((price, aid)) {
            return None;
        }
        self.live = Some((price, aid));
        Some((price, aid))
    }

    /// Book a fill of one of this trader's orders.
    pub fn record_fill(&mut self, trade: &Trade, assignment_id: u64, surplus: i64) {
        self.balance += surplus;
        self.blotter.push(trade.clone());
        if self.current_order.as_ref().map(|(id, _)| *id) == Some(assignment_id) {
            self.current_order = None;
        }
        if self.live.map(|(_, id)| id) == Some(assignment_id) {
            self.live = None;
        }
    }

    pub fn assign(&mut self, assignment_id: u64, order: CustomerOrder) {
        self.current_order = Some((assignment_id, order));
    }
}
