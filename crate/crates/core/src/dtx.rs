//! The LSTM trader: feeds the live market features through a trained model and
//! quotes the predicted price when it is profitable, falling back to a one-tick
//! improvement of its own side otherwise.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::exchange::{LobSummary, Price, Side, Trade};
use crate::features::{live_inputs, TapeStats, NUM_INPUTS};
use crate::neural::{forward, ModelParams};
use crate::session::CustomerOrder;

const DT_FIELD: usize = 9;

#[derive(Debug, Clone)]
pub struct DtxState {
    pub model: Arc<ModelParams>,
    pub last_trade_time: Option<f64>,
    /// Normalized inputs seen at earlier trades, oldest first; only used when
    /// the model reads windows longer than one.
    history: VecDeque<[f64; NUM_INPUTS]>,
    last_inputs: Option<[f64; NUM_INPUTS]>,
}

impl DtxState {
    pub fn new(model: Arc<ModelParams>) -> Self {
        DtxState {
            model,
            last_trade_time: None,
            history: VecDeque::new(),
            last_inputs: None,
        }
    }

    pub fn on_trade(&mut self, time: f64) {
        self.last_trade_time = Some(time);
        let keep = self.model.seq_len.saturating_sub(1);
        if keep > 0 {
            if let Some(x) = self.last_inputs.take() {
                self.history.push_back(x);
                while self.history.len() > keep {
                    self.history.pop_front();
                }
            }
        }
    }

    /// Seconds since the last trade this trader saw; `now` before any trade.
    pub fn dt(&self, now: f64) -> f64 {
        now - self.last_trade_time.unwrap_or(0.0)
    }

    fn inputs(
        &self,
        a: &CustomerOrder,
        s: &LobSummary,
        stats: &TapeStats,
        now: f64,
    ) -> [f64; NUM_INPUTS] {
        let mut x = live_inputs(s, stats, now, a.side, a.limit_price);
        x[DT_FIELD] = self.dt(now);
        self.model.norm.normalize_inputs(&x)
    }

    fn window(&self, current: [f64; NUM_INPUTS]) -> Vec<[f64; NUM_INPUTS]> {
        let len = self.model.seq_len.max(1);
        let past = self.history.len().min(len - 1);
        let pad = len - 1 - past;
        let mut w = Vec::with_capacity(len);
        let first = self
            .history
            .get(self.history.len() - past)
            .copied()
            .unwrap_or(current);
        w.extend(std::iter::repeat_n(first, pad));
        w.extend(self.history.iter().skip(self.history.len() - past).copied());
        w.push(current);
        w
    }

    /// The model's price for the current market, in ticks.
    pub fn predict(&self, a: &CustomerOrder, s: &LobSummary, stats: &TapeStats, now: f64) -> Price {
        let x = self.inputs(a, s, stats, now);
        let y = forward(&self.model, &self.window(x)).expect("window length matches model");
        if !y.is_finite() {
            return a.limit_price;
        }
        self.model.norm.denormalize_price(y)
    }

    /// Quote used inside a session; remembers the inputs for longer windows.
    pub fn quote_with_stats(
        &mut self,
        a: &CustomerOrder,
        s: &LobSummary,
        stats: &TapeStats,
        now: f64,
    ) -> Price {
        if self.model.seq_len > 1 {
            self.last_inputs = Some(self.inputs(a, s, stats, now));
        }
        let p_hat = self.predict(a, s, stats, now);
        apply_fallback(a.side, a.limit_price, p_hat, s)
    }
}

/// Keep a profitable prediction; otherwise improve the own-side best by one
/// tick, never past the limit.
pub fn apply_fallback(side: Side, limit: Price, p_hat: Price, s: &LobSummary) -> Price {
    match side {
        Side::Bid if p_hat <= limit => p_hat,
        Side::Bid => s.best_bid.map_or(limit, |b| limit.min(b + 1)),
        Side::Ask if p_hat >= limit => p_hat,
        Side::Ask => s.best_ask.map_or(limit, |a| limit.max(a - 1)),
    }
}

/// Quote for `assignment` given the current book and the full tape.
pub fn dtx_quote(
    state: &DtxState,
    assignment: &CustomerOrder,
    s: &LobSummary,
    tape: &[Trade],
    now: f64,
) -> Price {
    let stats = TapeStats::from_tape(tape);
    let p_hat = state.predict(assignment, s, &stats, now);
    apply_fallback(assignment.side, assignment.limit_price, p_hat, s)
}
