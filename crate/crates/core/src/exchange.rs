//! Price-time priority limit order book with continuous double auction matching.
//!
//! Orders enter through a FIFO inbound queue (many producers) and are matched by a
//! single consumer calling [`Lob::process_next`]. Incoming orders execute at the
//! resting order's price against the earliest order at the best opposite level.
//! Each trader holds at most one live order: a new order from the same trader
//! replaces whatever it had resting when the message is processed.
//!
//! After every processed message a fresh [`LobSummary`] is published behind an
//! `Arc`, so readers on other threads always see a complete snapshot.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::{self, Write};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use thiserror::Error;

/// Integer price in ticks (1 tick = 1 currency unit).
pub type Price = i64;
pub type OrderId = u64;
pub type TraderId = Arc<str>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderError {
    #[error("price must be at least one tick, got {0}")]
    InvalidPrice(Price),
    #[error("quantity must be positive")]
    InvalidQuantity,
    #[error("submit time must be finite and non-negative, got {0}")]
    InvalidTime(f64),
    #[error("unknown trader `{0}`")]
    UnknownTrader(String),
}

/// An order as submitted by a trader, before the exchange assigns an id.
#[derive(Debug, Clone, PartialEq)]
pub struct NewOrder {
    pub trader_id: TraderId,
    pub side: Side,
    pub price: Price,
    pub quantity: u32,
    pub submit_time: f64,
    /// Opaque caller reference echoed back on every fill of this order.
    pub client_ref: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub order_id: OrderId,
    pub trader_id: TraderId,
    pub side: Side,
    pub price: Price,
    pub quantity: u32,
    pub submit_time: f64,
    pub client_ref: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub time: f64,
    pub price: Price,
    pub quantity: u32,
    pub buyer_id: TraderId,
    pub seller_id: TraderId,
    pub resting_side: Side,
    pub buy_order_id: OrderId,
    pub sell_order_id: OrderId,
    pub buyer_ref: u64,
    pub seller_ref: u64,
}

impl Trade {
    /// Side of the order that crossed the spread.
    pub fn aggressor_side(&self) -> Side {
        self.resting_side.opposite()
    }
}

/// Point-in-time Level-2 view of the book.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LobSummary {
    pub time: f64,
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub bid_qty_total: u64,
    pub ask_qty_total: u64,
    pub bid_depth: usize,
    pub ask_depth: usize,
    pub qty_at_best_bid: u64,
    pub qty_at_best_ask: u64,
    pub last_trade: Option<Trade>,
}

/// Result of processing one inbound message.
#[derive(Debug, Clone)]
pub struct Execution {
    pub order: Order,
    /// The trader's previous resting order, removed by this message.
    pub replaced: Option<OrderId>,
    pub trades: Vec<Trade>,
    /// Summary published just before this message was applied.
    pub before: Arc<LobSummary>,
}

#[derive(Debug, Default)]
struct Level {
    orders: VecDeque<Order>,
    qty: u64,
}

impl Level {
    fn insert(&mut self, order: Order) {
        self.qty += u64::from(order.quantity);
        // Usually appends; out-of-order submit stamps from concurrent producers
        // still land in (submit_time, order_id) order.
        let key = (order.submit_time, order.order_id);
        let pos = self
            .orders
            .iter()
            .rposition(|o| (o.submit_time, o.order_id) <= key)
            .map_or(0, |p| p + 1);
        self.orders.insert(pos, order);
    }
}

/// Matching state: both books, the trader index and the tape.
#[derive(Debug, Default)]
struct Book {
    bids: BTreeMap<Price, Level>,
    asks: BTreeMap<Price, Level>,
    live: HashMap<TraderId, (Side, Price, OrderId)>,
    bid_qty: u64,
    ask_qty: u64,
    tape: Vec<Trade>,
    clock: f64,
}

impl Book {
    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<Price, Level> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    fn adjust_total(&mut self, side: Side, delta: i64) {
        let total = match side {
            Side::Bid => &mut self.bid_qty,
            Side::Ask => &mut self.ask_qty,
        };
        *total = total
            .checked_add_signed(delta)
            .expect("book quantity underflow");
    }

    fn remove_live(&mut self, trader: &TraderId) -> Option<OrderId> {
        let (side, price, id) = self.live.remove(trader)?;
        let book = self.side_mut(side);
        let level = book.get_mut(&price).expect("indexed level missing");
        let pos = level
            .orders
            .iter()
            .position(|o| o.order_id == id)
            .expect("indexed order missing");
        let order = level.orders.remove(pos).expect("position in range");
        level.qty -= u64::from(order.quantity);
        if level.orders.is_empty() {
            book.remove(&price);
        }
        self.adjust_total(side, -i64::from(order.quantity));
        Some(id)
    }

    fn execute(&mut self, mut order: Order) -> (Option<OrderId>, Vec<Trade>) {
        let replaced = self.remove_live(&order.trader_id);
        self.clock = self.clock.max(order.submit_time);
        let mut trades = Vec::new();
        let resting_side = order.side.opposite();

        while order.quantity > 0 {
            let best = match order.side {
                Side::Bid => self.best_ask().filter(|&a| a <= order.price),
                Side::Ask => self.best_bid().filter(|&b| b >= order.price),
            };
            let Some(price) = best else { break };
            let now = self.clock;
            let (book, live) = match resting_side {
                Side::Bid => (&mut self.bids, &mut self.live),
                Side::Ask => (&mut self.asks, &mut self.live),
            };
            let level = book.get_mut(&price).expect("best level present");
            let resting = level.orders.front_mut().expect("non-empty level");
            let fill = resting.quantity.min(order.quantity);
            resting.quantity -= fill;
            level.qty -= u64::from(fill);
            order.quantity -= fill;

            let (buy, sell) = match order.side {
                Side::Bid => (&order, &*resting),
                Side::Ask => (&*resting, &order),
            };
            let trade = Trade {
                time: now,
                price,
                quantity: fill,
                buyer_id: buy.trader_id.clone(),
                seller_id: sell.trader_id.clone(),
                resting_side,
                buy_order_id: buy.order_id,
                sell_order_id: sell.order_id,
                buyer_ref: buy.client_ref,
                seller_ref: sell.client_ref,
            };

            if resting.quantity == 0 {
                let done = level.orders.pop_front().expect("front exists");
                if level.orders.is_empty() {
                    book.remove(&price);
                }
                live.remove(&done.trader_id);
            }
            self.adjust_total(resting_side, -i64::from(fill));
            trades.push(trade);
        }

        if order.quantity > 0 {
            self.live.insert(
                order.trader_id.clone(),
                (order.side, order.price, order.order_id),
            );
            self.adjust_total(order.side, i64::from(order.quantity));
            let price = order.price;
            self.side_mut(order.side)
                .entry(price)
                .or_default()
                .insert(order);
        }
        self.tape.extend(trades.iter().cloned());
        (replaced, trades)
    }

    fn summary(&self) -> LobSummary {
        let best_bid = self.best_bid();
        let best_ask = self.best_ask();
        LobSummary {
            time: self.clock,
            best_bid,
            best_ask,
            bid_qty_total: self.bid_qty,
            ask_qty_total: self.ask_qty,
            bid_depth: self.bids.len(),
            ask_depth: self.asks.len(),
            qty_at_best_bid: best_bid.map_or(0, |p| self.bids[&p].qty),
            qty_at_best_ask: best_ask.map_or(0, |p| self.asks[&p].qty),
            last_trade: self.tape.last().cloned(),
        }
    }
}

/// Outcome of a filtered dequeue.
#[derive(Debug, Clone)]
pub enum Processed {
    Executed(Execution),
    Dropped(Order),
}

#[derive(Debug, Default)]
struct Inbound {
    queue: VecDeque<Order>,
    next_id: OrderId,
}

/// The exchange: inbound FIFO, matching book, tape and published summary.
///
/// All methods take `&self`; share it behind an `Arc` for threaded sessions.
#[derive(Debug)]
pub struct Lob {
    traders: RwLock<HashSet<TraderId>>,
    inbound: Mutex<Inbound>,
    ready: Condvar,
    book: Mutex<Book>,
    published: RwLock<Arc<LobSummary>>,
}

impl Default for Lob {
    fn default() -> Self {
        Self::new()
    }
}

impl Lob {
    pub fn new() -> Self {
        Lob {
            traders: RwLock::new(HashSet::new()),
            inbound: Mutex::new(Inbound {
                queue: VecDeque::new(),
                next_id: 1,
            }),
            ready: Condvar::new(),
            book: Mutex::new(Book::default()),
            published: RwLock::new(Arc::new(LobSummary::default())),
        }
    }

    pub fn register_trader(&self, id: TraderId) {
        self.traders.write().unwrap().insert(id);
    }

    /// Validates and appends an order to the inbound queue, returning its id.
    pub fn enqueue(&self, order: NewOrder) -> Result<OrderId, OrderError> {
        if order.price < 1 {
            return Err(OrderError::InvalidPrice(order.price));
        }
        if order.quantity == 0 {
            return Err(OrderError::InvalidQuantity);
        }
        if !order.submit_time.is_finite() || order.submit_time < 0.0 {
            return Err(OrderError::InvalidTime(order.submit_time));
        }
        if !self.traders.read().unwrap().contains(&order.trader_id) {
            return Err(OrderError::UnknownTrader(order.trader_id.to_string()));
        }
        let mut inbound = self.inbound.lock().unwrap();
        let order_id = inbound.next_id;
        inbound.next_id += 1;
        inbound.queue.push_back(Order {
            order_id,
            trader_id: order.trader_id,
            side: order.side,
            price: order.price,
            quantity: order.quantity,
            submit_time: order.submit_time,
            client_ref: order.client_ref,
        });
        drop(inbound);
        self.ready.notify_one();
        Ok(order_id)
    }

    pub fn pending(&self) -> usize {
        self.inbound.lock().unwrap().queue.len()
    }

    /// Dequeues and applies one message. `None` when the queue is empty.
    pub fn process_next(&self) -> Option<Execution> {
        let order = self.inbound.lock().unwrap().queue.pop_front()?;
        Some(self.apply(order))
    }

    /// Like [`Lob::process_next`] but blocks up to `timeout` for a message.
    pub fn wait_next(&self, timeout: Duration) -> Option<Execution> {
        let mut inbound = self.inbound.lock().unwrap();
        if inbound.queue.is_empty() {
            inbound = self.ready.wait_timeout(inbound, timeout).unwrap().0;
        }
        let order = inbound.queue.pop_front()?;
        drop(inbound);
        Some(self.apply(order))
    }

    /// Like [`Lob::process_next`], but an order rejected by `admit` is removed
    /// from the queue without touching the book.
    pub fn process_next_if<F: FnOnce(&Order) -> bool>(&self, admit: F) -> Option<Processed> {
        let order = self.inbound.lock().unwrap().queue.pop_front()?;
        Some(self.admit_and_apply(order, admit))
    }

    /// Blocking variant of [`Lob::process_next_if`].
    pub fn wait_next_if<F: FnOnce(&Order) -> bool>(
        &self,
        timeout: Duration,
        admit: F,
    ) -> Option<Processed> {
        let mut inbound = self.inbound.lock().unwrap();
        if inbound.queue.is_empty() {
            inbound = self.ready.wait_timeout(inbound, timeout).unwrap().0;
        }
        let order = inbound.queue.pop_front()?;
        drop(inbound);
        Some(self.admit_and_apply(order, admit))
    }

    fn admit_and_apply<F: FnOnce(&Order) -> bool>(&self, order: Order, admit: F) -> Processed {
        if admit(&order) {
            Processed::Executed(self.apply(order))
        } else {
            Processed::Dropped(order)
        }
    }

    fn apply(&self, order: Order) -> Execution {
        let mut book = self.book.lock().unwrap();
        let before = self.summary();
        let (replaced, trades) = book.execute(order.clone());
        let after = Arc::new(book.summary());
        *self.published.write().unwrap() = after;
        Execution {
            order,
            replaced,
            trades,
            before,
        }
    }

    /// Blocks up to `timeout` until a message is queued; true if one is.
    pub fn wait_for_order(&self, timeout: Duration) -> bool {
        let inbound = self.inbound.lock().unwrap();
        if !inbound.queue.is_empty() {
            return true;
        }
        let (inbound, _) = self.ready.wait_timeout(inbound, timeout).unwrap();
        !inbound.queue.is_empty()
    }

    /// The most recently published snapshot.
    pub fn summary(&self) -> Arc<LobSummary> {
        self.published.read().unwrap().clone()
    }

    pub fn tape_len(&self) -> usize {
        self.book.lock().unwrap().tape.len()
    }

    pub fn tape(&self) -> Vec<Trade> {
        self.book.lock().unwrap().tape.clone()
    }

    pub fn tape_since(&self, from: usize) -> Vec<Trade> {
        let book = self.book.lock().unwrap();
        book.tape
            .get(from..)
            .map(<[Trade]>::to_vec)
            .unwrap_or_default()
    }

    /// The resting order of `trader`, if any, as (side, price, id).
    pub fn live_order(&self, trader: &str) -> Option<(Side, Price, OrderId)> {
        self.book.lock().unwrap().live.get(trader).copied()
    }

    /// All resting orders, bids best-first then asks best-first.
    pub fn resting_orders(&self) -> Vec<Order> {
        let book = self.book.lock().unwrap();
        let bids = book.bids.values().rev().flat_map(|l| l.orders.iter());
        let asks = book.asks.values().flat_map(|l| l.orders.iter());
        bids.chain(asks).cloned().collect()
    }
}

pub const TAPE_HEADER: &str = "time,price,quantity,buyer,seller";

pub fn write_tape_csv<W: Write>(mut out: W, tape: &[Trade]) -> io::Result<()> {
    writeln!(out, "{TAPE_HEADER}")?;
    for t in tape {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.time, t.price, t.quantity, t.buyer_id, t.seller_id
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lob(traders: &[&str]) -> Lob {
        let lob = Lob::new();
        for t in traders {
            lob.register_trader(Arc::from(*t));
        }
        lob
    }

    fn order(trader: &str, side: Side, price: Price, qty: u32, t: f64) -> NewOrder {
        NewOrder {
            trader_id: Arc::from(trader),
            side,
            price,
            quantity: qty,
            submit_time: t,
            client_ref: 0,
        }
    }

    fn drain(lob: &Lob) -> Vec<Trade> {
        let mut trades = Vec::new();
        while let Some(ex) = lob.process_next() {
            trades.extend(ex.trades);
        }
        trades
    }

    #[test]
    fn replacement_keeps_only_latest_bid() {
        let lob = lob(&["T1"]);
        lob.enqueue(order("T1", Side::Bid, 100, 1, 0.0)).unwrap();
        lob.enqueue(order("T1", Side::Bid, 105, 1, 0.1)).unwrap();
        drain(&lob);
        let resting = lob.resting_orders();
        assert_eq!(resting.len(), 1);
        assert_eq!(resting[0].price, 105);
        assert_eq!(lob.summary().bid_qty_total, 1);
    }

    #[test]
    fn fifo_processing_order() {
        let lob = lob(&["A", "B"]);
        let first = lob.enqueue(order("A", Side::Bid, 90, 1, 0.0)).unwrap();
        let second = lob.enqueue(order("B", Side::Bid, 91, 1, 0.0)).unwrap();
        assert_eq!(lob.process_next().unwrap().order.order_id, first);
        assert_eq!(lob.process_next().unwrap().order.order_id, second);
        assert!(lob.process_next().is_none());
    }

    #[test]
    fn rejects_invalid_orders() {
        let lob = lob(&["A"]);
        assert_eq!(
            lob.enqueue(order("A", Side::Bid, 0, 1, 0.0)),
            Err(OrderError::InvalidPrice(0))
        );
        assert_eq!(
            lob.enqueue(order("A", Side::Bid, 10, 0, 0.0)),
            Err(OrderError::InvalidQuantity)
        );
        assert!(matches!(
            lob.enqueue(order("Z", Side::Bid, 10, 1, 0.0)),
            Err(OrderError::UnknownTrader(_))
        ));
        assert!(matches!(
            lob.enqueue(order("A", Side::Bid, 10, 1, -1.0)),
            Err(OrderError::InvalidTime(_))
        ));
        assert_eq!(lob.pending(), 0);
    }

    #[test]
    fn executes_at_resting_price() {
        let lob = lob(&["S", "B"]);
        lob.enqueue(order("S", Side::Ask, 95, 1, 0.0)).unwrap();
        lob.enqueue(order("B", Side::Bid, 100, 1, 1.0)).unwrap();
        let trades = drain(&lob);
        assert_eq!(trades.len(), 1);
        assert_eq!(trades[0].price, 95);
        assert_eq!(trades[0].resting_side, Side::Ask);
        assert_eq!(&*trades[0].buyer_id, "B");
        let s = lob.summary();
        assert_eq!(s.last_trade.as_ref().unwrap().price, 95);
        assert_eq!((s.best_bid, s.best_ask), (None, None));
    }

    #[test]
    fn time_priority_within_level() {
        let lob = lob(&["T1", "T2", "S"]);
        lob.enqueue(order("T1", Side::Bid, 100, 1, 0.0)).unwrap();
        lob.enqueue(order("T2", Side::Bid, 100, 1, 0.5)).unwrap();
        lob.enqueue(order("S", Side::Ask, 90, 1, 1.0)).unwrap();
        let trades = drain(&lob);
        assert_eq!(&*trades[0].buyer_id, "T1");
        assert_eq!(trades[0].price, 100);
    }

    #[test]
    fn partial_fill_leaves_remainder() {
        let lob = lob(&["S", "B"]);
        lob.enqueue(order("S", Side::Ask, 95, 2, 0.0)).unwrap();
        lob.enqueue(order("B", Side::Bid, 100, 1, 1.0)).unwrap();
        let trades = drain(&lob);
        assert_eq!(trades.len(), 1);
        assert_eq!(trades[0].quantity, 1);
        let s = lob.summary();
        assert_eq!(s.best_ask, Some(95));
        assert_eq!(s.qty_at_best_ask, 1);
        assert_eq!(lob.live_order("S").map(|l| l.1), Some(95));
    }

    #[test]
    fn sweeps_several_levels() {
        let lob = lob(&["S1", "S2", "B"]);
        lob.enqueue(order("S1", Side::Ask, 95, 1, 0.0)).unwrap();
        lob.enqueue(order("S2", Side::Ask, 97, 1, 0.0)).unwrap();
        lob.enqueue(order("B", Side::Bid, 100, 3, 1.0)).unwrap();
        let trades = drain(&lob);
        assert_eq!(trades.iter().map(|t| t.price).collect::<Vec<_>>(), [95, 97]);
        let s = lob.summary();
        assert_eq!(s.best_bid, Some(100));
        assert_eq!(s.bid_qty_total, 1);
    }

    #[test]
    fn empty_summary() {
        let s = Lob::new().summary();
        assert_eq!(s.best_bid, None);
        assert_eq!(s.best_ask, None);
        assert_eq!(s.bid_qty_total + s.ask_qty_total, 0);
    }

    #[test]
    fn summary_totals() {
        let lob = lob(&["A", "B", "C", "D"]);
        lob.enqueue(order("A", Side::Bid, 100, 1, 0.0)).unwrap();
        lob.enqueue(order("B", Side::Bid, 99, 2, 0.0)).unwrap();
        lob.enqueue(order("C", Side::Ask, 103, 1, 0.0)).unwrap();
        drain(&lob);
        let s = lob.summary();
        assert_eq!(s.best_bid, Some(100));
        assert_eq!(s.best_ask, Some(103));
        assert_eq!(s.bid_qty_total, 3);
        assert_eq!(s.ask_qty_total, 1);
        assert_eq!((s.bid_depth, s.ask_depth), (2, 1));
    }

    #[test]
    fn tape_csv_has_header_and_rows() {
        let lob = lob(&["S", "B"]);
        lob.enqueue(order("S", Side::Ask, 95, 1, 0.0)).unwrap();
        lob.enqueue(order("B", Side::Bid, 100, 1, 2.5)).unwrap();
        drain(&lob);
        let mut buf = Vec::new();
        write_tape_csv(&mut buf, &lob.tape()).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "time,price,quantity,buyer,seller\n2.5,95,1,B,S\n"
        );
    }

    #[test]
    fn filtered_dequeue_drops_without_touching_book() {
        let lob = lob(&["A", "B"]);
        lob.enqueue(order("A", Side::Bid, 100, 1, 0.0)).unwrap();
        let mut rejected = order("B", Side::Ask, 90, 1, 0.1);
        rejected.client_ref = 7;
        lob.enqueue(rejected).unwrap();
        assert!(matches!(
            lob.process_next_if(|_| true),
            Some(Processed::Executed(_))
        ));
        match lob.process_next_if(|o| o.client_ref != 7) {
            Some(Processed::Dropped(o)) => assert_eq!(o.trader_id.as_ref(), "B"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(lob.tape().is_empty());
        assert_eq!(lob.summary().best_bid, Some(100));
        assert!(lob.process_next_if(|_| true).is_none());
    }
}
