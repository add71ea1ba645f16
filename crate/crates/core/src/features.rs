//! Level-2 snapshot features.
//!
//! A [`FeatureRecord`] is written for every trade: thirteen inputs describing the
//! market the aggressing trader saw, plus the trade price as the regression
//! target. Records are built from the summary published just before the
//! aggressing order was applied and from the tape up to (not including) the
//! trade, which is exactly what a live trader can observe when it quotes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::exchange::{LobSummary, Price, Side, Trade};
use crate::session::CustomerOrder;

pub const NUM_FIELDS: usize = 14;
pub const NUM_INPUTS: usize = 13;
pub const TARGET_FIELD: usize = 13;

/// Column names in record order.
pub const FIELD_NAMES: [&str; NUM_FIELDS] = [
    "t", "otype", "limit", "mid", "micro", "imbal", "spread", "bb", "ba", "dt", "qty", "pstar",
    "alpha", "price",
];

/// Weight kept on the running equilibrium estimate at each new trade.
pub const P_STAR_WEIGHT: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("equilibrium estimate must be positive, got {0}")]
    NonPositivePStar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRecord {
    pub t: f64,
    /// 0 for a bid, 1 for an ask.
    pub order_type: f64,
    pub limit_price: f64,
    pub midprice: f64,
    pub microprice: f64,
    pub imbalance: f64,
    pub spread: f64,
    pub best_bid: f64,
    pub best_ask: f64,
    pub dt_last_trade: f64,
    pub total_quotes: f64,
    pub p_star: f64,
    pub alpha: f64,
    pub trade_price: f64,
}

impl FeatureRecord {
    pub fn to_array(&self) -> [f64; NUM_FIELDS] {
        [
            self.t,
            self.order_type,
            self.limit_price,
            self.midprice,
            self.microprice,
            self.imbalance,
            self.spread,
            self.best_bid,
            self.best_ask,
            self.dt_last_trade,
            self.total_quotes,
            self.p_star,
            self.alpha,
            self.trade_price,
        ]
    }

    pub fn from_array(a: [f64; NUM_FIELDS]) -> Self {
        FeatureRecord {
            t: a[0],
            order_type: a[1],
            limit_price: a[2],
            midprice: a[3],
            microprice: a[4],
            imbalance: a[5],
            spread: a[6],
            best_bid: a[7],
            best_ask: a[8],
            dt_last_trade: a[9],
            total_quotes: a[10],
            p_star: a[11],
            alpha: a[12],
            trade_price: a[13],
        }
    }

    pub fn inputs(&self) -> [f64; NUM_INPUTS] {
        let a = self.to_array();
        let mut x = [0.0; NUM_INPUTS];
        x.copy_from_slice(&a[..NUM_INPUTS]);
        x
    }
}

pub fn order_type_code(side: Side) -> f64 {
    match side {
        Side::Bid => 0.0,
        Side::Ask => 1.0,
    }
}

pub fn midprice(s: &LobSummary) -> f64 {
    match (s.best_bid, s.best_ask) {
        (Some(b), Some(a)) => (b + a) as f64 / 2.0,
        (Some(p), None) | (None, Some(p)) => p as f64,
        (None, None) => s.last_trade.as_ref().map_or(0.0, |t| t.price as f64),
    }
}

pub fn microprice(s: &LobSummary) -> f64 {
    match (s.best_bid, s.best_ask) {
        (Some(b), Some(a)) => {
            let qty = s.qty_at_best_bid + s.qty_at_best_ask;
            if qty == 0 {
                return midprice(s);
            }
            (b as f64 * s.qty_at_best_ask as f64 + a as f64 * s.qty_at_best_bid as f64) / qty as f64
        }
        _ => midprice(s),
    }
}

pub fn imbalance(s: &LobSummary) -> f64 {
    let total = s.bid_qty_total + s.ask_qty_total;
    if total == 0 {
        return 0.0;
    }
    (s.bid_qty_total as f64 - s.ask_qty_total as f64) / total as f64
}

pub fn spread(s: &LobSummary) -> f64 {
    match (s.best_bid, s.best_ask) {
        (Some(b), Some(a)) => (a - b).max(0) as f64,
        _ => 0.0,
    }
}

/// EWMA of trade prices seeded with the first trade; midprice before any
/// trade; 0 on an empty market.
pub fn estimate_p_star(tape: &[Trade], current: Option<&LobSummary>) -> f64 {
    let mut prices = tape.iter().map(|t| t.price as f64);
    match prices.next() {
        Some(first) => prices.fold(first, |est, p| {
            P_STAR_WEIGHT * est + (1.0 - P_STAR_WEIGHT) * p
        }),
        None => current.map_or(0.0, midprice),
    }
}

/// Smith's alpha: RMS deviation of trade prices from `p_star`, in percent of `p_star`.
pub fn smith_alpha(window: &[Trade], p_star: f64) -> Result<f64, FeatureError> {
    if window.is_empty() {
        return Ok(0.0);
    }
    if p_star <= 0.0 || !p_star.is_finite() {
        return Err(FeatureError::NonPositivePStar(p_star));
    }
    let msd = window
        .iter()
        .map(|t| (t.price as f64 - p_star).powi(2))
        .sum::<f64>()
        / window.len() as f64;
    Ok(100.0 / p_star * msd.sqrt())
}

/// Running tape statistics, equivalent to [`estimate_p_star`] and a cumulative
/// [`smith_alpha`] without rescanning the tape.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TapeStats {
    pub count: u64,
    sum: f64,
    sum_sq: f64,
    ewma: f64,
    pub last_trade_time: Option<f64>,
}

impl TapeStats {
    pub fn from_tape(tape: &[Trade]) -> Self {
        let mut stats = TapeStats::default();
        for t in tape {
            stats.push(t);
        }
        stats
    }

    pub fn push(&mut self, trade: &Trade) {
        let p = trade.price as f64;
        self.ewma = if self.count == 0 {
            p
        } else {
            P_STAR_WEIGHT * self.ewma + (1.0 - P_STAR_WEIGHT) * p
        };
        self.count += 1;
        self.sum += p;
        self.sum_sq += p * p;
        self.last_trade_time = Some(trade.time);
    }

    pub fn p_star(&self, current: &LobSummary) -> f64 {
        if self.count == 0 {
            midprice(current)
        } else {
            self.ewma
        }
    }

    /// Cumulative alpha against `p_star`; 0 when undefined.
    pub fn alpha(&self, p_star: f64) -> f64 {
        if self.count == 0 || p_star <= 0.0 {
            return 0.0;
        }
        let n = self.count as f64;
        let msd = (self.sum_sq - 2.0 * p_star * self.sum + n * p_star * p_star) / n;
        100.0 / p_star * msd.max(0.0).sqrt()
    }

    pub fn dt_since_last(&self, now: f64) -> f64 {
        now - self.last_trade_time.unwrap_or(0.0)
    }
}

/// The thirteen model inputs as observed by a trader at time `now`.
pub fn live_inputs(
    s: &LobSummary,
    stats: &TapeStats,
    now: f64,
    side: Side,
    limit: Price,
) -> [f64; NUM_INPUTS] {
    let mid = midprice(s);
    let p_star = stats.p_star(s);
    [
        now,
        order_type_code(side),
        limit as f64,
        mid,
        microprice(s),
        imbalance(s),
        spread(s),
        s.best_bid.map_or(mid, |p| p as f64),
        s.best_ask.map_or(mid, |p| p as f64),
        stats.dt_since_last(now),
        (s.bid_qty_total + s.ask_qty_total) as f64,
        p_star,
        stats.alpha(p_star),
    ]
}

fn record_from(inputs: [f64; NUM_INPUTS], trade_price: Price) -> FeatureRecord {
    let mut a = [0.0; NUM_FIELDS];
    a[..NUM_INPUTS].copy_from_slice(&inputs);
    a[TARGET_FIELD] = trade_price as f64;
    FeatureRecord::from_array(a)
}

/// Snapshot for `trade`, initiated by the owner of `assignment`.
///
/// `s` is the book the aggressor saw and `tape` the trades before `trade`.
pub fn make_record(
    s: &LobSummary,
    tape: &[Trade],
    assignment: &CustomerOrder,
    trade: &Trade,
) -> FeatureRecord {
    let p_star = estimate_p_star(tape, Some(s));
    let alpha = smith_alpha(tape, p_star).unwrap_or(0.0);
    let mid = midprice(s);
    let prev = tape.last().map_or(0.0, |t| t.time);
    let inputs = [
        trade.time,
        order_type_code(assignment.side),
        assignment.limit_price as f64,
        mid,
        microprice(s),
        imbalance(s),
        spread(s),
        s.best_bid.map_or(mid, |p| p as f64),
        s.best_ask.map_or(mid, |p| p as f64),
        trade.time - prev,
        (s.bid_qty_total + s.ask_qty_total) as f64,
        p_star,
        alpha,
    ];
    record_from(inputs, trade.price)
}

/// Same record as [`make_record`], computed from running statistics.
pub fn make_record_with_stats(
    s: &LobSummary,
    stats: &TapeStats,
    assignment: &CustomerOrder,
    trade: &Trade,
) -> FeatureRecord {
    let inputs = live_inputs(
        s,
        stats,
        trade.time,
        assignment.side,
        assignment.limit_price,
    );
    record_from(inputs, trade.price)
}

/// Per-field minimum and maximum over a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub min: [f64; NUM_FIELDS],
    pub max: [f64; NUM_FIELDS],
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats {
            min: [f64::INFINITY; NUM_FIELDS],
            max: [f64::NEG_INFINITY; NUM_FIELDS],
        }
    }
}

impl NormStats {
    pub fn observe(&mut self, row: &[f64; NUM_FIELDS]) {
        for (i, &v) in row.iter().enumerate() {
            self.min[i] = self.min[i].min(v);
            self.max[i] = self.max[i].max(v);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min[0] > self.max[0]
    }

    pub fn scale(&self, field: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[field], self.max[field]);
        if hi <= lo {
            return 0.0;
        }
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn normalize_inputs(&self, x: &[f64; NUM_INPUTS]) -> [f64; NUM_INPUTS] {
        let mut out = [0.0; NUM_INPUTS];
        for (i, v) in x.iter().enumerate() {
            out[i] = self.scale(i, *v);
        }
        out
    }

    /// All fourteen fields scaled to [0, 1].
    pub fn normalize(&self, r: &FeatureRecord) -> [f64; NUM_FIELDS] {
        let a = r.to_array();
        let mut out = [0.0; NUM_FIELDS];
        for (i, v) in a.iter().enumerate() {
            out[i] = self.scale(i, *v);
        }
        out
    }

    pub fn normalize_price(&self, p: f64) -> f64 {
        self.scale(TARGET_FIELD, p)
    }

    /// Inverse of the target map, rounded to ticks.
    pub fn denormalize_price(&self, y: f64) -> Price {
        let (lo, hi) = (self.min[TARGET_FIELD], self.max[TARGET_FIELD]);
        let span = if hi > lo { hi - lo } else { 0.0 };
        (lo + y * span).round() as Price
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "field,min,max")?;
        for (i, name) in FIELD_NAMES.iter().enumerate() {
            writeln!(out, "{name},{},{}", self.min[i], self.max[i])?;
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut stats = NormStats::default();
        let mut seen = [false; NUM_FIELDS];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "field,min,max" {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let [name, lo, hi] = parts[..] else {
                return Err(Error::parse(origin, n + 1, "expected `field,min,max`"));
            };
            let idx = FIELD_NAMES
                .iter()
                .position(|f| *f == name)
                .ok_or_else(|| Error::parse(origin, n + 1, format!("unknown field `{name}`")))?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(origin, n + 1, format!("bad number `{s}`")))
            };
            stats.min[idx] = num(lo)?;
            stats.max[idx] = num(hi)?;
            if stats.min[idx] > stats.max[idx] {
                return Err(Error::parse(origin, n + 1, "min exceeds max"));
            }
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::parse(
                origin,
                text.lines().count(),
                format!("missing field `{}`", FIELD_NAMES[missing]),
            ));
        }
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut out = BufWriter::new(file);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

pub fn snapshot_header() -> String {
    FIELD_NAMES.join(",")
}

pub fn write_snapshots<W: Write>(mut out: W, records: &[FeatureRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", snapshot_header())?;
    for r in records {
        let row: Vec<String> = r.to_array().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<Vec<FeatureRecord>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let origin = path.display().to_string();
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != snapshot_header() {
                return Err(Error::parse(&origin, 1, "unexpected snapshot header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut a = [0.0; NUM_FIELDS];
        let mut count = 0;
        for (i, cell) in line.split(',').enumerate() {
            if i >= NUM_FIELDS {
                count = i + 1;
                break;
            }
            a[i] = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(&origin, n + 1, format!("bad number `{cell}`")))?;
            count = i + 1;
        }
        if count != NUM_FIELDS {
            return Err(Error::parse(
                &origin,
                n + 1,
                format!("expected {NUM_FIELDS} columns, got {count}"),
            ));
        }
        rows.push(FeatureRecord::from_array(a));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::TraderId;
    use std::sync::Arc;

    fn book(bid: Option<(Price, u64)>, ask: Option<(Price, u64)>) -> LobSummary {
        LobSummary {
            best_bid: bid.map(|b| b.0),
            best_ask: ask.map(|a| a.0),
            qty_at_best_bid: bid.map_or(0, |b| b.1),
            qty_at_best_ask: ask.map_or(0, |a| a.1),
            bid_qty_total: bid.map_or(0, |b| b.1),
            ask_qty_total: ask.map_or(0, |a| a.1),
            bid_depth: bid.is_some() as usize,
            ask_depth: ask.is_some() as usize,
            ..LobSummary::default()
        }
    }

    fn trade(time: f64, price: Price) -> Trade {
        let id: TraderId = Arc::from("x");
        Trade {
            time,
            price,
            quantity: 1,
            buyer_id: id.clone(),
            seller_id: Arc::from("y"),
            resting_side: Side::Ask,
            buy_order_id: 1,
            sell_order_id: 2,
            buyer_ref: 0,
            seller_ref: 0,
        }
    }

    #[test]
    fn midprice_cases() {
        assert_eq!(midprice(&book(Some((100, 1)), Some((104, 1)))), 102.0);
        assert_eq!(midprice(&book(Some((100, 1)), None)), 100.0);
        assert_eq!(midprice(&LobSummary::default()), 0.0);
        let mut s = LobSummary::default();
        s.last_trade = Some(trade(1.0, 97));
        assert_eq!(midprice(&s), 97.0);
    }

    #[test]
    fn microprice_cases() {
        assert_eq!(microprice(&book(Some((100, 3)), Some((104, 1)))), 103.0);
        assert_eq!(microprice(&book(Some((100, 2)), Some((104, 2)))), 102.0);
        assert_eq!(microprice(&book(None, Some((104, 2)))), 104.0);
    }

    #[test]
    fn imbalance_cases() {
        let mut s = LobSummary::default();
        assert_eq!(imbalance(&s), 0.0);
        s.bid_qty_total = 3;
        s.ask_qty_total = 1;
        assert_eq!(imbalance(&s), 0.5);
        s.ask_qty_total = 3;
        assert_eq!(imbalance(&s), 0.0);
    }

    #[test]
    fn p_star_cases() {
        assert_eq!(estimate_p_star(&[trade(0.0, 100)], None), 100.0);
        let two = estimate_p_star(&[trade(0.0, 100), trade(1.0, 110)], None);
        assert!((two - 100.5).abs() < 1e-12);
        let flat: Vec<Trade> = (0..50).map(|i| trade(i as f64, 100)).collect();
        assert_eq!(estimate_p_star(&flat, None), 100.0);
        assert_eq!(estimate_p_star(&[], None), 0.0);
        assert_eq!(
            estimate_p_star(&[], Some(&book(Some((98, 1)), Some((102, 1))))),
            100.0
        );
    }

    #[test]
    fn alpha_cases() {
        let flat: Vec<Trade> = (0..5).map(|i| trade(i as f64, 100)).collect();
        assert_eq!(smith_alpha(&flat, 100.0).unwrap(), 0.0);
        let spread = [trade(0.0, 90), trade(1.0, 110)];
        assert!((smith_alpha(&spread, 100.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(smith_alpha(&[], 100.0).unwrap(), 0.0);
        assert!(smith_alpha(&spread, 0.0).is_err());
    }

    #[test]
    fn alpha_is_scale_free() {
        let base = [trade(0.0, 90), trade(1.0, 104), trade(2.0, 113)];
        let scaled: Vec<Trade> = base.iter().map(|t| trade(t.time, t.price * 7)).collect();
        let a = smith_alpha(&base, 101.0).unwrap();
        let b = smith_alpha(&scaled, 707.0).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn running_stats_match_direct_formulas() {
        let tape: Vec<Trade> = [100, 112, 95, 101, 130, 88]
            .iter()
            .enumerate()
            .map(|(i, &p)| trade(i as f64 * 3.0, p))
            .collect();
        let stats = TapeStats::from_tape(&tape);
        let s = LobSummary::default();
        let p = stats.p_star(&s);
        assert!((p - estimate_p_star(&tape, None)).abs() < 1e-12);
        assert!((stats.alpha(p) - smith_alpha(&tape, p).unwrap()).abs() < 1e-9);
        assert_eq!(stats.last_trade_time, Some(15.0));
    }

    #[test]
    fn record_fields() {
        let s = book(Some((98, 2)), Some((103, 1)));
        let assignment = CustomerOrder {
            trader_id: Arc::from("B01"),
            side: Side::Bid,
            limit_price: 120,
            issue_time: 0.0,
        };
        let first = make_record(&s, &[], &assignment, &trade(12.0, 103));
        assert_eq!(first.dt_last_trade, 12.0);
        assert_eq!(first.to_array().len(), NUM_FIELDS);
        assert_eq!(first.limit_price, 120.0);
        assert_eq!(first.trade_price, 103.0);
        assert_eq!(first.spread, 5.0);

        let tape = [trade(5.0, 100), trade(9.0, 104)];
        let r = make_record(&s, &tape, &assignment, &trade(12.0, 103));
        assert_eq!(r.dt_last_trade, 3.0);
        let fast = make_record_with_stats(
            &s,
            &TapeStats::from_tape(&tape),
            &assignment,
            &trade(12.0, 103),
        );
        for (a, b) in r.to_array().iter().zip(fast.to_array()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(r, make_record(&s, &tape, &assignment, &trade(12.0, 103)));
    }

    #[test]
    fn normalization_endpoints_and_clamp() {
        let mut stats = NormStats::default();
        stats.observe(&[0.0; NUM_FIELDS]);
        let mut top = [10.0; NUM_FIELDS];
        top[TARGET_FIELD] = 150.0;
        stats.observe(&top);
        assert_eq!(stats.scale(0, 0.0), 0.0);
        assert_eq!(stats.scale(0, 10.0), 1.0);
        assert_eq!(stats.scale(0, 11.0), 1.0);
        assert_eq!(stats.scale(0, -1.0), 0.0);
        for p in 0..=150 {
            assert_eq!(stats.denormalize_price(stats.normalize_price(p as f64)), p);
        }
    }

    #[test]
    fn constant_field_maps_to_zero() {
        let mut stats = NormStats::default();
        stats.observe(&[3.0; NUM_FIELDS]);
        assert_eq!(stats.scale(4, 3.0), 0.0);
        assert_eq!(stats.denormalize_price(0.7), 3);
    }

    #[test]
    fn norm_file_round_trip_and_errors() {
        let mut stats = NormStats::default();
        stats.observe(&[1.5; NUM_FIELDS]);
        stats.observe(&[7.25; NUM_FIELDS]);
        let mut buf = Vec::new();
        stats.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(NormStats::parse(&text, "n").unwrap(), stats);
        let broken = text.replace("mid,1.5", "mid,oops");
        let err = NormStats::parse(&broken, "n").unwrap_err().to_string();
        assert!(err.contains("n:5"), "{err}");
    }
}
