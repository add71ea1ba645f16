//! One market session: forty traders, a drifting supply and demand schedule,
//! the exchange and the per-trade snapshot stream.
//!
//! Two schedulers drive the same trader and exchange code. `Lockstep` advances
//! a virtual clock in fixed ticks and polls every trader once per tick in a
//! seeded random order, processing each order as soon as it is sent.
//! `Threaded` gives each trader its own thread, with a clock thread issuing
//! assignments and a single consumer draining the exchange queue.

pub mod config;
pub mod schedule;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exchange::{Execution, Lob, NewOrder, Order, Price, Processed, Side, Trade, TraderId};
use crate::features::{make_record_with_stats, write_snapshots, FeatureRecord, TapeStats};
use crate::neural::ModelParams;
use crate::traders::{MarketView, Strategy, StrategyKind, TraderState};

pub use config::{
    expand_population, format_population, parse_population, Mode, Population, SessionConfig,
    TRADERS_PER_SIDE,
};
pub use schedule::{
    build_offset_series, issue_customer_orders, CustomerOrder, OffsetSeries, StepMode,
    SupplyDemandSchedule,
};

const STREAM_OFFSET: u64 = 1;
const STREAM_ISSUE: u64 = 2;
const STREAM_POLL: u64 = 3;
const STREAM_TRADER: u64 = 1000;

/// A child seed for an independent random stream (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Both limits behind one trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Settlement {
    pub price: Price,
    pub buyer_limit: Price,
    pub seller_limit: Price,
}

impl Settlement {
    pub fn buyer_surplus(&self) -> i64 {
        self.buyer_limit - self.price
    }

    pub fn seller_surplus(&self) -> i64 {
        self.price - self.seller_limit
    }
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub seed: u64,
    pub ppt_by_strategy: BTreeMap<StrategyKind, f64>,
    pub profit_by_trader: BTreeMap<String, i64>,
    pub strategy_by_trader: BTreeMap<String, StrategyKind>,
    pub tape: Vec<Trade>,
    /// One record per tape entry, in tape order.
    pub snapshots: Vec<FeatureRecord>,
    /// One entry per tape entry, in tape order.
    pub settlements: Vec<Settlement>,
    pub orders_processed: u64,
    /// Orders discarded because their assignment was already filled.
    pub orders_dropped: u64,
}

impl SessionResult {
    pub fn ppt(&self, kind: StrategyKind) -> Option<f64> {
        self.ppt_by_strategy.get(&kind).copied()
    }

    pub fn total_profit(&self) -> i64 {
        self.profit_by_trader.values().sum()
    }

    pub fn write_snapshots(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut out = BufWriter::new(file);
        write_snapshots(&mut out, &self.snapshots).map_err(|e| Error::file(path, e))?;
        out.flush().map_err(|e| Error::file(path, e))
    }
}

struct Fill {
    trader: usize,
    trade: Trade,
    assignment: u64,
    surplus: i64,
}

/// Assignment registry, accounts and recorded output.
struct Ledger {
    registry: Vec<CustomerOrder>,
    consumed: Vec<bool>,
    index: HashMap<TraderId, usize>,
    profits: Vec<i64>,
    tape: Vec<Trade>,
    stats: TapeStats,
    snapshots: Vec<FeatureRecord>,
    settlements: Vec<Settlement>,
    processed: u64,
    dropped: u64,
}

impl Ledger {
    fn new(ids: &[TraderId]) -> Self {
        Ledger {
            registry: Vec::new(),
            consumed: Vec::new(),
            index: ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), i))
                .collect(),
            profits: vec![0; ids.len()],
            tape: Vec::new(),
            stats: TapeStats::default(),
            snapshots: Vec::new(),
            settlements: Vec::new(),
            processed: 0,
            dropped: 0,
        }
    }

    fn issue(&mut self, order: CustomerOrder) -> u64 {
        self.registry.push(order);
        self.consumed.push(false);
        (self.registry.len() - 1) as u64
    }

    fn admit(&self, order: &Order) -> bool {
        !self.consumed[order.client_ref as usize]
    }

    fn handle(&mut self, processed: Processed) -> Vec<Fill> {
        match processed {
            Processed::Executed(exec) => {
                self.processed += 1;
                self.settle(&exec)
            }
            Processed::Dropped(_) => {
                self.dropped += 1;
                Vec::new()
            }
        }
    }

    fn settle(&mut self, exec: &Execution) -> Vec<Fill> {
        let mut fills = Vec::with_capacity(exec.trades.len() * 2);
        let aggressor = self.registry[exec.order.client_ref as usize].clone();
        for trade in &exec.trades {
            let buyer = &self.registry[trade.buyer_ref as usize];
            let seller = &self.registry[trade.seller_ref as usize];
            let s = Settlement {
                price: trade.price,
                buyer_limit: buyer.limit_price,
                seller_limit: seller.limit_price,
            };
            self.snapshots.push(make_record_with_stats(
                &exec.before,
                &self.stats,
                &aggressor,
                trade,
            ));
            self.stats.push(trade);
            self.tape.push(trade.clone());
            self.settlements.push(s);
            self.consumed[trade.buyer_ref as usize] = true;
            self.consumed[trade.seller_ref as usize] = true;
            for (id, aid, surplus) in [
                (&trade.buyer_id, trade.buyer_ref, s.buyer_surplus()),
                (&trade.seller_id, trade.seller_ref, s.seller_surplus()),
            ] {
                let trader = self.index[id];
                self.profits[trader] += surplus;
                fills.push(Fill {
                    trader,
                    trade: trade.clone(),
                    assignment: aid,
                    surplus,
                });
            }
        }
        fills
    }
}

/// Everything built from the config before the clock starts.
struct Market {
    ids: Vec<TraderId>,
    kinds: Vec<StrategyKind>,
    traders: Vec<TraderState>,
    rngs: Vec<ChaCha8Rng>,
    schedules: [SupplyDemandSchedule; 2],
    buyer_ids: Vec<TraderId>,
    seller_ids: Vec<TraderId>,
    issue_rng: ChaCha8Rng,
    lob: Lob,
}

impl Market {
    fn build(cfg: &SessionConfig, model: Option<&Arc<ModelParams>>) -> Result<Self> {
        cfg.validate()?;
        if cfg.needs_model() && model.is_none() {
            return Err(Error::Config(
                "population includes DTX but no model was supplied".into(),
            ));
        }
        let offset = Arc::new(build_offset_series(
            derive_seed(cfg.seed, STREAM_OFFSET),
            cfg.duration,
            1 - cfg.range_low,
        ));
        let schedule = |side| SupplyDemandSchedule {
            side,
            price_range: (cfg.range_low, cfg.range_high),
            offset: offset.clone(),
            issue_interval: cfg.issue_interval,
            stepmode: cfg.stepmode,
        };
        let lob = Lob::new();
        let mut ids = Vec::new();
        let mut kinds = Vec::new();
        let mut traders = Vec::new();
        let mut rngs = Vec::new();
        let sides = [
            (Side::Bid, 'B', expand_population(&cfg.buyers)),
            (Side::Ask, 'S', expand_population(&cfg.sellers)),
        ];
        for (side, prefix, population) in sides {
            for (i, kind) in population.into_iter().enumerate() {
                let id: TraderId = Arc::from(format!("{prefix}{i:02}"));
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    cfg.seed,
                    STREAM_TRADER + ids.len() as u64,
                ));
                let strategy = Strategy::new(kind, side, model, &mut rng)?;
                lob.register_trader(id.clone());
                traders.push(TraderState::new(id.clone(), side, strategy));
                ids.push(id);
                kinds.push(kind);
                rngs.push(rng);
            }
        }
        let buyer_ids = ids[..TRADERS_PER_SIDE].to_vec();
        let seller_ids = ids[TRADERS_PER_SIDE..].to_vec();
        Ok(Market {
            ids,
            kinds,
            traders,
            rngs,
            schedules: [schedule(Side::Bid), schedule(Side::Ask)],
            buyer_ids,
            seller_ids,
            issue_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_ISSUE)),
            lob,
        })
    }

    /// A round of assignments for every trader, buyers first.
    fn issue_round(&mut self, time: f64) -> Vec<CustomerOrder> {
        let mut out = issue_customer_orders(
            &self.schedules[0],
            &self.buyer_ids,
            time,
            &mut self.issue_rng,
        );
        out.extend(issue_customer_orders(
            &self.schedules[1],
            &self.seller_ids,
            time,
            &mut self.issue_rng,
        ));
        out
    }
}

fn finish(
    cfg: &SessionConfig,
    ids: &[TraderId],
    kinds: &[StrategyKind],
    ledger: Ledger,
) -> SessionResult {
    let mut sums: BTreeMap<StrategyKind, (i64, usize)> = BTreeMap::new();
    for (k, p) in kinds.iter().zip(&ledger.profits) {
        let e = sums.entry(*k).or_default();
        e.0 += p;
        e.1 += 1;
    }
    SessionResult {
        seed: cfg.seed,
        ppt_by_strategy: sums
            .into_iter()
            .map(|(k, (sum, n))| (k, sum as f64 / n as f64))
            .collect(),
        profit_by_trader: ids
            .iter()
            .zip(&ledger.profits)
            .map(|(id, p)| (id.to_string(), *p))
            .collect(),
        strategy_by_trader: ids
            .iter()
            .zip(kinds)
            .map(|(id, k)| (id.to_string(), *k))
            .collect(),
        tape: ledger.tape,
        snapshots: ledger.snapshots,
        settlements: ledger.settlements,
        orders_processed: ledger.processed,
        orders_dropped: ledger.dropped,
    }
}

fn tick_count(cfg: &SessionConfig) -> (u64, u64) {
    let ticks = (cfg.duration / cfg.tick).round() as u64;
    let per_issue = ((cfg.issue_interval / cfg.tick).round() as u64).max(1);
    (ticks, per_issue)
}

/// Runs one session. `model` is required when any trader is DTX.
pub fn run_session(cfg: &SessionConfig, model: Option<&Arc<ModelParams>>) -> Result<SessionResult> {
    match cfg.mode {
        Mode::Lockstep => run_lockstep(cfg, model),
        Mode::Threaded => run_threaded(cfg, model),
    }
}

fn run_lockstep(cfg: &SessionConfig, model: Option<&Arc<ModelParams>>) -> Result<SessionResult> {
    let mut m = Market::build(cfg, model)?;
    let mut ledger = Ledger::new(&m.ids);
    let mut poll_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_POLL));
    let mut order: Vec<usize> = (0..m.traders.len()).collect();
    let (ticks, per_issue) = tick_count(cfg);

    for k in 0..ticks {
        let t = k as f64 * cfg.tick;
        if k % per_issue == 0 {
            for o in m.issue_round(t) {
                let trader = ledger.index[&o.trader_id];
                let aid = ledger.issue(o.clone());
                m.traders[trader].assign(aid, o);
            }
        }
        order.shuffle(&mut poll_rng);
        for &i in &order {
            let summary = m.lob.summary();
            let view = MarketView {
                time: t,
                summary: &summary,
                stats: &ledger.stats,
                duration: cfg.duration,
                issue_interval: cfg.issue_interval,
            };
            let seen = m.traders[i].seen_trades;
            let Some((price, aid)) = m.traders[i].poll(&view, &ledger.tape[seen..], &mut m.rngs[i])
            else {
                continue;
            };
            m.lob.enqueue(NewOrder {
                trader_id: m.ids[i].clone(),
                side: m.traders[i].side,
                price,
                quantity: 1,
                submit_time: t,
                client_ref: aid,
            })?;
            while let Some(p) = m.lob.process_next_if(|o| ledger.admit(o)) {
                for f in ledger.handle(p) {
                    m.traders[f.trader].record_fill(&f.trade, f.assignment, f.surplus);
                }
            }
        }
    }
    Ok(finish(cfg, &m.ids, &m.kinds, ledger))
}

fn run_threaded(cfg: &SessionConfig, model: Option<&Arc<ModelParams>>) -> Result<SessionResult> {
    let m = Market::build(cfg, model)?;
    let Market {
        ids,
        kinds,
        traders,
        rngs,
        schedules,
        buyer_ids,
        seller_ids,
        mut issue_rng,
        lob,
    } = m;
    let ledger = Mutex::new(Ledger::new(&ids));
    let slots: Vec<Mutex<Option<(u64, CustomerOrder)>>> =
        ids.iter().map(|_| Mutex::new(None)).collect();
    let clock = AtomicU64::new(u64::MAX);
    let closing = AtomicBool::new(false);
    let traders_done = AtomicBool::new(false);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let (ticks, per_issue) = tick_count(cfg);
    let tick_wall = Duration::from_micros(cfg.realtime_tick_us.max(1));

    thread::scope(|scope| {
        let consumer = scope.spawn(|| loop {
            let handled = {
                let mut l = ledger.lock().unwrap();
                match lob.process_next_if(|o| l.admit(o)) {
                    Some(p) => {
                        l.handle(p);
                        true
                    }
                    None => false,
                }
            };
            if !handled {
                if traders_done.load(Ordering::Acquire) && lob.pending() == 0 {
                    break;
                }
                lob.wait_for_order(Duration::from_millis(1));
            }
        });

        let workers: Vec<_> = traders
            .into_iter()
            .zip(rngs)
            .enumerate()
            .map(|(i, (mut trader, mut rng))| {
                let (ledger, slots, clock, closing, failure, lob) =
                    (&ledger, &slots, &clock, &closing, &failure, &lob);
                scope.spawn(move || {
                    let mut last = u64::MAX;
                    while !closing.load(Ordering::Acquire) {
                        let k = clock.load(Ordering::Acquire);
                        if k == last || k == u64::MAX {
                            thread::sleep(tick_wall / 4);
                            continue;
                        }
                        last = k;
                        let t = k as f64 * cfg.tick;
                        if let Some((aid, o)) = slots[i].lock().unwrap().take() {
                            trader.assign(aid, o);
                        }
                        let (new_trades, stats) = {
                            let l = ledger.lock().unwrap();
                            if let Some((aid, _)) = &trader.current_order {
                                if l.consumed[*aid as usize] {
                                    trader.current_order = None;
                                    trader.live = None;
                                }
                            }
                            (
                                l.tape[trader.seen_trades.min(l.tape.len())..].to_vec(),
                                l.stats,
                            )
                        };
                        let summary = lob.summary();
                        let view = MarketView {
                            time: t,
                            summary: &summary,
                            stats: &stats,
                            duration: cfg.duration,
                            issue_interval: cfg.issue_interval,
                        };
                        if let Some((price, aid)) = trader.poll(&view, &new_trades, &mut rng) {
                            let sent = lob.enqueue(NewOrder {
                                trader_id: trader.trader_id.clone(),
                                side: trader.side,
                                price,
                                quantity: 1,
                                submit_time: t,
                                client_ref: aid,
                            });
                            if let Err(e) = sent {
                                failure.lock().unwrap().get_or_insert(e.into());
                                return;
                            }
                        }
                    }
                })
            })
            .collect();

        for k in 0..ticks {
            let t = k as f64 * cfg.tick;
            if k % per_issue == 0 {
                let mut orders =
                    issue_customer_orders(&schedules[0], &buyer_ids, t, &mut issue_rng);
                orders.extend(issue_customer_orders(
                    &schedules[1],
                    &seller_ids,
                    t,
                    &mut issue_rng,
                ));
                let mut l = ledger.lock().unwrap();
                for o in orders {
                    let trader = l.index[&o.trader_id];
                    let aid = l.issue(o.clone());
                    *slots[trader].lock().unwrap() = Some((aid, o));
                }
            }
            clock.store(k, Ordering::Release);
            thread::sleep(tick_wall);
            if failure.lock().unwrap().is_some() {
                break;
            }
        }
        closing.store(true, Ordering::Release);
        for w in workers {
            if w.join().is_err() {
                failure
                    .lock()
                    .unwrap()
                    .get_or_insert(Error::Config("trader thread panicked".into()));
            }
        }
        traders_done.store(true, Ordering::Release);
        if consumer.join().is_err() {
            failure
                .lock()
                .unwrap()
                .get_or_insert(Error::Config("exchange thread panicked".into()));
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(finish(cfg, &ids, &kinds, ledger.into_inner().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: StrategyKind, seed: u64, duration: f64) -> SessionConfig {
        SessionConfig {
            duration,
            ..SessionConfig::with_population(vec![(kind, 20)], vec![(kind, 20)], seed)
        }
    }

    fn mixed(seed: u64, duration: f64) -> SessionConfig {
        let pop = vec![
            (StrategyKind::Zic, 4),
            (StrategyKind::Zip, 4),
            (StrategyKind::Gdx, 4),
            (StrategyKind::Aa, 4),
            (StrategyKind::Giveaway, 4),
        ];
        SessionConfig {
            duration,
            ..SessionConfig::with_population(pop.clone(), pop, seed)
        }
    }

    fn check_accounting(r: &SessionResult) {
        assert_eq!(r.snapshots.len(), r.tape.len());
        assert_eq!(r.settlements.len(), r.tape.len());
        let surplus: i64 = r
            .settlements
            .iter()
            .map(|s| s.buyer_limit - s.seller_limit)
            .sum();
        assert_eq!(r.total_profit(), surplus);
        for (s, t) in r.settlements.iter().zip(&r.tape) {
            assert!(
                s.buyer_limit >= t.price && t.price >= s.seller_limit,
                "{s:?}"
            );
            assert_ne!(t.buyer_id, t.seller_id);
        }
        for w in r.tape.windows(2) {
            assert!(w[0].time <= w[1].time);
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(5, 1), derive_seed(5, 1));
        assert_ne!(derive_seed(5, 1), derive_seed(5, 2));
        assert_ne!(derive_seed(5, 1), derive_seed(6, 1));
    }

    #[test]
    fn giveaway_trades_at_resting_seller_limit() {
        let r = run_session(&cfg(StrategyKind::Giveaway, 3, 300.0), None).unwrap();
        assert!(!r.tape.is_empty());
        check_accounting(&r);
        for (s, t) in r.settlements.iter().zip(&r.tape) {
            match t.resting_side {
                Side::Ask => assert_eq!(t.price, s.seller_limit),
                Side::Bid => assert_eq!(t.price, s.buyer_limit),
            }
        }
    }

    #[test]
    fn zic_sessions_trade() {
        for seed in 0..5 {
            let r = run_session(&cfg(StrategyKind::Zic, seed, 600.0), None).unwrap();
            assert!(!r.tape.is_empty(), "seed {seed}");
            check_accounting(&r);
            assert!(r.tape.iter().all(|t| t.time <= 600.0));
        }
    }

    #[test]
    fn lockstep_is_reproducible() {
        let a = run_session(&mixed(11, 300.0), None).unwrap();
        let b = run_session(&mixed(11, 300.0), None).unwrap();
        assert_eq!(a.tape, b.tape);
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.profit_by_trader, b.profit_by_trader);
        let c = run_session(&mixed(12, 300.0), None).unwrap();
        assert_ne!(a.tape, c.tape);
    }

    #[test]
    fn ppt_is_mean_profit_of_members() {
        let r = run_session(&mixed(4, 300.0), None).unwrap();
        check_accounting(&r);
        for (kind, ppt) in &r.ppt_by_strategy {
            let members: Vec<i64> = r
                .strategy_by_trader
                .iter()
                .filter(|(_, k)| *k == kind)
                .map(|(id, _)| r.profit_by_trader[id])
                .collect();
            assert_eq!(members.len(), 8);
            assert_eq!(*ppt, members.iter().sum::<i64>() as f64 / 8.0);
        }
    }

    #[test]
    fn dtx_without_model_fails_fast() {
        let c = SessionConfig::with_population(
            vec![(StrategyKind::Dtx, 10), (StrategyKind::Zic, 10)],
            vec![(StrategyKind::Zic, 20)],
            1,
        );
        assert!(matches!(run_session(&c, None), Err(Error::Config(_))));
    }

    #[test]
    fn threaded_session_keeps_invariants() {
        let mut c = mixed(8, 60.0);
        c.mode = Mode::Threaded;
        c.realtime_tick_us = 200;
        let r = run_session(&c, None).unwrap();
        check_accounting(&r);
        assert!(r.tape.iter().all(|t| t.time <= 60.0));
        assert_eq!(r.profit_by_trader.len(), 40);
    }
}
