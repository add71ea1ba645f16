//! Quick invariant checks over the exchange, sessions and statistics, run by
//! `dtx selftest`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::wilcoxon_from_differences;
use crate::datagen::{enumerate_schedules, BASE_TUPLES};
use crate::exchange::{Lob, NewOrder, OrderId, Price, Side};
use crate::neural::{model_from_str, model_to_string, ModelParams, Weights};
use crate::session::{run_session, SessionConfig, SessionResult};
use crate::traders::StrategyKind;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// A random stream of orders from `traders` traders with prices in 90..=110.
pub fn random_stream(rng: &mut impl Rng, traders: usize, len: usize) -> Vec<NewOrder> {
    let ids: Vec<Arc<str>> = (0..traders).map(|i| Arc::from(format!("T{i}"))).collect();
    (0..len)
        .map(|i| NewOrder {
            trader_id: ids[rng.gen_range(0..traders)].clone(),
            side: if rng.gen_bool(0.5) {
                Side::Bid
            } else {
                Side::Ask
            },
            price: rng.gen_range(90..=110),
            quantity: rng.gen_range(1..=3),
            submit_time: i as f64 * 0.1,
            client_ref: i as u64,
        })
        .collect()
}

/// Feeds `orders` through a fresh book and checks that the book never rests
/// crossed, messages are processed in arrival order, every trade lies between
/// the two order prices, and traded plus resting quantity matches what was
/// submitted. Returns the number of trades.
pub fn check_stream(orders: &[NewOrder]) -> Result<usize, String> {
    let lob = Lob::new();
    for o in orders {
        lob.register_trader(o.trader_id.clone());
    }
    let mut ids = Vec::with_capacity(orders.len());
    for o in orders {
        ids.push(lob.enqueue(o.clone()).map_err(|e| e.to_string())?);
    }
    let price_of: HashMap<OrderId, Price> = ids
        .iter()
        .zip(orders)
        .map(|(&id, o)| (id, o.price))
        .collect();
    // remaining quantity per live order id
    let mut open: HashMap<OrderId, u32> = HashMap::new();
    let mut trades = 0;
    for &expected in &ids {
        let ex = lob.process_next().ok_or("queue ran dry")?;
        if ex.order.order_id != expected {
            return Err(format!("processed {} before {expected}", ex.order.order_id));
        }
        if let Some(old) = ex.replaced {
            open.remove(&old);
        }
        let mut left = ex.order.quantity;
        for t in &ex.trades {
            let (bid, ask) = (price_of[&t.buy_order_id], price_of[&t.sell_order_id]);
            if t.price < ask || t.price > bid {
                return Err(format!("trade at {} outside [{ask}, {bid}]", t.price));
            }
            let resting = if t.resting_side == Side::Bid {
                t.buy_order_id
            } else {
                t.sell_order_id
            };
            let rest = open
                .get_mut(&resting)
                .ok_or("trade against an order that is not resting")?;
            *rest = rest
                .checked_sub(t.quantity)
                .ok_or("overfilled resting order")?;
            if *rest == 0 {
                open.remove(&resting);
            }
            left = left
                .checked_sub(t.quantity)
                .ok_or("overfilled incoming order")?;
        }
        if left > 0 {
            open.insert(ex.order.order_id, left);
        }
        trades += ex.trades.len();
        let s = lob.summary();
        if let (Some(b), Some(a)) = (s.best_bid, s.best_ask) {
            if b >= a {
                return Err(format!("crossed book: bid {b} ask {a}"));
            }
        }
    }
    let resting: HashMap<OrderId, u32> = lob
        .resting_orders()
        .iter()
        .map(|o| (o.order_id, o.quantity))
        .collect();
    if resting != open {
        return Err("resting quantities disagree with fills".into());
    }
    Ok(trades)
}

/// Every settlement lies between the two limits and profits add up.
pub fn check_no_loss(r: &SessionResult) -> Result<(), String> {
    if r.settlements.len() != r.tape.len() {
        return Err("settlement count differs from tape".into());
    }
    for (s, t) in r.settlements.iter().zip(&r.tape) {
        if s.price != t.price {
            return Err(format!(
                "settlement price {} differs from tape {}",
                s.price, t.price
            ));
        }
        if s.buyer_surplus() < 0 || s.seller_surplus() < 0 {
            return Err(format!(
                "loss at t={}: price {} buyer limit {} seller limit {}",
                t.time, s.price, s.buyer_limit, s.seller_limit
            ));
        }
    }
    let surplus: i64 = r
        .settlements
        .iter()
        .map(|s| s.buyer_limit - s.seller_limit)
        .sum();
    if surplus != r.total_profit() {
        return Err(format!(
            "surplus {surplus} differs from profits {}",
            r.total_profit()
        ));
    }
    Ok(())
}

fn outcome(name: &'static str, r: Result<String, String>) -> CheckOutcome {
    match r {
        Ok(detail) => CheckOutcome {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckOutcome {
            name,
            passed: false,
            detail,
        },
    }
}

fn streams(count: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trades = 0;
    for _ in 0..count {
        let len = rng.gen_range(1..=30);
        let stream = random_stream(&mut rng, 6, len);
        trades += check_stream(&stream)?;
    }
    Ok(format!("{count} streams, {trades} trades"))
}

fn sessions(count: u64, duration: f64) -> Result<String, String> {
    let mixed = vec![
        (StrategyKind::Zic, 5),
        (StrategyKind::Zip, 5),
        (StrategyKind::Gdx, 5),
        (StrategyKind::Aa, 5),
    ];
    let mut trades = 0;
    for seed in 0..count {
        let mut cfg = SessionConfig::with_population(mixed.clone(), mixed.clone(), seed);
        cfg.duration = duration;
        let r = run_session(&cfg, None).map_err(|e| e.to_string())?;
        check_no_loss(&r)?;
        trades += r.tape.len();
    }
    Ok(format!("{count} sessions, {trades} trades"))
}

fn schedules() -> Result<String, String> {
    let n = enumerate_schedules(&BASE_TUPLES)
        .map_err(|e| e.to_string())?
        .len();
    if n == 270 {
        Ok("270 schedules".into())
    } else {
        Err(format!("{n} schedules"))
    }
}

fn wilcoxon() -> Result<String, String> {
    let r = wilcoxon_from_differences(&[1.0, 2.0, 3.0, 4.0, 5.0]).map_err(|e| e.to_string())?;
    if r.w_statistic == 0.0 && (r.p_value - 0.0625).abs() < 1e-12 {
        Ok(format!("W {} p {}", r.w_statistic, r.p_value))
    } else {
        Err(format!("W {} p {}", r.w_statistic, r.p_value))
    }
}

fn model_file() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = ModelParams::new(Weights::init(&mut rng), Default::default(), 1);
    let text = model_to_string(&model);
    let back = model_from_str(&text).map_err(|e| e.to_string())?;
    if back == model && model_to_string(&back) == text {
        Ok(format!("{} bytes", text.len()))
    } else {
        Err("model text does not round-trip".into())
    }
}

/// Runs every quick check; the caller decides what to do with failures.
pub fn run_all() -> Vec<CheckOutcome> {
    vec![
        outcome("exchange streams", streams(2000, 1)),
        outcome("no-loss sessions", sessions(3, 300.0)),
        outcome("schedule enumeration", schedules()),
        outcome("wilcoxon exact", wilcoxon()),
        outcome("model file", model_file()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_streams_hold_invariants() {
        assert!(streams(200, 9).is_ok());
    }

    #[test]
    fn detects_a_loss() {
        let cfg = SessionConfig {
            duration: 120.0,
            ..SessionConfig::default()
        };
        let mut r = run_session(&cfg, None).unwrap();
        assert!(check_no_loss(&r).is_ok());
        let s = r.settlements.first_mut().expect("some trades");
        s.buyer_limit = s.price - 1;
        assert!(check_no_loss(&r).is_err());
    }
}
