//! Giveaway and ZIC: the two strategies with no market memory.

use rand::Rng;

use crate::exchange::{Price, Side};
use crate::session::CustomerOrder;

/// Quotes the limit price itself.
pub fn giveaway_quote(assignment: Option<&CustomerOrder>) -> Option<Price> {
    assignment.map(|a| a.limit_price)
}

/// Zero-intelligence constrained: a uniform draw between the limit and the
/// market bound on the profitable side. An empty interval quotes the limit.
pub fn zic_quote<R: Rng + ?Sized>(
    assignment: Option<&CustomerOrder>,
    rng: &mut R,
    price_floor: Price,
    price_cap: Price,
) -> Option<Price> {
    let a = assignment?;
    let limit = a.limit_price;
    Some(match a.side {
        Side::Bid if limit >= price_floor => rng.gen_range(price_floor..=limit),
        Side::Ask if limit <= price_cap => rng.gen_range(limit..=price_cap),
        _ => limit,
    })
}
