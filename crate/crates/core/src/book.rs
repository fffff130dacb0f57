//! Price-time priority limit order book for a single symbol.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{AgentId, SimTime};

/// Integer cents.
pub type Price = i64;
/// Shares.
pub type Qty = u64;
pub type OrderId = u64;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitOrder {
    pub id: OrderId,
    pub agent: AgentId,
    pub side: Side,
    pub price: Price,
    pub qty: Qty,
    pub entry_time: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub time: SimTime,
    pub price: Price,
    pub qty: Qty,
    pub buyer: AgentId,
    pub seller: AgentId,
    pub buy_order: OrderId,
    pub sell_order: OrderId,
    /// Side of the incoming order that caused the match.
    pub aggressor: Side,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BookError {
    #[error("duplicate order id {0}")]
    DuplicateId(OrderId),
    #[error("order {0} has zero quantity")]
    ZeroQuantity(OrderId),
    #[error("order {0} has non-positive price {1}")]
    BadPrice(OrderId, Price),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubmitOutcome {
    pub trades: Vec<Trade>,
    /// Quantity left resting on the book after matching.
    pub resting: Qty,
}

#[derive(Clone, Debug)]
struct Resting {
    id: OrderId,
    agent: AgentId,
    qty: Qty,
}

#[derive(Clone, Debug, Default)]
struct Level {
    orders: VecDeque<Resting>,
    total: Qty,
}

/// Top-of-book view handed to agents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub time: SimTime,
    /// Best first, `(price, aggregate size)`.
    pub bids: Vec<(Price, Qty)>,
    /// Best first.
    pub asks: Vec<(Price, Qty)>,
    pub last_trade: Option<Price>,
}

impl BookSnapshot {
    pub fn best_bid(&self) -> Option<Price> {
        self.bids.first().map(|l| l.0)
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.first().map(|l| l.0)
    }

    /// Midpoint in cents; falls back to whichever side exists, then the last trade.
    pub fn mid(&self) -> Option<f64> {
        match (self.best_bid(), self.best_ask()) {
            (Some(b), Some(a)) => Some((b + a) as f64 / 2.0),
            (Some(b), None) => Some(b as f64),
            (None, Some(a)) => Some(a as f64),
            (None, None) => self.last_trade.map(|p| p as f64),
        }
    }

    /// Estimated average price to trade `qty` shares against `side`'s
    /// ladder, extrapolating any shortfall at the deepest visible level.
    pub fn walk(&self, side: Side, qty: Qty) -> Option<f64> {
        let ladder = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        if qty == 0 {
            return ladder.first().map(|l| l.0 as f64);
        }
        let mut left = qty;
        let mut notional = 0.0;
        let mut last = None;
        for &(p, q) in ladder {
            let take = left.min(q);
            notional += (take as f64) * p as f64;
            left -= take;
            last = Some(p);
            if left == 0 {
                break;
            }
        }
        let last = last?;
        notional += left as f64 * last as f64;
        Some(notional / qty as f64)
    }

    /// Removes `qty` of the caller's own resting volume at `price` so it can
    /// reason about the rest of the market.
    pub fn without_own(&self, own: &[(Side, Price, Qty)]) -> BookSnapshot {
        let mut out = self.clone();
        for &(side, price, qty) in own {
            let ladder = match side {
                Side::Buy => &mut out.bids,
                Side::Sell => &mut out.asks,
            };
            if let Some(level) = ladder.iter_mut().find(|l| l.0 == price) {
                level.1 = level.1.saturating_sub(qty);
            }
            ladder.retain(|l| l.1 > 0);
        }
        out
    }
}

/// Bid share of resting volume over the top `levels` price levels of each
/// side; `0.5` when both sides are empty.
pub fn imbalance(snapshot: &BookSnapshot, levels: usize) -> f64 {
    let levels = levels.max(1);
    let bid: Qty = snapshot.bids.iter().take(levels).map(|l| l.1).sum();
    let ask: Qty = snapshot.asks.iter().take(levels).map(|l| l.1).sum();
    if bid + ask == 0 {
        0.5
    } else {
        bid as f64 / (bid + ask) as f64
    }
}

/// Price-time priority book. Bids are keyed by price and iterated from the
/// highest, asks from the lowest; each level is a FIFO queue.
#[derive(Clone, Debug, Default)]
pub struct OrderBook {
    bids: BTreeMap<Price, Level>,
    asks: BTreeMap<Price, Level>,
    index: HashMap<OrderId, (Side, Price)>,
    seen: HashSet<OrderId>,
    last_trade: Option<Price>,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn last_trade(&self) -> Option<Price> {
        self.last_trade
    }

    pub fn resting_count(&self) -> usize {
        self.index.len()
    }

    /// Remaining quantity of a resting order.
    pub fn resting_qty(&self, id: OrderId) -> Option<Qty> {
        let &(side, price) = self.index.get(&id)?;
        let level = match side {
            Side::Buy => self.bids.get(&price),
            Side::Sell => self.asks.get(&price),
        }?;
        level.orders.iter().find(|o| o.id == id).map(|o| o.qty)
    }

    pub fn total_resting(&self, side: Side) -> Qty {
        let levels = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        levels.values().map(|l| l.total).sum()
    }

    /// Matches `order` against the opposite side and rests any remainder.
    pub fn submit(&mut self, order: LimitOrder) -> Result<SubmitOutcome, BookError> {
        if order.qty == 0 {
            return Err(BookError::ZeroQuantity(order.id));
        }
        if order.price <= 0 {
            return Err(BookError::BadPrice(order.id, order.price));
        }
        if !self.seen.insert(order.id) {
            return Err(BookError::DuplicateId(order.id));
        }

        let mut left = order.qty;
        let mut trades = Vec::new();
        let opposite = match order.side {
            Side::Buy => &mut self.asks,
            Side::Sell => &mut self.bids,
        };

        while left > 0 {
            let best = match order.side {
                Side::Buy => opposite.keys().next().copied(),
                Side::Sell => opposite.keys().next_back().copied(),
            };
            let Some(level_price) = best else { break };
            let crosses = match order.side {
                Side::Buy => level_price <= order.price,
                Side::Sell => level_price >= order.price,
            };
            if !crosses {
                break;
            }
            let level = opposite.get_mut(&level_price).expect("level exists");
            while left > 0 {
                let Some(front) = level.orders.front_mut() else { break };
                let fill = left.min(front.qty);
                front.qty -= fill;
                level.total -= fill;
                left -= fill;
                let (buyer, seller, buy_order, sell_order) = match order.side {
                    Side::Buy => (order.agent, front.agent, order.id, front.id),
                    Side::Sell => (front.agent, order.agent, front.id, order.id),
                };
                trades.push(Trade {
                    time: order.entry_time,
                    price: level_price,
                    qty: fill,
                    buyer,
                    seller,
                    buy_order,
                    sell_order,
                    aggressor: order.side,
                });
                if front.qty == 0 {
                    let done = level.orders.pop_front().expect("front exists");
                    self.index.remove(&done.id);
                }
            }
            if level.orders.is_empty() {
                opposite.remove(&level_price);
            }
        }

        if let Some(t) = trades.last() {
            self.last_trade = Some(t.price);
        }

        if left > 0 {
            let own = match order.side {
                Side::Buy => &mut self.bids,
                Side::Sell => &mut self.asks,
            };
            let level = own.entry(order.price).or_default();
            level.orders.push_back(Resting {
                id: order.id,
                agent: order.agent,
                qty: left,
            });
            level.total += left;
            self.index.insert(order.id, (order.side, order.price));
        }

        Ok(SubmitOutcome {
            trades,
            resting: left,
        })
    }

    /// Removes a resting order and returns the quantity cancelled; unknown or
    /// already-filled orders return 0.
    pub fn cancel(&mut self, id: OrderId) -> Qty {
        let Some((side, price)) = self.index.remove(&id) else {
            return 0;
        };
        let levels = match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        let Some(level) = levels.get_mut(&price) else {
            return 0;
        };
        let Some(pos) = level.orders.iter().position(|o| o.id == id) else {
            return 0;
        };
        let removed = level.orders.remove(pos).expect("position valid");
        level.total -= removed.qty;
        if level.orders.is_empty() {
            levels.remove(&price);
        }
        removed.qty
    }

    pub fn snapshot(&self, depth: usize, time: SimTime) -> BookSnapshot {
        BookSnapshot {
            time,
            bids: self
                .bids
                .iter()
                .rev()
                .take(depth)
                .map(|(p, l)| (*p, l.total))
                .collect(),
            asks: self
                .asks
                .iter()
                .take(depth)
                .map(|(p, l)| (*p, l.total))
                .collect(),
            last_trade: self.last_trade,
        }
    }

    /// Checks the structural invariants: uncrossed, positive resting sizes,
    /// level totals consistent with their orders, index consistent with levels.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let (Some(b), Some(a)) = (self.best_bid(), self.best_ask()) {
            if b >= a {
                return Err(format!("crossed book: bid {b} >= ask {a}"));
            }
        }
        let mut count = 0;
        for (side, levels) in [(Side::Buy, &self.bids), (Side::Sell, &self.asks)] {
            for (price, level) in levels {
                if level.orders.is_empty() {
                    return Err(format!("empty level left at {price}"));
                }
                let sum: Qty = level.orders.iter().map(|o| o.qty).sum();
                if sum != level.total {
                    return Err(format!("level {price} total {} != {sum}", level.total));
                }
                for o in &level.orders {
                    if o.qty == 0 {
                        return Err(format!("order {} rests with zero quantity", o.id));
                    }
                    if self.index.get(&o.id) != Some(&(side, *price)) {
                        return Err(format!("order {} missing from index", o.id));
                    }
                    count += 1;
                }
            }
        }
        if count != self.index.len() {
            return Err(format!("index has {} entries, book has {count}", self.index.len()));
        }
        Ok(())
    }
}
