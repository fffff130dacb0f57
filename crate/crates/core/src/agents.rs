//! Agent plumbing shared by every market participant, plus the background
//! population: zero-intelligence, value, and order-book-imbalance traders.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::book::{imbalance, BookSnapshot, LimitOrder, OrderId, Price, Qty, Side};
use crate::dataset::AgentClass;
use crate::fundamental::{observe, FundamentalPath};
use crate::kernel::{AgentId, SimTime};

/// A fill reported to one side of a trade.
#[derive(Clone, Debug, PartialEq)]
pub struct Fill {
    pub order: OrderId,
    pub side: Side,
    pub price: Price,
    pub qty: Qty,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Wakeup,
    Query,
    Snapshot(BookSnapshot),
    Submit(LimitOrder),
    Cancel(OrderId),
    Fill(Fill),
    Cancelled { order: OrderId, qty: Qty },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Wakeup => "wakeup",
            Payload::Query => "query",
            Payload::Snapshot(_) => "snapshot",
            Payload::Submit(_) => "submit",
            Payload::Cancel(_) => "cancel",
            Payload::Fill(_) => "fill",
            Payload::Cancelled { .. } => "cancelled",
        }
    }
}

/// Requests an agent makes while handling one message.
#[derive(Clone, Debug, PartialEq)]
pub enum Outgoing {
    Exchange(Payload),
    WakeAt(SimTime),
}

/// Per-message view of the world handed to an agent.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub id: AgentId,
    pub tick: Price,
    pub day_end: SimTime,
    pub warmup_end: SimTime,
    pub fundamental: &'a FundamentalPath,
    pub(crate) outbox: &'a mut Vec<Outgoing>,
    pub(crate) next_seq: &'a mut u64,
}

impl Ctx<'_> {
    pub fn submit(&mut self, side: Side, price: Price, qty: Qty) -> OrderId {
        *self.next_seq += 1;
        let id = ((self.id as u64) << 40) | *self.next_seq;
        self.outbox.push(Outgoing::Exchange(Payload::Submit(LimitOrder {
            id,
            agent: self.id,
            side,
            price,
            qty,
            entry_time: self.now,
        })));
        id
    }

    pub fn cancel(&mut self, order: OrderId) {
        self.outbox.push(Outgoing::Exchange(Payload::Cancel(order)));
    }

    pub fn query(&mut self) {
        self.outbox.push(Outgoing::Exchange(Payload::Query));
    }

    /// Ignored when `t` falls after the close.
    pub fn wake_at(&mut self, t: SimTime) {
        if t < self.day_end {
            self.outbox.push(Outgoing::WakeAt(t.max(self.now)));
        }
    }

    pub fn wake_after(&mut self, dt: SimTime) {
        self.wake_at(self.now + dt);
    }

    pub fn fundamental_now(&self) -> f64 {
        self.fundamental.value_at(self.now)
    }
}

pub trait Agent {
    fn class(&self) -> AgentClass;

    /// Called once at market open.
    fn start(&mut self, ctx: &mut Ctx);

    fn on_wakeup(&mut self, ctx: &mut Ctx) {
        ctx.query();
    }

    fn on_snapshot(&mut self, snapshot: &BookSnapshot, ctx: &mut Ctx);

    fn on_fill(&mut self, _fill: &Fill, _ctx: &mut Ctx) {}

    fn on_cancelled(&mut self, _order: OrderId, _qty: Qty, _ctx: &mut Ctx) {}
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenOrder {
    pub side: Side,
    pub price: Price,
    pub qty: Qty,
    pub remaining: Qty,
    pub placed_at: SimTime,
}

/// An agent's own view of its unfilled orders and position.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrderTracker {
    pub open: BTreeMap<OrderId, OpenOrder>,
    /// Signed shares held.
    pub position: i64,
    /// Cash in cents (negative after buying).
    pub cash: i64,
}

impl OrderTracker {
    pub fn placed(&mut self, id: OrderId, side: Side, price: Price, qty: Qty, now: SimTime) {
        self.open.insert(
            id,
            OpenOrder {
                side,
                price,
                qty,
                remaining: qty,
                placed_at: now,
            },
        );
    }

    pub fn on_fill(&mut self, f: &Fill) {
        let signed = f.qty as i64;
        match f.side {
            Side::Buy => {
                self.position += signed;
                self.cash -= signed * f.price;
            }
            Side::Sell => {
                self.position -= signed;
                self.cash += signed * f.price;
            }
        }
        if let Some(o) = self.open.get_mut(&f.order) {
            o.remaining = o.remaining.saturating_sub(f.qty);
            if o.remaining == 0 {
                self.open.remove(&f.order);
            }
        }
    }

    pub fn on_cancelled(&mut self, order: OrderId) {
        self.open.remove(&order);
    }

    /// Sends a cancel for every open order. The orders stay tracked until
    /// the exchange confirms.
    pub fn cancel_all(&self, ctx: &mut Ctx) {
        for &id in self.open.keys() {
            ctx.cancel(id);
        }
    }

    pub fn pending(&self, side: Side) -> Qty {
        self.open.values().filter(|o| o.side == side).map(|o| o.remaining).sum()
    }
}

/// An order an agent decides to place.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct OrderIntent {
    pub side: Side,
    pub price: Price,
    pub qty: Qty,
}

fn exp_interval<R: Rng>(rng: &mut R, mean_secs: f64) -> SimTime {
    if mean_secs <= 0.0 {
        return SimTime::from_nanos(1);
    }
    let d = Exp::new(1.0 / mean_secs).expect("positive rate");
    SimTime::from_secs_f64(d.sample(rng)).max(SimTime::from_nanos(1))
}

fn to_ticks(cents: f64, tick: Price) -> Price {
    let tick = tick.max(1);
    ((cents / tick as f64).round() as Price * tick).max(tick)
}

// ---------------------------------------------------------------------------
// Zero intelligence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZiConfig {
    pub wake_mean_secs: f64,
    /// Largest sampled distance from the valuation, ticks.
    pub max_spread_ticks: i64,
    /// Lot sizes; each agent draws one at construction.
    pub lot_sizes: Vec<Qty>,
    /// Standard deviation of the per-agent private value offset, cents.
    pub private_value_sd: f64,
    /// Standard deviation of fundamental observation noise, cents.
    pub obs_noise: f64,
    /// Weight on the observed mid in the valuation (the rest is fundamental).
    pub mid_anchor: f64,
    /// Resting orders at least this old are cancelled on the next wake; 0
    /// cancels everything each wake.
    pub order_lifetime_secs: f64,
}

impl Default for ZiConfig {
    fn default() -> Self {
        Self {
            wake_mean_secs: 5.0,
            max_spread_ticks: 10,
            lot_sizes: vec![10, 20, 30],
            private_value_sd: 2.0,
            obs_noise: 1.0,
            mid_anchor: 0.5,
            order_lifetime_secs: 20.0,
        }
    }
}

/// One zero-intelligence decision: buy below the valuation when it exceeds
/// the mid, sell above it otherwise.
pub fn zi_step<R: Rng>(
    cfg: &ZiConfig,
    snapshot: &BookSnapshot,
    valuation: f64,
    lot: Qty,
    tick: Price,
    rng: &mut R,
) -> Option<OrderIntent> {
    let mid = snapshot.mid().unwrap_or(valuation);
    let offset = rng.gen_range(0..=cfg.max_spread_ticks.max(0)) * tick;
    let side = if valuation > mid {
        Side::Buy
    } else if valuation < mid {
        Side::Sell
    } else if offset == 0 {
        return None;
    } else if rng.gen::<bool>() {
        Side::Buy
    } else {
        Side::Sell
    };
    let anchor = to_ticks(valuation, tick);
    let price = match side {
        Side::Buy => anchor - offset,
        Side::Sell => anchor + offset,
    };
    (price > 0).then_some(OrderIntent {
        side,
        price,
        qty: lot,
    })
}

pub struct ZiAgent {
    cfg: ZiConfig,
    rng: ChaCha8Rng,
    lot: Qty,
    private_value: f64,
    orders: OrderTracker,
}

impl ZiAgent {
    pub fn new(cfg: ZiConfig, mut rng: ChaCha8Rng) -> Self {
        let lot = if cfg.lot_sizes.is_empty() {
            100
        } else {
            cfg.lot_sizes[rng.gen_range(0..cfg.lot_sizes.len())]
        };
        let private_value = observe(&mut rng, 0.0, cfg.private_value_sd);
        Self {
            cfg,
            rng,
            lot,
            private_value,
            orders: OrderTracker::default(),
        }
    }
}

impl Agent for ZiAgent {
    fn class(&self) -> AgentClass {
        AgentClass::ZeroIntelligence
    }

    fn start(&mut self, ctx: &mut Ctx) {
        let dt = exp_interval(&mut self.rng, self.cfg.wake_mean_secs);
        ctx.wake_after(dt);
    }

    fn on_snapshot(&mut self, snapshot: &BookSnapshot, ctx: &mut Ctx) {
        let lifetime = SimTime::from_secs_f64(self.cfg.order_lifetime_secs);
        let stale: Vec<OrderId> = self
            .orders
            .open
            .iter()
            .filter(|(_, o)| ctx.now.saturating_sub(o.placed_at) >= lifetime)
            .map(|(id, _)| *id)
            .collect();
        for id in stale {
            ctx.cancel(id);
        }
        let fundamental = observe(&mut self.rng, ctx.fundamental_now(), self.cfg.obs_noise);
        let a = self.cfg.mid_anchor.clamp(0.0, 1.0);
        let base = match snapshot.mid() {
            Some(m) => a * m + (1.0 - a) * fundamental,
            None => fundamental,
        };
        let valuation = base + self.private_value;
        if let Some(o) = zi_step(&self.cfg, snapshot, valuation, self.lot, ctx.tick, &mut self.rng) {
            let id = ctx.submit(o.side, o.price, o.qty);
            self.orders.placed(id, o.side, o.price, o.qty, ctx.now);
        }
        let dt = exp_interval(&mut self.rng, self.cfg.wake_mean_secs);
        ctx.wake_after(dt);
    }

    fn on_fill(&mut self, fill: &Fill, _ctx: &mut Ctx) {
        self.orders.on_fill(fill);
    }

    fn on_cancelled(&mut self, order: OrderId, _qty: Qty, _ctx: &mut Ctx) {
        self.orders.on_cancelled(order);
    }
}

// ---------------------------------------------------------------------------
// Value

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueConfig {
    pub wake_mean_secs: f64,
    /// Required edge against the valuation, cents.
    pub threshold: f64,
    pub lot_sizes: Vec<Qty>,
    pub max_holdings: Qty,
    pub obs_noise: f64,
}

impl Default for ValueConfig {
    fn default() -> Self {
        Self {
            wake_mean_secs: 20.0,
            threshold: 5.0,
            lot_sizes: vec![10, 20, 30],
            max_holdings: 2000,
            obs_noise: 5.0,
        }
    }
}

/// Buys at the ask when it sits below `valuation − threshold`; sells held
/// shares at the bid when it sits above `valuation + threshold`.
pub fn value_step(
    cfg: &ValueConfig,
    snapshot: &BookSnapshot,
    valuation: f64,
    holdings: Qty,
    lot: Qty,
) -> Option<OrderIntent> {
    if let Some(ask) = snapshot.best_ask() {
        if (ask as f64) < valuation - cfg.threshold && holdings < cfg.max_holdings {
            return Some(OrderIntent {
                side: Side::Buy,
                price: ask,
                qty: lot.min(cfg.max_holdings - holdings),
            });
        }
    }
    if let Some(bid) = snapshot.best_bid() {
        if holdings > 0 && (bid as f64) > valuation + cfg.threshold {
            return Some(OrderIntent {
                side: Side::Sell,
                price: bid,
                qty: holdings.min(lot),
            });
        }
    }
    None
}

pub struct ValueAgent {
    cfg: ValueConfig,
    rng: ChaCha8Rng,
    lot: Qty,
    orders: OrderTracker,
}

impl ValueAgent {
    pub fn new(cfg: ValueConfig, mut rng: ChaCha8Rng) -> Self {
        let lot = if cfg.lot_sizes.is_empty() {
            100
        } else {
            cfg.lot_sizes[rng.gen_range(0..cfg.lot_sizes.len())]
        };
        Self {
            cfg,
            rng,
            lot,
            orders: OrderTracker::default(),
        }
    }
}

impl Agent for ValueAgent {
    fn class(&self) -> AgentClass {
        AgentClass::Value
    }

    fn start(&mut self, ctx: &mut Ctx) {
        let dt = exp_interval(&mut self.rng, self.cfg.wake_mean_secs);
        ctx.wake_after(dt);
    }

    fn on_snapshot(&mut self, snapshot: &BookSnapshot, ctx: &mut Ctx) {
        self.orders.cancel_all(ctx);
        let valuation = observe(&mut self.rng, ctx.fundamental_now(), self.cfg.obs_noise);
        let holdings = self.orders.position.max(0) as Qty;
        let free = holdings.saturating_sub(self.orders.pending(Side::Sell));
        if let Some(o) = value_step(&self.cfg, snapshot, valuation, free, self.lot) {
            let id = ctx.submit(o.side, o.price, o.qty);
            self.orders.placed(id, o.side, o.price, o.qty, ctx.now);
        }
        let dt = exp_interval(&mut self.rng, self.cfg.wake_mean_secs);
        ctx.wake_after(dt);
    }

    fn on_fill(&mut self, fill: &Fill, _ctx: &mut Ctx) {
        self.orders.on_fill(fill);
    }

    fn on_cancelled(&mut self, order: OrderId, _qty: Qty, _ctx: &mut Ctx) {
        self.orders.on_cancelled(order);
    }
}

// ---------------------------------------------------------------------------
// Order book imbalance

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObiConfig {
    pub entry_threshold: f64,
    pub exit_threshold: f64,
    pub position_size: Qty,
    pub query_interval_secs: f64,
    pub levels: usize,
    /// Ticks through the opposite best for aggressive orders.
    pub aggression_ticks: i64,
    /// Mirror the long rules on the sell side.
    pub allow_short: bool,
}

impl Default for ObiConfig {
    fn default() -> Self {
        Self {
            entry_threshold: 0.75,
            exit_threshold: 0.55,
            position_size: 2500,
            query_interval_secs: 0.5,
            levels: 10,
            aggression_ticks: 2,
            allow_short: false,
        }
    }
}

/// One imbalance decision given the signed `position`.
pub fn obi_step(cfg: &ObiConfig, snapshot: &BookSnapshot, position: i64, tick: Price) -> Option<OrderIntent> {
    let imb = imbalance(snapshot, cfg.levels);
    let buy = |qty: Qty| {
        snapshot.best_ask().map(|a| OrderIntent {
            side: Side::Buy,
            price: a + cfg.aggression_ticks * tick,
            qty,
        })
    };
    let sell = |qty: Qty| {
        snapshot.best_bid().map(|b| OrderIntent {
            side: Side::Sell,
            price: (b - cfg.aggression_ticks * tick).max(tick),
            qty,
        })
    };
    match position.signum() {
        0 if imb >= cfg.entry_threshold => buy(cfg.position_size),
        0 if cfg.allow_short && imb <= 1.0 - cfg.entry_threshold => sell(cfg.position_size),
        1 if imb < cfg.exit_threshold => sell(position as Qty),
        -1 if imb > 1.0 - cfg.exit_threshold => buy(position.unsigned_abs()),
        _ => None,
    }
}

pub struct ObiAgent {
    cfg: ObiConfig,
    rng: ChaCha8Rng,
    orders: OrderTracker,
}

impl ObiAgent {
    pub fn new(cfg: ObiConfig, rng: ChaCha8Rng) -> Self {
        Self {
            cfg,
            rng,
            orders: OrderTracker::default(),
        }
    }
}

impl Agent for ObiAgent {
    fn class(&self) -> AgentClass {
        AgentClass::Obi
    }

    fn start(&mut self, ctx: &mut Ctx) {
        let phase = self.rng.gen::<f64>() * self.cfg.query_interval_secs;
        ctx.wake_after(SimTime::from_secs_f64(phase).max(SimTime::from_nanos(1)));
    }

    fn on_snapshot(&mut self, snapshot: &BookSnapshot, ctx: &mut Ctx) {
        if self.orders.open.is_empty() {
            if let Some(o) = obi_step(&self.cfg, snapshot, self.orders.position, ctx.tick) {
                let id = ctx.submit(o.side, o.price, o.qty);
                self.orders.placed(id, o.side, o.price, o.qty, ctx.now);
            }
        } else {
            self.orders.cancel_all(ctx);
        }
        ctx.wake_after(SimTime::from_secs_f64(self.cfg.query_interval_secs));
    }

    fn on_fill(&mut self, fill: &Fill, _ctx: &mut Ctx) {
        self.orders.on_fill(fill);
    }

    fn on_cancelled(&mut self, order: OrderId, _qty: Qty, _ctx: &mut Ctx) {
        self.orders.on_cancelled(order);
    }
}
