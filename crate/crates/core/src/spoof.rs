//! Hand-coded spoofing agent: buy at a fair price, post large bids below the
//! best bid to attract buyers, sell into the rise, then pull the bids.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Ctx, Fill, OrderTracker};
use crate::book::{BookSnapshot, OrderId, Qty, Side};
use crate::dataset::AgentClass;
use crate::kernel::SimTime;
use crate::market::Experimental;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpoofConfig {
    /// Shares per spoof order.
    pub quote_size: Qty,
    /// Ticks below the best bid.
    pub quote_depth: i64,
    /// Skip the spoof bids entirely.
    pub honest: bool,
    /// Warmup length; the market's warmup when unset.
    pub warmup_secs: Option<f64>,
    pub position_size: Qty,
    /// Cents per share.
    pub profit_target: f64,
    /// Cents per share.
    pub stop_loss: f64,
    pub wake_interval_secs: f64,
    /// Reprice when the best bid comes within this many ticks of a spoof bid.
    pub safety_gap_ticks: i64,
    /// Ticks through the opposite best for entry and exit orders.
    pub aggression_ticks: i64,
    /// Spoof bids are pulled this long before the close.
    pub close_buffer_secs: f64,
}

impl Default for SpoofConfig {
    fn default() -> Self {
        Self {
            quote_size: 1000,
            quote_depth: 5,
            honest: false,
            warmup_secs: None,
            position_size: 100,
            profit_target: 50.0,
            stop_loss: 100.0,
            wake_interval_secs: 0.2,
            safety_gap_ticks: 1,
            aggression_ticks: 10,
            close_buffer_secs: 60.0,
        }
    }
}

/// Best-ask range seen during warmup and the previous entry price.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WarmupStats {
    pub ask_low: Option<f64>,
    pub ask_high: Option<f64>,
    pub prior_entry: Option<f64>,
}

impl WarmupStats {
    pub fn observe_ask(&mut self, ask: f64) {
        self.ask_low = Some(self.ask_low.map_or(ask, |l| l.min(ask)));
        self.ask_high = Some(self.ask_high.map_or(ask, |h| h.max(ask)));
    }

    /// Highest acceptable expected entry price: the warmup ask midpoint,
    /// capped by the prior entry when there was one. `None` before any ask
    /// was observed.
    pub fn fair_entry_threshold(&self) -> Option<f64> {
        let mid = (self.ask_low? + self.ask_high?) / 2.0;
        Some(self.prior_entry.map_or(mid, |p| mid.min(p)))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Phase {
    Warmup,
    Flat,
    Entering,
    Holding,
    Exiting,
    Closed,
}

pub struct SpoofAgent {
    cfg: SpoofConfig,
    stats: WarmupStats,
    phase: Phase,
    orders: OrderTracker,
    spoof_ids: BTreeSet<OrderId>,
    spoof_filled: bool,
    /// Cost of the current holdings, cents.
    cost_basis: f64,
    entry_notional: f64,
    entry_qty: Qty,
}

impl SpoofAgent {
    pub fn new(cfg: SpoofConfig) -> Self {
        Self {
            cfg,
            stats: WarmupStats::default(),
            phase: Phase::Warmup,
            orders: OrderTracker::default(),
            spoof_ids: BTreeSet::new(),
            spoof_filled: false,
            cost_basis: 0.0,
            entry_notional: 0.0,
            entry_qty: 0,
        }
    }

    pub fn config(&self) -> &SpoofConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &WarmupStats {
        &self.stats
    }

    fn holdings(&self) -> Qty {
        self.orders.position.max(0) as Qty
    }

    fn warmup_end(&self, ctx: &Ctx) -> SimTime {
        self.cfg
            .warmup_secs
            .map_or(ctx.warmup_end, |s| SimTime::from_secs_f64(s).min(ctx.day_end))
    }

    fn own_spoof_levels(&self) -> Vec<(Side, i64, Qty)> {
        self.spoof_ids
            .iter()
            .filter_map(|id| self.orders.open.get(id))
            .map(|o| (o.side, o.price, o.remaining))
            .collect()
    }

    fn cancel_spoofs(&mut self, ctx: &mut Ctx) {
        for &id in &self.spoof_ids {
            if self.orders.open.contains_key(&id) {
                ctx.cancel(id);
            }
        }
    }

    fn sell_all(&mut self, market: &BookSnapshot, ctx: &mut Ctx) {
        let qty = self.holdings().saturating_sub(self.orders.pending(Side::Sell));
        if qty == 0 {
            return;
        }
        if let Some(bid) = market.best_bid() {
            let price = (bid - self.cfg.aggression_ticks * ctx.tick).max(ctx.tick);
            let id = ctx.submit(Side::Sell, price, qty);
            self.orders.placed(id, Side::Sell, price, qty, ctx.now);
        }
    }

    fn maintain_spoofs(&mut self, market: &BookSnapshot, ctx: &mut Ctx) {
        let Some(best) = market.best_bid() else {
            return;
        };
        let target = best - self.cfg.quote_depth * ctx.tick;
        if target <= 0 {
            return;
        }
        let live: Vec<(OrderId, i64)> = self
            .spoof_ids
            .iter()
            .filter_map(|id| self.orders.open.get(id).map(|o| (*id, o.price)))
            .collect();
        let gap = self.cfg.safety_gap_ticks * ctx.tick;
        let mut keep = false;
        for (id, price) in live {
            if price == target && best - price > gap {
                keep = true;
            } else {
                ctx.cancel(id);
            }
        }
        if !keep {
            let id = ctx.submit(Side::Buy, target, self.cfg.quote_size);
            self.orders.placed(id, Side::Buy, target, self.cfg.quote_size, ctx.now);
            self.spoof_ids.insert(id);
        }
    }
}

impl Agent for SpoofAgent {
    fn class(&self) -> AgentClass {
        AgentClass::Spoofer
    }

    fn start(&mut self, ctx: &mut Ctx) {
        ctx.wake_after(SimTime::from_secs_f64(self.cfg.wake_interval_secs));
    }

    fn on_snapshot(&mut self, snapshot: &BookSnapshot, ctx: &mut Ctx) {
        ctx.wake_after(SimTime::from_secs_f64(self.cfg.wake_interval_secs));
        if self.phase == Phase::Closed {
            return;
        }
        if ctx.now < self.warmup_end(ctx) {
            if let Some(a) = snapshot.best_ask() {
                self.stats.observe_ask(a as f64);
            }
            return;
        }
        if self.phase == Phase::Warmup {
            self.phase = Phase::Flat;
        }
        if ctx.now + SimTime::from_secs_f64(self.cfg.close_buffer_secs) >= ctx.day_end {
            self.cancel_spoofs(ctx);
            self.phase = Phase::Closed;
            return;
        }
        let market = snapshot.without_own(&self.own_spoof_levels());

        match self.phase {
            Phase::Flat => {
                if !self.orders.open.is_empty() {
                    self.orders.cancel_all(ctx);
                    return;
                }
                let (Some(threshold), Some(ask)) = (self.stats.fair_entry_threshold(), market.best_ask()) else {
                    return;
                };
                let Some(cost) = market.walk(Side::Sell, self.cfg.position_size) else {
                    return;
                };
                if cost <= threshold {
                    let price = ask + self.cfg.aggression_ticks * ctx.tick;
                    let id = ctx.submit(Side::Buy, price, self.cfg.position_size);
                    self.orders.placed(id, Side::Buy, price, self.cfg.position_size, ctx.now);
                    self.entry_notional = 0.0;
                    self.entry_qty = 0;
                    self.phase = Phase::Entering;
                }
            }
            Phase::Entering => {
                if !self.orders.open.is_empty() {
                    self.orders.cancel_all(ctx);
                } else if self.holdings() > 0 {
                    if self.entry_qty > 0 {
                        self.stats.prior_entry = Some(self.entry_notional / self.entry_qty as f64);
                    }
                    self.phase = Phase::Holding;
                } else {
                    self.phase = Phase::Flat;
                }
            }
            Phase::Holding => {
                let holdings = self.holdings();
                if holdings == 0 {
                    self.cancel_spoofs(ctx);
                    self.phase = Phase::Exiting;
                    return;
                }
                let avg = self.cost_basis / holdings as f64;
                let gain = market.walk(Side::Buy, holdings).map(|p| p - avg);
                let exit = self.spoof_filled
                    || gain.is_some_and(|g| g >= self.cfg.profit_target || -g >= self.cfg.stop_loss);
                if exit {
                    self.sell_all(&market, ctx);
                    self.cancel_spoofs(ctx);
                    self.phase = Phase::Exiting;
                } else if !self.cfg.honest {
                    self.maintain_spoofs(&market, ctx);
                }
            }
            Phase::Exiting => {
                if self.holdings() == 0 && self.orders.open.is_empty() {
                    self.spoof_ids.clear();
                    self.spoof_filled = false;
                    self.phase = Phase::Flat;
                } else if !self.orders.open.is_empty() {
                    self.orders.cancel_all(ctx);
                } else {
                    self.sell_all(&market, ctx);
                }
            }
            Phase::Warmup | Phase::Closed => {}
        }
    }

    fn on_fill(&mut self, fill: &Fill, _ctx: &mut Ctx) {
        let before = self.holdings();
        self.orders.on_fill(fill);
        match fill.side {
            Side::Buy => {
                self.cost_basis += (fill.price * fill.qty as i64) as f64;
                if self.spoof_ids.contains(&fill.order) {
                    self.spoof_filled = true;
                } else {
                    self.entry_notional += (fill.price * fill.qty as i64) as f64;
                    self.entry_qty += fill.qty;
                }
            }
            Side::Sell => {
                if before > 0 {
                    self.cost_basis *= self.holdings() as f64 / before as f64;
                }
            }
        }
    }

    fn on_cancelled(&mut self, order: OrderId, _qty: Qty, _ctx: &mut Ctx) {
        self.orders.on_cancelled(order);
    }
}

impl Experimental for SpoofAgent {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Outgoing, Payload};
    use crate::book::{LimitOrder, Price};
    use crate::fundamental::{FundamentalPath, FundamentalProcess};

    const DAY_END: f64 = 1_000.0;

    struct Driver {
        agent: SpoofAgent,
        fundamental: FundamentalPath,
        seq: u64,
    }

    impl Driver {
        fn new(honest: bool) -> Self {
            let cfg = SpoofConfig {
                honest,
                warmup_secs: Some(10.0),
                ..SpoofConfig::default()
            };
            Self {
                agent: SpoofAgent::new(cfg),
                fundamental: FundamentalPath::generate(
                    &FundamentalProcess::default(),
                    SimTime::from_secs_f64(DAY_END),
                    1,
                ),
                seq: 0,
            }
        }

        /// Runs `f` against a context at `secs` and returns the exchange-bound messages.
        fn with_ctx(&mut self, secs: f64, f: impl FnOnce(&mut SpoofAgent, &mut Ctx)) -> Vec<Payload> {
            let mut outbox = Vec::new();
            let mut ctx = Ctx {
                now: SimTime::from_secs_f64(secs),
                id: 7,
                tick: 1,
                day_end: SimTime::from_secs_f64(DAY_END),
                warmup_end: SimTime::from_secs_f64(10.0),
                fundamental: &self.fundamental,
                outbox: &mut outbox,
                next_seq: &mut self.seq,
            };
            f(&mut self.agent, &mut ctx);
            outbox
                .into_iter()
                .filter_map(|o| match o {
                    Outgoing::Exchange(p) => Some(p),
                    Outgoing::WakeAt(_) => None,
                })
                .collect()
        }

        fn snap(&mut self, secs: f64, bids: &[(Price, Qty)], asks: &[(Price, Qty)]) -> Vec<Payload> {
            let snapshot = BookSnapshot {
                time: SimTime::from_secs_f64(secs),
                bids: bids.to_vec(),
                asks: asks.to_vec(),
                last_trade: None,
            };
            self.with_ctx(secs, |a, ctx| a.on_snapshot(&snapshot, ctx))
        }

        /// Acknowledges every cancel in `out`.
        fn ack(&mut self, secs: f64, out: &[Payload]) {
            for p in out {
                if let Payload::Cancel(id) = p {
                    let id = *id;
                    self.with_ctx(secs, |a, ctx| a.on_cancelled(id, 0, ctx));
                }
            }
        }

        /// Warmup, entry and a filled position of 100 at 10_005.
        fn holding(honest: bool) -> Self {
            let mut d = Self::new(honest);
            assert!(d.snap(1.0, &[(10_000, 50)], &[(10_010, 500)]).is_empty());
            let out = d.snap(20.0, &[(10_000, 50)], &[(10_005, 500)]);
            let [Payload::Submit(LimitOrder {
                id, side: Side::Buy, qty: 100, ..
            })] = out.as_slice()
            else {
                panic!("expected one entry order, got {out:?}");
            };
            let fill = Fill {
                order: *id,
                side: Side::Buy,
                price: 10_005,
                qty: 100,
            };
            d.with_ctx(20.1, |a, ctx| a.on_fill(&fill, ctx));
            assert!(d.snap(20.2, &[(10_000, 50)], &[(10_006, 500)]).is_empty());
            d
        }
    }

    fn spoof_bids(out: &[Payload]) -> Vec<(Price, Qty)> {
        out.iter()
            .filter_map(|p| match p {
                Payload::Submit(o) if o.side == Side::Buy && o.qty == 1000 => Some((o.price, o.qty)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn threshold_takes_the_lower_of_midpoint_and_prior_entry() {
        let s = WarmupStats {
            ask_low: Some(10_000.0),
            ask_high: Some(11_000.0),
            prior_entry: Some(10_400.0),
        };
        assert_eq!(s.fair_entry_threshold(), Some(10_400.0));
        let flat = WarmupStats {
            ask_low: Some(10_000.0),
            ask_high: Some(10_000.0),
            prior_entry: Some(10_000.0),
        };
        assert_eq!(flat.fair_entry_threshold(), Some(10_000.0));
    }

    #[test]
    fn first_entry_uses_the_midpoint_alone() {
        let mut s = WarmupStats::default();
        assert_eq!(s.fair_entry_threshold(), None);
        for a in [10_020.0, 9_980.0, 10_050.0] {
            s.observe_ask(a);
        }
        assert_eq!(s.fair_entry_threshold(), Some(10_015.0));
    }

    #[test]
    fn honest_mode_never_posts_spoof_bids() {
        let mut d = Driver::holding(true);
        for (i, bid) in [10_000, 10_002, 9_998, 10_001].into_iter().enumerate() {
            let out = d.snap(21.0 + i as f64, &[(bid, 50)], &[(bid + 6, 500)]);
            assert!(out.is_empty(), "{out:?}");
        }
    }

    #[test]
    fn spoof_bid_sits_at_depth_and_follows_the_best_bid() {
        let mut d = Driver::holding(false);
        let out = d.snap(21.0, &[(10_000, 50)], &[(10_006, 500)]);
        assert_eq!(spoof_bids(&out), vec![(9_995, 1000)]);
        let own = [(10_000, 50), (9_995, 1000)];
        assert!(d.snap(21.2, &own, &[(10_006, 500)]).is_empty(), "unchanged book keeps the bid");

        let out = d.snap(21.4, &[(10_002, 50), (9_995, 1000)], &[(10_006, 500)]);
        assert!(matches!(out[0], Payload::Cancel(_)));
        assert_eq!(spoof_bids(&out), vec![(9_997, 1000)]);
        d.ack(21.5, &out);

        // Best bid falls to within the safety gap of the resting spoof.
        let out = d.snap(21.6, &[(9_998, 50), (9_997, 1000)], &[(10_004, 500)]);
        assert!(matches!(out[0], Payload::Cancel(_)));
        assert_eq!(spoof_bids(&out), vec![(9_993, 1000)]);
    }

    #[test]
    fn exit_sells_before_pulling_the_spoof() {
        let mut d = Driver::holding(false);
        let out = d.snap(21.0, &[(10_000, 50)], &[(10_006, 500)]);
        assert_eq!(spoof_bids(&out).len(), 1);
        let out = d.snap(21.2, &[(10_060, 500), (9_995, 1000)], &[(10_070, 500)]);
        match out.as_slice() {
            [Payload::Submit(sell), Payload::Cancel(_)] => {
                assert_eq!((sell.side, sell.qty), (Side::Sell, 100));
            }
            other => panic!("expected sell then cancel, got {other:?}"),
        }
    }

    #[test]
    fn spoofs_are_pulled_before_the_close_and_the_agent_stops() {
        let mut d = Driver::holding(false);
        let out = d.snap(21.0, &[(10_000, 50)], &[(10_006, 500)]);
        assert_eq!(spoof_bids(&out).len(), 1);
        let late = DAY_END - d.agent.config().close_buffer_secs + 1.0;
        let out = d.snap(late, &[(10_000, 50), (9_995, 1000)], &[(10_006, 500)]);
        assert!(matches!(out.as_slice(), [Payload::Cancel(_)]), "{out:?}");
        d.ack(late, &out);
        assert!(d.snap(late + 1.0, &[(10_100, 50)], &[(10_106, 500)]).is_empty());
        assert!(d.agent.spoof_ids.iter().all(|id| !d.agent.orders.open.contains_key(id)));
    }

    #[test]
    fn entry_waits_for_a_fair_price() {
        let mut d = Driver::new(false);
        d.snap(1.0, &[(9_990, 50)], &[(10_000, 500)]);
        d.snap(2.0, &[(9_990, 50)], &[(10_020, 500)]);
        assert!(d.snap(20.0, &[(9_990, 50)], &[(10_011, 500)]).is_empty());
        assert_eq!(d.snap(21.0, &[(9_990, 50)], &[(10_010, 500)]).len(), 1);
    }
}
