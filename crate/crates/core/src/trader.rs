//! The experimental trader: a long-only agent over the 7-predicate state and
//! six-action space, driven by a fixed policy or a Q-learner with optional
//! detector guidance.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Ctx, Fill, OrderTracker};
use crate::book::{BookSnapshot, OrderId, Price, Qty, Side};
use crate::dataset::{relative_price, ActionType, AgentClass, RawAction};
use crate::detector::SequenceClassifier;
use crate::guidance::{candidate_thetas, visible_encode, ActionHistory, GuidanceMode, VisibleContext};
use crate::kernel::{stream_rng, SimTime};
use crate::market::Experimental;
use crate::policy::{eval_state, pi_h, pi_s, PortfolioView, StateParams, TradeAction, TraderState};
use crate::qlearn::{greedy, select_action, ExplorationStrategy, QError, QTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraderConfig {
    pub position_size: Qty,
    /// Shares per passive (PS) bid.
    pub passive_size: Qty,
    /// Ticks below the best bid for PS.
    pub passive_depth: i64,
    /// Ticks through the opposite best for AG and EX.
    pub aggression_ticks: i64,
    /// Cents per share.
    pub profit_target: f64,
    /// Cents per share.
    pub max_loss: f64,
    pub wake_interval_secs: f64,
    /// Trailing window of mids averaged into the reasonable price.
    pub reasonable_window_secs: f64,
    /// Dollars per exchange request.
    pub transaction_cost: f64,
    /// Cap on holdings plus open bids; `position_size + passive_size` when unset.
    pub max_inventory: Option<Qty>,
}

impl Default for TraderConfig {
    fn default() -> Self {
        Self {
            position_size: 100,
            passive_size: 1000,
            passive_depth: 5,
            aggression_ticks: 10,
            profit_target: 10.0,
            max_loss: 30.0,
            wake_interval_secs: 1.0,
            reasonable_window_secs: 1800.0,
            transaction_cost: 0.10,
            max_inventory: None,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPolicy {
    Honest,
    Spoofing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// Limit actions to AG, EX, DN.
    pub restricted: bool,
    pub strategy: ExplorationStrategy,
    pub gamma: f64,
    pub dn_bias: f64,
    /// Reward multiplier used by scaled Boltzmann exploration.
    pub reward_scale: f64,
    pub guidance: Option<GuidanceMode>,
    /// Also shape losing rewards under reward shaping.
    pub shape_losses: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            restricted: true,
            strategy: ExplorationStrategy::boltzmann_scaled(),
            gamma: 0.9,
            dn_bias: 0.1,
            reward_scale: 0.3,
            guidance: None,
            shape_losses: false,
        }
    }
}

impl LearnerConfig {
    pub fn actions(&self) -> &'static [TradeAction] {
        if self.restricted {
            &TradeAction::RESTRICTED
        } else {
            &TradeAction::ALL
        }
    }

    fn scale(&self) -> f64 {
        match self.strategy {
            ExplorationStrategy::Boltzmann { scaled: true } => self.reward_scale,
            _ => 1.0,
        }
    }
}

pub enum Controller {
    Fixed(FixedPolicy),
    Learner {
        cfg: LearnerConfig,
        table: QTable,
        training: bool,
    },
}

impl Controller {
    pub fn learner(cfg: LearnerConfig) -> Self {
        let table = QTable::new(cfg.dn_bias);
        Controller::Learner {
            cfg,
            table,
            training: true,
        }
    }
}

/// Counters for one day of trading.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraderDayStats {
    pub decisions: u64,
    pub requests: u64,
    /// Chosen actions, in canonical order.
    pub action_counts: [u64; 6],
    /// Sum of learning rewards (after shaping and scaling).
    pub reward: f64,
    /// Realized trading P&L, dollars, including the closing mark.
    pub realized: f64,
    /// Shares bought by resting bids placed below the best bid.
    pub passive_filled: u64,
}

pub struct Trader {
    cfg: TraderConfig,
    controller: Controller,
    detector: Option<Arc<SequenceClassifier>>,
    rng: ChaCha8Rng,
    history: ActionHistory,
    day: u32,
    decisions: u64,

    orders: OrderTracker,
    placed_bid: BTreeMap<OrderId, Option<Price>>,
    cost_basis: f64,
    latched_ea: bool,
    last_ea: bool,
    mids: VecDeque<(SimTime, f64)>,
    mid_sum: f64,
    pending: Option<(TraderState, TradeAction)>,
    reward_acc: f64,
    stats: TraderDayStats,
}

impl Trader {
    pub fn new(cfg: TraderConfig, controller: Controller, detector: Option<Arc<SequenceClassifier>>, seed: u64) -> Self {
        Self {
            cfg,
            controller,
            detector,
            rng: stream_rng(seed, 0x7EAD),
            history: ActionHistory::new(),
            day: 0,
            decisions: 0,
            orders: OrderTracker::default(),
            placed_bid: BTreeMap::new(),
            cost_basis: 0.0,
            latched_ea: false,
            last_ea: false,
            mids: VecDeque::new(),
            mid_sum: 0.0,
            pending: None,
            reward_acc: 0.0,
            stats: TraderDayStats::default(),
        }
    }

    /// Sets the day index used by exploration schedules.
    pub fn begin_day(&mut self, day: u32) {
        self.day = day;
    }

    pub fn set_training(&mut self, on: bool) {
        if let Controller::Learner { training, .. } = &mut self.controller {
            *training = on;
        }
    }

    pub fn q_table(&self) -> Option<&QTable> {
        match &self.controller {
            Controller::Learner { table, .. } => Some(table),
            Controller::Fixed(_) => None,
        }
    }

    pub fn history(&self) -> &ActionHistory {
        &self.history
    }

    pub fn day_stats(&self) -> &TraderDayStats {
        &self.stats
    }

    pub fn config(&self) -> &TraderConfig {
        &self.cfg
    }

    fn holdings(&self) -> Qty {
        self.orders.position.max(0) as Qty
    }

    fn reward_scale(&self) -> f64 {
        match &self.controller {
            Controller::Learner { cfg, .. } => cfg.scale(),
            Controller::Fixed(_) => 1.0,
        }
    }

    /// Shapes (when configured) and scales a realized P&L in dollars.
    fn pnl_reward(&self, pnl: f64) -> f64 {
        let mut r = pnl;
        if let Controller::Learner { cfg, .. } = &self.controller {
            if cfg.guidance == Some(GuidanceMode::RewardShaping) && (pnl > 0.0 || cfg.shape_losses) {
                if let Some(det) = &self.detector {
                    r *= 1.0 - self.history.theta(det);
                }
            }
        }
        r * self.reward_scale()
    }

    fn reset_day(&mut self) {
        self.orders = OrderTracker::default();
        self.placed_bid.clear();
        self.cost_basis = 0.0;
        self.latched_ea = false;
        self.last_ea = false;
        self.mids.clear();
        self.mid_sum = 0.0;
        self.pending = None;
        self.reward_acc = 0.0;
        self.stats = TraderDayStats::default();
    }

    fn push_mid(&mut self, now: SimTime, mid: f64) {
        self.mids.push_back((now, mid));
        self.mid_sum += mid;
        let horizon = SimTime::from_secs_f64(self.cfg.reasonable_window_secs);
        while let Some(&(t, m)) = self.mids.front() {
            if now.saturating_sub(t) > horizon {
                self.mids.pop_front();
                self.mid_sum -= m;
            } else {
                break;
            }
        }
    }

    fn visible_context(&self, snapshot: &BookSnapshot) -> VisibleContext {
        let (bb, ba) = (snapshot.best_bid(), snapshot.best_ask());
        let tick = 1;
        let open_orders = self
            .orders
            .open
            .values()
            .map(|o| RawAction {
                action_type: ActionType::Order,
                direction: o.side,
                rel_price: relative_price(o.side, o.price, bb, ba, tick),
                quantity: o.qty,
            })
            .collect();
        let bought = self.holdings() + self.orders.pending(Side::Buy);
        let cap = self
            .cfg
            .max_inventory
            .unwrap_or(self.cfg.position_size + self.cfg.passive_size);
        let room = cap.saturating_sub(bought);
        VisibleContext {
            open_orders,
            aggressive_rel: ba.map_or(0, |a| relative_price(Side::Buy, a + self.cfg.aggression_ticks, bb, ba, tick)),
            passive_rel: -self.cfg.passive_depth,
            position_size: self.cfg.position_size.saturating_sub(bought).min(room),
            passive_size: self.cfg.passive_size.min(room),
            replace_size: self.cfg.passive_size.min(cap.saturating_sub(self.holdings())),
            holdings: self.holdings().saturating_sub(self.orders.pending(Side::Sell)),
        }
    }

    fn choose(&mut self, state: &TraderState, vis: &VisibleContext) -> TradeAction {
        match &self.controller {
            Controller::Fixed(FixedPolicy::Honest) => pi_h(state),
            Controller::Fixed(FixedPolicy::Spoofing) => pi_s(state),
            Controller::Learner { cfg, table, training } => {
                let actions = cfg.actions();
                let weights: Option<Vec<f64>> = match (&cfg.guidance, &self.detector) {
                    (Some(GuidanceMode::ActionReranking), Some(det)) => Some(
                        candidate_thetas(actions, &self.history, vis, det)
                            .into_iter()
                            .map(|t| 1.0 - t)
                            .collect(),
                    ),
                    _ => None,
                };
                if *training {
                    select_action(
                        state,
                        table,
                        &cfg.strategy,
                        actions,
                        self.day,
                        self.decisions,
                        weights.as_deref(),
                        &mut self.rng,
                    )
                } else {
                    greedy(state, table, actions, weights.as_deref())
                }
            }
        }
    }

    fn send(&mut self, side: Side, price: Price, qty: Qty, market_bid: Option<Price>, ctx: &mut Ctx) {
        let id = ctx.submit(side, price, qty);
        self.orders.placed(id, side, price, qty, ctx.now);
        self.placed_bid.insert(id, market_bid);
        self.stats.requests += 1;
        self.reward_acc -= self.cfg.transaction_cost * self.reward_scale();
    }

    fn cancel_all(&mut self, ctx: &mut Ctx) {
        let ids: Vec<OrderId> = self.orders.open.keys().copied().collect();
        for id in ids {
            ctx.cancel(id);
            self.stats.requests += 1;
            self.reward_acc -= self.cfg.transaction_cost * self.reward_scale();
        }
    }

    fn execute(&mut self, action: TradeAction, market: &BookSnapshot, vis: &VisibleContext, ctx: &mut Ctx) {
        let bid = market.best_bid();
        let tick = ctx.tick;
        match action {
            TradeAction::AG => {
                if let (Some(ask), q) = (market.best_ask(), vis.position_size) {
                    if q > 0 {
                        self.send(Side::Buy, ask + self.cfg.aggression_ticks * tick, q, bid, ctx);
                    }
                }
            }
            TradeAction::PS | TradeAction::UP => {
                if action == TradeAction::UP {
                    self.cancel_all(ctx);
                }
                let qty = if action == TradeAction::UP {
                    vis.replace_size
                } else {
                    vis.passive_size
                };
                if let Some(b) = bid {
                    let price = b - self.cfg.passive_depth * tick;
                    if price > 0 && qty > 0 {
                        self.send(Side::Buy, price, qty, bid, ctx);
                    }
                }
            }
            TradeAction::EX => {
                if let (Some(b), q) = (bid, vis.holdings) {
                    if q > 0 {
                        let price = (b - self.cfg.aggression_ticks * tick).max(tick);
                        self.send(Side::Sell, price, q, bid, ctx);
                    }
                }
            }
            TradeAction::CN => self.cancel_all(ctx),
            TradeAction::DN => {}
        }
        self.history.extend(visible_encode(action, vis));
    }

    fn learn(&mut self, next: Option<&TraderState>) -> Result<(), QError> {
        let Some((s, a)) = self.pending.take() else {
            return Ok(());
        };
        let r = std::mem::take(&mut self.reward_acc);
        self.stats.reward += r;
        if let Controller::Learner { cfg, table, training: true } = &mut self.controller {
            table.update(&s, a, r, next, cfg.gamma, cfg.actions())?;
        }
        Ok(())
    }
}

impl Agent for Trader {
    fn class(&self) -> AgentClass {
        AgentClass::Experimental
    }

    fn start(&mut self, ctx: &mut Ctx) {
        self.reset_day();
        ctx.wake_after(SimTime::from_secs_f64(self.cfg.wake_interval_secs));
    }

    fn on_snapshot(&mut self, snapshot: &BookSnapshot, ctx: &mut Ctx) {
        ctx.wake_after(SimTime::from_secs_f64(self.cfg.wake_interval_secs));
        let own: Vec<(Side, Price, Qty)> = self.orders.open.values().map(|o| (o.side, o.price, o.remaining)).collect();
        let market = snapshot.without_own(&own);
        if let Some(m) = market.mid() {
            self.push_mid(ctx.now, m);
        }
        if ctx.now < ctx.warmup_end || self.mids.is_empty() {
            return;
        }
        let holdings = self.holdings();
        let best = market.best_bid();
        let view = PortfolioView {
            holdings,
            avg_cost: if holdings > 0 { self.cost_basis / holdings as f64 } else { 0.0 },
            open_orders: self.orders.open.len(),
            entry_advantage_at_fill: self.latched_ea,
            moved_since_placement: self
                .orders
                .open
                .keys()
                .any(|id| self.placed_bid.get(id).is_some_and(|b| *b != best)),
        };
        let params = StateParams {
            position_size: self.cfg.position_size,
            profit_target: self.cfg.profit_target,
            max_loss: self.cfg.max_loss,
            reasonable_price: self.mid_sum / self.mids.len() as f64,
        };
        let state = eval_state(&market, &view, &params);
        self.last_ea = state.ea;
        // rewards are finite by construction; a failure here is a logic error
        self.learn(Some(&state)).expect("finite reward");

        let vis = self.visible_context(snapshot);
        let action = self.choose(&state, &vis);
        self.execute(action, &market, &vis, ctx);
        self.stats.decisions += 1;
        self.stats.action_counts[action.index()] += 1;
        self.decisions += 1;
        self.pending = Some((state, action));
    }

    fn on_fill(&mut self, fill: &Fill, _ctx: &mut Ctx) {
        let before = self.holdings();
        let passive = self
            .orders
            .open
            .get(&fill.order)
            .zip(self.placed_bid.get(&fill.order).copied().flatten())
            .is_some_and(|(o, b)| o.side == Side::Buy && o.price < b);
        if passive {
            self.stats.passive_filled += fill.qty;
        }
        self.orders.on_fill(fill);
        if !self.orders.open.contains_key(&fill.order) {
            self.placed_bid.remove(&fill.order);
        }
        match fill.side {
            Side::Buy => {
                if before == 0 {
                    self.latched_ea = self.last_ea;
                }
                self.cost_basis += (fill.price * fill.qty as i64) as f64;
            }
            Side::Sell => {
                let avg = if before > 0 { self.cost_basis / before as f64 } else { 0.0 };
                let pnl = (fill.price as f64 - avg) * fill.qty as f64 / 100.0;
                self.cost_basis -= avg * fill.qty.min(before) as f64;
                self.stats.realized += pnl;
                self.reward_acc += self.pnl_reward(pnl);
            }
        }
    }

    fn on_cancelled(&mut self, order: OrderId, _qty: Qty, _ctx: &mut Ctx) {
        self.orders.on_cancelled(order);
        self.placed_bid.remove(&order);
    }
}

impl Experimental for Trader {
    fn on_close(&mut self, mark: f64, _now: SimTime) {
        let holdings = self.holdings();
        if holdings > 0 {
            let pnl = (mark - self.cost_basis / holdings as f64) * holdings as f64 / 100.0;
            self.stats.realized += pnl;
            self.reward_acc += self.pnl_reward(pnl);
        }
        self.learn(None).expect("finite reward");
    }
}
