//! One simulated trading day: the exchange agent, the background population,
//! and an optional experimental agent wired through the event kernel.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Ctx, Fill, ObiAgent, ObiConfig, Outgoing, Payload, ValueAgent, ValueConfig, ZiAgent, ZiConfig};
use crate::book::{OrderBook, OrderId, Price, Qty, Side, Trade};
use crate::dataset::{relative_price, ActionLog, ActionRecord, ActionType, AgentClass};
use crate::fundamental::{FundamentalPath, FundamentalProcess};
use crate::kernel::{derive_seed, stream_rng, AgentId, EventMessage, EventQueue, LatencyModel, SimTime, EXCHANGE_ID};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Population {
    pub zi: usize,
    pub value: usize,
    pub obi: usize,
}

impl Default for Population {
    fn default() -> Self {
        Self::desk()
    }
}

impl Population {
    pub fn desk() -> Self {
        Self {
            zi: 50,
            value: 50,
            obi: 10,
        }
    }

    pub fn paper() -> Self {
        Self {
            zi: 500,
            value: 500,
            obi: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyConfig {
    pub background_min_us: u64,
    pub background_max_us: u64,
    pub obi_min_us: u64,
    pub obi_max_us: u64,
    pub experimental_ns: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            background_min_us: 1_000,
            background_max_us: 50_000,
            obi_min_us: 21,
            obi_max_us: 399,
            experimental_ns: 33,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketConfig {
    pub day_secs: f64,
    pub warmup_secs: f64,
    pub tick: Price,
    pub snapshot_depth: usize,
    pub fundamental: FundamentalProcess,
    pub population: Population,
    pub latency: LatencyConfig,
    pub zi: ZiConfig,
    pub value: ValueConfig,
    pub obi: ObiConfig,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            day_secs: 6.5 * 3600.0,
            warmup_secs: 1800.0,
            tick: 1,
            snapshot_depth: 10,
            fundamental: FundamentalProcess::default(),
            population: Population::default(),
            latency: LatencyConfig::default(),
            zi: ZiConfig::default(),
            value: ValueConfig::default(),
            obi: ObiConfig::default(),
        }
    }
}

impl MarketConfig {
    pub fn day_end(&self) -> SimTime {
        SimTime::from_secs_f64(self.day_secs)
    }

    pub fn warmup_end(&self) -> SimTime {
        SimTime::from_secs_f64(self.warmup_secs.min(self.day_secs))
    }
}

/// Hook for agents that live across days and need the closing mark.
pub trait Experimental: Agent {
    /// Closing mark in cents. Called after the last event of the day.
    fn on_close(&mut self, _mark: f64, _now: SimTime) {}
}

/// An experimental agent taking part in one day.
pub struct ExperimentalSlot<'a> {
    pub agent: &'a mut dyn Experimental,
    /// Whether this agent's actions carry the spoofing label.
    pub label_actions: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentDay {
    pub id: AgentId,
    pub class: AgentClass,
    pub latency_ns: u64,
    /// Marked-to-market profit for the day, dollars.
    pub profit: f64,
    pub position: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub time: SimTime,
    pub sender: AgentId,
    pub recipient: AgentId,
    pub kind: &'static str,
}

#[derive(Clone, Debug)]
pub struct DayOutcome {
    pub log: ActionLog,
    pub agents: Vec<AgentDay>,
    /// Closing mark, cents.
    pub close: f64,
    /// Trade tape in execution order.
    pub trades: Vec<Trade>,
    pub events: usize,
    pub trace: Option<Vec<TraceRow>>,
}

impl DayOutcome {
    pub fn experimental(&self) -> Option<&AgentDay> {
        self.agents
            .iter()
            .find(|a| matches!(a.class, AgentClass::Spoofer | AgentClass::Experimental))
    }
}

pub fn write_trace<W: Write>(rows: &[TraceRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_ns", "sender", "recipient", "kind"])?;
    let id = |a: AgentId| if a == EXCHANGE_ID { "exchange".to_string() } else { a.to_string() };
    for r in rows {
        out.write_record([r.time.nanos().to_string(), id(r.sender), id(r.recipient), r.kind.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_tape<W: Write>(trades: &[Trade], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_ns", "price", "quantity", "buyer", "seller"])?;
    for t in trades {
        out.write_record([
            t.time.nanos().to_string(),
            t.price.to_string(),
            t.qty.to_string(),
            t.buyer.to_string(),
            t.seller.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

struct OrderInfo {
    side: Side,
    price: Price,
    qty: Qty,
}

struct Exchange {
    book: OrderBook,
    registry: HashMap<OrderId, OrderInfo>,
    cash: Vec<i64>,
    position: Vec<i64>,
    classes: Vec<AgentClass>,
    labels: Vec<bool>,
    log: ActionLog,
    tick: Price,
    depth: usize,
    trades: Vec<Trade>,
}

impl Exchange {
    fn handle(&mut self, msg: EventMessage<Payload>, now: SimTime, out: &mut Vec<(AgentId, Payload)>) {
        let agent = msg.sender;
        match msg.payload {
            Payload::Query => out.push((agent, Payload::Snapshot(self.book.snapshot(self.depth, now)))),
            Payload::Submit(order) => {
                let rel = relative_price(order.side, order.price, self.book.best_bid(), self.book.best_ask(), self.tick);
                self.log.record(ActionRecord {
                    agent_id: agent,
                    agent_class: self.classes[agent],
                    timestamp: now,
                    action_type: ActionType::Order,
                    direction: order.side,
                    rel_price: rel,
                    quantity: order.qty,
                    spoofing_label: self.labels[agent],
                });
                let (id, side, price, qty) = (order.id, order.side, order.price, order.qty);
                let mut order = order;
                order.entry_time = now;
                let Ok(outcome) = self.book.submit(order) else {
                    return;
                };
                self.registry.insert(id, OrderInfo { side, price, qty });
                for t in outcome.trades {
                    self.trades.push(t.clone());
                    let notional = t.price * t.qty as i64;
                    self.cash[t.buyer] -= notional;
                    self.position[t.buyer] += t.qty as i64;
                    self.cash[t.seller] += notional;
                    self.position[t.seller] -= t.qty as i64;
                    for (who, oid, s) in [(t.buyer, t.buy_order, Side::Buy), (t.seller, t.sell_order, Side::Sell)] {
                        out.push((
                            who,
                            Payload::Fill(Fill {
                                order: oid,
                                side: s,
                                price: t.price,
                                qty: t.qty,
                            }),
                        ));
                    }
                }
            }
            Payload::Cancel(id) => {
                let Some(info) = self.registry.get(&id) else {
                    return;
                };
                let rel = relative_price(info.side, info.price, self.book.best_bid(), self.book.best_ask(), self.tick);
                self.log.record(ActionRecord {
                    agent_id: agent,
                    agent_class: self.classes[agent],
                    timestamp: now,
                    action_type: ActionType::Cancel,
                    direction: info.side,
                    rel_price: rel,
                    quantity: info.qty,
                    spoofing_label: self.labels[agent],
                });
                let qty = self.book.cancel(id);
                out.push((agent, Payload::Cancelled { order: id, qty }));
            }
            _ => {}
        }
    }

    fn mark(&self, fundamental: f64) -> f64 {
        match (self.book.best_bid(), self.book.best_ask()) {
            (Some(b), Some(a)) => (a + b) as f64 / 2.0,
            _ => self.book.last_trade().map_or(fundamental, |p| p as f64),
        }
    }
}

fn dispatch(agent: &mut dyn Agent, payload: &Payload, ctx: &mut Ctx) {
    match payload {
        Payload::Wakeup => agent.on_wakeup(ctx),
        Payload::Snapshot(s) => agent.on_snapshot(s, ctx),
        Payload::Fill(f) => agent.on_fill(f, ctx),
        Payload::Cancelled { order, qty } => agent.on_cancelled(*order, *qty, ctx),
        _ => {}
    }
}

const ZI_STREAM: u64 = 1 << 20;
const VALUE_STREAM: u64 = 2 << 20;
const OBI_STREAM: u64 = 3 << 20;
const LATENCY_STREAM: u64 = 7 << 20;

/// Runs one day. Background agents are built fresh from `seed`; the
/// experimental agent, if any, keeps its own state across calls and takes
/// the last agent id.
pub fn run_day(
    cfg: &MarketConfig,
    run: u32,
    day: u32,
    seed: u64,
    experimental: Option<ExperimentalSlot<'_>>,
    trace: bool,
) -> DayOutcome {
    let day_seed = derive_seed(seed, day as u64);
    let day_end = cfg.day_end();
    let warmup_end = cfg.warmup_end();
    let fundamental = FundamentalPath::generate(&cfg.fundamental, day_end, day_seed);

    let mut agents: Vec<Box<dyn Agent>> = Vec::new();
    let mut latencies = Vec::new();
    let lat = &cfg.latency;
    for i in 0..cfg.population.zi {
        let s = ZI_STREAM + i as u64;
        agents.push(Box::new(ZiAgent::new(cfg.zi.clone(), stream_rng(day_seed, s))));
        latencies.push(LatencyModel::draw_uniform(
            &mut stream_rng(day_seed, LATENCY_STREAM ^ s),
            SimTime::from_micros(lat.background_min_us),
            SimTime::from_micros(lat.background_max_us),
        ));
    }
    for i in 0..cfg.population.value {
        let s = VALUE_STREAM + i as u64;
        agents.push(Box::new(ValueAgent::new(cfg.value.clone(), stream_rng(day_seed, s))));
        latencies.push(LatencyModel::draw_uniform(
            &mut stream_rng(day_seed, LATENCY_STREAM ^ s),
            SimTime::from_micros(lat.background_min_us),
            SimTime::from_micros(lat.background_max_us),
        ));
    }
    for i in 0..cfg.population.obi {
        let s = OBI_STREAM + i as u64;
        agents.push(Box::new(ObiAgent::new(cfg.obi.clone(), stream_rng(day_seed, s))));
        latencies.push(LatencyModel::draw_uniform(
            &mut stream_rng(day_seed, LATENCY_STREAM ^ s),
            SimTime::from_micros(lat.obi_min_us),
            SimTime::from_micros(lat.obi_max_us),
        ));
    }
    let n_background = agents.len();
    let (mut exp_agent, exp_label) = match experimental {
        Some(slot) => (Some(slot.agent), slot.label_actions),
        None => (None, false),
    };
    if exp_agent.is_some() {
        latencies.push(SimTime::from_nanos(lat.experimental_ns.max(1)));
    }
    let latency = LatencyModel::new(latencies);
    let n = latency.len();

    let mut classes: Vec<AgentClass> = agents.iter().map(|a| a.class()).collect();
    if let Some(a) = exp_agent.as_ref() {
        classes.push(a.class());
    }
    let mut labels = vec![false; n];
    if exp_agent.is_some() {
        labels[n - 1] = exp_label;
    }
    let mut exchange = Exchange {
        book: OrderBook::new(),
        registry: HashMap::new(),
        cash: vec![0; n],
        position: vec![0; n],
        classes: classes.clone(),
        labels,
        log: ActionLog::new(run, day),
        tick: cfg.tick,
        depth: cfg.snapshot_depth,
        trades: Vec::new(),
    };

    let mut queue: EventQueue<Payload> = EventQueue::new();
    let mut seqs = vec![0u64; n];
    let mut outbox: Vec<Outgoing> = Vec::new();
    let mut trace_rows = trace.then(Vec::new);

    let flush = |q: &mut EventQueue<Payload>, id: AgentId, now: SimTime, outbox: &mut Vec<Outgoing>| {
        for o in outbox.drain(..) {
            match o {
                Outgoing::Exchange(p) => q.schedule(EventMessage {
                    deliver_at: now + latency.latency(id),
                    sender: id,
                    recipient: EXCHANGE_ID,
                    payload: p,
                }),
                Outgoing::WakeAt(t) => q.schedule(EventMessage {
                    deliver_at: t,
                    sender: id,
                    recipient: id,
                    payload: Payload::Wakeup,
                }),
            }
        }
    };

    for id in 0..n {
        let mut ctx = Ctx {
            now: SimTime::ZERO,
            id,
            tick: cfg.tick,
            day_end,
            warmup_end,
            fundamental: &fundamental,
            outbox: &mut outbox,
            next_seq: &mut seqs[id],
        };
        if id < n_background {
            agents[id].start(&mut ctx);
        } else if let Some(a) = exp_agent.as_deref_mut() {
            a.start(&mut ctx);
        }
        flush(&mut queue, id, SimTime::ZERO, &mut outbox);
    }

    let mut replies = Vec::new();
    let events = queue.run_until(day_end, |q, msg| {
        let now = msg.deliver_at;
        if let Some(rows) = trace_rows.as_mut() {
            rows.push(TraceRow {
                time: now,
                sender: msg.sender,
                recipient: msg.recipient,
                kind: msg.payload.kind(),
            });
        }
        if msg.recipient == EXCHANGE_ID {
            exchange.handle(msg, now, &mut replies);
            for (to, p) in replies.drain(..) {
                q.schedule(EventMessage {
                    deliver_at: now + latency.latency(to),
                    sender: EXCHANGE_ID,
                    recipient: to,
                    payload: p,
                });
            }
            return;
        }
        let id = msg.recipient;
        let mut ctx = Ctx {
            now,
            id,
            tick: cfg.tick,
            day_end,
            warmup_end,
            fundamental: &fundamental,
            outbox: &mut outbox,
            next_seq: &mut seqs[id],
        };
        if id < n_background {
            dispatch(agents[id].as_mut(), &msg.payload, &mut ctx);
        } else if let Some(a) = exp_agent.as_deref_mut() {
            dispatch(a, &msg.payload, &mut ctx);
        }
        flush(q, id, now, &mut outbox);
    });

    let close = exchange.mark(fundamental.value_at(day_end));
    if let Some(a) = exp_agent.as_deref_mut() {
        a.on_close(close, day_end);
    }
    let agents_out = (0..n)
        .map(|id| {
            let value = exchange.cash[id] as f64 + exchange.position[id] as f64 * close;
            AgentDay {
                id,
                class: classes[id],
                latency_ns: latency.latency(id).nanos(),
                profit: value / 100.0,
                position: exchange.position[id],
            }
        })
        .collect();

    DayOutcome {
        log: exchange.log,
        agents: agents_out,
        close,
        trades: std::mem::take(&mut exchange.trades),
        events,
        trace: trace_rows,
    }
}
