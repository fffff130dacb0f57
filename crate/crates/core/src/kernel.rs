//! Deterministic discrete-event engine.
//!
//! A single global nanosecond clock drives a priority queue of timestamped
//! messages. Messages with equal delivery times are handed out in the order
//! they were scheduled, so a run is fully determined by its inputs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Index of an agent inside a simulation. The exchange uses [`EXCHANGE_ID`].
pub type AgentId = usize;

/// Recipient id reserved for the exchange.
pub const EXCHANGE_ID: AgentId = usize::MAX;

/// Nanoseconds since market open.
#[derive(
    Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(n: u64) -> Self {
        SimTime(n)
    }
    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }
    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }
    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s.max(0.0) * 1e9).round() as u64)
    }
    pub const fn nanos(self) -> u64 {
        self.0
    }
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }
    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// A timestamped message travelling between two agents (or an agent and the
/// exchange).
#[derive(Clone, Debug, PartialEq)]
pub struct EventMessage<P> {
    pub deliver_at: SimTime,
    pub sender: AgentId,
    pub recipient: AgentId,
    pub payload: P,
}

struct Entry<P> {
    seq: u64,
    msg: EventMessage<P>,
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.msg.deliver_at == other.msg.deliver_at && self.seq == other.seq
    }
}
impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .msg
            .deliver_at
            .cmp(&self.msg.deliver_at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Priority queue of messages ordered by `(deliver_at, insertion sequence)`.
pub struct EventQueue<P> {
    heap: BinaryHeap<Entry<P>>,
    seq: u64,
    clock: SimTime,
    latest_seen: SimTime,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
            clock: SimTime::ZERO,
            latest_seen: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueue a message.
    ///
    /// # Panics
    ///
    /// Scheduling before the current clock is a logic error in the caller and
    /// aborts the run.
    pub fn schedule(&mut self, msg: EventMessage<P>) {
        assert!(
            msg.deliver_at >= self.clock,
            "message scheduled in the past: deliver_at={} clock={}",
            msg.deliver_at,
            self.clock
        );
        self.latest_seen = self.latest_seen.max(msg.deliver_at);
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Entry { seq, msg });
    }

    /// Removes the next message if it is due at or before `end`, advancing
    /// the clock to its delivery time.
    pub fn pop_due(&mut self, end: SimTime) -> Option<EventMessage<P>> {
        match self.heap.peek() {
            Some(e) if e.msg.deliver_at <= end => {
                let e = self.heap.pop().expect("peeked");
                self.clock = e.msg.deliver_at;
                Some(e.msg)
            }
            _ => None,
        }
    }

    /// Processes every message due at or before `end` in order and returns
    /// the number processed. The handler may schedule further messages.
    pub fn run_until<F>(&mut self, end: SimTime, mut handle: F) -> usize
    where
        F: FnMut(&mut Self, EventMessage<P>),
    {
        let mut processed = 0;
        while let Some(msg) = self.pop_due(end) {
            handle(self, msg);
            processed += 1;
        }
        let horizon = end.min(self.latest_seen);
        if horizon > self.clock {
            self.clock = horizon;
        }
        processed
    }
}

/// One-way latency between each agent and the exchange.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    latencies: Vec<SimTime>,
}

impl LatencyModel {
    pub fn new(latencies: Vec<SimTime>) -> Self {
        assert!(
            latencies.iter().all(|l| l.0 > 0),
            "every agent needs a positive latency"
        );
        Self { latencies }
    }

    pub fn latency(&self, agent: AgentId) -> SimTime {
        self.latencies[agent]
    }

    pub fn len(&self) -> usize {
        self.latencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latencies.is_empty()
    }

    pub fn min(&self) -> Option<SimTime> {
        self.latencies.iter().copied().min()
    }

    /// Uniform draw in `[lo, hi]` nanoseconds.
    pub fn draw_uniform<R: Rng>(rng: &mut R, lo: SimTime, hi: SimTime) -> SimTime {
        if hi.0 <= lo.0 {
            return lo;
        }
        SimTime(rng.gen_range(lo.0..=hi.0))
    }
}

/// Mixes a master seed with a stream id (SplitMix64 finalizer), so each agent
/// gets an independent stream regardless of how many other agents exist.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(t: u64, tag: u32) -> EventMessage<u32> {
        EventMessage {
            deliver_at: SimTime(t),
            sender: 0,
            recipient: 1,
            payload: tag,
        }
    }

    #[test]
    fn earlier_messages_pop_first() {
        let mut q = EventQueue::new();
        q.schedule(msg(5, 1));
        q.schedule(msg(3, 2));
        let mut order = vec![];
        q.run_until(SimTime(10), |_, m| order.push(m.deliver_at.0));
        assert_eq!(order, vec![3, 5]);
    }

    #[test]
    fn equal_times_are_fifo() {
        let mut q = EventQueue::new();
        for tag in 0..5 {
            q.schedule(msg(7, tag));
        }
        let mut order = vec![];
        q.run_until(SimTime(7), |_, m| order.push(m.payload));
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_queue_processes_nothing() {
        let mut q: EventQueue<u32> = EventQueue::new();
        assert_eq!(q.run_until(SimTime(100), |_, _| {}), 0);
        assert_eq!(q.now(), SimTime::ZERO);
    }

    #[test]
    fn wakeup_inside_horizon_is_processed_and_clock_stops_at_end() {
        let mut q = EventQueue::new();
        q.schedule(msg(50, 0));
        q.schedule(msg(500, 1));
        assert_eq!(q.run_until(SimTime(100), |_, _| {}), 1);
        assert_eq!(q.now(), SimTime(100));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn clock_stops_at_last_event_when_queue_drains() {
        let mut q = EventQueue::new();
        q.schedule(msg(40, 0));
        q.run_until(SimTime(100), |_, _| {});
        assert_eq!(q.now(), SimTime(40));
    }

    #[test]
    fn handler_can_schedule_follow_ups() {
        let mut q = EventQueue::new();
        q.schedule(msg(1, 0));
        let n = q.run_until(SimTime(100), |q, m| {
            if m.payload < 3 {
                let mut next = m.clone();
                next.deliver_at = m.deliver_at + SimTime(10);
                next.payload += 1;
                q.schedule(next);
            }
        });
        assert_eq!(n, 4);
        assert_eq!(q.now(), SimTime(31));
    }

    #[test]
    #[should_panic(expected = "scheduled in the past")]
    fn scheduling_in_the_past_panics() {
        let mut q = EventQueue::new();
        q.schedule(msg(10, 0));
        q.run_until(SimTime(10), |_, _| {});
        q.schedule(msg(5, 1));
    }

    #[test]
    fn co_located_latency_delays_delivery() {
        let lat = LatencyModel::new(vec![SimTime::from_nanos(33), SimTime::from_micros(21)]);
        let mut q = EventQueue::new();
        let sent = SimTime(1_000);
        q.schedule(EventMessage {
            deliver_at: sent + lat.latency(0),
            sender: 0,
            recipient: EXCHANGE_ID,
            payload: (),
        });
        let mut got = None;
        q.run_until(SimTime(u64::MAX), |_, m| got = Some(m.deliver_at));
        assert_eq!(got, Some(SimTime(1_033)));
        assert_eq!(lat.min(), Some(SimTime(33)));
    }

    #[test]
    fn derived_seeds_differ_per_stream() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
