//! Tabular Q-learning over the trader's 7-bit state and 6-action space.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{TradeAction, TraderState};

const N_STATES: usize = TraderState::COUNT;
const N_ACTIONS: usize = TradeAction::ALL.len();

#[derive(Debug, Error)]
pub enum QError {
    #[error("non-finite reward {0}")]
    NonFiniteReward(f64),
    #[error("q-table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("q-table csv row {row}: {msg}")]
    Parse { row: usize, msg: String },
}

/// Dense state-action value table with per-pair visit counters.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    values: Vec<[f64; N_ACTIONS]>,
    counts: Vec<[u64; N_ACTIONS]>,
}

impl QTable {
    /// Every entry starts at zero except `DN`, which starts at `dn_bias`.
    pub fn new(dn_bias: f64) -> Self {
        let mut row = [0.0; N_ACTIONS];
        row[TradeAction::DN.index()] = dn_bias;
        Self {
            values: vec![row; N_STATES],
            counts: vec![[0; N_ACTIONS]; N_STATES],
        }
    }

    pub fn get(&self, s: &TraderState, a: TradeAction) -> f64 {
        self.values[s.key() as usize][a.index()]
    }

    pub fn set(&mut self, s: &TraderState, a: TradeAction, v: f64) {
        self.values[s.key() as usize][a.index()] = v;
    }

    pub fn count(&self, s: &TraderState, a: TradeAction) -> u64 {
        self.counts[s.key() as usize][a.index()]
    }

    /// Q values of `actions` in state `s`, in the given order.
    pub fn row(&self, s: &TraderState, actions: &[TradeAction]) -> Vec<f64> {
        let r = &self.values[s.key() as usize];
        actions.iter().map(|a| r[a.index()]).collect()
    }

    pub fn max_value(&self, s: &TraderState, actions: &[TradeAction]) -> f64 {
        self.row(s, actions)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the earliest action in `actions`.
    pub fn argmax(&self, s: &TraderState, actions: &[TradeAction]) -> TradeAction {
        argmax_first(&self.row(s, actions)).map_or(TradeAction::DN, |i| actions[i])
    }

    /// One Q-learning step with learning rate `max(0.1, 1/c(s,a))`.
    pub fn update(
        &mut self,
        s: &TraderState,
        a: TradeAction,
        reward: f64,
        next: Option<&TraderState>,
        gamma: f64,
        actions: &[TradeAction],
    ) -> Result<(), QError> {
        if !reward.is_finite() {
            return Err(QError::NonFiniteReward(reward));
        }
        let (si, ai) = (s.key() as usize, a.index());
        self.counts[si][ai] += 1;
        let alpha = learning_rate(self.counts[si][ai]);
        let bootstrap = next.map_or(0.0, |n| gamma * self.max_value(n, actions));
        let q = &mut self.values[si][ai];
        *q += alpha * (reward + bootstrap - *q);
        Ok(())
    }

    /// CSV with columns `state,action,value,count`; one row per pair.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), QError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["state", "action", "value", "count"])?;
        for k in 0..N_STATES {
            let s = TraderState::from_key(k as u8);
            for a in TradeAction::ALL {
                out.write_record([
                    s.bits(),
                    a.name().to_string(),
                    format!("{:?}", self.values[k][a.index()]),
                    self.counts[k][a.index()].to_string(),
                ])?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, QError> {
        let mut table = QTable::new(0.0);
        let mut rdr = csv::Reader::from_reader(r);
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let err = |msg: String| QError::Parse { row, msg };
            if rec.len() != 4 {
                return Err(err(format!("expected 4 fields, got {}", rec.len())));
            }
            let key = u8::from_str_radix(&rec[0], 2).map_err(|e| err(e.to_string()))?;
            if key as usize >= N_STATES {
                return Err(err(format!("state {} out of range", &rec[0])));
            }
            let a: TradeAction = rec[1].parse().map_err(err)?;
            let v: f64 = rec[2].parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?;
            let c: u64 = rec[3].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?;
            table.values[key as usize][a.index()] = v;
            table.counts[key as usize][a.index()] = c;
        }
        Ok(table)
    }
}

pub fn learning_rate(count: u64) -> f64 {
    (1.0 / count.max(1) as f64).max(0.1)
}

fn argmax_first(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some(b) if xs[b] >= x => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Softmax with max-subtraction. Returns probabilities in input order.
pub fn boltzmann(q: &[f64]) -> Vec<f64> {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Samples an index from a probability vector by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// How ε evolves under ε-greedy exploration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EpsilonSchedule {
    /// Fixed ε; `1.0` is all-random exploration.
    Constant { epsilon: f64 },
    /// Linear per-day decline from `start` to `end` over `days` training days.
    Step { start: f64, end: f64, days: u32 },
    /// Geometric decay per decision.
    Decay { start: f64, rate: f64 },
}

impl EpsilonSchedule {
    pub fn epsilon(&self, day: u32, decisions: u64) -> f64 {
        let e = match *self {
            EpsilonSchedule::Constant { epsilon } => epsilon,
            EpsilonSchedule::Step { start, end, days } => {
                if days <= 1 {
                    end
                } else {
                    let frac = (day.min(days - 1)) as f64 / (days - 1) as f64;
                    start + (end - start) * frac
                }
            }
            EpsilonSchedule::Decay { start, rate } => start * rate.powf(decisions as f64),
        };
        e.clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExplorationStrategy {
    EpsilonGreedy { schedule: EpsilonSchedule },
    /// Softmax over Q values; `scaled` rewards are multiplied by the
    /// learner's reward scale before every update.
    Boltzmann { scaled: bool },
}

impl ExplorationStrategy {
    pub fn epsilon_random() -> Self {
        ExplorationStrategy::EpsilonGreedy {
            schedule: EpsilonSchedule::Constant { epsilon: 1.0 },
        }
    }
    pub fn epsilon_step(days: u32) -> Self {
        ExplorationStrategy::EpsilonGreedy {
            schedule: EpsilonSchedule::Step {
                start: 1.0,
                end: 0.1,
                days,
            },
        }
    }
    pub fn epsilon_decay() -> Self {
        ExplorationStrategy::EpsilonGreedy {
            schedule: EpsilonSchedule::Decay {
                start: 1.0,
                rate: 0.9995,
            },
        }
    }
    pub fn boltzmann_raw() -> Self {
        ExplorationStrategy::Boltzmann { scaled: false }
    }
    pub fn boltzmann_scaled() -> Self {
        ExplorationStrategy::Boltzmann { scaled: true }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ExplorationStrategy::EpsilonGreedy { schedule } => match schedule {
                EpsilonSchedule::Constant { .. } => "epsilon-greedy random",
                EpsilonSchedule::Step { .. } => "epsilon-greedy step",
                EpsilonSchedule::Decay { .. } => "epsilon-greedy decay",
            },
            ExplorationStrategy::Boltzmann { scaled: false } => "boltzmann r-raw",
            ExplorationStrategy::Boltzmann { scaled: true } => "boltzmann r-scaled",
        }
    }
}

/// Chooses an action during training.
///
/// `day` and `decisions` feed the ε schedule; `exponent_weights`, when given,
/// multiplies each action's Q value inside the softmax exponent (used for
/// detector-guided reranking).
pub fn select_action<R: Rng + ?Sized>(
    state: &TraderState,
    table: &QTable,
    strategy: &ExplorationStrategy,
    actions: &[TradeAction],
    day: u32,
    decisions: u64,
    exponent_weights: Option<&[f64]>,
    rng: &mut R,
) -> TradeAction {
    match strategy {
        ExplorationStrategy::EpsilonGreedy { schedule } => {
            let eps = schedule.epsilon(day, decisions);
            if rng.gen::<f64>() < eps {
                actions[rng.gen_range(0..actions.len())]
            } else {
                greedy(state, table, actions, exponent_weights)
            }
        }
        ExplorationStrategy::Boltzmann { .. } => {
            let mut q = table.row(state, actions);
            if let Some(w) = exponent_weights {
                for (v, w) in q.iter_mut().zip(w) {
                    *v *= w;
                }
            }
            actions[sample_index(&boltzmann(&q), rng)]
        }
    }
}

/// Greedy choice, optionally over weighted values `Q·w`.
pub fn greedy(
    state: &TraderState,
    table: &QTable,
    actions: &[TradeAction],
    exponent_weights: Option<&[f64]>,
) -> TradeAction {
    let mut q = table.row(state, actions);
    if let Some(w) = exponent_weights {
        for (v, w) in q.iter_mut().zip(w) {
            *v *= w;
        }
    }
    argmax_first(&q).map_or(TradeAction::DN, |i| actions[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn learning_rate_schedule() {
        assert_eq!(learning_rate(1), 1.0);
        assert_eq!(learning_rate(2), 0.5);
        assert_eq!(learning_rate(10), 0.1);
        assert_eq!(learning_rate(20), 0.1);
    }

    #[test]
    fn myopic_update_with_unit_rate_copies_reward() {
        let mut t = QTable::new(0.0);
        let s = TraderState::default();
        t.update(&s, TradeAction::AG, 3.25, Some(&s), 0.0, &TradeAction::ALL)
            .unwrap();
        assert_eq!(t.get(&s, TradeAction::AG), 3.25);
        assert_eq!(t.count(&s, TradeAction::AG), 1);
    }

    #[test]
    fn non_finite_reward_is_rejected() {
        let mut t = QTable::new(0.0);
        let s = TraderState::default();
        assert!(t
            .update(&s, TradeAction::AG, f64::NAN, None, 0.9, &TradeAction::ALL)
            .is_err());
    }

    #[test]
    fn dn_bias_applies_to_every_state() {
        let t = QTable::new(1.0);
        for k in 0..128 {
            let s = TraderState::from_key(k);
            assert_eq!(t.get(&s, TradeAction::DN), 1.0);
            assert_eq!(t.get(&s, TradeAction::AG), 0.0);
            assert_eq!(t.argmax(&s, &TradeAction::ALL), TradeAction::DN);
        }
    }

    #[test]
    fn boltzmann_closed_forms() {
        let p = boltzmann(&[0.0, 0.0, 0.0]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = boltzmann(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
        let p = boltzmann(&[1000.0, 0.0]);
        assert!(p[0].is_finite() && (p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_epsilon_is_greedy() {
        let mut t = QTable::new(0.0);
        let s = TraderState::default();
        t.set(&s, TradeAction::EX, 2.0);
        let strat = ExplorationStrategy::EpsilonGreedy {
            schedule: EpsilonSchedule::Constant { epsilon: 0.0 },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = select_action(&s, &t, &strat, &TradeAction::ALL, 0, 0, None, &mut rng);
            assert_eq!(a, TradeAction::EX);
        }
    }

    #[test]
    fn greedy_ties_break_to_canonical_order() {
        let t = QTable::new(0.0);
        let s = TraderState::default();
        assert_eq!(t.argmax(&s, &TradeAction::ALL), TradeAction::AG);
        assert_eq!(t.argmax(&s, &[TradeAction::EX, TradeAction::DN]), TradeAction::EX);
    }

    #[test]
    fn epsilon_schedules() {
        let step = EpsilonSchedule::Step {
            start: 1.0,
            end: 0.1,
            days: 10,
        };
        assert_eq!(step.epsilon(0, 0), 1.0);
        assert!((step.epsilon(9, 0) - 0.1).abs() < 1e-12);
        assert!((step.epsilon(20, 0) - 0.1).abs() < 1e-12);
        let decay = EpsilonSchedule::Decay {
            start: 1.0,
            rate: 0.5,
        };
        assert_eq!(decay.epsilon(0, 2), 0.25);
    }

    #[test]
    fn restricted_selection_stays_in_set() {
        let t = QTable::new(0.0);
        let s = TraderState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = select_action(
                &s,
                &t,
                &ExplorationStrategy::epsilon_random(),
                &TradeAction::RESTRICTED,
                0,
                0,
                None,
                &mut rng,
            );
            assert!(TradeAction::RESTRICTED.contains(&a));
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = QTable::new(1.0);
        let s = TraderState::from_key(77);
        t.update(&s, TradeAction::UP, 0.1 + 0.2, Some(&s), 0.99, &TradeAction::ALL)
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = QTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }
}
