//! Detector-driven guidance for the Q-learning trader: reward shaping and
//! Boltzmann action reranking over a rolling history of visible actions.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::Side;
use crate::dataset::{ActionType, RawAction, WINDOW_LEN};
use crate::detector::SequenceClassifier;
use crate::policy::TradeAction;
use crate::qlearn::boltzmann;

#[derive(Debug, Error, PartialEq)]
pub enum GuidanceError {
    #[error("theta {0} outside [0, 1]")]
    ThetaRange(f64),
    #[error("{q} q values but {theta} thetas")]
    Length { q: usize, theta: usize },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceMode {
    /// `sh`: scale profitable closing rewards by `1 − θ`.
    RewardShaping,
    /// `rr`: scale each action's softmax exponent by `1 − θ` of the
    /// history it would produce.
    ActionReranking,
}

impl GuidanceMode {
    pub fn tag(self) -> &'static str {
        match self {
            GuidanceMode::RewardShaping => "sh",
            GuidanceMode::ActionReranking => "rr",
        }
    }
}

fn check_theta(theta: f64) -> Result<(), GuidanceError> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(GuidanceError::ThetaRange(theta))
    }
}

/// `r · (1 − θ)`.
pub fn shape_reward(r: f64, theta: f64) -> Result<f64, GuidanceError> {
    check_theta(theta)?;
    Ok(r * (1.0 - theta))
}

/// Selection probabilities `softmax(Q_j · (1 − θ_j))`.
pub fn rerank(q: &[f64], thetas: &[f64]) -> Result<Vec<f64>, GuidanceError> {
    if q.len() != thetas.len() {
        return Err(GuidanceError::Length {
            q: q.len(),
            theta: thetas.len(),
        });
    }
    for &t in thetas {
        check_theta(t)?;
    }
    let scaled: Vec<f64> = q.iter().zip(thetas).map(|(q, t)| q * (1.0 - t)).collect();
    Ok(boltzmann(&scaled))
}

/// The last 20 exchange-visible actions of one agent. Not cleared between days.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActionHistory {
    rows: VecDeque<RawAction>,
}

impl ActionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: RawAction) {
        if self.rows.len() == WINDOW_LEN {
            self.rows.pop_front();
        }
        self.rows.push_back(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = RawAction>) {
        for r in rows {
            self.push(r);
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == WINDOW_LEN
    }

    pub fn rows(&self) -> impl Iterator<Item = &RawAction> {
        self.rows.iter()
    }

    /// Detector activation of the current history; 0 until 20 actions exist.
    pub fn theta(&self, model: &SequenceClassifier) -> f64 {
        if !self.is_full() {
            return 0.0;
        }
        let rows: Vec<RawAction> = self.rows.iter().copied().collect();
        model.theta_raw(&rows).unwrap_or(0.0)
    }

    /// Activation of the history with `candidate` appended as the newest row.
    /// Without a candidate row the history itself is scored.
    pub fn tentative_theta(&self, model: &SequenceClassifier, candidate: Option<RawAction>) -> f64 {
        let Some(row) = candidate else {
            return self.theta(model);
        };
        if self.rows.len() < WINDOW_LEN - 1 {
            return 0.0;
        }
        let mut rows: Vec<RawAction> = self.rows.iter().skip(self.rows.len() + 1 - WINDOW_LEN).copied().collect();
        rows.push(row);
        model.theta_raw(&rows).unwrap_or(0.0)
    }
}

/// What the trader would send for each action, already in relative ticks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VisibleContext {
    /// Currently open orders, as the order rows originally sent.
    pub open_orders: Vec<RawAction>,
    pub aggressive_rel: i64,
    pub passive_rel: i64,
    pub position_size: u64,
    pub passive_size: u64,
    /// Passive size after the open orders are cancelled, used by UP.
    pub replace_size: u64,
    pub holdings: u64,
}

/// Decomposes an action into the order and cancel rows the exchange would see.
pub fn visible_encode(action: TradeAction, ctx: &VisibleContext) -> Vec<RawAction> {
    let cancels = || {
        ctx.open_orders.iter().map(|o| RawAction {
            action_type: ActionType::Cancel,
            ..*o
        })
    };
    let passive = RawAction {
        action_type: ActionType::Order,
        direction: Side::Buy,
        rel_price: ctx.passive_rel,
        quantity: ctx.passive_size,
    };
    match action {
        TradeAction::AG if ctx.position_size > 0 => vec![RawAction {
            action_type: ActionType::Order,
            direction: Side::Buy,
            rel_price: ctx.aggressive_rel,
            quantity: ctx.position_size,
        }],
        TradeAction::AG => Vec::new(),
        TradeAction::PS if ctx.passive_size > 0 => vec![passive],
        TradeAction::PS => Vec::new(),
        TradeAction::EX if ctx.holdings > 0 => vec![RawAction {
            action_type: ActionType::Order,
            direction: Side::Sell,
            rel_price: ctx.aggressive_rel,
            quantity: ctx.holdings,
        }],
        TradeAction::EX => Vec::new(),
        TradeAction::CN => cancels().collect(),
        TradeAction::UP => cancels()
            .chain((ctx.replace_size > 0).then_some(RawAction {
                quantity: ctx.replace_size,
                ..passive
            }))
            .collect(),
        TradeAction::DN => Vec::new(),
    }
}

/// Per-candidate θ for reranking: each action's first visible row is tried
/// as the newest history entry.
pub fn candidate_thetas(
    actions: &[TradeAction],
    history: &ActionHistory,
    ctx: &VisibleContext,
    model: &SequenceClassifier,
) -> Vec<f64> {
    actions
        .iter()
        .map(|&a| history.tentative_theta(model, visible_encode(a, ctx).first().copied()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSet, NormStats};
    use crate::detector::Architecture;
    use proptest::prelude::*;

    fn row(t: ActionType) -> RawAction {
        RawAction {
            action_type: t,
            direction: Side::Buy,
            rel_price: -5,
            quantity: 1000,
        }
    }

    #[test]
    fn shaping_limbs() {
        assert_eq!(shape_reward(100.0, 0.0).unwrap(), 100.0);
        assert_eq!(shape_reward(100.0, 1.0).unwrap(), 0.0);
        assert!((shape_reward(100.0, 0.842).unwrap() - 15.8).abs() < 1e-9);
        assert_eq!(shape_reward(1.0, 1.5), Err(GuidanceError::ThetaRange(1.5)));
        assert!(shape_reward(1.0, f64::NAN).is_err());
    }

    #[test]
    fn rerank_two_action_closed_form() {
        let p = rerank(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-12);
        assert!((p[0] - 0.269).abs() < 5e-4 && (p[1] - 0.731).abs() < 5e-4);
    }

    #[test]
    fn rerank_rejects_mismatched_lengths() {
        assert!(matches!(rerank(&[1.0], &[0.0, 0.0]), Err(GuidanceError::Length { .. })));
    }

    #[test]
    fn flagged_positive_q_loses_probability() {
        let grid = [0.1, 0.5, 1.0, 3.0];
        for &q0 in &grid {
            for &q1 in &[-1.0, 0.0, 2.0] {
                let base = rerank(&[q0, q1], &[0.0, 0.3]).unwrap();
                for &t in &[0.2, 0.6, 1.0] {
                    let flagged = rerank(&[q0, q1], &[t, 0.3]).unwrap();
                    assert!(flagged[0] < base[0], "q0={q0} q1={q1} t={t}");
                }
            }
        }
    }

    #[test]
    fn history_is_bounded_and_scores_zero_until_full() {
        let model = SequenceClassifier::new(Architecture::TemporalCnn, FeatureSet::DT, NormStats::default(), 1);
        let mut h = ActionHistory::new();
        for i in 0..19 {
            h.push(row(ActionType::Order));
            assert_eq!(h.len(), i + 1);
            assert_eq!(h.theta(&model), 0.0);
        }
        assert!(h.tentative_theta(&model, Some(row(ActionType::Cancel))) > 0.0);
        h.extend(vec![row(ActionType::Cancel); 30]);
        assert_eq!(h.len(), WINDOW_LEN);
        assert!(h.rows().all(|r| r.action_type == ActionType::Cancel));
        assert!(h.theta(&model) > 0.0);
    }

    #[test]
    fn tentative_drops_the_oldest_row() {
        let model = SequenceClassifier::new(Architecture::FeedForward, FeatureSet::ALL, NormStats::default(), 4);
        let mut h = ActionHistory::new();
        h.push(row(ActionType::Cancel));
        h.extend(vec![row(ActionType::Order); 19]);
        let mut expected: Vec<RawAction> = vec![row(ActionType::Order); 19];
        expected.push(row(ActionType::Cancel));
        let direct = model.theta_raw(&expected).unwrap();
        assert_eq!(h.tentative_theta(&model, Some(row(ActionType::Cancel))), direct);
        assert_eq!(h.tentative_theta(&model, None), h.theta(&model));
    }

    #[test]
    fn visible_rows_per_action() {
        let ctx = VisibleContext {
            open_orders: vec![RawAction {
                action_type: ActionType::Order,
                direction: Side::Buy,
                rel_price: -5,
                quantity: 1000,
            }],
            aggressive_rel: 3,
            passive_rel: -5,
            position_size: 100,
            passive_size: 1000,
            replace_size: 1000,
            holdings: 100,
        };
        assert!(visible_encode(TradeAction::DN, &ctx).is_empty());
        let up = visible_encode(TradeAction::UP, &ctx);
        assert_eq!(up.len(), 2);
        assert_eq!(up[0].action_type, ActionType::Cancel);
        assert_eq!(up[1].action_type, ActionType::Order);
        let ag = visible_encode(TradeAction::AG, &ctx);
        assert_eq!(ag.len(), 1);
        assert_eq!((ag[0].direction, ag[0].rel_price), (Side::Buy, 3));
        assert_eq!(visible_encode(TradeAction::CN, &ctx).len(), 1);
        assert_eq!(visible_encode(TradeAction::EX, &ctx)[0].direction, Side::Sell);
        let flat = VisibleContext { holdings: 0, ..ctx };
        assert!(visible_encode(TradeAction::EX, &flat).is_empty());
    }

    proptest! {
        #[test]
        fn rerank_normalizes_and_reduces_to_softmax(q in proptest::collection::vec(-30.0f64..30.0, 1..7)) {
            let zeros = vec![0.0; q.len()];
            let p = rerank(&q, &zeros).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            let b = boltzmann(&q);
            for (a, b) in p.iter().zip(&b) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn shaping_is_monotone_for_positive_rewards(r in 0.0f64..1e6, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(shape_reward(r, hi).unwrap() <= shape_reward(r, lo).unwrap());
        }
    }
}
