//! State predicates and fixed trading policies for the experimental trader.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::book::{BookSnapshot, Side};

/// The seven boolean market/agent conditions the trader observes.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraderState {
    /// Holdings: long a position.
    pub h: bool,
    /// Holdings advantage: entry advantage held when the position was acquired.
    pub ha: bool,
    /// Entry advantage: estimated entry cost below the reasonable price.
    pub ea: bool,
    /// Exit advantage: estimated exit gain above the profit target.
    pub xa: bool,
    /// Stop loss: estimated exit loss above the maximum permitted loss.
    pub sl: bool,
    /// Open, unfilled orders exist.
    pub op: bool,
    /// The market moved since an unfilled order was placed.
    pub dp: bool,
}

impl TraderState {
    pub const COUNT: usize = 128;

    /// Packs the predicates into a 7-bit key in the order H, HA, EA, XA, SL, OP, DP
    /// (H is the most significant bit).
    pub fn key(&self) -> u8 {
        [self.h, self.ha, self.ea, self.xa, self.sl, self.op, self.dp]
            .iter()
            .fold(0u8, |acc, &b| (acc << 1) | b as u8)
    }

    pub fn from_key(key: u8) -> Self {
        let bit = |i: u8| (key >> (6 - i)) & 1 == 1;
        TraderState {
            h: bit(0),
            ha: bit(1),
            ea: bit(2),
            xa: bit(3),
            sl: bit(4),
            op: bit(5),
            dp: bit(6),
        }
    }

    pub fn bits(&self) -> String {
        format!("{:07b}", self.key())
    }
}

/// Experimental trader action space.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TradeAction {
    /// Aggressive entry: buy the position size at whatever is available.
    AG,
    /// Passive entry: resting bid below the best bid.
    PS,
    /// Exit: sell all holdings.
    EX,
    /// Cancel all open orders.
    CN,
    /// Cancel open orders then place a fresh passive entry.
    UP,
    /// Do nothing.
    DN,
}

impl TradeAction {
    /// Canonical order; also the tie-break order for greedy selection.
    pub const ALL: [TradeAction; 6] = [
        TradeAction::AG,
        TradeAction::PS,
        TradeAction::EX,
        TradeAction::CN,
        TradeAction::UP,
        TradeAction::DN,
    ];

    pub const RESTRICTED: [TradeAction; 3] = [TradeAction::AG, TradeAction::EX, TradeAction::DN];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TradeAction::AG => "AG",
            TradeAction::PS => "PS",
            TradeAction::EX => "EX",
            TradeAction::CN => "CN",
            TradeAction::UP => "UP",
            TradeAction::DN => "DN",
        }
    }
}

impl fmt::Display for TradeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TradeAction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

/// What the trader knows about itself when evaluating its state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PortfolioView {
    pub holdings: u64,
    /// Average cost of the current holdings, cents per share.
    pub avg_cost: f64,
    pub open_orders: usize,
    /// Entry advantage latched when the current position was acquired.
    pub entry_advantage_at_fill: bool,
    /// Whether the best bid moved since any open order was placed.
    pub moved_since_placement: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateParams {
    pub position_size: u64,
    /// Cents per share.
    pub profit_target: f64,
    /// Cents per share.
    pub max_loss: f64,
    /// Reference price for entry advantage, cents.
    pub reasonable_price: f64,
}

pub fn eval_state(snapshot: &BookSnapshot, view: &PortfolioView, params: &StateParams) -> TraderState {
    let h = view.holdings > 0;
    let ea = snapshot
        .walk(Side::Sell, params.position_size)
        .is_some_and(|cost| cost < params.reasonable_price);
    let (xa, sl) = if h {
        match snapshot.walk(Side::Buy, view.holdings) {
            Some(exit) => {
                let gain = exit - view.avg_cost;
                (gain > params.profit_target, -gain > params.max_loss)
            }
            None => (false, false),
        }
    } else {
        (false, false)
    };
    let op = view.open_orders > 0;
    TraderState {
        h,
        ha: h && view.entry_advantage_at_fill,
        ea,
        xa,
        sl,
        op,
        dp: op && view.moved_since_placement,
    }
}

/// Honest fixed policy: first matching row wins.
pub fn pi_h(s: &TraderState) -> TradeAction {
    if !s.h && s.ea && !s.op {
        TradeAction::AG
    } else if s.h && s.xa && !s.op {
        TradeAction::EX
    } else if s.op {
        TradeAction::CN
    } else {
        TradeAction::DN
    }
}

/// Spoofing fixed policy: first matching row wins.
pub fn pi_s(s: &TraderState) -> TradeAction {
    let exit = s.xa || s.sl;
    if !s.h && s.ea && !s.op {
        TradeAction::AG
    } else if s.h && !exit && !s.op {
        TradeAction::PS
    } else if s.h && exit {
        TradeAction::EX
    } else if !s.h && s.op {
        TradeAction::CN
    } else if s.h && !exit && s.dp {
        TradeAction::UP
    } else {
        TradeAction::DN
    }
}
