//! Action logging and the labeled, windowed detector corpus.
//!
//! Every order-related action reaching the exchange becomes an
//! [`ActionRecord`]. Per agent and per day, records are cut into
//! non-overlapping windows of [`WINDOW_LEN`] actions; each window keeps four
//! features per action (type, direction, relative price, quantity).

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::Side;
use crate::kernel::{stream_rng, AgentId, SimTime};

pub const WINDOW_LEN: usize = 20;
pub const N_FEATURES: usize = 4;
pub const WINDOW_WIDTH: usize = WINDOW_LEN * N_FEATURES;

/// Guard against dividing by a zero standard deviation.
pub const STD_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0} partition would contain no positive windows")]
    NoPositives(&'static str),
    #[error("no windows to split")]
    Empty,
    #[error("unknown feature letter {0:?} (expected D, P, Q or T)")]
    BadFeature(char),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("corrupt corpus: {0}")]
    Corrupt(String),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentClass {
    ZeroIntelligence,
    Value,
    Obi,
    Spoofer,
    Experimental,
}

impl AgentClass {
    pub fn name(self) -> &'static str {
        match self {
            AgentClass::ZeroIntelligence => "ZI",
            AgentClass::Value => "Value",
            AgentClass::Obi => "OBI",
            AgentClass::Spoofer => "Spoofer",
            AgentClass::Experimental => "Exper",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionType {
    Order,
    Cancel,
}

/// The four detector-visible fields of one action, before normalization.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAction {
    pub action_type: ActionType,
    pub direction: Side,
    /// Ticks relative to the same-side best; positive is more aggressive.
    pub rel_price: i64,
    pub quantity: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub agent_id: AgentId,
    pub agent_class: AgentClass,
    pub timestamp: SimTime,
    pub action_type: ActionType,
    pub direction: Side,
    pub rel_price: i64,
    pub quantity: u64,
    pub spoofing_label: bool,
}

impl ActionRecord {
    pub fn raw(&self) -> RawAction {
        RawAction {
            action_type: self.action_type,
            direction: self.direction,
            rel_price: self.rel_price,
            quantity: self.quantity,
        }
    }
}

/// Relative price in ticks for an order at `price` on `side`: for buys the
/// distance above the best bid, for sells the distance below the best ask.
/// A missing same-side best falls back to one tick behind the opposite best.
pub fn relative_price(
    side: Side,
    price: i64,
    best_bid: Option<i64>,
    best_ask: Option<i64>,
    tick: i64,
) -> i64 {
    let tick = tick.max(1);
    match side {
        Side::Buy => match best_bid.or(best_ask.map(|a| a - tick)) {
            Some(r) => (price - r) / tick,
            None => 0,
        },
        Side::Sell => match best_ask.or(best_bid.map(|b| b + tick)) {
            Some(r) => (r - price) / tick,
            None => 0,
        },
    }
}

/// All actions recorded during one simulated day.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionLog {
    pub run: u32,
    pub day: u32,
    pub records: Vec<ActionRecord>,
}

impl ActionLog {
    pub fn new(run: u32, day: u32) -> Self {
        Self {
            run,
            day,
            records: Vec::new(),
        }
    }

    pub fn record(&mut self, action: ActionRecord) {
        self.records.push(action);
    }

    pub fn for_agent(&self, agent: AgentId) -> impl Iterator<Item = &ActionRecord> {
        self.records.iter().filter(move |r| r.agent_id == agent)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "run", "day", "agent_id", "agent_class", "timestamp", "action_type", "direction",
            "rel_price", "quantity", "spoofing_label",
        ])?;
        for r in &self.records {
            out.write_record([
                self.run.to_string(),
                self.day.to_string(),
                r.agent_id.to_string(),
                r.agent_class.name().to_string(),
                r.timestamp.nanos().to_string(),
                type_name(r.action_type).to_string(),
                side_name(r.direction).to_string(),
                r.rel_price.to_string(),
                r.quantity.to_string(),
                r.spoofing_label.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn type_name(t: ActionType) -> &'static str {
    match t {
        ActionType::Order => "order",
        ActionType::Cancel => "cancel",
    }
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Buy => "buy",
        Side::Sell => "sell",
    }
}

fn parse_class(s: &str) -> Option<AgentClass> {
    [
        AgentClass::ZeroIntelligence,
        AgentClass::Value,
        AgentClass::Obi,
        AgentClass::Spoofer,
        AgentClass::Experimental,
    ]
    .into_iter()
    .find(|c| c.name() == s)
}

/// Twenty consecutive actions of a single agent within a single day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionWindow {
    pub run: u32,
    pub day: u32,
    pub agent_id: AgentId,
    pub agent_class: AgentClass,
    pub rows: Vec<RawAction>,
    pub label: bool,
}

/// Cuts each agent's day into non-overlapping windows, discarding the
/// remainder. Output order is (log order, agent id, time).
pub fn build_windows(logs: &[ActionLog]) -> Vec<ActionWindow> {
    let mut out = Vec::new();
    for log in logs {
        let mut per_agent: BTreeMap<AgentId, Vec<&ActionRecord>> = BTreeMap::new();
        for r in &log.records {
            per_agent.entry(r.agent_id).or_default().push(r);
        }
        for (agent, recs) in per_agent {
            for chunk in recs.chunks_exact(WINDOW_LEN) {
                out.push(ActionWindow {
                    run: log.run,
                    day: log.day,
                    agent_id: agent,
                    agent_class: chunk[0].agent_class,
                    rows: chunk.iter().map(|r| r.raw()).collect(),
                    label: chunk.iter().any(|r| r.spoofing_label),
                });
            }
        }
    }
    out
}

/// Subset of the four detector features; unused columns are zero-masked so
/// inputs keep their `(20, 4)` shape.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSet {
    pub action_type: bool,
    pub direction: bool,
    pub price: bool,
    pub quantity: bool,
}

impl FeatureSet {
    pub const ALL: FeatureSet = FeatureSet {
        action_type: true,
        direction: true,
        price: true,
        quantity: true,
    };

    /// Direction and action type: the production detector's inputs.
    pub const DT: FeatureSet = FeatureSet {
        action_type: true,
        direction: true,
        price: false,
        quantity: false,
    };

    /// Parses letters from `D`, `P`, `Q`, `T` (e.g. `"DT"`).
    pub fn parse(s: &str) -> Result<Self, DatasetError> {
        let mut f = FeatureSet {
            action_type: false,
            direction: false,
            price: false,
            quantity: false,
        };
        for c in s.chars() {
            match c.to_ascii_uppercase() {
                'D' => f.direction = true,
                'P' => f.price = true,
                'Q' => f.quantity = true,
                'T' => f.action_type = true,
                other => return Err(DatasetError::BadFeature(other)),
            }
        }
        Ok(f)
    }

    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.direction {
            s.push('D');
        }
        if self.price {
            s.push('P');
        }
        if self.quantity {
            s.push('Q');
        }
        if self.action_type {
            s.push('T');
        }
        s
    }

    /// The ten single- and two-feature subsets, in table order.
    pub fn ablation_subsets() -> Vec<FeatureSet> {
        ["D", "P", "Q", "T", "DP", "DQ", "DT", "PQ", "PT", "QT"]
            .iter()
            .map(|s| FeatureSet::parse(s).expect("static labels"))
            .collect()
    }

    fn mask(&self) -> [f64; N_FEATURES] {
        [
            self.action_type as u8 as f64,
            self.direction as u8 as f64,
            self.price as u8 as f64,
            self.quantity as u8 as f64,
        ]
    }
}

/// Standardization statistics for the price and quantity columns.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub price_mean: f64,
    pub price_sd: f64,
    pub qty_mean: f64,
    pub qty_sd: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        Self {
            price_mean: 0.0,
            price_sd: 1.0,
            qty_mean: 0.0,
            qty_sd: 1.0,
        }
    }
}

impl NormStats {
    /// Population mean and standard deviation over every row of the given windows.
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a ActionWindow>) -> Self {
        let (mut n, mut sp, mut sq) = (0f64, 0f64, 0f64);
        let mut rows = Vec::new();
        for w in windows {
            for r in &w.rows {
                n += 1.0;
                sp += r.rel_price as f64;
                sq += r.quantity as f64;
                rows.push((r.rel_price as f64, r.quantity as f64));
            }
        }
        if n == 0.0 {
            return Self::default();
        }
        let (mp, mq) = (sp / n, sq / n);
        let (mut vp, mut vq) = (0.0, 0.0);
        for (p, q) in rows {
            vp += (p - mp) * (p - mp);
            vq += (q - mq) * (q - mq);
        }
        Self {
            price_mean: mp,
            price_sd: (vp / n).sqrt(),
            qty_mean: mq,
            qty_sd: (vq / n).sqrt(),
        }
    }

    /// Encodes one action as `[type, direction, price, quantity]`.
    pub fn encode_row(&self, r: &RawAction) -> [f64; N_FEATURES] {
        [
            match r.action_type {
                ActionType::Order => 0.0,
                ActionType::Cancel => 1.0,
            },
            match r.direction {
                Side::Buy => 1.0,
                Side::Sell => 0.0,
            },
            (r.rel_price as f64 - self.price_mean) / self.price_sd.max(STD_EPS),
            (r.quantity as f64 - self.qty_mean) / self.qty_sd.max(STD_EPS),
        ]
    }

    /// Encodes a full window into a flat `20 × 4` row-major buffer.
    pub fn encode_window(&self, rows: &[RawAction], features: FeatureSet) -> Vec<f64> {
        let mask = features.mask();
        let mut out = Vec::with_capacity(rows.len() * N_FEATURES);
        for r in rows {
            let e = self.encode_row(r);
            out.extend(e.iter().zip(mask).map(|(v, m)| v * m));
        }
        out
    }
}

/// Flat, model-ready examples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Examples {
    /// `n × 80`, row-major.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Examples {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.x[i * WINDOW_WIDTH..(i + 1) * WINDOW_WIDTH]
    }

    pub fn encode(
        windows: &[ActionWindow],
        indices: &[usize],
        stats: &NormStats,
        features: FeatureSet,
    ) -> Self {
        let mut x = Vec::with_capacity(indices.len() * WINDOW_WIDTH);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend(stats.encode_window(&windows[i].rows, features));
            y.push(windows[i].label as u8 as f64);
        }
        Self { x, y }
    }
}

/// Train/validation/test assignment of window indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    /// Training windows after positive-class oversampling (with duplicates).
    pub train: Vec<usize>,
    /// Training windows before oversampling.
    pub train_base: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Fitted on `train_base` only.
    pub stats: NormStats,
    pub seed: u64,
}

pub const TRAIN_FRAC: f64 = 0.64;
pub const VAL_FRAC: f64 = 0.16;

fn stratum_sizes(n: usize) -> (usize, usize) {
    let train = (n as f64 * TRAIN_FRAC).round() as usize;
    let val = ((n as f64 * VAL_FRAC).round() as usize).min(n - train);
    (train, val)
}

/// Oversamples positives (with replacement) until the classes are balanced.
pub fn oversample<R: Rng>(windows: &[ActionWindow], indices: &[usize], rng: &mut R) -> Vec<usize> {
    let pos: Vec<usize> = indices.iter().copied().filter(|&i| windows[i].label).collect();
    let n_neg = indices.len() - pos.len();
    let mut out = indices.to_vec();
    if !pos.is_empty() && pos.len() < n_neg {
        for _ in 0..(n_neg - pos.len()) {
            out.push(pos[rng.gen_range(0..pos.len())]);
        }
    }
    out.shuffle(rng);
    out
}

/// Stratified 64/16/20 split, train-only normalization and oversampling.
pub fn normalize_and_split(windows: &[ActionWindow], seed: u64) -> Result<DatasetSplit, DatasetError> {
    if windows.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut rng = stream_rng(seed, 0x5711);
    let mut pos: Vec<usize> = (0..windows.len()).filter(|&i| windows[i].label).collect();
    let mut neg: Vec<usize> = (0..windows.len()).filter(|&i| !windows[i].label).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let (ptr, pva) = stratum_sizes(pos.len());
    let (ntr, nva) = stratum_sizes(neg.len());
    let mut train_base: Vec<usize> = pos[..ptr].iter().chain(&neg[..ntr]).copied().collect();
    let mut val: Vec<usize> = pos[ptr..ptr + pva].iter().chain(&neg[ntr..ntr + nva]).copied().collect();
    let mut test: Vec<usize> = pos[ptr + pva..].iter().chain(&neg[ntr + nva..]).copied().collect();

    for (name, part) in [("train", &train_base), ("validation", &val), ("test", &test)] {
        if !part.iter().any(|&i| windows[i].label) {
            return Err(DatasetError::NoPositives(name));
        }
    }

    train_base.shuffle(&mut rng);
    val.shuffle(&mut rng);
    test.shuffle(&mut rng);

    let stats = NormStats::fit(train_base.iter().map(|&i| &windows[i]));
    let train = oversample(windows, &train_base, &mut rng);

    Ok(DatasetSplit {
        train,
        train_base,
        val,
        test,
        stats,
        seed,
    })
}

/// Positive count among `indices`.
pub fn positives(windows: &[ActionWindow], indices: &[usize]) -> usize {
    indices.iter().filter(|&&i| windows[i].label).count()
}

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    windows: usize,
    split: Option<DatasetSplit>,
}

/// Writes `corpus.csv` (one row per action, with window id) and `meta.json`
/// (normalization statistics and split assignment) into `dir`.
pub fn write_corpus(
    dir: &Path,
    windows: &[ActionWindow],
    split: Option<&DatasetSplit>,
) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join("corpus.csv"))?;
    let mut out = csv::Writer::from_writer(std::io::BufWriter::new(file));
    out.write_record([
        "window_id", "run", "day", "agent_id", "agent_class", "step", "action_type",
        "direction", "rel_price", "quantity", "label",
    ])?;
    for (id, w) in windows.iter().enumerate() {
        for (step, r) in w.rows.iter().enumerate() {
            out.write_record([
                id.to_string(),
                w.run.to_string(),
                w.day.to_string(),
                w.agent_id.to_string(),
                w.agent_class.name().to_string(),
                step.to_string(),
                type_name(r.action_type).to_string(),
                side_name(r.direction).to_string(),
                r.rel_price.to_string(),
                r.quantity.to_string(),
                w.label.to_string(),
            ])?;
        }
    }
    out.flush()?;
    let meta = CorpusMeta {
        windows: windows.len(),
        split: split.cloned(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<(Vec<ActionWindow>, Option<DatasetSplit>), DatasetError> {
    let mut meta_text = String::new();
    fs::File::open(dir.join("meta.json"))?.read_to_string(&mut meta_text)?;
    let meta: CorpusMeta = serde_json::from_str(&meta_text)?;
    let mut rdr = csv::Reader::from_path(dir.join("corpus.csv"))?;
    let mut windows: Vec<ActionWindow> = Vec::with_capacity(meta.windows);
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |what: &str| DatasetError::Corrupt(format!("bad {what} in row {:?}", rec.position()));
        let id: usize = rec[0].parse().map_err(|_| bad("window_id"))?;
        let row = RawAction {
            action_type: match &rec[6] {
                "order" => ActionType::Order,
                "cancel" => ActionType::Cancel,
                _ => return Err(bad("action_type")),
            },
            direction: match &rec[7] {
                "buy" => Side::Buy,
                "sell" => Side::Sell,
                _ => return Err(bad("direction")),
            },
            rel_price: rec[8].parse().map_err(|_| bad("rel_price"))?,
            quantity: rec[9].parse().map_err(|_| bad("quantity"))?,
        };
        if id == windows.len() {
            windows.push(ActionWindow {
                run: rec[1].parse().map_err(|_| bad("run"))?,
                day: rec[2].parse().map_err(|_| bad("day"))?,
                agent_id: rec[3].parse().map_err(|_| bad("agent_id"))?,
                agent_class: parse_class(&rec[4]).ok_or_else(|| bad("agent_class"))?,
                rows: Vec::with_capacity(WINDOW_LEN),
                label: rec[10].parse().map_err(|_| bad("label"))?,
            });
        } else if id + 1 != windows.len() {
            return Err(bad("window ordering"));
        }
        windows[id].rows.push(row);
    }
    if windows.len() != meta.windows || windows.iter().any(|w| w.rows.len() != WINDOW_LEN) {
        return Err(DatasetError::Corrupt("window count or length mismatch".into()));
    }
    Ok((windows, meta.split))
}
