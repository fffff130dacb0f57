//! Experiment stages and the end-to-end ladder: spoofing sweep, corpus
//! synthesis, detector training and ablation, fixed policies, restricted and
//! unconstrained learners, and detector-guided learners.
//!
//! Every stage writes into its own directory under the scenario's output
//! directory:
//!
//! * `agents.csv`: one row per agent per simulated day
//! * `actions.csv`: the experimental agent's evaluation-day actions
//! * `theta.csv`: detector activation per 20-action window of those actions

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::Qty;
use crate::dataset::{
    build_windows, normalize_and_split, positives, read_corpus, write_corpus, ActionRecord, ActionType, ActionWindow,
    AgentClass, DatasetError, DatasetSplit, Examples, FeatureSet, RawAction, WINDOW_LEN,
};
use crate::detector::{
    ablation_study, evaluate, train, write_ablation_csv, AblationRow, Architecture, DetectorError, EpochStats, Metrics,
    SequenceClassifier, TrainError,
};
use crate::guidance::GuidanceMode;
use crate::kernel::derive_seed;
use crate::market::{run_day, write_tape, write_trace, AgentDay, ExperimentalSlot, MarketConfig};
use crate::qlearn::ExplorationStrategy;
use crate::scenario::{Scenario, ScenarioError};
use crate::spoof::{SpoofAgent, SpoofConfig};
use crate::trader::{Controller, FixedPolicy, LearnerConfig, Trader, TraderConfig};

pub const SIMULATE: &str = "simulate";
pub const SWEEP: &str = "sweep";
pub const SYNTHESIS: &str = "synthesis";
pub const DETECTOR: &str = "detector";
pub const ABLATION: &str = "ablation";
pub const FIXED: &str = "fixed";
pub const RESTRICTED: &str = "q-restricted";
pub const UNCONSTRAINED: &str = "q-unconstrained";
pub const NORMATIVE: &str = "q-normative";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("training: {0}")]
    Train(#[from] TrainError),
    #[error("detector: {0}")]
    Detector(#[from] DetectorError),
    #[error("q-table: {0}")]
    QTable(#[from] crate::qlearn::QError),
    #[error("{0}")]
    Other(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ExperimentError>,
    },
}

impl ExperimentError {
    /// Tags an error with the stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ ExperimentError::Stage { .. } => e,
            e => ExperimentError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub fn is_config(&self) -> bool {
        match self {
            ExperimentError::Scenario(_) => true,
            ExperimentError::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DayResult {
    pub phase: Phase,
    pub day: u32,
    pub agents: Vec<AgentDay>,
    /// The experimental agent's actions on evaluation days; empty otherwise.
    pub actions: Vec<ActionRecord>,
}

/// One configuration run for one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub config: String,
    pub rep: u32,
    pub days: Vec<DayResult>,
    /// Detector activation per window of evaluation actions.
    pub thetas: Vec<f64>,
}

impl CellResult {
    pub fn eval_days(&self) -> impl Iterator<Item = &DayResult> {
        self.days.iter().filter(|d| d.phase == Phase::Eval)
    }

    /// Experimental agent profit per evaluation day, dollars.
    pub fn experimental_profits(&self) -> Vec<f64> {
        self.eval_days()
            .filter_map(|d| {
                d.agents
                    .iter()
                    .find(|a| matches!(a.class, AgentClass::Spoofer | AgentClass::Experimental))
                    .map(|a| a.profit)
            })
            .collect()
    }

    /// Mean per-agent daily profit of a background class over evaluation days.
    pub fn class_mean(&self, class: AgentClass) -> f64 {
        mean(
            self.eval_days()
                .flat_map(|d| d.agents.iter().filter(|a| a.class == class).map(|a| a.profit)),
        )
    }
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Aggregate over replications of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: String,
    pub windows: usize,
    pub mean_theta: f64,
    pub profit: f64,
    pub median_profit: f64,
    pub losing_fraction: f64,
    pub zi: f64,
    pub value: f64,
    pub obi: f64,
    /// The lowest-latency OBI agent.
    pub obi_fastest: f64,
    pub days: usize,
}

/// Lowest-latency OBI agent's profit for a day.
fn fastest_obi(agents: &[AgentDay]) -> Option<f64> {
    agents
        .iter()
        .filter(|a| a.class == AgentClass::Obi)
        .min_by_key(|a| (a.latency_ns, a.id))
        .map(|a| a.profit)
}

pub fn summarize(config: &str, cells: &[&CellResult]) -> ConfigSummary {
    let profits: Vec<f64> = cells.iter().flat_map(|c| c.experimental_profits()).collect();
    let thetas: Vec<f64> = cells.iter().flat_map(|c| c.thetas.iter().copied()).collect();
    let per_class = |class| mean(cells.iter().map(|c| c.class_mean(class)));
    let mut sorted = profits.clone();
    sorted.sort_by(f64::total_cmp);
    ConfigSummary {
        config: config.to_string(),
        windows: thetas.len(),
        mean_theta: mean(thetas.iter().copied()),
        profit: mean(profits.iter().copied()),
        median_profit: crate::report::quantile_sorted(&sorted, 0.5).unwrap_or(0.0),
        losing_fraction: if profits.is_empty() {
            0.0
        } else {
            profits.iter().filter(|p| **p < 0.0).count() as f64 / profits.len() as f64
        },
        zi: per_class(AgentClass::ZeroIntelligence),
        value: per_class(AgentClass::Value),
        obi: per_class(AgentClass::Obi),
        obi_fastest: mean(
            cells
                .iter()
                .flat_map(|c| c.eval_days().filter_map(|d| fastest_obi(&d.agents))),
        ),
        days: profits.len(),
    }
}

/// Groups cells by configuration, in first-seen order.
pub fn summarize_all(cells: &[CellResult]) -> Vec<ConfigSummary> {
    let mut names: Vec<&str> = Vec::new();
    for c in cells {
        if !names.contains(&c.config.as_str()) {
            names.push(&c.config);
        }
    }
    names
        .into_iter()
        .map(|n| {
            let group: Vec<&CellResult> = cells.iter().filter(|c| c.config == n).collect();
            summarize(n, &group)
        })
        .collect()
}

/// Detector activation per non-overlapping window of `actions`.
pub fn window_thetas(model: &SequenceClassifier, actions: &[RawAction]) -> Vec<f64> {
    actions
        .chunks_exact(WINDOW_LEN)
        .map(|w| model.theta_raw(w).expect("window has the model's shape"))
        .collect()
}

/// Per-stage CSV writers.
pub struct StageSink {
    dir: PathBuf,
    agents: csv::Writer<BufWriter<File>>,
    actions: csv::Writer<BufWriter<File>>,
    theta: csv::Writer<BufWriter<File>>,
}

impl StageSink {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<csv::Writer<BufWriter<File>>> {
            Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
        };
        let mut agents = open("agents.csv")?;
        agents.write_record([
            "config", "rep", "phase", "day", "agent_id", "class", "latency_ns", "profit", "position",
        ])?;
        let mut actions = open("actions.csv")?;
        actions.write_record([
            "config", "rep", "day", "timestamp_ns", "action_type", "direction", "rel_price", "quantity", "label",
        ])?;
        let mut theta = open("theta.csv")?;
        theta.write_record(["config", "rep", "window", "theta"])?;
        Ok(Self {
            dir: dir.to_path_buf(),
            agents,
            actions,
            theta,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&mut self, cell: &CellResult) -> Result<()> {
        let rep = cell.rep.to_string();
        for d in &cell.days {
            let day = d.day.to_string();
            for a in &d.agents {
                self.agents.write_record([
                    cell.config.as_str(),
                    &rep,
                    d.phase.tag(),
                    &day,
                    &a.id.to_string(),
                    a.class.name(),
                    &a.latency_ns.to_string(),
                    &format!("{:.2}", a.profit),
                    &a.position.to_string(),
                ])?;
            }
            for r in &d.actions {
                self.actions.write_record([
                    cell.config.as_str(),
                    &rep,
                    &day,
                    &r.timestamp.nanos().to_string(),
                    match r.action_type {
                        ActionType::Order => "order",
                        ActionType::Cancel => "cancel",
                    },
                    match r.direction {
                        crate::book::Side::Buy => "buy",
                        crate::book::Side::Sell => "sell",
                    },
                    &r.rel_price.to_string(),
                    &r.quantity.to_string(),
                    if r.spoofing_label { "true" } else { "false" },
                ])?;
            }
        }
        for (i, t) in cell.thetas.iter().enumerate() {
            self.theta
                .write_record([cell.config.as_str(), &rep, &i.to_string(), &format!("{t:.6}")])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.agents.flush()?;
        self.actions.flush()?;
        self.theta.flush()?;
        Ok(())
    }
}

pub fn write_summaries(path: &Path, rows: &[ConfigSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn spoof_label(cfg: &SpoofConfig) -> String {
    if cfg.honest {
        "h".to_string()
    } else {
        format!("q{}-d{}", cfg.quote_size, cfg.quote_depth)
    }
}

/// Summary of one `simulate` day.
#[derive(Clone, Debug, Serialize)]
pub struct SimulatedDay {
    pub day: u32,
    pub trades: usize,
    pub events: usize,
    pub close: f64,
    pub actions: usize,
}

/// Plain market days, optionally with the scripted spoofing agent, writing
/// the full action log, trade tape, per-agent summary and (with `trace`) the
/// message trace of each day under `simulate/day-NNN/`.
pub fn simulate(sc: &Scenario, days: u32, with_spoofer: bool, trace: bool) -> Result<Vec<SimulatedDay>> {
    sc.validate()?;
    let dir = sc.output_dir.join(SIMULATE);
    let seed = derive_seed(sc.seed, 0x51A1);
    let mut summary = Vec::new();
    for day in 0..days {
        let mut agent = SpoofAgent::new(sc.spoof.clone());
        let slot = with_spoofer.then(|| ExperimentalSlot {
            agent: &mut agent,
            label_actions: !sc.spoof.honest,
        });
        let out = run_day(&sc.market, 0, day, seed, slot, trace);
        let day_dir = dir.join(format!("day-{day:03}"));
        fs::create_dir_all(&day_dir)?;
        out.log.write_csv(BufWriter::new(File::create(day_dir.join("actions.csv"))?))?;
        write_tape(&out.trades, BufWriter::new(File::create(day_dir.join("tape.csv"))?))?;
        let mut agents = csv::Writer::from_path(day_dir.join("agents.csv"))?;
        for a in &out.agents {
            agents.serialize(a)?;
        }
        agents.flush()?;
        if let Some(rows) = &out.trace {
            write_trace(rows, BufWriter::new(File::create(day_dir.join("trace.csv"))?))?;
        }
        summary.push(SimulatedDay {
            day,
            trades: out.trades.len(),
            events: out.events,
            close: out.close,
            actions: out.log.records.len(),
        });
    }
    let mut w = csv::Writer::from_path(dir.join("days.csv"))?;
    for d in &summary {
        w.serialize(d)?;
    }
    w.flush()?;
    Ok(summary)
}

/// Runs the scripted spoofing agent for `days` days with labeled actions.
pub fn run_spoof_cell(
    market: &MarketConfig,
    spoof: &SpoofConfig,
    seed: u64,
    days: std::ops::Range<u32>,
    model: Option<&SequenceClassifier>,
) -> CellResult {
    let mut out_days = Vec::new();
    let mut actions: Vec<RawAction> = Vec::new();
    for day in days {
        let mut agent = SpoofAgent::new(spoof.clone());
        let out = run_day(
            market,
            0,
            day,
            seed,
            Some(ExperimentalSlot {
                agent: &mut agent,
                label_actions: !spoof.honest,
            }),
            false,
        );
        let id = out.experimental().map(|a| a.id);
        let recs: Vec<ActionRecord> = out.log.records.iter().filter(|r| Some(r.agent_id) == id).cloned().collect();
        actions.extend(recs.iter().map(ActionRecord::raw));
        out_days.push(DayResult {
            phase: Phase::Eval,
            day,
            agents: out.agents,
            actions: recs,
        });
    }
    CellResult {
        config: spoof_label(spoof),
        rep: 0,
        days: out_days,
        thetas: model.map(|m| window_thetas(m, &actions)).unwrap_or_default(),
    }
}

/// The sweep's cells: honest, then quote sizes at the base depth, then depths
/// at the base size.
pub fn sweep_grid(sc: &Scenario) -> Vec<SpoofConfig> {
    let mut cells = vec![SpoofConfig {
        honest: true,
        ..sc.spoof.clone()
    }];
    let mut push = |size: Qty, depth: i64| {
        let cfg = SpoofConfig {
            honest: false,
            quote_size: size,
            quote_depth: depth,
            ..sc.spoof.clone()
        };
        if !cells.contains(&cfg) {
            cells.push(cfg);
        }
    };
    for &q in &sc.sweep.quote_sizes {
        push(q, sc.sweep.base_depth);
    }
    for &d in &sc.sweep.quote_depths {
        push(sc.sweep.base_size, d);
    }
    cells
}

pub fn sweep_spoof(sc: &Scenario, model: Option<&SequenceClassifier>) -> Result<Vec<CellResult>> {
    let dir = sc.output_dir.join(SWEEP);
    let mut sink = StageSink::create(&dir)?;
    let seed = derive_seed(sc.seed, 0x5EE9);
    let mut cells = Vec::new();
    for cfg in sweep_grid(sc) {
        let cell = run_spoof_cell(&sc.market, &cfg, seed, 0..sc.sweep.days_per_cell, model);
        sink.record(&cell)?;
        cells.push(cell);
    }
    sink.finish()?;
    write_summaries(&dir.join("summary.csv"), &summarize_all(&cells))?;
    Ok(cells)
}

/// Windowed, labeled corpus with its split.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub windows: Vec<ActionWindow>,
    pub split: DatasetSplit,
}

impl Corpus {
    pub fn positive_fraction(&self) -> f64 {
        positives(&self.windows, &(0..self.windows.len()).collect::<Vec<_>>()) as f64 / self.windows.len().max(1) as f64
    }
}

/// Spoofing-agent configuration used on synthesis day `day`.
pub fn synthesis_cell(sc: &Scenario, day: u32) -> SpoofConfig {
    let mut grid: Vec<SpoofConfig> = Vec::new();
    for &q in &sc.synthesis.quote_sizes {
        for &d in &sc.synthesis.quote_depths {
            grid.push(SpoofConfig {
                honest: false,
                quote_size: q,
                quote_depth: d,
                ..sc.spoof.clone()
            });
        }
    }
    if sc.synthesis.include_honest || grid.is_empty() {
        grid.push(SpoofConfig {
            honest: true,
            ..sc.spoof.clone()
        });
    }
    grid[day as usize % grid.len()].clone()
}

pub fn synthesize(sc: &Scenario) -> Result<Corpus> {
    let seed = derive_seed(sc.seed, 0x5A17);
    let mut windows = Vec::new();
    for day in 0..sc.synthesis.days {
        let cfg = synthesis_cell(sc, day);
        let mut agent = SpoofAgent::new(cfg.clone());
        let out = run_day(
            &sc.market,
            day,
            day,
            seed,
            Some(ExperimentalSlot {
                agent: &mut agent,
                label_actions: !cfg.honest,
            }),
            false,
        );
        windows.extend(build_windows(std::slice::from_ref(&out.log)));
    }
    let split = normalize_and_split(&windows, sc.detector.split_seed)?;
    write_corpus(&sc.output_dir.join(SYNTHESIS), &windows, Some(&split))?;
    Ok(Corpus { windows, split })
}

pub fn load_corpus(dir: &Path, split_seed: u64) -> Result<Corpus> {
    let (windows, split) = read_corpus(dir)?;
    let split = match split {
        Some(s) => s,
        None => normalize_and_split(&windows, split_seed)?,
    };
    Ok(Corpus { windows, split })
}

#[derive(Clone, Debug)]
pub struct DetectorOutcome {
    pub model: SequenceClassifier,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub validation: Metrics,
    pub test: Metrics,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    architecture: &'a str,
    features: String,
    windows: usize,
    positive_fraction: f64,
    best_epoch: usize,
    validation: &'a Metrics,
    test: &'a Metrics,
}

pub fn train_detector(sc: &Scenario, corpus: &Corpus) -> Result<DetectorOutcome> {
    let features = sc.detector.feature_set()?;
    let split = &corpus.split;
    let enc = |idx: &[usize]| Examples::encode(&corpus.windows, idx, &split.stats, features);
    let (tr, va, te) = (enc(&split.train), enc(&split.val), enc(&split.test));
    let trained = train(sc.detector.architecture, features, split.stats, &tr, &va, &sc.detector.train)?;
    let validation = evaluate(&trained.model, &va);
    let test = evaluate(&trained.model, &te);
    let dir = sc.output_dir.join(DETECTOR);
    fs::create_dir_all(&dir)?;
    trained.model.save(&dir.join("model.txt"))?;
    let mut curve = csv::Writer::from_path(dir.join("training.csv"))?;
    for e in &trained.history {
        curve.serialize(e)?;
    }
    curve.flush()?;
    write_metrics(&dir, sc.detector.architecture, trained.model.features, corpus, trained.best_epoch, &validation, &test)?;
    Ok(DetectorOutcome {
        model: trained.model,
        history: trained.history,
        best_epoch: trained.best_epoch,
        validation,
        test,
    })
}

fn write_metrics(
    dir: &Path,
    arch: Architecture,
    features: FeatureSet,
    corpus: &Corpus,
    best_epoch: usize,
    validation: &Metrics,
    test: &Metrics,
) -> Result<()> {
    let file = MetricsFile {
        architecture: arch.tag(),
        features: features.label(),
        windows: corpus.windows.len(),
        positive_fraction: corpus.positive_fraction(),
        best_epoch,
        validation,
        test,
    };
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Test-split metrics of an existing model.
pub fn evaluate_detector(model: &SequenceClassifier, corpus: &Corpus) -> Metrics {
    let data = Examples::encode(&corpus.windows, &corpus.split.test, &model.stats, model.features);
    evaluate(model, &data)
}

pub fn ablate(sc: &Scenario, corpus: &Corpus, architectures: &[Architecture]) -> Result<Vec<AblationRow>> {
    let subsets = crate::dataset::FeatureSet::ablation_subsets();
    let rows = ablation_study(&corpus.windows, &corpus.split, architectures, &subsets, &sc.ablation)?;
    let dir = sc.output_dir.join(ABLATION);
    fs::create_dir_all(&dir)?;
    write_ablation_csv(&rows, BufWriter::new(File::create(dir.join("ablation.csv"))?))?;
    Ok(rows)
}

fn market_seed(sc: &Scenario, phase: Phase, rep: u32) -> u64 {
    let stream = match phase {
        Phase::Train => 0x7EA1_0000,
        Phase::Eval => 0xE7A1_0000,
    };
    derive_seed(sc.seed, stream + rep as u64)
}

/// Trains (when `train_days > 0`) then evaluates one trader. Evaluation days
/// share market seeds across configurations for paired comparisons.
pub fn run_trader_cell(
    sc: &Scenario,
    config: &str,
    rep: u32,
    trader: &mut Trader,
    train_days: u32,
    eval_days: u32,
    model: Option<&SequenceClassifier>,
) -> CellResult {
    let mut days = Vec::new();
    let mut eval_actions: Vec<RawAction> = Vec::new();
    let schedule = (0..train_days)
        .map(|d| (Phase::Train, d))
        .chain((0..eval_days).map(|d| (Phase::Eval, d)));
    for (i, (phase, day)) in schedule.enumerate() {
        trader.begin_day(i as u32);
        trader.set_training(phase == Phase::Train);
        let out = run_day(
            &sc.market,
            rep,
            day,
            market_seed(sc, phase, rep),
            Some(ExperimentalSlot {
                agent: trader,
                label_actions: false,
            }),
            false,
        );
        let actions = if phase == Phase::Eval {
            let id = out.experimental().map(|a| a.id);
            let recs: Vec<ActionRecord> = out.log.records.iter().filter(|r| Some(r.agent_id) == id).cloned().collect();
            eval_actions.extend(recs.iter().map(ActionRecord::raw));
            recs
        } else {
            Vec::new()
        };
        days.push(DayResult {
            phase,
            day,
            agents: out.agents,
            actions,
        });
    }
    CellResult {
        config: config.to_string(),
        rep,
        days,
        thetas: model.map(|m| window_thetas(m, &eval_actions)).unwrap_or_default(),
    }
}

fn trader_seed(sc: &Scenario, config: &str, rep: u32) -> u64 {
    let h = config.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive_seed(derive_seed(sc.seed, h), rep as u64)
}

pub const HONEST: &str = "pi-h";
pub const SPOOFING: &str = "pi-s";

pub fn run_fixed(sc: &Scenario, model: Option<&SequenceClassifier>) -> Result<Vec<CellResult>> {
    let dir = sc.output_dir.join(FIXED);
    let mut sink = StageSink::create(&dir)?;
    let mut cells = Vec::new();
    for (name, policy) in [(HONEST, FixedPolicy::Honest), (SPOOFING, FixedPolicy::Spoofing)] {
        let mut t = Trader::new(
            sc.trader.clone(),
            Controller::Fixed(policy),
            None,
            trader_seed(sc, name, 0),
        );
        let cell = run_trader_cell(sc, name, 0, &mut t, 0, sc.fixed_eval_days, model);
        sink.record(&cell)?;
        cells.push(cell);
    }
    sink.finish()?;
    write_summaries(&dir.join("summary.csv"), &summarize_all(&cells))?;
    Ok(cells)
}

/// One learner configuration in a learning stage.
#[derive(Clone, Debug)]
pub struct LearnerSpec {
    pub config: String,
    pub trader: TraderConfig,
    pub learner: LearnerConfig,
}

pub fn restricted_label(strategy: &ExplorationStrategy) -> String {
    format!("QR {}", strategy.label())
}

pub fn unconstrained_label(quantity: Qty) -> String {
    format!("QU q{quantity}")
}

pub fn normative_label(mode: GuidanceMode) -> String {
    format!("QN {}", mode.tag())
}

pub fn restricted_specs(sc: &Scenario) -> Vec<LearnerSpec> {
    sc.learning
        .restricted_variants
        .iter()
        .map(|s| LearnerSpec {
            config: restricted_label(s),
            trader: sc.trader.clone(),
            learner: LearnerConfig {
                restricted: true,
                strategy: s.clone(),
                guidance: None,
                ..sc.learning.learner.clone()
            },
        })
        .collect()
}

pub fn unconstrained_specs(sc: &Scenario) -> Vec<LearnerSpec> {
    sc.learning
        .passive_quantities
        .iter()
        .map(|&q| LearnerSpec {
            config: unconstrained_label(q),
            trader: TraderConfig {
                passive_size: q,
                ..sc.trader.clone()
            },
            learner: LearnerConfig {
                restricted: false,
                strategy: sc.learning.strategy.clone(),
                guidance: None,
                ..sc.learning.learner.clone()
            },
        })
        .collect()
}

pub fn normative_specs(sc: &Scenario) -> Vec<LearnerSpec> {
    [GuidanceMode::RewardShaping, GuidanceMode::ActionReranking]
        .into_iter()
        .map(|mode| LearnerSpec {
            config: normative_label(mode),
            trader: TraderConfig {
                passive_size: sc.learning.comparison_quantity,
                ..sc.trader.clone()
            },
            learner: LearnerConfig {
                restricted: false,
                strategy: sc.learning.strategy.clone(),
                guidance: Some(mode),
                ..sc.learning.learner.clone()
            },
        })
        .collect()
}

/// Trains and evaluates each spec for every replication, writing one stage
/// directory. Guided specs require `model`.
pub fn train_q(
    sc: &Scenario,
    stage: &'static str,
    specs: &[LearnerSpec],
    model: Option<&Arc<SequenceClassifier>>,
) -> Result<Vec<CellResult>> {
    if model.is_none() && specs.iter().any(|s| s.learner.guidance.is_some()) {
        return Err(ExperimentError::Other("guided learners need a detector model".into()));
    }
    let dir = sc.output_dir.join(stage);
    let mut sink = StageSink::create(&dir)?;
    let mut cells = Vec::new();
    let qdir = dir.join("qtables");
    fs::create_dir_all(&qdir)?;
    for rep in 0..sc.learning.replications {
        for spec in specs {
            let detector = spec.learner.guidance.and(model.cloned());
            let mut t = Trader::new(
                spec.trader.clone(),
                Controller::learner(spec.learner.clone()),
                detector,
                trader_seed(sc, &spec.config, rep),
            );
            let cell = run_trader_cell(
                sc,
                &spec.config,
                rep,
                &mut t,
                sc.learning.train_days,
                sc.learning.eval_days,
                model.map(|m| m.as_ref()),
            );
            if let Some(q) = t.q_table() {
                let name = format!("{}-r{rep}.csv", spec.config.replace(' ', "_"));
                q.write_csv(BufWriter::new(File::create(qdir.join(name))?))?;
            }
            sink.record(&cell)?;
            cells.push(cell);
        }
    }
    sink.finish()?;
    write_summaries(&dir.join("summary.csv"), &summarize_all(&cells))?;
    Ok(cells)
}

/// Everything the ladder produced, for inspection and acceptance checks.
#[derive(Clone, Debug)]
pub struct LadderOutcome {
    pub corpus_windows: usize,
    pub positive_fraction: f64,
    pub detector: DetectorOutcome,
    pub fixed: Vec<CellResult>,
    pub restricted: Vec<CellResult>,
    pub unconstrained: Vec<CellResult>,
    pub normative: Vec<CellResult>,
    /// Final comparison: honest, spoofing, restricted, unconstrained, and
    /// both guided learners.
    pub comparison: Vec<ConfigSummary>,
    /// Wall-clock seconds per stage, in run order. Not written to disk.
    pub timings: Vec<(&'static str, f64)>,
}

/// Runs every stage in order. The sweep is optional since it is not an
/// input to later stages.
pub fn run_ladder(sc: &Scenario, include_sweep: bool) -> Result<LadderOutcome> {
    sc.validate()?;
    fs::create_dir_all(&sc.output_dir)?;
    fs::write(sc.output_dir.join("scenario.toml"), sc.to_toml())?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &'static str| {
        timings.push((stage, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };
    let corpus = synthesize(sc).map_err(|e| e.in_stage(SYNTHESIS))?;
    lap(SYNTHESIS);
    let detector = train_detector(sc, &corpus).map_err(|e| e.in_stage(DETECTOR))?;
    lap(DETECTOR);
    let model = Arc::new(detector.model.clone());
    if include_sweep {
        sweep_spoof(sc, Some(&model)).map_err(|e| e.in_stage(SWEEP))?;
        lap(SWEEP);
    }
    let fixed = run_fixed(sc, Some(&model)).map_err(|e| e.in_stage(FIXED))?;
    lap(FIXED);
    let restricted = train_q(sc, RESTRICTED, &restricted_specs(sc), Some(&model)).map_err(|e| e.in_stage(RESTRICTED))?;
    lap(RESTRICTED);
    let unconstrained =
        train_q(sc, UNCONSTRAINED, &unconstrained_specs(sc), Some(&model)).map_err(|e| e.in_stage(UNCONSTRAINED))?;
    lap(UNCONSTRAINED);
    let normative = train_q(sc, NORMATIVE, &normative_specs(sc), Some(&model)).map_err(|e| e.in_stage(NORMATIVE))?;
    lap(NORMATIVE);

    let pick = |cells: &[CellResult], name: &str| -> Option<ConfigSummary> {
        let group: Vec<&CellResult> = cells.iter().filter(|c| c.config == name).collect();
        (!group.is_empty()).then(|| summarize(name, &group))
    };
    let qr = restricted_label(&sc.learning.strategy);
    let qu = unconstrained_label(sc.learning.comparison_quantity);
    let comparison: Vec<ConfigSummary> = [
        pick(&fixed, HONEST),
        pick(&fixed, SPOOFING),
        pick(&restricted, &qr),
        pick(&unconstrained, &qu),
        pick(&normative, &normative_label(GuidanceMode::ActionReranking)),
        pick(&normative, &normative_label(GuidanceMode::RewardShaping)),
    ]
    .into_iter()
    .flatten()
    .collect();
    write_summaries(&sc.output_dir.join("comparison.csv"), &comparison)?;
    let mut txt = BufWriter::new(File::create(sc.output_dir.join("comparison.txt"))?);
    write_comparison_table(&comparison, &mut txt)?;
    txt.flush()?;

    Ok(LadderOutcome {
        corpus_windows: corpus.windows.len(),
        positive_fraction: corpus.positive_fraction(),
        detector,
        fixed,
        restricted,
        unconstrained,
        normative,
        comparison,
        timings,
    })
}

pub fn write_comparison_table<W: Write>(rows: &[ConfigSummary], w: &mut W) -> std::io::Result<()> {
    writeln!(
        w,
        "{:<28} {:>8} {:>12} {:>10} {:>10} {:>10} {:>10}",
        "config", "theta", "profit", "ZI", "Value", "OBI", "OBI*"
    )?;
    for r in rows {
        writeln!(
            w,
            "{:<28} {:>8} {:>12.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
            r.config,
            if r.windows == 0 { "-".to_string() } else { format!("{:.3}", r.mean_theta) },
            r.profit, r.zi, r.value, r.obi, r.obi_fastest
        )?;
    }
    Ok(())
}
