use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate, train, Architecture, Metrics, TrainConfig, TrainError};
use crate::dataset::{oversample, ActionWindow, DatasetSplit, Examples, FeatureSet, NormStats};
use crate::kernel::stream_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub folds: usize,
    pub train: TrainConfig,
    /// Caps the pooled train+validation pool (stratified subsample).
    pub max_windows: Option<usize>,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            train: TrainConfig::default(),
            max_windows: None,
            seed: 23,
        }
    }
}

/// Fold-averaged out-of-sample scores for one (architecture, subset) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub architecture: Architecture,
    pub features: String,
    pub fp: f64,
    pub fn_: f64,
    pub precision: f64,
    pub recall: f64,
    pub mcc: f64,
}

impl std::fmt::Display for AblationRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<13} {:<4} mcc {:.3} precision {:.3} recall {:.3} fp {:.1} fn {:.1}",
            self.architecture.tag(),
            self.features,
            self.mcc,
            self.precision,
            self.recall,
            self.fp,
            self.fn_
        )
    }
}

impl AblationRow {
    fn mean(architecture: Architecture, features: FeatureSet, folds: &[Metrics]) -> Self {
        let n = folds.len().max(1) as f64;
        let avg = |f: fn(&Metrics) -> f64| folds.iter().map(f).sum::<f64>() / n;
        Self {
            architecture,
            features: features.label(),
            fp: avg(|m| m.fp as f64),
            fn_: avg(|m| m.fn_ as f64),
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            mcc: avg(|m| m.mcc),
        }
    }
}

/// Assigns each pooled index to a fold, stratified by label.
fn stratified_folds(windows: &[ActionWindow], pool: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = stream_rng(seed, 0xF01D);
    let mut pos: Vec<usize> = pool.iter().copied().filter(|&i| windows[i].label).collect();
    let mut neg: Vec<usize> = pool.iter().copied().filter(|&i| !windows[i].label).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (j, &i) in pos.iter().chain(&neg).enumerate() {
        folds[j % k].push(i);
    }
    folds
}

fn subsample(windows: &[ActionWindow], pool: Vec<usize>, cap: usize, seed: u64) -> Vec<usize> {
    if pool.len() <= cap {
        return pool;
    }
    let mut rng = stream_rng(seed, 0x5AB5);
    let mut out = Vec::with_capacity(cap);
    for label in [true, false] {
        let mut part: Vec<usize> = pool.iter().copied().filter(|&i| windows[i].label == label).collect();
        let take = (part.len() as f64 * cap as f64 / pool.len() as f64).round() as usize;
        part.shuffle(&mut rng);
        out.extend_from_slice(&part[..take.min(part.len())]);
    }
    out.sort_unstable();
    out
}

/// K-fold cross validation over train+validation for every architecture and
/// feature subset. The test partition is never used.
pub fn ablation_study(
    windows: &[ActionWindow],
    split: &DatasetSplit,
    architectures: &[Architecture],
    subsets: &[FeatureSet],
    cfg: &AblationConfig,
) -> Result<Vec<AblationRow>, TrainError> {
    let mut pool: Vec<usize> = split.train_base.iter().chain(&split.val).copied().collect();
    pool.sort_unstable();
    if let Some(cap) = cfg.max_windows {
        pool = subsample(windows, pool, cap, cfg.seed);
    }
    let k = cfg.folds.max(2);
    let folds = stratified_folds(windows, &pool, k, cfg.seed);

    // fold-specific encodings are shared across every cell
    let mut prepared = Vec::with_capacity(k);
    for f in 0..k {
        let train_idx: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| folds[g].iter().copied()).collect();
        let stats = NormStats::fit(train_idx.iter().map(|&i| &windows[i]));
        let mut rng = stream_rng(cfg.seed, 0x0B5A ^ f as u64);
        let balanced = oversample(windows, &train_idx, &mut rng);
        prepared.push((stats, balanced, folds[f].clone()));
    }

    let mut rows = Vec::new();
    for &arch in architectures {
        for &features in subsets {
            let mut scores = Vec::with_capacity(k);
            for (stats, balanced, held_out) in &prepared {
                let tr = Examples::encode(windows, balanced, stats, features);
                let te = Examples::encode(windows, held_out, stats, features);
                let model = train(arch, features, *stats, &tr, &Examples::default(), &cfg.train)?.model;
                scores.push(evaluate(&model, &te));
            }
            rows.push(AblationRow::mean(arch, features, &scores));
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["architecture", "features", "fp", "fn", "precision", "recall", "mcc"])?;
    for r in rows {
        out.write_record([
            r.architecture.tag().to_string(),
            r.features.clone(),
            format!("{:.1}", r.fp),
            format!("{:.1}", r.fn_),
            format!("{:.3}", r.precision),
            format!("{:.3}", r.recall),
            format!("{:.3}", r.mcc),
        ])?;
    }
    out.flush()?;
    Ok(())
}
