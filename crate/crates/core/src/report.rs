//! Box-plot statistics over stage outputs.
//!
//! Reads every `agents.csv` and `theta.csv` under a run directory and writes
//! `report.csv` (per stage, configuration and agent class), `report_theta.csv`
//! (per stage and configuration) and a plain-text `report.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("no stage outputs under {0}")]
    Empty(PathBuf),
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Type-7 quantile without a full sort.
pub fn quantile(data: &mut [f64], q: f64) -> Option<f64> {
    if data.is_empty() {
        return None;
    }
    let h = (data.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let (_, &mut a, rest) = data.select_nth_unstable_by(lo, f64::total_cmp);
    let frac = h - lo as f64;
    if frac == 0.0 {
        return Some(a);
    }
    let b = rest.iter().copied().min_by(f64::total_cmp).unwrap_or(a);
    Some(a + frac * (b - a))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme points within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub min: f64,
    pub max: f64,
    pub losing_fraction: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25)?;
        let q3 = quantile_sorted(&v, 0.75)?;
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile_sorted(&v, 0.5)?,
            q1,
            q3,
            whisker_low: v.iter().copied().find(|x| *x >= lo_fence).unwrap_or(v[0]),
            whisker_high: v.iter().rev().copied().find(|x| *x <= hi_fence).unwrap_or(v[v.len() - 1]),
            min: v[0],
            max: v[v.len() - 1],
            losing_fraction: v.iter().filter(|x| **x < 0.0).count() as f64 / v.len() as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfitRow {
    pub stage: String,
    pub config: String,
    pub class: String,
    pub stats: BoxStats,
}

impl ProfitRow {
    const HEADER: [&'static str; 13] = [
        "stage", "config", "class", "n", "mean", "median", "q1", "q3", "whisker_low", "whisker_high", "min", "max",
        "losing_fraction",
    ];

    fn record(&self) -> Vec<String> {
        let s = &self.stats;
        let mut r = vec![self.stage.clone(), self.config.clone(), self.class.clone(), s.n.to_string()];
        r.extend(
            [s.mean, s.median, s.q1, s.q3, s.whisker_low, s.whisker_high, s.min, s.max]
                .iter()
                .map(|x| format!("{x:.4}")),
        );
        r.push(format!("{:.4}", s.losing_fraction));
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaRow {
    pub stage: String,
    pub config: String,
    pub windows: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub profits: Vec<ProfitRow>,
    pub thetas: Vec<ThetaRow>,
}

#[derive(Deserialize)]
struct AgentLine {
    config: String,
    phase: String,
    class: String,
    profit: f64,
}

#[derive(Deserialize)]
struct ThetaLine {
    config: String,
    theta: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ReportError> {
    let wrap = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(wrap)
}

/// Stage directories (those holding an `agents.csv`), sorted by name.
fn stage_dirs(run: &Path) -> Result<Vec<(String, PathBuf)>, ReportError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(run)? {
        let path = entry?.path();
        if path.join("agents.csv").is_file() {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            out.push((name, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Evaluation-day statistics for every stage under `run`.
pub fn build(run: &Path) -> Result<Report, ReportError> {
    let stages = stage_dirs(run)?;
    if stages.is_empty() {
        return Err(ReportError::Empty(run.to_path_buf()));
    }
    let mut report = Report::default();
    for (stage, dir) in stages {
        let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        let mut order: Vec<(String, String)> = Vec::new();
        for line in read_csv::<AgentLine>(&dir.join("agents.csv"))? {
            if line.phase != "eval" {
                continue;
            }
            let key = (line.config, line.class);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(line.profit);
        }
        for key in order {
            if let Some(stats) = BoxStats::of(&groups[&key]) {
                report.profits.push(ProfitRow {
                    stage: stage.clone(),
                    config: key.0,
                    class: key.1,
                    stats,
                });
            }
        }
        let theta_path = dir.join("theta.csv");
        if theta_path.is_file() {
            let mut by_config: Vec<(String, Vec<f64>)> = Vec::new();
            for line in read_csv::<ThetaLine>(&theta_path)? {
                match by_config.iter_mut().find(|(c, _)| *c == line.config) {
                    Some((_, v)) => v.push(line.theta),
                    None => by_config.push((line.config, vec![line.theta])),
                }
            }
            for (config, v) in by_config {
                let s = BoxStats::of(&v).expect("non-empty group");
                report.thetas.push(ThetaRow {
                    stage: stage.clone(),
                    config,
                    windows: s.n,
                    mean: s.mean,
                    median: s.median,
                    max: s.max,
                });
            }
        }
    }
    Ok(report)
}

impl Report {
    pub fn write(&self, run: &Path) -> Result<(), ReportError> {
        let csv_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ReportError::Csv {
                path: path.clone(),
                source,
            }
        };
        let p = run.join("report.csv");
        let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
        w.write_record(ProfitRow::HEADER).map_err(csv_err(&p))?;
        for r in &self.profits {
            w.write_record(r.record()).map_err(csv_err(&p))?;
        }
        w.flush()?;
        let t = run.join("report_theta.csv");
        let mut w = csv::Writer::from_path(&t).map_err(csv_err(&t))?;
        for r in &self.thetas {
            w.serialize(r).map_err(csv_err(&t))?;
        }
        w.flush()?;
        let mut txt = Vec::new();
        self.write_text(&mut txt)?;
        fs::write(run.join("report.txt"), txt)?;
        Ok(())
    }

    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut stage = "";
        for r in &self.profits {
            if r.stage != stage {
                stage = &r.stage;
                writeln!(w, "\n[{stage}]")?;
                writeln!(
                    w,
                    "{:<24} {:<14} {:>5} {:>10} {:>10} {:>10} {:>10} {:>7}",
                    "config", "class", "n", "mean", "median", "q1", "q3", "losing"
                )?;
            }
            let s = &r.stats;
            writeln!(
                w,
                "{:<24} {:<14} {:>5} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>7.3}",
                r.config, r.class, s.n, s.mean, s.median, s.q1, s.q3, s.losing_fraction
            )?;
        }
        if !self.thetas.is_empty() {
            writeln!(w, "\n[theta]")?;
            for t in &self.thetas {
                writeln!(
                    w,
                    "{:<16} {:<24} {:>6} windows  mean {:.4}  median {:.4}  max {:.4}",
                    t.stage, t.config, t.windows, t.mean, t.median, t.max
                )?;
            }
        }
        Ok(())
    }
}
