//! The spoofing recognizer: a small sequence classifier over 20-action
//! windows producing an activation in `(0, 1)`.
//!
//! Two architectures are available. The temporal CNN convolves 64 filters of
//! width 3 along the time axis, applies ReLU, global max-pools over time and
//! feeds a single sigmoid unit. The feed-forward baseline flattens the window
//! into 80 inputs, one hidden ReLU layer of 64 units and a sigmoid output.
//! Gradients are computed by hand; see `train` for the optimizer.

mod ablation;
mod metrics;
mod train;

pub use ablation::{ablation_study, write_ablation_csv, AblationConfig, AblationRow};
pub use metrics::{evaluate, Metrics};
pub use train::{train, EpochStats, TrainConfig, TrainError, Trained};

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureSet, NormStats, RawAction, N_FEATURES, WINDOW_LEN, WINDOW_WIDTH};
use crate::kernel::stream_rng;

pub const HIDDEN: usize = 64;
pub const KERNEL: usize = 3;
const CONV_POSITIONS: usize = WINDOW_LEN - KERNEL + 1;
const CONV_IN: usize = KERNEL * N_FEATURES;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("expected an input of {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    TemporalCnn,
    FeedForward,
}

impl Architecture {
    pub fn tag(self) -> &'static str {
        match self {
            Architecture::TemporalCnn => "temporal-cnn",
            Architecture::FeedForward => "feed-forward",
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            Architecture::TemporalCnn => HIDDEN * CONV_IN + HIDDEN + HIDDEN + 1,
            Architecture::FeedForward => HIDDEN * WINDOW_WIDTH + HIDDEN + HIDDEN + 1,
        }
    }

    fn first_layer_fan_in(self) -> usize {
        match self {
            Architecture::TemporalCnn => CONV_IN,
            Architecture::FeedForward => WINDOW_WIDTH,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "temporal-cnn" | "cnn" => Ok(Architecture::TemporalCnn),
            "feed-forward" | "ffnn" | "fffc" => Ok(Architecture::FeedForward),
            other => Err(format!("unknown architecture {other:?}")),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy computed from the logit for numerical stability.
pub fn bce_with_logit(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// A trained (or freshly initialized) detector together with the input
/// encoding it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceClassifier {
    pub arch: Architecture,
    pub features: FeatureSet,
    pub stats: NormStats,
    params: Vec<f64>,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl SequenceClassifier {
    /// Uniform initialization in `±1/sqrt(fan_in)` per layer.
    pub fn new(arch: Architecture, features: FeatureSet, stats: NormStats, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0xDE7E);
        let mut params = vec![0.0; arch.param_count()];
        let l = Self::layout_of(arch);
        let a1 = 1.0 / (arch.first_layer_fan_in() as f64).sqrt();
        let a2 = 1.0 / (HIDDEN as f64).sqrt();
        for p in &mut params[l.w1..l.b1] {
            *p = rng.gen_range(-a1..a1);
        }
        for p in &mut params[l.b1..l.w2] {
            *p = rng.gen_range(-a1..a1);
        }
        for p in &mut params[l.w2..l.b2] {
            *p = rng.gen_range(-a2..a2);
        }
        params[l.b2] = rng.gen_range(-a2..a2);
        Self {
            arch,
            features,
            stats,
            params,
        }
    }

    fn layout_of(arch: Architecture) -> Layout {
        let fan = arch.first_layer_fan_in();
        let w1 = 0;
        let b1 = HIDDEN * fan;
        let w2 = b1 + HIDDEN;
        let b2 = w2 + HIDDEN;
        Layout { w1, b1, w2, b2 }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Pre-sigmoid output for one encoded window. The input length is not
    /// checked here; use [`theta`](Self::theta) for validated inference.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let l = Self::layout_of(self.arch);
        let p = &self.params;
        let mut out = p[l.b2];
        match self.arch {
            Architecture::TemporalCnn => {
                for f in 0..HIDDEN {
                    let w = &p[l.w1 + f * CONV_IN..l.w1 + (f + 1) * CONV_IN];
                    let mut best = f64::NEG_INFINITY;
                    for t in 0..CONV_POSITIONS {
                        let z = p[l.b1 + f] + dot(w, &x[t * N_FEATURES..t * N_FEATURES + CONV_IN]);
                        best = best.max(z);
                    }
                    out += p[l.w2 + f] * best.max(0.0);
                }
            }
            Architecture::FeedForward => {
                for h in 0..HIDDEN {
                    let w = &p[l.w1 + h * WINDOW_WIDTH..l.w1 + (h + 1) * WINDOW_WIDTH];
                    let z = p[l.b1 + h] + dot(w, x);
                    out += p[l.w2 + h] * z.max(0.0);
                }
            }
        }
        out
    }

    /// Detector activation for an encoded `20 × 4` window.
    pub fn theta(&self, x: &[f64]) -> Result<f64, DetectorError> {
        if x.len() != WINDOW_WIDTH {
            return Err(DetectorError::Shape {
                expected: WINDOW_WIDTH,
                got: x.len(),
            });
        }
        Ok(sigmoid(self.logit(x)))
    }

    /// Activation for raw actions, encoded with this model's statistics and
    /// feature mask.
    pub fn theta_raw(&self, rows: &[RawAction]) -> Result<f64, DetectorError> {
        self.theta(&self.stats.encode_window(rows, self.features))
    }

    /// Adds the gradient of the BCE loss for one example to `grad` and
    /// returns that example's loss.
    pub fn accumulate_gradient(&self, x: &[f64], y: f64, grad: &mut [f64]) -> f64 {
        let l = Self::layout_of(self.arch);
        let p = &self.params;
        match self.arch {
            Architecture::TemporalCnn => {
                let mut pooled = [0.0; HIDDEN];
                let mut arg = [0usize; HIDDEN];
                let mut pre = [0.0; HIDDEN];
                let mut logit = p[l.b2];
                for f in 0..HIDDEN {
                    let w = &p[l.w1 + f * CONV_IN..l.w1 + (f + 1) * CONV_IN];
                    let mut best = f64::NEG_INFINITY;
                    let mut best_t = 0;
                    for t in 0..CONV_POSITIONS {
                        let z = p[l.b1 + f] + dot(w, &x[t * N_FEATURES..t * N_FEATURES + CONV_IN]);
                        if z > best {
                            best = z;
                            best_t = t;
                        }
                    }
                    pre[f] = best;
                    arg[f] = best_t;
                    pooled[f] = best.max(0.0);
                    logit += p[l.w2 + f] * pooled[f];
                }
                let d = sigmoid(logit) - y;
                grad[l.b2] += d;
                for f in 0..HIDDEN {
                    grad[l.w2 + f] += d * pooled[f];
                    if pre[f] > 0.0 {
                        let dz = d * p[l.w2 + f];
                        grad[l.b1 + f] += dz;
                        let xs = &x[arg[f] * N_FEATURES..arg[f] * N_FEATURES + CONV_IN];
                        let g = &mut grad[l.w1 + f * CONV_IN..l.w1 + (f + 1) * CONV_IN];
                        for (gi, xi) in g.iter_mut().zip(xs) {
                            *gi += dz * xi;
                        }
                    }
                }
                bce_with_logit(logit, y)
            }
            Architecture::FeedForward => {
                let mut hidden = [0.0; HIDDEN];
                let mut logit = p[l.b2];
                for h in 0..HIDDEN {
                    let w = &p[l.w1 + h * WINDOW_WIDTH..l.w1 + (h + 1) * WINDOW_WIDTH];
                    hidden[h] = (p[l.b1 + h] + dot(w, x)).max(0.0);
                    logit += p[l.w2 + h] * hidden[h];
                }
                let d = sigmoid(logit) - y;
                grad[l.b2] += d;
                for h in 0..HIDDEN {
                    grad[l.w2 + h] += d * hidden[h];
                    if hidden[h] > 0.0 {
                        let dz = d * p[l.w2 + h];
                        grad[l.b1 + h] += dz;
                        let g = &mut grad[l.w1 + h * WINDOW_WIDTH..l.w1 + (h + 1) * WINDOW_WIDTH];
                        for (gi, xi) in g.iter_mut().zip(x) {
                            *gi += dz * xi;
                        }
                    }
                }
                bce_with_logit(logit, y)
            }
        }
    }

    /// Flat text format: a header with architecture, features and
    /// normalization statistics, followed by one parameter per line. Floats
    /// use shortest round-trip formatting, so a reload is bit-exact.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("spoofsim-detector 1\n");
        s.push_str(&format!("architecture {}\n", self.arch.tag()));
        s.push_str(&format!("features {}\n", self.features.label()));
        s.push_str(&format!("hidden {HIDDEN}\nkernel {KERNEL}\n"));
        s.push_str(&format!("price_mean {:?}\n", self.stats.price_mean));
        s.push_str(&format!("price_sd {:?}\n", self.stats.price_sd));
        s.push_str(&format!("qty_mean {:?}\n", self.stats.qty_mean));
        s.push_str(&format!("qty_sd {:?}\n", self.stats.qty_sd));
        s.push_str(&format!("params {}\n", self.params.len()));
        for p in &self.params {
            s.push_str(&format!("{p:?}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DetectorError> {
        let bad = |m: &str| DetectorError::Format(m.to_string());
        let mut lines = text.lines();
        let mut field = |name: &str| -> Result<String, DetectorError> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| bad(&format!("malformed line {line:?}")))?;
            if k != name {
                return Err(bad(&format!("expected {name}, found {k}")));
            }
            Ok(v.to_string())
        };
        if field("spoofsim-detector")? != "1" {
            return Err(bad("unsupported version"));
        }
        let arch: Architecture = field("architecture")?.parse().map_err(|e: String| bad(&e))?;
        let features = FeatureSet::parse(&field("features")?).map_err(|e| bad(&e.to_string()))?;
        let num = |s: String| s.parse::<f64>().map_err(|e| bad(&e.to_string()));
        if field("hidden")? != HIDDEN.to_string() || field("kernel")? != KERNEL.to_string() {
            return Err(bad("layer shape mismatch"));
        }
        let stats = NormStats {
            price_mean: num(field("price_mean")?)?,
            price_sd: num(field("price_sd")?)?,
            qty_mean: num(field("qty_mean")?)?,
            qty_sd: num(field("qty_sd")?)?,
        };
        let n: usize = field("params")?.parse().map_err(|_| bad("param count"))?;
        if n != arch.param_count() {
            return Err(bad("parameter count does not match architecture"));
        }
        let params = lines
            .by_ref()
            .take(n)
            .map(|l| l.trim().parse::<f64>().map_err(|e| bad(&e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if params.len() != n {
            return Err(bad("truncated parameter list"));
        }
        Ok(Self {
            arch,
            features,
            stats,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DetectorError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DetectorError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ActionType;
    use crate::book::Side;

    fn random_input(seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 1);
        (0..WINDOW_WIDTH).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    /// Central differences against the analytic gradient of the loss.
    fn check_gradients(arch: Architecture, seed: u64) {
        let model = SequenceClassifier::new(arch, FeatureSet::ALL, NormStats::default(), seed);
        let x = random_input(seed + 100);
        for y in [0.0, 1.0] {
            let mut grad = vec![0.0; arch.param_count()];
            model.accumulate_gradient(&x, y, &mut grad);
            let mut rng = stream_rng(seed, 2);
            let h = 1e-6;
            let mut checked = 0;
            for _ in 0..400 {
                let i = rng.gen_range(0..arch.param_count());
                let mut plus = model.clone();
                plus.params[i] += h;
                let mut minus = model.clone();
                minus.params[i] -= h;
                let fd = (bce_with_logit(plus.logit(&x), y) - bce_with_logit(minus.logit(&x), y))
                    / (2.0 * h);
                let g = grad[i];
                if fd.abs().max(g.abs()) < 1e-7 {
                    continue;
                }
                let rel = (fd - g).abs() / fd.abs().max(g.abs());
                assert!(rel < 1e-4, "{arch} param {i}: analytic {g} vs numeric {fd}");
                checked += 1;
            }
            assert!(checked > 20, "too few non-zero gradients checked ({checked})");
        }
    }

    #[test]
    fn cnn_gradients_match_finite_differences() {
        for seed in 0..3 {
            check_gradients(Architecture::TemporalCnn, seed);
        }
    }

    #[test]
    fn ffnn_gradients_match_finite_differences() {
        for seed in 0..3 {
            check_gradients(Architecture::FeedForward, seed);
        }
    }

    #[test]
    fn theta_is_deterministic_and_in_unit_interval() {
        let m = SequenceClassifier::new(
            Architecture::TemporalCnn,
            FeatureSet::ALL,
            NormStats::default(),
            4,
        );
        let x = random_input(9);
        let a = m.theta(&x).unwrap();
        assert_eq!(a, m.theta(&x).unwrap());
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn theta_rejects_wrong_shape() {
        let m = SequenceClassifier::new(
            Architecture::FeedForward,
            FeatureSet::DT,
            NormStats::default(),
            4,
        );
        assert!(matches!(
            m.theta(&[0.0; 79]),
            Err(DetectorError::Shape { expected: 80, got: 79 })
        ));
    }

    #[test]
    fn zero_logit_gives_one_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        let mut m = SequenceClassifier::new(
            Architecture::TemporalCnn,
            FeatureSet::DT,
            NormStats::default(),
            1,
        );
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(m.theta(&[0.3; WINDOW_WIDTH]).unwrap(), 0.5);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        for arch in [Architecture::TemporalCnn, Architecture::FeedForward] {
            let stats = NormStats {
                price_mean: -3.123456789,
                price_sd: 7.1,
                qty_mean: 412.5,
                qty_sd: 0.1 + 0.2,
            };
            let m = SequenceClassifier::new(arch, FeatureSet::DT, stats, 11);
            let back = SequenceClassifier::from_text(&m.to_text()).unwrap();
            assert_eq!(back, m);
            let rows = vec![
                RawAction {
                    action_type: ActionType::Cancel,
                    direction: Side::Buy,
                    rel_price: -5,
                    quantity: 1000,
                };
                WINDOW_LEN
            ];
            assert_eq!(
                back.theta_raw(&rows).unwrap().to_bits(),
                m.theta_raw(&rows).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn truncated_model_file_is_rejected() {
        let m = SequenceClassifier::new(
            Architecture::TemporalCnn,
            FeatureSet::DT,
            NormStats::default(),
            1,
        );
        let text = m.to_text();
        let cut: String = text.lines().take(20).collect::<Vec<_>>().join("\n");
        assert!(SequenceClassifier::from_text(&cut).is_err());
    }
}
