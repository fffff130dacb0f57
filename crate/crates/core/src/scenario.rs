//! Scenario files: everything needed to reproduce a run, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::Qty;
use crate::dataset::FeatureSet;
use crate::detector::{AblationConfig, Architecture, TrainConfig};
use crate::market::{MarketConfig, Population};
use crate::qlearn::ExplorationStrategy;
use crate::spoof::SpoofConfig;
use crate::trader::{LearnerConfig, TraderConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Spoofing-agent sweep over quote size and depth, plus the honest cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub quote_sizes: Vec<Qty>,
    /// Depth used while sweeping quote size.
    pub base_depth: i64,
    pub quote_depths: Vec<i64>,
    /// Size used while sweeping depth.
    pub base_size: Qty,
    pub days_per_cell: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            quote_sizes: vec![500, 1000, 2500, 5000],
            base_depth: 5,
            quote_depths: vec![3, 4, 5, 6, 7, 8],
            base_size: 2500,
            days_per_cell: 2,
        }
    }
}

/// Detector corpus generation: one spoofing-agent configuration per day,
/// cycling through the grid and an honest cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub days: u32,
    pub quote_sizes: Vec<Qty>,
    pub quote_depths: Vec<i64>,
    pub include_honest: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            days: 10,
            quote_sizes: vec![1000, 2500, 5000],
            quote_depths: vec![3, 5, 8],
            include_honest: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub architecture: Architecture,
    /// Feature letters, e.g. `"DT"`.
    pub features: String,
    pub train: TrainConfig,
    pub split_seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::TemporalCnn,
            features: "DT".into(),
            train: TrainConfig::default(),
            split_seed: 5,
        }
    }
}

impl DetectorConfig {
    pub fn feature_set(&self) -> Result<FeatureSet, ScenarioError> {
        FeatureSet::parse(&self.features).map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub train_days: u32,
    pub eval_days: u32,
    pub replications: u32,
    /// Base learner settings; the strategy and action set are overridden per stage.
    pub learner: LearnerConfig,
    pub restricted_variants: Vec<ExplorationStrategy>,
    /// Strategy of the unconstrained and guided learners.
    pub strategy: ExplorationStrategy,
    /// Passive order quantities swept for the unconstrained learner.
    pub passive_quantities: Vec<Qty>,
    /// Passive quantity of the guided learners and of the unconstrained row
    /// in the final comparison.
    pub comparison_quantity: Qty,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            train_days: 10,
            eval_days: 10,
            replications: 4,
            learner: LearnerConfig::default(),
            restricted_variants: vec![
                ExplorationStrategy::epsilon_random(),
                ExplorationStrategy::epsilon_step(10),
                ExplorationStrategy::epsilon_decay(),
                ExplorationStrategy::boltzmann_raw(),
                ExplorationStrategy::boltzmann_scaled(),
            ],
            strategy: ExplorationStrategy::boltzmann_scaled(),
            passive_quantities: vec![750, 1000, 1250, 1500, 2000, 2500],
            comparison_quantity: 2500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub market: MarketConfig,
    pub spoof: SpoofConfig,
    pub sweep: SweepConfig,
    pub synthesis: SynthesisConfig,
    pub detector: DetectorConfig,
    pub ablation: AblationConfig,
    pub trader: TraderConfig,
    /// Evaluation days per fixed policy.
    pub fixed_eval_days: u32,
    pub learning: LearningConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            output_dir: PathBuf::from("runs/desk"),
            market: MarketConfig::default(),
            spoof: SpoofConfig::default(),
            sweep: SweepConfig::default(),
            synthesis: SynthesisConfig::default(),
            detector: DetectorConfig::default(),
            ablation: AblationConfig::default(),
            trader: TraderConfig::default(),
            fixed_eval_days: 20,
            learning: LearningConfig::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Full-size population, more days and replications.
    pub fn paper_scale(mut self) -> Self {
        self.market.population = Population::paper();
        self.output_dir = PathBuf::from("runs/paper");
        self.sweep.days_per_cell = 20;
        self.synthesis.days = 40;
        self.fixed_eval_days = 50;
        self.learning.replications = 10;
        self.learning.eval_days = 20;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        let m = &self.market;
        if !(m.day_secs > 0.0) || !(m.warmup_secs >= 0.0) || m.warmup_secs >= m.day_secs {
            return bad(format!("day_secs {} / warmup_secs {}", m.day_secs, m.warmup_secs));
        }
        if m.tick <= 0 {
            return bad(format!("tick {}", m.tick));
        }
        if !(m.obi.entry_threshold > 0.5 && m.obi.entry_threshold <= 1.0) {
            return bad(format!("obi entry threshold {} outside (0.5, 1]", m.obi.entry_threshold));
        }
        if m.latency.experimental_ns == 0
            || m.latency.experimental_ns >= m.latency.obi_min_us * 1_000
            || m.latency.obi_min_us > m.latency.obi_max_us
            || m.latency.background_min_us > m.latency.background_max_us
        {
            return bad("latencies must be positive, ordered, and lowest for the experimental agent".into());
        }
        let depths = self
            .sweep
            .quote_depths
            .iter()
            .chain(&self.synthesis.quote_depths)
            .chain(std::iter::once(&self.sweep.base_depth))
            .chain(std::iter::once(&self.spoof.quote_depth));
        for &d in depths {
            if !(3..=8).contains(&d) {
                return bad(format!("quote depth {d} outside [3, 8]"));
            }
        }
        if self
            .sweep
            .quote_sizes
            .iter()
            .chain(&self.synthesis.quote_sizes)
            .any(|&q| q == 0)
        {
            return bad("quote sizes must be positive".into());
        }
        if self.synthesis.days == 0 {
            return bad("synthesis needs at least one day".into());
        }
        self.detector.feature_set()?;
        if self.learning.learner.gamma < 0.0 || self.learning.learner.gamma > 1.0 {
            return bad(format!("gamma {}", self.learning.learner.gamma));
        }
        if self.trader.transaction_cost < 0.0 {
            return bad("transaction cost must be non-negative".into());
        }
        if self.learning.comparison_quantity == 0 || self.trader.passive_size == 0 {
            return bad("passive quantities must be positive".into());
        }
        if self.learning.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let sc = Scenario::default();
        let back = Scenario::from_toml(&sc.to_toml()).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn empty_file_is_the_desk_scenario() {
        assert_eq!(Scenario::from_toml("").unwrap(), Scenario::default());
    }

    #[test]
    fn partial_files_override_only_named_fields() {
        let sc = Scenario::from_toml("seed = 9\n[market.population]\nzi = 7\n").unwrap();
        assert_eq!(sc.seed, 9);
        assert_eq!(sc.market.population.zi, 7);
        assert_eq!(sc.market.population.value, Population::desk().value);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            Scenario::from_toml("[sweep]\nquote_depths = [2]\n"),
            Err(ScenarioError::Invalid(_))
        ));
        assert!(matches!(
            Scenario::from_toml("[market.obi]\nentry_threshold = 0.4\n"),
            Err(ScenarioError::Invalid(_))
        ));
        assert!(matches!(Scenario::from_toml("bogus = 1\n"), Err(ScenarioError::Parse(_))));
        assert!(matches!(
            Scenario::from_toml("[detector]\nfeatures = \"XY\"\n"),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn paper_scale_uses_the_full_population() {
        let sc = Scenario::default().paper_scale();
        assert_eq!(sc.market.population, Population::paper());
        assert_eq!(sc.learning.replications, 10);
        sc.validate().unwrap();
    }
}
