use serde::{Deserialize, Serialize};

use super::SequenceClassifier;
use crate::dataset::Examples;

/// Confusion counts and the derived scores at threshold 0.5.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub mcc: f64,
}

impl std::fmt::Display for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "mcc {:.4} precision {:.4} recall {:.4} (tp {} fp {} tn {} fn {})",
            self.mcc, self.precision, self.recall, self.tp, self.fp, self.tn, self.fn_
        )
    }
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let marginals = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        let mcc = if marginals.contains(&0) {
            0.0
        } else {
            let num = tp as f64 * tn as f64 - fp as f64 * fn_ as f64;
            let den = marginals.iter().map(|&m| m as f64).product::<f64>().sqrt();
            num / den
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            mcc,
        }
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        Self::from_counts(tp, fp, tn, fn_)
    }
}

/// Classifies every example at threshold 0.5 and tallies the confusion matrix.
pub fn evaluate(model: &SequenceClassifier, data: &Examples) -> Metrics {
    let predicted: Vec<bool> = (0..data.len())
        .map(|i| model.logit(data.input(i)) >= 0.0)
        .collect();
    let actual: Vec<bool> = data.y.iter().map(|&y| y >= 0.5).collect();
    Metrics::from_predictions(&predicted, &actual)
}
