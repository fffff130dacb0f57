//! Mean-reverting fundamental value shared by the background population.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::kernel::{stream_rng, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FundamentalProcess {
    /// Long-run mean, cents.
    pub mean: f64,
    /// Fraction of the gap to the mean closed per step.
    pub reversion: f64,
    /// Innovation standard deviation per step, cents.
    pub volatility: f64,
    /// Step length in seconds.
    pub step_secs: f64,
}

impl Default for FundamentalProcess {
    fn default() -> Self {
        Self {
            mean: 10_000.0,
            reversion: 1.0 / 1800.0,
            volatility: 0.8,
            step_secs: 1.0,
        }
    }
}

/// A pre-sampled path of the fundamental for one market day.
#[derive(Clone, Debug)]
pub struct FundamentalPath {
    step: SimTime,
    values: Vec<f64>,
}

impl FundamentalPath {
    /// Samples a path covering `[0, horizon]`, starting at the mean.
    pub fn generate(process: &FundamentalProcess, horizon: SimTime, seed: u64) -> Self {
        let step = SimTime::from_secs_f64(process.step_secs.max(1e-6));
        let n = (horizon.nanos() / step.nanos()) as usize + 2;
        let mut rng = stream_rng(seed, 0xF0F0);
        let mut values = Vec::with_capacity(n);
        let mut x = process.mean;
        for _ in 0..n {
            values.push(x);
            let eps: f64 = rng.sample(StandardNormal);
            x += process.reversion * (process.mean - x) + process.volatility * eps;
            x = x.max(1.0);
        }
        Self { step, values }
    }

    /// Fundamental at time `t`, in cents (piecewise constant per step).
    pub fn value_at(&self, t: SimTime) -> f64 {
        let i = (t.nanos() / self.step.nanos()) as usize;
        self.values[i.min(self.values.len() - 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draws an observation of `value` with Gaussian noise of standard deviation `sd`.
pub fn observe<R: Rng>(rng: &mut R, value: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        value
    } else {
        value + sd * rng.sample::<f64, _>(StandardNormal)
    }
}
