//! Oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spoofsim::book::{LimitOrder, OrderBook, Qty, Side};
use spoofsim::dataset::{FeatureSet, NormStats, WINDOW_WIDTH};
use spoofsim::detector::{bce_with_logit, Architecture, SequenceClassifier};
use spoofsim::experiment::{
    normative_specs, restricted_specs, run_fixed, simulate, synthesize, train_detector, train_q, NORMATIVE, RESTRICTED,
};
use spoofsim::kernel::SimTime;
use spoofsim::market::Population;
use spoofsim::policy::{TradeAction, TraderState};
use spoofsim::qlearn::{select_action, ExplorationStrategy, QTable};
use spoofsim::report;
use spoofsim::scenario::Scenario;

// ---- 3-state deterministic MDP -------------------------------------------

pub const GAMMA: f64 = 0.9;
const N: usize = 3;
const A: usize = TradeAction::ALL.len();

/// `(reward, next state or None when terminal)`.
fn step(s: usize, a: usize) -> (f64, Option<usize>) {
    let r = [
        [1.0, -0.5, 0.0, 2.0, 0.3, -1.0],
        [0.0, 3.0, -2.0, 0.5, 1.0, 0.0],
        [-1.0, 0.0, 4.0, 0.0, -0.3, 0.2],
    ][s][a];
    let next = if a == 5 && s == 2 { None } else { Some((s + a + 1) % N) };
    (r, next)
}

pub fn value_iteration() -> [[f64; A]; N] {
    let mut q = [[0.0; A]; N];
    for _ in 0..2_000 {
        let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        for (s, row) in q.iter_mut().enumerate() {
            for (a, x) in row.iter_mut().enumerate() {
                let (r, next) = step(s, a);
                *x = r + next.map_or(0.0, |n| GAMMA * v[n]);
            }
        }
    }
    q
}

fn max_error(table: &QTable, oracle: &[[f64; A]; N]) -> f64 {
    let mut worst: f64 = 0.0;
    for (s, row) in oracle.iter().enumerate() {
        let st = TraderState::from_key(s as u8);
        for (a, v) in row.iter().enumerate() {
            worst = worst.max((table.get(&st, TradeAction::ALL[a]) - v).abs());
        }
    }
    worst
}

/// Sup-norm error against value iteration every 10k steps of ε=1 Q-learning.
pub fn q_learning_errors(steps: u64, seed: u64) -> Vec<f64> {
    let oracle = value_iteration();
    let mut table = QTable::new(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strategy = ExplorationStrategy::epsilon_random();
    let mut s = 0usize;
    let mut errors = vec![max_error(&table, &oracle)];
    for i in 1..=steps {
        let st = TraderState::from_key(s as u8);
        let a = select_action(&st, &table, &strategy, &TradeAction::ALL, 0, i, None, &mut rng);
        let (r, next) = step(s, a.index());
        let next_state = next.map(|n| TraderState::from_key(n as u8));
        table.update(&st, a, r, next_state.as_ref(), GAMMA, &TradeAction::ALL).unwrap();
        s = next.unwrap_or_else(|| rng.gen_range(0..N));
        if i % 10_000 == 0 {
            errors.push(max_error(&table, &oracle));
        }
    }
    errors
}

// ---- order book stream -----------------------------------------------------

#[derive(Default)]
pub struct Ledger {
    pub submitted: u64,
    pub cancelled: u64,
    pub traded: u64,
}

impl Ledger {
    pub fn balanced(&self, book: &OrderBook) -> bool {
        let resting = book.total_resting(Side::Buy) + book.total_resting(Side::Sell);
        self.submitted == resting + self.cancelled + 2 * self.traded
    }
}

pub enum Op {
    Submit { side: Side, price: i64, qty: Qty },
    Cancel(u64),
}

pub fn apply(book: &mut OrderBook, ledger: &mut Ledger, next_id: &mut u64, op: Op, t: u64) -> Result<(), String> {
    match op {
        Op::Submit { side, price, qty } => {
            *next_id += 1;
            let out = book
                .submit(LimitOrder {
                    id: *next_id,
                    agent: (*next_id % 7) as usize,
                    side,
                    price,
                    qty,
                    entry_time: SimTime(t),
                })
                .map_err(|e| e.to_string())?;
            ledger.submitted += qty;
            let filled: Qty = out.trades.iter().map(|t| t.qty).sum();
            ledger.traded += filled;
            if out.trades.iter().any(|t| t.qty == 0) || filled + out.resting != qty {
                return Err(format!("order {next_id}: filled {filled} + resting {} != {qty}", out.resting));
            }
        }
        Op::Cancel(id) => ledger.cancelled += book.cancel(id),
    }
    Ok(())
}

/// Random submit/cancel stream; checks uncrossed after every operation and
/// full structure plus conservation every `check_every` operations.
pub fn book_stream(ops: u64, seed: u64, check_every: u64) -> Result<Ledger, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut book = OrderBook::new();
    let mut ledger = Ledger::default();
    let mut next_id = 0;
    for t in 0..ops {
        let op = if next_id > 0 && rng.gen_bool(0.45) {
            Op::Cancel(rng.gen_range(1..=next_id))
        } else {
            let side = if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell };
            Op::Submit {
                side,
                price: rng.gen_range(9_950..=10_050),
                qty: rng.gen_range(1..=100),
            }
        };
        apply(&mut book, &mut ledger, &mut next_id, op, t)?;
        if let (Some(b), Some(a)) = (book.best_bid(), book.best_ask()) {
            if b >= a {
                return Err(format!("crossed at op {t}: {b} >= {a}"));
            }
        }
        if t % check_every == 0 || t + 1 == ops {
            book.check_invariants()?;
            if !ledger.balanced(&book) {
                return Err(format!("conservation broken at op {t}"));
            }
        }
    }
    Ok(ledger)
}

// ---- detector gradients ----------------------------------------------------

/// Largest relative gap between analytic and central-difference gradients
/// over `samples` random parameters, skipping near-zero entries.
pub fn gradient_error(arch: Architecture, seed: u64, samples: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = SequenceClassifier::new(arch, FeatureSet::ALL, NormStats::default(), seed);
    let x: Vec<f64> = (0..WINDOW_WIDTH).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let (mut worst, mut checked) = (0.0f64, 0);
    for y in [0.0, 1.0] {
        let mut grad = vec![0.0; model.params().len()];
        model.accumulate_gradient(&x, y, &mut grad);
        let h = 1e-6;
        for _ in 0..samples {
            let i = rng.gen_range(0..grad.len());
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let fd = (bce_with_logit(plus.logit(&x), y) - bce_with_logit(minus.logit(&x), y)) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs());
            if scale < 1e-7 {
                continue;
            }
            worst = worst.max((fd - grad[i]).abs() / scale);
            checked += 1;
        }
    }
    (worst, checked)
}

// ---- determinism -----------------------------------------------------------

pub fn tiny(out: &Path) -> Scenario {
    let mut sc = Scenario::default();
    sc.output_dir = out.to_path_buf();
    sc.market.day_secs = 1_800.0;
    sc.market.warmup_secs = 300.0;
    sc.market.population = Population { zi: 12, value: 12, obi: 2 };
    sc.synthesis.days = 4;
    sc.detector.train.epochs = 2;
    sc.fixed_eval_days = 2;
    sc.learning.train_days = 2;
    sc.learning.eval_days = 1;
    sc.learning.restricted_variants.truncate(2);
    sc
}

/// Simulation, synthesis, detector, fixed, restricted and guided learners,
/// then the report, all into `out`.
pub fn tiny_pipeline(out: &Path) {
    let sc = tiny(out);
    simulate(&sc, 1, true, true).unwrap();
    let corpus = synthesize(&sc).unwrap();
    let model = Arc::new(train_detector(&sc, &corpus).unwrap().model);
    run_fixed(&sc, Some(&model)).unwrap();
    train_q(&sc, RESTRICTED, &restricted_specs(&sc), Some(&model)).unwrap();
    train_q(&sc, NORMATIVE, &normative_specs(&sc), Some(&model)).unwrap();
    report::build(out).unwrap().write(out).unwrap();
}

/// Every file under `root`, keyed by relative path.
pub fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Names of files that differ or exist on one side only.
pub fn differing(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut names: Vec<String> = a.keys().chain(b.keys()).cloned().collect();
    names.sort();
    names.dedup();
    names.into_iter().filter(|n| a.get(n) != b.get(n)).collect()
}
