//! Tabular Q-learning against value iteration on a small deterministic MDP.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spoofsim::policy::{TradeAction, TraderState};
use spoofsim::qlearn::{boltzmann, select_action, ExplorationStrategy, QTable};

const A: usize = TradeAction::ALL.len();

#[test]
fn q_learning_converges_to_value_iteration() {
    let errors = common::q_learning_errors(300_000, 11);
    // Deterministic transitions make every update a sup-norm contraction.
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "error grew: {errors:?}");
    }
    let last = *errors.last().unwrap();
    assert!(last < 1e-3, "max |Q - Q*| = {last}");
}

#[test]
fn convergence_does_not_depend_on_the_seed() {
    for seed in [1, 2, 3] {
        let last = *common::q_learning_errors(300_000, seed).last().unwrap();
        assert!(last < 1e-3, "seed {seed}: {last}");
    }
}

fn frequencies(table: &QTable, st: &TraderState, strategy: &ExplorationStrategy, n: u64, seed: u64) -> [usize; A] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; A];
    for i in 0..n {
        let a = select_action(st, table, strategy, &TradeAction::ALL, 0, i, None, &mut rng);
        counts[a.index()] += 1;
    }
    counts
}

fn within_five_sd(counts: &[usize; A], probs: &[f64], n: u64) {
    for (c, p) in counts.iter().zip(probs) {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - n as f64 * p).abs() < 5.0 * sd, "{counts:?} vs {probs:?}");
    }
}

#[test]
fn full_exploration_picks_actions_uniformly() {
    let table = QTable::new(5.0);
    let n = 60_000;
    let counts = frequencies(&table, &TraderState::from_key(0), &ExplorationStrategy::epsilon_random(), n, 3);
    within_five_sd(&counts, &[1.0 / A as f64; A], n);
}

#[test]
fn boltzmann_frequencies_follow_the_softmax() {
    let mut table = QTable::new(0.0);
    let st = TraderState::from_key(1);
    let q = [0.0, 1.0, -1.0, 0.5, 2.0, 0.0];
    for (a, v) in TradeAction::ALL.iter().zip(q) {
        table.set(&st, *a, v);
    }
    let n = 100_000;
    let counts = frequencies(&table, &st, &ExplorationStrategy::boltzmann_raw(), n, 5);
    within_five_sd(&counts, &boltzmann(&q), n);
}
