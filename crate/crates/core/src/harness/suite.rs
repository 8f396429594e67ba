//! Shipped synthetic scenario suites.

use crate::scenario::{generate_synthetic, Scenario, Template};

pub const TRAIN_SUITE_SEED: u64 = 0;
pub const EVAL_SUITE_SEED: u64 = 1_000_000;
pub const EVAL_SUITE_SIZE: usize = 50;
pub const SUITE_BACKGROUND: usize = 2;

/// `count` scenarios cycling through the templates, seeds `base_seed..`.
pub fn synthetic_suite(base_seed: u64, count: usize, n_background: usize) -> Vec<Scenario> {
    (0..count)
        .map(|i| {
            let t = Template::ALL[i % Template::ALL.len()];
            generate_synthetic(base_seed + i as u64, t, n_background)
        })
        .collect()
}

/// The 50-scenario evaluation suite. Its seeds are disjoint from the training suite's.
pub fn evaluation_suite() -> Vec<Scenario> {
    synthetic_suite(EVAL_SUITE_SEED, EVAL_SUITE_SIZE, SUITE_BACKGROUND)
}

pub fn training_suite(count: usize) -> Vec<Scenario> {
    assert!((count as u64) < EVAL_SUITE_SEED, "training seeds must stay below the evaluation range");
    synthetic_suite(TRAIN_SUITE_SEED, count, SUITE_BACKGROUND)
}

/// Deterministic 80/20 split: every fifth item goes to the held-out part.
pub fn split_80_20<T: Clone>(items: &[T]) -> (Vec<T>, Vec<T>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, x) in items.iter().enumerate() {
        if i % 5 == 4 {
            held.push(x.clone());
        } else {
            train.push(x.clone());
        }
    }
    (train, held)
}
