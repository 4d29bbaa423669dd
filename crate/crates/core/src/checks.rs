//! Numerical self-checks used by the `selfcheck` command and the test suites.

use serde::Serialize;

use crate::error::Result;
use crate::gat::{AttnIndex, GatConfig, LayerConfig, SentimentGat};
use crate::graph::class_weights;
use crate::nn::{finite_diff_grad, grouped_softmax, max_relative_error, RngStream};
use crate::synthetic::random_graph;

pub const GRADIENT_TOL: f64 = 1e-4;
pub const FD_EPS: f64 = 1e-5;
pub const NORMALIZATION_TOL: f64 = 1e-9;
pub const SHIFT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst observed discrepancy.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
        }
    }
}

/// Default config shrunk to 2 heads of 3 embedding and 1 sentiment channel.
pub fn small_config(self_loops: bool) -> GatConfig {
    let l = LayerConfig {
        heads: 2,
        embed_out: 3,
        sent_out: 1,
    };
    GatConfig {
        layer1: l,
        layer2: l,
        self_loops,
        ..GatConfig::default()
    }
}

/// Max relative error between analytic and central-difference gradients of
/// the class-weighted loss over all samples of a random 4-sample graph.
pub fn gradient_check(seed: u64, self_loops: bool) -> Result<f64> {
    let graph = random_graph(4, 6, seed, false);
    let mut model = SentimentGat::new(small_config(self_loops), seed)?;
    let index = AttnIndex::new(&graph, self_loops);
    let batch: Vec<usize> = (0..graph.n_samples()).collect();
    let weights = class_weights(&graph.labels())?;

    model.zero_grad();
    model.loss(&graph, &index, &batch, weights.as_slice(), None, true)?;
    let analytic = model.flat_grads();

    let base = model.clone();
    let mut failure = None;
    let numeric = finite_diff_grad(
        |x| {
            let mut m = base.clone();
            let out = m
                .set_flat_values(x)
                .and_then(|_| m.loss(&graph, &index, &batch, weights.as_slice(), None, false));
            out.unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        },
        &base.flat_values(),
        FD_EPS,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(max_relative_error(&analytic, &numeric?))
}

/// Largest `|Σα − 1|` over every destination group and head of both layers,
/// across `trials` random graphs. Coefficients outside `(0, 1]` count as a
/// discrepancy of 1.
pub fn attention_normalization(trials: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let n_samples = 1 + rng.below(12);
        let n_comments = 2 + rng.below(10);
        let dedup = t % 2 == 0;
        let self_loops = t % 4 < 2;
        let graph = random_graph(n_samples, n_comments, rng.next_u64(), dedup);
        let model = SentimentGat::new(small_config(self_loops), rng.next_u64())?;
        let index = AttnIndex::new(&graph, self_loops);
        let pass = model.forward(&graph, &index, None)?;
        for (cache, heads) in [(&pass.layer1, model.config.layer1.heads), (&pass.layer2, model.config.layer2.heads)] {
            if cache.alpha.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
                worst = worst.max(1.0);
            }
            for i in 0..graph.n_nodes() {
                for k in 0..heads {
                    let s: f64 = index.group(i).map(|e| cache.alpha[e * heads + k]).sum();
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Largest change in grouped-softmax output when a constant is added to a
/// whole group, over `trials` random group layouts.
pub fn softmax_shift_invariance(trials: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut offsets = vec![0];
        for _ in 0..1 + rng.below(8) {
            let last = *offsets.last().expect("non-empty");
            offsets.push(last + 1 + rng.below(6));
        }
        let n = *offsets.last().expect("non-empty");
        let values: Vec<f64> = (0..n).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let mut shifted = values.clone();
        for w in offsets.windows(2) {
            let c = rng.uniform(-100.0, 100.0);
            shifted[w[0]..w[1]].iter_mut().for_each(|v| *v += c);
        }
        let a = grouped_softmax(&values, &offsets)?;
        let b = grouped_softmax(&shifted, &offsets)?;
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
    }
    Ok(worst)
}

/// Number of leading draws on which two equally seeded streams disagree.
pub fn rng_reproducibility(draws: usize, seed: u64) -> f64 {
    let (mut a, mut b) = (RngStream::new(seed), RngStream::new(seed));
    (0..draws).filter(|_| a.next_u64() != b.next_u64()).count() as f64
}

pub fn run_all(seed: u64, trials: usize) -> Result<Vec<CheckResult>> {
    Ok(vec![
        CheckResult::new("gradient_self_loops", gradient_check(seed, true)?, GRADIENT_TOL),
        CheckResult::new("gradient_no_self_loops", gradient_check(seed, false)?, GRADIENT_TOL),
        CheckResult::new("attention_normalization", attention_normalization(trials, seed)?, NORMALIZATION_TOL),
        CheckResult::new("softmax_shift_invariance", softmax_shift_invariance(trials, seed)?, SHIFT_TOL),
        CheckResult::new("rng_reproducibility", rng_reproducibility(10_000, seed), 0.0),
    ])
}
