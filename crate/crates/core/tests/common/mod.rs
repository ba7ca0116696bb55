//! Shared helpers for the integration suites: an independent brute-force
//! kappa oracle (per-example and per-example-pair counting loops, no
//! matrix algebra) and random instance generation.
#![allow(dead_code)] // not every suite uses every helper

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use softord::heads::one_hot_matrix;
use softord::qwk::{self, WeightKind};
use softord::tensor::Tensor;

pub fn weight(i: usize, j: usize, kind: WeightKind) -> f64 {
    match kind {
        WeightKind::Quadratic => {
            let d = i as f64 - j as f64;
            d * d
        }
        WeightKind::Discrete => {
            if i == j {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// κ by counting loops: observed disagreement sums per example, expected
/// disagreement sums per example pair. Returns `None` when the expected
/// disagreement vanishes (degenerate agreement-by-construction instances).
pub fn oracle_kappa(labels: &[usize], probs: &[Vec<f64>], kind: WeightKind) -> Option<f64> {
    let n = labels.len();
    let k = probs[0].len();
    let mut total_mass = 0.0;
    for row in probs {
        for &p in row {
            total_mass += p;
        }
    }
    let mut observed = 0.0;
    for r in 0..n {
        for j in 0..k {
            observed += weight(labels[r], j, kind) * probs[r][j];
        }
    }
    let mut expected = 0.0;
    for r in 0..n {
        for s in 0..n {
            for j in 0..k {
                expected += weight(labels[r], j, kind) * probs[s][j];
            }
        }
    }
    expected /= total_mass;
    if expected == 0.0 {
        return None;
    }
    Some(1.0 - observed / expected)
}

/// A random (labels, predictions) instance with n ≤ 20, k ≤ 6; the
/// prediction rows are either hard one-hot or strictly positive stochastic.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<Vec<f64>>) {
    let n = rng.random_range(2..=20usize);
    let k = rng.random_range(2..=6usize);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let hard = rng.random::<bool>();
    let probs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if hard {
                let mut row = vec![0.0; k];
                row[rng.random_range(0..k)] = 1.0;
                row
            } else {
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            }
        })
        .collect();
    (labels, probs)
}

pub fn to_tensor(probs: &[Vec<f64>]) -> Tensor {
    let n = probs.len();
    let k = probs[0].len();
    Tensor::matrix(n, k, probs.iter().flatten().copied().collect()).unwrap()
}

/// Compares the library kappa against the loop oracle over random
/// instances; returns the worst absolute deviation seen.
pub fn oracle_deviation(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (labels, probs) = random_instance(&mut rng);
        let k = probs[0].len();
        let y = one_hot_matrix(&labels, k);
        let p = to_tensor(&probs);
        for kind in [WeightKind::Quadratic, WeightKind::Discrete] {
            // degenerate instances are exercised in unit tests
            let Some(oracle) = oracle_kappa(&labels, &probs, kind) else {
                continue;
            };
            let w = qwk::weight_matrix(k, kind).unwrap();
            let lib = qwk::kappa(&y, &p, &w).unwrap();
            worst = worst.max((lib - oracle).abs());
        }
    }
    worst
}
