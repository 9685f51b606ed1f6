//! Seeded synthetic problems: Gaussian designs with a sparse ground truth.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataio::{Dataset, SparseRow};

/// Ground truth with `k` nonzeros of magnitude in `[1, 2)` and random sign.
fn sparse_truth(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<f64> {
    let mut beta = vec![0.0; n];
    for j in sample(rng, n, k.min(n)) {
        let mag: f64 = rng.random_range(1.0..2.0);
        beta[j] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    beta
}

fn gaussian_rows(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<SparseRow> {
    (0..m)
        .map(|_| {
            let dense: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            SparseRow::from_dense(&dense)
        })
        .collect()
}

/// `y = X β + σ ε` with i.i.d. standard normal `X` and `ε`.
pub fn lasso_problem(m: usize, n: usize, k: usize, noise: f64, seed: u64) -> (Dataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = sparse_truth(&mut rng, n, k);
    let rows = gaussian_rows(&mut rng, m, n);
    let eps = Normal::new(0.0, noise.max(0.0)).expect("finite noise level");
    let labels = rows
        .iter()
        .map(|r| r.dot(&truth) + eps.sample(&mut rng))
        .collect();
    (
        Dataset::new(rows, labels, n).expect("consistent shapes"),
        truth,
    )
}

/// Labels `sign(x^T β + σ ε)` in `{−1, +1}`.
pub fn classification_problem(
    m: usize,
    n: usize,
    k: usize,
    noise: f64,
    seed: u64,
) -> (Dataset, Vec<f64>) {
    let (data, truth) = lasso_problem(m, n, k, noise, seed);
    let labels = data
        .labels()
        .iter()
        .map(|&y| if y >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    let rows = data.rows().to_vec();
    (
        Dataset::new(rows, labels, n).expect("consistent shapes"),
        truth,
    )
}
