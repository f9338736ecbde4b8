#![allow(dead_code)]

use activereg_core::linalg::{cholesky, SymMatrix};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix(rng: &mut impl Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

/// Standard normal rows rescaled so that `(1/n) V'V = I` exactly.
pub fn whitened_normal_pool(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, d);
    let l = cholesky(&SymMatrix::gram(x.view()).scaled(1.0 / n as f64)).unwrap();
    // V = X L^-T, row by row forward substitution.
    let mut v = x.clone();
    for mut row in v.rows_mut() {
        for i in 0..d {
            let mut s = row[i];
            for k in 0..i {
                s -= l[[i, k]] * row[k];
            }
            row[i] = s / l[[i, i]];
        }
    }
    v
}
