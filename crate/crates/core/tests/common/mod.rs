#![allow(dead_code)]

use std::path::PathBuf;

use abcboost::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Roughly normal noise from a sum of uniforms.
fn noise(rng: &mut ChaCha8Rng) -> f64 {
    (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.5
}

/// Overlapping Gaussian-ish classes; the last feature is rounded to integers so
/// the tree learner sees ties.
pub fn toy(n: usize, k: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<f64> = (0..k * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for j in 0..d {
            let v = centres[c * d + j] + noise(&mut rng);
            x.push(if j + 1 == d { (v * 2.0).round() } else { v });
        }
        y.push(c);
    }
    Dataset::new(x, d, y, k).unwrap()
}

/// The N = 300, K = 5, D = 4 dataset used by the structural checks.
pub fn standard_toy() -> Dataset {
    toy(300, 5, 4, 20090601)
}

pub fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}
