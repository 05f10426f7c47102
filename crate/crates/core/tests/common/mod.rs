#![allow(dead_code)]

use surrogate_pgd::data::Dataset;
use surrogate_pgd::numerics::{DenseMatrix, RandomStream};

pub fn dataset(rows: Vec<Vec<f64>>, labels: Vec<i8>, groups: Option<Vec<u8>>) -> Dataset {
    let d = rows[0].len();
    Dataset::new(DenseMatrix::from_rows(&rows).unwrap(), labels, groups, vec![false; d]).unwrap()
}

/// Two well separated Gaussian blobs in the plane.
pub fn separable(per_class: usize, seed: u64) -> Dataset {
    let mut rng = RandomStream::new(seed, 7);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * per_class {
        let (c, y) = if i % 2 == 0 { (1.5, 1) } else { (-1.5, -1) };
        rows.push(vec![c + 0.5 * rng.gaussian(), c + 0.5 * rng.gaussian()]);
        labels.push(y);
    }
    dataset(rows, labels, None)
}

/// Overlapping classes with two groups, every group holding both labels.
pub fn noisy_grouped(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = RandomStream::new(seed, 11);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for i in 0..n {
        let y: i8 = if i % 3 == 0 { 1 } else { -1 };
        let g = ((i / 2) % 2) as u8;
        rows.push((0..d).map(|_| 0.6 * f64::from(y) + rng.gaussian()).collect());
        labels.push(y);
        groups.push(g);
    }
    dataset(rows, labels, Some(groups))
}
