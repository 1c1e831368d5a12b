use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::gbdt::FeatureMatrix;

/// Isotropic Gaussian clusters.
#[derive(Debug, Clone)]
pub struct Blobs {
    pub x: FeatureMatrix,
    pub y: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
}

/// `n` points in `dim` dimensions spread over `classes` clusters (round
/// robin). Centres are drawn uniformly from `[-separation, separation]^dim`;
/// points scatter around them with standard deviation `sigma`.
pub fn gaussian_blobs(n: usize, classes: usize, dim: usize, separation: f64, sigma: f64, seed: u64) -> Blobs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random_range(-separation..=separation)).collect())
        .collect();
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let mut data = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        data.extend(centers[c].iter().map(|m| m + noise.sample(&mut rng)));
        y.push(c);
    }
    Blobs {
        x: FeatureMatrix::new(data, n, dim).expect("shape"),
        y,
        centers,
    }
}

/// Index of the nearest centre by Euclidean distance.
pub fn nearest_center(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let d = |c: &Vec<f64>| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..centers.len()).min_by(|&a, &b| d(&centers[a]).total_cmp(&d(&centers[b]))).unwrap_or(0)
}
