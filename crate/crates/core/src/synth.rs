//! Seeded synthetic datasets for tests, benchmarks and demos.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{DataMatrix, LabelVector};
use crate::error::Result;

/// Isotropic Gaussian blobs, `per_blob` points around each centre, rows
/// grouped by blob. All centres must share one dimension.
pub fn gaussian_blobs(centres: &[Vec<f64>], per_blob: usize, sd: f64, seed: u64) -> Result<(DataMatrix, LabelVector)> {
    let d = centres.first().map_or(0, Vec::len);
    let n = centres.len() * per_blob;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).map_err(|e| crate::CnsError::InvalidData(e.to_string()))?;
    let mut values = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for (b, centre) in centres.iter().enumerate() {
        for p in 0..per_blob {
            let mut row = values.row_mut(b * per_blob + p);
            for (v, c) in row.iter_mut().zip(centre) {
                *v = c + noise.sample(&mut rng);
            }
            labels.push(b);
        }
    }
    Ok((DataMatrix::new(values)?, LabelVector::with_groups(labels, centres.len().max(1))?))
}

/// `count` centres drawn uniformly from `[-spread, spread]^d`.
pub fn random_centres(count: usize, d: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..d).map(|_| rng.random_range(-spread..=spread)).collect())
        .collect()
}

/// Two blobs whose centres are `±separation/2` along the all-ones direction.
pub fn two_blobs(d: usize, per_blob: usize, separation: f64, seed: u64) -> Result<(DataMatrix, LabelVector)> {
    let offset = separation / 2.0 / (d as f64).sqrt();
    let centres = vec![vec![offset; d], vec![-offset; d]];
    gaussian_blobs(&centres, per_blob, 1.0, seed)
}
