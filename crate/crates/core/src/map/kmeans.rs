use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::descriptor::{l2_sq, normalize};

/// Lloyd iteration settings shared by vocabulary and PQ training.
#[derive(Clone, Copy, Debug)]
pub(crate) struct KMeansParams {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    /// Project centroids back onto the unit sphere after every update.
    pub unit_centroids: bool,
}

/// Nearest centroid by squared L2, lowest index on ties.
#[inline]
pub(crate) fn nearest(centroids: &[f32], dim: usize, v: &[f32]) -> (usize, f32) {
    let mut best = (0usize, f32::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_sq(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. Returns `k × dim`
/// centroids. Requires `data.len() / dim >= k`.
pub(crate) fn kmeans(data: &[f32], dim: usize, k: usize, seed: u64, params: KMeansParams) -> Vec<f32> {
    let n = data.len() / dim;
    debug_assert!(n >= k && k >= 1);
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut closest: Vec<f32> = (0..n).map(|i| l2_sq(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = closest.iter().map(|d| *d as f64).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in closest.iter().enumerate() {
                target -= *d as f64;
                if target < 0.0 && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            // guard against rounding landing on an already chosen sample
            if closest[chosen] == 0.0 {
                closest.iter().position(|d| *d > 0.0).unwrap_or(chosen)
            } else {
                chosen
            }
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, d) in closest.iter_mut().enumerate() {
            let nd = l2_sq(row(i), &c);
            if nd < *d {
                *d = nd;
            }
        }
        centroids.extend_from_slice(&c);
    }

    let mut assignment = vec![0usize; n];
    let mut prev_error = f64::INFINITY;
    for _ in 0..params.max_iterations {
        let mut error = 0.0f64;
        for i in 0..n {
            let (c, d) = nearest(&centroids, dim, row(i));
            assignment[i] = c;
            error += d as f64;
        }
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += *x as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut mean: Vec<f32> = sums[c * dim..(c + 1) * dim]
                .iter()
                .map(|s| (s / counts[c] as f64) as f32)
                .collect();
            if params.unit_centroids && !normalize(&mut mean) {
                continue;
            }
            centroids[c * dim..(c + 1) * dim].copy_from_slice(&mean);
        }
        let change = (prev_error - error).abs() / error.max(f64::MIN_POSITIVE);
        prev_error = error;
        if error == 0.0 || change < params.relative_tolerance {
            break;
        }
    }
    centroids
}

/// Mean squared distance from each sample to its nearest centroid.
#[cfg(test)]
pub(crate) fn quantization_error(data: &[f32], dim: usize, centroids: &[f32]) -> f64 {
    let n = data.len() / dim;
    let total: f64 = data
        .chunks_exact(dim)
        .map(|v| nearest(centroids, dim, v).1 as f64)
        .sum();
    total / n.max(1) as f64
}
