//! Product quantization of descriptors: the vector is split into `M` equal
//! subvectors, each encoded as the index of its nearest centroid in a
//! per-subspace codebook of `K ≤ 256` entries. Distances are asymmetric: the
//! query stays exact and is compared against the decoded centroids.

use super::kmeans::{kmeans, nearest, KMeansParams};
use super::{DescriptorBlock, MapError};

pub const DEFAULT_SUBQUANTIZERS: usize = 8;
pub const DEFAULT_CENTROIDS: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct PqCodebook {
    dim: usize,
    m: usize,
    k: usize,
    /// `[subspace][centroid][sub_dim]`
    centroids: Vec<f32>,
}

impl PqCodebook {
    pub fn train(data: &DescriptorBlock, m: usize, k: usize, seed: u64) -> Result<Self, MapError> {
        let dim = data.dim();
        check_shape(dim, m, k)?;
        if data.len() < k {
            return Err(MapError::InsufficientTrainingData {
                needed: k,
                got: data.len(),
            });
        }
        let sub = dim / m;
        let params = KMeansParams {
            max_iterations: 25,
            relative_tolerance: 1e-4,
            unit_centroids: false,
        };
        let mut centroids = Vec::with_capacity(m * k * sub);
        for s in 0..m {
            let slice: Vec<f32> = data
                .rows()
                .flat_map(|r| r[s * sub..(s + 1) * sub].iter().copied())
                .collect();
            centroids.extend(kmeans(&slice, sub, k, seed.wrapping_add(s as u64), params));
        }
        Ok(Self { dim, m, k, centroids })
    }

    pub fn from_parts(dim: usize, m: usize, k: usize, centroids: Vec<f32>) -> Result<Self, MapError> {
        check_shape(dim, m, k)?;
        if centroids.len() != dim * k {
            return Err(MapError::DimensionMismatch {
                expected: dim * k,
                got: centroids.len(),
            });
        }
        Ok(Self { dim, m, k, centroids })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subquantizers(&self) -> usize {
        self.m
    }

    pub fn centroids_per_subspace(&self) -> usize {
        self.k
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.m
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    fn codebook(&self, s: usize) -> &[f32] {
        let len = self.k * self.sub_dim();
        &self.centroids[s * len..(s + 1) * len]
    }

    pub fn encode(&self, v: &[f32]) -> Vec<u8> {
        let sub = self.sub_dim();
        (0..self.m)
            .map(|s| nearest(self.codebook(s), sub, &v[s * sub..(s + 1) * sub]).0 as u8)
            .collect()
    }

    pub fn reconstruct(&self, code: &[u8]) -> Vec<f32> {
        let sub = self.sub_dim();
        let mut out = Vec::with_capacity(self.dim);
        for (s, c) in code.iter().enumerate() {
            let c = *c as usize;
            out.extend_from_slice(&self.codebook(s)[c * sub..(c + 1) * sub]);
        }
        out
    }

    /// Per-query lookup table of squared subspace distances.
    pub fn table(&self, query: &[f32]) -> DistanceTable {
        let sub = self.sub_dim();
        let mut table = Vec::with_capacity(self.m * self.k);
        for s in 0..self.m {
            let q = &query[s * sub..(s + 1) * sub];
            for c in self.codebook(s).chunks_exact(sub) {
                table.push(super::descriptor::l2_sq(q, c));
            }
        }
        DistanceTable { k: self.k, table }
    }

    /// Asymmetric distance, equal to `‖query − reconstruct(code)‖`.
    pub fn distance(&self, query: &[f32], code: &[u8]) -> f32 {
        self.table(query).distance(code)
    }
}

fn check_shape(dim: usize, m: usize, k: usize) -> Result<(), MapError> {
    if m == 0 || dim % m != 0 {
        return Err(MapError::InvalidConfig(format!(
            "subquantizer count {m} must divide descriptor dimension {dim}"
        )));
    }
    if k == 0 || k > 256 {
        return Err(MapError::InvalidConfig(format!("PQ centroid count {k} must be in 1..=256")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct DistanceTable {
    k: usize,
    table: Vec<f32>,
}

impl DistanceTable {
    #[inline]
    pub fn distance_sq(&self, code: &[u8]) -> f32 {
        code.iter()
            .enumerate()
            .map(|(s, c)| self.table[s * self.k + *c as usize])
            .sum()
    }

    #[inline]
    pub fn distance(&self, code: &[u8]) -> f32 {
        self.distance_sq(code).sqrt()
    }
}

/// Product quantizer that may not have been trained yet.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductQuantizer {
    m: usize,
    k: usize,
    codebook: Option<PqCodebook>,
}

impl Default for ProductQuantizer {
    fn default() -> Self {
        Self::new(DEFAULT_SUBQUANTIZERS, DEFAULT_CENTROIDS)
    }
}

impl ProductQuantizer {
    pub fn new(m: usize, k: usize) -> Self {
        Self { m, k, codebook: None }
    }

    pub fn train(&mut self, data: &DescriptorBlock, seed: u64) -> Result<&PqCodebook, MapError> {
        let cb = PqCodebook::train(data, self.m, self.k, seed)?;
        Ok(self.codebook.insert(cb))
    }

    pub fn codebook(&self) -> Result<&PqCodebook, MapError> {
        self.codebook.as_ref().ok_or(MapError::Untrained)
    }

    pub fn encode(&self, v: &[f32]) -> Result<Vec<u8>, MapError> {
        let cb = self.codebook()?;
        if v.len() != cb.dim() {
            return Err(MapError::DimensionMismatch {
                expected: cb.dim(),
                got: v.len(),
            });
        }
        Ok(cb.encode(v))
    }

    pub fn distance(&self, query: &[f32], code: &[u8]) -> Result<f32, MapError> {
        let cb = self.codebook()?;
        if query.len() != cb.dim() || code.len() != cb.subquantizers() {
            return Err(MapError::DimensionMismatch {
                expected: cb.dim(),
                got: query.len(),
            });
        }
        Ok(cb.distance(query, code))
    }

    pub fn into_codebook(self) -> Option<PqCodebook> {
        self.codebook
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::descriptor::{l2, normalize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_block(rng: &mut impl Rng, n: usize, dim: usize) -> DescriptorBlock {
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let mut v: Vec<f32> = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
            normalize(&mut v);
            data.extend(v);
        }
        DescriptorBlock::from_vec(dim, data).unwrap()
    }

    #[test]
    fn untrained_quantizer_errors() {
        let pq = ProductQuantizer::default();
        assert!(matches!(pq.encode(&[0.0; 128]), Err(MapError::Untrained)));
        assert!(matches!(pq.distance(&[0.0; 128], &[0; 8]), Err(MapError::Untrained)));
    }

    #[test]
    fn shape_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = random_block(&mut rng, 300, 30);
        assert!(PqCodebook::train(&data, 8, 16, 0).is_err());
        assert!(PqCodebook::train(&data, 5, 300, 0).is_err());
    }

    #[test]
    fn asymmetric_distance_is_distance_to_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_block(&mut rng, 600, 32);
        let mut pq = ProductQuantizer::new(8, 64);
        pq.train(&data, 7).unwrap();
        let cb = pq.codebook().unwrap();
        let queries = random_block(&mut rng, 200, 32);
        for (q, x) in queries.rows().zip(data.rows()) {
            let code = pq.encode(x).unwrap();
            let rec = cb.reconstruct(&code);
            let exact = l2(q, &rec);
            let adc = pq.distance(q, &code).unwrap();
            assert!((adc - exact).abs() <= 1e-5 * exact.max(1.0));
            assert!(pq.distance(&rec, &code).unwrap() < 1e-6);
        }
    }

    #[test]
    fn approximation_error_is_bounded_by_quantization_error() {
        // |d(q, x̂) − d(q, x)| ≤ ‖x − x̂‖ by the triangle inequality; the mean
        // error must stay under the mean reconstruction error
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_block(&mut rng, 2000, 32);
        let cb = PqCodebook::train(&data, 8, 64, 3).unwrap();
        let queries = random_block(&mut rng, 1000, 32);
        let mut abs_err = 0.0f64;
        let mut quant_err = 0.0f64;
        for (q, x) in queries.rows().zip(data.rows()) {
            let code = cb.encode(x);
            abs_err += (cb.distance(q, &code) - l2(q, x)).abs() as f64;
            quant_err += l2(x, &cb.reconstruct(&code)) as f64;
        }
        assert!(abs_err / 1000.0 < quant_err / 1000.0);
    }
}
