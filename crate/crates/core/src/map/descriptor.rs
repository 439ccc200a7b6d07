use super::MapError;

/// Squared L2 distance. Eight independent accumulators let the compiler
/// vectorize the loop.
#[inline]
pub fn l2_sq(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn l2(a: &[f32], b: &[f32]) -> f32 {
    l2_sq(a, b).sqrt()
}

/// Scales `v` to unit norm; returns false (leaving `v` untouched) for a zero
/// or non-finite vector.
pub fn normalize(v: &mut [f32]) -> bool {
    let n = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / n) as f32;
    }
    true
}

/// Unit-norm real descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor(Vec<f32>);

impl Descriptor {
    pub fn new(mut values: Vec<f32>) -> Result<Self, MapError> {
        if !normalize(&mut values) {
            return Err(MapError::InvalidDescriptor("zero or non-finite descriptor"));
        }
        Ok(Self(values))
    }

    /// 8-bit descriptors (SIFT-style) are scaled to `[0, 1]` and normalized.
    pub fn from_u8(values: &[u8]) -> Result<Self, MapError> {
        Self::new(values.iter().map(|v| *v as f32 / 255.0).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }
}

/// Row-major block of equally sized descriptors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DescriptorBlock {
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorBlock {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_vec(dim: usize, data: Vec<f32>) -> Result<Self, MapError> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(MapError::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, v: &[f32]) -> Result<usize, MapError> {
        if v.len() != self.dim {
            return Err(MapError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        self.data.extend_from_slice(v);
        Ok(self.len() - 1)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_matches_naive_sum() {
        let a: Vec<f32> = (0..131).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..131).map(|i| (i as f32 * 0.11).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
        assert!((l2_sq(&a, &b) as f64 - naive).abs() < 1e-4);
    }

    #[test]
    fn descriptors_are_unit_norm() {
        let d = Descriptor::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(d.as_slice(), &[0.6, 0.8]);
        assert!(Descriptor::new(vec![0.0; 4]).is_err());
        let q = Descriptor::from_u8(&[0, 255, 0, 0]).unwrap();
        assert_eq!(q.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn block_rejects_wrong_dimension() {
        let mut b = DescriptorBlock::new(3);
        assert_eq!(b.push(&[1.0, 0.0, 0.0]).unwrap(), 0);
        assert!(b.push(&[1.0, 0.0]).is_err());
        assert!(DescriptorBlock::from_vec(3, vec![0.0; 7]).is_err());
    }
}
