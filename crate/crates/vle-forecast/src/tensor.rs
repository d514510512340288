//! Dense row-major `f64` tensors and the small linear-algebra kernel the
//! network layers are built on.
//!
//! Shapes are limited to what the model actually uses: rank 2 for dense
//! activations `(batch, features)` and rank 3 for convolutional activations
//! `(batch, length, channels)`. Element `(b, l, c)` of a rank-3 tensor lives
//! at `data[(b * len + l) * channels + c]`, so flattening is a no-op on the
//! underlying buffer.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("shape {shape:?} implies {expected} elements, buffer has {got}")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("expected rank {expected}, got shape {got:?}")]
    Rank { expected: usize, got: Vec<usize> },
    #[error("{context}: expected shape {expected:?}, got {got:?}")]
    Mismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, ShapeError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ShapeError::ElementCount {
                shape: shape.to_vec(),
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Destructures a rank-3 shape as `(batch, length, channels)`.
    pub fn dims3(&self) -> Result<(usize, usize, usize), ShapeError> {
        match self.shape[..] {
            [b, l, c] => Ok((b, l, c)),
            _ => Err(ShapeError::Rank {
                expected: 3,
                got: self.shape.clone(),
            }),
        }
    }

    /// Destructures a rank-2 shape as `(batch, features)`.
    pub fn dims2(&self) -> Result<(usize, usize), ShapeError> {
        match self.shape[..] {
            [b, f] => Ok((b, f)),
            _ => Err(ShapeError::Rank {
                expected: 2,
                got: self.shape.clone(),
            }),
        }
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self, ShapeError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(ShapeError::ElementCount {
                shape: shape.to_vec(),
                expected,
                got: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }
}

/// `out += a * b` for row-major `a: m x k`, `b: k x n`, `out: m x n`.
///
/// The i-k-j loop order keeps the inner loop a contiguous axpy, which LLVM
/// vectorizes; every matrix product in the crate funnels through here.
pub fn matmul_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}

/// `a * b` into a fresh buffer.
pub fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    matmul_acc(m, k, n, a, b, &mut out);
    out
}

/// Row-major transpose of an `m x n` matrix.
pub fn transpose(m: usize, n: usize, a: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_element_count() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::from_vec(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, ShapeError::ElementCount { expected: 6, .. }));
    }

    #[test]
    fn flatten_is_identity_on_buffer() {
        let t = Tensor::from_vec(&[2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        let flat = t.clone().reshaped(&[2, 12]).unwrap();
        assert_eq!(t.data(), flat.data());
    }

    #[test]
    fn matmul_small_known_product() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(2, 2, 2, &a, &b), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_matches_naive_on_random_sizes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (m, k, n) = (
                rng.gen_range(1..8),
                rng.gen_range(1..8),
                rng.gen_range(1..8),
            );
            let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = matmul(m, k, n, &a, &b);
            let mut naive = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    for p in 0..k {
                        naive[i * n + j] += a[i * k + p] * b[p * n + j];
                    }
                }
            }
            for (x, y) in fast.iter().zip(naive.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_round_trips() {
        let a: Vec<f64> = (0..12).map(f64::from).collect();
        assert_eq!(transpose(4, 3, &transpose(3, 4, &a)), a);
    }
}
