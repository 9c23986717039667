//! Binary code matrices over {-1, +1} with a packed bit form for
//! Hamming-distance computation.

use nalgebra::DMatrix;

use crate::error::{ensure, Result};

/// An `n x c` matrix of signs with its packed form kept in sync.
///
/// Bit `b` of a row's packed words is set iff entry `b` is `+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodeMatrix {
    rows: usize,
    bits: usize,
    signs: Vec<i8>,
    packed: Vec<u64>,
}

impl BinaryCodeMatrix {
    pub fn from_signs(rows: usize, bits: usize, signs: Vec<i8>) -> Result<Self> {
        ensure!(bits >= 1, InvalidArgument, "code length must be at least 1");
        ensure!(
            signs.len() == rows * bits,
            Dimension,
            "expected {} signs, got {}",
            rows * bits,
            signs.len()
        );
        ensure!(
            signs.iter().all(|&s| s == 1 || s == -1),
            InvalidArgument,
            "code entries must be -1 or +1"
        );
        let words = words_for(bits);
        let mut packed = vec![0u64; rows * words];
        for i in 0..rows {
            for b in 0..bits {
                if signs[i * bits + b] > 0 {
                    packed[i * words + b / 64] |= 1 << (b % 64);
                }
            }
        }
        Ok(BinaryCodeMatrix {
            rows,
            bits,
            signs,
            packed,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_row(&self) -> usize {
        words_for(self.bits)
    }

    pub fn sign(&self, row: usize, bit: usize) -> i8 {
        self.signs[row * self.bits + bit]
    }

    pub fn row_signs(&self, row: usize) -> &[i8] {
        &self.signs[row * self.bits..(row + 1) * self.bits]
    }

    pub fn packed_row(&self, row: usize) -> &[u64] {
        let w = self.words_per_row();
        &self.packed[row * w..(row + 1) * w]
    }

    /// The codes as a real `n x c` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.bits, |i, j| f64::from(self.sign(i, j)))
    }

    pub fn column_sums(&self) -> Vec<i64> {
        let mut sums = vec![0i64; self.bits];
        for row in self.signs.chunks_exact(self.bits) {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += i64::from(v);
            }
        }
        sums
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Result<Self> {
        ensure!(n <= self.rows, Dimension, "requested {n} of {} rows", self.rows);
        Self::from_signs(n, self.bits, self.signs[..n * self.bits].to_vec())
    }

    /// Codes with their bit columns reordered: output bit `j` is input bit
    /// `order[j]`.
    pub fn permute_bits(&self, order: &[usize]) -> Result<Self> {
        ensure!(order.len() == self.bits, Dimension, "permutation length mismatch");
        let signs = (0..self.rows)
            .flat_map(|i| order.iter().map(move |&b| self.sign(i, b)))
            .collect();
        Self::from_signs(self.rows, self.bits, signs)
    }
}

fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Elementwise sign with `sgn(0) = +1`.
pub fn sgn(m: &DMatrix<f64>) -> BinaryCodeMatrix {
    let (rows, bits) = m.shape();
    let signs = (0..rows)
        .flat_map(|i| (0..bits).map(move |j| if m[(i, j)] >= 0.0 { 1 } else { -1 }))
        .collect();
    BinaryCodeMatrix::from_signs(rows, bits, signs).expect("sign matrix is well formed")
}

/// Number of differing bits between two packed codes.
pub fn hamming_distance(a: &[u64], b: &[u64]) -> Result<u32> {
    ensure!(
        a.len() == b.len(),
        Dimension,
        "code lengths differ: {} vs {} words",
        a.len(),
        b.len()
    );
    Ok(hamming_unchecked(a, b))
}

#[inline]
pub(crate) fn hamming_unchecked(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}
