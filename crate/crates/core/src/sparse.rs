use serde::{Deserialize, Serialize};

/// Sparse real vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    /// Builds from `(index, value)` pairs, dropping zeros. Pairs must be
    /// sorted by index without duplicates.
    pub fn from_sorted_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut v = SparseVec::default();
        for (i, x) in pairs {
            debug_assert!(v.indices.last().is_none_or(|&last| last < i));
            if x != 0.0 {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        v
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        Self::from_sorted_pairs(dense.iter().enumerate().map(|(i, &x)| (i as u32, x)))
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, x)| x * dense[i as usize]).sum()
    }

    pub fn squared_distance(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (self, other);
        while i < a.indices.len() || j < b.indices.len() {
            let ai = a.indices.get(i).copied().unwrap_or(u32::MAX);
            let bj = b.indices.get(j).copied().unwrap_or(u32::MAX);
            let d = if ai < bj {
                i += 1;
                a.values[i - 1]
            } else if bj < ai {
                j += 1;
                b.values[j - 1]
            } else {
                i += 1;
                j += 1;
                a.values[i - 1] - b.values[j - 1]
            };
            acc += d * d;
        }
        acc
    }

    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }
}
