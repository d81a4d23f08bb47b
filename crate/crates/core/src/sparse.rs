//! Sparse real vectors keyed by feature id.

use std::collections::BTreeMap;

/// Sorted `(feature id, weight)` pairs with no zero weights stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from unordered pairs. Duplicate ids are summed and
    /// zero weights dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (id, w) in pairs {
            *acc.entry(id).or_insert(0.0) += w;
        }
        SparseVector {
            entries: acc.into_iter().filter(|&(_, w)| w != 0.0).collect(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(i, &w)| (i as u32, w))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, id: u32) -> f64 {
        self.entries
            .binary_search_by_key(&id, |&(i, _)| i)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Squared Euclidean distance, computed over the union of supports.
    pub fn sq_distance(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            let d = match (a.get(i), b.get(j)) {
                (Some(&(ia, wa)), Some(&(ib, wb))) if ia == ib => {
                    i += 1;
                    j += 1;
                    wa - wb
                }
                (Some(&(ia, wa)), Some(&(ib, _))) if ia < ib => {
                    i += 1;
                    wa
                }
                (Some(_), Some(&(_, wb))) => {
                    j += 1;
                    wb
                }
                (Some(&(_, wa)), None) => {
                    i += 1;
                    wa
                }
                (None, Some(&(_, wb))) => {
                    j += 1;
                    wb
                }
                (None, None) => unreachable!(),
            };
            acc += d * d;
        }
        acc
    }

    pub fn distance(&self, other: &SparseVector) -> f64 {
        self.sq_distance(other).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> SparseVector {
        SparseVector::from_pairs(self.entries.iter().map(|&(i, w)| (i, w * factor)))
    }

    /// Unit-length copy; the zero vector is returned unchanged.
    pub fn normalized(&self) -> SparseVector {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.scaled(1.0 / n)
        }
    }

    /// Element-wise mean of `vectors`, summed in the given order.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a SparseVector>) -> SparseVector {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        let mut n = 0usize;
        for v in vectors {
            n += 1;
            for &(i, w) in &v.entries {
                *acc.entry(i).or_insert(0.0) += w;
            }
        }
        if n == 0 {
            return SparseVector::new();
        }
        SparseVector::from_pairs(acc.into_iter().map(|(i, w)| (i, w / n as f64)))
    }
}
