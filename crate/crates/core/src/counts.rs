//! Ordinal datasets and their pairwise contingency tables.

use crate::error::{Error, Result};
use crate::model::{n_pairs, pairs, ModelDims};

/// `n × q` matrix of categories in `1..=K`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrdinalDataset {
    q: usize,
    k: usize,
    cells: Vec<u16>,
}

impl OrdinalDataset {
    /// Builds a dataset from rows of categories; `k` is the number of levels.
    pub fn new<R: AsRef<[i64]>>(rows: &[R], k: usize) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyDataset);
        };
        let q = first.as_ref().len();
        if q < 2 || k < 2 || k > u16::MAX as usize {
            return Err(Error::InvalidDims(format!("q = {q}, K = {k}")));
        }
        let mut cells = Vec::with_capacity(rows.len() * q);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != q {
                return Err(Error::RaggedRow {
                    row: i,
                    got: row.len(),
                    expected: q,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v < 1 || v > k as i64 {
                    return Err(Error::CategoryOutOfRange {
                        row: i,
                        col: j,
                        value: v,
                        k,
                    });
                }
                cells.push(v as u16);
            }
        }
        Ok(OrdinalDataset { q, k, cells })
    }

    /// Wraps already-validated row-major cells.
    pub(crate) fn from_cells(q: usize, k: usize, cells: Vec<u16>) -> Self {
        debug_assert!(!cells.is_empty() && cells.len() % q == 0);
        debug_assert!(cells.iter().all(|&c| c >= 1 && c as usize <= k));
        OrdinalDataset { q, k, cells }
    }

    pub fn n(&self) -> usize {
        self.cells.len() / self.q
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            q: self.q,
            k: self.k,
            n: self.n(),
        }
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.cells[i * self.q..(i + 1) * self.q]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u16]> {
        self.cells.chunks_exact(self.q)
    }

    /// Category tallies of margin `j`; entry `c − 1` counts category `c`.
    pub fn margin_counts(&self, j: usize) -> Vec<u64> {
        let mut out = vec![0u64; self.k];
        for row in self.rows() {
            out[row[j] as usize - 1] += 1;
        }
        out
    }
}

/// Co-occurrence counts `n_{{r,l}{s,m}}`, pair-major with dense `K × K` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCounts {
    q: usize,
    k: usize,
    n: usize,
    counts: Vec<u64>,
}

impl PairCounts {
    pub fn from_dataset(data: &OrdinalDataset) -> Self {
        let (q, k) = (data.q(), data.k());
        let block = k * k;
        let mut counts = vec![0u64; n_pairs(q) * block];
        for row in data.rows() {
            let mut p = 0;
            for r in 0..q {
                let base_l = (row[r] as usize - 1) * k;
                for &ys in &row[r + 1..] {
                    counts[p * block + base_l + ys as usize - 1] += 1;
                    p += 1;
                }
            }
        }
        PairCounts {
            q,
            k,
            n: data.n(),
            counts,
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            q: self.q,
            k: self.k,
            n: self.n,
        }
    }

    /// Count for pair index `p` and levels `l`, `m` in `1..=K`.
    pub fn get(&self, p: usize, l: usize, m: usize) -> u64 {
        self.block(p)[(l - 1) * self.k + (m - 1)]
    }

    /// Row-major `K × K` block of pair `p`, indexed from 0.
    #[inline]
    pub fn block(&self, p: usize) -> &[u64] {
        let b = self.k * self.k;
        &self.counts[p * b..(p + 1) * b]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Iterates `(pair index, r, s, block)`.
    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize, usize, &[u64])> {
        pairs(self.q)
            .enumerate()
            .map(move |(p, (r, s))| (p, r, s, self.block(p)))
    }
}

/// Tallies `data` after checking it against `dims`.
pub fn compute_counts(data: &OrdinalDataset, dims: &ModelDims) -> Result<PairCounts> {
    if data.q() != dims.q || data.n() != dims.n {
        return Err(Error::InvalidDims(format!(
            "dataset is {}×{}, dims expect {}×{}",
            data.n(),
            data.q(),
            dims.n,
            dims.q
        )));
    }
    if data.k() != dims.k {
        // Re-validate category range against the requested K.
        let rows: Vec<Vec<i64>> = data
            .rows()
            .map(|r| r.iter().map(|&c| c as i64).collect())
            .collect();
        let checked = OrdinalDataset::new(&rows, dims.k)?;
        return Ok(PairCounts::from_dataset(&checked));
    }
    Ok(PairCounts::from_dataset(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pair_index;

    #[test]
    fn hand_counted_table() {
        let data = OrdinalDataset::new(&[[1, 2], [1, 2], [2, 1]], 2).unwrap();
        let c = compute_counts(&data, &data.dims()).unwrap();
        assert_eq!(c.get(0, 1, 2), 2);
        assert_eq!(c.get(0, 2, 1), 1);
        assert_eq!(c.get(0, 1, 1), 0);
        assert_eq!(c.get(0, 2, 2), 0);
    }

    #[test]
    fn construction_errors() {
        let empty: [[i64; 2]; 0] = [];
        assert_eq!(OrdinalDataset::new(&empty, 3), Err(Error::EmptyDataset));
        let err = OrdinalDataset::new(&[vec![1, 2, 3], vec![1, 4, 2]], 3).unwrap_err();
        assert_eq!(
            err,
            Error::CategoryOutOfRange {
                row: 1,
                col: 1,
                value: 4,
                k: 3
            }
        );
        assert!(OrdinalDataset::new(&[vec![1, 0]], 3).is_err());
        assert!(matches!(
            OrdinalDataset::new(&[vec![1, 2], vec![1]], 3),
            Err(Error::RaggedRow { row: 1, .. })
        ));
        let data = OrdinalDataset::new(&[vec![1, 3]], 3).unwrap();
        let dims = ModelDims::new(2, 2, 1).unwrap();
        assert!(matches!(
            compute_counts(&data, &dims),
            Err(Error::CategoryOutOfRange { value: 3, .. })
        ));
    }

    #[test]
    fn pair_blocks_sum_to_n_and_match_margins() {
        // Deterministic pseudo-random dataset (LCG) so the oracle is independent of rand.
        let (n, q, k) = (200usize, 4usize, 4usize);
        let mut state: u64 = 12345;
        let rows: Vec<Vec<i64>> = (0..n)
            .map(|_| {
                (0..q)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((state >> 33) % k as u64) as i64 + 1
                    })
                    .collect()
            })
            .collect();
        let data = OrdinalDataset::new(&rows, k).unwrap();
        let c = PairCounts::from_dataset(&data);
        assert_eq!(c.total(), (n * q * (q - 1) / 2) as u64);
        for r in 0..q {
            let mut tally = vec![0u64; k];
            for row in &rows {
                tally[row[r] as usize - 1] += 1;
            }
            for s in r + 1..q {
                let p = pair_index(r, s, q).unwrap();
                let block_sum: u64 = c.block(p).iter().sum();
                assert_eq!(block_sum, n as u64);
                for l in 1..=k {
                    let row_sum: u64 = (1..=k).map(|m| c.get(p, l, m)).sum();
                    assert_eq!(row_sum, tally[l - 1]);
                }
            }
        }
        assert_eq!(data.margin_counts(2).iter().sum::<u64>(), n as u64);

        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(3, 77);
        let c2 = PairCounts::from_dataset(&OrdinalDataset::new(&shuffled, k).unwrap());
        assert_eq!(c, c2);
    }
}
