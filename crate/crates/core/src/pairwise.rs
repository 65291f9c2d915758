//! Pairwise log-likelihood and its closed-form score vector.
//!
//! Every bivariate cell probability is a four-corner combination of `Φ2`
//! values. For each margin pair the corner grid is evaluated once per `θ`
//! and shared by the log-likelihood, the correlation score and the
//! threshold score. Corners at an infinite threshold take their analytic
//! limits, so the first and last categories need no special handling.

use log::warn;

use crate::counts::{OrdinalDataset, PairCounts};
use crate::error::{Error, Result};
use crate::gauss::{bvn_cdf, bvn_pdf, conditional_cdf, norm_pdf, Limit, Rho};
use crate::model::{n_pairs, pair_index, pair_index_unchecked, threshold_index, Theta};

/// Floor applied to cell probabilities inside logarithms and reciprocals.
pub const PROB_FLOOR: f64 = 1e-300;

#[inline]
fn extended(cuts: &[f64]) -> Vec<Limit> {
    let mut out = Vec::with_capacity(cuts.len() + 2);
    out.push(Limit::NegInf);
    out.extend(cuts.iter().map(|&a| Limit::Finite(a)));
    out.push(Limit::PosInf);
    out
}

/// Cell probabilities `pr(Y_r = l, Y_s = m)` for every pair at a fixed `θ`.
#[derive(Debug, Clone)]
pub struct CellProbCache {
    q: usize,
    k: usize,
    // [pair][l][m], 0-based levels, floored at PROB_FLOOR.
    probs: Vec<f64>,
    // true where the raw probability fell below the floor.
    floored: Vec<bool>,
}

impl CellProbCache {
    pub fn new(theta: &Theta) -> Self {
        let (q, k) = (theta.q(), theta.k());
        let block = k * k;
        let mut probs = vec![0.0; n_pairs(q) * block];
        let mut floored = vec![false; probs.len()];
        let mut grid = vec![0.0; (k + 1) * (k + 1)];
        for r in 0..q {
            let er = extended(theta.thresholds(r));
            for s in r + 1..q {
                let p = pair_index_unchecked(r, s, q);
                let rho = theta.rho_at(p);
                let es = extended(theta.thresholds(s));
                for (i, &x) in er.iter().enumerate() {
                    for (j, &y) in es.iter().enumerate() {
                        grid[i * (k + 1) + j] = bvn_cdf(x, y, rho);
                    }
                }
                let out = &mut probs[p * block..(p + 1) * block];
                let flags = &mut floored[p * block..(p + 1) * block];
                for l in 1..=k {
                    for m in 1..=k {
                        let g = |i: usize, j: usize| grid[i * (k + 1) + j];
                        let raw = g(l, m) - g(l - 1, m) - g(l, m - 1) + g(l - 1, m - 1);
                        let idx = (l - 1) * k + (m - 1);
                        if raw < PROB_FLOOR {
                            out[idx] = PROB_FLOOR;
                            flags[idx] = true;
                        } else {
                            out[idx] = raw.min(1.0);
                        }
                    }
                }
            }
        }
        CellProbCache {
            q,
            k,
            probs,
            floored,
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Probability of levels `l`, `m` (1-based) on pair index `p`.
    pub fn prob(&self, p: usize, l: usize, m: usize) -> f64 {
        self.probs[p * self.k * self.k + (l - 1) * self.k + (m - 1)]
    }

    #[inline]
    fn block(&self, p: usize) -> &[f64] {
        let b = self.k * self.k;
        &self.probs[p * b..(p + 1) * b]
    }

    /// Count-grouped pairwise log-likelihood; empty cells are skipped.
    pub fn loglik(&self, counts: &PairCounts) -> LogLik {
        debug_assert_eq!((counts.q(), counts.k()), (self.q, self.k));
        let b = self.k * self.k;
        let mut value = 0.0;
        let mut underflow = 0;
        for p in 0..n_pairs(self.q) {
            let probs = self.block(p);
            let flags = &self.floored[p * b..(p + 1) * b];
            for ((&n, &pr), &fl) in counts.block(p).iter().zip(probs).zip(flags) {
                if n > 0 {
                    value += n as f64 * pr.ln();
                    underflow += fl as usize;
                }
            }
        }
        LogLik { value, underflow }
    }
}

/// Log-likelihood value together with the number of observed cells whose
/// probability had to be floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub underflow: usize,
}

/// Cell probabilities plus the derivative tables needed by the score.
///
/// For pair `(r, s)` and threshold position `k`:
/// `first[k][m] = φ(a_k(r))·[Φ((a_m(s) − ρa_k(r))/√(1−ρ²)) − Φ((a_{m−1}(s) − ρa_k(r))/√(1−ρ²))]`
/// is `∂P_{k,m}/∂a_k(r)` (and `−∂P_{k+1,m}/∂a_k(r)`); `second` is the mirror
/// image for margin `s`, and `rho_num[l][m]` is `∂P_{l,m}/∂ρ`.
#[derive(Debug, Clone)]
pub struct ScoreKernel {
    cache: CellProbCache,
    rho_num: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl std::ops::Deref for ScoreKernel {
    type Target = CellProbCache;
    fn deref(&self) -> &CellProbCache {
        &self.cache
    }
}

/// A sparse score contribution: at most five `(packed index, value)` entries.
#[derive(Debug, Clone, Copy, Default)]
pub struct SparseScore {
    entries: [(usize, f64); 5],
    len: usize,
}

impl SparseScore {
    #[inline]
    fn push(&mut self, idx: usize, v: f64) {
        self.entries[self.len] = (idx, v);
        self.len += 1;
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries[..self.len]
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for &(i, v) in self.entries() {
            out[i] += v;
        }
        out
    }
}

impl ScoreKernel {
    pub fn new(theta: &Theta) -> Self {
        let cache = CellProbCache::new(theta);
        let (q, k) = (theta.q(), theta.k());
        let m_pairs = n_pairs(q);
        let mut rho_num = vec![0.0; m_pairs * k * k];
        let mut first = vec![0.0; m_pairs * (k - 1) * k];
        let mut second = vec![0.0; m_pairs * (k - 1) * k];
        let mut dens = vec![0.0; (k + 1) * (k + 1)];
        let mut cond = vec![0.0; k + 1];

        for r in 0..q {
            let ar = theta.thresholds(r);
            let er = extended(ar);
            for s in r + 1..q {
                let p = pair_index_unchecked(r, s, q);
                let rho = theta.rho_at(p);
                let as_ = theta.thresholds(s);
                let es = extended(as_);

                // Densities vanish at every corner with an infinite coordinate.
                dens.iter_mut().for_each(|d| *d = 0.0);
                for (i, &x) in ar.iter().enumerate() {
                    for (j, &y) in as_.iter().enumerate() {
                        dens[(i + 1) * (k + 1) + (j + 1)] = bvn_pdf(x, y, rho);
                    }
                }
                let out = &mut rho_num[p * k * k..(p + 1) * k * k];
                for l in 1..=k {
                    for m in 1..=k {
                        let d = |i: usize, j: usize| dens[i * (k + 1) + j];
                        out[(l - 1) * k + (m - 1)] =
                            d(l, m) - d(l - 1, m) - d(l, m - 1) + d(l - 1, m - 1);
                    }
                }

                fill_margin_derivs(
                    ar,
                    &es,
                    rho,
                    &mut cond,
                    &mut first[p * (k - 1) * k..(p + 1) * (k - 1) * k],
                );
                fill_margin_derivs(
                    as_,
                    &er,
                    rho,
                    &mut cond,
                    &mut second[p * (k - 1) * k..(p + 1) * (k - 1) * k],
                );
            }
        }
        ScoreKernel {
            cache,
            rho_num,
            first,
            second,
        }
    }

    pub fn cache(&self) -> &CellProbCache {
        &self.cache
    }

    /// `∂ℓ^P/∂ρ` for every pair.
    pub fn score_rho(&self, counts: &PairCounts) -> Vec<f64> {
        let kk = self.k * self.k;
        (0..n_pairs(self.q))
            .map(|p| {
                let probs = self.block(p);
                let num = &self.rho_num[p * kk..(p + 1) * kk];
                counts
                    .block(p)
                    .iter()
                    .zip(probs)
                    .zip(num)
                    .filter(|((&n, _), _)| n > 0)
                    .map(|((&n, &pr), &d)| n as f64 * d / pr)
                    .sum()
            })
            .collect()
    }

    // Count-weighted reciprocal probabilities n/P for one pair.
    fn weights(&self, counts: &PairCounts, p: usize) -> Vec<f64> {
        counts
            .block(p)
            .iter()
            .zip(self.block(p))
            .map(|(&n, &pr)| if n > 0 { n as f64 / pr } else { 0.0 })
            .collect()
    }

    // Pair p contribution to ∂ℓ/∂a_level of its first margin (the B-part).
    fn first_margin_term(&self, w: &[f64], p: usize, level: usize) -> f64 {
        let k = self.k;
        let row = &self.first[(p * (k - 1) + level - 1) * k..][..k];
        (0..k)
            .map(|m| row[m] * (w[(level - 1) * k + m] - w[level * k + m]))
            .sum()
    }

    // Pair p contribution to ∂ℓ/∂a_level of its second margin (the A-part).
    fn second_margin_term(&self, w: &[f64], p: usize, level: usize) -> f64 {
        let k = self.k;
        let row = &self.second[(p * (k - 1) + level - 1) * k..][..k];
        (0..k)
            .map(|l| row[l] * (w[l * k + level - 1] - w[l * k + level]))
            .sum()
    }

    /// The two parts of `∂ℓ^P/∂a_level(j)`: pairs with `j` as second margin
    /// (`r < j`) and pairs with `j` as first margin (`s > j`).
    pub fn threshold_score_parts(&self, counts: &PairCounts, j: usize, level: usize) -> Result<(f64, f64)> {
        if j >= self.q {
            return Err(Error::InvalidDims(format!("margin {j} out of range for q = {}", self.q)));
        }
        if level < 1 || level >= self.k {
            return Err(Error::InvalidDims(format!("threshold level {level} outside 1..{}", self.k)));
        }
        let a_part = (0..j)
            .map(|r| {
                let p = pair_index_unchecked(r, j, self.q);
                self.second_margin_term(&self.weights(counts, p), p, level)
            })
            .sum();
        let b_part = (j + 1..self.q)
            .map(|s| {
                let p = pair_index_unchecked(j, s, self.q);
                self.first_margin_term(&self.weights(counts, p), p, level)
            })
            .sum();
        Ok((a_part, b_part))
    }

    /// Full pairwise score in packing order.
    pub fn score(&self, counts: &PairCounts) -> Vec<f64> {
        let (q, k) = (self.q, self.k);
        let mut out = self.score_rho(counts);
        out.resize(n_pairs(q) + (k - 1) * q, 0.0);
        for r in 0..q {
            for s in r + 1..q {
                let p = pair_index_unchecked(r, s, q);
                let w = self.weights(counts, p);
                for level in 1..k {
                    out[threshold_index(r, level, q, k)] += self.first_margin_term(&w, p, level);
                    out[threshold_index(s, level, q, k)] += self.second_margin_term(&w, p, level);
                }
            }
        }
        out
    }

    /// Score of `log pr(Y_r = l, Y_s = m)` for one cell, zero-padded to the
    /// full parameter vector (only the non-zero entries are stored).
    pub fn cell_score(&self, r: usize, s: usize, l: usize, m: usize) -> SparseScore {
        let (q, k) = (self.q, self.k);
        let p = pair_index_unchecked(r, s, q);
        let cell = (l - 1) * k + (m - 1);
        let inv = 1.0 / self.block(p)[cell];
        let first = &self.first[p * (k - 1) * k..];
        let second = &self.second[p * (k - 1) * k..];
        let mut out = SparseScore::default();
        out.push(p, self.rho_num[p * k * k + cell] * inv);
        if l < k {
            out.push(threshold_index(r, l, q, k), first[(l - 1) * k + (m - 1)] * inv);
        }
        if l > 1 {
            out.push(threshold_index(r, l - 1, q, k), -first[(l - 2) * k + (m - 1)] * inv);
        }
        if m < k {
            out.push(threshold_index(s, m, q, k), second[(m - 1) * k + (l - 1)] * inv);
        }
        if m > 1 {
            out.push(threshold_index(s, m - 1, q, k), -second[(m - 2) * k + (l - 1)] * inv);
        }
        out
    }

    /// Score of the pairwise log-likelihood of a single observation.
    pub fn observation_score(&self, row: &[u16]) -> Vec<f64> {
        let mut out = vec![0.0; n_pairs(self.q) + (self.k - 1) * self.q];
        self.add_observation_score(row, &mut out);
        out
    }

    pub(crate) fn add_observation_score(&self, row: &[u16], out: &mut [f64]) {
        for r in 0..self.q {
            for s in r + 1..self.q {
                let cs = self.cell_score(r, s, row[r] as usize, row[s] as usize);
                for &(i, v) in cs.entries() {
                    out[i] += v;
                }
            }
        }
    }
}

// table[level-1][m] = φ(a_level)·[C(other_m | a_level) − C(other_{m−1} | a_level)].
fn fill_margin_derivs(own: &[f64], other: &[Limit], rho: Rho, cond: &mut [f64], table: &mut [f64]) {
    let k = other.len() - 1;
    for (t, &x) in own.iter().enumerate() {
        let phi = norm_pdf(x);
        for (c, &y) in cond.iter_mut().zip(other) {
            *c = conditional_cdf(y, x, rho);
        }
        for m in 0..k {
            table[t * k + m] = phi * (cond[m + 1] - cond[m]);
        }
    }
}

fn check_counts(theta: &Theta, counts: &PairCounts) -> Result<()> {
    if theta.q() != counts.q() || theta.k() != counts.k() {
        return Err(Error::InvalidDims(format!(
            "θ has q = {}, K = {}; counts have q = {}, K = {}",
            theta.q(),
            theta.k(),
            counts.q(),
            counts.k()
        )));
    }
    Ok(())
}

fn check_levels(theta: &Theta, l: usize, m: usize) -> Result<()> {
    for v in [l, m] {
        if v < 1 || v > theta.k() {
            return Err(Error::InvalidDims(format!("level {v} outside 1..={}", theta.k())));
        }
    }
    Ok(())
}

fn report_underflow(underflow: usize) {
    if underflow > 0 {
        warn!("{underflow} observed cell probabilities fell below {PROB_FLOOR:e} and were floored");
    }
}

/// `pr(Y_r = l, Y_s = m)` at `θ`.
pub fn cell_prob(theta: &Theta, r: usize, s: usize, l: usize, m: usize) -> Result<f64> {
    pair_index(r, s, theta.q())?;
    check_levels(theta, l, m)?;
    let p = pair_index_unchecked(r, s, theta.q());
    let ext_r = extended(theta.thresholds(r));
    let ext_s = extended(theta.thresholds(s));
    crate::gauss::rect_prob(ext_r[l - 1], ext_r[l], ext_s[m - 1], ext_s[m], theta.rho_at(p))
}

pub fn pairwise_loglik(theta: &Theta, counts: &PairCounts) -> Result<f64> {
    check_counts(theta, counts)?;
    let ll = CellProbCache::new(theta).loglik(counts);
    report_underflow(ll.underflow);
    Ok(ll.value)
}

pub fn score_rho(theta: &Theta, counts: &PairCounts) -> Result<Vec<f64>> {
    check_counts(theta, counts)?;
    Ok(ScoreKernel::new(theta).score_rho(counts))
}

/// `∂ℓ^P/∂a_level(j)`, `level` in `1..K`.
pub fn score_threshold(theta: &Theta, counts: &PairCounts, j: usize, level: usize) -> Result<f64> {
    check_counts(theta, counts)?;
    let (a, b) = ScoreKernel::new(theta).threshold_score_parts(counts, j, level)?;
    Ok(a + b)
}

pub fn pairwise_score(theta: &Theta, counts: &PairCounts) -> Result<Vec<f64>> {
    check_counts(theta, counts)?;
    Ok(ScoreKernel::new(theta).score(counts))
}

pub fn per_observation_score(theta: &Theta, row: &[u16]) -> Result<Vec<f64>> {
    if row.len() != theta.q() {
        return Err(Error::DimensionMismatch {
            expected: theta.q(),
            got: row.len(),
        });
    }
    if let Some(&bad) = row.iter().find(|&&c| c < 1 || c as usize > theta.k()) {
        return Err(Error::InvalidDims(format!("category {bad} outside 1..={}", theta.k())));
    }
    Ok(ScoreKernel::new(theta).observation_score(row))
}

/// Zero-padded score of the single cell `(l, m)` of pair `(r, s)`.
pub fn per_pair_score(theta: &Theta, r: usize, s: usize, l: usize, m: usize) -> Result<Vec<f64>> {
    pair_index(r, s, theta.q())?;
    check_levels(theta, l, m)?;
    Ok(ScoreKernel::new(theta)
        .cell_score(r, s, l, m)
        .to_dense(theta.len()))
}

/// Per-observation scores for every row of `data`.
pub fn observation_scores(theta: &Theta, data: &OrdinalDataset) -> Vec<Vec<f64>> {
    let kernel = ScoreKernel::new(theta);
    data.rows().map(|row| kernel.observation_score(row)).collect()
}
