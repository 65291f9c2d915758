//! Parameter containers and the log-spacing threshold reparametrization.
//!
//! Margins are indexed from 0. Category levels and threshold positions keep
//! their conventional 1-based numbering: `a_k` separates category `k` from
//! category `k + 1`, for `k = 1..K−1`.
//!
//! The packed parameter order is: all correlations `ρ_{r,s}` for `r < s` in
//! lexicographic order, followed by the `K − 1` thresholds of margin 0, then
//! those of margin 1, and so on.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::Rho;

/// Sizes of a model: `q` margins, `k` categories per margin, `n` observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub q: usize,
    pub k: usize,
    pub n: usize,
}

impl ModelDims {
    pub fn new(q: usize, k: usize, n: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidDims(format!("q = {q}, need at least 2 margins")));
        }
        if k < 2 {
            return Err(Error::InvalidDims(format!("K = {k}, need at least 2 categories")));
        }
        if n < 1 {
            return Err(Error::InvalidDims("n = 0, need at least one observation".into()));
        }
        Ok(ModelDims { q, k, n })
    }

    pub fn n_pairs(&self) -> usize {
        n_pairs(self.q)
    }

    pub fn n_params(&self) -> usize {
        n_params(self.q, self.k)
    }
}

#[inline]
pub fn n_pairs(q: usize) -> usize {
    q * (q - 1) / 2
}

#[inline]
pub fn n_params(q: usize, k: usize) -> usize {
    n_pairs(q) + (k - 1) * q
}

/// Position of the pair `(r, s)`, `r < s < q`, in the lexicographic pair order.
pub fn pair_index(r: usize, s: usize, q: usize) -> Result<usize> {
    if r >= s || s >= q {
        return Err(Error::InvalidPair { r, s, q });
    }
    Ok(pair_index_unchecked(r, s, q))
}

#[inline]
pub(crate) fn pair_index_unchecked(r: usize, s: usize, q: usize) -> usize {
    r * (2 * q - r - 1) / 2 + (s - r - 1)
}

/// All pairs `(r, s)` with `r < s < q`, in packing order.
pub fn pairs(q: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..q).flat_map(move |r| (r + 1..q).map(move |s| (r, s)))
}

/// Packed index of threshold `a_level(margin)`, with `level` in `1..K`.
#[inline]
pub fn threshold_index(margin: usize, level: usize, q: usize, k: usize) -> usize {
    debug_assert!(level >= 1 && level < k);
    n_pairs(q) + margin * (k - 1) + (level - 1)
}

/// Human-readable labels in packing order, e.g. `rho[1,2]` and `a[1](3)`.
pub fn param_labels(q: usize, k: usize) -> Vec<String> {
    let mut labels: Vec<String> = pairs(q)
        .map(|(r, s)| format!("rho[{},{}]", r + 1, s + 1))
        .collect();
    for j in 0..q {
        for level in 1..k {
            labels.push(format!("a[{level}]({})", j + 1));
        }
    }
    labels
}

/// Ordered cut-points for every margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ThresholdSet {
    cuts: Vec<Vec<f64>>,
}

impl ThresholdSet {
    pub fn new(cuts: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = cuts.first() else {
            return Err(Error::InvalidDims("no margins".into()));
        };
        let len = first.len();
        if len == 0 {
            return Err(Error::InvalidDims("margins need at least one threshold".into()));
        }
        for (j, c) in cuts.iter().enumerate() {
            if c.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    got: c.len(),
                });
            }
            if c.iter().any(|x| !x.is_finite()) || c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::UnorderedThresholds { margin: j });
            }
        }
        Ok(ThresholdSet { cuts })
    }

    pub fn q(&self) -> usize {
        self.cuts.len()
    }

    /// Number of categories `K`.
    pub fn k(&self) -> usize {
        self.cuts[0].len() + 1
    }

    pub fn margin(&self, j: usize) -> &[f64] {
        &self.cuts[j]
    }

    pub fn as_vecs(&self) -> &[Vec<f64>] {
        &self.cuts
    }
}

impl TryFrom<Vec<Vec<f64>>> for ThresholdSet {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        ThresholdSet::new(v)
    }
}

impl From<ThresholdSet> for Vec<Vec<f64>> {
    fn from(t: ThresholdSet) -> Self {
        t.cuts
    }
}

/// Upper-triangle correlations `ρ_{r,s}`, lexicographic in `(r, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParams {
    q: usize,
    rhos: Vec<f64>,
}

impl CorrelationParams {
    pub fn new(q: usize, rhos: Vec<f64>) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidDims(format!("q = {q}, need at least 2 margins")));
        }
        if rhos.len() != n_pairs(q) {
            return Err(Error::DimensionMismatch {
                expected: n_pairs(q),
                got: rhos.len(),
            });
        }
        for &r in &rhos {
            Rho::new(r)?;
        }
        Ok(CorrelationParams { q, rhos })
    }

    pub fn identity(q: usize) -> Result<Self> {
        CorrelationParams::new(q, vec![0.0; n_pairs(q)])
    }

    /// Reads the strict upper triangle of a full correlation matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let q = m.nrows();
        let rhos = pairs(q).map(|(r, s)| m[(r, s)]).collect();
        CorrelationParams::new(q, rhos)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn values(&self) -> &[f64] {
        &self.rhos
    }

    pub fn get(&self, r: usize, s: usize) -> Result<Rho> {
        let (r, s) = if r < s { (r, s) } else { (s, r) };
        Ok(Rho::new(self.rhos[pair_index(r, s, self.q)?])?)
    }

    /// Full symmetric correlation matrix with unit diagonal.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.q, self.q);
        for ((r, s), &v) in pairs(self.q).zip(&self.rhos) {
            m[(r, s)] = v;
            m[(s, r)] = v;
        }
        m
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix()).eigenvalues.min()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }
}

/// Natural-coordinate parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    q: usize,
    k: usize,
    values: Vec<f64>,
}

impl Theta {
    pub fn new(q: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if q < 2 || k < 2 {
            return Err(Error::InvalidDims(format!("q = {q}, K = {k}")));
        }
        if values.len() != n_params(q, k) {
            return Err(Error::DimensionMismatch {
                expected: n_params(q, k),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let m = n_pairs(q);
        for &r in &values[..m] {
            Rho::new(r)?;
        }
        for (j, cuts) in values[m..].chunks(k - 1).enumerate() {
            if cuts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::UnorderedThresholds { margin: j });
            }
        }
        Ok(Theta { q, k, values })
    }

    pub fn from_parts(rhos: &CorrelationParams, thresholds: &ThresholdSet) -> Result<Self> {
        if rhos.q() != thresholds.q() {
            return Err(Error::DimensionMismatch {
                expected: rhos.q(),
                got: thresholds.q(),
            });
        }
        let mut values = rhos.values().to_vec();
        for c in thresholds.as_vecs() {
            values.extend_from_slice(c);
        }
        Theta::new(rhos.q(), thresholds.k(), values)
    }

    pub fn to_parts(&self) -> (CorrelationParams, ThresholdSet) {
        let m = n_pairs(self.q);
        let rhos = CorrelationParams {
            q: self.q,
            rhos: self.values[..m].to_vec(),
        };
        let cuts = ThresholdSet {
            cuts: self.values[m..].chunks(self.k - 1).map(<[f64]>::to_vec).collect(),
        };
        (rhos, cuts)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn rhos(&self) -> &[f64] {
        &self.values[..n_pairs(self.q)]
    }

    /// Correlation of pair index `p`; valid by construction.
    #[inline]
    pub fn rho_at(&self, p: usize) -> Rho {
        Rho::new(self.values[p]).expect("validated at construction")
    }

    /// Thresholds `a_1(j) … a_{K−1}(j)` of margin `j`.
    #[inline]
    pub fn thresholds(&self, j: usize) -> &[f64] {
        let start = n_pairs(self.q) + j * (self.k - 1);
        &self.values[start..start + self.k - 1]
    }

    /// Log-spacing coordinates `ψ = g(θ)`.
    pub fn to_psi(&self) -> Psi {
        let m = n_pairs(self.q);
        let mut values = self.values[..m].to_vec();
        for j in 0..self.q {
            let a = self.thresholds(j);
            values.push(a[0]);
            values.extend(a.windows(2).map(|w| (w[1] - w[0]).ln()));
        }
        Psi {
            q: self.q,
            k: self.k,
            values,
        }
    }
}

/// Reparametrized vector: correlations, then per margin `a_1(j)` followed by
/// the log-spacings `δ_k(j) = log(a_k(j) − a_{k−1}(j))` for `k = 2..K−1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psi {
    q: usize,
    k: usize,
    values: Vec<f64>,
}

impl Psi {
    pub fn new(q: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if q < 2 || k < 2 {
            return Err(Error::InvalidDims(format!("q = {q}, K = {k}")));
        }
        if values.len() != n_params(q, k) {
            return Err(Error::DimensionMismatch {
                expected: n_params(q, k),
                got: values.len(),
            });
        }
        for &r in &values[..n_pairs(q)] {
            Rho::new(r)?;
        }
        Ok(Psi { q, k, values })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// `θ = g⁻¹(ψ)`: `a_k(j) = a_1(j) + Σ_{t=2..k} exp(δ_t(j))`.
    ///
    /// Fails only when the spacings leave the representable range (an
    /// overflowing `exp`, or a spacing below the rounding unit of `a_1`).
    pub fn to_theta(&self) -> Result<Theta> {
        let m = n_pairs(self.q);
        let mut values = self.values[..m].to_vec();
        for block in self.values[m..].chunks(self.k - 1) {
            let mut a = block[0];
            values.push(a);
            for &d in &block[1..] {
                a += d.exp();
                values.push(a);
            }
        }
        Theta::new(self.q, self.k, values)
    }

    /// Jacobian `∂g⁻¹(ψ)/∂ψ`: identity on the correlations and one
    /// lower-triangular block `Δ_j` per margin.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let p = self.values.len();
        let m = n_pairs(self.q);
        let km1 = self.k - 1;
        let mut jac = DMatrix::zeros(p, p);
        for i in 0..m {
            jac[(i, i)] = 1.0;
        }
        for j in 0..self.q {
            let off = m + j * km1;
            for row in 0..km1 {
                jac[(off + row, off)] = 1.0;
                for t in 1..=row {
                    jac[(off + row, off + t)] = self.values[off + t].exp();
                }
            }
        }
        jac
    }

    /// Row-vector product `u_θᵀ · ∂g⁻¹(ψ)/∂ψ` without forming the matrix.
    pub fn chain_rule_score(&self, score_theta: &[f64]) -> Result<Vec<f64>> {
        if score_theta.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: score_theta.len(),
            });
        }
        let m = n_pairs(self.q);
        let km1 = self.k - 1;
        let mut out = score_theta[..m].to_vec();
        out.reserve(self.values.len() - m);
        for (u, psi) in score_theta[m..].chunks(km1).zip(self.values[m..].chunks(km1)) {
            // Column t of Δ_j collects rows t..K−1, so accumulate suffix sums.
            let mut block = vec![0.0; km1];
            let mut suffix = 0.0;
            for t in (0..km1).rev() {
                suffix += u[t];
                block[t] = if t == 0 { suffix } else { suffix * psi[t].exp() };
            }
            out.extend(block);
        }
        Ok(out)
    }

    /// Inverse of [`Psi::chain_rule_score`]: recovers `u_θ` from `u_ψ`.
    pub fn theta_score_from_psi_score(&self, score_psi: &[f64]) -> Result<Vec<f64>> {
        if score_psi.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: score_psi.len(),
            });
        }
        let m = n_pairs(self.q);
        let km1 = self.k - 1;
        let mut out = score_psi[..m].to_vec();
        for (u, psi) in score_psi[m..].chunks(km1).zip(self.values[m..].chunks(km1)) {
            let suffix: Vec<f64> = (0..km1)
                .map(|t| if t == 0 { u[0] } else { u[t] / psi[t].exp() })
                .collect();
            out.extend((0..km1).map(|t| suffix[t] - suffix.get(t + 1).copied().unwrap_or(0.0)));
        }
        Ok(out)
    }
}
