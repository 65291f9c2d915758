//! Empirical Godambe information, standard errors and Wald intervals.
//!
//! `J` averages outer products of per-observation pairwise scores; `H`
//! averages outer products of the per-pair (single bivariate likelihood)
//! scores, which equals the expected negative Hessian by the second Bartlett
//! identity. Both are evaluated at the estimate.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::counts::{OrdinalDataset, PairCounts};
use crate::error::{Error, Result};
use crate::gauss::norm_quantile;
use crate::model::{n_pairs, param_labels, pairs, Theta};
use crate::pairwise::ScoreKernel;

/// Condition number of `J` above which the pseudo-inverse is used.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct GodambeMatrices {
    pub j_hat: DMatrix<f64>,
    pub h_hat: DMatrix<f64>,
    pub g_hat: DMatrix<f64>,
    /// Spectral condition number of `J` (infinite if `J` is singular).
    pub j_condition: f64,
    /// Set when `J` was too ill-conditioned for a Cholesky solve.
    pub pseudo_inverse_used: bool,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn add_outer(acc: &mut DMatrix<f64>, u: &[f64], weight: f64) {
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        let wi = weight * ui;
        for (j, &uj) in u.iter().enumerate() {
            acc[(i, j)] += wi * uj;
        }
    }
}

/// `Ĵ = (1/n) Σ_i u(θ; y_i) u(θ; y_i)ᵀ`.
pub fn variability_j(theta: &Theta, data: &OrdinalDataset) -> Result<DMatrix<f64>> {
    check(theta, data.q(), data.k())?;
    let kernel = ScoreKernel::new(theta);
    let p = theta.len();
    let mut acc = DMatrix::zeros(p, p);
    let mut u = vec![0.0; p];
    for row in data.rows() {
        u.iter_mut().for_each(|v| *v = 0.0);
        kernel.add_observation_score(row, &mut u);
        add_outer(&mut acc, &u, 1.0);
    }
    acc /= data.n() as f64;
    symmetrize(&mut acc);
    Ok(acc)
}

/// `Ĥ = (1/n) Σ_i Σ_{r<s} u(θ; y_ir, y_is) u(θ; y_ir, y_is)ᵀ`, grouped by cell.
pub fn sensitivity_h(theta: &Theta, counts: &PairCounts) -> Result<DMatrix<f64>> {
    check(theta, counts.q(), counts.k())?;
    let kernel = ScoreKernel::new(theta);
    let (q, k) = (theta.q(), theta.k());
    let mut acc = DMatrix::zeros(theta.len(), theta.len());
    for (p, (r, s)) in pairs(q).enumerate() {
        let block = counts.block(p);
        for l in 1..=k {
            for m in 1..=k {
                let c = block[(l - 1) * k + (m - 1)];
                if c == 0 {
                    continue;
                }
                let cs = kernel.cell_score(r, s, l, m);
                for &(i, vi) in cs.entries() {
                    for &(j, vj) in cs.entries() {
                        acc[(i, j)] += c as f64 * vi * vj;
                    }
                }
            }
        }
    }
    acc /= counts.n() as f64;
    symmetrize(&mut acc);
    Ok(acc)
}

fn check(theta: &Theta, q: usize, k: usize) -> Result<()> {
    if theta.q() != q || theta.k() != k {
        return Err(Error::InvalidDims(format!(
            "θ has q = {}, K = {}; data have q = {q}, K = {k}",
            theta.q(),
            theta.k()
        )));
    }
    Ok(())
}

/// `G = H J⁻¹ H`, with a pseudo-inverse of `J` when it is ill-conditioned.
/// Returns `(G, condition number of J, pseudo-inverse used)`.
pub fn godambe_g(j: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, bool)> {
    if !j.is_square() || j.shape() != h.shape() {
        return Err(Error::DimensionMismatch {
            expected: j.nrows(),
            got: h.nrows(),
        });
    }
    let eig = SymmetricEigen::new(j.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };

    let solved = if cond <= MAX_CONDITION {
        j.clone().cholesky().map(|c| c.solve(h))
    } else {
        None
    };
    let (j_inv_h, pinv) = match solved {
        Some(x) => (x, false),
        None => {
            log::warn!("variability matrix is ill-conditioned (condition {cond:e}); using a pseudo-inverse");
            let cutoff = lmax.abs() / MAX_CONDITION;
            let inv_vals = eig
                .eigenvalues
                .map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
            let pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
            (pinv * h, true)
        }
    };
    let mut g = h * j_inv_h;
    symmetrize(&mut g);
    Ok((g, cond, pinv))
}

/// All three matrices at `θ̂`.
pub fn godambe_matrices(theta: &Theta, data: &OrdinalDataset, counts: &PairCounts) -> Result<GodambeMatrices> {
    let j_hat = variability_j(theta, data)?;
    let h_hat = sensitivity_h(theta, counts)?;
    let (g_hat, j_condition, pseudo_inverse_used) = godambe_g(&j_hat, &h_hat)?;
    Ok(GodambeMatrices {
        j_hat,
        h_hat,
        g_hat,
        j_condition,
        pseudo_inverse_used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldInterval {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl WaldInterval {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Standard errors `√([G⁻¹]_tt / n)` and intervals `estimate ± z·se`;
/// correlation intervals are clamped to `[−1, 1]`.
pub fn wald_intervals(theta: &Theta, g: &DMatrix<f64>, n: usize, level: f64) -> Result<Vec<WaldInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0, 1)")));
    }
    if g.nrows() != theta.len() || !g.is_square() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: g.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidDims("sample size must be positive".into()));
    }
    let Some(chol) = g.clone().cholesky() else {
        let eig = SymmetricEigen::new(g.clone()).eigenvalues;
        return Err(Error::NotPositiveDefinite(format!(
            "Godambe matrix of dimension {} has eigenvalues in [{:e}, {:e}]",
            g.nrows(),
            eig.min(),
            eig.max()
        )));
    };
    let cov = chol.inverse();
    let z = norm_quantile(1.0 - (1.0 - level) / 2.0)?;
    let m = n_pairs(theta.q());
    let labels = param_labels(theta.q(), theta.k());
    Ok(theta
        .as_slice()
        .iter()
        .enumerate()
        .map(|(t, &est)| {
            let se = (cov[(t, t)] / n as f64).sqrt();
            let (mut lo, mut hi) = (est - z * se, est + z * se);
            if t < m {
                lo = lo.max(-1.0);
                hi = hi.min(1.0);
            }
            WaldInterval {
                label: labels[t].clone(),
                estimate: est,
                std_error: se,
                lower: lo,
                upper: hi,
                level,
            }
        })
        .collect())
}
