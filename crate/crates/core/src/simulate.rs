//! Synthetic data from the latent Gaussian model and replicated studies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::{OrdinalDataset, PairCounts};
use crate::error::{Error, Result};
use crate::fit::{maximize, FitConfig};
use crate::godambe::{godambe_matrices, wald_intervals};
use crate::model::{n_pairs, param_labels, CorrelationParams, Theta, ThresholdSet};

/// Minimum eigenvalue accepted for a generated correlation matrix.
pub const MIN_EIGENVALUE: f64 = 1e-6;
const CLIP_EIGENVALUE: f64 = 1e-4;
const REPAIR_ROUNDS: usize = 50;
const MAX_DRAWS: usize = 100;

fn unit_diagonal(m: &mut DMatrix<f64>) {
    let d: Vec<f64> = (0..m.nrows()).map(|i| m[(i, i)].sqrt()).collect();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] /= d[i] * d[j];
        }
        m[(i, i)] = 1.0;
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Random correlation matrix in which `round(zero_fraction · q(q−1)/2)`
/// off-diagonal entries are exactly zero.
///
/// A normalized Gram matrix of `2q`-dimensional Gaussian vectors is
/// sparsified, then repaired if needed by clipping eigenvalues at `1e-4`,
/// restoring the unit diagonal and re-imposing the zeros. Draws that do not
/// reach a minimum eigenvalue of `1e-6` are discarded.
pub fn random_sparse_correlation<R: Rng + ?Sized>(
    q: usize,
    zero_fraction: f64,
    rng: &mut R,
) -> Result<CorrelationParams> {
    if q < 2 {
        return Err(Error::InvalidDims(format!("q = {q}; need at least 2 margins")));
    }
    if !(0.0..1.0).contains(&zero_fraction) {
        return Err(Error::Config(format!("zero_fraction {zero_fraction} outside [0, 1)")));
    }
    let offdiag: Vec<(usize, usize)> = crate::model::pairs(q).collect();
    let n_zero = ((zero_fraction * offdiag.len() as f64).round() as usize).min(offdiag.len());
    let dim = 2 * q;

    for _ in 0..MAX_DRAWS {
        let w = DMatrix::from_fn(q, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut c = &w * w.transpose();
        unit_diagonal(&mut c);
        let zeros: Vec<(usize, usize)> = index::sample(rng, offdiag.len(), n_zero)
            .into_iter()
            .map(|i| offdiag[i])
            .collect();
        let impose = |m: &mut DMatrix<f64>| {
            for &(r, s) in &zeros {
                m[(r, s)] = 0.0;
                m[(s, r)] = 0.0;
            }
        };
        impose(&mut c);

        let mut ok = min_eigenvalue(&c) >= MIN_EIGENVALUE;
        for _ in 0..REPAIR_ROUNDS {
            if ok {
                break;
            }
            let eig = SymmetricEigen::new(c.clone());
            let clipped = eig.eigenvalues.map(|l| l.max(CLIP_EIGENVALUE));
            c = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            unit_diagonal(&mut c);
            impose(&mut c);
            ok = min_eigenvalue(&c) >= MIN_EIGENVALUE;
        }
        if ok {
            let c = (&c + c.transpose()) * 0.5;
            return CorrelationParams::from_matrix(&c);
        }
    }
    Err(Error::CorrelationGeneration(MAX_DRAWS))
}

/// `n` observations: `Z = L ε` with `Σ = L Lᵀ`, and `y_j = k` iff
/// `a_{k−1}(j) < z_j ≤ a_k(j)`.
pub fn sample_dataset<R: Rng + ?Sized>(
    sigma: &CorrelationParams,
    thresholds: &ThresholdSet,
    n: usize,
    rng: &mut R,
) -> Result<OrdinalDataset> {
    let q = sigma.q();
    if thresholds.q() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: thresholds.q(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidDims("sample size must be positive".into()));
    }
    let chol = sigma.matrix().cholesky().ok_or_else(|| {
        Error::NotPositiveDefinite(format!(
            "correlation matrix has minimum eigenvalue {:e}",
            sigma.min_eigenvalue()
        ))
    })?;
    let l = chol.l();
    let mut cells = Vec::with_capacity(n * q);
    let mut eps = DVector::zeros(q);
    for _ in 0..n {
        eps.iter_mut().for_each(|e| *e = rng.sample(StandardNormal));
        let z = &l * &eps;
        for (j, &zj) in z.iter().enumerate() {
            let below = thresholds.margin(j).iter().take_while(|&&a| a < zj).count();
            cells.push((below + 1) as u16);
        }
    }
    Ok(OrdinalDataset::from_cells(q, thresholds.k(), cells))
}

/// Explicit generating parameters for a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTruth {
    /// Correlations in pair order `(1,2), (1,3), …, (q−1,q)`.
    pub rhos: Vec<f64>,
    pub thresholds: Vec<Vec<f64>>,
}

fn default_parallel() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub q: usize,
    pub k: usize,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub level: f64,
    pub zero_fraction: f64,
    pub threshold_menu: Vec<Vec<f64>>,
    pub seed: u64,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
    /// Fixed truth; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<StudyTruth>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.q < 2 || self.k < 2 {
            return bad(format!("need q ≥ 2 and K ≥ 2, got q = {}, K = {}", self.q, self.k));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return bad("sample_sizes must be a non-empty list of positive integers".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level {} outside (0, 1)", self.level));
        }
        if !(0.0..1.0).contains(&self.zero_fraction) {
            return bad(format!("zero_fraction {} outside [0, 1)", self.zero_fraction));
        }
        if self.truth.is_none() && self.threshold_menu.is_empty() {
            return bad("threshold_menu must not be empty".into());
        }
        for (i, t) in self.threshold_menu.iter().enumerate() {
            if t.len() != self.k - 1 {
                return bad(format!(
                    "threshold_menu entry {} has {} values; expected K−1 = {}",
                    i + 1,
                    t.len(),
                    self.k - 1
                ));
            }
            if t.iter().any(|x| !x.is_finite()) || t.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("threshold_menu entry {} is not strictly increasing", i + 1));
            }
        }
        self.fit.validate()?;
        if let Some(truth) = &self.truth {
            self.truth_theta(truth)?;
        }
        Ok(())
    }

    fn truth_theta(&self, truth: &StudyTruth) -> Result<Theta> {
        let sigma = CorrelationParams::new(self.q, truth.rhos.clone())?;
        if sigma.min_eigenvalue() < MIN_EIGENVALUE {
            return Err(Error::NotPositiveDefinite("truth correlation matrix".into()));
        }
        let thresholds = ThresholdSet::new(truth.thresholds.clone())?;
        if thresholds.k() != self.k {
            return Err(Error::Config(format!(
                "truth thresholds imply K = {}, config has K = {}",
                thresholds.k(),
                self.k
            )));
        }
        Theta::from_parts(&sigma, &thresholds)
    }

    /// Truth used by the study: explicit, or drawn from stream 0 of the seed.
    pub fn draw_truth(&self) -> Result<Theta> {
        if let Some(truth) = &self.truth {
            return self.truth_theta(truth);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let sigma = random_sparse_correlation(self.q, self.zero_fraction, &mut rng)?;
        let cuts = (0..self.q)
            .map(|_| self.threshold_menu[rng.random_range(0..self.threshold_menu.len())].clone())
            .collect();
        Theta::from_parts(&sigma, &ThresholdSet::new(cuts)?)
    }

    fn replicate_rng(&self, scenario: usize, replicate: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1 + (scenario * self.replicates + replicate) as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicateStatus {
    Converged,
    NotConverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub status: ReplicateStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub iterations: usize,
    pub sigma_pd: bool,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub label: String,
    pub truth: f64,
    pub mse: f64,
    pub mean_std_error: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    pub mse: f64,
    pub mean_std_error: f64,
    pub coverage: f64,
    pub intervals: usize,
    pub covered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub n: usize,
    pub used: usize,
    pub not_converged: usize,
    pub failed: usize,
    pub parameters: Vec<ParameterSummary>,
    /// Aggregates over the correlation parameters.
    pub correlations: Pooled,
    /// Aggregates over the threshold parameters.
    pub thresholds: Pooled,
    pub replicates: Vec<ReplicateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub labels: Vec<String>,
    pub truth: Vec<f64>,
    pub truth_min_eigenvalue: f64,
    pub scenarios: Vec<ScenarioResult>,
}

struct Replicate {
    record: ReplicateRecord,
    covered: Vec<bool>,
}

fn run_replicate(config: &StudyConfig, truth: &Theta, sigma: &CorrelationParams, thresholds: &ThresholdSet, n: usize, scenario: usize, index: usize) -> Replicate {
    let mut record = ReplicateRecord {
        index,
        status: ReplicateStatus::Failed,
        error: None,
        iterations: 0,
        sigma_pd: false,
        estimates: Vec::new(),
        std_errors: Vec::new(),
    };
    let mut rng = config.replicate_rng(scenario, index);
    let outcome = (|| -> Result<(crate::fit::FitResult, Vec<crate::godambe::WaldInterval>)> {
        let data = sample_dataset(sigma, thresholds, n, &mut rng)?;
        let counts = PairCounts::from_dataset(&data);
        let fit = maximize(&data, &counts, &config.fit)?;
        let g = godambe_matrices(&fit.theta_hat, &data, &counts)?;
        let ivs = wald_intervals(&fit.theta_hat, &g.g_hat, n, config.level)?;
        Ok((fit, ivs))
    })();
    match outcome {
        Ok((fit, ivs)) => {
            record.status = if fit.converged {
                ReplicateStatus::Converged
            } else {
                ReplicateStatus::NotConverged
            };
            record.iterations = fit.iterations;
            record.sigma_pd = fit.sigma_pd;
            record.estimates = fit.theta_hat.into_vec();
            record.std_errors = ivs.iter().map(|iv| iv.std_error).collect();
            let covered = ivs.iter().zip(truth.as_slice()).map(|(iv, &t)| iv.covers(t)).collect();
            Replicate { record, covered }
        }
        Err(e) => {
            log::warn!("replicate {index} at n = {n} failed: {e}");
            record.error = Some(e.to_string());
            Replicate {
                record,
                covered: Vec::new(),
            }
        }
    }
}

fn pooled(used: &[&Replicate], truth: &[f64], range: std::ops::Range<usize>) -> Pooled {
    let (mut se2, mut se, mut covered, mut total) = (0.0, 0.0, 0usize, 0usize);
    for rep in used {
        for t in range.clone() {
            se2 += (rep.record.estimates[t] - truth[t]).powi(2);
            se += rep.record.std_errors[t];
            covered += rep.covered[t] as usize;
            total += 1;
        }
    }
    let denom = total.max(1) as f64;
    Pooled {
        mse: se2 / denom,
        mean_std_error: se / denom,
        coverage: covered as f64 / denom,
        intervals: total,
        covered,
    }
}

/// Simulate, fit and summarize `R` replicates for each sample size.
///
/// The truth is fixed across sample sizes and replicates. Replicates that do
/// not converge or fail are recorded but excluded from the summaries.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let truth = config.draw_truth()?;
    let (sigma, thresholds) = truth.to_parts();
    let labels = param_labels(config.q, config.k);
    let m = n_pairs(config.q);
    let p = truth.len();

    let mut scenarios = Vec::with_capacity(config.sample_sizes.len());
    for (si, &n) in config.sample_sizes.iter().enumerate() {
        let run = |r| run_replicate(config, &truth, &sigma, &thresholds, n, si, r);
        let reps: Vec<Replicate> = if config.parallel {
            (0..config.replicates).into_par_iter().map(run).collect()
        } else {
            (0..config.replicates).map(run).collect()
        };
        let used: Vec<&Replicate> = reps
            .iter()
            .filter(|r| r.record.status == ReplicateStatus::Converged)
            .collect();
        let count = |s| reps.iter().filter(|r| r.record.status == s).count();
        let (not_converged, failed) = (count(ReplicateStatus::NotConverged), count(ReplicateStatus::Failed));
        if used.is_empty() {
            return Err(Error::AllReplicatesFailed(config.replicates));
        }
        if not_converged + failed > 0 {
            log::warn!("n = {n}: {not_converged} replicates did not converge, {failed} failed");
        }
        let parameters = (0..p)
            .map(|t| {
                let s = pooled(&used, truth.as_slice(), t..t + 1);
                ParameterSummary {
                    label: labels[t].clone(),
                    truth: truth.as_slice()[t],
                    mse: s.mse,
                    mean_std_error: s.mean_std_error,
                    coverage: s.coverage,
                }
            })
            .collect();
        scenarios.push(ScenarioResult {
            n,
            used: used.len(),
            not_converged,
            failed,
            parameters,
            correlations: pooled(&used, truth.as_slice(), 0..m),
            thresholds: pooled(&used, truth.as_slice(), m..p),
            replicates: reps.into_iter().map(|r| r.record).collect(),
        });
    }
    Ok(StudyResult {
        labels,
        truth_min_eigenvalue: sigma.min_eigenvalue(),
        truth: truth.into_vec(),
        scenarios,
    })
}
