//! Maximum pairwise likelihood estimation.
//!
//! The objective is maximized over the log-spacing coordinates `ψ` so that
//! every iterate has ordered thresholds. Correlations are box-constrained to
//! `[−rho_bound, rho_bound]`; the joint positive definiteness of the fitted
//! correlation matrix is only checked afterwards.

use serde::{Deserialize, Serialize};

use crate::counts::{OrdinalDataset, PairCounts};
use crate::error::{Error, Result};
use crate::gauss::norm_quantile;
use crate::model::{n_pairs, CorrelationParams, Psi, Theta, ThresholdSet};
use crate::numdiff::central_gradient;
use crate::optim::{self, Objective};
use crate::pairwise::{CellProbCache, ScoreKernel};

pub use crate::optim::Status;

/// How the optimizer obtains gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSource {
    /// Closed-form pairwise score mapped through the `ψ` Jacobian.
    #[default]
    Analytic,
    /// Central differences of the objective in `ψ`.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Convergence requires the projected gradient's infinity norm to be at
    /// most `gradient_tolerance · n`, in both `ψ` and `θ` coordinates.
    pub gradient_tolerance: f64,
    pub objective_tolerance: f64,
    pub rho_bound: f64,
    pub gradient: GradientSource,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            objective_tolerance: 1e-10,
            rho_bound: 0.999,
            gradient: GradientSource::Analytic,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.objective_tolerance > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.rho_bound > 0.0 && self.rho_bound <= crate::gauss::MAX_ABS_RHO) {
            return Err(Error::Config(format!(
                "rho_bound {} outside (0, {}]",
                self.rho_bound,
                crate::gauss::MAX_ABS_RHO
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub psi_hat: Psi,
    pub loglik: f64,
    pub initial_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: Status,
    /// Infinity norm of the projected `ψ` gradient at the estimate.
    pub gradient_norm: f64,
    /// Whether the fitted correlation matrix is positive definite.
    pub sigma_pd: bool,
    /// Observed cells whose probability was floored at the estimate.
    pub underflow_count: usize,
    /// Log-likelihood of every accepted iterate, starting point first.
    pub loglik_trace: Vec<f64>,
}

/// Starting point: thresholds at the normal quantiles of the cumulative
/// marginal frequencies, all correlations zero.
pub fn initialize(data: &OrdinalDataset) -> Result<Theta> {
    let (q, k, n) = (data.q(), data.k(), data.n() as f64);
    let mut cuts = Vec::with_capacity(q);
    for j in 0..q {
        let tally = data.margin_counts(j);
        if let Some(c) = tally.iter().position(|&t| t == 0) {
            return Err(Error::EmptyCategory {
                margin: j,
                category: c + 1,
            });
        }
        let mut cum = 0u64;
        let margin: Result<Vec<f64>> = tally[..k - 1]
            .iter()
            .map(|&t| {
                cum += t;
                norm_quantile(cum as f64 / n)
            })
            .collect();
        cuts.push(margin?);
    }
    Theta::from_parts(&CorrelationParams::identity(q)?, &ThresholdSet::new(cuts)?)
}

struct PsiObjective<'a> {
    counts: &'a PairCounts,
    gradient: GradientSource,
    abs_tol: f64,
}

impl PsiObjective<'_> {
    fn theta(&self, x: &[f64]) -> Option<Theta> {
        Psi::new(self.counts.q(), self.counts.k(), x.to_vec())
            .ok()?
            .to_theta()
            .ok()
    }
}

impl Objective for PsiObjective<'_> {
    fn value(&mut self, x: &[f64]) -> Option<f64> {
        let theta = self.theta(x)?;
        Some(-CellProbCache::new(&theta).loglik(self.counts).value)
    }

    fn value_grad(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        match self.gradient {
            GradientSource::Analytic => {
                let theta = self.theta(x)?;
                let kernel = ScoreKernel::new(&theta);
                let f = -kernel.loglik(self.counts).value;
                let psi = Psi::new(theta.q(), theta.k(), x.to_vec()).ok()?;
                let g = psi.chain_rule_score(&kernel.score(self.counts)).ok()?;
                Some((f, g.into_iter().map(|v| -v).collect()))
            }
            GradientSource::FiniteDifference => {
                let f = self.value(x)?;
                let g = central_gradient(|y| self.value(y).unwrap_or(f64::NAN), x);
                g.iter().all(|v| v.is_finite()).then_some((f, g))
            }
        }
    }

    fn is_stationary(&mut self, x: &[f64], pg: &[f64]) -> bool {
        if pg.iter().any(|v| v.abs() > self.abs_tol) {
            return false;
        }
        let Ok(psi) = Psi::new(self.counts.q(), self.counts.k(), x.to_vec()) else {
            return false;
        };
        psi.theta_score_from_psi_score(pg)
            .map(|u| u.iter().all(|v| v.abs() <= self.abs_tol))
            .unwrap_or(false)
    }
}

/// Maximizes the pairwise log-likelihood from [`initialize`]'s start.
pub fn maximize(data: &OrdinalDataset, counts: &PairCounts, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let start = initialize(data)?;
    maximize_from(&start, counts, config)
}

/// Maximizes the pairwise log-likelihood from an explicit starting point.
pub fn maximize_from(start: &Theta, counts: &PairCounts, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if start.q() != counts.q() || start.k() != counts.k() {
        return Err(Error::InvalidDims("starting point does not match the counts".into()));
    }
    let (q, k, n) = (counts.q(), counts.k(), counts.n());
    let dim = start.len();
    let m = n_pairs(q);
    let mut lower = vec![f64::NEG_INFINITY; dim];
    let mut upper = vec![f64::INFINITY; dim];
    lower[..m].fill(-config.rho_bound);
    upper[..m].fill(config.rho_bound);

    let mut objective = PsiObjective {
        counts,
        gradient: config.gradient,
        abs_tol: config.gradient_tolerance * n as f64,
    };
    let opts = optim::Options {
        max_iterations: config.max_iterations,
        objective_tolerance: config.objective_tolerance,
    };
    let x0 = start.to_psi().into_vec();
    let outcome = optim::minimize(&mut objective, &x0, &lower, &upper, &opts)
        .ok_or_else(|| Error::Config("objective is not finite at the starting point".into()))?;

    let psi_hat = Psi::new(q, k, outcome.x)?;
    let theta_hat = psi_hat.to_theta()?;
    let ll = CellProbCache::new(&theta_hat).loglik(counts);
    let (rhos, _) = theta_hat.to_parts();
    let gradient_norm = outcome.projected_grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(FitResult {
        psi_hat,
        loglik: ll.value,
        initial_loglik: -outcome.history[0],
        iterations: outcome.iterations,
        converged: outcome.status == Status::Converged,
        status: outcome.status,
        gradient_norm,
        sigma_pd: rhos.is_positive_definite(),
        underflow_count: ll.underflow,
        loglik_trace: outcome.history.iter().map(|f| -f).collect(),
        theta_hat,
    })
}
