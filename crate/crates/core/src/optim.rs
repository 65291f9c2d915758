//! Projected BFGS for minimization under simple box constraints.
//!
//! Variables sitting on a bound with the gradient pushing outward are frozen
//! for the iteration; the remaining ones follow the quasi-Newton direction
//! and the trial point is projected back into the box. Steps are accepted by
//! an Armijo test along the projected path, so the objective never increases.

use nalgebra::{DMatrix, DVector};

/// Objective supplied to [`minimize`]. Returning `None` marks a point as
/// infeasible, which the line search treats like an increase.
pub(crate) trait Objective {
    fn value(&mut self, x: &[f64]) -> Option<f64>;
    fn value_grad(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
    fn is_stationary(&mut self, x: &[f64], projected_grad: &[f64]) -> bool;
}

#[derive(Debug, Clone)]
pub(crate) struct Options {
    pub max_iterations: usize,
    pub objective_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
    Stalled,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub projected_grad: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub status: Status,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const STALL_LIMIT: usize = 20;
const FIRST_STEP: f64 = 0.1;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

// Zero where a bound is active and the gradient points out of the box.
fn projected_gradient(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `obj` from `x0` (projected into `[lower, upper]`). Returns `None`
/// only when the starting point itself cannot be evaluated.
pub(crate) fn minimize<O: Objective>(
    obj: &mut O,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &Options,
) -> Option<Outcome> {
    let dim = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut f, mut g) = obj.value_grad(&x)?;
    if !f.is_finite() {
        return None;
    }
    let mut history = vec![f];
    let mut hinv: Option<DMatrix<f64>> = None;
    let mut stall = 0;
    let mut iterations = 0;

    let status = loop {
        let pg = projected_gradient(&x, &g, lower, upper);
        if obj.is_stationary(&x, &pg) {
            break Status::Converged;
        }
        if iterations >= opts.max_iterations {
            break Status::MaxIterations;
        }
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, g)| *p != 0.0 || *g == 0.0).collect();

        let mut accepted = None;
        // Second attempt falls back to scaled steepest descent.
        for attempt in 0..2 {
            let d = match (&hinv, attempt) {
                (Some(h), 0) => {
                    let gf = DVector::from_iterator(
                        dim,
                        g.iter().zip(&free).map(|(&gi, &fr)| if fr { gi } else { 0.0 }),
                    );
                    let mut d: Vec<f64> = (-(h * gf)).iter().copied().collect();
                    d.iter_mut().zip(&free).for_each(|(di, &fr)| {
                        if !fr {
                            *di = 0.0
                        }
                    });
                    d
                }
                _ => {
                    let scale = match &hinv {
                        Some(h) => h.diagonal().mean().max(f64::MIN_POSITIVE),
                        None => FIRST_STEP / inf_norm(&pg).max(f64::MIN_POSITIVE),
                    };
                    pg.iter().map(|&gi| -scale * gi).collect()
                }
            };
            let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
                project(&mut trial, lower, upper);
                let decrease: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gi, (t, xi))| gi * (t - xi)).sum();
                if let Some(ft) = obj.value(&trial) {
                    if ft.is_finite() && ft <= f + ARMIJO_C1 * decrease && decrease < 0.0 {
                        accepted = Some(trial);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            if hinv.is_none() {
                break;
            }
            hinv = hinv.map(|h| DMatrix::identity(dim, dim) * h.diagonal().mean());
        }

        let Some(x_new) = accepted else {
            break Status::LineSearchFailed;
        };
        let Some((f_new, g_new)) = obj.value_grad(&x_new) else {
            break Status::LineSearchFailed;
        };
        iterations += 1;

        let s = DVector::from_iterator(dim, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(dim, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            let h = hinv.get_or_insert_with(|| DMatrix::identity(dim, dim) * (sy / y.dot(&y)));
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy = &*h * &y;
            let yhy = y.dot(&hy);
            let coef = (1.0 + rho * yhy) * rho;
            *h += &s * s.transpose() * coef - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        let rel = (f - f_new).abs() / f.abs().max(1.0);
        stall = if rel < opts.objective_tolerance { stall + 1 } else { 0 };
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if stall >= STALL_LIMIT {
            let pg = projected_gradient(&x, &g, lower, upper);
            break if obj.is_stationary(&x, &pg) {
                Status::Converged
            } else {
                Status::Stalled
            };
        }
    };

    let projected_grad = projected_gradient(&x, &g, lower, upper);
    Some(Outcome {
        x,
        projected_grad,
        iterations,
        history,
        status,
    })
}
