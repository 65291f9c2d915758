#![allow(dead_code)]

use pairprobit::gauss::bvn_cdf;
use pairprobit::simulate::{random_sparse_correlation, sample_dataset};
use pairprobit::{CorrelationParams, OrdinalDataset, PairCounts, Theta, ThresholdSet};
use rand::Rng;

/// Random instance: dense random correlations and spread thresholds.
pub fn random_theta<R: Rng>(rng: &mut R, q: usize, k: usize) -> Theta {
    let sigma = random_sparse_correlation(q, 0.0, rng).unwrap();
    let cuts = (0..q)
        .map(|_| {
            let mut a = -0.4 * (k as f64 - 2.0) + rng.random_range(-0.5..0.5);
            (0..k - 1)
                .map(|_| {
                    let v = a;
                    a += rng.random_range(0.3..1.2);
                    v
                })
                .collect()
        })
        .collect();
    Theta::from_parts(&sigma, &ThresholdSet::new(cuts).unwrap()).unwrap()
}

pub fn simulate<R: Rng>(theta: &Theta, n: usize, rng: &mut R) -> OrdinalDataset {
    let (sigma, cuts) = theta.to_parts();
    sample_dataset(&sigma, &cuts, n, rng).unwrap()
}

pub fn simulate_with(sigma: &CorrelationParams, cuts: &ThresholdSet, n: usize, rng: &mut impl Rng) -> OrdinalDataset {
    sample_dataset(sigma, cuts, n, rng).unwrap()
}

/// Central differences refined by Richardson extrapolation over four halvings.
pub fn richardson<F: FnMut(f64) -> f64>(mut f: F, x: f64, h0: f64) -> f64 {
    const LEVELS: usize = 4;
    let mut table = [[0.0; LEVELS]; LEVELS];
    let mut h = h0;
    for i in 0..LEVELS {
        table[i][0] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut pow = 1.0;
        for m in 1..=i {
            pow *= 4.0;
            table[i][m] = (pow * table[i][m - 1] - table[i - 1][m - 1]) / (pow - 1.0);
        }
        h *= 0.5;
    }
    table[LEVELS - 1][LEVELS - 1]
}

pub fn richardson_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let d = richardson(
                |v| {
                    work[i] = v;
                    f(&work)
                },
                x[i],
                1e-3 * x[i].abs().max(1.0),
            );
            work[i] = x[i];
            d
        })
        .collect()
}

/// Pairwise log-likelihood as a function of a raw parameter vector; `-inf`
/// outside the parameter space.
pub fn loglik_at(q: usize, k: usize, counts: &PairCounts) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x: &[f64]| match Theta::new(q, k, x.to_vec()) {
        Ok(t) => pairprobit::pairwise::pairwise_loglik(&t, counts).unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::NEG_INFINITY,
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature with an absolute tolerance per panel.
pub fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, tol, depth - 1) + rec(f, m, b, tol, depth - 1)
    }
    rec(f, a, b, tol, 40)
}

/// `P(X ≤ a, Y ≤ b)` by nested 2-D quadrature of the bivariate normal density.
pub fn bvn_cdf_quadrature(a: f64, b: f64, rho: f64) -> f64 {
    const LOWER: f64 = -10.0;
    let s2 = 1.0 - rho * rho;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s2.sqrt());
    let mut outer = |x: f64| {
        let mut inner = |y: f64| norm * (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * s2)).exp();
        adaptive(&mut inner, LOWER, b, 1e-15)
    };
    adaptive(&mut outer, LOWER, a, 1e-14)
}

/// Full ordinal-probit log-likelihood for two margins, written out cell by cell.
pub fn full_loglik_two(rho: f64, a1: &[f64], a2: &[f64], table: &[u64]) -> f64 {
    if rho.abs() >= 1.0 || a1.windows(2).any(|w| w[0] >= w[1]) || a2.windows(2).any(|w| w[0] >= w[1]) {
        return f64::NEG_INFINITY;
    }
    let k = a1.len() + 1;
    let cut = |a: &[f64], i: usize| -> f64 {
        if i == 0 {
            f64::NEG_INFINITY
        } else if i == k {
            f64::INFINITY
        } else {
            a[i - 1]
        }
    };
    let r = pairprobit::Rho::new(rho).unwrap();
    let f = |x: f64, y: f64| bvn_cdf(x, y, r);
    let mut ll = 0.0;
    for l in 0..k {
        for m in 0..k {
            let n = table[l * k + m];
            if n == 0 {
                continue;
            }
            let (x0, x1, y0, y1) = (cut(a1, l), cut(a1, l + 1), cut(a2, m), cut(a2, m + 1));
            let p = f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0);
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += n as f64 * p.ln();
        }
    }
    ll
}

/// Derivative-free zooming grid search: five points per coordinate around the
/// incumbent; the span halves whenever the centre is best.
pub fn grid_search<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], span: f64, final_span: f64) -> Vec<f64> {
    let d = start.len();
    let mut centre = start.to_vec();
    let mut best = f(&centre);
    let mut w = span;
    let offsets = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut point = vec![0.0; d];
    while w > final_span {
        let mut arg = centre.clone();
        let mut val = best;
        let total = offsets.len().pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            for (j, p) in point.iter_mut().enumerate() {
                *p = centre[j] + w * offsets[rem % 5];
                rem /= 5;
            }
            let v = f(&point);
            if v > val {
                val = v;
                arg.copy_from_slice(&point);
            }
        }
        if arg == centre {
            w *= 0.5;
        } else {
            centre = arg;
            best = val;
        }
    }
    centre
}
