//! Univariate and bivariate standard Gaussian kernels.
//!
//! The bivariate CDF follows Genz's BVNU scheme: Gauss–Legendre quadrature
//! over the correlation parameter for `|ρ| < 0.925`, and an asymptotic
//! expansion plus a transformed quadrature for larger `|ρ|`. The partial
//! derivatives are the closed forms of the bivariate CDF with respect to the
//! two limits and the correlation.

use std::cmp::Ordering;
use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Largest admissible `|ρ|`. The conditional-CDF identities divide by `√(1−ρ²)`.
pub const MAX_ABS_RHO: f64 = 1.0 - 1e-6;

const TWO_PI: f64 = 2.0 * PI;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

// Beyond this magnitude the univariate tail mass is below the smallest
// subnormal double, so limits are treated as infinite.
const TAIL_CUTOFF: f64 = 38.5;

/// A correlation coefficient strictly inside `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Rho(f64);

impl Rho {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value.abs() <= MAX_ABS_RHO {
            Ok(Rho(value))
        } else {
            Err(Error::RhoOutOfRange(value))
        }
    }

    pub const ZERO: Rho = Rho(0.0);

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Rho {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Rho::new(value)
    }
}

impl From<Rho> for f64 {
    fn from(r: Rho) -> f64 {
        r.0
    }
}

/// An integration limit on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    NegInf,
    Finite(f64),
    PosInf,
}

impl Limit {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Limit::NegInf => f64::NEG_INFINITY,
            Limit::Finite(x) => x,
            Limit::PosInf => f64::INFINITY,
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        matches!(self, Limit::Finite(_))
    }
}

impl From<f64> for Limit {
    #[inline]
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            Limit::PosInf
        } else if x == f64::NEG_INFINITY {
            Limit::NegInf
        } else {
            Limit::Finite(x)
        }
    }
}

impl PartialOrd for Limit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

/// Standard Gaussian density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard Gaussian CDF; `±∞` map to 1 and 0.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / SQRT_2)
    }
}

/// Standard Gaussian quantile function.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    // One Halley step against the CDF tightens the inverse to the CDF's accuracy.
    let e = if x < 0.0 {
        norm_cdf(x) - p
    } else {
        (1.0 - p) - norm_cdf(-x)
    };
    let u = e / norm_pdf(x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Density of the standard bivariate Gaussian with correlation `rho`.
#[inline]
pub fn bvn_pdf(x1: f64, x2: f64, rho: Rho) -> f64 {
    let r = rho.0;
    let one_minus = (1.0 - r) * (1.0 + r);
    let quad = (x1 * x1 - 2.0 * r * x1 * x2 + x2 * x2) / one_minus;
    (-0.5 * quad).exp() / (TWO_PI * one_minus.sqrt())
}

/// `Φ((x2 − ρ·x1) / √(1−ρ²))`, evaluated analytically when `x2` is infinite.
#[inline]
pub fn conditional_cdf(x2: Limit, x1: f64, rho: Rho) -> f64 {
    match x2 {
        Limit::NegInf => 0.0,
        Limit::PosInf => 1.0,
        Limit::Finite(v) => {
            let r = rho.0;
            norm_cdf((v - r * x1) / ((1.0 - r) * (1.0 + r)).sqrt())
        }
    }
}

/// `P(Z1 ≤ a, Z2 ≤ b)` for a standard bivariate Gaussian with correlation `rho`.
pub fn bvn_cdf(a: impl Into<Limit>, b: impl Into<Limit>, rho: Rho) -> f64 {
    let a = clip_tail(a.into());
    let b = clip_tail(b.into());
    match (a, b) {
        (Limit::NegInf, _) | (_, Limit::NegInf) => 0.0,
        (Limit::PosInf, Limit::PosInf) => 1.0,
        (Limit::PosInf, Limit::Finite(y)) => norm_cdf(y),
        (Limit::Finite(x), Limit::PosInf) => norm_cdf(x),
        (Limit::Finite(x), Limit::Finite(y)) => {
            // Ordered arguments make the result exactly symmetric.
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            upper_orthant(-hi, -lo, rho.0).clamp(0.0, 1.0)
        }
    }
}

#[inline]
fn clip_tail(x: Limit) -> Limit {
    match x {
        Limit::Finite(v) if v > TAIL_CUTOFF => Limit::PosInf,
        Limit::Finite(v) if v < -TAIL_CUTOFF => Limit::NegInf,
        other => other,
    }
}

/// `∂Φ2/∂x1 = φ(x1)·Φ((x2 − ρx1)/√(1−ρ²))`.
#[inline]
pub fn bvn_cdf_dx1(x1: f64, x2: impl Into<Limit>, rho: Rho) -> f64 {
    norm_pdf(x1) * conditional_cdf(x2.into(), x1, rho)
}

/// `∂Φ2/∂x2 = φ(x2)·Φ((x1 − ρx2)/√(1−ρ²))`.
#[inline]
pub fn bvn_cdf_dx2(x1: impl Into<Limit>, x2: f64, rho: Rho) -> f64 {
    norm_pdf(x2) * conditional_cdf(x1.into(), x2, rho)
}

/// Probability of the rectangle `(lo1, hi1] × (lo2, hi2]`, clamped to `[0, 1]`.
pub fn rect_prob(
    lo1: impl Into<Limit>,
    hi1: impl Into<Limit>,
    lo2: impl Into<Limit>,
    hi2: impl Into<Limit>,
    rho: Rho,
) -> Result<f64> {
    let (lo1, hi1, lo2, hi2) = (lo1.into(), hi1.into(), lo2.into(), hi2.into());
    for (lo, hi) in [(lo1, hi1), (lo2, hi2)] {
        if !(lo < hi) {
            return Err(Error::InvertedLimits {
                lower: lo.value(),
                upper: hi.value(),
            });
        }
    }
    let p = bvn_cdf(hi1, hi2, rho) - bvn_cdf(lo1, hi2, rho) - bvn_cdf(hi1, lo2, rho)
        + bvn_cdf(lo1, lo2, rho);
    Ok(p.clamp(0.0, 1.0))
}

// Gauss–Legendre half-rules (negative nodes) with 3, 6 and 10 points.
const GL_X3: [f64; 3] = [-0.932_469_514_203_152_2, -0.661_209_386_466_264_7, -0.238_619_186_083_197];
const GL_W3: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL_X6: [f64; 6] = [
    -0.981_560_634_246_719_1,
    -0.904_117_256_370_475,
    -0.769_902_674_194_305,
    -0.587_317_954_286_617_1,
    -0.367_831_498_998_180_2,
    -0.125_233_408_511_469_2,
];
const GL_W6: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL_X10: [f64; 10] = [
    -0.993_128_599_185_094_9,
    -0.963_971_927_277_913_8,
    -0.912_234_428_251_325_9,
    -0.839_116_971_822_218_8,
    -0.746_331_906_460_150_8,
    -0.636_053_680_726_515,
    -0.510_867_001_950_827_1,
    -0.373_706_088_715_419_6,
    -0.227_785_851_141_645_1,
    -0.076_526_521_133_497_33,
];
const GL_W10: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];

fn gl_rule(abs_r: f64) -> (&'static [f64], &'static [f64]) {
    if abs_r < 0.3 {
        (&GL_X3, &GL_W3)
    } else if abs_r < 0.75 {
        (&GL_X6, &GL_W6)
    } else {
        (&GL_X10, &GL_W10)
    }
}

/// `P(Z1 > h, Z2 > k)` for finite `h`, `k`.
fn upper_orthant(h: f64, k: f64, r: f64) -> f64 {
    let (xs, ws) = gl_rule(r.abs());
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() < 0.925 {
        if r == 0.0 {
            return norm_cdf(-h) * norm_cdf(-k);
        }
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (&x, &w) in xs.iter().zip(ws) {
            let sn = (asr * (x + 1.0) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            let sn = (asr * (1.0 - x) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return bvn * asr / (2.0 * TWO_PI) + norm_cdf(-h) * norm_cdf(-k);
    }

    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let one_minus = (1.0 - r) * (1.0 + r);
    let mut a = one_minus.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    bvn = a
        * (-(bs / one_minus + hk) / 2.0).exp()
        * (1.0 - c * (bs - one_minus) * (1.0 - d * bs / 5.0) / 3.0
            + c * d * one_minus * one_minus / 5.0);
    if hk > -160.0 {
        let b = bs.sqrt();
        bvn -= (-hk / 2.0).exp()
            * TWO_PI.sqrt()
            * norm_cdf(-b / a)
            * b
            * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (&x, &w) in xs.iter().zip(ws) {
        for node in [x + 1.0, 1.0 - x] {
            let xs2 = (a * node) * (a * node);
            let rs = (1.0 - xs2).sqrt();
            bvn += a
                * w
                * (-(bs / xs2 + hk) / 2.0).exp()
                * ((-hk * xs2 / (2.0 * (1.0 + rs) * (1.0 + rs))).exp() / rs
                    - (1.0 + c * xs2 * (1.0 + d * xs2)));
        }
    }
    bvn = -bvn / TWO_PI;

    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else {
        -bvn + (norm_cdf(-h) - norm_cdf(-k)).max(0.0)
    }
}
