//! Gamma and standard-normal machinery for the random Young's modulus.
//!
//! The regularized incomplete gamma function and `erfc` come from `statrs`
//! and are evaluated in `f64`; everything else is generic over [`Real`].

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest tail probability fed to an inverse CDF by the memoryless transform.
pub const TAIL_CLAMP: f64 = 1e-16;

const NEWTON_MAX_ITER: usize = 100;
const BISECTION_MAX_ITER: usize = 400;

/// Shape/scale parametrization of the gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GammaParams<T> {
    /// Shape α (dimensionless).
    pub shape: T,
    /// Scale β (same unit as the variable, Pa for the Young's modulus).
    pub scale: T,
}

impl<T: Real> GammaParams<T> {
    pub fn new(shape: T, scale: T) -> Result<Self> {
        if !(shape > T::zero() && shape.is_finite()) {
            return Err(Error::Domain(format!("gamma shape must be positive, got {shape}")));
        }
        if !(scale > T::zero() && scale.is_finite()) {
            return Err(Error::Domain(format!("gamma scale must be positive, got {scale}")));
        }
        Ok(Self { shape, scale })
    }

    /// Matches a given mean and standard deviation.
    pub fn from_moments(mean: T, std_dev: T) -> Result<Self> {
        let cv = std_dev / mean;
        let shape = T::one() / (cv * cv);
        Self::new(shape, mean / shape)
    }

    pub fn mean(&self) -> T {
        self.shape * self.scale
    }

    pub fn variance(&self) -> T {
        self.shape * self.scale * self.scale
    }

    pub fn std_dev(&self) -> T {
        self.variance().sqrt()
    }

    pub fn median(&self) -> T {
        gamma_inv_cdf(T::lit(0.5), self).expect("0.5 lies in (0, 1)")
    }

    fn as_f64(&self) -> (f64, f64) {
        (self.shape.as_f64(), self.scale.as_f64())
    }
}

fn ensure_finite<T: Real>(x: T, what: &str) -> Result<f64> {
    let v = x.as_f64();
    if v.is_nan() || v.is_infinite() {
        return Err(Error::Domain(format!("{what} must be finite, got {v}")));
    }
    Ok(v)
}

fn ensure_unit_open<T: Real>(u: T) -> Result<f64> {
    let v = u.as_f64();
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {v}")));
    }
    Ok(v)
}

fn std_gamma_ln_pdf(shape: f64, t: f64) -> f64 {
    (shape - 1.0) * t.ln() - t - ln_gamma(shape)
}

/// Gamma density `x^(α−1) exp(−x/β) / (β^α Γ(α))`; zero for `x < 0`.
pub fn gamma_pdf<T: Real>(x: T, p: &GammaParams<T>) -> Result<T> {
    let x = ensure_finite(x, "x")?;
    let (a, b) = p.as_f64();
    let v = if x < 0.0 {
        0.0
    } else if x == 0.0 {
        match a.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => 1.0 / b,
            _ => 0.0,
        }
    } else {
        (std_gamma_ln_pdf(a, x / b) - b.ln()).exp()
    };
    Ok(T::lit(v))
}

fn std_gamma_p(shape: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t.is_infinite() {
        1.0
    } else {
        gamma_lr(shape, t)
    }
}

fn std_gamma_q(shape: f64, t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t.is_infinite() {
        0.0
    } else {
        gamma_ur(shape, t)
    }
}

/// Gamma cumulative distribution function.
pub fn gamma_cdf<T: Real>(x: T, p: &GammaParams<T>) -> Result<T> {
    let xv = x.as_f64();
    if xv.is_nan() {
        return Err(Error::Domain("x must not be NaN".into()));
    }
    let (a, b) = p.as_f64();
    Ok(T::lit(std_gamma_p(a, xv / b)))
}

/// Inverse of [`gamma_cdf`].
pub fn gamma_inv_cdf<T: Real>(u: T, p: &GammaParams<T>) -> Result<T> {
    let u = ensure_unit_open(u)?;
    let (a, b) = p.as_f64();
    Ok(T::lit(b * std_gamma_quantile(a, u, 1.0 - u)))
}

/// Quantile of the standard gamma distribution given both the lower
/// probability `lower` and its complement `upper` (the smaller of the two
/// drives the iteration, so tails keep full relative precision).
fn std_gamma_quantile(shape: f64, lower: f64, upper: f64) -> f64 {
    let use_upper = upper < lower;
    let target = if use_upper { upper } else { lower };
    // Residual of the tail that is being matched, increasing in t.
    let residual = |t: f64| {
        if use_upper {
            target - std_gamma_q(shape, t)
        } else {
            std_gamma_p(shape, t) - target
        }
    };

    let mut t = wilson_hilferty_start(shape, lower, upper);

    // Bracket for safeguarding; widened geometrically if needed.
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;

    for _ in 0..NEWTON_MAX_ITER {
        let r = residual(t);
        if r == 0.0 {
            return t;
        }
        if r < 0.0 {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
        let dens = std_gamma_ln_pdf(shape, t).exp();
        let mut next = if dens > 0.0 && dens.is_finite() { t - r / dens } else { f64::NAN };
        if !(next > lo && next < hi) || next.is_nan() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { (2.0 * t).max(lo * 2.0 + 1e-300) };
        }
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs() {
            return next;
        }
        t = next;
    }

    bisect_quantile(residual, lo, hi, t)
}

fn bisect_quantile(residual: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, guess: f64) -> f64 {
    if !hi.is_finite() {
        hi = guess.max(1.0);
        while residual(hi) < 0.0 {
            hi *= 2.0;
        }
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn wilson_hilferty_start(shape: f64, lower: f64, upper: f64) -> f64 {
    let z = if lower <= upper {
        normal_quantile_f64(lower)
    } else {
        -normal_quantile_f64(upper)
    };
    let c = 1.0 / (9.0 * shape);
    let wh = shape * (1.0 - c + z * c.sqrt()).powi(3);
    if wh > 0.0 && lower > 0.05 {
        wh
    } else {
        // Small-t expansion P(a, t) ≈ t^a / Γ(a + 1).
        let small = ((lower.ln() + ln_gamma(shape + 1.0)) / shape).exp();
        if wh > 0.0 {
            wh.max(small)
        } else {
            small
        }
    }
}

/// Standard normal CDF `Φ`.
pub fn normal_cdf<T: Real>(y: T) -> T {
    T::lit(normal_cdf_f64(y.as_f64()))
}

pub(crate) fn normal_cdf_f64(y: f64) -> f64 {
    0.5 * erfc(-y / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`].
pub fn normal_inv_cdf<T: Real>(u: T) -> Result<T> {
    let u = ensure_unit_open(u)?;
    Ok(T::lit(normal_quantile_f64(u)))
}

// Acklam's rational approximation.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

/// Rational approximation (relative error ≈ 1e-9) refined by one Halley
/// step against `erfc`, giving close to full `f64` accuracy.
pub(crate) fn normal_quantile_f64(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    const P_LOW: f64 = 0.024_25;
    let (a, b, c, d) = (&ACKLAM_A, &ACKLAM_B, &ACKLAM_C, &ACKLAM_D);
    let x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    };
    // Halley refinement; the residual is taken on the smaller tail.
    let e = if x <= 0.0 {
        normal_cdf_f64(x) - u
    } else {
        (1.0 - u) - normal_cdf_f64(-x)
    };
    let g = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - g / (1.0 + 0.5 * x * g)
}

/// Memoryless map `g(y) = F⁻¹(Φ(y))` from a standard normal value to the
/// gamma marginal. Tail probabilities are clamped to [`TAIL_CLAMP`].
pub fn memoryless_transform<T: Real>(y: T, p: &GammaParams<T>) -> Result<T> {
    let y = ensure_finite(y, "y")?;
    let (a, b) = p.as_f64();
    // Evaluate the smaller tail directly so that large |y| keeps precision.
    let lower_tail = normal_cdf_f64(-y.abs()).max(TAIL_CLAMP);
    let (lower, upper) = if y <= 0.0 {
        (lower_tail, 1.0 - lower_tail)
    } else {
        (1.0 - lower_tail, lower_tail)
    };
    Ok(T::lit(b * std_gamma_quantile(a, lower, upper)))
}
