//! Optimal sample allocation and the bias test.

use crate::error::{Error, Result};

/// `N_ℓ = ⌈(2/ε²) √(V_ℓ/C_ℓ) Σ_k √(V_k C_k)⌉`, which minimizes the total cost
/// subject to `Σ V_ℓ/N_ℓ ≤ ε²/2`.
pub fn optimal_samples(levels: &[(f64, f64)], tolerance: f64) -> Result<Vec<u64>> {
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    for (l, (v, c)) in levels.iter().enumerate() {
        if !(*v >= 0.0 && v.is_finite()) || !(*c > 0.0 && c.is_finite()) {
            return Err(Error::Domain(format!("level {l}: need V >= 0 and C > 0, got V={v}, C={c}")));
        }
    }
    let sum: f64 = levels.iter().map(|(v, c)| (v * c).sqrt()).sum();
    let factor = 2.0 / (tolerance * tolerance);
    Ok(levels
        .iter()
        .map(|(v, c)| (factor * (v / c).sqrt() * sum).ceil() as u64)
        .collect())
}

/// `|E[P_L − P_{L−1}]| / (2^α − 1) ≤ ε/√2`.
pub fn bias_converged(mean_diff_finest: f64, alpha: f64, tolerance: f64) -> bool {
    bias_estimate(mean_diff_finest, alpha) <= tolerance / std::f64::consts::SQRT_2
}

pub fn bias_estimate(mean_diff_finest: f64, alpha: f64) -> f64 {
    mean_diff_finest.abs() / (2f64.powf(alpha) - 1.0)
}
