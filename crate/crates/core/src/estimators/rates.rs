//! Level rates α, β, γ, the cost regime they imply, and the resonance screen.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{decay_rate, LevelStats};
use crate::error::{Error, Result};

/// `δβ − γ` within this band of zero counts as the balanced regime.
pub const REGIME_TIE: f64 = 0.05;

/// Default resonance screening threshold.
pub const RESONANCE_THRESHOLD: f64 = 2.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Cost `ε^{−2δ}`: variance decays faster than cost grows.
    VarianceDominated,
    /// Cost `ε^{−2δ} log`.
    Balanced,
    /// Cost `ε^{−2δ−(γ−δβ)/α}`: the finest level dominates.
    CostDominated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub regime: Regime,
}

impl RateEstimate {
    pub fn classify(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        let gap = delta * beta - gamma;
        let regime = if gap.abs() <= REGIME_TIE {
            Regime::Balanced
        } else if gap > 0.0 {
            Regime::VarianceDominated
        } else {
            Regime::CostDominated
        };
        Self {
            alpha,
            beta,
            gamma,
            delta,
            regime,
        }
    }

    /// Predicted exponent `e` in `cost ∝ ε^{−e}` (log factors dropped).
    pub fn cost_exponent(&self) -> f64 {
        match self.regime {
            Regime::VarianceDominated | Regime::Balanced => 2.0 * self.delta,
            Regime::CostDominated => 2.0 * self.delta + (self.gamma - self.delta * self.beta) / self.alpha,
        }
    }

    pub fn regime_label(&self) -> String {
        match self.regime {
            Regime::VarianceDominated => format!("eps^-{:.3}", 2.0 * self.delta),
            Regime::Balanced => format!("eps^-{:.3} log", 2.0 * self.delta),
            Regime::CostDominated => format!("eps^-{:.3}", self.cost_exponent()),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "beta", "gamma", "delta", "regime", "cost_exponent"])?;
        w.write_record([
            format!("{}", self.alpha),
            format!("{}", self.beta),
            format!("{}", self.gamma),
            format!("{}", self.delta),
            self.regime_label(),
            format!("{}", self.cost_exponent()),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Regression rates from per-level statistics: α from `|E[ΔP_ℓ]|`, β from
/// `V[ΔP_ℓ]` (levels ≥ 1), γ from the growth of `C_ℓ` over all levels.
/// `delta` is 1 for MC sampling and smaller for QMC.
pub fn estimate_rates(levels: &[LevelStats], delta: f64) -> Result<RateEstimate> {
    let fine: Vec<&LevelStats> = levels.iter().filter(|l| l.level > 0).collect();
    let alpha = decay_rate(&fine.iter().map(|l| (l.level, l.mean_diff())).collect::<Vec<_>>());
    let beta = decay_rate(&fine.iter().map(|l| (l.level, l.var_diff())).collect::<Vec<_>>());
    let gamma = decay_rate(&levels.iter().map(|l| (l.level, 1.0 / l.cost_per_sample)).collect::<Vec<_>>());
    match (alpha, beta, gamma) {
        (Some(a), Some(b), Some(g)) => Ok(RateEstimate::classify(a, b, g, delta)),
        _ => Err(Error::Domain(
            "rate estimation needs at least two refined levels with nonzero statistics".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenDecision {
    Keep,
    DiscardCoarsest,
}

/// Keeps the hierarchy when `log₂(V[P₁]/V[P₁ − P₀]) > threshold`.
pub fn resonance_screen(var_fine_1: f64, var_diff_1: f64, threshold: f64) -> ScreenDecision {
    let ratio = (var_fine_1 / var_diff_1).log2();
    if ratio > threshold {
        ScreenDecision::Keep
    } else {
        ScreenDecision::DiscardCoarsest
    }
}

#[cfg(test)]
mod tests {
    use super::super::Moments;
    use super::*;

    fn synthetic(l: usize, mean: f64, var: f64, cost: f64) -> LevelStats {
        let mut s = LevelStats::new(l, 1, cost);
        // Two points with the requested mean and variance.
        let h = (var / 2.0).sqrt();
        s.diff = Moments::default();
        s.diff.push(mean - h);
        s.diff.push(mean + h);
        s.n_samples = 2;
        s
    }

    #[test]
    fn geometric_rates_recovered() {
        let lv: Vec<LevelStats> = (0..5)
            .map(|l| {
                let f = 2f64.powi(-(l as i32));
                synthetic(l, f * f, f.powi(4), 4f64.powi(l as i32))
            })
            .collect();
        let r = estimate_rates(&lv, 1.0).unwrap();
        assert!((r.alpha - 2.0).abs() < 1e-9);
        assert!((r.beta - 4.0).abs() < 1e-9);
        assert!((r.gamma - 2.0).abs() < 1e-9);
        assert_eq!(r.regime, Regime::VarianceDominated);
        assert_eq!(r.cost_exponent(), 2.0);
    }

    #[test]
    fn regimes() {
        assert_eq!(RateEstimate::classify(2.0, 2.0, 2.0, 1.0).regime, Regime::Balanced);
        let c = RateEstimate::classify(2.0, 1.0, 3.0, 1.0);
        assert_eq!(c.regime, Regime::CostDominated);
        assert!((c.cost_exponent() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn screen_examples() {
        assert_eq!(resonance_screen(1.0, 0.1, 2.3), ScreenDecision::Keep);
        assert_eq!(resonance_screen(1.0, 0.25, 2.3), ScreenDecision::DiscardCoarsest);
        let v = 2f64.powf(-2.3);
        assert_eq!((1.0 / v).log2(), 2.3);
        assert_eq!(resonance_screen(1.0, v, 2.3), ScreenDecision::DiscardCoarsest);
    }

    #[test]
    fn too_few_levels() {
        assert!(estimate_rates(&[synthetic(0, 1.0, 1.0, 1.0)], 1.0).is_err());
    }
}
