//! Monte Carlo, multilevel Monte Carlo and multilevel quasi-Monte Carlo
//! estimators over a level-coupled sampler.

pub mod allocation;
pub mod lattice;
mod mlmc;
mod mlqmc;
pub mod rates;

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use allocation::{bias_converged, optimal_samples};
pub use lattice::{lattice_point, LatticeRule, ShiftSet};
pub use mlmc::{mc_estimate, mlmc_run};
pub use mlqmc::{mlqmc_run, next_qmc_size};
pub use rates::{estimate_rates, resonance_screen, RateEstimate, Regime, ScreenDecision};

/// A hierarchy of models evaluated on a shared random input ω.
///
/// `ω` is a vector of `dimension()` standard-normal coordinates; the fine and
/// coarse model of a pair must see the same `ω`.
pub trait CoupledSampler: Sync {
    fn dimension(&self) -> usize;

    /// Finest level available.
    fn max_level(&self) -> usize;

    /// Model cost of one sample at `level`; `coupled` includes the coarse
    /// solve of the pair.
    fn cost(&self, level: usize, coupled: bool) -> f64;

    /// `(P_ℓ(ω), P_{ℓ−1}(ω))`. The coarse value is 0 at level 0 or when
    /// `coupled` is false.
    fn sample(&self, level: usize, omega: &[f64], coupled: bool) -> Result<(f64, f64)>;
}

/// Counter-based generator for the sample keyed by
/// `(seed, level, index, shift)`.
pub fn sample_rng(seed: u64, level: usize, index: u64, shift: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&splitmix(seed).to_le_bytes());
    key[8..16].copy_from_slice(&(level as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(&shift.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Standard-normal input of one Monte Carlo sample.
pub fn normal_omega(seed: u64, level: usize, index: u64, dimension: usize) -> Vec<f64> {
    let mut rng = sample_rng(seed, level, index, 0);
    (0..dimension).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Streaming mean and second central moment (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Unbiased sample variance (0 with fewer than two values).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

/// Running statistics of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    /// Samples per shift (plain MC: total samples).
    pub n_samples: u64,
    /// Pooled moments of `ΔP = P_ℓ − P_{ℓ−1}`.
    pub diff: Moments,
    /// Pooled moments of `P_ℓ`.
    pub fine: Moments,
    /// Per-shift moments of `ΔP` (one entry for plain MC).
    pub shift_diff: Vec<Moments>,
    /// Model cost per sample `C_ℓ`.
    pub cost_per_sample: f64,
    /// Accumulated wall time spent sampling this level (s).
    pub seconds: f64,
}

impl LevelStats {
    fn new(level: usize, shifts: usize, cost_per_sample: f64) -> Self {
        Self {
            level,
            n_samples: 0,
            diff: Moments::default(),
            fine: Moments::default(),
            shift_diff: vec![Moments::default(); shifts],
            cost_per_sample,
            seconds: 0.0,
        }
    }

    pub fn shifts(&self) -> usize {
        self.shift_diff.len()
    }

    /// Estimate of `E[ΔP]`.
    pub fn mean_diff(&self) -> f64 {
        if self.shifts() == 1 {
            self.diff.mean
        } else {
            self.shift_diff.iter().map(|m| m.mean).sum::<f64>() / self.shifts() as f64
        }
    }

    /// `V_ℓ`, the pooled variance of `ΔP`.
    pub fn var_diff(&self) -> f64 {
        self.diff.variance()
    }

    /// `V[P_ℓ]`.
    pub fn var_fine(&self) -> f64 {
        self.fine.variance()
    }

    /// Variance of this level's contribution to the estimator: `V_ℓ/N_ℓ`
    /// for MC, the spread over shifts `Σ(Q_i − Q̄)²/(R(R−1))` for QMC.
    pub fn estimator_variance(&self) -> f64 {
        let r = self.shifts();
        if r == 1 {
            if self.n_samples == 0 {
                f64::INFINITY
            } else {
                self.var_diff() / self.n_samples as f64
            }
        } else {
            let q = self.mean_diff();
            self.shift_diff.iter().map(|m| (m.mean - q).powi(2)).sum::<f64>() / (r * (r - 1)) as f64
        }
    }

    /// Total number of model evaluations, all shifts.
    pub fn evaluations(&self) -> u64 {
        self.n_samples * self.shifts() as u64
    }

    /// Mean wall time per evaluation (s).
    pub fn seconds_per_sample(&self) -> f64 {
        if self.evaluations() == 0 {
            0.0
        } else {
            self.seconds / self.evaluations() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Mlmc,
    Mlqmc,
}

/// How an estimator run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    /// Variance target met but the bias test still fails at the level cap.
    LevelCap,
    /// Time or sample budget exhausted; results are partial.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilevelEstimate {
    pub method: Method,
    pub value: f64,
    pub variance_of_estimator: f64,
    /// `|E[ΔP_L]|/(2^α − 1)`, `None` when no bias test applies.
    pub bias_estimate: Option<f64>,
    /// Finest level used.
    pub levels_used: usize,
    pub per_level: Vec<LevelStats>,
    pub tolerance: f64,
    pub termination: Termination,
    /// α and β used by the level logic (regression or fallback).
    pub alpha: f64,
    pub beta: f64,
    pub wall_seconds: f64,
}

impl MultilevelEstimate {
    /// `Σ N_ℓ C_ℓ` over all evaluations.
    pub fn total_cost(&self) -> f64 {
        self.per_level
            .iter()
            .map(|l| l.evaluations() as f64 * l.cost_per_sample)
            .sum()
    }

    pub fn mse_bound(&self) -> f64 {
        self.variance_of_estimator + self.bias_estimate.unwrap_or(0.0).powi(2)
    }

    /// Per-level CSV: level, N_ℓ (per shift), shifts, E[ΔP], V[ΔP], V[P],
    /// C_ℓ, estimator variance, mean seconds per evaluation.
    pub fn write_levels_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "level",
            "n_samples",
            "shifts",
            "mean_diff",
            "var_diff",
            "var_fine",
            "cost",
            "estimator_variance",
            "seconds_per_sample",
        ])?;
        for l in &self.per_level {
            w.write_record([
                l.level.to_string(),
                l.n_samples.to_string(),
                l.shifts().to_string(),
                format!("{:e}", l.mean_diff()),
                format!("{:e}", l.var_diff()),
                format!("{:e}", l.var_fine()),
                format!("{:e}", l.cost_per_sample),
                format!("{:e}", l.estimator_variance()),
                format!("{:e}", l.seconds_per_sample()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which levels a run may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "level")]
pub enum LevelPolicy {
    /// Start on levels 0..=2 and add levels until the bias test passes.
    Adaptive { max_level: usize },
    /// Levels 0..=L, no bias test.
    Fixed(usize),
}

impl LevelPolicy {
    fn cap(&self, sampler_max: usize) -> usize {
        match *self {
            Self::Adaptive { max_level } => max_level.min(sampler_max),
            Self::Fixed(l) => l.min(sampler_max),
        }
    }
}

/// Stopping limits besides the tolerance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Budget {
    pub deadline: Option<Instant>,
    /// Cap on the total number of model evaluations.
    pub max_evaluations: Option<u64>,
}

impl Budget {
    fn exhausted(&self, evaluations: u64) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d) || self.max_evaluations.is_some_and(|m| evaluations >= m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// RMSE target ε.
    pub tolerance: f64,
    pub seed: u64,
    pub levels: LevelPolicy,
    /// Warm-up samples per level (MC, MLMC).
    pub warmup: u64,
    /// Levels present from the start under the adaptive policy.
    pub initial_levels: usize,
    /// Floor on N_ℓ.
    pub min_samples: u64,
    /// Random shifts (MLQMC).
    pub shifts: usize,
    /// Initial points per shift (MLQMC).
    pub qmc_initial: u64,
    /// α, β when too few levels exist to regress them.
    pub alpha_fallback: f64,
    pub beta_fallback: f64,
    pub budget: Budget,
    /// Samples evaluated between budget checks.
    pub chunk: u64,
}

impl EstimatorOptions {
    pub fn new(tolerance: f64, seed: u64, levels: LevelPolicy) -> Self {
        Self {
            tolerance,
            seed,
            levels,
            warmup: 40,
            initial_levels: 3,
            min_samples: 2,
            shifts: 10,
            qmc_initial: 2,
            alpha_fallback: 2.0,
            beta_fallback: 4.0,
            budget: Budget::default(),
            chunk: 4096,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            errs.push(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.warmup < 2 || self.min_samples < 2 {
            errs.push("warm-up and minimum sample counts must be at least 2".into());
        }
        if self.shifts < 2 {
            errs.push(format!("at least 2 random shifts are needed, got {}", self.shifts));
        }
        if self.qmc_initial < 1 || self.chunk == 0 || self.initial_levels == 0 {
            errs.push("initial QMC size, chunk size and initial level count must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Validation(errs))
        }
    }
}

/// Evaluates samples `range` of one level in parallel and merges them in
/// index order, so the result does not depend on the worker count.
fn evaluate_range<S, F>(
    sampler: &S,
    stats: &mut LevelStats,
    coupled: bool,
    shift: usize,
    range: std::ops::Range<u64>,
    omega: F,
) -> Result<()>
where
    S: CoupledSampler + ?Sized,
    F: Fn(u64) -> Vec<f64> + Sync,
{
    let level = stats.level;
    let results: Vec<Result<(f64, f64, f64)>> = range
        .into_par_iter()
        .map(|i| {
            let t = Instant::now();
            let w = omega(i);
            let (f, c) = sampler.sample(level, &w, coupled)?;
            Ok((f, c, t.elapsed().as_secs_f64()))
        })
        .collect();
    for r in results {
        let (f, c, dt) = r?;
        let d = f - c;
        stats.diff.push(d);
        stats.fine.push(f);
        stats.shift_diff[shift].push(d);
        stats.seconds += dt;
    }
    Ok(())
}

/// Log₂-regression slope of `|y_ℓ|` against `ℓ`, negated; `None` with fewer
/// than two usable points.
pub fn decay_rate(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| y.abs() > 0.0 && y.is_finite())
        .map(|(l, y)| (*l as f64, y.abs().log2()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-sxy / sxx)
}
