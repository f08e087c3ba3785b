use std::time::Instant;

use log::debug;

use super::allocation::bias_converged;
use super::lattice::{lattice_point, LatticeRule, ShiftSet};
use super::mlmc::{current_rates, finish};
use super::{
    evaluate_range, sample_rng, CoupledSampler, EstimatorOptions, LevelPolicy, LevelStats, Method, MultilevelEstimate,
    Termination,
};
use crate::distributions::normal_inv_cdf;
use crate::error::{Error, Result};

/// Shift-generator index reserved outside the sample index range.
const SHIFT_STREAM: u64 = u64::MAX;

/// `⌈1.2 N⌉` in exact integer arithmetic.
pub fn next_qmc_size(n: u64) -> u64 {
    (6 * n).div_ceil(5)
}

/// Multilevel randomly shifted lattice rule. The level with the largest
/// `V_ℓ/C_ℓ` grows by a factor 1.2 until the shift variance is below `ε²/2`.
pub fn mlqmc_run<S: CoupledSampler + ?Sized>(
    sampler: &S,
    rule: &LatticeRule,
    opts: &EstimatorOptions,
) -> Result<MultilevelEstimate> {
    opts.validate()?;
    let start = Instant::now();
    let dim = sampler.dimension();
    if rule.dimension() < dim {
        return Err(Error::Config(format!(
            "lattice rule has {} coordinates, the sampler needs {dim}",
            rule.dimension()
        )));
    }
    let cap = opts.levels.cap(sampler.max_level());
    let top = match opts.levels {
        LevelPolicy::Adaptive { .. } => (opts.initial_levels - 1).min(cap),
        LevelPolicy::Fixed(_) => cap,
    };
    let r = opts.shifts;
    let shift_set = |level: usize| -> Result<ShiftSet> {
        ShiftSet::random(r, dim, &mut sample_rng(opts.seed, level, SHIFT_STREAM, 0))
    };
    let mut levels: Vec<LevelStats> = (0..=top)
        .map(|l| LevelStats::new(l, r, sampler.cost(l, l > 0)))
        .collect();
    let mut shifts: Vec<ShiftSet> = (0..=top).map(shift_set).collect::<Result<_>>()?;
    let mut targets = vec![opts.qmc_initial; levels.len()];
    let mut evaluations = 0u64;
    let half_eps2 = opts.tolerance * opts.tolerance / 2.0;

    let termination = 'outer: loop {
        for ((stats, target), set) in levels.iter_mut().zip(&targets).zip(&shifts) {
            if stats.n_samples >= *target {
                continue;
            }
            let range = stats.n_samples..*target;
            if opts.budget.exhausted(evaluations)
                || opts
                    .budget
                    .max_evaluations
                    .is_some_and(|m| evaluations + (range.end - range.start) * r as u64 > m)
            {
                break 'outer Termination::Budget;
            }
            let level = stats.level;
            for i in 0..r {
                let shift = set.shift(i);
                evaluate_range(sampler, stats, level > 0, i, range.clone(), |n| {
                    lattice_point(rule, n, shift)[..dim]
                        .iter()
                        .map(|x| normal_inv_cdf(x.clamp(f64::EPSILON / 2.0, 1.0 - f64::EPSILON / 2.0)).unwrap_or(0.0))
                        .collect()
                })?;
            }
            evaluations += (range.end - range.start) * r as u64;
            stats.n_samples = *target;
        }

        let total: f64 = levels.iter().map(|l| l.estimator_variance()).sum();
        if total > half_eps2 {
            let mut best = (f64::NEG_INFINITY, 0);
            for (k, l) in levels.iter().enumerate() {
                let ratio = l.estimator_variance() / l.cost_per_sample;
                if ratio > best.0 {
                    best = (ratio, k);
                }
            }
            targets[best.1] = next_qmc_size(levels[best.1].n_samples);
            debug!("mlqmc: level {} grows to {} per shift", levels[best.1].level, targets[best.1]);
            continue;
        }

        if matches!(opts.levels, LevelPolicy::Fixed(_)) {
            break Termination::Converged;
        }
        let (alpha, _) = current_rates(&levels, opts, true);
        let finest = levels.last().unwrap();
        if bias_converged(finest.mean_diff(), alpha, opts.tolerance) {
            break Termination::Converged;
        }
        if finest.level >= cap {
            break Termination::LevelCap;
        }
        let next = finest.level + 1;
        debug!("mlqmc: adding level {next}");
        levels.push(LevelStats::new(next, r, sampler.cost(next, true)));
        shifts.push(shift_set(next)?);
        targets.push(opts.qmc_initial);
    };

    let (alpha, beta) = current_rates(&levels, opts, true);
    Ok(finish(
        Method::Mlqmc,
        levels,
        opts,
        termination,
        alpha,
        beta,
        matches!(opts.levels, LevelPolicy::Adaptive { .. }),
        start,
    ))
}
