use std::time::Instant;

use log::debug;

use super::allocation::{bias_converged, bias_estimate, optimal_samples};
use super::{
    decay_rate, evaluate_range, normal_omega, CoupledSampler, EstimatorOptions, LevelPolicy, LevelStats, Method,
    MultilevelEstimate, Termination,
};
use crate::error::Result;

/// Plain Monte Carlo on level `level`, sized so that `V[P_L]/N ≤ ε²/2`
/// after a warm-up.
pub fn mc_estimate<S: CoupledSampler + ?Sized>(
    sampler: &S,
    level: usize,
    opts: &EstimatorOptions,
) -> Result<MultilevelEstimate> {
    run(sampler, opts, Some(level))
}

/// Multilevel Monte Carlo with optimal allocation and, under
/// [`LevelPolicy::Adaptive`], bias-driven level addition.
pub fn mlmc_run<S: CoupledSampler + ?Sized>(sampler: &S, opts: &EstimatorOptions) -> Result<MultilevelEstimate> {
    run(sampler, opts, None)
}

/// Level rates from the current statistics, floored at 0.5 so a noisy fit
/// cannot stall the bias test or the extrapolation.
pub(crate) fn current_rates(levels: &[LevelStats], opts: &EstimatorOptions, qmc: bool) -> (f64, f64) {
    let fine: Vec<&LevelStats> = levels.iter().filter(|l| l.level > 0 && l.n_samples > 0).collect();
    let alpha = decay_rate(&fine.iter().map(|l| (l.level, l.mean_diff())).collect::<Vec<_>>())
        .map_or(opts.alpha_fallback, |a| a.max(0.5));
    let beta = decay_rate(
        &fine
            .iter()
            .map(|l| (l.level, if qmc { l.estimator_variance() } else { l.var_diff() }))
            .collect::<Vec<_>>(),
    )
    .map_or(opts.beta_fallback, |b| b.max(0.5));
    (alpha, beta)
}

fn run<S: CoupledSampler + ?Sized>(sampler: &S, opts: &EstimatorOptions, single: Option<usize>) -> Result<MultilevelEstimate> {
    opts.validate()?;
    let start = Instant::now();
    let dim = sampler.dimension();
    let cap = opts.levels.cap(sampler.max_level());
    let mut levels: Vec<LevelStats> = match single {
        Some(l) => {
            if l > sampler.max_level() {
                return Err(crate::Error::Config(format!(
                    "level {l} exceeds the finest available level {}",
                    sampler.max_level()
                )));
            }
            vec![LevelStats::new(l, 1, sampler.cost(l, false))]
        }
        None => {
            let top = match opts.levels {
                LevelPolicy::Adaptive { .. } => (opts.initial_levels - 1).min(cap),
                LevelPolicy::Fixed(_) => cap,
            };
            (0..=top).map(|l| LevelStats::new(l, 1, sampler.cost(l, l > 0))).collect()
        }
    };
    let coupled = single.is_none();
    let mut targets: Vec<u64> = vec![opts.warmup; levels.len()];
    let mut evaluations = 0u64;

    let termination = 'outer: loop {
        for (stats, target) in levels.iter_mut().zip(&targets) {
            while stats.n_samples < *target {
                if opts.budget.exhausted(evaluations) {
                    break 'outer Termination::Budget;
                }
                let mut end = (stats.n_samples + opts.chunk).min(*target);
                if let Some(m) = opts.budget.max_evaluations {
                    end = end.min(stats.n_samples + (m - evaluations));
                }
                let level = stats.level;
                evaluate_range(sampler, stats, coupled && level > 0, 0, stats.n_samples..end, |i| {
                    normal_omega(opts.seed, level, i, dim)
                })?;
                evaluations += end - stats.n_samples;
                stats.n_samples = end;
            }
        }

        let vc: Vec<(f64, f64)> = levels.iter().map(|l| (l.var_diff(), l.cost_per_sample)).collect();
        let n_opt = optimal_samples(&vc, opts.tolerance)?;
        let mut grow = false;
        for ((t, n), stats) in targets.iter_mut().zip(&n_opt).zip(&levels) {
            let want = (*n).max(opts.min_samples);
            if want > stats.n_samples {
                *t = want;
                grow = true;
            }
        }
        if grow {
            debug!("mlmc: extending to {targets:?}");
            continue;
        }

        if single.is_some() || matches!(opts.levels, LevelPolicy::Fixed(_)) {
            break Termination::Converged;
        }
        let (alpha, beta) = current_rates(&levels, opts, false);
        let finest = levels.last().unwrap();
        if bias_converged(finest.mean_diff(), alpha, opts.tolerance) {
            break Termination::Converged;
        }
        if finest.level >= cap {
            break Termination::LevelCap;
        }
        let next = finest.level + 1;
        let v_next = finest.var_diff() * 2f64.powf(-beta);
        debug!("mlmc: adding level {next} (alpha {alpha:.3}, beta {beta:.3}, V extrapolated {v_next:e})");
        levels.push(LevelStats::new(next, 1, sampler.cost(next, true)));
        let mut vc: Vec<(f64, f64)> = levels.iter().map(|l| (l.var_diff(), l.cost_per_sample)).collect();
        vc.last_mut().unwrap().0 = v_next;
        let n_opt = optimal_samples(&vc, opts.tolerance)?;
        targets = n_opt
            .iter()
            .zip(&levels)
            .map(|(n, l)| (*n).max(opts.min_samples).max(l.n_samples))
            .collect();
    };

    let (alpha, beta) = current_rates(&levels, opts, false);
    Ok(finish(
        if single.is_some() { Method::Mc } else { Method::Mlmc },
        levels,
        opts,
        termination,
        alpha,
        beta,
        single.is_none() && matches!(opts.levels, LevelPolicy::Adaptive { .. }),
        start,
    ))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish(
    method: Method,
    levels: Vec<LevelStats>,
    opts: &EstimatorOptions,
    termination: Termination,
    alpha: f64,
    beta: f64,
    bias_test: bool,
    start: Instant,
) -> MultilevelEstimate {
    // A budget stop can leave levels without samples; they carry no estimate.
    let levels: Vec<LevelStats> = levels.into_iter().filter(|l| l.n_samples > 0).collect();
    let value = levels.iter().map(|l| l.mean_diff()).sum();
    let variance = levels.iter().map(|l| l.estimator_variance()).sum();
    let levels_used = levels.last().map_or(0, |l| l.level);
    let bias = if bias_test {
        levels.last().map(|l| bias_estimate(l.mean_diff(), alpha))
    } else {
        None
    };
    MultilevelEstimate {
        method,
        value,
        variance_of_estimator: variance,
        bias_estimate: bias,
        levels_used,
        per_level: levels,
        tolerance: opts.tolerance,
        termination,
        alpha,
        beta,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}
