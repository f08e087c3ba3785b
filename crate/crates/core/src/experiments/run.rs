//! Scenario orchestration: estimator dispatch, frequency sweeps, bands.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::bands::Bands;
use super::config::{Case, EstimatorKind, QoiRule, ScenarioConfig, Uncertainty};
use super::report::{PointResult, RunReport, ScreenRecord};
use super::sampler::{default_point, max_response_point, max_variance_point, BeamModel, BeamSampler, Observable};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_rates, mc_estimate, mlmc_run, mlqmc_run, normal_omega, resonance_screen, Budget, CoupledSampler,
    EstimatorOptions, LatticeRule, LevelPolicy, Moments, MultilevelEstimate, ScreenDecision,
};

/// Seed offsets that keep pilot and band samples apart from estimator samples.
const PILOT_STREAM: u64 = 0x7069_6c6f_7400_0000;
const BAND_STREAM: u64 = 0x6261_6e64_0000_0000;
const QOI_STREAM: u64 = 0x716f_6900_0000_0000;

/// Samples used to rank nodes for the max-variance QoI.
pub const QOI_SCAN_SAMPLES: u64 = 40;

/// Limits applied to a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub budget: Budget,
}

/// Runs one scenario: the estimator (per frequency for dynamic cases),
/// the level rates and the uncertainty bands.
pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let model = BeamModel::new(config)?;
    let rule = lattice_rule(config, model.dimension())?;
    let results = match config.case {
        Case::DynamicElastic => sweep(&model, rule.as_ref(), opts),
        _ => vec![static_point(&model, rule.as_ref(), opts)?],
    };
    let out_of_time = opts.budget.deadline.is_some_and(|d| Instant::now() >= d);
    let bands = if config.sampling.band_samples == 0 {
        None
    } else if out_of_time {
        warn!("budget exhausted, skipping uncertainty bands");
        None
    } else {
        Some(bands(&model, &results)?)
    };
    Ok(RunReport::new(
        config.clone(),
        model.kl_modes(),
        results,
        bands,
        start.elapsed().as_secs_f64(),
    ))
}

/// Independent estimates on the configured frequency grid. Failures at
/// one frequency are recorded and the sweep continues.
pub fn frequency_sweep(config: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<PointResult>> {
    if config.case != Case::DynamicElastic {
        return Err(Error::Config("frequency sweeps need the dynamic_elastic case".into()));
    }
    let model = BeamModel::new(config)?;
    let rule = lattice_rule(config, model.dimension())?;
    Ok(sweep(&model, rule.as_ref(), opts))
}

fn lattice_rule(config: &ScenarioConfig, dim: usize) -> Result<Option<LatticeRule>> {
    if config.estimator != EstimatorKind::Mlqmc {
        return Ok(None);
    }
    Ok(Some(match &config.sampling.lattice {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            LatticeRule::from_text(&text, dim)?
        }
        None => LatticeRule::default_for(dim)?,
    }))
}

fn static_point(model: &BeamModel, rule: Option<&LatticeRule>, opts: &RunOptions) -> Result<PointResult> {
    let c = &model.config;
    let point = match c.qoi {
        QoiRule::MidTop => default_point(model)?,
        QoiRule::MaxVariance => max_variance_point(model, c.seed ^ QOI_STREAM, QOI_SCAN_SAMPLES)?,
    };
    let observable = match c.case {
        Case::StaticElastoplastic => Observable::LoadPath { point },
        _ => Observable::Static { point },
    };
    let sampler = BeamSampler::new(model, observable, 0)?;
    let estimate = estimate(&sampler, c, rule, opts)?;
    Ok(point_result(None, point, 0, Vec::new(), estimate, c))
}

fn point_result(
    frequency: Option<f64>,
    point: [f64; 2],
    offset: usize,
    screen: Vec<ScreenRecord>,
    estimate: MultilevelEstimate,
    config: &ScenarioConfig,
) -> PointResult {
    let delta = if estimate.method == crate::estimators::Method::Mlqmc {
        config.sampling.qmc_delta
    } else {
        1.0
    };
    let rates = estimate_rates(&estimate.per_level, delta).ok();
    PointResult {
        frequency,
        qoi_point: point,
        level_offset: offset,
        screen,
        estimate: Some(estimate),
        rates,
        error: None,
    }
}

fn sweep(model: &BeamModel, rule: Option<&LatticeRule>, opts: &RunOptions) -> Vec<PointResult> {
    let c = &model.config;
    c.dynamic
        .grid()
        .into_iter()
        .map(|f| {
            info!("frequency {f} Hz");
            let result = if opts.budget.deadline.is_some_and(|d| Instant::now() >= d) {
                Err(Error::Budget {
                    samples: 0,
                    variance: f64::INFINITY,
                })
            } else {
                frequency_point(model, rule, opts, f)
            };
            result.unwrap_or_else(|e| {
                warn!("frequency {f} Hz failed: {e}");
                PointResult {
                    frequency: Some(f),
                    qoi_point: [0.0; 2],
                    level_offset: 0,
                    screen: Vec::new(),
                    estimate: None,
                    rates: None,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect()
}

fn frequency_point(model: &BeamModel, rule: Option<&LatticeRule>, opts: &RunOptions, frequency: f64) -> Result<PointResult> {
    let c = &model.config;
    let point = max_response_point(model, frequency)?;
    let observable = Observable::Harmonic { point, frequency };
    let screened = c.uncertainty == Uncertainty::Heterogeneous
        && matches!(c.estimator, EstimatorKind::Mlmc | EstimatorKind::Mlqmc)
        && c.max_level >= 2;
    let mut offset = 0;
    let mut records = Vec::new();
    if screened {
        while offset + 1 < c.max_level {
            let rec = screen_pair(model, observable, offset)?;
            let keep = rec.decision == ScreenDecision::Keep;
            records.push(rec);
            if keep {
                break;
            }
            info!("resonance screen at {frequency} Hz drops model level {offset}");
            offset += 1;
        }
    }
    let sampler = BeamSampler::new(model, observable, offset)?;
    let estimate = estimate(&sampler, c, rule, opts)?;
    Ok(point_result(Some(frequency), point, offset, records, estimate, c))
}

/// Pilot estimate of `log₂(V[P₁]/V[P₁ − P₀])` on the pair above `offset`.
fn screen_pair(model: &BeamModel, observable: Observable, offset: usize) -> Result<ScreenRecord> {
    let c = &model.config;
    let sampler = BeamSampler::new(model, observable, offset)?;
    sampler.cost(1, true);
    let dim = sampler.dimension();
    let pairs: Vec<(f64, f64)> = (0..c.dynamic.screen_samples)
        .into_par_iter()
        .map(|i| sampler.sample(1, &normal_omega(c.seed ^ PILOT_STREAM, offset, i, dim), true))
        .collect::<Result<_>>()?;
    let (mut fine, mut diff) = (Moments::default(), Moments::default());
    for (f, g) in pairs {
        fine.push(f);
        diff.push(f - g);
    }
    let (vf, vd) = (fine.variance(), diff.variance());
    Ok(ScreenRecord {
        offset,
        var_fine: vf,
        var_diff: vd,
        log_ratio: (vf / vd).log2(),
        decision: resonance_screen(vf, vd, c.dynamic.resonance_threshold),
    })
}

fn estimate(
    sampler: &BeamSampler<'_>,
    c: &ScenarioConfig,
    rule: Option<&LatticeRule>,
    opts: &RunOptions,
) -> Result<MultilevelEstimate> {
    let cap = sampler.max_level();
    let policy = if c.fixed_levels {
        LevelPolicy::Fixed(cap)
    } else {
        LevelPolicy::Adaptive { max_level: cap }
    };
    let mut eo = EstimatorOptions::new(c.tolerance, c.seed, policy);
    eo.warmup = c.sampling.warmup;
    eo.initial_levels = c.sampling.initial_levels;
    eo.shifts = c.sampling.shifts;
    eo.budget = opts.budget;
    match c.estimator {
        EstimatorKind::Mc => mc_estimate(sampler, c.mc_level().saturating_sub(sampler.offset()), &eo),
        EstimatorKind::Mlmc => mlmc_run(sampler, &eo),
        EstimatorKind::Mlqmc => mlqmc_run(sampler, rule.expect("lattice rule prepared for MLQMC"), &eo),
    }
}

/// Uncertainty bands from plain MC samples on the band level: along the
/// top edge (static elastic), along the load path (elastoplastic) or over
/// the frequency grid (dynamic).
fn bands(model: &BeamModel, results: &[PointResult]) -> Result<Bands> {
    let c = &model.config;
    let level = c.sampling.band_level;
    let n = c.sampling.band_samples;
    let dim = model.dimension();
    let seed = c.seed ^ BAND_STREAM;
    let lm = model.level(level)?;
    let mesh = lm.disc.mesh();
    match c.case {
        Case::StaticElastic => {
            let top: Vec<usize> = (0..mesh.columns()).map(|i| mesh.node(i, mesh.rows() - 1)).collect();
            let xs: Vec<f64> = top.iter().map(|n| mesh.coords()[*n][0]).collect();
            let profiles: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let omega = normal_omega(seed, level, i, dim);
                    let u = model.static_displacement(level, model.young(level, &omega)?)?;
                    Ok(top.iter().map(|n| u[2 * n + 1]).collect())
                })
                .collect::<Result<_>>()?;
            Ok(Bands::from_profiles("x", level, &xs, &profiles))
        }
        Case::StaticElastoplastic => {
            let point = results.first().map_or(default_point(model)?, |p| p.qoi_point);
            let node = model.node_at(level, point)?;
            let loads = model.elastoplastic_params().expect("elastoplastic case").schedule();
            let profiles: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let omega = normal_omega(seed, level, i, dim);
                    let path = model.load_path(level, model.young(level, &omega)?, node)?;
                    Ok(path.points.iter().map(|p| p.1).collect())
                })
                .collect::<Result<_>>()?;
            Ok(Bands::from_profiles("load", level, &loads, &profiles))
        }
        Case::DynamicElastic => {
            let targets: Vec<(f64, usize)> = results
                .iter()
                .filter(|p| p.error.is_none())
                .map(|p| Ok((p.frequency.expect("sweep point"), model.node_at(level, p.qoi_point)?)))
                .collect::<Result<_>>()?;
            let freqs: Vec<f64> = targets.iter().map(|t| t.0).collect();
            let profiles: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let omega = normal_omega(seed, level, i, dim);
                    let y = model.young(level, &omega)?;
                    targets
                        .iter()
                        .map(|(f, node)| Ok(model.dynamic_magnitude(level, y.clone(), *f)?[2 * node + 1]))
                        .collect()
                })
                .collect::<Result<_>>()?;
            Ok(Bands::from_profiles("frequency", level, &freqs, &profiles))
        }
    }
}
