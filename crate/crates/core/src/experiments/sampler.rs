//! Beam models of one scenario wrapped as a level-coupled sampler.

use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Case, CostKind, ScenarioConfig, Uncertainty};
use crate::distributions::{memoryless_transform, GammaParams};
use crate::error::{Error, Result};
use crate::estimators::CoupledSampler;
use crate::fem::assembly::{solve_dynamic, solve_static, Discretization, FieldRule, HarmonicParams, MaterialSample, YoungField};
use crate::fem::banded::BandedSym;
use crate::fem::mesh::{BeamGeometry, LevelSpec, Mesh};
use crate::plasticity::{incremental_solve, ElastoplasticParams, IncrementalProblem, LoadPath};
use crate::random_field::{nystrom_eigensolve, CovarianceSpec, FieldTable, KLBasis, NormExponent, NystromOptions, Rect};

/// Everything about one mesh level that does not change between samples.
pub struct LevelModel {
    pub disc: Discretization<f64>,
    /// KL table at the field evaluation points (heterogeneous only).
    field: Option<FieldTable<f64>>,
    /// Constrained load for the configured total.
    load: Vec<f64>,
    /// Unit-total load in global numbering (elastoplastic).
    pattern: Vec<f64>,
    /// Constrained mass matrix (dynamic only).
    mass: Option<BandedSym<f64>>,
    /// Measured seconds per solve, filled on demand.
    measured: OnceLock<f64>,
}

/// The hierarchy of beam models of one scenario, shared by every run of a sweep.
pub struct BeamModel {
    pub config: ScenarioConfig,
    marginal: GammaParams<f64>,
    rule: FieldRule,
    basis: Option<KLBasis<f64>>,
    levels: Vec<OnceLock<Result<LevelModel>>>,
    plastic: Option<ElastoplasticParams<f64>>,
}

impl BeamModel {
    /// Validates the configuration and, for heterogeneous runs, computes the
    /// KL basis. Level meshes are built on first use.
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let m = &config.material;
        let marginal = GammaParams::new(m.shape, m.scale)?;
        let basis = match config.uncertainty {
            Uncertainty::Homogeneous => None,
            Uncertainty::Heterogeneous => Some(kl_basis(config)?),
        };
        let plastic = (config.case == Case::StaticElastoplastic).then(|| {
            let mut p = ElastoplasticParams::steel(m.mean_young());
            p.yield_strength = m.yield_strength.expect("validated");
            if let Some(h) = m.hardening_modulus {
                p.hardening_modulus = h;
            }
            p.poisson = m.poisson;
            p.max_load = config.load.total;
            p.load_step = config.load.step;
            p.residual_factor = config.load.residual_factor;
            p.max_newton_iterations = config.load.max_newton_iterations;
            p
        });
        Ok(Self {
            config: config.clone(),
            marginal,
            rule: FieldRule::for_refinement(config.refinement),
            basis,
            levels: (0..=config.max_level).map(|_| OnceLock::new()).collect(),
            plastic,
        })
    }

    pub fn max_level(&self) -> usize {
        self.config.max_level
    }

    /// Random inputs per sample: one for a homogeneous beam, `s` KL
    /// coefficients otherwise.
    pub fn dimension(&self) -> usize {
        self.basis.as_ref().map_or(1, |b| b.truncation())
    }

    pub fn kl_modes(&self) -> Option<usize> {
        self.basis.as_ref().map(|b| b.truncation())
    }

    pub fn elastoplastic_params(&self) -> Option<&ElastoplasticParams<f64>> {
        self.plastic.as_ref()
    }

    /// Level data, building it on first access.
    pub fn level(&self, l: usize) -> Result<&LevelModel> {
        let cell = self
            .levels
            .get(l)
            .ok_or_else(|| Error::Config(format!("level {l} exceeds max_level {}", self.config.max_level)))?;
        cell.get_or_init(|| self.build_level(l)).as_ref().map_err(Clone::clone)
    }

    fn build_level(&self, l: usize) -> Result<LevelModel> {
        let c = &self.config;
        let g = &c.geometry;
        let spec = LevelSpec::new(c.refinement, l, (g.elements_x, g.elements_y))?;
        let geom = BeamGeometry {
            length: g.length,
            height: g.height,
            thickness: g.thickness,
        };
        let mesh = Mesh::beam(&spec, &geom, g.support)?;
        let disc = Discretization::new(mesh, g.thickness)?;
        let field = self
            .basis
            .as_ref()
            .map(|b| FieldTable::new(b, &disc.field_points(self.rule)));
        let pattern = disc.load_vector(1.0);
        let load = disc.restrict(&disc.load_vector(c.load.total));
        let mass = (c.case == Case::DynamicElastic).then(|| disc.assemble_mass(c.material.density));
        Ok(LevelModel {
            disc,
            field,
            load,
            pattern,
            mass,
            measured: OnceLock::new(),
        })
    }

    /// Young's modulus field of sample `omega` on level `l`.
    pub fn young(&self, l: usize, omega: &[f64]) -> Result<YoungField<f64>> {
        let lm = self.level(l)?;
        match &lm.field {
            None => Ok(YoungField::Uniform(memoryless_transform(omega[0], &self.marginal)?)),
            Some(t) => {
                let v = t.gamma(&omega[..t.modes()], &self.marginal)?;
                Ok(match self.rule {
                    FieldRule::Midpoint => YoungField::PerElement(v),
                    FieldRule::IntegrationPoint => YoungField::PerIntegrationPoint(v),
                })
            }
        }
    }

    fn material(&self, young: YoungField<f64>) -> MaterialSample<f64> {
        MaterialSample {
            young,
            poisson: self.config.material.poisson,
            density: self.config.material.density,
        }
    }

    /// Static elastic displacement in global numbering.
    pub fn static_displacement(&self, l: usize, young: YoungField<f64>) -> Result<Vec<f64>> {
        let lm = self.level(l)?;
        let k = lm.disc.assemble_stiffness(&self.material(young))?;
        let sol = solve_static(&crate::fem::assembly::StaticSystem {
            stiffness: k,
            load: lm.load.clone(),
        })?;
        Ok(lm.disc.expand(&sol.displacement))
    }

    /// Harmonic response magnitudes `|u|` in global numbering.
    pub fn dynamic_magnitude(&self, l: usize, young: YoungField<f64>, frequency: f64) -> Result<Vec<f64>> {
        let lm = self.level(l)?;
        let k = lm.disc.assemble_stiffness(&self.material(young))?;
        let hp = HarmonicParams {
            frequency,
            loss_factor: self.config.dynamic.loss_factor,
        };
        let u = solve_dynamic(&k, lm.mass.as_ref().expect("dynamic level has a mass matrix"), &lm.load, &hp)?;
        Ok(lm.disc.expand(&u).iter().map(|z| z.norm()).collect())
    }

    /// Force–deflection path monitored at `node`.
    pub fn load_path(&self, l: usize, young: YoungField<f64>, node: usize) -> Result<LoadPath<f64>> {
        let lm = self.level(l)?;
        let params = self
            .plastic
            .as_ref()
            .ok_or_else(|| Error::Config("load paths need the elastoplastic case".into()))?;
        incremental_solve(
            &IncrementalProblem {
                discretization: &lm.disc,
                young: &young,
                load_pattern: &lm.pattern,
                monitor_dof: 2 * node + 1,
            },
            params,
        )
    }

    /// Node of level `l` at the given point.
    pub fn node_at(&self, l: usize, p: [f64; 2]) -> Result<usize> {
        let mesh = self.level(l)?.disc.mesh();
        let tol = 1e-9 * (self.config.geometry.length + self.config.geometry.height);
        mesh.node_near(p, tol)
            .ok_or_else(|| Error::Mesh(format!("no node at ({}, {}) on level {l}", p[0], p[1])))
    }

    /// Free degrees of freedom of level `l`.
    pub fn dofs(&self, l: usize) -> Result<usize> {
        Ok(self.level(l)?.disc.equations())
    }

    /// Cost of one solve on level `l` under the configured cost model.
    pub fn solve_cost(&self, l: usize) -> Result<f64> {
        match self.config.sampling.cost {
            CostKind::Dofs => Ok(self.dofs(l)? as f64),
            CostKind::Measured => {
                let lm = self.level(l)?;
                if let Some(t) = lm.measured.get() {
                    return Ok(*t);
                }
                let t = self.time_solve(l)?;
                Ok(*lm.measured.get_or_init(|| t))
            }
        }
    }

    /// Median wall time of three mean-modulus solves.
    fn time_solve(&self, l: usize) -> Result<f64> {
        let omega = vec![0.0; self.dimension()];
        let node = self.level(l)?.disc.mesh().qoi_node();
        let mut t = Vec::with_capacity(3);
        for _ in 0..3 {
            let start = Instant::now();
            let y = self.young(l, &omega)?;
            match self.config.case {
                Case::StaticElastic => {
                    self.static_displacement(l, y)?;
                }
                Case::StaticElastoplastic => {
                    self.load_path(l, y, node)?;
                }
                Case::DynamicElastic => {
                    self.dynamic_magnitude(l, y, self.config.dynamic.f_max)?;
                }
            }
            t.push(start.elapsed().as_secs_f64());
        }
        t.sort_by(f64::total_cmp);
        Ok(t[1].max(f64::MIN_POSITIVE))
    }
}

fn kl_basis(config: &ScenarioConfig) -> Result<KLBasis<f64>> {
    let f = &config.field;
    let spec = CovarianceSpec {
        sigma: f.sigma,
        corr_length: f.corr_length,
        norm: NormExponent::from_int(f.norm)?,
        domain: Rect {
            length: config.geometry.length,
            height: config.geometry.height,
        },
    };
    let mut basis = nystrom_eigensolve(
        &spec,
        NystromOptions {
            nodes_x: f.nystrom_x,
            nodes_y: f.nystrom_y,
            max_modes: None,
        },
    )?;
    let s = match f.modes {
        Some(s) => s,
        None => basis.truncate_to_variance(f.variance_fraction)?,
    };
    basis.set_truncation(s)?;
    Ok(basis)
}

/// What a sample reports on a given level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// Static transverse displacement at a point.
    Static { point: [f64; 2] },
    /// Final deflection of the load path at a point.
    LoadPath { point: [f64; 2] },
    /// Harmonic response magnitude at a point and frequency.
    Harmonic { point: [f64; 2], frequency: f64 },
}

/// A view of a [`BeamModel`] as a [`CoupledSampler`]: one observable and
/// an offset that drops the coarsest model levels.
pub struct BeamSampler<'a> {
    model: &'a BeamModel,
    observable: Observable,
    /// Estimator level ℓ uses model level ℓ + offset.
    offset: usize,
    /// QoI node per model level.
    nodes: Vec<usize>,
}

impl<'a> BeamSampler<'a> {
    pub fn new(model: &'a BeamModel, observable: Observable, offset: usize) -> Result<Self> {
        if offset >= model.max_level() && model.max_level() > 0 {
            return Err(Error::Config(format!(
                "offset {offset} leaves no level below max_level {}",
                model.max_level()
            )));
        }
        let point = match observable {
            Observable::Static { point } | Observable::LoadPath { point } | Observable::Harmonic { point, .. } => point,
        };
        let nodes = (0..=model.max_level())
            .map(|l| model.node_at(l, point))
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            observable,
            offset,
            nodes,
        })
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// QoI of one model level.
    pub fn evaluate(&self, model_level: usize, omega: &[f64]) -> Result<f64> {
        let y = self.model.young(model_level, omega)?;
        let node = self.nodes[model_level];
        match self.observable {
            Observable::Static { .. } => Ok(self.model.static_displacement(model_level, y)?[2 * node + 1]),
            Observable::LoadPath { .. } => Ok(self.model.load_path(model_level, y, node)?.final_deflection()),
            Observable::Harmonic { frequency, .. } => {
                Ok(self.model.dynamic_magnitude(model_level, y, frequency)?[2 * node + 1])
            }
        }
    }
}

impl CoupledSampler for BeamSampler<'_> {
    fn dimension(&self) -> usize {
        self.model.dimension()
    }

    fn max_level(&self) -> usize {
        self.model.max_level() - self.offset
    }

    /// Model cost of the pair; also builds the levels so that sampling
    /// never initializes shared data from inside the worker pool.
    fn cost(&self, level: usize, coupled: bool) -> f64 {
        let fine = self.model.solve_cost(level + self.offset).unwrap_or(f64::NAN);
        if coupled && level > 0 {
            fine + self.model.solve_cost(level + self.offset - 1).unwrap_or(f64::NAN)
        } else {
            fine
        }
    }

    fn sample(&self, level: usize, omega: &[f64], coupled: bool) -> Result<(f64, f64)> {
        let l = level + self.offset;
        let fine = self.evaluate(l, omega)?;
        let coarse = if coupled && level > 0 { self.evaluate(l - 1, omega)? } else { 0.0 };
        Ok((fine, coarse))
    }
}

/// Picks the node with the largest sample variance of the transverse
/// displacement over `samples` static solves on level 0.
pub fn max_variance_point(model: &BeamModel, seed: u64, samples: u64) -> Result<[f64; 2]> {
    let dim = model.dimension();
    model.level(0)?;
    let fields: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let omega = crate::estimators::normal_omega(seed, 0, i, dim);
            let u = model.static_displacement(0, model.young(0, &omega)?)?;
            Ok(u.iter().skip(1).step_by(2).copied().collect())
        })
        .collect::<Result<_>>()?;
    let nodes = fields[0].len();
    let mut best = (f64::NEG_INFINITY, 0);
    for n in 0..nodes {
        let mut m = crate::estimators::Moments::default();
        fields.iter().for_each(|f| m.push(f[n]));
        if m.variance() > best.0 {
            best = (m.variance(), n);
        }
    }
    Ok(model.level(0)?.disc.mesh().coords()[best.1])
}

/// Node with the largest harmonic response of the mean-modulus beam on level 0.
pub fn max_response_point(model: &BeamModel, frequency: f64) -> Result<[f64; 2]> {
    let y = YoungField::Uniform(model.config.material.mean_young());
    let u = model.dynamic_magnitude(0, y, frequency)?;
    let node = u
        .iter()
        .skip(1)
        .step_by(2)
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(n, _)| n)
        .unwrap_or(0);
    Ok(model.level(0)?.disc.mesh().coords()[node])
}

/// Coordinates of the default QoI node (top of the loaded column).
pub fn default_point(model: &BeamModel) -> Result<[f64; 2]> {
    let mesh = model.level(0)?.disc.mesh();
    Ok(mesh.coords()[mesh.qoi_node()])
}
