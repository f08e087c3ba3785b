//! Scenario configuration: TOML documents layered over per-case defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::rates::RESONANCE_THRESHOLD;
use crate::fem::assembly::{min_wavelength, MIN_ELEMENTS_PER_WAVELENGTH};
use crate::fem::mesh::{RefinementKind, Support};
use crate::fem::shape::MAX_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    StaticElastic,
    StaticElastoplastic,
    DynamicElastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncertainty {
    /// One gamma variable for the whole beam.
    Homogeneous,
    /// Gamma random field from a truncated KL expansion.
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mc,
    Mlmc,
    Mlqmc,
}

/// Which displacement component is the quantity of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QoiRule {
    /// Top node of the loaded column.
    MidTop,
    /// Node whose transverse displacement varies most over a pilot sample.
    MaxVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// Degrees of freedom solved per sample.
    Dofs,
    /// Median measured wall time per sample.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub length: f64,
    pub height: f64,
    /// Out-of-plane width.
    pub thickness: f64,
    pub elements_x: usize,
    pub elements_y: usize,
    pub support: Support,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    /// Gamma shape α of Young's modulus.
    pub shape: f64,
    /// Gamma scale β (Pa).
    pub scale: f64,
    pub poisson: f64,
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yield_strength: Option<f64>,
    /// Defaults to the mean Young's modulus / 100.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardening_modulus: Option<f64>,
}

impl MaterialConfig {
    pub fn mean_young(&self) -> f64 {
        self.shape * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    /// Total load (N), split over the loaded column.
    pub total: f64,
    /// Load increment of the elastoplastic schedule (N).
    pub step: f64,
    pub residual_factor: f64,
    pub max_newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub points: usize,
    /// Explicit grid, overrides `f_min`/`f_max`/`points`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    pub loss_factor: f64,
    pub resonance_threshold: f64,
    /// Pilot samples for the resonance screen.
    pub screen_samples: u64,
}

impl DynamicConfig {
    pub fn grid(&self) -> Vec<f64> {
        if let Some(f) = &self.frequencies {
            return f.clone();
        }
        if self.points <= 1 {
            return vec![self.f_max];
        }
        (0..self.points)
            .map(|k| self.f_min + (self.f_max - self.f_min) * k as f64 / (self.points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// Correlation length λ (m).
    pub corr_length: f64,
    pub sigma: f64,
    /// Exponent p of the distance norm, 1 or 2.
    pub norm: u32,
    /// Fraction of the field variance the KL truncation must capture.
    pub variance_fraction: f64,
    /// Explicit number of KL modes, overrides `variance_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    pub nystrom_x: usize,
    pub nystrom_y: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub warmup: u64,
    pub initial_levels: usize,
    pub shifts: usize,
    pub cost: CostKind,
    /// Generating vector file; the shipped vector when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<PathBuf>,
    /// δ used to classify the MLQMC cost regime.
    pub qmc_delta: f64,
    /// MC samples behind the uncertainty bands (0 disables them).
    pub band_samples: u64,
    /// Mesh level the band samples are drawn on.
    pub band_level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub case: Case,
    pub uncertainty: Uncertainty,
    pub refinement: RefinementKind,
    pub estimator: EstimatorKind,
    /// RMSE tolerance ε (QoI units: m for static, m for FRF magnitude).
    pub tolerance: f64,
    pub seed: u64,
    /// Finest level available to the estimator.
    pub max_level: usize,
    /// Level sampled by plain MC (defaults to `max_level`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_level: Option<usize>,
    /// Use exactly levels `0..=max_level` with no bias test.
    #[serde(default)]
    pub fixed_levels: bool,
    pub qoi: QoiRule,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub load: LoadConfig,
    pub dynamic: DynamicConfig,
    pub field: FieldConfig,
    pub sampling: SamplingConfig,
}

/// Largest level index supported by each hierarchy.
pub const MAX_H_LEVEL: usize = 5;
pub const MAX_P_LEVEL: usize = MAX_ORDER - 1;
/// Level cap of the elastoplastic case.
pub const MAX_ELASTOPLASTIC_LEVEL: usize = 3;

impl ScenarioConfig {
    /// Paper defaults for one case and uncertainty model.
    pub fn default_for(case: Case, uncertainty: Uncertainty) -> Self {
        let steel = case == Case::StaticElastoplastic;
        let material = if steel {
            MaterialConfig {
                shape: 934.2,
                scale: 0.214e9,
                poisson: 0.25,
                density: 7850.0,
                yield_strength: Some(240e6),
                hardening_modulus: None,
            }
        } else {
            MaterialConfig {
                shape: 7.1633,
                scale: 4.1880e9,
                poisson: 0.15,
                density: 2500.0,
                yield_strength: None,
                hardening_modulus: None,
            }
        };
        let (tolerance, max_level) = match case {
            Case::StaticElastic => (2.4e-4, 4),
            Case::StaticElastoplastic => (2.5e-5, MAX_ELASTOPLASTIC_LEVEL),
            Case::DynamicElastic => (5e-2, 3),
        };
        let case_name = match case {
            Case::StaticElastic => "static-elastic",
            Case::StaticElastoplastic => "static-elastoplastic",
            Case::DynamicElastic => "dynamic-elastic",
        };
        let unc_name = match uncertainty {
            Uncertainty::Homogeneous => "homogeneous",
            Uncertainty::Heterogeneous => "heterogeneous",
        };
        Self {
            name: format!("{case_name}-{unc_name}"),
            case,
            uncertainty,
            refinement: RefinementKind::H,
            estimator: EstimatorKind::Mlmc,
            tolerance,
            seed: 1,
            max_level,
            mc_level: None,
            fixed_levels: false,
            qoi: QoiRule::MidTop,
            geometry: GeometryConfig {
                length: 2.5,
                height: 0.25,
                thickness: if steel { 1e-3 } else { 1.0 },
                elements_x: 40,
                elements_y: 4,
                support: if case == Case::DynamicElastic {
                    Support::Cantilever
                } else {
                    Support::ClampedClamped
                },
            },
            material,
            load: LoadConfig {
                total: if steel { 13.5e3 } else { 1.0e7 },
                step: 135.0,
                residual_factor: 1e-4,
                max_newton_iterations: 30,
            },
            dynamic: DynamicConfig {
                f_min: 20.0,
                f_max: 400.0,
                points: 20,
                frequencies: None,
                loss_factor: 0.02,
                resonance_threshold: RESONANCE_THRESHOLD,
                screen_samples: 40,
            },
            field: FieldConfig {
                corr_length: 0.3,
                sigma: 1.0,
                norm: 2,
                variance_fraction: 0.9,
                modes: None,
                nystrom_x: 64,
                nystrom_y: 16,
            },
            sampling: SamplingConfig {
                warmup: 40,
                initial_levels: 3,
                shifts: 10,
                cost: CostKind::Dofs,
                lattice: None,
                qmc_delta: 0.5,
                band_samples: 200,
                band_level: 1,
            },
        }
    }

    /// The six paper scenarios (three cases × two uncertainty models).
    pub fn paper_scenarios() -> Vec<Self> {
        let mut out = Vec::new();
        for case in [Case::StaticElastic, Case::StaticElastoplastic, Case::DynamicElastic] {
            for unc in [Uncertainty::Homogeneous, Uncertainty::Heterogeneous] {
                out.push(Self::default_for(case, unc));
            }
        }
        out
    }

    /// Parses a TOML document. `case` and `uncertainty` select the
    /// defaults; every other key overrides them.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
        let pick = |key: &str| -> Result<toml::Value> {
            user.get(key)
                .cloned()
                .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
        };
        let case: Case = pick("case")?
            .try_into()
            .map_err(|e| Error::Config(format!("bad `case`: {e}")))?;
        let unc: Uncertainty = pick("uncertainty")?
            .try_into()
            .map_err(|e| Error::Config(format!("bad `uncertainty`: {e}")))?;
        let defaults = toml::Table::try_from(Self::default_for(case, unc))
            .map_err(|e| Error::Config(format!("cannot serialize defaults: {e}")))?;
        let merged = merge(defaults, user);
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn mc_level(&self) -> usize {
        self.mc_level.unwrap_or(self.max_level)
    }

    /// Checks every constraint and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let positive = |e: &mut Vec<String>, name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                e.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        positive(&mut e, "tolerance", self.tolerance);
        let level_cap = match self.refinement {
            RefinementKind::H => MAX_H_LEVEL,
            RefinementKind::P => MAX_P_LEVEL,
        };
        if self.max_level > level_cap {
            e.push(format!(
                "max_level {} exceeds the {:?}-hierarchy limit {level_cap}",
                self.max_level, self.refinement
            ));
        }
        if self.case == Case::StaticElastoplastic && self.max_level > MAX_ELASTOPLASTIC_LEVEL {
            e.push(format!(
                "elastoplastic runs are capped at level {MAX_ELASTOPLASTIC_LEVEL}, got max_level {}",
                self.max_level
            ));
        }
        if self.mc_level() > self.max_level {
            e.push(format!("mc_level {} exceeds max_level {}", self.mc_level(), self.max_level));
        }

        let g = &self.geometry;
        positive(&mut e, "geometry.length", g.length);
        positive(&mut e, "geometry.height", g.height);
        positive(&mut e, "geometry.thickness", g.thickness);
        if g.elements_x == 0 || g.elements_y == 0 {
            e.push("geometry.elements_x and elements_y must be positive".into());
        }
        if g.support == Support::ClampedClamped && g.elements_x % 2 != 0 {
            e.push(format!(
                "clamped-clamped beams need an even elements_x for a mid-span node column, got {}",
                g.elements_x
            ));
        }

        let m = &self.material;
        positive(&mut e, "material.shape", m.shape);
        positive(&mut e, "material.scale", m.scale);
        positive(&mut e, "material.density", m.density);
        if !(m.poisson > -1.0 && m.poisson < 0.5) {
            e.push(format!("material.poisson must lie in (-1, 0.5), got {}", m.poisson));
        }
        if let Some(h) = m.hardening_modulus {
            if !(h >= 0.0 && h.is_finite()) {
                e.push(format!("material.hardening_modulus must be nonnegative, got {h}"));
            }
        }
        if !self.load.total.is_finite() {
            e.push("load.total must be finite".into());
        }

        if self.case == Case::StaticElastoplastic {
            match m.yield_strength {
                Some(y) => positive(&mut e, "material.yield_strength", y),
                None => e.push("material.yield_strength is required for the elastoplastic case".into()),
            }
            positive(&mut e, "load.step", self.load.step);
            positive(&mut e, "load.residual_factor", self.load.residual_factor);
            if self.load.max_newton_iterations == 0 {
                e.push("load.max_newton_iterations must be positive".into());
            }
        }

        if self.case == Case::DynamicElastic {
            self.validate_dynamic(&mut e);
        }

        if self.uncertainty == Uncertainty::Heterogeneous {
            let f = &self.field;
            positive(&mut e, "field.corr_length", f.corr_length);
            positive(&mut e, "field.sigma", f.sigma);
            if f.norm != 1 && f.norm != 2 {
                e.push(format!("field.norm must be 1 or 2, got {}", f.norm));
            }
            if !(f.variance_fraction > 0.0 && f.variance_fraction <= 1.0) {
                e.push(format!("field.variance_fraction must lie in (0, 1], got {}", f.variance_fraction));
            }
            if f.modes == Some(0) {
                e.push("field.modes must be positive".into());
            }
            if f.nystrom_x == 0 || f.nystrom_y == 0 {
                e.push("field.nystrom_x and nystrom_y must be positive".into());
            }
        }

        let s = &self.sampling;
        if s.warmup < 2 {
            e.push(format!("sampling.warmup must be at least 2, got {}", s.warmup));
        }
        if s.initial_levels == 0 {
            e.push("sampling.initial_levels must be positive".into());
        }
        if s.shifts < 2 {
            e.push(format!("sampling.shifts must be at least 2, got {}", s.shifts));
        }
        if !(s.qmc_delta > 0.0 && s.qmc_delta <= 1.0) {
            e.push(format!("sampling.qmc_delta must lie in (0, 1], got {}", s.qmc_delta));
        }
        if s.band_samples > 0 && s.band_level > self.max_level {
            e.push(format!(
                "sampling.band_level {} exceeds max_level {}",
                s.band_level, self.max_level
            ));
        }

        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(e))
        }
    }

    fn validate_dynamic(&self, e: &mut Vec<String>) {
        let d = &self.dynamic;
        let grid = d.grid();
        if grid.is_empty() {
            e.push("dynamic frequency grid is empty".into());
            return;
        }
        if grid.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            e.push("dynamic frequencies must be finite and nonnegative".into());
            return;
        }
        if !(d.loss_factor >= 0.0 && d.loss_factor.is_finite()) {
            e.push(format!("dynamic.loss_factor must be nonnegative, got {}", d.loss_factor));
        }
        if !(d.resonance_threshold.is_finite()) {
            e.push("dynamic.resonance_threshold must be finite".into());
        }
        if d.screen_samples < 2 {
            e.push("dynamic.screen_samples must be at least 2".into());
        }
        let g = &self.geometry;
        let m = &self.material;
        let f_max = grid.iter().cloned().fold(0.0, f64::max);
        let f_min = grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let i = g.thickness * g.height.powi(3) / 12.0;
        let a = g.thickness * g.height;
        if f_max > 0.0 && g.elements_x > 0 && g.elements_y > 0 {
            let lambda = min_wavelength(m.mean_young(), i, a, m.density, f_max);
            let h = (g.length / g.elements_x as f64).max(g.height / g.elements_y as f64);
            if lambda / h < MIN_ELEMENTS_PER_WAVELENGTH {
                e.push(format!(
                    "f_max = {f_max} Hz resolves the shortest wavelength {lambda:.4} m with only {:.2} \
                     coarse elements (at least {MIN_ELEMENTS_PER_WAVELENGTH} required)",
                    lambda / h
                ));
            }
        }
        if d.loss_factor == 0.0 {
            let res = beam_resonances(g.support, m.mean_young(), i, a, m.density, g.length, f_max);
            if let Some(f) = res.iter().find(|f| **f >= f_min && **f <= f_max) {
                e.push(format!(
                    "loss_factor 0 is not allowed for a sweep crossing the resonance near {f:.1} Hz"
                ));
            }
        }
    }
}

/// Euler–Bernoulli natural frequencies (Hz) up to `f_max`.
pub fn beam_resonances(support: Support, young: f64, i: f64, a: f64, rho: f64, length: f64, f_max: f64) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let c = (young * i / (rho * a)).sqrt() / (2.0 * pi * length * length);
    let root = |n: usize| -> f64 {
        match support {
            Support::Cantilever => match n {
                0 => 1.875_104,
                1 => 4.694_091,
                2 => 7.854_757,
                _ => (2 * n + 1) as f64 * pi / 2.0,
            },
            Support::ClampedClamped => match n {
                0 => 4.730_041,
                1 => 7.853_205,
                _ => (2 * n + 3) as f64 * pi / 2.0,
            },
        }
    };
    let mut out = Vec::new();
    for n in 0.. {
        let f = root(n).powi(2) * c;
        if f > f_max * 1.5 {
            break;
        }
        out.push(f);
    }
    out
}

/// Recursively overlays `user` onto `base`.
fn merge(mut base: toml::Table, user: toml::Table) -> toml::Table {
    for (k, v) in user {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => {
                base.insert(k, toml::Value::Table(merge(b, u)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}
