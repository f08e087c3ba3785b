//! Uncertainty bands: sample moments and a kernel density estimate per abscissa.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Points of the density grid.
pub const DENSITY_GRID: usize = 200;

/// Distribution summary of the QoI samples at one abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub samples: usize,
    pub mean: f64,
    /// Unbiased sample standard deviation.
    pub std_dev: f64,
    /// Mode of the kernel density estimate (grid argmax).
    pub mode: f64,
    /// Kernel bandwidth (0 for a degenerate sample).
    pub bandwidth: f64,
    /// Evaluation grid and density values; empty for a degenerate sample.
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensitySummary {
    pub fn lower(&self) -> f64 {
        self.mean - self.std_dev
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.std_dev
    }

    pub fn is_degenerate(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Sample moments and a Gaussian-kernel density estimate on a
/// [`DENSITY_GRID`]-point grid with Silverman's bandwidth
/// `0.9 min(σ, IQR/1.34) n^{−1/5}`.
pub fn density_summary(samples: &[f64]) -> DensitySummary {
    let n = samples.len();
    let mut m = crate::estimators::Moments::default();
    samples.iter().for_each(|x| m.push(*x));
    let sd = m.variance().sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if n < 2 || !(h > 0.0) {
        return DensitySummary {
            samples: n,
            mean: m.mean,
            std_dev: sd,
            mode: m.mean,
            bandwidth: 0.0,
            grid: Vec::new(),
            density: Vec::new(),
        };
    }
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[n - 1] + 3.0 * h;
    let grid: Vec<f64> = (0..DENSITY_GRID)
        .map(|k| lo + (hi - lo) * k as f64 / (DENSITY_GRID - 1) as f64)
        .collect();
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density: Vec<f64> = grid
        .iter()
        .map(|x| {
            // Samples farther than 8h contribute below 1e-14 of the peak.
            let a = sorted.partition_point(|s| *s < x - 8.0 * h);
            let b = sorted.partition_point(|s| *s <= x + 8.0 * h);
            sorted[a..b]
                .iter()
                .map(|s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    let k = density
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(k, _)| k);
    DensitySummary {
        samples: n,
        mean: m.mean,
        std_dev: sd,
        mode: grid[k],
        bandwidth: h,
        grid,
        density,
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (sorted[j] - sorted[i]) * (pos - i as f64)
}

/// Bands along an abscissa (beam coordinate, load or frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    /// Name of the abscissa column.
    pub abscissa: String,
    /// Mesh level the samples were drawn on.
    pub level: usize,
    pub points: Vec<(f64, DensitySummary)>,
}

impl Bands {
    /// From per-sample profiles: `profiles[i][k]` is sample `i` at `abscissae[k]`.
    pub fn from_profiles(abscissa: &str, level: usize, abscissae: &[f64], profiles: &[Vec<f64>]) -> Self {
        let points = abscissae
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let column: Vec<f64> = profiles.iter().map(|p| p[k]).collect();
                (*x, density_summary(&column))
            })
            .collect();
        Self {
            abscissa: abscissa.to_string(),
            level,
            points,
        }
    }

    /// Columns: abscissa, mean, lower, upper, std_dev, mode, samples.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([self.abscissa.as_str(), "mean", "lower", "upper", "std_dev", "mode", "samples"])?;
        for (x, d) in &self.points {
            w.write_record([
                format!("{x:e}"),
                format!("{:e}", d.mean),
                format!("{:e}", d.lower()),
                format!("{:e}", d.upper()),
                format!("{:e}", d.std_dev),
                format!("{:e}", d.mode),
                d.samples.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long format for shaded density plots: abscissa, value, density.
    pub fn write_density_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([self.abscissa.as_str(), "value", "density"])?;
        for (x, d) in &self.points {
            for (v, p) in d.grid.iter().zip(&d.density) {
                w.write_record([format!("{x:e}"), format!("{v:e}"), format!("{p:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Gamma, StandardNormal};

    #[test]
    fn constant_samples_are_degenerate() {
        let d = density_summary(&[2.5; 10]);
        assert_eq!((d.mean, d.mode, d.std_dev), (2.5, 2.5, 0.0));
        assert!(d.is_degenerate());
        assert_eq!(d.lower(), d.upper());
    }

    #[test]
    fn normal_mode_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = density_summary(&xs);
        assert!(d.mode.abs() < 0.05, "mode {}", d.mode);
        assert_eq!(d.grid.len(), DENSITY_GRID);
        let dx = d.grid[1] - d.grid[0];
        let mass: f64 = d.density.iter().sum::<f64>() * dx;
        assert!((mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn skewed_mode_below_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let g = Gamma::new(2.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..20_000).map(|_| g.sample(&mut rng)).collect();
        let d = density_summary(&xs);
        assert!(d.mode < d.mean);
    }

    #[test]
    fn moments_are_exact() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let d = density_summary(&xs);
        assert_eq!(d.mean, 3.75);
        let var = xs.iter().map(|x| (x - 3.75f64).powi(2)).sum::<f64>() / 3.0;
        assert!((d.std_dev - var.sqrt()).abs() < 1e-14);
    }
}
