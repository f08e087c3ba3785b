//! Truncated Karhunen–Loève representation of a Gaussian random field with
//! exponential covariance, computed with the Nyström method, and its
//! pointwise transformation to gamma marginals.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::distributions::{memoryless_transform, GammaParams};
use crate::error::{Error, Result};
use crate::quadrature::tensor_rule_rect;
use crate::scalar::Real;

/// Relative cut-off below which eigenvalues are discarded.
pub const EIGEN_CUTOFF: f64 = 1e-12;

/// Which p-norm measures distance in the covariance kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum NormExponent {
    One,
    Two,
}

impl NormExponent {
    pub fn from_int(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            other => Err(Error::Config(format!("kernel norm exponent must be 1 or 2, got {other}"))),
        }
    }
}

/// Axis-aligned rectangle `[0, length] × [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub length: T,
    pub height: T,
}

impl<T: Real> Rect<T> {
    pub fn area(&self) -> T {
        self.length * self.height
    }

    pub fn contains(&self, p: [T; 2]) -> bool {
        let tol = T::lit(1e-12) * (self.length + self.height);
        p[0] >= -tol && p[0] <= self.length + tol && p[1] >= -tol && p[1] <= self.height + tol
    }
}

/// Exponential covariance `σ² exp(−‖x − y‖_p / λ)` on a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec<T> {
    pub sigma: T,
    /// Correlation length λ in metres. `+∞` gives the constant kernel σ².
    pub corr_length: T,
    pub norm: NormExponent,
    pub domain: Rect<T>,
}

impl<T: Real> CovarianceSpec<T> {
    /// σ = 1, λ = 0.3 m, Euclidean distance, on the given domain.
    pub fn with_defaults(domain: Rect<T>) -> Self {
        Self {
            sigma: T::one(),
            corr_length: T::lit(0.3),
            norm: NormExponent::Two,
            domain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero() && self.sigma.is_finite()) {
            return Err(Error::Config(format!("field sigma must be positive, got {}", self.sigma)));
        }
        if !(self.corr_length > T::zero()) {
            return Err(Error::Config(format!(
                "correlation length must be positive, got {}",
                self.corr_length
            )));
        }
        if !(self.domain.length > T::zero() && self.domain.height > T::zero()) {
            return Err(Error::Config("field domain must have positive extent".into()));
        }
        Ok(())
    }
}

/// Kernel value `C(x, y)`.
#[inline]
pub fn covariance<T: Real>(spec: &CovarianceSpec<T>, x: [T; 2], y: [T; 2]) -> T {
    let dx = (x[0] - y[0]).abs();
    let dy = (x[1] - y[1]).abs();
    let dist = match spec.norm {
        NormExponent::One => dx + dy,
        NormExponent::Two => dx.hypot(dy),
    };
    spec.sigma * spec.sigma * (-(dist / spec.corr_length)).exp()
}

/// Spectral data of the discretized covariance operator.
#[derive(Debug, Clone)]
pub struct KLBasis<T: Real> {
    spec: CovarianceSpec<T>,
    nodes: Vec<[T; 2]>,
    weights: Vec<T>,
    sqrt_weights: Vec<T>,
    /// Retained eigenvalues θ̃_n, descending.
    eigenvalues: Vec<T>,
    /// Column n is the eigenvector B̃*_n of Ψ = √W Σ √W.
    eigenvectors: DMatrix<T>,
    /// Sum of all nonnegative eigenvalues, including any not retained.
    total_variance: T,
    truncation: usize,
}

/// Options for [`nystrom_eigensolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NystromOptions {
    /// Gauss–Legendre points along the length.
    pub nodes_x: usize,
    /// Gauss–Legendre points along the height.
    pub nodes_y: usize,
    /// Keep at most this many eigenpairs (`None`: all above the cut-off).
    pub max_modes: Option<usize>,
}

impl Default for NystromOptions {
    fn default() -> Self {
        Self {
            nodes_x: 64,
            nodes_y: 16,
            max_modes: None,
        }
    }
}

/// Solves the Nyström-discretized Fredholm eigenproblem `Ψ B̃* = θ̃ B̃*`.
///
/// The returned basis is truncated to all retained modes; call
/// [`KLBasis::truncate_to_variance`] or [`KLBasis::set_truncation`] to pick `s`.
pub fn nystrom_eigensolve<T: Real>(spec: &CovarianceSpec<T>, opts: NystromOptions) -> Result<KLBasis<T>> {
    spec.validate()?;
    let m = opts.nodes_x * opts.nodes_y;
    if m < 4 {
        return Err(Error::Config(format!("Nyström rule needs at least 4 points, got {m}")));
    }
    let (nodes, weights) = tensor_rule_rect(
        opts.nodes_x,
        opts.nodes_y,
        [T::zero(), T::zero()],
        [spec.domain.length, spec.domain.height],
    );
    if weights.iter().any(|w| *w <= T::zero()) {
        return Err(Error::Config("quadrature weights must be positive".into()));
    }
    let sqrt_weights: Vec<T> = weights.iter().map(|w| w.sqrt()).collect();

    // Ψ_kq = √w_k C(x_k, x_q) √w_q, filled from the upper triangle so that
    // the matrix is exactly symmetric.
    let mut psi = DMatrix::<T>::zeros(m, m);
    for k in 0..m {
        for q in k..m {
            let v = sqrt_weights[k] * covariance(spec, nodes[k], nodes[q]) * sqrt_weights[q];
            psi[(k, q)] = v;
            psi[(q, k)] = v;
        }
    }

    let (values, vectors) = T::symmetric_eigen(psi).ok_or_else(|| Error::Eigen {
        points: m,
        detail: "symmetric QR iteration did not converge".into(),
    })?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen {
            points: m,
            detail: "non-finite eigenvalues".into(),
        });
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("finite eigenvalues")
    });
    let largest = values[order[0]];
    if largest <= T::zero() {
        return Err(Error::Eigen {
            points: m,
            detail: format!("largest eigenvalue {largest} is not positive"),
        });
    }
    let cutoff = largest * T::lit(EIGEN_CUTOFF);
    let total_variance: T = order
        .iter()
        .map(|&i| values[i])
        .filter(|v| *v > T::zero())
        .sum();
    let mut keep: Vec<usize> = order.into_iter().filter(|&i| values[i] >= cutoff).collect();
    if let Some(cap) = opts.max_modes {
        keep.truncate(cap.max(1));
    }

    let mut eigenvectors = DMatrix::<T>::zeros(m, keep.len());
    let mut eigenvalues = Vec::with_capacity(keep.len());
    for (col, &i) in keep.iter().enumerate() {
        eigenvalues.push(values[i]);
        let v = vectors.column(i);
        // Sign convention: the largest-magnitude entry is positive (first
        // one wins on ties).
        let mut pivot = 0;
        for q in 1..m {
            if v[q].abs() > v[pivot].abs() {
                pivot = q;
            }
        }
        let sign = if v[pivot] < T::zero() { -T::one() } else { T::one() };
        for q in 0..m {
            eigenvectors[(q, col)] = sign * v[q];
        }
    }

    let truncation = eigenvalues.len();
    Ok(KLBasis {
        spec: *spec,
        nodes,
        weights,
        sqrt_weights,
        eigenvalues,
        eigenvectors,
        total_variance,
        truncation,
    })
}

impl<T: Real> KLBasis<T> {
    pub fn spec(&self) -> &CovarianceSpec<T> {
        &self.spec
    }

    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// All retained eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, n: usize) -> Vec<T> {
        self.eigenvectors.column(n).iter().copied().collect()
    }

    pub fn retained_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of terms `s` used by field evaluations.
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn total_variance(&self) -> T {
        self.total_variance
    }

    pub fn set_truncation(&mut self, s: usize) -> Result<()> {
        if s == 0 || s > self.eigenvalues.len() {
            return Err(Error::Config(format!(
                "truncation must lie in 1..={}, got {s}",
                self.eigenvalues.len()
            )));
        }
        self.truncation = s;
        Ok(())
    }

    /// Cumulative eigenvalue fraction after each retained mode.
    pub fn cumulative_fractions(&self) -> Vec<T> {
        let mut acc = T::zero();
        self.eigenvalues
            .iter()
            .map(|v| {
                acc += *v;
                acc / self.total_variance
            })
            .collect()
    }

    /// Smallest `s` whose cumulative eigenvalue fraction reaches `fraction`.
    pub fn truncate_to_variance(&self, fraction: T) -> Result<usize> {
        if !(fraction > T::zero() && fraction <= T::one()) {
            return Err(Error::Config(format!("variance fraction must lie in (0, 1], got {fraction}")));
        }
        let slack = T::lit(1e-12);
        let cum = self.cumulative_fractions();
        cum.iter()
            .position(|c| *c >= fraction - slack)
            .map(|i| i + 1)
            .ok_or_else(|| Error::Truncation {
                requested: fraction.as_f64(),
                attainable: cum.last().map(|c| c.as_f64()).unwrap_or(0.0),
            })
    }

    /// Nyström interpolant `b̃_n(x) = θ̃_n⁻¹ Σ_q √w_q B̃*_{n,q} C(x, y_q)`.
    pub fn eigenfunction(&self, n: usize, x: [T; 2]) -> T {
        let col = self.eigenvectors.column(n);
        let mut acc = T::zero();
        for q in 0..self.nodes.len() {
            acc += self.sqrt_weights[q] * col[q] * covariance(&self.spec, x, self.nodes[q]);
        }
        acc / self.eigenvalues[n]
    }

    /// Truncated covariance `Σ_{n<s} θ̃_n b̃_n(x) b̃_n(y)`.
    pub fn reconstructed_covariance(&self, s: usize, x: [T; 2], y: [T; 2]) -> T {
        (0..s.min(self.eigenvalues.len()))
            .map(|n| self.eigenvalues[n] * self.eigenfunction(n, x) * self.eigenfunction(n, y))
            .sum()
    }

    /// Pointwise variance of the truncated Gaussian field.
    pub fn truncated_variance(&self, x: [T; 2]) -> T {
        self.reconstructed_covariance(self.truncation, x, x)
    }

    /// Writes `n, eigenvalue, cumulative_fraction` rows (1-based `n`).
    pub fn write_spectrum_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "eigenvalue", "cumulative_fraction"])?;
        for (i, (v, c)) in self.eigenvalues.iter().zip(self.cumulative_fractions()).enumerate() {
            w.write_record([(i + 1).to_string(), format!("{:e}", v.as_f64()), format!("{}", c.as_f64())])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One realization of the KL coefficients, paired with its basis.
#[derive(Debug, Clone, Copy)]
pub struct FieldRealization<'a, T: Real> {
    pub basis: &'a KLBasis<T>,
    pub xi: &'a [T],
}

impl<'a, T: Real> FieldRealization<'a, T> {
    pub fn new(basis: &'a KLBasis<T>, xi: &'a [T]) -> Result<Self> {
        if xi.len() != basis.truncation() {
            return Err(Error::Domain(format!(
                "realization has {} coefficients, basis truncation is {}",
                xi.len(),
                basis.truncation()
            )));
        }
        Ok(Self { basis, xi })
    }
}

/// `Z(x) = Σ_{n<s} √θ̃_n ξ_n b̃_n(x)` at every point (zero mean).
pub fn evaluate_gaussian<T: Real>(realization: &FieldRealization<'_, T>, points: &[[T; 2]]) -> Vec<T> {
    let basis = realization.basis;
    let m = basis.nodes.len();
    // v_q = Σ_n B̃*_{n,q} ξ_n / √θ̃_n, so that Z(x) = Σ_q √w_q C(x, y_q) v_q.
    let mut v = vec![T::zero(); m];
    for (n, xi) in realization.xi.iter().enumerate() {
        let scale = *xi / basis.eigenvalues[n].sqrt();
        for (q, vq) in v.iter_mut().enumerate() {
            *vq += basis.eigenvectors[(q, n)] * scale;
        }
    }
    points
        .iter()
        .map(|x| {
            let mut z = T::zero();
            for q in 0..m {
                z += basis.sqrt_weights[q] * covariance(&basis.spec, *x, basis.nodes[q]) * v[q];
            }
            z
        })
        .collect()
}

/// Gamma-marginal field `g(Z(x))` at every point.
pub fn evaluate_gamma<T: Real>(
    realization: &FieldRealization<'_, T>,
    points: &[[T; 2]],
    marginal: &GammaParams<T>,
) -> Result<Vec<T>> {
    evaluate_gaussian(realization, points)
        .into_iter()
        .map(|z| memoryless_transform(z, marginal))
        .collect()
}

/// Precomputed `√θ̃_n b̃_n(x_p)` for a fixed point set, so that repeated
/// realizations on the same mesh cost `O(points × s)`.
#[derive(Debug, Clone)]
pub struct FieldTable<T> {
    points: usize,
    modes: usize,
    /// Row-major `points × modes`.
    values: Vec<T>,
}

impl<T: Real> FieldTable<T> {
    pub fn new(basis: &KLBasis<T>, points: &[[T; 2]]) -> Self {
        let s = basis.truncation();
        let m = basis.nodes.len();
        let mut values = vec![T::zero(); points.len() * s];
        if s > 0 {
            values.par_chunks_mut(s).zip(points.par_iter()).for_each_init(
                || vec![T::zero(); m],
                |kernel, (row, x)| {
                    for q in 0..m {
                        kernel[q] = basis.sqrt_weights[q] * covariance(&basis.spec, *x, basis.nodes[q]);
                    }
                    for (n, out) in row.iter_mut().enumerate() {
                        let col = basis.eigenvectors.column(n);
                        let mut acc = T::zero();
                        for q in 0..m {
                            acc += col[q] * kernel[q];
                        }
                        *out = acc / basis.eigenvalues[n].sqrt();
                    }
                },
            );
        }
        Self {
            points: points.len(),
            modes: s,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Pointwise variance of the truncated field.
    pub fn variance_at(&self, p: usize) -> T {
        self.values[p * self.modes..(p + 1) * self.modes]
            .iter()
            .map(|v| *v * *v)
            .sum()
    }

    pub fn gaussian(&self, xi: &[T]) -> Vec<T> {
        assert_eq!(xi.len(), self.modes, "coefficient count must match the table");
        self.values
            .chunks_exact(self.modes)
            .map(|row| row.iter().zip(xi).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    pub fn gamma(&self, xi: &[T], marginal: &GammaParams<T>) -> Result<Vec<T>> {
        self.gaussian(xi)
            .into_iter()
            .map(|z| memoryless_transform(z, marginal))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn beam() -> Rect<f64> {
        Rect {
            length: 2.5,
            height: 0.25,
        }
    }

    fn small_basis() -> KLBasis<f64> {
        let spec = CovarianceSpec::with_defaults(beam());
        nystrom_eigensolve(
            &spec,
            NystromOptions {
                nodes_x: 24,
                nodes_y: 6,
                max_modes: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn kernel_values() {
        let spec = CovarianceSpec::with_defaults(beam());
        assert_eq!(covariance(&spec, [0.4, 0.1], [0.4, 0.1]), 1.0);
        assert_relative_eq!(covariance(&spec, [0.5, 0.1], [0.2, 0.1]), (-1.0f64).exp(), max_relative = 1e-15);
        let one = CovarianceSpec {
            norm: NormExponent::One,
            ..spec
        };
        let d = ([1.0, 0.2], [0.7, -0.2]);
        assert_relative_eq!(covariance(&one, d.0, d.1), (-7.0f64 / 3.0).exp(), max_relative = 1e-14);
        assert_relative_eq!(covariance(&spec, d.0, d.1), (-5.0f64 / 3.0).exp(), max_relative = 1e-14);
        assert_eq!(covariance(&spec, d.0, d.1), covariance(&spec, d.1, d.0));
    }

    #[test]
    fn eigenvectors_are_orthonormal_and_sorted() {
        let b = small_basis();
        assert!(b.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        assert!(b.eigenvalues().iter().all(|v| *v > 0.0));
        for i in 0..10 {
            for j in 0..10 {
                let dot: f64 = b.eigenvector(i).iter().zip(b.eigenvector(j)).map(|(a, c)| a * c).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "<{i},{j}> = {dot}");
            }
        }
        for n in 0..b.retained_modes() {
            let v = b.eigenvector(n);
            let pivot = v.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn eigenfunctions_interpolate_nodes() {
        let b = small_basis();
        let w = b.weights().to_vec();
        for n in [0, 3, 17] {
            let v = b.eigenvector(n);
            for q in [0, 40, 100] {
                let at_node = b.eigenfunction(n, b.nodes()[q]);
                assert_relative_eq!(at_node, v[q] / w[q].sqrt(), max_relative = 1e-9, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn truncation_errors_and_monotone() {
        let mut b = small_basis();
        assert!(b.truncate_to_variance(0.0).is_err());
        assert!(b.truncate_to_variance(1.5).is_err());
        let s50 = b.truncate_to_variance(0.5).unwrap();
        let s90 = b.truncate_to_variance(0.9).unwrap();
        assert!(s50 < s90);
        assert!(b.set_truncation(0).is_err());
        assert!(b.set_truncation(b.retained_modes() + 1).is_err());
        b.set_truncation(5).unwrap();
        assert_eq!(b.truncation(), 5);
    }

    #[test]
    fn capped_basis_reports_attainable_fraction() {
        let spec = CovarianceSpec::with_defaults(beam());
        let b = nystrom_eigensolve(
            &spec,
            NystromOptions {
                nodes_x: 16,
                nodes_y: 4,
                max_modes: Some(3),
            },
        )
        .unwrap();
        match b.truncate_to_variance(0.99) {
            Err(Error::Truncation { attainable, .. }) => assert!(attainable < 0.99 && attainable > 0.0),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let mut b = small_basis();
        b.set_truncation(12).unwrap();
        let pts = [[0.1, 0.05], [1.3, 0.2], [2.45, 0.01]];
        let xi: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.4).collect();
        let real = FieldRealization::new(&b, &xi).unwrap();
        let direct = evaluate_gaussian(&real, &pts);
        let table = FieldTable::new(&b, &pts).gaussian(&xi);
        for (a, c) in direct.iter().zip(&table) {
            assert_relative_eq!(a, c, max_relative = 1e-10, epsilon = 1e-12);
        }
        assert!(FieldRealization::new(&b, &xi[..3]).is_err());
    }

    #[test]
    fn spectrum_csv_has_header_and_rows() {
        let b = small_basis();
        let mut buf = Vec::new();
        b.write_spectrum_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,eigenvalue,cumulative_fraction"));
        assert_eq!(lines.count(), b.retained_modes());
    }
}
